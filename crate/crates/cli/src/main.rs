mod config;
mod stages;

use std::path::PathBuf;

use anyhow::{Context as _, Result};
use clap::{Parser, Subcommand, ValueEnum};

use config::RunConfig;
use stages::Context;

#[derive(Parser, Debug)]
#[command(name = "currier", version, about = "Character-pair ratio analysis of IVTFF transcriptions")]
struct Cli {
    /// IVTFF transcription file.
    #[arg(long, global = true)]
    input: Option<PathBuf>,
    /// TSV with folio, quire and currier columns overriding page variables.
    #[arg(long, global = true)]
    metadata: Option<PathBuf>,
    /// TOML pair configuration; defaults to the eleven built-in pairs.
    #[arg(long, global = true)]
    pairs: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = currier_core::glyphs::DEFAULT_MIN_COUNT)]
    min_count: u64,
    #[arg(long, global = true, default_value_t = 42)]
    seed: u64,
    /// Overrides every resampling count (shuffles, resamples, Markov runs,
    /// permutations).
    #[arg(long, global = true)]
    iterations: Option<usize>,
    #[arg(long, global = true, default_value = "currier-out")]
    out: PathBuf,
    /// Resampling counts at 10% of the defaults.
    #[arg(long, global = true)]
    fast: bool,
    /// Worker threads; defaults to all cores.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Corpus summary.
    Parse,
    /// Folio × pair ratio and count tables.
    Ratios,
    /// Per-pair Cramér's V against label shuffles.
    Association,
    /// Ratio jumps by transition type.
    Boundary,
    /// Beta-Binomial mixture model selection.
    Mixture,
    /// Cross-validated and spatial-split classification.
    Validate,
    /// Markov null models.
    Simulate {
        #[arg(value_enum)]
        model: Model,
    },
    /// Clustering suite on the ratio matrix.
    Cluster,
    /// Every stage in order.
    All,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Model {
    Single,
    Split,
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let Some(input) = cli.input else {
        anyhow::bail!("--input is required");
    };
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("cannot configure worker threads")?;
    }
    let config = RunConfig::new(
        input,
        cli.metadata,
        cli.pairs,
        cli.min_count,
        cli.seed,
        cli.iterations,
        cli.fast,
        cli.threads,
        cli.out,
    );
    let mut ctx = Context::load(config)?;
    match cli.command {
        Command::Parse => ctx.timed("parse", stages::parse),
        Command::Ratios => ctx.timed("ratios", stages::ratios),
        Command::Association => ctx.timed("association", stages::association),
        Command::Boundary => ctx.timed("boundary", stages::boundary),
        Command::Mixture => ctx.timed("mixture", stages::mixture),
        Command::Validate => ctx.timed("validate", stages::validate),
        Command::Simulate { model: Model::Single } => ctx.timed("simulate_single", |c| stages::simulate(c, false)),
        Command::Simulate { model: Model::Split } => ctx.timed("simulate_split", |c| stages::simulate(c, true)),
        Command::Cluster => ctx.timed("cluster", stages::cluster),
        Command::All => {
            ctx.timed("parse", stages::parse)?;
            ctx.timed("ratios", stages::ratios)?;
            ctx.timed("association", stages::association)?;
            ctx.timed("boundary", stages::boundary)?;
            ctx.timed("mixture", stages::mixture)?;
            ctx.timed("validate", stages::validate)?;
            ctx.timed("simulate_single", |c| stages::simulate(c, false))?;
            ctx.timed("simulate_split", |c| stages::simulate(c, true))?;
            ctx.timed("cluster", stages::cluster)
        }
    }
}
