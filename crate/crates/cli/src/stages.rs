use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;
use std::time::Instant;

use anyhow::{bail, Context as _, Result};
use currier_core::association::association_test;
use currier_core::bbmix::{confident_assignments, select_k, FitOptions};
use currier_core::boundary::{boundary_report, measure_transitions, write_transitions_tsv};
use currier_core::classify::{cross_validate, permutation_baseline, spatial_split, CvOptions, SplitMode};
use currier_core::cluster::{
    clustering_permutation_test, k_search, leave_one_pair_out, pc1_median_split, prepare_features, run_algorithm,
    single_pair_ari, Algorithm,
};
use currier_core::corpus::{parse_ivtff_with, ParseOptions};
use currier_core::glyphs::{default_pairs, parse_pair_config, ratio_matrix};
use currier_core::simulate::{run_single_markov, run_split_markov, SimOptions, SimulationSummary};
use currier_core::stats::{pca, NullDistribution};
use currier_core::{Corpus, PairSpec, RatioMatrix};
use serde::Serialize;

use crate::config::RunConfig;

pub struct Context {
    pub config: RunConfig,
    pub corpus: Corpus,
    pub pairs: Vec<PairSpec>,
    /// Every folio, labeled or not, in manuscript order.
    pub matrix: RatioMatrix,
    /// Labeled folios only.
    pub labeled: RatioMatrix,
    pub parse_warnings: usize,
    timings: BTreeMap<String, f64>,
}

#[derive(Serialize)]
struct Report<'a, T: Serialize> {
    tool: &'static str,
    version: &'static str,
    stage: &'a str,
    input_digest: &'a str,
    config: &'a RunConfig,
    result: T,
}

fn num(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.6}")
    } else {
        "NA".into()
    }
}

fn opt(x: Option<f64>) -> String {
    x.map_or("NA".into(), num)
}

/// Serialized name of a unit enum variant.
fn tag(x: impl Serialize) -> String {
    match serde_json::to_value(x) {
        Ok(serde_json::Value::String(s)) => s,
        _ => "NA".into(),
    }
}

fn tsv(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut s = header.join("\t");
    s.push('\n');
    for r in rows {
        s.push_str(&r.join("\t"));
        s.push('\n');
    }
    s
}

#[derive(Serialize)]
struct NullSummary {
    observed: f64,
    mean: f64,
    p95: f64,
    percentile: f64,
    p_value: f64,
    iterations: usize,
}

impl From<&NullDistribution> for NullSummary {
    fn from(d: &NullDistribution) -> Self {
        Self {
            observed: d.observed,
            mean: d.mean(),
            p95: d.quantile(0.95),
            percentile: d.percentile(),
            p_value: d.p_value(),
            iterations: d.samples.len(),
        }
    }
}

impl Context {
    pub fn load(config: RunConfig) -> Result<Self> {
        let bytes = fs::read(&config.input).with_context(|| format!("cannot read input {}", config.input.display()))?;
        let text = String::from_utf8(bytes).context("input is not UTF-8")?;
        let outcome = parse_ivtff_with(&text, &ParseOptions::default())?;
        let mut corpus = outcome.corpus;
        let mut parse_warnings = outcome.warnings.len();
        if let Some(meta) = &config.metadata {
            let file = fs::File::open(meta).with_context(|| format!("cannot read metadata {}", meta.display()))?;
            parse_warnings += corpus.apply_metadata(file)?.len();
        }
        let pairs = match &config.pairs {
            Some(p) => parse_pair_config(
                &fs::read_to_string(p).with_context(|| format!("cannot read pair file {}", p.display()))?,
            )?,
            None => default_pairs(),
        };
        let matrix = ratio_matrix(&corpus, &pairs, config.min_count);
        let labeled = ratio_matrix(&corpus.filter_labeled(), &pairs, config.min_count);
        fs::create_dir_all(&config.out).with_context(|| format!("cannot create {}", config.out.display()))?;
        Ok(Self {
            config,
            corpus,
            pairs,
            matrix,
            labeled,
            parse_warnings,
            timings: BTreeMap::new(),
        })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.config.out.join(name)
    }

    fn write(&self, name: &str, content: impl AsRef<[u8]>) -> Result<()> {
        let p = self.path(name);
        fs::write(&p, content).with_context(|| format!("cannot write {}", p.display()))
    }

    fn report<T: Serialize>(&self, stage: &str, result: T) -> Result<()> {
        let r = Report {
            tool: "currier",
            version: env!("CARGO_PKG_VERSION"),
            stage,
            input_digest: &self.corpus.source_digest,
            config: &self.config,
            result,
        };
        let mut json = serde_json::to_string_pretty(&r)?;
        json.push('\n');
        self.write(&format!("{stage}.json"), json)
    }

    /// Runs one stage and records its wall-clock time in `timings.json`,
    /// the only output that differs between identical runs.
    pub fn timed(&mut self, stage: &str, f: impl FnOnce(&Self) -> Result<()>) -> Result<()> {
        let start = Instant::now();
        log::info!("stage {stage}");
        let outcome = f(self);
        self.timings.insert(stage.to_string(), start.elapsed().as_secs_f64());
        let mut json = serde_json::to_string_pretty(&self.timings)?;
        json.push('\n');
        self.write("timings.json", json)?;
        outcome.with_context(|| format!("stage {stage} failed"))
    }

    fn reference(&self) -> Vec<usize> {
        self.labeled.labels().iter().map(|l| l.class_index()).collect()
    }

    fn need_labels(&self) -> Result<()> {
        let labels = self.labeled.labels();
        let a = labels.iter().filter(|l| l.class_index() == 0).count();
        if a == 0 || a == labels.len() {
            bail!("this stage needs folios labeled A and B ({} labeled, {a} A)", labels.len());
        }
        Ok(())
    }
}

pub fn parse(ctx: &Context) -> Result<()> {
    #[derive(Serialize)]
    struct ParseResult {
        summary: currier_core::corpus::CorpusSummary,
        warnings: usize,
        pairs: Vec<PairSpec>,
    }
    ctx.report(
        "parse",
        ParseResult {
            summary: ctx.corpus.summary(),
            warnings: ctx.parse_warnings,
            pairs: ctx.pairs.clone(),
        },
    )
}

pub fn ratios(ctx: &Context) -> Result<()> {
    let mut r = Vec::new();
    ctx.matrix.write_ratios_tsv(&mut r)?;
    ctx.write("ratios.tsv", r)?;
    let mut c = Vec::new();
    ctx.matrix.write_counts_tsv(&mut c)?;
    ctx.write("counts.tsv", c)
}

pub fn association(ctx: &Context) -> Result<()> {
    let rep = association_test(
        &ctx.labeled,
        ctx.config.iterations.association_shuffles,
        ctx.config.seed_for("association"),
    )?;
    let rows = rep.pairs.iter().map(|p| {
        let [[aa, ab], [ba, bb]] = p.table.cells;
        vec![
            p.pair.clone(),
            num(p.v),
            num(p.shuffle_mean),
            num(p.shuffle_p95),
            num(p.percentile),
            num(p.p_value),
            tag(p.regime),
            aa.to_string(),
            ab.to_string(),
            ba.to_string(),
            bb.to_string(),
        ]
    });
    let mut text = tsv(
        &["pair", "v", "shuffle_mean", "shuffle_p95", "percentile", "p_value", "regime", "a_in_A", "b_in_A", "a_in_B", "b_in_B"],
        rows,
    );
    let _ = writeln!(
        text,
        "MEAN\t{}\t{}\t{}\t{}\t{}\tNA\tNA\tNA\tNA\tNA",
        num(rep.mean_v),
        num(rep.shuffle_mean),
        num(rep.shuffle_p95),
        num(rep.percentile),
        num(rep.p_value)
    );
    ctx.write("association.tsv", text)?;
    ctx.report("association", rep)
}

pub fn boundary(ctx: &Context) -> Result<()> {
    let records = measure_transitions(&ctx.matrix);
    let mut t = Vec::new();
    write_transitions_tsv(&records, &mut t)?;
    ctx.write("transitions.tsv", t)?;
    let rep = boundary_report(&records, ctx.config.iterations.boundary_resamples, ctx.config.seed_for("boundary"))?;
    let rows = rep.types.iter().map(|t| {
        vec![t.kind.as_str().to_string(), t.count.to_string(), opt(t.mean_jump), opt(t.p_value)]
    });
    ctx.write("boundary.tsv", tsv(&["type", "count", "mean_jump", "p_vs_same"], rows))?;
    ctx.report("boundary", rep)
}

pub fn mixture(ctx: &Context) -> Result<()> {
    ctx.need_labels()?;
    let panel = ctx.labeled.count_panel();
    let reference = ctx.reference();
    let opts = FitOptions {
        restarts: ctx.config.iterations.mixture_restarts,
        seed: ctx.config.seed_for("mixture"),
        ..FitOptions::default()
    };
    let sel = select_k(&panel, 1..=6, &opts, Some(&reference));
    let rows = sel.rows.iter().map(|r| {
        vec![
            r.k.to_string(),
            opt(r.log_likelihood),
            r.n_params.to_string(),
            opt(r.bic),
            opt(r.ari),
            r.confident.map_or("NA".into(), |c| c.to_string()),
        ]
    });
    ctx.write("mixture.tsv", tsv(&["k", "log_likelihood", "n_params", "bic", "ari", "confident_0.9"], rows))?;

    let two = sel.fits.iter().find(|f| f.k == 2);
    if let Some(fit) = two {
        let conf = confident_assignments(fit, 0.9);
        let rows = ctx.labeled.rows.iter().enumerate().map(|(i, r)| {
            vec![
                r.folio_id.clone(),
                r.currier.to_string(),
                conf.assignments[i].to_string(),
                num(conf.confidence[i]),
            ]
        });
        ctx.write("mixture_k2_assignments.tsv", tsv(&["folio", "currier", "component", "confidence"], rows))?;
    }
    let mut by_bic: Vec<(usize, f64)> = sel.rows.iter().filter_map(|r| r.bic.map(|b| (r.k, b))).collect();
    by_bic.sort_by(|a, b| a.1.total_cmp(&b.1));

    #[derive(Serialize)]
    struct MixtureResult<'a> {
        rows: &'a [currier_core::bbmix::SelectionRow],
        best_k: Option<usize>,
        bic_order: Vec<usize>,
        k2: Option<&'a currier_core::MixtureFit>,
    }
    ctx.report(
        "mixture",
        MixtureResult {
            rows: &sel.rows,
            best_k: sel.best_k,
            bic_order: by_bic.iter().map(|(k, _)| *k).collect(),
            k2: two,
        },
    )
}

pub fn validate(ctx: &Context) -> Result<()> {
    ctx.need_labels()?;
    let its = &ctx.config.iterations;
    let seed = ctx.config.seed_for("validate");
    let panel = ctx.labeled.count_panel();
    let labels = ctx.labeled.labels();
    let mut cv = cross_validate(
        &panel,
        &labels,
        &CvOptions {
            folds: its.cv_folds,
            repeats: its.cv_repeats,
            seed,
        },
    )?;
    let baseline = permutation_baseline(
        &panel,
        &labels,
        cv.accuracy,
        its.cv_permutations,
        its.cv_permutation_repeats,
        its.cv_folds,
        seed,
    )?;
    cv.permutation_p = Some(baseline.p_value);
    let spatial = [SplitMode::Forward, SplitMode::Backward, SplitMode::EvenOdd]
        .into_iter()
        .map(|m| spatial_split(&panel, &labels, m))
        .collect::<currier_core::Result<Vec<_>>>()?;

    let posteriors = cv.predictions.iter().map(|p| {
        vec![
            ctx.labeled.rows[p.index].folio_id.clone(),
            p.truth.to_string(),
            p.predicted.to_string(),
            num(p.posterior_a),
        ]
    });
    ctx.write("cv_posteriors.tsv", tsv(&["folio", "truth", "predicted", "posterior_a"], posteriors))?;
    let rows = std::iter::once(&cv).chain(&spatial).map(|r| {
        vec![
            r.split.clone(),
            num(r.accuracy),
            num(r.ari),
            opt(r.r2),
            opt(r.permutation_p),
            tag(r.training_condition),
            r.training_class_counts[0].to_string(),
            r.training_class_counts[1].to_string(),
        ]
    });
    ctx.write(
        "validate.tsv",
        tsv(&["split", "accuracy", "ari", "ratio_r2", "permutation_p", "training", "train_a", "train_b"], rows),
    )?;

    #[derive(Serialize)]
    struct ValidateResult {
        cv: currier_core::ValidationReport,
        spatial: Vec<currier_core::ValidationReport>,
        permutation: NullSummary,
        permutation_repeats: usize,
    }
    ctx.report(
        "validate",
        ValidateResult {
            permutation: NullSummary::from(&baseline.null),
            permutation_repeats: baseline.repeats_per_iteration,
            cv,
            spatial,
        },
    )
}

fn write_simulation(ctx: &Context, stage: &str, s: SimulationSummary) -> Result<()> {
    let rows = s.variances.iter().map(|v| {
        vec![v.pair.clone(), num(v.real), num(v.simulated_mean), num(v.simulated_max), num(v.percentile)]
    });
    ctx.write(
        &format!("{stage}.tsv"),
        tsv(&["pair", "real_variance", "simulated_mean", "simulated_max", "percentile"], rows),
    )?;
    let mut it = Vec::new();
    s.write_iterations_tsv(&mut it)?;
    ctx.write(&format!("{stage}_iterations.tsv"), it)?;
    ctx.report(stage, s)
}

pub fn simulate(ctx: &Context, split: bool) -> Result<()> {
    let stage = if split { "simulate_split" } else { "simulate_single" };
    let opts = SimOptions {
        iterations: ctx.config.iterations.markov_iterations,
        seed: ctx.config.seed_for(stage),
        min_count: ctx.config.min_count,
    };
    let s = if split {
        run_split_markov(&ctx.corpus, &ctx.pairs, &opts)?
    } else {
        run_single_markov(&ctx.corpus, &ctx.pairs, &opts)?
    };
    write_simulation(ctx, stage, s)
}

pub fn cluster(ctx: &Context) -> Result<()> {
    ctx.need_labels()?;
    let seed = ctx.config.seed_for("cluster");
    let reference = ctx.reference();
    let features = prepare_features(&ctx.labeled)?;
    let points = &features.data;

    let results = Algorithm::ALL
        .iter()
        .map(|&a| Ok(run_algorithm(a, points, 2, seed)?.with_reference(&reference)?))
        .collect::<currier_core::Result<Vec<_>>>()?;
    let kmeans = &results[0];
    let perm = clustering_permutation_test(&kmeans.labels, &reference, ctx.config.iterations.cluster_permutations, seed)?;
    let pc = pca(points)?;
    let split = pc1_median_split(points, &reference)?;
    let loo = leave_one_pair_out(&ctx.labeled, &reference, seed)?;
    let single = single_pair_ari(&ctx.labeled, &reference, seed)?;
    let search = k_search(points, 2..=8, seed)?;

    let rows = results.iter().map(|r| {
        vec![
            tag(r.algorithm),
            r.k.to_string(),
            opt(r.ari_vs_reference),
            opt(r.silhouette),
            opt(r.inertia),
            opt(r.log_likelihood),
            r.degenerate.to_string(),
        ]
    });
    ctx.write(
        "cluster.tsv",
        tsv(&["algorithm", "k", "ari", "silhouette", "inertia", "log_likelihood", "degenerate"], rows),
    )?;
    let rows = search.iter().map(|r| {
        let mut v = vec![r.k.to_string(), num(r.gmm_log_likelihood), num(r.gmm_bic), num(r.gmm_aic)];
        v.extend(r.silhouette.iter().map(|s| opt(*s)));
        v
    });
    ctx.write(
        "k_search.tsv",
        tsv(
            &["k", "gmm_ll", "gmm_bic", "gmm_aic", "sil_kmeans", "sil_gmm", "sil_hierarchical", "sil_spectral"],
            rows,
        ),
    )?;
    let rows = loo.rows.iter().zip(&single).map(|(l, s)| {
        vec![l.pair.clone(), num(l.ari), opt(l.delta), num(s.ari)]
    });
    ctx.write("pair_diagnostics.tsv", tsv(&["pair", "ari_without", "delta", "ari_alone"], rows))?;
    let kept: Vec<String> = pc.kept_columns.iter().map(|&j| features.columns[j].clone()).collect();
    let mut header = vec!["component".to_string(), "explained_fraction".into()];
    header.extend(kept.iter().cloned());
    let rows = pc.components.iter().enumerate().map(|(c, load)| {
        let mut v = vec![format!("PC{}", c + 1), num(pc.explained_fraction[c])];
        v.extend(load.iter().map(|x| num(*x)));
        v
    });
    ctx.write("pca_loadings.tsv", tsv(&header.iter().map(String::as_str).collect::<Vec<_>>(), rows))?;
    let rows = pc.scores.iter().enumerate().map(|(i, s)| {
        let mut v = vec![ctx.labeled.rows[i].folio_id.clone(), ctx.labeled.rows[i].currier.to_string()];
        v.extend(s.iter().map(|x| num(*x)));
        v
    });
    let mut header = vec!["folio".to_string(), "currier".into()];
    header.extend((1..=pc.components.len()).map(|c| format!("PC{c}")));
    ctx.write("pca_scores.tsv", tsv(&header.iter().map(String::as_str).collect::<Vec<_>>(), rows))?;

    #[derive(Serialize)]
    struct ClusterReport {
        columns: Vec<String>,
        dropped: Vec<String>,
        imputed_cells: usize,
        results: Vec<currier_core::ClusterResult>,
        kmeans_permutation: NullSummary,
        pc1_explained_fraction: f64,
        pc1_split_ari: f64,
        pc1_split_degenerate: bool,
        leave_one_out: currier_core::cluster::LeaveOneOut,
        single_pair: Vec<currier_core::cluster::PairEffect>,
        k_search: Vec<currier_core::cluster::KSearchRow>,
    }
    ctx.report(
        "cluster",
        ClusterReport {
            imputed_cells: features.imputed.iter().flatten().filter(|&&b| b).count(),
            columns: features.columns.clone(),
            dropped: features.dropped.clone(),
            results,
            kmeans_permutation: NullSummary::from(&perm),
            pc1_explained_fraction: split.explained_fraction,
            pc1_split_ari: split.ari,
            pc1_split_degenerate: split.degenerate,
            leave_one_out: loo,
            single_pair: single,
            k_search: search,
        },
    )
}
