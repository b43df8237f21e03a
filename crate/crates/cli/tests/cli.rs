use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use currier_core::glyphs::default_pairs;
use currier_core::synthetic::{synthetic_ivtff, SyntheticOptions};
use serde_json::Value;

fn currier(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_currier"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_synthetic(dir: &Path, folios: usize) -> PathBuf {
    let mut opts = SyntheticOptions::two_regime(11);
    opts.folios = folios;
    let path = dir.join("synthetic.ivtff");
    fs::write(&path, synthetic_ivtff(&opts, &default_pairs())).unwrap();
    path
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn empty_input_parses_to_zero_folios() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("empty.txt");
    fs::write(&input, "").unwrap();
    let out = dir.path().join("out");
    let o = currier(&["parse", "--input", input.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v = read_json(&out.join("parse.json"));
    assert_eq!(v["result"]["summary"]["folios"], 0);
}

#[test]
fn missing_input_fails() {
    let dir = tempfile::tempdir().unwrap();
    let o = currier(&["parse", "--input", dir.path().join("nope").to_str().unwrap()]);
    assert!(!o.status.success());
    let o = currier(&["parse"]);
    assert!(!o.status.success());
}

#[test]
fn stages_write_reports_on_synthetic_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_synthetic(dir.path(), 60);
    let out = dir.path().join("out");
    let common = [
        "--input",
        input.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--iterations",
        "20",
    ];
    for cmd in [
        vec!["ratios"],
        vec!["association"],
        vec!["boundary"],
        vec!["mixture"],
        vec!["validate"],
        vec!["simulate", "single"],
        vec!["simulate", "split"],
        vec!["cluster"],
    ] {
        let mut args = cmd.clone();
        args.extend_from_slice(&common);
        let o = currier(&args);
        assert!(o.status.success(), "{cmd:?}: {}", String::from_utf8_lossy(&o.stderr));
    }
    for f in [
        "ratios.tsv",
        "counts.tsv",
        "association.json",
        "association.tsv",
        "boundary.json",
        "transitions.tsv",
        "mixture.json",
        "validate.json",
        "cv_posteriors.tsv",
        "simulate_single.json",
        "simulate_split_iterations.tsv",
        "cluster.json",
        "k_search.tsv",
        "timings.json",
    ] {
        assert!(out.join(f).exists(), "missing {f}");
    }
    let assoc = read_json(&out.join("association.json"));
    assert_eq!(assoc["stage"], "association");
    assert_eq!(assoc["config"]["iterations"]["association_shuffles"], 20);
    assert_eq!(assoc["config"]["seed"], 42);
    assert!(assoc["input_digest"].as_str().unwrap().len() >= 16);
    let ratios = fs::read_to_string(out.join("ratios.tsv")).unwrap();
    assert_eq!(ratios.lines().count(), 61);
}

#[test]
fn unknown_subcommand_fails() {
    assert!(!currier(&["frobnicate"]).status.success());
}
