use std::path::Path;
use std::process::Command;

use proptest::prelude::*;
use spectral_bcd_cli::output::{format_stat, order_stats, summarize, SummaryRow};
use spectral_bcd_cli::region::{class, region_points, RegionConfig};
use spectral_bcd_cli::{main_with_args, GenSdpRow, QcqpRow, Rows};
use spectral_bcd::apps::qcqp::QcqpInstance;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_spectral-bcd"))
}

fn read_rows<T: serde::de::DeserializeOwned>(path: &Path) -> Vec<T> {
    csv::Reader::from_path(path).unwrap().deserialize().map(Result::unwrap).collect()
}

#[test]
fn identical_configs_give_identical_results() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let out = dir.path().join(name);
        let code = main_with_args([
            "spectral-bcd", "run", "--experiment", "qcqp", "--m", "3,5", "--seeds", "0..2", "--restarts", "2",
            "--angles", "5000", "--out", out.to_str().unwrap(),
        ]);
        assert_eq!(code, 0);
        std::fs::read(out.join("results.csv")).unwrap()
    };
    assert_eq!(run("a"), run("b"));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let status = |args: &[&str]| bin().args(args).output().unwrap().status.code().unwrap();
    assert_eq!(status(&["run", "--seeds", "", "--out", out]), 1);
    assert_eq!(status(&["run", "--experiment", "qcqp", "--m", "0", "--out", out]), 1);
    assert_eq!(status(&["run", "--experiment", "qcqp", "--delta", "-1", "--out", out]), 1);
    assert_eq!(status(&["run", "--seeds", "5..1", "--out", out]), 1);
    assert_eq!(status(&["run", "--no-such-flag"]), 1);
    assert_eq!(status(&["run", "--config", "/nonexistent/config.json"]), 1);
    assert_eq!(status(&["--help"]), 0);
    assert_eq!(status(&["--version"]), 0);
    assert_eq!(status(&["run", "--experiment", "gensdp", "--n", "3", "--seeds", "1", "--out", out]), 0);
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    let out = dir.path().join("out");
    std::fs::write(&cfg, r#"{"experiment": "gensdp", "n": [3], "seeds": "0..4"}"#).unwrap();
    let code = main_with_args([
        "spectral-bcd", "run", "--config", cfg.to_str().unwrap(), "--seeds", "7", "--out", out.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let rows: Vec<GenSdpRow> = read_rows(&out.join("results.csv"));
    assert_eq!(rows.len(), 1);
    assert_eq!((rows[0].n, rows[0].seed), (3, 7));
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seeds"], serde_json::json!([7]));
    assert_eq!(manifest["config_sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn results_round_trip_and_summary_matches_recomputation() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("g");
    let code = main_with_args([
        "spectral-bcd", "run", "--experiment", "gensdp", "--n", "3,4", "--seeds", "0..3", "--trace", "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let rows: Vec<GenSdpRow> = read_rows(&out.join("results.csv"));
    assert_eq!(rows.len(), 8);
    // Rows come back in configuration order with exact floats.
    let again = Rows::GenSdp(rows.clone());
    let summary: Vec<SummaryRow> = summarize(&again);
    let text = std::fs::read_to_string(out.join("summary.csv")).unwrap();
    let mut w = csv::Writer::from_writer(Vec::new());
    for s in &summary {
        w.serialize(s).unwrap();
    }
    assert_eq!(String::from_utf8(w.into_inner().unwrap()).unwrap(), text);
    for n in [3usize, 4] {
        let dists: Vec<f64> = rows.iter().filter(|r| r.n == n).map(|r| r.dist_to_opt).collect();
        let mut sorted = dists.clone();
        sorted.sort_by(f64::total_cmp);
        let median = 0.5 * (sorted[1] + sorted[2]);
        let line = format!("n={n},dist_to_opt,4,{},{},{}", format_stat(sorted[0]), format_stat(median), format_stat(sorted[3]));
        assert!(text.contains(&line), "{line} not in\n{text}");
    }
    // Trace lines carry the run label.
    let trace = std::fs::read_to_string(out.join("trace.jsonl")).unwrap();
    for l in trace.lines() {
        let v: serde_json::Value = serde_json::from_str(l).unwrap();
        assert!(v["run"].as_str().unwrap().starts_with("gensdp n="));
    }
}

#[test]
fn json_format_holds_the_same_rows() {
    let dir = tempfile::tempdir().unwrap();
    let csv_out = dir.path().join("c");
    let json_out = dir.path().join("j");
    for (out, fmt) in [(&csv_out, "csv"), (&json_out, "json")] {
        let code = main_with_args([
            "spectral-bcd", "run", "--experiment", "qcqp", "--m", "2", "--seeds", "4", "--restarts", "1",
            "--angles", "2000", "--format", fmt, "--out", out.to_str().unwrap(),
        ]);
        assert_eq!(code, 0);
    }
    let from_csv: Vec<QcqpRow> = read_rows(&csv_out.join("results.csv"));
    let from_json: Vec<QcqpRow> =
        serde_json::from_str(&std::fs::read_to_string(json_out.join("results.json")).unwrap()).unwrap();
    assert_eq!(from_csv, from_json);
}

#[test]
fn region_file_has_every_class() {
    let dir = tempfile::tempdir().unwrap();
    let code = main_with_args([
        "spectral-bcd", "region", "--m", "4", "--seed", "2", "--grid", "11", "--samples", "5", "--restarts", "2",
        "--out", dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let path = dir.path().join("region_m4_seed2.csv");
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.starts_with("x1,x2,class\n"));
    let count = |c: &str| text.lines().filter(|l| l.ends_with(&format!(",{c}"))).count();
    assert_eq!(count(class::FEASIBLE) + count(class::INFEASIBLE), 121);
    assert_eq!(count(class::LEVEL), 2 * 360);
    assert_eq!(count(class::RELAXATION), 5);
    assert_eq!(count(class::ORACLE), 1);
    assert!(count(class::PROJECTED) >= 1 && count(class::PROJECTED) <= 2);
    assert_eq!(count(class::OURS), 5 * count(class::PROJECTED));
}

#[test]
fn unit_circle_region() {
    let inst = QcqpInstance::from_matrices(vec![nalgebra::Matrix2::identity()], 0);
    let cfg = RegionConfig { grid: 41, angles: 2000, restarts: 1, samples: 4, ..RegionConfig::default() };
    let pts = region_points(&inst, &cfg).unwrap();
    for p in &pts {
        let r2 = p.x1 * p.x1 + p.x2 * p.x2;
        match p.class {
            "F" => assert!(r2 >= 1.0),
            "I" => assert!(r2 < 1.0),
            "L" | "R" | "G" | "P" | "S" => assert!((r2 - 1.0).abs() <= 1e-9, "{} at {r2}", p.class),
            other => panic!("unknown class {other}"),
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 128, ..ProptestConfig::default() })]

    #[test]
    fn median_lies_between_extremes(values in proptest::collection::vec(-1e6f64..1e6, 1..40)) {
        let (lo, med, hi) = order_stats(&values).unwrap();
        prop_assert!(lo <= med && med <= hi);
        let below = values.iter().filter(|&&v| v < med).count();
        let above = values.iter().filter(|&&v| v > med).count();
        prop_assert!(below <= values.len() / 2 && above <= values.len() / 2);
    }

    #[test]
    fn seed_ranges_are_inclusive(lo in 0u64..1000, len in 0u64..50) {
        let seeds = spectral_bcd_cli::parse_seeds(&format!("{lo}..{}", lo + len)).unwrap();
        prop_assert_eq!(seeds, (lo..=lo + len).collect::<Vec<_>>());
    }
}
