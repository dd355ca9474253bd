mod common;

use std::collections::HashMap;
use std::fs;
use std::path::Path;
use std::process::Command;

use common::small_scenario;
use parkauction::demand::Mix;
use parkauction::experiment::{run_matrix, run_scenario, MatrixOptions, MatrixSpec};
use parkauction::sim::Behavior;

#[test]
fn same_seed_gives_identical_event_files() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_scenario();
    cfg.behavior = Behavior::Auction;
    cfg.penetration = 0.6;
    cfg.seed = 5;
    run_scenario(&cfg, Some(&dir.path().join("a"))).unwrap();
    run_scenario(&cfg, Some(&dir.path().join("b"))).unwrap();
    for f in ["events.csv", "summary.csv", "detectors.csv", "edge_stats.csv", "population.csv"] {
        let a = fs::read(dir.path().join("a").join(f)).unwrap();
        let b = fs::read(dir.path().join("b").join(f)).unwrap();
        assert!(a == b, "{f} differs");
    }
    cfg.seed = 6;
    run_scenario(&cfg, Some(&dir.path().join("c"))).unwrap();
    assert_ne!(
        fs::read(dir.path().join("a/events.csv")).unwrap(),
        fs::read(dir.path().join("c/events.csv")).unwrap()
    );
}

#[test]
fn zero_penetration_reproduces_baseline() {
    let mut cfg = small_scenario();
    cfg.seed = 11;
    cfg.behavior = Behavior::Baseline;
    let base = run_scenario(&cfg, None).unwrap();
    for b in [Behavior::Information, Behavior::Auction] {
        cfg.behavior = b;
        cfg.penetration = 0.0;
        let r = run_scenario(&cfg, None).unwrap();
        assert_eq!(r.output.events, base.output.events, "{b}");
        // Empty participant groups hold NaN, which never compares equal.
        let (x, y) = (format!("{:?}", r.output.summary), format!("{:?}", base.output.summary));
        assert!(x == y, "{b}: summaries differ");
    }
}

fn read_rows(path: &Path) -> Vec<HashMap<String, String>> {
    let mut rd = csv::Reader::from_path(path).unwrap();
    let header = rd.headers().unwrap().clone();
    rd.records()
        .map(|r| {
            let r = r.unwrap();
            header.iter().map(String::from).zip(r.iter().map(String::from)).collect()
        })
        .collect()
}

fn num(row: &HashMap<String, String>, col: &str) -> f64 {
    row[col].parse().unwrap_or(f64::NAN)
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Recompute headline means from each run's event log and compare them with
/// the sweep summary.
#[test]
fn sweep_summary_agrees_with_event_logs() {
    let dir = tempfile::tempdir().unwrap();
    let spec = MatrixSpec {
        mixes: vec![Mix::Mix25],
        include_baseline: true,
        behaviors: vec![Behavior::Auction],
        penetrations: vec![0.4],
        seeds: vec![1, 2],
    };
    let opts = MatrixOptions {
        out: Some(dir.path().to_path_buf()),
        jobs: 2,
        keep_runs: true,
    };
    let m = run_matrix(&spec, &small_scenario(), &opts).unwrap();
    assert_eq!(m.runs.len(), 4);
    assert_eq!(m.cells.len(), 2);

    let summary = read_rows(&dir.path().join("summary.csv"));
    assert_eq!(summary.len(), 4);
    for row in &summary {
        let events = read_rows(&dir.path().join("runs").join(&row["run_id"]).join("events.csv"));
        let of = |kind: &str, col: &str, part: Option<&str>| -> Vec<f64> {
            events
                .iter()
                .filter(|e| e["kind"] == kind && part.map_or(true, |p| e["participant"] == p))
                .map(|e| num(e, col))
                .collect()
        };
        let prices = of("park", "price_eur", None);
        let routes = of("exit", "distance_m", None);
        let dists = of("park", "distance_m", None);
        assert_eq!(routes.len() as f64, num(row, "vehicles"));
        assert!((mean(&prices) - num(row, "price_eur_all_mean")).abs() < 0.006);
        assert!((mean(&routes) - num(row, "route_length_m_all_mean")).abs() < 0.06);
        assert!((mean(&dists) - num(row, "parking_distance_m_all_mean")).abs() < 0.06);
        let won = events.iter().filter(|e| e["kind"] == "reservation_won").count();
        assert_eq!(won as f64, num(row, "reservations_granted"));
        if row["behavior"] == "auction" {
            let part = of("park", "price_eur", Some("1"));
            assert!((mean(&part) - num(row, "price_eur_part_mean")).abs() < 0.006);
            assert!(won > 0);
        }
    }

    let matrix = read_rows(&dir.path().join("matrix.csv"));
    assert_eq!(matrix.len(), 2);
    let auction: Vec<&HashMap<String, String>> =
        summary.iter().filter(|r| r["behavior"] == "auction").collect();
    let cell = matrix.iter().find(|r| r["behavior"] == "auction").unwrap();
    let avg = mean(&auction.iter().map(|r| num(r, "route_length_m_all_mean")).collect::<Vec<_>>());
    assert!((avg - num(cell, "route_length_m_all_mean")).abs() < 0.06);
    let edge_rows = read_rows(&dir.path().join("edge_stats.csv"));
    assert_eq!(edge_rows.len(), 2 * 120);
    assert!(dir.path().join("network.txt").exists());
}

fn cli(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_parkauction"))
        .args(args)
        .output()
        .unwrap()
}

#[test]
fn cli_run_validate_and_oracle() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("small.toml");
    fs::write(&conf, small_scenario().to_toml()).unwrap();
    let out_dir = dir.path().join("run");

    let v = cli(&["validate", "--config", conf.to_str().unwrap()]);
    assert!(v.status.success(), "{}", String::from_utf8_lossy(&v.stderr));
    assert!(String::from_utf8_lossy(&v.stdout).starts_with("ok: 120 edges, 1800 spaces"));

    let r = cli(&[
        "run",
        "--config",
        conf.to_str().unwrap(),
        "--behavior",
        "auction",
        "--penetration",
        "0.5",
        "--mix",
        "MIX50",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let text = String::from_utf8_lossy(&r.stdout);
    assert!(text.contains("run MIX50-auction-p050-s0"), "{text}");
    for f in ["events.csv", "summary.csv", "detectors.csv", "edge_stats.csv", "network.txt", "config.toml"] {
        assert!(out_dir.join(f).exists(), "{f}");
    }

    let o = cli(&["oracle", "--instances", "200", "--seed", "3"]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).contains("200 instances, 0 mismatches"));

    fs::write(&conf, "seed = 1\n[demand]\ndrivers = -3\n").unwrap();
    let bad = cli(&["validate", "--config", conf.to_str().unwrap()]);
    assert!(!bad.status.success());
    assert!(String::from_utf8_lossy(&bad.stderr).starts_with("error:"));
}
