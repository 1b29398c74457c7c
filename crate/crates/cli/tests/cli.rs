mod common;

use common::*;
use lasso_hmm::data::PenaltyRecord;
use lasso_hmm::simulation::{generate_panel, PanelScenario};

#[test]
fn dry_run_echoes_both_presets() {
    let desk = String::from_utf8(run_ok(&["simulate", "--dry-run"]).stdout).unwrap();
    let desk: toml::Table = desk.parse().unwrap();
    let study = desk["study"].as_table().unwrap();
    assert_eq!(study["t_train"].as_integer(), Some(2550));
    assert_eq!(study["t_test"].as_integer(), Some(100));
    assert_eq!(study["n_covariates"].as_integer(), Some(25));
    assert_eq!(study["n_runs"].as_integer(), Some(25));
    assert_eq!(desk["grid"]["len"].as_integer(), Some(20));

    let paper = String::from_utf8(run_ok(&["simulate", "--dry-run", "--paper-scale"]).stdout).unwrap();
    let paper: toml::Table = paper.parse().unwrap();
    let study = paper["study"].as_table().unwrap();
    let t = study["t_train"].as_integer().unwrap() + study["t_test"].as_integer().unwrap();
    assert_eq!(t, 5100);
    assert_eq!(study["n_covariates"].as_integer(), Some(50));
    assert_eq!(study["true_slopes"].as_array().unwrap().len(), 50);
    assert_eq!(study["n_runs"].as_integer(), Some(100));
    assert_eq!(paper["grid"]["len"].as_integer(), Some(50));
}

#[test]
fn flags_override_config() {
    let out = run_ok(&["simulate", "--dry-run", "--grid-len", "7", "--states", "3", "--penalty-mode", "literal", "--seed", "5"]);
    let t: toml::Table = String::from_utf8(out.stdout).unwrap().parse().unwrap();
    assert_eq!(t["grid"]["len"].as_integer(), Some(7));
    assert_eq!(t["model"]["states"].as_integer(), Some(3));
    assert_eq!(t["penalty"]["mode"].as_str(), Some("literal"));
    assert_eq!(t["run"]["seed"].as_integer(), Some(5));
}

#[test]
fn misspelled_key_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "[grid]\nlamda = [1.0, 0.1]\n").unwrap();
    let out = run(&["simulate", "--dry-run", "--config", path_str(&cfg)]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("lamda") && err.contains("did you mean \"lambda\""), "{err}");
}

#[test]
fn missing_out_is_a_validation_error() {
    let out = run(&["simulate"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_data_file_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["fit", "--data", "/nonexistent/kicks.csv", "--out", path_str(dir.path())]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn fit_names_the_planted_goalkeeper_and_scores() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = PanelScenario::default();
    let recs = generate_panel(&cfg, 0).unwrap();
    let data = dir.path().join("kicks.csv");
    write_records(&data, &recs);
    let fit_dir = dir.path().join("fit");
    run_ok(&["fit", "--data", path_str(&data), "--out", path_str(&fit_dir)]);

    for f in [
        "filter.csv",
        "descriptives.csv",
        "catalog.csv",
        "coefficient_path.csv",
        "relaxed_coefficient_path.csv",
        "criteria_path.csv",
        "selected_models.csv",
        "tpm.csv",
        "decoding_relaxed-bic.csv",
        "model.json",
        "manifest.toml",
    ] {
        assert!(fit_dir.join(f).exists(), "{f}");
    }

    let names = column(&fit_dir.join("selected_models.csv"), "covariate");
    let est = column(&fit_dir.join("selected_models.csv"), "relaxed-BIC");
    let j = names.iter().position(|n| n == "G001 (goalkeeper)").unwrap();
    let v: f64 = est[j].parse().unwrap();
    assert!(v < 0.0, "G001 estimate {v}");
    let labels = column(&fit_dir.join("tpm.csv"), "label");
    assert!(labels.iter().any(|l| l == "hot") && labels.iter().any(|l| l == "cold"));

    // score the last five kicks of every player
    let test = dir.path().join("test.csv");
    let tail: Vec<PenaltyRecord> = recs
        .chunks(cfg.attempts_per_player)
        .flat_map(|c| c[c.len() - 5..].to_vec())
        .collect();
    write_records(&test, &tail);
    let score_dir = dir.path().join("score");
    run_ok(&["score", "--fit-dir", path_str(&fit_dir), "--test", path_str(&test), "--out", path_str(&score_dir)]);
    let p = column(&score_dir.join("forecasts.csv"), "predicted");
    assert_eq!(p.len(), tail.len());
    assert!(p.iter().map(|v| v.parse::<f64>().unwrap()).all(|v| v > 0.0 && v < 1.0));

    // empty test file
    let empty = dir.path().join("empty.csv");
    write_records(&empty, &[]);
    let out = run(&["score", "--fit-dir", path_str(&fit_dir), "--test", path_str(&empty), "--out", path_str(&score_dir)]);
    assert_eq!(out.status.code(), Some(2));

    // goalkeeper the fit never saw
    let stranger = dir.path().join("stranger.csv");
    write_records(
        &stranger,
        &[PenaltyRecord {
            goalkeeper_id: "G999".into(),
            ..tail[0].clone()
        }],
    );
    let out = run(&["score", "--fit-dir", path_str(&fit_dir), "--test", path_str(&stranger), "--out", path_str(&score_dir)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("schema mismatch"));

    // unknown scheme
    let out = run(&["score", "--fit-dir", path_str(&fit_dir), "--test", path_str(&test), "--scheme", "ridge", "--out", path_str(&score_dir)]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn brier_score_near_bernoulli_floor_for_a_well_specified_model() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = PanelScenario {
        tpm: vec![vec![1.0]],
        intercepts: vec![1.2],
        n_players: 60,
        ..PanelScenario::default()
    };
    let recs = generate_panel(&cfg, 2).unwrap();
    let data = dir.path().join("kicks.csv");
    write_records(&data, &recs);
    let fit_dir = dir.path().join("fit");
    run_ok(&["fit", "--data", path_str(&data), "--out", path_str(&fit_dir), "--states", "1", "--grid-len", "8"]);

    let tail: Vec<PenaltyRecord> = recs
        .chunks(cfg.attempts_per_player)
        .flat_map(|c| c[c.len() - 10..].to_vec())
        .collect();
    let test = dir.path().join("test.csv");
    write_records(&test, &tail);
    let score_dir = dir.path().join("score");
    run_ok(&["score", "--fit-dir", path_str(&fit_dir), "--test", path_str(&test), "--out", path_str(&score_dir)]);

    let pi = |r: &PenaltyRecord| {
        let eta = cfg.intercepts[0] + if r.goalkeeper_id == cfg.planted_goalkeeper_id() { cfg.planted_effect } else { 0.0 };
        1.0 / (1.0 + (-eta).exp())
    };
    let floor = tail.iter().map(|r| pi(r) * (1.0 - pi(r))).sum::<f64>() / tail.len() as f64;
    let brier: f64 = column(&score_dir.join("score_summary.csv"), "brier")[0].parse().unwrap();
    assert!((brier - floor).abs() < 0.03, "brier {brier} floor {floor}");
}
