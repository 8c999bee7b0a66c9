//! End-to-end runs of the `gvp` binary.

use std::path::Path;
use std::process::{Command, Output};

fn gvp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gvp"))
        .args(args)
        .output()
        .expect("run gvp")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn write(path: &Path, text: &str) {
    std::fs::write(path, text).unwrap();
}

const SMALL_EVALUATE: &str = r#"
name = "small"
t_len = 260
n0 = 200
refit_every = 30
m_predictive = 30
engine = "vb"
update_rules = ["LS", "CRPS"]
eval_rules = ["LS", "CRPS"]
[vb]
iterations = 200
"#;

#[test]
fn simulated_file_loads_bitwise() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sim");
    let o = gvp(&[
        "--out",
        out.to_str().unwrap(),
        "--seed",
        "4",
        "simulate",
        "--dgp",
        "dyn-regression",
        "--t",
        "200",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let path = out.join("series.csv");
    let loaded = gvp_core::io::load_series(&path, &Default::default()).unwrap();
    assert_eq!(loaded.y.len(), 201);
    let rewritten = dir.path().join("again.csv");
    gvp_core::io::write_series(&rewritten, &loaded).unwrap();
    assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&rewritten).unwrap());
    assert!(out.join("manifest.json").exists());
}

#[test]
fn bad_config_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    write(&cfg, "n0 = = 3\n");
    let o = gvp(&["--config", cfg.to_str().unwrap(), "evaluate"]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 1"));

    write(&cfg, "t_len = 100\nn0 = 500\n");
    assert_eq!(code(&gvp(&["--config", cfg.to_str().unwrap(), "evaluate"])), 1);
    assert_eq!(code(&gvp(&["replicate", "no-such-target"])), 1);
    assert_eq!(code(&gvp(&["--engine", "gibbs", "simulate"])), 1);
}

#[test]
fn small_evaluation_writes_reports() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("small.toml");
    write(&cfg, SMALL_EVALUATE);
    let out = dir.path().join("eval");
    let o = gvp(&["--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "evaluate"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));

    let matrix = std::fs::read_to_string(out.join("small_vb_matrix.csv")).unwrap();
    let lines: Vec<&str> = matrix.lines().collect();
    assert_eq!(lines[0], "update_rule,LS,CRPS");
    assert_eq!(lines.len(), 3);
    for name in ["small_vb_coherence.json", "small_scores_log.csv", "small_manifest.json"] {
        assert!(out.join(name).exists(), "{name}");
    }
    let log = gvp_core::io::read_score_log(&out.join("small_scores_log.csv")).unwrap();
    assert_eq!(log.len(), 2 * 2 * 60);
}

#[test]
fn preset_shape_through_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("lstar.toml");
    write(
        &cfg,
        "preset = \"lstar-mixture\"\nt_len = 230\nn0 = 200\nrefit_every = 30\nm_predictive = 20\n\
         [model]\nclass = \"mixture\"\nk = 2\n[vb]\niterations = 100\n",
    );
    let out = dir.path().join("out");
    let o = gvp(&["--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "evaluate"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let matrix = std::fs::read_to_string(out.join("lstar-mixture_vb_matrix.csv")).unwrap();
    let lines: Vec<&str> = matrix.lines().collect();
    assert_eq!(lines.len(), 7);
    assert_eq!(lines[0], "update_rule,LS,CLS10,CLS20,CLS80,CLS90,MSIS");
}

#[test]
fn failed_cells_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("mcmc.toml");
    // A huge proposal scale leaves the chain stuck, which fails the
    // burn-in acceptance check in every cell.
    write(
        &cfg,
        &format!("{SMALL_EVALUATE}\n[mcmc]\nburn_in = 40\nretained = 40\ninitial_scale = 1e8\n")
            .replace("engine = \"vb\"", "engine = \"mcmc\""),
    );
    let out = dir.path().join("out");
    let o = gvp(&["--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "evaluate"]);
    assert_eq!(code(&o), 2, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("small_mcmc_matrix.csv").exists());
}

#[test]
fn fit_then_predict() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("fit.toml");
    write(&cfg, "t_len = 300\nn0 = 200\n[vb]\niterations = 300\n");
    let out = dir.path().join("out");
    let (c, o) = (cfg.to_str().unwrap(), out.to_str().unwrap());
    let f = gvp(&["--config", c, "--out", o, "--engine", "vb", "fit", "--rule", "CLS10", "--n", "250"]);
    assert_eq!(code(&f), 0, "{}", String::from_utf8_lossy(&f.stderr));
    let fit = out.join("fit.json");
    let p = gvp(&["--config", c, "--out", o, "predict", "--fit", fit.to_str().unwrap(), "--m", "50"]);
    assert_eq!(code(&p), 0, "{}", String::from_utf8_lossy(&p.stderr));
    let pred: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("predictive.json")).unwrap()).unwrap();
    assert!(pred["mean"].as_f64().unwrap().is_finite());
}

#[test]
fn pipeline_interval_is_ordered() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("levels.csv");
    let mut text = String::from("date,level\n");
    let mut x = 10.0f64;
    for i in 0..150 {
        x += ((i * 7919) % 13) as f64 / 6.0 - 1.0;
        text.push_str(&format!("{i},{x}\n"));
    }
    write(&data, &text);
    let cfg = dir.path().join("p.toml");
    write(&cfg, "[pipeline]\ndraws = 500\n[pipeline.vb]\niterations = 300\n");
    let out = dir.path().join("out");
    let o = gvp(&[
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "pipeline",
        "--data",
        data.to_str().unwrap(),
        "--column",
        "level",
        "--holdout",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("interval.json")).unwrap()).unwrap();
    assert!(v["lower"].as_f64().unwrap() < v["upper"].as_f64().unwrap());
    assert!(v["holdout"]["y"].is_number());
}
