//! End-to-end runs of the `fglab` binary: file formats, config loading and
//! cross-process reproducibility.

use std::path::{Path, PathBuf};
use std::process::Command;

fn fglab() -> Command {
    Command::new(env!("CARGO_BIN_EXE_fglab"))
}

fn tmp_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("fglab-test-{tag}-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn run_ok(cmd: &mut Command) -> String {
    let out = cmd.output().expect("binary runs");
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn gen_then_oracle_round_trip() {
    let dir = tmp_dir("roundtrip");
    let graph_path = dir.join("g.json");
    run_ok(
        fglab()
            .args(["gen", "--model", "ksat", "--k", "3", "--beta", "0.5"])
            .args(["--kind", "poisson", "--n", "8", "--d", "1.5", "--seed", "5"])
            .arg("--out-file")
            .arg(&graph_path),
    );

    let graph = fglab_core::io::load_graph(&graph_path).unwrap();
    assert_eq!(graph.num_vars(), 8);

    let logz_json = run_ok(
        fglab()
            .args(["oracle", "--query", "logz"])
            .arg("--graph")
            .arg(&graph_path),
    );
    let parsed: serde_json::Value = serde_json::from_str(&logz_json).unwrap();
    let expect = fglab_core::log_partition(&graph, fglab_core::EnumBudget::default()).unwrap();
    assert!((parsed["log_z"].as_f64().unwrap() - expect).abs() < 1e-12);

    let marg_json = run_ok(
        fglab()
            .args(["oracle", "--query", "marginal", "--vars", "0,2"])
            .arg("--graph")
            .arg(&graph_path),
    );
    let table = fglab_core::io::marginal_from_json(&marg_json).unwrap();
    assert!((table.sum() - 1.0).abs() < 1e-12);

    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn config_file_drives_an_experiment() {
    let dir = tmp_dir("config");
    let config_path = dir.join("config.json");
    std::fs::write(
        &config_path,
        r#"{
            "model": {"preset": "potts", "q": 2, "beta": 0.7},
            "model_kind": "poisson",
            "n_grid": [5, 6],
            "trials_per_n": 4,
            "d": 1.2,
            "master_seed": 9
        }"#,
    )
    .unwrap();
    let out_dir = dir.join("out");
    run_ok(
        fglab()
            .arg("--config")
            .arg(&config_path)
            .arg("--out")
            .arg(&out_dir)
            .arg("bethe"),
    );
    let trials = std::fs::read_to_string(out_dir.join("bethe_trials.csv")).unwrap();
    assert!(trials.lines().filter(|l| !l.starts_with('#')).count() == 9); // header + 8 rows
    let manifest: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(out_dir.join("bethe_manifest.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(manifest["trials_attempted"], 8);
    assert_eq!(manifest["config"]["master_seed"], 9);
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn reruns_write_identical_csv_bytes() {
    let dir = tmp_dir("determinism");
    let run = |out: &Path, jobs: &str| {
        run_ok(
            fglab()
                .args(["thm1", "--model", "ising", "--beta", "0.6", "--d", "1.0"])
                .args(["--n-grid", "5,6", "--trials", "5", "--seed", "123"])
                .args(["--jobs", jobs])
                .arg("--out")
                .arg(out),
        );
        std::fs::read(out.join("thm1_trials.csv")).unwrap()
    };
    let a = run(&dir.join("a"), "1");
    let b = run(&dir.join("b"), "1");
    let c = run(&dir.join("c"), "2");
    assert_eq!(a, b, "same config and seed must give identical bytes");
    assert_eq!(a, c, "worker count must not change the artifact");
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn oracle_rejects_unknown_query() {
    let dir = tmp_dir("badquery");
    let graph_path = dir.join("g.json");
    run_ok(
        fglab()
            .args([
                "gen", "--model", "ising", "--n", "4", "--d", "1.0", "--seed", "1",
            ])
            .arg("--out-file")
            .arg(&graph_path),
    );
    let out = fglab()
        .args(["oracle", "--query", "entropy"])
        .arg("--graph")
        .arg(&graph_path)
        .output()
        .unwrap();
    assert!(!out.status.success());
    std::fs::remove_dir_all(&dir).ok();
}
