use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use dyndisc::config::{preset, InitialConditions, SrBlock};
use dyndisc::node::TrainSpec;
use dyndisc::symreg::SrConfig;
use dyndisc::{ExperimentConfig, SamplingSpec, PRESET_NAMES};

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn dyndisc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dyndisc"))
        .args(args)
        .arg("--quiet")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn write_config(dir: &Path, name: &str, cfg: &ExperimentConfig) -> String {
    let path = dir.join(format!("{name}.json"));
    std::fs::write(&path, cfg.to_json()).unwrap();
    path.to_string_lossy().into_owned()
}

/// Files under `dir`, relative path to bytes.
fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                out.push((rel, std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn tiny_bio() -> ExperimentConfig {
    let mut cfg = preset("bio_sr_node").unwrap();
    cfg.name = "tiny".into();
    cfg.simulation.initial = Some(InitialConditions::Shifts(vec![1.6, 2.53]));
    cfg.sampling = Some(SamplingSpec::new(0.0, 2.0, 10.0));
    cfg.noise.magnitude = 0.05;
    cfg.training = Some(TrainSpec::new(40, 0.003, 2, 0));
    cfg.sr = Some(SrBlock {
        search: SrConfig {
            iterations: 2,
            cycles_per_iteration: 20,
            ..SrConfig::default()
        },
        ..cfg.sr.unwrap()
    });
    cfg
}

#[test]
fn shipped_configs_match_presets() {
    for name in PRESET_NAMES {
        let path = configs_dir().join(format!("{name}.json"));
        let cfg = ExperimentConfig::load(&path).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert_eq!(cfg, preset(name).unwrap(), "{name}");
    }
}

#[test]
fn simulate_model_a_writes_35_trajectories() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let cfg = configs_dir().join("cartpole_modelA.json");
    let r = dyndisc(&["simulate", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&r), 0, "{}", String::from_utf8_lossy(&r.stderr));
    for stage in ["dataset", "ground_truth"] {
        let n = std::fs::read_dir(out.join(stage))
            .unwrap()
            .filter(|e| e.as_ref().unwrap().file_name().to_string_lossy().starts_with("traj_"))
            .count();
        assert_eq!(n, 35, "{stage}");
    }
    let first = std::fs::read_to_string(out.join("dataset/traj_000.csv")).unwrap();
    assert_eq!(first.lines().count(), 1 + 26);
}

#[test]
fn empty_initial_conditions_exit_2_with_key_path() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = preset("cartpole_modelA").unwrap();
    cfg.simulation.initial = Some(InitialConditions::States(Vec::new()));
    let path = write_config(tmp.path(), "empty", &cfg);
    let r = dyndisc(&["simulate", "--config", &path, "--out", tmp.path().join("out").to_str().unwrap()]);
    assert_eq!(code(&r), 2);
    assert!(String::from_utf8_lossy(&r.stderr).contains("simulation.initial"));
    assert!(!tmp.path().join("out").exists());
}

#[test]
fn unknown_key_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("bad.json");
    std::fs::write(&path, r#"{"name": "x", "noise": {"magnitude": 0.05, "kind": "gauss"}}"#).unwrap();
    let r = dyndisc(&["simulate", "--config", path.to_str().unwrap()]);
    assert_eq!(code(&r), 2);
    assert!(String::from_utf8_lossy(&r.stderr).contains("noise.kind"));
}

#[test]
fn missing_upstream_exit_3() {
    let tmp = tempfile::tempdir().unwrap();
    let path = write_config(tmp.path(), "tiny", &tiny_bio());
    let out = tmp.path().join("out");
    for cmd in ["train", "discover"] {
        let r = dyndisc(&[cmd, "--config", &path, "--out", out.to_str().unwrap()]);
        assert_eq!(code(&r), 3, "{cmd}: {}", String::from_utf8_lossy(&r.stderr));
    }
    let r = dyndisc(&["evaluate", "--heatmap", "--config", &path, "--out", out.to_str().unwrap()]);
    assert_eq!(code(&r), 3);
}

#[test]
fn train_without_training_block_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let path = configs_dir().join("bio_sr_groundtruth.json");
    let out = tmp.path().join("out");
    let out = out.to_str().unwrap();
    assert_eq!(code(&dyndisc(&["simulate", "--config", path.to_str().unwrap(), "--out", out])), 0);
    let r = dyndisc(&["train", "--config", path.to_str().unwrap(), "--out", out]);
    assert_eq!(code(&r), 2);
    assert!(String::from_utf8_lossy(&r.stderr).contains("training"));
}

#[test]
fn pipeline_rerun_is_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = tiny_bio();
    cfg.evaluation.curves = Some(dyndisc::config::CurvesSpec {
        initial: InitialConditions::Shifts(vec![5.95]),
        t_end: 4.0,
        dt: 0.05,
        windows: vec![dyndisc::evaluation::Window::new(0.0, 1.0)],
    });
    let path = write_config(tmp.path(), "tiny", &cfg);
    let mut snaps = Vec::new();
    for run in ["a", "b"] {
        let out = tmp.path().join(run);
        let r = dyndisc(&["pipeline", "--config", &path, "--out", out.to_str().unwrap()]);
        assert_eq!(code(&r), 0, "{}", String::from_utf8_lossy(&r.stderr));
        assert!(String::from_utf8_lossy(&r.stdout).starts_with("target,recovered"));
        snaps.push(snapshot(&out));
    }
    let names: Vec<&str> = snaps[0].iter().map(|(n, _)| n.as_str()).collect();
    for expected in ["verdict.csv", "sr/front_chi_R.csv", "model/training_log.csv", "eval/curves_mse.csv", "dataset/traj_001.csv"] {
        assert!(names.contains(&expected), "{expected} missing from {names:?}");
    }
    assert_eq!(snaps[0], snaps[1]);
}

#[test]
fn seed_override_changes_the_noise() {
    let tmp = tempfile::tempdir().unwrap();
    let path = write_config(tmp.path(), "tiny", &tiny_bio());
    let mut files = Vec::new();
    for seed in ["1", "2"] {
        let out = tmp.path().join(seed);
        let r = dyndisc(&["simulate", "--config", &path, "--out", out.to_str().unwrap(), "--seed", seed]);
        assert_eq!(code(&r), 0);
        files.push(std::fs::read(out.join("dataset/traj_000.csv")).unwrap());
    }
    assert_ne!(files[0], files[1]);
}

#[test]
fn verify_flags_drift() {
    let tmp = tempfile::tempdir().unwrap();
    let path = write_config(tmp.path(), "tiny", &tiny_bio());
    let out = tmp.path().join("out");
    let out_s = out.to_str().unwrap();
    assert_eq!(code(&dyndisc(&["simulate", "--config", &path, "--out", out_s])), 0);
    assert_eq!(code(&dyndisc(&["simulate", "--config", &path, "--out", out_s, "--verify"])), 0);

    // A different seed is a different config.
    let r = dyndisc(&["simulate", "--config", &path, "--out", out_s, "--seed", "9", "--verify"]);
    assert_eq!(code(&r), 2);
    assert!(String::from_utf8_lossy(&r.stderr).contains("produced by config"));

    let traj = out.join("dataset/traj_001.csv");
    let mut text = std::fs::read_to_string(&traj).unwrap();
    text.push_str("9,9,9,9\n");
    std::fs::write(&traj, text).unwrap();
    let r = dyndisc(&["simulate", "--config", &path, "--out", out_s, "--verify"]);
    assert_eq!(code(&r), 2);
    assert!(String::from_utf8_lossy(&r.stderr).contains("dataset/traj_001.csv: content changed"));

    // Verifying a stage that never ran is missing input.
    let r = dyndisc(&["train", "--config", &path, "--out", out_s, "--verify"]);
    assert_eq!(code(&r), 3);
}
