use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tada::config::{DataConfig, ExperimentConfig, Preset};
use tada::data::SubsetSize;

fn tada(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tada"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("run tada")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

/// A configuration small enough to run every command in seconds.
fn tiny(preset: Preset, dir: &Path) -> PathBuf {
    let mut cfg = ExperimentConfig::preset(preset);
    cfg.run_id = "tiny".into();
    cfg.output_root = dir.join("runs");
    if let DataConfig::Toy {
        world,
        synthetic_train,
        synthetic_val,
        real_train,
        real_val,
    } = &mut cfg.data
    {
        world.height = 16;
        world.width = 16;
        *synthetic_train = 16;
        *synthetic_val = 8;
        *real_train = 16;
        *real_val = 8;
    }
    cfg.stage_a.epochs = 1;
    cfg.stage_b.epochs = 1;
    cfg.stage_b.decay_epochs = 1;
    cfg.stage_c.epochs = 1;
    cfg.stage_c.decay_epochs = 1;
    cfg.stage_c.eval_every = 1;
    cfg.stage_c.labeled = SubsetSize::Fraction(0.25);
    cfg.m3.epochs = 1;
    cfg.m3.min_steps = 0;
    cfg.sweep.alphas = vec![0.0, 1.0];
    cfg.sweep.fractions = vec![0.125, 0.25];
    cfg.sweep.seeds = vec![0];
    cfg.evaluate.resolutions = vec![[16, 16], [24, 24]];
    let path = dir.join("tiny.toml");
    std::fs::write(&path, cfg.to_toml().unwrap()).unwrap();
    path
}

#[test]
fn help_and_version_succeed() {
    assert_eq!(code(&tada(&["--help"])), 0);
    assert_eq!(code(&tada(&["--version"])), 0);
    assert_eq!(code(&tada(&["finetune", "--help"])), 0);
}

#[test]
fn usage_errors_exit_with_one() {
    assert_eq!(code(&tada(&[])), 1);
    assert_eq!(code(&tada(&["bogus"])), 1);
    assert_eq!(code(&tada(&["finetune", "--alpha", "abc"])), 1);
    assert_eq!(code(&tada(&["train-expert", "--preset", "toy-nope"])), 1);
    let tmp = tempfile::tempdir().unwrap();
    let out_dir = tmp.path().to_str().unwrap();
    let out = tada(&["finetune", "--alpha", "1.5", "--out", out_dir]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("alpha"), "{}", stderr(&out));
    let missing = tmp.path().join("missing.toml");
    assert_eq!(code(&tada(&["train-expert", "--config", missing.to_str().unwrap()])), 1);
}

#[test]
fn commands_out_of_order_name_the_prerequisite() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tiny(Preset::ToySeg, tmp.path());
    let cfg = cfg.to_str().unwrap();
    let out = tada(&["evaluate", "--config", cfg]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("train-expert"), "{}", stderr(&out));
    assert_eq!(code(&tada(&["train-expert", "--config", cfg])), 0);
    let out = tada(&["finetune", "--config", cfg]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("train-i2i"), "{}", stderr(&out));
}

#[test]
fn segmentation_pipeline_end_to_end() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg_path = tiny(Preset::ToySeg, tmp.path());
    let cfg = cfg_path.to_str().unwrap();
    for cmd in ["train-expert", "train-i2i"] {
        let out = tada(&[cmd, "--config", cfg]);
        assert_eq!(code(&out), 0, "{cmd}: {}", stderr(&out));
    }
    let out = tada(&["finetune", "--config", cfg, "--alpha", "0"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(stdout(&out).contains("reduces to task-agnostic"), "{}", stdout(&out));
    let out = tada(&["finetune", "--config", cfg, "--labeled", "3", "--replicate", "1"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let out = tada(&["finetune", "--config", cfg]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let out = tada(&["evaluate", "--config", cfg]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let report = stdout(&out);
    for row in ["M1", "M2", "M3", "ours", "domain gap", "24x24"] {
        assert!(report.contains(row), "missing {row}:\n{report}");
    }
    let out = tada(&["evaluate", "--config", cfg, "--baselines", "m2,m4"]);
    assert_eq!(code(&out), 1);
    for cmd in ["sweep-alpha", "sweep-gt"] {
        let out = tada(&[cmd, "--config", cfg]);
        assert_eq!(code(&out), 0, "{cmd}: {}", stderr(&out));
    }

    let run = tmp.path().join("runs").join("tiny");
    for artifact in [
        "manifest.json",
        "config/resolved.toml",
        "checkpoints/expert.ckpt",
        "checkpoints/stage_b_g_r2s.ckpt",
        "metrics/records.csv",
        "metrics/evaluate.csv",
        "metrics/per_class_iou.csv",
        "metrics/domain_gap.csv",
        "metrics/resolution.csv",
        "metrics/sweep_alpha.csv",
        "metrics/sweep_alpha.svg",
        "metrics/sweep_gt.csv",
        "metrics/sweep_gt.svg",
        "logs/run.log",
    ] {
        assert!(run.join(artifact).is_file(), "missing {artifact}");
    }
    let records = tada::metrics::read_records(&run.join("metrics/records.csv")).unwrap();
    assert!(records.iter().any(|r| r.stage == "A"));
    assert!(records.iter().any(|r| r.stage == "C"));

    // A rerun with a different stage A setup must not reuse the old artifacts.
    let out = tada(&["train-i2i", "--config", cfg, "--seed", "9"]);
    assert_eq!(code(&out), 1, "{}", stderr(&out));
}

#[test]
fn classification_pipeline_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg_path = tiny(Preset::ToyCls, tmp.path());
    let cfg = cfg_path.to_str().unwrap();
    for cmd in ["train-expert", "train-i2i", "finetune", "evaluate"] {
        let out = tada(&[cmd, "--config", cfg]);
        assert_eq!(code(&out), 0, "{cmd}: {}", stderr(&out));
    }
    let out = tada(&["evaluate", "--config", cfg]);
    assert!(stdout(&out).contains("accuracy"), "{}", stdout(&out));
}

#[test]
fn generated_toy_data_loads_from_directories() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg_path = tiny(Preset::ToySeg, tmp.path());
    let data = tmp.path().join("data");
    let out = tada(&[
        "generate-toy",
        "--config",
        cfg_path.to_str().unwrap(),
        "--out",
        data.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));

    let mut cfg = ExperimentConfig::load(&cfg_path).unwrap();
    cfg.data = DataConfig::Directory {
        root: data.clone(),
        num_classes: 4,
    };
    let dir_cfg = tmp.path().join("dir.toml");
    std::fs::write(&dir_cfg, cfg.to_toml().unwrap()).unwrap();
    let out = tada(&["train-expert", "--config", dir_cfg.to_str().unwrap(), "--run-id", "dir"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));

    // A corrupt image is a runtime failure, not a usage error.
    let images = tada::data::directory::split_dir(&data, tada::datamodel::Domain::Real, "val").join("images");
    let victim = std::fs::read_dir(&images).unwrap().next().unwrap().unwrap().path();
    std::fs::write(&victim, b"not a png").unwrap();
    let out = tada(&[
        "train-expert",
        "--config",
        dir_cfg.to_str().unwrap(),
        "--run-id",
        "broken",
    ]);
    assert_eq!(code(&out), 2, "{}", stderr(&out));
    assert!(
        stderr(&out).contains(victim.file_name().unwrap().to_str().unwrap()),
        "{}",
        stderr(&out)
    );
}
