//! End-to-end checks of the command-line surface: exit codes, suite
//! layouts, determinism of generated artifacts.

use std::path::{Path, PathBuf};
use std::process::Command;

use once_cell::sync::Lazy;

use emofuse_core::experiment::ExperimentConfig;
use emofuse_core::model::{trainable_breakdown, Model};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_emofuse"))
}

static WORKDIR: Lazy<PathBuf> = Lazy::new(|| {
    let dir = std::env::temp_dir().join(format!("emofuse_cli_{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
});

/// Tiny dataset shared by the suite runs.
static DATASET: Lazy<PathBuf> = Lazy::new(|| {
    let dir = WORKDIR.join("data");
    let status = bin()
        .args([
            "synth",
            "--samples-per-class",
            "3",
            "--frames",
            "4",
            "--seed",
            "5",
            "--out",
        ])
        .arg(&dir)
        .status()
        .unwrap();
    assert!(status.success());
    dir
});

fn tiny_config(output: &Path) -> ExperimentConfig {
    let mut cfg: ExperimentConfig =
        serde_json::from_str(include_str!("../presets/toy.json")).unwrap();
    cfg.model.frames_per_clip = 2;
    cfg.schedule.total_epochs = 1;
    cfg.dataset_dir = DATASET.to_string_lossy().into_owned();
    cfg.output_dir = output.to_string_lossy().into_owned();
    cfg
}

fn write_config(cfg: &ExperimentConfig, name: &str) -> PathBuf {
    let path = WORKDIR.join(name);
    std::fs::write(&path, cfg.to_json()).unwrap();
    path
}

#[test]
fn missing_dataset_exits_2() {
    let mut cfg = tiny_config(&WORKDIR.join("out_missing"));
    cfg.dataset_dir = WORKDIR.join("nonexistent").to_string_lossy().into_owned();
    let path = write_config(&cfg, "missing_dataset.json");
    let out = bin()
        .args(["train", "--config"])
        .arg(&path)
        .output()
        .unwrap();
    assert_eq!(
        out.status.code(),
        Some(2),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn unknown_config_field_exits_2() {
    let path = WORKDIR.join("bad_field.json");
    let mut value: serde_json::Value =
        serde_json::from_str(include_str!("../presets/toy.json")).unwrap();
    value["model"]["made_up_field"] = serde_json::json!(1);
    std::fs::write(&path, serde_json::to_string(&value).unwrap()).unwrap();
    let out = bin()
        .args(["train", "--config"])
        .arg(&path)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("made_up_field"));
}

#[test]
fn unknown_suite_exits_2() {
    let cfg = tiny_config(&WORKDIR.join("out_suite"));
    let path = write_config(&cfg, "suite_cfg.json");
    let out = bin()
        .args(["ablate", "--suite", "nonsense", "--config"])
        .arg(&path)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unknown_preset_exits_2() {
    let out = bin()
        .args(["params", "--preset", "imaginary"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn gradcheck_f64_exits_0() {
    let out = bin().args(["gradcheck", "--mode", "f64"]).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("attention") && text.contains("PASS"));
}

#[test]
fn synth_is_byte_deterministic() {
    let dir_a = WORKDIR.join("synth_a");
    let dir_b = WORKDIR.join("synth_b");
    for dir in [&dir_a, &dir_b] {
        let status = bin()
            .args([
                "synth",
                "--samples-per-class",
                "2",
                "--frames",
                "2",
                "--seed",
                "9",
                "--out",
            ])
            .arg(dir)
            .status()
            .unwrap();
        assert!(status.success());
    }
    let mut names: Vec<_> = std::fs::read_dir(&dir_a)
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    names.sort();
    assert!(!names.is_empty());
    for name in names {
        let a = std::fs::read(dir_a.join(&name)).unwrap();
        let b = std::fs::read(dir_b.join(&name)).unwrap();
        assert_eq!(a, b, "{name:?} differs between identical synth runs");
    }
}

#[test]
fn temporal_suite_emits_five_rows_with_params() {
    let out_dir = WORKDIR.join("out_temporal");
    let cfg = tiny_config(&out_dir);
    let path = write_config(&cfg, "temporal_cfg.json");
    let out = bin()
        .args(["ablate", "--suite", "temporal", "--config"])
        .arg(&path)
        .output()
        .unwrap();
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv = std::fs::read_to_string(out_dir.join("ablation_temporal.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 6, "header + 5 rows, got {csv}");
    assert!(lines[0].ends_with("trainable_params"));
    for label in ["ita-64", "ita-128", "ita-256", "mtt+ita-128", "mtt"] {
        assert!(
            lines.iter().any(|l| l.starts_with(&format!("{label},"))),
            "{label} missing"
        );
    }
    // the params column matches plan-level accounting per variant
    let params_of = |label: &str| -> usize {
        lines
            .iter()
            .find(|l| l.starts_with(&format!("{label},")))
            .and_then(|l| l.rsplit(',').next())
            .unwrap()
            .parse()
            .unwrap()
    };
    let mut mtt_model = tiny_config(&out_dir).model;
    mtt_model.temporal.mode = emofuse_core::temporal::TemporalMode::Mtt;
    mtt_model.temporal.ita = None;
    let (_, plan) = Model::plan(&mtt_model).unwrap();
    assert_eq!(params_of("mtt"), trainable_breakdown(&plan).total);

    let mut ita_model = tiny_config(&out_dir).model;
    ita_model.temporal.mode = emofuse_core::temporal::TemporalMode::MeanPool;
    ita_model.temporal.ita = Some(emofuse_core::temporal::ItaConfig { dim: 64, heads: 2 });
    let (_, plan) = Model::plan(&ita_model).unwrap();
    assert_eq!(params_of("ita-64"), trainable_breakdown(&plan).total);
}

#[test]
fn prompts_suite_row_zero_is_promptless() {
    let out_dir = WORKDIR.join("out_prompts");
    let cfg = tiny_config(&out_dir);
    let path = write_config(&cfg, "prompts_cfg.json");
    let out = bin()
        .args(["ablate", "--suite", "prompts", "--config"])
        .arg(&path)
        .output()
        .unwrap();
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv = std::fs::read_to_string(out_dir.join("ablation_prompts.csv")).unwrap();
    let zero_row = csv.lines().find(|l| l.starts_with("0,")).expect("row 0");
    let zero_params: usize = zero_row.rsplit(',').next().unwrap().parse().unwrap();

    // a no-prompt model must have exactly that many trainable params
    let mut promptless = tiny_config(&out_dir).model;
    promptless.prompts = emofuse_core::prompts::PromptConfig::none();
    let (_, plan) = Model::plan(&promptless).unwrap();
    assert_eq!(zero_params, trainable_breakdown(&plan).total);
    assert_eq!(csv.lines().count(), 6); // header + {0,2,4,6,12}
}

#[test]
fn latent_suite_params_match_breakdown_exactly() {
    let out_dir = WORKDIR.join("out_latent");
    let cfg = tiny_config(&out_dir);
    let path = write_config(&cfg, "latent_cfg.json");
    let out = bin()
        .args([
            "ablate", "--suite", "latent", "--dims", "4,8,16", "--config",
        ])
        .arg(&path)
        .output()
        .unwrap();
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv = std::fs::read_to_string(out_dir.join("ablation_latent.csv")).unwrap();
    for dim in [4usize, 8, 16] {
        let row = csv
            .lines()
            .find(|l| l.starts_with(&format!("{dim},")))
            .unwrap();
        let got: usize = row.rsplit(',').next().unwrap().parse().unwrap();
        let mut model = tiny_config(&out_dir).model;
        model.fusion.latent_dim = dim;
        let (_, plan) = Model::plan(&model).unwrap();
        assert_eq!(got, trainable_breakdown(&plan).total, "latent {dim}");
    }
}

#[test]
fn report_refuses_mismatched_digest() {
    // produce one real run
    let out_dir = WORKDIR.join("out_digest");
    let cfg = tiny_config(&out_dir);
    let path = write_config(&cfg, "digest_cfg.json");
    let out = bin()
        .args(["train", "--config"])
        .arg(&path)
        .output()
        .unwrap();
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );

    // a config with a different seed has a different digest
    let mut other = cfg.clone();
    other.seed = 999;
    let other_path = write_config(&other, "digest_other.json");
    let rep_dir = WORKDIR.join("rep_digest");
    let out = bin()
        .args(["report", "--out"])
        .arg(&rep_dir)
        .args(["--config"])
        .arg(&other_path)
        .arg(out_dir.join("report.json"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));

    // matching config is accepted
    let out = bin()
        .args(["report", "--out"])
        .arg(&rep_dir)
        .args(["--config"])
        .arg(&path)
        .arg(out_dir.join("report.json"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(rep_dir.join("summary.csv").exists());
    assert!(rep_dir.join("chart.svg").exists());
}

#[test]
fn report_merges_two_runs_into_csv_and_svg() {
    // two tiny runs with different seeds
    let mut paths = Vec::new();
    for seed in [11u64, 12] {
        let out_dir = WORKDIR.join(format!("out_merge_{seed}"));
        let mut cfg = tiny_config(&out_dir);
        cfg.seed = seed;
        let path = write_config(&cfg, &format!("merge_{seed}.json"));
        let out = bin().args(["train", "--config"]).arg(&path).output().unwrap();
        assert_eq!(
            out.status.code(),
            Some(0),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
        paths.push(out_dir.join("report.json"));
    }
    let rep_dir = WORKDIR.join("rep_merge");
    let out = bin()
        .args(["report", "--out"])
        .arg(&rep_dir)
        .args(&paths)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let csv = std::fs::read_to_string(rep_dir.join("summary.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3, "header + two rows: {csv}");
    let svg = std::fs::read_to_string(rep_dir.join("chart.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
}

#[test]
fn output_root_env_reroots_relative_dirs() {
    let root = WORKDIR.join("rooted");
    let mut cfg = tiny_config(Path::new("nested/run"));
    cfg.model.frames_per_clip = 2;
    let path = write_config(&cfg, "rooted_cfg.json");
    let out = bin()
        .env("EMOFUSE_OUTPUT_ROOT", &root)
        .args(["train", "--config"])
        .arg(&path)
        .output()
        .unwrap();
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(root.join("nested/run/report.json").exists());
}

#[test]
fn preset_prints_valid_config() {
    let out = bin().args(["preset", "paper_scale"]).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let cfg = ExperimentConfig::from_json(&String::from_utf8_lossy(&out.stdout)).unwrap();
    assert_eq!(cfg.model.dim, 768);
}
