//! Acceptance suite: one test per release criterion, each printing a
//! PASS line (run with `--nocapture` to see them). Training-based criteria
//! share cached runs, so the suite stays inside a CPU-minutes budget.

use std::collections::HashMap;
use std::path::PathBuf;
use std::process::Command;
use std::sync::{Arc, Mutex};

use once_cell::sync::Lazy;

use emofuse_core::data::format::{sample_from_bytes, sample_to_bytes, SampleRecord};
use emofuse_core::data::{generate_synthetic, prepare_input, write_dataset, SynthConfig};
use emofuse_core::error::Error;
use emofuse_core::experiment::{run_experiment, ExperimentConfig, RunOutcome};
use emofuse_core::fusion::{FusionConfig, FusionParams, FusionStack, FusionVariant};
use emofuse_core::graph::Graph;
use emofuse_core::metrics::{compute_metrics, ConfusionMatrix};
use emofuse_core::model::{trainable_breakdown, ModalityMode, Model, ModelConfig};
use emofuse_core::optim::{OptimConfig, Schedule};
use emofuse_core::param::{ParamPlan, ParamStore};
use emofuse_core::prompts::PromptConfig;
use emofuse_core::temporal::TemporalMode;
use emofuse_core::tensor::Tensor;
use emofuse_core::verify::run_suite;

fn pass(criterion: usize, what: &str) {
    println!("[criterion {criterion:02}] {what}: PASS");
}

// ── shared fixtures ─────────────────────────────────────────────────────

static WORKDIR: Lazy<PathBuf> = Lazy::new(|| {
    let dir = std::env::temp_dir().join(format!("emofuse_acceptance_{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
});

/// The default synthetic dataset (7 classes, cross-modal split).
static DEFAULT_DATASET: Lazy<PathBuf> = Lazy::new(|| {
    let dir = WORKDIR.join("data_default");
    write_dataset(&dir, &SynthConfig::default()).unwrap();
    dir
});

/// A small dataset for the quick protocol checks.
static SMALL_DATASET: Lazy<PathBuf> = Lazy::new(|| {
    let dir = WORKDIR.join("data_small");
    let cfg = SynthConfig {
        samples_per_class: 10,
        frames: 4,
        ..SynthConfig::default()
    };
    write_dataset(&dir, &cfg).unwrap();
    dir
});

/// Depth-2 model that trains in seconds while keeping every mechanism
/// (prompts, per-layer bottleneck fusion, temporal transformer) active.
fn fast_model() -> ModelConfig {
    let mut cfg = ModelConfig::toy();
    cfg.depth = 2;
    cfg.fusion.hook_layers = vec![1, 2];
    cfg.prompts.hook_layers = vec![1];
    cfg
}

fn fast_experiment(modality: ModalityMode, seed: u64, epochs: usize) -> ExperimentConfig {
    let mut model = fast_model();
    model.modality = modality;
    if modality != ModalityMode::Multimodal {
        model.fusion = FusionConfig::none();
    }
    ExperimentConfig {
        model,
        schedule: Schedule {
            base_lr: 1e-2,
            total_epochs: epochs,
        },
        optim: OptimConfig::default(),
        batch_size: 8,
        dataset_dir: DEFAULT_DATASET.to_string_lossy().into_owned(),
        fold: 1,
        seed,
        output_dir: WORKDIR.join("unused").to_string_lossy().into_owned(),
    }
}

type RunCache = Mutex<HashMap<String, Arc<RunOutcome<f32>>>>;
static RUN_CACHE: Lazy<RunCache> = Lazy::new(|| Mutex::new(HashMap::new()));

fn cached_run(cfg: &ExperimentConfig) -> Arc<RunOutcome<f32>> {
    let key = cfg.digest();
    if let Some(hit) = RUN_CACHE.lock().unwrap().get(&key) {
        return hit.clone();
    }
    let outcome = Arc::new(run_experiment::<f32>(cfg).unwrap());
    RUN_CACHE.lock().unwrap().insert(key, outcome.clone());
    outcome
}

fn synth_input(cfg: &ModelConfig, salt: u64) -> emofuse_core::model::SampleInput<f32> {
    let v = &cfg.vision;
    let a = &cfg.audio;
    let value = |i: u64| {
        (((i.wrapping_mul(2654435761).wrapping_add(salt * 97)) % 1000) as f32) / 500.0 - 1.0
    };
    let frames = (0..cfg.frames_per_clip)
        .map(|f| {
            let h = v.grid_rows * v.patch_size;
            let w = v.grid_cols * v.patch_size;
            let data: Vec<f32> = (0..v.channels * h * w)
                .map(|i| value(f as u64 * 1_000_000 + i as u64))
                .collect();
            Tensor::new(vec![v.channels, h, w], data).unwrap()
        })
        .collect();
    let fa = a.grid_rows * a.patch_size;
    let ta = a.grid_cols * a.patch_size;
    let audio: Vec<f32> = (0..fa * ta).map(|i| value(55_000_000 + i as u64)).collect();
    emofuse_core::model::SampleInput {
        frames,
        audio: Tensor::new(vec![fa, ta], audio).unwrap(),
    }
}

// ── criterion 1: parameter accounting ───────────────────────────────────

#[test]
fn criterion_01_parameter_accounting() {
    let within = |value: f64, target: f64, tol: f64| (value - target).abs() <= tol * target;

    let base = ModelConfig::paper_scale();
    let total = |cfg: &ModelConfig| {
        let (_, plan) = Model::plan(cfg).unwrap();
        trainable_breakdown(&plan)
    };

    let b = total(&base);
    assert!(
        within(b.total as f64, 7.5e6, 0.05),
        "full-scale total {} outside 7.5M ± 5%",
        b.total
    );

    let mut latent_256 = base.clone();
    latent_256.fusion.latent_dim = 256;
    let t256 = total(&latent_256).total;
    assert!(within(t256 as f64, 12.3e6, 0.05), "latent-256 total {t256}");

    let mut latent_512 = base.clone();
    latent_512.fusion.latent_dim = 512;
    let t512 = total(&latent_512).total;
    assert!(within(t512 as f64, 21.7e6, 0.05), "latent-512 total {t512}");

    let mtt = b
        .groups
        .iter()
        .find(|(g, _)| g == "temporal_transformer")
        .map(|(_, n)| *n)
        .unwrap();
    assert!(
        within(mtt as f64, 2.2e6, 0.10),
        "temporal transformer subtotal {mtt} outside 2.2M ± 10%"
    );
    pass(
        1,
        &format!("parameter accounting (total {} / latent-256 {t256} / latent-512 {t512} / temporal {mtt})", b.total),
    );
}

// ── criterion 2: gate-zero equivalence ──────────────────────────────────

#[test]
fn criterion_02_gate_zero_equivalence() {
    // full toy depth with every fusion hook, prompts disabled via M = 0
    let mut fused_cfg = ModelConfig::toy();
    fused_cfg.prompts = PromptConfig::none();
    let mut plain_cfg = fused_cfg.clone();
    plain_cfg.fusion = FusionConfig::none();

    let (fused, fused_store) = Model::build::<f32>(&fused_cfg, 1).unwrap();
    let (plain, plain_store) = Model::build::<f32>(&plain_cfg, 1).unwrap();
    for salt in 0..16u64 {
        let sample = synth_input(&fused_cfg, salt);
        let mut g1 = Graph::new();
        let l1 = fused
            .forward(&mut g1, &fused_store, &[sample.clone()])
            .unwrap();
        let mut g2 = Graph::new();
        let l2 = plain.forward(&mut g2, &plain_store, &[sample]).unwrap();
        let bits1: Vec<u32> = g1.value(l1).data().iter().map(|v| v.to_bits()).collect();
        let bits2: Vec<u32> = g2.value(l2).data().iter().map(|v| v.to_bits()).collect();
        assert_eq!(bits1, bits2, "sample {salt}: fused and plain logits differ");
    }
    pass(
        2,
        "gate-zero logits bit-identical to the fusion-free pipeline on 16 samples",
    );
}

// ── criterion 3: bottleneck scalar oracle ───────────────────────────────

mod scalar_oracle {
    pub const T_FRAMES: usize = 2;
    pub const N_V: usize = 3;
    pub const N_A: usize = 4;
    pub const DIM: usize = 8;
    pub const LATENT: usize = 2;

    pub fn layer_norm(row: &mut [f64], gamma: &[f64], beta: &[f64]) {
        let d = row.len() as f64;
        let mean: f64 = row.iter().sum::<f64>() / d;
        let var: f64 = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d;
        let inv = 1.0 / (var + 1e-6).sqrt();
        for (i, v) in row.iter_mut().enumerate() {
            *v = gamma[i] * ((*v - mean) * inv) + beta[i];
        }
    }

    pub fn gelu(x: f64) -> f64 {
        // Simpson quadrature of the normal pdf for Φ(x)
        let steps = 4000;
        let lo = -10.0f64;
        let h = (x - lo) / steps as f64;
        let pdf = |t: f64| (-0.5 * t * t).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let mut acc = pdf(lo) + pdf(x);
        for i in 1..steps {
            let t = lo + i as f64 * h;
            acc += if i % 2 == 1 {
                4.0 * pdf(t)
            } else {
                2.0 * pdf(t)
            };
        }
        x * (acc * h / 3.0)
    }

    pub fn affine(row: &[f64], w: &[f64], b: &[f64], out_dim: usize) -> Vec<f64> {
        let in_dim = row.len();
        (0..out_dim)
            .map(|c| {
                (0..in_dim)
                    .map(|p| row[p] * w[p * out_dim + c])
                    .sum::<f64>()
                    + b[c]
            })
            .collect()
    }
}

#[test]
fn criterion_03_bottleneck_scalar_oracle() {
    use scalar_oracle::*;

    let cfg = FusionConfig {
        variant: FusionVariant::Bottleneck,
        hook_layers: vec![1],
        latent_dim: LATENT,
        mult_attn_dim: 4,
        mult_heads: 2,
        concat_heads: 2,
        concat_ffn_ratio: 2,
        pool_includes_cls: true,
        include_prompt_tokens: true,
    };
    let mut plan = ParamPlan::new();
    let stack = FusionStack::plan(&mut plan, &cfg, DIM, 12).unwrap();
    let mut store = ParamStore::<f64>::materialize(&plan, 311);
    let block = match &stack.params {
        FusionParams::Bottleneck { blocks } => blocks[0].clone(),
        _ => unreachable!(),
    };
    let alpha = 0.45f64;
    store.get_mut(block.gate).tensor.data_mut()[0] = alpha;

    let val = |i: usize| ((i as f64) * 0.618_034).sin() * 0.9;
    let frames: Vec<Vec<Vec<f64>>> = (0..T_FRAMES)
        .map(|t| {
            (0..N_V)
                .map(|r| (0..DIM).map(|c| val(t * 1000 + r * 50 + c)).collect())
                .collect()
        })
        .collect();
    let audio: Vec<Vec<f64>> = (0..N_A)
        .map(|r| (0..DIM).map(|c| val(777 + r * 50 + c)).collect())
        .collect();

    // implementation path
    let mut g = Graph::new();
    let frame_ids: Vec<_> = frames
        .iter()
        .map(|f| g.input(Tensor::from_rows(f).unwrap()))
        .collect();
    let audio_id = g.input(Tensor::from_rows(&audio).unwrap());
    let (out_f, out_a) = stack
        .apply(&mut g, &store, 0, &frame_ids, audio_id, 0, 0)
        .unwrap();

    // independent scalar-by-scalar evaluation
    let grab = |pid| store.value(pid).data().to_vec();
    let (cv_w, cv_b, cv_g, cv_be) = (
        grab(block.compress_v_w),
        grab(block.compress_v_b),
        grab(block.compress_v_gamma),
        grab(block.compress_v_beta),
    );
    let (ca_w, ca_b, ca_g, ca_be) = (
        grab(block.compress_a_w),
        grab(block.compress_a_b),
        grab(block.compress_a_gamma),
        grab(block.compress_a_beta),
    );
    let (ev_w, ev_b) = (grab(block.expand_v_w), grab(block.expand_v_b));
    let (ea_w, ea_b) = (grab(block.expand_a_w), grab(block.expand_a_b));

    let compress = |row: &[f64], w: &[f64], b: &[f64], gm: &[f64], be: &[f64]| {
        let mut out = scalar_oracle::affine(row, w, b, LATENT);
        layer_norm(&mut out, gm, be);
        out
    };
    let comp_v: Vec<Vec<Vec<f64>>> = frames
        .iter()
        .map(|f| {
            f.iter()
                .map(|r| compress(r, &cv_w, &cv_b, &cv_g, &cv_be))
                .collect()
        })
        .collect();
    let comp_a: Vec<Vec<f64>> = audio
        .iter()
        .map(|r| compress(r, &ca_w, &ca_b, &ca_g, &ca_be))
        .collect();

    let mut summary_v = vec![0.0f64; LATENT];
    for f in &comp_v {
        for r in f {
            for c in 0..LATENT {
                summary_v[c] += r[c];
            }
        }
    }
    for v in summary_v.iter_mut() {
        *v /= (T_FRAMES * N_V) as f64;
    }
    let mut summary_a = vec![0.0f64; LATENT];
    for r in &comp_a {
        for c in 0..LATENT {
            summary_a[c] += r[c];
        }
    }
    for v in summary_a.iter_mut() {
        *v /= N_A as f64;
    }

    let gate = alpha.tanh();
    for (t, frame) in frames.iter().enumerate() {
        for r in 0..N_V {
            let mixed: Vec<f64> = comp_v[t][r]
                .iter()
                .zip(summary_a.iter())
                .map(|(a, b)| a + b)
                .collect();
            let expanded: Vec<f64> = scalar_oracle::affine(&mixed, &ev_w, &ev_b, DIM)
                .into_iter()
                .map(gelu)
                .collect();
            for c in 0..DIM {
                let expected = frame[r][c] + gate * expanded[c];
                let got = g.value(out_f[t]).get2(r, c);
                assert!(
                    (got - expected).abs() < 1e-5,
                    "frame {t} row {r} col {c}: {got} vs {expected}"
                );
            }
        }
    }
    for r in 0..N_A {
        let mixed: Vec<f64> = comp_a[r]
            .iter()
            .zip(summary_v.iter())
            .map(|(a, b)| a + b)
            .collect();
        let expanded: Vec<f64> = scalar_oracle::affine(&mixed, &ea_w, &ea_b, DIM)
            .into_iter()
            .map(gelu)
            .collect();
        for c in 0..DIM {
            let expected = audio[r][c] + gate * expanded[c];
            let got = g.value(out_a).get2(r, c);
            assert!(
                (got - expected).abs() < 1e-5,
                "audio {r},{c}: {got} vs {expected}"
            );
        }
    }
    pass(
        3,
        "bottleneck exchange matches the scalar oracle within 1e-5",
    );
}

// ── criterion 4: gradient verification ──────────────────────────────────

#[test]
fn criterion_04_gradient_verification() {
    for report in run_suite::<f64>().unwrap() {
        assert!(
            report.max_rel_err < 1e-6,
            "f64 {} at {:.3e}",
            report.op,
            report.max_rel_err
        );
    }
    for report in run_suite::<f32>().unwrap() {
        assert!(
            report.max_rel_err < 1e-3,
            "f32 {} at {:.3e}",
            report.op,
            report.max_rel_err
        );
    }
    // the CLI surface must agree
    let status = Command::new(env!("CARGO_BIN_EXE_emofuse"))
        .args(["gradcheck", "--mode", "f64"])
        .output()
        .unwrap();
    assert!(status.status.success(), "cmd gradcheck exited nonzero");
    pass(
        4,
        "finite differences: every op < 1e-6 (f64) and < 1e-3 (f32)",
    );
}

// ── criterion 5: freeze contract over a full training run ───────────────

#[test]
fn criterion_05_freeze_contract() {
    let mut cfg = fast_experiment(ModalityMode::Multimodal, 1, 25);
    cfg.dataset_dir = SMALL_DATASET.to_string_lossy().into_owned();
    cfg.schedule.base_lr = 6e-3;

    // digests of a fresh materialization equal the pre-training state
    let (_, plan) = Model::plan(&cfg.model).unwrap();
    let fresh: ParamStore<f32> = ParamStore::materialize(&plan, cfg.seed);
    let before = fresh.frozen_digest();

    let outcome = run_experiment::<f32>(&cfg).unwrap();
    assert_eq!(
        before,
        outcome.store.frozen_digest(),
        "frozen weights changed over 25 epochs"
    );
    assert_eq!(outcome.report.epochs.len(), 25);
    pass(
        5,
        "frozen-weight digests identical before and after 25 epochs",
    );
}

// ── criteria 6 and 7: training comparisons ──────────────────────────────

const GAIN_EPOCHS: usize = 8;

fn mean_war(modality: ModalityMode, seeds: &[u64]) -> f64 {
    let mut total = 0.0;
    for &seed in seeds {
        let outcome = cached_run(&fast_experiment(modality, seed, GAIN_EPOCHS));
        total += outcome.report.metrics_1clip.war;
    }
    total / seeds.len() as f64
}

#[test]
fn criterion_06_multimodal_gain() {
    let seeds = [1u64, 2, 3];
    let multi = mean_war(ModalityMode::Multimodal, &seeds);
    let vision = mean_war(ModalityMode::VisionOnly, &seeds);
    let audio = mean_war(ModalityMode::AudioOnly, &seeds);
    assert!(
        multi >= vision + 0.10,
        "multimodal {multi:.3} vs vision-only {vision:.3}: gain below 10 points"
    );
    assert!(
        multi >= audio + 0.10,
        "multimodal {multi:.3} vs audio-only {audio:.3}: gain below 10 points"
    );
    pass(
        6,
        &format!(
            "held-out WAR multimodal {multi:.3} vs vision {vision:.3} / audio {audio:.3} (3 seeds)"
        ),
    );
}

#[test]
fn criterion_07_ablation_monotonicity() {
    let full = cached_run(&fast_experiment(ModalityMode::Multimodal, 1, GAIN_EPOCHS))
        .report
        .metrics_1clip
        .war;

    let mut no_fusion = fast_experiment(ModalityMode::Multimodal, 1, GAIN_EPOCHS);
    no_fusion.model.fusion.variant = FusionVariant::None;
    let war_no_fusion = cached_run(&no_fusion).report.metrics_1clip.war;

    let mut no_mtt = fast_experiment(ModalityMode::Multimodal, 1, GAIN_EPOCHS);
    no_mtt.model.temporal.mode = TemporalMode::MeanPool;
    let war_no_mtt = cached_run(&no_mtt).report.metrics_1clip.war;

    let tie = 0.005;
    assert!(
        full + tie >= war_no_fusion,
        "full {full:.3} below fusion-free {war_no_fusion:.3}"
    );
    assert!(
        full + tie >= war_no_mtt,
        "full {full:.3} below temporal-free {war_no_mtt:.3}"
    );
    pass(
        7,
        &format!(
            "full {full:.3} ≥ no-fusion {war_no_fusion:.3} and ≥ no-temporal-head {war_no_mtt:.3}"
        ),
    );
}

// ── criterion 8: metrics oracle ─────────────────────────────────────────

#[test]
fn criterion_08_metrics_oracle() {
    let cases: [(usize, Vec<u64>, f64, f64); 5] = [
        // perfect diagonal
        (3, vec![5, 0, 0, 0, 2, 0, 0, 0, 9], 1.0, 1.0),
        // the worked 2-class example: supports 10 and 5, correct 8 and 1
        (2, vec![8, 2, 4, 1], 0.5, 0.6),
        // zero-support class excluded from UAR
        (3, vec![8, 2, 0, 4, 1, 0, 0, 0, 0], 0.5, 0.6),
        // everything wrong
        (2, vec![0, 3, 7, 0], 0.0, 0.0),
        // hand-computed 3-class case: recalls 3/6, 2/4, 5/5
        (
            3,
            vec![3, 2, 1, 1, 2, 1, 0, 0, 5],
            (0.5 + 0.5 + 1.0) / 3.0,
            10.0 / 15.0,
        ),
    ];
    for (k, counts, uar, war) in cases {
        let cm = ConfusionMatrix::from_counts(k, counts).unwrap();
        let m = compute_metrics(&cm).unwrap();
        assert_eq!(m.uar, uar, "uar of {cm:?}");
        assert_eq!(m.war, war, "war of {cm:?}");
    }
    pass(8, "UAR/WAR exact on 5 fixed confusion matrices");
}

// ── criterion 9: protocol reproducibility through the CLI ───────────────

#[test]
fn criterion_09_protocol_reproducibility() {
    let mut cfg = fast_experiment(ModalityMode::Multimodal, 1, 3);
    cfg.dataset_dir = SMALL_DATASET.to_string_lossy().into_owned();
    let config_path = WORKDIR.join("repro_config.json");
    let run = |out: &str| {
        let mut c = cfg.clone();
        c.output_dir = WORKDIR.join(out).to_string_lossy().into_owned();
        std::fs::write(&config_path, c.to_json()).unwrap();
        let status = Command::new(env!("CARGO_BIN_EXE_emofuse"))
            .args(["train", "--config"])
            .arg(&config_path)
            .output()
            .unwrap();
        assert!(
            status.status.success(),
            "train failed: {}",
            String::from_utf8_lossy(&status.stderr)
        );
        WORKDIR.join(out)
    };
    let dir_a = run("repro_a");
    let dir_b = run("repro_b");
    for file in ["train_log.csv", "metrics.csv"] {
        let a = std::fs::read(dir_a.join(file)).unwrap();
        let b = std::fs::read(dir_b.join(file)).unwrap();
        assert_eq!(a, b, "{file} differs between identical runs");
    }
    // both clip protocols are present in the metrics CSV
    let metrics = std::fs::read_to_string(dir_a.join("metrics.csv")).unwrap();
    assert!(metrics.lines().any(|l| l.starts_with("1,")));
    assert!(metrics.lines().any(|l| l.starts_with("2,")));
    pass(
        9,
        "identical runs produce byte-identical CSVs with 1- and 2-clip metrics",
    );
}

// ── criterion 10: temporal permutation property ─────────────────────────

#[test]
fn criterion_10_permutation_property() {
    // at initialization the temporal embeddings are zero: permuting frames
    // must not move the logits beyond numeric noise
    let cfg = fast_model();
    let (model, store) = Model::build::<f32>(&cfg, 4).unwrap();
    let (records, _) = generate_synthetic(&SynthConfig {
        samples_per_class: 1,
        frames: cfg.frames_per_clip,
        ..SynthConfig::default()
    })
    .unwrap();
    let record = &records[0];
    let forward_perm = |model: &Model, store: &ParamStore<f32>, order: &[usize]| {
        let input = prepare_input::<f32>(record, order).unwrap();
        let mut g = Graph::new();
        let logits = model.forward(&mut g, store, &[input]).unwrap();
        g.value(logits)
            .data()
            .iter()
            .map(|v| *v as f64)
            .collect::<Vec<f64>>()
    };
    let base = forward_perm(&model, &store, &[0, 1, 2, 3]);
    let permutations = [[3usize, 2, 1, 0], [1, 0, 3, 2], [2, 3, 0, 1]];
    for order in &permutations {
        let permuted = forward_perm(&model, &store, order);
        for (a, b) in base.iter().zip(permuted.iter()) {
            assert!(
                (a - b).abs() <= 1e-5,
                "init model moved {:.3e} under permutation",
                (a - b).abs()
            );
        }
    }

    // after training the learned temporal embeddings break the symmetry
    let trained = cached_run(&fast_experiment(ModalityMode::Multimodal, 1, GAIN_EPOCHS));
    let base_t = forward_perm(&trained.model, &trained.store, &[0, 1, 2, 3]);
    let mut max_diff = 0.0f64;
    for order in &permutations {
        let permuted = forward_perm(&trained.model, &trained.store, order);
        for (a, b) in base_t.iter().zip(permuted.iter()) {
            max_diff = max_diff.max((a - b).abs());
        }
    }
    assert!(
        max_diff > 1e-3,
        "trained model is still permutation-invariant (max diff {max_diff:.3e})"
    );
    pass(
        10,
        &format!("permutation-invariant at init; trained model moves {max_diff:.3e} > 1e-3"),
    );
}

// ── criterion 11: file-format golden ────────────────────────────────────

#[test]
fn criterion_11_file_format_golden() {
    let record = SampleRecord {
        id: "golden".to_string(),
        label: 3,
        video: Tensor::new(vec![1, 1, 2, 2], vec![0.0f32, 0.5, -1.5, 2.0]).unwrap(),
        audio: Tensor::new(vec![2, 3], vec![1.0f32, 2.0, 3.0, -4.0, 5.5, -6.25]).unwrap(),
    };
    // hand-assembled golden bytes
    let mut golden = Vec::new();
    golden.extend_from_slice(&[0x4D, 0x4D, 0x41, 0x44]);
    golden.extend_from_slice(&[0x01, 0x00, 0x03, 0x00, 0x02]);
    golden.push(0x04);
    for extent in [1u32, 1, 2, 2] {
        golden.extend_from_slice(&extent.to_le_bytes());
    }
    for v in [0.0f32, 0.5, -1.5, 2.0] {
        golden.extend_from_slice(&v.to_le_bytes());
    }
    golden.push(0x02);
    for extent in [2u32, 3] {
        golden.extend_from_slice(&extent.to_le_bytes());
    }
    for v in [1.0f32, 2.0, 3.0, -4.0, 5.5, -6.25] {
        golden.extend_from_slice(&v.to_le_bytes());
    }
    assert_eq!(sample_to_bytes(&record).unwrap(), golden);

    // three corruption kinds map to their designated errors
    let mut bad_magic = golden.clone();
    bad_magic[1] = 0x00;
    assert!(matches!(
        sample_from_bytes(&bad_magic, "x"),
        Err(Error::BadMagic { .. })
    ));
    let mut bad_version = golden.clone();
    bad_version[4] = 0x09;
    assert!(matches!(
        sample_from_bytes(&bad_version, "x"),
        Err(Error::UnsupportedVersion { found: 9 })
    ));
    let truncated = &golden[..golden.len() - 3];
    assert!(matches!(
        sample_from_bytes(truncated, "x"),
        Err(Error::Truncated { .. })
    ));
    pass(
        11,
        "writer matches the frozen golden; corruptions raise their designated errors",
    );
}
