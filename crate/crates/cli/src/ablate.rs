//! Ablation suites: enumerate a variant grid, train each variant on the
//! same fold and seed, and tabulate the recall metrics next to the
//! trainable-parameter count.

use emofuse_core::error::{Error, Result};
use emofuse_core::experiment::{run_experiment, ExperimentConfig};
use emofuse_core::fusion::FusionVariant;
use emofuse_core::model::{trainable_breakdown, ModalityMode, Model};
use emofuse_core::temporal::{ItaConfig, TemporalMode};

#[derive(Debug, Clone, serde::Serialize)]
pub struct AblationRow {
    pub variant: String,
    pub uar_1clip: f64,
    pub war_1clip: f64,
    pub uar_2clip: f64,
    pub war_2clip: f64,
    pub trainable_params: usize,
}

pub const SUITE_NAMES: [&str; 5] = ["fusion", "temporal", "prompts", "latent", "modality"];

/// Evenly spaced progressive-prompt hook layers starting at layer 1.
pub fn hooks_for_count(depth: usize, count: usize) -> Result<Vec<usize>> {
    if count == 0 {
        return Ok(Vec::new());
    }
    if count > depth {
        return Err(Error::Config(format!(
            "{count} prompt hooks cannot fit a depth-{depth} encoder"
        )));
    }
    let hooks: Vec<usize> = (0..count).map(|i| 1 + i * depth / count).collect();
    for pair in hooks.windows(2) {
        if pair[1] <= pair[0] {
            return Err(Error::Config(format!(
                "depth {depth} cannot accommodate {count} distinct hook layers"
            )));
        }
    }
    Ok(hooks)
}

/// Build the variant grid for one suite.
pub fn variant_grid(
    suite: &str,
    base: &ExperimentConfig,
    latent_dims: Option<Vec<usize>>,
) -> Result<Vec<(String, ExperimentConfig)>> {
    let mut out = Vec::new();
    match suite {
        "fusion" => {
            for (label, variant) in [
                ("none", FusionVariant::None),
                ("mult", FusionVariant::Mult),
                ("mult-concat", FusionVariant::MultConcat),
                ("add", FusionVariant::Add),
                ("bottleneck", FusionVariant::Bottleneck),
            ] {
                let mut cfg = base.clone();
                cfg.model.fusion.variant = variant;
                out.push((label.to_string(), cfg));
            }
        }
        "temporal" => {
            let grid: [(&str, TemporalMode, Option<usize>); 5] = [
                ("ita-64", TemporalMode::MeanPool, Some(64)),
                ("ita-128", TemporalMode::MeanPool, Some(128)),
                ("ita-256", TemporalMode::MeanPool, Some(256)),
                ("mtt+ita-128", TemporalMode::Mtt, Some(128)),
                ("mtt", TemporalMode::Mtt, None),
            ];
            for (label, mode, ita_dim) in grid {
                let mut cfg = base.clone();
                cfg.model.temporal.mode = mode;
                cfg.model.temporal.ita = ita_dim.map(|dim| ItaConfig { dim, heads: 2 });
                out.push((label.to_string(), cfg));
            }
        }
        "prompts" => {
            // per-hook token-set size stays fixed; the total prompt count
            // scales with the number of progressive updates
            let slice = if base.model.prompts.hook_layers.is_empty() {
                3
            } else {
                (base.model.prompts.tokens / base.model.prompts.hook_layers.len()).max(1)
            };
            for count in [0usize, 2, 4, 6, 12] {
                let mut cfg = base.clone();
                cfg.model.prompts.hook_layers = hooks_for_count(cfg.model.depth, count)?;
                cfg.model.prompts.tokens = slice * count;
                out.push((count.to_string(), cfg));
            }
        }
        "latent" => {
            let dims = latent_dims.unwrap_or_else(|| vec![64, 128, 256, 512]);
            for dim in dims {
                let mut cfg = base.clone();
                cfg.model.fusion.variant = FusionVariant::Bottleneck;
                cfg.model.fusion.latent_dim = dim;
                out.push((dim.to_string(), cfg));
            }
        }
        "modality" => {
            for (label, modality) in [
                ("audio-only", ModalityMode::AudioOnly),
                ("vision-only", ModalityMode::VisionOnly),
                ("multimodal", ModalityMode::Multimodal),
            ] {
                let mut cfg = base.clone();
                cfg.model.modality = modality;
                if modality != ModalityMode::Multimodal {
                    cfg.model.fusion = emofuse_core::fusion::FusionConfig::none();
                    cfg.model.temporal.ita = None;
                }
                out.push((label.to_string(), cfg));
            }
        }
        other => {
            return Err(Error::Config(format!(
                "unknown suite {other:?}; available: {}",
                SUITE_NAMES.join(", ")
            )))
        }
    }
    Ok(out)
}

/// Train every variant and collect one row each.
pub fn run_suite(
    suite: &str,
    base: &ExperimentConfig,
    latent_dims: Option<Vec<usize>>,
) -> Result<Vec<AblationRow>> {
    let grid = variant_grid(suite, base, latent_dims)?;
    // validate the whole grid before burning time on training
    for (label, cfg) in &grid {
        cfg.validate()
            .map_err(|e| Error::Config(format!("variant {label}: {e}")))?;
    }
    let mut rows = Vec::with_capacity(grid.len());
    for (label, cfg) in grid {
        let (_, plan) = Model::plan(&cfg.model)?;
        let params = trainable_breakdown(&plan).total;
        let outcome = run_experiment::<f32>(&cfg)?;
        rows.push(AblationRow {
            variant: label,
            uar_1clip: outcome.report.metrics_1clip.uar,
            war_1clip: outcome.report.metrics_1clip.war,
            uar_2clip: outcome.report.metrics_2clip.uar,
            war_2clip: outcome.report.metrics_2clip.war,
            trainable_params: params,
        });
    }
    Ok(rows)
}

pub fn rows_to_csv(rows: &[AblationRow]) -> String {
    let mut out =
        String::from("variant,uar_1clip,war_1clip,uar_2clip,war_2clip,trainable_params\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.variant, r.uar_1clip, r.war_1clip, r.uar_2clip, r.war_2clip, r.trainable_params
        ));
    }
    out
}
