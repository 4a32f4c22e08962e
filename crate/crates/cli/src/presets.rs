//! Bundled experiment presets.
//!
//! `toy` trains on one CPU in minutes against the default synthetic
//! dataset; `paper_scale` is the full-size configuration and exists for
//! structural checks and parameter accounting (its training time and data
//! are out of reach here). The JSON files under `presets/` mirror these
//! constructors byte for byte; a test keeps them in sync.

use emofuse_core::error::{Error, Result};
use emofuse_core::experiment::ExperimentConfig;
use emofuse_core::model::ModelConfig;
use emofuse_core::optim::{OptimConfig, Schedule};

pub const PRESET_NAMES: [&str; 2] = ["toy", "paper_scale"];

pub fn toy() -> ExperimentConfig {
    ExperimentConfig {
        model: ModelConfig::toy(),
        schedule: Schedule {
            base_lr: 6e-3,
            total_epochs: 25,
        },
        optim: OptimConfig::default(),
        batch_size: 8,
        dataset_dir: "data/synthetic".to_string(),
        fold: 1,
        seed: 1,
        output_dir: "runs/toy".to_string(),
    }
}

pub fn paper_scale() -> ExperimentConfig {
    ExperimentConfig {
        model: ModelConfig::paper_scale(),
        schedule: Schedule::default(),
        optim: OptimConfig::default(),
        batch_size: 8,
        dataset_dir: "data/full".to_string(),
        fold: 1,
        seed: 1,
        output_dir: "runs/paper_scale".to_string(),
    }
}

pub fn by_name(name: &str) -> Result<ExperimentConfig> {
    match name {
        "toy" => Ok(toy()),
        "paper_scale" => Ok(paper_scale()),
        other => Err(Error::Config(format!(
            "unknown preset {other:?}; available: {}",
            PRESET_NAMES.join(", ")
        ))),
    }
}
