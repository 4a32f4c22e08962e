//! Experiment configuration, the end-to-end runner, and run reports.
//!
//! A run trains for the full schedule on one fold's training split,
//! evaluates the test split with both the 1-clip and 2-clip protocols,
//! verifies the freeze contract, and writes a JSON report plus two CSVs
//! whose bytes depend only on the config and seed (wall time lives in the
//! JSON only).

use std::path::Path;

use sha2::{Digest, Sha256};

use crate::data::{load_dataset, SampleRecord};
use crate::error::{Error, Result};
use crate::metrics::{compute_metrics, ConfusionMatrix, Metrics};
use crate::model::{trainable_breakdown, Model, ModelConfig, ParamBreakdown};
use crate::optim::{AdamW, OptimConfig, Schedule};
use crate::param::ParamStore;
use crate::scalar::Scalar;
use crate::train::{evaluate, train_epoch, EpochStats};

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    pub schedule: Schedule,
    pub optim: OptimConfig,
    pub batch_size: usize,
    pub dataset_dir: String,
    /// Fold used as the held-out test split, 1..=5.
    pub fold: usize,
    pub seed: u64,
    pub output_dir: String,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        if !(1..=crate::data::FOLD_COUNT).contains(&self.fold) {
            return Err(Error::Config(format!(
                "fold {} outside 1..={}",
                self.fold,
                crate::data::FOLD_COUNT
            )));
        }
        if self.schedule.total_epochs == 0 {
            return Err(Error::Config("schedule needs at least one epoch".into()));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn digest(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        let mut hasher = Sha256::new();
        hasher.update(canonical.as_bytes());
        let digest = hasher.finalize();
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RunReport {
    pub config_digest: String,
    pub seed: u64,
    pub fold: usize,
    pub epochs: Vec<EpochStats>,
    pub metrics_1clip: Metrics,
    pub metrics_2clip: Metrics,
    pub confusion_1clip: Vec<Vec<u64>>,
    pub confusion_2clip: Vec<Vec<u64>>,
    pub params: ParamBreakdown,
    pub train_samples: usize,
    pub test_samples: usize,
    /// Not reproducible across runs; excluded from the CSV outputs.
    pub wall_time_seconds: f64,
}

/// Result of a full run, including the trained weights for callers that
/// keep probing the model afterwards.
pub struct RunOutcome<T> {
    pub report: RunReport,
    pub model: Model,
    pub store: ParamStore<T>,
}

/// Split the loaded records by manifest fold.
pub fn split_records(
    records: &[SampleRecord],
    manifest: &crate::data::DatasetManifest,
    fold: usize,
) -> Result<(Vec<SampleRecord>, Vec<SampleRecord>)> {
    let (train_entries, test_entries) = manifest.split(fold)?;
    let by_id: std::collections::HashMap<&str, &SampleRecord> =
        records.iter().map(|r| (r.id.as_str(), r)).collect();
    let collect = |entries: Vec<&crate::data::ManifestEntry>| -> Result<Vec<SampleRecord>> {
        entries
            .into_iter()
            .map(|e| {
                by_id
                    .get(e.id.as_str())
                    .map(|r| (*r).clone())
                    .ok_or_else(|| Error::Contract(format!("manifest id {} has no record", e.id)))
            })
            .collect()
    };
    Ok((collect(train_entries)?, collect(test_entries)?))
}

/// Train on the fold's training split and evaluate both clip protocols.
pub fn run_experiment<T: Scalar>(cfg: &ExperimentConfig) -> Result<RunOutcome<T>> {
    cfg.validate()?;
    let started = std::time::Instant::now();

    let (records, manifest) = load_dataset(Path::new(&cfg.dataset_dir))?;
    let (train_records, test_records) = split_records(&records, &manifest, cfg.fold)?;
    if train_records.is_empty() || test_records.is_empty() {
        return Err(Error::Contract(
            "fold split produced an empty partition".into(),
        ));
    }

    let (model, plan) = Model::plan(&cfg.model)?;
    let mut store: ParamStore<T> = ParamStore::materialize(&plan, cfg.seed);
    let frozen_before = store.frozen_digest();

    let mut optimizer = AdamW::new(cfg.optim, &store);
    let mut epochs = Vec::with_capacity(cfg.schedule.total_epochs);
    for epoch in 0..cfg.schedule.total_epochs {
        let lr = cfg.schedule.lr_at(epoch as f64)?;
        epochs.push(train_epoch(
            &model,
            &mut store,
            &mut optimizer,
            &train_records,
            cfg.batch_size,
            lr,
            cfg.seed,
            epoch,
        )?);
    }

    if store.frozen_digest() != frozen_before {
        return Err(Error::Contract(
            "freeze contract violated: frozen weights changed during training".into(),
        ));
    }

    let cm1 = evaluate(&model, &store, &test_records, 1)?;
    let cm2 = evaluate(&model, &store, &test_records, 2)?;
    let report = RunReport {
        config_digest: cfg.digest(),
        seed: cfg.seed,
        fold: cfg.fold,
        epochs,
        metrics_1clip: compute_metrics(&cm1)?,
        metrics_2clip: compute_metrics(&cm2)?,
        confusion_1clip: cm1.rows(),
        confusion_2clip: cm2.rows(),
        params: trainable_breakdown(&plan),
        train_samples: train_records.len(),
        test_samples: test_records.len(),
        wall_time_seconds: started.elapsed().as_secs_f64(),
    };
    Ok(RunOutcome {
        report,
        model,
        store,
    })
}

/// Deterministic CSV of the per-epoch losses.
pub fn train_log_csv(report: &RunReport) -> String {
    let mut out = String::from("epoch,mean_loss,lr\n");
    for e in &report.epochs {
        out.push_str(&format!("{},{},{}\n", e.epoch, e.mean_loss, e.lr));
    }
    out
}

/// Deterministic CSV of the final metrics under both clip protocols.
pub fn metrics_csv(report: &RunReport) -> String {
    let mut out = String::from("clips,uar,war\n");
    out.push_str(&format!(
        "1,{},{}\n",
        report.metrics_1clip.uar, report.metrics_1clip.war
    ));
    out.push_str(&format!(
        "2,{},{}\n",
        report.metrics_2clip.uar, report.metrics_2clip.war
    ));
    out
}

/// Persist a report into `dir` (report.json, train_log.csv, metrics.csv).
/// Writing over an existing report from a different config is refused.
pub fn write_report(dir: &Path, report: &RunReport) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let report_path = dir.join("report.json");
    if report_path.exists() {
        let existing: RunReport = serde_json::from_str(&std::fs::read_to_string(&report_path)?)?;
        if existing.config_digest != report.config_digest {
            return Err(Error::Config(format!(
                "output dir {} holds a report for config {}, refusing to overwrite with {}",
                dir.display(),
                existing.config_digest,
                report.config_digest
            )));
        }
    }
    std::fs::write(report_path, serde_json::to_string_pretty(report)?)?;
    std::fs::write(dir.join("train_log.csv"), train_log_csv(report))?;
    std::fs::write(dir.join("metrics.csv"), metrics_csv(report))?;
    Ok(())
}

pub fn read_report(path: &Path) -> Result<RunReport> {
    Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
}

/// Confusion matrix helper for reports.
pub fn confusion_from_rows(rows: &[Vec<u64>]) -> Result<ConfusionMatrix> {
    let k = rows.len();
    let flat: Vec<u64> = rows.iter().flatten().copied().collect();
    ConfusionMatrix::from_counts(k, flat)
}
