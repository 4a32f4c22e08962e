//! Training loop and the evaluation protocol.
//!
//! One epoch shuffles the training set with a seeded permutation, walks it
//! in fixed batches, and applies one AdamW step per batch at the epoch's
//! learning rate. Evaluation samples one uniform clip per video (or two
//! offset clips with averaged logits) and fills a confusion matrix;
//! argmax ties break toward the lower class index.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{prepare_input, sample_frames, ClipMode, SampleRecord};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::metrics::{argmax_tie_low, ConfusionMatrix};
use crate::model::Model;
use crate::optim::AdamW;
use crate::param::ParamStore;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub mean_loss: f64,
    pub lr: f64,
}

/// Deterministic shuffle for one epoch.
pub fn epoch_permutation(n: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut rng =
        ChaCha8Rng::seed_from_u64(seed ^ (epoch as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    let mut indices: Vec<usize> = (0..n).collect();
    indices.shuffle(&mut rng);
    indices
}

/// One pass over the training records. Aborts with the offending batch id
/// if the loss goes non-finite.
#[allow(clippy::too_many_arguments)]
pub fn train_epoch<T: Scalar>(
    model: &Model,
    store: &mut ParamStore<T>,
    optimizer: &mut AdamW<T>,
    records: &[SampleRecord],
    batch_size: usize,
    lr: f64,
    seed: u64,
    epoch: usize,
) -> Result<EpochStats> {
    if records.is_empty() {
        return Err(Error::Contract("training on an empty dataset".into()));
    }
    if batch_size == 0 {
        return Err(Error::Config("batch size must be positive".into()));
    }
    let t = model.cfg.frames_per_clip;
    let order = epoch_permutation(records.len(), seed, epoch);

    let mut loss_sum = 0.0f64;
    let mut sample_count = 0usize;
    for (batch_id, chunk) in order.chunks(batch_size).enumerate() {
        let mut batch = Vec::with_capacity(chunk.len());
        let mut labels = Vec::with_capacity(chunk.len());
        for &idx in chunk {
            let record = &records[idx];
            let clip = &sample_frames(record.video.shape()[0], t, ClipMode::Uniform)?[0];
            batch.push(prepare_input::<T>(record, clip)?);
            labels.push(record.label);
        }
        let mut g = Graph::new();
        let (_, loss) = model.loss(&mut g, store, &batch, &labels)?;
        let loss_value = g.value(loss).item()?.to_f64_exact();
        if !loss_value.is_finite() {
            return Err(Error::Numeric(format!(
                "non-finite loss in epoch {epoch}, batch {batch_id}"
            )));
        }
        store.zero_grads();
        g.backward(loss, store)?;
        optimizer.step(store, lr)?;
        store.zero_grads();

        loss_sum += loss_value * chunk.len() as f64;
        sample_count += chunk.len();
    }
    Ok(EpochStats {
        epoch,
        mean_loss: loss_sum / sample_count as f64,
        lr,
    })
}

const EVAL_BATCH: usize = 8;

/// Evaluate on a record set with the 1- or 2-clip protocol.
pub fn evaluate<T: Scalar>(
    model: &Model,
    store: &ParamStore<T>,
    records: &[SampleRecord],
    clips: u8,
) -> Result<ConfusionMatrix> {
    let mode = match clips {
        1 => ClipMode::Uniform,
        2 => ClipMode::TwoClip,
        other => return Err(Error::Config(format!("clips must be 1 or 2, got {other}"))),
    };
    evaluate_logits(
        |chunk| {
            let t = model.cfg.frames_per_clip;
            let mut per_clip_logits: Vec<Vec<Vec<f64>>> = Vec::new();
            let clip_count = match mode {
                ClipMode::Uniform => 1,
                ClipMode::TwoClip => 2,
            };
            for clip_idx in 0..clip_count {
                let mut batch = Vec::with_capacity(chunk.len());
                for record in chunk {
                    let lists = sample_frames(record.video.shape()[0], t, mode)?;
                    batch.push(prepare_input::<T>(record, &lists[clip_idx])?);
                }
                let mut g = Graph::new();
                let logits = model.forward(&mut g, store, &batch)?;
                per_clip_logits.push(
                    (0..chunk.len())
                        .map(|r| {
                            g.value(logits)
                                .row(r)
                                .iter()
                                .map(|v| v.to_f64_exact())
                                .collect()
                        })
                        .collect(),
                );
            }
            // average logits over clips
            let mut combined = per_clip_logits[0].clone();
            for clip in per_clip_logits.iter().skip(1) {
                for (row, extra) in combined.iter_mut().zip(clip.iter()) {
                    for (a, b) in row.iter_mut().zip(extra.iter()) {
                        *a += *b;
                    }
                }
            }
            let scale = 1.0 / per_clip_logits.len() as f64;
            for row in combined.iter_mut() {
                for v in row.iter_mut() {
                    *v *= scale;
                }
            }
            Ok(combined)
        },
        records,
        model.cfg.num_classes,
    )
}

/// Shared evaluation skeleton: a closure maps a chunk of records to one
/// logit row per record; predictions are argmax with low-index ties.
pub fn evaluate_logits<F>(
    mut logits_for: F,
    records: &[SampleRecord],
    num_classes: usize,
) -> Result<ConfusionMatrix>
where
    F: FnMut(&[SampleRecord]) -> Result<Vec<Vec<f64>>>,
{
    let mut cm = ConfusionMatrix::new(num_classes);
    for chunk in records.chunks(EVAL_BATCH) {
        let logits = logits_for(chunk)?;
        if logits.len() != chunk.len() {
            return Err(Error::Contract(format!(
                "{} logit rows for {} records",
                logits.len(),
                chunk.len()
            )));
        }
        for (record, row) in chunk.iter().zip(logits.iter()) {
            if record.label >= num_classes {
                return Err(Error::Contract(format!(
                    "label {} outside {num_classes} classes",
                    record.label
                )));
            }
            cm.record(record.label, argmax_tie_low(row));
        }
    }
    Ok(cm)
}
