//! AdamW with decoupled weight decay, plus the cosine learning-rate schedule.

use crate::error::{Error, Result};
use crate::param::{ParamId, ParamStore};
use crate::scalar::Scalar;

/// AdamW hyperparameters; defaults are the usual β₁ 0.9 / β₂ 0.999 /
/// eps 1e-8 with decoupled weight decay 1e-2.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for OptimConfig {
    fn default() -> Self {
        OptimConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-2,
        }
    }
}

struct Moments<T> {
    first: Vec<T>,
    second: Vec<T>,
}

/// Optimizer state: moment buffers exist only for trainable parameters.
pub struct AdamW<T> {
    cfg: OptimConfig,
    step: u64,
    moments: Vec<Option<Moments<T>>>,
}

impl<T: Scalar> AdamW<T> {
    pub fn new(cfg: OptimConfig, store: &ParamStore<T>) -> Self {
        let moments = store
            .iter()
            .map(|(_, p)| {
                if p.trainable {
                    Some(Moments {
                        first: vec![T::zero(); p.tensor.numel()],
                        second: vec![T::zero(); p.tensor.numel()],
                    })
                } else {
                    None
                }
            })
            .collect();
        AdamW {
            cfg,
            step: 0,
            moments,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One update over every trainable parameter. Requires a gradient buffer
    /// on each; frozen parameters are untouched by construction.
    pub fn step(&mut self, store: &mut ParamStore<T>, lr: f64) -> Result<()> {
        self.step += 1;
        let t = self.step as i32;
        let beta1 = T::from_f64(self.cfg.beta1);
        let beta2 = T::from_f64(self.cfg.beta2);
        let eps = T::from_f64(self.cfg.eps);
        let lr_t = T::from_f64(lr);
        let decay = T::from_f64(lr * self.cfg.weight_decay);
        let bias1 = T::one() - beta1.powi(t);
        let bias2 = T::one() - beta2.powi(t);

        for idx in 0..self.moments.len() {
            let pid = ParamId(idx);
            let moments = match &mut self.moments[idx] {
                Some(m) => m,
                None => continue,
            };
            let param = store.get_mut(pid);
            debug_assert!(param.trainable);
            let name = param.name.clone();
            let grad = match param.tensor.grad() {
                Some(gr) => gr.to_vec(),
                None => {
                    return Err(Error::Contract(format!(
                        "trainable parameter {name} has no gradient"
                    )))
                }
            };
            let data = param.tensor.data_mut();
            for i in 0..data.len() {
                let g = grad[i];
                moments.first[i] = beta1 * moments.first[i] + (T::one() - beta1) * g;
                moments.second[i] = beta2 * moments.second[i] + (T::one() - beta2) * g * g;
                let m_hat = moments.first[i] / bias1;
                let v_hat = moments.second[i] / bias2;
                // decoupled decay, then the adaptive step
                data[i] = data[i] - decay * data[i] - lr_t * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

/// Cosine annealing from `base_lr` at epoch 0 to exactly 0 at `total_epochs`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Schedule {
    pub base_lr: f64,
    pub total_epochs: usize,
}

impl Default for Schedule {
    fn default() -> Self {
        Schedule {
            base_lr: 1e-4,
            total_epochs: 25,
        }
    }
}

impl Schedule {
    /// lr(e) = base/2 · (1 + cos(π e / total)); `epoch` may be fractional.
    pub fn lr_at(&self, epoch: f64) -> Result<f64> {
        if !(0.0..=self.total_epochs as f64).contains(&epoch) {
            return Err(Error::Contract(format!(
                "epoch {epoch} outside 0..={}",
                self.total_epochs
            )));
        }
        Ok(0.5
            * self.base_lr
            * (1.0 + (std::f64::consts::PI * epoch / self.total_epochs as f64).cos()))
    }
}
