//! Learnable prompt tokens with progressive per-depth updates.
//!
//! A bank holds M base prompt tokens appended to the data sequence after
//! embedding, plus one extra token set per hook layer. At the k-th hook the
//! k-th slice of the in-flight prompt rows receives an additive update from
//! its dedicated token set; base and per-depth sets stay separate trainable
//! parameters, only the per-forward working rows change.

use crate::error::{Error, Result};
use crate::graph::{Graph, ValueId};
use crate::param::{Init, ParamId, ParamPlan, ParamStore};
use crate::scalar::Scalar;

/// Gaussian std for prompt initialization.
pub const PROMPT_INIT_STD: f64 = 0.02;

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PromptConfig {
    /// Total learnable prompt tokens per modality (may be 0).
    pub tokens: usize,
    /// Encoder layers (1-based) after which a progressive update fires.
    pub hook_layers: Vec<usize>,
}

impl PromptConfig {
    pub fn none() -> Self {
        PromptConfig {
            tokens: 0,
            hook_layers: Vec::new(),
        }
    }

    /// Rows updated per hook. Zero when there are no hooks (plain prompt
    /// tuning keeps the initial tokens for the whole forward pass).
    pub fn slice_len(&self) -> usize {
        if self.hook_layers.is_empty() {
            0
        } else {
            self.tokens / self.hook_layers.len()
        }
    }

    pub fn validate(&self, depth: usize) -> Result<()> {
        let mut prev = 0usize;
        for l in &self.hook_layers {
            if *l < 1 || *l > depth {
                return Err(Error::Config(format!(
                    "prompt hook layer {l} outside 1..={depth}"
                )));
            }
            if *l <= prev {
                return Err(Error::Config(
                    "prompt hook layers must be strictly increasing".into(),
                ));
            }
            prev = *l;
        }
        if self.tokens == 0 && !self.hook_layers.is_empty() {
            return Err(Error::Config(
                "progressive prompt hooks configured with zero prompt tokens".into(),
            ));
        }
        if !self.hook_layers.is_empty() && self.tokens % self.hook_layers.len() != 0 {
            return Err(Error::Config(format!(
                "{} prompt tokens do not split evenly over {} hooks",
                self.tokens,
                self.hook_layers.len()
            )));
        }
        Ok(())
    }
}

/// Trainable prompt state for one modality.
#[derive(Debug, Clone)]
pub struct PromptBank {
    pub cfg: PromptConfig,
    /// Base prompts, M × d. Absent when M = 0.
    pub base: Option<ParamId>,
    /// Per-hook token sets, each (M / hooks) × d, in hook order.
    pub steps: Vec<ParamId>,
}

impl PromptBank {
    pub fn plan(
        plan: &mut ParamPlan,
        prefix: &str,
        cfg: &PromptConfig,
        dim: usize,
        depth: usize,
    ) -> Result<Self> {
        cfg.validate(depth)?;
        let base = if cfg.tokens > 0 {
            Some(plan.add(
                format!("{prefix}.base"),
                vec![cfg.tokens, dim],
                true,
                Init::Normal {
                    std: PROMPT_INIT_STD,
                },
            )?)
        } else {
            None
        };
        let mut steps = Vec::with_capacity(cfg.hook_layers.len());
        for (k, layer) in cfg.hook_layers.iter().enumerate() {
            steps.push(plan.add(
                format!("{prefix}.step{}_layer{layer}", k + 1),
                vec![cfg.slice_len(), dim],
                true,
                Init::Normal {
                    std: PROMPT_INIT_STD,
                },
            )?);
        }
        Ok(PromptBank {
            cfg: cfg.clone(),
            base,
            steps,
        })
    }

    /// Append the base prompts after the data tokens: n×d → (n+M)×d.
    /// Data token order is unchanged; M = 0 returns the input unchanged.
    pub fn inject<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        store: &ParamStore<T>,
        tokens: ValueId,
    ) -> Result<ValueId> {
        let base = match self.base {
            Some(b) => b,
            None => return Ok(tokens),
        };
        let (_, d) = g.value(tokens).dims2()?;
        let (_, pd) = store.value(base).dims2()?;
        if d != pd {
            return Err(Error::Config(format!(
                "prompt dim {pd} does not match token dim {d}"
            )));
        }
        let p = g.param(store, base);
        g.concat_rows(&[tokens, p])
    }

    /// If `layer` is the k-th hook, add the k-th token set to its slice of
    /// the in-flight prompt rows. Non-hook layers are a no-op by contract.
    pub fn progressive_update<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        store: &ParamStore<T>,
        seq: ValueId,
        layer: usize,
    ) -> Result<ValueId> {
        let k = match self.cfg.hook_layers.iter().position(|l| *l == layer) {
            Some(k) => k,
            None => return Ok(seq),
        };
        let (n, _) = g.value(seq).dims2()?;
        let m = self.cfg.tokens;
        let slice = self.cfg.slice_len();
        if n < m {
            return Err(Error::Contract(format!(
                "sequence of {n} rows cannot hold {m} prompt rows"
            )));
        }
        let prompt_start = n - m;
        let target_start = prompt_start + k * slice;

        let step = g.param(store, self.steps[k]);
        let before = g.slice_rows(seq, 0, target_start)?;
        let rows = g.slice_rows(seq, target_start, slice)?;
        let updated = g.add(rows, step)?;
        let after_len = n - target_start - slice;
        if after_len > 0 {
            let after = g.slice_rows(seq, target_start + slice, after_len)?;
            g.concat_rows(&[before, updated, after])
        } else {
            g.concat_rows(&[before, updated])
        }
    }

    /// Remove the trailing M prompt rows.
    pub fn strip<T: Scalar>(&self, g: &mut Graph<T>, seq: ValueId) -> Result<ValueId> {
        strip_prompts(g, seq, self.cfg.tokens)
    }
}

/// Remove the last `m` rows of a sequence; the sequence must be longer
/// than `m`.
pub fn strip_prompts<T: Scalar>(g: &mut Graph<T>, seq: ValueId, m: usize) -> Result<ValueId> {
    if m == 0 {
        return Ok(seq);
    }
    let (n, _) = g.value(seq).dims2()?;
    if n <= m {
        return Err(Error::Contract(format!(
            "cannot strip {m} prompt rows from a {n}-row sequence"
        )));
    }
    g.slice_rows(seq, 0, n - m)
}
