//! Multi-head scaled dot-product attention, composed from graph primitives.
//!
//! Queries and key/value tokens may come from different sequences, which is
//! how the cross-modal attention variants reuse this block.

use crate::error::{Error, Result};
use crate::graph::{Graph, ValueId};
use crate::param::{Init, ParamId, ParamPlan, ParamStore};
use crate::scalar::Scalar;

/// Projection weights for one attention block.
///
/// `inner_dim` is the total attention dimensionality (split across heads);
/// queries/keys/values are projected `in_dim → inner_dim` and the output
/// back `inner_dim → out_dim`.
#[derive(Debug, Clone)]
pub struct AttentionParams {
    pub heads: usize,
    pub wq: ParamId,
    pub bq: ParamId,
    pub wk: ParamId,
    pub bk: ParamId,
    pub wv: ParamId,
    pub bv: ParamId,
    pub wo: ParamId,
    pub bo: ParamId,
}

impl AttentionParams {
    /// Register the eight projection tensors under `prefix`.
    #[allow(clippy::too_many_arguments)]
    pub fn plan(
        plan: &mut ParamPlan,
        prefix: &str,
        in_dim: usize,
        inner_dim: usize,
        out_dim: usize,
        heads: usize,
        trainable: bool,
        init_std: f64,
    ) -> Result<Self> {
        if heads == 0 || inner_dim % heads != 0 {
            return Err(Error::Config(format!(
                "attention dim {inner_dim} not divisible by {heads} heads ({prefix})"
            )));
        }
        let w = |plan: &mut ParamPlan, name: &str, rows: usize, cols: usize| {
            plan.add(
                format!("{prefix}.{name}"),
                vec![rows, cols],
                trainable,
                Init::Normal { std: init_std },
            )
        };
        let b = |plan: &mut ParamPlan, name: &str, cols: usize| {
            plan.add(
                format!("{prefix}.{name}"),
                vec![1, cols],
                trainable,
                Init::Zeros,
            )
        };
        Ok(AttentionParams {
            heads,
            wq: w(plan, "wq", in_dim, inner_dim)?,
            bq: b(plan, "bq", inner_dim)?,
            wk: w(plan, "wk", in_dim, inner_dim)?,
            bk: b(plan, "bk", inner_dim)?,
            wv: w(plan, "wv", in_dim, inner_dim)?,
            bv: b(plan, "bv", inner_dim)?,
            wo: w(plan, "wo", inner_dim, out_dim)?,
            bo: b(plan, "bo", out_dim)?,
        })
    }
}

/// Attention forward: n_q×d queries attend over n_k×d key/value tokens.
/// Scaling is 1/√(inner_dim / heads).
pub fn attention<T: Scalar>(
    g: &mut Graph<T>,
    store: &ParamStore<T>,
    params: &AttentionParams,
    q_tokens: ValueId,
    kv_tokens: ValueId,
) -> Result<ValueId> {
    let inner_dim = store.value(params.wq).dims2()?.1;
    let heads = params.heads;
    if inner_dim % heads != 0 {
        return Err(Error::Config(format!(
            "attention dim {inner_dim} not divisible by {heads} heads"
        )));
    }
    let head_dim = inner_dim / heads;
    let scale = T::from_f64(1.0 / (head_dim as f64).sqrt());

    let wq = g.param(store, params.wq);
    let bq = g.param(store, params.bq);
    let wk = g.param(store, params.wk);
    let bk = g.param(store, params.bk);
    let wv = g.param(store, params.wv);
    let bv = g.param(store, params.bv);
    let wo = g.param(store, params.wo);
    let bo = g.param(store, params.bo);

    let q = g.affine(q_tokens, wq, bq)?;
    let k = g.affine(kv_tokens, wk, bk)?;
    let v = g.affine(kv_tokens, wv, bv)?;

    let mut head_outputs = Vec::with_capacity(heads);
    for h in 0..heads {
        let qh = g.slice_cols(q, h * head_dim, head_dim)?;
        let kh = g.slice_cols(k, h * head_dim, head_dim)?;
        let vh = g.slice_cols(v, h * head_dim, head_dim)?;
        let scores = g.matmul_nt(qh, kh)?;
        let scaled = g.scale(scores, scale);
        let weights = g.softmax_rows(scaled)?;
        head_outputs.push(g.matmul(weights, vh)?);
    }
    let merged = g.concat_cols(&head_outputs)?;
    g.affine(merged, wo, bo)
}
