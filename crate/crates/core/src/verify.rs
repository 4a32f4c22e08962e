//! Finite-difference verification suite over every differentiable
//! operation in the stack.
//!
//! Each fixture builds a small randomized instance at a healthy weight
//! scale and compares the reverse-mode gradients of every trainable
//! parameter against Richardson-extrapolated central differences. The
//! suite runs in either element mode; thresholds are 1e-6 for f64 and
//! 1e-3 for f32.

use crate::attn::{attention, AttentionParams};
use crate::check::{default_eps, finite_diff_check, GradCheckReport};
use crate::encoder::{block_forward, BlockParams};
use crate::error::Result;
use crate::fusion::{FusionConfig, FusionStack, FusionVariant};
use crate::graph::{Graph, ValueId};
use crate::param::{Init, ParamPlan, ParamStore};
use crate::scalar::Scalar;
use crate::temporal::{ItaConfig, ItaStack, TemporalConfig, TemporalHead, TemporalMode};
use crate::tensor::Tensor;

/// Parameter-name predicate for weight matrices (`w`, `wq`, `wk`, ...).
fn is_weight(name: &str) -> bool {
    name.rsplit('.')
        .next()
        .is_some_and(|seg| seg.starts_with('w'))
}

/// Outcome of one fixture.
#[derive(Debug, Clone, serde::Serialize)]
pub struct OpReport {
    pub op: String,
    pub max_rel_err: f64,
    pub threshold: f64,
    pub passed: bool,
    pub coords_checked: usize,
    pub worst_param: String,
}

pub fn threshold_for<T: Scalar>() -> f64 {
    if T::BITS == 64 {
        1e-6
    } else {
        1e-3
    }
}

fn deterministic_rows<T: Scalar>(salt: usize, rows: usize, cols: usize) -> Tensor<T> {
    let data: Vec<T> = (0..rows * cols)
        .map(|i| T::from_f64((((salt * 7919 + i) as f64) * 0.719).sin() * 0.8))
        .collect();
    Tensor::new(vec![rows, cols], data).expect("shape consistent")
}

fn run_fixture<T: Scalar>(
    name: &str,
    store: &mut ParamStore<T>,
    build: &dyn Fn(&mut Graph<T>, &ParamStore<T>) -> Result<ValueId>,
) -> Result<OpReport> {
    let report: GradCheckReport = finite_diff_check(build, store, default_eps::<T>())?;
    let threshold = threshold_for::<T>();
    Ok(OpReport {
        op: name.to_string(),
        max_rel_err: report.max_rel_err,
        threshold,
        passed: report.max_rel_err < threshold,
        coords_checked: report.coords_checked,
        worst_param: report.worst_param,
    })
}

const SCALE: f64 = 0.4;
const DIM: usize = 8;

fn fixture_affine<T: Scalar>() -> Result<OpReport> {
    let mut plan = ParamPlan::new();
    let x = plan.add("x", vec![4, 3], true, Init::Normal { std: 1.0 })?;
    let w = plan.add("w", vec![3, 5], true, Init::Normal { std: SCALE })?;
    let b = plan.add("b", vec![1, 5], true, Init::Normal { std: SCALE })?;
    let mut store = ParamStore::<T>::materialize(&plan, 101);
    run_fixture("affine", &mut store, &move |g, s| {
        let xv = g.param(s, x);
        let wv = g.param(s, w);
        let bv = g.param(s, b);
        let y = g.affine(xv, wv, bv)?;
        let act = g.gelu(y);
        Ok(g.sum_all(act))
    })
}

fn fixture_layer_norm<T: Scalar>() -> Result<OpReport> {
    let mut plan = ParamPlan::new();
    let x = plan.add("x", vec![3, DIM], true, Init::Normal { std: 1.0 })?;
    let gamma = plan.add("gamma", vec![1, DIM], true, Init::Normal { std: 0.5 })?;
    let beta = plan.add("beta", vec![1, DIM], true, Init::Normal { std: 0.5 })?;
    let mut store = ParamStore::<T>::materialize(&plan, 102);
    run_fixture("layer_norm", &mut store, &move |g, s| {
        let xv = g.param(s, x);
        let gv = g.param(s, gamma);
        let bv = g.param(s, beta);
        let y = g.layer_norm(xv, gv, bv, T::from_f64(1e-6))?;
        let act = g.gelu(y);
        Ok(g.sum_all(act))
    })
}

fn fixture_gelu<T: Scalar>() -> Result<OpReport> {
    let mut plan = ParamPlan::new();
    let x = plan.add("x", vec![4, DIM], true, Init::Normal { std: 1.2 })?;
    let mut store = ParamStore::<T>::materialize(&plan, 103);
    run_fixture("gelu", &mut store, &move |g, s| {
        let xv = g.param(s, x);
        let y = g.gelu(xv);
        Ok(g.sum_all(y))
    })
}

fn fixture_softmax<T: Scalar>() -> Result<OpReport> {
    let mut plan = ParamPlan::new();
    let x = plan.add("x", vec![3, DIM], true, Init::Normal { std: 1.0 })?;
    let mut store = ParamStore::<T>::materialize(&plan, 104);
    run_fixture("softmax", &mut store, &move |g, s| {
        let xv = g.param(s, x);
        let p = g.softmax_rows(xv)?;
        // weight rows so the gradient is not constant per row
        let weights = g.input(deterministic_rows::<T>(4, 3, DIM));
        let weighted = g.matmul_nt(p, weights)?;
        let act = g.gelu(weighted);
        Ok(g.sum_all(act))
    })
}

fn fixture_attention<T: Scalar>() -> Result<OpReport> {
    let mut plan = ParamPlan::new();
    let params = AttentionParams::plan(&mut plan, "attn", DIM, DIM, DIM, 2, true, SCALE)?;
    let x = plan.add("x", vec![3, DIM], true, Init::Normal { std: 0.7 })?;
    let mut store = ParamStore::<T>::materialize(&plan, 105);
    run_fixture("attention", &mut store, &move |g, s| {
        let xv = g.param(s, x);
        let y = attention(g, s, &params, xv, xv)?;
        let act = g.gelu(y);
        Ok(g.sum_all(act))
    })
}

fn fixture_encoder_block<T: Scalar>() -> Result<OpReport> {
    // gentler scale than the other fixtures: the full block chains enough
    // f32 roundings that 0.4-scale weights leave no margin under 1e-3
    let mut plan = ParamPlan::new();
    let block = BlockParams::plan(&mut plan, "block", DIM, 2, 2, true, 0.2)?;
    let x = plan.add("x", vec![4, DIM], true, Init::Normal { std: 0.8 })?;
    let mut store = ParamStore::<T>::materialize(&plan, 106);
    run_fixture("encoder_block", &mut store, &move |g, s| {
        let xv = g.param(s, x);
        let y = block_forward(g, s, &block, xv)?;
        let act = g.gelu(y);
        Ok(g.sum_all(act))
    })
}

fn fusion_cfg(variant: FusionVariant) -> FusionConfig {
    FusionConfig {
        variant,
        hook_layers: vec![1],
        latent_dim: 4,
        mult_attn_dim: 4,
        mult_heads: 2,
        concat_heads: 2,
        concat_ffn_ratio: 2,
        pool_includes_cls: true,
        include_prompt_tokens: true,
    }
}

fn fixture_fusion<T: Scalar>(variant: FusionVariant, name: &str) -> Result<OpReport> {
    let mut plan = ParamPlan::new();
    let stack = FusionStack::plan(&mut plan, &fusion_cfg(variant), DIM, 12)?;
    let mut store = ParamStore::<T>::materialize(&plan, 107);
    // move every gate off zero and give projections a healthy scale; the
    // attention-based variant chains the most f32 roundings, so it gets a
    // gentler scale
    let scale = match variant {
        FusionVariant::Mult => 0.1,
        FusionVariant::MultConcat => 0.15,
        _ => SCALE,
    };
    let updates: Vec<_> = store.iter().map(|(i, p)| (i, p.name.clone())).collect();
    for (pid, pname) in updates {
        if pname.ends_with(".gate") {
            store.get_mut(pid).tensor.data_mut()[0] = T::from_f64(0.5);
        } else if is_weight(&pname) {
            for v in store.get_mut(pid).tensor.data_mut() {
                *v = *v * T::from_f64(scale / 0.02);
            }
        }
    }
    run_fixture(name, &mut store, &move |g, s| {
        let f0 = g.input(deterministic_rows::<T>(1, 2, DIM));
        let f1 = g.input(deterministic_rows::<T>(2, 2, DIM));
        let a = g.input(deterministic_rows::<T>(3, 3, DIM));
        let (out_f, out_a) = stack.apply(g, s, 0, &[f0, f1], a, 0, 0)?;
        let mut parts = out_f;
        parts.push(out_a);
        let all = g.concat_rows(&parts)?;
        let act = g.gelu(all);
        Ok(g.sum_all(act))
    })
}

fn fixture_jam_mtt<T: Scalar>() -> Result<OpReport> {
    let cfg = TemporalConfig {
        head_dim: DIM,
        heads: 2,
        ffn_ratio: 2,
        mode: TemporalMode::Mtt,
        ita: None,
    };
    let mut plan = ParamPlan::new();
    let head = TemporalHead::plan(&mut plan, &cfg, 6, 3)?;
    let x = plan.add("x", vec![3, 6], true, Init::Normal { std: 0.8 })?;
    let mut store = ParamStore::<T>::materialize(&plan, 108);
    let updates: Vec<_> = store
        .iter()
        .filter(|(_, p)| is_weight(&p.name) || p.name == "temporal.mtt.cls")
        .map(|(i, _)| i)
        .collect();
    for pid in updates {
        for v in store.get_mut(pid).tensor.data_mut() {
            *v = *v * T::from_f64(SCALE / 0.02);
        }
    }
    run_fixture("jam_mtt", &mut store, &move |g, s| {
        let xv = g.param(s, x);
        let adapted = head.adapt(g, s, xv)?;
        let feature = head.head_feature(g, s, adapted)?;
        let act = g.gelu(feature);
        Ok(g.sum_all(act))
    })
}

fn fixture_ita<T: Scalar>() -> Result<OpReport> {
    let cfg = ItaConfig { dim: 4, heads: 2 };
    let mut plan = ParamPlan::new();
    let stack = ItaStack::plan(&mut plan, &cfg, DIM, &[1], None)?;
    let mut store = ParamStore::<T>::materialize(&plan, 109);
    let updates: Vec<_> = store
        .iter()
        .filter(|(_, p)| is_weight(&p.name))
        .map(|(i, _)| i)
        .collect();
    for pid in updates {
        for v in store.get_mut(pid).tensor.data_mut() {
            *v = *v * T::from_f64(0.1 / 0.02);
        }
    }
    run_fixture("ita", &mut store, &move |g, s| {
        let frames: Vec<ValueId> = (0..2)
            .map(|i| g.input(deterministic_rows::<T>(10 + i, 2, DIM)))
            .collect();
        let out = stack.apply(g, s, 0, &frames, None)?;
        let all = g.concat_rows(&out)?;
        let act = g.gelu(all);
        Ok(g.sum_all(act))
    })
}

fn fixture_cross_entropy<T: Scalar>() -> Result<OpReport> {
    let mut plan = ParamPlan::new();
    let x = plan.add("logits", vec![4, 5], true, Init::Normal { std: 1.0 })?;
    let mut store = ParamStore::<T>::materialize(&plan, 110);
    run_fixture("cross_entropy", &mut store, &move |g, s| {
        let xv = g.param(s, x);
        g.cross_entropy_mean(xv, &[0, 3, 2, 4])
    })
}

/// Run every fixture in the given element mode.
pub fn run_suite<T: Scalar>() -> Result<Vec<OpReport>> {
    Ok(vec![
        fixture_affine::<T>()?,
        fixture_layer_norm::<T>()?,
        fixture_gelu::<T>()?,
        fixture_softmax::<T>()?,
        fixture_attention::<T>()?,
        fixture_encoder_block::<T>()?,
        fixture_fusion::<T>(FusionVariant::Bottleneck, "fusion_bottleneck")?,
        fixture_fusion::<T>(FusionVariant::Add, "fusion_add")?,
        fixture_fusion::<T>(FusionVariant::Mult, "fusion_mult")?,
        fixture_fusion::<T>(FusionVariant::MultConcat, "fusion_mult_concat")?,
        fixture_jam_mtt::<T>()?,
        fixture_ita::<T>()?,
        fixture_cross_entropy::<T>()?,
    ])
}
