//! Finite-difference gradient verification.
//!
//! The analytic gradients under test come from [`Graph::backward`]; the
//! reference comes from central differences of the same scalar function,
//! evaluated coordinate by coordinate. Both sides share nothing but the
//! forward evaluation, so a disagreement localizes a broken backward rule.

use crate::error::{Error, Result};
use crate::graph::{Graph, ValueId};
use crate::param::{ParamId, ParamStore};
use crate::scalar::Scalar;

/// Worst relative error and where it occurred.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub worst_param: String,
    pub worst_coord: usize,
    pub coords_checked: usize,
}

/// Build-and-evaluate closure: construct the scalar loss on a fresh graph.
pub type LossBuilder<'a, T> = dyn Fn(&mut Graph<T>, &ParamStore<T>) -> Result<ValueId> + 'a;

/// Default step sizes per mode; chosen so truncation and roundoff errors
/// balance for unit-scale functions.
pub fn default_eps<T: Scalar>() -> f64 {
    if T::BITS == 64 {
        3e-3
    } else {
        3e-2
    }
}

/// Evaluate the loss once, without gradients.
fn eval_loss<T: Scalar>(build: &LossBuilder<'_, T>, store: &ParamStore<T>) -> Result<f64> {
    let mut g = Graph::new();
    let loss = build(&mut g, store)?;
    let v = g.value(loss).item()?;
    if !v.is_finite() {
        return Err(Error::Numeric("loss is not finite".to_string()));
    }
    Ok(v.to_f64_exact())
}

/// Richardson-extrapolated central differences with a per-coordinate
/// uncertainty estimate.
///
/// The derivative is (4·D(eps) − D(2·eps)) / 3, cancelling the O(eps²)
/// truncation term; |D(eps) − D(2·eps)| measures how much the two step
/// sizes disagree and serves as the error bar of the estimate itself
/// (dominated by roundoff of the forward evaluation in f32).
pub fn numerical_gradient_with_uncertainty<T: Scalar>(
    build: &LossBuilder<'_, T>,
    store: &mut ParamStore<T>,
    pid: ParamId,
    eps: f64,
) -> Result<Vec<(f64, f64)>> {
    if eps <= 0.0 {
        return Err(Error::Contract(
            "finite-difference eps must be positive".to_string(),
        ));
    }
    let n = store.value(pid).numel();
    let mut grad = Vec::with_capacity(n);
    for i in 0..n {
        let original = store.get(pid).tensor.data()[i];
        let mut probe = |offset: f64| -> Result<f64> {
            store.get_mut(pid).tensor.data_mut()[i] = original + T::from_f64(offset);
            let v = eval_loss(build, store).map_err(|e| {
                Error::Numeric(format!(
                    "non-finite at coordinate {i} (offset {offset:+e}): {e}"
                ))
            });
            store.get_mut(pid).tensor.data_mut()[i] = original;
            v
        };
        let d_small = (probe(eps)? - probe(-eps)?) / (2.0 * eps);
        let d_large = (probe(2.0 * eps)? - probe(-2.0 * eps)?) / (4.0 * eps);
        grad.push(((4.0 * d_small - d_large) / 3.0, (d_small - d_large).abs()));
    }
    Ok(grad)
}

/// Central-difference gradient of the loss with respect to one parameter.
pub fn numerical_gradient<T: Scalar>(
    build: &LossBuilder<'_, T>,
    store: &mut ParamStore<T>,
    pid: ParamId,
    eps: f64,
) -> Result<Vec<f64>> {
    Ok(numerical_gradient_with_uncertainty(build, store, pid, eps)?
        .into_iter()
        .map(|(d, _)| d)
        .collect())
}

fn noise_atol(bits: u32) -> f64 {
    if bits == 64 {
        1e-6
    } else {
        1e-2
    }
}

/// Relative disagreement between analytic and numerical derivatives.
///
/// Coordinates where both sides sit below the mode's noise floor count as
/// agreeing: a central difference of a structurally-zero gradient measures
/// nothing but roundoff (key-bias coordinates under softmax are the classic
/// case). One side large and the other at zero still registers fully.
pub fn relative_error(analytic: f64, numeric: f64, bits: u32) -> f64 {
    relative_error_floored(analytic, numeric, bits, 0.0)
}

/// As [`relative_error`], with an extra denominator floor. The checker
/// passes 1e-3 of the parameter's dominant gradient magnitude, so that
/// coordinates orders of magnitude below the parameter's own scale are
/// measured against that scale rather than against finite-difference noise.
pub fn relative_error_floored(analytic: f64, numeric: f64, bits: u32, floor: f64) -> f64 {
    let atol = noise_atol(bits);
    if analytic.abs() < atol && numeric.abs() < atol {
        return 0.0;
    }
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(floor).max(atol)
}

/// Check analytic gradients of every trainable parameter against central
/// differences; returns the worst relative error found.
pub fn finite_diff_check<T: Scalar>(
    build: &LossBuilder<'_, T>,
    store: &mut ParamStore<T>,
    eps: f64,
) -> Result<GradCheckReport> {
    // Analytic pass.
    store.zero_grads();
    let mut g = Graph::new();
    let loss = build(&mut g, store)?;
    if !g.value(loss).item()?.is_finite() {
        return Err(Error::Numeric("loss is not finite".to_string()));
    }
    g.backward(loss, store)?;

    let analytic: Vec<(ParamId, String, Vec<f64>)> = store
        .iter()
        .filter(|(_, p)| p.trainable)
        .map(|(pid, p)| {
            let grad = match p.tensor.grad() {
                Some(gr) => gr.iter().map(|v| v.to_f64_exact()).collect(),
                None => vec![0.0; p.tensor.numel()],
            };
            (pid, p.name.clone(), grad)
        })
        .collect();

    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        worst_param: String::new(),
        worst_coord: 0,
        coords_checked: 0,
    };
    for (pid, name, an) in analytic {
        let num = numerical_gradient_with_uncertainty(build, store, pid, eps)?;
        let dominant = an
            .iter()
            .zip(num.iter())
            .map(|(a, (d, _))| a.abs() + d.abs())
            .fold(0.0f64, f64::max);
        let floor = dominant * 1e-3;
        for (i, (a, (d, uncertainty))) in an.iter().zip(num.iter()).enumerate() {
            report.coords_checked += 1;
            // disagreement within the reference's own error bar is not
            // evidence against the analytic gradient
            if (a - d).abs() <= 4.0 * *uncertainty {
                continue;
            }
            let rel = relative_error_floored(*a, *d, T::BITS, floor);
            if rel > report.max_rel_err {
                report.max_rel_err = rel;
                report.worst_param = name.clone();
                report.worst_coord = i;
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::param::{Init, ParamPlan};
    use crate::tensor::Tensor;

    #[test]
    fn quadratic_is_nearly_exact_in_f64() {
        // f(w) = w² at w = 3: central differences are exact up to roundoff.
        let mut plan = ParamPlan::new();
        let w = plan.add("w", vec![1, 1], true, Init::Zeros).unwrap();
        let mut store = ParamStore::<f64>::materialize(&plan, 0);
        store.get_mut(w).tensor.data_mut()[0] = 3.0;

        let build = move |g: &mut Graph<f64>, s: &ParamStore<f64>| {
            let wv = g.param(s, w);
            let sq = g.matmul(wv, wv)?;
            Ok(g.sum_all(sq))
        };
        let report = finite_diff_check(&build, &mut store, 1e-4).unwrap();
        assert!(
            report.max_rel_err < 1e-8,
            "quadratic check err {}",
            report.max_rel_err
        );
    }

    #[test]
    fn corrupted_gradient_is_flagged() {
        // Scale the analytic side by 1.5 and the comparison must blow up.
        let analytic = 2.0 * 1.5;
        let numeric = 2.0;
        assert!(relative_error(analytic, numeric, 64) > 0.1);
    }

    #[test]
    fn non_finite_loss_is_reported() {
        let mut plan = ParamPlan::new();
        let w = plan.add("w", vec![1, 1], true, Init::Ones).unwrap();
        let mut store = ParamStore::<f64>::materialize(&plan, 0);
        store.get_mut(w).tensor.data_mut()[0] = 1e308;

        let build = move |g: &mut Graph<f64>, s: &ParamStore<f64>| {
            let wv = g.param(s, w);
            let sq = g.matmul(wv, wv)?; // overflows to +inf
            Ok(g.sum_all(sq))
        };
        let err = numerical_gradient(&build, &mut store, w, 1e-4).unwrap_err();
        assert!(err.to_string().contains("coordinate 0"));
    }

    #[test]
    fn rejects_non_positive_eps() {
        let mut plan = ParamPlan::new();
        let w = plan.add("w", vec![1, 1], true, Init::Ones).unwrap();
        let mut store = ParamStore::<f64>::materialize(&plan, 0);
        let build = move |g: &mut Graph<f64>, s: &ParamStore<f64>| {
            let wv = g.param(s, w);
            Ok(g.sum_all(wv))
        };
        assert!(numerical_gradient(&build, &mut store, w, 0.0).is_err());
        let _ = Tensor::<f64>::zeros(vec![1]);
    }
}
