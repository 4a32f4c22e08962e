//! Define-by-run computation trace with reverse-mode differentiation.
//!
//! Every operation executes eagerly and records itself on a linear trace;
//! construction order is the topological order, so the backward pass is a
//! single reverse sweep that touches each recorded op exactly once.
//!
//! Determinism contract: all reductions run sequentially over the flattened
//! index (or the stated loop order), inputs are never mutated, and outputs
//! are fresh buffers. Identical inputs therefore produce bit-identical
//! outputs on every run.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::param::{ParamId, ParamStore};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Handle to a value on the trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ValueId(usize);

#[derive(Debug, Clone)]
enum Op<T> {
    Leaf {
        param: Option<ParamId>,
    },
    /// y = xW + b with x: n×i, W: i×o, b: 1×o
    Affine {
        x: ValueId,
        w: ValueId,
        b: ValueId,
    },
    Matmul {
        a: ValueId,
        b: ValueId,
    },
    /// y = A Bᵀ with A: n×k, B: m×k
    MatmulNT {
        a: ValueId,
        b: ValueId,
    },
    Add {
        a: ValueId,
        b: ValueId,
    },
    /// x: n×d plus a 1×d row broadcast over all rows
    AddRow {
        x: ValueId,
        row: ValueId,
    },
    ScaleConst {
        x: ValueId,
        c: T,
    },
    /// y = s·x where s is a 1-element value on the trace
    ScaleByScalar {
        x: ValueId,
        s: ValueId,
    },
    Tanh {
        x: ValueId,
    },
    Gelu {
        x: ValueId,
    },
    SoftmaxRows {
        x: ValueId,
    },
    LayerNorm {
        x: ValueId,
        gamma: ValueId,
        beta: ValueId,
    },
    MeanRows {
        x: ValueId,
    },
    SumAll {
        x: ValueId,
    },
    SliceRows {
        x: ValueId,
        start: usize,
    },
    ConcatRows {
        parts: Vec<ValueId>,
    },
    SliceCols {
        x: ValueId,
        start: usize,
    },
    ConcatCols {
        parts: Vec<ValueId>,
    },
    CrossEntropyMean {
        logits: ValueId,
        targets: Vec<usize>,
    },
}

struct Node<T> {
    op: Op<T>,
    value: Tensor<T>,
    /// Forward-pass cache used by some backward rules (normalized rows,
    /// inverse std, softmax probabilities).
    aux: Vec<T>,
}

/// The recorded trace plus its values.
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
    param_leaves: HashMap<ParamId, ValueId>,
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Graph {
            nodes: Vec::new(),
            param_leaves: HashMap::new(),
        }
    }

    /// Number of recorded values (leaves included).
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: ValueId) -> &Tensor<T> {
        &self.nodes[id.0].value
    }

    fn push(&mut self, op: Op<T>, value: Tensor<T>, aux: Vec<T>) -> ValueId {
        let id = ValueId(self.nodes.len());
        self.nodes.push(Node { op, value, aux });
        id
    }

    /// Record a constant/input leaf.
    pub fn input(&mut self, value: Tensor<T>) -> ValueId {
        self.push(Op::Leaf { param: None }, value, Vec::new())
    }

    /// Record a parameter leaf; repeated uses of the same parameter share
    /// one leaf so gradients accumulate in a single buffer.
    pub fn param(&mut self, store: &ParamStore<T>, id: ParamId) -> ValueId {
        if let Some(v) = self.param_leaves.get(&id) {
            return *v;
        }
        let v = self.push(
            Op::Leaf { param: Some(id) },
            store.value(id).clone(),
            Vec::new(),
        );
        self.param_leaves.insert(id, v);
        v
    }

    fn dims2(&self, id: ValueId, op: &'static str) -> Result<(usize, usize)> {
        self.nodes[id.0].value.dims2().map_err(|_| {
            Error::shape(
                op,
                format!(
                    "expected a matrix, got shape {:?}",
                    self.nodes[id.0].value.shape()
                ),
            )
        })
    }

    // ── linear maps ─────────────────────────────────────────────────────

    pub fn affine(&mut self, x: ValueId, w: ValueId, b: ValueId) -> Result<ValueId> {
        let (n, i) = self.dims2(x, "affine")?;
        let (wi, o) = self.dims2(w, "affine")?;
        let (br, bo) = self.dims2(b, "affine")?;
        if i != wi {
            return Err(Error::shape(
                "affine",
                format!("input {:?} vs weight {:?}", [n, i], [wi, o]),
            ));
        }
        if br != 1 || bo != o {
            return Err(Error::shape(
                "affine",
                format!("bias {:?} vs weight {:?}", [br, bo], [wi, o]),
            ));
        }
        let mut out = vec![T::zero(); n * o];
        mat_mul_into(
            self.nodes[x.0].value.data(),
            n,
            i,
            self.nodes[w.0].value.data(),
            o,
            &mut out,
        );
        let bias = self.nodes[b.0].value.data().to_vec();
        for r in 0..n {
            for c in 0..o {
                out[r * o + c] = out[r * o + c] + bias[c];
            }
        }
        let value = Tensor::new(vec![n, o], out)?;
        Ok(self.push(Op::Affine { x, w, b }, value, Vec::new()))
    }

    pub fn matmul(&mut self, a: ValueId, b: ValueId) -> Result<ValueId> {
        let (n, k) = self.dims2(a, "matmul")?;
        let (kb, m) = self.dims2(b, "matmul")?;
        if k != kb {
            return Err(Error::shape(
                "matmul",
                format!("{:?} vs {:?}", [n, k], [kb, m]),
            ));
        }
        let mut out = vec![T::zero(); n * m];
        mat_mul_into(
            self.nodes[a.0].value.data(),
            n,
            k,
            self.nodes[b.0].value.data(),
            m,
            &mut out,
        );
        let value = Tensor::new(vec![n, m], out)?;
        Ok(self.push(Op::Matmul { a, b }, value, Vec::new()))
    }

    /// a · bᵀ
    pub fn matmul_nt(&mut self, a: ValueId, b: ValueId) -> Result<ValueId> {
        let (n, k) = self.dims2(a, "matmul_nt")?;
        let (m, kb) = self.dims2(b, "matmul_nt")?;
        if k != kb {
            return Err(Error::shape(
                "matmul_nt",
                format!("{:?} vs {:?} (transposed)", [n, k], [m, kb]),
            ));
        }
        let av = self.nodes[a.0].value.data();
        let bv = self.nodes[b.0].value.data();
        let mut out = vec![T::zero(); n * m];
        for i in 0..n {
            let ar = &av[i * k..(i + 1) * k];
            for j in 0..m {
                let br = &bv[j * k..(j + 1) * k];
                let mut acc = T::zero();
                for p in 0..k {
                    acc = acc + ar[p] * br[p];
                }
                out[i * m + j] = acc;
            }
        }
        let value = Tensor::new(vec![n, m], out)?;
        Ok(self.push(Op::MatmulNT { a, b }, value, Vec::new()))
    }

    // ── elementwise and broadcasts ──────────────────────────────────────

    pub fn add(&mut self, a: ValueId, b: ValueId) -> Result<ValueId> {
        if self.nodes[a.0].value.shape() != self.nodes[b.0].value.shape() {
            return Err(Error::shape(
                "add",
                format!(
                    "{:?} vs {:?}",
                    self.nodes[a.0].value.shape(),
                    self.nodes[b.0].value.shape()
                ),
            ));
        }
        let data = self.nodes[a.0]
            .value
            .data()
            .iter()
            .zip(self.nodes[b.0].value.data())
            .map(|(x, y)| *x + *y)
            .collect();
        let value = Tensor::new(self.nodes[a.0].value.shape().to_vec(), data)?;
        Ok(self.push(Op::Add { a, b }, value, Vec::new()))
    }

    pub fn add_row(&mut self, x: ValueId, row: ValueId) -> Result<ValueId> {
        let (n, d) = self.dims2(x, "add_row")?;
        let (rr, rd) = self.dims2(row, "add_row")?;
        if rr != 1 || rd != d {
            return Err(Error::shape(
                "add_row",
                format!("{:?} vs broadcast row {:?}", [n, d], [rr, rd]),
            ));
        }
        let xv = self.nodes[x.0].value.data();
        let rv = self.nodes[row.0].value.data();
        let mut out = Vec::with_capacity(n * d);
        for r in 0..n {
            for c in 0..d {
                out.push(xv[r * d + c] + rv[c]);
            }
        }
        let value = Tensor::new(vec![n, d], out)?;
        Ok(self.push(Op::AddRow { x, row }, value, Vec::new()))
    }

    pub fn scale(&mut self, x: ValueId, c: T) -> ValueId {
        let data = self.nodes[x.0]
            .value
            .data()
            .iter()
            .map(|v| *v * c)
            .collect();
        let value = Tensor::new(self.nodes[x.0].value.shape().to_vec(), data).unwrap();
        self.push(Op::ScaleConst { x, c }, value, Vec::new())
    }

    /// Multiply every element of `x` by the single element of `s`.
    pub fn scale_by(&mut self, x: ValueId, s: ValueId) -> Result<ValueId> {
        if !self.nodes[s.0].value.is_scalar() {
            return Err(Error::Contract(format!(
                "scale_by expects a scalar gate, got shape {:?}",
                self.nodes[s.0].value.shape()
            )));
        }
        let sv = self.nodes[s.0].value.data()[0];
        let data = self.nodes[x.0]
            .value
            .data()
            .iter()
            .map(|v| *v * sv)
            .collect();
        let value = Tensor::new(self.nodes[x.0].value.shape().to_vec(), data)?;
        Ok(self.push(Op::ScaleByScalar { x, s }, value, Vec::new()))
    }

    pub fn tanh(&mut self, x: ValueId) -> ValueId {
        let data = self.nodes[x.0]
            .value
            .data()
            .iter()
            .map(|v| v.tanh())
            .collect();
        let value = Tensor::new(self.nodes[x.0].value.shape().to_vec(), data).unwrap();
        self.push(Op::Tanh { x }, value, Vec::new())
    }

    /// Exact GELU: x·Φ(x) with Φ the standard normal CDF (erf form).
    pub fn gelu(&mut self, x: ValueId) -> ValueId {
        let data = self.nodes[x.0]
            .value
            .data()
            .iter()
            .map(|v| *v * normal_cdf(*v))
            .collect();
        let value = Tensor::new(self.nodes[x.0].value.shape().to_vec(), data).unwrap();
        self.push(Op::Gelu { x }, value, Vec::new())
    }

    // ── row-wise normalizers ────────────────────────────────────────────

    /// Row-wise softmax with max subtraction.
    pub fn softmax_rows(&mut self, x: ValueId) -> Result<ValueId> {
        let (n, d) = self.dims2(x, "softmax_rows")?;
        let xv = self.nodes[x.0].value.data();
        let mut out = vec![T::zero(); n * d];
        for r in 0..n {
            let row = &xv[r * d..(r + 1) * d];
            let mut m = row[0];
            for v in row.iter() {
                if *v > m {
                    m = *v;
                }
            }
            let mut denom = T::zero();
            for (c, v) in row.iter().enumerate() {
                let e = (*v - m).exp();
                out[r * d + c] = e;
                denom = denom + e;
            }
            for c in 0..d {
                out[r * d + c] = out[r * d + c] / denom;
            }
        }
        let value = Tensor::new(vec![n, d], out)?;
        Ok(self.push(Op::SoftmaxRows { x }, value, Vec::new()))
    }

    /// Row-wise layer normalization: zero mean, unit variance per row,
    /// then scale by `gamma` and shift by `beta` (both 1×d).
    pub fn layer_norm(
        &mut self,
        x: ValueId,
        gamma: ValueId,
        beta: ValueId,
        eps: T,
    ) -> Result<ValueId> {
        let (n, d) = self.dims2(x, "layer_norm")?;
        if d == 0 {
            return Err(Error::shape(
                "layer_norm",
                "normalized extent is 0".to_string(),
            ));
        }
        let (gr, gd) = self.dims2(gamma, "layer_norm")?;
        let (br, bd) = self.dims2(beta, "layer_norm")?;
        if gr != 1 || gd != d || br != 1 || bd != d {
            return Err(Error::shape(
                "layer_norm",
                format!(
                    "x {:?} vs gamma {:?}, beta {:?}",
                    [n, d],
                    [gr, gd],
                    [br, bd]
                ),
            ));
        }
        let xv = self.nodes[x.0].value.data();
        let gv = self.nodes[gamma.0].value.data().to_vec();
        let bv = self.nodes[beta.0].value.data().to_vec();
        let inv_d = T::one() / T::from_f64(d as f64);
        let mut out = vec![T::zero(); n * d];
        // aux layout: n*d normalized values, then n inverse std devs
        let mut aux = vec![T::zero(); n * d + n];
        for r in 0..n {
            let row = &xv[r * d..(r + 1) * d];
            let mut mean = T::zero();
            for v in row.iter() {
                mean = mean + *v;
            }
            mean = mean * inv_d;
            let mut var = T::zero();
            for v in row.iter() {
                let c = *v - mean;
                var = var + c * c;
            }
            var = var * inv_d;
            let inv_std = T::one() / (var + eps).sqrt();
            aux[n * d + r] = inv_std;
            for c in 0..d {
                let norm = (row[c] - mean) * inv_std;
                aux[r * d + c] = norm;
                out[r * d + c] = gv[c] * norm + bv[c];
            }
        }
        let value = Tensor::new(vec![n, d], out)?;
        Ok(self.push(Op::LayerNorm { x, gamma, beta }, value, aux))
    }

    // ── reductions and reshapes ─────────────────────────────────────────

    /// Column means over all rows: n×d → 1×d.
    pub fn mean_rows(&mut self, x: ValueId) -> Result<ValueId> {
        let (n, d) = self.dims2(x, "mean_rows")?;
        if n == 0 {
            return Err(Error::Contract(
                "mean_rows over an empty token set is undefined".to_string(),
            ));
        }
        let xv = self.nodes[x.0].value.data();
        let inv_n = T::one() / T::from_f64(n as f64);
        let mut out = vec![T::zero(); d];
        for r in 0..n {
            for c in 0..d {
                out[c] = out[c] + xv[r * d + c];
            }
        }
        for v in out.iter_mut() {
            *v = *v * inv_n;
        }
        let value = Tensor::new(vec![1, d], out)?;
        Ok(self.push(Op::MeanRows { x }, value, Vec::new()))
    }

    /// Sum of every element, sequential over the flattened index.
    pub fn sum_all(&mut self, x: ValueId) -> ValueId {
        let mut acc = T::zero();
        for v in self.nodes[x.0].value.data() {
            acc = acc + *v;
        }
        self.push(Op::SumAll { x }, Tensor::scalar(acc), Vec::new())
    }

    pub fn slice_rows(&mut self, x: ValueId, start: usize, len: usize) -> Result<ValueId> {
        let (n, d) = self.dims2(x, "slice_rows")?;
        if start + len > n {
            return Err(Error::shape(
                "slice_rows",
                format!("rows [{start}, {}) out of 0..{n}", start + len),
            ));
        }
        let xv = self.nodes[x.0].value.data();
        let data = xv[start * d..(start + len) * d].to_vec();
        let value = Tensor::new(vec![len, d], data)?;
        Ok(self.push(Op::SliceRows { x, start }, value, Vec::new()))
    }

    pub fn concat_rows(&mut self, parts: &[ValueId]) -> Result<ValueId> {
        if parts.is_empty() {
            return Err(Error::Contract("concat_rows of zero parts".to_string()));
        }
        let (_, d) = self.dims2(parts[0], "concat_rows")?;
        let mut total = 0usize;
        let mut data = Vec::new();
        for p in parts {
            let (pn, pd) = self.dims2(*p, "concat_rows")?;
            if pd != d {
                return Err(Error::shape(
                    "concat_rows",
                    format!("column mismatch: {pd} vs {d}"),
                ));
            }
            total += pn;
            data.extend_from_slice(self.nodes[p.0].value.data());
        }
        let value = Tensor::new(vec![total, d], data)?;
        Ok(self.push(
            Op::ConcatRows {
                parts: parts.to_vec(),
            },
            value,
            Vec::new(),
        ))
    }

    pub fn slice_cols(&mut self, x: ValueId, start: usize, len: usize) -> Result<ValueId> {
        let (n, d) = self.dims2(x, "slice_cols")?;
        if start + len > d {
            return Err(Error::shape(
                "slice_cols",
                format!("cols [{start}, {}) out of 0..{d}", start + len),
            ));
        }
        let xv = self.nodes[x.0].value.data();
        let mut data = Vec::with_capacity(n * len);
        for r in 0..n {
            data.extend_from_slice(&xv[r * d + start..r * d + start + len]);
        }
        let value = Tensor::new(vec![n, len], data)?;
        Ok(self.push(Op::SliceCols { x, start }, value, Vec::new()))
    }

    pub fn concat_cols(&mut self, parts: &[ValueId]) -> Result<ValueId> {
        if parts.is_empty() {
            return Err(Error::Contract("concat_cols of zero parts".to_string()));
        }
        let (n, _) = self.dims2(parts[0], "concat_cols")?;
        let mut widths = Vec::with_capacity(parts.len());
        let mut total = 0usize;
        for p in parts {
            let (pn, pd) = self.dims2(*p, "concat_cols")?;
            if pn != n {
                return Err(Error::shape(
                    "concat_cols",
                    format!("row mismatch: {pn} vs {n}"),
                ));
            }
            widths.push(pd);
            total += pd;
        }
        let mut data = Vec::with_capacity(n * total);
        for r in 0..n {
            for (p, w) in parts.iter().zip(widths.iter()) {
                let pv = self.nodes[p.0].value.data();
                data.extend_from_slice(&pv[r * w..(r + 1) * w]);
            }
        }
        let value = Tensor::new(vec![n, total], data)?;
        Ok(self.push(
            Op::ConcatCols {
                parts: parts.to_vec(),
            },
            value,
            Vec::new(),
        ))
    }

    // ── loss ────────────────────────────────────────────────────────────

    /// Mean cross-entropy of row-wise logits against integer targets.
    pub fn cross_entropy_mean(&mut self, logits: ValueId, targets: &[usize]) -> Result<ValueId> {
        let (n, k) = self.dims2(logits, "cross_entropy_mean")?;
        if targets.len() != n {
            return Err(Error::Contract(format!(
                "{} targets for {} logit rows",
                targets.len(),
                n
            )));
        }
        if let Some(t) = targets.iter().find(|t| **t >= k) {
            return Err(Error::Contract(format!("target {t} out of {k} classes")));
        }
        let xv = self.nodes[logits.0].value.data();
        let mut probs = vec![T::zero(); n * k];
        let mut total = T::zero();
        for r in 0..n {
            let row = &xv[r * k..(r + 1) * k];
            let mut m = row[0];
            for v in row.iter() {
                if *v > m {
                    m = *v;
                }
            }
            let mut denom = T::zero();
            for (c, v) in row.iter().enumerate() {
                let e = (*v - m).exp();
                probs[r * k + c] = e;
                denom = denom + e;
            }
            for c in 0..k {
                probs[r * k + c] = probs[r * k + c] / denom;
            }
            let lse = m + denom.ln();
            total = total + (lse - row[targets[r]]);
        }
        let loss = total / T::from_f64(n as f64);
        Ok(self.push(
            Op::CrossEntropyMean {
                logits,
                targets: targets.to_vec(),
            },
            Tensor::scalar(loss),
            probs,
        ))
    }

    // ── backward ────────────────────────────────────────────────────────

    /// Reverse sweep from a scalar loss. Gradients of trainable parameter
    /// leaves are accumulated into `store`; frozen parameters receive none.
    pub fn backward(&self, loss: ValueId, store: &mut ParamStore<T>) -> Result<()> {
        if !self.nodes[loss.0].value.is_scalar() {
            return Err(Error::Contract(format!(
                "backward requires a scalar loss, got shape {:?}",
                self.nodes[loss.0].value.shape()
            )));
        }
        let n_nodes = self.nodes.len();
        let mut grads: Vec<Option<Vec<T>>> = vec![None; n_nodes];
        grads[loss.0] = Some(vec![T::one()]);

        for id in (0..n_nodes).rev() {
            let g = match grads[id].take() {
                Some(g) => g,
                None => continue,
            };
            // Split borrows: the node under inspection vs the grad table.
            match &self.nodes[id].op {
                Op::Leaf { param } => {
                    if let Some(pid) = param {
                        if store.is_trainable(*pid) {
                            store.accumulate_grad(*pid, &g);
                        }
                    }
                }
                Op::Affine { x, w, b } => {
                    let (n, i) = self.nodes[x.0].value.dims2()?;
                    let (_, o) = self.nodes[w.0].value.dims2()?;
                    // dx = g Wᵀ
                    let mut gx = vec![T::zero(); n * i];
                    let wv = self.nodes[w.0].value.data();
                    for r in 0..n {
                        for p in 0..i {
                            let mut acc = T::zero();
                            for c in 0..o {
                                acc = acc + g[r * o + c] * wv[p * o + c];
                            }
                            gx[r * i + p] = acc;
                        }
                    }
                    // dW = xᵀ g
                    let xv = self.nodes[x.0].value.data();
                    let mut gw = vec![T::zero(); i * o];
                    for r in 0..n {
                        for p in 0..i {
                            let xrp = xv[r * i + p];
                            for c in 0..o {
                                gw[p * o + c] = gw[p * o + c] + xrp * g[r * o + c];
                            }
                        }
                    }
                    // db = column sums of g
                    let mut gb = vec![T::zero(); o];
                    for r in 0..n {
                        for c in 0..o {
                            gb[c] = gb[c] + g[r * o + c];
                        }
                    }
                    let (x, w, b) = (*x, *w, *b);
                    accumulate(&mut grads, x, gx);
                    accumulate(&mut grads, w, gw);
                    accumulate(&mut grads, b, gb);
                }
                Op::Matmul { a, b } => {
                    let (n, k) = self.nodes[a.0].value.dims2()?;
                    let (_, m) = self.nodes[b.0].value.dims2()?;
                    let av = self.nodes[a.0].value.data();
                    let bv = self.nodes[b.0].value.data();
                    // da = g bᵀ
                    let mut ga = vec![T::zero(); n * k];
                    for r in 0..n {
                        for p in 0..k {
                            let mut acc = T::zero();
                            for c in 0..m {
                                acc = acc + g[r * m + c] * bv[p * m + c];
                            }
                            ga[r * k + p] = acc;
                        }
                    }
                    // db = aᵀ g
                    let mut gb = vec![T::zero(); k * m];
                    for r in 0..n {
                        for p in 0..k {
                            let arp = av[r * k + p];
                            for c in 0..m {
                                gb[p * m + c] = gb[p * m + c] + arp * g[r * m + c];
                            }
                        }
                    }
                    let (a, b) = (*a, *b);
                    accumulate(&mut grads, a, ga);
                    accumulate(&mut grads, b, gb);
                }
                Op::MatmulNT { a, b } => {
                    let (n, k) = self.nodes[a.0].value.dims2()?;
                    let (m, _) = self.nodes[b.0].value.dims2()?;
                    let av = self.nodes[a.0].value.data();
                    let bv = self.nodes[b.0].value.data();
                    // y = a bᵀ: da = g b, db = gᵀ a
                    let mut ga = vec![T::zero(); n * k];
                    mat_mul_into(&g, n, m, bv, k, &mut ga);
                    let mut gb = vec![T::zero(); m * k];
                    for r in 0..n {
                        for j in 0..m {
                            let grj = g[r * m + j];
                            for p in 0..k {
                                gb[j * k + p] = gb[j * k + p] + grj * av[r * k + p];
                            }
                        }
                    }
                    let (a, b) = (*a, *b);
                    accumulate(&mut grads, a, ga);
                    accumulate(&mut grads, b, gb);
                }
                Op::Add { a, b } => {
                    let (a, b) = (*a, *b);
                    accumulate(&mut grads, a, g.clone());
                    accumulate(&mut grads, b, g);
                }
                Op::AddRow { x, row } => {
                    let (n, d) = self.nodes[x.0].value.dims2()?;
                    let mut gr = vec![T::zero(); d];
                    for r in 0..n {
                        for c in 0..d {
                            gr[c] = gr[c] + g[r * d + c];
                        }
                    }
                    let (x, row) = (*x, *row);
                    accumulate(&mut grads, x, g);
                    accumulate(&mut grads, row, gr);
                }
                Op::ScaleConst { x, c } => {
                    let c = *c;
                    let gx = g.iter().map(|v| *v * c).collect();
                    let x = *x;
                    accumulate(&mut grads, x, gx);
                }
                Op::ScaleByScalar { x, s } => {
                    let sv = self.nodes[s.0].value.data()[0];
                    let xv = self.nodes[x.0].value.data();
                    let gx: Vec<T> = g.iter().map(|v| *v * sv).collect();
                    let mut gs = T::zero();
                    for (gv, x) in g.iter().zip(xv.iter()) {
                        gs = gs + *gv * *x;
                    }
                    let (x, s) = (*x, *s);
                    accumulate(&mut grads, x, gx);
                    accumulate(&mut grads, s, vec![gs]);
                }
                Op::Tanh { x } => {
                    let yv = self.nodes[id].value.data();
                    let gx = g
                        .iter()
                        .zip(yv.iter())
                        .map(|(gv, y)| *gv * (T::one() - *y * *y))
                        .collect();
                    let x = *x;
                    accumulate(&mut grads, x, gx);
                }
                Op::Gelu { x } => {
                    let xv = self.nodes[x.0].value.data();
                    let gx = g
                        .iter()
                        .zip(xv.iter())
                        .map(|(gv, v)| *gv * (normal_cdf(*v) + *v * normal_pdf(*v)))
                        .collect();
                    let x = *x;
                    accumulate(&mut grads, x, gx);
                }
                Op::SoftmaxRows { x } => {
                    let (n, d) = self.nodes[id].value.dims2()?;
                    let pv = self.nodes[id].value.data();
                    let mut gx = vec![T::zero(); n * d];
                    for r in 0..n {
                        let mut dot = T::zero();
                        for c in 0..d {
                            dot = dot + g[r * d + c] * pv[r * d + c];
                        }
                        for c in 0..d {
                            gx[r * d + c] = pv[r * d + c] * (g[r * d + c] - dot);
                        }
                    }
                    let x = *x;
                    accumulate(&mut grads, x, gx);
                }
                Op::LayerNorm { x, gamma, beta } => {
                    let (n, d) = self.nodes[x.0].value.dims2()?;
                    let aux = &self.nodes[id].aux;
                    let norm = &aux[..n * d];
                    let inv_std = &aux[n * d..];
                    let gv = self.nodes[gamma.0].value.data();
                    let inv_d = T::one() / T::from_f64(d as f64);
                    let mut gx = vec![T::zero(); n * d];
                    let mut gg = vec![T::zero(); d];
                    let mut gb = vec![T::zero(); d];
                    for r in 0..n {
                        let mut sum_gy = T::zero();
                        let mut sum_gyn = T::zero();
                        for c in 0..d {
                            let gyc = g[r * d + c] * gv[c];
                            sum_gy = sum_gy + gyc;
                            sum_gyn = sum_gyn + gyc * norm[r * d + c];
                        }
                        let mean_gy = sum_gy * inv_d;
                        let mean_gyn = sum_gyn * inv_d;
                        for c in 0..d {
                            let gyc = g[r * d + c] * gv[c];
                            gx[r * d + c] =
                                inv_std[r] * (gyc - mean_gy - norm[r * d + c] * mean_gyn);
                            gg[c] = gg[c] + g[r * d + c] * norm[r * d + c];
                            gb[c] = gb[c] + g[r * d + c];
                        }
                    }
                    let (x, gamma, beta) = (*x, *gamma, *beta);
                    accumulate(&mut grads, x, gx);
                    accumulate(&mut grads, gamma, gg);
                    accumulate(&mut grads, beta, gb);
                }
                Op::MeanRows { x } => {
                    let (n, d) = self.nodes[x.0].value.dims2()?;
                    let inv_n = T::one() / T::from_f64(n as f64);
                    let mut gx = Vec::with_capacity(n * d);
                    for _ in 0..n {
                        for c in 0..d {
                            gx.push(g[c] * inv_n);
                        }
                    }
                    let x = *x;
                    accumulate(&mut grads, x, gx);
                }
                Op::SumAll { x } => {
                    let numel = self.nodes[x.0].value.numel();
                    let gx = vec![g[0]; numel];
                    let x = *x;
                    accumulate(&mut grads, x, gx);
                }
                Op::SliceRows { x, start } => {
                    let (x, start) = (*x, *start);
                    let (_, d) = self.nodes[x.0].value.dims2()?;
                    let numel = self.nodes[x.0].value.numel();
                    let mut gx = vec![T::zero(); numel];
                    gx[start * d..start * d + g.len()].copy_from_slice(&g);
                    accumulate(&mut grads, x, gx);
                }
                Op::ConcatRows { parts } => {
                    let parts = parts.clone();
                    let mut offset = 0usize;
                    for p in parts {
                        let numel = self.nodes[p.0].value.numel();
                        let gp = g[offset..offset + numel].to_vec();
                        offset += numel;
                        accumulate(&mut grads, p, gp);
                    }
                }
                Op::SliceCols { x, start } => {
                    let (x, start) = (*x, *start);
                    let (n, d) = self.nodes[x.0].value.dims2()?;
                    let len = self.nodes[id].value.dims2()?.1;
                    let mut gx = vec![T::zero(); n * d];
                    for r in 0..n {
                        for c in 0..len {
                            gx[r * d + start + c] = g[r * len + c];
                        }
                    }
                    accumulate(&mut grads, x, gx);
                }
                Op::ConcatCols { parts } => {
                    let parts = parts.clone();
                    let n = self.nodes[id].value.dims2()?.0;
                    let total = self.nodes[id].value.dims2()?.1;
                    let mut offset = 0usize;
                    for p in parts {
                        let w = self.nodes[p.0].value.dims2()?.1;
                        let mut gp = Vec::with_capacity(n * w);
                        for r in 0..n {
                            gp.extend_from_slice(&g[r * total + offset..r * total + offset + w]);
                        }
                        offset += w;
                        accumulate(&mut grads, p, gp);
                    }
                }
                Op::CrossEntropyMean { logits, targets } => {
                    let (n, k) = self.nodes[logits.0].value.dims2()?;
                    let probs = &self.nodes[id].aux;
                    let scale = g[0] / T::from_f64(n as f64);
                    let mut gx = vec![T::zero(); n * k];
                    for r in 0..n {
                        for c in 0..k {
                            let indicator = if targets[r] == c { T::one() } else { T::zero() };
                            gx[r * k + c] = scale * (probs[r * k + c] - indicator);
                        }
                    }
                    let logits = *logits;
                    accumulate(&mut grads, logits, gx);
                }
            }
        }
        Ok(())
    }
}

fn accumulate<T: Scalar>(grads: &mut [Option<Vec<T>>], id: ValueId, delta: Vec<T>) {
    match &mut grads[id.0] {
        Some(existing) => {
            debug_assert_eq!(existing.len(), delta.len());
            for (e, d) in existing.iter_mut().zip(delta.into_iter()) {
                *e = *e + d;
            }
        }
        slot @ None => *slot = Some(delta),
    }
}

/// c += a·b with a: n×k, b: k×m (c must be zeroed by the caller). The inner
/// accumulation for each output element runs in ascending `k`, so results
/// are bit-identical to the naive triple loop.
fn mat_mul_into<T: Scalar>(a: &[T], n: usize, k: usize, b: &[T], m: usize, c: &mut [T]) {
    for i in 0..n {
        for p in 0..k {
            let aip = a[i * k + p];
            let brow = &b[p * m..(p + 1) * m];
            let crow = &mut c[i * m..(i + 1) * m];
            for j in 0..m {
                crow[j] = crow[j] + aip * brow[j];
            }
        }
    }
}

fn normal_cdf<T: Scalar>(x: T) -> T {
    let half = T::from_f64(0.5);
    let inv_sqrt2 = T::from_f64(std::f64::consts::FRAC_1_SQRT_2);
    half * (T::one() + (x * inv_sqrt2).erf())
}

fn normal_pdf<T: Scalar>(x: T) -> T {
    let inv_sqrt_2pi = T::from_f64(1.0 / (2.0 * std::f64::consts::PI).sqrt());
    inv_sqrt_2pi * (-(x * x) * T::from_f64(0.5)).exp()
}
