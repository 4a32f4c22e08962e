//! Frozen unimodal transformer encoders.
//!
//! Both modalities use the same structure: patch projection, a prepended
//! CLS token, learnable positional embeddings, and a stack of pre-norm
//! transformer blocks with a final layer norm. Everything except the
//! positional embeddings is frozen. At toy scale the frozen weights are
//! seeded random stand-ins for pretrained checkpoints; real weights can be
//! dropped in through the named-tensor container (see `data::format`).

use crate::attn::{attention, AttentionParams};
use crate::error::{Error, Result};
use crate::graph::{Graph, ValueId};
use crate::param::{Init, ParamId, ParamPlan, ParamStore};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Gaussian std for the random frozen weights standing in for a checkpoint.
/// Larger than a training-time init on purpose: pretrained weights mix
/// tokens strongly, and the random stand-in only produces class-separable
/// CLS features when attention departs from uniform.
pub const FROZEN_INIT_STD: f64 = 0.2;

/// Layer-norm epsilon used throughout the stack.
pub const LAYER_NORM_EPS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModalityTag {
    Vision,
    Audio,
}

/// Geometry and depth of one encoder.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EncoderConfig {
    pub modality: ModalityTag,
    pub depth: usize,
    pub dim: usize,
    pub heads: usize,
    pub mlp_ratio: usize,
    pub patch_size: usize,
    /// Input grid in patches: rows × cols.
    pub grid_rows: usize,
    pub grid_cols: usize,
    /// Input channels (1 for spectrograms).
    pub channels: usize,
}

impl EncoderConfig {
    pub fn patch_count(&self) -> usize {
        self.grid_rows * self.grid_cols
    }

    /// Flattened patch vector length.
    pub fn patch_dim(&self) -> usize {
        self.channels * self.patch_size * self.patch_size
    }

    /// Tokens after embedding: CLS + patches.
    pub fn token_count(&self) -> usize {
        1 + self.patch_count()
    }

    pub fn validate(&self) -> Result<()> {
        if self.depth == 0 || self.dim == 0 || self.heads == 0 {
            return Err(Error::Config(
                "encoder depth/dim/heads must be positive".into(),
            ));
        }
        if self.dim % self.heads != 0 {
            return Err(Error::Config(format!(
                "dim {} not divisible by {} heads",
                self.dim, self.heads
            )));
        }
        if self.patch_size == 0 || self.grid_rows == 0 || self.grid_cols == 0 || self.channels == 0
        {
            return Err(Error::Config("encoder geometry must be positive".into()));
        }
        Ok(())
    }
}

/// One pre-norm transformer block's weights.
#[derive(Debug, Clone)]
pub struct BlockParams {
    pub ln1_gamma: ParamId,
    pub ln1_beta: ParamId,
    pub attn: AttentionParams,
    pub ln2_gamma: ParamId,
    pub ln2_beta: ParamId,
    pub fc1_w: ParamId,
    pub fc1_b: ParamId,
    pub fc2_w: ParamId,
    pub fc2_b: ParamId,
}

impl BlockParams {
    pub fn plan(
        plan: &mut ParamPlan,
        prefix: &str,
        dim: usize,
        heads: usize,
        mlp_ratio: usize,
        trainable: bool,
        init_std: f64,
    ) -> Result<Self> {
        let hidden = dim * mlp_ratio;
        Ok(BlockParams {
            ln1_gamma: plan.add(
                format!("{prefix}.ln1.gamma"),
                vec![1, dim],
                trainable,
                Init::Ones,
            )?,
            ln1_beta: plan.add(
                format!("{prefix}.ln1.beta"),
                vec![1, dim],
                trainable,
                Init::Zeros,
            )?,
            attn: AttentionParams::plan(
                plan,
                &format!("{prefix}.attn"),
                dim,
                dim,
                dim,
                heads,
                trainable,
                init_std,
            )?,
            ln2_gamma: plan.add(
                format!("{prefix}.ln2.gamma"),
                vec![1, dim],
                trainable,
                Init::Ones,
            )?,
            ln2_beta: plan.add(
                format!("{prefix}.ln2.beta"),
                vec![1, dim],
                trainable,
                Init::Zeros,
            )?,
            fc1_w: plan.add(
                format!("{prefix}.mlp.fc1.w"),
                vec![dim, hidden],
                trainable,
                Init::Normal { std: init_std },
            )?,
            fc1_b: plan.add(
                format!("{prefix}.mlp.fc1.b"),
                vec![1, hidden],
                trainable,
                Init::Zeros,
            )?,
            fc2_w: plan.add(
                format!("{prefix}.mlp.fc2.w"),
                vec![hidden, dim],
                trainable,
                Init::Normal { std: init_std },
            )?,
            fc2_b: plan.add(
                format!("{prefix}.mlp.fc2.b"),
                vec![1, dim],
                trainable,
                Init::Zeros,
            )?,
        })
    }
}

/// Handles to one encoder's weights.
///
/// Positional embeddings are the only trainable entry; they are stored with
/// the CLS position at row 0 followed by the patch grid in row-major order.
#[derive(Debug, Clone)]
pub struct EncoderParams {
    pub cfg: EncoderConfig,
    pub patch_w: ParamId,
    pub patch_b: ParamId,
    pub cls: ParamId,
    pub pos_embed: ParamId,
    pub blocks: Vec<BlockParams>,
    pub final_gamma: ParamId,
    pub final_beta: ParamId,
}

impl EncoderParams {
    pub fn plan(plan: &mut ParamPlan, prefix: &str, cfg: &EncoderConfig) -> Result<Self> {
        cfg.validate()?;
        let d = cfg.dim;
        let mut blocks = Vec::with_capacity(cfg.depth);
        for l in 1..=cfg.depth {
            blocks.push(BlockParams::plan(
                plan,
                &format!("{prefix}.block{l}"),
                d,
                cfg.heads,
                cfg.mlp_ratio,
                false,
                FROZEN_INIT_STD,
            )?);
        }
        Ok(EncoderParams {
            cfg: cfg.clone(),
            patch_w: plan.add(
                format!("{prefix}.patch.w"),
                vec![cfg.patch_dim(), d],
                false,
                Init::Normal {
                    std: FROZEN_INIT_STD,
                },
            )?,
            patch_b: plan.add(format!("{prefix}.patch.b"), vec![1, d], false, Init::Zeros)?,
            cls: plan.add(
                format!("{prefix}.cls"),
                vec![1, d],
                false,
                Init::Normal {
                    std: FROZEN_INIT_STD,
                },
            )?,
            // "interpolate the positional embeddings ... and keep them tunable"
            pos_embed: plan.add(
                format!("{prefix}.pos_embed"),
                vec![cfg.token_count(), d],
                true,
                Init::Normal {
                    std: FROZEN_INIT_STD,
                },
            )?,
            blocks,
            final_gamma: plan.add(
                format!("{prefix}.final.gamma"),
                vec![1, d],
                false,
                Init::Ones,
            )?,
            final_beta: plan.add(
                format!("{prefix}.final.beta"),
                vec![1, d],
                false,
                Init::Zeros,
            )?,
        })
    }
}

/// A vision/audio encoder pair must share depth; the per-layer hook
/// machinery has no meaning otherwise.
pub fn check_depth_compatible(vision: &EncoderConfig, audio: &EncoderConfig) -> Result<()> {
    if vision.depth != audio.depth {
        return Err(Error::Config(format!(
            "encoder depths differ: vision {} vs audio {}",
            vision.depth, audio.depth
        )));
    }
    Ok(())
}

/// Cut a [C, H, W] image (or [F, T] spectrogram as channels=1) into
/// non-overlapping patches: one row per patch, channel-major within a patch.
pub fn extract_patches<T: Scalar>(input: &Tensor<T>, cfg: &EncoderConfig) -> Result<Tensor<T>> {
    let ps = cfg.patch_size;
    let (c, h, w) = match *input.shape() {
        [c, h, w] => (c, h, w),
        [h, w] => (1, h, w),
        ref other => {
            return Err(Error::shape(
                "extract_patches",
                format!("expected [C,H,W] or [H,W], got {other:?}"),
            ))
        }
    };
    if c != cfg.channels {
        return Err(Error::Config(format!(
            "input has {c} channels, encoder expects {}",
            cfg.channels
        )));
    }
    if h % ps != 0 || w % ps != 0 {
        return Err(Error::Config(format!(
            "input {h}x{w} not divisible by patch size {ps}"
        )));
    }
    if h / ps != cfg.grid_rows || w / ps != cfg.grid_cols {
        return Err(Error::Config(format!(
            "input grid {}x{} does not match configured {}x{}",
            h / ps,
            w / ps,
            cfg.grid_rows,
            cfg.grid_cols
        )));
    }
    let data = input.data();
    let mut out = Vec::with_capacity(cfg.patch_count() * cfg.patch_dim());
    for gr in 0..cfg.grid_rows {
        for gc in 0..cfg.grid_cols {
            for ch in 0..c {
                for py in 0..ps {
                    let y = gr * ps + py;
                    let base = ch * h * w + y * w + gc * ps;
                    out.extend_from_slice(&data[base..base + ps]);
                }
            }
        }
    }
    Tensor::new(vec![cfg.patch_count(), cfg.patch_dim()], out)
}

/// Map from patch index to its (row, col) grid cell; each cell appears once.
pub fn patch_index_grid(cfg: &EncoderConfig) -> Vec<(usize, usize)> {
    let mut map = Vec::with_capacity(cfg.patch_count());
    for gr in 0..cfg.grid_rows {
        for gc in 0..cfg.grid_cols {
            map.push((gr, gc));
        }
    }
    map
}

/// Patch-embed an input: project patches, prepend CLS, add positional
/// embeddings. Returns (1 + N) × d tokens.
pub fn patch_embed<T: Scalar>(
    g: &mut Graph<T>,
    store: &ParamStore<T>,
    enc: &EncoderParams,
    input: &Tensor<T>,
) -> Result<ValueId> {
    let patches = extract_patches(input, &enc.cfg)?;
    let p = g.input(patches);
    let w = g.param(store, enc.patch_w);
    let b = g.param(store, enc.patch_b);
    let projected = g.affine(p, w, b)?;
    let cls = g.param(store, enc.cls);
    let with_cls = g.concat_rows(&[cls, projected])?;
    let pos = g.param(store, enc.pos_embed);
    g.add(with_cls, pos)
}

/// One pre-norm block: x + attn(ln(x)), then + mlp(ln(·)).
pub fn block_forward<T: Scalar>(
    g: &mut Graph<T>,
    store: &ParamStore<T>,
    block: &BlockParams,
    tokens: ValueId,
) -> Result<ValueId> {
    let eps = T::from_f64(LAYER_NORM_EPS);
    let g1 = g.param(store, block.ln1_gamma);
    let b1 = g.param(store, block.ln1_beta);
    let normed = g.layer_norm(tokens, g1, b1, eps)?;
    let attended = attention(g, store, &block.attn, normed, normed)?;
    let x = g.add(tokens, attended)?;

    let g2 = g.param(store, block.ln2_gamma);
    let b2 = g.param(store, block.ln2_beta);
    let normed2 = g.layer_norm(x, g2, b2, eps)?;
    let w1 = g.param(store, block.fc1_w);
    let bias1 = g.param(store, block.fc1_b);
    let h = g.affine(normed2, w1, bias1)?;
    let h = g.gelu(h);
    let w2 = g.param(store, block.fc2_w);
    let bias2 = g.param(store, block.fc2_b);
    let mlp_out = g.affine(h, w2, bias2)?;
    g.add(x, mlp_out)
}

/// Final layer norm over all tokens.
pub fn final_norm<T: Scalar>(
    g: &mut Graph<T>,
    store: &ParamStore<T>,
    enc: &EncoderParams,
    tokens: ValueId,
) -> Result<ValueId> {
    let gamma = g.param(store, enc.final_gamma);
    let beta = g.param(store, enc.final_beta);
    g.layer_norm(tokens, gamma, beta, T::from_f64(LAYER_NORM_EPS))
}

/// Bilinear, corner-aligned interpolation of a positional grid
/// [g1, g2, d] → [new_rows, new_cols, d]. The CLS row is handled by the
/// caller and passes through untouched.
pub fn interpolate_pos_grid<T: Scalar>(
    pos: &Tensor<T>,
    new_rows: usize,
    new_cols: usize,
) -> Result<Tensor<T>> {
    let (g1, g2, d) = match *pos.shape() {
        [a, b, c] => (a, b, c),
        ref other => {
            return Err(Error::shape(
                "interpolate_pos_grid",
                format!("expected [rows, cols, dim], got {other:?}"),
            ))
        }
    };
    if g1 == 0 || g2 == 0 || new_rows == 0 || new_cols == 0 {
        return Err(Error::Config("positional grids must be non-empty".into()));
    }
    let src = pos.data();
    let scale = |new_len: usize, old_len: usize, i: usize| -> f64 {
        if new_len == 1 {
            0.0
        } else {
            i as f64 * (old_len - 1) as f64 / (new_len - 1) as f64
        }
    };
    let mut out = Vec::with_capacity(new_rows * new_cols * d);
    for r in 0..new_rows {
        let y = scale(new_rows, g1, r);
        let y0 = y.floor() as usize;
        let y1 = (y0 + 1).min(g1 - 1);
        let fy = T::from_f64(y - y0 as f64);
        for c in 0..new_cols {
            let x = scale(new_cols, g2, c);
            let x0 = x.floor() as usize;
            let x1 = (x0 + 1).min(g2 - 1);
            let fx = T::from_f64(x - x0 as f64);
            for ch in 0..d {
                let v00 = src[(y0 * g2 + x0) * d + ch];
                let v01 = src[(y0 * g2 + x1) * d + ch];
                let v10 = src[(y1 * g2 + x0) * d + ch];
                let v11 = src[(y1 * g2 + x1) * d + ch];
                let top = v00 + (v01 - v00) * fx;
                let bottom = v10 + (v11 - v10) * fx;
                out.push(top + (bottom - top) * fy);
            }
        }
    }
    Tensor::new(vec![new_rows, new_cols, d], out)
}
