//! Temporal head: per-frame CLS assembly, joint adapter, and the one-layer
//! temporal transformer that reads the whole multimodal sequence.
//!
//! Frames travel through the encoders independently; here their CLS tokens
//! are regrouped per video, the audio CLS is added to every frame position,
//! a single affine (the joint adapter) maps into the head dimension, and a
//! transformer block over learnable temporal embeddings plus a fresh CLS
//! produces the classification feature. The mean-pool head (classify the
//! averaged adapted features) and the intermediate temporal adaptors (ITA)
//! are the ablation alternatives.

use crate::attn::{attention, AttentionParams};
use crate::encoder::{block_forward, BlockParams, LAYER_NORM_EPS};
use crate::error::{Error, Result};
use crate::fusion::BottleneckBlock;
use crate::graph::{Graph, ValueId};
use crate::param::{Init, ParamId, ParamPlan, ParamStore};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemporalMode {
    /// Temporal transformer over the frame sequence (the default head).
    Mtt,
    /// Classify the mean of the adapted features; no temporal block.
    MeanPool,
}

/// Intermediate temporal adaptor: temporal self-attention over frame CLS
/// tokens at every fusion hook.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ItaConfig {
    pub dim: usize,
    pub heads: usize,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TemporalConfig {
    /// Head dimension d_t shared by the adapter output and the temporal block.
    pub head_dim: usize,
    pub heads: usize,
    pub ffn_ratio: usize,
    pub mode: TemporalMode,
    pub ita: Option<ItaConfig>,
}

impl TemporalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.head_dim == 0 || self.heads == 0 {
            return Err(Error::Config(
                "temporal head dim/heads must be positive".into(),
            ));
        }
        if self.head_dim % self.heads != 0 {
            return Err(Error::Config(format!(
                "temporal head dim {} not divisible by {} heads",
                self.head_dim, self.heads
            )));
        }
        if let Some(ita) = &self.ita {
            if ita.dim == 0 || ita.heads == 0 || ita.dim % ita.heads != 0 {
                return Err(Error::Config(format!(
                    "ita dim {} not divisible by {} heads",
                    ita.dim, ita.heads
                )));
            }
        }
        Ok(())
    }
}

const HEAD_INIT_STD: f64 = 0.02;

/// Weights of the temporal transformer head (absent in mean-pool mode).
#[derive(Debug, Clone)]
pub struct MttParams {
    /// Learnable per-position embeddings, initialized to zero so the head
    /// starts exactly permutation-invariant.
    pub temporal_embed: ParamId,
    pub head_cls: ParamId,
    pub block: BlockParams,
    pub final_gamma: ParamId,
    pub final_beta: ParamId,
}

#[derive(Debug, Clone)]
pub struct TemporalHead {
    pub cfg: TemporalConfig,
    pub jam_w: ParamId,
    pub jam_b: ParamId,
    pub mtt: Option<MttParams>,
}

impl TemporalHead {
    /// `seq_len` is the length of the temporal sequence this head will see
    /// (the frame count, or 1 for an audio-only model).
    pub fn plan(
        plan: &mut ParamPlan,
        cfg: &TemporalConfig,
        encoder_dim: usize,
        seq_len: usize,
    ) -> Result<Self> {
        cfg.validate()?;
        if seq_len == 0 {
            return Err(Error::Config(
                "temporal sequence length must be positive".into(),
            ));
        }
        let dt = cfg.head_dim;
        let jam_w = plan.add(
            "temporal.jam.w",
            vec![encoder_dim, dt],
            true,
            Init::Normal { std: HEAD_INIT_STD },
        )?;
        let jam_b = plan.add("temporal.jam.b", vec![1, dt], true, Init::Zeros)?;
        let mtt = match cfg.mode {
            TemporalMode::MeanPool => None,
            TemporalMode::Mtt => Some(MttParams {
                temporal_embed: plan.add(
                    "temporal.mtt.temporal_embed",
                    vec![seq_len, dt],
                    true,
                    Init::Zeros,
                )?,
                head_cls: plan.add(
                    "temporal.mtt.cls",
                    vec![1, dt],
                    true,
                    Init::Normal { std: HEAD_INIT_STD },
                )?,
                block: BlockParams::plan(
                    plan,
                    "temporal.mtt.block",
                    dt,
                    cfg.heads,
                    cfg.ffn_ratio,
                    true,
                    HEAD_INIT_STD,
                )?,
                final_gamma: plan.add("temporal.mtt.final.gamma", vec![1, dt], true, Init::Ones)?,
                final_beta: plan.add("temporal.mtt.final.beta", vec![1, dt], true, Init::Zeros)?,
            }),
        };
        Ok(TemporalHead {
            cfg: cfg.clone(),
            jam_w,
            jam_b,
            mtt,
        })
    }

    /// Joint adapter: one affine map applied per token, d → d_t.
    pub fn adapt<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        store: &ParamStore<T>,
        seq: ValueId,
    ) -> Result<ValueId> {
        let w = g.param(store, self.jam_w);
        let b = g.param(store, self.jam_b);
        g.affine(seq, w, b)
    }

    /// Head feature for one sample's adapted sequence (t × d_t → 1 × d_t).
    pub fn head_feature<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        store: &ParamStore<T>,
        adapted: ValueId,
    ) -> Result<ValueId> {
        match (&self.cfg.mode, &self.mtt) {
            (TemporalMode::MeanPool, _) => g.mean_rows(adapted),
            (TemporalMode::Mtt, Some(mtt)) => {
                let (n, _) = g.value(adapted).dims2()?;
                let (temb_len, _) = store.value(mtt.temporal_embed).dims2()?;
                if n != temb_len {
                    return Err(Error::Config(format!(
                        "temporal sequence of {n} frames does not match {temb_len} temporal embeddings"
                    )));
                }
                let temb = g.param(store, mtt.temporal_embed);
                let with_time = g.add(adapted, temb)?;
                let cls = g.param(store, mtt.head_cls);
                let seq = g.concat_rows(&[cls, with_time])?;
                let transformed = block_forward(g, store, &mtt.block, seq)?;
                let gamma = g.param(store, mtt.final_gamma);
                let beta = g.param(store, mtt.final_beta);
                let normed = g.layer_norm(transformed, gamma, beta, T::from_f64(LAYER_NORM_EPS))?;
                g.slice_rows(normed, 0, 1)
            }
            (TemporalMode::Mtt, None) => Err(Error::Contract(
                "temporal transformer head requested but not planned".into(),
            )),
        }
    }
}

/// Gather the CLS token (row 0) of each frame sequence of one video into a
/// t × d matrix, adding the audio CLS to every position when present.
pub fn assemble_temporal<T: Scalar>(
    g: &mut Graph<T>,
    frame_seqs: &[ValueId],
    audio_cls: Option<ValueId>,
) -> Result<ValueId> {
    if frame_seqs.is_empty() {
        return Err(Error::Contract("temporal assembly of zero frames".into()));
    }
    let mut cls_rows = Vec::with_capacity(frame_seqs.len());
    for f in frame_seqs {
        cls_rows.push(g.slice_rows(*f, 0, 1)?);
    }
    let seq = if cls_rows.len() == 1 {
        cls_rows[0]
    } else {
        g.concat_rows(&cls_rows)?
    };
    match audio_cls {
        Some(a) => g.add_row(seq, a),
        None => Ok(seq),
    }
}

/// Batch-level CLS assembly: `frame_seqs` holds B·t sequences grouped by
/// video; returns one t × d matrix per video.
pub fn assemble_temporal_batch<T: Scalar>(
    g: &mut Graph<T>,
    frame_seqs: &[ValueId],
    audio_cls: &[Option<ValueId>],
    frames_per_video: usize,
) -> Result<Vec<ValueId>> {
    if frames_per_video == 0 || frame_seqs.len() % frames_per_video != 0 {
        return Err(Error::Contract(format!(
            "{} frame sequences do not divide into videos of {frames_per_video} frames",
            frame_seqs.len()
        )));
    }
    let videos = frame_seqs.len() / frames_per_video;
    if audio_cls.len() != videos {
        return Err(Error::Contract(format!(
            "{} audio CLS entries for {videos} videos",
            audio_cls.len()
        )));
    }
    let mut out = Vec::with_capacity(videos);
    for b in 0..videos {
        let chunk = &frame_seqs[b * frames_per_video..(b + 1) * frames_per_video];
        out.push(assemble_temporal(g, chunk, audio_cls[b])?);
    }
    Ok(out)
}

/// One intermediate temporal adaptor block.
///
/// When its dimensionality equals the colocated bottleneck's latent size,
/// the bottleneck's own vision compression/expansion maps carry the CLS
/// tokens in and out and no extra projections exist — matching the
/// parameter advantage that configuration has.
#[derive(Debug, Clone)]
pub struct ItaBlock {
    pub down: Option<(ParamId, ParamId)>,
    pub up: Option<(ParamId, ParamId)>,
    pub attn: AttentionParams,
}

#[derive(Debug, Clone)]
pub struct ItaStack {
    pub cfg: ItaConfig,
    pub encoder_dim: usize,
    /// Reuse the colocated bottleneck's projections (dim == latent_dim).
    pub reuse_bottleneck: bool,
    pub blocks: Vec<ItaBlock>,
}

impl ItaStack {
    /// One block per fusion hook layer; `bottleneck_latent` is the fusion
    /// latent size when the bottleneck variant is active.
    pub fn plan(
        plan: &mut ParamPlan,
        cfg: &ItaConfig,
        encoder_dim: usize,
        hook_layers: &[usize],
        bottleneck_latent: Option<usize>,
    ) -> Result<Self> {
        if hook_layers.is_empty() {
            return Err(Error::Config(
                "intermediate temporal adaptors require fusion hook layers to attach to".into(),
            ));
        }
        let reuse = bottleneck_latent == Some(cfg.dim);
        let mut blocks = Vec::with_capacity(hook_layers.len());
        for l in hook_layers {
            let prefix = format!("temporal.ita.hook{l}");
            let (down, up) = if cfg.dim == encoder_dim || reuse {
                (None, None)
            } else {
                (
                    Some((
                        plan.add(
                            format!("{prefix}.down.w"),
                            vec![encoder_dim, cfg.dim],
                            true,
                            Init::Normal { std: HEAD_INIT_STD },
                        )?,
                        plan.add(
                            format!("{prefix}.down.b"),
                            vec![1, cfg.dim],
                            true,
                            Init::Zeros,
                        )?,
                    )),
                    Some((
                        plan.add(
                            format!("{prefix}.up.w"),
                            vec![cfg.dim, encoder_dim],
                            true,
                            Init::Normal { std: HEAD_INIT_STD },
                        )?,
                        plan.add(
                            format!("{prefix}.up.b"),
                            vec![1, encoder_dim],
                            true,
                            Init::Zeros,
                        )?,
                    )),
                )
            };
            blocks.push(ItaBlock {
                down,
                up,
                attn: AttentionParams::plan(
                    plan,
                    &format!("{prefix}.attn"),
                    cfg.dim,
                    cfg.dim,
                    cfg.dim,
                    cfg.heads,
                    true,
                    HEAD_INIT_STD,
                )?,
            });
        }
        Ok(ItaStack {
            cfg: cfg.clone(),
            encoder_dim,
            reuse_bottleneck: reuse,
            blocks,
        })
    }

    /// Temporal self-attention over the frame CLS tokens of one video,
    /// residually added back into each frame's CLS row.
    pub fn apply<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        store: &ParamStore<T>,
        hook_idx: usize,
        frames: &[ValueId],
        bottleneck: Option<&BottleneckBlock>,
    ) -> Result<Vec<ValueId>> {
        let block = &self.blocks[hook_idx];
        let mut cls_rows = Vec::with_capacity(frames.len());
        for f in frames {
            cls_rows.push(g.slice_rows(*f, 0, 1)?);
        }
        let cls_seq = if cls_rows.len() == 1 {
            cls_rows[0]
        } else {
            g.concat_rows(&cls_rows)?
        };

        // into the adaptor space
        let lowered = if let Some((w, b)) = block.down {
            let wv = g.param(store, w);
            let bv = g.param(store, b);
            g.affine(cls_seq, wv, bv)?
        } else if self.reuse_bottleneck {
            let bn = bottleneck.ok_or_else(|| {
                Error::Contract(
                    "ita configured to share bottleneck projections but none was supplied".into(),
                )
            })?;
            let w = g.param(store, bn.compress_v_w);
            let b = g.param(store, bn.compress_v_b);
            let gamma = g.param(store, bn.compress_v_gamma);
            let beta = g.param(store, bn.compress_v_beta);
            let projected = g.affine(cls_seq, w, b)?;
            g.layer_norm(projected, gamma, beta, T::from_f64(LAYER_NORM_EPS))?
        } else {
            cls_seq
        };

        let attended = attention(g, store, &block.attn, lowered, lowered)?;

        // back to the encoder space
        let enrichment = if let Some((w, b)) = block.up {
            let wv = g.param(store, w);
            let bv = g.param(store, b);
            g.affine(attended, wv, bv)?
        } else if self.reuse_bottleneck {
            let bn = bottleneck.expect("checked above");
            let w = g.param(store, bn.expand_v_w);
            let b = g.param(store, bn.expand_v_b);
            let projected = g.affine(attended, w, b)?;
            g.gelu(projected)
        } else {
            attended
        };

        // residual add into each frame's CLS row
        let mut out = Vec::with_capacity(frames.len());
        for (i, f) in frames.iter().enumerate() {
            let (n, _) = g.value(*f).dims2()?;
            let delta = g.slice_rows(enrichment, i, 1)?;
            let cls = g.slice_rows(*f, 0, 1)?;
            let new_cls = g.add(cls, delta)?;
            let rest = g.slice_rows(*f, 1, n - 1)?;
            out.push(g.concat_rows(&[new_cls, rest])?);
        }
        Ok(out)
    }
}
