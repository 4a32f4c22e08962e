//! Cross-modal fusion applied between encoder layers.
//!
//! The bottleneck variant compresses each modality to a low-dimensional
//! space (linear + layer norm), pools a global summary per modality, adds
//! each summary to the opposite modality's compressed tokens, expands back
//! (linear + GELU), and feeds the result into the original tokens through a
//! tanh gate whose parameter starts at exactly zero — so a freshly built
//! model behaves identically to its fusion-free counterpart.
//!
//! The remaining variants (plain addition, paired cross-attention, one
//! transformer over the concatenated token set) keep the same zero-init
//! gate so comparisons isolate the fusion structure.
//!
//! Vision pooling runs over the tokens of **all frames of one video**;
//! everything here is per-sample, so co-batched samples never mix.

use crate::attn::{attention, AttentionParams};
use crate::encoder::{block_forward, BlockParams, LAYER_NORM_EPS};
use crate::error::{Error, Result};
use crate::graph::{Graph, ValueId};
use crate::param::{Init, ParamId, ParamPlan, ParamStore};
use crate::scalar::Scalar;

/// Which fusion structure joins the two streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionVariant {
    None,
    /// Gated addition of the opposite modality's global mean, original space.
    Add,
    /// Two gated cross-attention blocks (audio→vision and vision→audio).
    Mult,
    /// One transformer block over the concatenated tokens; its pooled output
    /// is added back to every token of both branches, gated.
    MultConcat,
    Bottleneck,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FusionConfig {
    pub variant: FusionVariant,
    /// Encoder layers (1-based) after which fusion fires.
    pub hook_layers: Vec<usize>,
    /// Bottleneck dimensionality d_b (must stay below the encoder dim).
    pub latent_dim: usize,
    /// Total attention dimensionality of the Mult variant.
    pub mult_attn_dim: usize,
    pub mult_heads: usize,
    /// Heads / feed-forward ratio of the MultConcat block.
    pub concat_heads: usize,
    pub concat_ffn_ratio: usize,
    /// Include CLS rows in the pooled means.
    pub pool_includes_cls: bool,
    /// Feed prompt rows through fusion along with data tokens.
    pub include_prompt_tokens: bool,
}

impl FusionConfig {
    pub fn none() -> Self {
        FusionConfig {
            variant: FusionVariant::None,
            hook_layers: Vec::new(),
            latent_dim: 0,
            mult_attn_dim: 0,
            mult_heads: 1,
            concat_heads: 1,
            concat_ffn_ratio: 2,
            pool_includes_cls: true,
            include_prompt_tokens: true,
        }
    }

    pub fn validate(&self, dim: usize, depth: usize) -> Result<()> {
        if self.variant == FusionVariant::None {
            return Ok(());
        }
        let mut prev = 0usize;
        for l in &self.hook_layers {
            if *l < 1 || *l > depth {
                return Err(Error::Config(format!(
                    "fusion hook layer {l} outside 1..={depth}"
                )));
            }
            if *l <= prev {
                return Err(Error::Config(
                    "fusion hook layers must be strictly increasing".into(),
                ));
            }
            prev = *l;
        }
        if self.hook_layers.is_empty() {
            return Err(Error::Config(
                "fusion enabled but no hook layers configured".into(),
            ));
        }
        match self.variant {
            FusionVariant::Bottleneck => {
                if self.latent_dim == 0 || self.latent_dim >= dim {
                    return Err(Error::Config(format!(
                        "bottleneck latent dim {} must lie in 1..{dim}",
                        self.latent_dim
                    )));
                }
            }
            FusionVariant::Mult => {
                if self.mult_heads == 0 || self.mult_attn_dim % self.mult_heads != 0 {
                    return Err(Error::Config(format!(
                        "mult attention dim {} not divisible by {} heads",
                        self.mult_attn_dim, self.mult_heads
                    )));
                }
            }
            FusionVariant::MultConcat => {
                if self.concat_heads == 0 || dim % self.concat_heads != 0 {
                    return Err(Error::Config(format!(
                        "encoder dim {dim} not divisible by {} concat heads",
                        self.concat_heads
                    )));
                }
            }
            _ => {}
        }
        Ok(())
    }
}

/// One bottleneck exchange block's weights.
#[derive(Debug, Clone)]
pub struct BottleneckBlock {
    pub compress_v_w: ParamId,
    pub compress_v_b: ParamId,
    pub compress_v_gamma: ParamId,
    pub compress_v_beta: ParamId,
    pub compress_a_w: ParamId,
    pub compress_a_b: ParamId,
    pub compress_a_gamma: ParamId,
    pub compress_a_beta: ParamId,
    pub expand_v_w: ParamId,
    pub expand_v_b: ParamId,
    pub expand_a_w: ParamId,
    pub expand_a_b: ParamId,
    pub gate: ParamId,
}

#[derive(Debug, Clone)]
pub struct MultBlock {
    pub vision_from_audio: AttentionParams,
    pub audio_from_vision: AttentionParams,
    pub gate: ParamId,
}

#[derive(Debug, Clone)]
pub struct ConcatBlock {
    pub block: BlockParams,
    pub gate: ParamId,
}

#[derive(Debug, Clone)]
pub enum FusionParams {
    None,
    Add { gates: Vec<ParamId> },
    Mult { blocks: Vec<MultBlock> },
    MultConcat { blocks: Vec<ConcatBlock> },
    Bottleneck { blocks: Vec<BottleneckBlock> },
}

/// All fusion blocks of a model, one per hook layer.
#[derive(Debug, Clone)]
pub struct FusionStack {
    pub cfg: FusionConfig,
    pub params: FusionParams,
}

const FUSION_INIT_STD: f64 = 0.02;

impl FusionStack {
    pub fn plan(
        plan: &mut ParamPlan,
        cfg: &FusionConfig,
        dim: usize,
        depth: usize,
    ) -> Result<Self> {
        cfg.validate(dim, depth)?;
        let params = match cfg.variant {
            FusionVariant::None => FusionParams::None,
            FusionVariant::Add => {
                let mut gates = Vec::new();
                for l in &cfg.hook_layers {
                    gates.push(plan.add(
                        format!("fusion.hook{l}.gate"),
                        vec![1, 1],
                        true,
                        Init::Zeros,
                    )?);
                }
                FusionParams::Add { gates }
            }
            FusionVariant::Mult => {
                let mut blocks = Vec::new();
                for l in &cfg.hook_layers {
                    blocks.push(MultBlock {
                        vision_from_audio: AttentionParams::plan(
                            plan,
                            &format!("fusion.hook{l}.v_from_a"),
                            dim,
                            cfg.mult_attn_dim,
                            dim,
                            cfg.mult_heads,
                            true,
                            FUSION_INIT_STD,
                        )?,
                        audio_from_vision: AttentionParams::plan(
                            plan,
                            &format!("fusion.hook{l}.a_from_v"),
                            dim,
                            cfg.mult_attn_dim,
                            dim,
                            cfg.mult_heads,
                            true,
                            FUSION_INIT_STD,
                        )?,
                        gate: plan.add(
                            format!("fusion.hook{l}.gate"),
                            vec![1, 1],
                            true,
                            Init::Zeros,
                        )?,
                    });
                }
                FusionParams::Mult { blocks }
            }
            FusionVariant::MultConcat => {
                let mut blocks = Vec::new();
                for l in &cfg.hook_layers {
                    blocks.push(ConcatBlock {
                        block: BlockParams::plan(
                            plan,
                            &format!("fusion.hook{l}.joint"),
                            dim,
                            cfg.concat_heads,
                            cfg.concat_ffn_ratio,
                            true,
                            FUSION_INIT_STD,
                        )?,
                        gate: plan.add(
                            format!("fusion.hook{l}.gate"),
                            vec![1, 1],
                            true,
                            Init::Zeros,
                        )?,
                    });
                }
                FusionParams::MultConcat { blocks }
            }
            FusionVariant::Bottleneck => {
                let mut blocks = Vec::new();
                let db = cfg.latent_dim;
                for l in &cfg.hook_layers {
                    let p = |plan: &mut ParamPlan, name: &str, shape: Vec<usize>, init: Init| {
                        plan.add(format!("fusion.hook{l}.{name}"), shape, true, init)
                    };
                    let std = Init::Normal {
                        std: FUSION_INIT_STD,
                    };
                    blocks.push(BottleneckBlock {
                        compress_v_w: p(plan, "compress_v.w", vec![dim, db], std)?,
                        compress_v_b: p(plan, "compress_v.b", vec![1, db], Init::Zeros)?,
                        compress_v_gamma: p(plan, "compress_v.ln.gamma", vec![1, db], Init::Ones)?,
                        compress_v_beta: p(plan, "compress_v.ln.beta", vec![1, db], Init::Zeros)?,
                        compress_a_w: p(plan, "compress_a.w", vec![dim, db], std)?,
                        compress_a_b: p(plan, "compress_a.b", vec![1, db], Init::Zeros)?,
                        compress_a_gamma: p(plan, "compress_a.ln.gamma", vec![1, db], Init::Ones)?,
                        compress_a_beta: p(plan, "compress_a.ln.beta", vec![1, db], Init::Zeros)?,
                        expand_v_w: p(plan, "expand_v.w", vec![db, dim], std)?,
                        expand_v_b: p(plan, "expand_v.b", vec![1, dim], Init::Zeros)?,
                        expand_a_w: p(plan, "expand_a.w", vec![db, dim], std)?,
                        expand_a_b: p(plan, "expand_a.b", vec![1, dim], Init::Zeros)?,
                        // "We initialize α to zero"
                        gate: p(plan, "gate", vec![1, 1], Init::Zeros)?,
                    });
                }
                FusionParams::Bottleneck { blocks }
            }
        };
        Ok(FusionStack {
            cfg: cfg.clone(),
            params,
        })
    }

    /// Position of `layer` in the hook list, if it is a hook.
    pub fn hook_index(&self, layer: usize) -> Option<usize> {
        if matches!(self.params, FusionParams::None) {
            return None;
        }
        self.cfg.hook_layers.iter().position(|l| *l == layer)
    }

    /// Exchange information between one video's frame sequences and its
    /// audio sequence. `prompt_rows_*` give the trailing prompt-token counts
    /// so they can be excluded when configured.
    #[allow(clippy::too_many_arguments)]
    pub fn apply<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        store: &ParamStore<T>,
        hook_idx: usize,
        frames: &[ValueId],
        audio: ValueId,
        prompt_rows_vision: usize,
        prompt_rows_audio: usize,
    ) -> Result<(Vec<ValueId>, ValueId)> {
        if frames.is_empty() {
            return Err(Error::Contract(
                "fusion over an empty frame set is undefined".to_string(),
            ));
        }
        // Optionally split off the prompt tails.
        let (active_frames, frame_tails) = if self.cfg.include_prompt_tokens {
            (frames.to_vec(), vec![None; frames.len()])
        } else {
            let mut actives = Vec::with_capacity(frames.len());
            let mut tails = Vec::with_capacity(frames.len());
            for f in frames {
                let (n, _) = g.value(*f).dims2()?;
                if prompt_rows_vision >= n {
                    return Err(Error::Contract(
                        "fusion token set is empty after prompt removal".to_string(),
                    ));
                }
                if prompt_rows_vision == 0 {
                    actives.push(*f);
                    tails.push(None);
                } else {
                    actives.push(g.slice_rows(*f, 0, n - prompt_rows_vision)?);
                    tails.push(Some(g.slice_rows(
                        *f,
                        n - prompt_rows_vision,
                        prompt_rows_vision,
                    )?));
                }
            }
            (actives, tails)
        };
        let (active_audio, audio_tail) = if self.cfg.include_prompt_tokens || prompt_rows_audio == 0
        {
            (audio, None)
        } else {
            let (n, _) = g.value(audio).dims2()?;
            if prompt_rows_audio >= n {
                return Err(Error::Contract(
                    "fusion token set is empty after prompt removal".to_string(),
                ));
            }
            (
                g.slice_rows(audio, 0, n - prompt_rows_audio)?,
                Some(g.slice_rows(audio, n - prompt_rows_audio, prompt_rows_audio)?),
            )
        };

        let (fused_frames, fused_audio) = match &self.params {
            FusionParams::None => (active_frames.clone(), active_audio),
            FusionParams::Add { gates } => {
                self.apply_add(g, store, gates[hook_idx], &active_frames, active_audio)?
            }
            FusionParams::Mult { blocks } => {
                self.apply_mult(g, store, &blocks[hook_idx], &active_frames, active_audio)?
            }
            FusionParams::MultConcat { blocks } => {
                self.apply_concat(g, store, &blocks[hook_idx], &active_frames, active_audio)?
            }
            FusionParams::Bottleneck { blocks } => {
                self.apply_bottleneck(g, store, &blocks[hook_idx], &active_frames, active_audio)?
            }
        };

        // Reattach prompt tails.
        let mut out_frames = Vec::with_capacity(frames.len());
        for (fused, tail) in fused_frames.into_iter().zip(frame_tails.into_iter()) {
            out_frames.push(match tail {
                Some(t) => g.concat_rows(&[fused, t])?,
                None => fused,
            });
        }
        let out_audio = match audio_tail {
            Some(t) => g.concat_rows(&[fused_audio, t])?,
            None => fused_audio,
        };
        Ok((out_frames, out_audio))
    }

    /// Rows of one sequence participating in the pooled mean.
    fn pool_rows<T: Scalar>(&self, g: &mut Graph<T>, seq: ValueId) -> Result<ValueId> {
        if self.cfg.pool_includes_cls {
            return Ok(seq);
        }
        let (n, _) = g.value(seq).dims2()?;
        if n <= 1 {
            return Err(Error::Contract(
                "pooling excludes CLS but the sequence has no other rows".to_string(),
            ));
        }
        g.slice_rows(seq, 1, n - 1)
    }

    /// Pooled mean over a set of sequences (all rows concatenated).
    fn pooled_mean<T: Scalar>(&self, g: &mut Graph<T>, seqs: &[ValueId]) -> Result<ValueId> {
        let mut parts = Vec::with_capacity(seqs.len());
        for s in seqs {
            parts.push(self.pool_rows(g, *s)?);
        }
        let all = if parts.len() == 1 {
            parts[0]
        } else {
            g.concat_rows(&parts)?
        };
        g.mean_rows(all)
    }

    fn apply_bottleneck<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        store: &ParamStore<T>,
        block: &BottleneckBlock,
        frames: &[ValueId],
        audio: ValueId,
    ) -> Result<(Vec<ValueId>, ValueId)> {
        let eps = T::from_f64(LAYER_NORM_EPS);
        let cvw = g.param(store, block.compress_v_w);
        let cvb = g.param(store, block.compress_v_b);
        let cvg = g.param(store, block.compress_v_gamma);
        let cvbeta = g.param(store, block.compress_v_beta);
        let caw = g.param(store, block.compress_a_w);
        let cab = g.param(store, block.compress_a_b);
        let cag = g.param(store, block.compress_a_gamma);
        let cabeta = g.param(store, block.compress_a_beta);

        // compress both modalities to the latent space
        let mut compressed_frames = Vec::with_capacity(frames.len());
        for f in frames {
            let projected = g.affine(*f, cvw, cvb)?;
            compressed_frames.push(g.layer_norm(projected, cvg, cvbeta, eps)?);
        }
        let projected_a = g.affine(audio, caw, cab)?;
        let compressed_a = g.layer_norm(projected_a, cag, cabeta, eps)?;

        // global summaries: vision pools over all frames of this video
        let summary_v = self.pooled_mean(g, &compressed_frames)?;
        let summary_a = self.pooled_mean(g, &[compressed_a])?;

        // cross-inject summaries and expand back to the original space
        let evw = g.param(store, block.expand_v_w);
        let evb = g.param(store, block.expand_v_b);
        let eaw = g.param(store, block.expand_a_w);
        let eab = g.param(store, block.expand_a_b);
        let gate = g.param(store, block.gate);
        let gate_t = g.tanh(gate);

        let mut out_frames = Vec::with_capacity(frames.len());
        for (f, compressed) in frames.iter().zip(compressed_frames.iter()) {
            let mixed = g.add_row(*compressed, summary_a)?;
            let projected = g.affine(mixed, evw, evb)?;
            let expanded = g.gelu(projected);
            let gated = g.scale_by(expanded, gate_t)?;
            out_frames.push(g.add(*f, gated)?);
        }
        let mixed_a = g.add_row(compressed_a, summary_v)?;
        let projected_a = g.affine(mixed_a, eaw, eab)?;
        let expanded_a = g.gelu(projected_a);
        let gated_a = g.scale_by(expanded_a, gate_t)?;
        let out_audio = g.add(audio, gated_a)?;
        Ok((out_frames, out_audio))
    }

    fn apply_add<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        store: &ParamStore<T>,
        gate: ParamId,
        frames: &[ValueId],
        audio: ValueId,
    ) -> Result<(Vec<ValueId>, ValueId)> {
        let summary_v = self.pooled_mean(g, frames)?;
        let summary_a = self.pooled_mean(g, &[audio])?;
        let gate_v = g.param(store, gate);
        let gate_t = g.tanh(gate_v);
        let gated_a_summary = g.scale_by(summary_a, gate_t)?;
        let gated_v_summary = g.scale_by(summary_v, gate_t)?;
        let mut out_frames = Vec::with_capacity(frames.len());
        for f in frames {
            out_frames.push(g.add_row(*f, gated_a_summary)?);
        }
        let out_audio = g.add_row(audio, gated_v_summary)?;
        Ok((out_frames, out_audio))
    }

    fn apply_mult<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        store: &ParamStore<T>,
        block: &MultBlock,
        frames: &[ValueId],
        audio: ValueId,
    ) -> Result<(Vec<ValueId>, ValueId)> {
        // Frame queries are independent under cross-attention, so all frames
        // go through one call and are split back afterwards.
        let all_frames = if frames.len() == 1 {
            frames[0]
        } else {
            g.concat_rows(frames)?
        };
        let v_enriched = attention(g, store, &block.vision_from_audio, all_frames, audio)?;
        let a_enriched = attention(g, store, &block.audio_from_vision, audio, all_frames)?;
        let gate = g.param(store, block.gate);
        let gate_t = g.tanh(gate);
        let v_gated = g.scale_by(v_enriched, gate_t)?;
        let a_gated = g.scale_by(a_enriched, gate_t)?;

        let mut out_frames = Vec::with_capacity(frames.len());
        let mut offset = 0usize;
        for f in frames {
            let (n, _) = g.value(*f).dims2()?;
            let part = g.slice_rows(v_gated, offset, n)?;
            offset += n;
            out_frames.push(g.add(*f, part)?);
        }
        let out_audio = g.add(audio, a_gated)?;
        Ok((out_frames, out_audio))
    }

    fn apply_concat<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        store: &ParamStore<T>,
        block: &ConcatBlock,
        frames: &[ValueId],
        audio: ValueId,
    ) -> Result<(Vec<ValueId>, ValueId)> {
        let mut parts: Vec<ValueId> = frames.to_vec();
        parts.push(audio);
        let joint = g.concat_rows(&parts)?;
        let transformed = block_forward(g, store, &block.block, joint)?;
        let pooled = g.mean_rows(transformed)?;
        let gate = g.param(store, block.gate);
        let gate_t = g.tanh(gate);
        let gated = g.scale_by(pooled, gate_t)?;

        let mut out_frames = Vec::with_capacity(frames.len());
        for f in frames {
            out_frames.push(g.add_row(*f, gated)?);
        }
        let out_audio = g.add_row(audio, gated)?;
        Ok((out_frames, out_audio))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    fn cfg(variant: FusionVariant) -> FusionConfig {
        FusionConfig {
            variant,
            hook_layers: vec![1],
            latent_dim: 2,
            mult_attn_dim: 4,
            mult_heads: 2,
            concat_heads: 2,
            concat_ffn_ratio: 2,
            pool_includes_cls: true,
            include_prompt_tokens: true,
        }
    }

    fn stack(variant: FusionVariant) -> (FusionStack, ParamStore<f64>) {
        let mut plan = ParamPlan::new();
        let stack = FusionStack::plan(&mut plan, &cfg(variant), 8, 12).unwrap();
        let store = ParamStore::materialize(&plan, 77);
        (stack, store)
    }

    fn sample(g: &mut Graph<f64>) -> (Vec<ValueId>, ValueId) {
        let frames = (0..2)
            .map(|i| {
                let rows: Vec<Vec<f64>> = (0..3)
                    .map(|r| {
                        (0..8)
                            .map(|c| ((i * 24 + r * 8 + c) as f64 * 0.21).sin())
                            .collect()
                    })
                    .collect();
                g.input(Tensor::from_rows(&rows).unwrap())
            })
            .collect();
        let audio_rows: Vec<Vec<f64>> = (0..4)
            .map(|r| (0..8).map(|c| ((r * 8 + c) as f64 * 0.13).cos()).collect())
            .collect();
        let audio = g.input(Tensor::from_rows(&audio_rows).unwrap());
        (frames, audio)
    }

    fn set_gate(stack: &FusionStack, store: &mut ParamStore<f64>, value: f64) {
        let gate = match &stack.params {
            FusionParams::Add { gates } => gates[0],
            FusionParams::Mult { blocks } => blocks[0].gate,
            FusionParams::MultConcat { blocks } => blocks[0].gate,
            FusionParams::Bottleneck { blocks } => blocks[0].gate,
            FusionParams::None => unreachable!(),
        };
        store.get_mut(gate).tensor.data_mut()[0] = value;
    }

    #[test]
    fn zero_gate_is_bitwise_identity_for_every_variant() {
        for variant in [
            FusionVariant::Add,
            FusionVariant::Mult,
            FusionVariant::MultConcat,
            FusionVariant::Bottleneck,
        ] {
            let (stack, store) = stack(variant);
            let mut g = Graph::new();
            let (frames, audio) = sample(&mut g);
            let (out_f, out_a) = stack
                .apply(&mut g, &store, 0, &frames, audio, 0, 0)
                .unwrap();
            for (orig, fused) in frames.iter().zip(out_f.iter()) {
                assert_eq!(
                    g.value(*orig).data(),
                    g.value(*fused).data(),
                    "variant {variant:?} vision not identity at zero gate"
                );
            }
            assert_eq!(g.value(audio).data(), g.value(out_a).data());
        }
    }

    #[test]
    fn bottleneck_pooling_of_constant_tokens() {
        // With every vision token equal to c, the pooled summary equals the
        // compression map applied to c.
        let (stack, store) = stack(FusionVariant::Bottleneck);
        let block = match &stack.params {
            FusionParams::Bottleneck { blocks } => &blocks[0],
            _ => unreachable!(),
        };
        let c: Vec<f64> = (0..8).map(|i| 0.2 * i as f64 - 0.5).collect();
        let mut g = Graph::new();
        let frames: Vec<ValueId> = (0..2)
            .map(|_| g.input(Tensor::from_rows(&vec![c.clone(); 3]).unwrap()))
            .collect();

        // pooled summary via the real path
        let cvw = g.param(&store, block.compress_v_w);
        let cvb = g.param(&store, block.compress_v_b);
        let cvg = g.param(&store, block.compress_v_gamma);
        let cvbeta = g.param(&store, block.compress_v_beta);
        let mut compressed = Vec::new();
        for f in &frames {
            let p = g.affine(*f, cvw, cvb).unwrap();
            compressed.push(g.layer_norm(p, cvg, cvbeta, 1e-6).unwrap());
        }
        let pooled = stack.pooled_mean(&mut g, &compressed).unwrap();

        // single-row reference
        let single = g.input(Tensor::from_rows(&[c.clone()]).unwrap());
        let p = g.affine(single, cvw, cvb).unwrap();
        let reference = g.layer_norm(p, cvg, cvbeta, 1e-6).unwrap();

        for (a, b) in g.value(pooled).data().iter().zip(g.value(reference).data()) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn add_variant_shifts_by_gated_constant() {
        let (stack, mut store) = stack(FusionVariant::Add);
        set_gate(&stack, &mut store, 0.7);
        let c = 0.42f64;
        let mut g = Graph::new();
        let frames: Vec<ValueId> = (0..2)
            .map(|i| {
                let rows: Vec<Vec<f64>> = (0..3)
                    .map(|r| (0..8).map(|cc| (i + r + cc) as f64 * 0.1).collect())
                    .collect();
                g.input(Tensor::from_rows(&rows).unwrap())
            })
            .collect();
        let audio = g.input(Tensor::full(vec![4, 8], c));
        let (out_f, _) = stack
            .apply(&mut g, &store, 0, &frames, audio, 0, 0)
            .unwrap();
        let shift = (0.7f64).tanh() * c;
        for (orig, fused) in frames.iter().zip(out_f.iter()) {
            for (a, b) in g.value(*orig).data().iter().zip(g.value(*fused).data()) {
                assert!((b - a - shift).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn add_variant_zero_opposite_and_zero_gate_is_identity() {
        let (stack, store) = stack(FusionVariant::Add);
        let mut g = Graph::new();
        let frames = vec![g.input(Tensor::full(vec![3, 8], 0.5))];
        let audio = g.input(Tensor::zeros(vec![4, 8]));
        let (out_f, out_a) = stack
            .apply(&mut g, &store, 0, &frames, audio, 0, 0)
            .unwrap();
        assert_eq!(g.value(out_f[0]).data(), g.value(frames[0]).data());
        assert_eq!(g.value(out_a).data(), g.value(audio).data());
    }

    #[test]
    fn mult_zero_value_path_is_identity() {
        let (stack, mut store) = stack(FusionVariant::Mult);
        set_gate(&stack, &mut store, 0.9);
        // zero both value projections and output projections
        let names: Vec<(crate::param::ParamId, String)> =
            store.iter().map(|(i, p)| (i, p.name.clone())).collect();
        for (pid, name) in names {
            if name.contains(".wv")
                || name.contains(".bv")
                || name.contains(".wo")
                || name.contains(".bo")
            {
                for v in store.get_mut(pid).tensor.data_mut() {
                    *v = 0.0;
                }
            }
        }
        let mut g = Graph::new();
        let (frames, audio) = sample(&mut g);
        let (out_f, out_a) = stack
            .apply(&mut g, &store, 0, &frames, audio, 0, 0)
            .unwrap();
        for (orig, fused) in frames.iter().zip(out_f.iter()) {
            assert_eq!(g.value(*orig).data(), g.value(*fused).data());
        }
        assert_eq!(g.value(audio).data(), g.value(out_a).data());
    }

    #[test]
    fn concat_zero_block_adds_pooled_inputs() {
        let (stack, mut store) = stack(FusionVariant::MultConcat);
        set_gate(&stack, &mut store, 10.0); // tanh ≈ 1
                                            // zero every block weight: the pre-norm block becomes identity,
                                            // so the pooled mean of the raw inputs is added back.
        let names: Vec<(crate::param::ParamId, String)> =
            store.iter().map(|(i, p)| (i, p.name.clone())).collect();
        for (pid, name) in names {
            if name.contains(".joint.") {
                for v in store.get_mut(pid).tensor.data_mut() {
                    *v = 0.0;
                }
            }
        }
        let mut g = Graph::new();
        let (frames, audio) = sample(&mut g);
        let (out_f, _) = stack
            .apply(&mut g, &store, 0, &frames, audio, 0, 0)
            .unwrap();

        // expected pooled mean over all 10 rows
        let mut mean = vec![0.0f64; 8];
        let mut rows = 0usize;
        for f in &frames {
            for r in 0..3 {
                for c in 0..8 {
                    mean[c] += g.value(*f).get2(r, c);
                }
                rows += 1;
            }
        }
        for r in 0..4 {
            for c in 0..8 {
                mean[c] += g.value(audio).get2(r, c);
            }
            rows += 1;
        }
        for m in mean.iter_mut() {
            *m /= rows as f64;
        }
        let gate = (10.0f64).tanh();
        for c in 0..8 {
            let expected = g.value(frames[0]).get2(0, c) + gate * mean[c];
            let got = g.value(out_f[0]).get2(0, c);
            assert!((got - expected).abs() < 1e-12, "{got} vs {expected}");
        }
    }

    #[test]
    fn shapes_preserved_across_variants() {
        for variant in [
            FusionVariant::Add,
            FusionVariant::Mult,
            FusionVariant::MultConcat,
            FusionVariant::Bottleneck,
        ] {
            let (stack, mut store) = stack(variant);
            set_gate(&stack, &mut store, 0.3);
            let mut g = Graph::new();
            let (frames, audio) = sample(&mut g);
            let (out_f, out_a) = stack
                .apply(&mut g, &store, 0, &frames, audio, 0, 0)
                .unwrap();
            for (orig, fused) in frames.iter().zip(out_f.iter()) {
                assert_eq!(g.value(*orig).shape(), g.value(*fused).shape());
            }
            assert_eq!(g.value(audio).shape(), g.value(out_a).shape());
        }
    }

    #[test]
    fn prompt_tail_exclusion_passes_prompts_through() {
        let mut config = cfg(FusionVariant::Bottleneck);
        config.include_prompt_tokens = false;
        let mut plan = ParamPlan::new();
        let stack = FusionStack::plan(&mut plan, &config, 8, 12).unwrap();
        let mut store = ParamStore::<f64>::materialize(&plan, 77);
        set_gate(&stack, &mut store, 0.8);

        let mut g = Graph::new();
        let (frames, audio) = sample(&mut g);
        let (out_f, out_a) = stack
            .apply(&mut g, &store, 0, &frames, audio, 1, 2)
            .unwrap();
        // last vision row and last two audio rows are prompt tails: unchanged
        for (orig, fused) in frames.iter().zip(out_f.iter()) {
            assert_eq!(g.value(*orig).row(2), g.value(*fused).row(2));
            assert_ne!(g.value(*orig).row(0), g.value(*fused).row(0));
        }
        assert_eq!(g.value(audio).row(2), g.value(out_a).row(2));
        assert_eq!(g.value(audio).row(3), g.value(out_a).row(3));
        assert_ne!(g.value(audio).row(0), g.value(out_a).row(0));
    }

    #[test]
    fn empty_token_sets_rejected() {
        let (stack, store) = stack(FusionVariant::Bottleneck);
        let mut g = Graph::new();
        let audio = g.input(Tensor::full(vec![2, 8], 0.1));
        assert!(stack.apply(&mut g, &store, 0, &[], audio, 0, 0).is_err());
    }

    #[test]
    fn gate_and_all_fusion_params_receive_gradients() {
        let (stack, mut store) = stack(FusionVariant::Bottleneck);
        let run_backward = |store: &mut ParamStore<f64>| {
            store.zero_grads();
            let mut g = Graph::new();
            let (frames, audio) = sample(&mut g);
            let (out_f, out_a) = stack.apply(&mut g, store, 0, &frames, audio, 0, 0).unwrap();
            let mut parts = out_f.clone();
            parts.push(out_a);
            let all = g.concat_rows(&parts).unwrap();
            let act = g.gelu(all);
            let loss = g.sum_all(act);
            g.backward(loss, store).unwrap();
        };

        // At initialization the zero gate blocks every inner path, but the
        // gate itself must see a signal — that is what moves it off zero.
        run_backward(&mut store);
        let gate = match &stack.params {
            FusionParams::Bottleneck { blocks } => blocks[0].gate,
            _ => unreachable!(),
        };
        let gate_grad = store.get(gate).tensor.grad().unwrap()[0];
        assert!(gate_grad != 0.0, "gate gradient must be nonzero at init");

        // Once the gate has moved (one optimizer step), every fusion
        // parameter receives gradient.
        set_gate(&stack, &mut store, 0.05);
        run_backward(&mut store);
        for (_, p) in store.iter() {
            let grad = p
                .tensor
                .grad()
                .unwrap_or_else(|| panic!("{} has no grad", p.name));
            assert!(
                grad.iter().any(|v| *v != 0.0),
                "{} gradient is all zero",
                p.name
            );
        }
    }

    #[test]
    fn config_validation() {
        let mut c = cfg(FusionVariant::Bottleneck);
        c.latent_dim = 8;
        assert!(c.validate(8, 12).is_err()); // d_b must be < d
        c.latent_dim = 2;
        c.hook_layers = vec![13];
        assert!(c.validate(8, 12).is_err());
        c.hook_layers = vec![1, 1];
        assert!(c.validate(8, 12).is_err());
        c.hook_layers = vec![1, 7];
        assert!(c.validate(8, 12).is_ok());
    }
}
