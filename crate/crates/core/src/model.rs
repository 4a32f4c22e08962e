//! The assembled adaptation stack: two frozen encoders joined by prompt
//! hooks and fusion hooks, a temporal head, and a classifier.
//!
//! Per layer the pipeline runs: encoder block (both modalities), then the
//! progressive prompt update if the layer is a prompt hook, then fusion if
//! it is a fusion hook (with the intermediate temporal adaptor colocated
//! right after fusion when configured). After the final norm the prompts
//! are stripped, the per-frame CLS tokens are assembled into a temporal
//! sequence, and the head produces logits.
//!
//! Everything is per-sample: co-batched samples never exchange information
//! before the loss, so logits are independent of batch composition.

use crate::encoder::{
    block_forward, check_depth_compatible, final_norm, patch_embed, EncoderConfig, EncoderParams,
    ModalityTag,
};
use crate::error::{Error, Result};
use crate::fusion::{FusionConfig, FusionParams, FusionStack, FusionVariant};
use crate::graph::{Graph, ValueId};
use crate::param::{Init, ParamId, ParamPlan, ParamStore};
use crate::prompts::{PromptBank, PromptConfig};
use crate::scalar::Scalar;
use crate::temporal::{assemble_temporal, ItaStack, TemporalConfig, TemporalHead, TemporalMode};
use crate::tensor::Tensor;

use std::path::Path;

const HEAD_INIT_STD: f64 = 0.02;

/// Which branches are active.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModalityMode {
    Multimodal,
    VisionOnly,
    AudioOnly,
}

/// Input geometry of one branch, in patches.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryConfig {
    pub grid_rows: usize,
    pub grid_cols: usize,
    pub patch_size: usize,
    pub channels: usize,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub dim: usize,
    pub depth: usize,
    pub heads: usize,
    pub mlp_ratio: usize,
    pub modality: ModalityMode,
    pub num_classes: usize,
    pub frames_per_clip: usize,
    pub vision: GeometryConfig,
    pub audio: GeometryConfig,
    pub prompts: PromptConfig,
    pub fusion: FusionConfig,
    pub temporal: TemporalConfig,
}

impl ModelConfig {
    /// Small configuration that trains on one CPU in minutes. Depth stays at
    /// twelve so every hook-count ablation of the full grid is expressible.
    pub fn toy() -> Self {
        ModelConfig {
            dim: 32,
            depth: 12,
            heads: 4,
            mlp_ratio: 4,
            modality: ModalityMode::Multimodal,
            num_classes: 7,
            frames_per_clip: 4,
            vision: GeometryConfig {
                grid_rows: 2,
                grid_cols: 2,
                patch_size: 16,
                channels: 1,
            },
            audio: GeometryConfig {
                grid_rows: 2,
                grid_cols: 4,
                patch_size: 16,
                channels: 1,
            },
            prompts: PromptConfig {
                tokens: 6,
                hook_layers: vec![1, 7],
            },
            fusion: FusionConfig {
                variant: FusionVariant::Bottleneck,
                hook_layers: (1..=12).collect(),
                latent_dim: 16,
                mult_attn_dim: 16,
                mult_heads: 2,
                concat_heads: 2,
                concat_ffn_ratio: 2,
                pool_includes_cls: true,
                include_prompt_tokens: true,
            },
            temporal: TemporalConfig {
                head_dim: 32,
                heads: 8,
                ffn_ratio: 2,
                mode: TemporalMode::Mtt,
                ita: None,
            },
        }
    }

    /// Full-scale configuration used for parameter accounting: ViT-base
    /// geometry, 224×224 frames, a 128×1024 spectrogram, 16 frames,
    /// latent 128, head 512.
    pub fn paper_scale() -> Self {
        ModelConfig {
            dim: 768,
            depth: 12,
            heads: 12,
            mlp_ratio: 4,
            modality: ModalityMode::Multimodal,
            num_classes: 7,
            frames_per_clip: 16,
            vision: GeometryConfig {
                grid_rows: 14,
                grid_cols: 14,
                patch_size: 16,
                channels: 3,
            },
            audio: GeometryConfig {
                grid_rows: 8,
                grid_cols: 64,
                patch_size: 16,
                channels: 1,
            },
            prompts: PromptConfig {
                tokens: 6,
                hook_layers: vec![1, 7],
            },
            fusion: FusionConfig {
                variant: FusionVariant::Bottleneck,
                hook_layers: (1..=12).collect(),
                latent_dim: 128,
                mult_attn_dim: 128,
                mult_heads: 2,
                concat_heads: 12,
                concat_ffn_ratio: 2,
                pool_includes_cls: true,
                include_prompt_tokens: true,
            },
            temporal: TemporalConfig {
                head_dim: 512,
                heads: 8,
                ffn_ratio: 2,
                mode: TemporalMode::Mtt,
                ita: None,
            },
        }
    }

    pub fn vision_encoder_config(&self) -> EncoderConfig {
        EncoderConfig {
            modality: ModalityTag::Vision,
            depth: self.depth,
            dim: self.dim,
            heads: self.heads,
            mlp_ratio: self.mlp_ratio,
            patch_size: self.vision.patch_size,
            grid_rows: self.vision.grid_rows,
            grid_cols: self.vision.grid_cols,
            channels: self.vision.channels,
        }
    }

    pub fn audio_encoder_config(&self) -> EncoderConfig {
        EncoderConfig {
            modality: ModalityTag::Audio,
            depth: self.depth,
            dim: self.dim,
            heads: self.heads,
            mlp_ratio: self.mlp_ratio,
            patch_size: self.audio.patch_size,
            grid_rows: self.audio.grid_rows,
            grid_cols: self.audio.grid_cols,
            channels: self.audio.channels,
        }
    }

    pub fn uses_vision(&self) -> bool {
        matches!(
            self.modality,
            ModalityMode::Multimodal | ModalityMode::VisionOnly
        )
    }

    pub fn uses_audio(&self) -> bool {
        matches!(
            self.modality,
            ModalityMode::Multimodal | ModalityMode::AudioOnly
        )
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::Config("need at least two classes".into()));
        }
        if self.frames_per_clip == 0 {
            return Err(Error::Config("frames_per_clip must be positive".into()));
        }
        self.vision_encoder_config().validate()?;
        self.audio_encoder_config().validate()?;
        check_depth_compatible(&self.vision_encoder_config(), &self.audio_encoder_config())?;
        self.prompts.validate(self.depth)?;
        self.fusion.validate(self.dim, self.depth)?;
        self.temporal.validate()?;
        if self.modality != ModalityMode::Multimodal && self.fusion.variant != FusionVariant::None {
            return Err(Error::Config(
                "cross-modal fusion requires the multimodal configuration".into(),
            ));
        }
        if self.temporal.ita.is_some() {
            if !self.uses_vision() {
                return Err(Error::Config(
                    "intermediate temporal adaptors act on the vision branch".into(),
                ));
            }
            if self.fusion.variant == FusionVariant::None {
                return Err(Error::Config(
                    "intermediate temporal adaptors attach to fusion hook layers; enable fusion"
                        .into(),
                ));
            }
        }
        Ok(())
    }
}

/// One prepared sample: the sampled frame clip plus the spectrogram.
/// Unused branches may be empty/ignored depending on the modality mode.
#[derive(Debug, Clone)]
pub struct SampleInput<T> {
    /// t tensors of shape [C, H, W].
    pub frames: Vec<Tensor<T>>,
    /// Spectrogram [F, T].
    pub audio: Tensor<T>,
}

#[derive(Debug, Clone)]
pub struct Model {
    pub cfg: ModelConfig,
    pub vision: Option<EncoderParams>,
    pub audio: Option<EncoderParams>,
    pub vision_prompts: Option<PromptBank>,
    pub audio_prompts: Option<PromptBank>,
    pub fusion: FusionStack,
    pub ita: Option<ItaStack>,
    pub temporal: TemporalHead,
    pub classifier_w: ParamId,
    pub classifier_b: ParamId,
}

impl Model {
    /// Lay out every parameter of the configured model.
    pub fn plan(cfg: &ModelConfig) -> Result<(Model, ParamPlan)> {
        cfg.validate()?;
        let mut plan = ParamPlan::new();

        let vision = if cfg.uses_vision() {
            Some(EncoderParams::plan(
                &mut plan,
                "vision",
                &cfg.vision_encoder_config(),
            )?)
        } else {
            None
        };
        let audio = if cfg.uses_audio() {
            Some(EncoderParams::plan(
                &mut plan,
                "audio",
                &cfg.audio_encoder_config(),
            )?)
        } else {
            None
        };
        let vision_prompts = if cfg.uses_vision() && cfg.prompts.tokens > 0 {
            Some(PromptBank::plan(
                &mut plan,
                "prompt.vision",
                &cfg.prompts,
                cfg.dim,
                cfg.depth,
            )?)
        } else {
            None
        };
        let audio_prompts = if cfg.uses_audio() && cfg.prompts.tokens > 0 {
            Some(PromptBank::plan(
                &mut plan,
                "prompt.audio",
                &cfg.prompts,
                cfg.dim,
                cfg.depth,
            )?)
        } else {
            None
        };
        let fusion_cfg = if cfg.modality == ModalityMode::Multimodal {
            cfg.fusion.clone()
        } else {
            FusionConfig::none()
        };
        let fusion = FusionStack::plan(&mut plan, &fusion_cfg, cfg.dim, cfg.depth)?;
        let ita = match &cfg.temporal.ita {
            Some(ita_cfg) => {
                let latent = match cfg.fusion.variant {
                    FusionVariant::Bottleneck => Some(cfg.fusion.latent_dim),
                    _ => None,
                };
                Some(ItaStack::plan(
                    &mut plan,
                    ita_cfg,
                    cfg.dim,
                    &cfg.fusion.hook_layers,
                    latent,
                )?)
            }
            None => None,
        };
        let head_seq_len = if cfg.modality == ModalityMode::AudioOnly {
            1
        } else {
            cfg.frames_per_clip
        };
        let temporal = TemporalHead::plan(&mut plan, &cfg.temporal, cfg.dim, head_seq_len)?;
        let classifier_w = plan.add(
            "classifier.w",
            vec![cfg.temporal.head_dim, cfg.num_classes],
            true,
            Init::Normal { std: HEAD_INIT_STD },
        )?;
        let classifier_b = plan.add("classifier.b", vec![1, cfg.num_classes], true, Init::Zeros)?;

        Ok((
            Model {
                cfg: cfg.clone(),
                vision,
                audio,
                vision_prompts,
                audio_prompts,
                fusion,
                ita,
                temporal,
                classifier_w,
                classifier_b,
            },
            plan,
        ))
    }

    /// Plan and materialize in one step.
    pub fn build<T: Scalar>(cfg: &ModelConfig, seed: u64) -> Result<(Model, ParamStore<T>)> {
        let (model, plan) = Model::plan(cfg)?;
        Ok((model, ParamStore::materialize(&plan, seed)))
    }

    /// Forward one batch to logits (B × num_classes).
    pub fn forward<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        store: &ParamStore<T>,
        batch: &[SampleInput<T>],
    ) -> Result<ValueId> {
        if batch.is_empty() {
            return Err(Error::Contract("forward on an empty batch".into()));
        }
        let cfg = &self.cfg;
        let t = cfg.frames_per_clip;

        // embed + inject prompts
        let mut audio_seqs: Vec<ValueId> = Vec::new();
        let mut frame_seqs: Vec<Vec<ValueId>> = Vec::new();
        for sample in batch {
            if cfg.uses_audio() {
                let enc = self.audio.as_ref().expect("audio encoder planned");
                let mut seq = patch_embed(g, store, enc, &sample.audio)?;
                if let Some(bank) = &self.audio_prompts {
                    seq = bank.inject(g, store, seq)?;
                }
                audio_seqs.push(seq);
            }
            if cfg.uses_vision() {
                let enc = self.vision.as_ref().expect("vision encoder planned");
                if sample.frames.len() != t {
                    return Err(Error::Config(format!(
                        "sample has {} frames, model expects {t}",
                        sample.frames.len()
                    )));
                }
                let mut seqs = Vec::with_capacity(t);
                for frame in &sample.frames {
                    let mut seq = patch_embed(g, store, enc, frame)?;
                    if let Some(bank) = &self.vision_prompts {
                        seq = bank.inject(g, store, seq)?;
                    }
                    seqs.push(seq);
                }
                frame_seqs.push(seqs);
            }
        }

        let prompt_rows = cfg.prompts.tokens;
        // layer loop with hook points
        for layer in 1..=cfg.depth {
            if let Some(enc) = &self.vision {
                for seqs in frame_seqs.iter_mut() {
                    for seq in seqs.iter_mut() {
                        *seq = block_forward(g, store, &enc.blocks[layer - 1], *seq)?;
                    }
                }
            }
            if let Some(enc) = &self.audio {
                for seq in audio_seqs.iter_mut() {
                    *seq = block_forward(g, store, &enc.blocks[layer - 1], *seq)?;
                }
            }
            if let Some(bank) = &self.vision_prompts {
                for seqs in frame_seqs.iter_mut() {
                    for seq in seqs.iter_mut() {
                        *seq = bank.progressive_update(g, store, *seq, layer)?;
                    }
                }
            }
            if let Some(bank) = &self.audio_prompts {
                for seq in audio_seqs.iter_mut() {
                    *seq = bank.progressive_update(g, store, *seq, layer)?;
                }
            }
            if let Some(hook_idx) = self.fusion.hook_index(layer) {
                for (seqs, audio_seq) in frame_seqs.iter_mut().zip(audio_seqs.iter_mut()) {
                    let (new_frames, new_audio) = self.fusion.apply(
                        g,
                        store,
                        hook_idx,
                        seqs,
                        *audio_seq,
                        prompt_rows,
                        prompt_rows,
                    )?;
                    *seqs = new_frames;
                    *audio_seq = new_audio;
                }
                if let Some(ita) = &self.ita {
                    let bottleneck = match &self.fusion.params {
                        FusionParams::Bottleneck { blocks } => Some(&blocks[hook_idx]),
                        _ => None,
                    };
                    for seqs in frame_seqs.iter_mut() {
                        *seqs = ita.apply(g, store, hook_idx, seqs, bottleneck)?;
                    }
                }
            }
        }

        // final norm, strip prompts
        if let Some(enc) = &self.vision {
            for seqs in frame_seqs.iter_mut() {
                for seq in seqs.iter_mut() {
                    *seq = final_norm(g, store, enc, *seq)?;
                    if let Some(bank) = &self.vision_prompts {
                        *seq = bank.strip(g, *seq)?;
                    }
                }
            }
        }
        if let Some(enc) = &self.audio {
            for seq in audio_seqs.iter_mut() {
                *seq = final_norm(g, store, enc, *seq)?;
                if let Some(bank) = &self.audio_prompts {
                    *seq = bank.strip(g, *seq)?;
                }
            }
        }

        // temporal head + classifier, per sample
        let wc = g.param(store, self.classifier_w);
        let bc = g.param(store, self.classifier_b);
        let mut logit_rows = Vec::with_capacity(batch.len());
        for b in 0..batch.len() {
            let temporal_seq = match cfg.modality {
                ModalityMode::Multimodal => {
                    let audio_cls = g.slice_rows(audio_seqs[b], 0, 1)?;
                    assemble_temporal(g, &frame_seqs[b], Some(audio_cls))?
                }
                ModalityMode::VisionOnly => assemble_temporal(g, &frame_seqs[b], None)?,
                ModalityMode::AudioOnly => g.slice_rows(audio_seqs[b], 0, 1)?,
            };
            let adapted = self.temporal.adapt(g, store, temporal_seq)?;
            let feature = self.temporal.head_feature(g, store, adapted)?;
            logit_rows.push(g.affine(feature, wc, bc)?);
        }
        if logit_rows.len() == 1 {
            Ok(logit_rows[0])
        } else {
            g.concat_rows(&logit_rows)
        }
    }

    /// Forward plus mean cross-entropy against integer labels.
    pub fn loss<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        store: &ParamStore<T>,
        batch: &[SampleInput<T>],
        labels: &[usize],
    ) -> Result<(ValueId, ValueId)> {
        let logits = self.forward(g, store, batch)?;
        let loss = g.cross_entropy_mean(logits, labels)?;
        Ok((logits, loss))
    }

    /// Save every parameter to the named-tensor container. Positional
    /// embeddings are stored as a [rows, cols, dim] grid plus a separate
    /// CLS row so other grid sizes can load them.
    pub fn save_weights<T: Scalar>(&self, store: &ParamStore<T>, path: &Path) -> Result<()> {
        let pos_names: Vec<(String, EncoderConfig)> = self
            .encoder_pos_entries()
            .into_iter()
            .map(|(p, c)| (store.get(p.pos_embed).name.clone(), c))
            .collect();
        let mut entries = Vec::with_capacity(store.len() + pos_names.len());
        for (_, param) in store.iter() {
            let flat: Vec<f32> = param.tensor.data().iter().map(|v| v.to_f64_exact() as f32).collect();
            if let Some((_, cfg)) = pos_names.iter().find(|(n, _)| *n == param.name) {
                let d = cfg.dim;
                entries.push((
                    format!("{}.cls", param.name),
                    Tensor::new(vec![1, d], flat[..d].to_vec())?,
                ));
                entries.push((
                    format!("{}.grid", param.name),
                    Tensor::new(vec![cfg.grid_rows, cfg.grid_cols, d], flat[d..].to_vec())?,
                ));
            } else {
                entries.push((param.name.clone(), Tensor::new(param.tensor.shape().to_vec(), flat)?));
            }
        }
        crate::data::format::write_named_tensors(path, &entries)
    }

    /// Load parameters by name from a named-tensor container. Positional
    /// embedding grids whose size differs from this model's are bilinearly
    /// interpolated ("interpolate to new sequence lengths"); every other
    /// tensor must match its parameter's shape exactly. Entries without a
    /// matching parameter are rejected; parameters absent from the file
    /// keep their current values. Returns the number of parameters set.
    pub fn load_weights<T: Scalar>(&self, store: &mut ParamStore<T>, path: &Path) -> Result<usize> {
        let entries = crate::data::format::read_named_tensors(path)?;
        let by_name: std::collections::HashMap<String, ParamId> = store
            .iter()
            .map(|(pid, p)| (p.name.clone(), pid))
            .collect();
        let pos_entries = self.encoder_pos_entries();

        // collect pos-embed pieces first: name → (cls row, grid)
        let mut pos_parts: std::collections::HashMap<String, (Option<Tensor<f32>>, Option<Tensor<f32>>)> =
            std::collections::HashMap::new();
        let mut loaded = std::collections::HashSet::new();
        for (name, tensor) in entries {
            if let Some(base) = name.strip_suffix(".cls").filter(|b| b.ends_with(".pos_embed")) {
                pos_parts.entry(base.to_string()).or_default().0 = Some(tensor);
                continue;
            }
            if let Some(base) = name.strip_suffix(".grid").filter(|b| b.ends_with(".pos_embed")) {
                pos_parts.entry(base.to_string()).or_default().1 = Some(tensor);
                continue;
            }
            let pid = *by_name
                .get(&name)
                .ok_or_else(|| Error::Config(format!("weight file entry {name:?} has no matching parameter")))?;
            let param = store.get_mut(pid);
            if param.tensor.shape() != tensor.shape() {
                return Err(Error::shape(
                    "load_weights",
                    format!(
                        "{name}: file {:?} vs parameter {:?}",
                        tensor.shape(),
                        param.tensor.shape()
                    ),
                ));
            }
            param.tensor = tensor.cast::<T>();
            loaded.insert(name);
        }

        for (name, (cls, grid)) in pos_parts {
            let (params, cfg) = pos_entries
                .iter()
                .find(|(p, _)| store.get(p.pos_embed).name == name)
                .map(|(p, c)| (p, c))
                .ok_or_else(|| Error::Config(format!("weight file entry {name:?} has no matching parameter")))?;
            let cls = cls.ok_or_else(|| Error::Contract(format!("{name}: grid present without its CLS row")))?;
            let grid = grid.ok_or_else(|| Error::Contract(format!("{name}: CLS row present without its grid")))?;
            let (g1, g2, d) = match *grid.shape() {
                [a, b, c] => (a, b, c),
                ref other => {
                    return Err(Error::shape(
                        "load_weights",
                        format!("{name}.grid must be rank 3, got {other:?}"),
                    ))
                }
            };
            if d != cfg.dim || cls.shape() != [1, cfg.dim] {
                return Err(Error::shape(
                    "load_weights",
                    format!("{name}: channel dim {d} vs encoder dim {}", cfg.dim),
                ));
            }
            let resized = if (g1, g2) == (cfg.grid_rows, cfg.grid_cols) {
                grid
            } else {
                crate::encoder::interpolate_pos_grid(&grid, cfg.grid_rows, cfg.grid_cols)?
            };
            let mut combined = cls.data().to_vec();
            combined.extend_from_slice(resized.data());
            let tensor = Tensor::new(vec![cfg.token_count(), cfg.dim], combined)?;
            store.get_mut(params.pos_embed).tensor = tensor.cast::<T>();
            loaded.insert(name);
        }
        Ok(loaded.len())
    }

    fn encoder_pos_entries(&self) -> Vec<(&EncoderParams, EncoderConfig)> {
        let mut out = Vec::new();
        if let Some(enc) = &self.vision {
            out.push((enc, enc.cfg.clone()));
        }
        if let Some(enc) = &self.audio {
            out.push((enc, enc.cfg.clone()));
        }
        out
    }
}

/// Trainable-parameter totals, grouped by component.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ParamBreakdown {
    pub total: usize,
    pub groups: Vec<(String, usize)>,
}

/// Group trainable parameters by the component prefixes of this model
/// family. The grouping is exhaustive: every trainable parameter falls in
/// exactly one group.
pub fn trainable_breakdown(plan: &ParamPlan) -> ParamBreakdown {
    let groups: [(&str, Box<dyn Fn(&str) -> bool>); 7] = [
        ("fusion", Box::new(|n: &str| n.starts_with("fusion."))),
        (
            "temporal_transformer",
            Box::new(|n: &str| n.starts_with("temporal.mtt.")),
        ),
        (
            "joint_adapter",
            Box::new(|n: &str| n.starts_with("temporal.jam.")),
        ),
        (
            "temporal_adaptors",
            Box::new(|n: &str| n.starts_with("temporal.ita.")),
        ),
        ("prompts", Box::new(|n: &str| n.starts_with("prompt."))),
        (
            "classifier",
            Box::new(|n: &str| n.starts_with("classifier.")),
        ),
        (
            "positional_embeddings",
            Box::new(|n: &str| n.ends_with(".pos_embed")),
        ),
    ];
    let mut out = Vec::new();
    let mut total = 0usize;
    for (name, pred) in groups.iter() {
        let count = plan.trainable_numel_where(|n| pred(n));
        total += count;
        if count > 0 {
            out.push((name.to_string(), count));
        }
    }
    debug_assert_eq!(
        total,
        plan.trainable_numel(),
        "breakdown must be exhaustive"
    );
    ParamBreakdown { total, groups: out }
}
