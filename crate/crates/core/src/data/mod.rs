//! Synthetic cross-modal dataset, fold manifests, and the frame sampling
//! protocol.
//!
//! Each class is a (spatial pattern, spectral pattern) pair. The pattern
//! maps are chosen so that some classes share a video pattern and others
//! share an audio pattern: no single modality separates all classes, the
//! joint observation does. That construction is what the multimodal-gain
//! experiments measure against.

pub mod format;
pub mod spectrogram;

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub use format::{read_sample, write_sample, SampleRecord};

use crate::error::{Error, Result};
use crate::model::SampleInput;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const FOLD_COUNT: usize = 5;

/// Canonical 7-class emotion labels; other class counts get generic names.
const EMOTION_NAMES: [&str; 7] = [
    "happy", "sad", "angry", "neutral", "surprise", "disgust", "fear",
];

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub id: String,
    pub label: usize,
    /// Fold index in 1..=5.
    pub fold: usize,
    /// Path relative to the manifest location.
    pub path: String,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub class_names: Vec<String>,
    pub samples: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Ids of the training (fold ≠ k) and test (fold = k) splits.
    pub fn split(&self, fold: usize) -> Result<(Vec<&ManifestEntry>, Vec<&ManifestEntry>)> {
        if !(1..=FOLD_COUNT).contains(&fold) {
            return Err(Error::Config(format!(
                "fold {fold} outside 1..={FOLD_COUNT}"
            )));
        }
        let (test, train): (Vec<_>, Vec<_>) = self.samples.iter().partition(|e| e.fold == fold);
        Ok((train, test))
    }
}

/// Synthetic dataset geometry and the cross-modal class split.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub num_classes: usize,
    pub samples_per_class: usize,
    /// Raw frames per video (clips are sampled from these).
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub spec_rows: usize,
    pub spec_cols: usize,
    /// Video pattern id per class: classes sharing an id are
    /// indistinguishable from video alone.
    pub video_pattern_of_class: Vec<usize>,
    /// Audio pattern id per class.
    pub audio_pattern_of_class: Vec<usize>,
    pub noise: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            num_classes: 7,
            samples_per_class: 57,
            frames: 32,
            height: 32,
            width: 32,
            channels: 1,
            spec_rows: 32,
            spec_cols: 64,
            video_pattern_of_class: vec![0, 0, 1, 1, 2, 2, 3],
            audio_pattern_of_class: vec![0, 1, 1, 2, 2, 3, 3],
            noise: 0.1,
            seed: 1,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::Config("need at least two classes".into()));
        }
        if self.samples_per_class == 0 || self.frames == 0 {
            return Err(Error::Config(
                "samples_per_class and frames must be positive".into(),
            ));
        }
        if self.video_pattern_of_class.len() != self.num_classes
            || self.audio_pattern_of_class.len() != self.num_classes
        {
            return Err(Error::Config(
                "pattern maps must list one pattern id per class".into(),
            ));
        }
        // classes must be jointly separable
        let mut seen = std::collections::HashSet::new();
        for c in 0..self.num_classes {
            let key = (
                self.video_pattern_of_class[c],
                self.audio_pattern_of_class[c],
            );
            if !seen.insert(key) {
                return Err(Error::Config(format!(
                    "classes are not jointly separable: pattern pair {key:?} repeats"
                )));
            }
        }
        Ok(())
    }

    pub fn class_names(&self) -> Vec<String> {
        if self.num_classes == EMOTION_NAMES.len() {
            EMOTION_NAMES.iter().map(|s| s.to_string()).collect()
        } else {
            (0..self.num_classes)
                .map(|k| format!("class_{k}"))
                .collect()
        }
    }
}

/// Noiseless spatial pattern for one video pattern id: an oriented grating.
pub fn video_template(cfg: &SynthConfig, pattern: usize) -> Tensor<f32> {
    let (h, w, c) = (cfg.height, cfg.width, cfg.channels);
    let freq = (pattern + 1) as f64;
    let angle = pattern as f64 * std::f64::consts::PI / 5.0;
    let (dx, dy) = (angle.cos(), angle.sin());
    let mut data = Vec::with_capacity(c * h * w);
    for _ in 0..c {
        for y in 0..h {
            for x in 0..w {
                let phase =
                    2.0 * std::f64::consts::PI * freq * (x as f64 * dx + y as f64 * dy) / w as f64;
                data.push(phase.cos() as f32);
            }
        }
    }
    Tensor::new(vec![c, h, w], data).expect("template shape consistent")
}

/// Noiseless spectral pattern for one audio pattern id: an energized band.
pub fn audio_template(cfg: &SynthConfig, pattern: usize) -> Tensor<f32> {
    let (rows, cols) = (cfg.spec_rows, cfg.spec_cols);
    let band = (rows / 8).max(1);
    let positions = cfg
        .audio_pattern_of_class
        .iter()
        .copied()
        .max()
        .unwrap_or(0)
        + 1;
    let start = if positions > 1 {
        pattern * (rows - band) / (positions - 1)
    } else {
        0
    };
    let mut data = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        let value = if r >= start && r < start + band {
            1.0
        } else {
            0.0
        };
        for _ in 0..cols {
            data.push(value);
        }
    }
    Tensor::new(vec![rows, cols], data).expect("template shape consistent")
}

/// Generate the dataset in memory, class-major, fully determined by the seed.
pub fn generate_synthetic(cfg: &SynthConfig) -> Result<(Vec<SampleRecord>, DatasetManifest)> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let noise = Normal::new(0.0, cfg.noise.max(f64::MIN_POSITIVE)).expect("valid noise std");

    let mut records = Vec::with_capacity(cfg.num_classes * cfg.samples_per_class);
    let mut entries = Vec::with_capacity(records.capacity());
    for class in 0..cfg.num_classes {
        let video_base = video_template(cfg, cfg.video_pattern_of_class[class]);
        let audio_base = audio_template(cfg, cfg.audio_pattern_of_class[class]);
        for s in 0..cfg.samples_per_class {
            let id = format!("c{class:02}_s{s:04}");
            let frame_len = cfg.channels * cfg.height * cfg.width;
            let mut video = Vec::with_capacity(cfg.frames * frame_len);
            for _ in 0..cfg.frames {
                for v in video_base.data() {
                    video.push(v + noise.sample(&mut rng) as f32);
                }
            }
            let mut audio = Vec::with_capacity(cfg.spec_rows * cfg.spec_cols);
            for v in audio_base.data() {
                audio.push(v + noise.sample(&mut rng) as f32);
            }
            records.push(SampleRecord {
                id: id.clone(),
                label: class,
                video: Tensor::new(vec![cfg.frames, cfg.channels, cfg.height, cfg.width], video)?,
                audio: Tensor::new(vec![cfg.spec_rows, cfg.spec_cols], audio)?,
            });
            entries.push(ManifestEntry {
                id: id.clone(),
                label: class,
                fold: (s % FOLD_COUNT) + 1,
                path: format!("{id}.mmad"),
            });
        }
    }
    Ok((
        records,
        DatasetManifest {
            class_names: cfg.class_names(),
            samples: entries,
        },
    ))
}

/// Materialize a synthetic dataset: one `.mmad` file per sample plus
/// `manifest.json`.
pub fn write_dataset(dir: &Path, cfg: &SynthConfig) -> Result<DatasetManifest> {
    let (records, manifest) = generate_synthetic(cfg)?;
    std::fs::create_dir_all(dir)?;
    for (record, entry) in records.iter().zip(manifest.samples.iter()) {
        format::write_sample(&dir.join(&entry.path), record)?;
    }
    std::fs::write(dir.join("manifest.json"), manifest.to_json())?;
    Ok(manifest)
}

/// Load a dataset directory written by [`write_dataset`] (or anything
/// following the same layout).
pub fn load_dataset(dir: &Path) -> Result<(Vec<SampleRecord>, DatasetManifest)> {
    let manifest_path = dir.join("manifest.json");
    let text = std::fs::read_to_string(&manifest_path)?;
    let manifest = DatasetManifest::from_json(&text)?;
    let mut records = Vec::with_capacity(manifest.samples.len());
    for entry in &manifest.samples {
        let mut record = format::read_sample(&dir.join(&entry.path))?;
        record.id = entry.id.clone();
        if record.label != entry.label {
            return Err(Error::Contract(format!(
                "label mismatch for {}: file {} vs manifest {}",
                entry.id, record.label, entry.label
            )));
        }
        records.push(record);
    }
    Ok((records, manifest))
}

/// Where one dataset sample lives.
pub fn sample_path(dir: &Path, entry: &ManifestEntry) -> PathBuf {
    dir.join(&entry.path)
}

/// Clip selection protocol.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClipMode {
    /// One clip: index i picks frame ⌊i·F/t⌋.
    Uniform,
    /// Two clips offset within each stratum; averaged at evaluation.
    TwoClip,
}

/// Frame index lists for a video of `total_frames` raw frames. Both modes
/// are deterministic; videos shorter than `t` repeat indices by the same
/// floor formula.
pub fn sample_frames(total_frames: usize, t: usize, mode: ClipMode) -> Result<Vec<Vec<usize>>> {
    if total_frames == 0 || t == 0 {
        return Err(Error::Contract(
            "frame sampling needs at least one frame".into(),
        ));
    }
    let clip = |offset: usize| -> Vec<usize> {
        (0..t)
            .map(|i| ((2 * i + offset) * total_frames / (2 * t)).min(total_frames - 1))
            .collect()
    };
    Ok(match mode {
        ClipMode::Uniform => vec![clip(0)],
        ClipMode::TwoClip => vec![clip(0), clip(1)],
    })
}

/// Assemble a model input from a record and a frame index list.
pub fn prepare_input<T: Scalar>(
    record: &SampleRecord,
    indices: &[usize],
) -> Result<SampleInput<T>> {
    let shape = record.video.shape().to_vec();
    let (t_raw, c, h, w) = match shape.as_slice() {
        [t, c, h, w] => (*t, *c, *h, *w),
        other => {
            return Err(Error::shape(
                "prepare_input",
                format!("video must be [t,C,H,W], got {other:?}"),
            ))
        }
    };
    let frame_len = c * h * w;
    let mut frames = Vec::with_capacity(indices.len());
    for &i in indices {
        if i >= t_raw {
            return Err(Error::Contract(format!(
                "frame index {i} outside video of {t_raw} frames"
            )));
        }
        let data: Vec<T> = record.video.data()[i * frame_len..(i + 1) * frame_len]
            .iter()
            .map(|v| T::from_f64(*v as f64))
            .collect();
        frames.push(Tensor::new(vec![c, h, w], data)?);
    }
    Ok(SampleInput {
        frames,
        audio: record.audio.cast::<T>(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_cfg() -> SynthConfig {
        SynthConfig {
            samples_per_class: 10,
            frames: 8,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn counts_and_shapes_match_config() {
        let cfg = tiny_cfg();
        let (records, manifest) = generate_synthetic(&cfg).unwrap();
        assert_eq!(records.len(), 70);
        assert_eq!(manifest.samples.len(), 70);
        assert_eq!(manifest.class_names.len(), 7);
        for r in &records {
            assert_eq!(r.video.shape(), &[8, 1, 32, 32]);
            assert_eq!(r.audio.shape(), &[32, 64]);
            assert!(r.video.all_finite() && r.audio.all_finite());
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let cfg = tiny_cfg();
        let (a, _) = generate_synthetic(&cfg).unwrap();
        let (b, _) = generate_synthetic(&cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn folds_partition_and_balance() {
        let cfg = tiny_cfg();
        let (_, manifest) = generate_synthetic(&cfg).unwrap();
        // every id in exactly one fold
        let mut seen = std::collections::HashSet::new();
        for e in &manifest.samples {
            assert!((1..=FOLD_COUNT).contains(&e.fold));
            assert!(seen.insert(e.id.clone()));
        }
        // per-fold class counts deviate from ideal by less than one sample
        for class in 0..7 {
            let mut per_fold = [0usize; FOLD_COUNT];
            for e in manifest.samples.iter().filter(|e| e.label == class) {
                per_fold[e.fold - 1] += 1;
            }
            let ideal = 10.0 / FOLD_COUNT as f64;
            for count in per_fold {
                assert!((count as f64 - ideal).abs() < 1.0);
            }
        }
    }

    #[test]
    fn joint_separability_enforced() {
        let mut cfg = tiny_cfg();
        cfg.video_pattern_of_class = vec![0, 0, 1, 1, 2, 2, 3];
        cfg.audio_pattern_of_class = vec![0, 0, 1, 2, 2, 3, 3]; // classes 0 and 1 collide
        assert!(generate_synthetic(&cfg).is_err());
    }

    #[test]
    fn nearest_template_oracle_separates_jointly_but_not_unimodally() {
        // Noiseless features: joint nearest-template is perfect, single
        // modalities are capped by the ambiguous class groups.
        let mut cfg = tiny_cfg();
        cfg.noise = 1e-12;
        cfg.samples_per_class = 2;
        let (records, _) = generate_synthetic(&cfg).unwrap();

        let video_t: Vec<Tensor<f32>> = (0..7)
            .map(|c| video_template(&cfg, cfg.video_pattern_of_class[c]))
            .collect();
        let audio_t: Vec<Tensor<f32>> = (0..7)
            .map(|c| audio_template(&cfg, cfg.audio_pattern_of_class[c]))
            .collect();

        let dist = |a: &[f32], b: &[f32]| -> f64 {
            a.iter()
                .zip(b.iter())
                .map(|(x, y)| (*x as f64 - *y as f64).powi(2))
                .sum()
        };
        let classify = |features: &dyn Fn(&SampleRecord) -> Vec<f32>,
                        templates: &dyn Fn(usize) -> Vec<f32>| {
            let mut correct = 0usize;
            for r in &records {
                let f = features(r);
                let mut best = 0usize;
                let mut best_d = f64::INFINITY;
                for class in 0..7 {
                    let d = dist(&f, &templates(class));
                    if d < best_d {
                        best_d = d;
                        best = class;
                    }
                }
                if best == r.label {
                    correct += 1;
                }
            }
            correct as f64 / records.len() as f64
        };

        let frame_len = cfg.channels * cfg.height * cfg.width;
        let video_feat = |r: &SampleRecord| -> Vec<f32> { r.video.data()[..frame_len].to_vec() };
        let audio_feat = |r: &SampleRecord| -> Vec<f32> { r.audio.data().to_vec() };
        let joint_feat = |r: &SampleRecord| -> Vec<f32> {
            let mut f = video_feat(r);
            f.extend(audio_feat(r));
            f
        };

        let video_acc = classify(&video_feat, &|c| video_t[c].data().to_vec());
        let audio_acc = classify(&audio_feat, &|c| audio_t[c].data().to_vec());
        let joint_acc = classify(&joint_feat, &|c| {
            let mut f = video_t[c].data().to_vec();
            f.extend(audio_t[c].data().to_vec());
            f
        });

        assert_eq!(
            joint_acc, 1.0,
            "joint observation must separate all classes"
        );
        // video groups {0,1},{2,3},{4,5},{6}: at most 4/7 under tie-to-lowest
        assert!(video_acc <= 4.0 / 7.0 + 1e-9, "video accuracy {video_acc}");
        // audio groups {0},{1,2},{3,4},{5,6}: at most 4/7
        assert!(audio_acc <= 4.0 / 7.0 + 1e-9, "audio accuracy {audio_acc}");
    }

    #[test]
    fn uniform_sampling_formula() {
        assert_eq!(
            sample_frames(16, 16, ClipMode::Uniform).unwrap()[0],
            (0..16).collect::<Vec<_>>()
        );
        assert_eq!(
            sample_frames(32, 16, ClipMode::Uniform).unwrap()[0],
            (0..16).map(|i| 2 * i).collect::<Vec<_>>()
        );
        // degenerate: fewer frames than t repeats indices
        assert_eq!(
            sample_frames(4, 16, ClipMode::Uniform).unwrap()[0],
            vec![0, 0, 0, 0, 1, 1, 1, 1, 2, 2, 2, 2, 3, 3, 3, 3]
        );
    }

    #[test]
    fn two_clip_offsets_within_strata() {
        let clips = sample_frames(32, 16, ClipMode::TwoClip).unwrap();
        assert_eq!(clips[0], (0..16).map(|i| 2 * i).collect::<Vec<_>>());
        assert_eq!(clips[1], (0..16).map(|i| 2 * i + 1).collect::<Vec<_>>());
        // exactly t frames: both clips identical
        let same = sample_frames(16, 16, ClipMode::TwoClip).unwrap();
        assert_eq!(same[0], same[1]);
    }

    #[test]
    fn frame_indices_are_sorted_and_in_range() {
        for f_tot in [1usize, 3, 15, 16, 17, 100] {
            for clips in sample_frames(f_tot, 16, ClipMode::TwoClip).unwrap() {
                let mut prev = 0usize;
                for idx in clips {
                    assert!(idx < f_tot);
                    assert!(idx >= prev);
                    prev = idx;
                }
            }
        }
    }

    #[test]
    fn prepare_input_selects_frames() {
        let cfg = tiny_cfg();
        let (records, _) = generate_synthetic(&cfg).unwrap();
        let input = prepare_input::<f32>(&records[0], &[0, 3, 7]).unwrap();
        assert_eq!(input.frames.len(), 3);
        assert_eq!(input.frames[0].shape(), &[1, 32, 32]);
        let frame_len = 32 * 32;
        assert_eq!(
            input.frames[1].data(),
            &records[0].video.data()[3 * frame_len..4 * frame_len]
        );
        assert!(prepare_input::<f32>(&records[0], &[8]).is_err());
    }
}
