//! Python bindings for the core types and operations.
//!
//! Configurations cross the boundary as JSON strings (the same schema the
//! CLI uses); tensors as flat `list[float]` plus a shape.

use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};
use std::path::{Path, PathBuf};

use emofuse_core::data::format::SampleRecord;
use emofuse_core::data::{self, ClipMode, SynthConfig};
use emofuse_core::error::Error;
use emofuse_core::experiment::{run_experiment, write_report, ExperimentConfig};
use emofuse_core::graph::Graph;
use emofuse_core::metrics::{compute_metrics as core_metrics, ConfusionMatrix};
use emofuse_core::model::{
    trainable_breakdown, ModalityMode, Model as CoreModel, ModelConfig, SampleInput,
};
use emofuse_core::optim::Schedule;
use emofuse_core::param::ParamStore;
use emofuse_core::tensor::Tensor;

fn to_py_err(e: Error) -> PyErr {
    match e {
        Error::Io(inner) => PyIOError::new_err(inner.to_string()),
        Error::Numeric(msg) => PyRuntimeError::new_err(msg),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn tensor_from(shape: Vec<usize>, data: Vec<f32>) -> PyResult<Tensor<f32>> {
    Tensor::new(shape, data).map_err(to_py_err)
}

/// Cosine-annealed learning rate: base/2 · (1 + cos(π·epoch/total)).
#[pyfunction]
fn cosine_lr(base_lr: f64, total_epochs: usize, epoch: f64) -> PyResult<f64> {
    Schedule {
        base_lr,
        total_epochs,
    }
    .lr_at(epoch)
    .map_err(to_py_err)
}

/// (UAR, WAR) of a row-major confusion matrix (rows = true class).
#[pyfunction]
fn metrics(confusion: Vec<Vec<u64>>) -> PyResult<(f64, f64)> {
    let k = confusion.len();
    let flat: Vec<u64> = confusion.into_iter().flatten().collect();
    let cm = ConfusionMatrix::from_counts(k, flat).map_err(to_py_err)?;
    let m = core_metrics(&cm).map_err(to_py_err)?;
    Ok((m.uar, m.war))
}

/// Frame index lists for a video: mode is "uniform" or "two_clip".
#[pyfunction]
fn sample_frames(total_frames: usize, t: usize, mode: &str) -> PyResult<Vec<Vec<usize>>> {
    let clip_mode = match mode {
        "uniform" => ClipMode::Uniform,
        "two_clip" => ClipMode::TwoClip,
        other => {
            return Err(PyValueError::new_err(format!(
                "unknown clip mode {other:?}"
            )))
        }
    };
    data::sample_frames(total_frames, t, clip_mode).map_err(to_py_err)
}

/// Generate a synthetic dataset; `config_json` follows the SynthConfig
/// schema (missing fields take defaults). Returns the sample count.
#[pyfunction]
#[pyo3(signature = (out_dir, config_json=None))]
fn generate_dataset(out_dir: PathBuf, config_json: Option<&str>) -> PyResult<usize> {
    let cfg: SynthConfig = match config_json {
        Some(text) => {
            serde_json::from_str(text).map_err(|e| PyValueError::new_err(e.to_string()))?
        }
        None => SynthConfig::default(),
    };
    let manifest = data::write_dataset(&out_dir, &cfg).map_err(to_py_err)?;
    Ok(manifest.samples.len())
}

/// Read one sample file into a dict with id, label, shapes and flat data.
#[pyfunction]
fn read_sample(py: Python<'_>, path: PathBuf) -> PyResult<Py<PyDict>> {
    let record = data::read_sample(Path::new(&path)).map_err(to_py_err)?;
    let out = PyDict::new(py);
    out.set_item("id", record.id)?;
    out.set_item("label", record.label)?;
    out.set_item("video_shape", record.video.shape().to_vec())?;
    out.set_item("video", PyList::new(py, record.video.data())?)?;
    out.set_item("audio_shape", record.audio.shape().to_vec())?;
    out.set_item("audio", PyList::new(py, record.audio.data())?)?;
    Ok(out.into())
}

/// Write one sample file in the bit-exact container format.
#[pyfunction]
#[allow(clippy::too_many_arguments)]
fn write_sample(
    path: PathBuf,
    label: usize,
    video_shape: Vec<usize>,
    video: Vec<f32>,
    audio_shape: Vec<usize>,
    audio: Vec<f32>,
) -> PyResult<()> {
    let record = SampleRecord {
        id: Path::new(&path)
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default(),
        label,
        video: tensor_from(video_shape, video)?,
        audio: tensor_from(audio_shape, audio)?,
    };
    data::write_sample(Path::new(&path), &record).map_err(to_py_err)
}

/// 128-band log-mel spectrogram of a waveform; returns (shape, flat data).
#[pyfunction]
fn log_mel_spectrogram(waveform: Vec<f32>, sample_rate: u32) -> PyResult<(Vec<usize>, Vec<f32>)> {
    let spec = data::spectrogram::log_mel_spectrogram(&waveform, sample_rate).map_err(to_py_err)?;
    Ok((spec.shape().to_vec(), spec.data().to_vec()))
}

/// Default model configurations as JSON.
#[pyfunction]
fn toy_model_config() -> String {
    serde_json::to_string_pretty(&ModelConfig::toy()).expect("config serializes")
}

#[pyfunction]
fn paper_scale_model_config() -> String {
    serde_json::to_string_pretty(&ModelConfig::paper_scale()).expect("config serializes")
}

/// Trainable-parameter breakdown of a ModelConfig JSON.
#[pyfunction]
fn param_breakdown(py: Python<'_>, model_config_json: &str) -> PyResult<Py<PyDict>> {
    let cfg: ModelConfig = serde_json::from_str(model_config_json)
        .map_err(|e| PyValueError::new_err(e.to_string()))?;
    let (_, plan) = CoreModel::plan(&cfg).map_err(to_py_err)?;
    let breakdown = trainable_breakdown(&plan);
    let out = PyDict::new(py);
    for (group, count) in &breakdown.groups {
        out.set_item(group, count)?;
    }
    out.set_item("total", breakdown.total)?;
    Ok(out.into())
}

/// Finite-difference verification; mode is "f32" or "f64". Returns a list
/// of dicts with op, max_rel_err, threshold, passed.
#[pyfunction]
fn gradcheck(py: Python<'_>, mode: &str) -> PyResult<Py<PyList>> {
    let reports = match mode {
        "f32" => emofuse_core::verify::run_suite::<f32>(),
        "f64" => emofuse_core::verify::run_suite::<f64>(),
        other => return Err(PyValueError::new_err(format!("unknown mode {other:?}"))),
    }
    .map_err(to_py_err)?;
    let rows: Vec<Py<PyDict>> = reports
        .into_iter()
        .map(|r| {
            let d = PyDict::new(py);
            d.set_item("op", r.op)?;
            d.set_item("max_rel_err", r.max_rel_err)?;
            d.set_item("threshold", r.threshold)?;
            d.set_item("passed", r.passed)?;
            Ok(d.into())
        })
        .collect::<PyResult<_>>()?;
    Ok(PyList::new(py, rows)?.into())
}

/// Train on one fold per an ExperimentConfig JSON; writes the report files
/// and returns the report JSON.
#[pyfunction]
fn train(experiment_config_json: &str) -> PyResult<String> {
    let cfg = ExperimentConfig::from_json(experiment_config_json).map_err(to_py_err)?;
    cfg.validate().map_err(to_py_err)?;
    let outcome = run_experiment::<f32>(&cfg).map_err(to_py_err)?;
    write_report(Path::new(&cfg.output_dir), &outcome.report).map_err(to_py_err)?;
    serde_json::to_string_pretty(&outcome.report)
        .map_err(|e| PyRuntimeError::new_err(e.to_string()))
}

/// A built model with materialized weights.
#[pyclass]
struct Model {
    model: CoreModel,
    store: ParamStore<f32>,
}

#[pymethods]
impl Model {
    #[new]
    fn new(model_config_json: &str, seed: u64) -> PyResult<Self> {
        let cfg: ModelConfig = serde_json::from_str(model_config_json)
            .map_err(|e| PyValueError::new_err(e.to_string()))?;
        let (model, store) = CoreModel::build::<f32>(&cfg, seed).map_err(to_py_err)?;
        Ok(Model { model, store })
    }

    /// Logits for one sample: frames as t flat [C·H·W] lists, audio flat.
    fn logits(
        &self,
        frames: Vec<Vec<f32>>,
        frame_shape: Vec<usize>,
        audio: Vec<f32>,
        audio_shape: Vec<usize>,
    ) -> PyResult<Vec<f32>> {
        let frames = frames
            .into_iter()
            .map(|f| tensor_from(frame_shape.clone(), f))
            .collect::<PyResult<Vec<_>>>()?;
        let input = SampleInput {
            frames,
            audio: tensor_from(audio_shape, audio)?,
        };
        let mut g = Graph::new();
        let logits = self
            .model
            .forward(&mut g, &self.store, &[input])
            .map_err(to_py_err)?;
        Ok(g.value(logits).data().to_vec())
    }

    fn trainable_params(&self) -> usize {
        self.store
            .iter()
            .filter(|(_, p)| p.trainable)
            .map(|(_, p)| p.tensor.numel())
            .sum()
    }

    /// Hex digest of the frozen weights (the freeze-contract handle).
    fn frozen_digest(&self) -> String {
        self.store
            .frozen_digest()
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    fn modality(&self) -> String {
        match self.model.cfg.modality {
            ModalityMode::Multimodal => "multimodal".to_string(),
            ModalityMode::VisionOnly => "vision_only".to_string(),
            ModalityMode::AudioOnly => "audio_only".to_string(),
        }
    }
}

#[pymodule]
fn emofuse_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(cosine_lr, m)?)?;
    m.add_function(wrap_pyfunction!(metrics, m)?)?;
    m.add_function(wrap_pyfunction!(sample_frames, m)?)?;
    m.add_function(wrap_pyfunction!(generate_dataset, m)?)?;
    m.add_function(wrap_pyfunction!(read_sample, m)?)?;
    m.add_function(wrap_pyfunction!(write_sample, m)?)?;
    m.add_function(wrap_pyfunction!(log_mel_spectrogram, m)?)?;
    m.add_function(wrap_pyfunction!(toy_model_config, m)?)?;
    m.add_function(wrap_pyfunction!(paper_scale_model_config, m)?)?;
    m.add_function(wrap_pyfunction!(param_breakdown, m)?)?;
    m.add_function(wrap_pyfunction!(gradcheck, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_class::<Model>()?;
    Ok(())
}
