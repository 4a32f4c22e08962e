//! `emofuse` — experiment runner for the audiovisual adaptation stack.
//!
//! Exit codes: 0 success, 2 usage/configuration errors, 3 numeric failures
//! (non-finite loss), 4 gradient-verification failures.

mod ablate;
mod presets;
mod svg;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use emofuse_core::data::{write_dataset, SynthConfig};
use emofuse_core::error::{Error, Result};
use emofuse_core::experiment::{read_report, run_experiment, write_report, ExperimentConfig};
use emofuse_core::model::{trainable_breakdown, Model};
use emofuse_core::verify::run_suite as run_verify_suite;

/// Environment variable that re-roots relative output directories.
const OUTPUT_ROOT_ENV: &str = "EMOFUSE_OUTPUT_ROOT";

#[derive(Parser)]
#[command(
    name = "emofuse",
    version,
    about = "Audiovisual emotion-recognition adaptation experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigSource {
    /// Experiment config JSON file.
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Bundled preset name (toy, paper_scale).
    #[arg(long)]
    preset: Option<String>,
}

impl ConfigSource {
    fn load(&self) -> Result<ExperimentConfig> {
        match (&self.config, &self.preset) {
            (Some(path), None) => {
                let text = std::fs::read_to_string(path)?;
                let cfg = ExperimentConfig::from_json(&text)?;
                cfg.validate()?;
                Ok(cfg)
            }
            (None, Some(name)) => presets::by_name(name),
            _ => Err(Error::Config(
                "exactly one of --config or --preset is required".into(),
            )),
        }
    }
}

#[derive(Args)]
struct RunOverrides {
    /// Dataset directory (overrides the config).
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Test fold, 1..=5 (overrides the config).
    #[arg(long)]
    fold: Option<usize>,
    /// Seed (overrides the config).
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (overrides the config).
    #[arg(long)]
    output: Option<PathBuf>,
}

impl RunOverrides {
    fn apply(&self, cfg: &mut ExperimentConfig) {
        if let Some(d) = &self.dataset {
            cfg.dataset_dir = d.to_string_lossy().into_owned();
        }
        if let Some(f) = self.fold {
            cfg.fold = f;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(o) = &self.output {
            cfg.output_dir = o.to_string_lossy().into_owned();
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train on one fold and write the run report.
    Train {
        #[command(flatten)]
        source: ConfigSource,
        #[command(flatten)]
        overrides: RunOverrides,
    },
    /// Train a variant grid and tabulate the comparison.
    Ablate {
        /// Suite: fusion, temporal, prompts, latent, modality.
        #[arg(long)]
        suite: String,
        #[command(flatten)]
        source: ConfigSource,
        #[command(flatten)]
        overrides: RunOverrides,
        /// Epoch-count override for quick suites.
        #[arg(long)]
        epochs: Option<usize>,
        /// Latent-dim grid override for the latent suite (comma separated).
        #[arg(long, value_delimiter = ',')]
        dims: Option<Vec<usize>>,
    },
    /// Finite-difference verification over every differentiable op.
    Gradcheck {
        /// f32, f64, or both.
        #[arg(long, default_value = "both")]
        mode: String,
    },
    /// Print the trainable-parameter breakdown of a configuration.
    Params {
        #[command(flatten)]
        source: ConfigSource,
    },
    /// Print a bundled preset's JSON.
    Preset {
        /// toy or paper_scale.
        name: String,
    },
    /// Generate a synthetic dataset.
    Synth {
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Full SynthConfig JSON (other flags override it).
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        classes: Option<usize>,
        #[arg(long)]
        samples_per_class: Option<usize>,
        #[arg(long)]
        frames: Option<usize>,
        #[arg(long)]
        height: Option<usize>,
        #[arg(long)]
        width: Option<usize>,
        #[arg(long)]
        spec_rows: Option<usize>,
        #[arg(long)]
        spec_cols: Option<usize>,
        #[arg(long)]
        noise: Option<f64>,
    },
    /// Merge run reports into a CSV table and an SVG chart.
    Report {
        /// Output directory for summary.csv and chart.svg.
        #[arg(long)]
        out: PathBuf,
        /// Refuse runs whose digest does not match this config.
        #[arg(long)]
        config: Option<PathBuf>,
        /// report.json files to merge.
        #[arg(required = true)]
        runs: Vec<PathBuf>,
    },
}

/// Relative output dirs are re-rooted under $EMOFUSE_OUTPUT_ROOT when set.
fn resolve_output_dir(dir: &str) -> PathBuf {
    let path = PathBuf::from(dir);
    if path.is_absolute() {
        return path;
    }
    match std::env::var_os(OUTPUT_ROOT_ENV) {
        Some(root) => PathBuf::from(root).join(path),
        None => path,
    }
}

fn cmd_train(source: &ConfigSource, overrides: &RunOverrides) -> Result<()> {
    let mut cfg = source.load()?;
    overrides.apply(&mut cfg);
    cfg.validate()?;
    let out_dir = resolve_output_dir(&cfg.output_dir);
    let outcome = run_experiment::<f32>(&cfg)?;
    write_report(&out_dir, &outcome.report)?;
    println!(
        "fold {} seed {}: 1-clip UAR {:.4} WAR {:.4} | 2-clip UAR {:.4} WAR {:.4} ({} trainable params, {:.1}s)",
        cfg.fold,
        cfg.seed,
        outcome.report.metrics_1clip.uar,
        outcome.report.metrics_1clip.war,
        outcome.report.metrics_2clip.uar,
        outcome.report.metrics_2clip.war,
        outcome.report.params.total,
        outcome.report.wall_time_seconds,
    );
    println!("report written to {}", out_dir.display());
    Ok(())
}

fn cmd_ablate(
    suite: &str,
    source: &ConfigSource,
    overrides: &RunOverrides,
    epochs: Option<usize>,
    dims: Option<Vec<usize>>,
) -> Result<()> {
    let mut cfg = source.load()?;
    overrides.apply(&mut cfg);
    if let Some(e) = epochs {
        cfg.schedule.total_epochs = e;
    }
    cfg.validate()?;
    let rows = ablate::run_suite(suite, &cfg, dims)?;
    let out_dir = resolve_output_dir(&cfg.output_dir);
    std::fs::create_dir_all(&out_dir)?;
    let csv = ablate::rows_to_csv(&rows);
    std::fs::write(out_dir.join(format!("ablation_{suite}.csv")), &csv)?;
    std::fs::write(
        out_dir.join(format!("ablation_{suite}.json")),
        serde_json::to_string_pretty(&rows)?,
    )?;
    let chart_rows: Vec<svg::ChartRow> = rows
        .iter()
        .map(|r| svg::ChartRow {
            label: r.variant.clone(),
            uar: r.uar_1clip,
            war: r.war_1clip,
        })
        .collect();
    std::fs::write(
        out_dir.join(format!("ablation_{suite}.svg")),
        svg::bar_chart(&format!("{suite} suite"), &chart_rows),
    )?;
    print!("{csv}");
    println!("suite written to {}", out_dir.display());
    Ok(())
}

/// Returns false if any op fails its threshold.
fn cmd_gradcheck(mode: &str) -> Result<bool> {
    let modes: Vec<&str> = match mode {
        "f32" => vec!["f32"],
        "f64" => vec!["f64"],
        "both" => vec!["f32", "f64"],
        other => {
            return Err(Error::Config(format!(
                "unknown mode {other:?}; use f32, f64, or both"
            )))
        }
    };
    let mut all_passed = true;
    let mut failed_ops = Vec::new();
    for m in modes {
        let reports = match m {
            "f32" => run_verify_suite::<f32>()?,
            _ => run_verify_suite::<f64>()?,
        };
        for r in reports {
            println!(
                "{m} {:<20} max_rel_err {:.3e} (threshold {:.0e}) {}",
                r.op,
                r.max_rel_err,
                r.threshold,
                if r.passed { "PASS" } else { "FAIL" }
            );
            if !r.passed {
                all_passed = false;
                failed_ops.push(format!("{m}:{}", r.op));
            }
        }
    }
    if !all_passed {
        eprintln!(
            "gradient verification failed for: {}",
            failed_ops.join(", ")
        );
    }
    Ok(all_passed)
}

fn cmd_params(source: &ConfigSource) -> Result<()> {
    let cfg = source.load()?;
    let (_, plan) = Model::plan(&cfg.model)?;
    let breakdown = trainable_breakdown(&plan);
    for (group, count) in &breakdown.groups {
        println!("{group:<24} {count}");
    }
    println!("{:<24} {}", "total", breakdown.total);
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_synth(
    out: &Path,
    config: Option<&Path>,
    seed: Option<u64>,
    classes: Option<usize>,
    samples_per_class: Option<usize>,
    frames: Option<usize>,
    height: Option<usize>,
    width: Option<usize>,
    spec_rows: Option<usize>,
    spec_cols: Option<usize>,
    noise: Option<f64>,
) -> Result<()> {
    let mut cfg: SynthConfig = match config {
        Some(path) => serde_json::from_str(&std::fs::read_to_string(path)?)?,
        None => SynthConfig::default(),
    };
    if let Some(v) = seed {
        cfg.seed = v;
    }
    if let Some(v) = classes {
        if v != cfg.num_classes && config.is_none() {
            // the default pattern maps only fit 7 classes; fall back to
            // fully separable maps for other counts
            cfg.video_pattern_of_class = (0..v).collect();
            cfg.audio_pattern_of_class = (0..v).collect();
        }
        cfg.num_classes = v;
    }
    if let Some(v) = samples_per_class {
        cfg.samples_per_class = v;
    }
    if let Some(v) = frames {
        cfg.frames = v;
    }
    if let Some(v) = height {
        cfg.height = v;
    }
    if let Some(v) = width {
        cfg.width = v;
    }
    if let Some(v) = spec_rows {
        cfg.spec_rows = v;
    }
    if let Some(v) = spec_cols {
        cfg.spec_cols = v;
    }
    if let Some(v) = noise {
        cfg.noise = v;
    }
    let manifest = write_dataset(out, &cfg)?;
    println!(
        "wrote {} samples across {} classes to {}",
        manifest.samples.len(),
        manifest.class_names.len(),
        out.display()
    );
    Ok(())
}

fn cmd_report(out: &Path, config: Option<&Path>, runs: &[PathBuf]) -> Result<()> {
    let expected_digest = match config {
        Some(path) => {
            let cfg = ExperimentConfig::from_json(&std::fs::read_to_string(path)?)?;
            Some(cfg.digest())
        }
        None => None,
    };
    let mut rows = Vec::new();
    let mut csv = String::from("run,uar_1clip,war_1clip,uar_2clip,war_2clip,trainable_params\n");
    for path in runs {
        let report = read_report(path)?;
        if let Some(expected) = &expected_digest {
            if &report.config_digest != expected {
                return Err(Error::Config(format!(
                    "run {} was produced by config {}, expected {}",
                    path.display(),
                    report.config_digest,
                    expected
                )));
            }
        }
        let label = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.display().to_string());
        csv.push_str(&format!(
            "{label},{},{},{},{},{}\n",
            report.metrics_1clip.uar,
            report.metrics_1clip.war,
            report.metrics_2clip.uar,
            report.metrics_2clip.war,
            report.params.total
        ));
        rows.push(svg::ChartRow {
            label,
            uar: report.metrics_1clip.uar,
            war: report.metrics_1clip.war,
        });
    }
    std::fs::create_dir_all(out)?;
    std::fs::write(out.join("summary.csv"), &csv)?;
    std::fs::write(out.join("chart.svg"), svg::bar_chart("runs", &rows))?;
    print!("{csv}");
    println!("report written to {}", out.display());
    Ok(())
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::Numeric(_) => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result: Result<u8> = match &cli.command {
        Command::Train { source, overrides } => cmd_train(source, overrides).map(|()| 0),
        Command::Ablate {
            suite,
            source,
            overrides,
            epochs,
            dims,
        } => cmd_ablate(suite, source, overrides, *epochs, dims.clone()).map(|()| 0),
        Command::Gradcheck { mode } => cmd_gradcheck(mode).map(|ok| if ok { 0 } else { 4 }),
        Command::Params { source } => cmd_params(source).map(|()| 0),
        Command::Preset { name } => presets::by_name(name).map(|cfg| {
            println!("{}", cfg.to_json());
            0
        }),
        Command::Synth {
            out,
            config,
            seed,
            classes,
            samples_per_class,
            frames,
            height,
            width,
            spec_rows,
            spec_cols,
            noise,
        } => cmd_synth(
            out,
            config.as_deref(),
            *seed,
            *classes,
            *samples_per_class,
            *frames,
            *height,
            *width,
            *spec_rows,
            *spec_cols,
            *noise,
        )
        .map(|()| 0),
        Command::Report { out, config, runs } => {
            cmd_report(out, config.as_deref(), runs).map(|()| 0)
        }
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}
