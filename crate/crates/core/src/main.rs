use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use specmcd::classifier::{ClassifierError, ClassifierSpec, SceneClassifier, SpectralMock, SubprocessClassifier};
use specmcd::config::PipelineConfig;
use specmcd::metrics;
use specmcd::pipeline::{self, Detection, RunManifest, StageError};
use specmcd::raster::{BinaryMask, Grid, MultibandRaster};
use specmcd::raster_io::{self, IoError};
use specmcd::render;
use specmcd::synth::{self, SceneKind, ScenePreset};
use specmcd::tiling::TilingError;

#[derive(Parser)]
#[command(name = "specmcd", version, about = "Weakly supervised cloud detection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Detect clouds in a raster container and write the final mask.
    Detect(DetectArgs),
    /// Compare a predicted mask with a reference mask; prints metrics JSON.
    Evaluate {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long = "ref")]
        reference: PathBuf,
    },
    /// Generate a synthetic scene with its ground-truth mask.
    Synth(SynthArgs),
    /// Render a grid (`.f32` with JSON sidecar) or mask (`.pgm`) as PNG.
    Render { input: PathBuf, output: PathBuf },
}

#[derive(Args)]
struct DetectArgs {
    /// Raster container directory.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    /// JSON configuration; missing keys take defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// `builtin:spectral` or `subprocess:<command line>`.
    #[arg(long, default_value = "builtin:spectral")]
    classifier: String,
    /// Window-classification threads, and worker processes for subprocess classifiers.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u16).range(1..))]
    workers: u16,
    /// Also write every intermediate map.
    #[arg(long)]
    emit_intermediates: bool,
    #[arg(long)]
    grad_thresh: Option<f64>,
    #[arg(long)]
    scene_threshold: Option<f64>,
    #[arg(long)]
    mean_window: Option<usize>,
    #[arg(long)]
    svd_rank: Option<usize>,
    #[arg(long)]
    worker_timeout: Option<f64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Dense,
    LargeArea,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, value_enum)]
    kind: KindArg,
    #[arg(long, default_value_t = 1024)]
    width: usize,
    #[arg(long, default_value_t = 1024)]
    height: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0)]
    distractors: usize,
    #[arg(long)]
    output: PathBuf,
}

/// A failure with the stage it happened in and the exit code it maps to.
struct Failure {
    stage: String,
    message: String,
    code: u8,
}

impl Failure {
    fn input(stage: &str, e: impl fmt::Display) -> Self {
        Self {
            stage: stage.to_string(),
            message: e.to_string(),
            code: 2,
        }
    }

    fn internal(stage: &str, e: impl fmt::Display) -> Self {
        Self {
            stage: stage.to_string(),
            message: e.to_string(),
            code: 1,
        }
    }
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<(), Failure> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Failure::internal("output", e))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Failure::internal("output", format!("{}: {e}", path.display())))
}

fn print_json<T: Serialize>(value: &T) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Failure::internal("output", e))?;
    let mut stdout = std::io::stdout().lock();
    match writeln!(stdout, "{text}") {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(Failure::internal("output", e)),
        _ => Ok(()),
    }
}

fn merged_config(args: &DetectArgs) -> Result<PipelineConfig, Failure> {
    let mut config = match &args.config {
        Some(path) => PipelineConfig::load(path).map_err(|e| Failure::input("config", e))?,
        None => PipelineConfig::default(),
    };
    if let Some(v) = args.grad_thresh {
        config.fusion.grad_thresh = v;
    }
    if let Some(v) = args.scene_threshold {
        config.scene_threshold = v;
    }
    if let Some(v) = args.mean_window {
        config.mean_window = v;
    }
    if let Some(v) = args.svd_rank {
        config.svd_rank = v;
    }
    if let Some(v) = args.worker_timeout {
        config.worker_timeout_secs = v;
    }
    config.validate().map_err(|e| Failure::input("config", e))?;
    Ok(config)
}

fn build_classifier(
    spec: &ClassifierSpec,
    config: &PipelineConfig,
    workers: usize,
) -> Result<Box<dyn SceneClassifier>, Failure> {
    Ok(match spec {
        ClassifierSpec::BuiltinSpectral => Box::new(SpectralMock::new(config.mock_saturation as f32)),
        ClassifierSpec::Subprocess(cmd) => Box::new(
            SubprocessClassifier::launch(cmd, workers, Duration::from_secs_f64(config.worker_timeout_secs))
                .map_err(|e| Failure::internal("classifier", e))?,
        ),
    })
}

fn pipeline_failure(e: pipeline::PipelineError) -> Failure {
    let code = match &e.source {
        StageError::Tiling(TilingError::Classifier {
            source: ClassifierError::MissingBand(_),
            ..
        }) => 2,
        StageError::Tiling(TilingError::Uncoverable { .. }) => 2,
        _ => 1,
    };
    Failure {
        stage: e.stage.to_string(),
        message: e.source.to_string(),
        code,
    }
}

fn write_intermediates(det: &Detection, dir: &Path) -> Result<(), IoError> {
    let grids: Vec<(&str, &Grid)> = [
        ("rho256", Some(&det.maps.rho256)),
        ("rho128", Some(&det.maps.rho128)),
        ("rho64", Some(&det.maps.rho64)),
        ("ctm_raw", Some(&det.ctm.ctm_raw)),
        ("ctm_refined", Some(&det.ctm.ctm_refined)),
        ("ctm_mean", Some(&det.ctm.ctm_mean)),
        ("ctm_svd", det.ctm.ctm_svd.as_ref()),
        ("gradient", Some(&det.gradient)),
        ("rho_dense", Some(&det.rho_dense)),
        ("rho_large", det.rho_large.as_ref()),
        ("rho_fused", Some(&det.rho_fused)),
        ("rho_dist", Some(&det.rho_dist)),
    ]
    .into_iter()
    .filter_map(|(name, g)| g.map(|g| (name, g)))
    .collect();
    for (name, grid) in grids {
        raster_io::save_grid(grid, name, &dir.join(format!("{name}.f32")))?;
    }
    let masks: [(&str, &BinaryMask); 5] = [
        ("mask256", &det.maps.mask256),
        ("mask128", &det.maps.mask128),
        ("mask64", &det.maps.mask64),
        ("boundary", &det.boundary),
        ("m_init", &det.initial_mask),
    ];
    for (name, mask) in masks {
        raster_io::save_mask(mask, &dir.join(format!("{name}.pgm")))?;
    }
    Ok(())
}

fn detect(args: DetectArgs) -> Result<(), Failure> {
    let config = merged_config(&args)?;
    let spec: ClassifierSpec = args.classifier.parse().map_err(|e| Failure::input("classifier", e))?;
    let raster: MultibandRaster = raster_io::load_multiband(&args.input).map_err(|e| Failure::input("load", e))?;
    let workers = args.workers as usize;
    let classifier = build_classifier(&spec, &config, workers)?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Failure::internal("setup", e))?;
    let det = pool
        .install(|| pipeline::detect(&raster, classifier.as_ref(), &config, args.emit_intermediates))
        .map_err(pipeline_failure)?;
    drop(classifier);

    let out = &args.output;
    std::fs::create_dir_all(out).map_err(|e| Failure::internal("output", format!("{}: {e}", out.display())))?;
    raster_io::save_mask(&det.final_mask, &out.join("final_mask.pgm")).map_err(|e| Failure::internal("output", e))?;
    let manifest = RunManifest::new(&config, spec.to_string(), &raster, &det);
    write_json(&manifest, &out.join("manifest.json"))?;
    let timings: serde_json::Map<String, serde_json::Value> = det
        .timings
        .iter()
        .map(|(stage, secs)| (stage.to_string(), (*secs).into()))
        .collect();
    write_json(&timings, &out.join("timings.json"))?;
    if args.emit_intermediates {
        write_intermediates(&det, out).map_err(|e| Failure::internal("output", e))?;
    }
    print_json(&manifest)
}

fn evaluate(pred: &Path, reference: &Path) -> Result<(), Failure> {
    let p = raster_io::load_mask(pred).map_err(|e| Failure::input("load", e))?;
    let r = raster_io::load_mask(reference).map_err(|e| Failure::input("load", e))?;
    let counts = metrics::confusion(&p, &r).map_err(|e| Failure::input("evaluate", e))?;
    let m = metrics::metrics(counts).map_err(|e| Failure::input("evaluate", e))?;
    print_json(&m)
}

#[derive(Serialize)]
struct SynthSummary {
    preset: ScenePreset,
    truth_pixels: usize,
    blobs: usize,
    distractors: usize,
}

fn synth_cmd(args: SynthArgs) -> Result<(), Failure> {
    let preset = ScenePreset {
        kind: match args.kind {
            KindArg::Dense => SceneKind::Dense,
            KindArg::LargeArea => SceneKind::LargeArea,
        },
        width: args.width,
        height: args.height,
        seed: args.seed,
        distractors: args.distractors,
    };
    let scene = synth::generate_scene(&preset).map_err(|e| Failure::input("synth", e))?;
    let out = &args.output;
    raster_io::save_multiband(&scene.raster, out).map_err(|e| Failure::internal("output", e))?;
    raster_io::save_mask(&scene.truth, &out.join("truth.pgm")).map_err(|e| Failure::internal("output", e))?;
    write_json(&scene.layout, &out.join("scene.json"))?;
    print_json(&SynthSummary {
        preset,
        truth_pixels: scene.truth.count(),
        blobs: scene.layout.blobs.len(),
        distractors: scene.layout.distractor_squares.len(),
    })
}

fn render_cmd(input: &Path, output: &Path) -> Result<(), Failure> {
    let is_mask = input.extension().is_some_and(|e| e.eq_ignore_ascii_case("pgm"));
    let result = if is_mask {
        let mask = raster_io::load_mask(input).map_err(|e| Failure::input("load", e))?;
        render::save_mask_png(&mask, output)
    } else {
        let grid = raster_io::load_grid(input).map_err(|e| Failure::input("load", e))?;
        render::save_grid_png(&grid, output)
    };
    result.map_err(|e| Failure::internal("render", format!("{}: {e}", output.display())))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Detect(args) => detect(args),
        Command::Evaluate { pred, reference } => evaluate(&pred, &reference),
        Command::Synth(args) => synth_cmd(args),
        Command::Render { input, output } => render_cmd(&input, &output),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("specmcd: stage `{}` failed: {}", f.stage, f.message);
            ExitCode::from(f.code)
        }
    }
}
