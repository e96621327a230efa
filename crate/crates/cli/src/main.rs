//! `roomrecon` command-line driver.
//!
//! Exit codes: 0 success, 2 invalid input (bad flags, unreadable or invalid
//! bundle), 3 a stage failed.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};
use thiserror::Error;

use roomrecon::io::{self, export_obj, load_bundle, load_result, save_bundle, save_result, write_atomic, SceneBundle};
use roomrecon::metrology::solve_heights;
use roomrecon::pipeline::{
    calibrate_and_layout, height_lines, infer_support, retrieve_models, run_pipeline, PipelineConfig,
};
use roomrecon::synth::{evaluate, make_scene, GroundTruthScene, NoiseConfig};
use roomrecon::vanishing::{joint_calibrate, CalibrationParams};

#[derive(Debug, Error)]
enum CliError {
    #[error("{0}")]
    Invalid(String),
    #[error("{0}")]
    Stage(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Invalid(_) => 2,
            CliError::Stage(_) => 3,
        }
    }
}

impl From<io::IoError> for CliError {
    fn from(e: io::IoError) -> Self {
        CliError::Invalid(e.to_string())
    }
}

fn stage<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Stage(e.to_string())
}

#[derive(Parser)]
#[command(name = "roomrecon", version, about = "Single-view indoor scene geometry")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Scene bundle directory.
    #[arg(long)]
    bundle: PathBuf,
    /// Output file; JSON goes to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 30)]
    iters: usize,
    #[arg(long, default_value_t = 5)]
    top_models: usize,
    #[arg(long, default_value_t = 8)]
    orientations: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Room height in metres, fixes the metric scale.
    #[arg(long, default_value_t = 3.0)]
    room_height: f64,
}

impl Common {
    fn config(&self) -> Result<PipelineConfig, CliError> {
        if self.iters == 0 || self.top_models == 0 || self.orientations == 0 {
            return Err(CliError::Invalid("--iters, --top-models and --orientations must be positive".into()));
        }
        if !(self.room_height > 0.0 && self.room_height.is_finite()) {
            return Err(CliError::Invalid(format!("--room-height must be positive, got {}", self.room_height)));
        }
        Ok(PipelineConfig {
            iterations: self.iters,
            top_models: self.top_models,
            orientations: self.orientations,
            seed: self.seed,
            room_height: self.room_height,
            ..PipelineConfig::default()
        })
    }

    fn load(&self) -> Result<(SceneBundle, PipelineConfig), CliError> {
        let config = self.config()?;
        Ok((load_bundle(&self.bundle)?, config))
    }
}

#[derive(Subcommand)]
enum Command {
    /// Vanishing points and camera from the bundle's line segments.
    Calibrate(Common),
    /// Calibration plus the fitted room box.
    Layout(Common),
    /// Support graph.
    Support(Common),
    /// Object heights and altitudes.
    Heights(Common),
    /// Ranked candidate models per instance.
    Retrieve(Common),
    /// Refined object poses.
    Place(Common),
    /// Every stage; writes the full result, plus an OBJ next to `--out`.
    Pipeline(Common),
    /// Renders a synthetic scene into a bundle directory with its truth.
    Synth(SynthArgs),
    /// Scores a result against a synthetic truth.
    Eval(EvalArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Bundle directory to create; `truth.json` is written inside it.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 12)]
    objects: usize,
    /// Gaussian noise on line endpoints, pixels.
    #[arg(long, default_value_t = 0.0)]
    line_noise: f64,
    /// Spurious segments as a fraction of the real ones.
    #[arg(long, default_value_t = 0.0)]
    clutter: f64,
    /// Leave the support answers out of the bundle.
    #[arg(long)]
    no_answers: bool,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    result: PathBuf,
    #[arg(long)]
    truth: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn emit(value: &Value, out: Option<&Path>) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("JSON values serialize");
    text.push('\n');
    match out {
        Some(path) => Ok(write_atomic(path, text.as_bytes()).map_err(|e| CliError::Stage(e.to_string()))?),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn to_value<T: serde::Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("result types serialize")
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Calibrate(c) => {
            let (bundle, _) = c.load()?;
            let r = joint_calibrate(&bundle.lines, bundle.dims, None, &CalibrationParams::default()).map_err(stage)?;
            let v = json!({ "vps": to_value(&r.vps), "camera": to_value(&r.camera), "residual": r.residual, "iterations": r.iterations });
            emit(&v, c.out.as_deref())
        }
        Command::Layout(c) => {
            let (bundle, config) = c.load()?;
            let geo = calibrate_and_layout(&bundle, &config, &mut Default::default()).map_err(stage)?;
            let v = json!({
                "camera": to_value(&geo.camera),
                "layout": to_value(&geo.layout),
                "layout_score": geo.layout_score,
                "cuboid_residual_px": geo.cuboid_residual_px,
            });
            emit(&v, c.out.as_deref())
        }
        Command::Support(c) => {
            let (bundle, config) = c.load()?;
            let geo = calibrate_and_layout(&bundle, &config, &mut Default::default()).map_err(stage)?;
            emit(&to_value(&infer_support(&bundle, &geo.regions)), c.out.as_deref())
        }
        Command::Heights(c) => {
            let (bundle, config) = c.load()?;
            let geo = calibrate_and_layout(&bundle, &config, &mut Default::default()).map_err(stage)?;
            let graph = infer_support(&bundle, &geo.regions);
            let lines = height_lines(&bundle, &geo.camera, &graph).map_err(stage)?;
            let cats: BTreeMap<u8, u8> = bundle.instances.iter().map(|i| (i.id, i.category)).collect();
            let (w, h) = (bundle.dims.width, bundle.dims.height);
            let sol =
                solve_heights(&graph, &lines, &cats, &geo.camera, &geo.layout, &bundle.priors, w, h).map_err(stage)?;
            emit(&to_value(&sol), c.out.as_deref())
        }
        Command::Retrieve(c) => {
            let (bundle, config) = c.load()?;
            let ids: Vec<u8> = bundle.instances.iter().map(|i| i.id).collect();
            let ranked = retrieve_models(&bundle, &ids, config.top_models).map_err(stage)?;
            emit(&to_value(&ranked), c.out.as_deref())
        }
        Command::Place(c) => {
            let (bundle, config) = c.load()?;
            let (result, _) = run_pipeline(&bundle, &config).map_err(stage)?;
            let objects: Vec<Value> = result
                .objects
                .iter()
                .map(|o| {
                    json!({
                        "instance": o.instance,
                        "category": o.category,
                        "pose": to_value(&o.pose),
                        "constraint": to_value(&o.constraint),
                        "initial_iou": o.initial_iou,
                        "iou": o.iou,
                        "trace": o.trace,
                    })
                })
                .collect();
            emit(&json!({ "objects": objects, "mean_trace": result.mean_trace }), c.out.as_deref())
        }
        Command::Pipeline(c) => {
            let (bundle, config) = c.load()?;
            let (result, timings) = run_pipeline(&bundle, &config).map_err(stage)?;
            match &c.out {
                Some(path) => {
                    save_result(&result, path).map_err(stage)?;
                    export_obj(&result, &path.with_extension("obj")).map_err(stage)?;
                    eprintln!("pipeline finished in {:.2} s", timings.total());
                    Ok(())
                }
                None => emit(&to_value(&result), None),
            }
        }
        Command::Synth(a) => {
            if a.objects > roomrecon::support::MAX_INSTANCES {
                return Err(CliError::Invalid(format!(
                    "--objects {} exceeds {}",
                    a.objects,
                    roomrecon::support::MAX_INSTANCES
                )));
            }
            let noise = NoiseConfig {
                line_sigma_px: a.line_noise,
                clutter_fraction: a.clutter,
                inject_answers: !a.no_answers,
                ..NoiseConfig::default()
            };
            let (truth, bundle) = make_scene(a.seed, a.objects, &noise).map_err(stage)?;
            save_bundle(&bundle, &a.out).map_err(stage)?;
            emit(&to_value(&truth), Some(&a.out.join("truth.json")))
        }
        Command::Eval(a) => {
            let result = load_result(&a.result)?;
            let bytes =
                std::fs::read(&a.truth).map_err(|e| CliError::Invalid(format!("{}: {e}", a.truth.display())))?;
            let truth: GroundTruthScene =
                serde_json::from_slice(&bytes).map_err(|e| CliError::Invalid(format!("{}: {e}", a.truth.display())))?;
            let metrics = evaluate(&result, &truth).map_err(stage)?;
            emit(&to_value(&metrics), a.out.as_deref())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
