//! `dentsim`: batch front end for voxelization, drill replay, outcome
//! scoring, metric comparison, calibration audit, gaze analytics and study
//! reports.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use dentsim::exec::Execution;
use dentsim::gaze::HmdConfig;
use dentsim::{KappaWeighting, Tails};

use manifest::{parse_grid, Inputs, Options, RunManifest};

#[derive(Debug, Parser)]
#[command(name = "dentsim", version, about = "Drilling simulation scoring and study analysis")]
struct Cli {
    /// Worker threads: 1 runs sequentially, 0 uses every core.
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct RunArgs {
    /// JSON run manifest. Inputs next to it are also found by name.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Directory searched for inputs by their conventional names.
    #[arg(long)]
    dir: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct FieldArgs {
    /// Grid dimensions, e.g. 90x135x90.
    #[arg(long, value_parser = parse_grid)]
    grid: Option<[usize; 3]>,
    /// Iso-level of the metaball field.
    #[arg(long)]
    iso: Option<f64>,
    /// Kernel support as a multiple of the sphere radius.
    #[arg(long)]
    kernel_support: Option<f64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a complete synthetic input set.
    Fixture {
        #[arg(long)]
        out: PathBuf,
        /// Total number of tooth spheres.
        #[arg(long, default_value_t = 280_000)]
        spheres: usize,
        #[arg(long, default_value_t = 240)]
        outcomes: usize,
        #[arg(long, default_value_t = 3)]
        raters: usize,
        #[arg(long, default_value_t = 6)]
        gaze_trials: usize,
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        field: FieldArgs,
    },
    /// Discretize a sphere-pack tooth into a voxel grid and a surface mesh.
    Voxelize {
        #[command(flatten)]
        run: RunArgs,
        #[command(flatten)]
        field: FieldArgs,
        #[arg(long)]
        tooth: Option<PathBuf>,
    },
    /// Replay drill scripts on a tooth and voxelize each outcome.
    DrillReplay {
        #[command(flatten)]
        run: RunArgs,
        #[command(flatten)]
        field: FieldArgs,
        #[arg(long)]
        tooth: Option<PathBuf>,
        #[arg(long = "script")]
        scripts: Vec<PathBuf>,
        /// Also write a PLY mesh per outcome.
        #[arg(long)]
        meshes: bool,
    },
    /// Classify outcome grids against the ideal and score them.
    Score {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        pristine: Option<PathBuf>,
        #[arg(long)]
        ideal: Option<PathBuf>,
        #[arg(long = "outcome")]
        outcomes: Vec<PathBuf>,
    },
    /// Compare candidate metrics for normality and expert correlation.
    CompareMetrics {
        #[command(flatten)]
        run: RunArgs,
        /// Score reports written by `score`; otherwise outcomes are scored.
        #[arg(long)]
        scores: Option<PathBuf>,
        #[arg(long)]
        pristine: Option<PathBuf>,
        #[arg(long)]
        ideal: Option<PathBuf>,
        #[arg(long = "outcome")]
        outcomes: Vec<PathBuf>,
        /// CSV with rater_id,outcome_id,error_score.
        #[arg(long)]
        experts: Option<PathBuf>,
        /// Size of the review subset.
        #[arg(long)]
        k: Option<usize>,
        /// none, linear or quadratic.
        #[arg(long)]
        kappa_weighting: Option<KappaWeighting>,
        /// Metric the review subset covers evenly.
        #[arg(long)]
        select_by: Option<String>,
        /// Metric compared with the experts.
        #[arg(long)]
        agreement_metric: Option<String>,
        /// Restrict the report to these metrics.
        #[arg(long = "metric")]
        metrics: Vec<String>,
    },
    /// Audit the hand-tool alignment chain of a calibration config.
    Calibrate {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Print JSON instead of the text chain.
        #[arg(long)]
        json: bool,
    },
    /// Per-trial gaze hits and mean eye-tooth distance.
    GazeStats {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long = "log")]
        logs: Vec<PathBuf>,
        /// Recompute hits against this mesh instead of the logged ones.
        #[arg(long)]
        mesh: Option<PathBuf>,
        /// Factor from mesh units to gaze-log units (0.1 for mm to cm).
        #[arg(long)]
        mesh_scale: Option<f64>,
        /// Object width for the screen footprint, in gaze-log units.
        #[arg(long)]
        extent: Option<f64>,
        #[arg(long, default_value_t = 1440)]
        eye_width: u32,
        #[arg(long, default_value_t = 1600)]
        eye_height: u32,
        /// Horizontal field of view per eye, degrees.
        #[arg(long, default_value_t = 98.0)]
        fov: f64,
    },
    /// Learning gains, outlier screening, group tests and correlations.
    StudyReport {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        study: Option<PathBuf>,
        /// Per-trial Dentist scores that replace the table's trial columns.
        #[arg(long)]
        trials: Option<PathBuf>,
        /// two-sided, less or greater; gains below zero mean improvement,
        /// so the default is less.
        #[arg(long)]
        tails: Option<Tails>,
    },
}

impl FieldArgs {
    fn options(&self) -> Options {
        Options {
            grid: self.grid,
            iso: self.iso,
            kernel_support: self.kernel_support,
            ..Options::default()
        }
    }
}

fn resolve(run: &RunArgs, inputs: Inputs, options: Options) -> Result<RunManifest> {
    let mut m = RunManifest::default();
    let discover = run.dir.clone().or_else(|| {
        run.manifest
            .as_ref()
            .map(|p| p.parent().map(PathBuf::from).unwrap_or_default())
    });
    if let Some(dir) = discover {
        m = m.overlay(RunManifest::discover(&dir));
    }
    if let Some(path) = &run.manifest {
        m = m.overlay(RunManifest::load(path)?);
    }
    m = m.overlay(RunManifest {
        inputs,
        output_dir: run.out.clone(),
        options,
    });
    m.check_inputs()?;
    Ok(m)
}

fn execution(jobs: usize) -> Result<Execution> {
    match jobs {
        1 => Ok(Execution::Serial),
        0 => Ok(Execution::Parallel),
        #[cfg(feature = "parallel")]
        n => {
            rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
            Ok(Execution::Parallel)
        }
        #[cfg(not(feature = "parallel"))]
        _ => Ok(Execution::Serial),
    }
}

fn run(cli: Cli) -> Result<()> {
    let exec = execution(cli.jobs)?;
    match cli.command {
        Command::Fixture {
            out,
            spheres,
            outcomes,
            raters,
            gaze_trials,
            seed,
            field,
        } => {
            let options = Options {
                seed,
                ..field.options()
            };
            let args = commands::FixtureArgs {
                out,
                spheres,
                outcomes,
                raters,
                gaze_trials,
            };
            commands::fixture(args, &options, exec)
        }
        Command::Voxelize { run, field, tooth } => {
            let m = resolve(&run, Inputs { tooth, ..Inputs::default() }, field.options())?;
            commands::voxelize(&m, exec)
        }
        Command::DrillReplay {
            run,
            field,
            tooth,
            scripts,
            meshes,
        } => {
            let inputs = Inputs {
                tooth,
                scripts,
                ..Inputs::default()
            };
            let m = resolve(&run, inputs, field.options())?;
            commands::drill_replay(&m, exec, meshes)
        }
        Command::Score {
            run,
            pristine,
            ideal,
            outcomes,
        } => {
            let inputs = Inputs {
                pristine,
                ideal,
                outcomes,
                ..Inputs::default()
            };
            let m = resolve(&run, inputs, Options::default())?;
            commands::score(&m, exec)
        }
        Command::CompareMetrics {
            run,
            scores,
            pristine,
            ideal,
            outcomes,
            experts,
            k,
            kappa_weighting,
            select_by,
            agreement_metric,
            metrics,
        } => {
            let inputs = Inputs {
                scores,
                pristine,
                ideal,
                outcomes,
                experts,
                ..Inputs::default()
            };
            let options = Options {
                k,
                kappa_weighting,
                metrics: (!metrics.is_empty()).then_some(metrics),
                ..Options::default()
            };
            let m = resolve(&run, inputs, options)?;
            commands::compare(&m, exec, select_by, agreement_metric)
        }
        Command::Calibrate { run, config, json } => {
            let inputs = Inputs {
                calibration: config,
                ..Inputs::default()
            };
            let m = resolve(&run, inputs, Options::default())?;
            commands::calibrate(&m, json)
        }
        Command::GazeStats {
            run,
            logs,
            mesh,
            mesh_scale,
            extent,
            eye_width,
            eye_height,
            fov,
        } => {
            let inputs = Inputs {
                gaze_logs: logs,
                mesh,
                ..Inputs::default()
            };
            let options = Options {
                mesh_scale,
                ..Options::default()
            };
            let m = resolve(&run, inputs, options)?;
            let hmd = HmdConfig {
                per_eye_width: eye_width,
                per_eye_height: eye_height,
                horizontal_fov: fov,
            };
            hmd.validate()?;
            commands::gaze_stats(&m, exec, commands::GazeArgs { extent, hmd })
        }
        Command::StudyReport {
            run,
            study,
            trials,
            tails,
        } => {
            let inputs = Inputs {
                study,
                trials,
                ..Inputs::default()
            };
            let options = Options {
                tails,
                ..Options::default()
            };
            let m = resolve(&run, inputs, options)?;
            commands::study(&m)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
