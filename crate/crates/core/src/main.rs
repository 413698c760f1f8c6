use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use gpslam::eval::{ate_rmse_with, load_tum, save_tum, Alignment, Trajectory};
use gpslam::pipeline::{run_ablation_config, run_config, write_run_outputs, Mode, RunConfig};
use gpslam::sim::{simulate, write_observations_jsonl};
use gpslam::vp::{detect_vanishing_points, parse_segment_list, VpParams};
use gpslam::{Error, Result};

#[derive(Parser)]
#[command(name = "gpslam", version, about = "Synthetic benchmark for the structure-aware SLAM back-end")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Lp,
    Gp,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Lp => Mode::Lp,
            ModeArg::Gp => Mode::Gp,
        }
    }
}

#[derive(clap::Args)]
struct Common {
    /// Run configuration (JSON). Built-in corridor defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a scenario and dump ground truth and measurements.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Run the estimator on a generated scenario.
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "gp")]
        mode: ModeArg,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "json")]
        format: Format,
    },
    /// Absolute trajectory error between two TUM files.
    Eval {
        #[arg(long)]
        est: PathBuf,
        #[arg(long = "ref")]
        reference: PathBuf,
        /// Rigid alignment instead of similarity.
        #[arg(long)]
        no_scale: bool,
        /// No alignment at all.
        #[arg(long, conflicts_with = "no_scale")]
        no_align: bool,
    },
    /// Paired lp/gp runs over consecutive seeds.
    Ablate {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 10)]
        seeds: usize,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "json")]
        format: Format,
    },
    /// Vanishing points of a segment list (`id x1 y1 x2 y2` per line).
    DetectVp {
        segments: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Detector parameters (JSON).
        #[arg(long)]
        params: Option<PathBuf>,
    },
}

fn load_config(common: &Common) -> Result<RunConfig> {
    let mut config = match &common.config {
        Some(path) => RunConfig::load(path).map_err(|e| e.at_stage("config"))?,
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        config.scenario.rng_seed = seed;
    }
    config.validate().map_err(|e| e.at_stage("config"))?;
    Ok(config)
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    std::fs::write(path, s)?;
    Ok(())
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate { common, out } => {
            let config = load_config(&common)?;
            let sim = simulate(&config.scenario).map_err(|e| e.at_stage("simulate"))?;
            std::fs::create_dir_all(&out)?;
            let file = std::io::BufWriter::new(std::fs::File::create(out.join("observations.jsonl"))?);
            write_observations_jsonl(&sim.frames, file)?;
            let gt = Trajectory::new(sim.frames.iter().zip(&sim.poses).map(|(f, p)| (f.timestamp, *p)).collect())?;
            save_tum(&gt, &out.join("trajectory_gt.txt"))?;
            write_json(&out.join("world.json"), &sim.world)?;
            write_json(&out.join("truth.json"), &sim.truth)?;
            write_json(&out.join("config.json"), &config)?;
            println!("{} frames written to {}", sim.frames.len(), out.display());
        }
        Command::Run { common, mode, out, format } => {
            let config = load_config(&common)?;
            let output = run_config(&config, mode.into())?;
            write_run_outputs(&output, &out)?;
            let m = &output.metrics;
            match format {
                Format::Json => println!("{}", serde_json::to_string_pretty(m)?),
                Format::Csv => {
                    println!("scenario,mode,seed,ate_rmse_m,initial_ate_m,iters,converged,n_gps");
                    println!(
                        "{},{},{},{},{},{},{},{}",
                        m.scenario, m.mode, m.seed, m.ate_rmse_m, m.initial_ate_m, m.iters, m.converged, m.n_gps
                    );
                }
            }
        }
        Command::Eval { est, reference, no_scale, no_align } => {
            let est = load_tum(&est).map_err(|e| e.at_stage("load_est"))?;
            let reference = load_tum(&reference).map_err(|e| e.at_stage("load_ref"))?;
            let alignment = if no_align {
                Alignment::None
            } else if no_scale {
                Alignment::Rigid
            } else {
                Alignment::Similarity
            };
            let ate = ate_rmse_with(&est, &reference, alignment).map_err(|e| e.at_stage("evaluate"))?;
            println!("{ate}");
        }
        Command::Ablate { common, seeds, out, format } => {
            let config = load_config(&common)?;
            let report = run_ablation_config(&config, seeds)?;
            let text = match format {
                Format::Json => serde_json::to_string_pretty(&report)? + "\n",
                Format::Csv => report.to_csv(),
            };
            match out {
                Some(path) => std::fs::write(path, &text)?,
                None => print!("{text}"),
            }
            eprintln!(
                "mean ATE lp {:.4} m, gp {:.4} m, reduction {:.1}% over {} seeds",
                report.mean_ate_lp, report.mean_ate_gp, report.reduction_pct, report.completed
            );
        }
        Command::DetectVp { segments, seed, params } => {
            let text = std::fs::read_to_string(&segments)?;
            let segs = parse_segment_list(&text).map_err(|e| e.at_stage("parse"))?;
            let params: VpParams = match params {
                Some(p) => {
                    serde_json::from_str(&std::fs::read_to_string(p)?).map_err(|e| Error::Config(e.to_string()))?
                }
                None => VpParams::default(),
            };
            let vps = detect_vanishing_points(&segs, &params, seed).map_err(|e| e.at_stage("detect_vp"))?;
            println!("{}", serde_json::to_string_pretty(&vps)?);
        }
    }
    Ok(())
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config(_) => 2,
        Error::Stage { source, .. } => exit_code(source),
        _ => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
