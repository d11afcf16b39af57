//! Argument parsing and dispatch for the `vtm` binary.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use vtm::bvh::DEFAULT_UNIT_SCALE;
use vtm::camera::Camera;
use vtm::training::EpochLog;

use crate::commands::{
    at_path, evaluate_cmd, gradcheck_cmd, prepare, reconstruct_cmd, root_track_path, train_tpmae_cmd,
    train_vtm_cmd, KeypointSource,
};
use crate::config::{apply_seed_env, defaults_help, parse_config, subcommand_help, Settings, SEED_ENV};
use crate::synth::{write_synth, SynthConfig, FRAME_TIME};
use crate::CliError;

#[derive(Debug, Parser)]
#[command(name = "vtm", version, about = "Motion capture from monocular keypoints", after_help = defaults_help())]
pub struct Cli {
    /// Worker threads for batch shards; overrides the config file.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a dataset from a directory of BVH files.
    Prepare {
        #[arg(long)]
        bvh_dir: PathBuf,
        #[arg(long)]
        camera: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Meters per BVH length unit.
        #[arg(long, default_value_t = DEFAULT_UNIT_SCALE)]
        unit_scale: f64,
        /// Directory of `<id>.vtmf` feature files.
        #[arg(long)]
        features: Option<PathBuf>,
    },
    /// Write procedural walking motions as BVH files plus `camera.txt`.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 8)]
        sequences: usize,
        #[arg(long, default_value_t = 32)]
        frames: usize,
        /// Defaults to VTM_SEED, then 0.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train the motion autoencoder.
    #[command(after_help = subcommand_help(&Settings::tpmae_defaults()))]
    TrainTpmae {
        #[command(flatten)]
        train: TrainArgs,
    },
    /// Jointly train the visual encoder with a trained autoencoder.
    #[command(after_help = subcommand_help(&Settings::vtm_defaults()))]
    TrainVtm {
        #[command(flatten)]
        train: TrainArgs,
        /// Autoencoder checkpoint to start from.
        #[arg(long)]
        tpmae: PathBuf,
    },
    /// Recover skeleton and motion from keypoints.
    Reconstruct {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Output BVH; the root track goes next to it as `.root.csv`.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, requires = "sequence", conflicts_with_all = ["keypoints", "camera", "features"])]
        dataset: Option<PathBuf>,
        #[arg(long)]
        sequence: Option<String>,
        /// VTMD record of pixel keypoints, `T x J x 4`.
        #[arg(long, requires = "camera")]
        keypoints: Option<PathBuf>,
        #[arg(long)]
        camera: Option<PathBuf>,
        #[arg(long)]
        features: Option<PathBuf>,
        /// Frame time written to the BVH when reading keypoint files.
        #[arg(long, default_value_t = FRAME_TIME)]
        frame_time: f64,
        #[arg(long, default_value_t = DEFAULT_UNIT_SCALE)]
        unit_scale: f64,
    },
    /// Print MPJPE, PA-MPJPE, MRPE and MBLE of a BVH against ground truth.
    Evaluate {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long, default_value_t = DEFAULT_UNIT_SCALE)]
        unit_scale: f64,
    },
    /// Compare analytic and finite-difference gradients.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1e-4)]
        tolerance: f64,
    },
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    /// Checkpoint to write.
    #[arg(long)]
    pub out: PathBuf,
    /// `key = value` file; see the key list below.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Per-epoch CSV loss log.
    #[arg(long)]
    pub log: Option<PathBuf>,
}

/// Defaults, then the config file, then `VTM_SEED`, then `--threads`.
pub fn load_settings(
    base: Settings,
    config: Option<&Path>,
    seed_env: Option<&str>,
    threads: Option<usize>,
) -> Result<Settings, CliError> {
    let mut s = match config {
        Some(p) => parse_config(&at_path(fs::read_to_string(p), p)?, base)?,
        None => base,
    };
    apply_seed_env(&mut s, seed_env)?;
    if let Some(t) = threads {
        s.train.threads = t;
    }
    Ok(s)
}

fn print_epochs(joint: bool) -> impl FnMut(&EpochLog) {
    println!("{}", EpochLog::csv_header(joint));
    |l: &EpochLog| {
        println!("{}", l.csv_line());
        let _ = std::io::stdout().flush();
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let seed_env = std::env::var(SEED_ENV).ok();
    match cli.command {
        Command::Prepare {
            bvh_dir,
            camera,
            out,
            unit_scale,
            features,
        } => {
            let cam = Camera::from_text(&at_path(fs::read_to_string(&camera), &camera)?)?;
            let p = prepare(&bvh_dir, &cam, &out, unit_scale, features.as_deref())?;
            for (path, e) in &p.failures {
                eprintln!("skipped {} ({}: {e})", path.display(), e.code());
            }
            println!("sequences: {}", p.dataset.sequences.len());
            println!("skipped: {}", p.failures.len());
        }
        Command::Synth {
            out,
            sequences,
            frames,
            seed,
        } => {
            let seed = match seed {
                Some(s) => s,
                None => {
                    let mut s = Settings::tpmae_defaults();
                    apply_seed_env(&mut s, seed_env.as_deref())?;
                    s.train.seed
                }
            };
            if frames < vtm::representation::WINDOW {
                return Err(CliError::Usage(format!(
                    "--frames must be at least {}",
                    vtm::representation::WINDOW
                )));
            }
            let paths = write_synth(
                &out,
                &SynthConfig {
                    sequences,
                    frames,
                    seed,
                },
            )?;
            println!("wrote {} BVH files to {}", paths.len(), out.display());
        }
        Command::TrainTpmae { train } => {
            let s = load_settings(
                Settings::tpmae_defaults(),
                train.config.as_deref(),
                seed_env.as_deref(),
                cli.threads,
            )?;
            let mut cb = print_epochs(false);
            train_tpmae_cmd(&train.dataset, &train.out, &s, train.log.as_deref(), &mut cb)?;
        }
        Command::TrainVtm { train, tpmae } => {
            let s = load_settings(
                Settings::vtm_defaults(),
                train.config.as_deref(),
                seed_env.as_deref(),
                cli.threads,
            )?;
            let mut cb = print_epochs(true);
            train_vtm_cmd(
                &train.dataset,
                &tpmae,
                &train.out,
                &s,
                train.log.as_deref(),
                &mut cb,
            )?;
        }
        Command::Reconstruct {
            checkpoint,
            out,
            dataset,
            sequence,
            keypoints,
            camera,
            features,
            frame_time,
            unit_scale,
        } => {
            let source = match (dataset, sequence, keypoints, camera) {
                (Some(dir), Some(sequence), None, None) => KeypointSource::Dataset { dir, sequence },
                (None, _, Some(keypoints), Some(camera)) => KeypointSource::Files {
                    keypoints,
                    camera,
                    features,
                    frame_time,
                },
                _ => {
                    return Err(CliError::Usage(
                        "give either --dataset and --sequence, or --keypoints and --camera".into(),
                    ))
                }
            };
            let rec = reconstruct_cmd(&checkpoint, &source, &out, unit_scale)?;
            println!("frames: {}", rec.poses.len());
            println!("bvh: {}", out.display());
            println!("root_track: {}", root_track_path(&out).display());
        }
        Command::Evaluate { pred, gt, unit_scale } => {
            print!("{}", evaluate_cmd(&pred, &gt, unit_scale)?);
        }
        Command::Gradcheck { seed, tolerance } => {
            let (checks, ok) = gradcheck_cmd(seed, tolerance)?;
            for c in &checks {
                println!(
                    "{:<18} max_rel {:.3e} checked {:>4} {}",
                    c.name,
                    c.report.max_rel_error,
                    c.report.checked,
                    if c.report.passed(tolerance) {
                        "ok"
                    } else {
                        "FAILED"
                    }
                );
            }
            if !ok {
                return Err(CliError::Gradcheck(format!("relative error above {tolerance:e}")));
            }
        }
    }
    Ok(())
}
