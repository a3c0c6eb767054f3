//! `phonemap` command-line frontend.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use phonemap::mapping::{DEFAULT_C2C_MAX_DIST, DEFAULT_C2C_RADIUS};
use phonemap::tempcal::{DEFAULT_PERIOD, DEFAULT_WINDOW};
use phonemap::trajeval::DEFAULT_MAX_DT;

#[derive(Parser, Debug)]
#[command(name = "phonemap", version, about = "Lidar-phone mapping toolkit: sync, calibration, trajectory and map accuracy")]
struct Cli {
    #[command(flatten)]
    out: ReportArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct ReportArgs {
    /// Also write the report to this file.
    #[arg(long, global = true)]
    report: Option<PathBuf>,
    /// Write metrics as `metric,length,value` CSV.
    #[arg(long, global = true)]
    metrics_csv: Option<PathBuf>,
    /// Print wall time to stderr.
    #[arg(long, global = true)]
    timing: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit a sensor-to-host clock model and smooth host timestamps.
    Sync {
        pairs: PathBuf,
        /// Smoothed timestamps CSV.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Smooth each pair with the model fitted to pairs up to it.
        #[arg(long)]
        causal: bool,
        #[arg(long, default_value_t = 50)]
        warmup: usize,
    },
    /// Estimate the lidar-IMU time offset and rotation.
    Calib {
        imu: PathBuf,
        odom: PathBuf,
        /// Offset search half-width, s.
        #[arg(long, default_value_t = DEFAULT_WINDOW)]
        window: f64,
        /// Resampling period, s.
        #[arg(long, default_value_t = DEFAULT_PERIOD)]
        period: f64,
        /// Key-value file with the estimate.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Rigid (or similarity) alignment of an estimate onto a reference.
    Align {
        est: PathBuf,
        reference: PathBuf,
        #[command(flatten)]
        assoc: AssocArgs,
        /// Estimate scale as well.
        #[arg(long)]
        scale: bool,
        /// Aligned estimate as TUM.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Absolute trajectory error after alignment.
    Ate {
        est: PathBuf,
        reference: PathBuf,
        #[command(flatten)]
        assoc: AssocArgs,
        /// Compare without aligning first.
        #[arg(long)]
        no_align: bool,
    },
    /// Relative pose error over fixed path lengths; several
    /// `EST REF` pairs are reported per sequence and pooled.
    Rpe {
        #[arg(required = true, num_args = 2.., value_names = ["EST", "REF"])]
        trajectories: Vec<PathBuf>,
        /// Segment lengths, m.
        #[arg(long, value_delimiter = ',', default_values_t = phonemap::trajeval::DEFAULT_RPE_LENGTHS)]
        lengths: Vec<f64>,
        #[arg(long, default_value_t = DEFAULT_MAX_DT)]
        max_dt: f64,
    },
    /// Motion-correct scans to their start-time pose.
    Undistort {
        scans: PathBuf,
        traj: PathBuf,
        /// Output scan directory.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        ascii: bool,
    },
    /// Undistort scans and merge them into one world-frame cloud.
    Aggregate {
        scans: PathBuf,
        traj: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Skip undistortion.
        #[arg(long)]
        raw: bool,
        #[arg(long)]
        ascii: bool,
    },
    /// Uniform random subsample to a point or byte budget.
    Downsample {
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Target point count.
        #[arg(long, conflicts_with = "bytes")]
        points: Option<usize>,
        /// Target size; 16 bytes per point.
        #[arg(long, default_value_t = 20_000_000)]
        bytes: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        ascii: bool,
    },
    /// Cloud-to-cloud distance against local reference planes.
    C2c {
        compared: PathBuf,
        reference: PathBuf,
        #[arg(long, default_value_t = DEFAULT_C2C_RADIUS)]
        radius: f64,
        #[arg(long, default_value_t = DEFAULT_C2C_MAX_DIST)]
        max_dist: f64,
        /// Also compute reference → compared.
        #[arg(long)]
        both: bool,
        /// Per-point distances CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Point-to-plane ICP refinement of one cloud onto another.
    Icp {
        compared: PathBuf,
        reference: PathBuf,
        #[arg(long, default_value_t = 50)]
        max_iterations: usize,
        #[arg(long, default_value_t = 1e-6)]
        tolerance: f64,
        #[arg(long, default_value_t = 0.7)]
        max_dist: f64,
        #[arg(long, default_value_t = 0.3)]
        normal_radius: f64,
        /// Refined compared cloud.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Project a cloud into a pinhole camera image.
    Project {
        cloud: PathBuf,
        camera: PathBuf,
        /// `u,v,depth,index` CSV.
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a synthetic dataset from a TOML config.
    Simgen {
        /// TOML config; omitted keys take defaults.
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Override the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Skip room scans.
        #[arg(long)]
        no_scans: bool,
    },
}

#[derive(Args, Debug, Clone, Copy)]
struct AssocArgs {
    /// Largest timestamp gap for a match, s.
    #[arg(long, default_value_t = DEFAULT_MAX_DT)]
    max_dt: f64,
    /// Added to estimate timestamps before matching, s.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    offset: f64,
}

/// Failure classes mapped to exit codes; messages are already rendered.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Data(String),
    Algorithm(String),
}

impl Failure {
    /// Prefixes the message with the file it concerns.
    pub fn in_file(path: &std::path::Path, e: phonemap::Error) -> Failure {
        let msg = format!("{}: {e}", path.display());
        if e.is_algorithmic() {
            Failure::Algorithm(msg)
        } else {
            Failure::Data(msg)
        }
    }
}

impl From<phonemap::Error> for Failure {
    fn from(e: phonemap::Error) -> Self {
        if e.is_algorithmic() {
            Failure::Algorithm(e.to_string())
        } else {
            Failure::Data(e.to_string())
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Data(e.to_string())
    }
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let text = e.to_string();
            let first = text.lines().find(|l| !l.trim().is_empty()).unwrap_or("invalid arguments");
            eprintln!("error: usage: {}", one_line(first.trim_start_matches("error: ")));
            return ExitCode::from(1);
        }
    };
    let started = Instant::now();
    let result = commands::run(cli.command, &cli.out);
    if cli.out.timing {
        eprintln!("wall_time = {:.3} s", started.elapsed().as_secs_f64());
    }
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: usage: {}", one_line(&msg));
            ExitCode::from(1)
        }
        Err(Failure::Data(msg)) => {
            eprintln!("error: data: {}", one_line(&msg));
            ExitCode::from(2)
        }
        Err(Failure::Algorithm(msg)) => {
            eprintln!("error: algorithm: {}", one_line(&msg));
            ExitCode::from(3)
        }
    }
}
