//! `diffcal`: theory curves, capture simulation, correlation analysis and
//! diffuse-field calibration.
//!
//! Exit codes: 0 success, 2 configuration or usage error, 3 numerical
//! failure, 4 I/O failure.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use diffcal::estimator::CaptureMode;
use diffcal::simulator::NoiseColor;

use config::{parse_band, parse_counts, RunConfig};

pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_NUMERICAL: u8 = 3;
pub const EXIT_IO: u8 = 4;
/// Fallback output directory when neither `--out` nor the config sets one.
pub const OUT_DIR_ENV: &str = "DIFFCAL_OUT_DIR";

#[derive(Parser, Debug)]
#[command(
    name = "diffcal",
    version,
    about = "Diffuse-field correlation and microphone array calibration"
)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory [env: DIFFCAL_OUT_DIR].
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Speaker count, or a comma-separated list for campaigns.
    #[arg(long, global = true, value_parser = parse_speaker_list)]
    speakers: Option<SpeakerList>,
    #[arg(long, global = true)]
    mode: Option<CaptureMode>,
    /// Band edges in Hz, as LO,HI.
    #[arg(long, global = true, value_parser = parse_band, allow_hyphen_values = true)]
    band: Option<[f64; 2]>,
    /// Capture length in seconds.
    #[arg(long, global = true)]
    duration: Option<f64>,
    /// Sample rate in Hz.
    #[arg(long, global = true)]
    fs: Option<f64>,
    /// Microphone array: linear16 or sphere32.
    #[arg(long, global = true)]
    array: Option<String>,
}

/// Comma-separated speaker counts, kept as one flag value.
#[derive(Debug, Clone)]
struct SpeakerList(Vec<usize>);

fn parse_speaker_list(s: &str) -> Result<SpeakerList, String> {
    parse_counts(s).map(SpeakerList)
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Tabulate the theoretical correlation curves against distance.
    Theory {
        #[arg(long)]
        d_max: Option<f64>,
        #[arg(long)]
        points: Option<usize>,
    },
    /// Render a fixed or perturbed capture to WAV with a JSON sidecar.
    Simulate {
        #[arg(long)]
        color: Option<NoiseColor>,
        /// Apply random smooth per-channel gains bounded by this many dB.
        #[arg(long)]
        gains_max_db: Option<f64>,
    },
    /// Correlation curves and variance tables from recordings or a campaign.
    Analyze {
        recordings: Vec<PathBuf>,
        /// Run a matched-seed fixed versus perturbed simulation campaign.
        #[arg(long)]
        campaign: bool,
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Diffuse-field magnitude calibration of a multichannel recording.
    Calibrate {
        recording: Option<PathBuf>,
        /// Also write the filtered recording.
        #[arg(long)]
        write_filtered: bool,
        #[arg(long)]
        filter_len: Option<usize>,
    },
}

#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Core(diffcal::Error),
}

impl From<diffcal::Error> for Failure {
    fn from(e: diffcal::Error) -> Self {
        Failure::Core(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Core(e.into())
    }
}

impl Failure {
    fn exit_code(&self) -> u8 {
        match self {
            Failure::Usage(_) => EXIT_CONFIG,
            Failure::Core(e) if e.is_config_error() => EXIT_CONFIG,
            Failure::Core(diffcal::Error::Io(_) | diffcal::Error::Wav(_)) => EXIT_IO,
            Failure::Core(_) => EXIT_NUMERICAL,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Usage(m) => f.write_str(m),
            Failure::Core(e) => write!(f, "{e}"),
        }
    }
}

fn load_config(common: &Common) -> Result<RunConfig, Failure> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p).map_err(|e| match e {
            diffcal::Error::Io(io) => {
                Failure::Usage(format!("cannot read config {}: {io}", p.display()))
            }
            other => Failure::Core(other),
        })?,
        None => RunConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(o) = &common.out {
        cfg.out_dir = Some(o.clone());
    }
    if let Some(b) = common.band {
        cfg.band_hz = Some(b);
    }
    if let Some(d) = common.duration {
        cfg.duration = d;
    }
    if let Some(fs) = common.fs {
        cfg.sample_rate = fs;
    }
    if let Some(a) = &common.array {
        cfg.array = Some(a.clone());
    }
    if let Some(m) = common.mode {
        cfg.simulate.mode = m;
    }
    if let Some(SpeakerList(s)) = &common.speakers {
        cfg.analyze.speaker_counts = s.clone();
        if let [n] = s.as_slice() {
            cfg.simulate.speakers = *n;
        }
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), Failure> {
    let mut cfg = load_config(&cli.common)?;
    let name = match &cli.command {
        Command::Theory { d_max, points } => {
            if let Some(d) = d_max {
                cfg.theory.d_max = *d;
            }
            if let Some(n) = points {
                cfg.theory.n_points = *n;
            }
            "theory"
        }
        Command::Simulate {
            color,
            gains_max_db,
        } => {
            if let Some(SpeakerList(s)) = &cli.common.speakers {
                if s.len() != 1 {
                    return Err(Failure::Usage(
                        "simulate takes a single speaker count".into(),
                    ));
                }
            }
            if let Some(c) = color {
                cfg.simulate.color = *c;
            }
            if gains_max_db.is_some() {
                cfg.simulate.gains_max_db = *gains_max_db;
            }
            "simulate"
        }
        Command::Analyze {
            recordings,
            campaign,
            trials,
        } => {
            if !recordings.is_empty() {
                cfg.analyze.recordings = recordings.clone();
            }
            cfg.analyze.campaign |= campaign;
            if let Some(t) = trials {
                cfg.analyze.trials = *t;
            }
            "analyze"
        }
        Command::Calibrate {
            recording,
            write_filtered,
            filter_len,
        } => {
            if recording.is_some() {
                cfg.calibrate.recording = recording.clone();
            }
            cfg.calibrate.write_filtered |= write_filtered;
            if let Some(n) = filter_len {
                cfg.calibrate.filter_len = *n;
            }
            "calibrate"
        }
    };
    cfg.validate()?;
    let out_dir = cfg
        .out_dir
        .clone()
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&out_dir)?;
    let ctx = commands::Context::new(cfg, out_dir, name);
    match name {
        "theory" => commands::theory::run(&ctx),
        "simulate" => commands::simulate::run(&ctx),
        "analyze" => commands::analyze::run(&ctx),
        _ => commands::calibrate::run(&ctx),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
