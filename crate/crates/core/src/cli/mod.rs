//! Command-line front end: `prepare`, `measure`, `report` and `verify`.

mod commands;
pub mod config;
mod session;

use std::ffi::OsString;
use std::path::PathBuf;

use chrono::{DateTime, Utc};
use clap::{Args, Parser, Subcommand};

pub use commands::{MeasurementRecord, MEASUREMENT_SCHEMA_VERSION, RESULT_FILE};
pub use config::RunConfig;

use crate::audio::SampleFormat;
use crate::error::Result;

pub const OUT_DIR_ENV: &str = "SAFEGUARD_OUT_DIR";

#[derive(Debug, Parser)]
#[command(name = "safeguard", version, about = "Safeguarded test signals and impulse response measurement")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Turn a sound file into a safeguarded stimulus plus metadata sidecar.
    Prepare(PrepareArgs),
    /// Measure (or simulate) a channel with a safeguarded stimulus.
    Measure(MeasureArgs),
    /// Write report files for a measurement session directory.
    Report(ReportArgs),
    /// Re-check a stimulus against the floor stored in its sidecar.
    Verify(VerifyArgs),
}

fn parse_timestamp(raw: &str) -> std::result::Result<DateTime<Utc>, String> {
    DateTime::parse_from_rfc3339(raw)
        .map(|t| t.with_timezone(&Utc))
        .map_err(|e| e.to_string())
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// JSON run configuration; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output (session) directory.
    #[arg(long, env = OUT_DIR_ENV)]
    pub out_dir: Option<PathBuf>,
    /// Fixed RFC 3339 timestamp for log entries, for reproducible output.
    #[arg(long, value_parser = parse_timestamp)]
    pub timestamp: Option<DateTime<Utc>>,
}

impl CommonArgs {
    fn load(&self) -> Result<RunConfig> {
        let mut cfg = RunConfig::load_or_default(self.config.as_deref())?;
        if let Some(dir) = &self.out_dir {
            cfg.output_dir = Some(dir.clone());
        }
        if let Some(t) = self.timestamp {
            cfg.timestamp = Some(t);
        }
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Args)]
pub struct PrepareArgs {
    pub input: PathBuf,
    #[command(flatten)]
    pub common: CommonArgs,
    /// Channel to read from a multichannel input (0-based).
    #[arg(long)]
    pub input_channel: Option<u16>,
    /// Use a flat floor relative to the spectral peak.
    #[arg(long)]
    pub flat_floor: bool,
    #[arg(long, allow_negative_numbers = true)]
    pub level_db: Option<f64>,
    #[arg(long)]
    pub window_bins: Option<usize>,
    #[arg(long, allow_negative_numbers = true)]
    pub rel_floor_db: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub abs_floor_db: Option<f64>,
    #[arg(long)]
    pub pad_len: Option<usize>,
    /// Reuse the floor stored in an existing sidecar.
    #[arg(long)]
    pub profile: Option<PathBuf>,
    /// Give zero-magnitude bins a random phase from this seed.
    #[arg(long)]
    pub random_phase_seed: Option<u64>,
    /// Stimulus sample format: float32, pcm24 or pcm16.
    #[arg(long)]
    pub format: Option<SampleFormat>,
}

impl PrepareArgs {
    pub fn config(&self) -> Result<RunConfig> {
        let mut cfg = self.common.load()?;
        let sg = &mut cfg.safeguard;
        if self.flat_floor {
            sg.flat_floor = true;
        }
        if self.input_channel.is_some() {
            sg.input_channel = self.input_channel;
        }
        if let Some(v) = self.level_db {
            sg.level_db = v;
        }
        if let Some(v) = self.window_bins {
            sg.window_bins = v;
        }
        if let Some(v) = self.rel_floor_db {
            sg.rel_floor_db = v;
        }
        if let Some(v) = self.abs_floor_db {
            sg.abs_floor_db = v;
        }
        if let Some(v) = self.pad_len {
            sg.pad_len = v;
        }
        if self.profile.is_some() {
            sg.profile_from = self.profile.clone();
        }
        if self.random_phase_seed.is_some() {
            sg.random_phase_seed = self.random_phase_seed;
        }
        if let Some(f) = self.format {
            sg.format = f;
        }
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Args)]
pub struct MeasureArgs {
    /// Safeguarded stimulus; its sidecar must sit next to it.
    pub stimulus: PathBuf,
    #[command(flatten)]
    pub common: CommonArgs,
    /// Impulse response WAV of the simulated channel.
    #[arg(long, conflicts_with = "taps")]
    pub channel: Option<PathBuf>,
    /// Impulse response taps of the simulated channel, comma separated.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub taps: Option<Vec<f64>>,
    /// Noise level as SNR relative to the clean output RMS.
    #[arg(long, allow_negative_numbers = true, conflicts_with = "noise_sigma")]
    pub snr: Option<f64>,
    /// Noise level as an absolute standard deviation.
    #[arg(long)]
    pub noise_sigma: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of periods presented; the first is discarded.
    #[arg(long, conflicts_with = "single_shot")]
    pub periods: Option<usize>,
    #[arg(long)]
    pub single_shot: bool,
    /// Repeat the measurement with the unsafeguarded original.
    #[arg(long)]
    pub compare_raw: bool,
    /// Use a recorded response instead of simulating.
    #[arg(long)]
    pub response: Option<PathBuf>,
}

impl MeasureArgs {
    pub fn config(&self) -> Result<RunConfig> {
        let mut cfg = self.common.load()?;
        let ch = &mut cfg.channel;
        if self.channel.is_some() {
            ch.ir_path = self.channel.clone();
            ch.taps = None;
        }
        if self.taps.is_some() {
            ch.taps = self.taps.clone();
            ch.ir_path = None;
        }
        if self.snr.is_some() {
            ch.snr_db = self.snr;
            ch.noise_sigma = None;
        }
        if self.noise_sigma.is_some() {
            ch.noise_sigma = self.noise_sigma;
            ch.snr_db = None;
        }
        if let Some(s) = self.seed {
            ch.seed = s;
        }
        let m = &mut cfg.measurement;
        if let Some(p) = self.periods {
            m.periods = p;
            m.single_shot = false;
        }
        if self.single_shot {
            m.single_shot = true;
        }
        if self.compare_raw {
            m.compare_raw = true;
        }
        if self.response.is_some() {
            m.response_path = self.response.clone();
        }
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Args)]
pub struct ReportArgs {
    pub session_dir: PathBuf,
    /// Fixed RFC 3339 timestamp for the log entries this run appends.
    #[arg(long, value_parser = parse_timestamp)]
    pub timestamp: Option<DateTime<Utc>>,
    #[arg(long, conflicts_with = "no_csv")]
    pub no_json: bool,
    #[arg(long)]
    pub no_csv: bool,
}

#[derive(Debug, Clone, Args)]
pub struct VerifyArgs {
    pub stimulus: PathBuf,
    /// Sidecar to check against; defaults to the one next to the stimulus.
    #[arg(long)]
    pub sidecar: Option<PathBuf>,
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Prepare(args) => commands::prepare(&args.input, &args.config()?),
        Command::Measure(args) => commands::measure(&args.stimulus, &args.config()?),
        Command::Report(args) => commands::report(&args),
        Command::Verify(args) => commands::verify(&args.stimulus, args.sidecar.as_deref()),
    }
}

/// Parse `args`, run, and return the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
