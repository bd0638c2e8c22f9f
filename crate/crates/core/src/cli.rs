//! Command-line front end.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 configuration or parse error,
//! 3 postselection on a detector the photon cannot reach.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::circuit::{build_unfolded, modes, weak_trace_with_floor, Preset, Tuning};
use crate::config::{DeviceConfig, CONFIG_ENV};
use crate::error::{Error, Result};
use crate::protocol::{parse_pbm, transmit_image, write_pbm, Channel, Policy};
use crate::spectral::{extract_peaks, scan_spectrum, source_filter_cascade, PeakTable, ScanOptions};

#[derive(Debug, Parser)]
#[command(name = "cfcomm", version, about = "Counterfactual communication simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Detected sideband spectrum behind the scanning etalon (CSV), with the
    /// peak table on stdout.
    Spectrum(SpectrumArgs),
    /// First-order weak trace on every arm (JSON).
    Trace(TraceArgs),
    /// Sends a PBM image bit by bit and writes what Alice receives.
    SendImage(SendImageArgs),
    /// Linewidth and side-peak suppression of the source etalon cascade.
    SourceFilter(ConfigArg),
}

#[derive(Debug, Args)]
pub struct ConfigArg {
    /// Device configuration JSON; defaults to $CFCOMM_CONFIG, then the
    /// built-in reference device.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Noise {
    On,
    Off,
}

#[derive(Debug, Args)]
pub struct SpectrumArgs {
    #[command(flatten)]
    pub config: ConfigArg,
    #[arg(long)]
    pub tuning: Preset,
    #[arg(long)]
    pub detector: String,
    /// Carrier-peak scale of the spectrum, in detected photons.
    #[arg(long, default_value_t = 1e6)]
    pub photons: f64,
    #[arg(long, value_enum, default_value_t = Noise::Off)]
    pub noise: Noise,
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides the configured seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct TraceArgs {
    #[command(flatten)]
    pub config: ConfigArg,
    #[arg(long)]
    pub tuning: Preset,
    #[arg(long)]
    pub detector: String,
}

#[derive(Debug, Args)]
pub struct SendImageArgs {
    #[command(flatten)]
    pub config: ConfigArg,
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// `first-click` or `majority:K` with odd K.
    #[arg(long, default_value = "first-click")]
    pub policy: Policy,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Where to write the statistics JSON; stdout if omitted.
    #[arg(long)]
    pub stats: Option<PathBuf>,
}

pub fn load_config(arg: &ConfigArg) -> Result<DeviceConfig> {
    match &arg.config {
        Some(p) => DeviceConfig::load(p),
        None => match std::env::var_os(CONFIG_ENV) {
            Some(p) => DeviceConfig::load(Path::new(&p)),
            None => Ok(DeviceConfig::reference()),
        },
    }
}

fn write_file(path: &Path, contents: &[u8]) -> Result<()> {
    std::fs::write(path, contents)?;
    Ok(())
}

fn print_json(value: &impl serde::Serialize) -> Result<()> {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

/// Spectrum plus peak table, with heights relative to the calibration
/// spectrum at D0 taken with the same options.
pub fn spectrum(cfg: &DeviceConfig, tuning: Preset, detector: &str, opts: &ScanOptions) -> Result<(crate::spectral::Spectrum, PeakTable)> {
    let labels: Vec<_> = cfg.eoms.iter().map(|e| (e.label, e.freq_ghz)).collect();
    let scan = cfg.etalons.scan;

    let c = build_unfolded(cfg, Tuning::preset(tuning))?;
    let s = scan_spectrum(&c, detector, &scan, &tuning.to_string(), opts)?;
    let table = extract_peaks(&s, &labels)?;

    let cal_circuit = build_unfolded(cfg, Tuning::preset(Preset::Calibration))?;
    let cal = scan_spectrum(&cal_circuit, modes::D0, &scan, "calibration", opts)?;
    let cal_table = extract_peaks(&cal, &labels)?;
    Ok((s, table.with_calibration(Some(&cal_table))?))
}

pub fn scan_options(cfg: &DeviceConfig, photons: f64, noise: bool, seed: u64) -> ScanOptions {
    ScanOptions {
        range_ghz: cfg.scan.range_ghz,
        step_ghz: cfg.scan.step_ghz,
        photons,
        noise,
        replicas: cfg.scan.replicas,
        dark_counts_per_point: 0.0,
        seed,
    }
}

/// `{arm: trace}` with traces at or below the configured floor printed as 0.
pub fn trace_json(cfg: &DeviceConfig, tuning: Preset, detector: &str) -> Result<serde_json::Value> {
    let c = build_unfolded(cfg, Tuning::preset(tuning))?;
    let report = weak_trace_with_floor(&c, detector, cfg.trace_floor)?;
    Ok(serde_json::Value::Object(
        report
            .arms
            .iter()
            .map(|(arm, v)| {
                let v = if report.below_floor[arm] { 0.0 } else { *v };
                (arm.to_string(), serde_json::json!(v))
            })
            .collect(),
    ))
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Spectrum(a) => {
            let cfg = load_config(&a.config)?;
            let opts = scan_options(&cfg, a.photons, a.noise == Noise::On, a.seed.unwrap_or(cfg.seed));
            let (s, table) = spectrum(&cfg, a.tuning, &a.detector, &opts)?;
            let mut csv = Vec::new();
            s.write_csv(&mut csv)?;
            write_file(&a.out, &csv)?;
            print_json(&table)
        }
        Command::Trace(a) => {
            let cfg = load_config(&a.config)?;
            print_json(&trace_json(&cfg, a.tuning, &a.detector)?)
        }
        Command::SendImage(a) => {
            let cfg = load_config(&a.config)?;
            let text = std::fs::read_to_string(&a.input)
                .map_err(|e| Error::Parse(format!("cannot read {}: {e}", a.input.display())))?;
            let bm = parse_pbm(&text)?;
            let model = cfg.imperfection_model()?;
            let channel = Channel::from_config(&cfg)?;
            let seed = a.seed.unwrap_or(cfg.seed);
            let t = transmit_image(&bm, &channel, &model, &cfg.schedule(a.policy), seed)?;
            write_file(&a.out, write_pbm(&t.received).as_bytes())?;
            match &a.stats {
                Some(p) => write_file(p, format!("{}\n", serde_json::to_string_pretty(&t.stats)?).as_bytes()),
                None => print_json(&t.stats),
            }
        }
        Command::SourceFilter(a) => {
            let cfg = load_config(&a)?;
            let e = &cfg.etalons;
            print_json(&source_filter_cascade(&e.source, e.raw_linewidth_ghz, e.cascade_window_ghz)?)
        }
    }
}
