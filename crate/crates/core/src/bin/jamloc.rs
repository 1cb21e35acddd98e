use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use jamloc::baselines::{centroid_estimate, ls_estimate, ReceiverPosition};
use jamloc::channel::{synthesize, MeasurementKind};
use jamloc::config::FileConfig;
use jamloc::estimator::joint_estimate;
use jamloc::experiments::{export_csv, run_sweep, write_csv, SweepFamily, SweepSpec, DEFAULT_TRIALS};
use jamloc::report::{parse_methods, EstimateReport, Method};
use jamloc::scenario::generate_scenario;
use jamloc::Result;

/// Jammer localization from crowdsourced AGC and C/N0 drops.
#[derive(Parser)]
#[command(name = "jamloc", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Error against number of receivers, starts uniform in a cube.
    ReceiverSweep(SweepArgs),
    /// Error against number of receivers on a road east of the jammer (2D).
    RoadSweep(SweepArgs),
    /// Error against AGC noise variance, 7 receivers.
    NoiseSweep(SweepArgs),
    /// Error against the initial zeta of the estimator, 7 receivers.
    ZetaInitSweep(SweepArgs),
    /// Error against number of receivers using C/N0 measurements.
    CnirReceiverSweep(SweepArgs),
    /// Error against per-satellite C/N0 noise variance, 7 receivers.
    CnirNoiseSweep(SweepArgs),
    /// Simulate one scenario and print every method's estimate as JSON.
    Estimate(EstimateArgs),
}

#[derive(Args)]
struct SweepArgs {
    /// Monte Carlo trials per sweep value.
    #[arg(long, default_value_t = DEFAULT_TRIALS)]
    trials: usize,
    /// Master seed for the per-trial scenario seeds.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// TOML file overriding scenario and estimator settings.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output CSV; standard output if omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated subset of proposed,centroid,ls.
    #[arg(long)]
    methods: Option<String>,
    /// Measurement type, agc or cnir.
    #[arg(long)]
    kind: Option<MeasurementKind>,
    /// Comma-separated sweep values replacing the defaults.
    #[arg(long, value_delimiter = ',')]
    values: Option<Vec<f64>>,
}

#[derive(Args)]
struct EstimateArgs {
    /// TOML file overriding scenario and estimator settings.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Scenario seed, overriding the configuration.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "agc")]
    kind: MeasurementKind,
    #[arg(long, default_value = "proposed,centroid,ls")]
    methods: String,
    /// Also write the synthesized measurements to this CSV file.
    #[arg(long)]
    measurements: Option<PathBuf>,
}

fn load_config(base: FileConfig, path: Option<&PathBuf>) -> Result<FileConfig> {
    match path {
        Some(p) => base.overlay_toml(&std::fs::read_to_string(p)?),
        None => Ok(base),
    }
}

fn sweep(family: SweepFamily, args: SweepArgs) -> Result<()> {
    let standard = SweepSpec::standard(family);
    let base = FileConfig { scenario: standard.base.clone(), estimator: standard.estimator.clone() };
    let cfg = load_config(base, args.config.as_ref())?;
    let spec = SweepSpec {
        sweep_values: args.values.unwrap_or(standard.sweep_values.clone()),
        trials: args.trials,
        base: cfg.scenario,
        estimator: cfg.estimator,
        methods: match &args.methods {
            Some(list) => parse_methods(list)?,
            None => standard.methods.clone(),
        },
        kind: args.kind.unwrap_or(standard.kind),
        master_seed: args.seed,
        ..standard
    };
    let result = run_sweep(&spec)?;
    match &args.out {
        Some(path) => export_csv(&result, path)?,
        None => write_csv(&result, std::io::stdout().lock())?,
    }
    for row in &result.rows {
        eprintln!(
            "{:>8} {:<9} median {:>9.2} m  [{:.2}, {:.2}]  failures {}/{}",
            row.value, row.method, row.median, row.p25, row.p75, row.n_failures, row.n_trials
        );
    }
    Ok(())
}

fn estimate(args: EstimateArgs) -> Result<()> {
    let mut cfg = load_config(FileConfig::default(), args.config.as_ref())?;
    if let Some(seed) = args.seed {
        cfg.scenario.rng_seed = seed;
    }
    let methods = parse_methods(&args.methods)?;
    let truth = generate_scenario(&cfg.scenario)?;
    let meas = synthesize(&truth, &cfg.scenario, args.kind)?;
    if let Some(path) = &args.measurements {
        meas.write_csv(std::fs::File::create(path)?)?;
    }
    let threshold = cfg.estimator.detection_threshold_db;
    let jammed = meas.jammed_receivers(threshold);
    let mut reports = Vec::with_capacity(methods.len());
    for method in methods {
        let report = match method {
            Method::Proposed => EstimateReport::from(&joint_estimate(&meas, &cfg.estimator)?),
            Method::Centroid => EstimateReport::baseline(
                method,
                centroid_estimate(&meas, threshold, ReceiverPosition::Start)?,
                jammed.clone(),
            ),
            Method::Ls => {
                EstimateReport::baseline(method, ls_estimate(&meas, &truth.zeta, threshold)?, jammed.clone())
            }
        };
        reports.push(report);
    }
    let mut out = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, &reports)?;
    writeln!(out)?;
    eprintln!("true jammer position: {:?}", truth.jammer_pos.to_array());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::ReceiverSweep(a) => sweep(SweepFamily::ReceiverSweep, a),
        Command::RoadSweep(a) => sweep(SweepFamily::RoadSweep, a),
        Command::NoiseSweep(a) => sweep(SweepFamily::NoiseSweep, a),
        Command::ZetaInitSweep(a) => sweep(SweepFamily::ZetaInitSweep, a),
        Command::CnirReceiverSweep(a) => sweep(SweepFamily::CnirReceiverSweep, a),
        Command::CnirNoiseSweep(a) => sweep(SweepFamily::CnirNoiseSweep, a),
        Command::Estimate(a) => estimate(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
