use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use safelink_core::channels::{
    calibrate_scenario, initial_guess, preset, Calibrated, CalibrationError, ChannelError,
    ChannelSpec, LatencyTargets, ScenarioName, ScenarioSpec, SearchConfig,
};
use safelink_core::harness::{
    export_reports, run_toggle_experiment, run_watchdog_probe, ExperimentConfig, HarnessError,
    Measure, ProbeConfig, ReportFormat,
};
use safelink_core::protocol::ChannelId;
use safelink_core::sim::SimTime;

const EXIT_FAILURE: u8 = 1;
const EXIT_ABORTED: u8 = 2;

#[derive(Parser, Debug)]
#[command(
    name = "safelink",
    version,
    about = "Remote E-Stop link and power simulator"
)]
struct Cli {
    /// Master seed. Falls back to SAFELINK_SEED, then 0.
    #[arg(long, global = true, env = "SAFELINK_SEED", default_value_t = 0)]
    seed: u64,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the toggle experiment and print latency statistics.
    Run(RunArgs),
    /// Fit link parameters to latency targets and write presets.
    Calibrate(CalibrateArgs),
    /// Silence every link repeatedly and measure the watchdog reaction.
    ProbeWatchdog(ProbeArgs),
    /// List the built-in scenarios and their targets.
    ListScenarios,
}

#[derive(clap::Args, Debug)]
struct RunArgs {
    /// Scenario name, preset file, `ideal`, or `all`.
    #[arg(long, default_value = "all")]
    scenario: String,
    #[arg(long, default_value_t = 1000)]
    toggles: u32,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
    #[arg(long, value_enum, default_value_t = MeasureArg::Release)]
    measure: MeasureArg,
    /// Include every latency sample in the JSON output.
    #[arg(long)]
    keep_samples: bool,
    /// Write to this file instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(clap::Args, Debug)]
struct CalibrateArgs {
    /// Scenario name or `all`.
    #[arg(long, default_value = "all")]
    scenario: String,
    /// JSON file with `{"mean": .., "std": .., "max": ..}` in ms. Only
    /// valid for a single scenario.
    #[arg(long)]
    targets: Option<PathBuf>,
    #[arg(long, default_value_t = 40)]
    max_iters: u32,
    /// Toggles simulated per candidate.
    #[arg(long, default_value_t = 1000)]
    toggles: u32,
    /// Directory the fitted presets are written to.
    #[arg(long, default_value = "crates/core/presets")]
    out: PathBuf,
}

#[derive(clap::Args, Debug)]
struct ProbeArgs {
    #[arg(long, default_value = "ideal")]
    scenario: String,
    #[arg(long, default_value_t = 1000)]
    probes: u32,
    /// Bounded silence length in ms; links resume afterwards.
    #[arg(long)]
    silence_ms: Option<u64>,
    /// Start each silence right after a delivered frame.
    #[arg(long)]
    align: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum MeasureArg {
    Release,
    Activate,
    Both,
}

impl From<MeasureArg> for Measure {
    fn from(m: MeasureArg) -> Self {
        match m {
            MeasureArg::Release => Measure::Release,
            MeasureArg::Activate => Measure::Activate,
            MeasureArg::Both => Measure::Both,
        }
    }
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Aborted(String),
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        match e {
            HarnessError::Aborted { .. } => Failure::Aborted(e.to_string()),
            other => Failure::Usage(other.to_string()),
        }
    }
}

fn resolve_scenarios(arg: &str) -> Result<Vec<ScenarioSpec>, Failure> {
    if arg.eq_ignore_ascii_case("all") {
        return Ok(ScenarioName::ALL.into_iter().map(preset).collect());
    }
    if arg.eq_ignore_ascii_case("ideal") {
        return Ok(vec![ScenarioSpec::ideal()]);
    }
    ScenarioSpec::resolve(arg)
        .map(|s| vec![s])
        .map_err(|e| Failure::Usage(e.to_string()))
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), Failure> {
    match out {
        Some(path) => {
            fs::write(path, text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
        }
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run(seed: u64, args: RunArgs) -> Result<(), Failure> {
    let configs: Vec<ExperimentConfig> = resolve_scenarios(&args.scenario)?
        .into_iter()
        .map(|scenario| ExperimentConfig {
            toggles: args.toggles,
            seed,
            measure: args.measure.into(),
            keep_samples: args.keep_samples,
            ..ExperimentConfig::new(scenario)
        })
        .collect();
    // Scenarios are independent engines; run them side by side and keep the
    // input order.
    let results: Vec<_> = std::thread::scope(|s| {
        let handles: Vec<_> = configs
            .iter()
            .map(|cfg| s.spawn(move || run_toggle_experiment(cfg)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("worker panicked"))
            .collect()
    });
    let reports = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    let format = match args.format {
        Format::Json => ReportFormat::Json,
        Format::Csv => ReportFormat::Csv,
    };
    emit(args.out.as_deref(), &export_reports(&reports, format))
}

fn calibrate(seed: u64, args: CalibrateArgs) -> Result<(), Failure> {
    let names: Vec<ScenarioName> = if args.scenario.eq_ignore_ascii_case("all") {
        ScenarioName::ALL.to_vec()
    } else {
        vec![args
            .scenario
            .parse()
            .map_err(|e: ChannelError| Failure::Usage(e.to_string()))?]
    };
    let custom_targets = match &args.targets {
        Some(_) if names.len() > 1 => {
            return Err(Failure::Usage("--targets needs a single --scenario".into()));
        }
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
            Some(
                serde_json::from_str::<LatencyTargets>(&text)
                    .map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?,
            )
        }
        None => None,
    };
    fs::create_dir_all(&args.out)
        .map_err(|e| Failure::Usage(format!("{}: {e}", args.out.display())))?;

    let search = SearchConfig {
        toggles: args.toggles,
        seed,
        max_iters: args.max_iters,
        ..SearchConfig::default()
    };
    // The slow link is fitted first; the fast-link scenarios inherit it and
    // are then independent of each other.
    let (first, rest): (Vec<ScenarioName>, Vec<ScenarioName>) = names
        .into_iter()
        .partition(|&n| n == ScenarioName::LoRaOnly12m);
    let mut slow = None;
    let mut unconverged = Vec::new();
    for name in first {
        let fitted = fit_one(name, None, custom_targets, &search)?;
        slow = Some(fitted.0.spec.channel(ChannelId::Slow).clone());
        finish_fit(name, fitted, &args.out, &mut unconverged)?;
    }
    let fits: Vec<_> = std::thread::scope(|s| {
        let handles: Vec<_> = rest
            .iter()
            .map(|&name| {
                let (slow, search) = (slow.as_ref(), &search);
                s.spawn(move || fit_one(name, slow, custom_targets, search))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("worker panicked"))
            .collect()
    });
    for (name, fitted) in rest.into_iter().zip(fits) {
        finish_fit(name, fitted?, &args.out, &mut unconverged)?;
    }
    if unconverged.is_empty() {
        Ok(())
    } else {
        Err(Failure::Aborted(format!(
            "calibration did not converge for {unconverged:?}"
        )))
    }
}

/// Returns the fit and whether it converged.
fn fit_one(
    name: ScenarioName,
    slow: Option<&ChannelSpec>,
    targets: Option<LatencyTargets>,
    search: &SearchConfig,
) -> Result<(Calibrated, bool), Failure> {
    let mut base = initial_guess(name);
    if let Some(s) = slow {
        *base.channel_mut(ChannelId::Slow) = s.clone();
    }
    let targets = targets.unwrap_or_else(|| name.targets());
    match calibrate_scenario(&base, targets, search) {
        Ok(c) => Ok((c, true)),
        Err(CalibrationError::NotConverged { best }) => Ok((*best, false)),
        Err(e) => Err(Failure::Usage(e.to_string())),
    }
}

fn finish_fit(
    name: ScenarioName,
    (fitted, converged): (Calibrated, bool),
    out: &Path,
    unconverged: &mut Vec<ScenarioName>,
) -> Result<(), Failure> {
    let r = &fitted.report;
    eprintln!(
        "{name}: error {:.4} after {} evaluations; mean {:.1} std {:.1} max {:.1} ms{}",
        r.error,
        r.evaluations,
        r.simulated.mean,
        r.simulated.std,
        r.simulated.max,
        if converged { "" } else { " (not converged)" }
    );
    if !converged {
        unconverged.push(name);
    }
    emit(
        Some(&out.join(format!("{name}.json"))),
        &fitted.spec.to_json_pretty(),
    )
}

fn probe(seed: u64, args: ProbeArgs) -> Result<(), Failure> {
    let mut scenarios = resolve_scenarios(&args.scenario)?;
    if scenarios.len() != 1 {
        return Err(Failure::Usage(
            "probe-watchdog takes a single scenario".into(),
        ));
    }
    let cfg = ProbeConfig {
        probes: args.probes,
        seed,
        silence: args.silence_ms.map(SimTime::from_ms),
        align_to_delivery: args.align,
        ..ProbeConfig::new(scenarios.remove(0))
    };
    let report = run_watchdog_probe(&cfg)?;
    let mut text = serde_json::to_string_pretty(&report).expect("report serializes");
    text.push('\n');
    emit(args.out.as_deref(), &text)
}

fn list_scenarios() {
    println!(
        "{:<16} {:>6} {:>9} {:>8} {:>8}",
        "scenario", "dist_m", "mean_ms", "std_ms", "max_ms"
    );
    for name in ScenarioName::ALL {
        let t = name.targets();
        println!(
            "{:<16} {:>6} {:>9.1} {:>8.1} {:>8.1}",
            name.as_str(),
            name.distance_m(),
            t.mean,
            t.std,
            t.max
        );
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_FAILURE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match cli.command {
        Command::Run(args) => run(cli.seed, args),
        Command::Calibrate(args) => calibrate(cli.seed, args),
        Command::ProbeWatchdog(args) => probe(cli.seed, args),
        Command::ListScenarios => {
            list_scenarios();
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_FAILURE)
        }
        Err(Failure::Aborted(msg)) => {
            eprintln!("aborted: {msg}");
            ExitCode::from(EXIT_ABORTED)
        }
    }
}
