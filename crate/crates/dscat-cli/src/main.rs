use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use dscat::error::Error;
use dscat::scenario::{
    self, Analysis, Report, RunStatus, ScenarioConfig,
};

/// Numerical laboratory for dissipative scattering on pseudo-Hamiltonians.
#[derive(Parser)]
#[command(name = "dscat", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// Scenario config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides the config's output.dir.
    #[arg(long)]
    out: Option<PathBuf>,
    /// RNG seed; overrides the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker thread budget (recorded in provenance; execution is sequential).
    #[arg(long, default_value_t = 1)]
    threads: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Run every analysis listed in the config.
    Analyze(RunArgs),
    /// Run only the boundary-value singularity scan.
    ScanSingularities(RunArgs),
    /// Run only the wave-operator / scattering analysis.
    WaveOperators(RunArgs),
    /// Run only the radial resonance search.
    Resonances(RunArgs),
    /// Run only the Lindblad / modified-wave analysis.
    Lindblad(RunArgs),
    /// Export CSV curves from an existing report.
    EmitCurves {
        /// Report produced by a previous run (report.json).
        #[arg(long)]
        report: PathBuf,
        /// Curve families to export: decay, scan, wave, resonance.
        #[arg(long, value_delimiter = ',')]
        curves: Vec<String>,
        /// Output directory; defaults to the report's directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

const EXIT_VALIDATION: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

fn load_config(args: &RunArgs) -> Result<ScenarioConfig, Error> {
    let body = std::fs::read_to_string(&args.config)?;
    let mut config: ScenarioConfig = serde_json::from_str(&body)?;
    if let Some(out) = &args.out {
        config.output.dir = out.to_string_lossy().into_owned();
    }
    Ok(config)
}

fn run(args: &RunArgs, restrict: Option<Analysis>) -> Result<u8, Error> {
    let mut config = load_config(args)?;
    if let Some(analysis) = restrict {
        config.analyses = vec![analysis];
    }
    scenario::validate_config(&config)?;
    let (report, status, runtimes) = scenario::run_scenario(&config, args.seed, args.threads)?;
    let dir = PathBuf::from(&config.output.dir);
    let path = scenario::write_report(&report, &dir, &runtimes)?;
    eprintln!("report written to {}", path.display());
    if config.output.write_csv {
        for selection in ["decay", "scan", "wave", "resonance"] {
            match scenario::emit_curves(&report, selection, &dir) {
                Ok(p) => eprintln!("curve written to {}", p.display()),
                Err(Error::NoSuchCurve(_)) => {}
                Err(e) => return Err(e),
            }
        }
    }
    for block in &report.results {
        match &block.error {
            Some(e) => eprintln!("{}: FAILED: {e}", block.analysis.name()),
            None => eprintln!("{}: ok", block.analysis.name()),
        }
    }
    for (k, v) in &report.verdicts {
        eprintln!("verdict {k}: {v}");
    }
    Ok(match status {
        RunStatus::Success => 0,
        RunStatus::PartialFailure => EXIT_NUMERICAL,
    })
}

fn emit(report_path: &PathBuf, curves: &[String], out: Option<&PathBuf>) -> Result<u8, Error> {
    let body = std::fs::read_to_string(report_path)?;
    let report: Report = serde_json::from_str(&body)?;
    let dir = match out {
        Some(d) => d.clone(),
        None => report_path
            .parent()
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from(".")),
    };
    if curves.is_empty() {
        return Err(Error::Config("no curves requested (use --curves)".into()));
    }
    for selection in curves {
        let p = scenario::emit_curves(&report, selection, &dir)?;
        eprintln!("curve written to {}", p.display());
    }
    Ok(0)
}

fn classify(e: &Error) -> u8 {
    match e {
        Error::Config(_)
        | Error::DimensionMismatch(_)
        | Error::InvalidModel(_)
        | Error::NonFinite(_)
        | Error::NoSuchCurve(_)
        | Error::Precondition(_)
        | Error::Io(_)
        | Error::Json(_) => EXIT_VALIDATION,
        _ => EXIT_NUMERICAL,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Analyze(args) => run(args, None),
        Command::ScanSingularities(args) => run(args, Some(Analysis::SingularityScan)),
        Command::WaveOperators(args) => run(args, Some(Analysis::Scattering)),
        Command::Resonances(args) => run(args, Some(Analysis::Resonances)),
        Command::Lindblad(args) => run(args, Some(Analysis::Lindblad)),
        Command::EmitCurves {
            report,
            curves,
            out,
        } => emit(report, curves, out.as_ref()),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(classify(&e))
        }
    }
}
