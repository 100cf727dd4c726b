use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use nonholo::scenario::{catalog_names, load_scenario, Scenario};
use nonholo::suite::{emit_report, run_suite, CheckRecord, Format, Report, RunOptions, Suite};
use nonholo::{jet_crosscheck, Error};

#[derive(Parser)]
#[command(name = "nonholo", version, about = "Numerical checks for nonholonomic geometry")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a check suite on a scenario.
    Run {
        /// Catalog name or path to a scenario JSON file.
        #[arg(long)]
        scenario: String,
        #[arg(long, value_enum, default_value_t = SuiteArg::All)]
        suite: SuiteArg,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u64).range(1..=200))]
        points: u64,
        #[arg(long, value_enum, default_value_t = FormatArg::Text)]
        format: FormatArg,
        /// Write the report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List the built-in scenarios.
    List,
    /// Compare jets of every scenario field with finite differences.
    Crosscheck {
        #[arg(long)]
        scenario: String,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value_t = 20, value_parser = clap::value_parser!(u64).range(1..=200))]
        points: u64,
        /// Highest derivative order compared.
        #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u64).range(1..=4))]
        order: u64,
        #[arg(long, value_enum, default_value_t = FormatArg::Text)]
        format: FormatArg,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SuiteArg {
    Frames,
    Connections,
    Conformal,
    Spin,
    Twistor,
    All,
}

impl From<SuiteArg> for Suite {
    fn from(s: SuiteArg) -> Suite {
        match s {
            SuiteArg::Frames => Suite::Frames,
            SuiteArg::Connections => Suite::Connections,
            SuiteArg::Conformal => Suite::Conformal,
            SuiteArg::Spin => Suite::Spin,
            SuiteArg::Twistor => Suite::Twistor,
            SuiteArg::All => Suite::All,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Json,
    Text,
}

impl From<FormatArg> for Format {
    fn from(f: FormatArg) -> Format {
        match f {
            FormatArg::Json => Format::Json,
            FormatArg::Text => Format::Text,
        }
    }
}

/// Exit status 2 for input problems, 1 for everything else.
fn failure(e: &Error) -> ExitCode {
    eprintln!("nonholo: {e}");
    match e {
        Error::Parse { .. } | Error::Validation(_) | Error::SuiteInapplicable(_) | Error::Io(_) => ExitCode::from(2),
        _ => ExitCode::from(1),
    }
}

fn tol_scale() -> Result<f64, Error> {
    match std::env::var("NONHOLO_TOL_SCALE") {
        Err(_) => Ok(1.0),
        Ok(v) => match v.trim().parse::<f64>() {
            Ok(x) if x.is_finite() && x > 0.0 => Ok(x),
            _ => Err(Error::Validation(format!("NONHOLO_TOL_SCALE must be a positive number, got '{v}'"))),
        },
    }
}

fn crosscheck(s: &Scenario, seed: u64, points: usize, order: usize, scale: f64) -> Report {
    let pts = s.sample_points(seed, points);
    let checks = s
        .fields
        .iter()
        .map(|(name, f)| {
            let start = Instant::now();
            let id = format!("crosscheck.{name}");
            let tol = s.tolerance(&id, 1e-6, scale);
            let res = pts.iter().try_fold(0.0f64, |m, p| jet_crosscheck(f, p, order).map(|r| m.max(r)));
            let (residual, error) = match res {
                Ok(r) => (r, None),
                Err(e) => (f64::MAX, Some(e.to_string())),
            };
            CheckRecord {
                id,
                anchor: "jet partials = finite differences".into(),
                residual,
                tol,
                pass: error.is_none() && residual <= tol,
                points: pts.len(),
                ms: start.elapsed().as_secs_f64() * 1e3,
                error,
            }
        })
        .collect();
    Report {
        scenario: s.name.clone(),
        checks,
    }
}

fn run(cli: Cli) -> Result<bool, Error> {
    match cli.command {
        Command::List => {
            for name in catalog_names() {
                let s = load_scenario(name)?;
                println!("{:<32} {}+{}  {}", name, s.chart.n, s.chart.m, s.description);
            }
            Ok(true)
        }
        Command::Run {
            scenario,
            suite,
            seed,
            points,
            format,
            out,
        } => {
            let opts = RunOptions {
                seed,
                points: points as usize,
                tol_scale: tol_scale()?,
            };
            let s = load_scenario(&scenario)?;
            let report = run_suite(&s, suite.into(), &opts)?;
            emit_report(&report, format.into(), out.as_deref())?;
            Ok(report.all_pass())
        }
        Command::Crosscheck {
            scenario,
            seed,
            points,
            order,
            format,
            out,
        } => {
            let scale = tol_scale()?;
            let s = load_scenario(&scenario)?;
            let report = crosscheck(&s, seed, points as usize, order as usize, scale);
            emit_report(&report, format.into(), out.as_deref())?;
            Ok(report.all_pass())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => failure(&e),
    }
}
