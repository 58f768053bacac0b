use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use morse_core::report::{emit_scenarios, run, summary, Check, RunConfig, RunError, ScenarioSource, Stage};
use morse_core::scenario::builtin_names;

#[derive(Parser)]
#[command(name = "morse", version, about = "Morse-Smale flows: rest points, instantons, Morse complex and de Rham checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Locate and certify rest points.
    Critical(RunArgs),
    /// Enumerate instantons and corner strata.
    Instantons(RunArgs),
    /// Build the Morse complex and its Betti numbers.
    Cohomology(RunArgs),
    /// Check the integration identities.
    Verify(RunArgs),
    /// Full pipeline including the basin coverage check.
    Run(RunArgs),
    /// Builtin scenario files.
    Scenarios {
        #[command(subcommand)]
        action: ScenarioAction,
    },
}

#[derive(Subcommand)]
enum ScenarioAction {
    /// Print the builtin names.
    List,
    /// Write every builtin as `<name>.json` into a directory.
    Export { path: PathBuf },
}

#[derive(Args)]
struct RunArgs {
    /// Builtin name or path to a scenario JSON file.
    scenario: String,
    #[arg(long, default_value_t = 1e-10)]
    tol_ode: f64,
    #[arg(long, default_value_t = 1e-12)]
    tol_newton: f64,
    #[arg(long, default_value_t = 1e-7)]
    tol_quad: f64,
    #[arg(long, visible_alias = "tol", default_value_t = 1e-6)]
    tol_verify: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Seeds on each unstable circle.
    #[arg(long, default_value_t = 2048)]
    sweep: usize,
    #[arg(long, default_value_t = 10_000)]
    basin_samples: usize,
    /// JSON report path; the report goes to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// delta2, stokes, leibniz, cup, detect or all.
    #[arg(long, default_value = "all")]
    check: Check,
}

impl RunArgs {
    fn config(self, stage: Stage) -> RunConfig {
        RunConfig {
            tol_ode: self.tol_ode,
            tol_newton: self.tol_newton,
            tol_quad: self.tol_quad,
            tol_verify: self.tol_verify,
            seed: self.seed,
            sweep: self.sweep,
            basin_samples: self.basin_samples,
            out: self.out,
            check: self.check,
            stage,
            ..RunConfig::new(ScenarioSource::parse(&self.scenario))
        }
    }
}

fn configure_threads() -> Result<(), RunError> {
    let Ok(v) = std::env::var("MORSE_THREADS") else { return Ok(()) };
    let n: usize = v.parse().map_err(|_| RunError::Config(format!("MORSE_THREADS must be a positive integer, got `{v}`")))?;
    rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global().map_err(|e| RunError::Internal(e.to_string()))
}

fn execute(cfg: &RunConfig) -> Result<i32, RunError> {
    let report = run(cfg)?;
    let json = report.to_json() + "\n";
    let table = summary(&report);
    match &cfg.out {
        Some(path) => {
            std::fs::write(path, json)?;
            print!("{table}");
        }
        None => {
            print!("{json}");
            eprint!("{table}");
        }
    }
    Ok(report.exit_code())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = configure_threads().and_then(|()| match cli.command {
        Command::Critical(a) => execute(&a.config(Stage::Critical)),
        Command::Instantons(a) => execute(&a.config(Stage::Instantons)),
        Command::Cohomology(a) => execute(&a.config(Stage::Cohomology)),
        Command::Verify(a) => execute(&a.config(Stage::Verify)),
        Command::Run(a) => execute(&a.config(Stage::Run)),
        Command::Scenarios { action: ScenarioAction::List } => {
            builtin_names().iter().for_each(|n| println!("{n}"));
            Ok(0)
        }
        Command::Scenarios { action: ScenarioAction::Export { path } } => emit_scenarios(&path).map(|files| {
            files.iter().for_each(|f| println!("{}", f.display()));
            0
        }),
    });
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
