mod compare;
mod failure;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use dfm::cases::CASE_IDS;
use dfm::verify::{run_checks, Fault};

use failure::Failure;

#[derive(Parser, Debug)]
#[command(
    name = "dfmbench",
    version,
    about = "Discrete-fracture-matrix flow and transport benchmarks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve one case at one refinement level and write its artifacts.
    Run(RunArgs),
    /// Run the built-in oracle checks.
    Verify(VerifyArgs),
    /// Percentile spread across compatible line or time curves.
    Compare(CompareArgs),
}

#[derive(clap::Args, Debug)]
pub struct RunArgs {
    /// Built-in case id.
    #[arg(long, value_parser = CASE_IDS)]
    pub case: Option<String>,
    /// Case description overriding the built-in one.
    #[arg(long, value_name = "PATH")]
    pub case_file: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub refinement: usize,
    /// ASCII MSH 2.2 mesh replacing the built-in grid.
    #[arg(long, value_name = "PATH", requires = "tagmap")]
    pub mesh: Option<PathBuf>,
    /// JSON map from physical tags to subdomains and patches.
    #[arg(long, value_name = "PATH", requires = "mesh")]
    pub tagmap: Option<PathBuf>,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    /// Relative residual tolerance of the iterative solvers.
    #[arg(long, default_value_t = 1e-10)]
    pub tol: f64,
}

#[derive(clap::Args, Debug)]
struct VerifyArgs {
    /// Run only checks whose name contains this text.
    #[arg(long)]
    filter: Option<String>,
    /// Corrupt the inputs to confirm that the checks detect it.
    #[arg(long, value_enum)]
    inject_fault: Option<FaultArg>,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum FaultArg {
    /// Negate the fracture normal conductivities.
    KappaSign,
}

#[derive(clap::Args, Debug)]
pub struct CompareArgs {
    /// Run directories (matching dol_/dot_ files are paired by name) or CSV files.
    #[arg(required = true, num_args = 2..)]
    pub inputs: Vec<PathBuf>,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

fn verify(args: &VerifyArgs) -> Result<(), Failure> {
    let fault = match args.inject_fault {
        Some(FaultArg::KappaSign) => Fault::KappaSign,
        None => Fault::None,
    };
    let results = run_checks(args.filter.as_deref(), fault);
    if results.is_empty() {
        return Err(Failure::input(
            "verify",
            anyhow::anyhow!("no check matches the filter"),
        ));
    }
    let width = results.iter().map(|r| r.name.len()).max().unwrap_or(0);
    for r in &results {
        println!(
            "{} {:width$}  {}",
            if r.passed { "PASS" } else { "FAIL" },
            r.name,
            r.detail
        );
    }
    let failed = results.iter().filter(|r| !r.passed).count();
    println!("{} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        return Err(Failure::solver(
            "verify",
            anyhow::anyhow!("{failed} check(s) failed"),
        ));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(args) => run::run(args),
        Command::Verify(args) => verify(args),
        Command::Compare(args) => compare::compare(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code)
        }
    }
}
