use clap::{Parser, Subcommand as ClapSubcommand};
use improx_cli::{resolve, run, Flags, Subcommand};

/// Solver for nonsmooth nonconvex constrained minimization
/// `min f(x) s.t. c(x) <= 0, x in X` with stochastic reliability instances.
#[derive(Parser)]
#[command(name = "improx", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(ClapSubcommand)]
enum Command {
    /// Run the proximal solver on an instance and write a JSON report
    Solve(Flags),
    /// Exhaustive grid-search baseline (beam instance)
    Gridsearch(Flags),
    /// Sample a scenario set and write it to a file
    GenScenarios(Flags),
    /// Run the invariant suite on an instance (default: the analytic DC toy)
    Verify(Flags),
}

fn main() {
    let cli = Cli::parse();
    let (sub, flags) = match &cli.command {
        Command::Solve(f) => (Subcommand::Solve, f),
        Command::Gridsearch(f) => (Subcommand::Gridsearch, f),
        Command::GenScenarios(f) => (Subcommand::GenScenarios, f),
        Command::Verify(f) => (Subcommand::Verify, f),
    };
    let status = resolve(sub, flags).and_then(|config| run(&config));
    match status {
        Ok(s) => std::process::exit(s.code()),
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(1);
        }
    }
}
