mod bundle;
mod commands;
mod settings;

use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ni_irc::Error;

use settings::Flags;

const EXIT_CODES: &str = "\
Exit codes:
  0  success / certificate accepted
  2  certification rejected
  3  input or format error
  4  numerical failure";

#[derive(Parser)]
#[command(name = "ni-irc", version, about = "Discrete-time integral resonant control for negative-imaginary plants", after_help = EXIT_CODES)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize IRC parameters from the plant's DC gain.
    Design(Flags),
    /// Verify (with --cert) or search for an NI certificate of the plant.
    VerifyNi(Flags),
    /// Certify closed-loop stability of plant and IRC.
    VerifyCl(Flags),
    /// Open- and closed-loop step responses as CSV.
    Simulate(Flags),
    /// Open- and closed-loop frequency responses as CSV.
    Frf(Flags),
    /// Resonance-peak damping report, optionally over a Gamma sweep.
    Report(Flags),
    /// Run the 14.86 kHz nanopositioner scenario end to end.
    Demo(Flags),
}

#[derive(Debug)]
pub enum CliError {
    Input(String),
    Rejected(String),
    Core(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) => 3,
            CliError::Rejected(_) => 2,
            CliError::Core(e) => match e {
                Error::Precondition(_) => 2,
                Error::Numerical(_) => 4,
                _ => 3,
            },
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Input(m) | CliError::Rejected(m) => f.write_str(m),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

type Handler = fn(&settings::Settings) -> Result<commands::Outcome, CliError>;

fn run(cli: Cli) -> Result<u8, CliError> {
    let (flags, cmd): (Flags, Handler) = match cli.command {
        Command::Design(f) => (f, commands::design),
        Command::VerifyNi(f) => (f, commands::verify_ni),
        Command::VerifyCl(f) => (f, commands::verify_cl),
        Command::Simulate(f) => (f, commands::simulate),
        Command::Frf(f) => (f, commands::frf),
        Command::Report(f) => (f, commands::report),
        Command::Demo(f) => (f, commands::demo),
    };
    let settings = flags.resolve()?;
    if let Some(seed) = settings.seed {
        println!("seed {seed} noted; all computations are deterministic");
    }
    let outcome = cmd(&settings)?;
    print!("{}", outcome.text);
    let written = outcome
        .files
        .commit(&settings.out)
        .map_err(|e| CliError::Input(format!("cannot write to {}: {e}", settings.out.display())))?;
    for path in written {
        println!("wrote {}", path.display());
    }
    Ok(if outcome.rejected { 2 } else { 0 })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
