use std::path::PathBuf;
use std::process::ExitCode;

use blduality::exec::Rayon;
use blduality::selftest::{selftest, Fault, Level};
use blduality::{run, CliError, Command, Report, RunConfig, Status};
use clap::{Parser, Subcommand, ValueEnum};

/// Brascamp-Lieb-type constants from both sides of the relative-entropy
/// duality. Values are in nats; reports also carry bits.
#[derive(Debug, Parser)]
#[command(name = "blduality", version)]
struct Cli {
    /// Seed for restarts and sampling.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Number of random restarts for the simplex optimizers.
    #[arg(long, global = true)]
    restarts: Option<usize>,
    /// Write the report here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; 0 uses every available core.
    #[arg(long, global = true, default_value_t = 0)]
    workers: usize,
    /// Override a named tolerance, e.g. `--tol optimizer_tol=1e-12`. Repeatable.
    #[arg(long = "tol", global = true, value_name = "KEY=VAL")]
    tol: Vec<String>,
    #[command(subcommand)]
    cmd: Sub,
}

#[derive(Debug, Subcommand)]
enum Sub {
    /// Best constant d* of a forward (broadcast) problem.
    ForwardConstant { input: PathBuf },
    /// Sample test functions and check the functional inequality at d.
    VerifyForward {
        input: PathBuf,
        /// Constant to test; defaults to the computed d*.
        #[arg(long, allow_negative_numbers = true)]
        d: Option<f64>,
        #[arg(long, default_value_t = 1000)]
        samples: usize,
    },
    /// Strong data processing constant c* of a channel at an input law.
    Sdpi { input: PathBuf },
    /// Entropy deficit of a two-party hypercontractivity query.
    Hypercontractivity { input: PathBuf },
    /// Variational lower bound for the Renyi divergence, maximized.
    RenyiVar { input: PathBuf },
    /// Shearer's lemma gap of a joint law on A^m.
    Shearer { input: PathBuf },
    /// Loomis-Whitney gap of m functions.
    LoomisWhitney { input: PathBuf },
    /// Best constant d* of a reverse (multiple access) problem.
    ReverseConstant { input: PathBuf },
    /// Output divergence minimized over couplings of fixed marginals.
    Coupling { input: PathBuf },
    /// Check a candidate (F, f) pair against the reverse inequality.
    ReverseVerify {
        input: PathBuf,
        /// Constant to test; defaults to the input's `d`, then to the computed d*.
        #[arg(long, allow_negative_numbers = true)]
        d: Option<f64>,
    },
    /// Minimize F0 over Gaussian covariances. `sigma_cap` bounds Cov(X).
    GaussianF0 { input: PathBuf },
    /// Forward constant restricted to Gaussian inputs. `sigma_cap` bounds Cov(X).
    GaussianBl { input: PathBuf },
    /// Nelson's hypercontractivity test diag(p) >= Sigma.
    Nelson { input: PathBuf },
    /// Wyner's common information of a Gaussian vector.
    Wyner { input: PathBuf },
    /// Replay the library's invariants on seeded random cases.
    Selftest {
        #[arg(value_enum, default_value_t = LevelArg::Quick)]
        level: LevelArg,
        #[arg(long, value_enum)]
        inject_fault: Option<FaultArg>,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum LevelArg {
    Quick,
    Full,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FaultArg {
    GradSign,
}

fn command(sub: &Sub) -> Option<(Command, &PathBuf)> {
    Some(match sub {
        Sub::ForwardConstant { input } => (Command::ForwardConstant, input),
        Sub::VerifyForward { input, d, samples } => (Command::VerifyForward { d: *d, samples: *samples }, input),
        Sub::Sdpi { input } => (Command::Sdpi, input),
        Sub::Hypercontractivity { input } => (Command::Hypercontractivity, input),
        Sub::RenyiVar { input } => (Command::RenyiVar, input),
        Sub::Shearer { input } => (Command::Shearer, input),
        Sub::LoomisWhitney { input } => (Command::LoomisWhitney, input),
        Sub::ReverseConstant { input } => (Command::ReverseConstant, input),
        Sub::Coupling { input } => (Command::Coupling, input),
        Sub::ReverseVerify { input, d } => (Command::ReverseVerify { d: *d }, input),
        Sub::GaussianF0 { input } => (Command::GaussianF0, input),
        Sub::GaussianBl { input } => (Command::GaussianBl, input),
        Sub::Nelson { input } => (Command::Nelson, input),
        Sub::Wyner { input } => (Command::Wyner, input),
        Sub::Selftest { .. } => return None,
    })
}

fn execute(cli: &Cli) -> Result<Report, CliError> {
    let mut cfg = RunConfig {
        seed: cli.seed,
        ..RunConfig::default()
    }
    .with_overrides(&cli.tol)?;
    if let Some(r) = cli.restarts {
        cfg.restarts = r;
    }
    let exec = Rayon::new(cli.workers).map_err(|e| CliError::Usage(format!("cannot start workers: {e}")))?;
    if let Sub::Selftest { level, inject_fault } = &cli.cmd {
        let level = match level {
            LevelArg::Quick => Level::Quick,
            LevelArg::Full => Level::Full,
        };
        let fault = inject_fault.map(|FaultArg::GradSign| Fault::GradSign);
        return Ok(selftest(level, fault, &cfg, &exec));
    }
    let (cmd, path) = command(&cli.cmd).expect("selftest handled above");
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
    let input: serde_json::Value = serde_json::from_str(&text)?;
    run(&cmd, &input, &cfg, &exec)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let report = match execute(&cli) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("blduality: {e}");
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    let text = report.to_json();
    match &cli.out {
        Some(path) => {
            if let Err(e) = std::fs::write(path, &text) {
                eprintln!("blduality: cannot write {}: {e}", path.display());
                return ExitCode::from(1);
            }
        }
        None => print!("{text}"),
    }
    if report.status == Status::Ok {
        ExitCode::SUCCESS
    } else {
        eprintln!("blduality: status {:?}", report.status);
        ExitCode::from(3)
    }
}
