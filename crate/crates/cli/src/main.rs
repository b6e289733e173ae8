mod commands;
mod problem;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use riskshare::Error;

use commands::{Ctx, Failure, OracleArgs, Outcome};
use problem::Model;

/// Risk sharing among agents with their own acceptance sets and security markets
#[derive(Parser)]
#[command(name = "riskshare", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Seed for every randomized probe
    #[arg(long, default_value_t = 0, global = true)]
    seed: u64,

    /// Reporting tolerance for the checks computed by the command
    #[arg(long, default_value_t = 1e-8, global = true)]
    tol: f64,
}

#[derive(Subcommand)]
enum Command {
    /// Check every regime, the shared-price condition and no security arbitrage
    Validate { file: PathBuf },
    /// Risk of one agent
    Rho {
        file: PathBuf,
        /// Agent name or one-based position
        #[arg(long)]
        agent: String,
        /// Label-keyed JSON object, or a file holding one; defaults to the problem's loss
        #[arg(long)]
        loss: Option<String>,
    },
    /// Pooled risk, optimal payoff and a Pareto optimal allocation
    Lambda {
        file: PathBuf,
        #[arg(long)]
        loss: Option<String>,
    },
    /// Pareto optimal allocation, optionally moved along the security shared by the first two agents
    Pareto {
        file: PathBuf,
        #[arg(long)]
        loss: Option<String>,
        #[arg(long, allow_hyphen_values = true)]
        zeta: Option<f64>,
    },
    /// Equilibrium allocation and price for the given endowments
    Equilibrium {
        file: PathBuf,
        /// JSON object keyed by agent name, or a file holding one; defaults to the problem's endowments
        #[arg(long)]
        endowments: Option<String>,
    },
    /// Optimal number of subsidiaries for the problem's split section
    Split {
        file: PathBuf,
        #[arg(long)]
        loss: Option<String>,
    },
    /// Compare the solvers with brute-force baselines
    Oracle {
        file: PathBuf,
        #[arg(long)]
        check: OracleCheck,
        #[arg(long)]
        loss: Option<String>,
        /// Grid spacing
        #[arg(long, default_value_t = 0.05)]
        h: f64,
        /// Half-width of the grid box around the solver's allocation
        #[arg(long, default_value_t = 1.0)]
        radius: f64,
        /// Random comparison points at kinks
        #[arg(long, default_value_t = 100)]
        samples: usize,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum OracleCheck {
    Lambda,
    Pareto,
    Subgradient,
}

impl OracleCheck {
    fn name(self) -> &'static str {
        match self {
            Self::Lambda => "lambda",
            Self::Pareto => "pareto",
            Self::Subgradient => "subgradient",
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Invalid(_) | Error::Dimension(_) => 1,
        Error::Domain(_) | Error::Infeasible(_) | Error::Contract(_) | Error::Unsupported(_) => 2,
        Error::Numerical(_) | Error::Inconsistent(_) => 3,
    }
}

fn run(cli: &Cli) -> Result<Outcome, Error> {
    let (name, file) = match &cli.command {
        Command::Validate { file } => ("validate", file),
        Command::Rho { file, .. } => ("rho", file),
        Command::Lambda { file, .. } => ("lambda", file),
        Command::Pareto { file, .. } => ("pareto", file),
        Command::Equilibrium { file, .. } => ("equilibrium", file),
        Command::Split { file, .. } => ("split", file),
        Command::Oracle { file, .. } => ("oracle", file),
    };
    if !(cli.tol.is_finite() && cli.tol > 0.0) {
        return Err(Error::Invalid("--tol must be positive".into()));
    }
    let model = Model::load(file)?;
    let shown = file.display().to_string();
    let ctx = Ctx { command: name, file: &shown, seed: cli.seed, tol: cli.tol };
    match &cli.command {
        Command::Validate { .. } => commands::validate(&model, &ctx),
        Command::Rho { agent, loss, .. } => commands::rho_cmd(&model, &ctx, agent, &model.loss(loss.as_deref())?),
        Command::Lambda { loss, .. } => commands::lambda_cmd(&model, &ctx, &model.loss(loss.as_deref())?),
        Command::Pareto { loss, zeta, .. } => commands::pareto_cmd(&model, &ctx, &model.loss(loss.as_deref())?, *zeta),
        Command::Equilibrium { endowments, .. } => {
            commands::equilibrium_cmd(&model, &ctx, &model.endowments(endowments.as_deref())?)
        }
        Command::Split { loss, .. } => commands::split_cmd(&model, &ctx, &model.loss(loss.as_deref())?),
        Command::Oracle { check, loss, h, radius, samples, .. } => {
            let o = OracleArgs { h: *h, radius: *radius, samples: *samples };
            commands::oracle_cmd(&model, &ctx, check.name(), &model.loss(loss.as_deref())?, &o)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(&cli) {
        Ok(out) => {
            let text = serde_json::to_string_pretty(&out.doc).expect("result documents serialize");
            let mut stdout = std::io::stdout().lock();
            let _ = writeln!(stdout, "{text}");
            match out.failure {
                None => ExitCode::SUCCESS,
                Some(Failure::Validation) => {
                    eprintln!("error: validation failed: {}", failed_names(&out));
                    ExitCode::from(1)
                }
                Some(Failure::Numerical) => {
                    eprintln!("error: certification failed: {}", failed_names(&out));
                    ExitCode::from(3)
                }
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn failed_names(out: &Outcome) -> String {
    out.doc["checks"]
        .as_array()
        .map(|cs| {
            cs.iter()
                .filter(|c| c["passed"] == serde_json::json!(false))
                .filter_map(|c| c["name"].as_str())
                .collect::<Vec<_>>()
                .join(", ")
        })
        .unwrap_or_default()
}
