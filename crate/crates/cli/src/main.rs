use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use pliflows::config::{Command, ExperimentConfig, FlowKindConfig, Mat, ProblemConfig};
use pliflows::RunError;

#[derive(Parser)]
#[command(name = "pliflows", version, about = "Gradient-flow experiments for continuous-time LQR")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Integrate a gradient, natural or Gauss-Newton flow.
    Flow(Common),
    /// Sample the landscape and fit dominance estimates.
    Pli(Common),
    /// Integrate a factored (linear network) flow.
    Lffnn(Common),
    /// Run a disturbance-amplitude sweep.
    Iss(Common),
    /// Solve the Riccati equation of the problem.
    Riccati(Common),
    /// Sample the scalar two-factor phase plane.
    Portrait(Common),
}

#[derive(Clone, Copy, ValueEnum)]
enum Builtin {
    Integrator,
    PlanarZero,
    ScalarA,
}

#[derive(Args)]
struct Common {
    /// JSON config: inline (starting with `{`) or a file path.
    #[arg(long)]
    config: Option<String>,
    #[arg(long, value_enum)]
    builtin: Option<Builtin>,
    /// Plant parameter for `--builtin scalar-a`.
    #[arg(long, allow_negative_numbers = true)]
    a: Option<f64>,
    /// Initial gain: a number or a JSON matrix such as `[[1,0],[0,1]]`.
    #[arg(long, allow_negative_numbers = true)]
    k0: Option<String>,
    #[arg(long, value_enum)]
    kind: Option<FlowKindConfig>,
    #[arg(long)]
    t_max: Option<f64>,
    #[arg(long)]
    samples: Option<usize>,
    /// Output path prefix.
    #[arg(long)]
    out: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
}

fn parse_matrix(s: &str) -> Result<Mat, RunError> {
    let s = s.trim();
    if s.starts_with('[') {
        serde_json::from_str(s).map_err(|e| RunError::Validation(format!("--k0: {e}")))
    } else {
        s.parse::<f64>()
            .map(|x| vec![vec![x]])
            .map_err(|_| RunError::Validation(format!("--k0: not a number or matrix: {s}")))
    }
}

fn resolve(command: Command, args: Common) -> Result<ExperimentConfig, RunError> {
    let mut cfg = match &args.config {
        Some(src) => ExperimentConfig::load(src).map_err(RunError::Validation)?,
        None => ExperimentConfig::new(command),
    };
    cfg.command = command;
    match (args.builtin, args.a) {
        (Some(Builtin::Integrator), None) => cfg.problem = ProblemConfig::Integrator,
        (Some(Builtin::PlanarZero), None) => cfg.problem = ProblemConfig::PlanarZero,
        (Some(Builtin::ScalarA), Some(a)) | (None, Some(a)) => {
            cfg.problem = ProblemConfig::ScalarA { a, b: 1.0, q: 1.0, r: 1.0 }
        }
        (Some(Builtin::ScalarA), None) => return Err(RunError::Validation("--builtin scalar-a needs --a".into())),
        (Some(_), Some(_)) => return Err(RunError::Validation("--a only applies to --builtin scalar-a".into())),
        (None, None) => {}
    }
    if let Some(k0) = &args.k0 {
        cfg.flow.k0 = Some(parse_matrix(k0)?);
    }
    if let Some(kind) = args.kind {
        cfg.flow.kind = kind;
        cfg.iss.kind = kind;
    }
    if let Some(t) = args.t_max {
        cfg.flow.t_max = t;
    }
    if let Some(n) = args.samples {
        cfg.flow.samples = n;
    }
    if let Some(out) = args.out {
        cfg.out = out;
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, args) = match cli.command {
        Sub::Flow(a) => (Command::Flow, a),
        Sub::Pli(a) => (Command::Pli, a),
        Sub::Lffnn(a) => (Command::Lffnn, a),
        Sub::Iss(a) => (Command::Iss, a),
        Sub::Riccati(a) => (Command::Riccati, a),
        Sub::Portrait(a) => (Command::Portrait, a),
    };
    let outcome = resolve(command, args).and_then(pliflows::run).and_then(|out| {
        out.write()?;
        Ok(out)
    });
    match outcome {
        Ok(out) => {
            for a in &out.artifacts {
                println!("{}", a.path.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("pliflows: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
