use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use crmac_cli::{execute, verify, Action, ControllerSelection, Outcome, Overrides, RunOptions};
use rayon::prelude::*;

#[derive(Parser)]
#[command(
    name = "crmac",
    version,
    about = "Output-feedback MRAC design and simulation with closed-loop reference models"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize and certify the observer gain and mixer; writes design.json.
    Design(ScenarioArgs),
    /// Design inline, then simulate; writes traces and metrics.json.
    Simulate(ScenarioArgs),
    /// Re-check a stored design artifact.
    Verify {
        artifact: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(Args)]
struct ScenarioArgs {
    /// Scenario file(s); independent scenarios run concurrently under --jobs.
    #[arg(long, required = true, num_args = 1..)]
    config: Vec<PathBuf>,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    #[arg(long, value_enum)]
    controllers: Option<ControllerSelection>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    t_final: Option<f64>,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    nu: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Accept rho <= rho* with a warning instead of failing certification.
    #[arg(long)]
    allow_submarginal: bool,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
}

fn emit(outcomes: &[Outcome], format: Format) {
    match format {
        Format::Text => {
            for o in outcomes {
                if o.json.get("error").is_some() {
                    eprint!("{}", o.text);
                } else {
                    print!("{}", o.text);
                }
            }
        }
        Format::Json => {
            let all: Vec<_> = outcomes.iter().map(|o| o.json.clone()).collect();
            let v = if all.len() == 1 {
                all[0].clone()
            } else {
                serde_json::Value::Array(all)
            };
            println!("{}", serde_json::to_string_pretty(&v).expect("report serializes"));
        }
    }
    for o in outcomes.iter().filter(|o| o.exit_code != 0) {
        if format == Format::Json {
            if let Some(e) = o.json.get("error") {
                eprintln!("error: {}", e.as_str().unwrap_or_default());
            }
        }
    }
}

fn run_scenarios(action: Action, args: ScenarioArgs) -> i32 {
    let options = RunOptions {
        overrides: Overrides {
            controllers: args.controllers,
            dt: args.dt,
            t_final: args.t_final,
            rho: args.rho,
            nu: args.nu,
            seed: args.seed,
        },
        allow_submarginal: args.allow_submarginal,
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(args.jobs.max(1)).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start worker pool: {e}");
            return 1;
        }
    };
    let outcomes: Vec<Outcome> = pool.install(|| {
        args.config
            .par_iter()
            .map(|c| execute(action, c, &args.out_dir, &options))
            .collect()
    });
    emit(&outcomes, args.format);
    outcomes.iter().map(|o| o.exit_code).max().unwrap_or(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Design(args) => run_scenarios(Action::Design, args),
        Command::Simulate(args) => run_scenarios(Action::Simulate, args),
        Command::Verify { artifact, format } => {
            let o = verify(&artifact);
            emit(std::slice::from_ref(&o), format);
            o.exit_code
        }
    };
    ExitCode::from(code as u8)
}
