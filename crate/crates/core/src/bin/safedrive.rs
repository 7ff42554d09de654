use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use safedrive::behavior::BehaviorConfig;
use safedrive::decision::{BackendConfig, BackendKind, DecisionCase};
use safedrive::harness::{
    evaluate, read_trace, render_csv, run_trials, ExitStatus, HarnessError, RunConfig,
};
use safedrive::world::Scenario;

#[derive(Parser)]
#[command(
    name = "safedrive",
    version,
    about = "Verified behavior planning on a simulated three-lane highway"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Backend {
    Scripted,
    Remote,
}

#[derive(Subcommand)]
enum Command {
    /// Run closed-loop episodes and write line-delimited JSON traces.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, value_enum, default_value = "scripted")]
        backend: Backend,
        /// 1 = free lane selection, 2 = state-machine lane change.
        #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u8).range(1..=2))]
        case: u8,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        steps: Option<u64>,
        #[arg(long, short)]
        output: PathBuf,
        #[arg(long, default_value_t = 1)]
        trials: u32,
        /// Backend request timeout, s.
        #[arg(long)]
        timeout: Option<f64>,
        /// Base URL of the chat-completion service.
        #[arg(long)]
        endpoint: Option<String>,
        #[arg(long)]
        model: Option<String>,
        /// Name of the environment variable that holds the API key.
        #[arg(long)]
        api_key_env: Option<String>,
        /// JSON file with behavior settings.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Record wall-clock timings in the trace.
        #[arg(long)]
        timing: bool,
        #[arg(long, hide = true)]
        inject_containment_fault: bool,
    },
    /// Aggregate metrics over traces.
    Eval {
        #[arg(required = true)]
        traces: Vec<PathBuf>,
        /// Print the report as JSON instead of a table.
        #[arg(long)]
        json: bool,
    },
    /// Export a trace as a plot-ready CSV time series.
    Render {
        trace: PathBuf,
        #[arg(long, short)]
        output: PathBuf,
    },
}

fn fail(e: HarnessError) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(e.exit_status().code() as u8)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().command {
        Command::Run {
            scenario,
            backend,
            case,
            seed,
            steps,
            output,
            trials,
            timeout,
            endpoint,
            model,
            api_key_env,
            config,
            timing,
            inject_containment_fault,
        } => {
            let (sc, hash) = match Scenario::load(&scenario) {
                Ok(v) => v,
                Err(e) => return fail(e.into()),
            };
            let behavior = match config {
                Some(p) => match std::fs::read_to_string(&p)
                    .map_err(HarnessError::from)
                    .and_then(|t| {
                        serde_json::from_str::<BehaviorConfig>(&t)
                            .map_err(|e| HarnessError::Config(e.to_string()))
                    }) {
                    Ok(b) => b,
                    Err(e) => return fail(e),
                },
                None => BehaviorConfig::default(),
            };
            let defaults = BackendConfig::default();
            let cfg = RunConfig {
                case: if case == 1 {
                    DecisionCase::Case1
                } else {
                    DecisionCase::Case2
                },
                seed,
                steps,
                behavior,
                backend: BackendConfig {
                    kind: match backend {
                        Backend::Scripted => BackendKind::Scripted,
                        Backend::Remote => BackendKind::Remote,
                    },
                    endpoint,
                    model: model.unwrap_or(defaults.model),
                    temperature: defaults.temperature,
                    timeout_s: timeout.unwrap_or(defaults.timeout_s),
                    api_key_env,
                },
                timing,
                inject_containment_fault,
            };
            let mut worst = ExitStatus::Ok;
            for (path, result) in run_trials(&sc, &hash, &cfg, trials, &output) {
                match result {
                    Ok(o) => {
                        println!(
                            "{}: {} steps, status {:?}, mean speed {:.1} m/s",
                            path.display(),
                            o.report.steps,
                            o.status,
                            o.report.mean_speed
                        );
                        worst = worst.max(o.status);
                    }
                    Err(e) => {
                        eprintln!("{}: {e}", path.display());
                        worst = worst.max(e.exit_status());
                    }
                }
            }
            ExitCode::from(worst.code() as u8)
        }
        Command::Eval { traces, json } => {
            let parsed: Result<Vec<_>, _> = traces.iter().map(read_trace).collect();
            let report = match parsed.and_then(|t| evaluate(&t)) {
                Ok(r) => r,
                Err(e) => return fail(e),
            };
            if json {
                println!(
                    "{}",
                    serde_json::to_string_pretty(&report).expect("report serializes")
                );
            } else {
                print!("{report}");
            }
            ExitCode::SUCCESS
        }
        Command::Render { trace, output } => {
            let result = read_trace(&trace).and_then(|t| {
                let file = std::fs::File::create(&output)?;
                render_csv(&t, file)
            });
            match result {
                Ok(n) => {
                    println!("wrote {n} rows to {}", output.display());
                    ExitCode::SUCCESS
                }
                Err(e) => fail(e),
            }
        }
    }
}
