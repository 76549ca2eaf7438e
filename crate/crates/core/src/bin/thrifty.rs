use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::error::ErrorKind;
use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};
use log::info;
use rand::SeedableRng;

use thrifty_core::engine::{self, eval_rng, evaluate, Ablation, Algorithm, EvalStats, RunConfig};
use thrifty_core::env::BottleneckEnv;
use thrifty_core::fleet::{run_fleet, FleetConfig};
use thrifty_core::gateway::{gateway_serve, GatewayConfig};
use thrifty_core::metrics::{write_csv, write_jsonl, SummaryRow};
use thrifty_core::persist::{
    load_run, load_run_config, run_files, save_dataset, save_run, RunArtifacts,
};
use thrifty_core::protocol::{default_bind_addr, ArenaInfo};
use thrifty_core::supervisor::{ScriptedOracle, Supervisor};
use thrifty_core::{Error, Result, SimRng};

#[derive(Parser)]
#[command(
    name = "thrifty",
    version,
    about = "Robot-gated interactive imitation learning on a bottleneck task"
)]
struct Cli {
    /// JSON run configuration; command-line flags override its keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Record scripted-oracle demonstrations as a JSONL dataset.
    DemoCollect {
        #[arg(long)]
        num_demos: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "demos.jsonl")]
        out: PathBuf,
    },
    /// Train one algorithm and write its run directory.
    Train(TrainArgs),
    /// Evaluate a trained run.
    Eval(EvalArgs),
    /// Run several robots under one supervisor.
    Fleet(FleetArgs),
    /// Summarize run directories as table rows.
    Export {
        #[arg(long, value_enum, default_value = "csv")]
        format: ExportFormat,
        /// Write here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Fill the success columns by evaluating each run on this many episodes.
        #[arg(long, default_value_t = 0)]
        eval_episodes: usize,
        #[arg(required = true)]
        run_dirs: Vec<PathBuf>,
    },
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long, value_enum)]
    algorithm: Option<Algorithm>,
    #[arg(long, value_enum)]
    ablate: Option<Ablation>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Interactive step budget.
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    num_demos: Option<usize>,
    /// Defaults to `runs/<algorithm>-seed<seed>`.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long, default_value = "runs/thrifty-seed0")]
    run_dir: PathBuf,
    #[arg(
        long,
        conflicts_with = "with_interventions",
        required_unless_present = "with_interventions"
    )]
    autonomous: bool,
    #[arg(long)]
    with_interventions: bool,
    #[arg(long, default_value_t = 100)]
    episodes: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct FleetArgs {
    #[arg(long, default_value = "runs/thrifty-seed0")]
    run_dir: PathBuf,
    #[arg(long, default_value_t = 3)]
    robots: usize,
    #[arg(long, default_value_t = 350)]
    steps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Serve the fleet to a remote supervisor instead of the scripted oracle.
    /// Without a value the address comes from THRIFTY_GATEWAY_ADDR.
    #[arg(long, num_args = 0..=1, default_missing_value = "")]
    gateway: Option<String>,
    /// Pause between ticks while serving a gateway client.
    #[arg(long, default_value_t = 100)]
    tick_ms: u64,
    /// Let queued robots keep acting on their own while they wait.
    #[arg(long)]
    keep_acting: bool,
    /// Per-tick JSONL trace.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ExportFormat {
    Csv,
    Jsonl,
}

fn base_config(path: Option<&Path>) -> Result<RunConfig> {
    match path {
        Some(p) => load_run_config(p),
        None => Ok(RunConfig::default()),
    }
}

fn train(cli_config: Option<&Path>, args: TrainArgs) -> Result<()> {
    let mut config = base_config(cli_config)?;
    if let Some(a) = args.algorithm {
        config.algorithm = a;
    }
    if args.ablate.is_some() {
        config.ablation = args.ablate;
    }
    if let Some(a) = args.alpha {
        config.alpha = a;
    }
    if let Some(s) = args.seed {
        config.seed = s;
    }
    if let Some(n) = args.steps {
        config.interactive_steps = n;
    }
    if let Some(n) = args.num_demos {
        config.num_demos = n;
    }
    config.validate()?;
    let dir = args
        .out_dir
        .unwrap_or_else(|| PathBuf::from(format!("runs/{}-seed{}", config.label(), config.seed)));
    let result = engine::run(&config)?;
    save_run(&dir, &result)?;
    let m = &result.metrics;
    println!(
        "{}: {} episodes, {} interactive steps, T Ints {}, T Acts (H) {}, T Acts (R) {}",
        config.label(),
        m.episodes,
        result.interactive_steps_used,
        m.total_ints,
        m.total_acts_h,
        m.total_acts_r
    );
    println!("wrote {}", dir.display());
    Ok(())
}

fn eval_run(run: &RunArtifacts, episodes: usize, seed: u64, assisted: bool) -> Result<EvalStats> {
    let env = BottleneckEnv::new(run.config.env.clone())?;
    let mut rng = eval_rng(seed);
    if assisted {
        let mut gate = run.gate()?;
        let mut oracle = ScriptedOracle::new(run.config.oracle.clone())?;
        evaluate(
            &run.policy,
            &env,
            episodes,
            Some((&mut oracle, gate.as_mut())),
            &mut rng,
        )
    } else {
        evaluate(&run.policy, &env, episodes, None, &mut rng)
    }
}

fn eval(args: EvalArgs) -> Result<()> {
    let run = load_run(&args.run_dir)?;
    let stats = eval_run(&run, args.episodes, args.seed, !args.autonomous)?;
    let label = if args.autonomous {
        "Auto Succ"
    } else {
        "Int-Aided Succ"
    };
    println!("{label}: {}", stats.fraction());
    Ok(())
}

fn fleet(args: FleetArgs) -> Result<()> {
    let run: RunArtifacts = load_run(&args.run_dir)?;
    let env = BottleneckEnv::new(run.config.env.clone())?;
    let config = FleetConfig {
        robots: args.robots,
        steps: args.steps,
        freeze_queued: !args.keep_acting,
    };
    let mut gates = (0..config.robots)
        .map(|_| run.gate())
        .collect::<Result<Vec<_>>>()?;
    let mut rng = SimRng::seed_from_u64(args.seed);
    let mut trace = args
        .trace
        .as_ref()
        .map(|p| File::create(p).map(BufWriter::new))
        .transpose()?;

    let metrics = match &args.gateway {
        None => {
            let mut oracle = ScriptedOracle::new(run.config.oracle.clone())?;
            run_fleet(
                &env,
                &config,
                &run.policy,
                &mut gates,
                &mut oracle,
                &mut rng,
                &mut |tick| {
                    if let Some(t) = trace.as_mut() {
                        write_jsonl(std::slice::from_ref(tick), t)?;
                    }
                    Ok(())
                },
            )?
        }
        Some(addr) => {
            let addr = if addr.is_empty() {
                default_bind_addr()
            } else {
                addr.clone()
            };
            let handle = gateway_serve(
                addr.as_str(),
                GatewayConfig {
                    robots: config.robots,
                    arena: ArenaInfo::from(&run.config.env),
                    heartbeat: Duration::from_secs(2),
                },
            )?;
            println!(
                "gateway listening on {}; waiting for a supervisor",
                handle.local_addr()
            );
            handle.wait_for_client(None)?;
            let mut supervisor = handle.supervisor();
            let pause = Duration::from_millis(args.tick_ms);
            let sup: &mut dyn Supervisor = &mut supervisor;
            run_fleet(
                &env,
                &config,
                &run.policy,
                &mut gates,
                sup,
                &mut rng,
                &mut |tick| {
                    handle.publish_tick(tick);
                    if let Some(t) = trace.as_mut() {
                        write_jsonl(std::slice::from_ref(tick), t)?;
                    }
                    std::thread::sleep(pause);
                    Ok(())
                },
            )?
        }
    };
    if let Some(t) = trace.as_mut() {
        t.flush()?;
    }
    println!("{}", serde_json::to_string_pretty(&metrics)?);
    Ok(())
}

fn export(
    format: ExportFormat,
    out: Option<PathBuf>,
    eval_episodes: usize,
    run_dirs: Vec<PathBuf>,
) -> Result<()> {
    let mut rows = Vec::new();
    for dir in &run_dirs {
        let run = load_run(dir)?;
        let metrics = run.metrics.clone().ok_or_else(|| {
            Error::InvalidArgument(format!("{} has no {}", dir.display(), run_files::SUMMARY))
        })?;
        let mut row = SummaryRow::new(run.config.label(), run.config.seed, &metrics);
        if eval_episodes > 0 {
            row.auto_succ = Some(eval_run(&run, eval_episodes, run.config.seed, false)?.fraction());
            if run.config.algorithm != Algorithm::Bc {
                row.int_aided_succ =
                    Some(eval_run(&run, eval_episodes, run.config.seed, true)?.fraction());
            }
        }
        rows.push(row);
    }
    let sink: Box<dyn Write> = match out {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(std::io::stdout().lock()),
    };
    match format {
        ExportFormat::Csv => write_csv(&rows, sink),
        ExportFormat::Jsonl => {
            let mut sink = sink;
            write_jsonl(&rows, &mut sink)?;
            sink.flush()?;
            Ok(())
        }
    }
}

fn demo_collect(
    cli_config: Option<&Path>,
    num_demos: Option<usize>,
    seed: Option<u64>,
    out: PathBuf,
) -> Result<()> {
    let mut config = base_config(cli_config)?;
    if let Some(n) = num_demos {
        config.num_demos = n;
    }
    if let Some(s) = seed {
        config.seed = s;
    }
    let env = BottleneckEnv::new(config.env.clone())?;
    let oracle = ScriptedOracle::new(config.oracle.clone())?;
    let mut rng = SimRng::seed_from_u64(config.seed);
    let demos = engine::collect_demos(&env, &oracle, config.num_demos, &mut rng)?;
    save_dataset(&out, &demos)?;
    info!("{} demonstrations", config.num_demos);
    println!("wrote {} transitions to {}", demos.len(), out.display());
    Ok(())
}

/// Clap omits the usage line for some errors (e.g. invalid values); always show it.
fn exit_with_usage(e: clap::Error) -> ! {
    if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
        e.exit();
    }
    let rendered = e.render().to_string();
    eprint!("{rendered}");
    if !rendered.contains("Usage:") {
        eprintln!("\n{}", Cli::command().render_usage());
    }
    std::process::exit(e.exit_code());
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::try_parse().unwrap_or_else(|e| exit_with_usage(e));
    let config = cli.config.as_deref();
    let outcome = match cli.command {
        Command::DemoCollect {
            num_demos,
            seed,
            out,
        } => demo_collect(config, num_demos, seed, out),
        Command::Train(args) => train(config, args),
        Command::Eval(args) => eval(args),
        Command::Fleet(args) => fleet(args),
        Command::Export {
            format,
            out,
            eval_episodes,
            run_dirs,
        } => export(format, out, eval_episodes, run_dirs),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Error::Config(msg)) => Cli::command().error(ErrorKind::ValueValidation, msg).exit(),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
