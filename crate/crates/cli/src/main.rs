use std::fs;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use pretext_core::dataset::{build_dataset, BuildMode};
use pretext_core::grpo::diagnostics_csv;
use pretext_core::service::{serve_stdio, Scorer, TcpServer};
use pretext_core::toy::{train, ToyConfig, TrainMode};

#[derive(Parser)]
#[command(name = "pretext", version, about = "Pretext-task reward engine, dataset builder and toy trainer")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build transform-tagged records from a JSONL manifest.
    Build(BuildArgs),
    /// Score newline-delimited JSON requests.
    Serve(ServeArgs),
    /// Train the toy policy and report diagnostics.
    Train(TrainArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Sft,
    Rl,
}

#[derive(Args)]
struct BuildArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    seed: u64,
    #[arg(long, value_enum)]
    mode: ModeArg,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct ServeArgs {
    /// Read requests from stdin, write responses to stdout.
    #[arg(long)]
    stdio: bool,
    /// Listen for TCP connections on this address, e.g. 127.0.0.1:7070.
    #[arg(long, value_name = "ADDR:PORT")]
    listen: Option<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum TrainModeArg {
    Pretext,
    Vanilla,
    Viss,
    PretextPlus,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long, value_enum, default_value = "pretext")]
    mode: TrainModeArg,
    #[arg(long, default_value_t = 500)]
    steps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// JSON file with any `ToyConfig` fields; flags given here win.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    r_t_scale: Option<f64>,
    #[arg(long)]
    learning_rate: Option<f64>,
    /// Directory for diagnostics.csv and summary.json.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn run_build(args: BuildArgs) -> Result<()> {
    let mode = match args.mode {
        ModeArg::Sft => BuildMode::Sft,
        ModeArg::Rl => BuildMode::Rl,
    };
    let count = build_dataset(&args.manifest, args.seed, mode, &args.out)
        .with_context(|| format!("building from {}", args.manifest.display()))?;
    eprintln!("wrote {count} records to {}", args.out.display());
    Ok(())
}

fn run_serve(args: ServeArgs) -> Result<()> {
    let scorer = Scorer::from_env()?;
    if args.stdio {
        serve_stdio(&scorer)?;
        return Ok(());
    }
    let Some(addr) = args.listen else {
        bail!("one of --stdio or --listen is required");
    };
    let server = TcpServer::bind(addr.as_str(), scorer)?;
    eprintln!("listening on {}", server.local_addr()?);
    server.run();
    Ok(())
}

fn run_train(args: TrainArgs) -> Result<()> {
    let mut config = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
        }
        None => ToyConfig::default(),
    };
    config.mode = match args.mode {
        TrainModeArg::Pretext => TrainMode::Pretext,
        TrainModeArg::Vanilla => TrainMode::Vanilla,
        TrainModeArg::Viss => TrainMode::Viss,
        TrainModeArg::PretextPlus => TrainMode::PretextPlus,
    };
    config.steps = args.steps;
    config.seed = args.seed;
    if let Some(v) = args.r_t_scale {
        config.rewards.r_t_scale = v;
    }
    if let Some(v) = args.learning_rate {
        config.learning_rate = v;
    }
    if config.steps == 0 {
        bail!("--steps must be at least 1");
    }
    if !config.rewards.is_valid() {
        bail!("reward scales must be finite and non-negative");
    }
    config.grpo.validate()?;

    let outcome = train(&config);
    let last = outcome.diagnostics.last().expect("at least one step");
    let summary = serde_json::json!({
        "final_mean_reward": last.mean_reward,
        "final_all_correct_ratio": last.all_correct_ratio,
        "steps": outcome.diagnostics.len(),
    });
    if let Some(dir) = &args.out {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        fs::write(dir.join("diagnostics.csv"), diagnostics_csv(&outcome.diagnostics))?;
        fs::write(dir.join("summary.json"), format!("{summary}\n"))?;
    }
    println!("{summary}");
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Build(args) => run_build(args),
        Command::Serve(args) => run_serve(args),
        Command::Train(args) => run_train(args),
    }
}
