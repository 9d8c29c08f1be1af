//! `gazeloc`: synthetic data generation, DQN and keypoint-baseline training,
//! evaluation and comparison.

mod commands;
mod plot;
mod settings;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, CommandFactory, Parser, Subcommand};

use settings::FileConfig;

#[derive(Debug, Parser)]
#[command(
    name = "gazeloc",
    version,
    about = "Lesion localization by deep Q-learning along radiologist gaze plots"
)]
struct Cli {
    /// Seed for data generation, the train/test split and training.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Flat TOML file of settings; flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Dataset directory (default: data).
    #[arg(long, global = true)]
    data_dir: Option<PathBuf>,
    /// Output directory (default: runs).
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Accept cases whose gaze plot never enters the lesion.
    #[arg(long, global = true)]
    lenient: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic dataset.
    GenData(GenDataArgs),
    /// Train the deep Q-network.
    TrainRl(TrainRlArgs),
    /// Train the supervised keypoint baseline.
    TrainSdl(TrainSdlArgs),
    /// Evaluate a checkpoint on the test split.
    Eval(EvalArgs),
    /// Compare a Q-network against a keypoint baseline on the test split.
    Compare(CompareArgs),
}

#[derive(Debug, Args)]
struct GenDataArgs {
    /// Number of cases.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    n: Option<u64>,
    /// Side length of the square images, in pixels.
    #[arg(long, value_parser = clap::value_parser!(u64).range(8..))]
    image_size: Option<u64>,
    /// Fixations per gaze plot.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    gaze_length: Option<u64>,
    #[arg(long)]
    lesion_contrast: Option<f64>,
}

#[derive(Debug, Args)]
struct SplitArgs {
    #[arg(long)]
    train_n: Option<usize>,
    #[arg(long)]
    test_n: Option<usize>,
}

#[derive(Debug, Args)]
struct TrainRlArgs {
    #[command(flatten)]
    split: SplitArgs,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    epsilon_start: Option<f64>,
    #[arg(long)]
    epsilon_decay: Option<f64>,
    #[arg(long)]
    epsilon_min: Option<f64>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    n_memory: Option<usize>,
    #[arg(long)]
    n_batch: Option<usize>,
    #[arg(long)]
    episodes: Option<usize>,
    #[arg(long)]
    agent_square: Option<usize>,
    #[arg(long)]
    eval_every: Option<usize>,
    /// Also save a checkpoint every K episodes.
    #[arg(long)]
    checkpoint_every: Option<usize>,
}

#[derive(Debug, Args)]
struct TrainSdlArgs {
    #[command(flatten)]
    split: SplitArgs,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    n_batch: Option<usize>,
    /// Relative test-loss rise over its running minimum that marks divergence.
    #[arg(long)]
    divergence_ratio: Option<f64>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[command(flatten)]
    split: SplitArgs,
    #[arg(long)]
    checkpoint: PathBuf,
}

#[derive(Debug, Args)]
struct CompareArgs {
    #[command(flatten)]
    split: SplitArgs,
    #[arg(long)]
    rl_checkpoint: PathBuf,
    #[arg(long)]
    sdl_checkpoint: PathBuf,
}

impl Cli {
    fn flags(&self) -> FileConfig {
        let mut f = FileConfig {
            seed: self.seed,
            data_dir: self.data_dir.clone(),
            out_dir: self.out_dir.clone(),
            strict: self.lenient.then_some(false),
            ..Default::default()
        };
        let split = |f: &mut FileConfig, s: &SplitArgs| {
            f.train_n = s.train_n;
            f.test_n = s.test_n;
        };
        match &self.command {
            Command::GenData(a) => {
                f.n_cases = a.n.map(|n| n as usize);
                f.image_size = a.image_size.map(|n| n as usize);
                f.gaze_length = a.gaze_length.map(|n| n as usize);
                f.lesion_contrast = a.lesion_contrast;
            }
            Command::TrainRl(a) => {
                split(&mut f, &a.split);
                f.gamma = a.gamma;
                f.epsilon_start = a.epsilon_start;
                f.epsilon_decay = a.epsilon_decay;
                f.epsilon_min = a.epsilon_min;
                f.learning_rate = a.learning_rate;
                f.n_memory = a.n_memory;
                f.n_batch = a.n_batch;
                f.episodes = a.episodes;
                f.agent_square = a.agent_square;
                f.eval_every = a.eval_every;
                f.checkpoint_every = a.checkpoint_every;
            }
            Command::TrainSdl(a) => {
                split(&mut f, &a.split);
                f.sdl_epochs = a.epochs;
                f.sdl_learning_rate = a.learning_rate;
                f.sdl_n_batch = a.n_batch;
                f.divergence_ratio = a.divergence_ratio;
            }
            Command::Eval(a) => split(&mut f, &a.split),
            Command::Compare(a) => split(&mut f, &a.split),
        }
        f
    }
}

fn run(cli: &Cli, cfg: &FileConfig, seed: u64) -> gazeloc::Result<()> {
    match &cli.command {
        Command::GenData(_) => commands::gen_data(cfg, seed),
        Command::TrainRl(_) => commands::train_rl(cfg, seed),
        Command::TrainSdl(_) => commands::train_sdl(cfg, seed),
        Command::Eval(a) => commands::eval(cfg, seed, &a.checkpoint),
        Command::Compare(a) => commands::compare(cfg, seed, &a.rl_checkpoint, &a.sdl_checkpoint),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let file = match &cli.config {
        Some(path) => match FileConfig::load(path) {
            Ok(f) => f,
            Err(msg) => {
                eprintln!("error: {msg}");
                return ExitCode::from(2);
            }
        },
        None => FileConfig::default(),
    };
    let cfg = cli.flags().or(file);
    let Some(seed) = cfg.seed else {
        Cli::command()
            .error(
                clap::error::ErrorKind::MissingRequiredArgument,
                "a seed is required: pass --seed or set `seed` in the config file",
            )
            .exit();
    };
    match run(&cli, &cfg, seed) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
