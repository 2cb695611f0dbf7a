//! `nvgf`: experiment driver emitting plot-ready CSV and JSON artifacts.
//!
//! Exit codes: 0 success, 2 configuration error, 3 numerical failure, 1 anything else.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use config::{ConfigError, ExperimentConfig, ReadoutChoice};
use nvgf::design::Nonlinearity;
use nvgf::nn::Architecture;

#[derive(Parser)]
#[command(name = "nvgf", version, about = "Node-variant graph filter experiments")]
struct Cli {
    /// JSON experiment config; flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Repeat for more log output.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Frequency response of a filter to a single-eigenvector input.
    Freq(FreqArgs),
    /// Optimal node-variant replacement of a pointwise nonlinearity.
    Design(DesignArgs),
    /// Empirical check of the first-order perturbation bound.
    Stability(StabilityArgs),
    /// Train one architecture.
    Train(TrainArgs),
    /// Exhaustive search over learning rate, features and order.
    Grid(GridArgs),
    /// Word adjacency network and authorship dataset from text files.
    Wan(WanArgs),
    /// Item-similarity graph and rating-interpolation dataset.
    Movies(MoviesArgs),
}

#[derive(Args)]
struct FilterArgs {
    /// Graph JSON or edge CSV (default: bundled toy graph).
    #[arg(long)]
    graph: Option<PathBuf>,
    /// Tap JSON (default: random node-variant taps).
    #[arg(long)]
    taps: Option<PathBuf>,
    /// Filter order K.
    #[arg(long)]
    order: Option<usize>,
}

#[derive(Args)]
struct FreqArgs {
    #[command(flatten)]
    filter: FilterArgs,
    /// Eigenvalue index (0-based, ascending) of the input; default is the largest.
    #[arg(long)]
    frequency: Option<usize>,
}

#[derive(Args)]
struct DesignArgs {
    #[command(flatten)]
    filter: FilterArgs,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    nonlinearity: Option<Nonlinearity>,
    #[arg(long)]
    input_mean: Option<f64>,
    #[arg(long)]
    input_std: Option<f64>,
    /// Signals CSV to estimate moments from instead of Gaussian samples.
    #[arg(long)]
    signals: Option<PathBuf>,
}

#[derive(Args)]
struct StabilityArgs {
    #[command(flatten)]
    filter: FilterArgs,
    /// Comma-separated perturbation sizes.
    #[arg(long, value_delimiter = ',')]
    epsilons: Option<Vec<f64>>,
    #[arg(long)]
    trials: Option<usize>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    arch: Option<Architecture>,
    /// Dataset directory from `wan` or `movies` (default: synthetic band dataset).
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    features: Option<usize>,
    #[arg(long)]
    order: Option<usize>,
    #[arg(long, value_enum)]
    readout: Option<ReadoutChoice>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    dropout: Option<f64>,
    /// Band dataset graph size.
    #[arg(long)]
    nodes: Option<usize>,
    #[arg(long)]
    band_samples: Option<usize>,
}

#[derive(Args)]
struct GridArgs {
    #[command(flatten)]
    train: TrainArgs,
    #[arg(long, value_delimiter = ',')]
    grid_lrs: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    grid_features: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    grid_orders: Option<Vec<usize>>,
}

#[derive(Args)]
struct WanArgs {
    /// Directory of the author's text files.
    #[arg(long)]
    texts: Option<PathBuf>,
    /// Directory of texts by other authors; enables the authorship dataset.
    #[arg(long)]
    others: Option<PathBuf>,
    #[arg(long)]
    function_words: Option<PathBuf>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    window: Option<usize>,
}

#[derive(Args)]
struct MoviesArgs {
    /// Ratings CSV with header `user,item,rating`.
    #[arg(long)]
    ratings: Option<PathBuf>,
    /// Keep this many most-rated items.
    #[arg(long)]
    items: Option<usize>,
    #[arg(long)]
    knn: Option<usize>,
    /// Item id to interpolate (default: the most-rated item).
    #[arg(long)]
    target: Option<u64>,
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn set_opt<T>(slot: &mut Option<T>, value: Option<T>) {
    if value.is_some() {
        *slot = value;
    }
}

impl FilterArgs {
    fn apply(self, c: &mut ExperimentConfig) {
        set_opt(&mut c.graph, self.graph);
        set_opt(&mut c.taps, self.taps);
        set(&mut c.order, self.order);
    }
}

impl TrainArgs {
    fn apply(self, c: &mut ExperimentConfig) {
        set(&mut c.arch, self.arch);
        set_opt(&mut c.dataset, self.dataset);
        set(&mut c.features, self.features);
        set(&mut c.order, self.order);
        set(&mut c.readout, self.readout);
        set(&mut c.train.lr, self.lr);
        set(&mut c.train.epochs, self.epochs);
        set(&mut c.train.batch_size, self.batch_size);
        set(&mut c.train.dropout, self.dropout);
        set(&mut c.nodes, self.nodes);
        set(&mut c.band_samples, self.band_samples);
    }
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Freq(_) => "freq",
            Command::Design(_) => "design",
            Command::Stability(_) => "stability",
            Command::Train(_) => "train",
            Command::Grid(_) => "grid",
            Command::Wan(_) => "wan",
            Command::Movies(_) => "movies",
        }
    }

    fn apply(self, c: &mut ExperimentConfig) {
        match self {
            Command::Freq(a) => {
                a.filter.apply(c);
                set_opt(&mut c.frequency, a.frequency);
            }
            Command::Design(a) => {
                a.filter.apply(c);
                set(&mut c.samples, a.samples);
                set(&mut c.nonlinearity, a.nonlinearity);
                set(&mut c.input_mean, a.input_mean);
                set(&mut c.input_std, a.input_std);
                set_opt(&mut c.signals, a.signals);
            }
            Command::Stability(a) => {
                a.filter.apply(c);
                set(&mut c.epsilons, a.epsilons);
                set(&mut c.trials, a.trials);
            }
            Command::Train(a) => a.apply(c),
            Command::Grid(a) => {
                a.train.apply(c);
                set(&mut c.grid.lrs, a.grid_lrs);
                set(&mut c.grid.features, a.grid_features);
                set(&mut c.grid.orders, a.grid_orders);
            }
            Command::Wan(a) => {
                set_opt(&mut c.texts, a.texts);
                set_opt(&mut c.others, a.others);
                set_opt(&mut c.function_words, a.function_words);
                set(&mut c.alpha, a.alpha);
                set(&mut c.window, a.window);
            }
            Command::Movies(a) => {
                set_opt(&mut c.ratings, a.ratings);
                set(&mut c.items, a.items);
                set(&mut c.knn, a.knn);
                set_opt(&mut c.target, a.target);
            }
        }
    }
}

/// Failure classes, mapped to exit codes.
#[derive(Debug)]
pub enum Failure {
    Config(String),
    Numerical(String),
    Other(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Numerical(_) => 3,
            Failure::Other(_) => 1,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Config(m) => write!(f, "configuration error: {m}"),
            Failure::Numerical(m) => write!(f, "numerical failure: {m}"),
            Failure::Other(m) => write!(f, "{m}"),
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.0)
    }
}

impl From<nvgf::Error> for Failure {
    fn from(e: nvgf::Error) -> Self {
        if e.is_numerical() {
            Failure::Numerical(e.to_string())
        } else {
            Failure::Config(e.to_string())
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Other(format!("cannot write output: {e}"))
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let mut cfg = ExperimentConfig::load(cli.config.as_deref())?;
    set(&mut cfg.seed, cli.seed);
    let name = cli.command.name();
    cli.command.apply(&mut cfg);
    cfg.check_paths()?;
    cfg.train.validate()?;

    if let Some(jobs) = cli.jobs {
        // only fails when a global pool already exists
        let _ = rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build_global();
    }
    let jobs = cli
        .jobs
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));

    let mut out = output::Outputs::create(&cli.out)?;
    match name {
        "freq" => commands::freq(&cfg, &mut out)?,
        "design" => commands::design(&cfg, &mut out)?,
        "stability" => commands::stability(&cfg, &mut out)?,
        "train" => commands::train(&cfg, &mut out)?,
        "grid" => commands::grid(&cfg, &mut out, jobs)?,
        "wan" => commands::wan(&cfg, &mut out)?,
        "movies" => commands::movies(&cfg, &mut out)?,
        _ => unreachable!("every subcommand is dispatched"),
    }
    out.finish(name, &cfg)?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("nvgf: {e}");
            ExitCode::from(e.code())
        }
    }
}
