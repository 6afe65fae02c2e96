//! `ldssl` command-line interface.

mod commands;
mod error;
mod spec;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::error::CliError;
use crate::spec::{DatasetSpec, RunSpec, DEFAULT_N, DEFAULT_NOISE, DEFAULT_SEPARATION};
use ldssl::data::LabelTokens;
use ldssl::experiment::Method;

#[derive(Debug, Parser)]
#[command(name = "ldssl", version, about = "Semi-supervised binary classification with angular latent distances")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Cross-validated encoder + semi-supervised classifier run.
    Train(RunArgs),
    /// One run per labeled fraction; writes sweep_m.csv.
    SweepM {
        #[command(flatten)]
        run: RunArgs,
        /// Labeled fractions, comma separated.
        #[arg(long, value_delimiter = ',')]
        m_list: Option<Vec<f64>>,
    },
    /// One run per anchor count; writes sweep_k.csv.
    SweepK {
        #[command(flatten)]
        run: RunArgs,
        /// Anchor counts, comma separated.
        #[arg(long, value_delimiter = ',')]
        k_list: Option<Vec<usize>>,
    },
    /// Labeled-only baseline on the same folds and seeds.
    Baseline {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_enum, default_value_t = Which::Entropy)]
        which: Which,
        /// Metrics or manifest of a previous run to pair with, fold by fold.
        #[arg(long)]
        compare: Option<PathBuf>,
    },
    /// Re-evaluate the checkpoints of a finished run.
    Eval(InspectArgs),
    /// Export the 2-D latent projection of one fold of a finished run.
    Project {
        #[command(flatten)]
        inspect: InspectArgs,
        #[arg(long, default_value_t = 0)]
        fold: usize,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Which {
    Entropy,
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Generator {
    TwoMoons,
    TwoGaussians,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[arg(long)]
    seed: Option<u64>,
    /// Run directory (default: $LDSSL_OUT/<name>, or runs/<name>).
    #[arg(long)]
    out: Option<PathBuf>,
    /// JSON config: partial spec, spec.json or manifest.json.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    m: Option<f64>,
    /// Run only the first N of the 10 repetitions.
    #[arg(long)]
    repetitions: Option<usize>,
    /// Skip per-feature standardization.
    #[arg(long)]
    no_standardize: bool,
    #[command(flatten)]
    data: DataArgs,
}

#[derive(Debug, Args)]
struct DataArgs {
    #[arg(long, value_enum, conflicts_with = "csv")]
    generator: Option<Generator>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long)]
    separation: Option<f64>,
    /// Generator seed (default: --seed).
    #[arg(long)]
    data_seed: Option<u64>,
    #[arg(long)]
    csv: Option<PathBuf>,
    #[arg(long)]
    label_column: Option<String>,
    #[arg(long)]
    positive_token: Option<String>,
    #[arg(long)]
    negative_token: Option<String>,
    #[arg(long)]
    unlabeled_token: Option<String>,
}

#[derive(Debug, Args)]
struct InspectArgs {
    /// Directory written by train, baseline or a sweep point.
    #[arg(long)]
    run: PathBuf,
    /// Output directory (default: the run directory).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Evaluate on this CSV instead of the run's own test folds.
    #[arg(long)]
    csv: Option<PathBuf>,
    #[arg(long)]
    label_column: Option<String>,
    #[arg(long)]
    positive_token: Option<String>,
    #[arg(long)]
    negative_token: Option<String>,
    #[arg(long)]
    unlabeled_token: Option<String>,
}

impl RunArgs {
    /// Flags over config file over defaults.
    fn resolve(&self, command: &str) -> Result<RunSpec, CliError> {
        let mut spec = RunSpec::from_config(self.config.as_deref())?;
        spec.command = command.into();
        if let Some(v) = self.seed {
            spec.seed = v;
        }
        if let Some(v) = self.jobs {
            spec.jobs = v;
        }
        if let Some(v) = self.epochs {
            spec.train.epochs = v;
        }
        if let Some(v) = self.batch_size {
            spec.train.batch_size = v;
        }
        if let Some(v) = self.k {
            spec.k = v;
        }
        if let Some(v) = self.m {
            spec.m_fraction = v;
        }
        if self.repetitions.is_some() {
            spec.repetitions = self.repetitions;
        }
        if self.no_standardize {
            spec.standardize = false;
        }
        spec.dataset = self.data.resolve(spec.dataset)?;
        spec.normalize();
        spec.validate()?;
        Ok(spec)
    }
}

impl DataArgs {
    fn resolve(&self, current: DatasetSpec) -> Result<DatasetSpec, CliError> {
        let generator_flag = self.n.is_some() || self.noise.is_some() || self.separation.is_some() || self.data_seed.is_some();
        if let Some(path) = &self.csv {
            if generator_flag {
                return Err(CliError::config("--n/--noise/--separation/--data-seed apply to generators, not --csv"));
            }
            let mut tokens = LabelTokens::default();
            apply_tokens(&mut tokens, &self.positive_token, &self.negative_token, &self.unlabeled_token);
            return Ok(DatasetSpec::Csv {
                path: path.clone(),
                label_column: self.label_column.clone().unwrap_or_else(|| "label".into()),
                tokens,
            });
        }
        let mut ds = match self.generator {
            Some(Generator::TwoMoons) if !matches!(current, DatasetSpec::TwoMoons { .. }) => DatasetSpec::TwoMoons {
                n: DEFAULT_N,
                noise: DEFAULT_NOISE,
                seed: None,
            },
            Some(Generator::TwoGaussians) if !matches!(current, DatasetSpec::TwoGaussians { .. }) => {
                DatasetSpec::TwoGaussians {
                    n: DEFAULT_N,
                    separation: DEFAULT_SEPARATION,
                    seed: None,
                }
            }
            _ => current,
        };
        match &mut ds {
            DatasetSpec::TwoMoons { n, noise, seed } => {
                if self.separation.is_some() {
                    return Err(CliError::config("--separation applies to two-gaussians"));
                }
                set(n, self.n);
                set(noise, self.noise);
                if self.data_seed.is_some() {
                    *seed = self.data_seed;
                }
            }
            DatasetSpec::TwoGaussians { n, separation, seed } => {
                if self.noise.is_some() {
                    return Err(CliError::config("--noise applies to two-moons"));
                }
                set(n, self.n);
                set(separation, self.separation);
                if self.data_seed.is_some() {
                    *seed = self.data_seed;
                }
            }
            DatasetSpec::Csv {
                label_column, tokens, ..
            } => {
                if generator_flag {
                    return Err(CliError::config("--n/--noise/--separation/--data-seed apply to generators, not CSV input"));
                }
                if let Some(c) = &self.label_column {
                    label_column.clone_from(c);
                }
                apply_tokens(tokens, &self.positive_token, &self.negative_token, &self.unlabeled_token);
            }
        }
        Ok(ds)
    }
}

fn set<T: Copy>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn apply_tokens(tokens: &mut LabelTokens, pos: &Option<String>, neg: &Option<String>, unl: &Option<String>) {
    if let Some(t) = pos {
        tokens.positive.clone_from(t);
    }
    if let Some(t) = neg {
        tokens.negative.clone_from(t);
    }
    if let Some(t) = unl {
        tokens.unlabeled.clone_from(t);
    }
}

impl InspectArgs {
    fn dataset_override(&self) -> Option<DatasetSpec> {
        let path = self.csv.as_ref()?;
        let mut tokens = LabelTokens::default();
        apply_tokens(&mut tokens, &self.positive_token, &self.negative_token, &self.unlabeled_token);
        Some(DatasetSpec::Csv {
            path: path.clone(),
            label_column: self.label_column.clone().unwrap_or_else(|| "label".into()),
            tokens,
        })
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Train(run) => {
            let mut spec = run.resolve("train")?;
            spec.method = Method::Sembc;
            commands::train(&spec, run.out.as_deref())
        }
        Command::SweepM { run, m_list } => {
            let mut spec = run.resolve("sweep-m")?;
            spec.method = Method::Sembc;
            if let Some(list) = m_list {
                spec.m_list = list;
            }
            spec.validate()?;
            commands::sweep_m(&spec, run.out.as_deref())
        }
        Command::SweepK { run, k_list } => {
            let mut spec = run.resolve("sweep-k")?;
            spec.method = Method::Sembc;
            if let Some(list) = k_list {
                spec.k_list = list;
            }
            spec.validate()?;
            commands::sweep_k(&spec, run.out.as_deref())
        }
        Command::Baseline { run, which, compare } => {
            let mut spec = run.resolve("baseline")?;
            spec.method = match which {
                Which::Entropy => Method::Entropy,
                Which::Full => Method::Full,
            };
            commands::baseline(&spec, run.out.as_deref(), compare.as_deref())
        }
        Command::Eval(inspect) => commands::eval(&inspect.run, inspect.out.as_deref(), inspect.dataset_override()),
        Command::Project { inspect, fold } => {
            commands::project(&inspect.run, inspect.out.as_deref(), inspect.dataset_override(), fold)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
