use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use codingtree::features::DEFAULT_POSITION_SLOTS;
use codingtree::graphio::{Split, DEFAULT_WINDOW};
use codingtree::harness::{self, Corpus, CorpusPaths, Experiment, Format, GraphMode, TreeMethod};
use codingtree::learner::{Pool, TrainConfig};
use codingtree::Result;

/// Coding-tree text classification pipeline.
#[derive(Parser)]
#[command(name = "codingtree", version)]
struct Cli {
    /// Output format for summaries and reports.
    #[arg(long, value_enum, global = true, default_value = "json")]
    format: Format,
    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build one graph file per parsed document.
    BuildGraphs {
        /// Manifest of parsed documents (JSON lines of doc_id, split, path).
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, value_enum, default_value = "dependency")]
        mode: GraphMode,
        /// Co-occurrence window, in tokens.
        #[arg(long, default_value_t = DEFAULT_WINDOW)]
        window: usize,
        #[arg(long)]
        out_dir: PathBuf,
        /// Worker threads (0 = one per core).
        #[arg(long, default_value_t = 0)]
        workers: usize,
    },
    /// Build one coding tree per graph.
    BuildTrees {
        /// Graph manifest written by build-graphs.
        #[arg(long)]
        graphs: PathBuf,
        #[arg(long)]
        height: usize,
        #[arg(long, value_enum, default_value = "sema")]
        method: TreeMethod,
        /// Seed for random trees.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        allow_any_height: bool,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 0)]
        workers: usize,
    },
    /// Train on the train split and score the test split.
    Train {
        #[command(flatten)]
        data: DataArgs,
        /// Directory of tree files written by build-trees.
        #[arg(long)]
        trees: PathBuf,
        /// Defaults to the height of the trees.
        #[arg(long)]
        height: Option<usize>,
        #[command(flatten)]
        train: TrainArgs,
    },
    /// Score a saved model.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        graphs: PathBuf,
        #[arg(long)]
        trees: PathBuf,
        #[arg(long)]
        embeddings: PathBuf,
        /// Only this split (default: both).
        #[arg(long, value_parser = parse_split)]
        split: Option<Split>,
    },
    /// Build trees and train at several heights.
    Sweep {
        #[command(flatten)]
        data: DataArgs,
        /// Heights as start:end:step (inclusive) or a comma list.
        #[arg(long, default_value = "2:12:2")]
        heights: String,
        #[arg(long, value_enum, default_value = "sema")]
        method: TreeMethod,
        #[arg(long, default_value_t = 0)]
        tree_seed: u64,
        #[arg(long, default_value_t = 0)]
        workers: usize,
        #[command(flatten)]
        train: TrainArgs,
    },
    /// Compare entropy-minimizing trees with random trees of the same height.
    AblateRt {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, default_value_t = 2)]
        height: usize,
        #[arg(long, default_value_t = 0)]
        tree_seed: u64,
        #[arg(long, default_value_t = 0)]
        workers: usize,
        #[command(flatten)]
        train: TrainArgs,
    },
    /// Parameter count and per-document forward cost of a saved model.
    Report {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Document lengths (tokens) to cost.
        #[arg(long, value_delimiter = ',', default_value = "10,100,1000")]
        leaves: Vec<usize>,
    },
}

#[derive(Args)]
struct DataArgs {
    /// Graph manifest written by build-graphs.
    #[arg(long)]
    graphs: PathBuf,
    /// Word vectors, one `word v1 .. vd` per line.
    #[arg(long)]
    embeddings: PathBuf,
    #[arg(long, default_value_t = DEFAULT_POSITION_SLOTS)]
    position_slots: usize,
    /// Seed for out-of-vocabulary vectors.
    #[arg(long, default_value_t = 0)]
    feature_seed: u64,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long, default_value_t = 96)]
    hidden: usize,
    #[arg(long, value_enum, default_value = "mean")]
    pool: Pool,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value_t = 0.5)]
    dropout: f64,
    #[arg(long, default_value_t = 4)]
    batch: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 200)]
    max_epochs: usize,
    #[arg(long, default_value_t = 10)]
    patience: usize,
    /// Independent runs with seeds seed, seed+1, ...
    #[arg(long, default_value_t = 1)]
    runs: usize,
    #[arg(long)]
    allow_any_height: bool,
}

impl TrainArgs {
    fn config(&self, height: usize) -> TrainConfig {
        TrainConfig {
            height,
            hidden: self.hidden,
            pool: self.pool,
            lr: self.lr,
            dropout: self.dropout,
            batch: self.batch,
            seed: self.seed,
            max_epochs: self.max_epochs,
            patience: self.patience,
            allow_any_height: self.allow_any_height,
        }
    }
}

impl DataArgs {
    fn experiment(&self, workers: usize, train: &TrainArgs, height: usize) -> Experiment {
        Experiment {
            graphs: self.graphs.clone(),
            embeddings: self.embeddings.clone(),
            position_slots: self.position_slots,
            feature_seed: self.feature_seed,
            out_dir: self.out_dir.clone(),
            workers,
            runs: train.runs,
            config: train.config(height),
        }
    }
}

fn parse_split(s: &str) -> std::result::Result<Split, String> {
    match s {
        "train" => Ok(Split::Train),
        "test" => Ok(Split::Test),
        _ => Err(format!("unknown split `{s}` (expected train or test)")),
    }
}

fn emit<T: Serialize>(format: Format, value: &T, tsv: impl FnOnce(&T) -> String) {
    match format {
        Format::Json => println!("{}", serde_json::to_string_pretty(value).expect("report serializes")),
        Format::Tsv => print!("{}", tsv(value)),
    }
}

/// Lists per-document failures; any failure makes the exit status nonzero.
fn report_failures(failures: &[harness::BuildFailure]) -> Result<ExitCode> {
    for f in failures {
        eprintln!("error: {}: {}", f.doc_id, f.message);
    }
    Ok(if failures.is_empty() { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn run(cli: Cli) -> Result<ExitCode> {
    let format = cli.format;
    match cli.command {
        Command::BuildGraphs {
            manifest,
            mode,
            window,
            out_dir,
            workers,
        } => {
            let s = harness::build_graphs(&manifest, mode, window, &out_dir, workers)?;
            eprintln!("built {} graphs, {} failed", s.written, s.failures.len());
            emit(format, &s, |s| {
                format!(
                    "written\tfailed\tnodes\tedges\tmanifest\n{}\t{}\t{}\t{}\t{}\n",
                    s.written,
                    s.failures.len(),
                    s.nodes,
                    s.edges,
                    s.manifest.display()
                )
            });
            report_failures(&s.failures)
        }
        Command::BuildTrees {
            graphs,
            height,
            method,
            seed,
            allow_any_height,
            out_dir,
            workers,
        } => {
            let s = harness::build_trees(&graphs, height, method, seed, allow_any_height, &out_dir, workers)?;
            eprintln!("built {} trees, {} failed", s.written, s.failures.len());
            emit(format, &s, |s| {
                format!(
                    "written\tfailed\theight\tmean_entropy\n{}\t{}\t{}\t{}\n",
                    s.written,
                    s.failures.len(),
                    s.height,
                    s.mean_entropy
                )
            });
            report_failures(&s.failures)
        }
        Command::Train {
            data,
            trees,
            height,
            train,
        } => {
            let paths = CorpusPaths {
                graphs: data.graphs,
                trees,
                embeddings: data.embeddings,
                position_slots: data.position_slots,
                feature_seed: data.feature_seed,
            };
            let corpus = Corpus::load(&paths)?;
            let config = train.config(height.unwrap_or(corpus.height));
            let report = harness::train_runs(&corpus, &config, train.runs, &paths, Some(&data.out_dir))?;
            emit(format, &report, harness::RunReport::to_tsv);
            Ok(ExitCode::SUCCESS)
        }
        Command::Eval {
            checkpoint,
            graphs,
            trees,
            embeddings,
            split,
        } => {
            let paths = CorpusPaths {
                graphs,
                trees,
                embeddings,
                position_slots: DEFAULT_POSITION_SLOTS,
                feature_seed: 0,
            };
            let report = harness::evaluate_checkpoint(&checkpoint, &paths, split)?;
            emit(format, &report, harness::EvalReport::to_tsv);
            Ok(ExitCode::SUCCESS)
        }
        Command::Sweep {
            data,
            heights,
            method,
            tree_seed,
            workers,
            train,
        } => {
            let heights = harness::parse_heights(&heights)?;
            let exp = data.experiment(workers, &train, heights[0]);
            let report = harness::sweep(&exp, &heights, method, tree_seed)?;
            emit(format, &report, harness::SweepReport::to_tsv);
            Ok(ExitCode::SUCCESS)
        }
        Command::AblateRt {
            data,
            height,
            tree_seed,
            workers,
            train,
        } => {
            let exp = data.experiment(workers, &train, height);
            let report = harness::ablate_rt(&exp, tree_seed)?;
            emit(format, &report, harness::AblationReport::to_tsv);
            Ok(ExitCode::SUCCESS)
        }
        Command::Report { checkpoint, leaves } => {
            let report = harness::model_report(&checkpoint, &leaves)?;
            emit(format, &report, harness::ModelReport::to_tsv);
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).format_target(false).init();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
