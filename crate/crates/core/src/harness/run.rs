use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::build::{build_trees, read_stage_manifest, TreeMethod};
use super::{file_name, hex, Stat, REPORT_FILE};
use crate::entropy::TreeFile;
use crate::error::{Error, Result};
use crate::features::{featurize, load_embeddings};
use crate::graphio::{read_graph, write_atomic, Split};
use crate::learner::{evaluate, train, Checkpoint, EvalMetrics, Example, ModelDims, TrainConfig, TreeModel};

/// Where a corpus lives on disk and how to featurize it.
#[derive(Clone, Debug)]
pub struct CorpusPaths {
    /// Graph manifest written by the graph stage.
    pub graphs: PathBuf,
    /// Directory of tree files written by the tree stage.
    pub trees: PathBuf,
    pub embeddings: PathBuf,
    pub position_slots: usize,
    pub feature_seed: u64,
}

/// Graphs, trees and features of every document, split as in the manifest.
#[derive(Clone, Debug)]
pub struct Corpus {
    pub train: Vec<Example>,
    pub test: Vec<Example>,
    pub train_ids: Vec<String>,
    pub test_ids: Vec<String>,
    pub height: usize,
    pub classes: usize,
    pub input_dim: usize,
    pub mean_entropy: f64,
    /// SHA-256 over the per-document feature digests, in manifest order.
    pub feature_digest: String,
}

impl Corpus {
    pub fn load(paths: &CorpusPaths) -> Result<Self> {
        let entries = read_stage_manifest(&paths.graphs, "build-graphs")?;
        if entries.is_empty() {
            return Err(Error::Config(format!("{} lists no documents", paths.graphs.display())));
        }
        if !paths.embeddings.exists() {
            return Err(Error::MissingArtifact {
                stage: "embeddings",
                path: paths.embeddings.clone(),
            });
        }
        let table = load_embeddings(&paths.embeddings)?;

        let mut corpus = Corpus {
            train: Vec::new(),
            test: Vec::new(),
            train_ids: Vec::new(),
            test_ids: Vec::new(),
            height: 0,
            classes: 0,
            input_dim: table.dim() + paths.position_slots,
            mean_entropy: 0.0,
            feature_digest: String::new(),
        };
        let mut digest = Sha256::new();
        let mut entropy_sum = 0.0;
        for entry in &entries {
            let g = read_graph(&entry.path)?;
            let tree_path = paths.trees.join(file_name(&entry.doc_id)?);
            if !tree_path.exists() {
                return Err(Error::MissingArtifact {
                    stage: "build-trees",
                    path: tree_path,
                });
            }
            let file = TreeFile::read(&tree_path)?;
            if file.doc_id != entry.doc_id {
                return Err(Error::validation(
                    &entry.doc_id,
                    format!("tree file {} holds document `{}`", tree_path.display(), file.doc_id),
                ));
            }
            file.tree.hierarchy().leaf_index(g.num_nodes())?;
            if corpus.height == 0 {
                corpus.height = file.tree.height();
            } else if corpus.height != file.tree.height() {
                return Err(Error::Structural(format!(
                    "tree for `{}` has height {}, others have {}",
                    entry.doc_id,
                    file.tree.height(),
                    corpus.height
                )));
            }
            let features = featurize(&g, &table, paths.position_slots, paths.feature_seed)?;
            digest.update(features.digest());
            entropy_sum += file.entropy_bits;
            corpus.classes = corpus.classes.max(g.label() + 1);
            let example = Example {
                tree: file.tree,
                features,
                label: g.label(),
            };
            match entry.split {
                Split::Train => {
                    corpus.train.push(example);
                    corpus.train_ids.push(entry.doc_id.clone());
                }
                Split::Test => {
                    corpus.test.push(example);
                    corpus.test_ids.push(entry.doc_id.clone());
                }
            }
        }
        corpus.mean_entropy = entropy_sum / entries.len() as f64;
        corpus.feature_digest = hex(&digest.finalize());
        Ok(corpus)
    }

    pub fn dims(&self, hidden: usize) -> ModelDims {
        ModelDims {
            input_dim: self.input_dim,
            hidden,
            height: self.height,
            classes: self.classes,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub seed: u64,
    pub best_epoch: usize,
    pub epochs: usize,
    pub train: EvalMetrics,
    pub val: EvalMetrics,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test: Option<EvalMetrics>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config: TrainConfig,
    pub train_documents: usize,
    pub test_documents: usize,
    pub classes: usize,
    pub input_dim: usize,
    pub params: usize,
    pub mean_entropy: f64,
    pub feature_digest: String,
    pub runs: Vec<RunResult>,
    pub train_acc: Stat,
    pub val_acc: Stat,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_acc: Option<Stat>,
    pub wall_clock_secs: f64,
}

impl RunReport {
    /// Test accuracy when there is a test split, validation otherwise.
    pub fn headline(&self) -> f64 {
        self.test_acc.unwrap_or(self.val_acc).mean
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from("run\tseed\tbest_epoch\tepochs\ttrain_acc\tval_acc\ttest_acc\n");
        for (i, r) in self.runs.iter().enumerate() {
            let test = r.test.map_or("-".to_string(), |t| t.accuracy.to_string());
            out += &format!(
                "{i}\t{}\t{}\t{}\t{}\t{}\t{test}\n",
                r.seed, r.best_epoch, r.epochs, r.train.accuracy, r.val.accuracy
            );
        }
        let stat = |s: Option<Stat>, f: fn(Stat) -> Option<f64>| s.and_then(f).map_or("-".to_string(), |x| x.to_string());
        for (name, f) in [
            ("mean", (|s: Stat| Some(s.mean)) as fn(Stat) -> Option<f64>),
            ("std", |s: Stat| s.std),
        ] {
            out += &format!(
                "{name}\t-\t-\t-\t{}\t{}\t{}\n",
                stat(Some(self.train_acc), f),
                stat(Some(self.val_acc), f),
                stat(self.test_acc, f)
            );
        }
        out
    }
}

/// Trains `runs` models with seeds `config.seed`, `config.seed + 1`, ...
/// When `out_dir` is given, each run writes `run-<i>/checkpoint.json` and
/// `run-<i>/metrics.jsonl`, and the report goes to `report.json`.
pub fn train_runs(
    corpus: &Corpus,
    config: &TrainConfig,
    runs: usize,
    paths: &CorpusPaths,
    out_dir: Option<&Path>,
) -> Result<RunReport> {
    let start = Instant::now();
    if runs == 0 {
        return Err(Error::Config("--runs must be at least 1".into()));
    }
    if config.height != corpus.height {
        return Err(Error::Config(format!(
            "configured height {} but the trees have height {}",
            config.height, corpus.height
        )));
    }
    config.validate()?;
    let dims = corpus.dims(config.hidden);
    let mut results = Vec::with_capacity(runs);
    for r in 0..runs {
        let run_config = TrainConfig {
            seed: config.seed + r as u64,
            ..config.clone()
        };
        let model = TreeModel::new(dims, config.pool, &mut ChaCha8Rng::seed_from_u64(run_config.seed))?;
        let outcome = train(model, &corpus.train, &run_config)?;
        let test = if corpus.test.is_empty() {
            None
        } else {
            Some(evaluate(&outcome.model, &corpus.test)?)
        };
        log::info!(
            "run {r} (seed {}): train {:.4} val {:.4} test {:?}",
            run_config.seed,
            outcome.train.accuracy,
            outcome.val.accuracy,
            test.map(|t| t.accuracy)
        );
        if let Some(dir) = out_dir {
            let run_dir = dir.join(format!("run-{r}"));
            let ck = Checkpoint::from_model(&outcome.model, &run_config, paths.position_slots, paths.feature_seed);
            write_atomic(&run_dir.join("checkpoint.json"), &ck.to_json())?;
            let lines: Vec<String> = outcome
                .history
                .iter()
                .map(|m| serde_json::to_string(m).expect("metrics serialize"))
                .collect();
            write_atomic(&run_dir.join("metrics.jsonl"), lines.join("\n").as_bytes())?;
        }
        results.push(RunResult {
            seed: run_config.seed,
            best_epoch: outcome.best_epoch,
            epochs: outcome.history.len(),
            train: outcome.train,
            val: outcome.val,
            test,
        });
    }
    let acc = |f: fn(&RunResult) -> Option<f64>| results.iter().filter_map(f).collect::<Vec<f64>>();
    let test_acc = acc(|r| r.test.map(|t| t.accuracy));
    let report = RunReport {
        config: config.clone(),
        train_documents: corpus.train.len(),
        test_documents: corpus.test.len(),
        classes: corpus.classes,
        input_dim: corpus.input_dim,
        params: dims.param_count(),
        mean_entropy: corpus.mean_entropy,
        feature_digest: corpus.feature_digest.clone(),
        train_acc: Stat::of(&acc(|r| Some(r.train.accuracy))),
        val_acc: Stat::of(&acc(|r| Some(r.val.accuracy))),
        test_acc: (!test_acc.is_empty()).then(|| Stat::of(&test_acc)),
        runs: results,
        wall_clock_secs: start.elapsed().as_secs_f64(),
    };
    if let Some(dir) = out_dir {
        write_report(dir, &report)?;
    }
    Ok(report)
}

fn write_report<T: Serialize>(dir: &Path, report: &T) -> Result<()> {
    let bytes = serde_json::to_vec_pretty(report).expect("report serializes");
    write_atomic(&dir.join(REPORT_FILE), &bytes)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitEval {
    pub split: Split,
    pub metrics: EvalMetrics,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub checkpoint: PathBuf,
    pub params: usize,
    pub splits: Vec<SplitEval>,
}

impl EvalReport {
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("split\tcount\taccuracy\tloss\n");
        for s in &self.splits {
            let split = serde_json::to_value(s.split).expect("split serializes");
            out += &format!(
                "{}\t{}\t{}\t{}\n",
                split.as_str().unwrap_or_default(),
                s.metrics.count,
                s.metrics.accuracy,
                s.metrics.loss
            );
        }
        out
    }
}

/// Scores a saved model on the corpus. Features are rebuilt with the
/// checkpoint's position slots and seed, overriding those in `paths`.
pub fn evaluate_checkpoint(checkpoint: &Path, paths: &CorpusPaths, split: Option<Split>) -> Result<EvalReport> {
    if !checkpoint.exists() {
        return Err(Error::MissingArtifact {
            stage: "train",
            path: checkpoint.to_path_buf(),
        });
    }
    let ck = Checkpoint::read(checkpoint)?;
    let model = ck.to_model()?;
    let paths = CorpusPaths {
        position_slots: ck.position_slots,
        feature_seed: ck.feature_seed,
        ..paths.clone()
    };
    let corpus = Corpus::load(&paths)?;
    if corpus.input_dim != ck.dims.input_dim || corpus.height != ck.dims.height {
        return Err(Error::Shape(format!(
            "corpus has feature width {} and tree height {}; checkpoint expects {} and {}",
            corpus.input_dim, corpus.height, ck.dims.input_dim, ck.dims.height
        )));
    }
    if corpus.classes > ck.dims.classes {
        return Err(Error::Shape(format!(
            "corpus has label {} but the model knows {} classes",
            corpus.classes - 1,
            ck.dims.classes
        )));
    }
    let mut splits = Vec::new();
    for (s, examples) in [(Split::Train, &corpus.train), (Split::Test, &corpus.test)] {
        if split.is_some_and(|want| want != s) || examples.is_empty() {
            continue;
        }
        splits.push(SplitEval {
            split: s,
            metrics: evaluate(&model, examples)?,
        });
    }
    Ok(EvalReport {
        checkpoint: checkpoint.to_path_buf(),
        params: ck.dims.param_count(),
        splits,
    })
}

/// Shared settings for experiments that build their own trees.
#[derive(Clone, Debug)]
pub struct Experiment {
    /// Graph manifest.
    pub graphs: PathBuf,
    pub embeddings: PathBuf,
    pub position_slots: usize,
    pub feature_seed: u64,
    pub out_dir: PathBuf,
    pub workers: usize,
    pub runs: usize,
    pub config: TrainConfig,
}

impl Experiment {
    fn trees(&self, dir: &str, height: usize, method: TreeMethod, seed: u64) -> Result<CorpusPaths> {
        let trees = self.out_dir.join(dir);
        let summary = build_trees(
            &self.graphs,
            height,
            method,
            seed,
            self.config.allow_any_height,
            &trees,
            self.workers,
        )?;
        if let Some(f) = summary.failures.first() {
            return Err(Error::validation(&f.doc_id, f.message.clone()));
        }
        Ok(CorpusPaths {
            graphs: self.graphs.clone(),
            trees,
            embeddings: self.embeddings.clone(),
            position_slots: self.position_slots,
            feature_seed: self.feature_seed,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeightResult {
    pub height: usize,
    pub report: RunReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub method: TreeMethod,
    pub heights: Vec<HeightResult>,
    pub wall_clock_secs: f64,
}

impl SweepReport {
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("height\tparams\tmean_entropy\ttrain_acc\tval_acc\ttest_acc\ttest_std\n");
        for h in &self.heights {
            let r = &h.report;
            let test = r.test_acc.map_or("-".to_string(), |s| s.mean.to_string());
            let std = r.test_acc.and_then(|s| s.std).map_or("-".to_string(), |s| s.to_string());
            out += &format!(
                "{}\t{}\t{}\t{}\t{}\t{test}\t{std}\n",
                h.height, r.params, r.mean_entropy, r.train_acc.mean, r.val_acc.mean
            );
        }
        out
    }
}

/// Parses `start:end:step` (inclusive), `a,b,c`, or a single height.
pub fn parse_heights(text: &str) -> Result<Vec<usize>> {
    let bad = || Error::Config(format!("cannot read heights from `{text}`; use start:end:step or a,b,c"));
    let num = |s: &str| s.trim().parse::<usize>().map_err(|_| bad());
    let heights: Vec<usize> = if text.contains(':') {
        let parts: Vec<&str> = text.split(':').collect();
        let (start, end, step) = match parts.as_slice() {
            [a, b] => (num(a)?, num(b)?, 1),
            [a, b, c] => (num(a)?, num(b)?, num(c)?),
            _ => return Err(bad()),
        };
        if step == 0 || start > end {
            return Err(bad());
        }
        (start..=end).step_by(step).collect()
    } else {
        text.split(',').map(num).collect::<Result<_>>()?
    };
    if heights.is_empty() {
        return Err(bad());
    }
    Ok(heights)
}

/// Builds trees and trains at every height in `heights`. Trees land in
/// `out_dir/trees-h<h>` and runs in `out_dir/h<h>`.
pub fn sweep(exp: &Experiment, heights: &[usize], method: TreeMethod, tree_seed: u64) -> Result<SweepReport> {
    let start = Instant::now();
    let mut results = Vec::new();
    for &height in heights {
        let paths = exp.trees(&format!("trees-h{height}"), height, method, tree_seed)?;
        let corpus = Corpus::load(&paths)?;
        let config = TrainConfig {
            height,
            ..exp.config.clone()
        };
        let report = train_runs(&corpus, &config, exp.runs, &paths, Some(&exp.out_dir.join(format!("h{height}"))))?;
        results.push(HeightResult { height, report });
    }
    let report = SweepReport {
        method,
        heights: results,
        wall_clock_secs: start.elapsed().as_secs_f64(),
    };
    write_report(&exp.out_dir, &report)?;
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub height: usize,
    pub feature_digest: String,
    pub sema_mean_entropy: f64,
    pub random_mean_entropy: f64,
    pub sema: RunReport,
    pub random: RunReport,
    pub wall_clock_secs: f64,
}

impl AblationReport {
    pub fn to_tsv(&self) -> String {
        let row = |name: &str, r: &RunReport, entropy: f64| {
            let std = r.test_acc.unwrap_or(r.val_acc).std.map_or("-".to_string(), |s| s.to_string());
            format!("{name}\t{entropy}\t{}\t{}\t{std}\n", r.train_acc.mean, r.headline())
        };
        String::from("trees\tmean_entropy\ttrain_acc\theld_out_acc\theld_out_std\n")
            + &row("sema", &self.sema, self.sema_mean_entropy)
            + &row("random", &self.random, self.random_mean_entropy)
    }
}

/// Trains the same configuration on entropy-minimizing trees and on random
/// trees of the same height, with identical leaf features in both arms.
pub fn ablate_rt(exp: &Experiment, tree_seed: u64) -> Result<AblationReport> {
    let start = Instant::now();
    let height = exp.config.height;
    let sema_paths = exp.trees("trees-sema", height, TreeMethod::Sema, tree_seed)?;
    let random_paths = exp.trees("trees-random", height, TreeMethod::Random, tree_seed)?;
    let sema_corpus = Corpus::load(&sema_paths)?;
    let random_corpus = Corpus::load(&random_paths)?;
    if sema_corpus.feature_digest != random_corpus.feature_digest {
        return Err(Error::Structural(format!(
            "feature matrices differ between arms ({} vs {})",
            sema_corpus.feature_digest, random_corpus.feature_digest
        )));
    }
    let sema = train_runs(&sema_corpus, &exp.config, exp.runs, &sema_paths, Some(&exp.out_dir.join("sema")))?;
    let random = train_runs(&random_corpus, &exp.config, exp.runs, &random_paths, Some(&exp.out_dir.join("random")))?;
    let report = AblationReport {
        height,
        feature_digest: sema_corpus.feature_digest.clone(),
        sema_mean_entropy: sema_corpus.mean_entropy,
        random_mean_entropy: random_corpus.mean_entropy,
        sema,
        random,
        wall_clock_secs: start.elapsed().as_secs_f64(),
    };
    write_report(&exp.out_dir, &report)?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn height_specs() {
        assert_eq!(parse_heights("2:12:2").unwrap(), vec![2, 4, 6, 8, 10, 12]);
        assert_eq!(parse_heights("3:5").unwrap(), vec![3, 4, 5]);
        assert_eq!(parse_heights("2,7").unwrap(), vec![2, 7]);
        assert_eq!(parse_heights("4").unwrap(), vec![4]);
        assert!(parse_heights("5:2").is_err());
        assert!(parse_heights("2:4:0").is_err());
        assert!(parse_heights("a").is_err());
    }
}
