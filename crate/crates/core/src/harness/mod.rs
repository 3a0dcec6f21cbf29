//! Stage-file pipeline behind the command-line tool.
//!
//! Each stage reads what the previous one wrote to disk: parsed documents
//! become graph files, graphs become tree files, and trees plus embeddings
//! feed training, evaluation, sweeps and ablations.

mod build;
mod report;
mod run;

pub use build::{build_graphs, build_trees, BuildFailure, GraphMode, GraphSummary, TreeMethod, TreeSummary};
pub use report::{model_report, tree_cost, ModelReport, TreeCost};
pub use run::{
    ablate_rt, evaluate_checkpoint, parse_heights, sweep, train_runs, AblationReport, Corpus, CorpusPaths, EvalReport,
    Experiment, HeightResult, RunReport, RunResult, SplitEval, SweepReport,
};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Manifest written next to the per-document graph files.
pub const GRAPH_MANIFEST: &str = "manifest.jsonl";
pub const REPORT_FILE: &str = "report.json";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    #[default]
    Json,
    Tsv,
}

/// Mean over runs; the sample standard deviation only when there are two or
/// more of them.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub std: Option<f64>,
    pub n: usize,
}

impl Stat {
    pub fn of(xs: &[f64]) -> Self {
        let n = xs.len();
        let mean = if n == 0 { 0.0 } else { xs.iter().sum::<f64>() / n as f64 };
        let std = (n >= 2).then(|| {
            let ss: f64 = xs.iter().map(|x| (x - mean).powi(2)).sum();
            (ss / (n - 1) as f64).sqrt()
        });
        Stat { mean, std, n }
    }
}

/// File name for a document. Characters outside `[A-Za-z0-9._-]` become `_`.
pub(crate) fn file_name(doc_id: &str) -> Result<String> {
    if doc_id.is_empty() || doc_id == "." || doc_id == ".." {
        return Err(Error::validation(doc_id, "document id cannot be used as a file name"));
    }
    let stem: String = doc_id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || "._-".contains(c) { c } else { '_' })
        .collect();
    Ok(format!("{stem}.json"))
}

/// Per-document seed that does not depend on corpus order.
pub(crate) fn doc_seed(seed: u64, doc_id: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(doc_id.as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

/// Runs `f` on a pool of `workers` threads (0 picks the core count).
pub(crate) fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot start {workers} workers: {e}")))?;
    Ok(pool.install(f))
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stat_std_needs_two_runs() {
        assert_eq!(Stat::of(&[0.5]).std, None);
        let s = Stat::of(&[1.0, 2.0, 3.0]);
        assert_eq!(s.mean, 2.0);
        assert_eq!(s.std, Some(1.0));
    }

    #[test]
    fn file_names_are_sanitized() {
        assert_eq!(file_name("mr/train 1").unwrap(), "mr_train_1.json");
        assert!(file_name("").is_err());
        assert!(file_name("..").is_err());
    }

    #[test]
    fn doc_seed_depends_on_both_inputs() {
        assert_eq!(doc_seed(1, "a"), doc_seed(1, "a"));
        assert_ne!(doc_seed(1, "a"), doc_seed(2, "a"));
        assert_ne!(doc_seed(1, "a"), doc_seed(1, "b"));
    }
}
