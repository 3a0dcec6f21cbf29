use std::collections::HashSet;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{doc_seed, file_name, with_workers, GRAPH_MANIFEST};
use crate::entropy::{random_tree, sema, structural_entropy, TreeFile};
use crate::error::{Error, Result};
use crate::graphio::{read_graph, read_manifest, serialize_graph, write_atomic, write_manifest, ManifestEntry, ParsedDocument};
use crate::learner::HEIGHT_RANGE;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum GraphMode {
    Dependency,
    Cooccurrence,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum TreeMethod {
    Sema,
    Random,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BuildFailure {
    pub doc_id: String,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphSummary {
    pub written: usize,
    pub nodes: usize,
    pub edges: usize,
    pub manifest: PathBuf,
    pub failures: Vec<BuildFailure>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeSummary {
    pub written: usize,
    pub height: usize,
    pub method: TreeMethod,
    pub mean_entropy: f64,
    pub failures: Vec<BuildFailure>,
}

pub(crate) fn read_stage_manifest(path: &Path, stage: &'static str) -> Result<Vec<ManifestEntry>> {
    if !path.exists() {
        return Err(Error::MissingArtifact {
            stage,
            path: path.to_path_buf(),
        });
    }
    read_manifest(path)
}

/// Output file per entry; a later entry whose name collides with an earlier
/// one fails instead of overwriting it.
fn plan_outputs(entries: &[ManifestEntry], dir: &Path) -> Vec<Result<PathBuf>> {
    let mut seen = HashSet::new();
    entries
        .iter()
        .map(|e| {
            let name = file_name(&e.doc_id)?;
            if !seen.insert(name.clone()) {
                return Err(Error::validation(&e.doc_id, format!("output file `{name}` already used by another document")));
            }
            Ok(dir.join(name))
        })
        .collect()
}

/// Turns each parsed document in `manifest` into a graph file under
/// `out_dir/graphs/` and writes `out_dir/manifest.jsonl` for the documents
/// that succeeded. Documents that fail are listed and skipped.
pub fn build_graphs(
    manifest: &Path,
    mode: GraphMode,
    window: usize,
    out_dir: &Path,
    workers: usize,
) -> Result<GraphSummary> {
    let entries = read_stage_manifest(manifest, "preprocess")?;
    let graph_dir = out_dir.join("graphs");
    let outputs = plan_outputs(&entries, &graph_dir);

    let results: Vec<Result<(ManifestEntry, usize, usize)>> = with_workers(workers, || {
        entries
            .par_iter()
            .zip(outputs)
            .map(|(entry, out)| {
                let out = out?;
                let doc = ParsedDocument::read(&entry.path)?;
                if doc.doc_id != entry.doc_id {
                    return Err(Error::validation(
                        &entry.doc_id,
                        format!("file {} holds document `{}`", entry.path.display(), doc.doc_id),
                    ));
                }
                let g = match mode {
                    GraphMode::Dependency => doc.to_dependency_graph()?,
                    GraphMode::Cooccurrence => doc.to_cooccurrence_graph(window)?,
                };
                write_atomic(&out, &serialize_graph(&g))?;
                let written = ManifestEntry {
                    doc_id: entry.doc_id.clone(),
                    split: entry.split,
                    path: out,
                };
                Ok((written, g.num_nodes(), g.num_edges()))
            })
            .collect()
    })?;

    let mut summary = GraphSummary {
        written: 0,
        nodes: 0,
        edges: 0,
        manifest: out_dir.join(GRAPH_MANIFEST),
        failures: Vec::new(),
    };
    let mut written = Vec::new();
    for (entry, result) in entries.iter().zip(results) {
        match result {
            Ok((e, nodes, edges)) => {
                summary.written += 1;
                summary.nodes += nodes;
                summary.edges += edges;
                written.push(e);
            }
            Err(err) => summary.failures.push(BuildFailure {
                doc_id: entry.doc_id.clone(),
                message: err.to_string(),
            }),
        }
    }
    write_manifest(&summary.manifest, &written)?;
    Ok(summary)
}

/// Builds one coding tree per graph in `graphs` (a graph manifest) and
/// writes it with its entropy to `out_dir/<doc_id>.json`.
///
/// Heights outside the usual 2..=12 range are refused unless
/// `allow_any_height` is set. Random trees draw a per-document seed from
/// `seed` and the document id, so output does not depend on corpus order.
pub fn build_trees(
    graphs: &Path,
    height: usize,
    method: TreeMethod,
    seed: u64,
    allow_any_height: bool,
    out_dir: &Path,
    workers: usize,
) -> Result<TreeSummary> {
    if !HEIGHT_RANGE.contains(&height) {
        log::warn!(
            "height {height} is outside {}..={}",
            HEIGHT_RANGE.start(),
            HEIGHT_RANGE.end()
        );
        if !allow_any_height {
            return Err(Error::Config(format!(
                "height {height} outside {}..={}; pass --allow-any-height to build anyway",
                HEIGHT_RANGE.start(),
                HEIGHT_RANGE.end()
            )));
        }
    }
    let entries = read_stage_manifest(graphs, "build-graphs")?;
    let outputs = plan_outputs(&entries, out_dir);

    let results: Vec<Result<f64>> = with_workers(workers, || {
        entries
            .par_iter()
            .zip(outputs)
            .map(|(entry, out)| {
                let out = out?;
                let g = read_graph(&entry.path)?;
                if g.doc_id() != entry.doc_id {
                    return Err(Error::validation(
                        &entry.doc_id,
                        format!("file {} holds document `{}`", entry.path.display(), g.doc_id()),
                    ));
                }
                let tree = match method {
                    TreeMethod::Sema => sema(&g, height)?,
                    TreeMethod::Random => random_tree(&g, height, doc_seed(seed, &entry.doc_id))?,
                };
                let entropy_bits = structural_entropy(&g, &tree)?.bits;
                let file = TreeFile {
                    doc_id: entry.doc_id.clone(),
                    tree,
                    entropy_bits,
                };
                write_atomic(&out, &file.to_json())?;
                Ok(entropy_bits)
            })
            .collect()
    })?;

    let mut entropies = Vec::new();
    let mut failures = Vec::new();
    for (entry, result) in entries.iter().zip(results) {
        match result {
            Ok(bits) => entropies.push(bits),
            Err(err) => failures.push(BuildFailure {
                doc_id: entry.doc_id.clone(),
                message: err.to_string(),
            }),
        }
    }
    let mean_entropy = if entropies.is_empty() {
        0.0
    } else {
        entropies.iter().sum::<f64>() / entropies.len() as f64
    };
    Ok(TreeSummary {
        written: entropies.len(),
        height,
        method,
        mean_entropy,
        failures,
    })
}
