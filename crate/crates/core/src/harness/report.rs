use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::entropy::random_tree;
use crate::error::{Error, Result};
use crate::graphio::{build_cooccurrence_graph, Token};
use crate::learner::{forward_cost, Checkpoint, ModelDims, Pool};

/// Forward-pass arithmetic for one document of a given length.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeCost {
    pub leaves: usize,
    pub nodes: usize,
    pub mul_adds: u64,
    pub adds: u64,
    /// `2 * mul_adds + adds`.
    pub flops: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelReport {
    pub dims: ModelDims,
    pub pool: Pool,
    pub params: usize,
    pub per_document: Vec<TreeCost>,
}

impl ModelReport {
    pub fn to_tsv(&self) -> String {
        let mut out = format!("params\t{}\n", self.params);
        out += "leaves\tnodes\tmul_adds\tadds\tflops\n";
        for c in &self.per_document {
            out += &format!("{}\t{}\t{}\t{}\t{}\n", c.leaves, c.nodes, c.mul_adds, c.adds, c.flops);
        }
        out
    }
}

/// Cost of a document with `leaves` tokens. The tree is a seeded random tree
/// of the model's height over a path graph, whose node count is roughly
/// `2 * leaves` whatever the graph.
pub fn tree_cost(dims: &ModelDims, leaves: usize) -> Result<TreeCost> {
    if leaves == 0 {
        return Err(Error::Config("tree size must be at least 1 leaf".into()));
    }
    let tokens = (0..leaves).map(|i| Token::new(i, "w", 0)).collect();
    let g = build_cooccurrence_graph(tokens, 2, "size", 0)?;
    let tree = random_tree(&g, dims.height.max(2), 0)?;
    let cost = forward_cost(dims, &tree);
    Ok(TreeCost {
        leaves,
        nodes: tree.len(),
        mul_adds: cost.mul_adds,
        adds: cost.adds,
        flops: 2 * cost.mul_adds + cost.adds,
    })
}

/// Parameter count of a saved model and its forward cost at each size.
pub fn model_report(checkpoint: &Path, sizes: &[usize]) -> Result<ModelReport> {
    if !checkpoint.exists() {
        return Err(Error::MissingArtifact {
            stage: "train",
            path: checkpoint.to_path_buf(),
        });
    }
    let ck = Checkpoint::read(checkpoint)?;
    let model = ck.to_model()?;
    let per_document = sizes
        .iter()
        .map(|&n| tree_cost(&model.dims, n))
        .collect::<Result<_>>()?;
    Ok(ModelReport {
        dims: model.dims,
        pool: model.pool,
        params: crate::learner::count_params(&model),
        per_document,
    })
}
