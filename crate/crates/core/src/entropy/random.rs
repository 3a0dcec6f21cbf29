//! Random coding trees of a given height, the baseline against which
//! entropy-minimizing trees are compared.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{CodingTree, MIN_HEIGHT};
use crate::error::{Error, Result};
use crate::graphio::DocumentGraph;

/// At each level below the root the current nodes are shuffled and paired
/// off under fresh parents (an odd node out gets a parent of its own); the
/// root then adopts every node of level `h - 1`.
pub fn random_tree(g: &DocumentGraph, h: usize, seed: u64) -> Result<CodingTree> {
    if h < MIN_HEIGHT {
        return Err(Error::Config(format!("coding-tree height must be at least {MIN_HEIGHT}, got {h}")));
    }
    let n = g.num_nodes();
    if n == 0 {
        return Err(Error::validation(g.doc_id(), "empty graph"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut parents: Vec<Option<usize>> = vec![None; n];
    let mut levels = vec![0usize; n];
    let mut layer: Vec<usize> = (0..n).collect();
    for level in 1..h {
        layer.shuffle(&mut rng);
        let mut next = Vec::with_capacity(layer.len().div_ceil(2));
        for pair in layer.chunks(2) {
            let id = parents.len();
            parents.push(None);
            levels.push(level);
            for &c in pair {
                parents[c] = Some(id);
            }
            next.push(id);
        }
        layer = next;
    }
    let root = parents.len();
    parents.push(None);
    levels.push(h);
    for &c in &layer {
        parents[c] = Some(root);
    }
    let mut leaves: Vec<Option<usize>> = (0..n).map(Some).collect();
    leaves.resize(parents.len(), None);
    CodingTree::from_parts(&parents, levels, &leaves)
}
