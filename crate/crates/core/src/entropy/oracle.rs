//! Exhaustive minimum over height-2 coding trees, for verifying [`super::sema`]
//! on small graphs.

use super::{structural_entropy, CodingTree};
use crate::error::{Error, Result};
use crate::graphio::DocumentGraph;

/// Largest vertex count accepted by [`oracle_min_entropy`] (Bell(8) = 4140
/// partitions).
pub const ORACLE_MAX_VERTICES: usize = 8;

/// Enumerates every set partition of the vertices, builds the two-level tree
/// root -> block -> vertex for each, and returns the first tree (in
/// restricted-growth-string order) attaining the minimum entropy.
pub fn oracle_min_entropy(g: &DocumentGraph) -> Result<(CodingTree, f64)> {
    let n = g.num_nodes();
    if n > ORACLE_MAX_VERTICES {
        return Err(Error::Size(format!(
            "exhaustive search supports at most {ORACLE_MAX_VERTICES} vertices, got {n}"
        )));
    }
    let mut best: Option<(CodingTree, f64)> = None;
    let mut blocks = vec![0usize; n];
    loop {
        let tree = two_level_tree(&blocks)?;
        let bits = structural_entropy(g, &tree)?.bits;
        if best.as_ref().is_none_or(|(_, b)| bits < *b) {
            best = Some((tree, bits));
        }
        if !next_partition(&mut blocks) {
            break;
        }
    }
    Ok(best.expect("at least one partition exists"))
}

/// Advances a restricted growth string (a[0] = 0, a[i] <= 1 + max(a[..i])).
fn next_partition(a: &mut [usize]) -> bool {
    for i in (1..a.len()).rev() {
        let max_prefix = a[..i].iter().copied().max().unwrap_or(0);
        if a[i] <= max_prefix {
            a[i] += 1;
            a[i + 1..].fill(0);
            return true;
        }
    }
    false
}

fn two_level_tree(blocks: &[usize]) -> Result<CodingTree> {
    let n = blocks.len();
    let k = blocks.iter().copied().max().map_or(0, |b| b + 1);
    let root = n + k;
    let mut parents: Vec<Option<usize>> = blocks.iter().map(|&b| Some(n + b)).collect();
    parents.extend(std::iter::repeat_n(Some(root), k));
    parents.push(None);
    let mut leaves: Vec<Option<usize>> = (0..n).map(Some).collect();
    leaves.extend(std::iter::repeat_n(None, k + 1));
    let mut levels = vec![0; n];
    levels.extend(std::iter::repeat_n(1, k));
    levels.push(2);
    CodingTree::from_parts(&parents, levels, &leaves)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::entropy::tests::graph;

    fn count_partitions(n: usize) -> usize {
        let mut a = vec![0; n];
        let mut count = 1;
        while next_partition(&mut a) {
            count += 1;
        }
        count
    }

    #[test]
    fn enumerates_bell_numbers() {
        let bell = [1, 1, 2, 5, 15, 52, 203, 877, 4140];
        for (n, &b) in bell.iter().enumerate().skip(1) {
            assert_eq!(count_partitions(n), b, "n = {n}");
        }
    }

    #[test]
    fn k2_minimum_is_one_bit() {
        let (_, bits) = oracle_min_entropy(&graph(2, &[(0, 1)])).unwrap();
        assert!((bits - 1.0).abs() < 1e-12);
    }

    #[test]
    fn p3_minimum_groups_an_edge() {
        let (tree, bits) = oracle_min_entropy(&graph(3, &[(0, 1), (1, 2)])).unwrap();
        assert!((bits - 1.292_481_250_360_578).abs() < 1e-12);
        let h = tree.hierarchy();
        let sets: Vec<Vec<usize>> = h.node(h.root()).children.iter().map(|&c| h.leaf_set(c)).collect();
        assert!(sets.contains(&vec![0, 1]) || sets.contains(&vec![1, 2]), "{sets:?}");
    }

    #[test]
    fn c4_minimum_pairs_adjacent_vertices() {
        let g = graph(4, &[(0, 1), (1, 2), (2, 3), (0, 3)]);
        let (tree, bits) = oracle_min_entropy(&g).unwrap();
        let h = tree.hierarchy();
        let mut sets: Vec<Vec<usize>> = h.node(h.root()).children.iter().map(|&c| h.leaf_set(c)).collect();
        sets.sort();
        assert!(sets == vec![vec![0, 1], vec![2, 3]] || sets == vec![vec![0, 3], vec![1, 2]], "{sets:?}");
        // Both adjacent-pair partitions attain the same value: each block has
        // volume 4, cut 2; each vertex degree 2, cut 2.
        let expected = 2.0 * (-(2.0 / 8.0) * 0.5f64.log2()) + 4.0 * (-(2.0 / 8.0) * 0.5f64.log2());
        assert!((bits - expected).abs() < 1e-12, "{bits} vs {expected}");
    }

    #[test]
    fn refuses_large_graphs() {
        assert!(matches!(oracle_min_entropy(&graph(9, &[])), Err(Error::Size(_))));
    }
}
