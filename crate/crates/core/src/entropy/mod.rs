//! Structural entropy of a graph under a partitioning tree, and construction
//! of height-bounded coding trees that minimize it.
//!
//! For a graph with `m` edges and a tree whose leaves are its vertices, the
//! entropy (in bits) is
//!
//! ```text
//! H = - sum over non-root nodes a of  (g_a / 2m) * log2(V_a / V_parent(a))
//! ```
//!
//! where `V_a` is the total degree of the vertices under `a` and `g_a` the
//! number of edges with exactly one endpoint under `a`.

mod oracle;
mod random;
mod sema;
mod tree;

pub use oracle::{oracle_min_entropy, ORACLE_MAX_VERTICES};
pub use random::random_tree;
pub use sema::{sema, sema_traced, CompressStep, MergeStep, SemaTrace};
pub use tree::{CodingTree, Hierarchy, NodeId, TreeFile, TreeNode};

use crate::error::{Error, Result};
use crate::graphio::DocumentGraph;

/// Smallest coding-tree height accepted by the tree builders.
pub const MIN_HEIGHT: usize = 2;

/// One term of the entropy sum. Zero-cut nodes contribute nothing, which also
/// covers zero-volume subtrees of isolated vertices.
pub(crate) fn entropy_term(cut: f64, volume: f64, parent_volume: f64, two_m: f64) -> f64 {
    if cut == 0.0 {
        0.0
    } else {
        -(cut / two_m) * (volume / parent_volume).log2()
    }
}

/// Rounds to 12 decimal places and folds `-0.0` into `0.0` so that ties
/// compare equal under `total_cmp`.
pub(crate) fn tie_key(delta: f64) -> f64 {
    (delta * 1e12).round() / 1e12 + 0.0
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Entropy {
    pub bits: f64,
    /// Set when the graph has no edges; `bits` is then 0 by convention.
    pub no_edges: bool,
}

/// Degrees, edge count, and per-node volume and cut for one (graph, tree)
/// pair.
#[derive(Clone, Debug)]
pub struct EntropyContext {
    pub degrees: Vec<usize>,
    pub edge_count: usize,
    /// Indexed by tree node id.
    pub volume: Vec<usize>,
    /// Indexed by tree node id.
    pub cut: Vec<usize>,
}

impl EntropyContext {
    pub fn new(g: &DocumentGraph, tree: &Hierarchy) -> Result<Self> {
        let n = g.num_nodes();
        let leaf_of = tree.leaf_index(n)?;
        let degrees = g.degrees();
        let m = g.num_edges();
        let mut volume = vec![0usize; tree.len()];
        for v in tree.post_order() {
            let node = tree.node(v);
            volume[v] = match node.leaf_token {
                Some(t) => degrees[t],
                None => node.children.iter().map(|&c| volume[c]).sum(),
            };
        }
        // An edge is cut at every node on the two paths from its endpoints up
        // to (excluding) their lowest common ancestor.
        let depth = tree.depths();
        let mut cut = vec![0usize; tree.len()];
        for &(a, b) in g.edges() {
            let (mut x, mut y) = (leaf_of[a], leaf_of[b]);
            while x != y {
                if depth[x] >= depth[y] {
                    cut[x] += 1;
                    x = tree.node(x).parent.expect("non-root has a parent");
                } else {
                    cut[y] += 1;
                    y = tree.node(y).parent.expect("non-root has a parent");
                }
            }
        }
        assert_eq!(volume[tree.root()], 2 * m, "root volume must equal 2m");
        debug_assert!(leaf_of.iter().all(|&l| cut[l] == volume[l]));
        Ok(EntropyContext {
            degrees,
            edge_count: m,
            volume,
            cut,
        })
    }
}

/// Structural entropy of `g` under `tree`, in bits.
pub fn structural_entropy<T: AsRef<Hierarchy> + ?Sized>(g: &DocumentGraph, tree: &T) -> Result<Entropy> {
    let tree = tree.as_ref();
    let ctx = EntropyContext::new(g, tree)?;
    if ctx.edge_count == 0 {
        log::warn!("document `{}` has no edges; entropy defined as 0", g.doc_id());
        return Ok(Entropy {
            bits: 0.0,
            no_edges: true,
        });
    }
    let two_m = 2.0 * ctx.edge_count as f64;
    let bits = tree
        .nodes()
        .iter()
        .enumerate()
        .filter_map(|(id, node)| node.parent.map(|p| (id, p)))
        .map(|(id, p)| entropy_term(ctx.cut[id] as f64, ctx.volume[id] as f64, ctx.volume[p] as f64, two_m))
        .sum::<f64>();
    Ok(Entropy {
        bits,
        no_edges: false,
    })
}

/// Pads `tree` to a coding tree of exactly height `h` by inserting unary
/// pass-through nodes above leaves that sit less than `h` below the root.
/// Internal node `v` lands on level `h - depth(v)`. Inserted nodes take fresh
/// ids after the existing ones; an already aligned tree keeps its ids.
pub fn level_align(tree: &Hierarchy, h: usize) -> Result<CodingTree> {
    if h == 0 {
        return Err(Error::Config("coding-tree height must be at least 1".into()));
    }
    let height = tree.height();
    if height > h {
        return Err(Error::Structural(format!(
            "tree height {height} exceeds target {h}; compress it first"
        )));
    }
    let mut nodes: Vec<TreeNode> = tree.nodes().to_vec();
    let depth = tree.depths();
    let mut levels: Vec<usize> = depth.iter().map(|&d| h - d).collect();

    let chain = |nodes: &mut Vec<TreeNode>, levels: &mut Vec<usize>, leaf: NodeId, top_level: usize| {
        // Builds nodes at levels top_level..=1 above `leaf`; returns the top one.
        let mut below = leaf;
        for level in 1..=top_level {
            let id = nodes.len();
            nodes.push(TreeNode {
                parent: None,
                children: vec![below],
                leaf_token: None,
            });
            levels.push(level);
            nodes[below].parent = Some(id);
            below = id;
        }
        below
    };

    let mut root = tree.root();
    if tree.is_leaf(root) {
        let leaf = root;
        root = chain(&mut nodes, &mut levels, leaf, h);
        levels[leaf] = 0;
    } else {
        for v in 0..tree.len() {
            if !tree.is_leaf(v) || levels[v] == 0 {
                continue;
            }
            let parent = tree.node(v).parent.expect("leaf below root");
            let top_level = levels[v];
            let top = chain(&mut nodes, &mut levels, v, top_level);
            levels[v] = 0;
            nodes[top].parent = Some(parent);
            for c in nodes[parent].children.iter_mut() {
                if *c == v {
                    *c = top;
                }
            }
        }
    }
    // Same child order as a tree read back from its file.
    for node in &mut nodes {
        node.children.sort_unstable();
    }
    CodingTree::new(Hierarchy::from_nodes_unchecked(nodes, root), levels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graphio::Token;

    pub(crate) fn graph(n: usize, edges: &[(usize, usize)]) -> DocumentGraph {
        let tokens = (0..n).map(|i| Token::new(i, format!("w{i}"), 0)).collect();
        DocumentGraph::new("t", 0, tokens, edges.to_vec(), Vec::new()).unwrap()
    }

    /// Direct evaluation from leaf sets, independent of `EntropyContext`.
    fn entropy_by_sets(g: &DocumentGraph, t: &Hierarchy) -> f64 {
        let deg = g.degrees();
        let two_m = 2.0 * g.num_edges() as f64;
        let vol = |s: &[usize]| s.iter().map(|&v| deg[v]).sum::<usize>() as f64;
        let mut total = 0.0;
        for (id, node) in t.nodes().iter().enumerate() {
            let Some(p) = node.parent else { continue };
            let inside = t.leaf_set(id);
            let cut = g
                .edges()
                .iter()
                .filter(|(a, b)| inside.contains(a) != inside.contains(b))
                .count() as f64;
            if cut > 0.0 {
                total -= cut / two_m * (vol(&inside) / vol(&t.leaf_set(p))).log2();
            }
        }
        total
    }

    fn grouped_p3() -> Hierarchy {
        // 0,1 under node 3; 2 and 3 under root 4.
        Hierarchy::from_parents(
            &[Some(3), Some(3), Some(4), Some(4), None],
            &[Some(0), Some(1), Some(2), None, None],
        )
        .unwrap()
    }

    #[test]
    fn hand_values() {
        let k2 = graph(2, &[(0, 1)]);
        assert!((structural_entropy(&k2, &Hierarchy::flat(2)).unwrap().bits - 1.0).abs() < 1e-12);

        let p3 = graph(3, &[(0, 1), (1, 2)]);
        assert!((structural_entropy(&p3, &Hierarchy::flat(3)).unwrap().bits - 1.5).abs() < 1e-12);

        let grouped = structural_entropy(&p3, &grouped_p3()).unwrap().bits;
        let oracle = entropy_by_sets(&p3, &grouped_p3());
        assert!((grouped - oracle).abs() < 1e-12);
        assert!((grouped - 1.292_481_250_360_578).abs() < 1e-12, "{grouped}");
    }

    #[test]
    fn edgeless_graph_is_flagged() {
        let g = graph(3, &[]);
        let e = structural_entropy(&g, &Hierarchy::flat(3)).unwrap();
        assert_eq!(e.bits, 0.0);
        assert!(e.no_edges);
    }

    #[test]
    fn leaf_mismatch_is_structural_error() {
        let g = graph(3, &[(0, 1)]);
        assert!(matches!(
            structural_entropy(&g, &Hierarchy::flat(2)),
            Err(Error::Structural(_))
        ));
    }

    #[test]
    fn context_volumes_and_cuts() {
        let p3 = graph(3, &[(0, 1), (1, 2)]);
        let ctx = EntropyContext::new(&p3, &grouped_p3()).unwrap();
        assert_eq!(ctx.volume, vec![1, 2, 1, 3, 4]);
        assert_eq!(ctx.cut, vec![1, 2, 1, 1, 0]);
    }

    #[test]
    fn align_flat_tree() {
        let t = level_align(&Hierarchy::flat(2), 3).unwrap();
        assert_eq!(t.height(), 3);
        assert_eq!(t.len(), 3 + 2 * 2);
        for leaf in 0..2 {
            let p = t.hierarchy().node(leaf).parent.unwrap();
            assert_eq!(t.hierarchy().node(p).children.len(), 1);
            let gp = t.hierarchy().node(p).parent.unwrap();
            assert_eq!(t.hierarchy().node(gp).children.len(), 1);
            assert_eq!(t.hierarchy().node(gp).parent, Some(t.root()));
        }
    }

    #[test]
    fn align_is_identity_on_aligned_tree() {
        let once = level_align(&Hierarchy::flat(4), 2).unwrap();
        let twice = level_align(once.hierarchy(), 2).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn align_rejects_tall_tree() {
        assert!(level_align(&grouped_p3(), 1).is_err());
    }

    #[test]
    fn align_single_leaf() {
        let leaf = Hierarchy::from_parents(&[None], &[Some(0)]).unwrap();
        let t = level_align(&leaf, 2).unwrap();
        assert_eq!(t.len(), 3);
        assert_eq!(t.level(0), 0);
        assert_eq!(t.level(t.root()), 2);
    }

    #[test]
    fn align_preserves_entropy() {
        let p3 = graph(3, &[(0, 1), (1, 2)]);
        let before = structural_entropy(&p3, &grouped_p3()).unwrap().bits;
        let aligned = level_align(&grouped_p3(), 5).unwrap();
        let after = structural_entropy(&p3, &aligned).unwrap().bits;
        assert!((before - after).abs() <= 1e-12);
    }
}
