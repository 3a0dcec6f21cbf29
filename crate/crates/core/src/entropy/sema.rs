//! Greedy structural-entropy minimization.
//!
//! Phase one starts from the flat tree and repeatedly merges the pair of
//! edge-connected top-level subtrees whose combination lowers the entropy
//! the most, until one subtree remains; the result is a binary tree. Phase
//! two removes internal nodes (re-attaching their children to the
//! grandparent) in order of least entropy increase until the height is at
//! most `h`. The tree is then level-aligned to exactly `h`.
//!
//! Ties are broken on `(delta rounded to 1e-12, smaller id, larger id)`.

use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeMap, BinaryHeap};

use super::{entropy_term, level_align, structural_entropy, tie_key, CodingTree, Hierarchy, NodeId, TreeNode, MIN_HEIGHT};
use crate::error::{Error, Result};
use crate::graphio::DocumentGraph;

/// One merge of two top-level subtrees under a new node.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MergeStep {
    pub left: NodeId,
    pub right: NodeId,
    pub merged: NodeId,
    /// Entropy after the merge minus entropy before it.
    pub delta: f64,
}

/// Removal of `child`, whose children move up to `parent`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CompressStep {
    pub parent: NodeId,
    pub child: NodeId,
    pub delta: f64,
}

/// Full record of a [`sema`] run. Step node ids refer to the working ids:
/// vertices keep their token id and the `k`-th created node gets id `n + k`.
/// The final tree is renumbered densely (leaves first, then surviving
/// internal nodes in creation order, then alignment padding).
#[derive(Clone, Debug)]
pub struct SemaTrace {
    pub merges: Vec<MergeStep>,
    pub compressions: Vec<CompressStep>,
    /// Tree after compression, before level alignment.
    pub compressed: Hierarchy,
    pub tree: CodingTree,
    pub entropy_bits: f64,
}

/// Builds a height-`h` coding tree for `g` by greedy entropy minimization.
pub fn sema(g: &DocumentGraph, h: usize) -> Result<CodingTree> {
    sema_traced(g, h).map(|t| t.tree)
}

#[derive(Clone, Copy, Debug)]
struct Candidate {
    key: f64,
    lo: NodeId,
    hi: NodeId,
    delta: f64,
}

impl Candidate {
    fn new(a: NodeId, b: NodeId, delta: f64) -> Self {
        Candidate {
            key: tie_key(delta),
            lo: a.min(b),
            hi: a.max(b),
            delta,
        }
    }
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Candidate {}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.key
            .total_cmp(&other.key)
            .then(self.lo.cmp(&other.lo))
            .then(self.hi.cmp(&other.hi))
    }
}

/// Working tree. Volumes and cuts are exact integers.
struct Forest {
    parent: Vec<Option<NodeId>>,
    children: Vec<Vec<NodeId>>,
    volume: Vec<u64>,
    cut: Vec<u64>,
    alive: Vec<bool>,
    leaves: usize,
    two_m: f64,
}

impl Forest {
    fn new(degrees: &[usize], m: usize) -> Self {
        let n = degrees.len();
        Forest {
            parent: vec![None; n],
            children: vec![Vec::new(); n],
            volume: degrees.iter().map(|&d| d as u64).collect(),
            cut: degrees.iter().map(|&d| d as u64).collect(),
            alive: vec![true; n],
            leaves: n,
            two_m: 2.0 * m as f64,
        }
    }

    fn term(&self, v: NodeId, parent_volume: u64) -> f64 {
        entropy_term(self.cut[v] as f64, self.volume[v] as f64, parent_volume as f64, self.two_m)
    }

    /// Entropy change of joining top-level subtrees `a` and `b` (sharing
    /// `links` edges) under a new node. The top level hangs off a root of
    /// volume 2m.
    fn merge_delta(&self, a: NodeId, b: NodeId, links: u64) -> f64 {
        let root_vol = self.two_m as u64;
        let vol = self.volume[a] + self.volume[b];
        let cut = self.cut[a] + self.cut[b] - 2 * links;
        let before = self.term(a, root_vol) + self.term(b, root_vol);
        let after = entropy_term(cut as f64, vol as f64, root_vol as f64, self.two_m)
            + self.term(a, vol)
            + self.term(b, vol);
        after - before
    }

    fn merge(&mut self, a: NodeId, b: NodeId, links: u64) -> NodeId {
        let id = self.parent.len();
        self.parent.push(None);
        self.children.push(vec![a, b]);
        self.volume.push(self.volume[a] + self.volume[b]);
        self.cut.push(self.cut[a] + self.cut[b] - 2 * links);
        self.alive.push(true);
        self.parent[a] = Some(id);
        self.parent[b] = Some(id);
        id
    }

    /// Entropy change of deleting internal node `c` and attaching its
    /// children to its parent.
    fn compress_delta(&self, c: NodeId) -> f64 {
        let p = self.parent[c].expect("compressed node has a parent");
        let vp = self.volume[p];
        let vc = self.volume[c];
        let before = self.term(c, vp) + self.children[c].iter().map(|&k| self.term(k, vc)).sum::<f64>();
        let after: f64 = self.children[c].iter().map(|&k| self.term(k, vp)).sum();
        after - before
    }

    fn compress(&mut self, c: NodeId) -> NodeId {
        let p = self.parent[c].expect("compressed node has a parent");
        let moved = std::mem::take(&mut self.children[c]);
        for &k in &moved {
            self.parent[k] = Some(p);
        }
        let siblings = &mut self.children[p];
        siblings.retain(|&x| x != c);
        siblings.extend(moved);
        siblings.sort_unstable();
        self.alive[c] = false;
        self.parent[c] = None;
        p
    }

    fn height(&self, root: NodeId) -> usize {
        let mut best = 0;
        let mut stack = vec![(root, 0)];
        while let Some((v, d)) = stack.pop() {
            if self.children[v].is_empty() {
                best = best.max(d);
            }
            stack.extend(self.children[v].iter().map(|&c| (c, d + 1)));
        }
        best
    }

    /// Dense renumbering: leaves keep ids, live internal nodes follow in
    /// creation order.
    fn to_hierarchy(&self, root: NodeId) -> Hierarchy {
        let mut new_id = vec![usize::MAX; self.parent.len()];
        let mut next = 0;
        for (old, &alive) in self.alive.iter().enumerate() {
            if alive {
                new_id[old] = next;
                next += 1;
            }
        }
        let mut nodes = Vec::with_capacity(next);
        for old in (0..self.parent.len()).filter(|&v| self.alive[v]) {
            let mut children: Vec<NodeId> = self.children[old].iter().map(|&c| new_id[c]).collect();
            children.sort_unstable();
            nodes.push(TreeNode {
                parent: self.parent[old].map(|p| new_id[p]),
                children,
                leaf_token: (old < self.leaves).then_some(old),
            });
        }
        Hierarchy::from_nodes_unchecked(nodes, new_id[root])
    }
}

/// [`sema`] with the merge and compression steps recorded.
pub fn sema_traced(g: &DocumentGraph, h: usize) -> Result<SemaTrace> {
    if h < MIN_HEIGHT {
        return Err(Error::Config(format!("coding-tree height must be at least {MIN_HEIGHT}, got {h}")));
    }
    let n = g.num_nodes();
    if n == 0 {
        return Err(Error::validation(g.doc_id(), "empty graph"));
    }
    let m = g.num_edges();
    let degrees = g.degrees();
    let mut forest = Forest::new(&degrees, m);
    let mut merges = Vec::new();
    let mut compressions = Vec::new();

    let root = if n == 1 {
        0
    } else if m == 0 {
        let root = forest.parent.len();
        forest.parent.push(None);
        forest.children.push((0..n).collect());
        forest.volume.push(0);
        forest.cut.push(0);
        forest.alive.push(true);
        for v in 0..n {
            forest.parent[v] = Some(root);
        }
        root
    } else {
        let root = merge_phase(g, &mut forest, &mut merges);
        // Isolated vertices carry no volume or cut; they hang off the root.
        for v in (0..n).filter(|&v| degrees[v] == 0) {
            forest.parent[v] = Some(root);
            forest.children[root].push(v);
        }
        forest.children[root].sort_unstable();
        compress_phase(&mut forest, root, h, &mut compressions);
        root
    };

    let compressed = forest.to_hierarchy(root);
    let tree = level_align(&compressed, h)?;
    let entropy_bits = structural_entropy(g, &tree)?.bits;
    Ok(SemaTrace {
        merges,
        compressions,
        compressed,
        tree,
        entropy_bits,
    })
}

/// Merges all non-isolated vertices into one binary tree and returns its root.
fn merge_phase(g: &DocumentGraph, forest: &mut Forest, merges: &mut Vec<MergeStep>) -> NodeId {
    let n = g.num_nodes();
    // Edge multiplicities between top-level subtrees.
    let mut links: Vec<BTreeMap<NodeId, u64>> = vec![BTreeMap::new(); n];
    for &(a, b) in g.edges() {
        links[a].insert(b, 1);
        links[b].insert(a, 1);
    }
    let mut heap = BinaryHeap::new();
    for &(a, b) in g.edges() {
        heap.push(Reverse(Candidate::new(a, b, forest.merge_delta(a, b, 1))));
    }
    let mut merged = vec![false; n];
    let mut unmerged = (0..n).filter(|&v| forest.volume[v] > 0).count();

    while unmerged > 1 {
        let Some(Reverse(cand)) = heap.pop() else { break };
        if merged[cand.lo] || merged[cand.hi] {
            continue;
        }
        let (a, b) = (cand.lo, cand.hi);
        let shared = links[a][&b];
        let id = forest.merge(a, b, shared);
        merged[a] = true;
        merged[b] = true;
        merged.push(false);
        merges.push(MergeStep {
            left: a,
            right: b,
            merged: id,
            delta: cand.delta,
        });

        let mut joined = std::mem::take(&mut links[a]);
        for (k, w) in std::mem::take(&mut links[b]) {
            *joined.entry(k).or_insert(0) += w;
        }
        joined.remove(&a);
        joined.remove(&b);
        for (&k, &w) in &joined {
            let nb = &mut links[k];
            nb.remove(&a);
            nb.remove(&b);
            nb.insert(id, w);
            heap.push(Reverse(Candidate::new(id, k, forest.merge_delta(id, k, w))));
        }
        links.push(joined);
        unmerged -= 1;
    }

    // Disconnected graph: join the remaining components, smallest combined
    // volume first.
    let mut tops: Vec<NodeId> = (0..forest.parent.len())
        .filter(|&v| !merged[v] && forest.volume[v] > 0)
        .collect();
    while tops.len() > 1 {
        tops.sort_by_key(|&v| (forest.volume[v], v));
        let (a, b) = (tops[0], tops[1]);
        let delta = forest.merge_delta(a, b, 0);
        let id = forest.merge(a, b, 0);
        merges.push(MergeStep {
            left: a.min(b),
            right: a.max(b),
            merged: id,
            delta,
        });
        tops.drain(..2);
        tops.push(id);
    }
    tops[0]
}

fn compress_phase(forest: &mut Forest, root: NodeId, h: usize, steps: &mut Vec<CompressStep>) {
    while forest.height(root) > h {
        let best = (forest.leaves..forest.parent.len())
            .filter(|&c| forest.alive[c] && c != root)
            .map(|c| {
                let p = forest.parent[c].expect("non-root node has a parent");
                Candidate::new(p, c, forest.compress_delta(c))
            })
            .min()
            .expect("a tree taller than h has a non-root internal node");
        let child = if forest.parent[best.lo] == Some(best.hi) { best.lo } else { best.hi };
        let parent = forest.compress(child);
        steps.push(CompressStep {
            parent,
            child,
            delta: best.delta,
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::entropy::tests::graph;

    #[test]
    fn k2_gives_flat_tree() {
        let g = graph(2, &[(0, 1)]);
        let t = sema_traced(&g, 2).unwrap();
        assert!((t.entropy_bits - 1.0).abs() < 1e-12);
        assert_eq!(t.tree.height(), 2);
    }

    #[test]
    fn p3_first_merge() {
        let g = graph(3, &[(0, 1), (1, 2)]);
        let t = sema_traced(&g, 2).unwrap();
        let first = t.merges[0];
        assert_eq!((first.left, first.right), (0, 1));
        assert!((first.delta - 0.5 * (0.75f64).log2()).abs() < 1e-12);
        assert!((t.entropy_bits - 1.292_481_250_360_578).abs() < 1e-9);
        assert!(t.compressions.is_empty());
    }

    #[test]
    fn height_below_two_rejected() {
        let g = graph(2, &[(0, 1)]);
        assert!(matches!(sema(&g, 1), Err(Error::Config(_))));
    }

    #[test]
    fn single_vertex_is_unary_chain() {
        let g = graph(1, &[]);
        let t = sema(&g, 4).unwrap();
        assert_eq!(t.len(), 5);
        assert_eq!(t.height(), 4);
    }

    #[test]
    fn isolated_vertices_and_components() {
        // Two triangles plus two isolated vertices.
        let g = graph(8, &[(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5)]);
        let t = sema_traced(&g, 3).unwrap();
        assert_eq!(t.tree.hierarchy().leaf_index(8).unwrap().len(), 8);
        assert_eq!(t.tree.height(), 3);
        let root = t.compressed.root();
        assert!(t.compressed.node(root).children.contains(&6));
        assert!(t.compressed.node(root).children.contains(&7));
    }

    #[test]
    fn edgeless_graph() {
        let g = graph(3, &[]);
        let t = sema_traced(&g, 2).unwrap();
        assert_eq!(t.entropy_bits, 0.0);
        assert_eq!(t.tree.height(), 2);
    }

    #[test]
    fn compression_reaches_target_height() {
        let edges: Vec<(usize, usize)> = (0..15).map(|i| (i, i + 1)).collect();
        let g = graph(16, &edges);
        for h in 2..6 {
            let t = sema_traced(&g, h).unwrap();
            assert!(t.compressed.height() <= h);
            assert_eq!(t.tree.height(), h);
            for step in &t.compressions {
                assert!(step.delta >= -1e-12, "compression lowered entropy: {step:?}");
            }
        }
    }
}
