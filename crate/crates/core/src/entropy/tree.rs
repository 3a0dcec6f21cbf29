use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type NodeId = usize;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TreeNode {
    pub parent: Option<NodeId>,
    pub children: Vec<NodeId>,
    /// Graph vertex represented by this node; set on leaves only.
    pub leaf_token: Option<usize>,
}

/// A rooted tree whose leaves are graph vertices, with no constraint on leaf
/// depth. This is the general partitioning tree that entropy is defined on;
/// [`CodingTree`] is the level-aligned form consumed by the learner.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Hierarchy {
    nodes: Vec<TreeNode>,
    root: NodeId,
}

impl Hierarchy {
    /// Builds a hierarchy from parent pointers. Children lists are sorted by id.
    pub fn from_parents(parents: &[Option<NodeId>], leaf_tokens: &[Option<usize>]) -> Result<Self> {
        if parents.len() != leaf_tokens.len() {
            return Err(Error::Structural(format!(
                "{} parent entries but {} leaf entries",
                parents.len(),
                leaf_tokens.len()
            )));
        }
        if parents.is_empty() {
            return Err(Error::Structural("tree has no nodes".into()));
        }
        let n = parents.len();
        let mut nodes: Vec<TreeNode> = parents
            .iter()
            .zip(leaf_tokens)
            .map(|(&parent, &leaf_token)| TreeNode {
                parent,
                children: Vec::new(),
                leaf_token,
            })
            .collect();
        let mut root = None;
        for (id, parent) in parents.iter().enumerate() {
            match *parent {
                None if root.is_some() => {
                    return Err(Error::Structural(format!("multiple roots ({} and {id})", root.unwrap())))
                }
                None => root = Some(id),
                Some(p) if p >= n => {
                    return Err(Error::Structural(format!("node {id} has unknown parent {p}")))
                }
                Some(p) if p == id => {
                    return Err(Error::Structural(format!("node {id} is its own parent")))
                }
                Some(p) => nodes[p].children.push(id),
            }
        }
        let root = root.ok_or_else(|| Error::Structural("tree has no root".into()))?;
        let h = Hierarchy { nodes, root };
        h.check_shape()?;
        Ok(h)
    }

    pub(crate) fn from_nodes_unchecked(nodes: Vec<TreeNode>, root: NodeId) -> Self {
        Hierarchy { nodes, root }
    }

    /// Root with the `n` vertices directly beneath it. Leaf ids equal token ids.
    pub fn flat(n: usize) -> Self {
        let mut parents: Vec<Option<NodeId>> = vec![Some(n); n];
        parents.push(None);
        let mut leaves: Vec<Option<usize>> = (0..n).map(Some).collect();
        leaves.push(None);
        Hierarchy::from_parents(&parents, &leaves).expect("flat tree is well formed")
    }

    fn check_shape(&self) -> Result<()> {
        let n = self.nodes.len();
        for (id, node) in self.nodes.iter().enumerate() {
            match (node.children.is_empty(), node.leaf_token) {
                (true, None) => {
                    return Err(Error::Structural(format!("internal node {id} has no children")))
                }
                (false, Some(_)) => {
                    return Err(Error::Structural(format!("node {id} has children and a leaf token")))
                }
                _ => {}
            }
            // Every node must reach the root within n steps.
            let mut cur = id;
            let mut steps = 0;
            while let Some(p) = self.nodes[cur].parent {
                cur = p;
                steps += 1;
                if steps > n {
                    return Err(Error::Structural(format!("cycle through node {id}")));
                }
            }
        }
        Ok(())
    }

    pub fn root(&self) -> NodeId {
        self.root
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, id: NodeId) -> &TreeNode {
        &self.nodes[id]
    }

    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn is_leaf(&self, id: NodeId) -> bool {
        self.nodes[id].children.is_empty()
    }

    pub fn depth(&self, mut id: NodeId) -> usize {
        let mut d = 0;
        while let Some(p) = self.nodes[id].parent {
            id = p;
            d += 1;
        }
        d
    }

    /// Depth of every node, computed top-down.
    pub fn depths(&self) -> Vec<usize> {
        let mut depth = vec![0; self.nodes.len()];
        let mut stack = vec![self.root];
        while let Some(v) = stack.pop() {
            for &c in &self.nodes[v].children {
                depth[c] = depth[v] + 1;
                stack.push(c);
            }
        }
        depth
    }

    /// Longest root-to-leaf path, in edges.
    pub fn height(&self) -> usize {
        let depth = self.depths();
        (0..self.nodes.len())
            .filter(|&v| self.is_leaf(v))
            .map(|v| depth[v])
            .max()
            .unwrap_or(0)
    }

    /// Node ids in an order where every child precedes its parent.
    pub fn post_order(&self) -> Vec<NodeId> {
        let mut order = Vec::with_capacity(self.nodes.len());
        let mut stack = vec![(self.root, false)];
        while let Some((v, expanded)) = stack.pop() {
            if expanded {
                order.push(v);
            } else {
                stack.push((v, true));
                for &c in self.nodes[v].children.iter().rev() {
                    stack.push((c, false));
                }
            }
        }
        order
    }

    /// Maps token id to leaf node id, checking that the leaves are exactly
    /// the vertices `0..n`.
    pub fn leaf_index(&self, n: usize) -> Result<Vec<NodeId>> {
        let mut index = vec![usize::MAX; n];
        let mut seen = 0;
        for (id, node) in self.nodes.iter().enumerate() {
            if let Some(tok) = node.leaf_token {
                if tok >= n {
                    return Err(Error::Structural(format!(
                        "leaf {id} holds token {tok} but the graph has {n} vertices"
                    )));
                }
                if index[tok] != usize::MAX {
                    return Err(Error::Structural(format!("token {tok} appears on two leaves")));
                }
                index[tok] = id;
                seen += 1;
            }
        }
        if seen != n {
            return Err(Error::Structural(format!("tree has {seen} leaves but the graph has {n} vertices")));
        }
        Ok(index)
    }

    /// Descendant leaf tokens of `id`, sorted.
    pub fn leaf_set(&self, id: NodeId) -> Vec<usize> {
        let mut out = Vec::new();
        let mut stack = vec![id];
        while let Some(v) = stack.pop() {
            let node = &self.nodes[v];
            if let Some(t) = node.leaf_token {
                out.push(t);
            }
            stack.extend(node.children.iter().copied());
        }
        out.sort_unstable();
        out
    }
}

impl AsRef<Hierarchy> for Hierarchy {
    fn as_ref(&self) -> &Hierarchy {
        self
    }
}

/// A leveled coding tree of height `h`: the root sits at level `h`, every
/// leaf at level 0, and each node's children sit exactly one level below it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CodingTree {
    hierarchy: Hierarchy,
    levels: Vec<usize>,
    height: usize,
}

impl CodingTree {
    pub fn new(hierarchy: Hierarchy, levels: Vec<usize>) -> Result<Self> {
        if levels.len() != hierarchy.len() {
            return Err(Error::Structural(format!(
                "{} levels for {} nodes",
                levels.len(),
                hierarchy.len()
            )));
        }
        let height = levels[hierarchy.root()];
        let tree = CodingTree {
            hierarchy,
            levels,
            height,
        };
        tree.validate()?;
        Ok(tree)
    }

    pub fn from_parts(
        parents: &[Option<NodeId>],
        levels: Vec<usize>,
        leaf_tokens: &[Option<usize>],
    ) -> Result<Self> {
        CodingTree::new(Hierarchy::from_parents(parents, leaf_tokens)?, levels)
    }

    /// Checks the leveling invariants (the hierarchy checks itself on
    /// construction).
    pub fn validate(&self) -> Result<()> {
        let h = &self.hierarchy;
        if self.height == 0 {
            return Err(Error::Structural("coding tree height must be at least 1".into()));
        }
        for (id, node) in h.nodes().iter().enumerate() {
            let level = self.levels[id];
            match node.parent {
                Some(p) if self.levels[p] != level + 1 => {
                    return Err(Error::Structural(format!(
                        "node {id} at level {level} has parent {p} at level {}",
                        self.levels[p]
                    )))
                }
                None if level != self.height => unreachable!("root level defines the height"),
                _ => {}
            }
            if node.children.is_empty() && level != 0 {
                return Err(Error::Structural(format!("leaf {id} sits at level {level}, not 0")));
            }
            if node.leaf_token.is_some() && level != 0 {
                return Err(Error::Structural(format!("leaf token on node {id} at level {level}")));
            }
        }
        Ok(())
    }

    pub fn hierarchy(&self) -> &Hierarchy {
        &self.hierarchy
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn level(&self, id: NodeId) -> usize {
        self.levels[id]
    }

    pub fn levels(&self) -> &[usize] {
        &self.levels
    }

    pub fn len(&self) -> usize {
        self.hierarchy.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hierarchy.is_empty()
    }

    pub fn root(&self) -> NodeId {
        self.hierarchy.root()
    }

    /// Node ids grouped by level, each group sorted; index 0 holds the leaves.
    pub fn nodes_by_level(&self) -> Vec<Vec<NodeId>> {
        let mut out = vec![Vec::new(); self.height + 1];
        for (id, &l) in self.levels.iter().enumerate() {
            out[l].push(id);
        }
        out
    }

    /// Leaves ordered by token id.
    pub fn leaves_by_token(&self) -> Vec<NodeId> {
        let mut leaves: Vec<(usize, NodeId)> = self
            .hierarchy
            .nodes()
            .iter()
            .enumerate()
            .filter_map(|(id, n)| n.leaf_token.map(|t| (t, id)))
            .collect();
        leaves.sort_unstable();
        leaves.into_iter().map(|(_, id)| id).collect()
    }
}

impl AsRef<Hierarchy> for CodingTree {
    fn as_ref(&self) -> &Hierarchy {
        &self.hierarchy
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NodeRecord {
    id: NodeId,
    parent: Option<NodeId>,
    level: usize,
    leaf_token: Option<usize>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TreeRecord {
    doc_id: String,
    height: usize,
    nodes: Vec<NodeRecord>,
    entropy_bits: f64,
}

/// The on-disk coding-tree record for one document.
#[derive(Clone, Debug, PartialEq)]
pub struct TreeFile {
    pub doc_id: String,
    pub tree: CodingTree,
    pub entropy_bits: f64,
}

impl TreeFile {
    pub fn to_json(&self) -> Vec<u8> {
        let h = self.tree.hierarchy();
        let record = TreeRecord {
            doc_id: self.doc_id.clone(),
            height: self.tree.height(),
            nodes: h
                .nodes()
                .iter()
                .enumerate()
                .map(|(id, n)| NodeRecord {
                    id,
                    parent: n.parent,
                    level: self.tree.level(id),
                    leaf_token: n.leaf_token,
                })
                .collect(),
            entropy_bits: self.entropy_bits,
        };
        serde_json::to_vec(&record).expect("tree serialization is infallible")
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        let record: TreeRecord = serde_json::from_slice(bytes).map_err(Error::from_json)?;
        let mut parents = Vec::with_capacity(record.nodes.len());
        let mut levels = Vec::with_capacity(record.nodes.len());
        let mut leaves = Vec::with_capacity(record.nodes.len());
        for (i, n) in record.nodes.iter().enumerate() {
            if n.id != i {
                return Err(Error::Parse {
                    location: format!("nodes[{i}].id"),
                    message: format!("expected id {i}, found {}", n.id),
                });
            }
            parents.push(n.parent);
            levels.push(n.level);
            leaves.push(n.leaf_token);
        }
        let tree = CodingTree::from_parts(&parents, levels, &leaves)?;
        if tree.height() != record.height {
            return Err(Error::Structural(format!(
                "declared height {} but root sits at level {}",
                record.height,
                tree.height()
            )));
        }
        Ok(TreeFile {
            doc_id: record.doc_id,
            tree,
            entropy_bits: record.entropy_bits,
        })
    }

    pub fn read(path: &std::path::Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        TreeFile::from_json(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_two_roots_and_cycles() {
        assert!(Hierarchy::from_parents(&[None, None], &[Some(0), Some(1)]).is_err());
        assert!(Hierarchy::from_parents(&[Some(1), Some(2), Some(1), None], &[Some(0), None, None, None]).is_err());
    }

    #[test]
    fn rejects_childless_internal_node() {
        assert!(Hierarchy::from_parents(&[Some(2), Some(2), None, Some(2)], &[Some(0), Some(1), None, None]).is_err());
    }

    #[test]
    fn levels_must_step_by_one() {
        // root(3) -> 0 ; root -> 2 -> 1
        let parents = [Some(3), Some(2), Some(3), None];
        let leaves = [Some(0), Some(1), None, None];
        assert!(CodingTree::from_parts(&parents, vec![0, 0, 1, 2], &leaves).is_err());
        let parents = [Some(2), Some(2), Some(3), None];
        let leaves = [Some(0), Some(1), None, None];
        let t = CodingTree::from_parts(&parents, vec![0, 0, 1, 2], &leaves).unwrap();
        assert_eq!(t.height(), 2);
        assert_eq!(t.nodes_by_level(), vec![vec![0, 1], vec![2], vec![3]]);
    }

    #[test]
    fn leaf_index_detects_mismatch() {
        let h = Hierarchy::flat(3);
        assert!(h.leaf_index(3).is_ok());
        assert!(h.leaf_index(4).is_err());
        assert!(h.leaf_index(2).is_err());
    }

    #[test]
    fn tree_file_round_trip() {
        let parents = [Some(2), Some(2), Some(3), None];
        let leaves = [Some(0), Some(1), None, None];
        let tree = CodingTree::from_parts(&parents, vec![0, 0, 1, 2], &leaves).unwrap();
        let file = TreeFile {
            doc_id: "x".into(),
            tree,
            entropy_bits: 0.1 + 0.2,
        };
        let back = TreeFile::from_json(&file.to_json()).unwrap();
        assert_eq!(back, file);
    }
}
