use codingtree::entropy::{random_tree, sema, structural_entropy, CodingTree, Hierarchy, TreeFile};
use codingtree::graphio::{DocumentGraph, Token};
use proptest::prelude::*;
use proptest::sample::subsequence;

fn graph(n: usize, edges: Vec<(usize, usize)>) -> DocumentGraph {
    let tokens = (0..n).map(|i| Token::new(i, format!("w{i}"), 0)).collect();
    DocumentGraph::new("g", 0, tokens, edges, Vec::new()).unwrap()
}

fn arb_graph(max_n: usize) -> impl Strategy<Value = DocumentGraph> {
    (1..max_n).prop_flat_map(|n| {
        let all: Vec<(usize, usize)> = (0..n).flat_map(|a| (a + 1..n).map(move |b| (a, b))).collect();
        let k = all.len();
        subsequence(all, 0..=k).prop_map(move |edges| graph(n, edges))
    })
}

/// Renames vertex `v` to `perm[v]` in both the graph and the tree.
fn relabel(g: &DocumentGraph, t: &CodingTree, perm: &[usize]) -> (DocumentGraph, Hierarchy) {
    let edges = g.edges().iter().map(|&(a, b)| (perm[a], perm[b])).collect();
    let h = t.hierarchy();
    let parents: Vec<Option<usize>> = h.nodes().iter().map(|n| n.parent).collect();
    let leaves: Vec<Option<usize>> = h.nodes().iter().map(|n| n.leaf_token.map(|v| perm[v])).collect();
    (graph(g.num_nodes(), edges), Hierarchy::from_parents(&parents, &leaves).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn entropy_invariant_under_relabeling(
        g in arb_graph(14),
        h in 2usize..6,
        seed in any::<u64>(),
    ) {
        let n = g.num_nodes();
        let mut perm: Vec<usize> = (0..n).collect();
        perm.rotate_left((seed as usize) % n);
        if n > 2 {
            perm.swap(0, n - 1);
        }
        for t in [sema(&g, h).unwrap(), random_tree(&g, h, seed).unwrap()] {
            let (g2, t2) = relabel(&g, &t, &perm);
            let a = structural_entropy(&g, &t).unwrap().bits;
            let b = structural_entropy(&g2, &t2).unwrap().bits;
            prop_assert!((a - b).abs() < 1e-12, "{} vs {}", a, b);
        }
    }

    #[test]
    fn trees_are_valid_and_round_trip(g in arb_graph(20), h in 2usize..9, seed in any::<u64>()) {
        for t in [sema(&g, h).unwrap(), random_tree(&g, h, seed).unwrap()] {
            t.validate().unwrap();
            prop_assert_eq!(t.height(), h);
            prop_assert_eq!(t.leaves_by_token().len(), g.num_nodes());
            let bits = structural_entropy(&g, &t).unwrap().bits;
            prop_assert!(bits >= -1e-12);
            let file = TreeFile { doc_id: "g".into(), tree: t, entropy_bits: bits };
            prop_assert_eq!(TreeFile::from_json(&file.to_json()).unwrap(), file);
        }
    }

    #[test]
    fn flat_tree_entropy_is_degree_entropy(g in arb_graph(12)) {
        // Under the flat tree the entropy reduces to the stationary-distribution
        // entropy of the degree sequence.
        prop_assume!(g.num_edges() > 0);
        let two_m = 2.0 * g.num_edges() as f64;
        let want: f64 = g
            .degrees()
            .iter()
            .filter(|&&d| d > 0)
            .map(|&d| -(d as f64 / two_m) * (d as f64 / two_m).log2())
            .sum();
        let got = structural_entropy(&g, &Hierarchy::flat(g.num_nodes())).unwrap().bits;
        prop_assert!((got - want).abs() < 1e-12);
    }
}

#[test]
fn sema_beats_random_on_a_clustered_graph() {
    // Two 5-cliques joined by one edge.
    let mut edges = Vec::new();
    for base in [0, 5] {
        for a in 0..5 {
            for b in a + 1..5 {
                edges.push((base + a, base + b));
            }
        }
    }
    edges.push((4, 5));
    let g = graph(10, edges);
    let best = structural_entropy(&g, &sema(&g, 2).unwrap()).unwrap().bits;
    for seed in 0..20 {
        let r = structural_entropy(&g, &random_tree(&g, 2, seed).unwrap()).unwrap().bits;
        assert!(best <= r + 1e-12, "seed {seed}: {best} > {r}");
    }
}
