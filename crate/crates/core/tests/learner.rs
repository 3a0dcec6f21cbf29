use codingtree::entropy::{random_tree, sema};
use codingtree::features::FeatureMatrix;
use codingtree::graphio::{DocumentGraph, Token};
use codingtree::learner::{backward, forward, loss, softmax, Mode, ModelDims, Pool, TreeModel};
use ndarray::{array, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn path_graph(n: usize) -> DocumentGraph {
    let tokens = (0..n).map(|i| Token::new(i, format!("w{i}"), 0)).collect();
    let edges = (1..n).map(|i| (i - 1, i)).collect();
    DocumentGraph::new("p", 1, tokens, edges, Vec::new()).unwrap()
}

fn features(n: usize, d: usize, rng: &mut ChaCha8Rng) -> FeatureMatrix {
    FeatureMatrix::from_rows(Array2::from_shape_fn((n, d), |_| rng.gen_range(-1.0..1.0)))
}

/// Under a fixed dropout mask the loss is a smooth function of the
/// parameters, so finite differences apply in training mode too.
#[test]
fn gradients_match_with_fixed_dropout_mask() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let g = path_graph(9);
    let tree = random_tree(&g, 4, 1).unwrap();
    let x0 = features(9, 6, &mut rng);
    let dims = ModelDims {
        input_dim: 6,
        hidden: 4,
        height: 4,
        classes: 3,
    };
    let mut model = TreeModel::new(dims, Pool::Sum, &mut rng).unwrap();
    let run = |m: &TreeModel| {
        let mut mask_rng = ChaCha8Rng::seed_from_u64(99);
        forward(
            m,
            &tree,
            &x0,
            Mode::Train {
                dropout: 0.3,
                rng: &mut mask_rng,
            },
        )
        .unwrap()
    };
    let pass = run(&model);
    assert!(pass.levels.iter().any(|l| l.mask.is_some()));
    let grads = backward(&model, &pass, 2).unwrap();
    let eps = 1e-5;
    for (gi, name) in model.params.names().into_iter().enumerate() {
        for j in 0..grads.slices()[gi].len() {
            let orig = model.params.slices()[gi][j];
            model.params.slices_mut()[gi][j] = orig + eps;
            let up = loss(run(&model).probs.view(), 2).unwrap().value;
            model.params.slices_mut()[gi][j] = orig - eps;
            let down = loss(run(&model).probs.view(), 2).unwrap().value;
            model.params.slices_mut()[gi][j] = orig;
            let numeric = (up - down) / (2.0 * eps);
            let analytic = grads.slices()[gi][j];
            assert!(
                (numeric - analytic).abs() <= 1e-6 * (1.0 + numeric.abs()),
                "{name}[{j}]: analytic {analytic}, numeric {numeric}"
            );
        }
    }
}

#[test]
fn eval_mode_ignores_dropout_and_is_repeatable() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let g = path_graph(12);
    let tree = sema(&g, 3).unwrap();
    let x0 = features(12, 5, &mut rng);
    let dims = ModelDims {
        input_dim: 5,
        hidden: 7,
        height: 3,
        classes: 2,
    };
    let model = TreeModel::new(dims, Pool::Mean, &mut rng).unwrap();
    let a = forward::<ChaCha8Rng>(&model, &tree, &x0, Mode::Eval).unwrap();
    let b = forward::<ChaCha8Rng>(&model, &tree, &x0, Mode::Eval).unwrap();
    assert_eq!(a.probs, b.probs);
    assert!(a.levels.iter().all(|l| l.mask.is_none()));
    assert!((a.probs.sum() - 1.0).abs() < 1e-12);
    assert_eq!(a.readout.len(), dims.readout_dim());
}

#[test]
fn softmax_is_shift_invariant_and_stable() {
    let p = softmax(array![1000.0, 1001.0, 999.0].view());
    let q = softmax(array![0.0, 1.0, -1.0].view());
    for (x, y) in p.iter().zip(q.iter()) {
        assert!((x - y).abs() < 1e-15);
    }
    let l = loss(array![1.0, 0.0].view(), 1).unwrap();
    assert!(l.clamped && l.value.is_finite());
}
