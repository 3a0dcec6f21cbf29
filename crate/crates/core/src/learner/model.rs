use ndarray::{s, Array1, Array2, ArrayView1, Axis, Zip};
use rand::distributions::{Distribution, Uniform};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::Pool;
use crate::entropy::CodingTree;
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;

/// Probability floor applied before taking the log in [`loss`].
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    /// Leaf feature width `d0`.
    pub input_dim: usize,
    pub hidden: usize,
    pub height: usize,
    pub classes: usize,
}

impl ModelDims {
    pub fn readout_dim(&self) -> usize {
        self.input_dim + self.height * self.hidden
    }

    pub fn level_input_dim(&self, level: usize) -> usize {
        if level == 1 {
            self.input_dim
        } else {
            self.hidden
        }
    }

    /// Closed-form parameter count.
    pub fn param_count(&self) -> usize {
        let (d0, h) = (self.input_dim, self.hidden);
        let first = d0 * h + h + h * h + h;
        let rest = (self.height - 1) * 2 * (h * h + h);
        first + rest + self.readout_dim() * self.classes + self.classes
    }

    fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.hidden == 0 || self.height == 0 || self.classes == 0 {
            return Err(Error::Config(format!("all model dimensions must be positive: {self:?}")));
        }
        Ok(())
    }
}

/// Two affine maps with a rectifier between them.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
}

impl Mlp {
    fn zeros(d_in: usize, hidden: usize) -> Self {
        Mlp {
            w1: Array2::zeros((d_in, hidden)),
            b1: Array1::zeros(hidden),
            w2: Array2::zeros((hidden, hidden)),
            b2: Array1::zeros(hidden),
        }
    }
}

/// Every trainable tensor. Also used to hold gradients.
#[derive(Clone, Debug, PartialEq)]
pub struct Params {
    /// `levels[i - 1]` is the MLP of level `i`.
    pub levels: Vec<Mlp>,
    /// `(d0 + h * hidden) x classes`.
    pub classifier_w: Array2<f64>,
    pub classifier_b: Array1<f64>,
}

impl Params {
    pub fn zeros(dims: &ModelDims) -> Self {
        Params {
            levels: (1..=dims.height)
                .map(|l| Mlp::zeros(dims.level_input_dim(l), dims.hidden))
                .collect(),
            classifier_w: Array2::zeros((dims.readout_dim(), dims.classes)),
            classifier_b: Array1::zeros(dims.classes),
        }
    }

    /// Tensor names in a fixed order matching [`Params::slices`].
    pub fn names(&self) -> Vec<String> {
        let mut out = Vec::new();
        for i in 1..=self.levels.len() {
            for part in ["w1", "b1", "w2", "b2"] {
                out.push(format!("level{i}.{part}"));
            }
        }
        out.push("classifier.w".into());
        out.push("classifier.b".into());
        out
    }

    pub fn shapes(&self) -> Vec<Vec<usize>> {
        let mut out = Vec::new();
        for mlp in &self.levels {
            out.push(mlp.w1.shape().to_vec());
            out.push(mlp.b1.shape().to_vec());
            out.push(mlp.w2.shape().to_vec());
            out.push(mlp.b2.shape().to_vec());
        }
        out.push(self.classifier_w.shape().to_vec());
        out.push(self.classifier_b.shape().to_vec());
        out
    }

    pub fn slices(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::new();
        for mlp in &self.levels {
            out.push(mlp.w1.as_slice().expect("standard layout"));
            out.push(mlp.b1.as_slice().expect("standard layout"));
            out.push(mlp.w2.as_slice().expect("standard layout"));
            out.push(mlp.b2.as_slice().expect("standard layout"));
        }
        out.push(self.classifier_w.as_slice().expect("standard layout"));
        out.push(self.classifier_b.as_slice().expect("standard layout"));
        out
    }

    pub fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        for mlp in &mut self.levels {
            out.push(mlp.w1.as_slice_mut().expect("standard layout"));
            out.push(mlp.b1.as_slice_mut().expect("standard layout"));
            out.push(mlp.w2.as_slice_mut().expect("standard layout"));
            out.push(mlp.b2.as_slice_mut().expect("standard layout"));
        }
        out.push(self.classifier_w.as_slice_mut().expect("standard layout"));
        out.push(self.classifier_b.as_slice_mut().expect("standard layout"));
        out
    }

    pub fn element_count(&self) -> usize {
        self.slices().iter().map(|s| s.len()).sum()
    }

    pub fn scale(&mut self, factor: f64) {
        for s in self.slices_mut() {
            s.iter_mut().for_each(|x| *x *= factor);
        }
    }

    pub fn add_assign(&mut self, other: &Params) {
        for (dst, src) in self.slices_mut().into_iter().zip(other.slices()) {
            dst.iter_mut().zip(src).for_each(|(d, s)| *d += s);
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TreeModel {
    pub dims: ModelDims,
    pub pool: Pool,
    pub params: Params,
}

impl TreeModel {
    /// Weights and biases drawn from `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
    pub fn new<R: Rng>(dims: ModelDims, pool: Pool, rng: &mut R) -> Result<Self> {
        dims.validate()?;
        let mut params = Params::zeros(&dims);
        let fill = |rng: &mut R, fan_in: usize, xs: &mut [f64]| {
            let bound = 1.0 / (fan_in as f64).sqrt();
            let dist = Uniform::new_inclusive(-bound, bound);
            xs.iter_mut().for_each(|x| *x = dist.sample(rng));
        };
        for (i, mlp) in params.levels.iter_mut().enumerate() {
            let d_in = dims.level_input_dim(i + 1);
            fill(rng, d_in, mlp.w1.as_slice_mut().unwrap());
            fill(rng, d_in, mlp.b1.as_slice_mut().unwrap());
            fill(rng, dims.hidden, mlp.w2.as_slice_mut().unwrap());
            fill(rng, dims.hidden, mlp.b2.as_slice_mut().unwrap());
        }
        fill(rng, dims.readout_dim(), params.classifier_w.as_slice_mut().unwrap());
        fill(rng, dims.readout_dim(), params.classifier_b.as_slice_mut().unwrap());
        Ok(TreeModel { dims, pool, params })
    }

    pub fn zeros(dims: ModelDims, pool: Pool) -> Result<Self> {
        dims.validate()?;
        Ok(TreeModel {
            dims,
            pool,
            params: Params::zeros(&dims),
        })
    }
}

pub fn count_params(model: &TreeModel) -> usize {
    model.dims.param_count()
}

/// Dropout setting for one forward pass.
pub enum Mode<'a, R: Rng> {
    Eval,
    Train { dropout: f64, rng: &'a mut R },
}

/// Per-level activations kept for the backward pass.
#[derive(Clone, Debug)]
pub struct LevelCache {
    /// Child positions (in the level below) of each node on this level.
    pub children: Vec<Vec<usize>>,
    /// Summed child representations, one row per node.
    pub summed: Array2<f64>,
    pub pre_activation: Array2<f64>,
    pub hidden: Array2<f64>,
    /// Inverted-dropout multipliers, when dropout was applied.
    pub mask: Option<Array2<f64>>,
    pub output: Array2<f64>,
}

#[derive(Clone, Debug)]
pub struct ForwardPass {
    pub probs: Array1<f64>,
    pub logits: Array1<f64>,
    pub readout: Array1<f64>,
    /// Leaf features ordered as the level-0 nodes.
    pub leaves: Array2<f64>,
    /// `levels[i - 1]` caches level `i`.
    pub levels: Vec<LevelCache>,
    pub cost: ForwardCost,
}

/// Arithmetic performed by one forward pass.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForwardCost {
    /// Multiply-accumulate operations in the affine maps and classifier.
    pub mul_adds: u64,
    /// Plain additions: child sums, biases, pooling.
    pub adds: u64,
}

/// Analytic cost of a forward pass over `tree`, without running it.
pub fn forward_cost(dims: &ModelDims, tree: &CodingTree) -> ForwardCost {
    let by_level = tree.nodes_by_level();
    let h = dims.hidden as u64;
    let mut cost = ForwardCost::default();
    for (level, nodes) in by_level.iter().enumerate() {
        let width = if level == 0 { dims.input_dim as u64 } else { h };
        // pooling
        cost.adds += (nodes.len() as u64).saturating_sub(1) * width;
        if level == 0 {
            continue;
        }
        let d_in = dims.level_input_dim(level) as u64;
        for &v in nodes {
            let k = tree.hierarchy().node(v).children.len() as u64;
            cost.adds += (k - 1) * d_in + 2 * h;
            cost.mul_adds += d_in * h + h * h;
        }
    }
    let readout = dims.readout_dim() as u64;
    cost.mul_adds += readout * dims.classes as u64;
    cost.adds += dims.classes as u64;
    cost
}

fn pool_rows(x: &Array2<f64>, pool: Pool) -> Array1<f64> {
    let sum = x.sum_axis(Axis(0));
    match pool {
        Pool::Sum => sum,
        Pool::Mean => sum / x.nrows() as f64,
    }
}

pub fn softmax(logits: ArrayView1<f64>) -> Array1<f64> {
    let max = logits.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let exp = logits.mapv(|z| (z - max).exp());
    let total = exp.sum();
    exp / total
}

pub fn forward<R: Rng>(
    model: &TreeModel,
    tree: &CodingTree,
    x0: &FeatureMatrix,
    mode: Mode<'_, R>,
) -> Result<ForwardPass> {
    let dims = &model.dims;
    if tree.height() != dims.height {
        return Err(Error::Structural(format!(
            "tree height {} does not match model height {}",
            tree.height(),
            dims.height
        )));
    }
    if x0.dim() != dims.input_dim {
        return Err(Error::Shape(format!(
            "feature width {} but model expects {}",
            x0.dim(),
            dims.input_dim
        )));
    }
    let hier = tree.hierarchy();
    let by_level = tree.nodes_by_level();
    if by_level[0].len() != x0.len() {
        return Err(Error::Shape(format!(
            "{} feature rows for {} leaves",
            x0.len(),
            by_level[0].len()
        )));
    }
    let mut position = vec![0usize; tree.len()];
    for nodes in &by_level {
        for (pos, &v) in nodes.iter().enumerate() {
            position[v] = pos;
        }
    }

    let mut leaves = Array2::zeros((by_level[0].len(), dims.input_dim));
    for (row, &leaf) in by_level[0].iter().enumerate() {
        let token = hier.node(leaf).leaf_token.expect("level-0 nodes are leaves");
        if token >= x0.len() {
            return Err(Error::Shape(format!("leaf token {token} has no feature row")));
        }
        leaves.row_mut(row).assign(&x0.rows().row(token));
    }

    let (dropout, mut rng) = match mode {
        Mode::Eval => (0.0, None),
        Mode::Train { dropout, rng } => (dropout, Some(rng)),
    };

    let mut readout = Array1::zeros(dims.readout_dim());
    readout.slice_mut(s![..dims.input_dim]).assign(&pool_rows(&leaves, model.pool));
    let mut levels: Vec<LevelCache> = Vec::with_capacity(dims.height);
    let mut cost = ForwardCost::default();
    cost.adds += (leaves.nrows() as u64 - 1) * dims.input_dim as u64;

    for (level, (mlp, nodes)) in (1..).zip(model.params.levels.iter().zip(&by_level[1..=dims.height])) {
        let below = levels.last().map_or(&leaves, |c| &c.output);
        let d_in = below.ncols();
        let mut summed = Array2::zeros((nodes.len(), d_in));
        let mut children = Vec::with_capacity(nodes.len());
        for (row, &v) in nodes.iter().enumerate() {
            let kids: Vec<usize> = hier.node(v).children.iter().map(|&c| position[c]).collect();
            let mut acc = summed.row_mut(row);
            for &k in &kids {
                acc += &below.row(k);
            }
            cost.adds += (kids.len() as u64 - 1) * d_in as u64;
            children.push(kids);
        }
        let pre_activation = summed.dot(&mlp.w1) + &mlp.b1;
        let hidden = pre_activation.mapv(|z| z.max(0.0));
        let mut output = hidden.dot(&mlp.w2) + &mlp.b2;
        let hsz = dims.hidden as u64;
        cost.mul_adds += nodes.len() as u64 * (d_in as u64 * hsz + hsz * hsz);
        cost.adds += nodes.len() as u64 * 2 * hsz;

        let mask = match rng.as_deref_mut() {
            Some(rng) if dropout > 0.0 => {
                let keep = 1.0 / (1.0 - dropout);
                let mask = Array2::from_shape_fn(output.raw_dim(), |_| {
                    if rng.gen::<f64>() < dropout {
                        0.0
                    } else {
                        keep
                    }
                });
                output *= &mask;
                Some(mask)
            }
            _ => None,
        };

        let offset = dims.input_dim + (level - 1) * dims.hidden;
        readout
            .slice_mut(s![offset..offset + dims.hidden])
            .assign(&pool_rows(&output, model.pool));
        cost.adds += (nodes.len() as u64 - 1) * hsz;
        levels.push(LevelCache {
            children,
            summed,
            pre_activation,
            hidden,
            mask,
            output,
        });
    }

    let logits = readout.dot(&model.params.classifier_w) + &model.params.classifier_b;
    cost.mul_adds += (dims.readout_dim() * dims.classes) as u64;
    cost.adds += dims.classes as u64;
    let probs = softmax(logits.view());
    Ok(ForwardPass {
        probs,
        logits,
        readout,
        leaves,
        levels,
        cost,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Loss {
    pub value: f64,
    /// The gold probability was below [`PROB_FLOOR`] and was clamped.
    pub clamped: bool,
}

/// Cross-entropy `-ln y[gold]` (natural log).
pub fn loss(probs: ArrayView1<f64>, gold: usize) -> Result<Loss> {
    let p = *probs
        .get(gold)
        .ok_or_else(|| Error::Shape(format!("gold class {gold} out of range for {} classes", probs.len())))?;
    let clamped = p < PROB_FLOOR;
    Ok(Loss {
        value: -p.max(PROB_FLOOR).ln(),
        clamped,
    })
}

/// Exact gradient of `loss(forward(..).probs, gold)` for every parameter.
pub fn backward(model: &TreeModel, pass: &ForwardPass, gold: usize) -> Result<Params> {
    let dims = &model.dims;
    if gold >= dims.classes {
        return Err(Error::Shape(format!("gold class {gold} out of range for {} classes", dims.classes)));
    }
    let mut grads = Params::zeros(dims);
    let mut dlogits = pass.probs.clone();
    dlogits[gold] -= 1.0;
    grads.classifier_w.assign(&outer(&pass.readout, &dlogits));
    grads.classifier_b.assign(&dlogits);
    let dreadout = model.params.classifier_w.dot(&dlogits);

    // Seed every level's output gradient with its pooling share.
    let mut doutputs: Vec<Array2<f64>> = pass
        .levels
        .iter()
        .enumerate()
        .map(|(i, cache)| {
            let offset = dims.input_dim + i * dims.hidden;
            let mut share = dreadout.slice(s![offset..offset + dims.hidden]).to_owned();
            if model.pool == Pool::Mean {
                share /= cache.output.nrows() as f64;
            }
            let mut d = Array2::zeros(cache.output.raw_dim());
            d.rows_mut().into_iter().for_each(|mut r| r.assign(&share));
            d
        })
        .collect();

    for level in (1..=dims.height).rev() {
        let cache = &pass.levels[level - 1];
        let mlp = &model.params.levels[level - 1];
        let mut dz2 = std::mem::take(&mut doutputs[level - 1]);
        if let Some(mask) = &cache.mask {
            dz2 *= mask;
        }
        let g = &mut grads.levels[level - 1];
        g.w2.assign(&cache.hidden.t().dot(&dz2));
        g.b2.assign(&dz2.sum_axis(Axis(0)));
        let mut dz1 = dz2.dot(&mlp.w2.t());
        Zip::from(&mut dz1)
            .and(&cache.pre_activation)
            .for_each(|d, &z| {
                if z <= 0.0 {
                    *d = 0.0;
                }
            });
        g.w1.assign(&cache.summed.t().dot(&dz1));
        g.b1.assign(&dz1.sum_axis(Axis(0)));
        if level > 1 {
            let dsummed = dz1.dot(&mlp.w1.t());
            let below = &mut doutputs[level - 2];
            for (row, kids) in cache.children.iter().enumerate() {
                for &k in kids {
                    let mut target = below.row_mut(k);
                    target += &dsummed.row(row);
                }
            }
        }
    }
    Ok(grads)
}

fn outer(a: &Array1<f64>, b: &Array1<f64>) -> Array2<f64> {
    let col = a.view().insert_axis(Axis(1));
    let row = b.view().insert_axis(Axis(0));
    col.dot(&row)
}

/// Index of the largest probability; ties go to the lower class.
pub fn argmax(probs: ArrayView1<f64>) -> usize {
    let mut best = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > probs[best] {
            best = i;
        }
    }
    best
}
