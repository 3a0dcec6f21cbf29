use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::Adam;
use super::model::{argmax, backward, forward, loss, Mode, Params, TreeModel};
use super::TrainConfig;
use crate::entropy::CodingTree;
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;

/// Share of the training documents held out for validation.
pub const VALIDATION_FRACTION: f64 = 0.1;

const SPLIT_STREAM: u64 = 1;
const ORDER_STREAM: u64 = 2;
const DROPOUT_STREAM: u64 = 3;

#[derive(Clone, Debug)]
pub struct Example {
    pub tree: CodingTree,
    pub features: FeatureMatrix,
    pub label: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_acc: f64,
    pub val_loss: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    pub accuracy: f64,
    pub loss: f64,
    pub count: usize,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the best validation score.
    pub model: TreeModel,
    pub history: Vec<EpochMetrics>,
    pub best_epoch: usize,
    pub train_indices: Vec<usize>,
    pub val_indices: Vec<usize>,
    pub train: EvalMetrics,
    pub val: EvalMetrics,
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn predict(model: &TreeModel, tree: &CodingTree, features: &FeatureMatrix) -> Result<usize> {
    let pass = forward::<ChaCha8Rng>(model, tree, features, Mode::Eval)?;
    Ok(argmax(pass.probs.view()))
}

/// Accuracy and mean loss in evaluation mode.
pub fn evaluate<'a, I>(model: &TreeModel, examples: I) -> Result<EvalMetrics>
where
    I: IntoIterator<Item = &'a Example>,
{
    let (mut correct, mut total_loss, mut count) = (0usize, 0.0, 0usize);
    for ex in examples {
        let pass = forward::<ChaCha8Rng>(model, &ex.tree, &ex.features, Mode::Eval)?;
        if argmax(pass.probs.view()) == ex.label {
            correct += 1;
        }
        total_loss += loss(pass.probs.view(), ex.label)?.value;
        count += 1;
    }
    if count == 0 {
        return Ok(EvalMetrics {
            accuracy: 0.0,
            loss: 0.0,
            count: 0,
        });
    }
    Ok(EvalMetrics {
        accuracy: correct as f64 / count as f64,
        loss: total_loss / count as f64,
        count,
    })
}

/// Seeded 9:1 train/validation split, then minibatch Adam with early stopping.
///
/// An epoch improves on the best so far when its validation accuracy is
/// higher, or equal with a lower validation loss. Training stops after
/// `patience` epochs without improvement and returns the best parameters.
pub fn train(model: TreeModel, data: &[Example], config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    if data.is_empty() {
        return Err(Error::Config("training set is empty".into()));
    }
    let mut indices: Vec<usize> = (0..data.len()).collect();
    indices.shuffle(&mut rng_for(config.seed, SPLIT_STREAM));
    let val_count = ((data.len() as f64 * VALIDATION_FRACTION).round() as usize).max(1);
    if val_count >= data.len() {
        return Err(Error::Config(format!(
            "{} training documents leave nothing after the validation split",
            data.len()
        )));
    }
    let val_indices = indices[..val_count].to_vec();
    let mut train_indices = indices[val_count..].to_vec();
    train_indices.sort_unstable();

    let mut model = model;
    let mut adam = Adam::new(&model.params, config.lr);
    let mut order_rng = rng_for(config.seed, ORDER_STREAM);
    let mut dropout_rng = rng_for(config.seed, DROPOUT_STREAM);
    let mut order = train_indices.clone();

    let mut history = Vec::new();
    let mut best = (model.clone(), f64::NEG_INFINITY, f64::INFINITY, 0usize);
    let mut stale = 0;
    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut order_rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(config.batch) {
            let mut grads = Params::zeros(&model.dims);
            for &i in batch {
                let ex = &data[i];
                let pass = forward(
                    &model,
                    &ex.tree,
                    &ex.features,
                    Mode::Train {
                        dropout: config.dropout,
                        rng: &mut dropout_rng,
                    },
                )?;
                epoch_loss += loss(pass.probs.view(), ex.label)?.value;
                grads.add_assign(&backward(&model, &pass, ex.label)?);
            }
            grads.scale(1.0 / batch.len() as f64);
            adam.step(&mut model.params, &grads);
        }
        let val = evaluate(&model, val_indices.iter().map(|&i| &data[i]))?;
        history.push(EpochMetrics {
            epoch,
            train_loss: epoch_loss / order.len() as f64,
            val_acc: val.accuracy,
            val_loss: val.loss,
        });
        log::debug!("epoch {epoch}: {:?}", history.last());
        if val.accuracy > best.1 || (val.accuracy == best.1 && val.loss < best.2) {
            best = (model.clone(), val.accuracy, val.loss, epoch);
            stale = 0;
        } else {
            stale += 1;
            if stale >= config.patience {
                break;
            }
        }
    }

    let model = best.0;
    let train = evaluate(&model, train_indices.iter().map(|&i| &data[i]))?;
    let val = evaluate(&model, val_indices.iter().map(|&i| &data[i]))?;
    Ok(TrainOutcome {
        model,
        history,
        best_epoch: best.3,
        train_indices,
        val_indices,
        train,
        val,
    })
}
