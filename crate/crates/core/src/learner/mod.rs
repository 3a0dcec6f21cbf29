//! Layer-wise tree network over coding trees.
//!
//! Level `i` applies its own MLP to the sum of each node's children from
//! level `i - 1`. The readout concatenates a pooled summary of every level,
//! leaves included, and feeds a softmax classifier trained with
//! cross-entropy and Adam.

mod adam;
mod checkpoint;
mod model;
mod train;

pub use adam::Adam;
pub use checkpoint::{Checkpoint, TensorRecord};
pub use model::{
    argmax, backward, count_params, forward, forward_cost, loss, softmax, ForwardCost, ForwardPass, LevelCache, Loss,
    Mlp, Mode, ModelDims, Params, TreeModel, PROB_FLOOR,
};
pub use train::{evaluate, predict, train, EpochMetrics, EvalMetrics, Example, TrainOutcome};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Heights covered by the usual sweep; others need an explicit override.
pub const HEIGHT_RANGE: std::ops::RangeInclusive<usize> = 2..=12;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Pool {
    Sum,
    #[default]
    Mean,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub height: usize,
    pub hidden: usize,
    pub pool: Pool,
    pub lr: f64,
    pub dropout: f64,
    pub batch: usize,
    pub seed: u64,
    pub max_epochs: usize,
    pub patience: usize,
    #[serde(default)]
    pub allow_any_height: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            height: 2,
            hidden: 96,
            pool: Pool::Mean,
            lr: 1e-3,
            dropout: 0.5,
            batch: 4,
            seed: 0,
            max_epochs: 200,
            patience: 10,
            allow_any_height: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.height < 2 || (!self.allow_any_height && !HEIGHT_RANGE.contains(&self.height)) {
            return Err(Error::Config(format!(
                "height {} outside {}..={}",
                self.height,
                HEIGHT_RANGE.start(),
                HEIGHT_RANGE.end()
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("learning rate {} must be finite and non-negative", self.lr)));
        }
        if self.hidden == 0 || self.batch == 0 || self.max_epochs == 0 {
            return Err(Error::Config("hidden size, batch size and epoch count must be positive".into()));
        }
        Ok(())
    }
}
