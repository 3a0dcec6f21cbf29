use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::{ModelDims, TreeModel};
use super::{Pool, TrainConfig};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorRecord {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

/// Trained parameters plus everything needed to rebuild the leaf features
/// and rerun evaluation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub dims: ModelDims,
    pub pool: Pool,
    pub config: TrainConfig,
    pub seed: u64,
    pub position_slots: usize,
    pub feature_seed: u64,
    pub tensors: Vec<TensorRecord>,
}

impl Checkpoint {
    pub fn from_model(model: &TreeModel, config: &TrainConfig, position_slots: usize, feature_seed: u64) -> Self {
        let p = &model.params;
        let tensors = p
            .names()
            .into_iter()
            .zip(p.shapes())
            .zip(p.slices())
            .map(|((name, shape), data)| TensorRecord {
                name,
                shape,
                data: data.to_vec(),
            })
            .collect();
        Checkpoint {
            dims: model.dims,
            pool: model.pool,
            config: config.clone(),
            seed: config.seed,
            position_slots,
            feature_seed,
            tensors,
        }
    }

    pub fn to_model(&self) -> Result<TreeModel> {
        let mut model = TreeModel::zeros(self.dims, self.pool)?;
        let expected = model.params.names().into_iter().zip(model.params.shapes());
        if self.tensors.len() != model.params.names().len() {
            return Err(Error::Shape(format!(
                "checkpoint holds {} tensors, model needs {}",
                self.tensors.len(),
                model.params.names().len()
            )));
        }
        for ((name, shape), record) in expected.zip(&self.tensors) {
            if record.name != name || record.shape != shape {
                return Err(Error::Shape(format!(
                    "tensor `{}` {:?} where `{name}` {shape:?} was expected",
                    record.name, record.shape
                )));
            }
            if record.data.len() != shape.iter().product::<usize>() {
                return Err(Error::Shape(format!("tensor `{name}` has {} values", record.data.len())));
            }
        }
        for (dst, record) in model.params.slices_mut().into_iter().zip(&self.tensors) {
            dst.copy_from_slice(&record.data);
        }
        Ok(model)
    }

    pub fn to_json(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("checkpoint serialization is infallible")
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        serde_json::from_slice(bytes).map_err(Error::from_json)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Checkpoint::from_json(&bytes)
    }
}
