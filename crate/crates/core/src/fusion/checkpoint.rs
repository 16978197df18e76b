//! JSON checkpoints: configuration, input scaling and named parameter arrays.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::harness::TrainedModel;
use super::model::{FusionConfig, FusionModel};
use super::tensor::Mat;
use super::train::InputScaling;
use super::FusionError;

pub const CHECKPOINT_FORMAT: &str = "octdyn-fusion";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Array {
    name: String,
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct Container {
    format: String,
    version: u32,
    config: FusionConfig,
    scaling: InputScaling,
    params: Vec<Array>,
}

pub fn to_json(t: &TrainedModel) -> Result<String, FusionError> {
    let c = Container {
        format: CHECKPOINT_FORMAT.into(),
        version: CHECKPOINT_VERSION,
        config: t.model.config().clone(),
        scaling: t.scaling.clone(),
        params: t
            .model
            .names()
            .iter()
            .zip(t.model.params())
            .map(|(n, m)| Array { name: n.clone(), rows: m.rows, cols: m.cols, data: m.data.clone() })
            .collect(),
    };
    Ok(serde_json::to_string(&c)?)
}

pub fn from_json(text: &str) -> Result<TrainedModel, FusionError> {
    let c: Container = serde_json::from_str(text)?;
    if c.format != CHECKPOINT_FORMAT || c.version != CHECKPOINT_VERSION {
        return Err(FusionError::Checkpoint(format!("unsupported container {} v{}", c.format, c.version)));
    }
    let mut named = Vec::with_capacity(c.params.len());
    for a in c.params {
        if a.data.len() != a.rows * a.cols {
            return Err(FusionError::Checkpoint(format!("{}: {} values for {}x{}", a.name, a.data.len(), a.rows, a.cols)));
        }
        named.push((a.name, Mat::from_vec(a.rows, a.cols, a.data)));
    }
    if c.scaling.clinical.mean.len() != c.config.clinical_dim || c.scaling.values.mean.len() != c.config.values_dim {
        return Err(FusionError::Checkpoint("input scaling does not match the configured widths".into()));
    }
    Ok(TrainedModel { model: FusionModel::from_parts(c.config, named)?, scaling: c.scaling })
}

pub fn save(t: &TrainedModel, path: &Path) -> Result<(), FusionError> {
    fs::write(path, to_json(t)?)?;
    Ok(())
}

pub fn load(path: &Path) -> Result<TrainedModel, FusionError> {
    from_json(&fs::read_to_string(path)?)
}
