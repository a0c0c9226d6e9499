use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{expected_param_count, Architecture, Model, TrainConfig};
use crate::error::{GazeError, Result};
use crate::types::{Normalization, Taxonomy};

const MODEL_FORMAT: &str = "gaze-model";
const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct BlockFile {
    name: String,
    shape: [usize; 2],
    data: Vec<f64>,
}

/// On-disk model container (JSON).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelFile {
    pub format: String,
    pub version: u32,
    pub architecture: Architecture,
    pub taxonomy: Taxonomy,
    pub param_count: usize,
    pub hyperparameters: TrainConfig,
    pub normalization: Normalization,
    blocks: Vec<BlockFile>,
}

impl ModelFile {
    pub fn from_model(model: &Model, hyperparameters: &TrainConfig) -> Self {
        ModelFile {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            architecture: model.architecture(),
            taxonomy: model.taxonomy(),
            param_count: model.param_count(),
            hyperparameters: hyperparameters.clone(),
            normalization: Normalization::DEFAULT,
            blocks: model
                .block_names()
                .iter()
                .zip(model.params())
                .map(|(name, p)| BlockFile {
                    name: name.to_string(),
                    shape: [p.nrows(), p.ncols()],
                    data: p.iter().copied().collect(),
                })
                .collect(),
        }
    }

    /// Rebuilds the model, checking block layout and parameter count.
    pub fn into_model(self) -> Result<Model> {
        if self.format != MODEL_FORMAT || self.version != MODEL_VERSION {
            return Err(GazeError::Format(format!(
                "unsupported model `{}` v{}",
                self.format, self.version
            )));
        }
        let expected = expected_param_count(self.architecture, self.taxonomy.size());
        let actual: usize = self.blocks.iter().map(|b| b.data.len()).sum();
        if actual != expected || self.param_count != expected {
            return Err(GazeError::Format(format!(
                "{} {} model should hold {expected} parameters, file has {actual} (header {})",
                self.architecture, self.taxonomy, self.param_count
            )));
        }
        let mut model = Model::new(self.architecture, self.taxonomy, 0);
        let names = model.block_names();
        if self.blocks.len() != names.len() {
            return Err(GazeError::Format("wrong number of weight blocks".into()));
        }
        for ((slot, block), name) in model.params_mut().iter_mut().zip(self.blocks).zip(names) {
            if block.name != *name || [slot.nrows(), slot.ncols()] != block.shape {
                return Err(GazeError::Format(format!(
                    "block `{}` {:?} does not match `{name}` {:?}",
                    block.name,
                    block.shape,
                    slot.shape()
                )));
            }
            *slot = Array2::from_shape_vec((block.shape[0], block.shape[1]), block.data)
                .map_err(|e| GazeError::Format(e.to_string()))?;
        }
        Ok(model)
    }
}

pub fn write_model<W: Write>(w: W, model: &Model, config: &TrainConfig) -> Result<()> {
    serde_json::to_writer(w, &ModelFile::from_model(model, config))?;
    Ok(())
}

pub fn read_model<R: Read>(r: R) -> Result<(Model, TrainConfig)> {
    let file: ModelFile = serde_json::from_reader(r)?;
    let config = file.hyperparameters.clone();
    Ok((file.into_model()?, config))
}

pub fn save_model(path: &Path, model: &Model, config: &TrainConfig) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_model(&mut w, model, config)?;
    w.flush()?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<(Model, TrainConfig)> {
    read_model(BufReader::new(File::open(path)?))
}
