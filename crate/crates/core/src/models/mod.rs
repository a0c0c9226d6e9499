//! The two next-frame classifiers, written from scratch on top of `ndarray`
//! matrices: a two-layer LSTM and a single-block transformer encoder. Both
//! expose the same surface through [`Model`].

mod io;
mod lstm;
mod train;
mod transformer;

use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, Axis};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{GazeError, Result};
use crate::types::{FeatureVector, Label, Taxonomy, FEATURES};

pub use io::{load_model, read_model, save_model, write_model, ModelFile};
pub use lstm::{LstmModel, LSTM_HIDDEN};
pub use train::{accuracy, train, Adam, EpochRecord, History, TrainConfig};
pub use transformer::{TransformerModel, FFN_WIDTH, HEADS, HEAD_WIDTH};

/// Frames per input window.
pub const SEQ_LEN: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Architecture {
    Lstm,
    Transformer,
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Architecture::Lstm => "lstm",
            Architecture::Transformer => "transformer",
        })
    }
}

impl FromStr for Architecture {
    type Err = GazeError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lstm" => Ok(Architecture::Lstm),
            "transformer" => Ok(Architecture::Transformer),
            _ => Err(GazeError::validation(
                "architecture",
                format!("unknown architecture `{s}`"),
            )),
        }
    }
}

/// A training or evaluation example: a window and its target label index.
#[derive(Debug, Clone, Copy)]
pub struct Sample<'a> {
    pub window: &'a [FeatureVector],
    pub target: usize,
}

/// Either classifier, with the weights stored as named 2-D blocks.
#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Lstm(LstmModel),
    Transformer(TransformerModel),
}

impl Model {
    /// Fresh model with seeded initialization.
    pub fn new(arch: Architecture, taxonomy: Taxonomy, seed: u64) -> Self {
        match arch {
            Architecture::Lstm => Model::Lstm(LstmModel::new(taxonomy, seed)),
            Architecture::Transformer => Model::Transformer(TransformerModel::new(taxonomy, seed)),
        }
    }

    pub fn architecture(&self) -> Architecture {
        match self {
            Model::Lstm(_) => Architecture::Lstm,
            Model::Transformer(_) => Architecture::Transformer,
        }
    }

    pub fn taxonomy(&self) -> Taxonomy {
        match self {
            Model::Lstm(m) => m.taxonomy,
            Model::Transformer(m) => m.taxonomy,
        }
    }

    pub fn num_labels(&self) -> usize {
        self.taxonomy().size()
    }

    pub fn params(&self) -> &[Array2<f64>] {
        match self {
            Model::Lstm(m) => &m.params,
            Model::Transformer(m) => &m.params,
        }
    }

    pub fn params_mut(&mut self) -> &mut [Array2<f64>] {
        match self {
            Model::Lstm(m) => &mut m.params,
            Model::Transformer(m) => &mut m.params,
        }
    }

    pub fn block_names(&self) -> &'static [&'static str] {
        match self {
            Model::Lstm(_) => lstm::BLOCK_NAMES,
            Model::Transformer(_) => transformer::BLOCK_NAMES,
        }
    }

    /// Exact number of scalar parameters.
    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    /// Class probabilities for each window, one row per window.
    pub fn forward(&self, windows: &[&[FeatureVector]]) -> Result<Array2<f64>> {
        check_windows(windows)?;
        Ok(match self {
            Model::Lstm(m) => m.forward(windows),
            Model::Transformer(m) => m.forward(windows),
        })
    }

    /// Probabilities for a single window.
    pub fn predict(&self, window: &[FeatureVector]) -> Result<Vec<f64>> {
        Ok(self.forward(&[window])?.row(0).to_vec())
    }

    /// Mean cross-entropy over the batch and its gradient for every block.
    pub fn loss_and_grad(&self, batch: &[Sample<'_>]) -> Result<(f64, Vec<Array2<f64>>)> {
        let windows: Vec<&[FeatureVector]> = batch.iter().map(|s| s.window).collect();
        check_windows(&windows)?;
        let targets: Vec<usize> = batch.iter().map(|s| s.target).collect();
        if let Some(&t) = targets.iter().find(|&&t| t >= self.num_labels()) {
            return Err(GazeError::LabelIndex {
                index: t,
                taxonomy: self.taxonomy().name(),
                size: self.num_labels(),
            });
        }
        Ok(match self {
            Model::Lstm(m) => m.loss_and_grad(&windows, &targets),
            Model::Transformer(m) => m.loss_and_grad(&windows, &targets),
        })
    }

    /// Mean cross-entropy only.
    pub fn loss(&self, batch: &[Sample<'_>]) -> Result<f64> {
        let windows: Vec<&[FeatureVector]> = batch.iter().map(|s| s.window).collect();
        let probs = self.forward(&windows)?;
        Ok(cross_entropy(&probs, &batch.iter().map(|s| s.target).collect::<Vec<_>>()).0)
    }

    /// Labels ranked by descending probability; ties go to the lower index.
    pub fn predict_topk(&self, window: &[FeatureVector], k: usize) -> Result<Vec<Label>> {
        let l = self.num_labels();
        if k == 0 || k > l {
            return Err(GazeError::validation(
                "k",
                format!("must lie in 1..={l}, got {k}"),
            ));
        }
        let probs = self.predict(window)?;
        rank(&probs)
            .into_iter()
            .take(k)
            .map(|i| Label::from_index(i, self.taxonomy()))
            .collect()
    }

    /// Sets every weight to zero.
    pub fn zero(&mut self) {
        for p in self.params_mut() {
            p.fill(0.0);
        }
    }
}

/// Indices sorted by descending value; the sort is stable so equal values
/// keep ascending index order.
pub fn rank(probs: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..probs.len()).collect();
    idx.sort_by(|&a, &b| probs[b].total_cmp(&probs[a]));
    idx
}

fn check_windows(windows: &[&[FeatureVector]]) -> Result<()> {
    if windows.is_empty() {
        return Err(GazeError::Empty("no windows given".into()));
    }
    for w in windows {
        if w.len() != SEQ_LEN {
            return Err(GazeError::validation(
                "window",
                format!("expected {SEQ_LEN} frames, got {}", w.len()),
            ));
        }
        for (t, f) in w.iter().enumerate() {
            if let Some(j) = f.0.iter().position(|v| !v.is_finite()) {
                return Err(GazeError::NonFinite(t * FEATURES + j));
            }
        }
    }
    Ok(())
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Row-wise softmax in place.
pub(crate) fn softmax_rows(m: &mut Array2<f64>) {
    for mut row in m.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - max).exp());
        let s = row.sum();
        row.mapv_inplace(|v| v / s);
    }
}

/// Mean cross-entropy and its gradient with respect to the logits.
pub(crate) fn cross_entropy(probs: &Array2<f64>, targets: &[usize]) -> (f64, Array2<f64>) {
    let b = targets.len() as f64;
    let mut loss = 0.0;
    let mut grad = probs.clone();
    for (i, &t) in targets.iter().enumerate() {
        loss -= probs[[i, t]].max(1e-300).ln();
        grad[[i, t]] -= 1.0;
    }
    grad.mapv_inplace(|v| v / b);
    (loss / b, grad)
}

pub(crate) fn sum_rows(m: &Array2<f64>) -> Array2<f64> {
    m.sum_axis(Axis(0)).insert_axis(Axis(0))
}

/// Uniform Glorot initialization.
pub(crate) fn glorot(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-limit..limit))
}

pub(crate) fn uniform(rng: &mut ChaCha8Rng, rows: usize, cols: usize, limit: f64) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-limit..limit))
}

/// Matrix with orthonormal rows (or columns, whichever is shorter), from
/// Gram-Schmidt on a Gaussian draw.
pub(crate) fn orthogonal(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    let (short, long) = (rows.min(cols), rows.max(cols));
    let mut vecs: Vec<Vec<f64>> = Vec::with_capacity(short);
    while vecs.len() < short {
        let mut v: Vec<f64> = (0..long).map(|_| StandardNormal.sample(rng)).collect();
        for u in &vecs {
            let d: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(u).for_each(|(a, b)| *a -= d * b);
        }
        let n = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if n > 1e-8 {
            v.iter_mut().for_each(|a| *a /= n);
            vecs.push(v);
        }
    }
    let mut out = Array2::zeros((rows, cols));
    for (i, v) in vecs.iter().enumerate() {
        for (j, &x) in v.iter().enumerate() {
            if rows <= cols {
                out[[i, j]] = x;
            } else {
                out[[j, i]] = x;
            }
        }
    }
    out
}

/// Expected parameter count for an architecture and label count.
pub fn expected_param_count(arch: Architecture, labels: usize) -> usize {
    match arch {
        Architecture::Lstm => lstm::param_count_for(labels),
        Architecture::Transformer => transformer::param_count_for(labels),
    }
}
