use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{rank, Model, Sample};
use crate::error::{GazeError, Result};

/// Training hyperparameters; serialized with every saved model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without held-out accuracy improvement before stopping.
    pub patience: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 20,
            max_epochs: 100,
            patience: 10,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-7,
            seed: 0,
        }
    }
}

/// Adam with bias correction, one moment pair per parameter block.
#[derive(Debug, Clone)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    step: i32,
    m: Vec<Array2<f64>>,
    v: Vec<Array2<f64>>,
}

impl Adam {
    pub fn new(params: &[Array2<f64>], config: &TrainConfig) -> Self {
        let zeros = || params.iter().map(|p| Array2::zeros(p.raw_dim())).collect();
        Adam {
            lr: config.learning_rate,
            beta1: config.beta1,
            beta2: config.beta2,
            eps: config.epsilon,
            step: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    pub fn update(&mut self, params: &mut [Array2<f64>], grads: &[Array2<f64>]) {
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step);
        let c2 = 1.0 - self.beta2.powi(self.step);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.lr, self.eps);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            ndarray::Zip::from(p)
                .and(g)
                .and(m)
                .and(v)
                .for_each(|p, &g, m, v| {
                    *m = b1 * *m + (1.0 - b1) * g;
                    *v = b2 * *v + (1.0 - b2) * g * g;
                    *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
                });
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub test_loss: f64,
    pub test_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub epochs: Vec<EpochRecord>,
    /// 1-based epoch whose weights were kept.
    pub best_epoch: usize,
    pub best_accuracy: f64,
}

const EVAL_CHUNK: usize = 256;

/// Top-1 accuracy and mean loss over a sample set.
pub fn accuracy(model: &Model, samples: &[Sample<'_>]) -> Result<(f64, f64)> {
    if samples.is_empty() {
        return Err(GazeError::Empty("no samples to evaluate".into()));
    }
    let mut correct = 0usize;
    let mut loss = 0.0;
    for chunk in samples.chunks(EVAL_CHUNK) {
        let windows: Vec<_> = chunk.iter().map(|s| s.window).collect();
        let probs = model.forward(&windows)?;
        for (row, s) in probs.rows().into_iter().zip(chunk) {
            let r = rank(row.as_slice().expect("contiguous"));
            correct += usize::from(r[0] == s.target);
            loss -= row[s.target].max(1e-300).ln();
        }
    }
    let n = samples.len() as f64;
    Ok((correct as f64 / n, loss / n))
}

/// Mini-batch Adam on `train_set` with early stopping on `test_set`
/// accuracy. Returns the weights of the best held-out epoch.
pub fn train(
    mut model: Model,
    train_set: &[Sample<'_>],
    test_set: &[Sample<'_>],
    config: &TrainConfig,
) -> Result<(Model, History)> {
    if train_set.is_empty() || test_set.is_empty() {
        return Err(GazeError::Empty(
            "train and test splits must be non-empty".into(),
        ));
    }
    if config.batch_size == 0 || config.max_epochs == 0 {
        return Err(GazeError::Config(
            "batch size and epochs must be positive".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut adam = Adam::new(model.params(), config);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut best = (f64::NEG_INFINITY, model.clone(), 0usize);
    let mut epochs = Vec::new();
    let mut stale = 0usize;
    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut batch = Vec::with_capacity(config.batch_size);
        for chunk in order.chunks(config.batch_size) {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| train_set[i]));
            let (loss, grads) = model.loss_and_grad(&batch)?;
            loss_sum += loss * chunk.len() as f64;
            adam.update(model.params_mut(), &grads);
        }
        let (test_accuracy, test_loss) = accuracy(&model, test_set)?;
        epochs.push(EpochRecord {
            epoch,
            train_loss: loss_sum / train_set.len() as f64,
            test_loss,
            test_accuracy,
        });
        if test_accuracy > best.0 {
            best = (test_accuracy, model.clone(), epoch);
            stale = 0;
        } else {
            stale += 1;
            if stale >= config.patience {
                break;
            }
        }
    }
    let (best_accuracy, model, best_epoch) = best;
    Ok((
        model,
        History {
            epochs,
            best_epoch,
            best_accuracy,
        },
    ))
}
