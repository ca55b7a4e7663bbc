//! Mini-batch training with Adam, periodic validation checks and early
//! stopping. Deterministic given the seed: batch order, initialization
//! and every update are driven by seeded generators.

use super::rnn::{loss_and_grad, rnn_forward, CellKind, RnnParams};
use super::{EnsembleError, FeatureSequence};
use crate::seed::derive_seed;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    /// Validation loss is evaluated every this many iterations.
    pub val_check_period: usize,
    /// Consecutive non-improving checks tolerated before stopping.
    pub patience: usize,
    /// A check only counts as an improvement when validation loss drops
    /// by more than this.
    pub min_delta: f64,
    pub max_iters: usize,
    pub seed: u64,
    // Adam moments.
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            batch_size: 32,
            val_check_period: 30,
            patience: 5,
            min_delta: 1e-6,
            max_iters: 5000,
            seed: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// One periodic validation check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValCheck {
    pub iteration: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    /// Parameters at the best validation check.
    pub params: RnnParams,
    pub checks: Vec<ValCheck>,
    pub iterations: usize,
    pub stopped_early: bool,
    pub best_val_loss: f64,
}

fn mean_loss(params: &RnnParams, data: &[&FeatureSequence]) -> f64 {
    let mut scratch = vec![0.0; params.param_count()];
    let total: f64 = data
        .iter()
        .map(|seq| {
            scratch.iter_mut().for_each(|g| *g = 0.0);
            loss_and_grad(params, &seq.steps, seq.label, &mut scratch)
        })
        .sum();
    total / data.len() as f64
}

/// Trains one recurrent classifier with mini-batch cross entropy over full
/// sequences. Returns the parameters of the best validation check.
pub fn train_rnn(
    train: &[FeatureSequence],
    val: &[FeatureSequence],
    kind: CellKind,
    hidden: usize,
    config: &TrainConfig,
) -> Result<TrainReport, EnsembleError> {
    if train.is_empty() || val.is_empty() {
        return Err(EnsembleError::EmptySequence);
    }
    let lives = train.iter().filter(|s| s.label == 1).count();
    if lives == 0 || lives == train.len() {
        return Err(EnsembleError::OneClassTraining);
    }
    let dim = train[0].dim;
    for seq in train.iter().chain(val) {
        if seq.dim != dim {
            return Err(EnsembleError::DimensionMismatch { expected: dim, got: seq.dim });
        }
    }

    let mut params = RnnParams::init(kind, dim, hidden, derive_seed(config.seed, 0));
    let mut order_rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, 1));
    let n_params = params.param_count();
    let mut grad = vec![0.0; n_params];
    let mut m = vec![0.0; n_params];
    let mut v = vec![0.0; n_params];

    let train_refs: Vec<&FeatureSequence> = train.iter().collect();
    let val_refs: Vec<&FeatureSequence> = val.iter().collect();

    // Initial check so "best parameters" are always defined.
    let mut checks = vec![ValCheck {
        iteration: 0,
        train_loss: mean_loss(&params, &train_refs),
        val_loss: mean_loss(&params, &val_refs),
    }];
    let mut best_val = checks[0].val_loss;
    let mut best_params = params.clone();
    let mut bad_checks = 0usize;
    let mut stopped_early = false;

    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut cursor = order.len(); // force an initial shuffle
    let mut iteration = 0usize;

    'training: while iteration < config.max_iters {
        if cursor >= order.len() {
            order.shuffle(&mut order_rng);
            cursor = 0;
        }
        let batch: Vec<&FeatureSequence> = order[cursor..(cursor + config.batch_size).min(order.len())]
            .iter()
            .map(|&i| &train[i])
            .collect();
        cursor += batch.len();
        iteration += 1;

        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut batch_loss = 0.0;
        for seq in &batch {
            batch_loss += loss_and_grad(&params, &seq.steps, seq.label, &mut grad);
        }
        let scale = 1.0 / batch.len() as f64;
        batch_loss *= scale;
        if !batch_loss.is_finite() {
            return Err(EnsembleError::NanLoss { iteration });
        }

        // Adam update with bias correction.
        let t = iteration as f64;
        let lr_t = config.learning_rate * (1.0 - config.beta2.powf(t)).sqrt()
            / (1.0 - config.beta1.powf(t));
        let theta = params.theta_mut();
        for j in 0..n_params {
            let g = grad[j] * scale;
            m[j] = config.beta1 * m[j] + (1.0 - config.beta1) * g;
            v[j] = config.beta2 * v[j] + (1.0 - config.beta2) * g * g;
            theta[j] -= lr_t * m[j] / (v[j].sqrt() + config.epsilon);
        }

        if iteration % config.val_check_period == 0 {
            let check = ValCheck {
                iteration,
                train_loss: mean_loss(&params, &train_refs),
                val_loss: mean_loss(&params, &val_refs),
            };
            checks.push(check);
            if !check.val_loss.is_finite() || !check.train_loss.is_finite() {
                return Err(EnsembleError::NanLoss { iteration });
            }
            if check.val_loss < best_val - config.min_delta {
                best_val = check.val_loss;
                best_params = params.clone();
                bad_checks = 0;
            } else {
                bad_checks += 1;
                if bad_checks >= config.patience {
                    stopped_early = true;
                    break 'training;
                }
            }
        }
    }

    Ok(TrainReport {
        params: best_params,
        checks,
        iterations: iteration,
        stopped_early,
        best_val_loss: best_val,
    })
}

/// Fraction of sequences whose live-class probability lands on the correct
/// side of 0.5.
pub fn accuracy(params: &RnnParams, data: &[FeatureSequence]) -> f64 {
    let correct = data
        .iter()
        .filter(|seq| {
            let p = rnn_forward(params, &seq.steps).expect("consistent dims");
            (p[1] >= 0.5) == (seq.label == 1)
        })
        .count();
    correct as f64 / data.len() as f64
}
