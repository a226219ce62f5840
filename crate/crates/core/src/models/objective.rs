use rand::seq::index;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seeds::SimRng;

/// Local loss `g_n(y) = (1/|D_n|) sum_q l(y; q)` over a client's examples,
/// evaluated on minibatches given by example positions.
pub trait Objective: Sync {
    fn num_params(&self) -> usize;

    fn num_examples(&self) -> usize;

    /// Mean loss over `batch` and its exact gradient, in the parameter layout.
    fn loss_and_grad(&self, params: &[f64], batch: &[usize]) -> Result<(f64, Vec<f64>)>;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClientTrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClientUpdate {
    /// `y0 - y'`.
    pub delta: Vec<f64>,
    /// Mean of the minibatch losses seen during training.
    pub mean_loss: f64,
    pub steps: usize,
}

/// Runs `epochs` passes of minibatch SGD from `y0` (fresh shuffle per epoch,
/// short last batch kept) and returns the model delta `y0 - y'`.
pub fn client_update_model_delta(
    y0: &[f64],
    objective: &dyn Objective,
    cfg: &ClientTrainConfig,
    rng: &mut SimRng,
) -> Result<ClientUpdate> {
    if objective.num_examples() == 0 {
        return Err(Error::EmptyDataset);
    }
    if cfg.epochs == 0 || cfg.batch_size == 0 {
        return Err(Error::BadConfig("client epochs and batch size must be positive".into()));
    }
    if !(cfg.lr >= 0.0 && cfg.lr.is_finite()) {
        return Err(Error::BadConfig(format!("client learning rate {} is invalid", cfg.lr)));
    }
    if y0.len() != objective.num_params() {
        return Err(Error::ShapeMismatch(format!(
            "received {} parameters, objective expects {}",
            y0.len(),
            objective.num_params()
        )));
    }

    let mut y = y0.to_vec();
    let mut order: Vec<usize> = (0..objective.num_examples()).collect();
    let mut loss_sum = 0.0;
    let mut steps = 0;
    for _ in 0..cfg.epochs {
        order.shuffle(rng);
        for batch in order.chunks(cfg.batch_size) {
            let (loss, grad) = objective.loss_and_grad(&y, batch)?;
            for (p, g) in y.iter_mut().zip(&grad) {
                *p -= cfg.lr * g;
            }
            loss_sum += loss;
            steps += 1;
        }
    }
    let delta = y0.iter().zip(&y).map(|(a, b)| a - b).collect();
    Ok(ClientUpdate {
        delta,
        mean_loss: loss_sum / steps as f64,
        steps,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckConfig {
    /// Central-difference step.
    pub step: f64,
    /// Coordinates to probe; all of them when the model is smaller.
    pub coords: usize,
    pub tolerance: f64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            step: 1e-6,
            coords: 100,
            tolerance: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    /// `|analytic - numeric| / max(|analytic|, |numeric|, 1e-3)`, maximised
    /// over the probed coordinates.
    pub max_rel_error: f64,
    pub worst_coord: usize,
    pub coords_checked: usize,
    pub passed: bool,
}

/// Compares an analytic gradient against central finite differences of
/// `loss` at randomly chosen coordinates.
pub fn grad_check(
    loss: impl Fn(&[f64]) -> f64,
    analytic: &[f64],
    params: &[f64],
    cfg: &GradCheckConfig,
    rng: &mut SimRng,
) -> GradCheckReport {
    let n = params.len();
    let coords: Vec<usize> = if cfg.coords >= n {
        (0..n).collect()
    } else {
        index::sample(rng, n, cfg.coords).into_vec()
    };
    let mut probe = params.to_vec();
    let mut worst = (0.0f64, 0usize);
    for &i in &coords {
        let orig = probe[i];
        probe[i] = orig + cfg.step;
        let up = loss(&probe);
        probe[i] = orig - cfg.step;
        let down = loss(&probe);
        probe[i] = orig;
        let numeric = (up - down) / (2.0 * cfg.step);
        let a = analytic[i];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-3);
        if rel > worst.0 || rel.is_nan() {
            worst = (rel, i);
        }
    }
    GradCheckReport {
        max_rel_error: worst.0,
        worst_coord: worst.1,
        coords_checked: coords.len(),
        passed: worst.0 <= cfg.tolerance,
    }
}
