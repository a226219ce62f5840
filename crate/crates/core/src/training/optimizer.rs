use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};

/// First-order server update rule; `u` is treated as a gradient.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OptimizerKind {
    Sgd,
    Adagrad {
        #[serde(default = "default_tau")]
        tau: f64,
    },
    Adam {
        #[serde(default = "default_beta1")]
        beta1: f64,
        #[serde(default = "default_beta2")]
        beta2: f64,
        #[serde(default = "default_tau")]
        tau: f64,
    },
}

pub fn default_tau() -> f64 {
    1e-7
}

pub fn default_beta1() -> f64 {
    0.9
}

pub fn default_beta2() -> f64 {
    0.999
}

impl OptimizerKind {
    pub fn adagrad() -> Self {
        OptimizerKind::Adagrad { tau: default_tau() }
    }

    pub fn adam() -> Self {
        OptimizerKind::Adam {
            beta1: default_beta1(),
            beta2: default_beta2(),
            tau: default_tau(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            OptimizerKind::Sgd => true,
            OptimizerKind::Adagrad { tau } => tau > 0.0,
            OptimizerKind::Adam { beta1, beta2, tau } => {
                tau > 0.0 && (0.0..1.0).contains(&beta1) && (0.0..1.0).contains(&beta2)
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::BadConfig(format!("invalid optimizer settings {self:?}")))
        }
    }
}

/// Server optimizer with its state. Owned by the single server copy.
#[derive(Debug, Clone, PartialEq)]
pub struct ServerOptimizer {
    kind: OptimizerKind,
    lr: f64,
    /// Adagrad accumulator or Adam second moment.
    v: Vec<f64>,
    /// Adam first moment.
    mom: Vec<f64>,
    steps: u64,
}

impl ServerOptimizer {
    pub fn new(kind: OptimizerKind, lr: f64, len: usize) -> Result<Self> {
        kind.validate()?;
        if !(lr >= 0.0 && lr.is_finite()) {
            return Err(Error::BadConfig(format!("server learning rate {lr} is invalid")));
        }
        let adaptive = !matches!(kind, OptimizerKind::Sgd);
        Ok(ServerOptimizer {
            kind,
            lr,
            v: if adaptive { vec![0.0; len] } else { Vec::new() },
            mom: if matches!(kind, OptimizerKind::Adam { .. }) {
                vec![0.0; len]
            } else {
                Vec::new()
            },
            steps: 0,
        })
    }

    pub fn kind(&self) -> OptimizerKind {
        self.kind
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Adagrad accumulator or Adam second moment; empty for SGD.
    pub fn second_moment(&self) -> &[f64] {
        &self.v
    }

    pub fn first_moment(&self) -> &[f64] {
        &self.mom
    }

    /// `x <- ServerUpdate(x, u)` in place.
    pub fn update(&mut self, x: &mut [f64], u: &[f64]) -> Result<()> {
        if x.len() != u.len() {
            return Err(shape_err(format!("model has {} scalars, update {}", x.len(), u.len())));
        }
        if !self.v.is_empty() && self.v.len() != x.len() {
            return Err(shape_err(format!(
                "optimizer state sized {}, model {}",
                self.v.len(),
                x.len()
            )));
        }
        self.steps += 1;
        let lr = self.lr;
        match self.kind {
            OptimizerKind::Sgd => {
                for (xi, ui) in x.iter_mut().zip(u) {
                    *xi -= lr * ui;
                }
            }
            OptimizerKind::Adagrad { tau } => {
                for ((xi, ui), vi) in x.iter_mut().zip(u).zip(self.v.iter_mut()) {
                    *vi += ui * ui;
                    *xi -= lr * ui / (vi.sqrt() + tau);
                }
            }
            OptimizerKind::Adam { beta1, beta2, tau } => {
                let t = self.steps as i32;
                let c1 = 1.0 - beta1.powi(t);
                let c2 = 1.0 - beta2.powi(t);
                for (((xi, ui), vi), mi) in x.iter_mut().zip(u).zip(self.v.iter_mut()).zip(self.mom.iter_mut()) {
                    *mi = beta1 * *mi + (1.0 - beta1) * ui;
                    *vi = beta2 * *vi + (1.0 - beta2) * ui * ui;
                    let m_hat = *mi / c1;
                    let v_hat = *vi / c2;
                    *xi -= lr * m_hat / (v_hat.sqrt() + tau);
                }
            }
        }
        Ok(())
    }
}
