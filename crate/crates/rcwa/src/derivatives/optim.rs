//! First-order optimizers. Update rules follow the common deep-learning
//! library forms so learning rates carry over between implementations.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

use super::ParamVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Algorithm {
    Momentum,
    Adagrad,
    RmsProp,
    Adam,
    RAdam,
}

impl Algorithm {
    pub const ALL: [Algorithm; 5] = [
        Algorithm::Momentum,
        Algorithm::Adagrad,
        Algorithm::RmsProp,
        Algorithm::Adam,
        Algorithm::RAdam,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Momentum => "momentum",
            Algorithm::Adagrad => "adagrad",
            Algorithm::RmsProp => "rmsprop",
            Algorithm::Adam => "adam",
            Algorithm::RAdam => "radam",
        }
    }

    /// Learning rates used for the spectrum-fitting demonstration.
    pub fn fit_learning_rate(self) -> f64 {
        match self {
            Algorithm::Momentum => 1e2,
            Algorithm::Adagrad => 1.0,
            Algorithm::RmsProp => 1e-1,
            Algorithm::Adam => 1e-1,
            Algorithm::RAdam => 1.0,
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Domain(format!("unknown optimizer '{s}'")))
    }
}

/// Optimizer hyperparameters and accumulators.
///
/// # Notes
///
/// * Momentum: `v ← μ v + g`, `p ← p − lr v`.
/// * Adagrad: `s ← s + g²`, `p ← p − lr g / (√s + ε)`.
/// * RMSProp: `s ← α s + (1 − α) g²`, `p ← p − lr g / (√s + ε)`.
/// * Adam: bias-corrected moments, `p ← p − lr m̂ / (√v̂ + ε)`.
/// * RAdam: Adam with the variance rectification term r_t while the
///   approximated SMA length ρ_t exceeds 4, otherwise `p ← p − lr m̂`.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub algorithm: Algorithm,
    pub lr: f64,
    pub momentum: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub alpha: f64,
    pub eps: f64,
    pub step: u64,
    first: Vec<f64>,
    second: Vec<f64>,
}

impl OptimizerState {
    pub fn new(algorithm: Algorithm, lr: f64, dim: usize) -> Result<Self> {
        if !(lr > 0.0) || !lr.is_finite() {
            return Err(Error::Domain(format!("learning rate must be positive, got {lr}")));
        }
        let eps = if algorithm == Algorithm::Adagrad { 1e-10 } else { 1e-8 };
        Ok(OptimizerState {
            algorithm,
            lr,
            momentum: 0.9,
            beta1: 0.9,
            beta2: 0.999,
            alpha: 0.99,
            eps,
            step: 0,
            first: vec![0.0; dim],
            second: vec![0.0; dim],
        })
    }

    pub fn dim(&self) -> usize {
        self.first.len()
    }

    /// First accumulator (velocity or first moment).
    pub fn first_moment(&self) -> &[f64] {
        &self.first
    }

    /// Second accumulator (squared-gradient sum or average).
    pub fn second_moment(&self) -> &[f64] {
        &self.second
    }

    /// Applies one descent step to `p` and projects it back into its bounds.
    pub fn step(&mut self, p: &mut ParamVector, g: &[f64]) -> Result<()> {
        if g.len() != self.dim() || p.len() != self.dim() {
            return Err(Error::Shape(format!(
                "optimizer of dimension {} given {} parameters and {} gradient entries",
                self.dim(),
                p.len(),
                g.len()
            )));
        }
        self.step += 1;
        let t = self.step as i32;
        let lr = self.lr;
        let eps = self.eps;
        let x = &mut p.values;
        match self.algorithm {
            Algorithm::Momentum => {
                for i in 0..g.len() {
                    self.first[i] = self.momentum * self.first[i] + g[i];
                    x[i] -= lr * self.first[i];
                }
            }
            Algorithm::Adagrad => {
                for i in 0..g.len() {
                    self.second[i] += g[i] * g[i];
                    x[i] -= lr * g[i] / (self.second[i].sqrt() + eps);
                }
            }
            Algorithm::RmsProp => {
                let a = self.alpha;
                for i in 0..g.len() {
                    self.second[i] = a * self.second[i] + (1.0 - a) * g[i] * g[i];
                    x[i] -= lr * g[i] / (self.second[i].sqrt() + eps);
                }
            }
            Algorithm::Adam => {
                let (b1, b2) = (self.beta1, self.beta2);
                let (c1, c2) = (1.0 - b1.powi(t), 1.0 - b2.powi(t));
                for i in 0..g.len() {
                    self.first[i] = b1 * self.first[i] + (1.0 - b1) * g[i];
                    self.second[i] = b2 * self.second[i] + (1.0 - b2) * g[i] * g[i];
                    let m_hat = self.first[i] / c1;
                    let v_hat = self.second[i] / c2;
                    x[i] -= lr * m_hat / (v_hat.sqrt() + eps);
                }
            }
            Algorithm::RAdam => {
                let (b1, b2) = (self.beta1, self.beta2);
                let (c1, c2) = (1.0 - b1.powi(t), 1.0 - b2.powi(t));
                let rho_inf = 2.0 / (1.0 - b2) - 1.0;
                let b2t = b2.powi(t);
                let rho_t = rho_inf - 2.0 * t as f64 * b2t / (1.0 - b2t);
                let rect = (rho_t > 4.0).then(|| {
                    ((rho_t - 4.0) * (rho_t - 2.0) * rho_inf / ((rho_inf - 4.0) * (rho_inf - 2.0) * rho_t)).sqrt()
                });
                for i in 0..g.len() {
                    self.first[i] = b1 * self.first[i] + (1.0 - b1) * g[i];
                    self.second[i] = b2 * self.second[i] + (1.0 - b2) * g[i] * g[i];
                    let m_hat = self.first[i] / c1;
                    x[i] -= match rect {
                        Some(r) => lr * r * m_hat * c2.sqrt() / (self.second[i].sqrt() + eps),
                        None => lr * m_hat,
                    };
                }
            }
        }
        p.project();
        Ok(())
    }
}
