//! Random-walk Metropolis proposals whose scale (and, for vectors, shape)
//! adapts during burn-in only.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dist::standard_normal_vector;

/// Robbins–Monro gain for the n-th adaptation step.
fn gain(n: u64) -> f64 {
    (n as f64 + 1.0).powf(-0.6)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct AcceptanceCount {
    pub accepted: u64,
    pub proposed: u64,
}

impl AcceptanceCount {
    pub fn record(&mut self, accepted: bool) {
        self.proposed += 1;
        self.accepted += accepted as u64;
    }

    pub fn rate(&self) -> f64 {
        if self.proposed == 0 {
            0.0
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }

    pub fn merge(&mut self, other: AcceptanceCount) {
        self.accepted += other.accepted;
        self.proposed += other.proposed;
    }
}

/// Gaussian random walk on a scalar with log-scale adaptation.
#[derive(Debug, Clone)]
pub struct ScalarProposal {
    log_scale: f64,
    target: f64,
    adapted: u64,
    pub count: AcceptanceCount,
}

impl ScalarProposal {
    pub fn new(step: f64, target: f64) -> Self {
        ScalarProposal {
            log_scale: step.ln(),
            target,
            adapted: 0,
            count: AcceptanceCount::default(),
        }
    }

    pub fn step(&self) -> f64 {
        self.log_scale.exp()
    }

    pub fn propose<R: Rng + ?Sized>(&self, x: f64, rng: &mut R) -> f64 {
        x + self.step() * rng.sample::<f64, _>(rand_distr::StandardNormal)
    }

    pub fn record(&mut self, accepted: bool, adapt: bool) {
        self.count.record(accepted);
        if adapt {
            self.log_scale += gain(self.adapted) * (accepted as u8 as f64 - self.target);
            self.adapted += 1;
        }
    }
}

/// Multivariate random walk. The proposal starts as a diagonal Gaussian and
/// switches to the scaled empirical covariance of the burn-in draws once
/// enough have accumulated; a Robbins–Monro factor tunes the overall scale.
#[derive(Debug, Clone)]
pub struct AdaptiveMetropolis {
    dim: usize,
    initial_sd: Vec<f64>,
    log_scale: f64,
    chol: DMatrix<f64>,
    mean: DVector<f64>,
    scatter: DMatrix<f64>,
    seen: u64,
    adapted: u64,
    interval: u64,
    target: f64,
    pub count: AcceptanceCount,
}

impl AdaptiveMetropolis {
    pub fn new(initial_sd: &[f64], target: f64, interval: u64) -> Self {
        let dim = initial_sd.len();
        AdaptiveMetropolis {
            dim,
            initial_sd: initial_sd.to_vec(),
            log_scale: 0.0,
            chol: DMatrix::from_diagonal(&DVector::from_row_slice(initial_sd)),
            mean: DVector::zeros(dim),
            scatter: DMatrix::zeros(dim, dim),
            seen: 0,
            adapted: 0,
            interval: interval.max(1),
            target,
            count: AcceptanceCount::default(),
        }
    }

    pub fn propose<R: Rng + ?Sized>(&self, x: &[f64], rng: &mut R) -> Vec<f64> {
        let step = &self.chol * standard_normal_vector(self.dim, rng) * self.log_scale.exp();
        x.iter().zip(step.iter()).map(|(a, b)| a + b).collect()
    }

    /// Records the outcome of one proposal and, when adapting, folds the
    /// chain's current state into the covariance estimate.
    pub fn record(&mut self, accepted: bool, state: &[f64], adapt: bool) {
        self.count.record(accepted);
        if !adapt {
            return;
        }
        self.log_scale += gain(self.adapted) * (accepted as u8 as f64 - self.target);
        self.adapted += 1;

        let x = DVector::from_row_slice(state);
        self.seen += 1;
        let delta = &x - &self.mean;
        self.mean += &delta / self.seen as f64;
        self.scatter += &delta * (&x - &self.mean).transpose();

        let warm = (20 * self.dim as u64).max(2 * self.interval);
        if self.seen >= warm && self.seen.is_multiple_of(self.interval) {
            let sd2 = 2.38f64.powi(2) / self.dim as f64;
            let mut cov = &self.scatter * (sd2 / (self.seen - 1) as f64);
            for i in 0..self.dim {
                cov[(i, i)] += 1e-6 * self.initial_sd[i].powi(2);
            }
            if let Some(chol) = cov.cholesky() {
                if self.seen == warm {
                    // The scale factor was tuned for the diagonal proposal.
                    self.log_scale = 0.0;
                }
                self.chol = chol.l();
            }
        }
    }
}
