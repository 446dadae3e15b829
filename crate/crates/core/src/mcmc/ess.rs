//! Elliptical slice sampling for vectors with a Gaussian prior.
//!
//! When the likelihood dominates the prior the plain ellipse is far too wide
//! and most proposals are rejected. [`surrogate_elliptical_slice`] instead
//! draws the ellipse from a Gaussian fitted to earlier states and moves the
//! prior-to-surrogate density ratio into the likelihood, which leaves the
//! same target invariant.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::dist::{cholesky_jittered, standard_normal_vector};
use crate::error::Result;
use crate::spatial::{build_cov, Site, SpatialField};

/// One elliptical slice transition targeting N(x; mean, L Lᵀ)·exp(loglik(x)).
///
/// `x_ll` must equal `loglik(x)`. Returns the new state and its log-likelihood.
pub fn elliptical_slice<R, F>(
    x: &[f64],
    x_ll: f64,
    mean: &[f64],
    chol_l: &DMatrix<f64>,
    mut loglik: F,
    rng: &mut R,
) -> (Vec<f64>, f64)
where
    R: Rng + ?Sized,
    F: FnMut(&[f64]) -> f64,
{
    let n = x.len();
    let nu = chol_l * standard_normal_vector(n, rng);
    let u: f64 = 1.0 - rng.random::<f64>();
    let log_y = x_ll + u.ln();
    let mut theta = rng.random::<f64>() * std::f64::consts::TAU;
    let (mut lo, mut hi) = (theta - std::f64::consts::TAU, theta);
    let mut proposal = vec![0.0; n];
    loop {
        let (s, c) = theta.sin_cos();
        for i in 0..n {
            proposal[i] = mean[i] + (x[i] - mean[i]) * c + nu[i] * s;
        }
        let ll = loglik(&proposal);
        if ll > log_y {
            return (proposal, ll);
        }
        if theta < 0.0 {
            lo = theta;
        } else {
            hi = theta;
        }
        // The bracket always contains θ = 0, i.e. the current state.
        if hi - lo < 1e-12 {
            return (x.to_vec(), x_ll);
        }
        theta = lo + rng.random::<f64>() * (hi - lo);
    }
}

/// Elliptical slice update of a spatial field's values under its GP prior
/// at `sites`. Returns the updated field and its log-likelihood.
pub fn update_gp_field<R, F>(
    field: &SpatialField,
    sites: &[Site],
    current_ll: f64,
    loglik: F,
    rng: &mut R,
) -> Result<(SpatialField, f64)>
where
    R: Rng + ?Sized,
    F: FnMut(&[f64]) -> f64,
{
    let (chol, _) = cholesky_jittered(&build_cov(sites, &field.hyper))?;
    let mean = vec![field.hyper.mean; sites.len()];
    let (values, ll) = elliptical_slice(&field.values, current_ll, &mean, &chol.l(), loglik, rng);
    Ok((
        SpatialField {
            values,
            ..field.clone()
        },
        ll,
    ))
}

/// −½ (x − m)ᵀ (L Lᵀ)⁻¹ (x − m).
pub fn gaussian_quad(x: &[f64], mean: &[f64], chol_l: &DMatrix<f64>) -> f64 {
    let d = DVector::from_iterator(x.len(), x.iter().zip(mean).map(|(a, b)| a - b));
    let z = chol_l
        .solve_lower_triangular(&d)
        .expect("Cholesky factor has a positive diagonal");
    -0.5 * z.norm_squared()
}

/// Gaussian N(mean, L Lᵀ) standing in for the prior as the slice ellipse.
#[derive(Debug, Clone, PartialEq)]
pub struct Surrogate {
    pub mean: Vec<f64>,
    pub chol_l: DMatrix<f64>,
}

/// One slice transition targeting N(x; prior_mean, P Pᵀ)·exp(loglik(x)) with
/// the ellipse taken from `surrogate`. `x_ll` and the returned value are
/// plain `loglik` values.
pub fn surrogate_elliptical_slice<R, F>(
    x: &[f64],
    x_ll: f64,
    prior_mean: &[f64],
    prior_chol: &DMatrix<f64>,
    surrogate: &Surrogate,
    mut loglik: F,
    rng: &mut R,
) -> (Vec<f64>, f64)
where
    R: Rng + ?Sized,
    F: FnMut(&[f64]) -> f64,
{
    let correction = |v: &[f64]| {
        gaussian_quad(v, prior_mean, prior_chol) - gaussian_quad(v, &surrogate.mean, &surrogate.chol_l)
    };
    let mut last = x_ll;
    let (next, _) = elliptical_slice(
        x,
        x_ll + correction(x),
        &surrogate.mean,
        &surrogate.chol_l,
        |v| {
            last = loglik(v);
            last + correction(v)
        },
        rng,
    );
    // A collapsed bracket hands back x itself; otherwise the accepted point
    // was the last one evaluated.
    let ll = if next == x { x_ll } else { last };
    (next, ll)
}

/// Moment fit over a sliding window of recent states. Refits every
/// `interval` observations once the window is full; observations are only
/// taken while adapting, so the surrogate is fixed after burn-in.
#[derive(Debug, Clone)]
pub struct SurrogateFit {
    window: VecDeque<Vec<f64>>,
    capacity: usize,
    interval: u64,
    seen: u64,
    /// Variance inflation applied to the fitted covariance.
    inflation: f64,
    pub current: Option<Surrogate>,
}

impl SurrogateFit {
    pub fn new(dim: usize, interval: u64) -> Self {
        let interval = interval.max(1);
        SurrogateFit {
            window: VecDeque::new(),
            capacity: (20 * dim).max(2 * interval as usize),
            interval,
            seen: 0,
            inflation: 2.0,
            current: None,
        }
    }

    pub fn observe(&mut self, x: &[f64], adapt: bool) {
        if !adapt {
            return;
        }
        if self.window.len() == self.capacity {
            self.window.pop_front();
        }
        self.window.push_back(x.to_vec());
        self.seen += 1;
        if self.seen.is_multiple_of(self.interval) && self.window.len() == self.capacity {
            self.refit();
        }
    }

    fn refit(&mut self) {
        let n = self.window.len() as f64;
        let dim = self.window[0].len();
        let mut mean = vec![0.0; dim];
        for x in &self.window {
            for (m, v) in mean.iter_mut().zip(x) {
                *m += v / n;
            }
        }
        let mut cov = DMatrix::zeros(dim, dim);
        for x in &self.window {
            let d = DVector::from_iterator(dim, x.iter().zip(&mean).map(|(a, b)| a - b));
            cov += &d * d.transpose();
        }
        cov *= self.inflation / (n - 1.0);
        // A window stuck at one point carries no scale information.
        if (0..dim).any(|i| !(cov[(i, i)] > 0.0)) {
            return;
        }
        if let Ok((chol, _)) = cholesky_jittered(&cov) {
            self.current = Some(Surrogate { mean, chol_l: chol.l() });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spatial::{build_cov, FieldRole, GpHyper};
    use nalgebra::DVector;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sites() -> Vec<Site> {
        vec![Site::new(0.0, 40.0, 0.0), Site::new(1.5, 40.5, 0.0), Site::new(-0.5, 42.0, 0.0)]
    }

    fn field(hyper: GpHyper) -> SpatialField {
        SpatialField::constant(FieldRole::InterceptBelow, 3, hyper)
    }

    #[test]
    fn conjugate_gaussian_posterior() {
        let hyper = GpHyper::with_effective_range(1.5, 400.0, 0.0);
        let s = sites();
        let k = build_cov(&s, &hyper);
        let obs = [0.8, -0.4, 1.1];
        let noise = [0.5, 0.3, 0.8];
        let loglik = |f: &[f64]| -> f64 {
            (0..3).map(|i| -0.5 * (obs[i] - f[i]).powi(2) / noise[i]).sum()
        };
        // Posterior: (K⁻¹ + N⁻¹)⁻¹, mean = Σ N⁻¹ y.
        let n_inv = DMatrix::from_diagonal(&DVector::from_iterator(3, noise.iter().map(|v| 1.0 / v)));
        let post_cov = (k.clone().try_inverse().unwrap() + &n_inv).try_inverse().unwrap();
        let post_mean = &post_cov * (&n_inv * DVector::from_row_slice(&obs));

        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut f = field(hyper);
        let mut ll = loglik(&f.values);
        let n = 100_000;
        let mut sum = DVector::zeros(3);
        let mut outer = DMatrix::zeros(3, 3);
        for _ in 0..n {
            let (nf, nll) = update_gp_field(&f, &s, ll, loglik, &mut rng).unwrap();
            f = nf;
            ll = nll;
            let v = DVector::from_row_slice(&f.values);
            sum += &v;
            outer += &v * v.transpose();
        }
        let mean = sum / n as f64;
        let cov = outer / n as f64 - &mean * mean.transpose();
        for i in 0..3 {
            // 2% of the posterior scale of the margin.
            let tol = 0.02 * post_cov[(i, i)].sqrt().max(post_mean[i].abs());
            assert!((mean[i] - post_mean[i]).abs() < tol, "mean {i}: {} vs {}", mean[i], post_mean[i]);
            for j in 0..3 {
                let scale = (post_cov[(i, i)] * post_cov[(j, j)]).sqrt();
                assert!((cov[(i, j)] - post_cov[(i, j)]).abs() < 0.02 * scale,
                    "cov {i}{j}: {} vs {}", cov[(i, j)], post_cov[(i, j)]);
            }
        }
    }

    #[test]
    fn surrogate_slice_keeps_conjugate_posterior() {
        let hyper = GpHyper::with_effective_range(1.5, 400.0, 0.0);
        let s = sites();
        let k = build_cov(&s, &hyper);
        let prior_chol = k.clone().cholesky().unwrap().l();
        let obs = [0.8, -0.4, 1.1];
        let noise = [0.05, 0.03, 0.08];
        let loglik = |f: &[f64]| -> f64 {
            (0..3).map(|i| -0.5 * (obs[i] - f[i]).powi(2) / noise[i]).sum()
        };
        let n_inv = DMatrix::from_diagonal(&DVector::from_iterator(3, noise.iter().map(|v| 1.0 / v)));
        let post_cov = (k.try_inverse().unwrap() + &n_inv).try_inverse().unwrap();
        let post_mean = &post_cov * (&n_inv * DVector::from_row_slice(&obs));
        // Deliberately off: shifted mean, inflated and rotated-free covariance.
        let surrogate = Surrogate {
            mean: post_mean.iter().map(|m| m + 0.1).collect(),
            chol_l: (&post_cov * 3.0).cholesky().unwrap().l(),
        };

        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let mut f = vec![0.0; 3];
        let mut ll = loglik(&f);
        let n = 100_000;
        let mut sum = DVector::zeros(3);
        let mut outer = DMatrix::zeros(3, 3);
        for _ in 0..n {
            (f, ll) = surrogate_elliptical_slice(&f, ll, &[0.0; 3], &prior_chol, &surrogate, loglik, &mut rng);
            assert_eq!(ll, loglik(&f));
            let v = DVector::from_row_slice(&f);
            sum += &v;
            outer += &v * v.transpose();
        }
        let mean = sum / n as f64;
        let cov = outer / n as f64 - &mean * mean.transpose();
        for i in 0..3 {
            let tol = 0.02 * post_cov[(i, i)].sqrt().max(post_mean[i].abs());
            assert!((mean[i] - post_mean[i]).abs() < tol, "mean {i}: {} vs {}", mean[i], post_mean[i]);
            for j in 0..3 {
                let scale = (post_cov[(i, i)] * post_cov[(j, j)]).sqrt();
                assert!((cov[(i, j)] - post_cov[(i, j)]).abs() < 0.02 * scale,
                    "cov {i}{j}: {} vs {}", cov[(i, j)], post_cov[(i, j)]);
            }
        }
    }

    #[test]
    fn surrogate_fit_waits_for_full_window() {
        let mut fit = SurrogateFit::new(2, 10);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for i in 0..39 {
            let x = [rng.random::<f64>(), 3.0 + rng.random::<f64>()];
            fit.observe(&x, true);
            assert!(fit.current.is_none(), "fitted after {i}");
        }
        fit.observe(&[0.5, 3.5], true);
        let s = fit.current.clone().unwrap();
        assert!((s.mean[0] - 0.5).abs() < 0.15 && (s.mean[1] - 3.5).abs() < 0.15);
        fit.observe(&[100.0, 100.0], false);
        for _ in 0..100 {
            fit.observe(&[100.0, 100.0], false);
        }
        assert_eq!(fit.current, Some(s));
    }

    #[test]
    fn flat_likelihood_recovers_prior() {
        let hyper = GpHyper::with_effective_range(2.0, 400.0, 0.5);
        let s = sites();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut f = field(hyper);
        let mut margins = vec![Vec::new(); 3];
        for i in 0..20_000 {
            f = update_gp_field(&f, &s, 0.0, |_| 0.0, &mut rng).unwrap().0;
            assert!(f.values.iter().all(|v| v.is_finite()));
            if i % 10 == 0 {
                for (m, v) in margins.iter_mut().zip(&f.values) {
                    m.push(*v);
                }
            }
        }
        for m in margins.iter_mut() {
            m.sort_by(f64::total_cmp);
            let n = m.len() as f64;
            let d = m
                .iter()
                .enumerate()
                .map(|(i, x)| {
                    let c = crate::dist::norm_cdf((x - 0.5) / 2f64.sqrt());
                    (c - i as f64 / n).abs().max(((i + 1) as f64 / n - c).abs())
                })
                .fold(0.0, f64::max);
            assert!(d < 1.628 / n.sqrt(), "KS {d}");
        }
    }
}
