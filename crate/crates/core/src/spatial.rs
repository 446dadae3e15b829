//! Exponential-covariance Gaussian-process fields over station sets and
//! conditional (kriging) draws at new sites.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dist::{cholesky_jittered, standard_normal_vector};
use crate::error::Result;

pub const EARTH_RADIUS_KM: f64 = 6371.0;

/// Effective range of every field, in km.
pub const DEFAULT_EFFECTIVE_RANGE_KM: f64 = 400.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Site {
    pub lon: f64,
    pub lat: f64,
    /// Meters; carried for the mean structure, not used in distances.
    pub elevation: f64,
}

impl Site {
    pub fn new(lon: f64, lat: f64, elevation: f64) -> Self {
        Site { lon, lat, elevation }
    }
}

/// Haversine great-circle distance.
pub fn distance_km(a: &Site, b: &Site) -> f64 {
    let (la1, la2) = (a.lat.to_radians(), b.lat.to_radians());
    let dlat = la2 - la1;
    let dlon = (b.lon - a.lon).to_radians();
    let h = (dlat / 2.0).sin().powi(2) + la1.cos() * la2.cos() * (dlon / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * h.sqrt().min(1.0).asin()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpHyper {
    /// τ².
    pub variance: f64,
    /// Per km.
    pub decay: f64,
    pub mean: f64,
}

impl GpHyper {
    /// Correlation e⁻³ at `range_km`.
    pub fn with_effective_range(variance: f64, range_km: f64, mean: f64) -> Self {
        GpHyper {
            variance,
            decay: decay_for_range(range_km),
            mean,
        }
    }
}

pub fn decay_for_range(range_km: f64) -> f64 {
    3.0 / range_km
}

pub fn exp_cov(d: f64, hyper: &GpHyper) -> f64 {
    hyper.variance * (-hyper.decay * d).exp()
}

pub fn build_corr(sites: &[Site], decay: f64) -> DMatrix<f64> {
    let n = sites.len();
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        m[(i, i)] = 1.0;
        for j in 0..i {
            let c = (-decay * distance_km(&sites[i], &sites[j])).exp();
            m[(i, j)] = c;
            m[(j, i)] = c;
        }
    }
    m
}

pub fn build_cov(sites: &[Site], hyper: &GpHyper) -> DMatrix<f64> {
    build_corr(sites, hyper.decay) * hyper.variance
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FieldRole {
    InterceptBelow,
    InterceptAbove,
    LogVarianceBelow,
    LogVarianceAbove,
    Transition,
}

impl FieldRole {
    pub const ALL: [FieldRole; 5] = [
        FieldRole::InterceptBelow,
        FieldRole::InterceptAbove,
        FieldRole::LogVarianceBelow,
        FieldRole::LogVarianceAbove,
        FieldRole::Transition,
    ];

    pub fn label(self) -> &'static str {
        match self {
            FieldRole::InterceptBelow => "intercept_below",
            FieldRole::InterceptAbove => "intercept_above",
            FieldRole::LogVarianceBelow => "logvar_below",
            FieldRole::LogVarianceAbove => "logvar_above",
            FieldRole::Transition => "transition",
        }
    }
}

/// Values of one GP effect at the observed sites plus its hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpatialField {
    pub role: FieldRole,
    pub values: Vec<f64>,
    pub hyper: GpHyper,
}

impl SpatialField {
    pub fn constant(role: FieldRole, n_sites: usize, hyper: GpHyper) -> Self {
        SpatialField {
            role,
            values: vec![hyper.mean; n_sites],
            hyper,
        }
    }
}

/// Mean and covariance of the field at `new_sites` given its values at
/// `observed`.
pub fn krige_moments(
    field: &SpatialField,
    observed: &[Site],
    new_sites: &[Site],
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let h = &field.hyper;
    let prior_cov = build_cov(new_sites, h);
    let prior_mean = DVector::from_element(new_sites.len(), h.mean);
    if observed.is_empty() {
        return Ok((prior_mean, prior_cov));
    }
    debug_assert_eq!(observed.len(), field.values.len());
    let (chol, _) = cholesky_jittered(&build_cov(observed, h))?;
    let cross = DMatrix::from_fn(new_sites.len(), observed.len(), |i, j| {
        exp_cov(distance_km(&new_sites[i], &observed[j]), h)
    });
    let centered = DVector::from_iterator(
        observed.len(),
        field.values.iter().map(|v| v - h.mean),
    );
    let mean = prior_mean + &cross * chol.solve(&centered);
    let gain = chol.solve(&cross.transpose());
    let mut cov = prior_cov - &cross * gain;
    cov = (&cov + cov.transpose()) * 0.5;
    Ok((mean, cov))
}

/// One draw of the field at `new_sites` from its conditional Gaussian.
///
/// The conditional covariance is factored by eigendecomposition with
/// negative eigenvalues clamped at zero, so a site coincident with an
/// observed one reproduces the observed value up to rounding.
pub fn krige<R: Rng + ?Sized>(
    field: &SpatialField,
    observed: &[Site],
    new_sites: &[Site],
    rng: &mut R,
) -> Result<Vec<f64>> {
    let (mean, cov) = krige_moments(field, observed, new_sites)?;
    let eig = SymmetricEigen::new(cov);
    let z = standard_normal_vector(new_sites.len(), rng);
    let scaled = DVector::from_iterator(
        z.len(),
        z.iter()
            .zip(eig.eigenvalues.iter())
            .map(|(z, l)| z * l.max(0.0).sqrt()),
    );
    let draw = mean + eig.eigenvectors * scaled;
    Ok(draw.iter().copied().collect())
}
