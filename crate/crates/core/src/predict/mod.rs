//! Posterior-predictive simulation, one-day-ahead exceedance probabilities,
//! validation error rates and EHE summaries.

pub mod scenario;
pub mod simulate;
pub mod summary;
pub mod validation;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mcmc::{BaselineChain, TwoStateChain};
use crate::model::{ModelLayout, ParameterState, SiteParams, TransitionParams};
use crate::series::DayContext;
use crate::spatial::{krige, FieldRole, Site, SpatialField};

pub use simulate::{simulate_dataset, simulate_trajectory, PredictiveSeries, SimulationSettings};
pub use summary::{summarize_ehe, summarize_trajectories, Band, EheSummary, SummaryConfig};
pub use validation::{
    baseline_probabilities, error_rates, fit_baseline_and_compare, score_held_out, two_state_probabilities,
    ErrorRates, EvaluationWindow, RateCell, ValidationRun,
};

/// Independent deterministic random stream `stream` under `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Where to predict: a fitted site, or a new location with a user-supplied
/// threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SiteTarget {
    Observed(usize),
    New { site: Site, q: f64 },
}

fn krige_one(field: &SpatialField, layout: &ModelLayout, site: &Site, rng: &mut ChaCha8Rng) -> Result<f64> {
    Ok(krige(field, &layout.sites, std::slice::from_ref(site), rng)?[0])
}

/// Field values and covariates of `target` under each draw. New sites get a
/// fresh kriging draw per posterior draw, on stream (seed, draw index).
pub fn resolve_sites(chain: &TwoStateChain, target: &SiteTarget, seed: u64) -> Result<Vec<SiteParams>> {
    let layout = &chain.layout;
    match *target {
        SiteTarget::Observed(s) => {
            if s >= layout.n_sites() {
                return Err(Error::InvalidParameters(format!("site index {s} out of range")));
            }
            Ok(chain
                .draws
                .iter()
                .map(|d| d.site_params(s, layout.covariates[s], layout.thresholds[s]))
                .collect())
        }
        SiteTarget::New { site, q } => {
            let covariates = layout.scaling.covariates(site.elevation, site.lat);
            chain
                .draws
                .par_iter()
                .enumerate()
                .map(|(i, d)| {
                    let mut rng = stream_rng(seed, i as u64);
                    let mut fields = [0.0; 5];
                    for (k, role) in FieldRole::ALL.iter().enumerate() {
                        fields[k] = krige_one(d.field(*role), layout, &site, &mut rng)?;
                    }
                    Ok(SiteParams { q, covariates, fields })
                })
                .collect()
        }
    }
}

/// Baseline quantities at one site under one draw.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselineSite {
    pub q: f64,
    /// β₀ + β₀(s) + β₁ elev(s) + β₂ lat(s).
    pub level: f64,
    /// Squared scale of the t errors.
    pub variance: f64,
}

pub fn resolve_baseline_sites(chain: &BaselineChain, target: &SiteTarget, seed: u64) -> Result<Vec<BaselineSite>> {
    let layout = &chain.layout;
    match *target {
        SiteTarget::Observed(s) => {
            if s >= layout.n_sites() {
                return Err(Error::InvalidParameters(format!("site index {s} out of range")));
            }
            Ok(chain
                .draws
                .iter()
                .map(|d| BaselineSite {
                    q: layout.thresholds[s],
                    level: d.emission.site_level(s, &layout.covariates[s]),
                    variance: d.emission.log_variance_field.values[s].exp(),
                })
                .collect())
        }
        SiteTarget::New { site, q } => {
            let c = layout.scaling.covariates(site.elevation, site.lat);
            chain
                .draws
                .par_iter()
                .enumerate()
                .map(|(i, d)| {
                    let mut rng = stream_rng(seed, i as u64);
                    let e = &d.emission;
                    let local = krige_one(&e.intercept_field, layout, &site, &mut rng)?;
                    let logvar = krige_one(&e.log_variance_field, layout, &site, &mut rng)?;
                    Ok(BaselineSite {
                        q,
                        level: e.intercept + local + e.elevation * c.elevation + e.latitude * c.latitude,
                        variance: logvar.exp(),
                    })
                })
                .collect()
        }
    }
}

/// P(U_t = 1 | y_{t−1}) under one draw; `None` when y_{t−1} is missing.
pub fn one_day_ahead_prob(
    transition: &TransitionParams,
    site: &SiteParams,
    day: &DayContext,
    y_prev: Option<f64>,
) -> Option<f64> {
    y_prev.map(|y| {
        crate::model::transition_prob(&transition.coefs, site.field(FieldRole::Transition), y, site.q, day)
    })
}

/// Posterior-mean one-day-ahead probability over paired draws and sites.
pub fn mean_one_day_ahead_prob(
    draws: &[ParameterState],
    sites: &[SiteParams],
    day: &DayContext,
    y_prev: Option<f64>,
) -> Option<f64> {
    let y_prev = y_prev?;
    if draws.is_empty() {
        return None;
    }
    let sum: f64 = draws
        .iter()
        .zip(sites)
        .map(|(d, s)| one_day_ahead_prob(&d.transition, s, day, Some(y_prev)).unwrap())
        .sum();
    Some(sum / draws.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{transition_prob, Covariates};
    use chrono::NaiveDate;

    #[test]
    fn delegates_to_transition_prob() {
        let mut p = ParameterState::zeros(1, 1, 0.01);
        p.transition.coefs = [0.2, 0.4, -0.1, 0.3, -0.2];
        p.transition.field.values = vec![-0.3];
        let site = p.site_params(0, Covariates { elevation: 0.0, latitude: 0.0 }, 33.0);
        let day = DayContext::from_date(NaiveDate::from_ymd_opt(2003, 7, 12).unwrap());
        let direct = transition_prob(&p.transition.coefs, -0.3, 31.5, 33.0, &day);
        assert_eq!(one_day_ahead_prob(&p.transition, &site, &day, Some(31.5)), Some(direct));
        assert_eq!(one_day_ahead_prob(&p.transition, &site, &day, None), None);
        p.transition.coefs = [0.0; 5];
        p.transition.field.values = vec![0.0];
        let site = p.site_params(0, Covariates { elevation: 0.0, latitude: 0.0 }, 33.0);
        assert_eq!(one_day_ahead_prob(&p.transition, &site, &day, Some(20.0)), Some(0.5));
    }

    #[test]
    fn streams_differ() {
        use rand::Rng;
        let a: u64 = stream_rng(1, 0).random();
        let b: u64 = stream_rng(1, 1).random();
        let c: u64 = stream_rng(1, 0).random();
        assert_ne!(a, b);
        assert_eq!(a, c);
    }
}
