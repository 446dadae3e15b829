//! Held-out one-day-ahead validation: error rates of exceedance prediction.
//!
//! For each observed exceedance day t in the window, p̂_t is the posterior
//! mean of P(U_t = 1 | y_{t−1, obs}); the reported error is the average of
//! 1 − p̂_t over the qualifying days.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{resolve_baseline_sites, resolve_sites, BaselineSite, SiteTarget};
use crate::dist::student_t_sf;
use crate::error::{Error, Result};
use crate::events::SUMMER_MONTHS;
use crate::mcmc::{fit, fit_baseline, BaselineChain, SamplerConfig, TwoStateChain};
use crate::model::{transition_prob, ModelConfig, ModelData, SiteParams};
use crate::series::{DayContext, StationSeries};
use crate::spatial::{FieldRole, Site};

/// Offset from the sampler seed of the kriging streams used in validation.
const KRIGING_SEED_OFFSET: u64 = 0x6b72_6967;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationWindow {
    pub months: Vec<u32>,
    /// Inclusive calendar-year range; all years when absent.
    pub years: Option<(i32, i32)>,
}

impl Default for EvaluationWindow {
    fn default() -> Self {
        EvaluationWindow {
            months: SUMMER_MONTHS.to_vec(),
            years: None,
        }
    }
}

impl EvaluationWindow {
    pub fn contains(&self, day: &DayContext) -> bool {
        self.months.contains(&day.month)
            && self.years.is_none_or(|(a, b)| (a..=b).contains(&day.year))
    }
}

/// Mean error over the qualifying days; `value` is `None` (flagged empty)
/// when there are none.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateCell {
    pub value: Option<f64>,
    pub n_days: usize,
}

impl RateCell {
    fn from_errors(errors: &[f64]) -> Self {
        RateCell {
            value: (!errors.is_empty()).then(|| errors.iter().sum::<f64>() / errors.len() as f64),
            n_days: errors.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorRates {
    /// All exceedance days.
    pub marginal: RateCell,
    /// Exceedance days following an exceedance day.
    pub persistence: RateCell,
    /// Exceedance days following a non-exceedance day.
    pub onset: RateCell,
    /// Exceedance days ending a run of exactly k = 1, 2, 3 preceding
    /// exceedance days.
    pub persisted: [RateCell; 3],
    pub window: EvaluationWindow,
}

impl ErrorRates {
    pub fn rows(&self) -> [(&'static str, RateCell); 6] {
        [
            ("marginal", self.marginal),
            ("persistence", self.persistence),
            ("onset", self.onset),
            ("persisted_1", self.persisted[0]),
            ("persisted_2", self.persisted[1]),
            ("persisted_3", self.persisted[2]),
        ]
    }
}

/// Error rates given one-day-ahead probabilities `probs[t]` of
/// P(U_t = 1 | y_{t−1}) (`None` where unavailable).
pub fn error_rates(
    series: &StationSeries,
    q: f64,
    probs: &[Option<f64>],
    window: &EvaluationWindow,
) -> Result<ErrorRates> {
    if probs.len() != series.len() {
        return Err(Error::InvalidData(format!(
            "{} probabilities for a series of {} days",
            probs.len(),
            series.len()
        )));
    }
    let exceed = |i: usize| series.values[i].map(|y| y >= q);
    let mut marginal = Vec::new();
    let mut persistence = Vec::new();
    let mut onset = Vec::new();
    let mut persisted: [Vec<f64>; 3] = Default::default();
    for t in 1..series.len() {
        let (Some(true), Some(prev), Some(p)) = (exceed(t), exceed(t - 1), probs[t]) else {
            continue;
        };
        if !window.contains(&series.day(t)) {
            continue;
        }
        let err = 1.0 - p;
        marginal.push(err);
        if prev {
            persistence.push(err);
        } else {
            onset.push(err);
        }
        // Length of the exceedance run ending at t − 1, if it started after
        // an observed non-exceedance day.
        let mut run = 0;
        let mut i = t;
        let bounded = loop {
            if i == 0 {
                break false;
            }
            i -= 1;
            match exceed(i) {
                Some(true) => run += 1,
                Some(false) => break true,
                None => break false,
            }
            if run > 3 {
                break false;
            }
        };
        if bounded && (1..=3).contains(&run) {
            persisted[run - 1].push(err);
        }
    }
    Ok(ErrorRates {
        marginal: RateCell::from_errors(&marginal),
        persistence: RateCell::from_errors(&persistence),
        onset: RateCell::from_errors(&onset),
        persisted: persisted.map(|v| RateCell::from_errors(&v)),
        window: window.clone(),
    })
}

/// Posterior-mean P(U_t = 1 | y_{t−1}) for each in-window day of `series`;
/// `sites[i]` pairs with `chain.draws[i]`.
pub fn two_state_probabilities(
    chain: &TwoStateChain,
    sites: &[SiteParams],
    series: &StationSeries,
    window: &EvaluationWindow,
) -> Vec<Option<f64>> {
    let n_draws = chain.draws.len() as f64;
    (0..series.len())
        .into_par_iter()
        .map(|t| {
            let day = series.day(t);
            if t == 0 || !window.contains(&day) || chain.draws.is_empty() {
                return None;
            }
            let y_prev = series.values[t - 1]?;
            let sum: f64 = chain
                .draws
                .iter()
                .zip(sites)
                .map(|(d, s)| {
                    transition_prob(&d.transition.coefs, s.field(FieldRole::Transition), y_prev, s.q, &day)
                })
                .sum();
            Some(sum / n_draws)
        })
        .collect()
}

/// Posterior-mean predictive tail mass P(Y_t ≥ q | y_{t−1}) under the
/// single-state t-AR(1) baseline. Years outside the fitted range use a zero
/// annual effect.
pub fn baseline_probabilities(
    chain: &BaselineChain,
    sites: &[BaselineSite],
    series: &StationSeries,
    window: &EvaluationWindow,
) -> Vec<Option<f64>> {
    let layout = &chain.layout;
    let sign = chain.model.ar_sign.factor();
    let dof = chain.model.dof;
    let n_draws = chain.draws.len() as f64;
    (0..series.len())
        .into_par_iter()
        .map(|t| {
            let day = series.day(t);
            if t == 0 || !window.contains(&day) || chain.draws.is_empty() {
                return None;
            }
            let y_prev = series.values[t - 1]?;
            let prev = series.day(t - 1);
            let (s_t, c_t) = day.harmonics();
            let (s_p, c_p) = prev.harmonics();
            let k_t = layout.year_index(day.year);
            let k_p = layout.year_index(prev.year);
            let sum: f64 = chain
                .draws
                .iter()
                .zip(sites)
                .map(|(d, site)| {
                    let e = &d.emission;
                    let annual = |k: Option<usize>| k.and_then(|k| e.annual_effect(k)).unwrap_or(0.0);
                    let mu_t = site.level + annual(k_t) + d.seasonal[0] * s_t + d.seasonal[1] * c_t;
                    let mu_p = site.level + annual(k_p) + d.seasonal[0] * s_p + d.seasonal[1] * c_p;
                    let m = mu_t + sign * e.rho * (y_prev - mu_p);
                    student_t_sf((site.q - m) / site.variance.sqrt(), dof)
                })
                .sum();
            Some(sum / n_draws)
        })
        .collect()
}

/// Both fitted models and their error rates at one held-out station.
#[derive(Debug, Clone)]
pub struct ValidationRun {
    pub two_state_chain: TwoStateChain,
    pub baseline_chain: BaselineChain,
    pub two_state: ErrorRates,
    pub baseline: ErrorRates,
}

/// Scores one-day-ahead exceedance predictions of both fitted models at
/// `held_out` (threshold `q`), whose fields are kriged per retained draw.
/// Returns (two-state, baseline) error rates.
pub fn score_held_out(
    two_state_chain: &TwoStateChain,
    baseline_chain: &BaselineChain,
    held_out: &StationSeries,
    q: f64,
    window: &EvaluationWindow,
) -> Result<(ErrorRates, ErrorRates)> {
    let st = &held_out.station;
    let target = SiteTarget::New {
        site: Site::new(st.longitude, st.latitude, st.elevation),
        q,
    };
    let seed = two_state_chain.sampler.seed.wrapping_add(KRIGING_SEED_OFFSET);
    let sites = resolve_sites(two_state_chain, &target, seed)?;
    let base_sites = resolve_baseline_sites(baseline_chain, &target, seed)?;
    let two_state = error_rates(
        held_out,
        q,
        &two_state_probabilities(two_state_chain, &sites, held_out, window),
        window,
    )?;
    let baseline = error_rates(
        held_out,
        q,
        &baseline_probabilities(baseline_chain, &base_sites, held_out, window),
        window,
    )?;
    Ok((two_state, baseline))
}

/// Fits the two-state model and the baseline on `train`, then scores both
/// at `held_out`.
pub fn fit_baseline_and_compare(
    train: &ModelData,
    held_out: &StationSeries,
    q: f64,
    model: &ModelConfig,
    sampler: &SamplerConfig,
    window: &EvaluationWindow,
) -> Result<ValidationRun> {
    let two_state_chain = fit(train, model, sampler)?;
    let baseline_chain = fit_baseline(train, model, sampler)?;
    let (two_state, baseline) = score_held_out(&two_state_chain, &baseline_chain, held_out, q, window)?;
    Ok(ValidationRun {
        two_state_chain,
        baseline_chain,
        two_state,
        baseline,
    })
}
