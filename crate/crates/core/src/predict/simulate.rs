//! Forward simulation of daily maxima and exceedance states.

use std::collections::BTreeMap;

use chrono::{Duration, NaiveDate};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::stream_rng;
use crate::dist::TruncNormal;
use crate::error::{Error, Result};
use crate::events::{extract_events_from, EheEvent, StateSequence};
use crate::model::{ar_center, mu, transition_prob, ArSign, ModelConfig, ModelLayout, ParameterState, Regime, SiteParams};
use crate::series::{DayContext, Station, StationSeries};
use crate::spatial::FieldRole;

/// Calendar anchoring of annual effects and the autoregressive convention.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimulationSettings {
    /// Calendar year of annual-effect index 0.
    pub first_year: i32,
    /// Prior sd of annual effects drawn for years outside the fitted range.
    pub annual_prior_sd: f64,
    pub ar_sign: ArSign,
}

impl SimulationSettings {
    pub fn new(layout: &ModelLayout, model: &ModelConfig) -> Self {
        SimulationSettings {
            first_year: layout.first_year,
            annual_prior_sd: model.annual_prior_sd,
            ar_sign: model.ar_sign,
        }
    }
}

/// One simulated path at one site. `above[t]` holds exactly when
/// `values[t] ≥ q`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictiveSeries {
    pub start_date: NaiveDate,
    pub q: f64,
    pub values: Vec<f64>,
    pub above: Vec<bool>,
    /// Index of the posterior draw that generated the path.
    pub draw: usize,
    /// True when some year fell outside the fitted range and used annual
    /// effects drawn from their prior.
    pub extrapolated: bool,
}

impl PredictiveSeries {
    pub fn states(&self) -> StateSequence {
        StateSequence {
            q: self.q,
            states: self.above.iter().map(|u| Some(*u)).collect(),
        }
    }

    pub fn events(&self) -> Vec<EheEvent> {
        let values: Vec<Option<f64>> = self.values.iter().map(|v| Some(*v)).collect();
        extract_events_from(self.start_date, &values, &self.states())
    }

    pub fn to_series(&self, station: Station) -> StationSeries {
        StationSeries::new(station, self.start_date, self.values.iter().map(|v| Some(*v)).collect())
    }
}

/// Annual effects (below, above) per calendar year, drawing prior values
/// once per year for years the draw does not cover.
struct AnnualEffects<'a> {
    params: &'a ParameterState,
    settings: &'a SimulationSettings,
    fresh: BTreeMap<i32, [f64; 2]>,
}

impl<'a> AnnualEffects<'a> {
    fn fitted(&self, year: i32) -> Option<[f64; 2]> {
        let k = year - self.settings.first_year;
        let n = self.params.below.annual.len().min(self.params.above.annual.len());
        (k >= 0 && (k as usize) < n).then(|| {
            let k = k as usize;
            [self.params.below.annual[k], self.params.above.annual[k]]
        })
    }

    fn get<R: Rng + ?Sized>(&mut self, year: i32, rng: &mut R) -> [f64; 2] {
        if let Some(a) = self.fitted(year) {
            return a;
        }
        let sd = self.settings.annual_prior_sd;
        *self.fresh.entry(year).or_insert_with(|| {
            let normal = Normal::new(0.0, sd).expect("positive prior sd");
            [normal.sample(rng), normal.sample(rng)]
        })
    }
}

/// Climatological below-threshold mean μ⁰ on `date`, used as the default y₀.
pub fn climatological_start(
    params: &ParameterState,
    site: &SiteParams,
    settings: &SimulationSettings,
    date: NaiveDate,
) -> f64 {
    let day = DayContext::from_date(date);
    let k = day.year - settings.first_year;
    let annual = if k >= 0 { params.below.annual_effect(k as usize).unwrap_or(0.0) } else { 0.0 };
    mu(params, Regime::Below, site, annual, &day)
}

/// Simulates days `start..=end`. The day before `start` holds `y0`
/// (default: the climatological μ⁰ of that day) and is not part of the output.
pub fn simulate_trajectory<R: Rng + ?Sized>(
    params: &ParameterState,
    site: &SiteParams,
    settings: &SimulationSettings,
    start: NaiveDate,
    end: NaiveDate,
    y0: Option<f64>,
    draw: usize,
    rng: &mut R,
) -> Result<PredictiveSeries> {
    if end < start {
        return Err(Error::InvalidParameters(format!("empty date range {start}..{end}")));
    }
    let n = (end - start).num_days() as usize + 1;
    let mut annual = AnnualEffects {
        params,
        settings,
        fresh: BTreeMap::new(),
    };
    let q = site.q;
    let local = site.field(FieldRole::Transition);
    let var = [site.variance(Regime::Below), params.omega * site.variance(Regime::Above)];

    let mut prev_date = start - Duration::days(1);
    let mut y_prev = y0.unwrap_or_else(|| climatological_start(params, site, settings, prev_date));
    let mut values = Vec::with_capacity(n);
    let mut above = Vec::with_capacity(n);
    for i in 0..n {
        let date = start + Duration::days(i as i64);
        let day = DayContext::from_date(date);
        let prev = DayContext::from_date(prev_date);
        // The conditioning day before `start` takes annual effect 0 outside
        // the fitted range, as in `climatological_start`.
        let a_prev = if i == 0 {
            annual.fitted(prev.year).unwrap_or([0.0; 2])
        } else {
            annual.get(prev.year, rng)
        };
        let a_t = annual.get(day.year, rng);
        let p = transition_prob(&params.transition.coefs, local, y_prev, q, &day);
        let u = rng.random::<f64>() < p;
        let regime = Regime::of(u);
        let k = regime.index();
        let center = ar_center(
            mu(params, regime, site, a_t[k], &day),
            mu(params, regime, site, a_prev[k], &prev),
            params.emission(regime).rho,
            settings.ar_sign,
            y_prev,
        );
        let (lo, hi) = if u { (q, f64::INFINITY) } else { (f64::NEG_INFINITY, q) };
        let y = TruncNormal::new(center, var[k], lo, hi)?.sample(rng);
        values.push(y);
        above.push(u);
        y_prev = y;
        prev_date = date;
    }
    Ok(PredictiveSeries {
        start_date: start,
        q,
        values,
        above,
        draw,
        extrapolated: !annual.fresh.is_empty(),
    })
}

/// Simulates every site of `layout` under one parameter state, each on its
/// own random stream derived from `seed`.
pub fn simulate_dataset(
    params: &ParameterState,
    layout: &ModelLayout,
    settings: &SimulationSettings,
    start: NaiveDate,
    end: NaiveDate,
    seed: u64,
) -> Result<Vec<StationSeries>> {
    layout
        .stations
        .iter()
        .enumerate()
        .map(|(s, station)| {
            let site = params.site_params(s, layout.covariates[s], layout.thresholds[s]);
            let mut rng = stream_rng(seed, s as u64);
            let path = simulate_trajectory(params, &site, settings, start, end, None, 0, &mut rng)?;
            Ok(path.to_series(station.clone()))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Covariates;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn params() -> ParameterState {
        let mut p = ParameterState::zeros(1, 3, 3.0 / 400.0);
        p.below.intercept = 25.0;
        p.below.rho = 0.7;
        p.above.intercept = 33.0;
        p.above.rho = 0.5;
        p.below.log_variance_field.values = vec![4.0f64.ln()];
        p.above.log_variance_field.values = vec![1.0f64.ln()];
        p.transition.coefs = [-1.0, 0.3, -0.1, 0.0, 0.0];
        p.below.annual = vec![0.0, 0.5, -0.5];
        p.above.annual = vec![0.0, 0.2, 0.1];
        p
    }

    fn site(p: &ParameterState, q: f64) -> SiteParams {
        p.site_params(0, Covariates { elevation: 0.0, latitude: 0.0 }, q)
    }

    fn settings() -> SimulationSettings {
        SimulationSettings {
            first_year: 2000,
            annual_prior_sd: 1.0,
            ar_sign: ArSign::Plus,
        }
    }

    fn date(y: i32, m: u32, d: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(y, m, d).unwrap()
    }

    #[test]
    fn states_match_values() {
        let p = params();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let path = simulate_trajectory(&p, &site(&p, 27.0), &settings(), date(2000, 1, 1), date(2002, 12, 31), None, 0, &mut rng).unwrap();
        assert_eq!(path.values.len(), 1096);
        assert!(path.above.iter().any(|u| *u) && path.above.iter().any(|u| !*u));
        for (y, u) in path.values.iter().zip(&path.above) {
            assert_eq!(*y >= 27.0, *u);
        }
        assert!(!path.extrapolated);
    }

    #[test]
    fn forced_below_path() {
        let mut p = params();
        p.transition.coefs[0] = -1e3;
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let path = simulate_trajectory(&p, &site(&p, 26.0), &settings(), date(2000, 6, 1), date(2001, 8, 31), Some(40.0), 0, &mut rng).unwrap();
        assert!(path.values.iter().all(|y| *y < 26.0));
    }

    #[test]
    fn degenerate_variance_hits_center() {
        let mut p = params();
        p.below.log_variance_field.values = vec![-40.0];
        p.below.rho = 0.0;
        p.below.annual = vec![0.0; 3];
        p.transition.coefs[0] = -1e3;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let path = simulate_trajectory(&p, &site(&p, 40.0), &settings(), date(2001, 1, 1), date(2001, 1, 30), None, 0, &mut rng).unwrap();
        assert!(path.values.iter().all(|y| (y - 25.0).abs() < 1e-5));
    }

    #[test]
    fn constant_eta_frequency() {
        let mut p = params();
        p.transition.coefs = [0.3, 0.0, 0.0, 0.0, 0.0];
        let expected = crate::dist::norm_cdf(0.3);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let start = date(2000, 1, 1);
        let end = start + Duration::days(99_999);
        let path = simulate_trajectory(&p, &site(&p, 27.0), &settings(), start, end, None, 0, &mut rng).unwrap();
        let freq = path.above.iter().filter(|u| **u).count() as f64 / path.above.len() as f64;
        let se = (expected * (1.0 - expected) / path.above.len() as f64).sqrt();
        assert!((freq - expected).abs() < 3.0 * se, "{freq} vs {expected}");
        assert!(path.extrapolated);
    }

    #[test]
    fn deterministic_given_seed() {
        let p = params();
        let run = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            simulate_trajectory(&p, &site(&p, 27.0), &settings(), date(2000, 1, 1), date(2000, 12, 31), None, 0, &mut rng).unwrap()
        };
        assert_eq!(run(9), run(9));
        assert_ne!(run(9), run(10));
    }
}
