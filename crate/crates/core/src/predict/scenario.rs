//! A synthetic station network with a plausible parameter state, used to
//! generate test data and as the default design of the `simulate` command.

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::simulate::{simulate_dataset, SimulationSettings};
use crate::error::{Error, Result};
use crate::events::Threshold;
use crate::model::{ArSign, CovariateScaling, ModelConfig, ModelLayout, ParameterState};
use crate::series::{Station, StationSeries};
use crate::spatial::{decay_for_range, Site};

const KM_PER_DEGREE: f64 = 111.32;

/// Knobs of the demo design. Distances are in km, temperatures in °C.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub n_sites: usize,
    pub first_year: i32,
    pub n_years: usize,
    pub center_lon: f64,
    pub center_lat: f64,
    pub spacing_km: f64,
    /// Threshold minus the site's seasonal peak of the below-state mean.
    pub threshold_offset: f64,
    /// φ₀ through φ₄ of the transition probit.
    pub transition: [f64; 5],
    pub rho: [f64; 2],
    pub omega: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            n_sites: 4,
            first_year: 2000,
            n_years: 10,
            center_lon: -3.5,
            center_lat: 40.5,
            spacing_km: 100.0,
            threshold_offset: 3.5,
            transition: [-1.0, 0.35, -0.1, -0.2, -0.6],
            rho: [0.75, 0.7],
            omega: 1.3,
        }
    }
}

/// Site network, thresholds and the parameter state that generates data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub layout: ModelLayout,
    pub params: ParameterState,
}

/// Stations on a near-square grid around the center, elevations spread
/// over 50–900 m.
pub fn demo_stations(config: &ScenarioConfig) -> Result<Vec<Station>> {
    let n = config.n_sites;
    let cols = (n as f64).sqrt().ceil().max(1.0) as usize;
    let rows = n.div_ceil(cols);
    let dlat = config.spacing_km / KM_PER_DEGREE;
    let dlon = dlat / config.center_lat.to_radians().cos();
    (0..n)
        .map(|i| {
            let (r, c) = (i / cols, i % cols);
            let lat = config.center_lat + (r as f64 - 0.5 * (rows - 1) as f64) * dlat;
            let lon = config.center_lon + (c as f64 - 0.5 * (cols - 1) as f64) * dlon;
            let frac = if n > 1 { ((i * 7) % n) as f64 / (n - 1) as f64 } else { 0.5 };
            Station::new(format!("S{:02}", i + 1), format!("Synthetic {}", i + 1), lon, lat, 50.0 + 850.0 * frac)
        })
        .collect()
}

impl Scenario {
    pub fn new(config: &ScenarioConfig, model: &ModelConfig) -> Result<Self> {
        if config.n_sites == 0 || config.n_years == 0 {
            return Err(Error::Config("scenario needs at least one site and one year".into()));
        }
        let stations = demo_stations(config)?;
        let scaling = model.scaling.unwrap_or_else(|| CovariateScaling::for_stations(&stations));
        let n = stations.len();
        let decay = decay_for_range(model.effective_range_km);
        let mut p = ParameterState::zeros(n, config.n_years, decay);

        p.below.intercept = 22.0;
        p.below.elevation = -5.0;
        p.below.latitude = -1.5;
        p.below.rho = config.rho[0];
        p.above.intercept = 27.0;
        p.above.elevation = -4.0;
        p.above.latitude = -1.0;
        p.above.rho = config.rho[1];
        p.seasonal = [-2.6, -8.6];
        p.transition.coefs = config.transition;
        p.omega = config.omega;

        let wave = |i: usize, f: f64, a: f64| a * (f * (i as f64 + 1.0)).sin();
        for k in 1..config.n_years {
            p.below.annual[k] = wave(k, 1.3, 0.5);
            p.above.annual[k] = wave(k, 0.7, 0.4);
        }
        for s in 0..n {
            p.below.intercept_field.values[s] = wave(s, 2.1, 0.4);
            p.above.intercept_field.values[s] = wave(s, 1.7, 0.3);
            p.below.log_variance_field.values[s] = 4.0f64.ln() + wave(s, 0.9, 0.15);
            p.above.log_variance_field.values[s] = 1.5f64.ln() + wave(s, 2.5, 0.15);
            p.transition.field.values[s] = wave(s, 1.1, 0.15);
        }
        for (field, tau2, mean) in [
            (&mut p.below.intercept_field.hyper, 0.16, 0.0),
            (&mut p.above.intercept_field.hyper, 0.09, 0.0),
            (&mut p.below.log_variance_field.hyper, 0.05, 4.0f64.ln()),
            (&mut p.above.log_variance_field.hyper, 0.05, 1.5f64.ln()),
            (&mut p.transition.field.hyper, 0.05, 0.0),
        ] {
            field.variance = tau2;
            field.mean = mean;
        }
        p.validate()?;

        let covariates: Vec<_> = stations.iter().map(|s| scaling.covariates(s.elevation, s.latitude)).collect();
        let amplitude = p.seasonal[0].hypot(p.seasonal[1]);
        let thresholds = (0..n)
            .map(|s| p.below.site_level(s, &covariates[s]) + amplitude + config.threshold_offset)
            .collect();
        let layout = ModelLayout {
            sites: stations.iter().map(|s| Site::new(s.longitude, s.latitude, s.elevation)).collect(),
            stations,
            covariates,
            thresholds,
            first_year: config.first_year,
            n_years: config.n_years,
            scaling,
        };
        Ok(Scenario { layout, params: p })
    }

    pub fn thresholds(&self) -> Vec<Threshold> {
        self.layout
            .stations
            .iter()
            .zip(&self.layout.thresholds)
            .map(|(s, q)| Threshold::fixed(s.id.clone(), *q))
            .collect()
    }

    pub fn start_date(&self) -> NaiveDate {
        NaiveDate::from_ymd_opt(self.layout.first_year, 1, 1).expect("valid year")
    }

    pub fn end_date(&self) -> NaiveDate {
        let last = self.layout.first_year + self.layout.n_years as i32 - 1;
        NaiveDate::from_ymd_opt(last, 12, 31).expect("valid year")
    }

    /// Daily series for every site over the full year range.
    pub fn simulate(&self, ar_sign: ArSign, seed: u64) -> Result<Vec<StationSeries>> {
        let settings = SimulationSettings {
            first_year: self.layout.first_year,
            annual_prior_sd: 1.0,
            ar_sign,
        };
        simulate_dataset(&self.params, &self.layout, &settings, self.start_date(), self.end_date(), seed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::events::{derive_states, extract_events};
    use crate::spatial::distance_km;

    #[test]
    fn grid_spacing_and_elevations() {
        let cfg = ScenarioConfig {
            n_sites: 9,
            ..Default::default()
        };
        let st = demo_stations(&cfg).unwrap();
        let site = |i: usize| Site::new(st[i].longitude, st[i].latitude, st[i].elevation);
        assert!((distance_km(&site(0), &site(1)) - 100.0).abs() < 2.0);
        assert!((distance_km(&site(0), &site(3)) - 100.0).abs() < 0.5);
        assert!(st.iter().all(|s| (50.0..=900.0).contains(&s.elevation)));
        let mut ids: Vec<_> = st.iter().map(|s| s.id.clone()).collect();
        ids.dedup();
        assert_eq!(ids.len(), 9);
    }

    #[test]
    fn simulated_data_has_summer_events() {
        let sc = Scenario::new(&ScenarioConfig::default(), &ModelConfig::default()).unwrap();
        let data = sc.simulate(ArSign::Plus, 11).unwrap();
        assert_eq!(data.len(), 4);
        for (series, t) in data.iter().zip(sc.thresholds()) {
            assert_eq!(series.len(), 3653);
            let states = derive_states(series, &t).unwrap();
            let events = extract_events(series, &states);
            let days: usize = events.iter().map(|e| e.duration).sum();
            let rate = days as f64 / series.len() as f64;
            assert!(rate > 0.005 && rate < 0.1, "exceedance rate {rate}");
            let months: Vec<u32> = events.iter().map(|e| e.start_month).collect();
            assert!(months.iter().all(|m| (4..=10).contains(m)), "{months:?}");
        }
    }
}
