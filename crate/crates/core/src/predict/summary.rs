//! EHE characteristics of predictive trajectories: duration densities,
//! exceedance complement-CDFs and incidence, each as a posterior mean with a
//! 90% interval across trajectories.

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::simulate::{simulate_trajectory, PredictiveSeries, SimulationSettings};
use super::stream_rng;
use crate::error::{Error, Result};
use crate::events::{
    default_duration_bins, duration_histogram, exceedance_cdf_complement, validate_bins, DurationBin,
    Intensity,
};
use crate::mcmc::diagnostics::quantile_sorted;
use crate::mcmc::TwoStateChain;
use crate::model::SiteParams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SummaryConfig {
    pub bins: Vec<DurationBin>,
    /// Exceedance levels (°C above q) of the complement-CDF curves.
    pub levels: Vec<f64>,
    /// Shortest event counted in the intensity curves.
    pub min_duration: usize,
    /// Trajectories per retained draw.
    pub n_rep: usize,
}

impl Default for SummaryConfig {
    fn default() -> Self {
        SummaryConfig {
            bins: default_duration_bins(),
            levels: (0..=12).map(|i| i as f64 * 0.5).collect(),
            min_duration: 3,
            n_rep: 1,
        }
    }
}

impl SummaryConfig {
    pub fn validate(&self) -> Result<()> {
        validate_bins(&self.bins)?;
        if self.n_rep == 0 {
            return Err(Error::Config("n_rep must be at least 1".into()));
        }
        if self.levels.iter().any(|l| !l.is_finite()) {
            return Err(Error::Config("exceedance levels must be finite".into()));
        }
        Ok(())
    }
}

/// Mean and 5%/95% quantiles over the `n` trajectories that contribute; all
/// NaN with `n = 0` when none do.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub mean: f64,
    pub lower: f64,
    pub upper: f64,
    pub n: usize,
}

impl Band {
    pub fn from_values(values: &[f64]) -> Self {
        if values.is_empty() {
            return Band {
                mean: f64::NAN,
                lower: f64::NAN,
                upper: f64::NAN,
                n: 0,
            };
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        Band {
            mean: values.iter().sum::<f64>() / values.len() as f64,
            lower: quantile_sorted(&sorted, 0.05),
            upper: quantile_sorted(&sorted, 0.95),
            n: values.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lower <= x && x <= self.upper
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EheSummary {
    pub bins: Vec<DurationBin>,
    pub duration: Vec<Band>,
    pub levels: Vec<f64>,
    pub avg_exceedance: Vec<Band>,
    pub max_exceedance: Vec<Band>,
    /// Events per trajectory.
    pub incidence: Band,
    pub n_trajectories: usize,
    /// Trajectories without any event.
    pub n_without_events: usize,
    /// Trajectories without an event of at least `min_duration` days.
    pub n_without_long_events: usize,
    pub extrapolated: bool,
}

/// Per-cell summaries across trajectories. Trajectories without events are
/// left out of the density and curve bands but counted in incidence.
pub fn summarize_trajectories(trajectories: &[PredictiveSeries], config: &SummaryConfig) -> Result<EheSummary> {
    config.validate()?;
    let n_bins = config.bins.len();
    let n_levels = config.levels.len();
    let mut duration = vec![Vec::new(); n_bins];
    let mut avg = vec![Vec::new(); n_levels];
    let mut max = vec![Vec::new(); n_levels];
    let mut incidence = Vec::with_capacity(trajectories.len());
    let (mut no_events, mut no_long) = (0, 0);
    for path in trajectories {
        let events = path.events();
        incidence.push(events.len() as f64);
        let hist = duration_histogram(&events, &config.bins);
        if hist.empty {
            no_events += 1;
        } else {
            for (cell, v) in duration.iter_mut().zip(&hist.values) {
                cell.push(*v);
            }
        }
        let a = exceedance_cdf_complement(&events, config.min_duration, &config.levels, Intensity::Average);
        let m = exceedance_cdf_complement(&events, config.min_duration, &config.levels, Intensity::Maximum);
        if a.empty {
            no_long += 1;
        } else {
            for (cell, v) in avg.iter_mut().zip(&a.values) {
                cell.push(*v);
            }
            for (cell, v) in max.iter_mut().zip(&m.values) {
                cell.push(*v);
            }
        }
    }
    let bands = |cells: &[Vec<f64>]| cells.iter().map(|c| Band::from_values(c)).collect();
    Ok(EheSummary {
        bins: config.bins.clone(),
        duration: bands(&duration),
        levels: config.levels.clone(),
        avg_exceedance: bands(&avg),
        max_exceedance: bands(&max),
        incidence: Band::from_values(&incidence),
        n_trajectories: trajectories.len(),
        n_without_events: no_events,
        n_without_long_events: no_long,
        extrapolated: trajectories.iter().any(|p| p.extrapolated),
    })
}

/// Simulates `n_rep` trajectories per retained draw over `start..=end` and
/// summarizes them. Trajectory j of draw i uses stream i·n_rep + j of
/// `seed`, so results do not depend on thread scheduling.
pub fn summarize_ehe(
    chain: &TwoStateChain,
    sites: &[SiteParams],
    start: NaiveDate,
    end: NaiveDate,
    config: &SummaryConfig,
    seed: u64,
) -> Result<(EheSummary, Vec<PredictiveSeries>)> {
    config.validate()?;
    if chain.draws.is_empty() {
        return Err(Error::EmptyChain);
    }
    if sites.len() != chain.draws.len() {
        return Err(Error::InvalidParameters("one site resolution per draw required".into()));
    }
    let settings = SimulationSettings::new(&chain.layout, &chain.model);
    let n_rep = config.n_rep;
    let paths = (0..chain.draws.len() * n_rep)
        .into_par_iter()
        .map(|k| {
            let i = k / n_rep;
            let mut rng = stream_rng(seed, k as u64);
            simulate_trajectory(&chain.draws[i], &sites[i], &settings, start, end, None, i, &mut rng)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((summarize_trajectories(&paths, config)?, paths))
}
