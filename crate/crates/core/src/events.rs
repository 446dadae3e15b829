//! Thresholds, exceedance states and extreme heat event (EHE) extraction.

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::StationSeries;

/// June, July, August.
pub const SUMMER_MONTHS: [u32; 3] = [6, 7, 8];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Threshold {
    pub station_id: String,
    /// °C.
    pub q: f64,
    /// Inclusive calendar-year range of the baseline.
    pub baseline: (i32, i32),
    pub months: Vec<u32>,
    pub n_baseline_days: usize,
}

impl Threshold {
    /// A threshold supplied directly by the user (e.g. for an unmonitored site).
    pub fn fixed(station_id: impl Into<String>, q: f64) -> Self {
        Threshold {
            station_id: station_id.into(),
            q,
            baseline: (0, 0),
            months: Vec::new(),
            n_baseline_days: 0,
        }
    }
}

/// Nearest-rank empirical quantile: the ⌈p·n⌉-th order statistic.
///
/// `values` need not be sorted. Returns `None` for an empty slice.
pub fn nearest_rank_quantile(values: &[f64], p: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    // Guard against p·n landing a hair above an integer.
    let rank = ((p * n as f64) - 1e-9).ceil().clamp(1.0, n as f64) as usize;
    Some(sorted[rank - 1])
}

pub fn compute_threshold(
    series: &StationSeries,
    baseline: (i32, i32),
    months: &[u32],
    p: f64,
) -> Result<Threshold> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::ProbabilityOutOfRange(p));
    }
    if baseline.0 > baseline.1 {
        return Err(Error::InvalidData(format!(
            "empty baseline window {}..={}",
            baseline.0, baseline.1
        )));
    }
    let selected: Vec<f64> = series
        .values
        .iter()
        .enumerate()
        .filter_map(|(i, v)| {
            let v = (*v)?;
            let date = series.date(i);
            let in_years = (baseline.0..=baseline.1).contains(&date.year());
            (in_years && months.contains(&date.month())).then_some(v)
        })
        .collect();
    let q = nearest_rank_quantile(&selected, p)
        .ok_or_else(|| Error::NoBaselineData(series.station.id.clone()))?;
    Ok(Threshold {
        station_id: series.station.id.clone(),
        q,
        baseline,
        months: months.to_vec(),
        n_baseline_days: selected.len(),
    })
}

/// Per-day exceedance indicator: `Some(true)` where tmax ≥ q.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSequence {
    pub q: f64,
    pub states: Vec<Option<bool>>,
}

impl StateSequence {
    pub fn from_values(values: &[Option<f64>], q: f64) -> Self {
        StateSequence {
            q,
            states: values.iter().map(|v| v.map(|y| y >= q)).collect(),
        }
    }
}

pub fn derive_states(series: &StationSeries, threshold: &Threshold) -> Result<StateSequence> {
    if threshold.station_id != series.station.id {
        return Err(Error::StationMismatch {
            threshold: threshold.station_id.clone(),
            series: series.station.id.clone(),
        });
    }
    Ok(StateSequence::from_values(&series.values, threshold.q))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EheEvent {
    /// Day offset of the first exceedance day within the series.
    pub start_index: usize,
    pub duration: usize,
    pub avg_exceedance: f64,
    pub max_exceedance: f64,
    /// Month in which the event starts.
    pub start_month: u32,
}

/// Maximal runs of exceedance days. A missing day ends a run.
pub fn extract_events(series: &StationSeries, states: &StateSequence) -> Vec<EheEvent> {
    extract_events_from(series.start_date, &series.values, states)
}

/// [`extract_events`] on a bare value vector starting at `start_date`.
pub fn extract_events_from(
    start_date: NaiveDate,
    values: &[Option<f64>],
    states: &StateSequence,
) -> Vec<EheEvent> {
    debug_assert_eq!(values.len(), states.states.len());
    let mut events = Vec::new();
    let mut run: Option<(usize, f64, f64)> = None;
    let close = |start: usize, end: usize, sum: f64, max: f64, events: &mut Vec<EheEvent>| {
        let duration = end - start;
        events.push(EheEvent {
            start_index: start,
            duration,
            avg_exceedance: sum / duration as f64,
            max_exceedance: max,
            start_month: (start_date + chrono::Duration::days(start as i64)).month(),
        });
    };
    for (i, (state, value)) in states.states.iter().zip(values).enumerate() {
        match (state, value) {
            (Some(true), Some(y)) => {
                let excess = (y - states.q).max(0.0);
                run = Some(match run {
                    Some((start, sum, max)) => (start, sum + excess, max.max(excess)),
                    None => (i, excess, excess),
                });
            }
            _ => {
                if let Some((start, sum, max)) = run.take() {
                    close(start, i, sum, max, &mut events);
                }
            }
        }
    }
    if let Some((start, sum, max)) = run {
        close(start, states.states.len(), sum, max, &mut events);
    }
    events
}

/// Inclusive duration bin; `upper == None` is open-ended.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DurationBin {
    pub lower: usize,
    pub upper: Option<usize>,
}

impl DurationBin {
    pub fn contains(&self, duration: usize) -> bool {
        duration >= self.lower && self.upper.is_none_or(|u| duration <= u)
    }

    pub fn label(&self) -> String {
        match self.upper {
            Some(u) if u == self.lower => format!("{}", self.lower),
            Some(u) => format!("{}-{}", self.lower, u),
            None => format!("{}+", self.lower),
        }
    }
}

/// {1}, {2}, {3}, {4-5}, {6-7}, {8+}.
pub fn default_duration_bins() -> Vec<DurationBin> {
    let b = |lower, upper| DurationBin { lower, upper };
    vec![
        b(1, Some(1)),
        b(2, Some(2)),
        b(3, Some(3)),
        b(4, Some(5)),
        b(6, Some(7)),
        b(8, None),
    ]
}

/// Checks that `bins` partition {1, 2, ...} in order.
pub fn validate_bins(bins: &[DurationBin]) -> Result<()> {
    let mut next = 1;
    for (i, bin) in bins.iter().enumerate() {
        if bin.lower != next {
            return Err(Error::Config(format!("duration bin {i} should start at {next}")));
        }
        match bin.upper {
            Some(u) if u >= bin.lower => next = u + 1,
            None if i + 1 == bins.len() => return Ok(()),
            _ => return Err(Error::Config(format!("malformed duration bin {i}"))),
        }
    }
    Err(Error::Config("duration bins must end with an open bin".into()))
}

/// Proportions of events per bin. `empty` is set when there are no events,
/// in which case all proportions are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct Proportions {
    pub values: Vec<f64>,
    pub n_events: usize,
    pub empty: bool,
}

pub fn duration_histogram(events: &[EheEvent], bins: &[DurationBin]) -> Proportions {
    let mut counts = vec![0usize; bins.len()];
    for e in events {
        if let Some(k) = bins.iter().position(|b| b.contains(e.duration)) {
            counts[k] += 1;
        }
    }
    let n = events.len();
    let values = counts
        .iter()
        .map(|&c| if n == 0 { 0.0 } else { c as f64 / n as f64 })
        .collect();
    Proportions {
        values,
        n_events: n,
        empty: n == 0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Intensity {
    Average,
    Maximum,
}

impl Intensity {
    pub fn of(self, event: &EheEvent) -> f64 {
        match self {
            Intensity::Average => event.avg_exceedance,
            Intensity::Maximum => event.max_exceedance,
        }
    }
}

/// For each level ℓ, the fraction of events lasting at least `min_duration`
/// days whose intensity statistic is ≥ ℓ.
pub fn exceedance_cdf_complement(
    events: &[EheEvent],
    min_duration: usize,
    levels: &[f64],
    which: Intensity,
) -> Proportions {
    let stats: Vec<f64> = events
        .iter()
        .filter(|e| e.duration >= min_duration.max(1))
        .map(|e| which.of(e))
        .collect();
    let n = stats.len();
    let values = levels
        .iter()
        .map(|&level| {
            if n == 0 {
                0.0
            } else {
                stats.iter().filter(|&&s| s >= level).count() as f64 / n as f64
            }
        })
        .collect();
    Proportions {
        values,
        n_events: n,
        empty: n == 0,
    }
}
