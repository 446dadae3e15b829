//! Tables derived from fitted chains, predictions and validation runs. Every
//! table is a CSV with a header row; empty cells mark quantities that are
//! undefined (no qualifying days, no events).

use std::path::Path;

use anyhow::Result;
use chrono::NaiveDate;
use ehe_core::flatten::Flatten;
use ehe_core::mcmc::diagnostics::quantile_sorted;
use ehe_core::mcmc::{diagnostics, PosteriorChain, TwoStateChain};
use ehe_core::model::{transition_prob, Regime};
use ehe_core::predict::{Band, EheSummary, ErrorRates, PredictiveSeries, RateCell};
use ehe_core::series::DayContext;
use ehe_core::spatial::FieldRole;

use crate::io::{fmt_f64, write_table};

/// Lagged-temperature offsets (°C from the threshold) of the transition curves.
pub const CURVE_OFFSETS: [f64; 3] = [-2.0, 0.0, 2.0];

fn quantiles(xs: &mut [f64], ps: &[f64]) -> Vec<String> {
    xs.sort_by(f64::total_cmp);
    ps.iter().map(|p| fmt_f64(quantile_sorted(xs, *p))).collect()
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

pub fn write_diagnostics<S: Flatten>(chain: &PosteriorChain<S>, path: &Path) -> Result<()> {
    let rows = diagnostics(chain)?.into_iter().map(|s| {
        vec![
            s.name,
            s.block.name().to_string(),
            fmt_f64(s.mean),
            fmt_f64(s.sd),
            fmt_f64(s.q05),
            fmt_f64(s.q95),
            fmt_f64(s.ess),
            s.rhat.map_or(String::new(), fmt_f64),
        ]
    });
    write_table(path, &["parameter", "block", "mean", "sd", "q05", "q95", "ess", "rhat"], rows)
}

pub fn write_acceptance<S>(chain: &PosteriorChain<S>, path: &Path) -> Result<()> {
    let rows = chain.acceptance.iter().map(|a| {
        vec![a.block.clone(), a.accepted.to_string(), a.proposed.to_string(), fmt_f64(a.rate())]
    });
    write_table(path, &["block", "accepted", "proposed", "rate"], rows)
}

/// Intercept, elevation, latitude and autoregressive coefficients of each
/// temperature state.
pub fn write_coefficients(chain: &TwoStateChain, path: &Path) -> Result<()> {
    let mut rows = Vec::new();
    for (regime, label) in [(Regime::Below, "below"), (Regime::Above, "above")] {
        let pick: [(&str, fn(&ehe_core::model::EmissionParams) -> f64); 4] = [
            ("intercept", |e| e.intercept),
            ("elevation", |e| e.elevation),
            ("latitude", |e| e.latitude),
            ("autoregressive", |e| e.rho),
        ];
        for (name, f) in pick {
            let mut xs: Vec<f64> = chain.draws.iter().map(|d| f(d.emission(regime))).collect();
            let m = mean(&xs);
            let mut row = vec![name.to_string(), label.to_string(), fmt_f64(m)];
            row.extend(quantiles(&mut xs, &[0.025, 0.5, 0.975]));
            rows.push(row);
        }
    }
    write_table(path, &["coefficient", "state", "mean", "q025", "median", "q975"], rows)
}

/// Boxplot quantiles of each year's annual effect per state.
pub fn write_annual_effects(chain: &TwoStateChain, path: &Path) -> Result<()> {
    let layout = &chain.layout;
    let mut rows = Vec::new();
    for (regime, label) in [(Regime::Below, "below"), (Regime::Above, "above")] {
        for k in 0..layout.n_years {
            let mut xs: Vec<f64> = chain
                .draws
                .iter()
                .filter_map(|d| d.emission(regime).annual_effect(k))
                .collect();
            if xs.is_empty() {
                continue;
            }
            let mut row = vec![(layout.first_year + k as i32).to_string(), label.to_string(), fmt_f64(mean(&xs))];
            row.extend(quantiles(&mut xs, &[0.05, 0.25, 0.5, 0.75, 0.95]));
            rows.push(row);
        }
    }
    write_table(path, &["year", "state", "mean", "q05", "q25", "median", "q75", "q95"], rows)
}

/// Posterior mean and 90% interval of every spatial effect at every station.
pub fn write_spatial_effects(chain: &TwoStateChain, path: &Path) -> Result<()> {
    let layout = &chain.layout;
    let mut rows = Vec::new();
    for (s, station) in layout.stations.iter().enumerate() {
        for role in FieldRole::ALL {
            let mut xs: Vec<f64> = chain.draws.iter().map(|d| d.field(role).values[s]).collect();
            let mut row = vec![station.id.clone(), role.label().to_string(), fmt_f64(mean(&xs))];
            row.extend(quantiles(&mut xs, &[0.05, 0.95]));
            rows.push(row);
        }
    }
    write_table(path, &["station_id", "effect", "mean", "q05", "q95"], rows)
}

/// Posterior-mean P(U_t = 1 | y_{t−1} = q + offset) per station and day of
/// a 365-day year.
pub fn write_transition_curves(chain: &TwoStateChain, path: &Path) -> Result<()> {
    let layout = &chain.layout;
    let mut rows = Vec::new();
    for (s, station) in layout.stations.iter().enumerate() {
        let q = layout.thresholds[s];
        for doy in 1..=365 {
            let date = NaiveDate::from_yo_opt(2001, doy).expect("valid ordinal");
            let day = DayContext::from_date(date);
            for offset in CURVE_OFFSETS {
                let p = mean(
                    &chain
                        .draws
                        .iter()
                        .map(|d| {
                            transition_prob(&d.transition.coefs, d.transition.field.values[s], q + offset, q, &day)
                        })
                        .collect::<Vec<_>>(),
                );
                rows.push(vec![station.id.clone(), doy.to_string(), offset.to_string(), fmt_f64(p)]);
            }
        }
    }
    write_table(path, &["station_id", "day_of_year", "offset_c", "probability"], rows)
}

/// All fit-level tables of a two-state chain into `dir`.
pub fn write_fit_report(chain: &TwoStateChain, dir: &Path) -> Result<()> {
    write_coefficients(chain, &dir.join("coefficients.csv"))?;
    write_diagnostics(chain, &dir.join("diagnostics.csv"))?;
    write_acceptance(chain, &dir.join("acceptance.csv"))?;
    write_annual_effects(chain, &dir.join("annual_effects.csv"))?;
    write_spatial_effects(chain, &dir.join("spatial_effects.csv"))?;
    write_transition_curves(chain, &dir.join("transition_curves.csv"))
}

fn band_cells(b: &Band) -> [String; 4] {
    [fmt_f64(b.mean), fmt_f64(b.lower), fmt_f64(b.upper), b.n.to_string()]
}

/// Duration densities, exceedance curves and incidence of a prediction.
pub fn write_ehe_summary(summary: &EheSummary, dir: &Path) -> Result<()> {
    let rows = summary.bins.iter().zip(&summary.duration).map(|(bin, b)| {
        let mut row = vec![bin.label()];
        row.extend(band_cells(b));
        row
    });
    write_table(&dir.join("duration.csv"), &["duration_days", "mean", "lower", "upper", "n"], rows)?;
    for (file, bands) in [
        ("exceedance_avg.csv", &summary.avg_exceedance),
        ("exceedance_max.csv", &summary.max_exceedance),
    ] {
        let rows = summary.levels.iter().zip(bands).map(|(level, b)| {
            let mut row = vec![level.to_string()];
            row.extend(band_cells(b));
            row
        });
        write_table(&dir.join(file), &["level_c", "mean", "lower", "upper", "n"], rows)?;
    }
    let mut row = band_cells(&summary.incidence).to_vec();
    row.pop();
    row.extend([
        summary.n_trajectories.to_string(),
        summary.n_without_events.to_string(),
        summary.n_without_long_events.to_string(),
        summary.extrapolated.to_string(),
    ]);
    write_table(
        &dir.join("incidence.csv"),
        &[
            "mean",
            "lower",
            "upper",
            "n_trajectories",
            "n_without_events",
            "n_without_long_events",
            "extrapolated",
        ],
        [row],
    )
}

pub fn write_trajectories(paths: &[PredictiveSeries], path: &Path) -> Result<()> {
    let rows = paths.iter().enumerate().flat_map(|(k, p)| {
        p.values.iter().zip(&p.above).enumerate().map(move |(t, (y, above))| {
            vec![
                k.to_string(),
                p.draw.to_string(),
                (p.start_date + chrono::Duration::days(t as i64)).to_string(),
                y.to_string(),
                u8::from(*above).to_string(),
            ]
        })
    });
    write_table(path, &["trajectory", "draw", "date", "tmax_c", "above"], rows)
}

fn rate_cells(c: &RateCell) -> [String; 2] {
    [c.value.map_or(String::new(), fmt_f64), c.n_days.to_string()]
}

/// One held-out station's scores under both models.
pub struct StationScores {
    pub station_id: String,
    pub two_state: ErrorRates,
    pub baseline: ErrorRates,
}

fn models(s: &StationScores) -> [(&'static str, &ErrorRates); 2] {
    [("two_state", &s.two_state), ("baseline", &s.baseline)]
}

/// Marginal, persistence and onset error rates per station and model.
pub fn write_error_rates(scores: &[StationScores], path: &Path) -> Result<()> {
    let mut rows = Vec::new();
    for s in scores {
        for (model, r) in models(s) {
            let mut row = vec![s.station_id.clone(), model.to_string()];
            for cell in [r.marginal, r.persistence, r.onset] {
                row.extend(rate_cells(&cell));
            }
            rows.push(row);
        }
    }
    write_table(
        path,
        &[
            "station_id",
            "model",
            "marginal",
            "n_marginal",
            "persistence",
            "n_persistence",
            "onset",
            "n_onset",
        ],
        rows,
    )
}

/// Error on exceedance days that follow exactly k = 1, 2, 3 exceedance days.
pub fn write_deep_persistence(scores: &[StationScores], path: &Path) -> Result<()> {
    let mut rows = Vec::new();
    for s in scores {
        for (model, r) in models(s) {
            for (k, cell) in r.persisted.iter().enumerate() {
                let mut row = vec![s.station_id.clone(), model.to_string(), (k + 1).to_string()];
                row.extend(rate_cells(cell));
                rows.push(row);
            }
        }
    }
    write_table(path, &["station_id", "model", "persisted_days", "error", "n_days"], rows)
}
