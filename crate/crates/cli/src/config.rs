//! Run configuration: a flat TOML key-value file whose keys mirror the
//! long command-line flags (with `_` for `-`). Flags win over the file, the
//! file wins over built-in defaults.

use std::path::Path;

use anyhow::{Context, Result};
use clap::Args;
use ehe_core::mcmc::SamplerConfig;
use ehe_core::model::{ArSign, ModelConfig};
use ehe_core::predict::{EvaluationWindow, SummaryConfig};
use serde::{Deserialize, Serialize};

/// Every tunable, all optional so that sources can be layered.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize, Args)]
#[serde(deny_unknown_fields)]
pub struct Settings {
    /// Total MCMC iterations.
    #[arg(long)]
    pub iterations: Option<usize>,
    /// Fraction of iterations discarded as burn-in.
    #[arg(long)]
    pub burn_in: Option<f64>,
    #[arg(long)]
    pub thin: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Iterations between proposal-scale adaptations during burn-in.
    #[arg(long)]
    pub adaptation_interval: Option<u64>,

    /// Degrees of freedom of the t components.
    #[arg(long)]
    pub dof: Option<f64>,
    /// Distance (km) at which spatial correlation falls to e⁻³.
    #[arg(long)]
    pub effective_range_km: Option<f64>,
    #[arg(long)]
    pub coefficient_prior_sd: Option<f64>,
    #[arg(long)]
    pub annual_prior_sd: Option<f64>,
    /// Sign of the autoregressive centering: plus or minus.
    #[arg(long, value_parser = parse_sign)]
    pub ar_sign: Option<ArSign>,

    /// Months (1–12) of the validation window.
    #[arg(long, value_delimiter = ',')]
    pub window_months: Option<Vec<u32>>,
    /// First calendar year of the validation window.
    #[arg(long)]
    pub window_start_year: Option<i32>,
    /// Last calendar year of the validation window.
    #[arg(long)]
    pub window_end_year: Option<i32>,

    /// Predictive trajectories per retained draw.
    #[arg(long)]
    pub n_rep: Option<usize>,
    /// Shortest event (days) counted in the exceedance curves.
    #[arg(long)]
    pub min_duration: Option<usize>,
}

fn parse_sign(s: &str) -> Result<ArSign, String> {
    match s {
        "plus" => Ok(ArSign::Plus),
        "minus" => Ok(ArSign::Minus),
        other => Err(format!("expected plus or minus, got `{other}`")),
    }
}

macro_rules! overlay {
    ($base:expr, $top:expr, $($field:ident),*) => {
        $( if $top.$field.is_some() { $base.$field = $top.$field.clone(); } )*
    };
}

impl Settings {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("invalid configuration in {}", path.display()))
    }

    /// File settings (if any) overridden by `flags`.
    pub fn layered(file: Option<&Path>, flags: &Settings) -> Result<Self> {
        let mut s = match file {
            Some(p) => Settings::from_file(p)?,
            None => Settings::default(),
        };
        overlay!(
            s, flags, iterations, burn_in, thin, seed, adaptation_interval, dof, effective_range_km,
            coefficient_prior_sd, annual_prior_sd, ar_sign, window_months, window_start_year,
            window_end_year, n_rep, min_duration
        );
        Ok(s)
    }

    pub fn sampler(&self) -> Result<SamplerConfig> {
        let d = SamplerConfig::default();
        let c = SamplerConfig {
            iterations: self.iterations.unwrap_or(d.iterations),
            burn_in: self.burn_in.unwrap_or(d.burn_in),
            thin: self.thin.unwrap_or(d.thin),
            seed: self.seed.unwrap_or(d.seed),
            adaptation_interval: self.adaptation_interval.unwrap_or(d.adaptation_interval),
            ..d
        };
        c.validate()?;
        Ok(c)
    }

    pub fn model(&self) -> Result<ModelConfig> {
        let d = ModelConfig::default();
        let c = ModelConfig {
            dof: self.dof.unwrap_or(d.dof),
            effective_range_km: self.effective_range_km.unwrap_or(d.effective_range_km),
            coefficient_prior_sd: self.coefficient_prior_sd.unwrap_or(d.coefficient_prior_sd),
            annual_prior_sd: self.annual_prior_sd.unwrap_or(d.annual_prior_sd),
            ar_sign: self.ar_sign.unwrap_or(d.ar_sign),
            ..d
        };
        c.validate()?;
        Ok(c)
    }

    pub fn window(&self) -> Result<EvaluationWindow> {
        let d = EvaluationWindow::default();
        let months = self.window_months.clone().unwrap_or(d.months);
        if months.is_empty() || months.iter().any(|m| !(1..=12).contains(m)) {
            anyhow::bail!("window months must lie in 1..=12");
        }
        let years = match (self.window_start_year, self.window_end_year) {
            (None, None) => None,
            (a, b) => Some((a.unwrap_or(i32::MIN), b.unwrap_or(i32::MAX))),
        };
        Ok(EvaluationWindow { months, years })
    }

    pub fn summary(&self) -> Result<SummaryConfig> {
        let d = SummaryConfig::default();
        let c = SummaryConfig {
            n_rep: self.n_rep.unwrap_or(d.n_rep),
            min_duration: self.min_duration.unwrap_or(d.min_duration),
            ..d
        };
        c.validate()?;
        Ok(c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "iterations = 500\nseed = 3\nar_sign = \"minus\"\nwindow_months = [7, 8]\n").unwrap();
        let flags = Settings {
            seed: Some(9),
            ..Default::default()
        };
        let s = Settings::layered(Some(&path), &flags).unwrap();
        let sampler = s.sampler().unwrap();
        assert_eq!(sampler.iterations, 500);
        assert_eq!(sampler.seed, 9);
        assert_eq!(s.model().unwrap().ar_sign, ArSign::Minus);
        assert_eq!(s.window().unwrap().months, vec![7, 8]);
    }

    #[test]
    fn unknown_keys_and_bad_values_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "iteration = 5\n").unwrap();
        assert!(Settings::from_file(&path).is_err());
        let s = Settings {
            burn_in: Some(1.5),
            ..Default::default()
        };
        assert!(s.sampler().is_err());
        let s = Settings {
            window_months: Some(vec![13]),
            ..Default::default()
        };
        assert!(s.window().is_err());
    }

    #[test]
    fn defaults_match_library() {
        let s = Settings::default();
        assert_eq!(s.sampler().unwrap(), SamplerConfig::default());
        assert_eq!(s.model().unwrap(), ModelConfig::default());
    }
}
