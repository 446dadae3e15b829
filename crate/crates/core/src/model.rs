//! Mean structures, transition predictor and likelihoods of the two-state
//! threshold model, plus the single-state t-AR(1) baseline.
//!
//! For a site s with threshold q(s) and state u ∈ {0 (below), 1 (above)}:
//!
//! ```text
//! μᵘ_t(s) = β₀ᵘ + β₀ᵘ(s) + γᵘ_year + β₁ᵘ elev(s) + β₂ᵘ lat(s) + λ₁ sin(2πt/L) + λ₂ cos(2πt/L)
//! mᵘ_t(s) = μᵘ_t(s) + ρᵘ (y_{t−1} − μᵘ_{t−1}(s))
//! η_t(s)  = φ₀ + φ₀(s) + φ₁ d + φ₂ d·1{d ≥ 0} + φ₃ sin(2πt/L) + φ₄ cos(2πt/L),  d = y_{t−1} − q(s)
//! P(U_t = 1 | y_{t−1}) = Φ(η_t)
//! Y_t | U_t = 0 ~ N(m⁰_t, σ²₀(s)) on (−∞, q),   Y_t | U_t = 1, ω ~ N(m¹_t, ω σ²₁(s)) on [q, ∞)
//! ```

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::dist::{log_norm_cdf, norm_cdf, student_t_logpdf, TruncNormal, DEFAULT_DOF};
use crate::error::{Error, Result};
use crate::events::Threshold;
use crate::series::{DayContext, Station, StationSeries};
use crate::spatial::{FieldRole, GpHyper, Site, SpatialField, DEFAULT_EFFECTIVE_RANGE_KM};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Maps station elevation and latitude onto the covariate scale used by the
/// mean function: `(elevation_m − elevation_offset) / elevation_scale` and
/// `(latitude − latitude_offset) / latitude_scale`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CovariateScaling {
    pub elevation_offset: f64,
    pub elevation_scale: f64,
    pub latitude_offset: f64,
    pub latitude_scale: f64,
}

impl Default for CovariateScaling {
    fn default() -> Self {
        CovariateScaling {
            elevation_offset: 0.0,
            elevation_scale: 1000.0,
            latitude_offset: 0.0,
            latitude_scale: 10.0,
        }
    }
}

impl CovariateScaling {
    /// Elevation in km, latitude centered at the midpoint of the stations'
    /// latitude range in units of 10 degrees.
    pub fn for_stations(stations: &[Station]) -> Self {
        let (lo, hi) = stations.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), s| {
            (lo.min(s.latitude), hi.max(s.latitude))
        });
        CovariateScaling {
            latitude_offset: if lo.is_finite() { 0.5 * (lo + hi) } else { 0.0 },
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.elevation_scale > 0.0 && self.latitude_scale > 0.0) {
            return Err(Error::Config("covariate scales must be positive".into()));
        }
        Ok(())
    }

    pub fn covariates(&self, elevation_m: f64, latitude: f64) -> Covariates {
        Covariates {
            elevation: (elevation_m - self.elevation_offset) / self.elevation_scale,
            latitude: (latitude - self.latitude_offset) / self.latitude_scale,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Covariates {
    pub elevation: f64,
    pub latitude: f64,
}

/// Sign convention of the autoregressive centering.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArSign {
    /// m = μ_t + ρ (y_{t−1} − μ_{t−1}).
    #[default]
    Plus,
    /// m = μ_t − ρ (y_{t−1} − μ_{t−1}).
    Minus,
}

impl ArSign {
    pub fn factor(self) -> f64 {
        match self {
            ArSign::Plus => 1.0,
            ArSign::Minus => -1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Degrees of freedom of the t components.
    pub dof: f64,
    pub effective_range_km: f64,
    pub coefficient_prior_sd: f64,
    pub annual_prior_sd: f64,
    pub variance_prior_shape: f64,
    pub variance_prior_rate: f64,
    pub hypermean_prior_sd: f64,
    pub ar_sign: ArSign,
    /// Defaults to [`CovariateScaling::for_stations`] when absent.
    pub scaling: Option<CovariateScaling>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            dof: DEFAULT_DOF,
            effective_range_km: DEFAULT_EFFECTIVE_RANGE_KM,
            coefficient_prior_sd: 100.0,
            annual_prior_sd: 1.0,
            variance_prior_shape: 2.0,
            variance_prior_rate: 2.0,
            hypermean_prior_sd: 1.0,
            ar_sign: ArSign::Plus,
            scaling: None,
        }
    }
}

impl ModelConfig {
    /// The configured scaling, or the default one for these stations.
    pub fn resolve_scaling(&self, stations: &[Station]) -> CovariateScaling {
        self.scaling.unwrap_or_else(|| CovariateScaling::for_stations(stations))
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("dof", self.dof),
            ("effective_range_km", self.effective_range_km),
            ("coefficient_prior_sd", self.coefficient_prior_sd),
            ("annual_prior_sd", self.annual_prior_sd),
            ("variance_prior_shape", self.variance_prior_shape),
            ("variance_prior_rate", self.variance_prior_rate),
            ("hypermean_prior_sd", self.hypermean_prior_sd),
        ];
        for (name, v) in positive {
            if !(v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if let Some(s) = &self.scaling {
            s.validate()?;
        }
        Ok(())
    }

    pub fn decay(&self) -> f64 {
        crate::spatial::decay_for_range(self.effective_range_km)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Regime {
    Below,
    Above,
}

impl Regime {
    pub fn of(above: bool) -> Self {
        if above {
            Regime::Above
        } else {
            Regime::Below
        }
    }

    pub fn index(self) -> usize {
        match self {
            Regime::Below => 0,
            Regime::Above => 1,
        }
    }
}

/// Coefficients and spatial effects of one temperature emission.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmissionParams {
    pub intercept: f64,
    pub elevation: f64,
    pub latitude: f64,
    pub rho: f64,
    /// One entry per fitted year; entry 0 is pinned at 0.
    pub annual: Vec<f64>,
    /// Zero-mean GP local intercept.
    pub intercept_field: SpatialField,
    /// GP on log σ²(s) with estimated mean.
    pub log_variance_field: SpatialField,
}

impl EmissionParams {
    pub fn site_level(&self, site: usize, cov: &Covariates) -> f64 {
        self.intercept
            + self.intercept_field.values[site]
            + self.elevation * cov.elevation
            + self.latitude * cov.latitude
    }

    pub fn annual_effect(&self, year_index: usize) -> Option<f64> {
        self.annual.get(year_index).copied()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionParams {
    /// φ₀ … φ₄.
    pub coefs: [f64; 5],
    pub field: SpatialField,
}

/// One full draw of the two-state model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterState {
    pub below: EmissionParams,
    pub above: EmissionParams,
    /// λ₁ (sin), λ₂ (cos), shared by both states.
    pub seasonal: [f64; 2],
    pub transition: TransitionParams,
    /// Global scale-mixture variable of the above-threshold emission.
    pub omega: f64,
}

impl ParameterState {
    pub fn emission(&self, regime: Regime) -> &EmissionParams {
        match regime {
            Regime::Below => &self.below,
            Regime::Above => &self.above,
        }
    }

    pub fn field(&self, role: FieldRole) -> &SpatialField {
        match role {
            FieldRole::InterceptBelow => &self.below.intercept_field,
            FieldRole::InterceptAbove => &self.above.intercept_field,
            FieldRole::LogVarianceBelow => &self.below.log_variance_field,
            FieldRole::LogVarianceAbove => &self.above.log_variance_field,
            FieldRole::Transition => &self.transition.field,
        }
    }

    /// Resolved per-site values at an observed site.
    pub fn site_params(&self, site: usize, covariates: Covariates, q: f64) -> SiteParams {
        let fields = FieldRole::ALL.map(|r| self.field(r).values[site]);
        SiteParams {
            q,
            covariates,
            fields,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, e) in [("below", &self.below), ("above", &self.above)] {
            if !(e.rho.abs() < 1.0) {
                return Err(Error::InvalidParameters(format!("|rho_{name}| must be < 1")));
            }
            if e.annual.first().is_some_and(|&g| g != 0.0) {
                return Err(Error::InvalidParameters(format!(
                    "first-year annual effect ({name}) must be 0"
                )));
            }
        }
        if !(self.omega > 0.0) {
            return Err(Error::InvalidParameters("omega must be positive".into()));
        }
        Ok(())
    }
}

/// Field values and covariates of one site (observed or kriged) under one
/// draw. `fields` follows [`FieldRole::ALL`] order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SiteParams {
    pub q: f64,
    pub covariates: Covariates,
    pub fields: [f64; 5],
}

impl SiteParams {
    pub fn field(&self, role: FieldRole) -> f64 {
        self.fields[FieldRole::ALL.iter().position(|r| *r == role).unwrap()]
    }

    /// σ²ᵘ(s), without the ω scaling.
    pub fn variance(&self, regime: Regime) -> f64 {
        match regime {
            Regime::Below => self.field(FieldRole::LogVarianceBelow).exp(),
            Regime::Above => self.field(FieldRole::LogVarianceAbove).exp(),
        }
    }

    pub fn local_intercept(&self, regime: Regime) -> f64 {
        match regime {
            Regime::Below => self.field(FieldRole::InterceptBelow),
            Regime::Above => self.field(FieldRole::InterceptAbove),
        }
    }
}

/// μᵘ_t(s).
pub fn mu(
    params: &ParameterState,
    regime: Regime,
    site: &SiteParams,
    annual: f64,
    day: &DayContext,
) -> f64 {
    let e = params.emission(regime);
    let (s, c) = day.harmonics();
    e.intercept
        + site.local_intercept(regime)
        + annual
        + e.elevation * site.covariates.elevation
        + e.latitude * site.covariates.latitude
        + params.seasonal[0] * s
        + params.seasonal[1] * c
}

/// Autoregressive centering μ_t + sign·ρ (y_{t−1} − μ_{t−1}).
pub fn ar_center(mu_t: f64, mu_prev: f64, rho: f64, sign: ArSign, y_prev: f64) -> f64 {
    mu_t + sign.factor() * rho * (y_prev - mu_prev)
}

/// η_t(s). The φ₂ term switches on at y_{t−1} = q, keeping η continuous.
pub fn eta(coefs: &[f64; 5], local: f64, y_prev: f64, q: f64, day: &DayContext) -> f64 {
    let d = y_prev - q;
    let hinge = if d >= 0.0 { d } else { 0.0 };
    let (s, c) = day.harmonics();
    coefs[0] + local + coefs[1] * d + coefs[2] * hinge + coefs[3] * s + coefs[4] * c
}

pub fn transition_prob(coefs: &[f64; 5], local: f64, y_prev: f64, q: f64, day: &DayContext) -> f64 {
    norm_cdf(eta(coefs, local, y_prev, q, day))
}

/// Day of the year (1..=L) at which φ₃ sin(2πt/L) + φ₄ cos(2πt/L) peaks.
pub fn seasonal_peak_day(sin_coef: f64, cos_coef: f64, year_length: u32) -> f64 {
    let l = year_length as f64;
    let t = sin_coef.atan2(cos_coef) * l / (2.0 * std::f64::consts::PI);
    if t <= 0.0 {
        t + l
    } else {
        t
    }
}

/// One-day-ahead predictive distribution of Y_t given y_{t−1}: a mixture of
/// the two truncated emissions with weights 1 − p and p.
#[derive(Debug, Clone, Copy)]
pub struct OneStepPredictive {
    pub p: f64,
    pub below: TruncNormal,
    pub above: TruncNormal,
}

impl OneStepPredictive {
    pub fn new(
        params: &ParameterState,
        site: &SiteParams,
        sign: ArSign,
        day: &DayContext,
        prev_day: &DayContext,
        annual: [f64; 2],
        annual_prev: [f64; 2],
        y_prev: f64,
    ) -> Result<Self> {
        let p = transition_prob(
            &params.transition.coefs,
            site.field(FieldRole::Transition),
            y_prev,
            site.q,
            day,
        );
        let center = |regime: Regime| {
            let k = regime.index();
            ar_center(
                mu(params, regime, site, annual[k], day),
                mu(params, regime, site, annual_prev[k], prev_day),
                params.emission(regime).rho,
                sign,
                y_prev,
            )
        };
        Ok(OneStepPredictive {
            p,
            below: TruncNormal::new(
                center(Regime::Below),
                site.variance(Regime::Below),
                f64::NEG_INFINITY,
                site.q,
            )?,
            above: TruncNormal::new(
                center(Regime::Above),
                params.omega * site.variance(Regime::Above),
                site.q,
                f64::INFINITY,
            )?,
        })
    }

    pub fn cdf(&self, y: f64) -> f64 {
        (1.0 - self.p) * self.below.cdf(y) + self.p * self.above.cdf(y)
    }

    /// lim_{x→y⁻} F(x).
    pub fn cdf_left(&self, y: f64) -> f64 {
        let q = self.below.upper;
        if y <= q {
            (1.0 - self.p) * self.below.cdf(y)
        } else {
            (1.0 - self.p) + self.p * self.above.cdf(y)
        }
    }
}

/// One modeled day: y_t and y_{t−1} both observed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub site: usize,
    pub y: f64,
    pub y_prev: f64,
    pub above: bool,
    pub year: usize,
    pub year_prev: usize,
    pub sin: f64,
    pub cos: f64,
    pub sin_prev: f64,
    pub cos_prev: f64,
}

/// Everything about the fitted site set that prediction needs besides the
/// parameter draws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelLayout {
    pub stations: Vec<Station>,
    pub sites: Vec<Site>,
    pub covariates: Vec<Covariates>,
    pub thresholds: Vec<f64>,
    pub first_year: i32,
    pub n_years: usize,
    pub scaling: CovariateScaling,
}

impl ModelLayout {
    pub fn n_sites(&self) -> usize {
        self.sites.len()
    }

    pub fn year_index(&self, year: i32) -> Option<usize> {
        let k = year - self.first_year;
        (k >= 0 && (k as usize) < self.n_years).then_some(k as usize)
    }

    pub fn station_index(&self, id: &str) -> Option<usize> {
        self.stations.iter().position(|s| s.id == id)
    }
}

#[derive(Debug, Clone)]
pub struct ModelData {
    pub layout: ModelLayout,
    pub records: Vec<Transition>,
}

impl ModelData {
    /// Pairs each series with its threshold (by station id) and collects all
    /// days where both y_t and y_{t−1} are observed. A missing day restarts
    /// the chain: the following observation is conditioned on, not modeled.
    pub fn new(
        series: &[StationSeries],
        thresholds: &[Threshold],
        scaling: CovariateScaling,
    ) -> Result<Self> {
        scaling.validate()?;
        if series.is_empty() {
            return Err(Error::InvalidData("no station series".into()));
        }
        let by_id: HashMap<&str, &Threshold> =
            thresholds.iter().map(|t| (t.station_id.as_str(), t)).collect();
        let mut ids = std::collections::HashSet::new();
        for s in series {
            if !ids.insert(s.station.id.as_str()) {
                return Err(Error::InvalidData(format!("duplicate station {}", s.station.id)));
            }
        }
        let years = series
            .iter()
            .filter(|s| !s.is_empty())
            .flat_map(|s| [s.year(0), s.year(s.len() - 1)]);
        let first_year = years.clone().min().ok_or_else(|| Error::InvalidData("all series empty".into()))?;
        let last_year = years.max().unwrap_or(first_year);

        let mut layout = ModelLayout {
            stations: Vec::new(),
            sites: Vec::new(),
            covariates: Vec::new(),
            thresholds: Vec::new(),
            first_year,
            n_years: (last_year - first_year + 1) as usize,
            scaling,
        };
        let mut records = Vec::new();
        for (site, s) in series.iter().enumerate() {
            let t = by_id.get(s.station.id.as_str()).ok_or_else(|| {
                Error::InvalidData(format!("no threshold for station {}", s.station.id))
            })?;
            if !t.q.is_finite() {
                return Err(Error::InvalidData(format!("threshold for {} not finite", t.station_id)));
            }
            layout.stations.push(s.station.clone());
            layout.sites.push(Site::new(s.station.longitude, s.station.latitude, s.station.elevation));
            layout.covariates.push(scaling.covariates(s.station.elevation, s.station.latitude));
            layout.thresholds.push(t.q);
            let mut prev: Option<(f64, DayContext)> = None;
            for i in 0..s.len() {
                let day = s.day(i);
                if let (Some(y), Some((y_prev, prev_day))) = (s.values[i], prev) {
                    let (sin, cos) = day.harmonics();
                    let (sin_prev, cos_prev) = prev_day.harmonics();
                    records.push(Transition {
                        site,
                        y,
                        y_prev,
                        above: y >= t.q,
                        year: (day.year - first_year) as usize,
                        year_prev: (prev_day.year - first_year) as usize,
                        sin,
                        cos,
                        sin_prev,
                        cos_prev,
                    });
                }
                prev = s.values[i].map(|y| (y, day));
            }
        }
        Ok(ModelData { layout, records })
    }

    pub fn n_sites(&self) -> usize {
        self.layout.n_sites()
    }
}

/// Emission family of one likelihood block.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EmissionKind {
    /// Normal restricted to (−∞, q).
    Below,
    /// Normal restricted to [q, ∞); the variance passed in already carries ω.
    Above,
    /// Untruncated Student-t; an infinite `dof` gives the normal.
    StudentT { dof: f64 },
}

/// Per-site resolved quantities for evaluating one emission block.
#[derive(Debug, Clone)]
pub struct EmissionView<'a> {
    pub kind: EmissionKind,
    /// β₀ + β₀(s) + β₁ elev(s) + β₂ lat(s).
    pub site_level: Vec<f64>,
    variance: Vec<f64>,
    /// √variance and its log, cached per site.
    sd: Vec<f64>,
    ln_sd: Vec<f64>,
    pub thresholds: &'a [f64],
    /// Signed autoregressive coefficient.
    pub rho: f64,
    pub annual: Vec<f64>,
    pub seasonal: [f64; 2],
}

impl<'a> EmissionView<'a> {
    pub fn from_params(
        kind: EmissionKind,
        params: &EmissionParams,
        seasonal: [f64; 2],
        variance_scale: f64,
        sign: ArSign,
        layout: &'a ModelLayout,
    ) -> Self {
        let n = layout.n_sites();
        let mut view = EmissionView {
            kind,
            site_level: (0..n).map(|s| params.site_level(s, &layout.covariates[s])).collect(),
            variance: vec![0.0; n],
            sd: vec![0.0; n],
            ln_sd: vec![0.0; n],
            thresholds: &layout.thresholds,
            rho: sign.factor() * params.rho,
            annual: params.annual.clone(),
            seasonal,
        };
        for (s, g) in params.log_variance_field.values.iter().enumerate() {
            view.set_variance(s, variance_scale * g.exp());
        }
        view
    }

    pub fn variance(&self, site: usize) -> f64 {
        self.variance[site]
    }

    pub fn set_variance(&mut self, site: usize, variance: f64) {
        self.variance[site] = variance;
        self.sd[site] = variance.sqrt();
        self.ln_sd[site] = self.sd[site].ln();
    }

    pub fn center(&self, r: &Transition) -> f64 {
        let level = self.site_level[r.site];
        let mu = level + self.annual[r.year] + self.seasonal[0] * r.sin + self.seasonal[1] * r.cos;
        let mu_prev = level
            + self.annual[r.year_prev]
            + self.seasonal[0] * r.sin_prev
            + self.seasonal[1] * r.cos_prev;
        mu + self.rho * (r.y_prev - mu_prev)
    }

    pub fn record_loglik(&self, r: &Transition) -> f64 {
        let m = self.center(r);
        let sd = self.sd[r.site];
        let ln_sd = self.ln_sd[r.site];
        let z = (r.y - m) / sd;
        match self.kind {
            EmissionKind::Below => {
                let q = self.thresholds[r.site];
                if r.y >= q {
                    return f64::NEG_INFINITY;
                }
                -0.5 * z * z - ln_sd - LN_SQRT_2PI - log_norm_cdf((q - m) / sd)
            }
            EmissionKind::Above => {
                let q = self.thresholds[r.site];
                if r.y < q {
                    return f64::NEG_INFINITY;
                }
                -0.5 * z * z - ln_sd - LN_SQRT_2PI - log_norm_cdf((m - q) / sd)
            }
            EmissionKind::StudentT { dof } => {
                if dof.is_finite() {
                    student_t_logpdf(z, dof) - ln_sd
                } else {
                    -0.5 * z * z - ln_sd - LN_SQRT_2PI
                }
            }
        }
    }

    pub fn loglik<'r>(&self, records: impl IntoIterator<Item = &'r Transition>) -> f64 {
        records.into_iter().map(|r| self.record_loglik(r)).sum()
    }
}

/// log P(u_t | y_{t−1}) summed over records.
pub fn transition_loglik(
    records: &[Transition],
    params: &TransitionParams,
    layout: &ModelLayout,
) -> f64 {
    let c = &params.coefs;
    records
        .iter()
        .map(|r| {
            let d = r.y_prev - layout.thresholds[r.site];
            let eta = c[0]
                + params.field.values[r.site]
                + c[1] * d
                + c[2] * d.max(0.0)
                + c[3] * r.sin
                + c[4] * r.cos;
            if r.above {
                log_norm_cdf(eta)
            } else {
                log_norm_cdf(-eta)
            }
        })
        .sum()
}

/// Joint log-likelihood of the two-state model given all parameters
/// (including ω).
pub fn loglik_two_state(data: &ModelData, params: &ParameterState, config: &ModelConfig) -> f64 {
    let layout = &data.layout;
    let below = EmissionView::from_params(
        EmissionKind::Below,
        &params.below,
        params.seasonal,
        1.0,
        config.ar_sign,
        layout,
    );
    let above = EmissionView::from_params(
        EmissionKind::Above,
        &params.above,
        params.seasonal,
        params.omega,
        config.ar_sign,
        layout,
    );
    let emission: f64 = data
        .records
        .iter()
        .map(|r| if r.above { above.record_loglik(r) } else { below.record_loglik(r) })
        .sum();
    emission + transition_loglik(&data.records, &params.transition, layout)
}

/// One draw of the single-state t-AR(1) baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineState {
    pub emission: EmissionParams,
    pub seasonal: [f64; 2],
}

pub fn loglik_single_state(data: &ModelData, params: &BaselineState, config: &ModelConfig) -> f64 {
    EmissionView::from_params(
        EmissionKind::StudentT { dof: config.dof },
        &params.emission,
        params.seasonal,
        1.0,
        config.ar_sign,
        &data.layout,
    )
    .loglik(&data.records)
}

/// Zero-valued emission parameters sized for `n_sites` sites and `n_years`
/// years, with GP hyperparameters at their prior modes.
pub fn zero_emission(
    intercept_role: FieldRole,
    log_variance_role: FieldRole,
    n_sites: usize,
    n_years: usize,
    decay: f64,
) -> EmissionParams {
    let hyper = GpHyper {
        variance: 1.0,
        decay,
        mean: 0.0,
    };
    EmissionParams {
        intercept: 0.0,
        elevation: 0.0,
        latitude: 0.0,
        rho: 0.0,
        annual: vec![0.0; n_years],
        intercept_field: SpatialField::constant(intercept_role, n_sites, hyper),
        log_variance_field: SpatialField::constant(log_variance_role, n_sites, hyper),
    }
}

impl ParameterState {
    /// All coefficients zero, unit variances, ω = 1.
    pub fn zeros(n_sites: usize, n_years: usize, decay: f64) -> Self {
        ParameterState {
            below: zero_emission(FieldRole::InterceptBelow, FieldRole::LogVarianceBelow, n_sites, n_years, decay),
            above: zero_emission(FieldRole::InterceptAbove, FieldRole::LogVarianceAbove, n_sites, n_years, decay),
            seasonal: [0.0; 2],
            transition: TransitionParams {
                coefs: [0.0; 5],
                field: SpatialField::constant(
                    FieldRole::Transition,
                    n_sites,
                    GpHyper { variance: 1.0, decay, mean: 0.0 },
                ),
            },
            omega: 1.0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::{norm_logpdf, student_t_logpdf};
    use chrono::NaiveDate;
    use proptest::prelude::*;

    fn day(doy: u32, year: i32) -> DayContext {
        let date = NaiveDate::from_yo_opt(year, doy).unwrap();
        DayContext::from_date(date)
    }

    fn site(q: f64) -> SiteParams {
        SiteParams {
            q,
            covariates: Covariates { elevation: 0.0, latitude: 0.0 },
            fields: [0.0; 5],
        }
    }

    fn zeros() -> ParameterState {
        ParameterState::zeros(1, 1, 3.0 / 400.0)
    }

    #[test]
    fn mu_examples() {
        let mut p = zeros();
        p.below.intercept = 20.0;
        assert_eq!(mu(&p, Regime::Below, &site(30.0), 0.0, &day(100, 2001)), 20.0);

        let mut p = zeros();
        p.seasonal = [0.0, 1.0];
        assert!((mu(&p, Regime::Below, &site(30.0), 0.0, &day(365, 2001)) - 1.0).abs() < 1e-15);
        assert!((mu(&p, Regime::Below, &site(30.0), 0.0, &day(366, 2004)) - 1.0).abs() < 1e-15);

        let mut p = zeros();
        p.below.intercept = 18.73;
        p.below.elevation = -1.65;
        let mut s = site(30.0);
        s.covariates.elevation = 1.0;
        assert!((mu(&p, Regime::Below, &s, 0.0, &day(1, 2001)) - 17.08).abs() < 1e-12);
    }

    #[test]
    fn ar_center_examples() {
        assert_eq!(ar_center(21.0, 19.0, 0.0, ArSign::Plus, 35.0), 21.0);
        assert_eq!(ar_center(21.0, 19.0, 0.9, ArSign::Plus, 19.0), 21.0);
        assert!((ar_center(20.0, 20.0, 0.73, ArSign::Plus, 30.0) - 27.3).abs() < 1e-12);
        assert!((ar_center(20.0, 20.0, 0.73, ArSign::Minus, 30.0) - 12.7).abs() < 1e-12);
    }

    #[test]
    fn eta_examples() {
        // June 21 2001 → day 172; seasonal coefficients zero here.
        let d = day(172, 2001);
        let c = [0.4, 0.0, 0.0, 0.0, 0.0];
        assert_eq!(eta(&c, -0.1, 30.0, 30.0, &d), 0.4 - 0.1);
        let c = [0.0, 0.5, 0.3, 0.0, 0.0];
        assert!((eta(&c, 0.0, 32.0, 30.0, &d) - 1.6).abs() < 1e-12);
        assert!((eta(&c, 0.0, 28.0, 30.0, &d) + 1.0).abs() < 1e-12);
        assert_eq!(transition_prob(&[0.0; 5], 0.0, 10.0, 30.0, &d), 0.5);
        assert_eq!(transition_prob(&[-60.0, 0.0, 0.0, 0.0, 0.0], 0.0, 1.0, 1.0, &d), 0.0);
        assert_eq!(transition_prob(&[60.0, 0.0, 0.0, 0.0, 0.0], 0.0, 1.0, 1.0, &d), 1.0);
    }

    #[test]
    fn peak_day_matches_grid_search() {
        for (s, c) in [(-0.3, -0.8), (0.5, 0.1), (1.0, -1.0), (-1.0, 0.2)] {
            let l = 365;
            let best = (1..=l)
                .map(|t| {
                    let a = 2.0 * std::f64::consts::PI * t as f64 / l as f64;
                    (t, s * a.sin() + c * a.cos())
                })
                .max_by(|a, b| a.1.total_cmp(&b.1))
                .unwrap()
                .0;
            let peak = seasonal_peak_day(s, c, l);
            let diff = (peak - best as f64).abs();
            assert!(diff <= 0.5 || (l as f64 - diff) <= 0.5, "{s},{c}: {peak} vs {best}");
        }
    }

    proptest! {
        #[test]
        fn eta_piecewise_linear(
            phi in prop::array::uniform5(-3.0f64..3.0),
            local in -1.0f64..1.0,
            q in 20.0f64..40.0,
            off in 0.01f64..10.0,
        ) {
            let d = day(200, 2003);
            let at = |y| eta(&phi, local, y, q, &d);
            let left = at(q - off) + phi[1] * off;
            let right = at(q + off) - (phi[1] + phi[2]) * off;
            prop_assert!((left - right).abs() < 1e-9);
            prop_assert!((left - at(q)).abs() < 1e-9);
        }

        #[test]
        fn transition_prob_monotone(
            p1 in 0.01f64..2.0, p2 in -0.009f64..2.0, y in 0.0f64..40.0, dy in 0.01f64..5.0,
        ) {
            let c = [0.1, p1, p2.max(-p1 + 0.001), 0.2, -0.4];
            let d = day(180, 2010);
            prop_assert!(transition_prob(&c, 0.0, y + dy, 30.0, &d) >= transition_prob(&c, 0.0, y, 30.0, &d));
        }
    }

    fn tiny_data(values: &[&[Option<f64>]], q: f64) -> (Vec<StationSeries>, Vec<Threshold>) {
        let start = NaiveDate::from_ymd_opt(2001, 7, 1).unwrap();
        let mut series = Vec::new();
        let mut thresholds = Vec::new();
        for (i, v) in values.iter().enumerate() {
            let st = Station::new(format!("S{i}"), "", -1.0 + i as f64 * 0.3, 41.0, 300.0).unwrap();
            series.push(StationSeries::new(st, start, v.to_vec()));
            thresholds.push(Threshold::fixed(format!("S{i}"), q));
        }
        (series, thresholds)
    }

    fn scaled_params(n_sites: usize) -> ParameterState {
        let mut p = ParameterState::zeros(n_sites, 1, 3.0 / 400.0);
        p.below.intercept = 25.0;
        p.below.rho = 0.6;
        p.below.log_variance_field.values = vec![2.0f64.ln(); n_sites];
        p.above.intercept = 31.0;
        p.above.rho = 0.4;
        p.above.log_variance_field.values = vec![0.5f64.ln(); n_sites];
        p.transition.coefs = [-0.5, 0.3, 0.2, 0.1, -0.2];
        p.omega = 1.5;
        p
    }

    #[test]
    fn loglik_hand_computed() {
        let q = 30.0;
        let (series, th) = tiny_data(&[&[Some(28.0), Some(29.0), Some(31.0)]], q);
        let data = ModelData::new(&series, &th, CovariateScaling::default()).unwrap();
        assert_eq!(data.records.len(), 2);
        let mut p = scaled_params(1);
        p.seasonal = [0.3, -0.5];
        let config = ModelConfig::default();
        // Scaling is irrelevant with zero covariate coefficients.
        let angle = |m: u32, d: u32| {
            let dc = DayContext::from_date(NaiveDate::from_ymd_opt(2001, m, d).unwrap());
            dc.harmonics()
        };
        let mu_b = |(s, c): (f64, f64)| 25.0 + 0.3 * s - 0.5 * c;
        let mu_a = |(s, c): (f64, f64)| 31.0 + 0.3 * s - 0.5 * c;
        let (d1, d2, d3) = (angle(7, 1), angle(7, 2), angle(7, 3));
        let phi = [-0.5, 0.3, 0.2, 0.1, -0.2];
        let eta = |yp: f64, (s, c): (f64, f64)| {
            let d: f64 = yp - q;
            phi[0] + phi[1] * d + phi[2] * d.max(0.0) + phi[3] * s + phi[4] * c
        };
        let n = |x: f64| crate::dist::norm_cdf(x);
        // Day 2: below, y=29, y_prev=28.
        let m2 = mu_b(d2) + 0.6 * (28.0 - mu_b(d1));
        let t2 = (1.0 - n(eta(28.0, d2))).ln() + norm_logpdf(29.0, m2, 2.0)
            - n((q - m2) / 2.0f64.sqrt()).ln();
        // Day 3: above, y=31, y_prev=29.
        let m3 = mu_a(d3) + 0.4 * (29.0 - mu_a(d2));
        let v3 = 1.5 * 0.5;
        let t3 = n(eta(29.0, d3)).ln() + norm_logpdf(31.0, m3, v3)
            - (1.0 - n((q - m3) / f64::sqrt(v3))).ln();
        let ll = loglik_two_state(&data, &p, &config);
        assert!((ll - (t2 + t3)).abs() < 1e-10, "{ll} vs {}", t2 + t3);
    }

    #[test]
    fn loglik_additive_over_sites_and_missing() {
        let q = 30.0;
        let v: &[Option<f64>] = &[Some(28.0), Some(31.0), None, Some(29.5), Some(27.0), Some(33.0)];
        let (one, th1) = tiny_data(&[v], q);
        let (two, th2) = tiny_data(&[v, v], q);
        let config = ModelConfig::default();
        let d1 = ModelData::new(&one, &th1, CovariateScaling::default()).unwrap();
        let d2 = ModelData::new(&two, &th2, CovariateScaling::default()).unwrap();
        assert_eq!(d1.records.len(), 3);
        let l1 = loglik_two_state(&d1, &scaled_params(1), &config);
        let l2 = loglik_two_state(&d2, &scaled_params(2), &config);
        assert!((2.0 * l1 - l2).abs() < 1e-8);

        let (missing, thm) = tiny_data(&[&[None, None, None]], q);
        let dm = ModelData::new(&missing, &thm, CovariateScaling::default()).unwrap_or_else(|_| {
            // An all-missing series still has a calendar span.
            unreachable!()
        });
        assert_eq!(loglik_two_state(&dm, &scaled_params(1), &config), 0.0);
    }

    #[test]
    fn loglik_invariant_to_site_order() {
        let q = 30.0;
        let a: &[Option<f64>] = &[Some(28.0), Some(31.0), Some(32.0), Some(27.0)];
        let b: &[Option<f64>] = &[Some(25.0), Some(26.0), Some(30.5), Some(29.0)];
        let config = ModelConfig::default();
        let (s_ab, t_ab) = tiny_data(&[a, b], q);
        let (mut s_ba, _) = tiny_data(&[b, a], q);
        let mut p = scaled_params(2);
        p.below.intercept_field.values = vec![0.3, -0.2];
        let mut p_rev = p.clone();
        p_rev.below.intercept_field.values = vec![-0.2, 0.3];
        s_ba[0].station = s_ab[1].station.clone();
        s_ba[1].station = s_ab[0].station.clone();
        let t_ba = vec![t_ab[1].clone(), t_ab[0].clone()];
        let d_ab = ModelData::new(&s_ab, &t_ab, CovariateScaling::default()).unwrap();
        let d_ba = ModelData::new(&s_ba, &t_ba, CovariateScaling::default()).unwrap();
        let l1 = loglik_two_state(&d_ab, &p, &config);
        let l2 = loglik_two_state(&d_ba, &p_rev, &config);
        assert!((l1 - l2).abs() < 1e-10);
    }

    fn baseline_from(p: &ParameterState) -> BaselineState {
        BaselineState {
            emission: p.below.clone(),
            seasonal: p.seasonal,
        }
    }

    #[test]
    fn single_state_iid_reduction() {
        let (series, th) = tiny_data(&[&[Some(20.0), Some(22.0), Some(19.5), Some(35.0)]], 30.0);
        let data = ModelData::new(&series, &th, CovariateScaling::default()).unwrap();
        let mut p = scaled_params(1);
        p.below.rho = 0.0;
        let b = baseline_from(&p);
        let config = ModelConfig::default();
        let direct: f64 = [22.0, 19.5, 35.0]
            .iter()
            .map(|y| student_t_logpdf((y - 25.0) / 2.0f64.sqrt(), 3.0) - 0.5 * 2.0f64.ln())
            .sum();
        assert!((loglik_single_state(&data, &b, &config) - direct).abs() < 1e-10);

        let (two, th2) = tiny_data(
            &[&[Some(20.0), Some(22.0), Some(19.5), Some(35.0)], &[Some(20.0), Some(22.0), Some(19.5), Some(35.0)]],
            30.0,
        );
        let d2 = ModelData::new(&two, &th2, CovariateScaling::default()).unwrap();
        let b2 = baseline_from(&scaled_params(2));
        let b1 = baseline_from(&scaled_params(1));
        let l1 = loglik_single_state(&data, &b1, &config);
        let l2 = loglik_single_state(&d2, &b2, &config);
        assert!((2.0 * l1 - l2).abs() < 1e-10);
    }

    #[test]
    fn vacuous_two_state_matches_gaussian_single_state() {
        let values: Vec<Option<f64>> = (0..40).map(|i| Some(20.0 + (i as f64 * 0.7).sin() * 4.0)).collect();
        let (series, th) = tiny_data(&[&values], 1e12);
        let data = ModelData::new(&series, &th, CovariateScaling::default()).unwrap();
        let mut p = scaled_params(1);
        p.transition.coefs = [-50.0, 0.0, 0.0, 0.0, 0.0];
        p.seasonal = [0.4, -2.0];
        let b = baseline_from(&p);
        let gaussian = ModelConfig {
            dof: f64::INFINITY,
            ..Default::default()
        };
        let two = loglik_two_state(&data, &p, &ModelConfig::default());
        let one = loglik_single_state(&data, &b, &gaussian);
        assert!((two - one).abs() < 1e-8, "{two} vs {one}");
    }

    #[test]
    fn predictive_cdf_continuous_at_threshold() {
        let p = scaled_params(1);
        let s = p.site_params(0, Covariates { elevation: 0.0, latitude: 0.0 }, 30.0);
        let d = day(190, 2001);
        let dp = day(189, 2001);
        for y_prev in [22.0, 29.9, 30.0, 34.0] {
            let pred = OneStepPredictive::new(&p, &s, ArSign::Plus, &d, &dp, [0.0; 2], [0.0; 2], y_prev).unwrap();
            assert!((pred.cdf(30.0) - pred.cdf_left(30.0)).abs() < 1e-10);
            assert!((pred.cdf_left(30.0) - (1.0 - pred.p)).abs() < 1e-12);
            assert!(pred.cdf(-1e6) < 1e-12 && (pred.cdf(1e6) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn model_data_requires_thresholds() {
        let (series, _) = tiny_data(&[&[Some(1.0), Some(2.0)]], 0.0);
        assert!(ModelData::new(&series, &[], CovariateScaling::default()).is_err());
    }

    #[test]
    fn gap_restarts_chain() {
        let (series, th) = tiny_data(&[&[Some(20.0), None, Some(21.0), Some(22.0)]], 30.0);
        let data = ModelData::new(&series, &th, CovariateScaling::default()).unwrap();
        assert_eq!(data.records.len(), 1);
        assert_eq!(data.records[0].y_prev, 21.0);
    }

    #[test]
    fn config_validation() {
        assert!(ModelConfig::default().validate().is_ok());
        let bad = ModelConfig { annual_prior_sd: 0.0, ..Default::default() };
        assert!(bad.validate().is_err());
    }
}
