//! Updates for one temperature emission: intercepts and local intercept
//! field, regression coefficients and ρ, annual effects, log-variance field
//! and the GP hyperparameters.

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use rand::Rng;
use rand_distr::StandardNormal;

use super::adapt::{AcceptanceCount, AdaptiveMetropolis, ScalarProposal};
use super::ess::{elliptical_slice, surrogate_elliptical_slice, Surrogate, SurrogateFit};
use super::SamplerConfig;
use crate::dist::{cholesky_jittered, invgamma_sample};
use crate::error::{Error, Result};
use crate::model::{
    ArSign, EmissionKind, EmissionParams, EmissionView, ModelConfig, ModelLayout, Transition,
};
use crate::spatial::{build_corr, Site};

/// Exponential correlation matrix of the fitted sites, its Cholesky factor
/// and inverse.
#[derive(Debug, Clone)]
pub struct SpatialPrior {
    pub chol_l: DMatrix<f64>,
    pub inv: DMatrix<f64>,
}

impl SpatialPrior {
    pub fn new(sites: &[Site], decay: f64) -> Result<Self> {
        let (chol, _) = cholesky_jittered(&build_corr(sites, decay))?;
        Ok(SpatialPrior {
            chol_l: chol.l(),
            inv: chol.inverse(),
        })
    }

    /// aᵀ C⁻¹ b.
    pub fn form(&self, a: &[f64], b: &[f64]) -> f64 {
        let a = DVector::from_row_slice(a);
        let b = DVector::from_row_slice(b);
        (a.transpose() * &self.inv * b)[(0, 0)]
    }
}

/// Shared read-only context of one fit.
pub(crate) struct Context<'a> {
    pub layout: &'a ModelLayout,
    pub model: &'a ModelConfig,
    pub prior: &'a SpatialPrior,
}

/// Slice move under the prior N(mean, L Lᵀ), through the surrogate ellipse
/// when one has been fitted.
fn slice_move<R: Rng + ?Sized>(
    x: &[f64],
    ll: f64,
    mean: &[f64],
    chol_l: &DMatrix<f64>,
    surrogate: Option<&Surrogate>,
    loglik: impl FnMut(&[f64]) -> f64,
    rng: &mut R,
) -> (Vec<f64>, f64) {
    match surrogate {
        Some(s) => surrogate_elliptical_slice(x, ll, mean, chol_l, s, loglik, rng),
        None => elliptical_slice(x, ll, mean, chol_l, loglik, rng),
    }
}

pub(crate) struct EmissionSampler {
    kind: EmissionKind,
    records: Vec<Transition>,
    /// Records whose mean involves year k (through t or t−1).
    by_year: Vec<Vec<usize>>,
    coef: AdaptiveMetropolis,
    annual: Vec<ScalarProposal>,
    /// Slice-move ellipses fitted during burn-in: site levels and log-variances.
    level_fit: SurrogateFit,
    logvar_fit: SurrogateFit,
}

impl EmissionSampler {
    pub fn new(
        kind: EmissionKind,
        records: Vec<Transition>,
        n_sites: usize,
        n_years: usize,
        config: &SamplerConfig,
    ) -> Self {
        let mut by_year = vec![Vec::new(); n_years];
        for (i, r) in records.iter().enumerate() {
            by_year[r.year].push(i);
            if r.year_prev != r.year {
                by_year[r.year_prev].push(i);
            }
        }
        EmissionSampler {
            kind,
            records,
            by_year,
            coef: AdaptiveMetropolis::new(&config.coefficient_steps, 0.25, config.adaptation_interval),
            annual: (0..n_years).map(|_| ScalarProposal::new(config.annual_step, 0.44)).collect(),
            level_fit: SurrogateFit::new(n_sites, config.adaptation_interval),
            logvar_fit: SurrogateFit::new(n_sites, config.adaptation_interval),
        }
    }

    pub fn view<'a>(
        &self,
        params: &EmissionParams,
        seasonal: [f64; 2],
        variance_scale: f64,
        sign: ArSign,
        layout: &'a ModelLayout,
    ) -> EmissionView<'a> {
        EmissionView::from_params(self.kind, params, seasonal, variance_scale, sign, layout)
    }

    pub fn loglik(
        &self,
        params: &EmissionParams,
        seasonal: [f64; 2],
        variance_scale: f64,
        ctx: &Context,
    ) -> f64 {
        self.view(params, seasonal, variance_scale, ctx.model.ar_sign, ctx.layout)
            .loglik(&self.records)
    }

    pub fn coefficient_acceptance(&self) -> AcceptanceCount {
        self.coef.count
    }

    pub fn annual_acceptance(&self) -> AcceptanceCount {
        let mut total = AcceptanceCount::default();
        for p in &self.annual[1..] {
            total.merge(p.count);
        }
        total
    }

    /// One sweep over all blocks of this emission, starting from the block
    /// log-likelihood `ll` at the current state. Returns the final one.
    #[allow(clippy::too_many_arguments)]
    pub fn update<R: Rng + ?Sized>(
        &mut self,
        params: &mut EmissionParams,
        seasonal: [f64; 2],
        variance_scale: f64,
        mut ll: f64,
        ctx: &Context,
        adapt: bool,
        rng: &mut R,
    ) -> Result<f64> {
        let layout = ctx.layout;
        let n_sites = layout.n_sites();
        let sd = ctx.model.coefficient_prior_sd;
        let view = self.view(params, seasonal, variance_scale, ctx.model.ar_sign, layout);
        if !ll.is_finite() {
            return Err(Error::InvalidParameters(format!("emission log-likelihood is {ll}")));
        }

        // Local intercept field given the global coefficients.
        let fixed_part: Vec<f64> = layout
            .covariates
            .iter()
            .map(|c| params.intercept + params.elevation * c.elevation + params.latitude * c.latitude)
            .collect();
        let f_chol = &ctx.prior.chol_l * params.intercept_field.hyper.variance.sqrt();
        let mut scratch = view.clone();
        // The level surrogate shifts with the current coefficients.
        let surrogate = self.level_fit.current.as_ref().map(|s| Surrogate {
            mean: s.mean.iter().zip(&fixed_part).map(|(m, c)| m - c).collect(),
            chol_l: s.chol_l.clone(),
        });
        let (f_new, new_ll) = slice_move(
            &params.intercept_field.values,
            ll,
            &vec![0.0; n_sites],
            &f_chol,
            surrogate.as_ref(),
            |f| {
                for s in 0..n_sites {
                    scratch.site_level[s] = fixed_part[s] + f[s];
                }
                scratch.loglik(&self.records)
            },
            rng,
        );
        params.intercept_field.values = f_new;
        ll = new_ll;

        // β₀ and the field jointly along the direction that leaves every
        // site level unchanged.
        self.ridge_move(params, ctx, rng)?;

        // Regression coefficients and ρ.
        let current = [params.intercept, params.elevation, params.latitude, params.rho];
        let proposal = self.coef.propose(&current, rng);
        let mut accepted = false;
        if proposal[3].abs() < 1.0 {
            let mut candidate = params.clone();
            candidate.intercept = proposal[0];
            candidate.elevation = proposal[1];
            candidate.latitude = proposal[2];
            candidate.rho = proposal[3];
            let cand_view = self.view(&candidate, seasonal, variance_scale, ctx.model.ar_sign, layout);
            let cand_ll = cand_view.loglik(&self.records);
            let log_prior = |b: &[f64]| -0.5 * (b[0] * b[0] + b[1] * b[1] + b[2] * b[2]) / (sd * sd);
            let log_ratio = cand_ll - ll + log_prior(&proposal) - log_prior(&current);
            if rng.random::<f64>().ln() < log_ratio {
                *params = candidate;
                ll = cand_ll;
                accepted = true;
            }
        }
        let state = [params.intercept, params.elevation, params.latitude, params.rho];
        self.coef.record(accepted, &state, adapt);

        // Annual effects; year 0 stays at 0. Per-record terms are cached so
        // each proposal only evaluates the records touching its year.
        let mut view = self.view(params, seasonal, variance_scale, ctx.model.ar_sign, layout);
        let annual_sd = ctx.model.annual_prior_sd;
        if params.annual.len() > 1 {
            let mut cache: Vec<f64> = self.records.iter().map(|r| view.record_loglik(r)).collect();
            let mut fresh = Vec::new();
            for k in 1..params.annual.len() {
                let idx = &self.by_year[k];
                let old = view.annual[k];
                let new = self.annual[k].propose(old, rng);
                view.annual[k] = new;
                fresh.clear();
                fresh.extend(idx.iter().map(|&i| view.record_loglik(&self.records[i])));
                let old_local: f64 = idx.iter().map(|&i| cache[i]).sum();
                let new_local: f64 = fresh.iter().sum();
                let log_ratio = new_local - old_local - 0.5 * (new * new - old * old) / (annual_sd * annual_sd);
                let accept = rng.random::<f64>().ln() < log_ratio;
                if accept {
                    params.annual[k] = new;
                    for (&i, v) in idx.iter().zip(&fresh) {
                        cache[i] = *v;
                    }
                } else {
                    view.annual[k] = old;
                }
                self.annual[k].record(accept, adapt);
            }
            ll = cache.iter().sum();
        }

        // Log-variance field around its mean.
        let g = &params.log_variance_field;
        let g_chol = &ctx.prior.chol_l * g.hyper.variance.sqrt();
        let mut scratch = view.clone();
        let (g_new, new_ll) = slice_move(
            &g.values,
            ll,
            &vec![g.hyper.mean; n_sites],
            &g_chol,
            self.logvar_fit.current.as_ref(),
            |g| {
                for s in 0..n_sites {
                    scratch.set_variance(s, variance_scale * g[s].exp());
                }
                scratch.loglik(&self.records)
            },
            rng,
        );
        params.log_variance_field.values = g_new;
        ll = new_ll;

        self.update_hyper(params, ctx, rng)?;
        let levels: Vec<f64> = (0..n_sites).map(|s| params.site_level(s, &layout.covariates[s])).collect();
        self.level_fit.observe(&levels, adapt);
        self.logvar_fit.observe(&params.log_variance_field.values, adapt);
        Ok(ll)
    }

    /// Exact draw of (β₀, β₁, β₂) with every site level β₀ + β₁e + β₂l + β₀(s)
    /// held fixed; the field absorbs the difference. The likelihood is
    /// unchanged, so only the priors enter.
    fn ridge_move<R: Rng + ?Sized>(
        &self,
        params: &mut EmissionParams,
        ctx: &Context,
        rng: &mut R,
    ) -> Result<()> {
        let layout = ctx.layout;
        let n = layout.n_sites();
        let x = DMatrix::from_fn(n, 3, |s, j| match j {
            0 => 1.0,
            1 => layout.covariates[s].elevation,
            _ => layout.covariates[s].latitude,
        });
        let levels = DVector::from_iterator(
            n,
            (0..n).map(|s| params.site_level(s, &layout.covariates[s])),
        );
        let tau2 = params.intercept_field.hyper.variance;
        let xt_cinv = x.transpose() * &ctx.prior.inv;
        let precision: Matrix3<f64> = Matrix3::from_iterator((&xt_cinv * &x / tau2).iter().copied())
            + Matrix3::identity() / ctx.model.coefficient_prior_sd.powi(2);
        let rhs: Vector3<f64> = Vector3::from_iterator((&xt_cinv * &levels / tau2).iter().copied());
        let chol = precision.cholesky().ok_or(Error::NotPositiveDefinite { attempts: 1 })?;
        let mean = chol.solve(&rhs);
        let z = Vector3::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal));
        let beta = mean
            + chol
                .l()
                .transpose()
                .solve_upper_triangular(&z)
                .ok_or(Error::NotPositiveDefinite { attempts: 1 })?;
        params.intercept = beta[0];
        params.elevation = beta[1];
        params.latitude = beta[2];
        for s in 0..n {
            let c = &layout.covariates[s];
            params.intercept_field.values[s] =
                levels[s] - beta[0] - beta[1] * c.elevation - beta[2] * c.latitude;
        }
        Ok(())
    }

    fn update_hyper<R: Rng + ?Sized>(
        &self,
        params: &mut EmissionParams,
        ctx: &Context,
        rng: &mut R,
    ) -> Result<()> {
        let n = ctx.layout.n_sites() as f64;
        let (a, b) = (ctx.model.variance_prior_shape, ctx.model.variance_prior_rate);
        let f = &params.intercept_field.values;
        params.intercept_field.hyper.variance =
            invgamma_sample(a + 0.5 * n, b + 0.5 * ctx.prior.form(f, f), rng)?;

        let g = &params.log_variance_field.values;
        let ones = vec![1.0; g.len()];
        let tau2 = params.log_variance_field.hyper.variance;
        let precision = ctx.model.hypermean_prior_sd.powi(-2) + ctx.prior.form(&ones, &ones) / tau2;
        let mean = ctx.prior.form(&ones, g) / tau2 / precision;
        let m = mean + rng.sample::<f64, _>(StandardNormal) / precision.sqrt();
        params.log_variance_field.hyper.mean = m;
        let centered: Vec<f64> = g.iter().map(|v| v - m).collect();
        params.log_variance_field.hyper.variance =
            invgamma_sample(a + 0.5 * n, b + 0.5 * ctx.prior.form(&centered, &centered), rng)?;
        Ok(())
    }
}
