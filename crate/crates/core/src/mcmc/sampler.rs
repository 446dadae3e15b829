use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adapt::{AcceptanceCount, AdaptiveMetropolis, ScalarProposal};
use super::emission::{Context, EmissionSampler, SpatialPrior};
use super::omega::{initial_omega_step, update_omega, OMEGA_TARGET_ACCEPTANCE};
use super::probit::ProbitBlock;
use crate::error::{Error, Result};
use crate::model::{
    loglik_single_state, loglik_two_state, zero_emission, BaselineState, EmissionKind,
    EmissionParams, ModelConfig, ModelData, ModelLayout, ParameterState, Transition,
};
use crate::spatial::FieldRole;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    pub iterations: usize,
    /// Fraction of iterations discarded, in [0, 1).
    pub burn_in: f64,
    pub thin: usize,
    pub seed: u64,
    /// Initial random-walk sd for (β₀, β₁, β₂, ρ) of each emission.
    pub coefficient_steps: [f64; 4],
    pub annual_step: f64,
    pub seasonal_step: f64,
    /// Initial sd on log ω; derived from the number of above-threshold days
    /// when absent.
    pub omega_step: Option<f64>,
    /// Burn-in iterations between refreshes of the adaptive proposal shapes.
    pub adaptation_interval: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            iterations: 200_000,
            burn_in: 0.5,
            thin: 1,
            seed: 1,
            coefficient_steps: [0.05, 0.05, 0.05, 0.02],
            annual_step: 0.1,
            seasonal_step: 0.02,
            omega_step: None,
            adaptation_interval: 100,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.burn_in) {
            return Err(Error::Config(format!("burn_in must be in [0, 1), got {}", self.burn_in)));
        }
        if self.thin == 0 {
            return Err(Error::Config("thin must be at least 1".into()));
        }
        let steps_ok = self.coefficient_steps.iter().chain([&self.annual_step, &self.seasonal_step]).all(|s| *s > 0.0)
            && self.omega_step.is_none_or(|s| s > 0.0);
        if !steps_ok {
            return Err(Error::Config("proposal steps must be positive".into()));
        }
        Ok(())
    }

    /// Iterations after burn-in: ⌊iterations·(1 − burn_in)⌋.
    pub fn kept_iterations(&self) -> usize {
        (self.iterations as f64 * (1.0 - self.burn_in)).floor() as usize
    }

    pub fn burn_in_iterations(&self) -> usize {
        self.iterations - self.kept_iterations()
    }

    /// Number of stored draws; a zero-iteration run stores the initial state.
    pub fn retained_draws(&self) -> usize {
        if self.iterations == 0 {
            1
        } else {
            self.kept_iterations() / self.thin
        }
    }

    fn keep(&self, iteration: usize) -> bool {
        let burn = self.burn_in_iterations();
        iteration >= burn && (iteration - burn + 1).is_multiple_of(self.thin)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockAcceptance {
    pub block: String,
    pub accepted: u64,
    pub proposed: u64,
}

impl BlockAcceptance {
    fn new(block: &str, count: AcceptanceCount) -> Self {
        BlockAcceptance {
            block: block.to_string(),
            accepted: count.accepted,
            proposed: count.proposed,
        }
    }

    pub fn rate(&self) -> f64 {
        AcceptanceCount {
            accepted: self.accepted,
            proposed: self.proposed,
        }
        .rate()
    }
}

/// Retained draws plus everything needed to interpret and reproduce them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorChain<S> {
    pub draws: Vec<S>,
    pub acceptance: Vec<BlockAcceptance>,
    pub sampler: SamplerConfig,
    pub model: ModelConfig,
    pub layout: ModelLayout,
}

pub type TwoStateChain = PosteriorChain<ParameterState>;
pub type BaselineChain = PosteriorChain<BaselineState>;

fn check_preconditions(data: &ModelData, model: &ModelConfig, sampler: &SamplerConfig) -> Result<()> {
    model.validate()?;
    sampler.validate()?;
    if data.n_sites() < 2 {
        return Err(Error::InvalidData(format!("need at least 2 sites, got {}", data.n_sites())));
    }
    if data.layout.n_years < 1 || data.records.is_empty() {
        return Err(Error::InvalidData("no modeled days (need consecutive observations)".into()));
    }
    Ok(())
}

fn mean(xs: impl Iterator<Item = f64>) -> Option<(f64, f64, usize)> {
    let (mut n, mut sum, mut sum2) = (0usize, 0.0, 0.0);
    for x in xs {
        n += 1;
        sum += x;
        sum2 += x * x;
    }
    (n > 0).then(|| {
        let m = sum / n as f64;
        (m, (sum2 / n as f64 - m * m).max(0.0), n)
    })
}

/// Intercept at the subset mean, σ²(s) at per-site empirical variances
/// (pooled when a site has fewer than two days), ρ at 0.5.
fn initial_emission(
    records: &[&Transition],
    roles: (FieldRole, FieldRole),
    layout: &ModelLayout,
    decay: f64,
) -> EmissionParams {
    let mut e = zero_emission(roles.0, roles.1, layout.n_sites(), layout.n_years, decay);
    let pooled = mean(records.iter().map(|r| r.y));
    let pooled_var = pooled.map_or(1.0, |(_, v, _)| v).max(0.01);
    e.intercept = pooled.map_or(0.0, |(m, _, _)| m);
    e.rho = 0.5;
    for s in 0..layout.n_sites() {
        let var = match mean(records.iter().filter(|r| r.site == s).map(|r| r.y)) {
            Some((_, v, n)) if n >= 2 => v.max(0.01),
            _ => pooled_var,
        };
        e.log_variance_field.values[s] = var.ln();
    }
    let g = &e.log_variance_field.values;
    e.log_variance_field.hyper.mean = g.iter().sum::<f64>() / g.len() as f64;
    e
}

pub fn initial_state(data: &ModelData, model: &ModelConfig) -> ParameterState {
    let layout = &data.layout;
    let decay = model.decay();
    let mut state = ParameterState::zeros(layout.n_sites(), layout.n_years, decay);
    let below: Vec<&Transition> = data.records.iter().filter(|r| !r.above).collect();
    let above: Vec<&Transition> = data.records.iter().filter(|r| r.above).collect();
    state.below = initial_emission(&below, (FieldRole::InterceptBelow, FieldRole::LogVarianceBelow), layout, decay);
    state.above = initial_emission(&above, (FieldRole::InterceptAbove, FieldRole::LogVarianceAbove), layout, decay);
    state
}

/// Random-walk step on (λ₁, λ₂). `current` holds the per-block
/// log-likelihoods at the current values; the returned ones match the state
/// after the step.
fn seasonal_move<R: Rng + ?Sized, const B: usize>(
    seasonal: &mut [f64; 2],
    proposal: &mut AdaptiveMetropolis,
    prior_sd: f64,
    adapt: bool,
    current: [f64; B],
    mut loglik: impl FnMut([f64; 2]) -> [f64; B],
    rng: &mut R,
) -> [f64; B] {
    let p = proposal.propose(seasonal.as_slice(), rng);
    let candidate = [p[0], p[1]];
    let cand = loglik(candidate);
    let total = |l: &[f64; B]| l.iter().sum::<f64>();
    let log_prior = |l: [f64; 2]| -0.5 * (l[0] * l[0] + l[1] * l[1]) / (prior_sd * prior_sd);
    let log_ratio = total(&cand) - total(&current) + log_prior(candidate) - log_prior(*seasonal);
    let accept = rng.random::<f64>().ln() < log_ratio;
    proposal.record(accept, if accept { &candidate } else { seasonal.as_slice() }, adapt);
    if accept {
        *seasonal = candidate;
        cand
    } else {
        current
    }
}

/// Metropolis-within-Gibbs sampler for the two-state model.
pub fn fit(data: &ModelData, model: &ModelConfig, sampler: &SamplerConfig) -> Result<TwoStateChain> {
    check_preconditions(data, model, sampler)?;
    let layout = &data.layout;
    let prior = SpatialPrior::new(&layout.sites, model.decay())?;
    let ctx = Context {
        layout,
        model,
        prior: &prior,
    };
    let mut state = initial_state(data, model);
    let ll0 = loglik_two_state(data, &state, model);
    if !ll0.is_finite() {
        return Err(Error::Initialization(format!(
            "log-likelihood at the initial state is {ll0}; check thresholds and data ranges"
        )));
    }

    let (above_records, below_records): (Vec<Transition>, Vec<Transition>) =
        data.records.iter().partition(|r| r.above);
    let n_above = above_records.len();
    let mut below = EmissionSampler::new(EmissionKind::Below, below_records, layout.n_sites(), layout.n_years, sampler);
    let mut above = EmissionSampler::new(EmissionKind::Above, above_records, layout.n_sites(), layout.n_years, sampler);
    let mut seasonal = AdaptiveMetropolis::new(&[sampler.seasonal_step; 2], 0.3, sampler.adaptation_interval);
    let mut omega = ScalarProposal::new(
        sampler.omega_step.unwrap_or_else(|| initial_omega_step(model.dof, n_above)),
        OMEGA_TARGET_ACCEPTANCE,
    );
    let mut probit = ProbitBlock::new(&data.records, layout, prior.inv.clone());
    let mut rng = ChaCha8Rng::seed_from_u64(sampler.seed);

    let mut draws = Vec::with_capacity(sampler.retained_draws());
    if sampler.iterations == 0 {
        draws.push(state.clone());
    }
    let burn = sampler.burn_in_iterations();
    let mut ll_below = below.loglik(&state.below, state.seasonal, 1.0, &ctx);
    let mut ll_above = above.loglik(&state.above, state.seasonal, state.omega, &ctx);
    for it in 0..sampler.iterations {
        let adapt = it < burn;
        ll_below = below.update(&mut state.below, state.seasonal, 1.0, ll_below, &ctx, adapt, &mut rng)?;
        ll_above = above.update(&mut state.above, state.seasonal, state.omega, ll_above, &ctx, adapt, &mut rng)?;

        let (b, a, w) = (&state.below, &state.above, state.omega);
        [ll_below, ll_above] = seasonal_move(
            &mut state.seasonal,
            &mut seasonal,
            model.coefficient_prior_sd,
            adapt,
            [ll_below, ll_above],
            |l| [below.loglik(b, l, 1.0, &ctx), above.loglik(a, l, w, &ctx)],
            &mut rng,
        );

        (state.omega, ll_above) = update_omega(
            state.omega,
            ll_above,
            model.dof,
            &mut omega,
            adapt,
            |w| above.loglik(&state.above, state.seasonal, w, &ctx),
            &mut rng,
        );

        probit.update(&mut state.transition, model, &mut rng)?;

        if sampler.keep(it) {
            draws.push(state.clone());
        }
    }

    let acceptance = vec![
        BlockAcceptance::new("coefficients_below", below.coefficient_acceptance()),
        BlockAcceptance::new("annual_below", below.annual_acceptance()),
        BlockAcceptance::new("coefficients_above", above.coefficient_acceptance()),
        BlockAcceptance::new("annual_above", above.annual_acceptance()),
        BlockAcceptance::new("seasonal", seasonal.count),
        BlockAcceptance::new("omega", omega.count),
    ];
    Ok(PosteriorChain {
        draws,
        acceptance,
        sampler: sampler.clone(),
        model: model.clone(),
        layout: layout.clone(),
    })
}

/// Sampler for the single-state t-AR(1) baseline. Uses the same emission
/// blocks with untruncated t errors over every modeled day.
pub fn fit_baseline(data: &ModelData, model: &ModelConfig, sampler: &SamplerConfig) -> Result<BaselineChain> {
    check_preconditions(data, model, sampler)?;
    let layout = &data.layout;
    let prior = SpatialPrior::new(&layout.sites, model.decay())?;
    let ctx = Context {
        layout,
        model,
        prior: &prior,
    };
    let all: Vec<&Transition> = data.records.iter().collect();
    let mut state = BaselineState {
        emission: initial_emission(&all, (FieldRole::InterceptBelow, FieldRole::LogVarianceBelow), layout, model.decay()),
        seasonal: [0.0; 2],
    };
    let ll0 = loglik_single_state(data, &state, model);
    if !ll0.is_finite() {
        return Err(Error::Initialization(format!("baseline log-likelihood at the initial state is {ll0}")));
    }
    let mut emission = EmissionSampler::new(
        EmissionKind::StudentT { dof: model.dof },
        data.records.clone(),
        layout.n_sites(),
        layout.n_years,
        sampler,
    );
    let mut seasonal = AdaptiveMetropolis::new(&[sampler.seasonal_step; 2], 0.3, sampler.adaptation_interval);
    let mut rng = ChaCha8Rng::seed_from_u64(sampler.seed);
    let mut draws = Vec::with_capacity(sampler.retained_draws());
    if sampler.iterations == 0 {
        draws.push(state.clone());
    }
    let burn = sampler.burn_in_iterations();
    let mut ll = emission.loglik(&state.emission, state.seasonal, 1.0, &ctx);
    for it in 0..sampler.iterations {
        let adapt = it < burn;
        ll = emission.update(&mut state.emission, state.seasonal, 1.0, ll, &ctx, adapt, &mut rng)?;
        let e = &state.emission;
        [ll] = seasonal_move(
            &mut state.seasonal,
            &mut seasonal,
            model.coefficient_prior_sd,
            adapt,
            [ll],
            |l| [emission.loglik(e, l, 1.0, &ctx)],
            &mut rng,
        );
        if sampler.keep(it) {
            draws.push(state.clone());
        }
    }
    let acceptance = vec![
        BlockAcceptance::new("coefficients", emission.coefficient_acceptance()),
        BlockAcceptance::new("annual", emission.annual_acceptance()),
        BlockAcceptance::new("seasonal", seasonal.count),
    ];
    Ok(PosteriorChain {
        draws,
        acceptance,
        sampler: sampler.clone(),
        model: model.clone(),
        layout: layout.clone(),
    })
}
