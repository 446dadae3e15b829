//! Metropolis-within-Gibbs posterior sampling.
//!
//! One iteration of the two-state sampler visits, in order: each emission
//! (intercept-field slice move, exact ridge draw of (β₀, β₁, β₂) given the
//! site levels, adaptive random walk on (β₀, β₁, β₂, ρ), per-year annual
//! effects, log-variance field slice move, conjugate GP hyperparameters),
//! the shared seasonal pair, ω, and the augmented probit block. Slice moves
//! switch to a fitted Gaussian ellipse once enough burn-in draws exist.

pub mod adapt;
pub mod diagnostics;
mod emission;
pub mod ess;
pub mod omega;
pub mod probit;
mod sampler;

pub use diagnostics::{diagnostics, summarize_column, ParamSummary};
pub use emission::SpatialPrior;
pub use ess::{elliptical_slice, update_gp_field};
pub use omega::update_omega;
pub use probit::{ProbitAugmentation, ProbitBlock};
pub use sampler::{
    fit, fit_baseline, initial_state, BaselineChain, BlockAcceptance, PosteriorChain, SamplerConfig,
    TwoStateChain,
};
