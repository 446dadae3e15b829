//! Update of the global scale-mixture variable ω of the above-threshold
//! emission.
//!
//! Truncation at q makes the ω conditional non-conjugate, so ω moves by a
//! random walk on log ω. The initial step is the log-scale spread of the
//! untruncated InvGamma((ν + n)/2, ·) conditional.

use rand::Rng;

use super::adapt::ScalarProposal;
use crate::dist::invgamma_logpdf;

/// Acceptance rate the log ω step adapts toward during burn-in.
pub const OMEGA_TARGET_ACCEPTANCE: f64 = 0.4;

/// Random-walk sd on log ω for `n_above` above-threshold observations.
pub fn initial_omega_step(dof: f64, n_above: usize) -> f64 {
    2.4 * (2.0 / (dof + n_above as f64)).sqrt()
}

/// Log conditional density of η = ln ω up to a constant.
fn log_target(omega: f64, ll: f64, dof: f64) -> f64 {
    invgamma_logpdf(omega, 0.5 * dof, 0.5 * dof) + ll + omega.ln()
}

/// One Metropolis step on ω. `current_ll` must equal `loglik(omega)`; the
/// result is the new (ω, log-likelihood) pair.
pub fn update_omega<R, F>(
    omega: f64,
    current_ll: f64,
    dof: f64,
    proposal: &mut ScalarProposal,
    adapt: bool,
    mut loglik: F,
    rng: &mut R,
) -> (f64, f64)
where
    R: Rng + ?Sized,
    F: FnMut(f64) -> f64,
{
    let candidate = proposal.propose(omega.ln(), rng).exp();
    if !(candidate > 0.0 && candidate.is_finite()) {
        proposal.record(false, adapt);
        return (omega, current_ll);
    }
    let ll = loglik(candidate);
    let log_ratio = log_target(candidate, ll, dof) - log_target(omega, current_ll, dof);
    let accept = rng.random::<f64>().ln() < log_ratio;
    proposal.record(accept, adapt);
    if accept {
        (candidate, ll)
    } else {
        (omega, current_ll)
    }
}
