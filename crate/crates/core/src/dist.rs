//! Probability kernels: standard normal helpers, truncated normal and
//! truncated Student-t, inverse gamma, probit link and dense multivariate
//! normal draws.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::{Distribution, Exp, Gamma, StandardNormal};
use statrs::distribution::{ContinuousCDF, StudentsT};
use statrs::function::erf::{erfc, erfc_inv};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

/// Degrees of freedom of the above-threshold t emission.
pub const DEFAULT_DOF: f64 = 3.0;

/// Standardized distance from the mean beyond which the truncated normal
/// sampler switches from inverse-CDF to exponential rejection.
pub const TAIL_SWITCH: f64 = 5.0;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

pub fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

pub fn norm_logpdf(x: f64, mean: f64, var: f64) -> f64 {
    let z = x - mean;
    -0.5 * z * z / var - 0.5 * var.ln() - LN_SQRT_2PI
}

/// log Φ(x), accurate in both tails.
pub fn log_norm_cdf(x: f64) -> f64 {
    if x > 0.0 {
        (-0.5 * erfc(x / std::f64::consts::SQRT_2)).ln_1p()
    } else if x > -35.0 {
        (0.5 * erfc(-x / std::f64::consts::SQRT_2)).ln()
    } else {
        // Asymptotic Mills-ratio series.
        let x2 = x * x;
        let series = 1.0 - 1.0 / x2 + 3.0 / (x2 * x2) - 15.0 / (x2 * x2 * x2);
        -0.5 * x2 - LN_SQRT_2PI - (-x).ln() + series.ln()
    }
}

/// Standard normal quantile without argument checks (0 → -∞, 1 → +∞).
pub fn norm_quantile(p: f64) -> f64 {
    -std::f64::consts::SQRT_2 * erfc_inv(2.0 * p)
}

pub fn probit(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::ProbabilityOutOfRange(p));
    }
    Ok(norm_quantile(p))
}

pub fn probit_inv(eta: f64) -> f64 {
    norm_cdf(eta)
}

/// log(Φ(b) − Φ(a)) for a < b, computed on the side of zero where Φ keeps
/// relative precision.
pub fn log_norm_mass(a: f64, b: f64) -> f64 {
    if a >= b {
        return f64::NEG_INFINITY;
    }
    if b == f64::INFINITY {
        return log_norm_cdf(-a);
    }
    if a == f64::NEG_INFINITY {
        return log_norm_cdf(b);
    }
    if a > 0.0 {
        let hi = log_norm_cdf(-a);
        hi + (-(log_norm_cdf(-b) - hi).exp()).ln_1p()
    } else if b < 0.0 {
        let hi = log_norm_cdf(b);
        hi + (-(log_norm_cdf(a) - hi).exp()).ln_1p()
    } else {
        (norm_cdf(b) - norm_cdf(a)).ln()
    }
}

fn check_bounds(lower: f64, upper: f64, scale2: f64) -> Result<()> {
    if lower.is_nan() || upper.is_nan() || lower >= upper {
        return Err(Error::InvalidParameters(format!(
            "truncation bounds require lower < upper, got [{lower}, {upper}]"
        )));
    }
    if !(scale2 > 0.0) || !scale2.is_finite() {
        return Err(Error::InvalidParameters(format!(
            "scale² must be positive and finite, got {scale2}"
        )));
    }
    Ok(())
}

/// Normal(loc, scale2) restricted to `[lower, upper)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncNormal {
    pub loc: f64,
    pub scale2: f64,
    pub lower: f64,
    pub upper: f64,
}

impl TruncNormal {
    pub fn new(loc: f64, scale2: f64, lower: f64, upper: f64) -> Result<Self> {
        check_bounds(lower, upper, scale2)?;
        if !loc.is_finite() {
            return Err(Error::InvalidParameters(format!("location {loc} not finite")));
        }
        Ok(TruncNormal {
            loc,
            scale2,
            lower,
            upper,
        })
    }

    fn standardized_bounds(&self) -> (f64, f64, f64) {
        let sd = self.scale2.sqrt();
        ((self.lower - self.loc) / sd, (self.upper - self.loc) / sd, sd)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let (a, b, sd) = self.standardized_bounds();
        let x = self.loc + sd * std_trunc_normal(a, b, rng);
        clamp_half_open(x, self.lower, self.upper)
    }

    pub fn logpdf(&self, x: f64) -> f64 {
        if !(x >= self.lower && x <= self.upper) {
            return f64::NEG_INFINITY;
        }
        let (a, b, _) = self.standardized_bounds();
        norm_logpdf(x, self.loc, self.scale2) - log_norm_mass(a, b)
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x <= self.lower {
            return 0.0;
        }
        if x >= self.upper {
            return 1.0;
        }
        let (a, b, sd) = self.standardized_bounds();
        let z = (x - self.loc) / sd;
        let value = if a > 0.0 {
            (norm_cdf(-a) - norm_cdf(-z)) / (norm_cdf(-a) - norm_cdf(-b))
        } else {
            (norm_cdf(z) - norm_cdf(a)) / (norm_cdf(b) - norm_cdf(a))
        };
        value.clamp(0.0, 1.0)
    }
}

fn clamp_half_open(x: f64, lower: f64, upper: f64) -> f64 {
    if x >= upper {
        upper.next_down()
    } else if x < lower {
        lower
    } else {
        x
    }
}

/// Standard normal restricted to [a, b).
pub fn std_trunc_normal<R: Rng + ?Sized>(a: f64, b: f64, rng: &mut R) -> f64 {
    if a >= TAIL_SWITCH {
        tail_sample(a, b, rng)
    } else if b <= -TAIL_SWITCH {
        -tail_sample(-b, -a, rng)
    } else if a > 0.0 {
        -inverse_cdf_sample(-b, -a, rng)
    } else {
        inverse_cdf_sample(a, b, rng)
    }
}

fn inverse_cdf_sample<R: Rng + ?Sized>(a: f64, b: f64, rng: &mut R) -> f64 {
    let pa = norm_cdf(a);
    let pb = norm_cdf(b);
    let u: f64 = rng.random();
    norm_quantile(pa + u * (pb - pa)).clamp(a, b)
}

/// Rejection sampler for [a, b) with a ≥ `TAIL_SWITCH` (Robert, 1995).
fn tail_sample<R: Rng + ?Sized>(a: f64, b: f64, rng: &mut R) -> f64 {
    if (b - a) * a < 1.0 {
        // Narrow window: uniform proposal, density bounded by its value at a.
        loop {
            let z = a + (b - a) * rng.random::<f64>();
            let u: f64 = rng.random();
            if u.ln() <= 0.5 * (a * a - z * z) {
                return z;
            }
        }
    }
    let alpha = 0.5 * (a + (a * a + 4.0).sqrt());
    let exp = Exp::new(alpha).expect("positive rate");
    loop {
        let z = a + exp.sample(rng);
        let u: f64 = rng.random();
        if z < b && u.ln() <= -0.5 * (z - alpha) * (z - alpha) {
            return z;
        }
    }
}

/// Location-scale Student-t restricted to `[lower, upper)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncStudentT {
    pub loc: f64,
    pub scale2: f64,
    pub dof: f64,
    pub lower: f64,
    pub upper: f64,
}

impl TruncStudentT {
    pub fn new(loc: f64, scale2: f64, dof: f64, lower: f64, upper: f64) -> Result<Self> {
        check_bounds(lower, upper, scale2)?;
        if !(dof > 2.0) {
            return Err(Error::InvalidParameters(format!(
                "degrees of freedom must exceed 2, got {dof}"
            )));
        }
        if !loc.is_finite() {
            return Err(Error::InvalidParameters(format!("location {loc} not finite")));
        }
        Ok(TruncStudentT {
            loc,
            scale2,
            dof,
            lower,
            upper,
        })
    }

    fn standard(&self) -> StudentsT {
        StudentsT::new(0.0, 1.0, self.dof).expect("validated dof")
    }

    fn standardized_bounds(&self) -> (f64, f64, f64) {
        let sd = self.scale2.sqrt();
        ((self.lower - self.loc) / sd, (self.upper - self.loc) / sd, sd)
    }

    /// Probability mass of the truncation region under the untruncated t.
    pub fn mass(&self) -> f64 {
        let (a, b, _) = self.standardized_bounds();
        let t = self.standard();
        if a > 0.0 {
            t.sf(a) - t.sf(b)
        } else {
            t.cdf(b) - t.cdf(a)
        }
    }

    pub fn logpdf(&self, x: f64) -> f64 {
        if !(x >= self.lower && x <= self.upper) {
            return f64::NEG_INFINITY;
        }
        let sd = self.scale2.sqrt();
        student_t_logpdf((x - self.loc) / sd, self.dof) - sd.ln() - self.mass().ln()
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x <= self.lower {
            return 0.0;
        }
        if x >= self.upper {
            return 1.0;
        }
        let (a, _, sd) = self.standardized_bounds();
        let t = self.standard();
        let z = (x - self.loc) / sd;
        let partial = if a > 0.0 { t.sf(a) - t.sf(z) } else { t.cdf(z) - t.cdf(a) };
        (partial / self.mass()).clamp(0.0, 1.0)
    }

    /// Draws through the normal scale mixture: ω ~ InvGamma(ν/2, ν/2), then
    /// a truncated normal with variance ω·scale². Under truncation the mixing
    /// distribution of ω is tilted by the region's mass, so ω is accepted
    /// with probability P(region | ω). When the region carries little t mass
    /// the inverse CDF is used instead.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let (a, b, sd) = self.standardized_bounds();
        let mass = self.mass();
        if mass >= 0.05 {
            let half = 0.5 * self.dof;
            loop {
                let omega = invgamma_sample(half, half, rng).expect("positive shape");
                let root = omega.sqrt();
                let accept = log_norm_mass(a / root, b / root);
                if rng.random::<f64>().ln() <= accept {
                    let z = root * std_trunc_normal(a / root, b / root, rng);
                    return clamp_half_open(self.loc + sd * z, self.lower, self.upper);
                }
            }
        }
        let t = self.standard();
        let u: f64 = rng.random();
        let z = if a > 0.0 {
            // Work with survival probabilities in the upper tail.
            let (sa, sb) = (t.sf(a), t.sf(b));
            -t.inverse_cdf(sb + u * (sa - sb))
        } else {
            let (fa, fb) = (t.cdf(a), t.cdf(b));
            t.inverse_cdf(fa + u * (fb - fa))
        };
        clamp_half_open(self.loc + sd * z.clamp(a, b), self.lower, self.upper)
    }
}

/// Standard Student-t log density.
pub fn student_t_logpdf(z: f64, dof: f64) -> f64 {
    ln_gamma(0.5 * (dof + 1.0))
        - ln_gamma(0.5 * dof)
        - 0.5 * (dof * std::f64::consts::PI).ln()
        - 0.5 * (dof + 1.0) * (z * z / dof).ln_1p()
}

/// Upper-tail probability of a standard Student-t.
pub fn student_t_sf(z: f64, dof: f64) -> f64 {
    StudentsT::new(0.0, 1.0, dof)
        .map(|t| t.sf(z))
        .unwrap_or(f64::NAN)
}

/// Density ∝ x^(−shape−1) e^(−rate/x).
pub fn invgamma_sample<R: Rng + ?Sized>(shape: f64, rate: f64, rng: &mut R) -> Result<f64> {
    if !(shape > 0.0 && rate > 0.0) || !shape.is_finite() || !rate.is_finite() {
        return Err(Error::InvalidParameters(format!(
            "inverse gamma needs positive shape and rate, got ({shape}, {rate})"
        )));
    }
    let gamma = Gamma::new(shape, 1.0 / rate)
        .map_err(|e| Error::InvalidParameters(e.to_string()))?;
    Ok(1.0 / gamma.sample(rng))
}

pub fn invgamma_logpdf(x: f64, shape: f64, rate: f64) -> f64 {
    if x <= 0.0 {
        return f64::NEG_INFINITY;
    }
    shape * rate.ln() - ln_gamma(shape) - (shape + 1.0) * x.ln() - rate / x
}

/// Attempts before [`cholesky_jittered`] gives up, after the unjittered try.
pub const MAX_JITTER_DOUBLINGS: u32 = 8;

/// Cholesky factor, adding 1e-10·mean(diag) to the diagonal (doubling on
/// each retry) when the matrix is not numerically positive definite.
/// Returns the factor and the jitter that was applied.
pub fn cholesky_jittered(matrix: &DMatrix<f64>) -> Result<(Cholesky<f64, Dyn>, f64)> {
    if let Some(chol) = Cholesky::new(matrix.clone()) {
        return Ok((chol, 0.0));
    }
    let n = matrix.nrows();
    let mean_diag = (0..n).map(|i| matrix[(i, i)]).sum::<f64>() / n.max(1) as f64;
    let mut jitter = 1e-10 * mean_diag.abs().max(f64::MIN_POSITIVE);
    for _ in 0..=MAX_JITTER_DOUBLINGS {
        let mut m = matrix.clone();
        for i in 0..n {
            m[(i, i)] += jitter;
        }
        if let Some(chol) = Cholesky::new(m) {
            return Ok((chol, jitter));
        }
        jitter *= 2.0;
    }
    Err(Error::NotPositiveDefinite {
        attempts: MAX_JITTER_DOUBLINGS + 1,
    })
}

pub fn standard_normal_vector<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DVector<f64> {
    DVector::from_iterator(n, (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)))
}

pub fn mvn_chol_sample<R: Rng + ?Sized>(
    mean: &[f64],
    cov: &DMatrix<f64>,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if cov.nrows() != mean.len() || cov.ncols() != mean.len() {
        return Err(Error::InvalidParameters("covariance shape mismatch".into()));
    }
    let (chol, _) = cholesky_jittered(cov)?;
    let z = standard_normal_vector(mean.len(), rng);
    let x = chol.l() * z;
    Ok(mean.iter().zip(x.iter()).map(|(m, d)| m + d).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    /// Composite Simpson on [a, b].
    fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let n = n + n % 2;
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * f(a + i as f64 * h);
        }
        s * h / 3.0
    }

    /// ∫ over the real line by substituting x = tan(θ).
    fn integrate_line(f: impl Fn(f64) -> f64, lo: f64, hi: f64) -> f64 {
        let g = |th: f64| {
            let x = th.tan().clamp(lo, hi);
            let c = th.cos();
            f(x) / (c * c)
        };
        simpson(g, lo.atan(), hi.atan(), 200_000)
    }

    #[test]
    fn half_normal_mean() {
        let tn = TruncNormal::new(0.0, 1.0, f64::NEG_INFINITY, 0.0).unwrap();
        let mut r = rng(1);
        let n = 1_000_000;
        let mean = (0..n).map(|_| tn.sample(&mut r)).sum::<f64>() / n as f64;
        let expect = -(2.0 / std::f64::consts::PI).sqrt();
        assert!((mean - expect).abs() < 0.003, "{mean} vs {expect}");
    }

    #[test]
    fn vacuous_bounds_moments() {
        let tn = TruncNormal::new(1.0, 4.0, -1e15, 1e15).unwrap();
        let mut r = rng(2);
        let n = 200_000;
        let xs: Vec<f64> = (0..n).map(|_| tn.sample(&mut r)).collect();
        let m = xs.iter().sum::<f64>() / n as f64;
        let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n as f64;
        assert!((m - 1.0).abs() < 0.02);
        assert!((v - 4.0).abs() < 0.06);
    }

    #[test]
    fn far_tail_support() {
        let tn = TruncNormal::new(0.0, 1.0, 8.0, f64::INFINITY).unwrap();
        let mut r = rng(3);
        for _ in 0..100_000 {
            let x = tn.sample(&mut r);
            assert!(x.is_finite() && x >= 8.0);
        }
        let narrow = TruncNormal::new(0.0, 1.0, -30.0, -29.99).unwrap();
        for _ in 0..10_000 {
            let x = narrow.sample(&mut r);
            assert!((-30.0..-29.99).contains(&x));
        }
    }

    #[test]
    fn tail_switch_matches_body_distribution() {
        // Mean of N(0,1) on [a, ∞) is φ(a)/(1−Φ(a)); compare across the switch.
        let mut r = rng(4);
        for a in [4.5, 5.0, 6.0] {
            let tn = TruncNormal::new(0.0, 1.0, a, f64::INFINITY).unwrap();
            let n = 200_000;
            let mean = (0..n).map(|_| tn.sample(&mut r)).sum::<f64>() / n as f64;
            let expect = (norm_logpdf(a, 0.0, 1.0) - log_norm_cdf(-a)).exp();
            assert!((mean - expect).abs() < 3e-3, "a={a}: {mean} vs {expect}");
        }
    }

    #[test]
    fn upper_bound_is_excluded() {
        let tn = TruncNormal::new(10.0, 1e-6, f64::NEG_INFINITY, 10.0).unwrap();
        let mut r = rng(5);
        for _ in 0..10_000 {
            assert!(tn.sample(&mut r) < 10.0);
        }
    }

    #[test]
    fn invalid_bounds() {
        assert!(TruncNormal::new(0.0, 1.0, 1.0, 1.0).is_err());
        assert!(TruncNormal::new(0.0, 0.0, 0.0, 1.0).is_err());
        assert!(TruncStudentT::new(0.0, 1.0, 2.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn tn_logpdf_vacuous_and_outside() {
        let tn = TruncNormal::new(0.3, 2.0, -1e15, 1e15).unwrap();
        for x in [-3.0, 0.0, 1.7] {
            assert!((tn.logpdf(x) - norm_logpdf(x, 0.3, 2.0)).abs() < 1e-12);
        }
        let tn = TruncNormal::new(0.0, 1.0, 0.0, 1.0).unwrap();
        assert_eq!(tn.logpdf(-0.1), f64::NEG_INFINITY);
        assert_eq!(tn.logpdf(1.1), f64::NEG_INFINITY);
    }

    #[test]
    fn tn_pdf_integrates_to_one() {
        for (loc, s2, lo, hi) in [
            (0.0, 1.0, -0.5, 2.0),
            (3.0, 0.5, f64::NEG_INFINITY, 2.0),
            (-1.0, 4.0, 2.5, f64::INFINITY),
            (0.0, 1.0, 6.0, f64::INFINITY),
        ] {
            let tn = TruncNormal::new(loc, s2, lo, hi).unwrap();
            let total = integrate_line(|x| tn.logpdf(x).exp(), lo.max(-1e6), hi.min(1e6));
            assert!((total - 1.0).abs() < 1e-8, "{loc} {s2} {lo} {hi}: {total}");
        }
    }

    #[test]
    fn tn_cdf_endpoints_and_monotone() {
        let tn = TruncNormal::new(1.0, 2.0, -1.0, 3.0).unwrap();
        assert_eq!(tn.cdf(-1.0), 0.0);
        assert_eq!(tn.cdf(3.0), 1.0);
        let mut prev = 0.0;
        for i in 0..=400 {
            let c = tn.cdf(-1.0 + i as f64 * 0.01);
            assert!(c >= prev);
            prev = c;
        }
    }

    #[test]
    fn log_norm_cdf_tails() {
        // Reference values of log Φ(x) from the asymptotic expansion and erfc.
        assert!((log_norm_cdf(0.0) - 0.5f64.ln()).abs() < 1e-15);
        assert!((log_norm_cdf(-40.0) - (-804.608_442_013_754_3)).abs() < 1e-6);
        let at34 = (0.5 * erfc(34.0 / std::f64::consts::SQRT_2)).ln();
        let series = {
            let x: f64 = -34.0;
            let x2 = x * x;
            -0.5 * x2 - LN_SQRT_2PI - (-x).ln()
                + (1.0 - 1.0 / x2 + 3.0 / (x2 * x2) - 15.0 / (x2 * x2 * x2)).ln()
        };
        assert!((at34 - series).abs() < 1e-9);
        assert!(log_norm_cdf(10.0) < 0.0 && log_norm_cdf(10.0) > -1e-22);
    }

    fn ks_statistic(mut xs: Vec<f64>, cdf: impl Fn(f64) -> f64) -> f64 {
        xs.sort_by(f64::total_cmp);
        let n = xs.len() as f64;
        xs.iter()
            .enumerate()
            .map(|(i, &x)| {
                let f = cdf(x);
                (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
            })
            .fold(0.0, f64::max)
    }

    /// Asymptotic two-sided KS critical value at α = 0.01.
    fn ks_critical_01(n: usize) -> f64 {
        1.628 / (n as f64).sqrt()
    }

    #[test]
    fn tt_vacuous_matches_t3() {
        let tt = TruncStudentT::new(0.0, 1.0, 3.0, -1e15, 1e15).unwrap();
        let mut r = rng(6);
        let n = 100_000;
        let xs: Vec<f64> = (0..n).map(|_| tt.sample(&mut r)).collect();
        let t3 = StudentsT::new(0.0, 1.0, 3.0).unwrap();
        let d = ks_statistic(xs, |x| t3.cdf(x));
        assert!(d < ks_critical_01(n), "D = {d}");
    }

    #[test]
    fn tt_truncated_sampler_matches_cdf() {
        let mut r = rng(7);
        for (loc, s2, lo, hi) in [(30.0, 2.0, 32.0, f64::INFINITY), (0.0, 1.0, 12.0, f64::INFINITY)] {
            let tt = TruncStudentT::new(loc, s2, 3.0, lo, hi).unwrap();
            let n = 20_000;
            let xs: Vec<f64> = (0..n).map(|_| tt.sample(&mut r)).collect();
            assert!(xs.iter().all(|&x| x >= lo));
            let d = ks_statistic(xs, |x| tt.cdf(x));
            assert!(d < ks_critical_01(n), "D = {d}");
        }
    }

    #[test]
    fn tt_logpdf_outside_and_limit() {
        let tt = TruncStudentT::new(0.0, 1.0, 3.0, 0.0, f64::INFINITY).unwrap();
        assert_eq!(tt.logpdf(-1.0), f64::NEG_INFINITY);
        let big = TruncStudentT::new(0.5, 2.0, 1e6, -1.0, 3.0).unwrap();
        let tn = TruncNormal::new(0.5, 2.0, -1.0, 3.0).unwrap();
        for x in [-0.9, 0.0, 1.0, 2.9] {
            assert!((big.logpdf(x) - tn.logpdf(x)).abs() < 1e-4, "{x}");
        }
    }

    #[test]
    fn tt_integrates_to_one() {
        let mut r = rng(8);
        for _ in 0..20 {
            let loc = r.random_range(-3.0..3.0);
            let s2 = r.random_range(0.2..4.0);
            let lo = r.random_range(-4.0..2.0);
            let hi = if r.random::<bool>() { f64::INFINITY } else { lo + r.random_range(0.5..5.0) };
            let tt = TruncStudentT::new(loc, s2, 3.0, lo, hi).unwrap();
            let total = integrate_line(|x| tt.logpdf(x).exp(), lo, hi.min(1e9));
            assert!((total - 1.0).abs() < 1e-6, "{total}");
        }
    }

    #[test]
    fn scale_mixture_identity() {
        // ∫ N(x; loc, ω s²) InvGamma(ω; ν/2, ν/2) dω equals the t density.
        let nu = 3.0;
        let mut r = rng(9);
        for _ in 0..10 {
            let loc = r.random_range(-2.0..2.0);
            let s2 = r.random_range(0.3..3.0);
            let x = r.random_range(-6.0..6.0);
            // Integrate over log ω.
            let mixed = simpson(
                |lw: f64| {
                    let w = lw.exp();
                    (norm_logpdf(x, loc, w * s2) + invgamma_logpdf(w, nu / 2.0, nu / 2.0)).exp() * w
                },
                -25.0,
                25.0,
                200_000,
            );
            let sd = s2.sqrt();
            let direct = (student_t_logpdf((x - loc) / sd, nu) - sd.ln()).exp();
            assert!((mixed - direct).abs() < 1e-6, "{mixed} vs {direct}");
        }
    }

    #[test]
    fn invgamma_means() {
        let mut r = rng(10);
        let n = 1_000_000;
        let m = (0..n).map(|_| invgamma_sample(2.0, 2.0, &mut r).unwrap()).sum::<f64>() / n as f64;
        assert!((m - 2.0).abs() < 0.02, "{m}");
        let m = (0..n).map(|_| invgamma_sample(3.0, 2.0, &mut r).unwrap()).sum::<f64>() / n as f64;
        assert!((m - 1.0).abs() < 0.01, "{m}");
        assert!(invgamma_sample(0.0, 1.0, &mut r).is_err());
        assert!(invgamma_sample(1.0, -1.0, &mut r).is_err());
    }

    #[test]
    fn invgamma_reciprocal_is_gamma() {
        let mut r = rng(11);
        let n = 50_000;
        let xs: Vec<f64> = (0..n).map(|_| 1.0 / invgamma_sample(2.5, 1.5, &mut r).unwrap()).collect();
        let g = statrs::distribution::Gamma::new(2.5, 1.5).unwrap();
        let d = ks_statistic(xs, |x| g.cdf(x));
        assert!(d < ks_critical_01(n), "D = {d}");
    }

    #[test]
    fn probit_values() {
        assert_eq!(probit_inv(0.0), 0.5);
        assert!((probit(0.975).unwrap() - 1.959_964).abs() < 1e-5);
        assert!(probit(0.0).is_err() && probit(1.0).is_err() && probit(f64::NAN).is_err());
        for i in 1..1000 {
            let p = i as f64 / 1000.0;
            assert!((probit_inv(probit(p).unwrap()) - p).abs() < 1e-10);
        }
    }

    #[test]
    fn mvn_identity_covariance() {
        let mut r = rng(12);
        let cov = DMatrix::identity(2, 2);
        let n = 100_000;
        let draws: Vec<Vec<f64>> = (0..n).map(|_| mvn_chol_sample(&[1.0, -1.0], &cov, &mut r).unwrap()).collect();
        let mean: Vec<f64> = (0..2).map(|j| draws.iter().map(|d| d[j]).sum::<f64>() / n as f64).collect();
        for i in 0..2 {
            for j in 0..2 {
                let c = draws.iter().map(|d| (d[i] - mean[i]) * (d[j] - mean[j])).sum::<f64>() / n as f64;
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((c - expect).abs() < 0.02);
            }
        }
    }

    #[test]
    fn mvn_degenerate_and_reconstruction() {
        let mut r = rng(13);
        let cov = DMatrix::from_diagonal_element(3, 3, 1e-12);
        let x = mvn_chol_sample(&[1.0, 2.0, 3.0], &cov, &mut r).unwrap();
        for (a, b) in x.iter().zip([1.0, 2.0, 3.0]) {
            assert!((a - b).abs() < 1e-5);
        }
        let s = DMatrix::from_row_slice(3, 3, &[4.0, 2.0, 0.6, 2.0, 2.0, 0.5, 0.6, 0.5, 3.0]);
        let (chol, jitter) = cholesky_jittered(&s).unwrap();
        assert_eq!(jitter, 0.0);
        let l = chol.l();
        assert!((&l * l.transpose() - &s).abs().max() < 1e-10);
    }

    #[test]
    fn jitter_rescues_singular_and_fails_indefinite() {
        let singular = DMatrix::from_element(2, 2, 1.0);
        let (_, jitter) = cholesky_jittered(&singular).unwrap();
        assert!(jitter > 0.0);
        let indefinite = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(matches!(
            cholesky_jittered(&indefinite),
            Err(Error::NotPositiveDefinite { .. })
        ));
    }

    #[test]
    fn samplers_are_seed_deterministic() {
        let tn = TruncNormal::new(0.0, 1.0, 0.5, 3.0).unwrap();
        let tt = TruncStudentT::new(0.0, 1.0, 3.0, 1.0, f64::INFINITY).unwrap();
        let draw = |seed| {
            let mut r = rng(seed);
            (
                tn.sample(&mut r),
                tt.sample(&mut r),
                invgamma_sample(2.0, 2.0, &mut r).unwrap(),
            )
        };
        assert_eq!(draw(42), draw(42));
    }
}
