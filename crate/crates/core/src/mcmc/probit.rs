//! Transition-probability block under latent Gaussian augmentation.
//!
//! Each modeled day carries z ~ N(η, 1) with u = 1 ⇔ z ≥ 0, so P(u = 1) =
//! Φ(η). Given the latents, (φ₀ … φ₄, φ₀(s)) is jointly Gaussian and is
//! drawn exactly; the field variance τ² is then conjugate.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::dist::{invgamma_sample, standard_normal_vector, std_trunc_normal};
use crate::error::{Error, Result};
use crate::model::{ModelConfig, ModelLayout, Transition, TransitionParams};

const N_COEF: usize = 5;

/// Latent z per modeled transition; z ≥ 0 exactly when the day is above q.
#[derive(Debug, Clone, Default)]
pub struct ProbitAugmentation {
    pub latent: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct ProbitBlock {
    design: Vec<[f64; N_COEF]>,
    site: Vec<usize>,
    above: Vec<bool>,
    /// Σ x̃ x̃ᵀ for x̃ = (x, site indicator).
    gram: DMatrix<f64>,
    corr_inv: DMatrix<f64>,
    n_sites: usize,
    pub augmentation: ProbitAugmentation,
}

impl ProbitBlock {
    pub fn new(records: &[Transition], layout: &ModelLayout, corr_inv: DMatrix<f64>) -> Self {
        let n_sites = layout.n_sites();
        let dim = N_COEF + n_sites;
        let mut gram = DMatrix::zeros(dim, dim);
        let mut design = Vec::with_capacity(records.len());
        for r in records {
            let d = r.y_prev - layout.thresholds[r.site];
            let x = [1.0, d, d.max(0.0), r.sin, r.cos];
            let j = N_COEF + r.site;
            for a in 0..N_COEF {
                for b in 0..N_COEF {
                    gram[(a, b)] += x[a] * x[b];
                }
                gram[(a, j)] += x[a];
                gram[(j, a)] += x[a];
            }
            gram[(j, j)] += 1.0;
            design.push(x);
        }
        ProbitBlock {
            design,
            site: records.iter().map(|r| r.site).collect(),
            above: records.iter().map(|r| r.above).collect(),
            gram,
            corr_inv,
            n_sites,
            augmentation: ProbitAugmentation {
                latent: vec![0.0; records.len()],
            },
        }
    }

    fn eta(&self, i: usize, params: &TransitionParams) -> f64 {
        let x = &self.design[i];
        (0..N_COEF).map(|k| x[k] * params.coefs[k]).sum::<f64>() + params.field.values[self.site[i]]
    }

    /// Draws latents, then (φ, φ₀(s)) jointly, then the field variance.
    pub fn update<R: Rng + ?Sized>(
        &mut self,
        params: &mut TransitionParams,
        config: &ModelConfig,
        rng: &mut R,
    ) -> Result<()> {
        self.draw_latents(params, rng);
        self.draw_coefficients(params, config, rng)?;
        let f = DVector::from_row_slice(&params.field.values);
        let quad = (f.transpose() * &self.corr_inv * &f)[(0, 0)];
        params.field.hyper.variance = invgamma_sample(
            config.variance_prior_shape + 0.5 * self.n_sites as f64,
            config.variance_prior_rate + 0.5 * quad,
            rng,
        )?;
        Ok(())
    }

    fn draw_latents<R: Rng + ?Sized>(&mut self, params: &TransitionParams, rng: &mut R) {
        for i in 0..self.design.len() {
            let eta = self.eta(i, params);
            let z = if self.above[i] {
                (eta + std_trunc_normal(-eta, f64::INFINITY, rng)).max(0.0)
            } else {
                let z = eta + std_trunc_normal(f64::NEG_INFINITY, -eta, rng);
                if z >= 0.0 {
                    -f64::MIN_POSITIVE
                } else {
                    z
                }
            };
            self.augmentation.latent[i] = z;
        }
    }

    fn draw_coefficients<R: Rng + ?Sized>(
        &self,
        params: &mut TransitionParams,
        config: &ModelConfig,
        rng: &mut R,
    ) -> Result<()> {
        let dim = N_COEF + self.n_sites;
        let mut precision = self.gram.clone();
        let coef_prec = config.coefficient_prior_sd.powi(-2);
        for k in 0..N_COEF {
            precision[(k, k)] += coef_prec;
        }
        let field_prec = 1.0 / params.field.hyper.variance;
        for a in 0..self.n_sites {
            for b in 0..self.n_sites {
                precision[(N_COEF + a, N_COEF + b)] += field_prec * self.corr_inv[(a, b)];
            }
        }
        let mut rhs = DVector::zeros(dim);
        for (i, &z) in self.augmentation.latent.iter().enumerate() {
            let x = &self.design[i];
            for k in 0..N_COEF {
                rhs[k] += x[k] * z;
            }
            rhs[N_COEF + self.site[i]] += z;
        }
        let chol = precision
            .cholesky()
            .ok_or(Error::NotPositiveDefinite { attempts: 1 })?;
        let mean = chol.solve(&rhs);
        let l = chol.l();
        let noise = l
            .transpose()
            .solve_upper_triangular(&standard_normal_vector(dim, rng))
            .ok_or(Error::NotPositiveDefinite { attempts: 1 })?;
        let draw = mean + noise;
        for k in 0..N_COEF {
            params.coefs[k] = draw[k];
        }
        for s in 0..self.n_sites {
            params.field.values[s] = draw[N_COEF + s];
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::norm_cdf;
    use crate::model::{CovariateScaling, ModelData};
    use crate::spatial::{build_corr, FieldRole, GpHyper, Site, SpatialField};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn layout(n_sites: usize) -> ModelLayout {
        ModelLayout {
            stations: Vec::new(),
            sites: (0..n_sites).map(|i| Site::new(i as f64, 40.0, 0.0)).collect(),
            covariates: Vec::new(),
            thresholds: vec![30.0; n_sites],
            first_year: 2000,
            n_years: 1,
            scaling: CovariateScaling::default(),
        }
    }

    fn synthetic(
        truth: &TransitionParams,
        n_per_site: usize,
        layout: &ModelLayout,
        rng: &mut ChaCha8Rng,
    ) -> Vec<Transition> {
        let mut out = Vec::new();
        for s in 0..layout.n_sites() {
            for i in 0..n_per_site {
                let y_prev = 24.0 + 10.0 * rng.random::<f64>();
                let a = std::f64::consts::TAU * (i % 365) as f64 / 365.0;
                let d = y_prev - 30.0;
                let c = &truth.coefs;
                let eta = c[0] + truth.field.values[s] + c[1] * d + c[2] * d.max(0.0)
                    + c[3] * a.sin() + c[4] * a.cos();
                let above = rng.random::<f64>() < norm_cdf(eta);
                out.push(Transition {
                    site: s,
                    y: if above { 31.0 } else { 29.0 },
                    y_prev,
                    above,
                    year: 0,
                    year_prev: 0,
                    sin: a.sin(),
                    cos: a.cos(),
                    sin_prev: 0.0,
                    cos_prev: 1.0,
                });
            }
        }
        out
    }

    fn field(values: Vec<f64>) -> SpatialField {
        SpatialField {
            role: FieldRole::Transition,
            values,
            hyper: GpHyper::with_effective_range(1.0, 400.0, 0.0),
        }
    }

    #[test]
    fn recovers_known_coefficients() {
        let lay = layout(3);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let truth = TransitionParams {
            coefs: [-0.8, 0.35, 0.25, 0.3, -0.4],
            field: field(vec![0.2, -0.15, 0.05]),
        };
        let records = synthetic(&truth, 3000, &lay, &mut rng);
        let corr_inv = build_corr(&lay.sites, 3.0 / 400.0).try_inverse().unwrap();
        let mut block = ProbitBlock::new(&records, &lay, corr_inv);
        let mut p = TransitionParams {
            coefs: [0.0; 5],
            field: field(vec![0.0; 3]),
        };
        let config = ModelConfig::default();
        let mut draws: Vec<[f64; 4]> = Vec::new();
        for it in 0..3000 {
            block.update(&mut p, &config, &mut rng).unwrap();
            for (i, z) in block.augmentation.latent.iter().enumerate() {
                assert_eq!(*z >= 0.0, records[i].above);
            }
            if it >= 1000 {
                draws.push([p.coefs[1], p.coefs[2], p.coefs[3], p.coefs[4]]);
            }
        }
        for k in 0..4 {
            let xs: Vec<f64> = draws.iter().map(|d| d[k]).collect();
            let m = xs.iter().sum::<f64>() / xs.len() as f64;
            let sd = (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / xs.len() as f64).sqrt();
            let t = truth.coefs[k + 1];
            assert!((m - t).abs() < 3.0 * sd, "coef {}: {m} ± {sd} vs {t}", k + 1);
        }
    }

    #[test]
    fn no_exceedances_drifts_to_prior_scale() {
        let lay = layout(2);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut truth = TransitionParams {
            coefs: [-60.0, 0.0, 0.0, 0.0, 0.0],
            field: field(vec![0.0; 2]),
        };
        let records = synthetic(&truth, 200, &lay, &mut rng);
        assert!(records.iter().all(|r| !r.above));
        let corr_inv = build_corr(&lay.sites, 3.0 / 400.0).try_inverse().unwrap();
        let mut block = ProbitBlock::new(&records, &lay, corr_inv);
        truth.coefs = [0.0; 5];
        for _ in 0..3000 {
            block.update(&mut truth, &ModelConfig::default(), &mut rng).unwrap();
        }
        assert!(truth.coefs[0] + truth.field.values[0] < -3.0, "{:?}", truth.coefs);
    }

    #[test]
    fn works_with_model_data_records() {
        let lay = layout(1);
        let data = ModelData {
            layout: lay.clone(),
            records: Vec::new(),
        };
        let corr_inv = build_corr(&lay.sites, 0.01).try_inverse().unwrap();
        let mut block = ProbitBlock::new(&data.records, &lay, corr_inv);
        let mut p = TransitionParams {
            coefs: [0.0; 5],
            field: field(vec![0.0]),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        block.update(&mut p, &ModelConfig::default(), &mut rng).unwrap();
        assert!(p.coefs.iter().all(|c| c.is_finite()));
    }
}
