//! Spike-and-slab Gibbs sampler for a single wavelet-space outcome column.
//!
//! The column model is
//!
//! ```text
//! y = X* b + W theta + e,          e ~ N(0, sigma2 I)
//! b_p ~ g_p N(0, tau_p) + (1 - g_p) delta_0,   g_p ~ Bern(pi_p)
//! theta ~ N(0, 1e6 I),             p(sigma2) ∝ 1 / sigma2
//! ```
//!
//! Each sweep updates `(g_p, b_p)` jointly for every `p` with `b_p`
//! integrated out of the indicator step, then `theta` as a block, then
//! `sigma2` from its inverse-gamma conditional. The sampler keeps
//! `c = X*'(y - W theta) - G b` up to date so a coordinate update costs
//! `O(T*)` instead of `O(n)`.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Prior variance of the scalar-covariate coefficients.
pub const COVARIATE_PRIOR_VARIANCE: f64 = 1e6;

/// Relative ridge penalty used for the stabilized least-squares fits.
pub const RIDGE_FACTOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct McmcConfig {
    pub total_draws: usize,
    pub burn_in: usize,
    pub seed: u64,
    pub thin: usize,
}

impl Default for McmcConfig {
    fn default() -> Self {
        McmcConfig { total_draws: 2000, burn_in: 1000, seed: 20200101, thin: 1 }
    }
}

impl McmcConfig {
    pub fn retained(&self) -> usize {
        if self.thin == 0 || self.burn_in >= self.total_draws {
            return 0;
        }
        (self.total_draws - self.burn_in) / self.thin
    }

    pub fn validate(&self) -> Result<()> {
        if self.thin == 0 {
            return Err(Error::Config("thin must be at least 1".into()));
        }
        if self.burn_in >= self.total_draws {
            return Err(Error::Config(format!(
                "burn_in ({}) must be smaller than total_draws ({})",
                self.burn_in, self.total_draws
            )));
        }
        if self.retained() < 2 {
            return Err(Error::Config(format!(
                "only {} retained draws; need at least 2",
                self.retained()
            )));
        }
        Ok(())
    }

    fn keeps(&self, iteration: usize) -> bool {
        iteration >= self.burn_in && (iteration - self.burn_in + 1) % self.thin == 0
    }
}

/// Slab variances and inclusion probabilities indexed by exposure
/// coefficient `p` and outcome group `g`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpikeSlabHyper {
    pub coefficients: usize,
    pub groups: usize,
    tau: Vec<f64>,
    pi: Vec<f64>,
}

impl SpikeSlabHyper {
    pub fn uniform(coefficients: usize, groups: usize, pi: f64, tau: f64) -> Self {
        SpikeSlabHyper {
            coefficients,
            groups,
            tau: vec![tau; coefficients * groups],
            pi: vec![pi; coefficients * groups],
        }
    }

    pub fn tau(&self, p: usize, g: usize) -> f64 {
        self.tau[p * self.groups + g]
    }

    pub fn pi(&self, p: usize, g: usize) -> f64 {
        self.pi[p * self.groups + g]
    }

    pub fn set(&mut self, p: usize, g: usize, pi: f64, tau: f64) {
        self.pi[p * self.groups + g] = pi;
        self.tau[p * self.groups + g] = tau;
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.tau.iter().all(|t| t.is_finite() && *t > 0.0)
            && self.pi.iter().all(|p| *p > 0.0 && *p < 1.0);
        if !ok || self.tau.len() != self.coefficients * self.groups {
            return Err(Error::Config(
                "hyperparameters need finite tau > 0 and pi in (0, 1)".into(),
            ));
        }
        Ok(())
    }
}

/// Ridge-stabilized least-squares estimates for one column.
#[derive(Debug, Clone)]
pub struct RidgeFit {
    pub coef: Vec<f64>,
    pub se: Vec<f64>,
    pub sigma2: f64,
}

/// Shared design quantities for every column fit against the same `X*`
/// and `W`.
#[derive(Debug, Clone)]
pub struct Design {
    xstar: DMatrix<f64>,
    w: DMatrix<f64>,
    gram: DMatrix<f64>,
    xtw: DMatrix<f64>,
    wtw: DMatrix<f64>,
    /// `X*` with `W` partialled out.
    x_resid: DMatrix<f64>,
    /// `(X~'X~ + lambda I)^-1`.
    ridge_inv: DMatrix<f64>,
    /// Diagonal of `A^-1 G A^-1`, the sampling variance of the ridge
    /// estimator per unit residual variance.
    ridge_var: Vec<f64>,
    /// Columns of `X~` that vanish (support entirely in the padding).
    unidentified: Vec<bool>,
    ridge_df: f64,
    /// Solves against `W'W` to residualize responses.
    w_chol: Option<Cholesky<f64, nalgebra::Dyn>>,
}

impl Design {
    pub fn new(xstar: DMatrix<f64>, w: DMatrix<f64>) -> Result<Self> {
        let n = xstar.nrows();
        if w.nrows() != n {
            return Err(Error::Dimension(format!(
                "exposure design has {n} rows, covariates {}",
                w.nrows()
            )));
        }
        let q = w.ncols();
        let gram = xstar.transpose() * &xstar;
        let xtw = xstar.transpose() * &w;
        let wtw = w.transpose() * &w;
        let (x_resid, w_chol) = if q > 0 {
            let chol = Cholesky::new(wtw.clone()).ok_or_else(|| {
                Error::numerical("covariate design", "W'W is singular; covariates are collinear")
            })?;
            let coef = chol.solve(&xtw.transpose());
            (&xstar - &w * coef, Some(chol))
        } else {
            (xstar.clone(), None)
        };
        let p = xstar.ncols();
        let g_resid = x_resid.transpose() * &x_resid;
        let lambda = RIDGE_FACTOR * g_resid.trace() / p as f64;
        let mut a = g_resid.clone();
        for i in 0..p {
            a[(i, i)] += lambda;
        }
        let ridge_inv = Cholesky::new(a)
            .filter(|_| lambda > 0.0 && lambda.is_finite())
            .ok_or_else(|| {
                Error::numerical("ridge fit", "exposure design is singular after ridge stabilization")
            })?
            .inverse();
        let hat = &ridge_inv * &g_resid;
        let ridge_df = hat.trace() + q as f64;
        let ridge_var = (0..p).map(|i| hat.row(i).dot(&ridge_inv.column(i).transpose()).max(0.0)).collect();
        let tiny = 1e-12 * g_resid.trace() / p as f64;
        let unidentified = (0..p).map(|i| g_resid[(i, i)] <= tiny).collect();
        Ok(Design { xstar, w, gram, xtw, wtw, x_resid, ridge_inv, ridge_var, unidentified, ridge_df, w_chol })
    }

    pub fn n(&self) -> usize {
        self.xstar.nrows()
    }

    pub fn coefficients(&self) -> usize {
        self.xstar.ncols()
    }

    pub fn covariates(&self) -> usize {
        self.w.ncols()
    }

    pub fn xstar(&self) -> &DMatrix<f64> {
        &self.xstar
    }

    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    fn residualize(&self, y: &DVector<f64>) -> DVector<f64> {
        match &self.w_chol {
            Some(chol) => {
                let theta = chol.solve(&(self.w.transpose() * y));
                y - &self.w * theta
            }
            None => y.clone(),
        }
    }

    /// Ridge estimates with standard errors `sqrt(sigma2 * [A^-1 G A^-1]_pp)`.
    /// Coefficients the data cannot see get estimate and standard error 0.
    pub fn ridge_fit(&self, y: &[f64]) -> RidgeFit {
        let y = self.residualize(&DVector::from_column_slice(y));
        let xty = self.x_resid.transpose() * &y;
        let coef = &self.ridge_inv * xty;
        let resid = &y - &self.x_resid * &coef;
        let dof = (self.n() as f64 - self.ridge_df).max(1.0);
        let sigma2 = resid.norm_squared() / dof;
        let mut coef: Vec<f64> = coef.iter().copied().collect();
        let se = (0..self.coefficients())
            .map(|p| {
                if self.unidentified[p] {
                    coef[p] = 0.0;
                    0.0
                } else {
                    (sigma2 * self.ridge_var[p]).sqrt()
                }
            })
            .collect();
        RidgeFit { coef, se, sigma2 }
    }
}

/// Test hooks that turn the sampler into a plain Gaussian regression.
#[derive(Debug, Clone, Copy, Default)]
pub struct SamplerOptions {
    /// Keep every inclusion indicator at 1.
    pub force_include: bool,
    /// Hold the residual variance fixed instead of sampling it.
    pub fixed_sigma2: Option<f64>,
}

/// Retained draws for one column.
#[derive(Debug, Clone)]
pub struct ColumnDraws {
    pub draws: usize,
    pub coefficients: usize,
    pub covariates: usize,
    /// `draws x coefficients`, draw-major.
    pub beta: Vec<f64>,
    /// `draws x covariates`, draw-major.
    pub theta: Vec<f64>,
    pub sigma2: Vec<f64>,
}

impl ColumnDraws {
    pub fn beta_draw(&self, m: usize) -> &[f64] {
        &self.beta[m * self.coefficients..(m + 1) * self.coefficients]
    }

    pub fn theta_draw(&self, m: usize) -> &[f64] {
        &self.theta[m * self.covariates..(m + 1) * self.covariates]
    }

    /// Fraction of retained draws with the coefficient included.
    pub fn inclusion_frequency(&self) -> Vec<f64> {
        let mut freq = vec![0.0; self.coefficients];
        for m in 0..self.draws {
            for (f, b) in freq.iter_mut().zip(self.beta_draw(m)) {
                if *b != 0.0 {
                    *f += 1.0;
                }
            }
        }
        freq.iter_mut().for_each(|f| *f /= self.draws as f64);
        freq
    }
}

/// Independent stream for column `stream` under `seed`.
pub fn column_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn inclusion_probability(log_odds: f64) -> f64 {
    if log_odds >= 0.0 {
        1.0 / (1.0 + (-log_odds).exp())
    } else {
        let e = log_odds.exp();
        e / (1.0 + e)
    }
}

/// Run the Gibbs sampler for one outcome column.
///
/// `group` selects the hyperparameter column, `stream` the RNG stream, and
/// `label` identifies the column in error messages.
#[allow(clippy::too_many_arguments)]
pub fn fit_column(
    y: &[f64],
    design: &Design,
    hyper: &SpikeSlabHyper,
    group: usize,
    mcmc: &McmcConfig,
    stream: u64,
    options: SamplerOptions,
    label: &str,
) -> Result<ColumnDraws> {
    mcmc.validate()?;
    let n = design.n();
    let pdim = design.coefficients();
    let q = design.covariates();
    if y.len() != n {
        return Err(Error::Dimension(format!("column {label} has length {}, expected {n}", y.len())));
    }
    if hyper.coefficients != pdim || group >= hyper.groups {
        return Err(Error::Dimension(format!(
            "hyperparameters cover {}x{} but column {label} needs coefficient count {pdim}, group {group}",
            hyper.coefficients, hyper.groups
        )));
    }
    let fail = |what: &str| Error::numerical(format!("column {label}"), what.to_string());

    let yv = DVector::from_column_slice(y);
    let xty: Vec<f64> = (design.xstar.transpose() * &yv).iter().copied().collect();
    let gram = &design.gram;
    let gdiag: Vec<f64> = (0..pdim).map(|p| gram[(p, p)]).collect();

    // Warm start from the ridge fit.
    let init = design.ridge_fit(y);
    let mut beta: Vec<f64> = init
        .coef
        .iter()
        .zip(&init.se)
        .map(|(b, se)| {
            let keep = options.force_include || (*se > 0.0 && (b / se).abs() > 2.0);
            if keep { *b } else { 0.0 }
        })
        .collect();
    let mut sigma2 = match options.fixed_sigma2 {
        Some(s) => s,
        None => init.sigma2.max(1e-12 * (1.0 + yv.norm_squared() / n as f64)),
    };
    let mut theta = vec![0.0; q];
    if let Some(chol) = &design.w_chol {
        let r = &yv - &design.xstar * DVector::from_column_slice(&beta);
        let t = chol.solve(&(design.w.transpose() * r));
        theta.copy_from_slice(t.as_slice());
    }

    let retained = mcmc.retained();
    let mut out = ColumnDraws {
        draws: retained,
        coefficients: pdim,
        covariates: q,
        beta: Vec::with_capacity(retained * pdim),
        theta: Vec::with_capacity(retained * q),
        sigma2: Vec::with_capacity(retained),
    };

    let mut rng = column_rng(mcmc.seed, stream);
    let mut c = vec![0.0; pdim];
    let mut resid = vec![0.0; n];
    let shape = n as f64 / 2.0;
    // Keeps the Jeffreys update proper when the column is fit exactly.
    let rate_floor = 0.5e-12 * n as f64 * (1.0 + yv.norm_squared() / n as f64);
    let log_prior_odds: Vec<f64> = (0..pdim)
        .map(|p| {
            let pi = hyper.pi(p, group);
            (pi / (1.0 - pi)).ln()
        })
        .collect();

    for iteration in 0..mcmc.total_draws {
        // c = X*'(y - W theta) - G beta
        for p in 0..pdim {
            let mut v = xty[p];
            for a in 0..q {
                v -= design.xtw[(p, a)] * theta[a];
            }
            c[p] = v;
        }
        for (p2, b) in beta.iter().enumerate() {
            if *b != 0.0 {
                let col = gram.column(p2);
                for p in 0..pdim {
                    c[p] -= col[p] * b;
                }
            }
        }

        for p in 0..pdim {
            let old = beta[p];
            let tau = hyper.tau(p, group);
            let r = c[p] + gdiag[p] * old;
            let precision = gdiag[p] / sigma2 + 1.0 / tau;
            let var = 1.0 / precision;
            let mean = var * r / sigma2;
            if !(var.is_finite() && mean.is_finite() && var > 0.0) {
                return Err(fail(&format!("non-finite conditional for coefficient {p}")));
            }
            let include = if options.force_include {
                true
            } else {
                let log_bf = 0.5 * (var / tau).ln() + 0.5 * mean * mean / var;
                rng.gen::<f64>() < inclusion_probability(log_prior_odds[p] + log_bf)
            };
            let new = if include {
                let z: f64 = StandardNormal.sample(&mut rng);
                mean + var.sqrt() * z
            } else {
                0.0
            };
            if new != old {
                let delta = new - old;
                let col = gram.column(p);
                for (ci, g) in c.iter_mut().zip(col.iter()) {
                    *ci -= g * delta;
                }
                beta[p] = new;
            }
        }

        // resid = y - X* beta
        resid.copy_from_slice(y);
        for (p, b) in beta.iter().enumerate() {
            if *b != 0.0 {
                for (r, x) in resid.iter_mut().zip(design.xstar.column(p).iter()) {
                    *r -= x * b;
                }
            }
        }

        if q > 0 {
            let mut prec = &design.wtw / sigma2;
            for i in 0..q {
                prec[(i, i)] += 1.0 / COVARIATE_PRIOR_VARIANCE;
            }
            let rhs = design.w.transpose() * DVector::from_column_slice(&resid) / sigma2;
            let chol = Cholesky::new(prec).ok_or_else(|| fail("covariate precision not positive definite"))?;
            let mean = chol.solve(&rhs);
            let z = DVector::from_fn(q, |_, _| StandardNormal.sample(&mut rng));
            // theta = mean + L^-T z has covariance (L L')^-1.
            let l = chol.l();
            let noise = l
                .transpose()
                .solve_upper_triangular(&z)
                .ok_or_else(|| fail("covariate Cholesky factor singular"))?;
            for a in 0..q {
                theta[a] = mean[a] + noise[a];
            }
            for (i, r) in resid.iter_mut().enumerate() {
                for a in 0..q {
                    *r -= design.w[(i, a)] * theta[a];
                }
            }
        }
        if options.fixed_sigma2.is_none() {
            let rss: f64 = resid.iter().map(|r| r * r).sum();
            let rate = (rss / 2.0).max(rate_floor);
            let g: f64 = Gamma::new(shape, 1.0 / rate)
                .map_err(|e| fail(&format!("residual variance update: {e}")))?
                .sample(&mut rng);
            sigma2 = 1.0 / g;
            if !(sigma2.is_finite() && sigma2 > 0.0) {
                return Err(fail("residual variance draw is not finite"));
            }
        }

        if mcmc.keeps(iteration) {
            out.beta.extend_from_slice(&beta);
            out.theta.extend_from_slice(&theta);
            out.sigma2.push(sigma2);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{estimate_hyperparameters, EbOptions};

    fn normal_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
        DMatrix::from_fn(r, c, |_, _| rng.sample(StandardNormal))
    }

    fn short_chain(seed: u64) -> McmcConfig {
        McmcConfig { total_draws: 600, burn_in: 200, seed, thin: 1 }
    }

    #[test]
    fn zero_column_stays_at_zero() {
        let n = 400;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let design = Design::new(normal_matrix(&mut rng, n, 16), DMatrix::zeros(n, 0)).unwrap();
        let y = DMatrix::zeros(n, 1);
        let hyper = estimate_hyperparameters(&design, &y, &[0], 1, &EbOptions::default()).unwrap();
        let d = fit_column(y.as_slice(), &design, &hyper, 0, &short_chain(3), 0, SamplerOptions::default(), "z")
            .unwrap();
        let bound = 3.0 / (n as f64).sqrt();
        for p in 0..16 {
            let mean = (0..d.draws).map(|m| d.beta_draw(m)[p]).sum::<f64>() / d.draws as f64;
            assert!(mean.abs() < bound);
        }
        for (p, f) in d.inclusion_frequency().iter().enumerate() {
            assert!(*f <= hyper.pi(p, 0) + 0.1, "coefficient {p}: {f}");
        }
    }

    #[test]
    fn prior_dominates_pure_noise() {
        let (n, pdim) = (400, 32);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let design = Design::new(normal_matrix(&mut rng, n, pdim), DMatrix::zeros(n, 0)).unwrap();
        let y: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let hyper = SpikeSlabHyper::uniform(pdim, 1, 0.001, 1.0);
        let d = fit_column(&y, &design, &hyper, 0, &short_chain(4), 0, SamplerOptions::default(), "noise")
            .unwrap();
        let freq = d.inclusion_frequency();
        let mean = freq.iter().sum::<f64>() / pdim as f64;
        assert!((mean - 0.001).abs() < 0.05, "mean inclusion {mean}");
    }

    #[test]
    fn single_strong_predictor() {
        let n = 400;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = normal_matrix(&mut rng, n, 1);
        let y: Vec<f64> = (0..n).map(|i| x[(i, 0)] + 0.1 * rng.sample::<f64, _>(StandardNormal)).collect();
        let design = Design::new(x, DMatrix::zeros(n, 0)).unwrap();
        let ym = DMatrix::from_column_slice(n, 1, &y);
        let hyper = estimate_hyperparameters(&design, &ym, &[0], 1, &EbOptions::default()).unwrap();
        let d = fit_column(&y, &design, &hyper, 0, &short_chain(6), 0, SamplerOptions::default(), "one")
            .unwrap();
        let mean = d.beta.iter().sum::<f64>() / d.draws as f64;
        assert!((0.9..=1.1).contains(&mean), "posterior mean {mean}");
        assert!(d.inclusion_frequency()[0] > 0.99);
        let s2 = d.sigma2.iter().sum::<f64>() / d.draws as f64;
        assert!((s2 / 0.01 - 1.0).abs() < 0.2, "sigma2 {s2}");
    }

    #[test]
    fn excluded_draws_are_exact_zeros() {
        let (n, pdim) = (100, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let design = Design::new(normal_matrix(&mut rng, n, pdim), DMatrix::zeros(n, 0)).unwrap();
        let y: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let hyper = SpikeSlabHyper::uniform(pdim, 1, 0.3, 0.05);
        let d = fit_column(&y, &design, &hyper, 0, &short_chain(8), 0, SamplerOptions::default(), "pm")
            .unwrap();
        let zeros = d.beta.iter().filter(|b| **b == 0.0).count();
        let tiny = d.beta.iter().filter(|b| **b != 0.0 && b.abs() < 1e-300).count();
        assert!(zeros > d.beta.len() / 4);
        assert_eq!(tiny, 0);
    }

    #[test]
    fn covariates_are_recovered() {
        let n = 300;
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = normal_matrix(&mut rng, n, 4);
        let w = normal_matrix(&mut rng, n, 2);
        let y: Vec<f64> = (0..n)
            .map(|i| 0.5 * x[(i, 1)] + 2.0 * w[(i, 0)] - w[(i, 1)] + 0.3 * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let design = Design::new(x, w).unwrap();
        let ym = DMatrix::from_column_slice(n, 1, &y);
        let hyper = estimate_hyperparameters(&design, &ym, &[0], 1, &EbOptions::default()).unwrap();
        let d = fit_column(&y, &design, &hyper, 0, &short_chain(10), 0, SamplerOptions::default(), "w")
            .unwrap();
        let m0 = (0..d.draws).map(|m| d.theta_draw(m)[0]).sum::<f64>() / d.draws as f64;
        let m1 = (0..d.draws).map(|m| d.theta_draw(m)[1]).sum::<f64>() / d.draws as f64;
        assert!((m0 - 2.0).abs() < 0.1 && (m1 + 1.0).abs() < 0.1, "{m0} {m1}");
    }

    #[test]
    fn same_stream_same_draws() {
        let n = 80;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let design = Design::new(normal_matrix(&mut rng, n, 8), DMatrix::zeros(n, 0)).unwrap();
        let y: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let hyper = SpikeSlabHyper::uniform(8, 1, 0.2, 0.5);
        let run = |stream| {
            fit_column(&y, &design, &hyper, 0, &short_chain(12), stream, SamplerOptions::default(), "s")
                .unwrap()
                .beta
        };
        assert_eq!(run(3), run(3));
        assert_ne!(run(3), run(4));
    }

    #[test]
    fn mismatched_inputs_rejected() {
        let design = Design::new(DMatrix::identity(6, 3), DMatrix::zeros(6, 0)).unwrap();
        let hyper = SpikeSlabHyper::uniform(3, 1, 0.5, 1.0);
        let opts = SamplerOptions::default();
        assert!(fit_column(&[0.0; 5], &design, &hyper, 0, &short_chain(0), 0, opts, "a").is_err());
        assert!(fit_column(&[0.0; 6], &design, &hyper, 1, &short_chain(0), 0, opts, "a").is_err());
        let bad = McmcConfig { total_draws: 10, burn_in: 10, seed: 0, thin: 1 };
        assert!(fit_column(&[0.0; 6], &design, &hyper, 0, &bad, 0, opts, "a").is_err());
    }

    #[test]
    fn mcmc_bookkeeping() {
        let m = McmcConfig { total_draws: 2000, burn_in: 1000, seed: 0, thin: 3 };
        assert_eq!(m.retained(), 333);
        assert_eq!((0..2000).filter(|i| m.keeps(*i)).count(), 333);
        assert_eq!(McmcConfig::default().retained(), 1000);
    }
}
