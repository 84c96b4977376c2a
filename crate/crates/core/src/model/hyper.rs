//! Empirical-Bayes estimates of the spike-and-slab hyperparameters.
//!
//! Every outcome column is regressed on `X*` by ridge-stabilized least
//! squares. Within a group `(p, g)` (exposure coefficient `p`, outcome
//! group `g`) the columns whose `|b / se|` exceeds `z0` set the inclusion
//! probability, and their excess second moment sets the slab variance:
//!
//! ```text
//! pi_pg  = clip(#exceed / K_g, pi_min, pi_max)
//! tau_pg = max(mean(b^2) - mean(se^2), tau_min)     over exceeding columns
//! ```

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::sampler::{Design, SpikeSlabHyper};
use crate::error::{Error, Result};

/// How `(pi, tau)` are estimated within a group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EbMethod {
    /// Exceedance share and excess second moment of `|z| > z0` columns.
    #[default]
    Threshold,
    /// Maximize the two-component marginal likelihood of all estimates in
    /// the group jointly over `(pi, tau)`.
    MarginalLikelihood,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EbOptions {
    pub method: EbMethod,
    pub z0: f64,
    pub pi_min: f64,
    pub pi_max: f64,
    pub tau_min: f64,
}

impl Default for EbOptions {
    fn default() -> Self {
        EbOptions { method: EbMethod::Threshold, z0: 2.0, pi_min: 0.001, pi_max: 0.999, tau_min: 1e-8 }
    }
}

impl EbOptions {
    pub fn validate(&self) -> Result<()> {
        let ok = self.z0 >= 0.0
            && 0.0 < self.pi_min
            && self.pi_min <= self.pi_max
            && self.pi_max < 1.0
            && self.tau_min > 0.0
            && self.tau_min.is_finite();
        if !ok {
            return Err(Error::Config(format!("invalid empirical-Bayes options {self:?}")));
        }
        Ok(())
    }
}

/// Estimate `(tau, pi)` for `groups` outcome groups; `group_of[c]` names the
/// group of outcome column `c`.
pub fn estimate_hyperparameters(
    design: &Design,
    ystar: &DMatrix<f64>,
    group_of: &[usize],
    groups: usize,
    options: &EbOptions,
) -> Result<SpikeSlabHyper> {
    options.validate()?;
    if ystar.nrows() != design.n() || ystar.ncols() != group_of.len() {
        return Err(Error::Dimension(format!(
            "outcome coefficients are {}x{}, expected {} rows and {} columns",
            ystar.nrows(),
            ystar.ncols(),
            design.n(),
            group_of.len()
        )));
    }
    if let Some(g) = group_of.iter().find(|g| **g >= groups) {
        return Err(Error::Dimension(format!("group {g} out of range for {groups} groups")));
    }
    let pdim = design.coefficients();
    // estimates[p * groups + g] holds (b, se) for every member column
    let mut estimates: Vec<Vec<(f64, f64)>> = vec![Vec::new(); pdim * groups];
    for (c, &g) in group_of.iter().enumerate() {
        let fit = design.ridge_fit(ystar.column(c).as_slice());
        for p in 0..pdim {
            estimates[p * groups + g].push((fit.coef[p], fit.se[p]));
        }
    }

    let mut hyper = SpikeSlabHyper::uniform(pdim, groups, options.pi_min, options.tau_min);
    for p in 0..pdim {
        for g in 0..groups {
            let group = &estimates[p * groups + g];
            if group.is_empty() {
                continue;
            }
            let (pi, tau) = match options.method {
                EbMethod::Threshold => threshold_estimate(group, options),
                EbMethod::MarginalLikelihood => marginal_estimate(group, options),
            };
            hyper.set(p, g, pi, tau);
        }
    }
    hyper.validate()?;
    Ok(hyper)
}

fn threshold_estimate(group: &[(f64, f64)], options: &EbOptions) -> (f64, f64) {
    let mut exceed = 0usize;
    let mut sum_b2 = 0.0;
    let mut sum_se2 = 0.0;
    for &(b, se) in group {
        let z = if se > 0.0 { (b / se).abs() } else { 0.0 };
        if z > options.z0 {
            exceed += 1;
            sum_b2 += b * b;
            sum_se2 += se * se;
        }
    }
    let pi = (exceed as f64 / group.len() as f64).clamp(options.pi_min, options.pi_max);
    let tau = if exceed == 0 {
        options.tau_min
    } else {
        let k = exceed as f64;
        (sum_b2 / k - sum_se2 / k).max(options.tau_min)
    };
    (pi, tau)
}

/// Log density of `N(0, v)` at `b`, without the `-0.5 ln(2 pi)` constant.
fn log_normal(b: f64, v: f64) -> f64 {
    -0.5 * (v.ln() + b * b / v)
}

/// Group log-likelihood given per-estimate log densities `(slab, spike)`.
fn mixture_loglik(terms: &[(f64, f64)], pi: f64) -> f64 {
    terms
        .iter()
        .map(|&(l1, l0)| {
            // relative to the larger component for stability
            let m = l1.max(l0);
            m + (pi * (l1 - m).exp() + (1.0 - pi) * (l0 - m).exp()).ln()
        })
        .sum()
}

/// Most likely `pi` for fixed slab log densities; the log-likelihood is
/// concave in `pi`, so bisect on the sign of its derivative.
fn best_pi(terms: &[(f64, f64)], lo: f64, hi: f64) -> f64 {
    let slope = |pi: f64| -> f64 {
        terms
            .iter()
            .map(|&(l1, l0)| {
                let m = l1.max(l0);
                let (f1, f0) = ((l1 - m).exp(), (l0 - m).exp());
                (f1 - f0) / (pi * f1 + (1.0 - pi) * f0)
            })
            .sum()
    };
    if slope(lo) <= 0.0 {
        return lo;
    }
    if slope(hi) >= 0.0 {
        return hi;
    }
    let (mut a, mut b) = (lo, hi);
    for _ in 0..50 {
        let mid = 0.5 * (a + b);
        if slope(mid) > 0.0 {
            a = mid;
        } else {
            b = mid;
        }
    }
    0.5 * (a + b)
}

/// Maximize a unimodal-enough function of `log tau` on `[lo, hi]`: grid
/// search, then golden-section refinement around the best grid point.
fn maximize_log_tau(lo: f64, hi: f64, f: impl Fn(f64) -> f64) -> f64 {
    const GRID: usize = 40;
    let step = (hi - lo) / (GRID - 1) as f64;
    let mut best = (lo, f64::NEG_INFINITY);
    for i in 0..GRID {
        let x = lo + step * i as f64;
        let v = f(x);
        if v > best.1 {
            best = (x, v);
        }
    }
    let (mut a, mut b) = ((best.0 - step).max(lo), (best.0 + step).min(hi));
    let ratio = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - ratio * (b - a);
    let mut d = a + ratio * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..30 {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - ratio * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + ratio * (b - a);
            fd = f(d);
        }
    }
    let mid = 0.5 * (a + b);
    if f(mid) >= best.1 {
        mid
    } else {
        best.0
    }
}

/// Joint marginal-likelihood `(pi, tau)`, profiling `pi` out at each `tau`.
fn marginal_estimate(group: &[(f64, f64)], options: &EbOptions) -> (f64, f64) {
    let usable: Vec<(f64, f64)> = group.iter().copied().filter(|(_, se)| *se > 0.0).collect();
    if usable.is_empty() {
        return (options.pi_min, options.tau_min);
    }
    let max_b2 = usable.iter().map(|(b, _)| b * b).fold(0.0, f64::max);
    let min_se2 = usable.iter().map(|(_, se)| se * se).fold(f64::INFINITY, f64::min);
    let tau_lo = options.tau_min.max(1e-3 * min_se2);
    let tau_hi = max_b2.max(tau_lo * 10.0);
    let terms = |log_tau: f64| -> Vec<(f64, f64)> {
        let tau = log_tau.exp();
        usable.iter().map(|&(b, se)| (log_normal(b, se * se + tau), log_normal(b, se * se))).collect()
    };
    let profile = |log_tau: f64| {
        let t = terms(log_tau);
        mixture_loglik(&t, best_pi(&t, options.pi_min, options.pi_max))
    };
    let log_tau = maximize_log_tau(tau_lo.ln(), tau_hi.ln(), profile);
    let pi = best_pi(&terms(log_tau), options.pi_min, options.pi_max);
    if pi <= options.pi_min {
        // no slab supported; keep tau below the noise scale
        return (options.pi_min, options.tau_min.max(log_tau.exp().min(min_se2)));
    }
    (pi, log_tau.exp().max(options.tau_min))
}
