//! Particle filters driven by the unit-interval weights.
//!
//! [`run_pf`] propagates `N` particles one unit interval at a time, weights
//! them with [`PotentialContext::log_unit_potential`], records the
//! self-normalised estimates *before* resampling, then resamples
//! multinomially. [`run_cpf`] runs a fine/coarse pair of filters whose
//! particles share Brownian increments ([`coupled_euler_unit`]) and whose
//! ancestors are drawn from the maximal coupling of the two weight vectors,
//! so the per-time difference estimates have a variance that shrinks with the
//! step size.
//!
//! Paths are consumed in a streaming fashion: a particle's unit path exists
//! only while its weight and endpoint are being computed, so memory stays
//! `O(N)` at any level. Every particle at unit time `p` draws from the stream
//! `(seed, PATH, level, particle, p)` and each resampling round from
//! `(seed, RESAMPLE, p)`, which makes runs reproducible bit for bit and
//! keeps coupled fine components identical to plain filter propagations.

use crate::error::{Error, Result};
use crate::models::Model;
use crate::obsgen::MarkedDataset;
use crate::path::{coupled_euler_unit, euler_unit};
use crate::potentials::{PotentialContext, Quadrature};
use crate::rng::{lane, stream};
use crate::stats::pairwise_sum;
use rand::Rng;

/// Common configuration of a filter run.
pub struct FilterParams<'a> {
    pub model: &'a Model,
    pub dataset: &'a MarkedDataset,
    pub level: u32,
    pub particles: usize,
    /// Number of unit intervals to process (at most `dataset.horizon`).
    pub horizon: u32,
    pub quadrature: Quadrature,
    pub seed: u64,
}

impl FilterParams<'_> {
    fn validate(&self) -> Result<()> {
        if self.particles == 0 {
            return Err(Error::Config("particle count must be positive".into()));
        }
        if self.horizon == 0 {
            return Err(Error::Config("horizon must be positive".into()));
        }
        if self.horizon > self.dataset.horizon {
            return Err(Error::Config(format!(
                "horizon {} exceeds dataset horizon {}",
                self.horizon, self.dataset.horizon
            )));
        }
        Ok(())
    }
}

/// Predictive particle cloud at the final unit time: per particle the raw log
/// weight of its last unit interval and its endpoint state. This is exactly
/// the information a terminal-time functional of the filter needs.
#[derive(Debug, Clone)]
pub struct TerminalCloud {
    pub log_weights: Vec<f64>,
    pub endpoints: Vec<f64>,
}

/// Output of a plain particle filter run.
#[derive(Debug, Clone)]
pub struct FilterOutput {
    /// `estimates[j][t - 1]` is the estimate of the `j`-th observable at unit
    /// time `t`.
    pub estimates: Vec<Vec<f64>>,
    /// Accumulated `sum_p log((1/N) sum_i G_p^i)`, the log normalising
    /// constant estimate.
    pub log_norm_const: f64,
    /// Total Euler sub-steps performed.
    pub cost_substeps: u64,
    pub terminal: TerminalCloud,
}

/// Output of a coupled pair of filters.
#[derive(Debug, Clone)]
pub struct CoupledFilterOutput {
    pub fine: Vec<Vec<f64>>,
    pub coarse: Vec<Vec<f64>>,
    /// `fine - coarse`, per observable and unit time.
    pub diff: Vec<Vec<f64>>,
    pub log_norm_const_fine: f64,
    pub log_norm_const_coarse: f64,
    pub cost_substeps: u64,
    pub terminal_fine: TerminalCloud,
    pub terminal_coarse: TerminalCloud,
}

fn searchsorted(cum: &[f64], u: f64) -> usize {
    cum.partition_point(|&c| c <= u).min(cum.len() - 1)
}

fn cumulative(weights: &[f64]) -> Vec<f64> {
    let mut cum = Vec::with_capacity(weights.len());
    let mut acc = 0.0;
    for &w in weights {
        acc += w;
        cum.push(acc);
    }
    cum
}

/// Draws `draws` independent categorical indices proportional to `weights`
/// (nonnegative, positive finite sum; normalisation is not required).
pub fn multinomial_resample<R: Rng>(
    weights: &[f64],
    draws: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    if weights.is_empty() {
        return Err(Error::Domain("cannot resample from an empty weight vector".into()));
    }
    for (i, &w) in weights.iter().enumerate() {
        if !(w.is_finite() && w >= 0.0) {
            return Err(Error::Domain(format!("weight {i} is invalid: {w}")));
        }
    }
    let cum = cumulative(weights);
    let total = *cum.last().unwrap();
    if !(total > 0.0) {
        return Err(Error::Domain("all resampling weights are zero".into()));
    }
    Ok((0..draws)
        .map(|_| searchsorted(&cum, total * rng.random::<f64>()))
        .collect())
}

/// Ancestor indices drawn from the maximal coupling of two normalised weight
/// vectors, plus a flag per draw recording whether the pair met.
#[derive(Debug, Clone)]
pub struct CoupledAncestors {
    pub fine: Vec<usize>,
    pub coarse: Vec<usize>,
    pub met: Vec<bool>,
}

/// Maximal coupling of two categorical distributions: with probability
/// `sum_i min(w_fine_i, w_coarse_i)` both sides receive a common index drawn
/// from the overlap measure, otherwise each side draws independently from its
/// residual. Both inputs must be normalised to one within `1e-12`.
pub fn maximal_coupling_resample<R: Rng>(
    w_fine: &[f64],
    w_coarse: &[f64],
    draws: usize,
    rng: &mut R,
) -> Result<CoupledAncestors> {
    if w_fine.len() != w_coarse.len() || w_fine.is_empty() {
        return Err(Error::Domain("weight vectors must be non-empty and equally long".into()));
    }
    for ws in [w_fine, w_coarse] {
        for (i, &w) in ws.iter().enumerate() {
            if !(w.is_finite() && w >= 0.0) {
                return Err(Error::Domain(format!("weight {i} is invalid: {w}")));
            }
        }
        let total: f64 = pairwise_sum(ws);
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Domain(format!(
                "weights must be normalised to 1 (got {total})"
            )));
        }
    }
    let overlap: Vec<f64> = w_fine
        .iter()
        .zip(w_coarse)
        .map(|(&a, &b)| a.min(b))
        .collect();
    let res_fine: Vec<f64> = w_fine.iter().zip(&overlap).map(|(&a, &m)| a - m).collect();
    let res_coarse: Vec<f64> = w_coarse.iter().zip(&overlap).map(|(&a, &m)| a - m).collect();
    let cum_overlap = cumulative(&overlap);
    let cum_fine = cumulative(&res_fine);
    let cum_coarse = cumulative(&res_coarse);
    let r = *cum_overlap.last().unwrap();
    let t_fine = *cum_fine.last().unwrap();
    let t_coarse = *cum_coarse.last().unwrap();

    let mut out = CoupledAncestors {
        fine: Vec::with_capacity(draws),
        coarse: Vec::with_capacity(draws),
        met: Vec::with_capacity(draws),
    };
    for _ in 0..draws {
        let u: f64 = rng.random();
        if u < r || t_fine <= 0.0 || t_coarse <= 0.0 {
            // Within the overlap the uniform is already a position in it.
            let j = searchsorted(&cum_overlap, u.min(r * (1.0 - f64::EPSILON)));
            out.fine.push(j);
            out.coarse.push(j);
            out.met.push(true);
        } else {
            let j1 = searchsorted(&cum_fine, t_fine * rng.random::<f64>());
            let j2 = searchsorted(&cum_coarse, t_coarse * rng.random::<f64>());
            out.fine.push(j1);
            out.coarse.push(j2);
            out.met.push(false);
        }
    }
    Ok(out)
}

/// Self-normalised weighted mean of `phi` over endpoint states, computed in
/// the log domain: weights enter as `exp(log_w - max(log_w))`.
pub fn weighted_estimate<F: Fn(f64) -> f64>(
    log_weights: &[f64],
    endpoints: &[f64],
    phi: F,
) -> Result<f64> {
    if log_weights.len() != endpoints.len() || log_weights.is_empty() {
        return Err(Error::Domain("weights and endpoints must be non-empty and equally long".into()));
    }
    let max = log_weights.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::DegenerateWeights { unit_time: 0 });
    }
    let w: Vec<f64> = log_weights.iter().map(|&lw| (lw - max).exp()).collect();
    let num: Vec<f64> = w.iter().zip(endpoints).map(|(&wi, &x)| wi * phi(x)).collect();
    Ok(pairwise_sum(&num) / pairwise_sum(&w))
}

/// Normalised linear-domain weights from raw log weights, or a degeneracy
/// error naming `unit_time` if every weight underflows.
pub(crate) fn normalised_weights(log_weights: &[f64], unit_time: u32) -> Result<Vec<f64>> {
    let max = log_weights.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::DegenerateWeights { unit_time });
    }
    let unnorm: Vec<f64> = log_weights.iter().map(|&lw| (lw - max).exp()).collect();
    let total = pairwise_sum(&unnorm);
    Ok(unnorm.iter().map(|&w| w / total).collect())
}

fn check_weight(lw: f64, unit_time: u32) -> Result<f64> {
    if lw.is_nan() {
        return Err(Error::Domain(format!(
            "weight became NaN at unit time {unit_time}"
        )));
    }
    Ok(lw)
}

/// Multinomial ancestors drawn through the inverse CDF over particles sorted
/// by endpoint state. Permuting categories leaves the multinomial law
/// untouched, but it makes the draw nearly continuous under small parameter
/// perturbations at a shared seed: a uniform crossing a bin boundary lands on
/// a neighbouring state instead of an arbitrary particle. Gradient checks of
/// the log normalising constant against finite differences rely on this.
pub(crate) fn sorted_multinomial_resample<R: Rng>(
    weights: &[f64],
    endpoints: &[f64],
    rng: &mut R,
) -> Result<Vec<usize>> {
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| endpoints[a].total_cmp(&endpoints[b]));
    let sorted_w: Vec<f64> = order.iter().map(|&o| weights[o]).collect();
    let drawn = multinomial_resample(&sorted_w, weights.len(), rng)?;
    Ok(drawn.into_iter().map(|s| order[s]).collect())
}

/// Plain particle filter. Estimates are recorded before each resampling from
/// the weighted predictive cloud, for every observable in `phis` and every
/// unit time `1..=horizon`.
pub fn run_pf<F: Fn(f64) -> f64>(params: &FilterParams, phis: &[F]) -> Result<FilterOutput> {
    params.validate()?;
    let n = params.particles;
    let level = params.level;
    let ctx = PotentialContext::new(params.model, params.dataset, level, params.quadrature);
    let substeps_per_particle = 1u64 << level;

    let mut starts = vec![params.model.spec.x_star; n];
    let mut ends = vec![0.0f64; n];
    let mut log_w = vec![0.0f64; n];
    let mut estimates = vec![Vec::with_capacity(params.horizon as usize); phis.len()];
    let mut log_norm_const = 0.0f64;
    let mut cost = 0u64;

    for p in 0..params.horizon {
        for i in 0..n {
            let mut rng = stream(params.seed, &[lane::PATH, level as u64, i as u64, p as u64]);
            let path = euler_unit(params.model, level, p, starts[i], &mut rng)?;
            log_w[i] = check_weight(ctx.log_unit_potential(p, &path)?, p)?;
            ends[i] = path.end_state();
        }
        cost += substeps_per_particle * n as u64;
        let weights = normalised_weights(&log_w, p)?;
        let max = log_w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = pairwise_sum(&log_w.iter().map(|&lw| (lw - max).exp()).collect::<Vec<_>>());
        log_norm_const += max + sum.ln() - (n as f64).ln();
        for (j, phi) in phis.iter().enumerate() {
            estimates[j].push(weighted_estimate(&log_w, &ends, phi)?);
        }
        if p + 1 < params.horizon {
            let mut rng = stream(params.seed, &[lane::RESAMPLE, p as u64]);
            let ancestors = sorted_multinomial_resample(&weights, &ends, &mut rng)?;
            starts = ancestors.iter().map(|&a| ends[a]).collect();
        }
    }
    Ok(FilterOutput {
        estimates,
        log_norm_const,
        cost_substeps: cost,
        terminal: TerminalCloud {
            log_weights: log_w,
            endpoints: ends,
        },
    })
}

/// Coupled pair of filters at levels `level` and `level - 1`: shared Brownian
/// increments in propagation, maximally coupled ancestors in resampling.
pub fn run_cpf<F: Fn(f64) -> f64>(params: &FilterParams, phis: &[F]) -> Result<CoupledFilterOutput> {
    params.validate()?;
    if params.level == 0 {
        return Err(Error::Config("coupled filter requires level >= 1".into()));
    }
    let n = params.particles;
    let level = params.level;
    let ctx_f = PotentialContext::new(params.model, params.dataset, level, params.quadrature);
    let ctx_c = PotentialContext::new(params.model, params.dataset, level - 1, params.quadrature);
    let substeps_per_particle = (1u64 << level) + (1u64 << (level - 1));

    let mut starts_f = vec![params.model.spec.x_star; n];
    let mut starts_c = starts_f.clone();
    let mut ends_f = vec![0.0f64; n];
    let mut ends_c = vec![0.0f64; n];
    let mut log_wf = vec![0.0f64; n];
    let mut log_wc = vec![0.0f64; n];
    let mut fine = vec![Vec::with_capacity(params.horizon as usize); phis.len()];
    let mut coarse = vec![Vec::with_capacity(params.horizon as usize); phis.len()];
    let mut diff = vec![Vec::with_capacity(params.horizon as usize); phis.len()];
    let mut lnc_f = 0.0f64;
    let mut lnc_c = 0.0f64;
    let mut cost = 0u64;

    for p in 0..params.horizon {
        for i in 0..n {
            let mut rng = stream(params.seed, &[lane::PATH, level as u64, i as u64, p as u64]);
            let (pf, pc) =
                coupled_euler_unit(params.model, level, p, starts_f[i], starts_c[i], &mut rng)?;
            log_wf[i] = check_weight(ctx_f.log_unit_potential(p, &pf)?, p)?;
            log_wc[i] = check_weight(ctx_c.log_unit_potential(p, &pc)?, p)?;
            ends_f[i] = pf.end_state();
            ends_c[i] = pc.end_state();
        }
        cost += substeps_per_particle * n as u64;
        let wf = normalised_weights(&log_wf, p)?;
        let wc = normalised_weights(&log_wc, p)?;
        for (lw, acc) in [(&log_wf, &mut lnc_f), (&log_wc, &mut lnc_c)] {
            let max = lw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let sum = pairwise_sum(&lw.iter().map(|&l| (l - max).exp()).collect::<Vec<_>>());
            *acc += max + sum.ln() - (n as f64).ln();
        }
        for (j, phi) in phis.iter().enumerate() {
            let ef = weighted_estimate(&log_wf, &ends_f, phi)?;
            let ec = weighted_estimate(&log_wc, &ends_c, phi)?;
            fine[j].push(ef);
            coarse[j].push(ec);
            diff[j].push(ef - ec);
        }
        if p + 1 < params.horizon {
            let mut rng = stream(params.seed, &[lane::RESAMPLE, p as u64]);
            let anc = maximal_coupling_resample(&wf, &wc, n, &mut rng)?;
            starts_f = anc.fine.iter().map(|&a| ends_f[a]).collect();
            starts_c = anc.coarse.iter().map(|&a| ends_c[a]).collect();
        }
    }
    Ok(CoupledFilterOutput {
        fine,
        coarse,
        diff,
        log_norm_const_fine: lnc_f,
        log_norm_const_coarse: lnc_c,
        cost_substeps: cost,
        terminal_fine: TerminalCloud {
            log_weights: log_wf,
            endpoints: ends_f,
        },
        terminal_coarse: TerminalCloud {
            log_weights: log_wc,
            endpoints: ends_c,
        },
    })
}
