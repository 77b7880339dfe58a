//! Multilevel and randomised-level estimators built on the filter pair.
//!
//! [`run_mlpf`] telescopes a base filter at the coarsest level with coupled
//! difference filters at successively finer levels, with particle counts
//! decaying as `Delta_l^{3/4}` so the total error matches a target accuracy
//! at a cost well below a single-level filter of the same accuracy.
//!
//! [`upf_estimate`] removes the discretisation bias entirely: each replicate
//! draws a random level and a random particle-doubling index, computes a
//! pooled-measure increment [`compute_xi`], and reweights by the sampling
//! probabilities. Averaging replicates gives an estimator whose expectation
//! is the exact (continuous-time) filter.

use crate::error::{Error, Result};
use crate::filters::{run_cpf, run_pf, weighted_estimate, FilterParams, TerminalCloud};
use crate::models::Model;
use crate::obsgen::MarkedDataset;
use crate::path::{delta, MAX_LEVEL};
use crate::potentials::Quadrature;
use crate::rng::{derive_seed, lane, stream};
use rand::Rng;

/// Particle allocation of a multilevel run over levels `l0..=max_level`.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpfAllocation {
    pub l0: u32,
    pub max_level: u32,
    /// `particles[l - l0]` filter particles at level `l`.
    pub particles: Vec<usize>,
}

/// Chooses the finest level `l0 + ceil(log2(1/epsilon))` and particle counts
/// `N_l = ceil(constant * Delta_l^{3/4} / epsilon^{5/2})`.
pub fn mlpf_allocate(epsilon: f64, l0: u32, constant: f64) -> Result<MlpfAllocation> {
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return Err(Error::Config(format!("accuracy must lie in (0, 1], got {epsilon}")));
    }
    if !(constant > 0.0 && constant.is_finite()) {
        return Err(Error::Config(format!("allocation constant must be positive, got {constant}")));
    }
    let max_level = l0 + (1.0 / epsilon).log2().ceil().max(0.0) as u32;
    if max_level > MAX_LEVEL {
        return Err(Error::Config(format!("finest level {max_level} exceeds {MAX_LEVEL}")));
    }
    let scale = constant * epsilon.powf(-2.5);
    let particles = (l0..=max_level)
        .map(|l| (scale * delta(l).powf(0.75)).ceil().max(1.0) as usize)
        .collect();
    Ok(MlpfAllocation { l0, max_level, particles })
}

pub struct MlpfParams<'a> {
    pub model: &'a Model,
    pub dataset: &'a MarkedDataset,
    pub horizon: u32,
    pub epsilon: f64,
    pub l0: u32,
    pub constant: f64,
    pub quadrature: Quadrature,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct MlpfOutput {
    /// `estimates[j][t - 1]`: multilevel estimate of observable `j` at unit
    /// time `t` (base level estimate plus coupled increments).
    pub estimates: Vec<Vec<f64>>,
    pub cost_substeps: u64,
    pub allocation: MlpfAllocation,
}

/// Multilevel particle filter: one plain filter at the base level plus one
/// coupled difference filter per finer level, each with its own derived seed.
pub fn run_mlpf<F: Fn(f64) -> f64>(params: &MlpfParams, phis: &[F]) -> Result<MlpfOutput> {
    let alloc = mlpf_allocate(params.epsilon, params.l0, params.constant)?;
    let base = run_pf(
        &FilterParams {
            model: params.model,
            dataset: params.dataset,
            level: params.l0,
            particles: alloc.particles[0],
            horizon: params.horizon,
            quadrature: params.quadrature,
            seed: derive_seed(params.seed, &[lane::LEVEL, params.l0 as u64]),
        },
        phis,
    )?;
    let mut estimates = base.estimates;
    let mut cost = base.cost_substeps;
    for l in (params.l0 + 1)..=alloc.max_level {
        let out = run_cpf(
            &FilterParams {
                model: params.model,
                dataset: params.dataset,
                level: l,
                particles: alloc.particles[(l - params.l0) as usize],
                horizon: params.horizon,
                quadrature: params.quadrature,
                seed: derive_seed(params.seed, &[lane::LEVEL, l as u64]),
            },
            phis,
        )?;
        cost += out.cost_substeps;
        for (acc, diff) in estimates.iter_mut().zip(&out.diff) {
            for (a, d) in acc.iter_mut().zip(diff) {
                *a += d;
            }
        }
    }
    Ok(MlpfOutput { estimates, cost_substeps: cost, allocation: alloc })
}

/// Sampling distributions of the randomised estimator: a level drawn from
/// `l0..=l_trunc` with probability proportional to
/// `ln(l+2)^2 (l+1) Delta_l^{1/2}`, and a particle-doubling index from
/// `0..=p_trunc` with probability proportional to `ln(p+2)^2 (p+1) / N_p`
/// where `N_p = n0 * 2^p`.
#[derive(Debug, Clone)]
pub struct Randomization {
    pub l0: u32,
    pub l_trunc: u32,
    pub p_trunc: u32,
    pub n0: usize,
    level_pmf: Vec<f64>,
    level_cdf: Vec<f64>,
    p_pmf: Vec<f64>,
    p_cdf: Vec<f64>,
}

fn normalise_pmf(weights: Vec<f64>) -> (Vec<f64>, Vec<f64>) {
    let total: f64 = weights.iter().sum();
    let pmf: Vec<f64> = weights.iter().map(|&w| w / total).collect();
    let mut cdf = Vec::with_capacity(pmf.len());
    let mut acc = 0.0;
    for &p in &pmf {
        acc += p;
        cdf.push(acc);
    }
    (pmf, cdf)
}

fn sample_cdf<R: Rng>(cdf: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    cdf.partition_point(|&c| c <= u).min(cdf.len() - 1)
}

pub fn build_randomization(l0: u32, l_trunc: u32, p_trunc: u32, n0: usize) -> Result<Randomization> {
    if l_trunc < l0 {
        return Err(Error::Config(format!(
            "level truncation {l_trunc} lies below the base level {l0}"
        )));
    }
    if l_trunc > MAX_LEVEL {
        return Err(Error::Config(format!("level truncation {l_trunc} exceeds {MAX_LEVEL}")));
    }
    if n0 == 0 {
        return Err(Error::Config("base particle count must be positive".into()));
    }
    if p_trunc >= 40 {
        return Err(Error::Config(format!("particle truncation {p_trunc} is too large")));
    }
    let level_w: Vec<f64> = (l0..=l_trunc)
        .map(|l| {
            let lf = l as f64;
            ((lf + 2.0).ln()).powi(2) * (lf + 1.0) * delta(l).sqrt()
        })
        .collect();
    let p_w: Vec<f64> = (0..=p_trunc)
        .map(|p| {
            let pf = p as f64;
            ((pf + 2.0).ln()).powi(2) * (pf + 1.0) / (n0 as f64 * 2f64.powi(p as i32))
        })
        .collect();
    let (level_pmf, level_cdf) = normalise_pmf(level_w);
    let (p_pmf, p_cdf) = normalise_pmf(p_w);
    Ok(Randomization { l0, l_trunc, p_trunc, n0, level_pmf, level_cdf, p_pmf, p_cdf })
}

impl Randomization {
    pub fn level_prob(&self, level: u32) -> f64 {
        self.level_pmf[(level - self.l0) as usize]
    }

    pub fn p_prob(&self, p: u32) -> f64 {
        self.p_pmf[p as usize]
    }

    /// Pooled particle count after doubling index `p`.
    pub fn particles_at(&self, p: u32) -> usize {
        self.n0 << p
    }

    pub fn sample_level<R: Rng>(&self, rng: &mut R) -> u32 {
        self.l0 + sample_cdf(&self.level_cdf, rng) as u32
    }

    pub fn sample_p<R: Rng>(&self, rng: &mut R) -> u32 {
        sample_cdf(&self.p_cdf, rng) as u32
    }
}

pub struct UpfParams<'a> {
    pub model: &'a Model,
    pub dataset: &'a MarkedDataset,
    pub horizon: u32,
    pub quadrature: Quadrature,
    pub randomization: Randomization,
    pub replicates: usize,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct XiOutput {
    pub value: f64,
    pub cost_substeps: u64,
}

/// Weighted mean of `phi` under the union of several terminal clouds. Raw log
/// weights are comparable across runs of the same level and dataset, so the
/// clouds pool by simple concatenation.
fn pooled_estimate<F: Fn(f64) -> f64>(clouds: &[&TerminalCloud], phi: &F) -> Result<f64> {
    let mut log_w = Vec::new();
    let mut ends = Vec::new();
    for c in clouds {
        log_w.extend_from_slice(&c.log_weights);
        ends.extend_from_slice(&c.endpoints);
    }
    weighted_estimate(&log_w, &ends, phi)
}

/// One increment of the randomised estimator at level `level` and doubling
/// index `p`: runs `p + 1` filters (sizes `n0, n0, 2 n0, 4 n0, ...`, pooling
/// to `N_p` particles), forms terminal-time pooled measures over the first
/// `p` runs and over all `p + 1` runs, and returns their difference divided
/// by the probability of drawing `p`. At the base level the runs are plain
/// filters and the measure difference is taken directly; at finer levels the
/// runs are coupled pairs and the fine-minus-coarse gap is differenced.
pub fn compute_xi<F: Fn(f64) -> f64>(
    params: &UpfParams,
    level: u32,
    p: u32,
    seed: u64,
    phi: &F,
) -> Result<XiOutput> {
    let rnd = &params.randomization;
    let run_sizes: Vec<usize> = (0..=p)
        .map(|q| {
            if q == 0 {
                rnd.n0
            } else {
                rnd.particles_at(q) - rnd.particles_at(q - 1)
            }
        })
        .collect();
    let mut cost = 0u64;
    let filter_params = |q: u32, particles: usize| FilterParams {
        model: params.model,
        dataset: params.dataset,
        level,
        particles,
        horizon: params.horizon,
        quadrature: params.quadrature,
        seed: derive_seed(seed, &[lane::RUN, q as u64]),
    };

    let value = if level == rnd.l0 {
        let mut clouds = Vec::with_capacity(run_sizes.len());
        for (q, &n) in run_sizes.iter().enumerate() {
            let out = run_pf(&filter_params(q as u32, n), std::slice::from_ref(phi))?;
            cost += out.cost_substeps;
            clouds.push(out.terminal);
        }
        let all: Vec<&TerminalCloud> = clouds.iter().collect();
        let upper = pooled_estimate(&all, phi)?;
        let lower = if p == 0 { 0.0 } else { pooled_estimate(&all[..p as usize], phi)? };
        upper - lower
    } else {
        let mut fine = Vec::with_capacity(run_sizes.len());
        let mut coarse = Vec::with_capacity(run_sizes.len());
        for (q, &n) in run_sizes.iter().enumerate() {
            let out = run_cpf(&filter_params(q as u32, n), std::slice::from_ref(phi))?;
            cost += out.cost_substeps;
            fine.push(out.terminal_fine);
            coarse.push(out.terminal_coarse);
        }
        let fine_all: Vec<&TerminalCloud> = fine.iter().collect();
        let coarse_all: Vec<&TerminalCloud> = coarse.iter().collect();
        let upper = pooled_estimate(&fine_all, phi)? - pooled_estimate(&coarse_all, phi)?;
        let lower = if p == 0 {
            0.0
        } else {
            pooled_estimate(&fine_all[..p as usize], phi)?
                - pooled_estimate(&coarse_all[..p as usize], phi)?
        };
        upper - lower
    };
    Ok(XiOutput { value: value / rnd.p_prob(p), cost_substeps: cost })
}

/// One replicate of the randomised estimator.
#[derive(Debug, Clone, Copy)]
pub struct UpfReplicate {
    pub level: u32,
    pub p: u32,
    /// Increment divided by both sampling probabilities; the estimator is the
    /// mean of these values.
    pub value: f64,
}

#[derive(Debug, Clone)]
pub struct UpfOutput {
    pub estimate: f64,
    pub replicates: Vec<UpfReplicate>,
    pub cost_substeps: u64,
}

/// Averages `replicates` independent randomised increments. Replicate `i`
/// draws its level and doubling index from the stream `(seed, DRAW, i)` and
/// runs its filters under the derived seed `(seed, REPLICATE, i)`, so any
/// subset of replicates can be reproduced in isolation.
pub fn upf_estimate<F: Fn(f64) -> f64>(params: &UpfParams, phi: F) -> Result<UpfOutput> {
    if params.replicates == 0 {
        return Err(Error::Config("replicate count must be positive".into()));
    }
    let rnd = &params.randomization;
    let mut replicates = Vec::with_capacity(params.replicates);
    let mut cost = 0u64;
    for i in 0..params.replicates {
        let mut draw_rng = stream(params.seed, &[lane::DRAW, i as u64]);
        let level = rnd.sample_level(&mut draw_rng);
        let p = rnd.sample_p(&mut draw_rng);
        let child = derive_seed(params.seed, &[lane::REPLICATE, i as u64]);
        let xi = compute_xi(params, level, p, child, &phi)?;
        cost += xi.cost_substeps;
        replicates.push(UpfReplicate { level, p, value: xi.value / rnd.level_prob(level) });
    }
    let values: Vec<f64> = replicates.iter().map(|r| r.value).collect();
    let estimate = crate::stats::permutation_invariant_mean(&values);
    Ok(UpfOutput { estimate, replicates, cost_substeps: cost })
}
