//! Benchmark harness: reference values, MSE-versus-cost experiments for the
//! three estimators, level-decay studies, and log-log rate fitting.
//!
//! Costs are Euler sub-step counters, not wall-clock time, so experiment
//! outputs are exact integers per run and reproducible across machines.

use crate::error::{Error, Result};
use crate::filters::{run_cpf, run_pf, FilterParams};
use crate::mlmc::{build_randomization, run_mlpf, upf_estimate, MlpfParams, UpfParams};
use crate::models::Model;
use crate::obsgen::MarkedDataset;
use crate::potentials::Quadrature;
use crate::rng::{derive_seed, lane};
use crate::stats::{ols, RunningStats};

/// Ordinary least squares in a log-log plane. Callers supply points already
/// mapped to logarithms; `slope` is then the fitted decay or growth rate.
#[derive(Debug, Clone)]
pub struct RateFit {
    pub points: Vec<(f64, f64)>,
    pub slope: f64,
    pub intercept: f64,
    pub residual: f64,
}

impl RateFit {
    pub fn fit(points: &[(f64, f64)]) -> Result<RateFit> {
        if points.len() < 3 {
            return Err(Error::Domain(format!(
                "rate fit needs at least 3 points, got {}",
                points.len()
            )));
        }
        if points.iter().any(|&(x, y)| !(x.is_finite() && y.is_finite())) {
            return Err(Error::Domain("rate fit points must be finite".into()));
        }
        let (slope, intercept, residual) = ols(points);
        Ok(RateFit { points: points.to_vec(), slope, intercept, residual })
    }
}

pub struct ReferenceConfig {
    pub level: u32,
    pub particles: usize,
    pub replicates: usize,
    pub seed: u64,
    /// Requested accuracy: the standard error must come in below a third of
    /// it, otherwise the reference is rejected as under-resolved.
    pub tolerance: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct ReferenceValue {
    pub mean: f64,
    pub stderr: f64,
    pub replicates: Vec<f64>,
    pub cost_substeps: u64,
}

/// High-resolution proxy for the exact terminal-time filter expectation:
/// plain filters replicated over derived seeds, averaged.
pub fn reference_value<F: Fn(f64) -> f64>(
    model: &Model,
    dataset: &MarkedDataset,
    horizon: u32,
    quadrature: Quadrature,
    cfg: &ReferenceConfig,
    phi: F,
) -> Result<ReferenceValue> {
    if cfg.replicates == 0 {
        return Err(Error::Config("reference needs at least one replicate".into()));
    }
    let mut values = Vec::with_capacity(cfg.replicates);
    let mut stats = RunningStats::new();
    let mut cost = 0u64;
    for r in 0..cfg.replicates {
        let out = run_pf(
            &FilterParams {
                model,
                dataset,
                level: cfg.level,
                particles: cfg.particles,
                horizon,
                quadrature,
                seed: derive_seed(cfg.seed, &[lane::REPLICATE, r as u64]),
            },
            &[&phi],
        )?;
        let v = out.estimates[0][horizon as usize - 1];
        values.push(v);
        stats.push(v);
        cost += out.cost_substeps;
    }
    let stderr = stats.stderr();
    if let Some(tol) = cfg.tolerance {
        let bound = tol / 3.0;
        if !(stderr <= bound) {
            return Err(Error::UnderResolvedReference { stderr, bound });
        }
    }
    Ok(ReferenceValue { mean: stats.mean(), stderr, replicates: values, cost_substeps: cost })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimatorKind {
    Pf,
    Mlpf,
    Upf,
}

/// One accuracy point of an MSE-versus-cost experiment.
#[derive(Debug, Clone)]
pub struct MseCostRow {
    pub target: f64,
    pub mse: f64,
    pub mean_cost: f64,
    pub reps: usize,
    /// Sample variance of the replicate estimates (not part of the CSV
    /// contract, used to separate variance from squared bias).
    pub var: f64,
}

pub struct MseCostParams<'a> {
    pub model: &'a Model,
    pub dataset: &'a MarkedDataset,
    pub horizon: u32,
    pub quadrature: Quadrature,
    pub kind: EstimatorKind,
    pub epsilons: Vec<f64>,
    pub repetitions: usize,
    pub seed: u64,
    pub reference: f64,
    /// Single-level arm: `N = ceil(pf_constant / eps^2)` at the finest level.
    pub pf_constant: f64,
    /// Multilevel arm allocation constant.
    pub mlpf_constant: f64,
    pub l0: u32,
    /// Randomised arm: `M = ceil(upf_constant / eps^2)` replicates.
    pub upf_constant: f64,
    pub upf_p_trunc: u32,
    pub upf_n0: usize,
}

fn finest_level(epsilon: f64, l0: u32) -> u32 {
    l0 + (1.0 / epsilon).log2().ceil().max(0.0) as u32
}

/// Runs `repetitions` independent replicates of the chosen estimator at each
/// accuracy, measuring squared deviation from the reference and mean cost.
pub fn mse_cost_experiment<F: Fn(f64) -> f64>(
    params: &MseCostParams,
    phi: F,
) -> Result<Vec<MseCostRow>> {
    if params.repetitions < 2 {
        return Err(Error::Config("MSE experiment needs at least 2 repetitions".into()));
    }
    if params.epsilons.is_empty() {
        return Err(Error::Config("accuracy grid is empty".into()));
    }
    let mut rows = Vec::with_capacity(params.epsilons.len());
    for (e_idx, &eps) in params.epsilons.iter().enumerate() {
        if !(eps > 0.0 && eps <= 1.0) {
            return Err(Error::Config(format!("accuracy must lie in (0, 1], got {eps}")));
        }
        let mut sq = RunningStats::new();
        let mut est_stats = RunningStats::new();
        let mut cost_sum = 0u64;
        for r in 0..params.repetitions {
            let seed = derive_seed(params.seed, &[lane::REPLICATE, e_idx as u64, r as u64]);
            let (est, cost) = match params.kind {
                EstimatorKind::Pf => {
                    let level = finest_level(eps, params.l0);
                    let n = (params.pf_constant / (eps * eps)).ceil().max(1.0) as usize;
                    let out = run_pf(
                        &FilterParams {
                            model: params.model,
                            dataset: params.dataset,
                            level,
                            particles: n,
                            horizon: params.horizon,
                            quadrature: params.quadrature,
                            seed,
                        },
                        &[&phi],
                    )?;
                    (out.estimates[0][params.horizon as usize - 1], out.cost_substeps)
                }
                EstimatorKind::Mlpf => {
                    let out = run_mlpf(
                        &MlpfParams {
                            model: params.model,
                            dataset: params.dataset,
                            horizon: params.horizon,
                            epsilon: eps,
                            l0: params.l0,
                            constant: params.mlpf_constant,
                            quadrature: params.quadrature,
                            seed,
                        },
                        &[&phi],
                    )?;
                    (out.estimates[0][params.horizon as usize - 1], out.cost_substeps)
                }
                EstimatorKind::Upf => {
                    let rnd = build_randomization(
                        params.l0,
                        finest_level(eps, params.l0),
                        params.upf_p_trunc,
                        params.upf_n0,
                    )?;
                    let m = (params.upf_constant / (eps * eps)).ceil().max(1.0) as usize;
                    let out = upf_estimate(
                        &UpfParams {
                            model: params.model,
                            dataset: params.dataset,
                            horizon: params.horizon,
                            quadrature: params.quadrature,
                            randomization: rnd,
                            replicates: m,
                            seed,
                        },
                        &phi,
                    )?;
                    (out.estimate, out.cost_substeps)
                }
            };
            sq.push((est - params.reference) * (est - params.reference));
            est_stats.push(est);
            cost_sum += cost;
        }
        rows.push(MseCostRow {
            target: eps,
            mse: sq.mean(),
            mean_cost: cost_sum as f64 / params.repetitions as f64,
            reps: params.repetitions,
            var: est_stats.variance(),
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecayKind {
    CouplingVariance,
    WeakBias,
}

/// One level of a decay study. `resolved` marks rows whose Monte Carlo error
/// is small enough to trust the value; only those enter the rate fit.
#[derive(Debug, Clone)]
pub struct DecayRow {
    pub level: u32,
    pub value: f64,
    pub mc_stderr: f64,
    pub resolved: bool,
}

#[derive(Debug, Clone)]
pub struct DecayOutput {
    pub rows: Vec<DecayRow>,
    /// Fit of `log2 value` against the level over resolved positive rows;
    /// absent when fewer than three such rows exist.
    pub fit: Option<RateFit>,
}

pub struct DecayParams<'a> {
    pub model: &'a Model,
    pub dataset: &'a MarkedDataset,
    pub horizon: u32,
    pub quadrature: Quadrature,
    pub kind: DecayKind,
    pub levels: Vec<u32>,
    pub particles: usize,
    pub repetitions: usize,
    pub seed: u64,
    /// Required for the weak-bias study.
    pub reference: Option<f64>,
}

/// Measures, per level, either the seed-replicated variance of the coupled
/// difference estimator or the absolute bias of the plain filter against a
/// reference, and fits the decay rate across levels.
pub fn decay_experiment<F: Fn(f64) -> f64>(params: &DecayParams, phi: F) -> Result<DecayOutput> {
    if params.levels.len() < 4 {
        return Err(Error::Config(format!(
            "decay study needs at least 4 levels, got {}",
            params.levels.len()
        )));
    }
    if params.repetitions < 2 {
        return Err(Error::Config("decay study needs at least 2 repetitions".into()));
    }
    if params.kind == DecayKind::WeakBias && params.reference.is_none() {
        return Err(Error::Config("weak-bias study needs a reference value".into()));
    }
    let mut rows = Vec::with_capacity(params.levels.len());
    for (l_idx, &level) in params.levels.iter().enumerate() {
        let mut stats = RunningStats::new();
        for r in 0..params.repetitions {
            let fp = FilterParams {
                model: params.model,
                dataset: params.dataset,
                level,
                particles: params.particles,
                horizon: params.horizon,
                quadrature: params.quadrature,
                seed: derive_seed(params.seed, &[lane::REPLICATE, l_idx as u64, r as u64]),
            };
            match params.kind {
                DecayKind::CouplingVariance => {
                    let out = run_cpf(&fp, &[&phi])?;
                    stats.push(out.diff[0][params.horizon as usize - 1]);
                }
                DecayKind::WeakBias => {
                    let out = run_pf(&fp, &[&phi])?;
                    stats.push(out.estimates[0][params.horizon as usize - 1]);
                }
            }
        }
        let row = match params.kind {
            DecayKind::CouplingVariance => {
                let v = stats.variance();
                // Normal-theory spread of a sample variance.
                let se = v * (2.0 / (params.repetitions as f64 - 1.0)).sqrt();
                DecayRow { level, value: v, mc_stderr: se, resolved: true }
            }
            DecayKind::WeakBias => {
                let bias = (stats.mean() - params.reference.unwrap()).abs();
                let se = stats.stderr();
                DecayRow { level, value: bias, mc_stderr: se, resolved: se < bias / 3.0 }
            }
        };
        rows.push(row);
    }
    let points: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.resolved && r.value > 0.0)
        .map(|r| (r.level as f64, r.value.log2()))
        .collect();
    let fit = if points.len() >= 3 { Some(RateFit::fit(&points)?) } else { None };
    Ok(DecayOutput { rows, fit })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{ModelId, ModelSpec, ThetaVector};
    use crate::obsgen::generate_dataset;

    #[test]
    fn rate_fit_recovers_an_exact_power_law() {
        let points: Vec<(f64, f64)> = (2..=6)
            .map(|l| (l as f64, -1.3 * l as f64 + 0.7))
            .collect();
        let fit = RateFit::fit(&points).unwrap();
        assert!((fit.slope + 1.3).abs() < 1e-10);
        assert!((fit.intercept - 0.7).abs() < 1e-10);
        assert!(fit.residual < 1e-10);
        assert!(RateFit::fit(&points[..2]).is_err());
    }

    fn symmetric_spec() -> ModelSpec {
        ModelSpec::new(
            ModelId::TestConst,
            0.0,
            ThetaVector::new(None, 1.0, 1.0)
                .with_fixed("c", 1.0)
                .with_fixed("fixed_mark_mean", 0.0),
        )
    }

    /// Zero drift from a symmetric start with state-independent observations:
    /// the terminal mean is zero by symmetry.
    #[test]
    fn symmetric_model_reference_is_zero() {
        let spec = symmetric_spec();
        let (ds, _) = generate_dataset(&spec, 3, 6, 5).unwrap();
        let model = Model::new(&spec).unwrap();
        let cfg = ReferenceConfig { level: 4, particles: 4000, replicates: 6, seed: 2, tolerance: None };
        let r = reference_value(&model, &ds, 3, Quadrature::Right, &cfg, |x| x).unwrap();
        assert!(r.mean.abs() < 4.0 * r.stderr, "mean {} stderr {}", r.mean, r.stderr);
        assert_eq!(r.replicates.len(), 6);
        assert_eq!(r.cost_substeps, 6 * 4000 * 3 * 16);
    }

    #[test]
    fn unattainable_tolerance_is_rejected() {
        let spec = symmetric_spec();
        let (ds, _) = generate_dataset(&spec, 2, 6, 5).unwrap();
        let model = Model::new(&spec).unwrap();
        let cfg = ReferenceConfig { level: 2, particles: 50, replicates: 4, seed: 2, tolerance: Some(1e-12) };
        match reference_value(&model, &ds, 2, Quadrature::Right, &cfg, |x| x) {
            Err(Error::UnderResolvedReference { stderr, bound }) => {
                assert!(stderr > bound);
            }
            other => panic!("expected under-resolved reference, got {other:?}"),
        }
    }

    #[test]
    fn disjoint_seed_references_agree() {
        let spec = symmetric_spec();
        let (ds, _) = generate_dataset(&spec, 2, 6, 5).unwrap();
        let model = Model::new(&spec).unwrap();
        let mk = |seed| ReferenceConfig { level: 3, particles: 2000, replicates: 5, seed, tolerance: None };
        let a = reference_value(&model, &ds, 2, Quadrature::Right, &mk(10), |x| x).unwrap();
        let b = reference_value(&model, &ds, 2, Quadrature::Right, &mk(20), |x| x).unwrap();
        let pooled = (a.stderr * a.stderr + b.stderr * b.stderr).sqrt();
        assert!((a.mean - b.mean).abs() < 3.0 * pooled);
    }

    fn ou_spec() -> ModelSpec {
        ModelSpec::new(
            ModelId::Ou,
            1.0,
            ThetaVector::new(Some(0.98), 3.5, 1.0).with_fixed("sigma", 1.0),
        )
    }

    /// Doubling the particle constant must roughly halve the replicate
    /// variance of the single-level filter.
    #[test]
    fn particle_doubling_halves_the_variance() {
        let spec = ou_spec();
        let (ds, _) = generate_dataset(&spec, 2, 8, 7).unwrap();
        let model = Model::new(&spec).unwrap();
        let mk = |c: f64| MseCostParams {
            model: &model,
            dataset: &ds,
            horizon: 2,
            quadrature: Quadrature::Right,
            kind: EstimatorKind::Pf,
            epsilons: vec![0.25],
            repetitions: 400,
            seed: 33,
            reference: 0.0,
            pf_constant: c,
            mlpf_constant: 1.0,
            l0: 0,
            upf_constant: 1.0,
            upf_p_trunc: 2,
            upf_n0: 5,
        };
        let small = mse_cost_experiment(&mk(4.0), |x| x).unwrap();
        let large = mse_cost_experiment(&mk(8.0), |x| x).unwrap();
        let ratio = small[0].var / large[0].var;
        assert!((1.4..=2.6).contains(&ratio), "variance ratio {ratio}");
        // Costs are exact integer multiples: N * substeps * horizon.
        assert_eq!(small[0].mean_cost, (64 * 4 * 2) as f64);
        assert_eq!(large[0].mean_cost, (128 * 4 * 2) as f64);
    }

    #[test]
    fn experiment_rejects_degenerate_configs() {
        let spec = ou_spec();
        let (ds, _) = generate_dataset(&spec, 2, 8, 7).unwrap();
        let model = Model::new(&spec).unwrap();
        let params = MseCostParams {
            model: &model,
            dataset: &ds,
            horizon: 2,
            quadrature: Quadrature::Right,
            kind: EstimatorKind::Pf,
            epsilons: vec![],
            repetitions: 1,
            seed: 1,
            reference: 0.0,
            pf_constant: 1.0,
            mlpf_constant: 1.0,
            l0: 0,
            upf_constant: 1.0,
            upf_p_trunc: 2,
            upf_n0: 5,
        };
        assert!(mse_cost_experiment(&params, |x| x).is_err());
    }

    /// A noiseless diffusion couples exactly: every level difference is the
    /// deterministic Euler gap between two step sizes of the same recursion,
    /// so the replicate variance vanishes identically.
    #[test]
    fn deterministic_dynamics_have_zero_coupling_variance() {
        let spec = ModelSpec::new(
            ModelId::Ou,
            1.0,
            ThetaVector::new(Some(0.5), 0.1, 1.0).with_fixed("sigma", 0.0),
        );
        let (ds, _) = generate_dataset(&spec, 2, 6, 9).unwrap();
        let model = Model::new(&spec).unwrap();
        let params = DecayParams {
            model: &model,
            dataset: &ds,
            horizon: 2,
            quadrature: Quadrature::Right,
            kind: DecayKind::CouplingVariance,
            levels: vec![1, 2, 3, 4],
            particles: 20,
            repetitions: 10,
            seed: 3,
            reference: None,
        };
        let out = decay_experiment(&params, |x| x).unwrap();
        for row in &out.rows {
            assert_eq!(row.value, 0.0, "level {}", row.level);
        }
        assert!(out.fit.is_none());
    }

    #[test]
    fn coupling_variance_shrinks_with_the_level() {
        let spec = ou_spec();
        let (ds, _) = generate_dataset(&spec, 2, 8, 11).unwrap();
        let model = Model::new(&spec).unwrap();
        let params = DecayParams {
            model: &model,
            dataset: &ds,
            horizon: 2,
            quadrature: Quadrature::Right,
            kind: DecayKind::CouplingVariance,
            levels: vec![2, 3, 4, 5],
            particles: 100,
            repetitions: 60,
            seed: 4,
            reference: None,
        };
        let out = decay_experiment(&params, |x| x).unwrap();
        let fit = out.fit.expect("fit");
        assert!(fit.slope < 0.0, "slope {}", fit.slope);
    }

    #[test]
    fn weak_bias_needs_a_reference_and_flags_noise_floors() {
        let spec = ou_spec();
        let (ds, _) = generate_dataset(&spec, 2, 8, 13).unwrap();
        let model = Model::new(&spec).unwrap();
        let mut params = DecayParams {
            model: &model,
            dataset: &ds,
            horizon: 2,
            quadrature: Quadrature::Right,
            kind: DecayKind::WeakBias,
            levels: vec![1, 2, 3, 4],
            particles: 40,
            repetitions: 4,
            seed: 5,
            reference: None,
        };
        assert!(decay_experiment(&params, |x| x).is_err());
        params.reference = Some(0.9);
        let out = decay_experiment(&params, |x| x).unwrap();
        assert_eq!(out.rows.len(), 4);
        // With 40 particles the Monte Carlo error dominates fine levels;
        // the rows exist either way and carry their reliability flag.
        for row in &out.rows {
            assert!(row.mc_stderr.is_finite());
        }
    }
}
