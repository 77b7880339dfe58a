//! Online estimation of the parameter gradient of the log normalising
//! constant (the score), and a stochastic gradient ascent loop on top of it.
//!
//! The score of the discretised model is the smoothing expectation of the
//! additive functional whose unit-interval increment is [`mu_increment`]: a
//! drift-gradient term per Euler sub-step, an event term per observed event,
//! and an intensity-gradient term per quadrature node. [`ScoreFilter`] keeps,
//! for every particle, a running estimate `F` of that smoothing functional.
//! After each propagation the new `F` values are backward-weighted mixtures
//! over the previous cloud: particle `j` contributes with weight equal to its
//! first-sub-step factor times the Euler transition density into the new
//! particle's first state, which makes the update `O(N^2)` per unit time but
//! independent of the level.
//!
//! [`sga_run`] wraps one evolving score filter: every `window` unit times it
//! updates the parameter vector along the difference of consecutive score
//! estimates, so each step is driven by the new observations only.

use crate::error::{Error, Result};
use crate::filters::{normalised_weights, sorted_multinomial_resample};
use crate::models::Model;
use crate::obsgen::MarkedDataset;
use crate::path::{delta, euler_unit, interpolate, UnitPath, MAX_LEVEL};
use crate::potentials::{PotentialContext, Quadrature};
use crate::rng::{lane, stream};

/// Unit-interval increment of the score functional along one particle path:
/// `sum_k grad_b(x_k) Z_{k+1} / sigma(x_k)` over sub-steps, plus
/// `grad log(g lambda)(x_s)` per event in the interval, minus
/// `Delta * grad lambda` summed over the quadrature nodes (right or left
/// sub-step endpoints, matching the weight quadrature).
pub fn mu_increment(
    model: &Model,
    dataset: &MarkedDataset,
    path: &UnitPath,
    quadrature: Quadrature,
) -> Result<Vec<f64>> {
    let d = model.theta_dim();
    let mut out = vec![0.0; d];
    let dt = delta(path.level);
    let n = path.substeps();
    for k in 0..n {
        let x = path.states[k];
        let grad_b = model.grad_drift(x)?;
        if grad_b.iter().any(|&g| g != 0.0) {
            let sigma = model.diffusion(x)?;
            if sigma <= 0.0 {
                return Err(Error::Singular(format!(
                    "drift gradient with vanishing diffusion at x = {x}"
                )));
            }
            for c in 0..d {
                out[c] += grad_b[c] * path.increments[k] / sigma;
            }
        }
        let x_quad = match quadrature {
            Quadrature::Right => path.states[k + 1],
            Quadrature::Left => path.states[k],
        };
        let grad_lam = model.grad_intensity(x_quad)?;
        for c in 0..d {
            out[c] -= grad_lam[c] * dt;
        }
    }
    let t0 = path.start_time as f64;
    for e in dataset.events_in(t0, t0 + 1.0) {
        let g = model.grad_log_mark_intensity(interpolate(path, e.time)?, e.mark)?;
        for c in 0..d {
            out[c] += g[c];
        }
    }
    Ok(out)
}

/// Weighted mean of vector values under raw log weights.
fn weighted_vector_mean(
    log_w: &[f64],
    values: &[Vec<f64>],
    unit_time: u32,
) -> Result<Vec<f64>> {
    let weights = normalised_weights(log_w, unit_time)?;
    let d = values[0].len();
    let mut out = vec![0.0; d];
    for (w, v) in weights.iter().zip(values) {
        for c in 0..d {
            out[c] += w * v[c];
        }
    }
    Ok(out)
}

/// Per-particle running score filter.
///
/// `advance_unit` processes one unit interval with the model passed to it, so
/// a caller may refresh parameters between units; the particle cloud and the
/// accumulated `F` values carry over.
pub struct ScoreFilter {
    level: u32,
    particles: usize,
    quadrature: Quadrature,
    seed: u64,
    unit_time: u32,
    ends: Vec<f64>,
    log_g: Vec<f64>,
    f: Vec<Vec<f64>>,
    cost_substeps: u64,
    cost_kernel_evals: u64,
}

impl ScoreFilter {
    pub fn new(level: u32, particles: usize, quadrature: Quadrature, seed: u64) -> Result<Self> {
        if particles < 2 {
            return Err(Error::Config("score filter needs at least two particles".into()));
        }
        if level > MAX_LEVEL {
            return Err(Error::Config(format!("level {level} exceeds {MAX_LEVEL}")));
        }
        Ok(ScoreFilter {
            level,
            particles,
            quadrature,
            seed,
            unit_time: 0,
            ends: Vec::new(),
            log_g: Vec::new(),
            f: Vec::new(),
            cost_substeps: 0,
            cost_kernel_evals: 0,
        })
    }

    pub fn unit_time(&self) -> u32 {
        self.unit_time
    }

    pub fn cost_substeps(&self) -> u64 {
        self.cost_substeps
    }

    pub fn cost_kernel_evals(&self) -> u64 {
        self.cost_kernel_evals
    }

    /// Processes the next unit interval and returns the score estimate at the
    /// new time. The first call seeds the cloud from the model start point;
    /// later calls resample, propagate, and run the backward mixture update.
    pub fn advance_unit(&mut self, model: &Model, dataset: &MarkedDataset) -> Result<Vec<f64>> {
        let k = self.unit_time;
        if k >= dataset.horizon {
            return Err(Error::Config(format!(
                "unit time {k} is beyond the dataset horizon {}",
                dataset.horizon
            )));
        }
        let d = model.theta_dim();
        if k > 0 && self.f[0].len() != d {
            return Err(Error::Config(format!(
                "parameter dimension changed mid-run: {} then {d}",
                self.f[0].len()
            )));
        }
        let n = self.particles;
        let level = self.level;
        let ctx = PotentialContext::new(model, dataset, level, self.quadrature);
        let dt = delta(level);

        if k == 0 {
            let mut ends = vec![0.0; n];
            let mut log_g = vec![0.0; n];
            let mut f = Vec::with_capacity(n);
            for i in 0..n {
                let mut rng = stream(self.seed, &[lane::PATH, level as u64, i as u64, 0]);
                let path = euler_unit(model, level, 0, model.spec.x_star, &mut rng)?;
                log_g[i] = ctx.log_unit_potential(0, &path)?;
                ends[i] = path.end_state();
                f.push(mu_increment(model, dataset, &path, self.quadrature)?);
            }
            self.cost_substeps += (n as u64) << level;
            let estimate = weighted_vector_mean(&log_g, &f, 0)?;
            self.ends = ends;
            self.log_g = log_g;
            self.f = f;
            self.unit_time = 1;
            return Ok(estimate);
        }

        // Resample the previous cloud; F values follow their particles. Same
        // sorted scheme and stream as the plain filter, so the forward
        // systems coincide.
        let weights = normalised_weights(&self.log_g, k - 1)?;
        let mut rng_r = stream(self.seed, &[lane::RESAMPLE, (k - 1) as u64]);
        let ancestors = sorted_multinomial_resample(&weights, &self.ends, &mut rng_r)?;
        let chi: Vec<f64> = ancestors.iter().map(|&a| self.ends[a]).collect();
        let f_prev: Vec<Vec<f64>> = ancestors.iter().map(|&a| self.f[a].clone()).collect();

        // Propagate and weight the new unit interval.
        let mut paths = Vec::with_capacity(n);
        let mut log_g = vec![0.0; n];
        for i in 0..n {
            let mut rng = stream(self.seed, &[lane::PATH, level as u64, i as u64, k as u64]);
            let path = euler_unit(model, level, k, chi[i], &mut rng)?;
            log_g[i] = ctx.log_unit_potential(k, &path)?;
            paths.push(path);
        }
        self.cost_substeps += (n as u64) << level;

        // Per-ancestor quantities of the first sub-step bridge. The drift
        // term for a re-attributed first step recovers the increment from the
        // endpoints: grad_b(chi) * (x1 - chi - b(chi) dt) / sigma(chi)^2.
        let mut mean_j = vec![0.0; n];
        let mut gb_over_s2 = vec![vec![0.0; d]; n];
        let mut left_lam_term = vec![vec![0.0; d]; n];
        for j in 0..n {
            mean_j[j] = chi[j] + model.drift(chi[j])? * dt;
            let grad_b = model.grad_drift(chi[j])?;
            if grad_b.iter().any(|&g| g != 0.0) {
                let sigma = model.diffusion(chi[j])?;
                if sigma <= 0.0 {
                    return Err(Error::Singular(format!(
                        "drift gradient with vanishing diffusion at x = {}",
                        chi[j]
                    )));
                }
                for c in 0..d {
                    gb_over_s2[j][c] = grad_b[c] / (sigma * sigma);
                }
            }
            if self.quadrature == Quadrature::Left {
                let g = model.grad_intensity(chi[j])?;
                for c in 0..d {
                    left_lam_term[j][c] = g[c] * dt;
                }
            }
        }
        let t0 = k as f64;
        let events_first: Vec<(f64, f64)> = dataset
            .events_in(t0, t0 + dt)
            .iter()
            .map(|e| ((e.time - t0) / dt, e.mark))
            .collect();
        let k_abs = (k as u64) << level;

        let mut f_new = Vec::with_capacity(n);
        let mut log_w = vec![0.0; n];
        for (i, path) in paths.iter().enumerate() {
            let x1 = path.states[1];
            let tail = self.tail_mu(model, dataset, path)?;
            let mut max = f64::NEG_INFINITY;
            for j in 0..n {
                log_w[j] = ctx.log_substep_factor(k_abs, chi[j], x1)?
                    + ctx.log_transition_density(chi[j], x1)?;
                max = max.max(log_w[j]);
            }
            self.cost_kernel_evals += n as u64;
            if !max.is_finite() {
                return Err(Error::Singular(format!(
                    "backward weight denominator vanished for particle {i} at unit time {k}"
                )));
            }
            let mut acc = vec![0.0; d];
            let mut wsum = 0.0;
            for j in 0..n {
                let w = (log_w[j] - max).exp();
                if w == 0.0 {
                    continue;
                }
                wsum += w;
                let dx = x1 - mean_j[j];
                for c in 0..d {
                    acc[c] += w * (f_prev[j][c] + gb_over_s2[j][c] * dx - left_lam_term[j][c]);
                }
                if !events_first.is_empty() {
                    for &(frac, y) in &events_first {
                        let xs = chi[j] + (x1 - chi[j]) * frac;
                        let g = model.grad_log_mark_intensity(xs, y)?;
                        for c in 0..d {
                            acc[c] += w * g[c];
                        }
                    }
                }
            }
            let mut fi = vec![0.0; d];
            for c in 0..d {
                fi[c] = acc[c] / wsum + tail[c];
            }
            f_new.push(fi);
        }

        let estimate = weighted_vector_mean(&log_g, &f_new, k)?;
        self.ends = paths.iter().map(|p| p.end_state()).collect();
        self.log_g = log_g;
        self.f = f_new;
        self.unit_time = k + 1;
        Ok(estimate)
    }

    /// Ancestor-independent part of the unit increment for one propagated
    /// path: drift and event terms of sub-steps after the first, plus the
    /// intensity-gradient quadrature nodes that do not sit on the ancestor.
    fn tail_mu(&self, model: &Model, dataset: &MarkedDataset, path: &UnitPath) -> Result<Vec<f64>> {
        let d = model.theta_dim();
        let mut out = vec![0.0; d];
        let dt = delta(path.level);
        let n = path.substeps();
        for k in 1..n {
            let x = path.states[k];
            let grad_b = model.grad_drift(x)?;
            if grad_b.iter().any(|&g| g != 0.0) {
                let sigma = model.diffusion(x)?;
                if sigma <= 0.0 {
                    return Err(Error::Singular(format!(
                        "drift gradient with vanishing diffusion at x = {x}"
                    )));
                }
                for c in 0..d {
                    out[c] += grad_b[c] * path.increments[k] / sigma;
                }
            }
        }
        match self.quadrature {
            Quadrature::Right => {
                for k in 0..n {
                    let g = model.grad_intensity(path.states[k + 1])?;
                    for c in 0..d {
                        out[c] -= g[c] * dt;
                    }
                }
            }
            Quadrature::Left => {
                for k in 1..n {
                    let g = model.grad_intensity(path.states[k])?;
                    for c in 0..d {
                        out[c] -= g[c] * dt;
                    }
                }
            }
        }
        let t0 = path.start_time as f64;
        for e in dataset.events_in(t0 + dt, t0 + 1.0) {
            let g = model.grad_log_mark_intensity(interpolate(path, e.time)?, e.mark)?;
            for c in 0..d {
                out[c] += g[c];
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone)]
pub struct ScoreOutput {
    /// `scores[t - 1]` estimates the parameter gradient of the log
    /// normalising constant at unit time `t`.
    pub scores: Vec<Vec<f64>>,
    pub cost_substeps: u64,
    /// Backward kernel evaluations: `(horizon - 1) * N^2`.
    pub cost_kernel_evals: u64,
}

/// Runs the score filter over `horizon` unit intervals with fixed parameters.
pub fn run_score_filter(
    model: &Model,
    dataset: &MarkedDataset,
    level: u32,
    particles: usize,
    horizon: u32,
    quadrature: Quadrature,
    seed: u64,
) -> Result<ScoreOutput> {
    if horizon == 0 || horizon > dataset.horizon {
        return Err(Error::Config(format!(
            "horizon must lie in 1..={}, got {horizon}",
            dataset.horizon
        )));
    }
    let mut filter = ScoreFilter::new(level, particles, quadrature, seed)?;
    let mut scores = Vec::with_capacity(horizon as usize);
    for _ in 0..horizon {
        scores.push(filter.advance_unit(model, dataset)?);
    }
    Ok(ScoreOutput {
        scores,
        cost_substeps: filter.cost_substeps,
        cost_kernel_evals: filter.cost_kernel_evals,
    })
}

/// Stochastic gradient ascent configuration. Step `m` uses the diagonal step
/// size `alpha0[c] * (m + 1)^{-beta}`; coordinates are clamped from below by
/// `floors` after every update.
#[derive(Debug, Clone)]
pub struct SgaConfig {
    pub alpha0: Vec<f64>,
    pub beta: f64,
    /// Unit times consumed per parameter update.
    pub window: u32,
    pub iterations: u32,
    pub floors: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct SgaOutput {
    /// `iterations + 1` rows; row 0 is the initial parameter vector.
    pub thetas: Vec<Vec<f64>>,
    /// Score estimate at the end of each window.
    pub scores: Vec<Vec<f64>>,
    /// Scalar schedule factor `(m + 1)^{-beta}` per iteration.
    pub alphas: Vec<f64>,
    /// Number of coordinate updates clamped at their floor.
    pub projections: u32,
    pub cost_substeps: u64,
    pub cost_kernel_evals: u64,
}

/// Online parameter estimation: one evolving score filter whose parameters
/// are refreshed to the current iterate for each data window, updated along
/// score differences so that only the new observations drive each step.
pub fn sga_run(
    model: &Model,
    dataset: &MarkedDataset,
    level: u32,
    particles: usize,
    quadrature: Quadrature,
    seed: u64,
    cfg: &SgaConfig,
) -> Result<SgaOutput> {
    let d = model.theta_dim();
    if cfg.alpha0.len() != d || cfg.floors.len() != d {
        return Err(Error::Config(format!(
            "step sizes and floors must have the parameter dimension {d}"
        )));
    }
    if cfg.alpha0.iter().any(|&a| !(a > 0.0 && a.is_finite())) {
        return Err(Error::Config("step sizes must be positive".into()));
    }
    if !(cfg.beta > 0.5 && cfg.beta <= 1.0) {
        return Err(Error::Config(format!("beta must lie in (0.5, 1], got {}", cfg.beta)));
    }
    if cfg.window == 0 || cfg.iterations == 0 {
        return Err(Error::Config("window and iteration counts must be positive".into()));
    }
    let needed = cfg.window as u64 * cfg.iterations as u64;
    if needed > dataset.horizon as u64 {
        return Err(Error::Config(format!(
            "run needs {needed} unit times but the dataset holds {}",
            dataset.horizon
        )));
    }

    let mut theta = model.theta_values();
    let mut thetas = vec![theta.clone()];
    let mut scores = Vec::with_capacity(cfg.iterations as usize);
    let mut alphas = Vec::with_capacity(cfg.iterations as usize);
    let mut last_score = vec![0.0; d];
    let mut projections = 0u32;
    let mut filter = ScoreFilter::new(level, particles, quadrature, seed)?;
    for m in 0..cfg.iterations {
        let current = model.with_theta_values(&theta)?;
        let mut estimate = vec![0.0; d];
        for _ in 0..cfg.window {
            estimate = filter.advance_unit(&current, dataset)?;
        }
        let a = ((m + 1) as f64).powf(-cfg.beta);
        for c in 0..d {
            theta[c] += cfg.alpha0[c] * a * (estimate[c] - last_score[c]);
            if theta[c] < cfg.floors[c] {
                theta[c] = cfg.floors[c];
                projections += 1;
            }
        }
        thetas.push(theta.clone());
        scores.push(estimate.clone());
        alphas.push(a);
        last_score = estimate;
    }
    Ok(SgaOutput {
        thetas,
        scores,
        alphas,
        projections,
        cost_substeps: filter.cost_substeps,
        cost_kernel_evals: filter.cost_kernel_evals,
    })
}
