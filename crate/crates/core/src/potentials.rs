//! Unit-interval weights of the filter.
//!
//! Conditional on a discretised path over `(p, p + 1]`, the observation
//! likelihood contributes, per event at time `s` with mark `y`, the factor
//! `g(x_s, y) * lambda(x_s)` (with `x_s` the linearly interpolated state) and,
//! for the event-free stretches, the survival factor
//! `exp(-delta * sum_k lambda(x_k))` with the sum over one grid endpoint per
//! sub-step. [`Quadrature`] selects which endpoint enters that Riemann sum;
//! the right-endpoint rule is the default, and the same rule is applied to
//! the intensity term of the score functional so that weight and score stay
//! gradients of one another.
//!
//! Everything is computed and returned in the log domain; a zero intensity at
//! an event maps to `-inf` (a zero weight), not an error.

use crate::error::{Error, Result};
use crate::models::{normal_logpdf, Model};
use crate::obsgen::MarkedDataset;
use crate::path::{delta, interpolate, UnitPath};

/// Which sub-step endpoint the discretised intensity integral evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Quadrature {
    #[default]
    Right,
    Left,
}

impl std::str::FromStr for Quadrature {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "right" => Ok(Quadrature::Right),
            "left" => Ok(Quadrature::Left),
            other => Err(Error::Config(format!("unknown quadrature '{other}'"))),
        }
    }
}

/// Everything needed to evaluate weights at one discretisation level.
pub struct PotentialContext<'a> {
    pub model: &'a Model,
    pub dataset: &'a MarkedDataset,
    pub level: u32,
    pub quadrature: Quadrature,
}

impl<'a> PotentialContext<'a> {
    pub fn new(
        model: &'a Model,
        dataset: &'a MarkedDataset,
        level: u32,
        quadrature: Quadrature,
    ) -> Self {
        Self {
            model,
            dataset,
            level,
            quadrature,
        }
    }

    /// Log weight of one unit interval: event factors at the interpolated
    /// states plus the discretised survival exponent.
    pub fn log_unit_potential(&self, p: u32, path: &UnitPath) -> Result<f64> {
        if path.level != self.level || path.start_time != p {
            return Err(Error::Domain(format!(
                "path (level {}, start {}) does not match context (level {}, unit {p})",
                path.level, path.start_time, self.level
            )));
        }
        let mut log_g = 0.0f64;
        for e in self.dataset.events_in_unit(p) {
            let x_s = interpolate(path, e.time)?;
            log_g += self.model.mark_logdensity(x_s, e.mark)?;
            log_g += self.model.intensity(x_s)?.ln();
        }
        let dt = delta(self.level);
        let n = path.substeps();
        let states = match self.quadrature {
            Quadrature::Right => &path.states[1..=n],
            Quadrature::Left => &path.states[..n],
        };
        let mut lam_sum = 0.0f64;
        for &x in states {
            lam_sum += self.model.intensity(x)?;
        }
        Ok(log_g - dt * lam_sum)
    }

    /// Log factor of a single sub-step `(k * delta, (k + 1) * delta]`
    /// (absolute index `k` from time zero), bridging `x_left` to `x_right`:
    /// event factors at linearly interpolated states, times the survival
    /// factor `exp(-lambda(x_left) * delta)`.
    pub fn log_substep_factor(&self, k: u64, x_left: f64, x_right: f64) -> Result<f64> {
        let dt = delta(self.level);
        let lo = k as f64 * dt;
        let hi = (k + 1) as f64 * dt;
        let mut log_g = 0.0f64;
        for e in self.dataset.events_in(lo, hi) {
            let frac = (e.time - lo) / dt;
            let x_s = x_left + (x_right - x_left) * frac;
            log_g += self.model.mark_logdensity(x_s, e.mark)?;
            log_g += self.model.intensity(x_s)?.ln();
        }
        Ok(log_g - self.model.intensity(x_left)? * dt)
    }

    /// Log density of the one-sub-step Euler transition from `x_from` to
    /// `x_to`: Gaussian with mean `x_from + b(x_from) * delta` and variance
    /// `sigma(x_from)^2 * delta`. Errors where the diffusion vanishes.
    pub fn log_transition_density(&self, x_from: f64, x_to: f64) -> Result<f64> {
        if !x_to.is_finite() {
            return Err(Error::Domain(format!("x_to must be finite, got {x_to}")));
        }
        let dt = delta(self.level);
        let sig = self.model.diffusion(x_from)?;
        if sig <= 0.0 {
            return Err(Error::Singular(format!(
                "transition density undefined at x = {x_from}: zero diffusion"
            )));
        }
        Ok(normal_logpdf(
            x_to,
            x_from + self.model.drift(x_from)? * dt,
            sig * sig * dt,
        ))
    }
}
