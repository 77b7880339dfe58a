//! Euler discretisation of the latent diffusion on one unit time interval.
//!
//! Level `l` uses the dyadic step `delta(l) = 2^-l`, so a unit interval holds
//! `2^l` sub-steps. A [`UnitPath`] keeps both the grid states and the
//! Brownian increments that produced them; the increments are what the score
//! functional integrates against, and they make any path replayable.
//!
//! [`coupled_euler_unit`] advances a fine path at level `l` and a coarse path
//! at level `l - 1` from the same Brownian increments: the coarse path
//! consumes consecutive pair sums of the fine increments. Its fine component
//! is bit-identical to [`euler_unit`] fed with the same stream, which is what
//! makes coupled-difference estimators telescope in expectation.

use crate::error::{Error, Result};
use crate::models::Model;
use rand::Rng;
use rand_distr::StandardNormal;

/// Largest accepted discretisation level (2^30 sub-steps per unit interval).
pub const MAX_LEVEL: u32 = 30;

/// Step size `2^-level`.
pub fn delta(level: u32) -> f64 {
    (0.5f64).powi(level as i32)
}

/// One unit interval of a discretised trajectory.
///
/// `states` has length `2^level + 1` and covers the closed interval
/// `[start_time, start_time + 1]`; `increments[k]` is the Brownian increment
/// (variance `delta(level)`) that produced `states[k + 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitPath {
    pub level: u32,
    pub start_time: u32,
    pub states: Vec<f64>,
    pub increments: Vec<f64>,
}

impl UnitPath {
    pub fn substeps(&self) -> usize {
        self.increments.len()
    }

    /// State at the right edge of the unit interval.
    pub fn end_state(&self) -> f64 {
        *self.states.last().unwrap()
    }
}

fn check_level(level: u32) -> Result<()> {
    if level > MAX_LEVEL {
        return Err(Error::Domain(format!("level {level} exceeds maximum {MAX_LEVEL}")));
    }
    Ok(())
}

/// Advances one unit interval from `x0`, drawing `2^level` increments from
/// `rng` in sub-step order.
pub fn euler_unit<R: Rng>(
    model: &Model,
    level: u32,
    start_time: u32,
    x0: f64,
    rng: &mut R,
) -> Result<UnitPath> {
    check_level(level)?;
    let n = 1usize << level;
    let sdt = delta(level).sqrt();
    let mut increments = Vec::with_capacity(n);
    for _ in 0..n {
        let z: f64 = rng.sample(StandardNormal);
        increments.push(sdt * z);
    }
    euler_unit_with_increments(model, level, start_time, x0, increments)
}

/// Deterministic replay: advances one unit interval using the provided
/// Brownian increments (variance `delta(level)` each).
pub fn euler_unit_with_increments(
    model: &Model,
    level: u32,
    start_time: u32,
    x0: f64,
    increments: Vec<f64>,
) -> Result<UnitPath> {
    check_level(level)?;
    let n = 1usize << level;
    if increments.len() != n {
        return Err(Error::Domain(format!(
            "expected {n} increments at level {level}, got {}",
            increments.len()
        )));
    }
    if !x0.is_finite() {
        return Err(Error::Domain(format!("initial state must be finite, got {x0}")));
    }
    let dt = delta(level);
    let mut states = Vec::with_capacity(n + 1);
    states.push(x0);
    let mut x = x0;
    for (k, &z) in increments.iter().enumerate() {
        x = x + model.drift(x)? * dt + model.diffusion(x)? * z;
        if !x.is_finite() {
            return Err(Error::NumericOverflow {
                level,
                step: k,
                unit_time: start_time,
            });
        }
        states.push(x);
    }
    Ok(UnitPath {
        level,
        start_time,
        states,
        increments,
    })
}

/// Advances a synchronously coupled pair: fine at `level`, coarse at
/// `level - 1`, both driven by the same Brownian motion. Requires `level >= 1`.
pub fn coupled_euler_unit<R: Rng>(
    model: &Model,
    level: u32,
    start_time: u32,
    x0_fine: f64,
    x0_coarse: f64,
    rng: &mut R,
) -> Result<(UnitPath, UnitPath)> {
    if level == 0 {
        return Err(Error::Domain("coupled propagation requires level >= 1".into()));
    }
    check_level(level)?;
    let n = 1usize << level;
    let sdt = delta(level).sqrt();
    let mut fine_inc = Vec::with_capacity(n);
    for _ in 0..n {
        let z: f64 = rng.sample(StandardNormal);
        fine_inc.push(sdt * z);
    }
    let coarse_inc: Vec<f64> = fine_inc.chunks_exact(2).map(|p| p[0] + p[1]).collect();
    let fine = euler_unit_with_increments(model, level, start_time, x0_fine, fine_inc)?;
    let coarse = euler_unit_with_increments(model, level - 1, start_time, x0_coarse, coarse_inc)?;
    Ok((fine, coarse))
}

/// Piecewise linear interpolation of the path at an absolute time
/// `t` in `[start_time, start_time + 1]`.
pub fn interpolate(path: &UnitPath, t: f64) -> Result<f64> {
    let p = path.start_time as f64;
    if !(t >= p && t <= p + 1.0) {
        return Err(Error::Domain(format!(
            "time {t} outside unit interval [{p}, {}]",
            p + 1.0
        )));
    }
    let n = path.substeps();
    let u = (t - p) * n as f64;
    let k = (u.floor() as usize).min(n - 1);
    let frac = u - k as f64;
    Ok(path.states[k] * (1.0 - frac) + path.states[k + 1] * frac)
}
