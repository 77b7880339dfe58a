//! Dataset simulation and the on-disk dataset format.
//!
//! A dataset is a finite record of the observation process on `(0, T]`: event
//! times `s` with their marks `y`, plus the header needed to reproduce or
//! reinterpret it (model id, parameters, horizon, truth discretisation level,
//! seed). Events are simulated by per-sub-step thinning against the bound
//! `(1 + 1e-6) * max(lambda(x_k), lambda(x_{k+1}))`, which dominates the
//! intensity along the linearly interpolated truth path because every model's
//! intensity is convex in the state along a segment (|x| or a constant). The
//! thinning is therefore exact for the interpolated intensity, not an
//! approximation to it.
//!
//! File layout: `# key=value` header lines followed by one `s,y` pair per
//! line, times strictly increasing. Floats are written with 17 significant
//! digits so a round trip is bit-exact.

use crate::error::{Error, Result};
use crate::models::{Model, ModelId, ModelSpec, ThetaVector};
use crate::path::{delta, euler_unit, interpolate, UnitPath};
use crate::rng::{lane, stream};
use rand::Rng;
use rand_distr::{Distribution, Poisson};
use std::io::{BufRead, BufWriter, Write};
use std::path::Path;

/// One observed event: arrival time and mark.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    pub time: f64,
    pub mark: f64,
}

/// Events on `(0, T]` together with everything needed to reproduce them.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkedDataset {
    pub spec: ModelSpec,
    /// Observation horizon `T` in unit intervals.
    pub horizon: u32,
    /// Discretisation level of the truth path that produced the events.
    pub data_level: u32,
    pub seed: u64,
    pub events: Vec<Event>,
}

impl MarkedDataset {
    /// Events with time in the half-open interval `(lo, hi]`.
    pub fn events_in(&self, lo: f64, hi: f64) -> &[Event] {
        let a = self.events.partition_point(|e| e.time <= lo);
        let b = self.events.partition_point(|e| e.time <= hi);
        &self.events[a..b]
    }

    /// Events belonging to unit interval `p`, i.e. times in `(p, p + 1]`.
    pub fn events_in_unit(&self, p: u32) -> &[Event] {
        self.events_in(p as f64, (p + 1) as f64)
    }

    /// Structural checks: ordering, range, finiteness.
    pub fn validate(&self) -> Result<()> {
        let horizon = self.horizon as f64;
        let mut prev = 0.0f64;
        for (i, e) in self.events.iter().enumerate() {
            if !(e.time.is_finite() && e.mark.is_finite()) {
                return Err(Error::Validation(format!("event {i} is not finite")));
            }
            if e.time <= prev {
                return Err(Error::Validation(format!(
                    "event times must be strictly increasing and positive (event {i} at {})",
                    e.time
                )));
            }
            if e.time > horizon {
                return Err(Error::Validation(format!(
                    "event {i} at {} lies beyond the horizon {horizon}",
                    e.time
                )));
            }
            prev = e.time;
        }
        Ok(())
    }
}

/// Simulates the truth path at `data_level` and the events it emits.
/// Returns the dataset and the truth path, one `UnitPath` per unit interval.
pub fn generate_dataset(
    spec: &ModelSpec,
    horizon: u32,
    data_level: u32,
    seed: u64,
) -> Result<(MarkedDataset, Vec<UnitPath>)> {
    let model = Model::new(spec)?;
    if horizon == 0 {
        return Err(Error::Domain("horizon must be at least one unit interval".into()));
    }
    let dt = delta(data_level);
    let n = 1usize << data_level;
    let mut events = Vec::new();
    let mut truth = Vec::with_capacity(horizon as usize);
    let mut x = spec.x_star;
    for p in 0..horizon {
        let mut path_rng = stream(seed, &[lane::TRUTH, p as u64]);
        let path = euler_unit(&model, data_level, p, x, &mut path_rng)?;
        let mut thin_rng = stream(seed, &[lane::THIN, p as u64]);
        for k in 0..n {
            let left = p as f64 + k as f64 * dt;
            let lam_bound = (1.0 + 1e-6)
                * model
                    .intensity(path.states[k])?
                    .max(model.intensity(path.states[k + 1])?);
            if lam_bound <= 0.0 {
                continue;
            }
            let count = Poisson::new(lam_bound * dt)
                .expect("positive thinning rate")
                .sample(&mut thin_rng) as usize;
            if count == 0 {
                continue;
            }
            let mut times: Vec<f64> = (0..count)
                .map(|_| left + dt * thin_rng.random::<f64>())
                .collect();
            times.sort_by(f64::total_cmp);
            for s in times {
                if s <= 0.0 {
                    continue;
                }
                let lam_s = model.intensity(interpolate(&path, s)?)?;
                let u: f64 = thin_rng.random();
                if u * lam_bound < lam_s {
                    let mark = model.sample_mark(interpolate(&path, s)?, &mut thin_rng);
                    events.push(Event { time: s, mark });
                }
            }
        }
        x = path.end_state();
        truth.push(path);
    }
    let ds = MarkedDataset {
        spec: spec.clone(),
        horizon,
        data_level,
        seed,
        events,
    };
    ds.validate()?;
    Ok((ds, truth))
}

/// 17 significant digits: enough to reproduce any f64 exactly on read.
fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes the dataset in the plain-text format described in the module docs.
pub fn write_dataset(ds: &MarkedDataset, path: &Path) -> Result<()> {
    ds.validate()?;
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "# model_id={}", ds.spec.model)?;
    writeln!(w, "# x_star={}", fmt_f64(ds.spec.x_star))?;
    if let Some(b) = ds.spec.theta.theta_b {
        writeln!(w, "# theta_b={}", fmt_f64(b))?;
    }
    writeln!(w, "# theta_lambda={}", fmt_f64(ds.spec.theta.theta_lambda))?;
    writeln!(w, "# theta_sigma={}", fmt_f64(ds.spec.theta.theta_sigma))?;
    writeln!(w, "# lambda_floor={}", fmt_f64(ds.spec.lambda_floor))?;
    for (k, v) in &ds.spec.theta.fixed {
        writeln!(w, "# fixed_{k}={}", fmt_f64(*v))?;
    }
    writeln!(w, "# T={}", ds.horizon)?;
    writeln!(w, "# data_level={}", ds.data_level)?;
    writeln!(w, "# seed={}", ds.seed)?;
    for e in &ds.events {
        writeln!(w, "{},{}", fmt_f64(e.time), fmt_f64(e.mark))?;
    }
    w.flush()?;
    Ok(())
}

fn parse_f64(line: usize, key: &str, v: &str) -> Result<f64> {
    v.parse::<f64>().map_err(|_| Error::Parse {
        line,
        msg: format!("{key}: cannot parse '{v}' as a float"),
    })
}

/// Reads and validates a dataset file.
pub fn read_dataset(path: &Path) -> Result<MarkedDataset> {
    let file = std::fs::File::open(path)?;
    let reader = std::io::BufReader::new(file);
    let mut meta: Vec<(String, String, usize)> = Vec::new();
    let mut events = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            let rest = rest.trim();
            let (k, v) = rest.split_once('=').ok_or_else(|| Error::Parse {
                line: lineno,
                msg: format!("header line without '=': '{rest}'"),
            })?;
            meta.push((k.trim().to_string(), v.trim().to_string(), lineno));
            continue;
        }
        let (s, y) = line.split_once(',').ok_or_else(|| Error::Parse {
            line: lineno,
            msg: format!("expected 's,y', got '{line}'"),
        })?;
        events.push(Event {
            time: parse_f64(lineno, "event time", s.trim())?,
            mark: parse_f64(lineno, "event mark", y.trim())?,
        });
    }

    let mut model_id: Option<ModelId> = None;
    let mut x_star: Option<f64> = None;
    let mut theta_b: Option<f64> = None;
    let mut theta_lambda: Option<f64> = None;
    let mut theta_sigma: Option<f64> = None;
    let mut lambda_floor = 0.0f64;
    let mut fixed = std::collections::BTreeMap::new();
    let mut horizon: Option<u32> = None;
    let mut data_level: Option<u32> = None;
    let mut seed: Option<u64> = None;
    for (k, v, lineno) in meta {
        match k.as_str() {
            "model_id" => model_id = Some(v.parse()?),
            "x_star" => x_star = Some(parse_f64(lineno, &k, &v)?),
            "theta_b" => theta_b = Some(parse_f64(lineno, &k, &v)?),
            "theta_lambda" => theta_lambda = Some(parse_f64(lineno, &k, &v)?),
            "theta_sigma" => theta_sigma = Some(parse_f64(lineno, &k, &v)?),
            "lambda_floor" => lambda_floor = parse_f64(lineno, &k, &v)?,
            "T" => {
                horizon = Some(v.parse().map_err(|_| Error::Parse {
                    line: lineno,
                    msg: format!("T: cannot parse '{v}'"),
                })?)
            }
            "data_level" => {
                data_level = Some(v.parse().map_err(|_| Error::Parse {
                    line: lineno,
                    msg: format!("data_level: cannot parse '{v}'"),
                })?)
            }
            "seed" => {
                seed = Some(v.parse().map_err(|_| Error::Parse {
                    line: lineno,
                    msg: format!("seed: cannot parse '{v}'"),
                })?)
            }
            other => {
                if let Some(name) = other.strip_prefix("fixed_") {
                    fixed.insert(name.to_string(), parse_f64(lineno, other, &v)?);
                } else {
                    return Err(Error::Parse {
                        line: lineno,
                        msg: format!("unknown header key '{other}'"),
                    });
                }
            }
        }
    }
    let missing = |what: &str| Error::Validation(format!("dataset header missing {what}"));
    let mut spec = ModelSpec::new(
        model_id.ok_or_else(|| missing("model_id"))?,
        x_star.ok_or_else(|| missing("x_star"))?,
        ThetaVector::new(
            theta_b,
            theta_lambda.ok_or_else(|| missing("theta_lambda"))?,
            theta_sigma.ok_or_else(|| missing("theta_sigma"))?,
        ),
    );
    spec.theta.fixed = fixed;
    spec.lambda_floor = lambda_floor;
    Model::new(&spec)?;
    let ds = MarkedDataset {
        spec,
        horizon: horizon.ok_or_else(|| missing("T"))?,
        data_level: data_level.ok_or_else(|| missing("data_level"))?,
        seed: seed.ok_or_else(|| missing("seed"))?,
        events,
    };
    ds.validate()?;
    Ok(ds)
}
