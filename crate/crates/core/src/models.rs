//! Model catalogue: drift and diffusion coefficients of the latent scalar
//! diffusion, the event intensity, and the mark density, together with their
//! gradients in the estimated parameters.
//!
//! A [`ModelSpec`] is plain data (what a config file or dataset header can
//! express); [`Model`] is the resolved, validated form used by the numerics.
//! The estimated parameter vector is model dependent: models with a free
//! drift parameter expose `[DriftB, Lambda, Sigma]`, the others `[Lambda,
//! Sigma]`. Gradients are always reported in that per-model coordinate order.

use crate::error::{Error, Result};
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

/// Natural log of the scalar Gaussian density with mean `mean`, variance `var`.
pub fn normal_logpdf(x: f64, mean: f64, var: f64) -> f64 {
    let d = x - mean;
    -0.5 * (2.0 * std::f64::consts::PI * var).ln() - d * d / (2.0 * var)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelId {
    /// Linear mean-reverting drift `-theta_b x`, constant diffusion `sigma`.
    Ou,
    /// Drift `(nu + 1) x / (x^2 + nu)`, unit diffusion.
    Langevin,
    /// Zero drift, diffusion `1 / sqrt(1 + x^2)`.
    Nldt,
    /// Linear drift `theta_b x`, diffusion `sigma x`, nonnegative state.
    Gbm,
    /// Test-only model: zero drift, unit diffusion, constant event intensity
    /// `c`. Optional fixed params `fixed_mark_mean` (marks independent of the
    /// state) and `fixed_mark_var` (marks independent of theta entirely).
    TestConst,
}

impl fmt::Display for ModelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ModelId::Ou => "OU",
            ModelId::Langevin => "Langevin",
            ModelId::Nldt => "NLDT",
            ModelId::Gbm => "GBM",
            ModelId::TestConst => "TestConst",
        };
        f.write_str(s)
    }
}

impl FromStr for ModelId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ou" => Ok(ModelId::Ou),
            "langevin" => Ok(ModelId::Langevin),
            "nldt" => Ok(ModelId::Nldt),
            "gbm" => Ok(ModelId::Gbm),
            "testconst" => Ok(ModelId::TestConst),
            other => Err(Error::Config(format!("unknown model id: {other}"))),
        }
    }
}

/// Estimated parameters plus model-specific fixed constants.
///
/// `theta_b` is the free drift parameter (present for OU and GBM only),
/// `theta_lambda` scales the event intensity, `theta_sigma` is the mark
/// variance. Fixed constants (e.g. `sigma` for OU/GBM, `nu` for Langevin,
/// `c` for TestConst) live in `fixed` and are not estimated.
#[derive(Debug, Clone, PartialEq)]
pub struct ThetaVector {
    pub theta_b: Option<f64>,
    pub theta_lambda: f64,
    pub theta_sigma: f64,
    pub fixed: BTreeMap<String, f64>,
}

impl ThetaVector {
    pub fn new(theta_b: Option<f64>, theta_lambda: f64, theta_sigma: f64) -> Self {
        Self {
            theta_b,
            theta_lambda,
            theta_sigma,
            fixed: BTreeMap::new(),
        }
    }

    pub fn with_fixed(mut self, name: &str, value: f64) -> Self {
        self.fixed.insert(name.to_string(), value);
        self
    }
}

/// Declarative model description: identity, initial state, parameters, and an
/// optional lower clamp on the intensity (`lambda_floor = 0` leaves the raw
/// intensity untouched; a positive floor keeps weights bounded away from zero
/// in studies that require it).
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub model: ModelId,
    pub x_star: f64,
    pub theta: ThetaVector,
    pub lambda_floor: f64,
}

impl ModelSpec {
    pub fn new(model: ModelId, x_star: f64, theta: ThetaVector) -> Self {
        Self {
            model,
            x_star,
            theta,
            lambda_floor: 0.0,
        }
    }
}

/// Which estimated parameter a gradient coordinate refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ThetaCoord {
    DriftB,
    Lambda,
    Sigma,
}

#[derive(Debug, Clone)]
enum Kind {
    Ou { sigma: f64 },
    Langevin { nu: f64 },
    Nldt,
    Gbm { sigma: f64 },
    TestConst { c: f64, mark_mean: Option<f64>, mark_var: Option<f64> },
}

/// Validated, resolved model. All fixed parameters are cached so evaluation
/// never touches the fixed-parameter map.
#[derive(Debug, Clone)]
pub struct Model {
    kind: Kind,
    pub spec: ModelSpec,
    coords: Vec<ThetaCoord>,
}

fn require_finite(name: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("{name} must be finite, got {v}")))
    }
}

impl Model {
    pub fn new(spec: &ModelSpec) -> Result<Self> {
        let t = &spec.theta;
        require_finite("x_star", spec.x_star)?;
        require_finite("theta_lambda", t.theta_lambda)?;
        require_finite("theta_sigma", t.theta_sigma)?;
        require_finite("lambda_floor", spec.lambda_floor)?;
        if t.theta_lambda < 0.0 {
            return Err(Error::Domain("theta_lambda must be >= 0".into()));
        }
        if t.theta_sigma <= 0.0 {
            return Err(Error::Domain("theta_sigma must be > 0".into()));
        }
        if spec.lambda_floor < 0.0 {
            return Err(Error::Domain("lambda_floor must be >= 0".into()));
        }
        let fixed = |name: &str| -> Result<f64> {
            t.fixed.get(name).copied().ok_or_else(|| {
                Error::Config(format!("model {} requires fixed parameter {name}", spec.model))
            })
        };
        let need_theta_b = |what: &str| -> Result<f64> {
            let v = t
                .theta_b
                .ok_or_else(|| Error::Config(format!("model {what} requires theta_b")))?;
            require_finite("theta_b", v)?;
            Ok(v)
        };
        let kind = match spec.model {
            ModelId::Ou => {
                need_theta_b("OU")?;
                let sigma = t.fixed.get("sigma").copied().unwrap_or(1.0);
                if !(sigma.is_finite() && sigma >= 0.0) {
                    return Err(Error::Domain("OU sigma must be finite and >= 0".into()));
                }
                Kind::Ou { sigma }
            }
            ModelId::Langevin => {
                let nu = t.fixed.get("nu").copied().unwrap_or(10.0);
                if !(nu.is_finite() && nu > 0.0) {
                    return Err(Error::Domain("Langevin nu must be > 0".into()));
                }
                Kind::Langevin { nu }
            }
            ModelId::Nldt => Kind::Nldt,
            ModelId::Gbm => {
                need_theta_b("GBM")?;
                if spec.x_star < 0.0 {
                    return Err(Error::Domain("GBM requires x_star >= 0".into()));
                }
                let sigma = t.fixed.get("sigma").copied().unwrap_or(1.0);
                if !(sigma.is_finite() && sigma >= 0.0) {
                    return Err(Error::Domain("GBM sigma must be finite and >= 0".into()));
                }
                Kind::Gbm { sigma }
            }
            ModelId::TestConst => {
                let c = fixed("c")?;
                if !(c.is_finite() && c >= 0.0) {
                    return Err(Error::Domain("TestConst c must be finite and >= 0".into()));
                }
                let mark_mean = t.fixed.get("fixed_mark_mean").copied();
                let mark_var = t.fixed.get("fixed_mark_var").copied();
                if let Some(v) = mark_var {
                    if !(v.is_finite() && v > 0.0) {
                        return Err(Error::Domain("fixed_mark_var must be > 0".into()));
                    }
                }
                Kind::TestConst { c, mark_mean, mark_var }
            }
        };
        let coords = match (&kind, spec.model) {
            (_, ModelId::Ou) | (_, ModelId::Gbm) => {
                vec![ThetaCoord::DriftB, ThetaCoord::Lambda, ThetaCoord::Sigma]
            }
            (Kind::TestConst { mark_var: Some(_), .. }, _) => vec![ThetaCoord::Lambda],
            _ => vec![ThetaCoord::Lambda, ThetaCoord::Sigma],
        };
        Ok(Self {
            kind,
            spec: spec.clone(),
            coords,
        })
    }

    /// Coordinate order of every gradient returned by this model.
    pub fn theta_coords(&self) -> &[ThetaCoord] {
        &self.coords
    }

    pub fn theta_dim(&self) -> usize {
        self.coords.len()
    }

    /// Current value of each estimated coordinate, in `theta_coords` order.
    pub fn theta_values(&self) -> Vec<f64> {
        self.coords
            .iter()
            .map(|c| match c {
                ThetaCoord::DriftB => self.spec.theta.theta_b.unwrap_or(f64::NAN),
                ThetaCoord::Lambda => self.spec.theta.theta_lambda,
                ThetaCoord::Sigma => self.spec.theta.theta_sigma,
            })
            .collect()
    }

    /// Rebuilds the model with the estimated coordinates replaced by `values`
    /// (same order as `theta_coords`). Fixed parameters are preserved.
    pub fn with_theta_values(&self, values: &[f64]) -> Result<Model> {
        if values.len() != self.coords.len() {
            return Err(Error::Domain(format!(
                "expected {} theta values, got {}",
                self.coords.len(),
                values.len()
            )));
        }
        let mut spec = self.spec.clone();
        for (c, &v) in self.coords.iter().zip(values) {
            match c {
                ThetaCoord::DriftB => spec.theta.theta_b = Some(v),
                ThetaCoord::Lambda => spec.theta.theta_lambda = v,
                ThetaCoord::Sigma => spec.theta.theta_sigma = v,
            }
        }
        Model::new(&spec)
    }

    /// Drift coefficient `b(x)`.
    pub fn drift(&self, x: f64) -> Result<f64> {
        require_finite("x", x)?;
        Ok(match &self.kind {
            Kind::Ou { .. } => -self.spec.theta.theta_b.unwrap() * x,
            Kind::Langevin { nu } => (nu + 1.0) * x / (x * x + nu),
            Kind::Nldt => 0.0,
            Kind::Gbm { .. } => self.spec.theta.theta_b.unwrap() * x,
            Kind::TestConst { .. } => 0.0,
        })
    }

    /// Diffusion coefficient `sigma(x)`.
    pub fn diffusion(&self, x: f64) -> Result<f64> {
        require_finite("x", x)?;
        Ok(match &self.kind {
            Kind::Ou { sigma } => *sigma,
            Kind::Langevin { .. } => 1.0,
            Kind::Nldt => 1.0 / (1.0 + x * x).sqrt(),
            Kind::Gbm { sigma } => sigma * x,
            Kind::TestConst { .. } => 1.0,
        })
    }

    /// Event intensity `lambda(x)`, clamped from below by `lambda_floor`.
    pub fn intensity(&self, x: f64) -> Result<f64> {
        require_finite("x", x)?;
        let raw = match &self.kind {
            Kind::TestConst { c, .. } => *c,
            _ => self.spec.theta.theta_lambda * x.abs(),
        };
        Ok(raw.max(self.spec.lambda_floor))
    }

    fn mark_mean(&self, x: f64) -> f64 {
        match &self.kind {
            Kind::TestConst { mark_mean: Some(m), .. } => *m,
            _ => x,
        }
    }

    fn mark_var(&self) -> f64 {
        match &self.kind {
            Kind::TestConst { mark_var: Some(v), .. } => *v,
            _ => self.spec.theta.theta_sigma,
        }
    }

    /// Log density of a mark `y` emitted at latent state `x`.
    pub fn mark_logdensity(&self, x: f64, y: f64) -> Result<f64> {
        require_finite("x", x)?;
        require_finite("y", y)?;
        Ok(normal_logpdf(y, self.mark_mean(x), self.mark_var()))
    }

    /// Draws one mark at latent state `x`.
    pub fn sample_mark<R: rand::Rng>(&self, x: f64, rng: &mut R) -> f64 {
        let z: f64 = rng.sample(rand_distr::StandardNormal);
        self.mark_mean(x) + self.mark_var().sqrt() * z
    }

    /// Gradient of the drift in the estimated coordinates.
    pub fn grad_drift(&self, x: f64) -> Result<Vec<f64>> {
        require_finite("x", x)?;
        Ok(self
            .coords
            .iter()
            .map(|c| match (c, &self.kind) {
                (ThetaCoord::DriftB, Kind::Ou { .. }) => -x,
                (ThetaCoord::DriftB, Kind::Gbm { .. }) => x,
                _ => 0.0,
            })
            .collect())
    }

    /// Gradient of the intensity in the estimated coordinates. Zero wherever
    /// the floor clamp is active.
    pub fn grad_intensity(&self, x: f64) -> Result<Vec<f64>> {
        require_finite("x", x)?;
        let clamped = match &self.kind {
            Kind::TestConst { .. } => true,
            _ => self.spec.theta.theta_lambda * x.abs() < self.spec.lambda_floor,
        };
        Ok(self
            .coords
            .iter()
            .map(|c| match c {
                ThetaCoord::Lambda if !clamped => x.abs(),
                _ => 0.0,
            })
            .collect())
    }

    /// Gradient of `log(g(x, y) * lambda(x))`, the per-event factor of the
    /// weights. Errors if the Lambda coordinate is present and the raw
    /// intensity vanishes at `x` (the log is singular there).
    pub fn grad_log_mark_intensity(&self, x: f64, y: f64) -> Result<Vec<f64>> {
        require_finite("x", x)?;
        require_finite("y", y)?;
        let mut out = Vec::with_capacity(self.coords.len());
        for c in &self.coords {
            let v = match c {
                ThetaCoord::DriftB => 0.0,
                ThetaCoord::Lambda => match &self.kind {
                    Kind::TestConst { .. } => 0.0,
                    _ => {
                        let raw = self.spec.theta.theta_lambda * x.abs();
                        if raw < self.spec.lambda_floor {
                            0.0
                        } else if raw == 0.0 {
                            return Err(Error::Singular(format!(
                                "event log-intensity gradient at x = {x} with zero intensity"
                            )));
                        } else {
                            1.0 / self.spec.theta.theta_lambda
                        }
                    }
                },
                ThetaCoord::Sigma => match &self.kind {
                    Kind::TestConst { mark_var: Some(_), .. } => 0.0,
                    _ => {
                        let s = self.spec.theta.theta_sigma;
                        let d = y - self.mark_mean(x);
                        d * d / (2.0 * s * s) - 0.5 / s
                    }
                },
            };
            out.push(v);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    pub(crate) fn ou_spec(theta_b: f64, theta_lambda: f64, theta_sigma: f64) -> ModelSpec {
        ModelSpec::new(
            ModelId::Ou,
            1.0,
            ThetaVector::new(Some(theta_b), theta_lambda, theta_sigma).with_fixed("sigma", 1.0),
        )
    }

    fn test_const(c: f64) -> ModelSpec {
        ModelSpec::new(
            ModelId::TestConst,
            0.0,
            ThetaVector::new(None, 1.0, 1.0).with_fixed("c", c),
        )
    }

    #[test]
    fn drift_examples() {
        let nldt = Model::new(&ModelSpec::new(ModelId::Nldt, 0.0, ThetaVector::new(None, 1.0, 1.0))).unwrap();
        assert_eq!(nldt.drift(3.7).unwrap(), 0.0);

        let lan = Model::new(&ModelSpec::new(
            ModelId::Langevin,
            0.0,
            ThetaVector::new(None, 1.0, 1.0).with_fixed("nu", 10.0),
        ))
        .unwrap();
        assert_eq!(lan.drift(0.0).unwrap(), 0.0);
        // (nu + 1) x / (x^2 + nu) at x = 1, nu = 10.
        assert!((lan.drift(1.0).unwrap() - 1.0).abs() < 1e-15);

        let ou = Model::new(&ou_spec(0.98, 3.5, 1.0)).unwrap();
        assert!((ou.drift(2.0).unwrap() + 1.96).abs() < 1e-15);
    }

    #[test]
    fn diffusion_examples() {
        let nldt = Model::new(&ModelSpec::new(ModelId::Nldt, 0.0, ThetaVector::new(None, 1.0, 1.0))).unwrap();
        assert_eq!(nldt.diffusion(0.0).unwrap(), 1.0);
        assert!((nldt.diffusion(3.0f64.sqrt()).unwrap() - 0.5).abs() < 1e-15);

        let gbm = Model::new(&ModelSpec::new(
            ModelId::Gbm,
            1.0,
            ThetaVector::new(Some(0.015), 0.5, 1.0).with_fixed("sigma", 1.0),
        ))
        .unwrap();
        assert_eq!(gbm.diffusion(0.0).unwrap(), 0.0);
        assert!((gbm.diffusion(2.0).unwrap() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn intensity_examples() {
        let ou = Model::new(&ou_spec(0.98, 3.5, 1.0)).unwrap();
        assert!((ou.intensity(-2.0).unwrap() - 7.0).abs() < 1e-15);
        assert_eq!(ou.intensity(0.0).unwrap(), 0.0);

        let tc = Model::new(&test_const(2.5)).unwrap();
        assert_eq!(tc.intensity(123.4).unwrap(), 2.5);
    }

    #[test]
    fn intensity_floor_clamps_from_below() {
        let mut spec = ou_spec(0.98, 3.5, 1.0);
        spec.lambda_floor = 0.2;
        let m = Model::new(&spec).unwrap();
        assert_eq!(m.intensity(0.0).unwrap(), 0.2);
        assert!((m.intensity(1.0).unwrap() - 3.5).abs() < 1e-15);
        // Clamp active: the Lambda gradient vanishes.
        assert_eq!(m.grad_intensity(0.01).unwrap()[1], 0.0);
        assert_eq!(m.grad_log_mark_intensity(0.01, 0.5).unwrap()[1], 0.0);
    }

    #[test]
    fn mark_logdensity_examples() {
        let ou = Model::new(&ou_spec(0.98, 3.5, 1.0)).unwrap();
        let half_ln_2pi = 0.5 * (2.0 * std::f64::consts::PI).ln();
        assert!((ou.mark_logdensity(0.7, 0.7).unwrap() + half_ln_2pi).abs() < 1e-15);
        assert!((ou.mark_logdensity(0.0, 1.0).unwrap() + half_ln_2pi + 0.5).abs() < 1e-15);

        let ou2 = Model::new(&ou_spec(0.98, 3.5, 2.0)).unwrap();
        let expect = -0.5 * (4.0 * std::f64::consts::PI).ln();
        assert!((ou2.mark_logdensity(1.0, 1.0).unwrap() - expect).abs() < 1e-15);
    }

    #[test]
    fn gradient_examples() {
        let ou = Model::new(&ou_spec(0.98, 2.0, 1.0)).unwrap();
        assert_eq!(ou.theta_coords(), &[ThetaCoord::DriftB, ThetaCoord::Lambda, ThetaCoord::Sigma]);
        assert_eq!(ou.grad_drift(3.0).unwrap(), vec![-3.0, 0.0, 0.0]);
        assert_eq!(ou.grad_intensity(5.0).unwrap(), vec![0.0, 5.0, 0.0]);
        let g = ou.grad_log_mark_intensity(5.0, 5.0).unwrap();
        assert!((g[1] - 0.5).abs() < 1e-15);
        // theta_sigma = 1, x = 1, y = 2: (y-x)^2 / 2 - 1/2 = 0.
        let g0 = ou.grad_log_mark_intensity(1.0, 2.0).unwrap();
        assert!(g0[2].abs() < 1e-15);
    }

    #[test]
    fn zero_intensity_event_gradient_is_singular() {
        let ou = Model::new(&ou_spec(0.98, 2.0, 1.0)).unwrap();
        assert!(matches!(
            ou.grad_log_mark_intensity(0.0, 0.3),
            Err(Error::Singular(_))
        ));
    }

    #[test]
    fn theta_independent_test_model_has_dimension_one_and_zero_gradients() {
        let spec = ModelSpec::new(
            ModelId::TestConst,
            0.0,
            ThetaVector::new(None, 1.0, 1.0)
                .with_fixed("c", 1.0)
                .with_fixed("fixed_mark_mean", 0.0)
                .with_fixed("fixed_mark_var", 1.0),
        );
        let m = Model::new(&spec).unwrap();
        assert_eq!(m.theta_dim(), 1);
        assert_eq!(m.grad_drift(0.4).unwrap(), vec![0.0]);
        assert_eq!(m.grad_intensity(0.4).unwrap(), vec![0.0]);
        assert_eq!(m.grad_log_mark_intensity(0.4, 1.1).unwrap(), vec![0.0]);
    }

    #[test]
    fn validation_rejects_bad_parameters() {
        assert!(Model::new(&ou_spec(0.98, -1.0, 1.0)).is_err());
        assert!(Model::new(&ou_spec(0.98, 1.0, 0.0)).is_err());
        let mut no_b = ou_spec(0.98, 1.0, 1.0);
        no_b.theta.theta_b = None;
        assert!(Model::new(&no_b).is_err());
        let gbm_neg = ModelSpec::new(
            ModelId::Gbm,
            -1.0,
            ThetaVector::new(Some(0.1), 1.0, 1.0).with_fixed("sigma", 1.0),
        );
        assert!(Model::new(&gbm_neg).is_err());
        let tc_missing_c = ModelSpec::new(ModelId::TestConst, 0.0, ThetaVector::new(None, 1.0, 1.0));
        assert!(Model::new(&tc_missing_c).is_err());
        assert!(Model::new(&ou_spec(f64::NAN, 1.0, 1.0)).is_err());
    }

    /// Central finite differences of b, lambda, and log(g * lambda) in every
    /// estimated coordinate, across all models, must match the analytic
    /// gradients.
    #[test]
    fn gradients_match_finite_differences() {
        let specs = vec![
            ou_spec(0.98, 3.5, 1.0),
            ModelSpec::new(
                ModelId::Langevin,
                0.0,
                ThetaVector::new(None, 2.0, 0.7).with_fixed("nu", 10.0),
            ),
            ModelSpec::new(ModelId::Nldt, 0.0, ThetaVector::new(None, 1.3, 1.9)),
            ModelSpec::new(
                ModelId::Gbm,
                1.0,
                ThetaVector::new(Some(0.4), 0.5, 1.1).with_fixed("sigma", 0.2),
            ),
            test_const(2.5),
        ];
        let h = 1e-5;
        let xs = [-2.3f64, -0.4, 0.8, 3.1];
        let y = 0.6;
        for spec in specs {
            let m = Model::new(&spec).unwrap();
            let theta0 = m.theta_values();
            for j in 0..m.theta_dim() {
                let bump = |delta: f64| {
                    let mut t = theta0.clone();
                    t[j] += delta;
                    m.with_theta_values(&t).unwrap()
                };
                let (plus, minus) = (bump(h), bump(-h));
                for &x in &xs {
                    let x = if matches!(spec.model, ModelId::Gbm) { x.abs() } else { x };
                    let fd_b = (plus.drift(x).unwrap() - minus.drift(x).unwrap()) / (2.0 * h);
                    let an_b = m.grad_drift(x).unwrap()[j];
                    assert!((fd_b - an_b).abs() <= 1e-6 * (1.0 + an_b.abs()), "drift fd");

                    let fd_l = (plus.intensity(x).unwrap() - minus.intensity(x).unwrap()) / (2.0 * h);
                    let an_l = m.grad_intensity(x).unwrap()[j];
                    assert!((fd_l - an_l).abs() <= 1e-6 * (1.0 + an_l.abs()), "intensity fd");

                    let f = |mm: &Model| {
                        mm.mark_logdensity(x, y).unwrap() + mm.intensity(x).unwrap().ln()
                    };
                    let fd_g = (f(&plus) - f(&minus)) / (2.0 * h);
                    let an_g = m.grad_log_mark_intensity(x, y).unwrap()[j];
                    assert!(
                        (fd_g - an_g).abs() <= 1e-5 * (1.0 + an_g.abs()),
                        "event factor fd: model {}, coord {j}, x {x}: {fd_g} vs {an_g}",
                        spec.model
                    );
                }
            }
        }
    }

    proptest! {
        #[test]
        fn nldt_diffusion_in_unit_interval(x in -50.0f64..50.0) {
            let m = Model::new(&ModelSpec::new(ModelId::Nldt, 0.0, ThetaVector::new(None, 1.0, 1.0))).unwrap();
            let s = m.diffusion(x).unwrap();
            prop_assert!(s > 0.0 && s <= 1.0);
        }

        #[test]
        fn intensity_nonnegative(x in -50.0f64..50.0, tl in 0.0f64..10.0) {
            let m = Model::new(&ou_spec(0.98, tl, 1.0)).unwrap();
            prop_assert!(m.intensity(x).unwrap() >= 0.0);
        }

        #[test]
        fn langevin_drift_is_odd(x in -20.0f64..20.0) {
            let m = Model::new(&ModelSpec::new(
                ModelId::Langevin,
                0.0,
                ThetaVector::new(None, 1.0, 1.0).with_fixed("nu", 10.0),
            )).unwrap();
            prop_assert!((m.drift(x).unwrap() + m.drift(-x).unwrap()).abs() < 1e-12);
        }
    }
}
