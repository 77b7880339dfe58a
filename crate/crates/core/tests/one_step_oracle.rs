//! End-to-end check of the filter against an analytically solvable case.
//!
//! With one Euler step per unit interval (level 0), a single event, and
//! parameters keeping the state positive, the unit weight is a Gaussian
//! likelihood times an affine factor times an exponential tilt, so the
//! one-step posterior mean has a closed form by completing the square.
//! The same setup also pins the normalising-constant estimate against
//! numerical integration of the full weight.

use mppf::filters::{run_pf, FilterParams};
use mppf::models::{Model, ModelId, ModelSpec, ThetaVector};
use mppf::obsgen::{Event, MarkedDataset};
use mppf::potentials::Quadrature;

const X_STAR: f64 = 5.0;
const THETA_B: f64 = 0.2;
const SIGMA: f64 = 0.5;
const THETA_LAMBDA: f64 = 3.5;
const THETA_SIGMA: f64 = 1.0; // mark variance
const EVENT_TIME: f64 = 0.6;
const EVENT_MARK: f64 = 4.2;

fn oracle_spec() -> ModelSpec {
    ModelSpec::new(
        ModelId::Ou,
        X_STAR,
        ThetaVector::new(Some(THETA_B), THETA_LAMBDA, THETA_SIGMA).with_fixed("sigma", SIGMA),
    )
}

fn oracle_dataset() -> MarkedDataset {
    MarkedDataset {
        spec: oracle_spec(),
        horizon: 1,
        data_level: 0,
        seed: 0,
        events: vec![Event { time: EVENT_TIME, mark: EVENT_MARK }],
    }
}

/// Closed-form posterior mean of the state at time 1 under the one-step
/// weight, assuming the state stays positive (so the absolute values in the
/// intensity never activate). The weight as a function of the endpoint x is
///   exp(-(y - x_s)^2 / (2 v)) * x_s * exp(-lam * x) [right-endpoint rule]
/// with x_s = (1 - t) x_star + t x affine in x, v the mark variance, and the
/// tilt absent under the left-endpoint rule. Gaussian conjugacy gives a
/// N(mu_tilde, s2) posterior on x times the affine factor a + b x.
fn closed_form_mean(quadrature: Quadrature) -> f64 {
    let m = X_STAR * (1.0 - THETA_B);
    let t = EVENT_TIME;
    let y_hat = (EVENT_MARK - (1.0 - t) * X_STAR) / t;
    let precision = 1.0 / (SIGMA * SIGMA) + t * t / THETA_SIGMA;
    let s2 = 1.0 / precision;
    let tilt = match quadrature {
        Quadrature::Right => THETA_LAMBDA,
        Quadrature::Left => 0.0,
    };
    let mu = (m / (SIGMA * SIGMA) + y_hat * t * t / THETA_SIGMA - tilt) * s2;
    let a = (1.0 - t) * X_STAR;
    let b = t;
    (a * mu + b * (mu * mu + s2)) / (a + b * mu)
}

/// Full one-step weight including every factor (mark normalisation, intensity
/// scale, absolute values), as `log_unit_potential` defines it at level 0.
fn full_weight(x: f64, quadrature: Quadrature) -> f64 {
    let t = EVENT_TIME;
    let x_s = (1.0 - t) * X_STAR + t * x;
    let mark = (-(EVENT_MARK - x_s).powi(2) / (2.0 * THETA_SIGMA)).exp()
        / (2.0 * std::f64::consts::PI * THETA_SIGMA).sqrt();
    let survival_state = match quadrature {
        Quadrature::Right => x,
        Quadrature::Left => X_STAR,
    };
    mark * THETA_LAMBDA * x_s.abs() * (-THETA_LAMBDA * survival_state.abs()).exp()
}

/// Composite Simpson integration of `f` against the N(m, sigma^2) prior of
/// the one-step endpoint, over +-12 prior standard deviations.
fn prior_integral<F: Fn(f64) -> f64>(f: F) -> f64 {
    let m = X_STAR * (1.0 - THETA_B);
    let lo = m - 12.0 * SIGMA;
    let hi = m + 12.0 * SIGMA;
    let n = 40_000usize; // even
    let h = (hi - lo) / n as f64;
    let norm = 1.0 / (SIGMA * (2.0 * std::f64::consts::PI).sqrt());
    let density = |x: f64| norm * (-(x - m).powi(2) / (2.0 * SIGMA * SIGMA)).exp();
    let mut acc = f(lo) * density(lo) + f(hi) * density(hi);
    for i in 1..n {
        let x = lo + i as f64 * h;
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(x) * density(x);
    }
    acc * h / 3.0
}

#[test]
fn closed_form_agrees_with_quadrature() {
    for quad in [Quadrature::Right, Quadrature::Left] {
        let num = prior_integral(|x| x * full_weight(x, quad));
        let den = prior_integral(|x| full_weight(x, quad));
        let numeric = num / den;
        let closed = closed_form_mean(quad);
        assert!(
            ((numeric - closed) / closed).abs() < 1e-9,
            "{quad:?}: quadrature {numeric} vs closed form {closed}"
        );
    }
}

fn filter_mean_and_se(quadrature: Quadrature) -> (f64, f64, f64) {
    let spec = oracle_spec();
    let model = Model::new(&spec).unwrap();
    let dataset = oracle_dataset();
    let params = FilterParams {
        model: &model,
        dataset: &dataset,
        level: 0,
        particles: 200_000,
        horizon: 1,
        quadrature,
        seed: 424_242,
    };
    let out = run_pf(&params, &[|x: f64| x]).unwrap();
    let max = out
        .terminal
        .log_weights
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = out.terminal.log_weights.iter().map(|lw| (lw - max).exp()).collect();
    let total: f64 = weights.iter().sum();
    let mean = out.estimates[0][0];
    // Delta-method standard error of the self-normalised mean.
    let se2: f64 = weights
        .iter()
        .zip(&out.terminal.endpoints)
        .map(|(w, x)| (w / total).powi(2) * (x - mean).powi(2))
        .sum();
    (mean, se2.sqrt(), out.log_norm_const)
}

#[test]
fn filter_matches_closed_form_right_rule() {
    let (mean, se, _) = filter_mean_and_se(Quadrature::Right);
    let closed = closed_form_mean(Quadrature::Right);
    assert!(
        (mean - closed).abs() < 3.0 * se,
        "filter {mean} vs closed form {closed}, se {se}"
    );
}

#[test]
fn filter_matches_closed_form_left_rule() {
    let (mean, se, _) = filter_mean_and_se(Quadrature::Left);
    let closed = closed_form_mean(Quadrature::Left);
    assert!(
        (mean - closed).abs() < 3.0 * se,
        "filter {mean} vs closed form {closed}, se {se}"
    );
}

#[test]
fn quadrature_rules_give_distinct_posteriors() {
    // The tilt shifts the posterior mean by about lam * s2; make sure the
    // switch actually reaches the weight computation.
    let right = closed_form_mean(Quadrature::Right);
    let left = closed_form_mean(Quadrature::Left);
    assert!((left - right) > 0.5, "left {left} vs right {right}");
}

#[test]
fn norm_const_matches_weight_integral() {
    // exp(log_norm_const) at T=1 is the plain MC average of the unit weight,
    // whose expectation is the prior integral of the full weight.
    let (_, _, log_nc) = filter_mean_and_se(Quadrature::Right);
    let expected = prior_integral(|x| full_weight(x, Quadrature::Right));
    let spec = oracle_spec();
    let model = Model::new(&spec).unwrap();
    let dataset = oracle_dataset();
    // Monte Carlo error of the average weight, from the same particle cloud.
    let params = FilterParams {
        model: &model,
        dataset: &dataset,
        level: 0,
        particles: 200_000,
        horizon: 1,
        quadrature: Quadrature::Right,
        seed: 424_242,
    };
    let out = run_pf(&params, &[|x: f64| x]).unwrap();
    let n = out.terminal.log_weights.len() as f64;
    let ws: Vec<f64> = out.terminal.log_weights.iter().map(|lw| lw.exp()).collect();
    let mean_w: f64 = ws.iter().sum::<f64>() / n;
    let var_w: f64 = ws.iter().map(|w| (w - mean_w).powi(2)).sum::<f64>() / (n - 1.0);
    let se = (var_w / n).sqrt();
    assert!(
        (log_nc.exp() - expected).abs() < 3.0 * se,
        "mean weight {} vs integral {expected}, se {se}",
        log_nc.exp()
    );
}
