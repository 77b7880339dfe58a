//! Command line front end for the estimators in `mppf`.
//!
//! Subcommands: `generate` simulates a dataset of marked event observations;
//! `pf`, `cpf`, `mlpf`, `upf` run the filtering estimators against a dataset;
//! `score` and `sga` produce parameter gradients and stochastic-gradient
//! parameter estimates; `bench` runs MSE-versus-cost and decay experiments.
//!
//! Every run is driven by (flags, optional `--config` file, defaults), in
//! that priority order, and writes a CSV whose `#` header echoes the full
//! resolved configuration. Identical invocations produce identical bytes.
//! Exit codes: 0 success, 2 configuration or validation failure, 3 numeric
//! failure during a run (overflow, degenerate weights).

mod config;
mod output;

use clap::{Args, Parser, Subcommand};
use config::{parse_list, Settings};
use mppf::bench::{
    decay_experiment, mse_cost_experiment, reference_value, DecayKind, DecayParams, EstimatorKind,
    MseCostParams, RateFit, ReferenceConfig, ReferenceValue,
};
use mppf::filters::FilterParams;
use mppf::mlmc::{build_randomization, MlpfParams, UpfParams};
use mppf::models::{Model, ModelId, ModelSpec, ThetaCoord, ThetaVector};
use mppf::obsgen::{generate_dataset, read_dataset, write_dataset, MarkedDataset};
use mppf::potentials::Quadrature;
use mppf::score::{run_score_filter, sga_run, SgaConfig};
use mppf::{Error, Result};
use output::{cell, write_csv, Provenance};
use std::path::PathBuf;

#[derive(Parser)]
#[command(name = "mppf", version, about = "Monte Carlo filtering for diffusions observed through marked events")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a dataset of event times and marks from a model
    Generate(GenerateArgs),
    /// Particle filter: per-time posterior estimates
    Pf(FilterCmdArgs),
    /// Coupled pair of filters: per-time fine-minus-coarse estimates
    Cpf(FilterCmdArgs),
    /// Multilevel particle filter at a target accuracy
    Mlpf(MlpfArgs),
    /// Randomized multilevel estimator free of discretization bias
    Upf(UpfArgs),
    /// Online score filter: parameter gradient of the log-likelihood
    Score(ScoreArgs),
    /// Stochastic gradient ascent over the model parameters
    Sga(SgaArgs),
    /// Benchmark experiments: MSE versus cost, variance/bias decay
    Bench(BenchArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// key=value settings file; command-line flags override its entries
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master RNG seed
    #[arg(long)]
    seed: Option<u64>,
    /// Output CSV path
    #[arg(long)]
    out: Option<PathBuf>,
    /// Intensity integral rule: right (default) or left sub-step endpoints
    #[arg(long)]
    quadrature: Option<String>,
}

/// Model overrides. Filter commands start from the spec stored in the
/// dataset; `generate` starts from the built-in defaults of `--model`.
#[derive(Args)]
struct ThetaArgs {
    /// Drift parameter (OU and GBM)
    #[arg(long)]
    theta_b: Option<f64>,
    /// Event intensity scale
    #[arg(long)]
    theta_lambda: Option<f64>,
    /// Mark variance
    #[arg(long)]
    theta_sigma: Option<f64>,
    /// Deterministic initial state
    #[arg(long)]
    x_star: Option<f64>,
    /// Lower clamp on the intensity (default 0: no clamp)
    #[arg(long)]
    lambda_floor: Option<f64>,
    /// Fixed model constant override, repeatable (e.g. --fixed sigma=0.5)
    #[arg(long, value_name = "KEY=VALUE")]
    fixed: Vec<String>,
}

#[derive(Args)]
struct GenerateArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[command(flatten)]
    theta: ThetaArgs,
    /// Model family: OU | Langevin | NLDT | GBM | TestConst
    #[arg(long)]
    model: Option<String>,
    /// Horizon in unit time intervals
    #[arg(long = "T")]
    horizon: Option<u32>,
    /// Discretization level of the simulated truth path
    #[arg(long)]
    data_level: Option<u32>,
}

#[derive(Args)]
struct FilterCmdArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[command(flatten)]
    theta: ThetaArgs,
    /// Dataset file produced by `generate`
    #[arg(long)]
    data: Option<PathBuf>,
    /// Discretization level (step size 2^-level)
    #[arg(long)]
    level: Option<u32>,
    /// Particle count
    #[arg(long)]
    particles: Option<usize>,
    /// Unit times to process (default: the dataset horizon)
    #[arg(long = "T")]
    horizon: Option<u32>,
    /// Test function of the terminal state: id | abs | square
    #[arg(long)]
    phi: Option<String>,
}

#[derive(Args)]
struct MlpfArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[command(flatten)]
    theta: ThetaArgs,
    #[arg(long)]
    data: Option<PathBuf>,
    /// Target accuracy epsilon in (0, 1]
    #[arg(long)]
    eps: Option<String>,
    /// Base discretization level
    #[arg(long)]
    l0: Option<u32>,
    /// Particle allocation constant
    #[arg(long)]
    c_const: Option<f64>,
    #[arg(long = "T")]
    horizon: Option<u32>,
    #[arg(long)]
    phi: Option<String>,
}

#[derive(Args)]
struct UpfArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[command(flatten)]
    theta: ThetaArgs,
    #[arg(long)]
    data: Option<PathBuf>,
    /// Independent randomized replicates to average
    #[arg(long = "M")]
    replicates: Option<usize>,
    /// Lowest level of the randomized ladder
    #[arg(long)]
    l0: Option<u32>,
    /// Level truncation of the randomized ladder
    #[arg(long)]
    l_trunc: Option<u32>,
    /// Particle-doubling truncation
    #[arg(long)]
    p_trunc: Option<u32>,
    /// Base particle count before doubling
    #[arg(long)]
    n0: Option<usize>,
    #[arg(long = "T")]
    horizon: Option<u32>,
    #[arg(long)]
    phi: Option<String>,
}

#[derive(Args)]
struct ScoreArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[command(flatten)]
    theta: ThetaArgs,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    level: Option<u32>,
    #[arg(long)]
    particles: Option<usize>,
    #[arg(long = "T")]
    horizon: Option<u32>,
}

#[derive(Args)]
struct SgaArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[command(flatten)]
    theta: ThetaArgs,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    level: Option<u32>,
    #[arg(long)]
    particles: Option<usize>,
    /// Base step size per coordinate: one value or a comma list
    #[arg(long)]
    alpha0: Option<String>,
    /// Step decay exponent in (0.5, 1]
    #[arg(long)]
    beta: Option<f64>,
    /// Unit times consumed per parameter update
    #[arg(long)]
    window: Option<u32>,
    /// Parameter updates to perform (default: use the whole dataset)
    #[arg(long)]
    iters: Option<u32>,
    /// Lower clamp per coordinate: one value or a comma list
    #[arg(long)]
    floors: Option<String>,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[command(flatten)]
    theta: ThetaArgs,
    #[arg(long)]
    data: Option<PathBuf>,
    /// mse-pf | mse-mlpf | mse-upf | coupling-variance | weak-bias
    #[arg(long)]
    kind: Option<String>,
    #[arg(long = "T")]
    horizon: Option<u32>,
    #[arg(long)]
    phi: Option<String>,
    /// Accuracy grid for MSE experiments, comma separated
    #[arg(long)]
    eps: Option<String>,
    /// Replicates per grid point
    #[arg(long)]
    reps: Option<usize>,
    /// Level grid for decay experiments, comma separated
    #[arg(long)]
    levels: Option<String>,
    /// Particles per replicate (decay experiments)
    #[arg(long)]
    particles: Option<usize>,
    #[arg(long)]
    l0: Option<u32>,
    /// Particle constant of the single-level arm: N = ceil(c / eps^2)
    #[arg(long)]
    pf_const: Option<f64>,
    /// Particle constant of the multilevel allocation
    #[arg(long)]
    mlpf_const: Option<f64>,
    /// Replicate constant of the randomized arm: M = ceil(c / eps^2)
    #[arg(long)]
    upf_const: Option<f64>,
    #[arg(long)]
    p_trunc: Option<u32>,
    #[arg(long)]
    n0: Option<usize>,
    /// Reference run level (default: dataset level minus one)
    #[arg(long)]
    ref_level: Option<u32>,
    #[arg(long)]
    ref_particles: Option<usize>,
    #[arg(long)]
    ref_reps: Option<usize>,
    /// Required reference accuracy; its stderr must be below a third of this
    #[arg(long)]
    ref_tol: Option<f64>,
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli.command) {
        eprintln!("error: {e}");
        std::process::exit(if e.is_numeric() { 3 } else { 2 });
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Generate(a) => cmd_generate(a),
        Command::Pf(a) => cmd_pf(a),
        Command::Cpf(a) => cmd_cpf(a),
        Command::Mlpf(a) => cmd_mlpf(a),
        Command::Upf(a) => cmd_upf(a),
        Command::Score(a) => cmd_score(a),
        Command::Sga(a) => cmd_sga(a),
        Command::Bench(a) => cmd_bench(a),
    }
}

/// Built-in starting spec for `generate`.
fn default_spec(id: ModelId) -> ModelSpec {
    let theta_b = match id {
        ModelId::Ou | ModelId::Gbm => Some(0.98),
        _ => None,
    };
    let mut theta = ThetaVector::new(theta_b, 3.5, 1.0);
    if id == ModelId::TestConst {
        theta = theta.with_fixed("c", 1.0);
    }
    ModelSpec::new(id, 1.0, theta)
}

fn resolve_spec(mut spec: ModelSpec, t: &ThetaArgs, cfg: &Settings) -> Result<ModelSpec> {
    if let Some(v) = cfg.pick_opt(t.theta_b, "theta-b")? {
        spec.theta.theta_b = Some(v);
    }
    if let Some(v) = cfg.pick_opt(t.theta_lambda, "theta-lambda")? {
        spec.theta.theta_lambda = v;
    }
    if let Some(v) = cfg.pick_opt(t.theta_sigma, "theta-sigma")? {
        spec.theta.theta_sigma = v;
    }
    if let Some(v) = cfg.pick_opt(t.x_star, "x-star")? {
        spec.x_star = v;
    }
    if let Some(v) = cfg.pick_opt(t.lambda_floor, "lambda-floor")? {
        spec.lambda_floor = v;
    }
    let pairs: Vec<String> = if t.fixed.is_empty() {
        match cfg.pick_opt::<String>(None, "fixed")? {
            Some(raw) => raw.split(',').map(str::to_string).collect(),
            None => Vec::new(),
        }
    } else {
        t.fixed.clone()
    };
    for pair in pairs {
        let Some((key, value)) = pair.split_once('=') else {
            return Err(Error::Config(format!("--fixed expects KEY=VALUE, got {pair:?}")));
        };
        let value: f64 = value
            .trim()
            .parse()
            .map_err(|e| Error::Config(format!("--fixed {key}: {e}")))?;
        spec.theta.fixed.insert(key.trim().to_string(), value);
    }
    Ok(spec)
}

fn echo_spec(prov: &mut Provenance, spec: &ModelSpec) {
    prov.set("model", spec.model);
    prov.set("x-star", spec.x_star);
    prov.set_opt("theta-b", spec.theta.theta_b);
    prov.set("theta-lambda", spec.theta.theta_lambda);
    prov.set("theta-sigma", spec.theta.theta_sigma);
    if spec.lambda_floor != 0.0 {
        prov.set("lambda-floor", spec.lambda_floor);
    }
    for (k, v) in &spec.theta.fixed {
        prov.set(&format!("fixed-{k}"), *v);
    }
}

fn resolve_quadrature(cfg: &Settings, flag: Option<String>) -> Result<Quadrature> {
    match cfg.pick_opt(flag, "quadrature")? {
        Some(s) => s.parse(),
        None => Ok(Quadrature::Right),
    }
}

fn quad_label(q: Quadrature) -> &'static str {
    match q {
        Quadrature::Right => "right",
        Quadrature::Left => "left",
    }
}

fn resolve_phi(cfg: &Settings, flag: Option<String>) -> Result<(fn(f64) -> f64, String)> {
    let name = cfg.pick(flag, "phi", "id".to_string())?;
    let f: fn(f64) -> f64 = match name.as_str() {
        "id" => |x| x,
        "abs" => f64::abs,
        "square" => |x| x * x,
        other => return Err(Error::Config(format!("unknown test function '{other}'"))),
    };
    Ok((f, name))
}

fn coord_name(c: ThetaCoord) -> &'static str {
    match c {
        ThetaCoord::DriftB => "theta_b",
        ThetaCoord::Lambda => "theta_lambda",
        ThetaCoord::Sigma => "theta_sigma",
    }
}

/// Everything the dataset-driven subcommands resolve the same way.
struct Setup {
    dataset: MarkedDataset,
    data_path: PathBuf,
    spec: ModelSpec,
    model: Model,
    horizon: u32,
    quadrature: Quadrature,
    seed: u64,
    out: PathBuf,
}

fn filter_setup(
    common: &CommonArgs,
    theta: &ThetaArgs,
    data: &Option<PathBuf>,
    horizon_flag: Option<u32>,
) -> Result<(Setup, Settings)> {
    let cfg = Settings::load(common.config.as_deref())?;
    let data_path = cfg.pick_required(data.clone(), "data")?;
    let dataset = read_dataset(&data_path)?;
    let spec = resolve_spec(dataset.spec.clone(), theta, &cfg)?;
    let model = Model::new(&spec)?;
    let horizon = cfg.pick(horizon_flag, "T", dataset.horizon)?;
    let quadrature = resolve_quadrature(&cfg, common.quadrature.clone())?;
    let seed = cfg.pick(common.seed, "seed", 1)?;
    let out = cfg.pick_required(common.out.clone(), "out")?;
    Ok((
        Setup { dataset, data_path, spec, model, horizon, quadrature, seed, out },
        cfg,
    ))
}

fn base_prov(command: &'static str, s: &Setup) -> Provenance {
    let mut prov = Provenance::new(command);
    prov.set("data", s.data_path.display());
    prov.set("T", s.horizon);
    prov.set("quadrature", quad_label(s.quadrature));
    prov.set("seed", s.seed);
    echo_spec(&mut prov, &s.spec);
    prov
}

fn cmd_generate(a: GenerateArgs) -> Result<()> {
    let cfg = Settings::load(a.common.config.as_deref())?;
    let model_name = cfg.pick(a.model, "model", "OU".to_string())?;
    let id: ModelId = model_name.parse()?;
    let spec = resolve_spec(default_spec(id), &a.theta, &cfg)?;
    let horizon = cfg.pick(a.horizon, "T", 10)?;
    let data_level = cfg.pick(a.data_level, "data-level", 10)?;
    let seed = cfg.pick(a.common.seed, "seed", 1)?;
    let out = cfg.pick_required(a.common.out.clone(), "out")?;
    let (dataset, _) = generate_dataset(&spec, horizon, data_level, seed)?;
    write_dataset(&dataset, &out)?;
    println!("wrote {} events to {}", dataset.events.len(), out.display());
    Ok(())
}

fn cmd_pf(a: FilterCmdArgs) -> Result<()> {
    let (s, cfg) = filter_setup(&a.common, &a.theta, &a.data, a.horizon)?;
    let (phi, phi_name) = resolve_phi(&cfg, a.phi)?;
    let level = cfg.pick(a.level, "level", 4)?;
    let particles = cfg.pick(a.particles, "particles", 1000)?;
    let out = mppf::filters::run_pf(
        &FilterParams {
            model: &s.model,
            dataset: &s.dataset,
            level,
            particles,
            horizon: s.horizon,
            quadrature: s.quadrature,
            seed: s.seed,
        },
        &[phi],
    )?;
    let per_unit = out.cost_substeps / s.horizon as u64;
    let mut prov = base_prov("pf", &s);
    prov.set("level", level).set("particles", particles).set("phi", &phi_name);
    let rows = (1..=s.horizon).map(|t| {
        vec![
            cell(t),
            cell(out.estimates[0][t as usize - 1]),
            cell(per_unit * t as u64),
        ]
    });
    write_csv(&s.out, &prov, &["t", "estimate", "cost_steps"], rows)?;
    println!(
        "log_norm_const={} cost_substeps={}",
        out.log_norm_const, out.cost_substeps
    );
    Ok(())
}

fn cmd_cpf(a: FilterCmdArgs) -> Result<()> {
    let (s, cfg) = filter_setup(&a.common, &a.theta, &a.data, a.horizon)?;
    let (phi, phi_name) = resolve_phi(&cfg, a.phi)?;
    let level = cfg.pick(a.level, "level", 4)?;
    let particles = cfg.pick(a.particles, "particles", 1000)?;
    let out = mppf::filters::run_cpf(
        &FilterParams {
            model: &s.model,
            dataset: &s.dataset,
            level,
            particles,
            horizon: s.horizon,
            quadrature: s.quadrature,
            seed: s.seed,
        },
        &[phi],
    )?;
    let per_unit = out.cost_substeps / s.horizon as u64;
    let mut prov = base_prov("cpf", &s);
    prov.set("level", level).set("particles", particles).set("phi", &phi_name);
    let rows = (1..=s.horizon).map(|t| {
        vec![
            cell(t),
            cell(out.diff[0][t as usize - 1]),
            cell(per_unit * t as u64),
        ]
    });
    write_csv(&s.out, &prov, &["t", "estimate", "cost_steps"], rows)?;
    println!(
        "log_norm_const_fine={} log_norm_const_coarse={} cost_substeps={}",
        out.log_norm_const_fine, out.log_norm_const_coarse, out.cost_substeps
    );
    Ok(())
}

fn cmd_mlpf(a: MlpfArgs) -> Result<()> {
    let (s, cfg) = filter_setup(&a.common, &a.theta, &a.data, a.horizon)?;
    let (phi, phi_name) = resolve_phi(&cfg, a.phi)?;
    let eps = parse_list::<f64>(&cfg.pick_required(a.eps, "eps")?, "eps")?;
    if eps.len() != 1 {
        return Err(Error::Config(
            "mlpf takes a single accuracy; use `bench --kind mse-mlpf` for grids".into(),
        ));
    }
    let l0 = cfg.pick(a.l0, "l0", 0)?;
    let constant = cfg.pick(a.c_const, "c-const", 1.0)?;
    let out = mppf::mlmc::run_mlpf(
        &MlpfParams {
            model: &s.model,
            dataset: &s.dataset,
            horizon: s.horizon,
            epsilon: eps[0],
            l0,
            constant,
            quadrature: s.quadrature,
            seed: s.seed,
        },
        &[phi],
    )?;
    let per_unit = out.cost_substeps / s.horizon as u64;
    let mut prov = base_prov("mlpf", &s);
    prov.set("eps", eps[0])
        .set("l0", l0)
        .set("c-const", constant)
        .set("phi", &phi_name)
        .set("allocation", format!("{:?}", out.allocation.particles));
    let rows = (1..=s.horizon).map(|t| {
        vec![
            cell(t),
            cell(out.estimates[0][t as usize - 1]),
            cell(per_unit * t as u64),
        ]
    });
    write_csv(&s.out, &prov, &["t", "estimate", "cost_steps"], rows)?;
    println!(
        "max_level={} particles={:?} cost_substeps={}",
        out.allocation.max_level, out.allocation.particles, out.cost_substeps
    );
    Ok(())
}

fn cmd_upf(a: UpfArgs) -> Result<()> {
    let (s, cfg) = filter_setup(&a.common, &a.theta, &a.data, a.horizon)?;
    let (phi, phi_name) = resolve_phi(&cfg, a.phi)?;
    let replicates = cfg.pick_required(a.replicates, "M")?;
    let l0 = cfg.pick(a.l0, "l0", 0)?;
    let l_trunc = cfg.pick(a.l_trunc, "l-trunc", 6)?;
    let p_trunc = cfg.pick(a.p_trunc, "p-trunc", 6)?;
    let n0 = cfg.pick(a.n0, "n0", 5)?;
    let out = mppf::mlmc::upf_estimate(
        &UpfParams {
            model: &s.model,
            dataset: &s.dataset,
            horizon: s.horizon,
            quadrature: s.quadrature,
            randomization: build_randomization(l0, l_trunc, p_trunc, n0)?,
            replicates,
            seed: s.seed,
        },
        phi,
    )?;
    let mut prov = base_prov("upf", &s);
    prov.set("M", replicates)
        .set("l0", l0)
        .set("l-trunc", l_trunc)
        .set("p-trunc", p_trunc)
        .set("n0", n0)
        .set("phi", &phi_name);
    let rows = std::iter::once(vec![
        cell(s.horizon),
        cell(out.estimate),
        cell(out.cost_substeps),
    ]);
    write_csv(&s.out, &prov, &["t", "estimate", "cost_steps"], rows)?;
    println!("estimate={} cost_substeps={}", out.estimate, out.cost_substeps);
    Ok(())
}

fn cmd_score(a: ScoreArgs) -> Result<()> {
    let (s, cfg) = filter_setup(&a.common, &a.theta, &a.data, a.horizon)?;
    let level = cfg.pick(a.level, "level", 4)?;
    let particles = cfg.pick(a.particles, "particles", 1000)?;
    let out = run_score_filter(
        &s.model,
        &s.dataset,
        level,
        particles,
        s.horizon,
        s.quadrature,
        s.seed,
    )?;
    let per_unit = out.cost_substeps / s.horizon as u64;
    let mut prov = base_prov("score", &s);
    prov.set("level", level).set("particles", particles);
    let coords = s.model.theta_coords().to_vec();
    let mut rows = Vec::new();
    for t in 1..=s.horizon {
        for (i, &c) in coords.iter().enumerate() {
            rows.push(vec![
                cell(t),
                cell(out.scores[t as usize - 1][i]),
                cell(coord_name(c)),
                cell(per_unit * t as u64),
            ]);
        }
    }
    write_csv(
        &s.out,
        &prov,
        &["t", "estimate", "coordinate", "cost_steps"],
        rows.into_iter(),
    )?;
    println!("cost_kernel_evals={}", out.cost_kernel_evals);
    Ok(())
}

fn broadcast(values: Vec<f64>, dim: usize, what: &str) -> Result<Vec<f64>> {
    if values.len() == 1 && dim > 1 {
        return Ok(vec![values[0]; dim]);
    }
    if values.len() != dim {
        return Err(Error::Config(format!(
            "{what} needs 1 or {dim} comma-separated values, got {}",
            values.len()
        )));
    }
    Ok(values)
}

fn cmd_sga(a: SgaArgs) -> Result<()> {
    let (s, cfg) = filter_setup(&a.common, &a.theta, &a.data, None)?;
    let level = cfg.pick(a.level, "level", 3)?;
    let particles = cfg.pick(a.particles, "particles", 500)?;
    let dim = s.model.theta_dim();
    let alpha0 = broadcast(
        parse_list(&cfg.pick(a.alpha0, "alpha0", "0.1".to_string())?, "alpha0")?,
        dim,
        "--alpha0",
    )?;
    let floors = broadcast(
        parse_list(&cfg.pick(a.floors, "floors", "0.05".to_string())?, "floors")?,
        dim,
        "--floors",
    )?;
    let beta = cfg.pick(a.beta, "beta", 0.8)?;
    let window = cfg.pick(a.window, "window", 1)?;
    let iters = cfg.pick(a.iters, "iters", s.dataset.horizon / window.max(1))?;
    let sga_cfg = SgaConfig {
        alpha0: alpha0.clone(),
        beta,
        window,
        iterations: iters,
        floors: floors.clone(),
    };
    let out = sga_run(&s.model, &s.dataset, level, particles, s.quadrature, s.seed, &sga_cfg)?;

    let mut prov = base_prov("sga", &s);
    prov.set("level", level)
        .set("particles", particles)
        .set("alpha0", format!("{alpha0:?}"))
        .set("beta", beta)
        .set("window", window)
        .set("iters", iters)
        .set("floors", format!("{floors:?}"))
        .set("theta0", format!("{:?}", out.thetas[0]));
    let coords = s.model.theta_coords().to_vec();
    let mut names: Vec<String> = vec!["m".into()];
    names.extend(coords.iter().map(|&c| coord_name(c).to_string()));
    names.extend(coords.iter().map(|&c| format!("score_{}", coord_name(c))));
    names.push("alpha".into());
    let columns: Vec<&str> = names.iter().map(String::as_str).collect();
    let mut rows = Vec::new();
    for m in 1..=iters as usize {
        let mut row = vec![cell(m)];
        row.extend(out.thetas[m].iter().map(|v| cell(*v)));
        row.extend(out.scores[m - 1].iter().map(|v| cell(*v)));
        row.push(cell(out.alphas[m - 1]));
        rows.push(row);
    }
    write_csv(&s.out, &prov, &columns, rows.into_iter())?;
    println!(
        "final_theta={:?} projections={} cost_substeps={}",
        out.thetas[iters as usize], out.projections, out.cost_substeps
    );
    Ok(())
}

fn bench_reference(
    s: &Setup,
    cfg: &Settings,
    a: &BenchArgs,
    tolerance: Option<f64>,
    phi: fn(f64) -> f64,
) -> Result<(ReferenceValue, ReferenceConfig)> {
    let ref_cfg = ReferenceConfig {
        level: cfg.pick(a.ref_level, "ref-level", s.dataset.data_level.saturating_sub(1))?,
        particles: cfg.pick(a.ref_particles, "ref-particles", 1_000_000)?,
        replicates: cfg.pick(a.ref_reps, "ref-reps", 20)?,
        seed: s.seed,
        tolerance: cfg.pick_opt(a.ref_tol, "ref-tol")?.or(tolerance),
    };
    let value = reference_value(&s.model, &s.dataset, s.horizon, s.quadrature, &ref_cfg, phi)?;
    Ok((value, ref_cfg))
}

fn cmd_bench(a: BenchArgs) -> Result<()> {
    let (s, cfg) = filter_setup(&a.common, &a.theta, &a.data, a.horizon)?;
    let (phi, phi_name) = resolve_phi(&cfg, a.phi.clone())?;
    let kind = cfg.pick_required(a.kind.clone(), "kind")?;
    match kind.as_str() {
        "mse-pf" | "mse-mlpf" | "mse-upf" => {
            let est = match kind.as_str() {
                "mse-pf" => EstimatorKind::Pf,
                "mse-mlpf" => EstimatorKind::Mlpf,
                _ => EstimatorKind::Upf,
            };
            let eps = parse_list::<f64>(&cfg.pick_required(a.eps.clone(), "eps")?, "eps")?;
            let reps = cfg.pick(a.reps, "reps", 50)?;
            let smallest = eps.iter().cloned().fold(f64::INFINITY, f64::min);
            let (reference, ref_cfg) = bench_reference(&s, &cfg, &a, Some(smallest), phi)?;
            let params = MseCostParams {
                model: &s.model,
                dataset: &s.dataset,
                horizon: s.horizon,
                quadrature: s.quadrature,
                kind: est,
                epsilons: eps.clone(),
                repetitions: reps,
                seed: s.seed,
                reference: reference.mean,
                pf_constant: cfg.pick(a.pf_const, "pf-const", 1.0)?,
                mlpf_constant: cfg.pick(a.mlpf_const, "mlpf-const", 1.0)?,
                l0: cfg.pick(a.l0, "l0", 0)?,
                upf_constant: cfg.pick(a.upf_const, "upf-const", 1.0)?,
                upf_p_trunc: cfg.pick(a.p_trunc, "p-trunc", 6)?,
                upf_n0: cfg.pick(a.n0, "n0", 5)?,
            };
            let rows = mse_cost_experiment(&params, phi)?;
            let points: Vec<(f64, f64)> = rows
                .iter()
                .filter(|r| r.mean_cost > 0.0)
                .map(|r| ((1.0 / r.target).log2(), r.mean_cost.log2()))
                .collect();
            let fit = if points.len() >= 3 { Some(RateFit::fit(&points)?) } else { None };

            let mut prov = base_prov("bench", &s);
            prov.set("kind", &kind)
                .set("phi", &phi_name)
                .set("eps", format!("{eps:?}"))
                .set("reps", reps)
                .set("pf-const", params.pf_constant)
                .set("mlpf-const", params.mlpf_constant)
                .set("upf-const", params.upf_constant)
                .set("l0", params.l0)
                .set("p-trunc", params.upf_p_trunc)
                .set("n0", params.upf_n0)
                .set("ref-level", ref_cfg.level)
                .set("ref-particles", ref_cfg.particles)
                .set("ref-reps", ref_cfg.replicates)
                .set("reference", reference.mean)
                .set("reference-stderr", reference.stderr);
            prov.set_opt("cost-slope", fit.as_ref().map(|f| f.slope));
            let csv_rows = rows.iter().map(|r| {
                vec![cell(r.target), cell(r.mse), cell(r.mean_cost), cell(r.reps)]
            });
            write_csv(&s.out, &prov, &["target", "mse", "mean_cost", "reps"], csv_rows)?;
            match fit {
                Some(f) => println!("cost_slope={}", f.slope),
                None => println!("cost_slope=NA"),
            }
        }
        "coupling-variance" | "weak-bias" => {
            let decay_kind = if kind == "coupling-variance" {
                DecayKind::CouplingVariance
            } else {
                DecayKind::WeakBias
            };
            let levels = parse_list::<u32>(&cfg.pick_required(a.levels.clone(), "levels")?, "levels")?;
            let particles = cfg.pick(a.particles, "particles", 1000)?;
            let reps = cfg.pick(a.reps, "reps", 100)?;
            let reference = if decay_kind == DecayKind::WeakBias {
                Some(bench_reference(&s, &cfg, &a, None, phi)?)
            } else {
                None
            };
            let params = DecayParams {
                model: &s.model,
                dataset: &s.dataset,
                horizon: s.horizon,
                quadrature: s.quadrature,
                kind: decay_kind,
                levels: levels.clone(),
                particles,
                repetitions: reps,
                seed: s.seed,
                reference: reference.as_ref().map(|(r, _)| r.mean),
            };
            let out = decay_experiment(&params, phi)?;

            let mut prov = base_prov("bench", &s);
            prov.set("kind", &kind)
                .set("phi", &phi_name)
                .set("levels", format!("{levels:?}"))
                .set("particles", particles)
                .set("reps", reps);
            if let Some((r, rc)) = &reference {
                prov.set("ref-level", rc.level)
                    .set("ref-particles", rc.particles)
                    .set("ref-reps", rc.replicates)
                    .set("reference", r.mean)
                    .set("reference-stderr", r.stderr);
            }
            prov.set_opt("slope", out.fit.as_ref().map(|f| f.slope));
            let csv_rows = out.rows.iter().map(|r| {
                vec![
                    cell(r.level),
                    cell(r.value),
                    cell(r.mc_stderr),
                    cell(u8::from(r.resolved)),
                ]
            });
            write_csv(&s.out, &prov, &["level", "value", "stderr", "resolved"], csv_rows)?;
            match out.fit {
                Some(f) => println!("slope={}", f.slope),
                None => println!("slope=NA"),
            }
        }
        other => {
            return Err(Error::Config(format!(
                "unknown bench kind '{other}'; expected mse-pf, mse-mlpf, mse-upf, coupling-variance, or weak-bias"
            )))
        }
    }
    Ok(())
}
