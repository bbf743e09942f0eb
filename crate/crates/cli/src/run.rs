//! Validation, execution and artifact assembly for one experiment.
//!
//! Everything is computed in memory first; files are only written once the
//! whole run has succeeded.

use std::path::{Path, PathBuf};

use pliflows_core::flow::{check_flow_inputs, integrate_flow, FlowKind, FlowSpec, FlowState, Trajectory};
use pliflows_core::iss::{default_horizon, manifold_margins, sweep_jobs, GainSweepReport, SweepConfig, SweepRow};
use pliflows_core::lffnn::{conservation_deviation, imbalance, scalar_phase_portrait};
use pliflows_core::pli::{
    classify, estimate_sgl_constant, fit_sat_pli_with, sample_landscape, sample_scalar_model,
    samples_from_trajectories, LandscapeSamples, Sample, ScalarModel, SAT_FIT_SPAN,
};
use pliflows_core::{DisturbanceKind, DisturbanceSpec, Error, FactoredGain, Gain, LqrProblem, Matrix};
use serde_json::{json, Value};

use crate::config::*;
use crate::instances;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RunError {
    #[error("invalid configuration: {0}")]
    Validation(String),
    #[error("run failed: {0}")]
    Runtime(String),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Validation(_) => 2,
            RunError::Runtime(_) => 3,
        }
    }
}

fn invalid(msg: impl Into<String>) -> RunError {
    RunError::Validation(msg.into())
}

/// Library errors raised while checking a config.
fn at_validation(what: &str) -> impl Fn(Error) -> RunError + '_ {
    move |e| match e {
        Error::LeftDomain { .. } | Error::NotConverged { .. } => RunError::Runtime(format!("{what}: {e}")),
        e => RunError::Validation(format!("{what}: {e}")),
    }
}

fn at_runtime(what: &str) -> impl Fn(Error) -> RunError + '_ {
    move |e| RunError::Runtime(format!("{what}: {e}"))
}

/// A file to be written, relative to nothing: `path` is final.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    pub path: PathBuf,
    pub bytes: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub resolved: ExperimentConfig,
    pub summary: Value,
    pub artifacts: Vec<Artifact>,
}

impl RunOutput {
    pub fn write(&self) -> Result<(), RunError> {
        for a in &self.artifacts {
            if let Some(dir) = a.path.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)
                    .map_err(|e| RunError::Runtime(format!("cannot create {}: {e}", dir.display())))?;
            }
            std::fs::write(&a.path, &a.bytes)
                .map_err(|e| RunError::Runtime(format!("cannot write {}: {e}", a.path.display())))?;
        }
        Ok(())
    }
}

/// Floats in CSV files: 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_nan() {
        "NaN".to_owned()
    } else if x > 0.0 {
        "inf".to_owned()
    } else {
        "-inf".to_owned()
    }
}

fn csv_bytes(header: &[String], rows: impl Iterator<Item = Vec<String>>) -> Vec<u8> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(&r).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

fn artifact_path(prefix: &str, suffix: &str) -> PathBuf {
    PathBuf::from(format!("{prefix}_{suffix}"))
}

fn file_name(p: &Path) -> String {
    p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
}

fn matrix_from(rows: &Mat, what: &str) -> Result<Matrix, RunError> {
    Matrix::from_rows(rows).map_err(|e| invalid(format!("{what}: {e}")))
}

fn mat_json(m: &Matrix) -> Value {
    json!(m.to_rows())
}

fn check_finite(x: f64, what: &str) -> Result<(), RunError> {
    if x.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("{what} must be finite")))
    }
}

pub fn build_problem(cfg: &ProblemConfig) -> Result<LqrProblem, RunError> {
    let what = "problem";
    match cfg {
        ProblemConfig::Integrator => Ok(LqrProblem::integrator()),
        ProblemConfig::PlanarZero => Ok(LqrProblem::planar_zero()),
        ProblemConfig::ScalarA { a, b, q, r } => {
            for (x, n) in [(a, "a"), (b, "b"), (q, "q"), (r, "r")] {
                check_finite(*x, n)?;
            }
            LqrProblem::scalar(*a, *b, *q, *r).map_err(at_validation(what))
        }
        ProblemConfig::Explicit {
            a,
            b,
            q,
            r,
            sigma0,
            riccati_seed,
        } => {
            let mut prob = LqrProblem::new(
                matrix_from(a, "problem.a")?,
                matrix_from(b, "problem.b")?,
                matrix_from(q, "problem.q")?,
                matrix_from(r, "problem.r")?,
            )
            .map_err(at_validation(what))?;
            if let Some(s) = sigma0 {
                prob = prob.with_sigma0(matrix_from(s, "problem.sigma0")?).map_err(at_validation(what))?;
            }
            let seed = riccati_seed.as_ref().map(|s| matrix_from(s, "problem.riccati_seed")).transpose()?;
            prob.with_optimum(seed.as_ref()).map_err(|e| match e {
                Error::NoStabilizingGain => {
                    invalid("problem: A is not Hurwitz; supply a stabilizing problem.riccati_seed")
                }
                e => at_validation(what)(e),
            })
        }
    }
}

fn flow_kind(k: FlowKindConfig) -> FlowKind {
    match k {
        FlowKindConfig::Gradient => FlowKind::Gradient,
        FlowKindConfig::Natural => FlowKind::Natural,
        FlowKindConfig::GaussNewton => FlowKind::GaussNewton,
        FlowKindConfig::Factored => FlowKind::Factored,
    }
}

pub fn build_disturbance(cfg: &DisturbanceConfig, shape: Vec<(usize, usize)>) -> Result<DisturbanceSpec, RunError> {
    let kind = match &cfg.kind {
        DisturbanceKindConfig::Zero => DisturbanceKind::Zero,
        DisturbanceKindConfig::Constant => DisturbanceKind::Constant,
        DisturbanceKindConfig::Sinusoid { frequency, phase } => DisturbanceKind::Sinusoid {
            omega: *frequency,
            phase: *phase,
        },
        DisturbanceKindConfig::PiecewiseStep { switch_times, levels } => DisturbanceKind::PiecewiseStep {
            switch_times: switch_times.clone(),
            levels: levels.clone(),
        },
        DisturbanceKindConfig::BoundedRandom { seed, bucket } => DisturbanceKind::BoundedRandom {
            seed: *seed,
            bucket: *bucket,
        },
    };
    let what = "disturbance";
    let spec = DisturbanceSpec::new(kind, cfg.amplitude, shape).map_err(at_validation(what))?;
    match &cfg.direction {
        Some(d) => spec.with_direction(d.clone()).map_err(at_validation(what)),
        None => Ok(spec),
    }
}

fn flow_spec(cfg: &FlowConfig, kind: FlowKind) -> FlowSpec {
    FlowSpec::new(kind, cfg.t_max)
        .with_eta(cfg.eta)
        .with_samples(cfg.samples)
        .with_stop_grad_tol(cfg.stop_grad_tol)
        .with_tolerances(cfg.rtol, cfg.atol)
}

fn factored_from(factors: &[Mat]) -> Result<FactoredGain, RunError> {
    let ms = factors
        .iter()
        .enumerate()
        .map(|(i, f)| matrix_from(f, &format!("factor {}", i + 1)))
        .collect::<Result<Vec<_>, _>>()?;
    FactoredGain::new(ms).map_err(at_validation("factors"))
}

/// Resolves the initial state, drawing factors from the seed when needed.
fn flow_init(cfg: &mut ExperimentConfig, prob: &LqrProblem) -> Result<FlowState, RunError> {
    if cfg.flow.kind == FlowKindConfig::Factored {
        let fg = match &cfg.flow.factors {
            Some(f) => factored_from(f)?,
            None => {
                if cfg.flow.hidden.is_empty() || cfg.flow.hidden.contains(&0) {
                    return Err(invalid("flow.hidden must list positive widths"));
                }
                let fg = instances::stabilizing_factors(&mut instances::rng(cfg.seed), prob, &cfg.flow.hidden)
                    .ok_or_else(|| invalid("no stabilizing factors found for flow.hidden; give flow.factors"))?;
                cfg.flow.factors = Some(fg.factors().iter().map(|m| m.to_rows()).collect());
                fg
            }
        };
        Ok(FlowState::Factored(fg))
    } else {
        let k0 = cfg
            .flow
            .k0
            .as_ref()
            .ok_or_else(|| invalid("flow.k0 is required for plain flows"))?;
        Ok(FlowState::Plain(Gain::new(matrix_from(k0, "flow.k0")?)))
    }
}

fn sample_json(s: &Option<Sample>) -> Value {
    match s {
        Some(s) => json!({ "regret": s.regret, "grad_norm": s.grad_norm }),
        None => Value::Null,
    }
}

fn state_json(s: &FlowState) -> Value {
    match s {
        FlowState::Plain(g) => json!({ "gain": mat_json(g.matrix()) }),
        FlowState::Factored(f) => json!({
            "gain": mat_json(f.product().matrix()),
            "factors": f.factors().iter().map(mat_json).collect::<Vec<_>>(),
        }),
    }
}

fn trajectory_csv(traj: &Trajectory, with_u: bool) -> Vec<u8> {
    let n_c = traj.imbalances.as_ref().and_then(|v| v.first()).map_or(0, |v| v.len());
    let mut header: Vec<String> = ["t", "loss", "regret", "grad_norm"].iter().map(|s| s.to_string()).collect();
    header.extend((1..=n_c).map(|i| format!("c_{i}")));
    if with_u {
        header.push("u_sup".into());
    }
    let rows = (0..traj.len()).map(|i| {
        let mut row = vec![
            fmt_f64(traj.times[i]),
            fmt_f64(traj.losses[i]),
            traj.regrets.as_ref().map_or_else(|| "NaN".to_owned(), |r| fmt_f64(r[i])),
            fmt_f64(traj.grad_norms[i]),
        ];
        if let Some(c) = &traj.imbalances {
            row.extend(c[i].iter().map(|x| fmt_f64(*x)));
        }
        if with_u {
            row.push(fmt_f64(traj.disturbance_norms[i]));
        }
        row
    });
    csv_bytes(&header, rows)
}

fn run_flow(mut cfg: ExperimentConfig, prob: LqrProblem) -> Result<RunOutput, RunError> {
    if cfg.command == Command::Lffnn {
        cfg.flow.kind = FlowKindConfig::Factored;
    }
    let init = flow_init(&mut cfg, &prob)?;
    let mut spec = flow_spec(&cfg.flow, flow_kind(cfg.flow.kind));
    if let Some(d) = &cfg.flow.disturbance {
        spec = spec.with_disturbance(build_disturbance(d, init.shape())?);
    }
    check_flow_inputs(&prob, &init, &spec).map_err(at_validation("flow"))?;

    let traj = integrate_flow(&prob, &init, &spec).map_err(at_runtime("flow"))?;
    let opt = prob.optimum().map_err(at_runtime("flow"))?;
    let csv_path = artifact_path(&cfg.out, "trajectory.csv");
    let mut result = json!({
        "kind": traj.kind.name(),
        "records": traj.len(),
        "final_time": traj.times.last().copied(),
        "final_loss": traj.final_loss(),
        "final_regret": traj.final_regret(),
        "final_grad_norm": traj.final_grad_norm(),
        "final_state": state_json(traj.final_state()),
        "initial_state": state_json(&init),
        "optimal_loss": opt.loss,
        "k_opt": mat_json(opt.k_opt()),
        "stopped_early": traj.stopped_early,
        "disturbance_sup": traj.disturbance_sup,
    });
    if let FlowState::Factored(fg) = &init {
        let rec = imbalance(fg);
        result["imbalance_initial"] = json!(rec.measures);
        result["imbalance_sqrt_initial"] = json!(rec.sqrt_measures());
        result["conservation_deviation"] = json!(conservation_deviation(&traj).map_err(at_runtime("flow"))?);
    }
    let artifacts = vec![Artifact {
        bytes: trajectory_csv(&traj, spec.disturbance.is_some()),
        path: csv_path,
    }];
    Ok(finish(cfg, result, artifacts))
}

fn run_riccati(cfg: ExperimentConfig, prob: LqrProblem) -> Result<RunOutput, RunError> {
    let opt = prob.optimum().map_err(at_runtime("riccati"))?;
    let result = json!({
        "k_opt": mat_json(opt.k_opt()),
        "pi": mat_json(&opt.riccati.pi),
        "iterations": opt.riccati.iterations,
        "residual": opt.riccati.residual,
        "optimal_loss": opt.loss,
    });
    Ok(finish(cfg, result, Vec::new()))
}

fn grid_points(p: &PliConfig) -> Result<Vec<f64>, RunError> {
    if p.points < 2 {
        return Err(invalid("pli.points must be at least 2"));
    }
    check_finite(p.k_min, "pli.k_min")?;
    check_finite(p.k_max, "pli.k_max")?;
    if !(p.k_max > p.k_min) {
        return Err(invalid("pli.k_max must exceed pli.k_min"));
    }
    if p.log_spacing && !(p.k_min > 0.0) {
        return Err(invalid("log spacing needs pli.k_min > 0"));
    }
    let n = p.points;
    Ok((0..n)
        .map(|i| {
            let s = i as f64 / (n - 1) as f64;
            if p.log_spacing {
                (p.k_min.ln() + s * (p.k_max.ln() - p.k_min.ln())).exp()
            } else {
                p.k_min + s * (p.k_max - p.k_min)
            }
        })
        .collect())
}

fn run_pli(cfg: ExperimentConfig, prob: LqrProblem) -> Result<RunOutput, RunError> {
    let p = &cfg.pli;
    if p.fit_grid_points < 2 {
        return Err(invalid("pli.fit_grid_points must be at least 2"));
    }
    if let Some(rho) = p.rho {
        if !(rho > 0.0 && rho.is_finite()) {
            return Err(invalid("pli.rho must be positive"));
        }
    }
    let scalar = prob.state_dim() == 1 && prob.input_dim() == 1;
    let landscape: LandscapeSamples = match (p.model, p.sampler) {
        (PliModel::DtEuler, Sampler::Grid) => {
            if cfg.problem != ProblemConfig::Integrator {
                return Err(invalid("the dt_euler model discretizes the integrator; use builtin integrator"));
            }
            if !(p.h > 0.0 && p.h.is_finite()) {
                return Err(invalid("pli.h must be positive"));
            }
            sample_scalar_model(ScalarModel::DtEuler { h: p.h }, &grid_points(p)?).map_err(at_validation("pli"))?
        }
        (PliModel::DtEuler, _) => return Err(invalid("the dt_euler model only supports the grid sampler")),
        (PliModel::Lqr, Sampler::Grid) => {
            if !scalar {
                return Err(invalid("the grid sampler needs a scalar problem; use random or trajectories"));
            }
            let gains: Vec<Gain> = grid_points(p)?.into_iter().map(Gain::scalar).collect();
            sample_landscape(&prob, &gains).map_err(at_validation("pli"))?
        }
        (PliModel::Lqr, sampler) => {
            if p.count == 0 || !(p.radius > 0.0 && p.radius.is_finite()) {
                return Err(invalid("pli.count and pli.radius must be positive"));
            }
            let k_opt = prob.optimum().map_err(at_validation("pli"))?.k_opt().clone();
            let mut rng = instances::rng(cfg.seed);
            let gains = (0..p.count)
                .map(|_| {
                    instances::stabilizing_gain_near(&mut rng, &prob, &k_opt, p.radius)
                        .map(Gain::new)
                        .ok_or_else(|| invalid("could not draw stabilizing gains; reduce pli.radius"))
                })
                .collect::<Result<Vec<_>, _>>()?;
            if sampler == Sampler::Random {
                sample_landscape(&prob, &gains).map_err(at_validation("pli"))?
            } else {
                let spec = flow_spec(&cfg.flow, FlowKind::Gradient);
                spec.validate().map_err(at_validation("flow"))?;
                let trajs = gains
                    .into_iter()
                    .map(|g| integrate_flow(&prob, &FlowState::Plain(g), &spec))
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(at_runtime("pli"))?;
                samples_from_trajectories(&trajs).map_err(at_runtime("pli"))?
            }
        }
    };
    let samples = &landscape.samples;
    let rmax = samples.iter().fold(0.0f64, |m, s| m.max(s.regret));
    let rho = p.rho.unwrap_or(rmax);
    let sgl = estimate_sgl_constant(samples, rho).ok();
    let report = classify(samples).map_err(at_runtime("pli"))?;
    let fit = fit_sat_pli_with(samples, p.fit_grid_points, SAT_FIT_SPAN).ok();
    let fit_json = match &fit {
        Some(f) => {
            let (a, b) = match f.fitted {
                pliflows_core::ComparisonFn::SatPli { a, b } => (a, b),
                _ => unreachable!("sat fit"),
            };
            json!({ "a": a, "b": b, "local_rate": f.fitted.local_rate(), "feasible": f.feasible, "slack": f.slack })
        }
        None => Value::Null,
    };
    let result = json!({
        "samples": samples.len(),
        "skipped": landscape.skipped,
        "rho": rho,
        "sgl_constant": sgl,
        "fit": fit_json,
        "gl_constant": report.gl_constant,
        "classes": {
            "gl": report.gl_feasible,
            "sat": report.sat_feasible,
            "kinf": report.kinf_feasible,
            "pd": report.pd_feasible,
        },
        "witnesses": {
            "gl": sample_json(&report.witnesses.gl),
            "sat": sample_json(&report.witnesses.sat),
            "kinf": sample_json(&report.witnesses.kinf),
            "pd": sample_json(&report.witnesses.pd),
        },
    });
    let header = vec!["regret".to_owned(), "grad_norm".to_owned()];
    let bytes = csv_bytes(&header, samples.iter().map(|s| vec![fmt_f64(s.regret), fmt_f64(s.grad_norm)]));
    let artifacts = vec![Artifact {
        path: artifact_path(&cfg.out, "samples.csv"),
        bytes,
    }];
    Ok(finish(cfg, result, artifacts))
}

/// Worker count from `PLIFLOWS_THREADS`; 0 lets rayon decide.
pub fn thread_cap() -> Result<usize, RunError> {
    match std::env::var("PLIFLOWS_THREADS") {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .map_err(|_| invalid(format!("PLIFLOWS_THREADS must be a nonnegative integer, got {v:?}"))),
        Err(_) => Ok(0),
    }
}

fn run_iss(mut cfg: ExperimentConfig, prob: LqrProblem) -> Result<RunOutput, RunError> {
    let kind = flow_kind(cfg.iss.kind);
    let threads = thread_cap()?;
    let i = &cfg.iss;
    if i.samples < 2 || i.phases == 0 {
        return Err(invalid("iss.samples must be ≥ 2 and iss.phases ≥ 1"));
    }
    let k_opt = prob.optimum().map_err(at_validation("iss"))?.k_opt().clone();
    let mut rng = instances::rng(cfg.seed);
    let inits: Vec<FlowState> = if kind == FlowKind::Factored {
        match &i.factored_inits {
            Some(list) => list.iter().map(|f| factored_from(f).map(FlowState::Factored)).collect::<Result<_, _>>()?,
            None => {
                let hidden = cfg.flow.hidden.clone();
                if hidden.is_empty() || hidden.contains(&0) {
                    return Err(invalid("flow.hidden must list positive widths"));
                }
                let drawn = (0..i.random_inits)
                    .map(|_| {
                        instances::stabilizing_factors(&mut rng, &prob, &hidden)
                            .ok_or_else(|| invalid("no stabilizing factors found; give iss.factored_inits"))
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                cfg.iss.factored_inits =
                    Some(drawn.iter().map(|f| f.factors().iter().map(|m| m.to_rows()).collect()).collect());
                drawn.into_iter().map(FlowState::Factored).collect()
            }
        }
    } else {
        match &i.inits {
            Some(list) => list
                .iter()
                .map(|k| matrix_from(k, "iss.inits").map(|m| FlowState::Plain(Gain::new(m))))
                .collect::<Result<_, _>>()?,
            None => {
                if !(i.radius > 0.0 && i.radius.is_finite()) {
                    return Err(invalid("iss.radius must be positive"));
                }
                let drawn = (0..i.random_inits)
                    .map(|_| {
                        instances::stabilizing_gain_near(&mut rng, &prob, &k_opt, i.radius)
                            .ok_or_else(|| invalid("could not draw stabilizing inits; reduce iss.radius"))
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                cfg.iss.inits = Some(drawn.iter().map(|m| m.to_rows()).collect());
                drawn.into_iter().map(|m| FlowState::Plain(Gain::new(m))).collect()
            }
        }
    };
    let i = &cfg.iss;
    if inits.is_empty() {
        return Err(invalid("iss needs at least one init"));
    }
    for (n, init) in inits.iter().enumerate() {
        let probe = FlowSpec::new(kind, 1.0);
        check_flow_inputs(&prob, init, &probe).map_err(|e| invalid(format!("iss init {n}: {e}")))?;
    }
    let horizon = match i.horizon {
        Some(h) => h,
        None => default_horizon(&prob).map_err(at_validation("iss"))?,
    };
    cfg.iss.horizon = Some(horizon);
    let i = &cfg.iss;
    let template = build_disturbance(&i.disturbance, inits[0].shape())?;
    let sweep = SweepConfig {
        kind,
        amplitudes: i.amplitudes.clone(),
        template,
        phases: i.phases,
        horizon,
        samples: i.samples,
    };
    let jobs = sweep_jobs(&prob, &inits, &sweep).map_err(at_validation("iss"))?;
    for j in &jobs {
        j.spec.validate().map_err(at_validation("iss"))?;
    }
    let margins = match (&inits[0], prob.b().as_scalar()) {
        (FlowState::Factored(f), Some(b)) if b == 1.0 && prob.state_dim() == 1 && f.depth() == 2 => {
            let kappa = f.factors()[0].rows();
            let fgs: Vec<FactoredGain> = inits
                .iter()
                .filter_map(|s| match s {
                    FlowState::Factored(f) => Some(f.clone()),
                    FlowState::Plain(_) => None,
                })
                .collect();
            Some(manifold_margins(&prob, kappa, &fgs).map_err(at_validation("iss"))?)
        }
        _ => None,
    };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| RunError::Runtime(format!("thread pool: {e}")))?;
    let rows: Vec<SweepRow> = pool.install(|| {
        use rayon::prelude::*;
        jobs.par_iter().map(|j| j.run(&prob)).collect::<Result<Vec<_>, _>>()
    })
    .map_err(at_runtime("iss"))?;
    let report = GainSweepReport::from_rows(rows);

    let header: Vec<String> = ["delta", "init_id", "phase_id", "overshoot", "tail", "left_domain"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let bytes = csv_bytes(
        &header,
        report.rows.iter().map(|r| {
            vec![
                fmt_f64(r.delta),
                r.init_id.to_string(),
                r.phase_id.to_string(),
                fmt_f64(r.overshoot),
                fmt_f64(r.tail),
                u8::from(r.left_domain).to_string(),
            ]
        }),
    );
    let result = json!({
        "kind": kind.name(),
        "horizon": horizon,
        "inits": inits.len(),
        "rows": report.rows.len(),
        "destabilized": report.destabilized,
        "gain_curve": report.gain_curve.iter().map(|(d, g)| json!({ "delta": d, "gamma": g })).collect::<Vec<_>>(),
        "margins": margins,
    });
    let artifacts = vec![Artifact {
        path: artifact_path(&cfg.out, "sweep.csv"),
        bytes,
    }];
    Ok(finish(cfg, result, artifacts))
}

fn run_portrait(cfg: ExperimentConfig, prob: LqrProblem) -> Result<RunOutput, RunError> {
    let (a, q, r) = match (prob.a().as_scalar(), prob.b().as_scalar(), prob.q().as_scalar(), prob.r().as_scalar()) {
        (Some(a), Some(1.0), Some(q), Some(r)) => (a, q, r),
        _ => return Err(invalid("portrait needs a scalar problem with b = 1")),
    };
    let p = &cfg.portrait;
    for x in p.k1_range.iter().chain(&p.k2_range) {
        check_finite(*x, "portrait range")?;
    }
    let portrait = scalar_phase_portrait(
        a,
        q,
        r,
        (p.k1_range[0], p.k1_range[1]),
        (p.k2_range[0], p.k2_range[1]),
        p.n1,
        p.n2,
    )
    .map_err(at_validation("portrait"))?;
    let header: Vec<String> = ["k1", "k2", "v1", "v2", "flag_equilibrium", "flag_boundary", "flag_manifold"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let flag = |b: bool| u8::from(b).to_string();
    let bytes = csv_bytes(
        &header,
        portrait.samples.iter().map(|s| {
            vec![
                fmt_f64(s.k1),
                fmt_f64(s.k2),
                fmt_f64(s.v1),
                fmt_f64(s.v2),
                flag(s.on_equilibrium),
                flag(s.on_boundary),
                flag(s.on_manifold),
            ]
        }),
    );
    let count = |f: fn(&pliflows_core::lffnn::PortraitSample) -> bool| portrait.samples.iter().filter(|s| f(s)).count();
    let result = json!({
        "a": a,
        "q": q,
        "r": r,
        "equilibrium_product": portrait.equilibrium_product,
        "grid_tolerance": portrait.grid_tolerance,
        "points": portrait.samples.len(),
        "counts": {
            "in_domain": count(|s| s.in_domain),
            "equilibrium": count(|s| s.on_equilibrium),
            "boundary": count(|s| s.on_boundary),
            "manifold": count(|s| s.on_manifold),
        },
    });
    let artifacts = vec![Artifact {
        path: artifact_path(&cfg.out, "portrait.csv"),
        bytes,
    }];
    Ok(finish(cfg, result, artifacts))
}

fn finish(cfg: ExperimentConfig, result: Value, mut artifacts: Vec<Artifact>) -> RunOutput {
    let summary_path = artifact_path(&cfg.out, "summary.json");
    let mut files: Vec<String> = artifacts.iter().map(|a| file_name(&a.path)).collect();
    files.push(file_name(&summary_path));
    let summary = json!({
        "version": VERSION,
        "command": cfg.command.name(),
        "config": serde_json::to_value(&cfg).expect("config serializes"),
        "result": result,
        "files": files,
    });
    let mut text = serde_json::to_string_pretty(&summary).expect("summary serializes");
    text.push('\n');
    artifacts.push(Artifact {
        path: summary_path,
        bytes: text.into_bytes(),
    });
    RunOutput {
        resolved: cfg,
        summary,
        artifacts,
    }
}

/// Validates and runs `cfg` without touching the filesystem.
pub fn run(cfg: ExperimentConfig) -> Result<RunOutput, RunError> {
    if cfg.out.trim().is_empty() {
        return Err(invalid("out must be a nonempty path prefix"));
    }
    let prob = build_problem(&cfg.problem)?;
    match cfg.command {
        Command::Flow | Command::Lffnn => run_flow(cfg, prob),
        Command::Riccati => run_riccati(cfg, prob),
        Command::Pli => run_pli(cfg, prob),
        Command::Iss => run_iss(cfg, prob),
        Command::Portrait => run_portrait(cfg, prob),
    }
}
