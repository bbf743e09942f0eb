//! Gradient-dominance (Polyak–Łojasiewicz type) estimates from samples.
//!
//! A loss satisfies a dominance estimate with comparison function `α` when
//! `‖∇L(k)‖ ≥ α(L(k) − L̲)` on its domain. Everything here works on finite
//! samples of `(regret, ‖∇L‖)` pairs; witnesses identify the samples that
//! decide each verdict.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::flow::Trajectory;
use crate::linalg::Matrix;
use crate::lqr::{clamp_regret, Gain, LqrProblem};
use crate::scalar::{ct_integrator_loss, dt_euler_gradient, dt_euler_loss, dt_euler_optimum};

/// Lower-bound function `α` in `‖∇L‖ ≥ α(r)`.
#[derive(Debug, Clone, PartialEq)]
pub enum ComparisonFn {
    /// `α(r) = √(λr)`, class 𝒦∞.
    GlPli { lambda: f64 },
    /// `α(r) = √(ar/(b+r))`, class 𝒦, bounded by `√a`.
    SatPli { a: f64, b: f64 },
    /// `α(r) = √(ar/(b+r)²)`, positive definite but eventually decreasing.
    PdSquared { a: f64, b: f64 },
    /// Piecewise-linear interpolation of `(r, α(r))` pairs sorted by `r`,
    /// starting at `(0, 0)` and held constant past the last entry.
    Empirical { table: Vec<(f64, f64)> },
}

/// Comparison-function classes, strongest first.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FnClass {
    KInfinity,
    K,
    PositiveDefinite,
}

impl ComparisonFn {
    pub fn validate(&self) -> Result<()> {
        let pos = |x: f64| x > 0.0 && x.is_finite();
        let ok = match self {
            ComparisonFn::GlPli { lambda } => pos(*lambda),
            ComparisonFn::SatPli { a, b } | ComparisonFn::PdSquared { a, b } => pos(*a) && pos(*b),
            ComparisonFn::Empirical { table } => {
                table.first() == Some(&(0.0, 0.0))
                    && table.windows(2).all(|w| w[1].0 > w[0].0)
                    && table.iter().all(|(r, a)| *r >= 0.0 && *a >= 0.0 && a.is_finite())
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument("invalid comparison function parameters".into()))
        }
    }

    pub fn eval(&self, r: f64) -> f64 {
        let r = r.max(0.0);
        match self {
            ComparisonFn::GlPli { lambda } => libm::sqrt(lambda * r),
            ComparisonFn::SatPli { a, b } => libm::sqrt(a * r / (b + r)),
            ComparisonFn::PdSquared { a, b } => libm::sqrt(a * r / ((b + r) * (b + r))),
            ComparisonFn::Empirical { table } => {
                let Some(last) = table.last() else { return 0.0 };
                if r >= last.0 {
                    return last.1;
                }
                let i = table.partition_point(|(ri, _)| *ri <= r);
                let (r0, a0) = table[i - 1];
                let (r1, a1) = table[i];
                a0 + (a1 - a0) * (r - r0) / (r1 - r0)
            }
        }
    }

    pub fn class(&self) -> FnClass {
        match self {
            ComparisonFn::GlPli { .. } => FnClass::KInfinity,
            ComparisonFn::SatPli { .. } => FnClass::K,
            ComparisonFn::PdSquared { .. } => FnClass::PositiveDefinite,
            ComparisonFn::Empirical { table } => {
                if table.windows(2).all(|w| w[1].1 >= w[0].1) {
                    FnClass::K
                } else {
                    FnClass::PositiveDefinite
                }
            }
        }
    }

    /// Local exponential rate `lim_{r→0} α(r)²/r` where it is finite.
    pub fn local_rate(&self) -> f64 {
        match self {
            ComparisonFn::GlPli { lambda } => *lambda,
            ComparisonFn::SatPli { a, b } => a / b,
            ComparisonFn::PdSquared { a, b } => a / (b * b),
            ComparisonFn::Empirical { table } => match table.get(1) {
                Some((r, a)) => a * a / r,
                None => 0.0,
            },
        }
    }
}

/// One `(regret, ‖∇L‖_F)` observation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub regret: f64,
    pub grad_norm: f64,
}

impl Sample {
    pub fn new(regret: f64, grad_norm: f64) -> Self {
        Self { regret, grad_norm }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LandscapeSamples {
    pub samples: Vec<Sample>,
    /// Points dropped because they were not stabilizing (or off-domain).
    pub skipped: usize,
}

/// Regret and gradient norm at each stabilizing gain in `points`.
pub fn sample_landscape(prob: &LqrProblem, points: &[Gain]) -> Result<LandscapeSamples> {
    let opt = prob.optimum()?.loss;
    let mut out = LandscapeSamples {
        samples: Vec::with_capacity(points.len()),
        skipped: 0,
    };
    for k in points {
        match prob.loss_and_gradient(k.matrix()) {
            Ok((loss, g)) => out
                .samples
                .push(Sample::new(clamp_regret(loss - opt), g.frobenius_norm())),
            Err(Error::NotStabilizing) => out.skipped += 1,
            Err(e) => return Err(e),
        }
    }
    if out.samples.is_empty() {
        return Err(Error::EmptySample);
    }
    Ok(out)
}

/// Closed-form scalar landscapes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScalarModel {
    /// `(1+k²)/(2k)` on `k > 0`.
    CtIntegrator,
    /// Euler-discretized integrator with step `h`, on `0 < k < 2/h`.
    DtEuler { h: f64 },
}

pub fn sample_scalar_model(model: ScalarModel, ks: &[f64]) -> Result<LandscapeSamples> {
    let mut out = LandscapeSamples {
        samples: Vec::with_capacity(ks.len()),
        skipped: 0,
    };
    let opt = match model {
        ScalarModel::CtIntegrator => 1.0,
        ScalarModel::DtEuler { h } => dt_euler_optimum(h)?.1,
    };
    for &k in ks {
        let lg = match model {
            ScalarModel::CtIntegrator => ct_integrator_loss(k),
            ScalarModel::DtEuler { h } => dt_euler_loss(h, k).and_then(|l| Ok((l, dt_euler_gradient(h, k)?))),
        };
        match lg {
            Ok((l, g)) => out.samples.push(Sample::new(clamp_regret(l - opt), g.abs())),
            Err(Error::OutOfDomain(_)) => out.skipped += 1,
            Err(e) => return Err(e),
        }
    }
    if out.samples.is_empty() {
        return Err(Error::EmptySample);
    }
    Ok(out)
}

/// Samples recorded along trajectories (which must carry regrets).
pub fn samples_from_trajectories(trajs: &[Trajectory]) -> Result<LandscapeSamples> {
    let mut samples = Vec::new();
    for t in trajs {
        let regrets = t.regrets.as_ref().ok_or(Error::OptimumUnavailable)?;
        samples.extend(regrets.iter().zip(&t.grad_norms).map(|(r, g)| Sample::new(*r, *g)));
    }
    if samples.is_empty() {
        return Err(Error::EmptySample);
    }
    Ok(LandscapeSamples { samples, skipped: 0 })
}

/// Gains `[[1, x], [y, 1]]` over a square grid, the affine slice through the
/// optimum of the planar `A = 0` example.
pub fn planar_affine_slice(range: (f64, f64), n: usize) -> Vec<Gain> {
    let n = n.max(2);
    let step = (range.1 - range.0) / (n - 1) as f64;
    let mut pts = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let x = range.0 + step * i as f64;
            let y = range.0 + step * j as f64;
            pts.push(Gain::new(
                Matrix::from_rows(&[[1.0, x], [y, 1.0]]).expect("finite grid"),
            ));
        }
    }
    pts
}

/// Largest `λ` with `g² ≥ λr` over samples with `0 < r ≤ rho`.
pub fn estimate_sgl_constant(samples: &[Sample], rho: f64) -> Result<f64> {
    samples
        .iter()
        .filter(|s| s.regret > 0.0 && s.regret <= rho)
        .map(|s| s.grad_norm * s.grad_norm / s.regret)
        .fold(None, |m: Option<f64>, v| Some(m.map_or(v, |m| m.min(v))))
        .ok_or(Error::EmptySample)
}

/// Result of fitting a comparison function to samples.
#[derive(Debug, Clone, PartialEq)]
pub struct PliFit {
    pub samples: Vec<Sample>,
    pub fitted: ComparisonFn,
    pub feasible: bool,
    /// `min_s (g² − α(r)²)`.
    pub slack: f64,
}

pub const SAT_FIT_GRID_POINTS: usize = 64;
pub const SAT_FIT_SPAN: (f64, f64) = (1e-3, 1e3);

fn slack_of(samples: &[Sample], alpha: &ComparisonFn) -> f64 {
    samples
        .iter()
        .map(|s| {
            let a = alpha.eval(s.regret);
            s.grad_norm * s.grad_norm - a * a
        })
        .fold(f64::INFINITY, f64::min)
}

fn slack_tolerance(samples: &[Sample]) -> f64 {
    let gmax = samples.iter().fold(0.0f64, |m, s| m.max(s.grad_norm * s.grad_norm));
    1e-12 * (1.0 + gmax)
}

/// Fits `α(r) = √(ar/(b+r))` with the default logarithmic b-grid.
pub fn fit_sat_pli(samples: &[Sample]) -> Result<PliFit> {
    fit_sat_pli_with(samples, SAT_FIT_GRID_POINTS, SAT_FIT_SPAN)
}

/// For each `b` on a logarithmic grid spanning `span × median(r)`, the
/// largest admissible `a(b) = min_s g²(b+r)/r` is exact. The returned pair
/// maximizes `a · (a/b)`, the product of the global linear rate and the
/// local exponential rate; ties go to the larger `b`.
pub fn fit_sat_pli_with(samples: &[Sample], grid_points: usize, span: (f64, f64)) -> Result<PliFit> {
    let positive: Vec<&Sample> = samples.iter().filter(|s| s.regret > 0.0).collect();
    if positive.is_empty() {
        return Err(Error::EmptySample);
    }
    if positive.iter().all(|s| s.grad_norm == 0.0) {
        return Err(Error::Degenerate);
    }
    let median = {
        let mut rs: Vec<f64> = positive.iter().map(|s| s.regret).collect();
        rs.sort_by(|x, y| x.total_cmp(y));
        rs[rs.len() / 2]
    };
    let grid_points = grid_points.max(2);
    let (lo, hi) = (libm::log(span.0 * median), libm::log(span.1 * median));
    let mut best: Option<(f64, f64, f64)> = None;
    for i in 0..grid_points {
        let b = libm::exp(lo + (hi - lo) * i as f64 / (grid_points - 1) as f64);
        let a = positive
            .iter()
            .map(|s| s.grad_norm * s.grad_norm * (b + s.regret) / s.regret)
            .fold(f64::INFINITY, f64::min);
        let score = a * a / b;
        if best.map_or(true, |(s, _, _)| score >= s) {
            best = Some((score, a, b));
        }
    }
    let (_, a, b) = best.expect("grid is nonempty");
    let fitted = ComparisonFn::SatPli { a, b };
    let slack = slack_of(samples, &fitted);
    let feasible = a > 0.0 && slack >= -slack_tolerance(samples);
    Ok(PliFit {
        samples: samples.to_vec(),
        fitted,
        feasible,
        slack,
    })
}

/// Samples that decide each failed class.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Witnesses {
    /// Minimizer of `g²/r`.
    pub gl: Option<Sample>,
    /// Sample with the smallest sat-PLI slack.
    pub sat: Option<Sample>,
    /// Smallest gradient among the largest regrets.
    pub kinf: Option<Sample>,
    /// A sample with positive regret and zero gradient.
    pub pd: Option<Sample>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassReport {
    pub gl_feasible: bool,
    pub sat_feasible: bool,
    /// Heuristic; advisory only.
    pub kinf_feasible: bool,
    pub pd_feasible: bool,
    /// `min g²/r` over samples with `r > 0`.
    pub gl_constant: f64,
    pub sat_fit: Option<PliFit>,
    pub witnesses: Witnesses,
}

/// Threshold on `min g²/r` above which gl-PLI is declared.
pub const GL_THRESHOLD: f64 = 1e-8;
/// Gradients at or below this count as zero.
pub const ZERO_GRADIENT: f64 = 1e-12;

/// Classifies samples against the dominance hierarchy.
///
/// The 𝒦∞ flag looks at the upper half of the samples by regret: it is set
/// when the smallest gradient in the top decile of that half exceeds twice
/// the largest gradient in its bottom decile, i.e. the lower envelope is
/// still growing where regret is large.
pub fn classify(samples: &[Sample]) -> Result<ClassReport> {
    if samples.is_empty() {
        return Err(Error::EmptySample);
    }
    let mut witnesses = Witnesses::default();

    let mut gl_constant = f64::INFINITY;
    for s in samples.iter().filter(|s| s.regret > 0.0) {
        let v = s.grad_norm * s.grad_norm / s.regret;
        if v < gl_constant {
            gl_constant = v;
            witnesses.gl = Some(*s);
        }
    }
    let gl_feasible = gl_constant > GL_THRESHOLD;
    if gl_feasible {
        witnesses.gl = None;
    }

    let zero_grad = samples
        .iter()
        .find(|s| s.regret > 0.0 && s.grad_norm <= ZERO_GRADIENT);
    let pd_feasible = zero_grad.is_none();
    witnesses.pd = zero_grad.copied();

    let sat_fit = match fit_sat_pli(samples) {
        Ok(f) => Some(f),
        Err(Error::EmptySample) | Err(Error::Degenerate) => None,
        Err(e) => return Err(e),
    };
    let sat_feasible = sat_fit.as_ref().is_some_and(|f| f.feasible) && pd_feasible;
    if !sat_feasible {
        if let Some(fit) = &sat_fit {
            witnesses.sat = fit
                .samples
                .iter()
                .min_by(|x, y| {
                    let sx = x.grad_norm * x.grad_norm - libm::pow(fit.fitted.eval(x.regret), 2.0);
                    let sy = y.grad_norm * y.grad_norm - libm::pow(fit.fitted.eval(y.regret), 2.0);
                    sx.total_cmp(&sy)
                })
                .copied();
        }
    }

    let mut positive: Vec<Sample> = samples.iter().copied().filter(|s| s.regret > 0.0).collect();
    positive.sort_by(|x, y| x.regret.total_cmp(&y.regret));
    let upper = &positive[positive.len() / 2..];
    let kinf_feasible = if upper.len() >= 2 {
        let dec = (upper.len() / 10).max(1);
        let first_max = upper[..dec].iter().fold(0.0f64, |m, s| m.max(s.grad_norm));
        let last = &upper[upper.len() - dec..];
        let last_min = last
            .iter()
            .min_by(|x, y| x.grad_norm.total_cmp(&y.grad_norm))
            .copied()
            .expect("nonempty");
        let grows = last_min.grad_norm > 2.0 * first_max;
        if !grows {
            witnesses.kinf = Some(last_min);
        }
        grows && pd_feasible
    } else {
        false
    };

    Ok(ClassReport {
        gl_feasible: gl_feasible && pd_feasible,
        sat_feasible,
        kinf_feasible,
        pd_feasible,
        gl_constant,
        sat_fit,
        witnesses,
    })
}
