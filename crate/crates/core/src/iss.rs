//! Disturbance inputs and empirical input-to-state stability experiments.
//!
//! The size function throughout is the regret `L − L̲`. "limsup" is read as
//! the maximum regret over the final 10% of the horizon.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::error::{Error, Result};
use crate::flow::{integrate_flow, FlowKind, FlowSpec, FlowState, Trajectory};
use crate::lffnn::FactoredGain;
use crate::linalg::{solve_lyapunov, Matrix};
use crate::lqr::LqrProblem;

#[derive(Debug, Clone, PartialEq)]
pub enum DisturbanceKind {
    Zero,
    Constant,
    /// `sin(ω t + φ)` with angular frequency `omega`.
    Sinusoid { omega: f64, phase: f64 },
    /// Level `levels[j]` on `[switch_times[j-1], switch_times[j])`; levels lie
    /// in `[-1, 1]` and there is one more level than switch times.
    PiecewiseStep { switch_times: Vec<f64>, levels: Vec<f64> },
    /// Fresh uniform entries on every time bucket of width `bucket`, from a
    /// counter-based generator keyed on `(seed, bucket index, entry)`.
    BoundedRandom { seed: u64, bucket: f64 },
}

/// Deterministic additive disturbance `u(t)` with `‖u(t)‖ ≤ amplitude`
/// (Euclidean norm over all state entries).
#[derive(Debug, Clone, PartialEq)]
pub struct DisturbanceSpec {
    pub kind: DisturbanceKind,
    pub amplitude: f64,
    /// Block shapes matching the flow state.
    pub shape: Vec<(usize, usize)>,
    /// Unit direction for the non-random kinds; uniform when `None`.
    pub direction: Option<Vec<f64>>,
}

impl DisturbanceSpec {
    pub fn new(kind: DisturbanceKind, amplitude: f64, shape: Vec<(usize, usize)>) -> Result<Self> {
        let spec = Self {
            kind,
            amplitude,
            shape,
            direction: None,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn zero(shape: Vec<(usize, usize)>) -> Self {
        Self {
            kind: DisturbanceKind::Zero,
            amplitude: 0.0,
            shape,
            direction: None,
        }
    }

    /// Sets the direction; it is normalized to unit length.
    pub fn with_direction(mut self, dir: Vec<f64>) -> Result<Self> {
        let norm = libm::sqrt(dir.iter().map(|x| x * x).sum::<f64>());
        if dir.len() != self.dim() || !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::InvalidArgument("direction must be nonzero and match the shape".into()));
        }
        self.direction = Some(dir.into_iter().map(|x| x / norm).collect());
        Ok(self)
    }

    pub fn with_amplitude(mut self, amplitude: f64) -> Self {
        self.amplitude = amplitude;
        self
    }

    pub fn with_shape(mut self, shape: Vec<(usize, usize)>) -> Self {
        if self.direction.as_ref().is_some_and(|d| d.len() != shape.iter().map(|(r, c)| r * c).sum()) {
            self.direction = None;
        }
        self.shape = shape;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.amplitude >= 0.0 && self.amplitude.is_finite()) {
            return Err(Error::InvalidArgument("amplitude must be nonnegative".into()));
        }
        match &self.kind {
            DisturbanceKind::Sinusoid { omega, phase } if !(omega.is_finite() && phase.is_finite()) => {
                Err(Error::InvalidArgument("sinusoid parameters must be finite".into()))
            }
            DisturbanceKind::PiecewiseStep { switch_times, levels } => {
                if levels.len() != switch_times.len() + 1 {
                    return Err(Error::InvalidArgument(format!(
                        "{} switch times need {} levels",
                        switch_times.len(),
                        switch_times.len() + 1
                    )));
                }
                if switch_times.windows(2).any(|w| !(w[1] > w[0])) || switch_times.iter().any(|t| !(*t >= 0.0)) {
                    return Err(Error::InvalidArgument("switch times must be increasing".into()));
                }
                if levels.iter().any(|l| !(l.abs() <= 1.0)) {
                    return Err(Error::InvalidArgument("levels must lie in [-1, 1]".into()));
                }
                Ok(())
            }
            DisturbanceKind::BoundedRandom { bucket, .. } if !(*bucket > 0.0 && bucket.is_finite()) => {
                Err(Error::InvalidArgument("bucket width must be positive".into()))
            }
            _ => Ok(()),
        }
    }

    pub fn dim(&self) -> usize {
        self.shape.iter().map(|(r, c)| r * c).sum()
    }

    pub fn check_shape(&self, shape: &[(usize, usize)]) -> Result<()> {
        if self.shape != shape {
            return Err(Error::DimensionMismatch(format!(
                "disturbance shape {:?} does not match state {:?}",
                self.shape, shape
            )));
        }
        self.validate()
    }

    /// True when `u ≡ 0` on `[t, ∞)`.
    pub fn vanishes_after(&self, t: f64) -> bool {
        if self.amplitude == 0.0 {
            return true;
        }
        match &self.kind {
            DisturbanceKind::Zero => true,
            DisturbanceKind::PiecewiseStep { switch_times, levels } => {
                switch_times.last().map_or(true, |s| t >= *s) && levels.last() == Some(&0.0)
            }
            _ => false,
        }
    }

    fn level(&self, t: f64) -> f64 {
        match &self.kind {
            DisturbanceKind::Zero => 0.0,
            DisturbanceKind::Constant => 1.0,
            DisturbanceKind::Sinusoid { omega, phase } => libm::sin(omega * t + phase),
            DisturbanceKind::PiecewiseStep { switch_times, levels } => {
                levels[switch_times.partition_point(|s| *s <= t)]
            }
            DisturbanceKind::BoundedRandom { .. } => 1.0,
        }
    }

    /// Adds `u(t)` into `out` and returns `‖u(t)‖`.
    pub fn add_value(&self, t: f64, out: &mut [f64]) -> f64 {
        let d = out.len();
        if self.amplitude == 0.0 || d == 0 {
            return 0.0;
        }
        if let DisturbanceKind::BoundedRandom { seed, bucket } = &self.kind {
            let idx = libm::floor(t / bucket) as i64 as u64;
            let mut raw = vec![0.0; d];
            for (i, v) in raw.iter_mut().enumerate() {
                *v = uniform_pm1(*seed, idx, i as u64);
            }
            let norm = libm::sqrt(raw.iter().map(|x| x * x).sum::<f64>());
            let scale = self.amplitude / norm.max(1.0);
            for (o, v) in out.iter_mut().zip(&raw) {
                *o += scale * v;
            }
            return scale * norm;
        }
        let s = self.amplitude * self.level(t);
        if s == 0.0 {
            return 0.0;
        }
        match &self.direction {
            Some(dir) => {
                for (o, v) in out.iter_mut().zip(dir) {
                    *o += s * v;
                }
            }
            None => {
                let v = s / libm::sqrt(d as f64);
                out.iter_mut().for_each(|o| *o += v);
            }
        }
        s.abs()
    }

    /// `u(t)` as one matrix per state block.
    pub fn value(&self, t: f64) -> Vec<Matrix> {
        let mut flat = vec![0.0; self.dim()];
        self.add_value(t, &mut flat);
        let mut off = 0;
        self.shape
            .iter()
            .map(|&(r, c)| {
                let m = Matrix::new(r, c, flat[off..off + r * c].to_vec()).expect("finite");
                off += r * c;
                m
            })
            .collect()
    }

    /// Variant `p` of this template: shifted sinusoid phase or reseeded noise.
    pub fn phase_variant(&self, p: usize, of: usize) -> Self {
        let mut out = self.clone();
        match &mut out.kind {
            DisturbanceKind::Sinusoid { phase, .. } => *phase += 2.0 * PI * p as f64 / of.max(1) as f64,
            DisturbanceKind::BoundedRandom { seed, .. } => *seed = seed.wrapping_add(p as u64),
            _ => {}
        }
        out
    }
}

/// `u(t)` for one spec, one matrix per state block.
pub fn disturbance_value(spec: &DisturbanceSpec, t: f64) -> Vec<Matrix> {
    spec.value(t)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn uniform_pm1(seed: u64, bucket: u64, entry: u64) -> f64 {
    let h = splitmix64(splitmix64(splitmix64(seed) ^ bucket) ^ entry);
    // 53 random mantissa bits in [0, 1)
    let u = (h >> 11) as f64 / (1u64 << 53) as f64;
    2.0 * u - 1.0
}

/// Horizon `200/σ` capped at `10⁴`, where `σ = 1/(2λ_max(Y))` and `Y` is the
/// closed-loop covariance at the optimum (exact for scalar plants, a lower
/// bound on the slowest decay rate otherwise).
pub fn default_horizon(prob: &LqrProblem) -> Result<f64> {
    let opt = prob.optimum()?;
    let closed = prob.closed_loop_matrix(opt.k_opt())?;
    let y = solve_lyapunov(&closed.transpose(), &Matrix::identity(prob.state_dim()))?;
    let sigma = 1.0 / (2.0 * y.sym_max_eigenvalue());
    Ok((200.0 / sigma).min(1e4))
}

/// Descriptive statistics of the regret along one run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OvershootReport {
    pub peak: f64,
    /// First recorded time with regret ≤ ω₀/2.
    pub time_to_half: Option<f64>,
    /// Max regret over the final 10% of the recorded time span.
    pub tail: f64,
}

fn tail_max(traj: &Trajectory, regrets: &[f64]) -> f64 {
    let t_end = *traj.times.last().expect("nonempty");
    let from = 0.9 * t_end;
    traj.times
        .iter()
        .zip(regrets)
        .filter(|(t, _)| **t >= from)
        .fold(0.0f64, |m, (_, r)| m.max(*r))
}

pub fn overshoot_report(traj: &Trajectory, omega0: f64) -> Result<OvershootReport> {
    let regrets = traj.regrets.as_ref().ok_or(Error::OptimumUnavailable)?;
    let peak = regrets.iter().fold(0.0f64, |m, r| m.max(*r));
    let time_to_half = traj
        .times
        .iter()
        .zip(regrets)
        .find(|(_, r)| **r <= 0.5 * omega0)
        .map(|(t, _)| *t);
    Ok(OvershootReport {
        peak,
        time_to_half,
        tail: tail_max(traj, regrets),
    })
}

/// Parameters shared by every run of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub kind: FlowKind,
    /// Disturbance amplitudes δ; must include 0.
    pub amplitudes: Vec<f64>,
    /// Disturbance template; its amplitude and shape are overwritten.
    pub template: DisturbanceSpec,
    /// Number of phase variants per (δ, init).
    pub phases: usize,
    pub horizon: f64,
    pub samples: usize,
}

/// One (δ, init, phase) run of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepJob {
    pub delta: f64,
    pub init_id: usize,
    pub phase_id: usize,
    pub init: FlowState,
    pub spec: FlowSpec,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub delta: f64,
    pub init_id: usize,
    pub phase_id: usize,
    /// Max regret over the run (∞ if the run left the domain).
    pub overshoot: f64,
    /// Max regret over the final 10% of the horizon (∞ if the run left the domain).
    pub tail: f64,
    pub left_domain: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GainSweepReport {
    /// Ordered by (δ, init id, phase id).
    pub rows: Vec<SweepRow>,
    /// `γ̂(δ)`: max tail over inits and phases, destabilized runs excluded.
    pub gain_curve: Vec<(f64, f64)>,
    pub destabilized: usize,
}

impl GainSweepReport {
    /// Assembles a report from rows in any order.
    pub fn from_rows(mut rows: Vec<SweepRow>) -> Self {
        rows.sort_by(|x, y| {
            x.delta
                .total_cmp(&y.delta)
                .then(x.init_id.cmp(&y.init_id))
                .then(x.phase_id.cmp(&y.phase_id))
        });
        let mut gain_curve: Vec<(f64, f64)> = Vec::new();
        for r in &rows {
            if gain_curve.last().map_or(true, |(d, _)| *d != r.delta) {
                gain_curve.push((r.delta, 0.0));
            }
            if !r.left_domain {
                let last = gain_curve.last_mut().expect("pushed");
                last.1 = last.1.max(r.tail);
            }
        }
        let destabilized = rows.iter().filter(|r| r.left_domain).count();
        Self {
            rows,
            gain_curve,
            destabilized,
        }
    }
}

/// Expands a sweep into independent jobs, ordered by (δ, init, phase).
pub fn sweep_jobs(prob: &LqrProblem, inits: &[FlowState], cfg: &SweepConfig) -> Result<Vec<SweepJob>> {
    prob.optimum()?;
    if inits.is_empty() {
        return Err(Error::InvalidArgument("sweep needs at least one init".into()));
    }
    let mut amps = cfg.amplitudes.clone();
    if amps.iter().any(|a| !(*a >= 0.0 && a.is_finite())) {
        return Err(Error::InvalidArgument("amplitudes must be nonnegative".into()));
    }
    amps.sort_by(|a, b| a.total_cmp(b));
    amps.dedup();
    if amps.first() != Some(&0.0) {
        return Err(Error::InvalidArgument("amplitudes must include 0".into()));
    }
    for (i, init) in inits.iter().enumerate() {
        if crate::flow::domain_guard(prob, init) == crate::flow::GuardDecision::Reject {
            return Err(Error::PreconditionViolated(vec![i]));
        }
    }
    let phases = cfg.phases.max(1);
    let mut jobs = Vec::new();
    for &delta in &amps {
        for (init_id, init) in inits.iter().enumerate() {
            for phase_id in 0..phases {
                let dist = cfg
                    .template
                    .phase_variant(phase_id, phases)
                    .with_shape(init.shape())
                    .with_amplitude(delta);
                let spec = FlowSpec::new(cfg.kind, cfg.horizon)
                    .with_samples(cfg.samples)
                    .with_disturbance(dist);
                jobs.push(SweepJob {
                    delta,
                    init_id,
                    phase_id,
                    init: init.clone(),
                    spec,
                });
            }
        }
    }
    Ok(jobs)
}

impl SweepJob {
    /// Runs the job; leaving the domain becomes a row flag.
    pub fn run(&self, prob: &LqrProblem) -> Result<SweepRow> {
        let row = |overshoot, tail, left_domain| SweepRow {
            delta: self.delta,
            init_id: self.init_id,
            phase_id: self.phase_id,
            overshoot,
            tail,
            left_domain,
        };
        match integrate_flow(prob, &self.init, &self.spec) {
            Ok(traj) => {
                let regrets = traj.regrets.as_ref().ok_or(Error::OptimumUnavailable)?;
                let overshoot = regrets.iter().fold(0.0f64, |m, r| m.max(*r));
                // tail window is anchored to the requested horizon; a run that
                // stopped early has converged and its last sample is the limit
                let from = 0.9 * self.spec.t_max;
                let tail = traj
                    .times
                    .iter()
                    .zip(regrets)
                    .filter(|(t, _)| **t >= from)
                    .fold(None, |m: Option<f64>, (_, r)| Some(m.map_or(*r, |m| m.max(*r))))
                    .unwrap_or_else(|| *regrets.last().expect("nonempty"));
                Ok(row(overshoot, tail, false))
            }
            Err(Error::LeftDomain { .. }) | Err(Error::NotStabilizing) => {
                Ok(row(f64::INFINITY, f64::INFINITY, true))
            }
            Err(e) => Err(e),
        }
    }
}

/// Runs every job of the sweep sequentially.
pub fn gain_sweep(prob: &LqrProblem, inits: &[FlowState], cfg: &SweepConfig) -> Result<GainSweepReport> {
    let rows = sweep_jobs(prob, inits, cfg)?
        .iter()
        .map(|j| j.run(prob))
        .collect::<Result<Vec<_>>>()?;
    Ok(GainSweepReport::from_rows(rows))
}

/// Asymptotic-gain experiment for the scalar two-factor network.
#[derive(Debug, Clone, PartialEq)]
pub struct AsymptoticGainReport {
    /// `(δ, ε̂(δ))`, with ε̂ the max tail regret of the product gain.
    pub table: Vec<(f64, f64)>,
    /// `‖k₁(0) + k₂(0)ᵀ‖ − 2√max(a, 0)` per init.
    pub margins: Vec<f64>,
    pub sweep: GainSweepReport,
}

/// `‖k₁(0) + k₂(0)ᵀ‖ − 2√max(a, 0)` per init of a scalar plant with N = 2
/// factors of hidden width `kappa`. Inits that are not strictly positive or
/// not stabilizing are reported together.
pub fn manifold_margins(prob: &LqrProblem, kappa: usize, inits: &[FactoredGain]) -> Result<Vec<f64>> {
    let a = match prob.a().as_scalar() {
        Some(a) if prob.b().as_scalar() == Some(1.0) => a,
        _ => return Err(Error::InvalidArgument("manifold margins need a scalar plant with b = 1".into())),
    };
    let a_plus = a.max(0.0);
    let mut margins = Vec::with_capacity(inits.len());
    let mut bad = Vec::new();
    for (i, fg) in inits.iter().enumerate() {
        let fs = fg.factors();
        if fs.len() != 2 || fs[0].shape() != (kappa, 1) || fs[1].shape() != (1, kappa) {
            return Err(Error::DimensionMismatch(format!(
                "init {i} must be a {kappa}x1 and a 1x{kappa} factor"
            )));
        }
        let sum = fs[0].add(&fs[1].transpose())?;
        let margin = sum.frobenius_norm() - 2.0 * libm::sqrt(a_plus);
        if !(margin > 0.0) || !fg.stabilizes(prob) {
            bad.push(i);
        }
        margins.push(margin);
    }
    if !bad.is_empty() {
        return Err(Error::PreconditionViolated(bad));
    }
    Ok(margins)
}

/// Scalar plant `ẋ = ax + u`, costs `q`, `r`, N = 2 factors of hidden width
/// `kappa`. Every init must clear the manifold margin.
pub fn lffnn_asymptotic_gain(
    a: f64,
    q: f64,
    r: f64,
    kappa: usize,
    inits: &[FactoredGain],
    cfg: &SweepConfig,
) -> Result<AsymptoticGainReport> {
    let prob = LqrProblem::scalar(a, 1.0, q, r)?;
    let margins = manifold_margins(&prob, kappa, inits)?;
    let states: Vec<FlowState> = inits.iter().cloned().map(FlowState::Factored).collect();
    let cfg = SweepConfig {
        kind: FlowKind::Factored,
        ..cfg.clone()
    };
    let sweep = gain_sweep(&prob, &states, &cfg)?;
    Ok(AsymptoticGainReport {
        table: sweep.gain_curve.clone(),
        margins,
        sweep,
    })
}
