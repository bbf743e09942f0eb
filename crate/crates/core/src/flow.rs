//! Gradient-type flows on the stabilizing set.
//!
//! All four flow kinds share one integration loop: the state is packed into a
//! flat vector, the direction field is evaluated through the LQR objective,
//! and the domain guard rejects any stage whose closed loop is not Hurwitz.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::iss::DisturbanceSpec;
use crate::lffnn::{factored_loss_and_gradient, imbalance, FactoredGain};
use crate::linalg::{is_hurwitz, Matrix};
use crate::lqr::{Gain, LqrProblem};
use crate::ode::{integrate, uniform_grid, Control, OdeOptions};
use crate::pli::ComparisonFn;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FlowKind {
    /// `k̇ = −η·2(Rk − BᵀP)Y`
    Gradient,
    /// `k̇ = −η·2(Rk − BᵀP)`
    Natural,
    /// `k̇ = −η(k − R⁻¹BᵀP)`
    GaussNewton,
    /// `k̇_i = −η∇_{k_i}L(k_N⋯k_1)`
    Factored,
}

impl FlowKind {
    pub fn name(self) -> &'static str {
        match self {
            FlowKind::Gradient => "gradient",
            FlowKind::Natural => "natural",
            FlowKind::GaussNewton => "gauss_newton",
            FlowKind::Factored => "factored",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowSpec {
    pub kind: FlowKind,
    /// Learning rate.
    pub eta: f64,
    /// Additive input `u(t)`, entering with identity gain.
    pub disturbance: Option<DisturbanceSpec>,
    /// Stop once `‖∇L‖_F` falls to this value (0 disables early stopping).
    pub stop_grad_tol: f64,
    pub t_max: f64,
    /// Number of points of the output grid on `[0, t_max]`.
    pub samples: usize,
    pub rtol: f64,
    pub atol: f64,
}

impl FlowSpec {
    pub fn new(kind: FlowKind, t_max: f64) -> Self {
        Self {
            kind,
            eta: 1.0,
            disturbance: None,
            stop_grad_tol: 1e-9,
            t_max,
            samples: 400,
            rtol: 1e-8,
            atol: 1e-10,
        }
    }

    pub fn with_eta(mut self, eta: f64) -> Self {
        self.eta = eta;
        self
    }

    pub fn with_disturbance(mut self, d: DisturbanceSpec) -> Self {
        self.disturbance = Some(d);
        self
    }

    pub fn with_stop_grad_tol(mut self, tol: f64) -> Self {
        self.stop_grad_tol = tol;
        self
    }

    pub fn with_samples(mut self, n: usize) -> Self {
        self.samples = n;
        self
    }

    pub fn with_tolerances(mut self, rtol: f64, atol: f64) -> Self {
        self.rtol = rtol;
        self.atol = atol;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rtol > 0.0 && self.atol > 0.0) {
            return Err(Error::InvalidArgument("tolerances must be positive".into()));
        }
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::InvalidArgument("eta must be positive".into()));
        }
        if !(self.t_max > 0.0 && self.t_max.is_finite()) {
            return Err(Error::InvalidArgument("t_max must be positive".into()));
        }
        if self.samples < 2 {
            return Err(Error::InvalidArgument("need at least 2 output samples".into()));
        }
        if !(self.stop_grad_tol >= 0.0) {
            return Err(Error::InvalidArgument("stop_grad_tol must be nonnegative".into()));
        }
        Ok(())
    }
}

/// A plain or factored gain.
#[derive(Debug, Clone, PartialEq)]
pub enum FlowState {
    Plain(Gain),
    Factored(FactoredGain),
}

impl From<Gain> for FlowState {
    fn from(g: Gain) -> Self {
        FlowState::Plain(g)
    }
}

impl From<FactoredGain> for FlowState {
    fn from(g: FactoredGain) -> Self {
        FlowState::Factored(g)
    }
}

impl FlowState {
    /// The gain actually applied to the plant.
    pub fn effective_gain(&self) -> Gain {
        match self {
            FlowState::Plain(g) => g.clone(),
            FlowState::Factored(f) => f.product(),
        }
    }

    /// Matrix shapes of the state blocks, in packing order.
    pub fn shape(&self) -> Vec<(usize, usize)> {
        match self {
            FlowState::Plain(g) => vec![g.matrix().shape()],
            FlowState::Factored(f) => f.factors().iter().map(|m| m.shape()).collect(),
        }
    }

    fn pack(&self) -> Vec<f64> {
        match self {
            FlowState::Plain(g) => g.matrix().as_slice().to_vec(),
            FlowState::Factored(f) => f
                .factors()
                .iter()
                .flat_map(|m| m.as_slice().iter().copied())
                .collect(),
        }
    }

    fn unpack_like(&self, y: &[f64]) -> Result<FlowState> {
        let mut blocks = Vec::new();
        let mut off = 0;
        for (r, c) in self.shape() {
            blocks.push(Matrix::new(r, c, y[off..off + r * c].to_vec())?);
            off += r * c;
        }
        Ok(match self {
            FlowState::Plain(_) => FlowState::Plain(Gain::new(blocks.pop().expect("one block"))),
            FlowState::Factored(_) => FlowState::Factored(FactoredGain::new(blocks)?),
        })
    }
}

/// Time-stamped record of one flow run on the output grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub kind: FlowKind,
    pub times: Vec<f64>,
    pub states: Vec<FlowState>,
    pub losses: Vec<f64>,
    /// Present when the problem carries its Riccati optimum.
    pub regrets: Option<Vec<f64>>,
    /// `‖∇L‖_F` (all factors together for factored flows).
    pub grad_norms: Vec<f64>,
    /// Imbalance measures `c_i` per snapshot, factored flows only.
    pub imbalances: Option<Vec<Vec<f64>>>,
    /// Running supremum of `‖u‖` up to each snapshot.
    pub disturbance_norms: Vec<f64>,
    /// Realized `sup ‖u(t)‖` over the whole run.
    pub disturbance_sup: f64,
    pub stopped_early: bool,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn final_state(&self) -> &FlowState {
        self.states.last().expect("trajectory has at least the initial state")
    }

    pub fn final_loss(&self) -> f64 {
        *self.losses.last().expect("nonempty")
    }

    pub fn final_regret(&self) -> Option<f64> {
        self.regrets.as_ref().and_then(|r| r.last().copied())
    }

    pub fn final_grad_norm(&self) -> f64 {
        *self.grad_norms.last().expect("nonempty")
    }
}

/// Outcome of the domain check on a candidate state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GuardDecision {
    Accept,
    Reject,
}

/// Accepts a candidate iff `A − B·k̂` is Hurwitz, where `k̂` is the gain or
/// the product of the factors.
pub fn domain_guard(prob: &LqrProblem, candidate: &FlowState) -> GuardDecision {
    let k = candidate.effective_gain();
    match prob.closed_loop_matrix(k.matrix()) {
        Ok(m) if is_hurwitz(&m) => GuardDecision::Accept,
        _ => GuardDecision::Reject,
    }
}

struct Probe {
    loss: f64,
    grad_norm: f64,
}

/// Direction field `d` (flow is `−η d + u`) and the true gradient norm.
fn direction(
    prob: &LqrProblem,
    kind: FlowKind,
    state: &FlowState,
    need_grad: bool,
) -> Result<(Vec<f64>, Probe)> {
    match (kind, state) {
        (FlowKind::Factored, FlowState::Factored(fg)) => {
            let (loss, grads) = factored_loss_and_gradient(prob, fg)?;
            let d: Vec<f64> = grads.iter().flat_map(|g| g.as_slice().iter().copied()).collect();
            let grad_norm = libm::sqrt(d.iter().map(|x| x * x).sum());
            Ok((d, Probe { loss, grad_norm }))
        }
        (FlowKind::Gradient, FlowState::Plain(g)) => {
            let (loss, grad) = prob.loss_and_gradient(g.matrix())?;
            let grad_norm = grad.frobenius_norm();
            Ok((grad.into_vec(), Probe { loss, grad_norm }))
        }
        (FlowKind::Natural, FlowState::Plain(g)) | (FlowKind::GaussNewton, FlowState::Plain(g)) => {
            let d = if kind == FlowKind::Natural {
                prob.natural_gradient_direction(g.matrix())?
            } else {
                prob.gauss_newton_direction(g.matrix())?
            };
            let (loss, grad_norm) = if need_grad {
                let (l, grad) = prob.loss_and_gradient(g.matrix())?;
                (l, grad.frobenius_norm())
            } else {
                (f64::NAN, f64::NAN)
            };
            Ok((d.into_vec(), Probe { loss, grad_norm }))
        }
        _ => Err(Error::InvalidArgument(
            "factored flows need a factored init and vice versa".into(),
        )),
    }
}

fn snapshot_probe(prob: &LqrProblem, state: &FlowState) -> Result<Probe> {
    match state {
        FlowState::Plain(g) => {
            let (loss, grad) = prob.loss_and_gradient(g.matrix())?;
            Ok(Probe {
                loss,
                grad_norm: grad.frobenius_norm(),
            })
        }
        FlowState::Factored(_) => Ok(direction(prob, FlowKind::Factored, state, true)?.1),
    }
}

/// Checks everything [`integrate_flow`] requires before it starts.
pub fn check_flow_inputs(prob: &LqrProblem, init: &FlowState, spec: &FlowSpec) -> Result<()> {
    spec.validate()?;
    match (spec.kind, init) {
        (FlowKind::Factored, FlowState::Factored(_)) => {}
        (FlowKind::Factored, _) | (_, FlowState::Factored(_)) => {
            return Err(Error::InvalidArgument(
                "factored flows need a factored init and vice versa".into(),
            ))
        }
        _ => {}
    }

    let k0 = init.effective_gain();
    if k0.matrix().shape() != (prob.input_dim(), prob.state_dim()) {
        return Err(Error::DimensionMismatch("initial gain does not fit the problem".into()));
    }
    if domain_guard(prob, init) == GuardDecision::Reject {
        return Err(Error::NotStabilizing);
    }
    if let Some(d) = &spec.disturbance {
        d.check_shape(&init.shape())?;
    }
    Ok(())
}

/// Integrates the selected flow from `init` on a uniform output grid.
///
/// The Dormand–Prince pair runs at `spec.rtol`/`spec.atol`. Stages outside
/// the stabilizing set are rejected by halving the step; 40 consecutive
/// halvings raise [`Error::LeftDomain`]. Early stopping on the gradient
/// norm is only active while the disturbance is identically zero.
pub fn integrate_flow(prob: &LqrProblem, init: &FlowState, spec: &FlowSpec) -> Result<Trajectory> {
    check_flow_inputs(prob, init, spec)?;

    let y0 = init.pack();
    let dim = y0.len();
    let grid = uniform_grid(spec.t_max, spec.samples);
    let opts = OdeOptions {
        rtol: spec.rtol,
        atol: spec.atol,
        ..OdeOptions::default()
    };
    let eta = spec.eta;
    let kind = spec.kind;
    let disturbance = spec.disturbance.as_ref();
    let u_sup = core::cell::Cell::new(0.0f64);

    let rhs = |t: f64, y: &[f64], dy: &mut [f64]| -> bool {
        let Ok(state) = init.unpack_like(y) else {
            return false;
        };
        match direction(prob, kind, &state, false) {
            Ok((d, _)) => {
                for (o, di) in dy.iter_mut().zip(&d) {
                    *o = -eta * di;
                }
                if let Some(dist) = disturbance {
                    let n = dist.add_value(t, dy);
                    if n > u_sup.get() {
                        u_sup.set(n);
                    }
                }
                true
            }
            Err(_) => false,
        }
    };

    let mut times = Vec::with_capacity(spec.samples + 1);
    let mut states = Vec::with_capacity(spec.samples + 1);
    let mut losses = Vec::with_capacity(spec.samples + 1);
    let mut grad_norms = Vec::with_capacity(spec.samples + 1);
    let mut u_norms = Vec::with_capacity(spec.samples + 1);
    let mut failure: Option<Error> = None;
    let stop_tol = spec.stop_grad_tol;
    let mut u_buf = vec![0.0; dim];

    let observer = |t: f64, y: &[f64], dy: &[f64], on_grid: bool| -> Control {
        let quiet = disturbance.map_or(true, |d| d.vanishes_after(t));
        let want_stop = stop_tol > 0.0 && quiet;
        if !on_grid && !want_stop {
            return Control::Continue;
        }
        let state = match init.unpack_like(y) {
            Ok(s) => s,
            Err(e) => {
                failure = Some(e);
                return Control::Stop;
            }
        };
        let mut stop = false;
        if want_stop {
            let gnorm = match kind {
                FlowKind::Gradient | FlowKind::Factored => {
                    // dy = −η∇L + u(t), and u vanishes here
                    libm::sqrt(dy.iter().map(|x| x * x).sum::<f64>()) / eta
                }
                _ => match snapshot_probe(prob, &state) {
                    Ok(p) => p.grad_norm,
                    Err(e) => {
                        failure = Some(e);
                        return Control::Stop;
                    }
                },
            };
            stop = gnorm <= stop_tol;
        }
        if on_grid || stop {
            match snapshot_probe(prob, &state) {
                Ok(p) => {
                    times.push(t);
                    losses.push(p.loss);
                    grad_norms.push(p.grad_norm);
                    states.push(state);
                    if let Some(d) = disturbance {
                        u_buf.iter_mut().for_each(|v| *v = 0.0);
                        let n = d.add_value(t, &mut u_buf);
                        if n > u_sup.get() {
                            u_sup.set(n);
                        }
                    }
                    u_norms.push(u_sup.get());
                }
                Err(e) => {
                    failure = Some(e);
                    return Control::Stop;
                }
            }
        }
        if stop {
            Control::Stop
        } else {
            Control::Continue
        }
    };

    let end = integrate(&opts, rhs, &y0, &grid, observer)?;
    if let Some(e) = failure {
        return Err(e);
    }

    let regrets = if prob.has_optimum() {
        Some(
            losses
                .iter()
                .map(|l| prob.regret_of_loss(*l))
                .collect::<Result<Vec<_>>>()?,
        )
    } else {
        None
    };
    let imbalances = match init {
        FlowState::Factored(_) => Some(
            states
                .iter()
                .map(|s| match s {
                    FlowState::Factored(f) => imbalance(f).measures,
                    FlowState::Plain(_) => Vec::new(),
                })
                .collect(),
        ),
        FlowState::Plain(_) => None,
    };
    Ok(Trajectory {
        kind,
        times,
        states,
        losses,
        regrets,
        grad_norms,
        imbalances,
        disturbance_norms: u_norms,
        disturbance_sup: u_sup.get(),
        stopped_early: end.stopped,
    })
}

/// Solution `r(t)` of the comparison equation `ṙ = −α(r)²`, `r(0) = ell0`, on
/// `t_grid` (which must start at 0).
///
/// The gl-PLI case `α(r) = √(λr)` is returned in closed form `e^{−λt}ell0`.
pub fn comparison_bound(alpha: &ComparisonFn, ell0: f64, t_grid: &[f64]) -> Result<Vec<f64>> {
    if !(ell0 >= 0.0) || !ell0.is_finite() {
        return Err(Error::InvalidArgument("ell0 must be nonnegative".into()));
    }
    if t_grid.first() != Some(&0.0) {
        return Err(Error::InvalidArgument("t_grid must start at 0".into()));
    }
    if ell0 == 0.0 {
        return Ok(vec![0.0; t_grid.len()]);
    }
    if let ComparisonFn::GlPli { lambda } = alpha {
        return Ok(t_grid.iter().map(|t| libm::exp(-lambda * t) * ell0).collect());
    }
    if t_grid.len() == 1 {
        return Ok(vec![ell0]);
    }
    let opts = OdeOptions {
        rtol: 1e-11,
        atol: 1e-300_f64.max(ell0 * 1e-24),
        ..OdeOptions::default()
    };
    let mut out = Vec::with_capacity(t_grid.len());
    integrate(
        &opts,
        |_, y, dy| {
            let r = y[0].max(0.0);
            let a = alpha.eval(r);
            dy[0] = -a * a;
            true
        },
        &[ell0],
        t_grid,
        |_, y, _, on_grid| {
            if on_grid {
                out.push(y[0].max(0.0));
            }
            Control::Continue
        },
    )?;
    Ok(out)
}
