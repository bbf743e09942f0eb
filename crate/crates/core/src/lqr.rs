//! Continuous-time LQR policy-optimization objective.
//!
//! For a stabilizing gain `k` the closed loop `A − Bk` has cost matrix
//! `P` solving `(A−Bk)ᵀP + P(A−Bk) + Q + kᵀRk = 0` and state covariance `Y`
//! solving `(A−Bk)Y + Y(A−Bk)ᵀ + Σ₀ = 0`. The loss is `tr(PΣ₀)` and its
//! gradient `2(Rk − BᵀP)Y`.

use alloc::format;

use crate::error::{Error, Result};
use crate::linalg::{is_hurwitz, solve_lyapunov, solve_riccati, Matrix, RiccatiSolution};

/// Regrets at or below this value are reported as exactly zero.
pub const REGRET_FLOOR: f64 = 1e-12;

/// Feedback gain `u = −k x`, an m×n matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Gain(Matrix);

impl Gain {
    pub fn new(k: Matrix) -> Self {
        Self(k)
    }

    pub fn scalar(k: f64) -> Self {
        Self(Matrix::scalar(k))
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix {
        self.0
    }

    pub fn stabilizes(&self, prob: &LqrProblem) -> bool {
        prob.is_stabilizing(&self.0)
    }
}

impl From<Matrix> for Gain {
    fn from(k: Matrix) -> Self {
        Self(k)
    }
}

impl AsRef<Matrix> for Gain {
    fn as_ref(&self) -> &Matrix {
        &self.0
    }
}

/// Riccati ground truth cached on a problem.
#[derive(Debug, Clone, PartialEq)]
pub struct Optimum {
    pub riccati: RiccatiSolution,
    /// Minimal loss `tr(πΣ₀)`.
    pub loss: f64,
}

impl Optimum {
    pub fn k_opt(&self) -> &Matrix {
        &self.riccati.k_opt
    }
}

/// The tuple (A, B, Q, R, Σ₀), plus the optimum once it has been computed.
#[derive(Debug, Clone, PartialEq)]
pub struct LqrProblem {
    a: Matrix,
    b: Matrix,
    q: Matrix,
    r: Matrix,
    sigma0: Matrix,
    optimum: Option<Optimum>,
}

/// Closed-loop quantities at one gain.
#[derive(Debug, Clone)]
pub struct ClosedLoop {
    /// `A − Bk`.
    pub matrix: Matrix,
    /// Cost matrix `P`.
    pub p: Matrix,
    pub loss: f64,
}

impl LqrProblem {
    /// New problem with `Σ₀ = I`.
    pub fn new(a: Matrix, b: Matrix, q: Matrix, r: Matrix) -> Result<Self> {
        let n = a.rows();
        if !a.is_square() {
            return Err(Error::DimensionMismatch("A must be square".into()));
        }
        if !r.is_square() {
            return Err(Error::DimensionMismatch("R must be square".into()));
        }
        if b.shape() != (n, r.rows()) {
            return Err(Error::DimensionMismatch(format!(
                "B must be {}x{}, got {}x{}",
                n,
                r.rows(),
                b.rows(),
                b.cols()
            )));
        }
        if q.shape() != (n, n) {
            return Err(Error::DimensionMismatch(format!("Q must be {n}x{n}")));
        }
        if !q.is_positive_definite() {
            return Err(Error::InvalidArgument("Q must be symmetric positive definite".into()));
        }
        if !r.is_positive_definite() {
            return Err(Error::InvalidArgument("R must be symmetric positive definite".into()));
        }
        Ok(Self {
            a,
            b,
            q,
            r,
            sigma0: Matrix::identity(n),
            optimum: None,
        })
    }

    pub fn with_sigma0(mut self, sigma0: Matrix) -> Result<Self> {
        if sigma0.shape() != self.a.shape() {
            return Err(Error::DimensionMismatch("Sigma0 must match A".into()));
        }
        if !sigma0.is_positive_definite() {
            return Err(Error::InvalidArgument(
                "Sigma0 must be symmetric positive definite".into(),
            ));
        }
        self.sigma0 = sigma0;
        self.optimum = None;
        Ok(self)
    }

    /// Solves the Riccati equation from `seed` (see [`solve_riccati`]) and
    /// caches the optimum for regret computations.
    pub fn with_optimum(mut self, seed: Option<&Matrix>) -> Result<Self> {
        let riccati = solve_riccati(&self.a, &self.b, &self.q, &self.r, seed)?;
        let loss = riccati.pi.matmul(&self.sigma0)?.trace();
        self.optimum = Some(Optimum { riccati, loss });
        Ok(self)
    }

    /// Scalar plant `ẋ = a x + b u` with costs `q`, `r`, optimum attached.
    pub fn scalar(a: f64, b: f64, q: f64, r: f64) -> Result<Self> {
        if b == 0.0 {
            return Err(Error::InvalidArgument("b must be nonzero".into()));
        }
        let seed = Matrix::scalar((a + 1.0) / b);
        Self::new(
            Matrix::scalar(a),
            Matrix::scalar(b),
            Matrix::scalar(q),
            Matrix::scalar(r),
        )?
        .with_optimum(Some(&seed))
    }

    /// `ẋ = u`, `q = r = 1`: optimum `k = 1`, loss `1`.
    pub fn integrator() -> Self {
        Self::scalar(0.0, 1.0, 1.0, 1.0).expect("integrator is well posed")
    }

    /// `A = 0₂`, `B = Q = R = I₂`: optimum `k = I`.
    pub fn planar_zero() -> Self {
        let i = Matrix::identity(2);
        Self::new(Matrix::zeros(2, 2), i.clone(), i.clone(), i.clone())
            .and_then(|p| p.with_optimum(Some(&i)))
            .expect("planar example is well posed")
    }

    pub fn state_dim(&self) -> usize {
        self.a.rows()
    }

    pub fn input_dim(&self) -> usize {
        self.r.rows()
    }

    pub fn a(&self) -> &Matrix {
        &self.a
    }

    pub fn b(&self) -> &Matrix {
        &self.b
    }

    pub fn q(&self) -> &Matrix {
        &self.q
    }

    pub fn r(&self) -> &Matrix {
        &self.r
    }

    pub fn sigma0(&self) -> &Matrix {
        &self.sigma0
    }

    pub fn optimum(&self) -> Result<&Optimum> {
        self.optimum.as_ref().ok_or(Error::OptimumUnavailable)
    }

    pub fn has_optimum(&self) -> bool {
        self.optimum.is_some()
    }

    fn check_gain(&self, k: &Matrix) -> Result<()> {
        if k.shape() != (self.input_dim(), self.state_dim()) {
            return Err(Error::DimensionMismatch(format!(
                "gain must be {}x{}, got {}x{}",
                self.input_dim(),
                self.state_dim(),
                k.rows(),
                k.cols()
            )));
        }
        Ok(())
    }

    /// `A − Bk`.
    pub fn closed_loop_matrix(&self, k: &Matrix) -> Result<Matrix> {
        self.check_gain(k)?;
        self.a.sub(&self.b.matmul(k)?)
    }

    pub fn is_stabilizing(&self, k: &Matrix) -> bool {
        self.closed_loop_matrix(k)
            .map(|m| is_hurwitz(&m))
            .unwrap_or(false)
    }

    /// Solves the cost Lyapunov equation at `k`.
    ///
    /// `Q + kᵀRk` is positive definite, so `P` is positive definite exactly
    /// when `A − Bk` is Hurwitz; the certification reuses this solve instead
    /// of a separate one with `W = I`.
    pub fn closed_loop(&self, k: &Matrix) -> Result<ClosedLoop> {
        let matrix = self.closed_loop_matrix(k)?;
        let w = self.q.add(&k.transpose().matmul(&self.r.matmul(k)?)?)?;
        let p = match solve_lyapunov(&matrix, &w) {
            Ok(p) => p,
            Err(Error::SingularSystem) => return Err(Error::NotStabilizing),
            Err(e) => return Err(e),
        };
        if p.cholesky().is_none() {
            return Err(Error::NotStabilizing);
        }
        let loss = p.matmul(&self.sigma0)?.trace();
        Ok(ClosedLoop { matrix, p, loss })
    }

    /// State covariance `Y` with `(A−Bk)Y + Y(A−Bk)ᵀ + Σ₀ = 0`.
    pub fn state_covariance(&self, cl: &ClosedLoop) -> Result<Matrix> {
        solve_lyapunov(&cl.matrix.transpose(), &self.sigma0).map_err(|_| Error::NotStabilizing)
    }

    /// `Rk − BᵀP`.
    fn policy_residual(&self, k: &Matrix, cl: &ClosedLoop) -> Result<Matrix> {
        self.r.matmul(k)?.sub(&self.b.transpose().matmul(&cl.p)?)
    }

    pub fn loss(&self, k: &Matrix) -> Result<f64> {
        Ok(self.closed_loop(k)?.loss)
    }

    pub fn gradient(&self, k: &Matrix) -> Result<Matrix> {
        Ok(self.loss_and_gradient(k)?.1)
    }

    pub fn loss_and_gradient(&self, k: &Matrix) -> Result<(f64, Matrix)> {
        let cl = self.closed_loop(k)?;
        let y = self.state_covariance(&cl)?;
        let g = self.policy_residual(k, &cl)?.matmul(&y)?.scale(2.0);
        Ok((cl.loss, g))
    }

    /// `2(Rk − BᵀP)`, the gradient with the state covariance factored out.
    pub fn natural_gradient_direction(&self, k: &Matrix) -> Result<Matrix> {
        let cl = self.closed_loop(k)?;
        Ok(self.policy_residual(k, &cl)?.scale(2.0))
    }

    /// `k − R⁻¹BᵀP`: the gap to the policy-iteration update.
    pub fn gauss_newton_direction(&self, k: &Matrix) -> Result<Matrix> {
        let cl = self.closed_loop(k)?;
        let target = self.r.solve(&self.b.transpose().matmul(&cl.p)?)?;
        k.sub(&target)
    }

    /// `L(k) − L(k_opt)`, floored to zero within [`REGRET_FLOOR`].
    pub fn regret(&self, k: &Matrix) -> Result<f64> {
        let opt = self.optimum()?;
        Ok(clamp_regret(self.loss(k)? - opt.loss))
    }

    pub fn regret_of_loss(&self, loss: f64) -> Result<f64> {
        Ok(clamp_regret(loss - self.optimum()?.loss))
    }
}

pub(crate) fn clamp_regret(d: f64) -> f64 {
    if d <= REGRET_FLOOR {
        0.0
    } else {
        d
    }
}

/// Free-function form of [`LqrProblem::loss`].
pub fn loss(prob: &LqrProblem, k: &Gain) -> Result<f64> {
    prob.loss(k.matrix())
}

/// Free-function form of [`LqrProblem::gradient`].
pub fn gradient(prob: &LqrProblem, k: &Gain) -> Result<Matrix> {
    prob.gradient(k.matrix())
}

pub fn natural_gradient_direction(prob: &LqrProblem, k: &Gain) -> Result<Matrix> {
    prob.natural_gradient_direction(k.matrix())
}

pub fn gauss_newton_direction(prob: &LqrProblem, k: &Gain) -> Result<Matrix> {
    prob.gauss_newton_direction(k.matrix())
}

pub fn regret(prob: &LqrProblem, k: &Gain) -> Result<f64> {
    prob.regret(k.matrix())
}
