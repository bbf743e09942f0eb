//! Factored (overparametrized) gains `k̂ = k_N ⋯ k_2 k_1`.
//!
//! Along the undisturbed factored gradient flow the matrices
//! `C_i = k_i k_iᵀ − k_{i+1}ᵀ k_{i+1}` are conserved; [`imbalance`] computes
//! them together with the scalar measure `c_i`.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::flow::{FlowState, Trajectory};
use crate::linalg::Matrix;
use crate::lqr::{Gain, LqrProblem};
use crate::scalar::{lffnn_scalar_f, scalar_optimal_gain};

/// Factors `k_1` (κ₁×n), `k_2` (κ₂×κ₁), …, `k_N` (m×κ_{N−1}).
#[derive(Debug, Clone, PartialEq)]
pub struct FactoredGain {
    factors: Vec<Matrix>,
}

impl FactoredGain {
    pub fn new(factors: Vec<Matrix>) -> Result<Self> {
        if factors.is_empty() {
            return Err(Error::DimensionMismatch("at least one factor required".into()));
        }
        for (i, w) in factors.windows(2).enumerate() {
            if w[1].cols() != w[0].rows() {
                return Err(Error::DimensionMismatch(format!(
                    "factor {} is {}x{} but factor {} has {} rows",
                    i + 2,
                    w[1].rows(),
                    w[1].cols(),
                    i + 1,
                    w[0].rows()
                )));
            }
        }
        Ok(Self { factors })
    }

    /// Two scalar-plant factors: `k_1 = col(k1)`, `k_2 = row(k2)`.
    pub fn two_layer(k1: &[f64], k2: &[f64]) -> Result<Self> {
        if k1.len() != k2.len() || k1.is_empty() {
            return Err(Error::DimensionMismatch("k1 and k2 need the same hidden width".into()));
        }
        Self::new(alloc::vec![Matrix::column(k1), Matrix::row(k2)])
    }

    pub fn factors(&self) -> &[Matrix] {
        &self.factors
    }

    pub fn depth(&self) -> usize {
        self.factors.len()
    }

    pub fn product(&self) -> Gain {
        let mut acc = self.factors[0].clone();
        for f in &self.factors[1..] {
            acc = f.matmul(&acc).expect("dimensions checked on construction");
        }
        Gain::new(acc)
    }

    pub fn stabilizes(&self, prob: &LqrProblem) -> bool {
        prob.is_stabilizing(self.product().matrix())
    }
}

/// `k_N ⋯ k_1`.
pub fn product(fg: &FactoredGain) -> Gain {
    fg.product()
}

/// Per-factor gradients `∇_{k_i}L = (k_N⋯k_{i+1})ᵀ G (k_{i−1}⋯k_1)ᵀ` with `G`
/// the plain LQR gradient at the product, together with the loss.
pub fn factored_loss_and_gradient(prob: &LqrProblem, fg: &FactoredGain) -> Result<(f64, Vec<Matrix>)> {
    let prod = fg.product();
    let (loss, g) = prob.loss_and_gradient(prod.matrix())?;
    let fs = fg.factors();
    let n = fs.len();
    // prefixes[i] = k_i ⋯ k_1 (prefixes[0] = I_n)
    let mut prefixes = Vec::with_capacity(n);
    prefixes.push(Matrix::identity(fs[0].cols()));
    for i in 0..n - 1 {
        let next = fs[i].matmul(&prefixes[i])?;
        prefixes.push(next);
    }
    // suffix_t[i] = (k_N ⋯ k_{i+2})ᵀ G for factor i (0-based), built backwards
    let mut grads = alloc::vec![Matrix::zeros(1, 1); n];
    let mut left = g; // (k_N ⋯ k_{i+2})ᵀ applied: starts as G for the last factor
    for i in (0..n).rev() {
        grads[i] = left.matmul(&prefixes[i].transpose())?;
        if i > 0 {
            left = fs[i].transpose().matmul(&left)?;
        }
    }
    Ok((loss, grads))
}

pub fn factored_gradient(prob: &LqrProblem, fg: &FactoredGain) -> Result<Vec<Matrix>> {
    Ok(factored_loss_and_gradient(prob, fg)?.1)
}

/// Conserved imbalance matrices and their scalar measures.
#[derive(Debug, Clone, PartialEq)]
pub struct ImbalanceRecord {
    /// `C_i = k_i k_iᵀ − k_{i+1}ᵀ k_{i+1}`, `i = 1..N−1`.
    pub matrices: Vec<Matrix>,
    /// `c_i = √|Σλ_j² − 2Σ_{j<k} λ_jλ_k|` over the eigenvalues of `C_i`.
    pub measures: Vec<f64>,
}

impl ImbalanceRecord {
    /// `√c_i`; for a scalar plant with one hidden unit this is
    /// `√|k_1² − k_2²|`.
    pub fn sqrt_measures(&self) -> Vec<f64> {
        self.measures.iter().map(|c| libm::sqrt(*c)).collect()
    }
}

/// Eigenvalue-concentration measure of a symmetric matrix, via
/// `Σλ² − 2Σ_{j<k}λ_jλ_k = 2‖C‖_F² − (tr C)²`.
pub fn imbalance_measure(c: &Matrix) -> f64 {
    let fro = c.frobenius_norm();
    let tr = c.trace();
    libm::sqrt((2.0 * fro * fro - tr * tr).abs())
}

pub fn imbalance(fg: &FactoredGain) -> ImbalanceRecord {
    let fs = fg.factors();
    let matrices: Vec<Matrix> = fs
        .windows(2)
        .map(|w| {
            let left = w[0].matmul(&w[0].transpose()).expect("square");
            let right = w[1].transpose().matmul(&w[1]).expect("square");
            left.sub(&right).expect("same hidden width").symmetrize()
        })
        .collect();
    let measures = matrices.iter().map(imbalance_measure).collect();
    ImbalanceRecord { matrices, measures }
}

/// `max_{t,i} ‖C_i(t) − C_i(0)‖_F` over a factored trajectory.
pub fn conservation_deviation(traj: &Trajectory) -> Result<f64> {
    let mut initial: Option<Vec<Matrix>> = None;
    let mut worst: f64 = 0.0;
    for s in &traj.states {
        let FlowState::Factored(fg) = s else {
            return Err(Error::NotFactored);
        };
        let rec = imbalance(fg);
        match &initial {
            None => initial = Some(rec.matrices),
            Some(c0) => {
                for (c, c0) in rec.matrices.iter().zip(c0) {
                    worst = worst.max(c.sub(c0)?.frobenius_norm());
                }
            }
        }
    }
    if initial.is_none() {
        return Err(Error::NotFactored);
    }
    Ok(worst)
}

/// One sample of the scalar (n = m = 1, N = 2, κ₁ = 1) phase plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PortraitSample {
    pub k1: f64,
    pub k2: f64,
    /// `(−f(k₂k₁)k₂, −f(k₂k₁)k₁)`; NaN outside the stabilizing region.
    pub v1: f64,
    pub v2: f64,
    pub in_domain: bool,
    pub on_equilibrium: bool,
    pub on_boundary: bool,
    pub on_manifold: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhasePortrait {
    pub a: f64,
    pub q: f64,
    pub r: f64,
    /// Product value `a + √(a² + q/r)` on the equilibrium hyperbolas.
    pub equilibrium_product: f64,
    /// Half the larger grid spacing; used for boundary and manifold flags.
    pub grid_tolerance: f64,
    pub samples: Vec<PortraitSample>,
}

/// Tolerance for flagging a grid point as an equilibrium.
pub const EQUILIBRIUM_TOL: f64 = 1e-9;

/// Samples the descent field of the scalar two-factor flow with `b = 1` on a
/// `n1 × n2` grid over `k1_range × k2_range`.
pub fn scalar_phase_portrait(
    a: f64,
    q: f64,
    r: f64,
    k1_range: (f64, f64),
    k2_range: (f64, f64),
    n1: usize,
    n2: usize,
) -> Result<PhasePortrait> {
    if !(q > 0.0 && r > 0.0) {
        return Err(Error::InvalidArgument("q and r must be positive".into()));
    }
    if n1 < 2 || n2 < 2 || !(k1_range.1 > k1_range.0) || !(k2_range.1 > k2_range.0) {
        return Err(Error::InvalidArgument("grid needs at least 2x2 points over nonempty ranges".into()));
    }
    let d1 = (k1_range.1 - k1_range.0) / (n1 - 1) as f64;
    let d2 = (k2_range.1 - k2_range.0) / (n2 - 1) as f64;
    let tol = 0.5 * d1.max(d2);
    let mut samples = Vec::with_capacity(n1 * n2);
    for i in 0..n1 {
        let k1 = k1_range.0 + d1 * i as f64;
        for j in 0..n2 {
            let k2 = k2_range.0 + d2 * j as f64;
            let khat = k2 * k1;
            let in_domain = khat > a;
            let (v1, v2, on_eq) = if in_domain {
                let f = lffnn_scalar_f(a, q, r, khat)?;
                (-f * k2, -f * k1, f.abs() <= EQUILIBRIUM_TOL)
            } else {
                (f64::NAN, f64::NAN, false)
            };
            samples.push(PortraitSample {
                k1,
                k2,
                v1,
                v2,
                in_domain,
                on_equilibrium: on_eq,
                on_boundary: (khat - a).abs() <= tol,
                on_manifold: (k1 + k2).abs() <= tol,
            });
        }
    }
    Ok(PhasePortrait {
        a,
        q,
        r,
        equilibrium_product: scalar_optimal_gain(a, q, r),
        grid_tolerance: tol,
        samples,
    })
}
