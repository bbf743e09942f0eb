//! Dense small-matrix primitives.
//!
//! Everything here targets the desk-scale problems of this crate (state
//! dimension up to roughly eight), so Lyapunov equations are solved by
//! Kronecker vectorization with a dense LU factorization, and stability is
//! certified through the positive definiteness of a Lyapunov solution rather
//! than through an eigensolver.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::ops::{Index, IndexMut};

use crate::error::{Error, Result};

/// Dense row-major real matrix.
#[derive(Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            if i > 0 {
                write!(f, "; ")?;
            }
            for j in 0..self.cols {
                if j > 0 {
                    write!(f, ", ")?;
                }
                write!(f, "{}", self[(i, j)])?;
            }
        }
        write!(f, "]")
    }
}

impl Matrix {
    /// Builds a matrix from row-major entries. Entries must be finite.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::DimensionMismatch(format!(
                "matrix must be non-empty, got {rows}x{cols}"
            )));
        }
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "{rows}x{cols} matrix needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from a slice of equally long rows.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        if rows.iter().any(|r| r.as_ref().len() != cols) {
            return Err(Error::DimensionMismatch("ragged rows".into()));
        }
        let data = rows.iter().flat_map(|r| r.as_ref().iter().copied()).collect();
        Self::new(rows.len(), cols, data)
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    /// 1x1 matrix.
    pub fn scalar(x: f64) -> Self {
        Self {
            rows: 1,
            cols: 1,
            data: vec![x],
        }
    }

    pub fn diag(values: &[f64]) -> Self {
        let mut m = Self::zeros(values.len(), values.len());
        for (i, v) in values.iter().enumerate() {
            m[(i, i)] = *v;
        }
        m
    }

    /// Column vector.
    pub fn column(values: &[f64]) -> Self {
        Self {
            rows: values.len(),
            cols: 1,
            data: values.to_vec(),
        }
    }

    /// Row vector.
    pub fn row(values: &[f64]) -> Self {
        Self {
            rows: 1,
            cols: values.len(),
            data: values.to_vec(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    /// Rows as nested vectors, mostly for serialization.
    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.cols).map(|r| r.to_vec()).collect()
    }

    /// Value of a 1x1 matrix.
    pub fn as_scalar(&self) -> Option<f64> {
        (self.rows == 1 && self.cols == 1).then(|| self.data[0])
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn matmul(&self, rhs: &Matrix) -> Result<Self> {
        if self.cols != rhs.rows {
            return Err(Error::DimensionMismatch(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        let mut out = Self::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for l in 0..self.cols {
                let a = self[(i, l)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..rhs.cols {
                    out.data[i * rhs.cols + j] += a * rhs.data[l * rhs.cols + j];
                }
            }
        }
        Ok(out)
    }

    fn check_same_shape(&self, rhs: &Matrix) -> Result<()> {
        if self.shape() != rhs.shape() {
            return Err(Error::DimensionMismatch(format!(
                "shape {:?} vs {:?}",
                self.shape(),
                rhs.shape()
            )));
        }
        Ok(())
    }

    pub fn add(&self, rhs: &Matrix) -> Result<Self> {
        self.check_same_shape(rhs)?;
        Ok(self.zip_map(rhs, |a, b| a + b))
    }

    pub fn sub(&self, rhs: &Matrix) -> Result<Self> {
        self.check_same_shape(rhs)?;
        Ok(self.zip_map(rhs, |a, b| a - b))
    }

    fn zip_map(&self, rhs: &Matrix, f: impl Fn(f64, f64) -> f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&rhs.data)
                .map(|(a, b)| f(*a, *b))
                .collect(),
        }
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|x| x * s).collect(),
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        libm::sqrt(self.data.iter().map(|x| x * x).sum())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn trace(&self) -> f64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    /// (M + Mᵀ)/2. Panics in debug builds if the matrix is not square.
    pub fn symmetrize(&self) -> Self {
        debug_assert!(self.is_square());
        let mut s = self.clone();
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                let v = 0.5 * (self[(i, j)] + self[(j, i)]);
                s[(i, j)] = v;
                s[(j, i)] = v;
            }
        }
        s
    }

    /// ‖M − Mᵀ‖_F.
    pub fn asymmetry(&self) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.rows {
            for j in 0..self.cols {
                let d = self[(i, j)] - self[(j, i)];
                acc += d * d;
            }
        }
        libm::sqrt(acc)
    }

    /// Lower Cholesky factor, or `None` if the matrix is not numerically
    /// symmetric positive definite.
    pub fn cholesky(&self) -> Option<Matrix> {
        if !self.is_square() {
            return None;
        }
        let n = self.rows;
        let scale = self.max_abs().max(f64::MIN_POSITIVE);
        let mut l = Matrix::zeros(n, n);
        for j in 0..n {
            let mut d = self[(j, j)];
            for k in 0..j {
                d -= l[(j, k)] * l[(j, k)];
            }
            if !(d > 8.0 * f64::EPSILON * scale) {
                return None;
            }
            let d = libm::sqrt(d);
            l[(j, j)] = d;
            for i in (j + 1)..n {
                let mut s = self[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / d;
            }
        }
        Some(l)
    }

    pub fn is_positive_definite(&self) -> bool {
        self.asymmetry() <= 1e-9 * (1.0 + self.frobenius_norm()) && self.cholesky().is_some()
    }

    /// Solves `self · X = rhs` by LU with partial pivoting.
    pub fn solve(&self, rhs: &Matrix) -> Result<Matrix> {
        if !self.is_square() || rhs.rows != self.rows {
            return Err(Error::DimensionMismatch(format!(
                "solve with {}x{} system and {}x{} rhs",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        let lu = Lu::factor(self.rows, self.data.clone())?;
        let mut out = Matrix::zeros(rhs.rows, rhs.cols);
        let mut col = vec![0.0; rhs.rows];
        for j in 0..rhs.cols {
            for i in 0..rhs.rows {
                col[i] = rhs[(i, j)];
            }
            lu.solve_in_place(&mut col);
            for i in 0..rhs.rows {
                out[(i, j)] = col[i];
            }
        }
        Ok(out)
    }

    pub fn inverse(&self) -> Result<Matrix> {
        self.solve(&Matrix::identity(self.rows))
    }

    /// Numerical rank by Gaussian elimination with complete pivoting; pivots
    /// below `rel_tol · max|M|` count as zero.
    pub fn numerical_rank(&self, rel_tol: f64) -> usize {
        let mut a = self.clone();
        let (m, n) = self.shape();
        let thresh = rel_tol * self.max_abs();
        if self.max_abs() == 0.0 {
            return 0;
        }
        let mut rank = 0;
        for step in 0..m.min(n) {
            let (mut pi, mut pj, mut best) = (step, step, 0.0);
            for i in step..m {
                for j in step..n {
                    if a[(i, j)].abs() > best {
                        best = a[(i, j)].abs();
                        pi = i;
                        pj = j;
                    }
                }
            }
            if best <= thresh {
                break;
            }
            rank += 1;
            for j in 0..n {
                let tmp = a[(step, j)];
                a[(step, j)] = a[(pi, j)];
                a[(pi, j)] = tmp;
            }
            for i in 0..m {
                let tmp = a[(i, step)];
                a[(i, step)] = a[(i, pj)];
                a[(i, pj)] = tmp;
            }
            let p = a[(step, step)];
            for i in (step + 1)..m {
                let f = a[(i, step)] / p;
                for j in step..n {
                    let v = a[(step, j)];
                    a[(i, j)] -= f * v;
                }
            }
        }
        rank
    }

    /// Largest eigenvalue of a symmetric positive semidefinite matrix by power
    /// iteration.
    pub fn sym_max_eigenvalue(&self) -> f64 {
        let n = self.rows;
        let mut v = Matrix::column(&vec![1.0 / libm::sqrt(n as f64); n]);
        let mut lambda = 0.0;
        for _ in 0..500 {
            let w = self.matmul(&v).expect("square");
            let norm = w.frobenius_norm();
            if norm == 0.0 {
                return 0.0;
            }
            let next = w.scale(1.0 / norm);
            let converged = (norm - lambda).abs() <= 1e-13 * norm;
            lambda = norm;
            v = next;
            if converged {
                break;
            }
        }
        lambda
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

/// Packed LU factorization with row pivoting.
struct Lu {
    n: usize,
    lu: Vec<f64>,
    perm: Vec<usize>,
}

impl Lu {
    fn factor(n: usize, mut a: Vec<f64>) -> Result<Self> {
        let scale = a.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        if scale == 0.0 {
            return Err(Error::SingularSystem);
        }
        let tiny = scale * f64::EPSILON * (n as f64);
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let mut p = k;
            let mut best = a[k * n + k].abs();
            for i in (k + 1)..n {
                let v = a[i * n + k].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best <= tiny {
                return Err(Error::SingularSystem);
            }
            if p != k {
                for j in 0..n {
                    a.swap(k * n + j, p * n + j);
                }
                perm.swap(k, p);
            }
            let pivot = a[k * n + k];
            for i in (k + 1)..n {
                let f = a[i * n + k] / pivot;
                a[i * n + k] = f;
                if f != 0.0 {
                    for j in (k + 1)..n {
                        a[i * n + j] -= f * a[k * n + j];
                    }
                }
            }
        }
        Ok(Self { n, lu: a, perm })
    }

    #[allow(clippy::needless_range_loop)]
    fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.n;
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let mut s = x[i];
            for j in 0..i {
                s -= self.lu[i * n + j] * x[j];
            }
            x[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for j in (i + 1)..n {
                s -= self.lu[i * n + j] * x[j];
            }
            x[i] = s / self.lu[i * n + i];
        }
        b.copy_from_slice(&x);
    }
}

fn require_square(m: &Matrix, what: &str) -> Result<usize> {
    if !m.is_square() {
        return Err(Error::DimensionMismatch(format!(
            "{what} must be square, got {}x{}",
            m.rows, m.cols
        )));
    }
    Ok(m.rows)
}

/// Frobenius norm of `MᵀP + PM + W`.
pub fn lyapunov_residual(m: &Matrix, w: &Matrix, p: &Matrix) -> f64 {
    let mt = m.transpose();
    let r = mt
        .matmul(p)
        .and_then(|a| a.add(&p.matmul(m)?))
        .and_then(|a| a.add(w));
    match r {
        Ok(r) => r.frobenius_norm(),
        Err(_) => f64::INFINITY,
    }
}

/// Solves `MᵀP + PM + W = 0` for symmetric `P`.
///
/// The n²×n² Kronecker system `(I⊗Mᵀ + Mᵀ⊗I) vec(P) = −vec(W)` is factored
/// once and the solution gets one step of iterative refinement. A solution
/// whose residual exceeds `1e-10·(1 + ‖W‖_F)` is reported as
/// [`Error::SingularSystem`].
pub fn solve_lyapunov(m: &Matrix, w: &Matrix) -> Result<Matrix> {
    let n = require_square(m, "M")?;
    if w.shape() != (n, n) {
        return Err(Error::DimensionMismatch(format!(
            "W must be {n}x{n}, got {}x{}",
            w.rows, w.cols
        )));
    }
    let nn = n * n;
    // column-major vec: P[i][j] lives at j*n + i
    let idx = |i: usize, j: usize| j * n + i;
    let mut k = vec![0.0; nn * nn];
    for i in 0..n {
        for j in 0..n {
            let row = idx(i, j);
            for l in 0..n {
                k[row * nn + idx(l, j)] += m[(l, i)];
                k[row * nn + idx(i, l)] += m[(l, j)];
            }
        }
    }
    let lu = Lu::factor(nn, k.clone())?;
    let rhs: Vec<f64> = (0..nn).map(|r| -w[(r % n, r / n)]).collect();
    let mut x = rhs.clone();
    lu.solve_in_place(&mut x);

    let mut resid: Vec<f64> = rhs
        .iter()
        .enumerate()
        .map(|(r, b)| b - (0..nn).map(|c| k[r * nn + c] * x[c]).sum::<f64>())
        .collect();
    lu.solve_in_place(&mut resid);
    for (xi, di) in x.iter_mut().zip(&resid) {
        *xi += di;
    }

    let mut p = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            p[(i, j)] = x[idx(i, j)];
        }
    }
    if !p.is_finite() {
        return Err(Error::SingularSystem);
    }
    let p = p.symmetrize();
    if lyapunov_residual(m, w, &p) > 1e-10 * (1.0 + w.frobenius_norm()) {
        return Err(Error::SingularSystem);
    }
    Ok(p)
}

/// True iff every eigenvalue of `M` has strictly negative real part.
///
/// Decided by solving `MᵀP + PM + I = 0` and checking that `P` is positive
/// definite; any failure along the way means "not Hurwitz".
pub fn is_hurwitz(m: &Matrix) -> bool {
    if !m.is_square() || !m.is_finite() {
        return false;
    }
    match solve_lyapunov(m, &Matrix::identity(m.rows)) {
        Ok(p) => p.cholesky().is_some(),
        Err(_) => false,
    }
}

/// Stabilizing solution of the continuous-time algebraic Riccati equation.
#[derive(Debug, Clone, PartialEq)]
pub struct RiccatiSolution {
    /// Symmetric positive definite solution π.
    pub pi: Matrix,
    /// Optimal gain `R⁻¹Bᵀπ`.
    pub k_opt: Matrix,
    pub iterations: usize,
    /// ‖Aᵀπ + πA − πBR⁻¹Bᵀπ + Q‖_F.
    pub residual: f64,
}

pub const RICCATI_MAX_ITERATIONS: usize = 200;

/// Riccati residual `‖Aᵀπ + πA − πBR⁻¹Bᵀπ + Q‖_F`.
pub fn riccati_residual(a: &Matrix, b: &Matrix, q: &Matrix, r: &Matrix, pi: &Matrix) -> Result<f64> {
    let bt_pi = b.transpose().matmul(pi)?;
    let gain = r.solve(&bt_pi)?;
    let quad = bt_pi.transpose().matmul(&gain)?;
    let res = a
        .transpose()
        .matmul(pi)?
        .add(&pi.matmul(a)?)?
        .sub(&quad)?
        .add(q)?;
    Ok(res.frobenius_norm())
}

/// One Newton–Kleinman (policy iteration) step from gain `k`: the Lyapunov
/// solution `P` of the closed loop and the improved gain `R⁻¹BᵀP`.
pub fn newton_kleinman_step(
    a: &Matrix,
    b: &Matrix,
    q: &Matrix,
    r: &Matrix,
    k: &Matrix,
) -> Result<(Matrix, Matrix)> {
    let closed = a.sub(&b.matmul(k)?)?;
    let w = q.add(&k.transpose().matmul(&r.matmul(k)?)?)?;
    let p = solve_lyapunov(&closed, &w)?;
    let next = r.solve(&b.transpose().matmul(&p)?)?;
    Ok((p, next))
}

fn check_lqr_dims(a: &Matrix, b: &Matrix, q: &Matrix, r: &Matrix) -> Result<(usize, usize)> {
    let n = require_square(a, "A")?;
    let m = require_square(r, "R")?;
    if b.shape() != (n, m) {
        return Err(Error::DimensionMismatch(format!(
            "B must be {n}x{m}, got {}x{}",
            b.rows, b.cols
        )));
    }
    if q.shape() != (n, n) {
        return Err(Error::DimensionMismatch(format!(
            "Q must be {n}x{n}, got {}x{}",
            q.rows, q.cols
        )));
    }
    Ok((n, m))
}

/// Solves the Riccati equation by Newton–Kleinman policy iteration.
///
/// `seed` must stabilize `A − B·seed`; without a seed the zero gain is used
/// when `A` itself is Hurwitz.
pub fn solve_riccati(
    a: &Matrix,
    b: &Matrix,
    q: &Matrix,
    r: &Matrix,
    seed: Option<&Matrix>,
) -> Result<RiccatiSolution> {
    let (n, m) = check_lqr_dims(a, b, q, r)?;
    if !q.is_positive_definite() {
        return Err(Error::InvalidArgument("Q must be symmetric positive definite".into()));
    }
    if !r.is_positive_definite() {
        return Err(Error::InvalidArgument("R must be symmetric positive definite".into()));
    }
    let mut k = match seed {
        Some(k0) => {
            if k0.shape() != (m, n) {
                return Err(Error::DimensionMismatch(format!(
                    "seed gain must be {m}x{n}, got {}x{}",
                    k0.rows, k0.cols
                )));
            }
            if !is_hurwitz(&a.sub(&b.matmul(k0)?)?) {
                return Err(Error::NoStabilizingGain);
            }
            k0.clone()
        }
        None if is_hurwitz(a) => Matrix::zeros(m, n),
        None => return Err(Error::NoStabilizingGain),
    };

    let res_tol = 1e-9 * (1.0 + q.frobenius_norm());
    let mut prev_step = f64::INFINITY;
    let mut stalls = 0;
    for it in 1..=RICCATI_MAX_ITERATIONS {
        let (p, next) = newton_kleinman_step(a, b, q, r, &k)?;
        let step = next.sub(&k)?.frobenius_norm();
        let converged = step <= 1e-12 * (1.0 + k.frobenius_norm());
        // quadratic convergence ends at the roundoff floor; once the update
        // stops shrinking, accept if the Riccati residual is already met
        if !converged && step >= prev_step {
            stalls += 1;
        }
        prev_step = prev_step.min(step);
        if converged || stalls >= 3 {
            let residual = riccati_residual(a, b, q, r, &p)?;
            if residual <= res_tol {
                let k_opt = r.solve(&b.transpose().matmul(&p)?)?;
                return Ok(RiccatiSolution {
                    pi: p,
                    k_opt,
                    iterations: it,
                    residual,
                });
            }
            if stalls >= 3 {
                return Err(Error::NotConverged { iterations: it });
            }
        }
        k = next;
    }
    Err(Error::NotConverged {
        iterations: RICCATI_MAX_ITERATIONS,
    })
}
