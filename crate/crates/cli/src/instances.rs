//! Seeded random problem instances, gains and factorizations.

use pliflows_core::linalg::is_hurwitz;
use pliflows_core::{FactoredGain, LqrProblem, Matrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// The generator behind every seeded draw.
pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Entries uniform in `[-scale, scale]`.
pub fn uniform_matrix(rng: &mut impl Rng, rows: usize, cols: usize, scale: f64) -> Matrix {
    let data = (0..rows * cols).map(|_| rng.gen_range(-scale..=scale)).collect();
    Matrix::new(rows, cols, data).expect("finite entries")
}

/// `LLᵀ + 0.1·I` with `L` uniform in `[-1, 1]`.
pub fn spd_matrix(rng: &mut impl Rng, n: usize) -> Matrix {
    let l = uniform_matrix(rng, n, n, 1.0);
    l.matmul(&l.transpose())
        .and_then(|m| m.add(&Matrix::identity(n).scale(0.1)))
        .expect("square")
        .symmetrize()
}

/// `S − (‖S‖_F + 0.5)·I`, Hurwitz because every eigenvalue of `S` has
/// modulus at most `‖S‖_F`.
pub fn hurwitz_matrix(rng: &mut impl Rng, n: usize) -> Matrix {
    let s = uniform_matrix(rng, n, n, 1.0);
    let shift = s.frobenius_norm() + 0.5;
    s.sub(&Matrix::identity(n).scale(shift)).expect("square")
}

/// Random stabilizable instance `A = H + B·k_s` with `H` Hurwitz, so that
/// `k_s` stabilizes; returns the problem with its optimum and `k_s`.
pub fn random_instance(rng: &mut impl Rng, n: usize, m: usize) -> pliflows_core::Result<(LqrProblem, Matrix)> {
    let h = hurwitz_matrix(rng, n);
    let b = uniform_matrix(rng, n, m, 1.0);
    let ks = uniform_matrix(rng, m, n, 1.0);
    let a = h.add(&b.matmul(&ks)?)?;
    let q = spd_matrix(rng, n);
    let r = spd_matrix(rng, m);
    let prob = LqrProblem::new(a, b, q, r)?.with_optimum(Some(&ks))?;
    Ok((prob, ks))
}

/// Stabilizing gain `center + E`, `E` uniform within `radius`; the radius is
/// halved after every 50 rejected draws.
pub fn stabilizing_gain_near(rng: &mut impl Rng, prob: &LqrProblem, center: &Matrix, radius: f64) -> Option<Matrix> {
    let (m, n) = center.shape();
    let mut radius = radius;
    for _ in 0..40 {
        for _ in 0..50 {
            let k = center.add(&uniform_matrix(rng, m, n, radius)).ok()?;
            if prob.closed_loop_matrix(&k).is_ok_and(|c| is_hurwitz(&c)) {
                return Some(k);
            }
        }
        radius *= 0.5;
    }
    None
}

/// Factors `k₁ (h₁×n), …, k_N (m×h_{N−1})` with entries uniform in
/// `[-1.5, 1.5]`, redrawn until their product stabilizes.
pub fn stabilizing_factors(rng: &mut impl Rng, prob: &LqrProblem, hidden: &[usize]) -> Option<FactoredGain> {
    let mut dims = vec![prob.state_dim()];
    dims.extend_from_slice(hidden);
    dims.push(prob.input_dim());
    for _ in 0..10_000 {
        let factors: Vec<Matrix> = dims.windows(2).map(|w| uniform_matrix(rng, w[1], w[0], 1.5)).collect();
        let fg = FactoredGain::new(factors).ok()?;
        if fg.stabilizes(prob) {
            return Some(fg);
        }
    }
    None
}
