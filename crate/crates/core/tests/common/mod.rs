#![allow(dead_code)]

use pliflows_core::linalg::is_hurwitz;
use pliflows_core::{LqrProblem, Matrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn rand_matrix(rng: &mut impl Rng, r: usize, c: usize, scale: f64) -> Matrix {
    let data = (0..r * c).map(|_| rng.gen_range(-scale..scale)).collect();
    Matrix::new(r, c, data).unwrap()
}

/// `LLᵀ + 0.1·I` with `L` uniform in `[-1, 1]`.
pub fn rand_spd(rng: &mut impl Rng, n: usize) -> Matrix {
    let l = rand_matrix(rng, n, n, 1.0);
    l.matmul(&l.transpose()).unwrap().add(&Matrix::identity(n).scale(0.1)).unwrap().symmetrize()
}

/// `S − (‖S‖_F + 0.5)·I`: Hurwitz since every eigenvalue of `S` has modulus ≤ ‖S‖_F.
pub fn rand_hurwitz(rng: &mut impl Rng, n: usize) -> Matrix {
    let s = rand_matrix(rng, n, n, 1.0);
    let shift = s.frobenius_norm() + 0.5;
    s.sub(&Matrix::identity(n).scale(shift)).unwrap()
}

/// Random instance `A = H + B·k_s` with `H` Hurwitz, so `k_s` stabilizes.
/// The optimum is attached.
pub fn rand_instance(rng: &mut impl Rng, n: usize, m: usize) -> (LqrProblem, Matrix) {
    let h = rand_hurwitz(rng, n);
    let b = rand_matrix(rng, n, m, 1.0);
    let ks = rand_matrix(rng, m, n, 1.0);
    let a = h.add(&b.matmul(&ks).unwrap()).unwrap();
    let prob = LqrProblem::new(a, b, rand_spd(rng, n), rand_spd(rng, m))
        .unwrap()
        .with_optimum(Some(&ks))
        .unwrap();
    (prob, ks)
}

/// Stabilizing gain within `radius` (entrywise) of `center`, by rejection.
pub fn rand_stabilizing_near(rng: &mut impl Rng, prob: &LqrProblem, center: &Matrix, radius: f64) -> Matrix {
    let (m, n) = center.shape();
    let mut radius = radius;
    loop {
        for _ in 0..20 {
            let k = center.add(&rand_matrix(rng, m, n, radius)).unwrap();
            if is_hurwitz(&prob.closed_loop_matrix(&k).unwrap()) {
                return k;
            }
        }
        radius *= 0.5;
    }
}

pub fn rel_err(x: f64, y: f64) -> f64 {
    (x - y).abs() / y.abs().max(1e-300)
}
