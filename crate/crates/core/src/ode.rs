//! Embedded Dormand–Prince 5(4) integrator with a domain guard.
//!
//! The right-hand side reports whether its argument lies in the admissible
//! domain. A step whose stages leave the domain is rejected and halved; too
//! many consecutive halvings abort with [`Error::LeftDomain`]. Steps are
//! truncated so that every point of the output grid is hit exactly.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

// difference between the 5th and embedded 4th order weights
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

/// What the observer wants after an accepted step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Control {
    Continue,
    Stop,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Consecutive domain rejections tolerated before giving up.
    pub max_halvings: u32,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-8,
            atol: 1e-10,
            max_halvings: 40,
            max_steps: 10_000_000,
        }
    }
}

/// Final state of an integration.
#[derive(Debug, Clone, PartialEq)]
pub struct OdeEnd {
    pub t: f64,
    pub y: Vec<f64>,
    /// True when the observer stopped the run before the last grid point.
    pub stopped: bool,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
}

/// Integrates `y' = f(t, y)` across `grid` (strictly increasing, starting at
/// the initial time).
///
/// `rhs(t, y, dy)` returns `false` when `y` is outside the domain.
/// `observer(t, y, dy, on_grid)` is called at the initial point and after
/// every accepted step; `on_grid` marks steps that landed on a grid point.
pub fn integrate<F, O>(
    opts: &OdeOptions,
    mut rhs: F,
    y0: &[f64],
    grid: &[f64],
    mut observer: O,
) -> Result<OdeEnd>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> bool,
    O: FnMut(f64, &[f64], &[f64], bool) -> Control,
{
    if grid.is_empty() || grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidArgument("output grid must be strictly increasing".into()));
    }
    if !(opts.rtol > 0.0 && opts.atol > 0.0) {
        return Err(Error::InvalidArgument("tolerances must be positive".into()));
    }
    let d = y0.len();
    let mut t = grid[0];
    let mut y = y0.to_vec();
    let mut k1 = vec![0.0; d];
    if !rhs(t, &y, &mut k1) {
        return Err(Error::LeftDomain { t });
    }
    let mut end = OdeEnd {
        t,
        y: Vec::new(),
        stopped: false,
        accepted_steps: 0,
        rejected_steps: 0,
    };
    if observer(t, &y, &k1, true) == Control::Stop {
        end.y = y;
        end.stopped = true;
        return Ok(end);
    }

    let (mut k2, mut k3, mut k4, mut k5, mut k6, mut k7) = (
        vec![0.0; d],
        vec![0.0; d],
        vec![0.0; d],
        vec![0.0; d],
        vec![0.0; d],
        vec![0.0; d],
    );
    let mut stage = vec![0.0; d];
    let mut y_new = vec![0.0; d];

    let span = grid[grid.len() - 1] - grid[0];
    let mut h = initial_step(opts, &y, &k1).min(span);
    let mut fac_old: f64 = 1e-4;
    let mut halvings = 0u32;
    let mut steps = 0usize;

    for &target in &grid[1..] {
        while t < target {
            steps += 1;
            if steps > opts.max_steps {
                return Err(Error::NotConverged { iterations: steps });
            }
            let remaining = target - t;
            let lands = h >= remaining * (1.0 - 1e-12);
            let h_try = if lands { remaining } else { h };
            if h_try <= 4.0 * f64::EPSILON * t.abs().max(1.0) {
                return Err(Error::LeftDomain { t });
            }

            let ok = {
                let mut eval = |c: f64, coeffs: &[(&[f64], f64)], out: &mut [f64]| {
                    for i in 0..d {
                        let mut s = y[i];
                        for (k, a) in coeffs {
                            s += h_try * a * k[i];
                        }
                        stage[i] = s;
                    }
                    rhs(t + c * h_try, &stage, out)
                };
                eval(C2, &[(&k1, A21)], &mut k2)
                    && eval(C3, &[(&k1, A31), (&k2, A32)], &mut k3)
                    && eval(C4, &[(&k1, A41), (&k2, A42), (&k3, A43)], &mut k4)
                    && eval(C5, &[(&k1, A51), (&k2, A52), (&k3, A53), (&k4, A54)], &mut k5)
                    && eval(
                        1.0,
                        &[(&k1, A61), (&k2, A62), (&k3, A63), (&k4, A64), (&k5, A65)],
                        &mut k6,
                    )
            };
            let ok = ok && {
                for i in 0..d {
                    y_new[i] = y[i]
                        + h_try
                            * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i]);
                }
                let t_new = if lands { target } else { t + h_try };
                rhs(t_new, &y_new, &mut k7)
            };
            if !ok {
                end.rejected_steps += 1;
                halvings += 1;
                if halvings > opts.max_halvings {
                    return Err(Error::LeftDomain { t });
                }
                h = 0.5 * h_try;
                continue;
            }
            halvings = 0;

            let mut err = 0.0;
            for i in 0..d {
                let e = h_try
                    * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
                let sc = opts.atol + opts.rtol * y[i].abs().max(y_new[i].abs());
                err += (e / sc) * (e / sc);
            }
            let err = libm::sqrt(err / d.max(1) as f64);
            if !err.is_finite() {
                end.rejected_steps += 1;
                h = 0.25 * h_try;
                continue;
            }

            // PI step-size control
            let fac11 = libm::pow(err, 0.17);
            if err <= 1.0 {
                let fac = (fac11 / libm::pow(fac_old, 0.04) / 0.9).clamp(0.1, 5.0);
                fac_old = err.max(1e-4);
                h = h_try / fac;
                t = if lands { target } else { t + h_try };
                core::mem::swap(&mut y, &mut y_new);
                core::mem::swap(&mut k1, &mut k7);
                end.accepted_steps += 1;
                if observer(t, &y, &k1, lands) == Control::Stop {
                    end.t = t;
                    end.y = y;
                    end.stopped = true;
                    return Ok(end);
                }
            } else {
                end.rejected_steps += 1;
                h = h_try / (fac11 / 0.9).min(5.0);
            }
        }
    }
    end.t = t;
    end.y = y;
    Ok(end)
}

fn initial_step(opts: &OdeOptions, y: &[f64], f: &[f64]) -> f64 {
    let (mut d0, mut d1) = (0.0, 0.0);
    for (yi, fi) in y.iter().zip(f) {
        let sc = opts.atol + opts.rtol * yi.abs();
        d0 += (yi / sc) * (yi / sc);
        d1 += (fi / sc) * (fi / sc);
    }
    let n = y.len().max(1) as f64;
    let (d0, d1) = (libm::sqrt(d0 / n), libm::sqrt(d1 / n));
    if d0 < 1e-5 || d1 < 1e-5 {
        1e-6
    } else {
        0.01 * d0 / d1
    }
}

/// `n` equally spaced points from `0` to `t_max` inclusive.
pub fn uniform_grid(t_max: f64, n: usize) -> Vec<f64> {
    let n = n.max(2);
    (0..n)
        .map(|i| {
            if i == n - 1 {
                t_max
            } else {
                t_max * i as f64 / (n - 1) as f64
            }
        })
        .collect()
}
