//! Closed-form scalar models used as exact oracles.

use crate::error::{Error, Result};

/// Loss and derivative of the integrator `ẋ = u`, `x(0) = 1`, `q = r = 1`,
/// under feedback `u = −kx`: `((1+k²)/(2k), (1 − 1/k²)/2)`.
pub fn ct_integrator_loss(k: f64) -> Result<(f64, f64)> {
    if !(k > 0.0) || !k.is_finite() {
        return Err(Error::OutOfDomain(k));
    }
    Ok(((1.0 + k * k) / (2.0 * k), 0.5 * (1.0 - 1.0 / (k * k))))
}

fn check_euler_domain(h: f64, k: f64) -> Result<()> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::InvalidArgument("step size must be positive".into()));
    }
    if !(k > 0.0 && k < 2.0 / h) {
        return Err(Error::OutOfDomain(k));
    }
    Ok(())
}

/// Loss of the Euler-discretized integrator with step `h`:
/// `(1+k²)/(k(2−kh))` on `0 < k < 2/h`.
pub fn dt_euler_loss(h: f64, k: f64) -> Result<f64> {
    check_euler_domain(h, k)?;
    Ok((1.0 + k * k) / (k * (2.0 - k * h)))
}

/// Derivative of [`dt_euler_loss`] in `k`.
pub fn dt_euler_gradient(h: f64, k: f64) -> Result<f64> {
    check_euler_domain(h, k)?;
    let num = 1.0 + k * k;
    let den = 2.0 * k - h * k * k;
    Ok((2.0 * k * den - num * (2.0 - 2.0 * h * k)) / (den * den))
}

/// Minimizer and minimum of [`dt_euler_loss`]. The stationarity condition
/// reduces to `k² + hk − 1 = 0`.
pub fn dt_euler_optimum(h: f64) -> Result<(f64, f64)> {
    let k = 0.5 * (libm::sqrt(h * h + 4.0) - h);
    Ok((k, dt_euler_loss(h, k)?))
}

/// Derivative of the reduced scalar loss `(q + r k̂²)/(2(k̂ − a))` (plant
/// `ẋ = ax + u`, `x(0) = 1`) with respect to the product gain `k̂`:
/// `(r k̂² − 2ar k̂ − q) / (2(a − k̂)²)`.
pub fn lffnn_scalar_f(a: f64, q: f64, r: f64, khat: f64) -> Result<f64> {
    if !(q > 0.0 && r > 0.0) {
        return Err(Error::InvalidArgument("q and r must be positive".into()));
    }
    if khat == a || !khat.is_finite() {
        return Err(Error::OutOfDomain(khat));
    }
    let d = a - khat;
    Ok((r * khat * khat - 2.0 * a * r * khat - q) / (2.0 * d * d))
}

/// `(q + r k²)/(2(k − a))`, defined for `k > a`.
pub fn scalar_lqr_loss(a: f64, q: f64, r: f64, k: f64) -> Result<f64> {
    if !(k > a) {
        return Err(Error::OutOfDomain(k));
    }
    Ok((q + r * k * k) / (2.0 * (k - a)))
}

/// Optimal scalar gain `a + √(a² + q/r)`.
pub fn scalar_optimal_gain(a: f64, q: f64, r: f64) -> f64 {
    a + libm::sqrt(a * a + q / r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn integrator_closed_forms() {
        assert_eq!(ct_integrator_loss(1.0).unwrap(), (1.0, 0.0));
        assert_eq!(ct_integrator_loss(2.0).unwrap(), (1.25, 0.375));
        let (_, g) = ct_integrator_loss(1e9).unwrap();
        assert_relative_eq!(g, 0.5, epsilon = 1e-12);
        assert_eq!(ct_integrator_loss(0.0), Err(Error::OutOfDomain(0.0)));
        assert!(ct_integrator_loss(-1.0).is_err());
    }

    #[test]
    fn euler_loss_values() {
        assert_relative_eq!(dt_euler_loss(1.0, 1.0).unwrap(), 2.0);
        // h → 0 recovers the continuous-time loss
        let mut prev = f64::INFINITY;
        for h in [1e-2, 1e-4, 1e-6, 1e-8] {
            let gap = (dt_euler_loss(h, 1.0).unwrap() - 1.0).abs();
            assert!(gap < prev);
            prev = gap;
        }
        assert!(prev < 1e-7);
    }

    #[test]
    fn euler_loss_blows_up_at_boundary() {
        let h = 1.0;
        let a = dt_euler_loss(h, 2.0 - 1e-3).unwrap();
        let b = dt_euler_loss(h, 2.0 - 1e-6).unwrap();
        assert!(a > 1e2);
        assert!(b > 1e3 * a * 0.99);
        assert_eq!(dt_euler_loss(h, 2.0), Err(Error::OutOfDomain(2.0)));
        assert!(dt_euler_loss(h, 0.0).is_err());
        assert!(dt_euler_loss(0.0, 1.0).is_err());
    }

    #[test]
    fn euler_gradient_matches_difference_quotient() {
        for &(h, k) in &[(1.0, 0.5), (0.1, 3.0), (0.01, 50.0)] {
            let e = 1e-6 * k;
            let fd = (dt_euler_loss(h, k + e).unwrap() - dt_euler_loss(h, k - e).unwrap()) / (2.0 * e);
            assert_relative_eq!(dt_euler_gradient(h, k).unwrap(), fd, max_relative = 1e-7);
        }
        let (kopt, _) = dt_euler_optimum(0.3).unwrap();
        assert!(dt_euler_gradient(0.3, kopt).unwrap().abs() < 1e-14);
    }

    #[test]
    fn lffnn_f_values() {
        let kstar = -1.0 + 2f64.sqrt();
        assert!(lffnn_scalar_f(-1.0, 1.0, 1.0, kstar).unwrap().abs() < 1e-15);
        assert_eq!(lffnn_scalar_f(0.0, 1.0, 1.0, 1.0).unwrap(), 0.0);
        assert_eq!(lffnn_scalar_f(0.0, 1.0, 1.0, 2.0).unwrap(), 0.375);
        assert_eq!(lffnn_scalar_f(0.5, 1.0, 1.0, 0.5), Err(Error::OutOfDomain(0.5)));
        assert_relative_eq!(scalar_optimal_gain(-1.0, 1.0, 1.0), kstar);
    }
}
