//! Fixed-level tanh-sinh (double-exponential) quadrature on a finite
//! interval. Nodes cluster doubly-exponentially at both endpoints, which
//! absorbs the integrable endpoint behavior of the angular kernel integrals
//! (φ^{N-2} vanishing at 0, algebraic near-singularities for ratio ≈ 1,
//! φ^{α-2} at the diagonal).
//!
//! The integrand receives the distances to both endpoints rather than the
//! abscissa itself: near an endpoint the distance is known to full relative
//! precision while `a + δ` would round it away.

/// ∫_a^b f dx with f given as f(dist_from_a, dist_from_b).
///
/// `level` sets the step d = 2^{-level}; level 6 reaches ~1e-13 relative on
/// analytic-with-endpoint-singularity integrands at a few hundred evaluations.
pub(crate) fn tanh_sinh<F>(f: F, a: f64, b: f64, level: u32) -> f64
where
    F: Fn(f64, f64) -> f64,
{
    assert!(b > a && a.is_finite() && b.is_finite());
    let len = b - a;
    let half = 0.5 * len;
    let d = 0.5f64.powi(level as i32);
    let max_k = (6.5 / d).ceil() as i64;

    // center node (u = 0): x at midpoint, both distances = half
    let mut sum = half * std::f64::consts::FRAC_PI_2 * f(half, half);

    for side in [-1.0f64, 1.0] {
        let mut tiny_streak = 0;
        for k in 1..=max_k {
            let u = side * d * k as f64;
            let y = std::f64::consts::FRAC_PI_2 * u.sinh();
            // 1 - tanh(y) = 2e^{-2y}/(1+e^{-2y}); distance to the endpoint the
            // node approaches, computed without cancellation
            let e = (-2.0 * y.abs()).exp();
            let near = len * e / (1.0 + e); // distance to approached endpoint
            let far = len - near;
            if near == 0.0 {
                break;
            }
            // sech²y = 4e^{-2|y|}/(1+e^{-2|y|})²
            let w = std::f64::consts::FRAC_PI_2 * u.cosh() * (4.0 * e / ((1.0 + e) * (1.0 + e)));
            let (da, db) = if side > 0.0 { (far, near) } else { (near, far) };
            let term = half * w * f(da, db);
            if !term.is_finite() {
                break;
            }
            sum += term;
            if term.abs() <= 1e-18 * sum.abs().max(1e-300) {
                tiny_streak += 1;
                if tiny_streak >= 3 {
                    break;
                }
            } else {
                tiny_streak = 0;
            }
        }
    }
    sum * d
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn polynomial_and_trig() {
        let v = tanh_sinh(|da, _| da * da, 0.0, 1.0, 6);
        assert!((v - 1.0 / 3.0).abs() < 1e-14);
        let s = tanh_sinh(|da, _| da.sin(), 0.0, PI, 6);
        assert!((s - 2.0).abs() < 1e-13);
    }

    #[test]
    fn endpoint_singularity() {
        // ∫_0^1 x^{-1/2} dx = 2, singular at the left endpoint
        let v = tanh_sinh(|da, _| da.powf(-0.5), 0.0, 1.0, 6);
        assert!((v - 2.0).abs() < 1e-12, "got {v}");
        // ∫_0^1 ln x dx = -1
        let l = tanh_sinh(|da, _| da.ln(), 0.0, 1.0, 6);
        assert!((l + 1.0).abs() < 1e-12, "got {l}");
    }

    #[test]
    fn near_singular_scale() {
        // ∫_0^π (q² + φ²)^{-1/2} dφ = asinh(π/q), q = 1e-4: the integrand
        // varies on a scale far below the level-6 uniform step
        let q = 1e-4f64;
        let v = tanh_sinh(|da, _| 1.0 / (q * q + da * da).sqrt(), 0.0, PI, 6);
        let exact = (PI / q + ((PI / q) * (PI / q) + 1.0).sqrt()).ln();
        assert!(
            ((v - exact) / exact).abs() < 1e-12,
            "v={v} exact={exact}"
        );
    }

    #[test]
    fn right_endpoint_distance_is_accurate() {
        // ∫_0^π (π-φ)^{-1/2} dφ = 2√π; requires db to keep relative precision
        let v = tanh_sinh(|_, db| db.powf(-0.5), 0.0, PI, 6);
        assert!((v - 2.0 * PI.sqrt()).abs() < 1e-12, "got {v}");
    }
}
