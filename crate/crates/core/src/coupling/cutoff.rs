use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

/// Cutoff `h` with `h = 1` on `[0, r0]`, `h = 0` on `[r0 + 1, ∞)` and a
/// smoothstep ramp in between:
///
/// ```text
/// h(r) = cos(π/2 · s(u)),  g(r) = sin(π/2 · s(u)),  s(u) = 3u² − 2u³,  u = clamp(r − r0, 0, 1)
/// ```
///
/// `s'` vanishes at both ends, so `h` and `g = √(1 − h²)` are both C¹.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CutoffProfile {
    pub r0: f64,
}

impl CutoffProfile {
    pub fn new(r0: f64) -> CutoffProfile {
        assert!(r0 >= 0.0, "cutoff radius must be non-negative");
        CutoffProfile { r0 }
    }

    #[inline]
    fn ramp(&self, r: f64) -> f64 {
        (r - self.r0).clamp(0.0, 1.0)
    }

    /// Returns `(h(r), g(r))`; exact `(1, 0)` on the plateau and `(0, 1)`
    /// past the ramp.
    #[inline]
    pub fn eval(&self, r: f64) -> (f64, f64) {
        let u = self.ramp(r);
        if u <= 0.0 {
            return (1.0, 0.0);
        }
        if u >= 1.0 {
            return (0.0, 1.0);
        }
        let s = u * u * (3.0 - 2.0 * u);
        let (sin, cos) = (FRAC_PI_2 * s).sin_cos();
        (cos, sin)
    }

    /// Analytic derivatives `(h'(r), g'(r))`.
    pub fn derivative(&self, r: f64) -> (f64, f64) {
        let u = self.ramp(r);
        if u <= 0.0 || u >= 1.0 {
            return (0.0, 0.0);
        }
        let s = u * u * (3.0 - 2.0 * u);
        let ds = 6.0 * u * (1.0 - u);
        let (sin, cos) = (FRAC_PI_2 * s).sin_cos();
        (-FRAC_PI_2 * ds * sin, FRAC_PI_2 * ds * cos)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plateau_and_support() {
        let c = CutoffProfile::new(2.0);
        assert_eq!(c.eval(1.0), (1.0, 0.0));
        assert_eq!(c.eval(3.0), (0.0, 1.0));
        assert_eq!(c.eval(10.0), (0.0, 1.0));
        let (h, g) = c.eval(2.5);
        let half = std::f64::consts::FRAC_1_SQRT_2;
        assert!((h - half).abs() < 1e-15 && (g - half).abs() < 1e-15);
    }

    #[test]
    fn pythagorean_and_monotone() {
        let c = CutoffProfile::new(0.7);
        let mut prev = 1.0;
        for k in 0..=3000 {
            let r = k as f64 * 1e-3;
            let (h, g) = c.eval(r);
            assert!((h * h + g * g - 1.0).abs() < 1e-15);
            assert!(h <= prev && (0.0..=1.0).contains(&h) && (0.0..=1.0).contains(&g));
            prev = h;
        }
    }

    #[test]
    fn c1_at_glue_points() {
        // Richardson-extrapolated one-sided difference quotients on both
        // sides of r0 and r0 + 1 must agree (and vanish).
        let c = CutoffProfile::new(1.3);
        let one_sided = |f: &dyn Fn(f64) -> f64, r: f64, sign: f64| {
            let q = |eps: f64| (f(r + sign * eps) - f(r)) / (sign * eps);
            let (a, b) = (q(1e-4), q(5e-5));
            2.0 * b - a
        };
        let h = |r: f64| c.eval(r).0;
        let g = |r: f64| c.eval(r).1;
        for glue in [c.r0, c.r0 + 1.0] {
            for f in [&h as &dyn Fn(f64) -> f64, &g] {
                let left = one_sided(f, glue, -1.0);
                let right = one_sided(f, glue, 1.0);
                assert!((left - right).abs() <= 1e-6, "{glue}: {left} vs {right}");
            }
        }
        // Interior: analytic derivative vs central differences.
        for r in [1.4, 1.8, 2.2] {
            let (dh, dg) = c.derivative(r);
            let e = 1e-6;
            assert!((dh - (h(r + e) - h(r - e)) / (2.0 * e)).abs() < 1e-7);
            assert!((dg - (g(r + e) - g(r - e)) / (2.0 * e)).abs() < 1e-7);
        }
    }
}
