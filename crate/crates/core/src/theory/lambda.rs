//! Rate transforms of a scalar profile `Ψ1` on `(0, ∞)`:
//!
//! - `Λ1(r) = (1/√r) ∫_0^{√r} Ψ1(s) ds`
//! - `Λ2(r) = ∫_r^∞ ds / (s Λ1(s))`
//! - `H(θ) = ∫_0^1 (θ/h(r)) {1 + Λ1⁻¹(θ/h(r)) + Λ2⁻¹(h(r)/θ)} dr`
//!
//! All three are computed by quadrature. The tail of `Λ2` past `r·e^40` is
//! closed with a power-law fit of `Λ1`.

use std::cell::Cell;

use serde::{Deserialize, Serialize};

use super::TheoryError;
use crate::quad::{self, QuadError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScalarProfile {
    /// `Ψ1(r) = c1 r^ε`.
    Power { c1: f64, epsilon: f64 },
    /// Piecewise linear through the knots, linear from the origin to the
    /// first knot and power-law past the last.
    Tabulated { r: Vec<f64>, psi: Vec<f64> },
}

impl ScalarProfile {
    pub fn validate(&self) -> Result<(), TheoryError> {
        match self {
            ScalarProfile::Power { c1, epsilon } => {
                if !(*c1 > 0.0 && *epsilon > 0.0 && c1.is_finite() && epsilon.is_finite()) {
                    return Err(TheoryError::InvalidInput("power profile needs c1 > 0 and ε > 0".into()));
                }
            }
            ScalarProfile::Tabulated { r, psi } => {
                if r.len() < 2 || r.len() != psi.len() {
                    return Err(TheoryError::InvalidInput("tabulated profile needs ≥ 2 matching knots".into()));
                }
                if r[0] <= 0.0 || r.windows(2).any(|w| !(w[1] > w[0])) {
                    return Err(TheoryError::InvalidInput("knots must be positive and increasing".into()));
                }
                if psi.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
                    return Err(TheoryError::InvalidInput("profile values must be positive".into()));
                }
            }
        }
        Ok(())
    }

    pub fn eval(&self, s: f64) -> f64 {
        match self {
            ScalarProfile::Power { c1, epsilon } => c1 * s.powf(*epsilon),
            ScalarProfile::Tabulated { r, psi } => {
                let n = r.len();
                if s <= r[0] {
                    return psi[0] * s / r[0];
                }
                if s >= r[n - 1] {
                    let slope = (psi[n - 1] / psi[n - 2]).ln() / (r[n - 1] / r[n - 2]).ln();
                    return psi[n - 1] * (s / r[n - 1]).powf(slope);
                }
                let k = r.partition_point(|&x| x <= s) - 1;
                let w = (s - r[k]) / (r[k + 1] - r[k]);
                psi[k] + w * (psi[k + 1] - psi[k])
            }
        }
    }

    /// Points where the profile has a kink, inside `(0, b)`.
    fn breaks(&self, b: f64) -> Vec<f64> {
        match self {
            ScalarProfile::Power { .. } => Vec::new(),
            ScalarProfile::Tabulated { r, .. } => r.iter().copied().filter(|&x| x < b).collect(),
        }
    }
}

/// `h(r) = r^κ` in the `H` integral.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HProfile {
    pub kappa: f64,
}

impl Default for HProfile {
    fn default() -> Self {
        HProfile { kappa: 0.5 }
    }
}

const REL_TOL: f64 = 1e-13;
/// Log-length of the quadrature range of `Λ2` before the analytic tail.
const LOG_SPAN: f64 = 40.0;

#[derive(Debug, Clone)]
pub struct LambdaCalculus {
    profile: ScalarProfile,
}

fn quad_err(e: QuadError) -> TheoryError {
    TheoryError::Quad(e)
}

impl LambdaCalculus {
    pub fn new(profile: ScalarProfile) -> Result<Self, TheoryError> {
        profile.validate()?;
        Ok(LambdaCalculus { profile })
    }

    pub fn profile(&self) -> &ScalarProfile {
        &self.profile
    }

    pub fn lambda1(&self, r: f64) -> Result<f64, TheoryError> {
        if !(r > 0.0 && r.is_finite()) {
            return Err(TheoryError::InvalidInput(format!("Λ1 needs r > 0, got {r}")));
        }
        let b = r.sqrt();
        let mut cuts = vec![0.0];
        cuts.extend(self.profile.breaks(b));
        cuts.push(b);
        let mut total = 0.0;
        for w in cuts.windows(2) {
            total += quad::integrate(|s| self.profile.eval(s), w[0], w[1], 0.0, REL_TOL).map_err(quad_err)?;
        }
        Ok(total / b)
    }

    pub fn lambda2(&self, r: f64) -> Result<f64, TheoryError> {
        if !(r > 0.0 && r.is_finite()) {
            return Err(TheoryError::InvalidInput(format!("Λ2 needs r > 0, got {r}")));
        }
        let failure: Cell<Option<TheoryError>> = Cell::new(None);
        // ∫_r^∞ ds/(sΛ1(s)) = ∫_{ln r}^∞ du/Λ1(e^u)
        let integrand = |u: f64| match self.lambda1(u.exp()) {
            Ok(v) => 1.0 / v,
            Err(e) => {
                failure.set(Some(e));
                f64::NAN
            }
        };
        let a = r.ln();
        let body = quad::integrate(integrand, a, a + LOG_SPAN, 0.0, REL_TOL);
        if let Some(e) = failure.take() {
            return Err(e);
        }
        let body = body.map_err(quad_err)?;
        // Λ1(s) ≈ C s^α past S.
        let s_end = (a + LOG_SPAN).exp();
        let (l_end, l_prev) = (self.lambda1(s_end)?, self.lambda1(s_end / std::f64::consts::E)?);
        let alpha = (l_end / l_prev).ln();
        if !(alpha > 1e-6) {
            return Err(TheoryError::DivergentTail(format!(
                "Λ1 grows like s^{alpha:.3e} at large s, so Λ2 is infinite"
            )));
        }
        Ok(body + 1.0 / (alpha * l_end))
    }

    /// `inf{s > 0 : Λ1(s) ≥ y}`.
    pub fn lambda1_inv(&self, y: f64) -> Result<f64, TheoryError> {
        self.invert(y, true, |s| self.lambda1(s))
    }

    /// `inf{s > 0 : Λ2(s) ≤ y}`.
    pub fn lambda2_inv(&self, y: f64) -> Result<f64, TheoryError> {
        self.invert(y, false, |s| self.lambda2(s))
    }

    /// Bisection in `ln s` for a monotone `f`.
    fn invert(&self, y: f64, increasing: bool, f: impl Fn(f64) -> Result<f64, TheoryError>) -> Result<f64, TheoryError> {
        if !(y > 0.0 && y.is_finite()) {
            return Err(TheoryError::InvalidInput(format!("inverse needs y > 0, got {y}")));
        }
        // g(u) > 0 means s = e^u is past the target.
        let g = |u: f64| -> Result<f64, TheoryError> {
            let v = f(u.exp())?;
            Ok(if increasing { v - y } else { y - v })
        };
        let (mut lo, mut hi) = (0.0f64, 0.0f64);
        let mut step = 1.0;
        if g(0.0)? >= 0.0 {
            loop {
                lo -= step;
                step *= 2.0;
                if g(lo)? < 0.0 {
                    break;
                }
                if lo < -600.0 {
                    return Err(TheoryError::InvalidInput(format!("no preimage of {y}")));
                }
                hi = lo;
            }
        } else {
            loop {
                hi += step;
                step *= 2.0;
                if g(hi)? >= 0.0 {
                    break;
                }
                if hi > 600.0 {
                    return Err(TheoryError::InvalidInput(format!("no preimage of {y}")));
                }
                lo = hi;
            }
        }
        let failure: Cell<Option<TheoryError>> = Cell::new(None);
        let root = quad::bisect(
            |u| match g(u) {
                Ok(v) if v >= 0.0 => 1.0,
                Ok(_) => -1.0,
                Err(e) => {
                    failure.set(Some(e));
                    f64::NAN
                }
            },
            lo,
            hi,
            1e-15,
        );
        if let Some(e) = failure.take() {
            return Err(e);
        }
        Ok(root.map_err(quad_err)?.exp())
    }

    /// `H(θ)` with `h(r) = r^κ`. The integral is taken in `u` with
    /// `r = u^{2/κ}`, so `h = u²`.
    pub fn h_integral(&self, theta: f64, h: HProfile) -> Result<f64, TheoryError> {
        if !(theta > 0.0 && h.kappa > 0.0) {
            return Err(TheoryError::InvalidInput("H needs θ > 0 and κ > 0".into()));
        }
        let m = 2.0 / h.kappa;
        let integrand = |u: f64| -> Result<f64, TheoryError> {
            let hv = u * u;
            let inner = 1.0 + self.lambda1_inv(theta / hv)? + self.lambda2_inv(hv / theta)?;
            Ok(theta / hv * inner * m * u.powf(m - 1.0))
        };
        // Mass in dyadic shells near 0 must shrink geometrically.
        let shells: Vec<f64> = (8..=16)
            .map(|k| {
                let u = (-(k as f64)).exp2();
                integrand(u).map(|v| u * v)
            })
            .collect::<Result<_, _>>()?;
        let last = &shells[shells.len() - 4..];
        if last.windows(2).all(|w| w[1] > 0.9 * w[0]) {
            return Err(TheoryError::DivergentTail(format!(
                "H({theta}) diverges at r = 0 (shell masses {:.3e} → {:.3e})",
                last[0], last[3]
            )));
        }
        let failure: Cell<Option<TheoryError>> = Cell::new(None);
        let value = quad::integrate(
            |u| {
                if u == 0.0 {
                    return 0.0;
                }
                integrand(u).unwrap_or_else(|e| {
                    failure.set(Some(e));
                    f64::NAN
                })
            },
            0.0,
            1.0,
            0.0,
            1e-10,
        );
        if let Some(e) = failure.take() {
            return Err(e);
        }
        value.map_err(|e| match e {
            QuadError::NoConvergence { .. } => TheoryError::DivergentTail(format!("H({theta}) did not converge")),
            other => quad_err(other),
        })
    }
}
