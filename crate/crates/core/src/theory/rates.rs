//! Explicit contraction rate from the piecewise constants `(K1, K2, r0)`.
//!
//! With `N = (r0/2)(K1+K2)` and `ε = N e^{−N r0}` the concave distance
//! `ρ̄(r) = εr + 1 − e^{−Nr}` satisfies `A(r) ≥ c1 ρ̄(r)` where `A` is the
//! drift of `ρ̄(ρ_t)` under the hybrid coupling. Then
//! `E ρ_t ≤ c e^{−c1 t} ρ_0` with `c = (N+ε)/ε`.

use serde::{Deserialize, Serialize};

use super::TheoryError;
use crate::quad;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub k1: f64,
    pub k2: f64,
    pub r0: f64,
    pub n: f64,
    pub epsilon: f64,
    /// `inf_r A(r)/ρ̄(r)`.
    pub c1: f64,
    pub c: f64,
    /// Where the infimum is attained (`∞` if it is the large-r limit `K2`).
    pub argmin_r: f64,
    /// `min_{r ∈ (0, r0]} [4N²/(r(εe^{Nr}+N)) − (K1+K2)] / (K1+K2)`; zero
    /// at `r0` by construction.
    pub key_margin: f64,
}

impl RateReport {
    /// `ρ̄(r) = εr + 1 − e^{−Nr}`.
    pub fn rho_bar(&self, r: f64) -> f64 {
        self.epsilon * r - (-self.n * r).exp_m1()
    }

    pub fn rho_bar_derivative(&self, r: f64) -> f64 {
        self.epsilon + self.n * (-self.n * r).exp()
    }

    /// `4N² / (r (ε e^{Nr} + N))`.
    pub fn key_lhs(&self, r: f64) -> f64 {
        4.0 * self.n * self.n / (r * (self.epsilon * (self.n * r).exp() + self.n))
    }

    /// `A(r) = −ρ̄'(r) [(K1+K2)1{r≤r0} − K2 − key(r) 1{r≤r0}] r`.
    pub fn a_of_r(&self, r: f64) -> f64 {
        let inner = if r <= self.r0 {
            self.k1 + self.k2 - self.k2 - self.key_lhs(r)
        } else {
            -self.k2
        };
        -self.rho_bar_derivative(r) * inner * r
    }

    /// `ρ̄(r)/r` lies in `[ε, N+ε]`; the sandwich `εr ≤ ρ̄(r) ≤ (N+ε)r`.
    pub fn sandwich_holds(&self, r: f64) -> bool {
        let v = self.rho_bar(r);
        v >= self.epsilon * r * (1.0 - 1e-12) && v <= (self.n + self.epsilon) * r * (1.0 + 1e-12)
    }

    /// `c e^{−c1 t} ρ0`.
    pub fn bound(&self, t: f64, rho0: f64) -> f64 {
        self.c * (-self.c1 * t).exp() * rho0
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

const GRID: usize = 10_000;

/// Constants for `(K1, K2, r0)` with `K1 ≥ 0`, `K2 > 0`, `r0 > 0`.
pub fn lyapunov_constants(k1: f64, k2: f64, r0: f64) -> Result<RateReport, TheoryError> {
    if !(k1 >= 0.0 && k2 > 0.0 && r0 > 0.0 && k1.is_finite() && k2.is_finite() && r0.is_finite()) {
        return Err(TheoryError::InvalidInput(format!(
            "need K1 ≥ 0, K2 > 0, r0 > 0 (got {k1}, {k2}, {r0})"
        )));
    }
    let n = 0.5 * r0 * (k1 + k2);
    let epsilon = n * (-n * r0).exp();
    if !(epsilon > 0.0) {
        return Err(TheoryError::InvalidInput(format!("ε underflows for N r0 = {}", n * r0)));
    }
    let mut report = RateReport {
        k1,
        k2,
        r0,
        n,
        epsilon,
        c1: f64::INFINITY,
        c: (n + epsilon) / epsilon,
        argmin_r: f64::INFINITY,
        key_margin: f64::INFINITY,
    };
    let ratio = |r: f64| report.a_of_r(r) / report.rho_bar(r);

    // Log grid on (0, r0], then a log grid of offsets above r0.
    let mut grid = Vec::with_capacity(2 * GRID + 1);
    let lo = r0 * 1e-8;
    for k in 0..=GRID {
        grid.push(lo * (r0 / lo).powf(k as f64 / GRID as f64));
    }
    let far = 10.0 * (r0 + 1.0) + 50.0 / n;
    for k in 1..=GRID {
        grid.push(r0 + (far - r0) * ((k as f64 / GRID as f64) * 30.0 - 30.0).exp2().max(0.0));
    }
    let (mut best_r, mut best) = (f64::INFINITY, k2);
    let mut key = f64::INFINITY;
    for (i, &r) in grid.iter().enumerate() {
        let v = ratio(r);
        if v < best {
            best = v;
            best_r = r;
        }
        if i <= GRID {
            key = key.min((report.key_lhs(r) - (k1 + k2)) / (k1 + k2));
        }
    }
    // Polish the grid minimum; the ratio is smooth on either side of r0.
    if best_r.is_finite() {
        let (a, b) = if best_r <= r0 {
            ((best_r * 0.9).max(lo), best_r.min(r0))
        } else {
            (r0 * (1.0 + 1e-15), best_r + (best_r - r0).max(1e-3 * r0))
        };
        let (r, v) = quad::golden_min(ratio, a, b, 1e-12 * b);
        if v < best {
            best = v;
            best_r = r;
        }
    }
    report.c1 = best;
    report.argmin_r = best_r;
    report.key_margin = key;
    if !(best > 0.0) {
        return Err(TheoryError::NonPositiveRate(best));
    }
    Ok(report)
}
