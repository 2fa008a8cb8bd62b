//! `G_Φ(t)`: the gauge of the pair distance under the product of a measure
//! with itself, at the level set by an `L¹ → L^∞` norm bound of the
//! semigroup.

use serde::{Deserialize, Serialize};

use super::TheoryError;
use crate::ot::{self, EmpiricalMeasure, YoungFunction};

/// Bound on `‖P_t‖_{1→∞}` as a function of `t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NormBound {
    Constant { value: f64 },
    /// `exp(c + c t^{−δ/(δ−1)})`, `δ > 1`.
    Ultracontractive { c: f64, delta: f64 },
}

impl NormBound {
    pub fn eval(&self, t: f64) -> Result<f64, TheoryError> {
        let v = match *self {
            NormBound::Constant { value } => value,
            NormBound::Ultracontractive { c, delta } => {
                if !(delta > 1.0 && t > 0.0) {
                    return Err(TheoryError::InvalidInput("ultracontractive bound needs δ > 1, t > 0".into()));
                }
                (c + c * t.powf(-delta / (delta - 1.0))).exp()
            }
        };
        if !(v >= 1.0 && v.is_finite()) {
            return Err(TheoryError::InvalidInput(format!("norm bound {v} must be finite and ≥ 1")));
        }
        Ok(v)
    }
}

/// Smallest `r` with `(1/n²) Σ_{i,j} Φ(|x_i − x_j| / r) ≤ bound(t)^{−2}`,
/// over all ordered pairs of the empirical measure.
pub fn g_phi(mu: &EmpiricalMeasure, phi: &YoungFunction, t: f64, bound: &NormBound) -> Result<f64, TheoryError> {
    let n = mu.len();
    if n == 0 {
        return Err(TheoryError::InvalidInput("empty measure".into()));
    }
    let b = bound.eval(t)?;
    let mut values = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            values.push(ot::distance(mu.point(i), mu.point(j)));
        }
    }
    let weights = vec![1.0 / (n * n) as f64; n * n];
    Ok(ot::gauge_level(&values, &weights, phi, 1.0 / (b * b))?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_points_quadratic() {
        // Mean of Φ_2 over the four ordered pairs is 1/(2r²) = e^{−2/t}.
        let mu = EmpiricalMeasure::from_scalars(&[0.0, 1.0]).unwrap();
        let phi = YoungFunction::power(2.0).unwrap();
        for t in [0.5, 1.0, 3.0] {
            let g = g_phi(&mu, &phi, t, &NormBound::Constant { value: (1.0 / t).exp() }).unwrap();
            let want = (1.0 / t).exp() / 2f64.sqrt();
            assert!((g - want).abs() < 1e-10 * want, "{g} vs {want}");
        }
    }

    #[test]
    fn bound_validation() {
        assert!(NormBound::Constant { value: 0.5 }.eval(1.0).is_err());
        assert!(NormBound::Ultracontractive { c: 1.0, delta: 1.0 }.eval(1.0).is_err());
        let v = NormBound::Ultracontractive { c: 1.0, delta: 2.0 }.eval(0.5).unwrap();
        assert!((v - 5f64.exp()).abs() < 1e-12 * v);
    }
}
