use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::OtError;
use crate::model::{parse_expr, EvalError, Expr};

/// Increasing `Φ: [0,∞) → [0,∞)` with `Φ(0) = 0`, used as a Luxemburg gauge.
#[derive(Clone)]
pub struct YoungFunction {
    kind: Kind,
}

#[derive(Clone)]
enum Kind {
    Power(f64),
    Expr(Arc<Expr>, String),
    Closure(Arc<dyn Fn(f64) -> f64 + Send + Sync>, String),
    Infinity,
}

/// Serializable description of a Young function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum YoungSpec {
    Power { p: f64 },
    /// Expression in the variable `x1`, e.g. `"exp(x1) - 1"`.
    Expr { expr: String },
    Infinity,
}

impl fmt::Debug for YoungFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "YoungFunction({})", self.label())
    }
}

impl YoungFunction {
    /// `Φ_p(r) = r^p`, `p ∈ [1, ∞)`.
    pub fn power(p: f64) -> Result<YoungFunction, OtError> {
        if !(p >= 1.0 && p.is_finite()) {
            return Err(OtError::InvalidExponent(p));
        }
        Ok(YoungFunction { kind: Kind::Power(p) })
    }

    /// `Φ_∞`: 0 on `[0, 1]`, `+∞` beyond.
    pub fn infinity() -> YoungFunction {
        YoungFunction { kind: Kind::Infinity }
    }

    pub fn from_expr(src: &str) -> Result<YoungFunction, OtError> {
        let expr = parse_expr(src, 1).map_err(|e| OtError::InvalidYoung(e.to_string()))?;
        let phi = YoungFunction {
            kind: Kind::Expr(Arc::new(expr), src.to_string()),
        };
        phi.validate()?;
        Ok(phi)
    }

    pub fn custom<F>(label: &str, f: F) -> Result<YoungFunction, OtError>
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        let phi = YoungFunction {
            kind: Kind::Closure(Arc::new(f), label.to_string()),
        };
        phi.validate()?;
        Ok(phi)
    }

    pub fn from_spec(spec: &YoungSpec) -> Result<YoungFunction, OtError> {
        match spec {
            YoungSpec::Power { p } => YoungFunction::power(*p),
            YoungSpec::Expr { expr } => YoungFunction::from_expr(expr),
            YoungSpec::Infinity => Ok(YoungFunction::infinity()),
        }
    }

    pub fn label(&self) -> String {
        match &self.kind {
            Kind::Power(p) => format!("r^{p}"),
            Kind::Expr(_, s) | Kind::Closure(_, s) => s.clone(),
            Kind::Infinity => "phi_inf".to_string(),
        }
    }

    pub fn power_exponent(&self) -> Option<f64> {
        match self.kind {
            Kind::Power(p) => Some(p),
            _ => None,
        }
    }

    pub fn is_infinity(&self) -> bool {
        matches!(self.kind, Kind::Infinity)
    }

    #[inline]
    pub fn eval(&self, r: f64) -> f64 {
        match &self.kind {
            Kind::Power(p) => r.powf(*p),
            // Overflow of an increasing Φ is +∞, anything else is undefined.
            Kind::Expr(e, _) => match e.eval(&[r]) {
                Ok(v) => v,
                Err(EvalError::NonFinite) => f64::INFINITY,
                Err(_) => f64::NAN,
            },
            Kind::Closure(f, _) => f(r),
            Kind::Infinity => {
                if r <= 1.0 {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
        }
    }

    /// `Φ^{-1}(y) = inf{r ≥ 0 : Φ(r) ≥ y}` for `y > 0`.
    pub fn inverse(&self, y: f64) -> Result<f64, OtError> {
        if !(y >= 0.0 && y.is_finite()) {
            return Err(OtError::NonFinite);
        }
        match self.kind {
            Kind::Power(p) => return Ok(y.powf(1.0 / p)),
            Kind::Infinity => return Ok(1.0),
            _ => {}
        }
        if y == 0.0 {
            return Ok(0.0);
        }
        let mut lo = 0.0;
        let mut hi = 1.0;
        let mut expansions = 0;
        while self.eval(hi) < y {
            if !self.eval(hi).is_finite() {
                return Err(OtError::NonFinite);
            }
            lo = hi;
            hi *= 2.0;
            expansions += 1;
            if expansions > 1000 {
                return Err(OtError::BracketFailure(format!(
                    "{} stays below {y} on [0, 2^1000]",
                    self.label()
                )));
            }
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            let v = self.eval(mid);
            if v.is_nan() {
                return Err(OtError::NonFinite);
            }
            if v < y {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(hi)
    }

    /// Probes `Φ(0) = 0`, strict increase and non-decreasing `Φ(r)/r` on a
    /// log grid over `[1e-6, 1e6]`.
    pub fn validate(&self) -> Result<(), OtError> {
        if matches!(self.kind, Kind::Power(_) | Kind::Infinity) {
            return Ok(());
        }
        let bad = |msg: String| Err(OtError::InvalidYoung(format!("{}: {msg}", self.label())));
        let zero = self.eval(0.0);
        if zero != 0.0 {
            return bad(format!("Φ(0) = {zero}, expected 0"));
        }
        let mut prev = (0.0, 0.0, 0.0);
        for k in 0..=240 {
            let r = 10f64.powf(-6.0 + k as f64 * 0.05);
            let v = self.eval(r);
            if v.is_nan() || v < 0.0 {
                return bad(format!("Φ({r:e}) = {v}"));
            }
            if v.is_infinite() {
                break;
            }
            if k > 0 {
                if v <= prev.1 {
                    return bad(format!("not strictly increasing near r = {r:e}"));
                }
                let slope = v / r;
                if slope < prev.2 * (1.0 - 1e-9) {
                    return bad(format!("Φ(r)/r decreases near r = {r:e}"));
                }
            }
            prev = (r, v, v / r);
        }
        Ok(())
    }
}

/// Largest gauge ratio allowed between brackets before giving up.
const BRACKET_LIMIT: f64 = 1e300;

/// Smallest `r > 0` with `Σ w_i Φ(v_i / r) ≤ level` (weights sum to one).
/// `level = 1` is the Luxemburg norm. Bisection in `log r` to relative
/// width 1e-12.
pub fn gauge_level(values: &[f64], weights: &[f64], phi: &YoungFunction, level: f64) -> Result<f64, OtError> {
    if values.len() != weights.len() {
        return Err(OtError::SizeMismatch {
            left: values.len(),
            right: weights.len(),
        });
    }
    if values.iter().chain(weights).any(|v| !v.is_finite() || *v < 0.0) || !(level > 0.0) {
        return Err(OtError::NonFinite);
    }
    let (imax, vmax) = values
        .iter()
        .copied()
        .enumerate()
        .filter(|&(i, _)| weights[i] > 0.0)
        .fold((0, 0.0), |acc, (i, v)| if v > acc.1 { (i, v) } else { acc });
    if vmax == 0.0 {
        return Ok(0.0);
    }
    if phi.is_infinity() {
        return Ok(values
            .iter()
            .zip(weights)
            .filter(|(_, &w)| w > 0.0)
            .fold(0.0, |m, (&v, _)| f64::max(m, v)));
    }
    let mean = |r: f64| -> f64 {
        values
            .iter()
            .zip(weights)
            .map(|(&v, &w)| if v == 0.0 { 0.0 } else { w * phi.eval(v / r) })
            .sum()
    };
    // E Φ(v/r) ≤ Φ(vmax/r) and ≥ w_max Φ(vmax/r).
    let mut hi = vmax / phi.inverse(level)?;
    let w_top = weights[imax];
    let mut lo = vmax / phi.inverse(level / w_top)?;
    if !(lo > 0.0 && hi.is_finite()) {
        return Err(OtError::BracketFailure(format!("degenerate bracket [{lo}, {hi}]")));
    }
    if hi / lo > BRACKET_LIMIT {
        return Err(OtError::BracketFailure(format!("bracket [{lo:e}, {hi:e}] too wide")));
    }
    // Guard against rounding in the inverse.
    let mut widen = 0;
    while mean(hi) > level || mean(lo) <= level {
        if mean(hi) > level {
            hi *= 1.0 + 1e-6;
        } else {
            lo *= 1.0 - 1e-6;
        }
        widen += 1;
        if widen > 100 {
            return Err(OtError::BracketFailure(format!("[{lo:e}, {hi:e}] does not bracket the gauge")));
        }
    }
    while hi / lo - 1.0 > 1e-12 {
        let mid = (lo * hi).sqrt();
        if mid <= lo || mid >= hi {
            break;
        }
        let m = mean(mid);
        if m.is_nan() {
            return Err(OtError::NonFinite);
        }
        if m <= level {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Luxemburg norm `inf{r > 0 : Σ w_i Φ(v_i / r) ≤ 1}`.
pub fn gauge_norm(values: &[f64], weights: &[f64], phi: &YoungFunction) -> Result<f64, OtError> {
    gauge_level(values, weights, phi, 1.0)
}

/// Gauge norm under uniform weights.
pub fn gauge_norm_uniform(values: &[f64], phi: &YoungFunction) -> Result<f64, OtError> {
    let w = vec![1.0 / values.len() as f64; values.len()];
    gauge_norm(values, &w, phi)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_values() {
        let phi = YoungFunction::from_expr("exp(x1) - 1").unwrap();
        let a = 1.7;
        let r = gauge_norm_uniform(&[a, a, a], &phi).unwrap();
        assert!((r - a / 2f64.ln()).abs() < 1e-11 * r);
        let r = gauge_norm_uniform(&[a; 4], &YoungFunction::power(3.0).unwrap()).unwrap();
        assert!((r - a).abs() < 1e-11);
    }

    #[test]
    fn two_point_l2() {
        let r = gauge_norm_uniform(&[0.0, 1.0], &YoungFunction::power(2.0).unwrap()).unwrap();
        assert!((r - 0.5f64.sqrt()).abs() < 1e-11);
    }

    #[test]
    fn infinity_kind_is_the_max() {
        assert_eq!(gauge_norm_uniform(&[0.2, 3.0, 1.0], &YoungFunction::infinity()).unwrap(), 3.0);
        assert_eq!(YoungFunction::infinity().inverse(5.0).unwrap(), 1.0);
    }

    #[test]
    fn invalid_young_functions() {
        assert!(YoungFunction::from_expr("x1 + 1").is_err());
        assert!(YoungFunction::from_expr("sqrt(x1)").is_err());
        assert!(YoungFunction::from_expr("sin(x1)").is_err());
        assert!(YoungFunction::power(0.5).is_err());
        assert!(YoungFunction::from_expr("x1^2 + x1").is_ok());
    }

    #[test]
    fn inverse_roundtrip() {
        let phi = YoungFunction::from_expr("x1^2 * exp(x1)").unwrap();
        for y in [1e-6, 0.3, 1.0, 50.0, 1e6] {
            let r = phi.inverse(y).unwrap();
            assert!((phi.eval(r) - y).abs() <= 1e-12 * y.max(1.0));
        }
    }

    #[test]
    fn bracket_failure_for_bounded_phi() {
        let phi = YoungFunction {
            kind: Kind::Closure(Arc::new(|r: f64| r / (1.0 + r)), "bounded".into()),
        };
        assert!(matches!(
            gauge_norm_uniform(&[1.0, 2.0], &phi),
            Err(OtError::BracketFailure(_))
        ));
    }
}
