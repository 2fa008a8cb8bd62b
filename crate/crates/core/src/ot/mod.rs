//! Exact optimal transport between uniform empirical measures of equal size.
//!
//! All problems reduce to an n×n assignment: `W_p` through a
//! min-cost matching on `|x_i − y_j|^p`, `W_∞` through a bottleneck matching,
//! and the Orlicz distance `W_Φ` through bisection on the gauge radius with
//! a min-cost matching on `Φ(|x_i − y_j| / r)` as feasibility oracle.

mod lap;
mod young;

use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use lap::{perfect_matching_below, solve_assignment, solve_bottleneck};
pub use young::{gauge_level, gauge_norm, gauge_norm_uniform, YoungFunction, YoungSpec};

#[derive(Debug, Error)]
pub enum OtError {
    #[error("measures have different sizes ({left} vs {right})")]
    SizeMismatch { left: usize, right: usize },
    #[error("measures have different dimensions ({left} vs {right})")]
    DimensionMismatch { left: usize, right: usize },
    #[error("empty measure")]
    Empty,
    #[error("non-finite value")]
    NonFinite,
    #[error("cannot bracket the gauge: {0}")]
    BracketFailure(String),
    #[error("brute force is limited to n ≤ 7, got {0}")]
    TooLarge(usize),
    #[error("invalid Young function: {0}")]
    InvalidYoung(String),
    #[error("exponent must lie in [1, ∞), got {0}")]
    InvalidExponent(f64),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// n points in R^d with weights 1/n, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalMeasure {
    d: usize,
    data: Vec<f64>,
}

impl EmpiricalMeasure {
    pub fn new(points: &[Vec<f64>]) -> Result<EmpiricalMeasure, OtError> {
        let d = points.first().ok_or(OtError::Empty)?.len();
        let mut data = Vec::with_capacity(points.len() * d);
        for p in points {
            if p.len() != d {
                return Err(OtError::DimensionMismatch { left: d, right: p.len() });
            }
            data.extend_from_slice(p);
        }
        EmpiricalMeasure::from_flat(d, data)
    }

    pub fn from_flat(d: usize, data: Vec<f64>) -> Result<EmpiricalMeasure, OtError> {
        if d == 0 || data.is_empty() {
            return Err(OtError::Empty);
        }
        if data.len() % d != 0 {
            return Err(OtError::DimensionMismatch {
                left: d,
                right: data.len() % d,
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(OtError::NonFinite);
        }
        Ok(EmpiricalMeasure { d, data })
    }

    /// Points on the real line.
    pub fn from_scalars(xs: &[f64]) -> Result<EmpiricalMeasure, OtError> {
        EmpiricalMeasure::from_flat(1, xs.to_vec())
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.d
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.d)
    }

    /// Reads one point per line, comma separated. Blank lines and a
    /// non-numeric first line (header) are skipped.
    pub fn read_csv<R: BufRead>(reader: R) -> Result<EmpiricalMeasure, OtError> {
        let mut d = None;
        let mut data = Vec::new();
        for (k, line) in reader.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let fields: Result<Vec<f64>, _> = line.split(',').map(|f| f.trim().parse::<f64>()).collect();
            let fields = match fields {
                Ok(f) => f,
                Err(_) if k == 0 => continue,
                Err(e) => {
                    return Err(OtError::Parse {
                        line: k + 1,
                        message: e.to_string(),
                    })
                }
            };
            if *d.get_or_insert(fields.len()) != fields.len() {
                return Err(OtError::Parse {
                    line: k + 1,
                    message: format!("expected {} columns, got {}", d.unwrap_or(0), fields.len()),
                });
            }
            data.extend(fields);
        }
        EmpiricalMeasure::from_flat(d.ok_or(OtError::Empty)?, data)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        for p in self.points() {
            let row: Vec<String> = p.iter().map(f64::to_string).collect();
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Optimal plan between two uniform measures of equal size: point `i` of the
/// first is sent to point `permutation[i]` of the second.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingPlan {
    pub value: f64,
    pub permutation: Vec<usize>,
}

impl CouplingPlan {
    pub fn is_bijection(&self) -> bool {
        let mut seen = vec![false; self.permutation.len()];
        self.permutation
            .iter()
            .all(|&j| j < seen.len() && !std::mem::replace(&mut seen[j], true))
    }

    /// Doubly stochastic n×n matrix (row-major) with entries 0 or 1/n.
    pub fn to_matrix(&self) -> Vec<f64> {
        let n = self.permutation.len();
        let mut m = vec![0.0; n * n];
        for (i, &j) in self.permutation.iter().enumerate() {
            m[i * n + j] = 1.0 / n as f64;
        }
        m
    }

    /// Distances `|x_i − y_{π(i)}|` in row order.
    pub fn distances(&self, mu: &EmpiricalMeasure, nu: &EmpiricalMeasure) -> Vec<f64> {
        self.permutation
            .iter()
            .enumerate()
            .map(|(i, &j)| distance(mu.point(i), nu.point(j)))
            .collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plan serializes")
    }
}

#[inline]
pub fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn check_pair(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure) -> Result<usize, OtError> {
    if mu.dim() != nu.dim() {
        return Err(OtError::DimensionMismatch {
            left: mu.dim(),
            right: nu.dim(),
        });
    }
    if mu.len() != nu.len() {
        return Err(OtError::SizeMismatch {
            left: mu.len(),
            right: nu.len(),
        });
    }
    Ok(mu.len())
}

/// Pairwise Euclidean distances, row-major n×n.
pub fn distance_matrix(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure) -> Vec<f64> {
    let n = mu.len();
    let mut c = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            c.push(distance(mu.point(i), nu.point(j)));
        }
    }
    c
}

/// Monotone matching of two sorted copies (optimal in d = 1 for every
/// convex cost and for the bottleneck).
fn sorted_matching(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure) -> Vec<usize> {
    let n = mu.len();
    let order = |m: &EmpiricalMeasure| {
        let mut idx: Vec<usize> = (0..n).collect();
        idx.sort_by(|&a, &b| m.data[a].total_cmp(&m.data[b]));
        idx
    };
    let (ox, oy) = (order(mu), order(nu));
    let mut perm = vec![0; n];
    for k in 0..n {
        perm[ox[k]] = oy[k];
    }
    perm
}

fn power_mean(dists: impl Iterator<Item = f64>, scale: f64, p: f64, n: usize) -> f64 {
    let mean = dists.map(|d| (d / scale).powf(p)).sum::<f64>() / n as f64;
    scale * mean.powf(1.0 / p)
}

/// `W_p` for `p ∈ [1, ∞)`; `p = ∞` is forwarded to [`wasserstein_inf`].
pub fn wasserstein_p(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure, p: f64) -> Result<CouplingPlan, OtError> {
    if p == f64::INFINITY {
        return wasserstein_inf(mu, nu);
    }
    if !(p >= 1.0 && p.is_finite()) {
        return Err(OtError::InvalidExponent(p));
    }
    let n = check_pair(mu, nu)?;
    let permutation = if mu.dim() == 1 {
        sorted_matching(mu, nu)
    } else {
        let dist = distance_matrix(mu, nu);
        let scale = dist.iter().copied().fold(0.0, f64::max);
        if scale == 0.0 {
            return Ok(CouplingPlan {
                value: 0.0,
                permutation: (0..n).collect(),
            });
        }
        let cost: Vec<f64> = dist.iter().map(|d| (d / scale).powf(p)).collect();
        solve_assignment(&cost, n)
    };
    let mut plan = CouplingPlan {
        value: 0.0,
        permutation,
    };
    let dists = plan.distances(mu, nu);
    let scale = dists.iter().copied().fold(0.0, f64::max);
    plan.value = if scale == 0.0 {
        0.0
    } else {
        power_mean(dists.into_iter(), scale, p, n)
    };
    Ok(plan)
}

/// Bottleneck distance `W_∞`.
pub fn wasserstein_inf(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure) -> Result<CouplingPlan, OtError> {
    let n = check_pair(mu, nu)?;
    if mu.dim() == 1 {
        let mut plan = CouplingPlan {
            value: 0.0,
            permutation: sorted_matching(mu, nu),
        };
        plan.value = plan.distances(mu, nu).into_iter().fold(0.0, f64::max);
        return Ok(plan);
    }
    let (value, permutation) = solve_bottleneck(&distance_matrix(mu, nu), n);
    Ok(CouplingPlan { value, permutation })
}

/// Result of [`wasserstein_phi`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhiDistance {
    /// `inf_π ‖ρ‖_{L^Φ(π)}`.
    pub value: f64,
    /// `value · Φ^{-1}(1)`, equal to `|x − y|` for two Dirac masses.
    pub normalized: f64,
    pub plan: CouplingPlan,
}

/// Orlicz–Wasserstein distance to relative tolerance `tol`. The bracket
/// `[b/Φ^{-1}(n), b/Φ^{-1}(1)]`, with `b` the bottleneck value, always
/// contains the answer.
pub fn wasserstein_phi(
    mu: &EmpiricalMeasure,
    nu: &EmpiricalMeasure,
    phi: &YoungFunction,
    tol: f64,
) -> Result<PhiDistance, OtError> {
    let n = check_pair(mu, nu)?;
    let inv1 = phi.inverse(1.0)?;
    let bottleneck = wasserstein_inf(mu, nu)?;
    if phi.is_infinity() || bottleneck.value == 0.0 {
        return Ok(PhiDistance {
            value: bottleneck.value,
            normalized: bottleneck.value * inv1,
            plan: bottleneck,
        });
    }
    let b = bottleneck.value;
    let dist = distance_matrix(mu, nu);
    let mut cost = vec![0.0; n * n];
    // Minimum over plans of mean Φ(ρ/r), and the minimising plan.
    let mut solve = |r: f64| -> Result<(f64, Vec<usize>), OtError> {
        for (c, d) in cost.iter_mut().zip(&dist) {
            *c = phi.eval(d / r);
            if !c.is_finite() {
                return Err(OtError::NonFinite);
            }
        }
        let perm = solve_assignment(&cost, n);
        let mean = perm.iter().enumerate().map(|(i, &j)| cost[i * n + j]).sum::<f64>() / n as f64;
        Ok((mean, perm))
    };
    let mut hi = b / inv1;
    let mut lo = b / phi.inverse(n as f64)?;
    let (mut m_hi, mut best) = solve(hi)?;
    let mut widen = 0;
    while m_hi > 1.0 {
        hi *= 1.0 + 1e-9;
        (m_hi, best) = solve(hi)?;
        widen += 1;
        if widen > 100 {
            return Err(OtError::BracketFailure(format!("upper bracket {hi:e} infeasible")));
        }
    }
    if lo >= hi {
        lo = hi * 0.5;
    }
    while hi / lo - 1.0 > tol {
        let mid = (lo * hi).sqrt();
        if mid <= lo || mid >= hi {
            break;
        }
        let (m, perm) = solve(mid)?;
        if m <= 1.0 {
            hi = mid;
            best = perm;
        } else {
            lo = mid;
        }
    }
    Ok(PhiDistance {
        value: hi,
        normalized: hi * inv1,
        plan: CouplingPlan {
            value: hi,
            permutation: best,
        },
    })
}

/// Cost functional for [`brute_force_w`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Cost {
    /// `(mean |x − y|^p)^{1/p}`.
    Power(f64),
    /// `max |x − y|`.
    Bottleneck,
}

/// Exhaustive minimum over all n! matchings (n ≤ 7), by Heap's algorithm.
pub fn brute_force_w(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure, cost: Cost) -> Result<f64, OtError> {
    let n = check_pair(mu, nu)?;
    if n > 7 {
        return Err(OtError::TooLarge(n));
    }
    let dist = distance_matrix(mu, nu);
    let eval = |perm: &[usize]| -> f64 {
        match cost {
            Cost::Power(p) => perm.iter().enumerate().map(|(i, &j)| dist[i * n + j].powf(p)).sum::<f64>(),
            Cost::Bottleneck => perm.iter().enumerate().map(|(i, &j)| dist[i * n + j]).fold(0.0, f64::max),
        }
    };
    let mut perm: Vec<usize> = (0..n).collect();
    let mut best = eval(&perm);
    let mut c = vec![0usize; n];
    let mut i = 1;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            best = best.min(eval(&perm));
            c[i] += 1;
            i = 1;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    Ok(match cost {
        Cost::Power(p) => (best / n as f64).powf(1.0 / p),
        Cost::Bottleneck => best,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(xs: &[f64]) -> EmpiricalMeasure {
        EmpiricalMeasure::from_scalars(xs).unwrap()
    }

    #[test]
    fn monotone_matching_on_the_line() {
        let (mu, nu) = (line(&[0.0, 1.0]), line(&[3.0, 2.0]));
        let w1 = wasserstein_p(&mu, &nu, 1.0).unwrap();
        assert_eq!(w1.value, 2.0);
        assert_eq!(w1.permutation, vec![1, 0]);
        assert_eq!(wasserstein_inf(&mu, &nu).unwrap().value, 2.0);
        assert_eq!(brute_force_w(&mu, &nu, Cost::Power(1.0)).unwrap(), 2.0);
    }

    #[test]
    fn identical_measures() {
        let mu = EmpiricalMeasure::new(&[vec![0.0, 1.0], vec![2.0, -1.0], vec![0.5, 0.5]]).unwrap();
        for p in [1.0, 2.0, 3.5] {
            let plan = wasserstein_p(&mu, &mu, p).unwrap();
            assert_eq!(plan.value, 0.0);
        }
        assert_eq!(wasserstein_inf(&mu, &mu).unwrap().value, 0.0);
        let phi = YoungFunction::from_expr("exp(x1) - 1").unwrap();
        assert_eq!(wasserstein_phi(&mu, &mu, &phi, 1e-10).unwrap().value, 0.0);
    }

    #[test]
    fn single_atoms() {
        let mu = EmpiricalMeasure::new(&[vec![0.0, 0.0]]).unwrap();
        let nu = EmpiricalMeasure::new(&[vec![3.0, 4.0]]).unwrap();
        let phi = YoungFunction::from_expr("exp(x1) - 1").unwrap();
        let w = wasserstein_phi(&mu, &nu, &phi, 1e-12).unwrap();
        assert!((w.value - 5.0 / 2f64.ln()).abs() < 1e-10);
        assert!((w.normalized - 5.0).abs() < 1e-10);
    }

    #[test]
    fn shape_errors() {
        let a = line(&[0.0, 1.0]);
        let b = line(&[0.0]);
        assert!(matches!(wasserstein_p(&a, &b, 2.0), Err(OtError::SizeMismatch { .. })));
        let c = EmpiricalMeasure::new(&[vec![0.0, 0.0], vec![1.0, 1.0]]).unwrap();
        assert!(matches!(wasserstein_inf(&a, &c), Err(OtError::DimensionMismatch { .. })));
        assert!(matches!(wasserstein_p(&a, &a, 0.5), Err(OtError::InvalidExponent(_))));
        let big = line(&[0.0; 8]);
        assert!(matches!(brute_force_w(&big, &big, Cost::Bottleneck), Err(OtError::TooLarge(8))));
    }

    #[test]
    fn csv_roundtrip() {
        let mu = EmpiricalMeasure::new(&[vec![0.5, -1.0], vec![2.0, 3.25]]).unwrap();
        let mut buf = Vec::new();
        mu.write_csv(&mut buf).unwrap();
        assert_eq!(EmpiricalMeasure::read_csv(&buf[..]).unwrap(), mu);
        let with_header = b"x,y\n1,2\n\n3,4\n";
        assert_eq!(EmpiricalMeasure::read_csv(&with_header[..]).unwrap().len(), 2);
        assert!(EmpiricalMeasure::read_csv(&b"1,2\n3\n"[..]).is_err());
    }

    #[test]
    fn plan_json() {
        let plan = CouplingPlan {
            value: 1.5,
            permutation: vec![1, 0],
        };
        let v: serde_json::Value = serde_json::from_str(&plan.to_json()).unwrap();
        assert_eq!(v, serde_json::json!({"value": 1.5, "permutation": [1, 0]}));
        assert!(plan.is_bijection());
        assert!(!CouplingPlan { value: 0.0, permutation: vec![0, 0] }.is_bijection());
    }
}
