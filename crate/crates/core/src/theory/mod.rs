//! Coefficient conditions, the σ0 decomposition and explicit rate constants.
//!
//! Every condition is a pair functional `φ(x, y)`, the left-hand side of a
//! pointwise inequality divided by `|x − y|²`. Constants are suprema of `φ`
//! over a probe set of pairs (low-discrepancy pairs, full grids in d ≤ 2,
//! then golden-section line searches from the best pairs).

mod gphi;
mod lambda;
mod rates;

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use gphi::{g_phi, NormBound};
pub use lambda::{HProfile, LambdaCalculus, ScalarProfile};
pub use rates::{lyapunov_constants, RateReport};

use crate::linalg;
use crate::model::{EvalError, ModelSpec};
use crate::ot::OtError;
use crate::quad::{self, QuadError};

#[derive(Debug, Error)]
pub enum TheoryError {
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("x and y coincide")]
    CoincidentPoints,
    #[error("σσ* − λ0² I has eigenvalue {min_eig:e} at {point:?}")]
    EigenvalueViolation { point: Vec<f64>, min_eig: f64 },
    #[error("no r0 in the scan gives K2 > 0 (best sup over far pairs: {best_far_sup})")]
    NoValidR0 { best_far_sup: f64 },
    #[error("rate c1 = {0} is not positive")]
    NonPositiveRate(f64),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("integral diverges: {0}")]
    DivergentTail(String),
    #[error(transparent)]
    Quad(#[from] QuadError),
    #[error(transparent)]
    Ot(#[from] OtError),
}

/// `σ0(x) = √(σσ*(x) − λ0² I)`, row-major d×d.
pub fn sigma0_at(model: &ModelSpec, x: &[f64], lambda0: f64) -> Result<Vec<f64>, TheoryError> {
    let a = model.diffusion_matrix(x)?;
    linalg::shifted_sqrt(&a, model.d(), lambda0 * lambda0).map_err(|e| TheoryError::EigenvalueViolation {
        point: x.to_vec(),
        min_eig: e.min_eig,
    })
}

/// `0.95 · √(min eigenvalue of σσ*)` over `n_points` Halton points of the box.
pub fn suggest_lambda0(model: &ModelSpec, box_radius: f64, n_points: usize) -> Result<f64, TheoryError> {
    let d = model.d();
    let mut min_eig = f64::INFINITY;
    for k in 0..n_points.max(1) as u64 {
        let x: Vec<f64> = crate::rng::halton(k, d).iter().map(|u| box_radius * (2.0 * u - 1.0)).collect();
        min_eig = min_eig.min(linalg::min_eigenvalue(&model.diffusion_matrix(&x)?, d));
    }
    if min_eig <= 0.0 {
        return Err(TheoryError::InvalidInput(format!(
            "σσ* is degenerate on the box (min eigenvalue {min_eig:e})"
        )));
    }
    Ok(0.95 * min_eig.sqrt())
}

/// The pointwise inequalities on `(b, σ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "id", rename_all = "snake_case", deny_unknown_fields)]
pub enum Condition {
    /// `(p−2)|(σ(x)−σ(y))*z|²/|z|² + ‖σ(x)−σ(y)‖²_HS + ⟨b(x)−b(y), z⟩`.
    Dss { p: f64 },
    /// `‖σ0(x)−σ0(y)‖²_HS − |(σ(x)−σ(y))*z|²/|z|² + ⟨b(x)−b(y), z⟩`.
    Dss2 { lambda0: f64 },
    /// `‖σ(x)−σ(y)‖²_HS + ⟨b(x)−b(y), z⟩`.
    Dss2Prime,
    /// `(d−1)/(4λ0) ‖a(x)−a(y)‖²_HS + ⟨b(x)−b(y), z⟩`, `a = σσ*`.
    Dss3 { lambda0: f64 },
}

impl Condition {
    pub fn label(&self) -> String {
        match self {
            Condition::Dss { p } => format!("DSS(p={p})"),
            Condition::Dss2 { lambda0 } => format!("DSS2(lambda0={lambda0})"),
            Condition::Dss2Prime => "DSS2'".into(),
            Condition::Dss3 { lambda0 } => format!("DSS3(lambda0={lambda0})"),
        }
    }
}

/// Diffusion and drift parts of `φ(x, y)`, each divided by `|x − y|²`.
pub fn condition_parts(model: &ModelSpec, cond: Condition, x: &[f64], y: &[f64]) -> Result<(f64, f64), TheoryError> {
    let (d, m) = (model.d(), model.m());
    let z = linalg::sub(x, y);
    let z2 = linalg::dot(&z, &z);
    if z2 == 0.0 {
        return Err(TheoryError::CoincidentPoints);
    }
    let db = linalg::sub(&model.drift(x)?, &model.drift(y)?);
    let drift = linalg::dot(&db, &z) / z2;
    let ds = || -> Result<Vec<f64>, TheoryError> { Ok(linalg::sub(&model.diffusion(x)?, &model.diffusion(y)?)) };
    // |(σ(x)−σ(y))* z|² / |z|²
    let projected = |s: &[f64]| -> f64 {
        let mut total = 0.0;
        for k in 0..m {
            let c: f64 = (0..d).map(|i| s[i * m + k] * z[i]).sum();
            total += c * c;
        }
        total / z2
    };
    let diffusion = match cond {
        Condition::Dss { p } => {
            let s = ds()?;
            (p - 2.0) * projected(&s) + linalg::frobenius_sq(&s)
        }
        Condition::Dss2 { lambda0 } => {
            let s = ds()?;
            let s0 = linalg::sub(&sigma0_at(model, x, lambda0)?, &sigma0_at(model, y, lambda0)?);
            linalg::frobenius_sq(&s0) - projected(&s)
        }
        Condition::Dss2Prime => linalg::frobenius_sq(&ds()?),
        Condition::Dss3 { lambda0 } => {
            let da = linalg::sub(&model.diffusion_matrix(x)?, &model.diffusion_matrix(y)?);
            (d as f64 - 1.0) / (4.0 * lambda0) * linalg::frobenius_sq(&da)
        }
    };
    Ok((diffusion / z2, drift))
}

/// `φ(x, y)` for `cond`.
pub fn condition_lhs(model: &ModelSpec, cond: Condition, x: &[f64], y: &[f64]) -> Result<f64, TheoryError> {
    let (a, b) = condition_parts(model, cond, x, y)?;
    Ok(a + b)
}

/// Left side of the `p`-dissipativity condition divided by `|x − y|²`.
pub fn dss_lhs(model: &ModelSpec, x: &[f64], y: &[f64], p: f64) -> Result<f64, TheoryError> {
    condition_lhs(model, Condition::Dss { p }, x, y)
}

/// How pairs are probed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeConfig {
    pub box_radius: f64,
    /// Low-discrepancy pairs in `[−R, R]^{2d}`.
    pub n_pairs: usize,
    /// Grid points per axis for the exhaustive grid pairs (d ≤ 2 only).
    pub grid_points: usize,
    /// Line-search sweeps from the best pairs.
    pub refine_steps: usize,
    pub seed: u64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            box_radius: 3.0,
            n_pairs: 20_000,
            grid_points: 61,
            refine_steps: 30,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    /// `φ(x, y)` at the witness.
    pub value: f64,
}

/// Largest `φ` over pairs whose larger norm lies in `[inner, outer)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionMargin {
    pub inner: f64,
    pub outer: f64,
    pub sup: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub condition: String,
    pub constants: BTreeMap<String, f64>,
    pub witness: Witness,
    /// Slack of the inequality at the witness (≥ 0 when it holds there).
    pub margin: f64,
    pub regions: Vec<RegionMargin>,
    pub probe: ProbeConfig,
    pub n_evaluated: usize,
    pub notes: Vec<String>,
}

impl ConditionReport {
    pub fn constant(&self, key: &str) -> Option<f64> {
        self.constants.get(key).copied()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

type Pair = (Vec<f64>, Vec<f64>);

fn probe_pairs(d: usize, probe: &ProbeConfig) -> Vec<Pair> {
    let r = probe.box_radius;
    let mut pairs = Vec::new();
    if d <= 2 && probe.grid_points >= 2 {
        let g = probe.grid_points;
        let axis: Vec<f64> = (0..g).map(|k| -r + 2.0 * r * k as f64 / (g - 1) as f64).collect();
        let points: Vec<Vec<f64>> = if d == 1 {
            axis.iter().map(|&a| vec![a]).collect()
        } else {
            axis.iter().flat_map(|&a| axis.iter().map(move |&b| vec![a, b])).collect()
        };
        for (i, x) in points.iter().enumerate() {
            for y in &points[i + 1..] {
                pairs.push((x.clone(), y.clone()));
            }
        }
    }
    // Halton pairs with a seeded Cranley–Patterson rotation.
    let mut rng = ChaCha8Rng::seed_from_u64(probe.seed);
    let shift: Vec<f64> = (0..2 * d).map(|_| rng.gen::<f64>()).collect();
    for k in 0..probe.n_pairs as u64 {
        let u = crate::rng::halton(k, 2 * d);
        let c: Vec<f64> = u
            .iter()
            .zip(&shift)
            .map(|(a, s)| r * (2.0 * ((a + s) % 1.0) - 1.0))
            .collect();
        pairs.push((c[..d].to_vec(), c[d..].to_vec()));
    }
    pairs
}

/// Pairs closer than this (relative to the box) are not evaluated.
const MIN_SEPARATION: f64 = 1e-6;

/// Golden-section ascent of `f` from `start` along single coordinates and
/// along joint translations and stretches of the pair, staying inside the
/// box and satisfying `admissible`.
fn refine<F, A>(f: &F, admissible: &A, start: &Pair, probe: &ProbeConfig) -> (Pair, f64)
where
    F: Fn(&[f64], &[f64]) -> Option<f64>,
    A: Fn(&[f64], &[f64]) -> bool,
{
    let r = probe.box_radius;
    let d = start.0.len();
    let mut best = start.clone();
    let mut best_val = f(&best.0, &best.1).unwrap_or(f64::NEG_INFINITY);
    let mut width = r / 4.0;
    // Direction k moves (x_i, y_i) by t·(a, b).
    let dirs: Vec<(usize, f64, f64)> = (0..d)
        .flat_map(|i| [(i, 1.0, 0.0), (i, 0.0, 1.0), (i, 1.0, 1.0), (i, 1.0, -1.0)])
        .collect();
    let moved = |base: &Pair, (i, a, b): (usize, f64, f64), t: f64| -> Option<Pair> {
        let mut cand = base.clone();
        cand.0[i] += a * t;
        cand.1[i] += b * t;
        let inside = cand.0[i].abs() <= r && cand.1[i].abs() <= r;
        (inside && admissible(&cand.0, &cand.1)).then_some(cand)
    };
    for _ in 0..probe.refine_steps {
        for &dir in &dirs {
            let eval = |t: f64| -> f64 {
                moved(&best, dir, t)
                    .and_then(|c| f(&c.0, &c.1))
                    .map_or(f64::INFINITY, |v| -v)
            };
            let (t, neg) = quad::golden_min(eval, -width, width, 1e-12 * r.max(1.0));
            if -neg > best_val {
                if let Some(c) = moved(&best, dir, t) {
                    best_val = -neg;
                    best = c;
                }
            }
        }
        width *= 0.5;
    }
    (best, best_val)
}

struct Scan {
    pairs: Vec<Pair>,
    /// (distance, φ, diffusion part, drift part) per pair; `None` if skipped.
    values: Vec<Option<(f64, f64, f64, f64)>>,
}

fn scan(model: &ModelSpec, cond: Condition, probe: &ProbeConfig) -> Result<Scan, TheoryError> {
    if !(probe.box_radius > 0.0) || probe.n_pairs + probe.grid_points == 0 {
        return Err(TheoryError::InvalidInput("probe needs a positive box and some pairs".into()));
    }
    let pairs = probe_pairs(model.d(), probe);
    let sep = MIN_SEPARATION * probe.box_radius;
    let values: Result<Vec<_>, TheoryError> = pairs
        .par_iter()
        .map(|(x, y)| {
            let dist = crate::model::dist(x, y);
            if dist < sep {
                return Ok(None);
            }
            let (a, b) = condition_parts(model, cond, x, y)?;
            Ok(Some((dist, a + b, a, b)))
        })
        .collect();
    Ok(Scan { pairs, values: values? })
}

fn region_margins(scan: &Scan, box_radius: f64) -> Vec<RegionMargin> {
    let edges = [0.0, 0.25, 0.5, 0.75, 1.0 + 1e-12].map(|e| e * box_radius);
    edges
        .windows(2)
        .map(|w| {
            let sup = scan
                .pairs
                .iter()
                .zip(&scan.values)
                .filter_map(|((x, y), v)| {
                    let outer = linalg::norm(x).max(linalg::norm(y));
                    v.filter(|_| outer >= w[0] && outer < w[1]).map(|v| v.1)
                })
                .fold(f64::NEG_INFINITY, f64::max);
            RegionMargin {
                inner: w[0],
                outer: w[1].min(box_radius),
                sup,
            }
        })
        .collect()
}

/// Indices of the `k` largest values among pairs passing `keep`, ties broken
/// by the lower index.
fn top_k(scan: &Scan, k: usize, keep: impl Fn(f64) -> bool) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scan.values.len())
        .filter(|&i| scan.values[i].is_some_and(|v| keep(v.0)))
        .collect();
    idx.sort_by(|&a, &b| {
        let (va, vb) = (scan.values[a].unwrap().1, scan.values[b].unwrap().1);
        vb.total_cmp(&va).then(a.cmp(&b))
    });
    idx.truncate(k);
    idx
}

/// Supremum of `φ` with refinement, restricted to pairs with distance in
/// the range accepted by `keep`.
fn refined_sup(
    model: &ModelSpec,
    cond: Condition,
    scan: &Scan,
    probe: &ProbeConfig,
    keep: &(dyn Fn(f64) -> bool + Sync),
) -> Option<Witness> {
    let sep = MIN_SEPARATION * probe.box_radius;
    let f = |x: &[f64], y: &[f64]| condition_lhs(model, cond, x, y).ok();
    let admissible = |x: &[f64], y: &[f64]| {
        let dist = crate::model::dist(x, y);
        dist >= sep && keep(dist)
    };
    let starts = top_k(scan, 16, keep);
    let mut best: Option<Witness> = None;
    for i in starts {
        let (pair, value) = if probe.refine_steps > 0 {
            refine(&f, &admissible, &scan.pairs[i], probe)
        } else {
            (scan.pairs[i].clone(), scan.values[i].unwrap().1)
        };
        if best.as_ref().map_or(true, |b| value > b.value) {
            best = Some(Witness {
                x: pair.0,
                y: pair.1,
                value,
            });
        }
    }
    // Re-evaluate so that the witness reproduces its value exactly.
    best.map(|mut w| {
        w.value = condition_lhs(model, cond, &w.x, &w.y).unwrap_or(w.value);
        w
    })
}

const FACTOR_TWO_NOTE: &str = "drift enters with coefficient 1; constants_drift_x2 doubles the drift term";

/// `K̂_p = −sup φ` for the `p`-dissipativity condition (`p ∈ [1, ∞)`).
pub fn estimate_kp(model: &ModelSpec, p: f64, probe: &ProbeConfig) -> Result<ConditionReport, TheoryError> {
    if !(p >= 1.0 && p.is_finite()) {
        return Err(TheoryError::InvalidInput(format!("p must lie in [1, ∞), got {p}")));
    }
    sup_report(model, Condition::Dss { p }, probe, "K_p", -1.0)
}

/// `K̂ = sup φ` for the one-sided Lipschitz condition `DSS2'`.
pub fn estimate_dss2_prime(model: &ModelSpec, probe: &ProbeConfig) -> Result<ConditionReport, TheoryError> {
    sup_report(model, Condition::Dss2Prime, probe, "K", 1.0)
}

fn sup_report(
    model: &ModelSpec,
    cond: Condition,
    probe: &ProbeConfig,
    key: &str,
    sign: f64,
) -> Result<ConditionReport, TheoryError> {
    let scan = scan(model, cond, probe)?;
    let all = |_: f64| true;
    let witness = refined_sup(model, cond, &scan, probe, &all)
        .ok_or_else(|| TheoryError::InvalidInput("no admissible pairs".into()))?;
    let doubled = scan
        .values
        .iter()
        .flatten()
        .map(|v| v.2 + 2.0 * v.3)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut constants = BTreeMap::new();
    constants.insert(key.to_string(), sign * witness.value);
    constants.insert(format!("{key}_drift_x2"), sign * doubled);
    Ok(ConditionReport {
        condition: cond.label(),
        constants,
        margin: 0.0,
        regions: region_margins(&scan, probe.box_radius),
        n_evaluated: scan.values.iter().flatten().count(),
        witness,
        probe: *probe,
        notes: vec![FACTOR_TWO_NOTE.to_string()],
    })
}

/// `(K1, K2)` for a fixed `r0` from the probed values, before refinement.
fn eb_from_values(values: &[(f64, f64)], r0: f64) -> Option<(f64, f64)> {
    let far = values.iter().filter(|v| v.0 >= r0).map(|v| v.1).fold(f64::NEG_INFINITY, f64::max);
    let near = values.iter().filter(|v| v.0 < r0).map(|v| v.1).fold(f64::NEG_INFINITY, f64::max);
    if far == f64::NEG_INFINITY {
        return None;
    }
    let k2 = -far;
    Some(((near + k2).max(0.0), k2))
}

/// Constants `(K1, K2, r0)` of the piecewise condition
/// `φ ≤ (K1+K2)·1{|x−y| ≤ r0} − K2` for the functional `cond` (normally
/// `Dss2`). With `r0 = None` a grid of radii is scanned and the one with the
/// largest certified rate `c1` is kept.
pub fn estimate_eb_constants_for(
    model: &ModelSpec,
    cond: Condition,
    probe: &ProbeConfig,
    r0: Option<f64>,
) -> Result<ConditionReport, TheoryError> {
    let scan = scan(model, cond, probe)?;
    let values: Vec<(f64, f64)> = scan.values.iter().flatten().map(|v| (v.0, v.1)).collect();
    let max_dist = values.iter().map(|v| v.0).fold(0.0, f64::max);
    let candidates: Vec<f64> = match r0 {
        Some(r) => vec![r],
        None => (0..40).map(|k| max_dist * (0.02 + 0.93 * k as f64 / 39.0)).collect(),
    };
    let mut best: Option<(f64, f64, f64, f64)> = None;
    let mut best_far = f64::NEG_INFINITY;
    for &r in &candidates {
        let Some((k1, k2)) = eb_from_values(&values, r) else { continue };
        best_far = best_far.max(-k2);
        if k2 <= 0.0 {
            continue;
        }
        let Ok(rate) = lyapunov_constants(k1, k2, r) else { continue };
        if best.map_or(true, |b| rate.c1 > b.3) {
            best = Some((r, k1, k2, rate.c1));
        }
    }
    let Some((r0, _, _, _)) = best else {
        return Err(TheoryError::NoValidR0 { best_far_sup: best_far });
    };
    // Refine both suprema at the chosen radius.
    let far = refined_sup(model, cond, &scan, probe, &|d| d >= r0);
    let near = refined_sup(model, cond, &scan, probe, &|d| d < r0);
    let far = far.ok_or(TheoryError::NoValidR0 { best_far_sup: best_far })?;
    let k2 = -far.value;
    if k2 <= 0.0 {
        return Err(TheoryError::NoValidR0 { best_far_sup: far.value });
    }
    let k1 = near.as_ref().map_or(0.0, |w| (w.value + k2).max(0.0));
    let (witness, margin) = match &near {
        // Margin of the binding inequality: inner region if K1 > 0.
        Some(w) if k1 > 0.0 => (w.clone(), k1 - k2 - w.value),
        _ => (far.clone(), -k2 - far.value),
    };
    let mut constants = BTreeMap::new();
    constants.insert("K1".into(), k1);
    constants.insert("K2".into(), k2);
    constants.insert("r0".into(), r0);
    Ok(ConditionReport {
        condition: format!("EB[{}]", cond.label()),
        constants,
        witness,
        margin,
        regions: region_margins(&scan, probe.box_radius),
        probe: *probe,
        n_evaluated: values.len(),
        notes: vec![FACTOR_TWO_NOTE.to_string()],
    })
}

/// [`estimate_eb_constants_for`] with the `DSS2(λ0)` functional.
pub fn estimate_eb_constants(
    model: &ModelSpec,
    lambda0: f64,
    probe: &ProbeConfig,
    r0: Option<f64>,
) -> Result<ConditionReport, TheoryError> {
    estimate_eb_constants_for(model, Condition::Dss2 { lambda0 }, probe, r0)
}

/// Pairwise check of `‖σ0(x)−σ0(y)‖² ≤ (1/(4λ0)) ‖a(x)−a(y)‖²_HS` with the
/// operator norm on the left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpReport {
    pub lambda0: f64,
    pub n_pairs: usize,
    pub max_ratio: f64,
    /// Pairs with ratio above `1 + 1e-10`.
    pub violations: usize,
    /// Pairs where `min eig(a) − λ0² < λ0` at either point; the inequality
    /// is only guaranteed with that much slack.
    pub boundary_pairs: usize,
    pub violations_with_slack: usize,
    pub worst_pair: Option<usize>,
}

/// [`EpReport`] for pairs of matrices `(a(x), a(y))`, each d×d row-major.
pub fn check_ep_matrices(pairs: &[(Vec<f64>, Vec<f64>)], d: usize, lambda0: f64) -> Result<EpReport, TheoryError> {
    let l2 = lambda0 * lambda0;
    let mut report = EpReport {
        lambda0,
        n_pairs: pairs.len(),
        max_ratio: 0.0,
        violations: 0,
        boundary_pairs: 0,
        violations_with_slack: 0,
        worst_pair: None,
    };
    for (k, (a, b)) in pairs.iter().enumerate() {
        let root = |m: &[f64]| {
            linalg::shifted_sqrt(m, d, l2).map_err(|e| TheoryError::EigenvalueViolation {
                point: Vec::new(),
                min_eig: e.min_eig,
            })
        };
        let diff = linalg::sub(&root(a)?, &root(b)?);
        let lhs = linalg::sym_operator_norm(&diff, d).powi(2);
        let rhs = linalg::frobenius_sq(&linalg::sub(a, b)) / (4.0 * lambda0);
        let ratio = if rhs > 0.0 {
            lhs / rhs
        } else if lhs > 1e-20 {
            f64::INFINITY
        } else {
            0.0
        };
        let slack = linalg::min_eigenvalue(a, d).min(linalg::min_eigenvalue(b, d)) - l2;
        let boundary = slack < lambda0;
        if boundary {
            report.boundary_pairs += 1;
        }
        if ratio > 1.0 + 1e-10 {
            report.violations += 1;
            if !boundary {
                report.violations_with_slack += 1;
            }
        }
        if ratio > report.max_ratio {
            report.max_ratio = ratio;
            report.worst_pair = Some(k);
        }
    }
    Ok(report)
}

/// [`check_ep_matrices`] for `a = σσ*` of `model` at the given point pairs.
pub fn check_ep_inequality(model: &ModelSpec, pairs: &[Pair], lambda0: f64) -> Result<EpReport, TheoryError> {
    let mats: Result<Vec<_>, TheoryError> = pairs
        .iter()
        .map(|(x, y)| Ok((model.diffusion_matrix(x)?, model.diffusion_matrix(y)?)))
        .collect();
    check_ep_matrices(&mats?, model.d(), lambda0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ou_dss_is_minus_k() {
        let m = ModelSpec::ou(2, 1.5);
        for p in [1.0, 2.0, 7.0] {
            let v = dss_lhs(&m, &[1.0, -2.0], &[0.3, 0.4], p).unwrap();
            assert!((v + 1.5).abs() < 1e-14);
        }
        assert!(matches!(dss_lhs(&m, &[1.0, 1.0], &[1.0, 1.0], 2.0), Err(TheoryError::CoincidentPoints)));
    }

    #[test]
    fn linear_sigma_example() {
        let m = ModelSpec::from_exprs("lin", 1, 1, &["0"], &[&["x1"]]).unwrap();
        assert!((dss_lhs(&m, &[1.0], &[0.0], 2.0).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn sigma0_diagonal() {
        let m = ModelSpec::brownian(2).with_constant_sigma(2, vec![2.0, 0.0, 0.0, 1.0]).unwrap();
        let s0 = sigma0_at(&m, &[0.0, 0.0], 1.0).unwrap();
        assert!((s0[0] - 3f64.sqrt()).abs() < 1e-14 && s0[3].abs() < 1e-14);
        assert!(sigma0_at(&m, &[0.0, 0.0], 1.1).is_err());
    }

    #[test]
    fn eb_pieces_from_values() {
        let vals = [(0.5, 1.0), (1.0, 0.2), (3.0, -1.0), (4.0, -2.0)];
        assert_eq!(eb_from_values(&vals, 2.0), Some((2.0, 1.0)));
        assert_eq!(eb_from_values(&vals, 5.0), None);
    }
}
