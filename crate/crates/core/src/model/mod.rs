//! SDE models `dX_t = b(X_t) dt + √2 σ(X_t) dB_t` on R^d with m-dimensional noise.
//!
//! Drift and diffusion are either built-in fields or component-wise
//! expressions (see [`expr`]). Models are immutable once built and can be
//! shared freely between worker threads; evaluation writes into caller
//! buffers and does not allocate.

pub mod expr;
mod scenario;

use rand::Rng;
use serde::Serialize;
use thiserror::Error;

pub use expr::{parse_components, parse_expr, EvalError, Expr, ParseError};
pub use scenario::ModelConfig;

use crate::rng::{self, Domain};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("{pointer}: {message}")]
    Config { pointer: String, message: String },
    #[error("model is not finite at probe point {point:?}")]
    NotFinite { point: Vec<f64> },
}

impl ModelError {
    pub(crate) fn config(pointer: impl Into<String>, message: impl Into<String>) -> Self {
        ModelError::Config {
            pointer: pointer.into(),
            message: message.into(),
        }
    }
}

/// Drift field b: R^d → R^d.
#[derive(Debug, Clone, PartialEq)]
pub enum VectorField {
    Zero,
    /// b(x) = −K x.
    Ou { k: f64 },
    /// b(x) = x − x³ componentwise.
    DoubleWell,
    /// b(x) = −c0 (δ² + |x|²)^{θ/2} x.
    Example22 { c0: f64, theta: f64, delta: f64 },
    Expr(Vec<Expr>),
}

impl VectorField {
    #[inline]
    pub fn eval_into(&self, x: &[f64], out: &mut [f64]) -> Result<(), EvalError> {
        match self {
            VectorField::Zero => {
                for o in out.iter_mut() {
                    *o = 0.0;
                }
                return Ok(());
            }
            VectorField::Ou { k } => {
                for (o, xi) in out.iter_mut().zip(x) {
                    *o = -k * xi;
                }
                return Ok(());
            }
            VectorField::DoubleWell => {
                for (o, xi) in out.iter_mut().zip(x) {
                    *o = xi - xi * xi * xi;
                }
                return Ok(());
            }
            VectorField::Example22 { c0, theta, delta } => {
                let r2: f64 = x.iter().map(|v| v * v).sum();
                let scale = -c0 * (delta * delta + r2).powf(theta / 2.0);
                for (o, xi) in out.iter_mut().zip(x) {
                    *o = scale * xi;
                }
            }
            VectorField::Expr(comps) => {
                for (o, e) in out.iter_mut().zip(comps) {
                    *o = e.eval(x)?;
                }
            }
        }
        if out.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(EvalError::NonFinite)
        }
    }
}

/// Diffusion field σ: R^d → R^{d×m}, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub enum MatrixField {
    Constant { data: Vec<f64> },
    Expr { entries: Vec<Expr> },
}

impl MatrixField {
    pub fn scaled_identity(d: usize, s: f64) -> MatrixField {
        let mut data = vec![0.0; d * d];
        for i in 0..d {
            data[i * d + i] = s;
        }
        MatrixField::Constant { data }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, MatrixField::Constant { .. })
    }

    #[inline]
    pub fn eval_into(&self, x: &[f64], out: &mut [f64]) -> Result<(), EvalError> {
        match self {
            MatrixField::Constant { data } => out.copy_from_slice(data),
            MatrixField::Expr { entries } => {
                for (o, e) in out.iter_mut().zip(entries) {
                    *o = e.eval(x)?;
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub name: String,
    d: usize,
    m: usize,
    drift: VectorField,
    diffusion: MatrixField,
}

impl ModelSpec {
    pub fn new(
        name: impl Into<String>,
        d: usize,
        m: usize,
        drift: VectorField,
        diffusion: MatrixField,
    ) -> Result<ModelSpec, ModelError> {
        if d == 0 || m == 0 {
            return Err(ModelError::config("/d", "dimensions must be positive"));
        }
        if let VectorField::Expr(c) = &drift {
            if c.len() != d {
                return Err(ModelError::config(
                    "/drift",
                    format!("expected {d} drift components, got {}", c.len()),
                ));
            }
            if let Some(i) = c.iter().position(|e| e.arity() > d) {
                return Err(ModelError::config(
                    format!("/drift/{i}"),
                    "references a coordinate beyond d",
                ));
            }
        }
        let n = match &diffusion {
            MatrixField::Constant { data } => data.len(),
            MatrixField::Expr { entries } => {
                if let Some(i) = entries.iter().position(|e| e.arity() > d) {
                    return Err(ModelError::config(
                        format!("/diffusion/{}/{}", i / m, i % m),
                        "references a coordinate beyond d",
                    ));
                }
                entries.len()
            }
        };
        if n != d * m {
            return Err(ModelError::config(
                "/diffusion",
                format!("expected a {d}x{m} matrix ({} entries), got {n}", d * m),
            ));
        }
        Ok(ModelSpec {
            name: name.into(),
            d,
            m,
            drift,
            diffusion,
        })
    }

    /// Ornstein–Uhlenbeck model b = −Kx, σ = I.
    pub fn ou(d: usize, k: f64) -> ModelSpec {
        Self::builtin_with_sigma("ou", d, VectorField::Ou { k }, 1.0)
    }

    /// Double well b = x − x³ with σ = s·I.
    pub fn double_well(d: usize, sigma: f64) -> ModelSpec {
        Self::builtin_with_sigma("double_well", d, VectorField::DoubleWell, sigma)
    }

    /// b(x) = −c0 (δ² + |x|²)^{θ/2} x with σ = I.
    pub fn example22(d: usize, c0: f64, theta: f64, delta: f64) -> ModelSpec {
        Self::builtin_with_sigma("example22", d, VectorField::Example22 { c0, theta, delta }, 1.0)
    }

    /// Driftless model with σ = I.
    pub fn brownian(d: usize) -> ModelSpec {
        Self::builtin_with_sigma("brownian", d, VectorField::Zero, 1.0)
    }

    fn builtin_with_sigma(name: &str, d: usize, drift: VectorField, s: f64) -> ModelSpec {
        ModelSpec {
            name: name.to_string(),
            d,
            m: d,
            drift,
            diffusion: MatrixField::scaled_identity(d, s),
        }
    }

    /// Replaces the diffusion by a constant d×m matrix (row-major).
    pub fn with_constant_sigma(self, m: usize, data: Vec<f64>) -> Result<ModelSpec, ModelError> {
        ModelSpec::new(self.name, self.d, m, self.drift, MatrixField::Constant { data })
    }

    /// Builds a model from expression text: one drift string with `d`
    /// comma-separated components and `d` diffusion rows of `m` entries.
    pub fn from_exprs(
        name: impl Into<String>,
        d: usize,
        m: usize,
        drift: &[&str],
        diffusion: &[&[&str]],
    ) -> Result<ModelSpec, ModelError> {
        let drift = drift
            .iter()
            .map(|s| parse_expr(s, d))
            .collect::<Result<Vec<_>, _>>()?;
        let mut entries = Vec::with_capacity(d * m);
        for (i, row) in diffusion.iter().enumerate() {
            if row.len() != m {
                return Err(ModelError::config(
                    format!("/diffusion/{i}"),
                    format!("expected {m} entries, got {}", row.len()),
                ));
            }
            for s in row.iter() {
                entries.push(parse_expr(s, d)?);
            }
        }
        ModelSpec::new(name, d, m, VectorField::Expr(drift), MatrixField::Expr { entries })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn drift_field(&self) -> &VectorField {
        &self.drift
    }

    pub fn diffusion_field(&self) -> &MatrixField {
        &self.diffusion
    }

    #[inline]
    pub fn drift_into(&self, x: &[f64], out: &mut [f64]) -> Result<(), EvalError> {
        self.drift.eval_into(x, out)
    }

    /// Drift of a one-dimensional model at `x`.
    #[inline]
    pub fn drift_scalar(&self, x: f64) -> Result<f64, EvalError> {
        debug_assert_eq!(self.d, 1);
        match &self.drift {
            VectorField::Zero => Ok(0.0),
            VectorField::Ou { k } => Ok(-k * x),
            VectorField::DoubleWell => Ok(x - x * x * x),
            _ => {
                let mut out = [0.0];
                self.drift_into(&[x], &mut out)?;
                Ok(out[0])
            }
        }
    }

    /// σ(x) written row-major into `out` (length d·m).
    #[inline]
    pub fn diffusion_into(&self, x: &[f64], out: &mut [f64]) -> Result<(), EvalError> {
        self.diffusion.eval_into(x, out)
    }

    pub fn drift(&self, x: &[f64]) -> Result<Vec<f64>, EvalError> {
        let mut out = vec![0.0; self.d];
        self.drift_into(x, &mut out)?;
        Ok(out)
    }

    pub fn diffusion(&self, x: &[f64]) -> Result<Vec<f64>, EvalError> {
        let mut out = vec![0.0; self.d * self.m];
        self.diffusion_into(x, &mut out)?;
        Ok(out)
    }

    /// σσ*(x), d×d row-major.
    pub fn diffusion_matrix(&self, x: &[f64]) -> Result<Vec<f64>, EvalError> {
        let s = self.diffusion(x)?;
        let (d, m) = (self.d, self.m);
        let mut a = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                a[i * d + j] = (0..m).map(|k| s[i * m + k] * s[j * m + k]).sum();
            }
        }
        Ok(a)
    }

    /// The same model written in the expression language. Built-in fields
    /// and their expression encodings must agree pointwise.
    pub fn reference_expr(&self) -> Result<ModelSpec, ModelError> {
        let d = self.d;
        let drift: Vec<String> = (1..=d)
            .map(|i| match &self.drift {
                VectorField::Zero => "0".to_string(),
                VectorField::Ou { k } => format!("-{k}*x{i}"),
                VectorField::DoubleWell => format!("x{i} - x{i}^3"),
                VectorField::Example22 { c0, theta, delta } => {
                    format!("-{c0}*({delta}^2 + norm(x)^2)^({theta}/2)*x{i}")
                }
                VectorField::Expr(c) => c[i - 1].to_string(),
            })
            .collect();
        let entries: Vec<String> = match &self.diffusion {
            MatrixField::Constant { data } => data
                .iter()
                .map(|v| if *v < 0.0 { format!("-{}", -v) } else { v.to_string() })
                .collect(),
            MatrixField::Expr { entries } => entries.iter().map(|e| e.to_string()).collect(),
        };
        let drift_refs: Vec<&str> = drift.iter().map(String::as_str).collect();
        let rows: Vec<Vec<&str>> = entries
            .chunks(self.m)
            .map(|r| r.iter().map(String::as_str).collect())
            .collect();
        let row_refs: Vec<&[&str]> = rows.iter().map(Vec::as_slice).collect();
        ModelSpec::from_exprs(format!("{}-expr", self.name), d, self.m, &drift_refs, &row_refs)
    }

    /// Checks finiteness and shapes on a uniform probe of `[-radius, radius]^d`.
    pub fn validate(&self, radius: f64, n_points: usize, seed: u64) -> Result<(), ModelError> {
        let mut rng = rng::stream(seed, Domain::Probe, 0);
        let mut x = vec![0.0; self.d];
        let mut b = vec![0.0; self.d];
        let mut s = vec![0.0; self.d * self.m];
        for _ in 0..n_points.max(1) {
            for v in x.iter_mut() {
                *v = rng.gen_range(-radius..=radius);
            }
            let ok = self.drift_into(&x, &mut b).is_ok()
                && self.diffusion_into(&x, &mut s).is_ok()
                && s.iter().all(|v| v.is_finite());
            if !ok {
                return Err(ModelError::NotFinite { point: x });
            }
        }
        Ok(())
    }

    /// Sampled difference quotients |b(x)−b(y)|/|x−y| and
    /// ‖σ(x)−σ(y)‖_HS/|x−y| over random pairs in the box. This is a sanity
    /// probe, not a proof of local Lipschitz continuity.
    pub fn lipschitz_probe(
        &self,
        radius: f64,
        n_pairs: usize,
        seed: u64,
    ) -> Result<LipschitzProbe, ModelError> {
        let mut rng = rng::stream(seed, Domain::Probe, 1);
        let (d, m) = (self.d, self.m);
        let mut x = vec![0.0; d];
        let mut y = vec![0.0; d];
        let (mut bx, mut by) = (vec![0.0; d], vec![0.0; d]);
        let (mut sx, mut sy) = (vec![0.0; d * m], vec![0.0; d * m]);
        let mut probe = LipschitzProbe {
            drift: 0.0,
            diffusion: 0.0,
            n_pairs,
        };
        for _ in 0..n_pairs {
            for (a, b) in x.iter_mut().zip(y.iter_mut()) {
                *a = rng.gen_range(-radius..=radius);
                *b = rng.gen_range(-radius..=radius);
            }
            let dist = dist(&x, &y);
            if dist == 0.0 {
                continue;
            }
            self.drift_into(&x, &mut bx)?;
            self.drift_into(&y, &mut by)?;
            self.diffusion_into(&x, &mut sx)?;
            self.diffusion_into(&y, &mut sy)?;
            probe.drift = probe.drift.max(dist_sq(&bx, &by).sqrt() / dist);
            probe.diffusion = probe.diffusion.max(dist_sq(&sx, &sy).sqrt() / dist);
        }
        Ok(probe)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LipschitzProbe {
    pub drift: f64,
    pub diffusion: f64,
    pub n_pairs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GrowthReport {
    /// max of (‖σ(x)‖²_HS + ⟨b(x), x⟩)/(1 + |x|²) over the probed points.
    pub c_hat: f64,
    pub worst_point: Vec<f64>,
    pub n_points: usize,
}

fn growth_ratio(
    model: &ModelSpec,
    x: &[f64],
    b: &mut [f64],
    s: &mut [f64],
) -> Result<f64, EvalError> {
    model.drift_into(x, b)?;
    model.diffusion_into(x, s)?;
    let hs: f64 = s.iter().map(|v| v * v).sum();
    let bx: f64 = b.iter().zip(x).map(|(u, v)| u * v).sum();
    let r2: f64 = x.iter().map(|v| v * v).sum();
    Ok((hs + bx) / (1.0 + r2))
}

/// Linear-growth constant estimate from `n_samples` uniform points in
/// `[-box_radius, box_radius]^d`.
pub fn check_linear_growth(
    model: &ModelSpec,
    box_radius: f64,
    n_samples: usize,
    seed: u64,
) -> Result<GrowthReport, ModelError> {
    if n_samples == 0 {
        return Err(ModelError::config("/n_samples", "must be at least 1"));
    }
    let mut rng = rng::stream(seed, Domain::Probe, 2);
    let d = model.d();
    let mut x = vec![0.0; d];
    let (mut b, mut s) = (vec![0.0; d], vec![0.0; d * model.m()]);
    let mut best = GrowthReport {
        c_hat: f64::NEG_INFINITY,
        worst_point: vec![0.0; d],
        n_points: n_samples,
    };
    for _ in 0..n_samples {
        for v in x.iter_mut() {
            *v = rng.gen_range(-box_radius..=box_radius);
        }
        let r = growth_ratio(model, &x, &mut b, &mut s)?;
        if r > best.c_hat {
            best.c_hat = r;
            best.worst_point.copy_from_slice(&x);
        }
    }
    Ok(best)
}

/// Grid version of [`check_linear_growth`]: points `k·spacing` inside the
/// box. Grids for nested boxes are nested, so the result is monotone in
/// `box_radius`.
pub fn check_linear_growth_grid(
    model: &ModelSpec,
    box_radius: f64,
    spacing: f64,
) -> Result<GrowthReport, ModelError> {
    if !(spacing > 0.0) {
        return Err(ModelError::config("/spacing", "must be positive"));
    }
    let d = model.d();
    let k = (box_radius / spacing).floor() as i64;
    let per_dim = (2 * k + 1) as usize;
    let total = per_dim.pow(d as u32);
    let mut x = vec![0.0; d];
    let (mut b, mut s) = (vec![0.0; d], vec![0.0; d * model.m()]);
    let mut best = GrowthReport {
        c_hat: f64::NEG_INFINITY,
        worst_point: vec![0.0; d],
        n_points: total,
    };
    for idx in 0..total {
        let mut rest = idx;
        for v in x.iter_mut() {
            *v = ((rest % per_dim) as i64 - k) as f64 * spacing;
            rest /= per_dim;
        }
        let r = growth_ratio(model, &x, &mut b, &mut s)?;
        if r > best.c_hat {
            best.c_hat = r;
            best.worst_point.copy_from_slice(&x);
        }
    }
    Ok(best)
}

#[inline]
pub(crate) fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum()
}

#[inline]
pub(crate) fn dist(a: &[f64], b: &[f64]) -> f64 {
    dist_sq(a, b).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtins_match_their_expression_encoding() {
        let models = [
            ModelSpec::ou(2, 1.7),
            ModelSpec::double_well(1, 2f64.sqrt()),
            ModelSpec::example22(2, 1.0, 1.0, 0.0),
            ModelSpec::example22(3, 0.5, 1.5, 0.3),
            ModelSpec::brownian(2),
            ModelSpec::ou(2, 1.0)
                .with_constant_sigma(3, vec![1.0, -0.5, 0.0, 0.2, 2.0, 1.0])
                .unwrap(),
        ];
        let mut rng = rng::stream(11, Domain::Probe, 9);
        for m in &models {
            let r = m.reference_expr().unwrap();
            for _ in 0..1000 {
                let x: Vec<f64> = (0..m.d()).map(|_| rng.gen_range(-4.0..4.0)).collect();
                let (a, b) = (m.drift(&x).unwrap(), r.drift(&x).unwrap());
                let (s, t) = (m.diffusion(&x).unwrap(), r.diffusion(&x).unwrap());
                for (u, v) in a.iter().zip(&b).chain(s.iter().zip(&t)) {
                    assert!((u - v).abs() <= 1e-12 * u.abs().max(1.0), "{}: {u} vs {v}", m.name);
                }
            }
        }
    }

    #[test]
    fn shape_errors() {
        assert!(ModelSpec::from_exprs("m", 2, 1, &["x1"], &[&["1"], &["1"]]).is_err());
        assert!(ModelSpec::from_exprs("m", 1, 2, &["x1"], &[&["1"]]).is_err());
        assert!(ModelSpec::from_exprs("m", 1, 1, &["x1"], &[&["1"]]).is_ok());
        assert!(ModelSpec::ou(2, 1.0).with_constant_sigma(2, vec![1.0; 3]).is_err());
    }

    #[test]
    fn ou_growth_is_at_most_one() {
        let r = check_linear_growth(&ModelSpec::ou(1, 1.0), 50.0, 5000, 3).unwrap();
        assert!(r.c_hat <= 1.0);
        // (1 − x²)/(1 + x²) at the worst point.
        let x = r.worst_point[0];
        assert!((r.c_hat - (1.0 - x * x) / (1.0 + x * x)).abs() < 1e-15);
    }

    #[test]
    fn double_well_growth_against_grid_oracle() {
        // (2 + x² − x⁴)/(1 + x²) on a fine 1-d grid; its sup is 2 at x = 0.
        let oracle = (-100_000..=100_000)
            .map(|k| {
                let x = k as f64 * 1e-4;
                (2.0 + x * x - x.powi(4)) / (1.0 + x * x)
            })
            .fold(f64::NEG_INFINITY, f64::max);
        assert!((oracle - 2.0).abs() < 1e-12);
        let r = check_linear_growth(&ModelSpec::double_well(1, 2f64.sqrt()), 10.0, 20_000, 5).unwrap();
        assert!(r.c_hat >= 1.0 && r.c_hat <= 2.0 + 1e-12);
        assert!(r.c_hat > 1.99);
    }

    #[test]
    fn example22_growth_bounded_by_sigma() {
        let m = ModelSpec::example22(2, 1.0, 1.0, 0.0);
        let r = check_linear_growth(&m, 5.0, 20_000, 1).unwrap();
        // ‖σ‖²_HS = 2 for σ = I_2; the drift term only lowers the ratio.
        assert!(r.c_hat <= 2.0);
        let g = check_linear_growth_grid(&m, 5.0, 0.05).unwrap();
        assert!(g.c_hat <= 2.0 && g.c_hat >= r.c_hat - 1e-2);
    }

    #[test]
    fn grid_growth_is_monotone_in_radius() {
        let m = ModelSpec::from_exprs("m", 1, 1, &["sin(3*x1) * x1"], &[&["1 + 0.1*cos(x1)"]]).unwrap();
        let mut prev = f64::NEG_INFINITY;
        for r in [0.5, 1.0, 2.0, 3.5, 7.0] {
            let c = check_linear_growth_grid(&m, r, 0.01).unwrap().c_hat;
            assert!(c >= prev);
            prev = c;
        }
    }

    #[test]
    fn lipschitz_probe_is_finite_on_boxes() {
        let p = ModelSpec::double_well(1, 1.0).lipschitz_probe(2.0, 10_000, 0).unwrap();
        // |b'(x)| = |1 − 3x²| ≤ 11 on [−2, 2].
        assert!(p.drift <= 11.0 && p.drift > 5.0);
        assert_eq!(p.diffusion, 0.0);
    }

    #[test]
    fn validate_flags_undefined_points() {
        let m = ModelSpec::from_exprs("bad", 1, 1, &["log(x1)"], &[&["1"]]).unwrap();
        assert!(matches!(m.validate(1.0, 100, 0), Err(ModelError::NotFinite { .. })));
        assert!(ModelSpec::ou(3, 1.0).validate(10.0, 100, 0).is_ok());
    }
}
