//! Gradient estimate check `|∇P_t f| ≤ e^{−K_p t} (P_t |∇f|^q)^{1/q}`,
//! `q = p/(p−1)`, by Monte Carlo with common random numbers across the
//! finite-difference stencil.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{check_paths, check_point, HarnessError};
use crate::coupling::{self, TimeGrid};
use crate::model::{parse_expr, Expr, ModelConfig, ModelSpec};
use crate::rng::{self, Domain};
use crate::theory::{self, ProbeConfig};

fn default_probes() -> usize {
    20
}

fn default_radius() -> f64 {
    2.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KuwadaConfig {
    pub model: ModelConfig,
    /// Test function in `x1, …, xd`.
    pub f: String,
    pub p: f64,
    pub t: f64,
    pub dt: f64,
    pub n_paths: usize,
    /// Explicit probe points; otherwise `n_probes` Halton points of the box.
    #[serde(default)]
    pub probes: Option<Vec<Vec<f64>>>,
    #[serde(default = "default_probes")]
    pub n_probes: usize,
    #[serde(default = "default_radius")]
    pub probe_radius: f64,
    /// Dissipativity constant; estimated from the model when absent.
    #[serde(default)]
    pub k_p: Option<f64>,
    /// Finite-difference step; `√(MC stderr of P_t f)` when absent.
    #[serde(default)]
    pub fd_step: Option<f64>,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KuwadaProbe {
    pub x: Vec<f64>,
    /// `|∇P_t f|(x)`.
    pub lhs: f64,
    /// `e^{−K_p t} (P_t|∇f|^q)^{1/q}(x)`.
    pub rhs: f64,
    pub ratio: f64,
    /// Propagated standard error of the ratio (MC and FD bias).
    pub ratio_error: f64,
    pub fd_step: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KuwadaReport {
    pub k_p: f64,
    pub q: f64,
    pub probes: Vec<KuwadaProbe>,
    pub max_ratio: f64,
    pub passed: bool,
}

/// Endpoints at time `t` of `n` paths from `x`; path `i` always uses the
/// same stream, so calls from different starts share their noise.
fn endpoints(model: &ModelSpec, x: &[f64], grid: &TimeGrid, seed: u64, n: usize) -> Result<Vec<Vec<f64>>, HarnessError> {
    let out: Result<Vec<Vec<f64>>, _> = (0..n as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng::stream(seed, Domain::Kuwada, i);
            coupling::simulate_marginal(model, x, grid, &mut rng).map(|mut v| v.pop().expect("endpoint"))
        })
        .collect();
    Ok(out?)
}

fn eval_f(f: &Expr, x: &[f64]) -> Result<f64, HarnessError> {
    f.eval(x).map_err(|e| HarnessError::Model(e.into()))
}

/// `|∇f(x)|` by central differences with a fixed small step.
fn grad_norm(f: &Expr, x: &[f64]) -> Result<f64, HarnessError> {
    let mut total = 0.0;
    let mut z = x.to_vec();
    for j in 0..x.len() {
        let h = 1e-5 * (1.0 + x[j].abs());
        z[j] = x[j] + h;
        let up = eval_f(f, &z)?;
        z[j] = x[j] - h;
        let down = eval_f(f, &z)?;
        z[j] = x[j];
        total += ((up - down) / (2.0 * h)).powi(2);
    }
    Ok(total.sqrt())
}

fn mean_se(v: &[f64]) -> (f64, f64) {
    crate::coupling::mean_and_stderr(v.iter().copied())
}

pub fn kuwada_check(cfg: &KuwadaConfig) -> Result<KuwadaReport, HarnessError> {
    let model = cfg.model.build()?;
    let d = model.d();
    check_paths(cfg.n_paths)?;
    if !(cfg.p > 1.0 && cfg.p.is_finite()) {
        return Err(HarnessError::config("/p", "p must be finite and exceed 1"));
    }
    let f = parse_expr(&cfg.f, d).map_err(|e| HarnessError::config("/f", e.to_string()))?;
    let grid = TimeGrid::new(cfg.t, cfg.dt, 1);
    let n_steps = grid.n_steps()?;
    let grid = TimeGrid::new(cfg.t, cfg.dt, n_steps);
    let probes: Vec<Vec<f64>> = match &cfg.probes {
        Some(p) => p.clone(),
        None => (0..cfg.n_probes as u64)
            .map(|k| rng::halton(k + 1, d).iter().map(|u| cfg.probe_radius * (2.0 * u - 1.0)).collect())
            .collect(),
    };
    for (i, x) in probes.iter().enumerate() {
        check_point(&format!("/probes/{i}"), x, d)?;
    }
    let k_p = match cfg.k_p {
        Some(k) => k,
        None => {
            let radius = probes.iter().flatten().fold(cfg.probe_radius, |m, c| m.max(c.abs())) + 1.0;
            let probe = ProbeConfig {
                box_radius: radius,
                n_pairs: 2000,
                grid_points: 31,
                refine_steps: 10,
                seed: cfg.seed,
            };
            theory::estimate_kp(&model, cfg.p, &probe)?.constant("K_p").expect("K_p reported")
        }
    };
    let q = cfg.p / (cfg.p - 1.0);
    let decay = (-k_p * cfg.t).exp();

    let mut out = Vec::with_capacity(probes.len());
    for x in &probes {
        let center = endpoints(&model, x, &grid, cfg.seed, cfg.n_paths)?;
        let fx: Vec<f64> = center.iter().map(|e| eval_f(&f, e)).collect::<Result<_, _>>()?;
        let eta = match cfg.fd_step {
            Some(h) => h,
            None => mean_se(&fx).1.sqrt(),
        };
        let floor = 1e-6 * (1.0 + x.iter().fold(0.0f64, |m, c| m.max(c.abs())));
        if !(eta.is_finite() && eta >= floor) {
            return Err(HarnessError::Stencil(format!(
                "step {eta:e} at {x:?} is below the rounding floor {floor:e}"
            )));
        }
        // Per-path central differences at steps η and 2η.
        let diff = |j: usize, h: f64| -> Result<Vec<f64>, HarnessError> {
            let mut up = x.clone();
            up[j] += h;
            let mut down = x.clone();
            down[j] -= h;
            let (eu, ed) = (endpoints(&model, &up, &grid, cfg.seed, cfg.n_paths)?, endpoints(&model, &down, &grid, cfg.seed, cfg.n_paths)?);
            eu.iter()
                .zip(&ed)
                .map(|(a, b)| Ok((eval_f(&f, a)? - eval_f(&f, b)?) / (2.0 * h)))
                .collect()
        };
        let mut grad = Vec::with_capacity(d);
        let mut grad_var = Vec::with_capacity(d);
        for j in 0..d {
            let (g1, se1) = mean_se(&diff(j, eta)?);
            let (g2, _) = mean_se(&diff(j, 2.0 * eta)?);
            // Richardson estimate of the O(η²) bias.
            let bias = (g2 - g1).abs() / 3.0;
            grad.push(g1);
            grad_var.push(se1 * se1 + bias * bias);
        }
        let lhs = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        let lhs_se = if lhs > 0.0 {
            grad.iter().zip(&grad_var).map(|(g, v)| g * g / (lhs * lhs) * v).sum::<f64>().sqrt()
        } else {
            grad_var.iter().sum::<f64>().sqrt()
        };
        let powers: Vec<f64> = center
            .iter()
            .map(|e| grad_norm(&f, e).map(|g| g.powf(q)))
            .collect::<Result<_, _>>()?;
        let (m, m_se) = mean_se(&powers);
        let rhs = decay * m.powf(1.0 / q);
        let rhs_se = if m > 0.0 { rhs * m_se / (q * m) } else { 0.0 };
        let (ratio, ratio_error) = if rhs > 0.0 {
            let r = lhs / rhs;
            (r, (lhs_se / rhs).hypot(r * rhs_se / rhs))
        } else {
            (if lhs > 0.0 { f64::INFINITY } else { 0.0 }, 0.0)
        };
        out.push(KuwadaProbe {
            x: x.clone(),
            lhs,
            rhs,
            ratio,
            ratio_error,
            fd_step: eta,
            passed: ratio <= 1.0 + 3.0 * ratio_error,
        });
    }
    let max_ratio = out.iter().map(|p| p.ratio).fold(0.0, f64::max);
    Ok(KuwadaReport {
        k_p,
        q,
        passed: out.iter().all(|p| p.passed),
        probes: out,
        max_ratio,
    })
}
