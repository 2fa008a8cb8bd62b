//! Log-linear fit `Ŵ(t) ≈ ĉ e^{−λ̂ t}` on the usable decay window.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{ContractionCurve, HarnessError};
use crate::ot::{self, YoungFunction};
use crate::rng::{self, Domain};
use crate::theory::RateReport;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitOptions {
    /// Path-bootstrap resamples (used when the curve carries samples).
    pub n_boot: usize,
    pub seed: u64,
    /// Initial distance for the envelope `c e^{−c1 t} ρ0`.
    pub rho0: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            n_boot: 200,
            seed: 0,
            rho0: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub c_hat: f64,
    pub lambda_hat: f64,
    /// 95% intervals: bootstrap percentiles, or ±1.96 OLS standard errors.
    pub c_ci: [f64; 2],
    pub lambda_ci: [f64; 2],
    pub ci_method: String,
    pub window: [f64; 2],
    pub n_points: usize,
    pub theory_c: Option<f64>,
    pub theory_rate: Option<f64>,
    /// Grid times with `Ŵ > c e^{−c1 t} ρ0 + 3·stderr`.
    pub envelope_violations: Option<usize>,
}

/// Ordinary least squares of `y` on `t`: (intercept, slope, se_intercept, se_slope).
fn ols(t: &[f64], y: &[f64]) -> (f64, f64, f64, f64) {
    let n = t.len() as f64;
    let tm = t.iter().sum::<f64>() / n;
    let ym = y.iter().sum::<f64>() / n;
    let sxx: f64 = t.iter().map(|a| (a - tm) * (a - tm)).sum();
    let sxy: f64 = t.iter().zip(y).map(|(a, b)| (a - tm) * (b - ym)).sum();
    let slope = sxy / sxx;
    let intercept = ym - slope * tm;
    let rss: f64 = t.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    let s2 = if t.len() > 2 { rss / (n - 2.0) } else { 0.0 };
    let se_slope = (s2 / sxx).sqrt();
    let se_intercept = (s2 * (1.0 / n + tm * tm / sxx)).sqrt();
    (intercept, slope, se_intercept, se_slope)
}

/// Indices of the fit window: from the first time with `Ŵ < Ŵ(0)/2`, while
/// `Ŵ > 3·stderr` (and `Ŵ > 0`).
fn window(curve: &ContractionCurve) -> Result<Vec<usize>, HarnessError> {
    let v0 = curve.values.first().copied().unwrap_or(0.0);
    let start = curve
        .values
        .iter()
        .position(|&v| v < 0.5 * v0)
        .ok_or_else(|| HarnessError::InsufficientDecay("curve never falls below half its initial value".into()))?;
    let usable = |k: usize| curve.values[k] > 0.0 && curve.values[k] > 3.0 * curve.stderr[k];
    let idx: Vec<usize> = (start..curve.values.len()).take_while(|&k| usable(k)).collect();
    if idx.len() < 4 {
        return Err(HarnessError::InsufficientDecay(format!(
            "only {} usable points after burn-in at t = {}",
            idx.len(),
            curve.times[start]
        )));
    }
    Ok(idx)
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn fit_rate(curve: &ContractionCurve, theory: Option<&RateReport>, opts: &FitOptions) -> Result<FitReport, HarnessError> {
    let idx = window(curve)?;
    let t: Vec<f64> = idx.iter().map(|&k| curve.times[k]).collect();
    let y: Vec<f64> = idx.iter().map(|&k| curve.values[k].ln()).collect();
    let (a, b, se_a, se_b) = ols(&t, &y);
    let (c_hat, lambda_hat) = (a.exp(), -b);

    let (c_ci, lambda_ci, method) = match (&curve.samples, opts.n_boot) {
        (Some(samples), n_boot) if n_boot >= 20 => {
            let phi = match curve.p {
                Some(p) => YoungFunction::power(p)?,
                None => {
                    return Err(HarnessError::config("/distance", "bootstrap needs a power distance"));
                }
            };
            let n = samples[0].len();
            let mut lambdas = Vec::with_capacity(n_boot);
            let mut cs = Vec::with_capacity(n_boot);
            for r in 0..n_boot as u64 {
                let mut rng = rng::stream(opts.seed, Domain::Bootstrap, r);
                let pick: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
                let mut yb = Vec::with_capacity(idx.len());
                for &k in &idx {
                    let col: Vec<f64> = pick.iter().map(|&i| samples[k][i]).collect();
                    yb.push(ot::gauge_norm_uniform(&col, &phi)?.max(f64::MIN_POSITIVE).ln());
                }
                let (ab, bb, _, _) = ols(&t, &yb);
                lambdas.push(-bb);
                cs.push(ab.exp());
            }
            lambdas.sort_by(f64::total_cmp);
            cs.sort_by(f64::total_cmp);
            (
                [percentile(&cs, 0.025), percentile(&cs, 0.975)],
                [percentile(&lambdas, 0.025), percentile(&lambdas, 0.975)],
                format!("path bootstrap ({n_boot} resamples)"),
            )
        }
        _ => (
            [(a - 1.96 * se_a).exp(), (a + 1.96 * se_a).exp()],
            [lambda_hat - 1.96 * se_b, lambda_hat + 1.96 * se_b],
            "ols".to_string(),
        ),
    };

    let envelope_violations = theory.map(|rep| {
        (0..curve.times.len())
            .filter(|&k| curve.values[k] > rep.bound(curve.times[k], opts.rho0) + 3.0 * curve.stderr[k])
            .count()
    });
    Ok(FitReport {
        c_hat,
        lambda_hat,
        c_ci,
        lambda_ci,
        ci_method: method,
        window: [t[0], t[t.len() - 1]],
        n_points: t.len(),
        theory_c: theory.map(|r| r.c),
        theory_rate: theory.map(|r| r.c1),
        envelope_violations,
    })
}
