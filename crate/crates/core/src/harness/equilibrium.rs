//! `t ↦ Ŵ_2(δ_x P_t, μ̂)` against a reference sample `μ̂` of the invariant
//! law taken from one long trajectory.

use serde::{Deserialize, Serialize};

use super::contraction::{ot_with_stderr, simulate_cloud};
use super::{check_point, HarnessError};
use crate::coupling::{self, TimeGrid};
use crate::model::ModelConfig;
use crate::ot::YoungFunction;
use crate::rng::{self, Domain};

fn default_burn_in() -> f64 {
    20.0
}

fn default_pilot() -> f64 {
    200.0
}

fn default_record() -> f64 {
    0.25
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EquilibriumConfig {
    pub model: ModelConfig,
    pub x: Vec<f64>,
    pub horizon: f64,
    pub dt: f64,
    /// Output spacing of the curve.
    #[serde(default = "default_record")]
    pub record: f64,
    /// Size of both the reference sample and the fresh clouds.
    pub n: usize,
    #[serde(default = "default_burn_in")]
    pub burn_in: f64,
    /// Subsampling spacing of the long trajectory; `10/λ̂` from a pilot run
    /// when absent.
    #[serde(default)]
    pub spacing: Option<f64>,
    #[serde(default = "default_pilot")]
    pub pilot_horizon: f64,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumCurve {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub stderr: Vec<f64>,
    pub n: usize,
    pub spacing: f64,
    /// Rate from the pilot autocorrelation (`None` if `spacing` was given).
    pub pilot_rate: Option<f64>,
}

/// `W_2(N(x e^{−Kt}, v_t), N(0, s²/K))` for the scalar OU process
/// `dX = −K X dt + √2 s dB`, `v_t = (s²/K)(1 − e^{−2Kt})`.
pub fn gaussian_w2_ou(x: f64, t: f64, k: f64, s: f64) -> f64 {
    let var_inf = s * s / k;
    let mean = x * (-k * t).exp();
    let sd = (var_inf * -(-2.0 * k * t).exp_m1()).sqrt();
    (mean * mean + (sd - var_inf.sqrt()).powi(2)).sqrt()
}

fn steps(span: f64, dt: f64, pointer: &str) -> Result<usize, HarnessError> {
    let n = (span / dt).round();
    if !(n >= 1.0) || (n * dt - span).abs() > 1e-9 * span.max(1.0) {
        return Err(HarnessError::config(pointer, format!("{span} is not a positive multiple of dt = {dt}")));
    }
    Ok(n as usize)
}

/// Lag-one autocorrelation of the first coordinate.
fn autocorrelation(series: &[Vec<f64>]) -> f64 {
    let v: Vec<f64> = series.iter().map(|p| p[0]).collect();
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    let var: f64 = v.iter().map(|a| (a - mean).powi(2)).sum();
    let cov: f64 = v.windows(2).map(|w| (w[0] - mean) * (w[1] - mean)).sum();
    cov / var
}

pub fn equilibrium_experiment(cfg: &EquilibriumConfig) -> Result<EquilibriumCurve, HarnessError> {
    let model = cfg.model.build()?;
    check_point("/x", &cfg.x, model.d())?;
    if cfg.n < 2 {
        return Err(HarnessError::config("/n", "need at least 2 samples"));
    }
    let origin = vec![0.0; model.d()];
    let (spacing, pilot_rate) = match cfg.spacing {
        Some(s) => (s, None),
        None => {
            let lag = steps(1.0, cfg.dt, "/dt")?;
            let grid = TimeGrid::new(cfg.burn_in + cfg.pilot_horizon, cfg.dt, lag);
            let mut rng = rng::stream(cfg.seed, Domain::Equilibrium, 0);
            let path = coupling::simulate_marginal(&model, &origin, &grid, &mut rng)?;
            let skip = cfg.burn_in.max(0.0).round() as usize;
            let ac = autocorrelation(&path[skip.min(path.len() - 2)..]);
            let rate = if ac.is_finite() && ac > 0.0 { (-ac.ln()).clamp(0.05, 20.0) } else { 20.0 };
            // Round to a whole number of steps.
            let s = ((10.0 / rate) / cfg.dt).ceil() * cfg.dt;
            (s, Some(rate))
        }
    };
    let every = steps(spacing, cfg.dt, "/spacing")?;
    let burn = (cfg.burn_in.max(0.0) / spacing).ceil() as usize * every;
    let long = TimeGrid::new((burn + every * cfg.n) as f64 * cfg.dt, cfg.dt, every);
    let mut rng = rng::stream(cfg.seed, Domain::Equilibrium, 1);
    let path = coupling::simulate_marginal(&model, &origin, &long, &mut rng)?;
    let reference: Vec<Vec<f64>> = path[path.len() - cfg.n..].to_vec();

    let record = steps(cfg.record, cfg.dt, "/record")?;
    let grid = TimeGrid::new(cfg.horizon, cfg.dt, record);
    let times = grid.times()?;
    let clouds = simulate_cloud(&model, &cfg.x, &grid, cfg.seed, Domain::MarginalX, cfg.n)?;
    let phi = YoungFunction::power(2.0)?;
    let mut values = Vec::with_capacity(times.len());
    let mut stderr = Vec::with_capacity(times.len());
    for cloud in &clouds {
        let (v, se) = ot_with_stderr(cloud, &reference, &phi)?;
        values.push(v);
        stderr.push(se);
    }
    Ok(EquilibriumCurve {
        times,
        values,
        stderr,
        n: cfg.n,
        spacing,
        pilot_rate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_form_limits() {
        assert!((gaussian_w2_ou(2.0, 0.0, 1.0, 1.0) - 5f64.sqrt()).abs() < 1e-15);
        assert!(gaussian_w2_ou(2.0, 40.0, 1.0, 1.0) < 1e-15);
        // Started at the mean: only the spread differs.
        let t: f64 = 0.3;
        assert!((gaussian_w2_ou(0.0, t, 1.0, 1.0) - (1.0 - (1.0 - (-2.0 * t).exp()).sqrt())).abs() < 1e-15);
    }
}
