use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{check_paths, check_point, HarnessError};
use crate::coupling::{self, CouplingKind, CouplingRule, PairPath, SimOptions, TimeGrid};
use crate::model::{ModelConfig, ModelSpec};
use crate::ot::{self, EmpiricalMeasure, YoungFunction, YoungSpec};
use crate::rng::{self, Domain};

fn default_distances() -> Vec<YoungSpec> {
    vec![YoungSpec::Power { p: 1.0 }]
}

fn default_true() -> bool {
    true
}

fn default_ot_points() -> usize {
    1024
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContractionConfig {
    pub model: ModelConfig,
    pub coupling: CouplingKind,
    #[serde(default)]
    pub rule: CouplingRule,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub grid: TimeGrid,
    pub n_paths: usize,
    /// Young functions `Φ`; `{"kind": "power", "p": 2}` gives `W_2`.
    #[serde(default = "default_distances")]
    pub distances: Vec<YoungSpec>,
    #[serde(default = "default_true")]
    pub empirical_ot: bool,
    /// Cap on the cloud size for the empirical-OT estimator.
    #[serde(default = "default_ot_points")]
    pub ot_points: usize,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    /// Gauge of `ρ_t` over coupled paths; an upper bound on `W_Φ`.
    CouplingUpperBound,
    /// Exact OT between independently simulated X and Y clouds.
    EmpiricalOt,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractionCurve {
    pub estimator: Estimator,
    pub distance: String,
    /// Exponent for power distances, `None` otherwise.
    pub p: Option<f64>,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub stderr: Vec<f64>,
    pub n_samples: usize,
    /// Per-time distances of every path (coupling estimator only), for the
    /// path bootstrap in [`super::fit_rate`].
    #[serde(skip)]
    pub samples: Option<Vec<Vec<f64>>>,
}

impl ContractionCurve {
    /// Curve from exact values with zero standard error.
    pub fn exact(times: Vec<f64>, values: Vec<f64>) -> ContractionCurve {
        ContractionCurve {
            estimator: Estimator::CouplingUpperBound,
            distance: "exact".into(),
            p: None,
            stderr: vec![0.0; times.len()],
            n_samples: 0,
            times,
            values,
            samples: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractionResult {
    pub rho0: f64,
    pub curves: Vec<ContractionCurve>,
    /// Grid times where the empirical-OT estimate exceeds the coupling
    /// bound by more than 3·(stderr + OT bias allowance).
    pub ordering_violations: usize,
    pub coupled_fraction: f64,
}

impl ContractionResult {
    pub fn curve(&self, estimator: Estimator, index: usize) -> Option<&ContractionCurve> {
        self.curves.iter().filter(|c| c.estimator == estimator).nth(index)
    }
}

/// Gauge of `values` with uniform weights plus a batch-means standard error
/// (exact delta-method error for powers).
fn gauge_with_stderr(values: &[f64], phi: &YoungFunction) -> Result<(f64, f64), HarnessError> {
    if let Some(p) = phi.power_exponent() {
        let curve = coupling::moments_from_columns(&[0.0], &[values.to_vec()], p);
        return Ok((curve.values[0], curve.stderr[0]));
    }
    let value = ot::gauge_norm_uniform(values, phi)?;
    const BATCHES: usize = 16;
    if values.len() < 2 * BATCHES {
        return Ok((value, 0.0));
    }
    let size = values.len() / BATCHES;
    let batch: Vec<f64> = (0..BATCHES)
        .map(|b| ot::gauge_norm_uniform(&values[b * size..(b + 1) * size], phi))
        .collect::<Result<_, _>>()?;
    let (_, se) = coupling::mean_and_stderr(batch.iter().copied());
    Ok((value, se))
}

fn ot_distance(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure, phi: &YoungFunction) -> Result<f64, HarnessError> {
    Ok(match phi.power_exponent() {
        Some(p) => ot::wasserstein_p(mu, nu, p)?.value,
        None if phi.is_infinity() => ot::wasserstein_inf(mu, nu)?.value,
        None => ot::wasserstein_phi(mu, nu, phi, 1e-10)?.value,
    })
}

/// `W` between the two clouds and a standard error from `K = 8` disjoint
/// sub-clouds (`sd_K / √K`).
pub(crate) fn ot_with_stderr(xs: &[Vec<f64>], ys: &[Vec<f64>], phi: &YoungFunction) -> Result<(f64, f64), HarnessError> {
    let full = ot_distance(&EmpiricalMeasure::new(xs)?, &EmpiricalMeasure::new(ys)?, phi)?;
    const K: usize = 8;
    if xs.len() < 2 * K {
        return Ok((full, 0.0));
    }
    let size = xs.len() / K;
    let subs: Vec<f64> = (0..K)
        .map(|k| {
            let r = k * size..(k + 1) * size;
            ot_distance(&EmpiricalMeasure::new(&xs[r.clone()])?, &EmpiricalMeasure::new(&ys[r])?, phi)
        })
        .collect::<Result<_, _>>()?;
    let (_, se_mean) = coupling::mean_and_stderr(subs.iter().copied());
    // A cloud K times larger has about 1/√K of the sub-cloud spread.
    Ok((full, se_mean))
}

pub(crate) fn simulate_ensemble(
    model: &ModelSpec,
    kind: CouplingKind,
    x: &[f64],
    y: &[f64],
    opts: &SimOptions,
    seed: u64,
    n_paths: usize,
) -> Result<Vec<PairPath>, HarnessError> {
    let paths: Result<Vec<PairPath>, _> = (0..n_paths as u64)
        .into_par_iter()
        .map(|i| coupling::simulate_pair(model, kind, x, y, opts, seed, i))
        .collect();
    Ok(paths?)
}

/// Marginal clouds at every recorded time: `out[k][i]` is path `i` at time `k`.
pub(crate) fn simulate_cloud(
    model: &ModelSpec,
    start: &[f64],
    grid: &TimeGrid,
    seed: u64,
    domain: Domain,
    n: usize,
) -> Result<Vec<Vec<Vec<f64>>>, HarnessError> {
    let paths: Result<Vec<Vec<Vec<f64>>>, _> = (0..n as u64)
        .into_par_iter()
        .map(|i| coupling::simulate_marginal(model, start, grid, &mut rng::stream(seed, domain, i)))
        .collect();
    let paths = paths?;
    let n_times = paths.first().map_or(0, Vec::len);
    Ok((0..n_times).map(|k| paths.iter().map(|p| p[k].clone()).collect()).collect())
}

pub fn contraction_experiment(cfg: &ContractionConfig) -> Result<ContractionResult, HarnessError> {
    let model = cfg.model.build()?;
    check_point("/x", &cfg.x, model.d())?;
    check_point("/y", &cfg.y, model.d())?;
    check_paths(cfg.n_paths)?;
    if cfg.distances.is_empty() {
        return Err(HarnessError::config("/distances", "need at least one distance"));
    }
    let phis: Vec<YoungFunction> = cfg
        .distances
        .iter()
        .enumerate()
        .map(|(i, s)| YoungFunction::from_spec(s).map_err(|e| HarnessError::config(&format!("/distances/{i}"), e.to_string())))
        .collect::<Result<_, _>>()?;
    let opts = SimOptions {
        grid: cfg.grid,
        rule: cfg.rule,
        keep_states: false,
    };
    let paths = simulate_ensemble(&model, cfg.coupling, &cfg.x, &cfg.y, &opts, cfg.seed, cfg.n_paths)?;
    let times = paths[0].times.clone();
    let columns: Vec<Vec<f64>> = (0..times.len()).map(|k| paths.iter().map(|q| q.rho[k]).collect()).collect();
    let rho0 = crate::model::dist(&cfg.x, &cfg.y);

    let mut curves = Vec::new();
    for phi in &phis {
        let mut values = Vec::with_capacity(times.len());
        let mut stderr = Vec::with_capacity(times.len());
        for col in &columns {
            let (v, se) = gauge_with_stderr(col, phi)?;
            values.push(v);
            stderr.push(se);
        }
        curves.push(ContractionCurve {
            estimator: Estimator::CouplingUpperBound,
            distance: phi.label(),
            p: phi.power_exponent(),
            times: times.clone(),
            values,
            stderr,
            n_samples: cfg.n_paths,
            samples: Some(columns.clone()),
        });
    }

    let mut ordering_violations = 0;
    if cfg.empirical_ot {
        let n = cfg.n_paths.min(cfg.ot_points.max(2));
        let xs = simulate_cloud(&model, &cfg.x, &cfg.grid, cfg.seed, Domain::MarginalX, n)?;
        let ys = simulate_cloud(&model, &cfg.y, &cfg.grid, cfg.seed, Domain::MarginalY, n)?;
        for (j, phi) in phis.iter().enumerate() {
            let per_time: Result<Vec<(f64, f64)>, HarnessError> =
                (0..times.len()).into_par_iter().map(|k| ot_with_stderr(&xs[k], &ys[k], phi)).collect();
            let (values, stderr): (Vec<f64>, Vec<f64>) = per_time?.into_iter().unzip();
            if let Some(p) = phi.power_exponent() {
                let cub = &curves[j];
                let allowance = (n as f64).powf(-1.0 / (model.d().max(2) as f64 * p));
                ordering_violations += (0..times.len())
                    .filter(|&k| values[k] > cub.values[k] + 3.0 * (stderr[k] + cub.stderr[k] + allowance))
                    .count();
            }
            curves.push(ContractionCurve {
                estimator: Estimator::EmpiricalOt,
                distance: phi.label(),
                p: phi.power_exponent(),
                times: times.clone(),
                values,
                stderr,
                n_samples: n,
                samples: None,
            });
        }
    }
    let coupled = paths.iter().filter(|q| !q.censored).count();
    Ok(ContractionResult {
        rho0,
        curves,
        ordering_violations,
        coupled_fraction: coupled as f64 / cfg.n_paths as f64,
    })
}
