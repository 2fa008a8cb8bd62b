use serde::{Deserialize, Serialize};

use super::contraction::simulate_ensemble;
use super::{check_paths, check_point, HarnessError};
use crate::coupling::{CouplingKind, CouplingRule, SimOptions, TimeGrid};
use crate::model::ModelConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouplingTimeConfig {
    pub model: ModelConfig,
    pub coupling: CouplingKind,
    #[serde(default)]
    pub rule: CouplingRule,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub grid: TimeGrid,
    pub n_paths: usize,
    #[serde(default)]
    pub seed: u64,
}

/// Direct empirical survival `P̂(T > t)` on the output grid with binomial
/// standard errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalCurve {
    pub times: Vec<f64>,
    pub survival: Vec<f64>,
    pub stderr: Vec<f64>,
    pub n_paths: usize,
    /// Fraction not coupled within the horizon.
    pub censored_fraction: f64,
    /// Coupling times of the coupled paths, in path order.
    pub coupling_times: Vec<f64>,
}

impl SurvivalCurve {
    /// Survival at an arbitrary `t` from the recorded coupling times.
    pub fn at(&self, t: f64) -> (f64, f64) {
        // Same rounding allowance as `PairPath::coupled_at`, so grid times agree.
        let cut = t + 1e-12 * t.max(1.0);
        let alive = self.coupling_times.iter().filter(|&&tau| tau > cut).count() as f64
            + self.censored_fraction * self.n_paths as f64;
        let p = alive / self.n_paths as f64;
        (p, (p * (1.0 - p) / self.n_paths as f64).sqrt())
    }
}

pub fn coupling_time_experiment(cfg: &CouplingTimeConfig) -> Result<SurvivalCurve, HarnessError> {
    let model = cfg.model.build()?;
    check_point("/x", &cfg.x, model.d())?;
    check_point("/y", &cfg.y, model.d())?;
    check_paths(cfg.n_paths)?;
    if matches!(cfg.coupling, CouplingKind::Synchronous) {
        return Err(HarnessError::config("/coupling", "coupling times need a reflection or hybrid coupling"));
    }
    let opts = SimOptions {
        grid: cfg.grid,
        rule: cfg.rule,
        keep_states: false,
    };
    let paths = simulate_ensemble(&model, cfg.coupling, &cfg.x, &cfg.y, &opts, cfg.seed, cfg.n_paths)?;
    let n = cfg.n_paths as f64;
    let times = paths[0].times.clone();
    let mut survival = Vec::with_capacity(times.len());
    let mut stderr = Vec::with_capacity(times.len());
    for k in 0..times.len() {
        let alive = paths.iter().filter(|q| !q.coupled_at(k)).count() as f64;
        let p = alive / n;
        survival.push(p);
        stderr.push((p * (1.0 - p) / n).sqrt());
    }
    let coupling_times: Vec<f64> = paths.iter().filter_map(|q| q.coupling_time).collect();
    Ok(SurvivalCurve {
        censored_fraction: (cfg.n_paths - coupling_times.len()) as f64 / n,
        times,
        survival,
        stderr,
        n_paths: cfg.n_paths,
        coupling_times,
    })
}
