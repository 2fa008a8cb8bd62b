//! Pairs of Euler–Maruyama solutions of the same SDE driven by coupled noise.
//!
//! With `σσ* ⪰ λ0² I` the noise splits as `σ0 dB' + λ0 dB''`,
//! `σ0 = √(σσ* − λ0² I)`. The `B'` part is always shared (synchronous); the
//! `λ0 dB''` part is mirrored across the chord between the two states
//! (reflection), and for the hybrid coupling it is further split as
//! `h(ρ) dB'' + g(ρ) dW` with only the `h` part mirrored.
//!
//! The mirror orientation is fixed by the sign of the first non-zero
//! coordinate of `X − Y`, not by which particle is called `X`. Swapping the
//! starting points therefore swaps the paths exactly and leaves the distance
//! process unchanged bit for bit.

mod cutoff;
pub mod dump;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cutoff::CutoffProfile;

use crate::linalg::{self, Indefinite};
use crate::model::{EvalError, ModelSpec};
use crate::rng::{self, Domain};

/// Paths are aborted once a coordinate exceeds this magnitude.
pub const DIVERGENCE_BOUND: f64 = 1e8;

#[derive(Debug, Error)]
pub enum CouplingError {
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("λ0² = {lambda0_sq} exceeds the smallest eigenvalue of σσ* ({min_eig}) at t = {t}")]
    EigenvalueViolation { t: f64, lambda0_sq: f64, min_eig: f64 },
    #[error("path diverged at t = {t} (|state| > {DIVERGENCE_BOUND:e} or non-finite)")]
    NonFinite { t: f64 },
    #[error("invalid time grid: {0}")]
    InvalidGrid(String),
    #[error("invalid coupling: {0}")]
    InvalidKind(String),
    #[error("no paths given")]
    EmptyInput,
    #[error("paths do not share a time grid")]
    GridMismatch,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CouplingKind {
    Synchronous,
    Reflection { lambda0: f64 },
    Hybrid { lambda0: f64, r0: f64 },
}

impl CouplingKind {
    pub fn hybrid(lambda0: f64, cutoff: CutoffProfile) -> CouplingKind {
        CouplingKind::Hybrid {
            lambda0,
            r0: cutoff.r0,
        }
    }

    pub fn lambda0(&self) -> Option<f64> {
        match *self {
            CouplingKind::Synchronous => None,
            CouplingKind::Reflection { lambda0 } | CouplingKind::Hybrid { lambda0, .. } => {
                Some(lambda0)
            }
        }
    }

    pub fn cutoff(&self) -> Option<CutoffProfile> {
        match *self {
            CouplingKind::Hybrid { r0, .. } => Some(CutoffProfile::new(r0)),
            _ => None,
        }
    }

    /// Weights `(h, g)` of the mirrored and shared parts of `λ0 dB''`.
    #[inline]
    pub fn weights(&self, rho: f64) -> (f64, f64) {
        match *self {
            CouplingKind::Synchronous => (0.0, 1.0),
            CouplingKind::Reflection { .. } => (1.0, 0.0),
            CouplingKind::Hybrid { r0, .. } => CutoffProfile { r0 }.eval(rho),
        }
    }

    fn validate(&self) -> Result<(), CouplingError> {
        match *self {
            CouplingKind::Synchronous => Ok(()),
            CouplingKind::Reflection { lambda0 } if lambda0 > 0.0 && lambda0.is_finite() => Ok(()),
            CouplingKind::Hybrid { lambda0, r0 } if lambda0 > 0.0 && r0 >= 0.0 => Ok(()),
            k => Err(CouplingError::InvalidKind(format!(
                "{k:?}: λ0 must be positive and r0 non-negative"
            ))),
        }
    }
}

/// When a discrete reflected pair is declared coupled.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "rule", rename_all = "snake_case", deny_unknown_fields)]
pub enum CouplingRule {
    /// Only when the pair crosses along the chord within a step.
    Crossing,
    /// Crossing, or a hit of zero by the Brownian bridge of the distance
    /// between the two grid values (probability `exp(−2ρρ'/(v·dt))` with
    /// `v` the local variance rate of the distance).
    #[default]
    Bridge,
    /// Crossing, or `ρ ≤ factor · λ0 · √dt` after the step.
    Threshold { factor: f64 },
}

impl CouplingRule {
    /// Whether a pair that did not cross during the step is declared coupled.
    /// `extra` is `|(σ0(X) − σ0(Y))ᵀ e|²`.
    #[inline]
    #[allow(clippy::too_many_arguments)]
    fn hits(&self, lambda0: f64, h: f64, extra: f64, dt: f64, rho: f64, rho_next: f64, uniform: f64) -> bool {
        match *self {
            CouplingRule::Crossing => false,
            CouplingRule::Threshold { factor } => rho_next <= factor * lambda0 * dt.sqrt(),
            CouplingRule::Bridge => {
                let rate = 8.0 * lambda0 * lambda0 * h * h + 2.0 * extra;
                // exp(−38) is below the smallest uniform draw.
                let arg = -2.0 * rho * rho_next / (rate * dt);
                rate > 0.0 && arg > -38.0 && uniform < arg.exp()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoupledState {
    pub t: f64,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub coupled: bool,
    pub coupling_time: Option<f64>,
}

impl CoupledState {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> CoupledState {
        let coupled = x == y;
        CoupledState {
            t: 0.0,
            x,
            y,
            coupled,
            coupling_time: coupled.then_some(0.0),
        }
    }

    pub fn rho(&self) -> f64 {
        if self.coupled {
            0.0
        } else {
            linalg::norm(&linalg::sub(&self.x, &self.y))
        }
    }
}

/// Standard normal blocks for one step; scaled by `√dt` inside the step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepNoise {
    /// m-block driving `σ` under the synchronous coupling.
    pub sync: Vec<f64>,
    /// d-block for `B'` (through `σ0`).
    pub b_prime: Vec<f64>,
    /// d-block for the mirrored channel `B''`.
    pub b_second: Vec<f64>,
    /// d-block for the shared part of the hybrid split.
    pub b_extra: Vec<f64>,
    /// Uniform on (0,1) for the bridge hitting test.
    pub uniform: f64,
}

impl StepNoise {
    pub fn zeros(d: usize, m: usize) -> StepNoise {
        StepNoise {
            sync: vec![0.0; m],
            b_prime: vec![0.0; d],
            b_second: vec![0.0; d],
            b_extra: vec![0.0; d],
            uniform: 0.5,
        }
    }

    /// Draws the blocks `kind` consumes, always in the same order.
    pub fn draw<R: Rng + ?Sized>(&mut self, rng: &mut R, kind: &CouplingKind, rule: CouplingRule) {
        match kind {
            CouplingKind::Synchronous => rng::fill_normal(rng, &mut self.sync),
            CouplingKind::Reflection { .. } | CouplingKind::Hybrid { .. } => {
                rng::fill_normal(rng, &mut self.b_prime);
                rng::fill_normal(rng, &mut self.b_second);
                if matches!(kind, CouplingKind::Hybrid { .. }) {
                    rng::fill_normal(rng, &mut self.b_extra);
                }
                if rule == CouplingRule::Bridge {
                    self.uniform = rng::uniform_open(rng);
                }
            }
        }
    }
}

/// One-step map for a coupled pair with preallocated scratch space.
pub struct PairStepper<'m> {
    model: &'m ModelSpec,
    kind: CouplingKind,
    rule: CouplingRule,
    dt: f64,
    scale: f64,
    sigma0_const: Option<Vec<f64>>,
    bx: Vec<f64>,
    by: Vec<f64>,
    sx: Vec<f64>,
    sy: Vec<f64>,
    s0x: Vec<f64>,
    s0y: Vec<f64>,
    vx: Vec<f64>,
    vy: Vec<f64>,
    e: Vec<f64>,
}

impl<'m> PairStepper<'m> {
    pub fn new(
        model: &'m ModelSpec,
        kind: CouplingKind,
        rule: CouplingRule,
        dt: f64,
    ) -> Result<PairStepper<'m>, CouplingError> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(CouplingError::InvalidGrid(format!("dt must be positive, got {dt}")));
        }
        kind.validate()?;
        let (d, m) = (model.d(), model.m());
        let mut stepper = PairStepper {
            model,
            kind,
            rule,
            dt,
            scale: 2f64.sqrt() * dt.sqrt(),
            sigma0_const: None,
            bx: vec![0.0; d],
            by: vec![0.0; d],
            sx: vec![0.0; d * m],
            sy: vec![0.0; d * m],
            s0x: vec![0.0; d * d],
            s0y: vec![0.0; d * d],
            vx: vec![0.0; d],
            vy: vec![0.0; d],
            e: vec![0.0; d],
        };
        if let (Some(l0), true) = (kind.lambda0(), model.diffusion_field().is_constant()) {
            let zero = vec![0.0; d];
            model.diffusion_into(&zero, &mut stepper.sx)?;
            let a = linalg::gram(&stepper.sx, d, m);
            stepper.sigma0_const = Some(sigma0_or_violation(&a, d, l0, 0.0)?);
        }
        Ok(stepper)
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    #[inline]
    fn sigma0_into(&mut self, which_y: bool, t: f64) -> Result<(), CouplingError> {
        let (d, m) = (self.model.d(), self.model.m());
        let l0 = self.kind.lambda0().unwrap_or(0.0);
        let (s, out) = if which_y {
            (&self.sy, &mut self.s0y)
        } else {
            (&self.sx, &mut self.s0x)
        };
        let a = linalg::gram(s, d, m);
        *out = sigma0_or_violation(&a, d, l0, t)?;
        Ok(())
    }

    /// Advances `state` by one step of size `dt`.
    pub fn step(&mut self, state: &mut CoupledState, noise: &StepNoise) -> Result<(), CouplingError> {
        let d = self.model.d();
        let m = self.model.m();
        let dt = self.dt;
        let t_next = state.t + dt;

        if let CouplingKind::Synchronous = self.kind {
            self.model.drift_into(&state.x, &mut self.bx)?;
            self.model.diffusion_into(&state.x, &mut self.sx)?;
            linalg::matvec(&self.sx, m, &noise.sync, &mut self.vx);
            advance(&mut state.x, &self.bx, &self.vx, dt, self.scale);
            if state.coupled {
                state.y.copy_from_slice(&state.x);
            } else {
                self.model.drift_into(&state.y, &mut self.by)?;
                self.model.diffusion_into(&state.y, &mut self.sy)?;
                linalg::matvec(&self.sy, m, &noise.sync, &mut self.vy);
                advance(&mut state.y, &self.by, &self.vy, dt, self.scale);
                if state.x == state.y {
                    state.coupled = true;
                    state.coupling_time = Some(t_next);
                }
            }
            state.t = t_next;
            return check_finite(state);
        }

        let lambda0 = self.kind.lambda0().expect("mirrored kinds carry λ0");
        let diffusion_const = self.sigma0_const.is_some();
        if !diffusion_const {
            self.model.diffusion_into(&state.x, &mut self.sx)?;
            self.sigma0_into(false, state.t)?;
            if !state.coupled {
                self.model.diffusion_into(&state.y, &mut self.sy)?;
                self.sigma0_into(true, state.t)?;
            }
        }
        let PairStepper {
            model,
            kind,
            rule,
            scale,
            sigma0_const,
            bx,
            by,
            s0x,
            s0y,
            vx,
            vy,
            e,
            ..
        } = self;
        let (s0x, s0y): (&[f64], &[f64]) = match sigma0_const {
            Some(s) => (s, s),
            None => (s0x, s0y),
        };
        if d == 1 && !state.coupled {
            let (x, y) = (state.x[0], state.y[0]);
            let z = x - y;
            let rho = z.abs();
            let (h, g) = kind.weights(rho);
            let ahead = noise.b_second[0];
            let (nx, ny) = if z > 0.0 { (ahead, -ahead) } else { (-ahead, ahead) };
            let shared = g * noise.b_extra[0];
            let vx = s0x[0] * noise.b_prime[0] + lambda0 * (h * nx + shared);
            let vy = s0y[0] * noise.b_prime[0] + lambda0 * (h * ny + shared);
            let x_next = x + model.drift_scalar(x)? * dt + *scale * vx;
            let y_next = y + model.drift_scalar(y)? * dt + *scale * vy;
            state.t = t_next;
            if !(x_next.abs() <= DIVERGENCE_BOUND && y_next.abs() <= DIVERGENCE_BOUND) {
                return Err(CouplingError::NonFinite { t: t_next });
            }
            let z_next = x_next - y_next;
            let ds = s0x[0] - s0y[0];
            let coupled = z_next * z <= 0.0
                || rule.hits(lambda0, h, ds * ds, dt, rho, z_next.abs(), noise.uniform);
            state.x[0] = x_next;
            state.y[0] = if coupled { x_next } else { y_next };
            if coupled {
                state.coupled = true;
                state.coupling_time = Some(t_next);
            }
            return Ok(());
        }
        model.drift_into(&state.x, bx)?;

        if state.coupled {
            // Glued: the pair moves as one particle.
            linalg::matvec(s0x, d, &noise.b_prime, vx);
            for (v, b2) in vx.iter_mut().zip(&noise.b_second) {
                *v += lambda0 * b2;
            }
            advance(&mut state.x, bx, vx, dt, *scale);
            state.y.copy_from_slice(&state.x);
            state.t = t_next;
            return check_finite(state);
        }
        model.drift_into(&state.y, by)?;


        let mut rho_sq = 0.0;
        let mut sign = 0.0;
        for (xi, yi) in state.x.iter().zip(&state.y) {
            let z = xi - yi;
            rho_sq += z * z;
            if sign == 0.0 && z != 0.0 {
                sign = z.signum();
            }
        }
        let rho = rho_sq.sqrt();
        for ((ei, xi), yi) in e.iter_mut().zip(&state.x).zip(&state.y) {
            *ei = sign * (xi - yi) / rho;
        }
        let (h, g) = kind.weights(rho);

        // ê = sign·(X − Y)/ρ is label independent; the particle ahead along ê
        // receives B'' and the other its mirror image.
        let xi = linalg::dot(e, &noise.b_second);
        linalg::matvec(s0x, d, &noise.b_prime, vx);
        linalg::matvec(s0y, d, &noise.b_prime, vy);
        for i in 0..d {
            let ahead = noise.b_second[i];
            let behind = ahead - 2.0 * xi * e[i];
            let (nx, ny) = if sign > 0.0 { (ahead, behind) } else { (behind, ahead) };
            let shared = g * noise.b_extra[i];
            vx[i] += lambda0 * (h * nx + shared);
            vy[i] += lambda0 * (h * ny + shared);
        }
        advance(&mut state.x, bx, vx, dt, *scale);
        advance(&mut state.y, by, vy, dt, *scale);
        state.t = t_next;
        check_finite(state)?;

        let mut proj = 0.0;
        let mut rho_next_sq = 0.0;
        for ((xi, yi), ei) in state.x.iter().zip(&state.y).zip(e.iter()) {
            let z = xi - yi;
            proj += z * ei;
            rho_next_sq += z * z;
        }
        let crossed = sign * proj <= 0.0;
        let mut extra = 0.0;
        if !diffusion_const && *rule == CouplingRule::Bridge {
            for j in 0..d {
                let c: f64 = (0..d).map(|i| (s0x[i * d + j] - s0y[i * d + j]) * e[i]).sum();
                extra += c * c;
            }
        }
        let coupled = crossed || rule.hits(lambda0, h, extra, dt, rho, rho_next_sq.sqrt(), noise.uniform);
        if coupled {
            state.y.copy_from_slice(&state.x);
            state.coupled = true;
            state.coupling_time = Some(t_next);
        }
        Ok(())
    }
}

fn sigma0_or_violation(a: &[f64], d: usize, lambda0: f64, t: f64) -> Result<Vec<f64>, CouplingError> {
    linalg::shifted_sqrt(a, d, lambda0 * lambda0).map_err(|Indefinite { min_eig }| {
        CouplingError::EigenvalueViolation {
            t,
            lambda0_sq: lambda0 * lambda0,
            min_eig: min_eig + lambda0 * lambda0,
        }
    })
}

#[inline]
fn advance(x: &mut [f64], b: &[f64], v: &[f64], dt: f64, scale: f64) {
    for ((xi, bi), vi) in x.iter_mut().zip(b).zip(v) {
        *xi = *xi + bi * dt + scale * vi;
    }
}

fn check_finite(state: &CoupledState) -> Result<(), CouplingError> {
    let ok = |v: &[f64]| v.iter().all(|c| c.is_finite() && c.abs() <= DIVERGENCE_BOUND);
    if ok(&state.x) && ok(&state.y) {
        Ok(())
    } else {
        Err(CouplingError::NonFinite { t: state.t })
    }
}

/// One coupled step (allocating convenience wrapper around [`PairStepper`]).
pub fn step_pair(
    model: &ModelSpec,
    kind: CouplingKind,
    state: &CoupledState,
    dt: f64,
    noise: &StepNoise,
) -> Result<CoupledState, CouplingError> {
    let mut stepper = PairStepper::new(model, kind, CouplingRule::default(), dt)?;
    let mut next = state.clone();
    stepper.step(&mut next, noise)?;
    Ok(next)
}

/// Time discretisation shared by all paths of an experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeGrid {
    pub horizon: f64,
    pub dt: f64,
    /// Output spacing in units of `dt`.
    pub record_every: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, dt: f64, record_every: usize) -> TimeGrid {
        TimeGrid {
            horizon,
            dt,
            record_every,
        }
    }

    /// Number of Euler steps; fails unless horizon is a multiple of the
    /// output spacing.
    pub fn n_steps(&self) -> Result<usize, CouplingError> {
        if !(self.dt > 0.0 && self.horizon > 0.0) || self.record_every == 0 {
            return Err(CouplingError::InvalidGrid(
                "horizon, dt and record_every must be positive".into(),
            ));
        }
        let n = (self.horizon / self.dt).round();
        if (n * self.dt - self.horizon).abs() > 1e-9 * self.horizon {
            return Err(CouplingError::InvalidGrid(format!(
                "horizon {} is not a multiple of dt {}",
                self.horizon, self.dt
            )));
        }
        let n = n as usize;
        if n % self.record_every != 0 {
            return Err(CouplingError::InvalidGrid(format!(
                "{n} steps are not a multiple of record_every {}",
                self.record_every
            )));
        }
        Ok(n)
    }

    pub fn times(&self) -> Result<Vec<f64>, CouplingError> {
        let n = self.n_steps()?;
        Ok((0..=n / self.record_every)
            .map(|k| (k * self.record_every) as f64 * self.dt)
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairPath {
    pub times: Vec<f64>,
    pub rho: Vec<f64>,
    pub coupling_time: Option<f64>,
    /// Not coupled within the horizon.
    pub censored: bool,
    pub seed: u64,
    pub path_index: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub states: Option<Vec<(Vec<f64>, Vec<f64>)>>,
}

impl PairPath {
    pub fn coupled_at(&self, k: usize) -> bool {
        self.coupling_time.is_some_and(|t| t <= self.times[k] + 1e-12 * self.times[k].max(1.0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimOptions {
    pub grid: TimeGrid,
    #[serde(default)]
    pub rule: CouplingRule,
    #[serde(default)]
    pub keep_states: bool,
}

/// Simulates one coupled pair from `(x, y)`. Deterministic in
/// `(seed, path_index, grid)`; path `i` of an ensemble uses stream `i`.
pub fn simulate_pair(
    model: &ModelSpec,
    kind: CouplingKind,
    x: &[f64],
    y: &[f64],
    opts: &SimOptions,
    seed: u64,
    path_index: u64,
) -> Result<PairPath, CouplingError> {
    let n_steps = opts.grid.n_steps()?;
    let times = opts.grid.times()?;
    let mut stepper = PairStepper::new(model, kind, opts.rule, opts.grid.dt)?;
    let mut state = CoupledState::new(x.to_vec(), y.to_vec());
    let mut rng = rng::stream(seed, Domain::CoupledPair, path_index);
    let mut noise = StepNoise::zeros(model.d(), model.m());

    let mut rho = Vec::with_capacity(times.len());
    let mut states = opts.keep_states.then(|| Vec::with_capacity(times.len()));
    rho.push(state.rho());
    if let Some(s) = states.as_mut() {
        s.push((state.x.clone(), state.y.clone()));
    }
    for i in 1..=n_steps {
        if state.coupled && states.is_none() {
            break;
        }
        noise.draw(&mut rng, &kind, opts.rule);
        stepper.step(&mut state, &noise)?;
        if i % opts.grid.record_every == 0 {
            rho.push(state.rho());
            if let Some(s) = states.as_mut() {
                s.push((state.x.clone(), state.y.clone()));
            }
        }
    }
    rho.resize(times.len(), 0.0);
    Ok(PairPath {
        censored: state.coupling_time.is_none(),
        coupling_time: state.coupling_time,
        times,
        rho,
        seed,
        path_index,
        states,
    })
}

/// Euler–Maruyama path of the uncoupled SDE, recorded on the grid.
pub fn simulate_marginal<R: Rng + ?Sized>(
    model: &ModelSpec,
    x: &[f64],
    grid: &TimeGrid,
    rng: &mut R,
) -> Result<Vec<Vec<f64>>, CouplingError> {
    let n_steps = grid.n_steps()?;
    let (d, m) = (model.d(), model.m());
    let scale = 2f64.sqrt() * grid.dt.sqrt();
    let mut state = x.to_vec();
    let (mut b, mut s, mut w, mut v) = (vec![0.0; d], vec![0.0; d * m], vec![0.0; m], vec![0.0; d]);
    let mut out = Vec::with_capacity(n_steps / grid.record_every + 1);
    out.push(state.clone());
    for i in 1..=n_steps {
        model.drift_into(&state, &mut b)?;
        model.diffusion_into(&state, &mut s)?;
        rng::fill_normal(rng, &mut w);
        linalg::matvec(&s, m, &w, &mut v);
        advance(&mut state, &b, &v, grid.dt, scale);
        if !state.iter().all(|c| c.is_finite() && c.abs() <= DIVERGENCE_BOUND) {
            return Err(CouplingError::NonFinite { t: i as f64 * grid.dt });
        }
        if i % grid.record_every == 0 {
            out.push(state.clone());
        }
    }
    Ok(out)
}

/// `t ↦ (E ρ_t^p)^{1/p}` with delta-method standard errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentCurve {
    pub p: f64,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub stderr: Vec<f64>,
    pub n_paths: usize,
}

/// Pointwise `L^p` norm of the distance over an ensemble. Sums run in path
/// index order.
pub fn distance_moments(paths: &[PairPath], p: f64) -> Result<MomentCurve, CouplingError> {
    let first = paths.first().ok_or(CouplingError::EmptyInput)?;
    if paths.iter().any(|q| q.times != first.times) {
        return Err(CouplingError::GridMismatch);
    }
    let columns: Vec<Vec<f64>> = (0..first.times.len())
        .map(|k| paths.iter().map(|q| q.rho[k]).collect())
        .collect();
    Ok(moments_from_columns(&first.times, &columns, p))
}

pub(crate) fn moments_from_columns(times: &[f64], columns: &[Vec<f64>], p: f64) -> MomentCurve {
    let n = columns.first().map_or(0, Vec::len);
    let mut values = Vec::with_capacity(times.len());
    let mut stderr = Vec::with_capacity(times.len());
    for col in columns {
        let (mean, se_mean) = mean_and_stderr(col.iter().map(|r| r.powf(p)));
        let value = mean.powf(1.0 / p);
        values.push(value);
        stderr.push(if mean > 0.0 {
            se_mean * value / (p * mean)
        } else {
            0.0
        });
    }
    MomentCurve {
        p,
        times: times.to_vec(),
        values,
        stderr,
        n_paths: n,
    }
}

/// Sample mean and its standard error (0 for fewer than two samples).
pub(crate) fn mean_and_stderr(xs: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = xs.clone().count();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.clone().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = xs.map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn noise_with(d: usize, m: usize, second: &[f64]) -> StepNoise {
        let mut n = StepNoise::zeros(d, m);
        n.b_second.copy_from_slice(second);
        n
    }

    #[test]
    fn synchronous_ou_contracts_by_one_minus_k_dt() {
        let m = ModelSpec::ou(2, 1.5);
        let dt = 1e-2;
        let mut st = CoupledState::new(vec![1.0, 2.0], vec![-0.5, 0.0]);
        let mut stepper = PairStepper::new(&m, CouplingKind::Synchronous, CouplingRule::Bridge, dt).unwrap();
        let mut rng = rng::stream(0, Domain::Probe, 0);
        for _ in 0..50 {
            let z0 = linalg::sub(&st.x, &st.y);
            let mut noise = StepNoise::zeros(2, 2);
            noise.draw(&mut rng, &CouplingKind::Synchronous, CouplingRule::Bridge);
            stepper.step(&mut st, &noise).unwrap();
            let z1 = linalg::sub(&st.x, &st.y);
            for (a, b) in z0.iter().zip(&z1) {
                assert!((b - a * (1.0 - 1.5 * dt)).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn reflection_increment_in_one_dimension() {
        // b = 0, σ = 1, λ0 = 1: ρ moves by 2√2 √dt ξ.
        let m = ModelSpec::brownian(1);
        let dt = 1e-3;
        let kind = CouplingKind::Reflection { lambda0: 1.0 };
        for (x, y) in [(1.0, 0.0), (0.0, 1.0)] {
            let st = CoupledState::new(vec![x], vec![y]);
            let next = step_pair(&m, kind, &st, dt, &noise_with(1, 1, &[0.7])).unwrap();
            let expect = 1.0 + 2.0 * 2f64.sqrt() * dt.sqrt() * 0.7;
            assert!((next.rho() - expect).abs() < 1e-14);
        }
    }

    #[test]
    fn glued_pairs_stay_glued() {
        let m = ModelSpec::double_well(1, 1.0);
        for kind in [
            CouplingKind::Synchronous,
            CouplingKind::Reflection { lambda0: 1.0 },
            CouplingKind::Hybrid { lambda0: 1.0, r0: 1.0 },
        ] {
            let st = CoupledState::new(vec![0.3], vec![0.3]);
            let mut noise = StepNoise::zeros(1, 1);
            noise.sync[0] = 0.4;
            noise.b_second[0] = -1.1;
            let next = step_pair(&m, kind, &st, 1e-2, &noise).unwrap();
            assert_eq!(next.x, next.y);
            assert!(next.coupled);
        }
    }

    #[test]
    fn crossing_glues_the_pair() {
        let m = ModelSpec::brownian(1);
        let st = CoupledState::new(vec![0.01], vec![0.0]);
        let next = step_pair(&m, CouplingKind::Reflection { lambda0: 1.0 }, &st, 1e-2, &noise_with(1, 1, &[-1.0]))
            .unwrap();
        assert!(next.coupled);
        assert_eq!(next.coupling_time, Some(1e-2));
        assert_eq!(next.x, next.y);
    }

    #[test]
    fn inadmissible_lambda0_is_rejected() {
        let m = ModelSpec::ou(1, 1.0);
        let r = PairStepper::new(&m, CouplingKind::Reflection { lambda0: 1.2 }, CouplingRule::Bridge, 1e-3);
        assert!(matches!(r, Err(CouplingError::EigenvalueViolation { .. })));
        let m = ModelSpec::from_exprs("m", 1, 1, &["0"], &[&["1 + 0.5*sin(x1)"]]).unwrap();
        let st = CoupledState::new(vec![-1.5], vec![1.0]);
        let r = step_pair(&m, CouplingKind::Reflection { lambda0: 0.9 }, &st, 1e-3, &StepNoise::zeros(1, 1));
        assert!(matches!(r, Err(CouplingError::EigenvalueViolation { .. })));
    }

    #[test]
    fn divergence_guard() {
        let m = ModelSpec::from_exprs("blowup", 1, 1, &["x1^3"], &[&["1"]]).unwrap();
        let opts = SimOptions {
            grid: TimeGrid::new(1.0, 1e-2, 1),
            rule: CouplingRule::Bridge,
            keep_states: false,
        };
        let r = simulate_pair(&m, CouplingKind::Synchronous, &[10.0], &[9.0], &opts, 0, 0);
        assert!(matches!(r, Err(CouplingError::NonFinite { .. })));
    }

    #[test]
    fn grid_validation() {
        assert!(TimeGrid::new(1.0, 1e-3, 10).n_steps().is_ok());
        assert!(TimeGrid::new(1.0, 3e-3, 1).n_steps().is_err());
        assert!(TimeGrid::new(1.0, 1e-3, 7).n_steps().is_err());
        assert_eq!(TimeGrid::new(1.0, 0.25, 2).times().unwrap(), vec![0.0, 0.5, 1.0]);
    }

    #[test]
    fn identical_start_is_coupled_at_zero() {
        let m = ModelSpec::ou(1, 1.0);
        let opts = SimOptions {
            grid: TimeGrid::new(1.0, 1e-2, 10),
            rule: CouplingRule::Bridge,
            keep_states: false,
        };
        let p = simulate_pair(&m, CouplingKind::Reflection { lambda0: 1.0 }, &[0.5], &[0.5], &opts, 1, 0).unwrap();
        assert_eq!(p.coupling_time, Some(0.0));
        assert!(p.rho.iter().all(|&r| r == 0.0));
    }

    #[test]
    fn moments_of_constant_paths() {
        let mk = |a: f64, i| PairPath {
            times: vec![0.0, 1.0],
            rho: vec![a, a],
            coupling_time: None,
            censored: true,
            seed: 0,
            path_index: i,
            states: None,
        };
        let c = distance_moments(&[mk(2.0, 0), mk(2.0, 1), mk(2.0, 2)], 3.0).unwrap();
        assert!(c.values.iter().all(|v| (v - 2.0).abs() < 1e-15));
        assert!(c.stderr.iter().all(|&s| s == 0.0));
        assert!(matches!(distance_moments(&[], 1.0), Err(CouplingError::EmptyInput)));
        let mut other = mk(1.0, 3);
        other.times = vec![0.0, 2.0];
        assert!(matches!(distance_moments(&[mk(1.0, 0), other], 1.0), Err(CouplingError::GridMismatch)));
    }
}
