//! Acceptance suite: one PASS/FAIL line per criterion. Runs with a plain
//! `main` so the lines come out in order and the runtime of each
//! criterion is measured on its own.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use contraction_lab::coupling::{CouplingKind, CouplingRule, TimeGrid};
use contraction_lab::harness::*;
use contraction_lab::model::ModelConfig;
use contraction_lab::ot::*;
use contraction_lab::theory::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;
use statrs::function::erf::erf;

// Pinned tolerances.
const C1_REL_TOL: f64 = 5e-3;
const C1_MAX_SECS: f64 = 1.0;
const C2_SIGMAS: f64 = 3.0;
const C2_MAX_SECS: f64 = 60.0;
const C3_EXACT_TOL: f64 = 1e-9;
const C3_PHI_TOL: f64 = 1e-6;
const C3_MAX_SECS: f64 = 30.0;
const C4_REL_TOL: f64 = 1e-9;
const C5_KEY_REL_TOL: f64 = 1e-12;
const C6_SIGMAS: f64 = 3.0;
const C6_MAX_SECS: f64 = 300.0;
const C7_TOL: f64 = 1e-10;
const C8_REL_TOL: f64 = 1e-8;
const C9_SIGMAS: f64 = 3.0;
const C9_LINEAR_TOL: f64 = 0.01;
const C10_SIGMAS: f64 = 3.0;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        passed,
        detail: detail.into(),
    }
}

fn within_time(elapsed: Duration, limit: f64) -> bool {
    elapsed.as_secs_f64() < limit
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn ou(d: usize) -> ModelConfig {
    ModelConfig::builtin("ou", json!({"d": d, "K": 1.0}))
}

/// OU with synchronous coupling: `ρ_t = (1 − dt)^n ρ0` on every path.
fn criterion_1() -> Result<Outcome, HarnessError> {
    let start = Instant::now();
    let cfg = ContractionConfig {
        model: ou(2),
        coupling: CouplingKind::Synchronous,
        rule: CouplingRule::default(),
        x: vec![1.0, 0.5],
        y: vec![-1.0, 0.0],
        grid: TimeGrid::new(1.0, 1e-3, 100),
        n_paths: 8,
        distances: [1.0, 2.0, 5.0].iter().map(|&p| YoungSpec::Power { p }).collect(),
        empirical_ot: false,
        ot_points: 8,
        seed: 1,
    };
    let res = contraction_experiment(&cfg)?;
    let target = (-1.0f64).exp() * res.rho0;
    let mut worst: f64 = 0.0;
    for c in &res.curves {
        worst = worst.max(rel(*c.values.last().unwrap(), target));
    }
    let elapsed = start.elapsed();
    Ok(outcome(
        worst <= C1_REL_TOL && within_time(elapsed, C1_MAX_SECS),
        format!("max rel err {worst:.2e} over p in {{1,2,5}}, {:.2} s", elapsed.as_secs_f64()),
    ))
}

/// Reflection survival against `erf(ρ0 / (4√t))`.
fn criterion_2() -> Result<Outcome, HarnessError> {
    let start = Instant::now();
    let cfg = CouplingTimeConfig {
        model: ModelConfig::builtin("brownian", json!({"d": 1})),
        coupling: CouplingKind::Reflection { lambda0: 1.0 },
        rule: CouplingRule::default(),
        x: vec![0.5],
        y: vec![-0.5],
        grid: TimeGrid::new(2.0, 1e-4, 2500),
        n_paths: 100_000,
        seed: 2,
    };
    let curve = coupling_time_experiment(&cfg)?;
    let mut ok = true;
    let mut parts = Vec::new();
    for t in [0.25, 0.5, 1.0, 2.0] {
        let (p, se) = curve.at(t);
        let want = erf(1.0 / (4.0 * f64::sqrt(t)));
        let z = (p - want) / se;
        ok &= z.abs() <= C2_SIGMAS;
        parts.push(format!("t={t}: {p:.4} vs {want:.4} ({z:+.2} se)"));
    }
    let elapsed = start.elapsed();
    Ok(outcome(
        ok && within_time(elapsed, C2_MAX_SECS),
        format!("{}, {:.1} s", parts.join("; "), elapsed.as_secs_f64()),
    ))
}

fn random_measure(rng: &mut ChaCha8Rng, n: usize, d: usize) -> EmpiricalMeasure {
    EmpiricalMeasure::from_flat(d, (0..n * d).map(|_| rng.gen_range(-2.0..2.0)).collect()).unwrap()
}

fn criterion_3() -> Result<Outcome, HarnessError> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst_exact: f64 = 0.0;
    for _ in 0..200 {
        let n = rng.gen_range(1..=6);
        let d = rng.gen_range(1..=3);
        let (mu, nu) = (random_measure(&mut rng, n, d), random_measure(&mut rng, n, d));
        for p in [1.0, 2.0, 3.0, f64::INFINITY] {
            let (got, want) = if p.is_finite() {
                (wasserstein_p(&mu, &nu, p)?.value, brute_force_w(&mu, &nu, Cost::Power(p))?)
            } else {
                (wasserstein_inf(&mu, &nu)?.value, brute_force_w(&mu, &nu, Cost::Bottleneck)?)
            };
            worst_exact = worst_exact.max((got - want).abs() / want.max(1.0));
        }
    }
    let mut worst_phi: f64 = 0.0;
    for _ in 0..100 {
        let n = rng.gen_range(1..=16);
        let d = rng.gen_range(1..=3);
        let (mu, nu) = (random_measure(&mut rng, n, d), random_measure(&mut rng, n, d));
        let p = [1.0, 2.0, 3.0][rng.gen_range(0..3)];
        let w_phi = wasserstein_phi(&mu, &nu, &YoungFunction::power(p)?, 1e-12)?.value;
        let w_p = wasserstein_p(&mu, &nu, p)?.value;
        worst_phi = worst_phi.max((w_phi - w_p).abs() / w_p.max(1.0));
    }
    let elapsed = start.elapsed();
    Ok(outcome(
        worst_exact <= C3_EXACT_TOL && worst_phi <= C3_PHI_TOL && within_time(elapsed, C3_MAX_SECS),
        format!(
            "exact vs brute force {worst_exact:.1e}, W_Phi vs W_p {worst_phi:.1e}, {:.2} s",
            elapsed.as_secs_f64()
        ),
    ))
}

fn criterion_4() -> Result<Outcome, HarnessError> {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let n = rng.gen_range(1..=30);
        let values: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..10.0)).collect();
        let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(0.01..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
        let p = rng.gen_range(1.0..8.0);
        let lp = values.iter().zip(&weights).map(|(v, w)| w * v.powf(p)).sum::<f64>().powf(1.0 / p);
        let g = gauge_norm(&values, &weights, &YoungFunction::power(p)?)?;
        worst = worst.max(rel(g, lp));
    }
    Ok(outcome(worst <= C4_REL_TOL, format!("max rel err {worst:.1e} on 1000 measures")))
}

fn criterion_5() -> Result<Outcome, HarnessError> {
    let (k1, k2, r0) = (2.0, 1.0, 2.0 * 2f64.sqrt());
    let rep = lyapunov_constants(k1, k2, r0)?;
    let n_ok = rel(rep.n, 3.0 * 2f64.sqrt()) < 1e-12;
    let eps_ok = rel(rep.epsilon, 3.0 * 2f64.sqrt() * (-12f64).exp()) < 1e-12;
    let grid = 10_000;
    let key_ok = (1..=grid).all(|k| {
        let r = r0 * k as f64 / grid as f64;
        rep.key_lhs(r) >= (k1 + k2) * (1.0 - C5_KEY_REL_TOL)
    });
    let sandwich_ok = (0..=1200).all(|k| rep.sandwich_holds(1e-6 * 10f64.powf(k as f64 / 100.0)));
    Ok(outcome(
        n_ok && eps_ok && key_ok && sandwich_ok && rep.c1 > 0.0,
        format!(
            "N = {:.6}, eps = {:.4e}, key {}, sandwich {}, c1 = {:.4e}, c = {:.4e}",
            rep.n,
            rep.epsilon,
            if key_ok { "holds" } else { "fails" },
            if sandwich_ok { "holds" } else { "fails" },
            rep.c1,
            rep.c
        ),
    ))
}

fn criterion_6() -> Result<Outcome, HarnessError> {
    let start = Instant::now();
    let r0 = 2.0 * 2f64.sqrt();
    let rate = lyapunov_constants(2.0, 1.0, r0)?;
    let lambda0 = 0.95 * 2f64.sqrt();
    let cfg = ContractionConfig {
        model: ModelConfig::builtin("double_well", json!({"d": 1, "sigma": 2f64.sqrt()})),
        coupling: CouplingKind::Hybrid { lambda0, r0 },
        rule: CouplingRule::default(),
        x: vec![0.5],
        y: vec![-0.5],
        grid: TimeGrid::new(20.0, 1e-3, 50),
        n_paths: 10_000,
        distances: vec![YoungSpec::Power { p: 1.0 }],
        empirical_ot: false,
        ot_points: 2,
        seed: 6,
    };
    let res = contraction_experiment(&cfg)?;
    let curve = &res.curves[0];
    let violations = (0..curve.times.len())
        .filter(|&k| curve.values[k] > rate.bound(curve.times[k], res.rho0) + C6_SIGMAS * curve.stderr[k])
        .count();
    let fit = fit_rate(
        curve,
        Some(&rate),
        &FitOptions {
            n_boot: 200,
            seed: 6,
            rho0: res.rho0,
        },
    )?;
    let elapsed = start.elapsed();
    Ok(outcome(
        violations == 0 && fit.lambda_hat > 0.0 && fit.lambda_ci[0] > 0.0 && within_time(elapsed, C6_MAX_SECS),
        format!(
            "{violations} envelope violations, lambda_hat = {:.3} CI [{:.3}, {:.3}] on t in [{:.2}, {:.2}], c1 = {:.3e}, {:.1} s",
            fit.lambda_hat,
            fit.lambda_ci[0],
            fit.lambda_ci[1],
            fit.window[0],
            fit.window[1],
            rate.c1,
            elapsed.as_secs_f64()
        ),
    ))
}

fn random_spd(rng: &mut ChaCha8Rng, d: usize, floor: f64) -> Vec<f64> {
    let g: Vec<f64> = (0..d * d).map(|_| rng.gen_range(-1.5..1.5)).collect();
    let mut a = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..d {
            a[i * d + j] = (0..d).map(|k| g[i * d + k] * g[j * d + k]).sum::<f64>();
        }
        a[i * d + i] += floor;
    }
    a
}

fn criterion_7() -> Result<Outcome, HarnessError> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let lambda0 = 0.5;
    let floor = lambda0 * lambda0 + 0.5;
    let pairs: Vec<_> = (0..10_000)
        .map(|_| (random_spd(&mut rng, 3, floor), random_spd(&mut rng, 3, floor)))
        .collect();
    let rep = check_ep_matrices(&pairs, 3, lambda0)?;
    let ok = rep.max_ratio <= 1.0 + C7_TOL && rep.violations == 0;
    Ok(outcome(
        ok,
        format!("{} violations, max ratio {:.4}, {} pairs", rep.violations, rep.max_ratio, rep.n_pairs),
    ))
}

fn criterion_8() -> Result<Outcome, HarnessError> {
    let l = LambdaCalculus::new(ScalarProfile::Power { c1: 1.0, epsilon: 2.0 })?;
    let (mut e1, mut e2, mut inv): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for k in 0..=60 {
        let r = 1e-3 * 10f64.powf(k as f64 / 10.0);
        let (l1, l2) = (l.lambda1(r)?, l.lambda2(r)?);
        e1 = e1.max(rel(l1, r / 3.0));
        e2 = e2.max(rel(l2, 3.0 / r));
        inv = inv.max(rel(l.lambda1_inv(l1)?, r)).max(rel(l.lambda2_inv(l2)?, r));
    }
    Ok(outcome(
        e1 <= C8_REL_TOL && e2 <= C8_REL_TOL && inv <= C8_REL_TOL,
        format!("Lambda1 {e1:.1e}, Lambda2 {e2:.1e}, inverses {inv:.1e} (relative, 61 radii)"),
    ))
}

fn criterion_9() -> Result<Outcome, HarnessError> {
    let base = KuwadaConfig {
        model: ou(1),
        f: "sin(x1)".into(),
        p: 2.0,
        t: 0.5,
        dt: 1e-3,
        n_paths: 4000,
        probes: None,
        n_probes: 20,
        probe_radius: 2.0,
        k_p: None,
        fd_step: None,
        seed: 9,
    };
    let sin = kuwada_check(&base)?;
    let sin_ok = sin.probes.len() == 20
        && sin.probes.iter().all(|p| p.ratio <= 1.0 + C9_SIGMAS * p.ratio_error);
    let linear = kuwada_check(&KuwadaConfig {
        f: "x1".into(),
        ..base
    })?;
    let lin_err = linear.probes.iter().map(|p| (p.ratio - 1.0).abs()).fold(0.0, f64::max);
    Ok(outcome(
        sin_ok && lin_err <= C9_LINEAR_TOL,
        format!(
            "sin: max ratio {:.4} (K_p = {:.4}), linear: max |ratio - 1| = {lin_err:.1e}",
            sin.max_ratio, sin.k_p
        ),
    ))
}

fn criterion_10() -> Result<Outcome, HarnessError> {
    let n = 4096;
    let cfg = EquilibriumConfig {
        model: ou(1),
        x: vec![2.0],
        horizon: 2.0,
        dt: 1e-3,
        record: 0.25,
        n,
        burn_in: 20.0,
        spacing: None,
        pilot_horizon: 200.0,
        seed: 10,
    };
    let curve = equilibrium_experiment(&cfg)?;
    let mut ok = true;
    let mut parts = Vec::new();
    for t in [0.5, 1.0, 2.0] {
        let k = curve.times.iter().position(|&s| (s - t).abs() < 1e-9).expect("grid time");
        let want = gaussian_w2_ou(2.0, t, 1.0, 1.0);
        let allowed = C10_SIGMAS * (curve.stderr[k] + (n as f64).powf(-0.5));
        ok &= (curve.values[k] - want).abs() <= allowed;
        parts.push(format!("t={t}: {:.4} vs {want:.4} (tol {allowed:.3})", curve.values[k]));
    }
    Ok(outcome(ok, parts.join("; ")))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Result<Outcome, HarnessError>); 10] = [
        ("OU synchronous contraction", criterion_1),
        ("reflection survival", criterion_2),
        ("OT oracle equivalence", criterion_3),
        ("gauge norm equals L^p", criterion_4),
        ("Lyapunov certification", criterion_5),
        ("double-well hybrid decay", criterion_6),
        ("EP matrix inequality", criterion_7),
        ("Lambda transforms", criterion_8),
        ("gradient estimate", criterion_9),
        ("OU equilibrium W2", criterion_10),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let (passed, detail) = match run() {
            Ok(o) => (o.passed, o.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        if !passed {
            failed += 1;
        }
        println!("{} criterion {:>2} ({name}): {detail}", if passed { "PASS" } else { "FAIL" }, i + 1);
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
