use contraction_lab::coupling::*;
use contraction_lab::model::ModelSpec;
use proptest::prelude::*;
use statrs::function::erf::erf;

fn opts(horizon: f64, dt: f64, every: usize) -> SimOptions {
    SimOptions {
        grid: TimeGrid::new(horizon, dt, every),
        rule: CouplingRule::default(),
        keep_states: false,
    }
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

#[test]
fn synchronous_ou_contracts_by_euler_factor() {
    let model = ModelSpec::ou(3, 1.0);
    let (x, y) = (vec![1.0, -2.0, 0.5], vec![0.0, 0.5, 3.0]);
    let rho0 = dist(&x, &y);
    let dt = 1e-3;
    for seed in [0, 7, 99] {
        let path = simulate_pair(&model, CouplingKind::Synchronous, &x, &y, &opts(1.0, dt, 50), seed, 3).unwrap();
        for (k, r) in path.rho.iter().enumerate() {
            let want = rho0 * (1.0 - dt).powi(50 * k as i32);
            assert!((r / want - 1.0).abs() < 1e-12, "seed {seed} k {k}: {r} vs {want}");
        }
        assert!(path.censored);
    }
}

#[test]
fn hybrid_beyond_the_ramp_moves_like_synchronous() {
    // r0 = 0: the ramp ends at distance 1, and ρ stays above 1 here, so the
    // mirrored channel is off and the noise cancels in X − Y.
    let model = ModelSpec::ou(2, 1.0);
    let (x, y) = (vec![3.0, 0.0], vec![0.0, -4.0]);
    let dt = 1e-2;
    let kind = CouplingKind::Hybrid { lambda0: 0.8, r0: 0.0 };
    let path = simulate_pair(&model, kind, &x, &y, &opts(1.0, dt, 10), 4, 0).unwrap();
    for (k, r) in path.rho.iter().enumerate() {
        let want = 5.0 * (1.0 - dt).powi(10 * k as i32);
        assert!((r / want - 1.0).abs() < 1e-12, "k {k}: {r} vs {want}");
    }
    assert!(path.coupling_time.is_none());
}

#[test]
fn reflected_distance_has_quadratic_variation_8_lambda0_sq() {
    // Brownian, σ = I: the distance is a Brownian motion with variance rate
    // (2√2 λ0)² until it hits zero; start far away so it never does.
    for lambda0 in [1.0, 0.5] {
        let model = ModelSpec::brownian(2);
        let (x, y) = (vec![100.0, 0.0], vec![0.0, 0.0]);
        let o = SimOptions {
            keep_states: true,
            ..opts(10.0, 1e-3, 1)
        };
        let path = simulate_pair(&model, CouplingKind::Reflection { lambda0 }, &x, &y, &o, 1, 0).unwrap();
        let qv: f64 = path.rho.windows(2).map(|w| (w[1] - w[0]).powi(2)).sum();
        let want = 8.0 * lambda0 * lambda0 * 10.0;
        // Relative sd of a 10⁴-step quadratic variation is √(2/10⁴) ≈ 1.4%.
        assert!((qv / want - 1.0).abs() < 0.06, "λ0 {lambda0}: {qv} vs {want}");
        // The increments of X − Y stay along the initial direction.
        let states = path.states.unwrap();
        for (xs, ys) in &states {
            assert!((xs[1] - ys[1]).abs() < 1e-9);
        }
    }
}

#[test]
fn survival_matches_error_function() {
    let model = ModelSpec::brownian(1);
    let n = 20_000;
    let o = opts(1.0, 1e-3, 250);
    let kind = CouplingKind::Reflection { lambda0: 1.0 };
    let paths: Vec<PairPath> = (0..n)
        .map(|i| simulate_pair(&model, kind, &[0.5], &[-0.5], &o, 8, i).unwrap())
        .collect();
    for (k, t) in [(1, 0.25), (2, 0.5), (4, 1.0)] {
        let p = paths.iter().filter(|q| !q.coupled_at(k)).count() as f64 / n as f64;
        let want = erf(1.0 / (4.0 * f64::sqrt(t)));
        let se = (want * (1.0 - want) / n as f64).sqrt();
        assert!((p - want).abs() < 4.0 * se, "t {t}: {p} vs {want} (se {se})");
    }
}

#[test]
fn coupled_pairs_stay_together() {
    let model = ModelSpec::double_well(1, 2f64.sqrt());
    let o = SimOptions {
        keep_states: true,
        ..opts(2.0, 1e-3, 10)
    };
    let kind = CouplingKind::Hybrid { lambda0: 1.0, r0: 2.0 };
    let mut seen = 0;
    for i in 0..50 {
        let path = simulate_pair(&model, kind, &[0.2], &[-0.2], &o, 2, i).unwrap();
        if let Some(tau) = path.coupling_time {
            seen += 1;
            for (k, (xs, ys)) in path.states.as_ref().unwrap().iter().enumerate() {
                if path.times[k] >= tau {
                    assert_eq!(xs, ys);
                    assert_eq!(path.rho[k], 0.0);
                }
            }
        }
    }
    assert!(seen > 25, "only {seen} of 50 pairs coupled");
}

#[test]
fn distance_moments_of_synchronous_ou_are_exact() {
    let model = ModelSpec::ou(1, 2.0);
    let o = opts(0.5, 1e-2, 10);
    let paths: Vec<PairPath> = (0..10)
        .map(|i| simulate_pair(&model, CouplingKind::Synchronous, &[1.0], &[-1.0], &o, 0, i).unwrap())
        .collect();
    for p in [1.0, 2.0, 3.5] {
        let m = distance_moments(&paths, p).unwrap();
        for (k, v) in m.values.iter().enumerate() {
            let want = 2.0 * (1.0 - 2.0 * 1e-2f64).powi(10 * k as i32);
            assert!((v / want - 1.0).abs() < 1e-12);
            assert!(m.stderr[k] < 1e-12);
        }
    }
    assert_eq!(distance_moments(&[], 1.0).unwrap_err().to_string(), CouplingError::EmptyInput.to_string());
}

#[test]
fn lambda0_above_diffusion_floor_is_rejected() {
    let model = ModelSpec::brownian(1);
    let err = simulate_pair(&model, CouplingKind::Reflection { lambda0: 1.5 }, &[0.0], &[1.0], &opts(1.0, 0.1, 1), 0, 0);
    assert!(matches!(err, Err(CouplingError::EigenvalueViolation { .. })));
    let err = simulate_pair(&model, CouplingKind::Synchronous, &[0.0], &[1.0], &opts(1.0, 0.3, 1), 0, 0);
    assert!(matches!(err, Err(CouplingError::InvalidGrid(_))));
}

fn state_dependent_model() -> ModelSpec {
    // σ(x) = diag(1.5 + 0.5 sin x1, 1.5 + 0.5 cos x2), floor 1.
    ModelSpec::from_exprs(
        "wavy",
        2,
        2,
        &["x2 - x1^3", "-x1 - x2"],
        &[&["1.5 + 0.5*sin(x1)", "0"], &["0", "1.5 + 0.5*cos(x2)"]],
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// Swapping the two starting points gives the same distance process.
    #[test]
    fn exchange_symmetry(
        x in prop::array::uniform2(-2.0f64..2.0),
        y in prop::array::uniform2(-2.0f64..2.0),
        seed in 0u64..1000,
        hybrid in any::<bool>(),
    ) {
        let model = state_dependent_model();
        let kind = if hybrid {
            CouplingKind::Hybrid { lambda0: 0.9, r0: 0.5 }
        } else {
            CouplingKind::Reflection { lambda0: 0.9 }
        };
        let o = opts(0.5, 1e-3, 25);
        let a = simulate_pair(&model, kind, &x, &y, &o, seed, 5).unwrap();
        let b = simulate_pair(&model, kind, &y, &x, &o, seed, 5).unwrap();
        prop_assert_eq!(a.coupling_time, b.coupling_time);
        for (r, s) in a.rho.iter().zip(&b.rho) {
            prop_assert!((r - s).abs() <= 1e-9 * (1.0 + r.abs()), "{} vs {}", r, s);
        }
    }

    /// A run is a function of (seed, index) only.
    #[test]
    fn paths_are_reproducible(seed in 0u64..10_000, index in 0u64..1000) {
        let model = state_dependent_model();
        let kind = CouplingKind::Hybrid { lambda0: 0.9, r0: 1.0 };
        let o = opts(0.2, 1e-3, 20);
        let a = simulate_pair(&model, kind, &[1.0, 0.0], &[0.0, 1.0], &o, seed, index).unwrap();
        let b = simulate_pair(&model, kind, &[1.0, 0.0], &[0.0, 1.0], &o, seed, index).unwrap();
        prop_assert_eq!(&a, &b);
        let c = simulate_pair(&model, kind, &[1.0, 0.0], &[0.0, 1.0], &o, seed, index + 1).unwrap();
        prop_assert_ne!(a.rho, c.rho);
    }

    /// Dumps read back to the same path.
    #[test]
    fn binary_dump_roundtrip(seed in 0u64..1000) {
        let model = ModelSpec::ou(1, 1.0);
        let kind = CouplingKind::Reflection { lambda0: 1.0 };
        let path = simulate_pair(&model, kind, &[0.3], &[-0.3], &opts(1.0, 1e-2, 5), seed, 2).unwrap();
        let mut buf = Vec::new();
        dump::write_binary(&path, &mut buf).unwrap();
        let back = dump::read_binary(&buf[..]).unwrap();
        prop_assert_eq!(back.rho, path.rho);
        prop_assert_eq!(back.times, path.times);
        prop_assert_eq!(back.coupling_time, path.coupling_time);
        prop_assert_eq!(back.censored, path.censored);
        prop_assert_eq!(back.path_index, 2);
    }
}
