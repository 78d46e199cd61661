use harvester_core::dynamics::{
    equilibria, integrate, rhs, mean_power, steady_mean_power, steady_mean_power_batch, HarvesterParams,
    IntegratorSettings, State,
};

fn nominal(f: f64) -> HarvesterParams {
    HarvesterParams { f, ..HarvesterParams::default() }
}

fn asymmetric() -> HarvesterParams {
    HarvesterParams { beta: 1.0, delta: 0.15, phi: 10f64.to_radians(), p: 0.5, ..nominal(0.041) }
}

/// Global error at t = 1 of the decoupled electrical equation v' = -λv.
fn decay_error(dt: f64) -> f64 {
    let params = HarvesterParams { kappa: 0.0, chi: 0.0, f: 0.0, lambda: 0.05, ..HarvesterParams::default() };
    let traj = integrate(&params, State::new(1.0, 0.0, 1.0), 1.0, dt).unwrap();
    (traj.states.last().unwrap().v - (-0.05f64).exp()).abs()
}

#[test]
fn rk4_converges_at_fourth_order() {
    for dt in [0.2, 0.1] {
        let ratio = decay_error(dt) / decay_error(dt / 2.0);
        assert!((12.0..=20.0).contains(&ratio), "dt={dt}: ratio {ratio}");
    }
}

#[test]
fn mean_power_self_converges_under_step_halving() {
    let s = IntegratorSettings::default();
    for (f, tol) in [(0.041, 1e-4), (0.250, 1e-3)] {
        let p = nominal(f);
        let coarse = steady_mean_power(&p, &s).unwrap();
        let fine = steady_mean_power(&p, &IntegratorSettings { dt: s.dt / 2.0, ..s }).unwrap();
        let rel = ((coarse - fine) / fine).abs();
        assert!(coarse > 0.0 && rel < tol, "f={f}: {coarse} vs {fine} ({rel:e})");
    }
}

#[test]
fn power_identity_is_exact() {
    for p in [nominal(0.091), asymmetric()] {
        let traj = integrate(&p, State::new(1.0, 0.0, 0.0), 200.0, 0.01).unwrap();
        assert_eq!(traj.t.len(), traj.states.len());
        assert_eq!(traj.power.len(), traj.states.len());
        for (s, &pw) in traj.states.iter().zip(&traj.power) {
            assert_eq!(pw, p.lambda * s.v * s.v);
        }
    }
}

#[test]
fn time_grid_is_uniform() {
    let traj = integrate(&nominal(0.1), State::new(1.0, 0.0, 0.0), 10.0, 0.01).unwrap();
    assert_eq!(traj.len(), 1001);
    for (i, &t) in traj.t.iter().enumerate() {
        assert!((t - i as f64 * 0.01).abs() < 1e-12);
    }
}

#[test]
fn symmetric_field_is_odd_under_half_period_shift() {
    let p = nominal(0.2);
    let half = std::f64::consts::PI / p.omega;
    for i in 0..200 {
        let k = i as f64;
        let s = State::new((0.37 * k).sin() * 1.6, (0.11 * k).cos() * 0.8, (0.53 * k).sin() * 0.3);
        let t = 0.731 * k;
        let a = rhs(&s, t, &p);
        let b = rhs(&State::new(-s.x, -s.xdot, -s.v), t + half, &p);
        assert!((a.x + b.x).abs() < 1e-12 && (a.xdot + b.xdot).abs() < 1e-12 && (a.v + b.v).abs() < 1e-12);
    }
}

#[test]
fn integration_is_deterministic() {
    let p = asymmetric();
    let a = integrate(&p, State::new(1.0, 0.0, 0.0), 300.0, 0.01).unwrap();
    let b = integrate(&p, State::new(1.0, 0.0, 0.0), 300.0, 0.01).unwrap();
    assert_eq!(a, b);
}

#[test]
fn unforced_oscillator_settles_into_the_well() {
    let p = HarvesterParams { f: 0.0, chi: 0.0, ..HarvesterParams::default() };
    let traj = integrate(&p, State::new(1.2, 0.0, 0.0), 1000.0, 0.01).unwrap();
    assert!((traj.states.last().unwrap().x - 1.0).abs() < 1e-3);
}

#[test]
fn batch_matches_scalar_bit_for_bit() {
    let s = IntegratorSettings { t_end: 300.0, ..IntegratorSettings::default() };
    let points: Vec<HarvesterParams> =
        (0..13).map(|i| HarvesterParams { f: 0.03 + 0.02 * i as f64, omega: 0.7 + 0.01 * i as f64, ..asymmetric() }).collect();
    let batch = steady_mean_power_batch(&points, &s);
    for (p, b) in points.iter().zip(batch) {
        let scalar = steady_mean_power(p, &s).unwrap();
        assert_eq!(b.unwrap().to_bits(), scalar.to_bits());
        let traj = integrate(p, s.ic, s.t_end, s.dt).unwrap();
        assert_eq!(mean_power(&traj, s.transient_fraction).unwrap().to_bits(), scalar.to_bits());
    }
}

#[test]
fn asymmetric_equilibria_match_bisection() {
    let p = asymmetric();
    let force = |x: f64| 0.5 * x * (1.0 + 2.0 * p.delta * x - x * x) + p.p * p.phi.sin();
    let mut roots = Vec::new();
    let n = 200_000;
    for i in 0..n {
        let (mut a, mut b) = (-3.0 + 6.0 * i as f64 / n as f64, -3.0 + 6.0 * (i + 1) as f64 / n as f64);
        if force(a) == 0.0 {
            roots.push(a);
            continue;
        }
        if force(a) * force(b) > 0.0 {
            continue;
        }
        for _ in 0..100 {
            let m = 0.5 * (a + b);
            if force(a) * force(m) <= 0.0 {
                b = m;
            } else {
                a = m;
            }
        }
        roots.push(0.5 * (a + b));
    }
    let eq = equilibria(&p);
    assert_eq!(eq.len(), roots.len());
    for (e, r) in eq.iter().zip(&roots) {
        assert!((e.x - r).abs() < 1e-10, "{} vs {r}", e.x);
    }
    assert_eq!(eq.iter().map(|e| e.stable).collect::<Vec<_>>(), vec![true, false, true]);
}
