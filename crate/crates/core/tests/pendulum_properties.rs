use rand::Rng;
use riskgrad_core::envs::pendulum::reference_controller;
use riskgrad_core::envs::{EnvKind, EnvSpec};
use riskgrad_core::nn::Action;
use riskgrad_core::rng::{stream, Domain};

/// Semi-implicit Euler written out with literal constants.
fn hand_step(mass: f64, theta: f64, omega: f64, u: f64) -> (f64, f64, f64) {
    let u = u.clamp(-1.0, 1.0);
    let acc = 10.0 * theta.sin() + 12.0 * u / mass;
    let omega2 = (omega + 0.05 * acc).clamp(-8.0, 8.0);
    let theta2 = theta + 0.05 * omega2;
    let mut th = theta % (2.0 * std::f64::consts::PI);
    if th >= std::f64::consts::PI {
        th -= 2.0 * std::f64::consts::PI;
    } else if th < -std::f64::consts::PI {
        th += 2.0 * std::f64::consts::PI;
    }
    (theta2, omega2, -(th * th + 0.1 * omega * omega + 0.001 * u * u))
}

#[test]
fn step_matches_hand_derivation() {
    let mut rng = stream(3, Domain::Rollout, 0, 0);
    for _ in 0..500 {
        let mass = rng.gen_range(0.3..3.0);
        let spec = EnvSpec::new(EnvKind::PendulumSwingup).with_mass_scale(mass);
        let (theta, omega, u) = (rng.gen_range(-7.0..7.0), rng.gen_range(-8.0..8.0), rng.gen_range(-2.0..2.0));
        let got = spec.step(&[theta, omega], &Action::Continuous(vec![u]), &mut rng).unwrap();
        let (t2, w2, r) = hand_step(mass, theta, omega, u);
        assert!((got.true_state[0] - t2).abs() <= 1e-12 * t2.abs().max(1.0));
        assert!((got.true_state[1] - w2).abs() <= 1e-12 * w2.abs().max(1.0));
        assert!((got.reward - r).abs() <= 1e-9 * r.abs().max(1.0), "{} vs {r}", got.reward);
    }
}

fn controller_return(mass: f64, seed: u64) -> f64 {
    let spec = EnvSpec::new(EnvKind::PendulumSwingup).with_mass_scale(mass);
    let mut rng = stream(seed, Domain::Evaluation, 0, 0);
    let mut s = spec.reset(&mut rng);
    let mut total = 0.0;
    for _ in 0..spec.horizon {
        let u = reference_controller(&spec, &s.true_state);
        s = spec.step(&s.true_state, &Action::Continuous(vec![u]), &mut rng).unwrap();
        total += s.reward;
    }
    total
}

#[test]
fn return_is_continuous_in_mass() {
    for mass in [0.5, 0.7, 0.85, 1.0, 1.15, 1.3, 1.5] {
        for seed in 0..5 {
            let a = controller_return(mass, seed);
            let b = controller_return(mass * 1.01, seed);
            assert!((a - b).abs() < 0.1 * a.abs(), "mass {mass} seed {seed}: {a} vs {b}");
        }
    }
}

#[test]
fn heavier_pendulum_does_worse_under_reference_controller() {
    let mean = |m: f64| (0..20).map(|s| controller_return(m, s)).sum::<f64>() / 20.0;
    assert!(mean(1.0) >= mean(1.5));
}

#[test]
fn reference_controller_clears_solved_threshold() {
    let spec = EnvSpec::new(EnvKind::PendulumSwingup);
    let threshold = spec.solved_threshold().unwrap();
    let mean = (0..20).map(|s| controller_return(1.0, s)).sum::<f64>() / 20.0;
    assert!(mean >= threshold, "{mean} < {threshold}");
}
