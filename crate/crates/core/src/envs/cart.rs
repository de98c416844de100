//! Cart-pole balancing with discrete push left/right. `mass_scale`
//! multiplies both the cart and the pole mass. Reward is 1 per step until
//! the pole falls past 12° or the cart leaves `[−2.4, 2.4]`.

use rand::Rng;

use super::{EnvSpec, Physics, StepResult};

pub const CART_MASS: f64 = 1.0;
pub const POLE_MASS: f64 = 0.1;
/// Half the pole length.
pub const POLE_HALF_LENGTH: f64 = 0.5;
pub const FORCE: f64 = 10.0;
pub const X_LIMIT: f64 = 2.4;
pub const THETA_LIMIT: f64 = 12.0 * std::f64::consts::PI / 180.0;
pub const DEFAULT_PHYSICS: Physics = Physics {
    mass_scale: 1.0,
    dt: 0.02,
    gravity: 9.8,
    damping: 0.0,
};

pub fn reset<R: Rng + ?Sized>(_spec: &EnvSpec, rng: &mut R) -> StepResult {
    let true_state: Vec<f64> = (0..4).map(|_| rng.gen_range(-0.05..=0.05)).collect();
    StepResult {
        observation: true_state.clone(),
        reward: 0.0,
        done: false,
        true_state,
    }
}

pub fn step(spec: &EnvSpec, state: &[f64], a: usize) -> StepResult {
    let p = &spec.physics;
    let (mut x, mut x_dot, mut theta, mut theta_dot) = (state[0], state[1], state[2], state[3]);
    let force = if a == 1 { FORCE } else { -FORCE };
    let pole_mass = POLE_MASS * p.mass_scale;
    let total_mass = CART_MASS * p.mass_scale + pole_mass;
    let pole_moment = pole_mass * POLE_HALF_LENGTH;
    let (sin, cos) = theta.sin_cos();
    let temp = (force - p.damping * x_dot + pole_moment * theta_dot * theta_dot * sin) / total_mass;
    let theta_acc = (p.gravity * sin - cos * temp)
        / (POLE_HALF_LENGTH * (4.0 / 3.0 - pole_mass * cos * cos / total_mass));
    let x_acc = temp - pole_moment * theta_acc * cos / total_mass;
    x_dot += p.dt * x_acc;
    x += p.dt * x_dot;
    theta_dot += p.dt * theta_acc;
    theta += p.dt * theta_dot;
    let true_state = vec![x, x_dot, theta, theta_dot];
    StepResult {
        observation: true_state.clone(),
        reward: spec.reward_scale,
        done: x.abs() > X_LIMIT || theta.abs() > THETA_LIMIT,
        true_state,
    }
}
