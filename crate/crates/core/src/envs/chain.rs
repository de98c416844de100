//! Five-state chain. Action 0 moves left, action 1 moves right; with
//! probability `slip = min(0.5, 0.1·mass_scale)` the agent moves the other
//! way. Moving right at the right end pays 1, moving left at the left end
//! pays 0.2 (a safe but poor local optimum). Episodes start at state 0 and
//! only end at the horizon.

use rand::Rng;

use super::{one_hot, EnvError, EnvSpec, StepResult};
use crate::mdp::TabularMdp;

pub const N_STATES: usize = 5;
const RIGHT_REWARD: f64 = 1.0;
const LEFT_REWARD: f64 = 0.2;

pub fn slip(spec: &EnvSpec) -> f64 {
    (0.1 * spec.physics.mass_scale).min(0.5)
}

fn reward(spec: &EnvSpec, s: usize, a: usize) -> f64 {
    spec.reward_scale
        * match (s, a) {
            (s, 1) if s == N_STATES - 1 => RIGHT_REWARD,
            (0, 0) => LEFT_REWARD,
            _ => 0.0,
        }
}

fn shift(s: usize, right: bool) -> usize {
    if right {
        (s + 1).min(N_STATES - 1)
    } else {
        s.saturating_sub(1)
    }
}

pub fn reset(_spec: &EnvSpec) -> StepResult {
    StepResult {
        observation: one_hot(N_STATES, 0),
        reward: 0.0,
        done: false,
        true_state: vec![0.0],
    }
}

pub fn step<R: Rng + ?Sized>(spec: &EnvSpec, state: &[f64], a: usize, rng: &mut R) -> StepResult {
    let s = state[0] as usize;
    let slipped = rng.gen::<f64>() < slip(spec);
    let next = shift(s, (a == 1) != slipped);
    StepResult {
        observation: one_hot(N_STATES, next),
        reward: reward(spec, s, a),
        done: false,
        true_state: vec![next as f64],
    }
}

pub fn tabular(spec: &EnvSpec, gamma: f64) -> Result<TabularMdp, EnvError> {
    let p_slip = slip(spec);
    let mut transition = vec![0.0; N_STATES * 2 * N_STATES];
    let mut rewards = Vec::with_capacity(N_STATES * 2);
    for s in 0..N_STATES {
        for a in 0..2 {
            let row = &mut transition[(s * 2 + a) * N_STATES..(s * 2 + a + 1) * N_STATES];
            row[shift(s, a == 1)] += 1.0 - p_slip;
            row[shift(s, a != 1)] += p_slip;
            rewards.push(reward(spec, s, a));
        }
    }
    Ok(TabularMdp::new(
        N_STATES,
        2,
        transition,
        rewards,
        gamma,
        one_hot(N_STATES, 0),
    )?)
}
