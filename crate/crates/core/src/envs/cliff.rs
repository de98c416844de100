//! 4×6 cliff walk. The agent starts in the bottom-left corner and the goal
//! is the bottom-right corner; the cells between them are a cliff. Each
//! step costs 0.1, stepping into the cliff costs 5 and teleports back to the
//! start, reaching the goal pays 5 and ends the episode. With probability
//! `min(0.5, 0.1·mass_scale)` the chosen action is replaced by a uniformly
//! random one. Actions: 0 up, 1 right, 2 down, 3 left.

use rand::Rng;

use super::{one_hot, EnvError, EnvSpec, StepResult};
use crate::mdp::TabularMdp;

pub const ROWS: usize = 4;
pub const COLS: usize = 6;
pub const N_STATES: usize = ROWS * COLS;
pub const START: usize = (ROWS - 1) * COLS;
pub const GOAL: usize = ROWS * COLS - 1;
pub const REWARD_BOUND: f64 = 5.0;
const STEP_COST: f64 = -0.1;
const CLIFF_COST: f64 = -5.0;
const GOAL_REWARD: f64 = 5.0;

fn is_cliff(s: usize) -> bool {
    s > START && s < GOAL
}

pub fn slip(spec: &EnvSpec) -> f64 {
    (0.1 * spec.physics.mass_scale).min(0.5)
}

/// `(next_state, reward, done)` for a move that is not slipped.
fn moved(s: usize, a: usize) -> (usize, f64, bool) {
    let (r, c) = (s / COLS, s % COLS);
    let (r, c) = match a {
        0 => (r.saturating_sub(1), c),
        1 => (r, (c + 1).min(COLS - 1)),
        2 => ((r + 1).min(ROWS - 1), c),
        _ => (r, c.saturating_sub(1)),
    };
    let next = r * COLS + c;
    if is_cliff(next) {
        (START, CLIFF_COST, false)
    } else if next == GOAL {
        (GOAL, GOAL_REWARD, true)
    } else {
        (next, STEP_COST, false)
    }
}

pub fn reset(_spec: &EnvSpec) -> StepResult {
    StepResult {
        observation: one_hot(N_STATES, START),
        reward: 0.0,
        done: false,
        true_state: vec![START as f64],
    }
}

pub fn step<R: Rng + ?Sized>(spec: &EnvSpec, state: &[f64], a: usize, rng: &mut R) -> StepResult {
    let s = state[0] as usize;
    let taken = if rng.gen::<f64>() < slip(spec) {
        rng.gen_range(0..4)
    } else {
        a
    };
    let (next, reward, done) = moved(s, taken);
    StepResult {
        observation: one_hot(N_STATES, next),
        reward: spec.reward_scale * reward,
        done,
        true_state: vec![next as f64],
    }
}

/// Tabular model with the goal made absorbing at zero reward; rewards are
/// expectations over the slip.
pub fn tabular(spec: &EnvSpec, gamma: f64) -> Result<TabularMdp, EnvError> {
    let p_slip = slip(spec);
    let mut transition = vec![0.0; N_STATES * 4 * N_STATES];
    let mut rewards = vec![0.0; N_STATES * 4];
    for s in 0..N_STATES {
        for a in 0..4 {
            let row = (s * 4 + a) * N_STATES;
            if s == GOAL {
                transition[row + GOAL] = 1.0;
                continue;
            }
            for taken in 0..4 {
                let p = p_slip / 4.0 + if taken == a { 1.0 - p_slip } else { 0.0 };
                let (next, r, _) = moved(s, taken);
                transition[row + next] += p;
                rewards[s * 4 + a] += p * spec.reward_scale * r;
            }
        }
    }
    Ok(TabularMdp::new(
        N_STATES,
        4,
        transition,
        rewards,
        gamma,
        one_hot(N_STATES, START),
    )?)
}
