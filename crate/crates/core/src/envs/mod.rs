//! Built-in environments with a mass parameter, plus observation
//! disturbances.
//!
//! Environments are pure functions of `(spec, true_state, action, rng)`, so a
//! rollout owns nothing but its state vector and RNG stream.

pub mod cart;
pub mod chain;
pub mod cliff;
pub mod observation;
pub mod pendulum;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mdp::{MdpError, TabularMdp};
use crate::nn::{Action, HeadKind};

pub use observation::{disturb_observation, AttackContext, FgsmLoss, ObsDisturbance};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("invalid environment spec: {0}")]
    Spec(String),
    #[error("invalid action: {0}")]
    Action(String),
    #[error("non-finite state {0:?}")]
    NonFinite(Vec<f64>),
    #[error("fgsm needs a differentiable policy")]
    MissingPolicy,
    #[error("environment has no tabular form")]
    NotTabular,
    #[error(transparent)]
    Mdp(#[from] MdpError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EnvKind {
    ChainMdp,
    CliffGrid,
    PendulumSwingup,
    CartBalance,
}

impl EnvKind {
    pub fn name(self) -> &'static str {
        match self {
            EnvKind::ChainMdp => "chain-mdp",
            EnvKind::CliffGrid => "cliff-grid",
            EnvKind::PendulumSwingup => "pendulum-swingup",
            EnvKind::CartBalance => "cart-balance",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Physics {
    pub mass_scale: f64,
    pub dt: f64,
    pub gravity: f64,
    pub damping: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvSpec {
    pub kind: EnvKind,
    pub horizon: usize,
    pub physics: Physics,
    pub reward_scale: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ActionSpace {
    Discrete(usize),
    /// Box `[-1, 1]^dim`; actions outside are clamped.
    Box(usize),
}

impl ActionSpace {
    pub fn head(self) -> HeadKind {
        match self {
            ActionSpace::Discrete(n_actions) => HeadKind::Categorical { n_actions },
            ActionSpace::Box(action_dim) => HeadKind::Gaussian { action_dim },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub observation: Vec<f64>,
    pub reward: f64,
    pub done: bool,
    /// Hidden simulator state; the next `step` starts from it.
    pub true_state: Vec<f64>,
}

impl EnvSpec {
    pub fn new(kind: EnvKind) -> Self {
        match kind {
            EnvKind::ChainMdp => Self {
                kind,
                horizon: 50,
                physics: Physics {
                    mass_scale: 1.0,
                    dt: 1.0,
                    gravity: 0.0,
                    damping: 0.0,
                },
                reward_scale: 1.0,
            },
            EnvKind::CliffGrid => Self {
                kind,
                horizon: 100,
                physics: Physics {
                    mass_scale: 1.0,
                    dt: 1.0,
                    gravity: 0.0,
                    damping: 0.0,
                },
                reward_scale: 1.0,
            },
            EnvKind::PendulumSwingup => Self {
                kind,
                horizon: 200,
                physics: pendulum::DEFAULT_PHYSICS,
                reward_scale: 1.0,
            },
            EnvKind::CartBalance => Self {
                kind,
                horizon: 500,
                physics: cart::DEFAULT_PHYSICS,
                reward_scale: 1.0,
            },
        }
    }

    pub fn with_mass_scale(mut self, mass_scale: f64) -> Self {
        self.physics.mass_scale = mass_scale;
        self
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        let p = &self.physics;
        if !(p.mass_scale > 0.0 && p.mass_scale.is_finite()) {
            return Err(EnvError::Spec(format!("mass_scale must be positive, got {}", p.mass_scale)));
        }
        if self.horizon == 0 {
            return Err(EnvError::Spec("horizon must be at least 1".into()));
        }
        if !(p.dt > 0.0 && p.dt.is_finite()) {
            return Err(EnvError::Spec(format!("dt must be positive, got {}", p.dt)));
        }
        if !p.gravity.is_finite() || !(p.damping >= 0.0 && p.damping.is_finite()) {
            return Err(EnvError::Spec("gravity and damping must be finite, damping nonnegative".into()));
        }
        if !(self.reward_scale > 0.0 && self.reward_scale.is_finite()) {
            return Err(EnvError::Spec("reward_scale must be positive".into()));
        }
        Ok(())
    }

    pub fn obs_dim(&self) -> usize {
        match self.kind {
            EnvKind::ChainMdp => chain::N_STATES,
            EnvKind::CliffGrid => cliff::N_STATES,
            EnvKind::PendulumSwingup => 3,
            EnvKind::CartBalance => 4,
        }
    }

    pub fn action_space(&self) -> ActionSpace {
        match self.kind {
            EnvKind::ChainMdp => ActionSpace::Discrete(2),
            EnvKind::CliffGrid => ActionSpace::Discrete(4),
            EnvKind::PendulumSwingup => ActionSpace::Box(1),
            EnvKind::CartBalance => ActionSpace::Discrete(2),
        }
    }

    /// Upper bound on `|reward|` per step.
    pub fn reward_bound(&self) -> f64 {
        self.reward_scale
            * match self.kind {
                EnvKind::ChainMdp => 1.0,
                EnvKind::CliffGrid => cliff::REWARD_BOUND,
                EnvKind::PendulumSwingup => pendulum::REWARD_BOUND,
                EnvKind::CartBalance => 1.0,
            }
    }

    /// Undiscounted mean episode return counted as solved, declared for the
    /// continuous-control environments at their default horizon and reward
    /// scale.
    pub fn solved_threshold(&self) -> Option<f64> {
        let default = EnvSpec::new(self.kind);
        if self.horizon != default.horizon || self.reward_scale != default.reward_scale {
            return None;
        }
        match self.kind {
            EnvKind::PendulumSwingup => Some(pendulum::SOLVED_RETURN),
            EnvKind::CartBalance => Some(0.95 * self.horizon as f64),
            EnvKind::ChainMdp | EnvKind::CliffGrid => None,
        }
    }

    /// Exact tabular model, for environments that have one.
    pub fn tabular(&self, gamma: f64) -> Result<TabularMdp, EnvError> {
        match self.kind {
            EnvKind::ChainMdp => chain::tabular(self, gamma),
            EnvKind::CliffGrid => cliff::tabular(self, gamma),
            _ => Err(EnvError::NotTabular),
        }
    }

    pub fn reset<R: Rng + ?Sized>(&self, rng: &mut R) -> StepResult {
        match self.kind {
            EnvKind::ChainMdp => chain::reset(self),
            EnvKind::CliffGrid => cliff::reset(self),
            EnvKind::PendulumSwingup => pendulum::reset(self, rng),
            EnvKind::CartBalance => cart::reset(self, rng),
        }
    }

    pub fn step<R: Rng + ?Sized>(
        &self,
        state: &[f64],
        action: &Action,
        rng: &mut R,
    ) -> Result<StepResult, EnvError> {
        let result = match (self.kind, action) {
            (EnvKind::ChainMdp, Action::Discrete(a)) if *a < 2 => chain::step(self, state, *a, rng),
            (EnvKind::CliffGrid, Action::Discrete(a)) if *a < 4 => cliff::step(self, state, *a, rng),
            (EnvKind::CartBalance, Action::Discrete(a)) if *a < 2 => cart::step(self, state, *a),
            (EnvKind::PendulumSwingup, Action::Continuous(u)) if u.len() == 1 => {
                if !u[0].is_finite() {
                    return Err(EnvError::Action(format!("non-finite torque {}", u[0])));
                }
                pendulum::step(self, state, u[0])
            }
            _ => {
                return Err(EnvError::Action(format!(
                    "{action:?} is not valid for {}",
                    self.kind.name()
                )))
            }
        };
        if result.true_state.iter().any(|x| !x.is_finite()) {
            return Err(EnvError::NonFinite(result.true_state));
        }
        Ok(result)
    }
}

pub(crate) fn one_hot(n: usize, i: usize) -> Vec<f64> {
    let mut v = vec![0.0; n];
    v[i] = 1.0;
    v
}
