use rand::Rng;
use serde::{Deserialize, Serialize};

use super::AlgoError;
use crate::envs::{disturb_observation, AttackContext, EnvSpec, ObsDisturbance};
use crate::mdp::trajectory_return;
use crate::nn::{Action, MlpShape, PolicyNet};
use crate::par;
use crate::rng::{stream, Domain};

/// Per-trajectory bookkeeping inside a [`RolloutBatch`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryInfo {
    /// Index of the first step in the flat step arrays.
    pub start: usize,
    pub len: usize,
    /// Ended in a terminal state (no bootstrapping).
    pub terminal: bool,
    /// `V_φ` at the state after the last step; zero when terminal.
    pub bootstrap_value: f64,
    /// `D(ξ) = Σ γ^t r_t`
    pub discounted_return: f64,
    pub undiscounted_return: f64,
}

/// N trajectories stored as flat per-step arrays.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutBatch {
    pub obs_dim: usize,
    pub gamma: f64,
    /// Update counter of the parameters that collected the batch.
    pub collected_at: u64,
    pub observations: Vec<f64>,
    pub actions: Vec<Action>,
    pub rewards: Vec<f64>,
    pub logprobs: Vec<f64>,
    pub values: Vec<f64>,
    pub trajectories: Vec<TrajectoryInfo>,
    /// Filled by [`RolloutBatch::compute_advantages`].
    pub advantages: Vec<f64>,
    pub targets: Vec<f64>,
}

impl RolloutBatch {
    pub fn n_steps(&self) -> usize {
        self.rewards.len()
    }

    pub fn n_trajectories(&self) -> usize {
        self.trajectories.len()
    }

    pub fn observation(&self, step: usize) -> &[f64] {
        &self.observations[step * self.obs_dim..(step + 1) * self.obs_dim]
    }

    pub fn discounted_returns(&self) -> Vec<f64> {
        self.trajectories.iter().map(|t| t.discounted_return).collect()
    }

    pub fn undiscounted_returns(&self) -> Vec<f64> {
        self.trajectories.iter().map(|t| t.undiscounted_return).collect()
    }

    /// Trajectory index of every step.
    pub fn step_owners(&self) -> Vec<usize> {
        let mut owners = Vec::with_capacity(self.n_steps());
        for (i, t) in self.trajectories.iter().enumerate() {
            owners.extend(std::iter::repeat(i).take(t.len));
        }
        owners
    }

    pub fn compute_advantages(&mut self, gamma: f64, lambda_gae: f64) {
        self.advantages = vec![0.0; self.n_steps()];
        self.targets = vec![0.0; self.n_steps()];
        for t in &self.trajectories {
            let range = t.start..t.start + t.len;
            let (adv, target) = super::gae::gae(
                &self.rewards[range.clone()],
                &self.values[range.clone()],
                t.bootstrap_value,
                gamma,
                lambda_gae,
            );
            self.advantages[range.clone()].copy_from_slice(&adv);
            self.targets[range].copy_from_slice(&target);
        }
    }
}

/// Everything a rollout worker needs; borrowed, so workers share it.
#[derive(Debug, Clone, Copy)]
pub struct RolloutSource<'a> {
    pub env: &'a EnvSpec,
    pub policy: &'a PolicyNet,
    pub theta: &'a [f64],
    pub value: &'a MlpShape,
    pub phi: &'a [f64],
}

struct Collected {
    observations: Vec<f64>,
    actions: Vec<Action>,
    rewards: Vec<f64>,
    logprobs: Vec<f64>,
    values: Vec<f64>,
    terminal: bool,
    bootstrap_value: f64,
}

fn collect_one(src: &RolloutSource<'_>, seed: u64, update: u64, index: u64) -> Result<Collected, AlgoError> {
    let mut rng = stream(seed, Domain::Rollout, update, index);
    let horizon = src.env.horizon;
    let mut out = Collected {
        observations: Vec::with_capacity(horizon * src.env.obs_dim()),
        actions: Vec::with_capacity(horizon),
        rewards: Vec::with_capacity(horizon),
        logprobs: Vec::with_capacity(horizon),
        values: Vec::with_capacity(horizon),
        terminal: false,
        bootstrap_value: 0.0,
    };
    let mut state = src.env.reset(&mut rng);
    for _ in 0..horizon {
        let obs = &state.observation;
        let dist = src.policy.distribution(src.theta, obs);
        let action = dist.sample(&mut rng);
        out.logprobs.push(dist.log_prob(&action));
        out.values.push(src.value.eval(src.phi, obs)[0]);
        out.observations.extend_from_slice(obs);
        let next = src
            .env
            .step(&state.true_state, &action, &mut rng)
            .map_err(|source| AlgoError::Env { trajectory: index as usize, source })?;
        out.actions.push(action);
        out.rewards.push(next.reward);
        state = next;
        if state.done {
            out.terminal = true;
            break;
        }
    }
    if !out.terminal {
        out.bootstrap_value = src.value.eval(src.phi, &state.observation)[0];
    }
    Ok(out)
}

/// Samples `n` trajectories; trajectory `i` uses stream `(seed, Rollout,
/// update, i)`, so the batch does not depend on the thread count.
pub fn collect_rollouts(
    src: &RolloutSource<'_>,
    n: usize,
    gamma: f64,
    seed: u64,
    update: u64,
) -> Result<RolloutBatch, AlgoError> {
    if n < 2 {
        return Err(AlgoError::Config(format!("need at least 2 trajectories, got {n}")));
    }
    let collected = par::try_map_range(n, |i| collect_one(src, seed, update, i as u64))?;
    let mut batch = RolloutBatch {
        obs_dim: src.env.obs_dim(),
        gamma,
        collected_at: update,
        observations: Vec::new(),
        actions: Vec::new(),
        rewards: Vec::new(),
        logprobs: Vec::new(),
        values: Vec::new(),
        trajectories: Vec::with_capacity(n),
        advantages: Vec::new(),
        targets: Vec::new(),
    };
    for c in collected {
        batch.trajectories.push(TrajectoryInfo {
            start: batch.rewards.len(),
            len: c.rewards.len(),
            terminal: c.terminal,
            bootstrap_value: c.bootstrap_value,
            discounted_return: trajectory_return(&c.rewards, gamma),
            undiscounted_return: c.rewards.iter().sum(),
        });
        batch.observations.extend(c.observations);
        batch.actions.extend(c.actions);
        batch.rewards.extend(c.rewards);
        batch.logprobs.extend(c.logprobs);
        batch.values.extend(c.values);
    }
    Ok(batch)
}

/// How actions are chosen during evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ActionSelection {
    /// Argmax / Gaussian mean.
    #[default]
    Greedy,
    Sample,
}

#[derive(Debug, Clone, Copy)]
pub struct EvalSettings {
    pub episodes: usize,
    pub gamma: f64,
    pub selection: ActionSelection,
    pub disturbance: ObsDisturbance,
    pub fgsm_loss: crate::envs::FgsmLoss,
}

/// Per-episode returns of an evaluation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReturns {
    pub discounted: Vec<f64>,
    pub undiscounted: Vec<f64>,
}

impl EvalReturns {
    pub fn mean_undiscounted(&self) -> f64 {
        self.undiscounted.iter().sum::<f64>() / self.undiscounted.len() as f64
    }

    pub fn mean_discounted(&self) -> f64 {
        self.discounted.iter().sum::<f64>() / self.discounted.len() as f64
    }
}

/// Runs `episodes` evaluation episodes; episode `k` uses streams
/// `(seed, Evaluation, 0, k)` for the environment and `(seed, Observation,
/// 0, k)` for observation noise. The policy sees the disturbed observation;
/// the dynamics never do.
pub fn evaluate(src: &RolloutSource<'_>, settings: &EvalSettings, seed: u64) -> Result<EvalReturns, AlgoError> {
    settings.disturbance.validate().map_err(|source| AlgoError::Env { trajectory: 0, source })?;
    let ctx = AttackContext {
        policy: src.policy,
        theta: src.theta,
        value: Some((src.value, src.phi)),
        loss: settings.fgsm_loss,
    };
    let episodes = par::try_map_range(settings.episodes, |k| -> Result<(f64, f64), AlgoError> {
        let mut rng = stream(seed, Domain::Evaluation, 0, k as u64);
        let mut noise = stream(seed, Domain::Observation, 0, k as u64);
        let mut state = src.env.reset(&mut rng);
        let mut rewards = Vec::with_capacity(src.env.horizon);
        let fault = |source| AlgoError::Env { trajectory: k, source };
        for _ in 0..src.env.horizon {
            let seen = disturb_observation(&state.observation, settings.disturbance, Some(&ctx), &mut noise)
                .map_err(fault)?;
            let dist = src.policy.distribution(src.theta, &seen);
            let action = match settings.selection {
                ActionSelection::Greedy => dist.mode(),
                ActionSelection::Sample => dist.sample(&mut rng),
            };
            state = src.env.step(&state.true_state, &action, &mut rng).map_err(fault)?;
            rewards.push(state.reward);
            if state.done {
                break;
            }
        }
        Ok((trajectory_return(&rewards, settings.gamma), rewards.iter().sum()))
    })?;
    let (discounted, undiscounted) = episodes.into_iter().unzip();
    Ok(EvalReturns {
        discounted,
        undiscounted,
    })
}

/// Draws a uniform minibatch permutation of `0..n`.
pub fn shuffled_indices<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<usize> {
    use rand::seq::SliceRandom;
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    idx
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::EnvKind;
    use crate::nn::HeadKind;

    fn setup(kind: EnvKind) -> (EnvSpec, PolicyNet, Vec<f64>, MlpShape, Vec<f64>) {
        let env = EnvSpec::new(kind);
        let policy = PolicyNet::new(env.obs_dim(), &[8], env.action_space().head()).unwrap();
        let theta = policy.init(&mut stream(0, Domain::Init, 0, 0), -0.5);
        let value = MlpShape::with_hidden(env.obs_dim(), &[8], 1).unwrap();
        let phi = value.init(&mut stream(0, Domain::Init, 1, 0), 1.0);
        (env, policy, theta, value, phi)
    }

    #[test]
    fn batch_shape() {
        let (mut env, policy, theta, value, phi) = setup(EnvKind::PendulumSwingup);
        env.horizon = 50;
        let src = RolloutSource { env: &env, policy: &policy, theta: &theta, value: &value, phi: &phi };
        let b = collect_rollouts(&src, 4, 0.99, 1, 0).unwrap();
        assert_eq!((b.n_steps(), b.n_trajectories()), (200, 4));
        assert_eq!(b.observations.len(), 200 * 3);
        assert!(collect_rollouts(&src, 1, 0.99, 1, 0).is_err());
    }

    #[test]
    fn recorded_logprobs_recompute() {
        let (env, policy, theta, value, phi) = setup(EnvKind::CartBalance);
        let src = RolloutSource { env: &env, policy: &policy, theta: &theta, value: &value, phi: &phi };
        let b = collect_rollouts(&src, 3, 0.99, 2, 0).unwrap();
        for s in 0..b.n_steps() {
            let lp = policy.distribution(&theta, b.observation(s)).log_prob(&b.actions[s]);
            assert!((lp - b.logprobs[s]).abs() <= 1e-10);
        }
    }

    #[test]
    fn deterministic_policy_gives_identical_trajectories() {
        // chain with no slip and a policy that always moves right
        let mut env = EnvSpec::new(EnvKind::ChainMdp);
        env.physics.mass_scale = 0.0;
        let policy = PolicyNet::new(env.obs_dim(), &[], HeadKind::Categorical { n_actions: 2 }).unwrap();
        let mut theta = vec![0.0; policy.n_params()];
        // biases of the linear head: strongly prefer action 1
        let n = theta.len();
        theta[n - 1] = 60.0;
        let value = MlpShape::new(vec![env.obs_dim(), 1]).unwrap();
        let phi = vec![0.0; value.n_params()];
        let src = RolloutSource { env: &env, policy: &policy, theta: &theta, value: &value, phi: &phi };
        let b = collect_rollouts(&src, 5, 0.9, 3, 0).unwrap();
        let first = &b.rewards[..b.trajectories[0].len];
        for t in &b.trajectories {
            assert_eq!(&b.rewards[t.start..t.start + t.len], first);
        }
    }

    #[test]
    fn same_seed_same_batch() {
        let (env, policy, theta, value, phi) = setup(EnvKind::PendulumSwingup);
        let src = RolloutSource { env: &env, policy: &policy, theta: &theta, value: &value, phi: &phi };
        assert_eq!(
            collect_rollouts(&src, 3, 0.99, 4, 2).unwrap(),
            collect_rollouts(&src, 3, 0.99, 4, 2).unwrap()
        );
    }

    #[test]
    fn zero_sigma_evaluation_matches_clean() {
        let (env, policy, theta, value, phi) = setup(EnvKind::CartBalance);
        let src = RolloutSource { env: &env, policy: &policy, theta: &theta, value: &value, phi: &phi };
        let mut settings = EvalSettings {
            episodes: 10,
            gamma: 0.99,
            selection: ActionSelection::Sample,
            disturbance: ObsDisturbance::None,
            fgsm_loss: Default::default(),
        };
        let clean = evaluate(&src, &settings, 5).unwrap();
        settings.disturbance = ObsDisturbance::Gaussian { sigma: 0.0 };
        assert_eq!(evaluate(&src, &settings, 5).unwrap(), clean);
    }
}
