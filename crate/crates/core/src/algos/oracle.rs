//! Exact-expectation check of the CVaR penalty's score-function gradient
//! against finite differences of the penalty computed by trajectory
//! enumeration.

use rand::Rng;

use super::rollout::{RolloutBatch, TrajectoryInfo};
use super::trainer::score_function_gradient;
use super::AlgoError;
use crate::instances::{random_mdp, MdpSampler};
use crate::mdp::{enumerate_trajectories, Enumeration, TabularMdp, TabularPolicy};
use crate::nn::{Action, ActionDist, HeadKind, PolicyNet};
use crate::risk::RiskLevel;
use crate::rng::{stream, Domain};

#[derive(Debug, Clone, PartialEq)]
pub struct PenaltyGradientReport {
    pub score_function: [f64; 2],
    pub finite_difference: [f64; 2],
    pub rel_err: f64,
    pub trajectories: usize,
}

/// Two-parameter softmax over two actions, `π(1|s) = σ(ψ₀·s/2 + ψ₁)`,
/// embedded in a linear categorical policy net by tying its parameters.
struct TiedSoftmax {
    net: PolicyNet,
    n_states: usize,
}

impl TiedSoftmax {
    fn new(n_states: usize) -> Result<Self, AlgoError> {
        let net = PolicyNet::new(1, &[], HeadKind::Categorical { n_actions: 2 })?;
        Ok(Self { net, n_states })
    }

    /// Net layout is `[w₀, w₁, b₀, b₁]`.
    fn theta(&self, psi: [f64; 2]) -> Vec<f64> {
        vec![0.0, psi[0], 0.0, psi[1]]
    }

    fn obs(&self, s: usize) -> [f64; 1] {
        [s as f64 / 2.0]
    }

    fn tabular(&self, psi: [f64; 2]) -> Result<TabularPolicy, AlgoError> {
        let theta = self.theta(psi);
        let mut probs = Vec::with_capacity(2 * self.n_states);
        for s in 0..self.n_states {
            match self.net.distribution(&theta, &self.obs(s)) {
                ActionDist::Categorical { log_probs } => probs.extend(log_probs.iter().map(|l| l.exp())),
                ActionDist::Gaussian { .. } => unreachable!("categorical head"),
            }
        }
        TabularPolicy::new(self.n_states, 2, probs).map_err(|e| AlgoError::Config(e.to_string()))
    }
}

fn penalty(en: &Enumeration, eta: f64, lam: f64, level: RiskLevel) -> f64 {
    let k = lam / level.tail_mass();
    en.trajectories
        .iter()
        .map(|t| t.probability * k * (eta - t.discounted_return).max(0.0))
        .sum()
}

fn enumerate(mdp: &TabularMdp, pol: &TiedSoftmax, psi: [f64; 2], horizon: usize) -> Result<Enumeration, AlgoError> {
    let tab = pol.tabular(psi)?;
    enumerate_trajectories(mdp, &tab, horizon, 0.0).map_err(|e| AlgoError::Config(e.to_string()))
}

/// Compares `Σ_ξ P(ξ)·c(ξ)·∇ log P_ψ(ξ)` with central differences of
/// `(λ/(1−α))·E(η − D)⁺` on a random 3-state, 2-action MDP.
pub fn check_penalty_gradient(seed: u64) -> Result<PenaltyGradientReport, AlgoError> {
    const HORIZON: usize = 6;
    const H: f64 = 1e-5;
    let mut rng = stream(seed, Domain::Instances, 7, 0);
    let gamma = rng.gen_range(0.5..0.95);
    let mdp = random_mdp(&mut rng, &MdpSampler::new(3, 2, gamma));
    let psi = [rng.gen_range(-1.5..1.5), rng.gen_range(-1.5..1.5)];
    let lam = rng.gen_range(0.5..2.0);
    let level = RiskLevel::new(0.9).map_err(|e| AlgoError::Config(e.to_string()))?;
    let pol = TiedSoftmax::new(3)?;

    let en = enumerate(&mdp, &pol, psi, HORIZON)?;
    // η at the probability-weighted mean return keeps part of the support penalized
    let eta = en.trajectories.iter().map(|t| t.probability * t.discounted_return).sum::<f64>();
    let k = lam / level.tail_mass();

    let mut batch = RolloutBatch {
        obs_dim: 1,
        gamma,
        collected_at: 0,
        observations: Vec::new(),
        actions: Vec::new(),
        rewards: Vec::new(),
        logprobs: Vec::new(),
        values: Vec::new(),
        trajectories: Vec::new(),
        advantages: Vec::new(),
        targets: Vec::new(),
    };
    let mut coef = Vec::with_capacity(en.trajectories.len());
    for t in &en.trajectories {
        let start = batch.rewards.len();
        for (&s, (&a, &r)) in t.states.iter().zip(t.actions.iter().zip(&t.rewards)) {
            batch.observations.extend(pol.obs(s));
            batch.actions.push(Action::Discrete(a));
            batch.rewards.push(r);
            batch.logprobs.push(0.0);
            batch.values.push(0.0);
        }
        batch.trajectories.push(TrajectoryInfo {
            start,
            len: t.actions.len(),
            terminal: false,
            bootstrap_value: 0.0,
            discounted_return: t.discounted_return,
            undiscounted_return: t.rewards.iter().sum(),
        });
        coef.push(t.probability * k * (eta - t.discounted_return).max(0.0));
    }
    let full = score_function_gradient(&pol.net, &pol.theta(psi), &batch, &coef);
    let score_function = [full[1], full[3]];

    let mut finite_difference = [0.0; 2];
    for (i, fd) in finite_difference.iter_mut().enumerate() {
        let (mut up, mut down) = (psi, psi);
        up[i] += H;
        down[i] -= H;
        let plus = penalty(&enumerate(&mdp, &pol, up, HORIZON)?, eta, lam, level);
        let minus = penalty(&enumerate(&mdp, &pol, down, HORIZON)?, eta, lam, level);
        *fd = (plus - minus) / (2.0 * H);
    }
    let diff = ((score_function[0] - finite_difference[0]).powi(2) + (score_function[1] - finite_difference[1]).powi(2)).sqrt();
    let norm = (finite_difference[0].powi(2) + finite_difference[1].powi(2)).sqrt();
    Ok(PenaltyGradientReport {
        score_function,
        finite_difference,
        rel_err: diff / norm.max(1e-12),
        trajectories: en.trajectories.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn score_function_matches_enumeration() {
        for seed in 0..5 {
            let r = check_penalty_gradient(seed).unwrap();
            assert!(r.rel_err <= 1e-3, "seed {seed}: {r:?}");
            assert!(r.finite_difference.iter().any(|g| g.abs() > 1e-6), "degenerate: {r:?}");
        }
    }
}
