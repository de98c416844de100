//! Seeded random problem instances for the verification suites.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::mdp::{TabularMdp, TabularPolicy};
use crate::rng::{stream, Domain};

/// Shape of a random MDP.
#[derive(Debug, Clone, Copy)]
pub struct MdpSampler {
    pub n_states: usize,
    pub n_actions: usize,
    pub gamma: f64,
    /// Maximum number of successor states per `(s, a)`; `None` means full support.
    pub max_support: Option<usize>,
    /// Rewards are drawn uniformly from `[-reward_scale, reward_scale]`.
    pub reward_scale: f64,
}

impl MdpSampler {
    pub fn new(n_states: usize, n_actions: usize, gamma: f64) -> Self {
        Self {
            n_states,
            n_actions,
            gamma,
            max_support: None,
            reward_scale: 1.0,
        }
    }

    pub fn with_max_support(mut self, k: usize) -> Self {
        self.max_support = Some(k.max(1));
        self
    }
}

/// Flat Dirichlet(1) draw of length `n`.
pub fn dirichlet<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<f64> {
    let gamma = Gamma::new(1.0, 1.0).expect("valid gamma");
    loop {
        let draws: Vec<f64> = (0..n).map(|_| gamma.sample(rng)).collect();
        let total: f64 = draws.iter().sum();
        if total > 0.0 {
            return normalize(draws);
        }
    }
}

/// Rescale to sum to one. If some entry exceeds one half it absorbs the
/// rounding residue.
pub fn normalize(mut v: Vec<f64>) -> Vec<f64> {
    let total: f64 = v.iter().sum();
    for x in v.iter_mut() {
        *x /= total;
    }
    let sum: f64 = v.iter().sum();
    if let Some(i) = v.iter().position(|&x| x > 0.5) {
        v[i] += 1.0 - sum;
    }
    v
}

pub fn random_mdp<R: Rng + ?Sized>(rng: &mut R, sampler: &MdpSampler) -> TabularMdp {
    let (ns, na) = (sampler.n_states, sampler.n_actions);
    let mut transition = Vec::with_capacity(ns * na * ns);
    let mut states: Vec<usize> = (0..ns).collect();
    for _ in 0..ns * na {
        let k = match sampler.max_support {
            Some(max) => rng.gen_range(1..=max.min(ns)),
            None => ns,
        };
        states.shuffle(rng);
        let weights = dirichlet(rng, k);
        let mut row = vec![0.0; ns];
        for (i, &s) in states[..k].iter().enumerate() {
            row[s] = weights[i];
        }
        transition.extend(normalize(row));
    }
    let reward = (0..ns * na)
        .map(|_| rng.gen_range(-1.0..=1.0) * sampler.reward_scale)
        .collect();
    let initial = dirichlet(rng, ns);
    TabularMdp::new(ns, na, transition, reward, sampler.gamma, initial)
        .expect("sampler produces valid MDPs")
}

/// Full-support random policy.
pub fn random_policy<R: Rng + ?Sized>(rng: &mut R, n_states: usize, n_actions: usize) -> TabularPolicy {
    let probs = (0..n_states).flat_map(|_| dirichlet(rng, n_actions)).collect();
    TabularPolicy::new(n_states, n_actions, probs).expect("valid policy")
}

/// `P̂ = normalize(P + δ·Dirichlet)`: full support, so `supp P̂ ⊇ supp P`.
pub fn perturb_transition<R: Rng + ?Sized>(rng: &mut R, mdp: &TabularMdp, delta: f64) -> Vec<f64> {
    let ns = mdp.n_states();
    let mut out = Vec::with_capacity(mdp.transition().len());
    for s in 0..ns {
        for a in 0..mdp.n_actions() {
            let noise = dirichlet(rng, ns);
            let row: Vec<f64> = mdp
                .transition_row(s, a)
                .iter()
                .zip(&noise)
                .map(|(p, n)| p + delta * n)
                .collect();
            out.extend(normalize(row));
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AdversaryKind {
    /// Uniformly random permutation of the states.
    Permutation,
    /// Each state is moved to a state within `radius` index steps.
    Local { radius: usize },
}

pub fn random_state_map<R: Rng + ?Sized>(rng: &mut R, n_states: usize, kind: AdversaryKind) -> Vec<usize> {
    match kind {
        AdversaryKind::Permutation => {
            let mut perm: Vec<usize> = (0..n_states).collect();
            perm.shuffle(rng);
            perm
        }
        AdversaryKind::Local { radius } => (0..n_states)
            .map(|s| {
                let lo = s.saturating_sub(radius);
                let hi = (s + radius).min(n_states - 1);
                rng.gen_range(lo..=hi)
            })
            .collect(),
    }
}

/// Size and discount ranges for randomly drawn verification instances.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InstanceRanges {
    pub min_states: usize,
    pub max_states: usize,
    pub min_actions: usize,
    pub max_actions: usize,
    pub gamma_min: f64,
    pub gamma_max: f64,
}

impl Default for InstanceRanges {
    fn default() -> Self {
        Self {
            min_states: 2,
            max_states: 6,
            min_actions: 2,
            max_actions: 3,
            gamma_min: 0.5,
            gamma_max: 0.95,
        }
    }
}

/// MDP, policy, transition perturbation and observation adversary, all
/// drawn from one seed.
#[derive(Debug, Clone)]
pub struct DisturbanceInstance {
    pub mdp: TabularMdp,
    pub policy: TabularPolicy,
    pub perturbed_transition: Vec<f64>,
    pub delta: f64,
    pub nu: Vec<usize>,
}

pub fn disturbance_instance(seed: u64, index: u64, ranges: &InstanceRanges) -> DisturbanceInstance {
    let mut rng = stream(seed, Domain::Instances, 1, index);
    let ns = rng.gen_range(ranges.min_states..=ranges.max_states);
    let na = rng.gen_range(ranges.min_actions..=ranges.max_actions);
    let gamma = rng.gen_range(ranges.gamma_min..=ranges.gamma_max);
    let mut sampler = MdpSampler::new(ns, na, gamma);
    if rng.gen_bool(0.5) {
        sampler = sampler.with_max_support(2);
    }
    sampler.reward_scale = rng.gen_range(0.1..=5.0);
    let mdp = random_mdp(&mut rng, &sampler);
    let policy = random_policy(&mut rng, ns, na);
    // log-uniform δ covers both small and large TV regimes
    let delta = 10f64.powf(rng.gen_range(-3.0..=1.0));
    let perturbed_transition = perturb_transition(&mut rng, &mdp, delta);
    let kind = if rng.gen_bool(0.5) {
        AdversaryKind::Permutation
    } else {
        AdversaryKind::Local { radius: 1 }
    };
    let nu = random_state_map(&mut rng, ns, kind);
    DisturbanceInstance {
        mdp,
        policy,
        perturbed_transition,
        delta,
        nu,
    }
}

/// Number of length-`horizon` trajectories the enumerator would visit.
pub fn count_leaves(mdp: &TabularMdp, policy: &TabularPolicy, horizon: usize) -> f64 {
    let ns = mdp.n_states();
    // paths[s]: number of trajectory suffixes starting in s with k steps left
    let mut paths = vec![1.0f64; ns];
    for k in (0..horizon).rev() {
        paths = (0..ns)
            .map(|s| {
                (0..mdp.n_actions())
                    .filter(|&a| policy.prob(s, a) > 0.0)
                    .map(|a| {
                        if k + 1 == horizon {
                            1.0
                        } else {
                            mdp.transition_row(s, a)
                                .iter()
                                .zip(&paths)
                                .filter(|(p, _)| **p > 0.0)
                                .map(|(_, n)| n)
                                .sum()
                        }
                    })
                    .sum()
            })
            .collect();
    }
    (0..ns)
        .filter(|&s| mdp.initial_dist()[s] > 0.0)
        .map(|s| paths[s])
        .sum()
}

/// Sparse instance whose full trajectory tree at `horizon` stays below
/// `max_leaves`; resampled deterministically until it does.
pub fn enumerable_instance(
    seed: u64,
    index: u64,
    horizon: usize,
    max_leaves: f64,
) -> (TabularMdp, TabularPolicy) {
    let mut attempt = 0u64;
    loop {
        let mut rng = stream(seed, Domain::Instances, 2 + (attempt << 8), index);
        let ns = rng.gen_range(2..=4);
        let gamma = rng.gen_range(0.5..=0.9);
        let mut sampler = MdpSampler::new(ns, 2, gamma).with_max_support(2);
        sampler.reward_scale = rng.gen_range(0.5..=2.0);
        let mdp = random_mdp(&mut rng, &sampler);
        let policy = random_policy(&mut rng, ns, 2);
        if count_leaves(&mdp, &policy, horizon) <= max_leaves {
            return (mdp, policy);
        }
        attempt += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{enumerate_returns, EnumerationLimits};

    #[test]
    fn normalize_sums_to_one() {
        let mut rng = stream(0, Domain::Instances, 0, 0);
        for n in 1..20 {
            let d = dirichlet(&mut rng, n);
            assert!((d.iter().sum::<f64>() - 1.0).abs() <= 1e-15);
        }
    }

    #[test]
    fn leaf_count_matches_enumeration() {
        let (mdp, policy) = enumerable_instance(3, 0, 6, 1e6);
        let dist = enumerate_returns(
            &mdp,
            &policy,
            6,
            EnumerationLimits {
                prob_floor: 0.0,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(dist.returns.len() as f64, count_leaves(&mdp, &policy, 6));
    }

    #[test]
    fn perturbation_keeps_support() {
        let inst = disturbance_instance(9, 4, &InstanceRanges::default());
        let mdp = &inst.mdp;
        for (p, q) in mdp.transition().iter().zip(&inst.perturbed_transition) {
            assert!(*p == 0.0 || *q > 0.0);
        }
        assert!(mdp.with_transition(inst.perturbed_transition.clone()).is_ok());
    }
}
