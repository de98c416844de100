//! Transition and observation adversaries on tabular MDPs, and exact checks
//! of the performance-difference identities they induce.
//!
//! Both identities are evaluated twice: once as the difference of two exact
//! policy evaluations (`lhs_exact`), and once through the discounted state
//! distribution of the disturbed system (`rhs_exact`). Their agreement is the
//! identity check; `bound − |lhs|` is the slack of the upper bound, which is
//! governed by the value function range (VFR) of the undisturbed policy.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mdp::{
    discounted_state_distribution, value_function, MdpError, TabularMdp, TabularPolicy,
};

pub const IDENTITY_TOL: f64 = 1e-8;
pub const SLACK_TOL: f64 = 1e-10;
pub const LEMMA_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DisturbanceError {
    #[error(transparent)]
    Mdp(#[from] MdpError),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("support violation at state {state}, {detail}")]
    Support { state: usize, detail: String },
}

/// Total variation distance `½ Σ |p − q|`.
pub fn tv_distance(p: &[f64], q: &[f64]) -> Result<f64, DisturbanceError> {
    if p.len() != q.len() {
        return Err(DisturbanceError::Dimension(format!(
            "distributions of length {} and {}",
            p.len(),
            q.len()
        )));
    }
    let l1: f64 = p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum();
    Ok((0.5 * l1).clamp(0.0, 1.0))
}

/// Replacement kernel `P̂` for an MDP with `ε_P = max_{s,a} D_TV(P, P̂)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionDisturbance {
    n_states: usize,
    n_actions: usize,
    perturbed_transition: Vec<f64>,
    eps_p: f64,
}

impl TransitionDisturbance {
    /// Validates `P̂` as a kernel and requires `supp P̂(·|s,a) ⊇ supp P(·|s,a)`.
    pub fn new(mdp: &TabularMdp, perturbed_transition: Vec<f64>) -> Result<Self, DisturbanceError> {
        // re-use the MDP validator for row checks
        let disturbed = mdp.with_transition(perturbed_transition)?;
        let mut eps_p: f64 = 0.0;
        for s in 0..mdp.n_states() {
            for a in 0..mdp.n_actions() {
                let p = mdp.transition_row(s, a);
                let q = disturbed.transition_row(s, a);
                if let Some(next) = (0..p.len()).find(|&n| p[n] > 0.0 && q[n] == 0.0) {
                    return Err(DisturbanceError::Support {
                        state: s,
                        detail: format!("action {a}: P̂(s'={next}) = 0 while P(s'={next}) > 0"),
                    });
                }
                eps_p = eps_p.max(tv_distance(p, q)?);
            }
        }
        Ok(Self {
            n_states: mdp.n_states(),
            n_actions: mdp.n_actions(),
            perturbed_transition: disturbed.transition().to_vec(),
            eps_p,
        })
    }

    pub fn eps_p(&self) -> f64 {
        self.eps_p
    }

    pub fn perturbed_transition(&self) -> &[f64] {
        &self.perturbed_transition
    }

    /// The disturbed MDP `M̂` (same rewards, discount and initial distribution).
    pub fn apply(&self, mdp: &TabularMdp) -> Result<TabularMdp, DisturbanceError> {
        if mdp.n_states() != self.n_states || mdp.n_actions() != self.n_actions {
            return Err(DisturbanceError::Dimension("disturbance built for another MDP".into()));
        }
        Ok(mdp.with_transition(self.perturbed_transition.clone())?)
    }
}

/// State-observation adversary `ν`; the disturbed policy is `π(·|ν(s))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationAdversary {
    nu: Vec<usize>,
    /// `max_s D_TV(π(·|s), π(·|ν(s)))` for the policy the adversary was bound to.
    eps_pi: f64,
}

impl ObservationAdversary {
    pub fn new(policy: &TabularPolicy, nu: Vec<usize>) -> Result<Self, DisturbanceError> {
        if nu.len() != policy.n_states() {
            return Err(DisturbanceError::Dimension(format!(
                "ν has {} entries for {} states",
                nu.len(),
                policy.n_states()
            )));
        }
        if let Some(&bad) = nu.iter().find(|&&t| t >= policy.n_states()) {
            return Err(DisturbanceError::Dimension(format!("ν maps to state {bad}")));
        }
        let mut eps_pi: f64 = 0.0;
        for (s, &t) in nu.iter().enumerate() {
            eps_pi = eps_pi.max(tv_distance(policy.row(s), policy.row(t))?);
        }
        Ok(Self { nu, eps_pi })
    }

    pub fn nu(&self) -> &[usize] {
        &self.nu
    }

    pub fn eps_pi(&self) -> f64 {
        self.eps_pi
    }

    /// First `(s, a)` where `π(a|ν(s)) = 0 < π(a|s)`, if any.
    pub fn support_violation(&self, policy: &TabularPolicy) -> Option<(usize, usize)> {
        self.nu.iter().enumerate().find_map(|(s, &t)| {
            (0..policy.n_actions())
                .find(|&a| policy.prob(t, a) == 0.0 && policy.prob(s, a) > 0.0)
                .map(|a| (s, a))
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    /// `J(disturbed) − J(nominal)` from two exact solves.
    pub lhs_exact: f64,
    /// The identity's right-hand side.
    pub rhs_exact: f64,
    pub bound: f64,
    pub identity_residual: f64,
    /// `bound − |lhs_exact|`
    pub slack: f64,
}

impl BoundReport {
    fn new(lhs: f64, rhs: f64, bound: f64) -> Self {
        Self {
            lhs_exact: lhs,
            rhs_exact: rhs,
            bound,
            identity_residual: (lhs - rhs).abs(),
            slack: bound - lhs.abs(),
        }
    }

    pub fn holds(&self, identity_tol: f64, slack_tol: f64) -> bool {
        self.identity_residual <= identity_tol && self.slack >= -slack_tol
    }
}

/// `max_s |d(s) − (1−γ)μ(s) − γ Σ_{s'} d(s') Σ_a π(a|s') P(s|s',a)|`.
pub fn check_lemma1(mdp: &TabularMdp, policy: &TabularPolicy) -> Result<f64, DisturbanceError> {
    let d = discounted_state_distribution(mdp, policy)?;
    let gamma = mdp.gamma();
    let n = mdp.n_states();
    let mut worst: f64 = 0.0;
    for s in 0..n {
        let lhs = d[s] - (1.0 - gamma) * mdp.initial_dist()[s];
        let mut inflow = 0.0;
        for prev in 0..n {
            for a in 0..mdp.n_actions() {
                inflow += d[prev] * policy.prob(prev, a) * mdp.p(prev, a, s);
            }
        }
        worst = worst.max((lhs - gamma * inflow).abs());
    }
    Ok(worst)
}

/// Transition-disturbance identity and its VFR bound
/// `|J_M̂ − J_M| ≤ 2γ/(1−γ) · ε_P · VFR`.
pub fn check_transition_theorem(
    mdp: &TabularMdp,
    policy: &TabularPolicy,
    dist: &TransitionDisturbance,
) -> Result<BoundReport, DisturbanceError> {
    let disturbed = dist.apply(mdp)?;
    let nominal = value_function(mdp, policy)?;
    let shifted = value_function(&disturbed, policy)?;
    let lhs = shifted.expected_return - nominal.expected_return;

    let gamma = mdp.gamma();
    let d_hat = discounted_state_distribution(&disturbed, policy)?;
    let mut acc = 0.0;
    for s in 0..mdp.n_states() {
        if d_hat[s] == 0.0 {
            continue;
        }
        let mut per_state = 0.0;
        for a in 0..mdp.n_actions() {
            let pa = policy.prob(s, a);
            if pa == 0.0 {
                continue;
            }
            let mut inner = 0.0;
            for next in 0..mdp.n_states() {
                let p = mdp.p(s, a, next);
                let q = disturbed.p(s, a, next);
                if q == 0.0 {
                    // expectation is under P̂, so the term carries no weight
                    if p > 0.0 {
                        return Err(DisturbanceError::Support {
                            state: s,
                            detail: format!("action {a}, next {next}"),
                        });
                    }
                    continue;
                }
                inner += q * (1.0 - p / q) * nominal.values[next];
            }
            per_state += pa * inner;
        }
        acc += d_hat[s] * per_state;
    }
    let rhs = gamma / (1.0 - gamma) * acc;
    let bound = 2.0 * gamma / (1.0 - gamma) * dist.eps_p() * nominal.vfr;
    Ok(BoundReport::new(lhs, rhs, bound))
}

/// `γ/(1−γ) ε_π VFR + 2/(1−γ) ε_π max|R|`.
pub fn observation_bound(gamma: f64, eps_pi: f64, vfr: f64, r_max: f64) -> f64 {
    gamma / (1.0 - gamma) * eps_pi * vfr + 2.0 / (1.0 - gamma) * eps_pi * r_max
}

/// The looser SA-MDP style bound `(2γ/(1−γ)² + 2/(1−γ)) ε_π max|R|`.
pub fn samdp_bound(gamma: f64, eps_pi: f64, r_max: f64) -> f64 {
    (2.0 * gamma / ((1.0 - gamma) * (1.0 - gamma)) + 2.0 / (1.0 - gamma)) * eps_pi * r_max
}

/// Observation-disturbance identity (two-term) and its VFR bound.
pub fn check_observation_theorem(
    mdp: &TabularMdp,
    policy: &TabularPolicy,
    adv: &ObservationAdversary,
) -> Result<BoundReport, DisturbanceError> {
    if let Some((s, a)) = adv.support_violation(policy) {
        return Err(DisturbanceError::Support {
            state: s,
            detail: format!("π(a={a}|ν(s)) = 0 while π(a={a}|s) > 0"),
        });
    }
    let disturbed_policy = policy.compose(adv.nu())?;
    let nominal = value_function(mdp, policy)?;
    let shifted = value_function(mdp, &disturbed_policy)?;
    let lhs = shifted.expected_return - nominal.expected_return;

    let gamma = mdp.gamma();
    let d = discounted_state_distribution(mdp, &disturbed_policy)?;
    let (mut value_term, mut reward_term) = (0.0, 0.0);
    for s in 0..mdp.n_states() {
        let t = adv.nu()[s];
        for a in 0..mdp.n_actions() {
            let seen = policy.prob(t, a);
            if seen == 0.0 {
                continue;
            }
            let weight = d[s] * seen * (1.0 - policy.prob(s, a) / seen);
            let next_value: f64 = mdp
                .transition_row(s, a)
                .iter()
                .zip(&nominal.values)
                .map(|(p, v)| p * v)
                .sum();
            value_term += weight * next_value;
            reward_term += weight * mdp.reward(s, a);
        }
    }
    let rhs = gamma / (1.0 - gamma) * value_term + reward_term / (1.0 - gamma);
    let bound = observation_bound(gamma, adv.eps_pi(), nominal.vfr, mdp.r_max());
    Ok(BoundReport::new(lhs, rhs, bound))
}

/// `(ours, samdp)`: the VFR observation bound next to the SA-MDP style bound
/// that replaces the VFR with `2 max|R|/(1−γ)`.
pub fn check_bound_dominance(
    mdp: &TabularMdp,
    policy: &TabularPolicy,
    adv: &ObservationAdversary,
) -> Result<(f64, f64), DisturbanceError> {
    let profile = value_function(mdp, policy)?;
    let r_max = mdp.r_max();
    Ok((
        observation_bound(mdp.gamma(), adv.eps_pi(), profile.vfr, r_max),
        samdp_bound(mdp.gamma(), adv.eps_pi(), r_max),
    ))
}

/// Both bounds evaluated with rewards rescaled so that `max|R| = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct JointBounds {
    pub reward_scale: f64,
    pub vfr: f64,
    pub transition: f64,
    pub observation: f64,
}

pub fn joint_bounds(
    mdp: &TabularMdp,
    policy: &TabularPolicy,
    dist: &TransitionDisturbance,
    adv: &ObservationAdversary,
) -> Result<JointBounds, DisturbanceError> {
    let r_max = mdp.r_max();
    let scale = if r_max > 0.0 { 1.0 / r_max } else { 1.0 };
    let unit = mdp.with_rewards(mdp.rewards().iter().map(|r| r * scale).collect())?;
    let vfr = value_function(&unit, policy)?.vfr;
    let gamma = mdp.gamma();
    Ok(JointBounds {
        reward_scale: scale,
        vfr,
        transition: 2.0 * gamma / (1.0 - gamma) * dist.eps_p() * vfr,
        observation: observation_bound(gamma, adv.eps_pi(), vfr, unit.r_max()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances::{
        disturbance_instance, perturb_transition, random_mdp, random_policy, InstanceRanges,
        MdpSampler,
    };
    use crate::rng::{stream, Domain};

    #[test]
    fn tv_examples() {
        assert_eq!(tv_distance(&[0.3, 0.7], &[0.3, 0.7]).unwrap(), 0.0);
        assert_eq!(tv_distance(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 1.0);
        assert_eq!(tv_distance(&[0.5, 0.5], &[0.75, 0.25]).unwrap(), 0.25);
        assert!(tv_distance(&[1.0], &[0.5, 0.5]).is_err());
    }

    #[test]
    fn lemma1_examples() {
        let single = TabularMdp::new(1, 1, vec![1.0], vec![1.0], 0.3, vec![1.0]).unwrap();
        assert!(check_lemma1(&single, &TabularPolicy::uniform(1, 1)).unwrap() < 1e-15);
        for i in 0..50 {
            let mut rng = stream(10, Domain::Instances, 0, i);
            let gamma = if i % 2 == 0 { 0.01 } else { 0.95 };
            let mdp = random_mdp(&mut rng, &MdpSampler::new(5, 2, gamma));
            let policy = random_policy(&mut rng, 5, 2);
            assert!(check_lemma1(&mdp, &policy).unwrap() <= LEMMA_TOL);
        }
    }

    #[test]
    fn no_transition_disturbance() {
        let mut rng = stream(11, Domain::Instances, 0, 0);
        let mdp = random_mdp(&mut rng, &MdpSampler::new(4, 2, 0.9));
        let policy = random_policy(&mut rng, 4, 2);
        let dist = TransitionDisturbance::new(&mdp, mdp.transition().to_vec()).unwrap();
        let r = check_transition_theorem(&mdp, &policy, &dist).unwrap();
        assert_eq!(dist.eps_p(), 0.0);
        assert!(r.lhs_exact.abs() < 1e-12 && r.rhs_exact.abs() < 1e-12 && r.bound == 0.0);
    }

    #[test]
    fn constant_reward_transition_case() {
        let mut rng = stream(12, Domain::Instances, 0, 0);
        let mdp = random_mdp(&mut rng, &MdpSampler::new(4, 2, 0.8))
            .with_rewards(vec![0.7; 8])
            .unwrap();
        let policy = random_policy(&mut rng, 4, 2);
        let dist = TransitionDisturbance::new(&mdp, perturb_transition(&mut rng, &mdp, 0.5)).unwrap();
        let r = check_transition_theorem(&mdp, &policy, &dist).unwrap();
        assert!(r.lhs_exact.abs() < 1e-12);
        assert!(r.bound.abs() < 1e-12);
    }

    #[test]
    fn support_violations_are_reported() {
        let mdp = TabularMdp::new(2, 1, vec![0.5, 0.5, 0.0, 1.0], vec![0.0, 1.0], 0.9, vec![1.0, 0.0])
            .unwrap();
        let err = TransitionDisturbance::new(&mdp, vec![1.0, 0.0, 0.0, 1.0]).unwrap_err();
        assert!(matches!(err, DisturbanceError::Support { state: 0, .. }));

        let policy = TabularPolicy::new(2, 2, vec![0.5, 0.5, 1.0, 0.0]).unwrap();
        let adv = ObservationAdversary::new(&policy, vec![1, 1]).unwrap();
        assert_eq!(adv.support_violation(&policy), Some((0, 1)));
    }

    #[test]
    fn random_transition_instances() {
        let ranges = InstanceRanges::default();
        for i in 0..100 {
            let inst = disturbance_instance(20, i, &ranges);
            let dist = TransitionDisturbance::new(&inst.mdp, inst.perturbed_transition.clone()).unwrap();
            let r = check_transition_theorem(&inst.mdp, &inst.policy, &dist).unwrap();
            assert!(r.identity_residual <= IDENTITY_TOL, "instance {i}: {r:?}");
            assert!(r.slack >= -SLACK_TOL, "instance {i}: {r:?}");
        }
    }

    #[test]
    fn swapped_roles_flip_sign() {
        for i in 0..30 {
            let mut rng = stream(21, Domain::Instances, 0, i);
            let mdp = random_mdp(&mut rng, &MdpSampler::new(4, 2, 0.9));
            let policy = random_policy(&mut rng, 4, 2);
            let hat = perturb_transition(&mut rng, &mdp, 0.3);
            let forward = TransitionDisturbance::new(&mdp, hat.clone()).unwrap();
            let m_hat = forward.apply(&mdp).unwrap();
            let backward = TransitionDisturbance::new(&m_hat, mdp.transition().to_vec()).unwrap();
            let a = check_transition_theorem(&mdp, &policy, &forward).unwrap();
            let b = check_transition_theorem(&m_hat, &policy, &backward).unwrap();
            assert!((a.lhs_exact + b.lhs_exact).abs() < 1e-10);
            if a.lhs_exact.abs() > 1e-9 {
                assert!(a.lhs_exact.signum() != b.lhs_exact.signum());
            }
            assert!(b.identity_residual <= IDENTITY_TOL);
        }
    }

    #[test]
    fn observation_trivial_cases() {
        let mut rng = stream(13, Domain::Instances, 0, 0);
        let mdp = random_mdp(&mut rng, &MdpSampler::new(4, 3, 0.9));
        let policy = random_policy(&mut rng, 4, 3);
        let identity = ObservationAdversary::new(&policy, vec![0, 1, 2, 3]).unwrap();
        let r = check_observation_theorem(&mdp, &policy, &identity).unwrap();
        assert!(r.lhs_exact.abs() < 1e-12 && r.rhs_exact == 0.0 && r.bound == 0.0);

        let row = [0.2, 0.3, 0.5];
        let flat = TabularPolicy::new(4, 3, row.repeat(4)).unwrap();
        let adv = ObservationAdversary::new(&flat, vec![3, 0, 0, 1]).unwrap();
        let r = check_observation_theorem(&mdp, &flat, &adv).unwrap();
        assert!(r.lhs_exact.abs() < 1e-12 && r.bound == 0.0);
    }

    #[test]
    fn random_observation_instances() {
        let ranges = InstanceRanges::default();
        for i in 0..100 {
            let inst = disturbance_instance(30, i, &ranges);
            let adv = ObservationAdversary::new(&inst.policy, inst.nu.clone()).unwrap();
            let r = check_observation_theorem(&inst.mdp, &inst.policy, &adv).unwrap();
            assert!(r.identity_residual <= IDENTITY_TOL, "instance {i}: {r:?}");
            assert!(r.slack >= -SLACK_TOL, "instance {i}: {r:?}");
            let (ours, samdp) = check_bound_dominance(&inst.mdp, &inst.policy, &adv).unwrap();
            assert!(ours <= samdp + 1e-12);
        }
    }

    #[test]
    fn dominance_examples() {
        let mut rng = stream(14, Domain::Instances, 0, 0);
        let mdp = random_mdp(&mut rng, &MdpSampler::new(3, 2, 0.7));
        let policy = random_policy(&mut rng, 3, 2);
        let adv = ObservationAdversary::new(&policy, vec![0, 1, 2]).unwrap();
        assert_eq!(check_bound_dominance(&mdp, &policy, &adv).unwrap(), (0.0, 0.0));

        // two absorbing states with rewards ±R: VFR = 2R/(1−γ), the equality case
        let r = 2.0;
        let gamma = 0.8;
        let worst = TabularMdp::new(
            2,
            2,
            vec![1.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 1.0],
            vec![r, r, -r, -r],
            gamma,
            vec![0.5, 0.5],
        )
        .unwrap();
        let policy = TabularPolicy::new(2, 2, vec![0.9, 0.1, 0.2, 0.8]).unwrap();
        let adv = ObservationAdversary::new(&policy, vec![1, 0]).unwrap();
        let (ours, samdp) = check_bound_dominance(&worst, &policy, &adv).unwrap();
        assert!(adv.eps_pi() > 0.0);
        assert!((ours - samdp).abs() < 1e-12 * samdp);
    }

    #[test]
    fn joint_bounds_with_unit_rewards() {
        let inst = disturbance_instance(40, 0, &InstanceRanges::default());
        let dist = TransitionDisturbance::new(&inst.mdp, inst.perturbed_transition.clone()).unwrap();
        let adv = ObservationAdversary::new(&inst.policy, inst.nu.clone()).unwrap();
        let j = joint_bounds(&inst.mdp, &inst.policy, &dist, &adv).unwrap();
        let gamma = inst.mdp.gamma();
        let expected = gamma / (1.0 - gamma) * adv.eps_pi() * j.vfr + 2.0 / (1.0 - gamma) * adv.eps_pi();
        assert_eq!(j.observation, expected);
        let scaled_vfr = value_function(&inst.mdp, &inst.policy).unwrap().vfr * j.reward_scale;
        assert!((scaled_vfr - j.vfr).abs() < 1e-10);
    }
}
