//! Exact computations on finite MDPs.
//!
//! Everything here is dense linear algebra over at most a few dozen states:
//! policy evaluation is a direct solve of `(I - γ P_π) V = R_π`, and the
//! discounted state distribution solves `d = (1-γ) μ + γ P_πᵀ d`. Returns
//! are indexed from `t = 0`, so the first reward is undiscounted.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance for probability rows summing to one.
pub const PROB_TOL: f64 = 1e-12;
pub const DEFAULT_PROB_FLOOR: f64 = 1e-12;
pub const DEFAULT_NODE_BUDGET: u64 = 10_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MdpError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("transition row ({state}, {action}) is not a distribution: {reason}")]
    TransitionRow {
        state: usize,
        action: usize,
        reason: String,
    },
    #[error("initial distribution is invalid: {0}")]
    InitialDist(String),
    #[error("policy row {state} is not a distribution: {reason}")]
    PolicyRow { state: usize, reason: String },
    #[error("discount must lie in (0, 1), got {0}")]
    Discount(f64),
    #[error("reward ({state}, {action}) is not finite")]
    Reward { state: usize, action: usize },
    #[error("linear system is singular")]
    Singular,
    #[error("trajectory enumeration exceeded the node budget of {budget}")]
    BudgetExceeded { budget: u64 },
    #[error("invalid enumeration request: {0}")]
    Enumeration(String),
    #[error("malformed MDP document: {0}")]
    Document(String),
}

fn check_distribution(row: &[f64]) -> Result<(), String> {
    let mut sum = 0.0;
    for &p in row {
        if !p.is_finite() || p < 0.0 {
            return Err(format!("entry {p} is negative or non-finite"));
        }
        sum += p;
    }
    if (sum - 1.0).abs() > PROB_TOL {
        return Err(format!("sums to {sum}"));
    }
    Ok(())
}

/// Finite MDP `(S, A, P, R, γ, μ)`.
///
/// `transition` is row-major `(s, a, s')`, `reward` is row-major `(s, a)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MdpDocument", into = "MdpDocument")]
pub struct TabularMdp {
    n_states: usize,
    n_actions: usize,
    transition: Vec<f64>,
    reward: Vec<f64>,
    gamma: f64,
    initial_dist: Vec<f64>,
}

impl TabularMdp {
    pub fn new(
        n_states: usize,
        n_actions: usize,
        transition: Vec<f64>,
        reward: Vec<f64>,
        gamma: f64,
        initial_dist: Vec<f64>,
    ) -> Result<Self, MdpError> {
        if n_states == 0 || n_actions == 0 {
            return Err(MdpError::Dimension("need at least one state and one action".into()));
        }
        if transition.len() != n_states * n_actions * n_states {
            return Err(MdpError::Dimension(format!(
                "transition has {} entries, expected {}",
                transition.len(),
                n_states * n_actions * n_states
            )));
        }
        if reward.len() != n_states * n_actions {
            return Err(MdpError::Dimension(format!(
                "reward has {} entries, expected {}",
                reward.len(),
                n_states * n_actions
            )));
        }
        if initial_dist.len() != n_states {
            return Err(MdpError::Dimension(format!(
                "initial distribution has {} entries, expected {n_states}",
                initial_dist.len()
            )));
        }
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(MdpError::Discount(gamma));
        }
        for s in 0..n_states {
            for a in 0..n_actions {
                let start = (s * n_actions + a) * n_states;
                check_distribution(&transition[start..start + n_states]).map_err(|reason| {
                    MdpError::TransitionRow {
                        state: s,
                        action: a,
                        reason,
                    }
                })?;
                if !reward[s * n_actions + a].is_finite() {
                    return Err(MdpError::Reward {
                        state: s,
                        action: a,
                    });
                }
            }
        }
        check_distribution(&initial_dist).map_err(MdpError::InitialDist)?;
        Ok(Self {
            n_states,
            n_actions,
            transition,
            reward,
            gamma,
            initial_dist,
        })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn initial_dist(&self) -> &[f64] {
        &self.initial_dist
    }

    pub fn transition(&self) -> &[f64] {
        &self.transition
    }

    pub fn rewards(&self) -> &[f64] {
        &self.reward
    }

    #[inline]
    pub fn p(&self, s: usize, a: usize, next: usize) -> f64 {
        self.transition[(s * self.n_actions + a) * self.n_states + next]
    }

    #[inline]
    pub fn transition_row(&self, s: usize, a: usize) -> &[f64] {
        let start = (s * self.n_actions + a) * self.n_states;
        &self.transition[start..start + self.n_states]
    }

    #[inline]
    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.reward[s * self.n_actions + a]
    }

    /// `max_{s,a} |R(s, a)|`.
    pub fn r_max(&self) -> f64 {
        self.reward.iter().fold(0.0, |m, r| m.max(r.abs()))
    }

    /// Same MDP with a different transition kernel.
    pub fn with_transition(&self, transition: Vec<f64>) -> Result<Self, MdpError> {
        Self::new(
            self.n_states,
            self.n_actions,
            transition,
            self.reward.clone(),
            self.gamma,
            self.initial_dist.clone(),
        )
    }

    pub fn with_rewards(&self, reward: Vec<f64>) -> Result<Self, MdpError> {
        Self::new(
            self.n_states,
            self.n_actions,
            self.transition.clone(),
            reward,
            self.gamma,
            self.initial_dist.clone(),
        )
    }

    pub fn with_initial_dist(&self, initial_dist: Vec<f64>) -> Result<Self, MdpError> {
        Self::new(
            self.n_states,
            self.n_actions,
            self.transition.clone(),
            self.reward.clone(),
            self.gamma,
            initial_dist,
        )
    }

    /// Relabel states: new state `i` is old state `perm[i]`.
    pub fn permute_states(&self, perm: &[usize]) -> Result<Self, MdpError> {
        let n = self.n_states;
        if perm.len() != n {
            return Err(MdpError::Dimension("permutation length".into()));
        }
        let mut inverse = vec![usize::MAX; n];
        for (new, &old) in perm.iter().enumerate() {
            if old >= n || inverse[old] != usize::MAX {
                return Err(MdpError::Dimension("not a permutation".into()));
            }
            inverse[old] = new;
        }
        let na = self.n_actions;
        let mut transition = vec![0.0; n * na * n];
        let mut reward = vec![0.0; n * na];
        for new_s in 0..n {
            let old_s = perm[new_s];
            for a in 0..na {
                reward[new_s * na + a] = self.reward(old_s, a);
                for old_next in 0..n {
                    transition[(new_s * na + a) * n + inverse[old_next]] =
                        self.p(old_s, a, old_next);
                }
            }
        }
        let initial = perm.iter().map(|&old| self.initial_dist[old]).collect();
        Self::new(n, na, transition, reward, self.gamma, initial)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("MDP serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, MdpError> {
        serde_json::from_str(text).map_err(|e| MdpError::Document(e.to_string()))
    }

    fn check_policy(&self, policy: &TabularPolicy) -> Result<(), MdpError> {
        if policy.n_states != self.n_states || policy.n_actions != self.n_actions {
            return Err(MdpError::Dimension(format!(
                "policy is {}x{}, MDP is {}x{}",
                policy.n_states, policy.n_actions, self.n_states, self.n_actions
            )));
        }
        Ok(())
    }

    /// State-to-state kernel `P_π(s, s') = Σ_a π(a|s) P(s'|s,a)`.
    pub fn policy_kernel(&self, policy: &TabularPolicy) -> Result<DMatrix<f64>, MdpError> {
        self.check_policy(policy)?;
        let n = self.n_states;
        let mut kernel = DMatrix::zeros(n, n);
        for s in 0..n {
            for a in 0..self.n_actions {
                let pa = policy.prob(s, a);
                if pa == 0.0 {
                    continue;
                }
                for (next, &p) in self.transition_row(s, a).iter().enumerate() {
                    kernel[(s, next)] += pa * p;
                }
            }
        }
        Ok(kernel)
    }

    /// Expected one-step reward `R_π(s) = Σ_a π(a|s) R(s,a)`.
    pub fn policy_reward(&self, policy: &TabularPolicy) -> Result<DVector<f64>, MdpError> {
        self.check_policy(policy)?;
        Ok(DVector::from_fn(self.n_states, |s, _| {
            (0..self.n_actions)
                .map(|a| policy.prob(s, a) * self.reward(s, a))
                .sum()
        }))
    }
}

/// On-disk form of [`TabularMdp`]. Tensors are nested row-major arrays;
/// loading goes back through [`TabularMdp::new`] so every invariant is
/// rechecked.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MdpDocument {
    format: String,
    n_states: usize,
    n_actions: usize,
    gamma: f64,
    initial_dist: Vec<f64>,
    /// `reward[s][a]`
    reward: Vec<Vec<f64>>,
    /// `transition[s][a][s']`
    transition: Vec<Vec<Vec<f64>>>,
}

const MDP_FORMAT: &str = "riskgrad-mdp/1";

impl From<TabularMdp> for MdpDocument {
    fn from(m: TabularMdp) -> Self {
        let reward = (0..m.n_states)
            .map(|s| (0..m.n_actions).map(|a| m.reward(s, a)).collect())
            .collect();
        let transition = (0..m.n_states)
            .map(|s| {
                (0..m.n_actions)
                    .map(|a| m.transition_row(s, a).to_vec())
                    .collect()
            })
            .collect();
        MdpDocument {
            format: MDP_FORMAT.to_string(),
            n_states: m.n_states,
            n_actions: m.n_actions,
            gamma: m.gamma,
            initial_dist: m.initial_dist,
            reward,
            transition,
        }
    }
}

impl TryFrom<MdpDocument> for TabularMdp {
    type Error = MdpError;

    fn try_from(doc: MdpDocument) -> Result<Self, Self::Error> {
        if doc.format != MDP_FORMAT {
            return Err(MdpError::Document(format!(
                "unsupported format tag {:?}",
                doc.format
            )));
        }
        let (ns, na) = (doc.n_states, doc.n_actions);
        if doc.reward.len() != ns || doc.reward.iter().any(|r| r.len() != na) {
            return Err(MdpError::Dimension("reward tensor shape".into()));
        }
        if doc.transition.len() != ns
            || doc
                .transition
                .iter()
                .any(|rows| rows.len() != na || rows.iter().any(|r| r.len() != ns))
        {
            return Err(MdpError::Dimension("transition tensor shape".into()));
        }
        let reward = doc.reward.into_iter().flatten().collect();
        let transition = doc.transition.into_iter().flatten().flatten().collect();
        TabularMdp::new(ns, na, transition, reward, doc.gamma, doc.initial_dist)
    }
}

/// Stationary stochastic policy `π(a|s)`, row-major `(s, a)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabularPolicy {
    n_states: usize,
    n_actions: usize,
    probs: Vec<f64>,
}

impl TabularPolicy {
    pub fn new(n_states: usize, n_actions: usize, probs: Vec<f64>) -> Result<Self, MdpError> {
        if probs.len() != n_states * n_actions || n_states == 0 || n_actions == 0 {
            return Err(MdpError::Dimension(format!(
                "policy has {} entries, expected {n_states}x{n_actions}",
                probs.len()
            )));
        }
        for s in 0..n_states {
            check_distribution(&probs[s * n_actions..(s + 1) * n_actions])
                .map_err(|reason| MdpError::PolicyRow { state: s, reason })?;
        }
        Ok(Self {
            n_states,
            n_actions,
            probs,
        })
    }

    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        Self {
            n_states,
            n_actions,
            probs: vec![1.0 / n_actions as f64; n_states * n_actions],
        }
    }

    pub fn deterministic(n_actions: usize, actions: &[usize]) -> Result<Self, MdpError> {
        let mut probs = vec![0.0; actions.len() * n_actions];
        for (s, &a) in actions.iter().enumerate() {
            if a >= n_actions {
                return Err(MdpError::Dimension(format!("action {a} out of range")));
            }
            probs[s * n_actions + a] = 1.0;
        }
        Self::new(actions.len(), n_actions, probs)
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    #[inline]
    pub fn prob(&self, s: usize, a: usize) -> f64 {
        self.probs[s * self.n_actions + a]
    }

    #[inline]
    pub fn row(&self, s: usize) -> &[f64] {
        &self.probs[s * self.n_actions..(s + 1) * self.n_actions]
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Policy seen through a state map: `π̂(·|s) = π(·|map(s))`.
    pub fn compose(&self, map: &[usize]) -> Result<Self, MdpError> {
        if map.len() != self.n_states || map.iter().any(|&m| m >= self.n_states) {
            return Err(MdpError::Dimension("state map".into()));
        }
        let probs = map.iter().flat_map(|&m| self.row(m).iter().copied()).collect();
        Ok(Self {
            n_states: self.n_states,
            n_actions: self.n_actions,
            probs,
        })
    }

    /// Highest-probability action per state, lowest index on ties.
    pub fn greedy(&self) -> Self {
        let actions: Vec<usize> = (0..self.n_states)
            .map(|s| {
                let row = self.row(s);
                let mut best = 0;
                for a in 1..self.n_actions {
                    if row[a] > row[best] {
                        best = a;
                    }
                }
                best
            })
            .collect();
        Self::deterministic(self.n_actions, &actions).expect("valid greedy policy")
    }
}

/// Exact policy evaluation result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueProfile {
    /// `V_{M,π}(s)`
    pub values: Vec<f64>,
    /// `J_M(π) = Σ_s μ(s) V(s)`
    pub expected_return: f64,
    /// Value function range `max V − min V`.
    pub vfr: f64,
    /// Midpoint `(max V + min V) / 2`.
    pub mid_value: f64,
}

impl ValueProfile {
    fn from_values(values: Vec<f64>, initial: &[f64]) -> Self {
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let expected_return = values.iter().zip(initial).map(|(v, m)| v * m).sum();
        Self {
            values,
            expected_return,
            vfr: max - min,
            mid_value: 0.5 * (max + min),
        }
    }
}

fn solve(a: DMatrix<f64>, b: DVector<f64>) -> Result<DVector<f64>, MdpError> {
    a.lu().solve(&b).ok_or(MdpError::Singular)
}

/// Solve the Bellman equation `(I − γ P_π) V = R_π` directly.
pub fn value_function(mdp: &TabularMdp, policy: &TabularPolicy) -> Result<ValueProfile, MdpError> {
    let kernel = mdp.policy_kernel(policy)?;
    let reward = mdp.policy_reward(policy)?;
    let n = mdp.n_states();
    let system = DMatrix::identity(n, n) - kernel * mdp.gamma();
    let v = solve(system, reward)?;
    Ok(ValueProfile::from_values(v.iter().copied().collect(), mdp.initial_dist()))
}

/// Largest absolute Bellman residual of `values` under `policy`.
pub fn bellman_residual(
    mdp: &TabularMdp,
    policy: &TabularPolicy,
    values: &[f64],
) -> Result<f64, MdpError> {
    let kernel = mdp.policy_kernel(policy)?;
    let reward = mdp.policy_reward(policy)?;
    let v = DVector::from_column_slice(values);
    let backup = reward + kernel * &v * mdp.gamma();
    Ok((backup - v).amax())
}

/// Discounted future state distribution `d(s) = (1−γ) Σ_t γ^t P(s_t = s)`,
/// from `(I − γ P_πᵀ) d = (1−γ) μ`.
pub fn discounted_state_distribution(
    mdp: &TabularMdp,
    policy: &TabularPolicy,
) -> Result<Vec<f64>, MdpError> {
    let kernel = mdp.policy_kernel(policy)?;
    let n = mdp.n_states();
    let system = DMatrix::identity(n, n) - kernel.transpose() * mdp.gamma();
    let rhs = DVector::from_column_slice(mdp.initial_dist()) * (1.0 - mdp.gamma());
    Ok(solve(system, rhs)?.iter().copied().collect())
}

/// Expected discounted return over the first `horizon` steps, by backward
/// recursion `V_t = R_π + γ P_π V_{t+1}`, `V_horizon = 0`.
pub fn truncated_expected_return(
    mdp: &TabularMdp,
    policy: &TabularPolicy,
    horizon: usize,
) -> Result<f64, MdpError> {
    let kernel = mdp.policy_kernel(policy)?;
    let reward = mdp.policy_reward(policy)?;
    let mut v = DVector::zeros(mdp.n_states());
    for _ in 0..horizon {
        v = &reward + &kernel * &v * mdp.gamma();
    }
    Ok(v.iter().zip(mdp.initial_dist()).map(|(v, m)| v * m).sum())
}

/// `Σ_t γ^t r_t` with `t` starting at zero.
pub fn trajectory_return(rewards: &[f64], gamma: f64) -> f64 {
    let mut total = 0.0;
    let mut discount = 1.0;
    for &r in rewards {
        total += discount * r;
        discount *= gamma;
    }
    total
}

/// A trajectory together with its probability under `(μ, π, P)`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedTrajectory {
    pub states: Vec<usize>,
    pub actions: Vec<usize>,
    pub rewards: Vec<f64>,
    pub probability: f64,
    pub discounted_return: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnumerationLimits {
    /// Branches whose probability is at or below this are dropped.
    pub prob_floor: f64,
    pub node_budget: u64,
}

impl Default for EnumerationLimits {
    fn default() -> Self {
        Self {
            prob_floor: DEFAULT_PROB_FLOOR,
            node_budget: DEFAULT_NODE_BUDGET,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Enumeration {
    pub trajectories: Vec<WeightedTrajectory>,
    /// Probability mass of pruned branches.
    pub dropped_mass: f64,
    pub nodes: u64,
}

/// Return distribution of all length-`horizon` trajectories, without the
/// state/action sequences.
#[derive(Debug, Clone)]
pub struct ReturnDistribution {
    pub returns: Vec<f64>,
    pub probabilities: Vec<f64>,
    pub dropped_mass: f64,
    pub nodes: u64,
}

impl ReturnDistribution {
    pub fn mean(&self) -> f64 {
        self.returns
            .iter()
            .zip(&self.probabilities)
            .map(|(r, p)| r * p)
            .sum()
    }
}

struct Walker<'a, F> {
    mdp: &'a TabularMdp,
    policy: &'a TabularPolicy,
    horizon: usize,
    limits: EnumerationLimits,
    nodes: u64,
    dropped: f64,
    states: Vec<usize>,
    actions: Vec<usize>,
    rewards: Vec<f64>,
    visit: F,
}

impl<F> Walker<'_, F>
where
    F: FnMut(&[usize], &[usize], &[f64], f64, f64),
{
    fn descend(&mut self, s: usize, prob: f64, ret: f64, discount: f64) -> Result<(), MdpError> {
        let depth = self.states.len();
        self.states.push(s);
        for a in 0..self.mdp.n_actions() {
            let pa = self.policy.prob(s, a);
            if pa == 0.0 {
                continue;
            }
            self.nodes += 1;
            if self.nodes > self.limits.node_budget {
                return Err(MdpError::BudgetExceeded {
                    budget: self.limits.node_budget,
                });
            }
            let branch = prob * pa;
            if branch <= self.limits.prob_floor {
                self.dropped += branch;
                continue;
            }
            let r = self.mdp.reward(s, a);
            let ret_next = ret + discount * r;
            self.actions.push(a);
            self.rewards.push(r);
            if depth + 1 == self.horizon {
                (self.visit)(&self.states, &self.actions, &self.rewards, branch, ret_next);
            } else {
                for next in 0..self.mdp.n_states() {
                    let pt = self.mdp.p(s, a, next);
                    if pt == 0.0 {
                        continue;
                    }
                    let child = branch * pt;
                    if child <= self.limits.prob_floor {
                        self.dropped += child;
                        continue;
                    }
                    self.descend(next, child, ret_next, discount * self.mdp.gamma())?;
                }
            }
            self.actions.pop();
            self.rewards.pop();
        }
        self.states.pop();
        Ok(())
    }
}

fn walk<F>(
    mdp: &TabularMdp,
    policy: &TabularPolicy,
    horizon: usize,
    limits: EnumerationLimits,
    visit: F,
) -> Result<(f64, u64), MdpError>
where
    F: FnMut(&[usize], &[usize], &[f64], f64, f64),
{
    mdp.check_policy(policy)?;
    if horizon == 0 {
        return Err(MdpError::Enumeration("horizon must be at least 1".into()));
    }
    if !(limits.prob_floor >= 0.0) {
        return Err(MdpError::Enumeration("probability floor must be nonnegative".into()));
    }
    let mut walker = Walker {
        mdp,
        policy,
        horizon,
        limits,
        nodes: 0,
        dropped: 0.0,
        states: Vec::with_capacity(horizon),
        actions: Vec::with_capacity(horizon),
        rewards: Vec::with_capacity(horizon),
        visit,
    };
    for s0 in 0..mdp.n_states() {
        let p0 = mdp.initial_dist()[s0];
        if p0 == 0.0 {
            continue;
        }
        if p0 <= limits.prob_floor {
            walker.dropped += p0;
            continue;
        }
        walker.descend(s0, p0, 0.0, 1.0)?;
    }
    Ok((walker.dropped, walker.nodes))
}

/// Depth-first enumeration of every length-`horizon` trajectory with
/// probability above `prob_floor`, using the default node budget.
pub fn enumerate_trajectories(
    mdp: &TabularMdp,
    policy: &TabularPolicy,
    horizon: usize,
    prob_floor: f64,
) -> Result<Enumeration, MdpError> {
    enumerate_trajectories_with(
        mdp,
        policy,
        horizon,
        EnumerationLimits {
            prob_floor,
            ..Default::default()
        },
    )
}

pub fn enumerate_trajectories_with(
    mdp: &TabularMdp,
    policy: &TabularPolicy,
    horizon: usize,
    limits: EnumerationLimits,
) -> Result<Enumeration, MdpError> {
    let mut trajectories = Vec::new();
    let (dropped_mass, nodes) = walk(mdp, policy, horizon, limits, |s, a, r, p, ret| {
        trajectories.push(WeightedTrajectory {
            states: s.to_vec(),
            actions: a.to_vec(),
            rewards: r.to_vec(),
            probability: p,
            discounted_return: ret,
        })
    })?;
    Ok(Enumeration {
        trajectories,
        dropped_mass,
        nodes,
    })
}

/// Like [`enumerate_trajectories_with`] but keeps only `(return, probability)`.
pub fn enumerate_returns(
    mdp: &TabularMdp,
    policy: &TabularPolicy,
    horizon: usize,
    limits: EnumerationLimits,
) -> Result<ReturnDistribution, MdpError> {
    let mut returns = Vec::new();
    let mut probabilities = Vec::new();
    let (dropped_mass, nodes) = walk(mdp, policy, horizon, limits, |_, _, _, p, ret| {
        returns.push(ret);
        probabilities.push(p);
    })?;
    Ok(ReturnDistribution {
        returns,
        probabilities,
        dropped_mass,
        nodes,
    })
}
