use serde::{Deserialize, Serialize};

use super::gae;
use super::lagrangian::{grad_eta, grad_lambda, penalty_weights, update_beta};
use super::rollout::{collect_rollouts, shuffled_indices, RolloutBatch, RolloutSource};
use super::AlgoError;
use crate::envs::EnvSpec;
use crate::nn::{value_node, Adam, Graph, MlpShape, PolicyNet, Var};
use crate::par;
use crate::risk::{empirical_var, lower_tail_return_risk, RiskLevel, WeightedSamples};
use crate::rng::{stream, Domain};

/// Steps per gradient chunk. Chunk boundaries depend only on the minibatch,
/// so sums are reduced in the same order whatever the thread count.
const CHUNK: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algo {
    Vpg,
    Ppo,
    Cppo,
    /// CPPO without ratio clipping and with a single update epoch.
    PgCmdpLike,
}

impl Algo {
    pub fn name(self) -> &'static str {
        match self {
            Algo::Vpg => "vpg",
            Algo::Ppo => "ppo",
            Algo::Cppo => "cppo",
            Algo::PgCmdpLike => "pg-cmdp-like",
        }
    }

    pub fn constrained(self) -> bool {
        matches!(self, Algo::Cppo | Algo::PgCmdpLike)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub algo: Algo,
    /// Confidence level of the return constraint.
    pub alpha: f64,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub clip: bool,
    pub clip_eps: f64,
    pub update_epochs: usize,
    pub value_epochs: usize,
    pub minibatch_size: usize,
    pub trajectories_per_update: usize,
    pub lr_theta: f64,
    pub lr_phi: f64,
    pub lr_eta: f64,
    pub lr_lambda: f64,
    pub lambda_init: f64,
    pub lambda_max: f64,
    /// `K/N` for the β update; `None` means `min(1, 1.5·(1 − α))`.
    pub worst_fraction: Option<f64>,
    pub freeze_lambda: bool,
    pub normalize_advantages: bool,
    /// Subtract the batch-mean penalty weight; the expected gradient is unchanged.
    pub penalty_baseline: bool,
    pub policy_hidden: Vec<usize>,
    pub value_hidden: Vec<usize>,
    pub init_log_std: f64,
    /// Stop the policy epochs of an update before the first minibatch step
    /// whose approximate KL to the collecting policy exceeds `1.5·target_kl`.
    pub target_kl: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            algo: Algo::Cppo,
            alpha: 0.9,
            gamma: 0.95,
            gae_lambda: 0.95,
            clip: true,
            clip_eps: 0.2,
            update_epochs: 10,
            value_epochs: 10,
            minibatch_size: 256,
            trajectories_per_update: 20,
            lr_theta: 1e-3,
            lr_phi: 1e-3,
            lr_eta: 0.5,
            lr_lambda: 1e-3,
            lambda_init: 1.0,
            lambda_max: 100.0,
            worst_fraction: None,
            freeze_lambda: false,
            normalize_advantages: true,
            penalty_baseline: true,
            policy_hidden: vec![64, 64],
            value_hidden: vec![64, 64],
            init_log_std: -0.5,
            target_kl: Some(0.02),
        }
    }
}

impl TrainConfig {
    /// Defaults with the algorithm-specific settings of `algo`.
    pub fn preset(algo: Algo) -> Self {
        let mut cfg = Self {
            algo,
            ..Self::default()
        };
        match algo {
            Algo::Vpg => {
                cfg.clip = false;
                cfg.update_epochs = 1;
                cfg.lr_theta = 1e-2;
            }
            Algo::PgCmdpLike => {
                cfg.clip = false;
                cfg.update_epochs = 1;
            }
            Algo::Ppo | Algo::Cppo => {}
        }
        cfg
    }

    pub fn level(&self) -> Result<RiskLevel, AlgoError> {
        RiskLevel::new(self.alpha).map_err(|e| AlgoError::Config(e.to_string()))
    }

    pub fn resolved_worst_fraction(&self) -> f64 {
        self.worst_fraction
            .unwrap_or_else(|| (1.5 * (1.0 - self.alpha)).min(1.0))
    }

    pub fn validate(&self) -> Result<(), AlgoError> {
        let bad = |msg: String| Err(AlgoError::Config(msg));
        self.level()?;
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad(format!("gamma must lie in (0, 1), got {}", self.gamma));
        }
        if !(0.0..=1.0).contains(&self.gae_lambda) {
            return bad(format!("gae_lambda must lie in [0, 1], got {}", self.gae_lambda));
        }
        if self.clip && !(self.clip_eps > 0.0 && self.clip_eps < 1.0) {
            return bad(format!("clip_eps must lie in (0, 1), got {}", self.clip_eps));
        }
        if self.update_epochs == 0 || self.value_epochs == 0 || self.minibatch_size == 0 {
            return bad("epochs and minibatch size must be positive".into());
        }
        if self.trajectories_per_update < 2 {
            return bad("trajectories_per_update must be at least 2".into());
        }
        let wf = self.resolved_worst_fraction();
        if !(wf > 1.0 - self.alpha && wf <= 1.0) {
            return bad(format!("worst_fraction {wf} must lie in (1 - alpha, 1]"));
        }
        if !(self.lambda_init >= 0.0 && self.lambda_max >= self.lambda_init) {
            return bad("need 0 <= lambda_init <= lambda_max".into());
        }
        for (name, lr) in [
            ("lr_theta", self.lr_theta),
            ("lr_phi", self.lr_phi),
            ("lr_eta", self.lr_eta),
            ("lr_lambda", self.lr_lambda),
        ] {
            if !(lr >= 0.0 && lr.is_finite()) {
                return bad(format!("{name} must be nonnegative"));
            }
        }
        Ok(())
    }
}

/// Learnable state of every trainer: `(θ, φ)`, their optimizers, and the
/// scalar variables `(η, λ, β)` of the constrained problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CppoState {
    pub policy: PolicyNet,
    pub value: MlpShape,
    pub theta: Vec<f64>,
    pub phi: Vec<f64>,
    pub adam_theta: Adam,
    pub adam_phi: Adam,
    /// Set from the first batch.
    pub eta: Option<f64>,
    pub lam: f64,
    /// Threshold for the next update; set from the first batch.
    pub beta: Option<f64>,
    pub seed: u64,
    /// Completed updates; also the rollout stream index of the next batch.
    pub updates: u64,
    pub env_steps: u64,
}

impl CppoState {
    pub fn new(env: &EnvSpec, cfg: &TrainConfig, seed: u64) -> Result<Self, AlgoError> {
        cfg.validate()?;
        let policy = PolicyNet::new(env.obs_dim(), &cfg.policy_hidden, env.action_space().head())?;
        let value = MlpShape::with_hidden(env.obs_dim(), &cfg.value_hidden, 1)?;
        let theta = policy.init(&mut stream(seed, Domain::Init, 0, 0), cfg.init_log_std);
        let phi = value.init(&mut stream(seed, Domain::Init, 1, 0), 1.0);
        Ok(Self {
            adam_theta: Adam::new(theta.len(), cfg.lr_theta),
            adam_phi: Adam::new(phi.len(), cfg.lr_phi),
            policy,
            value,
            theta,
            phi,
            eta: None,
            lam: if cfg.algo.constrained() { cfg.lambda_init } else { 0.0 },
            beta: None,
            seed,
            updates: 0,
            env_steps: 0,
        })
    }

    pub fn source<'a>(&'a self, env: &'a EnvSpec) -> RolloutSource<'a> {
        RolloutSource {
            env,
            policy: &self.policy,
            theta: &self.theta,
            value: &self.value,
            phi: &self.phi,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UpdateDiagnostics {
    /// Mean per-step surrogate over the last policy epoch.
    pub surrogate: f64,
    pub clip_fraction: f64,
    /// Mean penalty weight `(λ/(1−α))(η − D_i)⁺`.
    pub penalty: f64,
    pub grad_eta: f64,
    pub grad_lambda: f64,
    /// `−CVaR_α(−D)` of the batch.
    pub lower_tail_risk: f64,
    /// Threshold the update was checked against.
    pub beta: f64,
    pub eta: f64,
    pub lam: f64,
    /// Mean squared value error over the last value epoch.
    pub value_loss: f64,
    /// Policy epochs completed.
    pub policy_epochs: usize,
    /// Whether the KL guard ended the policy epochs early.
    pub kl_stopped: bool,
}

impl UpdateDiagnostics {
    fn check(&self) -> Result<(), AlgoError> {
        let fields = [
            self.surrogate,
            self.clip_fraction,
            self.penalty,
            self.grad_eta,
            self.grad_lambda,
            self.lower_tail_risk,
            self.beta,
            self.eta,
            self.lam,
            self.value_loss,
        ];
        if fields.iter().all(|x| x.is_finite()) {
            Ok(())
        } else {
            Err(AlgoError::NonFinite(Box::new(*self)))
        }
    }
}

/// Per-step policy objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Objective {
    /// `log π · Â`
    ScoreFunction,
    /// `ratio · Â`
    Ratio,
    /// `min(ratio · Â, clip(ratio, 1 − ε, 1 + ε) · Â)`
    Clipped(f64),
}

struct ChunkSums {
    grad: Vec<f64>,
    stats: [f64; 3],
}

/// Sums the gradients of per-step terms over `steps` in fixed-size chunks.
fn chunked_gradient<F>(params: &[f64], steps: &[usize], term: F) -> ChunkSums
where
    F: Fn(&mut Graph, &[Var], usize) -> (Var, [f64; 3]) + Sync,
{
    let chunks: Vec<&[usize]> = steps.chunks(CHUNK).collect();
    let parts = par::map_slice(&chunks, |chunk| {
        let mut g = Graph::new();
        let pv = g.leaves(params);
        let mut terms = Vec::with_capacity(chunk.len());
        let mut stats = [0.0; 3];
        for &s in chunk.iter() {
            let (t, st) = term(&mut g, &pv, s);
            terms.push(t);
            for (a, b) in stats.iter_mut().zip(st) {
                *a += b;
            }
        }
        let total = g.sum(&terms);
        ChunkSums {
            grad: g.backward(total).collect(&pv),
            stats,
        }
    });
    let mut out = ChunkSums {
        grad: vec![0.0; params.len()],
        stats: [0.0; 3],
    };
    for part in parts {
        for (o, g) in out.grad.iter_mut().zip(&part.grad) {
            *o += g;
        }
        for (a, b) in out.stats.iter_mut().zip(part.stats) {
            *a += b;
        }
    }
    out
}

/// Policy-loss gradient on a set of steps with its diagnostics.
#[derive(Debug, Clone)]
pub struct PolicyGradient {
    pub grad: Vec<f64>,
    /// Mean per-step objective.
    pub surrogate: f64,
    pub clip_fraction: f64,
    /// Mean of `log π_old − log π` over the steps, before the step is taken.
    pub approx_kl: f64,
}

/// Gradient of the policy loss on `steps`:
///
/// `(1/M) Σ_t [ −objective_t + w_t · log π(a_t|s_t) ]`
///
/// where `w_t` is the per-step penalty weight of the step's trajectory.
pub fn policy_gradient(
    policy: &PolicyNet,
    theta: &[f64],
    batch: &RolloutBatch,
    advantages: &[f64],
    steps: &[usize],
    objective: Objective,
    penalty: Option<&[f64]>,
) -> PolicyGradient {
    let inv_m = 1.0 / steps.len() as f64;
    let sums = chunked_gradient(theta, steps, |g, pv, s| {
        let ov = g.leaves(batch.observation(s));
        let lp = policy.log_prob_node(g, pv, &ov, &batch.actions[s]);
        let adv = advantages[s];
        let (objective_node, clipped) = match objective {
            Objective::ScoreFunction => (g.scale(lp, adv), false),
            Objective::Ratio | Objective::Clipped(_) => {
                let diff = g.add_const(lp, -batch.logprobs[s]);
                let ratio = g.exp(diff);
                let unclipped = g.scale(ratio, adv);
                match objective {
                    Objective::Clipped(eps) => {
                        let c = g.clamp(ratio, 1.0 - eps, 1.0 + eps);
                        let clipped = g.scale(c, adv);
                        let r = g.value(ratio);
                        (g.min(unclipped, clipped), r < 1.0 - eps || r > 1.0 + eps)
                    }
                    _ => (unclipped, false),
                }
            }
        };
        let obj_value = g.value(objective_node);
        let mut term = g.scale(objective_node, -inv_m);
        if let Some(w) = penalty {
            let p = g.scale(lp, w[s] * inv_m);
            term = g.add(term, p);
        }
        let kl = batch.logprobs[s] - g.value(lp);
        (term, [obj_value, if clipped { 1.0 } else { 0.0 }, kl])
    });
    PolicyGradient {
        grad: sums.grad,
        surrogate: sums.stats[0] * inv_m,
        clip_fraction: sums.stats[1] * inv_m,
        approx_kl: sums.stats[2] * inv_m,
    }
}

/// Gradient of `(1/M) Σ_t (V_φ(s_t) − R̂_t)²` and the loss itself.
pub fn value_gradient(value: &MlpShape, phi: &[f64], batch: &RolloutBatch, steps: &[usize]) -> (Vec<f64>, f64) {
    let inv_m = 1.0 / steps.len() as f64;
    let sums = chunked_gradient(phi, steps, |g, pv, s| {
        let ov = g.leaves(batch.observation(s));
        let v = value_node(value, g, pv, &ov);
        let err = g.add_const(v, -batch.targets[s]);
        let sq = g.square(err);
        let loss = g.value(sq);
        (g.scale(sq, inv_m), [loss, 0.0, 0.0])
    });
    (sums.grad, sums.stats[0] * inv_m)
}

/// `Σ_i coef_i Σ_t ∇_θ log π(a_t|s_t)` over whole trajectories of `batch`.
pub fn score_function_gradient(policy: &PolicyNet, theta: &[f64], batch: &RolloutBatch, coef: &[f64]) -> Vec<f64> {
    let owners = batch.step_owners();
    let steps: Vec<usize> = (0..batch.n_steps()).collect();
    chunked_gradient(theta, &steps, |g, pv, s| {
        let ov = g.leaves(batch.observation(s));
        let lp = policy.log_prob_node(g, pv, &ov, &batch.actions[s]);
        (g.scale(lp, coef[owners[s]]), [0.0; 3])
    })
    .grad
}

fn minibatches(seed: u64, update: u64, stream_minor: u64, n: usize, size: usize) -> Vec<Vec<usize>> {
    let idx = shuffled_indices(&mut stream(seed, Domain::Minibatch, update, stream_minor), n);
    idx.chunks(size.min(n)).map(|c| c.to_vec()).collect()
}

fn update_value(state: &mut CppoState, batch: &RolloutBatch, cfg: &TrainConfig) -> Result<f64, AlgoError> {
    let mut last = 0.0;
    for epoch in 0..cfg.value_epochs {
        let mut total = 0.0;
        let mbs = minibatches(state.seed, state.updates, 2 * epoch as u64 + 1, batch.n_steps(), cfg.minibatch_size);
        for mb in &mbs {
            let (grad, loss) = value_gradient(&state.value, &state.phi, batch, mb);
            state.adam_phi.step(&mut state.phi, &grad)?;
            total += loss * mb.len() as f64;
        }
        last = total / batch.n_steps() as f64;
    }
    Ok(last)
}

/// One update of η, θ, λ, φ (in that order) followed by the β update.
/// VPG and PPO skip the constraint variables. Nothing is modified on error.
pub fn update(state: &mut CppoState, batch: &RolloutBatch, cfg: &TrainConfig) -> Result<UpdateDiagnostics, AlgoError> {
    if batch.collected_at != state.updates {
        return Err(AlgoError::StaleBatch {
            collected_at: batch.collected_at,
            current: state.updates,
        });
    }
    if batch.advantages.len() != batch.n_steps() {
        return Err(AlgoError::Config("advantages not computed".into()));
    }
    let level = cfg.level()?;
    let mut next = state.clone();
    let returns = batch.discounted_returns();
    let wf = cfg.resolved_worst_fraction();
    let constrained = cfg.algo.constrained();
    let samples = WeightedSamples::uniform(returns.clone()).map_err(|e| AlgoError::Config(e.to_string()))?;
    let risk = lower_tail_return_risk(&samples, level);
    let beta_now = match next.beta {
        Some(b) => b,
        None => update_beta(&returns, wf).map_err(|e| AlgoError::Config(e.to_string()))?,
    };

    // η
    let mut g_eta = 0.0;
    if next.eta.is_none() {
        let tail = RiskLevel::new(level.tail_mass()).map_err(|e| AlgoError::Config(e.to_string()))?;
        next.eta = Some(empirical_var(&samples, tail));
    }
    let mut eta = next.eta.expect("initialized above");
    if constrained {
        g_eta = grad_eta(&returns, eta, next.lam, level);
        eta -= cfg.lr_eta * g_eta;
        next.eta = Some(eta);
    }

    // θ
    let advantages = if cfg.normalize_advantages {
        gae::normalize(&batch.advantages)
    } else {
        batch.advantages.clone()
    };
    let weights = penalty_weights(&returns, eta, next.lam, level);
    let mean_weight = weights.iter().sum::<f64>() / weights.len() as f64;
    let penalty: Option<Vec<f64>> = (constrained && next.lam > 0.0).then(|| {
        let baseline = if cfg.penalty_baseline { mean_weight } else { 0.0 };
        // per-step weight so that the full-batch loss carries (1/N) Σ_i c_i Σ_t log π
        let scale = batch.n_steps() as f64 / batch.n_trajectories() as f64;
        batch
            .step_owners()
            .iter()
            .map(|&i| (weights[i] - baseline) * scale)
            .collect()
    });
    let objective = match cfg.algo {
        Algo::Vpg => Objective::ScoreFunction,
        _ if cfg.clip => Objective::Clipped(cfg.clip_eps),
        _ => Objective::Ratio,
    };
    let (mut surrogate, mut clip_fraction, mut epochs_run, mut kl_stopped) = (0.0, 0.0, 1, false);
    if cfg.algo == Algo::Vpg {
        let all: Vec<usize> = (0..batch.n_steps()).collect();
        let pg = policy_gradient(&next.policy, &next.theta, batch, &advantages, &all, objective, None);
        next.adam_theta.step(&mut next.theta, &pg.grad)?;
        surrogate = pg.surrogate;
    } else {
        'epochs: for epoch in 0..cfg.update_epochs {
            let (mut s_sum, mut c_sum, mut seen) = (0.0, 0.0, 0.0);
            let mbs = minibatches(next.seed, next.updates, 2 * epoch as u64, batch.n_steps(), cfg.minibatch_size);
            for mb in &mbs {
                let pg = policy_gradient(
                    &next.policy,
                    &next.theta,
                    batch,
                    &advantages,
                    mb,
                    objective,
                    penalty.as_deref(),
                );
                if cfg.target_kl.is_some_and(|t| pg.approx_kl > 1.5 * t) {
                    kl_stopped = true;
                    if seen > 0.0 {
                        surrogate = s_sum / seen;
                        clip_fraction = c_sum / seen;
                    }
                    break 'epochs;
                }
                next.adam_theta.step(&mut next.theta, &pg.grad)?;
                let m = mb.len() as f64;
                s_sum += pg.surrogate * m;
                c_sum += pg.clip_fraction * m;
                seen += m;
            }
            surrogate = s_sum / seen;
            clip_fraction = c_sum / seen;
            epochs_run = epoch + 1;
        }
    }

    // λ
    let mut g_lambda = 0.0;
    if constrained {
        g_lambda = grad_lambda(&returns, eta, level, beta_now);
        if !cfg.freeze_lambda {
            next.lam = (next.lam + cfg.lr_lambda * g_lambda).clamp(0.0, cfg.lambda_max);
        }
    }

    // φ
    let value_loss = update_value(&mut next, batch, cfg)?;

    // β for the next update
    next.beta = Some(update_beta(&returns, wf).map_err(|e| AlgoError::Config(e.to_string()))?);
    next.updates += 1;
    next.env_steps += batch.n_steps() as u64;

    let diag = UpdateDiagnostics {
        surrogate,
        clip_fraction,
        penalty: mean_weight,
        grad_eta: g_eta,
        grad_lambda: g_lambda,
        lower_tail_risk: risk,
        beta: beta_now,
        eta,
        lam: next.lam,
        value_loss,
        policy_epochs: epochs_run,
        kl_stopped,
    };
    diag.check()?;
    *state = next;
    Ok(diag)
}

/// CPPO update; the algorithm in `cfg` must be constrained.
pub fn cppo_update(state: &mut CppoState, batch: &RolloutBatch, cfg: &TrainConfig) -> Result<UpdateDiagnostics, AlgoError> {
    if !cfg.algo.constrained() {
        return Err(AlgoError::Config(format!("{} is not a constrained algorithm", cfg.algo.name())));
    }
    update(state, batch, cfg)
}

pub fn ppo_update(state: &mut CppoState, batch: &RolloutBatch, cfg: &TrainConfig) -> Result<UpdateDiagnostics, AlgoError> {
    let cfg = TrainConfig {
        algo: Algo::Ppo,
        ..cfg.clone()
    };
    update(state, batch, &cfg)
}

pub fn vpg_update(state: &mut CppoState, batch: &RolloutBatch, cfg: &TrainConfig) -> Result<UpdateDiagnostics, AlgoError> {
    let cfg = TrainConfig {
        algo: Algo::Vpg,
        ..cfg.clone()
    };
    update(state, batch, &cfg)
}

/// Batch statistics reported after each update.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochReport {
    pub update: u64,
    pub env_steps: u64,
    pub mean_return: f64,
    pub mean_discounted_return: f64,
    /// Mean of the worst 10% undiscounted returns.
    pub worst10_return: f64,
    /// Spread of per-episode returns, `max − min`.
    pub return_spread: f64,
    pub diagnostics: UpdateDiagnostics,
}

/// Collect a batch with the current parameters and update on it.
pub fn run_epoch(state: &mut CppoState, env: &EnvSpec, cfg: &TrainConfig) -> Result<(EpochReport, RolloutBatch), AlgoError> {
    let mut batch = collect_rollouts(
        &state.source(env),
        cfg.trajectories_per_update,
        cfg.gamma,
        state.seed,
        state.updates,
    )?;
    batch.compute_advantages(cfg.gamma, cfg.gae_lambda);
    let diagnostics = update(state, &batch, cfg)?;
    let undiscounted = batch.undiscounted_returns();
    let n = undiscounted.len() as f64;
    let max = undiscounted.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = undiscounted.iter().copied().fold(f64::INFINITY, f64::min);
    let report = EpochReport {
        update: state.updates,
        env_steps: state.env_steps,
        mean_return: undiscounted.iter().sum::<f64>() / n,
        mean_discounted_return: batch.discounted_returns().iter().sum::<f64>() / n,
        worst10_return: crate::risk::worst_fraction_mean(&undiscounted, 0.1)
            .map_err(|e| AlgoError::Config(e.to_string()))?,
        return_spread: max - min,
        diagnostics,
    };
    Ok((report, batch))
}
