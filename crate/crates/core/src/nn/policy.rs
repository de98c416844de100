use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::graph::{Graph, Var};
use super::mlp::MlpShape;
use super::NnError;

pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 2.0;
/// Final policy layer gain; keeps the initial policy close to uniform.
pub const POLICY_OUTPUT_GAIN: f64 = 0.01;

fn half_log_two_pi() -> f64 {
    0.5 * (2.0 * std::f64::consts::PI).ln()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum HeadKind {
    Categorical { n_actions: usize },
    /// Diagonal Gaussian with a state-independent log-std vector.
    Gaussian { action_dim: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Action {
    Discrete(usize),
    Continuous(Vec<f64>),
}

/// MLP trunk plus action head. For Gaussian heads the log-std entries are
/// appended after the MLP parameters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyNet {
    pub mlp: MlpShape,
    pub head: HeadKind,
}

impl PolicyNet {
    pub fn new(obs_dim: usize, hidden: &[usize], head: HeadKind) -> Result<Self, NnError> {
        let out = match head {
            HeadKind::Categorical { n_actions } => n_actions,
            HeadKind::Gaussian { action_dim } => action_dim,
        };
        Ok(Self {
            mlp: MlpShape::with_hidden(obs_dim, hidden, out)?,
            head,
        })
    }

    pub fn obs_dim(&self) -> usize {
        self.mlp.input_dim()
    }

    fn n_log_std(&self) -> usize {
        match self.head {
            HeadKind::Categorical { .. } => 0,
            HeadKind::Gaussian { action_dim } => action_dim,
        }
    }

    pub fn n_params(&self) -> usize {
        self.mlp.n_params() + self.n_log_std()
    }

    pub fn init<R: Rng + ?Sized>(&self, rng: &mut R, init_log_std: f64) -> Vec<f64> {
        let mut p = self.mlp.init(rng, POLICY_OUTPUT_GAIN);
        p.extend(std::iter::repeat(init_log_std).take(self.n_log_std()));
        p
    }

    pub fn check(&self, params: &[f64], obs: &[f64]) -> Result<(), NnError> {
        if params.len() != self.n_params() {
            return Err(NnError::Dimension {
                expected: self.n_params(),
                got: params.len(),
            });
        }
        if obs.len() != self.obs_dim() {
            return Err(NnError::Dimension {
                expected: self.obs_dim(),
                got: obs.len(),
            });
        }
        if obs.iter().any(|x| !x.is_finite()) {
            return Err(NnError::NonFinite("observation".into()));
        }
        Ok(())
    }

    pub fn distribution(&self, params: &[f64], obs: &[f64]) -> ActionDist {
        let (net, log_std) = params.split_at(self.mlp.n_params());
        let out = self.mlp.eval(net, obs);
        match self.head {
            HeadKind::Categorical { .. } => ActionDist::Categorical {
                log_probs: log_softmax(&out),
            },
            HeadKind::Gaussian { .. } => ActionDist::Gaussian {
                mean: out,
                log_std: log_std.iter().map(|l| l.clamp(LOG_STD_MIN, LOG_STD_MAX)).collect(),
            },
        }
    }

    /// `log π(action | obs)` on a tape.
    pub fn log_prob_node(&self, g: &mut Graph, params: &[Var], obs: &[Var], action: &Action) -> Var {
        let (net, log_std) = params.split_at(self.mlp.n_params());
        let out = self.mlp.forward(g, net, obs);
        match (self.head, action) {
            (HeadKind::Categorical { .. }, Action::Discrete(a)) => {
                let m = out.iter().map(|&z| g.value(z)).fold(f64::NEG_INFINITY, f64::max);
                let shifted: Vec<Var> = out.iter().map(|&z| g.add_const(z, -m)).collect();
                let exps: Vec<Var> = shifted.iter().map(|&z| g.exp(z)).collect();
                let total = g.sum(&exps);
                let log_total = g.ln(total);
                g.sub(shifted[*a], log_total)
            }
            (HeadKind::Gaussian { .. }, Action::Continuous(a)) => {
                let terms: Vec<Var> = out
                    .iter()
                    .zip(log_std)
                    .zip(a)
                    .map(|((&mu, &ls), &ai)| {
                        let ls = g.clamp(ls, LOG_STD_MIN, LOG_STD_MAX);
                        let std = g.exp(ls);
                        let av = g.leaf(ai);
                        let diff = g.sub(av, mu);
                        let z = g.div(diff, std);
                        let z2 = g.square(z);
                        let quad = g.scale(z2, -0.5);
                        g.sub(quad, ls)
                    })
                    .collect();
                let total = g.sum(&terms);
                g.add_const(total, -(a.len() as f64) * half_log_two_pi())
            }
            _ => panic!("action kind does not match policy head"),
        }
    }
}

pub fn log_softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let shifted: Vec<f64> = z.iter().map(|&x| x + -m).collect();
    let total: f64 = shifted.iter().map(|x| x.exp()).sum();
    let log_total = total.ln();
    shifted.iter().map(|s| s - log_total).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub enum ActionDist {
    Categorical { log_probs: Vec<f64> },
    Gaussian { mean: Vec<f64>, log_std: Vec<f64> },
}

impl ActionDist {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Action {
        match self {
            ActionDist::Categorical { log_probs } => {
                let u: f64 = rng.gen();
                let mut cum = 0.0;
                for (a, lp) in log_probs.iter().enumerate() {
                    cum += lp.exp();
                    if u < cum {
                        return Action::Discrete(a);
                    }
                }
                Action::Discrete(log_probs.len() - 1)
            }
            ActionDist::Gaussian { mean, log_std } => Action::Continuous(
                mean.iter()
                    .zip(log_std)
                    .map(|(m, ls)| {
                        let z: f64 = rng.sample(StandardNormal);
                        m + ls.exp() * z
                    })
                    .collect(),
            ),
        }
    }

    /// Greedy action: argmax (first on ties) or the Gaussian mean.
    pub fn mode(&self) -> Action {
        match self {
            ActionDist::Categorical { log_probs } => {
                let mut best = 0;
                for (a, lp) in log_probs.iter().enumerate() {
                    if *lp > log_probs[best] {
                        best = a;
                    }
                }
                Action::Discrete(best)
            }
            ActionDist::Gaussian { mean, .. } => Action::Continuous(mean.clone()),
        }
    }

    pub fn log_prob(&self, action: &Action) -> f64 {
        match (self, action) {
            (ActionDist::Categorical { log_probs }, Action::Discrete(a)) => log_probs[*a],
            (ActionDist::Gaussian { mean, log_std }, Action::Continuous(a)) => {
                let total: f64 = mean
                    .iter()
                    .zip(log_std)
                    .zip(a)
                    .map(|((mu, ls), ai)| {
                        let z = (ai - mu) / ls.exp();
                        -0.5 * (z * z) - ls
                    })
                    .sum();
                total + -(a.len() as f64) * half_log_two_pi()
            }
            _ => panic!("action kind does not match distribution"),
        }
    }

    pub fn entropy(&self) -> f64 {
        match self {
            ActionDist::Categorical { log_probs } => {
                -log_probs.iter().map(|lp| lp.exp() * lp).sum::<f64>()
            }
            ActionDist::Gaussian { log_std, .. } => log_std
                .iter()
                .map(|ls| ls + 0.5 + half_log_two_pi())
                .sum(),
        }
    }
}

/// Scalar value network `V_φ`.
pub fn value_node(shape: &MlpShape, g: &mut Graph, params: &[Var], obs: &[Var]) -> Var {
    shape.forward(g, params, obs)[0]
}
