//! Observation disturbances. They act on what the policy sees only; the
//! simulator state is never touched.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::EnvError;
use crate::nn::{value_node, Graph, HeadKind, MlpShape, PolicyNet};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "mode", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ObsDisturbance {
    #[default]
    None,
    /// `obs + σ·N(0, I)`
    Gaussian { sigma: f64 },
    /// `obs + ε·sign(∇ L_adv)`, a per-coordinate (∞-norm) step.
    Fgsm { epsilon: f64 },
}

impl ObsDisturbance {
    pub fn validate(&self) -> Result<(), EnvError> {
        match *self {
            ObsDisturbance::Gaussian { sigma: x } | ObsDisturbance::Fgsm { epsilon: x }
                if !(x >= 0.0 && x.is_finite()) =>
            {
                Err(EnvError::Spec(format!("disturbance magnitude must be nonnegative, got {x}")))
            }
            _ => Ok(()),
        }
    }
}

/// Loss the FGSM step ascends.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum FgsmLoss {
    /// Greedy NLL for categorical heads, value loss for Gaussian heads.
    #[default]
    Auto,
    /// Negative log-probability of the greedy action at the clean
    /// observation. For Gaussian heads its gradient vanishes at the clean
    /// observation, so the step is a no-op there.
    GreedyNll,
    /// Negative critic value `−V_φ(obs)`.
    Value,
}

/// What an FGSM attack may differentiate.
#[derive(Debug, Clone, Copy)]
pub struct AttackContext<'a> {
    pub policy: &'a PolicyNet,
    pub theta: &'a [f64],
    pub value: Option<(&'a MlpShape, &'a [f64])>,
    pub loss: FgsmLoss,
}

impl AttackContext<'_> {
    fn resolved_loss(&self) -> FgsmLoss {
        match (self.loss, self.policy.head) {
            (FgsmLoss::Auto, HeadKind::Categorical { .. }) => FgsmLoss::GreedyNll,
            (FgsmLoss::Auto, HeadKind::Gaussian { .. }) => FgsmLoss::Value,
            (loss, _) => loss,
        }
    }

    /// Gradient of the attack loss with respect to the observation.
    pub fn gradient(&self, obs: &[f64]) -> Result<Vec<f64>, EnvError> {
        let mut g = Graph::new();
        let ov = g.leaves(obs);
        let loss = match self.resolved_loss() {
            FgsmLoss::Value => {
                let (shape, phi) = self.value.ok_or(EnvError::MissingPolicy)?;
                let pv = g.leaves(phi);
                let v = value_node(shape, &mut g, &pv, &ov);
                g.neg(v)
            }
            _ => {
                let greedy = self.policy.distribution(self.theta, obs).mode();
                let pv = g.leaves(self.theta);
                let lp = self.policy.log_prob_node(&mut g, &pv, &ov, &greedy);
                g.neg(lp)
            }
        };
        Ok(g.backward(loss).collect(&ov))
    }
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

pub fn disturb_observation<R: Rng + ?Sized>(
    obs: &[f64],
    mode: ObsDisturbance,
    ctx: Option<&AttackContext<'_>>,
    rng: &mut R,
) -> Result<Vec<f64>, EnvError> {
    match mode {
        ObsDisturbance::None => Ok(obs.to_vec()),
        ObsDisturbance::Gaussian { sigma } if sigma == 0.0 => Ok(obs.to_vec()),
        ObsDisturbance::Gaussian { sigma } => Ok(obs
            .iter()
            .map(|x| {
                let z: f64 = rng.sample(StandardNormal);
                x + sigma * z
            })
            .collect()),
        ObsDisturbance::Fgsm { epsilon } => {
            let ctx = ctx.ok_or(EnvError::MissingPolicy)?;
            if epsilon == 0.0 {
                return Ok(obs.to_vec());
            }
            let grad = ctx.gradient(obs)?;
            Ok(obs.iter().zip(&grad).map(|(x, g)| x + epsilon * sign(*g)).collect())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{EnvKind, EnvSpec};
    use crate::nn::Action;
    use crate::rng::{stream, Domain};

    fn categorical() -> (PolicyNet, Vec<f64>) {
        let net = PolicyNet::new(3, &[8], HeadKind::Categorical { n_actions: 2 }).unwrap();
        let mut rng = stream(0, Domain::Init, 0, 0);
        let theta: Vec<f64> = (0..net.n_params()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        (net, theta)
    }

    #[test]
    fn zero_magnitudes_are_identity() {
        let (net, theta) = categorical();
        let ctx = AttackContext {
            policy: &net,
            theta: &theta,
            value: None,
            loss: FgsmLoss::Auto,
        };
        let obs = [0.1, -0.2, 0.3];
        let mut rng = stream(1, Domain::Observation, 0, 0);
        for mode in [
            ObsDisturbance::None,
            ObsDisturbance::Gaussian { sigma: 0.0 },
            ObsDisturbance::Fgsm { epsilon: 0.0 },
        ] {
            assert_eq!(disturb_observation(&obs, mode, Some(&ctx), &mut rng).unwrap(), obs.to_vec());
        }
    }

    #[test]
    fn fgsm_step_has_exact_inf_norm() {
        let (net, theta) = categorical();
        let ctx = AttackContext {
            policy: &net,
            theta: &theta,
            value: None,
            loss: FgsmLoss::GreedyNll,
        };
        let obs = [0.4, 0.1, -0.7];
        let eps = 0.03;
        let grad = ctx.gradient(&obs).unwrap();
        assert!(grad.iter().all(|g| *g != 0.0));
        let out = disturb_observation(
            &obs,
            ObsDisturbance::Fgsm { epsilon: eps },
            Some(&ctx),
            &mut stream(0, Domain::Observation, 0, 0),
        )
        .unwrap();
        let norm = out.iter().zip(&obs).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!((norm - eps).abs() < 1e-15);
        // the step lowers the greedy action's probability
        let greedy = net.distribution(&theta, &obs).mode();
        assert!(net.distribution(&theta, &out).log_prob(&greedy) < net.distribution(&theta, &obs).log_prob(&greedy));
    }

    #[test]
    fn fgsm_needs_policy() {
        let mut rng = stream(0, Domain::Observation, 0, 0);
        assert_eq!(
            disturb_observation(&[0.0], ObsDisturbance::Fgsm { epsilon: 0.1 }, None, &mut rng),
            Err(EnvError::MissingPolicy)
        );
    }

    #[test]
    fn gaussian_head_uses_value_loss() {
        let net = PolicyNet::new(3, &[4], HeadKind::Gaussian { action_dim: 1 }).unwrap();
        let theta = net.init(&mut stream(2, Domain::Init, 0, 0), 0.0);
        let vshape = MlpShape::with_hidden(3, &[4], 1).unwrap();
        let phi = vshape.init(&mut stream(2, Domain::Init, 1, 0), 1.0);
        let ctx = AttackContext {
            policy: &net,
            theta: &theta,
            value: Some((&vshape, &phi)),
            loss: FgsmLoss::Auto,
        };
        let obs = [0.2, 0.9, -0.1];
        let out = disturb_observation(&obs, ObsDisturbance::Fgsm { epsilon: 0.1 }, Some(&ctx), &mut stream(0, Domain::Observation, 0, 0)).unwrap();
        assert!(vshape.eval(&phi, &out)[0] < vshape.eval(&phi, &obs)[0]);
        let nll = AttackContext {
            loss: FgsmLoss::GreedyNll,
            ..ctx
        };
        assert!(nll.gradient(&obs).unwrap().iter().all(|g| g.abs() < 1e-12));
    }

    #[test]
    fn true_state_unaffected_by_observation_noise() {
        let spec = EnvSpec::new(EnvKind::PendulumSwingup);
        let actions: Vec<f64> = (0..50).map(|t| ((t as f64) * 0.37).sin()).collect();
        let run = |mode: ObsDisturbance| {
            let mut rng = stream(4, Domain::Rollout, 0, 0);
            let mut noise = stream(4, Domain::Observation, 0, 0);
            let mut s = spec.reset(&mut rng);
            let mut states = vec![s.true_state.clone()];
            for &u in &actions {
                let _seen = disturb_observation(&s.observation, mode, None, &mut noise).unwrap();
                s = spec.step(&s.true_state, &Action::Continuous(vec![u]), &mut rng).unwrap();
                states.push(s.true_state.clone());
            }
            states
        };
        assert_eq!(run(ObsDisturbance::None), run(ObsDisturbance::Gaussian { sigma: 0.4 }));
    }
}
