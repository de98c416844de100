//! Versioned JSON checkpoints. Floats are written with round-trip
//! precision, so a reloaded state is bit-identical. The RNG position is
//! `(seed, updates)`: every stream the trainer draws from is keyed by it.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::trainer::{Algo, CppoState};
use super::AlgoError;

pub const CHECKPOINT_FORMAT: &str = "riskgrad-checkpoint/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format: String,
    pub algo: Algo,
    pub alpha: f64,
    pub state: CppoState,
}

impl Checkpoint {
    pub fn new(algo: Algo, alpha: f64, state: CppoState) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.to_string(),
            algo,
            alpha,
            state,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoint serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, AlgoError> {
        let ck: Checkpoint = serde_json::from_str(text).map_err(|e| AlgoError::Checkpoint(e.to_string()))?;
        if ck.format != CHECKPOINT_FORMAT {
            return Err(AlgoError::Checkpoint(format!("unsupported format {:?}", ck.format)));
        }
        let s = &ck.state;
        if s.theta.len() != s.policy.n_params() || s.phi.len() != s.value.n_params() {
            return Err(AlgoError::Checkpoint("parameter count does not match shapes".into()));
        }
        if s.adam_theta.m.len() != s.theta.len() || s.adam_phi.m.len() != s.phi.len() {
            return Err(AlgoError::Checkpoint("optimizer state does not match parameters".into()));
        }
        Ok(ck)
    }

    /// Writes through a temporary file so a crash never leaves a torn file.
    pub fn save(&self, path: &Path) -> Result<(), AlgoError> {
        let tmp = path.with_extension("json.tmp");
        let io = |e: std::io::Error| AlgoError::Checkpoint(format!("{}: {e}", path.display()));
        fs::write(&tmp, self.to_json()).map_err(io)?;
        fs::rename(&tmp, path).map_err(io)
    }

    pub fn load(path: &Path) -> Result<Self, AlgoError> {
        let text = fs::read_to_string(path).map_err(|e| AlgoError::Checkpoint(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algos::trainer::{run_epoch, TrainConfig};
    use crate::envs::{EnvKind, EnvSpec};

    #[test]
    fn round_trip_is_bit_exact_and_resumes_identically() {
        let mut env = EnvSpec::new(EnvKind::PendulumSwingup);
        env.horizon = 30;
        let cfg = TrainConfig {
            policy_hidden: vec![8],
            value_hidden: vec![8],
            trajectories_per_update: 3,
            update_epochs: 2,
            value_epochs: 2,
            minibatch_size: 32,
            ..TrainConfig::default()
        };
        let mut state = CppoState::new(&env, &cfg, 9).unwrap();
        run_epoch(&mut state, &env, &cfg).unwrap();
        let ck = Checkpoint::new(cfg.algo, cfg.alpha, state.clone());
        let back = Checkpoint::from_json(&ck.to_json()).unwrap();
        assert_eq!(back, ck);
        let mut resumed = back.state;
        let a = run_epoch(&mut state, &env, &cfg).unwrap().0;
        let b = run_epoch(&mut resumed, &env, &cfg).unwrap().0;
        assert_eq!(a, b);
        assert_eq!(state, resumed);
    }

    #[test]
    fn rejects_foreign_format() {
        let env = EnvSpec::new(EnvKind::CartBalance);
        let state = CppoState::new(&env, &TrainConfig::default(), 0).unwrap();
        let mut ck = Checkpoint::new(Algo::Ppo, 0.9, state);
        ck.format = "other/2".into();
        assert!(Checkpoint::from_json(&ck.to_json()).is_err());
    }
}
