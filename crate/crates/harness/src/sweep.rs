//! Robustness sweeps: trained policies evaluated across a grid of mass
//! scales, observation-noise levels or FGSM budgets.

use std::path::{Path, PathBuf};

use riskgrad_core::algos::{evaluate, Checkpoint, CppoState, EvalSettings};
use riskgrad_core::envs::{EnvSpec, ObsDisturbance};
use riskgrad_core::par;
use riskgrad_core::risk::worst_fraction_mean;

use crate::config::{Axis, PolicySet, RunConfig, SweepConfig};
use crate::csvio::{self, SweepRow};
use crate::stamp::Stamp;
use crate::HarnessError;

/// A trained policy under a label, e.g. one seed of a CPPO run.
#[derive(Debug, Clone)]
pub struct LabeledPolicy {
    pub label: String,
    pub state: CppoState,
}

/// Errors unless the networks accept the environment's observations and
/// emit its kind of action.
pub fn check_fit(state: &CppoState, env: &EnvSpec, path: &Path) -> Result<(), HarnessError> {
    let mismatch = |detail: String| HarnessError::Mismatch {
        path: path.to_path_buf(),
        detail,
    };
    if state.policy.obs_dim() != env.obs_dim() || state.value.input_dim() != env.obs_dim() {
        return Err(mismatch(format!(
            "policy observes {} dims, {} emits {}",
            state.policy.obs_dim(),
            env.kind.name(),
            env.obs_dim()
        )));
    }
    if state.policy.head != env.action_space().head() {
        return Err(mismatch(format!(
            "policy head {:?}, environment needs {:?}",
            state.policy.head,
            env.action_space().head()
        )));
    }
    Ok(())
}

/// Loads `seed-*/<checkpoint>` of a run directory, ordered by seed.
pub fn load_policy_set(set: &PolicySet, env: &EnvSpec) -> Result<Vec<LabeledPolicy>, HarnessError> {
    let entries = std::fs::read_dir(&set.run).map_err(|e| HarnessError::io(&set.run, e))?;
    let mut paths: Vec<(u64, PathBuf)> = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| HarnessError::io(&set.run, e))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if let Some(seed) = name.strip_prefix("seed-").and_then(|s| s.parse().ok()) {
            paths.push((seed, entry.path().join(set.checkpoint.file_name())));
        }
    }
    if paths.is_empty() {
        return Err(HarnessError::Config(format!("{} has no seed-* directories", set.run.display())));
    }
    paths.sort();
    paths
        .into_iter()
        .map(|(_, path)| {
            let state = Checkpoint::load(&path)?.state;
            check_fit(&state, env, &path)?;
            Ok(LabeledPolicy {
                label: set.label.clone(),
                state,
            })
        })
        .collect()
}

/// Environment and observation disturbance at one sweep point.
pub fn point_setting(axis: Axis, point: f64, env: &EnvSpec) -> (EnvSpec, ObsDisturbance) {
    match axis {
        Axis::Mass => (env.clone().with_mass_scale(point), ObsDisturbance::None),
        Axis::Sigma => (env.clone(), ObsDisturbance::Gaussian { sigma: point }),
        Axis::Epsilon => (env.clone(), ObsDisturbance::Fgsm { epsilon: point }),
    }
}

/// Evaluates one policy at one point. Episodes use the policy's seed, so
/// every point and every label share the same evaluation streams.
pub fn evaluate_point(
    policy: &LabeledPolicy,
    env: &EnvSpec,
    sweep: &SweepConfig,
    gamma: f64,
    point: f64,
) -> Result<SweepRow, HarnessError> {
    let (env, disturbance) = point_setting(sweep.axis, point, env);
    env.validate()?;
    let settings = EvalSettings {
        episodes: sweep.episodes,
        gamma,
        selection: sweep.selection,
        disturbance,
        fgsm_loss: sweep.fgsm_loss,
    };
    let returns = evaluate(&policy.state.source(&env), &settings, policy.state.seed)?.undiscounted;
    let n = returns.len() as f64;
    let mean = returns.iter().sum::<f64>() / n;
    let var = returns.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / n;
    Ok(SweepRow {
        label: policy.label.clone(),
        axis: sweep.axis.name().to_string(),
        point,
        seed: policy.state.seed,
        episodes: returns.len(),
        mean,
        std: var.sqrt(),
        worst10: worst_fraction_mean(&returns, 0.1).expect("episodes is positive"),
    })
}

/// One row per (policy, point), sorted by label, point and seed.
pub fn run_sweep(
    policies: &[LabeledPolicy],
    env: &EnvSpec,
    sweep: &SweepConfig,
    gamma: f64,
) -> Result<Vec<SweepRow>, HarnessError> {
    sweep.validate()?;
    let grid = sweep.resolved_grid();
    let jobs: Vec<(usize, f64)> = (0..policies.len())
        .flat_map(|p| grid.iter().map(move |&x| (p, x)))
        .collect();
    let mut rows = par::try_map_range(jobs.len(), |j| {
        let (p, x) = jobs[j];
        evaluate_point(&policies[p], env, sweep, gamma, x)
    })?;
    rows.sort_by(|a, b| {
        a.label
            .cmp(&b.label)
            .then(a.point.total_cmp(&b.point))
            .then(a.seed.cmp(&b.seed))
    });
    Ok(rows)
}

/// Loads every configured policy set, sweeps, and writes `<name>.csv`,
/// `<name>.svg`, the resolved config and the stamp into `out`.
pub fn run_configured(cfg: &RunConfig, out: &Path, name: &str) -> Result<Vec<SweepRow>, HarnessError> {
    cfg.validate()?;
    if cfg.sweep.policies.is_empty() {
        return Err(HarnessError::Config("sweep.policies is empty".into()));
    }
    let env = cfg.env.spec()?;
    let mut policies = Vec::new();
    for set in &cfg.sweep.policies {
        policies.extend(load_policy_set(set, &env)?);
    }
    let rows = run_sweep(&policies, &env, &cfg.sweep, cfg.train.gamma)?;
    crate::write_file(&out.join("config.resolved.toml"), &cfg.resolved_toml()?)?;
    crate::write_file(&out.join("stamp.json"), &Stamp::current().to_json())?;
    csvio::write(&out.join(format!("{name}.csv")), &rows)?;
    let title = format!("{} sweep on {}", cfg.sweep.axis.name(), env.kind.name());
    crate::write_file(&out.join(format!("{name}.svg")), &crate::plot::sweep_svg(&rows, &title))?;
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use riskgrad_core::algos::TrainConfig;
    use riskgrad_core::envs::EnvKind;

    fn policy(kind: EnvKind, seed: u64) -> (EnvSpec, LabeledPolicy) {
        let mut env = EnvSpec::new(kind);
        env.horizon = 30;
        let cfg = TrainConfig {
            policy_hidden: vec![8],
            value_hidden: vec![8],
            ..TrainConfig::default()
        };
        let state = CppoState::new(&env, &cfg, seed).unwrap();
        (
            env,
            LabeledPolicy {
                label: "p".into(),
                state,
            },
        )
    }

    fn sweep(axis: Axis, grid: Vec<f64>) -> SweepConfig {
        SweepConfig {
            axis,
            grid: Some(grid),
            episodes: 12,
            ..SweepConfig::default()
        }
    }

    #[test]
    fn zero_sigma_equals_plain_evaluation() {
        let (env, p) = policy(EnvKind::PendulumSwingup, 4);
        let noisy = run_sweep(&[p.clone()], &env, &sweep(Axis::Sigma, vec![0.0]), 0.95).unwrap();
        let plain = run_sweep(&[p], &env, &sweep(Axis::Mass, vec![1.0]), 0.95).unwrap();
        assert_eq!(noisy[0].mean, plain[0].mean);
        assert_eq!(noisy[0].worst10, plain[0].worst10);
    }

    #[test]
    fn rows_sorted_and_complete() {
        let (env, a) = policy(EnvKind::CartBalance, 1);
        let (_, mut b) = policy(EnvKind::CartBalance, 0);
        b.label = "a".into();
        let rows = run_sweep(&[a, b], &env, &sweep(Axis::Mass, vec![0.5, 1.0, 1.5]), 0.95).unwrap();
        assert_eq!(rows.len(), 6);
        assert_eq!(rows[0].label, "a");
        assert!(rows[..3].windows(2).all(|w| w[0].point < w[1].point));
        assert!(rows.iter().all(|r| r.worst10 <= r.mean));
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let (_, p) = policy(EnvKind::CartBalance, 0);
        let pendulum = EnvSpec::new(EnvKind::PendulumSwingup);
        assert!(matches!(
            check_fit(&p.state, &pendulum, Path::new("x")),
            Err(HarnessError::Mismatch { .. })
        ));
        let (chain_env, chain) = policy(EnvKind::ChainMdp, 0);
        assert!(check_fit(&chain.state, &chain_env, Path::new("x")).is_ok());
    }
}
