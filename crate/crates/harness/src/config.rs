//! Run configuration. Every field has a default, unknown keys are
//! rejected, and `key.path=value` overrides are applied to the parsed TOML
//! tree before it is typed.

use std::path::{Path, PathBuf};

use riskgrad_core::algos::{ActionSelection, Algo, TrainConfig};
use riskgrad_core::envs::{EnvKind, EnvSpec, FgsmLoss, Physics};
use serde::{Deserialize, Serialize};

use crate::HarnessError;

/// Environment section; unset physics fields take the kind's defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvConfig {
    pub kind: EnvKind,
    pub horizon: Option<usize>,
    pub mass_scale: Option<f64>,
    pub dt: Option<f64>,
    pub gravity: Option<f64>,
    pub damping: Option<f64>,
    pub reward_scale: Option<f64>,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            kind: EnvKind::PendulumSwingup,
            horizon: None,
            mass_scale: None,
            dt: None,
            gravity: None,
            damping: None,
            reward_scale: None,
        }
    }
}

impl EnvConfig {
    pub fn spec(&self) -> Result<EnvSpec, HarnessError> {
        let base = EnvSpec::new(self.kind);
        let spec = EnvSpec {
            kind: self.kind,
            horizon: self.horizon.unwrap_or(base.horizon),
            physics: Physics {
                mass_scale: self.mass_scale.unwrap_or(base.physics.mass_scale),
                dt: self.dt.unwrap_or(base.physics.dt),
                gravity: self.gravity.unwrap_or(base.physics.gravity),
                damping: self.damping.unwrap_or(base.physics.damping),
            },
            reward_scale: self.reward_scale.unwrap_or(base.reward_scale),
        };
        spec.validate()?;
        Ok(spec)
    }

    fn resolved(&self) -> Result<Self, HarnessError> {
        let s = self.spec()?;
        Ok(Self {
            kind: s.kind,
            horizon: Some(s.horizon),
            mass_scale: Some(s.physics.mass_scale),
            dt: Some(s.physics.dt),
            gravity: Some(s.physics.gravity),
            damping: Some(s.physics.damping),
            reward_scale: Some(s.reward_scale),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    /// Exact-identity residuals (value-difference identities).
    pub identity: f64,
    /// Slack allowed on inequality bounds.
    pub bound: f64,
    /// Discounted-state-distribution recursion residual.
    pub recursion: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            identity: 1e-8,
            bound: 1e-10,
            recursion: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifyConfig {
    pub seed: u64,
    /// Random instances for the disturbance suites.
    pub instances: usize,
    pub tail_instances: usize,
    pub tail_horizon: usize,
    pub tail_levels: Vec<f64>,
    pub search_instances: usize,
    pub search_horizon: usize,
    pub search_levels: Vec<f64>,
    pub beta_points: usize,
    pub tolerances: Tolerances,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            instances: 100,
            tail_instances: 50,
            tail_horizon: 12,
            tail_levels: vec![0.3, 0.7, 0.9],
            search_instances: 20,
            search_horizon: 6,
            search_levels: vec![0.3, 0.7, 0.9],
            beta_points: 11,
            tolerances: Tolerances::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Axis {
    /// Transition disturbance through the physical mass.
    #[default]
    Mass,
    /// Gaussian observation noise.
    Sigma,
    /// One-step FGSM observation attack.
    Epsilon,
}

impl Axis {
    pub fn name(self) -> &'static str {
        match self {
            Axis::Mass => "mass",
            Axis::Sigma => "sigma",
            Axis::Epsilon => "epsilon",
        }
    }

    pub fn default_grid(self) -> Vec<f64> {
        match self {
            Axis::Mass => vec![0.5, 0.7, 0.85, 1.0, 1.15, 1.3, 1.5],
            Axis::Sigma => vec![0.0, 0.05, 0.1, 0.2, 0.4],
            Axis::Epsilon => vec![0.0, 0.01, 0.03, 0.1],
        }
    }

    pub fn nominal(self) -> f64 {
        match self {
            Axis::Mass => 1.0,
            Axis::Sigma | Axis::Epsilon => 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum CheckpointKind {
    #[default]
    Final,
    Best,
}

impl CheckpointKind {
    pub fn file_name(self) -> &'static str {
        match self {
            CheckpointKind::Final => "final.json",
            CheckpointKind::Best => "best.json",
        }
    }
}

/// A labeled set of trained policies: the `seed-*` directories of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicySet {
    pub label: String,
    pub run: PathBuf,
    #[serde(default)]
    pub checkpoint: CheckpointKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub axis: Axis,
    /// `None` selects the axis default.
    pub grid: Option<Vec<f64>>,
    pub episodes: usize,
    pub selection: ActionSelection,
    pub fgsm_loss: FgsmLoss,
    pub policies: Vec<PolicySet>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            axis: Axis::Mass,
            grid: None,
            episodes: 50,
            selection: ActionSelection::Greedy,
            fgsm_loss: FgsmLoss::Auto,
            policies: Vec::new(),
        }
    }
}

impl SweepConfig {
    pub fn resolved_grid(&self) -> Vec<f64> {
        self.grid.clone().unwrap_or_else(|| self.axis.default_grid())
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let grid = self.resolved_grid();
        if grid.is_empty() {
            return Err(HarnessError::Config("sweep grid is empty".into()));
        }
        if grid.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(HarnessError::Config("sweep grid must be strictly increasing".into()));
        }
        if grid.iter().any(|x| !x.is_finite() || *x < 0.0) || (self.axis == Axis::Mass && grid[0] <= 0.0) {
            return Err(HarnessError::Config(format!("invalid {} grid {grid:?}", self.axis.name())));
        }
        if self.episodes < 10 {
            return Err(HarnessError::Config(format!("sweep needs at least 10 episodes, got {}", self.episodes)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub env: EnvConfig,
    pub train: TrainConfig,
    pub seeds: Vec<u64>,
    pub total_steps: u64,
    /// Greedy evaluation every this many updates (and after the last one).
    pub eval_every: u64,
    pub eval_episodes: usize,
    pub out: PathBuf,
    pub verify: VerifyConfig,
    pub sweep: SweepConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            env: EnvConfig::default(),
            train: TrainConfig::default(),
            seeds: vec![0, 1, 2, 3, 4],
            total_steps: 300_000,
            eval_every: 5,
            eval_episodes: 20,
            out: PathBuf::from("runs/default"),
            verify: VerifyConfig::default(),
            sweep: SweepConfig::default(),
        }
    }
}

impl RunConfig {
    /// Parses `text`, applies `key.path=value` overrides, then types it.
    pub fn from_toml_with_overrides(text: &str, overrides: &[String]) -> Result<Self, HarnessError> {
        let mut tree: toml::Table = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        for o in overrides {
            apply_override(&mut tree, o)?;
        }
        fill_train_preset(&mut tree)?;
        let cfg: RunConfig = toml::Value::Table(tree)
            .try_into()
            .map_err(|e: toml::de::Error| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self, HarnessError> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p).map_err(|e| HarnessError::io(p, e))?,
            None => String::new(),
        };
        Self::from_toml_with_overrides(&text, overrides)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        self.env.spec()?;
        self.train.validate()?;
        if self.seeds.is_empty() {
            return Err(HarnessError::Config("seeds must not be empty".into()));
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.seeds.len() {
            return Err(HarnessError::Config("seeds must be distinct".into()));
        }
        if self.total_steps == 0 || self.eval_every == 0 || self.eval_episodes == 0 {
            return Err(HarnessError::Config(
                "total_steps, eval_every and eval_episodes must be positive".into(),
            ));
        }
        self.sweep.validate()
    }

    /// The config with every optional field filled in, as TOML.
    pub fn resolved_toml(&self) -> Result<String, HarnessError> {
        let mut resolved = self.clone();
        resolved.env = self.env.resolved()?;
        resolved.sweep.grid = Some(self.sweep.resolved_grid());
        toml::to_string(&resolved).map_err(|e| HarnessError::Config(e.to_string()))
    }
}

/// Unset `train` keys take the preset of the selected algorithm rather
/// than the CPPO defaults.
fn fill_train_preset(tree: &mut toml::Table) -> Result<(), HarnessError> {
    let Some(toml::Value::Table(train)) = tree.get_mut("train") else {
        return Ok(());
    };
    let Some(algo) = train.get("algo").cloned() else {
        return Ok(());
    };
    let algo: Algo = algo.try_into().map_err(|e: toml::de::Error| HarnessError::Config(e.to_string()))?;
    let preset = toml::Table::try_from(TrainConfig::preset(algo)).map_err(|e| HarnessError::Config(e.to_string()))?;
    for (key, value) in preset {
        train.entry(key).or_insert(value);
    }
    Ok(())
}

fn parse_value(raw: &str) -> toml::Value {
    let wrapped = format!("v = {raw}");
    match toml::from_str::<toml::Table>(&wrapped) {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

/// Applies one `a.b.c=value` override. The value is read as a TOML literal
/// when it parses as one and as a bare string otherwise.
pub fn apply_override(tree: &mut toml::Table, item: &str) -> Result<(), HarnessError> {
    let (key, raw) = item
        .split_once('=')
        .ok_or_else(|| HarnessError::Config(format!("override `{item}` is not key=value")))?;
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(HarnessError::Config(format!("bad override key `{key}`")));
    }
    let mut table = tree;
    for part in &parts[..parts.len() - 1] {
        let entry = table
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| HarnessError::Config(format!("override `{key}` descends into a non-table")))?;
    }
    table.insert(parts[parts.len() - 1].to_string(), parse_value(raw.trim()));
    Ok(())
}
