//! Multi-seed training runs with per-update metric logs, checkpoints,
//! resumption and a summary table.
//!
//! Layout of a run directory:
//!
//! ```text
//! config.resolved.toml  stamp.json  summary.csv
//! seed-N/metrics.jsonl  seed-N/last.json  seed-N/best.json  seed-N/final.json
//! ```

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use riskgrad_core::algos::{
    evaluate, run_epoch, ActionSelection, Checkpoint, CppoState, EpochReport, EvalReturns, EvalSettings, TrainConfig,
};
use riskgrad_core::envs::{EnvSpec, FgsmLoss, ObsDisturbance};
use riskgrad_core::par;
use riskgrad_core::risk::worst_fraction_mean;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::csvio::{self, SummaryRow};
use crate::stamp::Stamp;
use crate::HarnessError;

/// One line of `metrics.jsonl`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    #[serde(flatten)]
    pub report: EpochReport,
    /// Greedy evaluation, present every `eval_every` updates.
    pub eval_mean: Option<f64>,
    pub eval_worst10: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct SeedResult {
    pub seed: u64,
    pub dir: PathBuf,
    pub last: EpochReport,
    pub final_eval: EvalReturns,
    pub best_eval_mean: f64,
    pub state: CppoState,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub seeds: Vec<SeedResult>,
    pub summary: Vec<SummaryRow>,
}

pub fn seed_dir(out: &Path, seed: u64) -> PathBuf {
    out.join(format!("seed-{seed}"))
}

/// Greedy, undisturbed evaluation on the common evaluation streams of `seed`.
pub fn greedy_eval(state: &CppoState, env: &EnvSpec, gamma: f64, episodes: usize) -> Result<EvalReturns, HarnessError> {
    let settings = EvalSettings {
        episodes,
        gamma,
        selection: ActionSelection::Greedy,
        disturbance: ObsDisturbance::None,
        fgsm_loss: FgsmLoss::Auto,
    };
    Ok(evaluate(&state.source(env), &settings, state.seed)?)
}

fn worst10(values: &[f64]) -> f64 {
    worst_fraction_mean(values, 0.1).expect("evaluation returns are nonempty")
}

fn read_metrics(path: &Path) -> Result<Vec<(String, MetricRecord)>, HarnessError> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    text.lines()
        .map(|line| {
            serde_json::from_str(line)
                .map(|r| (line.to_string(), r))
                .map_err(|e| HarnessError::Csv {
                    path: path.to_path_buf(),
                    detail: e.to_string(),
                })
        })
        .collect()
}

fn load_or_init(dir: &Path, env: &EnvSpec, train: &TrainConfig, seed: u64) -> Result<CppoState, HarnessError> {
    let last = dir.join("last.json");
    if !last.exists() {
        return Ok(CppoState::new(env, train, seed)?);
    }
    let ck = Checkpoint::load(&last)?;
    let mismatch = |detail: String| HarnessError::Mismatch {
        path: last.clone(),
        detail,
    };
    if ck.algo != train.algo || ck.state.seed != seed {
        return Err(mismatch(format!(
            "checkpoint is {} seed {}, config asks for {} seed {seed}",
            ck.algo.name(),
            ck.state.seed,
            train.algo.name()
        )));
    }
    let fresh = CppoState::new(env, train, seed)?;
    if ck.state.policy != fresh.policy || ck.state.value != fresh.value {
        return Err(mismatch("network shapes differ from the configured environment".into()));
    }
    Ok(ck.state)
}

/// Trains one seed in `dir`, resuming from `last.json` when present. Metric
/// lines past the checkpoint are discarded so a resumed run writes the same
/// bytes as an uninterrupted one.
pub fn train_seed(cfg: &RunConfig, env: &EnvSpec, seed: u64, dir: &Path) -> Result<SeedResult, HarnessError> {
    fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    let train = &cfg.train;
    let mut state = load_or_init(dir, env, train, seed)?;
    let metrics_path = dir.join("metrics.jsonl");
    let kept: Vec<(String, MetricRecord)> = read_metrics(&metrics_path)?
        .into_iter()
        .filter(|(_, r)| r.report.update <= state.updates)
        .collect();
    if kept.len() as u64 != state.updates {
        return Err(HarnessError::Mismatch {
            path: metrics_path,
            detail: format!("{} metric lines for {} checkpointed updates", kept.len(), state.updates),
        });
    }
    let mut best = kept
        .iter()
        .filter_map(|(_, r)| r.eval_mean)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut last = kept.last().map(|(_, r)| r.report);
    let mut text: String = kept.iter().map(|(line, _)| format!("{line}\n")).collect();
    crate::write_file(&metrics_path, &text)?;
    let mut log = fs::OpenOptions::new()
        .append(true)
        .open(&metrics_path)
        .map_err(|e| HarnessError::io(&metrics_path, e))?;

    while state.env_steps < cfg.total_steps {
        let (report, _) = run_epoch(&mut state, env, train)?;
        let mut record = MetricRecord {
            report,
            eval_mean: None,
            eval_worst10: None,
        };
        if state.updates % cfg.eval_every == 0 {
            let eval = greedy_eval(&state, env, train.gamma, cfg.eval_episodes)?;
            record.eval_mean = Some(eval.mean_undiscounted());
            record.eval_worst10 = Some(worst10(&eval.undiscounted));
            if eval.mean_undiscounted() > best {
                best = eval.mean_undiscounted();
                Checkpoint::new(train.algo, train.alpha, state.clone()).save(&dir.join("best.json"))?;
            }
        }
        text = serde_json::to_string(&record).expect("record serializes") + "\n";
        log.write_all(text.as_bytes()).map_err(|e| HarnessError::io(&metrics_path, e))?;
        Checkpoint::new(train.algo, train.alpha, state.clone()).save(&dir.join("last.json"))?;
        last = Some(report);
    }
    let last = last.ok_or_else(|| HarnessError::Config("total_steps allows no update".into()))?;
    let final_eval = greedy_eval(&state, env, train.gamma, cfg.eval_episodes)?;
    if final_eval.mean_undiscounted() > best || !dir.join("best.json").exists() {
        best = best.max(final_eval.mean_undiscounted());
        Checkpoint::new(train.algo, train.alpha, state.clone()).save(&dir.join("best.json"))?;
    }
    Checkpoint::new(train.algo, train.alpha, state.clone()).save(&dir.join("final.json"))?;
    Ok(SeedResult {
        seed,
        dir: dir.to_path_buf(),
        last,
        final_eval,
        best_eval_mean: best,
        state,
    })
}

fn summary_row(label: String, r: &SeedResult) -> SummaryRow {
    SummaryRow {
        label,
        updates: r.last.update as f64,
        env_steps: r.last.env_steps as f64,
        mean_return: r.last.mean_return,
        worst10_return: r.last.worst10_return,
        lower_tail_risk: r.last.diagnostics.lower_tail_risk,
        beta: r.last.diagnostics.beta,
        eval_mean: r.final_eval.mean_undiscounted(),
        best_eval_mean: r.best_eval_mean,
    }
}

fn columns(r: &SummaryRow) -> [f64; 8] {
    [
        r.updates,
        r.env_steps,
        r.mean_return,
        r.worst10_return,
        r.lower_tail_risk,
        r.beta,
        r.eval_mean,
        r.best_eval_mean,
    ]
}

fn from_columns(label: &str, c: [f64; 8]) -> SummaryRow {
    SummaryRow {
        label: label.to_string(),
        updates: c[0],
        env_steps: c[1],
        mean_return: c[2],
        worst10_return: c[3],
        lower_tail_risk: c[4],
        beta: c[5],
        eval_mean: c[6],
        best_eval_mean: c[7],
    }
}

/// Per-seed rows followed by `mean` and sample `std` rows.
pub fn summarize(results: &[SeedResult]) -> Vec<SummaryRow> {
    let mut rows: Vec<SummaryRow> = results
        .iter()
        .map(|r| summary_row(format!("seed-{}", r.seed), r))
        .collect();
    let n = rows.len() as f64;
    let mut mean = [0.0; 8];
    for r in &rows {
        for (m, x) in mean.iter_mut().zip(columns(r)) {
            *m += x / n;
        }
    }
    let mut std = [0.0; 8];
    if rows.len() > 1 {
        for r in &rows {
            for ((s, x), m) in std.iter_mut().zip(columns(r)).zip(mean) {
                *s += (x - m) * (x - m) / (n - 1.0);
            }
        }
    }
    rows.push(from_columns("mean", mean));
    rows.push(from_columns("std", std.map(f64::sqrt)));
    rows
}

/// Trains every configured seed into `out`.
pub fn run_train(cfg: &RunConfig, out: &Path) -> Result<TrainOutcome, HarnessError> {
    cfg.validate()?;
    let env = cfg.env.spec()?;
    crate::write_file(&out.join("config.resolved.toml"), &cfg.resolved_toml()?)?;
    crate::write_file(&out.join("stamp.json"), &Stamp::current().to_json())?;
    let mut seeds = cfg.seeds.clone();
    seeds.sort_unstable();
    let results = par::try_map_range(seeds.len(), |i| train_seed(cfg, &env, seeds[i], &seed_dir(out, seeds[i])))?;
    let summary = summarize(&results);
    csvio::write(&out.join("summary.csv"), &summary)?;
    Ok(TrainOutcome {
        seeds: results,
        summary,
    })
}
