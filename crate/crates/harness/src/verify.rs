//! Exact verification suites over seeded random tabular instances.

use std::path::Path;

use rand::Rng;
use riskgrad_core::disturbance::{
    check_bound_dominance, check_lemma1, check_observation_theorem, check_transition_theorem, DisturbanceError,
    ObservationAdversary, TransitionDisturbance,
};
use riskgrad_core::instances::{disturbance_instance, enumerable_instance, random_mdp, InstanceRanges, MdpSampler};
use riskgrad_core::par;
use riskgrad_core::risk::{check_theorem3_levels, PolicySearch, RiskLevel};
use riskgrad_core::rng::{stream, Domain};
use serde::{Deserialize, Serialize};

use crate::config::{Tolerances, VerifyConfig};
use crate::csvio::{self, VerifyRow};
use crate::HarnessError;

/// Upper bound on trajectory-tree leaves for the tail suite.
pub const TAIL_MAX_LEAVES: f64 = 2e5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    /// Discounted state-distribution recursion.
    Recursion,
    /// Transition-disturbance identity and bound.
    Transition,
    /// Observation-disturbance identity and bound.
    Observation,
    /// VFR observation bound below the SA-MDP style bound.
    Dominance,
    /// Return-risk vs value-risk inequality.
    Tail,
    /// Constrained vs unconstrained optimum.
    Search,
}

impl Suite {
    pub const ALL: [Suite; 6] = [
        Suite::Recursion,
        Suite::Transition,
        Suite::Observation,
        Suite::Dominance,
        Suite::Tail,
        Suite::Search,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Recursion => "recursion",
            Suite::Transition => "transition",
            Suite::Observation => "observation",
            Suite::Dominance => "dominance",
            Suite::Tail => "tail",
            Suite::Search => "search",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteSummary {
    pub suite: Suite,
    pub instances: usize,
    pub checks: usize,
    pub max_residual: Option<f64>,
    pub min_slack: Option<f64>,
    pub failures: usize,
    /// Checks skipped because their precondition does not hold.
    pub flagged: usize,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub seed: u64,
    pub tolerances: Tolerances,
    pub suites: Vec<SuiteSummary>,
    pub pass: bool,
}

impl VerifyReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    pub fn suite(&self, suite: Suite) -> Option<&SuiteSummary> {
        self.suites.iter().find(|s| s.suite == suite)
    }
}

fn row(suite: Suite, instance: usize, detail: String, residual: Option<f64>, slack: Option<f64>, pass: bool) -> VerifyRow {
    VerifyRow {
        suite: suite.name().to_string(),
        instance: instance as u64,
        detail,
        residual,
        slack,
        pass,
    }
}

fn flagged(suite: Suite, instance: usize, detail: String) -> VerifyRow {
    row(suite, instance, format!("flagged: {detail}"), None, None, true)
}

fn disturbance_rows(suite: Suite, i: usize, cfg: &VerifyConfig) -> Result<Vec<VerifyRow>, HarnessError> {
    let tol = cfg.tolerances;
    let inst = disturbance_instance(cfg.seed, i as u64, &InstanceRanges::default());
    let detail = format!(
        "states={} actions={} gamma={:.4}",
        inst.mdp.n_states(),
        inst.mdp.n_actions(),
        inst.mdp.gamma()
    );
    let out = match suite {
        Suite::Recursion => {
            let disturbed = inst.mdp.with_transition(inst.perturbed_transition.clone()).map_err(DisturbanceError::from)?;
            let residual = check_lemma1(&inst.mdp, &inst.policy)?.max(check_lemma1(&disturbed, &inst.policy)?);
            row(suite, i, detail, Some(residual), None, residual <= tol.recursion)
        }
        Suite::Transition => {
            let dist = TransitionDisturbance::new(&inst.mdp, inst.perturbed_transition.clone())?;
            let r = check_transition_theorem(&inst.mdp, &inst.policy, &dist)?;
            let detail = format!("{detail} eps_p={:.6}", dist.eps_p());
            row(suite, i, detail, Some(r.identity_residual), Some(r.slack), r.holds(tol.identity, tol.bound))
        }
        Suite::Observation | Suite::Dominance => {
            let adv = ObservationAdversary::new(&inst.policy, inst.nu.clone())?;
            if let Some((s, a)) = adv.support_violation(&inst.policy) {
                return Ok(vec![flagged(suite, i, format!("policy support at state {s}, action {a}"))]);
            }
            let detail = format!("{detail} eps_pi={:.6}", adv.eps_pi());
            if suite == Suite::Observation {
                let r = check_observation_theorem(&inst.mdp, &inst.policy, &adv)?;
                row(suite, i, detail, Some(r.identity_residual), Some(r.slack), r.holds(tol.identity, tol.bound))
            } else {
                let (ours, samdp) = check_bound_dominance(&inst.mdp, &inst.policy, &adv)?;
                let slack = samdp - ours;
                row(suite, i, detail, None, Some(slack), slack >= -tol.bound)
            }
        }
        Suite::Tail | Suite::Search => unreachable!("not a disturbance suite"),
    };
    Ok(vec![out])
}

fn tail_rows(i: usize, cfg: &VerifyConfig) -> Result<Vec<VerifyRow>, HarnessError> {
    let (mdp, policy) = enumerable_instance(cfg.seed, i as u64, cfg.tail_horizon, TAIL_MAX_LEAVES);
    let levels = levels(&cfg.tail_levels)?;
    let reports = check_theorem3_levels(&mdp, &policy, &levels, cfg.tail_horizon)?;
    Ok(levels
        .iter()
        .zip(reports)
        .map(|(level, r)| {
            let slack = r.value_side + r.tolerance - r.return_side;
            let detail = format!("states={} alpha={}", mdp.n_states(), level.alpha());
            row(Suite::Tail, i, detail, None, Some(slack), r.holds())
        })
        .collect())
}

/// The β grid `−M + k·2M/(points−1)`.
pub fn beta_grid(return_bound: f64, points: usize) -> Vec<f64> {
    if points == 1 {
        return vec![0.0];
    }
    (0..points)
        .map(|k| -return_bound + 2.0 * return_bound * k as f64 / (points - 1) as f64)
        .collect()
}

fn search_rows(i: usize, cfg: &VerifyConfig) -> Result<Vec<VerifyRow>, HarnessError> {
    let mut rng = stream(cfg.seed, Domain::Instances, 3, i as u64);
    let gamma = rng.gen_range(0.5..=0.7);
    let mdp = random_mdp(&mut rng, &MdpSampler::new(3, 2, gamma));
    let search = PolicySearch::new(&mdp, cfg.search_horizon)?;
    let mut out = Vec::new();
    for level in levels(&cfg.search_levels)? {
        for beta in beta_grid(search.return_bound, cfg.beta_points) {
            let r = search.evaluate(level, beta);
            let detail = format!("alpha={} beta={beta:.6}", level.alpha());
            out.push(if r.feasible {
                let slack = r.j_constrained - (r.bound - r.tolerance);
                row(Suite::Search, i, detail, None, Some(slack), r.holds())
            } else {
                flagged(Suite::Search, i, format!("{detail} infeasible"))
            });
        }
    }
    Ok(out)
}

fn levels(alphas: &[f64]) -> Result<Vec<RiskLevel>, HarnessError> {
    alphas.iter().map(|&a| RiskLevel::new(a).map_err(HarnessError::from)).collect()
}

/// Runs one suite; rows come back in instance order.
pub fn run_suite(suite: Suite, cfg: &VerifyConfig) -> Result<Vec<VerifyRow>, HarnessError> {
    let count = match suite {
        Suite::Tail => cfg.tail_instances,
        Suite::Search => cfg.search_instances,
        _ => cfg.instances,
    };
    let per_instance = par::try_map_range(count, |i| match suite {
        Suite::Tail => tail_rows(i, cfg),
        Suite::Search => search_rows(i, cfg),
        _ => disturbance_rows(suite, i, cfg),
    })?;
    Ok(per_instance.into_iter().flatten().collect())
}

pub fn summarize(suite: Suite, rows: &[VerifyRow]) -> SuiteSummary {
    let fold = |it: &mut dyn Iterator<Item = f64>, pick: fn(f64, f64) -> f64| it.reduce(pick);
    let mut instances: Vec<u64> = rows.iter().map(|r| r.instance).collect();
    instances.dedup();
    let failures = rows.iter().filter(|r| !r.pass).count();
    SuiteSummary {
        suite,
        instances: instances.len(),
        checks: rows.len(),
        max_residual: fold(&mut rows.iter().filter_map(|r| r.residual), f64::max),
        min_slack: fold(&mut rows.iter().filter_map(|r| r.slack), f64::min),
        failures,
        flagged: rows.iter().filter(|r| r.detail.starts_with("flagged")).count(),
        pass: failures == 0,
    }
}

#[derive(Debug, Clone)]
pub struct VerifyOutcome {
    pub rows: Vec<VerifyRow>,
    pub report: VerifyReport,
}

pub fn run_verify(cfg: &VerifyConfig) -> Result<VerifyOutcome, HarnessError> {
    let mut rows = Vec::new();
    let mut suites = Vec::new();
    for suite in Suite::ALL {
        let r = run_suite(suite, cfg)?;
        suites.push(summarize(suite, &r));
        rows.extend(r);
    }
    let pass = suites.iter().all(|s| s.pass);
    Ok(VerifyOutcome {
        rows,
        report: VerifyReport {
            seed: cfg.seed,
            tolerances: cfg.tolerances,
            suites,
            pass,
        },
    })
}

/// Writes `verify.csv` and `verify.json` into `out`.
pub fn write_outcome(out: &Path, outcome: &VerifyOutcome) -> Result<(), HarnessError> {
    csvio::write(&out.join("verify.csv"), &outcome.rows)?;
    crate::write_file(&out.join("verify.json"), &outcome.report.to_json())
}
