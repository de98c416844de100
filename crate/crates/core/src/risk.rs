//! VaR and CVaR under the upper-tail convention, plus exact oracles that tie
//! trajectory-return risk to value risk.
//!
//! For a confidence level `α`:
//!
//! - `VaR_α(Z) = min { z : F(z) ≥ α }`
//! - `CVaR_α(Z) = E[Z | Z ≥ VaR_α(Z)]` (tail form, reporting only)
//! - `CVaR_α(Z) = min_η { η + E[(Z − η)⁺] / (1 − α) }` (Rockafellar–Uryasev)
//!
//! The RU form is canonical: it is what the constrained objective
//! differentiates. The lower-tail return risk `−CVaR_α(−D)` is the mean of
//! the worst `1 − α` probability mass of returns.
//!
//! One code path serves both Monte Carlo batches (uniform weights) and exact
//! trajectory enumerations (probability weights).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mdp::{
    enumerate_returns, truncated_expected_return, value_function, EnumerationLimits, MdpError,
    TabularMdp, TabularPolicy,
};

const WEIGHT_TOL: f64 = 1e-9;
const CDF_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RiskError {
    #[error("confidence level must lie in (0, 1), got {0}")]
    Level(f64),
    #[error("empty sample set")]
    Empty,
    #[error("invalid samples: {0}")]
    Samples(String),
    #[error(transparent)]
    Mdp(#[from] MdpError),
}

#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct RiskLevel(f64);

impl RiskLevel {
    pub fn new(alpha: f64) -> Result<Self, RiskError> {
        if alpha > 0.0 && alpha < 1.0 {
            Ok(Self(alpha))
        } else {
            Err(RiskError::Level(alpha))
        }
    }

    pub fn alpha(self) -> f64 {
        self.0
    }

    /// Probability mass of the tail, `1 − α`.
    pub fn tail_mass(self) -> f64 {
        1.0 - self.0
    }
}

impl TryFrom<f64> for RiskLevel {
    type Error = RiskError;
    fn try_from(a: f64) -> Result<Self, Self::Error> {
        Self::new(a)
    }
}

impl From<RiskLevel> for f64 {
    fn from(l: RiskLevel) -> f64 {
        l.0
    }
}

/// Finite distribution: values with nonnegative weights summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedSamples {
    values: Vec<f64>,
    weights: Vec<f64>,
}

impl WeightedSamples {
    pub fn uniform(values: Vec<f64>) -> Result<Self, RiskError> {
        if values.is_empty() {
            return Err(RiskError::Empty);
        }
        let w = 1.0 / values.len() as f64;
        let weights = vec![w; values.len()];
        Self::weighted(values, weights)
    }

    pub fn weighted(values: Vec<f64>, weights: Vec<f64>) -> Result<Self, RiskError> {
        if values.is_empty() {
            return Err(RiskError::Empty);
        }
        if values.len() != weights.len() {
            return Err(RiskError::Samples("values and weights differ in length".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(RiskError::Samples("non-finite value".into()));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(RiskError::Samples("negative or non-finite weight".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > WEIGHT_TOL {
            return Err(RiskError::Samples(format!("weights sum to {total}")));
        }
        Ok(Self { values, weights })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().zip(&self.weights).map(|(v, w)| v * w).sum()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            values: self.values.iter().map(|&v| f(v)).collect(),
            weights: self.weights.clone(),
        }
    }

    /// Indices sorted by value, ties broken by input order.
    fn sorted_order(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.values.len()).collect();
        idx.sort_by(|&i, &j| self.values[i].total_cmp(&self.values[j]).then(i.cmp(&j)));
        idx
    }
}

/// `min { z : P(Z ≤ z) ≥ α }`.
pub fn empirical_var(samples: &WeightedSamples, level: RiskLevel) -> f64 {
    quantile(samples, level.alpha())
}

fn quantile(samples: &WeightedSamples, alpha: f64) -> f64 {
    let order = samples.sorted_order();
    let mut cum = 0.0;
    for (k, &i) in order.iter().enumerate() {
        cum += samples.weights[i];
        // the CDF only steps at the last copy of a tied value
        let last_of_value = order
            .get(k + 1)
            .map_or(true, |&j| samples.values[j] != samples.values[i]);
        if last_of_value && cum >= alpha - CDF_TOL {
            return samples.values[i];
        }
    }
    samples.values[*order.last().expect("nonempty")]
}

/// `E[Z | Z ≥ VaR_α(Z)]`.
pub fn empirical_cvar_tail(samples: &WeightedSamples, level: RiskLevel) -> f64 {
    let var = empirical_var(samples, level);
    let (mut mass, mut acc) = (0.0, 0.0);
    for (v, w) in samples.values.iter().zip(&samples.weights) {
        if *v >= var {
            mass += w;
            acc += w * v;
        }
    }
    if mass > 0.0 {
        acc / mass
    } else {
        var
    }
}

/// RU objective `η + E[(Z − η)⁺] / (1 − α)`.
pub fn ru_objective(samples: &WeightedSamples, level: RiskLevel, eta: f64) -> f64 {
    let excess: f64 = samples
        .values
        .iter()
        .zip(&samples.weights)
        .filter(|(v, _)| **v > eta)
        .map(|(v, w)| w * (v - eta))
        .sum();
    eta + excess / level.tail_mass()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RuMinimum {
    pub value: f64,
    /// A minimizing `η`; the largest sample minimizer on ties.
    pub eta_star: f64,
}

/// Exact RU minimization.
///
/// The objective is piecewise linear in `η` with breakpoints at the sample
/// values, so its minimum is attained at one of them. Candidates are ranked
/// with suffix sums in O(n log n); the near-optimal ones are then
/// re-evaluated directly and the best is returned.
pub fn cvar_ru(samples: &WeightedSamples, level: RiskLevel) -> RuMinimum {
    let order = samples.sorted_order();
    let n = order.len();
    let tail = level.tail_mass();
    // distinct sorted values with their suffix sums of w and w·z strictly above
    let mut distinct: Vec<(f64, f64, f64)> = Vec::with_capacity(n);
    let (mut sw, mut swz) = (0.0, 0.0);
    let mut k = n;
    while k > 0 {
        let v = samples.values[order[k - 1]];
        distinct.push((v, sw, swz));
        while k > 0 && samples.values[order[k - 1]] == v {
            let i = order[k - 1];
            sw += samples.weights[i];
            swz += samples.weights[i] * samples.values[i];
            k -= 1;
        }
    }
    let approx: Vec<f64> = distinct
        .iter()
        .map(|&(eta, w_above, wz_above)| eta + (wz_above - eta * w_above) / tail)
        .collect();
    let best = approx.iter().copied().fold(f64::INFINITY, f64::min);
    let scale = best.abs().max(1.0);
    let mut result: Option<RuMinimum> = None;
    // `distinct` runs from the largest value down, so ties keep the largest η
    for (j, &(eta, _, _)) in distinct.iter().enumerate() {
        if approx[j] > best + 1e-9 * scale {
            continue;
        }
        let value = ru_objective(samples, level, eta);
        if result.map_or(true, |r| value < r.value) {
            result = Some(RuMinimum {
                value,
                eta_star: eta,
            });
        }
    }
    result.expect("at least one candidate")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailStatistic {
    pub var: f64,
    pub cvar_tail: f64,
    pub cvar_ru: f64,
    pub eta_star: f64,
}

pub fn tail_statistic(samples: &WeightedSamples, level: RiskLevel) -> TailStatistic {
    let ru = cvar_ru(samples, level);
    TailStatistic {
        var: empirical_var(samples, level),
        cvar_tail: empirical_cvar_tail(samples, level),
        cvar_ru: ru.value,
        eta_star: ru.eta_star,
    }
}

/// `−CVaR_α(−D)`: mean of the worst `1 − α` mass of returns.
pub fn lower_tail_return_risk(returns: &WeightedSamples, level: RiskLevel) -> f64 {
    -cvar_ru(&returns.map(|r| -r), level).value
}

/// Mean of the `ceil(fraction · n)` smallest values; `fraction` in (0, 1].
pub fn worst_fraction_mean(values: &[f64], fraction: f64) -> Result<f64, RiskError> {
    if values.is_empty() {
        return Err(RiskError::Empty);
    }
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(RiskError::Samples(format!("fraction {fraction} outside (0, 1]")));
    }
    let k = ((fraction * values.len() as f64).ceil() as usize).clamp(1, values.len());
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(sorted[..k].iter().sum::<f64>() / k as f64)
}

/// Both sides of the return-risk vs value-risk inequality.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Theorem3Report {
    /// `−CVaR_α(−D)` over the enumerated return distribution.
    pub return_side: f64,
    /// `−CVaR_α(−V(s₀))` with `s₀ ~ μ`.
    pub value_side: f64,
    /// `γ^H R_max / (1 − γ)`
    pub tolerance: f64,
}

impl Theorem3Report {
    pub fn holds(&self) -> bool {
        self.return_side <= self.value_side + self.tolerance
    }
}

fn exact_limits() -> EnumerationLimits {
    EnumerationLimits {
        prob_floor: 0.0,
        ..Default::default()
    }
}

fn truncation_tolerance(mdp: &TabularMdp, horizon: usize) -> f64 {
    mdp.gamma().powi(horizon as i32) * mdp.r_max() / (1.0 - mdp.gamma())
}

/// Checks `−CVaR_α(−D(π)) ≤ −CVaR_α(−V(s₀))` by exact enumeration of every
/// length-`horizon` trajectory.
pub fn check_theorem3(
    mdp: &TabularMdp,
    policy: &TabularPolicy,
    level: RiskLevel,
    horizon: usize,
) -> Result<Theorem3Report, RiskError> {
    Ok(check_theorem3_levels(mdp, policy, &[level], horizon)?[0])
}

/// [`check_theorem3`] for several levels over a single enumeration.
pub fn check_theorem3_levels(
    mdp: &TabularMdp,
    policy: &TabularPolicy,
    levels: &[RiskLevel],
    horizon: usize,
) -> Result<Vec<Theorem3Report>, RiskError> {
    let dist = enumerate_returns(mdp, policy, horizon, exact_limits())?;
    let returns = WeightedSamples::weighted(dist.returns, dist.probabilities)?;
    let values = WeightedSamples::weighted(
        value_function(mdp, policy)?.values,
        mdp.initial_dist().to_vec(),
    )?;
    let tolerance = truncation_tolerance(mdp, horizon);
    Ok(levels
        .iter()
        .map(|&level| Theorem3Report {
            return_side: lower_tail_return_risk(&returns, level),
            value_side: lower_tail_return_risk(&values, level),
            tolerance,
        })
        .collect())
}

/// Every stationary deterministic policy of a small MDP with its truncated
/// expected return and return distribution.
#[derive(Debug, Clone)]
pub struct PolicySearch {
    pub policies: Vec<Vec<usize>>,
    pub expected_returns: Vec<f64>,
    returns: Vec<WeightedSamples>,
    /// Return bound `M = R_max / (1 − γ)`.
    pub return_bound: f64,
    pub tolerance: f64,
}

impl PolicySearch {
    pub fn new(mdp: &TabularMdp, horizon: usize) -> Result<Self, RiskError> {
        let (ns, na) = (mdp.n_states(), mdp.n_actions());
        let count = (na as u64)
            .checked_pow(ns as u32)
            .filter(|&c| c <= 1 << 16)
            .ok_or_else(|| RiskError::Samples("too many deterministic policies".into()))?;
        let mut policies = Vec::with_capacity(count as usize);
        let mut expected_returns = Vec::with_capacity(count as usize);
        let mut returns = Vec::with_capacity(count as usize);
        for code in 0..count {
            let mut rest = code;
            let actions: Vec<usize> = (0..ns)
                .map(|_| {
                    let a = (rest % na as u64) as usize;
                    rest /= na as u64;
                    a
                })
                .collect();
            let policy = TabularPolicy::deterministic(na, &actions)?;
            let dist = enumerate_returns(mdp, &policy, horizon, exact_limits())?;
            expected_returns.push(truncated_expected_return(mdp, &policy, horizon)?);
            returns.push(WeightedSamples::weighted(dist.returns, dist.probabilities)?);
            policies.push(actions);
        }
        Ok(Self {
            policies,
            expected_returns,
            returns,
            return_bound: mdp.r_max() / (1.0 - mdp.gamma()),
            tolerance: truncation_tolerance(mdp, horizon),
        })
    }

    pub fn evaluate(&self, level: RiskLevel, beta: f64) -> Theorem4Report {
        let j_star = self
            .expected_returns
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        let j_constrained = self
            .expected_returns
            .iter()
            .zip(&self.returns)
            .filter(|(_, r)| lower_tail_return_risk(r, level) >= beta)
            .map(|(j, _)| *j)
            .fold(f64::NEG_INFINITY, f64::max);
        let alpha = level.alpha();
        Theorem4Report {
            j_constrained,
            j_star,
            bound: (j_star - alpha * self.return_bound) / (1.0 - alpha),
            feasible: j_constrained > f64::NEG_INFINITY,
            tolerance: self.tolerance,
        }
    }
}

/// Constrained vs unconstrained optimum over deterministic policies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Theorem4Report {
    /// Best `J` among policies with `−CVaR_α(−D) ≥ β`; `−∞` when none is feasible.
    pub j_constrained: f64,
    pub j_star: f64,
    /// `(J* − α M) / (1 − α)`
    pub bound: f64,
    pub feasible: bool,
    pub tolerance: f64,
}

impl Theorem4Report {
    /// Infeasible thresholds are reported, not failed.
    pub fn holds(&self) -> bool {
        !self.feasible || self.j_constrained >= self.bound - self.tolerance
    }
}

pub fn check_theorem4(
    mdp: &TabularMdp,
    level: RiskLevel,
    beta: f64,
    horizon: usize,
) -> Result<Theorem4Report, RiskError> {
    Ok(PolicySearch::new(mdp, horizon)?.evaluate(level, beta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances::{enumerable_instance, random_mdp, MdpSampler};
    use crate::rng::{stream, Domain};
    use proptest::prelude::*;
    use rand::Rng;

    fn lvl(a: f64) -> RiskLevel {
        RiskLevel::new(a).unwrap()
    }

    fn uniform(v: &[f64]) -> WeightedSamples {
        WeightedSamples::uniform(v.to_vec()).unwrap()
    }

    /// Independent oracle: grid scan of the RU objective.
    fn grid_min(samples: &WeightedSamples, level: RiskLevel, lo: f64, hi: f64, step: f64) -> f64 {
        let n = ((hi - lo) / step).round() as usize;
        (0..=n)
            .map(|k| ru_objective(samples, level, lo + k as f64 * step))
            .fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn level_validation() {
        assert!(RiskLevel::new(0.0).is_err());
        assert!(RiskLevel::new(1.0).is_err());
        assert!(RiskLevel::new(0.5).is_ok());
        assert_eq!(WeightedSamples::uniform(vec![]).unwrap_err(), RiskError::Empty);
    }

    #[test]
    fn var_examples() {
        let s = uniform(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(empirical_var(&s, lvl(0.5)), 2.0);
        assert_eq!(empirical_var(&s, lvl(0.75)), 3.0);
        for a in [0.01, 0.3, 0.99] {
            assert_eq!(empirical_var(&uniform(&[2.5; 7]), lvl(a)), 2.5);
        }
    }

    #[test]
    fn cvar_tail_examples() {
        let s = uniform(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(empirical_cvar_tail(&s, lvl(0.5)), 3.0);
        assert_eq!(empirical_cvar_tail(&uniform(&[-1.5; 3]), lvl(0.2)), -1.5);
        assert_eq!(empirical_cvar_tail(&s, lvl(0.999)), 4.0);
    }

    #[test]
    fn cvar_ru_examples() {
        let r = cvar_ru(&uniform(&[3.0; 5]), lvl(0.4));
        assert_eq!((r.value, r.eta_star), (3.0, 3.0));
        let two = uniform(&[0.0, 10.0]);
        let r = cvar_ru(&two, lvl(0.5));
        assert_eq!((r.value, r.eta_star), (10.0, 10.0));
        assert!((grid_min(&two, lvl(0.5), -1.0, 11.0, 1e-3) - 10.0).abs() < 1e-9);
        let four = uniform(&[1.0, 2.0, 3.0, 4.0]);
        let r = cvar_ru(&four, lvl(0.75));
        assert!((r.value - 4.0).abs() < 1e-12);
        assert!((grid_min(&four, lvl(0.75), 0.0, 5.0, 1e-3) - 4.0).abs() < 1e-9);
    }

    #[test]
    fn lower_tail_examples() {
        assert_eq!(lower_tail_return_risk(&uniform(&[7.0; 3]), lvl(0.9)), 7.0);
        assert_eq!(lower_tail_return_risk(&uniform(&[1.0, 3.0]), lvl(0.5)), 1.0);
        let s = uniform(&[1.0, 4.0, 2.0, 9.0]);
        assert!((lower_tail_return_risk(&s, lvl(1e-12)) - s.mean()).abs() < 1e-9);
    }

    #[test]
    fn worst_fraction_examples() {
        assert_eq!(worst_fraction_mean(&[10.0, 2.0, 8.0, 4.0], 0.5).unwrap(), 3.0);
        assert_eq!(worst_fraction_mean(&[10.0, 2.0, 8.0, 4.0], 1.0).unwrap(), 6.0);
        assert!(worst_fraction_mean(&[], 0.5).is_err());
    }

    #[test]
    fn tail_form_sits_between_var_and_ru() {
        // every finite sample set has an atom at the quantile, so the
        // conditional-tail form averages extra mass and never exceeds RU
        let s = uniform(&[5.0, 1.0, 3.0, 2.0, 4.0]);
        let t = tail_statistic(&s, lvl(0.6));
        assert_eq!((t.var, t.cvar_tail), (3.0, 4.0));
        assert!((t.cvar_ru - 4.5).abs() < 1e-12);
        for seed in 0..200 {
            let s = random_samples(seed);
            let t = tail_statistic(&s, lvl(0.7));
            let tol = 1e-12 * t.var.abs().max(1.0);
            assert!(t.var <= t.cvar_tail + tol && t.cvar_tail <= t.cvar_ru + tol, "{seed} {t:?}");
            if t.cvar_ru - t.cvar_tail > 1e-9 {
                println!("forms diverge on sample set {seed}: tail {} ru {}", t.cvar_tail, t.cvar_ru);
            }
        }
    }

    #[test]
    fn theorem3_deterministic_case() {
        let mdp = TabularMdp::new(2, 1, vec![0.0, 1.0, 1.0, 0.0], vec![1.0, -0.5], 0.9, vec![1.0, 0.0])
            .unwrap();
        let r = check_theorem3(&mdp, &TabularPolicy::uniform(2, 1), lvl(0.7), 40).unwrap();
        assert!((r.return_side - r.value_side).abs() <= r.tolerance);
        assert!(r.holds());
    }

    #[test]
    fn theorem3_random_instances() {
        for i in 0..10 {
            let (mdp, policy) = enumerable_instance(50, i, 8, 2e5);
            // point-mass start: value side is exactly J
            let mdp = mdp.with_initial_dist({
                let mut mu = vec![0.0; mdp.n_states()];
                mu[0] = 1.0;
                mu
            })
            .unwrap();
            let reports = check_theorem3_levels(&mdp, &policy, &[lvl(0.3), lvl(0.7), lvl(0.9)], 8).unwrap();
            let j = value_function(&mdp, &policy).unwrap().expected_return;
            for r in reports {
                assert!((r.value_side - j).abs() < 1e-9);
                assert!(r.holds(), "{r:?}");
            }
        }
    }

    #[test]
    fn theorem4_vacuous_constraint() {
        let mut rng = stream(60, Domain::Instances, 0, 0);
        let mdp = random_mdp(&mut rng, &MdpSampler::new(3, 2, 0.7));
        let search = PolicySearch::new(&mdp, 6).unwrap();
        let r = search.evaluate(lvl(0.7), -search.return_bound);
        assert_eq!(r.j_constrained, r.j_star);
        assert!(r.holds());
        let near_zero = search.evaluate(lvl(1e-9), -search.return_bound);
        assert!((near_zero.bound - near_zero.j_star).abs() < 1e-6);
        let infeasible = search.evaluate(lvl(0.5), 10.0 * search.return_bound + 1.0);
        assert!(!infeasible.feasible && infeasible.holds());
        assert_eq!(infeasible.j_constrained, f64::NEG_INFINITY);
    }

    #[test]
    fn theorem4_small_grid() {
        for i in 0..5 {
            let mut rng = stream(61, Domain::Instances, 0, i);
            let mdp = random_mdp(&mut rng, &MdpSampler::new(3, 2, 0.6));
            let search = PolicySearch::new(&mdp, 6).unwrap();
            for k in 0..11 {
                let beta = -search.return_bound + k as f64 * 0.2 * search.return_bound;
                for a in [0.3, 0.7, 0.9] {
                    assert!(search.evaluate(lvl(a), beta).holds());
                }
            }
        }
    }

    fn random_samples(seed: u64) -> WeightedSamples {
        let mut rng = stream(seed, Domain::Instances, 9, 0);
        let n = rng.gen_range(1..40);
        let values: Vec<f64> = (0..n).map(|_| rng.gen_range(-10.0..10.0)).collect();
        if rng.gen_bool(0.5) {
            WeightedSamples::uniform(values).unwrap()
        } else {
            let w = crate::instances::dirichlet(&mut rng, n);
            WeightedSamples::weighted(values, w).unwrap()
        }
    }

    proptest! {
        #[test]
        fn ru_value_is_min_over_sample_points(seed in 0u64..10_000, a in 0.01f64..0.99) {
            let s = random_samples(seed);
            let r = cvar_ru(&s, lvl(a));
            let brute = s.values().iter().map(|&eta| ru_objective(&s, lvl(a), eta)).fold(f64::INFINITY, f64::min);
            prop_assert!((r.value - brute).abs() <= 1e-12 * brute.abs().max(1.0));
            prop_assert!(r.value >= s.mean() - 1e-12);
        }

        #[test]
        fn ru_translation_and_scaling(seed in 0u64..10_000, a in 0.01f64..0.99, c in -50.0f64..50.0, k in 0.1f64..10.0) {
            let s = random_samples(seed);
            let base = cvar_ru(&s, lvl(a)).value;
            prop_assert!((cvar_ru(&s.map(|v| v + c), lvl(a)).value - (base + c)).abs() <= 1e-12 * (base.abs() + c.abs()).max(1.0));
            prop_assert!((cvar_ru(&s.map(|v| v * k), lvl(a)).value - k * base).abs() <= 1e-12 * (k * base.abs()).max(1.0));
        }

        #[test]
        fn ru_nondecreasing_in_alpha(seed in 0u64..10_000, a in 0.01f64..0.98, d in 0.0f64..0.01) {
            let s = random_samples(seed);
            let lo = cvar_ru(&s, lvl(a)).value;
            let hi = cvar_ru(&s, lvl(a + d)).value;
            prop_assert!(hi >= lo - 1e-12 * lo.abs().max(1.0));
        }

        #[test]
        fn ru_reaches_max_in_the_limit(seed in 0u64..10_000, f in 0.0f64..1.0) {
            let s = random_samples(seed);
            let min_w = s.weights().iter().copied().filter(|w| *w > 0.0).fold(1.0, f64::min);
            let a = 1.0 - min_w * (1.0 - 0.5 * f);
            prop_assume!(a < 1.0);
            let max = s.values().iter().copied().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!((cvar_ru(&s, lvl(a)).value - max).abs() <= 1e-12 * max.abs().max(1.0));
        }
    }
}
