//! Empirical Lagrangian of the CVaR-constrained problem and its scalar
//! gradients. With returns `D_i`, multiplier `λ ≥ 0` and auxiliary `η`:
//!
//! `L = −J + λ·( E[(η − D)⁺]/(1 − α) + β − η )`
//!
//! Minimizing over `η` turns the bracket into `β − (−CVaR_α(−D))`, so
//! `λ` grows while the lower-tail return risk stays below `β`.

use crate::risk::RiskLevel;

fn mean(xs: impl Iterator<Item = f64>, n: usize) -> f64 {
    xs.sum::<f64>() / n as f64
}

/// `∂L/∂η = (λ/(1−α))·mean(1{η ≥ D_i}) − λ`, taking the indicator as 1 at ties.
pub fn grad_eta(returns: &[f64], eta: f64, lam: f64, level: RiskLevel) -> f64 {
    let below = mean(returns.iter().map(|&d| if eta >= d { 1.0 } else { 0.0 }), returns.len());
    lam / level.tail_mass() * below - lam
}

/// `∂L/∂λ = mean((η − D_i)⁺)/(1−α) + β − η`.
pub fn grad_lambda(returns: &[f64], eta: f64, level: RiskLevel, beta: f64) -> f64 {
    constraint_term(returns, eta, level, beta)
}

fn constraint_term(returns: &[f64], eta: f64, level: RiskLevel, beta: f64) -> f64 {
    let hinge = mean(returns.iter().map(|&d| (eta - d).max(0.0)), returns.len());
    hinge / level.tail_mass() + beta - eta
}

/// Empirical `L` with `J` estimated by the mean return.
pub fn lagrangian(returns: &[f64], eta: f64, lam: f64, level: RiskLevel, beta: f64) -> f64 {
    let j = mean(returns.iter().copied(), returns.len());
    -j + lam * constraint_term(returns, eta, level, beta)
}

/// Per-trajectory penalty weight `(λ/(1−α))·(η − D_i)⁺`.
pub fn penalty_weights(returns: &[f64], eta: f64, lam: f64, level: RiskLevel) -> Vec<f64> {
    returns
        .iter()
        .map(|&d| lam / level.tail_mass() * (eta - d).max(0.0))
        .collect()
}

/// Mean of the `ceil(worst_fraction·N)` smallest returns.
pub fn update_beta(returns: &[f64], worst_fraction: f64) -> Result<f64, crate::risk::RiskError> {
    crate::risk::worst_fraction_mean(returns, worst_fraction)
}
