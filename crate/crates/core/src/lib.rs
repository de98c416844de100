//! Risk-sensitive policy optimization with exact tabular verification.
//!
//! The crate is split along the lines of the workload:
//!
//! - [`mdp`]: exact linear-algebra computations on finite MDPs (values,
//!   discounted state distributions, trajectory enumeration).
//! - [`disturbance`]: transition and observation adversaries and the
//!   performance-difference identities and bounds they satisfy.
//! - [`risk`]: VaR / CVaR estimators, the Rockafellar–Uryasev form, and
//!   enumeration oracles relating trajectory-return risk to value risk.
//! - [`nn`]: a scalar reverse-mode tape, MLPs, policy heads and Adam.
//! - [`envs`]: small built-in environments with a mass parameter and
//!   observation-disturbance wrappers.
//! - [`algos`]: rollouts, GAE and the VPG / PPO / CVaR-PPO trainers.
//!
//! Data-parallel loops go through [`par`], which uses rayon when the
//! `parallel` feature is enabled and runs sequentially otherwise. Both paths
//! return results in index order, so outputs are bit-identical.

pub mod algos;
pub mod disturbance;
pub mod envs;
pub mod instances;
pub mod mdp;
pub mod nn;
pub mod par;
pub mod risk;
pub mod rng;

pub use mdp::{TabularMdp, TabularPolicy, ValueProfile};
pub use risk::{RiskLevel, WeightedSamples};
