//! Reverse-mode autodiff, tanh MLPs, policy heads and Adam.

pub mod adam;
pub mod fd;
pub mod graph;
pub mod mlp;
pub mod policy;

pub use adam::Adam;
pub use fd::{finite_diff_check, registry, relative_error, FdReport, RegisteredFn};
pub use graph::{Gradients, Graph, Var};
pub use mlp::MlpShape;
pub use policy::{log_softmax, value_node, Action, ActionDist, HeadKind, PolicyNet};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NnError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("invalid shape: {0}")]
    Shape(String),
    #[error("non-finite {0}")]
    NonFinite(String),
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Domain};
    use rand::Rng;

    #[test]
    fn registered_functions_match_finite_differences() {
        let mut rng = stream(7, Domain::Init, 0, 0);
        for RegisteredFn { name, n_params: n, f } in registry() {
            for _ in 0..50 {
                // log-std entries stay inside the clamp so the check is smooth
                let p: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let r = finite_diff_check(&f, &p, 1e-5);
                assert!(r.max_rel_err <= 1e-5, "{name}: {}", r.max_rel_err);
            }
        }
    }
}
