use super::graph::{Graph, Var};
use super::mlp::MlpShape;
use super::policy::{value_node, Action, HeadKind, PolicyNet};

/// Autodiff gradient next to its central-difference estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct FdReport {
    pub autodiff: Vec<f64>,
    pub numeric: Vec<f64>,
    /// Max over coordinates of `|a − n| / max(1, |a|, |n|)`.
    pub max_rel_err: f64,
}

pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / 1f64.max(a.abs()).max(b.abs())
}

/// Compares the tape gradient of `f` at `params` with central differences
/// of step `h`. `f` builds its output from the parameter nodes it is given.
pub fn finite_diff_check<F>(f: F, params: &[f64], h: f64) -> FdReport
where
    F: Fn(&mut Graph, &[Var]) -> Var,
{
    let eval = |p: &[f64]| {
        let mut g = Graph::new();
        let vars = g.leaves(p);
        let out = f(&mut g, &vars);
        g.value(out)
    };
    let mut g = Graph::new();
    let vars = g.leaves(params);
    let out = f(&mut g, &vars);
    let autodiff = g.backward(out).collect(&vars);
    let mut probe = params.to_vec();
    let numeric: Vec<f64> = (0..params.len())
        .map(|i| {
            probe[i] = params[i] + h;
            let up = eval(&probe);
            probe[i] = params[i] - h;
            let down = eval(&probe);
            probe[i] = params[i];
            (up - down) / (2.0 * h)
        })
        .collect();
    let max_rel_err = autodiff
        .iter()
        .zip(&numeric)
        .map(|(a, n)| relative_error(*a, *n))
        .fold(0.0, f64::max);
    FdReport {
        autodiff,
        numeric,
        max_rel_err,
    }
}

pub type TapeFn = Box<dyn Fn(&mut Graph, &[Var]) -> Var + Send + Sync>;

/// A scalar function of `n_params` parameters built on the tape.
pub struct RegisteredFn {
    pub name: &'static str,
    pub n_params: usize,
    pub f: TapeFn,
}

/// The differentiable functions covered by the gradient check suite.
pub fn registry() -> Vec<RegisteredFn> {
    let cat = PolicyNet::new(3, &[5], HeadKind::Categorical { n_actions: 3 }).expect("valid shape");
    let gauss = PolicyNet::new(2, &[4, 4], HeadKind::Gaussian { action_dim: 2 }).expect("valid shape");
    let value = MlpShape::with_hidden(3, &[6, 6], 1).expect("valid shape");
    vec![
        RegisteredFn {
            name: "elementary",
            n_params: 3,
            f: Box::new(|g: &mut Graph, p: &[Var]| {
                let a = g.tanh(p[0]);
                let b = g.exp(p[1]);
                let c = g.mul(a, b);
                let d = g.square(p[2]);
                let e = g.add_const(d, 1.0);
                let f = g.ln(e);
                let h = g.div(c, e);
                let s = g.sub(h, f);
                g.scale(s, -2.0)
            }),
        },
        RegisteredFn {
            name: "categorical",
            n_params: cat.n_params(),
            f: Box::new(move |g: &mut Graph, p: &[Var]| {
                let obs = g.leaves(&[0.4, -1.1, 0.9]);
                cat.log_prob_node(g, p, &obs, &Action::Discrete(1))
            }),
        },
        RegisteredFn {
            name: "gaussian",
            n_params: gauss.n_params(),
            f: Box::new(move |g: &mut Graph, p: &[Var]| {
                let obs = g.leaves(&[0.3, -0.2]);
                gauss.log_prob_node(g, p, &obs, &Action::Continuous(vec![0.5, -0.25]))
            }),
        },
        RegisteredFn {
            name: "value",
            n_params: value.n_params(),
            f: Box::new(move |g: &mut Graph, p: &[Var]| {
                let obs = g.leaves(&[1.0, 0.5, -0.5]);
                let v = value_node(&value, g, p, &obs);
                g.square(v)
            }),
        },
    ]
}
