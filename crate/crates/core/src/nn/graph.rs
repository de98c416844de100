//! Scalar reverse-mode autodiff tape.
//!
//! Nodes are appended in evaluation order, so insertion order is a
//! topological order and the backward pass is a single reverse sweep.
//! Besides the elementary scalar ops the tape has two fused n-ary ops,
//! `dot` (affine combination) and `sum`, which keep MLP tapes short.

/// Handle to a node on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(u32);

impl Var {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, Copy)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    Neg(Var),
    Scale(Var, f64),
    AddConst(Var),
    Tanh(Var),
    Exp(Var),
    Log(Var),
    MaxConst(Var, f64),
    MinConst(Var, f64),
    Min(Var, Var),
    /// `args[start]` is the bias, then `n` inputs, then `n` weights.
    Dot { start: u32, n: u32 },
    Sum { start: u32, n: u32 },
}

#[derive(Debug, Clone, Default)]
pub struct Graph {
    ops: Vec<Op>,
    values: Vec<f64>,
    args: Vec<Var>,
}

/// Adjoints of every node after a backward pass.
#[derive(Debug, Clone)]
pub struct Gradients(Vec<f64>);

impl Gradients {
    pub fn wrt(&self, v: Var) -> f64 {
        self.0[v.index()]
    }

    pub fn collect(&self, vars: &[Var]) -> Vec<f64> {
        vars.iter().map(|&v| self.wrt(v)).collect()
    }

    /// Adds the adjoints of `vars` into `out`.
    pub fn accumulate(&self, vars: &[Var], out: &mut [f64]) {
        for (o, &v) in out.iter_mut().zip(vars) {
            *o += self.wrt(v);
        }
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    /// Drops every node while keeping the allocations.
    pub fn clear(&mut self) {
        self.ops.clear();
        self.values.clear();
        self.args.clear();
    }

    fn push(&mut self, op: Op, value: f64) -> Var {
        let id = Var(self.ops.len() as u32);
        self.ops.push(op);
        self.values.push(value);
        id
    }

    pub fn value(&self, v: Var) -> f64 {
        self.values[v.index()]
    }

    pub fn leaf(&mut self, value: f64) -> Var {
        self.push(Op::Leaf, value)
    }

    pub fn leaves(&mut self, values: &[f64]) -> Vec<Var> {
        values.iter().map(|&x| self.leaf(x)).collect()
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) + self.value(b);
        self.push(Op::Add(a, b), v)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) - self.value(b);
        self.push(Op::Sub(a, b), v)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) * self.value(b);
        self.push(Op::Mul(a, b), v)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) / self.value(b);
        self.push(Op::Div(a, b), v)
    }

    pub fn neg(&mut self, a: Var) -> Var {
        let v = -self.value(a);
        self.push(Op::Neg(a), v)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let v = self.value(a) * c;
        self.push(Op::Scale(a, c), v)
    }

    pub fn add_const(&mut self, a: Var, c: f64) -> Var {
        let v = self.value(a) + c;
        self.push(Op::AddConst(a), v)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = self.value(a).tanh();
        self.push(Op::Tanh(a), v)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let v = self.value(a).exp();
        self.push(Op::Exp(a), v)
    }

    pub fn ln(&mut self, a: Var) -> Var {
        let v = self.value(a).ln();
        self.push(Op::Log(a), v)
    }

    /// `max(a, c)`; the gradient flows only where `a > c`.
    pub fn max_const(&mut self, a: Var, c: f64) -> Var {
        let v = self.value(a).max(c);
        self.push(Op::MaxConst(a, c), v)
    }

    /// `min(a, c)`; the gradient flows only where `a < c`.
    pub fn min_const(&mut self, a: Var, c: f64) -> Var {
        let v = self.value(a).min(c);
        self.push(Op::MinConst(a, c), v)
    }

    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        let m = self.max_const(a, lo);
        self.min_const(m, hi)
    }

    /// `min(a, b)`; ties route the gradient to `a`.
    pub fn min(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).min(self.value(b));
        self.push(Op::Min(a, b), v)
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.mul(a, a)
    }

    /// `bias + Σ xs[i]·ws[i]`, accumulated left to right.
    pub fn dot(&mut self, bias: Var, xs: &[Var], ws: &[Var]) -> Var {
        assert_eq!(xs.len(), ws.len(), "dot operands differ in length");
        let mut acc = self.value(bias);
        for (x, w) in xs.iter().zip(ws) {
            acc += self.value(*x) * self.value(*w);
        }
        let start = self.args.len() as u32;
        self.args.push(bias);
        self.args.extend_from_slice(xs);
        self.args.extend_from_slice(ws);
        self.push(
            Op::Dot {
                start,
                n: xs.len() as u32,
            },
            acc,
        )
    }

    /// Left-to-right sum; the empty sum is a zero leaf.
    pub fn sum(&mut self, xs: &[Var]) -> Var {
        if xs.is_empty() {
            return self.leaf(0.0);
        }
        let acc = xs.iter().map(|&x| self.value(x)).sum();
        let start = self.args.len() as u32;
        self.args.extend_from_slice(xs);
        self.push(
            Op::Sum {
                start,
                n: xs.len() as u32,
            },
            acc,
        )
    }

    pub fn backward(&self, output: Var) -> Gradients {
        let mut adj = vec![0.0; output.index() + 1];
        adj[output.index()] = 1.0;
        for i in (0..=output.index()).rev() {
            let g = adj[i];
            if g == 0.0 {
                continue;
            }
            match self.ops[i] {
                Op::Leaf => {}
                Op::Add(a, b) => {
                    adj[a.index()] += g;
                    adj[b.index()] += g;
                }
                Op::Sub(a, b) => {
                    adj[a.index()] += g;
                    adj[b.index()] -= g;
                }
                Op::Mul(a, b) => {
                    adj[a.index()] += g * self.values[b.index()];
                    adj[b.index()] += g * self.values[a.index()];
                }
                Op::Div(a, b) => {
                    let vb = self.values[b.index()];
                    adj[a.index()] += g / vb;
                    adj[b.index()] -= g * self.values[i] / vb;
                }
                Op::Neg(a) => adj[a.index()] -= g,
                Op::Scale(a, c) => adj[a.index()] += g * c,
                Op::AddConst(a) => adj[a.index()] += g,
                Op::Tanh(a) => {
                    let t = self.values[i];
                    adj[a.index()] += g * (1.0 - t * t);
                }
                Op::Exp(a) => adj[a.index()] += g * self.values[i],
                Op::Log(a) => adj[a.index()] += g / self.values[a.index()],
                Op::MaxConst(a, c) => {
                    if self.values[a.index()] > c {
                        adj[a.index()] += g;
                    }
                }
                Op::MinConst(a, c) => {
                    if self.values[a.index()] < c {
                        adj[a.index()] += g;
                    }
                }
                Op::Min(a, b) => {
                    if self.values[a.index()] <= self.values[b.index()] {
                        adj[a.index()] += g;
                    } else {
                        adj[b.index()] += g;
                    }
                }
                Op::Dot { start, n } => {
                    let (start, n) = (start as usize, n as usize);
                    adj[self.args[start].index()] += g;
                    let xs = &self.args[start + 1..start + 1 + n];
                    let ws = &self.args[start + 1 + n..start + 1 + 2 * n];
                    for (x, w) in xs.iter().zip(ws) {
                        adj[x.index()] += g * self.values[w.index()];
                        adj[w.index()] += g * self.values[x.index()];
                    }
                }
                Op::Sum { start, n } => {
                    for x in &self.args[start as usize..(start + n) as usize] {
                        adj[x.index()] += g;
                    }
                }
            }
        }
        adj.resize(self.ops.len(), 0.0);
        Gradients(adj)
    }
}
