use rand::Rng;
use serde::{Deserialize, Serialize};

use super::graph::{Graph, Var};
use super::NnError;

/// Layer sizes of a tanh MLP with an identity output layer.
///
/// Parameters live in one flat vector; each layer contributes its weights
/// (row-major, `out × in`) followed by its biases.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpShape {
    sizes: Vec<usize>,
}

impl MlpShape {
    pub fn new(sizes: Vec<usize>) -> Result<Self, NnError> {
        if sizes.len() < 2 || sizes.iter().any(|&s| s == 0) {
            return Err(NnError::Shape(format!("invalid layer sizes {sizes:?}")));
        }
        Ok(Self { sizes })
    }

    /// `input → hidden… → output`.
    pub fn with_hidden(input: usize, hidden: &[usize], output: usize) -> Result<Self, NnError> {
        let mut sizes = vec![input];
        sizes.extend_from_slice(hidden);
        sizes.push(output);
        Self::new(sizes)
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().expect("at least two layers")
    }

    pub fn n_params(&self) -> usize {
        self.sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    /// Uniform fan-in initialization `±gain·√(3/fan_in)` with zero biases;
    /// the last layer uses `final_gain`.
    pub fn init<R: Rng + ?Sized>(&self, rng: &mut R, final_gain: f64) -> Vec<f64> {
        let mut params = Vec::with_capacity(self.n_params());
        let layers = self.sizes.len() - 1;
        for (l, w) in self.sizes.windows(2).enumerate() {
            let (fan_in, out) = (w[0], w[1]);
            let gain = if l + 1 == layers { final_gain } else { 1.0 };
            let bound = gain * (3.0 / fan_in as f64).sqrt();
            for _ in 0..fan_in * out {
                params.push(if bound > 0.0 {
                    rng.gen_range(-bound..=bound)
                } else {
                    0.0
                });
            }
            params.extend(std::iter::repeat(0.0).take(out));
        }
        params
    }

    pub fn check(&self, params: &[f64], input: usize) -> Result<(), NnError> {
        if params.len() != self.n_params() {
            return Err(NnError::Dimension {
                expected: self.n_params(),
                got: params.len(),
            });
        }
        if input != self.input_dim() {
            return Err(NnError::Dimension {
                expected: self.input_dim(),
                got: input,
            });
        }
        Ok(())
    }

    /// Plain forward pass; bit-identical to [`MlpShape::forward`].
    pub fn eval(&self, params: &[f64], input: &[f64]) -> Vec<f64> {
        debug_assert!(self.check(params, input.len()).is_ok());
        let mut x = input.to_vec();
        let mut offset = 0;
        let layers = self.sizes.len() - 1;
        for (l, w) in self.sizes.windows(2).enumerate() {
            let (n_in, n_out) = (w[0], w[1]);
            let weights = &params[offset..offset + n_in * n_out];
            let biases = &params[offset + n_in * n_out..offset + n_in * n_out + n_out];
            offset += n_in * n_out + n_out;
            let mut y = Vec::with_capacity(n_out);
            for o in 0..n_out {
                let mut acc = biases[o];
                for (xi, wi) in x.iter().zip(&weights[o * n_in..(o + 1) * n_in]) {
                    acc += xi * wi;
                }
                y.push(if l + 1 < layers { acc.tanh() } else { acc });
            }
            x = y;
        }
        x
    }

    /// Forward pass on a tape; `params` are the parameter nodes.
    pub fn forward(&self, g: &mut Graph, params: &[Var], input: &[Var]) -> Vec<Var> {
        debug_assert_eq!(params.len(), self.n_params());
        let mut x = input.to_vec();
        let mut offset = 0;
        let layers = self.sizes.len() - 1;
        for (l, w) in self.sizes.windows(2).enumerate() {
            let (n_in, n_out) = (w[0], w[1]);
            let weights = &params[offset..offset + n_in * n_out];
            let biases = &params[offset + n_in * n_out..offset + n_in * n_out + n_out];
            offset += n_in * n_out + n_out;
            let y = (0..n_out)
                .map(|o| {
                    let pre = g.dot(biases[o], &x, &weights[o * n_in..(o + 1) * n_in]);
                    if l + 1 < layers {
                        g.tanh(pre)
                    } else {
                        pre
                    }
                })
                .collect();
            x = y;
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Domain};

    #[test]
    fn parameter_count() {
        let s = MlpShape::with_hidden(3, &[4, 5], 2).unwrap();
        assert_eq!(s.n_params(), 3 * 4 + 4 + 4 * 5 + 5 + 5 * 2 + 2);
        assert!(MlpShape::new(vec![3]).is_err());
        assert!(MlpShape::new(vec![3, 0, 1]).is_err());
    }

    #[test]
    fn zero_weights_give_zero() {
        let s = MlpShape::with_hidden(3, &[8], 1).unwrap();
        let p = vec![0.0; s.n_params()];
        assert_eq!(s.eval(&p, &[1.0, -2.0, 0.3]), vec![0.0]);
    }

    #[test]
    fn linear_layer_is_exact() {
        let s = MlpShape::new(vec![3, 1]).unwrap();
        let p = vec![0.5, -1.0, 2.0, 0.0];
        assert_eq!(s.eval(&p, &[2.0, 3.0, 1.0]), vec![0.5 * 2.0 - 3.0 + 2.0]);
    }

    #[test]
    fn tape_matches_eval_bitwise() {
        let s = MlpShape::with_hidden(4, &[16, 16], 3).unwrap();
        let mut rng = stream(1, Domain::Init, 0, 0);
        let p = s.init(&mut rng, 1.0);
        let x = [0.3, -0.7, 1.2, 0.05];
        let mut g = Graph::new();
        let pv = g.leaves(&p);
        let xv = g.leaves(&x);
        let out: Vec<f64> = s.forward(&mut g, &pv, &xv).iter().map(|&v| g.value(v)).collect();
        assert_eq!(out, s.eval(&p, &x));
    }

    #[test]
    fn init_respects_bounds() {
        let s = MlpShape::with_hidden(9, &[4], 2).unwrap();
        let mut rng = stream(2, Domain::Init, 0, 0);
        let p = s.init(&mut rng, 0.01);
        let b0 = (3.0f64 / 9.0).sqrt();
        assert!(p[..36].iter().all(|w| w.abs() <= b0));
        assert!(p[36..40].iter().all(|b| *b == 0.0));
        let b1 = 0.01 * (3.0f64 / 4.0).sqrt();
        assert!(p[40..48].iter().all(|w| w.abs() <= b1));
    }
}
