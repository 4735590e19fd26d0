//! Small dense feed-forward networks with a flat parameter vector.
//!
//! Layout per layer: the weight matrix (out × in, row-major) followed by the
//! bias. The final layer is linear and its output is multiplied by
//! `out_gain`.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Activation {
    Tanh,
    LeakyRelu { slope: f64 },
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::LeakyRelu { slope } => {
                if z > 0.0 {
                    z
                } else {
                    slope * z
                }
            }
        }
    }

    /// Derivative expressed through the pre-activation `z` and output `a`.
    fn deriv(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - a * a,
            Activation::LeakyRelu { slope } => {
                if z > 0.0 {
                    1.0
                } else {
                    slope
                }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    /// Layer widths from input to output.
    pub sizes: Vec<usize>,
    pub hidden: Activation,
    pub out_gain: f64,
}

impl Architecture {
    pub fn num_params(&self) -> usize {
        self.sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.sizes.len() < 2 || self.sizes.contains(&0) {
            return Err(Error::InvalidConfig(format!("bad layer sizes {:?}", self.sizes)));
        }
        if !self.out_gain.is_finite() {
            return Err(Error::InvalidConfig("output gain must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub architecture: Architecture,
    pub params: Vec<f64>,
}

/// Per-layer activations kept for the backward pass.
#[derive(Default)]
pub struct Trace {
    pre: Vec<Vec<f64>>,
    post: Vec<Vec<f64>>,
}

impl Mlp {
    pub fn zeros(architecture: Architecture) -> Self {
        let params = vec![0.0; architecture.num_params()];
        Self { architecture, params }
    }

    /// Glorot-normal hidden layers. The output layer is left at zero when
    /// `zero_output` is set, so the network starts out returning zeros.
    pub fn random(architecture: Architecture, zero_output: bool, rng: &mut impl Rng) -> Self {
        let mut net = Self::zeros(architecture);
        let layers = net.architecture.sizes.len() - 1;
        let mut offset = 0;
        for l in 0..layers {
            let (fan_in, fan_out) = (net.architecture.sizes[l], net.architecture.sizes[l + 1]);
            let w = fan_in * fan_out;
            if !(zero_output && l == layers - 1) {
                let std = (2.0 / (fan_in + fan_out) as f64).sqrt();
                let normal = Normal::new(0.0, std).expect("positive std");
                for p in &mut net.params[offset..offset + w] {
                    *p = normal.sample(rng);
                }
            }
            offset += w + fan_out;
        }
        net
    }

    pub fn from_params(architecture: Architecture, params: Vec<f64>) -> Result<Self> {
        architecture.validate()?;
        if params.len() != architecture.num_params() {
            return Err(Error::Dimension(format!(
                "expected {} parameters, got {}",
                architecture.num_params(),
                params.len()
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFinite("network parameters".into()));
        }
        Ok(Self { architecture, params })
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn input_dim(&self) -> usize {
        self.architecture.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.architecture.sizes.last().unwrap()
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        self.forward_with(&self.params, x)
    }

    /// Forward pass with an explicit parameter vector of matching length.
    pub fn forward_with(&self, params: &[f64], x: &[f64]) -> Vec<f64> {
        let mut trace = Trace::default();
        self.forward_traced(params, x, &mut trace);
        trace.post.pop().unwrap()
    }

    fn forward_traced(&self, params: &[f64], x: &[f64], trace: &mut Trace) {
        assert_eq!(x.len(), self.input_dim());
        assert_eq!(params.len(), self.num_params());
        let sizes = &self.architecture.sizes;
        let layers = sizes.len() - 1;
        trace.pre.clear();
        trace.post.clear();
        trace.post.push(x.to_vec());
        let mut offset = 0;
        for l in 0..layers {
            let (n_in, n_out) = (sizes[l], sizes[l + 1]);
            let w = &params[offset..offset + n_in * n_out];
            let b = &params[offset + n_in * n_out..offset + n_in * n_out + n_out];
            offset += n_in * n_out + n_out;
            let input = trace.post.last().unwrap();
            let z: Vec<f64> = (0..n_out)
                .map(|o| {
                    let row = &w[o * n_in..(o + 1) * n_in];
                    b[o] + row.iter().zip(input).map(|(a, c)| a * c).sum::<f64>()
                })
                .collect();
            let a: Vec<f64> = if l + 1 == layers {
                z.iter().map(|v| self.architecture.out_gain * v).collect()
            } else {
                z.iter().map(|&v| self.architecture.hidden.apply(v)).collect()
            };
            trace.pre.push(z);
            trace.post.push(a);
        }
    }

    /// Adds `∂(dyᵀ y(x))/∂θ` to `grad`.
    pub fn accumulate_grad(&self, x: &[f64], dy: &[f64], grad: &mut [f64]) {
        let mut trace = Trace::default();
        self.forward_traced(&self.params, x, &mut trace);
        let sizes = &self.architecture.sizes;
        let layers = sizes.len() - 1;
        let mut offsets = Vec::with_capacity(layers);
        let mut offset = 0;
        for l in 0..layers {
            offsets.push(offset);
            offset += sizes[l] * sizes[l + 1] + sizes[l + 1];
        }
        // δ at the output pre-activation.
        let mut delta: Vec<f64> = dy.iter().map(|d| d * self.architecture.out_gain).collect();
        for l in (0..layers).rev() {
            let (n_in, n_out) = (sizes[l], sizes[l + 1]);
            let off = offsets[l];
            let input = &trace.post[l];
            for o in 0..n_out {
                let d = delta[o];
                if d != 0.0 {
                    let g = &mut grad[off + o * n_in..off + (o + 1) * n_in];
                    for (gi, xi) in g.iter_mut().zip(input) {
                        *gi += d * xi;
                    }
                }
                grad[off + n_in * n_out + o] += d;
            }
            if l == 0 {
                break;
            }
            let w = &self.params[off..off + n_in * n_out];
            let mut prev = vec![0.0; n_in];
            for o in 0..n_out {
                let d = delta[o];
                if d != 0.0 {
                    for (p, wi) in prev.iter_mut().zip(&w[o * n_in..(o + 1) * n_in]) {
                        *p += d * wi;
                    }
                }
            }
            let (z, a) = (&trace.pre[l - 1], &trace.post[l]);
            for i in 0..n_in {
                prev[i] *= self.architecture.hidden.deriv(z[i], a[i]);
            }
            delta = prev;
        }
    }

    /// Directional derivative of the outputs along a parameter direction,
    /// assembled from one backward pass per output.
    pub fn directional_derivative(&self, x: &[f64], direction: &[f64]) -> Vec<f64> {
        let m = self.output_dim();
        (0..m)
            .map(|j| {
                let mut dy = vec![0.0; m];
                dy[j] = 1.0;
                let mut g = vec![0.0; self.num_params()];
                self.accumulate_grad(x, &dy, &mut g);
                g.iter().zip(direction).map(|(a, b)| a * b).sum()
            })
            .collect()
    }
}

/// Largest relative disagreement between backprop and central differences
/// over `directions` random unit parameter directions.
pub fn gradient_check(net: &Mlp, x: &[f64], directions: usize, h: f64, rng: &mut impl Rng) -> f64 {
    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut worst = 0.0f64;
    for _ in 0..directions {
        let mut d: Vec<f64> = (0..net.num_params()).map(|_| normal.sample(rng)).collect();
        let len = d.iter().map(|v| v * v).sum::<f64>().sqrt();
        d.iter_mut().for_each(|v| *v /= len);
        let analytic = net.directional_derivative(x, &d);
        let shifted = |s: f64| {
            let p: Vec<f64> = net.params.iter().zip(&d).map(|(a, b)| a + s * b).collect();
            net.forward_with(&p, x)
        };
        let (plus, minus) = (shifted(h), shifted(-h));
        let numeric: Vec<f64> = plus.iter().zip(&minus).map(|(a, b)| (a - b) / (2.0 * h)).collect();
        let scale = analytic
            .iter()
            .chain(&numeric)
            .fold(0.0f64, |m, v| m.max(v.abs()))
            .max(1e-8);
        for (a, n) in analytic.iter().zip(&numeric) {
            worst = worst.max((a - n).abs() / scale);
        }
    }
    worst
}
