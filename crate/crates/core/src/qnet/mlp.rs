//! Dense feed-forward network with hand-written backpropagation.
//!
//! Weights are row-major `out × in`. The same [`Mlp`] type doubles as the
//! gradient container (`zeros_like`), so gradients have exactly the shape of
//! the parameters they belong to.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SeededRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Relu,
    Tanh,
}

impl Activation {
    #[inline]
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative expressed through the pre-activation `z` and output `y`.
    #[inline]
    fn derivative(self, z: f64, y: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub activation: Activation,
    /// Row-major `outputs × inputs`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn zeros(inputs: usize, outputs: usize, activation: Activation) -> Self {
        Self {
            inputs,
            outputs,
            activation,
            weights: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }

    /// Uniform in `±1/√fan_in` for weights and biases.
    pub fn init_uniform(
        inputs: usize,
        outputs: usize,
        activation: Activation,
        rng: &mut SeededRng,
    ) -> Self {
        let bound = 1.0 / (inputs.max(1) as f64).sqrt();
        let mut draw = || rng.uniform_in(-bound, bound);
        let weights = (0..inputs * outputs).map(|_| draw()).collect();
        let bias = (0..outputs).map(|_| draw()).collect();
        Self {
            inputs,
            outputs,
            activation,
            weights,
            bias,
        }
    }

    #[inline]
    pub fn weight(&self, out: usize, inp: usize) -> f64 {
        self.weights[out * self.inputs + inp]
    }
}

/// Multilayer perceptron parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    layers: Vec<Dense>,
}

/// Per-layer inputs, pre-activations and outputs from one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    inputs: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
    outputs: Vec<Vec<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &[f64] {
        self.outputs.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

impl Mlp {
    pub fn from_layers(layers: Vec<Dense>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidArgument(
                "network needs at least one layer".into(),
            ));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.weights.len() != l.inputs * l.outputs || l.bias.len() != l.outputs {
                return Err(Error::Dimension {
                    what: "layer parameters",
                    expected: l.inputs * l.outputs + l.outputs,
                    got: l.weights.len() + l.bias.len(),
                });
            }
            if i > 0 && layers[i - 1].outputs != l.inputs {
                return Err(Error::Dimension {
                    what: "adjacent layers",
                    expected: layers[i - 1].outputs,
                    got: l.inputs,
                });
            }
        }
        let params = Self { layers };
        if !params.is_finite() {
            return Err(Error::NonFinite("network parameters".into()));
        }
        Ok(params)
    }

    /// `sizes = [in, h1, ..., out]`; every layer but the last uses `hidden`,
    /// the last uses `output`.
    pub fn new(
        sizes: &[usize],
        hidden: Activation,
        output: Activation,
        rng: &mut SeededRng,
    ) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::InvalidArgument(format!("bad layer sizes {sizes:?}")));
        }
        let n = sizes.len() - 1;
        let layers = sizes
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let act = if i + 1 == n { output } else { hidden };
                Dense::init_uniform(w[0], w[1], act, rng)
            })
            .collect();
        Self::from_layers(layers)
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            layers: self
                .layers
                .iter()
                .map(|l| Dense::zeros(l.inputs, l.outputs, l.activation))
                .collect(),
        }
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs
    }

    /// Layer sizes `[in, h1, ..., out]`.
    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![self.input_dim()];
        s.extend(self.layers.iter().map(|l| l.outputs));
        s
    }

    pub fn same_shape(&self, other: &Mlp) -> bool {
        self.layers.len() == other.layers.len()
            && self.layers.iter().zip(&other.layers).all(|(a, b)| {
                a.inputs == b.inputs && a.outputs == b.outputs && a.activation == b.activation
            })
    }

    pub fn is_finite(&self) -> bool {
        self.params().all(f64::is_finite)
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    /// All parameters, layer by layer, weights before biases.
    pub fn params(&self) -> impl Iterator<Item = f64> + '_ {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.bias.iter()).copied())
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> + '_ {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weights.iter_mut().chain(l.bias.iter_mut()))
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::Dimension {
                what: "network input",
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let mut cur = x.to_vec();
        for l in &self.layers {
            let mut next = vec![0.0; l.outputs];
            for (o, out) in next.iter_mut().enumerate() {
                let row = &l.weights[o * l.inputs..(o + 1) * l.inputs];
                let z = l.bias[o] + row.iter().zip(&cur).map(|(w, v)| w * v).sum::<f64>();
                *out = l.activation.apply(z);
            }
            cur = next;
        }
        Ok(cur)
    }

    pub fn forward_cached(&self, x: &[f64]) -> Result<ForwardCache> {
        self.check_input(x)?;
        let n = self.layers.len();
        let mut cache = ForwardCache {
            inputs: Vec::with_capacity(n),
            pre: Vec::with_capacity(n),
            outputs: Vec::with_capacity(n),
        };
        let mut cur = x.to_vec();
        for l in &self.layers {
            let mut pre = vec![0.0; l.outputs];
            for (o, z) in pre.iter_mut().enumerate() {
                let row = &l.weights[o * l.inputs..(o + 1) * l.inputs];
                *z = l.bias[o] + row.iter().zip(&cur).map(|(w, v)| w * v).sum::<f64>();
            }
            let out: Vec<f64> = pre.iter().map(|&z| l.activation.apply(z)).collect();
            cache.inputs.push(std::mem::replace(&mut cur, out.clone()));
            cache.pre.push(pre);
            cache.outputs.push(out);
        }
        Ok(cache)
    }

    /// Accumulates `∂L/∂θ` into `grads` given `∂L/∂output`, and returns
    /// `∂L/∂input`.
    pub fn backward(&self, cache: &ForwardCache, d_output: &[f64], grads: &mut Mlp) -> Vec<f64> {
        debug_assert!(self.same_shape(grads));
        let mut delta = d_output.to_vec();
        for (i, l) in self.layers.iter().enumerate().rev() {
            let pre = &cache.pre[i];
            let out = &cache.outputs[i];
            let input = &cache.inputs[i];
            for (o, d) in delta.iter_mut().enumerate() {
                *d *= l.activation.derivative(pre[o], out[o]);
            }
            let g = &mut grads.layers[i];
            let mut d_input = vec![0.0; l.inputs];
            for (o, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                g.bias[o] += d;
                let row = o * l.inputs;
                for k in 0..l.inputs {
                    g.weights[row + k] += d * input[k];
                    d_input[k] += d * l.weights[row + k];
                }
            }
            delta = d_input;
        }
        delta
    }

    /// `self += alpha * other`. Shapes must match.
    pub fn add_scaled(&mut self, other: &Mlp, alpha: f64) {
        debug_assert!(self.same_shape(other));
        for (p, g) in self.params_mut().zip(other.params()) {
            *p += alpha * g;
        }
    }

    pub fn scale(&mut self, alpha: f64) {
        for p in self.params_mut() {
            *p *= alpha;
        }
    }

    pub fn copy_from(&mut self, other: &Mlp) {
        debug_assert!(self.same_shape(other));
        self.layers.clone_from(&other.layers);
    }
}

/// Forward pass written as explicit scalar loops over the raw layer
/// parameters. Kept independent of [`Mlp::forward`] for testing.
#[cfg(test)]
pub(crate) fn naive_forward(net: &Mlp, x: &[f64]) -> Vec<f64> {
    let mut cur = x.to_vec();
    for l in net.layers() {
        let mut next = Vec::new();
        for o in 0..l.outputs {
            let mut z = l.bias[o];
            for k in 0..l.inputs {
                z += l.weight(o, k) * cur[k];
            }
            next.push(match l.activation {
                Activation::Identity => z,
                Activation::Relu => {
                    if z > 0.0 {
                        z
                    } else {
                        0.0
                    }
                }
                Activation::Tanh => (z.exp() - (-z).exp()) / (z.exp() + (-z).exp()),
            });
        }
        cur = next;
    }
    cur
}
