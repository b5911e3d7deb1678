use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};

/// Bumped whenever the flat parameter layout changes.
pub const LAYOUT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Relu,
}

impl Activation {
    #[inline]
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(0.0),
        }
    }

    /// Derivative expressed through the activation's output.
    #[inline]
    fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - y * y,
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// Feed-forward network with hidden activations and a linear output layer.
///
/// Parameters live in one flat vector. Layer by layer: the weight matrix,
/// `out x in` row-major, followed by the bias.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    layout_version: u32,
    widths: Vec<usize>,
    activation: Activation,
    params: Vec<f64>,
}

/// Per-layer activations kept for the backward pass, plus scratch space.
#[derive(Clone, Debug, Default)]
pub struct Trace {
    acts: Vec<Vec<f64>>,
    delta: Vec<f64>,
    delta_prev: Vec<f64>,
}

impl Trace {
    pub fn output(&self) -> &[f64] {
        self.acts.last().map_or(&[], Vec::as_slice)
    }

    pub fn input(&self) -> &[f64] {
        self.acts.first().map_or(&[], Vec::as_slice)
    }
}

#[inline]
fn dot(w: &[f64], x: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let wc = w.chunks_exact(4);
    let xc = x.chunks_exact(4);
    let (wr, xr) = (wc.remainder(), xc.remainder());
    for (a, b) in wc.zip(xc) {
        acc[0] += a[0] * b[0];
        acc[1] += a[1] * b[1];
        acc[2] += a[2] * b[2];
        acc[3] += a[3] * b[3];
    }
    let tail: f64 = wr.iter().zip(xr).map(|(a, b)| a * b).sum();
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

impl Mlp {
    /// All-zero network. `widths` lists the input width, the hidden widths and the output width.
    pub fn zeros(widths: &[usize], activation: Activation) -> Result<Self> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(contract("an MLP needs at least input and output widths, all positive"));
        }
        let n = widths.windows(2).map(|w| w[1] * w[0] + w[1]).sum();
        Ok(Self { layout_version: LAYOUT_VERSION, widths: widths.to_vec(), activation, params: vec![0.0; n] })
    }

    /// Uniform `±1/sqrt(fan_in)` initialization for weights and biases.
    pub fn random<R: Rng>(widths: &[usize], activation: Activation, rng: &mut R) -> Result<Self> {
        let mut net = Self::zeros(widths, activation)?;
        let mut offset = 0;
        for w in widths.windows(2) {
            let bound = 1.0 / (w[0] as f64).sqrt();
            for p in &mut net.params[offset..offset + w[1] * w[0] + w[1]] {
                *p = rng.random_range(-bound..bound);
            }
            offset += w[1] * w[0] + w[1];
        }
        Ok(net)
    }

    pub fn from_params(widths: &[usize], activation: Activation, params: Vec<f64>) -> Result<Self> {
        let mut net = Self::zeros(widths, activation)?;
        if params.len() != net.params.len() {
            return Err(contract(format!("expected {} parameters, got {}", net.params.len(), params.len())));
        }
        net.params = params;
        net.validate()?;
        Ok(net)
    }

    /// Checks layout version, parameter count and finiteness; deserialized nets bypass the constructors.
    pub fn validate(&self) -> Result<()> {
        if self.layout_version != LAYOUT_VERSION {
            return Err(contract(format!("unsupported parameter layout version {}", self.layout_version)));
        }
        let expected: usize = self.widths.windows(2).map(|w| w[1] * w[0] + w[1]).sum();
        if self.widths.len() < 2 || self.params.len() != expected {
            return Err(contract("parameter vector does not match the declared widths"));
        }
        if self.params.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFinite("network parameters"));
        }
        Ok(())
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn input_width(&self) -> usize {
        self.widths[0]
    }

    pub fn output_width(&self) -> usize {
        *self.widths.last().expect("validated widths")
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn check_input(&self, input: &[f64]) -> Result<()> {
        if input.len() != self.widths[0] {
            return Err(contract(format!("network expects input width {}, got {}", self.widths[0], input.len())));
        }
        Ok(())
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        let mut trace = Trace::default();
        self.forward_trace(input, &mut trace)?;
        Ok(trace.acts.pop().unwrap_or_default())
    }

    /// Evaluates the network, recording activations in `trace` (buffers are reused).
    pub fn forward_trace(&self, input: &[f64], trace: &mut Trace) -> Result<()> {
        self.check_input(input)?;
        let n_layers = self.widths.len() - 1;
        trace.acts.resize_with(n_layers + 1, Vec::new);
        trace.acts[0].clear();
        trace.acts[0].extend_from_slice(input);
        let mut offset = 0;
        for l in 0..n_layers {
            let (n_in, n_out) = (self.widths[l], self.widths[l + 1]);
            let weights = &self.params[offset..offset + n_out * n_in];
            let bias = &self.params[offset + n_out * n_in..offset + n_out * n_in + n_out];
            offset += n_out * n_in + n_out;
            let (done, rest) = trace.acts.split_at_mut(l + 1);
            let x = &done[l];
            let y = &mut rest[0];
            y.clear();
            let hidden = l + 1 < n_layers;
            for j in 0..n_out {
                let z = dot(&weights[j * n_in..(j + 1) * n_in], x) + bias[j];
                y.push(if hidden { self.activation.apply(z) } else { z });
            }
        }
        Ok(())
    }

    /// Reverse pass for the forward call recorded in `trace`.
    ///
    /// Parameter gradients are accumulated into `param_grad` (`+=`); the input
    /// gradient, when requested, is overwritten.
    pub fn backward(
        &self,
        trace: &mut Trace,
        upstream: &[f64],
        mut param_grad: Option<&mut [f64]>,
        input_grad: Option<&mut [f64]>,
    ) -> Result<()> {
        let n_layers = self.widths.len() - 1;
        if trace.acts.len() != n_layers + 1 || trace.acts[0].len() != self.widths[0] {
            return Err(contract("trace does not belong to this network"));
        }
        if upstream.len() != self.output_width() {
            return Err(contract("upstream gradient width does not match the output"));
        }
        if let Some(g) = param_grad.as_deref() {
            if g.len() != self.params.len() {
                return Err(contract("parameter gradient buffer has the wrong length"));
            }
        }
        let Trace { acts, delta, delta_prev } = trace;
        delta.clear();
        delta.extend_from_slice(upstream);
        let mut end = self.params.len();
        for l in (0..n_layers).rev() {
            let (n_in, n_out) = (self.widths[l], self.widths[l + 1]);
            let start = end - (n_out * n_in + n_out);
            let weights = &self.params[start..start + n_out * n_in];
            let x = &acts[l];
            if let Some(g) = param_grad.as_deref_mut() {
                let (gw, gb) = g[start..end].split_at_mut(n_out * n_in);
                for j in 0..n_out {
                    let d = delta[j];
                    if d != 0.0 {
                        for (gw, xi) in gw[j * n_in..(j + 1) * n_in].iter_mut().zip(x) {
                            *gw += d * xi;
                        }
                    }
                    gb[j] += d;
                }
            }
            if l == 0 && input_grad.is_none() {
                break;
            }
            delta_prev.clear();
            delta_prev.resize(n_in, 0.0);
            for j in 0..n_out {
                let d = delta[j];
                if d != 0.0 {
                    for (dp, w) in delta_prev.iter_mut().zip(&weights[j * n_in..(j + 1) * n_in]) {
                        *dp += w * d;
                    }
                }
            }
            if l > 0 {
                for (dp, y) in delta_prev.iter_mut().zip(x) {
                    *dp *= self.activation.derivative_from_output(*y);
                }
            }
            std::mem::swap(delta, delta_prev);
            end = start;
        }
        if let Some(gi) = input_grad {
            if gi.len() != self.widths[0] {
                return Err(contract("input gradient buffer has the wrong length"));
            }
            gi.copy_from_slice(delta);
        }
        Ok(())
    }

    /// `(d/dparams, d/dinput)` of `upstream · f(input)`.
    pub fn gradients(&self, input: &[f64], upstream: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let mut trace = Trace::default();
        self.forward_trace(input, &mut trace)?;
        let mut gp = vec![0.0; self.params.len()];
        let mut gi = vec![0.0; self.widths[0]];
        self.backward(&mut trace, upstream, Some(&mut gp), Some(&mut gi))?;
        Ok((gp, gi))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let net: Self = serde_json::from_str(json)?;
        net.validate()?;
        Ok(net)
    }
}
