use std::fmt;

use crate::autodiff::tensor::{Matrix, ParamTensor, Shape};
use crate::error::{Error, Result};
use crate::losses::clamp_prob;
use crate::rng::Rng;

pub const LEAKY_SLOPE: f64 = 0.2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Activation {
    Linear,
    LeakyRelu,
    Tanh,
    Sigmoid,
}

impl Activation {
    /// Wire code used by the checkpoint format.
    pub fn code(self) -> u8 {
        match self {
            Activation::Linear => 0,
            Activation::LeakyRelu => 1,
            Activation::Tanh => 2,
            Activation::Sigmoid => 3,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Some(match code {
            0 => Activation::Linear,
            1 => Activation::LeakyRelu,
            2 => Activation::Tanh,
            3 => Activation::Sigmoid,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Linear => "linear",
            Activation::LeakyRelu => "leaky_relu",
            Activation::Tanh => "tanh",
            Activation::Sigmoid => "sigmoid",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [Activation::Linear, Activation::LeakyRelu, Activation::Tanh, Activation::Sigmoid]
            .into_iter()
            .find(|a| a.name() == s)
    }

    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Linear => z,
            Activation::LeakyRelu => {
                if z > 0.0 {
                    z
                } else {
                    LEAKY_SLOPE * z
                }
            }
            Activation::Tanh => z.tanh(),
            Activation::Sigmoid => clamp_prob(sigmoid(z)),
        }
    }

    /// Derivative given the pre-activation `z` and the output `a`. For the
    /// sigmoid `a` is already clamped, which keeps the slope away from zero.
    #[inline]
    fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Linear => 1.0,
            Activation::LeakyRelu => {
                if z > 0.0 {
                    1.0
                } else {
                    LEAKY_SLOPE
                }
            }
            Activation::Tanh => 1.0 - a * a,
            Activation::Sigmoid => a * (1.0 - a),
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Dense layer computing `act(x W^T + b)` with `W` stored `out x in`.
#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    pub weight: ParamTensor,
    pub bias: ParamTensor,
    pub activation: Activation,
}

impl Layer {
    pub fn in_dim(&self) -> usize {
        match self.weight.shape() {
            Shape::Matrix(_, c) => c,
            Shape::Vector(_) => unreachable!("layer weight is always a matrix"),
        }
    }

    pub fn out_dim(&self) -> usize {
        self.bias.len()
    }
}

/// Architecture descriptor: layer widths `dims[0] -> dims[1] -> ...` and one
/// activation per layer.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NetSpec {
    pub dims: Vec<usize>,
    pub activations: Vec<Activation>,
}

impl NetSpec {
    pub fn new(dims: Vec<usize>, activations: Vec<Activation>) -> Result<Self> {
        let spec = Self { dims, activations };
        spec.validate()?;
        Ok(spec)
    }

    /// Hidden layers use `hidden`, the last layer uses `last`.
    pub fn uniform(dims: Vec<usize>, hidden: Activation, last: Activation) -> Result<Self> {
        let n = dims.len().saturating_sub(1);
        let activations = (0..n).map(|i| if i + 1 == n { last } else { hidden }).collect();
        Self::new(dims, activations)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims.len() < 2 {
            return Err(Error::config("a network needs at least one layer"));
        }
        if self.activations.len() + 1 != self.dims.len() {
            return Err(Error::config(format!(
                "{} activations for {} layers",
                self.activations.len(),
                self.dims.len() - 1
            )));
        }
        if let Some(i) = self.dims.iter().position(|&d| d == 0) {
            return Err(Error::config(format!("dimension {i} is zero")));
        }
        Ok(())
    }
}

/// `(dW, db)` for one layer.
type LayerGrads = (Vec<f64>, Vec<f64>);

/// Intermediate values recorded by [`Network::forward_tape`].
#[derive(Clone, Debug, Default)]
pub struct Tape {
    /// Input to each layer (`inputs[0]` is the batch itself).
    inputs: Vec<Matrix>,
    /// Pre-activation of each layer.
    pre: Vec<Matrix>,
    output: Option<Matrix>,
}

impl Tape {
    pub fn output(&self) -> Option<&Matrix> {
        self.output.as_ref()
    }

    pub fn input(&self) -> Option<&Matrix> {
        self.inputs.first()
    }

    pub fn batch_size(&self) -> usize {
        self.inputs.first().map_or(0, Matrix::rows)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    layers: Vec<Layer>,
    frozen: bool,
}

impl Network {
    pub fn new(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::config("a network needs at least one layer"));
        }
        for (k, l) in layers.iter().enumerate() {
            if l.in_dim() == 0 || l.out_dim() == 0 {
                return Err(Error::config(format!("layer {k} has a zero-sized dimension")));
            }
            if l.weight.shape() != Shape::Matrix(l.out_dim(), l.in_dim()) {
                return Err(Error::config(format!("layer {k} weight/bias shapes disagree")));
            }
        }
        for (k, pair) in layers.windows(2).enumerate() {
            if pair[0].out_dim() != pair[1].in_dim() {
                return Err(Error::config(format!(
                    "layer {k} outputs {} but layer {} expects {}",
                    pair[0].out_dim(),
                    k + 1,
                    pair[1].in_dim()
                )));
            }
        }
        Ok(Self { layers, frozen: false })
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init(spec: &NetSpec, rng: &mut Rng) -> Result<Self> {
        spec.validate()?;
        let mut layers = Vec::with_capacity(spec.activations.len());
        for (k, (dims, &activation)) in spec.dims.windows(2).zip(&spec.activations).enumerate() {
            let (fan_in, fan_out) = (dims[0], dims[1]);
            let s = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let values = (0..fan_in * fan_out).map(|_| rng.uniform_in(-s, s)).collect();
            layers.push(Layer {
                weight: ParamTensor::from_values(
                    format!("l{k}.weight"),
                    Shape::Matrix(fan_out, fan_in),
                    values,
                )?,
                bias: ParamTensor::zeros(format!("l{k}.bias"), Shape::Vector(fan_out)),
                activation,
            });
        }
        Self::new(layers)
    }

    pub fn init_seeded(spec: &NetSpec, seed: u64) -> Result<Self> {
        Self::init(spec, &mut Rng::new(seed))
    }

    pub fn spec(&self) -> NetSpec {
        let mut dims = vec![self.in_dim()];
        dims.extend(self.layers.iter().map(Layer::out_dim));
        NetSpec { dims, activations: self.layers.iter().map(|l| l.activation).collect() }
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    pub fn final_activation(&self) -> Activation {
        self.layers[self.layers.len() - 1].activation
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    /// After this call every mutating method returns [`Error::Invariant`].
    pub fn freeze(&mut self) {
        self.frozen = true;
    }

    pub fn unfreeze(&mut self) {
        self.frozen = false;
    }

    fn check_writable(&self, what: &str) -> Result<()> {
        if self.frozen {
            Err(Error::Invariant(format!("attempted {what} on a frozen network")))
        } else {
            Ok(())
        }
    }

    /// Parameters in canonical order: every layer's weight, then every
    /// layer's bias.
    pub fn params(&self) -> impl Iterator<Item = &ParamTensor> {
        self.layers
            .iter()
            .map(|l| &l.weight)
            .chain(self.layers.iter().map(|l| &l.bias))
    }

    pub fn params_mut(&mut self) -> Result<Vec<&mut ParamTensor>> {
        self.check_writable("parameter access")?;
        let (weights, biases): (Vec<_>, Vec<_>) = self
            .layers
            .iter_mut()
            .map(|l| (&mut l.weight, &mut l.bias))
            .unzip();
        Ok(weights.into_iter().chain(biases).collect())
    }

    pub fn zero_grad(&mut self) -> Result<()> {
        for p in self.params_mut()? {
            p.grad_mut().fill(0.0);
        }
        Ok(())
    }

    fn check_input(&self, x: &Matrix) -> Result<()> {
        if x.cols() != self.in_dim() {
            return Err(Error::config(format!(
                "input has {} columns, network expects {}",
                x.cols(),
                self.in_dim()
            )));
        }
        if !x.all_finite() {
            return Err(Error::numeric("non-finite network input"));
        }
        Ok(())
    }

    fn layer_forward(layer: &Layer, x: &Matrix) -> (Matrix, Matrix) {
        let (n, out, inp) = (x.rows(), layer.out_dim(), layer.in_dim());
        let w = layer.weight.values();
        let b = layer.bias.values();
        let mut pre = Matrix::zeros(n, out);
        for r in 0..n {
            let xr = x.row(r);
            let zr = pre.row_mut(r);
            for (o, z) in zr.iter_mut().enumerate() {
                let wo = &w[o * inp..(o + 1) * inp];
                *z = b[o] + wo.iter().zip(xr).map(|(a, b)| a * b).sum::<f64>();
            }
        }
        let mut act = pre.clone();
        for v in act.data_mut() {
            *v = layer.activation.apply(*v);
        }
        (pre, act)
    }

    /// Inference-only forward pass.
    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        self.check_input(x)?;
        let mut h = x.clone();
        for layer in &self.layers {
            h = Self::layer_forward(layer, &h).1;
        }
        if !h.all_finite() {
            return Err(Error::numeric("network output overflowed"));
        }
        Ok(h)
    }

    /// Forward pass that keeps the activations needed by [`Network::backward`].
    pub fn forward_tape(&self, x: &Matrix) -> Result<Tape> {
        self.check_input(x)?;
        let mut tape = Tape::default();
        let mut h = x.clone();
        for layer in &self.layers {
            let (pre, act) = Self::layer_forward(layer, &h);
            tape.inputs.push(h);
            tape.pre.push(pre);
            h = act;
        }
        if !h.all_finite() {
            return Err(Error::numeric("network output overflowed"));
        }
        tape.output = Some(h);
        Ok(tape)
    }

    fn check_tape(&self, tape: &Tape, upstream: &Matrix) -> Result<()> {
        let output = tape
            .output
            .as_ref()
            .ok_or_else(|| Error::State("backward called without a forward tape".into()))?;
        let shapes_match = tape.inputs.len() == self.layers.len()
            && tape
                .inputs
                .iter()
                .zip(&self.layers)
                .all(|(x, l)| x.cols() == l.in_dim());
        if !shapes_match {
            return Err(Error::State("tape was recorded on a different network".into()));
        }
        if upstream.rows() != output.rows() || upstream.cols() != output.cols() {
            return Err(Error::config(format!(
                "upstream gradient is {}x{}, output is {}x{}",
                upstream.rows(),
                upstream.cols(),
                output.rows(),
                output.cols()
            )));
        }
        Ok(())
    }

    /// Reverse sweep. Returns the input gradient and, when requested, the
    /// `(dW, db)` pair of every layer summed over the batch.
    fn backprop(
        &self,
        tape: &Tape,
        upstream: &Matrix,
        want_params: bool,
    ) -> Result<(Matrix, Vec<LayerGrads>)> {
        self.check_tape(tape, upstream)?;
        let mut grads = Vec::new();
        let mut delta = upstream.clone();
        let mut next_output = tape.output.clone().expect("checked above");
        for k in (0..self.layers.len()).rev() {
            let layer = &self.layers[k];
            let (pre, input) = (&tape.pre[k], &tape.inputs[k]);
            let (inp, out) = (layer.in_dim(), layer.out_dim());
            // dL/dz = dL/da * act'(z)
            for ((d, &z), &a) in delta.data_mut().iter_mut().zip(pre.data()).zip(next_output.data()) {
                *d *= layer.activation.derivative(z, a);
            }
            if want_params {
                let mut dw = vec![0.0; out * inp];
                let mut db = vec![0.0; out];
                for r in 0..delta.rows() {
                    let xr = input.row(r);
                    for (o, &g) in delta.row(r).iter().enumerate() {
                        if g == 0.0 {
                            continue;
                        }
                        db[o] += g;
                        for (w, &xv) in dw[o * inp..(o + 1) * inp].iter_mut().zip(xr) {
                            *w += g * xv;
                        }
                    }
                }
                grads.push((dw, db));
            }
            let w = layer.weight.values();
            let mut dx = Matrix::zeros(delta.rows(), inp);
            for r in 0..delta.rows() {
                let dxr = dx.row_mut(r);
                for (o, &g) in delta.row(r).iter().enumerate() {
                    if g == 0.0 {
                        continue;
                    }
                    for (d, &wv) in dxr.iter_mut().zip(&w[o * inp..(o + 1) * inp]) {
                        *d += g * wv;
                    }
                }
            }
            next_output = input.clone();
            delta = dx;
        }
        grads.reverse();
        Ok((delta, grads))
    }

    /// Overwrites every parameter gradient with `d loss / d param` summed over
    /// the batch and returns the gradient with respect to the input batch.
    pub fn backward(&mut self, tape: &Tape, upstream: &Matrix) -> Result<Matrix> {
        self.check_writable("backward")?;
        let (dx, grads) = self.backprop(tape, upstream, true)?;
        for (layer, (dw, db)) in self.layers.iter_mut().zip(grads) {
            layer.weight.grad_mut().copy_from_slice(&dw);
            layer.bias.grad_mut().copy_from_slice(&db);
        }
        Ok(dx)
    }

    /// Input gradient only; leaves the network untouched. This is how the
    /// generator's loss is chained through a frozen discriminator.
    pub fn backward_input(&self, tape: &Tape, upstream: &Matrix) -> Result<Matrix> {
        Ok(self.backprop(tape, upstream, false)?.0)
    }

    /// Parameter values in canonical order, little-endian. Used for hashing
    /// and byte-equality checks.
    pub fn param_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.param_count() * 8);
        for p in self.params() {
            for v in p.values() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn all_params_finite(&self) -> bool {
        self.params().all(|p| p.values().iter().all(|v| v.is_finite()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity_net() -> Network {
        let w = ParamTensor::from_values("w", Shape::Matrix(2, 2), vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let b = ParamTensor::zeros("b", Shape::Vector(2));
        Network::new(vec![Layer { weight: w, bias: b, activation: Activation::Linear }]).unwrap()
    }

    #[test]
    fn identity_forward() {
        let net = identity_net();
        let x = Matrix::from_rows(&[vec![3.0, 4.0]]).unwrap();
        assert_eq!(net.forward(&x).unwrap().data(), &[3.0, 4.0]);
    }

    #[test]
    fn sigmoid_of_zero() {
        let w = ParamTensor::zeros("w", Shape::Matrix(1, 1));
        let b = ParamTensor::zeros("b", Shape::Vector(1));
        let net =
            Network::new(vec![Layer { weight: w, bias: b, activation: Activation::Sigmoid }]).unwrap();
        let y = net.forward(&Matrix::from_rows(&[vec![7.0]]).unwrap()).unwrap();
        assert_eq!(y.data(), &[0.5]);
    }

    #[test]
    fn zero_input_reduces_to_bias_chain() {
        let spec = NetSpec::uniform(vec![3, 4, 2], Activation::LeakyRelu, Activation::Tanh).unwrap();
        let mut net = Network::init_seeded(&spec, 42).unwrap();
        // give the biases something non-trivial to propagate
        let b0 = [0.3, -0.7, 1.1, -0.2];
        let b1 = [0.05, -0.4];
        {
            let mut ps = net.params_mut().unwrap();
            ps[2].values_mut().copy_from_slice(&b0);
            ps[3].values_mut().copy_from_slice(&b1);
        }
        let h: Vec<f64> = b0.iter().map(|&v| if v > 0.0 { v } else { 0.2 * v }).collect();
        let w1 = net.layers()[1].weight.values().to_vec();
        let expected: Vec<f64> = (0..2)
            .map(|o| (b1[o] + (0..4).map(|i| w1[o * 4 + i] * h[i]).sum::<f64>()).tanh())
            .collect();
        let y = net.forward(&Matrix::zeros(1, 3)).unwrap();
        for (a, e) in y.data().iter().zip(&expected) {
            assert!((a - e).abs() < 1e-15);
        }
    }

    #[test]
    fn identity_backward_is_outer_product_with_ones() {
        let mut net = identity_net();
        let x = Matrix::from_rows(&[vec![3.0, 4.0]]).unwrap();
        let tape = net.forward_tape(&x).unwrap();
        let ones = Matrix::from_rows(&[vec![1.0, 1.0]]).unwrap();
        let dx = net.backward(&tape, &ones).unwrap();
        assert_eq!(net.layers()[0].weight.grad(), &[3.0, 4.0, 3.0, 4.0]);
        assert_eq!(net.layers()[0].bias.grad(), &[1.0, 1.0]);
        assert_eq!(dx.data(), &[1.0, 1.0]);
    }

    #[test]
    fn zero_upstream_gives_zero_grads() {
        let spec = NetSpec::uniform(vec![3, 5, 5, 1], Activation::LeakyRelu, Activation::Sigmoid).unwrap();
        let mut net = Network::init_seeded(&spec, 3).unwrap();
        let x = Matrix::from_rows(&[vec![0.1, -0.2, 0.3], vec![1.0, 2.0, -1.0]]).unwrap();
        let tape = net.forward_tape(&x).unwrap();
        let dx = net.backward(&tape, &Matrix::zeros(2, 1)).unwrap();
        assert!(net.params().all(|p| p.grad().iter().all(|&g| g == 0.0)));
        assert!(dx.data().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn backward_without_forward_is_state_error() {
        let mut net = identity_net();
        let err = net.backward(&Tape::default(), &Matrix::zeros(1, 2)).unwrap_err();
        assert!(matches!(err, Error::State(_)));
    }

    #[test]
    fn dimension_mismatch_and_non_finite_input() {
        let net = identity_net();
        let err = net.forward(&Matrix::zeros(1, 3)).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        let bad = Matrix::from_rows(&[vec![f64::NAN, 0.0]]).unwrap();
        assert!(matches!(net.forward(&bad).unwrap_err(), Error::Numeric(_)));
    }

    #[test]
    fn init_is_glorot_with_zero_bias() {
        let spec = NetSpec::uniform(vec![4, 4], Activation::Linear, Activation::Linear).unwrap();
        let net = Network::init_seeded(&spec, 11).unwrap();
        let s = (6.0f64 / 8.0).sqrt();
        assert!((s - 0.866_025_403_784_438_6).abs() < 1e-15);
        assert!(net.layers()[0].weight.values().iter().all(|w| w.abs() < s && w.abs() < 1.2247));
        assert!(net.layers()[0].bias.values().iter().all(|&b| b == 0.0));
        assert_eq!(net.param_bytes(), Network::init_seeded(&spec, 11).unwrap().param_bytes());
        assert_ne!(net.param_bytes(), Network::init_seeded(&spec, 12).unwrap().param_bytes());
    }

    #[test]
    fn zero_sized_layer_rejected() {
        let spec = NetSpec { dims: vec![3, 0, 1], activations: vec![Activation::Linear; 2] };
        assert!(matches!(Network::init_seeded(&spec, 1).unwrap_err(), Error::Config(_)));
    }

    #[test]
    fn frozen_network_rejects_writes() {
        let mut net = identity_net();
        net.freeze();
        let x = Matrix::from_rows(&[vec![1.0, 2.0]]).unwrap();
        let tape = net.forward_tape(&x).unwrap();
        let up = Matrix::from_rows(&[vec![1.0, 1.0]]).unwrap();
        assert!(matches!(net.backward(&tape, &up).unwrap_err(), Error::Invariant(_)));
        assert!(matches!(net.params_mut().unwrap_err(), Error::Invariant(_)));
        assert_eq!(net.backward_input(&tape, &up).unwrap().data(), &[1.0, 1.0]);
    }
}
