use larm_core::Rng;

use crate::params::{visit_mut_prefixed, visit_prefixed};
use crate::{Activation, Matrix, NnError, Parameters, Result};

/// Fully connected layer computing `act(x · W + b)` with `W: in x out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weight: Matrix,
    pub bias: Matrix,
    pub activation: Activation,
}

impl Layer {
    /// Kaiming-uniform for relu layers, Xavier-uniform otherwise; zero bias.
    pub fn init(input: usize, output: usize, activation: Activation, rng: &mut Rng) -> Self {
        let bound = match activation {
            Activation::Relu => (6.0 / input as f64).sqrt(),
            Activation::Identity | Activation::Sigmoid => (6.0 / (input + output) as f64).sqrt(),
        };
        Self {
            weight: Matrix::uniform(input, output, bound, rng),
            bias: Matrix::zeros(1, output),
            activation,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.cols()
    }
}

impl Parameters for Layer {
    fn visit<'a>(&'a self, f: &mut dyn FnMut(&str, &'a Matrix)) {
        f("weight", &self.weight);
        f("bias", &self.bias);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Matrix)) {
        f("weight", &mut self.weight);
        f("bias", &mut self.bias);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Layer>,
}

/// Activations saved by [`Mlp::forward`] for the backward pass.
#[derive(Debug, Clone)]
pub struct MlpTape {
    inputs: Vec<Matrix>,
    outputs: Vec<Matrix>,
}

impl MlpTape {
    pub fn output(&self) -> &Matrix {
        self.outputs.last().expect("tape of an empty mlp")
    }
}

impl Mlp {
    /// `sizes = [in, h1, ..., out]`; hidden layers use `hidden`, the last uses `output`.
    pub fn new(sizes: &[usize], hidden: Activation, output: Activation, rng: &mut Rng) -> Self {
        assert!(sizes.len() >= 2, "an mlp needs at least one layer");
        let n = sizes.len() - 1;
        let layers = (0..n)
            .map(|i| {
                let act = if i + 1 == n { output } else { hidden };
                Layer::init(sizes[i], sizes[i + 1], act, rng)
            })
            .collect();
        Self { layers }
    }

    pub fn from_layers(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(NnError::shape("Mlp::from_layers", "no layers"));
        }
        for (i, w) in layers.windows(2).enumerate() {
            if w[0].output_dim() != w[1].input_dim() {
                return Err(NnError::shape(
                    "Mlp::from_layers",
                    format!("layer {i} outputs {} but layer {} takes {}", w[0].output_dim(), i + 1, w[1].input_dim()),
                ));
            }
        }
        for (i, l) in layers.iter().enumerate() {
            if l.bias.shape() != (1, l.output_dim()) {
                return Err(NnError::shape("Mlp::from_layers", format!("bias of layer {i}")));
            }
        }
        Ok(Self { layers })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().output_dim()
    }

    /// Shape signature such as `64->64->32`.
    pub fn signature(&self) -> String {
        let mut s = self.input_dim().to_string();
        for l in &self.layers {
            s.push_str(&format!("->{}", l.output_dim()));
        }
        s
    }

    pub fn forward(&self, x: &Matrix) -> Result<(Matrix, MlpTape)> {
        if x.cols() != self.input_dim() {
            return Err(NnError::shape(
                "mlp_forward",
                format!("input has {} columns, mlp expects {}", x.cols(), self.input_dim()),
            ));
        }
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut outputs = Vec::with_capacity(self.layers.len());
        let mut h = x.clone();
        for layer in &self.layers {
            let mut z = h.matmul(&layer.weight)?;
            z.add_row_broadcast(&layer.bias)?;
            let act = layer.activation;
            let y = z.map(|v| act.apply(v));
            inputs.push(h);
            h = y.clone();
            outputs.push(y);
        }
        if !h.is_finite() {
            return Err(NnError::NonFinite("mlp_forward"));
        }
        Ok((h, MlpTape { inputs, outputs }))
    }

    /// Forward pass without keeping a tape.
    pub fn apply(&self, x: &Matrix) -> Result<Matrix> {
        self.forward(x).map(|(y, _)| y)
    }

    pub fn apply_vec(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.apply(&Matrix::row_vector(x.to_vec())).map(Matrix::into_vec)
    }

    /// Reverse-mode pass. Returns parameter gradients (same shape as `self`)
    /// and the gradient with respect to the input.
    pub fn backward(&self, tape: &MlpTape, grad_out: &Matrix) -> Result<(Mlp, Matrix)> {
        if tape.outputs.len() != self.layers.len() {
            return Err(NnError::shape("mlp_backward", "tape depth differs from mlp"));
        }
        if grad_out.shape() != tape.output().shape() {
            return Err(NnError::shape(
                "mlp_backward",
                format!("grad {:?} vs output {:?}", grad_out.shape(), tape.output().shape()),
            ));
        }
        let mut grads = self.clone();
        let mut g = grad_out.clone();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let act = layer.activation;
            let y = &tape.outputs[i];
            let mut dz = g;
            for (d, &yv) in dz.as_mut_slice().iter_mut().zip(y.as_slice()) {
                *d *= act.derivative_from_output(yv);
            }
            grads.layers[i].weight = tape.inputs[i].t_matmul(&dz)?;
            grads.layers[i].bias = dz.sum_rows();
            g = dz.matmul_t(&layer.weight)?;
        }
        Ok((grads, g))
    }
}

impl Parameters for Mlp {
    fn visit<'a>(&'a self, f: &mut dyn FnMut(&str, &'a Matrix)) {
        for (i, l) in self.layers.iter().enumerate() {
            visit_prefixed(&format!("layer{i}"), l, f);
        }
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Matrix)) {
        for (i, l) in self.layers.iter_mut().enumerate() {
            visit_mut_prefixed(&format!("layer{i}"), l, f);
        }
    }
}
