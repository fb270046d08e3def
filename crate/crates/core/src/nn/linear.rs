use rand::Rng;

use super::init_uniform;
use crate::error::{Error, Result};
use crate::numerics::{Graph, Parameters, Tensor, Var};

/// Affine layer `y = x·W + b` with `W` stored `in × out`.
#[derive(Clone, Debug, PartialEq)]
pub struct Linear {
    pub weight: Tensor,
    pub bias: Tensor,
}

#[derive(Clone, Copy, Debug)]
pub struct LinearVars {
    pub weight: Var,
    pub bias: Var,
}

impl Linear {
    pub fn new(input: usize, output: usize, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / (input as f64).sqrt();
        Self {
            weight: Tensor::param(vec![input, output], init_uniform(rng, input * output, bound))
                .expect("shape matches"),
            bias: Tensor::param(vec![output], vec![0.0; output]).expect("shape matches"),
        }
    }

    pub fn from_parts(weight: Tensor, bias: Tensor) -> Result<Self> {
        match (weight.shape(), bias.shape()) {
            ([_, out], [b]) if out == b => Ok(Self { weight, bias }),
            (w, b) => Err(Error::Shape(format!("linear weight {w:?} with bias {b:?}"))),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn output_dim(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn bind<'p>(&'p self, g: &mut Graph<'p>) -> LinearVars {
        LinearVars {
            weight: g.param(&self.weight),
            bias: g.param(&self.bias),
        }
    }

    pub fn forward(&self, g: &mut Graph<'_>, vars: &LinearVars, x: Var) -> Result<Var> {
        let width = g.shape(x).last().copied().unwrap_or(0);
        if width != self.input_dim() {
            return Err(Error::Shape(format!(
                "linear expects width {}, got {width}",
                self.input_dim()
            )));
        }
        let xw = g.matmul(x, vars.weight)?;
        g.add_bias(xw, vars.bias)
    }
}

impl LinearVars {
    pub fn vars(&self) -> Vec<Var> {
        vec![self.weight, self.bias]
    }
}

impl Parameters for Linear {
    fn named_params(&self) -> Vec<(String, &Tensor)> {
        vec![("weight".into(), &self.weight), ("bias".into(), &self.bias)]
    }

    fn named_params_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        vec![("weight".into(), &mut self.weight), ("bias".into(), &mut self.bias)]
    }
}

/// Affine layers with ReLU between hidden layers and none after the last.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Linear>,
}

impl Mlp {
    /// `dims = [input, hidden.., output]`.
    pub fn new(dims: &[usize], rng: &mut impl Rng) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::Shape("an MLP needs at least input and output widths".into()));
        }
        Ok(Self {
            layers: dims.windows(2).map(|w| Linear::new(w[0], w[1], rng)).collect(),
        })
    }

    pub fn from_layers(layers: Vec<Linear>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Shape("an MLP needs at least one layer".into()));
        }
        for pair in layers.windows(2) {
            if pair[0].output_dim() != pair[1].input_dim() {
                return Err(Error::Shape(format!(
                    "layer widths do not chain: {} -> {}",
                    pair[0].output_dim(),
                    pair[1].input_dim()
                )));
            }
        }
        Ok(Self { layers })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].output_dim()
    }

    pub fn bind<'p>(&'p self, g: &mut Graph<'p>) -> Vec<LinearVars> {
        self.layers.iter().map(|l| l.bind(g)).collect()
    }

    pub fn forward(&self, g: &mut Graph<'_>, vars: &[LinearVars], x: Var) -> Result<Var> {
        let last = self.layers.len() - 1;
        let mut h = x;
        for (i, (layer, v)) in self.layers.iter().zip(vars).enumerate() {
            h = layer.forward(g, v, h)?;
            if i < last {
                h = g.relu(h);
            }
        }
        Ok(h)
    }

    /// Evaluates a single input row without building a graph.
    pub fn eval_row(&self, input: &[f64]) -> Result<Vec<f64>> {
        if input.len() != self.input_dim() {
            return Err(Error::Shape(format!(
                "MLP expects width {}, got {}",
                self.input_dim(),
                input.len()
            )));
        }
        let x = Tensor::new(vec![1, input.len()], input.to_vec())?;
        let mut g = Graph::new();
        let vars = self.bind(&mut g);
        let xv = g.constant(x);
        let out = self.forward(&mut g, &vars, xv)?;
        Ok(g.value(out).to_vec())
    }
}

impl Parameters for Mlp {
    fn named_params(&self) -> Vec<(String, &Tensor)> {
        self.layers
            .iter()
            .enumerate()
            .flat_map(|(i, l)| crate::numerics::scoped(&format!("layer{i}"), l.named_params()))
            .collect()
    }

    fn named_params_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        self.layers
            .iter_mut()
            .enumerate()
            .flat_map(|(i, l)| crate::numerics::scoped(&format!("layer{i}"), l.named_params_mut()))
            .collect()
    }
}
