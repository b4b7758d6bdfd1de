//! Fully connected ReLU regressor m(h(E); θ) trained with full-batch gradient descent on MSE.

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::embed::EmbeddingVector;
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainSpec {
    pub epochs: usize,
    pub learning_rate: f64,
    /// Mini-batch size; `None` trains full-batch.
    pub batch_size: Option<usize>,
    pub weight_decay: f64,
    /// Seed for fresh initializations; the EASE loop overrides it with the run seed.
    pub init_seed: u64,
    /// Continue from the previous iteration's parameters instead of re-initializing.
    pub warm_start: bool,
}

impl Default for TrainSpec {
    fn default() -> Self {
        Self {
            epochs: 300,
            learning_rate: 1e-2,
            batch_size: None,
            weight_decay: 0.0,
            init_seed: 0,
            warm_start: false,
        }
    }
}

impl TrainSpec {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be positive".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        if self.batch_size == Some(0) {
            return Err(Error::Config("batch size must be positive".into()));
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return Err(Error::Config("weight decay must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    /// `out × in`
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

/// Network parameters: ReLU hidden layers followed by one linear output unit.
#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateParams {
    layers: Vec<Dense>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: SurrogateParams,
    /// MSE on the training set after the last epoch.
    pub mse: f64,
}

struct Activations {
    /// Pre-activations per layer.
    pre: Vec<Array2<f64>>,
    /// Inputs to each layer; `inputs[0]` is the data, the last entry feeds the output layer.
    inputs: Vec<Array2<f64>>,
}

fn relu(x: &Array2<f64>) -> Array2<f64> {
    x.mapv(|v| v.max(0.0))
}

impl SurrogateParams {
    /// He-uniform hidden layers, Glorot-uniform output layer, zero biases.
    pub fn init(input_dim: usize, hidden: &[usize], seed: u64) -> Result<Self> {
        if input_dim == 0 || hidden.contains(&0) {
            return Err(Error::Config("layer widths must be positive".into()));
        }
        let mut rng = rng::stream(seed, rng::TRAIN, 0);
        let mut sizes = vec![input_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(1);
        let last = sizes.len() - 2;
        let layers = sizes
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let bound = if i == last {
                    (6.0 / (fan_in + fan_out) as f64).sqrt()
                } else {
                    (6.0 / fan_in as f64).sqrt()
                };
                let weights =
                    Array2::from_shape_fn((fan_out, fan_in), |_| rng.gen_range(-bound..bound));
                Dense {
                    weights,
                    bias: Array1::zeros(fan_out),
                }
            })
            .collect();
        Ok(Self { layers })
    }

    /// Builds parameters from explicit layers; the last layer must have one output.
    pub fn from_layers(layers: Vec<Dense>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Config("network needs at least one layer".into()));
        }
        for pair in layers.windows(2) {
            if pair[0].weights.nrows() != pair[1].weights.ncols() {
                return Err(Error::DimensionMismatch {
                    expected: pair[0].weights.nrows(),
                    got: pair[1].weights.ncols(),
                });
            }
        }
        for l in &layers {
            if l.bias.len() != l.weights.nrows() {
                return Err(Error::DimensionMismatch {
                    expected: l.weights.nrows(),
                    got: l.bias.len(),
                });
            }
            if l.weights.iter().chain(l.bias.iter()).any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("network parameter".into()));
            }
        }
        let out = layers.last().unwrap().weights.nrows();
        if out != 1 {
            return Err(Error::DimensionMismatch {
                expected: 1,
                got: out,
            });
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weights.ncols()
    }

    /// Width of the input to the output layer; feature dim is this plus one.
    pub fn last_hidden_width(&self) -> usize {
        self.layers.last().unwrap().weights.ncols()
    }

    pub fn feature_dim(&self) -> usize {
        self.last_hidden_width() + 1
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        Ok(())
    }

    fn forward_batch(&self, x: Array2<f64>) -> (Array2<f64>, Activations) {
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut current = x;
        for (i, layer) in self.layers.iter().enumerate() {
            let z = current.dot(&layer.weights.t()) + &layer.bias;
            inputs.push(current);
            if i + 1 == self.layers.len() {
                pre.push(z.clone());
                return (z, Activations { pre, inputs });
            }
            current = relu(&z);
            pre.push(z);
        }
        unreachable!("network has at least one layer")
    }

    /// Forward pass for one input; returns the scalar output and the last hidden activation.
    fn forward_one(&self, x: &[f64]) -> (f64, Vec<f64>) {
        let mut current: Array1<f64> = ArrayView1::from(x).to_owned();
        let n = self.layers.len();
        for layer in &self.layers[..n - 1] {
            current = (layer.weights.dot(&current) + &layer.bias).mapv(|v| v.max(0.0));
        }
        let out = self.layers[n - 1].weights.row(0).dot(&current) + self.layers[n - 1].bias[0];
        (out, current.to_vec())
    }

    pub fn predict(&self, embedding: &EmbeddingVector) -> Result<f64> {
        self.predict_raw(embedding.values())
    }

    pub fn predict_raw(&self, x: &[f64]) -> Result<f64> {
        self.check_input(x)?;
        Ok(self.forward_one(x).0)
    }

    /// Gradient of the output with respect to the output layer's weights and bias:
    /// `(last hidden activation, 1)`.
    pub fn gradient_features(&self, embedding: &EmbeddingVector) -> Result<Vec<f64>> {
        self.gradient_features_raw(embedding.values())
    }

    pub fn gradient_features_raw(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let (_, mut hidden) = self.forward_one(x);
        hidden.push(1.0);
        Ok(hidden)
    }

    /// Prediction and gradient features from a single forward pass.
    pub fn forward_features(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        self.check_input(x)?;
        let (out, mut hidden) = self.forward_one(x);
        hidden.push(1.0);
        Ok((out, hidden))
    }

    /// Flattened parameters, layer by layer, weights (row-major) before bias.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for l in &self.layers {
            out.extend(l.weights.iter().copied());
            out.extend(l.bias.iter().copied());
        }
        out
    }

    /// Inverse of [`SurrogateParams::flatten`] for a network of the same shape.
    pub fn with_flat(&self, flat: &[f64]) -> Result<Self> {
        if flat.len() != self.num_params() {
            return Err(Error::DimensionMismatch {
                expected: self.num_params(),
                got: flat.len(),
            });
        }
        let mut out = self.clone();
        let mut it = flat.iter().copied();
        for l in &mut out.layers {
            l.weights.iter_mut().for_each(|w| *w = it.next().unwrap());
            l.bias.iter_mut().for_each(|b| *b = it.next().unwrap());
        }
        Ok(out)
    }

    /// Gradient of the scalar output with respect to every parameter, in
    /// [`SurrogateParams::flatten`] order.
    pub fn param_gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let input = Array2::from_shape_vec((1, x.len()), x.to_vec()).expect("row vector");
        let (_, acts) = self.forward_batch(input);
        let grads = self.backward(&acts, Array2::ones((1, 1)));
        let mut out = Vec::with_capacity(self.num_params());
        for (gw, gb) in grads {
            out.extend(gw.iter().copied());
            out.extend(gb.iter().copied());
        }
        Ok(out)
    }

    /// Back-propagates `d_out` (n × 1) and returns `(dW, db)` per layer.
    fn backward(&self, acts: &Activations, d_out: Array2<f64>) -> Vec<(Array2<f64>, Array1<f64>)> {
        let n = self.layers.len();
        let mut grads = vec![None; n];
        let mut delta = d_out;
        for i in (0..n).rev() {
            let gw = delta.t().dot(&acts.inputs[i]);
            let gb = delta.sum_axis(Axis(0));
            if i > 0 {
                let mut upstream = delta.dot(&self.layers[i].weights);
                let mask = &acts.pre[i - 1];
                upstream.zip_mut_with(mask, |d, &z| {
                    if z <= 0.0 {
                        *d = 0.0;
                    }
                });
                delta = upstream;
            }
            grads[i] = Some((gw, gb));
        }
        grads.into_iter().map(Option::unwrap).collect()
    }

    fn mse_on(&self, x: &Array2<f64>, y: &Array1<f64>) -> f64 {
        let (out, _) = self.forward_batch(x.clone());
        let r = &out.column(0) - y;
        r.dot(&r) / y.len() as f64
    }
}

fn stack(inputs: &[&[f64]]) -> Result<Array2<f64>> {
    let d = inputs[0].len();
    let mut flat = Vec::with_capacity(inputs.len() * d);
    for x in inputs {
        if x.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: x.len(),
            });
        }
        flat.extend_from_slice(x);
    }
    Ok(Array2::from_shape_vec((inputs.len(), d), flat).expect("consistent shape"))
}

/// Fits the network to `(inputs, targets)` by gradient descent on mean squared error.
///
/// Starts from `start` when given (warm start), otherwise from a fresh
/// initialization seeded by `spec.init_seed` with the output bias set to the
/// mean target. Deterministic.
pub fn train(
    inputs: &[&[f64]],
    targets: &[f64],
    hidden: &[usize],
    spec: &TrainSpec,
    start: Option<&SurrogateParams>,
) -> Result<TrainOutcome> {
    spec.validate()?;
    if inputs.is_empty() {
        return Err(Error::EmptyHistory);
    }
    if inputs.len() != targets.len() {
        return Err(Error::DimensionMismatch {
            expected: inputs.len(),
            got: targets.len(),
        });
    }
    let x = stack(inputs)?;
    let y = Array1::from_vec(targets.to_vec());
    let mut params = match start {
        Some(p) => {
            if p.input_dim() != x.ncols() {
                return Err(Error::DimensionMismatch {
                    expected: p.input_dim(),
                    got: x.ncols(),
                });
            }
            p.clone()
        }
        None => {
            // Start the output bias at the target mean so the hidden layers only fit residuals.
            let mut p = SurrogateParams::init(x.ncols(), hidden, spec.init_seed)?;
            let last = p.layers.len() - 1;
            p.layers[last].bias[0] = y.mean().unwrap_or(0.0);
            p
        }
    };

    let n = x.nrows();
    let batch = spec.batch_size.unwrap_or(n).min(n);
    let mut order: Vec<usize> = (0..n).collect();
    let mut shuffle_rng = rng::stream(spec.init_seed, "minibatch", 0);

    for epoch in 0..spec.epochs {
        if batch < n {
            use rand::seq::SliceRandom;
            order.shuffle(&mut shuffle_rng);
        }
        for chunk in order.chunks(batch) {
            let (xb, yb) = if batch == n {
                (x.clone(), y.clone())
            } else {
                (x.select(Axis(0), chunk), y.select(Axis(0), chunk))
            };
            let m = xb.nrows() as f64;
            let (out, acts) = params.forward_batch(xb);
            let residual = &out.column(0) - &yb;
            let loss = residual.dot(&residual) / m;
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch });
            }
            let d_out = (residual * (2.0 / m)).insert_axis(Axis(1));
            let grads = params.backward(&acts, d_out);
            for (layer, (gw, gb)) in params.layers.iter_mut().zip(grads) {
                if spec.weight_decay > 0.0 {
                    let decay = layer.weights.mapv(|w| w * spec.weight_decay);
                    layer.weights.scaled_add(-spec.learning_rate, &decay);
                }
                layer.weights.scaled_add(-spec.learning_rate, &gw);
                layer.bias.scaled_add(-spec.learning_rate, &gb);
            }
        }
    }
    let mse = params.mse_on(&x, &y);
    if !mse.is_finite() {
        return Err(Error::Diverged { epoch: spec.epochs });
    }
    Ok(TrainOutcome { params, mse })
}
