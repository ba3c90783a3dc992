//! Feed-forward regression network with inverted dropout, manual backprop and Adam.

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng as _;

use crate::error::{Error, Result};
use crate::rng::{self, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative expressed through the pre-activation `z` and output `a`.
    fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - a * a,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            other => Err(format!("unknown activation `{other}` (expected relu or tanh)")),
        }
    }
}

/// Architecture of a regression network: `[F, h1, ..., 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSpec {
    pub layer_sizes: Vec<usize>,
    pub dropout_rate: f64,
    pub activation: Activation,
    pub weight_init_scale: f64,
}

impl NetworkSpec {
    pub fn new(layer_sizes: Vec<usize>, dropout_rate: f64, activation: Activation) -> Result<Self> {
        let spec = NetworkSpec {
            layer_sizes,
            dropout_rate,
            activation,
            weight_init_scale: 1.0,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.layer_sizes.len() < 2 {
            return bad("network needs at least an input and an output layer".into());
        }
        if self.layer_sizes.contains(&0) {
            return bad("layer sizes must be positive".into());
        }
        if *self.layer_sizes.last().unwrap() != 1 {
            return bad("output layer must have size 1".into());
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return bad(format!("dropout_rate must be in [0,1), got {}", self.dropout_rate));
        }
        if !(self.weight_init_scale > 0.0) {
            return bad("weight_init_scale must be positive".into());
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn keep_prob(&self) -> f64 {
        1.0 - self.dropout_rate
    }

    /// Sizes of the hidden layers (the ones dropout applies to).
    pub fn hidden_sizes(&self) -> &[usize] {
        &self.layer_sizes[1..self.layer_sizes.len() - 1]
    }
}

/// Dense layer; `weights` is row-major `outputs x inputs`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Layer {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Layer {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }

    fn affine(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(self.weights.chunks_exact(self.inputs).zip(&self.bias).map(
            |(row, b)| row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + b,
        ));
    }
}

/// Weights and biases for every layer. Also used as the gradient container.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    pub layers: Vec<Layer>,
}

impl NetworkParams {
    pub fn zeros(spec: &NetworkSpec) -> Self {
        NetworkParams {
            layers: spec
                .layer_sizes
                .windows(2)
                .map(|w| Layer::zeros(w[0], w[1]))
                .collect(),
        }
    }

    pub fn matches(&self, spec: &NetworkSpec) -> bool {
        self.layers.len() + 1 == spec.layer_sizes.len()
            && self
                .layers
                .iter()
                .zip(spec.layer_sizes.windows(2))
                .all(|(l, w)| {
                    l.inputs == w[0]
                        && l.outputs == w[1]
                        && l.weights.len() == w[0] * w[1]
                        && l.bias.len() == w[1]
                })
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    pub fn values(&self) -> impl Iterator<Item = &f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.bias.iter()))
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weights.iter_mut().chain(l.bias.iter_mut()))
    }

    pub fn all_finite(&self) -> bool {
        self.values().all(|v| v.is_finite())
    }

    fn fill(&mut self, v: f64) {
        self.values_mut().for_each(|x| *x = v);
    }

    /// Text checkpoint: a `layers N` line, then per layer `inputs outputs`
    /// followed by one line of row-major weights and one line of biases.
    pub fn to_checkpoint(&self) -> String {
        let mut out = format!("layers {}\n", self.layers.len());
        for l in &self.layers {
            let _ = writeln!(out, "{} {}", l.inputs, l.outputs);
            let join = |v: &[f64]| {
                v.iter()
                    .map(|x| format!("{x:e}"))
                    .collect::<Vec<_>>()
                    .join(" ")
            };
            let _ = writeln!(out, "{}", join(&l.weights));
            let _ = writeln!(out, "{}", join(&l.bias));
        }
        out
    }

    pub fn from_checkpoint(text: &str) -> Result<Self> {
        let bad = |m: &str| Error::InvalidArgument(format!("malformed checkpoint: {m}"));
        let mut lines = text.lines();
        let count: usize = lines
            .next()
            .and_then(|l| l.strip_prefix("layers "))
            .and_then(|n| n.trim().parse().ok())
            .ok_or_else(|| bad("missing `layers N` header"))?;
        let parse_vec = |line: Option<&str>, len: usize| -> Result<Vec<f64>> {
            let v: Vec<f64> = line
                .ok_or_else(|| bad("truncated"))?
                .split_whitespace()
                .map(|t| t.parse::<f64>().map_err(|_| bad("bad number")))
                .collect::<Result<_>>()?;
            if v.len() != len {
                return Err(bad("wrong value count"));
            }
            Ok(v)
        };
        let mut layers = Vec::with_capacity(count);
        for _ in 0..count {
            let dims: Vec<usize> = lines
                .next()
                .ok_or_else(|| bad("truncated"))?
                .split_whitespace()
                .map(|t| t.parse().map_err(|_| bad("bad shape")))
                .collect::<Result<_>>()?;
            let [inputs, outputs] = dims[..] else {
                return Err(bad("shape line needs two integers"));
            };
            let weights = parse_vec(lines.next(), inputs * outputs)?;
            let bias = parse_vec(lines.next(), outputs)?;
            layers.push(Layer {
                inputs,
                outputs,
                weights,
                bias,
            });
        }
        Ok(NetworkParams { layers })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_checkpoint()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_checkpoint(&text)
    }
}

/// Weights uniform in `[-s, s]`, `s = weight_init_scale * sqrt(1 / fan_in)`; biases zero.
pub fn init_params(spec: &NetworkSpec, rng_seed: u64) -> NetworkParams {
    let mut rng = rng::rng(rng_seed);
    let mut params = NetworkParams::zeros(spec);
    for layer in &mut params.layers {
        let s = spec.weight_init_scale * (1.0 / layer.inputs as f64).sqrt();
        for w in &mut layer.weights {
            *w = rng.random_range(-s..=s);
        }
    }
    params
}

/// Keep/drop flags for each hidden unit.
#[derive(Debug, Clone, PartialEq)]
pub struct DropoutMask {
    pub layers: Vec<Vec<bool>>,
}

impl DropoutMask {
    pub fn all_kept(spec: &NetworkSpec) -> Self {
        DropoutMask {
            layers: spec.hidden_sizes().iter().map(|&n| vec![true; n]).collect(),
        }
    }

    /// Each unit kept independently with probability `1 - dropout_rate`.
    pub fn sample(spec: &NetworkSpec, rng: &mut Rng) -> Self {
        let keep = spec.keep_prob();
        DropoutMask {
            layers: spec
                .hidden_sizes()
                .iter()
                .map(|&n| (0..n).map(|_| rng.random::<f64>() < keep).collect())
                .collect(),
        }
    }

    fn matches(&self, spec: &NetworkSpec) -> bool {
        self.layers.len() == spec.hidden_sizes().len()
            && self
                .layers
                .iter()
                .zip(spec.hidden_sizes())
                .all(|(m, &n)| m.len() == n)
    }
}

/// Activations recorded by [`forward`] for use in [`backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// Input to each layer (`inputs[0]` is the feature vector).
    inputs: Vec<Vec<f64>>,
    /// Pre-activation of each hidden layer.
    pre: Vec<Vec<f64>>,
    /// Post-activation (pre-dropout) of each hidden layer.
    post: Vec<Vec<f64>>,
    mask: Option<DropoutMask>,
    pub output: f64,
}

fn check_input(params: &NetworkParams, spec: &NetworkSpec, x: &[f64]) -> Result<()> {
    if !params.matches(spec) {
        return Err(Error::InvalidArgument(
            "parameters do not match network spec".into(),
        ));
    }
    if x.len() != spec.input_dim() {
        return Err(Error::Shape {
            expected: spec.input_dim(),
            actual: x.len(),
        });
    }
    Ok(())
}

/// Forward pass recording activations. A mask applies inverted dropout to hidden layers.
pub fn forward(
    params: &NetworkParams,
    spec: &NetworkSpec,
    x: &[f64],
    mask: Option<&DropoutMask>,
) -> Result<ForwardCache> {
    check_input(params, spec, x)?;
    if let Some(m) = mask {
        if !m.matches(spec) {
            return Err(Error::InvalidArgument("dropout mask shape mismatch".into()));
        }
    }
    let inv_keep = 1.0 / spec.keep_prob();
    let n_hidden = params.layers.len() - 1;
    let mut cache = ForwardCache {
        inputs: Vec::with_capacity(params.layers.len()),
        pre: Vec::with_capacity(n_hidden),
        post: Vec::with_capacity(n_hidden),
        mask: mask.cloned(),
        output: 0.0,
    };
    let mut current = x.to_vec();
    for (li, layer) in params.layers.iter().enumerate() {
        let mut z = Vec::with_capacity(layer.outputs);
        layer.affine(&current, &mut z);
        cache.inputs.push(current);
        if li == n_hidden {
            cache.output = z[0];
            break;
        }
        let a: Vec<f64> = z.iter().map(|&v| spec.activation.apply(v)).collect();
        let next = match mask {
            Some(m) => a
                .iter()
                .zip(&m.layers[li])
                .map(|(&v, &keep)| if keep { v * inv_keep } else { 0.0 })
                .collect(),
            None => a.clone(),
        };
        cache.pre.push(z);
        cache.post.push(a);
        current = next;
    }
    Ok(cache)
}

/// Reusable buffers for allocation-light inference.
#[derive(Debug, Default)]
pub struct Scratch {
    a: Vec<f64>,
    b: Vec<f64>,
}

/// Inference-only forward pass. With `mask` the pass is stochastic-equivalent to training.
pub fn predict_with(
    params: &NetworkParams,
    spec: &NetworkSpec,
    x: &[f64],
    mask: Option<&DropoutMask>,
    scratch: &mut Scratch,
) -> f64 {
    debug_assert_eq!(x.len(), spec.input_dim());
    let inv_keep = 1.0 / spec.keep_prob();
    let n_hidden = params.layers.len() - 1;
    let Scratch { a, b } = scratch;
    a.clear();
    a.extend_from_slice(x);
    for (li, layer) in params.layers.iter().enumerate() {
        layer.affine(a, b);
        if li == n_hidden {
            return b[0];
        }
        for (j, v) in b.iter_mut().enumerate() {
            let act = spec.activation.apply(*v);
            *v = match mask {
                Some(m) if !m.layers[li][j] => 0.0,
                Some(_) => act * inv_keep,
                None => act,
            };
        }
        std::mem::swap(a, b);
    }
    unreachable!("network has an output layer")
}

/// Deterministic (maskless) prediction.
pub fn predict(params: &NetworkParams, spec: &NetworkSpec, x: &[f64]) -> f64 {
    predict_with(params, spec, x, None, &mut Scratch::default())
}

/// Gradient of `(prediction - target)^2` with respect to every parameter.
pub fn backward(params: &NetworkParams, spec: &NetworkSpec, cache: &ForwardCache, target: f64) -> NetworkParams {
    let mut grads = NetworkParams::zeros(spec);
    accumulate_gradient(params, spec, cache, target, 1.0, &mut grads);
    grads
}

fn accumulate_gradient(
    params: &NetworkParams,
    spec: &NetworkSpec,
    cache: &ForwardCache,
    target: f64,
    scale: f64,
    grads: &mut NetworkParams,
) {
    let inv_keep = 1.0 / spec.keep_prob();
    let mut delta = vec![2.0 * (cache.output - target) * scale];
    for li in (0..params.layers.len()).rev() {
        let layer = &params.layers[li];
        let input = &cache.inputs[li];
        let g = &mut grads.layers[li];
        for (o, d) in delta.iter().enumerate() {
            g.bias[o] += d;
            let row = &mut g.weights[o * layer.inputs..(o + 1) * layer.inputs];
            for (gw, x) in row.iter_mut().zip(input) {
                *gw += d * x;
            }
        }
        if li == 0 {
            break;
        }
        // Back through the hidden layer that produced `input`.
        let h = li - 1;
        let mut next = vec![0.0; layer.inputs];
        for (o, d) in delta.iter().enumerate() {
            let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
            for (n, w) in next.iter_mut().zip(row) {
                *n += d * w;
            }
        }
        for (j, n) in next.iter_mut().enumerate() {
            let dropout = match &cache.mask {
                Some(m) if !m.layers[h][j] => 0.0,
                Some(_) => inv_keep,
                None => 1.0,
            };
            *n *= dropout * spec.activation.derivative(cache.pre[h][j], cache.post[h][j]);
        }
        delta = next;
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamHyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        AdamHyper {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates plus step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: NetworkParams,
    pub v: NetworkParams,
    pub t: u64,
}

impl AdamState {
    pub fn new(spec: &NetworkSpec) -> Self {
        AdamState {
            m: NetworkParams::zeros(spec),
            v: NetworkParams::zeros(spec),
            t: 0,
        }
    }
}

/// One bias-corrected Adam update.
pub fn adam_step(
    params: &mut NetworkParams,
    grads: &NetworkParams,
    state: &mut AdamState,
    hyper: &AdamHyper,
) {
    state.t += 1;
    let t = state.t as i32;
    let c1 = 1.0 - hyper.beta1.powi(t);
    let c2 = 1.0 - hyper.beta2.powi(t);
    for (((p, g), m), v) in params
        .values_mut()
        .zip(grads.values())
        .zip(state.m.values_mut())
        .zip(state.v.values_mut())
    {
        *m = hyper.beta1 * *m + (1.0 - hyper.beta1) * g;
        *v = hyper.beta2 * *v + (1.0 - hyper.beta2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *p -= hyper.lr * m_hat / (v_hat.sqrt() + hyper.eps);
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainOptions {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamHyper,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            epochs: 100,
            batch_size: 64,
            adam: AdamHyper::default(),
        }
    }
}

/// Mean squared error of maskless predictions.
pub fn mse(params: &NetworkParams, spec: &NetworkSpec, xs: &[&[f64]], ys: &[f64]) -> f64 {
    let mut scratch = Scratch::default();
    let sum: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| {
            let e = predict_with(params, spec, x, None, &mut scratch) - y;
            e * e
        })
        .sum();
    sum / xs.len().max(1) as f64
}

/// Mini-batch Adam on squared error with a fresh dropout mask per example.
///
/// Returns the maskless MSE on the training data after the last epoch.
pub fn train(
    params: &mut NetworkParams,
    spec: &NetworkSpec,
    xs: &[&[f64]],
    ys: &[f64],
    opts: &TrainOptions,
    rng_seed: u64,
    state: &mut AdamState,
) -> Result<f64> {
    if xs.is_empty() {
        return Err(Error::Empty("training set"));
    }
    if xs.len() != ys.len() {
        return Err(Error::Shape {
            expected: xs.len(),
            actual: ys.len(),
        });
    }
    if opts.batch_size == 0 {
        return Err(Error::InvalidArgument("batch_size must be positive".into()));
    }
    for x in xs {
        check_input(params, spec, x)?;
    }
    let mut rng = rng::rng(rng_seed);
    let use_dropout = spec.dropout_rate > 0.0;
    let mut order: Vec<usize> = (0..xs.len()).collect();
    let mut grads = NetworkParams::zeros(spec);
    for _ in 0..opts.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(opts.batch_size) {
            grads.fill(0.0);
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                let mask = use_dropout.then(|| DropoutMask::sample(spec, &mut rng));
                let cache = forward(params, spec, xs[i], mask.as_ref())?;
                accumulate_gradient(params, spec, &cache, ys[i], scale, &mut grads);
            }
            adam_step(params, &grads, state, &opts.adam);
        }
    }
    Ok(mse(params, spec, xs, ys))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn linear(w: f64, b: f64) -> (NetworkSpec, NetworkParams) {
        let spec = NetworkSpec::new(vec![1, 1], 0.0, Activation::Relu).unwrap();
        let params = NetworkParams {
            layers: vec![Layer {
                inputs: 1,
                outputs: 1,
                weights: vec![w],
                bias: vec![b],
            }],
        };
        (spec, params)
    }

    #[test]
    fn spec_validation() {
        assert!(NetworkSpec::new(vec![2, 3, 1], 0.2, Activation::Relu).is_ok());
        assert!(NetworkSpec::new(vec![2, 3, 2], 0.2, Activation::Relu).is_err());
        assert!(NetworkSpec::new(vec![2, 0, 1], 0.2, Activation::Relu).is_err());
        assert!(NetworkSpec::new(vec![2, 3, 1], 1.0, Activation::Relu).is_err());
        assert!(NetworkSpec::new(vec![1], 0.0, Activation::Relu).is_err());
    }

    #[test]
    fn init_is_deterministic_with_zero_biases() {
        let spec = NetworkSpec::new(vec![2, 3, 1], 0.0, Activation::Tanh).unwrap();
        let a = init_params(&spec, 7);
        assert_eq!(a, init_params(&spec, 7));
        assert_ne!(a, init_params(&spec, 8));
        assert_eq!(a.layers[0].weights.len(), 3 * 2);
        assert_eq!((a.layers[0].outputs, a.layers[0].inputs), (3, 2));
        assert_eq!((a.layers[1].outputs, a.layers[1].inputs), (1, 3));
        assert!(a.layers.iter().all(|l| l.bias.iter().all(|&b| b == 0.0)));
        let s = (1.0f64 / 2.0).sqrt();
        assert!(a.layers[0].weights.iter().all(|w| w.abs() <= s));
    }

    #[test]
    fn zero_weights_return_output_bias() {
        let spec = NetworkSpec::new(vec![3, 4, 1], 0.0, Activation::Relu).unwrap();
        let mut p = NetworkParams::zeros(&spec);
        p.layers[1].bias[0] = 3.0;
        assert_eq!(forward(&p, &spec, &[1.0, -2.0, 5.0], None).unwrap().output, 3.0);
    }

    #[test]
    fn single_linear_layer() {
        let (spec, p) = linear(2.0, 1.0);
        assert_eq!(forward(&p, &spec, &[3.0], None).unwrap().output, 7.0);
        assert_eq!(predict(&p, &spec, &[3.0]), 7.0);
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let (spec, p) = linear(2.0, 1.0);
        assert!(matches!(
            forward(&p, &spec, &[1.0, 2.0], None),
            Err(Error::Shape { .. })
        ));
    }

    #[test]
    fn masked_two_unit_network_by_hand() {
        // x=[1]; hidden z = [2, -1] -> relu [2, 0] ; out = 3*h1 + 4*h2 + 0.5
        let spec = NetworkSpec::new(vec![1, 2, 1], 0.5, Activation::Relu).unwrap();
        let p = NetworkParams {
            layers: vec![
                Layer { inputs: 1, outputs: 2, weights: vec![2.0, -1.0], bias: vec![0.0, 0.0] },
                Layer { inputs: 2, outputs: 1, weights: vec![3.0, 4.0], bias: vec![0.5] },
            ],
        };
        let unmasked = forward(&p, &spec, &[1.0], None).unwrap().output;
        assert_eq!(unmasked, 6.5);
        // All kept: activations scaled by 1/0.5.
        let all = DropoutMask::all_kept(&spec);
        assert_eq!(forward(&p, &spec, &[1.0], Some(&all)).unwrap().output, 12.5);
        let drop_first = DropoutMask { layers: vec![vec![false, true]] };
        assert_eq!(forward(&p, &spec, &[1.0], Some(&drop_first)).unwrap().output, 0.5);
        let mut scratch = Scratch::default();
        assert_eq!(predict_with(&p, &spec, &[1.0], Some(&all), &mut scratch), 12.5);
    }

    #[test]
    fn gradient_zero_at_zero_loss() {
        let (spec, p) = linear(2.0, 1.0);
        let cache = forward(&p, &spec, &[3.0], None).unwrap();
        let g = backward(&p, &spec, &cache, 7.0);
        assert!(g.values().all(|&v| v == 0.0));
    }

    #[test]
    fn gradient_by_hand() {
        let (spec, p) = linear(1.0, 0.0);
        let cache = forward(&p, &spec, &[2.0], None).unwrap();
        let g = backward(&p, &spec, &cache, 0.0);
        assert_eq!(g.layers[0].weights[0], 8.0);
        assert_eq!(g.layers[0].bias[0], 4.0);
    }

    #[test]
    fn adam_zero_gradient_leaves_params() {
        let spec = NetworkSpec::new(vec![2, 3, 1], 0.0, Activation::Relu).unwrap();
        let mut p = init_params(&spec, 1);
        let before = p.clone();
        let mut st = AdamState::new(&spec);
        adam_step(&mut p, &NetworkParams::zeros(&spec), &mut st, &AdamHyper::default());
        assert_eq!(p, before);
    }

    #[test]
    fn adam_first_step_closed_form() {
        // m_hat = g, v_hat = g^2 after bias correction, so delta = -lr * g / (|g| + eps).
        let (spec, mut p) = linear(0.0, 0.0);
        let mut g = NetworkParams::zeros(&spec);
        g.layers[0].weights[0] = 1.0;
        let hyper = AdamHyper { lr: 0.01, ..AdamHyper::default() };
        let mut st = AdamState::new(&spec);
        adam_step(&mut p, &g, &mut st, &hyper);
        let expected = -0.01 * 1.0 / (1.0 + 1e-8);
        assert_relative_eq!(p.layers[0].weights[0], expected, max_relative = 1e-12);
        assert_eq!(p.layers[0].bias[0], 0.0);
        assert_eq!(st.t, 1);
    }

    #[test]
    fn adam_is_deterministic() {
        let spec = NetworkSpec::new(vec![2, 3, 1], 0.0, Activation::Relu).unwrap();
        let p0 = init_params(&spec, 3);
        let g = init_params(&spec, 4);
        let run = || {
            let mut p = p0.clone();
            let mut st = AdamState::new(&spec);
            adam_step(&mut p, &g, &mut st, &AdamHyper::default());
            (p, st)
        };
        assert_eq!(run(), run());
    }

    fn toy_line() -> (Vec<Vec<f64>>, Vec<f64>) {
        let xs: Vec<Vec<f64>> = (0..50).map(|i| vec![-1.0 + 2.0 * i as f64 / 49.0]).collect();
        let ys = xs.iter().map(|x| 2.0 * x[0]).collect();
        (xs, ys)
    }

    #[test]
    fn train_fits_realizable_line() {
        let (xs, ys) = toy_line();
        let xr: Vec<&[f64]> = xs.iter().map(Vec::as_slice).collect();
        let spec = NetworkSpec::new(vec![1, 16, 1], 0.0, Activation::Tanh).unwrap();
        let mut p = init_params(&spec, 0);
        let opts = TrainOptions {
            epochs: 200,
            batch_size: 10,
            adam: AdamHyper { lr: 0.01, ..AdamHyper::default() },
        };
        let mut st = AdamState::new(&spec);
        let loss = train(&mut p, &spec, &xr, &ys, &opts, 1, &mut st).unwrap();
        assert!(loss < 1e-3, "loss {loss}");
    }

    #[test]
    fn train_zero_epochs_and_determinism() {
        let (xs, ys) = toy_line();
        let xr: Vec<&[f64]> = xs.iter().map(Vec::as_slice).collect();
        let spec = NetworkSpec::new(vec![1, 8, 1], 0.3, Activation::Relu).unwrap();
        let p0 = init_params(&spec, 2);

        let mut p = p0.clone();
        let zero = TrainOptions { epochs: 0, ..TrainOptions::default() };
        train(&mut p, &spec, &xr, &ys, &zero, 5, &mut AdamState::new(&spec)).unwrap();
        assert_eq!(p, p0);

        let opts = TrainOptions { epochs: 5, batch_size: 8, ..TrainOptions::default() };
        let run = || {
            let mut p = p0.clone();
            train(&mut p, &spec, &xr, &ys, &opts, 9, &mut AdamState::new(&spec)).unwrap();
            p
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn train_rejects_empty() {
        let spec = NetworkSpec::new(vec![1, 2, 1], 0.0, Activation::Relu).unwrap();
        let mut p = init_params(&spec, 0);
        let r = train(&mut p, &spec, &[], &[], &TrainOptions::default(), 0, &mut AdamState::new(&spec));
        assert!(matches!(r, Err(Error::Empty(_))));
    }

    #[test]
    fn checkpoint_round_trip() {
        let spec = NetworkSpec::new(vec![3, 4, 1], 0.0, Activation::Tanh).unwrap();
        let p = init_params(&spec, 5);
        let back = NetworkParams::from_checkpoint(&p.to_checkpoint()).unwrap();
        assert_eq!(p, back);
        assert!(NetworkParams::from_checkpoint("layers 1\n2 1\n1.0\n0\n").is_err());
    }
}
