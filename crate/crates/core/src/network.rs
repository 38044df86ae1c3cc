//! Dense feed-forward networks trained by backpropagation and Adam.
//!
//! Layers compute `z = W x + b`, `y = act(z)` with `W` stored `(out, in)` row-major.
//! The loss is mean squared error over the output vector. A [`FreezeMask`]
//! selects which layers the optimizer may touch; frozen layers keep both their
//! parameters and their Adam moments unchanged.

use serde::{Deserialize, Serialize};

use crate::numcore::{Matrix, SeededRng, Vector};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Linear,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Linear => z,
        }
    }

    #[inline]
    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Linear => 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LayerRepr")]
pub struct Layer {
    weights: Matrix,
    biases: Vector,
    activation: Activation,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LayerRepr {
    weights: Matrix,
    biases: Vector,
    activation: Activation,
}

impl TryFrom<LayerRepr> for Layer {
    type Error = Error;

    fn try_from(r: LayerRepr) -> Result<Self> {
        Layer::new(r.weights, r.biases, r.activation)
    }
}

impl Layer {
    pub fn new(weights: Matrix, biases: Vector, activation: Activation) -> Result<Self> {
        if weights.rows() != biases.len() {
            return Err(Error::dims(
                "Layer::new",
                format!("weights {}x{}", weights.rows(), weights.cols()),
                format!("biases of length {}", biases.len()),
            ));
        }
        Ok(Self {
            weights,
            biases,
            activation,
        })
    }

    pub fn weights(&self) -> &Matrix {
        &self.weights
    }

    pub fn biases(&self) -> &Vector {
        &self.biases
    }

    pub fn weights_mut(&mut self) -> &mut Matrix {
        &mut self.weights
    }

    pub fn biases_mut(&mut self) -> &mut Vector {
        &mut self.biases
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn input_dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.weights.rows()
    }
}

/// Ordered stack of dense layers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MlpRepr")]
pub struct Mlp {
    input_dim: usize,
    layers: Vec<Layer>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MlpRepr {
    input_dim: usize,
    layers: Vec<Layer>,
}

impl TryFrom<MlpRepr> for Mlp {
    type Error = Error;

    fn try_from(r: MlpRepr) -> Result<Self> {
        let net = Mlp::new(r.layers)?;
        if net.input_dim != r.input_dim {
            return Err(Error::dims(
                "Mlp",
                format!("declared input_dim {}", r.input_dim),
                format!("first layer input {}", net.input_dim),
            ));
        }
        Ok(net)
    }
}

/// Cached activations of one layer from a forward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerTrace {
    pub pre: Vector,
    pub post: Vector,
}

impl Mlp {
    pub fn new(layers: Vec<Layer>) -> Result<Self> {
        let first = layers
            .first()
            .ok_or_else(|| Error::InvalidArgument("network needs at least one layer".into()))?;
        let input_dim = first.input_dim();
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].output_dim() != pair[1].input_dim() {
                return Err(Error::dims(
                    "Mlp::new",
                    format!("layer {i} output {}", pair[0].output_dim()),
                    format!("layer {} input {}", i + 1, pair[1].input_dim()),
                ));
            }
        }
        Ok(Self { input_dim, layers })
    }

    /// Glorot-uniform weights in `±sqrt(6 / (fan_in + fan_out))`, zero biases.
    ///
    /// Weights are drawn layer by layer in row-major order from `rng`.
    pub fn init(widths: &[usize], activations: &[Activation], rng: &mut SeededRng) -> Result<Self> {
        if widths.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "need at least two widths, got {}",
                widths.len()
            )));
        }
        if activations.len() != widths.len() - 1 {
            return Err(Error::dims(
                "Mlp::init",
                format!("{} layers", widths.len() - 1),
                format!("{} activations", activations.len()),
            ));
        }
        if widths.contains(&0) {
            return Err(Error::InvalidArgument("layer widths must be positive".into()));
        }
        let layers = widths
            .windows(2)
            .zip(activations)
            .map(|(w, &act)| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let values = rng.uniform(-bound, bound, fan_in * fan_out)?;
                Layer::new(
                    Matrix::new(fan_out, fan_in, values)?,
                    Vector::zeros(fan_out),
                    act,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(layers)
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, Layer::output_dim)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    /// Input width followed by every layer's output width.
    pub fn widths(&self) -> Vec<usize> {
        std::iter::once(self.input_dim)
            .chain(self.layers.iter().map(Layer::output_dim))
            .collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.values().len() + l.biases.len())
            .sum()
    }

    fn check_input(&self, x: &Vector) -> Result<()> {
        if x.len() != self.input_dim {
            return Err(Error::dims(
                "forward",
                format!("network input {}", self.input_dim),
                format!("vector of length {}", x.len()),
            ));
        }
        Ok(())
    }

    pub fn forward(&self, x: &Vector) -> Result<Vector> {
        self.check_input(x)?;
        let mut current = x.as_slice().to_vec();
        for layer in &self.layers {
            let mut next = vec![0.0; layer.output_dim()];
            layer.weights.matvec_into(&current, &mut next);
            for (z, b) in next.iter_mut().zip(layer.biases.as_slice()) {
                *z = layer.activation.apply(*z + b);
            }
            current = next;
        }
        Vector::new(current)
    }

    pub fn forward_trace(&self, x: &Vector) -> Result<Vec<LayerTrace>> {
        self.check_input(x)?;
        let mut traces: Vec<LayerTrace> = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let input = traces.last().map_or(x, |t| &t.post);
            let mut pre = layer.weights.matvec(input)?;
            for (z, b) in pre.as_mut_slice().iter_mut().zip(layer.biases.as_slice()) {
                *z += b;
            }
            let post = pre
                .as_slice()
                .iter()
                .map(|&z| layer.activation.apply(z))
                .collect::<Vec<_>>();
            traces.push(LayerTrace {
                pre,
                post: Vector::new(post)?,
            });
        }
        Ok(traces)
    }

    /// Gradient of `mse_loss(forward(x), target)` with respect to every parameter.
    pub fn backward(&self, x: &Vector, target: &Vector) -> Result<Gradients> {
        self.check_input(x)?;
        self.check_target(target)?;
        let mut ws = Workspace::new(self);
        let mut grads = Gradients::zeros_like(self);
        ws.accumulate(self, x.as_slice(), target.as_slice(), &mut grads, 0);
        Ok(grads)
    }

    fn check_target(&self, target: &Vector) -> Result<()> {
        if target.len() != self.output_dim() {
            return Err(Error::dims(
                "backward",
                format!("network output {}", self.output_dim()),
                format!("target of length {}", target.len()),
            ));
        }
        Ok(())
    }
}

/// `(1/n) Σ (pred_i - target_i)²`.
pub fn mse_loss(pred: &Vector, target: &Vector) -> Result<f64> {
    if pred.len() != target.len() {
        return Err(Error::dims(
            "mse_loss",
            format!("prediction of length {}", pred.len()),
            format!("target of length {}", target.len()),
        ));
    }
    Ok(squared_error(pred.as_slice(), target.as_slice()))
}

fn squared_error(pred: &[f64], target: &[f64]) -> f64 {
    pred.iter()
        .zip(target)
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        / pred.len() as f64
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerGradients {
    pub weights: Matrix,
    pub biases: Vector,
}

/// One tensor per parameter, shaped like the network it was taken from.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGradients>,
}

impl Gradients {
    pub fn zeros_like(net: &Mlp) -> Self {
        Self {
            layers: net
                .layers
                .iter()
                .map(|l| LayerGradients {
                    weights: Matrix::zeros(l.output_dim(), l.input_dim()),
                    biases: Vector::zeros(l.output_dim()),
                })
                .collect(),
        }
    }

    fn check_shapes(&self, net: &Mlp, what: &'static str) -> Result<()> {
        let ok = self.layers.len() == net.layers.len()
            && self.layers.iter().zip(&net.layers).all(|(g, l)| {
                g.weights.shape() == l.weights.shape() && g.biases.len() == l.biases.len()
            });
        if ok {
            Ok(())
        } else {
            Err(Error::dims(what, format!("{:?}", self.widths()), format!("{:?}", net.widths())))
        }
    }

    fn widths(&self) -> Vec<(usize, usize)> {
        self.layers.iter().map(|g| g.weights.shape()).collect()
    }

    fn fill_zero(&mut self, from: usize) {
        for g in &mut self.layers[from..] {
            g.weights.values_mut().fill(0.0);
            g.biases.as_mut_slice().fill(0.0);
        }
    }

    fn scale(&mut self, from: usize, factor: f64) {
        for g in &mut self.layers[from..] {
            g.weights.values_mut().iter_mut().for_each(|x| *x *= factor);
            g.biases.as_mut_slice().iter_mut().for_each(|x| *x *= factor);
        }
    }
}

/// Reusable per-layer buffers for the training hot path.
struct Workspace {
    pre: Vec<Vec<f64>>,
    post: Vec<Vec<f64>>,
    delta: Vec<Vec<f64>>,
}

impl Workspace {
    fn new(net: &Mlp) -> Self {
        let sizes: Vec<usize> = net.layers.iter().map(Layer::output_dim).collect();
        let bufs = || sizes.iter().map(|&n| vec![0.0; n]).collect::<Vec<_>>();
        Self {
            pre: bufs(),
            post: bufs(),
            delta: bufs(),
        }
    }

    /// Adds this sample's gradient into `grads` for layers `lowest..` and
    /// returns the sample loss. Layers below `lowest` get no gradient.
    fn accumulate(
        &mut self,
        net: &Mlp,
        x: &[f64],
        target: &[f64],
        grads: &mut Gradients,
        lowest: usize,
    ) -> f64 {
        for (i, layer) in net.layers.iter().enumerate() {
            let (done, rest) = self.post.split_at_mut(i);
            let input = if i == 0 { x } else { &done[i - 1] };
            let pre = &mut self.pre[i];
            layer.weights.matvec_into(input, pre);
            for ((z, b), y) in pre.iter_mut().zip(layer.biases.as_slice()).zip(rest[0].iter_mut()) {
                *z += b;
                *y = layer.activation.apply(*z);
            }
        }

        let last = net.layers.len() - 1;
        let output = &self.post[last];
        let loss = squared_error(output, target);
        if lowest > last {
            return loss;
        }

        let scale = 2.0 / output.len() as f64;
        let act = net.layers[last].activation;
        for ((d, (y, t)), z) in self.delta[last]
            .iter_mut()
            .zip(output.iter().zip(target))
            .zip(&self.pre[last])
        {
            *d = scale * (y - t) * act.derivative(*z);
        }

        for i in (lowest..=last).rev() {
            let input = if i == 0 { x } else { &self.post[i - 1] };
            let delta = &self.delta[i];
            let g = &mut grads.layers[i];
            g.weights.add_outer(delta, input);
            for (gb, d) in g.biases.as_mut_slice().iter_mut().zip(delta) {
                *gb += d;
            }
            if i > lowest {
                let (below, here) = self.delta.split_at_mut(i);
                let prev = &mut below[i - 1];
                net.layers[i].weights.transpose_matvec_into(&here[0], prev);
                let act = net.layers[i - 1].activation;
                for (d, z) in prev.iter_mut().zip(&self.pre[i - 1]) {
                    *d *= act.derivative(*z);
                }
            }
        }
        loss
    }
}

/// Per-layer trainable flags.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FreezeMask {
    trainable: Vec<bool>,
}

impl FreezeMask {
    pub fn new(trainable: Vec<bool>) -> Self {
        Self { trainable }
    }

    pub fn all_trainable(layers: usize) -> Self {
        Self::new(vec![true; layers])
    }

    /// Freezes the first `frozen` layers of a `layers`-deep network.
    pub fn freeze_first(layers: usize, frozen: usize) -> Self {
        Self::new((0..layers).map(|i| i >= frozen).collect())
    }

    pub fn is_trainable(&self, layer: usize) -> bool {
        self.trainable.get(layer).copied().unwrap_or(false)
    }

    pub fn len(&self) -> usize {
        self.trainable.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trainable.is_empty()
    }

    fn first_trainable(&self) -> Option<usize> {
        self.trainable.iter().position(|&t| t)
    }

    fn check(&self, net: &Mlp) -> Result<()> {
        if self.trainable.len() != net.num_layers() {
            return Err(Error::dims(
                "FreezeMask",
                format!("{} flags", self.trainable.len()),
                format!("{} layers", net.num_layers()),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl TrainConfig {
    pub const BETA1: f64 = 0.9;
    pub const BETA2: f64 = 0.999;
    pub const EPSILON: f64 = 1e-8;

    /// Autoencoder pre-training on simulation data: lr 0.01, 800 epochs, batch 300.
    pub fn base(seed: u64) -> Self {
        Self {
            learning_rate: 0.01,
            epochs: 800,
            batch_size: 300,
            seed,
            beta1: Self::BETA1,
            beta2: Self::BETA2,
            epsilon: Self::EPSILON,
        }
    }

    /// Decoder-tail retraining on experiments: lr 0.001, 300 epochs, batch 1.
    pub fn transfer(seed: u64) -> Self {
        Self {
            learning_rate: 0.001,
            epochs: 300,
            batch_size: 1,
            ..Self::base(seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return bad(format!("learning_rate must be > 0, got {}", self.learning_rate));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1".into());
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return bad(format!("{name} must be in [0, 1), got {b}"));
            }
        }
        if !(self.epsilon > 0.0) || !self.epsilon.is_finite() {
            return bad(format!("epsilon must be > 0, got {}", self.epsilon));
        }
        Ok(())
    }
}

/// Adam first/second moment accumulators.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub first: Gradients,
    pub second: Gradients,
    pub step_count: u64,
}

impl AdamState {
    pub fn new(net: &Mlp) -> Self {
        Self {
            first: Gradients::zeros_like(net),
            second: Gradients::zeros_like(net),
            step_count: 0,
        }
    }
}

/// One bias-corrected Adam update on every trainable layer.
pub fn adam_step(
    net: &mut Mlp,
    grads: &Gradients,
    state: &mut AdamState,
    mask: &FreezeMask,
    cfg: &TrainConfig,
) -> Result<()> {
    mask.check(net)?;
    grads.check_shapes(net, "adam_step gradients")?;
    state.first.check_shapes(net, "adam_step first moments")?;
    state.second.check_shapes(net, "adam_step second moments")?;

    let t = state.step_count + 1;
    let correct1 = 1.0 - cfg.beta1.powi(t as i32);
    let correct2 = 1.0 - cfg.beta2.powi(t as i32);
    let update = |param: &mut [f64], grad: &[f64], m: &mut [f64], v: &mut [f64]| {
        for (((p, g), m), v) in param.iter_mut().zip(grad).zip(m).zip(v) {
            *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
            *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
            let m_hat = *m / correct1;
            let v_hat = *v / correct2;
            *p -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
        }
    };

    for (i, layer) in net.layers.iter_mut().enumerate() {
        if !mask.is_trainable(i) {
            continue;
        }
        let g = &grads.layers[i];
        let m = &mut state.first.layers[i];
        let v = &mut state.second.layers[i];
        update(
            layer.weights.values_mut(),
            g.weights.values(),
            m.weights.values_mut(),
            v.weights.values_mut(),
        );
        update(
            layer.biases.as_mut_slice(),
            g.biases.as_slice(),
            m.biases.as_mut_slice(),
            v.biases.as_mut_slice(),
        );
    }
    state.step_count = t;
    Ok(())
}

/// Mean training loss of each epoch, measured on each batch before its update.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LossHistory(pub Vec<f64>);

impl LossHistory {
    pub fn epochs(&self) -> usize {
        self.0.len()
    }

    pub fn first(&self) -> Option<f64> {
        self.0.first().copied()
    }

    pub fn last(&self) -> Option<f64> {
        self.0.last().copied()
    }
}

/// Mini-batch Adam training from a fresh optimizer state.
///
/// Each epoch reshuffles the sample order with a stream seeded by `cfg.seed`,
/// walks it in batches of `cfg.batch_size` (the last batch may be short),
/// averages the per-sample gradients of a batch and applies one Adam step.
pub fn train(
    net: &Mlp,
    inputs: &[Vector],
    targets: &[Vector],
    mask: &FreezeMask,
    cfg: &TrainConfig,
) -> Result<(Mlp, LossHistory)> {
    cfg.validate()?;
    mask.check(net)?;
    if inputs.is_empty() {
        return Err(Error::InvalidArgument("training set is empty".into()));
    }
    if inputs.len() != targets.len() {
        return Err(Error::dims(
            "train",
            format!("{} inputs", inputs.len()),
            format!("{} targets", targets.len()),
        ));
    }
    for (x, t) in inputs.iter().zip(targets) {
        net.check_input(x)?;
        net.check_target(t)?;
    }

    let mut net = net.clone();
    let mut history = LossHistory(Vec::with_capacity(cfg.epochs));
    if cfg.epochs == 0 {
        return Ok((net, history));
    }

    let lowest = mask.first_trainable().unwrap_or(net.num_layers());
    let mut rng = SeededRng::new(cfg.seed);
    let mut order: Vec<usize> = (0..inputs.len()).collect();
    let mut state = AdamState::new(&net);
    let mut grads = Gradients::zeros_like(&net);
    let mut ws = Workspace::new(&net);

    for epoch in 0..cfg.epochs {
        rng.shuffle(&mut order);
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            grads.fill_zero(lowest.min(net.num_layers()));
            for &i in batch {
                total += ws.accumulate(
                    &net,
                    inputs[i].as_slice(),
                    targets[i].as_slice(),
                    &mut grads,
                    lowest,
                );
            }
            if lowest < net.num_layers() {
                grads.scale(lowest, 1.0 / batch.len() as f64);
                adam_step(&mut net, &grads, &mut state, mask, cfg)?;
            }
        }
        let mean = total / inputs.len() as f64;
        if !mean.is_finite() {
            return Err(Error::NonFiniteLoss { epoch: epoch + 1 });
        }
        history.0.push(mean);
    }
    Ok((net, history))
}
