use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::math::{ln, sigmoid, sqrt, tanh};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Relu,
    Sigmoid,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Self::Tanh => tanh(z),
            Self::Relu => z.max(0.0),
            Self::Sigmoid => sigmoid(z),
        }
    }

    /// Derivative expressed through the output `a` (and input `z` for ReLU).
    fn slope(self, z: f64, a: f64) -> f64 {
        match self {
            Self::Tanh => 1.0 - a * a,
            Self::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Self::Sigmoid => a * (1.0 - a),
        }
    }
}

/// Batch normalization between a dense map and its activation.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchNorm {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub momentum: f64,
    pub eps: f64,
}

impl BatchNorm {
    pub fn new(n: usize) -> Self {
        Self {
            gamma: vec![1.0; n],
            beta: vec![0.0; n],
            running_mean: vec![0.0; n],
            running_var: vec![1.0; n],
            momentum: 0.99,
            eps: 1e-3,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Post {
    None,
    BatchNorm(BatchNorm),
    /// L1 penalty on the layer's activations.
    L1Activity,
}

/// Fully connected layer; weights are stored `[input][output]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub input: usize,
    pub output: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub activation: Activation,
    pub post: Post,
}

/// Shape of one layer for [`Mlp::new`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LayerSpec {
    pub output: usize,
    pub activation: Activation,
    pub post: PostKind,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PostKind {
    None,
    BatchNorm,
    L1Activity,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics in batch normalization.
    Train,
    /// Running statistics in batch normalization.
    Infer,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Dense>,
}

/// Gradient of every trainable tensor, in [`Mlp::params_mut`] order.
pub type Gradients = Vec<Vec<f64>>;

/// Per-layer batch statistics of a training-mode pass.
#[derive(Clone, Debug, Default)]
pub struct BatchStats {
    pub layers: Vec<Option<(Vec<f64>, Vec<f64>)>>,
}

struct LayerCache {
    input: Vec<f64>,
    /// Normalized values and inverse deviations, for batch-norm layers.
    xhat: Option<(Vec<f64>, Vec<f64>)>,
    /// Activation input.
    pre: Vec<f64>,
    out: Vec<f64>,
}

impl Mlp {
    /// Random fan-in scaled uniform weights, zero biases.
    pub fn new(input: usize, specs: &[LayerSpec], seed: u64) -> Result<Self> {
        if input == 0 || specs.is_empty() || specs.iter().any(|s| s.output == 0) {
            return Err(Error::invalid("layer sizes must be positive"));
        }
        if specs.last().map(|s| s.activation) != Some(Activation::Sigmoid) {
            return Err(Error::invalid("the output layer must be sigmoid"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = Vec::with_capacity(specs.len());
        let mut fan_in = input;
        for s in specs {
            let limit = sqrt(3.0 / fan_in as f64);
            let weights = (0..fan_in * s.output)
                .map(|_| rng.random_range(-limit..limit))
                .collect();
            layers.push(Dense {
                input: fan_in,
                output: s.output,
                weights,
                bias: vec![0.0; s.output],
                activation: s.activation,
                post: match s.post {
                    PostKind::None => Post::None,
                    PostKind::BatchNorm => Post::BatchNorm(BatchNorm::new(s.output)),
                    PostKind::L1Activity => Post::L1Activity,
                },
            });
            fan_in = s.output;
        }
        Ok(Self { layers })
    }

    /// The three-hidden-layer surrogate: 200 (L1, tanh), 296 (batch norm,
    /// tanh), 392 (batch norm, ReLU), then `outputs` sigmoids.
    pub fn surrogate(input: usize, outputs: usize, seed: u64) -> Result<Self> {
        let l = |output, activation, post| LayerSpec {
            output,
            activation,
            post,
        };
        Self::new(
            input,
            &[
                l(200, Activation::Tanh, PostKind::L1Activity),
                l(296, Activation::Tanh, PostKind::BatchNorm),
                l(392, Activation::Relu, PostKind::BatchNorm),
                l(outputs, Activation::Sigmoid, PostKind::None),
            ],
            seed,
        )
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.output)
    }

    /// Checks that layer sizes chain and tensors have their declared sizes.
    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::invalid("model has no layers"));
        }
        let mut prev = self.layers[0].input;
        for l in &self.layers {
            if l.input != prev {
                return Err(Error::dims("layer input", prev, l.input));
            }
            if l.weights.len() != l.input * l.output {
                return Err(Error::dims("weights", l.input * l.output, l.weights.len()));
            }
            if l.bias.len() != l.output {
                return Err(Error::dims("bias", l.output, l.bias.len()));
            }
            if let Post::BatchNorm(bn) = &l.post {
                for v in [&bn.gamma, &bn.beta, &bn.running_mean, &bn.running_var] {
                    if v.len() != l.output {
                        return Err(Error::dims("batch norm", l.output, v.len()));
                    }
                }
            }
            prev = l.output;
        }
        if self.layers.last().map(|l| l.activation) != Some(Activation::Sigmoid) {
            return Err(Error::invalid("the output layer must be sigmoid"));
        }
        Ok(())
    }

    /// Trainable and non-trainable parameter counts.
    pub fn parameter_counts(&self) -> (usize, usize) {
        self.layers.iter().fold((0, 0), |(t, n), l| {
            let bn = matches!(l.post, Post::BatchNorm(_)) as usize * 2 * l.output;
            (t + l.weights.len() + l.bias.len() + bn, n + bn)
        })
    }

    /// Trainable tensors: per layer weights, bias, then batch-norm scale and
    /// shift when present.
    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        for l in &mut self.layers {
            out.push(&mut l.weights);
            out.push(&mut l.bias);
            if let Post::BatchNorm(bn) = &mut l.post {
                out.push(&mut bn.gamma);
                out.push(&mut bn.beta);
            }
        }
        out
    }

    /// Output probabilities for `batch` rows of features.
    pub fn forward(&self, x: &[f64], batch: usize, mode: Mode) -> Result<Vec<f64>> {
        match mode {
            Mode::Infer => self.infer(x, batch),
            Mode::Train => Ok(self
                .run(x, batch, mode)?
                .0
                .pop()
                .map(|c| c.out)
                .unwrap_or_default()),
        }
    }

    /// Inference without the caches backpropagation needs.
    fn infer(&self, x: &[f64], batch: usize) -> Result<Vec<f64>> {
        if batch == 0 || x.len() != batch * self.input_dim() {
            return Err(Error::dims(
                "input batch",
                batch * self.input_dim(),
                x.len(),
            ));
        }
        let mut cur = x.to_vec();
        let mut next = Vec::new();
        for l in &self.layers {
            let (ni, no) = (l.input, l.output);
            next.clear();
            next.resize(batch * no, 0.0);
            for b in 0..batch {
                let row = &mut next[b * no..(b + 1) * no];
                row.copy_from_slice(&l.bias);
                for (i, &xv) in cur[b * ni..(b + 1) * ni].iter().enumerate() {
                    if xv != 0.0 {
                        let w = &l.weights[i * no..(i + 1) * no];
                        row.iter_mut().zip(w).for_each(|(r, wv)| *r += xv * wv);
                    }
                }
                if let Post::BatchNorm(bn) = &l.post {
                    for (o, r) in row.iter_mut().enumerate() {
                        let scale = bn.gamma[o] / sqrt(bn.running_var[o] + bn.eps);
                        *r = (*r - bn.running_mean[o]) * scale + bn.beta[o];
                    }
                }
                row.iter_mut().for_each(|r| *r = l.activation.apply(*r));
            }
            core::mem::swap(&mut cur, &mut next);
        }
        Ok(cur)
    }

    fn run(&self, x: &[f64], batch: usize, mode: Mode) -> Result<(Vec<LayerCache>, BatchStats)> {
        if batch == 0 || x.len() != batch * self.input_dim() {
            return Err(Error::dims(
                "input batch",
                batch * self.input_dim(),
                x.len(),
            ));
        }
        let mut caches: Vec<LayerCache> = Vec::with_capacity(self.layers.len());
        let mut stats = BatchStats::default();
        for (li, l) in self.layers.iter().enumerate() {
            let input = if li == 0 {
                x.to_vec()
            } else {
                caches[li - 1].out.clone()
            };
            let (ni, no) = (l.input, l.output);
            let mut z = vec![0.0; batch * no];
            for b in 0..batch {
                let row = &mut z[b * no..(b + 1) * no];
                row.copy_from_slice(&l.bias);
                let xin = &input[b * ni..(b + 1) * ni];
                for (i, &xv) in xin.iter().enumerate() {
                    if xv == 0.0 {
                        continue;
                    }
                    let w = &l.weights[i * no..(i + 1) * no];
                    for (r, wv) in row.iter_mut().zip(w) {
                        *r += xv * wv;
                    }
                }
            }
            let (pre, xhat, layer_stats) = match (&l.post, mode) {
                (Post::BatchNorm(bn), Mode::Train) => {
                    let n = batch as f64;
                    let mut mean = vec![0.0; no];
                    for b in 0..batch {
                        for (m, v) in mean.iter_mut().zip(&z[b * no..(b + 1) * no]) {
                            *m += v;
                        }
                    }
                    mean.iter_mut().for_each(|m| *m /= n);
                    let mut var = vec![0.0; no];
                    for b in 0..batch {
                        for ((s, v), m) in var.iter_mut().zip(&z[b * no..(b + 1) * no]).zip(&mean) {
                            *s += (v - m) * (v - m);
                        }
                    }
                    var.iter_mut().for_each(|s| *s /= n);
                    let inv: Vec<f64> = var.iter().map(|v| 1.0 / sqrt(v + bn.eps)).collect();
                    let mut xh = vec![0.0; batch * no];
                    let mut pre = vec![0.0; batch * no];
                    for b in 0..batch {
                        for o in 0..no {
                            let t = (z[b * no + o] - mean[o]) * inv[o];
                            xh[b * no + o] = t;
                            pre[b * no + o] = bn.gamma[o] * t + bn.beta[o];
                        }
                    }
                    (pre, Some((xh, inv)), Some((mean, var)))
                }
                (Post::BatchNorm(bn), Mode::Infer) => {
                    let mut pre = z.clone();
                    for b in 0..batch {
                        for o in 0..no {
                            let t = (z[b * no + o] - bn.running_mean[o])
                                / sqrt(bn.running_var[o] + bn.eps);
                            pre[b * no + o] = bn.gamma[o] * t + bn.beta[o];
                        }
                    }
                    (pre, None, None)
                }
                _ => (z, None, None),
            };
            let out: Vec<f64> = pre.iter().map(|&v| l.activation.apply(v)).collect();
            stats.layers.push(layer_stats);
            caches.push(LayerCache {
                input,
                xhat,
                pre,
                out,
            });
        }
        Ok((caches, stats))
    }

    /// Loss of a batch and its gradient with respect to every trainable
    /// tensor, using batch statistics. Also returns the batch statistics for
    /// updating running averages.
    pub fn loss_and_grad(
        &self,
        x: &[f64],
        y: &[f64],
        batch: usize,
        l1: f64,
    ) -> Result<(f64, Gradients, BatchStats)> {
        let k = self.output_dim();
        if y.len() != batch * k {
            return Err(Error::dims("target batch", batch * k, y.len()));
        }
        let (caches, stats) = self.run(x, batch, Mode::Train)?;
        let probs = &caches.last().expect("nonempty").out;
        let mut value = bce(probs, y);
        let mut penalties = vec![0.0; self.layers.len()];
        for (li, l) in self.layers.iter().enumerate() {
            if matches!(l.post, Post::L1Activity) {
                penalties[li] = l1 * mean_abs(&caches[li].out);
                value += penalties[li];
            }
        }

        let mut grads: Vec<Vec<f64>> = Vec::new();
        // gradient w.r.t. the last layer's activation input
        let count = (batch * k) as f64;
        let mut dpre: Vec<f64> = probs
            .iter()
            .zip(y)
            .map(|(&p, &t)| {
                if !(CLAMP..=1.0 - CLAMP).contains(&p) {
                    // the clamped loss is flat here
                    0.0
                } else {
                    (p - t) / count
                }
            })
            .collect();
        for li in (0..self.layers.len()).rev() {
            let l = &self.layers[li];
            let c = &caches[li];
            let (ni, no) = (l.input, l.output);
            let mut layer_grads = Vec::new();
            let dz = if let (Post::BatchNorm(bn), Some((xh, inv))) = (&l.post, &c.xhat) {
                let mut dgamma = vec![0.0; no];
                let mut dbeta = vec![0.0; no];
                for b in 0..batch {
                    for o in 0..no {
                        let d = dpre[b * no + o];
                        dgamma[o] += d * xh[b * no + o];
                        dbeta[o] += d;
                    }
                }
                let n = batch as f64;
                let mut dz = vec![0.0; batch * no];
                for o in 0..no {
                    // dxhat = dpre * gamma
                    let mut sum = 0.0;
                    let mut sum_x = 0.0;
                    for b in 0..batch {
                        let dx = dpre[b * no + o] * bn.gamma[o];
                        sum += dx;
                        sum_x += dx * xh[b * no + o];
                    }
                    for b in 0..batch {
                        let dx = dpre[b * no + o] * bn.gamma[o];
                        dz[b * no + o] = inv[o] / n * (n * dx - sum - xh[b * no + o] * sum_x);
                    }
                }
                layer_grads.push(dbeta);
                layer_grads.push(dgamma);
                dz
            } else {
                dpre.clone()
            };
            let mut dw = vec![0.0; ni * no];
            let mut db = vec![0.0; no];
            for b in 0..batch {
                let drow = &dz[b * no..(b + 1) * no];
                for (d, v) in db.iter_mut().zip(drow) {
                    *d += v;
                }
                for (i, &xv) in c.input[b * ni..(b + 1) * ni].iter().enumerate() {
                    if xv == 0.0 {
                        continue;
                    }
                    for (g, d) in dw[i * no..(i + 1) * no].iter_mut().zip(drow) {
                        *g += xv * d;
                    }
                }
            }
            // stored in reverse; flipped at the end
            layer_grads.push(db);
            layer_grads.push(dw);
            grads.extend(layer_grads);
            if li == 0 {
                break;
            }
            // propagate to the previous layer's activation, then its input
            let prev = &self.layers[li - 1];
            let pc = &caches[li - 1];
            let mut da = vec![0.0; batch * ni];
            for b in 0..batch {
                let drow = &dz[b * no..(b + 1) * no];
                for i in 0..ni {
                    let w = &l.weights[i * no..(i + 1) * no];
                    da[b * ni + i] = w.iter().zip(drow).map(|(a, d)| a * d).sum();
                }
            }
            if matches!(prev.post, Post::L1Activity) {
                let scale = l1 / (batch * ni) as f64;
                for (d, &a) in da.iter_mut().zip(&pc.out) {
                    *d += scale * sign(a);
                }
            }
            dpre = da
                .iter()
                .zip(pc.pre.iter().zip(&pc.out))
                .map(|(d, (&z, &a))| d * prev.activation.slope(z, a))
                .collect();
        }
        grads.reverse();
        Ok((value, grads, stats))
    }

    /// Folds batch statistics into the running averages.
    pub fn update_running(&mut self, stats: &BatchStats) {
        for (l, s) in self.layers.iter_mut().zip(&stats.layers) {
            if let (Post::BatchNorm(bn), Some((mean, var))) = (&mut l.post, s) {
                let m = bn.momentum;
                for o in 0..l.output {
                    bn.running_mean[o] = m * bn.running_mean[o] + (1.0 - m) * mean[o];
                    bn.running_var[o] = m * bn.running_var[o] + (1.0 - m) * var[o];
                }
            }
        }
    }

    /// Loss of a batch in the given mode, without gradients.
    pub fn batch_loss(
        &self,
        x: &[f64],
        y: &[f64],
        batch: usize,
        l1: f64,
        mode: Mode,
    ) -> Result<f64> {
        let (caches, _) = self.run(x, batch, mode)?;
        let probs = &caches.last().expect("nonempty").out;
        if y.len() != probs.len() {
            return Err(Error::dims("target batch", probs.len(), y.len()));
        }
        let first_hidden = self
            .layers
            .iter()
            .position(|l| matches!(l.post, Post::L1Activity))
            .map(|i| caches[i].out.as_slice());
        Ok(loss(probs, y, first_hidden, l1))
    }
}

const CLAMP: f64 = 1e-12;

fn sign(a: f64) -> f64 {
    if a > 0.0 {
        1.0
    } else if a < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn mean_abs(v: &[f64]) -> f64 {
    v.iter().map(|a| a.abs()).sum::<f64>() / v.len() as f64
}

/// Mean binary cross-entropy with probabilities clamped to
/// `[1e-12, 1 - 1e-12]`.
pub fn bce(probs: &[f64], targets: &[f64]) -> f64 {
    let s: f64 = probs
        .iter()
        .zip(targets)
        .map(|(&p, &t)| {
            let p = p.clamp(CLAMP, 1.0 - CLAMP);
            -(t * ln(p) + (1.0 - t) * ln(1.0 - p))
        })
        .sum();
    s / probs.len() as f64
}

/// Mean binary cross-entropy plus `l1` times the mean absolute activation
/// of the regularized layer, when given.
pub fn loss(probs: &[f64], targets: &[f64], regularized: Option<&[f64]>, l1: f64) -> f64 {
    bce(probs, targets) + regularized.map_or(0.0, |a| l1 * mean_abs(a))
}
