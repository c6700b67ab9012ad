use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::metrics::exact_accuracy;
use super::mlp::{Mlp, Mode};
use crate::math::{powf, sqrt};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// Inverse-time decay: the step size is `learning_rate / (1 + decay * step)`.
    pub decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub l1_coefficient: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            decay: 0.0027,
            batch_size: 16,
            epochs: 10,
            l1_coefficient: 0.001,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [self.learning_rate, self.l1_coefficient]
            .iter()
            .all(|v| v.is_finite() && *v > 0.0);
        if !positive || !(self.decay.is_finite() && self.decay >= 0.0) {
            return Err(Error::invalid(
                "learning rate, decay and l1 must be positive",
            ));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::invalid("batch size and epochs must be positive"));
        }
        Ok(())
    }
}

/// Row-major features and targets.
#[derive(Clone, Debug, PartialEq)]
pub struct Samples {
    pub features: Vec<f64>,
    pub targets: Vec<f64>,
    pub dim: usize,
    pub outputs: usize,
}

impl Samples {
    pub fn new(dim: usize, outputs: usize) -> Self {
        Self {
            features: Vec::new(),
            targets: Vec::new(),
            dim,
            outputs,
        }
    }

    pub fn push(&mut self, x: &[f64], y: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::dims("feature row", self.dim, x.len()));
        }
        if y.len() != self.outputs {
            return Err(Error::dims("target row", self.outputs, y.len()));
        }
        self.features.extend_from_slice(x);
        self.targets.extend_from_slice(y);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.features.len().checked_div(self.dim).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn gather(&self, rows: &[usize]) -> (Vec<f64>, Vec<f64>) {
        let mut x = Vec::with_capacity(rows.len() * self.dim);
        let mut y = Vec::with_capacity(rows.len() * self.outputs);
        for &r in rows {
            x.extend_from_slice(&self.features[r * self.dim..(r + 1) * self.dim]);
            y.extend_from_slice(&self.targets[r * self.outputs..(r + 1) * self.outputs]);
        }
        (x, y)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean of the mini-batch losses seen during the epoch.
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub val_loss: Option<f64>,
    pub val_accuracy: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct History {
    pub epochs: Vec<EpochRecord>,
}

impl History {
    /// Epoch with the lowest validation loss, if validation was run.
    pub fn best_val_epoch(&self) -> Option<usize> {
        self.epochs
            .iter()
            .filter_map(|r| r.val_loss.map(|l| (r.epoch, l)))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(e, _)| e)
    }
}

struct Adam {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    step: u64,
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-7;

impl Adam {
    fn new(model: &mut Mlp) -> Self {
        let shapes: Vec<usize> = model.params_mut().iter().map(|p| p.len()).collect();
        Self {
            m: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            v: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            step: 0,
        }
    }

    fn update(&mut self, model: &mut Mlp, grads: &[Vec<f64>], cfg: &TrainConfig) {
        let lr = cfg.learning_rate / (1.0 + cfg.decay * self.step as f64);
        self.step += 1;
        let t = self.step as f64;
        let c1 = 1.0 - powf(BETA1, t);
        let c2 = 1.0 - powf(BETA2, t);
        let alpha = lr * sqrt(c2) / c1;
        for (((p, g), m), v) in model
            .params_mut()
            .into_iter()
            .zip(grads)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            for i in 0..p.len() {
                m[i] = BETA1 * m[i] + (1.0 - BETA1) * g[i];
                v[i] = BETA2 * v[i] + (1.0 - BETA2) * g[i] * g[i];
                p[i] -= alpha * m[i] / (sqrt(v[i]) + ADAM_EPS);
            }
        }
    }
}

/// Loss and exact accuracy in inference mode, evaluated in chunks.
pub fn evaluate_loss(model: &Mlp, data: &Samples, l1: f64) -> Result<(f64, f64)> {
    if data.is_empty() {
        return Err(Error::invalid("empty evaluation set"));
    }
    const CHUNK: usize = 256;
    let n = data.len();
    let mut loss = 0.0;
    let mut probs = Vec::with_capacity(n * data.outputs);
    let rows: Vec<usize> = (0..n).collect();
    for chunk in rows.chunks(CHUNK) {
        let (x, y) = data.gather(chunk);
        loss += model.batch_loss(&x, &y, chunk.len(), l1, Mode::Infer)? * chunk.len() as f64;
        probs.extend(model.forward(&x, chunk.len(), Mode::Infer)?);
    }
    let acc = exact_accuracy(&probs, &data.targets, data.outputs)?;
    Ok((loss / n as f64, acc))
}

/// Mini-batch Adam training; the last short batch of each epoch is kept.
///
/// `on_epoch` sees each record as it is produced.
pub fn train(
    model: &mut Mlp,
    train_set: &Samples,
    val_set: Option<&Samples>,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<History> {
    cfg.validate()?;
    model.validate()?;
    if train_set.is_empty() {
        return Err(Error::invalid("empty training set"));
    }
    for s in core::iter::once(train_set).chain(val_set) {
        if s.dim != model.input_dim() {
            return Err(Error::dims("feature dimension", model.input_dim(), s.dim));
        }
        if s.outputs != model.output_dim() {
            return Err(Error::dims(
                "target dimension",
                model.output_dim(),
                s.outputs,
            ));
        }
    }
    let mut adam = Adam::new(model);
    let mut history = History::default();
    let n = train_set.len();
    let mut order: Vec<usize> = (0..n).collect();
    for epoch in 0..cfg.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(epoch as u64 + 1);
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut batches = 0usize;
        for rows in order.chunks(cfg.batch_size) {
            let (x, y) = train_set.gather(rows);
            let (loss, grads, stats) =
                model.loss_and_grad(&x, &y, rows.len(), cfg.l1_coefficient)?;
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch });
            }
            adam.update(model, &grads, cfg);
            model.update_running(&stats);
            total += loss;
            batches += 1;
        }
        let (_, train_accuracy) = evaluate_loss(model, train_set, cfg.l1_coefficient)?;
        let val = val_set
            .map(|v| evaluate_loss(model, v, cfg.l1_coefficient))
            .transpose()?;
        if val.is_some_and(|(l, _)| !l.is_finite()) {
            return Err(Error::Diverged { epoch });
        }
        let record = EpochRecord {
            epoch,
            train_loss: total / batches as f64,
            train_accuracy,
            val_loss: val.map(|v| v.0),
            val_accuracy: val.map(|v| v.1),
        };
        on_epoch(&record);
        history.epochs.push(record);
    }
    Ok(history)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::surrogate::mlp::{Activation, LayerSpec, PostKind};
    use rand::Rng;

    fn toy(n: usize, seed: u64) -> Samples {
        // targets are fixed functions of the features
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s = Samples::new(6, 3);
        for _ in 0..n {
            let x: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
            let y = [
                (x[0] + x[1] > 0.0) as u8 as f64,
                (x[2] * x[3] > 0.0) as u8 as f64,
                (x[4] > 0.3) as u8 as f64,
            ];
            s.push(&x, &y).unwrap();
        }
        s
    }

    fn model(seed: u64) -> Mlp {
        let l = |output, activation, post| LayerSpec {
            output,
            activation,
            post,
        };
        Mlp::new(
            6,
            &[
                l(32, Activation::Tanh, PostKind::L1Activity),
                l(32, Activation::Tanh, PostKind::BatchNorm),
                l(32, Activation::Relu, PostKind::BatchNorm),
                l(3, Activation::Sigmoid, PostKind::None),
            ],
            seed,
        )
        .unwrap()
    }

    #[test]
    fn equal_seeds_give_identical_histories() {
        let data = toy(64, 1);
        let cfg = TrainConfig {
            epochs: 3,
            seed: 9,
            ..Default::default()
        };
        let mut a = model(2);
        let mut b = model(2);
        let ha = train(&mut a, &data, Some(&data), &cfg, |_| {}).unwrap();
        let hb = train(&mut b, &data, Some(&data), &cfg, |_| {}).unwrap();
        assert_eq!(ha, hb);
        assert_eq!(a, b);
    }

    #[test]
    fn overfits_a_small_set() {
        let data = toy(200, 3);
        let cfg = TrainConfig {
            epochs: 150,
            decay: 0.0,
            learning_rate: 0.003,
            ..Default::default()
        };
        let mut m = model(4);
        let h = train(&mut m, &data, None, &cfg, |_| {}).unwrap();
        let last = h.epochs.last().unwrap();
        assert!(last.train_accuracy >= 0.99, "{last:?}");
    }

    #[test]
    fn divergence_reports_epoch() {
        let data = toy(32, 5);
        let mut m = model(6);
        m.layers[0].weights[0] = f64::NAN;
        let err = train(&mut m, &data, None, &TrainConfig::default(), |_| {}).unwrap_err();
        assert_eq!(err, Error::Diverged { epoch: 0 });
    }

    #[test]
    fn rejects_bad_config() {
        let cfg = TrainConfig {
            batch_size: 0,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
        assert!(TrainConfig::default().validate().is_ok());
    }
}
