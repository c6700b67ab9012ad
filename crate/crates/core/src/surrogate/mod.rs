//! Neural surrogate for the allocation search: feature preprocessing, a
//! multi-label perceptron, its trainer and evaluation metrics.

mod compiled;
mod metrics;
mod mlp;
mod preprocess;
mod train;

pub use compiled::CompiledMlp;
pub use metrics::{binary_accuracy, decimal, evaluate, exact_accuracy, threshold, Metrics};
pub use mlp::{
    bce, loss, Activation, BatchNorm, BatchStats, Dense, Gradients, LayerSpec, Mlp, Mode, Post,
    PostKind,
};
pub use preprocess::{feature_dim, PreprocessConfig, Scaling, SortPermutation, MIN_STD};
pub use train::{evaluate_loss, train, EpochRecord, History, Samples, TrainConfig};

use alloc::vec::Vec;

use crate::dataset::TrainingSample;
use crate::model::{AllocationVector, ChannelRealization, DemandProfile};
use crate::{Error, Result};

/// A trained network together with the preprocessing it expects.
#[derive(Clone, Debug, PartialEq)]
pub struct Surrogate {
    model: Mlp,
    preprocess: PreprocessConfig,
    compiled: CompiledMlp,
}

impl Surrogate {
    pub fn new(model: Mlp, preprocess: PreprocessConfig) -> Result<Self> {
        model.validate()?;
        if model.input_dim() != preprocess.dim() {
            return Err(Error::dims(
                "network input",
                preprocess.dim(),
                model.input_dim(),
            ));
        }
        if model.output_dim() != preprocess.num_users() {
            return Err(Error::dims(
                "network output",
                preprocess.num_users(),
                model.output_dim(),
            ));
        }
        let compiled = CompiledMlp::new(&model);
        Ok(Self {
            model,
            preprocess,
            compiled,
        })
    }

    pub fn model(&self) -> &Mlp {
        &self.model
    }

    pub fn preprocess(&self) -> &PreprocessConfig {
        &self.preprocess
    }

    /// Allocation predicted for one instance, in original user order.
    pub fn predict_allocation(
        &self,
        channels: &ChannelRealization,
        demands: &DemandProfile,
        virtual_bids: &[f64],
    ) -> Result<AllocationVector> {
        let probs = self.predict_probabilities(channels, demands, virtual_bids)?;
        AllocationVector::new(
            probs.iter().map(|&p| threshold(p)).collect(),
            self.preprocess.num_ir,
        )
    }

    /// Output probabilities, in original user order.
    pub fn predict_probabilities(
        &self,
        channels: &ChannelRealization,
        demands: &DemandProfile,
        virtual_bids: &[f64],
    ) -> Result<Vec<f64>> {
        let (x, perm) = self
            .preprocess
            .preprocess(channels, demands, virtual_bids)?;
        Ok(perm.unsort(&self.compiled.forward(&x)))
    }

    /// Metrics on labeled samples; predictions are compared in original
    /// user order.
    pub fn evaluate(&self, samples: &[TrainingSample]) -> Result<Metrics> {
        let k = self.preprocess.num_users();
        let mut probs = Vec::with_capacity(samples.len() * k);
        let mut targets = Vec::with_capacity(samples.len() * k);
        for s in samples {
            probs.extend(self.predict_probabilities(&s.channels, &s.demands, &s.virtual_bids)?);
            targets.extend(s.label.bits().iter().map(|&b| b as u8 as f64));
        }
        evaluate(&probs, &targets, k)
    }
}

/// Sorted raw features and targets of labeled samples.
pub fn raw_rows(
    preprocess: &PreprocessConfig,
    samples: &[TrainingSample],
) -> Result<Vec<(Vec<f64>, Vec<f64>)>> {
    samples
        .iter()
        .map(|s| {
            let (x, perm) = preprocess.raw_features(&s.channels, &s.demands, &s.virtual_bids)?;
            Ok((x, preprocess.sorted_targets(&s.label, &perm)))
        })
        .collect()
}

/// Normalized training matrix under an already fitted config.
pub fn to_samples(preprocess: &PreprocessConfig, samples: &[TrainingSample]) -> Result<Samples> {
    let mut out = Samples::new(preprocess.dim(), preprocess.num_users());
    for (mut x, y) in raw_rows(preprocess, samples)? {
        preprocess.normalize(&mut x);
        out.push(&x, &y)?;
    }
    Ok(out)
}

/// Fits normalization on the training split, then trains a fresh network of
/// the default layout.
pub fn fit_surrogate(
    train_split: &[TrainingSample],
    val_split: &[TrainingSample],
    scaling: Scaling,
    cfg: &TrainConfig,
    on_epoch: impl FnMut(&EpochRecord),
) -> Result<(Surrogate, History)> {
    let first = train_split
        .first()
        .ok_or_else(|| crate::Error::invalid("empty training split"))?;
    let ch = &first.channels;
    let mut preprocess = PreprocessConfig::new(ch.num_ir(), ch.num_er(), ch.antennas(), scaling);
    let rows: Vec<Vec<f64>> = raw_rows(&preprocess, train_split)?
        .into_iter()
        .map(|(x, _)| x)
        .collect();
    preprocess.fit(&rows)?;
    let train_set = to_samples(&preprocess, train_split)?;
    let val_set = if val_split.is_empty() {
        None
    } else {
        Some(to_samples(&preprocess, val_split)?)
    };
    let mut model = Mlp::surrogate(preprocess.dim(), preprocess.num_users(), cfg.seed)?;
    let history = train(&mut model, &train_set, val_set.as_ref(), cfg, on_epoch)?;
    Ok((Surrogate::new(model, preprocess)?, history))
}
