//! JSON model checkpoints: layer layout, every weight, batch-norm state and
//! the preprocessing the network was trained with.

use std::path::Path;

use serde::{Deserialize, Serialize};
use swipt_core::surrogate::{Activation, BatchNorm, Dense, Mlp, Post, PreprocessConfig, Surrogate};

use crate::config::ScalingSpec;
use crate::{Error, Result};

pub const CHECKPOINT_SCHEMA: &str = "swipt-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Checkpoint {
    schema: String,
    version: u32,
    preprocess: PreprocessFile,
    layers: Vec<LayerFile>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PreprocessFile {
    num_ir: usize,
    num_er: usize,
    antennas: usize,
    scaling: ScalingSpec,
    norm_mean: Vec<f64>,
    norm_std: Vec<f64>,
}

#[derive(Clone, Copy, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum ActivationFile {
    Tanh,
    Relu,
    Sigmoid,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum PostFile {
    None,
    L1Activity,
    BatchNorm {
        gamma: Vec<f64>,
        beta: Vec<f64>,
        running_mean: Vec<f64>,
        running_var: Vec<f64>,
        momentum: f64,
        eps: f64,
    },
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LayerFile {
    input: usize,
    output: usize,
    activation: ActivationFile,
    /// Row-major `[input][output]`.
    weights: Vec<f64>,
    bias: Vec<f64>,
    post: PostFile,
}

fn to_file(s: &Surrogate) -> Checkpoint {
    let p = s.preprocess();
    Checkpoint {
        schema: CHECKPOINT_SCHEMA.into(),
        version: CHECKPOINT_VERSION,
        preprocess: PreprocessFile {
            num_ir: p.num_ir,
            num_er: p.num_er,
            antennas: p.antennas,
            scaling: p.scaling.into(),
            norm_mean: p.norm_mean.clone(),
            norm_std: p.norm_std.clone(),
        },
        layers: s
            .model()
            .layers
            .iter()
            .map(|l| LayerFile {
                input: l.input,
                output: l.output,
                activation: match l.activation {
                    Activation::Tanh => ActivationFile::Tanh,
                    Activation::Relu => ActivationFile::Relu,
                    Activation::Sigmoid => ActivationFile::Sigmoid,
                },
                weights: l.weights.clone(),
                bias: l.bias.clone(),
                post: match &l.post {
                    Post::None => PostFile::None,
                    Post::L1Activity => PostFile::L1Activity,
                    Post::BatchNorm(bn) => PostFile::BatchNorm {
                        gamma: bn.gamma.clone(),
                        beta: bn.beta.clone(),
                        running_mean: bn.running_mean.clone(),
                        running_var: bn.running_var.clone(),
                        momentum: bn.momentum,
                        eps: bn.eps,
                    },
                },
            })
            .collect(),
    }
}

fn from_file(c: Checkpoint) -> Result<Surrogate> {
    if c.schema != CHECKPOINT_SCHEMA || c.version != CHECKPOINT_VERSION {
        return Err(Error::Schema(format!(
            "checkpoint schema {} v{} is not {CHECKPOINT_SCHEMA} v{CHECKPOINT_VERSION}",
            c.schema, c.version
        )));
    }
    let p = c.preprocess;
    let mut preprocess = PreprocessConfig::new(p.num_ir, p.num_er, p.antennas, p.scaling.into());
    if p.norm_mean.len() != preprocess.dim() || p.norm_std.len() != preprocess.dim() {
        return Err(Error::Schema(format!(
            "normalization statistics must have {} entries",
            preprocess.dim()
        )));
    }
    preprocess.norm_mean = p.norm_mean;
    preprocess.norm_std = p.norm_std;
    let layers = c
        .layers
        .into_iter()
        .map(|l| Dense {
            input: l.input,
            output: l.output,
            weights: l.weights,
            bias: l.bias,
            activation: match l.activation {
                ActivationFile::Tanh => Activation::Tanh,
                ActivationFile::Relu => Activation::Relu,
                ActivationFile::Sigmoid => Activation::Sigmoid,
            },
            post: match l.post {
                PostFile::None => Post::None,
                PostFile::L1Activity => Post::L1Activity,
                PostFile::BatchNorm {
                    gamma,
                    beta,
                    running_mean,
                    running_var,
                    momentum,
                    eps,
                } => Post::BatchNorm(BatchNorm {
                    gamma,
                    beta,
                    running_mean,
                    running_var,
                    momentum,
                    eps,
                }),
            },
        })
        .collect();
    let model = Mlp { layers };
    model.validate()?;
    if model.input_dim() != preprocess.dim() || model.output_dim() != preprocess.num_users() {
        return Err(Error::Schema(format!(
            "network maps {} -> {} but the preprocessing needs {} -> {}",
            model.input_dim(),
            model.output_dim(),
            preprocess.dim(),
            preprocess.num_users()
        )));
    }
    Ok(Surrogate::new(model, preprocess)?)
}

pub fn save_checkpoint(path: &Path, s: &Surrogate) -> Result<()> {
    let text = serde_json::to_string(&to_file(s)).expect("checkpoint serializes");
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Surrogate> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let c: Checkpoint = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        msg: e.to_string(),
    })?;
    from_file(c)
}
