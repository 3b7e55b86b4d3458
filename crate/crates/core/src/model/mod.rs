//! The ship/no-ship classifier.
//!
//! Layer order: Conv1, MaxPool, ReLU, Conv2, Dropout, MaxPool, ReLU, Conv3,
//! ReLU, global average pooling, fully connected. The post-ReLU Conv3 maps
//! are kept in the [`ForwardTrace`] because both CAM methods read them.

mod checkpoint;
mod config;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_MAGIC};
pub use config::NetworkConfig;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::layers::{self, ConvCache, DenseCache, DropoutCache, GapCache, PoolCache, ReluCache};
use crate::tensor::{Real, Tensor};

pub const POOL_WINDOW: usize = 2;
pub const POOL_STRIDE: usize = 2;

/// Parameter names in checkpoint and optimizer order.
pub const PARAM_NAMES: [&str; 8] = [
    "conv1.weight",
    "conv1.bias",
    "conv2.weight",
    "conv2.bias",
    "conv3.weight",
    "conv3.bias",
    "fc.weight",
    "fc.bias",
];

/// A fixed, named collection of tensors that an optimizer can update.
pub trait ParamSet<T> {
    fn named(&self) -> Vec<(&'static str, &Tensor<T>)>;
    fn named_mut(&mut self) -> Vec<(&'static str, &mut Tensor<T>)>;
}

/// Learnable weights. `fc_weight` is `[c3, num_classes]`; its column for a
/// class holds the per-channel weights GAP-CAM sums the feature maps with.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T> {
    pub conv1_weight: Tensor<T>,
    pub conv1_bias: Tensor<T>,
    pub conv2_weight: Tensor<T>,
    pub conv2_bias: Tensor<T>,
    pub conv3_weight: Tensor<T>,
    pub conv3_bias: Tensor<T>,
    pub fc_weight: Tensor<T>,
    pub fc_bias: Tensor<T>,
}

impl<T: Real> ParamSet<T> for ModelParams<T> {
    fn named(&self) -> Vec<(&'static str, &Tensor<T>)> {
        PARAM_NAMES
            .into_iter()
            .zip([
                &self.conv1_weight,
                &self.conv1_bias,
                &self.conv2_weight,
                &self.conv2_bias,
                &self.conv3_weight,
                &self.conv3_bias,
                &self.fc_weight,
                &self.fc_bias,
            ])
            .collect()
    }

    fn named_mut(&mut self) -> Vec<(&'static str, &mut Tensor<T>)> {
        PARAM_NAMES
            .into_iter()
            .zip([
                &mut self.conv1_weight,
                &mut self.conv1_bias,
                &mut self.conv2_weight,
                &mut self.conv2_bias,
                &mut self.conv3_weight,
                &mut self.conv3_bias,
                &mut self.fc_weight,
                &mut self.fc_bias,
            ])
            .collect()
    }
}

impl<T: Real> ModelParams<T> {
    pub fn zeros(config: &NetworkConfig) -> Self {
        let shapes = config.param_shapes();
        let t = |i: usize| Tensor::zeros(&shapes[i]);
        ModelParams {
            conv1_weight: t(0),
            conv1_bias: t(1),
            conv2_weight: t(2),
            conv2_bias: t(3),
            conv3_weight: t(4),
            conv3_bias: t(5),
            fc_weight: t(6),
            fc_bias: t(7),
        }
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.named().into_iter().find(|(n, _)| *n == name).map(|(_, t)| t)
    }

    pub fn parameter_count(&self) -> usize {
        self.named().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn cast<U: Real>(&self) -> ModelParams<U> {
        ModelParams {
            conv1_weight: self.conv1_weight.cast(),
            conv1_bias: self.conv1_bias.cast(),
            conv2_weight: self.conv2_weight.cast(),
            conv2_bias: self.conv2_bias.cast(),
            conv3_weight: self.conv3_weight.cast(),
            conv3_bias: self.conv3_bias.cast(),
            fc_weight: self.fc_weight.cast(),
            fc_bias: self.fc_bias.cast(),
        }
    }

    /// Check every tensor's shape against `config`.
    pub fn check_shapes(&self, config: &NetworkConfig) -> Result<()> {
        for ((name, t), shape) in self.named().into_iter().zip(config.param_shapes()) {
            if t.shape() != shape.as_slice() {
                return Err(Error::Architecture(format!(
                    "{name} has shape {:?}, config expects {shape:?}",
                    t.shape()
                )));
            }
        }
        Ok(())
    }
}

/// He-normal weights (variance `2 / fan_in`), zero biases.
pub fn build(config: &NetworkConfig, seed: u64) -> Result<ModelParams<f32>> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = ModelParams::<f32>::zeros(config);
    for (name, tensor) in params.named_mut() {
        if !name.ends_with(".weight") {
            continue;
        }
        let fan_in: usize = if name == "fc.weight" {
            tensor.shape()[0]
        } else {
            tensor.shape()[1..].iter().product()
        };
        let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive std");
        for w in tensor.data_mut() {
            *w = normal.sample(&mut rng) as f32;
        }
    }
    Ok(params)
}

/// Whether dropout is active. Training carries the RNG that draws the masks.
pub enum Phase<'a> {
    Infer,
    Train(&'a mut dyn RngCore),
}

struct Caches<T> {
    conv1: ConvCache<T>,
    pool1: PoolCache,
    relu1: ReluCache,
    conv2: ConvCache<T>,
    drop: DropoutCache<T>,
    pool2: PoolCache,
    relu2: ReluCache,
    conv3: ConvCache<T>,
    relu3: ReluCache,
    gap: GapCache,
    fc: DenseCache<T>,
}

pub struct ForwardTrace<T> {
    pub logits: Tensor<T>,
    /// Post-ReLU Conv3 feature maps `[N, c3, h, w]`.
    pub features: Tensor<T>,
    pub training: bool,
    caches: Caches<T>,
}

pub fn forward<T: Real>(
    params: &ModelParams<T>,
    config: &NetworkConfig,
    batch: &Tensor<T>,
    phase: Phase<'_>,
) -> Result<ForwardTrace<T>> {
    let [_, c, h, w] = batch.dims4("forward")?;
    if c != config.input_channels || h != config.input_size || w != config.input_size {
        return Err(Error::dim(
            "forward",
            batch.shape(),
            &[batch.shape()[0], config.input_channels, config.input_size, config.input_size],
        ));
    }
    if !batch.all_finite() {
        return Err(Error::NonFinite { what: "input", name: "batch".into() });
    }
    let [s1, s2, s3] = config.strides;
    let [p1, p2, p3] = config.paddings;

    let (x, conv1) = layers::conv2d_forward(batch, &params.conv1_weight, &params.conv1_bias, s1, p1)?;
    let (x, pool1) = layers::maxpool2d(&x, POOL_WINDOW, POOL_STRIDE)?;
    let (x, relu1) = layers::relu(&x);
    let (x, conv2) = layers::conv2d_forward(&x, &params.conv2_weight, &params.conv2_bias, s2, p2)?;
    let training = matches!(phase, Phase::Train(_));
    let (x, drop) = match phase {
        Phase::Train(rng) => layers::dropout(&x, config.dropout_p, rng, true)?,
        Phase::Infer => layers::dropout(&x, config.dropout_p, &mut ChaCha8Rng::seed_from_u64(0), false)?,
    };
    let (x, pool2) = layers::maxpool2d(&x, POOL_WINDOW, POOL_STRIDE)?;
    let (x, relu2) = layers::relu(&x);
    let (x, conv3) = layers::conv2d_forward(&x, &params.conv3_weight, &params.conv3_bias, s3, p3)?;
    let (features, relu3) = layers::relu(&x);
    let (pooled, gap) = layers::global_avg_pool(&features)?;
    let (logits, fc) = layers::dense(&pooled, &params.fc_weight, &params.fc_bias)?;

    Ok(ForwardTrace {
        logits,
        features,
        training,
        caches: Caches { conv1, pool1, relu1, conv2, drop, pool2, relu2, conv3, relu3, gap, fc },
    })
}

impl<T: Real> ForwardTrace<T> {
    /// Gradients of all parameters for the cotangent `grad_logits`.
    pub fn backward(self, params: &ModelParams<T>, grad_logits: &Tensor<T>) -> Result<ModelParams<T>> {
        let c = self.caches;
        let fc = layers::dense_backward(grad_logits, c.fc, &params.fc_weight)?;
        let g = layers::global_avg_pool_backward(&fc.input, c.gap)?;
        let g = layers::relu_backward(&g, c.relu3)?;
        let conv3 = layers::conv2d_backward(&g, c.conv3, &params.conv3_weight)?;
        let g = layers::relu_backward(&conv3.input, c.relu2)?;
        let g = layers::maxpool2d_backward(&g, c.pool2)?;
        let g = layers::dropout_backward(&g, c.drop)?;
        let conv2 = layers::conv2d_backward(&g, c.conv2, &params.conv2_weight)?;
        let g = layers::relu_backward(&conv2.input, c.relu1)?;
        let g = layers::maxpool2d_backward(&g, c.pool1)?;
        let conv1 = layers::conv2d_backward(&g, c.conv1, &params.conv1_weight)?;
        Ok(ModelParams {
            conv1_weight: conv1.kernels,
            conv1_bias: conv1.bias,
            conv2_weight: conv2.kernels,
            conv2_bias: conv2.bias,
            conv3_weight: conv3.kernels,
            conv3_bias: conv3.bias,
            fc_weight: fc.weights,
            fc_bias: fc.bias,
        })
    }

    /// Gradient of the cotangent-weighted logits with respect to the
    /// post-ReLU Conv3 feature maps.
    pub fn feature_gradient(self, params: &ModelParams<T>, grad_logits: &Tensor<T>) -> Result<Tensor<T>> {
        let fc = layers::dense_backward(grad_logits, self.caches.fc, &params.fc_weight)?;
        layers::global_avg_pool_backward(&fc.input, self.caches.gap)
    }

    pub fn predictions(&self) -> Vec<usize> {
        argmax_rows(&self.logits)
    }
}

pub fn argmax_rows<T: Real>(logits: &Tensor<T>) -> Vec<usize> {
    let k = logits.shape()[1];
    logits
        .data()
        .chunks(k)
        .map(|row| {
            let mut best = 0;
            for (j, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}

/// Mean cross-entropy loss, parameter gradients and predicted classes for one batch.
pub fn loss_and_gradients<T: Real>(
    params: &ModelParams<T>,
    config: &NetworkConfig,
    batch: &Tensor<T>,
    labels: &[usize],
    phase: Phase<'_>,
) -> Result<(T, ModelParams<T>, Vec<usize>)> {
    let trace = forward(params, config, batch, phase)?;
    let (loss, grad_logits) = layers::softmax_cross_entropy(&trace.logits, labels)?;
    let predicted = trace.predictions();
    let grads = trace.backward(params, &grad_logits)?;
    Ok((loss, grads, predicted))
}

/// Inference-mode logits for a list of `[C, S, S]` chips, in chunks of `batch_size`.
pub fn infer_logits(
    params: &ModelParams<f32>,
    config: &NetworkConfig,
    chips: &[Tensor<f32>],
    batch_size: usize,
) -> Result<Vec<[f32; 2]>> {
    let mut out = Vec::with_capacity(chips.len());
    for chunk in chips.chunks(batch_size.max(1)) {
        let refs: Vec<&Tensor<f32>> = chunk.iter().collect();
        let batch = Tensor::stack(&refs)?;
        let trace = forward(params, config, &batch, Phase::Infer)?;
        out.extend(trace.logits.data().chunks(2).map(|r| [r[0], r[1]]));
    }
    Ok(out)
}

pub fn predict(
    params: &ModelParams<f32>,
    config: &NetworkConfig,
    chips: &[Tensor<f32>],
    batch_size: usize,
) -> Result<Vec<usize>> {
    Ok(infer_logits(params, config, chips, batch_size)?
        .into_iter()
        .map(|[a, b]| usize::from(b > a))
        .collect())
}
