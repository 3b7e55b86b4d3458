//! Adam, the mini-batch training loop, and fine-tuning from a checkpoint
//! with frozen layers.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{self, Checkpoint, ModelParams, NetworkConfig, ParamSet, Phase, PARAM_NAMES};
use crate::tensor::{Real, Tensor};

pub const DEFAULT_LEARNING_RATE: f64 = 1e-4;

/// First/second moment estimates for every parameter, plus the step count.
#[derive(Debug, Clone)]
pub struct AdamState<T> {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub step: u64,
    first: Vec<Tensor<T>>,
    second: Vec<Tensor<T>>,
}

impl<T: Real> AdamState<T> {
    pub fn new<P: ParamSet<T>>(params: &P, learning_rate: f64) -> Self {
        let zeros = || params.named().iter().map(|(_, t)| Tensor::zeros(t.shape())).collect();
        AdamState {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            first: zeros(),
            second: zeros(),
        }
    }

    pub fn first_moment(&self, index: usize) -> &Tensor<T> {
        &self.first[index]
    }

    pub fn second_moment(&self, index: usize) -> &Tensor<T> {
        &self.second[index]
    }
}

/// One bias-corrected Adam update. Parameters named in `frozen`, and their
/// moments, are left untouched. Nothing is modified if any gradient is non-finite.
pub fn adam_step<T: Real, P: ParamSet<T>>(
    params: &mut P,
    grads: &P,
    state: &mut AdamState<T>,
    frozen: &[&str],
) -> Result<()> {
    let grads = grads.named();
    for (name, g) in &grads {
        if !g.all_finite() {
            return Err(Error::NonFinite { what: "gradient", name: name.to_string() });
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let f = T::from_f64_lossy;
    let (b1, b2) = (f(state.beta1), f(state.beta2));
    let correction1 = f(1.0 - state.beta1.powi(t));
    let correction2 = f(1.0 - state.beta2.powi(t));
    let (lr, eps) = (f(state.learning_rate), f(state.epsilon));

    for (i, ((name, p), (gname, g))) in params.named_mut().into_iter().zip(grads).enumerate() {
        if p.shape() != g.shape() || name != gname {
            return Err(Error::dim("adam_step", p.shape(), g.shape()));
        }
        if frozen.contains(&name) {
            continue;
        }
        let m = state.first[i].data_mut();
        let v = state.second[i].data_mut();
        for (((w, &g), m), v) in p.data_mut().iter_mut().zip(g.data()).zip(m).zip(v) {
            *m = b1 * *m + (T::one() - b1) * g;
            *v = b2 * *v + (T::one() - b2) * g * g;
            let m_hat = *m / correction1;
            let v_hat = *v / correction2;
            *w = *w - lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Layer (`conv1`) or parameter (`conv1.weight`) names excluded from updates.
    pub frozen: Vec<String>,
    pub shuffle_seed: u64,
    pub dropout_seed: u64,
}

impl TrainConfig {
    /// Training from scratch on EO chips.
    pub fn eo() -> Self {
        TrainConfig {
            epochs: 100,
            batch_size: 32,
            learning_rate: DEFAULT_LEARNING_RATE,
            frozen: Vec::new(),
            shuffle_seed: 0,
            dropout_seed: 1,
        }
    }

    /// Fine-tuning on SAR chips with the first convolution frozen.
    pub fn finetune() -> Self {
        TrainConfig { epochs: 50, frozen: vec!["conv1".into()], ..Self::eo() }
    }

    /// Expand layer names to the parameter names they cover.
    pub fn frozen_parameters(&self) -> Result<Vec<&'static str>> {
        let mut out = Vec::new();
        for name in &self.frozen {
            let hits: Vec<&'static str> = PARAM_NAMES
                .iter()
                .copied()
                .filter(|p| *p == name || p.strip_prefix(name.as_str()).is_some_and(|r| r.starts_with('.')))
                .collect();
            if hits.is_empty() {
                return Err(Error::Parameter(format!("frozen layer {name:?} does not exist")));
            }
            out.extend(hits);
        }
        Ok(out)
    }

    fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Parameter("batch_size must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Parameter(format!("invalid learning rate {}", self.learning_rate)));
        }
        self.frozen_parameters().map(|_| ())
    }
}

/// Preprocessed chips `[C, S, S]` with class indices.
#[derive(Debug, Clone, Default)]
pub struct TrainSet {
    pub chips: Vec<Tensor<f32>>,
    pub labels: Vec<usize>,
}

impl TrainSet {
    pub fn len(&self) -> usize {
        self.chips.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chips.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub mean_loss: f64,
    pub train_accuracy: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    pub epochs: Vec<EpochRecord>,
    pub adam_steps: u64,
}

impl TrainLog {
    /// CSV with columns `epoch,mean_loss,train_accuracy`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["epoch", "mean_loss", "train_accuracy"])?;
        for e in &self.epochs {
            w.write_record([e.epoch.to_string(), e.mean_loss.to_string(), e.train_accuracy.to_string()])?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Mini-batch training with Adam. Batches follow a seeded per-epoch shuffle and
/// the last partial batch is kept. `progress` sees each finished epoch.
pub fn train_with_progress(
    mut params: ModelParams<f32>,
    network: &NetworkConfig,
    config: &TrainConfig,
    data: &TrainSet,
    mut progress: impl FnMut(&EpochRecord),
) -> Result<(ModelParams<f32>, TrainLog)> {
    config.validate()?;
    network.validate()?;
    params.check_shapes(network)?;
    if data.is_empty() {
        return Err(Error::Data("training set is empty".into()));
    }
    if data.labels.len() != data.chips.len() {
        return Err(Error::dim("train", &[data.chips.len()], &[data.labels.len()]));
    }
    if !(0..network.num_classes).all(|c| data.labels.contains(&c)) {
        return Err(Error::Data("training set must contain both ship and no-ship chips".into()));
    }

    let frozen = config.frozen_parameters()?;
    let mut state = AdamState::new(&params, config.learning_rate);
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(config.shuffle_seed);
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(config.dropout_seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut log = TrainLog::default();

    for epoch in 1..=config.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        let mut correct = 0;
        for batch_idx in order.chunks(config.batch_size) {
            let chips: Vec<&Tensor<f32>> = batch_idx.iter().map(|&i| &data.chips[i]).collect();
            let labels: Vec<usize> = batch_idx.iter().map(|&i| data.labels[i]).collect();
            let batch = Tensor::stack(&chips)?;
            let (loss, grads, predicted) =
                model::loss_and_gradients(&params, network, &batch, &labels, Phase::Train(&mut dropout_rng))?;
            if !loss.is_finite() {
                return Err(Error::NonFinite { what: "loss", name: format!("epoch {epoch}") });
            }
            adam_step(&mut params, &grads, &mut state, &frozen)?;
            loss_sum += loss as f64 * labels.len() as f64;
            correct += predicted.iter().zip(&labels).filter(|(p, l)| p == l).count();
        }
        let record = EpochRecord {
            epoch,
            mean_loss: loss_sum / data.len() as f64,
            train_accuracy: correct as f64 / data.len() as f64,
        };
        progress(&record);
        log.epochs.push(record);
    }
    log.adam_steps = state.step;
    Ok((params, log))
}

pub fn train(
    params: ModelParams<f32>,
    network: &NetworkConfig,
    config: &TrainConfig,
    data: &TrainSet,
) -> Result<(ModelParams<f32>, TrainLog)> {
    train_with_progress(params, network, config, data, |_| {})
}

/// Fine-tune from a checkpoint with fresh Adam moments. When `expected` is
/// given, the checkpoint's architecture must match it.
pub fn finetune(
    checkpoint: &Path,
    expected: Option<&NetworkConfig>,
    data: &TrainSet,
    config: &TrainConfig,
) -> Result<(ModelParams<f32>, NetworkConfig, TrainLog)> {
    let ckpt = Checkpoint::load(checkpoint)?;
    if let Some(expected) = expected {
        if expected != &ckpt.config {
            return Err(Error::Architecture(format!(
                "checkpoint {} was built for {:?}, expected {:?}",
                checkpoint.display(),
                ckpt.config,
                expected
            )));
        }
    }
    let (params, log) = train(ckpt.params, &ckpt.config, config, data)?;
    Ok((params, ckpt.config, log))
}

/// Read a training log written by [`TrainLog::write_csv`].
pub fn read_log(path: &Path) -> Result<Vec<EpochRecord>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let mut out = Vec::new();
    for row in reader.records() {
        let row = row?;
        let parse = |i: usize| row[i].parse::<f64>().map_err(|_| Error::Data(format!("bad log value {:?}", &row[i])));
        out.push(EpochRecord { epoch: parse(0)? as usize, mean_loss: parse(1)?, train_accuracy: parse(2)? });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// A single scalar parameter, for checking the update rule in isolation.
    struct Scalar(Tensor<f64>);

    impl ParamSet<f64> for Scalar {
        fn named(&self) -> Vec<(&'static str, &Tensor<f64>)> {
            vec![("theta", &self.0)]
        }
        fn named_mut(&mut self) -> Vec<(&'static str, &mut Tensor<f64>)> {
            vec![("theta", &mut self.0)]
        }
    }

    fn scalar(v: f64) -> Scalar {
        Scalar(Tensor::full(&[1], v))
    }

    #[test]
    fn zero_gradient_leaves_parameters_but_counts_the_step() {
        let mut p = scalar(0.7);
        let mut state = AdamState::new(&p, 1e-4);
        adam_step(&mut p, &scalar(0.0), &mut state, &[]).unwrap();
        assert_eq!(p.0.data(), &[0.7]);
        assert_eq!(state.step, 1);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        // At t = 1: m̂ = g and v̂ = g², so Δθ = -α·g / (|g| + ε).
        let mut p = scalar(0.0);
        let mut state = AdamState::new(&p, 1e-4);
        adam_step(&mut p, &scalar(1.0), &mut state, &[]).unwrap();
        let expected = -1e-4 * 1.0 / (1.0 + 1e-8);
        assert!((p.0.data()[0] - expected).abs() < 1e-15);
    }

    #[test]
    fn minimizes_a_quadratic() {
        // Reference values from the textbook update applied to f(θ) = θ², θ₀ = 1, α = 0.01.
        let reference = {
            let (mut th, mut m, mut v) = (1.0f64, 0.0f64, 0.0f64);
            let mut trace = Vec::new();
            for t in 1..=200 {
                let g = 2.0 * th;
                m = 0.9 * m + 0.1 * g;
                v = 0.999 * v + 0.001 * g * g;
                th -= 0.01 * (m / (1.0 - 0.9f64.powi(t))) / ((v / (1.0 - 0.999f64.powi(t))).sqrt() + 1e-8);
                trace.push(th);
            }
            trace
        };
        let mut p = scalar(1.0);
        let mut state = AdamState::new(&p, 0.01);
        let mut trace = Vec::new();
        for _ in 0..200 {
            let g = scalar(2.0 * p.0.data()[0]);
            adam_step(&mut p, &g, &mut state, &[]).unwrap();
            trace.push(p.0.data()[0]);
        }
        for (a, b) in trace.iter().zip(&reference) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(trace[199].abs() < 1.0);
        // Decreasing in trend: each 50-step block ends closer to zero than the last.
        let ends: Vec<f64> = trace.chunks(50).map(|c| c[49].abs()).collect();
        assert!(ends.windows(2).all(|w| w[1] < w[0]), "{ends:?}");
        assert!(state.second_moment(0).data()[0] >= 0.0);
    }

    #[test]
    fn frozen_parameters_and_moments_stay_put() {
        let mut p = scalar(0.5);
        let mut state = AdamState::new(&p, 1e-2);
        adam_step(&mut p, &scalar(3.0), &mut state, &["theta"]).unwrap();
        assert_eq!(p.0.data(), &[0.5]);
        assert_eq!(state.first_moment(0).data(), &[0.0]);
        assert_eq!(state.second_moment(0).data(), &[0.0]);
    }

    #[test]
    fn non_finite_gradient_aborts_with_its_name() {
        let mut p = scalar(0.5);
        let mut state = AdamState::new(&p, 1e-2);
        let err = adam_step(&mut p, &scalar(f64::NAN), &mut state, &[]).unwrap_err();
        assert!(err.to_string().contains("theta"));
        assert_eq!(state.step, 0);
        assert_eq!(p.0.data(), &[0.5]);
    }

    #[test]
    fn frozen_names_expand_to_parameters() {
        let cfg = TrainConfig::finetune();
        assert_eq!(cfg.frozen_parameters().unwrap(), vec!["conv1.weight", "conv1.bias"]);
        let bad = TrainConfig { frozen: vec!["conv9".into()], ..TrainConfig::eo() };
        assert!(bad.frozen_parameters().is_err());
        let prefix_only = TrainConfig { frozen: vec!["conv".into()], ..TrainConfig::eo() };
        assert!(prefix_only.frozen_parameters().is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn second_moment_never_negative(grads in proptest::collection::vec(-1e3f64..1e3, 1..50)) {
                let mut p = scalar(0.0);
                let mut state = AdamState::new(&p, 1e-3);
                for g in grads {
                    adam_step(&mut p, &scalar(g), &mut state, &[]).unwrap();
                    prop_assert!(state.second_moment(0).data()[0] >= 0.0);
                }
            }
        }
    }
}
