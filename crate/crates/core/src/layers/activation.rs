use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

#[derive(Debug, Clone)]
pub struct ReluCache {
    active: Vec<bool>,
    shape: Vec<usize>,
}

pub fn relu<T: Real>(input: &Tensor<T>) -> (Tensor<T>, ReluCache) {
    let active: Vec<bool> = input.data().iter().map(|&x| x > T::zero()).collect();
    let out = input.map(|x| if x > T::zero() { x } else { T::zero() });
    (out, ReluCache { active, shape: input.shape().to_vec() })
}

/// Subgradient at zero is zero.
pub fn relu_backward<T: Real>(grad_out: &Tensor<T>, cache: ReluCache) -> Result<Tensor<T>> {
    if grad_out.shape() != cache.shape.as_slice() {
        return Err(Error::Contract(format!(
            "relu backward: gradient shape {:?} does not match cached {:?}",
            grad_out.shape(),
            cache.shape
        )));
    }
    let mut g = grad_out.clone();
    for (v, &on) in g.data_mut().iter_mut().zip(&cache.active) {
        if !on {
            *v = T::zero();
        }
    }
    Ok(g)
}

#[derive(Debug, Clone)]
pub struct DropoutCache<T> {
    /// Per-element multiplier (0 or 1/(1-p)); `None` when the forward was an identity.
    scale: Option<Vec<T>>,
    shape: Vec<usize>,
}

/// Inverted dropout: survivors are scaled by `1/(1-p)` during training so
/// inference is the identity.
pub fn dropout<T: Real, R: Rng + ?Sized>(
    input: &Tensor<T>,
    p: f64,
    rng: &mut R,
    training: bool,
) -> Result<(Tensor<T>, DropoutCache<T>)> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::Parameter(format!("dropout probability must be in [0, 1), got {p}")));
    }
    let shape = input.shape().to_vec();
    if !training || p == 0.0 {
        return Ok((input.clone(), DropoutCache { scale: None, shape }));
    }
    let keep = T::from_f64_lossy(1.0 / (1.0 - p));
    let scale: Vec<T> = (0..input.len())
        .map(|_| if rng.random::<f64>() < p { T::zero() } else { keep })
        .collect();
    let mut out = input.clone();
    out.data_mut().iter_mut().zip(&scale).for_each(|(x, &s)| *x = *x * s);
    Ok((out, DropoutCache { scale: Some(scale), shape }))
}

pub fn dropout_backward<T: Real>(grad_out: &Tensor<T>, cache: DropoutCache<T>) -> Result<Tensor<T>> {
    if grad_out.shape() != cache.shape.as_slice() {
        return Err(Error::Contract(format!(
            "dropout backward: gradient shape {:?} does not match cached {:?}",
            grad_out.shape(),
            cache.shape
        )));
    }
    let mut g = grad_out.clone();
    if let Some(scale) = cache.scale {
        g.data_mut().iter_mut().zip(scale).for_each(|(x, s)| *x = *x * s);
    }
    Ok(g)
}
