//! Class activation maps over the post-ReLU Conv3 features.
//!
//! Grad-CAM weights each channel by the spatial mean of `∂y_c/∂A_k`; GAP-CAM
//! weights it by the fully connected weight `w[k, c]`. With GAP feeding the FC
//! layer directly, the Grad-CAM weights are `w[k, c] / (h·w)`, so the two maps
//! agree after max-normalization.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{bilinear_resize, encode_png, RawImage, ShipBox};
use crate::error::{Error, Result};
use crate::model::{forward, ModelParams, NetworkConfig, Phase};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CamMethod {
    GradCam,
    GapCam,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    /// Un-normalized map at Conv3 resolution, `[h, w]`, non-negative.
    pub raw: Tensor<f32>,
    /// Bilinearly upsampled to the chip size and divided by its maximum, `[S, S]`.
    pub map: Tensor<f32>,
    pub target_class: usize,
    pub method: CamMethod,
}

impl Heatmap {
    /// `(x, y)` of the first maximum of the normalized map.
    pub fn peak(&self) -> (usize, usize) {
        let size = self.map.shape()[1];
        let i = self.map.argmax();
        (i % size, i / size)
    }

    pub fn size(&self) -> usize {
        self.map.shape()[0]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CamMask {
    pub threshold: f32,
    pub size: usize,
    /// Row-major `size × size`.
    pub mask: Vec<bool>,
}

impl CamMask {
    pub fn count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }
}

fn as_batch(chip: &Tensor<f32>) -> Result<Tensor<f32>> {
    match chip.rank() {
        3 => {
            let mut shape = vec![1];
            shape.extend_from_slice(chip.shape());
            chip.clone().reshape(&shape)
        }
        4 if chip.shape()[0] == 1 => Ok(chip.clone()),
        _ => Err(Error::dim("cam", chip.shape(), &[3, 0, 0])),
    }
}

fn check_class(target_class: usize, config: &NetworkConfig) -> Result<()> {
    if target_class >= config.num_classes {
        return Err(Error::Parameter(format!("target class {target_class} out of range")));
    }
    Ok(())
}

/// Weighted channel sum, ReLU'd: `max(0, Σ_k weight[k] · A_k)`.
fn weighted_sum(features: &Tensor<f32>, weights: &[f32]) -> Result<Tensor<f32>> {
    let [_, c, h, w] = features.dims4("cam")?;
    let mut raw = vec![0.0f32; h * w];
    for (k, &wk) in weights.iter().enumerate().take(c) {
        let plane = &features.data()[k * h * w..(k + 1) * h * w];
        for (r, &a) in raw.iter_mut().zip(plane) {
            *r += wk * a;
        }
    }
    raw.iter_mut().for_each(|v| *v = v.max(0.0));
    Tensor::from_vec(&[h, w], raw)
}

fn finish(raw: Tensor<f32>, size: usize, target_class: usize, method: CamMethod) -> Result<Heatmap> {
    let [h, w] = raw.dims2("cam")?;
    let mut up = bilinear_resize(raw.data(), h, w, size, size);
    let max = up.iter().copied().fold(0.0f32, f32::max);
    if max > 0.0 {
        up.iter_mut().for_each(|v| *v = (*v / max).max(0.0));
    } else {
        up.iter_mut().for_each(|v| *v = 0.0);
    }
    Ok(Heatmap { raw, map: Tensor::from_vec(&[size, size], up)?, target_class, method })
}

/// Grad-CAM channel weights: spatial means of the target logit's gradient
/// with respect to each Conv3 feature map.
pub fn grad_cam_weights(
    params: &ModelParams<f32>,
    config: &NetworkConfig,
    chip: &Tensor<f32>,
    target_class: usize,
) -> Result<(Vec<f32>, Tensor<f32>)> {
    check_class(target_class, config)?;
    let batch = as_batch(chip)?;
    let trace = forward(params, config, &batch, Phase::Infer)?;
    let features = trace.features.clone();
    let mut onehot = Tensor::zeros(&[1, config.num_classes]);
    onehot.data_mut()[target_class] = 1.0;
    let grad = trace.feature_gradient(params, &onehot)?;
    let [_, _, h, w] = grad.dims4("grad_cam")?;
    let alphas = grad.data().chunks(h * w).map(|p| p.iter().sum::<f32>() / (h * w) as f32).collect();
    Ok((alphas, features))
}

pub fn grad_cam(
    params: &ModelParams<f32>,
    config: &NetworkConfig,
    chip: &Tensor<f32>,
    target_class: usize,
) -> Result<Heatmap> {
    let (alphas, features) = grad_cam_weights(params, config, chip, target_class)?;
    finish(weighted_sum(&features, &alphas)?, config.input_size, target_class, CamMethod::GradCam)
}

pub fn gap_cam(
    params: &ModelParams<f32>,
    config: &NetworkConfig,
    chip: &Tensor<f32>,
    target_class: usize,
) -> Result<Heatmap> {
    check_class(target_class, config)?;
    let trace = forward(params, config, &as_batch(chip)?, Phase::Infer)?;
    let k = config.num_classes;
    let weights: Vec<f32> = params.fc_weight.data().chunks(k).map(|row| row[target_class]).collect();
    finish(weighted_sum(&trace.features, &weights)?, config.input_size, target_class, CamMethod::GapCam)
}

pub fn compute(
    method: CamMethod,
    params: &ModelParams<f32>,
    config: &NetworkConfig,
    chip: &Tensor<f32>,
    target_class: usize,
) -> Result<Heatmap> {
    match method {
        CamMethod::GradCam => grad_cam(params, config, chip, target_class),
        CamMethod::GapCam => gap_cam(params, config, chip, target_class),
    }
}

pub fn predicted_class(params: &ModelParams<f32>, config: &NetworkConfig, chip: &Tensor<f32>) -> Result<usize> {
    let trace = forward(params, config, &as_batch(chip)?, Phase::Infer)?;
    Ok(trace.predictions()[0])
}

pub fn threshold_mask(heatmap: &Heatmap, threshold: f32) -> Result<CamMask> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::Parameter(format!("threshold {threshold} outside [0, 1]")));
    }
    Ok(CamMask {
        threshold,
        size: heatmap.size(),
        mask: heatmap.map.data().iter().map(|&v| v >= threshold && (v > 0.0 || threshold == 0.0)).collect(),
    })
}

/// Input pixels covered by one Conv3 cell along each axis.
pub fn cell_footprint(config: &NetworkConfig) -> Result<usize> {
    Ok(config.input_size.div_ceil(config.feature_size()?))
}

/// Whether the heatmap peak lies inside `bbox` grown by `margin` pixels.
pub fn peak_in_box(heatmap: &Heatmap, bbox: &ShipBox, margin: usize) -> bool {
    let (x, y) = heatmap.peak();
    bbox.dilate(margin, heatmap.size()).contains(x, y)
}

/// Cold-to-warm color ramp: dark blue at 0, dark red at 1.
pub fn colormap(v: f32) -> [f32; 3] {
    let ramp = |center: f32| (1.5 - (4.0 * v - center).abs()).clamp(0.0, 1.0);
    [ramp(3.0), ramp(2.0), ramp(1.0)]
}

fn chip_rgb(chip: &Tensor<f32>) -> Result<(usize, Vec<[f32; 3]>)> {
    let [c, h, w] = match *chip.shape() {
        [c, h, w] => [c, h, w],
        [1, c, h, w] => [c, h, w],
        _ => return Err(Error::dim("render_overlay", chip.shape(), &[3, 0, 0])),
    };
    if h != w || c == 0 {
        return Err(Error::dim("render_overlay", chip.shape(), &[3, h, h]));
    }
    let px = |ch: usize, i: usize| chip.data()[ch.min(c - 1) * h * w + i];
    Ok((h, (0..h * w).map(|i| [px(0, i), px(1, i), px(2, i)]).collect()))
}

fn to_u8(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Chip followed by one blended panel per heatmap, left to right.
pub fn render_panels(chip: &Tensor<f32>, heatmaps: &[&Heatmap], path: &Path) -> Result<()> {
    let (size, rgb) = chip_rgb(chip)?;
    for hm in heatmaps {
        if hm.size() != size {
            return Err(Error::dim("render_overlay", &[size, size], hm.map.shape()));
        }
    }
    let panels = 1 + heatmaps.len();
    let width = size * panels;
    let mut pixels = vec![0u8; width * size * 3];
    for y in 0..size {
        for x in 0..size {
            let i = y * size + x;
            let [r, g, b] = rgb[i];
            let gray = (r + g + b) / 3.0;
            let mut put = |panel: usize, color: [f32; 3]| {
                let at = (y * width + panel * size + x) * 3;
                for (k, v) in color.into_iter().enumerate() {
                    pixels[at + k] = to_u8(v);
                }
            };
            put(0, [r, g, b]);
            for (p, hm) in heatmaps.iter().enumerate() {
                let heat = colormap(hm.map.data()[i]);
                put(p + 1, heat.map(|c| 0.5 * gray + 0.5 * c));
            }
        }
    }
    encode_png(&RawImage::new(width, size, 3, pixels)?, path)
}

/// Side-by-side chip and heatmap overlay.
pub fn render_overlay(chip: &Tensor<f32>, heatmap: &Heatmap, path: &Path) -> Result<()> {
    render_panels(chip, &[heatmap], path)
}
