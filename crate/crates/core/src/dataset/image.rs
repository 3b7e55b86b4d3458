use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// 8-bit interleaved image with 1 (gray) or 3 (RGB) channels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawImage {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub pixels: Vec<u8>,
}

impl RawImage {
    pub fn new(width: usize, height: usize, channels: usize, pixels: Vec<u8>) -> Result<Self> {
        if !(channels == 1 || channels == 3) || width == 0 || height == 0 {
            return Err(Error::Parameter(format!(
                "unsupported image geometry {width}x{height}x{channels}"
            )));
        }
        if pixels.len() != width * height * channels {
            return Err(Error::dim("image", &[height, width, channels], &[pixels.len()]));
        }
        Ok(RawImage { width, height, channels, pixels })
    }
}

pub fn decode_image(path: &Path) -> Result<RawImage> {
    let err = |msg: String| Error::Image { path: path.to_path_buf(), msg };
    let img = image::open(path).map_err(|e| err(e.to_string()))?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    if img.color().has_color() {
        RawImage::new(w, h, 3, img.to_rgb8().into_raw())
    } else {
        RawImage::new(w, h, 1, img.to_luma8().into_raw())
    }
}

pub fn encode_png(img: &RawImage, path: &Path) -> Result<()> {
    let color = if img.channels == 1 {
        image::ExtendedColorType::L8
    } else {
        image::ExtendedColorType::Rgb8
    };
    image::save_buffer_with_format(
        path,
        &img.pixels,
        img.width as u32,
        img.height as u32,
        color,
        image::ImageFormat::Png,
    )
    .map_err(|e| Error::Image { path: path.to_path_buf(), msg: e.to_string() })
}

/// Bilinear resampling of one plane using pixel-center alignment
/// (source coordinate `(i + 0.5) * in / out - 0.5`, clamped at the borders).
pub fn bilinear_resize(plane: &[f32], height: usize, width: usize, out_h: usize, out_w: usize) -> Vec<f32> {
    assert_eq!(plane.len(), height * width);
    if height == out_h && width == out_w {
        return plane.to_vec();
    }
    let axis = |out: usize, size: usize| -> Vec<(usize, usize, f32)> {
        (0..out)
            .map(|i| {
                let src = ((i as f64 + 0.5) * size as f64 / out as f64 - 0.5).clamp(0.0, (size - 1) as f64);
                let lo = src.floor() as usize;
                let hi = (lo + 1).min(size - 1);
                (lo, hi, (src - lo as f64) as f32)
            })
            .collect()
    };
    let rows = axis(out_h, height);
    let cols = axis(out_w, width);
    let mut out = Vec::with_capacity(out_h * out_w);
    for &(y0, y1, fy) in &rows {
        for &(x0, x1, fx) in &cols {
            let top = plane[y0 * width + x0] * (1.0 - fx) + plane[y0 * width + x1] * fx;
            let bottom = plane[y1 * width + x0] * (1.0 - fx) + plane[y1 * width + x1] * fx;
            out.push(top * (1.0 - fy) + bottom * fy);
        }
    }
    out
}

/// Scale to [0, 1], replicate grayscale to three channels and resize to `size × size`.
pub fn preprocess(img: &RawImage, size: usize) -> Result<Tensor<f32>> {
    if size == 0 {
        return Err(Error::Parameter("target size must be positive".into()));
    }
    let (w, h) = (img.width, img.height);
    let mut data = Vec::with_capacity(3 * size * size);
    for c in 0..3 {
        let src = if img.channels == 1 { 0 } else { c };
        let plane: Vec<f32> = (0..w * h)
            .map(|p| img.pixels[p * img.channels + src] as f32 / 255.0)
            .collect();
        data.extend(bilinear_resize(&plane, h, w, size, size));
    }
    Tensor::from_vec(&[3, size, size], data)
}
