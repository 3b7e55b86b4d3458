use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::tensor::{debug_assert_finite, Real, Tensor};

/// Output extent of a convolution or pooling window along one axis.
pub fn conv_output_extent(size: usize, kernel: usize, stride: usize, padding: usize) -> Option<usize> {
    let padded = size + 2 * padding;
    if stride == 0 || kernel == 0 || kernel > padded {
        return None;
    }
    Some((padded - kernel) / stride + 1)
}

#[derive(Debug, Clone)]
pub struct ConvCache<T> {
    input: Tensor<T>,
    kernel_shape: [usize; 4],
    stride: usize,
    padding: usize,
    out_shape: [usize; 4],
}

#[derive(Debug, Clone)]
pub struct ConvGrads<T> {
    pub input: Tensor<T>,
    pub kernels: Tensor<T>,
    pub bias: Tensor<T>,
}

#[derive(Clone, Copy)]
struct Geometry {
    channels: usize,
    height: usize,
    width: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    padding: usize,
    out_h: usize,
    out_w: usize,
}

impl Geometry {
    fn patch_len(&self) -> usize {
        self.channels * self.kh * self.kw
    }

    fn positions(&self) -> usize {
        self.out_h * self.out_w
    }

    /// Source pixel for output row/col `(i, j)` and kernel offset `(u, v)`,
    /// or `None` when it lands in the zero padding.
    #[inline]
    fn source(&self, i: usize, j: usize, u: usize, v: usize) -> Option<(usize, usize)> {
        let y = (i * self.stride + u).checked_sub(self.padding)?;
        let x = (j * self.stride + v).checked_sub(self.padding)?;
        (y < self.height && x < self.width).then_some((y, x))
    }
}

/// Unfold one sample `[C, H, W]` into a `[C*kh*kw, H'*W']` column matrix.
fn im2col<T: Real>(sample: &[T], g: &Geometry) -> Vec<T> {
    let positions = g.positions();
    let mut cols = vec![T::zero(); g.patch_len() * positions];
    for c in 0..g.channels {
        let plane = &sample[c * g.height * g.width..(c + 1) * g.height * g.width];
        for u in 0..g.kh {
            for v in 0..g.kw {
                let row = &mut cols[((c * g.kh + u) * g.kw + v) * positions..][..positions];
                for i in 0..g.out_h {
                    for j in 0..g.out_w {
                        if let Some((y, x)) = g.source(i, j, u, v) {
                            row[i * g.out_w + j] = plane[y * g.width + x];
                        }
                    }
                }
            }
        }
    }
    cols
}

/// Fold a column matrix back onto `[C, H, W]`, accumulating overlaps.
fn col2im<T: Real>(cols: &[T], g: &Geometry, out: &mut [T]) {
    let positions = g.positions();
    for c in 0..g.channels {
        let plane = &mut out[c * g.height * g.width..(c + 1) * g.height * g.width];
        for u in 0..g.kh {
            for v in 0..g.kw {
                let row = &cols[((c * g.kh + u) * g.kw + v) * positions..][..positions];
                for i in 0..g.out_h {
                    for j in 0..g.out_w {
                        if let Some((y, x)) = g.source(i, j, u, v) {
                            let idx = y * g.width + x;
                            plane[idx] = plane[idx] + row[i * g.out_w + j];
                        }
                    }
                }
            }
        }
    }
}

pub fn conv2d_forward<T: Real>(
    input: &Tensor<T>,
    kernels: &Tensor<T>,
    bias: &Tensor<T>,
    stride: usize,
    padding: usize,
) -> Result<(Tensor<T>, ConvCache<T>)> {
    let [n, cin, h, w] = input.dims4("conv2d")?;
    let [cout, kcin, kh, kw] = kernels.dims4("conv2d")?;
    if kcin != cin {
        return Err(Error::dim("conv2d", input.shape(), kernels.shape()));
    }
    if bias.shape() != [cout] {
        return Err(Error::dim("conv2d bias", bias.shape(), &[cout]));
    }
    if stride == 0 {
        return Err(Error::Parameter("conv2d stride must be positive".into()));
    }
    let (Some(out_h), Some(out_w)) = (
        conv_output_extent(h, kh, stride, padding),
        conv_output_extent(w, kw, stride, padding),
    ) else {
        return Err(Error::dim("conv2d", input.shape(), kernels.shape()));
    };
    let g = Geometry { channels: cin, height: h, width: w, kh, kw, stride, padding, out_h, out_w };
    let in_per = cin * h * w;
    let out_per = cout * g.positions();
    let k = g.patch_len();
    let p = g.positions();

    let per_sample: Vec<Vec<T>> = (0..n)
        .into_par_iter()
        .map(|s| {
            let cols = im2col(&input.data()[s * in_per..(s + 1) * in_per], &g);
            let mut out = vec![T::zero(); out_per];
            for (o, &b) in bias.data().iter().enumerate() {
                out[o * p..(o + 1) * p].fill(b);
            }
            T::gemm(
                cout, k, p, T::one(),
                kernels.data(), (k as isize, 1),
                &cols, (p as isize, 1),
                T::one(),
                &mut out, (p as isize, 1),
            );
            out
        })
        .collect();

    let out_shape = [n, cout, out_h, out_w];
    let output = Tensor::from_vec(&out_shape, per_sample.concat())?;
    debug_assert_finite("conv2d", &output);
    let cache = ConvCache {
        input: input.clone(),
        kernel_shape: [cout, cin, kh, kw],
        stride,
        padding,
        out_shape,
    };
    Ok((output, cache))
}

pub fn conv2d_backward<T: Real>(
    grad_out: &Tensor<T>,
    cache: ConvCache<T>,
    kernels: &Tensor<T>,
) -> Result<ConvGrads<T>> {
    if grad_out.shape() != cache.out_shape {
        return Err(Error::Contract(format!(
            "conv2d backward: gradient shape {:?} does not match cached output {:?}",
            grad_out.shape(),
            cache.out_shape
        )));
    }
    if kernels.shape() != cache.kernel_shape {
        return Err(Error::Contract(format!(
            "conv2d backward: kernels {:?} differ from the cached forward call {:?}",
            kernels.shape(),
            cache.kernel_shape
        )));
    }
    let [n, cin, h, w] = cache.input.dims4("conv2d")?;
    let [cout, _, kh, kw] = cache.kernel_shape;
    let [_, _, out_h, out_w] = cache.out_shape;
    let g = Geometry {
        channels: cin,
        height: h,
        width: w,
        kh,
        kw,
        stride: cache.stride,
        padding: cache.padding,
        out_h,
        out_w,
    };
    let k = g.patch_len();
    let p = g.positions();
    let in_per = cin * h * w;

    let per_sample: Vec<(Vec<T>, Vec<T>, Vec<T>)> = (0..n)
        .into_par_iter()
        .map(|s| {
            let gout = &grad_out.data()[s * cout * p..(s + 1) * cout * p];
            let cols = im2col(&cache.input.data()[s * in_per..(s + 1) * in_per], &g);

            // dK = dY · colsᵀ
            let mut gk = vec![T::zero(); cout * k];
            T::gemm(
                cout, p, k, T::one(),
                gout, (p as isize, 1),
                &cols, (1, p as isize),
                T::zero(),
                &mut gk, (k as isize, 1),
            );
            let gb: Vec<T> = gout.chunks(p).map(|row| row.iter().copied().sum()).collect();

            // dcols = Kᵀ · dY
            let mut gcols = vec![T::zero(); k * p];
            T::gemm(
                k, cout, p, T::one(),
                kernels.data(), (1, k as isize),
                gout, (p as isize, 1),
                T::zero(),
                &mut gcols, (p as isize, 1),
            );
            let mut gin = vec![T::zero(); in_per];
            col2im(&gcols, &g, &mut gin);
            (gin, gk, gb)
        })
        .collect();

    let mut grad_kernels = Tensor::zeros(&cache.kernel_shape);
    let mut grad_bias = Tensor::zeros(&[cout]);
    let mut grad_input = Vec::with_capacity(n * in_per);
    // Reduce in sample order so results do not depend on thread scheduling.
    for (gin, gk, gb) in per_sample {
        grad_input.extend_from_slice(&gin);
        for (a, b) in grad_kernels.data_mut().iter_mut().zip(gk) {
            *a = *a + b;
        }
        for (a, b) in grad_bias.data_mut().iter_mut().zip(gb) {
            *a = *a + b;
        }
    }
    let grad_input = Tensor::from_vec(&[n, cin, h, w], grad_input)?;
    debug_assert_finite("conv2d backward", &grad_input);
    Ok(ConvGrads { input: grad_input, kernels: grad_kernels, bias: grad_bias })
}
