use crate::error::{Error, Result};
use crate::layers::conv_output_extent;
use crate::tensor::{Real, Tensor};

#[derive(Debug, Clone)]
pub struct PoolCache {
    input_shape: [usize; 4],
    out_shape: [usize; 4],
    /// Flat input index of each output's maximum.
    argmax: Vec<usize>,
}

/// Max pooling without padding. Ties resolve to the first element of the
/// window in row-major order.
pub fn maxpool2d<T: Real>(
    input: &Tensor<T>,
    window: usize,
    stride: usize,
) -> Result<(Tensor<T>, PoolCache)> {
    let [n, c, h, w] = input.dims4("maxpool2d")?;
    if window == 0 || stride == 0 {
        return Err(Error::Parameter("maxpool2d window and stride must be positive".into()));
    }
    let (Some(oh), Some(ow)) =
        (conv_output_extent(h, window, stride, 0), conv_output_extent(w, window, stride, 0))
    else {
        return Err(Error::dim("maxpool2d", input.shape(), &[window, window]));
    };
    let x = input.data();
    let mut out = Vec::with_capacity(n * c * oh * ow);
    let mut argmax = Vec::with_capacity(n * c * oh * ow);
    for plane in 0..n * c {
        let base = plane * h * w;
        for i in 0..oh {
            for j in 0..ow {
                let mut best = base + i * stride * w + j * stride;
                for u in 0..window {
                    for v in 0..window {
                        let idx = base + (i * stride + u) * w + j * stride + v;
                        if x[idx] > x[best] {
                            best = idx;
                        }
                    }
                }
                out.push(x[best]);
                argmax.push(best);
            }
        }
    }
    let out_shape = [n, c, oh, ow];
    Ok((
        Tensor::from_vec(&out_shape, out)?,
        PoolCache { input_shape: [n, c, h, w], out_shape, argmax },
    ))
}

pub fn maxpool2d_backward<T: Real>(grad_out: &Tensor<T>, cache: PoolCache) -> Result<Tensor<T>> {
    if grad_out.shape() != cache.out_shape {
        return Err(Error::Contract(format!(
            "maxpool2d backward: gradient shape {:?} does not match cached output {:?}",
            grad_out.shape(),
            cache.out_shape
        )));
    }
    let mut grad = Tensor::zeros(&cache.input_shape);
    let g = grad.data_mut();
    for (&idx, &d) in cache.argmax.iter().zip(grad_out.data()) {
        g[idx] = g[idx] + d;
    }
    Ok(grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layers::{finite_difference_gradient, relative_error};
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn picks_window_maximum_and_routes_gradient() {
        let x = Tensor::<f32>::from_vec(&[1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let (y, cache) = maxpool2d(&x, 2, 2).unwrap();
        assert_eq!(y.data(), &[4.0]);
        let g = maxpool2d_backward(&Tensor::full(&[1, 1, 1, 1], 1.0), cache).unwrap();
        assert_eq!(g.data(), &[0.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn ties_go_to_first_element_of_each_window() {
        let x = Tensor::<f32>::full(&[1, 1, 4, 4], 0.5);
        let (y, cache) = maxpool2d(&x, 2, 2).unwrap();
        let g = maxpool2d_backward(&Tensor::full(y.shape(), 1.0), cache).unwrap();
        #[rustfmt::skip]
        let expected = [
            1.0, 0.0, 1.0, 0.0,
            0.0, 0.0, 0.0, 0.0,
            1.0, 0.0, 1.0, 0.0,
            0.0, 0.0, 0.0, 0.0,
        ];
        assert_eq!(g.data(), &expected);
    }

    #[test]
    fn window_larger_than_input_is_rejected() {
        let x = Tensor::<f32>::zeros(&[1, 1, 1, 3]);
        assert!(matches!(maxpool2d(&x, 2, 2), Err(Error::Dimension { .. })));
    }

    #[test]
    fn odd_extent_drops_trailing_row() {
        let x = Tensor::<f32>::from_fn(&[1, 1, 5, 5], |i| i as f32);
        let (y, _) = maxpool2d(&x, 2, 2).unwrap();
        assert_eq!(y.shape(), &[1, 1, 2, 2]);
        assert_eq!(y.data(), &[6.0, 8.0, 16.0, 18.0]);
    }

    #[test]
    fn gradient_matches_finite_differences_on_tie_free_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        // A shuffled ramp has well-separated distinct values.
        let mut values: Vec<f64> = (0..72).map(|i| i as f64 * 0.1).collect();
        values.shuffle(&mut rng);
        let x = Tensor::from_vec(&[1, 2, 6, 6], values).unwrap();
        let gout = Tensor::from_fn(&[1, 2, 3, 3], |i| (i as f64 * 0.37).sin());
        let (_, cache) = maxpool2d(&x, 2, 2).unwrap();
        let g = maxpool2d_backward(&gout, cache).unwrap();
        let fd = finite_difference_gradient(
            |x| {
                let (y, _) = maxpool2d(x, 2, 2).unwrap();
                y.data().iter().zip(gout.data()).map(|(a, b)| a * b).sum()
            },
            &x,
            1e-6,
        );
        assert!(relative_error(&g, &fd) < 1e-8);
    }
}
