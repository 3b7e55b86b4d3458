use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

#[derive(Debug, Clone)]
pub struct GapCache {
    input_shape: [usize; 4],
}

/// Per-channel spatial mean: `[N, C, H, W] -> [N, C]`.
pub fn global_avg_pool<T: Real>(input: &Tensor<T>) -> Result<(Tensor<T>, GapCache)> {
    let [n, c, h, w] = input.dims4("global_avg_pool")?;
    let area = T::from_usize(h * w).expect("area fits");
    let means: Vec<T> = input
        .data()
        .chunks(h * w)
        .map(|plane| plane.iter().copied().sum::<T>() / area)
        .collect();
    Ok((Tensor::from_vec(&[n, c], means)?, GapCache { input_shape: [n, c, h, w] }))
}

pub fn global_avg_pool_backward<T: Real>(grad_out: &Tensor<T>, cache: GapCache) -> Result<Tensor<T>> {
    let [n, c, h, w] = cache.input_shape;
    if grad_out.shape() != [n, c] {
        return Err(Error::Contract(format!(
            "global_avg_pool backward: gradient shape {:?}, expected {:?}",
            grad_out.shape(),
            [n, c]
        )));
    }
    let area = T::from_usize(h * w).expect("area fits");
    let data = grad_out
        .data()
        .iter()
        .flat_map(|&g| std::iter::repeat_n(g / area, h * w))
        .collect();
    Tensor::from_vec(&cache.input_shape, data)
}

#[derive(Debug, Clone)]
pub struct DenseCache<T> {
    input: Tensor<T>,
    weight_shape: [usize; 2],
}

#[derive(Debug, Clone)]
pub struct DenseGrads<T> {
    pub input: Tensor<T>,
    pub weights: Tensor<T>,
    pub bias: Tensor<T>,
}

/// Affine map `input · weights + bias` with `weights: [C, K]`.
pub fn dense<T: Real>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    bias: &Tensor<T>,
) -> Result<(Tensor<T>, DenseCache<T>)> {
    let [n, c] = input.dims2("dense")?;
    let [wc, k] = weights.dims2("dense")?;
    if wc != c {
        return Err(Error::dim("dense", input.shape(), weights.shape()));
    }
    if bias.shape() != [k] {
        return Err(Error::dim("dense bias", bias.shape(), &[k]));
    }
    let mut out = Tensor::from_fn(&[n, k], |i| bias.data()[i % k]);
    T::gemm(
        n, c, k, T::one(),
        input.data(), (c as isize, 1),
        weights.data(), (k as isize, 1),
        T::one(),
        out.data_mut(), (k as isize, 1),
    );
    Ok((out, DenseCache { input: input.clone(), weight_shape: [c, k] }))
}

pub fn dense_backward<T: Real>(
    grad_out: &Tensor<T>,
    cache: DenseCache<T>,
    weights: &Tensor<T>,
) -> Result<DenseGrads<T>> {
    let [n, c] = cache.input.dims2("dense")?;
    let [_, k] = cache.weight_shape;
    if grad_out.shape() != [n, k] || weights.shape() != cache.weight_shape {
        return Err(Error::Contract(format!(
            "dense backward: gradient {:?} / weights {:?} do not match the cached call ({:?}, {:?})",
            grad_out.shape(),
            weights.shape(),
            [n, k],
            cache.weight_shape
        )));
    }
    let mut gin = Tensor::zeros(&[n, c]);
    T::gemm(
        n, k, c, T::one(),
        grad_out.data(), (k as isize, 1),
        weights.data(), (1, k as isize),
        T::zero(),
        gin.data_mut(), (c as isize, 1),
    );
    let mut gw = Tensor::zeros(&[c, k]);
    T::gemm(
        c, n, k, T::one(),
        cache.input.data(), (1, c as isize),
        grad_out.data(), (k as isize, 1),
        T::zero(),
        gw.data_mut(), (k as isize, 1),
    );
    let mut gb = Tensor::zeros(&[k]);
    for row in grad_out.data().chunks(k) {
        for (b, &g) in gb.data_mut().iter_mut().zip(row) {
            *b = *b + g;
        }
    }
    Ok(DenseGrads { input: gin, weights: gw, bias: gb })
}
