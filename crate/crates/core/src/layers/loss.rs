use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

/// Mean softmax cross-entropy over the batch and its gradient
/// `(softmax - onehot) / N` with respect to the logits.
pub fn softmax_cross_entropy<T: Real>(logits: &Tensor<T>, labels: &[usize]) -> Result<(T, Tensor<T>)> {
    let [n, k] = logits.dims2("softmax_cross_entropy")?;
    if labels.len() != n {
        return Err(Error::dim("softmax_cross_entropy labels", logits.shape(), &[labels.len()]));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
        return Err(Error::Parameter(format!("label {bad} out of range for {k} classes")));
    }
    let batch = T::from_usize(n).expect("batch fits");
    let mut loss = T::zero();
    let mut grad = Tensor::zeros(&[n, k]);
    for ((row, grow), &label) in logits.data().chunks(k).zip(grad.data_mut().chunks_mut(k)).zip(labels) {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let sum: T = row.iter().map(|&z| (z - max).exp()).sum();
        let log_sum = sum.ln();
        loss = loss - (row[label] - max - log_sum);
        for (j, (g, &z)) in grow.iter_mut().zip(row).enumerate() {
            let p = (z - max - log_sum).exp();
            let target = if j == label { T::one() } else { T::zero() };
            *g = (p - target) / batch;
        }
    }
    Ok((loss / batch, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layers::{finite_difference_gradient, relative_error};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn uniform_logits_cost_ln2() {
        let logits = Tensor::<f64>::zeros(&[1, 2]);
        for label in 0..2 {
            let (loss, _) = softmax_cross_entropy(&logits, &[label]).unwrap();
            assert!((loss - std::f64::consts::LN_2).abs() < 1e-12);
        }
    }

    #[test]
    fn saturated_correct_prediction_has_no_loss() {
        let logits = Tensor::<f32>::from_vec(&[1, 2], vec![30.0, -30.0]).unwrap();
        let (loss, grad) = softmax_cross_entropy(&logits, &[0]).unwrap();
        assert!(loss.abs() < 1e-6);
        assert!(grad.data().iter().all(|g| g.abs() < 1e-6));
    }

    #[test]
    fn rejects_label_out_of_range() {
        let logits = Tensor::<f32>::zeros(&[1, 2]);
        assert!(matches!(softmax_cross_entropy(&logits, &[2]), Err(Error::Parameter(_))));
    }

    #[test]
    fn gradient_rows_sum_to_zero_and_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let logits = Tensor::<f64>::from_fn(&[6, 2], |_| rng.random_range(-3.0..3.0));
        let labels = [0, 1, 1, 0, 1, 0];
        let (_, grad) = softmax_cross_entropy(&logits, &labels).unwrap();
        for row in grad.data().chunks(2) {
            assert!(row.iter().sum::<f64>().abs() < 1e-6);
        }
        let fd = finite_difference_gradient(
            |z| softmax_cross_entropy(z, &labels).unwrap().0,
            &logits,
            1e-5,
        );
        assert!(relative_error(&grad, &fd) < 1e-5);
    }
}
