use ndarray::{Array1, Array2};

/// Row-wise softmax, shifted by the row maximum.
pub fn softmax(logits: &Array2<f64>) -> Array2<f64> {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let total = row.sum();
        row /= total;
    }
    out
}

/// Per-row losses `-log softmax(logits)[label]` and the per-row gradient
/// `softmax - onehot` (not divided by the batch size).
pub fn cross_entropy_per_sample(logits: &Array2<f64>, labels: &[usize]) -> (Array1<f64>, Array2<f64>) {
    assert_eq!(logits.nrows(), labels.len(), "one label per logit row");
    let mut grad = softmax(logits);
    let mut losses = Array1::zeros(labels.len());
    for (i, (row, &label)) in logits.rows().into_iter().zip(labels).enumerate() {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let lse = max + row.iter().map(|&v| (v - max).exp()).sum::<f64>().ln();
        losses[i] = lse - row[label];
        grad[[i, label]] -= 1.0;
    }
    (losses, grad)
}

/// Mean cross-entropy over the rows and its gradient with respect to the logits.
pub fn cross_entropy(logits: &Array2<f64>, labels: &[usize]) -> (f64, Array2<f64>) {
    let (losses, grad) = cross_entropy_per_sample(logits, labels);
    if labels.is_empty() {
        return (0.0, grad);
    }
    let n = labels.len() as f64;
    (losses.sum() / n, grad / n)
}

/// Row-wise argmax; ties go to the lowest class index.
pub fn predict(logits: &Array2<f64>) -> Vec<usize> {
    logits
        .rows()
        .into_iter()
        .map(|row| {
            let mut best = 0;
            for (c, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = c;
                }
            }
            best
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{keyed_rng, Domain};
    use ndarray::array;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn uniform_logits_give_log_c() {
        let (loss, _) = cross_entropy(&Array2::from_elem((3, 4), 0.7), &[0, 1, 3]);
        assert!((loss - 4f64.ln()).abs() < 1e-12);
        assert!((loss - 1.3863).abs() < 1e-4);
    }

    #[test]
    fn saturated_logit_does_not_overflow() {
        let (loss, grad) = cross_entropy(&array![[1000.0, 0.0, 0.0]], &[0]);
        assert!(loss.is_finite() && loss.abs() < 1e-12);
        assert!(grad.iter().all(|g| g.is_finite()));
        let (loss, _) = cross_entropy(&array![[1000.0, 0.0]], &[1]);
        assert!((loss - 1000.0).abs() < 1e-9);
    }

    #[test]
    fn matches_direct_summation() {
        let mut rng = keyed_rng(11, Domain::Init, 0);
        let logits = Array2::from_shape_simple_fn((20, 5), || rng.random_range(-3.0..3.0));
        let labels: Vec<usize> = (0..20).map(|i| (i * 7) % 5).collect();
        let (loss, grad) = cross_entropy(&logits, &labels);
        let mut oracle = 0.0;
        for (i, row) in logits.rows().into_iter().enumerate() {
            let z: f64 = row.iter().map(|v| v.exp()).sum();
            oracle -= (row[labels[i]].exp() / z).ln();
            for c in 0..5 {
                let p = row[c].exp() / z;
                let expect = (p - if c == labels[i] { 1.0 } else { 0.0 }) / 20.0;
                assert!((grad[[i, c]] - expect).abs() < 1e-12);
            }
        }
        assert!((loss - oracle / 20.0).abs() < 1e-6);
    }

    #[test]
    fn predictions_and_ties() {
        assert_eq!(predict(&array![[0.1, 0.9]]), vec![1]);
        assert_eq!(predict(&array![[0.5, 0.5]]), vec![0]);
    }

    proptest! {
        #[test]
        fn softmax_rows_sum_to_one_and_loss_nonnegative(
            vals in proptest::collection::vec(-50.0f64..50.0, 12),
            shift in -100.0f64..100.0,
        ) {
            let logits = Array2::from_shape_vec((3, 4), vals).unwrap();
            for row in softmax(&logits).rows() {
                prop_assert!((row.sum() - 1.0).abs() < 1e-6);
            }
            let (loss, _) = cross_entropy(&logits, &[0, 1, 2]);
            prop_assert!(loss >= 0.0);
            prop_assert_eq!(predict(&logits), predict(&(&logits + shift)));
        }
    }
}
