use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Row-wise softmax of `[B, C]` logits, shifted by the row max for stability.
pub fn softmax(logits: &Tensor) -> Result<Tensor> {
    if logits.shape().len() != 2 {
        return Err(Error::shape("softmax logits [B, C]", vec![0, 0], logits.shape().to_vec()));
    }
    let c = logits.shape()[1];
    let mut out = logits.data().to_vec();
    for row in out.chunks_exact_mut(c) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    Tensor::new(logits.shape().to_vec(), out)
}

/// Mean softmax cross-entropy over the batch and its gradient w.r.t. the logits.
pub fn softmax_cross_entropy(logits: &Tensor, labels: &[usize]) -> Result<(f64, Tensor)> {
    if logits.shape().len() != 2 {
        return Err(Error::shape("logits [B, C]", vec![labels.len(), 0], logits.shape().to_vec()));
    }
    let (b, c) = (logits.shape()[0], logits.shape()[1]);
    if labels.len() != b {
        return Err(Error::shape("labels", vec![b], vec![labels.len()]));
    }
    if let Some(&label) = labels.iter().find(|&&l| l >= c) {
        return Err(Error::LabelOutOfRange { label, num_classes: c });
    }
    let mut grad = softmax(logits)?;
    let scale = 1.0 / b as f64;
    let mut loss = 0.0;
    for ((row, probs), &y) in logits
        .data()
        .chunks_exact(c)
        .zip(grad.data_mut().chunks_exact_mut(c))
        .zip(labels)
    {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        loss += lse - row[y];
        probs[y] -= 1.0;
        for p in probs.iter_mut() {
            *p *= scale;
        }
    }
    Ok((loss * scale, grad))
}

/// Index of the largest logit per row; ties resolve to the lowest index.
pub fn argmax_rows(logits: &Tensor) -> Vec<usize> {
    let c = logits.sample_len();
    logits
        .data()
        .chunks_exact(c)
        .map(|row| {
            row.iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) })
                .0
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn uniform_logits_give_ln_c() {
        for c in [2usize, 5, 10] {
            let logits = Tensor::filled(vec![3, c], 0.7);
            let (loss, grad) = softmax_cross_entropy(&logits, &[0, 1, c - 1]).unwrap();
            assert!((loss - (c as f64).ln()).abs() < 1e-12);
            for row in grad.data().chunks_exact(c) {
                assert!(row.iter().sum::<f64>().abs() < 1e-12);
            }
        }
    }

    #[test]
    fn loss_vanishes_with_margin() {
        let mut prev = f64::INFINITY;
        for margin in [1.0, 5.0, 20.0, 50.0] {
            let logits = Tensor::new(vec![1, 3], vec![margin, 0.0, 0.0]).unwrap();
            let (loss, _) = softmax_cross_entropy(&logits, &[0]).unwrap();
            assert!(loss >= 0.0 && loss < prev);
            prev = loss;
        }
        assert!(prev < 1e-20);
    }

    #[test]
    fn matches_log_sum_exp_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let (b, c) = (rng.random_range(1..8), rng.random_range(2..12));
            let data: Vec<f64> = (0..b * c).map(|_| rng.random_range(-30.0..30.0)).collect();
            let labels: Vec<usize> = (0..b).map(|_| rng.random_range(0..c)).collect();
            let logits = Tensor::new(vec![b, c], data.clone()).unwrap();
            let (loss, grad) = softmax_cross_entropy(&logits, &labels).unwrap();

            // independent oracle: -log p_y with p from a shifted exp sum
            let mut want = 0.0;
            for (i, &y) in labels.iter().enumerate() {
                let row = &data[i * c..(i + 1) * c];
                let m = row.iter().cloned().fold(f64::MIN, f64::max);
                let s: f64 = row.iter().map(|v| (v - m).exp()).sum();
                want += -(row[y] - m - s.ln());
                let probs = softmax(&Tensor::new(vec![1, c], row.to_vec()).unwrap()).unwrap();
                assert!((probs.sum() - 1.0).abs() < 1e-6);
            }
            want /= b as f64;
            assert!((loss - want).abs() < 1e-10, "{loss} vs {want}");
            for row in grad.data().chunks_exact(c) {
                assert!(row.iter().sum::<f64>().abs() < 1e-9);
            }
        }
    }

    #[test]
    fn rejects_out_of_range_label() {
        let logits = Tensor::zeros(vec![2, 3]);
        assert!(matches!(
            softmax_cross_entropy(&logits, &[0, 3]),
            Err(Error::LabelOutOfRange { label: 3, num_classes: 3 })
        ));
        assert!(softmax_cross_entropy(&logits, &[0]).is_err());
    }

    #[test]
    fn argmax_breaks_ties_low() {
        let t = Tensor::new(vec![2, 3], vec![1.0, 1.0, 0.0, 0.0, 2.0, 2.0]).unwrap();
        assert_eq!(argmax_rows(&t), vec![0, 1]);
    }
}
