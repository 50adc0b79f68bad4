//! Losses returning `(loss, dL/dpred)` for a single prediction vector.

use super::{NetError, Result};

fn check_len(pred: &[f64], target: &[f64]) -> Result<()> {
    if pred.len() != target.len() || pred.is_empty() {
        return Err(NetError::DimensionMismatch {
            expected: pred.len(),
            got: target.len(),
        });
    }
    Ok(())
}

/// `mean((pred - target)^2)`
pub fn mse_loss(pred: &[f64], target: &[f64]) -> Result<(f64, Vec<f64>)> {
    check_len(pred, target)?;
    let n = pred.len() as f64;
    let mut loss = 0.0;
    let grad = pred
        .iter()
        .zip(target)
        .map(|(p, t)| {
            let d = p - t;
            loss += d * d;
            2.0 * d / n
        })
        .collect();
    Ok((loss / n, grad))
}

/// Mean Huber (smooth L1) loss with threshold `delta`.
pub fn huber_loss(pred: &[f64], target: &[f64], delta: f64) -> Result<(f64, Vec<f64>)> {
    check_len(pred, target)?;
    let n = pred.len() as f64;
    let mut loss = 0.0;
    let grad = pred
        .iter()
        .zip(target)
        .map(|(p, t)| {
            let d = p - t;
            if d.abs() <= delta {
                loss += 0.5 * d * d;
                d / n
            } else {
                loss += delta * (d.abs() - 0.5 * delta);
                delta * d.signum() / n
            }
        })
        .collect();
    Ok((loss / n, grad))
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// `-log softmax(logits)[label]`, gradient `softmax(logits) - one_hot(label)`.
pub fn softmax_nll_loss(logits: &[f64], label: usize) -> Result<(f64, Vec<f64>)> {
    if label >= logits.len() {
        return Err(NetError::LabelOutOfRange {
            label,
            classes: logits.len(),
        });
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let log_sum = logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln() + max;
    let mut grad = softmax(logits);
    grad[label] -= 1.0;
    Ok((log_sum - logits[label], grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn finite_diff<F: Fn(&[f64]) -> f64>(f: F, x: &[f64], h: f64) -> Vec<f64> {
        (0..x.len())
            .map(|i| {
                let mut up = x.to_vec();
                let mut down = x.to_vec();
                up[i] += h;
                down[i] -= h;
                (f(&up) - f(&down)) / (2.0 * h)
            })
            .collect()
    }

    #[test]
    fn mse_identities() {
        let (l, g) = mse_loss(&[0.5, -1.0], &[0.5, -1.0]).unwrap();
        assert_eq!(l, 0.0);
        assert!(g.iter().all(|&v| v == 0.0));
        let (l, g) = mse_loss(&[1.0, 1.0], &[0.0, 0.0]).unwrap();
        assert_eq!(l, 1.0);
        assert_eq!(g, vec![1.0, 1.0]);
        assert!(mse_loss(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn mse_grad_matches_finite_difference() {
        let pred = [0.3, -1.7, 2.2, 0.01];
        let target = [1.0, 0.5, -0.5, 0.0];
        let (_, g) = mse_loss(&pred, &target).unwrap();
        let num = finite_diff(|p| mse_loss(p, &target).unwrap().0, &pred, 1e-5);
        for (a, n) in g.iter().zip(num) {
            assert!((a - n).abs() / a.abs().max(1e-12) < 1e-6);
        }
    }

    #[test]
    fn huber_grad_matches_finite_difference() {
        let pred = [0.3, -1.7, 2.2, 0.01];
        let target = [1.0, 0.5, -0.5, 0.0];
        let (_, g) = huber_loss(&pred, &target, 1.0).unwrap();
        let num = finite_diff(|p| huber_loss(p, &target, 1.0).unwrap().0, &pred, 1e-6);
        for (a, n) in g.iter().zip(num) {
            assert!((a - n).abs() < 1e-8);
        }
    }

    #[test]
    fn nll_uniform_logits_is_ln_k() {
        let (l, g) = softmax_nll_loss(&[0.3; 5], 2).unwrap();
        assert!((l - 5f64.ln()).abs() < 1e-12);
        assert!(g.iter().sum::<f64>().abs() < 1e-12);
    }

    #[test]
    fn nll_saturates_and_checks_label() {
        let (l, _) = softmax_nll_loss(&[60.0, 0.0], 0).unwrap();
        assert!(l < 1e-20);
        assert!(matches!(softmax_nll_loss(&[0.0, 0.0], 2), Err(NetError::LabelOutOfRange { .. })));
    }

    #[test]
    fn nll_grad_matches_finite_difference() {
        let logits = [0.4, -1.3, 2.0];
        let (_, g) = softmax_nll_loss(&logits, 1).unwrap();
        let num = finite_diff(|x| softmax_nll_loss(x, 1).unwrap().0, &logits, 1e-5);
        for (a, n) in g.iter().zip(num) {
            assert!((a - n).abs() < 1e-8);
        }
    }
}
