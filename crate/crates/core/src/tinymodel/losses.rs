//! Training objectives and their gradients with respect to the logits.
//!
//! Each per-instance function returns `(loss, gradient)`; the batch
//! functions average over instances.

use super::tensor::{log_sum_exp, softmax};
use crate::baselines::{sigmoid, softplus};
use crate::error::{Error, Result};

/// Span loss for one instance: `-(log ŷ_s[s*] + log ŷ_e[e*]) / 2`.
pub fn mrc_instance(start_logits: &[f64], end_logits: &[f64], gold: (usize, usize)) -> (f64, Vec<f64>, Vec<f64>) {
    let (s, e) = gold;
    let loss = 0.5 * ((log_sum_exp(start_logits) - start_logits[s]) + (log_sum_exp(end_logits) - end_logits[e]));
    let mut ds = softmax(start_logits);
    let mut de = softmax(end_logits);
    ds[s] -= 1.0;
    de[e] -= 1.0;
    ds.iter_mut().chain(de.iter_mut()).for_each(|x| *x *= 0.5);
    (loss, ds, de)
}

/// Batch mean of [`mrc_instance`].
pub fn loss_mrc(batch: &[(Vec<f64>, Vec<f64>, (usize, usize))]) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    let mut total = 0.0;
    for (s, e, gold) in batch {
        if gold.0 >= s.len() || gold.1 >= e.len() {
            return Err(Error::InvalidArgument("gold position out of range".into()));
        }
        total += mrc_instance(s, e, *gold).0;
    }
    Ok(total / batch.len() as f64)
}

/// Softmax cross-entropy for one instance.
pub fn ce_instance(logits: &[f64], gold: usize) -> (f64, Vec<f64>) {
    let loss = log_sum_exp(logits) - logits[gold];
    let mut d = softmax(logits);
    d[gold] -= 1.0;
    (loss, d)
}

pub fn loss_ce(batch: &[(Vec<f64>, usize)]) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    let mut total = 0.0;
    for (logits, gold) in batch {
        if *gold >= logits.len() {
            return Err(Error::InvalidArgument("gold class out of range".into()));
        }
        total += ce_instance(logits, *gold).0;
    }
    Ok(total / batch.len() as f64)
}

/// Token-level generation loss for one sequence under teacher forcing:
/// `Σ_t -log P(y_t | y_<t, x)`. This is the negated log-likelihood sum, so
/// it is minimized.
pub fn generative_instance(step_logits: &[Vec<f64>], gold: &[u32]) -> (f64, Vec<Vec<f64>>) {
    let mut loss = 0.0;
    let grads = step_logits
        .iter()
        .zip(gold)
        .map(|(logits, &y)| {
            let (l, d) = ce_instance(logits, y as usize);
            loss += l;
            d
        })
        .collect();
    (loss, grads)
}

pub fn loss_generative(batch: &[(Vec<Vec<f64>>, Vec<u32>)]) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    let mut total = 0.0;
    for (steps, gold) in batch {
        if steps.len() != gold.len() {
            return Err(Error::DimensionMismatch {
                expected: gold.len(),
                found: steps.len(),
            });
        }
        if steps.iter().zip(gold).any(|(l, &y)| y as usize >= l.len()) {
            return Err(Error::InvalidArgument("gold token outside vocabulary".into()));
        }
        total += generative_instance(steps, gold).0;
    }
    Ok(total / batch.len() as f64)
}

/// Weighted binary cross-entropy on a logit,
/// `-[w y log σ(z) + (1 - y) log(1 - σ(z))]`, in softplus form.
pub fn bce_instance(logit: f64, y: u8, w: f64) -> (f64, f64) {
    if y == 1 {
        (w * softplus(-logit), -w * sigmoid(-logit))
    } else {
        (softplus(logit), sigmoid(logit))
    }
}

pub fn loss_bce(batch: &[(f64, u8)], w: f64) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    if !(w > 0.0) {
        return Err(Error::InvalidArgument("positive-class weight must be positive".into()));
    }
    Ok(batch.iter().map(|&(z, y)| bce_instance(z, y, w).0).sum::<f64>() / batch.len() as f64)
}

/// `L = L_G + L_BCE`.
pub fn loss_total_generative(l_g: f64, l_bce: f64) -> f64 {
    l_g + l_bce
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_forms() {
        let l = 7;
        let z = vec![0.3; l];
        assert!((loss_mrc(&[(z.clone(), z, (2, 5))]).unwrap() - (l as f64).ln()).abs() < 1e-9);
        assert!((loss_ce(&[(vec![1.5, 1.5], 1)]).unwrap() - 2f64.ln()).abs() < 1e-9);
        assert!((loss_bce(&[(0.0, 1)], 1.0).unwrap() - 2f64.ln()).abs() < 1e-9);
        let v = 11;
        assert!((loss_generative(&[(vec![vec![0.0; v]], vec![3])]).unwrap() - (v as f64).ln()).abs() < 1e-9);
    }

    #[test]
    fn confident_gold_gives_zero_loss() {
        let mut z = vec![0.0; 4];
        z[2] = 800.0;
        assert!(loss_mrc(&[(z.clone(), z.clone(), (2, 2))]).unwrap() < 1e-12);
        assert!(loss_ce(&[(z.clone(), 2)]).unwrap() < 1e-12);
        assert!(loss_generative(&[(vec![z.clone(), z], vec![2, 2])]).unwrap() < 1e-12);
        assert!(loss_bce(&[(800.0, 1), (-800.0, 0)], 3.0).unwrap() < 1e-12);
    }

    #[test]
    fn bce_negative_ignores_weight() {
        for z in [-3.0, 0.0, 2.5] {
            assert_eq!(bce_instance(z, 0, 1.0), bce_instance(z, 0, 9.0));
        }
    }

    #[test]
    fn bce_matches_two_class_ce() {
        for z in [-40.0, -2.0, 0.0, 0.7, 30.0] {
            for y in [0u8, 1] {
                let ce = ce_instance(&[0.0, z], y as usize).0;
                assert!((bce_instance(z, y, 1.0).0 - ce).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn preconditions() {
        assert!(loss_bce(&[], 1.0).is_err());
        assert!(loss_ce(&[(vec![0.0], 1)]).is_err());
        assert!(loss_generative(&[(vec![vec![0.0]], vec![])]).is_err());
        assert_eq!(loss_total_generative(1.25, 0.5), 1.75);
    }
}
