//! Training objectives with analytic gradients.
//!
//! Both losses accept a mini-batch of `(target, prediction)` rasters and treat
//! the batch as extra pixels: every sum over pixels runs over all samples.

use crate::error::{Error, Result};
use crate::raster::Raster;

/// Regulariser added to every class-mass denominator.
pub const DEFAULT_EPSILON: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct ClassWeights(pub Vec<f64>);

#[derive(Debug, Clone, PartialEq)]
pub struct LossResult {
    pub value: f64,
    /// d(loss)/d(prediction), same shape as the prediction.
    pub gradient: Raster,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchLossResult {
    pub value: f64,
    pub gradients: Vec<Raster>,
}

fn check_batch(ys: &[&Raster], preds: &[&Raster]) -> Result<usize> {
    if ys.is_empty() || ys.len() != preds.len() {
        return Err(Error::Parameter(format!(
            "loss needs matching non-empty batches, got {} targets and {} predictions",
            ys.len(),
            preds.len()
        )));
    }
    let channels = ys[0].channels();
    for (i, (y, p)) in ys.iter().zip(preds).enumerate() {
        if !y.same_shape(p) || y.channels() != channels {
            return Err(Error::Parameter(format!(
                "sample {i}: target {}x{}x{} vs prediction {}x{}x{}",
                y.height(),
                y.width(),
                y.channels(),
                p.height(),
                p.width(),
                p.channels()
            )));
        }
    }
    Ok(channels)
}

fn class_mass(ys: &[&Raster], channels: usize) -> Vec<f64> {
    (0..channels)
        .map(|c| ys.iter().map(|y| y.plane(c).iter().sum::<f64>()).sum())
        .collect()
}

/// `w_c = 1 / (mass_c + eps)`
pub fn dice_class_weights(y: &Raster, eps: f64) -> ClassWeights {
    ClassWeights(
        class_mass(&[y], y.channels())
            .into_iter()
            .map(|m| 1.0 / (m + eps))
            .collect(),
    )
}

/// `1 - 2 * sum_c w_c sum_i y * p / sum_c w_c sum_i (y + p)` with Dice class weights.
pub fn generalized_dice_loss(y: &Raster, pred: &Raster, eps: f64) -> Result<LossResult> {
    let r = generalized_dice_loss_batch(&[y], &[pred], eps)?;
    Ok(LossResult {
        value: r.value,
        gradient: r.gradients.into_iter().next().expect("one sample"),
    })
}

pub fn generalized_dice_loss_batch(ys: &[&Raster], preds: &[&Raster], eps: f64) -> Result<BatchLossResult> {
    let channels = check_batch(ys, preds)?;
    let weights: Vec<f64> = class_mass(ys, channels)
        .into_iter()
        .map(|m| 1.0 / (m + eps))
        .collect();

    let mut intersection = 0.0;
    let mut union = 0.0;
    for (c, &wc) in weights.iter().enumerate() {
        let mut inter_c = 0.0;
        let mut union_c = 0.0;
        for (y, p) in ys.iter().zip(preds) {
            for (a, b) in y.plane(c).iter().zip(p.plane(c)) {
                inter_c += a * b;
                union_c += a + b;
            }
        }
        intersection += wc * inter_c;
        union += wc * union_c;
    }

    let mut gradients: Vec<Raster> = preds.iter().map(|p| Raster::zeros(p.height(), p.width(), channels)).collect();
    if union <= 0.0 {
        // Empty target and empty prediction: perfect agreement.
        return Ok(BatchLossResult {
            value: 0.0,
            gradients,
        });
    }
    let value = 1.0 - 2.0 * intersection / union;
    let scale = -2.0 / (union * union);
    for (g, y) in gradients.iter_mut().zip(ys) {
        for (c, &wc) in weights.iter().enumerate() {
            for (gv, a) in g.plane_mut(c).iter_mut().zip(y.plane(c)) {
                *gv = scale * wc * (a * union - intersection);
            }
        }
    }
    Ok(BatchLossResult { value, gradients })
}

/// `sum_c w_c / N * sum_i (y - p)^2` with `w_c = total_mass / (mass_c + eps)`.
pub fn weighted_mse_loss(y: &Raster, pred: &Raster) -> Result<LossResult> {
    weighted_mse_loss_eps(y, pred, DEFAULT_EPSILON)
}

pub fn weighted_mse_loss_eps(y: &Raster, pred: &Raster, eps: f64) -> Result<LossResult> {
    let r = weighted_mse_loss_batch(&[y], &[pred], eps)?;
    Ok(LossResult {
        value: r.value,
        gradient: r.gradients.into_iter().next().expect("one sample"),
    })
}

pub fn mse_class_weights(ys: &[&Raster], eps: f64) -> ClassWeights {
    let channels = ys.first().map_or(0, |y| y.channels());
    let mass = class_mass(ys, channels);
    let total: f64 = mass.iter().sum();
    ClassWeights(mass.iter().map(|m| total / (m + eps)).collect())
}

pub fn weighted_mse_loss_batch(ys: &[&Raster], preds: &[&Raster], eps: f64) -> Result<BatchLossResult> {
    let channels = check_batch(ys, preds)?;
    let ClassWeights(weights) = mse_class_weights(ys, eps);
    let n: usize = ys.iter().map(|y| y.plane_len()).sum();
    let inv_n = 1.0 / n as f64;

    let mut value = 0.0;
    let mut gradients = Vec::with_capacity(preds.len());
    for (y, p) in ys.iter().zip(preds) {
        let mut g = Raster::zeros(p.height(), p.width(), channels);
        for (c, &wc) in weights.iter().enumerate() {
            for ((gv, a), b) in g.plane_mut(c).iter_mut().zip(y.plane(c)).zip(p.plane(c)) {
                let d = a - b;
                value += wc * inv_n * d * d;
                *gv = -2.0 * wc * d * inv_n;
            }
        }
        gradients.push(g);
    }
    Ok(BatchLossResult { value, gradients })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_hot(h: usize, w: usize, classes: &[usize]) -> Raster {
        let mut r = Raster::zeros(h, w, 3);
        for (i, &c) in classes.iter().enumerate() {
            r.set(c, i / w, i % w, 1.0);
        }
        r
    }

    #[test]
    fn dice_perfect_overlap_is_zero() {
        let y = one_hot(2, 3, &[0, 1, 2, 2, 0, 1]);
        let r = generalized_dice_loss(&y, &y, DEFAULT_EPSILON).unwrap();
        assert!(r.value.abs() < 1e-12);
    }

    #[test]
    fn dice_disjoint_is_one() {
        let y = one_hot(1, 4, &[0, 0, 1, 1]);
        let p = one_hot(1, 4, &[1, 1, 2, 2]);
        let r = generalized_dice_loss(&y, &p, DEFAULT_EPSILON).unwrap();
        assert!((r.value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn shape_mismatch_is_parameter_error() {
        let y = Raster::zeros(2, 2, 3);
        let p = Raster::zeros(2, 3, 3);
        assert!(matches!(generalized_dice_loss(&y, &p, 1e-6), Err(Error::Parameter(_))));
        assert!(matches!(weighted_mse_loss(&y, &p), Err(Error::Parameter(_))));
    }

    #[test]
    fn mse_zero_at_target() {
        let y = Raster::from_fn(3, 3, |x, y| (x + y) as f64 / 6.0);
        let y = Raster::stack(&[&y, &y.map(|v| 1.0 - v)]).unwrap();
        let r = weighted_mse_loss(&y, &y).unwrap();
        assert_eq!(r.value, 0.0);
        assert!(r.gradient.data().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn mse_absent_class_stays_finite() {
        let y = one_hot(2, 2, &[0, 0, 1, 1]);
        let p = Raster::filled(2, 2, 3, 0.3);
        let r = weighted_mse_loss(&y, &p).unwrap();
        assert!(r.value.is_finite());
        assert!(r.gradient.data().iter().all(|g| g.is_finite()));
        let ClassWeights(w) = mse_class_weights(&[&y], DEFAULT_EPSILON);
        assert!((w[2] - 4.0 / DEFAULT_EPSILON).abs() < 1e-3);
    }

    #[test]
    fn dice_weights_arithmetic() {
        let mut y = Raster::zeros(10, 10, 2);
        y.plane_mut(0).iter_mut().for_each(|v| *v = 1.0);
        let ClassWeights(w) = dice_class_weights(&y, 1e-6);
        assert_eq!(w[0], 1.0 / (100.0 + 1e-6));
        assert_eq!(w[1], 1e6);
    }

    #[test]
    fn batch_equals_concatenated_image() {
        let a = Raster::from_fn(2, 2, |x, y| (x + 2 * y) as f64 / 4.0);
        let b = Raster::from_fn(2, 2, |x, y| ((x * 3 + y) % 4) as f64 / 4.0);
        let y1 = Raster::stack(&[&a, &a.map(|v| 1.0 - v)]).unwrap();
        let y2 = Raster::stack(&[&b, &b.map(|v| 1.0 - v)]).unwrap();
        let p1 = y1.map(|v| 0.5 * v + 0.2);
        let p2 = y2.map(|v| 0.9 - 0.8 * v);
        let cat = |u: &Raster, v: &Raster| {
            let mut data = Vec::new();
            for c in 0..2 {
                data.extend_from_slice(u.plane(c));
                data.extend_from_slice(v.plane(c));
            }
            Raster::from_vec(4, 2, 2, data).unwrap()
        };
        let batch = generalized_dice_loss_batch(&[&y1, &y2], &[&p1, &p2], 1e-6).unwrap();
        let whole = generalized_dice_loss(&cat(&y1, &y2), &cat(&p1, &p2), 1e-6).unwrap();
        assert!((batch.value - whole.value).abs() < 1e-12);
        let batch = weighted_mse_loss_batch(&[&y1, &y2], &[&p1, &p2], 1e-6).unwrap();
        let whole = weighted_mse_loss(&cat(&y1, &y2), &cat(&p1, &p2)).unwrap();
        assert!((batch.value - whole.value).abs() < 1e-12);
    }
}
