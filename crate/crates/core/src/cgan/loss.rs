//! Adversarial, pixel and perceptual losses with their gradients.

use serde::{Deserialize, Serialize};

use super::nets::{sign, PerceptualExtractor};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Numerically stable `ln(1 + e^z)`.
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Binary cross-entropy with logits averaged over the map.
pub fn bce_with_logits(logits: &[f64], target: f64) -> f64 {
    let n = logits.len() as f64;
    logits
        .iter()
        .map(|&z| softplus(z) - target * z)
        .sum::<f64>()
        / n
}

/// Gradient of [`bce_with_logits`] with respect to each logit.
pub fn bce_grad(logits: &[f64], target: f64) -> Vec<f64> {
    let n = logits.len() as f64;
    logits.iter().map(|&z| (sigmoid(z) - target) / n).collect()
}

/// `½ [BCE(real, 1) + BCE(fake, 0)]`.
pub fn loss_discriminator(real: &[f64], fake: &[f64]) -> f64 {
    0.5 * (bce_with_logits(real, 1.0) + bce_with_logits(fake, 0.0))
}

/// Loss weights used by the generator objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub pixel: f64,
    pub perceptual: f64,
}

/// Per-term breakdown of the generator objective. `pixel` and
/// `perceptual` are weighted; `mae` is the raw pixel error.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct GenLoss {
    pub total: f64,
    pub adversarial: f64,
    pub pixel: f64,
    pub perceptual: f64,
    pub mae: f64,
}

fn check_same(a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch(format!(
            "{:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

pub fn mean_abs_error(a: &Tensor, b: &Tensor) -> f64 {
    a.data
        .iter()
        .zip(&b.data)
        .map(|(x, y)| (x - y).abs())
        .sum::<f64>()
        / a.data.len() as f64
}

/// `BCE(d_fake, 1) + λp·mean|fake − real| + λf·mean|φ(fake) − φ(real)|`.
pub fn loss_generator(
    d_fake: &[f64],
    fake: &Tensor,
    real: &Tensor,
    extractor: &PerceptualExtractor,
    w: LossWeights,
) -> Result<GenLoss> {
    check_same(fake, real)?;
    let adversarial = bce_with_logits(d_fake, 1.0);
    let mae = mean_abs_error(fake, real);
    let pixel = w.pixel * mae;
    let perceptual = if w.perceptual == 0.0 {
        0.0
    } else {
        w.perceptual * extractor.distance(fake, real)
    };
    Ok(GenLoss {
        total: adversarial + pixel + perceptual,
        adversarial,
        pixel,
        perceptual,
        mae,
    })
}

/// Gradient of the pixel and perceptual terms with respect to `fake`.
pub(crate) fn content_grad(
    fake: &Tensor,
    real: &Tensor,
    extractor: &PerceptualExtractor,
    w: LossWeights,
) -> (f64, f64, Tensor) {
    let n = fake.data.len() as f64;
    let mut mae = 0.0;
    let data = fake
        .data
        .iter()
        .zip(&real.data)
        .map(|(f, r)| {
            mae += (f - r).abs();
            w.pixel * sign(f - r) / n
        })
        .collect();
    let mut grad = Tensor::from_vec(fake.c, fake.h, fake.w, data);
    let mut perc = 0.0;
    if w.perceptual != 0.0 {
        let (d, g) = extractor.distance_grad(fake, real);
        perc = d;
        for (a, b) in grad.data.iter_mut().zip(&g.data) {
            *a += w.perceptual * b;
        }
    }
    (mae / n, perc, grad)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(v: f64) -> Tensor {
        Tensor::from_vec(
            1,
            8,
            8,
            (0..64).map(|i| (i as f64 * 0.2).sin() + v).collect(),
        )
    }

    #[test]
    fn zero_logits_give_ln2() {
        let z = vec![0.0; 256];
        assert!((loss_discriminator(&z, &z) - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn saturated_discriminator_has_vanishing_loss() {
        let l = loss_discriminator(&[60.0; 4], &[-60.0; 4]);
        assert!(l < 1e-20);
        assert!(bce_with_logits(&[800.0], 1.0).is_finite());
        assert!(bce_with_logits(&[-800.0], 1.0).is_finite());
    }

    #[test]
    fn discriminator_loss_symmetry() {
        let a = [0.3, -1.2, 2.0];
        let b = [-0.7, 0.1, 0.4];
        // swapping the roles with labels swapped: real scored as 0, fake as 1
        let swapped = 0.5 * (bce_with_logits(&b, 1.0) + bce_with_logits(&a, 0.0));
        let neg_a: Vec<f64> = a.iter().map(|v| -v).collect();
        let neg_b: Vec<f64> = b.iter().map(|v| -v).collect();
        assert!((swapped - loss_discriminator(&neg_a, &neg_b)).abs() < 1e-12);
    }

    #[test]
    fn generator_loss_terms() {
        let e = PerceptualExtractor::new(1);
        let real = t(0.0);
        let same = loss_generator(
            &[0.5],
            &real,
            &real,
            &e,
            LossWeights {
                pixel: 100.0,
                perceptual: 10.0,
            },
        )
        .unwrap();
        assert_eq!((same.pixel, same.perceptual), (0.0, 0.0));

        let off = t(0.5);
        let l = loss_generator(
            &[0.5],
            &off,
            &real,
            &e,
            LossWeights {
                pixel: 100.0,
                perceptual: 0.0,
            },
        )
        .unwrap();
        assert!((l.pixel - 50.0).abs() < 1e-9);
        assert!((l.mae - 0.5).abs() < 1e-12);

        let adv = loss_generator(
            &[0.5],
            &off,
            &real,
            &e,
            LossWeights {
                pixel: 0.0,
                perceptual: 0.0,
            },
        )
        .unwrap();
        assert_eq!(adv.total, adv.adversarial);
        assert_eq!(adv.total, bce_with_logits(&[0.5], 1.0));
    }

    #[test]
    fn generator_loss_rejects_shape_mismatch() {
        let e = PerceptualExtractor::new(1);
        let other = Tensor::zeros(1, 4, 4);
        let w = LossWeights {
            pixel: 1.0,
            perceptual: 1.0,
        };
        assert!(matches!(
            loss_generator(&[0.0], &t(0.0), &other, &e, w),
            Err(Error::ShapeMismatch(_))
        ));
    }

    #[test]
    fn bce_gradient_matches_differences() {
        let z = [0.3, -2.0, 4.0];
        let g = bce_grad(&z, 1.0);
        for i in 0..3 {
            let mut a = z;
            a[i] += 1e-6;
            let mut b = z;
            b[i] -= 1e-6;
            let fd = (bce_with_logits(&a, 1.0) - bce_with_logits(&b, 1.0)) / 2e-6;
            assert!((fd - g[i]).abs() < 1e-8);
        }
    }
}
