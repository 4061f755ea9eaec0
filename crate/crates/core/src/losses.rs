//! The eight-term multi-task loss: forward values plus analytic gradients
//! with respect to the branch outputs.
//!
//! Gradients are taken with respect to the post-softmax probabilities (the
//! network itself is out of scope here); a trainer chains the softmax
//! Jacobian on top. Every gradient is verifiable against central finite
//! differences via [`gradcheck`].

use serde::Serialize;

use crate::bundle::{HoVerMaps, PredictionBundle, TargetBundle};
use crate::error::{Error, Result};
use crate::raster::{sobel, sobel_adjoint, BinaryMask, GradientAxis, Raster2D};

/// Probabilities are clamped to [CE_CLAMP, 1] before the log.
pub const CE_CLAMP: f64 = 1e-7;

/// Default smoothing term of the dice loss.
pub const DEFAULT_DICE_EPSILON: f64 = 1e-3;

/// Per-term weights of the total loss. The gradient-of-distance term
/// defaults to 2, every other term to 1.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LossWeights {
    pub hover_mse: f64,
    pub hover_grad: f64,
    pub np_ce: f64,
    pub np_dice: f64,
    pub nc_ce: f64,
    pub nc_dice: f64,
    pub ls_ce: f64,
    pub ls_dice: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            hover_mse: 1.0,
            hover_grad: 2.0,
            np_ce: 1.0,
            np_dice: 1.0,
            nc_ce: 1.0,
            nc_dice: 1.0,
            ls_ce: 1.0,
            ls_dice: 1.0,
        }
    }
}

impl LossWeights {
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            hover_mse: self.hover_mse * factor,
            hover_grad: self.hover_grad * factor,
            np_ce: self.np_ce * factor,
            np_dice: self.np_dice * factor,
            nc_ce: self.nc_ce * factor,
            nc_dice: self.nc_dice * factor,
            ls_ce: self.ls_ce * factor,
            ls_dice: self.ls_dice * factor,
        }
    }
}

/// Unweighted per-term values and the weighted total.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LossBreakdown {
    pub hover_mse: f64,
    pub hover_grad: f64,
    pub np_ce: f64,
    pub np_dice: f64,
    pub nc_ce: f64,
    pub nc_dice: f64,
    pub ls_ce: f64,
    pub ls_dice: f64,
    pub total: f64,
}

/// Mean squared error over both distance maps.
///
/// value = mean over all pixels and both channels of (pred - target)²;
/// the gradient is 2 (pred - target) / N with N = 2 · height · width.
pub fn mse_hover(pred: &HoVerMaps, target: &HoVerMaps) -> Result<(f64, HoVerMaps)> {
    pred.check_extent(target)?;
    let (h, w) = pred.extent();
    let n = (2 * h * w) as f64;
    let mut grad = HoVerMaps::zeros(h, w)?;
    let mut sum = 0.0;
    for (pred_map, target_map, grad_map) in [
        (&pred.horizontal, &target.horizontal, &mut grad.horizontal),
        (&pred.vertical, &target.vertical, &mut grad.vertical),
    ] {
        for (i, (&p, &t)) in pred_map.data().iter().zip(target_map.data()).enumerate() {
            let d = p - t;
            sum += d * d;
            grad_map.data_mut()[i] = 2.0 * d / n;
        }
    }
    Ok((sum / n, grad))
}

/// Mean squared error between the horizontal/vertical Sobel gradients of
/// the predicted and target distance maps, restricted to nucleus pixels.
///
/// value = mean over mask pixels of
/// (∂h pred.h − ∂h target.h)² + (∂v pred.v − ∂v target.v)²; an empty mask
/// yields 0 by convention. The gradient propagates through the Sobel
/// correlation via its adjoint.
pub fn msge_gradient(
    pred: &HoVerMaps,
    target: &HoVerMaps,
    nucleus_mask: &BinaryMask,
) -> Result<(f64, HoVerMaps)> {
    pred.check_extent(target)?;
    let (h, w) = pred.extent();
    if nucleus_mask.extent() != (h, w) {
        return Err(Error::shape_mismatch((h, w), nucleus_mask.extent()));
    }
    let mask_count = nucleus_mask.count_ones();
    let mut grad = HoVerMaps::zeros(h, w)?;
    if mask_count == 0 {
        return Ok((0.0, grad));
    }
    let m = mask_count as f64;

    let mut value = 0.0;
    for (axis, pred_map, target_map, grad_map) in [
        (
            GradientAxis::Horizontal,
            &pred.horizontal,
            &target.horizontal,
            &mut grad.horizontal,
        ),
        (
            GradientAxis::Vertical,
            &pred.vertical,
            &target.vertical,
            &mut grad.vertical,
        ),
    ] {
        let gp = sobel(pred_map, axis)?;
        let gt = sobel(target_map, axis)?;
        // Upstream sensitivity of the value with respect to the filtered
        // prediction: 2 · mask · (gp - gt) / M.
        let mut upstream = Raster2D::filled(h, w, 1, 0.0)?;
        for r in 0..h {
            for c in 0..w {
                if !nucleus_mask.get(r, c) {
                    continue;
                }
                let d = gp.get(0, r, c) - gt.get(0, r, c);
                value += d * d;
                upstream.set(0, r, c, 2.0 * d / m);
            }
        }
        *grad_map = sobel_adjoint(&upstream, axis);
    }
    Ok((value / m, grad))
}

/// Multi-class cross entropy averaged over pixels.
///
/// Probabilities are clamped to [[`CE_CLAMP`], 1] before the log;
/// the gradient is −target / (pred · N) at unclamped entries and 0 where
/// the clamp is active, with N = number of pixels.
pub fn cross_entropy(
    pred: &Raster2D<f64>,
    target: &Raster2D<f64>,
) -> Result<(f64, Raster2D<f64>)> {
    check_prob_pair(pred, target)?;
    let (h, w) = pred.extent();
    let n = (h * w) as f64;
    let mut grad = Raster2D::filled(h, w, pred.channels(), 0.0)?;
    let mut sum = 0.0;
    for (i, (&p, &t)) in pred.data().iter().zip(target.data()).enumerate() {
        if t == 0.0 {
            continue;
        }
        let clamped = p.clamp(CE_CLAMP, 1.0);
        sum -= t * clamped.ln();
        if p > CE_CLAMP && p < 1.0 {
            grad.data_mut()[i] = -t / (p * n);
        }
    }
    Ok((sum / n, grad))
}

/// Soft dice loss averaged over channels.
///
/// Per channel c: 1 − (2 Σ pred·target + ε) / (Σ pred + Σ target + ε);
/// the gradient follows from the quotient rule and is scaled by 1/C.
pub fn dice_loss(
    pred: &Raster2D<f64>,
    target: &Raster2D<f64>,
    epsilon: f64,
) -> Result<(f64, Raster2D<f64>)> {
    check_prob_pair(pred, target)?;
    if epsilon <= 0.0 {
        return Err(Error::InvalidParam(format!(
            "dice epsilon must be positive, got {epsilon}"
        )));
    }
    let channels = pred.channels();
    let mut grad = Raster2D::filled(pred.height(), pred.width(), channels, 0.0)?;
    let mut sum = 0.0;
    for ch in 0..channels {
        let p = pred.channel(ch);
        let t = target.channel(ch);
        let inter: f64 = p.iter().zip(t).map(|(&a, &b)| a * b).sum();
        let total: f64 = p.iter().sum::<f64>() + t.iter().sum::<f64>();
        let numer = 2.0 * inter + epsilon;
        let denom = total + epsilon;
        sum += 1.0 - numer / denom;
        let g = grad.channel_mut(ch);
        for (i, &tv) in t.iter().enumerate() {
            // d/dp of -(2I+eps)/(S+eps): quotient rule, then 1/C averaging.
            g[i] = -(2.0 * tv * denom - numer) / (denom * denom) / channels as f64;
        }
    }
    Ok((sum / channels as f64, grad))
}

/// Weighted sum of all eight terms.
pub fn total_loss(
    pred: &PredictionBundle,
    target: &TargetBundle,
    weights: &LossWeights,
    nucleus_mask: &BinaryMask,
) -> Result<LossBreakdown> {
    let (hover_mse, _) = mse_hover(&pred.hover, &target.hover)?;
    let (hover_grad, _) = msge_gradient(&pred.hover, &target.hover, nucleus_mask)?;
    let (np_ce, _) = cross_entropy(&pred.np, &target.np)?;
    let (np_dice, _) = dice_loss(&pred.np, &target.np, DEFAULT_DICE_EPSILON)?;
    let (nc_ce, _) = cross_entropy(&pred.nc, &target.nc)?;
    let (nc_dice, _) = dice_loss(&pred.nc, &target.nc, DEFAULT_DICE_EPSILON)?;
    let (ls_ce, _) = cross_entropy(&pred.ls, &target.ls)?;
    let (ls_dice, _) = dice_loss(&pred.ls, &target.ls, DEFAULT_DICE_EPSILON)?;
    let total = hover_mse * weights.hover_mse
        + hover_grad * weights.hover_grad
        + np_ce * weights.np_ce
        + np_dice * weights.np_dice
        + nc_ce * weights.nc_ce
        + nc_dice * weights.nc_dice
        + ls_ce * weights.ls_ce
        + ls_dice * weights.ls_dice;
    Ok(LossBreakdown {
        hover_mse,
        hover_grad,
        np_ce,
        np_dice,
        nc_ce,
        nc_dice,
        ls_ce,
        ls_dice,
        total,
    })
}

fn check_prob_pair(pred: &Raster2D<f64>, target: &Raster2D<f64>) -> Result<()> {
    pred.check_extent(target)?;
    if pred.channels() != target.channels() {
        return Err(Error::ChannelMismatch {
            expected: target.channels(),
            actual: pred.channels(),
        });
    }
    Ok(())
}

/// Central-finite-difference verification of every analytic gradient.
///
/// This recomputes loss values at perturbed inputs (step `h = 1e-4`) and
/// compares the quotient against the analytic gradient elementwise. The
/// relative error uses `max(|analytic|, |numeric|, 1e-6)` as denominator so
/// exactly-zero gradients compare cleanly.
pub mod gradcheck {
    use super::*;
    use crate::synth::SplitMix64;

    pub const FD_STEP: f64 = 1e-4;

    #[derive(Clone, Copy, Debug, Serialize)]
    pub struct GradCheckReport {
        pub hover_mse: f64,
        pub hover_grad: f64,
        pub cross_entropy: f64,
        pub dice: f64,
        pub max_rel_err: f64,
    }

    impl GradCheckReport {
        pub fn passes(&self, tolerance: f64) -> bool {
            self.max_rel_err <= tolerance
        }
    }

    fn rel_err(analytic: f64, numeric: f64) -> f64 {
        (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
    }

    fn random_map(rng: &mut SplitMix64, h: usize, w: usize) -> Raster2D<f64> {
        let data: Vec<f64> = (0..h * w).map(|_| rng.next_f64() * 2.0 - 1.0).collect();
        Raster2D::from_vec(h, w, 1, data).expect("valid test raster")
    }

    fn random_hover(rng: &mut SplitMix64, h: usize, w: usize) -> HoVerMaps {
        HoVerMaps {
            horizontal: random_map(rng, h, w),
            vertical: random_map(rng, h, w),
        }
    }

    /// Softmax of uniform logits in [-1, 1]; keeps every probability well
    /// away from the clamp floor so the finite-difference quotient stays in
    /// the smooth region.
    fn random_softmax(rng: &mut SplitMix64, h: usize, w: usize, channels: usize) -> Raster2D<f64> {
        let mut raster = Raster2D::filled(h, w, channels, 0.0).expect("valid test raster");
        for r in 0..h {
            for c in 0..w {
                let logits: Vec<f64> = (0..channels).map(|_| rng.next_f64() * 2.0 - 1.0).collect();
                let denom: f64 = logits.iter().map(|l| l.exp()).sum();
                for (ch, l) in logits.iter().enumerate() {
                    raster.set(ch, r, c, l.exp() / denom);
                }
            }
        }
        raster
    }

    fn random_onehot(rng: &mut SplitMix64, h: usize, w: usize, channels: usize) -> Raster2D<f64> {
        let mut raster = Raster2D::filled(h, w, channels, 0.0).expect("valid test raster");
        for r in 0..h {
            for c in 0..w {
                let ch = (rng.next_u64() % channels as u64) as usize;
                raster.set(ch, r, c, 1.0);
            }
        }
        raster
    }

    fn max_err_raster(
        pred: &Raster2D<f64>,
        analytic: &Raster2D<f64>,
        mut eval: impl FnMut(&Raster2D<f64>) -> f64,
    ) -> f64 {
        let mut worst = 0.0f64;
        let mut perturbed = pred.clone();
        for i in 0..pred.data().len() {
            let original = pred.data()[i];
            perturbed.data_mut()[i] = original + FD_STEP;
            let plus = eval(&perturbed);
            perturbed.data_mut()[i] = original - FD_STEP;
            let minus = eval(&perturbed);
            perturbed.data_mut()[i] = original;
            let numeric = (plus - minus) / (2.0 * FD_STEP);
            worst = worst.max(rel_err(analytic.data()[i], numeric));
        }
        worst
    }

    fn hover_entry(maps: &mut HoVerMaps, map: usize, i: usize) -> &mut f64 {
        if map == 0 {
            &mut maps.horizontal.data_mut()[i]
        } else {
            &mut maps.vertical.data_mut()[i]
        }
    }

    fn max_err_hover(
        pred: &HoVerMaps,
        analytic: &HoVerMaps,
        mut eval: impl FnMut(&HoVerMaps) -> f64,
    ) -> f64 {
        let mut worst = 0.0f64;
        let mut perturbed = pred.clone();
        let len = pred.horizontal.data().len();
        for map in 0..2 {
            for i in 0..len {
                let original = *hover_entry(&mut perturbed, map, i);
                *hover_entry(&mut perturbed, map, i) = original + FD_STEP;
                let plus = eval(&perturbed);
                *hover_entry(&mut perturbed, map, i) = original - FD_STEP;
                let minus = eval(&perturbed);
                *hover_entry(&mut perturbed, map, i) = original;
                let numeric = (plus - minus) / (2.0 * FD_STEP);
                let analytic_value = if map == 0 {
                    analytic.horizontal.data()[i]
                } else {
                    analytic.vertical.data()[i]
                };
                worst = worst.max(rel_err(analytic_value, numeric));
            }
        }
        worst
    }

    pub fn check_mse_hover(cases: usize, seed: u64, size: usize) -> f64 {
        let mut rng = SplitMix64::new(seed);
        let mut worst = 0.0f64;
        for _ in 0..cases {
            let pred = random_hover(&mut rng, size, size);
            let target = random_hover(&mut rng, size, size);
            let (_, grad) = mse_hover(&pred, &target).expect("shapes match");
            worst = worst.max(max_err_hover(&pred, &grad, |p| {
                mse_hover(p, &target).expect("shapes match").0
            }));
        }
        worst
    }

    pub fn check_msge_gradient(cases: usize, seed: u64, size: usize) -> f64 {
        let mut rng = SplitMix64::new(seed);
        let mut worst = 0.0f64;
        for _ in 0..cases {
            let pred = random_hover(&mut rng, size, size);
            let target = random_hover(&mut rng, size, size);
            let mask = BinaryMask::from_fn(size, size, |_, _| rng.next_u64() % 2 == 0)
                .expect("valid test mask");
            let (_, grad) = msge_gradient(&pred, &target, &mask).expect("shapes match");
            worst = worst.max(max_err_hover(&pred, &grad, |p| {
                msge_gradient(p, &target, &mask).expect("shapes match").0
            }));
        }
        worst
    }

    pub fn check_cross_entropy(cases: usize, seed: u64, size: usize, channels: usize) -> f64 {
        let mut rng = SplitMix64::new(seed);
        let mut worst = 0.0f64;
        for _ in 0..cases {
            let pred = random_softmax(&mut rng, size, size, channels);
            let target = random_onehot(&mut rng, size, size, channels);
            let (_, grad) = cross_entropy(&pred, &target).expect("shapes match");
            worst = worst.max(max_err_raster(&pred, &grad, |p| {
                cross_entropy(p, &target).expect("shapes match").0
            }));
        }
        worst
    }

    pub fn check_dice(cases: usize, seed: u64, size: usize, channels: usize) -> f64 {
        let mut rng = SplitMix64::new(seed);
        let mut worst = 0.0f64;
        for _ in 0..cases {
            let pred = random_softmax(&mut rng, size, size, channels);
            let target = random_onehot(&mut rng, size, size, channels);
            let (_, grad) = dice_loss(&pred, &target, DEFAULT_DICE_EPSILON).expect("shapes match");
            worst = worst.max(max_err_raster(&pred, &grad, |p| {
                dice_loss(p, &target, DEFAULT_DICE_EPSILON)
                    .expect("shapes match")
                    .0
            }));
        }
        worst
    }

    /// Runs all four checks on `cases` random 8x8 inputs each.
    pub fn check_all(cases: usize, seed: u64) -> GradCheckReport {
        let hover_mse = check_mse_hover(cases, seed, 8);
        let hover_grad = check_msge_gradient(cases, seed.wrapping_add(1), 8);
        let ce = check_cross_entropy(cases, seed.wrapping_add(2), 8, 5);
        let dice = check_dice(cases, seed.wrapping_add(3), 8, 5);
        GradCheckReport {
            hover_mse,
            hover_grad,
            cross_entropy: ce,
            dice,
            max_rel_err: hover_mse.max(hover_grad).max(ce).max(dice),
        }
    }
}
