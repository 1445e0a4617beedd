//! Segmentation losses (cross-entropy, Dice, focal) and the pixel-level
//! metric-learning triplet losses, all differentiable through the tensor
//! engine.
//!
//! Channel convention everywhere: channel 0 = background, channel 1 =
//! foreground. The hinge subgradient at its kink is 0 and log arguments are
//! clamped at 1e-12, so every loss stays finite on saturated inputs.

use crate::error::{Error, Result};
use crate::sampler::{rowwise_sq_dist, SampleSets};
use crate::tensor::Tensor;

pub const LOG_FLOOR: f64 = 1e-12;

/// Which segmentation loss drives the semantic head.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SegLossKind {
    Ce,
    Dice,
    Focal,
}

impl SegLossKind {
    pub fn parse(s: &str) -> Result<SegLossKind> {
        match s {
            "ce" => Ok(SegLossKind::Ce),
            "dice" => Ok(SegLossKind::Dice),
            "focal" => Ok(SegLossKind::Focal),
            other => Err(Error::invalid(format!(
                "unknown segmentation loss '{other}' (expected ce, dice or focal)"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            SegLossKind::Ce => "ce",
            SegLossKind::Dice => "dice",
            SegLossKind::Focal => "focal",
        }
    }
}

/// Hyperparameters of the combined loss.
#[derive(Debug, Clone)]
pub struct LossConfig {
    /// Violate margin m of the hinge terms.
    pub margin_m: f64,
    /// Trade-off coefficient at epoch 0.
    pub lambda0: f64,
    /// Per-epoch multiplicative decay of lambda.
    pub lambda_decay: f64,
    /// Requested triples per class; capped per image by class sizes.
    pub k: usize,
    pub focal_gamma: f64,
    pub dice_smooth: f64,
    pub seg_loss_kind: SegLossKind,
    pub use_is_triplet: bool,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            margin_m: 3.0,
            lambda0: 1.0,
            lambda_decay: 0.85,
            k: 5000,
            focal_gamma: 2.0,
            dice_smooth: 1.0,
            seg_loss_kind: SegLossKind::Dice,
            use_is_triplet: false,
        }
    }
}

impl LossConfig {
    /// lambda at epoch e: lambda0 * lambda_decay^e, exactly.
    pub fn lambda_at(&self, epoch: u32) -> f64 {
        self.lambda0 * self.lambda_decay.powi(epoch as i32)
    }
}

fn check_mask(pred_shape: &[usize], mask: &Tensor) -> Result<(usize, usize)> {
    if pred_shape.len() != 3 || pred_shape[0] != 2 {
        return Err(Error::invalid(format!(
            "expected [2,H,W] prediction, got {pred_shape:?}"
        )));
    }
    if mask.shape() != &pred_shape[1..] {
        return Err(Error::ShapeMismatch {
            left: pred_shape.to_vec(),
            right: mask.shape().to_vec(),
        });
    }
    if let Some(&bad) = mask.data().iter().find(|&&v| v != 0.0 && v != 1.0) {
        return Err(Error::invalid(format!("mask value {bad} is not binary")));
    }
    Ok((pred_shape[1], pred_shape[2]))
}

/// Per-pixel probability of the true class: p_fg where mask=1, p_bg where
/// mask=0. `probs` must already be a per-pixel distribution.
fn true_class_prob(probs: &Tensor, mask: &Tensor) -> Result<Tensor> {
    let p_bg = probs.channel(0)?;
    let p_fg = probs.channel(1)?;
    let inv = mask.scale(-1.0).add_scalar(1.0);
    p_fg.mul(mask)?.add(&p_bg.mul(&inv)?)
}

/// Mean over pixels of -log p(true class), from raw logits.
pub fn cross_entropy_loss(logits: &Tensor, mask: &Tensor) -> Result<Tensor> {
    check_mask(logits.shape(), mask)?;
    let probs = logits.softmax_channel()?;
    let p_t = true_class_prob(&probs, mask)?;
    Ok(p_t.ln_clamped(LOG_FLOOR).scale(-1.0).mean())
}

/// Soft Dice loss: 1 - (2*|S∩G| + s) / (|S| + |G| + s) with foreground
/// probabilities as the soft segmentation S.
pub fn dice_loss(probs: &Tensor, mask: &Tensor, smooth: f64) -> Result<Tensor> {
    check_mask(probs.shape(), mask)?;
    if smooth <= 0.0 {
        return Err(Error::invalid(format!("dice smooth must be > 0, got {smooth}")));
    }
    let p_fg = probs.channel(1)?;
    let intersection = p_fg.mul(mask)?.sum();
    let numerator = intersection.scale(2.0).add_scalar(smooth);
    let denominator = p_fg.sum().add(&mask.sum())?.add_scalar(smooth);
    Ok(numerator.div(&denominator)?.scale(-1.0).add_scalar(1.0))
}

/// Focal loss: mean over pixels of (1 - p_t)^gamma * (-log p_t).
/// gamma = 0 reduces exactly to the cross-entropy loss.
pub fn focal_loss(probs: &Tensor, mask: &Tensor, gamma: f64) -> Result<Tensor> {
    check_mask(probs.shape(), mask)?;
    if gamma < 0.0 {
        return Err(Error::invalid(format!("focal gamma must be >= 0, got {gamma}")));
    }
    let p_t = true_class_prob(probs, mask)?;
    let modulator = p_t.scale(-1.0).add_scalar(1.0).powf(gamma)?;
    let nll = p_t.ln_clamped(LOG_FLOOR).scale(-1.0);
    Ok(modulator.mul(&nll)?.mean())
}

/// Classic single-triplet hinge: [||a-p||^2 + m - ||a-n||^2]_+
pub fn triplet_loss_single(
    anchor: &Tensor,
    positive: &Tensor,
    negative: &Tensor,
    margin: f64,
) -> Result<Tensor> {
    if anchor.shape() != positive.shape() || anchor.shape() != negative.shape() {
        return Err(Error::ShapeMismatch {
            left: anchor.shape().to_vec(),
            right: if anchor.shape() != positive.shape() {
                positive.shape().to_vec()
            } else {
                negative.shape().to_vec()
            },
        });
    }
    let d_ap = anchor.sub(positive)?.square().sum();
    let d_an = anchor.sub(negative)?.square().sum();
    Ok(d_ap.sub(&d_an)?.add_scalar(margin).relu())
}

/// The IS-Triplet loss over row-aligned sample sets:
/// half the sum of the mean foreground hinge term
/// [d²(F1_i,F2_i) - d²(F1_i,B1_i) + m]_+ and the mean background hinge term
/// [d²(B1_i,B2_i) - d²(B1_i,F2_i) + m]_+.
pub fn is_triplet_loss(sets: &SampleSets, margin: f64) -> Result<Tensor> {
    if sets.k_eff == 0 {
        return Err(Error::invalid("is_triplet_loss requires at least one triple"));
    }
    let loss1 = rowwise_sq_dist(&sets.f1, &sets.f2)?
        .sub(&rowwise_sq_dist(&sets.f1, &sets.b1)?)?
        .add_scalar(margin)
        .relu()
        .mean();
    let loss2 = rowwise_sq_dist(&sets.b1, &sets.b2)?
        .sub(&rowwise_sq_dist(&sets.b1, &sets.f2)?)?
        .add_scalar(margin)
        .relu()
        .mean();
    Ok(loss1.add(&loss2)?.scale(0.5))
}

/// Combined objective: seg + lambda * ist.
pub fn combined_loss(seg: &Tensor, ist: &Tensor, lambda: f64) -> Result<Tensor> {
    if lambda < 0.0 {
        return Err(Error::invalid(format!("lambda must be >= 0, got {lambda}")));
    }
    if !seg.is_scalar() || !ist.is_scalar() {
        return Err(Error::invalid("combined_loss expects scalar terms"));
    }
    seg.add(&ist.scale(lambda))
}
