//! Binary segmentation evaluation: pixel counts, precision, pixel accuracy
//! and the Jaccard index.

use crate::error::{Error, Result};
use crate::mask::Mask;
use crate::tensor::Tensor;

/// Confusion counts plus the derived metrics for one predicted/true mask pair.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalRecord {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
    /// tp / (tp + fp); 0 with `precision_defined = false` when the predicted
    /// foreground is empty.
    pub precision: f64,
    pub precision_defined: bool,
    /// (tp + tn) / (H*W): overall pixel correctness.
    pub pixel_accuracy: f64,
    /// tp / (tp + fp + fn); 1 when both foregrounds are empty.
    pub jaccard: f64,
}

/// Per-pixel argmax of a [2,H,W] logit map. Foreground wins only on a
/// strict majority; ties go to background.
pub fn binarize(logits: &Tensor) -> Result<Mask> {
    let shape = logits.shape();
    if shape.len() != 3 || shape[0] != 2 {
        return Err(Error::invalid(format!(
            "binarize expects [2,H,W] logits, got {shape:?}"
        )));
    }
    let (h, w) = (shape[1], shape[2]);
    let hw = h * w;
    let data = (0..hw)
        .map(|p| logits.data()[hw + p] > logits.data()[p])
        .collect();
    Ok(Mask::new(h, w, data))
}

/// Exhaustive pixel comparison of a predicted mask against ground truth.
pub fn evaluate(pred: &Mask, gt: &Mask) -> Result<EvalRecord> {
    if pred.height() != gt.height() || pred.width() != gt.width() {
        return Err(Error::ShapeMismatch {
            left: vec![pred.height(), pred.width()],
            right: vec![gt.height(), gt.width()],
        });
    }
    let (mut tp, mut fp, mut fn_, mut tn) = (0usize, 0usize, 0usize, 0usize);
    for (&p, &g) in pred.data().iter().zip(gt.data()) {
        match (p, g) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => tn += 1,
        }
    }
    let total = (tp + fp + fn_ + tn) as f64;
    let precision_defined = tp + fp > 0;
    let precision = if precision_defined {
        tp as f64 / (tp + fp) as f64
    } else {
        0.0
    };
    let union = tp + fp + fn_;
    let jaccard = if union > 0 {
        tp as f64 / union as f64
    } else {
        1.0
    };
    Ok(EvalRecord {
        tp,
        fp,
        fn_,
        tn,
        precision,
        precision_defined,
        pixel_accuracy: (tp + tn) as f64 / total,
        jaccard,
    })
}
