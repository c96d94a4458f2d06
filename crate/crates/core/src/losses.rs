//! Training losses with analytic gradients: focal classification loss,
//! DIoU regression loss through the anchor-delta decoding chain, and a
//! soft-target cross-entropy loss for the IoU-prediction head.
//!
//! All gradients are taken with respect to the pre-sigmoid logits (for the
//! classification and IoU heads) or the raw delta outputs (for the
//! regression head), so a caller can chain them straight into whatever
//! produced those outputs. Reductions use a fixed summation order, keeping
//! training runs reproducible.

use crate::assigner::{AnchorLabel, AssignResult};
use crate::geometry::{diou_loss, diou_loss_grad, iou, BBox};
use crate::{Error, Result};

/// Probability clamp applied before any logarithm.
pub const PROB_EPS: f64 = 1e-12;

/// Upper clamp on width/height deltas before exponentiation, preventing
/// overflow for wild regression outputs: `ln(1000/16)`.
pub const DELTA_WH_CLAMP: f64 = 4.135166556742356;

fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_EPS, 1.0 - PROB_EPS)
}

/// Focal loss parameters. The focusing exponent and the balance weight
/// follow the usual one-stage-detector defaults.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FocalConfig {
    /// Focusing exponent; 0 reduces the loss to scaled cross-entropy.
    pub gamma: f64,
    /// Weight on the positive class, in (0, 1).
    pub alpha_balance: f64,
}

impl Default for FocalConfig {
    fn default() -> Self {
        Self { gamma: 2.0, alpha_balance: 0.25 }
    }
}

/// Binary focal loss of a sigmoid probability against a 0/1 target.
///
/// Returns `(loss, d loss / d logit)`. Probabilities at exactly 0 or 1 are
/// clamped to `[PROB_EPS, 1 - PROB_EPS]` first.
pub fn focal_loss(prob: f64, target: bool, cfg: &FocalConfig) -> (f64, f64) {
    let p = clamp_prob(prob);
    let (gamma, alpha) = (cfg.gamma, cfg.alpha_balance);
    if target {
        let q = 1.0 - p;
        let loss = -alpha * q.powf(gamma) * p.ln();
        let grad = alpha * gamma * p * q.powf(gamma) * p.ln() - alpha * q.powf(gamma + 1.0);
        (loss, grad)
    } else {
        let q = 1.0 - p;
        let loss = -(1.0 - alpha) * p.powf(gamma) * q.ln();
        let grad = -(1.0 - alpha) * (gamma * p.powf(gamma) * q * q.ln() - p.powf(gamma + 1.0));
        (loss, grad)
    }
}

/// Soft-target binary cross entropy for the IoU-prediction head.
///
/// `target_iou` is the IoU between a positive anchor's decoded box and its
/// matched ground truth, treated as a constant. Returns
/// `(loss, d loss / d logit)`; the logit gradient is simply `p - t`.
pub fn bce_iou_loss(pred_iou: f64, target_iou: f64) -> (f64, f64) {
    debug_assert!((0.0..=1.0).contains(&target_iou), "target IoU out of range");
    let p = clamp_prob(pred_iou);
    let t = target_iou;
    let loss = -(t * p.ln() + (1.0 - t) * (1.0 - p).ln());
    (loss, p - t)
}

/// Decode head deltas `(dx, dy, dw, dh)` against an anchor into a box, with
/// the 4x4 Jacobian `d(x1,y1,x2,y2)/d(dx,dy,dw,dh)`.
///
/// Centers move by `(dx * anchor_w, dy * anchor_h)`; sizes scale by
/// `exp(dw)`, `exp(dh)` with `dw, dh` clamped to [`DELTA_WH_CLAMP`].
/// `decode_deltas(anchor, [0; 4])` returns the anchor exactly.
pub fn decode_deltas(anchor: &BBox, deltas: &[f64; 4]) -> (BBox, [[f64; 4]; 4]) {
    debug_assert!(anchor.area() > 0.0, "anchor must have positive area");
    let aw = anchor.width();
    let ah = anchor.height();
    let (acx, acy) = anchor.center();

    let dw = deltas[2].min(DELTA_WH_CLAMP);
    let dh = deltas[3].min(DELTA_WH_CLAMP);
    // Clamp subgradient: pass-through while the raw value is within range.
    let cw = if deltas[2] <= DELTA_WH_CLAMP { 1.0 } else { 0.0 };
    let ch = if deltas[3] <= DELTA_WH_CLAMP { 1.0 } else { 0.0 };

    let cx = acx + deltas[0] * aw;
    let cy = acy + deltas[1] * ah;
    let w = aw * dw.exp();
    let h = ah * dh.exp();

    let bbox = BBox { x1: cx - w / 2.0, y1: cy - h / 2.0, x2: cx + w / 2.0, y2: cy + h / 2.0 };
    let jac = [
        [aw, 0.0, -w / 2.0 * cw, 0.0],
        [0.0, ah, 0.0, -h / 2.0 * ch],
        [aw, 0.0, w / 2.0 * cw, 0.0],
        [0.0, ah, 0.0, h / 2.0 * ch],
    ];
    (bbox, jac)
}

/// Component weights applied to the three loss terms; all 1.0 by default.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig {
    pub focal: FocalConfig,
    pub cls_weight: f64,
    pub reg_weight: f64,
    pub iou_weight: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self { focal: FocalConfig::default(), cls_weight: 1.0, reg_weight: 1.0, iou_weight: 1.0 }
    }
}

/// Weighted loss components of one forward pass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBundle {
    pub cls_loss: f64,
    pub reg_loss: f64,
    pub iou_loss: f64,
    /// `cls_loss + reg_loss + iou_loss`.
    pub total: f64,
    pub num_positives: usize,
}

/// Gradients of [`LossBundle::total`] with respect to every head output.
#[derive(Debug, Clone, PartialEq)]
pub struct LossGradients {
    /// Per anchor, d total / d classification logit.
    pub cls_logits: Vec<f64>,
    /// Per anchor, d total / d (dx, dy, dw, dh). Zero for negatives.
    pub deltas: Vec<[f64; 4]>,
    /// Per anchor, d total / d IoU logit. Zero for negatives.
    pub iou_logits: Vec<f64>,
}

/// Combine the three head losses over one image's anchors.
///
/// - Classification: focal loss over all anchors (positives target 1,
///   negatives target 0), summed and divided by `max(num_positives, 1)`.
/// - Regression: mean DIoU loss over positives, applied to boxes decoded
///   from the deltas; the gradient chains `diou_loss_grad` through the
///   decode Jacobian.
/// - IoU head: mean soft-target cross entropy over positives, the target
///   being the IoU of the decoded box with its matched ground truth; the
///   target is a constant (no gradient flows through it).
///
/// With zero positives the regression and IoU terms are 0 and the
/// classification term is still computed.
pub fn total_loss(
    assign: &AssignResult,
    cls_probs: &[f64],
    deltas: &[[f64; 4]],
    iou_preds: &[f64],
    anchors: &[BBox],
    gts: &[BBox],
    cfg: &LossConfig,
) -> Result<(LossBundle, LossGradients)> {
    let n = anchors.len();
    if assign.labels.len() != n || cls_probs.len() != n || deltas.len() != n || iou_preds.len() != n {
        return Err(Error::Shape(format!(
            "anchor-aligned inputs disagree: anchors {n}, labels {}, cls {}, deltas {}, iou {}",
            assign.labels.len(),
            cls_probs.len(),
            deltas.len(),
            iou_preds.len()
        )));
    }

    let num_pos = assign.num_positives();
    let cls_norm = num_pos.max(1) as f64;

    let mut cls_sum = 0.0;
    let mut cls_grads = vec![0.0f64; n];
    for i in 0..n {
        let (loss, grad) = focal_loss(cls_probs[i], assign.labels[i].is_positive(), &cfg.focal);
        cls_sum += loss;
        cls_grads[i] = grad * cfg.cls_weight / cls_norm;
    }
    let cls_loss = cls_sum / cls_norm * cfg.cls_weight;

    let mut reg_sum = 0.0;
    let mut iou_sum = 0.0;
    let mut delta_grads = vec![[0.0f64; 4]; n];
    let mut iou_grads = vec![0.0f64; n];
    if num_pos > 0 {
        let pos_norm = num_pos as f64;
        for i in 0..n {
            let AnchorLabel::Positive(gi) = assign.labels[i] else { continue };
            let gt = gts.get(gi).ok_or_else(|| {
                Error::Shape(format!("assignment references gt {gi} but only {} given", gts.len()))
            })?;
            let (decoded, jac) = decode_deltas(&anchors[i], &deltas[i]);
            let breakdown = diou_loss(&decoded, gt);
            reg_sum += breakdown.loss;
            let box_grad = diou_loss_grad(&decoded, gt);
            for col in 0..4 {
                let mut acc = 0.0;
                for row in 0..4 {
                    acc += box_grad[row] * jac[row][col];
                }
                delta_grads[i][col] = acc * cfg.reg_weight / pos_norm;
            }

            let target = iou(&decoded, gt);
            let (loss, grad) = bce_iou_loss(iou_preds[i], target);
            iou_sum += loss;
            iou_grads[i] = grad * cfg.iou_weight / pos_norm;
        }
        reg_sum = reg_sum / pos_norm * cfg.reg_weight;
        iou_sum = iou_sum / pos_norm * cfg.iou_weight;
    }

    let bundle = LossBundle {
        cls_loss,
        reg_loss: reg_sum,
        iou_loss: iou_sum,
        total: cls_loss + reg_sum + iou_sum,
        num_positives: num_pos,
    };
    Ok((bundle, LossGradients { cls_logits: cls_grads, deltas: delta_grads, iou_logits: iou_grads }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assigner::{assign, AssignerConfig};

    #[test]
    fn focal_half_probability_positive() {
        let (loss, _) = focal_loss(0.5, true, &FocalConfig::default());
        // 0.25 * 0.25 * ln 2
        assert!((loss - 0.04332169878499658).abs() < 1e-15, "{loss}");
    }

    #[test]
    fn focal_confident_correct_goes_to_zero() {
        let (loss, _) = focal_loss(1.0 - 1e-9, true, &FocalConfig::default());
        assert!(loss < 1e-15);
    }

    #[test]
    fn focal_gamma_zero_is_scaled_bce() {
        let cfg = FocalConfig { gamma: 0.0, alpha_balance: 0.5 };
        for &p in &[0.1, 0.5, 0.9] {
            let (l1, g1) = focal_loss(p, true, &cfg);
            assert!((l1 - 0.5 * -(p as f64).ln()).abs() < 1e-12);
            assert!((g1 - 0.5 * (p - 1.0)).abs() < 1e-12);
            let (l0, g0) = focal_loss(p, false, &cfg);
            assert!((l0 - 0.5 * -(1.0 - p).ln()).abs() < 1e-12);
            assert!((g0 - 0.5 * p).abs() < 1e-12);
        }
    }

    #[test]
    fn focal_clamps_extreme_probabilities() {
        let (l0, g0) = focal_loss(0.0, true, &FocalConfig::default());
        let (l1, g1) = focal_loss(1.0, false, &FocalConfig::default());
        assert!(l0.is_finite() && g0.is_finite() && l1.is_finite() && g1.is_finite());
    }

    #[test]
    fn bce_perfect_prediction() {
        let (loss, grad) = bce_iou_loss(1.0, 1.0);
        assert!(loss < 1e-10);
        assert!(grad.abs() < 1e-10);
    }

    #[test]
    fn bce_soft_target_minimum() {
        let (loss, grad) = bce_iou_loss(0.7, 0.7);
        assert!((loss - 0.6108643020548935).abs() < 1e-15, "{loss}");
        assert!(grad.abs() < 1e-15);
    }

    #[test]
    fn bce_gradient_is_p_minus_t() {
        let (_, grad) = bce_iou_loss(0.9, 0.6);
        assert!((grad - 0.3).abs() < 1e-12);
    }

    #[test]
    fn decode_identity() {
        let anchor = BBox::new(2.0, 3.0, 10.0, 9.0);
        let (bbox, jac) = decode_deltas(&anchor, &[0.0; 4]);
        assert_eq!(bbox, anchor);
        let (aw, ah) = (anchor.width(), anchor.height());
        assert_eq!(jac[0], [aw, 0.0, -aw / 2.0, 0.0]);
        assert_eq!(jac[1], [0.0, ah, 0.0, -ah / 2.0]);
        assert_eq!(jac[2], [aw, 0.0, aw / 2.0, 0.0]);
        assert_eq!(jac[3], [0.0, ah, 0.0, ah / 2.0]);
    }

    #[test]
    fn decode_shift_and_double_width() {
        let anchor = BBox::new(6.0, 6.0, 14.0, 14.0); // center (10,10), 8x8
        let (bbox, _) = decode_deltas(&anchor, &[0.5, 0.0, 2f64.ln(), 0.0]);
        assert!((bbox.x1 - 6.0).abs() < 1e-12);
        assert!((bbox.y1 - 6.0).abs() < 1e-12);
        assert!((bbox.x2 - 22.0).abs() < 1e-12);
        assert!((bbox.y2 - 14.0).abs() < 1e-12);
    }

    #[test]
    fn decode_clamps_huge_size_deltas() {
        let anchor = BBox::new(0.0, 0.0, 16.0, 16.0);
        let (bbox, jac) = decode_deltas(&anchor, &[0.0, 0.0, 50.0, 0.0]);
        assert!((bbox.width() - 16.0 * 1000.0 / 16.0).abs() < 1e-6);
        // Past the clamp, size gradients vanish.
        assert_eq!(jac[0][2], 0.0);
        assert_eq!(jac[2][2], 0.0);
    }

    fn perfect_setup() -> (AssignResult, Vec<f64>, Vec<[f64; 4]>, Vec<f64>, Vec<BBox>, Vec<BBox>) {
        let anchors = vec![BBox::new(0.0, 0.0, 10.0, 10.0), BBox::new(40.0, 40.0, 50.0, 50.0)];
        let gts = vec![BBox::new(0.0, 0.0, 10.0, 10.0)];
        let assign = assign(&anchors, &gts, &AssignerConfig::default()).unwrap();
        let cls = vec![1.0, 0.0];
        let deltas = vec![[0.0; 4]; 2];
        let ious = vec![1.0, 0.5];
        (assign, cls, deltas, ious, anchors, gts)
    }

    #[test]
    fn perfect_predictions_give_near_zero_total() {
        let (assign, cls, deltas, ious, anchors, gts) = perfect_setup();
        let (bundle, _) =
            total_loss(&assign, &cls, &deltas, &ious, &anchors, &gts, &LossConfig::default()).unwrap();
        assert!(bundle.total < 1e-9, "{bundle:?}");
        assert_eq!(bundle.num_positives, 1);
    }

    #[test]
    fn reg_loss_reuses_diou_worked_value() {
        // Positive anchor whose decoded box is (0,0,2,2) against gt (1,1,3,3).
        let anchors = vec![BBox::new(0.0, 0.0, 2.0, 2.0)];
        let gts = vec![BBox::new(1.0, 1.0, 3.0, 3.0)];
        let assign = AssignResult {
            labels: vec![AnchorLabel::Positive(0)],
            max_ious: vec![1.0 / 7.0],
            positives_per_gt: vec![1],
        };
        let (bundle, _) = total_loss(
            &assign,
            &[0.9],
            &[[0.0; 4]],
            &[0.5],
            &anchors,
            &gts,
            &LossConfig::default(),
        )
        .unwrap();
        assert!((bundle.reg_loss - 0.9682539682539683).abs() < 1e-12, "{}", bundle.reg_loss);
    }

    #[test]
    fn zero_positives_still_scores_classification() {
        let anchors = vec![BBox::new(0.0, 0.0, 10.0, 10.0)];
        let assign = assign(&anchors, &[], &AssignerConfig::default()).unwrap();
        let (bundle, grads) = total_loss(
            &assign,
            &[0.3],
            &[[0.1; 4]],
            &[0.5],
            &anchors,
            &[],
            &LossConfig::default(),
        )
        .unwrap();
        assert_eq!(bundle.num_positives, 0);
        assert_eq!(bundle.reg_loss, 0.0);
        assert_eq!(bundle.iou_loss, 0.0);
        assert!(bundle.cls_loss > 0.0);
        assert_eq!(grads.deltas[0], [0.0; 4]);
        assert_eq!(grads.iou_logits[0], 0.0);
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let (assign, cls, deltas, ious, anchors, gts) = perfect_setup();
        let err = total_loss(&assign, &cls[..1], &deltas, &ious, &anchors, &gts, &LossConfig::default());
        assert!(err.is_err());
    }

    #[test]
    fn duplicating_positives_keeps_mean_losses() {
        let anchors = vec![BBox::new(0.0, 0.0, 8.0, 8.0)];
        let gts = vec![BBox::new(1.0, 1.0, 8.0, 8.0)];
        let a1 = assign(&anchors, &gts, &AssignerConfig::default()).unwrap();
        let (b1, _) = total_loss(
            &a1,
            &[0.8],
            &[[0.05, -0.02, 0.1, 0.0]],
            &[0.6],
            &anchors,
            &gts,
            &LossConfig::default(),
        )
        .unwrap();

        let anchors2 = vec![anchors[0], anchors[0]];
        let a2 = assign(&anchors2, &gts, &AssignerConfig::default()).unwrap();
        let (b2, _) = total_loss(
            &a2,
            &[0.8, 0.8],
            &[[0.05, -0.02, 0.1, 0.0], [0.05, -0.02, 0.1, 0.0]],
            &[0.6, 0.6],
            &anchors2,
            &gts,
            &LossConfig::default(),
        )
        .unwrap();
        assert!((b1.reg_loss - b2.reg_loss).abs() < 1e-12);
        assert!((b1.iou_loss - b2.iou_loss).abs() < 1e-12);
    }
}
