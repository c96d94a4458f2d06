//! Inference-side pipeline: IoU-aware score fusion, greedy NMS, box
//! voting, and test-time-augmentation coordinate maps plus merging.

use crate::geometry::{iou, BBox};
use crate::{Error, Result};

/// A scored detection. `fused_score` is `cls_score^alpha *
/// pred_iou^(1-alpha)` once fused; see [`fuse_score`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub bbox: BBox,
    /// Classification probability, in [0, 1].
    pub cls_score: f64,
    /// Predicted IoU of the box with its (unknown) ground truth, in [0, 1].
    pub pred_iou: f64,
    /// Final ranking confidence, in [0, 1].
    pub fused_score: f64,
}

impl Detection {
    /// Build a detection with its fused score computed from `cfg`.
    pub fn fused(bbox: BBox, cls_score: f64, pred_iou: f64, cfg: &FusionConfig) -> Self {
        Self { bbox, cls_score, pred_iou, fused_score: fuse_score(cls_score, pred_iou, cfg) }
    }

    /// Build a detection from a single file-borne score; all three score
    /// fields carry the same value.
    pub fn from_score(bbox: BBox, score: f64) -> Self {
        Self { bbox, cls_score: score, pred_iou: score, fused_score: score }
    }
}

/// Weighting between classification score and predicted IoU in the fused
/// confidence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FusionConfig {
    /// Exponent on the classification score, in [0, 1]; the predicted IoU
    /// gets `1 - alpha`.
    pub alpha: f64,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self { alpha: 0.5 }
    }
}

impl FusionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Config("alpha: must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Final detection confidence `cls_score^alpha * pred_iou^(1-alpha)`.
///
/// `0^0` is defined as 1, and the endpoint exponents are special-cased so
/// `alpha = 1` returns `cls_score` exactly and `alpha = 0` returns
/// `pred_iou` exactly.
pub fn fuse_score(cls_score: f64, pred_iou: f64, cfg: &FusionConfig) -> f64 {
    debug_assert!((0.0..=1.0).contains(&cls_score) && (0.0..=1.0).contains(&pred_iou));
    if cfg.alpha == 1.0 {
        cls_score
    } else if cfg.alpha == 0.0 {
        pred_iou
    } else {
        cls_score.powf(cfg.alpha) * pred_iou.powf(1.0 - cfg.alpha)
    }
}

/// Greedy non-maximum suppression by descending fused score.
///
/// Returns the indices of kept detections, highest score first. A
/// detection is suppressed when its IoU with an already-kept detection
/// exceeds `iou_thr` (strictly). Score ties keep input order.
pub fn nms(dets: &[Detection], iou_thr: f64) -> Vec<usize> {
    assert!(iou_thr > 0.0 && iou_thr < 1.0, "iou_thr must lie in (0, 1)");
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| dets[b].fused_score.total_cmp(&dets[a].fused_score));
    let mut kept: Vec<usize> = Vec::new();
    for &i in &order {
        let suppressed =
            kept.iter().any(|&k| iou(&dets[k].bbox, &dets[i].bbox) > iou_thr);
        if !suppressed {
            kept.push(i);
        }
    }
    kept
}

/// Refine each kept box as the fused-score-weighted average of all pool
/// boxes overlapping it with IoU at least `vote_iou_thr`. Scores are left
/// untouched; only coordinates move. `kept` should be NMS survivors drawn
/// from `pool`, so each cluster contains at least the box itself.
pub fn box_vote(kept: &[Detection], pool: &[Detection], vote_iou_thr: f64) -> Vec<Detection> {
    kept.iter()
        .map(|det| {
            let mut weight = 0.0;
            let mut acc = [0.0f64; 4];
            for p in pool {
                if iou(&p.bbox, &det.bbox) >= vote_iou_thr {
                    let w = p.fused_score;
                    acc[0] += w * p.bbox.x1;
                    acc[1] += w * p.bbox.y1;
                    acc[2] += w * p.bbox.x2;
                    acc[3] += w * p.bbox.y2;
                    weight += w;
                }
            }
            if weight > 0.0 {
                Detection {
                    bbox: BBox {
                        x1: acc[0] / weight,
                        y1: acc[1] / weight,
                        x2: acc[2] / weight,
                        y2: acc[3] / weight,
                    },
                    ..*det
                }
            } else {
                // All-zero cluster weights: leave the box alone.
                *det
            }
        })
        .collect()
}

/// One test-time-augmentation variant: uniform scale, pixel shift, and an
/// optional horizontal flip about the variant canvas width, applied in
/// that order. Carries the original image size so the flip axis and the
/// inverse map are fully determined.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TtaVariant {
    pub scale: f64,
    /// Pixel shift applied after scaling, (dx, dy).
    pub shift: (f64, f64),
    pub flip: bool,
    pub image_w: f64,
    pub image_h: f64,
}

impl TtaVariant {
    pub fn identity(image_w: f64, image_h: f64) -> Self {
        Self { scale: 1.0, shift: (0.0, 0.0), flip: false, image_w, image_h }
    }

    /// Width of the variant canvas: scaled image width plus the x shift.
    pub fn variant_width(&self) -> f64 {
        self.image_w * self.scale + self.shift.0
    }

    /// Map a box from original coordinates into variant coordinates.
    pub fn forward_box(&self, b: &BBox) -> BBox {
        let scaled = b.scale(self.scale).translate(self.shift.0, self.shift.1);
        if self.flip {
            scaled.hflip(self.variant_width())
        } else {
            scaled
        }
    }

    /// Exact inverse of [`forward_box`].
    pub fn inverse_box(&self, b: &BBox) -> BBox {
        let unflipped = if self.flip { b.hflip(self.variant_width()) } else { *b };
        unflipped.translate(-self.shift.0, -self.shift.1).scale(1.0 / self.scale)
    }
}

/// Construct the coordinate map for one TTA variant.
///
/// `shift` is the actual pixel shift (direction multipliers already
/// applied). `scale` must be positive.
pub fn tta_transform(image_w: f64, image_h: f64, scale: f64, shift: (f64, f64), flip: bool) -> TtaVariant {
    assert!(scale > 0.0, "scale must be positive");
    TtaVariant { scale, shift, flip, image_w, image_h }
}

/// The full test-time-augmentation recipe: target short edges, shift
/// directions, optional horizontal flip, and the merge thresholds.
#[derive(Debug, Clone, PartialEq)]
pub struct TtaPlan {
    /// Target short-edge sizes; each becomes a scale factor
    /// `edge / min(image_w, image_h)`.
    pub short_edges: Vec<u32>,
    /// Unit multipliers on `shift_pixels`, entries in {0, 1}.
    pub shift_directions: Vec<(u8, u8)>,
    /// Shift magnitude in variant pixels.
    pub shift_pixels: u32,
    /// Also run every variant horizontally flipped.
    pub hflip: bool,
    /// Greedy-NMS threshold applied to the merged pool.
    pub nms_iou_thr: f64,
    /// Cluster threshold for box voting.
    pub vote_iou_thr: f64,
    /// Drop pooled detections below this fused score; 0 keeps everything.
    pub score_thr: f64,
}

impl Default for TtaPlan {
    fn default() -> Self {
        Self {
            short_edges: vec![500, 800, 1100, 1400, 1700],
            shift_directions: vec![(0, 0), (0, 1), (1, 0), (1, 1)],
            shift_pixels: 32,
            hflip: true,
            nms_iou_thr: 0.5,
            vote_iou_thr: 0.5,
            score_thr: 0.0,
        }
    }
}

impl TtaPlan {
    pub fn validate(&self) -> Result<()> {
        if self.short_edges.is_empty() || self.short_edges.iter().any(|&e| e == 0) {
            return Err(Error::Config("short_edges: must be non-empty and positive".into()));
        }
        if self.shift_directions.iter().any(|&(dx, dy)| dx > 1 || dy > 1) {
            return Err(Error::Config("shift_directions: multipliers must be 0 or 1".into()));
        }
        if !(self.nms_iou_thr > 0.0 && self.nms_iou_thr < 1.0) {
            return Err(Error::Config("nms_iou_thr: must lie in (0, 1)".into()));
        }
        if !(self.vote_iou_thr > 0.0 && self.vote_iou_thr <= 1.0) {
            return Err(Error::Config("vote_iou_thr: must lie in (0, 1]".into()));
        }
        Ok(())
    }

    /// Expand the plan into concrete variants for one image: the cartesian
    /// product of scales, shift directions, and (when enabled) flip.
    pub fn variants(&self, image_w: f64, image_h: f64) -> Vec<TtaVariant> {
        let short = image_w.min(image_h);
        let mut out = Vec::new();
        for &edge in &self.short_edges {
            let scale = edge as f64 / short;
            for &(dx, dy) in &self.shift_directions {
                let shift = (dx as f64 * self.shift_pixels as f64, dy as f64 * self.shift_pixels as f64);
                for &flip in if self.hflip { &[false, true][..] } else { &[false][..] } {
                    out.push(tta_transform(image_w, image_h, scale, shift, flip));
                }
            }
        }
        out
    }
}

/// Merge per-variant detections into one final list:
/// inverse-map each variant's detections to original coordinates, pool
/// them (dropping scores below `plan.score_thr`), NMS the pool, vote each
/// survivor against the full pool, and sort by fused score descending.
///
/// The pooled list is canonically ordered before NMS, so the result does
/// not depend on the order in which variants are supplied.
pub fn merge_tta(per_variant: &[(TtaVariant, Vec<Detection>)], plan: &TtaPlan) -> Vec<Detection> {
    let mut pool: Vec<Detection> = per_variant
        .iter()
        .flat_map(|(variant, dets)| {
            dets.iter().map(move |d| Detection { bbox: variant.inverse_box(&d.bbox), ..*d })
        })
        .filter(|d| d.fused_score >= plan.score_thr)
        .collect();
    if pool.is_empty() {
        return Vec::new();
    }
    pool.sort_by(|a, b| {
        b.fused_score
            .total_cmp(&a.fused_score)
            .then(a.bbox.x1.total_cmp(&b.bbox.x1))
            .then(a.bbox.y1.total_cmp(&b.bbox.y1))
            .then(a.bbox.x2.total_cmp(&b.bbox.x2))
            .then(a.bbox.y2.total_cmp(&b.bbox.y2))
            .then(a.cls_score.total_cmp(&b.cls_score))
            .then(a.pred_iou.total_cmp(&b.pred_iou))
    });
    let kept: Vec<Detection> = nms(&pool, plan.nms_iou_thr).into_iter().map(|i| pool[i]).collect();
    box_vote(&kept, &pool, plan.vote_iou_thr)
}

/// Uniform scale factor that brings an image as close as possible to the
/// short/long edge caps without surpassing either:
/// `min(max_short / short_edge, max_long / long_edge)`. May exceed 1; the
/// caps are limits, not targets.
pub fn keep_ratio_resize_plan(image_w: f64, image_h: f64, max_short: f64, max_long: f64) -> f64 {
    assert!(image_w > 0.0 && image_h > 0.0, "image dimensions must be positive");
    let short = image_w.min(image_h);
    let long = image_w.max(image_h);
    (max_short / short).min(max_long / long)
}

/// Default short/long caps for single-scale testing.
pub const RESIZE_MAX_SHORT: f64 = 1100.0;
pub const RESIZE_MAX_LONG: f64 = 1650.0;
