//! Max-IoU label assignment and the positives-per-ground-truth
//! distribution analysis across scale buckets.
//!
//! Assignment runs on flattened anchors across all levels in one pass; IoU
//! is level-agnostic. No ignore band is used: the negative threshold
//! defaults equal to the positive one.

use crate::anchors::{generate_anchors, AnchorConfig};
use crate::geometry::{iou, BBox};
use crate::{Error, Result};
use std::collections::BTreeMap;

/// Thresholds and behavior of the max-IoU assigner.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AssignerConfig {
    /// Minimum IoU for an anchor to become positive.
    pub pos_iou_thr: f64,
    /// Below this IoU an anchor is negative. Equal to `pos_iou_thr` by
    /// default, leaving no ignore band in between.
    pub neg_iou_thr: f64,
    /// Guarantee every ground truth its best-IoU anchor as a positive,
    /// even when that IoU is below `pos_iou_thr`.
    pub match_low_quality: bool,
}

impl Default for AssignerConfig {
    fn default() -> Self {
        Self { pos_iou_thr: 0.35, neg_iou_thr: 0.35, match_low_quality: true }
    }
}

impl AssignerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.neg_iou_thr > 0.0 && self.neg_iou_thr <= self.pos_iou_thr && self.pos_iou_thr < 1.0) {
            return Err(Error::Config(
                "assigner thresholds: need 0 < neg_iou_thr <= pos_iou_thr < 1".into(),
            ));
        }
        Ok(())
    }
}

/// Per-anchor assignment outcome.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AnchorLabel {
    Negative,
    /// Positive, carrying the matched ground-truth index.
    Positive(usize),
}

impl AnchorLabel {
    pub fn is_positive(&self) -> bool {
        matches!(self, AnchorLabel::Positive(_))
    }
}

/// Result of assigning a set of anchors against a set of ground truths.
#[derive(Debug, Clone, PartialEq)]
pub struct AssignResult {
    /// One label per anchor.
    pub labels: Vec<AnchorLabel>,
    /// IoU of each anchor with its matched ground truth (for positives) or
    /// its best ground truth (for negatives); 0 with no ground truths.
    pub max_ious: Vec<f64>,
    /// Number of positive anchors assigned to each ground truth.
    pub positives_per_gt: Vec<usize>,
}

impl AssignResult {
    pub fn num_positives(&self) -> usize {
        self.labels.iter().filter(|l| l.is_positive()).count()
    }
}

/// Assign each anchor the ground truth of maximum IoU when that IoU meets
/// `pos_iou_thr`, otherwise mark it negative. Argmax ties break toward the
/// lowest ground-truth index. With `match_low_quality` on, each ground
/// truth additionally forces its single best-IoU anchor positive (ties
/// toward the lowest anchor index; ground truths processed in order, so a
/// later one may reclaim a forced anchor). The result is a pure function
/// of its inputs, bit-for-bit reproducible.
pub fn assign(anchors: &[BBox], gts: &[BBox], cfg: &AssignerConfig) -> Result<AssignResult> {
    cfg.validate()?;
    assert!(gts.iter().all(|g| g.area() > 0.0), "ground truths must have positive area");

    if anchors.is_empty() || gts.is_empty() {
        return Ok(AssignResult {
            labels: vec![AnchorLabel::Negative; anchors.len()],
            max_ious: vec![0.0; anchors.len()],
            positives_per_gt: vec![0; gts.len()],
        });
    }

    let mut labels = vec![AnchorLabel::Negative; anchors.len()];
    let mut max_ious = vec![0.0f64; anchors.len()];
    // Best anchor per gt, tracked in the same pass.
    let mut gt_best = vec![(0.0f64, usize::MAX); gts.len()];

    for (ai, anchor) in anchors.iter().enumerate() {
        let mut best = 0.0f64;
        let mut best_gt = 0usize;
        for (gi, gt) in gts.iter().enumerate() {
            let v = iou(anchor, gt);
            if v > best {
                best = v;
                best_gt = gi;
            }
            if v > gt_best[gi].0 {
                gt_best[gi] = (v, ai);
            }
        }
        max_ious[ai] = best;
        if best >= cfg.pos_iou_thr {
            labels[ai] = AnchorLabel::Positive(best_gt);
        }
    }

    if cfg.match_low_quality {
        for (gi, &(best_iou, best_anchor)) in gt_best.iter().enumerate() {
            if best_iou > 0.0 {
                labels[best_anchor] = AnchorLabel::Positive(gi);
                max_ious[best_anchor] = best_iou;
            }
        }
    }

    let mut positives_per_gt = vec![0usize; gts.len()];
    for label in &labels {
        if let AnchorLabel::Positive(gi) = label {
            positives_per_gt[*gi] += 1;
        }
    }

    Ok(AssignResult { labels, max_ious, positives_per_gt })
}

/// COCO-convention area buckets used by the distribution analysis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ScaleBucket {
    /// Area below 32^2 px^2.
    Small,
    /// Area in [32^2, 96^2) px^2.
    Medium,
    /// Area of at least 96^2 px^2.
    Large,
}

pub const SMALL_AREA_MAX: f64 = 32.0 * 32.0;
pub const MEDIUM_AREA_MAX: f64 = 96.0 * 96.0;

impl ScaleBucket {
    pub const ALL: [ScaleBucket; 3] = [ScaleBucket::Small, ScaleBucket::Medium, ScaleBucket::Large];

    pub fn of_area(area: f64) -> ScaleBucket {
        if area < SMALL_AREA_MAX {
            ScaleBucket::Small
        } else if area < MEDIUM_AREA_MAX {
            ScaleBucket::Medium
        } else {
            ScaleBucket::Large
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            ScaleBucket::Small => "small",
            ScaleBucket::Medium => "medium",
            ScaleBucket::Large => "large",
        }
    }
}

/// Positives-per-ground-truth statistics for one scale bucket.
#[derive(Debug, Clone, PartialEq)]
pub struct BucketDistribution {
    pub bucket: ScaleBucket,
    /// Ground truths that fell in this bucket.
    pub gt_count: usize,
    /// Mean positives per ground truth; 0 for an empty bucket.
    pub mean_positives: f64,
    /// `(positives_count, number of ground truths with that count)`,
    /// ascending by count. Empty when the bucket has no ground truths.
    pub histogram: Vec<(usize, usize)>,
}

impl BucketDistribution {
    /// Empirical density: `(positives_count, fraction of bucket gts)`.
    pub fn density(&self) -> Vec<(usize, f64)> {
        let n = self.gt_count.max(1) as f64;
        self.histogram.iter().map(|&(c, k)| (c, k as f64 / n)).collect()
    }

    /// Empirical CDF sampled at each observed count.
    pub fn cdf(&self) -> Vec<(usize, f64)> {
        let n = self.gt_count.max(1) as f64;
        let mut acc = 0usize;
        self.histogram
            .iter()
            .map(|&(c, k)| {
                acc += k;
                (c, acc as f64 / n)
            })
            .collect()
    }
}

/// Distribution of positives per ground truth, split by scale bucket.
#[derive(Debug, Clone, PartialEq)]
pub struct DistributionReport {
    /// One entry per bucket, in `ScaleBucket::ALL` order. Buckets with no
    /// ground truths are present with `gt_count` 0 and empty curves.
    pub buckets: Vec<BucketDistribution>,
}

impl DistributionReport {
    pub fn bucket(&self, b: ScaleBucket) -> &BucketDistribution {
        self.buckets.iter().find(|d| d.bucket == b).expect("all buckets present")
    }

    /// Aggregate `(gt area, positives count)` observations into per-bucket
    /// histograms. Order-independent, so concurrent producers may feed it.
    pub fn from_counts<I: IntoIterator<Item = (f64, usize)>>(counts: I) -> Self {
        let mut hists: [BTreeMap<usize, usize>; 3] = Default::default();
        let mut totals = [0usize; 3];
        let mut sums = [0usize; 3];
        for (area, positives) in counts {
            let idx = match ScaleBucket::of_area(area) {
                ScaleBucket::Small => 0,
                ScaleBucket::Medium => 1,
                ScaleBucket::Large => 2,
            };
            *hists[idx].entry(positives).or_insert(0) += 1;
            totals[idx] += 1;
            sums[idx] += positives;
        }
        let buckets = ScaleBucket::ALL
            .iter()
            .enumerate()
            .map(|(idx, &bucket)| BucketDistribution {
                bucket,
                gt_count: totals[idx],
                mean_positives: if totals[idx] == 0 {
                    0.0
                } else {
                    sums[idx] as f64 / totals[idx] as f64
                },
                histogram: hists[idx].iter().map(|(&c, &k)| (c, k)).collect(),
            })
            .collect();
        DistributionReport { buckets }
    }
}

/// Per-image helper for [`distribution_report`]: returns `(area, positives)`
/// for every ground truth in the image.
pub fn image_positive_counts(
    gts: &[BBox],
    image_size: (u32, u32),
    anchor_cfg: &AnchorConfig,
    assigner_cfg: &AssignerConfig,
) -> Result<Vec<(f64, usize)>> {
    let grids = generate_anchors(anchor_cfg, image_size.0, image_size.1);
    let anchors = crate::anchors::flatten(&grids);
    let result = assign(&anchors, gts, assigner_cfg)?;
    Ok(gts
        .iter()
        .zip(&result.positives_per_gt)
        .map(|(gt, &count)| (gt.area(), count))
        .collect())
}

/// Run assignment over a dataset of `(ground truths, image size)` pairs and
/// report the per-bucket distribution of positives per ground truth.
pub fn distribution_report(
    dataset: &[(Vec<BBox>, (u32, u32))],
    anchor_cfg: &AnchorConfig,
    assigner_cfg: &AssignerConfig,
) -> Result<DistributionReport> {
    if dataset.is_empty() {
        return Err(Error::EmptyInput("distribution_report needs a non-empty dataset"));
    }
    anchor_cfg.validate()?;
    let mut counts = Vec::new();
    for (gts, size) in dataset {
        counts.extend(image_positive_counts(gts, *size, anchor_cfg, assigner_cfg)?);
    }
    Ok(DistributionReport::from_counts(counts))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn b(x1: f64, y1: f64, x2: f64, y2: f64) -> BBox {
        BBox::new(x1, y1, x2, y2)
    }

    #[test]
    fn perfect_overlap_is_positive() {
        let r = assign(&[b(0.0, 0.0, 10.0, 10.0)], &[b(0.0, 0.0, 10.0, 10.0)], &AssignerConfig::default())
            .unwrap();
        assert_eq!(r.labels, vec![AnchorLabel::Positive(0)]);
        assert_eq!(r.max_ious, vec![1.0]);
        assert_eq!(r.positives_per_gt, vec![1]);
    }

    #[test]
    fn disjoint_is_negative_without_forcing() {
        let cfg = AssignerConfig { match_low_quality: false, ..Default::default() };
        let r = assign(&[b(0.0, 0.0, 10.0, 10.0)], &[b(20.0, 20.0, 30.0, 30.0)], &cfg).unwrap();
        assert_eq!(r.labels, vec![AnchorLabel::Negative]);
        assert_eq!(r.positives_per_gt, vec![0]);
    }

    #[test]
    fn half_overlap_meets_threshold() {
        // intersection 50, union 100 -> IoU 0.5 >= 0.35
        let r = assign(&[b(0.0, 0.0, 10.0, 10.0)], &[b(0.0, 0.0, 10.0, 5.0)], &AssignerConfig::default())
            .unwrap();
        assert_eq!(r.labels, vec![AnchorLabel::Positive(0)]);
        assert!((r.max_ious[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn empty_gts_all_negative() {
        let r = assign(&[b(0.0, 0.0, 1.0, 1.0); 3], &[], &AssignerConfig::default()).unwrap();
        assert_eq!(r.labels.len(), 3);
        assert!(r.labels.iter().all(|l| *l == AnchorLabel::Negative));
        assert!(r.positives_per_gt.is_empty());
    }

    #[test]
    fn empty_anchors_empty_result() {
        let r = assign(&[], &[b(0.0, 0.0, 1.0, 1.0)], &AssignerConfig::default()).unwrap();
        assert!(r.labels.is_empty());
        assert_eq!(r.positives_per_gt, vec![0]);
    }

    #[test]
    fn low_quality_forcing_guarantees_coverage() {
        // Anchor overlaps gt with IoU 0.25 < 0.35; forcing still claims it.
        let anchors = [b(0.0, 0.0, 10.0, 10.0)];
        let gts = [b(0.0, 0.0, 10.0, 2.5)];
        let on = assign(&anchors, &gts, &AssignerConfig::default()).unwrap();
        assert_eq!(on.labels, vec![AnchorLabel::Positive(0)]);
        let off = assign(
            &anchors,
            &gts,
            &AssignerConfig { match_low_quality: false, ..Default::default() },
        )
        .unwrap();
        assert_eq!(off.labels, vec![AnchorLabel::Negative]);
    }

    #[test]
    fn argmax_tie_breaks_to_lowest_gt_index() {
        let anchors = [b(0.0, 0.0, 10.0, 10.0)];
        let gt = b(0.0, 0.0, 10.0, 5.0);
        let r = assign(&anchors, &[gt, gt], &AssignerConfig::default()).unwrap();
        assert_eq!(r.labels, vec![AnchorLabel::Positive(0)]);
    }

    #[test]
    fn threshold_monotonicity() {
        let anchors = [
            b(0.0, 0.0, 10.0, 10.0),
            b(2.0, 2.0, 12.0, 12.0),
            b(30.0, 30.0, 40.0, 40.0),
        ];
        let gts = [b(1.0, 1.0, 11.0, 11.0)];
        let lo = AssignerConfig { pos_iou_thr: 0.3, neg_iou_thr: 0.3, match_low_quality: false };
        let hi = AssignerConfig { pos_iou_thr: 0.8, neg_iou_thr: 0.8, match_low_quality: false };
        let rl = assign(&anchors, &gts, &lo).unwrap();
        let rh = assign(&anchors, &gts, &hi).unwrap();
        for (a, b) in rl.labels.iter().zip(&rh.labels) {
            if b.is_positive() {
                assert!(a.is_positive(), "raising the threshold must never add positives");
            }
        }
    }

    #[test]
    fn scale_buckets_partition() {
        assert_eq!(ScaleBucket::of_area(100.0), ScaleBucket::Small);
        assert_eq!(ScaleBucket::of_area(1023.999), ScaleBucket::Small);
        assert_eq!(ScaleBucket::of_area(1024.0), ScaleBucket::Medium);
        assert_eq!(ScaleBucket::of_area(9215.999), ScaleBucket::Medium);
        assert_eq!(ScaleBucket::of_area(9216.0), ScaleBucket::Large);
    }

    #[test]
    fn report_single_gt_is_a_step() {
        // One 20x20 gt on a tiny image with a single matching anchor size.
        let cfg = AnchorConfig {
            strides: vec![20],
            base_scale: 1.0,
            octave_scales: 1,
            octave_step: 1.0,
            aspect_ratios: vec![1.0],
        };
        let dataset = vec![(vec![b(0.0, 0.0, 20.0, 20.0)], (20u32, 20u32))];
        let rep = distribution_report(&dataset, &cfg, &AssignerConfig::default()).unwrap();
        let small = rep.bucket(ScaleBucket::Small);
        assert_eq!(small.gt_count, 1);
        assert_eq!(small.histogram, vec![(1, 1)]);
        assert_eq!(small.cdf(), vec![(1, 1.0)]);
        assert_eq!(rep.bucket(ScaleBucket::Medium).gt_count, 0);
        assert!(rep.bucket(ScaleBucket::Medium).histogram.is_empty());
    }

    #[test]
    fn report_all_same_size_fills_one_bucket() {
        let gts = vec![b(0.0, 0.0, 40.0, 40.0), b(60.0, 60.0, 100.0, 100.0)];
        let dataset = vec![(gts, (128u32, 128u32))];
        let rep =
            distribution_report(&dataset, &AnchorConfig::default(), &AssignerConfig::default()).unwrap();
        let medium = rep.bucket(ScaleBucket::Medium);
        assert_eq!(medium.gt_count, 2);
        let mass: f64 = medium.density().iter().map(|&(_, f)| f).sum();
        assert!((mass - 1.0).abs() < 1e-12);
        assert_eq!(rep.bucket(ScaleBucket::Small).gt_count, 0);
        assert_eq!(rep.bucket(ScaleBucket::Large).gt_count, 0);
    }

    #[test]
    fn empty_dataset_errors() {
        assert!(distribution_report(&[], &AnchorConfig::default(), &AssignerConfig::default()).is_err());
    }
}
