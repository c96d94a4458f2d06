//! Exact box algebra: IoU, enclosing boxes, center distance, and the
//! distance-IoU loss with its analytic gradient.
//!
//! Everything here is a pure function of its inputs in 64-bit floating
//! point. The max/min clamps inside IoU are non-smooth; at exactly-equal
//! clamp arguments the derivative of the differentiated branch is used
//! (see [`diou_loss_grad`]), which makes the subgradient deterministic.

/// Axis-aligned rectangle in image coordinates.
///
/// Corner convention: `(x1, y1)` top-left, `(x2, y2)` bottom-right, with
/// `x2 >= x1` and `y2 >= y1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

impl BBox {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Self {
        debug_assert!(x2 >= x1 && y2 >= y1, "corner order violated: ({x1},{y1},{x2},{y2})");
        Self { x1, y1, x2, y2 }
    }

    pub fn width(&self) -> f64 {
        self.x2 - self.x1
    }

    pub fn height(&self) -> f64 {
        self.y2 - self.y1
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> (f64, f64) {
        ((self.x1 + self.x2) / 2.0, (self.y1 + self.y2) / 2.0)
    }

    /// Smallest axis-aligned box covering both `self` and `other`.
    pub fn enclose(&self, other: &BBox) -> BBox {
        BBox {
            x1: self.x1.min(other.x1),
            y1: self.y1.min(other.y1),
            x2: self.x2.max(other.x2),
            y2: self.y2.max(other.y2),
        }
    }

    /// Overlap area with `other`; 0 when disjoint.
    pub fn intersection_area(&self, other: &BBox) -> f64 {
        let w = (self.x2.min(other.x2) - self.x1.max(other.x1)).max(0.0);
        let h = (self.y2.min(other.y2) - self.y1.max(other.y1)).max(0.0);
        w * h
    }

    pub fn translate(&self, dx: f64, dy: f64) -> BBox {
        BBox {
            x1: self.x1 + dx,
            y1: self.y1 + dy,
            x2: self.x2 + dx,
            y2: self.y2 + dy,
        }
    }

    /// Uniform scale of all four coordinates about the origin.
    pub fn scale(&self, s: f64) -> BBox {
        BBox {
            x1: self.x1 * s,
            y1: self.y1 * s,
            x2: self.x2 * s,
            y2: self.y2 * s,
        }
    }

    /// Horizontal mirror about an image of width `w`:
    /// `(x1, y1, x2, y2) -> (w - x2, y1, w - x1, y2)`.
    ///
    /// Shared by the augmentation pipeline and the TTA coordinate maps so
    /// the two stay formula-identical.
    pub fn hflip(&self, w: f64) -> BBox {
        BBox {
            x1: w - self.x2,
            y1: self.y1,
            x2: w - self.x1,
            y2: self.y2,
        }
    }

    /// Clip to the rectangle `[0, w] x [0, h]`.
    pub fn clip(&self, w: f64, h: f64) -> BBox {
        BBox {
            x1: self.x1.clamp(0.0, w),
            y1: self.y1.clamp(0.0, h),
            x2: self.x2.clamp(0.0, w),
            y2: self.y2.clamp(0.0, h),
        }
    }
}

/// Intersection-over-union of two boxes, in `[0, 1]`.
///
/// Symmetric in its arguments; 0 when the boxes are disjoint. When both
/// boxes have zero area the union is empty and the result is defined as 0,
/// avoiding 0/0.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let inter = a.intersection_area(b);
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        return 0.0;
    }
    inter / union
}

/// Term-by-term decomposition of the distance-IoU loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiouBreakdown {
    /// IoU of the two boxes, in `[0, 1]`.
    pub iou: f64,
    /// Squared Euclidean distance between the box centers.
    pub center_dist_sq: f64,
    /// Squared diagonal of the smallest box enclosing both.
    pub enclose_diag_sq: f64,
    /// `1 - iou + center_dist_sq / enclose_diag_sq`, in `[0, 3)`.
    pub loss: f64,
}

/// Distance-IoU loss of a predicted box against a ground-truth box:
/// one minus IoU, plus the squared center distance normalized by the
/// squared diagonal of the enclosing box.
///
/// The penalty term stays informative even for disjoint boxes and, because
/// both numerator and denominator scale quadratically, the whole loss is
/// invariant under uniform scaling — the same center offset costs more for
/// small boxes than for large ones.
///
/// `gt` must have positive area; a degenerate (zero-area) `pred` is legal
/// and simply contributes zero IoU.
pub fn diou_loss(pred: &BBox, gt: &BBox) -> DiouBreakdown {
    assert!(gt.area() > 0.0, "ground-truth box must have positive area");
    let i = iou(pred, gt);
    let (pcx, pcy) = pred.center();
    let (gcx, gcy) = gt.center();
    let center_dist_sq = (pcx - gcx).powi(2) + (pcy - gcy).powi(2);
    let enc = pred.enclose(gt);
    let enclose_diag_sq = enc.width().powi(2) + enc.height().powi(2);
    DiouBreakdown {
        iou: i,
        center_dist_sq,
        enclose_diag_sq,
        loss: 1.0 - i + center_dist_sq / enclose_diag_sq,
    }
}

// Subgradient convention at clamp kinks: when the two arguments of a
// max/min are equal, the branch being differentiated is treated as active.
fn dmax(u: f64, v: f64) -> f64 {
    if u >= v {
        1.0
    } else {
        0.0
    }
}

fn dmin(u: f64, v: f64) -> f64 {
    if u <= v {
        1.0
    } else {
        0.0
    }
}

/// Gradient of [`diou_loss`] with respect to the four coordinates of
/// `pred`, as `[d/dx1, d/dy1, d/dx2, d/dy2]`.
///
/// Away from the measure-zero kinks of the intersection and enclosing-box
/// clamps this matches central finite differences to better than 1e-4
/// relative error; at a kink the one-sided subgradient given by the
/// tie-break rule above is returned.
pub fn diou_loss_grad(pred: &BBox, gt: &BBox) -> [f64; 4] {
    assert!(gt.area() > 0.0, "ground-truth box must have positive area");
    let (x1, y1, x2, y2) = (pred.x1, pred.y1, pred.x2, pred.y2);
    let (g1, h1, g2, h2) = (gt.x1, gt.y1, gt.x2, gt.y2);

    // Intersection extents before clamping to zero.
    let ix1 = x1.max(g1);
    let iy1 = y1.max(h1);
    let ix2 = x2.min(g2);
    let iy2 = y2.min(h2);
    let iw_raw = ix2 - ix1;
    let ih_raw = iy2 - iy1;
    let iw = iw_raw.max(0.0);
    let ih = ih_raw.max(0.0);
    let inter = iw * ih;

    // d(inter)/d(pred coord); the >= 0 test keeps the linear branch active
    // at an exactly-touching edge.
    let wx = if iw_raw >= 0.0 { 1.0 } else { 0.0 };
    let wy = if ih_raw >= 0.0 { 1.0 } else { 0.0 };
    let di = [
        -ih * dmax(x1, g1) * wx,
        -iw * dmax(y1, h1) * wy,
        ih * dmin(x2, g2) * wx,
        iw * dmin(y2, h2) * wy,
    ];

    let pw = x2 - x1;
    let ph = y2 - y1;
    let da = [-ph, -pw, ph, pw];

    let union = pw * ph + gt.area() - inter;
    let iou_val = inter / union;
    // d(IoU)/dp = (dI * U - I * dU) / U^2, with dU = dA - dI.
    let mut grad = [0.0f64; 4];
    for k in 0..4 {
        let du = da[k] - di[k];
        let diou = (di[k] * union - inter * du) / (union * union);
        grad[k] = -diou;
    }

    // Center-distance penalty.
    let (pcx, pcy) = pred.center();
    let (gcx, gcy) = gt.center();
    let rho_sq = (pcx - gcx).powi(2) + (pcy - gcy).powi(2);
    let drho = [pcx - gcx, pcy - gcy, pcx - gcx, pcy - gcy];

    let ew = x2.max(g2) - x1.min(g1);
    let eh = y2.max(h2) - y1.min(h1);
    let c_sq = ew * ew + eh * eh;
    let dc = [
        -2.0 * ew * dmin(x1, g1),
        -2.0 * eh * dmin(y1, h1),
        2.0 * ew * dmax(x2, g2),
        2.0 * eh * dmax(y2, h2),
    ];

    for k in 0..4 {
        grad[k] += (drho[k] * c_sq - rho_sq * dc[k]) / (c_sq * c_sq);
    }
    grad
}
