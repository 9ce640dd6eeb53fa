//! Axis-aligned rectangle arithmetic in pixel coordinates.
//!
//! Every geometric quantity in the pipeline (ground truth, proposals, chips,
//! anchors) is a [`BBox`]: top-left corner plus width and height, origin at
//! the top-left of the image, y pointing down.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Clipped boxes narrower or shorter than this are dropped.
pub const MIN_CROP_SIDE: f64 = 1.0;

/// Axis-aligned box `(x, y, w, h)` with finite coordinates and positive extent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct BBox {
    x: f64,
    y: f64,
    w: f64,
    h: f64,
}

impl BBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Result<Self> {
        if !(x.is_finite() && y.is_finite() && w.is_finite() && h.is_finite()) {
            return Err(Error::InvalidBox(format!("({x}, {y}, {w}, {h}) is not finite")));
        }
        if w <= 0.0 || h <= 0.0 {
            return Err(Error::InvalidBox(format!(
                "({x}, {y}, {w}, {h}) has non-positive extent"
            )));
        }
        Ok(BBox { x, y, w, h })
    }

    /// Box spanning `[x1, x2] x [y1, y2]`.
    pub fn from_corners(x1: f64, y1: f64, x2: f64, y2: f64) -> Result<Self> {
        BBox::new(x1, y1, x2 - x1, y2 - y1)
    }

    /// Square `side x side` box at `(x, y)`; used for chips.
    pub fn square(x: f64, y: f64, side: f64) -> Result<Self> {
        BBox::new(x, y, side, side)
    }

    #[inline]
    pub fn x(&self) -> f64 {
        self.x
    }

    #[inline]
    pub fn y(&self) -> f64 {
        self.y
    }

    #[inline]
    pub fn w(&self) -> f64 {
        self.w
    }

    #[inline]
    pub fn h(&self) -> f64 {
        self.h
    }

    #[inline]
    pub fn right(&self) -> f64 {
        self.x + self.w
    }

    #[inline]
    pub fn bottom(&self) -> f64 {
        self.y + self.h
    }

    #[inline]
    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    #[inline]
    pub fn center(&self) -> (f64, f64) {
        (self.x + 0.5 * self.w, self.y + 0.5 * self.h)
    }

    /// Boundary-inclusive point containment.
    #[inline]
    pub fn contains_point(&self, px: f64, py: f64) -> bool {
        self.x <= px && px <= self.right() && self.y <= py && py <= self.bottom()
    }

    pub fn translate(&self, dx: f64, dy: f64) -> BBox {
        BBox {
            x: self.x + dx,
            y: self.y + dy,
            ..*self
        }
    }

    /// Snap every field to the 1e-6 lattice used by manifests.
    pub fn quantized(&self) -> BBox {
        BBox {
            x: quantize(self.x),
            y: quantize(self.y),
            w: quantize(self.w),
            h: quantize(self.h),
        }
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.x, self.y, self.w, self.h]
    }
}

impl TryFrom<[f64; 4]> for BBox {
    type Error = Error;

    fn try_from(v: [f64; 4]) -> Result<Self> {
        BBox::new(v[0], v[1], v[2], v[3])
    }
}

impl From<BBox> for [f64; 4] {
    fn from(b: BBox) -> Self {
        b.to_array()
    }
}

/// Round to six decimal places; normalises `-0.0` to `0.0`.
pub fn quantize(v: f64) -> f64 {
    (v * 1e6).round() / 1e6 + 0.0
}

/// Area of `a ∩ b`, zero when disjoint or merely touching.
pub fn intersection_area(a: &BBox, b: &BBox) -> f64 {
    let iw = a.right().min(b.right()) - a.x.max(b.x);
    let ih = a.bottom().min(b.bottom()) - a.y.max(b.y);
    if iw <= 0.0 || ih <= 0.0 {
        0.0
    } else {
        iw * ih
    }
}

/// Intersection over union, in `[0, 1]`.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let inter = intersection_area(a, b);
    if inter == 0.0 {
        return 0.0;
    }
    let union = a.area() + b.area() - inter;
    (inter / union).min(1.0)
}

/// True iff `inner` lies inside `outer`, edges included.
#[inline]
pub fn encloses(outer: &BBox, inner: &BBox) -> bool {
    outer.x <= inner.x
        && outer.y <= inner.y
        && inner.right() <= outer.right()
        && inner.bottom() <= outer.bottom()
}

/// Intersection of `b` with `frame`, or `None` when either side of the
/// intersection is shorter than [`MIN_CROP_SIDE`].
pub fn clip(b: &BBox, frame: &BBox) -> Option<BBox> {
    let x1 = b.x.max(frame.x);
    let y1 = b.y.max(frame.y);
    let x2 = b.right().min(frame.right());
    let y2 = b.bottom().min(frame.bottom());
    if x2 - x1 < MIN_CROP_SIDE || y2 - y1 < MIN_CROP_SIDE {
        return None;
    }
    Some(BBox {
        x: x1,
        y: y1,
        w: inner_extent(x1, x2),
        h: inner_extent(y1, y2),
    })
}

/// `hi - lo`, shrunk by ulps until `lo + extent <= hi` holds in floating point.
fn inner_extent(lo: f64, hi: f64) -> f64 {
    let mut e = hi - lo;
    while lo + e > hi {
        e = e.next_down();
    }
    e
}

/// Multiply every field by `factor` (must be positive and finite).
pub fn scale_box(b: &BBox, factor: f64) -> BBox {
    debug_assert!(factor > 0.0 && factor.is_finite());
    BBox {
        x: b.x * factor,
        y: b.y * factor,
        w: b.w * factor,
        h: b.h * factor,
    }
}

/// Mirror `b` horizontally inside an image of width `image_width`.
pub fn flip_box(b: &BBox, image_width: f64) -> BBox {
    BBox {
        x: image_width - (b.x + b.w),
        ..*b
    }
}
