//! Scale configuration, per-scale canvases and the chip grid.
//!
//! Each pyramid level resizes the image (content anchored top-left), pads
//! right and bottom until both sides reach the chip size `K`, and lays a
//! lattice of `K x K` chips with stride `d` over the padded canvas. The last
//! lattice position on each axis is clamped flush with the canvas edge so the
//! grid always covers the whole canvas.
//!
//! Area ranges are side-length bounds judged against box area in *original*
//! image coordinates, not in the resized canvas.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::BBox;

/// How an image is resized for one pyramid level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResizeRule {
    /// Resize so the longer side equals the target (`512/ms`).
    FitLongSide(f64),
    /// Fixed multiplicative factor.
    Factor(f64),
}

impl ResizeRule {
    pub fn factor_for(&self, image_w: u32, image_h: u32) -> f64 {
        match *self {
            ResizeRule::FitLongSide(target) => target / f64::from(image_w.max(image_h)),
            ResizeRule::Factor(s) => s,
        }
    }
}

/// Valid side-length interval `[r_min, r_max)`; a box is valid when
/// `r_min² <= w*h < r_max²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AreaRange {
    pub r_min: f64,
    /// `None` means unbounded.
    pub r_max: Option<f64>,
}

impl AreaRange {
    pub fn new(r_min: f64, r_max: Option<f64>) -> Result<Self> {
        let range = AreaRange { r_min, r_max };
        range.validate()?;
        Ok(range)
    }

    pub fn unbounded_above(r_min: f64) -> Self {
        AreaRange { r_min, r_max: None }
    }

    fn validate(&self) -> Result<()> {
        if !(self.r_min.is_finite() && self.r_min >= 0.0) {
            return Err(Error::InvalidConfig(format!("r_min {} must be >= 0", self.r_min)));
        }
        if let Some(r_max) = self.r_max {
            #[allow(clippy::neg_cmp_op_on_partial_ord)] // also rejects NaN
            if !(r_max > self.r_min) {
                return Err(Error::InvalidConfig(format!(
                    "r_max {r_max} must exceed r_min {}",
                    self.r_min
                )));
            }
        }
        Ok(())
    }

    #[inline]
    pub fn contains_area(&self, area: f64) -> bool {
        area >= self.r_min * self.r_min && self.r_max.is_none_or(|r| area < r * r)
    }

    #[inline]
    pub fn contains(&self, b: &BBox) -> bool {
        self.contains_area(b.area())
    }

    fn upper(&self) -> f64 {
        self.r_max.unwrap_or(f64::INFINITY)
    }
}

/// One pyramid level. `index` is 1-based and follows configuration order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleSpec {
    pub index: u32,
    pub rule: ResizeRule,
    pub chip_size: u32,
    pub stride: u32,
    pub range: AreaRange,
}

/// On-disk form of a scale; the index comes from list position.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScaleEntry {
    pub rule: ResizeRule,
    pub chip_size: u32,
    pub stride: u32,
    pub r_min: f64,
    pub r_max: Option<f64>,
}

impl ScaleSpec {
    pub fn validate(&self) -> Result<()> {
        if self.chip_size == 0 || self.stride == 0 {
            return Err(Error::InvalidConfig(format!(
                "scale {}: chip size and stride must be positive",
                self.index
            )));
        }
        if self.stride > self.chip_size {
            return Err(Error::InvalidConfig(format!(
                "scale {}: stride {} exceeds chip size {}",
                self.index, self.stride, self.chip_size
            )));
        }
        let target = match self.rule {
            ResizeRule::FitLongSide(t) | ResizeRule::Factor(t) => t,
        };
        if !(target.is_finite() && target > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "scale {}: resize parameter {target} must be positive",
                self.index
            )));
        }
        self.range.validate()
    }

    fn entry(&self) -> ScaleEntry {
        ScaleEntry {
            rule: self.rule,
            chip_size: self.chip_size,
            stride: self.stride,
            r_min: self.range.r_min,
            r_max: self.range.r_max,
        }
    }
}

/// An ordered, validated list of scales.
#[derive(Debug, Clone, PartialEq)]
pub struct Pyramid {
    scales: Vec<ScaleSpec>,
}

impl Pyramid {
    pub fn from_entries(entries: &[ScaleEntry]) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::InvalidConfig("pyramid has no scales".into()));
        }
        let scales = entries
            .iter()
            .enumerate()
            .map(|(i, e)| {
                let spec = ScaleSpec {
                    index: i as u32 + 1,
                    rule: e.rule,
                    chip_size: e.chip_size,
                    stride: e.stride,
                    range: AreaRange {
                        r_min: e.r_min,
                        r_max: e.r_max,
                    },
                };
                spec.validate().map(|_| spec)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Pyramid { scales })
    }

    /// Three scales `(512/ms, 1.667, 3)`, 512-pixel chips, stride 32.
    ///
    /// The coarsest level handles large objects and the 3x level small ones:
    /// `FitLongSide(512)` pairs with `[120, inf)`, `1.667` with `[32, 150)`
    /// and `3` with `[0, 80)`.
    pub fn three_scale() -> Self {
        Pyramid::from_entries(&[
            entry(ResizeRule::FitLongSide(512.0), 120.0, None),
            entry(ResizeRule::Factor(1.667), 32.0, Some(150.0)),
            entry(ResizeRule::Factor(3.0), 0.0, Some(80.0)),
        ])
        .expect("built-in pyramid is valid")
    }

    /// Two scales `(512/ms, 1)` for high-resolution datasets with mostly
    /// large objects.
    pub fn two_scale() -> Self {
        Pyramid::from_entries(&[
            entry(ResizeRule::FitLongSide(512.0), 120.0, None),
            entry(ResizeRule::Factor(1.0), 0.0, Some(150.0)),
        ])
        .expect("built-in pyramid is valid")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::MalformedInput { location, message } => Error::MalformedInput {
                location: format!("{}{}", path.display(), location),
                message,
            },
            other => other,
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let entries: Vec<ScaleEntry> = serde_path_to_error::deserialize(de)
            .map_err(|e| Error::malformed(format!(" at {}", e.path()), e.inner()))?;
        Pyramid::from_entries(&entries)
    }

    pub fn entries(&self) -> Vec<ScaleEntry> {
        self.scales.iter().map(ScaleSpec::entry).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.entries()).expect("entries serialize")
    }

    pub fn scales(&self) -> &[ScaleSpec] {
        &self.scales
    }

    pub fn scale(&self, index: u32) -> Option<&ScaleSpec> {
        self.scales.iter().find(|s| s.index == index)
    }

    pub fn len(&self) -> usize {
        self.scales.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scales.is_empty()
    }

    fn ranges_sorted(&self) -> Vec<AreaRange> {
        let mut ranges: Vec<_> = self.scales.iter().map(|s| s.range).collect();
        ranges.sort_by(|a, b| a.r_min.total_cmp(&b.r_min));
        ranges
    }

    /// True when consecutive ranges (ordered by `r_min`) strictly overlap.
    pub fn ranges_overlap(&self) -> bool {
        self.ranges_sorted()
            .windows(2)
            .all(|w| w[0].upper() > w[1].r_min)
    }

    /// True when every positive area is valid at some scale.
    pub fn ranges_cover_all_areas(&self) -> bool {
        let ranges = self.ranges_sorted();
        let mut reach = 0.0f64;
        if ranges.first().is_none_or(|r| r.r_min > 0.0) {
            return false;
        }
        for r in &ranges {
            if r.r_min > reach {
                return false;
            }
            reach = reach.max(r.upper());
        }
        reach.is_infinite()
    }
}

fn entry(rule: ResizeRule, r_min: f64, r_max: Option<f64>) -> ScaleEntry {
    ScaleEntry {
        rule,
        chip_size: 512,
        stride: 32,
        r_min,
        r_max,
    }
}

/// A resized, padded image at one scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Canvas {
    pub scale_index: u32,
    pub factor: f64,
    pub chip_size: u32,
    pub content_w: u32,
    pub content_h: u32,
    pub grid_w: u32,
    pub grid_h: u32,
    pub pad_right: u32,
    pub pad_bottom: u32,
}

impl Canvas {
    /// The resized image content, `[0, content_w] x [0, content_h]`.
    pub fn content_frame(&self) -> BBox {
        BBox::new(0.0, 0.0, f64::from(self.content_w), f64::from(self.content_h))
            .expect("content dims are >= 1")
    }

    pub fn grid_frame(&self) -> BBox {
        BBox::new(0.0, 0.0, f64::from(self.grid_w), f64::from(self.grid_h))
            .expect("grid dims are >= K")
    }
}

fn round_half_up(v: f64) -> u32 {
    (v + 0.5).floor().max(1.0) as u32
}

pub fn resolve_canvas(image_w: u32, image_h: u32, spec: &ScaleSpec) -> Result<Canvas> {
    if image_w == 0 || image_h == 0 {
        return Err(Error::InvalidConfig(format!(
            "image dimensions {image_w}x{image_h} must be positive"
        )));
    }
    let factor = spec.rule.factor_for(image_w, image_h);
    let content_w = round_half_up(f64::from(image_w) * factor);
    let content_h = round_half_up(f64::from(image_h) * factor);
    let grid_w = content_w.max(spec.chip_size);
    let grid_h = content_h.max(spec.chip_size);
    Ok(Canvas {
        scale_index: spec.index,
        factor,
        chip_size: spec.chip_size,
        content_w,
        content_h,
        grid_w,
        grid_h,
        pad_right: grid_w - content_w,
        pad_bottom: grid_h - content_h,
    })
}

/// Chip origins along one axis: multiples of `stride` that fit, plus the
/// flush position `dim - chip` when the lattice misses it.
pub fn axis_positions(dim: u32, chip: u32, stride: u32) -> Vec<u32> {
    debug_assert!(dim >= chip && stride > 0);
    let last = dim - chip;
    let mut out: Vec<u32> = (0..=last).step_by(stride as usize).collect();
    if out.last() != Some(&last) {
        out.push(last);
    }
    out
}

/// Row-major grid of `K x K` chips in canvas coordinates.
pub fn grid_chips(canvas: &Canvas, chip_size: u32, stride: u32) -> Vec<BBox> {
    let xs = axis_positions(canvas.grid_w, chip_size, stride);
    let ys = axis_positions(canvas.grid_h, chip_size, stride);
    let k = f64::from(chip_size);
    let mut out = Vec::with_capacity(xs.len() * ys.len());
    for &y in &ys {
        for &x in &xs {
            out.push(BBox::square(f64::from(x), f64::from(y), k).expect("chip size > 0"));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn spec(rule: ResizeRule) -> ScaleSpec {
        ScaleSpec {
            index: 1,
            rule,
            chip_size: 512,
            stride: 32,
            range: AreaRange::unbounded_above(0.0),
        }
    }

    #[test]
    fn canvas_fit_long_side_pads_short_side() {
        let c = resolve_canvas(1333, 800, &spec(ResizeRule::FitLongSide(512.0))).unwrap();
        assert!((c.factor - 512.0 / 1333.0).abs() < 1e-12);
        assert_eq!((c.content_w, c.content_h), (512, 307));
        assert_eq!((c.grid_w, c.grid_h), (512, 512));
        assert_eq!((c.pad_right, c.pad_bottom), (0, 205));
    }

    #[test]
    fn canvas_fixed_factor_and_identity() {
        let c = resolve_canvas(640, 480, &spec(ResizeRule::Factor(3.0))).unwrap();
        assert_eq!((c.content_w, c.content_h, c.grid_w, c.grid_h), (1920, 1440, 1920, 1440));
        let c = resolve_canvas(512, 512, &spec(ResizeRule::FitLongSide(512.0))).unwrap();
        assert_eq!(c.factor, 1.0);
        assert_eq!((c.content_w, c.grid_w, c.pad_right), (512, 512, 0));
    }

    #[test]
    fn canvas_rejects_empty_image() {
        assert!(resolve_canvas(0, 10, &spec(ResizeRule::Factor(1.0))).is_err());
    }

    #[test]
    fn rounding_is_half_up() {
        // 3 * 0.5 = 1.5 -> 2
        let c = resolve_canvas(3, 5, &spec(ResizeRule::Factor(0.5))).unwrap();
        assert_eq!((c.content_w, c.content_h), (2, 3));
    }

    fn canvas(w: u32, h: u32) -> Canvas {
        resolve_canvas(w, h, &spec(ResizeRule::Factor(1.0))).unwrap()
    }

    /// Oracle: walk `k*d` while the chip fits, then append the flush slot.
    fn enumerate_positions(dim: u32, k: u32, d: u32) -> Vec<u32> {
        let mut v = Vec::new();
        let mut p = 0;
        while p + k <= dim {
            v.push(p);
            p += d;
        }
        if *v.last().unwrap() != dim - k {
            v.push(dim - k);
        }
        v
    }

    #[test]
    fn grid_examples() {
        assert_eq!(grid_chips(&canvas(512, 512), 512, 32), vec![BBox::square(0., 0., 512.).unwrap()]);
        assert_eq!(axis_positions(600, 512, 32), vec![0, 32, 64, 88]);
        assert_eq!(grid_chips(&canvas(600, 512), 512, 32).len(), 4);
        // per-axis: floor((dim-K)/d) + 1 (+1 if remainder)
        let per_axis = |dim: u32| (dim - 512) / 32 + 1 + u32::from(!(dim - 512).is_multiple_of(32));
        assert_eq!(per_axis(1920) * per_axis(1440), 1350);
        assert_eq!(
            enumerate_positions(1920, 512, 32).len() * enumerate_positions(1440, 512, 32).len(),
            1350
        );
        assert_eq!(grid_chips(&canvas(1920, 1440), 512, 32).len(), 1350);
    }

    #[test]
    fn default_pyramid_properties() {
        let p = Pyramid::three_scale();
        assert_eq!(p.len(), 3);
        assert!(p.ranges_overlap());
        assert!(p.ranges_cover_all_areas());
        assert!(Pyramid::two_scale().ranges_cover_all_areas());
    }

    #[test]
    fn area_range_membership() {
        let small = AreaRange::new(0.0, Some(80.0)).unwrap();
        let mid = AreaRange::new(32.0, Some(150.0)).unwrap();
        let large = AreaRange::unbounded_above(120.0);
        assert!(small.contains_area(4096.0));
        assert!(!small.contains_area(6400.0));
        assert!(mid.contains_area(16900.0) && large.contains_area(16900.0));
        assert!(AreaRange::new(10.0, Some(5.0)).is_err());
        assert!(AreaRange::new(-1.0, None).is_err());
    }

    #[test]
    fn config_validation() {
        let bad = [ScaleEntry {
            rule: ResizeRule::Factor(1.0),
            chip_size: 32,
            stride: 64,
            r_min: 0.0,
            r_max: None,
        }];
        assert!(matches!(Pyramid::from_entries(&bad), Err(Error::InvalidConfig(_))));
        assert!(Pyramid::from_entries(&[]).is_err());
        let err = Pyramid::from_json(r#"[{"rule": {"factor": 2}, "chip_size": "x"}]"#).unwrap_err();
        match err {
            Error::MalformedInput { location, .. } => assert!(location.contains("chip_size")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn json_round_trip() {
        let p = Pyramid::three_scale();
        assert_eq!(Pyramid::from_json(&p.to_json()).unwrap(), p);
    }

    proptest! {
        #[test]
        fn grid_covers_canvas_and_stays_inside(
            w in 64u32..900, h in 64u32..900, k in 16u32..64, d_frac in 0.05..1.0f64,
            px in 0.0..1.0f64, py in 0.0..1.0f64,
        ) {
            let d = ((f64::from(k) * d_frac) as u32).max(1);
            let spec = ScaleSpec { index: 1, rule: ResizeRule::Factor(1.0), chip_size: k, stride: d,
                                   range: AreaRange::unbounded_above(0.0) };
            let c = resolve_canvas(w, h, &spec).unwrap();
            let chips = grid_chips(&c, k, d);
            let frame = c.grid_frame();
            for chip in &chips {
                prop_assert!(crate::geometry::encloses(&frame, chip));
            }
            let (x, y) = (px * f64::from(c.grid_w), py * f64::from(c.grid_h));
            prop_assert!(chips.iter().any(|b| b.contains_point(x, y)));

            let xs = axis_positions(c.grid_w, k, d);
            prop_assert_eq!(&xs, &enumerate_positions(c.grid_w, k, d));
            for &p in &xs[..xs.len() - 1] {
                prop_assert_eq!(p % d, 0);
            }
        }
    }
}
