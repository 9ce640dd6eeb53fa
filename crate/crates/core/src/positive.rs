//! Positive chip mining.
//!
//! Per scale, ground-truth boxes whose original-coordinate area falls in the
//! scale's range drive a greedy cover over the chip grid: chips are picked
//! until every valid box is completely enclosed by at least one of them.
//! Each selected chip then carries every ground-truth box it overlaps,
//! cropped to the chip, with a flag saying whether that box is valid at the
//! chip's scale.

use serde::{Deserialize, Serialize};

use crate::dataset::ImageInfo;
use crate::error::Result;
use crate::geometry::{clip, encloses, quantize, scale_box, BBox};
use crate::greedy::{self, GreedyStep};
use crate::pyramid::{grid_chips, resolve_canvas, AreaRange, Canvas, Pyramid, ScaleSpec};
use crate::record::{ChipKind, ChipRecord, GtEntry};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub id: u64,
    /// Original image coordinates.
    pub bbox: BBox,
    pub category: u32,
    /// Crowd regions never drive selection and are always flagged invalid.
    pub is_crowd: bool,
}

/// Ground truth that participates in training at `range`. Order preserved.
pub fn valid_gts<'a>(gts: &'a [GroundTruth], range: &AreaRange) -> Vec<&'a GroundTruth> {
    gts.iter()
        .filter(|g| !g.is_crowd && range.contains(&g.bbox))
        .collect()
}

/// The part of `g` visible on the resized canvas, or `None` when it shrinks
/// below a pixel there.
pub fn canvas_box(g: &BBox, canvas: &Canvas) -> Option<BBox> {
    clip(&scale_box(g, canvas.factor), &canvas.content_frame())
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PositiveCover {
    /// Selected candidate indices, in selection order.
    pub chips: Vec<usize>,
    pub steps: Vec<GreedyStep>,
    /// Ids of valid boxes no candidate encloses.
    pub uncoverable: Vec<u64>,
}

/// Greedy cover of `valid` (original coordinates) by `candidates`
/// (canvas coordinates).
pub fn greedy_cover(valid: &[&GroundTruth], canvas: &Canvas, candidates: &[BBox]) -> PositiveCover {
    let mut ids = Vec::with_capacity(valid.len());
    let mut covered_by = Vec::with_capacity(valid.len());
    let mut sub_pixel = Vec::new();
    for g in valid {
        match canvas_box(&g.bbox, canvas) {
            Some(b) => {
                ids.push(g.id);
                covered_by.push(
                    candidates
                        .iter()
                        .enumerate()
                        .filter(|(_, c)| encloses(c, &b))
                        .map(|(i, _)| i)
                        .collect::<Vec<_>>(),
                );
            }
            None => sub_pixel.push(g.id),
        }
    }
    let out = greedy::select(&covered_by, candidates.len(), 1);
    let mut uncoverable: Vec<u64> = out.uncoverable.iter().map(|&e| ids[e]).collect();
    uncoverable.extend(sub_pixel);
    PositiveCover {
        chips: out.selected().collect(),
        steps: out.steps,
        uncoverable,
    }
}

/// Crop `b` (canvas coordinates) to `chip` and express it chip-locally on
/// the manifest's 1e-6 lattice, staying inside `[0, K]`.
pub(crate) fn crop_to_chip(b: &BBox, chip: &BBox) -> Option<BBox> {
    let c = clip(b, chip)?;
    let k = chip.w();
    let (x, w) = fit_axis(c.x() - chip.x(), c.w(), k);
    let (y, h) = fit_axis(c.y() - chip.y(), c.h(), k);
    BBox::new(x, y, w, h).ok()
}

fn fit_axis(origin: f64, len: f64, limit: f64) -> (f64, f64) {
    let o = quantize(origin.max(0.0));
    let mut l = quantize(len);
    while o + l > limit {
        l = quantize(l - 1e-6);
    }
    (o, l)
}

/// Every ground-truth box overlapping `chip`, cropped, chip-local.
pub fn attach_gts(chip: &BBox, all_gts: &[GroundTruth], canvas: &Canvas, range: &AreaRange) -> Vec<GtEntry> {
    all_gts
        .iter()
        .filter_map(|g| {
            let cropped = crop_to_chip(&scale_box(&g.bbox, canvas.factor), chip)?;
            Some(GtEntry {
                gt_id: g.id,
                category: g.category,
                cropped,
                valid: !g.is_crowd && range.contains(&g.bbox),
            })
        })
        .collect()
}

/// Build the manifest record for one chip.
pub fn make_record(
    image: &ImageInfo,
    spec: &ScaleSpec,
    canvas: &Canvas,
    chip: BBox,
    kind: ChipKind,
    all_gts: &[GroundTruth],
) -> ChipRecord {
    ChipRecord {
        image_id: image.id,
        scale_index: spec.index,
        image_size: (image.width, image.height),
        kind,
        flipped: image.flipped,
        rect_canvas: chip,
        rect_original: scale_box(&chip, 1.0 / canvas.factor).quantized(),
        gts: attach_gts(&chip, all_gts, canvas, &spec.range),
        residual_proposals: None,
        labels: None,
    }
}

/// Per-image coverage bookkeeping.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Coverage {
    /// `(scale, gt)` pairs that were range-valid.
    pub valid: usize,
    /// Of those, pairs enclosed by a selected chip of that scale.
    pub covered: usize,
    /// `(scale_index, gt_id)` pairs no chip could enclose.
    pub uncoverable: Vec<(u32, u64)>,
}

impl Coverage {
    pub fn merge(&mut self, other: &Coverage) {
        self.valid += other.valid;
        self.covered += other.covered;
        self.uncoverable.extend_from_slice(&other.uncoverable);
    }

    pub fn is_complete(&self) -> bool {
        self.valid == self.covered
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PositiveOutcome {
    pub records: Vec<ChipRecord>,
    pub coverage: Coverage,
}

/// Positive chips of one image across all scales, in `(scale, selection)`
/// order.
pub fn mine_positive(image: &ImageInfo, gts: &[GroundTruth], pyramid: &Pyramid) -> Result<PositiveOutcome> {
    let mut out = PositiveOutcome::default();
    if gts.is_empty() {
        return Ok(out);
    }
    for spec in pyramid.scales() {
        let canvas = resolve_canvas(image.width, image.height, spec)?;
        let valid = valid_gts(gts, &spec.range);
        if valid.is_empty() {
            continue;
        }
        let candidates = grid_chips(&canvas, spec.chip_size, spec.stride);
        let cover = greedy_cover(&valid, &canvas, &candidates);
        out.coverage.valid += valid.len();
        out.coverage.covered += valid.len() - cover.uncoverable.len();
        out.coverage
            .uncoverable
            .extend(cover.uncoverable.iter().map(|&id| (spec.index, id)));
        out.records.extend(cover.chips.iter().map(|&c| {
            make_record(image, spec, &canvas, candidates[c], ChipKind::Positive, gts)
        }));
    }
    Ok(out)
}
