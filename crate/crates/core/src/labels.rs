//! Label and regression-target assignment inside a chip.
//!
//! Proposals are matched against every ground-truth box the chip carries,
//! valid or not, so the visible part of a cropped large object can still
//! yield small positive proposals. A proposal whose back-projected area is
//! outside the chip scale's range is ignored outright.
//!
//! Anchors are labelled from valid boxes only; invalid boxes then knock out
//! any anchor overlapping them enough, whatever its label was.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{encloses, iou, quantize, BBox};
use crate::pyramid::{resolve_canvas, ScaleSpec};
use crate::record::{fixed, ChipRecord, GtEntry};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelKind {
    Positive,
    Negative,
    Ignore,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProposalLabel {
    #[serde(rename = "proposal")]
    pub proposal_index: usize,
    pub label: LabelKind,
    /// Present iff `label` is positive.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<u32>,
    #[serde(default, rename = "gt", skip_serializing_if = "Option::is_none")]
    pub matched_gt_id: Option<u64>,
    /// `(tx, ty, tw, th)`; present iff `label` is positive.
    #[serde(
        default,
        rename = "target",
        skip_serializing_if = "Option::is_none",
        serialize_with = "fixed::opt_array4"
    )]
    pub regression_target: Option<[f64; 4]>,
}

impl ProposalLabel {
    fn plain(proposal_index: usize, label: LabelKind) -> Self {
        ProposalLabel {
            proposal_index,
            label,
            category: None,
            matched_gt_id: None,
            regression_target: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnchorLabel {
    pub anchor_index: usize,
    pub label: LabelKind,
}

/// Center/log-size box deltas from `proposal` to `gt`.
pub fn regression_targets(proposal: &BBox, gt: &BBox) -> [f64; 4] {
    let (px, py) = proposal.center();
    let (gx, gy) = gt.center();
    [
        (gx - px) / proposal.w(),
        (gy - py) / proposal.h(),
        (gt.w() / proposal.w()).ln(),
        (gt.h() / proposal.h()).ln(),
    ]
}

/// Inverse of [`regression_targets`].
pub fn apply_regression(proposal: &BBox, t: &[f64; 4]) -> Result<BBox> {
    let (px, py) = proposal.center();
    let cx = px + t[0] * proposal.w();
    let cy = py + t[1] * proposal.h();
    let w = proposal.w() * t[2].exp();
    let h = proposal.h() * t[3].exp();
    BBox::new(cx - 0.5 * w, cy - 0.5 * h, w, h)
}

/// Highest-IoU entry; ties go to the lowest gt id.
fn best_match<'a>(b: &BBox, gts: impl Iterator<Item = &'a GtEntry>) -> Option<(&'a GtEntry, f64)> {
    let mut best: Option<(&GtEntry, f64)> = None;
    for g in gts {
        let v = iou(b, &g.cropped);
        best = match best {
            Some((bg, bv)) if bv > v || (bv == v && bg.gt_id < g.gt_id) => Some((bg, bv)),
            _ => Some((g, v)),
        };
    }
    best
}

/// Label `proposals` (chip-local canvas coordinates) of `chip` cut at
/// `scale`. A proposal is positive when its best IoU strictly exceeds
/// `iou_pos`.
pub fn assign_proposal_labels(
    proposals: &[BBox],
    chip: &ChipRecord,
    scale: &ScaleSpec,
    iou_pos: f64,
) -> Result<Vec<ProposalLabel>> {
    if !(0.0..=1.0).contains(&iou_pos) {
        return Err(Error::InvalidConfig(format!("iou_pos {iou_pos} outside [0, 1]")));
    }
    let (w, h) = chip.image_size;
    let factor = resolve_canvas(w, h, scale)?.factor;
    let k = chip.chip_size();
    let frame = BBox::square(0.0, 0.0, k)?;

    proposals
        .iter()
        .enumerate()
        .map(|(i, p)| {
            if !encloses(&frame, p) {
                return Err(Error::ProposalOutsideChip { index: i });
            }
            let original_area = p.area() / (factor * factor);
            if !scale.range.contains_area(original_area) {
                return Ok(ProposalLabel::plain(i, LabelKind::Ignore));
            }
            match best_match(p, chip.gts.iter()) {
                Some((g, v)) if v > iou_pos => Ok(ProposalLabel {
                    proposal_index: i,
                    label: LabelKind::Positive,
                    category: Some(g.category),
                    matched_gt_id: Some(g.gt_id),
                    regression_target: Some(regression_targets(p, &g.cropped).map(quantize)),
                }),
                _ => Ok(ProposalLabel::plain(i, LabelKind::Negative)),
            }
        })
        .collect()
}

/// IoU thresholds for anchor labelling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnchorThresholds {
    pub iou_pos: f64,
    pub iou_neg: f64,
    pub iou_invalid: f64,
}

impl Default for AnchorThresholds {
    fn default() -> Self {
        AnchorThresholds {
            iou_pos: 0.7,
            iou_neg: 0.3,
            iou_invalid: 0.3,
        }
    }
}

impl AnchorThresholds {
    pub fn validate(&self) -> Result<()> {
        let AnchorThresholds {
            iou_pos,
            iou_neg,
            iou_invalid,
        } = *self;
        if !(0.0 <= iou_neg && iou_neg <= iou_pos && iou_pos <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "anchor thresholds need 0 <= iou_neg ({iou_neg}) <= iou_pos ({iou_pos}) <= 1"
            )));
        }
        // iou_invalid = 0 would ignore every anchor whenever an invalid box exists
        if !(iou_invalid > 0.0 && iou_invalid <= 1.0) {
            return Err(Error::InvalidConfig(format!("iou_invalid {iou_invalid} outside (0, 1]")));
        }
        Ok(())
    }
}

/// Anchors are in chip-local canvas coordinates.
pub fn assign_anchor_labels(anchors: &[BBox], chip: &ChipRecord, t: &AnchorThresholds) -> Result<Vec<AnchorLabel>> {
    t.validate()?;
    let valid: Vec<&GtEntry> = chip.gts.iter().filter(|g| g.valid).collect();
    let invalid: Vec<&GtEntry> = chip.gts.iter().filter(|g| !g.valid).collect();

    // overlaps[a][g] against valid boxes
    let overlaps: Vec<Vec<f64>> = anchors
        .iter()
        .map(|a| valid.iter().map(|g| iou(a, &g.cropped)).collect())
        .collect();

    let mut labels: Vec<LabelKind> = overlaps
        .iter()
        .map(|row| {
            let best = row.iter().copied().fold(0.0, f64::max);
            if best >= t.iou_pos {
                LabelKind::Positive
            } else if best < t.iou_neg {
                LabelKind::Negative
            } else {
                LabelKind::Ignore
            }
        })
        .collect();

    for g in 0..valid.len() {
        let matched = overlaps.iter().any(|row| row[g] >= t.iou_pos);
        if matched {
            continue;
        }
        let best = overlaps.iter().map(|row| row[g]).fold(0.0, f64::max);
        if best <= 0.0 {
            continue;
        }
        let mut holders = overlaps.iter().enumerate().filter(|(_, row)| row[g] == best);
        if let (Some((a, _)), None) = (holders.next(), holders.next()) {
            labels[a] = LabelKind::Positive;
        }
    }

    for (a, anchor) in anchors.iter().enumerate() {
        if invalid.iter().any(|g| iou(anchor, &g.cropped) >= t.iou_invalid) {
            labels[a] = LabelKind::Ignore;
        }
    }

    Ok(labels
        .into_iter()
        .enumerate()
        .map(|(anchor_index, label)| AnchorLabel { anchor_index, label })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pyramid::{AreaRange, ResizeRule};
    use crate::record::ChipKind;

    fn bb(x: f64, y: f64, w: f64, h: f64) -> BBox {
        BBox::new(x, y, w, h).unwrap()
    }

    fn entry(gt_id: u64, b: BBox, valid: bool) -> GtEntry {
        GtEntry {
            gt_id,
            category: gt_id as u32 + 100,
            cropped: b,
            valid,
        }
    }

    fn chip(gts: Vec<GtEntry>) -> ChipRecord {
        let r = BBox::square(0., 0., 512.).unwrap();
        ChipRecord {
            image_id: 1,
            scale_index: 1,
            image_size: (1024, 1024),
            kind: ChipKind::Positive,
            flipped: false,
            rect_canvas: r,
            rect_original: r,
            gts,
            residual_proposals: None,
            labels: None,
        }
    }

    fn scale(r_min: f64, r_max: Option<f64>) -> ScaleSpec {
        ScaleSpec {
            index: 1,
            rule: ResizeRule::Factor(1.0),
            chip_size: 512,
            stride: 32,
            range: AreaRange::new(r_min, r_max).unwrap(),
        }
    }

    #[test]
    fn regression_examples() {
        let p = bb(0., 0., 10., 10.);
        assert_eq!(regression_targets(&p, &p), [0.0; 4]);
        assert_eq!(regression_targets(&p, &bb(5., 0., 10., 10.)), [0.5, 0.0, 0.0, 0.0]);
        let t = regression_targets(&p, &bb(0., 0., 20., 10.));
        assert_eq!(t[0], 0.5);
        assert_eq!(t[1], 0.0);
        assert!((t[2] - 2f64.ln()).abs() < 1e-15);
        assert_eq!(t[3], 0.0);
    }

    #[test]
    fn identical_proposal_is_positive() {
        let g = bb(10., 10., 50., 50.);
        let c = chip(vec![entry(1, g, true)]);
        let labels = assign_proposal_labels(&[g], &c, &scale(0., None), 0.5).unwrap();
        assert_eq!(labels[0].label, LabelKind::Positive);
        assert_eq!(labels[0].category, Some(101));
        assert_eq!(labels[0].matched_gt_id, Some(1));
        assert_eq!(labels[0].regression_target, Some([0.0; 4]));
    }

    #[test]
    fn exactly_half_is_negative() {
        let c = chip(vec![entry(1, bb(0., 0., 10., 20.), true)]);
        let p = bb(0., 0., 10., 10.);
        assert_eq!(iou(&p, &c.gts[0].cropped), 0.5);
        let labels = assign_proposal_labels(&[p], &c, &scale(0., None), 0.5).unwrap();
        assert_eq!(labels[0].label, LabelKind::Negative);
        assert!(labels[0].regression_target.is_none());
    }

    #[test]
    fn cropped_invalid_box_still_matches_small_proposal() {
        // visible part of a large object at a fine scale
        let c = chip(vec![entry(7, bb(480., 0., 32., 40.), false)]);
        let p = bb(482., 2., 30., 36.);
        let labels = assign_proposal_labels(&[p], &c, &scale(0., Some(80.)), 0.5).unwrap();
        assert_eq!(labels[0].label, LabelKind::Positive);
        assert_eq!(labels[0].matched_gt_id, Some(7));
    }

    #[test]
    fn out_of_range_proposal_is_ignored() {
        let g = bb(0., 0., 200., 200.);
        let c = chip(vec![entry(1, g, true)]);
        let labels = assign_proposal_labels(&[g], &c, &scale(0., Some(80.)), 0.5).unwrap();
        assert_eq!(labels[0].label, LabelKind::Ignore);
    }

    #[test]
    fn ties_go_to_lowest_id() {
        let g = bb(0., 0., 10., 10.);
        let c = chip(vec![entry(9, g, true), entry(4, g, true)]);
        let labels = assign_proposal_labels(&[g], &c, &scale(0., None), 0.5).unwrap();
        assert_eq!(labels[0].matched_gt_id, Some(4));
    }

    #[test]
    fn rejects_proposal_outside_chip() {
        let c = chip(vec![]);
        let err = assign_proposal_labels(&[bb(500., 0., 20., 20.)], &c, &scale(0., None), 0.5);
        assert!(matches!(err, Err(Error::ProposalOutsideChip { index: 0 })));
    }

    #[test]
    fn anchor_examples() {
        let valid = bb(10., 10., 50., 50.);
        let invalid = bb(300., 300., 100., 100.);
        let c = chip(vec![entry(1, valid, true), entry(2, invalid, false)]);
        // IoU 0.6 with the invalid box
        let near_invalid = bb(300., 300., 100., 60.);
        assert!((iou(&near_invalid, &invalid) - 0.6).abs() < 1e-12);
        let anchors = [valid, near_invalid, bb(150., 150., 20., 20.)];
        let labels = assign_anchor_labels(&anchors, &c, &AnchorThresholds::default()).unwrap();
        let kinds: Vec<_> = labels.iter().map(|l| l.label).collect();
        assert_eq!(kinds, vec![LabelKind::Positive, LabelKind::Ignore, LabelKind::Negative]);
    }

    #[test]
    fn best_anchor_promoted_for_unmatched_box() {
        let g = bb(0., 0., 100., 100.);
        let c = chip(vec![entry(1, g, true)]);
        // IoU 0.5 and 0.25: neither reaches 0.7
        let anchors = [bb(0., 0., 100., 50.), bb(0., 0., 50., 50.)];
        let labels = assign_anchor_labels(&anchors, &c, &AnchorThresholds::default()).unwrap();
        assert_eq!(labels[0].label, LabelKind::Positive);
        assert_eq!(labels[1].label, LabelKind::Negative);
        // two equally good anchors: no unique best, no promotion
        let anchors = [bb(0., 0., 100., 50.), bb(0., 50., 100., 50.)];
        let labels = assign_anchor_labels(&anchors, &c, &AnchorThresholds::default()).unwrap();
        assert!(labels.iter().all(|l| l.label == LabelKind::Ignore));
    }

    #[test]
    fn promotion_does_not_survive_invalidation() {
        let g = bb(0., 0., 100., 100.);
        let bad = bb(0., 0., 100., 50.);
        let c = chip(vec![entry(1, g, true), entry(2, bad, false)]);
        let labels = assign_anchor_labels(&[bb(0., 0., 100., 50.)], &c, &AnchorThresholds::default()).unwrap();
        assert_eq!(labels[0].label, LabelKind::Ignore);
    }

    #[test]
    fn rejects_bad_thresholds() {
        let c = chip(vec![]);
        let t = AnchorThresholds {
            iou_pos: 0.3,
            iou_neg: 0.7,
            iou_invalid: 0.3,
        };
        assert!(assign_anchor_labels(&[], &c, &t).is_err());
        let t = AnchorThresholds {
            iou_invalid: 0.0,
            ..AnchorThresholds::default()
        };
        assert!(t.validate().is_err());
    }
}
