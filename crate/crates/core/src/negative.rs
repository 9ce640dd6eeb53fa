//! Negative chip mining from region proposals.
//!
//! Proposals whose center falls inside a positive chip (at a scale where the
//! proposal is range-valid) are discarded. At every scale the remaining
//! range-valid proposals drive a second greedy pass that keeps picking chips
//! while the best one still holds at least `M` uncovered proposal centers.
//! The chips from all scales form the image's negative pool, from which a
//! few are drawn per epoch.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::ImageInfo;
use crate::error::{Error, Result};
use crate::geometry::{encloses, scale_box, BBox};
use crate::greedy;
use crate::positive::{make_record, GroundTruth};
use crate::pyramid::{grid_chips, resolve_canvas, AreaRange, Canvas, Pyramid, ScaleSpec};
use crate::record::{ChipKind, ChipRecord};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Proposal {
    pub image_id: u64,
    /// Original image coordinates.
    pub bbox: BBox,
    pub score: f64,
}

/// When a chip counts as covering a proposal.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProposalCover {
    /// The proposal's center lies inside the chip.
    #[default]
    Center,
    /// The whole proposal lies inside the chip.
    Enclosure,
}

impl ProposalCover {
    /// `b` in canvas coordinates.
    #[inline]
    pub fn covers(self, chip: &BBox, b: &BBox) -> bool {
        match self {
            ProposalCover::Center => {
                let (cx, cy) = b.center();
                chip.contains_point(cx, cy)
            }
            ProposalCover::Enclosure => encloses(chip, b),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NegativeParams {
    /// Minimum uncovered proposals a chip must hold to be selected (`M`).
    pub min_proposals: usize,
    /// Proposals scoring below this are ignored.
    pub score_floor: f64,
    pub cover: ProposalCover,
}

impl Default for NegativeParams {
    fn default() -> Self {
        NegativeParams {
            min_proposals: 2,
            score_floor: 0.0,
            cover: ProposalCover::Center,
        }
    }
}

impl NegativeParams {
    pub fn validate(&self) -> Result<()> {
        if self.min_proposals == 0 {
            return Err(Error::InvalidConfig("min_proposals (M) must be >= 1".into()));
        }
        if !self.score_floor.is_finite() {
            return Err(Error::InvalidConfig("score floor must be finite".into()));
        }
        Ok(())
    }
}

/// Proposals not covered by any positive chip of a scale at which they are
/// range-valid. Order preserved.
pub fn filter_covered(
    proposals: &[Proposal],
    pos_chips: &[ChipRecord],
    scales: &[(ScaleSpec, Canvas)],
    cover: ProposalCover,
) -> Vec<Proposal> {
    proposals
        .iter()
        .filter(|p| {
            !scales.iter().any(|(spec, canvas)| {
                if !spec.range.contains(&p.bbox) {
                    return false;
                }
                let b = scale_box(&p.bbox, canvas.factor);
                pos_chips
                    .iter()
                    .filter(|c| c.scale_index == spec.index && c.kind == ChipKind::Positive)
                    .any(|c| cover.covers(&c.rect_canvas, &b))
            })
        })
        .cloned()
        .collect()
}

/// One negative chip chosen at a scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NegativePick {
    pub candidate: usize,
    /// Uncovered residual proposals the chip held when picked (`>= M`).
    pub count: usize,
}

pub fn select_negative_chips(
    residual: &[Proposal],
    canvas: &Canvas,
    range: &AreaRange,
    candidates: &[BBox],
    min_proposals: usize,
    cover: ProposalCover,
) -> Vec<NegativePick> {
    let covered_by: Vec<Vec<usize>> = residual
        .iter()
        .filter(|p| range.contains(&p.bbox))
        .map(|p| {
            let b = scale_box(&p.bbox, canvas.factor);
            candidates
                .iter()
                .enumerate()
                .filter(|(_, c)| cover.covers(c, &b))
                .map(|(i, _)| i)
                .collect()
        })
        .collect();
    greedy::select(&covered_by, candidates.len(), min_proposals)
        .steps
        .into_iter()
        .map(|s| NegativePick {
            candidate: s.candidate,
            count: s.gain,
        })
        .collect()
}

/// All negative chips of one image, across scales.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct NegativePool {
    pub image_id: u64,
    /// Negative records, each with `residual_proposals` set.
    pub chips: Vec<ChipRecord>,
}

pub fn build_negative_pool(
    image: &ImageInfo,
    gts: &[GroundTruth],
    proposals: &[Proposal],
    positives: &[ChipRecord],
    pyramid: &Pyramid,
    params: &NegativeParams,
) -> Result<NegativePool> {
    let mut pool = NegativePool {
        image_id: image.id,
        chips: Vec::new(),
    };
    let kept: Vec<Proposal> = proposals
        .iter()
        .filter(|p| p.score >= params.score_floor)
        .cloned()
        .collect();
    if kept.is_empty() {
        return Ok(pool);
    }
    let scales = pyramid
        .scales()
        .iter()
        .map(|s| Ok((*s, resolve_canvas(image.width, image.height, s)?)))
        .collect::<Result<Vec<_>>>()?;
    let residual = filter_covered(&kept, positives, &scales, params.cover);
    for (spec, canvas) in &scales {
        let candidates = grid_chips(canvas, spec.chip_size, spec.stride);
        let picks = select_negative_chips(
            &residual,
            canvas,
            &spec.range,
            &candidates,
            params.min_proposals,
            params.cover,
        );
        pool.chips.extend(picks.into_iter().map(|pick| {
            let mut r = make_record(image, spec, canvas, candidates[pick.candidate], ChipKind::Negative, gts);
            r.residual_proposals = Some(pick.count as u32);
            r
        }));
    }
    Ok(pool)
}

/// RNG keyed by `(seed, epoch, image_id)` alone, so draws do not depend on
/// processing order.
pub fn sampler_rng(seed: u64, epoch: u64, image_id: u64) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(b"chipforge/negatives");
    h.update(seed.to_le_bytes());
    h.update(epoch.to_le_bytes());
    h.update(image_id.to_le_bytes());
    let digest: [u8; 32] = h.finalize().into();
    ChaCha8Rng::from_seed(digest)
}

/// Uniform draw without replacement of `min(n_max, |pool|)` chips, returned
/// in pool order.
pub fn sample_negatives(pool: &NegativePool, n_max: usize, epoch: u64, seed: u64) -> Vec<ChipRecord> {
    let n = n_max.min(pool.chips.len());
    if n == 0 {
        return Vec::new();
    }
    let mut rng = sampler_rng(seed, epoch, pool.image_id);
    let mut picked = index::sample(&mut rng, pool.chips.len(), n).into_vec();
    picked.sort_unstable();
    picked.into_iter().map(|i| pool.chips[i].clone()).collect()
}
