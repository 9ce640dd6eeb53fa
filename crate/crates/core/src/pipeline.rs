//! Corpus-level mining: a parallel map over images whose results are
//! collected in image order, so the output never depends on the worker
//! count.

use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::Serialize;

use crate::config::MiningConfig;
use crate::dataset::{Dataset, ImageInfo, ProposalMap};
use crate::error::{Error, Result};
use crate::geometry::{scale_box, BBox};
use crate::labels::assign_proposal_labels;
use crate::manifest::{Manifest, ManifestHeader};
use crate::negative::{build_negative_pool, sample_negatives};
use crate::positive::{crop_to_chip, mine_positive, Coverage};
use crate::pyramid::{resolve_canvas, Pyramid};
use crate::record::{sort_canonical, ChipRecord};

/// Run `f` on a dedicated pool of `workers` threads (at least one).
pub fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .expect("thread pool")
        .install(f)
}

/// Chips mined for one image.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ImageChips {
    pub positives: Vec<ChipRecord>,
    /// Sampled negatives for the requested epoch.
    pub negatives: Vec<ChipRecord>,
    /// Size of the negative pool before sampling.
    pub pool_size: usize,
    pub coverage: Coverage,
}

pub fn mine_image(
    image: &ImageInfo,
    ds: &Dataset,
    proposals: Option<&ProposalMap>,
    cfg: &MiningConfig,
    seed: u64,
    epoch: u64,
) -> Result<ImageChips> {
    let gts = ds.ground_truth_of(image.id);
    let pos = mine_positive(image, &gts, &cfg.pyramid)?;
    let mut out = ImageChips {
        positives: pos.records,
        coverage: pos.coverage,
        ..ImageChips::default()
    };
    if let Some(props) = proposals.and_then(|m| m.get(&image.id)) {
        let pool = build_negative_pool(image, &gts, props, &out.positives, &cfg.pyramid, &cfg.negatives)?;
        out.pool_size = pool.chips.len();
        out.negatives = sample_negatives(&pool, cfg.negatives_per_image, epoch, seed);
    }
    Ok(out)
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CorpusChips {
    /// Canonically sorted.
    pub positives: Vec<ChipRecord>,
    /// Canonically sorted.
    pub negatives: Vec<ChipRecord>,
    pub coverage: Coverage,
    pub pool_sizes: Vec<usize>,
}

/// Mine every image of `ds` on the current rayon pool. Negatives are mined
/// only when `proposals` is given.
pub fn mine_corpus(
    ds: &Dataset,
    proposals: Option<&ProposalMap>,
    cfg: &MiningConfig,
    seed: u64,
    epoch: u64,
) -> Result<CorpusChips> {
    cfg.validate()?;
    let per_image = ds
        .images
        .par_iter()
        .map(|img| mine_image(img, ds, proposals, cfg, seed, epoch))
        .collect::<Result<Vec<_>>>()?;

    let mut out = CorpusChips::default();
    for chips in per_image {
        out.positives.extend(chips.positives);
        out.negatives.extend(chips.negatives);
        out.coverage.merge(&chips.coverage);
        out.pool_sizes.push(chips.pool_size);
    }
    sort_canonical(&mut out.positives);
    sort_canonical(&mut out.negatives);
    Ok(out)
}

/// Attach proposal labels to each record. Proposals (original coordinates)
/// are scaled to the chip's canvas and cropped to it; `proposal_index`
/// refers to the proposal's position in its image's list.
pub fn label_records(records: &mut [ChipRecord], proposals: &ProposalMap, pyramid: &Pyramid, iou_pos: f64) -> Result<()> {
    records.par_iter_mut().try_for_each(|r| {
        let spec = pyramid.scale(r.scale_index).ok_or_else(|| {
            Error::malformed(
                format!("record for image {}", r.image_id),
                format!("scale {} is not in the manifest pyramid", r.scale_index),
            )
        })?;
        let canvas = resolve_canvas(r.image_size.0, r.image_size.1, spec)?;
        let (indices, boxes): (Vec<usize>, Vec<BBox>) = proposals
            .get(&r.image_id)
            .map(|list| {
                list.iter()
                    .enumerate()
                    .filter_map(|(i, p)| {
                        crop_to_chip(&scale_box(&p.bbox, canvas.factor), &r.rect_canvas).map(|b| (i, b))
                    })
                    .unzip()
            })
            .unwrap_or_default();
        let mut labels = assign_proposal_labels(&boxes, r, spec, iou_pos)?;
        for l in &mut labels {
            l.proposal_index = indices[l.proposal_index];
        }
        r.labels = Some(labels);
        Ok(())
    })
}

/// Positive chips of `ds` as a manifest, with coverage in the header.
pub fn positive_manifest(ds: &Dataset, cfg: &MiningConfig, seed: u64, epoch: u64) -> Result<Manifest> {
    let chips = mine_corpus(ds, None, cfg, seed, epoch)?;
    let mut header = ManifestHeader::new(cfg, seed, epoch);
    header.coverage = Some(chips.coverage);
    Ok(Manifest::new(header, chips.positives))
}

/// Sampled negative chips of `ds` for `(seed, epoch)` as a manifest.
pub fn negative_manifest(
    ds: &Dataset,
    proposals: &ProposalMap,
    cfg: &MiningConfig,
    seed: u64,
    epoch: u64,
) -> Result<Manifest> {
    let chips = mine_corpus(ds, Some(proposals), cfg, seed, epoch)?;
    Ok(Manifest::new(ManifestHeader::new(cfg, seed, epoch), chips.negatives))
}

#[derive(Debug, Clone, Serialize)]
pub struct Throughput {
    pub images: usize,
    pub workers: usize,
    pub wall_time: Duration,
    pub images_per_second: f64,
    pub chips: usize,
    /// Hex SHA-256 of the positive and negative manifests.
    pub digest: String,
}

/// Time end-to-end mining of `ds` on `workers` threads. A warm-up pass over
/// a prefix of the corpus is excluded from the timing.
pub fn bench_throughput(
    ds: &Dataset,
    proposals: Option<&ProposalMap>,
    cfg: &MiningConfig,
    workers: usize,
) -> Result<Throughput> {
    use sha2::{Digest, Sha256};

    let warm = Dataset {
        images: ds.images.iter().take(64).cloned().collect(),
        ..ds.clone()
    };
    with_workers(workers, || mine_corpus(&warm, proposals, cfg, 0, 0))?;

    let start = Instant::now();
    let chips = with_workers(workers, || mine_corpus(ds, proposals, cfg, 0, 0))?;
    let wall_time = start.elapsed();

    let mut h = Sha256::new();
    for (records, header) in [(&chips.positives, 0u8), (&chips.negatives, 1u8)] {
        h.update([header]);
        let m = Manifest::new(ManifestHeader::new(cfg, 0, 0), records.clone());
        h.update(m.to_bytes());
    }
    let secs = wall_time.as_secs_f64();
    Ok(Throughput {
        images: ds.images.len(),
        workers: workers.max(1),
        wall_time,
        images_per_second: if ds.images.is_empty() || secs == 0.0 {
            0.0
        } else {
            ds.images.len() as f64 / secs
        },
        chips: chips.positives.len() + chips.negatives.len(),
        digest: hex::encode(h.finalize()),
    })
}
