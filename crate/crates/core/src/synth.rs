//! Deterministic synthetic scenes for tests and benchmarks.
//!
//! Box aspect ratios are bounded so that every range-valid box fits inside
//! a single chip at its scale under the default pyramid.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::{Annotation, Dataset, ImageInfo, ProposalMap};
use crate::geometry::{clip, intersection_area, BBox};
use crate::negative::Proposal;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthParams {
    pub images: usize,
    /// Inclusive ranges.
    pub width: (u32, u32),
    pub height: (u32, u32),
    pub boxes_per_image: (usize, usize),
    /// Geometric-mean side, drawn log-uniformly.
    pub box_side: (f64, f64),
    /// Width over height, drawn log-uniformly.
    pub aspect: (f64, f64),
    /// Noise proposals per ground-truth box: a jittered copy with
    /// probability `min(rate, 1)` plus `rate` background proposals that
    /// overlap no ground truth, on average. Zero leaves exactly the
    /// ground-truth boxes.
    pub noise_rate: f64,
    pub crowd_rate: f64,
    pub categories: u32,
}

impl Default for SynthParams {
    /// Roughly COCO-shaped.
    fn default() -> Self {
        SynthParams {
            images: 1000,
            width: (480, 640),
            height: (360, 640),
            boxes_per_image: (1, 15),
            box_side: (6.0, 450.0),
            aspect: (0.5, 2.0),
            noise_rate: 1.0,
            crowd_rate: 0.01,
            categories: 80,
        }
    }
}

impl SynthParams {
    pub fn with_images(mut self, images: usize) -> Self {
        self.images = images;
        self
    }
}

fn log_uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo >= hi {
        return lo;
    }
    rng.random_range(lo.ln()..hi.ln()).exp()
}

fn round2(v: f64) -> f64 {
    (v * 100.0).round() / 100.0
}

fn random_box(rng: &mut ChaCha8Rng, side: (f64, f64), aspect: (f64, f64), w_img: f64, h_img: f64) -> BBox {
    let s = log_uniform(rng, side);
    let ar = log_uniform(rng, aspect).sqrt();
    let w = round2((s * ar).clamp(1.0, w_img));
    let h = round2((s / ar).clamp(1.0, h_img));
    let x = round2(rng.random_range(0.0..=w_img - w));
    let y = round2(rng.random_range(0.0..=h_img - h));
    BBox::new(x, y, w, h).expect("positive extent")
}

/// A proposal near `b`, shifted and resized by up to 20% of its size.
fn jitter(rng: &mut ChaCha8Rng, b: &BBox, frame: &BBox) -> Option<BBox> {
    let dx = rng.random_range(-0.2..0.2) * b.w();
    let dy = rng.random_range(-0.2..0.2) * b.h();
    let sw = rng.random_range(0.8..1.2);
    let sh = rng.random_range(0.8..1.2);
    let j = BBox::new(round2(b.x() + dx), round2(b.y() + dy), round2(b.w() * sw), round2(b.h() * sh)).ok()?;
    clip(&j, frame)
}

/// Count drawn as `floor(rate)` plus one with probability `fract(rate)`.
fn draw_count(rng: &mut ChaCha8Rng, rate: f64) -> usize {
    rate.floor() as usize + usize::from(rng.random_bool(rate.fract()))
}

/// Proposals for `ds`: every ground-truth box, plus noise at `noise_rate`
/// per box (see [`SynthParams::noise_rate`]). Images are processed in id
/// order from a single stream seeded by `seed`.
pub fn synth_proposals(ds: &Dataset, noise_rate: f64, seed: u64) -> ProposalMap {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rate = noise_rate.max(0.0);
    let mut out = ProposalMap::new();
    for img in &ds.images {
        let (w_img, h_img) = (f64::from(img.width), f64::from(img.height));
        let frame = BBox::new(0.0, 0.0, w_img, h_img).expect("image frame");
        let gt_boxes: Vec<BBox> = ds.annotations_of(img.id).iter().map(|a| a.bbox).collect();
        let mut props: Vec<Proposal> = gt_boxes
            .iter()
            .map(|&bbox| Proposal {
                image_id: img.id,
                bbox,
                score: round2(rng.random_range(0.5..=1.0)),
            })
            .collect();
        for gt in &gt_boxes {
            if rng.random_bool(rate.min(1.0)) {
                if let Some(j) = jitter(&mut rng, gt, &frame) {
                    props.push(Proposal {
                        image_id: img.id,
                        bbox: j,
                        score: round2(rng.random_range(0.3..=1.0)),
                    });
                }
            }
            for _ in 0..draw_count(&mut rng, rate) {
                for _attempt in 0..20 {
                    let b = random_box(&mut rng, (8.0, 200.0), (0.33, 3.0), w_img, h_img);
                    if gt_boxes.iter().all(|g| intersection_area(g, &b) == 0.0) {
                        props.push(Proposal {
                            image_id: img.id,
                            bbox: b,
                            score: round2(rng.random_range(0.0..=1.0)),
                        });
                        break;
                    }
                }
            }
        }
        out.insert(img.id, props);
    }
    out
}

/// Generate a dataset and a proposal set from [`synth_proposals`].
pub fn synth_scenes(params: &SynthParams, seed: u64) -> (Dataset, ProposalMap) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut images = Vec::with_capacity(params.images);
    let mut annotations = Vec::new();
    let mut next_ann = 1u64;

    for i in 0..params.images {
        let id = i as u64 + 1;
        let width = rng.random_range(params.width.0..=params.width.1);
        let height = rng.random_range(params.height.0..=params.height.1);
        images.push(ImageInfo {
            id,
            width,
            height,
            file_name: format!("synth_{id:06}.jpg"),
            flipped: false,
        });
        let n = rng.random_range(params.boxes_per_image.0..=params.boxes_per_image.1);
        for _ in 0..n {
            let bbox = random_box(&mut rng, params.box_side, params.aspect, f64::from(width), f64::from(height));
            annotations.push(Annotation {
                id: next_ann,
                image_id: id,
                bbox,
                category_id: rng.random_range(1..=params.categories.max(1)),
                iscrowd: rng.random_bool(params.crowd_rate),
            });
            next_ann += 1;
        }
    }

    let ds = Dataset::new(images, annotations).expect("synthetic dataset is consistent");
    let proposals = synth_proposals(&ds, params.noise_rate, seed.wrapping_add(0x9e37_79b9_7f4a_7c15));
    (ds, proposals)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::encloses;

    #[test]
    fn deterministic() {
        let p = SynthParams::default().with_images(20);
        assert_eq!(synth_scenes(&p, 5), synth_scenes(&p, 5));
        assert_ne!(synth_scenes(&p, 5).0, synth_scenes(&p, 6).0);
    }

    #[test]
    fn empty_and_noise_free() {
        let (ds, props) = synth_scenes(&SynthParams::default().with_images(0), 1);
        assert!(ds.images.is_empty() && props.is_empty());

        let p = SynthParams {
            noise_rate: 0.0,
            ..SynthParams::default().with_images(30)
        };
        let (ds, props) = synth_scenes(&p, 2);
        for img in &ds.images {
            let gts: Vec<BBox> = ds.annotations_of(img.id).iter().map(|a| a.bbox).collect();
            let ps: Vec<BBox> = props[&img.id].iter().map(|p| p.bbox).collect();
            assert_eq!(gts, ps);
        }
    }

    #[test]
    fn boxes_lie_inside_images() {
        let (ds, props) = synth_scenes(&SynthParams::default().with_images(50), 1);
        for a in &ds.annotations {
            let img = ds.image(a.image_id).unwrap();
            let frame = BBox::new(0., 0., img.width as f64, img.height as f64).unwrap();
            assert!(encloses(&frame, &a.bbox));
        }
        for (id, list) in &props {
            let img = ds.image(*id).unwrap();
            let frame = BBox::new(0., 0., img.width as f64, img.height as f64).unwrap();
            assert!(list.iter().all(|p| encloses(&frame, &p.bbox) && (0.0..=1.0).contains(&p.score)));
        }
    }
}
