//! Pixel and chip accounting for a manifest against a single-scale baseline.
//!
//! The baseline resizes each image so its short side is `short` unless that
//! pushes the long side past `long`, in which case the long side is pinned
//! to `long`. Chip pixels count the full `K x K` area of every chip,
//! zero padding included.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::record::{ChipKind, ChipRecord};

pub const DEFAULT_BASELINE: (u32, u32) = (800, 1333);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChipsPerImage {
    pub mean: f64,
    pub min: usize,
    pub max: usize,
    /// chips-per-image -> number of images
    pub histogram: BTreeMap<usize, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PixelReport {
    pub images: usize,
    pub chips: usize,
    pub positive_chips: usize,
    pub negative_chips: usize,
    pub total_chip_pixels: u64,
    pub baseline: (u32, u32),
    pub baseline_pixels: u64,
    pub ratio: f64,
    pub chips_per_image: ChipsPerImage,
    pub per_scale: BTreeMap<u32, usize>,
    pub padding_counted: bool,
}

fn round_half_up(v: f64) -> u64 {
    (v + 0.5).floor() as u64
}

/// Baseline resized dimensions of a `w x h` image.
pub fn baseline_dims(w: u32, h: u32, short: u32, long: u32) -> (u64, u64) {
    let (w_f, h_f) = (f64::from(w), f64::from(h));
    let mut s = f64::from(short) / w_f.min(h_f);
    if w_f.max(h_f) * s > f64::from(long) {
        s = f64::from(long) / w_f.max(h_f);
    }
    (round_half_up(w_f * s), round_half_up(h_f * s))
}

pub fn pixel_report(records: &[ChipRecord], ds: &Dataset, baseline: (u32, u32)) -> Result<PixelReport> {
    let mut per_image: BTreeMap<u64, usize> = ds.images.iter().map(|i| (i.id, 0)).collect();
    let mut per_scale = BTreeMap::new();
    let mut total_chip_pixels = 0u64;
    let mut positive_chips = 0;
    for r in records {
        *per_image.get_mut(&r.image_id).ok_or(Error::UnknownImage(r.image_id))? += 1;
        *per_scale.entry(r.scale_index).or_insert(0) += 1;
        let k = r.chip_size() as u64;
        total_chip_pixels += k * k;
        if r.kind == ChipKind::Positive {
            positive_chips += 1;
        }
    }
    let baseline_pixels: u64 = ds
        .images
        .iter()
        .map(|i| {
            let (w, h) = baseline_dims(i.width, i.height, baseline.0, baseline.1);
            w * h
        })
        .sum();

    let mut histogram = BTreeMap::new();
    for &n in per_image.values() {
        *histogram.entry(n).or_insert(0) += 1;
    }
    let images = ds.images.len();
    let chips_per_image = ChipsPerImage {
        mean: if images == 0 {
            0.0
        } else {
            records.len() as f64 / images as f64
        },
        min: per_image.values().copied().min().unwrap_or(0),
        max: per_image.values().copied().max().unwrap_or(0),
        histogram,
    };
    Ok(PixelReport {
        images,
        chips: records.len(),
        positive_chips,
        negative_chips: records.len() - positive_chips,
        total_chip_pixels,
        baseline,
        baseline_pixels,
        ratio: if baseline_pixels == 0 {
            0.0
        } else {
            total_chip_pixels as f64 / baseline_pixels as f64
        },
        chips_per_image,
        per_scale,
        padding_counted: true,
    })
}

impl PixelReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Human-readable summary.
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let row = |s: &mut String, k: &str, v: String| {
            let _ = writeln!(s, "{k:<28} {v:>16}");
        };
        row(&mut s, "images", self.images.to_string());
        row(&mut s, "chips", self.chips.to_string());
        row(&mut s, "  positive", self.positive_chips.to_string());
        row(&mut s, "  negative", self.negative_chips.to_string());
        for (scale, n) in &self.per_scale {
            row(&mut s, &format!("  scale {scale}"), n.to_string());
        }
        row(
            &mut s,
            "chips/image (mean)",
            format!("{:.3}", self.chips_per_image.mean),
        );
        row(
            &mut s,
            "chips/image (min..max)",
            format!("{}..{}", self.chips_per_image.min, self.chips_per_image.max),
        );
        row(&mut s, "chip pixels", self.total_chip_pixels.to_string());
        row(
            &mut s,
            &format!("baseline {}x{} pixels", self.baseline.0, self.baseline.1),
            self.baseline_pixels.to_string(),
        );
        row(&mut s, "ratio", format!("{:.4}", self.ratio));
        s
    }

    pub fn histogram_csv(&self) -> String {
        let mut s = String::from("chips_per_image,images\n");
        for (k, v) in &self.chips_per_image.histogram {
            let _ = writeln!(s, "{k},{v}");
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::ImageInfo;
    use crate::geometry::BBox;

    fn ds(dims: &[(u64, u32, u32)]) -> Dataset {
        let images = dims
            .iter()
            .map(|&(id, width, height)| ImageInfo {
                id,
                width,
                height,
                file_name: String::new(),
                flipped: false,
            })
            .collect();
        Dataset::new(images, vec![]).unwrap()
    }

    fn chip(image_id: u64, scale_index: u32) -> ChipRecord {
        let r = BBox::square(0., 0., 512.).unwrap();
        ChipRecord {
            image_id,
            scale_index,
            image_size: (800, 1333),
            kind: ChipKind::Positive,
            flipped: false,
            rect_canvas: r,
            rect_original: r,
            gts: vec![],
            residual_proposals: None,
            labels: None,
        }
    }

    #[test]
    fn baseline_rule() {
        assert_eq!(baseline_dims(800, 1333, 800, 1333), (800, 1333));
        assert_eq!(baseline_dims(640, 480, 800, 1333), (1067, 800));
        // very wide: long side pinned
        assert_eq!(baseline_dims(2000, 500, 800, 1333), (1333, 333));
    }

    #[test]
    fn single_chip_ratio() {
        let report = pixel_report(&[chip(1, 1)], &ds(&[(1, 800, 1333)]), DEFAULT_BASELINE).unwrap();
        let expect = 512.0 * 512.0 / (800.0 * 1333.0);
        assert!((report.ratio - expect).abs() < 1e-12);
        assert!((report.ratio - 0.2458).abs() < 1e-4);
    }

    #[test]
    fn empty_manifest() {
        let report = pixel_report(&[], &ds(&[(1, 640, 480)]), DEFAULT_BASELINE).unwrap();
        assert_eq!(report.ratio, 0.0);
        assert_eq!(report.chips_per_image.histogram[&0], 1);
    }

    #[test]
    fn totals_and_histogram() {
        let recs: Vec<_> = (0..5).map(|i| chip(1, 1 + i % 3)).chain([chip(2, 1)]).collect();
        let report = pixel_report(&recs, &ds(&[(1, 640, 480), (2, 640, 480), (3, 10, 10)]), DEFAULT_BASELINE).unwrap();
        assert_eq!(report.total_chip_pixels, 6 * 512 * 512);
        assert_eq!(report.chips_per_image.mean, 2.0);
        assert_eq!((report.chips_per_image.min, report.chips_per_image.max), (0, 5));
        assert_eq!(report.per_scale[&1], 3);
        assert_eq!(report.histogram_csv(), "chips_per_image,images\n0,1\n1,1\n5,1\n");
        assert!(report.to_table().contains("ratio"));
    }

    #[test]
    fn unknown_image() {
        let err = pixel_report(&[chip(9, 1)], &ds(&[(1, 640, 480)]), DEFAULT_BASELINE).unwrap_err();
        assert!(matches!(err, Error::UnknownImage(9)));
    }
}
