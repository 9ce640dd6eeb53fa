//! COCO-subset annotation loading, proposal files and flip augmentation.

use std::collections::{BTreeMap, HashSet};
use std::io::{BufRead, BufReader};
use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{flip_box, BBox};
use crate::negative::Proposal;
use crate::positive::GroundTruth;

/// Suffix appended to the file name of a mirrored image.
pub const FLIP_MARKER: &str = "#hflip";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageInfo {
    pub id: u64,
    pub width: u32,
    pub height: u32,
    pub file_name: String,
    #[serde(default)]
    pub flipped: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub id: u64,
    pub image_id: u64,
    pub bbox: BBox,
    pub category_id: u32,
    pub iscrowd: bool,
}

impl Annotation {
    pub fn ground_truth(&self) -> GroundTruth {
        GroundTruth {
            id: self.id,
            bbox: self.bbox,
            category: self.category_id,
            is_crowd: self.iscrowd,
        }
    }
}

/// Images sorted by id, annotations sorted by `(image_id, id)`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    pub images: Vec<ImageInfo>,
    pub annotations: Vec<Annotation>,
    /// Annotations discarded during loading for non-positive extent.
    pub dropped_annotations: usize,
}

/// Proposals grouped by image id, file order preserved within an image.
pub type ProposalMap = BTreeMap<u64, Vec<Proposal>>;

#[derive(Deserialize)]
struct RawCoco {
    images: Vec<RawImage>,
    #[serde(default)]
    annotations: Vec<RawAnnotation>,
}

#[derive(Deserialize)]
struct RawImage {
    id: u64,
    width: u32,
    height: u32,
    #[serde(default)]
    file_name: String,
}

#[derive(Deserialize)]
struct RawAnnotation {
    id: u64,
    image_id: u64,
    bbox: [f64; 4],
    category_id: u32,
    #[serde(default)]
    iscrowd: u8,
}

impl Dataset {
    /// Build a dataset from parts, validating references and sorting.
    pub fn new(images: Vec<ImageInfo>, annotations: Vec<Annotation>) -> Result<Self> {
        let mut ds = Dataset {
            images,
            annotations,
            dropped_annotations: 0,
        };
        ds.canonicalize();
        ds.validate()?;
        Ok(ds)
    }

    /// Union of several datasets (e.g. train and val splits). Ids must not
    /// collide.
    pub fn merge(parts: impl IntoIterator<Item = Dataset>) -> Result<Self> {
        let mut images = Vec::new();
        let mut annotations = Vec::new();
        let mut dropped = 0;
        for p in parts {
            images.extend(p.images);
            annotations.extend(p.annotations);
            dropped += p.dropped_annotations;
        }
        let mut ds = Dataset::new(images, annotations)?;
        ds.dropped_annotations = dropped;
        Ok(ds)
    }

    fn canonicalize(&mut self) {
        self.images.sort_by_key(|i| i.id);
        self.annotations.sort_by_key(|a| (a.image_id, a.id));
    }

    fn validate(&self) -> Result<()> {
        for (i, w) in self.images.windows(2).enumerate() {
            if w[0].id == w[1].id {
                return Err(Error::malformed(
                    format!("images[{}].id", i + 1),
                    format!("duplicate image id {}", w[0].id),
                ));
            }
        }
        for (i, img) in self.images.iter().enumerate() {
            if img.width == 0 || img.height == 0 {
                return Err(Error::malformed(
                    format!("images[{i}]"),
                    format!("image {} has zero width or height", img.id),
                ));
            }
        }
        let mut seen = HashSet::new();
        for (i, a) in self.annotations.iter().enumerate() {
            if self.image(a.image_id).is_none() {
                return Err(Error::malformed(
                    format!("annotations[{i}].image_id"),
                    format!("annotation {} references unknown image {}", a.id, a.image_id),
                ));
            }
            if !seen.insert(a.id) {
                return Err(Error::malformed(
                    format!("annotations[{i}].id"),
                    format!("duplicate annotation id {}", a.id),
                ));
            }
        }
        Ok(())
    }

    pub fn image(&self, id: u64) -> Option<&ImageInfo> {
        self.images
            .binary_search_by_key(&id, |i| i.id)
            .ok()
            .map(|k| &self.images[k])
    }

    /// Annotations of one image, as a contiguous slice.
    pub fn annotations_of(&self, image_id: u64) -> &[Annotation] {
        let lo = self.annotations.partition_point(|a| a.image_id < image_id);
        let hi = self.annotations.partition_point(|a| a.image_id <= image_id);
        &self.annotations[lo..hi]
    }

    pub fn ground_truth_of(&self, image_id: u64) -> Vec<GroundTruth> {
        self.annotations_of(image_id)
            .iter()
            .map(Annotation::ground_truth)
            .collect()
    }

    pub fn from_coco_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let raw: RawCoco = serde_path_to_error::deserialize(de)
            .map_err(|e| Error::malformed(e.path().to_string(), e.inner()))?;

        let images = raw
            .images
            .into_iter()
            .map(|r| ImageInfo {
                id: r.id,
                width: r.width,
                height: r.height,
                file_name: r.file_name,
                flipped: false,
            })
            .collect();
        let mut dropped = 0;
        let mut annotations = Vec::with_capacity(raw.annotations.len());
        for r in raw.annotations {
            let [x, y, w, h] = r.bbox;
            match BBox::new(x, y, w, h) {
                Ok(bbox) => annotations.push(Annotation {
                    id: r.id,
                    image_id: r.image_id,
                    bbox,
                    category_id: r.category_id,
                    iscrowd: r.iscrowd != 0,
                }),
                Err(_) => dropped += 1,
            }
        }
        if dropped > 0 {
            warn!("dropped {dropped} annotations with non-positive width or height");
        }
        let mut ds = Dataset::new(images, annotations)?;
        ds.dropped_annotations = dropped;
        Ok(ds)
    }

    pub fn to_coco_json(&self) -> String {
        #[derive(Serialize)]
        struct OutAnn<'a> {
            id: u64,
            image_id: u64,
            bbox: &'a BBox,
            category_id: u32,
            iscrowd: u8,
        }
        #[derive(Serialize)]
        struct Out<'a> {
            images: &'a [ImageInfo],
            annotations: Vec<OutAnn<'a>>,
        }
        let out = Out {
            images: &self.images,
            annotations: self
                .annotations
                .iter()
                .map(|a| OutAnn {
                    id: a.id,
                    image_id: a.image_id,
                    bbox: &a.bbox,
                    category_id: a.category_id,
                    iscrowd: u8::from(a.iscrowd),
                })
                .collect(),
        };
        serde_json::to_string(&out).expect("dataset serializes")
    }
}

pub fn load_annotations(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Dataset::from_coco_json(&text).map_err(|e| match e {
        Error::MalformedInput { location, message } => Error::MalformedInput {
            location: format!("{}: {location}", path.display()),
            message,
        },
        other => other,
    })
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ProposalLine {
    image_id: u64,
    bbox: BBox,
    score: f64,
}

#[derive(Serialize)]
struct ProposalLineOut<'a> {
    image_id: u64,
    bbox: &'a BBox,
    score: f64,
}

/// Parse a JSON Lines proposal stream; blank lines are skipped.
pub fn read_proposals(reader: impl BufRead, source: &str) -> Result<ProposalMap> {
    let mut map = ProposalMap::new();
    for (n, line) in reader.lines().enumerate() {
        let lineno = n + 1;
        let line = line.map_err(|e| Error::io(source, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let de = &mut serde_json::Deserializer::from_str(&line);
        let p: ProposalLine = serde_path_to_error::deserialize(de)
            .map_err(|e| Error::malformed(format!("{source}:{lineno}"), e))?;
        if !(p.score.is_finite() && (0.0..=1.0).contains(&p.score)) {
            return Err(Error::malformed(
                format!("{source}:{lineno}"),
                format!("score {} outside [0, 1]", p.score),
            ));
        }
        map.entry(p.image_id).or_default().push(Proposal {
            image_id: p.image_id,
            bbox: p.bbox,
            score: p.score,
        });
    }
    Ok(map)
}

pub fn load_proposals(path: impl AsRef<Path>) -> Result<ProposalMap> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_proposals(BufReader::new(file), &path.display().to_string())
}

pub fn write_proposals(map: &ProposalMap, out: &mut impl std::io::Write) -> std::io::Result<()> {
    for p in map.values().flatten() {
        let line = ProposalLineOut {
            image_id: p.image_id,
            bbox: &p.bbox,
            score: p.score,
        };
        serde_json::to_writer(&mut *out, &line)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

fn id_offset<T>(items: &[T], id: impl Fn(&T) -> u64) -> u64 {
    items.iter().map(id).max().map_or(0, |m| m + 1)
}

/// Id offset assigned to mirrored twins of `ds`'s images.
pub fn flip_image_offset(ds: &Dataset) -> u64 {
    id_offset(&ds.images, |i| i.id)
}

/// Originals plus horizontally mirrored twins with fresh ids.
pub fn flip_augment(ds: &Dataset) -> Dataset {
    let img_off = flip_image_offset(ds);
    let ann_off = id_offset(&ds.annotations, |a| a.id);

    let mut images = ds.images.clone();
    images.extend(ds.images.iter().map(|i| ImageInfo {
        id: i.id + img_off,
        file_name: format!("{}{FLIP_MARKER}", i.file_name),
        flipped: true,
        ..i.clone()
    }));
    let mut annotations = ds.annotations.clone();
    annotations.extend(ds.annotations.iter().map(|a| {
        let width = ds.image(a.image_id).expect("validated reference").width;
        Annotation {
            id: a.id + ann_off,
            image_id: a.image_id + img_off,
            bbox: flip_box(&a.bbox, f64::from(width)),
            ..a.clone()
        }
    }));
    let mut out = Dataset {
        images,
        annotations,
        dropped_annotations: ds.dropped_annotations,
    };
    out.canonicalize();
    out
}

/// Mirror proposals to match [`flip_augment`] of `ds`. Proposals for
/// images not in `ds` are kept unmirrored.
pub fn flip_proposals(ds: &Dataset, proposals: &ProposalMap) -> ProposalMap {
    let offset = flip_image_offset(ds);
    let mut out = proposals.clone();
    for (&image_id, list) in proposals {
        let Some(img) = ds.image(image_id) else { continue };
        let width = f64::from(img.width);
        out.insert(
            image_id + offset,
            list.iter()
                .map(|p| Proposal {
                    image_id: image_id + offset,
                    bbox: flip_box(&p.bbox, width),
                    score: p.score,
                })
                .collect(),
        );
    }
    out
}
