//! Multi-scale chip mining for object-detector training.
//!
//! An image is resized to a few scales; at each scale a square chip grid is
//! laid over the resized canvas. Positive chips are chosen greedily so that
//! every ground-truth box whose size suits the scale is enclosed by some
//! chip. Negative chips are chosen from proposals that no positive chip
//! covers and are resampled every epoch. Labels and regression targets are
//! assigned inside each chip, and the result is written as a deterministic
//! JSON Lines manifest.

pub mod config;
pub mod dataset;
pub mod error;
pub mod geometry;
pub mod greedy;
pub mod labels;
pub mod manifest;
pub mod negative;
pub mod oracle;
pub mod pipeline;
pub mod positive;
pub mod pyramid;
pub mod record;
pub mod stats;
pub mod synth;

pub use config::{MiningConfig, DEFAULT_NEGATIVES_PER_IMAGE};
pub use dataset::{Annotation, Dataset, ImageInfo, ProposalMap};
pub use error::{Error, Result};
pub use geometry::{clip, encloses, flip_box, intersection_area, iou, scale_box, BBox};
pub use greedy::GreedyStep;
pub use labels::{AnchorLabel, AnchorThresholds, LabelKind, ProposalLabel};
pub use manifest::{read_manifest, write_manifest, Manifest, ManifestHeader};
pub use negative::{NegativeParams, NegativePool, Proposal, ProposalCover};
pub use pipeline::{mine_corpus, with_workers, CorpusChips, Throughput};
pub use positive::{Coverage, GroundTruth};
pub use pyramid::{AreaRange, Canvas, Pyramid, ResizeRule, ScaleEntry, ScaleSpec};
pub use record::{ChipKind, ChipRecord, GtEntry};
pub use stats::PixelReport;
pub use synth::SynthParams;
