//! Shared workloads for the criterion benches.

use chipforge::synth::{synth_scenes, SynthParams};
use chipforge::{Dataset, ProposalMap};

pub const SEED: u64 = 7;

/// A synthetic corpus of `images` images with proposals.
pub fn workload(images: usize) -> (Dataset, ProposalMap) {
    synth_scenes(&SynthParams::default().with_images(images), SEED)
}
