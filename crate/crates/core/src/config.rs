use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::Result;
use crate::negative::NegativeParams;
use crate::pyramid::{Pyramid, ScaleEntry};

/// Default number of negative chips drawn per image per epoch.
pub const DEFAULT_NEGATIVES_PER_IMAGE: usize = 2;

/// Everything that determines mining output apart from the data, the seed
/// and the epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct MiningConfig {
    pub pyramid: Pyramid,
    pub negatives: NegativeParams,
    pub negatives_per_image: usize,
    /// Proposal IoU strictly above this makes a proposal positive.
    pub label_iou_pos: f64,
}

impl Default for MiningConfig {
    fn default() -> Self {
        MiningConfig {
            pyramid: Pyramid::three_scale(),
            negatives: NegativeParams::default(),
            negatives_per_image: DEFAULT_NEGATIVES_PER_IMAGE,
            label_iou_pos: 0.5,
        }
    }
}

#[derive(Serialize, Deserialize)]
pub(crate) struct ConfigEcho {
    pub pyramid: Vec<ScaleEntry>,
    pub negatives: NegativeParams,
    pub negatives_per_image: usize,
    pub label_iou_pos: f64,
}

impl MiningConfig {
    pub fn validate(&self) -> Result<()> {
        self.negatives.validate()
    }

    pub(crate) fn echo(&self) -> ConfigEcho {
        ConfigEcho {
            pyramid: self.pyramid.entries(),
            negatives: self.negatives,
            negatives_per_image: self.negatives_per_image,
            label_iou_pos: self.label_iou_pos,
        }
    }

    /// Hex prefix of the SHA-256 of the canonical JSON of this config.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(&self.echo()).expect("config serializes");
        hex::encode(&Sha256::digest(&json)[..8])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_tracks_content() {
        let a = MiningConfig::default();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 16);
        b.negatives.min_proposals = 3;
        assert_ne!(a.hash(), b.hash());
    }
}
