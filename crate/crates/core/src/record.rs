//! Chip records: the unit of output shared by the miners, the label
//! assigner and the manifest.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::geometry::BBox;
use crate::labels::ProposalLabel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChipKind {
    Positive,
    Negative,
}

/// A ground-truth box as seen from inside a chip.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GtEntry {
    pub gt_id: u64,
    pub category: u32,
    /// Cropped box in chip-local canvas coordinates.
    #[serde(rename = "box", serialize_with = "fixed::bbox")]
    pub cropped: BBox,
    pub valid: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChipRecord {
    pub image_id: u64,
    #[serde(rename = "scale")]
    pub scale_index: u32,
    /// Original image `(width, height)`; with the pyramid this resolves the
    /// canvas the chip was cut from.
    pub image_size: (u32, u32),
    pub kind: ChipKind,
    pub flipped: bool,
    #[serde(rename = "rect", serialize_with = "fixed::bbox")]
    pub rect_canvas: BBox,
    #[serde(serialize_with = "fixed::bbox")]
    pub rect_original: BBox,
    pub gts: Vec<GtEntry>,
    /// Residual proposals whose qualifying count selected this chip
    /// (negative chips only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub residual_proposals: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<ProposalLabel>>,
}

impl ChipRecord {
    pub fn chip_size(&self) -> f64 {
        self.rect_canvas.w()
    }

    /// Canonical manifest order: image, kind, scale, then chip row/column.
    pub fn canonical_cmp(&self, other: &Self) -> Ordering {
        self.image_id
            .cmp(&other.image_id)
            .then(self.kind.cmp(&other.kind))
            .then(self.scale_index.cmp(&other.scale_index))
            .then(self.rect_canvas.y().total_cmp(&other.rect_canvas.y()))
            .then(self.rect_canvas.x().total_cmp(&other.rect_canvas.x()))
    }
}

pub fn sort_canonical(records: &mut [ChipRecord]) {
    records.sort_by(ChipRecord::canonical_cmp);
}

/// Serializers writing floats with exactly six decimals.
pub(crate) mod fixed {
    use serde::ser::{Error as _, SerializeSeq};
    use serde::{Serialize, Serializer};
    use serde_json::value::RawValue;

    use crate::geometry::BBox;

    struct Fixed(f64);

    impl Serialize for Fixed {
        fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
            if !self.0.is_finite() {
                return Err(S::Error::custom("non-finite number"));
            }
            let raw = RawValue::from_string(format!("{:.6}", self.0)).map_err(S::Error::custom)?;
            raw.serialize(s)
        }
    }

    fn seq<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
        let mut out = s.serialize_seq(Some(v.len()))?;
        for &x in v {
            out.serialize_element(&Fixed(x))?;
        }
        out.end()
    }

    pub fn bbox<S: Serializer>(b: &BBox, s: S) -> Result<S::Ok, S::Error> {
        seq(&b.to_array(), s)
    }

    pub fn opt_array4<S: Serializer>(v: &Option<[f64; 4]>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            Some(a) => seq(a, s),
            None => s.serialize_none(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn serializes_fixed_precision() {
        let r = ChipRecord {
            image_id: 7,
            scale_index: 2,
            image_size: (640, 480),
            kind: ChipKind::Positive,
            flipped: false,
            rect_canvas: BBox::square(32.0, 0.0, 512.0).unwrap(),
            rect_original: BBox::new(19.196161, 0.0, 307.138572, 307.138572).unwrap(),
            gts: vec![GtEntry {
                gt_id: 3,
                category: 1,
                cropped: BBox::new(0.5, 1.25, 10.0, 20.0).unwrap(),
                valid: true,
            }],
            residual_proposals: None,
            labels: None,
        };
        let s = serde_json::to_string(&r).unwrap();
        assert!(s.contains(r#""rect":[32.000000,0.000000,512.000000,512.000000]"#), "{s}");
        assert!(s.contains(r#""box":[0.500000,1.250000,10.000000,20.000000]"#), "{s}");
        let back: ChipRecord = serde_json::from_str(&s).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn canonical_order() {
        let mk = |image_id, kind, scale_index, x: f64, y: f64| ChipRecord {
            image_id,
            scale_index,
            image_size: (10, 10),
            kind,
            flipped: false,
            rect_canvas: BBox::square(x, y, 512.0).unwrap(),
            rect_original: BBox::square(x, y, 512.0).unwrap(),
            gts: vec![],
            residual_proposals: None,
            labels: None,
        };
        let mut v = vec![
            mk(2, ChipKind::Positive, 1, 0.0, 0.0),
            mk(1, ChipKind::Negative, 1, 0.0, 0.0),
            mk(1, ChipKind::Positive, 2, 0.0, 0.0),
            mk(1, ChipKind::Positive, 1, 64.0, 0.0),
            mk(1, ChipKind::Positive, 1, 0.0, 32.0),
        ];
        sort_canonical(&mut v);
        let keys: Vec<_> = v
            .iter()
            .map(|r| (r.image_id, r.kind, r.scale_index, r.rect_canvas.y() as u32, r.rect_canvas.x() as u32))
            .collect();
        assert_eq!(
            keys,
            vec![
                (1, ChipKind::Positive, 1, 0, 64),
                (1, ChipKind::Positive, 1, 32, 0),
                (1, ChipKind::Positive, 2, 0, 0),
                (1, ChipKind::Negative, 1, 0, 0),
                (2, ChipKind::Positive, 1, 0, 0),
            ]
        );
    }
}
