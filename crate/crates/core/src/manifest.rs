//! JSON Lines chip manifest: one header line followed by one record per
//! line, in canonical order, floats written with six decimals. Identical
//! inputs produce byte-identical files.

use std::cmp::Ordering;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::MiningConfig;
use crate::error::{Error, Result};
use crate::negative::NegativeParams;
use crate::positive::Coverage;
use crate::pyramid::{Pyramid, ScaleEntry};
use crate::record::{sort_canonical, ChipRecord};

pub const FORMAT: &str = "chipforge/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestHeader {
    pub format: String,
    pub tool_version: String,
    pub config_hash: String,
    pub seed: u64,
    pub epoch: u64,
    pub pyramid: Vec<ScaleEntry>,
    pub negatives: NegativeParams,
    pub negatives_per_image: usize,
    pub label_iou_pos: f64,
    /// Positive-mining coverage summary, when the manifest holds positives.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coverage: Option<Coverage>,
}

impl ManifestHeader {
    pub fn new(config: &MiningConfig, seed: u64, epoch: u64) -> Self {
        let echo = config.echo();
        ManifestHeader {
            format: FORMAT.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash: config.hash(),
            seed,
            epoch,
            pyramid: echo.pyramid,
            negatives: echo.negatives,
            negatives_per_image: echo.negatives_per_image,
            label_iou_pos: echo.label_iou_pos,
            coverage: None,
        }
    }

    pub fn pyramid(&self) -> Result<Pyramid> {
        Pyramid::from_entries(&self.pyramid)
    }

    /// The mining configuration this manifest was produced with.
    pub fn config(&self) -> Result<MiningConfig> {
        Ok(MiningConfig {
            pyramid: self.pyramid()?,
            negatives: self.negatives,
            negatives_per_image: self.negatives_per_image,
            label_iou_pos: self.label_iou_pos,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub header: ManifestHeader,
    records: Vec<ChipRecord>,
}

impl Manifest {
    /// Records are put in canonical order.
    pub fn new(header: ManifestHeader, mut records: Vec<ChipRecord>) -> Self {
        sort_canonical(&mut records);
        Manifest { header, records }
    }

    pub fn records(&self) -> &[ChipRecord] {
        &self.records
    }

    pub fn into_records(self) -> Vec<ChipRecord> {
        self.records
    }

    pub fn write_to(&self, out: &mut impl Write) -> std::io::Result<()> {
        serde_json::to_writer(&mut *out, &self.header)?;
        out.write_all(b"\n")?;
        for r in &self.records {
            serde_json::to_writer(&mut *out, r)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to memory cannot fail");
        buf
    }

    pub fn read_from(reader: impl BufRead, source: &str) -> Result<Self> {
        let mut lines = reader.lines();
        let first = match lines.next() {
            Some(l) => l.map_err(|e| Error::io(source, e))?,
            None => return Err(Error::malformed(format!("{source}:1"), "missing header")),
        };
        let header = parse_header(&first, source)?;

        let mut records: Vec<ChipRecord> = Vec::new();
        for (n, line) in lines.enumerate() {
            let lineno = n + 2;
            let line = line.map_err(|e| Error::io(source, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let de = &mut serde_json::Deserializer::from_str(&line);
            let r: ChipRecord = serde_path_to_error::deserialize(de)
                .map_err(|e| Error::malformed(format!("{source}:{lineno}"), e))?;
            if let Some(prev) = records.last() {
                if prev.canonical_cmp(&r) == Ordering::Greater {
                    return Err(Error::malformed(
                        format!("{source}:{lineno}"),
                        "records out of canonical order",
                    ));
                }
            }
            records.push(r);
        }
        Ok(Manifest { header, records })
    }
}

fn parse_header(line: &str, source: &str) -> Result<ManifestHeader> {
    let location = format!("{source}:1");
    let value: serde_json::Value =
        serde_json::from_str(line).map_err(|e| Error::malformed(location.clone(), e))?;
    let found = value.get("format").and_then(|f| f.as_str());
    match found {
        Some(FORMAT) => {}
        Some(other) => {
            return Err(Error::VersionMismatch {
                found: other.to_string(),
                expected: FORMAT.to_string(),
            })
        }
        None => return Err(Error::malformed(location, "header has no format field")),
    }
    serde_path_to_error::deserialize(value).map_err(|e| Error::malformed(location, e))
}

pub fn write_manifest(m: &Manifest, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    m.write_to(&mut out)
        .and_then(|_| out.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<Manifest> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Manifest::read_from(BufReader::new(file), &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::ImageInfo;
    use crate::geometry::BBox;
    use crate::positive::{mine_positive, GroundTruth};

    fn sample() -> Manifest {
        let cfg = MiningConfig::default();
        let img = ImageInfo {
            id: 3,
            width: 640,
            height: 427,
            file_name: "x.jpg".into(),
            flipped: false,
        };
        let gts: Vec<GroundTruth> = [(20.3, 33.1, 40.7, 51.9), (300.0, 200.0, 130.0, 130.0)]
            .iter()
            .enumerate()
            .map(|(i, &(x, y, w, h))| GroundTruth {
                id: i as u64 + 1,
                bbox: BBox::new(x, y, w, h).unwrap(),
                category: 2,
                is_crowd: false,
            })
            .collect();
        let records = mine_positive(&img, &gts, &cfg.pyramid).unwrap().records;
        assert_eq!(records.len(), 4);
        Manifest::new(ManifestHeader::new(&cfg, 1, 0), records)
    }

    #[test]
    fn round_trip_is_exact() {
        let m = sample();
        let bytes = m.to_bytes();
        let back = Manifest::read_from(bytes.as_slice(), "mem").unwrap();
        assert_eq!(back, m);
        assert_eq!(back.to_bytes(), bytes);
    }

    #[test]
    fn writes_are_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let (a, b) = (dir.path().join("a.jsonl"), dir.path().join("b.jsonl"));
        write_manifest(&sample(), &a).unwrap();
        write_manifest(&sample(), &b).unwrap();
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
        assert_eq!(read_manifest(&a).unwrap(), sample());
    }

    #[test]
    fn unknown_version_is_distinct() {
        let text = String::from_utf8(sample().to_bytes()).unwrap().replace(FORMAT, "chipforge/99");
        match Manifest::read_from(text.as_bytes(), "mem") {
            Err(Error::VersionMismatch { found, .. }) => assert_eq!(found, "chipforge/99"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_record_reports_line() {
        let mut text = String::from_utf8(sample().to_bytes()).unwrap();
        text.push_str("{\"image_id\": 1}\n");
        match Manifest::read_from(text.as_bytes(), "mem") {
            Err(Error::MalformedInput { location, .. }) => assert_eq!(location, "mem:6"),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            Manifest::read_from("".as_bytes(), "mem"),
            Err(Error::MalformedInput { .. })
        ));
    }

    #[test]
    fn missing_file_is_io() {
        assert!(read_manifest("/nonexistent/m.jsonl").unwrap_err().is_io());
    }
}
