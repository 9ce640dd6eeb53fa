//! Run settings: command-line flags over an optional JSON config file over
//! built-in defaults.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use chipforge::{MiningConfig, NegativeParams, Pyramid, DEFAULT_NEGATIVES_PER_IMAGE};

use crate::CliError;

/// Contents of a `--config` file. Every field is optional; relative paths
/// are resolved against the file's directory.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunFile {
    pub scales: Option<PathBuf>,
    pub annotations: Option<PathBuf>,
    pub proposals: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub epoch: Option<u64>,
    pub neg_max: Option<usize>,
    pub min_proposals: Option<usize>,
    pub flip: Option<bool>,
    pub workers: Option<usize>,
}

impl RunFile {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let de = &mut serde_json::Deserializer::from_str(&text);
        let mut file: RunFile = serde_path_to_error::deserialize(de)
            .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [
            &mut file.scales,
            &mut file.annotations,
            &mut file.proposals,
            &mut file.out,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(file)
    }
}

/// Fully resolved settings for one command.
#[derive(Debug)]
pub struct Settings {
    pub annotations: Option<PathBuf>,
    pub proposals: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub seed: u64,
    pub epoch: u64,
    pub flip: bool,
    pub workers: usize,
    pub mining: MiningConfig,
}

/// Values given on the command line.
#[derive(Debug, Default, Clone)]
pub struct Flags {
    pub config: Option<PathBuf>,
    pub scales: Option<PathBuf>,
    pub annotations: Option<PathBuf>,
    pub proposals: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub epoch: Option<u64>,
    pub neg_max: Option<usize>,
    pub min_proposals: Option<usize>,
    pub flip: bool,
    pub workers: Option<usize>,
}

impl Flags {
    pub fn resolve(self) -> Result<Settings, CliError> {
        let file = match &self.config {
            Some(p) => RunFile::load(p)?,
            None => RunFile::default(),
        };
        let pyramid = match self.scales.or(file.scales) {
            Some(p) => Pyramid::load(p)?,
            None => Pyramid::three_scale(),
        };
        let min_proposals = self
            .min_proposals
            .or(file.min_proposals)
            .unwrap_or(NegativeParams::default().min_proposals);
        let mining = MiningConfig {
            pyramid,
            negatives: NegativeParams {
                min_proposals,
                ..NegativeParams::default()
            },
            negatives_per_image: self.neg_max.or(file.neg_max).unwrap_or(DEFAULT_NEGATIVES_PER_IMAGE),
            ..MiningConfig::default()
        };
        mining.validate()?;
        let workers = self
            .workers
            .or(file.workers)
            .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
        if workers == 0 {
            return Err(CliError::Input("--workers must be at least 1".into()));
        }
        Ok(Settings {
            annotations: self.annotations.or(file.annotations),
            proposals: self.proposals.or(file.proposals),
            out: self.out.or(file.out),
            seed: self.seed.or(file.seed).unwrap_or(0),
            epoch: self.epoch.or(file.epoch).unwrap_or(0),
            flip: self.flip || file.flip.unwrap_or(false),
            workers,
            mining,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file_override_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("run.json");
        std::fs::write(&cfg, r#"{"seed": 5, "epoch": 2, "neg_max": 4, "annotations": "a.json"}"#).unwrap();
        let s = Flags {
            config: Some(cfg),
            seed: Some(9),
            ..Flags::default()
        }
        .resolve()
        .unwrap();
        assert_eq!((s.seed, s.epoch), (9, 2));
        assert_eq!(s.mining.negatives_per_image, 4);
        assert_eq!(s.mining.negatives.min_proposals, 2);
        assert_eq!(s.annotations.unwrap(), dir.path().join("a.json"));
        assert_eq!(s.mining.pyramid, Pyramid::three_scale());
    }

    #[test]
    fn unknown_keys_and_bad_values_are_input_errors() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("run.json");
        std::fs::write(&cfg, r#"{"sed": 5}"#).unwrap();
        let flags = Flags {
            config: Some(cfg),
            ..Flags::default()
        };
        assert!(matches!(flags.resolve(), Err(CliError::Input(_))));
        let zero_m = Flags {
            min_proposals: Some(0),
            ..Flags::default()
        };
        assert!(matches!(zero_m.resolve(), Err(CliError::Lib(_))));
    }
}
