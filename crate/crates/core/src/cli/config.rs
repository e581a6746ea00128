use std::path::Path;

use serde::{Deserialize, Serialize};

use super::bench::BenchConfig;
use crate::cascade::TrainConfig;
use crate::detect::ScanConfig;
use crate::error::{Error, Result};
use crate::eval::EvalConfig;
use crate::synth::SynthConfig;

/// One JSON document holding the settings of every subcommand. Missing
/// sections take their defaults; unknown keys are rejected.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Overrides the synthesis and training seeds when set.
    pub seed: Option<u64>,
    pub synth: SynthConfig,
    pub train: TrainConfig,
    /// Scan settings; `None` uses the ones stored in the model.
    pub scan: Option<ScanConfig>,
    pub eval: EvalConfig,
    pub bench: BenchConfig,
}

impl RunConfig {
    pub fn from_json(bytes: &[u8], origin: &Path) -> Result<Self> {
        serde_json::from_slice(bytes).map_err(|e| Error::invalid(format!("{}: {e}", origin.display())))
    }

    /// Reads `path`, or returns the defaults when no file is given.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let bytes = std::fs::read(p).map_err(|e| Error::io(p, e))?;
                Self::from_json(&bytes, p)
            }
        }
    }

    /// Pushes the global seed into the sections that use one.
    pub fn apply_seed(&mut self) {
        if let Some(s) = self.seed {
            self.synth.seed = s;
            self.train.seed = s;
            self.bench.seed = s;
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.synth.validate()?;
        self.train.validate()?;
        if let Some(s) = &self.scan {
            s.validate()?;
        }
        self.eval.validate()?;
        self.bench.validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_is_the_default() {
        let c = RunConfig::from_json(b"{}", Path::new("c.json")).unwrap();
        assert_eq!(c, RunConfig::default());
        assert_eq!(c.train.classes, 100);
        assert_eq!(c.train.levels, 6);
        assert_eq!(c.train.ensemble.members, 3);
        c.validate().unwrap();
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RunConfig::from_json(br#"{"trian": {}}"#, Path::new("c.json")).is_err());
        assert!(RunConfig::from_json(br#"{"train": {"clases": 4}}"#, Path::new("c.json")).is_err());
    }

    #[test]
    fn global_seed_reaches_every_section() {
        let mut c = RunConfig::from_json(br#"{"seed": 9, "train": {"classes": 4}}"#, Path::new("c.json")).unwrap();
        c.apply_seed();
        assert_eq!((c.synth.seed, c.train.seed, c.bench.seed), (9, 9, 9));
        assert_eq!(c.train.classes, 4);
    }

    #[test]
    fn round_trips() {
        let c = RunConfig {
            seed: Some(3),
            scan: Some(ScanConfig::default()),
            ..RunConfig::default()
        };
        let bytes = serde_json::to_vec(&c).unwrap();
        assert_eq!(RunConfig::from_json(&bytes, Path::new("c.json")).unwrap(), c);
    }
}
