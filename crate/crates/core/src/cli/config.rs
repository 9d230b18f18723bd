use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::backends::{BackendDescriptor, BackendKind};
use crate::error::{Error, Result};
use crate::pipeline::PipelineConfig;
use crate::seed::derive_seed;
use crate::synth::{CorruptionSpec, PhantomSpec};
use crate::synth::corpus::read_json;
use crate::tipmetrics::EvalOptions;
use crate::vmflg::FragmentSpec;

pub const CLI_SCHEMA_VERSION: u32 = 1;

/// Environment variable that replaces the configured seed.
pub const SEED_ENV: &str = "LINETRACE_SEED";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusSection {
    pub dir: PathBuf,
    pub count: usize,
    pub phantom: PhantomSpec,
}

impl Default for CorpusSection {
    fn default() -> Self {
        CorpusSection {
            dir: PathBuf::from("corpus"),
            count: 20,
            phantom: PhantomSpec::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CliConfig {
    pub schema_version: u32,
    /// Root of every random draw. Resolution copies it, or a value derived
    /// from it, into each nested seed.
    pub seed: u64,
    pub corpus: CorpusSection,
    /// Default damage for oracle backends whose parameters omit it.
    pub corruption: CorruptionSpec,
    pub fragment: FragmentSpec,
    pub fragments_dir: PathBuf,
    pub pipeline: PipelineConfig,
    pub results_dir: PathBuf,
    pub report_dir: PathBuf,
    pub eval: EvalOptions,
}

impl Default for CliConfig {
    fn default() -> Self {
        CliConfig {
            schema_version: CLI_SCHEMA_VERSION,
            seed: 0,
            corpus: CorpusSection::default(),
            corruption: CorruptionSpec::default(),
            fragment: FragmentSpec::default(),
            fragments_dir: PathBuf::from("fragments"),
            pipeline: PipelineConfig::default(),
            results_dir: PathBuf::from("results"),
            report_dir: PathBuf::from("report"),
            eval: EvalOptions::default(),
        }
    }
}

// Seed streams for the nested specs.
const PHANTOM_STREAM: u64 = 11;
const CORRUPTION_STREAM: u64 = 12;
const FRAGMENT_STREAM: u64 = 13;
const PIPELINE_STREAM: u64 = 14;

impl CliConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let cfg: CliConfig = read_json(path)?;
        if cfg.schema_version != CLI_SCHEMA_VERSION {
            return Err(Error::Param(format!(
                "config schema {} (expected {CLI_SCHEMA_VERSION})",
                cfg.schema_version
            )));
        }
        Ok(cfg)
    }

    /// Applies the seed override, fans the seed out and fills oracle
    /// corruption defaults. The result is what commands echo and use.
    pub fn resolve(mut self, seed_override: Option<u64>) -> Result<Self> {
        if let Some(s) = seed_override {
            self.seed = s;
        }
        self.corpus.phantom.seed = derive_seed(self.seed, PHANTOM_STREAM);
        self.corruption.seed = derive_seed(self.seed, CORRUPTION_STREAM);
        self.fragment.seed = derive_seed(self.seed, FRAGMENT_STREAM);
        self.pipeline.seed = derive_seed(self.seed, PIPELINE_STREAM);
        let corruption = serde_json::to_value(&self.corruption)?;
        for desc in [&mut self.pipeline.stage1.backend, &mut self.pipeline.stage2.backend] {
            fill_oracle(desc, &corruption);
        }
        self.corpus.phantom.validate()?;
        self.corruption.validate()?;
        self.fragment.validate()?;
        self.pipeline.validate()?;
        if !(self.eval.pixel_spacing_mm > 0.0) {
            return Err(Error::param("pixel spacing must be positive"));
        }
        Ok(self)
    }
}

fn fill_oracle(desc: &mut BackendDescriptor, corruption: &serde_json::Value) {
    if desc.kind == BackendKind::Oracle && !desc.params.contains_key("corruption") {
        desc.params.insert("corruption".into(), corruption.clone());
    }
}

/// `LINETRACE_SEED`, if set. A malformed value is an error rather than
/// silently ignored.
pub fn seed_from_env() -> Result<Option<u64>> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| Error::Param(format!("{SEED_ENV}={v:?} is not an unsigned integer"))),
        Err(std::env::VarError::NotPresent) => Ok(None),
        Err(e) => Err(Error::Param(format!("{SEED_ENV}: {e}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_and_schema_rejected() {
        assert!(serde_json::from_str::<CliConfig>(r#"{"sede": 1}"#).is_err());
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        std::fs::write(&p, r#"{"schema_version": 2}"#).unwrap();
        assert!(matches!(CliConfig::load(&p), Err(Error::Param(_))));
        std::fs::write(&p, r#"{"seed": 4}"#).unwrap();
        assert_eq!(CliConfig::load(&p).unwrap().seed, 4);
    }

    #[test]
    fn resolution_fans_out_seed() {
        let a = CliConfig::default().resolve(Some(7)).unwrap();
        let b = CliConfig { seed: 7, ..CliConfig::default() }.resolve(None).unwrap();
        assert_eq!(a, b);
        let c = CliConfig::default().resolve(Some(8)).unwrap();
        assert_ne!(a.pipeline.seed, c.pipeline.seed);
        assert_ne!(a.corpus.phantom.seed, c.corpus.phantom.seed);
        assert_eq!(a.clone().resolve(None).unwrap(), a);
    }

    #[test]
    fn oracle_backends_get_corruption() {
        let mut cfg = CliConfig::default();
        cfg.pipeline.stage1.backend = BackendDescriptor::new(BackendKind::Oracle);
        let r = cfg.resolve(None).unwrap();
        let params: crate::backends::oracle::OracleParams = r.pipeline.stage1.backend.params_as().unwrap();
        assert_eq!(params.corruption, r.corruption);
        assert!(!r.pipeline.stage2.backend.params.contains_key("corruption"));
    }
}
