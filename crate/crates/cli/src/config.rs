//! Run configuration: one TOML file, every field optional, flags override.

use std::path::{Path, PathBuf};

use robkit_core::annotate::{AnnotationConfig, DEFAULT_TEST_FRACTION};
use robkit_core::baselines::{BaselineConfig, LossKind, SgdConfig, DEFAULT_MAX_FEATURES};
use robkit_core::tinymodel::{TinyConfig, TrainConfig};
use robkit_core::tinymodel::vocab::DEFAULT_VOCAB_CAP;
use robkit_llm::EndpointConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Single seed for splitting, training and shot sampling. Overrides
    /// the per-section seed fields.
    pub seed: u64,
    pub paths: Paths,
    pub annotate: AnnotationConfig,
    pub split: SplitSection,
    pub baseline: BaselineSection,
    pub tiny: TinySection,
    pub llm: Option<LlmSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// Directory of `<pubmed_id>.txt` / `.xml` articles.
    pub articles: PathBuf,
    /// Directory of review JSON files, or a single file.
    pub reviews: PathBuf,
    /// Every output goes under this directory.
    pub run_dir: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            articles: "data/toy/articles".into(),
            reviews: "data/toy/reviews".into(),
            run_dir: "runs/default".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSection {
    pub test_fraction: f64,
}

impl Default for SplitSection {
    fn default() -> Self {
        SplitSection {
            test_fraction: DEFAULT_TEST_FRACTION,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineSection {
    /// Models trained by `pipeline`.
    pub kinds: Vec<LossKind>,
    pub max_features: usize,
    pub l2: f64,
    pub c: f64,
    pub sgd: SgdConfig,
    pub per_bias_type: bool,
    pub runs: usize,
}

impl Default for BaselineSection {
    fn default() -> Self {
        let d = BaselineConfig::default();
        BaselineSection {
            kinds: vec![LossKind::Logistic, LossKind::Hinge],
            max_features: DEFAULT_MAX_FEATURES,
            l2: d.l2,
            c: d.c,
            sgd: d.sgd,
            per_bias_type: false,
            runs: 1,
        }
    }
}

impl BaselineSection {
    pub fn config(&self, kind: LossKind, seed: u64) -> BaselineConfig {
        BaselineConfig {
            kind,
            max_features: self.max_features,
            l2: self.l2,
            c: self.c,
            sgd: SgdConfig { seed, ..self.sgd },
            per_bias_type: self.per_bias_type,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum TinyTask {
    Ext,
    Gen,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TinySection {
    /// Tasks trained by `pipeline`; empty disables the tiny models.
    pub tasks: Vec<TinyTask>,
    pub model: TinyConfig,
    pub train: TrainConfig,
    pub vocab_cap: usize,
    pub runs: usize,
}

impl Default for TinySection {
    fn default() -> Self {
        TinySection {
            tasks: vec![TinyTask::Ext, TinyTask::Gen],
            model: TinyConfig::default(),
            train: TrainConfig::default(),
            vocab_cap: DEFAULT_VOCAB_CAP,
            runs: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LlmSection {
    pub endpoint: EndpointConfig,
    pub shots: usize,
}

impl Default for LlmSection {
    fn default() -> Self {
        LlmSection {
            endpoint: EndpointConfig::default(),
            shots: 0,
        }
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 13,
            paths: Paths::default(),
            annotate: AnnotationConfig::default(),
            split: SplitSection::default(),
            baseline: BaselineSection::default(),
            tiny: TinySection::default(),
            llm: None,
        }
    }
}

/// Flag values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub threshold: Option<f64>,
    pub window: Option<usize>,
    pub run_dir: Option<PathBuf>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>, overrides: &Overrides) -> Result<Self, CliError> {
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| CliError::from_io(p, e))?;
                toml::from_str(&text).map_err(|e| CliError::Validation(format!("{}: {e}", p.display())))?
            }
            None => RunConfig::default(),
        };
        if let Some(s) = overrides.seed {
            cfg.seed = s;
        }
        if let Some(t) = overrides.threshold {
            cfg.annotate.threshold = t;
        }
        if let Some(w) = overrides.window {
            cfg.annotate.window = w;
        }
        if let Some(d) = &overrides.run_dir {
            cfg.paths.run_dir = d.clone();
        }
        cfg.propagate_seed();
        cfg.validate()?;
        Ok(cfg)
    }

    fn propagate_seed(&mut self) {
        self.baseline.sgd.seed = self.seed;
        self.tiny.model.seed = self.seed;
        self.tiny.train.seed = self.seed;
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let t = self.annotate.threshold;
        if !(0.0..1.0).contains(&t) {
            return Err(CliError::Validation(format!("threshold must be in [0, 1), got {t}")));
        }
        let f = self.split.test_fraction;
        if !(f > 0.0 && f < 1.0) {
            return Err(CliError::Validation(format!("test_fraction must be in (0, 1), got {f}")));
        }
        if self.baseline.runs == 0 || self.tiny.runs == 0 {
            return Err(CliError::Validation("runs must be at least 1".into()));
        }
        Ok(())
    }

    /// SHA-256 over the canonical JSON form of the resolved configuration.
    /// The run directory is left out: it says where outputs go, not how they
    /// were made.
    pub fn hash(&self) -> String {
        let mut cfg = self.clone();
        cfg.paths.run_dir = PathBuf::new();
        let json = serde_json::to_string(&cfg).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let cfg: RunConfig = toml::from_str("").unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.annotate.threshold, 0.5);
        assert_eq!(cfg.annotate.window, 3);
        assert_eq!(cfg.baseline.max_features, 1000);
    }

    #[test]
    fn partial_sections_and_overrides() {
        let cfg: RunConfig = toml::from_str(
            "seed = 4\n[tiny.train]\nepochs = 3\n[baseline]\nkinds = [\"hinge\"]\n[llm.endpoint]\nurl = \"http://x\"\n",
        )
        .unwrap();
        assert_eq!(cfg.tiny.train.epochs, 3);
        assert_eq!(cfg.tiny.train.batch_size, TrainConfig::default().batch_size);
        assert_eq!(cfg.baseline.kinds, [LossKind::Hinge]);
        assert_eq!(cfg.llm.as_ref().unwrap().endpoint.temperature, 0.0);
        assert!(toml::from_str::<RunConfig>("sead = 1").is_err());
    }

    #[test]
    fn hash_tracks_content() {
        let a = RunConfig::default();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.annotate.window = 2;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
        let mut c = a.clone();
        c.paths.run_dir = "elsewhere".into();
        assert_eq!(a.hash(), c.hash());
    }
}
