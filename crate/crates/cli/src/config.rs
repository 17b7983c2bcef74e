use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use selfhar::baselines::EnCoConfig;
use selfhar::datakit::{SplitSpec, SynthConfig};
use selfhar::evalkit::DEFAULT_RESAMPLES;
use selfhar::pipeline::{Configuration, PipelineConfig};
use selfhar::{Error, Result};

/// Where windows come from: a CSV file or the built-in generator.
#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Csv(PathBuf),
    Synthetic(SynthConfig),
}

impl DataSource {
    /// `synthetic:` optionally followed by comma-separated `field=value`
    /// overrides of the generator settings; anything else is a CSV path.
    pub fn parse(spec: &str, field: &str) -> Result<Self> {
        let Some(rest) = spec.strip_prefix("synthetic:") else {
            return Ok(DataSource::Csv(PathBuf::from(spec)));
        };
        let mut map = Map::new();
        for pair in rest.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (k, v) = pair
                .split_once('=')
                .ok_or_else(|| Error::config(format!("{field}: expected key=value, got {pair:?}")))?;
            let value = serde_json::from_str(v).unwrap_or_else(|_| Value::String(v.to_string()));
            map.insert(k.trim().to_string(), value);
        }
        let cfg: SynthConfig = serde_json::from_value(Value::Object(map))
            .map_err(|e| Error::config(format!("{field}: {e}")))?;
        cfg.validate().map_err(|e| Error::config(format!("{field}: {e}")))?;
        Ok(DataSource::Synthetic(cfg))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    Standard,
    Linear,
    Both,
}

impl Protocol {
    pub fn standard(self) -> bool {
        matches!(self, Protocol::Standard | Protocol::Both)
    }

    pub fn linear(self) -> bool {
        matches!(self, Protocol::Linear | Protocol::Both)
    }
}

/// Experiment description read from JSON. Every field has a default; the
/// labeled source is required.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub pipeline: PipelineConfig,
    /// CSV path or `synthetic:` spec.
    pub labeled: Option<String>,
    pub unlabeled: Option<String>,
    pub split: SplitSpec,
    pub protocol: Protocol,
    /// Subsample this many training windows per class before running.
    pub labels_per_class: Option<usize>,
    pub n_resamples: usize,
    pub out: PathBuf,
    /// Seeds of repeated runs (ablate, limited, intensity-study).
    pub seeds: Vec<u64>,
    /// Label budgets of the limited-label sweep.
    pub n_per_class: Vec<usize>,
    /// Unlabeled windows per intensity subset; defaults to a third of the
    /// pool, rounded down to a multiple of 3.
    pub intensity_subset_size: Option<usize>,
    /// Also train and report the En-Co-Training baseline in `run`.
    pub baseline: Option<EnCoConfig>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            pipeline: PipelineConfig::default(),
            labeled: None,
            unlabeled: None,
            split: SplitSpec::default(),
            protocol: Protocol::Standard,
            labels_per_class: None,
            n_resamples: DEFAULT_RESAMPLES,
            out: PathBuf::from("runs"),
            seeds: vec![0, 1, 2, 3, 4],
            n_per_class: vec![2, 5, 10, 50, 100],
            intensity_subset_size: None,
            baseline: None,
        }
    }
}

/// Which command a config is validated for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Purpose {
    /// Single run of `pipeline.configuration`.
    Run,
    /// Commands that run configurations needing the unlabeled pool.
    Study,
    /// Only the labeled source is read.
    LabeledOnly,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::config(format!("{}: {e}", path.display())))
    }

    pub fn labeled_source(&self) -> Result<DataSource> {
        let spec = self
            .labeled
            .as_deref()
            .ok_or_else(|| Error::config("labeled: a labeled data source is required"))?;
        DataSource::parse(spec, "labeled")
    }

    pub fn unlabeled_source(&self) -> Result<Option<DataSource>> {
        self.unlabeled.as_deref().map(|s| DataSource::parse(s, "unlabeled")).transpose()
    }

    /// Field-level checks; nothing is computed before these pass.
    pub fn validate(&self, purpose: Purpose) -> Result<()> {
        self.pipeline.validate().map_err(|e| Error::config(format!("pipeline: {e}")))?;
        self.split.validate().map_err(|e| Error::config(format!("split: {e}")))?;
        self.labeled_source()?;
        self.unlabeled_source()?;
        let needs_u = match purpose {
            Purpose::Run => self.pipeline.configuration.needs_unlabeled(),
            Purpose::Study => true,
            Purpose::LabeledOnly => false,
        };
        if needs_u && self.unlabeled.is_none() {
            let who = match purpose {
                Purpose::Run => format!("configuration {}", self.pipeline.configuration.name()),
                _ => "this command".to_string(),
            };
            return Err(Error::config(format!("unlabeled: {who} requires an unlabeled data source")));
        }
        if self.n_resamples == 0 {
            return Err(Error::config("n_resamples: must be at least 1"));
        }
        if self.labels_per_class == Some(0) {
            return Err(Error::config("labels_per_class: must be at least 1"));
        }
        if purpose == Purpose::Study {
            if self.seeds.is_empty() {
                return Err(Error::config("seeds: at least one seed is required"));
            }
            if self.n_per_class.contains(&0) {
                return Err(Error::config("n_per_class: budgets must be at least 1"));
            }
        }
        if let Some(b) = &self.baseline {
            b.validate().map_err(|e| Error::config(format!("baseline: {e}")))?;
        }
        if self.intensity_subset_size.is_some_and(|n| n == 0 || n % 3 != 0) {
            return Err(Error::config("intensity_subset_size: must be a positive multiple of 3"));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    /// First 16 hex digits of the SHA-256 of the resolved config, ignoring the
    /// output directory.
    pub fn content_hash(&self) -> Result<String> {
        let mut c = self.clone();
        c.out = PathBuf::new();
        let digest = Sha256::digest(serde_json::to_vec(&c)?);
        Ok(digest.iter().take(8).map(|b| format!("{b:02x}")).collect())
    }

    /// `<out>/<prefix>-<hash>`.
    pub fn run_dir(&self, prefix: &str) -> Result<PathBuf> {
        Ok(self.out.join(format!("{prefix}-{}", self.content_hash()?)))
    }

    pub fn with_configuration(&self, configuration: Configuration, seed: u64) -> Self {
        let mut c = self.clone();
        c.pipeline.configuration = configuration;
        c.pipeline.seed = seed;
        c
    }
}
