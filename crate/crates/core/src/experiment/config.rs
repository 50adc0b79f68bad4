//! Experiment configuration, loaded from TOML or JSON.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::ExperimentError;
use crate::agents::{BcqConfig, DqnConfig};
use crate::dataset::Variant;
use crate::encoder::{AeConfig, TRAJECTORIES_PER_ENCODING};

/// Half-open seed range written `a..b`; `a..=b` is accepted as inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct SeedRange {
    pub start: u64,
    pub end: u64,
}

impl SeedRange {
    pub fn seeds(&self) -> Vec<u64> {
        (self.start..self.end).collect()
    }

    pub fn len(&self) -> usize {
        (self.end - self.start) as usize
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }
}

impl FromStr for SeedRange {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let err = || format!("seed range must look like 0..10 or 0..=9, got {s:?}");
        let (a, b, inclusive) = if let Some((a, b)) = s.split_once("..=") {
            (a, b, true)
        } else if let Some((a, b)) = s.split_once("..") {
            (a, b, false)
        } else {
            return Err(err());
        };
        let start: u64 = a.trim().parse().map_err(|_| err())?;
        let mut end: u64 = b.trim().parse().map_err(|_| err())?;
        if inclusive {
            end = end.checked_add(1).ok_or_else(err)?;
        }
        Ok(SeedRange { start, end })
    }
}

impl TryFrom<String> for SeedRange {
    type Error = String;

    fn try_from(s: String) -> Result<Self, String> {
        s.parse()
    }
}

impl From<SeedRange> for String {
    fn from(r: SeedRange) -> String {
        r.to_string()
    }
}

impl fmt::Display for SeedRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}..{}", self.start, self.end)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub collection_seed: u64,
    pub n_source_envs: usize,
    pub n_new_envs: usize,
    pub bcq_timesteps: u64,
    pub seeds: SeedRange,
    pub variants: Vec<Variant>,
    pub eval_episodes_per_seed: usize,
    /// Minimum transitions per source environment in the baseline buffer.
    pub budget_per_env: usize,
    pub collection_epsilon: f64,
    pub encoding_trajectories: usize,
    pub out_dir: PathBuf,
    pub dqn: DqnConfig,
    pub ae: AeConfig,
    pub bcq: BcqConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            collection_seed: 42,
            n_source_envs: 5,
            n_new_envs: 10,
            bcq_timesteps: 20_000,
            seeds: SeedRange { start: 0, end: 100 },
            variants: vec![Variant::Baseline, Variant::AugEncoding],
            eval_episodes_per_seed: 10,
            budget_per_env: 10_000,
            collection_epsilon: 0.1,
            encoding_trajectories: TRAJECTORIES_PER_ENCODING,
            out_dir: PathBuf::from("runs/default"),
            dqn: DqnConfig::default(),
            ae: AeConfig::default(),
            bcq: BcqConfig::default(),
        }
    }
}

impl ExperimentConfig {
    /// Parses TOML, or JSON when the file name ends in `.json`.
    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        let text = std::fs::read_to_string(path).map_err(|e| ExperimentError::Config(format!("{}: {e}", path.display())))?;
        let cfg = if path.extension().is_some_and(|e| e == "json") {
            Self::from_json(&text)?
        } else {
            Self::from_toml(&text)?
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_toml(text: &str) -> Result<Self, ExperimentError> {
        toml::from_str(text).map_err(|e| ExperimentError::Config(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self, ExperimentError> {
        serde_json::from_str(text).map_err(|e| ExperimentError::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |m: String| Err(ExperimentError::Config(m));
        if self.seeds.is_empty() {
            return bad(format!("seed range {} is empty", self.seeds));
        }
        if self.variants.is_empty() {
            return bad("no variants selected".into());
        }
        let mut seen = self.variants.clone();
        seen.sort_by_key(|v| v.code());
        seen.dedup();
        if seen.len() != self.variants.len() {
            return bad("variants repeat".into());
        }
        if self.n_source_envs == 0 || self.n_new_envs == 0 {
            return bad("need at least one source and one new environment".into());
        }
        if self.eval_episodes_per_seed == 0 || self.encoding_trajectories == 0 {
            return bad("episode and trajectory counts must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.collection_epsilon) {
            return bad("collection_epsilon must lie in [0, 1]".into());
        }
        self.dqn.validate().map_err(|e| ExperimentError::Config(format!("dqn: {e}")))?;
        self.bcq.validate().map_err(|e| ExperimentError::Config(format!("bcq: {e}")))?;
        Ok(())
    }

    /// SHA-256 of the canonical JSON form, as lowercase hex.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex(&Sha256::digest(json))
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
