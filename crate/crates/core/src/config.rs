//! Run configuration shared by every pipeline command.

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::atlas::BoneParams;
use crate::error::{Error, Result};
use crate::features::FeatureParams;

/// File name of the resolved config echoed into output directories.
pub const CONFIG_ECHO: &str = "config.json";

/// How the atlas reference slice is picked among the atlas slices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ReferencePolicy {
    /// Seeded draw over the slices in manifest order.
    #[default]
    Random,
    /// Fixed position in manifest order.
    Index(usize),
}

impl ReferencePolicy {
    /// Resolve to an index in `0..n`.
    pub fn choose(&self, seed: u64, n: usize) -> Result<usize> {
        if n == 0 {
            return Err(Error::InvalidInput("no slices to choose an atlas reference from".into()));
        }
        match *self {
            ReferencePolicy::Random => Ok(ChaCha8Rng::seed_from_u64(seed).random_range(0..n)),
            ReferencePolicy::Index(i) if i < n => Ok(i),
            ReferencePolicy::Index(i) => Err(Error::Config(format!(
                "atlas reference index {i} out of range for {n} slices"
            ))),
        }
    }
}

/// Optional default locations; command-line arguments take precedence.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Paths {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub manifest: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub atlas: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub features: FeatureParams,
    pub rounds: usize,
    pub erosion_radius: usize,
    pub bone: BoneParams,
    pub atlas_reference: ReferencePolicy,
    pub paths: Paths,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            features: FeatureParams::default(),
            rounds: 500,
            erosion_radius: 2,
            bone: BoneParams::default(),
            atlas_reference: ReferencePolicy::Random,
            paths: Paths::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: RunConfig =
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.features.validate()?;
        if self.rounds == 0 {
            return Err(Error::Config("rounds must be at least 1".into()));
        }
        if self.bone.min_area > self.bone.max_area {
            return Err(Error::Config("bone min_area exceeds max_area".into()));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    /// Write the resolved config as `dir/config.json`.
    pub fn echo(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(CONFIG_ECHO);
        fs::write(&path, self.to_json()?).map_err(|e| Error::io(&path, e))
    }
}
