use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dsp::AugmentationRecipe;
use crate::error::{Error, Result};
use crate::features::FeatureConfig;
use crate::nnet::{Architecture, TrainConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StageName {
    Stage1,
    Stage2,
    Stage3,
    Scratch,
}

impl fmt::Display for StageName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StageName::Stage1 => "stage1",
            StageName::Stage2 => "stage2",
            StageName::Stage3 => "stage3",
            StageName::Scratch => "scratch",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TransferMode {
    None,
    Hidden,
    Full,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExtractorMode {
    TrainNew,
    Inherit,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageConfig {
    pub name: StageName,
    /// Training manifest, relative to the config file.
    pub manifest: PathBuf,
    /// Key into [`PipelineConfig::phone_sets`].
    pub phone_set: String,
    #[serde(default)]
    pub recipe: AugmentationRecipe,
    pub transfer: TransferMode,
    pub extractor: ExtractorMode,
    pub train: TrainConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestSetConfig {
    pub name: String,
    pub manifest: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    #[serde(default)]
    pub features: FeatureConfig,
    pub architecture: Architecture,
    /// Directory holding `rirs/` and `noises/` pools for augmentation recipes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pools: Option<PathBuf>,
    pub phone_sets: BTreeMap<String, Vec<String>>,
    pub stages: Vec<StageConfig>,
    /// Training settings for a target-domain stage that has no predecessor.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scratch_train: Option<TrainConfig>,
    pub test_sets: Vec<TestSetConfig>,
    /// Stage 3 without Stage 2 keeps the Stage 1 extractor (true) or trains its own.
    #[serde(default = "default_true")]
    pub inherit_extractor_without_stage2: bool,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("runs")
}

fn default_true() -> bool {
    true
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// Reads a config and makes its relative paths absolute against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text)?;
        cfg.resolve_paths(path.parent().unwrap_or(Path::new(".")));
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.out_dir);
        if let Some(p) = self.pools.as_mut() {
            fix(p);
        }
        for s in &mut self.stages {
            fix(&mut s.manifest);
        }
        for t in &mut self.test_sets {
            fix(&mut t.manifest);
        }
    }

    pub fn phones(&self, key: &str) -> Result<&[String]> {
        self.phone_sets
            .get(key)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::Config(format!("unknown phone set `{key}`")))
    }

    pub fn stage(&self, name: StageName) -> Option<&StageConfig> {
        self.stages.iter().find(|s| s.name == name)
    }

    pub fn validate(&self) -> Result<()> {
        self.features.validate()?;
        self.architecture.validate()?;
        if self.stages.is_empty() {
            return Err(Error::Config("no stages configured".into()));
        }
        if self.test_sets.is_empty() {
            return Err(Error::Config("no test sets configured".into()));
        }
        for (key, phones) in &self.phone_sets {
            if phones.is_empty() {
                return Err(Error::Config(format!("phone set `{key}` is empty")));
            }
        }
        if let Some(t) = &self.scratch_train {
            t.validate()?;
        }
        for (i, s) in self.stages.iter().enumerate() {
            s.train.validate()?;
            s.recipe.validate()?;
            self.phones(&s.phone_set)?;
            let first = i == 0;
            match (s.name, s.transfer) {
                (StageName::Stage1 | StageName::Scratch, TransferMode::None) => {}
                (StageName::Stage1 | StageName::Scratch, _) => {
                    return Err(Error::Incompatible(format!(
                        "{} must not transfer weights",
                        s.name
                    )))
                }
                (StageName::Stage3, TransferMode::None) => {
                    return Err(Error::Incompatible(
                        "stage3 needs a transferred initialization".into(),
                    ))
                }
                _ => {}
            }
            if first && (s.transfer != TransferMode::None || s.extractor == ExtractorMode::Inherit)
            {
                return Err(Error::Incompatible(format!(
                    "{} has no predecessor to transfer or inherit from",
                    s.name
                )));
            }
            if !first && s.transfer == TransferMode::None {
                return Err(Error::Incompatible(format!(
                    "{} discards its predecessor",
                    s.name
                )));
            }
            if let Some(prev) = i.checked_sub(1).map(|j| &self.stages[j]) {
                if s.transfer == TransferMode::Full
                    && self.phones(&prev.phone_set)? != self.phones(&s.phone_set)?
                {
                    return Err(Error::Incompatible(format!(
                        "full transfer from {} to {} changes the phone set",
                        prev.name, s.name
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Which of the three stages a setup trains.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AblationSpec {
    pub name: String,
    pub stages: [bool; 3],
}

impl AblationSpec {
    pub fn new(name: impl Into<String>, stages: [bool; 3]) -> Result<Self> {
        if !stages.iter().any(|&s| s) {
            return Err(Error::Config(
                "an ablation setup needs at least one stage".into(),
            ));
        }
        Ok(Self {
            name: name.into(),
            stages,
        })
    }

    /// The six setups of the comparison table, in column order.
    pub fn table() -> Vec<AblationSpec> {
        [
            ("Baseline Broadcast", [false, true, false]),
            ("Baseline Oral History", [false, false, true]),
            ("Removing Stage 1", [false, true, true]),
            ("Removing Stage 2", [true, false, true]),
            ("Removing Stage 3", [true, true, false]),
            ("Proposed Approach", [true, true, true]),
        ]
        .into_iter()
        .map(|(n, s)| AblationSpec {
            name: n.into(),
            stages: s,
        })
        .collect()
    }

    /// `"all"`, or comma-separated setup names or stage lists such as `1+3`.
    pub fn parse_list(text: &str) -> Result<Vec<AblationSpec>> {
        if text.trim() == "all" {
            return Ok(Self::table());
        }
        let table = Self::table();
        text.split(',')
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .map(|t| {
                if let Some(s) = table.iter().find(|s| s.name.eq_ignore_ascii_case(t)) {
                    return Ok(s.clone());
                }
                let mut stages = [false; 3];
                for d in t.split('+') {
                    match d.trim() {
                        "1" => stages[0] = true,
                        "2" => stages[1] = true,
                        "3" => stages[2] = true,
                        other => return Err(Error::Config(format!("unknown setup `{other}`"))),
                    }
                }
                let name = table
                    .iter()
                    .find(|s| s.stages == stages)
                    .map_or_else(|| format!("Stages {t}"), |s| s.name.clone());
                AblationSpec::new(name, stages)
            })
            .collect::<Result<Vec<_>>>()
            .and_then(|v| {
                if v.is_empty() {
                    Err(Error::Config("empty setup list".into()))
                } else {
                    Ok(v)
                }
            })
    }
}
