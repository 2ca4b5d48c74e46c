//! Run configuration: a TOML document whose keys may be written either as
//! sections or dotted (`train.lr0 = 0.01`). A top-level `seed` is the
//! default for every per-section seed left unset.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use combolab::data::{load_dataset, synth_generate, Dataset};
use combolab::discretize::{DiscretizationRule, DiscretizationSpec};
use combolab::model::BackboneConfig;
use combolab::train::TrainConfig;

use crate::error::CliError;

/// File name of the resolved configuration written next to every output.
pub const CONFIG_ECHO: &str = "config.toml";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    pub dataset: DatasetSection,
    pub discretization: DiscretizationSection,
    pub backbone: BackboneSection,
    pub train: TrainConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            output_dir: PathBuf::from("combolab-out"),
            dataset: DatasetSection::default(),
            discretization: DiscretizationSection::default(),
            backbone: BackboneSection::default(),
            train: TrainConfig::default(),
        }
    }
}

/// Either a file (`.csv`, otherwise binary) or a synthetic draw.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    pub n: usize,
    pub shape: Vec<usize>,
    pub noise_sd: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl Default for DatasetSection {
    fn default() -> Self {
        DatasetSection {
            path: None,
            n: 500,
            shape: vec![8],
            noise_sd: 0.1,
            seed: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiscretizationSection {
    pub rule: DiscretizationRule,
    pub num_classes: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub score_range: Option<(f64, f64)>,
}

impl Default for DiscretizationSection {
    fn default() -> Self {
        DiscretizationSection {
            rule: DiscretizationRule::CeilHalf,
            num_classes: 5,
            score_range: None,
        }
    }
}

/// Overrides on top of [`BackboneConfig::small`] for the dataset's shape.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackboneSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stage_widths: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub se_after_stage: Option<Vec<bool>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reduction: Option<usize>,
    pub kernel_size: usize,
    pub classification_head: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl Default for BackboneSection {
    fn default() -> Self {
        BackboneSection {
            stage_widths: None,
            se_after_stage: None,
            reduction: None,
            kernel_size: 3,
            classification_head: true,
            seed: None,
        }
    }
}

impl RunConfig {
    /// Parses `path`. Relative dataset paths resolve against its directory
    /// and are stored absolute so the echo reruns from anywhere.
    pub fn load(path: &Path) -> Result<RunConfig, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = RunConfig::parse(&text)
            .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        if let Some(p) = &cfg.dataset.path {
            if p.is_relative() {
                let base = path.parent().unwrap_or(Path::new(""));
                let joined = base.join(p);
                cfg.dataset.path = Some(std::path::absolute(&joined).unwrap_or(joined));
            }
        }
        Ok(cfg)
    }

    /// Parses and fills every seed left unset from the top-level one.
    pub fn parse(text: &str) -> Result<RunConfig, String> {
        let raw: toml::Table = toml::from_str(text).map_err(|e| e.to_string())?;
        let train_seed_set = raw
            .get("train")
            .and_then(|t| t.as_table())
            .is_some_and(|t| t.contains_key("seed"));
        let mut cfg: RunConfig = toml::Value::Table(raw).try_into().map_err(|e: toml::de::Error| e.to_string())?;
        if !train_seed_set {
            cfg.train.seed = cfg.seed;
        }
        cfg.dataset.seed.get_or_insert(cfg.seed);
        cfg.backbone.seed.get_or_insert(cfg.seed);
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("run config serializes")
    }

    pub fn discretization(&self) -> DiscretizationSpec {
        DiscretizationSpec {
            rule: self.discretization.rule,
            num_classes: self.discretization.num_classes,
            score_range: self.discretization.score_range,
        }
    }

    pub fn load_dataset(&self) -> Result<Dataset, CliError> {
        let d = &self.dataset;
        Ok(match &d.path {
            Some(p) => load_dataset(p)?,
            None => synth_generate(d.n, &d.shape, d.noise_sd, d.seed.unwrap_or(self.seed))?,
        })
    }

    pub fn backbone(&self, input_shape: &[usize]) -> BackboneConfig {
        let b = &self.backbone;
        let mut cfg = BackboneConfig::small(input_shape.to_vec(), self.discretization.num_classes);
        if let Some(w) = &b.stage_widths {
            cfg.se_after_stage = vec![true; w.len()];
            cfg.stage_widths = w.clone();
        }
        if let Some(se) = &b.se_after_stage {
            cfg.se_after_stage = se.clone();
        }
        if let Some(r) = b.reduction {
            cfg.reduction = r;
        }
        cfg.kernel_size = b.kernel_size;
        cfg.classification_head = b.classification_head;
        cfg.seed = b.seed.unwrap_or(self.seed);
        cfg
    }
}
