//! Datasets, evaluation splits and augmentation.

mod io;
mod split;
mod synth;

use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub use io::{load_binary, load_csv, load_dataset, write_binary, write_csv, write_dataset, DATASET_MAGIC, DATASET_VERSION};
pub use split::{kfold, split_60_40, FoldPlan};
pub use synth::{synth_generate, synth_latent, synth_projection, SYNTH_GAIN};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Csv,
    Binary,
    Synthetic,
}

/// `N` samples of one fixed shape, row-major and contiguous.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    sample_shape: Vec<usize>,
    features: Vec<f64>,
    scores: Vec<f64>,
    ids: Vec<String>,
    provenance: Provenance,
}

impl Dataset {
    pub fn new(
        sample_shape: Vec<usize>,
        features: Vec<f64>,
        scores: Vec<f64>,
        ids: Vec<String>,
        provenance: Provenance,
    ) -> Result<Self> {
        if sample_shape.is_empty() || sample_shape.contains(&0) {
            return Err(Error::Input(format!("invalid sample shape {sample_shape:?}")));
        }
        let width: usize = sample_shape.iter().product();
        if features.len() != scores.len() * width {
            return Err(Error::Input(format!(
                "{} feature values for {} samples of shape {sample_shape:?}",
                features.len(),
                scores.len()
            )));
        }
        if ids.len() != scores.len() {
            return Err(Error::Input(format!("{} ids for {} samples", ids.len(), scores.len())));
        }
        if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
            return Err(Error::Input(format!("score of sample {i} is not finite")));
        }
        if let Some(j) = features.iter().position(|x| !x.is_finite()) {
            return Err(Error::Input(format!("feature {} of sample {} is not finite", j % width, j / width)));
        }
        Ok(Dataset {
            sample_shape,
            features,
            scores,
            ids,
            provenance,
        })
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn sample_shape(&self) -> &[usize] {
        &self.sample_shape
    }

    /// Elements per sample.
    pub fn width(&self) -> usize {
        self.sample_shape.iter().product()
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn sample(&self, i: usize) -> &[f64] {
        let w = self.width();
        &self.features[i * w..(i + 1) * w]
    }

    /// Rows `idx` in the given order; provenance is kept.
    pub fn subset(&self, idx: &[usize]) -> Dataset {
        let mut features = Vec::with_capacity(idx.len() * self.width());
        for &i in idx {
            features.extend_from_slice(self.sample(i));
        }
        Dataset {
            sample_shape: self.sample_shape.clone(),
            features,
            scores: idx.iter().map(|&i| self.scores[i]).collect(),
            ids: idx.iter().map(|&i| self.ids[i].clone()).collect(),
            provenance: self.provenance,
        }
    }

    /// `[n, ...sample_shape]` tensor of rows `idx`.
    pub fn batch(&self, idx: &[usize]) -> Result<Tensor> {
        let mut data = Vec::with_capacity(idx.len() * self.width());
        for &i in idx {
            data.extend_from_slice(self.sample(i));
        }
        let mut shape = vec![idx.len()];
        shape.extend_from_slice(&self.sample_shape);
        Tensor::new(shape, data)
    }

    /// All rows as one batch.
    pub fn tensor(&self) -> Result<Tensor> {
        let mut shape = vec![self.len()];
        shape.extend_from_slice(&self.sample_shape);
        Tensor::new(shape, self.features.clone())
    }
}

/// Generic stand-in for image-specific augmentation: per-element scale
/// jitter `U[-j, j]` followed by additive `N(0, noise_sd²)`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentConfig {
    pub noise_sd: f64,
    pub scale_jitter: f64,
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) {
            return Err(Error::Config(format!("augment.noise_sd must be ≥ 0, got {}", self.noise_sd)));
        }
        if !(0.0..1.0).contains(&self.scale_jitter) {
            return Err(Error::Config(format!(
                "augment.scale_jitter must lie in [0, 1), got {}",
                self.scale_jitter
            )));
        }
        Ok(())
    }

    pub fn is_identity(&self) -> bool {
        self.noise_sd == 0.0 && self.scale_jitter == 0.0
    }
}

/// Perturbs one sample's features. Scores never pass through here.
pub fn augment<R: Rng + ?Sized>(sample: &[f64], cfg: &AugmentConfig, rng: &mut R) -> Result<Vec<f64>> {
    cfg.validate()?;
    if cfg.is_identity() {
        return Ok(sample.to_vec());
    }
    let noise = Normal::new(0.0, cfg.noise_sd).map_err(|e| Error::Config(e.to_string()))?;
    let jitter = Uniform::new_inclusive(-cfg.scale_jitter, cfg.scale_jitter)
        .map_err(|e| Error::Config(e.to_string()))?;
    Ok(sample
        .iter()
        .map(|&x| x * (1.0 + jitter.sample(rng)) + noise.sample(rng))
        .collect())
}
