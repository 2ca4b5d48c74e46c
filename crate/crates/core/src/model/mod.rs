//! A small configurable trunk with optional squeeze-and-excitation after each
//! stage, ending in a regression head (one score per sample) and a
//! classification head (`C` logits per sample) that share the trunk feature.
//!
//! Image-shaped inputs `[C₀,H,W]` go through same-padded convolutions and a
//! final global average pool; flat inputs `[D]` go through dense layers, with
//! SE acting on the `[N,width,1,1]` view.

mod checkpoint;
pub mod se;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub use checkpoint::{read_checkpoint, write_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use se::{se_block, se_excite, se_rescale, se_squeeze};

pub const DEFAULT_REDUCTION: usize = 16;

/// Identifier of the initialisation scheme recorded with every parameter set.
pub const INIT_SCHEME: &str = "he_normal_fan_in/zero_bias";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BackboneConfig {
    /// `[D]` for flat features or `[C₀, H, W]` for image-shaped tensors.
    pub input_shape: Vec<usize>,
    pub stage_widths: Vec<usize>,
    pub se_after_stage: Vec<bool>,
    pub reduction: usize,
    pub num_classes: usize,
    /// Drop the classification head to get a regression-only network.
    pub classification_head: bool,
    pub kernel_size: usize,
    pub seed: u64,
}

impl BackboneConfig {
    /// Two SE stages, small enough to train in seconds.
    pub fn small(input_shape: Vec<usize>, num_classes: usize) -> Self {
        let widths = if input_shape.len() == 3 { vec![8, 16] } else { vec![64, 32] };
        BackboneConfig {
            se_after_stage: vec![true; widths.len()],
            stage_widths: widths,
            input_shape,
            reduction: 4,
            num_classes,
            classification_head: true,
            kernel_size: 3,
            seed: 0,
        }
    }

    /// Four wide convolutional SE stages; a parameter budget comparable to a
    /// mid-sized image backbone. Counting only, not meant for CPU training.
    pub fn reference(num_classes: usize) -> Self {
        BackboneConfig {
            input_shape: vec![3, 224, 224],
            stage_widths: vec![256, 512, 1024, 1024],
            se_after_stage: vec![true; 4],
            reduction: DEFAULT_REDUCTION,
            num_classes,
            classification_head: true,
            kernel_size: 3,
            seed: 0,
        }
    }

    pub fn is_image(&self) -> bool {
        self.input_shape.len() == 3
    }

    pub fn feature_width(&self) -> usize {
        *self.stage_widths.last().expect("validated")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.input_shape.len() == 1 || self.input_shape.len() == 3)
            || self.input_shape.contains(&0)
        {
            return bad(format!(
                "input shape must be [D] or [C,H,W] with positive extents, got {:?}",
                self.input_shape
            ));
        }
        if self.stage_widths.is_empty() || self.stage_widths.contains(&0) {
            return bad(format!("need at least one positive stage width, got {:?}", self.stage_widths));
        }
        if self.se_after_stage.len() != self.stage_widths.len() {
            return bad(format!(
                "{} SE flags for {} stages",
                self.se_after_stage.len(),
                self.stage_widths.len()
            ));
        }
        if self.reduction == 0 {
            return bad("SE reduction ratio must be positive".into());
        }
        if self.classification_head && self.num_classes < 2 {
            return bad(format!("need at least 2 classes, got {}", self.num_classes));
        }
        if self.is_image() && self.kernel_size % 2 == 0 {
            return bad(format!("kernel size must be odd, got {}", self.kernel_size));
        }
        Ok(())
    }

    /// Names, shapes and init std of every parameter, in binding order.
    fn layout(&self) -> Vec<(String, Vec<usize>, f64)> {
        let he = |fan_in: usize| (2.0 / fan_in as f64).sqrt();
        let mut out = Vec::new();
        let mut prev = self.input_shape[0];
        for (i, (&w, &se)) in self.stage_widths.iter().zip(&self.se_after_stage).enumerate() {
            if self.is_image() {
                let k = self.kernel_size;
                out.push((format!("stage{i}.weight"), vec![w, prev, k, k], he(prev * k * k)));
            } else {
                out.push((format!("stage{i}.weight"), vec![prev, w], he(prev)));
            }
            out.push((format!("stage{i}.bias"), vec![w], 0.0));
            if se {
                let h = se::hidden_width(w, self.reduction);
                out.push((format!("stage{i}.se.w1"), vec![h, w], he(w)));
                out.push((format!("stage{i}.se.w2"), vec![w, h], he(h)));
            }
            prev = w;
        }
        out.push(("head.reg.weight".into(), vec![prev, 1], he(prev)));
        out.push(("head.reg.bias".into(), vec![1], 0.0));
        if self.classification_head {
            out.push(("head.cls.weight".into(), vec![prev, self.num_classes], he(prev)));
            out.push(("head.cls.bias".into(), vec![self.num_classes], 0.0));
        }
        out
    }

    /// Number of scalar parameters, computed without allocating them.
    pub fn param_count(&self) -> usize {
        self.layout()
            .iter()
            .map(|(_, s, _)| s.iter().product::<usize>())
            .sum()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub tensor: Tensor,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Parameters {
    pub entries: Vec<NamedTensor>,
    pub init: String,
    pub seed: u64,
}

impl Parameters {
    pub fn count(&self) -> usize {
        self.entries.iter().map(|e| e.tensor.numel()).sum()
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries.iter().find(|e| e.name == name).map(|e| &e.tensor)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.entries.iter_mut().find(|e| e.name == name).map(|e| &mut e.tensor)
    }

    /// All values concatenated in binding order.
    pub fn flatten(&self) -> Vec<f64> {
        self.entries.iter().flat_map(|e| e.tensor.data().iter().copied()).collect()
    }

    /// Inverse of [`Parameters::flatten`].
    pub fn assign_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.count() {
            return Err(Error::Contract(format!(
                "{} values for {} parameters",
                flat.len(),
                self.count()
            )));
        }
        let mut offset = 0;
        for e in &mut self.entries {
            let n = e.tensor.numel();
            e.tensor.data_mut().copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
        Ok(())
    }
}

/// Outputs of one forward pass.
pub struct HeadOutput<'t> {
    /// `[N]` regression scores.
    pub scores: Var<'t>,
    /// `[N×C]` class logits; `None` for a regression-only network.
    pub logits: Option<Var<'t>>,
    /// Pooled trunk feature `[N×F]` both heads read from.
    pub features: Var<'t>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub config: BackboneConfig,
    pub params: Parameters,
}

/// Builds a model with seeded variance-scaled initialisation.
pub fn build_backbone(config: &BackboneConfig) -> Result<Model> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let entries = config
        .layout()
        .into_iter()
        .map(|(name, shape, std)| {
            let tensor = if std == 0.0 {
                Tensor::zeros(&shape)
            } else {
                Tensor::randn(&shape, std, &mut rng)
            };
            NamedTensor { name, tensor }
        })
        .collect();
    Ok(Model {
        config: config.clone(),
        params: Parameters {
            entries,
            init: INIT_SCHEME.into(),
            seed: config.seed,
        },
    })
}

impl Model {
    /// Puts every parameter on `tape`, as leaves when `trainable`.
    pub fn bind<'t>(&self, tape: &'t Tape, trainable: bool) -> Vec<Var<'t>> {
        self.params
            .entries
            .iter()
            .map(|e| {
                if trainable {
                    tape.leaf(e.tensor.clone())
                } else {
                    tape.constant(e.tensor.clone())
                }
            })
            .collect()
    }

    /// Runs the network on a batch `[N, ...input_shape]` using parameters
    /// previously returned by [`Model::bind`].
    pub fn forward<'t>(&self, bound: &[Var<'t>], input: Var<'t>) -> Result<HeadOutput<'t>> {
        let cfg = &self.config;
        let shape = input.shape();
        if shape.len() != cfg.input_shape.len() + 1 || shape[1..] != cfg.input_shape[..] {
            return Err(Error::shape("backbone input", &shape, &cfg.input_shape));
        }
        if bound.len() != self.params.entries.len() {
            return Err(Error::Contract(format!(
                "{} bound parameters for a model with {}",
                bound.len(),
                self.params.entries.len()
            )));
        }
        let n = shape[0];
        let mut next = bound.iter().copied();
        let mut take = || next.next().expect("layout matches bound parameters");

        let mut x = input;
        for (&width, &se) in cfg.stage_widths.iter().zip(&cfg.se_after_stage) {
            let (w, b) = (take(), take());
            x = if cfg.is_image() {
                x.conv2d(w, b)?.relu()
            } else {
                x.matmul(w)?.add_bias(b)?.relu()
            };
            if se {
                let (w1, w2) = (take(), take());
                x = if cfg.is_image() {
                    se_block(x, w1, w2)?
                } else {
                    se_block(x.reshape(&[n, width, 1, 1])?, w1, w2)?.reshape(&[n, width])?
                };
            }
        }
        let features = if cfg.is_image() { x.global_avg_pool()? } else { x };

        let (wr, br) = (take(), take());
        let scores = features.matmul(wr)?.add_bias(br)?.reshape(&[n])?;
        let logits = if cfg.classification_head {
            let (wc, bc) = (take(), take());
            Some(features.matmul(wc)?.add_bias(bc)?)
        } else {
            None
        };
        Ok(HeadOutput {
            scores,
            logits,
            features,
        })
    }

    /// Forward pass on constants, returning plain tensors.
    pub fn predict(&self, input: &Tensor) -> Result<(Tensor, Option<Tensor>)> {
        let tape = Tape::new();
        let bound = self.bind(&tape, false);
        let out = self.forward(&bound, tape.constant(input.clone()))?;
        Ok((out.scores.value(), out.logits.map(|l| l.value())))
    }
}

/// Binds parameters as differentiable slices of one flat vector leaf, so a
/// gradient check can treat the whole parameter set as a single point.
pub fn bind_flat<'t>(model: &Model, flat: Var<'t>) -> Result<Vec<Var<'t>>> {
    let total = model.params.count();
    if flat.shape() != [total] {
        return Err(Error::shape("bind_flat", &flat.shape(), &[total]));
    }
    let mut offset = 0;
    let mut out = Vec::with_capacity(model.params.entries.len());
    for e in &model.params.entries {
        let n = e.tensor.numel();
        out.push(flat.slice(offset, n)?.reshape(e.tensor.shape())?);
        offset += n;
    }
    Ok(out)
}
