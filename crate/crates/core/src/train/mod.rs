//! Heavy-ball SGD with step decay, the training loop, and the
//! cross-validation and loss-comparison harnesses.

mod harness;
mod metrics;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::data::{augment, AugmentConfig, Dataset};
use crate::discretize::{apply_spec, DiscretizationSpec, LabelPlan};
use crate::error::{Error, Result};
use crate::losses::{
    combo_loss, huber_loss, l1_regression_loss, mse_loss, smooth_l1_loss, BatchTargets, ComboLossParams,
    ComboParts, ExpectationMode, LossKind,
};
use crate::model::{build_backbone, BackboneConfig, Model, Parameters};
use crate::tensor::Tensor;

pub use harness::{
    compare_losses, compare_losses_with, cross_validate, cross_validate_with, CompareReport, CompareRow, CvReport,
    FoldResult,
};
pub use metrics::{mean_metrics, metrics, pearson, MeanMetrics, Metrics};

const STREAM_SHUFFLE: u64 = 1;
const STREAM_AUGMENT: u64 = 2;

/// Combination weights; class values come from the fitted discretizer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ComboWeights {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub prob_clamp: f64,
    pub expectation_mode: ExpectationMode,
}

impl Default for ComboWeights {
    fn default() -> Self {
        let p = ComboLossParams::standard(2);
        ComboWeights {
            alpha: p.alpha,
            beta: p.beta,
            gamma: p.gamma,
            prob_clamp: p.prob_clamp,
            expectation_mode: p.expectation_mode,
        }
    }
}

impl ComboWeights {
    pub fn params(&self, class_values: Vec<f64>) -> ComboLossParams {
        ComboLossParams {
            alpha: self.alpha,
            beta: self.beta,
            gamma: self.gamma,
            class_values,
            prob_clamp: self.prob_clamp,
            expectation_mode: self.expectation_mode,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr0: f64,
    pub decay_every: usize,
    pub decay_factor: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub loss: LossKind,
    pub combo: ComboWeights,
    pub smooth_l1_beta: f64,
    pub huber_delta: f64,
    pub augment: AugmentConfig,
    /// Drives fold plans, splits, batch order and augmentation.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr0: 0.01,
            decay_every: 50,
            decay_factor: 10.0,
            momentum: 0.9,
            weight_decay: 0.001,
            batch_size: 64,
            epochs: 200,
            loss: LossKind::Combo,
            combo: ComboWeights::default(),
            smooth_l1_beta: 1.0,
            huber_delta: 0.5,
            augment: AugmentConfig::default(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: String| Err(Error::Config(what));
        if !(self.lr0 > 0.0 && self.lr0.is_finite()) {
            return bad(format!("train.lr0 must be positive, got {}", self.lr0));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad(format!("train.momentum must lie in [0, 1), got {}", self.momentum));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad(format!("train.weight_decay must be ≥ 0, got {}", self.weight_decay));
        }
        if self.batch_size == 0 {
            return bad("train.batch_size must be ≥ 1".into());
        }
        if self.decay_every == 0 {
            return bad("train.decay_every must be ≥ 1".into());
        }
        if !(self.decay_factor >= 1.0 && self.decay_factor.is_finite()) {
            return bad(format!("train.decay_factor must be ≥ 1, got {}", self.decay_factor));
        }
        if !(self.smooth_l1_beta > 0.0 && self.huber_delta > 0.0) {
            return bad("train.smooth_l1_beta and train.huber_delta must be positive".into());
        }
        self.augment.validate()?;
        self.combo.params(vec![0.0, 1.0]).validate()
    }
}

/// `lr0 / factor^⌊epoch / decay_every⌋`.
pub fn lr_at(epoch: usize, cfg: &TrainConfig) -> f64 {
    let drops = (epoch / cfg.decay_every.max(1)) as i32;
    cfg.lr0 / cfg.decay_factor.powi(drops)
}

/// Per-parameter velocity buffers, created lazily on the first step.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SgdState {
    pub velocity: Vec<Tensor>,
    pub step: usize,
}

/// Hyper-parameters for one update plus context for diagnostics.
#[derive(Clone, Copy, Debug)]
pub struct SgdStep {
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    /// Batch loss that produced the gradients; only reported on failure.
    pub loss: f64,
}

/// `g' = g + wd·θ; v ← μv + g'; θ ← θ − lr·v`. Parameters are untouched
/// when any gradient is non-finite.
pub fn sgd_step(params: &mut Parameters, grads: &[Tensor], state: &mut SgdState, hp: SgdStep) -> Result<()> {
    if grads.len() != params.entries.len() {
        return Err(Error::Contract(format!(
            "{} gradients for {} parameters",
            grads.len(),
            params.entries.len()
        )));
    }
    for (e, g) in params.entries.iter().zip(grads) {
        if e.tensor.shape() != g.shape() {
            return Err(Error::shape("sgd_step", e.tensor.shape(), g.shape()));
        }
        if !g.is_finite() {
            return Err(Error::Numeric {
                step: state.step,
                parameter: e.name.clone(),
                loss: hp.loss,
                message: "non-finite gradient".into(),
            });
        }
    }
    if state.velocity.is_empty() {
        state.velocity = params.entries.iter().map(|e| Tensor::zeros(e.tensor.shape())).collect();
    }
    for ((e, g), v) in params.entries.iter_mut().zip(grads).zip(&mut state.velocity) {
        let theta = e.tensor.data_mut();
        for ((t, &gi), vi) in theta.iter_mut().zip(g.data()).zip(v.data_mut()) {
            *vi = hp.momentum * *vi + gi + hp.weight_decay * *t;
            *t -= hp.lr * *vi;
        }
    }
    state.step += 1;
    Ok(())
}

/// One line of training history.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// One-based.
    pub epoch: usize,
    pub lr: f64,
    /// Sample-weighted mean of the batch losses seen during the epoch.
    pub loss: f64,
    /// Unweighted combo components, averaged the same way.
    pub parts: Option<ComboParts>,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: Model,
    pub history: Vec<EpochRecord>,
    /// Present when the loss needs class labels.
    pub labels: Option<LabelPlan>,
}

/// Labels and combo parameters for `dataset` under `spec`.
fn class_setup(
    dataset: &Dataset,
    spec: &DiscretizationSpec,
    backbone: &BackboneConfig,
    cfg: &TrainConfig,
) -> Result<Option<(LabelPlan, ComboLossParams)>> {
    if !cfg.loss.uses_classes() {
        return Ok(None);
    }
    if !backbone.classification_head {
        return Err(Error::Config("combo loss needs a classification head".into()));
    }
    if backbone.num_classes != spec.num_classes {
        return Err(Error::Config(format!(
            "backbone has {} classes, discretization has {}",
            backbone.num_classes, spec.num_classes
        )));
    }
    let plan = apply_spec(spec, dataset.scores())?;
    let params = cfg.combo.params(plan.discretizer.class_values());
    params.validate()?;
    Ok(Some((plan, params)))
}

fn batch_loss<'t>(
    model: &Model,
    bound: &[Var<'t>],
    input: Var<'t>,
    targets: &BatchTargets,
    combo: Option<&ComboLossParams>,
    cfg: &TrainConfig,
) -> Result<(Var<'t>, Option<ComboParts>)> {
    let out = model.forward(bound, input)?;
    let loss = match cfg.loss {
        LossKind::L1 => l1_regression_loss(out.scores, targets)?,
        LossKind::Mse => mse_loss(out.scores, targets)?,
        LossKind::SmoothL1 => smooth_l1_loss(out.scores, targets, cfg.smooth_l1_beta)?,
        LossKind::Huber => huber_loss(out.scores, targets, cfg.huber_delta)?,
        LossKind::Combo => {
            let logits = out
                .logits
                .ok_or_else(|| Error::Config("combo loss needs a classification head".into()))?;
            let params = combo.expect("class setup ran for combo");
            let c = combo_loss(out.scores, logits, targets, params)?;
            return Ok((c.total, Some(c.parts)));
        }
    };
    Ok((loss, None))
}

/// Minimises the configured loss over all of `dataset`. Class ranges and
/// weights are fitted on `dataset` itself, so pass only training rows.
pub fn train_model(
    dataset: &Dataset,
    spec: &DiscretizationSpec,
    backbone: &BackboneConfig,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    spec.validate()?;
    if dataset.is_empty() {
        return Err(Error::Input("cannot train on an empty dataset".into()));
    }
    if dataset.sample_shape() != backbone.input_shape.as_slice() {
        return Err(Error::Config(format!(
            "dataset samples have shape {:?}, backbone expects {:?}",
            dataset.sample_shape(),
            backbone.input_shape
        )));
    }
    let setup = class_setup(dataset, spec, backbone, cfg)?;
    let mut model = build_backbone(backbone)?;

    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    shuffle_rng.set_stream(STREAM_SHUFFLE);
    let mut augment_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    augment_rng.set_stream(STREAM_AUGMENT);

    let n = dataset.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut state = SgdState::default();
    let mut history = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let lr = lr_at(epoch, cfg);
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        let mut parts_sum = ComboParts::default();
        for idx in order.chunks(cfg.batch_size) {
            let mut input = dataset.batch(idx)?;
            if !cfg.augment.is_identity() {
                let w = dataset.width();
                for row in input.data_mut().chunks_exact_mut(w) {
                    let out = augment(row, &cfg.augment, &mut augment_rng)?;
                    row.copy_from_slice(&out);
                }
            }
            let scores: Vec<f64> = idx.iter().map(|&i| dataset.scores()[i]).collect();
            let targets = match &setup {
                Some((plan, _)) => BatchTargets::new(
                    scores,
                    idx.iter().map(|&i| plan.labels[i]).collect(),
                    plan.weights.weights.clone(),
                )?,
                None => BatchTargets::scores_only(scores)?,
            };

            let tape = Tape::new();
            let bound = model.bind(&tape, true);
            let (loss, parts) = batch_loss(
                &model,
                &bound,
                tape.constant(input),
                &targets,
                setup.as_ref().map(|(_, p)| p),
                cfg,
            )?;
            let value = loss.item();
            if !value.is_finite() {
                return Err(Error::Numeric {
                    step: state.step,
                    parameter: "<loss>".into(),
                    loss: value,
                    message: format!("loss diverged in epoch {}", epoch + 1),
                });
            }
            tape.backward(loss)?;
            let grads: Vec<Tensor> = bound
                .iter()
                .zip(&model.params.entries)
                .map(|(v, e)| v.grad().unwrap_or_else(|| Tensor::zeros(e.tensor.shape())))
                .collect();
            sgd_step(
                &mut model.params,
                &grads,
                &mut state,
                SgdStep {
                    lr,
                    momentum: cfg.momentum,
                    weight_decay: cfg.weight_decay,
                    loss: value,
                },
            )?;

            let w = idx.len() as f64;
            loss_sum += w * value;
            if let Some(p) = parts {
                parts_sum.reg += w * p.reg;
                parts_sum.exp += w * p.exp;
                parts_sum.cls += w * p.cls;
            }
        }
        let n = n as f64;
        history.push(EpochRecord {
            epoch: epoch + 1,
            lr,
            loss: loss_sum / n,
            parts: setup.as_ref().map(|_| ComboParts {
                reg: parts_sum.reg / n,
                exp: parts_sum.exp / n,
                cls: parts_sum.cls / n,
            }),
        });
    }
    Ok(TrainOutcome {
        model,
        history,
        labels: setup.map(|(plan, _)| plan),
    })
}

/// Regression-head predictions, in chunks to bound tape size.
pub fn predict_scores(model: &Model, dataset: &Dataset) -> Result<Vec<f64>> {
    const CHUNK: usize = 256;
    let idx: Vec<usize> = (0..dataset.len()).collect();
    let mut out = Vec::with_capacity(dataset.len());
    for chunk in idx.chunks(CHUNK) {
        let (scores, _) = model.predict(&dataset.batch(chunk)?)?;
        out.extend_from_slice(scores.data());
    }
    Ok(out)
}

pub fn evaluate(model: &Model, dataset: &Dataset) -> Result<Metrics> {
    let pred = predict_scores(model, dataset)?;
    if let Some(i) = pred.iter().position(|p| !p.is_finite()) {
        return Err(Error::Numeric {
            step: 0,
            parameter: "<prediction>".into(),
            loss: f64::NAN,
            message: format!("non-finite prediction for sample {}", dataset.ids()[i]),
        });
    }
    metrics(&pred, dataset.scores())
}
