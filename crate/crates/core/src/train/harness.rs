//! Multi-model experiments. Each job owns its model, tape and rng; results
//! are merged in fold/loss order so output does not depend on scheduling.

use serde::{Deserialize, Serialize};

use super::{evaluate, mean_metrics, train_model, MeanMetrics, Metrics, TrainConfig};
use crate::data::{kfold, split_60_40, Dataset};
use crate::discretize::DiscretizationSpec;
use crate::error::{Error, Result};
use crate::exec::{run_jobs_with, Strategy};
use crate::losses::LossKind;
use crate::model::BackboneConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub metrics: Metrics,
    pub final_train_loss: Option<f64>,
    /// Training-fold class counts behind this fold's weights.
    pub class_counts: Option<Vec<usize>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub k: usize,
    pub seed: u64,
    pub loss: LossKind,
    pub per_fold: Vec<FoldResult>,
    pub mean: MeanMetrics,
}

/// Trains `k` models on fold complements; class ranges and weights are
/// refitted on every training fold.
pub fn cross_validate(
    dataset: &Dataset,
    k: usize,
    spec: &DiscretizationSpec,
    backbone: &BackboneConfig,
    cfg: &TrainConfig,
) -> Result<CvReport> {
    cross_validate_with(Strategy::from_env(), dataset, k, spec, backbone, cfg)
}

pub fn cross_validate_with(
    strategy: Strategy,
    dataset: &Dataset,
    k: usize,
    spec: &DiscretizationSpec,
    backbone: &BackboneConfig,
    cfg: &TrainConfig,
) -> Result<CvReport> {
    if k < 2 {
        return Err(Error::Input(format!("cross-validation needs k ≥ 2, got {k}")));
    }
    cfg.validate()?;
    let plan = kfold(dataset.len(), k, cfg.seed)?;
    let per_fold = run_jobs_with(strategy, k, |fold| -> Result<FoldResult> {
        let (train_idx, test_idx) = plan.fold(fold);
        let train = dataset.subset(&train_idx);
        let test = dataset.subset(&test_idx);
        let outcome = train_model(&train, spec, backbone, cfg)?;
        Ok(FoldResult {
            fold,
            n_train: train.len(),
            n_test: test.len(),
            metrics: evaluate(&outcome.model, &test)?,
            final_train_loss: outcome.history.last().map(|h| h.loss),
            class_counts: outcome.labels.map(|l| l.weights.counts),
        })
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let folds: Vec<Metrics> = per_fold.iter().map(|f| f.metrics).collect();
    Ok(CvReport {
        k,
        seed: cfg.seed,
        loss: cfg.loss,
        mean: mean_metrics(&folds),
        per_fold,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub loss: LossKind,
    pub label: String,
    pub test: Metrics,
    pub first_epoch_loss: Option<f64>,
    pub final_epoch_loss: Option<f64>,
}

impl CompareRow {
    /// `final / first` training loss, when both epochs ran.
    pub fn loss_ratio(&self) -> Option<f64> {
        Some(self.final_epoch_loss? / self.first_epoch_loss?)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub seed: u64,
    pub n_train: usize,
    pub n_test: usize,
    pub rows: Vec<CompareRow>,
}

/// One model per loss on a shared 60/40 split, all from the same
/// initialisation and batch order.
pub fn compare_losses(
    dataset: &Dataset,
    losses: &[LossKind],
    spec: &DiscretizationSpec,
    backbone: &BackboneConfig,
    cfg: &TrainConfig,
) -> Result<CompareReport> {
    compare_losses_with(Strategy::from_env(), dataset, losses, spec, backbone, cfg)
}

pub fn compare_losses_with(
    strategy: Strategy,
    dataset: &Dataset,
    losses: &[LossKind],
    spec: &DiscretizationSpec,
    backbone: &BackboneConfig,
    cfg: &TrainConfig,
) -> Result<CompareReport> {
    if losses.is_empty() {
        return Err(Error::Input("no losses to compare".into()));
    }
    if let Some(dup) = losses.iter().enumerate().find(|(i, l)| losses[..*i].contains(l)) {
        return Err(Error::Input(format!("loss `{}` listed twice", dup.1)));
    }
    cfg.validate()?;
    let (train_idx, test_idx) = split_60_40(dataset.len(), cfg.seed)?;
    let train = dataset.subset(&train_idx);
    let test = dataset.subset(&test_idx);
    let rows = run_jobs_with(strategy, losses.len(), |i| -> Result<CompareRow> {
        let loss = losses[i];
        let cfg = TrainConfig { loss, ..cfg.clone() };
        let outcome = train_model(&train, spec, backbone, &cfg)?;
        Ok(CompareRow {
            loss,
            label: loss.label().into(),
            test: evaluate(&outcome.model, &test)?,
            first_epoch_loss: outcome.history.first().map(|h| h.loss),
            final_epoch_loss: outcome.history.last().map(|h| h.loss),
        })
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    Ok(CompareReport {
        seed: cfg.seed,
        n_train: train.len(),
        n_test: test.len(),
        rows,
    })
}
