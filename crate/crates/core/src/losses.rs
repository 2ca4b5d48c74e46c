//! Score-regression losses, weighted cross-entropy, the softmax expectation
//! loss, and their weighted combination.
//!
//! Every loss is mean-reduced over the batch and returns a scalar [`Var`]
//! that can be fed to [`Tape::backward`](crate::autodiff::Tape::backward).
//! Predicted scores are `[N]` vectors, classification outputs are `[N×C]`
//! logit matrices.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::autodiff::Var;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Which score the softmax expectation is pulled towards.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExpectationMode {
    /// `|ŝ_i − E_i|` with `ŝ_i` the regression-head output.
    #[default]
    Pred,
    /// `|s_i − E_i|` with `s_i` the ground-truth score.
    Groundtruth,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComboLossParams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    /// Score attached to each class index when forming the expectation.
    pub class_values: Vec<f64>,
    /// Lower clamp applied to probabilities before the log.
    pub prob_clamp: f64,
    #[serde(default)]
    pub expectation_mode: ExpectationMode,
}

impl ComboLossParams {
    /// `α = 2, β = 1, γ = 1` with class values `1..=C`.
    pub fn standard(num_classes: usize) -> Self {
        ComboLossParams {
            alpha: 2.0,
            beta: 1.0,
            gamma: 1.0,
            class_values: (1..=num_classes).map(|c| c as f64).collect(),
            prob_clamp: 1e-12,
            expectation_mode: ExpectationMode::Pred,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let weights = [self.alpha, self.beta, self.gamma];
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::Config(format!(
                "combo weights must be finite and non-negative, got {weights:?}"
            )));
        }
        if weights.iter().sum::<f64>() <= 0.0 {
            return Err(Error::Config("alpha + beta + gamma must be positive".into()));
        }
        if self.class_values.len() < 2 {
            return Err(Error::Config("at least two class values are required".into()));
        }
        if self.class_values.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::Config(format!(
                "class values must be strictly increasing, got {:?}",
                self.class_values
            )));
        }
        if !(self.prob_clamp > 0.0 && self.prob_clamp < 1.0) {
            return Err(Error::Config(format!(
                "prob_clamp must lie in (0, 1), got {}",
                self.prob_clamp
            )));
        }
        Ok(())
    }
}

/// Ground truth for one batch.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchTargets {
    pub scores: Vec<f64>,
    /// Zero-based class indices.
    pub classes: Vec<usize>,
    pub class_weights: Vec<f64>,
}

impl BatchTargets {
    pub fn new(scores: Vec<f64>, classes: Vec<usize>, class_weights: Vec<f64>) -> Result<Self> {
        if scores.is_empty() {
            return Err(Error::Contract("empty batch".into()));
        }
        if scores.len() != classes.len() {
            return Err(Error::Contract(format!(
                "{} scores but {} class labels",
                scores.len(),
                classes.len()
            )));
        }
        if class_weights.iter().any(|w| !(*w > 0.0)) {
            return Err(Error::Contract(format!(
                "class weights must be positive, got {class_weights:?}"
            )));
        }
        if let Some(&c) = classes.iter().find(|&&c| c >= class_weights.len()) {
            return Err(Error::Contract(format!(
                "class index {c} out of range [0, {})",
                class_weights.len()
            )));
        }
        Ok(BatchTargets {
            scores,
            classes,
            class_weights,
        })
    }

    /// Targets for the regression-only losses, where classes are unused.
    pub fn scores_only(scores: Vec<f64>) -> Result<Self> {
        let n = scores.len();
        Self::new(scores, vec![0; n], vec![1.0])
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    fn scores_var<'t>(&self, like: Var<'t>) -> Var<'t> {
        like.tape().constant(Tensor::from_vec(self.scores.clone()))
    }
}

fn residual<'t>(pred: Var<'t>, targets: &BatchTargets) -> Result<Var<'t>> {
    if pred.shape() != [targets.len()] {
        return Err(Error::Contract(format!(
            "predicted scores have shape {:?}, expected [{}]",
            pred.shape(),
            targets.len()
        )));
    }
    pred.sub(targets.scores_var(pred))
}

/// `(1/N)·Σ|ŝ_i − s_i|`
pub fn l1_regression_loss<'t>(pred: Var<'t>, targets: &BatchTargets) -> Result<Var<'t>> {
    Ok(residual(pred, targets)?.abs().mean())
}

/// `(1/N)·Σ(ŝ_i − s_i)²`
pub fn mse_loss<'t>(pred: Var<'t>, targets: &BatchTargets) -> Result<Var<'t>> {
    Ok(residual(pred, targets)?.square().mean())
}

/// Element-wise Huber: `½d²` for `|d| ≤ δ`, `δ(|d| − ½δ)` beyond.
fn huber_elements(d: Var<'_>, delta: f64) -> Result<Var<'_>> {
    let a = d.abs();
    let q = a.clamp(f64::NEG_INFINITY, delta);
    q.square().scale(0.5).add(a.sub(q)?.scale(delta))
}

/// Mean of `½d²/β` for `|d| < β`, `|d| − ½β` otherwise.
pub fn smooth_l1_loss<'t>(pred: Var<'t>, targets: &BatchTargets, beta: f64) -> Result<Var<'t>> {
    if !(beta > 0.0) {
        return Err(Error::Contract(format!("smooth L1 beta must be positive, got {beta}")));
    }
    Ok(huber_elements(residual(pred, targets)?, beta)?.scale(1.0 / beta).mean())
}

/// Classic mean-reduced Huber loss with threshold `delta`.
pub fn huber_loss<'t>(pred: Var<'t>, targets: &BatchTargets, delta: f64) -> Result<Var<'t>> {
    if !(delta > 0.0) {
        return Err(Error::Contract(format!("Huber delta must be positive, got {delta}")));
    }
    Ok(huber_elements(residual(pred, targets)?, delta)?.mean())
}

/// `−(1/N)·Σ_i w_{c_i}·log p_{i,c_i}` with `p = softmax(logits)` clamped below by `prob_clamp`.
pub fn weighted_cross_entropy<'t>(
    logits: Var<'t>,
    targets: &BatchTargets,
    prob_clamp: f64,
) -> Result<Var<'t>> {
    let probs = logits.softmax()?;
    weighted_cross_entropy_from_probs(probs, targets, prob_clamp)
}

fn weighted_cross_entropy_from_probs<'t>(
    probs: Var<'t>,
    targets: &BatchTargets,
    prob_clamp: f64,
) -> Result<Var<'t>> {
    let shape = probs.shape();
    if shape[0] != targets.len() {
        return Err(Error::Contract(format!(
            "{} logit rows for {} targets",
            shape[0],
            targets.len()
        )));
    }
    if shape[1] != targets.class_weights.len() {
        return Err(Error::Contract(format!(
            "{} logits per row but {} class weights",
            shape[1],
            targets.class_weights.len()
        )));
    }
    let per_sample: Vec<f64> = targets
        .classes
        .iter()
        .map(|&c| targets.class_weights[c])
        .collect();
    let weights = probs.tape().constant(Tensor::from_vec(per_sample));
    let log_p = probs
        .pick(&targets.classes)?
        .clamp(prob_clamp, f64::INFINITY)
        .log()?;
    Ok(log_p.mul(weights)?.mean().neg())
}

/// `E_i = Σ_j p_{i,j}·class_values[j]` for each row of `probs`.
pub fn expectation_score<'t>(probs: Var<'t>, class_values: &[f64]) -> Result<Var<'t>> {
    let p = probs.value();
    if p.rank() != 2 || p.shape()[1] != class_values.len() {
        return Err(Error::shape("expectation_score", p.shape(), &[class_values.len()]));
    }
    for (i, row) in p.data().chunks(class_values.len()).enumerate() {
        let total: f64 = row.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Contract(format!(
                "probability row {i} sums to {total}, not 1"
            )));
        }
    }
    let values = probs
        .tape()
        .constant(Tensor::new(vec![class_values.len(), 1], class_values.to_vec())?);
    probs.matmul(values)?.reshape(&[p.shape()[0]])
}

/// Mean absolute gap between a score and the softmax expectation.
pub fn expectation_loss<'t>(
    pred: Var<'t>,
    probs: Var<'t>,
    targets: &BatchTargets,
    class_values: &[f64],
    mode: ExpectationMode,
) -> Result<Var<'t>> {
    let expectation = expectation_score(probs, class_values)?;
    if expectation.shape() != [targets.len()] {
        return Err(Error::Contract(format!(
            "{} probability rows for {} targets",
            expectation.shape()[0],
            targets.len()
        )));
    }
    let anchor = match mode {
        ExpectationMode::Pred => {
            if pred.shape() != [targets.len()] {
                return Err(Error::shape("expectation_loss", &pred.shape(), &[targets.len()]));
            }
            pred
        }
        ExpectationMode::Groundtruth => targets.scores_var(pred),
    };
    Ok(anchor.sub(expectation)?.abs().mean())
}

/// Unweighted component values of one combined-loss evaluation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ComboParts {
    pub reg: f64,
    pub exp: f64,
    pub cls: f64,
}

impl ComboParts {
    pub fn weighted_total(&self, params: &ComboLossParams) -> f64 {
        params.alpha * self.reg + params.beta * self.exp + params.gamma * self.cls
    }
}

pub struct ComboOutput<'t> {
    pub total: Var<'t>,
    pub parts: ComboParts,
}

/// `α·L_reg + β·L_exp + γ·L_cls`.
pub fn combo_loss<'t>(
    pred: Var<'t>,
    logits: Var<'t>,
    targets: &BatchTargets,
    params: &ComboLossParams,
) -> Result<ComboOutput<'t>> {
    if logits.shape().get(1) != Some(&params.class_values.len()) {
        return Err(Error::shape("combo_loss", &logits.shape(), &[params.class_values.len()]));
    }
    let probs = logits.softmax()?;
    let reg = l1_regression_loss(pred, targets)?;
    let exp = expectation_loss(pred, probs, targets, &params.class_values, params.expectation_mode)?;
    let cls = weighted_cross_entropy_from_probs(probs, targets, params.prob_clamp)?;
    let total = reg
        .scale(params.alpha)
        .add(exp.scale(params.beta))?
        .add(cls.scale(params.gamma))?;
    Ok(ComboOutput {
        total,
        parts: ComboParts {
            reg: reg.item(),
            exp: exp.item(),
            cls: cls.item(),
        },
    })
}

/// The training objectives the harness can compare.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    L1,
    Mse,
    SmoothL1,
    Huber,
    Combo,
}

impl LossKind {
    pub const ALL: [LossKind; 5] = [
        LossKind::L1,
        LossKind::Mse,
        LossKind::SmoothL1,
        LossKind::Huber,
        LossKind::Combo,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LossKind::L1 => "l1",
            LossKind::Mse => "mse",
            LossKind::SmoothL1 => "smooth_l1",
            LossKind::Huber => "huber",
            LossKind::Combo => "combo",
        }
    }

    /// Row label used in comparison tables.
    pub fn label(self) -> &'static str {
        match self {
            LossKind::L1 => "L1 Loss",
            LossKind::Mse => "MSE Loss",
            LossKind::SmoothL1 => "Smooth L1 Loss",
            LossKind::Huber => "Smooth Huber Loss (classic Huber stand-in)",
            LossKind::Combo => "ComboLoss",
        }
    }

    pub fn uses_classes(self) -> bool {
        self == LossKind::Combo
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        LossKind::ALL
            .into_iter()
            .find(|k| k.name() == s.trim())
            .ok_or_else(|| {
                let valid: Vec<_> = LossKind::ALL.iter().map(|k| k.name()).collect();
                Error::Input(format!("unknown loss `{s}`; valid names: {}", valid.join(", ")))
            })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{grad_check, Tape, DEFAULT_STEP};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn vec_var<'t>(tape: &'t Tape, v: &[f64]) -> Var<'t> {
        tape.leaf(Tensor::from_vec(v.to_vec()))
    }

    fn matrix(rows: usize, cols: usize, data: &[f64]) -> Tensor {
        Tensor::new(vec![rows, cols], data.to_vec()).unwrap()
    }

    #[test]
    fn l1_and_mse_examples() {
        let tape = Tape::new();
        let t = BatchTargets::scores_only(vec![3.0, 3.0]).unwrap();
        let p = vec_var(&tape, &[2.0, 4.0]);
        assert_eq!(l1_regression_loss(p, &t).unwrap().item(), 1.0);
        assert_eq!(mse_loss(p, &t).unwrap().item(), 1.0);
        let exact = vec_var(&tape, &[3.0, 3.0]);
        assert_eq!(l1_regression_loss(exact, &t).unwrap().item(), 0.0);
        assert_eq!(mse_loss(exact, &t).unwrap().item(), 0.0);
    }

    #[test]
    fn regression_losses_match_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let pred: Vec<f64> = (0..16).map(|_| rng.random_range(0.0..6.0)).collect();
        let truth: Vec<f64> = (0..16).map(|_| rng.random_range(1.0..5.0)).collect();
        let mut l1 = 0.0;
        let mut mse = 0.0;
        for i in 0..16 {
            l1 += (pred[i] - truth[i]).abs();
            mse += (pred[i] - truth[i]).powi(2);
        }
        l1 /= 16.0;
        mse /= 16.0;
        let tape = Tape::new();
        let t = BatchTargets::scores_only(truth).unwrap();
        let p = vec_var(&tape, &pred);
        assert!((l1_regression_loss(p, &t).unwrap().item() - l1).abs() < 1e-12);
        assert!((mse_loss(p, &t).unwrap().item() - mse).abs() < 1e-12);
    }

    #[test]
    fn length_mismatch_is_a_contract_error() {
        let tape = Tape::new();
        let t = BatchTargets::scores_only(vec![1.0, 2.0, 3.0]).unwrap();
        let p = vec_var(&tape, &[1.0, 2.0]);
        assert!(matches!(l1_regression_loss(p, &t), Err(Error::Contract(_))));
    }

    #[test]
    fn smooth_l1_branches() {
        let tape = Tape::new();
        let t = BatchTargets::scores_only(vec![0.0]).unwrap();
        let eval = |d: f64, beta: f64| smooth_l1_loss(vec_var(&tape, &[d]), &t, beta).unwrap().item();
        assert_eq!(eval(0.5, 1.0), 0.125);
        assert_eq!(eval(2.0, 1.0), 1.5);
        for beta in [0.3, 1.0, 2.5] {
            assert!((eval(beta, beta) - 0.5 * beta).abs() < 1e-15);
            assert!((eval(-beta, beta) - 0.5 * beta).abs() < 1e-15);
        }
    }

    #[test]
    fn huber_examples() {
        let tape = Tape::new();
        let t = BatchTargets::scores_only(vec![0.0]).unwrap();
        assert_eq!(huber_loss(vec_var(&tape, &[3.0]), &t, 1.0).unwrap().item(), 2.5);

        let t = BatchTargets::scores_only(vec![0.1, -0.3, 0.2]).unwrap();
        let p = vec_var(&tape, &[0.4, 0.0, -0.5]);
        let big = huber_loss(p, &t, 1e6).unwrap().item();
        let half_mse = mse_loss(p, &t).unwrap().item() / 2.0;
        assert!((big - half_mse).abs() < 1e-15);
    }

    #[test]
    fn huber_gradient_is_continuous_across_threshold() {
        // Scan d across δ and compare numeric slopes on both sides.
        let delta = 0.7;
        let slope = |d: f64| {
            let r = grad_check(
                |tape, x| {
                    let t = BatchTargets::scores_only(vec![0.0]).unwrap();
                    let _ = tape;
                    huber_loss(x, &t, delta)
                },
                &Tensor::from_vec(vec![d]),
                DEFAULT_STEP,
            )
            .unwrap();
            r.numeric[0]
        };
        let below = slope(delta - 1e-3);
        let above = slope(delta + 1e-3);
        assert!((below - above).abs() < 2e-3, "{below} vs {above}");
        assert!((above - delta).abs() < 1e-6);
    }

    #[test]
    fn weighted_ce_examples() {
        let tape = Tape::new();
        let logits = tape.leaf(matrix(1, 2, &[0.0, 0.0]));
        let t = BatchTargets::new(vec![1.0], vec![0], vec![1.0, 1.0]).unwrap();
        let v = weighted_cross_entropy(logits, &t, 1e-12).unwrap().item();
        assert!((v - std::f64::consts::LN_2).abs() < 1e-12);
        let t2 = BatchTargets::new(vec![1.0], vec![0], vec![2.0, 1.0]).unwrap();
        let v2 = weighted_cross_entropy(logits, &t2, 1e-12).unwrap().item();
        assert!((v2 - 1.386294).abs() < 1e-6);

        let sharp = tape.leaf(matrix(1, 3, &[40.0, 0.0, 0.0]));
        let t3 = BatchTargets::new(vec![1.0], vec![0], vec![1.0, 1.0, 1.0]).unwrap();
        assert!(weighted_cross_entropy(sharp, &t3, 1e-12).unwrap().item() < 1e-6);
    }

    #[test]
    fn weighted_ce_rejects_bad_classes() {
        assert!(BatchTargets::new(vec![1.0], vec![2], vec![1.0, 1.0]).is_err());
        let tape = Tape::new();
        let logits = tape.leaf(matrix(1, 3, &[0.0, 0.0, 0.0]));
        let t = BatchTargets::new(vec![1.0], vec![1], vec![1.0, 1.0]).unwrap();
        assert!(matches!(weighted_cross_entropy(logits, &t, 1e-12), Err(Error::Contract(_))));
    }

    #[test]
    fn clamp_keeps_ce_finite_for_saturated_wrong_class() {
        let tape = Tape::new();
        let logits = tape.leaf(matrix(1, 2, &[0.0, 2000.0]));
        let t = BatchTargets::new(vec![1.0], vec![0], vec![1.0, 1.0]).unwrap();
        let v = weighted_cross_entropy(logits, &t, 1e-12).unwrap();
        assert!((v.item() - (-(1e-12f64).ln())).abs() < 1e-9);
        tape.backward(v).unwrap();
        assert!(logits.grad().unwrap().is_finite());
    }

    #[test]
    fn expectation_examples() {
        let tape = Tape::new();
        let values: Vec<f64> = (1..=5).map(f64::from).collect();
        let p = tape.leaf(matrix(3, 5, &[
            0.1, 0.2, 0.4, 0.2, 0.1, //
            0.0, 0.0, 0.0, 1.0, 0.0, //
            0.5, 0.5, 0.0, 0.0, 0.0,
        ]));
        let e = expectation_score(p, &values).unwrap().value();
        assert!((e.data()[0] - 3.0).abs() < 1e-12);
        assert_eq!(e.data()[1], 4.0);
        assert_eq!(e.data()[2], 1.5);

        let bad = tape.leaf(matrix(1, 5, &[0.5, 0.1, 0.0, 0.0, 0.0]));
        assert!(expectation_score(bad, &values).is_err());
    }

    #[test]
    fn expectation_loss_examples() {
        let tape = Tape::new();
        let values: Vec<f64> = (1..=5).map(f64::from).collect();
        let probs = tape.leaf(matrix(1, 5, &[0.0, 0.0, 1.0, 0.0, 0.0]));
        let t = BatchTargets::new(vec![3.0], vec![2], vec![1.0; 5]).unwrap();

        let pred = vec_var(&tape, &[4.0]);
        let l = expectation_loss(pred, probs, &t, &values, ExpectationMode::Pred).unwrap();
        assert_eq!(l.item(), 1.0);
        let same = vec_var(&tape, &[3.0]);
        assert_eq!(expectation_loss(same, probs, &t, &values, ExpectationMode::Pred).unwrap().item(), 0.0);
        let gt = expectation_loss(pred, probs, &t, &values, ExpectationMode::Groundtruth).unwrap();
        assert_eq!(gt.item(), 0.0);
    }

    #[test]
    fn combo_total_is_weighted_parts() {
        let parts = ComboParts {
            reg: 1.0,
            exp: 0.5,
            cls: 0.693147,
        };
        let p = ComboLossParams::standard(5);
        assert!((parts.weighted_total(&p) - 3.193147).abs() < 1e-12);

        let tape = Tape::new();
        let pred = vec_var(&tape, &[2.2, 3.9, 1.1]);
        let logits = tape.leaf(matrix(3, 5, &[
            0.2, -0.1, 0.5, 1.0, 0.0, //
            -1.0, 0.3, 0.7, 0.1, 0.9, //
            0.0, 0.0, 0.4, -0.4, 0.2,
        ]));
        let t = BatchTargets::new(vec![2.0, 4.5, 1.0], vec![1, 4, 0], vec![1.0, 2.0, 1.5, 3.0, 4.0])
            .unwrap();
        let out = combo_loss(pred, logits, &t, &p).unwrap();
        assert!((out.total.item() - out.parts.weighted_total(&p)).abs() < 1e-12);

        let reg_only = ComboLossParams {
            beta: 0.0,
            gamma: 0.0,
            ..p.clone()
        };
        let out = combo_loss(pred, logits, &t, &reg_only).unwrap();
        let l1 = l1_regression_loss(pred, &t).unwrap().item();
        assert!((out.total.item() - 2.0 * l1).abs() < 1e-15);
    }

    #[test]
    fn params_validation() {
        assert!(ComboLossParams::standard(5).validate().is_ok());
        let mut p = ComboLossParams::standard(5);
        p.alpha = 0.0;
        p.beta = 0.0;
        p.gamma = 0.0;
        assert!(p.validate().is_err());
        let mut p = ComboLossParams::standard(3);
        p.class_values = vec![1.0, 1.0, 2.0];
        assert!(p.validate().is_err());
    }

    #[test]
    fn loss_names_round_trip_and_reject_unknown() {
        for k in LossKind::ALL {
            assert_eq!(k.name().parse::<LossKind>().unwrap(), k);
        }
        let err = "focal".parse::<LossKind>().unwrap_err().to_string();
        assert!(err.contains("smooth_l1") && err.contains("combo"));
    }

    fn eval_all(pred: &[f64], truth: &[f64], logits: &[f64], classes: &[usize], weights: &[f64]) -> [f64; 6] {
        let n = pred.len();
        let c = weights.len();
        let tape = Tape::new();
        let t = BatchTargets::new(truth.to_vec(), classes.to_vec(), weights.to_vec()).unwrap();
        let p = vec_var(&tape, pred);
        let z = tape.leaf(matrix(n, c, logits));
        let params = ComboLossParams::standard(c);
        [
            l1_regression_loss(p, &t).unwrap().item(),
            mse_loss(p, &t).unwrap().item(),
            smooth_l1_loss(p, &t, 1.0).unwrap().item(),
            huber_loss(p, &t, 0.5).unwrap().item(),
            weighted_cross_entropy(z, &t, 1e-12).unwrap().item(),
            combo_loss(p, z, &t, &params).unwrap().total.item(),
        ]
    }

    fn batch_strategy() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, Vec<f64>, Vec<usize>, Vec<f64>)> {
        (1usize..8, 2usize..6).prop_flat_map(|(n, c)| {
            (
                prop::collection::vec(-2.0f64..7.0, n),
                prop::collection::vec(1.0f64..5.0, n),
                prop::collection::vec(-5.0f64..5.0, n * c),
                prop::collection::vec(0..c, n),
                prop::collection::vec(0.5f64..8.0, c),
            )
        })
    }

    proptest! {
        #[test]
        fn losses_are_non_negative((pred, truth, logits, classes, weights) in batch_strategy()) {
            for v in eval_all(&pred, &truth, &logits, &classes, &weights) {
                prop_assert!(v >= 0.0);
            }
        }

        #[test]
        fn losses_are_permutation_invariant((pred, truth, logits, classes, weights) in batch_strategy(), shift in 0usize..8) {
            let n = pred.len();
            let c = weights.len();
            let perm: Vec<usize> = (0..n).map(|i| (i + shift) % n).collect();
            let pp: Vec<f64> = perm.iter().map(|&i| pred[i]).collect();
            let tp: Vec<f64> = perm.iter().map(|&i| truth[i]).collect();
            let cp: Vec<usize> = perm.iter().map(|&i| classes[i]).collect();
            let lp: Vec<f64> = perm.iter().flat_map(|&i| logits[i * c..(i + 1) * c].to_vec()).collect();
            let a = eval_all(&pred, &truth, &logits, &classes, &weights);
            let b = eval_all(&pp, &tp, &lp, &cp, &weights);
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0));
            }
        }

        #[test]
        fn ce_scales_linearly_with_weights((_p, truth, logits, classes, weights) in batch_strategy(), k in 0.1f64..10.0) {
            let n = truth.len();
            let c = weights.len();
            let tape = Tape::new();
            let z = tape.leaf(matrix(n, c, &logits));
            let t = BatchTargets::new(truth.clone(), classes.clone(), weights.clone()).unwrap();
            let scaled: Vec<f64> = weights.iter().map(|w| w * k).collect();
            let ts = BatchTargets::new(truth, classes, scaled).unwrap();
            let base = weighted_cross_entropy(z, &t, 1e-12).unwrap().item();
            let big = weighted_cross_entropy(z, &ts, 1e-12).unwrap().item();
            prop_assert!((big - k * base).abs() <= 1e-12 * big.abs().max(1.0));
        }

        #[test]
        fn expectation_within_value_range((_p, _t, logits, _c, weights) in batch_strategy()) {
            let c = weights.len();
            let n = logits.len() / c;
            let values: Vec<f64> = (0..c).map(|j| 0.5 + 1.5 * j as f64).collect();
            let tape = Tape::new();
            let probs = tape.leaf(matrix(n, c, &logits)).softmax().unwrap();
            let e = expectation_score(probs, &values).unwrap().value();
            for &x in e.data() {
                prop_assert!(x >= values[0] - 1e-12 && x <= values[c - 1] + 1e-12);
            }
        }

        #[test]
        fn combo_total_equals_dot_product(
            (pred, truth, logits, classes, weights) in batch_strategy(),
            alpha in 0.0f64..3.0, beta in 0.0f64..3.0, gamma in 0.01f64..3.0,
        ) {
            let n = pred.len();
            let c = weights.len();
            let tape = Tape::new();
            let t = BatchTargets::new(truth, classes, weights).unwrap();
            let params = ComboLossParams { alpha, beta, gamma, ..ComboLossParams::standard(c) };
            let out = combo_loss(vec_var(&tape, &pred), tape.leaf(matrix(n, c, &logits)), &t, &params).unwrap();
            prop_assert!((out.total.item() - out.parts.weighted_total(&params)).abs() < 1e-12);
        }
    }
}
