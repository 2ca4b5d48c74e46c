//! Analytic-versus-finite-difference checks over every primitive, every
//! loss, the SE block, and the full dual-head network under the combined
//! loss. Each component is checked at a fixed number of seeded points whose
//! kink margin clears [`MIN_KINK_MARGIN`]; points too close to a kink are
//! redrawn rather than counted.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{grad_check, Tape, Var, DEFAULT_STEP};
use crate::error::{Error, Result};
use crate::exec::{run_jobs_with, Strategy};
use crate::losses::{
    combo_loss, expectation_loss, huber_loss, l1_regression_loss, mse_loss, smooth_l1_loss,
    weighted_cross_entropy, BatchTargets, ComboLossParams, ExpectationMode,
};
use crate::model::{bind_flat, build_backbone, se_block, BackboneConfig};
use crate::tensor::Tensor;

pub const MIN_KINK_MARGIN: f64 = 1e-3;
pub const DEFAULT_POINTS: usize = 100;
pub const DEFAULT_TOLERANCE: f64 = 1e-4;
/// Name of the whole-network component.
pub const END_TO_END: &str = "combo_loss end-to-end";

/// Draws per accepted point before a component gives up.
const MAX_DRAWS_PER_POINT: usize = 20;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteConfig {
    pub seed: u64,
    pub points: usize,
    pub tolerance: f64,
    pub step: f64,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        SuiteConfig {
            seed: 0,
            points: DEFAULT_POINTS,
            tolerance: DEFAULT_TOLERANCE,
            step: DEFAULT_STEP,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComponentResult {
    pub name: String,
    pub points: usize,
    pub rejected: usize,
    pub max_rel_error: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub config: SuiteConfig,
    pub components: Vec<ComponentResult>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.components.iter().all(|c| c.passed)
    }

    pub fn worst(&self) -> Option<&ComponentResult> {
        self.components
            .iter()
            .max_by(|a, b| a.max_rel_error.total_cmp(&b.max_rel_error))
    }
}

type Objective = Box<dyn for<'t> Fn(&'t Tape, Var<'t>) -> Result<Var<'t>> + Send + Sync>;

struct Case {
    point: Tensor,
    objective: Objective,
}

fn case<F>(point: Tensor, f: F) -> Case
where
    F: for<'t> Fn(&'t Tape, Var<'t>) -> Result<Var<'t>> + Send + Sync + 'static,
{
    Case {
        point,
        objective: Box::new(f),
    }
}

type Maker = fn(&mut ChaCha8Rng) -> Result<Case>;

/// `Σ out ⊙ r` for a fixed random `r`, so every output element carries a
/// distinct upstream gradient.
fn contract<'t>(out: Var<'t>, r: &Tensor) -> Result<Var<'t>> {
    Ok(out.mul(out.tape().constant(r.clone()))?.sum())
}

fn randn(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    Tensor::randn(shape, 1.0, rng)
}

/// Two operands packed into one leaf vector.
fn pair<'t>(x: Var<'t>, n: usize, shape: &[usize]) -> Result<(Var<'t>, Var<'t>)> {
    Ok((x.slice(0, n)?.reshape(shape)?, x.slice(n, n)?.reshape(shape)?))
}

fn elementwise<F>(rng: &mut ChaCha8Rng, point: Tensor, f: F) -> Case
where
    F: for<'t> Fn(Var<'t>) -> Result<Var<'t>> + Send + Sync + 'static,
{
    let r = randn(rng, point.shape());
    case(point, move |_, x| contract(f(x)?, &r))
}

fn targets(rng: &mut ChaCha8Rng, n: usize, classes: usize) -> Result<BatchTargets> {
    let scores = (0..n).map(|_| rng.random_range(1.0..5.0)).collect();
    let labels = (0..n).map(|_| rng.random_range(0..classes)).collect();
    let weights = (0..classes).map(|_| rng.random_range(0.5..4.0)).collect();
    BatchTargets::new(scores, labels, weights)
}

const COMPONENTS: &[(&str, Maker)] = &[
    ("add", |rng| {
        let r = randn(rng, &[2, 3]);
        Ok(case(randn(rng, &[12]), move |_, x| {
            let (a, b) = pair(x, 6, &[2, 3])?;
            contract(a.add(b)?, &r)
        }))
    }),
    ("sub", |rng| {
        let r = randn(rng, &[2, 3]);
        Ok(case(randn(rng, &[12]), move |_, x| {
            let (a, b) = pair(x, 6, &[2, 3])?;
            contract(a.sub(b)?, &r)
        }))
    }),
    ("mul", |rng| {
        let r = randn(rng, &[2, 3]);
        Ok(case(randn(rng, &[12]), move |_, x| {
            let (a, b) = pair(x, 6, &[2, 3])?;
            contract(a.mul(b)?, &r)
        }))
    }),
    ("mul (scalar broadcast)", |rng| {
        let r = randn(rng, &[5]);
        Ok(case(randn(rng, &[6]), move |_, x| {
            let s = x.slice(0, 1)?.reshape(&[])?;
            let v = x.slice(1, 5)?;
            contract(s.mul(v)?.add(v.mul(s)?)?, &r)
        }))
    }),
    ("scale", |rng| {
        let k = rng.random_range(-3.0..3.0);
        let p = randn(rng, &[7]);
        Ok(elementwise(rng, p, move |x| Ok(x.scale(k))))
    }),
    ("abs", |rng| {
        let p = randn(rng, &[8]);
        Ok(elementwise(rng, p, |x| Ok(x.abs())))
    }),
    ("log", |rng| {
        let p = Tensor::uniform(&[8], 0.2, 3.0, rng);
        Ok(elementwise(rng, p, |x| x.log()))
    }),
    ("relu", |rng| {
        let p = randn(rng, &[8]);
        Ok(elementwise(rng, p, |x| Ok(x.relu())))
    }),
    ("sigmoid", |rng| {
        let p = Tensor::randn(&[8], 3.0, rng);
        Ok(elementwise(rng, p, |x| Ok(x.sigmoid())))
    }),
    ("clamp", |rng| {
        let lo = rng.random_range(-1.0..0.0);
        let hi = rng.random_range(0.0..1.0);
        let p = randn(rng, &[8]);
        Ok(elementwise(rng, p, move |x| Ok(x.clamp(lo, hi))))
    }),
    ("matmul", |rng| {
        let r = randn(rng, &[2, 4]);
        Ok(case(randn(rng, &[6 + 12]), move |_, x| {
            let a = x.slice(0, 6)?.reshape(&[2, 3])?;
            let b = x.slice(6, 12)?.reshape(&[3, 4])?;
            contract(a.matmul(b)?, &r)
        }))
    }),
    ("transpose", |rng| {
        let r = randn(rng, &[4, 3]);
        Ok(case(randn(rng, &[12]), move |_, x| contract(x.reshape(&[3, 4])?.t()?, &r)))
    }),
    ("softmax", |rng| {
        let r = randn(rng, &[3, 4]);
        Ok(case(Tensor::randn(&[12], 2.0, rng), move |_, x| {
            contract(x.reshape(&[3, 4])?.softmax()?, &r)
        }))
    }),
    ("global_avg_pool", |rng| {
        let r = randn(rng, &[2, 3]);
        Ok(case(randn(rng, &[2 * 3 * 2 * 2]), move |_, x| {
            contract(x.reshape(&[2, 3, 2, 2])?.global_avg_pool()?, &r)
        }))
    }),
    ("sum", |rng| {
        let k = rng.random_range(0.5..2.0);
        Ok(case(randn(rng, &[6]), move |_, x| Ok(x.square().sum().scale(k))))
    }),
    ("mean", |rng| {
        let k = rng.random_range(0.5..2.0);
        Ok(case(randn(rng, &[6]), move |_, x| Ok(x.square().mean().scale(k))))
    }),
    ("mean_axis", |rng| {
        let axis = rng.random_range(0..3);
        let mut shape = vec![2, 3, 2];
        shape.remove(axis);
        let r = randn(rng, &shape);
        Ok(case(randn(rng, &[12]), move |_, x| {
            contract(x.reshape(&[2, 3, 2])?.mean_axis(axis)?, &r)
        }))
    }),
    ("pick", |rng| {
        let idx: Vec<usize> = (0..4).map(|_| rng.random_range(0..3)).collect();
        let r = randn(rng, &[4]);
        Ok(case(randn(rng, &[12]), move |_, x| {
            contract(x.reshape(&[4, 3])?.pick(&idx)?, &r)
        }))
    }),
    ("add_bias", |rng| {
        let r = randn(rng, &[3, 4]);
        Ok(case(randn(rng, &[12 + 4]), move |_, x| {
            let a = x.slice(0, 12)?.reshape(&[3, 4])?;
            contract(a.add_bias(x.slice(12, 4)?)?, &r)
        }))
    }),
    ("scale_channels", |rng| {
        let r = randn(rng, &[2, 3, 2, 2]);
        Ok(case(randn(rng, &[24 + 6]), move |_, x| {
            let u = x.slice(0, 24)?.reshape(&[2, 3, 2, 2])?;
            let s = x.slice(24, 6)?.reshape(&[2, 3])?;
            contract(u.scale_channels(s)?, &r)
        }))
    }),
    ("reshape", |rng| {
        let r = randn(rng, &[3, 2, 2]);
        Ok(case(randn(rng, &[12]), move |_, x| contract(x.reshape(&[3, 2, 2])?, &r)))
    }),
    ("slice", |rng| {
        let offset = rng.random_range(0..5);
        let r = randn(rng, &[4]);
        Ok(case(randn(rng, &[9]), move |_, x| contract(x.slice(offset, 4)?, &r)))
    }),
    ("conv2d", |rng| {
        // x [1,2,3,3], w [2,2,3,3], b [2]
        let r = randn(rng, &[1, 2, 3, 3]);
        Ok(case(randn(rng, &[18 + 36 + 2]), move |_, x| {
            let input = x.slice(0, 18)?.reshape(&[1, 2, 3, 3])?;
            let w = x.slice(18, 36)?.reshape(&[2, 2, 3, 3])?;
            let b = x.slice(54, 2)?;
            contract(input.conv2d(w, b)?, &r)
        }))
    }),
    ("l1_regression_loss", |rng| {
        let t = targets(rng, 6, 2)?;
        Ok(case(Tensor::uniform(&[6], 0.0, 6.0, rng), move |_, x| l1_regression_loss(x, &t)))
    }),
    ("mse_loss", |rng| {
        let t = targets(rng, 6, 2)?;
        Ok(case(Tensor::uniform(&[6], 0.0, 6.0, rng), move |_, x| mse_loss(x, &t)))
    }),
    ("smooth_l1_loss", |rng| {
        let t = targets(rng, 6, 2)?;
        Ok(case(Tensor::uniform(&[6], 0.0, 6.0, rng), move |_, x| smooth_l1_loss(x, &t, 1.0)))
    }),
    ("huber_loss", |rng| {
        let t = targets(rng, 6, 2)?;
        let delta = rng.random_range(0.25..1.5);
        Ok(case(Tensor::uniform(&[6], 0.0, 6.0, rng), move |_, x| huber_loss(x, &t, delta)))
    }),
    ("weighted_cross_entropy", |rng| {
        let t = targets(rng, 4, 5)?;
        Ok(case(Tensor::randn(&[20], 1.5, rng), move |_, x| {
            weighted_cross_entropy(x.reshape(&[4, 5])?, &t, 1e-12)
        }))
    }),
    ("expectation_loss (pred)", |rng| {
        let t = targets(rng, 4, 5)?;
        let values: Vec<f64> = (1..=5).map(f64::from).collect();
        Ok(case(randn(rng, &[4 + 20]), move |_, x| {
            let pred = x.slice(0, 4)?.scale(2.0).add(x.tape().constant(Tensor::scalar(3.0)))?;
            let probs = x.slice(4, 20)?.reshape(&[4, 5])?.softmax()?;
            expectation_loss(pred, probs, &t, &values, ExpectationMode::Pred)
        }))
    }),
    ("expectation_loss (groundtruth)", |rng| {
        let t = targets(rng, 4, 5)?;
        let values: Vec<f64> = (1..=5).map(f64::from).collect();
        Ok(case(randn(rng, &[20]), move |_, x| {
            let probs = x.reshape(&[4, 5])?.softmax()?;
            let pred = x.tape().constant(Tensor::zeros(&[4]));
            expectation_loss(pred, probs, &t, &values, ExpectationMode::Groundtruth)
        }))
    }),
    ("combo_loss", |rng| {
        let t = targets(rng, 4, 5)?;
        let params = ComboLossParams::standard(5);
        Ok(case(randn(rng, &[4 + 20]), move |_, x| {
            let pred = x.slice(0, 4)?.scale(2.0).add(x.tape().constant(Tensor::scalar(3.0)))?;
            let logits = x.slice(4, 20)?.reshape(&[4, 5])?;
            Ok(combo_loss(pred, logits, &t, &params)?.total)
        }))
    }),
    ("se_block", |rng| {
        let w1 = Tensor::randn(&[2, 4], 0.8, rng);
        let w2 = Tensor::randn(&[4, 2], 0.8, rng);
        let r = randn(rng, &[2, 4, 2, 2]);
        // Perturbations around a fixed W₁, W₂ so the gates stay away from saturation.
        Ok(case(randn(rng, &[32 + 16]), move |tape, x| {
            let u = x.slice(0, 32)?.reshape(&[2, 4, 2, 2])?;
            let w1v = x.slice(32, 8)?.reshape(&[2, 4])?.scale(0.3).add(tape.constant(w1.clone()))?;
            let w2v = x.slice(40, 8)?.reshape(&[4, 2])?.scale(0.3).add(tape.constant(w2.clone()))?;
            contract(se_block(u, w1v, w2v)?, &r)
        }))
    }),
    (END_TO_END, |rng| end_to_end(rng, vec![4], vec![6, 4], 1)),
    ("combo_loss end-to-end (conv)", |rng| end_to_end(rng, vec![2, 3, 3], vec![3], 3)),
];

/// Whole dual-head network plus combined loss, differentiated with respect
/// to every parameter at once.
fn end_to_end(rng: &mut ChaCha8Rng, input_shape: Vec<usize>, widths: Vec<usize>, kernel: usize) -> Result<Case> {
    let classes = 3;
    let batch = 3;
    let config = BackboneConfig {
        se_after_stage: vec![true; widths.len()],
        stage_widths: widths,
        reduction: 2,
        num_classes: classes,
        classification_head: true,
        kernel_size: kernel,
        seed: rng.random(),
        input_shape: input_shape.clone(),
    };
    let model = build_backbone(&config)?;
    let mut shape = vec![batch];
    shape.extend_from_slice(&input_shape);
    let input = randn(rng, &shape);
    let t = targets(rng, batch, classes)?;
    let params = ComboLossParams::standard(classes);
    let point = Tensor::from_vec(model.params.flatten());
    Ok(case(point, move |tape, flat| {
        let bound = bind_flat(&model, flat)?;
        let out = model.forward(&bound, tape.constant(input.clone()))?;
        let logits = out.logits.expect("dual head");
        Ok(combo_loss(out.scores, logits, &t, &params)?.total)
    }))
}

/// Component names in run order.
pub fn component_names() -> Vec<&'static str> {
    COMPONENTS.iter().map(|(n, _)| *n).collect()
}

fn component_seed(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64 + 1);
    rng
}

fn run_component(index: usize, cfg: &SuiteConfig) -> Result<ComponentResult> {
    let (name, make) = COMPONENTS[index];
    let mut rng = component_seed(cfg.seed, index);
    let (mut accepted, mut rejected, mut worst) = (0, 0, 0.0f64);
    while accepted < cfg.points && accepted + rejected < cfg.points * MAX_DRAWS_PER_POINT {
        let c = make(&mut rng)?;
        let report = grad_check(&c.objective, &c.point, cfg.step)?;
        if report.kink_margin < MIN_KINK_MARGIN {
            rejected += 1;
            continue;
        }
        accepted += 1;
        worst = worst.max(report.max_rel_error);
    }
    Ok(ComponentResult {
        name: name.into(),
        points: accepted,
        rejected,
        max_rel_error: worst,
        passed: accepted >= cfg.points && worst < cfg.tolerance,
    })
}

pub fn run_suite(cfg: &SuiteConfig) -> Result<SuiteReport> {
    run_suite_with(Strategy::from_env(), cfg)
}

pub fn run_suite_with(strategy: Strategy, cfg: &SuiteConfig) -> Result<SuiteReport> {
    if !(cfg.tolerance >= 0.0) || !(cfg.step > 0.0) || cfg.points == 0 {
        return Err(Error::Config(format!(
            "gradcheck needs tol ≥ 0, step > 0 and at least one point, got {cfg:?}"
        )));
    }
    let components = run_jobs_with(strategy, COMPONENTS.len(), |i| run_component(i, cfg))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    Ok(SuiteReport {
        config: cfg.clone(),
        components,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_are_unique_and_cover_end_to_end() {
        let names = component_names();
        let mut sorted = names.clone();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(sorted.len(), names.len());
        assert!(names.contains(&END_TO_END));
    }

    #[test]
    fn small_run_passes_and_zero_tolerance_fails() {
        let cfg = SuiteConfig {
            points: 3,
            ..Default::default()
        };
        let report = run_suite_with(Strategy::Sequential, &cfg).unwrap();
        assert!(report.passed(), "{:?}", report.worst());
        assert!(report.components.iter().all(|c| c.points == 3));
        let strict = run_suite_with(Strategy::Sequential, &SuiteConfig { tolerance: 0.0, ..cfg }).unwrap();
        assert!(!strict.passed());
    }
}
