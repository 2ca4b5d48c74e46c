//! Continuous score → ordinal class labels, and inverse-frequency class weights.
//!
//! Classes are 0-based everywhere in this crate. The score each class stands
//! for (1-based for the ceil-half rule, bin centres for equal-width bins) is
//! carried by [`Discretizer::class_values`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiscretizationRule {
    /// `class = ⌈s − ½⌉`, clamped to `1..=C`.
    CeilHalf,
    /// `C` equal-width bins over `[lo, hi]`, top bin right-closed.
    EqualWidth,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscretizationSpec {
    pub rule: DiscretizationRule,
    pub num_classes: usize,
    /// Fixed `[lo, hi]` for equal-width bins. When absent the range is taken
    /// from the training scores at fit time.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score_range: Option<(f64, f64)>,
}

impl DiscretizationSpec {
    pub fn ceil_half(num_classes: usize) -> Self {
        DiscretizationSpec {
            rule: DiscretizationRule::CeilHalf,
            num_classes,
            score_range: None,
        }
    }

    pub fn equal_width(num_classes: usize, score_range: Option<(f64, f64)>) -> Self {
        DiscretizationSpec {
            rule: DiscretizationRule::EqualWidth,
            num_classes,
            score_range,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::Config(format!(
                "need at least 2 classes, got {}",
                self.num_classes
            )));
        }
        if let Some((lo, hi)) = self.score_range {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::Config(format!("invalid score range [{lo}, {hi}]")));
            }
        }
        Ok(())
    }

    /// Resolves the bin range from training scores where needed.
    pub fn fit(&self, train_scores: &[f64]) -> Result<Discretizer> {
        self.validate()?;
        let (lo, hi) = match (self.rule, self.score_range) {
            (DiscretizationRule::CeilHalf, _) => (0.5, self.num_classes as f64 + 0.5),
            (DiscretizationRule::EqualWidth, Some(r)) => r,
            (DiscretizationRule::EqualWidth, None) => {
                if train_scores.is_empty() {
                    return Err(Error::Input("no training scores to fit bin edges".into()));
                }
                let lo = train_scores.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = train_scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                if !(lo < hi) {
                    return Err(Error::Input(format!(
                        "training scores span a single value {lo}; equal-width bins are undefined"
                    )));
                }
                (lo, hi)
            }
        };
        Ok(Discretizer {
            rule: self.rule,
            num_classes: self.num_classes,
            lo,
            hi,
        })
    }
}

/// A [`DiscretizationSpec`] with its bin range resolved.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Discretizer {
    pub rule: DiscretizationRule,
    pub num_classes: usize,
    pub lo: f64,
    pub hi: f64,
}

impl Discretizer {
    /// 0-based class of a score. Out-of-range scores go to the edge classes.
    pub fn class_of(&self, s: f64) -> Result<usize> {
        if s.is_nan() {
            return Err(Error::Input("cannot discretize a NaN score".into()));
        }
        let c = self.num_classes;
        let idx = match self.rule {
            DiscretizationRule::CeilHalf => {
                let level = (s - 0.5).ceil().clamp(1.0, c as f64);
                level as usize - 1
            }
            DiscretizationRule::EqualWidth => {
                let width = (self.hi - self.lo) / c as f64;
                let raw = ((s - self.lo) / width).floor();
                raw.clamp(0.0, (c - 1) as f64) as usize
            }
        };
        Ok(idx)
    }

    pub fn labels(&self, scores: &[f64]) -> Result<Vec<usize>> {
        scores.iter().map(|&s| self.class_of(s)).collect()
    }

    /// Score represented by each class, used for the softmax expectation.
    pub fn class_values(&self) -> Vec<f64> {
        let c = self.num_classes;
        match self.rule {
            DiscretizationRule::CeilHalf => (1..=c).map(|v| v as f64).collect(),
            DiscretizationRule::EqualWidth => {
                let width = (self.hi - self.lo) / c as f64;
                (0..c).map(|j| self.lo + (j as f64 + 0.5) * width).collect()
            }
        }
    }

    pub fn bin_width(&self) -> f64 {
        match self.rule {
            DiscretizationRule::CeilHalf => 1.0,
            DiscretizationRule::EqualWidth => (self.hi - self.lo) / self.num_classes as f64,
        }
    }
}

/// Class of one score under a spec that needs no fitting (ceil-half, or
/// equal-width with an explicit range).
pub fn discretize_score(s: f64, spec: &DiscretizationSpec) -> Result<usize> {
    spec.fit(&[])?.class_of(s)
}

/// Inverse-frequency weights `w_c = max_m |m| / |c|`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassWeights {
    pub counts: Vec<usize>,
    pub weights: Vec<f64>,
}

impl ClassWeights {
    pub fn max_count(&self) -> usize {
        self.counts.iter().copied().max().unwrap_or(0)
    }

    /// `w_c` as the exact fraction `(numerator, denominator)`.
    pub fn exact(&self, class: usize) -> (usize, usize) {
        (self.max_count(), self.counts[class])
    }
}

pub fn class_weights(labels: &[usize], num_classes: usize) -> Result<ClassWeights> {
    let mut counts = vec![0usize; num_classes];
    for &l in labels {
        if l >= num_classes {
            return Err(Error::Contract(format!(
                "label {l} out of range [0, {num_classes})"
            )));
        }
        counts[l] += 1;
    }
    if let Some(class) = counts.iter().position(|&n| n == 0) {
        return Err(Error::EmptyClass { class });
    }
    let max = *counts.iter().max().expect("num_classes ≥ 1") as f64;
    let weights = counts.iter().map(|&n| max / n as f64).collect();
    Ok(ClassWeights { counts, weights })
}

/// Labels for every score plus weights computed from the training rows only.
#[derive(Clone, Debug, PartialEq)]
pub struct LabelPlan {
    pub discretizer: Discretizer,
    pub labels: Vec<usize>,
    pub weights: ClassWeights,
}

/// Fits on and weights over all of `scores`.
pub fn apply_spec(spec: &DiscretizationSpec, scores: &[f64]) -> Result<LabelPlan> {
    let all: Vec<usize> = (0..scores.len()).collect();
    apply_spec_split(spec, scores, &all)
}

/// Fits the bin range and class weights on `scores[train]`, then labels every score.
pub fn apply_spec_split(spec: &DiscretizationSpec, scores: &[f64], train: &[usize]) -> Result<LabelPlan> {
    if scores.is_empty() || train.is_empty() {
        return Err(Error::Input("cannot discretize an empty score list".into()));
    }
    let train_scores: Vec<f64> = train.iter().map(|&i| scores[i]).collect();
    let discretizer = spec.fit(&train_scores)?;
    let labels = discretizer.labels(scores)?;
    let train_labels: Vec<usize> = train.iter().map(|&i| labels[i]).collect();
    let weights = class_weights(&train_labels, spec.num_classes)?;
    Ok(LabelPlan {
        discretizer,
        labels,
        weights,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn level(s: f64) -> usize {
        discretize_score(s, &DiscretizationSpec::ceil_half(5)).unwrap() + 1
    }

    #[test]
    fn ceil_half_examples() {
        assert_eq!(level(3.2), 3);
        assert_eq!(level(1.0), 1);
        assert_eq!(level(5.0), 5);
        assert_eq!(level(4.5), 4);
        assert_eq!(level(4.51), 5);
        // clamped edges
        assert_eq!(level(-3.0), 1);
        assert_eq!(level(9.0), 5);
    }

    #[test]
    fn nan_is_an_input_error() {
        let d = DiscretizationSpec::ceil_half(5).fit(&[]).unwrap();
        assert!(matches!(d.class_of(f64::NAN), Err(Error::Input(_))));
    }

    #[test]
    fn equal_width_bins() {
        let d = DiscretizationSpec::equal_width(3, Some((-1.0, 2.0))).fit(&[]).unwrap();
        assert_eq!(d.labels(&[-1.0, -0.01, 0.0, 0.99, 1.0, 2.0, 5.0, -7.0]).unwrap(), vec![0, 0, 1, 1, 2, 2, 2, 0]);
        assert_eq!(d.class_values(), vec![-0.5, 0.5, 1.5]);
    }

    #[test]
    fn equal_width_range_comes_from_training_scores() {
        let spec = DiscretizationSpec::equal_width(3, None);
        let scores = [0.0, 3.0, 1.5, 100.0];
        let plan = apply_spec_split(&spec, &scores, &[0, 1, 2]).unwrap();
        assert_eq!((plan.discretizer.lo, plan.discretizer.hi), (0.0, 3.0));
        // test-only outlier is clamped into the top bin
        assert_eq!(plan.labels, vec![0, 2, 1, 2]);
        assert!(spec.fit(&[2.0, 2.0]).is_err());
    }

    #[test]
    fn class_weight_examples() {
        let labels: Vec<usize> = [(0, 300), (1, 100), (2, 50)]
            .iter()
            .flat_map(|&(c, n)| std::iter::repeat_n(c, n))
            .collect();
        let w = class_weights(&labels, 3).unwrap();
        assert_eq!(w.counts, vec![300, 100, 50]);
        assert_eq!(w.weights, vec![1.0, 3.0, 6.0]);

        assert_eq!(class_weights(&[0, 1, 2, 2, 1, 0], 3).unwrap().weights, vec![1.0; 3]);
        assert_eq!(class_weights(&[0, 0, 0, 1], 2).unwrap().weights, vec![1.0, 3.0]);
    }

    #[test]
    fn empty_class_is_named() {
        match class_weights(&[0, 0, 2], 3) {
            Err(Error::EmptyClass { class }) => assert_eq!(class, 1),
            other => panic!("{other:?}"),
        }
        assert!(class_weights(&[3], 3).is_err());
    }

    #[test]
    fn apply_spec_examples() {
        let plan = apply_spec(&DiscretizationSpec::ceil_half(5), &[1.2, 3.2, 3.4, 4.9]);
        // classes 1 and 3 (0-based) are empty here
        assert!(matches!(plan, Err(Error::EmptyClass { class: 1 })));
        let d = DiscretizationSpec::ceil_half(5).fit(&[]).unwrap();
        assert_eq!(d.labels(&[1.2, 3.2, 3.4, 4.9]).unwrap(), vec![0, 2, 2, 4]);

        assert!(matches!(
            apply_spec(&DiscretizationSpec::ceil_half(5), &[2.0; 10]),
            Err(Error::EmptyClass { .. })
        ));
        assert!(apply_spec(&DiscretizationSpec::ceil_half(5), &[]).is_err());
    }

    #[test]
    fn uniform_scores_fill_every_class() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let scores: Vec<f64> = (0..10_000).map(|_| rng.random_range(1.0..=5.0)).collect();
        let plan = apply_spec(&DiscretizationSpec::ceil_half(5), &scores).unwrap();
        assert!(plan.weights.counts.iter().all(|&n| n > 0));
        // the two edge classes cover half-width intervals, so roughly double weight
        for (c, &w) in plan.weights.weights.iter().enumerate() {
            let expected = if c == 0 || c == 4 { 2.0 } else { 1.0 };
            assert!((w - expected).abs() < 0.15, "class {c}: {w}");
        }
    }

    proptest! {
        #[test]
        fn monotone_under_both_rules(a in -2.0f64..8.0, b in -2.0f64..8.0, c in 2usize..9) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            for spec in [DiscretizationSpec::ceil_half(c), DiscretizationSpec::equal_width(c, Some((0.0, 6.0)))] {
                let d = spec.fit(&[]).unwrap();
                prop_assert!(d.class_of(lo).unwrap() <= d.class_of(hi).unwrap());
            }
        }

        #[test]
        fn class_value_is_near_its_scores(s in 0.0f64..6.0, c in 2usize..9) {
            let d = DiscretizationSpec::equal_width(c, Some((0.0, 6.0))).fit(&[]).unwrap();
            let v = d.class_values()[d.class_of(s).unwrap()];
            prop_assert!((v - s).abs() <= d.bin_width() / 2.0 + 1e-12);

            let d = DiscretizationSpec::ceil_half(5).fit(&[]).unwrap();
            let s = s.clamp(0.5, 5.5) ;
            let v = d.class_values()[d.class_of(s).unwrap()];
            prop_assert!((v - s).abs() <= 0.5 + 1e-12);
        }

        #[test]
        fn weights_are_correctly_rounded_ratios(labels in prop::collection::vec(0usize..4, 4..200)) {
            if let Ok(w) = class_weights(&labels, 4) {
                prop_assert_eq!(w.weights.iter().copied().fold(f64::INFINITY, f64::min), 1.0);
                for c in 0..4 {
                    let (num, den) = w.exact(c);
                    prop_assert_eq!(num, *w.counts.iter().max().unwrap());
                    prop_assert_eq!(den, w.counts[c]);
                    prop_assert_eq!(w.weights[c], num as f64 / den as f64);
                }
            }
        }
    }
}
