//! Squeeze-and-excitation channel gating.
//!
//! `z = mean_{H,W}(u)`, `s = σ(W₂·ReLU(W₁·z))`, `x̃_c = s_c·u_c`, with
//! `W₁: (C/r)×C` and `W₂: C×(C/r)` and no bias terms.

use crate::autodiff::Var;
use crate::error::{Error, Result};

/// Hidden width of the excitation bottleneck: `max(1, ⌊C/r⌋)`.
pub fn hidden_width(channels: usize, reduction: usize) -> usize {
    (channels / reduction.max(1)).max(1)
}

/// Global average pool over the spatial axes: `[C,H,W] → [C]` or `[N,C,H,W] → [N,C]`.
pub fn se_squeeze(u: Var<'_>) -> Result<Var<'_>> {
    u.global_avg_pool()
}

/// Channel gates in `(0, 1)` for descriptors `z` of shape `[C]` or `[N,C]`.
pub fn se_excite<'t>(z: Var<'t>, w1: Var<'t>, w2: Var<'t>) -> Result<Var<'t>> {
    let zs = z.shape();
    let (s1, s2) = (w1.shape(), w2.shape());
    let channels = *zs.last().ok_or_else(|| Error::shape("se_excite", &zs, &s1))?;
    if zs.len() > 2 || s1.len() != 2 || s1[1] != channels {
        return Err(Error::shape("se_excite", &zs, &s1));
    }
    if s2 != [channels, s1[0]] {
        return Err(Error::shape("se_excite", &s1, &s2));
    }
    let batch = if zs.len() == 1 { z.reshape(&[1, channels])? } else { z };
    let hidden = batch.matmul(w1.t()?)?.relu();
    let gates = hidden.matmul(w2.t()?)?.sigmoid();
    if zs.len() == 1 {
        gates.reshape(&[channels])
    } else {
        Ok(gates)
    }
}

/// `x̃_c = s_c·u_c`.
pub fn se_rescale<'t>(u: Var<'t>, s: Var<'t>) -> Result<Var<'t>> {
    u.scale_channels(s)
}

/// Squeeze, excite and rescale in one go.
pub fn se_block<'t>(u: Var<'t>, w1: Var<'t>, w2: Var<'t>) -> Result<Var<'t>> {
    let s = se_excite(se_squeeze(u)?, w1, w2)?;
    se_rescale(u, s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{grad_check, Tape, DEFAULT_STEP};
    use crate::tensor::Tensor;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn squeeze_examples() {
        let tape = Tape::new();
        let mut data = Vec::new();
        for v in [1.5, -2.0, 0.25] {
            data.extend(std::iter::repeat_n(v, 6));
        }
        let u = tape.constant(Tensor::new(vec![3, 2, 3], data).unwrap());
        assert_eq!(se_squeeze(u).unwrap().value().data(), &[1.5, -2.0, 0.25]);

        let point = tape.constant(Tensor::new(vec![4, 1, 1], vec![1.0, 2.0, 3.0, 4.0]).unwrap());
        assert_eq!(se_squeeze(point).unwrap().value().data(), &[1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn squeeze_matches_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let u = Tensor::randn(&[3, 4, 4], 1.0, &mut rng);
        let tape = Tape::new();
        let z = se_squeeze(tape.constant(u.clone())).unwrap().value();
        for c in 0..3 {
            let mut acc = 0.0;
            for i in 0..4 {
                for j in 0..4 {
                    acc += u.at(&[c, i, j]);
                }
            }
            assert!((z.data()[c] - acc / 16.0).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_weights_give_half_gates() {
        let tape = Tape::new();
        let z = tape.constant(Tensor::from_vec(vec![3.0, -1.0, 0.5, 8.0]));
        let w1 = tape.constant(Tensor::zeros(&[2, 4]));
        let w2 = tape.constant(Tensor::zeros(&[4, 2]));
        assert_eq!(se_excite(z, w1, w2).unwrap().value().data(), &[0.5; 4]);

        // non-zero W₂ still sees a zero hidden layer
        let w2 = tape.constant(Tensor::full(&[4, 2], 3.0));
        assert_eq!(se_excite(z, w1, w2).unwrap().value().data(), &[0.5; 4]);
    }

    #[test]
    fn excite_rejects_bad_shapes() {
        let tape = Tape::new();
        let z = tape.constant(Tensor::zeros(&[4]));
        let w1 = tape.constant(Tensor::zeros(&[2, 3]));
        let w2 = tape.constant(Tensor::zeros(&[4, 2]));
        assert!(matches!(se_excite(z, w1, w2), Err(Error::Shape { .. })));
        let w1 = tape.constant(Tensor::zeros(&[2, 4]));
        let w2 = tape.constant(Tensor::zeros(&[4, 3]));
        assert!(se_excite(z, w1, w2).is_err());
    }

    #[test]
    fn gates_lie_strictly_inside_unit_interval() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let tape = Tape::new();
        let z = tape.constant(Tensor::randn(&[6, 8], 2.0, &mut rng));
        let w1 = tape.constant(Tensor::randn(&[2, 8], 1.0, &mut rng));
        let w2 = tape.constant(Tensor::randn(&[8, 2], 1.0, &mut rng));
        let s = se_excite(z, w1, w2).unwrap().value();
        assert!(s.data().iter().all(|&g| g > 0.0 && g < 1.0));
    }

    #[test]
    fn rescale_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let u = Tensor::randn(&[3, 2, 5], 1.0, &mut rng);
        let tape = Tape::new();
        let uv = tape.constant(u.clone());
        let ones = tape.constant(Tensor::ones(&[3]));
        assert_eq!(se_rescale(uv, ones).unwrap().value(), u);
        let halves = tape.constant(Tensor::full(&[3], 0.5));
        assert_eq!(se_rescale(uv, halves).unwrap().value(), u.map(|x| x * 0.5));

        let s = Tensor::from_vec(vec![0.2, 0.9, 0.4]);
        let out = se_rescale(uv, tape.constant(s.clone())).unwrap().value();
        for c in 0..3 {
            for i in 0..2 {
                for j in 0..5 {
                    assert!((out.at(&[c, i, j]) - s.data()[c] * u.at(&[c, i, j])).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn block_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let w1 = Tensor::randn(&[2, 4], 0.8, &mut rng);
        let w2 = Tensor::randn(&[4, 2], 0.8, &mut rng);
        let u = Tensor::randn(&[2, 4, 3, 3], 1.0, &mut rng);
        let r = grad_check(
            |tape, x| {
                let w1 = tape.constant(w1.clone());
                let w2 = tape.constant(w2.clone());
                Ok(se_block(x, w1, w2)?.square().mean())
            },
            &u,
            DEFAULT_STEP,
        )
        .unwrap();
        assert!(r.kink_margin > 1e-3);
        assert!(r.max_rel_error < 1e-4, "{}", r.max_rel_error);
    }
}
