//! Seeded stand-in data: `s = clamp(1 + 4·σ(g·t) + ε, 1, 5)` where `t` is a
//! unit-variance projection of standard-normal features.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use super::{Dataset, Provenance};
use crate::error::{Error, Result};

/// Slope `g` of the squashing sigmoid.
pub const SYNTH_GAIN: f64 = 1.5;

const STREAM_PROJECTION: u64 = 0;
const STREAM_FEATURES: u64 = 1;
const STREAM_NOISE: u64 = 2;

fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

/// Unit-norm direction over channels. For rank ≥ 2 the leading axis is the
/// channel axis and the projection is constant across the remaining axes,
/// so a conv trunk with global pooling can represent it.
pub fn synth_projection(shape: &[usize], seed: u64) -> Vec<f64> {
    let mut r = rng(seed, STREAM_PROJECTION);
    let channels = shape[0];
    let p: Vec<f64> = (0..channels).map(|_| StandardNormal.sample(&mut r)).collect();
    let norm = p.iter().map(|v| v * v).sum::<f64>().sqrt();
    p.into_iter().map(|v| v / norm).collect()
}

/// `t = Σ_c p_c · Σ_spatial x / √spatial`, which is `N(0, 1)` for
/// standard-normal `x`.
pub fn synth_latent(shape: &[usize], projection: &[f64], sample: &[f64]) -> f64 {
    let spatial: usize = shape[1..].iter().product();
    let scale = (spatial as f64).sqrt();
    projection
        .iter()
        .zip(sample.chunks_exact(spatial))
        .map(|(p, xs)| p * xs.iter().sum::<f64>() / scale)
        .sum()
}

pub fn synth_generate(n: usize, shape: &[usize], noise_sd: f64, seed: u64) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::Input("synthetic dataset needs n ≥ 1".into()));
    }
    if shape.is_empty() || shape.contains(&0) {
        return Err(Error::Input(format!("invalid sample shape {shape:?}")));
    }
    if !(noise_sd >= 0.0 && noise_sd.is_finite()) {
        return Err(Error::Input(format!("noise_sd must be ≥ 0, got {noise_sd}")));
    }
    let width: usize = shape.iter().product();
    let projection = synth_projection(shape, seed);

    let mut fr = rng(seed, STREAM_FEATURES);
    let features: Vec<f64> = (0..n * width).map(|_| StandardNormal.sample(&mut fr)).collect();

    let noise = Normal::new(0.0, noise_sd).map_err(|e| Error::Input(e.to_string()))?;
    let mut nr = rng(seed, STREAM_NOISE);
    let scores = features
        .chunks_exact(width)
        .map(|x| {
            let t = synth_latent(shape, &projection, x);
            let clean = 1.0 + 4.0 / (1.0 + (-SYNTH_GAIN * t).exp());
            let eps = if noise_sd > 0.0 { noise.sample(&mut nr) } else { 0.0 };
            (clean + eps).clamp(1.0, 5.0)
        })
        .collect();
    let ids = (0..n).map(|i| format!("synth-{i:06}")).collect();
    Dataset::new(shape.to_vec(), features, scores, ids, Provenance::Synthetic)
}
