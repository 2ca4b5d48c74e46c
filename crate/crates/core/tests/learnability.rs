//! Noiseless synthetic data must be exactly recoverable by a linear fit on
//! per-channel feature means after undoing the score squashing.

use combolab::data::{synth_generate, SYNTH_GAIN};
use combolab::train::pearson;

/// Ordinary least squares via the normal equations and partial pivoting.
fn least_squares(rows: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
    let d = rows[0].len();
    let mut a = vec![vec![0.0; d + 1]; d];
    for (x, &t) in rows.iter().zip(y) {
        for i in 0..d {
            for j in 0..d {
                a[i][j] += x[i] * x[j];
            }
            a[i][d] += x[i] * t;
        }
    }
    for col in 0..d {
        let pivot = (col..d).max_by(|&p, &q| a[p][col].abs().total_cmp(&a[q][col].abs())).unwrap();
        a.swap(col, pivot);
        for r in 0..d {
            if r != col {
                let f = a[r][col] / a[col][col];
                for c in col..=d {
                    a[r][c] -= f * a[col][c];
                }
            }
        }
    }
    (0..d).map(|i| a[i][d] / a[i][i]).collect()
}

fn recovered_pc(shape: &[usize]) -> f64 {
    let data = synth_generate(400, shape, 0.0, 17).unwrap();
    let channels = shape[0];
    let spatial = data.width() / channels;
    let rows: Vec<Vec<f64>> = (0..data.len())
        .map(|i| {
            let mut r: Vec<f64> = data
                .sample(i)
                .chunks(spatial)
                .map(|c| c.iter().sum::<f64>() / spatial as f64)
                .collect();
            r.push(1.0);
            r
        })
        .collect();
    let latent: Vec<f64> = data
        .scores()
        .iter()
        .map(|s| {
            let q = (s - 1.0) / 4.0;
            (q / (1.0 - q)).ln() / SYNTH_GAIN
        })
        .collect();
    let beta = least_squares(&rows, &latent);
    let fitted: Vec<f64> = rows
        .iter()
        .map(|r| r.iter().zip(&beta).map(|(a, b)| a * b).sum())
        .collect();
    pearson(&fitted, &latent).unwrap()
}

#[test]
fn flat_latent_is_linearly_recoverable() {
    assert!(recovered_pc(&[8]) > 0.999);
}

#[test]
fn image_latent_is_linearly_recoverable_from_channel_means() {
    assert!(recovered_pc(&[3, 4, 4]) > 0.999);
}
