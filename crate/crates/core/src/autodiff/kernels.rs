//! Plain slice kernels shared by forward and backward rules.

/// `out[m×n] = a[m×k] · b[k×n]`
pub(crate) fn matmul(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (o, &bv) in row.iter_mut().zip(brow) {
                *o += aip * bv;
            }
        }
    }
    out
}

/// `out[m×n] = a[m×k] · b[n×k]ᵀ`
pub(crate) fn matmul_bt(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        for j in 0..n {
            let brow = &b[j * k..(j + 1) * k];
            out[i * n + j] = arow.iter().zip(brow).map(|(x, y)| x * y).sum();
        }
    }
    out
}

/// `out[k×n] = a[m×k]ᵀ · b[m×n]`
pub(crate) fn matmul_at(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; k * n];
    for i in 0..m {
        let brow = &b[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == 0.0 {
                continue;
            }
            let row = &mut out[p * n..(p + 1) * n];
            for (o, &bv) in row.iter_mut().zip(brow) {
                *o += aip * bv;
            }
        }
    }
    out
}

pub(crate) fn transpose(a: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; rows * cols];
    for i in 0..rows {
        for j in 0..cols {
            out[j * rows + i] = a[i * cols + j];
        }
    }
    out
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Row-wise softmax with max subtraction.
pub(crate) fn softmax_rows(x: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; rows * cols];
    for r in 0..rows {
        let src = &x[r * cols..(r + 1) * cols];
        let dst = &mut out[r * cols..(r + 1) * cols];
        let max = src.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for (d, &s) in dst.iter_mut().zip(src) {
            *d = (s - max).exp();
            total += *d;
        }
        for d in dst.iter_mut() {
            *d /= total;
        }
    }
    out
}

/// Geometry of a stride-1, zero-padded ("same") 2-D convolution.
#[derive(Clone, Copy, Debug)]
pub(crate) struct ConvGeometry {
    pub batch: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub height: usize,
    pub width: usize,
    pub kernel: usize,
}

impl ConvGeometry {
    fn pad(&self) -> isize {
        (self.kernel / 2) as isize
    }

    /// Calls `f(out_index, in_index, weight_index)` for every in-bounds tap.
    #[inline]
    fn for_each_tap(&self, mut f: impl FnMut(usize, usize, usize)) {
        let (h, w, k) = (self.height, self.width, self.kernel);
        let pad = self.pad();
        for n in 0..self.batch {
            for co in 0..self.out_channels {
                let out_base = (n * self.out_channels + co) * h * w;
                for ci in 0..self.in_channels {
                    let in_base = (n * self.in_channels + ci) * h * w;
                    let w_base = (co * self.in_channels + ci) * k * k;
                    for ky in 0..k {
                        for kx in 0..k {
                            let dy = ky as isize - pad;
                            let dx = kx as isize - pad;
                            let widx = w_base + ky * k + kx;
                            for y in 0..h {
                                let iy = y as isize + dy;
                                if iy < 0 || iy >= h as isize {
                                    continue;
                                }
                                for x in 0..w {
                                    let ix = x as isize + dx;
                                    if ix < 0 || ix >= w as isize {
                                        continue;
                                    }
                                    f(
                                        out_base + y * w + x,
                                        in_base + iy as usize * w + ix as usize,
                                        widx,
                                    );
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    pub fn forward(&self, input: &[f64], weight: &[f64], bias: &[f64]) -> Vec<f64> {
        let hw = self.height * self.width;
        let mut out = vec![0.0; self.batch * self.out_channels * hw];
        for (i, chunk) in out.chunks_mut(hw).enumerate() {
            chunk.fill(bias[i % self.out_channels]);
        }
        self.for_each_tap(|o, i, k| out[o] += weight[k] * input[i]);
        out
    }

    /// Gradients with respect to (input, weight, bias).
    pub fn backward(
        &self,
        input: &[f64],
        weight: &[f64],
        upstream: &[f64],
    ) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let hw = self.height * self.width;
        let mut g_in = vec![0.0; input.len()];
        let mut g_w = vec![0.0; weight.len()];
        let mut g_b = vec![0.0; self.out_channels];
        for (i, chunk) in upstream.chunks(hw).enumerate() {
            g_b[i % self.out_channels] += chunk.iter().sum::<f64>();
        }
        self.for_each_tap(|o, i, k| {
            g_in[i] += weight[k] * upstream[o];
            g_w[k] += input[i] * upstream[o];
        });
        (g_in, g_w, g_b)
    }
}
