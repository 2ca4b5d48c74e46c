//! Analytic-versus-numeric gradient comparison.

use super::{Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Central-difference step used throughout the test-suite.
pub const DEFAULT_STEP: f64 = 1e-5;

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    /// `max_i |analytic_i − numeric_i| / max(1, |numeric_i|)`
    pub max_rel_error: f64,
    pub worst_index: usize,
    pub analytic: Vec<f64>,
    pub numeric: Vec<f64>,
    /// Distance from the check point to the nearest abs/relu/clamp kink
    /// encountered in the graph. Callers reject points with a small margin.
    pub kink_margin: f64,
}

/// `(f(x + h·e_i) − f(x − h·e_i)) / 2h` for every coordinate `i`.
pub fn central_differences(
    f: impl Fn(&Tensor) -> Result<f64>,
    point: &Tensor,
    h: f64,
) -> Result<Vec<f64>> {
    let mut probe = point.clone();
    let mut out = Vec::with_capacity(point.numel());
    for i in 0..point.numel() {
        let x = point.data()[i];
        probe.data_mut()[i] = x + h;
        let plus = f(&probe)?;
        probe.data_mut()[i] = x - h;
        let minus = f(&probe)?;
        probe.data_mut()[i] = x;
        out.push((plus - minus) / (2.0 * h));
    }
    Ok(out)
}

/// Compares the reverse-mode gradient of the scalar graph built by `f`
/// against central differences at `point`.
pub fn grad_check<F>(f: F, point: &Tensor, h: f64) -> Result<GradCheckReport>
where
    F: for<'t> Fn(&'t Tape, Var<'t>) -> Result<Var<'t>>,
{
    let tape = Tape::new();
    let x = tape.leaf(point.clone());
    let loss = f(&tape, x)?;
    if loss.value().numel() != 1 {
        return Err(Error::Contract("grad_check needs a scalar-valued graph".into()));
    }
    tape.backward(loss)?;
    let analytic = tape
        .grad(x)
        .map(Tensor::into_data)
        .unwrap_or_else(|| vec![0.0; point.numel()]);
    let kink_margin = tape.kink_margin();

    let numeric = central_differences(
        |p| {
            let tape = Tape::new();
            let x = tape.leaf(p.clone());
            Ok(f(&tape, x)?.item())
        },
        point,
        h,
    )?;

    let (worst_index, max_rel_error) = analytic
        .iter()
        .zip(&numeric)
        .map(|(a, n)| (a - n).abs() / n.abs().max(1.0))
        .enumerate()
        .fold((0, 0.0), |best, (i, e)| if e > best.1 { (i, e) } else { best });

    Ok(GradCheckReport {
        max_rel_error,
        worst_index,
        analytic,
        numeric,
        kink_margin,
    })
}
