//! Central finite-difference check of the analytic gradient.

use super::backward::{backward, segment_loss, Segment};
use super::params::PcmParams;
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientSample {
    pub index: usize,
    pub tensor: &'static str,
    pub analytic: f64,
    pub numeric: f64,
    pub relative_error: f64,
}

/// `|a − n| / max(|a|, |n|)`, or the absolute difference when both are below
/// `floor`.
pub fn relative_error(a: f64, n: f64, floor: f64) -> f64 {
    let scale = a.abs().max(n.abs());
    if scale < floor {
        (a - n).abs()
    } else {
        (a - n).abs() / scale
    }
}

/// Compare analytic and central-difference gradients for the given flat
/// parameter indices.
pub fn gradient_check(seg: &Segment, params: &PcmParams, indices: &[usize], delta: f64) -> Result<Vec<GradientSample>> {
    let mut grads = params.zeros_like();
    backward(seg, params, &mut grads)?;
    let mut probe = params.clone();
    let mut out = Vec::with_capacity(indices.len());
    for &index in indices {
        let x = params.get_flat(index);
        probe.set_flat(index, x + delta);
        let up = segment_loss(seg, &probe)?.total;
        probe.set_flat(index, x - delta);
        let down = segment_loss(seg, &probe)?.total;
        probe.set_flat(index, x);
        let numeric = (up - down) / (2.0 * delta);
        let analytic = grads.get_flat(index);
        out.push(GradientSample {
            index,
            tensor: params.tensor_of(index),
            analytic,
            numeric,
            relative_error: relative_error(analytic, numeric, 1e-7),
        });
    }
    Ok(out)
}
