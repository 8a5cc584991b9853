//! Softmax normalization, its Jacobian-vector product and min-max scaling.

use alloc::vec::Vec;

use crate::{Error, GridMap, PixelDistribution, Result};

pub(crate) fn softmax_in_place(values: &mut [f64]) {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in values.iter_mut() {
        *v = libm::exp(*v - max);
        total += *v;
    }
    for v in values.iter_mut() {
        *v /= total;
    }
}

/// `p_i = exp(x_i - max x) / sum_j exp(x_j - max x)` over all pixels jointly.
pub fn softmax(logits: &GridMap) -> Result<PixelDistribution> {
    if logits.is_empty() {
        return Err(Error::Empty);
    }
    let mut values = logits.values().to_vec();
    softmax_in_place(&mut values);
    Ok(PixelDistribution::from_raw(GridMap::from_raw(
        logits.height(),
        logits.width(),
        values,
    )))
}

/// Pulls an upstream gradient `dL/dp` back through softmax:
/// `v_i = p_i (u_i - sum_j u_j p_j)`.
pub fn softmax_jvp(p: &PixelDistribution, upstream: &GridMap) -> Result<GridMap> {
    p.grid().check_same_shape(upstream)?;
    let values = softmax_vjp_slice(p.values(), upstream.values());
    let (h, w) = p.shape();
    GridMap::new(h, w, values)
}

pub(crate) fn softmax_vjp_slice(p: &[f64], upstream: &[f64]) -> Vec<f64> {
    let mean: f64 = p.iter().zip(upstream).map(|(pi, ui)| pi * ui).sum();
    p.iter()
        .zip(upstream)
        .map(|(pi, ui)| pi * (ui - mean))
        .collect()
}

/// Rescales to `[0, 1]` by `(y - min) / (max - min)`. A constant map has no
/// range and becomes all zeros.
pub fn min_max_normalize(y: &GridMap) -> GridMap {
    let min = y.min();
    let range = y.max() - min;
    if range <= 0.0 {
        return GridMap::zeros(y.height(), y.width());
    }
    y.map(|v| (v - min) / range)
}
