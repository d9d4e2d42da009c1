//! Feature maps as probability distributions, compared with Kullback-Leibler
//! and Jensen-Shannon divergence in bits.
//!
//! Base-2 logarithms bound JS by 1, so "identical" maps score 0 and maps
//! with disjoint support score 1.

use crate::error::{Error, Result};
use crate::perception::FeatureMap;

pub const DEFAULT_SMOOTHING: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct Distribution {
    probs: Vec<f64>,
    /// The source map was all zeros (the result is uniform).
    pub empty: bool,
}

impl Distribution {
    /// Checks non-negativity and unit mass (within 1e-9).
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::InvalidArgument("probabilities must be finite and >= 0".into()));
        }
        let mass: f64 = probs.iter().sum();
        if (mass - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!("probabilities sum to {mass}")));
        }
        Ok(Self { probs, empty: false })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }
}

/// Smooth, then normalize: `p_i = (x_i + eps) / sum_j (x_j + eps)`.
pub fn normalize_values(values: &[f64], smoothing: f64) -> Result<Distribution> {
    if !(smoothing > 0.0) {
        return Err(Error::InvalidArgument(format!("smoothing must be > 0, got {smoothing}")));
    }
    if values.is_empty() {
        return Err(Error::InvalidArgument("cannot normalize an empty map".into()));
    }
    if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
        return Err(Error::InvalidArgument(format!("feature map entry {v} is negative")));
    }
    let total: f64 = values.iter().map(|v| v + smoothing).sum();
    Ok(Distribution {
        probs: values.iter().map(|v| (v + smoothing) / total).collect(),
        empty: values.iter().all(|&v| v == 0.0),
    })
}

pub fn normalize_feature_map(map: &FeatureMap, smoothing: f64) -> Result<Distribution> {
    normalize_values(map.values(), smoothing)
}

/// `sum_i p_i log2(p_i / q_i)`, taking `0 log 0 = 0`.
pub fn kl(p: &Distribution, q: &Distribution) -> Result<f64> {
    kl_slices(p.probs(), q.probs())
}

fn kl_slices(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::shape("kl", &[p.len()], &[q.len()]));
    }
    let mut sum = 0.0;
    for (&pi, &qi) in p.iter().zip(q) {
        if pi > 0.0 {
            sum += pi * (pi / qi).log2();
        }
    }
    // rounding can leave tiny negatives for p == q
    Ok(sum.max(0.0))
}

/// Jensen-Shannon divergence of two already-normalized distributions.
pub fn js_distributions(a: &Distribution, b: &Distribution) -> Result<f64> {
    if a.probs.len() != b.probs.len() {
        return Err(Error::shape("js", &[a.probs.len()], &[b.probs.len()]));
    }
    // m is built as (a + b) / 2 elementwise, so swapping a and b gives the
    // same m bit for bit; the two halves are then added in a fixed order.
    let m: Vec<f64> = a.probs.iter().zip(&b.probs).map(|(x, y)| 0.5 * (x + y)).collect();
    let ka = kl_slices(&a.probs, &m)?;
    let kb = kl_slices(&b.probs, &m)?;
    let (lo, hi) = if ka <= kb { (ka, kb) } else { (kb, ka) };
    Ok((0.5 * lo + 0.5 * hi).clamp(0.0, 1.0))
}

/// Cheap lower bound on [`js_distributions`]: `|a - b|_1^2 / (8 ln 2)`,
/// from Pinsker's inequality applied to both halves.
pub fn js_lower_bound(a: &Distribution, b: &Distribution) -> f64 {
    let l1: f64 = a.probs.iter().zip(&b.probs).map(|(x, y)| (x - y).abs()).sum();
    l1 * l1 / (8.0 * std::f64::consts::LN_2)
}

/// JS divergence between two feature maps of the same grid shape.
pub fn js(a: &FeatureMap, b: &FeatureMap, smoothing: f64) -> Result<f64> {
    if a.dims() != b.dims() {
        let (ar, ac) = a.dims();
        let (br, bc) = b.dims();
        return Err(Error::shape("js", &[ar, ac], &[br, bc]));
    }
    js_distributions(&normalize_feature_map(a, smoothing)?, &normalize_feature_map(b, smoothing)?)
}
