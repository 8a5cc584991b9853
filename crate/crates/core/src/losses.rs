//! Softmax-paired training objectives.
//!
//! Five probability distances (chi-square, total variation, cosine,
//! Bhattacharyya, KL) and two regression baselines (Euclidean, Huber on the
//! per-pixel absolute difference). Every loss is minimized and its gradient is
//! returned with respect to the pre-softmax logits.
//!
//! The fused logit gradients for chi-square, total variation and KL are the
//! closed forms `a p_i - b (1 - p_i)` obtained by composing `dL/dp` with the
//! softmax Jacobian. For Bhattacharyya the leading factor is
//! `+1 / (2 sum_j sqrt(p_j g_j))`; the commonly printed `-1/(2 ...)` prefactor
//! points uphill and fails the finite-difference check (see
//! [`printed`] and the tests). Cosine, Euclidean and Huber go through
//! `dL/dp` followed by [`softmax_jvp`](crate::softmax_jvp).

use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::norm::softmax_vjp_slice;
use crate::{softmax, Error, GridMap, PixelDistribution, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    #[serde(rename = "chi2")]
    ChiSquare,
    #[serde(rename = "tv")]
    TotalVariation,
    Cosine,
    Bhattacharyya,
    #[serde(rename = "kl")]
    KLDivergence,
    Euclidean,
    Huber,
}

impl LossKind {
    pub const ALL: [LossKind; 7] = [
        LossKind::ChiSquare,
        LossKind::TotalVariation,
        LossKind::Cosine,
        LossKind::Bhattacharyya,
        LossKind::KLDivergence,
        LossKind::Euclidean,
        LossKind::Huber,
    ];

    /// Exact CLI / config spelling.
    pub fn name(self) -> &'static str {
        match self {
            LossKind::ChiSquare => "chi2",
            LossKind::TotalVariation => "tv",
            LossKind::Cosine => "cosine",
            LossKind::Bhattacharyya => "bhattacharyya",
            LossKind::KLDivergence => "kl",
            LossKind::Euclidean => "euclidean",
            LossKind::Huber => "huber",
        }
    }

    /// True for the five distances between distributions, false for the
    /// two regression baselines.
    pub fn is_probability_distance(self) -> bool {
        !matches!(self, LossKind::Euclidean | LossKind::Huber)
    }

    pub fn is_symmetric(self) -> bool {
        !matches!(self, LossKind::ChiSquare | LossKind::KLDivergence)
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        LossKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or(Error::InvalidParameter("unknown loss name"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossSpec {
    pub kind: LossKind,
    /// Floor applied to `p` inside chi-square and KL only.
    pub epsilon: f64,
    pub huber_delta: f64,
}

pub const DEFAULT_EPSILON: f64 = 1e-12;

impl LossSpec {
    pub fn new(kind: LossKind) -> Self {
        LossSpec {
            kind,
            epsilon: DEFAULT_EPSILON,
            huber_delta: 1.0,
        }
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon <= 1e-6) {
            return Err(Error::InvalidParameter("epsilon must lie in (0, 1e-6]"));
        }
        self.epsilon = epsilon;
        Ok(self)
    }

    pub fn with_huber_delta(mut self, delta: f64) -> Result<Self> {
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(Error::InvalidParameter("huber_delta must be positive"));
        }
        self.huber_delta = delta;
        Ok(self)
    }
}

impl From<LossKind> for LossSpec {
    fn from(kind: LossKind) -> Self {
        LossSpec::new(kind)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossResult {
    pub value: f64,
    pub grad_logits: GridMap,
}

pub fn loss_value(spec: &LossSpec, p: &PixelDistribution, g: &PixelDistribution) -> Result<f64> {
    p.grid().check_same_shape(g.grid())?;
    let v = value_slice(spec, p.values(), g.values());
    if !v.is_finite() {
        return Err(Error::NonFinite);
    }
    Ok(v)
}

/// `dL/dx^p`, the gradient with respect to the logits that produced `p`.
pub fn loss_grad(spec: &LossSpec, p: &PixelDistribution, g: &PixelDistribution) -> Result<GridMap> {
    p.grid().check_same_shape(g.grid())?;
    let (h, w) = p.shape();
    GridMap::new(h, w, grad_slice(spec, p.values(), g.values()))
}

pub fn evaluate(spec: &LossSpec, p: &PixelDistribution, g: &PixelDistribution) -> Result<LossResult> {
    Ok(LossResult {
        value: loss_value(spec, p, g)?,
        grad_logits: loss_grad(spec, p, g)?,
    })
}

/// Central differences of `L(softmax(x), g)` in every logit coordinate.
pub fn finite_diff_grad(
    spec: &LossSpec,
    logits: &GridMap,
    g: &PixelDistribution,
    h: f64,
) -> Result<GridMap> {
    if !(1e-7..=1e-3).contains(&h) {
        return Err(Error::InvalidParameter("finite-difference step must lie in [1e-7, 1e-3]"));
    }
    logits.check_same_shape(g.grid())?;
    let (rows, cols) = logits.shape();
    let mut x = logits.values().to_vec();
    let mut out = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let base = x[i];
        x[i] = base + h;
        let plus = loss_value(spec, &softmax(&GridMap::new(rows, cols, x.clone())?)?, g)?;
        x[i] = base - h;
        let minus = loss_value(spec, &softmax(&GridMap::new(rows, cols, x.clone())?)?, g)?;
        x[i] = base;
        out.push((plus - minus) / (2.0 * h));
    }
    GridMap::new(rows, cols, out)
}

/// Worst coordinate error scaled by the largest reference magnitude:
/// `max_i |a_i - b_i| / max_i |b_i|`.
pub fn relative_error(analytic: &[f64], reference: &[f64]) -> f64 {
    let scale = reference.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let diff = analytic
        .iter()
        .zip(reference)
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn norm2(v: &[f64]) -> f64 {
    libm::sqrt(v.iter().map(|x| x * x).sum())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn value_slice(spec: &LossSpec, p: &[f64], g: &[f64]) -> f64 {
    let eps = spec.epsilon;
    match spec.kind {
        LossKind::ChiSquare => {
            p.iter()
                .zip(g)
                .map(|(&pj, &gj)| gj * gj / pj.max(eps))
                .sum::<f64>()
                - 1.0
        }
        LossKind::TotalVariation => {
            0.5 * p.iter().zip(g).map(|(pj, gj)| (gj - pj).abs()).sum::<f64>()
        }
        LossKind::Cosine => 1.0 - dot(p, g) / (norm2(p) * norm2(g)),
        LossKind::Bhattacharyya => {
            let bc: f64 = p.iter().zip(g).map(|(pj, gj)| libm::sqrt(pj * gj)).sum();
            -libm::log(bc)
        }
        LossKind::KLDivergence => p
            .iter()
            .zip(g)
            .filter(|(_, &gj)| gj > 0.0)
            .map(|(&pj, &gj)| gj * libm::log(gj / pj.max(eps)))
            .sum(),
        LossKind::Euclidean => p.iter().zip(g).map(|(pj, gj)| (pj - gj) * (pj - gj)).sum(),
        LossKind::Huber => {
            let d = spec.huber_delta;
            p.iter()
                .zip(g)
                .map(|(pj, gj)| {
                    let a = (pj - gj).abs();
                    if a <= d {
                        0.5 * a * a
                    } else {
                        d * (a - 0.5 * d)
                    }
                })
                .sum()
        }
    }
}

pub(crate) fn grad_slice(spec: &LossSpec, p: &[f64], g: &[f64]) -> Vec<f64> {
    let eps = spec.epsilon;
    match spec.kind {
        LossKind::ChiSquare => {
            // p_i sum_{j!=i} g_j^2/p_j - (g_i^2/p_i)(1 - p_i)
            let terms: Vec<f64> = p.iter().zip(g).map(|(&pj, &gj)| gj * gj / pj.max(eps)).collect();
            let total: f64 = terms.iter().sum();
            p.iter()
                .zip(&terms)
                .map(|(&pi, &ti)| pi * (total - ti) - ti * (1.0 - pi))
                .collect()
        }
        LossKind::TotalVariation => {
            // 1/2 [p_i sum_{j!=i} sgn(g_j - p_j) p_j - p_i sgn(g_i - p_i)(1 - p_i)]
            let terms: Vec<f64> = p.iter().zip(g).map(|(&pj, &gj)| sign(gj - pj) * pj).collect();
            let total: f64 = terms.iter().sum();
            p.iter()
                .zip(g)
                .zip(&terms)
                .map(|((&pi, &gi), &ti)| 0.5 * (pi * (total - ti) - pi * sign(gi - pi) * (1.0 - pi)))
                .collect()
        }
        LossKind::Cosine => {
            let (np, ng) = (norm2(p), norm2(g));
            let c = np * ng;
            let k = dot(p, g) / (np * np);
            let upstream: Vec<f64> = p.iter().zip(g).map(|(pj, gj)| -(gj - pj * k) / c).collect();
            softmax_vjp_slice(p, &upstream)
        }
        LossKind::Bhattacharyya => {
            // +1/(2B) [p_i sum_{j!=i} sqrt(p_j g_j) - sqrt(p_i g_i)(1 - p_i)]
            let roots: Vec<f64> = p.iter().zip(g).map(|(pj, gj)| libm::sqrt(pj * gj)).collect();
            let bc: f64 = roots.iter().sum();
            p.iter()
                .zip(&roots)
                .map(|(&pi, &ri)| (pi * (bc - ri) - ri * (1.0 - pi)) / (2.0 * bc))
                .collect()
        }
        LossKind::KLDivergence => {
            // p_i sum_{j!=i} g_j - g_i (1 - p_i), which reduces to p_i - g_i.
            let total: f64 = g.iter().sum();
            p.iter()
                .zip(g)
                .map(|(&pi, &gi)| pi * (total - gi) - gi * (1.0 - pi))
                .collect()
        }
        LossKind::Euclidean => {
            let upstream: Vec<f64> = p.iter().zip(g).map(|(pj, gj)| 2.0 * (pj - gj)).collect();
            softmax_vjp_slice(p, &upstream)
        }
        LossKind::Huber => {
            let d = spec.huber_delta;
            let upstream: Vec<f64> = p
                .iter()
                .zip(g)
                .map(|(pj, gj)| {
                    let diff = pj - gj;
                    if diff.abs() <= d {
                        diff
                    } else {
                        d * sign(diff)
                    }
                })
                .collect();
            softmax_vjp_slice(p, &upstream)
        }
    }
}

/// Logit gradients transcribed literally from the commonly printed table of
/// distance derivatives. Kept for comparison only; the trainer uses
/// [`loss_grad`].
pub mod printed {
    use super::*;

    /// Bhattacharyya with the printed `-1 / (2 sum_j sqrt(p_j g_j))` prefactor.
    /// Exactly the negation of the shipped gradient.
    pub fn bhattacharyya_grad(p: &[f64], g: &[f64]) -> Vec<f64> {
        let roots: Vec<f64> = p.iter().zip(g).map(|(pj, gj)| libm::sqrt(pj * gj)).collect();
        let bc: f64 = roots.iter().sum();
        p.iter()
            .zip(&roots)
            .map(|(&pi, &ri)| -(pi * (bc - ri) - ri * (1.0 - pi)) / (2.0 * bc))
            .collect()
    }

    /// Cosine distance as printed:
    /// `(1/C)[p_i sum_{j!=i} p_j (g_j - p_i (|g|/|p|) R) - p_i (g_i - p_i R)(1 - p_i)]`
    /// with `R = <p, g> / C` and `C = |p| |g|`.
    pub fn cosine_grad(p: &[f64], g: &[f64]) -> Vec<f64> {
        let (np, ng) = (norm2(p), norm2(g));
        let c = np * ng;
        let r = dot(p, g) / c;
        (0..p.len())
            .map(|i| {
                let pi = p[i];
                let off: f64 = (0..p.len())
                    .filter(|&j| j != i)
                    .map(|j| p[j] * (g[j] - pi * (ng / np) * r))
                    .sum();
                (pi * off - pi * (g[i] - pi * r) * (1.0 - pi)) / c
            })
            .collect()
    }
}

/// Outcome of [`certify`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Certification {
    pub kind: LossKind,
    pub trials: usize,
    /// Total-variation draws rejected for lying near a kink.
    pub resampled: usize,
    pub max_relative_error: f64,
    /// Largest `|sum_i dL/dx_i|` observed.
    pub max_gradient_sum: f64,
}

/// Separation from the total-variation kink required of every pixel before a
/// draw is accepted for certification.
pub const TV_KINK_MARGIN: f64 = 1e-4;

/// Compares [`loss_grad`] against [`finite_diff_grad`] on `trials` random
/// instances with grids between 1x2 and 16x16. Logits and targets are
/// standard-normal logits pushed through softmax.
pub fn certify(spec: &LossSpec, trials: usize, h: f64, seed: u64) -> Result<Certification> {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Certification {
        kind: spec.kind,
        trials: 0,
        resampled: 0,
        max_relative_error: 0.0,
        max_gradient_sum: 0.0,
    };
    while out.trials < trials {
        let rows = rng.random_range(1..=16usize);
        let cols = rng.random_range(if rows == 1 { 2 } else { 1 }..=16usize);
        let logits = GridMap::from_fn(rows, cols, |_, _| rng.sample(StandardNormal));
        let target = GridMap::from_fn(rows, cols, |_, _| rng.sample(StandardNormal));
        let p = softmax(&logits)?;
        let g = softmax(&target)?;
        if spec.kind == LossKind::TotalVariation
            && p.values().iter().zip(g.values()).any(|(a, b)| (a - b).abs() < TV_KINK_MARGIN)
        {
            out.resampled += 1;
            continue;
        }
        let analytic = loss_grad(spec, &p, &g)?;
        let numeric = finite_diff_grad(spec, &logits, &g, h)?;
        let err = relative_error(analytic.values(), numeric.values());
        let sum: f64 = analytic.values().iter().sum();
        out.max_relative_error = out.max_relative_error.max(err);
        out.max_gradient_sum = out.max_gradient_sum.max(sum.abs());
        out.trials += 1;
    }
    Ok(out)
}
