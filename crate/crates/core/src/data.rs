//! Deterministic synthetic fixation dataset.
//!
//! Each image is a noisy background with a few bright Gaussian blobs.
//! Fixations are drawn from a mixture of blob-centered Gaussians (weighted by
//! blob contrast) and a Gaussian at the image center. Image `i` uses its own
//! ChaCha stream of the configured seed, so samples can be generated in any
//! order and a dataset is a pure function of its config.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::net::Tensor;
use crate::pipeline::{make_gt_logits, GtParams};
use crate::{softmax, Error, FixationSet, GridMap, PixelDistribution, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_images: usize,
    pub height: usize,
    pub width: usize,
    /// 1 (grayscale) or 3.
    pub channels: usize,
    /// Inclusive range of blobs per image.
    pub blobs_min: usize,
    pub blobs_max: usize,
    /// Blob standard deviation range, in pixels.
    pub blob_sigma_min: f64,
    pub blob_sigma_max: f64,
    /// Blob peak intensity range above the background.
    pub contrast_min: f64,
    pub contrast_max: f64,
    pub fixations_per_image: usize,
    /// Probability that a fixation comes from the center component.
    pub center_bias_weight: f64,
    /// Std of the center component as a fraction of `min(height, width)`.
    pub center_sigma_frac: f64,
    /// Std of blob fixations as a fraction of the blob's sigma.
    pub fixation_spread: f64,
    /// Std of the additive background noise.
    pub noise_sigma: f64,
    pub gt: GtParams,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_images: 100,
            height: 64,
            width: 64,
            channels: 1,
            blobs_min: 1,
            blobs_max: 3,
            blob_sigma_min: 3.0,
            blob_sigma_max: 6.0,
            contrast_min: 0.4,
            contrast_max: 1.0,
            fixations_per_image: 60,
            center_bias_weight: 0.3,
            center_sigma_frac: 0.15,
            fixation_spread: 0.5,
            noise_sigma: 0.1,
            gt: GtParams::synthetic(),
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let checks: [(bool, &'static str); 10] = [
            (self.n_images > 0, "n_images must be positive"),
            (self.height > 0 && self.width > 0, "image dimensions must be positive"),
            (self.channels == 1 || self.channels == 3, "channels must be 1 or 3"),
            (
                self.blobs_min > 0 && self.blobs_min <= self.blobs_max,
                "blob count range must be positive and ordered",
            ),
            (
                self.blob_sigma_min > 0.0 && self.blob_sigma_min <= self.blob_sigma_max,
                "blob sigma range must be positive and ordered",
            ),
            (
                self.contrast_min > 0.0 && self.contrast_min <= self.contrast_max,
                "contrast range must be positive and ordered",
            ),
            (self.fixations_per_image > 0, "fixations_per_image must be positive"),
            (
                (0.0..=1.0).contains(&self.center_bias_weight),
                "center_bias_weight must lie in [0, 1]",
            ),
            (
                self.center_sigma_frac > 0.0 && self.fixation_spread > 0.0,
                "fixation spreads must be positive",
            ),
            (self.noise_sigma >= 0.0, "noise_sigma must be non-negative"),
        ];
        for (ok, msg) in checks {
            if !ok {
                return Err(Error::InvalidParameter(msg));
            }
        }
        let finite = [
            self.blob_sigma_max,
            self.contrast_max,
            self.center_sigma_frac,
            self.fixation_spread,
            self.noise_sigma,
        ];
        if finite.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Blob {
    pub row: f64,
    pub col: f64,
    pub sigma: f64,
    pub contrast: f64,
}

impl Blob {
    /// Whether pixel `(row, col)` lies within `k` sigmas of the center.
    pub fn contains(&self, row: usize, col: usize, k: f64) -> bool {
        let (dr, dc) = (row as f64 - self.row, col as f64 - self.col);
        dr * dr + dc * dc <= (k * self.sigma) * (k * self.sigma)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub image: Tensor,
    pub fixations: FixationSet,
    /// Normalized ground-truth map `x^g` in `[0, 1]`.
    pub gt_logits: GridMap,
    /// `softmax(gt_logits)`.
    pub gt: PixelDistribution,
    pub blobs: Vec<Blob>,
}

pub fn generate(config: &SynthConfig) -> Result<Vec<Sample>> {
    config.validate()?;
    (0..config.n_images).map(|i| generate_one(config, i)).collect()
}

/// Sample `index` of the dataset described by `config`.
pub fn generate_one(config: &SynthConfig, index: usize) -> Result<Sample> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(index as u64);
    let (h, w) = (config.height, config.width);

    let k = rng.random_range(config.blobs_min..=config.blobs_max);
    let blobs: Vec<Blob> = (0..k)
        .map(|_| {
            let sigma = uniform(&mut rng, config.blob_sigma_min, config.blob_sigma_max);
            let contrast = uniform(&mut rng, config.contrast_min, config.contrast_max);
            // Keep centers a sigma away from the border when the image allows.
            let row = center_coord(&mut rng, h, sigma);
            let col = center_coord(&mut rng, w, sigma);
            Blob {
                row,
                col,
                sigma,
                contrast,
            }
        })
        .collect();

    let pattern = GridMap::from_fn(h, w, |r, c| {
        blobs
            .iter()
            .map(|b| {
                let (dr, dc) = (r as f64 - b.row, c as f64 - b.col);
                b.contrast * libm::exp(-(dr * dr + dc * dc) / (2.0 * b.sigma * b.sigma))
            })
            .sum()
    });
    let mut data = Vec::with_capacity(config.channels * h * w);
    for _ in 0..config.channels {
        for &v in pattern.values() {
            let n: f64 = StandardNormal.sample(&mut rng);
            data.push(v + config.noise_sigma * n);
        }
    }
    let image = Tensor::new(config.channels, h, w, data)?;

    let total_contrast: f64 = blobs.iter().map(|b| b.contrast).sum();
    let center_sigma = config.center_sigma_frac * h.min(w) as f64;
    let (cr, cc) = ((h as f64 - 1.0) / 2.0, (w as f64 - 1.0) / 2.0);
    let mut points = Vec::with_capacity(config.fixations_per_image);
    while points.len() < config.fixations_per_image {
        let (mr, mc, s) = if rng.random::<f64>() < config.center_bias_weight {
            (cr, cc, center_sigma)
        } else {
            let mut pick = rng.random::<f64>() * total_contrast;
            let mut chosen = blobs[blobs.len() - 1];
            for b in &blobs {
                if pick < b.contrast {
                    chosen = *b;
                    break;
                }
                pick -= b.contrast;
            }
            (chosen.row, chosen.col, config.fixation_spread * chosen.sigma)
        };
        let normal = Normal::new(0.0, s).map_err(|_| Error::InvalidParameter("invalid fixation spread"))?;
        let r = libm::round(mr + normal.sample(&mut rng));
        let c = libm::round(mc + normal.sample(&mut rng));
        // Off-image draws are rejected and redrawn.
        if r >= 0.0 && c >= 0.0 && r < h as f64 && c < w as f64 {
            points.push((r as usize, c as usize));
        }
    }
    let fixations = FixationSet::new(h, w, points)?;
    let gt_logits = make_gt_logits(&fixations, &config.gt)?;
    let gt = softmax(&gt_logits)?;
    Ok(Sample {
        image,
        fixations,
        gt_logits,
        gt,
        blobs,
    })
}

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

fn center_coord(rng: &mut ChaCha8Rng, n: usize, margin: f64) -> f64 {
    let max = (n - 1) as f64;
    if 2.0 * margin < max {
        uniform(rng, margin, max - margin)
    } else {
        max / 2.0
    }
}
