//! Ground-truth construction and resolution alignment.
//!
//! Fixations become a distribution in four steps: a binary fixation map, a
//! separable Gaussian blur (zero padding, kernel truncated at its width and
//! normalized to unit sum), min-max normalization, and softmax. During
//! training the normalized map is area-downsampled to the prediction grid
//! before the softmax; at inference the network response is bilinearly
//! upsampled to image size before its softmax.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::{min_max_normalize, softmax, Error, FixationSet, GridMap, PixelDistribution, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GtParams {
    /// Odd tap count of the 1-D kernel.
    pub kernel_width: usize,
    pub sigma: f64,
}

impl GtParams {
    /// Even widths are rounded up so the kernel has a center tap.
    pub fn new(kernel_width: usize, sigma: f64) -> Result<Self> {
        if kernel_width == 0 {
            return Err(Error::InvalidParameter("kernel_width must be positive"));
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidParameter("sigma must be positive"));
        }
        Ok(GtParams {
            kernel_width: kernel_width | 1,
            sigma,
        })
    }

    /// SALICON: width 153, sigma 19.
    pub fn salicon() -> Self {
        GtParams {
            kernel_width: 153,
            sigma: 19.0,
        }
    }

    /// OSIE: width 168 (rounded to 169), sigma 24.
    pub fn osie() -> Self {
        GtParams {
            kernel_width: 169,
            sigma: 24.0,
        }
    }

    /// Scale used for the 64x64 synthetic images.
    pub fn synthetic() -> Self {
        GtParams {
            kernel_width: 19,
            sigma: 3.0,
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "salicon" => Some(Self::salicon()),
            "osie" => Some(Self::osie()),
            "synth" => Some(Self::synthetic()),
            _ => None,
        }
    }

    /// Width `2 ceil(3 sigma) + 1`.
    pub fn for_sigma(sigma: f64) -> Result<Self> {
        Self::new(2 * libm::ceil(3.0 * sigma) as usize + 1, sigma)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CenterBiasParams {
    /// Blur applied before blending, in pixels; 0 disables it.
    pub blur_sigma: f64,
    pub bias_weight: f64,
    /// Center Gaussian width as a fraction of the image diagonal.
    pub bias_sigma: f64,
}

impl Default for CenterBiasParams {
    fn default() -> Self {
        CenterBiasParams {
            blur_sigma: 0.0,
            bias_weight: 0.0,
            bias_sigma: 0.25,
        }
    }
}

impl CenterBiasParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.blur_sigma >= 0.0 && self.blur_sigma.is_finite()) {
            return Err(Error::InvalidParameter("blur_sigma must be non-negative"));
        }
        if !(0.0..=1.0).contains(&self.bias_weight) {
            return Err(Error::InvalidParameter("bias_weight must lie in [0, 1]"));
        }
        if self.bias_weight > 0.0 && !(self.bias_sigma > 0.0 && self.bias_sigma.is_finite()) {
            return Err(Error::InvalidParameter("bias_sigma must be positive"));
        }
        Ok(())
    }
}

/// Ones at fixated pixels (duplicates collapse), zeros elsewhere.
pub fn binary_fixation_map(fix: &FixationSet) -> GridMap {
    let mut b = GridMap::zeros(fix.height(), fix.width());
    for &(r, c) in fix.points() {
        b.set(r, c, 1.0);
    }
    b
}

/// Normalized 1-D Gaussian taps.
pub fn gaussian_kernel(params: &GtParams) -> Vec<f64> {
    let radius = (params.kernel_width / 2) as f64;
    let denom = 2.0 * params.sigma * params.sigma;
    let mut k: Vec<f64> = (0..params.kernel_width)
        .map(|i| {
            let d = i as f64 - radius;
            libm::exp(-d * d / denom)
        })
        .collect();
    let total: f64 = k.iter().sum();
    for v in &mut k {
        *v /= total;
    }
    k
}

/// Separable Gaussian convolution with zero padding. Zero input pixels are
/// skipped, so sparse fixation maps are cheap even with wide kernels.
pub fn gaussian_smooth(b: &GridMap, params: &GtParams) -> GridMap {
    let kernel = gaussian_kernel(params);
    let radius = kernel.len() / 2;
    let (h, w) = b.shape();
    let src = b.values();

    let mut tmp = vec![0.0; h * w];
    for r in 0..h {
        let row = &src[r * w..(r + 1) * w];
        let out = &mut tmp[r * w..(r + 1) * w];
        for (c, &v) in row.iter().enumerate() {
            if v == 0.0 {
                continue;
            }
            let lo = c.saturating_sub(radius);
            let hi = (c + radius).min(w - 1);
            for (x, o) in out.iter_mut().enumerate().take(hi + 1).skip(lo) {
                *o += v * kernel[x + radius - c];
            }
        }
    }

    let mut out = vec![0.0; h * w];
    for r in 0..h {
        let lo = r.saturating_sub(radius);
        let hi = (r + radius).min(h - 1);
        for y in lo..=hi {
            let k = kernel[y + radius - r];
            let src_row = &tmp[r * w..(r + 1) * w];
            let dst_row = &mut out[y * w..(y + 1) * w];
            for (d, &s) in dst_row.iter_mut().zip(src_row) {
                if s != 0.0 {
                    *d += k * s;
                }
            }
        }
    }
    GridMap::from_raw(h, w, out)
}

/// The normalized map `x^g = minmax(smooth(binary(fix)))`, values in `[0, 1]`.
pub fn make_gt_logits(fix: &FixationSet, params: &GtParams) -> Result<GridMap> {
    if fix.is_empty() {
        return Err(Error::EmptyFixations);
    }
    Ok(min_max_normalize(&gaussian_smooth(&binary_fixation_map(fix), params)))
}

/// `g = softmax(x^g)`.
pub fn make_gt_distribution(fix: &FixationSet, params: &GtParams) -> Result<PixelDistribution> {
    softmax(&make_gt_logits(fix, params)?)
}

/// Per-output (source index, weight) lists for area averaging `n -> m`.
fn area_weights(n: usize, m: usize) -> Vec<Vec<(usize, f64)>> {
    let scale = n as f64 / m as f64;
    (0..m)
        .map(|o| {
            let start = o as f64 * scale;
            let end = (o + 1) as f64 * scale;
            let first = libm::floor(start) as usize;
            let last = (libm::ceil(end) as usize).min(n);
            let mut ws: Vec<(usize, f64)> = (first..last)
                .filter_map(|i| {
                    let overlap = end.min((i + 1) as f64) - start.max(i as f64);
                    (overlap > 0.0).then_some((i, overlap))
                })
                .collect();
            let total: f64 = ws.iter().map(|(_, w)| w).sum();
            for (_, w) in &mut ws {
                *w /= total;
            }
            ws
        })
        .collect()
}

fn separable(
    src: &GridMap,
    rows: &[Vec<(usize, f64)>],
    cols: &[Vec<(usize, f64)>],
) -> GridMap {
    let (h, w) = src.shape();
    let (oh, ow) = (rows.len(), cols.len());
    // Columns first: h x ow.
    let mut tmp = vec![0.0; h * ow];
    for r in 0..h {
        let s = &src.values()[r * w..(r + 1) * w];
        for (c, taps) in cols.iter().enumerate() {
            tmp[r * ow + c] = taps.iter().map(|&(i, wt)| wt * s[i]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for (r, taps) in rows.iter().enumerate() {
        for c in 0..ow {
            out[r * ow + c] = taps.iter().map(|&(i, wt)| wt * tmp[i * ow + c]).sum();
        }
    }
    GridMap::from_raw(oh, ow, out)
}

/// Box-filter resampling by fractional pixel overlap. Integer factors give
/// exact block means.
pub fn area_resample(src: &GridMap, out_h: usize, out_w: usize) -> Result<GridMap> {
    if out_h == 0 || out_w == 0 {
        return Err(Error::InvalidParameter("output dimensions must be positive"));
    }
    Ok(separable(
        src,
        &area_weights(src.height(), out_h),
        &area_weights(src.width(), out_w),
    ))
}

/// Area-average downsampling of the normalized ground-truth map.
pub fn downsample_gt(x_g: &GridMap, out_h: usize, out_w: usize) -> Result<GridMap> {
    if out_h > x_g.height() || out_w > x_g.width() {
        return Err(Error::InvalidParameter("downsample target exceeds input size"));
    }
    area_resample(x_g, out_h, out_w)
}

/// Training target at prediction resolution: `softmax(downsample(x^g))`.
pub fn training_target(x_g: &GridMap, out_h: usize, out_w: usize) -> Result<PixelDistribution> {
    softmax(&downsample_gt(x_g, out_h, out_w)?)
}

fn bilinear_weights(n: usize, m: usize) -> Vec<Vec<(usize, f64)>> {
    let scale = n as f64 / m as f64;
    (0..m)
        .map(|o| {
            let src = ((o as f64 + 0.5) * scale - 0.5).clamp(0.0, (n - 1) as f64);
            let i0 = libm::floor(src) as usize;
            let i1 = (i0 + 1).min(n - 1);
            let t = src - i0 as f64;
            if i1 == i0 || t == 0.0 {
                vec![(i0, 1.0)]
            } else {
                vec![(i0, 1.0 - t), (i1, t)]
            }
        })
        .collect()
}

/// Bilinear upsampling, pixel-center convention (no corner alignment),
/// edge samples clamped.
pub fn upsample_bilinear(small: &GridMap, out_h: usize, out_w: usize) -> Result<GridMap> {
    if out_h < small.height() || out_w < small.width() {
        return Err(Error::InvalidParameter("upsample target is smaller than input"));
    }
    Ok(separable(
        small,
        &bilinear_weights(small.height(), out_h),
        &bilinear_weights(small.width(), out_w),
    ))
}

/// Optional blur followed by a blend with a centered Gaussian prior, then
/// renormalized.
pub fn center_bias_postprocess(
    p: &PixelDistribution,
    params: &CenterBiasParams,
) -> Result<PixelDistribution> {
    params.validate()?;
    if params.blur_sigma == 0.0 && params.bias_weight == 0.0 {
        return Ok(p.clone());
    }
    let (h, w) = p.shape();
    let blurred = if params.blur_sigma > 0.0 {
        let smooth = gaussian_smooth(p.grid(), &GtParams::for_sigma(params.blur_sigma)?);
        PixelDistribution::normalized(smooth)?
    } else {
        p.clone()
    };
    let weight = params.bias_weight;
    if weight == 0.0 {
        return Ok(blurred);
    }
    let diag = libm::sqrt((h * h + w * w) as f64);
    let s = params.bias_sigma * diag;
    let (cr, cc) = ((h as f64 - 1.0) / 2.0, (w as f64 - 1.0) / 2.0);
    let center = PixelDistribution::normalized(GridMap::from_fn(h, w, |r, c| {
        let (dr, dc) = (r as f64 - cr, c as f64 - cc);
        libm::exp(-(dr * dr + dc * dc) / (2.0 * s * s))
    }))?;
    let mixed: Vec<f64> = blurred
        .values()
        .iter()
        .zip(center.values())
        .map(|(a, b)| (1.0 - weight) * a + weight * b)
        .collect();
    PixelDistribution::normalized(GridMap::new(h, w, mixed)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn fixations(h: usize, w: usize, pts: &[(usize, usize)]) -> FixationSet {
        FixationSet::new(h, w, pts.to_vec()).unwrap()
    }

    #[test]
    fn binary_map() {
        assert!(binary_fixation_map(&FixationSet::empty(3, 3).unwrap())
            .values()
            .iter()
            .all(|&v| v == 0.0));
        let b = binary_fixation_map(&fixations(2, 2, &[(0, 0)]));
        assert_eq!(b.values(), &[1.0, 0.0, 0.0, 0.0]);
        let d = binary_fixation_map(&fixations(2, 2, &[(1, 0), (1, 0)]));
        assert_eq!(d.get(1, 0), 1.0);
    }

    #[test]
    fn presets() {
        assert_eq!(GtParams::salicon().kernel_width, 153);
        assert_eq!(GtParams::salicon().sigma, 19.0);
        assert_eq!(GtParams::osie().kernel_width, 169);
        assert_eq!(GtParams::new(168, 24.0).unwrap(), GtParams::osie());
        assert!(GtParams::new(5, 0.0).is_err());
        assert_eq!(GtParams::preset("salicon"), Some(GtParams::salicon()));
        assert_eq!(GtParams::preset("mit"), None);
    }

    #[test]
    fn kernel_is_normalized_and_symmetric() {
        let k = gaussian_kernel(&GtParams::salicon());
        assert_eq!(k.len(), 153);
        assert!((k.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        for i in 0..76 {
            assert_eq!(k[i], k[152 - i]);
        }
        assert!(k[76] > k[75]);
    }

    #[test]
    fn delta_reproduces_kernel() {
        let params = GtParams::new(11, 2.0).unwrap();
        let k = gaussian_kernel(&params);
        let out = gaussian_smooth(&binary_fixation_map(&fixations(31, 31, &[(15, 15)])), &params);
        for r in 0..31 {
            for c in 0..31 {
                let (dr, dc) = (r as isize - 15, c as isize - 15);
                let expected = if dr.abs() <= 5 && dc.abs() <= 5 {
                    k[(dr + 5) as usize] * k[(dc + 5) as usize]
                } else {
                    0.0
                };
                assert!((out.get(r, c) - expected).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn linearity_and_zero() {
        let params = GtParams::new(9, 1.5).unwrap();
        assert!(gaussian_smooth(&GridMap::zeros(8, 8), &params).values().iter().all(|&v| v == 0.0));
        let a = gaussian_smooth(&binary_fixation_map(&fixations(40, 40, &[(8, 8)])), &params);
        let b = gaussian_smooth(&binary_fixation_map(&fixations(40, 40, &[(30, 28)])), &params);
        let ab = gaussian_smooth(&binary_fixation_map(&fixations(40, 40, &[(8, 8), (30, 28)])), &params);
        for i in 0..ab.len() {
            assert!((ab.values()[i] - a.values()[i] - b.values()[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn interior_mass_is_conserved() {
        let params = GtParams::new(15, 3.0).unwrap();
        let b = binary_fixation_map(&fixations(50, 50, &[(10, 10), (25, 30), (39, 39), (25, 30)]));
        let out = gaussian_smooth(&b, &params);
        assert!((out.sum() - b.sum()).abs() < 1e-9);
    }

    #[test]
    fn gt_distribution() {
        let params = GtParams::synthetic();
        let g = make_gt_distribution(&fixations(33, 33, &[(16, 16)]), &params).unwrap();
        assert_eq!(g.grid().argmax(), 16 * 33 + 16);
        assert!((g.values().iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert_eq!(
            make_gt_distribution(&FixationSet::empty(4, 4).unwrap(), &params),
            Err(Error::EmptyFixations)
        );

        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let pts: Vec<_> = (0..rng.random_range(1..30))
                .map(|_| (rng.random_range(0..40), rng.random_range(0..48)))
                .collect();
            let g = make_gt_distribution(&fixations(40, 48, &pts), &params).unwrap();
            assert!((g.values().iter().sum::<f64>() - 1.0).abs() < 1e-9);
            assert!(g.values().iter().all(|&v| v > 0.0));
        }
    }

    fn neighborhood_mass(g: &PixelDistribution, center: (usize, usize), radius: usize) -> f64 {
        let (h, w) = g.shape();
        let mut m = 0.0;
        for r in center.0.saturating_sub(radius)..(center.0 + radius + 1).min(h) {
            for c in center.1.saturating_sub(radius)..(center.1 + radius + 1).min(w) {
                m += g.grid().get(r, c);
            }
        }
        m
    }

    #[test]
    fn heavier_cluster_gets_more_mass() {
        // Five fixations around (15, 15), one at (15, 48).
        let pts = [(15, 15), (14, 15), (16, 15), (15, 14), (15, 16), (15, 48)];
        let g = make_gt_distribution(&fixations(32, 64, &pts), &GtParams::synthetic()).unwrap();
        let heavy = neighborhood_mass(&g, (15, 15), 9);
        let light = neighborhood_mass(&g, (15, 48), 9);
        assert!(heavy > light, "{heavy} vs {light}");
    }

    #[test]
    fn adding_isolated_fixation_raises_local_mass() {
        let params = GtParams::synthetic();
        let base = [(10, 10), (12, 11)];
        let before = make_gt_distribution(&fixations(64, 64, &base), &params).unwrap();
        let after =
            make_gt_distribution(&fixations(64, 64, &[base[0], base[1], (48, 50)]), &params).unwrap();
        assert!(neighborhood_mass(&after, (48, 50), 9) > neighborhood_mass(&before, (48, 50), 9));
    }

    #[test]
    fn downsample_examples() {
        let c = downsample_gt(&GridMap::filled(2, 2, 0.7), 1, 1).unwrap();
        assert_eq!(c.values(), &[0.7]);
        let checker = GridMap::from_fn(4, 4, |r, c| ((r + c) % 2) as f64);
        let d = downsample_gt(&checker, 2, 2).unwrap();
        assert!(d.values().iter().all(|&v| v == 0.5));
        assert!(downsample_gt(&checker, 5, 2).is_err());

        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let src = GridMap::from_fn(12, 18, |_, _| rng.random::<f64>());
        let d = downsample_gt(&src, 4, 6).unwrap();
        for br in 0..4 {
            for bc in 0..6 {
                let mut m = 0.0;
                for r in 0..3 {
                    for c in 0..3 {
                        m += src.get(br * 3 + r, bc * 3 + c);
                    }
                }
                assert!((d.get(br, bc) - m / 9.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn fractional_area_resample_preserves_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let src = GridMap::from_fn(10, 7, |_, _| rng.random::<f64>());
        let d = area_resample(&src, 3, 4).unwrap();
        assert!((d.sum() / 12.0 - src.sum() / 70.0).abs() < 1e-12);
    }

    #[test]
    fn upsample_examples() {
        let u = upsample_bilinear(&GridMap::new(1, 2, vec![0.0, 1.0]).unwrap(), 1, 4).unwrap();
        assert_eq!(u.values(), &[0.0, 0.25, 0.75, 1.0]);
        let c = upsample_bilinear(&GridMap::filled(3, 3, 2.5), 9, 12).unwrap();
        assert!(c.values().iter().all(|&v| (v - 2.5).abs() < 1e-15));
        assert!(upsample_bilinear(&GridMap::zeros(3, 3), 2, 3).is_err());
    }

    #[test]
    fn constant_round_trip_and_smooth_round_trip() {
        let c = GridMap::filled(16, 16, 0.3);
        let back = upsample_bilinear(&downsample_gt(&c, 4, 4).unwrap(), 16, 16).unwrap();
        assert!(back.values().iter().all(|&v| (v - 0.3).abs() < 1e-12));

        let smooth = GridMap::from_fn(8, 8, |r, c| libm::sin(r as f64 * 0.4) + libm::cos(c as f64 * 0.3));
        let up = upsample_bilinear(&smooth, 32, 32).unwrap();
        let down = downsample_gt(&up, 8, 8).unwrap();
        for (a, b) in smooth.values().iter().zip(down.values()) {
            assert!((a - b).abs() < 0.1);
        }
    }

    #[test]
    fn center_bias() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let p = softmax(&GridMap::from_fn(20, 30, |_, _| rng.random::<f64>() * 3.0)).unwrap();
        let id = center_bias_postprocess(&p, &CenterBiasParams::default()).unwrap();
        assert_eq!(id, p);

        let pure = CenterBiasParams {
            blur_sigma: 0.0,
            bias_weight: 1.0,
            bias_sigma: 0.2,
        };
        let a = center_bias_postprocess(&p, &pure).unwrap();
        let b = center_bias_postprocess(&PixelDistribution::uniform(20, 30), &pure).unwrap();
        for (x, y) in a.values().iter().zip(b.values()) {
            assert!((x - y).abs() < 1e-15);
        }

        let mixed = CenterBiasParams {
            blur_sigma: 2.0,
            bias_weight: 0.3,
            bias_sigma: 0.25,
        };
        let out = center_bias_postprocess(&p, &mixed).unwrap();
        assert!((out.values().iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(out.values().iter().all(|&v| v >= 0.0));

        let bad = CenterBiasParams {
            bias_weight: 1.5,
            ..mixed
        };
        assert!(center_bias_postprocess(&p, &bad).is_err());
    }

    #[test]
    fn salicon_scale_smoothing() {
        let pts: Vec<_> = (0..40).map(|i| (i * 11 % 480, i * 37 % 640)).collect();
        let g = make_gt_distribution(&fixations(480, 640, &pts), &GtParams::salicon()).unwrap();
        assert!((g.values().iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }
}
