//! Saliency evaluation metrics.
//!
//! | metric    | inputs                      | definition |
//! |-----------|-----------------------------|------------|
//! | AUC-Judd  | map, fixations              | ROC over thresholds at fixated values; TPR over fixated pixels, FPR over all pixels; a pixel counts as positive when its value is `>=` the threshold |
//! | AUC-Borji | map, fixations, seed        | pairwise AUC of fixated values vs uniformly sampled pixels, ties count 1/2, mean over splits |
//! | sAUC      | map, fixations, bank, seed  | as Borji but negatives are other images' fixation locations |
//! | CC        | map, map                    | Pearson correlation |
//! | NSS       | map, fixations              | mean of the standardized map (sample std, N-1) at fixations |
//! | SIM       | distribution, distribution  | `sum_i min(p_i, g_i)` |
//! | EMD       | distribution, distribution  | exact optimal transport, Euclidean ground distance in pixels |
//!
//! AUC variants count each fixated pixel once even when several fixations
//! land on it.

mod auc;
mod emd;
mod lp;

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

pub use auc::{auc_borji, auc_judd, sauc, ShuffleBank};
pub use emd::{emd, emd_bruteforce, emd_solve_grid, BRUTEFORCE_MAX_CELLS, DEFAULT_GRID_LIMIT};

use crate::{Error, FixationSet, GridMap, PixelDistribution, Result};

/// Pearson correlation coefficient over pixels.
pub fn cc(sal: &GridMap, gt: &GridMap) -> Result<f64> {
    sal.check_same_shape(gt)?;
    let n = sal.len() as f64;
    let ma = sal.sum() / n;
    let mb = gt.sum() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (a, b) in sal.values().iter().zip(gt.values()) {
        let (da, db) = (a - ma, b - mb);
        sab += da * db;
        saa += da * da;
        sbb += db * db;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(Error::ConstantMap);
    }
    Ok((sab / libm::sqrt(saa * sbb)).clamp(-1.0, 1.0))
}

/// Normalized scanpath saliency with the sample (N-1) standard deviation.
pub fn nss(sal: &GridMap, fix: &FixationSet) -> Result<f64> {
    fix.check_grid(sal)?;
    if fix.is_empty() {
        return Err(Error::EmptyFixations);
    }
    let n = sal.len();
    if n < 2 {
        return Err(Error::ConstantMap);
    }
    let mean = sal.sum() / n as f64;
    let var = sal.values().iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    if var == 0.0 {
        return Err(Error::ConstantMap);
    }
    let sd = libm::sqrt(var);
    let total: f64 = fix.indices().map(|i| (sal.values()[i] - mean) / sd).sum();
    Ok(total / fix.len() as f64)
}

/// Histogram intersection of two distributions.
pub fn sim(p: &PixelDistribution, g: &PixelDistribution) -> Result<f64> {
    p.grid().check_same_shape(g.grid())?;
    Ok(p.values().iter().zip(g.values()).map(|(a, b)| a.min(*b)).sum())
}

/// Which metrics to compute and with what parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricOptions {
    pub auc_judd: bool,
    pub auc_borji: bool,
    pub sauc: bool,
    pub cc: bool,
    pub nss: bool,
    pub sim: bool,
    pub emd: bool,
    pub n_splits: usize,
    /// Negatives per split; `None` means one per fixation.
    pub n_neg: Option<usize>,
    pub seed: u64,
    pub emd_grid_limit: usize,
}

impl Default for MetricOptions {
    fn default() -> Self {
        MetricOptions {
            auc_judd: true,
            auc_borji: true,
            sauc: true,
            cc: true,
            nss: true,
            sim: true,
            emd: true,
            n_splits: 100,
            n_neg: None,
            seed: 0,
            emd_grid_limit: DEFAULT_GRID_LIMIT,
        }
    }
}

impl MetricOptions {
    /// The four columns of the loss comparison: AUC-Judd, sAUC, CC, NSS.
    pub fn loss_table() -> Self {
        MetricOptions {
            auc_borji: false,
            sim: false,
            emd: false,
            ..Self::default()
        }
    }
}

/// One image's scores. Parameters are echoed so a report is reproducible on
/// its own.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub image: usize,
    pub auc_judd: Option<f64>,
    pub auc_borji: Option<f64>,
    pub sauc: Option<f64>,
    pub cc: Option<f64>,
    pub nss: Option<f64>,
    pub sim: Option<f64>,
    pub emd: Option<f64>,
    pub n_splits: usize,
    pub n_neg: usize,
    pub seed: u64,
    pub emd_grid_limit: usize,
}

/// Seed for image `index` derived from a run seed (splitmix64 finalizer), so
/// per-image results do not depend on evaluation order.
pub fn image_seed(seed: u64, index: usize) -> u64 {
    let mut z = seed ^ (index as u64).wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Scores a predicted distribution against a ground-truth distribution and
/// the fixations it was built from. `bank` is required when sAUC is enabled.
pub fn evaluate(
    index: usize,
    pred: &PixelDistribution,
    gt: &PixelDistribution,
    fix: &FixationSet,
    bank: Option<&ShuffleBank>,
    opts: &MetricOptions,
) -> Result<MetricReport> {
    pred.grid().check_same_shape(gt.grid())?;
    fix.check_grid(pred.grid())?;
    let sal = pred.grid();
    let seed = image_seed(opts.seed, index);
    let n_neg = opts.n_neg.unwrap_or(fix.len());
    let mut report = MetricReport {
        image: index,
        auc_judd: None,
        auc_borji: None,
        sauc: None,
        cc: None,
        nss: None,
        sim: None,
        emd: None,
        n_splits: opts.n_splits,
        n_neg,
        seed: opts.seed,
        emd_grid_limit: opts.emd_grid_limit,
    };
    if opts.auc_judd {
        report.auc_judd = Some(auc_judd(sal, fix)?);
    }
    if opts.auc_borji {
        report.auc_borji = Some(auc_borji(sal, fix, opts.n_splits, n_neg, seed)?);
    }
    if opts.sauc {
        let bank = bank.ok_or(Error::InvalidParameter("sAUC needs a shuffle bank"))?;
        report.sauc = Some(sauc(sal, fix, bank, opts.n_splits, seed)?);
    }
    // CC and NSS are undefined on a constant map; the report leaves them empty.
    if opts.cc {
        report.cc = defined(cc(sal, gt.grid()))?;
    }
    if opts.nss {
        report.nss = defined(nss(sal, fix))?;
    }
    if opts.sim {
        report.sim = Some(sim(pred, gt)?);
    }
    if opts.emd {
        report.emd = Some(emd(pred, gt, opts.emd_grid_limit)?);
    }
    Ok(report)
}

fn defined(r: Result<f64>) -> Result<Option<f64>> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(Error::ConstantMap) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Means over a batch of reports, each metric averaged over the reports that
/// carry it.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub images: usize,
    pub auc_judd: Option<f64>,
    pub auc_borji: Option<f64>,
    pub sauc: Option<f64>,
    pub cc: Option<f64>,
    pub nss: Option<f64>,
    pub sim: Option<f64>,
    pub emd: Option<f64>,
}

impl MetricSummary {
    pub fn mean(reports: &[MetricReport]) -> Self {
        fn avg(reports: &[MetricReport], f: impl Fn(&MetricReport) -> Option<f64>) -> Option<f64> {
            if reports.is_empty() {
                return None;
            }
            let vals: Vec<f64> = reports.iter().filter_map(f).collect();
            if vals.is_empty() {
                None
            } else {
                Some(vals.iter().sum::<f64>() / vals.len() as f64)
            }
        }
        MetricSummary {
            images: reports.len(),
            auc_judd: avg(reports, |r| r.auc_judd),
            auc_borji: avg(reports, |r| r.auc_borji),
            sauc: avg(reports, |r| r.sauc),
            cc: avg(reports, |r| r.cc),
            nss: avg(reports, |r| r.nss),
            sim: avg(reports, |r| r.sim),
            emd: avg(reports, |r| r.emd),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn grid(h: usize, w: usize, v: &[f64]) -> GridMap {
        GridMap::new(h, w, v.to_vec()).unwrap()
    }

    #[test]
    fn cc_examples() {
        let a = grid(1, 4, &[1.0, 2.0, 3.0, 4.0]);
        assert!((cc(&a, &a).unwrap() - 1.0).abs() < 1e-15);
        let neg = a.map(|v| 10.0 - v);
        assert!((cc(&a, &neg).unwrap() + 1.0).abs() < 1e-15);
        // Means 2.5 and 2.75: sab = 6.5, saa = 5, sbb = 8.75 (numpy.corrcoef agrees).
        let b = grid(1, 4, &[1.0, 2.0, 3.0, 5.0]);
        let expected = 6.5 / libm::sqrt(5.0 * 8.75);
        assert!((cc(&a, &b).unwrap() - expected).abs() < 1e-15);
        assert!((expected - 0.982_707_629_823_990_8).abs() < 1e-15);
        assert_eq!(cc(&a, &GridMap::filled(1, 4, 2.0)), Err(Error::ConstantMap));
    }

    #[test]
    fn nss_examples() {
        let m = grid(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let top = FixationSet::new(2, 2, vec![(1, 1)]).unwrap();
        let v = nss(&m, &top).unwrap();
        assert!((v - 1.5 / libm::sqrt(5.0 / 3.0)).abs() < 1e-15);
        assert!((v - 1.161895).abs() < 1e-6);
        let bottom = FixationSet::new(2, 2, vec![(0, 0)]).unwrap();
        assert!((nss(&m, &bottom).unwrap() + 1.161895).abs() < 1e-6);
        let all = FixationSet::new(2, 2, vec![(0, 0), (0, 1), (1, 0), (1, 1)]).unwrap();
        assert!(nss(&m, &all).unwrap().abs() < 1e-12);
        assert_eq!(nss(&GridMap::zeros(2, 2), &top), Err(Error::ConstantMap));
        assert_eq!(
            nss(&m, &FixationSet::empty(2, 2).unwrap()),
            Err(Error::EmptyFixations)
        );
    }

    #[test]
    fn sim_examples() {
        let p = PixelDistribution::new(grid(1, 2, &[0.5, 0.5])).unwrap();
        let g = PixelDistribution::new(grid(1, 2, &[1.0, 0.0])).unwrap();
        assert_eq!(sim(&p, &g).unwrap(), 0.5);
        assert_eq!(sim(&p, &p).unwrap(), 1.0);
        let h = PixelDistribution::new(grid(1, 2, &[0.0, 1.0])).unwrap();
        assert_eq!(sim(&g, &h).unwrap(), 0.0);
        assert_eq!(sim(&p, &g).unwrap(), sim(&g, &p).unwrap());
    }

    #[test]
    fn affine_invariance_cc_nss() {
        let a = GridMap::from_fn(5, 5, |r, c| libm::sin((r * 5 + c) as f64 * 1.7));
        let b = GridMap::from_fn(5, 5, |r, c| libm::cos((r * 3 + c) as f64 * 0.9));
        let fix = FixationSet::new(5, 5, vec![(1, 1), (4, 2), (0, 3)]).unwrap();
        let t = a.map(|v| 3.5 * v - 7.0);
        assert!((cc(&a, &b).unwrap() - cc(&t, &b).unwrap()).abs() < 1e-10);
        assert!((cc(&a, &b).unwrap() - cc(&a, &b.map(|v| 0.2 * v + 1.0)).unwrap()).abs() < 1e-10);
        assert!((nss(&a, &fix).unwrap() - nss(&t, &fix).unwrap()).abs() < 1e-10);
    }

    #[test]
    fn image_seeds_differ() {
        assert_ne!(image_seed(7, 0), image_seed(7, 1));
        assert_eq!(image_seed(7, 3), image_seed(7, 3));
    }

    #[test]
    fn evaluate_requires_bank_for_sauc() {
        let d = PixelDistribution::uniform(4, 4);
        let fix = FixationSet::new(4, 4, vec![(1, 1)]).unwrap();
        let opts = MetricOptions::default();
        assert!(evaluate(0, &d, &d, &fix, None, &opts).is_err());
    }
}
