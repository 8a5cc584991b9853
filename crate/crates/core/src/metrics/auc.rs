use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{Error, FixationSet, GridMap, Result};

/// Saliency values at the distinct fixated pixels.
fn fixated_values(sal: &GridMap, fix: &FixationSet) -> Result<Vec<f64>> {
    fix.check_grid(sal)?;
    if fix.is_empty() {
        return Err(Error::EmptyFixations);
    }
    let mut idx: Vec<usize> = fix.indices().collect();
    idx.sort_unstable();
    idx.dedup();
    Ok(idx.into_iter().map(|i| sal.values()[i]).collect())
}

fn sort_desc(v: &mut [f64]) {
    v.sort_unstable_by(|a, b| b.total_cmp(a));
}

/// Number of entries `>= t` in a descending slice.
fn count_at_least(desc: &[f64], t: f64) -> usize {
    desc.partition_point(|&v| v >= t)
}

/// AUC-Judd: thresholds at the fixated values, trapezoidal area under
/// (FPR over all pixels, TPR over fixated pixels), closed with (0,0) and (1,1).
pub fn auc_judd(sal: &GridMap, fix: &FixationSet) -> Result<f64> {
    let mut pos = fixated_values(sal, fix)?;
    sort_desc(&mut pos);
    let mut all = sal.values().to_vec();
    sort_desc(&mut all);
    let (n_pos, n_all) = (pos.len() as f64, all.len() as f64);

    let mut thresholds = pos.clone();
    thresholds.dedup();
    let mut area = 0.0;
    let (mut prev_fpr, mut prev_tpr) = (0.0, 0.0);
    for &t in &thresholds {
        let tpr = count_at_least(&pos, t) as f64 / n_pos;
        let fpr = count_at_least(&all, t) as f64 / n_all;
        area += (fpr - prev_fpr) * (tpr + prev_tpr) * 0.5;
        prev_fpr = fpr;
        prev_tpr = tpr;
    }
    area += (1.0 - prev_fpr) * (1.0 + prev_tpr) * 0.5;
    Ok(area)
}

/// Mann-Whitney AUC of `pos` against `neg`; ties count one half.
fn pairwise_auc(pos: &[f64], neg: &mut [f64]) -> f64 {
    neg.sort_unstable_by(|a, b| a.total_cmp(b));
    // Twice the score, accumulated in integers so ties are exact.
    let mut twice: u64 = 0;
    for &v in pos {
        let below = neg.partition_point(|&x| x < v);
        let not_above = neg.partition_point(|&x| x <= v);
        twice += 2 * below as u64 + (not_above - below) as u64;
    }
    twice as f64 / (2.0 * pos.len() as f64 * neg.len() as f64)
}

/// AUC-Borji: fixated values against `n_neg` pixels drawn uniformly with
/// replacement, averaged over `n_splits` draws.
pub fn auc_borji(
    sal: &GridMap,
    fix: &FixationSet,
    n_splits: usize,
    n_neg: usize,
    seed: u64,
) -> Result<f64> {
    if n_splits == 0 || n_neg == 0 {
        return Err(Error::InvalidParameter("n_splits and n_neg must be positive"));
    }
    let pos = fixated_values(sal, fix)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = sal.len();
    let mut neg = Vec::with_capacity(n_neg);
    let mut total = 0.0;
    for _ in 0..n_splits {
        neg.clear();
        neg.extend((0..n_neg).map(|_| sal.values()[rng.random_range(0..n)]));
        total += pairwise_auc(&pos, &mut neg);
    }
    Ok(total / n_splits as f64)
}

/// Fixations pooled from other images, used as sAUC negatives.
#[derive(Debug, Clone, PartialEq)]
pub struct ShuffleBank {
    sets: Vec<FixationSet>,
}

impl ShuffleBank {
    pub fn new(sets: Vec<FixationSet>) -> Result<Self> {
        if sets.iter().all(|s| s.is_empty()) {
            return Err(Error::InvalidParameter("shuffle bank has no fixations"));
        }
        Ok(ShuffleBank { sets })
    }

    /// Bank of every set except the one at `index`.
    pub fn excluding(all: &[FixationSet], index: usize) -> Result<Self> {
        Self::new(
            all.iter()
                .enumerate()
                .filter(|&(i, _)| i != index)
                .map(|(_, s)| s.clone())
                .collect(),
        )
    }

    pub fn sets(&self) -> &[FixationSet] {
        &self.sets
    }

    /// Pooled locations rescaled to a `height x width` image.
    pub fn locations(&self, height: usize, width: usize) -> Vec<usize> {
        let mut out = Vec::new();
        for set in &self.sets {
            for &(r, c) in set.points() {
                let rr = r * height / set.height();
                let cc = c * width / set.width();
                out.push(rr * width + cc);
            }
        }
        out
    }
}

/// Shuffled AUC: as [`auc_borji`] with negatives drawn (with replacement)
/// from the bank's fixation locations, one per image fixation.
pub fn sauc(
    sal: &GridMap,
    fix: &FixationSet,
    bank: &ShuffleBank,
    n_splits: usize,
    seed: u64,
) -> Result<f64> {
    if n_splits == 0 {
        return Err(Error::InvalidParameter("n_splits must be positive"));
    }
    let pos = fixated_values(sal, fix)?;
    let locations = bank.locations(sal.height(), sal.width());
    if locations.is_empty() {
        return Err(Error::InvalidParameter("shuffle bank has no fixations"));
    }
    let n_neg = fix.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut neg = Vec::with_capacity(n_neg);
    let mut total = 0.0;
    for _ in 0..n_splits {
        neg.clear();
        neg.extend(
            (0..n_neg).map(|_| sal.values()[locations[rng.random_range(0..locations.len())]]),
        );
        total += pairwise_auc(&pos, &mut neg);
    }
    Ok(total / n_splits as f64)
}
