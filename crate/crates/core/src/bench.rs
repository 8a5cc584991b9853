//! Loss comparison: the same network trained with each loss on the same
//! synthetic data, scored on a held-out split.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::data::{generate, Sample, SynthConfig};
use crate::metrics::{MetricOptions, MetricSummary};
use crate::net::{train, validate, EpochRecord, FcnModel, Init, TrainConfig, Validation};
use crate::{Error, LossKind, LossSpec, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub losses: Vec<LossKind>,
    /// One training run per (loss, seed); the seed drives weight init and
    /// shuffling, the data stays fixed.
    pub seeds: Vec<u64>,
    /// Dataset for both splits; `n_images` is ignored in favour of
    /// `n_train + n_val`.
    pub synth: SynthConfig,
    pub n_train: usize,
    pub n_val: usize,
    pub epochs: usize,
    pub base_lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub init: Init,
    pub metrics: MetricOptions,
    /// Score the validation split after every epoch, not only the last.
    pub curves: bool,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            losses: LossKind::ALL.to_vec(),
            seeds: alloc::vec![0, 1, 2],
            synth: SynthConfig::default(),
            n_train: 500,
            n_val: 100,
            epochs: DEFAULT_EPOCHS,
            base_lr: DEFAULT_BASE_LR,
            momentum: 0.9,
            weight_decay: 0.0005,
            batch_size: 1,
            init: DEFAULT_INIT,
            metrics: MetricOptions::loss_table(),
            curves: false,
        }
    }
}

/// Base learning rate used by the experiment and the CLI.
pub const DEFAULT_BASE_LR: f64 = 0.2;

pub const DEFAULT_EPOCHS: usize = 5;

/// He-scaled trunk, `N(0, 0.01^2)` head.
pub const DEFAULT_INIT: Init = Init::HeTrunk { head_sigma: 0.01 };

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub loss: LossKind,
    pub seed: u64,
    pub final_train_loss: f64,
    pub validation: MetricSummary,
    /// Per-epoch records; validation summaries only when curves were asked for.
    pub curve: Vec<EpochRecord>,
}

/// Seed-averaged validation scores of one loss.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossMean {
    pub loss: LossKind,
    pub runs: usize,
    pub cc: f64,
    pub sauc: f64,
    pub auc_judd: f64,
    pub nss: f64,
}

/// The train and validation splits of `config`.
pub fn splits(config: &BenchConfig) -> Result<(Vec<Sample>, Vec<Sample>)> {
    if config.n_train == 0 || config.n_val == 0 {
        return Err(Error::InvalidParameter("both splits must be non-empty"));
    }
    let synth = SynthConfig {
        n_images: config.n_train + config.n_val,
        ..config.synth.clone()
    };
    let all = generate(&synth)?;
    let val = all[config.n_train..].to_vec();
    let mut train = all;
    train.truncate(config.n_train);
    Ok((train, val))
}

pub fn train_config(config: &BenchConfig, loss: LossKind, seed: u64) -> TrainConfig {
    TrainConfig {
        base_lr: config.base_lr,
        momentum: config.momentum,
        weight_decay: config.weight_decay,
        batch_size: config.batch_size,
        epochs: config.epochs,
        loss: LossSpec::new(loss),
        seed,
        frozen_prefix: 0,
    }
}

/// Trains and scores one (loss, seed) pair.
pub fn run_one(
    config: &BenchConfig,
    train_set: &[Sample],
    val_set: &[Sample],
    loss: LossKind,
    seed: u64,
) -> Result<BenchRow> {
    let model = FcnModel::toy(config.synth.channels, config.init, seed)?;
    let tc = train_config(config, loss, seed);
    let v = Validation {
        samples: val_set,
        options: config.metrics.clone(),
    };
    let (trained, log) = train(&model, train_set, config.curves.then_some(&v), &tc)?;
    let validation = match log.epochs.last().and_then(|e| e.validation.clone()) {
        Some(s) => s,
        None => MetricSummary::mean(&validate(&trained, val_set, &config.metrics)?),
    };
    Ok(BenchRow {
        loss,
        seed,
        final_train_loss: log.epochs.last().map_or(f64::NAN, |e| e.mean_loss),
        validation,
        curve: log.epochs,
    })
}

/// All (loss, seed) runs, losses in the outer loop.
pub fn run(config: &BenchConfig) -> Result<Vec<BenchRow>> {
    run_with(config, |_| {})
}

/// As [`run`], reporting each row as it finishes.
pub fn run_with(config: &BenchConfig, mut on_row: impl FnMut(&BenchRow)) -> Result<Vec<BenchRow>> {
    if config.losses.is_empty() || config.seeds.is_empty() {
        return Err(Error::InvalidParameter("need at least one loss and one seed"));
    }
    let (train_set, val_set) = splits(config)?;
    let mut rows = Vec::new();
    for &loss in &config.losses {
        for &seed in &config.seeds {
            let row = run_one(config, &train_set, &val_set, loss, seed)?;
            on_row(&row);
            rows.push(row);
        }
    }
    Ok(rows)
}

/// Seed-averaged scores per loss, in order of first appearance.
pub fn means(rows: &[BenchRow]) -> Vec<LossMean> {
    let mut kinds: Vec<LossKind> = Vec::new();
    for r in rows {
        if !kinds.contains(&r.loss) {
            kinds.push(r.loss);
        }
    }
    kinds
        .into_iter()
        .map(|loss| {
            let mine: Vec<&BenchRow> = rows.iter().filter(|r| r.loss == loss).collect();
            let avg = |f: &dyn Fn(&MetricSummary) -> Option<f64>| {
                let v: Vec<f64> = mine.iter().filter_map(|r| f(&r.validation)).collect();
                if v.is_empty() {
                    f64::NAN
                } else {
                    v.iter().sum::<f64>() / v.len() as f64
                }
            };
            LossMean {
                loss,
                runs: mine.len(),
                cc: avg(&|s| s.cc),
                sauc: avg(&|s| s.sauc),
                auc_judd: avg(&|s| s.auc_judd),
                nss: avg(&|s| s.nss),
            }
        })
        .collect()
}

/// 1-based ranks by descending score; ties share the mean of their ranks.
pub fn ranks(scores: &[f64]) -> Vec<f64> {
    scores
        .iter()
        .map(|&s| {
            let above = scores.iter().filter(|&&o| o > s).count();
            let tied = scores.iter().filter(|&&o| o == s).count();
            above as f64 + (tied as f64 + 1.0) / 2.0
        })
        .collect()
}

/// Mean rank of the probability distances and of the regression losses for
/// one metric.
pub fn group_ranks(means: &[LossMean], metric: impl Fn(&LossMean) -> f64) -> (f64, f64) {
    let scores: Vec<f64> = means.iter().map(&metric).collect();
    let r = ranks(&scores);
    let mut dist = (0.0, 0usize);
    let mut regr = (0.0, 0usize);
    for (m, rank) in means.iter().zip(r) {
        let g = if m.loss.is_probability_distance() { &mut dist } else { &mut regr };
        g.0 += rank;
        g.1 += 1;
    }
    let mean = |(s, n): (f64, usize)| if n == 0 { f64::NAN } else { s / n as f64 };
    (mean(dist), mean(regr))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rank_ties() {
        assert_eq!(ranks(&[0.9, 0.5, 0.7]), alloc::vec![1.0, 3.0, 2.0]);
        assert_eq!(ranks(&[0.5, 0.5, 0.1]), alloc::vec![1.5, 1.5, 3.0]);
    }

    #[test]
    fn tiny_bench_runs() {
        let cfg = BenchConfig {
            losses: alloc::vec![LossKind::KLDivergence, LossKind::Euclidean],
            seeds: alloc::vec![0],
            synth: SynthConfig {
                height: 16,
                width: 16,
                fixations_per_image: 10,
                ..SynthConfig::default()
            },
            n_train: 4,
            n_val: 3,
            epochs: 1,
            curves: true,
            metrics: MetricOptions {
                n_splits: 5,
                ..MetricOptions::loss_table()
            },
            ..BenchConfig::default()
        };
        let rows = run(&cfg).unwrap();
        assert_eq!(rows.len(), 2);
        assert!(rows.iter().all(|r| r.curve.len() == 1 && r.validation.images == 3));
        let m = means(&rows);
        assert_eq!(m.len(), 2);
        let (d, r) = group_ranks(&m, |x| x.cc);
        assert!((d + r - 3.0).abs() < 1e-12);
    }
}
