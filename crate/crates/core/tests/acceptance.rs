//! Acceptance suite. Runs sequentially, prints one PASS/FAIL line per
//! criterion and exits nonzero if any criterion fails.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use saldist_core::bench::{self, BenchConfig, BenchRow};
use saldist_core::data::{generate, SynthConfig};
use saldist_core::losses::{self, certify, finite_diff_grad, loss_grad, relative_error};
use saldist_core::metrics::{self, ShuffleBank, DEFAULT_GRID_LIMIT};
use saldist_core::net::{self, FcnModel, Init, TrainConfig, TrainLog};
use saldist_core::pipeline::{self, GtParams};
use saldist_core::{softmax, FixationSet, GridMap, LossKind, LossSpec, PixelDistribution};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn within(elapsed: Duration, limit: Duration) -> bool {
    elapsed < limit
}

fn random_shape(rng: &mut ChaCha8Rng) -> (usize, usize) {
    let rows = rng.random_range(1..=16usize);
    let cols = rng.random_range(if rows == 1 { 2 } else { 1 }..=16usize);
    (rows, cols)
}

fn random_logits(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> GridMap {
    GridMap::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

fn random_dist(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> PixelDistribution {
    softmax(&random_logits(rng, rows, cols)).unwrap()
}

fn random_fixations(rng: &mut ChaCha8Rng, rows: usize, cols: usize, n: usize) -> FixationSet {
    let pts = (0..n)
        .map(|_| (rng.random_range(0..rows), rng.random_range(0..cols)))
        .collect();
    FixationSet::new(rows, cols, pts).unwrap()
}

fn gradient_certification() -> Outcome {
    const TRIALS: usize = 100;
    const H: f64 = 1e-5;
    const TOL: f64 = 1e-5;
    let start = Instant::now();
    let mut worst = 0.0f64;
    let mut parts = Vec::new();
    for (i, kind) in LossKind::ALL.into_iter().enumerate() {
        let c = certify(&LossSpec::new(kind), TRIALS, H, 100 + i as u64).unwrap();
        worst = worst.max(c.max_relative_error);
        parts.push(format!("{kind}={:.1e}", c.max_relative_error));
    }
    let t = start.elapsed();
    outcome(
        worst <= TOL && within(t, Duration::from_secs(30)),
        format!(
            "7 losses x {TRIALS} trials, h={H:e}: max rel err {worst:.2e} <= {TOL:e} [{}], {t:.2?} < 30s",
            parts.join(" ")
        ),
    )
}

fn kl_closed_form() -> Outcome {
    const TOL: f64 = 1e-12;
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let spec = LossSpec::new(LossKind::KLDivergence);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let (r, c) = random_shape(&mut rng);
        let p = random_dist(&mut rng, r, c);
        let g = random_dist(&mut rng, r, c);
        let grad = loss_grad(&spec, &p, &g).unwrap();
        for ((d, pi), gi) in grad.values().iter().zip(p.values()).zip(g.values()) {
            worst = worst.max((d - (pi - gi)).abs());
        }
    }
    let t = start.elapsed();
    outcome(
        worst <= TOL && within(t, Duration::from_secs(5)),
        format!("1000 instances: max |grad - (p - g)| {worst:.2e} <= {TOL:e}, {t:.2?} < 5s"),
    )
}

fn bhattacharyya_sign() -> Outcome {
    const TOL: f64 = 1e-5;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let spec = LossSpec::new(LossKind::Bhattacharyya);
    let (mut shipped_err, mut printed_err) = (0.0f64, f64::INFINITY);
    let mut sign_mismatches = 0usize;
    for _ in 0..100 {
        let (r, c) = random_shape(&mut rng);
        let x = random_logits(&mut rng, r, c);
        let g = random_dist(&mut rng, r, c);
        let p = softmax(&x).unwrap();
        let fd = finite_diff_grad(&spec, &x, &g, 1e-5).unwrap();
        let shipped = loss_grad(&spec, &p, &g).unwrap();
        let printed = losses::printed::bhattacharyya_grad(p.values(), g.values());
        let scale = fd.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        sign_mismatches += shipped
            .values()
            .iter()
            .zip(fd.values())
            .filter(|(a, f)| f.abs() > 1e-3 * scale && a.signum() != f.signum())
            .count();
        shipped_err = shipped_err.max(relative_error(shipped.values(), fd.values()));
        printed_err = printed_err.min(relative_error(&printed, fd.values()));
    }
    outcome(
        sign_mismatches == 0 && shipped_err <= TOL && printed_err > 1.0,
        format!(
            "sign corrected: shipped +1/(2B) prefactor matches finite differences (rel err {shipped_err:.2e} <= {TOL:e}, \
             {sign_mismatches} sign mismatches); printed -1/(2B) form rejected (min rel err {printed_err:.2})"
        ),
    )
}

fn emd_oracle() -> Outcome {
    const TOL: f64 = 1e-8;
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = 0.0f64;
    let mut n = 0;
    while n < 200 {
        let rows = rng.random_range(1..=16usize);
        let cols = rng.random_range(1..=16 / rows);
        if rows * cols < 2 {
            continue;
        }
        let p = random_dist(&mut rng, rows, cols);
        let g = random_dist(&mut rng, rows, cols);
        let exact = metrics::emd(&p, &g, DEFAULT_GRID_LIMIT).unwrap();
        let brute = metrics::emd_bruteforce(&p, &g).unwrap();
        worst = worst.max((exact - brute).abs());
        n += 1;
    }
    let t = start.elapsed();
    outcome(
        worst <= TOL && within(t, Duration::from_secs(60)),
        format!("200 instances, area <= 16: max |exact - brute force| {worst:.2e} <= {TOL:e}, {t:.2?} < 60s"),
    )
}

fn metric_sanity() -> Outcome {
    const TOL: f64 = 1e-10;
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (h, w) = (24, 32);
    let p = random_dist(&mut rng, h, w);
    let fix = random_fixations(&mut rng, h, w, 30);
    let others: Vec<FixationSet> = (0..5).map(|_| random_fixations(&mut rng, h, w, 30)).collect();
    let bank = ShuffleBank::new(others).unwrap();

    let cc = metrics::cc(p.grid(), p.grid()).unwrap();
    let sim = metrics::sim(&p, &p).unwrap();
    let emd = metrics::emd(&p, &p, DEFAULT_GRID_LIMIT).unwrap();

    let flat = GridMap::filled(h, w, 0.25);
    let judd0 = metrics::auc_judd(&flat, &fix).unwrap();
    let borji0 = metrics::auc_borji(&flat, &fix, 100, 30, 7).unwrap();
    let sauc0 = metrics::sauc(&flat, &fix, &bank, 100, 7).unwrap();

    let four = GridMap::new(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
    let nss = metrics::nss(&four, &FixationSet::new(2, 2, vec![(1, 1)]).unwrap()).unwrap();

    let aucs = |m: &GridMap| {
        [
            metrics::auc_judd(m, &fix).unwrap(),
            metrics::auc_borji(m, &fix, 100, 30, 7).unwrap(),
            metrics::sauc(m, &fix, &bank, 100, 7).unwrap(),
        ]
    };
    let base = aucs(p.grid());
    let mut drift = 0.0f64;
    for m in [p.grid().map(f64::exp), p.grid().map(|v| 2.0 * v + 3.0)] {
        for (a, b) in aucs(&m).iter().zip(&base) {
            drift = drift.max((a - b).abs());
        }
    }
    let t = start.elapsed();

    let pass = (cc - 1.0).abs() <= TOL
        && (sim - 1.0).abs() <= TOL
        && emd.abs() <= TOL
        && [judd0, borji0, sauc0].iter().all(|a| (a - 0.5).abs() <= TOL)
        && (nss - 1.161895).abs() <= 1e-6
        && drift <= TOL
        && within(t, Duration::from_secs(30));
    outcome(
        pass,
        format!(
            "CC(self) {cc:.12} SIM(self) {sim:.12} EMD(self) {emd:.1e}; constant map Judd {judd0} Borji {borji0} \
             sAUC {sauc0}; NSS {nss:.7} (1.161895 +- 1e-6); monotone drift {drift:.1e} <= {TOL:e}; {t:.2?} < 30s"
        ),
    )
}

fn pipeline_checks() -> Outcome {
    const TOL: f64 = 1e-12;
    let params = GtParams::synthetic();
    let k = pipeline::gaussian_kernel(&params);
    let r = params.kernel_width / 2;
    let size = params.kernel_width + 20;

    // One delta at the center reproduces the outer-product kernel.
    let mut delta = GridMap::zeros(size, size);
    let c = size / 2;
    delta.set(c, c, 1.0);
    let smooth = pipeline::gaussian_smooth(&delta, &params);
    let mut delta_err = 0.0f64;
    for row in 0..size {
        for col in 0..size {
            let (dr, dc) = (row as isize - c as isize, col as isize - c as isize);
            let expect = if dr.unsigned_abs() <= r && dc.unsigned_abs() <= r {
                k[(dr + r as isize) as usize] * k[(dc + r as isize) as usize]
            } else {
                0.0
            };
            delta_err = delta_err.max((smooth.get(row, col) - expect).abs());
        }
    }

    // Two distant deltas give the sum of two kernels.
    let wide = 2 * size;
    let mut two = GridMap::zeros(size, wide);
    two.set(c, c, 1.0);
    two.set(c, c + size, 1.0);
    let both = pipeline::gaussian_smooth(&two, &params);
    let mut one = GridMap::zeros(size, wide);
    one.set(c, c, 1.0);
    let left = pipeline::gaussian_smooth(&one, &params);
    let mut one = GridMap::zeros(size, wide);
    one.set(c, c + size, 1.0);
    let right = pipeline::gaussian_smooth(&one, &params);
    let sum_err = both
        .values()
        .iter()
        .zip(left.values().iter().zip(right.values()))
        .fold(0.0f64, |m, (b, (l, r))| m.max((b - (l + r)).abs()));

    // Valid distributions across presets, grid sizes and fixation counts.
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst_sum = 0.0f64;
    let mut all_valid = true;
    for trial in 0..60 {
        let preset = [GtParams::synthetic(), GtParams::osie(), GtParams::salicon()][trial % 3];
        let (h, w) = (rng.random_range(1..=48usize), rng.random_range(1..=48usize));
        let n = rng.random_range(1..=40usize);
        let d = pipeline::make_gt_distribution(&random_fixations(&mut rng, h, w, n), &preset).unwrap();
        all_valid &= d.values().iter().all(|v| v.is_finite() && *v >= 0.0);
        worst_sum = worst_sum.max((d.values().iter().sum::<f64>() - 1.0).abs());
    }

    let salicon = GtParams::salicon();
    let fix = random_fixations(&mut rng, 480, 640, 200);
    let start = Instant::now();
    let gt = pipeline::make_gt_distribution(&fix, &salicon).unwrap();
    let t = start.elapsed();
    let gt_sum = gt.values().iter().sum::<f64>();

    outcome(
        delta_err <= TOL
            && sum_err <= TOL
            && all_valid
            && worst_sum <= 1e-9
            && within(t, Duration::from_secs(1))
            && salicon.kernel_width == 153
            && salicon.sigma == 19.0,
        format!(
            "delta vs kernel {delta_err:.1e} <= {TOL:e}; two deltas vs sum {sum_err:.1e}; 60 GT maps valid={all_valid} \
             |sum-1| {worst_sum:.1e}; SALICON (w={}, sigma={}) 480x640 with 200 fixations {t:.2?} < 1s (sum {gt_sum:.12})",
            salicon.kernel_width, salicon.sigma
        ),
    )
}

fn network_gradient_check() -> Outcome {
    const TOL: f64 = 1e-4;
    let start = Instant::now();
    let synth = SynthConfig {
        n_images: 1,
        height: 16,
        width: 16,
        fixations_per_image: 20,
        seed: 8,
        ..SynthConfig::default()
    };
    let sample = &generate(&synth).unwrap()[0];
    let model = FcnModel::toy(1, Init::HeTrunk { head_sigma: 0.1 }, 8).unwrap();
    let p = softmax(&model.forward(&sample.image).unwrap()).unwrap();
    // Move the target away from the prediction so no loss sits at a stationary
    // point or a TV kink.
    let (h, w) = p.shape();
    let vals = p.values().iter().enumerate().map(|(i, v)| v * if i % 2 == 0 { 1.6 } else { 0.5 });
    let target = PixelDistribution::normalized(GridMap::new(h, w, vals.collect()).unwrap()).unwrap();
    let mut worst = 0.0f64;
    let mut parts = Vec::new();
    for kind in LossKind::ALL {
        let checks = net::gradient_check(&model, &sample.image, &target, &LossSpec::new(kind), 1e-3).unwrap();
        let e = checks.iter().map(|c| c.weights.max(c.bias)).fold(0.0, f64::max);
        worst = worst.max(e);
        parts.push(format!("{kind}={e:.1e}"));
    }
    let t = start.elapsed();
    outcome(
        worst <= TOL && within(t, Duration::from_secs(300)),
        format!(
            "toy FCN ({} params), 7 losses, h=1e-3: max rel err {worst:.2e} <= {TOL:e} [{}], {t:.2?} < 5min",
            model.parameter_count(),
            parts.join(" ")
        ),
    )
}

struct Overfit {
    model: FcnModel,
    log: TrainLog,
    cc: f64,
    elapsed: Duration,
}

fn overfit_run() -> Overfit {
    let synth = SynthConfig {
        n_images: 1,
        seed: 3,
        ..SynthConfig::default()
    };
    let samples = generate(&synth).unwrap();
    let model = FcnModel::toy(1, bench::DEFAULT_INIT, 1).unwrap();
    let config = TrainConfig {
        base_lr: 1.0,
        epochs: 500,
        ..TrainConfig::new(LossSpec::new(LossKind::Bhattacharyya))
    };
    let start = Instant::now();
    let (model, log) = net::train(&model, &samples, None, &config).unwrap();
    let elapsed = start.elapsed();
    let p = net::predict(&model, &samples[0].image).unwrap();
    let cc = metrics::cc(p.grid(), samples[0].gt.grid()).unwrap();
    Overfit {
        model,
        log,
        cc,
        elapsed,
    }
}

fn overfit_one_sample(run: &Overfit) -> Outcome {
    let losses: Vec<f64> = run.log.iterations.iter().map(|r| r.loss).collect();
    let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
    let (head, tail) = (mean(&losses[..50]), mean(&losses[losses.len() - 50..]));
    outcome(
        losses.len() == 500 && run.cc > 0.9 && tail < head && within(run.elapsed, Duration::from_secs(120)),
        format!(
            "{} iterations, Bhattacharyya: CC {:.4} > 0.9; mean loss first/last 50 {head:.4} -> {tail:.4}; {:.2?} < 2min",
            losses.len(),
            run.cc,
            run.elapsed
        ),
    )
}

struct Bench {
    rows: Vec<BenchRow>,
    elapsed: Duration,
}

fn bench_run() -> Bench {
    let start = Instant::now();
    let rows = bench::run(&BenchConfig::default()).unwrap();
    Bench {
        rows,
        elapsed: start.elapsed(),
    }
}

fn loss_ordering(run: &Bench) -> Outcome {
    let means = bench::means(&run.rows);
    let get = |k: LossKind| means.iter().find(|m| m.loss == k).unwrap();
    let (b, e) = (get(LossKind::Bhattacharyya), get(LossKind::Euclidean));
    let (cc_dist, cc_regr) = bench::group_ranks(&means, |m| m.cc);
    let (sauc_dist, sauc_regr) = bench::group_ranks(&means, |m| m.sauc);
    let table: Vec<String> = means
        .iter()
        .map(|m| format!("{}={:.3}/{:.3}", m.loss, m.cc, m.sauc))
        .collect();
    outcome(
        b.cc >= e.cc
            && b.sauc >= e.sauc
            && cc_dist < cc_regr
            && sauc_dist < sauc_regr
            && within(run.elapsed, Duration::from_secs(1800)),
        format!(
            "{} runs (500 train / 100 val, 64x64, 3 seeds); CC/sAUC [{}]; Bhattacharyya >= Euclidean; \
             mean rank distance vs regression CC {cc_dist} < {cc_regr}, sAUC {sauc_dist} < {sauc_regr}; {:.1?} < 30min",
            run.rows.len(),
            table.join(" "),
            run.elapsed
        ),
    )
}

fn bit_identical(a: &impl std::fmt::Debug, b: &impl std::fmt::Debug) -> bool {
    // `{:?}` prints every f64 in its shortest round-trip form, so equal
    // strings mean equal bits.
    format!("{a:?}") == format!("{b:?}")
}

fn determinism(overfit: &Overfit, bench: &Bench) -> Outcome {
    let again = overfit_run();
    let overfit_same = bit_identical(&overfit.log, &again.log)
        && bit_identical(&overfit.model, &again.model)
        && overfit.cc.to_bits() == again.cc.to_bits();
    let rerun = bench_run();
    let bench_same = bit_identical(&bench.rows, &rerun.rows);
    outcome(
        overfit_same && bench_same,
        format!(
            "rerun overfit (log, parameters, CC) identical={overfit_same}; rerun loss bench ({} rows) identical={bench_same}",
            rerun.rows.len()
        ),
    )
}

fn main() -> ExitCode {
    let mut failures = 0;
    let mut report = |n: usize, name: &str, o: Outcome| {
        let tag = if o.pass { "PASS" } else { "FAIL" };
        println!("{tag} criterion {n} ({name}): {}", o.detail);
        if !o.pass {
            failures += 1;
        }
    };
    report(1, "gradient certification", gradient_certification());
    report(2, "KL closed form", kl_closed_form());
    report(3, "Bhattacharyya sign", bhattacharyya_sign());
    report(4, "EMD oracle", emd_oracle());
    report(5, "metric sanity", metric_sanity());
    report(6, "pipeline", pipeline_checks());
    report(7, "network gradient check", network_gradient_check());
    let overfit = overfit_run();
    report(8, "overfit one sample", overfit_one_sample(&overfit));
    let bench = bench_run();
    report(9, "loss ordering", loss_ordering(&bench));
    report(10, "determinism", determinism(&overfit, &bench));
    if failures == 0 {
        println!("acceptance: all criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {failures} criteria failed");
        ExitCode::FAILURE
    }
}
