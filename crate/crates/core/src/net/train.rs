use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{FcnModel, Gradients, LayerSpec};
use super::Tensor;
use crate::data::Sample;
use crate::losses::{self, LossSpec};
use crate::metrics::{evaluate, MetricOptions, MetricReport, MetricSummary, ShuffleBank};
use crate::pipeline::{training_target, upsample_bilinear};
use crate::{softmax, Error, PixelDistribution, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub base_lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub loss: LossSpec,
    pub seed: u64,
    /// Number of leading convolutions kept fixed.
    pub frozen_prefix: usize,
}

impl TrainConfig {
    pub fn new(loss: LossSpec) -> Self {
        TrainConfig {
            base_lr: 0.01,
            momentum: 0.9,
            weight_decay: 0.0005,
            batch_size: 1,
            epochs: 1,
            loss,
            seed: 0,
            frozen_prefix: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.base_lr > 0.0 && self.base_lr.is_finite()) {
            return Err(Error::InvalidParameter("base_lr must be positive"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidParameter("momentum must lie in [0, 1)"));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::InvalidParameter("weight_decay must be non-negative"));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidParameter("batch_size must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub epoch: usize,
    /// Mean loss over the batch, before the update.
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub mean_loss: f64,
    pub validation: Option<MetricSummary>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub iterations: Vec<IterationRecord>,
    pub epochs: Vec<EpochRecord>,
}

/// Held-out samples scored after every epoch.
#[derive(Debug, Clone)]
pub struct Validation<'a> {
    pub samples: &'a [Sample],
    pub options: MetricOptions,
}

/// One momentum-SGD update:
/// `v <- momentum v + lr (grad + weight_decay w)`, `w <- w - v`, with
/// `lr = base_lr * lr_multiplier`. Weight decay covers weights and biases.
/// The first `frozen_prefix` convolutions are left untouched; a missing
/// gradient counts as zero.
pub fn sgd_step(model: &mut FcnModel, grads: &Gradients, config: &TrainConfig, buffers: &mut Gradients) -> Result<()> {
    let n = model.layers().len();
    if grads.layers.len() != n || buffers.layers.len() != n {
        return Err(Error::InvalidParameter("gradients or buffers do not match the model"));
    }
    let mut conv_index = 0;
    for (li, layer) in model.layers_mut().iter_mut().enumerate() {
        let (LayerSpec::Conv(spec), Some(params)) = (&layer.spec, layer.params.as_mut()) else {
            continue;
        };
        let frozen = conv_index < config.frozen_prefix;
        conv_index += 1;
        if frozen {
            continue;
        }
        let lr = config.base_lr * spec.lr_multiplier;
        let buf = buffers.layers[li]
            .as_mut()
            .ok_or(Error::InvalidParameter("missing momentum buffer"))?;
        let grad = grads.layers[li].as_ref();
        let pairs = [
            (&mut params.weights, &mut buf.weights, grad.map(|g| g.weights.as_slice())),
            (&mut params.bias, &mut buf.bias, grad.map(|g| g.bias.as_slice())),
        ];
        for (w, v, g) in pairs {
            if v.len() != w.len() || g.is_some_and(|g| g.len() != w.len()) {
                return Err(Error::InvalidParameter("gradient shape does not match parameters"));
            }
            for i in 0..w.len() {
                let gi = g.map_or(0.0, |g| g[i]);
                v[i] = config.momentum * v[i] + lr * (gi + config.weight_decay * w[i]);
                w[i] -= v[i];
            }
        }
    }
    Ok(())
}

/// `softmax(upsample_bilinear(forward(image)))` at image resolution.
pub fn predict(model: &FcnModel, image: &Tensor) -> Result<PixelDistribution> {
    let response = model.forward(image)?;
    softmax(&upsample_bilinear(&response, image.height(), image.width())?)
}

/// Scores predictions on every sample. sAUC negatives for image `i` come
/// from the fixations of all other samples.
pub fn validate(model: &FcnModel, samples: &[Sample], options: &MetricOptions) -> Result<Vec<MetricReport>> {
    let all: Vec<_> = samples.iter().map(|s| s.fixations.clone()).collect();
    samples
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let pred = predict(model, &s.image)?;
            let bank = if options.sauc && samples.len() > 1 {
                Some(ShuffleBank::excluding(&all, i)?)
            } else {
                None
            };
            evaluate(i, &pred, &s.gt, &s.fixations, bank.as_ref(), options)
        })
        .collect()
}

/// Mini-batch SGD over `samples` for `config.epochs` epochs, reshuffling
/// each epoch with a generator seeded from `config.seed`. The batch loss is
/// the mean of the per-image losses. Fails with [`Error::Diverged`] as soon
/// as a loss or gradient stops being finite.
pub fn train(
    model: &FcnModel,
    samples: &[Sample],
    validation: Option<&Validation<'_>>,
    config: &TrainConfig,
) -> Result<(FcnModel, TrainLog)> {
    config.validate()?;
    if samples.is_empty() {
        return Err(Error::Empty);
    }
    let targets: Vec<PixelDistribution> = samples
        .iter()
        .map(|s| {
            let (oh, ow) = model.output_dims(s.image.height(), s.image.width());
            training_target(&s.gt_logits, oh, ow)
        })
        .collect::<Result<_>>()?;

    let mut model = model.clone();
    let mut buffers = Gradients::zeros_like(&model);
    let mut log = TrainLog::default();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut iteration = 0;

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut batches = 0;
        for batch in order.chunks(config.batch_size) {
            let scale = 1.0 / batch.len() as f64;
            let mut grads = Gradients::zeros_like(&model);
            let mut batch_loss = 0.0;
            for &i in batch {
                let trace = model.forward_trace(&samples[i].image)?;
                let diverged = |_| Error::Diverged { iteration };
                let p = softmax(&trace.response().map_err(diverged)?)?;
                let value = losses::loss_value(&config.loss, &p, &targets[i]).map_err(diverged)?;
                let g = losses::loss_grad(&config.loss, &p, &targets[i])?;
                let layer_grads = model.backward(&trace, &g, config.frozen_prefix)?;
                grads.add_scaled(&layer_grads, scale);
                batch_loss += scale * value;
            }
            let finite = grads
                .layers
                .iter()
                .flatten()
                .all(|p| p.weights.iter().chain(&p.bias).all(|v| v.is_finite()));
            if !batch_loss.is_finite() || !finite {
                return Err(Error::Diverged { iteration });
            }
            sgd_step(&mut model, &grads, config, &mut buffers)?;
            log.iterations.push(IterationRecord {
                iteration,
                epoch,
                loss: batch_loss,
            });
            epoch_loss += batch_loss;
            batches += 1;
            iteration += 1;
        }
        let summary = match validation {
            Some(v) => Some(MetricSummary::mean(&validate(&model, v.samples, &v.options)?)),
            None => None,
        };
        log.epochs.push(EpochRecord {
            epoch,
            mean_loss: epoch_loss / batches as f64,
            validation: summary,
        });
    }
    Ok((model, log))
}

/// Worst relative error of one convolution's analytic gradient.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayerCheck {
    pub layer: usize,
    pub weights: f64,
    pub bias: f64,
}

/// Floor on the reference magnitude in [`gradient_check`]. The final bias
/// has an exactly zero gradient (softmax ignores a constant shift), so its
/// finite differences are pure rounding noise.
pub const GRADIENT_CHECK_FLOOR: f64 = 1e-8;

/// Compares [`FcnModel::backward`] with central differences of
/// `loss(softmax(forward(image)), target)` in every parameter. The ReLU and
/// pooling switches of the unperturbed pass are held fixed so a perturbation
/// never straddles a kink of the network itself. Errors are
/// `max |a - f| / max(max |f|, GRADIENT_CHECK_FLOOR)` per tensor.
pub fn gradient_check(
    model: &FcnModel,
    image: &Tensor,
    target: &PixelDistribution,
    loss: &LossSpec,
    h: f64,
) -> Result<Vec<LayerCheck>> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidParameter("step must be positive"));
    }
    let trace = model.forward_trace(image)?;
    let p = softmax(&trace.response()?)?;
    let g = losses::loss_grad(loss, &p, target)?;
    let analytic = model.backward(&trace, &g, 0)?;

    let eval = |m: &FcnModel| -> Result<f64> {
        let t = m.forward_replay(image, &trace)?;
        losses::loss_value(loss, &softmax(&t.response()?)?, target)
    };
    let mut probe = model.clone();
    let mut out = Vec::new();
    for li in 0..model.layers().len() {
        let Some(a) = analytic.layers[li].as_ref() else {
            continue;
        };
        let mut numeric = [Vec::new(), Vec::new()];
        for (which, numeric) in numeric.iter_mut().enumerate() {
            let len = if which == 0 { a.weights.len() } else { a.bias.len() };
            for i in 0..len {
                let base = *param_mut(&mut probe, li, which, i);
                *param_mut(&mut probe, li, which, i) = base + h;
                let plus = eval(&probe)?;
                *param_mut(&mut probe, li, which, i) = base - h;
                let minus = eval(&probe)?;
                *param_mut(&mut probe, li, which, i) = base;
                numeric.push((plus - minus) / (2.0 * h));
            }
        }
        out.push(LayerCheck {
            layer: li,
            weights: floored_error(&a.weights, &numeric[0]),
            bias: floored_error(&a.bias, &numeric[1]),
        });
    }
    Ok(out)
}

fn floored_error(analytic: &[f64], reference: &[f64]) -> f64 {
    let scale = reference.iter().fold(GRADIENT_CHECK_FLOOR, |m, v| m.max(v.abs()));
    let diff = analytic
        .iter()
        .zip(reference)
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    diff / scale
}

fn param_mut(model: &mut FcnModel, layer: usize, which: usize, i: usize) -> &mut f64 {
    let p = model.layers_mut()[layer].params.as_mut().expect("conv layer");
    if which == 0 {
        &mut p.weights[i]
    } else {
        &mut p.bias[i]
    }
}
