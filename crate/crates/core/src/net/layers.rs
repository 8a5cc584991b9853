//! Convolution, ReLU and 2x2 max-pool kernels with their backward passes.

use alloc::vec;
use alloc::vec::Vec;

use super::Tensor;

/// Geometry of a stride-1 square convolution.
#[derive(Debug, Clone, Copy)]
pub(crate) struct ConvGeom {
    pub in_c: usize,
    pub out_c: usize,
    pub k: usize,
    pub pad: usize,
}

impl ConvGeom {
    pub fn out_dims(&self, h: usize, w: usize) -> (usize, usize) {
        (h + 2 * self.pad + 1 - self.k, w + 2 * self.pad + 1 - self.k)
    }

    /// Output range `[lo, hi)` whose tap `t` reads inside `[0, n)`.
    #[inline]
    fn valid(&self, t: usize, out_n: usize, in_n: usize) -> (usize, usize) {
        let lo = self.pad.saturating_sub(t);
        let hi = (in_n + self.pad).saturating_sub(t).min(out_n);
        (lo, hi.max(lo))
    }
}

/// Unfolds the input into `in_c * k * k` rows of `oh * ow` columns; row
/// `(i, ky, kx)` holds the input value each output position reads through
/// that tap (zero where it falls in the padding).
fn im2col(g: &ConvGeom, input: &Tensor, oh: usize, ow: usize) -> Vec<f64> {
    let (h, w) = (input.height(), input.width());
    let n = oh * ow;
    let mut col = vec![0.0; g.in_c * g.k * g.k * n];
    for i in 0..g.in_c {
        let src = input.plane(i);
        for ky in 0..g.k {
            let (y0, y1) = g.valid(ky, oh, h);
            for kx in 0..g.k {
                let (x0, x1) = g.valid(kx, ow, w);
                let row = &mut col[((i * g.k + ky) * g.k + kx) * n..][..n];
                for y in y0..y1 {
                    let iy = y + ky - g.pad;
                    row[y * ow + x0..y * ow + x1]
                        .copy_from_slice(&src[iy * w + x0 + kx - g.pad..iy * w + x1 + kx - g.pad]);
                }
            }
        }
    }
    col
}

/// Adds every column row back onto the input positions it was read from.
fn col2im(g: &ConvGeom, col: &[f64], h: usize, w: usize, oh: usize, ow: usize) -> Tensor {
    let n = oh * ow;
    let mut out = Tensor::zeros(g.in_c, h, w);
    for i in 0..g.in_c {
        let dst = out.plane_mut(i);
        for ky in 0..g.k {
            let (y0, y1) = g.valid(ky, oh, h);
            for kx in 0..g.k {
                let (x0, x1) = g.valid(kx, ow, w);
                let row = &col[((i * g.k + ky) * g.k + kx) * n..][..n];
                for y in y0..y1 {
                    let iy = y + ky - g.pad;
                    let d = &mut dst[iy * w + x0 + kx - g.pad..iy * w + x1 + kx - g.pad];
                    for (dv, v) in d.iter_mut().zip(&row[y * ow + x0..y * ow + x1]) {
                        *dv += v;
                    }
                }
            }
        }
    }
    out
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yv, xv) in y.iter_mut().zip(x) {
        *yv += alpha * xv;
    }
}

pub(crate) fn conv_forward(g: &ConvGeom, input: &Tensor, weights: &[f64], bias: &[f64]) -> Tensor {
    let (oh, ow) = g.out_dims(input.height(), input.width());
    let n = oh * ow;
    let taps = g.in_c * g.k * g.k;
    let col = im2col(g, input, oh, ow);
    let mut out = Tensor::zeros(g.out_c, oh, ow);
    for (o, &b) in bias.iter().enumerate() {
        out.plane_mut(o).fill(b);
    }
    // Tap-major so each unfolded row stays in cache across output channels.
    for r in 0..taps {
        let row = &col[r * n..(r + 1) * n];
        for o in 0..g.out_c {
            let wt = weights[o * taps + r];
            if wt != 0.0 {
                axpy(wt, row, out.plane_mut(o));
            }
        }
    }
    out
}

/// Returns (grad_input, grad_weights, grad_bias). `need_input` skips the
/// input gradient when nothing below consumes it.
pub(crate) fn conv_backward(
    g: &ConvGeom,
    input: &Tensor,
    weights: &[f64],
    grad_out: &Tensor,
    need_input: bool,
) -> (Option<Tensor>, Vec<f64>, Vec<f64>) {
    let (h, w) = (input.height(), input.width());
    let (oh, ow) = (grad_out.height(), grad_out.width());
    let n = oh * ow;
    let taps = g.in_c * g.k * g.k;
    let col = im2col(g, input, oh, ow);
    let mut gw = vec![0.0; weights.len()];
    let mut gb = vec![0.0; g.out_c];
    let mut gcol = need_input.then(|| vec![0.0; taps * n]);
    for (o, v) in gb.iter_mut().enumerate() {
        *v = grad_out.plane(o).iter().sum();
    }
    for r in 0..taps {
        let row = &col[r * n..(r + 1) * n];
        for o in 0..g.out_c {
            let go = grad_out.plane(o);
            gw[o * taps + r] = dot(go, row);
            if let Some(gc) = gcol.as_mut() {
                let wt = weights[o * taps + r];
                if wt != 0.0 {
                    axpy(wt, go, &mut gc[r * n..(r + 1) * n]);
                }
            }
        }
    }
    let gin = gcol.map(|gc| col2im(g, &gc, h, w, oh, ow));
    (gin, gw, gb)
}

/// Dot product with eight independent accumulators: a fixed reduction order
/// that the compiler can vectorize.
#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 8];
    let (ca, cb) = (a.chunks_exact(8), b.chunks_exact(8));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for l in 0..8 {
            acc[l] += x[l] * y[l];
        }
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

/// ReLU; `mask` (if given) fixes which units pass instead of their sign.
pub(crate) fn relu_forward(input: &Tensor, mask: Option<&[bool]>) -> (Tensor, Vec<bool>) {
    let mut out = input.clone();
    let active: Vec<bool> = match mask {
        Some(m) => m.to_vec(),
        None => input.data().iter().map(|&v| v > 0.0).collect(),
    };
    for (v, &on) in out.data_mut().iter_mut().zip(&active) {
        if !on {
            *v = 0.0;
        }
    }
    (out, active)
}

pub(crate) fn relu_backward(grad_out: &Tensor, active: &[bool]) -> Tensor {
    let mut g = grad_out.clone();
    for (v, &on) in g.data_mut().iter_mut().zip(active) {
        if !on {
            *v = 0.0;
        }
    }
    g
}

/// 2x2 stride-2 max pool (trailing odd row/column dropped). Returns the
/// flat input index chosen for every output; `choice` replays a previous
/// selection.
pub(crate) fn pool_forward(input: &Tensor, choice: Option<&[usize]>) -> (Tensor, Vec<usize>) {
    let (c, h, w) = (input.channels(), input.height(), input.width());
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Tensor::zeros(c, oh, ow);
    let mut picks = Vec::with_capacity(c * oh * ow);
    let src = input.data();
    let mut k = 0;
    for ch in 0..c {
        let base = ch * h * w;
        for y in 0..oh {
            for x in 0..ow {
                let idx = match choice {
                    Some(cs) => cs[k],
                    None => {
                        let mut best = base + 2 * y * w + 2 * x;
                        for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                            let j = base + (2 * y + dy) * w + 2 * x + dx;
                            if src[j] > src[best] {
                                best = j;
                            }
                        }
                        best
                    }
                };
                out.data_mut()[k] = src[idx];
                picks.push(idx);
                k += 1;
            }
        }
    }
    (out, picks)
}

pub(crate) fn pool_backward(grad_out: &Tensor, picks: &[usize], c: usize, h: usize, w: usize) -> Tensor {
    let mut g = Tensor::zeros(c, h, w);
    for (&idx, &v) in picks.iter().zip(grad_out.data()) {
        g.data_mut()[idx] += v;
    }
    g
}
