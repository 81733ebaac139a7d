//! Slice-level forward and backward kernels.
//!
//! Work is split per sample with rayon. Reductions over the batch (weight and
//! bias gradients) are computed as per-sample partials and summed in sample
//! order, so results do not depend on the thread count.

use rayon::prelude::*;

use super::Real;

#[derive(Clone, Copy, Debug)]
pub(crate) struct ConvGeom {
    pub n: usize,
    pub c_in: usize,
    pub h: usize,
    pub w: usize,
    pub c_out: usize,
    pub kh: usize,
    pub kw: usize,
    pub pad: usize,
    pub oh: usize,
    pub ow: usize,
}

impl ConvGeom {
    fn in_plane(&self) -> usize {
        self.h * self.w
    }
    fn out_plane(&self) -> usize {
        self.oh * self.ow
    }
    /// Output columns `ox` for which `ox + kx - pad` lands inside the input row.
    #[inline]
    fn col_range(&self, kx: usize) -> (usize, usize) {
        let lo = self.pad.saturating_sub(kx);
        let hi = (self.w + self.pad).saturating_sub(kx).min(self.ow);
        (lo, hi.max(lo))
    }
    #[inline]
    fn row_range(&self, ky: usize) -> (usize, usize) {
        let lo = self.pad.saturating_sub(ky);
        let hi = (self.h + self.pad).saturating_sub(ky).min(self.oh);
        (lo, hi.max(lo))
    }
}

impl ConvGeom {
    fn taps(&self) -> usize {
        self.c_in * self.kh * self.kw
    }
}

/// Unfolds one sample into a `taps × out_plane` matrix (zero outside the input).
fn im2col<T: Real>(g: &ConvGeom, x: &[T], col: &mut [T]) {
    let p = g.out_plane();
    for i in 0..g.c_in {
        let xi = &x[i * g.in_plane()..(i + 1) * g.in_plane()];
        for ky in 0..g.kh {
            let (ry0, ry1) = g.row_range(ky);
            for kx in 0..g.kw {
                let k = (i * g.kh + ky) * g.kw + kx;
                let row = &mut col[k * p..(k + 1) * p];
                row.iter_mut().for_each(|v| *v = T::zero());
                let (cx0, cx1) = g.col_range(kx);
                for oy in ry0..ry1 {
                    let iy = oy + ky - g.pad;
                    let src = &xi[iy * g.w + cx0 + kx - g.pad..iy * g.w + cx1 + kx - g.pad];
                    row[oy * g.ow + cx0..oy * g.ow + cx1].copy_from_slice(src);
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: accumulates a `taps × out_plane` matrix into one sample.
fn col2im<T: Real>(g: &ConvGeom, col: &[T], x: &mut [T]) {
    let p = g.out_plane();
    for i in 0..g.c_in {
        let xi = &mut x[i * g.in_plane()..(i + 1) * g.in_plane()];
        for ky in 0..g.kh {
            let (ry0, ry1) = g.row_range(ky);
            for kx in 0..g.kw {
                let k = (i * g.kh + ky) * g.kw + kx;
                let row = &col[k * p..(k + 1) * p];
                let (cx0, cx1) = g.col_range(kx);
                for oy in ry0..ry1 {
                    let iy = oy + ky - g.pad;
                    let dst = &mut xi[iy * g.w + cx0 + kx - g.pad..iy * g.w + cx1 + kx - g.pad];
                    add_assign(dst, &row[oy * g.ow + cx0..oy * g.ow + cx1]);
                }
            }
        }
    }
}

#[inline]
fn axpy<T: Real>(dst: &mut [T], a: T, src: &[T]) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d = *d + a * s;
    }
}

/// Dot product with eight interleaved accumulators, combined in a fixed order.
#[inline]
fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    let mut acc = [T::zero(); 8];
    let (ca, cb) = (a.chunks_exact(8), b.chunks_exact(8));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for l in 0..8 {
            acc[l] = acc[l] + x[l] * y[l];
        }
    }
    let mut tail = T::zero();
    for (&x, &y) in ra.iter().zip(rb) {
        tail = tail + x * y;
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

pub(crate) fn conv2d_forward<T: Real>(g: &ConvGeom, input: &[T], weight: &[T], bias: &[T]) -> Vec<T> {
    let (p, taps) = (g.out_plane(), g.taps());
    let mut out = vec![T::zero(); g.n * g.c_out * p];
    let in_sample = g.c_in * g.in_plane();
    out.par_chunks_mut(g.c_out * p).enumerate().for_each_init(
        || vec![T::zero(); taps * p],
        |col, (n, out_n)| {
            im2col(g, &input[n * in_sample..(n + 1) * in_sample], col);
            for o in 0..g.c_out {
                let plane = &mut out_n[o * p..(o + 1) * p];
                plane.iter_mut().for_each(|v| *v = bias[o]);
                for k in 0..taps {
                    axpy(plane, weight[o * taps + k], &col[k * p..(k + 1) * p]);
                }
            }
        },
    );
    out
}

pub(crate) fn conv2d_backward_input<T: Real>(g: &ConvGeom, grad_out: &[T], weight: &[T]) -> Vec<T> {
    let (p, taps) = (g.out_plane(), g.taps());
    let in_sample = g.c_in * g.in_plane();
    let out_sample = g.c_out * p;
    let mut grad_in = vec![T::zero(); g.n * in_sample];
    grad_in.par_chunks_mut(in_sample).enumerate().for_each_init(
        || vec![T::zero(); taps * p],
        |gcol, (n, gin)| {
            let go = &grad_out[n * out_sample..(n + 1) * out_sample];
            for k in 0..taps {
                let row = &mut gcol[k * p..(k + 1) * p];
                row.iter_mut().for_each(|v| *v = T::zero());
                for o in 0..g.c_out {
                    axpy(row, weight[o * taps + k], &go[o * p..(o + 1) * p]);
                }
            }
            col2im(g, gcol, gin);
        },
    );
    grad_in
}

/// Weight and bias gradients, reduced over the batch in sample order.
pub(crate) fn conv2d_backward_params<T: Real>(
    g: &ConvGeom,
    grad_out: &[T],
    input: &[T],
) -> (Vec<T>, Vec<T>) {
    let (p, taps) = (g.out_plane(), g.taps());
    let in_sample = g.c_in * g.in_plane();
    let out_sample = g.c_out * p;
    let partials: Vec<(Vec<T>, Vec<T>)> = (0..g.n)
        .into_par_iter()
        .map_init(
            || vec![T::zero(); taps * p],
            |col, n| {
                im2col(g, &input[n * in_sample..(n + 1) * in_sample], col);
                let go = &grad_out[n * out_sample..(n + 1) * out_sample];
                let mut gw = vec![T::zero(); g.c_out * taps];
                let mut gb = vec![T::zero(); g.c_out];
                for o in 0..g.c_out {
                    let gplane = &go[o * p..(o + 1) * p];
                    gb[o] = gplane.iter().fold(T::zero(), |acc, &v| acc + v);
                    for k in 0..taps {
                        gw[o * taps + k] = dot(gplane, &col[k * p..(k + 1) * p]);
                    }
                }
                (gw, gb)
            },
        )
        .collect();
    let mut gw = vec![T::zero(); g.c_out * taps];
    let mut gb = vec![T::zero(); g.c_out];
    for (pw, pb) in &partials {
        add_assign(&mut gw, pw);
        add_assign(&mut gb, pb);
    }
    (gw, gb)
}

/// 2x2 max pooling. Returns pooled values and, per output, the flat input index
/// of the winning element (first in row-major order on ties).
pub(crate) fn maxpool2_forward<T: Real>(input: &[T], n: usize, c: usize, h: usize, w: usize) -> (Vec<T>, Vec<usize>) {
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Vec::with_capacity(n * c * oh * ow);
    let mut argmax = Vec::with_capacity(n * c * oh * ow);
    for plane in 0..n * c {
        let base = plane * h * w;
        for oy in 0..oh {
            for ox in 0..ow {
                let candidates = [
                    base + 2 * oy * w + 2 * ox,
                    base + 2 * oy * w + 2 * ox + 1,
                    base + (2 * oy + 1) * w + 2 * ox,
                    base + (2 * oy + 1) * w + 2 * ox + 1,
                ];
                let mut best = candidates[0];
                for &idx in &candidates[1..] {
                    if input[idx] > input[best] {
                        best = idx;
                    }
                }
                out.push(input[best]);
                argmax.push(best);
            }
        }
    }
    (out, argmax)
}

pub(crate) fn upsample2_forward<T: Real>(input: &[T], planes: usize, h: usize, w: usize) -> Vec<T> {
    let (oh, ow) = (2 * h, 2 * w);
    let mut out = vec![T::zero(); planes * oh * ow];
    for p in 0..planes {
        for oy in 0..oh {
            for ox in 0..ow {
                out[(p * oh + oy) * ow + ox] = input[(p * h + oy / 2) * w + ox / 2];
            }
        }
    }
    out
}

pub(crate) fn upsample2_backward<T: Real>(grad_out: &[T], planes: usize, h: usize, w: usize) -> Vec<T> {
    let (oh, ow) = (2 * h, 2 * w);
    let mut gin = vec![T::zero(); planes * h * w];
    for p in 0..planes {
        for y in 0..h {
            for x in 0..w {
                let at = |dy: usize, dx: usize| grad_out[(p * oh + 2 * y + dy) * ow + 2 * x + dx];
                gin[(p * h + y) * w + x] = at(0, 0) + at(0, 1) + at(1, 0) + at(1, 1);
            }
        }
    }
    gin
}

/// `out[n][g] = sum_f x[n][f] * w[f][g] + b[g]`
pub(crate) fn affine_forward<T: Real>(x: &[T], w: &[T], b: &[T], n: usize, f: usize, g: usize) -> Vec<T> {
    let mut out = vec![T::zero(); n * g];
    out.par_chunks_mut(g).enumerate().for_each(|(row, o)| {
        o.copy_from_slice(b);
        for k in 0..f {
            let xv = x[row * f + k];
            for (ov, &wv) in o.iter_mut().zip(&w[k * g..(k + 1) * g]) {
                *ov = *ov + xv * wv;
            }
        }
    });
    out
}

pub(crate) fn affine_backward_input<T: Real>(grad_out: &[T], w: &[T], n: usize, f: usize, g: usize) -> Vec<T> {
    let mut gin = vec![T::zero(); n * f];
    gin.par_chunks_mut(f).enumerate().for_each(|(row, gi)| {
        let go = &grad_out[row * g..(row + 1) * g];
        for (k, v) in gi.iter_mut().enumerate() {
            *v = w[k * g..(k + 1) * g]
                .iter()
                .zip(go)
                .fold(T::zero(), |acc, (&wv, &gv)| acc + wv * gv);
        }
    });
    gin
}

pub(crate) fn affine_backward_params<T: Real>(
    grad_out: &[T],
    x: &[T],
    n: usize,
    f: usize,
    g: usize,
) -> (Vec<T>, Vec<T>) {
    let mut gw = vec![T::zero(); f * g];
    let mut gb = vec![T::zero(); g];
    for row in 0..n {
        let go = &grad_out[row * g..(row + 1) * g];
        add_assign(&mut gb, go);
        for k in 0..f {
            let xv = x[row * f + k];
            for (d, &gv) in gw[k * g..(k + 1) * g].iter_mut().zip(go) {
                *d = *d + xv * gv;
            }
        }
    }
    (gw, gb)
}

#[inline]
pub(crate) fn add_assign<T: Real>(dst: &mut [T], src: &[T]) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d = *d + s;
    }
}
