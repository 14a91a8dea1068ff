//! 2-d convolution and transposed convolution over `[C,H,W]` maps.
//!
//! Output size conventions, identical for every call site in the crate:
//!   conv2d:   out = (in + 2*padding - kernel) / stride + 1   (floor)
//!   deconv2d: out = (in - 1) * stride - 2*padding + kernel
//! The CD head always upsamples with kernel 4, stride 2, padding 1, which
//! doubles the spatial size exactly.
//!
//! Loops are ordered so the innermost dimension walks output columns over
//! precomputed valid ranges: no bounds checks inside, which lets the
//! autovectorizer at the hot path. The same kernel drives forward and
//! backward via the conv/deconv adjoint symmetry.

use super::Tensor;
use crate::num::Real;

/// Valid output range for `ix = ox*stride + k - padding` to stay inside
/// `[0, limit)`.
#[inline]
fn valid_range(k: usize, padding: usize, stride: usize, out_len: usize, limit: usize) -> (usize, usize) {
    let lo = if k >= padding {
        0
    } else {
        (padding - k).div_ceil(stride)
    };
    let hi_excl = if limit + padding > k {
        ((limit + padding - k - 1) / stride + 1).min(out_len)
    } else {
        0
    };
    (lo, hi_excl.max(lo))
}

/// out[co, oy, ox] += sum_{ci,ky,kx} x[ci, oy*s+ky-p, ox*s+kx-p] * w[co,ci,ky,kx]
fn conv_forward<F: Real>(
    x: &[F],
    (cin, h, w): (usize, usize, usize),
    wv: &[F],
    (cout, kh, kw): (usize, usize, usize),
    stride: usize,
    padding: usize,
    (oh, ow): (usize, usize),
    out: &mut [F],
) {
    for co in 0..cout {
        for ci in 0..cin {
            let wbase = ((co * cin) + ci) * kh * kw;
            let xbase = ci * h * w;
            for ky in 0..kh {
                let (oy_lo, oy_hi) = valid_range(ky, padding, stride, oh, h);
                for kx in 0..kw {
                    let weight = wv[wbase + ky * kw + kx];
                    if weight == F::ZERO {
                        continue;
                    }
                    let (ox_lo, ox_hi) = valid_range(kx, padding, stride, ow, w);
                    for oy in oy_lo..oy_hi {
                        let iy = oy * stride + ky - padding;
                        let src = &x[xbase + iy * w..xbase + (iy + 1) * w];
                        let dst = &mut out[(co * oh + oy) * ow..(co * oh + oy + 1) * ow];
                        if stride == 1 {
                            let ix_lo = ox_lo + kx - padding;
                            let n = ox_hi - ox_lo;
                            for (d, s) in dst[ox_lo..ox_hi].iter_mut().zip(&src[ix_lo..ix_lo + n]) {
                                *d += weight * *s;
                            }
                        } else {
                            for ox in ox_lo..ox_hi {
                                dst[ox] += weight * src[ox * stride + kx - padding];
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Gradient w.r.t. the conv input: dx[ci, iy, ix] += w[co,ci,ky,kx] * g[co,oy,ox].
fn conv_backward_input<F: Real>(
    g: &[F],
    (cout, oh, ow): (usize, usize, usize),
    wv: &[F],
    (cin, kh, kw): (usize, usize, usize),
    stride: usize,
    padding: usize,
    (h, w): (usize, usize),
    dx: &mut [F],
) {
    for co in 0..cout {
        for ci in 0..cin {
            let wbase = ((co * cin) + ci) * kh * kw;
            let xbase = ci * h * w;
            for ky in 0..kh {
                let (oy_lo, oy_hi) = valid_range(ky, padding, stride, oh, h);
                for kx in 0..kw {
                    let weight = wv[wbase + ky * kw + kx];
                    if weight == F::ZERO {
                        continue;
                    }
                    let (ox_lo, ox_hi) = valid_range(kx, padding, stride, ow, w);
                    for oy in oy_lo..oy_hi {
                        let iy = oy * stride + ky - padding;
                        let grow = &g[(co * oh + oy) * ow..(co * oh + oy + 1) * ow];
                        let drow = &mut dx[xbase + iy * w..xbase + (iy + 1) * w];
                        if stride == 1 {
                            let ix_lo = ox_lo + kx - padding;
                            let n = ox_hi - ox_lo;
                            for (d, s) in drow[ix_lo..ix_lo + n].iter_mut().zip(&grow[ox_lo..ox_hi]) {
                                *d += weight * *s;
                            }
                        } else {
                            for ox in ox_lo..ox_hi {
                                drow[ox * stride + kx - padding] += weight * grow[ox];
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Gradient w.r.t. the conv weights: dw[co,ci,ky,kx] += x[ci,iy,ix] * g[co,oy,ox].
fn conv_backward_weight<F: Real>(
    g: &[F],
    (cout, oh, ow): (usize, usize, usize),
    x: &[F],
    (cin, h, w): (usize, usize, usize),
    (kh, kw): (usize, usize),
    stride: usize,
    padding: usize,
    dw: &mut [F],
) {
    for co in 0..cout {
        for ci in 0..cin {
            let wbase = ((co * cin) + ci) * kh * kw;
            let xbase = ci * h * w;
            for ky in 0..kh {
                let (oy_lo, oy_hi) = valid_range(ky, padding, stride, oh, h);
                for kx in 0..kw {
                    let (ox_lo, ox_hi) = valid_range(kx, padding, stride, ow, w);
                    let mut acc = F::ZERO;
                    for oy in oy_lo..oy_hi {
                        let iy = oy * stride + ky - padding;
                        let grow = &g[(co * oh + oy) * ow..(co * oh + oy + 1) * ow];
                        let src = &x[xbase + iy * w..xbase + (iy + 1) * w];
                        if stride == 1 {
                            let ix_lo = ox_lo + kx - padding;
                            let n = ox_hi - ox_lo;
                            for (s, gr) in src[ix_lo..ix_lo + n].iter().zip(&grow[ox_lo..ox_hi]) {
                                acc += *s * *gr;
                            }
                        } else {
                            for ox in ox_lo..ox_hi {
                                acc += src[ox * stride + kx - padding] * grow[ox];
                            }
                        }
                    }
                    dw[wbase + ky * kw + kx] += acc;
                }
            }
        }
    }
}

impl<F: Real> Tensor<F> {
    /// Convolution of `self` `[Cin,H,W]` with `weight` `[Cout,Cin,kh,kw]`.
    pub fn conv2d(
        &self,
        weight: &Tensor<F>,
        bias: Option<&Tensor<F>>,
        stride: usize,
        padding: usize,
    ) -> Tensor<F> {
        let xs = self.shape();
        let ws = weight.shape();
        assert!(
            xs.len() == 3 && ws.len() == 4 && xs[0] == ws[1],
            "conv2d shape mismatch: input {xs:?}, weight {ws:?}"
        );
        assert!(stride >= 1, "conv2d stride must be >= 1");
        let (cin, h, w) = (xs[0], xs[1], xs[2]);
        let (cout, kh, kw) = (ws[0], ws[2], ws[3]);
        if let Some(b) = bias {
            assert_eq!(b.shape(), [cout], "conv2d bias shape {:?} != [{cout}]", b.shape());
        }
        assert!(
            h + 2 * padding >= kh && w + 2 * padding >= kw,
            "conv2d kernel {kh}x{kw} larger than padded input {h}x{w} (padding {padding})"
        );
        let oh = (h + 2 * padding - kh) / stride + 1;
        let ow = (w + 2 * padding - kw) / stride + 1;

        let mut out = vec![F::ZERO; cout * oh * ow];
        if let Some(b) = bias {
            let bv = b.values();
            for co in 0..cout {
                out[co * oh * ow..(co + 1) * oh * ow].fill(bv[co]);
            }
        }
        conv_forward(
            &self.values(),
            (cin, h, w),
            &weight.values(),
            (cout, kh, kw),
            stride,
            padding,
            (oh, ow),
            &mut out,
        );

        let tx = self.clone();
        let tw = weight.clone();
        let tb = bias.cloned();
        let mut parents = vec![self.clone(), weight.clone()];
        if let Some(b) = bias {
            parents.push(b.clone());
        }
        Tensor::from_op(
            vec![cout, oh, ow],
            out,
            parents,
            Box::new(move |g| {
                if tx.requires_grad() {
                    let mut dx = vec![F::ZERO; cin * h * w];
                    conv_backward_input(
                        g,
                        (cout, oh, ow),
                        &tw.values(),
                        (cin, kh, kw),
                        stride,
                        padding,
                        (h, w),
                        &mut dx,
                    );
                    tx.accumulate_grad(&dx);
                }
                if tw.requires_grad() {
                    let mut dw = vec![F::ZERO; cout * cin * kh * kw];
                    conv_backward_weight(
                        g,
                        (cout, oh, ow),
                        &tx.values(),
                        (cin, h, w),
                        (kh, kw),
                        stride,
                        padding,
                        &mut dw,
                    );
                    tw.accumulate_grad(&dw);
                }
                if let Some(b) = &tb {
                    let mut db = vec![F::ZERO; cout];
                    for co in 0..cout {
                        let mut acc = F::ZERO;
                        for v in &g[co * oh * ow..(co + 1) * oh * ow] {
                            acc += *v;
                        }
                        db[co] = acc;
                    }
                    b.accumulate_grad(&db);
                }
            }),
        )
    }

    /// Transposed convolution of `self` `[Cin,H,W]` with `weight`
    /// `[Cin,Cout,kh,kw]`; the adjoint of `conv2d` with the same
    /// stride/padding. Forward scatter is conv_backward_input with the
    /// roles of input and output swapped.
    pub fn deconv2d(
        &self,
        weight: &Tensor<F>,
        bias: Option<&Tensor<F>>,
        stride: usize,
        padding: usize,
    ) -> Tensor<F> {
        let xs = self.shape();
        let ws = weight.shape();
        assert!(
            xs.len() == 3 && ws.len() == 4 && xs[0] == ws[0],
            "deconv2d shape mismatch: input {xs:?}, weight {ws:?}"
        );
        assert!(stride >= 1, "deconv2d stride must be >= 1");
        let (cin, h, w) = (xs[0], xs[1], xs[2]);
        let (cout, kh, kw) = (ws[1], ws[2], ws[3]);
        if let Some(b) = bias {
            assert_eq!(b.shape(), [cout], "deconv2d bias shape {:?} != [{cout}]", b.shape());
        }
        let oh_full = (h - 1) * stride + kh;
        let ow_full = (w - 1) * stride + kw;
        assert!(
            oh_full > 2 * padding && ow_full > 2 * padding,
            "deconv2d padding {padding} too large for output {oh_full}x{ow_full}"
        );
        let oh = oh_full - 2 * padding;
        let ow = ow_full - 2 * padding;

        let mut out = vec![F::ZERO; cout * oh * ow];
        if let Some(b) = bias {
            let bv = b.values();
            for co in 0..cout {
                out[co * oh * ow..(co + 1) * oh * ow].fill(bv[co]);
            }
        }
        // Scatter: out[co, iy*s+ky-p, ix*s+kx-p] += x[ci,iy,ix] * w. This is
        // conv_backward_input with (x, out) swapped, under which the raw
        // [Cin,Cout,kh,kw] buffer already matches the kernel's indexing.
        conv_backward_input(
            &self.values(),
            (cin, h, w),
            &weight.values(),
            (cout, kh, kw),
            stride,
            padding,
            (oh, ow),
            &mut out,
        );

        let tx = self.clone();
        let tw = weight.clone();
        let tb = bias.cloned();
        let mut parents = vec![self.clone(), weight.clone()];
        if let Some(b) = bias {
            parents.push(b.clone());
        }
        Tensor::from_op(
            vec![cout, oh, ow],
            out,
            parents,
            Box::new(move |g| {
                if tx.requires_grad() {
                    // dx[ci,iy,ix] = sum w[ci,co,ky,kx] * g[co, iy*s+ky-p, ..]:
                    // a plain convolution of the output gradient, again with
                    // the raw weight buffer serving as the conv layout under
                    // the swapped channel roles.
                    let mut dx = vec![F::ZERO; cin * h * w];
                    conv_forward(
                        g,
                        (cout, oh, ow),
                        &tw.values(),
                        (cin, kh, kw),
                        stride,
                        padding,
                        (h, w),
                        &mut dx,
                    );
                    tx.accumulate_grad(&dx);
                }
                if tw.requires_grad() {
                    // dw[ci,co,ky,kx] = sum x[ci,iy,ix] * g[co, iy*s+ky-p, ..]:
                    // conv_backward_weight with x as the "output gradient"
                    // and g as the "input". With the roles swapped, its
                    // [b,a,k] output layout is exactly the deconv weight
                    // layout [Cin,Cout,kh,kw] — no permutation needed.
                    let mut dw = vec![F::ZERO; cin * cout * kh * kw];
                    conv_backward_weight(
                        &tx.values(),
                        (cin, h, w),
                        g,
                        (cout, oh, ow),
                        (kh, kw),
                        stride,
                        padding,
                        &mut dw,
                    );
                    tw.accumulate_grad(&dw);
                }
                if let Some(b) = &tb {
                    let mut db = vec![F::ZERO; cout];
                    for co in 0..cout {
                        let mut acc = F::ZERO;
                        for v in &g[co * oh * ow..(co + 1) * oh * ow] {
                            acc += *v;
                        }
                        db[co] = acc;
                    }
                    b.accumulate_grad(&db);
                }
            }),
        )
    }
}
