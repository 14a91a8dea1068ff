//! Differentiable tensor operations.
//!
//! Shape errors are programmer errors and panic with both shapes in the
//! message; data-dependent failures surface as `Result` at module
//! boundaries higher up the stack.

use super::{numel, Tensor};
use crate::num::Real;

/// Decomposes `shape` around `axis` into (pre, len, post) so element
/// `(i_pre, l, i_post)` lives at `((i_pre * len) + l) * post + i_post`.
fn axis_split(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    assert!(axis < shape.len(), "axis {axis} out of range for {shape:?}");
    let pre: usize = shape[..axis].iter().product();
    let len = shape[axis];
    let post: usize = shape[axis + 1..].iter().product();
    (pre, len, post)
}

impl<F: Real> Tensor<F> {
    pub fn add(&self, other: &Tensor<F>) -> Tensor<F> {
        binary_elementwise(self, other, "add", |a, b| a + b, |g, _, _| (*g, *g))
    }

    pub fn sub(&self, other: &Tensor<F>) -> Tensor<F> {
        binary_elementwise(self, other, "sub", |a, b| a - b, |g, _, _| (*g, -*g))
    }

    pub fn mul(&self, other: &Tensor<F>) -> Tensor<F> {
        binary_elementwise(self, other, "mul", |a, b| a * b, |g, a, b| (*g * *b, *g * *a))
    }

    pub fn neg(&self) -> Tensor<F> {
        self.scale(-F::ONE)
    }

    pub fn scale(&self, c: F) -> Tensor<F> {
        let out: Vec<F> = self.values().iter().map(|&v| v * c).collect();
        let x = self.clone();
        Tensor::from_op(
            self.shape().to_vec(),
            out,
            vec![self.clone()],
            Box::new(move |g| {
                let delta: Vec<F> = g.iter().map(|&gi| gi * c).collect();
                x.accumulate_grad(&delta);
            }),
        )
    }

    pub fn add_scalar(&self, c: F) -> Tensor<F> {
        let out: Vec<F> = self.values().iter().map(|&v| v + c).collect();
        let x = self.clone();
        Tensor::from_op(
            self.shape().to_vec(),
            out,
            vec![self.clone()],
            Box::new(move |g| x.accumulate_grad(g)),
        )
    }

    pub fn relu(&self) -> Tensor<F> {
        let out: Vec<F> = self.values().iter().map(|&v| v.maximum(F::ZERO)).collect();
        let x = self.clone();
        Tensor::from_op(
            self.shape().to_vec(),
            out,
            vec![self.clone()],
            Box::new(move |g| {
                let vals = x.values();
                let delta: Vec<F> = g
                    .iter()
                    .zip(vals.iter())
                    .map(|(&gi, &vi)| if vi > F::ZERO { gi } else { F::ZERO })
                    .collect();
                drop(vals);
                x.accumulate_grad(&delta);
            }),
        )
    }

    /// Matrix product `[m,k] x [k,n] -> [m,n]`.
    pub fn matmul(&self, other: &Tensor<F>) -> Tensor<F> {
        let (a_shape, b_shape) = (self.shape().to_vec(), other.shape().to_vec());
        assert!(
            a_shape.len() == 2 && b_shape.len() == 2 && a_shape[1] == b_shape[0],
            "matmul shape mismatch: {a_shape:?} x {b_shape:?}"
        );
        let (m, k, n) = (a_shape[0], a_shape[1], b_shape[1]);
        let a = self.values();
        let b = other.values();
        let mut out = vec![F::ZERO; m * n];
        for i in 0..m {
            for kk in 0..k {
                let aik = a[i * k + kk];
                if aik == F::ZERO {
                    continue;
                }
                let brow = &b[kk * n..(kk + 1) * n];
                let orow = &mut out[i * n..(i + 1) * n];
                for j in 0..n {
                    orow[j] += aik * brow[j];
                }
            }
        }
        drop(a);
        drop(b);
        let (ta, tb) = (self.clone(), other.clone());
        Tensor::from_op(
            vec![m, n],
            out,
            vec![self.clone(), other.clone()],
            Box::new(move |g| {
                // dA = g . B^T, dB = A^T . g
                if ta.requires_grad() {
                    let b = tb.values();
                    let mut da = vec![F::ZERO; m * k];
                    for i in 0..m {
                        for kk in 0..k {
                            let mut acc = F::ZERO;
                            let grow = &g[i * n..(i + 1) * n];
                            let brow = &b[kk * n..(kk + 1) * n];
                            for j in 0..n {
                                acc += grow[j] * brow[j];
                            }
                            da[i * k + kk] = acc;
                        }
                    }
                    drop(b);
                    ta.accumulate_grad(&da);
                }
                if tb.requires_grad() {
                    let a = ta.values();
                    let mut db = vec![F::ZERO; k * n];
                    for kk in 0..k {
                        for i in 0..m {
                            let aik = a[i * k + kk];
                            if aik == F::ZERO {
                                continue;
                            }
                            let grow = &g[i * n..(i + 1) * n];
                            let drow = &mut db[kk * n..(kk + 1) * n];
                            for j in 0..n {
                                drow[j] += aik * grow[j];
                            }
                        }
                    }
                    drop(a);
                    tb.accumulate_grad(&db);
                }
            }),
        )
    }

    /// Transpose of a `[m,n]` matrix.
    pub fn transpose2d(&self) -> Tensor<F> {
        let s = self.shape();
        assert_eq!(s.len(), 2, "transpose2d on shape {s:?}");
        let (m, n) = (s[0], s[1]);
        let v = self.values();
        let mut out = vec![F::ZERO; m * n];
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = v[i * n + j];
            }
        }
        drop(v);
        let x = self.clone();
        Tensor::from_op(
            vec![n, m],
            out,
            vec![self.clone()],
            Box::new(move |g| {
                let mut delta = vec![F::ZERO; m * n];
                for j in 0..n {
                    for i in 0..m {
                        delta[i * n + j] = g[j * m + i];
                    }
                }
                x.accumulate_grad(&delta);
            }),
        )
    }

    /// Adds a `[n]` vector to every row of a `[m,n]` matrix.
    pub fn add_row(&self, bias: &Tensor<F>) -> Tensor<F> {
        let s = self.shape();
        assert!(
            s.len() == 2 && bias.shape() == [s[1]],
            "add_row shape mismatch: {:?} + {:?}",
            s,
            bias.shape()
        );
        let (m, n) = (s[0], s[1]);
        let b = bias.values();
        let out: Vec<F> = self
            .values()
            .iter()
            .enumerate()
            .map(|(i, &v)| v + b[i % n])
            .collect();
        drop(b);
        let (tx, tb) = (self.clone(), bias.clone());
        Tensor::from_op(
            vec![m, n],
            out,
            vec![self.clone(), bias.clone()],
            Box::new(move |g| {
                tx.accumulate_grad(g);
                if tb.requires_grad() {
                    let mut db = vec![F::ZERO; n];
                    for i in 0..m {
                        for j in 0..n {
                            db[j] += g[i * n + j];
                        }
                    }
                    tb.accumulate_grad(&db);
                }
            }),
        )
    }

    /// Adds a `[m]` column vector across every column of a `[m,n]` matrix
    /// (per-row scalar broadcast).
    pub fn add_col(&self, col: &Tensor<F>) -> Tensor<F> {
        let s = self.shape();
        assert!(
            s.len() == 2 && col.shape() == [s[0]],
            "add_col shape mismatch: {:?} + {:?}",
            s,
            col.shape()
        );
        let (m, n) = (s[0], s[1]);
        let c = col.values();
        let out: Vec<F> = self
            .values()
            .iter()
            .enumerate()
            .map(|(i, &v)| v + c[i / n])
            .collect();
        drop(c);
        let (tx, tc) = (self.clone(), col.clone());
        Tensor::from_op(
            vec![m, n],
            out,
            vec![self.clone(), col.clone()],
            Box::new(move |g| {
                tx.accumulate_grad(g);
                if tc.requires_grad() {
                    let mut dc = vec![F::ZERO; m];
                    for i in 0..m {
                        let mut acc = F::ZERO;
                        for j in 0..n {
                            acc += g[i * n + j];
                        }
                        dc[i] = acc;
                    }
                    tc.accumulate_grad(&dc);
                }
            }),
        )
    }

    /// Numerically stabilized softmax along `axis`: lanes are shifted by
    /// their max before exponentiation, so `softmax(x + c) == softmax(x)`.
    pub fn softmax(&self, axis: usize) -> Tensor<F> {
        let shape = self.shape().to_vec();
        let (pre, len, post) = axis_split(&shape, axis);
        let v = self.values();
        let mut out = vec![F::ZERO; v.len()];
        for ip in 0..pre {
            for jp in 0..post {
                let at = |l: usize| (ip * len + l) * post + jp;
                let mut mx = v[at(0)];
                for l in 1..len {
                    mx = mx.maximum(v[at(l)]);
                }
                let mut sum = F::ZERO;
                for l in 0..len {
                    let e = (v[at(l)] - mx).exp();
                    out[at(l)] = e;
                    sum += e;
                }
                for l in 0..len {
                    out[at(l)] /= sum;
                }
            }
        }
        drop(v);
        let y = out.clone();
        let x = self.clone();
        Tensor::from_op(
            shape,
            out,
            vec![self.clone()],
            Box::new(move |g| {
                // dx = y * (g - sum(g * y)) per lane
                let mut delta = vec![F::ZERO; y.len()];
                for ip in 0..pre {
                    for jp in 0..post {
                        let at = |l: usize| (ip * len + l) * post + jp;
                        let mut dot = F::ZERO;
                        for l in 0..len {
                            dot += g[at(l)] * y[at(l)];
                        }
                        for l in 0..len {
                            delta[at(l)] = y[at(l)] * (g[at(l)] - dot);
                        }
                    }
                }
                x.accumulate_grad(&delta);
            }),
        )
    }

    /// Layer normalization along `axis` with per-position affine
    /// parameters `gamma`/`beta` of length `shape[axis]`.
    pub fn layer_norm(&self, axis: usize, gamma: &Tensor<F>, beta: &Tensor<F>, eps: f64) -> Tensor<F> {
        let shape = self.shape().to_vec();
        let (pre, len, post) = axis_split(&shape, axis);
        assert!(
            gamma.shape() == [len] && beta.shape() == [len],
            "layer_norm affine shape mismatch: axis len {len}, gamma {:?}, beta {:?}",
            gamma.shape(),
            beta.shape()
        );
        let epsf = F::from_f64(eps);
        let v = self.values();
        let gm = gamma.values();
        let bt = beta.values();
        let mut out = vec![F::ZERO; v.len()];
        let mut xhat = vec![F::ZERO; v.len()];
        let mut inv_std = vec![F::ZERO; pre * post];
        let lenf = F::from_usize(len);
        for ip in 0..pre {
            for jp in 0..post {
                let at = |l: usize| (ip * len + l) * post + jp;
                let mut mean = F::ZERO;
                for l in 0..len {
                    mean += v[at(l)];
                }
                mean /= lenf;
                let mut var = F::ZERO;
                for l in 0..len {
                    let d = v[at(l)] - mean;
                    var += d * d;
                }
                var /= lenf;
                let istd = F::ONE / (var + epsf).sqrt();
                inv_std[ip * post + jp] = istd;
                for l in 0..len {
                    let xh = (v[at(l)] - mean) * istd;
                    xhat[at(l)] = xh;
                    out[at(l)] = gm[l] * xh + bt[l];
                }
            }
        }
        drop(v);
        drop(gm);
        drop(bt);
        let (tx, tg, tb) = (self.clone(), gamma.clone(), beta.clone());
        Tensor::from_op(
            shape,
            out,
            vec![self.clone(), gamma.clone(), beta.clone()],
            Box::new(move |g| {
                let gm = tg.values();
                let mut dx = vec![F::ZERO; xhat.len()];
                let mut dgamma = vec![F::ZERO; len];
                let mut dbeta = vec![F::ZERO; len];
                for ip in 0..pre {
                    for jp in 0..post {
                        let at = |l: usize| (ip * len + l) * post + jp;
                        let istd = inv_std[ip * post + jp];
                        let mut sum_dxhat = F::ZERO;
                        let mut sum_dxhat_xhat = F::ZERO;
                        for l in 0..len {
                            let dxh = g[at(l)] * gm[l];
                            sum_dxhat += dxh;
                            sum_dxhat_xhat += dxh * xhat[at(l)];
                            dgamma[l] += g[at(l)] * xhat[at(l)];
                            dbeta[l] += g[at(l)];
                        }
                        for l in 0..len {
                            let dxh = g[at(l)] * gm[l];
                            dx[at(l)] = (dxh - (sum_dxhat + xhat[at(l)] * sum_dxhat_xhat) / lenf) * istd;
                        }
                    }
                }
                drop(gm);
                tx.accumulate_grad(&dx);
                tg.accumulate_grad(&dgamma);
                tb.accumulate_grad(&dbeta);
            }),
        )
    }

    /// Contiguous slice `[start, end)` along `axis`.
    pub fn slice_axis(&self, axis: usize, start: usize, end: usize) -> Tensor<F> {
        let shape = self.shape().to_vec();
        let (pre, len, post) = axis_split(&shape, axis);
        assert!(
            start < end && end <= len,
            "slice [{start},{end}) out of range for axis {axis} of {shape:?}"
        );
        let out_len = end - start;
        let v = self.values();
        let mut out = vec![F::ZERO; pre * out_len * post];
        for ip in 0..pre {
            for l in 0..out_len {
                let src = (ip * len + start + l) * post;
                let dst = (ip * out_len + l) * post;
                out[dst..dst + post].copy_from_slice(&v[src..src + post]);
            }
        }
        drop(v);
        let mut out_shape = shape.clone();
        out_shape[axis] = out_len;
        let x = self.clone();
        let full_len = self.numel();
        Tensor::from_op(
            out_shape,
            out,
            vec![self.clone()],
            Box::new(move |g| {
                let mut delta = vec![F::ZERO; full_len];
                for ip in 0..pre {
                    for l in 0..out_len {
                        let dst = (ip * len + start + l) * post;
                        let src = (ip * out_len + l) * post;
                        delta[dst..dst + post].copy_from_slice(&g[src..src + post]);
                    }
                }
                x.accumulate_grad(&delta);
            }),
        )
    }

    /// Reorders a `[C,H,W]` feature map into a `[H*W, C]` token sequence.
    pub fn flatten_spatial(&self) -> Tensor<F> {
        let s = self.shape();
        assert_eq!(s.len(), 3, "flatten_spatial on shape {s:?}");
        let (c, h, w) = (s[0], s[1], s[2]);
        let hw = h * w;
        let v = self.values();
        let mut out = vec![F::ZERO; hw * c];
        for ch in 0..c {
            for p in 0..hw {
                out[p * c + ch] = v[ch * hw + p];
            }
        }
        drop(v);
        let x = self.clone();
        Tensor::from_op(
            vec![hw, c],
            out,
            vec![self.clone()],
            Box::new(move |g| {
                let mut delta = vec![F::ZERO; c * hw];
                for ch in 0..c {
                    for p in 0..hw {
                        delta[ch * hw + p] = g[p * c + ch];
                    }
                }
                x.accumulate_grad(&delta);
            }),
        )
    }

    /// Row lookup: `table[V,C]` gathered at `ids` -> `[len(ids), C]`.
    pub fn embedding(&self, ids: &[usize]) -> Tensor<F> {
        let s = self.shape();
        assert_eq!(s.len(), 2, "embedding table must be 2-d, got {s:?}");
        let (v, c) = (s[0], s[1]);
        for &id in ids {
            assert!(id < v, "token id {id} out of vocabulary range {v}");
        }
        let table = self.values();
        let mut out = vec![F::ZERO; ids.len() * c];
        for (row, &id) in ids.iter().enumerate() {
            out[row * c..(row + 1) * c].copy_from_slice(&table[id * c..(id + 1) * c]);
        }
        drop(table);
        let ids_owned = ids.to_vec();
        let t = self.clone();
        Tensor::from_op(
            vec![ids_owned.len(), c],
            out,
            vec![self.clone()],
            Box::new(move |g| {
                let mut delta = vec![F::ZERO; v * c];
                for (row, &id) in ids_owned.iter().enumerate() {
                    for j in 0..c {
                        delta[id * c + j] += g[row * c + j];
                    }
                }
                t.accumulate_grad(&delta);
            }),
        )
    }

    /// Per-row cosine similarity between two `[S,C]` sequences -> `[S]`.
    /// Rows whose norm product underflows are assigned similarity 0 with
    /// zero gradient.
    pub fn cosine_rows(&self, other: &Tensor<F>) -> Tensor<F> {
        let s = self.shape();
        assert!(
            s.len() == 2 && other.shape() == s,
            "cosine_rows shape mismatch: {:?} vs {:?}",
            s,
            other.shape()
        );
        let (rows, c) = (s[0], s[1]);
        let eps = F::from_f64(1e-12);
        let a = self.values();
        let b = other.values();
        let mut out = vec![F::ZERO; rows];
        for i in 0..rows {
            let ra = &a[i * c..(i + 1) * c];
            let rb = &b[i * c..(i + 1) * c];
            let (mut dot, mut na, mut nb) = (F::ZERO, F::ZERO, F::ZERO);
            for j in 0..c {
                dot += ra[j] * rb[j];
                na += ra[j] * ra[j];
                nb += rb[j] * rb[j];
            }
            let denom = na.sqrt() * nb.sqrt();
            out[i] = if denom > eps { dot / denom } else { F::ZERO };
        }
        drop(a);
        drop(b);
        let (ta, tb) = (self.clone(), other.clone());
        Tensor::from_op(
            vec![rows],
            out,
            vec![self.clone(), other.clone()],
            Box::new(move |g| {
                let a = ta.values();
                let b = tb.values();
                let mut da = vec![F::ZERO; rows * c];
                let mut db = vec![F::ZERO; rows * c];
                for i in 0..rows {
                    let ra = &a[i * c..(i + 1) * c];
                    let rb = &b[i * c..(i + 1) * c];
                    let (mut dot, mut na2, mut nb2) = (F::ZERO, F::ZERO, F::ZERO);
                    for j in 0..c {
                        dot += ra[j] * rb[j];
                        na2 += ra[j] * ra[j];
                        nb2 += rb[j] * rb[j];
                    }
                    let na = na2.sqrt();
                    let nb = nb2.sqrt();
                    let denom = na * nb;
                    if denom <= eps {
                        continue;
                    }
                    let cos = dot / denom;
                    let gi = g[i];
                    for j in 0..c {
                        da[i * c + j] = gi * (rb[j] / denom - cos * ra[j] / na2);
                        db[i * c + j] = gi * (ra[j] / denom - cos * rb[j] / nb2);
                    }
                }
                drop(a);
                drop(b);
                ta.accumulate_grad(&da);
                tb.accumulate_grad(&db);
            }),
        )
    }

    pub fn sum_all(&self) -> Tensor<F> {
        let total = self.values().iter().fold(F::ZERO, |acc, &v| acc + v);
        let n = self.numel();
        let x = self.clone();
        Tensor::from_op(
            vec![1],
            vec![total],
            vec![self.clone()],
            Box::new(move |g| {
                let delta = vec![g[0]; n];
                x.accumulate_grad(&delta);
            }),
        )
    }

    pub fn mean_all(&self) -> Tensor<F> {
        let n = self.numel();
        self.sum_all().scale(F::ONE / F::from_usize(n))
    }

    /// Mean pixel-wise cross-entropy of `[C,H,W]` logits against integer
    /// labels of length `H*W`. Softmax over the class axis is fused in;
    /// callers must validate `labels[i] < C`.
    pub fn cross_entropy_mean_pixels(&self, labels: &[usize]) -> Tensor<F> {
        let s = self.shape();
        assert_eq!(s.len(), 3, "cross_entropy_mean_pixels on shape {s:?}");
        let (c, h, w) = (s[0], s[1], s[2]);
        let hw = h * w;
        assert_eq!(labels.len(), hw, "labels len {} != {h}x{w}", labels.len());
        for &y in labels {
            assert!(y < c, "label {y} out of class range {c}");
        }
        let v = self.values();
        let mut probs = vec![F::ZERO; c * hw];
        let mut loss = F::ZERO;
        for p in 0..hw {
            let mut mx = v[p];
            for ch in 1..c {
                mx = mx.maximum(v[ch * hw + p]);
            }
            let mut sum = F::ZERO;
            for ch in 0..c {
                let e = (v[ch * hw + p] - mx).exp();
                probs[ch * hw + p] = e;
                sum += e;
            }
            let lse = mx + sum.ln();
            loss += lse - v[labels[p] * hw + p];
            for ch in 0..c {
                probs[ch * hw + p] /= sum;
            }
        }
        drop(v);
        let nf = F::from_usize(hw);
        loss /= nf;
        let labels_owned = labels.to_vec();
        let x = self.clone();
        Tensor::from_op(
            vec![1],
            vec![loss],
            vec![self.clone()],
            Box::new(move |g| {
                let scale = g[0] / nf;
                let mut delta = vec![F::ZERO; c * hw];
                for p in 0..hw {
                    for ch in 0..c {
                        let one_hot = if labels_owned[p] == ch { F::ONE } else { F::ZERO };
                        delta[ch * hw + p] = scale * (probs[ch * hw + p] - one_hot);
                    }
                }
                x.accumulate_grad(&delta);
            }),
        )
    }

    /// Summed per-row cross-entropy of `[L,V]` logits against targets;
    /// `None` rows (padding) contribute neither loss nor gradient.
    pub fn cross_entropy_sum_rows(&self, targets: &[Option<usize>]) -> Tensor<F> {
        let s = self.shape();
        assert_eq!(s.len(), 2, "cross_entropy_sum_rows on shape {s:?}");
        let (rows, v) = (s[0], s[1]);
        assert_eq!(targets.len(), rows, "targets len {} != rows {rows}", targets.len());
        for t in targets.iter().flatten() {
            assert!(*t < v, "target {t} out of vocabulary range {v}");
        }
        let vals = self.values();
        let mut probs = vec![F::ZERO; rows * v];
        let mut loss = F::ZERO;
        for (r, target) in targets.iter().enumerate() {
            let row = &vals[r * v..(r + 1) * v];
            let mut mx = row[0];
            for &x in row.iter() {
                mx = mx.maximum(x);
            }
            let mut sum = F::ZERO;
            for (j, &x) in row.iter().enumerate() {
                let e = (x - mx).exp();
                probs[r * v + j] = e;
                sum += e;
            }
            for j in 0..v {
                probs[r * v + j] /= sum;
            }
            if let Some(t) = target {
                loss += mx + sum.ln() - row[*t];
            }
        }
        drop(vals);
        let targets_owned = targets.to_vec();
        let x = self.clone();
        Tensor::from_op(
            vec![1],
            vec![loss],
            vec![self.clone()],
            Box::new(move |g| {
                let mut delta = vec![F::ZERO; rows * v];
                for (r, target) in targets_owned.iter().enumerate() {
                    if let Some(t) = target {
                        for j in 0..v {
                            let one_hot = if *t == j { F::ONE } else { F::ZERO };
                            delta[r * v + j] = g[0] * (probs[r * v + j] - one_hot);
                        }
                    }
                }
                x.accumulate_grad(&delta);
            }),
        )
    }
}

fn binary_elementwise<F: Real>(
    a: &Tensor<F>,
    b: &Tensor<F>,
    name: &str,
    f: fn(F, F) -> F,
    df: fn(&F, &F, &F) -> (F, F),
) -> Tensor<F> {
    assert_eq!(
        a.shape(),
        b.shape(),
        "{name} shape mismatch: {:?} vs {:?}",
        a.shape(),
        b.shape()
    );
    let out: Vec<F> = a
        .values()
        .iter()
        .zip(b.values().iter())
        .map(|(&x, &y)| f(x, y))
        .collect();
    let (ta, tb) = (a.clone(), b.clone());
    Tensor::from_op(
        a.shape().to_vec(),
        out,
        vec![a.clone(), b.clone()],
        Box::new(move |g| {
            let av = ta.values();
            let bv = tb.values();
            let mut da = vec![F::ZERO; g.len()];
            let mut db = vec![F::ZERO; g.len()];
            for i in 0..g.len() {
                let (xa, xb) = df(&g[i], &av[i], &bv[i]);
                da[i] = xa;
                db[i] = xb;
            }
            drop(av);
            drop(bv);
            ta.accumulate_grad(&da);
            tb.accumulate_grad(&db);
        }),
    )
}

/// Concatenates tensors along `axis`; all other dimensions must agree.
pub fn concat<F: Real>(parts: &[&Tensor<F>], axis: usize) -> Tensor<F> {
    assert!(!parts.is_empty(), "concat of zero tensors");
    let first = parts[0].shape().to_vec();
    for p in parts {
        let s = p.shape();
        assert_eq!(s.len(), first.len(), "concat rank mismatch: {s:?} vs {first:?}");
        for (d, (&a, &b)) in s.iter().zip(first.iter()).enumerate() {
            assert!(
                d == axis || a == b,
                "concat shape mismatch on dim {d}: {s:?} vs {first:?}"
            );
        }
    }
    let (pre, _, post) = axis_split(&first, axis);
    let lens: Vec<usize> = parts.iter().map(|p| p.shape()[axis]).collect();
    let total: usize = lens.iter().sum();
    let mut out_shape = first.clone();
    out_shape[axis] = total;
    let mut out = vec![F::ZERO; numel(&out_shape)];
    let mut offset = 0;
    for (p, &len) in parts.iter().zip(&lens) {
        let v = p.values();
        for ip in 0..pre {
            let src = ip * len * post;
            let dst = (ip * total + offset) * post;
            out[dst..dst + len * post].copy_from_slice(&v[src..src + len * post]);
        }
        offset += len;
    }
    let owned: Vec<Tensor<F>> = parts.iter().map(|p| (*p).clone()).collect();
    let parents = owned.clone();
    Tensor::from_op(
        out_shape,
        out,
        parents,
        Box::new(move |g| {
            let mut offset = 0;
            for (p, &len) in owned.iter().zip(&lens) {
                if p.requires_grad() {
                    let mut delta = vec![F::ZERO; pre * len * post];
                    for ip in 0..pre {
                        let dst = ip * len * post;
                        let src = (ip * total + offset) * post;
                        delta[dst..dst + len * post].copy_from_slice(&g[src..src + len * post]);
                    }
                    p.accumulate_grad(&delta);
                }
                offset += len;
            }
        }),
    )
}

#[cfg(test)]
mod tests {
    use super::super::Tensor;
    use super::concat;

    #[test]
    fn softmax_of_zeros_is_uniform() {
        let x = Tensor::from_vec(&[2], vec![0.0f64, 0.0]);
        let y = x.softmax(0);
        assert_eq!(y.to_vec(), vec![0.5, 0.5]);
    }

    #[test]
    fn softmax_matches_closed_form() {
        // exp(ln k) = k, so [ln1, ln2, ln3] -> [1/6, 2/6, 3/6]
        let x = Tensor::from_vec(&[3], vec![1.0f64.ln(), 2.0f64.ln(), 3.0f64.ln()]);
        let y = x.softmax(0);
        let v = y.to_vec();
        for (got, want) in v.iter().zip([1.0 / 6.0, 2.0 / 6.0, 3.0 / 6.0]) {
            assert!((got - want).abs() < 1e-12, "{got} vs {want}");
        }
    }

    #[test]
    fn softmax_is_shift_invariant() {
        let x = Tensor::from_vec(&[3], vec![0.3f64, -1.2, 2.0]);
        let shifted = x.add_scalar(100.0);
        let a = x.softmax(0).to_vec();
        let b = shifted.softmax(0).to_vec();
        for (ai, bi) in a.iter().zip(&b) {
            assert!((ai - bi).abs() < 1e-6);
        }
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let x = Tensor::from_vec(&[2, 4], vec![0.1f64, -3.0, 2.5, 0.0, 7.0, 7.0, -7.0, 1.0]);
        let y = x.softmax(1);
        let v = y.to_vec();
        for r in 0..2 {
            let sum: f64 = v[r * 4..(r + 1) * 4].iter().sum();
            assert!((sum - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn matmul_small_known() {
        let a = Tensor::from_vec(&[2, 2], vec![1.0f64, 2.0, 3.0, 4.0]);
        let b = Tensor::from_vec(&[2, 2], vec![5.0, 6.0, 7.0, 8.0]);
        assert_eq!(a.matmul(&b).to_vec(), vec![19.0, 22.0, 43.0, 50.0]);
    }

    #[test]
    fn concat_and_slice_round_trip() {
        let a = Tensor::from_vec(&[2, 2], vec![1.0f64, 2.0, 3.0, 4.0]);
        let b = Tensor::from_vec(&[2, 3], vec![5.0, 6.0, 7.0, 8.0, 9.0, 10.0]);
        let cat = concat(&[&a, &b], 1);
        assert_eq!(cat.shape(), &[2, 5]);
        assert_eq!(cat.slice_axis(1, 0, 2).to_vec(), a.to_vec());
        assert_eq!(cat.slice_axis(1, 2, 5).to_vec(), b.to_vec());
    }

    #[test]
    fn flatten_spatial_reorders() {
        // [C=2, H=1, W=2]: channel 0 = [1,2], channel 1 = [3,4]
        let x = Tensor::from_vec(&[2, 1, 2], vec![1.0f64, 2.0, 3.0, 4.0]);
        let seq = x.flatten_spatial();
        assert_eq!(seq.shape(), &[2, 2]);
        assert_eq!(seq.to_vec(), vec![1.0, 3.0, 2.0, 4.0]);
    }

    #[test]
    fn cosine_rows_parallel_and_orthogonal() {
        let a = Tensor::from_vec(&[2, 2], vec![1.0f64, 0.0, 1.0, 0.0]);
        let b = Tensor::from_vec(&[2, 2], vec![2.0, 0.0, 0.0, 3.0]);
        let cos = a.cosine_rows(&b).to_vec();
        assert!((cos[0] - 1.0).abs() < 1e-12);
        assert!(cos[1].abs() < 1e-12);
    }

    #[test]
    fn cosine_rows_zero_convention() {
        let a = Tensor::from_vec(&[1, 3], vec![0.0f64, 0.0, 0.0]);
        let b = Tensor::from_vec(&[1, 3], vec![1.0, 2.0, 3.0]);
        assert_eq!(a.cosine_rows(&b).to_vec(), vec![0.0]);
    }

    #[test]
    fn pixel_cross_entropy_uniform_is_ln2() {
        let logits = Tensor::from_vec(&[2, 2, 2], vec![0.0f64; 8]);
        let loss = logits.cross_entropy_mean_pixels(&[0, 1, 0, 1]);
        assert!((loss.item() - (2.0f64).ln()).abs() < 1e-12);
    }

    #[test]
    fn row_cross_entropy_skips_padding() {
        let logits = Tensor::from_vec(&[2, 4], vec![0.0f64; 8]);
        let full = logits.cross_entropy_sum_rows(&[Some(1), Some(2)]);
        let padded = logits.cross_entropy_sum_rows(&[Some(1), None]);
        assert!((full.item() - 2.0 * (4.0f64).ln()).abs() < 1e-12);
        assert!((padded.item() - (4.0f64).ln()).abs() < 1e-12);
    }

    #[test]
    #[should_panic(expected = "matmul shape mismatch")]
    fn matmul_shape_mismatch_panics_with_shapes() {
        let a = Tensor::from_vec(&[2, 3], vec![0.0f64; 6]);
        let b = Tensor::from_vec(&[2, 2], vec![0.0f64; 4]);
        let _ = a.matmul(&b);
    }
}
