//! Shared layer building blocks.
//!
//! Convolution blocks omit the conv bias: the channel layer norm that
//! follows has its own shift, and a bias ahead of it would train with a
//! degenerate gradient. Heads that end a pathway (the mask classifier, the
//! vocabulary projection) keep real biases.

use crate::num::Real;
use crate::params::{Binding, ParamId, ParamStore};
use crate::rng::Rng;
use crate::tensor::Tensor;

pub const LN_EPS: f64 = 1e-5;

/// conv(3x3 or as given, no bias) -> channel layer norm -> ReLU.
///
/// The norm is affine-free: per-position channel statistics are pinned to
/// zero mean and unit variance. A learnable gain would hand the optimizer
/// a one-parameter-per-channel path to input-independent outputs
/// (gain -> 0), which is exactly the representation collapse the caption
/// loss rewards early in joint training.
#[derive(Debug, Clone)]
pub struct ConvBlock {
    weight: ParamId,
    stride: usize,
    padding: usize,
}

impl ConvBlock {
    pub fn new<F: Real>(
        store: &mut ParamStore<F>,
        rng: &mut Rng,
        name: &str,
        cin: usize,
        cout: usize,
        kernel: usize,
        stride: usize,
    ) -> Self {
        let weight = store.add_uniform(
            &format!("{name}.conv.weight"),
            &[cout, cin, kernel, kernel],
            cin * kernel * kernel,
            rng,
        );
        ConvBlock {
            weight,
            stride,
            padding: kernel / 2,
        }
    }

    pub fn forward<F: Real>(&self, bind: &Binding<F>, x: &Tensor<F>) -> Tensor<F> {
        let y = x.conv2d(bind.get(self.weight), None, self.stride, self.padding);
        let channels = y.shape()[0];
        y.layer_norm(0, &Tensor::full(&[channels], F::ONE), &Tensor::zeros(&[channels]), LN_EPS)
            .relu()
    }
}

/// deconv(4x4, stride 2, padding 1, no bias) -> channel layer norm -> ReLU.
/// Exactly doubles the spatial size; the single upsampling primitive.
/// Affine-free norm for the same reason as [`ConvBlock`].
#[derive(Debug, Clone)]
pub struct UpsampleBlock {
    weight: ParamId,
}

impl UpsampleBlock {
    pub fn new<F: Real>(store: &mut ParamStore<F>, rng: &mut Rng, name: &str, cin: usize, cout: usize) -> Self {
        let weight = store.add_uniform(
            &format!("{name}.deconv.weight"),
            &[cin, cout, 4, 4],
            cin * 16,
            rng,
        );
        UpsampleBlock { weight }
    }

    pub fn forward<F: Real>(&self, bind: &Binding<F>, x: &Tensor<F>) -> Tensor<F> {
        let y = x.deconv2d(bind.get(self.weight), None, 2, 1);
        let channels = y.shape()[0];
        y.layer_norm(0, &Tensor::full(&[channels], F::ONE), &Tensor::zeros(&[channels]), LN_EPS)
            .relu()
    }
}

/// Fully connected `[.., in] -> [.., out]` with bias.
#[derive(Debug, Clone)]
pub struct Dense {
    weight: ParamId,
    bias: ParamId,
}

impl Dense {
    pub fn new<F: Real>(store: &mut ParamStore<F>, rng: &mut Rng, name: &str, dim_in: usize, dim_out: usize) -> Self {
        Dense {
            weight: store.add_uniform(&format!("{name}.weight"), &[dim_in, dim_out], dim_in, rng),
            bias: store.add_zeros(&format!("{name}.bias"), &[dim_out]),
        }
    }

    pub fn forward<F: Real>(&self, bind: &Binding<F>, x: &Tensor<F>) -> Tensor<F> {
        x.matmul(bind.get(self.weight)).add_row(bind.get(self.bias))
    }
}

/// Bias-free projection; attention projections carry no bias term.
#[derive(Debug, Clone)]
pub struct Projection {
    weight: ParamId,
}

impl Projection {
    pub fn new<F: Real>(store: &mut ParamStore<F>, rng: &mut Rng, name: &str, dim_in: usize, dim_out: usize) -> Self {
        Self::new_scaled(store, rng, name, dim_in, dim_out, 1.0)
    }

    /// Fan-in uniform init shrunk by `gain`. Attention output projections
    /// use a small gain: residual branches then start near (but not at)
    /// zero, so early optimization cannot profit from suppressing the
    /// branch's input features, while every projection still receives a
    /// nonzero gradient from step one.
    pub fn new_scaled<F: Real>(
        store: &mut ParamStore<F>,
        rng: &mut Rng,
        name: &str,
        dim_in: usize,
        dim_out: usize,
        gain: f64,
    ) -> Self {
        let bound = gain / (dim_in.max(1) as f64).sqrt();
        let values: Vec<F> = (0..dim_in * dim_out)
            .map(|_| F::from_f64(rng.range(-bound, bound)))
            .collect();
        Projection {
            weight: store.add(&format!("{name}.weight"), &[dim_in, dim_out], values),
        }
    }

    pub fn forward<F: Real>(&self, bind: &Binding<F>, x: &Tensor<F>) -> Tensor<F> {
        x.matmul(bind.get(self.weight))
    }

    pub fn id(&self) -> ParamId {
        self.weight
    }
}

/// Per-position layer norm over the channel axis of a `[S,C]` sequence.
#[derive(Debug, Clone)]
pub struct SeqNorm {
    gamma: ParamId,
    beta: ParamId,
}

impl SeqNorm {
    pub fn new<F: Real>(store: &mut ParamStore<F>, name: &str, dim: usize) -> Self {
        SeqNorm {
            gamma: store.add_ones(&format!("{name}.gamma"), &[dim]),
            beta: store.add_zeros(&format!("{name}.beta"), &[dim]),
        }
    }

    pub fn forward<F: Real>(&self, bind: &Binding<F>, x: &Tensor<F>) -> Tensor<F> {
        x.layer_norm(1, bind.get(self.gamma), bind.get(self.beta), LN_EPS)
    }
}

/// Two-layer ReLU feed-forward with residual-friendly dimensions.
#[derive(Debug, Clone)]
pub struct FeedForward {
    lift: Dense,
    lower: Dense,
}

impl FeedForward {
    pub fn new<F: Real>(store: &mut ParamStore<F>, rng: &mut Rng, name: &str, dim: usize, hidden: usize) -> Self {
        FeedForward {
            lift: Dense::new(store, rng, &format!("{name}.lift"), dim, hidden),
            lower: Dense::new(store, rng, &format!("{name}.lower"), hidden, dim),
        }
    }

    pub fn forward<F: Real>(&self, bind: &Binding<F>, x: &Tensor<F>) -> Tensor<F> {
        self.lower.forward(bind, &self.lift.forward(bind, x).relu())
    }
}
