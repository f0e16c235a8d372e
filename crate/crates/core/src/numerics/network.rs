//! Sequential layer stacks: recorded forward passes and reverse-mode
//! gradients of a class logit with respect to any intermediate activation.

use crate::error::{Error, Result};
use crate::numerics::kernels::{
    conv2d_backward_input, conv2d_forward, dense_backward_input, dense_forward, maxpool_backward,
    maxpool_forward, relu_backward, relu_forward, softmax,
};
use crate::numerics::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d {
    /// `[C_out, C_in, kH, kW]`
    pub weights: Tensor,
    pub bias: Tensor,
    pub stride: usize,
    pub padding: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    /// `[M, N]`
    pub weights: Tensor,
    pub bias: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Conv2d(Conv2d),
    Relu,
    MaxPool {
        kernel: usize,
        stride: usize,
    },
    Flatten,
    Dense(Dense),
    /// Only meaningful as the final layer; gradients are taken before it.
    Softmax,
}

impl Layer {
    pub fn kind(&self) -> &'static str {
        match self {
            Layer::Conv2d(_) => "conv2d",
            Layer::Relu => "relu",
            Layer::MaxPool { .. } => "maxpool",
            Layer::Flatten => "flatten",
            Layer::Dense(_) => "dense",
            Layer::Softmax => "softmax",
        }
    }
}

/// What a layer needs from its forward pass to run backward.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerCache {
    pub input: Tensor,
    pub argmax: Option<Vec<usize>>,
}

/// Runs one layer and returns its output together with the cache for backward.
pub fn forward_layer(layer: &Layer, input: Tensor) -> Result<(Tensor, LayerCache)> {
    let (output, argmax) = match layer {
        Layer::Conv2d(c) => (
            conv2d_forward(&input, &c.weights, &c.bias, c.stride, c.padding)?,
            None,
        ),
        Layer::Relu => (relu_forward(&input), None),
        Layer::MaxPool { kernel, stride } => {
            let (out, arg) = maxpool_forward(&input, *kernel, *stride)?;
            (out, Some(arg))
        }
        Layer::Flatten => {
            let n = input.len();
            (input.clone().reshape(vec![n])?, None)
        }
        Layer::Dense(d) => (dense_forward(&input, &d.weights, &d.bias)?, None),
        Layer::Softmax => (softmax(&input), None),
    };
    Ok((output, LayerCache { input, argmax }))
}

/// Runs every layer in order, keeping one cache per layer.
pub fn forward_trace(layers: &[Layer], input: Tensor) -> Result<(Tensor, Vec<LayerCache>)> {
    let mut caches = Vec::with_capacity(layers.len());
    let mut x = input;
    for layer in layers {
        let (out, cache) = forward_layer(layer, x)?;
        caches.push(cache);
        x = out;
    }
    Ok((x, caches))
}

/// Forward pass without caches. A trailing softmax is skipped so the result is
/// the logit vector.
pub fn forward_logits(layers: &[Layer], input: Tensor) -> Result<Tensor> {
    let mut x = input;
    for layer in strip_softmax(layers)? {
        x = forward_layer(layer, x)?.0;
    }
    Ok(x)
}

fn strip_softmax(layers: &[Layer]) -> Result<&[Layer]> {
    let body = match layers.last() {
        Some(Layer::Softmax) => &layers[..layers.len() - 1],
        _ => layers,
    };
    if body.iter().any(|l| matches!(l, Layer::Softmax)) {
        return Err(Error::usage("softmax may only appear as the final layer"));
    }
    Ok(body)
}

fn logit_count(tail: &[Layer], caches: &[LayerCache]) -> Result<usize> {
    // Output width of the last non-softmax layer, recomputed from its cached input.
    let body = strip_softmax(tail)?;
    match body.last() {
        None => Ok(caches.first().map(|c| c.input.len()).unwrap_or(0)),
        Some(layer) => {
            let cache = &caches[body.len() - 1];
            Ok(match layer {
                Layer::Dense(d) => d.weights.shape()[0],
                Layer::Flatten | Layer::Relu => cache.input.len(),
                Layer::Conv2d(_) | Layer::MaxPool { .. } => {
                    forward_layer(layer, cache.input.clone())?.0.len()
                }
                Layer::Softmax => unreachable!(),
            })
        }
    }
}

/// Gradient of logit `seed_class` with respect to the input of `tail[0]`.
///
/// `caches[i]` must be the forward cache of `tail[i]`. A trailing softmax is
/// skipped: the seed is placed on the pre-softmax logit.
pub fn backward_to_layer(
    tail: &[Layer],
    caches: &[LayerCache],
    seed_class: usize,
) -> Result<Tensor> {
    check_caches(tail, caches)?;
    let k = logit_count(tail, caches)?;
    if seed_class >= k {
        return Err(Error::input(format!(
            "class index {seed_class} out of range for {k} classes"
        )));
    }
    let mut seed = Tensor::zeros(vec![k]);
    seed.data_mut()[seed_class] = 1.0;
    backward_from(tail, caches, seed)
}

/// Pulls an arbitrary upstream gradient on the logits back through `tail`.
pub fn backward_from(tail: &[Layer], caches: &[LayerCache], upstream: Tensor) -> Result<Tensor> {
    check_caches(tail, caches)?;
    let body = strip_softmax(tail)?;
    if body.is_empty() {
        let shape = caches
            .first()
            .map(|c| c.input.shape().to_vec())
            .unwrap_or_else(|| upstream.shape().to_vec());
        return upstream.reshape(shape);
    }
    let mut grad = upstream;
    for (layer, cache) in body.iter().zip(caches).rev() {
        grad = match layer {
            Layer::Conv2d(c) => {
                conv2d_backward_input(&grad, &c.weights, cache.input.shape(), c.stride, c.padding)?
            }
            Layer::Relu => {
                let g = grad.reshape(cache.input.shape().to_vec())?;
                relu_backward(&g, &cache.input)?
            }
            Layer::MaxPool { .. } => {
                let argmax = cache
                    .argmax
                    .as_ref()
                    .ok_or_else(|| Error::usage("maxpool cache is missing argmax indices"))?;
                maxpool_backward(&grad, argmax, cache.input.shape())?
            }
            Layer::Flatten => grad.reshape(cache.input.shape().to_vec())?,
            Layer::Dense(d) => {
                let g = dense_backward_input(&grad, &d.weights)?;
                g.reshape(cache.input.shape().to_vec())?
            }
            Layer::Softmax => unreachable!(),
        };
    }
    Ok(grad)
}

fn check_caches(tail: &[Layer], caches: &[LayerCache]) -> Result<()> {
    if caches.len() != tail.len() {
        return Err(Error::usage(format!(
            "missing cached forward state: {} layers but {} caches",
            tail.len(),
            caches.len()
        )));
    }
    Ok(())
}
