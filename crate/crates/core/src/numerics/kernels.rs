//! Forward and backward kernels for the layer types a sequential CNN needs.
//!
//! Convolution is cross-correlation (no kernel flip). Out-of-bounds input
//! positions read as zero. Max pooling breaks ties toward the first maximal
//! element in row-major window order.

use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// Output extent of a sliding window, or `None` when it is not a positive integer.
pub fn window_output(extent: usize, kernel: usize, stride: usize, padding: usize) -> Option<usize> {
    if stride == 0 || kernel == 0 {
        return None;
    }
    let padded = extent + 2 * padding;
    if padded < kernel || !(padded - kernel).is_multiple_of(stride) {
        return None;
    }
    Some((padded - kernel) / stride + 1)
}

fn conv_output_dims(
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    padding: usize,
) -> Result<(usize, usize)> {
    let oh = window_output(h, kh, stride, padding).ok_or_else(|| {
        Error::config(format!(
            "height: (H + 2*padding - kH)/stride + 1 is not a positive integer \
             for H={h}, kH={kh}, stride={stride}, padding={padding}"
        ))
    })?;
    let ow = window_output(w, kw, stride, padding).ok_or_else(|| {
        Error::config(format!(
            "width: (W + 2*padding - kW)/stride + 1 is not a positive integer \
             for W={w}, kW={kw}, stride={stride}, padding={padding}"
        ))
    })?;
    Ok((oh, ow))
}

fn check_conv_params(
    input: &Tensor,
    weights: &Tensor,
    bias: &Tensor,
) -> Result<(usize, usize, usize, usize, usize, usize)> {
    let (c_in, h, w) = input.dims3()?;
    let (c_out, wc_in, kh, kw) = match weights.shape()[..] {
        [o, i, kh, kw] => (o, i, kh, kw),
        _ => {
            return Err(Error::config(format!(
                "conv weights must be rank 4 [C_out,C_in,kH,kW], got {:?}",
                weights.shape()
            )))
        }
    };
    if wc_in != c_in {
        return Err(Error::config(format!(
            "C_in: input has {c_in} channels but weights expect {wc_in}"
        )));
    }
    if bias.shape() != [c_out] {
        return Err(Error::config(format!(
            "C_out: bias shape {:?} does not match {c_out} output channels",
            bias.shape()
        )));
    }
    Ok((c_in, h, w, c_out, kh, kw))
}

pub fn conv2d_forward(
    input: &Tensor,
    weights: &Tensor,
    bias: &Tensor,
    stride: usize,
    padding: usize,
) -> Result<Tensor> {
    let (c_in, h, w, c_out, kh, kw) = check_conv_params(input, weights, bias)?;
    let (oh, ow) = conv_output_dims(h, w, kh, kw, stride, padding)?;
    let x = input.data();
    let k = weights.data();
    let mut out = vec![0.0; c_out * oh * ow];
    for o in 0..c_out {
        for i in 0..oh {
            for j in 0..ow {
                let mut acc = bias.data()[o];
                for c in 0..c_in {
                    for u in 0..kh {
                        let y = (i * stride + u) as isize - padding as isize;
                        if y < 0 || y >= h as isize {
                            continue;
                        }
                        let row = (c * h + y as usize) * w;
                        let krow = ((o * c_in + c) * kh + u) * kw;
                        for v in 0..kw {
                            let xx = (j * stride + v) as isize - padding as isize;
                            if xx < 0 || xx >= w as isize {
                                continue;
                            }
                            acc += x[row + xx as usize] * k[krow + v];
                        }
                    }
                }
                out[(o * oh + i) * ow + j] = acc;
            }
        }
    }
    Tensor::new(vec![c_out, oh, ow], out)
}

/// Gradient of a convolution's output with respect to its input.
///
/// `grad_out` has the forward output's shape; the result has `input_shape`.
pub fn conv2d_backward_input(
    grad_out: &Tensor,
    weights: &Tensor,
    input_shape: &[usize],
    stride: usize,
    padding: usize,
) -> Result<Tensor> {
    let (c_in, h, w) = match input_shape[..] {
        [c, h, w] => (c, h, w),
        _ => return Err(Error::config("conv input must be rank 3")),
    };
    let (c_out, _, kh, kw) = match weights.shape()[..] {
        [o, i, kh, kw] if i == c_in => (o, i, kh, kw),
        _ => {
            return Err(Error::config(format!(
                "conv weights {:?} do not match input shape {input_shape:?}",
                weights.shape()
            )))
        }
    };
    let (oh, ow) = conv_output_dims(h, w, kh, kw, stride, padding)?;
    if grad_out.shape() != [c_out, oh, ow] {
        return Err(Error::config(format!(
            "upstream gradient shape {:?} does not match conv output [{c_out}, {oh}, {ow}]",
            grad_out.shape()
        )));
    }
    let g = grad_out.data();
    let k = weights.data();
    let mut grad_in = vec![0.0; c_in * h * w];
    for o in 0..c_out {
        for i in 0..oh {
            for j in 0..ow {
                let gv = g[(o * oh + i) * ow + j];
                if gv == 0.0 {
                    continue;
                }
                for c in 0..c_in {
                    for u in 0..kh {
                        let y = (i * stride + u) as isize - padding as isize;
                        if y < 0 || y >= h as isize {
                            continue;
                        }
                        let row = (c * h + y as usize) * w;
                        let krow = ((o * c_in + c) * kh + u) * kw;
                        for v in 0..kw {
                            let xx = (j * stride + v) as isize - padding as isize;
                            if xx < 0 || xx >= w as isize {
                                continue;
                            }
                            grad_in[row + xx as usize] += gv * k[krow + v];
                        }
                    }
                }
            }
        }
    }
    Tensor::new(input_shape.to_vec(), grad_in)
}

pub fn relu_forward(input: &Tensor) -> Tensor {
    let mut out = input.clone();
    for v in out.data_mut() {
        *v = v.max(0.0);
    }
    out
}

/// Passes gradient where the forward input was strictly positive.
pub fn relu_backward(grad_out: &Tensor, input: &Tensor) -> Result<Tensor> {
    if grad_out.shape() != input.shape() {
        return Err(Error::config(format!(
            "relu gradient shape {:?} does not match input {:?}",
            grad_out.shape(),
            input.shape()
        )));
    }
    let mut grad = grad_out.clone();
    for (g, &x) in grad.data_mut().iter_mut().zip(input.data()) {
        if x <= 0.0 {
            *g = 0.0;
        }
    }
    Ok(grad)
}

/// Max pooling. Returns the pooled tensor and, per output cell, the flat
/// input index that supplied the maximum.
pub fn maxpool_forward(
    input: &Tensor,
    kernel: usize,
    stride: usize,
) -> Result<(Tensor, Vec<usize>)> {
    let (c, h, w) = input.dims3()?;
    let (oh, ow) = match (
        window_output(h, kernel, stride, 0),
        window_output(w, kernel, stride, 0),
    ) {
        (Some(oh), Some(ow)) => (oh, ow),
        _ => {
            return Err(Error::config(format!(
                "maxpool kernel {kernel} stride {stride} does not tile a {h}x{w} input"
            )))
        }
    };
    let x = input.data();
    let mut out = Vec::with_capacity(c * oh * ow);
    let mut argmax = Vec::with_capacity(c * oh * ow);
    for ch in 0..c {
        for i in 0..oh {
            for j in 0..ow {
                let mut best_idx = (ch * h + i * stride) * w + j * stride;
                let mut best = x[best_idx];
                for u in 0..kernel {
                    for v in 0..kernel {
                        let idx = (ch * h + i * stride + u) * w + j * stride + v;
                        if x[idx] > best {
                            best = x[idx];
                            best_idx = idx;
                        }
                    }
                }
                out.push(best);
                argmax.push(best_idx);
            }
        }
    }
    Ok((Tensor::new(vec![c, oh, ow], out)?, argmax))
}

/// Routes each upstream gradient entry to the input position that won its window.
pub fn maxpool_backward(
    grad_out: &Tensor,
    argmax: &[usize],
    input_shape: &[usize],
) -> Result<Tensor> {
    if grad_out.len() != argmax.len() {
        return Err(Error::config(format!(
            "maxpool gradient has {} entries but {} argmax indices were cached",
            grad_out.len(),
            argmax.len()
        )));
    }
    let mut grad_in = Tensor::zeros(input_shape.to_vec());
    let gi = grad_in.data_mut();
    for (&g, &idx) in grad_out.data().iter().zip(argmax) {
        gi[idx] += g;
    }
    Ok(grad_in)
}

pub fn dense_forward(input: &Tensor, weights: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let (m, n) = weights.dims2()?;
    if input.len() != n {
        return Err(Error::config(format!(
            "N: dense layer expects {n} inputs, got {}",
            input.len()
        )));
    }
    if bias.shape() != [m] {
        return Err(Error::config(format!(
            "M: bias shape {:?} does not match {m} outputs",
            bias.shape()
        )));
    }
    let x = input.data();
    let out = weights
        .data()
        .chunks_exact(n)
        .zip(bias.data())
        .map(|(row, &b)| b + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>())
        .collect();
    Ok(Tensor::from_vec(out))
}

/// `grad_in[n] = sum_m W[m,n] * grad_out[m]`.
pub fn dense_backward_input(grad_out: &Tensor, weights: &Tensor) -> Result<Tensor> {
    let (m, n) = weights.dims2()?;
    if grad_out.len() != m {
        return Err(Error::config(format!(
            "dense upstream gradient has {} entries, layer has {m} outputs",
            grad_out.len()
        )));
    }
    let mut grad_in = vec![0.0; n];
    for (row, &g) in weights.data().chunks_exact(n).zip(grad_out.data()) {
        if g == 0.0 {
            continue;
        }
        for (acc, w) in grad_in.iter_mut().zip(row) {
            *acc += w * g;
        }
    }
    Ok(Tensor::from_vec(grad_in))
}

/// Max-shifted softmax over all elements.
pub fn softmax(logits: &Tensor) -> Tensor {
    let max = logits.max();
    let exps: Vec<f64> = logits.data().iter().map(|&z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    let mut out = logits.clone();
    for (o, e) in out.data_mut().iter_mut().zip(exps) {
        *o = e / total;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_tensor(rng: &mut ChaCha8Rng, shape: Vec<usize>) -> Tensor {
        let n = shape.iter().product();
        Tensor::new(shape, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    /// Six nested loops straight from the definition, zero padding by bounds check.
    fn reference_conv(x: &Tensor, k: &Tensor, b: &Tensor, stride: usize, pad: usize) -> Vec<f64> {
        let (ci, h, w) = x.dims3().unwrap();
        let s = k.shape();
        let (co, kh, kw) = (s[0], s[2], s[3]);
        let oh = (h + 2 * pad - kh) / stride + 1;
        let ow = (w + 2 * pad - kw) / stride + 1;
        let at = |c: usize, y: i64, xx: i64| -> f64 {
            if y < 0 || xx < 0 || y >= h as i64 || xx >= w as i64 {
                0.0
            } else {
                x.data()[(c * h + y as usize) * w + xx as usize]
            }
        };
        let mut out = Vec::new();
        for o in 0..co {
            for i in 0..oh {
                for j in 0..ow {
                    let mut acc = b.data()[o];
                    for c in 0..ci {
                        for u in 0..kh {
                            for v in 0..kw {
                                let y = (i * stride + u) as i64 - pad as i64;
                                let xx = (j * stride + v) as i64 - pad as i64;
                                acc += at(c, y, xx) * k.data()[((o * ci + c) * kh + u) * kw + v];
                            }
                        }
                    }
                    out.push(acc);
                }
            }
        }
        out
    }

    #[test]
    fn conv_degenerate_single_weight() {
        let x = Tensor::new(vec![1, 1, 1], vec![3.0]).unwrap();
        let k = Tensor::new(vec![1, 1, 1, 1], vec![-2.0]).unwrap();
        let b = Tensor::from_vec(vec![0.5]);
        let out = conv2d_forward(&x, &k, &b, 1, 0).unwrap();
        assert_eq!(out.shape(), [1, 1, 1]);
        assert_eq!(out.data(), [-5.5]);
    }

    #[test]
    fn conv_sums_ones() {
        let x = Tensor::full(vec![1, 3, 3], 1.0);
        let k = Tensor::full(vec![1, 1, 3, 3], 1.0);
        let out = conv2d_forward(&x, &k, &Tensor::from_vec(vec![0.0]), 1, 0).unwrap();
        assert_eq!(out.shape(), [1, 1, 1]);
        assert_eq!(out.data(), [9.0]);
    }

    #[test]
    fn conv_matches_nested_loop_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x = random_tensor(&mut rng, vec![2, 5, 5]);
        let k = random_tensor(&mut rng, vec![3, 2, 3, 3]);
        let b = random_tensor(&mut rng, vec![3]);
        let out = conv2d_forward(&x, &k, &b, 2, 1).unwrap();
        assert_eq!(out.shape(), [3, 3, 3]);
        assert_eq!(out.data(), reference_conv(&x, &k, &b, 2, 1).as_slice());
    }

    #[test]
    fn conv_shape_errors() {
        let x = Tensor::zeros(vec![2, 4, 4]);
        let k = Tensor::zeros(vec![1, 3, 3, 3]);
        let err = conv2d_forward(&x, &k, &Tensor::zeros(vec![1]), 1, 0).unwrap_err();
        assert!(err.to_string().contains("C_in"), "{err}");

        let k = Tensor::zeros(vec![1, 2, 3, 3]);
        let err = conv2d_forward(&x, &k, &Tensor::zeros(vec![1]), 2, 0).unwrap_err();
        assert!(err.to_string().contains("not a positive integer"), "{err}");
    }

    #[test]
    fn conv_backward_is_adjoint_of_forward() {
        // <conv(x), g> = <x, conv_backward(g)> when bias is zero.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = random_tensor(&mut rng, vec![2, 6, 6]);
        let k = random_tensor(&mut rng, vec![3, 2, 3, 3]);
        let zero = Tensor::zeros(vec![3]);
        let y = conv2d_forward(&x, &k, &zero, 1, 1).unwrap();
        let g = random_tensor(&mut rng, y.shape().to_vec());
        let gx = conv2d_backward_input(&g, &k, x.shape(), 1, 1).unwrap();
        let lhs: f64 = y.data().iter().zip(g.data()).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.data().iter().zip(gx.data()).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12 * lhs.abs().max(1.0));
    }

    #[test]
    fn relu_cases() {
        let t = Tensor::from_vec(vec![-1.0, 0.0, 2.0]);
        assert_eq!(relu_forward(&t).data(), [0.0, 0.0, 2.0]);
        let neg = Tensor::full(vec![2, 2], -3.0);
        assert!(relu_forward(&neg).data().iter().all(|&v| v == 0.0));

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let r = random_tensor(&mut rng, vec![4, 5]);
        let out = relu_forward(&r);
        for (o, i) in out.data().iter().zip(r.data()) {
            assert_eq!(*o, if *i > 0.0 { *i } else { 0.0 });
        }
    }

    #[test]
    fn maxpool_small_cases() {
        let c = Tensor::full(vec![2, 4, 4], 0.7);
        let (out, _) = maxpool_forward(&c, 2, 2).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.7));

        let x = Tensor::new(vec![1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let (out, arg) = maxpool_forward(&x, 2, 2).unwrap();
        assert_eq!(out.data(), [4.0]);
        assert_eq!(arg, [3]); // (row 1, col 1)
    }

    #[test]
    fn maxpool_ties_route_to_first_element() {
        let x = Tensor::new(vec![1, 2, 2], vec![5.0, 5.0, 5.0, 5.0]).unwrap();
        let (_, arg) = maxpool_forward(&x, 2, 2).unwrap();
        assert_eq!(arg, [0]);
    }

    #[test]
    fn maxpool_matches_nested_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = random_tensor(&mut rng, vec![3, 6, 6]);
        let (out, _) = maxpool_forward(&x, 2, 2).unwrap();
        assert_eq!(out.shape(), [3, 3, 3]);
        let mut expected = Vec::new();
        for c in 0..3 {
            for i in 0..3 {
                for j in 0..3 {
                    let mut m = f64::NEG_INFINITY;
                    for u in 0..2 {
                        for v in 0..2 {
                            m = m.max(x.data()[(c * 6 + 2 * i + u) * 6 + 2 * j + v]);
                        }
                    }
                    expected.push(m);
                }
            }
        }
        assert_eq!(out.data(), expected.as_slice());
    }

    #[test]
    fn maxpool_rejects_untiled_input() {
        let x = Tensor::zeros(vec![1, 5, 5]);
        assert!(maxpool_forward(&x, 2, 2).is_err());
    }

    #[test]
    fn maxpool_backward_conserves_mass() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = random_tensor(&mut rng, vec![2, 4, 6]);
        let (out, arg) = maxpool_forward(&x, 2, 2).unwrap();
        let g = random_tensor(&mut rng, out.shape().to_vec());
        let gi = maxpool_backward(&g, &arg, x.shape()).unwrap();
        let s_in: f64 = gi.data().iter().sum();
        let s_out: f64 = g.data().iter().sum();
        assert!((s_in - s_out).abs() < 1e-12);
        for (idx, v) in gi.data().iter().enumerate() {
            if !arg.contains(&idx) {
                assert_eq!(*v, 0.0);
            }
        }
    }

    #[test]
    fn dense_cases() {
        let x = Tensor::from_vec(vec![1.0, -2.0, 3.0]);
        let mut eye = Tensor::zeros(vec![3, 3]);
        for i in 0..3 {
            eye.data_mut()[i * 3 + i] = 1.0;
        }
        let zero3 = Tensor::zeros(vec![3]);
        assert_eq!(dense_forward(&x, &eye, &zero3).unwrap().data(), x.data());

        let b = Tensor::from_vec(vec![0.5, -0.5]);
        let zw = Tensor::zeros(vec![2, 3]);
        assert_eq!(dense_forward(&x, &zw, &b).unwrap().data(), b.data());

        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let x = random_tensor(&mut rng, vec![7]);
        let w = random_tensor(&mut rng, vec![4, 7]);
        let b = random_tensor(&mut rng, vec![4]);
        let out = dense_forward(&x, &w, &b).unwrap();
        for m in 0..4 {
            let mut acc = 0.0;
            for n in 0..7 {
                acc += w.data()[m * 7 + n] * x.data()[n];
            }
            assert_eq!(out.data()[m], b.data()[m] + acc);
        }

        assert!(dense_forward(&Tensor::zeros(vec![6]), &w, &b).is_err());
    }

    #[test]
    fn softmax_cases() {
        let p = softmax(&Tensor::from_vec(vec![0.0; 4]));
        assert_eq!(p.data(), [0.25; 4]);
        let p = softmax(&Tensor::from_vec(vec![1000.0, 0.0]));
        assert!(p.is_finite());
        assert_eq!(p.data()[0], 1.0);
        assert!(p.data()[1] < 1e-300);
    }

    // Reference values computed with mpmath at 50 significant digits
    // (tests/oracles/softmax_reference.py) and rounded to f64.
    #[test]
    fn softmax_matches_extended_precision_reference() {
        use std::f64::consts::{E, LN_2, PI, SQRT_2};
        let logits = [E, -SQRT_2, 0.5772156649015329, PI, -LN_2];
        let expected = include!("../../tests/data/softmax_reference.in");
        let p = softmax(&Tensor::from_vec(logits.to_vec()));
        let total: f64 = p.data().iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
        for (a, e) in p.data().iter().zip(expected.iter()) {
            assert!((a - e).abs() < 1e-12, "{a} vs {e}");
        }
    }
}
