//! Fixed-layer tensor operations with hand-written backward passes.
//!
//! Valid convolution (stride 1, no padding), 2x2 max pooling, ReLU and a
//! dense affine map. Each forward op has a matching `*_backward` that takes
//! the upstream gradient and whatever the forward pass cached.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Gradients aligned one-to-one with a parameter list.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerGrad {
    pub tensors: Vec<Tensor>,
}

impl LayerGrad {
    pub fn zeros_like(params: &[Tensor]) -> Self {
        Self {
            tensors: params.iter().map(|p| Tensor::zeros(p.shape())).collect(),
        }
    }

    pub fn accumulate(&mut self, other: &LayerGrad) -> Result<()> {
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            a.add_scaled(b, 1.0)?;
        }
        Ok(())
    }

    pub fn scale(&mut self, factor: f64) {
        self.tensors.iter_mut().for_each(|t| t.scale(factor));
    }
}

fn dims3(t: &Tensor, op: &'static str) -> Result<(usize, usize, usize)> {
    match *t.shape() {
        [c, h, w] => Ok((c, h, w)),
        _ => Err(Error::shape(op, t.shape(), &[0, 0, 0])),
    }
}

/// Valid 2-D convolution (cross-correlation) of a `[C_in, H, W]` input with
/// `[C_out, C_in, k, k]` kernels.
pub fn conv2d(input: &Tensor, kernels: &Tensor, bias: &[f64]) -> Result<Tensor> {
    let (c_in, h, w) = dims3(input, "conv2d")?;
    let (c_out, k) = match *kernels.shape() {
        [co, ci, kh, kw] if ci == c_in && kh == kw => (co, kh),
        _ => return Err(Error::shape("conv2d", input.shape(), kernels.shape())),
    };
    if k == 0 || k > h || k > w {
        return Err(Error::shape("conv2d", input.shape(), kernels.shape()));
    }
    if bias.len() != c_out {
        return Err(Error::shape("conv2d bias", kernels.shape(), &[bias.len()]));
    }
    let (oh, ow) = (h - k + 1, w - k + 1);
    let x = input.data();
    let kd = kernels.data();
    let mut out = vec![0.0; c_out * oh * ow];
    for co in 0..c_out {
        let plane = &mut out[co * oh * ow..(co + 1) * oh * ow];
        plane.iter_mut().for_each(|v| *v = bias[co]);
        for ci in 0..c_in {
            let src = &x[ci * h * w..(ci + 1) * h * w];
            for ki in 0..k {
                for kj in 0..k {
                    let wv = kd[((co * c_in + ci) * k + ki) * k + kj];
                    for oy in 0..oh {
                        let row = &src[(oy + ki) * w + kj..(oy + ki) * w + kj + ow];
                        let dst = &mut plane[oy * ow..(oy + 1) * ow];
                        for (d, s) in dst.iter_mut().zip(row) {
                            *d += wv * s;
                        }
                    }
                }
            }
        }
    }
    Tensor::new(vec![c_out, oh, ow], out)
}

/// Returns `(d input, d kernels, d bias)` for [`conv2d`].
pub fn conv2d_backward(
    input: &Tensor,
    kernels: &Tensor,
    grad_out: &Tensor,
) -> Result<(Tensor, Tensor, Tensor)> {
    let (c_in, h, w) = dims3(input, "conv2d_backward")?;
    let (c_out, k) = match *kernels.shape() {
        [co, ci, kh, _] if ci == c_in => (co, kh),
        _ => {
            return Err(Error::shape(
                "conv2d_backward",
                input.shape(),
                kernels.shape(),
            ))
        }
    };
    let (oh, ow) = (h - k + 1, w - k + 1);
    if grad_out.shape() != [c_out, oh, ow] {
        return Err(Error::shape(
            "conv2d_backward",
            grad_out.shape(),
            &[c_out, oh, ow],
        ));
    }
    let x = input.data();
    let kd = kernels.data();
    let g = grad_out.data();
    let mut gx = vec![0.0; x.len()];
    let mut gk = vec![0.0; kd.len()];
    let mut gb = vec![0.0; c_out];
    for co in 0..c_out {
        let gplane = &g[co * oh * ow..(co + 1) * oh * ow];
        gb[co] = gplane.iter().sum();
        for ci in 0..c_in {
            let src = &x[ci * h * w..(ci + 1) * h * w];
            let gsrc = &mut gx[ci * h * w..(ci + 1) * h * w];
            for ki in 0..k {
                for kj in 0..k {
                    let kidx = ((co * c_in + ci) * k + ki) * k + kj;
                    let wv = kd[kidx];
                    let mut acc = 0.0;
                    for oy in 0..oh {
                        let start = (oy + ki) * w + kj;
                        let grow = &gplane[oy * ow..(oy + 1) * ow];
                        let row = &src[start..start + ow];
                        acc += grow.iter().zip(row).map(|(a, b)| a * b).sum::<f64>();
                        let dst = &mut gsrc[start..start + ow];
                        for (d, gv) in dst.iter_mut().zip(grow) {
                            *d += wv * gv;
                        }
                    }
                    gk[kidx] = acc;
                }
            }
        }
    }
    Ok((
        Tensor::new(input.shape().to_vec(), gx)?,
        Tensor::new(kernels.shape().to_vec(), gk)?,
        Tensor::from_vec(gb),
    ))
}

/// Output of [`max_pool2x2`]: pooled values plus the flat input index each
/// output cell was taken from.
#[derive(Clone, Debug, PartialEq)]
pub struct Pooled {
    pub output: Tensor,
    pub argmax: Vec<usize>,
}

/// 2x2 max pooling with stride 2. Ties resolve to the first cell in
/// row-major window order.
pub fn max_pool2x2(input: &Tensor) -> Result<Pooled> {
    let (c, h, w) = dims3(input, "max_pool2x2")?;
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::InvalidArgument(format!(
            "max_pool2x2 needs even spatial dims, got {h}x{w}"
        )));
    }
    let (oh, ow) = (h / 2, w / 2);
    let x = input.data();
    let mut out = Vec::with_capacity(c * oh * ow);
    let mut argmax = Vec::with_capacity(c * oh * ow);
    for ch in 0..c {
        for oy in 0..oh {
            for ox in 0..ow {
                let base = ch * h * w + 2 * oy * w + 2 * ox;
                let mut best = base;
                for idx in [base + 1, base + w, base + w + 1] {
                    if x[idx] > x[best] {
                        best = idx;
                    }
                }
                out.push(x[best]);
                argmax.push(best);
            }
        }
    }
    Ok(Pooled {
        output: Tensor::new(vec![c, oh, ow], out)?,
        argmax,
    })
}

pub fn max_pool2x2_backward(input_shape: &[usize], argmax: &[usize], grad_out: &Tensor) -> Tensor {
    let mut gx = Tensor::zeros(input_shape);
    let d = gx.data_mut();
    for (&src, &g) in argmax.iter().zip(grad_out.data()) {
        d[src] += g;
    }
    gx
}

pub fn relu(input: &Tensor) -> Tensor {
    let mut out = input.clone();
    out.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
    out
}

/// Subgradient 0 at and below zero.
pub fn relu_backward(pre_activation: &Tensor, grad_out: &Tensor) -> Tensor {
    let mut g = grad_out.clone();
    for (gv, z) in g.data_mut().iter_mut().zip(pre_activation.data()) {
        if *z <= 0.0 {
            *gv = 0.0;
        }
    }
    g
}

/// Affine map `W x + b` with `W: [m, n]`.
pub fn dense(input: &[f64], weights: &Tensor, bias: &[f64]) -> Result<Vec<f64>> {
    let (m, n) = match *weights.shape() {
        [m, n] => (m, n),
        _ => return Err(Error::shape("dense", weights.shape(), &[0, 0])),
    };
    if input.len() != n {
        return Err(Error::shape("dense", &[input.len()], weights.shape()));
    }
    if bias.len() != m {
        return Err(Error::shape("dense bias", weights.shape(), &[bias.len()]));
    }
    let wd = weights.data();
    Ok((0..m)
        .map(|i| {
            let row = &wd[i * n..(i + 1) * n];
            bias[i] + row.iter().zip(input).map(|(a, b)| a * b).sum::<f64>()
        })
        .collect())
}

/// Returns `(d input, d weights, d bias)` for [`dense`].
pub fn dense_backward(
    input: &[f64],
    weights: &Tensor,
    grad_out: &[f64],
) -> Result<(Vec<f64>, Tensor, Tensor)> {
    let (m, n) = match *weights.shape() {
        [m, n] if n == input.len() && m == grad_out.len() => (m, n),
        _ => return Err(Error::shape("dense_backward", &[input.len()], weights.shape())),
    };
    let wd = weights.data();
    let mut gx = vec![0.0; n];
    let mut gw = vec![0.0; m * n];
    for i in 0..m {
        let gi = grad_out[i];
        let row = &wd[i * n..(i + 1) * n];
        for (gxj, wij) in gx.iter_mut().zip(row) {
            *gxj += gi * wij;
        }
        for (gwij, xj) in gw[i * n..(i + 1) * n].iter_mut().zip(input) {
            *gwij = gi * xj;
        }
    }
    Ok((
        gx,
        Tensor::new(vec![m, n], gw)?,
        Tensor::from_vec(grad_out.to_vec()),
    ))
}

/// Plain gradient descent, `p <- p - lr * g`.
///
/// All gradients are checked before any parameter is touched, so a rejected
/// step leaves `params` unchanged. `names` labels parameters in the error.
pub fn sgd_step(params: &mut [Tensor], grads: &LayerGrad, lr: f64, names: &[String]) -> Result<()> {
    if !(lr > 0.0 && lr.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "learning rate must be positive, got {lr}"
        )));
    }
    if params.len() != grads.tensors.len() {
        return Err(Error::shape(
            "sgd_step",
            &[params.len()],
            &[grads.tensors.len()],
        ));
    }
    for (i, (p, g)) in params.iter().zip(&grads.tensors).enumerate() {
        if p.shape() != g.shape() {
            return Err(Error::shape("sgd_step", p.shape(), g.shape()));
        }
        if !g.is_finite() {
            let param = names.get(i).cloned().unwrap_or_else(|| format!("#{i}"));
            return Err(Error::NonFiniteGradient { param });
        }
    }
    for (p, g) in params.iter_mut().zip(&grads.tensors) {
        for (pv, gv) in p.data_mut().iter_mut().zip(g.data()) {
            *pv -= lr * gv;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;

    fn random(shape: &[usize], rng: &mut SeededRng) -> Tensor {
        let n = shape.iter().product();
        Tensor::new(shape.to_vec(), (0..n).map(|_| rng.uniform_in(-1.0, 1.0)).collect()).unwrap()
    }

    // Direct sliding-window reference, indexed the slow way.
    fn conv_oracle(x: &Tensor, k: &Tensor, b: &[f64]) -> Vec<f64> {
        let (ci_n, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
        let (co_n, ks) = (k.shape()[0], k.shape()[2]);
        let mut out = vec![];
        for co in 0..co_n {
            for oy in 0..=h - ks {
                for ox in 0..=w - ks {
                    let mut s = b[co];
                    for ci in 0..ci_n {
                        for i in 0..ks {
                            for j in 0..ks {
                                s += k.data()[co * ci_n * ks * ks + ci * ks * ks + i * ks + j]
                                    * x.data()[ci * h * w + (oy + i) * w + ox + j];
                            }
                        }
                    }
                    out.push(s);
                }
            }
        }
        out
    }

    #[test]
    fn conv_of_zero_input_is_zero() {
        let x = Tensor::zeros(&[1, 3, 3]);
        let mut rng = SeededRng::new(1);
        let k = random(&[1, 1, 3, 3], &mut rng);
        let y = conv2d(&x, &k, &[0.0]).unwrap();
        assert_eq!(y.shape(), &[1, 1, 1]);
        assert_eq!(y.data(), &[0.0]);
    }

    #[test]
    fn unit_kernel_is_identity() {
        let mut rng = SeededRng::new(2);
        let x = random(&[1, 4, 5], &mut rng);
        let k = Tensor::new(vec![1, 1, 1, 1], vec![1.0]).unwrap();
        assert_eq!(conv2d(&x, &k, &[0.0]).unwrap(), x);
    }

    #[test]
    fn conv_matches_sliding_window_oracle() {
        let mut rng = SeededRng::new(3);
        let x = random(&[1, 4, 4], &mut rng);
        let k = random(&[1, 1, 3, 3], &mut rng);
        let y = conv2d(&x, &k, &[0.25]).unwrap();
        for (a, b) in y.data().iter().zip(conv_oracle(&x, &k, &[0.25])) {
            assert!((a - b).abs() < 1e-12);
        }
        let x = random(&[3, 7, 6], &mut rng);
        let k = random(&[2, 3, 3, 3], &mut rng);
        let y = conv2d(&x, &k, &[0.1, -0.2]).unwrap();
        assert_eq!(y.shape(), &[2, 5, 4]);
        for (a, b) in y.data().iter().zip(conv_oracle(&x, &k, &[0.1, -0.2])) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn conv_rejects_mismatched_channels() {
        let x = Tensor::zeros(&[2, 4, 4]);
        let k = Tensor::zeros(&[1, 3, 3, 3]);
        let err = conv2d(&x, &k, &[0.0]).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[2, 4, 4]") && msg.contains("[1, 3, 3, 3]"), "{msg}");
        assert!(conv2d(&Tensor::zeros(&[1, 2, 2]), &Tensor::zeros(&[1, 1, 3, 3]), &[0.0]).is_err());
    }

    #[test]
    fn pool_of_constant_is_constant() {
        let mut x = Tensor::zeros(&[2, 4, 4]);
        x.fill(-3.5);
        let p = max_pool2x2(&x).unwrap();
        assert!(p.output.data().iter().all(|&v| v == -3.5));
    }

    #[test]
    fn pool_picks_window_max() {
        let x = Tensor::new(vec![1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let p = max_pool2x2(&x).unwrap();
        assert_eq!(p.output.data(), &[4.0]);
        assert_eq!(p.argmax, vec![3]);

        let x = Tensor::new(vec![1, 2, 2], vec![-4.0, -2.0, -3.0, -5.0]).unwrap();
        let p = max_pool2x2(&x).unwrap();
        assert_eq!(p.output.data(), &[-2.0]);
        assert_eq!(p.argmax, vec![1]);
    }

    #[test]
    fn pool_rejects_odd_dims() {
        assert!(max_pool2x2(&Tensor::zeros(&[1, 3, 4])).is_err());
        assert!(max_pool2x2(&Tensor::zeros(&[1, 4, 5])).is_err());
    }

    #[test]
    fn dense_identity_and_bias() {
        let eye = Tensor::new(vec![3, 3], vec![1., 0., 0., 0., 1., 0., 0., 0., 1.]).unwrap();
        assert_eq!(dense(&[1.5, -2.0, 0.5], &eye, &[0.0; 3]).unwrap(), vec![1.5, -2.0, 0.5]);
        let zero = Tensor::zeros(&[2, 3]);
        assert_eq!(dense(&[1.0, 2.0, 3.0], &zero, &[0.3, -0.7]).unwrap(), vec![0.3, -0.7]);
    }

    #[test]
    fn dense_matches_explicit_multiply() {
        let w = Tensor::new(vec![2, 3], vec![0.5, -1.0, 2.0, 1.5, 0.25, -0.75]).unwrap();
        let x = [2.0, 3.0, -1.0];
        let y = dense(&x, &w, &[0.1, 0.2]).unwrap();
        // 0.5*2 - 1*3 + 2*(-1) + 0.1 = -3.9 ; 1.5*2 + 0.25*3 + 0.75 + 0.2 = 4.7
        assert!((y[0] + 3.9).abs() < 1e-12);
        assert!((y[1] - 4.7).abs() < 1e-12);
        assert!(dense(&x[..2], &w, &[0.0, 0.0]).is_err());
    }

    #[test]
    fn single_weight_gradient() {
        // loss (w x - y)^2 with x = 1, y = 0, w = 2 -> d/dw = 2 w x^2 = 4
        let w = Tensor::new(vec![1, 1], vec![2.0]).unwrap();
        let out = dense(&[1.0], &w, &[0.0]).unwrap();
        let upstream = [2.0 * (out[0] - 0.0)];
        let (_, gw, _) = dense_backward(&[1.0], &w, &upstream).unwrap();
        assert_eq!(gw.data(), &[4.0]);
    }

    #[test]
    fn conv_backward_matches_finite_differences() {
        let mut rng = SeededRng::new(9);
        let x = random(&[2, 5, 5], &mut rng);
        let k = random(&[3, 2, 3, 3], &mut rng);
        let g = random(&[3, 3, 3], &mut rng);
        // scalar objective L = <g, conv(x)>
        let objective = |x: &Tensor, k: &Tensor| -> f64 {
            conv2d(x, k, &[0.0; 3])
                .unwrap()
                .data()
                .iter()
                .zip(g.data())
                .map(|(a, b)| a * b)
                .sum()
        };
        let (gx, gk, gb) = conv2d_backward(&x, &k, &g).unwrap();
        let h = 1e-5;
        for i in 0..x.len() {
            let (mut xp, mut xm) = (x.clone(), x.clone());
            xp.data_mut()[i] += h;
            xm.data_mut()[i] -= h;
            let fd = (objective(&xp, &k) - objective(&xm, &k)) / (2.0 * h);
            assert!((fd - gx.data()[i]).abs() < 1e-8);
        }
        for i in 0..k.len() {
            let (mut kp, mut km) = (k.clone(), k.clone());
            kp.data_mut()[i] += h;
            km.data_mut()[i] -= h;
            let fd = (objective(&x, &kp) - objective(&x, &km)) / (2.0 * h);
            assert!((fd - gk.data()[i]).abs() < 1e-8);
        }
        for (co, gbv) in gb.data().iter().enumerate() {
            let expected: f64 = g.data()[co * 9..(co + 1) * 9].iter().sum();
            assert!((gbv - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn pool_backward_routes_to_argmax() {
        let x = Tensor::new(vec![1, 2, 4], vec![1., 5., 0., 0., 2., 3., 7., -1.]).unwrap();
        let p = max_pool2x2(&x).unwrap();
        let g = Tensor::new(vec![1, 1, 2], vec![10.0, 20.0]).unwrap();
        let gx = max_pool2x2_backward(x.shape(), &p.argmax, &g);
        assert_eq!(gx.data(), &[0., 10., 0., 0., 0., 0., 20., 0.]);
    }

    #[test]
    fn sgd_update_rule() {
        let names = vec!["p".to_string()];
        let mut params = vec![Tensor::from_vec(vec![1.0])];
        let grads = LayerGrad { tensors: vec![Tensor::from_vec(vec![0.5])] };
        sgd_step(&mut params, &grads, 0.1, &names).unwrap();
        assert_eq!(params[0].data(), &[0.95]);

        let zero = LayerGrad::zeros_like(&params);
        sgd_step(&mut params, &zero, 0.1, &names).unwrap();
        assert_eq!(params[0].data(), &[0.95]);

        let mut p = vec![Tensor::from_vec(vec![3.0])];
        let g = LayerGrad { tensors: vec![Tensor::from_vec(vec![0.25])] };
        sgd_step(&mut p, &g, 0.5, &names).unwrap();
        sgd_step(&mut p, &g, 0.5, &names).unwrap();
        assert!((p[0].data()[0] - (3.0 - 2.0 * 0.5 * 0.25)).abs() < 1e-15);
    }

    #[test]
    fn sgd_rejects_non_finite_gradient_untouched() {
        let names = vec!["conv0.kernel".to_string(), "fc.bias".to_string()];
        let mut params = vec![Tensor::from_vec(vec![1.0]), Tensor::from_vec(vec![2.0])];
        let grads = LayerGrad {
            tensors: vec![Tensor::from_vec(vec![0.5]), Tensor::from_vec(vec![f64::NAN])],
        };
        let err = sgd_step(&mut params, &grads, 0.1, &names).unwrap_err();
        assert!(matches!(err, Error::NonFiniteGradient { ref param } if param == "fc.bias"));
        assert_eq!(params[0].data(), &[1.0]);
        assert!(sgd_step(&mut params, &LayerGrad::zeros_like(&vec![Tensor::from_vec(vec![0.0]); 2]), 0.0, &names).is_err());
    }
}
