//! Layers with hand-written exact backward passes. Every layer operates on
//! flat row-major batches and keeps its forward cache in an explicit
//! struct, so gradient flow is visible at the call site.

use super::init::{fan_in_uniform, orthogonal, InitRng};
use super::tensor::{matmul, matmul_acc, matmul_nt, matmul_nt_acc, matmul_tn_acc, Scalar, Tensor};

/// A named trainable tensor with its gradient accumulator and Adam moments.
#[derive(Clone, Debug)]
pub struct Param<F: Scalar> {
    pub name: String,
    pub value: Tensor<F>,
    pub grad: Tensor<F>,
    pub m: Tensor<F>,
    pub v: Tensor<F>,
}

impl<F: Scalar> Param<F> {
    pub fn new(name: impl Into<String>, value: Tensor<F>) -> Param<F> {
        let shape = value.shape.clone();
        Param {
            name: name.into(),
            value,
            grad: Tensor::zeros(&shape),
            m: Tensor::zeros(&shape),
            v: Tensor::zeros(&shape),
        }
    }

    pub fn zero_grad(&mut self) {
        self.grad.zero();
    }

    pub fn reset_moments(&mut self) {
        self.m.zero();
        self.v.zero();
    }
}

#[inline]
pub fn relu_inplace<F: Scalar>(x: &mut [F]) {
    for v in x.iter_mut() {
        if *v < F::ZERO {
            *v = F::ZERO;
        }
    }
}

/// Backward of ReLU given the *activated* output.
#[inline]
pub fn relu_backward<F: Scalar>(y: &[F], gy: &mut [F]) {
    for (g, o) in gy.iter_mut().zip(y) {
        if *o <= F::ZERO {
            *g = F::ZERO;
        }
    }
}

#[inline]
fn sigmoid<F: Scalar>(x: F) -> F {
    F::ONE / (F::ONE + (-x).exp())
}

/// Fully connected layer; weight layout is [in, out].
#[derive(Clone, Debug)]
pub struct Dense<F: Scalar> {
    pub w: Param<F>,
    pub b: Param<F>,
    pub dim_in: usize,
    pub dim_out: usize,
}

#[derive(Clone, Debug)]
pub struct DenseCache<F: Scalar> {
    x: Vec<F>,
    batch: usize,
}

impl<F: Scalar> Dense<F> {
    pub fn new(name: &str, dim_in: usize, dim_out: usize, rng: &mut InitRng) -> Dense<F> {
        Dense {
            w: Param::new(
                format!("{name}.w"),
                fan_in_uniform(&[dim_in, dim_out], dim_in, rng),
            ),
            b: Param::new(format!("{name}.b"), Tensor::zeros(&[dim_out])),
            dim_in,
            dim_out,
        }
    }

    pub fn forward(&self, x: &[F], batch: usize) -> (Vec<F>, DenseCache<F>) {
        assert_eq!(x.len(), batch * self.dim_in);
        let mut y = vec![F::ZERO; batch * self.dim_out];
        matmul(batch, self.dim_in, self.dim_out, x, &self.w.value.data, &mut y);
        for r in 0..batch {
            for c in 0..self.dim_out {
                y[r * self.dim_out + c] += self.b.value.data[c];
            }
        }
        (
            y,
            DenseCache {
                x: x.to_vec(),
                batch,
            },
        )
    }

    /// Inference-only forward without caching.
    pub fn forward_nograd(&self, x: &[F], batch: usize) -> Vec<F> {
        let mut y = vec![F::ZERO; batch * self.dim_out];
        matmul(batch, self.dim_in, self.dim_out, x, &self.w.value.data, &mut y);
        for r in 0..batch {
            for c in 0..self.dim_out {
                y[r * self.dim_out + c] += self.b.value.data[c];
            }
        }
        y
    }

    /// Accumulates parameter gradients and returns the input gradient.
    pub fn backward(&mut self, cache: &DenseCache<F>, gy: &[F]) -> Vec<F> {
        let batch = cache.batch;
        assert_eq!(gy.len(), batch * self.dim_out);
        matmul_tn_acc(
            batch,
            self.dim_in,
            self.dim_out,
            &cache.x,
            gy,
            &mut self.w.grad.data,
        );
        for r in 0..batch {
            for c in 0..self.dim_out {
                self.b.grad.data[c] += gy[r * self.dim_out + c];
            }
        }
        let mut gx = vec![F::ZERO; batch * self.dim_in];
        matmul_nt(
            batch,
            self.dim_out,
            self.dim_in,
            gy,
            &self.w.value.data,
            &mut gx,
        );
        gx
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<F>> {
        vec![&mut self.w, &mut self.b]
    }
}

/// 2D convolution over HWC images, implemented with im2col + gemm.
/// Weight layout is [k*k*c_in, c_out].
#[derive(Clone, Debug)]
pub struct Conv2d<F: Scalar> {
    pub w: Param<F>,
    pub b: Param<F>,
    pub c_in: usize,
    pub c_out: usize,
    pub k: usize,
    pub stride: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub out_h: usize,
    pub out_w: usize,
}

#[derive(Clone, Debug)]
pub struct ConvCache<F: Scalar> {
    cols: Vec<F>,
    batch: usize,
}

impl<F: Scalar> Conv2d<F> {
    pub fn new(
        name: &str,
        in_h: usize,
        in_w: usize,
        c_in: usize,
        c_out: usize,
        k: usize,
        stride: usize,
        rng: &mut InitRng,
    ) -> Conv2d<F> {
        let out_h = (in_h - k) / stride + 1;
        let out_w = (in_w - k) / stride + 1;
        let fan_in = k * k * c_in;
        Conv2d {
            w: Param::new(
                format!("{name}.w"),
                fan_in_uniform(&[fan_in, c_out], fan_in, rng),
            ),
            b: Param::new(format!("{name}.b"), Tensor::zeros(&[c_out])),
            c_in,
            c_out,
            k,
            stride,
            in_h,
            in_w,
            out_h,
            out_w,
        }
    }

    pub fn patch_len(&self) -> usize {
        self.k * self.k * self.c_in
    }

    pub fn out_len(&self) -> usize {
        self.out_h * self.out_w * self.c_out
    }

    fn im2col(&self, x: &[F], batch: usize) -> Vec<F> {
        let plen = self.patch_len();
        let rows_per_img = self.out_h * self.out_w;
        let mut cols = vec![F::ZERO; batch * rows_per_img * plen];
        let img_stride = self.in_h * self.in_w * self.c_in;
        for img in 0..batch {
            let src = &x[img * img_stride..(img + 1) * img_stride];
            for oy in 0..self.out_h {
                for ox in 0..self.out_w {
                    let row = (img * rows_per_img + oy * self.out_w + ox) * plen;
                    let mut dst = row;
                    for ky in 0..self.k {
                        let sy = oy * self.stride + ky;
                        let base = (sy * self.in_w + ox * self.stride) * self.c_in;
                        let span = self.k * self.c_in;
                        cols[dst..dst + span].copy_from_slice(&src[base..base + span]);
                        dst += span;
                    }
                }
            }
        }
        cols
    }

    /// Forward over a batch of images, returning [batch, outH, outW, c_out].
    pub fn forward(&self, x: &[F], batch: usize) -> (Vec<F>, ConvCache<F>) {
        assert_eq!(x.len(), batch * self.in_h * self.in_w * self.c_in);
        let cols = self.im2col(x, batch);
        let rows = batch * self.out_h * self.out_w;
        let plen = self.patch_len();
        let mut y = vec![F::ZERO; rows * self.c_out];
        matmul(rows, plen, self.c_out, &cols, &self.w.value.data, &mut y);
        for r in 0..rows {
            for c in 0..self.c_out {
                y[r * self.c_out + c] += self.b.value.data[c];
            }
        }
        (y, ConvCache { cols, batch })
    }

    pub fn forward_nograd(&self, x: &[F], batch: usize) -> Vec<F> {
        self.forward(x, batch).0
    }

    /// Backward: accumulates weight/bias gradients, returns gradient w.r.t.
    /// the input images.
    pub fn backward(&mut self, cache: &ConvCache<F>, gy: &[F]) -> Vec<F> {
        let batch = cache.batch;
        let rows = batch * self.out_h * self.out_w;
        let plen = self.patch_len();
        assert_eq!(gy.len(), rows * self.c_out);
        matmul_tn_acc(rows, plen, self.c_out, &cache.cols, gy, &mut self.w.grad.data);
        for r in 0..rows {
            for c in 0..self.c_out {
                self.b.grad.data[c] += gy[r * self.c_out + c];
            }
        }
        // gcols = gy * w^T, then scatter back to image layout
        let mut gcols = vec![F::ZERO; rows * plen];
        matmul_nt(rows, self.c_out, plen, gy, &self.w.value.data, &mut gcols);
        let img_stride = self.in_h * self.in_w * self.c_in;
        let rows_per_img = self.out_h * self.out_w;
        let mut gx = vec![F::ZERO; batch * img_stride];
        for img in 0..batch {
            let dst = &mut gx[img * img_stride..(img + 1) * img_stride];
            for oy in 0..self.out_h {
                for ox in 0..self.out_w {
                    let row = (img * rows_per_img + oy * self.out_w + ox) * plen;
                    let mut src = row;
                    for ky in 0..self.k {
                        let sy = oy * self.stride + ky;
                        let base = (sy * self.in_w + ox * self.stride) * self.c_in;
                        for off in 0..self.k * self.c_in {
                            dst[base + off] += gcols[src + off];
                        }
                        src += self.k * self.c_in;
                    }
                }
            }
        }
        gx
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<F>> {
        vec![&mut self.w, &mut self.b]
    }
}

/// Gated Recurrent Unit. Input-to-hidden weights are [in, H] (fan-in
/// uniform), hidden-to-hidden are [H, H] (orthogonal).
///
/// h' = (1 - z) . h + z . c, with
/// z = sigmoid(x Wz + h Uz + bz), r = sigmoid(x Wr + h Ur + br),
/// c = tanh(x Wc + (r . h) Uc + bc).
#[derive(Clone, Debug)]
pub struct Gru<F: Scalar> {
    pub wz: Param<F>,
    pub wr: Param<F>,
    pub wc: Param<F>,
    pub uz: Param<F>,
    pub ur: Param<F>,
    pub uc: Param<F>,
    pub bz: Param<F>,
    pub br: Param<F>,
    pub bc: Param<F>,
    pub dim_in: usize,
    pub dim_h: usize,
}

#[derive(Clone, Debug)]
pub struct GruCache<F: Scalar> {
    x: Vec<F>,
    h_prev: Vec<F>,
    z: Vec<F>,
    r: Vec<F>,
    c: Vec<F>,
    batch: usize,
}

impl<F: Scalar> Gru<F> {
    pub fn new(name: &str, dim_in: usize, dim_h: usize, rng: &mut InitRng) -> Gru<F> {
        let mut gate_w = |gate: &str| {
            Param::new(
                format!("{name}.w{gate}"),
                fan_in_uniform(&[dim_in, dim_h], dim_in, rng),
            )
        };
        let wz = gate_w("z");
        let wr = gate_w("r");
        let wc = gate_w("c");
        let mut gate_u = |gate: &str| Param::new(format!("{name}.u{gate}"), orthogonal(dim_h, rng));
        let uz = gate_u("z");
        let ur = gate_u("r");
        let uc = gate_u("c");
        let gate_b =
            |gate: &str| Param::new(format!("{name}.b{gate}"), Tensor::<F>::zeros(&[dim_h]));
        Gru {
            wz,
            wr,
            wc,
            uz,
            ur,
            uc,
            bz: gate_b("z"),
            br: gate_b("r"),
            bc: gate_b("c"),
            dim_in,
            dim_h,
        }
    }

    /// One recurrent step over a batch. Returns the next hidden state and
    /// the cache needed for backward.
    pub fn step(&self, x: &[F], h: &[F], batch: usize) -> (Vec<F>, GruCache<F>) {
        let hd = self.dim_h;
        assert_eq!(x.len(), batch * self.dim_in);
        assert_eq!(h.len(), batch * hd);
        let mut z = vec![F::ZERO; batch * hd];
        let mut r = vec![F::ZERO; batch * hd];
        let mut c = vec![F::ZERO; batch * hd];
        matmul(batch, self.dim_in, hd, x, &self.wz.value.data, &mut z);
        matmul_acc(batch, hd, hd, h, &self.uz.value.data, &mut z);
        matmul(batch, self.dim_in, hd, x, &self.wr.value.data, &mut r);
        matmul_acc(batch, hd, hd, h, &self.ur.value.data, &mut r);
        for b in 0..batch {
            for i in 0..hd {
                let idx = b * hd + i;
                z[idx] = sigmoid(z[idx] + self.bz.value.data[i]);
                r[idx] = sigmoid(r[idx] + self.br.value.data[i]);
            }
        }
        let rh: Vec<F> = r.iter().zip(h).map(|(ri, hi)| *ri * *hi).collect();
        matmul(batch, self.dim_in, hd, x, &self.wc.value.data, &mut c);
        matmul_acc(batch, hd, hd, &rh, &self.uc.value.data, &mut c);
        let mut h_next = vec![F::ZERO; batch * hd];
        for b in 0..batch {
            for i in 0..hd {
                let idx = b * hd + i;
                c[idx] = (c[idx] + self.bc.value.data[i]).tanh();
                h_next[idx] = (F::ONE - z[idx]) * h[idx] + z[idx] * c[idx];
            }
        }
        (
            h_next,
            GruCache {
                x: x.to_vec(),
                h_prev: h.to_vec(),
                z,
                r,
                c,
                batch,
            },
        )
    }

    pub fn step_nograd(&self, x: &[F], h: &[F], batch: usize) -> Vec<F> {
        self.step(x, h, batch).0
    }

    /// Backward through one step. `dh_next` is the gradient w.r.t. the
    /// output hidden state; returns (dx, dh_prev).
    pub fn step_backward(&mut self, cache: &GruCache<F>, dh_next: &[F]) -> (Vec<F>, Vec<F>) {
        let hd = self.dim_h;
        let batch = cache.batch;
        let n = batch * hd;
        assert_eq!(dh_next.len(), n);
        let mut dz_pre = vec![F::ZERO; n];
        let mut dc_pre = vec![F::ZERO; n];
        let mut dh = vec![F::ZERO; n];
        for i in 0..n {
            let z = cache.z[i];
            let c = cache.c[i];
            let h = cache.h_prev[i];
            let g = dh_next[i];
            dh[i] = g * (F::ONE - z);
            dz_pre[i] = g * (c - h) * z * (F::ONE - z);
            dc_pre[i] = g * z * (F::ONE - c * c);
        }
        // candidate path
        let rh: Vec<F> = cache
            .r
            .iter()
            .zip(&cache.h_prev)
            .map(|(r, h)| *r * *h)
            .collect();
        matmul_tn_acc(batch, self.dim_in, hd, &cache.x, &dc_pre, &mut self.wc.grad.data);
        matmul_tn_acc(batch, hd, hd, &rh, &dc_pre, &mut self.uc.grad.data);
        let mut drh = vec![F::ZERO; n];
        matmul_nt(batch, hd, hd, &dc_pre, &self.uc.value.data, &mut drh);
        let mut dr_pre = vec![F::ZERO; n];
        for i in 0..n {
            let r = cache.r[i];
            dh[i] += drh[i] * r;
            dr_pre[i] = drh[i] * cache.h_prev[i] * r * (F::ONE - r);
        }
        // gate paths
        matmul_tn_acc(batch, self.dim_in, hd, &cache.x, &dz_pre, &mut self.wz.grad.data);
        matmul_tn_acc(batch, hd, hd, &cache.h_prev, &dz_pre, &mut self.uz.grad.data);
        matmul_tn_acc(batch, self.dim_in, hd, &cache.x, &dr_pre, &mut self.wr.grad.data);
        matmul_tn_acc(batch, hd, hd, &cache.h_prev, &dr_pre, &mut self.ur.grad.data);
        for b in 0..batch {
            for i in 0..hd {
                let idx = b * hd + i;
                self.bz.grad.data[i] += dz_pre[idx];
                self.br.grad.data[i] += dr_pre[idx];
                self.bc.grad.data[i] += dc_pre[idx];
            }
        }
        let mut dx = vec![F::ZERO; batch * self.dim_in];
        matmul_nt(batch, hd, self.dim_in, &dz_pre, &self.wz.value.data, &mut dx);
        matmul_nt_acc(batch, hd, self.dim_in, &dr_pre, &self.wr.value.data, &mut dx);
        matmul_nt_acc(batch, hd, self.dim_in, &dc_pre, &self.wc.value.data, &mut dx);
        matmul_nt_acc(batch, hd, hd, &dz_pre, &self.uz.value.data, &mut dh);
        matmul_nt_acc(batch, hd, hd, &dr_pre, &self.ur.value.data, &mut dh);
        (dx, dh)
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<F>> {
        vec![
            &mut self.wz,
            &mut self.wr,
            &mut self.wc,
            &mut self.uz,
            &mut self.ur,
            &mut self.uc,
            &mut self.bz,
            &mut self.br,
            &mut self.bc,
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    /// Central finite-difference check over every parameter of a scalar loss.
    fn check_param_grads<L>(
        params: impl Fn(&mut L) -> Vec<&mut Param<f64>>,
        net: &mut L,
        loss: impl Fn(&mut L) -> f64,
        backprop: impl Fn(&mut L),
        tol: f64,
    ) {
        // analytic grads
        for p in params(net) {
            p.zero_grad();
        }
        backprop(net);
        let analytic: Vec<Vec<f64>> = params(net).iter().map(|p| p.grad.data.clone()).collect();
        let eps = 1e-6;
        for (pi, _) in analytic.iter().enumerate() {
            let len = params(net)[pi].value.len();
            let stride = (len / 7).max(1); // probe a subset of coordinates
            for i in (0..len).step_by(stride) {
                let orig = params(net)[pi].value.data[i];
                params(net)[pi].value.data[i] = orig + eps;
                let lp = loss(net);
                params(net)[pi].value.data[i] = orig - eps;
                let lm = loss(net);
                params(net)[pi].value.data[i] = orig;
                let fd = (lp - lm) / (2.0 * eps);
                let an = analytic[pi][i];
                let denom = an.abs().max(fd.abs()).max(1e-6);
                assert!(
                    (an - fd).abs() / denom < tol,
                    "param {pi} idx {i}: analytic {an} vs fd {fd}"
                );
            }
        }
    }

    #[test]
    fn dense_gradcheck() {
        let mut rng = InitRng::seed_from_u64(3);
        let mut layer: Dense<f64> = Dense::new("d", 5, 4, &mut rng);
        let x: Vec<f64> = (0..10).map(|i| (i as f64 * 0.37).sin()).collect();
        // loss = sum of squared relu outputs
        let loss = |l: &mut Dense<f64>| -> f64 {
            let (mut y, _) = l.forward(&x, 2);
            relu_inplace(&mut y);
            y.iter().map(|v| v * v).sum()
        };
        let xc = x.clone();
        let backprop = move |l: &mut Dense<f64>| {
            let (mut y, cache) = l.forward(&xc, 2);
            relu_inplace(&mut y);
            let mut gy: Vec<f64> = y.iter().map(|v| 2.0 * v).collect();
            relu_backward(&y, &mut gy);
            l.backward(&cache, &gy);
        };
        check_param_grads(|l| l.params_mut(), &mut layer, loss, backprop, 1e-5);
    }

    #[test]
    fn dense_input_gradcheck() {
        let mut rng = InitRng::seed_from_u64(4);
        let mut layer: Dense<f64> = Dense::new("d", 6, 3, &mut rng);
        let x: Vec<f64> = (0..6).map(|i| (i as f64 * 0.71).cos()).collect();
        let (y, cache) = layer.forward(&x, 1);
        let gy: Vec<f64> = y.iter().map(|v| 2.0 * v).collect();
        let gx = layer.backward(&cache, &gy);
        let eps = 1e-6;
        for i in 0..x.len() {
            let mut xp = x.clone();
            xp[i] += eps;
            let lp: f64 = layer.forward(&xp, 1).0.iter().map(|v| v * v).sum();
            xp[i] = x[i] - eps;
            let lm: f64 = layer.forward(&xp, 1).0.iter().map(|v| v * v).sum();
            let fd = (lp - lm) / (2.0 * eps);
            assert!((gx[i] - fd).abs() / fd.abs().max(1e-6) < 1e-5);
        }
    }

    #[test]
    fn conv_shapes_match_stride_arithmetic() {
        let mut rng = InitRng::seed_from_u64(5);
        let c1: Conv2d<f32> = Conv2d::new("c1", 64, 64, 3, 32, 8, 4, &mut rng);
        assert_eq!((c1.out_h, c1.out_w), (15, 15));
        let c2: Conv2d<f32> = Conv2d::new("c2", 15, 15, 32, 64, 4, 2, &mut rng);
        assert_eq!((c2.out_h, c2.out_w), (6, 6));
        let c3: Conv2d<f32> = Conv2d::new("c3", 6, 6, 64, 64, 3, 1, &mut rng);
        assert_eq!((c3.out_h, c3.out_w), (4, 4));
    }

    #[test]
    fn conv_gradcheck() {
        let mut rng = InitRng::seed_from_u64(6);
        let mut conv: Conv2d<f64> = Conv2d::new("c", 8, 8, 2, 3, 3, 2, &mut rng);
        let x: Vec<f64> = (0..2 * 8 * 8 * 2).map(|i| (i as f64 * 0.13).sin()).collect();
        let xc = x.clone();
        let loss = move |l: &mut Conv2d<f64>| -> f64 {
            let (mut y, _) = l.forward(&xc, 2);
            relu_inplace(&mut y);
            y.iter().map(|v| v * v).sum()
        };
        let xc2 = x.clone();
        let backprop = move |l: &mut Conv2d<f64>| {
            let (mut y, cache) = l.forward(&xc2, 2);
            relu_inplace(&mut y);
            let mut gy: Vec<f64> = y.iter().map(|v| 2.0 * v).collect();
            relu_backward(&y, &mut gy);
            l.backward(&cache, &gy);
        };
        check_param_grads(|l| l.params_mut(), &mut conv, loss, backprop, 1e-5);
    }

    #[test]
    fn conv_input_gradcheck() {
        let mut rng = InitRng::seed_from_u64(7);
        let mut conv: Conv2d<f64> = Conv2d::new("c", 6, 6, 1, 2, 3, 1, &mut rng);
        let x: Vec<f64> = (0..36).map(|i| (i as f64 * 0.29).cos()).collect();
        let (y, cache) = conv.forward(&x, 1);
        let gy: Vec<f64> = y.iter().map(|v| 2.0 * v).collect();
        let gx = conv.backward(&cache, &gy);
        let eps = 1e-6;
        for i in (0..36).step_by(5) {
            let mut xp = x.clone();
            xp[i] += eps;
            let lp: f64 = conv.forward(&xp, 1).0.iter().map(|v| v * v).sum();
            xp[i] = x[i] - eps;
            let lm: f64 = conv.forward(&xp, 1).0.iter().map(|v| v * v).sum();
            let fd = (lp - lm) / (2.0 * eps);
            assert!(
                (gx[i] - fd).abs() / fd.abs().max(1e-6) < 1e-5,
                "idx {i}: {} vs {fd}",
                gx[i]
            );
        }
    }

    #[test]
    fn gru_zero_params_halves_hidden() {
        let mut rng = InitRng::seed_from_u64(8);
        let mut gru: Gru<f64> = Gru::new("g", 3, 4, &mut rng);
        for p in gru.params_mut() {
            p.value.zero();
        }
        let x = vec![0.3, -0.2, 0.9];
        let h = vec![0.5, -0.4, 0.1, 0.8];
        let (h2, _) = gru.step(&x, &h, 1);
        for (a, b) in h2.iter().zip(&h) {
            assert!((a - 0.5 * b).abs() < 1e-12);
        }
    }

    #[test]
    fn gru_hidden_bounded_from_zero() {
        let mut rng = InitRng::seed_from_u64(9);
        let gru: Gru<f64> = Gru::new("g", 5, 6, &mut rng);
        let x: Vec<f64> = (0..5).map(|i| (i as f64) - 2.0).collect();
        let h = vec![0.0; 6];
        let (h2, _) = gru.step(&x, &h, 1);
        assert!(h2.iter().all(|v| v.abs() < 1.0));
    }

    #[test]
    fn gru_bptt_gradcheck() {
        // unroll T=8 and check d(sum of squared hidden)/d(initial hidden)
        // and all parameter grads against central differences
        let mut rng = InitRng::seed_from_u64(10);
        let mut gru: Gru<f64> = Gru::new("g", 3, 4, &mut rng);
        let t_len = 8;
        let xs: Vec<Vec<f64>> = (0..t_len)
            .map(|t| (0..3).map(|i| ((t * 3 + i) as f64 * 0.41).sin()).collect())
            .collect();
        let h0: Vec<f64> = vec![0.1, -0.2, 0.3, 0.05];

        let run = |gru: &Gru<f64>, h0: &[f64]| -> (f64, Vec<GruCache<f64>>, Vec<Vec<f64>>) {
            let mut h = h0.to_vec();
            let mut caches = Vec::new();
            let mut hs = Vec::new();
            let mut loss = 0.0;
            for x in &xs {
                let (h2, cache) = gru.step(x, &h, 1);
                loss += h2.iter().map(|v| v * v).sum::<f64>();
                caches.push(cache);
                hs.push(h2.clone());
                h = h2;
            }
            (loss, caches, hs)
        };

        for p in gru.params_mut() {
            p.zero_grad();
        }
        let (_, caches, hs) = run(&gru, &h0);
        let mut dh = vec![0.0; 4];
        for t in (0..t_len).rev() {
            for i in 0..4 {
                dh[i] += 2.0 * hs[t][i];
            }
            let (_, dh_prev) = gru.step_backward(&caches[t], &dh);
            dh = dh_prev;
        }
        // initial-hidden gradient check
        let eps = 1e-6;
        for i in 0..4 {
            let mut hp = h0.clone();
            hp[i] += eps;
            let (lp, _, _) = run(&gru, &hp);
            hp[i] = h0[i] - eps;
            let (lm, _, _) = run(&gru, &hp);
            let fd = (lp - lm) / (2.0 * eps);
            assert!(
                (dh[i] - fd).abs() / fd.abs().max(1e-6) < 1e-4,
                "h0[{i}]: {} vs {fd}",
                dh[i]
            );
        }
        // parameter gradient check
        let analytic: Vec<Vec<f64>> = gru.params_mut().iter().map(|p| p.grad.data.clone()).collect();
        for pi in 0..analytic.len() {
            let len = gru.params_mut()[pi].value.len();
            for i in (0..len).step_by((len / 5).max(1)) {
                let orig = gru.params_mut()[pi].value.data[i];
                gru.params_mut()[pi].value.data[i] = orig + eps;
                let (lp, _, _) = run(&gru, &h0);
                gru.params_mut()[pi].value.data[i] = orig - eps;
                let (lm, _, _) = run(&gru, &h0);
                gru.params_mut()[pi].value.data[i] = orig;
                let fd = (lp - lm) / (2.0 * eps);
                let an = analytic[pi][i];
                assert!(
                    (an - fd).abs() / an.abs().max(fd.abs()).max(1e-6) < 1e-4,
                    "param {pi} idx {i}: {an} vs {fd}"
                );
            }
        }
    }
}
