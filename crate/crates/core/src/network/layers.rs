//! Dense layers. Every op takes a batch whose leading axis folds time and
//! batch, so per-sample shapes exclude it.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::real::{cast, Real};
use crate::tensor::Tensor;

/// Samples per work item in parallel loops. Fixed so that reductions run in
/// the same order whatever the worker count.
const SAMPLE_CHUNK: usize = 8;

fn uniform<F: Real>(rng: &mut ChaCha8Rng, n: usize, bound: f64) -> Vec<F> {
    (0..n)
        .map(|_| cast::<F>(rng.random_range(-bound..=bound)))
        .collect()
}

/// Cross-correlation with zero padding `kernel / 2` on each side.
#[derive(Clone, Debug)]
pub struct Conv2d<F: Real> {
    pub weight: Tensor<F>,
    pub bias: Tensor<F>,
    pub stride: usize,
    pub padding: usize,
    in_shape: [usize; 3],
    out_shape: [usize; 3],
}

impl<F: Real> Conv2d<F> {
    pub fn new(
        in_shape: [usize; 3],
        out_channels: usize,
        kernel: usize,
        stride: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        let [cin, h, w] = in_shape;
        let padding = kernel / 2;
        if h + 2 * padding < kernel || w + 2 * padding < kernel {
            return Err(Error::InvalidParameter(format!(
                "kernel {kernel} does not fit a {h}x{w} input"
            )));
        }
        let ho = (h + 2 * padding - kernel) / stride + 1;
        let wo = (w + 2 * padding - kernel) / stride + 1;
        let fan_in = cin * kernel * kernel;
        let weight = Tensor::new(
            vec![out_channels, cin, kernel, kernel],
            uniform(rng, out_channels * fan_in, (6.0 / fan_in as f64).sqrt()),
        )?;
        let bias = Tensor::new(
            vec![out_channels],
            uniform(rng, out_channels, 1.0 / (fan_in as f64).sqrt()),
        )?;
        Ok(Self {
            weight,
            bias,
            stride,
            padding,
            in_shape,
            out_shape: [out_channels, ho, wo],
        })
    }

    pub fn out_shape(&self) -> [usize; 3] {
        self.out_shape
    }

    pub fn cast<G: Real>(&self) -> Conv2d<G> {
        Conv2d {
            weight: self.weight.cast(),
            bias: self.bias.cast(),
            stride: self.stride,
            padding: self.padding,
            in_shape: self.in_shape,
            out_shape: self.out_shape,
        }
    }

    fn kernel(&self) -> usize {
        self.weight.shape()[2]
    }

    fn col_rows(&self) -> usize {
        self.in_shape[0] * self.kernel() * self.kernel()
    }

    fn positions(&self) -> usize {
        self.out_shape[1] * self.out_shape[2]
    }

    /// Unfolds one sample into a `(cin k k) x (ho wo)` matrix.
    fn im2col(&self, x: &[F], col: &mut [F]) {
        let [cin, h, w] = self.in_shape;
        let [_, ho, wo] = self.out_shape;
        let (k, s, pad) = (self.kernel(), self.stride, self.padding as isize);
        let p = ho * wo;
        for ci in 0..cin {
            for ky in 0..k {
                for kx in 0..k {
                    let row = &mut col[((ci * k + ky) * k + kx) * p..][..p];
                    for oy in 0..ho {
                        let iy = (oy * s + ky) as isize - pad;
                        let out = &mut row[oy * wo..(oy + 1) * wo];
                        if iy < 0 || iy >= h as isize {
                            out.fill(F::zero());
                            continue;
                        }
                        let src = &x[(ci * h + iy as usize) * w..][..w];
                        for (ox, o) in out.iter_mut().enumerate() {
                            let ix = (ox * s + kx) as isize - pad;
                            *o = if ix < 0 || ix >= w as isize {
                                F::zero()
                            } else {
                                src[ix as usize]
                            };
                        }
                    }
                }
            }
        }
    }

    /// Adjoint of [`Conv2d::im2col`], accumulating into `dx`.
    fn col2im(&self, col: &[F], dx: &mut [F]) {
        let [cin, h, w] = self.in_shape;
        let [_, ho, wo] = self.out_shape;
        let (k, s, pad) = (self.kernel(), self.stride, self.padding as isize);
        let p = ho * wo;
        for ci in 0..cin {
            for ky in 0..k {
                for kx in 0..k {
                    let row = &col[((ci * k + ky) * k + kx) * p..][..p];
                    for oy in 0..ho {
                        let iy = (oy * s + ky) as isize - pad;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let dst = &mut dx[(ci * h + iy as usize) * w..][..w];
                        for ox in 0..wo {
                            let ix = (ox * s + kx) as isize - pad;
                            if ix >= 0 && ix < w as isize {
                                dst[ix as usize] += row[oy * wo + ox];
                            }
                        }
                    }
                }
            }
        }
    }

    pub fn forward(&self, x: &Tensor<F>) -> Tensor<F> {
        let n = x.shape()[0];
        let in_len: usize = self.in_shape.iter().product();
        let (cout, kk, p) = (self.out_shape[0], self.col_rows(), self.positions());
        let mut out = vec![F::zero(); n * cout * p];
        out.par_chunks_mut(cout * p)
            .zip(x.data().par_chunks(in_len))
            .for_each_init(
                || vec![F::zero(); kk * p],
                |col, (o, xi)| {
                    self.im2col(xi, col);
                    for (co, row) in o.chunks_mut(p).enumerate() {
                        row.fill(self.bias.data()[co]);
                    }
                    F::gemm(
                        cout,
                        kk,
                        p,
                        F::one(),
                        self.weight.data(),
                        kk as isize,
                        1,
                        col,
                        p as isize,
                        1,
                        F::one(),
                        o,
                        p as isize,
                        1,
                    );
                },
            );
        let mut shape = vec![n];
        shape.extend_from_slice(&self.out_shape);
        Tensor::new(shape, out).expect("conv output shape")
    }

    /// Returns `(dL/dx, dL/dW, dL/db)`; `dL/dx` is skipped when not needed.
    pub fn backward(
        &self,
        x: &Tensor<F>,
        grad_out: &Tensor<F>,
        need_input_grad: bool,
    ) -> (Option<Tensor<F>>, Tensor<F>, Tensor<F>) {
        let n = x.shape()[0];
        let in_len: usize = self.in_shape.iter().product();
        let (cout, kk, p) = (self.out_shape[0], self.col_rows(), self.positions());
        let out_len = cout * p;
        let chunks = n.div_ceil(SAMPLE_CHUNK);
        let partials: Vec<(Vec<F>, Vec<F>, Vec<F>)> = (0..chunks)
            .into_par_iter()
            .map(|ci| {
                let lo = ci * SAMPLE_CHUNK;
                let hi = (lo + SAMPLE_CHUNK).min(n);
                let mut dw = vec![F::zero(); cout * kk];
                let mut db = vec![F::zero(); cout];
                let mut dx = if need_input_grad {
                    vec![F::zero(); (hi - lo) * in_len]
                } else {
                    Vec::new()
                };
                let mut col = vec![F::zero(); kk * p];
                for i in lo..hi {
                    let g = &grad_out.data()[i * out_len..(i + 1) * out_len];
                    self.im2col(&x.data()[i * in_len..(i + 1) * in_len], &mut col);
                    F::gemm(
                        cout,
                        p,
                        kk,
                        F::one(),
                        g,
                        p as isize,
                        1,
                        &col,
                        1,
                        p as isize,
                        F::one(),
                        &mut dw,
                        kk as isize,
                        1,
                    );
                    for (co, row) in g.chunks(p).enumerate() {
                        db[co] += row.iter().copied().sum::<F>();
                    }
                    if need_input_grad {
                        F::gemm(
                            kk,
                            cout,
                            p,
                            F::one(),
                            self.weight.data(),
                            1,
                            kk as isize,
                            g,
                            p as isize,
                            1,
                            F::zero(),
                            &mut col,
                            p as isize,
                            1,
                        );
                        self.col2im(&col, &mut dx[(i - lo) * in_len..(i - lo + 1) * in_len]);
                    }
                }
                (dw, db, dx)
            })
            .collect();
        let mut dw = vec![F::zero(); cout * kk];
        let mut db = vec![F::zero(); cout];
        let mut dx = Vec::with_capacity(if need_input_grad { n * in_len } else { 0 });
        for (pw, pb, px) in partials {
            dw.iter_mut().zip(&pw).for_each(|(a, &b)| *a += b);
            db.iter_mut().zip(&pb).for_each(|(a, &b)| *a += b);
            dx.extend_from_slice(&px);
        }
        let dx = need_input_grad.then(|| Tensor::new(x.shape().to_vec(), dx).expect("conv dx"));
        (
            dx,
            Tensor::new(self.weight.shape().to_vec(), dw).expect("conv dw"),
            Tensor::new(vec![cout], db).expect("conv db"),
        )
    }
}

/// Affine map over the flattened per-sample features.
#[derive(Clone, Debug)]
pub struct Linear<F: Real> {
    pub weight: Tensor<F>,
    pub bias: Tensor<F>,
}

impl<F: Real> Linear<F> {
    pub fn new(in_features: usize, out_features: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        let bound = (6.0 / in_features as f64).sqrt();
        Ok(Self {
            weight: Tensor::new(
                vec![out_features, in_features],
                uniform(rng, out_features * in_features, bound),
            )?,
            bias: Tensor::new(
                vec![out_features],
                uniform(rng, out_features, 1.0 / (in_features as f64).sqrt()),
            )?,
        })
    }

    pub fn in_features(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn cast<G: Real>(&self) -> Linear<G> {
        Linear {
            weight: self.weight.cast(),
            bias: self.bias.cast(),
        }
    }

    pub fn out_features(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn forward(&self, x: &Tensor<F>) -> Tensor<F> {
        let n = x.shape()[0];
        let (fin, fout) = (self.in_features(), self.out_features());
        let mut out = vec![F::zero(); n * fout];
        out.par_chunks_mut(SAMPLE_CHUNK * fout)
            .zip(x.data().par_chunks(SAMPLE_CHUNK * fin))
            .for_each(|(o, xi)| {
                let rows = xi.len() / fin;
                for row in o.chunks_mut(fout) {
                    row.copy_from_slice(self.bias.data());
                }
                F::gemm(
                    rows,
                    fin,
                    fout,
                    F::one(),
                    xi,
                    fin as isize,
                    1,
                    self.weight.data(),
                    1,
                    fin as isize,
                    F::one(),
                    o,
                    fout as isize,
                    1,
                );
            });
        Tensor::new(vec![n, fout], out).expect("linear output shape")
    }

    pub fn backward(
        &self,
        x: &Tensor<F>,
        grad_out: &Tensor<F>,
        need_input_grad: bool,
    ) -> (Option<Tensor<F>>, Tensor<F>, Tensor<F>) {
        let n = x.shape()[0];
        let (fin, fout) = (self.in_features(), self.out_features());
        let g = grad_out.data();
        let mut dw = vec![F::zero(); fout * fin];
        F::gemm(
            fout,
            n,
            fin,
            F::one(),
            g,
            1,
            fout as isize,
            x.data(),
            fin as isize,
            1,
            F::zero(),
            &mut dw,
            fin as isize,
            1,
        );
        let mut db = vec![F::zero(); fout];
        for row in g.chunks(fout) {
            db.iter_mut().zip(row).for_each(|(a, &b)| *a += b);
        }
        let dx = need_input_grad.then(|| {
            let mut dx = vec![F::zero(); n * fin];
            dx.par_chunks_mut(SAMPLE_CHUNK * fin)
                .zip(g.par_chunks(SAMPLE_CHUNK * fout))
                .for_each(|(d, gi)| {
                    F::gemm(
                        gi.len() / fout,
                        fout,
                        fin,
                        F::one(),
                        gi,
                        fout as isize,
                        1,
                        self.weight.data(),
                        fin as isize,
                        1,
                        F::zero(),
                        d,
                        fin as isize,
                        1,
                    );
                });
            Tensor::new(x.shape().to_vec(), dx).expect("linear dx")
        });
        (
            dx,
            Tensor::new(vec![fout, fin], dw).expect("linear dw"),
            Tensor::new(vec![fout], db).expect("linear db"),
        )
    }
}

/// Per-channel normalization. Feature vectors count as channels with a
/// single spatial position.
#[derive(Clone, Debug)]
pub struct BatchNorm<F: Real> {
    pub gamma: Tensor<F>,
    pub beta: Tensor<F>,
    pub running_mean: Tensor<F>,
    pub running_var: Tensor<F>,
    pub eps: f64,
    pub momentum: f64,
}

/// What the backward pass needs from a normalization forward.
#[derive(Clone, Debug)]
pub struct BatchNormCache<F: Real> {
    pub x_hat: Tensor<F>,
    pub inv_std: Vec<F>,
    /// Batch mean and unbiased variance when batch statistics were used.
    pub batch_stats: Option<(Vec<f64>, Vec<f64>)>,
}

impl<F: Real> BatchNorm<F> {
    pub fn new(channels: usize) -> Self {
        Self {
            gamma: Tensor::full(vec![channels], F::one()),
            beta: Tensor::zeros(vec![channels]),
            running_mean: Tensor::zeros(vec![channels]),
            running_var: Tensor::full(vec![channels], F::one()),
            eps: 1e-5,
            momentum: 0.1,
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    pub fn cast<G: Real>(&self) -> BatchNorm<G> {
        BatchNorm {
            gamma: self.gamma.cast(),
            beta: self.beta.cast(),
            running_mean: self.running_mean.cast(),
            running_var: self.running_var.cast(),
            eps: self.eps,
            momentum: self.momentum,
        }
    }

    /// `(rows, channels, spatial)` view of an activation batch.
    fn dims(&self, x: &Tensor<F>) -> (usize, usize, usize) {
        let c = self.channels();
        (x.shape()[0], c, x.row_len() / c)
    }

    pub fn forward(&self, x: &Tensor<F>, use_batch_stats: bool) -> (Tensor<F>, BatchNormCache<F>) {
        let (n, c, s) = self.dims(x);
        let m = (n * s) as f64;
        let data = x.data();
        let (mean, var, batch_stats) = if use_batch_stats {
            let mut mean = vec![0.0f64; c];
            let mut var = vec![0.0f64; c];
            for ch in 0..c {
                let values = (0..n).flat_map(|i| &data[(i * c + ch) * s..][..s]);
                let mu = values.clone().map(|v| v.as_f64()).sum::<f64>() / m;
                mean[ch] = mu;
                var[ch] = values.map(|v| (v.as_f64() - mu).powi(2)).sum::<f64>() / m;
            }
            let unbiased = var
                .iter()
                .map(|v| if m > 1.0 { v * m / (m - 1.0) } else { *v })
                .collect();
            (mean.clone(), var, Some((mean, unbiased)))
        } else {
            (
                self.running_mean.data().iter().map(|v| v.as_f64()).collect(),
                self.running_var.data().iter().map(|v| v.as_f64()).collect(),
                None,
            )
        };
        let inv_std: Vec<F> = var
            .iter()
            .map(|v| cast::<F>(1.0 / (v + self.eps).sqrt()))
            .collect();
        let mean: Vec<F> = mean.into_iter().map(cast::<F>).collect();
        let mut x_hat = vec![F::zero(); data.len()];
        let mut out = vec![F::zero(); data.len()];
        for i in 0..n {
            for ch in 0..c {
                let base = (i * c + ch) * s;
                let (g, b) = (self.gamma.data()[ch], self.beta.data()[ch]);
                for j in base..base + s {
                    let xh = (data[j] - mean[ch]) * inv_std[ch];
                    x_hat[j] = xh;
                    out[j] = g * xh + b;
                }
            }
        }
        let shape = x.shape().to_vec();
        (
            Tensor::new(shape.clone(), out).expect("bn output"),
            BatchNormCache {
                x_hat: Tensor::new(shape, x_hat).expect("bn x_hat"),
                inv_std,
                batch_stats,
            },
        )
    }

    pub fn backward(
        &self,
        cache: &BatchNormCache<F>,
        grad_out: &Tensor<F>,
    ) -> (Tensor<F>, Tensor<F>, Tensor<F>) {
        let (n, c, s) = self.dims(grad_out);
        let g = grad_out.data();
        let xh = cache.x_hat.data();
        let mut dgamma = vec![F::zero(); c];
        let mut dbeta = vec![F::zero(); c];
        for i in 0..n {
            for ch in 0..c {
                let base = (i * c + ch) * s;
                for j in base..base + s {
                    dbeta[ch] += g[j];
                    dgamma[ch] += g[j] * xh[j];
                }
            }
        }
        let m = cast::<F>((n * s) as f64);
        let mut dx = vec![F::zero(); g.len()];
        for i in 0..n {
            for ch in 0..c {
                let base = (i * c + ch) * s;
                let scale = self.gamma.data()[ch] * cache.inv_std[ch];
                for j in base..base + s {
                    dx[j] = if cache.batch_stats.is_some() {
                        scale * (g[j] - (dbeta[ch] + xh[j] * dgamma[ch]) / m)
                    } else {
                        scale * g[j]
                    };
                }
            }
        }
        (
            Tensor::new(grad_out.shape().to_vec(), dx).expect("bn dx"),
            Tensor::new(vec![c], dgamma).expect("bn dgamma"),
            Tensor::new(vec![c], dbeta).expect("bn dbeta"),
        )
    }

    /// Folds one batch's statistics into the running estimates.
    pub fn update_running(&mut self, mean: &[f64], unbiased_var: &[f64]) {
        let mom = self.momentum;
        for (r, &m) in self.running_mean.data_mut().iter_mut().zip(mean) {
            *r = cast::<F>((1.0 - mom) * r.as_f64() + mom * m);
        }
        for (r, &v) in self.running_var.data_mut().iter_mut().zip(unbiased_var) {
            *r = cast::<F>((1.0 - mom) * r.as_f64() + mom * v);
        }
    }
}

/// Max pooling over spike values without padding; ties go to the first
/// element of the window in row-major order.
#[derive(Clone, Copy, Debug)]
pub struct MaxPool2d {
    pub kernel: usize,
    pub stride: usize,
    in_shape: [usize; 3],
    out_shape: [usize; 3],
}

impl MaxPool2d {
    pub fn new(in_shape: [usize; 3], kernel: usize, stride: usize) -> Result<Self> {
        let [c, h, w] = in_shape;
        if h < kernel || w < kernel {
            return Err(Error::InvalidParameter(format!(
                "pooling window {kernel} exceeds a {h}x{w} input"
            )));
        }
        Ok(Self {
            kernel,
            stride,
            in_shape,
            out_shape: [c, (h - kernel) / stride + 1, (w - kernel) / stride + 1],
        })
    }

    pub fn out_shape(&self) -> [usize; 3] {
        self.out_shape
    }

    /// Output and the winning input index of every output element.
    pub fn forward<F: Real>(&self, x: &Tensor<F>) -> (Tensor<F>, Vec<u32>) {
        let n = x.shape()[0];
        let [c, h, w] = self.in_shape;
        let [_, ho, wo] = self.out_shape;
        let in_len = c * h * w;
        let out_len = c * ho * wo;
        let mut out = vec![F::zero(); n * out_len];
        let mut arg = vec![0u32; n * out_len];
        out.par_chunks_mut(out_len)
            .zip(arg.par_chunks_mut(out_len))
            .zip(x.data().par_chunks(in_len))
            .for_each(|((o, a), xi)| {
                for ch in 0..c {
                    for oy in 0..ho {
                        for ox in 0..wo {
                            let mut best = ch * h * w + oy * self.stride * w + ox * self.stride;
                            for ky in 0..self.kernel {
                                for kx in 0..self.kernel {
                                    let idx = ch * h * w
                                        + (oy * self.stride + ky) * w
                                        + ox * self.stride
                                        + kx;
                                    if xi[idx] > xi[best] {
                                        best = idx;
                                    }
                                }
                            }
                            let oi = (ch * ho + oy) * wo + ox;
                            o[oi] = xi[best];
                            a[oi] = best as u32;
                        }
                    }
                }
            });
        let mut shape = vec![n];
        shape.extend_from_slice(&self.out_shape);
        (Tensor::new(shape, out).expect("pool output"), arg)
    }

    pub fn backward<F: Real>(&self, argmax: &[u32], grad_out: &Tensor<F>) -> Tensor<F> {
        let n = grad_out.shape()[0];
        let in_len: usize = self.in_shape.iter().product();
        let out_len: usize = self.out_shape.iter().product();
        let mut dx = vec![F::zero(); n * in_len];
        dx.par_chunks_mut(in_len)
            .zip(grad_out.data().par_chunks(out_len))
            .zip(argmax.par_chunks(out_len))
            .for_each(|((d, g), a)| {
                for (&gi, &ai) in g.iter().zip(a) {
                    d[ai as usize] += gi;
                }
            });
        let mut shape = vec![n];
        shape.extend_from_slice(&self.in_shape);
        Tensor::new(shape, dx).expect("pool dx")
    }
}

/// Average pooling along the flattened feature axis: the voting layer.
#[derive(Clone, Copy, Debug)]
pub struct AvgPool1d {
    pub kernel: usize,
    pub stride: usize,
    in_features: usize,
    out_features: usize,
}

impl AvgPool1d {
    pub fn new(in_features: usize, kernel: usize, stride: usize) -> Result<Self> {
        if in_features < kernel || (in_features - kernel) % stride != 0 {
            return Err(Error::InvalidParameter(format!(
                "{in_features} features do not split into windows of {kernel} with stride {stride}"
            )));
        }
        Ok(Self {
            kernel,
            stride,
            in_features,
            out_features: (in_features - kernel) / stride + 1,
        })
    }

    pub fn out_features(&self) -> usize {
        self.out_features
    }

    pub fn forward<F: Real>(&self, x: &Tensor<F>) -> Tensor<F> {
        let n = x.shape()[0];
        let scale = cast::<F>(1.0 / self.kernel as f64);
        let mut out = Vec::with_capacity(n * self.out_features);
        for row in x.data().chunks(self.in_features) {
            for o in 0..self.out_features {
                let window = &row[o * self.stride..o * self.stride + self.kernel];
                out.push(window.iter().copied().sum::<F>() * scale);
            }
        }
        Tensor::new(vec![n, self.out_features], out).expect("vote output")
    }

    pub fn backward<F: Real>(&self, grad_out: &Tensor<F>, in_shape: &[usize]) -> Tensor<F> {
        let n = grad_out.shape()[0];
        let scale = cast::<F>(1.0 / self.kernel as f64);
        let mut dx = vec![F::zero(); n * self.in_features];
        for (d, g) in dx
            .chunks_mut(self.in_features)
            .zip(grad_out.data().chunks(self.out_features))
        {
            for (o, &gi) in g.iter().enumerate() {
                for v in &mut d[o * self.stride..o * self.stride + self.kernel] {
                    *v += gi * scale;
                }
            }
        }
        Tensor::new(in_shape.to_vec(), dx).expect("vote dx")
    }
}

/// Bernoulli keep-mask with keep probability `1 - rate`, scaled by
/// `1 / (1 - rate)` so that the expected activation is unchanged.
pub fn spiking_dropout_mask<F: Real>(rate: f64, shape: &[usize], seed: u64) -> Result<Tensor<F>> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::InvalidParameter(format!(
            "dropout rate must lie in [0, 1), got {rate}"
        )));
    }
    let n: usize = shape.iter().product();
    let keep = 1.0 - rate;
    let scale = cast::<F>(1.0 / keep);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..n)
        .map(|_| {
            if rate == 0.0 || rng.random::<f64>() < keep {
                scale
            } else {
                F::zero()
            }
        })
        .collect();
    Tensor::new(shape.to_vec(), data)
}
