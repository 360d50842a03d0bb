use rayon::prelude::*;

use super::{chunk_groups, split_lengths, Param, SAMPLE_CHUNK};
use crate::error::{Error, Result};
use crate::tensor::{gemm, MatRef, Scalar, Shape3, Tensor3};

/// `floor((len + 2*padding - kernel) / stride) + 1`, or `None` when the
/// padded input is shorter than the kernel.
pub fn conv_output_len(len: usize, kernel: usize, stride: usize, padding: usize) -> Option<usize> {
    let padded = len + 2 * padding;
    if stride == 0 || kernel == 0 || padded < kernel {
        None
    } else {
        Some((padded - kernel) / stride + 1)
    }
}

/// 1D convolution with symmetric zero padding.
///
/// Weights are laid out `[out_channels][in_channels][kernel]`. The
/// implementation lowers each chunk of samples to a column matrix and
/// runs one matrix product per chunk.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv1d<T> {
    pub weight: Param<T>,
    pub bias: Param<T>,
    in_channels: usize,
    out_channels: usize,
    kernel: usize,
    stride: usize,
    padding: usize,
}

/// What `Conv1d::backward` needs from the forward pass.
#[derive(Debug, Clone)]
pub struct ConvCache<T> {
    input: Tensor3<T>,
    out_len: usize,
}

impl<T: Scalar> Conv1d<T> {
    /// Zero-initialised layer.
    pub fn new(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    ) -> Result<Self> {
        if in_channels == 0 || out_channels == 0 || kernel == 0 || stride == 0 {
            return Err(Error::InvalidArgument(format!(
                "conv1d needs positive channels, kernel and stride \
                 (in {in_channels}, out {out_channels}, kernel {kernel}, stride {stride})"
            )));
        }
        Ok(Self {
            weight: Param::zeros(&[out_channels, in_channels, kernel]),
            bias: Param::zeros(&[out_channels]),
            in_channels,
            out_channels,
            kernel,
            stride,
            padding,
        })
    }

    /// Odd kernel with padding `(kernel - 1) / 2`, so stride 1 keeps the length.
    pub fn same(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
    ) -> Result<Self> {
        if kernel.is_multiple_of(2) {
            return Err(Error::InvalidArgument(format!(
                "same-length convolution needs an odd kernel, got {kernel}"
            )));
        }
        Self::new(in_channels, out_channels, kernel, stride, (kernel - 1) / 2)
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }
    pub fn out_channels(&self) -> usize {
        self.out_channels
    }
    pub fn kernel(&self) -> usize {
        self.kernel
    }
    pub fn stride(&self) -> usize {
        self.stride
    }
    pub fn padding(&self) -> usize {
        self.padding
    }

    pub fn output_len(&self, len: usize) -> Option<usize> {
        conv_output_len(len, self.kernel, self.stride, self.padding)
    }

    fn check_input(&self, input: &Tensor3<T>) -> Result<usize> {
        if input.channels() != self.in_channels {
            return Err(Error::shape(
                "conv1d",
                format!(
                    "[*, {}, *] for weights [{}, {}, {}]",
                    self.in_channels, self.out_channels, self.in_channels, self.kernel
                ),
                input.shape(),
            ));
        }
        self.output_len(input.length()).ok_or_else(|| {
            Error::shape(
                "conv1d",
                format!("length >= {} after padding {}", self.kernel, self.padding),
                input.shape(),
            )
        })
    }

    pub fn forward(&self, input: &Tensor3<T>) -> Result<(Tensor3<T>, ConvCache<T>)> {
        let out = self.infer(input)?;
        let out_len = out.length();
        Ok((
            out,
            ConvCache {
                input: input.clone(),
                out_len,
            },
        ))
    }

    /// Forward pass without keeping anything for backward.
    pub fn infer(&self, input: &Tensor3<T>) -> Result<Tensor3<T>> {
        let lout = self.check_input(input)?;
        let (cin, len) = (self.in_channels, input.length());
        let cout = self.out_channels;
        let rows = cin * self.kernel;
        let mut out = Tensor3::zeros(input.batch(), cout, lout)?;
        let in_stride = cin * len;
        let out_stride = cout * lout;

        out.data_mut()
            .par_chunks_mut(SAMPLE_CHUNK * out_stride)
            .enumerate()
            .for_each(|(ci, out_chunk)| {
                let nb = out_chunk.len() / out_stride;
                let b0 = ci * SAMPLE_CHUNK;
                let x = &input.data()[b0 * in_stride..(b0 + nb) * in_stride];
                let ncols = nb * lout;
                let mut cols = vec![T::ZERO; rows * ncols];
                self.im2col(x, nb, len, lout, &mut cols);
                let mut y = vec![T::ZERO; cout * ncols];
                gemm(
                    MatRef::new(&self.weight.value, cout, rows),
                    MatRef::new(&cols, rows, ncols),
                    T::ZERO,
                    &mut y,
                );
                for b in 0..nb {
                    for co in 0..cout {
                        let bias = self.bias.value[co];
                        let src = &y[co * ncols + b * lout..][..lout];
                        let dst = &mut out_chunk[(b * cout + co) * lout..][..lout];
                        for (d, &s) in dst.iter_mut().zip(src) {
                            *d = s + bias;
                        }
                    }
                }
            });
        Ok(out)
    }

    /// Accumulates weight and bias gradients and returns the input gradient.
    pub fn backward(&mut self, grad_out: &Tensor3<T>, cache: &ConvCache<T>) -> Result<Tensor3<T>> {
        let input = &cache.input;
        let lout = cache.out_len;
        let expected = Shape3(input.batch(), self.out_channels, lout);
        if grad_out.shape() != expected {
            return Err(Error::shape("conv1d backward", expected, grad_out.shape()));
        }
        if input.channels() != self.in_channels || self.output_len(input.length()) != Some(lout) {
            return Err(Error::shape(
                "conv1d backward cache",
                format!("[*, {}, *]", self.in_channels),
                input.shape(),
            ));
        }
        let (cin, len, cout) = (self.in_channels, input.length(), self.out_channels);
        let batch = input.batch();
        let rows = cin * self.kernel;
        let in_stride = cin * len;
        let n_chunks = batch.div_ceil(SAMPLE_CHUNK);
        let groups = chunk_groups(n_chunks);
        let sample_range =
            |c0: usize, c1: usize| (c0 * SAMPLE_CHUNK, (c1 * SAMPLE_CHUNK).min(batch));
        let lens: Vec<usize> = groups
            .iter()
            .map(|&(c0, c1)| {
                let (s0, s1) = sample_range(c0, c1);
                (s1 - s0) * in_stride
            })
            .collect();

        let mut grad_input = Tensor3::zeros(batch, cin, len)?;
        let weight = &self.weight.value;
        let partials: Vec<(Vec<T>, Vec<T>)> = groups
            .par_iter()
            .zip(split_lengths(grad_input.data_mut(), &lens).into_par_iter())
            .map(|(&(c0, c1), dx_group)| {
                let mut dw = vec![T::ZERO; cout * rows];
                let mut db = vec![T::ZERO; cout];
                let (g0, _) = sample_range(c0, c1);
                for chunk in c0..c1 {
                    let (s0, s1) = sample_range(chunk, chunk + 1);
                    let nb = s1 - s0;
                    let ncols = nb * lout;
                    let mut dy = vec![T::ZERO; cout * ncols];
                    for b in 0..nb {
                        let g = grad_out.sample(s0 + b);
                        for co in 0..cout {
                            let src = &g[co * lout..(co + 1) * lout];
                            dy[co * ncols + b * lout..][..lout].copy_from_slice(src);
                            db[co] += src.iter().copied().sum::<T>();
                        }
                    }
                    let x = &input.data()[s0 * in_stride..s1 * in_stride];
                    let mut cols = vec![T::ZERO; rows * ncols];
                    self.im2col(x, nb, len, lout, &mut cols);
                    gemm(
                        MatRef::new(&dy, cout, ncols),
                        MatRef::new(&cols, rows, ncols).t(),
                        T::ONE,
                        &mut dw,
                    );
                    // reuse the column buffer for d(cols)
                    gemm(
                        MatRef::new(weight, cout, rows).t(),
                        MatRef::new(&dy, cout, ncols),
                        T::ZERO,
                        &mut cols,
                    );
                    let dx = &mut dx_group[(s0 - g0) * in_stride..(s1 - g0) * in_stride];
                    self.col2im(&cols, nb, len, lout, dx);
                }
                (dw, db)
            })
            .collect();

        for (dw, db) in partials {
            for (g, d) in self.weight.grad.iter_mut().zip(dw) {
                *g += d;
            }
            for (g, d) in self.bias.grad.iter_mut().zip(db) {
                *g += d;
            }
        }
        Ok(grad_input)
    }

    /// Valid output positions `[lo, hi)` for kernel tap `j`.
    fn tap_range(&self, j: usize, len: usize, lout: usize) -> (usize, usize) {
        let (s, pad) = (self.stride, self.padding);
        let lo = if j < pad { (pad - j).div_ceil(s) } else { 0 };
        let hi = if len + pad > j {
            ((len - 1 + pad - j) / s + 1).min(lout)
        } else {
            0
        };
        (lo.min(hi), hi)
    }

    fn im2col(&self, x: &[T], nb: usize, len: usize, lout: usize, cols: &mut [T]) {
        let (k, s, pad) = (self.kernel, self.stride, self.padding);
        let ncols = nb * lout;
        for ci in 0..self.in_channels {
            for j in 0..k {
                let (lo, hi) = self.tap_range(j, len, lout);
                let row = &mut cols[(ci * k + j) * ncols..][..ncols];
                for b in 0..nb {
                    let src = &x[(b * self.in_channels + ci) * len..][..len];
                    let dst = &mut row[b * lout..(b + 1) * lout];
                    dst[..lo].fill(T::ZERO);
                    dst[hi..].fill(T::ZERO);
                    if lo < hi {
                        let start = lo * s + j - pad;
                        if s == 1 {
                            dst[lo..hi].copy_from_slice(&src[start..start + (hi - lo)]);
                        } else {
                            for (o, d) in dst[lo..hi].iter_mut().enumerate() {
                                *d = src[start + o * s];
                            }
                        }
                    }
                }
            }
        }
    }

    fn col2im(&self, cols: &[T], nb: usize, len: usize, lout: usize, dx: &mut [T]) {
        let (k, s, pad) = (self.kernel, self.stride, self.padding);
        let ncols = nb * lout;
        for ci in 0..self.in_channels {
            for j in 0..k {
                let (lo, hi) = self.tap_range(j, len, lout);
                if lo >= hi {
                    continue;
                }
                let row = &cols[(ci * k + j) * ncols..][..ncols];
                for b in 0..nb {
                    let src = &row[b * lout + lo..b * lout + hi];
                    let dst = &mut dx[(b * self.in_channels + ci) * len..][..len];
                    let start = lo * s + j - pad;
                    for (o, &v) in src.iter().enumerate() {
                        dst[start + o * s] += v;
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Direct nested-loop convolution, independent of the column lowering.
    fn naive_conv(x: &Tensor3<f64>, conv: &Conv1d<f64>) -> Vec<f64> {
        let (k, s, p) = (conv.kernel(), conv.stride(), conv.padding() as isize);
        let lout = conv.output_len(x.length()).unwrap();
        let mut out = Vec::new();
        for b in 0..x.batch() {
            for co in 0..conv.out_channels() {
                for o in 0..lout {
                    let mut acc = conv.bias.value[co];
                    for ci in 0..conv.in_channels() {
                        for j in 0..k {
                            let pos = (o * s + j) as isize - p;
                            if pos >= 0 && (pos as usize) < x.length() {
                                let w = conv.weight.value[(co * conv.in_channels() + ci) * k + j];
                                acc += w * x.get(b, ci, pos as usize);
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
    fn difference_kernel_on_ramp() {
        let x = Tensor3::from_vec(vec![1.0, 2.0, 3.0, 4.0, 5.0], 1, 1, 5).unwrap();
        let mut conv = Conv1d::<f64>::new(1, 1, 3, 1, 0).unwrap();
        conv.weight.value = vec![1.0, 0.0, -1.0];
        let y = conv.infer(&x).unwrap();
        assert_eq!(y.data(), &[-2.0, -2.0, -2.0]);
        assert_eq!(naive_conv(&x, &conv), vec![-2.0, -2.0, -2.0]);
    }

    #[test]
    fn centered_impulse_is_identity() {
        let x = Tensor3::from_fn(3, 1, 40, |b, _, l| (b * 40 + l) as f32 * 0.37 - 4.0).unwrap();
        let mut conv = Conv1d::<f32>::same(1, 1, 17, 1).unwrap();
        conv.weight.value[8] = 1.0;
        let y = conv.infer(&x).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn zero_input_yields_bias() {
        let x = Tensor3::<f32>::zeros(2, 3, 10).unwrap();
        let mut conv = Conv1d::<f32>::same(3, 2, 5, 2).unwrap();
        conv.weight
            .value
            .iter_mut()
            .enumerate()
            .for_each(|(i, w)| *w = i as f32);
        conv.bias.value = vec![0.5, -1.5];
        let y = conv.infer(&x).unwrap();
        for b in 0..2 {
            for l in 0..y.length() {
                assert_eq!(y.get(b, 0, l), 0.5);
                assert_eq!(y.get(b, 1, l), -1.5);
            }
        }
    }

    #[test]
    fn matches_naive_convolution_across_strides_and_chunks() {
        for &(batch, cin, cout, len, k, s, p) in &[
            (1, 1, 1, 9, 3, 1, 1),
            (11, 2, 3, 13, 5, 2, 2),
            (17, 3, 2, 25, 17, 5, 8),
            (2, 2, 2, 7, 3, 3, 0),
            (9, 1, 4, 10, 1, 2, 0),
        ] {
            let x = Tensor3::from_fn(batch, cin, len, |b, c, l| {
                ((b * 31 + c * 7 + l * 13) % 17) as f64 / 7.0 - 1.0
            })
            .unwrap();
            let mut conv = Conv1d::<f64>::new(cin, cout, k, s, p).unwrap();
            for (i, w) in conv.weight.value.iter_mut().enumerate() {
                *w = ((i * 5) % 11) as f64 / 10.0 - 0.5;
            }
            conv.bias
                .value
                .iter_mut()
                .enumerate()
                .for_each(|(i, b)| *b = i as f64 * 0.1);
            let y = conv.infer(&x).unwrap();
            let want = naive_conv(&x, &conv);
            for (a, b) in y.data().iter().zip(&want) {
                assert!((a - b).abs() < 1e-12, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn output_length_formula() {
        assert_eq!(conv_output_len(1000, 17, 1, 8), Some(1000));
        assert_eq!(conv_output_len(1000, 17, 2, 8), Some(500));
        assert_eq!(conv_output_len(125, 17, 5, 8), Some(25));
        assert_eq!(conv_output_len(25, 17, 5, 8), Some(5));
        assert_eq!(conv_output_len(1000, 1, 2, 0), Some(500));
        assert_eq!(conv_output_len(3, 5, 1, 0), None);
    }

    #[test]
    fn rejects_channel_mismatch_naming_both_shapes() {
        let conv = Conv1d::<f32>::same(2, 4, 3, 1).unwrap();
        let x = Tensor3::<f32>::zeros(1, 3, 8).unwrap();
        let msg = conv.infer(&x).unwrap_err().to_string();
        assert!(
            msg.contains("[1, 3, 8]") && msg.contains("[4, 2, 3]"),
            "{msg}"
        );
    }

    #[test]
    fn backward_rejects_wrong_gradient_shape() {
        let mut conv = Conv1d::<f64>::same(1, 2, 3, 1).unwrap();
        let x = Tensor3::<f64>::zeros(2, 1, 6).unwrap();
        let (_, cache) = conv.forward(&x).unwrap();
        let bad = Tensor3::<f64>::zeros(2, 2, 5).unwrap();
        assert!(matches!(
            conv.backward(&bad, &cache),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let mut conv = Conv1d::<f64>::same(2, 3, 3, 1).unwrap();
        conv.weight.value.iter_mut().for_each(|w| *w = 0.3);
        let x = Tensor3::from_fn(2, 2, 8, |b, c, l| (b + c + l) as f64).unwrap();
        let (y, cache) = conv.forward(&x).unwrap();
        let g = Tensor3::zeros(y.batch(), y.channels(), y.length()).unwrap();
        let gx = conv.backward(&g, &cache).unwrap();
        assert!(gx.data().iter().all(|&v| v == 0.0));
        assert!(conv.weight.grad.iter().all(|&v| v == 0.0));
        assert!(conv.bias.grad.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identity_kernel_passes_gradient_through() {
        let mut conv = Conv1d::<f64>::same(1, 1, 5, 1).unwrap();
        conv.weight.value[2] = 1.0;
        let x = Tensor3::from_fn(2, 1, 9, |_, _, l| l as f64).unwrap();
        let (_, cache) = conv.forward(&x).unwrap();
        let g = Tensor3::from_fn(2, 1, 9, |b, _, l| (b * 9 + l) as f64 - 3.0).unwrap();
        let gx = conv.backward(&g, &cache).unwrap();
        assert_eq!(gx, g);
    }
}
