use super::{Mode, Param};
use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor3};

/// Per-channel batch normalization over the batch and length axes.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm1d<T> {
    pub scale: Param<T>,
    pub shift: Param<T>,
    pub running_mean: Vec<T>,
    pub running_var: Vec<T>,
    pub momentum: T,
    pub eps: T,
}

#[derive(Debug, Clone)]
pub struct NormCache<T> {
    x_hat: Tensor3<T>,
    inv_std: Vec<T>,
}

impl<T: Scalar> BatchNorm1d<T> {
    /// Scale 1, shift 0, running statistics (0, 1), momentum 0.1, eps 1e-5.
    pub fn new(channels: usize) -> Self {
        Self {
            scale: Param::filled(&[channels], T::ONE),
            shift: Param::zeros(&[channels]),
            running_mean: vec![T::ZERO; channels],
            running_var: vec![T::ONE; channels],
            momentum: T::from_f64(0.1),
            eps: T::from_f64(1e-5),
        }
    }

    pub fn channels(&self) -> usize {
        self.scale.len()
    }

    fn check(&self, input: &Tensor3<T>) -> Result<()> {
        if input.channels() != self.channels() {
            return Err(Error::shape(
                "batchnorm1d",
                format!("[*, {}, *]", self.channels()),
                input.shape(),
            ));
        }
        Ok(())
    }

    pub fn forward(
        &mut self,
        input: &Tensor3<T>,
        mode: Mode,
    ) -> Result<(Tensor3<T>, Option<NormCache<T>>)> {
        match mode {
            Mode::Train => {
                let (y, cache) = self.forward_train(input)?;
                Ok((y, Some(cache)))
            }
            Mode::Eval => Ok((self.infer(input)?, None)),
        }
    }

    /// Normalizes with batch statistics and folds them into the running
    /// estimates (unbiased variance, as the running estimate).
    pub fn forward_train(&mut self, input: &Tensor3<T>) -> Result<(Tensor3<T>, NormCache<T>)> {
        self.check(input)?;
        let (batch, channels, len) = (input.batch(), input.channels(), input.length());
        let n = batch * len;
        if n < 2 {
            return Err(Error::DegenerateBatch(n));
        }
        let nf = T::from_f64(n as f64);
        let mut x_hat = Tensor3::zeros(batch, channels, len)?;
        let mut out = Tensor3::zeros(batch, channels, len)?;
        let mut inv_std = Vec::with_capacity(channels);
        for c in 0..channels {
            let rows = || (0..batch).map(move |b| &input.sample(b)[c * len..(c + 1) * len]);
            let mean = rows().flat_map(|r| r.iter().copied()).sum::<T>() / nf;
            let var = rows()
                .flat_map(|r| r.iter().map(move |&v| (v - mean) * (v - mean)))
                .sum::<T>()
                / nf;
            let istd = T::ONE / (var + self.eps).sqrt();
            inv_std.push(istd);
            let (g, s) = (self.scale.value[c], self.shift.value[c]);
            for b in 0..batch {
                let off = (b * channels + c) * len;
                let src = &input.data()[off..off + len];
                let xh = &mut x_hat.data_mut()[off..off + len];
                for (d, &v) in xh.iter_mut().zip(src) {
                    *d = (v - mean) * istd;
                }
                let dst = &mut out.data_mut()[off..off + len];
                for (d, &h) in dst.iter_mut().zip(xh.iter()) {
                    *d = g * h + s;
                }
            }
            let m = self.momentum;
            let unbiased = var * nf / T::from_f64((n - 1) as f64);
            self.running_mean[c] = (T::ONE - m) * self.running_mean[c] + m * mean;
            self.running_var[c] = (T::ONE - m) * self.running_var[c] + m * unbiased;
        }
        Ok((out, NormCache { x_hat, inv_std }))
    }

    /// Normalizes with the running statistics.
    pub fn infer(&self, input: &Tensor3<T>) -> Result<Tensor3<T>> {
        self.check(input)?;
        let (channels, len) = (input.channels(), input.length());
        let coef: Vec<(T, T)> = (0..channels)
            .map(|c| {
                let a = self.scale.value[c] / (self.running_var[c] + self.eps).sqrt();
                (a, self.shift.value[c] - a * self.running_mean[c])
            })
            .collect();
        let mut out = input.clone();
        for (i, row) in out.data_mut().chunks_mut(len).enumerate() {
            let (a, b) = coef[i % channels];
            row.iter_mut().for_each(|v| *v = a * *v + b);
        }
        Ok(out)
    }

    pub fn backward(&mut self, grad_out: &Tensor3<T>, cache: &NormCache<T>) -> Result<Tensor3<T>> {
        let x_hat = &cache.x_hat;
        if grad_out.shape() != x_hat.shape() || cache.inv_std.len() != self.channels() {
            return Err(Error::shape(
                "batchnorm1d backward",
                x_hat.shape(),
                grad_out.shape(),
            ));
        }
        let (batch, channels, len) = (x_hat.batch(), x_hat.channels(), x_hat.length());
        let nf = T::from_f64((batch * len) as f64);
        let mut grad_in = Tensor3::zeros(batch, channels, len)?;
        for c in 0..channels {
            let mut sum_dy = T::ZERO;
            let mut sum_dy_xh = T::ZERO;
            for b in 0..batch {
                let off = (b * channels + c) * len;
                let dy = &grad_out.data()[off..off + len];
                let xh = &x_hat.data()[off..off + len];
                for (&g, &h) in dy.iter().zip(xh) {
                    sum_dy += g;
                    sum_dy_xh += g * h;
                }
            }
            self.shift.grad[c] += sum_dy;
            self.scale.grad[c] += sum_dy_xh;
            let k = self.scale.value[c] * cache.inv_std[c] / nf;
            for b in 0..batch {
                let off = (b * channels + c) * len;
                let dy = &grad_out.data()[off..off + len];
                let xh = &x_hat.data()[off..off + len];
                let dx = &mut grad_in.data_mut()[off..off + len];
                for ((d, &g), &h) in dx.iter_mut().zip(dy).zip(xh) {
                    *d = k * (nf * g - sum_dy - h * sum_dy_xh);
                }
            }
        }
        Ok(grad_in)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standardized_input_passes_through() {
        // each channel: values ±1 → mean 0, var 1
        let x =
            Tensor3::from_fn(2, 2, 4, |b, _, l| if (b + l) % 2 == 0 { 1.0 } else { -1.0 }).unwrap();
        let mut bn = BatchNorm1d::<f64>::new(2);
        let (y, _) = bn.forward_train(&x).unwrap();
        let k = 1.0 / (1.0f64 + 1e-5).sqrt();
        for (a, b) in y.data().iter().zip(x.data()) {
            assert!((a - b * k).abs() < 1e-15);
            assert!((a - b).abs() < 1e-5);
        }
    }

    #[test]
    fn zero_scale_outputs_shift() {
        let x = Tensor3::from_fn(3, 2, 5, |b, c, l| (b * 7 + c * 3 + l * l) as f64).unwrap();
        let mut bn = BatchNorm1d::<f64>::new(2);
        bn.scale.value = vec![0.0, 0.0];
        bn.shift.value = vec![0.25, -3.0];
        let (y, _) = bn.forward_train(&x).unwrap();
        for b in 0..3 {
            for l in 0..5 {
                assert_eq!(y.get(b, 0, l), 0.25);
                assert_eq!(y.get(b, 1, l), -3.0);
            }
        }
    }

    #[test]
    fn single_value_per_channel_is_rejected_in_train_mode() {
        let x = Tensor3::<f64>::zeros(1, 2, 1).unwrap();
        let mut bn = BatchNorm1d::<f64>::new(2);
        assert!(matches!(
            bn.forward_train(&x),
            Err(Error::DegenerateBatch(1))
        ));
        assert!(bn.infer(&x).is_ok());
    }

    #[test]
    fn running_statistics_follow_momentum() {
        let x = Tensor3::from_vec(vec![1.0, 3.0, 5.0, 7.0], 2, 1, 2).unwrap();
        let mut bn = BatchNorm1d::<f64>::new(1);
        bn.forward_train(&x).unwrap();
        // mean 4, unbiased var 20/3
        assert!((bn.running_mean[0] - 0.4).abs() < 1e-12);
        assert!((bn.running_var[0] - (0.9 + 0.1 * 20.0 / 3.0)).abs() < 1e-12);
        let y = bn.infer(&x).unwrap();
        let a = 1.0 / (bn.running_var[0] + 1e-5).sqrt();
        assert!((y.get(0, 0, 0) - a * (1.0 - 0.4)).abs() < 1e-12);
    }

    #[test]
    fn shift_gradient_is_channel_sum_of_upstream() {
        let x = Tensor3::from_fn(2, 3, 4, |b, c, l| ((b * 5 + c * 11 + l * 3) % 7) as f64).unwrap();
        let g = Tensor3::from_fn(2, 3, 4, |b, c, l| (b + 2 * c) as f64 * 0.5 - l as f64).unwrap();
        let mut bn = BatchNorm1d::<f64>::new(3);
        let (_, cache) = bn.forward_train(&x).unwrap();
        bn.backward(&g, &cache).unwrap();
        for c in 0..3 {
            let want: f64 = (0..2)
                .flat_map(|b| (0..4).map(move |l| (b, l)))
                .map(|(b, l)| g.get(b, c, l))
                .sum();
            assert!((bn.shift.grad[c] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let x = Tensor3::from_fn(2, 2, 6, |b, c, l| (b * 3 + c + l) as f64 * 0.1).unwrap();
        let mut bn = BatchNorm1d::<f64>::new(2);
        let (_, cache) = bn.forward_train(&x).unwrap();
        let g = Tensor3::zeros(2, 2, 6).unwrap();
        let gx = bn.backward(&g, &cache).unwrap();
        assert!(gx.data().iter().all(|&v| v == 0.0));
        assert!(bn
            .scale
            .grad
            .iter()
            .chain(&bn.shift.grad)
            .all(|&v| v == 0.0));
    }
}
