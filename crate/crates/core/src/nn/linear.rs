use super::Param;
use crate::error::{Error, Result};
use crate::tensor::{gemm, MatRef, Matrix, Scalar};

/// Fully connected layer `y = x Wᵀ + b`, weights `[out_features][in_features]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear<T> {
    pub weight: Param<T>,
    pub bias: Param<T>,
    in_features: usize,
    out_features: usize,
}

#[derive(Debug, Clone)]
pub struct LinearCache<T> {
    input: Matrix<T>,
}

impl<T: Scalar> Linear<T> {
    pub fn new(in_features: usize, out_features: usize) -> Self {
        Self {
            weight: Param::zeros(&[out_features, in_features]),
            bias: Param::zeros(&[out_features]),
            in_features,
            out_features,
        }
    }

    pub fn in_features(&self) -> usize {
        self.in_features
    }
    pub fn out_features(&self) -> usize {
        self.out_features
    }

    pub fn infer(&self, input: &Matrix<T>) -> Result<Matrix<T>> {
        if input.cols() != self.in_features {
            return Err(Error::shape(
                "linear",
                format!("[*, {}]", self.in_features),
                format!("[{}, {}]", input.rows(), input.cols()),
            ));
        }
        let n = input.rows();
        let mut out = vec![T::ZERO; n * self.out_features];
        for row in out.chunks_mut(self.out_features) {
            row.copy_from_slice(&self.bias.value);
        }
        gemm(
            MatRef::new(input.data(), n, self.in_features),
            MatRef::new(&self.weight.value, self.out_features, self.in_features).t(),
            T::ONE,
            &mut out,
        );
        Matrix::from_vec(out, n, self.out_features)
    }

    pub fn forward(&self, input: &Matrix<T>) -> Result<(Matrix<T>, LinearCache<T>)> {
        let y = self.infer(input)?;
        Ok((
            y,
            LinearCache {
                input: input.clone(),
            },
        ))
    }

    pub fn backward(&mut self, grad_out: &Matrix<T>, cache: &LinearCache<T>) -> Result<Matrix<T>> {
        let n = cache.input.rows();
        if grad_out.shape() != (n, self.out_features) {
            return Err(Error::shape(
                "linear backward",
                format!("[{n}, {}]", self.out_features),
                format!("[{}, {}]", grad_out.rows(), grad_out.cols()),
            ));
        }
        gemm(
            MatRef::new(grad_out.data(), n, self.out_features).t(),
            MatRef::new(cache.input.data(), n, self.in_features),
            T::ONE,
            &mut self.weight.grad,
        );
        for row in grad_out.data().chunks(self.out_features) {
            for (g, &d) in self.bias.grad.iter_mut().zip(row) {
                *g += d;
            }
        }
        let mut dx = vec![T::ZERO; n * self.in_features];
        gemm(
            MatRef::new(grad_out.data(), n, self.out_features),
            MatRef::new(&self.weight.value, self.out_features, self.in_features),
            T::ZERO,
            &mut dx,
        );
        Matrix::from_vec(dx, n, self.in_features)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_weights_pass_input_through() {
        let mut lin = Linear::<f64>::new(3, 3);
        for i in 0..3 {
            lin.weight.value[i * 3 + i] = 1.0;
        }
        let x = Matrix::from_vec(vec![1.0, -2.0, 3.5, 0.0, 4.0, -1.0], 2, 3).unwrap();
        assert_eq!(lin.infer(&x).unwrap(), x);
    }

    #[test]
    fn two_by_two_hand_case() {
        let mut lin = Linear::<f64>::new(2, 2);
        lin.weight.value = vec![1.0, 2.0, 3.0, 4.0];
        let x = Matrix::from_vec(vec![1.0, 1.0], 1, 2).unwrap();
        assert_eq!(lin.infer(&x).unwrap().data(), &[3.0, 7.0]);
    }

    #[test]
    fn rejects_feature_mismatch() {
        let lin = Linear::<f64>::new(4, 2);
        assert!(lin.infer(&Matrix::zeros(1, 3)).is_err());
    }
}
