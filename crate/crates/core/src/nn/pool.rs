use crate::error::{Error, Result};
use crate::tensor::{Matrix, Scalar, Tensor3};

/// Mean over the length axis: `[batch, channels, length]` → `batch × channels`.
pub fn global_avg_pool_forward<T: Scalar>(input: &Tensor3<T>) -> Matrix<T> {
    let len = T::from_f64(input.length() as f64);
    let data = input
        .data()
        .chunks(input.length())
        .map(|row| row.iter().copied().sum::<T>() / len)
        .collect();
    Matrix::from_vec(data, input.batch(), input.channels()).expect("pool shape")
}

/// Spreads each upstream value evenly over the `length` pooled positions.
pub fn global_avg_pool_backward<T: Scalar>(
    grad_out: &Matrix<T>,
    length: usize,
) -> Result<Tensor3<T>> {
    if length == 0 {
        return Err(Error::InvalidArgument("pooled length must be >= 1".into()));
    }
    let inv = T::ONE / T::from_f64(length as f64);
    let mut data = Vec::with_capacity(grad_out.data().len() * length);
    for &g in grad_out.data() {
        data.extend(std::iter::repeat_n(g * inv, length));
    }
    Tensor3::from_vec(data, grad_out.rows(), grad_out.cols(), length)
}
