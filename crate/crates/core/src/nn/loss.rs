use crate::error::{Error, Result};
use crate::tensor::{Matrix, Scalar};

pub fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::ZERO {
        T::ONE / (T::ONE + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::ONE + e)
    }
}

/// Mean binary cross-entropy on logits and its gradient.
///
/// Uses `max(x, 0) - x*z + ln(1 + exp(-|x|))`, which stays finite for any
/// finite logit. The gradient is `(sigmoid(x) - z) / N` over all `N`
/// elements.
pub fn bce_with_logits<T: Scalar>(
    logits: &Matrix<T>,
    targets: &Matrix<T>,
) -> Result<(T, Matrix<T>)> {
    if logits.shape() != targets.shape() {
        return Err(Error::shape(
            "bce_with_logits",
            format!("{:?}", logits.shape()),
            format!("{:?}", targets.shape()),
        ));
    }
    if let Some((index, &z)) = targets
        .data()
        .iter()
        .enumerate()
        .find(|(_, &z)| z != T::ZERO && z != T::ONE)
    {
        return Err(Error::NonBinaryTarget {
            index,
            value: z.to_f64(),
        });
    }
    let n = logits.data().len();
    if n == 0 {
        return Err(Error::InvalidArgument(
            "bce_with_logits on an empty batch".into(),
        ));
    }
    let nf = T::from_f64(n as f64);
    let mut total = T::ZERO;
    let mut grad = Vec::with_capacity(n);
    for (&x, &z) in logits.data().iter().zip(targets.data()) {
        let relu = if x > T::ZERO { x } else { T::ZERO };
        total += relu - x * z + (-x.abs()).exp().ln_1p();
        grad.push((sigmoid(x) - z) / nf);
    }
    Ok((
        total / nf,
        Matrix::from_vec(grad, logits.rows(), logits.cols())?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(x: f64, z: f64) -> f64 {
        let l = Matrix::from_vec(vec![x], 1, 1).unwrap();
        let t = Matrix::from_vec(vec![z], 1, 1).unwrap();
        bce_with_logits(&l, &t).unwrap().0
    }

    #[test]
    fn zero_logit_costs_ln_two() {
        assert!((single(0.0, 1.0) - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn saturates_without_overflow() {
        assert!(single(30.0, 1.0) < 1e-12);
        assert!((single(-30.0, 1.0) - 30.0).abs() < 1e-12);
        for x in [-100.0, -50.0, 0.0, 50.0, 100.0] {
            for z in [0.0, 1.0] {
                assert!(single(x, z).is_finite());
            }
        }
        let l = Matrix::from_vec(vec![-100.0f32, 100.0], 1, 2).unwrap();
        let t = Matrix::from_vec(vec![1.0f32, 0.0], 1, 2).unwrap();
        let (loss, g) = bce_with_logits(&l, &t).unwrap();
        assert!(loss.is_finite() && g.data().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn rejects_non_binary_targets() {
        let l = Matrix::from_vec(vec![0.0, 0.0], 1, 2).unwrap();
        let t = Matrix::from_vec(vec![1.0, 0.5], 1, 2).unwrap();
        assert!(matches!(
            bce_with_logits(&l, &t),
            Err(Error::NonBinaryTarget { index: 1, .. })
        ));
    }

    #[test]
    fn sigmoid_is_symmetric_and_bounded() {
        for x in [-700.0f64, -3.0, 0.0, 2.5, 700.0] {
            let s = sigmoid(x);
            assert!((0.0..=1.0).contains(&s));
            assert!((s + sigmoid(-x) - 1.0).abs() < 1e-15);
        }
    }
}
