use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor3};

/// Positions where the ReLU input was strictly positive.
#[derive(Debug, Clone)]
pub struct ReluMask {
    positive: Vec<bool>,
    shape: crate::tensor::Shape3,
}

pub fn relu_forward<T: Scalar>(input: &Tensor3<T>) -> (Tensor3<T>, ReluMask) {
    let positive: Vec<bool> = input.data().iter().map(|&v| v > T::ZERO).collect();
    let out = input.map(|v| if v > T::ZERO { v } else { T::ZERO });
    (
        out,
        ReluMask {
            positive,
            shape: input.shape(),
        },
    )
}

pub fn relu_backward<T: Scalar>(grad_out: &Tensor3<T>, mask: &ReluMask) -> Result<Tensor3<T>> {
    if grad_out.shape() != mask.shape {
        return Err(Error::shape("relu backward", mask.shape, grad_out.shape()));
    }
    let mut g = grad_out.clone();
    g.data_mut()
        .iter_mut()
        .zip(&mask.positive)
        .for_each(|(v, &p)| {
            if !p {
                *v = T::ZERO;
            }
        });
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clamps_negatives_and_masks_gradient() {
        let x = Tensor3::from_vec(vec![-1.0f32, 0.0, 2.0], 1, 1, 3).unwrap();
        let (y, mask) = relu_forward(&x);
        assert_eq!(y.data(), &[0.0, 0.0, 2.0]);
        let g = Tensor3::from_vec(vec![5.0f32, 5.0, 5.0], 1, 1, 3).unwrap();
        assert_eq!(relu_backward(&g, &mask).unwrap().data(), &[0.0, 0.0, 5.0]);
    }

    #[test]
    fn rejects_mismatched_mask() {
        let (_, mask) = relu_forward(&Tensor3::<f32>::zeros(1, 1, 3).unwrap());
        assert!(relu_backward(&Tensor3::<f32>::zeros(1, 1, 4).unwrap(), &mask).is_err());
    }
}
