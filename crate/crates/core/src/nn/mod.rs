//! Forward and backward passes for the primitives the residual network is
//! built from. Every layer owns its parameters together with gradient
//! buffers of the same shape; `backward` accumulates into those buffers.

mod activation;
mod conv;
mod linear;
mod loss;
mod norm;
mod pool;

pub use activation::{relu_backward, relu_forward, ReluMask};
pub use conv::{conv_output_len, Conv1d, ConvCache};
pub use linear::{Linear, LinearCache};
pub use loss::{bce_with_logits, sigmoid};
pub use norm::{BatchNorm1d, NormCache};
pub use pool::{global_avg_pool_backward, global_avg_pool_forward};

use crate::tensor::Scalar;

/// Samples processed together in one matrix product. Fixed so results do
/// not depend on the rayon thread count.
pub(crate) const SAMPLE_CHUNK: usize = 8;

/// Upper bound on the number of partial weight-gradient buffers reduced
/// at the end of a backward pass.
pub(crate) const GRAD_PARTIALS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// A learnable tensor with its paired gradient buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct Param<T> {
    pub value: Vec<T>,
    pub grad: Vec<T>,
    shape: Vec<usize>,
}

impl<T: Scalar> Param<T> {
    pub fn new(value: Vec<T>, shape: &[usize]) -> Self {
        assert_eq!(value.len(), shape.iter().product::<usize>(), "param shape");
        Self {
            grad: vec![T::ZERO; value.len()],
            value,
            shape: shape.to_vec(),
        }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::new(vec![T::ZERO; shape.iter().product()], shape)
    }

    pub fn filled(shape: &[usize], v: T) -> Self {
        Self::new(vec![v; shape.iter().product()], shape)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    pub fn zero_grad(&mut self) {
        self.grad.iter_mut().for_each(|g| *g = T::ZERO);
    }
}

/// Split `data` into consecutive pieces of the given lengths.
pub(crate) fn split_lengths<'a, T>(mut data: &'a mut [T], lens: &[usize]) -> Vec<&'a mut [T]> {
    let mut out = Vec::with_capacity(lens.len());
    for &n in lens {
        let (head, tail) = std::mem::take(&mut data).split_at_mut(n);
        out.push(head);
        data = tail;
    }
    out
}

/// Contiguous ranges `[start, end)` of sample chunks, one per partial buffer.
pub(crate) fn chunk_groups(n_chunks: usize) -> Vec<(usize, usize)> {
    let groups = n_chunks.clamp(1, GRAD_PARTIALS);
    (0..groups)
        .map(|g| (g * n_chunks / groups, (g + 1) * n_chunks / groups))
        .collect()
}
