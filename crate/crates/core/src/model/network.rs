use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::spec::{NetworkSpec, ResidualBlockSpec};
use crate::error::{Error, Result};
use crate::nn::{
    global_avg_pool_backward, global_avg_pool_forward, relu_backward, relu_forward, BatchNorm1d,
    Conv1d, ConvCache, Linear, LinearCache, Mode, NormCache, Param, ReluMask,
};
use crate::tensor::{Matrix, Scalar, Shape3, Tensor3};

/// conv → norm → relu → conv → norm, added to the (projected) input, then relu.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualBlock<T> {
    pub spec: ResidualBlockSpec,
    pub conv1: Conv1d<T>,
    pub bn1: BatchNorm1d<T>,
    pub conv2: Conv1d<T>,
    pub bn2: BatchNorm1d<T>,
    pub shortcut: Option<Projection<T>>,
}

/// 1×1 strided convolution with its own normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection<T> {
    pub conv: Conv1d<T>,
    pub bn: BatchNorm1d<T>,
}

struct BlockCache<T> {
    conv1: ConvCache<T>,
    bn1: NormCache<T>,
    relu1: ReluMask,
    conv2: ConvCache<T>,
    bn2: NormCache<T>,
    shortcut: Option<(ConvCache<T>, NormCache<T>)>,
    relu_out: ReluMask,
}

struct TrainCache<T> {
    blocks: Vec<BlockCache<T>>,
    pooled_len: usize,
    head: LinearCache<T>,
}

/// Result of a forward pass. Always records per-block output shapes;
/// holds activations only after a train-mode pass.
pub struct ForwardCache<T> {
    mode: Mode,
    block_shapes: Vec<Shape3>,
    train: Option<TrainCache<T>>,
}

impl<T> ForwardCache<T> {
    pub fn mode(&self) -> Mode {
        self.mode
    }

    /// `[batch, channels, length]` after each residual block.
    pub fn block_shapes(&self) -> &[Shape3] {
        &self.block_shapes
    }
}

impl<T: Scalar> ResidualBlock<T> {
    fn new(spec: ResidualBlockSpec) -> Result<Self> {
        let shortcut = if spec.has_projection() {
            Some(Projection {
                conv: Conv1d::new(spec.in_channels, spec.out_channels, 1, spec.stride, 0)?,
                bn: BatchNorm1d::new(spec.out_channels),
            })
        } else {
            None
        };
        Ok(Self {
            spec,
            conv1: Conv1d::same(
                spec.in_channels,
                spec.out_channels,
                spec.kernel,
                spec.stride,
            )?,
            bn1: BatchNorm1d::new(spec.out_channels),
            conv2: Conv1d::same(spec.out_channels, spec.out_channels, spec.kernel, 1)?,
            bn2: BatchNorm1d::new(spec.out_channels),
            shortcut,
        })
    }

    fn forward_train(&mut self, x: &Tensor3<T>) -> Result<(Tensor3<T>, BlockCache<T>)> {
        let (h, conv1) = self.conv1.forward(x)?;
        let (h, bn1) = self.bn1.forward_train(&h)?;
        let (h, relu1) = relu_forward(&h);
        let (h, conv2) = self.conv2.forward(&h)?;
        let (mut h, bn2) = self.bn2.forward_train(&h)?;
        let shortcut = match &mut self.shortcut {
            Some(p) => {
                let (s, sc) = p.conv.forward(x)?;
                let (s, sn) = p.bn.forward_train(&s)?;
                h.add_assign(&s)?;
                Some((sc, sn))
            }
            None => {
                h.add_assign(x)?;
                None
            }
        };
        let (out, relu_out) = relu_forward(&h);
        Ok((
            out,
            BlockCache {
                conv1,
                bn1,
                relu1,
                conv2,
                bn2,
                shortcut,
                relu_out,
            },
        ))
    }

    /// Eval-mode output of this block.
    pub fn infer(&self, x: &Tensor3<T>) -> Result<Tensor3<T>> {
        let h = self.bn1.infer(&self.conv1.infer(x)?)?;
        let (h, _) = relu_forward(&h);
        let mut h = self.bn2.infer(&self.conv2.infer(&h)?)?;
        match &self.shortcut {
            Some(p) => h.add_assign(&p.bn.infer(&p.conv.infer(x)?)?)?,
            None => h.add_assign(x)?,
        }
        Ok(relu_forward(&h).0)
    }

    fn backward(&mut self, grad_out: &Tensor3<T>, cache: &BlockCache<T>) -> Result<Tensor3<T>> {
        let g = relu_backward(grad_out, &cache.relu_out)?;
        let mut gx = match (&mut self.shortcut, &cache.shortcut) {
            (Some(p), Some((sc, sn))) => {
                let gs = p.bn.backward(&g, sn)?;
                p.conv.backward(&gs, sc)?
            }
            (None, None) => g.clone(),
            _ => {
                return Err(Error::InvalidArgument(
                    "block cache does not match the block layout".into(),
                ))
            }
        };
        let gm = self.bn2.backward(&g, &cache.bn2)?;
        let gm = self.conv2.backward(&gm, &cache.conv2)?;
        let gm = relu_backward(&gm, &cache.relu1)?;
        let gm = self.bn1.backward(&gm, &cache.bn1)?;
        let gm = self.conv1.backward(&gm, &cache.conv1)?;
        gx.add_assign(&gm)?;
        Ok(gx)
    }
}

/// The residual network together with its learned parameters and
/// gradient buffers.
#[derive(Debug, Clone, PartialEq)]
pub struct Network<T> {
    spec: NetworkSpec,
    pub blocks: Vec<ResidualBlock<T>>,
    pub head: Linear<T>,
}

impl<T: Scalar> Network<T> {
    /// All-zero network for `spec`; the caller fills in parameters.
    pub fn zeroed(spec: &NetworkSpec) -> Result<Self> {
        spec.validate()?;
        let blocks = spec
            .blocks
            .iter()
            .map(|&b| ResidualBlock::new(b))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            spec: spec.clone(),
            blocks,
            head: Linear::new(spec.head_features, spec.num_outputs),
        })
    }

    /// Seeded initialization: He-normal convolution weights (std
    /// `sqrt(2 / fan_in)`), zero conv biases, unit norm scale, zero norm
    /// shift, head weights uniform in `±1/sqrt(fan_in)`, zero head bias.
    pub fn init(spec: &NetworkSpec, seed: u64) -> Result<Self> {
        let mut net = Self::zeroed(spec)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let he = |conv: &mut Conv1d<T>, rng: &mut ChaCha8Rng| {
            let fan_in = (conv.in_channels() * conv.kernel()) as f64;
            let normal = Normal::new(0.0, (2.0 / fan_in).sqrt()).expect("positive std");
            conv.weight
                .value
                .iter_mut()
                .for_each(|w| *w = T::from_f64(normal.sample(rng)));
        };
        for block in &mut net.blocks {
            he(&mut block.conv1, &mut rng);
            he(&mut block.conv2, &mut rng);
            if let Some(p) = &mut block.shortcut {
                he(&mut p.conv, &mut rng);
            }
        }
        let bound = 1.0 / (spec.head_features as f64).sqrt();
        net.head
            .weight
            .value
            .iter_mut()
            .for_each(|w| *w = T::from_f64(rng.gen_range(-bound..bound)));
        Ok(net)
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    fn check_input(&self, batch: &Tensor3<T>) -> Result<()> {
        if batch.channels() != self.spec.input_channels || batch.length() != self.spec.window_length
        {
            return Err(Error::shape(
                "network forward",
                format!(
                    "[*, {}, {}]",
                    self.spec.input_channels, self.spec.window_length
                ),
                batch.shape(),
            ));
        }
        Ok(())
    }

    /// Whole-network forward. Train mode normalizes with batch statistics,
    /// updates running statistics and keeps activations for `backward`.
    pub fn forward(
        &mut self,
        batch: &Tensor3<T>,
        mode: Mode,
    ) -> Result<(Matrix<T>, ForwardCache<T>)> {
        self.check_input(batch)?;
        match mode {
            Mode::Eval => {
                let mut shapes = Vec::with_capacity(self.blocks.len());
                let logits = self.infer_traced(batch, &mut shapes)?;
                Ok((
                    logits,
                    ForwardCache {
                        mode,
                        block_shapes: shapes,
                        train: None,
                    },
                ))
            }
            Mode::Train => {
                let mut shapes = Vec::with_capacity(self.blocks.len());
                let mut caches = Vec::with_capacity(self.blocks.len());
                let mut h = batch.clone();
                for block in &mut self.blocks {
                    let (out, cache) = block.forward_train(&h)?;
                    shapes.push(out.shape());
                    caches.push(cache);
                    h = out;
                }
                let pooled = global_avg_pool_forward(&h);
                let (logits, head) = self.head.forward(&pooled)?;
                check_finite(&logits)?;
                Ok((
                    logits,
                    ForwardCache {
                        mode,
                        block_shapes: shapes,
                        train: Some(TrainCache {
                            blocks: caches,
                            pooled_len: h.length(),
                            head,
                        }),
                    },
                ))
            }
        }
    }

    /// Eval-mode logits over shared parameters.
    pub fn predict(&self, batch: &Tensor3<T>) -> Result<Matrix<T>> {
        self.check_input(batch)?;
        self.infer_traced(batch, &mut Vec::new())
    }

    fn infer_traced(&self, batch: &Tensor3<T>, shapes: &mut Vec<Shape3>) -> Result<Matrix<T>> {
        let mut h = batch.clone();
        for block in &self.blocks {
            h = block.infer(&h)?;
            shapes.push(h.shape());
        }
        let logits = self.head.infer(&global_avg_pool_forward(&h))?;
        check_finite(&logits)?;
        Ok(logits)
    }

    /// Accumulates parameter gradients for `grad_logits` (batch × outputs).
    pub fn backward(&mut self, cache: &ForwardCache<T>, grad_logits: &Matrix<T>) -> Result<()> {
        let train = cache.train.as_ref().ok_or(Error::EvalModeCache)?;
        if train.blocks.len() != self.blocks.len() {
            return Err(Error::InvalidArgument(
                "cache was produced by a different network".into(),
            ));
        }
        let g = self.head.backward(grad_logits, &train.head)?;
        let mut g = global_avg_pool_backward(&g, train.pooled_len)?;
        for (block, bc) in self.blocks.iter_mut().zip(&train.blocks).rev() {
            g = block.backward(&g, bc)?;
        }
        Ok(())
    }

    pub fn zero_grad(&mut self) {
        for (_, p) in self.named_params_mut() {
            p.zero_grad();
        }
    }

    /// Learnable tensors in a fixed order with stable names.
    pub fn named_params(&self) -> Vec<(String, &Param<T>)> {
        let mut out = Vec::new();
        for (i, b) in self.blocks.iter().enumerate() {
            let p = format!("blocks.{i}");
            out.push((format!("{p}.conv1.weight"), &b.conv1.weight));
            out.push((format!("{p}.conv1.bias"), &b.conv1.bias));
            out.push((format!("{p}.bn1.scale"), &b.bn1.scale));
            out.push((format!("{p}.bn1.shift"), &b.bn1.shift));
            out.push((format!("{p}.conv2.weight"), &b.conv2.weight));
            out.push((format!("{p}.conv2.bias"), &b.conv2.bias));
            out.push((format!("{p}.bn2.scale"), &b.bn2.scale));
            out.push((format!("{p}.bn2.shift"), &b.bn2.shift));
            if let Some(s) = &b.shortcut {
                out.push((format!("{p}.shortcut.conv.weight"), &s.conv.weight));
                out.push((format!("{p}.shortcut.conv.bias"), &s.conv.bias));
                out.push((format!("{p}.shortcut.bn.scale"), &s.bn.scale));
                out.push((format!("{p}.shortcut.bn.shift"), &s.bn.shift));
            }
        }
        out.push(("head.weight".into(), &self.head.weight));
        out.push(("head.bias".into(), &self.head.bias));
        out
    }

    pub fn named_params_mut(&mut self) -> Vec<(String, &mut Param<T>)> {
        let mut out = Vec::new();
        for (i, b) in self.blocks.iter_mut().enumerate() {
            let p = format!("blocks.{i}");
            out.push((format!("{p}.conv1.weight"), &mut b.conv1.weight));
            out.push((format!("{p}.conv1.bias"), &mut b.conv1.bias));
            out.push((format!("{p}.bn1.scale"), &mut b.bn1.scale));
            out.push((format!("{p}.bn1.shift"), &mut b.bn1.shift));
            out.push((format!("{p}.conv2.weight"), &mut b.conv2.weight));
            out.push((format!("{p}.conv2.bias"), &mut b.conv2.bias));
            out.push((format!("{p}.bn2.scale"), &mut b.bn2.scale));
            out.push((format!("{p}.bn2.shift"), &mut b.bn2.shift));
            if let Some(s) = &mut b.shortcut {
                out.push((format!("{p}.shortcut.conv.weight"), &mut s.conv.weight));
                out.push((format!("{p}.shortcut.conv.bias"), &mut s.conv.bias));
                out.push((format!("{p}.shortcut.bn.scale"), &mut s.bn.scale));
                out.push((format!("{p}.shortcut.bn.shift"), &mut s.bn.shift));
            }
        }
        out.push(("head.weight".into(), &mut self.head.weight));
        out.push(("head.bias".into(), &mut self.head.bias));
        out
    }

    /// Normalization running statistics, named like parameters.
    pub fn named_buffers(&self) -> Vec<(String, &Vec<T>)> {
        let mut out = Vec::new();
        for (i, b) in self.blocks.iter().enumerate() {
            let mut norms = vec![("bn1", &b.bn1), ("bn2", &b.bn2)];
            if let Some(s) = &b.shortcut {
                norms.push(("shortcut.bn", &s.bn));
            }
            for (n, bn) in norms {
                out.push((format!("blocks.{i}.{n}.running_mean"), &bn.running_mean));
                out.push((format!("blocks.{i}.{n}.running_var"), &bn.running_var));
            }
        }
        out
    }

    pub fn named_buffers_mut(&mut self) -> Vec<(String, &mut Vec<T>)> {
        let mut out = Vec::new();
        for (i, b) in self.blocks.iter_mut().enumerate() {
            let mut norms = vec![("bn1", &mut b.bn1), ("bn2", &mut b.bn2)];
            if let Some(s) = &mut b.shortcut {
                norms.push(("shortcut.bn", &mut s.bn));
            }
            for (n, bn) in norms {
                out.push((format!("blocks.{i}.{n}.running_mean"), &mut bn.running_mean));
                out.push((format!("blocks.{i}.{n}.running_var"), &mut bn.running_var));
            }
        }
        out
    }

    /// Number of learnable scalars (running statistics excluded).
    pub fn parameter_count(&self) -> usize {
        self.named_params().iter().map(|(_, p)| p.len()).sum()
    }
}

fn check_finite<T: Scalar>(logits: &Matrix<T>) -> Result<()> {
    if logits.data().iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite("network logits".into()))
    }
}
