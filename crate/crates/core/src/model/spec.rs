use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::conv_output_len;

/// Default convolution width.
pub const KERNEL_SIZE: usize = 17;

/// One residual block: two same-padded convolutions (the first carries
/// the stride) plus a shortcut.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResidualBlockSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub stride: usize,
    pub kernel: usize,
}

impl ResidualBlockSpec {
    /// A 1×1 strided projection replaces the identity shortcut whenever
    /// the block changes the channel count or the length.
    pub fn has_projection(&self) -> bool {
        self.in_channels != self.out_channels || self.stride != 1
    }

    pub fn output_len(&self, input_len: usize) -> Option<usize> {
        conv_output_len(
            input_len,
            self.kernel,
            self.stride,
            (self.kernel.saturating_sub(1)) / 2,
        )
    }
}

/// Declarative description of the whole network.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub input_channels: usize,
    pub window_length: usize,
    pub blocks: Vec<ResidualBlockSpec>,
    pub head_features: usize,
    pub num_outputs: usize,
}

impl Default for NetworkSpec {
    fn default() -> Self {
        default_network_spec()
    }
}

/// Six blocks with 32/64/128/256/384/512 filters taking a 3-channel,
/// 1000-long window down to lengths 1000/500/250/125/25/5, then a
/// 512 → 3 head.
pub fn default_network_spec() -> NetworkSpec {
    NetworkSpec::from_schedule(
        3,
        1000,
        &[(32, 1), (64, 2), (128, 2), (256, 2), (384, 5), (512, 5)],
        KERNEL_SIZE,
        3,
    )
}

impl NetworkSpec {
    /// Chains blocks given `(out_channels, stride)` per block.
    pub fn from_schedule(
        input_channels: usize,
        window_length: usize,
        schedule: &[(usize, usize)],
        kernel: usize,
        num_outputs: usize,
    ) -> Self {
        let mut blocks = Vec::with_capacity(schedule.len());
        let mut in_channels = input_channels;
        for &(out_channels, stride) in schedule {
            blocks.push(ResidualBlockSpec {
                in_channels,
                out_channels,
                stride,
                kernel,
            });
            in_channels = out_channels;
        }
        Self {
            input_channels,
            window_length,
            blocks,
            head_features: in_channels,
            num_outputs,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(format!("network spec: {msg}")));
        if self.input_channels == 0 || self.window_length == 0 || self.num_outputs == 0 {
            return bad("input channels, window length and outputs must be positive".into());
        }
        if self.blocks.is_empty() {
            return bad("at least one residual block is required".into());
        }
        let mut channels = self.input_channels;
        for (i, b) in self.blocks.iter().enumerate() {
            if b.in_channels != channels {
                return bad(format!(
                    "block {i} expects {} input channels, previous stage has {channels}",
                    b.in_channels
                ));
            }
            if b.out_channels == 0 || b.stride == 0 {
                return bad(format!("block {i} needs positive channels and stride"));
            }
            if b.kernel % 2 == 0 {
                return bad(format!("block {i} kernel {} is not odd", b.kernel));
            }
            channels = b.out_channels;
        }
        if self.head_features != channels {
            return bad(format!(
                "head expects {} features, last block has {channels}",
                self.head_features
            ));
        }
        self.block_output_lengths().map(|_| ())
    }

    /// Output length of every block for a `window_length` input.
    pub fn block_output_lengths(&self) -> Result<Vec<usize>> {
        let mut len = self.window_length;
        self.blocks
            .iter()
            .enumerate()
            .map(|(i, b)| {
                len = b.output_len(len).ok_or_else(|| {
                    Error::InvalidArgument(format!(
                        "network spec: block {i} receives a length its kernel cannot cover"
                    ))
                })?;
                Ok(len)
            })
            .collect()
    }
}
