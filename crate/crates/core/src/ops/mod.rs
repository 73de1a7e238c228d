//! Reference convolution operators.
//!
//! These are the functional ground truth for the array simulator and the
//! basis for MAC and parameter accounting. All arithmetic is `f32`.

mod conv;
mod count;
mod fuse;
mod im2col;
mod tensor;

pub use conv::{conv1d_col, conv1d_row, conv2d_depthwise, conv2d_standard, conv_pointwise, matmul};
pub use count::{count_macs, count_params, profiled_macs, BN_OPS_PER_ELEMENT};
pub use fuse::{fuse_intermediate, fuseconv, FuseFilters, FuseVariant};
pub use im2col::{filters_as_matrix, im2col};
pub use tensor::Tensor;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum OpsError {
    #[error("invalid tensor shape {0:?}: every extent must be at least 1")]
    InvalidShape(Vec<usize>),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),
    #[error("kernel of {kernel} taps exceeds padded extent {padded}")]
    KernelTooLarge { kernel: usize, padded: usize },
    #[error("half variant needs an even channel count, got {0}")]
    OddChannels(usize),
    #[error("unsupported layer kind: {0}")]
    Unsupported(String),
}

/// Geometry of a convolution layer. Padding is symmetric zero padding on
/// every spatial edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ConvGeometry {
    pub input_h: usize,
    pub input_w: usize,
    pub channels_in: usize,
    pub kernel: usize,
    pub channels_out: usize,
    pub stride: usize,
    pub padding: usize,
}

impl ConvGeometry {
    pub fn new(
        input_h: usize,
        input_w: usize,
        channels_in: usize,
        kernel: usize,
        channels_out: usize,
        stride: usize,
        padding: usize,
    ) -> Self {
        Self {
            input_h,
            input_w,
            channels_in,
            kernel,
            channels_out,
            stride,
            padding,
        }
    }

    /// Stride 1, no padding.
    pub fn valid(input_h: usize, input_w: usize, channels_in: usize, kernel: usize, channels_out: usize) -> Self {
        Self::new(input_h, input_w, channels_in, kernel, channels_out, 1, 0)
    }

    pub fn validate(&self) -> Result<(), OpsError> {
        let named = [
            ("input_h", self.input_h),
            ("input_w", self.input_w),
            ("channels_in", self.channels_in),
            ("kernel", self.kernel),
            ("channels_out", self.channels_out),
            ("stride", self.stride),
        ];
        if let Some((name, _)) = named.iter().find(|(_, v)| *v == 0) {
            return Err(OpsError::InvalidGeometry(format!("{name} must be at least 1")));
        }
        out_extent(self.input_h, self.kernel, self.stride, self.padding)?;
        out_extent(self.input_w, self.kernel, self.stride, self.padding)?;
        Ok(())
    }

    /// Output height `N`.
    pub fn out_h(&self) -> usize {
        out_extent(self.input_h, self.kernel, self.stride, self.padding).unwrap_or(0)
    }

    /// Output width `M`.
    pub fn out_w(&self) -> usize {
        out_extent(self.input_w, self.kernel, self.stride, self.padding).unwrap_or(0)
    }

    /// Input row (or column) that 1D filters of the orthogonal axis read for
    /// output index `n`: the centre tap of the square window.
    pub fn centre_offset(&self, n: usize) -> isize {
        (n * self.stride + self.kernel / 2) as isize - self.padding as isize
    }
}

pub(crate) fn out_extent(extent: usize, kernel: usize, stride: usize, padding: usize) -> Result<usize, OpsError> {
    let padded = extent + 2 * padding;
    if kernel > padded {
        return Err(OpsError::KernelTooLarge { kernel, padded });
    }
    if stride == 0 {
        return Err(OpsError::InvalidGeometry("stride must be at least 1".into()));
    }
    Ok((padded - kernel) / stride + 1)
}
