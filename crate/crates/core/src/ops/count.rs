use super::{FuseVariant, OpsError};
use crate::netmodel::{LayerKind, LayerSpec};

/// Operations a framework profiler charges per batch-norm output element
/// (scale and shift) on top of the layer's multiply-accumulates.
pub const BN_OPS_PER_ELEMENT: u64 = 2;

fn dims(layer: &LayerSpec) -> (u64, u64, u64, u64, u64) {
    let g = &layer.geometry;
    (
        g.out_h() as u64,
        g.out_w() as u64,
        g.channels_in as u64,
        g.kernel as u64,
        g.channels_out as u64,
    )
}

fn squeeze(layer: &LayerSpec) -> Result<u64, OpsError> {
    layer.se_width.map(|s| s as u64).ok_or_else(|| {
        OpsError::Unsupported(format!("{}: squeeze-excite layer without a squeeze width", layer.name))
    })
}

fn se_macs(layer: &LayerSpec, channels: u64) -> u64 {
    layer.se_width.map_or(0, |s| 2 * channels * s as u64)
}

fn se_params(layer: &LayerSpec, channels: u64) -> u64 {
    layer.se_width.map_or(0, |s| {
        let s = s as u64;
        2 * channels * s + s + channels
    })
}

fn fuse_variant(kind: LayerKind) -> Option<FuseVariant> {
    match kind {
        LayerKind::FuSeFull => Some(FuseVariant::Full),
        LayerKind::FuSeHalf => Some(FuseVariant::Half),
        _ => None,
    }
}

/// Multiply-accumulate count of one layer.
///
/// Squeeze-excite MACs are the two fully connected layers; the pooling and
/// the channel-wise rescale are not counted.
pub fn count_macs(layer: &LayerSpec) -> Result<u64, OpsError> {
    layer.validate()?;
    let (n, m, c, k, co) = dims(layer);
    Ok(match layer.kind {
        LayerKind::Standard => n * m * co * k * k * c,
        LayerKind::DepthwiseSeparable => n * m * c * (k * k + co) + se_macs(layer, c),
        LayerKind::FuSeFull | LayerKind::FuSeHalf => {
            let mid = fuse_variant(layer.kind).unwrap().intermediate_channels(c as usize) as u64;
            n * m * mid * (k + co) + se_macs(layer, mid)
        }
        LayerKind::Pointwise => n * m * c * co,
        LayerKind::FullyConnected => c * co,
        LayerKind::SqueezeExcite => 2 * c * squeeze(layer)?,
    })
}

/// Stored weights of one layer. Convolutions carry no bias (they are
/// followed by batch norm); fully connected layers do.
pub fn count_params(layer: &LayerSpec) -> Result<u64, OpsError> {
    layer.validate()?;
    let (_, _, c, k, co) = dims(layer);
    Ok(match layer.kind {
        LayerKind::Standard => k * k * c * co,
        LayerKind::DepthwiseSeparable => c * (k * k + co) + se_params(layer, c),
        LayerKind::FuSeFull | LayerKind::FuSeHalf => {
            let mid = fuse_variant(layer.kind).unwrap().intermediate_channels(c as usize) as u64;
            mid * (k + co) + se_params(layer, mid)
        }
        LayerKind::Pointwise => c * co,
        LayerKind::FullyConnected => c * co + co,
        LayerKind::SqueezeExcite => {
            let s = squeeze(layer)?;
            2 * c * s + s + c
        }
    })
}

/// MACs as framework profilers report them: [`count_macs`] plus
/// [`BN_OPS_PER_ELEMENT`] for every batch-normalised output element.
pub fn profiled_macs(layer: &LayerSpec) -> Result<u64, OpsError> {
    let macs = count_macs(layer)?;
    let (n, m, c, _, co) = dims(layer);
    let bn_elems = match layer.kind {
        LayerKind::Standard | LayerKind::Pointwise => n * m * co,
        LayerKind::DepthwiseSeparable => n * m * (c + co),
        LayerKind::FuSeFull | LayerKind::FuSeHalf => {
            let mid = fuse_variant(layer.kind).unwrap().intermediate_channels(c as usize) as u64;
            n * m * (mid + co)
        }
        LayerKind::FullyConnected | LayerKind::SqueezeExcite => 0,
    };
    Ok(macs + BN_OPS_PER_ELEMENT * bn_elems)
}
