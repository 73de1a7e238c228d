//! Network descriptions and the FuSe transformation pass.

mod builtin;
mod config;
mod transform;

pub use builtin::{builtin, builtin_names, BUILTIN_DIR_ENV};
pub use config::{load_network, parse_network, write_network};
pub use transform::{transform_fuse, transform_fuse_on, Fraction, Transformed};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ops::{self, ConvGeometry, OpsError};

#[derive(Debug, Error)]
pub enum NetError {
    #[error("line {line}: unknown layer kind `{kind}`")]
    UnknownKind { line: usize, kind: String },
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("layer {index} ({name}): input {got:?} does not match the previous output {expected:?}")]
    ShapeChain {
        index: usize,
        name: String,
        expected: [usize; 3],
        got: [usize; 3],
    },
    #[error("layer {index} ({name}): {source}")]
    Layer {
        index: usize,
        name: String,
        #[source]
        source: OpsError,
    },
    #[error("unknown builtin network `{0}`")]
    UnknownNetwork(String),
    #[error("network `{0}` has no depthwise separable layers to replace")]
    NoDepthwise(String),
    #[error("latency estimate failed: {0}")]
    Estimate(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LayerKind {
    Standard,
    DepthwiseSeparable,
    FuSeFull,
    FuSeHalf,
    Pointwise,
    FullyConnected,
    SqueezeExcite,
}

impl LayerKind {
    pub const ALL: [LayerKind; 7] = [
        LayerKind::Standard,
        LayerKind::DepthwiseSeparable,
        LayerKind::FuSeFull,
        LayerKind::FuSeHalf,
        LayerKind::Pointwise,
        LayerKind::FullyConnected,
        LayerKind::SqueezeExcite,
    ];

    /// Token used in network files and reports.
    pub fn token(self) -> &'static str {
        match self {
            LayerKind::Standard => "standard",
            LayerKind::DepthwiseSeparable => "dwsep",
            LayerKind::FuSeFull => "fuse_full",
            LayerKind::FuSeHalf => "fuse_half",
            LayerKind::Pointwise => "pointwise",
            LayerKind::FullyConnected => "fc",
            LayerKind::SqueezeExcite => "se",
        }
    }

    pub fn is_fuse(self) -> bool {
        matches!(self, LayerKind::FuSeFull | LayerKind::FuSeHalf)
    }
}

impl fmt::Display for LayerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for LayerKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let k = match s.to_ascii_lowercase().as_str() {
            "standard" | "conv" => LayerKind::Standard,
            "dwsep" | "depthwise_separable" => LayerKind::DepthwiseSeparable,
            "fuse_full" => LayerKind::FuSeFull,
            "fuse_half" => LayerKind::FuSeHalf,
            "pointwise" | "pw" => LayerKind::Pointwise,
            "fc" | "fully_connected" => LayerKind::FullyConnected,
            "se" | "squeeze_excite" => LayerKind::SqueezeExcite,
            other => return Err(other.to_string()),
        };
        Ok(k)
    }
}

/// One network layer.
///
/// A `DepthwiseSeparable` layer is the depthwise stage and its pointwise
/// projection; `se_width` optionally inserts a squeeze-excite block between
/// them. FuSe kinds replace the depthwise stage with 1D row and column
/// filters. Fully connected layers pool their input globally, so only the
/// channel count has to chain.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub name: String,
    pub kind: LayerKind,
    pub geometry: ConvGeometry,
    pub se_width: Option<usize>,
}

impl LayerSpec {
    pub fn new(name: impl Into<String>, kind: LayerKind, geometry: ConvGeometry) -> Self {
        Self {
            name: name.into(),
            kind,
            geometry,
            se_width: None,
        }
    }

    pub fn with_se(mut self, width: usize) -> Self {
        self.se_width = Some(width);
        self
    }

    pub fn validate(&self) -> Result<(), OpsError> {
        let g = &self.geometry;
        g.validate()?;
        let unit = |what: &str| -> Result<(), OpsError> {
            if g.kernel != 1 || g.stride != 1 || g.padding != 0 {
                return Err(OpsError::InvalidGeometry(format!(
                    "{what} layers need K=1, stride 1, no padding"
                )));
            }
            Ok(())
        };
        match self.kind {
            LayerKind::Pointwise | LayerKind::FullyConnected => unit(self.kind.token())?,
            LayerKind::SqueezeExcite => {
                unit("squeeze-excite")?;
                if g.channels_out != g.channels_in {
                    return Err(OpsError::InvalidGeometry(
                        "squeeze-excite keeps the channel count".into(),
                    ));
                }
                if self.se_width.unwrap_or(0) == 0 {
                    return Err(OpsError::InvalidGeometry(
                        "squeeze-excite needs a squeeze width".into(),
                    ));
                }
            }
            LayerKind::FuSeHalf => ops::FuseVariant::Half.check_channels(g.channels_in)?,
            _ => {}
        }
        if self.se_width == Some(0) {
            return Err(OpsError::InvalidGeometry("squeeze width must be at least 1".into()));
        }
        Ok(())
    }

    pub fn input_shape(&self) -> [usize; 3] {
        let g = &self.geometry;
        [g.input_h, g.input_w, g.channels_in]
    }

    pub fn output_shape(&self) -> [usize; 3] {
        let g = &self.geometry;
        match self.kind {
            LayerKind::FullyConnected => [1, 1, g.channels_out],
            _ => [g.out_h(), g.out_w(), g.channels_out],
        }
    }

    /// Name of the block this layer belongs to: the part of the name before
    /// the first `.` (`b3.expand` and `b3.dw` share block `b3`).
    pub fn block(&self) -> &str {
        self.name.split('.').next().unwrap_or(&self.name)
    }

    pub fn macs(&self) -> Result<u64, OpsError> {
        ops::count_macs(self)
    }

    pub fn params(&self) -> Result<u64, OpsError> {
        ops::count_params(self)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub name: String,
    pub input: [usize; 3],
    pub layers: Vec<LayerSpec>,
}

impl NetworkSpec {
    /// Builds a network and checks that it is shape-chained.
    pub fn new(name: impl Into<String>, input: [usize; 3], layers: Vec<LayerSpec>) -> Result<Self, NetError> {
        let net = Self {
            name: name.into(),
            input,
            layers,
        };
        net.validate()?;
        Ok(net)
    }

    pub fn validate(&self) -> Result<(), NetError> {
        let mut prev = self.input;
        for (index, layer) in self.layers.iter().enumerate() {
            layer.validate().map_err(|source| NetError::Layer {
                index,
                name: layer.name.clone(),
                source,
            })?;
            let got = layer.input_shape();
            let chained = match layer.kind {
                LayerKind::FullyConnected => got[2] == prev[2],
                _ => got == prev,
            };
            if !chained {
                return Err(NetError::ShapeChain {
                    index,
                    name: layer.name.clone(),
                    expected: prev,
                    got,
                });
            }
            prev = layer.output_shape();
        }
        Ok(())
    }

    pub fn output_shape(&self) -> [usize; 3] {
        self.layers.last().map_or(self.input, LayerSpec::output_shape)
    }

    fn total(&self, f: impl Fn(&LayerSpec) -> Result<u64, OpsError>) -> Result<u64, NetError> {
        self.layers
            .iter()
            .enumerate()
            .map(|(index, l)| {
                f(l).map_err(|source| NetError::Layer {
                    index,
                    name: l.name.clone(),
                    source,
                })
            })
            .sum()
    }

    pub fn total_macs(&self) -> Result<u64, NetError> {
        self.total(ops::count_macs)
    }

    pub fn total_params(&self) -> Result<u64, NetError> {
        self.total(ops::count_params)
    }

    pub fn total_profiled_macs(&self) -> Result<u64, NetError> {
        self.total(ops::profiled_macs)
    }

    pub fn depthwise_count(&self) -> usize {
        self.layers
            .iter()
            .filter(|l| l.kind == LayerKind::DepthwiseSeparable)
            .count()
    }
}
