use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::engine::{simulate, CycleReport};
use super::plan::{fuse_weights, plan_channelwise, plan_depthwise, plan_fuse, plan_im2col};
use super::report::OpClass;
use super::{ArrayConfig, SimError};
use crate::netmodel::{LayerKind, LayerSpec};
use crate::ops::{ConvGeometry, FuseVariant, Tensor};

/// The two fully connected layers of a squeeze-excite block.
#[derive(Debug, Clone, PartialEq)]
pub struct SeWeights {
    /// `[S, C]`
    pub reduce: Tensor,
    /// `[C, S]`
    pub expand: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LayerWeights {
    /// Standard convolution filters `[C', K, K, C]`.
    Conv(Tensor),
    /// Pointwise or fully connected weights `[C', C]`.
    Matmul(Tensor),
    Separable {
        /// `[K, K, C]`
        depthwise: Tensor,
        /// `[C', C]`
        pointwise: Tensor,
        se: Option<SeWeights>,
    },
    Fuse {
        /// `[K, C_row]`
        row: Tensor,
        /// `[K, C_col]`
        col: Tensor,
        /// `[C', 2C/D]`
        pointwise: Tensor,
        se: Option<SeWeights>,
    },
    SqueezeExcite(SeWeights),
}

/// Input feature map and weights for one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerOperands {
    pub input: Tensor,
    pub weights: LayerWeights,
}

fn rand_tensor(shape: Vec<usize>, rng: &mut impl Rng) -> Result<Tensor, SimError> {
    Ok(Tensor::random(shape, rng)?)
}

fn rand_se(channels: usize, width: Option<usize>, rng: &mut impl Rng) -> Result<Option<SeWeights>, SimError> {
    width
        .map(|s| {
            Ok(SeWeights {
                reduce: rand_tensor(vec![s, channels], rng)?,
                expand: rand_tensor(vec![channels, s], rng)?,
            })
        })
        .transpose()
}

impl LayerOperands {
    /// Uniform `[-1, 1]` operands shaped for `layer`, reproducible from `seed`.
    pub fn random(layer: &LayerSpec, seed: u64) -> Result<Self, SimError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::random_with(layer, &mut rng)
    }

    pub fn random_with(layer: &LayerSpec, rng: &mut impl Rng) -> Result<Self, SimError> {
        layer.validate()?;
        let g = layer.geometry;
        let (k, c, co) = (g.kernel, g.channels_in, g.channels_out);
        let input = rand_tensor(vec![g.input_h, g.input_w, c], rng)?;
        let weights = match layer.kind {
            LayerKind::Standard => LayerWeights::Conv(rand_tensor(vec![co, k, k, c], rng)?),
            LayerKind::Pointwise | LayerKind::FullyConnected => LayerWeights::Matmul(rand_tensor(vec![co, c], rng)?),
            LayerKind::DepthwiseSeparable => LayerWeights::Separable {
                depthwise: rand_tensor(vec![k, k, c], rng)?,
                pointwise: rand_tensor(vec![co, c], rng)?,
                se: rand_se(c, layer.se_width, rng)?,
            },
            LayerKind::FuSeFull | LayerKind::FuSeHalf => {
                let v = fuse_variant(layer.kind);
                let mid = v.intermediate_channels(c);
                LayerWeights::Fuse {
                    row: rand_tensor(vec![k, v.row_channels(c).len()], rng)?,
                    col: rand_tensor(vec![k, v.col_channels(c).len()], rng)?,
                    pointwise: rand_tensor(vec![co, mid], rng)?,
                    se: rand_se(mid, layer.se_width, rng)?,
                }
            }
            LayerKind::SqueezeExcite => {
                LayerWeights::SqueezeExcite(rand_se(c, layer.se_width, rng)?.ok_or_else(|| SimError::Unplannable {
                    name: layer.name.clone(),
                    reason: "squeeze-excite layer without a squeeze width".into(),
                })?)
            }
        };
        Ok(Self { input, weights })
    }
}

fn fuse_variant(kind: LayerKind) -> FuseVariant {
    if kind == LayerKind::FuSeHalf {
        FuseVariant::Half
    } else {
        FuseVariant::Full
    }
}

/// One array pass of a layer.
#[derive(Debug, Clone, PartialEq)]
pub struct StageRun {
    pub class: OpClass,
    pub report: CycleReport,
}

/// Result of simulating a whole layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerRun {
    pub output: Tensor,
    pub stages: Vec<StageRun>,
}

impl LayerRun {
    pub fn total_cycles(&self) -> u64 {
        self.stages.iter().map(|s| s.report.total_cycles).sum()
    }

    pub fn mac_events(&self) -> u64 {
        self.stages.iter().map(|s| s.report.mac_events).sum()
    }
}

fn mismatch(layer: &LayerSpec) -> SimError {
    SimError::PlanMismatch(format!("operands do not fit layer `{}` ({})", layer.name, layer.kind))
}

struct Runner<'a> {
    cfg: &'a ArrayConfig,
    name: &'a str,
    stages: Vec<StageRun>,
}

impl Runner<'_> {
    fn sub(&self, kind: LayerKind, g: ConvGeometry) -> LayerSpec {
        LayerSpec::new(self.name, kind, g)
    }

    fn matmul(&mut self, class: OpClass, spec: &LayerSpec, input: &Tensor, w: &Tensor) -> Result<Tensor, SimError> {
        let plan = plan_im2col(spec, self.cfg)?;
        let (out, report) = simulate(&plan, self.cfg, input, w)?;
        self.stages.push(StageRun { class, report });
        Ok(out)
    }

    /// Fully connected layer on the global average of `x`.
    fn fc(&mut self, x: &Tensor, w: &Tensor) -> Result<Tensor, SimError> {
        let (co, c) = w.dims2("fully connected weights")?;
        let pooled = global_pool(x)?;
        let spec = self.sub(LayerKind::FullyConnected, ConvGeometry::new(1, 1, c, 1, co, 1, 0));
        self.matmul(OpClass::Fc, &spec, &pooled, w)
    }

    /// Squeeze-excite: pool, two array passes, then rescale the channels.
    fn se(&mut self, x: &Tensor, se: &SeWeights) -> Result<Tensor, SimError> {
        let z = self.fc(x, &se.reduce)?;
        let e = self.fc(&z, &se.expand)?;
        let (_, _, c) = x.dims3("squeeze-excite input")?;
        let mut out = x.clone();
        for (i, v) in out.data_mut().iter_mut().enumerate() {
            *v *= e.data()[i % c];
        }
        Ok(out)
    }

    fn pointwise(&mut self, x: &Tensor, w: &Tensor) -> Result<Tensor, SimError> {
        let (h, wd, c) = x.dims3("pointwise input")?;
        let (co, _) = w.dims2("pointwise weights")?;
        let spec = self.sub(LayerKind::Pointwise, ConvGeometry::new(h, wd, c, 1, co, 1, 0));
        self.matmul(OpClass::Pointwise, &spec, x, w)
    }
}

/// Mean over the spatial extent: `[H, W, C]` to `[1, 1, C]`.
fn global_pool(x: &Tensor) -> Result<Tensor, SimError> {
    let (h, w, c) = match x.shape().len() {
        3 => x.dims3("pooled input")?,
        _ => (1, 1, x.len()),
    };
    let mut sum = vec![0.0f32; c];
    for (i, v) in x.data().iter().enumerate() {
        sum[i % c] += v;
    }
    let n = (h * w) as f32;
    Ok(Tensor::new(vec![1, 1, c], sum.into_iter().map(|s| s / n).collect())?)
}

/// Simulates every array pass of a layer, chaining the stages functionally.
///
/// Standard convolutions use the channel-wise mapping, depthwise stages the
/// per-channel im2col mapping, FuSe stages the broadcast fold mapping, and
/// pointwise, fully connected and squeeze-excite passes the im2col matmul.
/// Pooling and channel rescaling between passes happen off-array.
pub fn simulate_layer(layer: &LayerSpec, cfg: &ArrayConfig, operands: &LayerOperands) -> Result<LayerRun, SimError> {
    cfg.validate()?;
    layer.validate()?;
    let mut run = Runner {
        cfg,
        name: &layer.name,
        stages: Vec::new(),
    };
    let x = &operands.input;
    let output = match (&operands.weights, layer.kind) {
        (LayerWeights::Conv(w), LayerKind::Standard) => {
            let plan = plan_channelwise(layer, cfg)?;
            let (out, report) = simulate(&plan, cfg, x, w)?;
            run.stages.push(StageRun {
                class: OpClass::Standard,
                report,
            });
            out
        }
        (LayerWeights::Matmul(w), LayerKind::Pointwise) => run.pointwise(x, w)?,
        (LayerWeights::Matmul(w), LayerKind::FullyConnected) => run.fc(x, w)?,
        (LayerWeights::SqueezeExcite(se), LayerKind::SqueezeExcite) => run.se(x, se)?,
        (
            LayerWeights::Separable {
                depthwise,
                pointwise,
                se,
            },
            LayerKind::DepthwiseSeparable,
        ) => {
            let plan = plan_depthwise(layer, cfg)?;
            let (mut mid, report) = simulate(&plan, cfg, x, depthwise)?;
            run.stages.push(StageRun {
                class: OpClass::Depthwise,
                report,
            });
            if let Some(se) = se {
                mid = run.se(&mid, se)?;
            }
            run.pointwise(&mid, pointwise)?
        }
        (
            LayerWeights::Fuse {
                row,
                col,
                pointwise,
                se,
            },
            LayerKind::FuSeFull | LayerKind::FuSeHalf,
        ) => {
            let plan = plan_fuse(layer, cfg)?;
            let (mut mid, report) = simulate(&plan, cfg, x, &fuse_weights(row, col)?)?;
            run.stages.push(StageRun {
                class: OpClass::Fuse,
                report,
            });
            if let Some(se) = se {
                mid = run.se(&mid, se)?;
            }
            run.pointwise(&mid, pointwise)?
        }
        _ => return Err(mismatch(layer)),
    };
    Ok(LayerRun {
        output,
        stages: run.stages,
    })
}
