//! Closed-form latency model.
//!
//! Mirrors the simulator's timing convention: an `r x c` output-stationary
//! fold with contraction depth `T` takes `(r + c - 2) + T + r` cycles, and a
//! broadcast fold of a `K`-tap 1D filter whose taps split into `nph` stride
//! phases takes `(r + c - 2) + K + (nph - 1)(c - 1) + r`. With fold overlap
//! enabled, each fold after the first saves `min(previous drain, own fill)`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::netmodel::{LayerKind, LayerSpec, NetworkSpec};
use crate::ops::{self, FuseVariant, OpsError};
use crate::sim::{overlap_saving, ArrayConfig, OpClass};

#[derive(Debug, Error)]
pub enum CostError {
    #[error("layer `{name}`: {reason}")]
    Unsupported { name: String, reason: String },
    #[error("networks differ at layer {index}: `{base}` vs `{variant}`")]
    Misaligned {
        index: usize,
        base: String,
        variant: String,
    },
    #[error(transparent)]
    Ops(#[from] OpsError),
}

/// Fold sequence accumulator for the overlap-aware path.
#[derive(Default)]
struct Timeline {
    total: u64,
    prev_drain: Option<u64>,
}

impl Timeline {
    fn push(&mut self, r: usize, c: usize, cycles: u64, tail: u64, overlap: bool) {
        self.total += cycles + tail;
        if let (true, Some(d)) = (overlap, self.prev_drain) {
            self.total -= overlap_saving(d, (r + c - 2) as u64);
        }
        self.prev_drain = Some(r as u64);
    }
}

/// Cycles of one output-stationary fold.
pub fn tile_cycles(r: usize, c: usize, t: usize) -> u64 {
    (2 * r + c + t - 2) as u64
}

/// Cycles of one broadcast fold.
pub fn fuse_fold_cycles(r: usize, c: usize, k: usize, phases: usize) -> u64 {
    (2 * r + phases * (c - 1) + k - 1) as u64
}

fn tiles(total: usize, size: usize) -> impl Iterator<Item = usize> {
    (0..total).step_by(size).map(move |s| size.min(total - s))
}

/// `P x T` by `T x F` product; zero when the product is empty.
pub fn matmul_cycles(p: usize, t: usize, f: usize, cfg: &ArrayConfig) -> u64 {
    if p == 0 || f == 0 || t == 0 {
        return 0;
    }
    if cfg.overlap_folds {
        let mut tl = Timeline::default();
        matmul_timeline(p, t, f, cfg, &mut tl);
        return tl.total;
    }
    let (nr, nc) = (p.div_ceil(cfg.rows) as i128, f.div_ceil(cfg.cols) as i128);
    let total = 2 * nc * p as i128 + nr * f as i128 + nr * nc * (t as i128 - 2);
    total as u64
}

fn matmul_timeline(p: usize, t: usize, f: usize, cfg: &ArrayConfig, tl: &mut Timeline) {
    for r in tiles(p, cfg.rows) {
        for c in tiles(f, cfg.cols) {
            tl.push(r, c, tile_cycles(r, c, t), 0, true);
        }
    }
}

/// Depthwise stage lowered per channel onto single-column folds.
pub fn depthwise_cycles(n: usize, m: usize, c: usize, k: usize, cfg: &ArrayConfig) -> u64 {
    if !cfg.overlap_folds {
        let one_col = ArrayConfig { cols: 1, ..*cfg };
        return c as u64 * matmul_cycles(n * m, k * k, 1, &one_col);
    }
    let mut tl = Timeline::default();
    for _ in 0..c {
        for r in tiles(n * m, cfg.rows) {
            tl.push(r, 1, tile_cycles(r, 1, k * k), 0, true);
        }
    }
    tl.total
}

/// Standard convolution mapped as channel-wise dot products.
pub fn channelwise_cycles(n: usize, m: usize, c: usize, k: usize, co: usize, cfg: &ArrayConfig) -> u64 {
    let taps = k * k;
    let tree = crate::sim::tree_depth(taps);
    let p = n * m;
    if !cfg.overlap_folds {
        let (nr, nc) = (p.div_ceil(cfg.rows) as u64, co.div_ceil(cfg.cols) as u64);
        return taps as u64 * matmul_cycles(p, c, co, cfg) + nr * nc * tree;
    }
    let mut tl = Timeline::default();
    for r in tiles(p, cfg.rows) {
        for cw in tiles(co, cfg.cols) {
            for tap in 0..taps {
                let tail = if tap + 1 == taps { tree } else { 0 };
                tl.push(r, cw, tile_cycles(r, cw, c), tail, true);
            }
        }
    }
    tl.total
}

/// One 1D filter stage: `lines` output lines of `outs` positions for each
/// of `channels` channels.
fn fuse_stage(lines: usize, outs: usize, channels: usize, k: usize, s: usize, cfg: &ArrayConfig, tl: &mut Timeline) {
    let nph = s.min(k);
    let (sr, sc) = (cfg.rows, cfg.cols);
    if !cfg.overlap_folds {
        let nct = outs.div_ceil(sc) as u64;
        let (outs, lines_u, ch) = (outs as u64, lines as u64, channels as u64);
        let (nph, k) = (nph as u64, k as u64);
        let cycles = if lines <= sr {
            let groups = channels.div_ceil(sr / lines) as u64;
            2 * nct * lines_u * ch + groups * nph * (outs - nct) + groups * nct * (k - 1)
        } else {
            let nr = lines.div_ceil(sr) as u64;
            ch * (2 * nct * lines_u + nr * nph * (outs - nct) + nr * nct * (k - 1))
        };
        tl.total += cycles;
        return;
    }
    let push_rows = |r: usize, tl: &mut Timeline| {
        for c in tiles(outs, sc) {
            tl.push(r, c, fuse_fold_cycles(r, c, k, nph), 0, true);
        }
    };
    if lines <= sr {
        let per_fold = sr / lines;
        for chs in tiles(channels, per_fold) {
            push_rows(chs * lines, tl);
        }
    } else {
        for _ in 0..channels {
            for r in tiles(lines, sr) {
                push_rows(r, tl);
            }
        }
    }
}

/// Row and column filter stages of a FuSe layer.
pub fn fuse_cycles(layer: &LayerSpec, variant: FuseVariant, cfg: &ArrayConfig) -> u64 {
    let g = layer.geometry;
    let (n, m) = (g.out_h(), g.out_w());
    let rows = variant.row_channels(g.channels_in).len();
    let cols = variant.col_channels(g.channels_in).len();
    let mut tl = Timeline::default();
    fuse_stage(n, m, rows, g.kernel, g.stride, cfg, &mut tl);
    fuse_stage(m, n, cols, g.kernel, g.stride, cfg, &mut tl);
    tl.total
}

fn se_stages(channels: usize, width: Option<usize>, cfg: &ArrayConfig, out: &mut Vec<(OpClass, u64)>) {
    if let Some(s) = width {
        out.push((OpClass::Fc, matmul_cycles(1, channels, s, cfg)));
        out.push((OpClass::Fc, matmul_cycles(1, s, channels, cfg)));
    }
}

/// Cycles of each array pass of a layer, in the order the simulator runs them.
pub fn stage_cycles(layer: &LayerSpec, cfg: &ArrayConfig) -> Result<Vec<(OpClass, u64)>, CostError> {
    layer.validate()?;
    if cfg.rows == 0 || cfg.cols == 0 {
        return Err(CostError::Unsupported {
            name: layer.name.clone(),
            reason: format!("array {} has no processing elements", cfg.label()),
        });
    }
    let g = layer.geometry;
    let (n, m, c, k, co) = (g.out_h(), g.out_w(), g.channels_in, g.kernel, g.channels_out);
    let mut out = Vec::new();
    match layer.kind {
        LayerKind::Standard => out.push((OpClass::Standard, channelwise_cycles(n, m, c, k, co, cfg))),
        LayerKind::Pointwise => out.push((OpClass::Pointwise, matmul_cycles(n * m, c, co, cfg))),
        LayerKind::FullyConnected => out.push((OpClass::Fc, matmul_cycles(1, c, co, cfg))),
        LayerKind::SqueezeExcite => se_stages(c, layer.se_width, cfg, &mut out),
        LayerKind::DepthwiseSeparable => {
            out.push((OpClass::Depthwise, depthwise_cycles(n, m, c, k, cfg)));
            se_stages(c, layer.se_width, cfg, &mut out);
            out.push((OpClass::Pointwise, matmul_cycles(n * m, c, co, cfg)));
        }
        LayerKind::FuSeFull | LayerKind::FuSeHalf => {
            if !cfg.broadcast_enabled {
                return Err(CostError::Unsupported {
                    name: layer.name.clone(),
                    reason: "FuSe stages need row broadcast links".into(),
                });
            }
            let variant = if layer.kind == LayerKind::FuSeHalf {
                FuseVariant::Half
            } else {
                FuseVariant::Full
            };
            let mid = variant.intermediate_channels(c);
            out.push((OpClass::Fuse, fuse_cycles(layer, variant, cfg)));
            se_stages(mid, layer.se_width, cfg, &mut out);
            out.push((OpClass::Pointwise, matmul_cycles(n * m, mid, co, cfg)));
        }
    }
    Ok(out)
}

/// Total cycles of a layer under the simulator's convention.
pub fn analytical_cycles(layer: &LayerSpec, cfg: &ArrayConfig) -> Result<u64, CostError> {
    Ok(stage_cycles(layer, cfg)?.iter().map(|&(_, c)| c).sum())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerCost {
    pub name: String,
    pub kind: LayerKind,
    pub macs: u64,
    pub params: u64,
    pub analytical_cycles: u64,
    pub stages: Vec<(OpClass, u64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub network: String,
    pub array_size: String,
    pub layers: Vec<LayerCost>,
    pub total_macs: u64,
    pub total_params: u64,
    pub total_cycles: u64,
    /// Share of total cycles per operator class; every class is present.
    pub distribution: BTreeMap<OpClass, f64>,
}

impl CostBreakdown {
    pub fn share(&self, class: OpClass) -> f64 {
        self.distribution.get(&class).copied().unwrap_or(0.0)
    }
}

/// Per-layer costs and the share of cycles spent in each operator class.
pub fn operator_distribution(net: &NetworkSpec, cfg: &ArrayConfig) -> Result<CostBreakdown, CostError> {
    let mut layers = Vec::with_capacity(net.layers.len());
    let mut by_class: BTreeMap<OpClass, u64> = OpClass::ALL.iter().map(|&c| (c, 0)).collect();
    for l in &net.layers {
        let stages = stage_cycles(l, cfg)?;
        for &(class, cycles) in &stages {
            *by_class.entry(class).or_insert(0) += cycles;
        }
        layers.push(LayerCost {
            name: l.name.clone(),
            kind: l.kind,
            macs: ops::count_macs(l)?,
            params: ops::count_params(l)?,
            analytical_cycles: stages.iter().map(|&(_, c)| c).sum(),
            stages,
        });
    }
    let total_cycles: u64 = layers.iter().map(|l| l.analytical_cycles).sum();
    let distribution = by_class
        .into_iter()
        .map(|(class, cycles)| {
            let share = if total_cycles == 0 {
                0.0
            } else {
                cycles as f64 / total_cycles as f64
            };
            (class, share)
        })
        .collect();
    Ok(CostBreakdown {
        network: net.name.clone(),
        array_size: cfg.label(),
        total_macs: layers.iter().map(|l| l.macs).sum(),
        total_params: layers.iter().map(|l| l.params).sum(),
        total_cycles,
        layers,
        distribution,
    })
}

/// Latency of a replaced layer or block before and after transformation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Speedup {
    pub name: String,
    pub baseline_cycles: u64,
    pub variant_cycles: u64,
    pub speedup: f64,
}

impl Speedup {
    pub fn new(name: String, baseline_cycles: u64, variant_cycles: u64) -> Self {
        Self {
            name,
            speedup: ratio(baseline_cycles, variant_cycles),
            baseline_cycles,
            variant_cycles,
        }
    }
}

fn ratio(base: u64, variant: u64) -> f64 {
    if variant == 0 {
        if base == 0 {
            1.0
        } else {
            f64::INFINITY
        }
    } else {
        base as f64 / variant as f64
    }
}

fn aligned_cycles(base: &NetworkSpec, variant: &NetworkSpec, cfg: &ArrayConfig) -> Result<Vec<(usize, u64, u64)>, CostError> {
    if base.layers.len() != variant.layers.len() {
        return Err(CostError::Misaligned {
            index: base.layers.len().min(variant.layers.len()),
            base: base.name.clone(),
            variant: variant.name.clone(),
        });
    }
    base.layers
        .iter()
        .zip(&variant.layers)
        .enumerate()
        .map(|(i, (b, v))| {
            if b.name != v.name {
                return Err(CostError::Misaligned {
                    index: i,
                    base: b.name.clone(),
                    variant: v.name.clone(),
                });
            }
            Ok((i, analytical_cycles(b, cfg)?, analytical_cycles(v, cfg)?))
        })
        .collect()
}

/// Whole-network speedup of `variant` over `base`.
pub fn network_speedup(base: &NetworkSpec, variant: &NetworkSpec, cfg: &ArrayConfig) -> Result<f64, CostError> {
    let rows = aligned_cycles(base, variant, cfg)?;
    let (b, v) = rows.iter().fold((0, 0), |(b, v), &(_, x, y)| (b + x, v + y));
    Ok(ratio(b, v))
}

/// Speedup of every layer whose kind the transformation changed.
pub fn layer_speedups(base: &NetworkSpec, variant: &NetworkSpec, cfg: &ArrayConfig) -> Result<Vec<Speedup>, CostError> {
    Ok(aligned_cycles(base, variant, cfg)?
        .into_iter()
        .filter(|&(i, _, _)| base.layers[i].kind != variant.layers[i].kind)
        .map(|(i, b, v)| Speedup::new(base.layers[i].name.clone(), b, v))
        .collect())
}

/// Speedup per block (layers sharing a name prefix before `.`), for blocks
/// that contain a replaced layer. An inverted residual block's expansion
/// layer is counted with its depthwise separable layer.
pub fn block_speedups(base: &NetworkSpec, variant: &NetworkSpec, cfg: &ArrayConfig) -> Result<Vec<Speedup>, CostError> {
    let rows = aligned_cycles(base, variant, cfg)?;
    let mut blocks: Vec<(String, u64, u64, bool)> = Vec::new();
    for (i, b, v) in rows {
        let block = base.layers[i].block();
        let changed = base.layers[i].kind != variant.layers[i].kind;
        match blocks.last_mut() {
            Some(last) if last.0 == block => {
                last.1 += b;
                last.2 += v;
                last.3 |= changed;
            }
            _ => blocks.push((block.to_string(), b, v, changed)),
        }
    }
    Ok(blocks
        .into_iter()
        .filter(|b| b.3)
        .map(|(name, b, v, _)| Speedup::new(name, b, v))
        .collect())
}
