use serde::{Deserialize, Serialize};

use super::{ArrayConfig, SimError};
use crate::netmodel::{LayerKind, LayerSpec};
use crate::ops::{ConvGeometry, FuseVariant, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Strategy {
    Im2colMatmul,
    ChannelwiseDotProduct,
    FuSeRowFold,
}

/// How a PE sources its second operand.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PeMode {
    /// From the PE above, over the vertical systolic link.
    Systolic,
    /// From the row broadcast wire.
    BroadcastRow,
}

/// One slot of an operand stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OperandRef {
    /// Nothing is injected this cycle.
    Idle,
    /// A padding zero. Multiplying it still counts as a MAC.
    Zero,
    Input(u32),
    Weight(u32),
}

/// Values injected at an array edge, one per cycle from `start`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stream {
    pub start: u64,
    pub values: Vec<OperandRef>,
}

impl Stream {
    pub fn new(start: u64, values: Vec<OperandRef>) -> Self {
        Self { start, values }
    }

    /// Operand injected at `cycle`.
    #[inline]
    pub fn at(&self, cycle: u64) -> OperandRef {
        match cycle.checked_sub(self.start) {
            Some(t) if (t as usize) < self.values.len() => self.values[t as usize],
            _ => OperandRef::Idle,
        }
    }

    /// First cycle after the last injected slot.
    pub fn end(&self) -> u64 {
        self.start + self.values.len() as u64
    }
}

/// One scheduling round on the top-left `rows x cols` corner of the array.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fold {
    pub rows: usize,
    pub cols: usize,
    pub mode: PeMode,
    /// Per active row, entering column 0 and moving east one PE per cycle.
    pub west: Vec<Stream>,
    /// Systolic mode: per active column, entering row 0 and moving south.
    pub north: Vec<Stream>,
    /// Broadcast mode: per active row, seen by the whole row in the same cycle.
    pub broadcast: Vec<Stream>,
    /// Output element each PE accumulates, row-major over the active region.
    pub targets: Vec<usize>,
    /// MACs every active PE performs.
    pub depth: u32,
    /// Partial-sum buffer the fold drains into.
    pub slot: usize,
    /// Cycles spent after the drain reducing partial sums.
    pub tail: u64,
}

/// A layer stage lowered onto the array.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MappingPlan {
    pub strategy: Strategy,
    pub folds: Vec<Fold>,
    pub output_shape: Vec<usize>,
    /// Partial-sum buffers summed by the adder tree; 1 when there is none.
    pub slots: usize,
    pub input_len: usize,
    pub weight_len: usize,
}

impl MappingPlan {
    /// A plan with no folds; it simulates to zero cycles and an empty output.
    pub fn empty(strategy: Strategy) -> Self {
        Self {
            strategy,
            folds: Vec::new(),
            output_shape: vec![0],
            slots: 1,
            input_len: 0,
            weight_len: 0,
        }
    }

    pub fn output_len(&self) -> usize {
        self.output_shape.iter().product()
    }

    /// Checks the structural invariants: streams match each fold's extent
    /// and every output element is drained exactly once per partial slot.
    pub fn validate(&self, cfg: &ArrayConfig) -> Result<(), SimError> {
        let mismatch = |msg: String| Err(SimError::PlanMismatch(msg));
        let out_len = self.output_len();
        let mut seen = vec![0u8; if self.folds.is_empty() { 0 } else { out_len * self.slots }];
        for (f, fold) in self.folds.iter().enumerate() {
            if fold.rows == 0 || fold.cols == 0 || fold.rows > cfg.rows || fold.cols > cfg.cols {
                return mismatch(format!(
                    "fold {f} is {}x{} on a {} array",
                    fold.rows,
                    fold.cols,
                    cfg.label()
                ));
            }
            let (north, broadcast) = match fold.mode {
                PeMode::Systolic => (fold.cols, 0),
                PeMode::BroadcastRow => {
                    if !cfg.broadcast_enabled {
                        return Err(SimError::BroadcastDisabled(format!("fold {f}")));
                    }
                    (0, fold.rows)
                }
            };
            if fold.west.len() != fold.rows || fold.north.len() != north || fold.broadcast.len() != broadcast {
                return mismatch(format!("fold {f} has streams that do not match its {:?} mode", fold.mode));
            }
            if fold.targets.len() != fold.rows * fold.cols {
                return mismatch(format!("fold {f} assigns {} of {} PEs", fold.targets.len(), fold.rows * fold.cols));
            }
            if fold.slot >= self.slots {
                return mismatch(format!("fold {f} drains into slot {} of {}", fold.slot, self.slots));
            }
            for &t in &fold.targets {
                if t >= out_len {
                    return mismatch(format!("fold {f} targets element {t} of {out_len}"));
                }
                let s = &mut seen[fold.slot * out_len + t];
                if *s != 0 {
                    return mismatch(format!("output element {t} is drained twice"));
                }
                *s = 1;
            }
        }
        if let Some(missing) = seen.iter().position(|&s| s == 0) {
            return mismatch(format!(
                "output element {} of slot {} is never drained",
                missing % out_len,
                missing / out_len
            ));
        }
        Ok(())
    }
}

fn unplannable(layer: &LayerSpec, reason: impl Into<String>) -> SimError {
    SimError::Unplannable {
        name: layer.name.clone(),
        reason: reason.into(),
    }
}

/// `ceil(log2 n)`: depth of a binary adder tree over `n` values.
pub(crate) fn tree_depth(n: usize) -> u64 {
    if n <= 1 {
        0
    } else {
        (usize::BITS - (n - 1).leading_zeros()) as u64
    }
}

/// Input element `(y, x, c)` of an `[H, W, C]` map, or a padding zero.
#[inline]
fn pixel(g: &ConvGeometry, y: isize, x: isize, c: usize) -> OperandRef {
    if y < 0 || x < 0 || y as usize >= g.input_h || x as usize >= g.input_w {
        OperandRef::Zero
    } else {
        OperandRef::Input(((y as usize * g.input_w + x as usize) * g.channels_in + c) as u32)
    }
}

/// Top-left input coordinate of output pixel `p` (row-major over `N x M`).
#[inline]
fn origin(g: &ConvGeometry, p: usize) -> (isize, isize) {
    let m_out = g.out_w();
    let (n, m) = (p / m_out, p % m_out);
    (
        (n * g.stride) as isize - g.padding as isize,
        (m * g.stride) as isize - g.padding as isize,
    )
}

/// Output-stationary tiling of a `P x T` by `T x F` product. Row tiles are
/// the outer loop. `a(p, t)` and `b(t, f)` name the operands; output element
/// `(p, f)` is `p * F + f`.
fn matmul_folds(
    p_total: usize,
    t_total: usize,
    f_total: usize,
    cfg: &ArrayConfig,
    slot: usize,
    a: impl Fn(usize, usize) -> OperandRef,
    b: impl Fn(usize, usize) -> OperandRef,
    folds: &mut Vec<Fold>,
) {
    for p0 in (0..p_total).step_by(cfg.rows) {
        let r = cfg.rows.min(p_total - p0);
        for f0 in (0..f_total).step_by(cfg.cols) {
            let c = cfg.cols.min(f_total - f0);
            let west = (0..r)
                .map(|i| Stream::new(i as u64, (0..t_total).map(|t| a(p0 + i, t)).collect()))
                .collect();
            let north = (0..c)
                .map(|j| Stream::new(j as u64, (0..t_total).map(|t| b(t, f0 + j)).collect()))
                .collect();
            let targets = (0..r)
                .flat_map(|i| (0..c).map(move |j| (p0 + i) * f_total + f0 + j))
                .collect();
            folds.push(Fold {
                rows: r,
                cols: c,
                mode: PeMode::Systolic,
                west,
                north,
                broadcast: Vec::new(),
                targets,
                depth: t_total as u32,
                slot,
                tail: 0,
            });
        }
    }
}

/// Lowers a standard, pointwise or fully connected layer to one matrix
/// product. Filters are `[C', K, K, C]` (or `[C', C]`); a fully connected
/// layer reads a `[1, 1, C]` input.
pub fn plan_im2col(layer: &LayerSpec, cfg: &ArrayConfig) -> Result<MappingPlan, SimError> {
    cfg.validate()?;
    layer.validate()?;
    let g = layer.geometry;
    let (k, c, co) = (g.kernel, g.channels_in, g.channels_out);
    let mut folds = Vec::new();
    let (p_total, input_len, output_shape) = match layer.kind {
        LayerKind::Standard | LayerKind::Pointwise => {
            let (n, m) = (g.out_h(), g.out_w());
            (n * m, g.input_h * g.input_w * c, vec![n, m, co])
        }
        LayerKind::FullyConnected => (1, c, vec![1, 1, co]),
        other => return Err(unplannable(layer, format!("{other} layers are not a single matrix product"))),
    };
    let t_total = k * k * c;
    let b = |t: usize, f: usize| OperandRef::Weight((f * t_total + t) as u32);
    if layer.kind == LayerKind::FullyConnected {
        matmul_folds(1, c, co, cfg, 0, |_, t| OperandRef::Input(t as u32), b, &mut folds);
    } else {
        let a = |p: usize, t: usize| {
            let (y0, x0) = origin(&g, p);
            let (i, rest) = (t / (k * c), t % (k * c));
            let (j, ch) = (rest / c, rest % c);
            pixel(&g, y0 + i as isize, x0 + j as isize, ch)
        };
        matmul_folds(p_total, t_total, co, cfg, 0, a, b, &mut folds);
    }
    Ok(MappingPlan {
        strategy: Strategy::Im2colMatmul,
        folds,
        output_shape,
        slots: 1,
        input_len,
        weight_len: co * t_total,
    })
}

/// Depthwise stage lowered channel by channel: each channel is an
/// `NM x K²` by `K² x 1` product occupying a single array column.
/// Filters are `[K, K, C]`.
pub fn plan_depthwise(layer: &LayerSpec, cfg: &ArrayConfig) -> Result<MappingPlan, SimError> {
    cfg.validate()?;
    layer.geometry.validate()?;
    if !matches!(layer.kind, LayerKind::DepthwiseSeparable | LayerKind::Standard) {
        return Err(unplannable(layer, "no depthwise stage"));
    }
    let g = layer.geometry;
    let (k, c) = (g.kernel, g.channels_in);
    let (n, m) = (g.out_h(), g.out_w());
    let mut folds = Vec::new();
    let mut per_channel = Vec::new();
    for ch in 0..c {
        per_channel.clear();
        let a = |p: usize, t: usize| {
            let (y0, x0) = origin(&g, p);
            pixel(&g, y0 + (t / k) as isize, x0 + (t % k) as isize, ch)
        };
        let b = |t: usize, _| OperandRef::Weight((t * c + ch) as u32);
        matmul_folds(n * m, k * k, 1, cfg, 0, a, b, &mut per_channel);
        for mut fold in per_channel.drain(..) {
            // Output element p of this channel lives at p * C + ch.
            for t in &mut fold.targets {
                *t = *t * c + ch;
            }
            folds.push(fold);
        }
    }
    Ok(MappingPlan {
        strategy: Strategy::Im2colMatmul,
        folds,
        output_shape: vec![n, m, c],
        slots: 1,
        input_len: g.input_h * g.input_w * c,
        weight_len: k * k * c,
    })
}

/// Standard convolution as channel-wise dot products.
///
/// For each output tile the `K²` kernel positions run as separate folds
/// whose contraction is over the `C` input channels. Their partial sums
/// land in `K²` buffers and an adder tree of depth `ceil(log2 K²)` reduces
/// them after the tile's last fold.
pub fn plan_channelwise(layer: &LayerSpec, cfg: &ArrayConfig) -> Result<MappingPlan, SimError> {
    cfg.validate()?;
    layer.validate()?;
    if layer.kind != LayerKind::Standard {
        let reason = if matches!(layer.kind, LayerKind::DepthwiseSeparable) {
            "depthwise convolution has no computation spanning channels".to_string()
        } else {
            format!("{} layers are not standard convolutions", layer.kind)
        };
        return Err(unplannable(layer, reason));
    }
    let g = layer.geometry;
    let (k, c, co) = (g.kernel, g.channels_in, g.channels_out);
    let (n, m) = (g.out_h(), g.out_w());
    let p_total = n * m;
    let taps = k * k;
    let tail = tree_depth(taps);
    let t_total = taps * c;
    let mut folds = Vec::new();
    let mut group = Vec::new();
    for p0 in (0..p_total).step_by(cfg.rows) {
        let r = cfg.rows.min(p_total - p0);
        let tile_cfg = ArrayConfig { rows: r, ..*cfg };
        for f0 in (0..co).step_by(cfg.cols) {
            let cw = cfg.cols.min(co - f0);
            let tile_cfg = ArrayConfig { cols: cw, ..tile_cfg };
            for tap in 0..taps {
                let (i, j) = (tap / k, tap % k);
                let a = |p: usize, ch: usize| {
                    let (y0, x0) = origin(&g, p0 + p);
                    pixel(&g, y0 + i as isize, x0 + j as isize, ch)
                };
                let b = |ch: usize, f: usize| OperandRef::Weight(((f0 + f) * t_total + tap * c + ch) as u32);
                matmul_folds(r, c, cw, &tile_cfg, tap, a, b, &mut group);
                for mut fold in group.drain(..) {
                    for t in &mut fold.targets {
                        let (p, f) = (*t / cw, *t % cw);
                        *t = (p0 + p) * co + f0 + f;
                    }
                    if tap + 1 == taps {
                        fold.tail = tail;
                    }
                    folds.push(fold);
                }
            }
        }
    }
    Ok(MappingPlan {
        strategy: Strategy::ChannelwiseDotProduct,
        folds,
        output_shape: vec![n, m, co],
        slots: taps,
        input_len: g.input_h * g.input_w * c,
        weight_len: co * t_total,
    })
}

/// Orientation of a 1D filter stage.
#[derive(Clone, Copy)]
enum Axis {
    /// Filters slide along the width of the centre input row of each output row.
    Row,
    /// Filters slide along the height of the centre input column of each output column.
    Col,
}

struct Stage1d {
    axis: Axis,
    /// First input channel the stage reads.
    in_channel0: usize,
    /// First intermediate channel the stage writes.
    out_channel0: usize,
    channels: usize,
    /// Offset of the `[K, channels]` filters in the weight buffer.
    weight0: usize,
}

/// Folds of one 1D filter stage with row-broadcast weights.
///
/// Array row `i` holds one (channel, output line) pair and column `q` the
/// output position `m0 + c - 1 - q` along the line. The input line streams
/// in from the west, skewed by one cycle per row, while the row's taps are
/// broadcast one per cycle. A stride `s` splits the taps into phases
/// `k = phi (mod s)`; each phase restreams its own input subsequence.
fn fuse_stage_folds(g: &ConvGeometry, mid: usize, stage: &Stage1d, cfg: &ArrayConfig, folds: &mut Vec<Fold>) {
    let (k, s) = (g.kernel, g.stride);
    let (n_out, m_out) = (g.out_h(), g.out_w());
    // Lines mapped onto array rows and outputs per line.
    let (lines, outs) = match stage.axis {
        Axis::Row => (n_out, m_out),
        Axis::Col => (m_out, n_out),
    };
    let phases: Vec<usize> = (0..s.min(k)).collect();
    let taps_of = |phi: usize| (phi..k).step_by(s);
    let fold_for = |rows: &[(usize, usize)], o0: usize, c: usize| -> Fold {
        let r = rows.len();
        let mut west = Vec::with_capacity(r);
        let mut broadcast = Vec::with_capacity(r);
        let mut targets = Vec::with_capacity(r * c);
        for (i, &(ch, line)) in rows.iter().enumerate() {
            let centre = g.centre_offset(line);
            let in_ch = stage.in_channel0 + ch;
            let mut wv = Vec::new();
            let mut bv = Vec::new();
            for &phi in &phases {
                let taps: Vec<usize> = taps_of(phi).collect();
                for u in o0..o0 + c - 1 + taps.len() {
                    let along = (s * u + phi) as isize - g.padding as isize;
                    wv.push(match stage.axis {
                        Axis::Row => pixel(g, centre, along, in_ch),
                        Axis::Col => pixel(g, along, centre, in_ch),
                    });
                }
                bv.extend(std::iter::repeat_n(OperandRef::Idle, c - 1));
                bv.extend(
                    taps.iter()
                        .map(|&tap| OperandRef::Weight((stage.weight0 + tap * stage.channels + ch) as u32)),
                );
            }
            west.push(Stream::new(i as u64, wv));
            broadcast.push(Stream::new(i as u64, bv));
            for q in 0..c {
                let pos = o0 + c - 1 - q;
                let (n, m) = match stage.axis {
                    Axis::Row => (line, pos),
                    Axis::Col => (pos, line),
                };
                targets.push((n * m_out + m) * mid + stage.out_channel0 + ch);
            }
        }
        Fold {
            rows: r,
            cols: c,
            mode: PeMode::BroadcastRow,
            west,
            north: Vec::new(),
            broadcast,
            targets,
            depth: k as u32,
            slot: 0,
            tail: 0,
        }
    };
    let col_tiles = |rows: &[(usize, usize)], folds: &mut Vec<Fold>| {
        for o0 in (0..outs).step_by(cfg.cols) {
            folds.push(fold_for(rows, o0, cfg.cols.min(outs - o0)));
        }
    };
    if lines <= cfg.rows {
        // Several channels share a fold.
        let per_fold = cfg.rows / lines;
        for ch0 in (0..stage.channels).step_by(per_fold) {
            let chs = ch0..stage.channels.min(ch0 + per_fold);
            let rows: Vec<(usize, usize)> = chs.flat_map(|ch| (0..lines).map(move |l| (ch, l))).collect();
            col_tiles(&rows, folds);
        }
    } else {
        for ch in 0..stage.channels {
            for l0 in (0..lines).step_by(cfg.rows) {
                let rows: Vec<(usize, usize)> = (l0..lines.min(l0 + cfg.rows)).map(|l| (ch, l)).collect();
                col_tiles(&rows, folds);
            }
        }
    }
}

/// Row and column filter stages of a FuSe layer on the broadcast dataflow.
///
/// The plan writes the `[N, M, 2C/D]` intermediate map. Weights are the
/// row filters `[K, C_row]` followed by the column filters `[K, C_col]`
/// (see [`fuse_weights`]). The pointwise stage is a separate
/// [`plan_im2col`] plan.
pub fn plan_fuse(layer: &LayerSpec, cfg: &ArrayConfig) -> Result<MappingPlan, SimError> {
    cfg.validate()?;
    layer.validate()?;
    let variant = match layer.kind {
        LayerKind::FuSeFull => FuseVariant::Full,
        LayerKind::FuSeHalf => FuseVariant::Half,
        other => return Err(unplannable(layer, format!("{other} is not a FuSe layer"))),
    };
    if !cfg.broadcast_enabled {
        return Err(SimError::BroadcastDisabled(layer.name.clone()));
    }
    let g = layer.geometry;
    let c = g.channels_in;
    let rows = variant.row_channels(c);
    let cols = variant.col_channels(c);
    let mid = variant.intermediate_channels(c);
    let mut folds = Vec::new();
    let row_stage = Stage1d {
        axis: Axis::Row,
        in_channel0: rows.start,
        out_channel0: 0,
        channels: rows.len(),
        weight0: 0,
    };
    let col_stage = Stage1d {
        axis: Axis::Col,
        in_channel0: cols.start,
        out_channel0: rows.len(),
        channels: cols.len(),
        weight0: g.kernel * rows.len(),
    };
    fuse_stage_folds(&g, mid, &row_stage, cfg, &mut folds);
    fuse_stage_folds(&g, mid, &col_stage, cfg, &mut folds);
    Ok(MappingPlan {
        strategy: Strategy::FuSeRowFold,
        folds,
        output_shape: vec![g.out_h(), g.out_w(), mid],
        slots: 1,
        input_len: g.input_h * g.input_w * c,
        weight_len: g.kernel * (rows.len() + cols.len()),
    })
}

/// Weight buffer layout [`plan_fuse`] expects.
pub fn fuse_weights(row: &Tensor, col: &Tensor) -> Result<Tensor, SimError> {
    let mut data = row.data().to_vec();
    data.extend_from_slice(col.data());
    Ok(Tensor::new(vec![data.len()], data)?)
}
