use serde::{Deserialize, Serialize};

use super::plan::{Fold, MappingPlan, OperandRef, PeMode};
use super::{overlap_saving, ArrayConfig, SimError};
use crate::ops::Tensor;

/// Register file of one processing element.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeState {
    pub accumulator: f32,
    /// Operand on the east-moving link.
    pub west: Option<f32>,
    /// Operand on the south-moving link.
    pub north: Option<f32>,
    /// Operand on the row broadcast wire.
    pub broadcast: Option<f32>,
    pub mode: PeMode,
    pub macs: u32,
    pub first_mac: Option<u64>,
}

impl PeState {
    fn new(mode: PeMode) -> Self {
        Self {
            accumulator: 0.0,
            west: None,
            north: None,
            broadcast: None,
            mode,
            macs: 0,
            first_mac: None,
        }
    }

    /// One clock edge: multiply whichever operand pair the mode selects.
    #[inline]
    fn step(&mut self, cycle: u64) -> bool {
        let other = match self.mode {
            PeMode::Systolic => self.north,
            PeMode::BroadcastRow => self.broadcast,
        };
        match (self.west, other) {
            (Some(a), Some(b)) => {
                self.accumulator += a * b;
                self.macs += 1;
                self.first_mac.get_or_insert(cycle);
                true
            }
            _ => false,
        }
    }
}

/// Measured timing of one fold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldStats {
    pub rows: usize,
    pub cols: usize,
    /// Cycles up to and including the last MAC.
    pub compute: u64,
    /// Latest first-MAC cycle over the active PEs: the skew fill.
    pub fill: u64,
    /// Cycles to shift the accumulators out of the bottom edge.
    pub drain: u64,
    pub tail: u64,
    pub macs: u64,
}

impl FoldStats {
    pub fn cycles(&self) -> u64 {
        self.compute + self.drain + self.tail
    }
}

/// Latency and activity of one simulated plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleReport {
    pub total_cycles: u64,
    pub fold_cycles: Vec<u64>,
    pub mac_events: u64,
    /// Cycles in which folds were computing, excluding drain and reduction.
    pub compute_cycles: u64,
    /// `mac_events / (PEs * total_cycles)`.
    pub utilization: f64,
    /// `mac_events / (PEs * compute_cycles)`.
    pub compute_utilization: f64,
    pub array_rows: usize,
    pub array_cols: usize,
    pub overlap_folds: bool,
}

impl CycleReport {
    pub fn from_folds(folds: &[FoldStats], cfg: &ArrayConfig) -> Self {
        let mut total = 0u64;
        for (i, f) in folds.iter().enumerate() {
            total += f.cycles();
            if cfg.overlap_folds && i > 0 {
                total -= overlap_saving(folds[i - 1].drain, f.fill);
            }
        }
        let macs: u64 = folds.iter().map(|f| f.macs).sum();
        let compute: u64 = folds.iter().map(|f| f.compute).sum();
        let pes = cfg.pe_count() as f64;
        let ratio = |cycles: u64| if cycles == 0 { 0.0 } else { macs as f64 / (pes * cycles as f64) };
        Self {
            total_cycles: total,
            fold_cycles: folds.iter().map(FoldStats::cycles).collect(),
            mac_events: macs,
            compute_cycles: compute,
            utilization: ratio(total),
            compute_utilization: ratio(compute),
            array_rows: cfg.rows,
            array_cols: cfg.cols,
            overlap_folds: cfg.overlap_folds,
        }
    }
}

struct Operands<'a> {
    input: &'a [f32],
    weights: &'a [f32],
}

impl Operands<'_> {
    #[inline]
    fn resolve(&self, r: OperandRef) -> Result<Option<f32>, SimError> {
        let missing = |what: &str, i: u32| SimError::PlanMismatch(format!("{what} operand {i} is out of range"));
        Ok(match r {
            OperandRef::Idle => None,
            OperandRef::Zero => Some(0.0),
            OperandRef::Input(i) => Some(*self.input.get(i as usize).ok_or_else(|| missing("input", i))?),
            OperandRef::Weight(i) => Some(*self.weights.get(i as usize).ok_or_else(|| missing("weight", i))?),
        })
    }
}

/// Clocks one fold to completion and drains its accumulators.
///
/// Links are one-cycle pipelines, so the west register of PE `(i, q)` at
/// cycle `t` holds what row `i`'s stream injected at `t - q`, and the north
/// register of PE `(i, q)` what column `q`'s stream injected at `t - i`.
/// Only PEs that can hold a valid west operand are visited.
fn run_fold(index: usize, fold: &Fold, ops: &Operands<'_>, out: &mut [f32]) -> Result<FoldStats, SimError> {
    let (r, c) = (fold.rows, fold.cols);
    let mut pes = vec![PeState::new(fold.mode); r * c];
    let horizon = fold
        .west
        .iter()
        .chain(&fold.north)
        .chain(&fold.broadcast)
        .map(|s| s.end())
        .max()
        .unwrap_or(0)
        + (r + c) as u64;
    let mut last_mac: Option<u64> = None;
    let mut macs = 0u64;
    for cycle in 0..horizon {
        for i in 0..r {
            let west = &fold.west[i];
            if west.values.is_empty() || cycle < west.start {
                continue;
            }
            // Columns whose west register holds an injected slot this cycle.
            let hi = ((cycle - west.start) as usize).min(c - 1);
            let lo = (cycle + 1).saturating_sub(west.end()) as usize;
            if lo > hi {
                continue;
            }
            let row = &mut pes[i * c..(i + 1) * c];
            match fold.mode {
                PeMode::Systolic => {
                    for q in lo..=hi {
                        let pe = &mut row[q];
                        pe.west = ops.resolve(west.at(cycle - q as u64))?;
                        pe.north = match cycle.checked_sub(i as u64) {
                            Some(t) => ops.resolve(fold.north[q].at(t))?,
                            None => None,
                        };
                        if pe.step(cycle) {
                            macs += 1;
                            last_mac = Some(cycle);
                        }
                    }
                }
                PeMode::BroadcastRow => {
                    let b = ops.resolve(fold.broadcast[i].at(cycle))?;
                    if b.is_none() {
                        continue;
                    }
                    for q in lo..=hi {
                        let pe = &mut row[q];
                        pe.west = ops.resolve(west.at(cycle - q as u64))?;
                        pe.broadcast = b;
                        if pe.step(cycle) {
                            macs += 1;
                            last_mac = Some(cycle);
                        }
                    }
                }
            }
        }
    }
    let mut fill = 0;
    for (idx, pe) in pes.iter().enumerate() {
        if pe.macs != fold.depth {
            return Err(SimError::Deadlock {
                fold: index,
                cycle: horizon,
                row: idx / c,
                col: idx % c,
                expected: fold.depth,
                performed: pe.macs,
            });
        }
        fill = fill.max(pe.first_mac.unwrap_or(0));
    }
    // Drain: accumulators shift south one row per cycle and leave through
    // the bottom edge, so the last row out is row 0 after `r` cycles.
    for step in 0..r {
        let i = r - 1 - step;
        for q in 0..c {
            out[fold.targets[i * c + q]] = pes[i * c + q].accumulator;
        }
    }
    Ok(FoldStats {
        rows: r,
        cols: c,
        compute: last_mac.map_or(0, |t| t + 1),
        fill,
        drain: r as u64,
        tail: fold.tail,
        macs,
    })
}

/// Pairwise sum, the order a binary adder tree reduces in.
fn tree_sum(values: &mut [f32]) -> f32 {
    let mut n = values.len();
    while n > 1 {
        let half = n.div_ceil(2);
        for i in 0..n / 2 {
            values[i] = values[2 * i] + values[2 * i + 1];
        }
        if n % 2 == 1 {
            values[half - 1] = values[n - 1];
        }
        n = half;
    }
    values.first().copied().unwrap_or(0.0)
}

/// Runs a plan on the array, returning the output tensor and the measured
/// cycle report.
pub fn simulate(
    plan: &MappingPlan,
    cfg: &ArrayConfig,
    input: &Tensor,
    weights: &Tensor,
) -> Result<(Tensor, CycleReport), SimError> {
    cfg.validate()?;
    if plan.folds.is_empty() {
        return Ok((Tensor::empty(), CycleReport::from_folds(&[], cfg)));
    }
    plan.validate(cfg)?;
    if input.len() != plan.input_len || weights.len() != plan.weight_len {
        return Err(SimError::PlanMismatch(format!(
            "plan expects {} inputs and {} weights, got {} and {}",
            plan.input_len,
            plan.weight_len,
            input.len(),
            weights.len()
        )));
    }
    let ops = Operands {
        input: input.data(),
        weights: weights.data(),
    };
    let out_len = plan.output_len();
    let mut partial = vec![0.0f32; out_len * plan.slots];
    let mut stats = Vec::with_capacity(plan.folds.len());
    for (i, fold) in plan.folds.iter().enumerate() {
        let slot = &mut partial[fold.slot * out_len..(fold.slot + 1) * out_len];
        stats.push(run_fold(i, fold, &ops, slot)?);
    }
    let data = if plan.slots == 1 {
        partial
    } else {
        let mut lane = vec![0.0f32; plan.slots];
        (0..out_len)
            .map(|e| {
                for (s, v) in lane.iter_mut().enumerate() {
                    *v = partial[s * out_len + e];
                }
                tree_sum(&mut lane)
            })
            .collect()
    };
    let out = Tensor::new(plan.output_shape.clone(), data)?;
    Ok((out, CycleReport::from_folds(&stats, cfg)))
}
