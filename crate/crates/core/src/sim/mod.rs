//! Cycle-level output-stationary systolic array simulator.
//!
//! A layer is lowered by a planner into a [`MappingPlan`]: a list of folds,
//! each occupying an `r x c` corner of the array with per-edge operand
//! streams. [`simulate`] clocks the folds PE by PE, producing the layer output
//! and a [`CycleReport`]. Optional per-row broadcast links carry FuSe weights.

mod engine;
mod layer;
mod plan;
mod report;

pub use engine::{simulate, CycleReport, FoldStats, PeState};
pub use layer::{simulate_layer, LayerOperands, LayerRun, LayerWeights, SeWeights, StageRun};
pub use plan::{
    fuse_weights, plan_channelwise, plan_depthwise, plan_fuse, plan_im2col, Fold, MappingPlan, OperandRef, PeMode,
    Strategy, Stream,
};
pub(crate) use plan::tree_depth;
pub use report::{
    estimate_network, estimate_network_seeded, variant_label, write_csv, EstimateMode, LayerReport, NetworkReport,
    OpClass, DEFAULT_SEED,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ops::OpsError;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("array must have at least one row and one column, got {rows}x{cols}")]
    InvalidArray { rows: usize, cols: usize },
    #[error("layer `{0}` needs row broadcast links; enable broadcast or lower it with im2col")]
    BroadcastDisabled(String),
    #[error("planner cannot map layer `{name}`: {reason}")]
    Unplannable { name: String, reason: String },
    #[error("plan does not match operands: {0}")]
    PlanMismatch(String),
    #[error("schedule deadlock in fold {fold} at cycle {cycle}: PE ({row}, {col}) expected {expected} MACs but performed {performed}")]
    Deadlock {
        fold: usize,
        cycle: u64,
        row: usize,
        col: usize,
        expected: u32,
        performed: u32,
    },
    #[error(transparent)]
    Ops(#[from] OpsError),
    #[error(transparent)]
    Cost(#[from] crate::cost::CostError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Dataflow {
    OutputStationary,
}

/// Array dimensions and feature flags.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ArrayConfig {
    pub rows: usize,
    pub cols: usize,
    pub broadcast_enabled: bool,
    /// Let each fold's fill overlap the previous fold's drain.
    pub overlap_folds: bool,
    pub dataflow: Dataflow,
}

impl ArrayConfig {
    /// An array with broadcast links and serialized folds.
    pub fn new(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            broadcast_enabled: true,
            overlap_folds: false,
            dataflow: Dataflow::OutputStationary,
        }
    }

    pub fn square(size: usize) -> Self {
        Self::new(size, size)
    }

    pub fn with_broadcast(mut self, enabled: bool) -> Self {
        self.broadcast_enabled = enabled;
        self
    }

    pub fn with_overlap(mut self, enabled: bool) -> Self {
        self.overlap_folds = enabled;
        self
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.rows == 0 || self.cols == 0 {
            return Err(SimError::InvalidArray {
                rows: self.rows,
                cols: self.cols,
            });
        }
        Ok(())
    }

    pub fn pe_count(&self) -> usize {
        self.rows * self.cols
    }

    /// `RxC` label used in reports.
    pub fn label(&self) -> String {
        format!("{}x{}", self.rows, self.cols)
    }
}

/// Cycles saved when a fold's fill starts during the previous fold's drain.
pub fn overlap_saving(prev_drain: u64, next_fill: u64) -> u64 {
    prev_drain.min(next_fill)
}
