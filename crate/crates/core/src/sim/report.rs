use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layer::{simulate_layer, LayerOperands};
use super::{ArrayConfig, SimError};
use crate::cost;
use crate::netmodel::{LayerKind, NetworkSpec};
use crate::ops;

/// Operator classes latency is attributed to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OpClass {
    Standard,
    Depthwise,
    Fuse,
    Pointwise,
    Fc,
}

impl OpClass {
    pub const ALL: [OpClass; 5] = [
        OpClass::Standard,
        OpClass::Depthwise,
        OpClass::Fuse,
        OpClass::Pointwise,
        OpClass::Fc,
    ];

    pub fn name(self) -> &'static str {
        match self {
            OpClass::Standard => "standard",
            OpClass::Depthwise => "depthwise",
            OpClass::Fuse => "fuse",
            OpClass::Pointwise => "pointwise",
            OpClass::Fc => "fc",
        }
    }
}

impl fmt::Display for OpClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimateMode {
    /// Clock every layer through the event simulator.
    Simulate,
    /// Closed-form cycle counts.
    Analytical,
}

impl EstimateMode {
    pub fn name(self) -> &'static str {
        match self {
            EstimateMode::Simulate => "simulate",
            EstimateMode::Analytical => "analytical",
        }
    }
}

impl fmt::Display for EstimateMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EstimateMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "simulate" | "sim" => Ok(EstimateMode::Simulate),
            "analytical" | "analytic" => Ok(EstimateMode::Analytical),
            other => Err(format!("unknown mode `{other}` (expected simulate or analytical)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerReport {
    pub layer: String,
    pub kind: LayerKind,
    pub cycles: u64,
    pub macs: u64,
    pub utilization: f64,
    /// Cycles of each array pass, in execution order.
    pub stages: Vec<(OpClass, u64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkReport {
    pub network: String,
    pub variant: String,
    pub array_size: String,
    pub mode: EstimateMode,
    pub overlap_folds: bool,
    pub layers: Vec<LayerReport>,
    pub total_cycles: u64,
    pub total_macs: u64,
    pub utilization: f64,
}

#[derive(Serialize)]
struct CsvRow<'a> {
    network: &'a str,
    variant: &'a str,
    array_size: &'a str,
    layer: &'a str,
    kind: &'a str,
    cycles: u64,
    macs: u64,
    utilization: f64,
    mode: &'a str,
}

impl NetworkReport {
    /// Cycles per operator class.
    pub fn class_cycles(&self) -> BTreeMap<OpClass, u64> {
        let mut out = BTreeMap::new();
        for l in &self.layers {
            for &(class, cycles) in &l.stages {
                *out.entry(class).or_insert(0) += cycles;
            }
        }
        out
    }

    pub fn layer(&self, name: &str) -> Option<&LayerReport> {
        self.layers.iter().find(|l| l.layer == name)
    }

    pub fn to_json(&self) -> serde_json::Result<String> {
        serde_json::to_string_pretty(self)
    }
}

fn csv_row<'a>(r: &'a NetworkReport, layer: &'a str, kind: &'a str, cycles: u64, macs: u64, utilization: f64) -> CsvRow<'a> {
    CsvRow {
        network: &r.network,
        variant: &r.variant,
        array_size: &r.array_size,
        layer,
        kind,
        cycles,
        macs,
        utilization,
        mode: r.mode.name(),
    }
}

/// Writes one CSV row per layer plus a `total` row per report.
pub fn write_csv<W: Write>(reports: &[NetworkReport], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in reports {
        for l in &r.layers {
            w.serialize(csv_row(r, &l.layer, l.kind.token(), l.cycles, l.macs, l.utilization))?;
        }
        w.serialize(csv_row(r, "total", "network", r.total_cycles, r.total_macs, r.utilization))?;
    }
    w.flush()?;
    Ok(())
}

/// Label for a network's FuSe state: `baseline`, `full`, `half`, or
/// `full50` / `half50` when depthwise layers remain.
pub fn variant_label(net: &NetworkSpec) -> String {
    let count = |k: LayerKind| net.layers.iter().filter(|l| l.kind == k).count();
    let (full, half, dw) = (
        count(LayerKind::FuSeFull),
        count(LayerKind::FuSeHalf),
        count(LayerKind::DepthwiseSeparable),
    );
    let base = match (full, half) {
        (0, 0) => return "baseline".into(),
        (_, 0) => "full",
        (0, _) => "half",
        _ => "mixed",
    };
    if dw > 0 {
        format!("{base}50")
    } else {
        base.into()
    }
}

/// Seed used when callers do not pick one.
pub const DEFAULT_SEED: u64 = 0x5EED;

/// [`estimate_network_seeded`] with [`DEFAULT_SEED`].
pub fn estimate_network(net: &NetworkSpec, cfg: &ArrayConfig, mode: EstimateMode) -> Result<NetworkReport, SimError> {
    estimate_network_seeded(net, cfg, mode, DEFAULT_SEED)
}

/// Per-layer latency of a whole network.
///
/// In simulate mode each layer runs on fresh uniform operands drawn from
/// stream `index` of a generator seeded with `seed`; cycle counts do not
/// depend on operand values, only the computed tensors do.
pub fn estimate_network_seeded(
    net: &NetworkSpec,
    cfg: &ArrayConfig,
    mode: EstimateMode,
    seed: u64,
) -> Result<NetworkReport, SimError> {
    cfg.validate()?;
    let pes = cfg.pe_count() as f64;
    let mut layers = Vec::with_capacity(net.layers.len());
    for (index, layer) in net.layers.iter().enumerate() {
        let (stages, macs) = match mode {
            EstimateMode::Simulate => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(index as u64);
                let operands = LayerOperands::random_with(layer, &mut rng)?;
                let run = simulate_layer(layer, cfg, &operands)?;
                let stages = run.stages.iter().map(|s| (s.class, s.report.total_cycles)).collect();
                (stages, run.mac_events())
            }
            EstimateMode::Analytical => (cost::stage_cycles(layer, cfg)?, ops::count_macs(layer)?),
        };
        let cycles: u64 = stages.iter().map(|&(_, c)| c).sum();
        layers.push(LayerReport {
            layer: layer.name.clone(),
            kind: layer.kind,
            cycles,
            macs,
            utilization: if cycles == 0 { 0.0 } else { macs as f64 / (pes * cycles as f64) },
            stages,
        });
    }
    let total_cycles = layers.iter().map(|l| l.cycles).sum();
    let total_macs = layers.iter().map(|l| l.macs).sum();
    Ok(NetworkReport {
        network: net.name.clone(),
        variant: variant_label(net),
        array_size: cfg.label(),
        mode,
        overlap_folds: cfg.overlap_folds,
        utilization: if total_cycles == 0 {
            0.0
        } else {
            total_macs as f64 / (pes * total_cycles as f64)
        },
        total_cycles,
        total_macs,
        layers,
    })
}
