//! The `fuseconv` command line.

use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;

use crate::cost::Speedup;
use crate::netmodel::{self, Fraction, NetworkSpec, Transformed};
use crate::ops::FuseVariant;
use crate::ria;
use crate::sim::{self, ArrayConfig, EstimateMode, NetworkReport, DEFAULT_SEED};

#[derive(Debug, Parser)]
#[command(name = "fuseconv", version, about = "Systolic array latency and RIA analysis for FuSe convolutions")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Classify a recurrence system as a regular iterative algorithm.
    ///
    /// The verdict applies to the given encoding only; it does not decide
    /// whether some other encoding of the same computation is RIA.
    RiaCheck(RiaArgs),
    /// Replace depthwise separable layers with FuSe layers.
    Transform(TransformArgs),
    /// Per-layer latency of one or more networks.
    Estimate(EstimateArgs),
    /// FuSe speedup over a range of array sizes.
    Sweep(SweepArgs),
    /// Per-layer and total speedup of a FuSe variant over its baseline.
    Compare(CompareArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Variant {
    Baseline,
    Full,
    Half,
    Full50,
    Half50,
}

impl Variant {
    fn transform(self) -> Option<(FuseVariant, Fraction)> {
        match self {
            Variant::Baseline => None,
            Variant::Full => Some((FuseVariant::Full, Fraction::All)),
            Variant::Half => Some((FuseVariant::Half, Fraction::All)),
            Variant::Full50 => Some((FuseVariant::Full, Fraction::Half)),
            Variant::Half50 => Some((FuseVariant::Half, Fraction::Half)),
        }
    }

    fn name(self) -> &'static str {
        match self {
            Variant::Baseline => "baseline",
            Variant::Full => "full",
            Variant::Half => "half",
            Variant::Full50 => "full50",
            Variant::Half50 => "half50",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Table,
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Simulate,
    Analytical,
}

impl From<Mode> for EstimateMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Simulate => EstimateMode::Simulate,
            Mode::Analytical => EstimateMode::Analytical,
        }
    }
}

/// Parses `N`, `NxM` or `NXM`.
pub fn parse_array(s: &str) -> Result<(usize, usize), String> {
    let (r, c) = match s.split_once(['x', 'X']) {
        Some((r, c)) => (r, c),
        None => (s, s),
    };
    let dim = |v: &str| -> Result<usize, String> {
        match v.trim().parse::<usize>() {
            Ok(0) => Err(format!("array dimensions must be at least 1, got `{s}`")),
            Ok(n) => Ok(n),
            Err(_) => Err(format!("expected an array size like 64x64, got `{s}`")),
        }
    };
    Ok((dim(r)?, dim(c)?))
}

#[derive(Debug, Args)]
pub struct OutputArgs {
    #[arg(long, value_enum, default_value = "table")]
    pub format: Format,
    /// Write the report here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ArrayArgs {
    /// Array size `RxC`; repeat for several arrays.
    #[arg(long = "array", value_parser = parse_array)]
    pub arrays: Vec<(usize, usize)>,
    #[arg(long, value_enum, default_value = "analytical")]
    pub mode: Mode,
    /// Seed for the simulated operands.
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// Overlap each fold's fill with the previous fold's drain.
    #[arg(long)]
    pub overlap: bool,
    /// Disable the row broadcast links (FuSe layers then fail to map).
    #[arg(long)]
    pub no_broadcast: bool,
}

impl ArrayArgs {
    fn configs(&self, default: &[usize]) -> Vec<ArrayConfig> {
        let dims: Vec<(usize, usize)> = if self.arrays.is_empty() {
            default.iter().map(|&s| (s, s)).collect()
        } else {
            self.arrays.clone()
        };
        dims.into_iter()
            .map(|(r, c)| {
                ArrayConfig::new(r, c)
                    .with_broadcast(!self.no_broadcast)
                    .with_overlap(self.overlap)
            })
            .collect()
    }
}

#[derive(Debug, Args)]
pub struct RiaArgs {
    /// Recurrence system file.
    #[arg(required_unless_present = "builtin", conflicts_with = "builtin")]
    pub file: Option<PathBuf>,
    /// Built-in system: matmul, conv1d, conv2d (direct) or conv2d-im2col.
    #[arg(long)]
    pub builtin: Option<String>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct TransformArgs {
    /// Builtin network name or network file.
    #[arg(long)]
    pub network: String,
    #[arg(long, value_enum)]
    pub variant: Variant,
    /// Array used to rank layers for the 50% variants.
    #[arg(long, value_parser = parse_array, default_value = "64x64")]
    pub array: (usize, usize),
    /// Write the transformed network file here.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "table")]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    /// Builtin network name or network file; repeatable.
    #[arg(long = "network", required = true)]
    pub networks: Vec<String>,
    #[arg(long, value_enum, default_value = "baseline")]
    pub variant: Variant,
    #[command(flatten)]
    pub array: ArrayArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Builtin network name or network file; repeatable.
    #[arg(long = "network", required = true)]
    pub networks: Vec<String>,
    #[arg(long, value_enum)]
    pub variant: Variant,
    #[command(flatten)]
    pub array: ArrayArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// Builtin network name or network file.
    #[arg(long)]
    pub network: String,
    #[arg(long, value_enum)]
    pub variant: Variant,
    #[command(flatten)]
    pub array: ArrayArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn main() -> i32 {
    let cli = Cli::parse();
    let stdout = std::io::stdout();
    match run(cli, &mut stdout.lock()) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}

pub fn run<W: Write>(cli: Cli, stdout: &mut W) -> Result<()> {
    match cli.command {
        Command::RiaCheck(a) => ria_check(a, stdout),
        Command::Transform(a) => transform(a, stdout),
        Command::Estimate(a) => estimate(a, stdout),
        Command::Sweep(a) => sweep(a, stdout),
        Command::Compare(a) => compare(a, stdout),
    }
}

fn emit<W: Write>(out: &Option<PathBuf>, text: &str, stdout: &mut W) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => stdout.write_all(text.as_bytes()).context("writing to stdout"),
    }
}

fn json<T: Serialize + ?Sized>(v: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    Ok(s)
}

fn csv_text<T: Serialize>(rows: &[T]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    Ok(String::from_utf8(w.into_inner().map_err(|e| e.into_error())?)?)
}

/// Left-aligns the first column and right-aligns the rest.
fn table(headers: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = headers.iter().map(|h| h.len()).collect();
    for r in rows {
        for (w, cell) in widths.iter_mut().zip(r) {
            *w = (*w).max(cell.len());
        }
    }
    let line = |cells: Vec<&str>| {
        let parts: Vec<String> = cells
            .iter()
            .enumerate()
            .map(|(i, c)| {
                if i == 0 {
                    format!("{:<w$}", c, w = widths[i])
                } else {
                    format!("{:>w$}", c, w = widths[i])
                }
            })
            .collect();
        parts.join("  ").trim_end().to_string() + "\n"
    };
    let mut out = line(headers.to_vec());
    for r in rows {
        out += &line(r.iter().map(String::as_str).collect());
    }
    out
}

/// A builtin name, or a path to a network file when one exists.
pub fn resolve_network(source: &str) -> Result<NetworkSpec> {
    let path = Path::new(source);
    if path.is_file() {
        return Ok(netmodel::load_network(path)?);
    }
    netmodel::builtin(source).with_context(|| {
        format!(
            "`{source}` is neither a file nor a builtin network ({})",
            netmodel::builtin_names().join(", ")
        )
    })
}

fn apply_variant(net: &NetworkSpec, variant: Variant, cfg: &ArrayConfig) -> Result<Transformed> {
    match variant.transform() {
        None => Ok(Transformed {
            net: net.clone(),
            replaced: Vec::new(),
        }),
        Some((v, fraction)) => Ok(netmodel::transform_fuse_on(net, v, fraction, cfg)?),
    }
}

fn resolve_ria(a: &RiaArgs) -> Result<ria::RecurrenceSystem> {
    if let Some(name) = &a.builtin {
        let canonical = match name.as_str() {
            "conv2d" | "conv2d-direct" => "conv2d_direct",
            "conv2d-im2col" => "conv2d_im2col",
            other => other,
        };
        return ria::builtin(canonical).with_context(|| {
            format!(
                "unknown builtin system `{name}` (known: {})",
                ria::builtin_names().collect::<Vec<_>>().join(", ")
            )
        });
    }
    let path = a.file.as_ref().expect("clap requires a file or --builtin");
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    ria::parse_system(&text).with_context(|| format!("parsing {}", path.display()))
}

fn verdict(c: &ria::Classification) -> String {
    match c {
        ria::Classification::Ria => "RIA".into(),
        ria::Classification::NotRia(reasons) => format!("NotRIA: {}", reasons.join("; ")),
    }
}

fn ria_check<W: Write>(a: RiaArgs, stdout: &mut W) -> Result<()> {
    let sys = resolve_ria(&a)?;
    let report = ria::check(&sys)?;
    let text = match a.output.format {
        Format::Json => json(&report)?,
        Format::Csv => csv_text(&report.offsets)?,
        Format::Table => {
            let rows: Vec<Vec<String>> = report
                .offsets
                .iter()
                .map(|o| {
                    vec![
                        o.defined.clone(),
                        o.reference.clone(),
                        o.offset.clone(),
                        if o.constant { "yes" } else { "no" }.into(),
                    ]
                })
                .collect();
            let mut s = format!("system {}\n", report.system);
            s += &table(&["defined", "reference", "offset", "constant"], &rows);
            s += &format!("verdict: {}\n", verdict(&report.classification));
            if let Some(l) = &report.schedule {
                let coeffs: Vec<String> = l.iter().map(i64::to_string).collect();
                let first = &sys.relations[0].lhs;
                let dims: Vec<String> = first.indices.iter().map(ToString::to_string).collect();
                s += &format!("schedule: ({}) . ({})\n", coeffs.join(", "), dims.join(", "));
            }
            s
        }
    };
    emit(&a.output.out, &text, stdout)
}

#[derive(Debug, Serialize)]
struct Delta {
    metric: &'static str,
    baseline: u64,
    variant: u64,
}

#[derive(Debug, Serialize)]
struct TransformReport {
    network: String,
    variant: &'static str,
    deltas: Vec<Delta>,
    replaced: Vec<String>,
    depthwise_layers: usize,
}

fn millions(v: u64) -> String {
    format!("{:.2}", v as f64 / 1e6)
}

fn transform<W: Write>(a: TransformArgs, stdout: &mut W) -> Result<()> {
    let net = resolve_network(&a.network)?;
    let cfg = ArrayConfig::new(a.array.0, a.array.1);
    if a.variant == Variant::Baseline {
        bail!("transform needs a FuSe variant (full, half, full50 or half50)");
    }
    let t = apply_variant(&net, a.variant, &cfg)?;
    let report = TransformReport {
        network: net.name.clone(),
        variant: a.variant.name(),
        deltas: vec![
            Delta {
                metric: "macs",
                baseline: net.total_macs()?,
                variant: t.net.total_macs()?,
            },
            Delta {
                metric: "profiled_macs",
                baseline: net.total_profiled_macs()?,
                variant: t.net.total_profiled_macs()?,
            },
            Delta {
                metric: "params",
                baseline: net.total_params()?,
                variant: t.net.total_params()?,
            },
        ],
        replaced: t.replaced.clone(),
        depthwise_layers: net.depthwise_count(),
    };
    if let Some(path) = &a.out {
        std::fs::write(path, netmodel::write_network(&t.net)).with_context(|| format!("writing {}", path.display()))?;
    }
    let text = match a.format {
        Format::Json => json(&report)?,
        Format::Csv => csv_text(&report.deltas)?,
        Format::Table => {
            let rows: Vec<Vec<String>> = report
                .deltas
                .iter()
                .map(|d| {
                    let change = d.variant as f64 / d.baseline.max(1) as f64 - 1.0;
                    vec![
                        format!("{} (M)", d.metric),
                        millions(d.baseline),
                        millions(d.variant),
                        format!("{:+.1}%", 100.0 * change),
                    ]
                })
                .collect();
            let mut s = format!("{} -> {}\n", report.network, report.variant);
            s += &table(&["metric", "baseline", "variant", "change"], &rows);
            s += &format!(
                "replaced {} of {} depthwise separable layers",
                report.replaced.len(),
                report.depthwise_layers
            );
            if report.replaced.len() < report.depthwise_layers {
                s += &format!(": {}", report.replaced.join(", "));
            }
            s.push('\n');
            s
        }
    };
    stdout.write_all(text.as_bytes())?;
    Ok(())
}

fn estimate<W: Write>(a: EstimateArgs, stdout: &mut W) -> Result<()> {
    let nets = a.networks.iter().map(|n| resolve_network(n)).collect::<Result<Vec<_>>>()?;
    let jobs: Vec<(&NetworkSpec, ArrayConfig)> = nets
        .iter()
        .flat_map(|n| a.array.configs(&[64]).into_iter().map(move |c| (n, c)))
        .collect();
    let mode: EstimateMode = a.array.mode.into();
    let reports = jobs
        .par_iter()
        .map(|(net, cfg)| {
            let t = apply_variant(net, a.variant, cfg)?;
            Ok(sim::estimate_network_seeded(&t.net, cfg, mode, a.array.seed)?)
        })
        .collect::<Result<Vec<NetworkReport>>>()?;
    let text = match a.output.format {
        Format::Json => json(&reports)?,
        Format::Csv => {
            let mut buf = Vec::new();
            sim::write_csv(&reports, &mut buf)?;
            String::from_utf8(buf)?
        }
        Format::Table => {
            let mut s = String::new();
            for r in &reports {
                s += &format!(
                    "{} ({}) on {} [{}{}]\n",
                    r.network,
                    r.variant,
                    r.array_size,
                    r.mode,
                    if r.overlap_folds { ", overlapped folds" } else { "" }
                );
                let mut rows: Vec<Vec<String>> = r
                    .layers
                    .iter()
                    .map(|l| {
                        vec![
                            l.layer.clone(),
                            l.kind.token().to_string(),
                            l.cycles.to_string(),
                            l.macs.to_string(),
                            format!("{:.4}", l.utilization),
                        ]
                    })
                    .collect();
                rows.push(vec![
                    "total".into(),
                    String::new(),
                    r.total_cycles.to_string(),
                    r.total_macs.to_string(),
                    format!("{:.4}", r.utilization),
                ]);
                s += &table(&["layer", "kind", "cycles", "macs", "utilization"], &rows);
                s.push('\n');
            }
            s
        }
    };
    emit(&a.output.out, &text, stdout)
}

#[derive(Debug, Clone, Serialize)]
struct SweepRow {
    network: String,
    variant: &'static str,
    array_size: String,
    mode: &'static str,
    baseline_cycles: u64,
    variant_cycles: u64,
    speedup: f64,
}

fn speedup_pair(
    net: &NetworkSpec,
    variant: Variant,
    cfg: &ArrayConfig,
    mode: EstimateMode,
    seed: u64,
) -> Result<(NetworkReport, NetworkReport)> {
    let t = apply_variant(net, variant, cfg)?;
    let base = sim::estimate_network_seeded(net, cfg, mode, seed)?;
    let var = sim::estimate_network_seeded(&t.net, cfg, mode, seed)?;
    Ok((base, var))
}

fn sweep<W: Write>(a: SweepArgs, stdout: &mut W) -> Result<()> {
    let nets = a.networks.iter().map(|n| resolve_network(n)).collect::<Result<Vec<_>>>()?;
    let jobs: Vec<(&NetworkSpec, ArrayConfig)> = nets
        .iter()
        .flat_map(|n| a.array.configs(&[8, 16, 32, 64]).into_iter().map(move |c| (n, c)))
        .collect();
    let mode: EstimateMode = a.array.mode.into();
    let rows = jobs
        .par_iter()
        .map(|(net, cfg)| {
            let (b, v) = speedup_pair(net, a.variant, cfg, mode, a.array.seed)?;
            let s = Speedup::new(net.name.clone(), b.total_cycles, v.total_cycles);
            Ok(SweepRow {
                network: net.name.clone(),
                variant: a.variant.name(),
                array_size: cfg.label(),
                mode: mode.name(),
                baseline_cycles: s.baseline_cycles,
                variant_cycles: s.variant_cycles,
                speedup: s.speedup,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let text = match a.output.format {
        Format::Json => json(&rows)?,
        Format::Csv => csv_text(&rows)?,
        Format::Table => {
            let cells: Vec<Vec<String>> = rows
                .iter()
                .map(|r| {
                    vec![
                        r.network.clone(),
                        r.variant.into(),
                        r.array_size.clone(),
                        r.baseline_cycles.to_string(),
                        r.variant_cycles.to_string(),
                        format!("{:.2}x", r.speedup),
                    ]
                })
                .collect();
            table(&["network", "variant", "array", "baseline", "fuse", "speedup"], &cells)
        }
    };
    emit(&a.output.out, &text, stdout)
}

#[derive(Debug, Serialize)]
struct CompareReport {
    network: String,
    variant: &'static str,
    array_size: String,
    mode: &'static str,
    total: Speedup,
    layers: Vec<Speedup>,
}

fn compare<W: Write>(a: CompareArgs, stdout: &mut W) -> Result<()> {
    let net = resolve_network(&a.network)?;
    let mode: EstimateMode = a.array.mode.into();
    let reports = a
        .array
        .configs(&[64])
        .par_iter()
        .map(|cfg| {
            let (b, v) = speedup_pair(&net, a.variant, cfg, mode, a.array.seed)?;
            let layers = b
                .layers
                .iter()
                .zip(&v.layers)
                .filter(|(x, y)| x.kind != y.kind)
                .map(|(x, y)| Speedup::new(x.layer.clone(), x.cycles, y.cycles))
                .collect();
            Ok(CompareReport {
                network: net.name.clone(),
                variant: a.variant.name(),
                array_size: cfg.label(),
                mode: mode.name(),
                total: Speedup::new("total".into(), b.total_cycles, v.total_cycles),
                layers,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let text = match a.output.format {
        Format::Json => json(&reports)?,
        Format::Csv => {
            #[derive(Serialize)]
            struct Row<'a> {
                network: &'a str,
                variant: &'a str,
                array_size: &'a str,
                layer: &'a str,
                baseline_cycles: u64,
                variant_cycles: u64,
                speedup: f64,
            }
            let rows: Vec<Row> = reports
                .iter()
                .flat_map(|r| {
                    r.layers.iter().chain(std::iter::once(&r.total)).map(move |s| Row {
                        network: &r.network,
                        variant: r.variant,
                        array_size: &r.array_size,
                        layer: &s.name,
                        baseline_cycles: s.baseline_cycles,
                        variant_cycles: s.variant_cycles,
                        speedup: s.speedup,
                    })
                })
                .collect();
            csv_text(&rows)?
        }
        Format::Table => {
            let mut s = String::new();
            for r in &reports {
                s += &format!("{} {} vs baseline on {} [{}]\n", r.network, r.variant, r.array_size, r.mode);
                let cells: Vec<Vec<String>> = r
                    .layers
                    .iter()
                    .chain(std::iter::once(&r.total))
                    .map(|x| {
                        vec![
                            x.name.clone(),
                            x.baseline_cycles.to_string(),
                            x.variant_cycles.to_string(),
                            format!("{:.2}x", x.speedup),
                        ]
                    })
                    .collect();
                s += &table(&["layer", "baseline", "fuse", "speedup"], &cells);
                s.push('\n');
            }
            s
        }
    };
    emit(&a.output.out, &text, stdout)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn array_sizes() {
        assert_eq!(parse_array("64"), Ok((64, 64)));
        assert_eq!(parse_array("8x16"), Ok((8, 16)));
        assert_eq!(parse_array("4X4"), Ok((4, 4)));
        assert!(parse_array("0x4").is_err());
        assert!(parse_array("ax4").is_err());
    }

    #[test]
    fn table_alignment() {
        let t = table(&["a", "bb"], &[vec!["xyz".into(), "1".into()]]);
        assert_eq!(t, "a    bb\nxyz   1\n");
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
