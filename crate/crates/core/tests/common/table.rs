//! Published whole-network figures: MACs and parameters in millions and
//! speedup on a 64x64 array.

pub struct Row {
    pub network: &'static str,
    pub variant: &'static str,
    pub macs_m: f64,
    pub params_m: f64,
    pub speedup: f64,
}

const fn row(network: &'static str, variant: &'static str, macs_m: f64, params_m: f64, speedup: f64) -> Row {
    Row {
        network,
        variant,
        macs_m,
        params_m,
        speedup,
    }
}

pub const ROWS: [Row; 25] = [
    row("mobilenet-v1", "baseline", 589.0, 4.23, 1.0),
    row("mobilenet-v1", "full", 1122.0, 7.36, 4.1),
    row("mobilenet-v1", "half", 573.0, 4.20, 6.76),
    row("mobilenet-v1", "full50", 764.0, 4.35, 2.2),
    row("mobilenet-v1", "half50", 578.0, 4.22, 2.36),
    row("mobilenet-v2", "baseline", 315.0, 3.50, 1.0),
    row("mobilenet-v2", "full", 430.0, 4.46, 5.1),
    row("mobilenet-v2", "half", 300.0, 3.46, 7.23),
    row("mobilenet-v2", "full50", 361.0, 3.61, 2.0),
    row("mobilenet-v2", "half50", 305.0, 3.49, 2.1),
    row("mnasnet-b1", "baseline", 325.0, 4.38, 1.0),
    row("mnasnet-b1", "full", 440.0, 5.66, 5.06),
    row("mnasnet-b1", "half", 305.0, 4.25, 7.15),
    row("mnasnet-b1", "full50", 361.0, 4.47, 1.88),
    row("mnasnet-b1", "half50", 312.0, 4.35, 1.97),
    row("mobilenet-v3-small", "baseline", 66.0, 2.93, 1.0),
    row("mobilenet-v3-small", "full", 84.0, 4.44, 3.02),
    row("mobilenet-v3-small", "half", 61.0, 2.89, 4.16),
    row("mobilenet-v3-small", "full50", 73.0, 3.18, 1.6),
    row("mobilenet-v3-small", "half50", 63.0, 2.92, 1.68),
    row("mobilenet-v3-large", "baseline", 238.0, 5.47, 1.0),
    row("mobilenet-v3-large", "full", 322.0, 10.57, 3.61),
    row("mobilenet-v3-large", "half", 225.0, 5.40, 5.45),
    row("mobilenet-v3-large", "full50", 264.0, 5.57, 1.76),
    row("mobilenet-v3-large", "half50", 230.0, 5.46, 1.83),
];

pub fn lookup(network: &str, variant: &str) -> &'static Row {
    ROWS.iter()
        .find(|r| r.network == network && r.variant == variant)
        .unwrap_or_else(|| panic!("no published row for {network} {variant}"))
}

/// Relative deviation of `got` from `want`.
pub fn deviation(got: f64, want: f64) -> f64 {
    (got - want).abs() / want
}
