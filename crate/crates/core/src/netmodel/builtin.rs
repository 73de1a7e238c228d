use std::path::PathBuf;

use super::{config, LayerKind, LayerSpec, NetError, NetworkSpec};
use crate::ops::ConvGeometry;

/// Directory whose `<name>.net` files replace the compiled-in definitions.
pub const BUILTIN_DIR_ENV: &str = "FUSECONV_BUILTIN_DIR";

const NAMES: [&str; 5] = [
    "mobilenet-v1",
    "mobilenet-v2",
    "mnasnet-b1",
    "mobilenet-v3-small",
    "mobilenet-v3-large",
];

pub fn builtin_names() -> &'static [&'static str] {
    &NAMES
}

/// Looks up a builtin network, preferring `$FUSECONV_BUILTIN_DIR/<name>.net`.
pub fn builtin(name: &str) -> Result<NetworkSpec, NetError> {
    if let Some(dir) = std::env::var_os(BUILTIN_DIR_ENV) {
        let path = PathBuf::from(dir).join(format!("{name}.net"));
        if path.is_file() {
            return config::load_network(&path);
        }
    }
    match name {
        "mobilenet-v1" => mobilenet_v1(),
        "mobilenet-v2" => mobilenet_v2(),
        "mnasnet-b1" => mnasnet_b1(),
        "mobilenet-v3-small" => mobilenet_v3_small(),
        "mobilenet-v3-large" => mobilenet_v3_large(),
        other => Err(NetError::UnknownNetwork(other.to_string())),
    }
}

fn make_divisible(v: usize, divisor: usize) -> usize {
    let rounded = ((v + divisor / 2) / divisor * divisor).max(divisor);
    if (rounded as f64) < 0.9 * v as f64 {
        rounded + divisor
    } else {
        rounded
    }
}

/// Tracks the running feature-map shape while layers are appended.
struct Builder {
    h: usize,
    w: usize,
    c: usize,
    layers: Vec<LayerSpec>,
}

impl Builder {
    fn new() -> Self {
        Self {
            h: 224,
            w: 224,
            c: 3,
            layers: Vec::new(),
        }
    }

    fn push(&mut self, layer: LayerSpec) {
        [self.h, self.w, self.c] = layer.output_shape();
        self.layers.push(layer);
    }

    fn geometry(&self, k: usize, cout: usize, stride: usize) -> ConvGeometry {
        ConvGeometry::new(self.h, self.w, self.c, k, cout, stride, k / 2)
    }

    fn conv(&mut self, name: &str, k: usize, cout: usize, stride: usize) {
        let g = self.geometry(k, cout, stride);
        self.push(LayerSpec::new(name, LayerKind::Standard, g));
    }

    fn pointwise(&mut self, name: &str, cout: usize) {
        let g = self.geometry(1, cout, 1);
        self.push(LayerSpec::new(name, LayerKind::Pointwise, g));
    }

    fn dwsep(&mut self, name: &str, k: usize, cout: usize, stride: usize, se: Option<usize>) {
        let g = self.geometry(k, cout, stride);
        let mut l = LayerSpec::new(name, LayerKind::DepthwiseSeparable, g);
        l.se_width = se;
        self.push(l);
    }

    fn fc(&mut self, name: &str, cout: usize) {
        let g = ConvGeometry::new(1, 1, self.c, 1, cout, 1, 0);
        self.push(LayerSpec::new(name, LayerKind::FullyConnected, g));
    }

    fn finish(self, name: &str) -> Result<NetworkSpec, NetError> {
        NetworkSpec::new(name, [224, 224, 3], self.layers)
    }
}

fn mobilenet_v1() -> Result<NetworkSpec, NetError> {
    let mut b = Builder::new();
    b.conv("conv1", 3, 32, 2);
    let cfg = [
        (64, 1),
        (128, 2),
        (128, 1),
        (256, 2),
        (256, 1),
        (512, 2),
        (512, 1),
        (512, 1),
        (512, 1),
        (512, 1),
        (512, 1),
        (1024, 2),
        (1024, 1),
    ];
    for (i, (cout, s)) in cfg.into_iter().enumerate() {
        b.dwsep(&format!("dws{}", i + 1), 3, cout, s, None);
    }
    b.fc("fc", 1000);
    b.finish("mobilenet-v1")
}

/// Inverted residual stages as (expansion, out channels, repeats, stride, kernel).
fn inverted_residuals(b: &mut Builder, cfg: &[(usize, usize, usize, usize, usize)], always_expand: bool) {
    let mut index = 0;
    for &(t, cout, n, s, k) in cfg {
        for i in 0..n {
            let stride = if i == 0 { s } else { 1 };
            if t != 1 || always_expand {
                let e = b.c * t;
                b.pointwise(&format!("b{index}.expand"), e);
            }
            b.dwsep(&format!("b{index}.dw"), k, cout, stride, None);
            index += 1;
        }
    }
}

fn mobilenet_v2() -> Result<NetworkSpec, NetError> {
    let mut b = Builder::new();
    b.conv("conv1", 3, 32, 2);
    inverted_residuals(
        &mut b,
        &[
            (1, 16, 1, 1, 3),
            (6, 24, 2, 2, 3),
            (6, 32, 3, 2, 3),
            (6, 64, 4, 2, 3),
            (6, 96, 3, 1, 3),
            (6, 160, 3, 2, 3),
            (6, 320, 1, 1, 3),
        ],
        false,
    );
    b.pointwise("conv_last", 1280);
    b.fc("fc", 1000);
    b.finish("mobilenet-v2")
}

fn mnasnet_b1() -> Result<NetworkSpec, NetError> {
    let mut b = Builder::new();
    b.conv("conv1", 3, 32, 2);
    b.dwsep("sep", 3, 16, 1, None);
    inverted_residuals(
        &mut b,
        &[
            (3, 24, 3, 2, 3),
            (3, 40, 3, 2, 5),
            (6, 80, 3, 2, 5),
            (6, 96, 2, 1, 3),
            (6, 192, 4, 2, 5),
            (6, 320, 1, 1, 3),
        ],
        true,
    );
    b.pointwise("conv_last", 1280);
    b.fc("fc", 1000);
    b.finish("mnasnet-b1")
}

/// MobileNetV3 bottlenecks as (kernel, expanded channels, out channels, squeeze-excite, stride).
fn v3_blocks(b: &mut Builder, cfg: &[(usize, usize, usize, bool, usize)]) {
    for (i, &(k, e, cout, se, s)) in cfg.iter().enumerate() {
        if e != b.c {
            b.pointwise(&format!("b{i}.expand"), e);
        }
        let se = se.then(|| make_divisible(e / 4, 8));
        b.dwsep(&format!("b{i}.dw"), k, cout, s, se);
    }
}

fn mobilenet_v3_small() -> Result<NetworkSpec, NetError> {
    let mut b = Builder::new();
    b.conv("conv1", 3, 16, 2);
    v3_blocks(
        &mut b,
        &[
            (3, 16, 16, true, 2),
            (3, 72, 24, false, 2),
            (3, 88, 24, false, 1),
            (5, 96, 40, true, 2),
            (5, 240, 40, true, 1),
            (5, 240, 40, true, 1),
            (5, 120, 48, true, 1),
            (5, 144, 48, true, 1),
            (5, 288, 96, true, 2),
            (5, 576, 96, true, 1),
            (5, 576, 96, true, 1),
        ],
    );
    b.pointwise("conv_last", 576);
    b.fc("head", 1280);
    b.fc("fc", 1000);
    b.finish("mobilenet-v3-small")
}

fn mobilenet_v3_large() -> Result<NetworkSpec, NetError> {
    let mut b = Builder::new();
    b.conv("conv1", 3, 16, 2);
    v3_blocks(
        &mut b,
        &[
            (3, 16, 16, false, 1),
            (3, 64, 24, false, 2),
            (3, 72, 24, false, 1),
            (5, 72, 40, true, 2),
            (5, 120, 40, true, 1),
            (5, 120, 40, true, 1),
            (3, 240, 80, false, 2),
            (3, 200, 80, false, 1),
            (3, 184, 80, false, 1),
            (3, 184, 80, false, 1),
            (3, 480, 112, true, 1),
            (3, 672, 112, true, 1),
            (5, 672, 160, true, 2),
            (5, 960, 160, true, 1),
            (5, 960, 160, true, 1),
        ],
    );
    b.pointwise("conv_last", 960);
    b.fc("head", 1280);
    b.fc("fc", 1000);
    b.finish("mobilenet-v3-large")
}
