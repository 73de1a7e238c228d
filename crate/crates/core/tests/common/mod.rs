//! Naive loop oracles shared by the integration tests. Written without any
//! use of `fuseconv::ops` so they check it independently.

#![allow(dead_code)]

use fuseconv::netmodel::{LayerKind, LayerSpec};
use fuseconv::ops::{ConvGeometry, Tensor};
use fuseconv::sim::{LayerOperands, LayerWeights, SeWeights};
use rand::Rng;

pub mod table;

/// Dense `[H, W, C]` feature map with zero padding on reads.
pub struct Map<'a> {
    pub h: usize,
    pub w: usize,
    pub c: usize,
    pub data: &'a [f32],
}

impl<'a> Map<'a> {
    pub fn of(t: &'a Tensor) -> Self {
        let s = t.shape();
        assert_eq!(s.len(), 3, "expected a feature map, got {s:?}");
        Map {
            h: s[0],
            w: s[1],
            c: s[2],
            data: t.data(),
        }
    }

    pub fn at(&self, y: isize, x: isize, ch: usize) -> f32 {
        if y < 0 || x < 0 || y as usize >= self.h || x as usize >= self.w {
            0.0
        } else {
            self.data[(y as usize * self.w + x as usize) * self.c + ch]
        }
    }
}

pub fn out_dim(len: usize, k: usize, s: usize, p: usize) -> usize {
    (len + 2 * p - k) / s + 1
}

fn tensor(shape: Vec<usize>, data: Vec<f32>) -> Tensor {
    Tensor::new(shape, data).unwrap()
}

/// `out[n,m,f] = sum_{i,j,c} x[n s + i - p, m s + j - p, c] w[f,i,j,c]`
pub fn conv2d(x: &Tensor, w: &Tensor, s: usize, p: usize) -> (Tensor, u64) {
    let x = Map::of(x);
    let ws = w.shape();
    let (co, k) = (ws[0], ws[1]);
    let (n_out, m_out) = (out_dim(x.h, k, s, p), out_dim(x.w, k, s, p));
    let mut out = vec![0.0f32; n_out * m_out * co];
    let mut mults = 0u64;
    for n in 0..n_out {
        for m in 0..m_out {
            for f in 0..co {
                let mut acc = 0.0f32;
                for i in 0..k {
                    for j in 0..k {
                        for c in 0..x.c {
                            let y = (n * s + i) as isize - p as isize;
                            let xx = (m * s + j) as isize - p as isize;
                            acc += x.at(y, xx, c) * w.data()[((f * k + i) * k + j) * x.c + c];
                            mults += 1;
                        }
                    }
                }
                out[(n * m_out + m) * co + f] = acc;
            }
        }
    }
    (tensor(vec![n_out, m_out, co], out), mults)
}

/// Per-channel `K x K` convolution with filters `[K, K, C]`.
pub fn depthwise(x: &Tensor, w: &Tensor, s: usize, p: usize) -> (Tensor, u64) {
    let x = Map::of(x);
    let k = w.shape()[0];
    let (n_out, m_out) = (out_dim(x.h, k, s, p), out_dim(x.w, k, s, p));
    let mut out = vec![0.0f32; n_out * m_out * x.c];
    let mut mults = 0u64;
    for n in 0..n_out {
        for m in 0..m_out {
            for c in 0..x.c {
                let mut acc = 0.0f32;
                for i in 0..k {
                    for j in 0..k {
                        let y = (n * s + i) as isize - p as isize;
                        let xx = (m * s + j) as isize - p as isize;
                        acc += x.at(y, xx, c) * w.data()[(i * k + j) * x.c + c];
                        mults += 1;
                    }
                }
                out[(n * m_out + m) * x.c + c] = acc;
            }
        }
    }
    (tensor(vec![n_out, m_out, x.c], out), mults)
}

/// Per-pixel product with weights `[C', C]`.
pub fn pointwise(x: &Tensor, w: &Tensor) -> (Tensor, u64) {
    let x = Map::of(x);
    let co = w.shape()[0];
    let mut out = vec![0.0f32; x.h * x.w * co];
    for px in 0..x.h * x.w {
        for f in 0..co {
            out[px * co + f] = (0..x.c).map(|c| x.data[px * x.c + c] * w.data()[f * x.c + c]).sum();
        }
    }
    (tensor(vec![x.h, x.w, co], out), (x.h * x.w * x.c * co) as u64)
}

/// 1D filters `[K, C]` along the width of every row: `[H, M, C]`.
pub fn row1d(x: &Tensor, w: &Tensor, s: usize, p: usize) -> Tensor {
    let x = Map::of(x);
    let k = w.shape()[0];
    let m_out = out_dim(x.w, k, s, p);
    let mut out = vec![0.0f32; x.h * m_out * x.c];
    for y in 0..x.h {
        for m in 0..m_out {
            for c in 0..x.c {
                out[(y * m_out + m) * x.c + c] = (0..k)
                    .map(|t| x.at(y as isize, (m * s + t) as isize - p as isize, c) * w.data()[t * x.c + c])
                    .sum();
            }
        }
    }
    tensor(vec![x.h, m_out, x.c], out)
}

/// 1D filters `[K, C]` along the height of every column: `[N, W, C]`.
pub fn col1d(x: &Tensor, w: &Tensor, s: usize, p: usize) -> Tensor {
    let x = Map::of(x);
    let k = w.shape()[0];
    let n_out = out_dim(x.h, k, s, p);
    let mut out = vec![0.0f32; n_out * x.w * x.c];
    for n in 0..n_out {
        for xx in 0..x.w {
            for c in 0..x.c {
                out[(n * x.w + xx) * x.c + c] = (0..k)
                    .map(|t| x.at((n * s + t) as isize - p as isize, xx as isize, c) * w.data()[t * x.c + c])
                    .sum();
            }
        }
    }
    tensor(vec![n_out, x.w, x.c], out)
}

/// FuSe intermediate map `[N, M, C_row + C_col]`. The row half reads input
/// row `n s + K/2 - p` and the column half input column `m s + K/2 - p`;
/// positions outside the input give 0.
pub fn fuse_mid(x: &Tensor, row: &Tensor, col: &Tensor, half: bool, k: usize, s: usize, p: usize) -> (Tensor, u64) {
    let xm = Map::of(x);
    let c = xm.c;
    let (row_ch, col_ch): (Vec<usize>, Vec<usize>) = if half {
        ((0..c / 2).collect(), (c / 2..c).collect())
    } else {
        ((0..c).collect(), (0..c).collect())
    };
    let (n_out, m_out) = (out_dim(xm.h, k, s, p), out_dim(xm.w, k, s, p));
    let mid = row_ch.len() + col_ch.len();
    let mut out = vec![0.0f32; n_out * m_out * mid];
    let centre = |o: usize| (o * s + k / 2) as isize - p as isize;
    let mut mults = 0u64;
    for n in 0..n_out {
        for m in 0..m_out {
            let base = (n * m_out + m) * mid;
            for (q, &ch) in row_ch.iter().enumerate() {
                out[base + q] = (0..k)
                    .map(|t| xm.at(centre(n), (m * s + t) as isize - p as isize, ch) * row.data()[t * row_ch.len() + q])
                    .sum();
                mults += k as u64;
            }
            for (q, &ch) in col_ch.iter().enumerate() {
                out[base + row_ch.len() + q] = (0..k)
                    .map(|t| xm.at((n * s + t) as isize - p as isize, centre(m), ch) * col.data()[t * col_ch.len() + q])
                    .sum();
                mults += k as u64;
            }
        }
    }
    (tensor(vec![n_out, m_out, mid], out), mults)
}

/// Global mean followed by `[C', C]` weights; bias is not applied.
pub fn fc(x: &Tensor, w: &Tensor) -> (Tensor, u64) {
    let xm = Map::of(x);
    let pixels = (xm.h * xm.w) as f32;
    let pooled: Vec<f32> = (0..xm.c)
        .map(|c| (0..xm.h * xm.w).map(|px| xm.data[px * xm.c + c]).sum::<f32>() / pixels)
        .collect();
    let co = w.shape()[0];
    let out = (0..co)
        .map(|f| (0..xm.c).map(|c| pooled[c] * w.data()[f * xm.c + c]).sum())
        .collect();
    (tensor(vec![1, 1, co], out), (xm.c * co) as u64)
}

/// Channel rescale by the two fully connected layers, no activations.
pub fn squeeze_excite(x: &Tensor, se: &SeWeights) -> (Tensor, u64) {
    let (z, a) = fc(x, &se.reduce);
    let (e, b) = fc(&z, &se.expand);
    let c = x.shape()[2];
    let data = x.data().iter().enumerate().map(|(i, v)| v * e.data()[i % c]).collect();
    (tensor(x.shape().to_vec(), data), a + b)
}

/// Output and multiply count of a whole layer.
pub fn layer_oracle(layer: &LayerSpec, ops: &LayerOperands) -> (Tensor, u64) {
    let g = layer.geometry;
    let (k, s, p) = (g.kernel, g.stride, g.padding);
    let x = &ops.input;
    match (&ops.weights, layer.kind) {
        (LayerWeights::Conv(w), LayerKind::Standard) => conv2d(x, w, s, p),
        (LayerWeights::Matmul(w), LayerKind::Pointwise) => pointwise(x, w),
        (LayerWeights::Matmul(w), LayerKind::FullyConnected) => fc(x, w),
        (LayerWeights::SqueezeExcite(se), LayerKind::SqueezeExcite) => squeeze_excite(x, se),
        (
            LayerWeights::Separable {
                depthwise: d,
                pointwise: pw,
                se,
            },
            LayerKind::DepthwiseSeparable,
        ) => {
            let (mut mid, mut mults) = depthwise(x, d, s, p);
            if let Some(se) = se {
                let (y, m) = squeeze_excite(&mid, se);
                mid = y;
                mults += m;
            }
            let (y, m) = pointwise(&mid, pw);
            (y, mults + m)
        }
        (
            LayerWeights::Fuse {
                row,
                col,
                pointwise: pw,
                se,
            },
            kind @ (LayerKind::FuSeFull | LayerKind::FuSeHalf),
        ) => {
            let (mut mid, mut mults) = fuse_mid(x, row, col, kind == LayerKind::FuSeHalf, k, s, p);
            if let Some(se) = se {
                let (y, m) = squeeze_excite(&mid, se);
                mid = y;
                mults += m;
            }
            let (y, m) = pointwise(&mid, pw);
            (y, mults + m)
        }
        other => panic!("operands do not match layer kind {:?}", other.1),
    }
}

/// Largest element-wise error relative to the oracle's largest magnitude.
pub fn rel_error(got: &Tensor, want: &Tensor) -> f32 {
    assert_eq!(got.shape(), want.shape(), "shape mismatch");
    let scale = want.data().iter().fold(1e-6f32, |m, v| m.max(v.abs()));
    got.data()
        .iter()
        .zip(want.data())
        .fold(0.0f32, |m, (a, b)| m.max((a - b).abs()))
        / scale
}

/// A small random layer of `kind`, valid for the model's constraints.
pub fn random_layer(kind: LayerKind, rng: &mut impl Rng) -> LayerSpec {
    let k = [1, 2, 3, 5][rng.gen_range(0..4)];
    let stride = rng.gen_range(1..=2);
    let h = rng.gen_range(k.max(1)..=9);
    let w = rng.gen_range(k.max(1)..=9);
    let mut c = rng.gen_range(1..=12);
    let co = rng.gen_range(1..=12);
    let pad = if rng.gen_bool(0.5) { k / 2 } else { 0 };
    let geom = match kind {
        LayerKind::Pointwise | LayerKind::FullyConnected | LayerKind::SqueezeExcite => {
            let cc = if kind == LayerKind::SqueezeExcite { c } else { co };
            ConvGeometry::new(h, w, c, 1, cc, 1, 0)
        }
        LayerKind::FuSeHalf => {
            c += c % 2;
            ConvGeometry::new(h, w, c, k, co, stride, pad)
        }
        _ => ConvGeometry::new(h, w, c, k, co, stride, pad),
    };
    let mut layer = LayerSpec::new(format!("rand.{}", kind.token()), kind, geom);
    let se = match kind {
        LayerKind::SqueezeExcite => true,
        LayerKind::DepthwiseSeparable | LayerKind::FuSeFull | LayerKind::FuSeHalf => rng.gen_bool(0.3),
        _ => false,
    };
    if se {
        layer = layer.with_se(rng.gen_range(1..=6));
    }
    layer.validate().expect("random layers are valid");
    layer
}

pub const ALL_KINDS: [LayerKind; 7] = [
    LayerKind::Standard,
    LayerKind::DepthwiseSeparable,
    LayerKind::FuSeFull,
    LayerKind::FuSeHalf,
    LayerKind::Pointwise,
    LayerKind::FullyConnected,
    LayerKind::SqueezeExcite,
];

pub const ARRAY_SIZES: [usize; 5] = [1, 2, 4, 8, 16];
