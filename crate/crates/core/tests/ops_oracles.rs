mod common;

use common::{col1d, conv2d, depthwise, fuse_mid, pointwise, rel_error, row1d};
use fuseconv::netmodel::{LayerKind, LayerSpec};
use fuseconv::ops::{
    self, conv1d_col, conv1d_row, conv2d_depthwise, conv2d_standard, conv_pointwise, filters_as_matrix, fuseconv,
    im2col, matmul, ConvGeometry, FuseFilters, FuseVariant, Tensor,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const TOL: f32 = 1e-5;

fn rand(shape: Vec<usize>, rng: &mut ChaCha8Rng) -> Tensor {
    Tensor::random(shape, rng).unwrap()
}

/// Geometry with at least one output pixel.
fn geometry() -> impl Strategy<Value = ConvGeometry> {
    (1usize..=5, 1usize..=3, 0usize..=2, 0usize..=6, 0usize..=6, 1usize..=6, 1usize..=6).prop_map(
        |(k, s, p, dh, dw, c, co)| {
            let p = p.min(k - 1);
            ConvGeometry::new(k + dh, k + dw, c, k, co, s, p)
        },
    )
}

fn scaled(t: &Tensor, a: f32) -> Tensor {
    Tensor::new(t.shape().to_vec(), t.data().iter().map(|v| a * v).collect()).unwrap()
}

fn sum(a: &Tensor, b: &Tensor) -> Tensor {
    Tensor::new(a.shape().to_vec(), a.data().iter().zip(b.data()).map(|(x, y)| x + y).collect()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn standard_matches_loops(g in geometry(), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = rand(vec![g.input_h, g.input_w, g.channels_in], &mut rng);
        let w = rand(vec![g.channels_out, g.kernel, g.kernel, g.channels_in], &mut rng);
        let got = conv2d_standard(&x, &w, &g).unwrap();
        let (want, _) = conv2d(&x, &w, g.stride, g.padding);
        prop_assert!(rel_error(&got, &want) <= TOL);
    }

    #[test]
    fn depthwise_matches_loops(g in geometry(), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = rand(vec![g.input_h, g.input_w, g.channels_in], &mut rng);
        let w = rand(vec![g.kernel, g.kernel, g.channels_in], &mut rng);
        let got = conv2d_depthwise(&x, &w, &g).unwrap();
        let (want, _) = depthwise(&x, &w, g.stride, g.padding);
        prop_assert!(rel_error(&got, &want) <= TOL);
    }

    #[test]
    fn pointwise_matches_loops(h in 1usize..8, w in 1usize..8, c in 1usize..9, co in 1usize..9, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = rand(vec![h, w, c], &mut rng);
        let f = rand(vec![co, c], &mut rng);
        let (want, _) = pointwise(&x, &f);
        prop_assert!(rel_error(&conv_pointwise(&x, &f).unwrap(), &want) <= TOL);
        // K = 1 reduction to the standard convolution.
        let as_conv = f.clone().reshape(vec![co, 1, 1, c]).unwrap();
        let std = conv2d_standard(&x, &as_conv, &ConvGeometry::valid(h, w, c, 1, co)).unwrap();
        prop_assert!(rel_error(&std, &want) <= TOL);
    }

    #[test]
    fn one_dimensional_filters_match_loops(g in geometry(), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = rand(vec![g.input_h, g.input_w, g.channels_in], &mut rng);
        let f = rand(vec![g.kernel, g.channels_in], &mut rng);
        let row = conv1d_row(&x, &f, &g).unwrap();
        prop_assert!(rel_error(&row, &row1d(&x, &f, g.stride, g.padding)) <= TOL);
        let col = conv1d_col(&x, &f, &g).unwrap();
        prop_assert!(rel_error(&col, &col1d(&x, &f, g.stride, g.padding)) <= TOL);
    }

    #[test]
    fn column_filter_is_transposed_row_filter(g in geometry(), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = rand(vec![g.input_h, g.input_w, g.channels_in], &mut rng);
        let f = rand(vec![g.kernel, g.channels_in], &mut rng);
        let gt = ConvGeometry { input_h: g.input_w, input_w: g.input_h, ..g };
        let via_rows = conv1d_row(&x.transpose_hw().unwrap(), &f, &gt).unwrap().transpose_hw().unwrap();
        prop_assert_eq!(conv1d_col(&x, &f, &g).unwrap(), via_rows);
    }

    #[test]
    fn row_filter_is_a_zero_extended_depthwise_kernel(g in geometry(), seed in any::<u64>()) {
        // Valid geometry only: a K x K depthwise kernel with a single
        // non-zero row then equals the 1D row filter on shifted rows.
        let g = ConvGeometry { stride: 1, padding: 0, ..g };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (k, c) = (g.kernel, g.channels_in);
        let x = rand(vec![g.input_h, g.input_w, c], &mut rng);
        let f = rand(vec![k, c], &mut rng);
        let mut dw = vec![0.0f32; k * k * c];
        for j in 0..k {
            for ch in 0..c {
                dw[j * c + ch] = f.data()[j * c + ch];
            }
        }
        let dw = Tensor::new(vec![k, k, c], dw).unwrap();
        let embedded = conv2d_depthwise(&x, &dw, &g).unwrap();
        let rows = conv1d_row(&x, &f, &g).unwrap();
        let (n, m) = (g.out_h(), g.out_w());
        let cropped = Tensor::new(vec![n, m, c], rows.data()[..n * m * c].to_vec()).unwrap();
        prop_assert!(rel_error(&embedded, &cropped) <= TOL);
    }

    #[test]
    fn im2col_lowering_is_exact(g in geometry(), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = rand(vec![g.input_h, g.input_w, g.channels_in], &mut rng);
        let w = rand(vec![g.channels_out, g.kernel, g.kernel, g.channels_in], &mut rng);
        let lowered = matmul(&im2col(&x, &g).unwrap(), &filters_as_matrix(&w).unwrap()).unwrap();
        let direct = conv2d_standard(&x, &w, &g).unwrap();
        let flat = direct.clone().reshape(vec![g.out_h() * g.out_w(), g.channels_out]).unwrap();
        prop_assert!(rel_error(&lowered, &flat) <= TOL);
    }

    #[test]
    fn fuse_matches_loops(g in geometry(), half in any::<bool>(), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = g.channels_in * 2;
        let g = ConvGeometry { channels_in: c, ..g };
        let v = if half { FuseVariant::Half } else { FuseVariant::Full };
        let x = rand(vec![g.input_h, g.input_w, c], &mut rng);
        let filters = FuseFilters {
            row: rand(vec![g.kernel, v.row_channels(c).len()], &mut rng),
            col: rand(vec![g.kernel, v.col_channels(c).len()], &mut rng),
            pointwise: rand(vec![g.channels_out, v.intermediate_channels(c)], &mut rng),
        };
        let (mid, _) = fuse_mid(&x, &filters.row, &filters.col, half, g.kernel, g.stride, g.padding);
        let (want, _) = pointwise(&mid, &filters.pointwise);
        let got = fuseconv(&x, v, &filters, &g).unwrap();
        prop_assert!(rel_error(&got, &want) <= TOL);
        // Drop-in: same shape as the depthwise separable layer.
        let dw = conv2d_depthwise(&x, &rand(vec![g.kernel, g.kernel, c], &mut rng), &g).unwrap();
        prop_assert_eq!(got.shape(), &[dw.shape()[0], dw.shape()[1], g.channels_out][..]);
    }

    #[test]
    fn operators_are_linear(g in geometry(), a in -2.0f32..2.0, b in -2.0f32..2.0, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shape = vec![g.input_h, g.input_w, g.channels_in];
        let (x, y) = (rand(shape.clone(), &mut rng), rand(shape, &mut rng));
        let mix = sum(&scaled(&x, a), &scaled(&y, b));
        let w = rand(vec![g.channels_out, g.kernel, g.kernel, g.channels_in], &mut rng);
        let d = rand(vec![g.kernel, g.kernel, g.channels_in], &mut rng);
        let f = rand(vec![g.kernel, g.channels_in], &mut rng);
        let p = rand(vec![g.channels_out, g.channels_in], &mut rng);
        type Op<'a> = Box<dyn Fn(&Tensor) -> Tensor + 'a>;
        let ops: Vec<Op> = vec![
            Box::new(|t| conv2d_standard(t, &w, &g).unwrap()),
            Box::new(|t| conv2d_depthwise(t, &d, &g).unwrap()),
            Box::new(|t| conv1d_row(t, &f, &g).unwrap()),
            Box::new(|t| conv1d_col(t, &f, &g).unwrap()),
            Box::new(|t| conv_pointwise(t, &p).unwrap()),
            Box::new(|t| im2col(t, &g).unwrap()),
        ];
        for op in &ops {
            let lhs = op(&mix);
            let rhs = sum(&scaled(&op(&x), a), &scaled(&op(&y), b));
            // Absolute slack for cancellation when a and b nearly cancel.
            let scale = rhs.data().iter().fold(1.0f32, |m, v| m.max(v.abs()));
            let err = lhs.data().iter().zip(rhs.data()).fold(0.0f32, |m, (u, v)| m.max((u - v).abs()));
            prop_assert!(err / scale <= 1e-5, "error {}", err / scale);
        }
    }

    #[test]
    fn half_saves_the_kernel_ratio(h in 3usize..30, c2 in 1usize..40, co in 1usize..80, k in 1usize..6) {
        let c = 2 * c2;
        let g = ConvGeometry::new(h.max(k), h.max(k), c, k, co, 1, k / 2);
        let dw = LayerSpec::new("l", LayerKind::DepthwiseSeparable, g);
        let half = LayerSpec::new("l", LayerKind::FuSeHalf, g);
        let (a, b) = (ops::count_macs(&dw).unwrap() as u128, ops::count_macs(&half).unwrap() as u128);
        // a / b == (K^2 + C') / (K + C') exactly.
        let (k, co) = (k as u128, co as u128);
        prop_assert_eq!(a * (k + co), b * (k * k + co));
    }
}

#[test]
fn hand_cases() {
    let ones = |s: Vec<usize>| Tensor::from_fn(s, |_| 1.0).unwrap();
    let g = ConvGeometry::valid(3, 3, 1, 3, 1);
    assert_eq!(conv2d_standard(&ones(vec![3, 3, 1]), &ones(vec![1, 3, 3, 1]), &g).unwrap().data(), &[9.0]);

    let x = Tensor::new(vec![1, 4, 1], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
    let row = conv1d_row(&x, &ones(vec![2, 1]), &ConvGeometry::valid(1, 4, 1, 2, 1)).unwrap();
    assert_eq!(row.data(), &[3.0, 5.0, 7.0]);

    let x = Tensor::from_fn(vec![3, 3, 1], |i| i as f32).unwrap();
    let cols = im2col(&x, &ConvGeometry::valid(3, 3, 1, 3, 1)).unwrap();
    assert_eq!(cols.shape(), &[1, 9]);
    assert_eq!(cols.data(), x.data());

    let x = Tensor::from_fn(vec![4, 4, 1], |i| i as f32).unwrap();
    let cols = im2col(&x, &ConvGeometry::valid(4, 4, 1, 3, 1)).unwrap();
    assert_eq!(cols.shape(), &[4, 9]);
    assert_eq!(&cols.data()[9..18], &[1.0, 2.0, 3.0, 5.0, 6.0, 7.0, 9.0, 10.0, 11.0]);
    assert_eq!(&cols.data()[27..36], &[5.0, 6.0, 7.0, 9.0, 10.0, 11.0, 13.0, 14.0, 15.0]);
}

#[test]
fn identity_cases() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = rand(vec![4, 5, 2], &mut rng);
    let one = Tensor::from_fn(vec![1, 1, 2], |_| 1.0).unwrap();
    assert_eq!(conv2d_depthwise(&x, &one, &ConvGeometry::valid(4, 5, 2, 1, 2)).unwrap(), x);
    let eye = Tensor::from_fn(vec![2, 2], |i| if i % 3 == 0 { 1.0 } else { 0.0 }).unwrap();
    assert_eq!(conv_pointwise(&x, &eye).unwrap(), x);
    let f = Tensor::from_fn(vec![1, 2], |_| 1.0).unwrap();
    assert_eq!(conv1d_row(&x, &f, &ConvGeometry::valid(4, 5, 2, 1, 2)).unwrap(), x);
    assert_eq!(conv1d_col(&x, &f, &ConvGeometry::valid(4, 5, 2, 1, 2)).unwrap(), x);
}

#[test]
fn counts_match_the_oracle_multiplies() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for (kind, g) in [
        (LayerKind::Standard, ConvGeometry::new(8, 8, 3, 3, 2, 1, 1)),
        (LayerKind::DepthwiseSeparable, ConvGeometry::new(9, 7, 4, 3, 5, 2, 1)),
        (LayerKind::FuSeFull, ConvGeometry::new(9, 7, 4, 3, 5, 2, 1)),
        (LayerKind::FuSeHalf, ConvGeometry::new(6, 6, 4, 5, 3, 1, 2)),
    ] {
        let layer = LayerSpec::new("l", kind, g);
        let ops = fuseconv::sim::LayerOperands::random(&layer, 4).unwrap();
        let (_, mults) = common::layer_oracle(&layer, &ops);
        assert_eq!(ops::count_macs(&layer).unwrap(), mults, "{kind}");
    }
    let x = rand(vec![112, 112, 32], &mut rng);
    let w = rand(vec![3, 3, 32], &mut rng);
    let (_, mults) = depthwise(&x, &w, 1, 1);
    assert_eq!(mults, 3_612_672);
}

#[test]
fn published_layer_counts() {
    let g = ConvGeometry::new(14, 14, 96, 3, 96, 1, 1);
    let dw = LayerSpec::new("l", LayerKind::DepthwiseSeparable, g);
    let half = LayerSpec::new("l", LayerKind::FuSeHalf, g);
    assert_eq!(ops::count_macs(&dw).unwrap(), 1_975_680);
    assert_eq!(ops::count_macs(&half).unwrap(), 1_862_784);

    let g = ConvGeometry::new(8, 8, 32, 3, 64, 1, 1);
    let dw = LayerSpec::new("l", LayerKind::DepthwiseSeparable, g);
    let half = LayerSpec::new("l", LayerKind::FuSeHalf, g);
    assert_eq!(ops::count_params(&dw).unwrap(), 2336);
    assert_eq!(ops::count_params(&half).unwrap(), 2144);
    // Stored weights of the generated operands agree with the count.
    let w = fuseconv::sim::LayerOperands::random(&half, 0).unwrap();
    let stored = match w.weights {
        fuseconv::sim::LayerWeights::Fuse { row, col, pointwise, .. } => row.len() + col.len() + pointwise.len(),
        _ => unreachable!(),
    };
    assert_eq!(stored, 2144);
}

#[test]
fn shape_errors_name_the_dimension() {
    let x = Tensor::zeros(vec![4, 4, 3]).unwrap();
    let w = Tensor::zeros(vec![2, 3, 3, 2]).unwrap();
    let err = conv2d_standard(&x, &w, &ConvGeometry::valid(4, 4, 3, 3, 2)).unwrap_err();
    assert!(err.to_string().contains('2') && err.to_string().contains('3'), "{err}");
    let odd = Tensor::zeros(vec![4, 4, 3]).unwrap();
    let f = FuseFilters {
        row: Tensor::zeros(vec![3, 1]).unwrap(),
        col: Tensor::zeros(vec![3, 2]).unwrap(),
        pointwise: Tensor::zeros(vec![2, 3]).unwrap(),
    };
    assert!(matches!(
        fuseconv(&odd, FuseVariant::Half, &f, &ConvGeometry::valid(4, 4, 3, 3, 2)),
        Err(ops::OpsError::OddChannels(3))
    ));
}
