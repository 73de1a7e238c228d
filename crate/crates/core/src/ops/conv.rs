use super::{out_extent, ConvGeometry, OpsError, Tensor};

fn expect_input(input: &Tensor, geom: &ConvGeometry) -> Result<(), OpsError> {
    let (h, w, c) = input.dims3("input")?;
    for (name, got, want) in [
        ("height", h, geom.input_h),
        ("width", w, geom.input_w),
        ("channel", c, geom.channels_in),
    ] {
        if got != want {
            return Err(OpsError::ShapeMismatch(format!(
                "input {name} is {got} but geometry declares {want}"
            )));
        }
    }
    Ok(())
}

/// Reads `input[y, x, c]` with zero padding outside the feature map.
#[inline]
fn padded(input: &[f32], w: usize, c_total: usize, h: usize, y: isize, x: isize, c: usize) -> f32 {
    if y < 0 || x < 0 || y as usize >= h || x as usize >= w {
        0.0
    } else {
        input[(y as usize * w + x as usize) * c_total + c]
    }
}

/// Standard convolution: `[H, W, C]` with `[C', K, K, C]` filters to `[N, M, C']`.
pub fn conv2d_standard(input: &Tensor, filters: &Tensor, geom: &ConvGeometry) -> Result<Tensor, OpsError> {
    geom.validate()?;
    expect_input(input, geom)?;
    let want = [geom.channels_out, geom.kernel, geom.kernel, geom.channels_in];
    if filters.shape() != want {
        return Err(OpsError::ShapeMismatch(format!(
            "filters have shape {:?}, expected {:?} (C', K, K, C)",
            filters.shape(),
            want
        )));
    }
    let (h, w, c) = (geom.input_h, geom.input_w, geom.channels_in);
    let (n_out, m_out, k) = (geom.out_h(), geom.out_w(), geom.kernel);
    let f_out = geom.channels_out;
    let x = input.data();
    let wt = filters.data();
    let mut out = vec![0.0f32; n_out * m_out * f_out];
    for n in 0..n_out {
        for m in 0..m_out {
            let base = (n * m_out + m) * f_out;
            for f in 0..f_out {
                let mut acc = 0.0f32;
                for i in 0..k {
                    let y = (n * geom.stride + i) as isize - geom.padding as isize;
                    for j in 0..k {
                        let xx = (m * geom.stride + j) as isize - geom.padding as isize;
                        let wrow = ((f * k + i) * k + j) * c;
                        for ch in 0..c {
                            acc += padded(x, w, c, h, y, xx, ch) * wt[wrow + ch];
                        }
                    }
                }
                out[base + f] = acc;
            }
        }
    }
    Tensor::new(vec![n_out, m_out, f_out], out)
}

/// Depthwise convolution: every channel convolved with its own `K x K` filter.
pub fn conv2d_depthwise(input: &Tensor, filters: &Tensor, geom: &ConvGeometry) -> Result<Tensor, OpsError> {
    geom.validate()?;
    expect_input(input, geom)?;
    let k = geom.kernel;
    let c = geom.channels_in;
    match filters.shape() {
        [a, b, fc] if *a == k && *b == k => {
            if *fc != c {
                return Err(OpsError::ShapeMismatch(format!(
                    "depthwise filters cover {fc} channels but input has {c}"
                )));
            }
        }
        s => {
            return Err(OpsError::ShapeMismatch(format!(
                "depthwise filters have shape {s:?}, expected [{k}, {k}, {c}]"
            )))
        }
    }
    let (h, w) = (geom.input_h, geom.input_w);
    let (n_out, m_out) = (geom.out_h(), geom.out_w());
    let x = input.data();
    let wt = filters.data();
    let mut out = vec![0.0f32; n_out * m_out * c];
    for n in 0..n_out {
        for m in 0..m_out {
            for ch in 0..c {
                let mut acc = 0.0f32;
                for i in 0..k {
                    let y = (n * geom.stride + i) as isize - geom.padding as isize;
                    for j in 0..k {
                        let xx = (m * geom.stride + j) as isize - geom.padding as isize;
                        acc += padded(x, w, c, h, y, xx, ch) * wt[(i * k + j) * c + ch];
                    }
                }
                out[(n * m_out + m) * c + ch] = acc;
            }
        }
    }
    Tensor::new(vec![n_out, m_out, c], out)
}

/// Pointwise (1x1) convolution with `[C', C]` filters.
pub fn conv_pointwise(input: &Tensor, filters: &Tensor) -> Result<Tensor, OpsError> {
    let (h, w, c) = input.dims3("input")?;
    let (f_out, fc) = filters.dims2("pointwise filters")?;
    if fc != c {
        return Err(OpsError::ShapeMismatch(format!(
            "pointwise filters expect {fc} input channels but input has {c}"
        )));
    }
    let x = input.data();
    let wt = filters.data();
    let mut out = Vec::with_capacity(h * w * f_out);
    for px in x.chunks_exact(c) {
        for row in wt.chunks_exact(c) {
            out.push(px.iter().zip(row).map(|(a, b)| a * b).sum());
        }
    }
    Tensor::new(vec![h, w, f_out], out)
}

fn check_1d(input: &Tensor, filters: &Tensor, geom: &ConvGeometry, along: usize) -> Result<usize, OpsError> {
    let (h, w, c) = input.dims3("input")?;
    if (h, w, c) != (geom.input_h, geom.input_w, geom.channels_in) {
        return Err(OpsError::ShapeMismatch(format!(
            "input is {h}x{w}x{c} but geometry declares {}x{}x{}",
            geom.input_h, geom.input_w, geom.channels_in
        )));
    }
    let (fk, fc) = filters.dims2("1D filters")?;
    if fk != geom.kernel || fc != c {
        return Err(OpsError::ShapeMismatch(format!(
            "1D filters have shape [{fk}, {fc}], expected [{}, {c}]",
            geom.kernel
        )));
    }
    out_extent(along, geom.kernel, geom.stride, geom.padding)
}

/// 1D convolution of every row along the width axis: `[H, W, Cg]` to `[H, M, Cg]`.
pub fn conv1d_row(input: &Tensor, filters: &Tensor, geom: &ConvGeometry) -> Result<Tensor, OpsError> {
    let m_out = check_1d(input, filters, geom, geom.input_w)?;
    let (h, w, c) = (geom.input_h, geom.input_w, geom.channels_in);
    let k = geom.kernel;
    let x = input.data();
    let wt = filters.data();
    let mut out = vec![0.0f32; h * m_out * c];
    for y in 0..h {
        for m in 0..m_out {
            for ch in 0..c {
                let mut acc = 0.0f32;
                for t in 0..k {
                    let xx = (m * geom.stride + t) as isize - geom.padding as isize;
                    acc += padded(x, w, c, h, y as isize, xx, ch) * wt[t * c + ch];
                }
                out[(y * m_out + m) * c + ch] = acc;
            }
        }
    }
    Tensor::new(vec![h, m_out, c], out)
}

/// 1D convolution of every column along the height axis: `[H, W, Cg]` to `[N, W, Cg]`.
pub fn conv1d_col(input: &Tensor, filters: &Tensor, geom: &ConvGeometry) -> Result<Tensor, OpsError> {
    let n_out = check_1d(input, filters, geom, geom.input_h)?;
    let (h, w, c) = (geom.input_h, geom.input_w, geom.channels_in);
    let k = geom.kernel;
    let x = input.data();
    let wt = filters.data();
    let mut out = vec![0.0f32; n_out * w * c];
    for n in 0..n_out {
        for xx in 0..w {
            for ch in 0..c {
                let mut acc = 0.0f32;
                for t in 0..k {
                    let y = (n * geom.stride + t) as isize - geom.padding as isize;
                    acc += padded(x, w, c, h, y, xx as isize, ch) * wt[t * c + ch];
                }
                out[(n * w + xx) * c + ch] = acc;
            }
        }
    }
    Tensor::new(vec![n_out, w, c], out)
}

/// Dense `[m, k] x [k, n]` product.
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor, OpsError> {
    let (m, k) = a.dims2("left matrix")?;
    let (kb, n) = b.dims2("right matrix")?;
    if k != kb {
        return Err(OpsError::ShapeMismatch(format!(
            "inner dimensions differ: {k} vs {kb}"
        )));
    }
    let (ad, bd) = (a.data(), b.data());
    let mut out = vec![0.0f32; m * n];
    for i in 0..m {
        let row = &ad[i * k..(i + 1) * k];
        let dst = &mut out[i * n..(i + 1) * n];
        for (t, &av) in row.iter().enumerate() {
            for (o, &bv) in dst.iter_mut().zip(&bd[t * n..(t + 1) * n]) {
                *o += av * bv;
            }
        }
    }
    Tensor::new(vec![m, n], out)
}
