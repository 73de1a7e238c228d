use super::{ConvGeometry, OpsError, Tensor};

/// Unrolls every receptive field into a row: `[H, W, C]` to `[N*M, K*K*C]`.
///
/// Columns are ordered `(i, j, c)` so that multiplying by
/// [`filters_as_matrix`] reproduces [`super::conv2d_standard`].
pub fn im2col(input: &Tensor, geom: &ConvGeometry) -> Result<Tensor, OpsError> {
    geom.validate()?;
    let (h, w, c) = input.dims3("input")?;
    if (h, w, c) != (geom.input_h, geom.input_w, geom.channels_in) {
        return Err(OpsError::ShapeMismatch(format!(
            "input is {h}x{w}x{c} but geometry declares {}x{}x{}",
            geom.input_h, geom.input_w, geom.channels_in
        )));
    }
    let (n_out, m_out, k) = (geom.out_h(), geom.out_w(), geom.kernel);
    let cols = k * k * c;
    let x = input.data();
    let mut out = Vec::with_capacity(n_out * m_out * cols);
    for n in 0..n_out {
        for m in 0..m_out {
            for i in 0..k {
                let y = (n * geom.stride + i) as isize - geom.padding as isize;
                for j in 0..k {
                    let xx = (m * geom.stride + j) as isize - geom.padding as isize;
                    if y < 0 || xx < 0 || y as usize >= h || xx as usize >= w {
                        out.extend(std::iter::repeat_n(0.0, c));
                    } else {
                        let at = (y as usize * w + xx as usize) * c;
                        out.extend_from_slice(&x[at..at + c]);
                    }
                }
            }
        }
    }
    Tensor::new(vec![n_out * m_out, cols], out)
}

/// `[C', K, K, C]` filters as a `[K*K*C, C']` matrix.
pub fn filters_as_matrix(filters: &Tensor) -> Result<Tensor, OpsError> {
    let (f, rest) = match filters.shape() {
        [f, a, b, c] => (*f, a * b * c),
        s => {
            return Err(OpsError::ShapeMismatch(format!(
                "filters must be rank 4, got {s:?}"
            )))
        }
    };
    let d = filters.data();
    let mut out = vec![0.0; f * rest];
    for fi in 0..f {
        for r in 0..rest {
            out[r * f + fi] = d[fi * rest + r];
        }
    }
    Tensor::new(vec![rest, f], out)
}
