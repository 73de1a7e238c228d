use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::{conv1d_col, conv1d_row, conv_pointwise, ConvGeometry, OpsError, Tensor};

/// FuSe variant, selected by the channel divisor `D`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FuseVariant {
    /// `D = 1`: row and column filters both cover all `C` channels.
    Full,
    /// `D = 2`: row filters cover the first `C/2` channels, column filters the rest.
    Half,
}

impl FuseVariant {
    pub fn divisor(self) -> usize {
        match self {
            FuseVariant::Full => 1,
            FuseVariant::Half => 2,
        }
    }

    pub fn check_channels(self, c: usize) -> Result<(), OpsError> {
        if self == FuseVariant::Half && !c.is_multiple_of(2) {
            return Err(OpsError::OddChannels(c));
        }
        Ok(())
    }

    /// Input channels the row filters read.
    pub fn row_channels(self, c: usize) -> Range<usize> {
        match self {
            FuseVariant::Full => 0..c,
            FuseVariant::Half => 0..c / 2,
        }
    }

    /// Input channels the column filters read.
    pub fn col_channels(self, c: usize) -> Range<usize> {
        match self {
            FuseVariant::Full => 0..c,
            FuseVariant::Half => c / 2..c,
        }
    }

    /// Channels entering the pointwise stage: `2C / D`.
    pub fn intermediate_channels(self, c: usize) -> usize {
        2 * c / self.divisor()
    }
}

/// Weights of one FuSe layer.
#[derive(Debug, Clone, PartialEq)]
pub struct FuseFilters {
    /// `[K, C_row]`
    pub row: Tensor,
    /// `[K, C_col]`
    pub col: Tensor,
    /// `[C', 2C/D]`
    pub pointwise: Tensor,
}

fn sub_geometry(geom: &ConvGeometry, channels: usize) -> ConvGeometry {
    ConvGeometry {
        channels_in: channels,
        channels_out: channels,
        ..*geom
    }
}

/// Concatenated row- and column-filter outputs, `[N, M, 2C/D]`.
///
/// Row filters run along the width of the input rows centred on each output
/// row, column filters along the height of the input columns centred on each
/// output column, so both halves share the `N x M` grid of the square
/// depthwise convolution they replace. With stride `s` each 1D filter strides
/// along its own axis and the orthogonal axis is subsampled by `s`.
pub fn fuse_intermediate(
    input: &Tensor,
    variant: FuseVariant,
    row: &Tensor,
    col: &Tensor,
    geom: &ConvGeometry,
) -> Result<Tensor, OpsError> {
    geom.validate()?;
    let (h, w, c) = input.dims3("input")?;
    if (h, w, c) != (geom.input_h, geom.input_w, geom.channels_in) {
        return Err(OpsError::ShapeMismatch(format!(
            "input is {h}x{w}x{c} but geometry declares {}x{}x{}",
            geom.input_h, geom.input_w, geom.channels_in
        )));
    }
    variant.check_channels(c)?;
    let (n_out, m_out) = (geom.out_h(), geom.out_w());
    let rows = variant.row_channels(c);
    let cols = variant.col_channels(c);
    for (what, filt, range) in [("row", row, &rows), ("column", col, &cols)] {
        let (fk, fc) = filt.dims2(what)?;
        if fk != geom.kernel || fc != range.len() {
            return Err(OpsError::ShapeMismatch(format!(
                "{what} filters have shape [{fk}, {fc}], expected [{}, {}]",
                geom.kernel,
                range.len()
            )));
        }
    }

    let row_in = input.channel_slice(rows.start, rows.end)?;
    let row_full = conv1d_row(&row_in, row, &sub_geometry(geom, rows.len()))?;
    let cr = rows.len();
    let mut row_out = vec![0.0f32; n_out * m_out * cr];
    for n in 0..n_out {
        let y = geom.centre_offset(n);
        if y < 0 || y as usize >= h {
            continue;
        }
        let src = y as usize * m_out * cr;
        let dst = n * m_out * cr;
        row_out[dst..dst + m_out * cr].copy_from_slice(&row_full.data()[src..src + m_out * cr]);
    }
    let row_out = Tensor::new(vec![n_out, m_out, cr], row_out)?;

    let col_in = input.channel_slice(cols.start, cols.end)?;
    let col_full = conv1d_col(&col_in, col, &sub_geometry(geom, cols.len()))?;
    let cc = cols.len();
    let mut col_out = vec![0.0f32; n_out * m_out * cc];
    for m in 0..m_out {
        let x = geom.centre_offset(m);
        if x < 0 || x as usize >= w {
            continue;
        }
        for n in 0..n_out {
            let src = (n * w + x as usize) * cc;
            let dst = (n * m_out + m) * cc;
            col_out[dst..dst + cc].copy_from_slice(&col_full.data()[src..src + cc]);
        }
    }
    let col_out = Tensor::new(vec![n_out, m_out, cc], col_out)?;

    Tensor::concat_channels(&[&row_out, &col_out])
}

/// FuSe convolution: 1D row and column filters followed by a pointwise
/// convolution to `C'` channels. A drop-in replacement for a depthwise
/// separable layer of the same geometry.
pub fn fuseconv(
    input: &Tensor,
    variant: FuseVariant,
    filters: &FuseFilters,
    geom: &ConvGeometry,
) -> Result<Tensor, OpsError> {
    let mid = fuse_intermediate(input, variant, &filters.row, &filters.col, geom)?;
    let (f_out, fc) = filters.pointwise.dims2("pointwise filters")?;
    if f_out != geom.channels_out || fc != variant.intermediate_channels(geom.channels_in) {
        return Err(OpsError::ShapeMismatch(format!(
            "pointwise filters have shape [{f_out}, {fc}], expected [{}, {}]",
            geom.channels_out,
            variant.intermediate_channels(geom.channels_in)
        )));
    }
    conv_pointwise(&mid, &filters.pointwise)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ones(shape: Vec<usize>) -> Tensor {
        Tensor::from_fn(shape, |_| 1.0).unwrap()
    }

    #[test]
    fn single_tap_full_duplicates_channels() {
        let x = Tensor::from_fn(vec![3, 3, 2], |i| i as f32).unwrap();
        let g = ConvGeometry::valid(3, 3, 2, 1, 2);
        let mid = fuse_intermediate(&x, FuseVariant::Full, &ones(vec![1, 2]), &ones(vec![1, 2]), &g).unwrap();
        assert_eq!(mid.channel_slice(0, 2).unwrap(), x);
        assert_eq!(mid.channel_slice(2, 4).unwrap(), x);
    }

    #[test]
    fn single_tap_half_with_identity_pointwise_is_identity() {
        let x = Tensor::from_fn(vec![2, 3, 4], |i| i as f32 * 0.5).unwrap();
        let g = ConvGeometry::valid(2, 3, 4, 1, 4);
        let eye = Tensor::from_fn(vec![4, 4], |i| if i % 5 == 0 { 1.0 } else { 0.0 }).unwrap();
        let filters = FuseFilters {
            row: ones(vec![1, 2]),
            col: ones(vec![1, 2]),
            pointwise: eye,
        };
        assert_eq!(fuseconv(&x, FuseVariant::Half, &filters, &g).unwrap(), x);
    }

    #[test]
    fn half_rejects_odd_channels() {
        let x = ones(vec![3, 3, 3]);
        let g = ConvGeometry::valid(3, 3, 3, 1, 3);
        let err = fuse_intermediate(&x, FuseVariant::Half, &ones(vec![1, 1]), &ones(vec![1, 2]), &g).unwrap_err();
        assert_eq!(err, OpsError::OddChannels(3));
    }

    #[test]
    fn filter_group_mismatch_is_reported() {
        let x = ones(vec![3, 3, 4]);
        let g = ConvGeometry::valid(3, 3, 4, 1, 4);
        let err = fuse_intermediate(&x, FuseVariant::Half, &ones(vec![1, 4]), &ones(vec![1, 2]), &g).unwrap_err();
        assert!(err.to_string().contains("row filters"), "{err}");
    }

    #[test]
    fn stride_two_row_filters_read_centre_rows() {
        // 4x4 single channel, K=3, stride 2, pad 1: outputs 2x2. Output row n
        // reads input row 2n.
        let x = Tensor::from_fn(vec![4, 4, 2], |i| ((i / 2) / 4) as f32).unwrap();
        let g = ConvGeometry::new(4, 4, 2, 3, 2, 2, 1);
        let mid = fuse_intermediate(&x, FuseVariant::Half, &ones(vec![3, 1]), &ones(vec![3, 1]), &g).unwrap();
        assert_eq!(mid.shape(), &[2, 2, 2]);
        // Row stage, output (n=1, m=1): input row 2, columns 1..=3 -> 3 * 2.
        assert_eq!(mid.data()[(1 * 2 + 1) * 2], 6.0);
        // Column stage, output (n=0, m=0): rows -1..=1 of column 0 -> 0 + 0 + 1.
        assert_eq!(mid.data()[1], 1.0);
    }
}
