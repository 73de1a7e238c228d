use rand::Rng;

use super::OpsError;

/// Dense row-major `f32` tensor.
///
/// Feature maps are laid out `[H, W, C]`, standard filters `[C', K, K, C]`,
/// depthwise filters `[K, K, C]`, 1D filters `[K, C]` and pointwise filters
/// `[C', C]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f32>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> Result<Self, OpsError> {
        if shape.is_empty() || shape.contains(&0) {
            return Err(OpsError::InvalidShape(shape));
        }
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(OpsError::ShapeMismatch(format!(
                "shape {:?} holds {} elements but {} values were supplied",
                shape,
                expected,
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Result<Self, OpsError> {
        let n = shape.iter().product();
        Self::new(shape, vec![0.0; n])
    }

    pub fn from_fn(
        shape: Vec<usize>,
        mut f: impl FnMut(usize) -> f32,
    ) -> Result<Self, OpsError> {
        let n = shape.iter().product();
        Self::new(shape, (0..n).map(&mut f).collect())
    }

    /// Uniform samples in `[-1, 1]`.
    pub fn random<R: Rng + ?Sized>(shape: Vec<usize>, rng: &mut R) -> Result<Self, OpsError> {
        Self::from_fn(shape, |_| rng.gen_range(-1.0f32..=1.0))
    }

    /// The only tensor allowed to hold no elements; returned by simulations
    /// of plans without folds.
    pub fn empty() -> Self {
        Self {
            shape: vec![0],
            data: Vec::new(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    /// Extents of a rank-3 tensor, or an error naming `what`.
    pub fn dims3(&self, what: &str) -> Result<(usize, usize, usize), OpsError> {
        match self.shape[..] {
            [a, b, c] => Ok((a, b, c)),
            _ => Err(OpsError::ShapeMismatch(format!(
                "{what} must be rank 3, got shape {:?}",
                self.shape
            ))),
        }
    }

    pub fn dims2(&self, what: &str) -> Result<(usize, usize), OpsError> {
        match self.shape[..] {
            [a, b] => Ok((a, b)),
            _ => Err(OpsError::ShapeMismatch(format!(
                "{what} must be rank 2, got shape {:?}",
                self.shape
            ))),
        }
    }

    pub fn reshape(self, shape: Vec<usize>) -> Result<Self, OpsError> {
        Self::new(shape, self.data)
    }

    /// Swaps the two leading axes of a rank-3 tensor (`[H, W, C]` to `[W, H, C]`).
    pub fn transpose_hw(&self) -> Result<Self, OpsError> {
        let (h, w, c) = self.dims3("tensor")?;
        let mut out = vec![0.0; self.data.len()];
        for y in 0..h {
            for x in 0..w {
                let src = (y * w + x) * c;
                let dst = (x * h + y) * c;
                out[dst..dst + c].copy_from_slice(&self.data[src..src + c]);
            }
        }
        Self::new(vec![w, h, c], out)
    }

    /// Keeps channels `[start, end)` of a rank-3 tensor.
    pub fn channel_slice(&self, start: usize, end: usize) -> Result<Self, OpsError> {
        let (h, w, c) = self.dims3("tensor")?;
        if start >= end || end > c {
            return Err(OpsError::ShapeMismatch(format!(
                "channel range {start}..{end} outside 0..{c}"
            )));
        }
        let cs = end - start;
        let mut out = Vec::with_capacity(h * w * cs);
        for px in self.data.chunks_exact(c) {
            out.extend_from_slice(&px[start..end]);
        }
        Self::new(vec![h, w, cs], out)
    }

    /// Concatenates rank-3 tensors with equal spatial extents along channels.
    pub fn concat_channels(parts: &[&Tensor]) -> Result<Self, OpsError> {
        let first = parts
            .first()
            .ok_or_else(|| OpsError::ShapeMismatch("nothing to concatenate".into()))?;
        let (h, w, _) = first.dims3("concatenated tensor")?;
        let mut total = 0;
        for p in parts {
            let (ph, pw, pc) = p.dims3("concatenated tensor")?;
            if (ph, pw) != (h, w) {
                return Err(OpsError::ShapeMismatch(format!(
                    "spatial extents {ph}x{pw} differ from {h}x{w} in channel concatenation"
                )));
            }
            total += pc;
        }
        let mut out = Vec::with_capacity(h * w * total);
        for px in 0..h * w {
            for p in parts {
                let pc = p.shape[2];
                out.extend_from_slice(&p.data[px * pc..(px + 1) * pc]);
            }
        }
        Self::new(vec![h, w, total], out)
    }

    /// Largest element-wise relative error against `reference`, where the
    /// denominator is floored at 1 so values near zero compare absolutely.
    pub fn max_rel_error(&self, reference: &Tensor) -> Option<f32> {
        if self.shape != reference.shape {
            return None;
        }
        Some(
            self.data
                .iter()
                .zip(&reference.data)
                .map(|(a, b)| (a - b).abs() / b.abs().max(1.0))
                .fold(0.0, f32::max),
        )
    }

    pub fn approx_eq(&self, reference: &Tensor, rel_tol: f32) -> bool {
        self.max_rel_error(reference).is_some_and(|e| e <= rel_tol)
    }
}
