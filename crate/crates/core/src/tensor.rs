//! Dense row-major tensors and the raw kernels the tape is built on.
//!
//! Kernels here never record anything; they are plain functions from
//! tensors to tensors. Shape checks return [`Error::ShapeMismatch`] naming
//! the operation and both shapes.

use crate::error::{Error, Result};

#[cfg(not(feature = "f32"))]
pub type Scalar = f64;
#[cfg(feature = "f32")]
pub type Scalar = f32;

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<Scalar>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<Scalar>) -> Result<Self> {
        if shape.is_empty() || shape.iter().any(|&d| d == 0) {
            return Err(Error::InvalidShape {
                op: "tensor",
                msg: format!("dimensions must be positive, got {shape:?}"),
            });
        }
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::InvalidShape {
                op: "tensor",
                msg: format!("shape {shape:?} needs {expected} values, got {}", data.len()),
            });
        }
        Ok(Self { shape, data })
    }

    pub fn full(shape: &[usize], value: Scalar) -> Self {
        let n = shape.iter().product();
        Self::new(shape.to_vec(), vec![value; n]).expect("positive shape")
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn ones(shape: &[usize]) -> Self {
        Self::full(shape, 1.0)
    }

    pub fn scalar(value: Scalar) -> Self {
        Self {
            shape: vec![1],
            data: vec![value],
        }
    }

    pub fn vector(data: Vec<Scalar>) -> Self {
        let n = data.len();
        Self::new(vec![n], data).expect("non-empty vector")
    }

    /// Builds a `[1 × n]` row.
    pub fn row(data: Vec<Scalar>) -> Self {
        let n = data.len();
        Self::new(vec![1, n], data).expect("non-empty row")
    }

    pub fn from_rows(rows: &[Vec<Scalar>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::InvalidShape {
                op: "from_rows",
                msg: "ragged rows".into(),
            });
        }
        Self::new(vec![rows.len(), cols], rows.concat())
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[Scalar] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Scalar] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<Scalar> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    /// The single value of a one-element tensor.
    pub fn item(&self) -> Option<Scalar> {
        (self.data.len() == 1).then(|| self.data[0])
    }

    pub fn dims2(&self, op: &'static str) -> Result<(usize, usize)> {
        match self.shape[..] {
            [r, c] => Ok((r, c)),
            _ => Err(Error::InvalidShape {
                op,
                msg: format!("expected a matrix, got shape {:?}", self.shape),
            }),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(Scalar) -> Scalar) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(
        &self,
        other: &Tensor,
        op: &'static str,
        f: impl Fn(Scalar, Scalar) -> Scalar,
    ) -> Result<Tensor> {
        self.expect_same_shape(other, op)?;
        Ok(Tensor {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn add_assign(&mut self, other: &Tensor) -> Result<()> {
        self.expect_same_shape(other, "add_assign")?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    fn expect_same_shape(&self, other: &Tensor, op: &'static str) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::ShapeMismatch {
                op,
                lhs: self.shape.clone(),
                rhs: other.shape.clone(),
            });
        }
        Ok(())
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor> {
        let n: usize = shape.iter().product();
        if n != self.len() || shape.iter().any(|&d| d == 0) {
            return Err(Error::ShapeMismatch {
                op: "reshape",
                lhs: self.shape.clone(),
                rhs: shape.to_vec(),
            });
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data: self.data.clone(),
        })
    }

    pub fn transpose(&self) -> Result<Tensor> {
        let (r, c) = self.dims2("transpose")?;
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = self.data[i * c + j];
            }
        }
        Tensor::new(vec![c, r], out)
    }

    /// `self · rhs` for matrices `[m × k]` and `[k × n]`.
    pub fn matmul(&self, rhs: &Tensor) -> Result<Tensor> {
        let (m, k) = self.dims2("matmul")?;
        let (k2, n) = rhs.dims2("matmul")?;
        if k != k2 {
            return Err(Error::ShapeMismatch {
                op: "matmul",
                lhs: self.shape.clone(),
                rhs: rhs.shape.clone(),
            });
        }
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let out_row = &mut out[i * n..(i + 1) * n];
            for (p, &a) in self.data[i * k..(i + 1) * k].iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let b_row = &rhs.data[p * n..(p + 1) * n];
                for (o, &b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Tensor::new(vec![m, n], out)
    }

    /// `self · rhsᵀ`.
    pub fn matmul_nt(&self, rhs: &Tensor) -> Result<Tensor> {
        let (_, k) = self.dims2("matmul_nt")?;
        let (_, k2) = rhs.dims2("matmul_nt")?;
        if k != k2 {
            return Err(Error::ShapeMismatch {
                op: "matmul_nt",
                lhs: self.shape.clone(),
                rhs: rhs.shape.clone(),
            });
        }
        // Row-by-row accumulation over a transposed copy vectorizes far
        // better than per-element dot products.
        self.matmul(&rhs.transpose()?)
    }

    /// `selfᵀ · rhs` without materializing the transpose.
    pub fn matmul_tn(&self, rhs: &Tensor) -> Result<Tensor> {
        let (k, m) = self.dims2("matmul_tn")?;
        let (k2, n) = rhs.dims2("matmul_tn")?;
        if k != k2 {
            return Err(Error::ShapeMismatch {
                op: "matmul_tn",
                lhs: self.shape.clone(),
                rhs: rhs.shape.clone(),
            });
        }
        let mut out = vec![0.0; m * n];
        for p in 0..k {
            let a_row = &self.data[p * m..(p + 1) * m];
            let b_row = &rhs.data[p * n..(p + 1) * n];
            for (i, &a) in a_row.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let out_row = &mut out[i * n..(i + 1) * n];
                for (o, &b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Tensor::new(vec![m, n], out)
    }

    /// Adds `part` into the block of `self` that starts at `start` along
    /// `axis`; the inverse of [`slice`](Self::slice) for accumulation.
    pub fn add_into_slice(&mut self, part: &Tensor, axis: usize, start: usize) -> Result<()> {
        check_axis(&self.shape, axis, "add_into_slice")?;
        let len = part.shape.get(axis).copied().unwrap_or(0);
        let mut expect = self.shape.clone();
        expect[axis] = len;
        if part.shape != expect || start + len > self.shape[axis] {
            return Err(Error::ShapeMismatch {
                op: "add_into_slice",
                lhs: self.shape.clone(),
                rhs: part.shape.clone(),
            });
        }
        let (outer, dim, inner) = split_axis(&self.shape, axis);
        for o in 0..outer {
            let d = o * dim * inner + start * inner;
            let s = o * len * inner;
            for (a, b) in self.data[d..d + len * inner].iter_mut().zip(&part.data[s..s + len * inner]) {
                *a += b;
            }
        }
        Ok(())
    }

    pub fn concat(parts: &[&Tensor], axis: usize) -> Result<Tensor> {
        let first = parts.first().ok_or_else(|| Error::InvalidShape {
            op: "concat",
            msg: "nothing to concatenate".into(),
        })?;
        check_axis(first.shape(), axis, "concat")?;
        for p in &parts[1..] {
            let compatible = p.rank() == first.rank()
                && p.shape
                    .iter()
                    .zip(&first.shape)
                    .enumerate()
                    .all(|(d, (a, b))| d == axis || a == b);
            if !compatible {
                return Err(Error::ShapeMismatch {
                    op: "concat",
                    lhs: first.shape.clone(),
                    rhs: p.shape.clone(),
                });
            }
        }
        let (outer, _, inner) = split_axis(first.shape(), axis);
        let total: usize = parts.iter().map(|p| p.shape[axis]).sum();
        let mut data = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for p in parts {
                let block = p.shape[axis] * inner;
                data.extend_from_slice(&p.data[o * block..(o + 1) * block]);
            }
        }
        let mut shape = first.shape.clone();
        shape[axis] = total;
        Tensor::new(shape, data)
    }

    pub fn slice(&self, axis: usize, start: usize, len: usize) -> Result<Tensor> {
        check_axis(&self.shape, axis, "slice")?;
        if len == 0 || start + len > self.shape[axis] {
            return Err(Error::OutOfRange(format!(
                "slice [{start}, {}) on axis {axis} of shape {:?}",
                start + len,
                self.shape
            )));
        }
        let (outer, dim, inner) = split_axis(&self.shape, axis);
        let mut data = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = o * dim * inner + start * inner;
            data.extend_from_slice(&self.data[base..base + len * inner]);
        }
        let mut shape = self.shape.clone();
        shape[axis] = len;
        Tensor::new(shape, data)
    }

    /// Sums over `axis`, dropping it. A rank-1 input yields shape `[1]`.
    pub fn sum_axis(&self, axis: usize) -> Result<Tensor> {
        check_axis(&self.shape, axis, "sum_axis")?;
        let (outer, dim, inner) = split_axis(&self.shape, axis);
        let mut data = vec![0.0; outer * inner];
        for o in 0..outer {
            for a in 0..dim {
                let src = &self.data[(o * dim + a) * inner..(o * dim + a + 1) * inner];
                for (d, s) in data[o * inner..(o + 1) * inner].iter_mut().zip(src) {
                    *d += s;
                }
            }
        }
        Tensor::new(reduced_shape(&self.shape, axis), data)
    }

    pub fn sum(&self) -> Scalar {
        self.data.iter().sum()
    }

    pub fn softmax_axis(&self, axis: usize) -> Result<Tensor> {
        check_axis(&self.shape, axis, "softmax")?;
        let (outer, dim, inner) = split_axis(&self.shape, axis);
        let mut data = self.data.clone();
        for o in 0..outer {
            for i in 0..inner {
                let idx = |a: usize| (o * dim + a) * inner + i;
                let max = (0..dim)
                    .map(|a| data[idx(a)])
                    .fold(Scalar::NEG_INFINITY, Scalar::max);
                let mut total = 0.0;
                for a in 0..dim {
                    let e = (data[idx(a)] - max).exp();
                    data[idx(a)] = e;
                    total += e;
                }
                for a in 0..dim {
                    data[idx(a)] /= total;
                }
            }
        }
        Tensor::new(self.shape.clone(), data)
    }
}

/// `(outer, dim, inner)` extents around `axis` for a row-major shape.
pub(crate) fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

pub(crate) fn reduced_shape(shape: &[usize], axis: usize) -> Vec<usize> {
    let mut out: Vec<usize> = shape.to_vec();
    out.remove(axis);
    if out.is_empty() {
        out.push(1);
    }
    out
}

pub(crate) fn check_axis(shape: &[usize], axis: usize, op: &'static str) -> Result<()> {
    if axis >= shape.len() {
        return Err(Error::InvalidShape {
            op,
            msg: format!("axis {axis} out of range for shape {shape:?}"),
        });
    }
    Ok(())
}
