//! Dense matrix arithmetic and convolution lowering.
//!
//! Everything here works on row-major `f64` storage. The matrix products
//! accumulate every output entry in ascending inner-index order starting from
//! `0.0`, so results are bitwise reproducible regardless of the cache blocking
//! used internally.

use std::fmt;

use crate::error::{Error, Result};

/// Rows of the right-hand operand visited per block in [`matmul`].
const INNER_BLOCK: usize = 128;
/// Output rows visited per block in [`matmul_tn`].
const OUTPUT_BLOCK: usize = 32;

#[derive(Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::filled(rows, cols, 0.0)
    }

    pub fn ones(rows: usize, cols: usize) -> Self {
        Self::filled(rows, cols, 1.0)
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::shape(format!(
                "{} values cannot fill a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    /// Builds a matrix from nested rows; all rows must have equal length.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::shape(format!(
                    "row {i} has {} entries, expected {cols}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Ok(Matrix {
            rows: rows.len(),
            cols,
            data,
        })
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        debug_assert!(r < self.rows && c < self.cols);
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, value: f64) {
        debug_assert!(r < self.rows && c < self.cols);
        self.data[r * self.cols + c] = value;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Copies the selected rows, in order, into a new matrix.
    pub fn select_rows(&self, indices: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Matrix {
            rows: indices.len(),
            cols: self.cols,
            data,
        }
    }
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Matrix {}x{} ", self.rows, self.cols)?;
        let mut list = f.debug_list();
        for r in 0..self.rows.min(8) {
            list.entry(&self.row(r));
        }
        list.finish()
    }
}

/// `a · b`.
pub fn matmul(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols != b.rows {
        return Err(Error::shape(format!(
            "matmul of {}x{} by {}x{}",
            a.rows, a.cols, b.rows, b.cols
        )));
    }
    let mut out = Matrix::zeros(a.rows, b.cols);
    gemm_accumulate(&a.data, &b.data, &mut out.data, a.rows, a.cols, b.cols);
    Ok(out)
}

/// `aᵀ · b` without materialising the transpose.
pub fn matmul_tn(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.rows != b.rows {
        return Err(Error::shape(format!(
            "matmul_tn of ({}x{})ᵀ by {}x{}",
            a.rows, a.cols, b.rows, b.cols
        )));
    }
    let (k, m, n) = (a.rows, a.cols, b.cols);
    let mut out = Matrix::zeros(m, n);
    for i0 in (0..m).step_by(OUTPUT_BLOCK) {
        let i1 = (i0 + OUTPUT_BLOCK).min(m);
        for p in 0..k {
            let arow = &a.data[p * m..(p + 1) * m];
            let brow = &b.data[p * n..(p + 1) * n];
            for i in i0..i1 {
                let s = arow[i];
                if s == 0.0 {
                    continue;
                }
                axpy(s, brow, &mut out.data[i * n..(i + 1) * n]);
            }
        }
    }
    Ok(out)
}

/// `a · bᵀ`.
pub fn matmul_nt(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols != b.cols {
        return Err(Error::shape(format!(
            "matmul_nt of {}x{} by ({}x{})ᵀ",
            a.rows, a.cols, b.rows, b.cols
        )));
    }
    matmul(a, &b.transpose())
}

/// `out += a · b` for row-major slices (`a`: m×k, `b`: k×n, `out`: m×n).
///
/// Zero entries of `a` are skipped; for finite `b` this leaves every sum
/// bitwise unchanged while making sparse inputs and pruned layers cheap.
pub(crate) fn gemm_accumulate(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(out.len(), m * n);
    for p0 in (0..k).step_by(INNER_BLOCK) {
        let p1 = (p0 + INNER_BLOCK).min(k);
        for i in 0..m {
            let arow = &a[i * k..(i + 1) * k];
            let orow = &mut out[i * n..(i + 1) * n];
            for p in p0..p1 {
                let s = arow[p];
                if s == 0.0 {
                    continue;
                }
                axpy(s, &b[p * n..(p + 1) * n], orow);
            }
        }
    }
}

#[inline]
fn axpy(s: f64, x: &[f64], y: &mut [f64]) {
    for (yv, &xv) in y.iter_mut().zip(x) {
        *yv += s * xv;
    }
}

/// Elementwise product.
pub fn hadamard(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.shape() != b.shape() {
        return Err(Error::shape(format!(
            "hadamard of {}x{} and {}x{}",
            a.rows, a.cols, b.rows, b.cols
        )));
    }
    Ok(Matrix {
        rows: a.rows,
        cols: a.cols,
        data: a.data.iter().zip(&b.data).map(|(x, y)| x * y).collect(),
    })
}

/// Mean and population standard deviation of the absolute entries.
pub fn abs_stats(w: &Matrix) -> Result<(f64, f64)> {
    if w.is_empty() {
        return Err(Error::Precondition(
            "abs_stats of an empty matrix".to_string(),
        ));
    }
    let n = w.len() as f64;
    let mean = w.data.iter().map(|v| v.abs()).sum::<f64>() / n;
    let var = w
        .data
        .iter()
        .map(|v| {
            let d = v.abs() - mean;
            d * d
        })
        .sum::<f64>()
        / n;
    Ok((mean, var.sqrt()))
}

/// Channel-major geometry of one sample's activations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Shape3 {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl Shape3 {
    pub const fn new(channels: usize, height: usize, width: usize) -> Self {
        Shape3 {
            channels,
            height,
            width,
        }
    }

    /// A flat feature vector of length `n`.
    pub const fn flat(n: usize) -> Self {
        Shape3::new(n, 1, 1)
    }

    pub const fn len(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub const fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl fmt::Display for Shape3 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.channels, self.height, self.width)
    }
}

/// Geometry of a convolution.
///
/// The layer's weight matrix has one row per output channel and
/// `in_channels * kernel_h * kernel_w` columns ordered
/// `(in_channel, kernel_row, kernel_col)`, matching the row order of
/// [`im2col`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KernelSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub stride: usize,
    pub pad: usize,
}

impl KernelSpec {
    pub fn validate(&self) -> Result<()> {
        if self.in_channels == 0
            || self.out_channels == 0
            || self.kernel_h == 0
            || self.kernel_w == 0
            || self.stride == 0
        {
            return Err(Error::config(format!(
                "kernel dimensions, channels and stride must be positive: {self:?}"
            )));
        }
        Ok(())
    }

    /// Rows of the unfolded input (and columns of the weight matrix).
    pub fn patch_len(&self) -> usize {
        self.in_channels * self.kernel_h * self.kernel_w
    }

    /// Output geometry for `input`, or a shape error if no receptive field fits.
    pub fn output_shape(&self, input: Shape3) -> Result<Shape3> {
        self.validate()?;
        if input.channels != self.in_channels {
            return Err(Error::shape(format!(
                "convolution expects {} input channels, got {input}",
                self.in_channels
            )));
        }
        let ph = input.height + 2 * self.pad;
        let pw = input.width + 2 * self.pad;
        if ph < self.kernel_h || pw < self.kernel_w {
            return Err(Error::shape(format!(
                "{}x{} kernel does not fit padded {input} input",
                self.kernel_h, self.kernel_w
            )));
        }
        Ok(Shape3::new(
            self.out_channels,
            (ph - self.kernel_h) / self.stride + 1,
            (pw - self.kernel_w) / self.stride + 1,
        ))
    }
}

/// Unfolds one channel-major sample into a `(patch_len × out_h·out_w)` matrix.
///
/// Column `oy * out_w + ox` holds the receptive field of output position
/// `(oy, ox)`; zero padding contributes literal zeros.
pub fn im2col(input: &[f64], shape: Shape3, spec: &KernelSpec) -> Result<Matrix> {
    if input.len() != shape.len() {
        return Err(Error::shape(format!(
            "im2col input has {} values, geometry {shape} needs {}",
            input.len(),
            shape.len()
        )));
    }
    let out = spec.output_shape(shape)?;
    let positions = out.height * out.width;
    let mut cols = Matrix::zeros(spec.patch_len(), positions);
    for c in 0..shape.channels {
        let plane = &input[c * shape.height * shape.width..(c + 1) * shape.height * shape.width];
        for ky in 0..spec.kernel_h {
            for kx in 0..spec.kernel_w {
                let row = (c * spec.kernel_h + ky) * spec.kernel_w + kx;
                let dst = cols.row_mut(row);
                for oy in 0..out.height {
                    let y = (oy * spec.stride + ky) as isize - spec.pad as isize;
                    if y < 0 || y as usize >= shape.height {
                        continue;
                    }
                    let src = &plane[y as usize * shape.width..(y as usize + 1) * shape.width];
                    for ox in 0..out.width {
                        let x = (ox * spec.stride + kx) as isize - spec.pad as isize;
                        if x >= 0 && (x as usize) < shape.width {
                            dst[oy * out.width + ox] = src[x as usize];
                        }
                    }
                }
            }
        }
    }
    Ok(cols)
}

/// Adjoint of [`im2col`]: scatters `cols` back onto `grad_input`, summing
/// overlapping receptive fields.
pub fn col2im_accumulate(
    cols: &Matrix,
    shape: Shape3,
    spec: &KernelSpec,
    grad_input: &mut [f64],
) -> Result<()> {
    let out = spec.output_shape(shape)?;
    if cols.shape() != (spec.patch_len(), out.height * out.width) || grad_input.len() != shape.len()
    {
        return Err(Error::shape(format!(
            "col2im of {}x{} onto {shape}",
            cols.rows(),
            cols.cols()
        )));
    }
    let plane_len = shape.height * shape.width;
    for c in 0..shape.channels {
        let plane = &mut grad_input[c * plane_len..(c + 1) * plane_len];
        for ky in 0..spec.kernel_h {
            for kx in 0..spec.kernel_w {
                let src = cols.row((c * spec.kernel_h + ky) * spec.kernel_w + kx);
                for oy in 0..out.height {
                    let y = (oy * spec.stride + ky) as isize - spec.pad as isize;
                    if y < 0 || y as usize >= shape.height {
                        continue;
                    }
                    for ox in 0..out.width {
                        let x = (ox * spec.stride + kx) as isize - spec.pad as isize;
                        if x >= 0 && (x as usize) < shape.width {
                            plane[y as usize * shape.width + x as usize] +=
                                src[oy * out.width + ox];
                        }
                    }
                }
            }
        }
    }
    Ok(())
}
