//! Dense row-major containers and the structural primitives of the
//! vectorized 1D convolution: sliding-window unrolling (im2row), Hadamard
//! power concatenation, row-wise matrix-vector products, and the scatter-add
//! adjoint of im2row.
//!
//! Every operation here is a pure function of its inputs.

use std::ops::Deref;

use crate::error::{Error, Result};

fn check_finite(data: &[f64]) -> Result<()> {
    match data.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(Error::invalid(format!("non-finite value {} at index {i}", data[i]))),
        None => Ok(()),
    }
}

/// A non-empty sequence of finite 64-bit floats.
#[derive(Debug, Clone, PartialEq)]
pub struct Vector {
    data: Vec<f64>,
}

impl Vector {
    pub fn new(data: Vec<f64>) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::invalid("vector must have at least one element"));
        }
        check_finite(&data)?;
        Ok(Self { data })
    }

    pub fn zeros(len: usize) -> Result<Self> {
        Self::new(vec![0.0; len])
    }

    pub fn from_fn(len: usize, f: impl FnMut(usize) -> f64) -> Result<Self> {
        Self::new((0..len).map(f).collect())
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.data
    }

    pub fn dot(&self, other: &Vector) -> Result<f64> {
        if self.len() != other.len() {
            return Err(Error::invalid(format!(
                "dot of lengths {} and {}",
                self.len(),
                other.len()
            )));
        }
        Ok(self.iter().zip(other.iter()).map(|(a, b)| a * b).sum())
    }
}

impl Deref for Vector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.data
    }
}

impl TryFrom<Vec<f64>> for Vector {
    type Error = Error;

    fn try_from(data: Vec<f64>) -> Result<Self> {
        Self::new(data)
    }
}

/// Row-major dense matrix of finite 64-bit floats.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    data: Vec<f64>,
    rows: usize,
    cols: usize,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows.checked_mul(cols) != Some(data.len()) {
            return Err(Error::invalid(format!(
                "matrix {rows}x{cols} needs {} elements, got {}",
                rows.saturating_mul(cols),
                data.len()
            )));
        }
        check_finite(&data)?;
        Ok(Self { data, rows, cols })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            data: vec![0.0; rows * cols],
            rows,
            cols,
        }
    }

    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::invalid("ragged rows"));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.data[row * self.cols..(row + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Frobenius inner product.
    pub fn frobenius_dot(&self, other: &Matrix) -> Result<f64> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::invalid("frobenius product of mismatched shapes"));
        }
        Ok(self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum())
    }

    /// Computes `selfᵀ · v`, i.e. `out(c) = Σ_m self(m, c) · v(m)`.
    pub fn transpose_dot(&self, v: &[f64]) -> Result<Vector> {
        if v.len() != self.rows {
            return Err(Error::invalid(format!(
                "transpose_dot: {} rows vs vector of {}",
                self.rows,
                v.len()
            )));
        }
        let mut out = vec![0.0; self.cols];
        for (row, &s) in self.data.chunks_exact(self.cols).zip(v) {
            for (o, &y) in out.iter_mut().zip(row) {
                *o += y * s;
            }
        }
        Vector::new(out)
    }
}

/// Zero-padding applied to each end of a 1D signal before unrolling.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Padding {
    pub left: usize,
    pub right: usize,
}

impl Padding {
    /// Symmetric padding that keeps the output length equal to the input
    /// length for an odd kernel width.
    pub fn same(kernel_width: usize) -> Self {
        let half = kernel_width.saturating_sub(1) / 2;
        Self {
            left: half,
            right: half,
        }
    }

    fn total(&self) -> usize {
        self.left + self.right
    }
}

fn check_kernel(len: usize, kernel_width: usize, pad: Padding) -> Result<()> {
    if kernel_width == 0 || kernel_width.is_multiple_of(2) {
        return Err(Error::invalid(format!(
            "kernel width must be odd and positive, got {kernel_width}"
        )));
    }
    if kernel_width > len + pad.total() {
        return Err(Error::invalid(format!(
            "kernel width {kernel_width} exceeds padded length {}",
            len + pad.total()
        )));
    }
    Ok(())
}

/// Unrolls `y` into sliding windows: row `m` is `[ŷ(m), …, ŷ(m+K−1)]` where
/// `ŷ` is `y` zero-padded by `pad`.
pub fn im2row(y: &Vector, kernel_width: usize, pad: Padding) -> Result<Matrix> {
    check_kernel(y.len(), kernel_width, pad)?;
    let rows = y.len() + pad.total() + 1 - kernel_width;
    let mut data = vec![0.0; rows * kernel_width];
    for (m, row) in data.chunks_exact_mut(kernel_width).enumerate() {
        for (r, slot) in row.iter_mut().enumerate() {
            // position in the unpadded signal
            let src = (m + r).wrapping_sub(pad.left);
            if src < y.len() {
                *slot = y[src];
            }
        }
    }
    Ok(Matrix {
        data,
        rows,
        cols: kernel_width,
    })
}

/// Builds `[Y | Y∘2 | … | Y∘Q]`. Column block `q` (0-based) holds the
/// elementwise `(q+1)`-th powers of `y`.
pub fn hadamard_power_concat(y: &Matrix, order: usize) -> Result<Matrix> {
    if order == 0 {
        return Err(Error::invalid("Taylor order must be at least 1"));
    }
    if order == 1 {
        return Ok(y.clone());
    }
    let k = y.cols;
    let cols = k * order;
    let mut data = vec![0.0; y.rows * cols];
    for (src, dst) in y.data.chunks_exact(k).zip(data.chunks_exact_mut(cols)) {
        dst[..k].copy_from_slice(src);
        for q in 1..order {
            let (prev, cur) = dst.split_at_mut(q * k);
            let prev = &prev[(q - 1) * k..];
            for ((c, &p), &base) in cur[..k].iter_mut().zip(prev).zip(src) {
                *c = p * base;
            }
        }
    }
    Matrix::new(y.rows, cols, data)
}

/// `out(m) = Σ_n y(m, n) · w(n)`.
pub fn row_dot(y: &Matrix, w: &Vector) -> Result<Vector> {
    if w.len() != y.cols {
        return Err(Error::invalid(format!(
            "row_dot: matrix has {} columns, weight vector has {}",
            y.cols,
            w.len()
        )));
    }
    let mut out = vec![0.0; y.rows];
    row_dot_accumulate(y, w, &mut out);
    Vector::new(out)
}

/// Adds `y · w` into `out`. Shapes are the caller's responsibility.
pub(crate) fn row_dot_accumulate(y: &Matrix, w: &[f64], out: &mut [f64]) {
    debug_assert_eq!(w.len(), y.cols);
    debug_assert_eq!(out.len(), y.rows);
    for (o, row) in out.iter_mut().zip(y.data.chunks_exact(y.cols)) {
        *o += row.iter().zip(w).map(|(a, b)| a * b).sum::<f64>();
    }
}

/// Adjoint of [`im2row`]: scatter-adds each row of `g` back onto the window
/// positions it was read from, then crops the padding.
pub fn im2row_transpose_scatter(g: &Matrix, kernel_width: usize, pad: Padding) -> Result<Vector> {
    if g.cols != kernel_width {
        return Err(Error::invalid(format!(
            "scatter: matrix has {} columns, kernel width is {kernel_width}",
            g.cols
        )));
    }
    if kernel_width.is_multiple_of(2) {
        return Err(Error::invalid(format!("kernel width must be odd, got {kernel_width}")));
    }
    let padded = g.rows + kernel_width - 1;
    if padded <= pad.total() {
        return Err(Error::invalid("scatter: padding consumes the whole signal"));
    }
    let len = padded - pad.total();
    let mut out = vec![0.0; len];
    for (m, row) in g.data.chunks_exact(kernel_width).enumerate() {
        for (r, &v) in row.iter().enumerate() {
            let dst = (m + r).wrapping_sub(pad.left);
            if dst < len {
                out[dst] += v;
            }
        }
    }
    Vector::new(out)
}
