//! Problem definition and matrix views.
//!
//! A problem is the update `C = alpha * A * B + beta * C` with `A` of shape
//! `m x k`, `B` of shape `k x n` and `C` of shape `m x n`. Views accept both
//! row-major and column-major storage with a leading dimension at least as
//! long as the contiguous extent; packing normalizes either order.

use std::fmt;

use crate::element::Element;
use crate::error::{Result, TsmmError};

/// Floating-point precision of a problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Precision {
    Single,
    Double,
}

impl Precision {
    /// Bytes per element.
    pub const fn fp_size(self) -> usize {
        match self {
            Precision::Single => 4,
            Precision::Double => 8,
        }
    }

    pub fn from_fp_size(bytes: usize) -> Option<Self> {
        match bytes {
            4 => Some(Precision::Single),
            8 => Some(Precision::Double),
            _ => None,
        }
    }

    /// Short name used in cache files and on the command line.
    pub const fn name(self) -> &'static str {
        match self {
            Precision::Single => "f32",
            Precision::Double => "f64",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim() {
            "f32" | "single" | "s" => Some(Precision::Single),
            "f64" | "double" | "d" => Some(Precision::Double),
            _ => None,
        }
    }

    /// Unit roundoff (half the machine epsilon).
    pub fn unit_roundoff(self) -> f64 {
        match self {
            Precision::Single => f32::EPSILON as f64 / 2.0,
            Precision::Double => f64::EPSILON / 2.0,
        }
    }
}

impl fmt::Display for Precision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StorageOrder {
    RowMajor,
    ColMajor,
}

/// Names an operand in error messages.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Operand {
    A,
    B,
    C,
}

impl fmt::Display for Operand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Operand::A => f.write_str("A"),
            Operand::B => f.write_str("B"),
            Operand::C => f.write_str("C"),
        }
    }
}

fn check_layout(len: usize, rows: usize, cols: usize, order: StorageOrder, ld: usize) -> Result<()> {
    if rows == 0 || cols == 0 {
        return Err(TsmmError::InvalidView(format!("empty matrix {rows}x{cols}")));
    }
    let (outer, inner) = match order {
        StorageOrder::RowMajor => (rows, cols),
        StorageOrder::ColMajor => (cols, rows),
    };
    if ld < inner {
        return Err(TsmmError::InvalidView(format!(
            "leading dimension {ld} shorter than contiguous extent {inner}"
        )));
    }
    let needed = (outer - 1) * ld + inner;
    if len < needed {
        return Err(TsmmError::InvalidView(format!(
            "buffer holds {len} elements, layout needs {needed}"
        )));
    }
    Ok(())
}

#[inline]
fn index_of(order: StorageOrder, ld: usize, row: usize, col: usize) -> usize {
    match order {
        StorageOrder::RowMajor => row * ld + col,
        StorageOrder::ColMajor => col * ld + row,
    }
}

/// Borrowed read-only matrix.
#[derive(Debug, Clone, Copy)]
pub struct MatrixView<'a, T> {
    data: &'a [T],
    rows: usize,
    cols: usize,
    order: StorageOrder,
    ld: usize,
}

impl<'a, T: Copy> MatrixView<'a, T> {
    /// A densely stored view (leading dimension equals the contiguous extent).
    pub fn new(data: &'a [T], rows: usize, cols: usize, order: StorageOrder) -> Result<Self> {
        let ld = match order {
            StorageOrder::RowMajor => cols,
            StorageOrder::ColMajor => rows,
        };
        Self::with_ld(data, rows, cols, order, ld)
    }

    pub fn with_ld(
        data: &'a [T],
        rows: usize,
        cols: usize,
        order: StorageOrder,
        ld: usize,
    ) -> Result<Self> {
        check_layout(data.len(), rows, cols, order, ld)?;
        Ok(Self { data, rows, cols, order, ld })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }
    pub fn cols(&self) -> usize {
        self.cols
    }
    pub fn order(&self) -> StorageOrder {
        self.order
    }
    pub fn ld(&self) -> usize {
        self.ld
    }

    pub fn data(&self) -> &'a [T] {
        self.data
    }

    /// Distance in elements between `(i, j)` and `(i + 1, j)`.
    pub fn row_stride(&self) -> usize {
        match self.order {
            StorageOrder::RowMajor => self.ld,
            StorageOrder::ColMajor => 1,
        }
    }

    /// Distance in elements between `(i, j)` and `(i, j + 1)`.
    pub fn col_stride(&self) -> usize {
        match self.order {
            StorageOrder::RowMajor => 1,
            StorageOrder::ColMajor => self.ld,
        }
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> T {
        debug_assert!(row < self.rows && col < self.cols);
        self.data[index_of(self.order, self.ld, row, col)]
    }

    /// The top-left `rows x cols` corner.
    pub fn crop(&self, rows: usize, cols: usize) -> Result<MatrixView<'a, T>> {
        if rows > self.rows || cols > self.cols {
            return Err(TsmmError::InvalidView(format!(
                "crop {rows}x{cols} exceeds {}x{}",
                self.rows, self.cols
            )));
        }
        MatrixView::with_ld(self.data, rows, cols, self.order, self.ld)
    }

    pub fn to_matrix(&self) -> Matrix<T> {
        Matrix::from_fn(self.rows, self.cols, self.order, |i, j| self.get(i, j))
    }
}

/// Borrowed mutable matrix.
#[derive(Debug)]
pub struct MatrixViewMut<'a, T> {
    data: &'a mut [T],
    rows: usize,
    cols: usize,
    order: StorageOrder,
    ld: usize,
}

impl<'a, T: Copy> MatrixViewMut<'a, T> {
    pub fn new(data: &'a mut [T], rows: usize, cols: usize, order: StorageOrder) -> Result<Self> {
        let ld = match order {
            StorageOrder::RowMajor => cols,
            StorageOrder::ColMajor => rows,
        };
        Self::with_ld(data, rows, cols, order, ld)
    }

    pub fn with_ld(
        data: &'a mut [T],
        rows: usize,
        cols: usize,
        order: StorageOrder,
        ld: usize,
    ) -> Result<Self> {
        check_layout(data.len(), rows, cols, order, ld)?;
        Ok(Self { data, rows, cols, order, ld })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }
    pub fn cols(&self) -> usize {
        self.cols
    }
    pub fn order(&self) -> StorageOrder {
        self.order
    }
    pub fn ld(&self) -> usize {
        self.ld
    }

    pub fn as_view(&self) -> MatrixView<'_, T> {
        MatrixView {
            data: self.data,
            rows: self.rows,
            cols: self.cols,
            order: self.order,
            ld: self.ld,
        }
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> T {
        self.data[index_of(self.order, self.ld, row, col)]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: T) {
        debug_assert!(row < self.rows && col < self.cols);
        self.data[index_of(self.order, self.ld, row, col)] = value;
    }

    pub fn crop_mut(&mut self, rows: usize, cols: usize) -> Result<MatrixViewMut<'_, T>> {
        if rows > self.rows || cols > self.cols {
            return Err(TsmmError::InvalidView(format!(
                "crop {rows}x{cols} exceeds {}x{}",
                self.rows, self.cols
            )));
        }
        MatrixViewMut::with_ld(self.data, rows, cols, self.order, self.ld)
    }

    /// Raw access for the parallel compute loop, which writes disjoint
    /// regions from several threads.
    pub(crate) fn raw_parts(&mut self) -> (*mut T, StorageOrder, usize) {
        (self.data.as_mut_ptr(), self.order, self.ld)
    }
}

#[inline]
pub(crate) fn raw_index(order: StorageOrder, ld: usize, row: usize, col: usize) -> usize {
    index_of(order, ld, row, col)
}

/// Owned dense matrix, mostly for tests and the benchmark harness.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    data: Vec<T>,
    rows: usize,
    cols: usize,
    order: StorageOrder,
}

impl<T: Copy> Matrix<T> {
    pub fn from_fn(
        rows: usize,
        cols: usize,
        order: StorageOrder,
        mut f: impl FnMut(usize, usize) -> T,
    ) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        match order {
            StorageOrder::RowMajor => {
                for i in 0..rows {
                    for j in 0..cols {
                        data.push(f(i, j));
                    }
                }
            }
            StorageOrder::ColMajor => {
                for j in 0..cols {
                    for i in 0..rows {
                        data.push(f(i, j));
                    }
                }
            }
        }
        Self { data, rows, cols, order }
    }

    pub fn filled(rows: usize, cols: usize, order: StorageOrder, value: T) -> Self {
        Self::from_fn(rows, cols, order, |_, _| value)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }
    pub fn cols(&self) -> usize {
        self.cols
    }
    pub fn order(&self) -> StorageOrder {
        self.order
    }
    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> T {
        let ld = match self.order {
            StorageOrder::RowMajor => self.cols,
            StorageOrder::ColMajor => self.rows,
        };
        self.data[index_of(self.order, ld, row, col)]
    }

    pub fn view(&self) -> MatrixView<'_, T> {
        MatrixView::new(&self.data, self.rows, self.cols, self.order)
            .expect("owned matrix is never empty")
    }

    pub fn view_mut(&mut self) -> MatrixViewMut<'_, T> {
        MatrixViewMut::new(&mut self.data, self.rows, self.cols, self.order)
            .expect("owned matrix is never empty")
    }
}

/// One multiplication instance, `C = alpha * A * B + beta * C`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Problem<T> {
    pub m: usize,
    pub n: usize,
    pub k: usize,
    pub alpha: T,
    pub beta: T,
    pub precision: Precision,
}

impl<T: Element> Problem<T> {
    pub fn new(m: usize, n: usize, k: usize, alpha: T, beta: T) -> Result<Self> {
        if m == 0 || n == 0 || k == 0 {
            return Err(TsmmError::InvalidProblem(format!(
                "dimensions must be positive, got m={m} n={n} k={k}"
            )));
        }
        Ok(Self { m, n, k, alpha, beta, precision: T::PRECISION })
    }

    /// Floating-point operations of one multiplication, `2 m n k`.
    pub fn flops(&self) -> f64 {
        2.0 * self.m as f64 * self.n as f64 * self.k as f64
    }
}

/// Checks that `a` is `m x k`, `b` is `k x n` and `c` is `m x n`.
pub fn validate_problem<T: Element>(
    p: &Problem<T>,
    a: &MatrixView<'_, T>,
    b: &MatrixView<'_, T>,
    c: &MatrixView<'_, T>,
) -> Result<Problem<T>> {
    if p.m == 0 || p.n == 0 || p.k == 0 {
        return Err(TsmmError::InvalidProblem(format!(
            "dimensions must be positive, got m={} n={} k={}",
            p.m, p.n, p.k
        )));
    }
    if p.precision != T::PRECISION {
        return Err(TsmmError::InvalidProblem(format!(
            "problem declares {} but elements are {}",
            p.precision,
            T::PRECISION
        )));
    }
    let expect = |operand, rows, cols, view: &MatrixView<'_, T>| {
        if view.rows() == rows && view.cols() == cols {
            Ok(())
        } else {
            Err(TsmmError::DimensionMismatch {
                operand,
                expected_rows: rows,
                expected_cols: cols,
                rows: view.rows(),
                cols: view.cols(),
            })
        }
    };
    expect(Operand::A, p.m, p.k, a)?;
    expect(Operand::B, p.k, p.n, b)?;
    expect(Operand::C, p.m, p.n, c)?;
    Ok(*p)
}
