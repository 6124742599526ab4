//! Deterministic batch linear-algebra kernels shared by all objectives:
//! column standardization, Pearson cross-correlation, covariance, cosine
//! similarity, and Spearman rank correlation.
//!
//! All reductions run in f64 with a fixed sequential summation order so that
//! repeated runs are bitwise identical.

use thiserror::Error;

/// Norms below this are treated as zero when normalizing vectors.
pub const ZERO_NORM_EPS: f64 = 1e-30;

/// Columns whose population variance falls below this are degenerate:
/// Pearson correlation is undefined for them.
pub const DEGENERATE_VAR_EPS: f64 = 1e-12;

/// Default stabilizer added to the variance before taking the square root
/// in column standardization.
pub const DEFAULT_EPS_STD: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum MathError {
    #[error("dimension mismatch: {left} vs {right}")]
    DimMismatch { left: usize, right: usize },
    #[error("shape mismatch: {left_rows}x{left_cols} vs {right_rows}x{right_cols}")]
    ShapeMismatch {
        left_rows: usize,
        left_cols: usize,
        right_rows: usize,
        right_cols: usize,
    },
    #[error("matrix must have at least one row and one column, got {rows}x{cols}")]
    EmptyMatrix { rows: usize, cols: usize },
    #[error("data length {got} does not match shape {rows}x{cols}")]
    DataLength { rows: usize, cols: usize, got: usize },
    #[error("non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
    #[error("vector has (near-)zero Euclidean norm")]
    ZeroNorm,
    #[error("column {col} has population variance {variance:e}, below {}", DEGENERATE_VAR_EPS)]
    DegenerateColumn { col: usize, variance: f64 },
    #[error("batch of {rows} rows is too small, need at least 2")]
    BatchTooSmall { rows: usize },
    #[error("all values tied: rank correlation undefined")]
    AllTied,
}

/// Dense row-major N x D matrix of finite f64 values.
///
/// Rows index batch members, columns index embedding dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct RealMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl RealMatrix {
    /// Builds a matrix from row-major data, validating shape and finiteness.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, MathError> {
        if rows == 0 || cols == 0 {
            return Err(MathError::EmptyMatrix { rows, cols });
        }
        if data.len() != rows * cols {
            return Err(MathError::DataLength {
                rows,
                cols,
                got: data.len(),
            });
        }
        for (idx, v) in data.iter().enumerate() {
            if !v.is_finite() {
                return Err(MathError::NonFinite {
                    row: idx / cols,
                    col: idx % cols,
                });
            }
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from a slice of equal-length rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, MathError> {
        if rows.is_empty() || rows[0].is_empty() {
            return Err(MathError::EmptyMatrix {
                rows: rows.len(),
                cols: rows.first().map_or(0, Vec::len),
            });
        }
        let cols = rows[0].len();
        let mut data = Vec::with_capacity(rows.len() * cols);
        for row in rows {
            if row.len() != cols {
                return Err(MathError::DimMismatch {
                    left: cols,
                    right: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Self::from_vec(rows.len(), cols, data)
    }

    /// All-zero matrix; shape must be nonempty.
    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "zero-sized matrix");
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.data[row * self.cols + col] = value;
    }

    #[inline]
    pub fn row(&self, row: usize) -> &[f64] {
        &self.data[row * self.cols..(row + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, row: usize) -> &mut [f64] {
        &mut self.data[row * self.cols..(row + 1) * self.cols]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Per-column means, computed sequentially over rows.
    pub fn column_means(&self) -> Vec<f64> {
        let mut means = vec![0.0; self.cols];
        for r in 0..self.rows {
            let row = self.row(r);
            for (m, v) in means.iter_mut().zip(row) {
                *m += v;
            }
        }
        let n = self.rows as f64;
        for m in &mut means {
            *m /= n;
        }
        means
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.rows == other.rows && self.cols == other.cols
    }

    pub(crate) fn check_same_shape(&self, other: &Self) -> Result<(), MathError> {
        if !self.same_shape(other) {
            return Err(MathError::ShapeMismatch {
                left_rows: self.rows,
                left_cols: self.cols,
                right_rows: other.rows,
                right_cols: other.cols,
            });
        }
        Ok(())
    }
}

/// D x D matrix of Pearson correlations between the columns of two views.
/// Entries are clamped into [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl CorrelationMatrix {
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dim + j]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }
}

/// Symmetric D x D sample covariance matrix with nonnegative diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl CovarianceMatrix {
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dim + j]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }
}

/// Cosine similarity dot(a,b) / (|a||b|), clamped to [-1, 1].
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64, MathError> {
    if a.len() != b.len() {
        return Err(MathError::DimMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    let mut dot = 0.0;
    let mut na = 0.0;
    let mut nb = 0.0;
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na.sqrt() < ZERO_NORM_EPS || nb.sqrt() < ZERO_NORM_EPS {
        return Err(MathError::ZeroNorm);
    }
    Ok((dot / (na * nb).sqrt()).clamp(-1.0, 1.0))
}

/// Per-column mean and population variance of a batch.
pub(crate) fn column_moments(z: &RealMatrix) -> (Vec<f64>, Vec<f64>) {
    let means = z.column_means();
    let mut vars = vec![0.0; z.cols()];
    for r in 0..z.rows() {
        let row = z.row(r);
        for (c, v) in row.iter().enumerate() {
            let d = v - means[c];
            vars[c] += d * d;
        }
    }
    let n = z.rows() as f64;
    for v in &mut vars {
        *v /= n;
    }
    (means, vars)
}

/// Standardizes each column to mean 0 and (population) standard deviation 1,
/// dividing by sqrt(var + eps_std).
///
/// Columns with population variance below [`DEGENERATE_VAR_EPS`] are an
/// error rather than silently zeroed.
pub fn standardize_columns(z: &RealMatrix, eps_std: f64) -> Result<RealMatrix, MathError> {
    if z.rows() < 2 {
        return Err(MathError::BatchTooSmall { rows: z.rows() });
    }
    let (means, vars) = column_moments(z);
    for (c, &v) in vars.iter().enumerate() {
        if v < DEGENERATE_VAR_EPS {
            return Err(MathError::DegenerateColumn { col: c, variance: v });
        }
    }
    let denoms: Vec<f64> = vars.iter().map(|v| (v + eps_std).sqrt()).collect();
    let mut out = z.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        for (c, v) in row.iter_mut().enumerate() {
            *v = (*v - means[c]) / denoms[c];
        }
    }
    Ok(out)
}

/// Pearson cross-correlation between the columns of two same-shape views:
/// rho_ij = (1/N) sum_n zhatA_ni * zhatB_nj over standardized columns.
pub fn cross_correlation(za: &RealMatrix, zb: &RealMatrix) -> Result<CorrelationMatrix, MathError> {
    za.check_same_shape(zb)?;
    let a = standardize_columns(za, DEFAULT_EPS_STD)?;
    let b = standardize_columns(zb, DEFAULT_EPS_STD)?;
    let dim = a.cols();
    let n = a.rows() as f64;
    let mut data = vec![0.0; dim * dim];
    for r in 0..a.rows() {
        let ra = a.row(r);
        let rb = b.row(r);
        for (i, &ai) in ra.iter().enumerate() {
            let dst = &mut data[i * dim..(i + 1) * dim];
            for (d, &bj) in dst.iter_mut().zip(rb) {
                *d += ai * bj;
            }
        }
    }
    for v in &mut data {
        *v = (*v / n).clamp(-1.0, 1.0);
    }
    Ok(CorrelationMatrix { dim, data })
}

/// Sample covariance C = (1/(N-1)) sum_n (z_n - mean)(z_n - mean)^T,
/// constructed symmetrically so C == C^T exactly.
pub fn covariance(z: &RealMatrix) -> Result<CovarianceMatrix, MathError> {
    if z.rows() < 2 {
        return Err(MathError::BatchTooSmall { rows: z.rows() });
    }
    let means = z.column_means();
    let dim = z.cols();
    let denom = (z.rows() - 1) as f64;
    let mut data = vec![0.0; dim * dim];
    for i in 0..dim {
        for j in i..dim {
            let mut acc = 0.0;
            for r in 0..z.rows() {
                let row = z.row(r);
                acc += (row[i] - means[i]) * (row[j] - means[j]);
            }
            let v = acc / denom;
            data[i * dim + j] = v;
            data[j * dim + i] = v;
        }
    }
    Ok(CovarianceMatrix { dim, data })
}

/// Average ranks (1-based), ties receiving the mean of their rank positions.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).expect("finite values"));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        // positions i..=j share the same value; assign the mean rank
        let mean_rank = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = mean_rank;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation: Pearson correlation of the average-rank
/// vectors of x and y.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64, MathError> {
    if x.len() != y.len() {
        return Err(MathError::DimMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    if x.len() < 2 {
        return Err(MathError::BatchTooSmall { rows: x.len() });
    }
    let rx = average_ranks(x);
    let ry = average_ranks(y);
    let n = x.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut dx = 0.0;
    let mut dy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        num += (a - mx) * (b - my);
        dx += (a - mx) * (a - mx);
        dy += (b - my) * (b - my);
    }
    if dx == 0.0 || dy == 0.0 {
        return Err(MathError::AllTied);
    }
    Ok((num / (dx * dy).sqrt()).clamp(-1.0, 1.0))
}
