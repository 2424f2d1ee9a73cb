use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

/// Dense column-major design matrix.
///
/// Column 0 is all ones when `has_intercept` is set. When `standardized` is
/// set, every non-intercept column has Euclidean norm √n and `scales[j]` holds
/// the factor that was divided out of the raw column, so coefficients map back
/// to raw units by `raw_j = coef_j / scales[j]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignMatrix {
    n: usize,
    p: usize,
    values: Vec<f64>,
    has_intercept: bool,
    standardized: bool,
    free_first: bool,
    scales: Vec<f64>,
}

impl DesignMatrix {
    /// Builds a matrix from row-major data without touching it.
    pub fn from_rows(n: usize, p: usize, rows: &[f64]) -> Result<Self> {
        check_len("row-major design entries", n * p, rows.len())?;
        let mut values = vec![0.0; n * p];
        for i in 0..n {
            for j in 0..p {
                values[j * n + i] = rows[i * p + j];
            }
        }
        Self::from_column_major(n, p, values)
    }

    /// Builds a matrix from column-major data.
    pub fn from_column_major(n: usize, p: usize, values: Vec<f64>) -> Result<Self> {
        if n == 0 || p == 0 {
            return Err(Error::domain("design matrix needs at least one row and one column"));
        }
        check_len("column-major design entries", n * p, values.len())?;
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::domain(format!(
                "non-finite design entry at row {}, column {}",
                pos % n,
                pos / n
            )));
        }
        Ok(Self {
            n,
            p,
            values,
            has_intercept: false,
            standardized: false,
            free_first: false,
            scales: vec![1.0; p],
        })
    }

    /// Prepends a column of ones to raw row-major covariates (`n × k`).
    pub fn with_intercept(n: usize, k: usize, rows: &[f64]) -> Result<Self> {
        check_len("row-major covariate entries", n * k, rows.len())?;
        let p = k + 1;
        let mut values = vec![0.0; n * p];
        values[..n].fill(1.0);
        for i in 0..n {
            for j in 0..k {
                values[(j + 1) * n + i] = rows[i * k + j];
            }
        }
        let mut m = Self::from_column_major(n, p, values)?;
        m.has_intercept = true;
        m.free_first = true;
        Ok(m)
    }

    /// Marks column 0 as an unpenalized intercept; it must be all ones.
    pub fn mark_intercept(mut self) -> Result<Self> {
        if self.col(0).iter().any(|&v| v != 1.0) {
            return Err(Error::domain("intercept column must be all ones"));
        }
        self.has_intercept = true;
        self.free_first = true;
        Ok(self)
    }

    /// Scales every non-intercept column to norm √n. All-zero columns are
    /// left untouched with scale 1.
    pub fn standardize(&self) -> Self {
        let mut out = self.clone();
        let root_n = (self.n as f64).sqrt();
        let start = usize::from(self.has_intercept);
        for j in start..self.p {
            let prior = self.scales[j];
            let col = &mut out.values[j * self.n..(j + 1) * self.n];
            let norm = crate::linalg::dot(col, col).sqrt();
            if norm > 0.0 {
                let s = norm / root_n;
                col.iter_mut().for_each(|v| *v /= s);
                out.scales[j] = prior * s;
            }
        }
        out.standardized = true;
        out
    }

    pub fn nrows(&self) -> usize {
        self.n
    }

    pub fn ncols(&self) -> usize {
        self.p
    }

    pub fn has_intercept(&self) -> bool {
        self.has_intercept
    }

    pub fn is_standardized(&self) -> bool {
        self.standardized
    }

    /// Column scale factors divided out by standardization (1 when untouched).
    pub fn scales(&self) -> &[f64] {
        &self.scales
    }

    /// Whether coordinate `j` carries a penalty. Only a leading intercept (or
    /// a column derived from one) is exempt.
    pub fn is_penalized(&self, j: usize) -> bool {
        !(j == 0 && self.free_first)
    }

    pub fn penalized_mask(&self) -> Vec<bool> {
        (0..self.p).map(|j| self.is_penalized(j)).collect()
    }

    #[inline]
    pub fn col(&self, j: usize) -> &[f64] {
        &self.values[j * self.n..(j + 1) * self.n]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[j * self.n + i]
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        (0..self.p).map(|j| self.values[j * self.n + i]).collect()
    }

    pub fn column_major(&self) -> &[f64] {
        &self.values
    }

    /// `X · coef`.
    pub fn mul_vec(&self, coef: &[f64]) -> Result<Vec<f64>> {
        check_len("coefficient vector", self.p, coef.len())?;
        let mut out = vec![0.0; self.n];
        for (j, &c) in coef.iter().enumerate() {
            if c != 0.0 {
                crate::linalg::axpy(c, self.col(j), &mut out);
            }
        }
        Ok(out)
    }

    /// `Xᵀ · v`.
    pub fn tr_mul_vec(&self, v: &[f64]) -> Result<Vec<f64>> {
        check_len("row vector", self.n, v.len())?;
        Ok((0..self.p).map(|j| crate::linalg::dot(self.col(j), v)).collect())
    }

    /// Row subset, preserving flags and scales.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        let m = rows.len();
        let mut values = Vec::with_capacity(m * self.p);
        for j in 0..self.p {
            let col = self.col(j);
            values.extend(rows.iter().map(|&i| col[i]));
        }
        Self {
            n: m,
            p: self.p,
            values,
            has_intercept: self.has_intercept,
            standardized: self.standardized,
            free_first: self.free_first,
            scales: self.scales.clone(),
        }
    }

    /// `diag(w) · X`. The result keeps the unpenalized status of column 0
    /// but is no longer an intercept design, and is not re-standardized.
    pub fn scale_rows(&self, w: &[f64]) -> Result<Self> {
        check_len("row weights", self.n, w.len())?;
        let mut values = self.values.clone();
        for j in 0..self.p {
            let col = &mut values[j * self.n..(j + 1) * self.n];
            col.iter_mut().zip(w).for_each(|(v, wi)| *v *= wi);
        }
        Ok(Self {
            n: self.n,
            p: self.p,
            values,
            has_intercept: false,
            standardized: false,
            free_first: self.free_first,
            scales: self.scales.clone(),
        })
    }

    /// Maps internal (standardized) coefficients to raw column units.
    pub fn to_raw_coefficients(&self, coef: &[f64]) -> Vec<f64> {
        coef.iter().zip(&self.scales).map(|(c, s)| c / s).collect()
    }

    /// Inverse of [`to_raw_coefficients`](Self::to_raw_coefficients).
    pub fn to_internal_coefficients(&self, raw: &[f64]) -> Vec<f64> {
        raw.iter().zip(&self.scales).map(|(c, s)| c * s).collect()
    }

    /// Applies the stored standardization to a raw covariate row.
    pub fn standardize_row(&self, raw: &[f64]) -> Result<Vec<f64>> {
        check_len("covariate row", self.p, raw.len())?;
        Ok(raw.iter().zip(&self.scales).map(|(v, s)| v / s).collect())
    }
}
