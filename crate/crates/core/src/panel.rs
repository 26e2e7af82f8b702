//! Balanced-panel data model: observations on `n` individuals over `t`
//! periods, a covariate block and the implicit individual-dummy block.
//!
//! Rows are stored individual-major: observation (i, s) lives at row
//! `i * t + s` (0-based). Every routine in this crate assumes that order.
//! The dummy block `D = I_n ⊗ 1_t` is never materialized; [`DesignMatrix`]
//! is a logical view that exploits its block-of-ones structure.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::solver::Design;

/// A balanced panel: response `y` and covariates `x` for `n` individuals
/// observed over `t` periods, in individual-major row order.
#[derive(Debug, Clone)]
pub struct PanelDataset {
    n: usize,
    t: usize,
    y: DVector<f64>,
    x: DMatrix<f64>,
}

impl PanelDataset {
    /// Validates shapes, finiteness and `n, t >= 1`.
    pub fn new(n: usize, t: usize, y: DVector<f64>, x: DMatrix<f64>) -> Result<Self> {
        if n == 0 || t == 0 {
            return Err(Error::invalid("panel needs at least one individual and one period"));
        }
        let rows = n * t;
        if y.len() != rows {
            return Err(Error::DimensionMismatch {
                expected: rows,
                got: y.len(),
                context: "response length vs n*t",
            });
        }
        if x.nrows() != rows {
            return Err(Error::DimensionMismatch {
                expected: rows,
                got: x.nrows(),
                context: "covariate rows vs n*t",
            });
        }
        if y.iter().any(|v| !v.is_finite()) || x.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("panel data contains non-finite values"));
        }
        Ok(PanelDataset { n, t, y, x })
    }

    pub fn n_individuals(&self) -> usize {
        self.n
    }

    pub fn n_periods(&self) -> usize {
        self.t
    }

    pub fn n_covariates(&self) -> usize {
        self.x.ncols()
    }

    pub fn n_obs(&self) -> usize {
        self.n * self.t
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    /// Row index of individual `i` at period `s` (both 0-based).
    pub fn row(&self, i: usize, s: usize) -> usize {
        debug_assert!(i < self.n && s < self.t);
        i * self.t + s
    }

    /// Replaces the response, keeping the covariates. Used by the
    /// simulation harness to reuse a generated design.
    pub fn with_response(&self, y: DVector<f64>) -> Result<Self> {
        PanelDataset::new(self.n, self.t, y, self.x.clone())
    }
}

/// Logical view of `Z = (X, D)` with the dummy block scaled by a common
/// factor (1 for the plain design, sqrt(n) after [`rescale_dummies`]).
/// Columns `0..p` are the covariates, columns `p..p+n` the dummies.
#[derive(Debug, Clone)]
pub struct DesignMatrix<'a> {
    x: &'a DMatrix<f64>,
    n: usize,
    t: usize,
    dummy_scale: f64,
    x_col_norms_sq: Vec<f64>,
}

impl<'a> DesignMatrix<'a> {
    fn from_parts(x: &'a DMatrix<f64>, n: usize, t: usize, dummy_scale: f64) -> Self {
        let x_col_norms_sq = (0..x.ncols()).map(|j| x.column(j).norm_squared()).collect();
        DesignMatrix { x, n, t, dummy_scale, x_col_norms_sq }
    }

    pub fn n_rows(&self) -> usize {
        self.n * self.t
    }

    pub fn n_cols(&self) -> usize {
        self.x.ncols() + self.n
    }

    /// Column range of the covariate block.
    pub fn covariate_cols(&self) -> std::ops::Range<usize> {
        0..self.x.ncols()
    }

    /// Column range of the dummy block.
    pub fn dummy_cols(&self) -> std::ops::Range<usize> {
        self.x.ncols()..self.n_cols()
    }

    pub fn dummy_scale(&self) -> f64 {
        self.dummy_scale
    }

    /// Materializes column `j` (mostly for tests and small dense solves).
    pub fn column(&self, j: usize) -> DVector<f64> {
        let p = self.x.ncols();
        if j < p {
            self.x.column(j).into_owned()
        } else {
            let i = j - p;
            let mut col = DVector::zeros(self.n_rows());
            for s in 0..self.t {
                col[i * self.t + s] = self.dummy_scale;
            }
            col
        }
    }

    /// Dense `Z` for small problems.
    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut z = DMatrix::zeros(self.n_rows(), self.n_cols());
        z.view_mut((0, 0), (self.n_rows(), self.x.ncols())).copy_from(self.x);
        let p = self.x.ncols();
        for i in 0..self.n {
            for s in 0..self.t {
                z[(i * self.t + s, p + i)] = self.dummy_scale;
            }
        }
        z
    }

    /// `Z * gamma` where `gamma = (beta', c')'`.
    pub fn matvec(&self, gamma: &DVector<f64>) -> DVector<f64> {
        assert_eq!(gamma.len(), self.n_cols());
        let p = self.x.ncols();
        let mut out = self.x * gamma.rows(0, p);
        for i in 0..self.n {
            let ci = self.dummy_scale * gamma[p + i];
            if ci != 0.0 {
                for s in 0..self.t {
                    out[i * self.t + s] += ci;
                }
            }
        }
        out
    }
}

impl Design for DesignMatrix<'_> {
    fn rows(&self) -> usize {
        self.n_rows()
    }

    fn cols(&self) -> usize {
        self.n_cols()
    }

    fn col_norm_sq(&self, j: usize) -> f64 {
        let p = self.x.ncols();
        if j < p {
            self.x_col_norms_sq[j]
        } else {
            self.dummy_scale * self.dummy_scale * self.t as f64
        }
    }

    fn col_dot(&self, j: usize, v: &DVector<f64>) -> f64 {
        let p = self.x.ncols();
        if j < p {
            self.x.column(j).dot(v)
        } else {
            let i = j - p;
            let mut acc = 0.0;
            for s in 0..self.t {
                acc += v[i * self.t + s];
            }
            self.dummy_scale * acc
        }
    }

    fn axpy_col(&self, j: usize, alpha: f64, v: &mut DVector<f64>) {
        let p = self.x.ncols();
        if j < p {
            v.axpy(alpha, &self.x.column(j), 1.0);
        } else {
            let i = j - p;
            let a = alpha * self.dummy_scale;
            for s in 0..self.t {
                v[i * self.t + s] += a;
            }
        }
    }
}

/// Builds the logical `Z = (X, D)` view for a panel.
pub fn assemble_design(data: &PanelDataset) -> DesignMatrix<'_> {
    DesignMatrix::from_parts(data.x(), data.n_individuals(), data.n_periods(), 1.0)
}

/// Multiplies the dummy block by `sqrt(n)`, leaving the covariates alone.
/// This turns the two-penalty problem into a single-penalty one.
pub fn rescale_dummies<'a>(design: DesignMatrix<'a>, n: usize) -> DesignMatrix<'a> {
    let scale = design.dummy_scale * (n as f64).sqrt();
    DesignMatrix { dummy_scale: scale, ..design }
}

/// Diagonal scaling with `sqrt(n*t)` on the covariate block and `sqrt(t)`
/// on the dummy block, reflecting the different effective sample sizes.
#[derive(Debug, Clone, Copy)]
pub struct ScalingMatrix {
    p: usize,
    n: usize,
    covariate_scale: f64,
    dummy_scale: f64,
}

impl ScalingMatrix {
    pub fn new(n: usize, t: usize, p: usize) -> Self {
        let nt = (n * t) as f64;
        ScalingMatrix {
            p,
            n,
            covariate_scale: nt.sqrt(),
            dummy_scale: (t as f64).sqrt(),
        }
    }

    pub fn covariate_scale(&self) -> f64 {
        self.covariate_scale
    }

    pub fn dummy_scale(&self) -> f64 {
        self.dummy_scale
    }

    pub fn dim(&self) -> usize {
        self.p + self.n
    }

    /// `S * gamma`.
    pub fn apply(&self, gamma: &DVector<f64>) -> DVector<f64> {
        assert_eq!(gamma.len(), self.dim());
        let mut out = gamma.clone();
        for j in 0..self.p {
            out[j] *= self.covariate_scale;
        }
        for i in 0..self.n {
            out[self.p + i] *= self.dummy_scale;
        }
        out
    }

    /// `S^{-1} * gamma`.
    pub fn apply_inverse(&self, gamma: &DVector<f64>) -> DVector<f64> {
        assert_eq!(gamma.len(), self.dim());
        let mut out = gamma.clone();
        for j in 0..self.p {
            out[j] /= self.covariate_scale;
        }
        for i in 0..self.n {
            out[self.p + i] /= self.dummy_scale;
        }
        out
    }

    pub fn diagonal(&self) -> DVector<f64> {
        let mut d = DVector::zeros(self.dim());
        for j in 0..self.p {
            d[j] = self.covariate_scale;
        }
        for i in 0..self.n {
            d[self.p + i] = self.dummy_scale;
        }
        d
    }
}

/// The data-generating truth: coefficient vectors with their supports and
/// smallest nonzero magnitudes.
#[derive(Debug, Clone)]
pub struct TrueModel {
    beta_star: DVector<f64>,
    c_star: DVector<f64>,
    support_beta: Vec<usize>,
    support_c: Vec<usize>,
}

impl TrueModel {
    pub fn new(beta_star: DVector<f64>, c_star: DVector<f64>) -> Self {
        let support_beta = nonzero_indices(&beta_star);
        let support_c = nonzero_indices(&c_star);
        TrueModel { beta_star, c_star, support_beta, support_c }
    }

    pub fn beta_star(&self) -> &DVector<f64> {
        &self.beta_star
    }

    pub fn c_star(&self) -> &DVector<f64> {
        &self.c_star
    }

    pub fn support_beta(&self) -> &[usize] {
        &self.support_beta
    }

    pub fn support_c(&self) -> &[usize] {
        &self.support_c
    }

    pub fn s1(&self) -> usize {
        self.support_beta.len()
    }

    pub fn s2(&self) -> usize {
        self.support_c.len()
    }

    /// Stacked `(beta*', c*')'`.
    pub fn gamma_star(&self) -> DVector<f64> {
        stack(&self.beta_star, &self.c_star)
    }

    /// Smallest nonzero |beta*_j|; +inf when the support is empty.
    pub fn beta_min(&self) -> f64 {
        min_nonzero_abs(&self.beta_star)
    }

    /// Smallest nonzero |c*_i|; +inf when the support is empty.
    pub fn c_min(&self) -> f64 {
        min_nonzero_abs(&self.c_star)
    }
}

pub(crate) fn nonzero_indices(v: &DVector<f64>) -> Vec<usize> {
    v.iter().enumerate().filter(|(_, x)| **x != 0.0).map(|(j, _)| j).collect()
}

pub(crate) fn stack(a: &DVector<f64>, b: &DVector<f64>) -> DVector<f64> {
    let mut out = DVector::zeros(a.len() + b.len());
    out.rows_mut(0, a.len()).copy_from(a);
    out.rows_mut(a.len(), b.len()).copy_from(b);
    out
}

fn min_nonzero_abs(v: &DVector<f64>) -> f64 {
    v.iter()
        .filter(|x| **x != 0.0)
        .map(|x| x.abs())
        .fold(f64::INFINITY, f64::min)
}

/// `||y - X beta - D c||^2`.
pub fn residual_sum_of_squares(
    data: &PanelDataset,
    beta: &DVector<f64>,
    c: &DVector<f64>,
) -> Result<f64> {
    if beta.len() != data.n_covariates() {
        return Err(Error::DimensionMismatch {
            expected: data.n_covariates(),
            got: beta.len(),
            context: "beta length vs covariate count",
        });
    }
    if c.len() != data.n_individuals() {
        return Err(Error::DimensionMismatch {
            expected: data.n_individuals(),
            got: c.len(),
            context: "c length vs individual count",
        });
    }
    let design = assemble_design(data);
    let fitted = design.matvec(&stack(beta, c));
    Ok((data.y() - fitted).norm_squared())
}
