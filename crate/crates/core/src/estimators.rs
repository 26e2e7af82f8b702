//! Panel estimators built on the weighted-Lasso engine.
//!
//! The two-penalty objective is
//!
//! ```text
//! ||y - X beta - D c||^2 + 2 lambda ||beta||_1 + 2 mu ||c||_1.
//! ```
//!
//! Because the sensible ratio of the two penalty levels is `mu = lambda / sqrt(n)`,
//! the search can be reduced to a single tuning parameter: scale the dummy
//! block by `sqrt(n)`, solve a uniform-weight Lasso, and blow the dummy
//! coefficients back up by `sqrt(n)`. BIC picks the level along a
//! log-spaced path; the adaptive second stage reweights by inverse
//! first-stage estimates via column rescaling.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::panel::{
    assemble_design, nonzero_indices, rescale_dummies, residual_sum_of_squares, stack,
    PanelDataset, TrueModel,
};
use crate::solver::{self, Design, SolverSettings};

/// The two regularization levels: `lambda` on the covariate coefficients,
/// `mu` on the individual effects.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PenaltyPair {
    pub lambda: f64,
    pub mu: f64,
}

impl PenaltyPair {
    pub fn new(lambda: f64, mu: f64) -> Result<Self> {
        if !(lambda.is_finite() && mu.is_finite() && lambda >= 0.0 && mu >= 0.0) {
            return Err(Error::invalid("penalties must be finite and nonnegative"));
        }
        Ok(PenaltyPair { lambda, mu })
    }
}

/// Which estimator produced a fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    Lasso,
    AdaptiveLasso,
    OlsOracle,
    OlsAll,
}

impl EstimatorKind {
    /// Short label used in report tables.
    pub fn label(&self) -> &'static str {
        match self {
            EstimatorKind::Lasso => "lasso",
            EstimatorKind::AdaptiveLasso => "adaptive_lasso",
            EstimatorKind::OlsOracle => "ols_oracle",
            EstimatorKind::OlsAll => "ols_all",
        }
    }
}

impl std::fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// A fitted panel model. `objective` always reproduces
/// `rss + 2 lambda ||beta||_1 + 2 mu ||c||_1` at the stored coefficients
/// and penalty, and the active sets are exactly the nonzero coordinates.
#[derive(Debug, Clone)]
pub struct PanelFit {
    pub beta_hat: DVector<f64>,
    pub c_hat: DVector<f64>,
    pub penalty: PenaltyPair,
    pub active_beta: Vec<usize>,
    pub active_c: Vec<usize>,
    pub objective: f64,
    pub estimator: EstimatorKind,
    pub bic: Option<f64>,
    /// Set when an adaptive fit was requested on an all-zero first stage.
    pub first_stage_empty: bool,
}

impl PanelFit {
    /// Builds a fit from coefficient vectors, recomputing the objective.
    pub fn from_coefficients(
        data: &PanelDataset,
        beta_hat: DVector<f64>,
        c_hat: DVector<f64>,
        penalty: PenaltyPair,
        estimator: EstimatorKind,
        bic: Option<f64>,
    ) -> Result<Self> {
        let rss = residual_sum_of_squares(data, &beta_hat, &c_hat)?;
        let objective = rss
            + 2.0 * penalty.lambda * beta_hat.iter().map(|b| b.abs()).sum::<f64>()
            + 2.0 * penalty.mu * c_hat.iter().map(|c| c.abs()).sum::<f64>();
        Ok(PanelFit {
            active_beta: nonzero_indices(&beta_hat),
            active_c: nonzero_indices(&c_hat),
            beta_hat,
            c_hat,
            penalty,
            objective,
            estimator,
            bic,
            first_stage_empty: false,
        })
    }

    pub fn nnz_beta(&self) -> usize {
        self.active_beta.len()
    }

    pub fn nnz_c(&self) -> usize {
        self.active_c.len()
    }

    /// Stacked `(beta', c')'`.
    pub fn gamma_hat(&self) -> DVector<f64> {
        stack(&self.beta_hat, &self.c_hat)
    }
}

/// Grid controls for BIC selection: `n_points` log-spaced levels from the
/// data-driven maximum down to `ratio` times it.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct BicPath {
    pub n_points: usize,
    pub ratio: f64,
}

impl Default for BicPath {
    fn default() -> Self {
        BicPath { n_points: 100, ratio: 1e-3 }
    }
}

/// Extra fitting controls shared by the penalized estimators.
#[derive(Debug, Clone)]
pub struct FitOptions {
    pub settings: SolverSettings,
    /// Covariate columns fitted with zero penalty (always retained).
    pub free_covariates: Vec<usize>,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions { settings: fit_settings(), free_covariates: Vec::new() }
    }
}

impl FitOptions {
    /// Lighter convergence demands for walking a whole regularization
    /// path, where per-level precision beyond support identification and
    /// the residual buys nothing.
    pub fn for_paths() -> Self {
        FitOptions {
            settings: SolverSettings { tolerance: 1e-9, max_sweeps: 20_000, ..Default::default() },
            free_covariates: Vec::new(),
        }
    }
}

// Tighter than the solver default so that algebraically equivalent fitting
// routes agree to ~1e-8 per coefficient.
fn fit_settings() -> SolverSettings {
    SolverSettings { tolerance: 1e-11, max_sweeps: 100_000, ..Default::default() }
}

fn check_converged(sol: &solver::LassoSolution) -> Result<()> {
    if !sol.converged {
        return Err(Error::NonConvergence { sweeps: sol.sweeps_used, kkt: sol.kkt_max_violation });
    }
    Ok(())
}

/// Minimizes the two-penalty objective at fixed `(lambda, mu)`.
pub fn fit_panel_lasso(data: &PanelDataset, penalty: &PenaltyPair) -> Result<PanelFit> {
    fit_panel_lasso_opts(data, penalty, &FitOptions::default())
}

pub fn fit_panel_lasso_opts(
    data: &PanelDataset,
    penalty: &PenaltyPair,
    opts: &FitOptions,
) -> Result<PanelFit> {
    PenaltyPair::new(penalty.lambda, penalty.mu)?;
    let p = data.n_covariates();
    let n = data.n_individuals();
    let design = assemble_design(data);
    let mut weights = DVector::from_element(p + n, penalty.mu);
    for j in 0..p {
        weights[j] = if opts.free_covariates.contains(&j) { 0.0 } else { penalty.lambda };
    }
    let sol = solver::solve_design(&design, data.y(), &weights, &opts.settings, None)?;
    check_converged(&sol)?;
    let beta = sol.gamma_hat.rows(0, p).into_owned();
    let c = sol.gamma_hat.rows(p, n).into_owned();
    PanelFit::from_coefficients(data, beta, c, *penalty, EstimatorKind::Lasso, None)
}

/// Single-penalty route: scale the dummy block by `sqrt(n)`, solve a
/// uniform-weight Lasso at `lambda`, and return `c = sqrt(n) * c_tilde`.
/// Equivalent to [`fit_panel_lasso`] at `(lambda, lambda / sqrt(n))`.
pub fn fit_single_penalty_reduction(data: &PanelDataset, lambda: f64) -> Result<PanelFit> {
    fit_single_penalty_reduction_opts(data, lambda, &FitOptions::default())
}

pub fn fit_single_penalty_reduction_opts(
    data: &PanelDataset,
    lambda: f64,
    opts: &FitOptions,
) -> Result<PanelFit> {
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(Error::invalid("lambda must be finite and nonnegative"));
    }
    let n = data.n_individuals();
    let p = data.n_covariates();
    let design = rescale_dummies(assemble_design(data), n);
    let mut weights = DVector::from_element(p + n, lambda);
    for &j in &opts.free_covariates {
        weights[j] = 0.0;
    }
    let sol = solver::solve_design(&design, data.y(), &weights, &opts.settings, None)?;
    check_converged(&sol)?;
    let sqrt_n = (n as f64).sqrt();
    let beta = sol.gamma_hat.rows(0, p).into_owned();
    let c = sol.gamma_hat.rows(p, n).map(|v| sqrt_n * v);
    let penalty = PenaltyPair { lambda, mu: lambda / sqrt_n };
    PanelFit::from_coefficients(data, beta, c, penalty, EstimatorKind::Lasso, None)
}

/// Gaussian-likelihood BIC with the nonzero count as degrees of freedom.
fn bic_score(rss: f64, df: usize, n_obs: f64) -> f64 {
    n_obs * (rss / n_obs).ln() + df as f64 * n_obs.ln()
}

struct PathSelection {
    lambda: f64,
    gamma: DVector<f64>,
    bic: f64,
}

/// Walks a descending lambda grid with warm starts and keeps the BIC
/// minimizer; ties go to the larger (sparser) lambda. Non-converged
/// levels are skipped, and the walk stops once the fit saturates (as many
/// active coefficients as observations): below that point the criterion
/// degenerates and coordinate descent grinds against non-unique optima.
fn select_by_bic(
    design: &impl Design,
    y: &DVector<f64>,
    template: &DVector<f64>,
    path: &BicPath,
    settings: &SolverSettings,
) -> Result<PathSelection> {
    let n_obs = design.rows() as f64;
    if y.iter().all(|v| *v == 0.0) {
        // degenerate response: the zero fit is exact at any level
        return Ok(PathSelection {
            lambda: 0.0,
            gamma: DVector::zeros(design.cols()),
            bic: f64::NEG_INFINITY,
        });
    }
    let top = solver::lambda_max(design, y, template)?;
    let grid = solver::lambda_grid(top, path.n_points, path.ratio)?;
    let mut warm: Option<DVector<f64>> = None;
    let mut best: Option<PathSelection> = None;
    let mut last_failure: Option<solver::LassoSolution> = None;
    let mut consecutive_failures = 0usize;
    for &lam in &grid {
        let weights = template.map(|t| lam * t);
        let sol = solver::solve_design(design, y, &weights, settings, warm.as_ref())?;
        if !sol.converged {
            consecutive_failures += 1;
            let stop = consecutive_failures >= 2;
            warm = Some(sol.gamma_hat.clone());
            last_failure = Some(sol);
            if stop {
                break;
            }
            continue;
        }
        consecutive_failures = 0;
        let mut residual = y.clone();
        for j in 0..design.cols() {
            if sol.gamma_hat[j] != 0.0 {
                design.axpy_col(j, -sol.gamma_hat[j], &mut residual);
            }
        }
        let rss = residual.norm_squared();
        let df = sol.gamma_hat.iter().filter(|g| **g != 0.0).count();
        let bic = bic_score(rss, df, n_obs);
        if best.as_ref().is_none_or(|b| bic < b.bic) {
            best = Some(PathSelection { lambda: lam, gamma: sol.gamma_hat.clone(), bic });
        }
        warm = Some(sol.gamma_hat);
        if df >= design.rows() {
            break;
        }
    }
    match best {
        Some(sel) => Ok(sel),
        None => {
            let fail = last_failure.expect("either a selection or a failure exists");
            Err(Error::NonConvergence { sweeps: fail.sweeps_used, kkt: fail.kkt_max_violation })
        }
    }
}

/// BIC-tuned panel Lasso over the single-penalty reduction path.
pub fn fit_bic(data: &PanelDataset, path: &BicPath) -> Result<PanelFit> {
    fit_bic_opts(data, path, &FitOptions::for_paths())
}

pub fn fit_bic_opts(data: &PanelDataset, path: &BicPath, opts: &FitOptions) -> Result<PanelFit> {
    let n = data.n_individuals();
    let p = data.n_covariates();
    let design = rescale_dummies(assemble_design(data), n);
    let mut template = DVector::from_element(p + n, 1.0);
    for &j in &opts.free_covariates {
        template[j] = 0.0;
    }
    let sel = select_by_bic(&design, data.y(), &template, path, &opts.settings)?;
    let sqrt_n = (n as f64).sqrt();
    let beta = sel.gamma.rows(0, p).into_owned();
    let c = sel.gamma.rows(p, n).map(|v| sqrt_n * v);
    let penalty = PenaltyPair { lambda: sel.lambda, mu: sel.lambda / sqrt_n };
    PanelFit::from_coefficients(data, beta, c, penalty, EstimatorKind::Lasso, Some(sel.bic))
}

/// Design whose covariate columns are `x_j * x_scale[j]` and whose dummy
/// columns are `dummy_scale[i] * d_i`. Zero scales drop a column entirely,
/// which is how first-stage zeros are excluded from the second stage.
struct ColumnScaledDesign<'a> {
    x: &'a DMatrix<f64>,
    x_scale: Vec<f64>,
    dummy_scale: Vec<f64>,
    t: usize,
    x_col_norms_sq: Vec<f64>,
}

impl<'a> ColumnScaledDesign<'a> {
    fn new(x: &'a DMatrix<f64>, x_scale: Vec<f64>, dummy_scale: Vec<f64>, t: usize) -> Self {
        let x_col_norms_sq = (0..x.ncols()).map(|j| x.column(j).norm_squared()).collect();
        ColumnScaledDesign { x, x_scale, dummy_scale, t, x_col_norms_sq }
    }
}

impl Design for ColumnScaledDesign<'_> {
    fn rows(&self) -> usize {
        self.x.nrows()
    }

    fn cols(&self) -> usize {
        self.x.ncols() + self.dummy_scale.len()
    }

    fn col_norm_sq(&self, j: usize) -> f64 {
        let p = self.x.ncols();
        if j < p {
            self.x_scale[j] * self.x_scale[j] * self.x_col_norms_sq[j]
        } else {
            let s = self.dummy_scale[j - p];
            s * s * self.t as f64
        }
    }

    fn col_dot(&self, j: usize, v: &DVector<f64>) -> f64 {
        let p = self.x.ncols();
        if j < p {
            if self.x_scale[j] == 0.0 {
                return 0.0;
            }
            self.x_scale[j] * self.x.column(j).dot(v)
        } else {
            let i = j - p;
            if self.dummy_scale[i] == 0.0 {
                return 0.0;
            }
            let mut acc = 0.0;
            for s in 0..self.t {
                acc += v[i * self.t + s];
            }
            self.dummy_scale[i] * acc
        }
    }

    fn axpy_col(&self, j: usize, alpha: f64, v: &mut DVector<f64>) {
        let p = self.x.ncols();
        if j < p {
            let a = alpha * self.x_scale[j];
            if a != 0.0 {
                v.axpy(a, &self.x.column(j), 1.0);
            }
        } else {
            let i = j - p;
            let a = alpha * self.dummy_scale[i];
            if a != 0.0 {
                for s in 0..self.t {
                    v[i * self.t + s] += a;
                }
            }
        }
    }
}

fn zero_adaptive_fit(data: &PanelDataset) -> Result<PanelFit> {
    let mut fit = PanelFit::from_coefficients(
        data,
        DVector::zeros(data.n_covariates()),
        DVector::zeros(data.n_individuals()),
        PenaltyPair { lambda: 0.0, mu: 0.0 },
        EstimatorKind::AdaptiveLasso,
        None,
    )?;
    fit.first_stage_empty = true;
    Ok(fit)
}

/// Adaptive second stage: columns are rescaled by the first-stage
/// estimates (`x_j * beta_hat_j`, `sqrt(n) * c_hat_i * d_i`), a uniform
/// BIC-tuned Lasso runs on the reduced problem, and the coefficients are
/// transformed back. Variables zeroed in the first stage never return.
pub fn fit_adaptive(
    data: &PanelDataset,
    first_stage: &PanelFit,
    path: &BicPath,
) -> Result<PanelFit> {
    fit_adaptive_opts(data, first_stage, path, &FitOptions::for_paths())
}

pub fn fit_adaptive_opts(
    data: &PanelDataset,
    first_stage: &PanelFit,
    path: &BicPath,
    opts: &FitOptions,
) -> Result<PanelFit> {
    let p = data.n_covariates();
    let n = data.n_individuals();
    if first_stage.beta_hat.len() != p || first_stage.c_hat.len() != n {
        return Err(Error::invalid("first stage was fitted on different dimensions"));
    }
    if first_stage.nnz_beta() == 0 && first_stage.nnz_c() == 0 && opts.free_covariates.is_empty() {
        return zero_adaptive_fit(data);
    }
    let sqrt_n = (n as f64).sqrt();
    let mut x_scale: Vec<f64> = first_stage.beta_hat.iter().copied().collect();
    let mut template = DVector::from_element(p + n, 1.0);
    for &j in &opts.free_covariates {
        x_scale[j] = 1.0; // unpenalized columns enter unscaled
        template[j] = 0.0;
    }
    let dummy_scale: Vec<f64> = first_stage.c_hat.iter().map(|c| sqrt_n * c).collect();
    let design =
        ColumnScaledDesign::new(data.x(), x_scale.clone(), dummy_scale.clone(), data.n_periods());
    let sel = select_by_bic(&design, data.y(), &template, path, &opts.settings)?;
    let beta = DVector::from_fn(p, |j, _| x_scale[j] * sel.gamma[j]);
    let c = DVector::from_fn(n, |i, _| dummy_scale[i] * sel.gamma[p + i]);
    let penalty = PenaltyPair { lambda: sel.lambda, mu: sel.lambda / sqrt_n };
    PanelFit::from_coefficients(data, beta, c, penalty, EstimatorKind::AdaptiveLasso, Some(sel.bic))
}

/// Adaptive second stage at a fixed penalty pair: the weighted Lasso with
/// weights `lambda / |beta_hat_j|` and `mu / |c_hat_i|` (infinite where the
/// first stage is zero). This is the explicit-weight formulation of the
/// column-rescaling trick; [`fit_adaptive`] at its selected level solves
/// the same problem.
pub fn fit_adaptive_at(
    data: &PanelDataset,
    first_stage: &PanelFit,
    penalty: &PenaltyPair,
) -> Result<PanelFit> {
    fit_adaptive_at_opts(data, first_stage, penalty, &FitOptions::default())
}

pub fn fit_adaptive_at_opts(
    data: &PanelDataset,
    first_stage: &PanelFit,
    penalty: &PenaltyPair,
    opts: &FitOptions,
) -> Result<PanelFit> {
    PenaltyPair::new(penalty.lambda, penalty.mu)?;
    let p = data.n_covariates();
    let n = data.n_individuals();
    if first_stage.beta_hat.len() != p || first_stage.c_hat.len() != n {
        return Err(Error::invalid("first stage was fitted on different dimensions"));
    }
    if first_stage.nnz_beta() == 0 && first_stage.nnz_c() == 0 && opts.free_covariates.is_empty() {
        return zero_adaptive_fit(data);
    }
    let design = assemble_design(data);
    let weights = DVector::from_fn(p + n, |j, _| {
        if j < p {
            if opts.free_covariates.contains(&j) {
                return 0.0;
            }
            let b = first_stage.beta_hat[j].abs();
            if b == 0.0 { f64::INFINITY } else { penalty.lambda / b }
        } else {
            let c = first_stage.c_hat[j - p].abs();
            if c == 0.0 { f64::INFINITY } else { penalty.mu / c }
        }
    });
    let sol = solver::solve_design(&design, data.y(), &weights, &opts.settings, None)?;
    check_converged(&sol)?;
    let beta = sol.gamma_hat.rows(0, p).into_owned();
    let c = sol.gamma_hat.rows(p, n).into_owned();
    PanelFit::from_coefficients(data, beta, c, *penalty, EstimatorKind::AdaptiveLasso, None)
}

/// Dense least squares on selected covariate columns and dummy columns.
fn least_squares_on(
    data: &PanelDataset,
    cov_cols: &[usize],
    dummy_cols: &[usize],
    estimator: EstimatorKind,
) -> Result<PanelFit> {
    let rows = data.n_obs();
    let k = cov_cols.len() + dummy_cols.len();
    if k > rows {
        return Err(Error::Infeasible(format!("{k} regressors exceed {rows} observations")));
    }
    if k == 0 {
        return PanelFit::from_coefficients(
            data,
            DVector::zeros(data.n_covariates()),
            DVector::zeros(data.n_individuals()),
            PenaltyPair { lambda: 0.0, mu: 0.0 },
            estimator,
            None,
        );
    }
    let mut a = DMatrix::zeros(rows, k);
    for (col, &j) in cov_cols.iter().enumerate() {
        a.set_column(col, &data.x().column(j));
    }
    let t = data.n_periods();
    for (off, &i) in dummy_cols.iter().enumerate() {
        let col = cov_cols.len() + off;
        for s in 0..t {
            a[(i * t + s, col)] = 1.0;
        }
    }
    let svd = a.svd(true, true);
    let s_max = svd.singular_values.max();
    let tol = s_max * (rows.max(k) as f64) * f64::EPSILON;
    let rank = svd.singular_values.iter().filter(|s| **s > tol).count();
    if rank < k {
        return Err(Error::RankDeficient(format!("restricted design has rank {rank} < {k}")));
    }
    let coef = svd.solve(data.y(), tol).map_err(|e| Error::RankDeficient(e.to_string()))?;
    let mut beta = DVector::zeros(data.n_covariates());
    for (col, &j) in cov_cols.iter().enumerate() {
        beta[j] = coef[col];
    }
    let mut c = DVector::zeros(data.n_individuals());
    for (off, &i) in dummy_cols.iter().enumerate() {
        c[i] = coef[cov_cols.len() + off];
    }
    PanelFit::from_coefficients(data, beta, c, PenaltyPair { lambda: 0.0, mu: 0.0 }, estimator, None)
}

/// Least squares on the true supports only; zeros elsewhere. The
/// infeasible benchmark that knows the model.
pub fn ols_oracle(data: &PanelDataset, truth: &TrueModel) -> Result<PanelFit> {
    if truth.beta_star().len() != data.n_covariates()
        || truth.c_star().len() != data.n_individuals()
    {
        return Err(Error::invalid("truth dimensions do not match the panel"));
    }
    least_squares_on(data, truth.support_beta(), truth.support_c(), EstimatorKind::OlsOracle)
}

/// Least squares on all of `Z = (X, D)`; errors when the system is wider
/// than it is tall or rank deficient (a constant covariate column is
/// collinear with the dummies and is reported as such).
pub fn ols_all(data: &PanelDataset) -> Result<PanelFit> {
    let p = data.n_covariates();
    let n = data.n_individuals();
    if p + n > data.n_obs() {
        return Err(Error::Infeasible(format!(
            "{} regressors exceed {} observations",
            p + n,
            data.n_obs()
        )));
    }
    let cov: Vec<usize> = (0..p).collect();
    let dum: Vec<usize> = (0..n).collect();
    least_squares_on(data, &cov, &dum, EstimatorKind::OlsAll)
}

/// How covariates are brought to a common scale before fitting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StandardizeTarget {
    /// Column norm `sqrt(n*t)`, i.e. squared norm equal to the sample size.
    SqrtSampleSize,
    /// Column norm `n*t`.
    SampleSize,
}

impl StandardizeTarget {
    pub fn norm(&self, n_obs: usize) -> f64 {
        match self {
            StandardizeTarget::SqrtSampleSize => (n_obs as f64).sqrt(),
            StandardizeTarget::SampleSize => n_obs as f64,
        }
    }
}

/// Per-column factors applied during standardization; coefficients fitted
/// on the standardized data are mapped back with [`Standardization::rescale_beta`].
#[derive(Debug, Clone)]
pub struct Standardization {
    pub factors: Vec<f64>,
    pub target: StandardizeTarget,
}

impl Standardization {
    /// Maps coefficients from the standardized scale to the original one.
    pub fn rescale_beta(&self, beta_std: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(beta_std.len(), |j, _| beta_std[j] * self.factors[j])
    }
}

/// Rescales each covariate column to the target norm. Fails on a zero
/// column (it carries no signal and cannot be standardized).
pub fn standardize_covariates(
    data: &PanelDataset,
    target: StandardizeTarget,
) -> Result<(PanelDataset, Standardization)> {
    let goal = target.norm(data.n_obs());
    let mut x = data.x().clone();
    let mut factors = Vec::with_capacity(data.n_covariates());
    for j in 0..x.ncols() {
        let norm = x.column(j).norm();
        if norm == 0.0 {
            return Err(Error::invalid(format!("covariate column {j} is identically zero")));
        }
        let f = goal / norm;
        x.column_mut(j).scale_mut(f);
        factors.push(f);
    }
    let std = Standardization { factors, target };
    let scaled = PanelDataset::new(data.n_individuals(), data.n_periods(), data.y().clone(), x)?;
    Ok((scaled, std))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::panel::assemble_design;
    use approx::assert_relative_eq;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn random_panel(
        n: usize,
        t: usize,
        p: usize,
        seed: u64,
        noise: f64,
    ) -> (PanelDataset, TrueModel) {
        let mut rng = StdRng::seed_from_u64(seed);
        let x = DMatrix::from_fn(n * t, p, |_, _| rng.random_range(-1.0f64..1.0));
        let mut beta = DVector::zeros(p);
        for j in 0..p.min(2) {
            beta[j] = rng.random_range(0.5..1.5);
        }
        let mut c = DVector::zeros(n);
        if n > 1 {
            c[0] = 1.0;
        }
        let truth = TrueModel::new(beta, c);
        let mut y = DVector::from_fn(n * t, |_, _| {
            if noise > 0.0 { rng.random_range(-noise..noise) } else { 0.0 }
        });
        let tmp = PanelDataset::new(n, t, y.clone(), x.clone()).unwrap();
        let design = assemble_design(&tmp);
        y += design.matvec(&truth.gamma_star());
        (PanelDataset::new(n, t, y, x).unwrap(), truth)
    }

    #[test]
    fn unpenalized_fit_equals_least_squares() {
        let (data, _) = random_panel(3, 6, 4, 1, 0.3);
        let fit = fit_panel_lasso(&data, &PenaltyPair { lambda: 0.0, mu: 0.0 }).unwrap();
        let z = assemble_design(&data).to_dense();
        let ls = z.svd(true, true).solve(data.y(), 1e-12).unwrap();
        assert!((fit.gamma_hat() - ls).amax() < 1e-7);
    }

    #[test]
    fn block_penalties_above_lambda_max_give_zero_fit() {
        let (data, _) = random_panel(4, 5, 3, 2, 0.5);
        let design = assemble_design(&data);
        let lam = (0..3).map(|j| design.col_dot(j, data.y()).abs()).fold(0.0, f64::max);
        let mu = (3..7).map(|j| design.col_dot(j, data.y()).abs()).fold(0.0, f64::max);
        let fit = fit_panel_lasso(&data, &PenaltyPair { lambda: lam, mu }).unwrap();
        assert_eq!(fit.nnz_beta(), 0);
        assert_eq!(fit.nnz_c(), 0);
    }

    #[test]
    fn reduction_matches_two_penalty_route() {
        for seed in 0..5 {
            let (data, _) = random_panel(4, 6, 3, 100 + seed, 0.4);
            let lambda = 1.3;
            let mu = lambda / 2.0; // sqrt(4)
            let direct = fit_panel_lasso(&data, &PenaltyPair { lambda, mu }).unwrap();
            let reduced = fit_single_penalty_reduction(&data, lambda).unwrap();
            assert!((direct.gamma_hat() - reduced.gamma_hat()).amax() <= 1e-8, "seed {seed}");
            assert_relative_eq!(direct.objective, reduced.objective, max_relative = 1e-8);
        }
    }

    #[test]
    fn reduction_with_one_individual_is_the_identity_trick() {
        let (data, _) = random_panel(1, 8, 2, 7, 0.2);
        let lambda = 0.9;
        let direct = fit_panel_lasso(&data, &PenaltyPair { lambda, mu: lambda }).unwrap();
        let reduced = fit_single_penalty_reduction(&data, lambda).unwrap();
        assert!((direct.gamma_hat() - reduced.gamma_hat()).amax() <= 1e-9);
    }

    #[test]
    fn reduction_at_joint_lambda_max_is_zero() {
        let (data, _) = random_panel(3, 5, 2, 9, 0.5);
        let design = rescale_dummies(assemble_design(&data), 3);
        let template = DVector::from_element(5, 1.0);
        let top = solver::lambda_max(&design, data.y(), &template).unwrap();
        let fit = fit_single_penalty_reduction(&data, top).unwrap();
        assert_eq!(fit.nnz_beta() + fit.nnz_c(), 0);
    }

    #[test]
    fn objective_is_reproducible_and_certifies_optimality() {
        let (data, truth) = random_panel(4, 6, 3, 11, 0.3);
        let penalty = PenaltyPair { lambda: 0.8, mu: 0.4 };
        let fit = fit_panel_lasso(&data, &penalty).unwrap();
        let recomputed = residual_sum_of_squares(&data, &fit.beta_hat, &fit.c_hat).unwrap()
            + 2.0 * penalty.lambda * fit.beta_hat.iter().map(|b| b.abs()).sum::<f64>()
            + 2.0 * penalty.mu * fit.c_hat.iter().map(|c| c.abs()).sum::<f64>();
        assert_relative_eq!(fit.objective, recomputed, max_relative = 1e-10);
        // a minimizer cannot lose to the truth
        let at_truth = residual_sum_of_squares(&data, truth.beta_star(), truth.c_star()).unwrap()
            + 2.0 * penalty.lambda * truth.beta_star().iter().map(|b| b.abs()).sum::<f64>()
            + 2.0 * penalty.mu * truth.c_star().iter().map(|c| c.abs()).sum::<f64>();
        assert!(fit.objective <= at_truth + 1e-9);
    }

    #[test]
    fn bic_prefers_sparse_models_on_pure_noise() {
        let mut rng = StdRng::seed_from_u64(21);
        let n = 6;
        let t = 10;
        let x = DMatrix::from_fn(n * t, 8, |_, _| rng.random_range(-1.0f64..1.0));
        let y = DVector::from_fn(n * t, |_, _| rng.random_range(-1.0f64..1.0));
        let data = PanelDataset::new(n, t, y, x).unwrap();
        let path = BicPath::default();
        let fit = fit_bic(&data, &path).unwrap();
        assert!(
            fit.nnz_beta() + fit.nnz_c() <= 4,
            "selected {} nonzeros",
            fit.nnz_beta() + fit.nnz_c()
        );
        // no worse than the densest end of the grid
        let design = rescale_dummies(assemble_design(&data), n);
        let template = DVector::from_element(8 + n, 1.0);
        let top = solver::lambda_max(&design, data.y(), &template).unwrap();
        let dense_fit = fit_single_penalty_reduction(&data, top * path.ratio).unwrap();
        let rss = residual_sum_of_squares(&data, &dense_fit.beta_hat, &dense_fit.c_hat).unwrap();
        let dense_bic = bic_score(rss, dense_fit.nnz_beta() + dense_fit.nnz_c(), (n * t) as f64);
        assert!(fit.bic.unwrap() <= dense_bic + 1e-9);
    }

    #[test]
    fn single_point_grid_returns_that_fit() {
        let (data, _) = random_panel(3, 5, 2, 31, 0.4);
        let fit = fit_bic(&data, &BicPath { n_points: 1, ratio: 0.5 }).unwrap();
        assert_eq!(fit.nnz_beta() + fit.nnz_c(), 0); // the single point is lambda_max
        assert!(fit.bic.is_some());
    }

    #[test]
    fn nnz_is_zero_at_the_top_of_the_path() {
        let (data, _) = random_panel(4, 8, 4, 33, 0.3);
        let design = rescale_dummies(assemble_design(&data), 4);
        let template = DVector::from_element(8, 1.0);
        let top = solver::lambda_max(&design, data.y(), &template).unwrap();
        let at_top = fit_single_penalty_reduction(&data, top).unwrap();
        let at_bottom = fit_single_penalty_reduction(&data, top * 1e-3).unwrap();
        assert_eq!(at_top.nnz_beta() + at_top.nnz_c(), 0);
        assert!(at_bottom.nnz_beta() + at_bottom.nnz_c() >= at_top.nnz_beta() + at_top.nnz_c());
    }

    #[test]
    fn adaptive_zero_first_stage_stays_zero() {
        let (data, _) = random_panel(3, 4, 2, 41, 0.5);
        let zero = PanelFit::from_coefficients(
            &data,
            DVector::zeros(2),
            DVector::zeros(3),
            PenaltyPair { lambda: 1.0, mu: 1.0 },
            EstimatorKind::Lasso,
            None,
        )
        .unwrap();
        let fit = fit_adaptive(&data, &zero, &BicPath::default()).unwrap();
        assert!(fit.first_stage_empty);
        assert_eq!(fit.nnz_beta() + fit.nnz_c(), 0);
    }

    #[test]
    fn adaptive_recovers_truth_from_exact_first_stage_without_noise() {
        let (data, truth) = random_panel(4, 8, 3, 43, 0.0);
        let first = PanelFit::from_coefficients(
            &data,
            truth.beta_star().clone(),
            truth.c_star().clone(),
            PenaltyPair { lambda: 0.0, mu: 0.0 },
            EstimatorKind::Lasso,
            None,
        )
        .unwrap();
        let fit = fit_adaptive(&data, &first, &BicPath { n_points: 80, ratio: 1e-9 }).unwrap();
        assert!((fit.beta_hat.clone() - truth.beta_star()).amax() < 1e-6);
        assert!((fit.c_hat.clone() - truth.c_star()).amax() < 1e-6);
    }

    #[test]
    fn adaptive_support_never_grows() {
        for seed in 0..8 {
            let (data, _) = random_panel(4, 6, 5, 200 + seed, 0.6);
            let first = fit_bic(&data, &BicPath::default()).unwrap();
            let second = fit_adaptive(&data, &first, &BicPath::default()).unwrap();
            assert!(second.active_beta.iter().all(|j| first.active_beta.contains(j)));
            assert!(second.active_c.iter().all(|i| first.active_c.contains(i)));
        }
    }

    #[test]
    fn adaptive_rescaling_trick_satisfies_the_weighted_subgradient_conditions() {
        let (data, _) = random_panel(4, 7, 4, 55, 0.4);
        let first = fit_bic(&data, &BicPath::default()).unwrap();
        if first.nnz_beta() + first.nnz_c() == 0 {
            return;
        }
        let second = fit_adaptive(&data, &first, &BicPath::default()).unwrap();
        let penalty = second.penalty;
        let p = data.n_covariates();
        let n = data.n_individuals();
        let design = assemble_design(&data);
        let weights = DVector::from_fn(p + n, |j, _| {
            if j < p {
                let b = first.beta_hat[j].abs();
                if b == 0.0 { f64::INFINITY } else { penalty.lambda / b }
            } else {
                let c = first.c_hat[j - p].abs();
                if c == 0.0 { f64::INFINITY } else { penalty.mu / c }
            }
        });
        let res =
            solver::kkt_residuals_design(&design, data.y(), &weights, &second.gamma_hat()).unwrap();
        let scale = (0..p + n).map(|j| design.col_dot(j, data.y()).abs()).fold(1.0, f64::max);
        assert!(res.amax() <= 1e-7 * scale, "max weighted KKT residual {}", res.amax());
        // and the explicit-weight route lands on the same coefficients
        let explicit = fit_adaptive_at(&data, &first, &penalty).unwrap();
        assert!((explicit.gamma_hat() - second.gamma_hat()).amax() <= 1e-7);
    }

    #[test]
    fn oracle_recovers_truth_without_noise() {
        let (data, truth) = random_panel(4, 6, 3, 61, 0.0);
        let fit = ols_oracle(&data, &truth).unwrap();
        assert!((fit.beta_hat.clone() - truth.beta_star()).amax() < 1e-10);
        assert!((fit.c_hat.clone() - truth.c_star()).amax() < 1e-10);
        assert_eq!(fit.estimator, EstimatorKind::OlsOracle);
    }

    #[test]
    fn oracle_with_empty_supports_is_the_zero_fit() {
        let (data, _) = random_panel(3, 4, 2, 63, 0.5);
        let truth = TrueModel::new(DVector::zeros(2), DVector::zeros(3));
        let fit = ols_oracle(&data, &truth).unwrap();
        assert_eq!(fit.nnz_beta() + fit.nnz_c(), 0);
        assert_relative_eq!(fit.objective, data.y().norm_squared(), max_relative = 1e-12);
    }

    #[test]
    fn oracle_matches_normal_equations() {
        let (data, truth) = random_panel(4, 6, 3, 65, 0.4);
        let fit = ols_oracle(&data, &truth).unwrap();
        let t = data.n_periods();
        let k = truth.s1() + truth.s2();
        let mut a = DMatrix::zeros(data.n_obs(), k);
        for (col, &j) in truth.support_beta().iter().enumerate() {
            a.set_column(col, &data.x().column(j));
        }
        for (off, &i) in truth.support_c().iter().enumerate() {
            for s in 0..t {
                a[(i * t + s, truth.s1() + off)] = 1.0;
            }
        }
        let gram = a.transpose() * &a;
        let rhs = a.transpose() * data.y();
        let sol = gram.cholesky().unwrap().solve(&rhs);
        for (col, &j) in truth.support_beta().iter().enumerate() {
            assert_relative_eq!(fit.beta_hat[j], sol[col], epsilon = 1e-9);
        }
        for (off, &i) in truth.support_c().iter().enumerate() {
            assert_relative_eq!(fit.c_hat[i], sol[truth.s1() + off], epsilon = 1e-9);
        }
    }

    #[test]
    fn ols_all_reports_infeasible_when_wider_than_tall() {
        let mut rng = StdRng::seed_from_u64(71);
        let x = DMatrix::from_fn(100, 250, |_, _| rng.random_range(-1.0f64..1.0));
        let y = DVector::from_fn(100, |_, _| rng.random_range(-1.0f64..1.0));
        let data = PanelDataset::new(10, 10, y, x).unwrap();
        match ols_all(&data) {
            Err(Error::Infeasible(_)) => {}
            other => panic!("expected infeasible, got {other:?}"),
        }
    }

    #[test]
    fn ols_all_square_system_has_zero_residual() {
        let mut rng = StdRng::seed_from_u64(73);
        // 2 individuals x 2 periods, 2 covariates: a 4x4 square system
        let x = DMatrix::from_fn(4, 2, |_, _| rng.random_range(-1.0f64..1.0));
        let y = DVector::from_fn(4, |_, _| rng.random_range(-1.0f64..1.0));
        let data = PanelDataset::new(2, 2, y, x).unwrap();
        let fit = ols_all(&data).unwrap();
        let rss = residual_sum_of_squares(&data, &fit.beta_hat, &fit.c_hat).unwrap();
        assert!(rss < 1e-18, "rss = {rss}");
    }

    #[test]
    fn ols_all_matches_dense_least_squares() {
        let (data, _) = random_panel(3, 8, 4, 75, 0.5);
        let fit = ols_all(&data).unwrap();
        let z = assemble_design(&data).to_dense();
        let ls = z.svd(true, true).solve(data.y(), 1e-12).unwrap();
        assert!((fit.gamma_hat() - ls).amax() < 1e-9);
    }

    #[test]
    fn ols_all_rejects_constant_covariate() {
        let mut rng = StdRng::seed_from_u64(77);
        let mut x = DMatrix::from_fn(12, 2, |_, _| rng.random_range(-1.0f64..1.0));
        x.set_column(1, &DVector::from_element(12, 1.0));
        let y = DVector::from_fn(12, |_, _| rng.random_range(-1.0f64..1.0));
        let data = PanelDataset::new(3, 4, y, x).unwrap();
        assert!(matches!(ols_all(&data), Err(Error::RankDeficient(_))));
    }

    #[test]
    fn free_covariates_are_never_dropped() {
        let (data, _) = random_panel(3, 6, 4, 81, 0.5);
        let opts = FitOptions { free_covariates: vec![2], ..Default::default() };
        let fit = fit_bic_opts(&data, &BicPath::default(), &opts).unwrap();
        assert!(fit.active_beta.contains(&2));
        let second = fit_adaptive_opts(&data, &fit, &BicPath::default(), &opts).unwrap();
        assert!(second.active_beta.contains(&2));
    }

    #[test]
    fn standardization_round_trips_coefficients() {
        let (data, _) = random_panel(3, 6, 3, 91, 0.3);
        let (scaled, std) =
            standardize_covariates(&data, StandardizeTarget::SqrtSampleSize).unwrap();
        let goal = (data.n_obs() as f64).sqrt();
        for j in 0..3 {
            assert_relative_eq!(scaled.x().column(j).norm(), goal, max_relative = 1e-12);
        }
        // an unpenalized fit on either scale describes the same function
        let fit_std = fit_panel_lasso(&scaled, &PenaltyPair { lambda: 0.0, mu: 0.0 }).unwrap();
        let fit_raw = fit_panel_lasso(&data, &PenaltyPair { lambda: 0.0, mu: 0.0 }).unwrap();
        let back = std.rescale_beta(&fit_std.beta_hat);
        assert!((back - fit_raw.beta_hat).amax() < 1e-6);
    }
}
