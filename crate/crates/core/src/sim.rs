//! Monte Carlo harness: data-generating processes with Toeplitz-correlated
//! covariates, the nine experiment presets, per-replication theory
//! diagnostics and aggregate metrics.
//!
//! Replications are reproducible and order-independent: replication `i`
//! draws from a counter-mode RNG stream derived from `(seed, i)`, results
//! are gathered into an index-ordered buffer and aggregated sequentially,
//! so the report is bit-identical for any degree of parallelism.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, StudentT};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{
    fit_adaptive, fit_adaptive_at, fit_bic, fit_panel_lasso, ols_all, ols_oracle, BicPath,
    EstimatorKind, PanelFit, PenaltyPair,
};
use crate::panel::{assemble_design, PanelDataset, TrueModel};
use crate::theory::{
    basic_inequality_check, cone_check, event_a_check, k1_subgaussian, k2_subgaussian,
    penalties_subgaussian, realized_kappa, realized_kappa_bounds, sign_recovery_conditions,
    SignDiagnostics, TheoryInputs,
};

/// Marginal law of the covariate and error innovations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InnovationDist {
    Gaussian,
    /// Student t scaled to unit variance; with the default 3 degrees of
    /// freedom only two moments exist.
    HeavyTailed,
}

/// Full description of one experiment: the data-generating process, the
/// estimators to run and the replication plan.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub n: usize,
    pub t: usize,
    pub p: usize,
    pub s1: usize,
    pub s2: usize,
    pub beta_value: f64,
    pub c_value: f64,
    pub rho: f64,
    pub covariate_dist: InnovationDist,
    pub error_dist: InnovationDist,
    pub replications: usize,
    pub seed: u64,
    pub estimators: Vec<EstimatorKind>,
    #[serde(default = "default_heavy_df")]
    pub heavy_tail_df: f64,
    #[serde(default)]
    pub bic_grid: BicPath,
    /// Report `sqrt(mean ||err||^2)` instead of `mean ||err||`.
    #[serde(default)]
    pub mse_root_of_mean: bool,
}

fn default_heavy_df() -> f64 {
    3.0
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.t == 0 {
            return Err(Error::invalid("n and t must be positive"));
        }
        if self.s1 > self.p {
            return Err(Error::invalid("s1 exceeds the number of covariates"));
        }
        if self.s2 > self.n {
            return Err(Error::invalid("s2 exceeds the number of individuals"));
        }
        if !(0.0..1.0).contains(&self.rho) {
            return Err(Error::invalid("rho must lie in [0, 1)"));
        }
        if self.replications == 0 {
            return Err(Error::invalid("at least one replication is required"));
        }
        if self.heavy_tail_df <= 2.0 {
            return Err(Error::invalid("heavy_tail_df must exceed 2 for a finite variance"));
        }
        if self.estimators.is_empty() {
            return Err(Error::invalid("no estimators requested"));
        }
        Ok(())
    }

    /// Whether the all-variable least squares benchmark can run at all.
    pub fn ols_all_feasible(&self) -> bool {
        self.p + self.n <= self.n * self.t
    }
}

/// The nine preset experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Preset {
    A,
    B,
    C,
    D,
    E,
    F,
    G,
    H,
    I,
}

impl std::str::FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "A" => Ok(Preset::A),
            "B" => Ok(Preset::B),
            "C" => Ok(Preset::C),
            "D" => Ok(Preset::D),
            "E" => Ok(Preset::E),
            "F" => Ok(Preset::F),
            "G" => Ok(Preset::G),
            "H" => Ok(Preset::H),
            "I" => Ok(Preset::I),
            other => Err(Error::invalid(format!("unknown preset '{other}' (expected A..I)"))),
        }
    }
}

fn integer_cbrt(n: usize) -> usize {
    let mut k = (n as f64).cbrt().round() as usize;
    while k.pow(3) > n {
        k -= 1;
    }
    while (k + 1).pow(3) <= n {
        k += 1;
    }
    k
}

/// Exact parameterization of one of the preset experiments. All use
/// correlation base 0.75, unit coefficient values, `floor(n^{1/3})`
/// relevant individual effects and 1000 replications.
pub fn preset(name: Preset) -> ExperimentConfig {
    use InnovationDist::{Gaussian, HeavyTailed};
    let all = vec![
        EstimatorKind::Lasso,
        EstimatorKind::AdaptiveLasso,
        EstimatorKind::OlsOracle,
        EstimatorKind::OlsAll,
    ];
    let no_olsa =
        vec![EstimatorKind::Lasso, EstimatorKind::AdaptiveLasso, EstimatorKind::OlsOracle];
    let base = |n: usize, t: usize, p: usize, s1: usize, dist: InnovationDist,
                estimators: Vec<EstimatorKind>| ExperimentConfig {
        n,
        t,
        p,
        s1,
        s2: integer_cbrt(n),
        beta_value: 1.0,
        c_value: 1.0,
        rho: 0.75,
        covariate_dist: dist,
        error_dist: dist,
        replications: 1000,
        seed: 0,
        estimators,
        heavy_tail_df: 3.0,
        bic_grid: BicPath::default(),
        mse_root_of_mean: false,
    };
    // With more columns than observations the path bottoms out in
    // interpolating fits; a higher grid floor keeps the search in the
    // regime where BIC is meaningful.
    let wide = |mut cfg: ExperimentConfig| {
        cfg.bic_grid = BicPath { ratio: 1e-2, ..BicPath::default() };
        cfg
    };
    match name {
        Preset::A => base(10, 10, 25, 5, HeavyTailed, all),
        Preset::B => base(100, 10, 25, 5, HeavyTailed, all),
        Preset::C => base(10, 100, 25, 5, HeavyTailed, all),
        Preset::D => base(10, 10, 25, 5, Gaussian, all),
        Preset::E => base(100, 10, 25, 5, Gaussian, all),
        Preset::F => base(10, 100, 25, 5, Gaussian, all),
        Preset::G => wide(base(10, 10, 250, 5, HeavyTailed, no_olsa)),
        Preset::H => wide(base(10, 10, 250, 5, Gaussian, no_olsa)),
        Preset::I => wide(base(10, 10, 500, 10, Gaussian, no_olsa)),
    }
}

fn draw_innovation(rng: &mut ChaCha8Rng, dist: InnovationDist, df: f64) -> f64 {
    match dist {
        InnovationDist::Gaussian => StandardNormal.sample(rng),
        InnovationDist::HeavyTailed => {
            let t = StudentT::new(df).expect("df > 2 validated");
            let scale = ((df - 2.0) / df).sqrt();
            scale * t.sample(rng)
        }
    }
}

/// Draws an `n*t` by `p` covariate matrix whose rows are independent with
/// column correlation `rho^{|i-j|}`, realized as `L u` for the Cholesky
/// factor `L` of the Toeplitz matrix and iid standardized innovations `u`.
pub fn generate_covariates(
    n: usize,
    t: usize,
    p: usize,
    rho: f64,
    dist: InnovationDist,
    heavy_df: f64,
    rng: &mut ChaCha8Rng,
) -> Result<DMatrix<f64>> {
    if p == 0 {
        return Ok(DMatrix::zeros(n * t, 0));
    }
    let toeplitz = DMatrix::from_fn(p, p, |i, j| rho.powi((i as i32 - j as i32).abs()));
    let chol = toeplitz
        .cholesky()
        .ok_or_else(|| Error::invalid("correlation matrix is not positive definite"))?;
    let l = chol.l();
    let u = DMatrix::from_fn(n * t, p, |_, _| draw_innovation(rng, dist, heavy_df));
    Ok(u * l.transpose())
}

/// Places the `s1` nonzero covariate coefficients at equidistant positions
/// `round(k p / s1)`, `k = 0..s1`, and the `s2` nonzero individual effects
/// on the first `s2` individuals.
pub fn generate_truth(config: &ExperimentConfig) -> TrueModel {
    let mut beta = DVector::zeros(config.p);
    if config.s1 > 0 {
        for k in 0..config.s1 {
            let pos = ((k as f64) * config.p as f64 / config.s1 as f64).round() as usize;
            beta[pos.min(config.p - 1)] = config.beta_value;
        }
    }
    let mut c = DVector::zeros(config.n);
    for i in 0..config.s2 {
        c[i] = config.c_value;
    }
    TrueModel::new(beta, c)
}

/// Generates one replication: `y = X beta* + D c* + eps` with the RNG
/// stream derived from `(seed, replication_index)`.
pub fn generate_panel(
    config: &ExperimentConfig,
    replication_index: usize,
) -> Result<(PanelDataset, TrueModel, DVector<f64>)> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(replication_index as u64);
    let x = generate_covariates(
        config.n,
        config.t,
        config.p,
        config.rho,
        config.covariate_dist,
        config.heavy_tail_df,
        &mut rng,
    )?;
    let truth = generate_truth(config);
    let eps = DVector::from_fn(config.n * config.t, |_, _| {
        draw_innovation(&mut rng, config.error_dist, config.heavy_tail_df)
    });
    let shell = PanelDataset::new(config.n, config.t, DVector::zeros(config.n * config.t), x)?;
    let y = assemble_design(&shell).matvec(&truth.gamma_star()) + &eps;
    let data = shell.with_response(y)?;
    Ok((data, truth, eps))
}

/// Per-estimator summary of one replication.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct FitOutcome {
    pub estimator: EstimatorKind,
    pub err_beta: f64,
    pub err_c: f64,
    pub nnz_beta: usize,
    pub nnz_c: usize,
    pub sub_beta: bool,
    pub sub_c: bool,
    pub spar_beta: bool,
    pub spar_c: bool,
}

impl FitOutcome {
    pub fn from_fit(fit: &PanelFit, truth: &TrueModel) -> Self {
        let contains =
            |small: &[usize], big: &[usize]| small.iter().all(|j| big.contains(j));
        FitOutcome {
            estimator: fit.estimator,
            err_beta: (&fit.beta_hat - truth.beta_star()).norm(),
            err_c: (&fit.c_hat - truth.c_star()).norm(),
            nnz_beta: fit.nnz_beta(),
            nnz_c: fit.nnz_c(),
            sub_beta: contains(truth.support_beta(), &fit.active_beta),
            sub_c: contains(truth.support_c(), &fit.active_c),
            spar_beta: truth.support_beta() == fit.active_beta.as_slice(),
            spar_c: truth.support_c() == fit.active_c.as_slice(),
        }
    }
}

/// Sign-recovery sufficiency bookkeeping for one replication: condition
/// checks for the theory-level adaptive fit plus the realized sign match.
#[derive(Debug, Clone)]
pub struct SufficiencyDiagnostics {
    pub conditions: SignDiagnostics,
    pub beta_premises: bool,
    pub c_premises: bool,
    pub sign_beta_match: bool,
    pub sign_c_match: bool,
}

/// Theory diagnostics attached to one replication, evaluated on a
/// dedicated Lasso fit at the subgaussian penalty levels with `a = e`
/// (the levels the deterministic implications are tied to).
#[derive(Debug, Clone)]
pub struct TheoryDiagnostics {
    pub penalty: PenaltyPair,
    pub event_a: bool,
    pub x_eps_inf: f64,
    pub d_eps_inf: f64,
    pub cone_ok: bool,
    pub l1_bound_holds: bool,
    pub cone_bound_holds: bool,
    pub kappa_real: Option<f64>,
    pub bound_beta_ok: Option<bool>,
    pub bound_c_ok: Option<bool>,
    pub sufficiency: SufficiencyDiagnostics,
}

/// One finished replication.
#[derive(Debug, Clone)]
pub struct ReplicationResult {
    pub index: usize,
    pub outcomes: Vec<FitOutcome>,
    pub ols_all_infeasible: bool,
    pub diagnostics: TheoryDiagnostics,
}

/// A replication either finishes or records why it failed; failures never
/// abort the run.
#[derive(Debug, Clone)]
pub enum ReplicationOutcome {
    Ok(Box<ReplicationResult>),
    Failed { index: usize, message: String },
}

/// Population scaled Gram of the whole design: the Toeplitz correlation
/// matrix on the covariate block and the identity on the dummy block.
pub fn population_gram(config: &ExperimentConfig) -> DMatrix<f64> {
    let d = config.p + config.n;
    DMatrix::from_fn(d, d, |a, b| {
        if a < config.p && b < config.p {
            config.rho.powi((a as i32 - b as i32).abs())
        } else if a == b {
            1.0
        } else {
            0.0
        }
    })
}

/// Population restricted Gram over the true joint support: the Toeplitz
/// covariate block on `J1` and the identity on `J2`.
pub fn population_gram_jj(config: &ExperimentConfig, truth: &TrueModel) -> DMatrix<f64> {
    let j1 = truth.support_beta();
    let s = j1.len() + truth.s2();
    DMatrix::from_fn(s, s, |a, b| {
        if a < j1.len() && b < j1.len() {
            config.rho.powi((j1[a] as i32 - j1[b] as i32).abs())
        } else if a == b {
            1.0
        } else {
            0.0
        }
    })
}

fn signs(v: &DVector<f64>) -> Vec<i8> {
    v.iter().map(|x| if *x > 0.0 { 1 } else if *x < 0.0 { -1 } else { 0 }).collect()
}

fn bound_slack(bound: f64) -> f64 {
    1e-8 + 1e-12 * bound.abs()
}

fn run_replication(config: &ExperimentConfig, index: usize) -> Result<ReplicationResult> {
    let (data, truth, eps) = generate_panel(config, index)?;

    let wants = |k: EstimatorKind| config.estimators.contains(&k);
    let needs_lasso = wants(EstimatorKind::Lasso) || wants(EstimatorKind::AdaptiveLasso);

    let mut outcomes = Vec::new();
    let mut ols_all_infeasible = false;

    let lasso_fit = if needs_lasso { Some(fit_bic(&data, &config.bic_grid)?) } else { None };
    if let (true, Some(fit)) = (wants(EstimatorKind::Lasso), lasso_fit.as_ref()) {
        outcomes.push(FitOutcome::from_fit(fit, &truth));
    }
    if wants(EstimatorKind::AdaptiveLasso) {
        let first = lasso_fit.as_ref().expect("first stage fitted above");
        let fit = fit_adaptive(&data, first, &config.bic_grid)?;
        outcomes.push(FitOutcome::from_fit(&fit, &truth));
    }
    if wants(EstimatorKind::OlsOracle) {
        let fit = ols_oracle(&data, &truth)?;
        outcomes.push(FitOutcome::from_fit(&fit, &truth));
    }
    if wants(EstimatorKind::OlsAll) {
        match ols_all(&data) {
            Ok(fit) => outcomes.push(FitOutcome::from_fit(&fit, &truth)),
            Err(Error::Infeasible(_)) => ols_all_infeasible = true,
            Err(e) => return Err(e),
        }
    }

    let diagnostics = run_diagnostics(config, &data, &truth, &eps)?;
    Ok(ReplicationResult { index, outcomes, ols_all_infeasible, diagnostics })
}

fn run_diagnostics(
    config: &ExperimentConfig,
    data: &PanelDataset,
    truth: &TrueModel,
    eps: &DVector<f64>,
) -> Result<TheoryDiagnostics> {
    let inputs = TheoryInputs {
        n: config.n as f64,
        t: config.t as f64,
        p: config.p.max(1) as f64,
        r: 2.0,
        a_seq: std::f64::consts::E,
        max_eps_lr: 1.0,
        kappa_sq: 1.0,
        s1: config.s1 as f64,
        s2: config.s2 as f64,
    };
    let penalty = penalties_subgaussian(&inputs);

    // the deterministic implications are statements about the minimizer at
    // exactly these levels, so fit it here
    let fit = fit_panel_lasso(data, &penalty)?;

    let event = event_a_check(data, eps, &penalty)?;
    let delta_beta = &fit.beta_hat - truth.beta_star();
    let delta_c = &fit.c_hat - truth.c_star();
    let cone_ok = cone_check(
        &delta_beta,
        &delta_c,
        truth.support_beta(),
        truth.support_c(),
        &penalty,
    );
    let iq = basic_inequality_check(&fit, truth, data, &penalty)?;

    let (kappa_real, bound_beta_ok, bound_c_ok) = match realized_kappa(&fit, truth, data) {
        Ok(k) => {
            let (bb, bc) = realized_kappa_bounds(
                k,
                penalty.lambda,
                penalty.mu,
                truth.s1(),
                truth.s2(),
                config.n,
                config.t,
            )?;
            let err_b = delta_beta.norm();
            let err_c = delta_c.norm();
            (Some(k), Some(err_b <= bb + bound_slack(bb)), Some(err_c <= bc + bound_slack(bc)))
        }
        Err(_) => (None, None, None), // exact recovery: nothing to check
    };

    // sign-recovery sufficiency for the adaptive stage at the same levels
    let nt = (config.n * config.t) as f64;
    let j1c = (config.p - truth.s1()) as f64;
    let j2c = (config.n - truth.s2()) as f64;
    let a_seq = std::f64::consts::E;
    let k1 = k1_subgaussian(1.0, j1c, truth.s1() as f64, nt, a_seq);
    let k2 = k2_subgaussian(1.0, truth.s1() as f64, j2c, config.t as f64, a_seq);
    let gamma_jj = population_gram_jj(config, truth);
    let conditions =
        sign_recovery_conditions(data, truth, &fit, &penalty, k1, k2, Some(&gamma_jj))?;
    let adaptive = fit_adaptive_at(data, &fit, &penalty)?;
    let sufficiency = SufficiencyDiagnostics {
        beta_premises: conditions.beta_premises_hold(event.holds),
        c_premises: conditions.c_premises_hold(event.holds),
        sign_beta_match: signs(&adaptive.beta_hat) == signs(truth.beta_star()),
        sign_c_match: signs(&adaptive.c_hat) == signs(truth.c_star()),
        conditions,
    };

    Ok(TheoryDiagnostics {
        penalty,
        event_a: event.holds,
        x_eps_inf: event.x_eps_inf,
        d_eps_inf: event.d_eps_inf,
        cone_ok,
        l1_bound_holds: iq.l1_bound_holds,
        cone_bound_holds: iq.cone_bound_holds,
        kappa_real,
        bound_beta_ok,
        bound_c_ok,
        sufficiency,
    })
}

/// Aggregate metrics in the layout of the result tables, plus diagnostic
/// frequencies.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct EstimatorMetrics {
    pub mse_beta: f64,
    pub mse_c: f64,
    pub sub_beta: f64,
    pub sub_c: f64,
    pub spar_beta: f64,
    pub spar_c: f64,
    pub avg_nnz_beta: f64,
    pub avg_nnz_c: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct MetricsReport {
    pub per_estimator: Vec<(EstimatorKind, Option<EstimatorMetrics>)>,
    pub event_a_rate: f64,
    pub cone_rate: f64,
    pub bound_satisfaction_rate: f64,
    /// Quartiles (25/50/75) of the realized restricted-eigenvalue quotient.
    pub realized_kappa_quantiles: [f64; 3],
    pub completed: usize,
    pub failures: usize,
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let idx = (q * (sorted.len() - 1) as f64).round() as usize;
    sorted[idx.min(sorted.len() - 1)]
}

/// Aggregates per-replication outcomes in index order.
pub fn compute_metrics(
    config: &ExperimentConfig,
    replications: &[ReplicationOutcome],
) -> MetricsReport {
    let ok: Vec<&ReplicationResult> = replications
        .iter()
        .filter_map(|r| match r {
            ReplicationOutcome::Ok(res) => Some(res.as_ref()),
            ReplicationOutcome::Failed { .. } => None,
        })
        .collect();
    let failures = replications.len() - ok.len();

    let mut per_estimator = Vec::new();
    for &kind in &config.estimators {
        let rows: Vec<&FitOutcome> = ok
            .iter()
            .flat_map(|r| r.outcomes.iter().filter(|o| o.estimator == kind))
            .collect();
        if rows.is_empty() {
            per_estimator.push((kind, None));
            continue;
        }
        let m = rows.len() as f64;
        let mse = |f: &dyn Fn(&FitOutcome) -> f64| {
            if config.mse_root_of_mean {
                (rows.iter().map(|o| f(o) * f(o)).sum::<f64>() / m).sqrt()
            } else {
                rows.iter().map(|o| f(o)).sum::<f64>() / m
            }
        };
        let rate = |f: &dyn Fn(&FitOutcome) -> bool| {
            rows.iter().filter(|o| f(o)).count() as f64 / m
        };
        per_estimator.push((
            kind,
            Some(EstimatorMetrics {
                mse_beta: mse(&|o| o.err_beta),
                mse_c: mse(&|o| o.err_c),
                sub_beta: rate(&|o| o.sub_beta),
                sub_c: rate(&|o| o.sub_c),
                spar_beta: rate(&|o| o.spar_beta),
                spar_c: rate(&|o| o.spar_c),
                avg_nnz_beta: rows.iter().map(|o| o.nnz_beta as f64).sum::<f64>() / m,
                avg_nnz_c: rows.iter().map(|o| o.nnz_c as f64).sum::<f64>() / m,
            }),
        ));
    }

    let denom = ok.len().max(1) as f64;
    let event_a_rate = ok.iter().filter(|r| r.diagnostics.event_a).count() as f64 / denom;
    let cone_rate = ok.iter().filter(|r| r.diagnostics.cone_ok).count() as f64 / denom;
    let bound_satisfaction_rate = {
        let checked: Vec<bool> = ok
            .iter()
            .filter_map(|r| match (r.diagnostics.bound_beta_ok, r.diagnostics.bound_c_ok) {
                (Some(b), Some(c)) => Some(b && c),
                _ => None,
            })
            .collect();
        if checked.is_empty() {
            f64::NAN
        } else {
            checked.iter().filter(|b| **b).count() as f64 / checked.len() as f64
        }
    };
    let mut kappas: Vec<f64> = ok.iter().filter_map(|r| r.diagnostics.kappa_real).collect();
    kappas.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let realized_kappa_quantiles =
        [quantile(&kappas, 0.25), quantile(&kappas, 0.5), quantile(&kappas, 0.75)];

    MetricsReport {
        per_estimator,
        event_a_rate,
        cone_rate,
        bound_satisfaction_rate,
        realized_kappa_quantiles,
        completed: ok.len(),
        failures,
    }
}

/// Everything a run produces: the resolved config, the ordered
/// per-replication results and the aggregate report.
#[derive(Debug)]
pub struct ExperimentOutput {
    pub config: ExperimentConfig,
    pub replications: Vec<ReplicationOutcome>,
    pub report: MetricsReport,
}

/// Runs every replication (in parallel when a rayon pool is available),
/// producing a bit-identical report for a given config.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    config.validate()?;
    let replications: Vec<ReplicationOutcome> = (0..config.replications)
        .into_par_iter()
        .map(|i| match run_replication(config, i) {
            Ok(res) => ReplicationOutcome::Ok(Box::new(res)),
            Err(e) => ReplicationOutcome::Failed { index: i, message: e.to_string() },
        })
        .collect();
    let report = compute_metrics(config, &replications);
    Ok(ExperimentOutput { config: config.clone(), replications, report })
}

/// One line of the per-replication log.
#[derive(Debug, Clone, Serialize)]
pub struct ReplicationRecord {
    pub replication: usize,
    pub estimator: EstimatorKind,
    pub mse_beta: f64,
    pub mse_c: f64,
    pub nnz_beta: usize,
    pub nnz_c: usize,
    pub sub_beta: bool,
    pub sub_c: bool,
    pub spar_beta: bool,
    pub spar_c: bool,
    pub event_a: bool,
    pub cone_ok: bool,
    pub kappa_real: Option<f64>,
    pub bound_ok: Option<bool>,
}

/// Flattens a run into one record per replication and estimator; the
/// replication-level diagnostics repeat on each estimator row.
pub fn replication_records(output: &ExperimentOutput) -> Vec<ReplicationRecord> {
    let mut records = Vec::new();
    for rep in &output.replications {
        let res = match rep {
            ReplicationOutcome::Ok(res) => res,
            ReplicationOutcome::Failed { .. } => continue,
        };
        let d = &res.diagnostics;
        let bound_ok = match (d.bound_beta_ok, d.bound_c_ok) {
            (Some(b), Some(c)) => Some(b && c),
            _ => None,
        };
        for o in &res.outcomes {
            records.push(ReplicationRecord {
                replication: res.index,
                estimator: o.estimator,
                mse_beta: o.err_beta,
                mse_c: o.err_c,
                nnz_beta: o.nnz_beta,
                nnz_c: o.nnz_c,
                sub_beta: o.sub_beta,
                sub_c: o.sub_c,
                spar_beta: o.spar_beta,
                spar_c: o.spar_c,
                event_a: d.event_a,
                cone_ok: d.cone_ok,
                kappa_real: d.kappa_real,
                bound_ok,
            });
        }
    }
    records
}

/// Renders the aggregate report with the result-table column names.
/// Estimators that never produced a fit (infeasible benchmarks) get a
/// blank row.
pub fn metrics_csv(report: &MetricsReport) -> String {
    let mut out = String::from(
        "estimator,MSE(beta),MSE(c),Sub(beta),Sub(c),Spar(beta),Spar(c),nnz_beta,nnz_c\n",
    );
    for (kind, metrics) in &report.per_estimator {
        match metrics {
            Some(m) => {
                out.push_str(&format!(
                    "{},{},{},{},{},{},{},{},{}\n",
                    kind.label(),
                    m.mse_beta,
                    m.mse_c,
                    m.sub_beta,
                    m.sub_c,
                    m.spar_beta,
                    m.spar_c,
                    m.avg_nnz_beta,
                    m.avg_nnz_c
                ));
            }
            None => out.push_str(&format!("{},,,,,,,,\n", kind.label())),
        }
    }
    out
}
