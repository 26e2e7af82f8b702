//! Finite-sample diagnostics for the panel Lasso: theoretical penalty
//! levels under moment and subgaussian tail assumptions, oracle error
//! bounds, the correlation event behind them, restricted-eigenvalue
//! computation, and the adaptive-Lasso sign-recovery conditions.
//!
//! Everything here is checkable algebra. Quantities that depend on
//! unspecified absolute constants (probability lower bounds) take the
//! constants as arguments and are meant for reporting, never assertion.
//! Restricted-eigenvalue estimates come from a projected-gradient
//! heuristic and are upper bounds on the true minimum.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::estimators::{PanelFit, PenaltyPair};
use crate::panel::{assemble_design, PanelDataset, ScalingMatrix, TrueModel};
use crate::solver::Design;

/// Dimensions, tail parameters and sparsity levels feeding the closed-form
/// diagnostics. Real-valued so limiting cases can be probed directly.
#[derive(Debug, Clone, Copy)]
pub struct TheoryInputs {
    pub n: f64,
    pub t: f64,
    pub p: f64,
    /// Moment order of the covariates and errors (>= 2).
    pub r: f64,
    /// The free tuning sequence trading off penalty size against the
    /// probability of the correlation event.
    pub a_seq: f64,
    /// `max_t ||eps_{1,t}||_{L_r}`.
    pub max_eps_lr: f64,
    /// Population restricted eigenvalue (supplied or estimated).
    pub kappa_sq: f64,
    pub s1: f64,
    pub s2: f64,
}

impl TheoryInputs {
    pub fn validate(&self) -> Result<()> {
        let positive =
            [self.n, self.t, self.p, self.a_seq, self.max_eps_lr].iter().all(|v| *v > 0.0);
        if !positive {
            return Err(Error::invalid("dimensions and tuning values must be positive"));
        }
        if self.r < 2.0 {
            return Err(Error::invalid("moment order r must be at least 2"));
        }
        if self.s1 < 0.0 || self.s2 < 0.0 {
            return Err(Error::invalid("sparsity levels must be nonnegative"));
        }
        Ok(())
    }
}

/// Which tail assumption a formula is evaluated under.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    /// Only `r` moments exist.
    Moment,
    /// Uniformly subgaussian tails.
    Subgaussian,
}

/// Penalty levels under the `r`-moment assumption:
/// `lambda = 4 a p^{1/r} sqrt(NT) max_eps`, `mu = 4 a N^{1/r} sqrt(T) max_eps`.
pub fn penalties_moment(inputs: &TheoryInputs) -> PenaltyPair {
    let TheoryInputs { n, t, p, r, a_seq, max_eps_lr, .. } = *inputs;
    let lambda = 4.0 * a_seq * p.powf(1.0 / r) * (n * t).sqrt() * max_eps_lr;
    let mu = 4.0 * a_seq * n.powf(1.0 / r) * t.sqrt() * max_eps_lr;
    PenaltyPair { lambda, mu }
}

/// Penalty levels under subgaussian tails:
/// `lambda = sqrt(4 NT ln(p)^3 ln(a)^3)`, `mu = sqrt(4 T ln(N)^3 ln(a)^3)`.
/// Meaningful for `a, p, n >= e`.
pub fn penalties_subgaussian(inputs: &TheoryInputs) -> PenaltyPair {
    let TheoryInputs { n, t, p, a_seq, .. } = *inputs;
    let log_a3 = a_seq.ln().powi(3);
    let lambda = (4.0 * n * t * p.ln().powi(3) * log_a3).sqrt();
    let mu = (4.0 * t * n.ln().powi(3) * log_a3).sqrt();
    PenaltyPair { lambda, mu }
}

/// The price of not knowing the true model, with the error-bound radii it
/// implies for the two coefficient blocks.
#[derive(Debug, Clone, Copy)]
pub struct XiBound {
    pub xi: f64,
    /// `xi / sqrt(NT)`, the bound radius for `||beta_hat - beta*||`.
    pub radius_beta: f64,
    /// `xi / sqrt(T)`, the bound radius for `||c_hat - c*||`.
    pub radius_c: f64,
}

pub fn xi_bound(inputs: &TheoryInputs, regime: Regime) -> Result<XiBound> {
    if inputs.kappa_sq.is_nan() || inputs.kappa_sq <= 0.0 {
        return Err(Error::invalid("kappa^2 must be positive"));
    }
    let TheoryInputs { n, t, p, r, a_seq, max_eps_lr, kappa_sq, s1, s2 } = *inputs;
    let xi = match regime {
        Regime::Moment => {
            32.0 * a_seq * max_eps_lr * (p.powf(1.0 / r) * s1.sqrt() + n.powf(1.0 / r) * s2.sqrt())
                / kappa_sq
        }
        Regime::Subgaussian => {
            16.0 * a_seq.ln().powf(1.5)
                * (p.ln().powf(1.5) * s1.sqrt() + n.ln().powf(1.5) * s2.sqrt())
                / kappa_sq
        }
    };
    Ok(XiBound { xi, radius_beta: xi / (n * t).sqrt(), radius_c: xi / t.sqrt() })
}

/// Deterministic oracle error bounds on the correlation/eigenvalue event:
/// `||beta_hat - beta*|| <= 8 lambda sqrt(s1)/(k2 NT) + 4 mu sqrt(s2)/(k2 sqrt(N) T)`
/// and symmetrically for `c`, where `k2` is the (halved) restricted
/// eigenvalue entering the event.
pub fn oracle_error_bounds(
    lambda: f64,
    mu: f64,
    s1: usize,
    s2: usize,
    kappa_sq: f64,
    n: usize,
    t: usize,
) -> Result<(f64, f64)> {
    if kappa_sq.is_nan() || kappa_sq <= 0.0 {
        return Err(Error::invalid("kappa^2 must be positive"));
    }
    let (nf, tf) = (n as f64, t as f64);
    let (s1f, s2f) = ((s1 as f64).sqrt(), (s2 as f64).sqrt());
    let bound_beta =
        8.0 * lambda * s1f / (kappa_sq * nf * tf) + 4.0 * mu * s2f / (kappa_sq * nf.sqrt() * tf);
    let bound_c =
        8.0 * mu * s2f / (kappa_sq * tf) + 4.0 * lambda * s1f / (kappa_sq * nf.sqrt() * tf);
    Ok((bound_beta, bound_c))
}

/// Realized noise-correlation event: both `||X'eps||_inf <= lambda/2` and
/// `||D'eps||_inf <= mu/2`.
#[derive(Debug, Clone, Copy)]
pub struct EventACheck {
    pub holds: bool,
    pub x_eps_inf: f64,
    pub d_eps_inf: f64,
}

pub fn event_a_check(data: &PanelDataset, eps: &DVector<f64>, penalty: &PenaltyPair) -> Result<EventACheck> {
    if eps.len() != data.n_obs() {
        return Err(Error::DimensionMismatch {
            expected: data.n_obs(),
            got: eps.len(),
            context: "noise length vs observations",
        });
    }
    let design = assemble_design(data);
    let p = data.n_covariates();
    let mut x_inf = 0.0_f64;
    for j in 0..p {
        x_inf = x_inf.max(design.col_dot(j, eps).abs());
    }
    let mut d_inf = 0.0_f64;
    for j in design.dummy_cols() {
        d_inf = d_inf.max(design.col_dot(j, eps).abs());
    }
    Ok(EventACheck {
        holds: x_inf <= penalty.lambda / 2.0 && d_inf <= penalty.mu / 2.0,
        x_eps_inf: x_inf,
        d_eps_inf: d_inf,
    })
}

fn l1_on(v: &DVector<f64>, on: &[usize]) -> f64 {
    on.iter().map(|&j| v[j].abs()).sum()
}

fn l1_off(v: &DVector<f64>, on: &[usize]) -> f64 {
    let total: f64 = v.iter().map(|x| x.abs()).sum();
    total - l1_on(v, on)
}

// Floating-point slack for the deterministic inequality checks:
// absolute 1e-8 plus a machine-roundoff term at the scale of the sides.
fn ineq_slack(lhs: f64, rhs: f64) -> f64 {
    1e-8 + 1e-12 * lhs.abs().max(rhs.abs())
}

/// Membership of an estimation error in the weighted-l1 cone
/// `lambda ||d_beta off J1||_1 + mu ||d_c off J2||_1
///   <= 3 lambda ||d_beta on J1||_1 + 3 mu ||d_c on J2||_1`.
pub fn cone_check(
    delta_beta: &DVector<f64>,
    delta_c: &DVector<f64>,
    support_beta: &[usize],
    support_c: &[usize],
    penalty: &PenaltyPair,
) -> bool {
    let lhs = penalty.lambda * l1_off(delta_beta, support_beta)
        + penalty.mu * l1_off(delta_c, support_c);
    let rhs = 3.0
        * (penalty.lambda * l1_on(delta_beta, support_beta)
            + penalty.mu * l1_on(delta_c, support_c));
    lhs <= rhs + ineq_slack(lhs, rhs)
}

/// Both sides and margins of the two estimation-error inequalities that
/// hold for any objective minimizer on the correlation event.
#[derive(Debug, Clone, Copy)]
pub struct BasicInequalityReport {
    pub l1_bound_lhs: f64,
    pub l1_bound_rhs: f64,
    pub l1_bound_holds: bool,
    pub cone_bound_lhs: f64,
    pub cone_bound_rhs: f64,
    pub cone_bound_holds: bool,
}

impl BasicInequalityReport {
    pub fn holds(&self) -> bool {
        self.l1_bound_holds && self.cone_bound_holds
    }
}

pub fn basic_inequality_check(
    fit: &PanelFit,
    truth: &TrueModel,
    data: &PanelDataset,
    penalty: &PenaltyPair,
) -> Result<BasicInequalityReport> {
    let delta_beta = &fit.beta_hat - truth.beta_star();
    let delta_c = &fit.c_hat - truth.c_star();
    let design = assemble_design(data);
    let delta_gamma = crate::panel::stack(&delta_beta, &delta_c);
    let z_err = design.matvec(&delta_gamma).norm_squared();
    let (j1, j2) = (truth.support_beta(), truth.support_c());
    let l1_beta: f64 = delta_beta.iter().map(|x| x.abs()).sum();
    let l1_c: f64 = delta_c.iter().map(|x| x.abs()).sum();

    let l1_bound_lhs = z_err + penalty.lambda * l1_beta + penalty.mu * l1_c;
    let l1_bound_rhs =
        4.0 * (penalty.lambda * l1_on(&delta_beta, j1) + penalty.mu * l1_on(&delta_c, j2));
    let cone_bound_lhs = penalty.lambda * l1_off(&delta_beta, j1) + penalty.mu * l1_off(&delta_c, j2);
    let cone_bound_rhs =
        3.0 * (penalty.lambda * l1_on(&delta_beta, j1) + penalty.mu * l1_on(&delta_c, j2));
    Ok(BasicInequalityReport {
        l1_bound_lhs,
        l1_bound_rhs,
        l1_bound_holds: l1_bound_lhs <= l1_bound_rhs + ineq_slack(l1_bound_lhs, l1_bound_rhs),
        cone_bound_lhs,
        cone_bound_rhs,
        cone_bound_holds: cone_bound_lhs <= cone_bound_rhs + ineq_slack(cone_bound_lhs, cone_bound_rhs),
    })
}

/// The exact Rayleigh quotient `||Z (gamma_hat - gamma*)||^2 / ||S (gamma_hat - gamma*)||^2`
/// realized by a fit. Errors on exact recovery (zero denominator).
pub fn realized_kappa(fit: &PanelFit, truth: &TrueModel, data: &PanelDataset) -> Result<f64> {
    let delta = fit.gamma_hat() - truth.gamma_star();
    let scaling = ScalingMatrix::new(data.n_individuals(), data.n_periods(), data.n_covariates());
    let den = scaling.apply(&delta).norm_squared();
    if den == 0.0 {
        return Err(Error::Undefined("exact recovery: realized quotient is 0/0".into()));
    }
    let design = assemble_design(data);
    Ok(design.matvec(&delta).norm_squared() / den)
}

/// Error-bound radii with the realized quotient in place of the halved
/// population eigenvalue: exact algebra rather than a probabilistic claim.
pub fn realized_kappa_bounds(
    kappa_real_sq: f64,
    lambda: f64,
    mu: f64,
    s1: usize,
    s2: usize,
    n: usize,
    t: usize,
) -> Result<(f64, f64)> {
    if kappa_real_sq.is_nan() || kappa_real_sq <= 0.0 {
        return Err(Error::invalid("realized quotient must be positive"));
    }
    let (nf, tf) = (n as f64, t as f64);
    let (s1f, s2f) = ((s1 as f64).sqrt(), (s2 as f64).sqrt());
    let bound_beta = 4.0 * lambda * s1f / (kappa_real_sq * nf * tf)
        + 2.0 * mu * s2f / (kappa_real_sq * nf.sqrt() * tf);
    let bound_c = 4.0 * mu * s2f / (kappa_real_sq * tf)
        + 2.0 * lambda * s1f / (kappa_real_sq * nf.sqrt() * tf);
    Ok((bound_beta, bound_c))
}

/// Restricted-eigenvalue search space: support budgets for the two blocks
/// and the cone weights (`lambda/sqrt(NT)` on the covariate block,
/// `mu/sqrt(T)` on the dummy block).
#[derive(Debug, Clone, Copy)]
pub struct ConeSpec {
    pub p: usize,
    pub n_dummies: usize,
    pub budget_beta: usize,
    pub budget_c: usize,
    pub weight_beta: f64,
    pub weight_c: f64,
}

impl ConeSpec {
    pub fn new(
        p: usize,
        n: usize,
        t: usize,
        budget_beta: usize,
        budget_c: usize,
        penalty: &PenaltyPair,
    ) -> Result<Self> {
        if budget_beta > p || budget_c > n {
            return Err(Error::invalid("support budgets exceed block dimensions"));
        }
        let nt = (n * t) as f64;
        Ok(ConeSpec {
            p,
            n_dummies: n,
            budget_beta,
            budget_c,
            weight_beta: penalty.lambda / nt.sqrt(),
            weight_c: penalty.mu / (t as f64).sqrt(),
        })
    }

    fn dim(&self) -> usize {
        self.p + self.n_dummies
    }

    fn weight(&self, j: usize) -> f64 {
        if j < self.p { self.weight_beta } else { self.weight_c }
    }
}

/// Controls for the restricted-eigenvalue search.
#[derive(Debug, Clone, Copy)]
pub struct ReOptions {
    /// Enumerate all admissible support pairs up to this count.
    pub support_cap: usize,
    /// Random support pairs drawn when enumeration exceeds the cap.
    pub sample_size: usize,
    pub allow_sampling: bool,
    /// Random cone starting points per support.
    pub restarts: usize,
    pub max_iters: usize,
    pub seed: u64,
}

impl Default for ReOptions {
    fn default() -> Self {
        ReOptions {
            support_cap: 5000,
            sample_size: 200,
            allow_sampling: false,
            restarts: 50,
            max_iters: 300,
            seed: 0,
        }
    }
}

/// A restricted-eigenvalue estimate. The projected-gradient search can get
/// stuck in local minima, so `value` is an upper bound on the true
/// restricted eigenvalue.
#[derive(Debug, Clone, Copy)]
pub struct ReEstimate {
    pub value: f64,
    /// All admissible supports were enumerated (vs randomly sampled).
    pub exhaustive: bool,
    pub supports_evaluated: usize,
}

fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let mut acc: u128 = 1;
    for i in 0..k.min(n - k) {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc
}

/// All subsets of `{0..n}` of size at most `r`, smallest first.
fn subsets_up_to(n: usize, r: usize) -> Vec<Vec<usize>> {
    fn extend(n: usize, k: usize, start: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if prefix.len() == k {
            out.push(prefix.clone());
            return;
        }
        for j in start..n {
            prefix.push(j);
            extend(n, k, j + 1, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    for k in 0..=r.min(n) {
        extend(n, k, 0, &mut Vec::new(), &mut out);
    }
    out
}

/// Scales the off-support block so the weighted-l1 cone constraint holds
/// with equality when it was violated; no-op otherwise.
fn project_to_cone(delta: &mut DVector<f64>, cone: &ConeSpec, on_support: &[bool]) {
    let mut on = 0.0;
    let mut off = 0.0;
    for j in 0..cone.dim() {
        let w = cone.weight(j) * delta[j].abs();
        if on_support[j] {
            on += w;
        } else {
            off += w;
        }
    }
    if off <= 3.0 * on {
        return;
    }
    let factor = if off > 0.0 { 3.0 * on / off } else { 0.0 };
    for j in 0..cone.dim() {
        if !on_support[j] {
            delta[j] *= factor;
        }
    }
}

fn rayleigh(gram: &DMatrix<f64>, delta: &DVector<f64>) -> f64 {
    (gram * delta).dot(delta) / delta.norm_squared()
}

/// Projected-gradient minimization of the Rayleigh quotient over the cone
/// for one support pair, from one starting point.
fn minimize_from(
    gram: &DMatrix<f64>,
    cone: &ConeSpec,
    on_support: &[bool],
    start: DVector<f64>,
    step_bound: f64,
    max_iters: usize,
) -> Option<f64> {
    let mut delta = start;
    project_to_cone(&mut delta, cone, on_support);
    let norm = delta.norm();
    if norm == 0.0 {
        return None;
    }
    delta /= norm;
    let mut q = rayleigh(gram, &delta);
    let mut alpha = 1.0 / step_bound.max(1e-12);
    let mut stall = 0;
    for _ in 0..max_iters {
        let grad = gram * &delta * 2.0;
        let mut accepted = false;
        let mut a = alpha;
        for _ in 0..40 {
            let mut cand = &delta - &grad * a;
            project_to_cone(&mut cand, cone, on_support);
            let norm = cand.norm();
            if norm > 0.0 {
                cand /= norm;
                let qc = rayleigh(gram, &cand);
                if qc < q - 1e-15 {
                    delta = cand;
                    q = qc;
                    alpha = (a * 1.5).min(1e6 / step_bound.max(1e-12));
                    accepted = true;
                    break;
                }
            }
            a *= 0.5;
        }
        if !accepted {
            stall += 1;
            if stall >= 2 {
                break;
            }
        } else {
            stall = 0;
        }
    }
    Some(q)
}

/// Minimizes the Rayleigh quotient of a PSD Gram matrix over the weighted
/// restricted-eigenvalue cone, enumerating supports up to the budgets (or
/// sampling them past the cap) and running multi-start projected gradient
/// per support. Returns an upper-bound estimate.
pub fn restricted_eigenvalue_estimate(
    gram: &DMatrix<f64>,
    cone: &ConeSpec,
    opts: &ReOptions,
) -> Result<ReEstimate> {
    let d = cone.dim();
    if gram.nrows() != d || gram.ncols() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: gram.nrows(),
            context: "gram size vs cone dimension",
        });
    }
    if cone.budget_beta == 0 && cone.budget_c == 0 {
        return Err(Error::invalid("both support budgets are zero: the cone is trivial"));
    }

    let pair_count = subsets_count(cone.p, cone.budget_beta)
        .saturating_mul(subsets_count(cone.n_dummies, cone.budget_c));
    let exhaustive = pair_count <= opts.support_cap as u128;
    if !exhaustive && !opts.allow_sampling {
        return Err(Error::invalid(format!(
            "{pair_count} support pairs exceed the cap of {}; enable sampling",
            opts.support_cap
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let supports: Vec<(Vec<usize>, Vec<usize>)> = if exhaustive {
        let s1 = subsets_up_to(cone.p, cone.budget_beta);
        let s2 = subsets_up_to(cone.n_dummies, cone.budget_c);
        let mut pairs = Vec::new();
        for a in &s1 {
            for b in &s2 {
                pairs.push((a.clone(), b.clone()));
            }
        }
        pairs
    } else {
        (0..opts.sample_size)
            .map(|_| {
                (
                    sample_subset(&mut rng, cone.p, cone.budget_beta),
                    sample_subset(&mut rng, cone.n_dummies, cone.budget_c),
                )
            })
            .collect()
    };

    // Gershgorin bound on the largest eigenvalue, for the base step size.
    let step_bound = (0..d)
        .map(|i| (0..d).map(|j| gram[(i, j)].abs()).sum::<f64>())
        .fold(0.0, f64::max);

    // global minimum eigenvector, a good start for every support
    let eigen = gram.clone().symmetric_eigen();
    let min_idx = eigen
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .map(|(i, _)| i)
        .unwrap();
    let global_min_vec = eigen.eigenvectors.column(min_idx).into_owned();

    let mut best: Option<f64> = None;
    let mut evaluated = 0usize;
    for (r1, r2) in &supports {
        if r1.is_empty() && r2.is_empty() {
            continue; // only the origin satisfies the constraint
        }
        evaluated += 1;
        let mut on_support = vec![false; d];
        for &j in r1 {
            on_support[j] = true;
        }
        for &i in r2 {
            on_support[cone.p + i] = true;
        }
        let support_ids: Vec<usize> =
            (0..d).filter(|&j| on_support[j]).collect();

        let mut starts: Vec<DVector<f64>> = Vec::new();
        // minimum eigenvector of the on-support principal submatrix (lies
        // inside the cone: its off-support part is zero)
        let s = support_ids.len();
        let sub = DMatrix::from_fn(s, s, |a, b| gram[(support_ids[a], support_ids[b])]);
        let sub_eig = sub.symmetric_eigen();
        let sub_min = sub_eig
            .eigenvalues
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .map(|(i, _)| i)
            .unwrap();
        let mut embedded = DVector::zeros(d);
        for (a, &j) in support_ids.iter().enumerate() {
            embedded[j] = sub_eig.eigenvectors[(a, sub_min)];
        }
        starts.push(embedded);
        starts.push(global_min_vec.clone());
        for _ in 0..opts.restarts {
            starts.push(DVector::from_fn(d, |_, _| rng.random_range(-1.0..1.0)));
        }

        for start in starts {
            if let Some(q) =
                minimize_from(gram, cone, &on_support, start, step_bound, opts.max_iters)
            {
                best = Some(best.map_or(q, |b: f64| b.min(q)));
            }
        }
    }

    match best {
        Some(value) => Ok(ReEstimate { value, exhaustive, supports_evaluated: evaluated }),
        None => Err(Error::Undefined("no admissible direction in any cone".into())),
    }
}

fn subsets_count(n: usize, r: usize) -> u128 {
    (0..=r.min(n)).map(|k| binomial(n, k)).sum()
}

fn sample_subset(rng: &mut ChaCha8Rng, n: usize, k: usize) -> Vec<usize> {
    let k = k.min(n);
    let mut pool: Vec<usize> = (0..n).collect();
    for i in 0..k {
        let j = rng.random_range(i..n);
        pool.swap(i, j);
    }
    let mut subset = pool[..k].to_vec();
    subset.sort_unstable();
    subset
}

/// Eigenvalue stability under a perturbation of the Gram matrix:
/// `kappa_B^2 >= kappa_A^2 - 16 delta (s1+s2) m^2` with
/// `m = max(lambda/(sqrt(n) mu), sqrt(n) mu/lambda)`. May be negative
/// (vacuous) for large perturbations.
pub fn re_perturbation_bound(
    kappa_a_sq: f64,
    delta_inf: f64,
    s1: usize,
    s2: usize,
    lambda: f64,
    mu: f64,
    n: usize,
) -> Result<f64> {
    if kappa_a_sq < 0.0 || delta_inf < 0.0 {
        return Err(Error::invalid("inputs must be nonnegative"));
    }
    if lambda <= 0.0 || mu <= 0.0 {
        return Err(Error::Undefined("penalty ratio undefined for a zero penalty".into()));
    }
    let sqrt_n = (n as f64).sqrt();
    let m = (lambda / (sqrt_n * mu)).max(sqrt_n * mu / lambda);
    Ok(kappa_a_sq - 16.0 * delta_inf * (s1 + s2) as f64 * m * m)
}

/// One inequality of the sign-recovery sufficient conditions.
#[derive(Debug, Clone, Copy)]
pub struct ConditionCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
    /// The relevant block is empty, so the condition constrains nothing.
    pub vacuous: bool,
}

fn condition(lhs: f64, rhs: f64, vacuous: bool) -> ConditionCheck {
    ConditionCheck { lhs, rhs, holds: vacuous || lhs <= rhs, vacuous }
}

/// Everything needed to decide whether the sufficient conditions for the
/// adaptive second stage to recover the exact sign pattern are met.
#[derive(Debug, Clone, Copy)]
pub struct SignDiagnostics {
    pub retention_beta: ConditionCheck,
    pub exclusion_beta: ConditionCheck,
    pub retention_c: ConditionCheck,
    pub exclusion_c: ConditionCheck,
    pub k1: f64,
    pub k2: f64,
    pub phi_min_gamma_jj: f64,
    /// No irrelevant covariate correlates too much with relevant columns.
    pub in_c1: bool,
    /// No irrelevant dummy correlates too much with relevant covariates.
    pub in_c2: bool,
    /// The restricted empirical Gram is at least half its population floor.
    pub in_d: bool,
    pub err_beta: f64,
    pub err_c: f64,
    /// First-stage accuracy events `err <= min/2`.
    pub acc_beta: bool,
    pub acc_c: bool,
}

impl SignDiagnostics {
    /// All premises of the beta-block sign-recovery statement.
    pub fn beta_premises_hold(&self, event_a: bool) -> bool {
        event_a
            && self.in_c1
            && self.in_d
            && self.acc_beta
            && self.acc_c
            && self.retention_beta.holds
            && self.exclusion_beta.holds
    }

    /// All premises of the c-block sign-recovery statement.
    pub fn c_premises_hold(&self, event_a: bool) -> bool {
        event_a
            && self.in_c2
            && self.in_d
            && self.acc_beta
            && self.acc_c
            && self.retention_c.holds
            && self.exclusion_c.holds
    }
}

/// Default correlation ceiling for the covariate block under the
/// `r`-moment assumption.
pub fn k1_moment(j1c: f64, j1: f64, nt: f64, a_seq: f64, r: f64) -> f64 {
    j1c.powf(2.0 / r) * j1.powf(2.0 / r) * nt.sqrt() * a_seq
}

/// Default correlation ceiling for the dummy block under the `r`-moment
/// assumption.
pub fn k2_moment(j1: f64, j2c: f64, t: f64, a_seq: f64, r: f64) -> f64 {
    j1.powf(1.0 / r) * j2c.powf(1.0 / r) * t.sqrt() * a_seq
}

/// Default correlation ceiling for the covariate block under subgaussian
/// tails; `a_const` is the unspecified absolute constant (1 by convention).
pub fn k1_subgaussian(a_const: f64, j1c: f64, j1: f64, nt: f64, a_seq: f64) -> f64 {
    a_const * (1.0 + j1c).ln() * (std::f64::consts::E + j1).ln() * nt.sqrt() * a_seq.ln()
}

/// Default correlation ceiling for the dummy block under subgaussian tails.
pub fn k2_subgaussian(a_const: f64, j1: f64, j2c: f64, t: f64, a_seq: f64) -> f64 {
    a_const * (1.0 + j1).ln() * (1.0 + j2c).ln() * t.sqrt() * a_seq.ln()
}

/// Evaluates the four sign-recovery inequalities and the correlation/
/// eigenvalue events for a first-stage fit. `gamma_jj` is the population
/// restricted Gram over the true joint support; when absent the empirical
/// one stands in (which makes the eigenvalue event hold by construction).
pub fn sign_recovery_conditions(
    data: &PanelDataset,
    truth: &TrueModel,
    first_stage: &PanelFit,
    penalty: &PenaltyPair,
    k1: f64,
    k2: f64,
    gamma_jj: Option<&DMatrix<f64>>,
) -> Result<SignDiagnostics> {
    let p = data.n_covariates();
    let n = data.n_individuals();
    let t = data.n_periods();
    let (nt_f, t_f) = ((n * t) as f64, t as f64);
    let j1 = truth.support_beta();
    let j2 = truth.support_c();
    let s = j1.len() + j2.len();

    let err_beta = (&first_stage.beta_hat - truth.beta_star()).norm();
    let err_c = (&first_stage.c_hat - truth.c_star()).norm();
    let beta_min = truth.beta_min();
    let c_min = truth.c_min();
    let acc_beta = err_beta <= beta_min / 2.0;
    let acc_c = err_c <= c_min / 2.0;

    // Restricted Grams over the joint support, in the scaled metric.
    let (phi_min_gamma, in_d) = if s == 0 {
        (f64::INFINITY, true)
    } else {
        let psi_jj = scaled_restricted_gram(data, j1, j2);
        let phi_psi = min_eigenvalue(&psi_jj);
        match gamma_jj {
            Some(g) => {
                if g.nrows() != s || g.ncols() != s {
                    return Err(Error::DimensionMismatch {
                        expected: s,
                        got: g.nrows(),
                        context: "population gram vs joint support size",
                    });
                }
                let phi_gamma = min_eigenvalue(g);
                if phi_gamma <= 0.0 {
                    return Err(Error::RankDeficient(
                        "population restricted gram is singular".into(),
                    ));
                }
                (phi_gamma, phi_psi >= phi_gamma / 2.0)
            }
            None => {
                if phi_psi <= 0.0 {
                    return Err(Error::RankDeficient(
                        "empirical restricted gram is singular".into(),
                    ));
                }
                (phi_psi, true)
            }
        }
    };

    // shared envelope: the noise half-levels plus the reweighting term
    let inner = (penalty.lambda / (2.0 * nt_f.sqrt())).max(penalty.mu / (2.0 * t_f.sqrt()))
        + (2.0 * penalty.lambda / (nt_f.sqrt() * beta_min))
            .max(2.0 * penalty.mu / (t_f.sqrt() * c_min));
    let s_f = s as f64;

    let retention_beta = condition(
        2.0 * s_f.sqrt() / phi_min_gamma * inner,
        nt_f.sqrt() * beta_min,
        j1.is_empty(),
    );
    let rhs_b2 = if err_beta == 0.0 { f64::INFINITY } else { penalty.lambda / err_beta };
    let exclusion_beta = condition(
        2.0 * s_f * k1 / phi_min_gamma * inner + penalty.lambda / 2.0,
        rhs_b2,
        j1.is_empty(),
    );
    let retention_c =
        condition(2.0 * s_f.sqrt() / phi_min_gamma * inner, t_f.sqrt() * c_min, j2.is_empty());
    let rhs_c2 = if err_c == 0.0 { f64::INFINITY } else { penalty.mu / err_c };
    let exclusion_c = condition(
        2.0 * s_f * k2 / phi_min_gamma * inner + penalty.mu / 2.0,
        rhs_c2,
        j2.is_empty(),
    );

    // correlation ceilings between relevant and irrelevant columns
    let x = data.x();
    let j1_set: Vec<bool> = {
        let mut v = vec![false; p];
        for &j in j1 {
            v[j] = true;
        }
        v
    };
    let mut c1_worst = 0.0_f64;
    for k in 0..p {
        if j1_set[k] {
            continue;
        }
        for &l in j1 {
            c1_worst = c1_worst.max(x.column(k).dot(&x.column(l)).abs() / nt_f.sqrt());
        }
        for &i in j2 {
            let mut acc = 0.0;
            for s_t in 0..t {
                acc += x[(i * t + s_t, k)];
            }
            c1_worst = c1_worst.max(acc.abs() / t_f.sqrt());
        }
    }
    let in_c1 = c1_worst <= k1;

    let mut c2_worst = 0.0_f64;
    let j2_set: Vec<bool> = {
        let mut v = vec![false; n];
        for &i in j2 {
            v[i] = true;
        }
        v
    };
    for i in 0..n {
        if j2_set[i] {
            continue;
        }
        for &k in j1 {
            let mut acc = 0.0;
            for s_t in 0..t {
                acc += x[(i * t + s_t, k)];
            }
            c2_worst = c2_worst.max(acc.abs() / t_f.sqrt());
        }
    }
    let in_c2 = c2_worst <= k2;

    Ok(SignDiagnostics {
        retention_beta,
        exclusion_beta,
        retention_c,
        exclusion_c,
        k1,
        k2,
        phi_min_gamma_jj: phi_min_gamma,
        in_c1,
        in_c2,
        in_d,
        err_beta,
        err_c,
        acc_beta,
        acc_c,
    })
}

/// `S_JJ^{-1} Z_J' Z_J S_JJ^{-1}` over the joint support.
pub fn scaled_restricted_gram(
    data: &PanelDataset,
    j1: &[usize],
    j2: &[usize],
) -> DMatrix<f64> {
    let t = data.n_periods();
    let nt = data.n_obs();
    let s = j1.len() + j2.len();
    let mut a = DMatrix::zeros(nt, s);
    for (col, &j) in j1.iter().enumerate() {
        let scale = 1.0 / (nt as f64).sqrt();
        a.set_column(col, &(data.x().column(j) * scale));
    }
    for (off, &i) in j2.iter().enumerate() {
        let col = j1.len() + off;
        let scale = 1.0 / (t as f64).sqrt();
        for s_t in 0..t {
            a[(i * t + s_t, col)] = scale;
        }
    }
    a.transpose() * a
}

fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    m.clone().symmetric_eigen().eigenvalues.min()
}

/// Lower bound on the probability that the correlation and eigenvalue
/// events both hold under the `r`-moment assumption. Depends on constants
/// known only up to bounds (`c_r <= 10 r` and the derived `d_r`); for
/// reporting, never for assertion.
pub fn probability_bound_moment(
    inputs: &TheoryInputs,
    c_r: Option<f64>,
    d_r: Option<f64>,
) -> f64 {
    let TheoryInputs { n, p, r, a_seq, kappa_sq, s1, s2, .. } = *inputs;
    let c_r = c_r.unwrap_or(10.0 * r);
    let d_r = d_r.unwrap_or_else(|| (4.0 * 10.0 * (r / 2.0)).powf(r / 2.0).max(1.0));
    let term1 = 2.0 * (c_r / a_seq).powf(r);
    let term2 = d_r * (p * p + n * p) * (s1 + s2).powf(r / 2.0) * (p / n).max(n / p)
        / (kappa_sq.powf(r / 2.0) * n.powf(r / 4.0));
    1.0 - term1 - term2
}

/// Lower bound on the probability of the same events under subgaussian
/// tails, with user-supplied absolute constants (1 by convention).
pub fn probability_bound_subgaussian(inputs: &TheoryInputs, a_const: f64, b_const: f64) -> f64 {
    let TheoryInputs { n, p, a_seq, kappa_sq, s1, s2, .. } = *inputs;
    let ratio = (p.ln() / n.ln()).max(n.ln() / p.ln());
    let t_val = kappa_sq / ((s1 + s2) * ratio.powi(3));
    let log_a = a_seq.ln();
    1.0 - a_const * p.powf(1.0 - b_const * log_a)
        - a_const * n.powf(1.0 - b_const * log_a)
        - a_const * (p * p + n * p) * (-b_const * (t_val * t_val * n).powf(1.0 / 3.0)).exp()
}
