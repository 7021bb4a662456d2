//! Linear mixed models for stepped-wedge data.
//!
//! Every model has an intercept, categorical period effects `beta_2..beta_J`, a
//! cluster random intercept, and one of four treatment parameterizations:
//!
//! | kind      | treatment term                      | parameters        |
//! |-----------|-------------------------------------|-------------------|
//! | `It`      | `delta * x`                         | 1                 |
//! | `Eti`     | `delta_s * x`                       | `S = J - 1`       |
//! | `Reti(k)` | `delta_min(s, k) * x`               | `k`               |
//! | `Ncs(d)`  | `sum_k omega_k b_k(s) * x`          | `d`               |
//!
//! Optionally a cluster random treatment effect `eta_i * x`, correlated with
//! the random intercept, is added.
//!
//! Fitting works on cluster-period means. With `K` individuals per cell the
//! individual-level likelihood factors into a between-cell part (means with
//! covariance `sigma^2/K I + Z G Z'`) and the within-cell sum of squares, so
//! the reduction is exact. Variance components are estimated by REML (or ML)
//! with `sigma^2` profiled out; the remaining ratios are found by
//! golden-section search (random intercept only) or Nelder-Mead.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::datagen::TrialDataset;
use crate::design::StudyDesign;
use crate::dist::chi_square_sf;
use crate::error::{domain, Error, Result};
use crate::linalg::{chol_logdet, cholesky, symmetrize, Mat, Vector};
use crate::optim::{golden_section, nelder_mead};
use crate::spline::SplineBasis;

const LOG_2PI: f64 = 1.837_877_066_409_345_5;
const REL_TOL: f64 = 1e-8;
const MAX_ITER: usize = 500;
const RHO_BOUND: f64 = 0.99;

/// Treatment-effect parameterization.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    It,
    Eti,
    /// Exposure-time indicators pooled at and beyond `s*`.
    Reti(usize),
    /// Natural cubic spline through the origin with `d` degrees of freedom.
    Ncs(usize),
}

impl ModelKind {
    /// Parses `it`, `eti`, `reti:S` or `ncs:D`.
    pub fn parse(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        let (name, arg) = match lower.split_once(':') {
            Some((n, a)) => (n, Some(a)),
            None => (lower.as_str(), None),
        };
        let number = |what: &str| -> Result<usize> {
            arg.ok_or_else(|| domain(format!("model '{s}' needs {what}, e.g. {name}:3")))?
                .parse::<usize>()
                .map_err(|_| domain(format!("model '{s}': {what} must be a positive integer")))
        };
        match (name, arg) {
            ("it", None) => Ok(Self::It),
            ("eti", None) => Ok(Self::Eti),
            ("reti", _) => Ok(Self::Reti(number("a flattening time")?)),
            ("ncs", _) => Ok(Self::Ncs(number("degrees of freedom")?)),
            _ => Err(domain(format!(
                "unknown model '{s}' (expected it, eti, reti:S or ncs:D)"
            ))),
        }
    }

    pub fn label(&self) -> String {
        match self {
            Self::It => "it".to_string(),
            Self::Eti => "eti".to_string(),
            Self::Reti(k) => format!("reti:{k}"),
            Self::Ncs(d) => format!("ncs:{d}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub random_treatment: bool,
    pub ci_level: f64,
}

impl ModelSpec {
    pub fn new(kind: ModelKind) -> Self {
        Self {
            kind,
            random_treatment: false,
            ci_level: 0.95,
        }
    }

    pub fn with_random_treatment(mut self, on: bool) -> Self {
        self.random_treatment = on;
        self
    }

    pub fn with_ci_level(mut self, level: f64) -> Result<Self> {
        if !(level > 0.0 && level < 1.0) {
            return Err(domain(format!("confidence level must lie in (0, 1), got {level}")));
        }
        self.ci_level = level;
        Ok(self)
    }

    /// `eti`, `reti:3`, `eti-rte`, ...
    pub fn label(&self) -> String {
        let mut l = self.kind.label();
        if self.random_treatment {
            l.push_str("-rte");
        }
        l
    }
}

/// Variance components of the mixed model.
///
/// `tau2` and `nu2` are the variances of the cluster random intercept and
/// random treatment effect, `rho_re` their correlation, `sigma2` the
/// individual-level residual variance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VarianceComponents {
    pub tau2: f64,
    pub sigma2: f64,
    pub nu2: f64,
    pub rho_re: f64,
}

impl VarianceComponents {
    pub fn random_intercept(tau2: f64, sigma2: f64) -> Self {
        Self {
            tau2,
            sigma2,
            nu2: 0.0,
            rho_re: 0.0,
        }
    }

    /// Intraclass correlation `tau2 / (tau2 + sigma2)`.
    pub fn icc(&self) -> f64 {
        self.tau2 / (self.tau2 + self.sigma2)
    }
}

/// Likelihood used to estimate variance components.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Criterion {
    Reml,
    Ml,
}

impl Criterion {
    pub fn label(&self) -> &'static str {
        match self {
            Self::Reml => "REML",
            Self::Ml => "ML",
        }
    }
}

/// Maps exposure time to the treatment columns of a model.
#[derive(Debug, Clone, PartialEq)]
struct TreatmentColumns {
    kind: ModelKind,
    max_exposure: usize,
    basis: Option<SplineBasis>,
}

impl TreatmentColumns {
    fn new(kind: ModelKind, design: &StudyDesign) -> Result<Self> {
        let max_exposure = design.max_exposure();
        let mut basis = None;
        match kind {
            ModelKind::It | ModelKind::Eti => {}
            ModelKind::Reti(0) => return Err(domain("RETI flattening time must be at least 1")),
            ModelKind::Reti(k) if k > max_exposure => {
                return Err(Error::Estimation(format!(
                    "RETI flattening time {k} is not identifiable: exposure time {k} is never observed \
                     (maximum exposure {max_exposure})"
                )))
            }
            ModelKind::Reti(_) => {}
            ModelKind::Ncs(d) => basis = Some(SplineBasis::build(d, max_exposure)?),
        }
        Ok(Self {
            kind,
            max_exposure,
            basis,
        })
    }

    fn dim(&self) -> usize {
        match self.kind {
            ModelKind::It => 1,
            ModelKind::Eti => self.max_exposure,
            ModelKind::Reti(k) => k,
            ModelKind::Ncs(d) => d,
        }
    }

    /// Coefficients of the treatment parameters in the effect at exposure `s`.
    fn row(&self, s: usize) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.dim()];
        if s == 0 {
            return Ok(out);
        }
        match self.kind {
            ModelKind::It => out[0] = 1.0,
            ModelKind::Reti(k) => out[s.min(k) - 1] = 1.0,
            ModelKind::Eti | ModelKind::Ncs(_) if s > self.max_exposure => {
                return Err(domain(format!(
                    "exposure time {s} is beyond the largest observed exposure {}",
                    self.max_exposure
                )))
            }
            ModelKind::Eti => out[s - 1] = 1.0,
            ModelKind::Ncs(_) => {
                out = self
                    .basis
                    .as_ref()
                    .expect("spline models carry a basis")
                    .evaluate(s as f64)
            }
        }
        Ok(out)
    }
}

/// A fitted mixed model.
#[derive(Debug, Clone, PartialEq)]
pub struct FittedModel {
    pub spec: ModelSpec,
    pub design: StudyDesign,
    pub criterion: Criterion,
    /// Intercept followed by period effects `beta_2..beta_J`.
    pub beta_hat: Vec<f64>,
    /// Treatment parameters (see the module table).
    pub theta_hat: Vec<f64>,
    /// Model-based covariance of `theta_hat` at the estimated variance components.
    pub vcov_theta: DMatrix<f64>,
    pub varcomp: VarianceComponents,
    /// Maximized REML or ML log-likelihood, per `criterion`.
    pub log_likelihood: f64,
    pub converged: bool,
    pub n_iter: usize,
    treatment: TreatmentColumns,
}

impl FittedModel {
    pub fn num_theta(&self) -> usize {
        self.theta_hat.len()
    }

    /// Contrast row giving the point treatment effect at exposure `s` as a
    /// linear function of `theta_hat`. IT and RETI extrapolate flat; ETI and
    /// NCS reject exposures beyond the data.
    pub fn pte_row(&self, s: usize) -> Result<Vec<f64>> {
        self.treatment.row(s)
    }

    pub fn basis(&self) -> Option<&SplineBasis> {
        self.treatment.basis.as_ref()
    }

    /// Fitted population mean for sequence `q` at period `j`.
    pub fn fitted_mean(&self, q: usize, j: usize) -> Result<f64> {
        let s = self.design.exposure_time(q, j)?;
        let mut mean = self.beta_hat[0];
        if j > 1 {
            mean += self.beta_hat[j - 1];
        }
        let row = self.treatment.row(s)?;
        mean += row.iter().zip(&self.theta_hat).map(|(a, b)| a * b).sum::<f64>();
        Ok(mean)
    }
}

/// Sufficient statistics of one sequence: the mean vector of its clusters'
/// period means and the scatter of cluster means around it.
struct SequenceGroup {
    count: f64,
    mean: Vector,
    scatter: Mat,
    x: Mat,
    z: Mat,
}

struct Reduced {
    n_obs: f64,
    n_cells: f64,
    cell_size: f64,
    ssw: f64,
    groups: Vec<SequenceGroup>,
    p: usize,
    theta_offset: usize,
    re_dim: usize,
}

impl Reduced {
    fn new(data: &TrialDataset, treatment: &TreatmentColumns, random_treatment: bool) -> Result<Self> {
        let design = data.design();
        let q_count = design.num_sequences();
        let j_count = design.num_periods();
        let k = design.cluster_size() as f64;

        let mut cells: BTreeMap<usize, (usize, Vec<f64>)> = BTreeMap::new();
        for r in data.rows() {
            let entry = cells
                .entry(r.cluster)
                .or_insert_with(|| (r.sequence, vec![0.0; j_count]));
            entry.1[r.period - 1] += r.outcome;
        }
        for (_, sums) in cells.values_mut() {
            for v in sums.iter_mut() {
                *v /= k;
            }
        }
        let mut ssw = 0.0;
        for r in data.rows() {
            let m = cells[&r.cluster].1[r.period - 1];
            ssw += (r.outcome - m) * (r.outcome - m);
        }

        let theta_dim = treatment.dim();
        let p = j_count + theta_dim;
        let mut groups = Vec::with_capacity(q_count);
        for q in 1..=q_count {
            let members: Vec<&Vec<f64>> = cells
                .values()
                .filter(|(seq, _)| *seq == q)
                .map(|(_, m)| m)
                .collect();
            let count = members.len() as f64;
            let mut mean = Vector::zeros(j_count);
            for m in &members {
                mean += Vector::from_column_slice(m);
            }
            mean /= count;
            let mut scatter = Mat::zeros(j_count, j_count);
            for m in &members {
                let d = Vector::from_column_slice(m) - &mean;
                scatter += &d * d.transpose();
            }
            let mut x = Mat::zeros(j_count, p);
            let mut z = Mat::zeros(j_count, if random_treatment { 2 } else { 1 });
            for j in 1..=j_count {
                let s = design.exposure_time(q, j)?;
                x[(j - 1, 0)] = 1.0;
                if j > 1 {
                    x[(j - 1, j - 1)] = 1.0;
                }
                for (c, v) in treatment.row(s)?.into_iter().enumerate() {
                    x[(j - 1, j_count + c)] = v;
                }
                z[(j - 1, 0)] = 1.0;
                if random_treatment && s > 0 {
                    z[(j - 1, 1)] = 1.0;
                }
            }
            groups.push(SequenceGroup {
                count,
                mean,
                scatter,
                x,
                z,
            });
        }
        let n_cells = (design.num_clusters() * j_count) as f64;
        Ok(Self {
            n_obs: data.rows().len() as f64,
            n_cells,
            cell_size: k,
            ssw,
            groups,
            p,
            theta_offset: j_count,
            re_dim: if random_treatment { 2 } else { 1 },
        })
    }

    /// GLS quantities with cluster-mean covariance `sigma^2 (I/K + Z Gamma Z')`.
    fn gls(&self, gamma: &Mat) -> Result<Gls> {
        let j_count = self.groups[0].mean.len();
        let mut log_det_h = 0.0;
        let mut a = Mat::zeros(self.p, self.p);
        let mut b = Vector::zeros(self.p);
        let mut within = 0.0;
        let mut inverses = Vec::with_capacity(self.groups.len());
        for g in &self.groups {
            let mut h = &g.z * gamma * g.z.transpose();
            for j in 0..j_count {
                h[(j, j)] += 1.0 / self.cell_size;
            }
            let chol = cholesky(h, "cluster covariance")?;
            log_det_h += g.count * chol_logdet(&chol);
            let h_inv = chol.inverse();
            let hx = &h_inv * &g.x;
            a += g.count * g.x.transpose() * &hx;
            b += g.count * hx.transpose() * &g.mean;
            within += h_inv.component_mul(&g.scatter).sum();
            inverses.push(h_inv);
        }
        symmetrize(&mut a);
        let chol_a = a.clone().cholesky().ok_or_else(|| {
            Error::Estimation(
                "fixed effects are not identifiable from this design (singular information matrix)"
                    .to_string(),
            )
        })?;
        let log_det_a = chol_logdet(&chol_a);
        let beta = chol_a.solve(&b);
        let mut between = 0.0;
        for (g, h_inv) in self.groups.iter().zip(&inverses) {
            let r = &g.mean - &g.x * &beta;
            between += g.count * (r.transpose() * h_inv * &r)[(0, 0)];
        }
        Ok(Gls {
            log_det_h,
            log_det_a,
            a_inv: chol_a.inverse(),
            beta,
            quad: within + between.max(0.0) + self.ssw,
        })
    }

    fn dof(&self, criterion: Criterion) -> f64 {
        match criterion {
            Criterion::Reml => self.n_obs - self.p as f64,
            Criterion::Ml => self.n_obs,
        }
    }

    /// Log-likelihood at `sigma2` given the GLS quantities for `Gamma = G / sigma2`.
    fn log_lik(&self, gls: &Gls, sigma2: f64, criterion: Criterion) -> f64 {
        let dof = self.dof(criterion);
        let mut v = dof * LOG_2PI
            + self.n_cells * libm::log(self.cell_size)
            + gls.log_det_h
            + dof * libm::log(sigma2)
            + gls.quad / sigma2;
        if criterion == Criterion::Reml {
            v += gls.log_det_a;
        }
        -0.5 * v
    }

    fn profiled_sigma2(&self, gls: &Gls, criterion: Criterion) -> f64 {
        gls.quad / self.dof(criterion)
    }

    /// Log-likelihood with `sigma^2` profiled out.
    fn profile(&self, gamma: &Mat, criterion: Criterion) -> Result<f64> {
        let gls = self.gls(gamma)?;
        let s2 = self.profiled_sigma2(&gls, criterion);
        if !(s2 > 0.0) {
            return Err(Error::Estimation("residual variance estimate is zero".to_string()));
        }
        Ok(self.log_lik(&gls, s2, criterion))
    }
}

struct Gls {
    log_det_h: f64,
    log_det_a: f64,
    a_inv: Mat,
    beta: Vector,
    quad: f64,
}

fn gamma_ri(g: f64) -> Mat {
    Mat::from_element(1, 1, g)
}

/// Relative covariance of (intercept, treatment) random effects from the
/// unconstrained simplex coordinates.
fn gamma_rte(x: &[f64]) -> (Mat, f64, f64, f64) {
    let a = x[0].abs();
    let b = x[1].abs();
    let rho = RHO_BOUND * libm::tanh(x[2]);
    let g = Mat::from_row_slice(2, 2, &[a * a, rho * a * b, rho * a * b, b * b]);
    (g, a * a, b * b, rho)
}

fn validate_varcomp(vc: &VarianceComponents, spec: &ModelSpec) -> Result<()> {
    if !(vc.sigma2 > 0.0) || !vc.sigma2.is_finite() {
        return Err(domain(format!("sigma2 must be positive, got {}", vc.sigma2)));
    }
    if !(vc.tau2 >= 0.0) || !(vc.nu2 >= 0.0) {
        return Err(domain("tau2 and nu2 must be non-negative"));
    }
    if !(-1.0..=1.0).contains(&vc.rho_re) {
        return Err(domain(format!("rho_re must lie in [-1, 1], got {}", vc.rho_re)));
    }
    if !spec.random_treatment && (vc.nu2 != 0.0 || vc.rho_re != 0.0) {
        return Err(domain(
            "nu2 and rho_re must be zero for a model without random treatment effects",
        ));
    }
    Ok(())
}

fn relative_gamma(vc: &VarianceComponents, spec: &ModelSpec) -> Mat {
    let t = vc.tau2 / vc.sigma2;
    if spec.random_treatment {
        let n = vc.nu2 / vc.sigma2;
        let c = vc.rho_re * libm::sqrt(t * n);
        Mat::from_row_slice(2, 2, &[t, c, c, n])
    } else {
        gamma_ri(t)
    }
}

/// Restricted log-likelihood of the model at fixed variance components.
pub fn reml_criterion(data: &TrialDataset, spec: &ModelSpec, varcomp: &VarianceComponents) -> Result<f64> {
    log_likelihood(data, spec, varcomp, Criterion::Reml)
}

/// REML or ML log-likelihood at fixed variance components.
pub fn log_likelihood(
    data: &TrialDataset,
    spec: &ModelSpec,
    varcomp: &VarianceComponents,
    criterion: Criterion,
) -> Result<f64> {
    validate_varcomp(varcomp, spec)?;
    let treatment = TreatmentColumns::new(spec.kind, data.design())?;
    let reduced = Reduced::new(data, &treatment, spec.random_treatment)?;
    let gls = reduced.gls(&relative_gamma(varcomp, spec))?;
    Ok(reduced.log_lik(&gls, varcomp.sigma2, criterion))
}

/// GLS fit with variance components held fixed.
pub fn fit_at(data: &TrialDataset, spec: &ModelSpec, varcomp: &VarianceComponents) -> Result<FittedModel> {
    validate_varcomp(varcomp, spec)?;
    let treatment = TreatmentColumns::new(spec.kind, data.design())?;
    let reduced = Reduced::new(data, &treatment, spec.random_treatment)?;
    let gls = reduced.gls(&relative_gamma(varcomp, spec))?;
    let ll = reduced.log_lik(&gls, varcomp.sigma2, Criterion::Reml);
    Ok(assemble(
        data, spec, treatment, &reduced, gls, *varcomp, Criterion::Reml, ll, true, 0,
    ))
}

/// Fits by REML.
pub fn fit(data: &TrialDataset, spec: &ModelSpec) -> Result<FittedModel> {
    fit_with(data, spec, Criterion::Reml)
}

/// Fits with the chosen likelihood for the variance components.
pub fn fit_with(data: &TrialDataset, spec: &ModelSpec, criterion: Criterion) -> Result<FittedModel> {
    let treatment = TreatmentColumns::new(spec.kind, data.design())?;
    let reduced = Reduced::new(data, &treatment, spec.random_treatment)?;

    // Random intercept: search t = gamma / (1 + gamma) in [0, 1). With random
    // treatment effects this supplies the starting point (nu = 0).
    let gamma_of = |t: f64| t / (1.0 - t);
    let embed = |g: f64| -> Mat {
        let mut m = Mat::zeros(reduced.re_dim, reduced.re_dim);
        m[(0, 0)] = g;
        m
    };
    let objective = |t: f64| -> f64 {
        reduced
            .profile(&embed(gamma_of(t)), criterion)
            .map(|v| -v)
            .unwrap_or(f64::INFINITY)
    };
    let grid: Vec<f64> = (0..20).map(|i| i as f64 / 20.0).chain([0.975, 0.999]).collect();
    let values: Vec<f64> = grid.iter().map(|&t| objective(t)).collect();
    let (best_idx, _) = values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("grid is nonempty");
    if !values[best_idx].is_finite() {
        // Propagate the underlying error from the best-known point.
        reduced.profile(&embed(0.0), criterion)?;
        return Err(Error::Estimation("likelihood is not finite anywhere on the search grid".to_string()));
    }
    let lo = grid[best_idx.saturating_sub(1)];
    let hi = grid[(best_idx + 1).min(grid.len() - 1)];
    let golden = golden_section(objective, lo, hi, REL_TOL, MAX_ITER);
    let (mut t_hat, mut f_hat) = (golden.x[0], golden.f);
    if values[best_idx] < f_hat {
        t_hat = grid[best_idx];
        f_hat = values[best_idx];
    }
    let mut n_iter = grid.len() + golden.iterations;
    if !golden.converged {
        let gls = reduced.gls(&embed(gamma_of(t_hat)))?;
        let s2 = reduced.profiled_sigma2(&gls, criterion);
        return Err(Error::NonConvergence {
            last: VarianceComponents::random_intercept(gamma_of(t_hat) * s2, s2),
            log_likelihood: -f_hat,
            iterations: n_iter,
        });
    }

    if !spec.random_treatment {
        let gamma = gamma_ri(gamma_of(t_hat));
        let gls = reduced.gls(&gamma)?;
        let s2 = reduced.profiled_sigma2(&gls, criterion);
        let ll = reduced.log_lik(&gls, s2, criterion);
        let vc = VarianceComponents::random_intercept(gamma_of(t_hat) * s2, s2);
        return Ok(assemble(
            data, spec, treatment, &reduced, gls, vc, criterion, ll, true, n_iter,
        ));
    }

    // Random treatment effects: Nelder-Mead on (|a|, |b|, atanh(rho / 0.99))
    // where a, b are the intercept and treatment SDs relative to sigma.
    let rte_objective = |x: &[f64]| -> f64 {
        reduced
            .profile(&gamma_rte(x).0, criterion)
            .map(|v| -v)
            .unwrap_or(f64::INFINITY)
    };
    let a0 = libm::sqrt(gamma_of(t_hat)).max(0.05);
    let x0 = [a0, 0.5 * a0 + 0.1, 0.0];
    let steps = [0.5 * a0, 0.5 * x0[1], 0.5];
    let first = nelder_mead(rte_objective, &x0, &steps, REL_TOL, MAX_ITER);
    n_iter += first.iterations;
    let restart_steps: Vec<f64> = first.x.iter().map(|v| 0.1 * v.abs().max(0.1)).collect();
    let second = nelder_mead(rte_objective, &first.x, &restart_steps, REL_TOL, MAX_ITER);
    n_iter += second.iterations;
    let best = if second.f <= first.f { second } else { first };
    let (gamma, t2, n2, rho) = gamma_rte(&best.x);
    let gls = reduced.gls(&gamma)?;
    let s2 = reduced.profiled_sigma2(&gls, criterion);
    let vc = VarianceComponents {
        tau2: t2 * s2,
        sigma2: s2,
        nu2: n2 * s2,
        rho_re: rho,
    };
    if !best.converged {
        return Err(Error::NonConvergence {
            last: vc,
            log_likelihood: -best.f,
            iterations: n_iter,
        });
    }
    let ll = reduced.log_lik(&gls, s2, criterion);
    Ok(assemble(
        data, spec, treatment, &reduced, gls, vc, criterion, ll, true, n_iter,
    ))
}

#[allow(clippy::too_many_arguments)]
fn assemble(
    data: &TrialDataset,
    spec: &ModelSpec,
    treatment: TreatmentColumns,
    reduced: &Reduced,
    gls: Gls,
    varcomp: VarianceComponents,
    criterion: Criterion,
    log_likelihood: f64,
    converged: bool,
    n_iter: usize,
) -> FittedModel {
    let off = reduced.theta_offset;
    let dim = reduced.p - off;
    let mut vcov = gls.a_inv.view((off, off), (dim, dim)) * varcomp.sigma2;
    symmetrize(&mut vcov);
    FittedModel {
        spec: *spec,
        design: *data.design(),
        criterion,
        beta_hat: gls.beta.rows(0, off).iter().copied().collect(),
        theta_hat: gls.beta.rows(off, dim).iter().copied().collect(),
        vcov_theta: vcov,
        varcomp,
        log_likelihood,
        converged,
        n_iter,
        treatment,
    }
}

/// Likelihood ratio test of nested fixed-effect structures.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LrtResult {
    pub statistic: f64,
    pub df: usize,
    pub p: f64,
    pub reduced_log_likelihood: f64,
    pub full_log_likelihood: f64,
}

fn num_params(fit: &FittedModel) -> usize {
    let varcomp = if fit.spec.random_treatment { 4 } else { 2 };
    fit.beta_hat.len() + fit.theta_hat.len() + varcomp
}

/// Likelihood ratio test of `reduced` against `full`, both fitted by maximum
/// likelihood. Tiny negative statistics from optimizer tolerance are clamped to 0.
pub fn lrt(data: &TrialDataset, reduced: &ModelSpec, full: &ModelSpec) -> Result<LrtResult> {
    let r = fit_with(data, reduced, Criterion::Ml)?;
    let f = fit_with(data, full, Criterion::Ml)?;
    let (pr, pf) = (num_params(&r), num_params(&f));
    if pf <= pr {
        return Err(domain(format!(
            "model '{}' has no more parameters than '{}'",
            full.label(),
            reduced.label()
        )));
    }
    let statistic = (2.0 * (f.log_likelihood - r.log_likelihood)).max(0.0);
    let df = pf - pr;
    Ok(LrtResult {
        statistic,
        df,
        p: chi_square_sf(statistic, df),
        reduced_log_likelihood: r.log_likelihood,
        full_log_likelihood: f.log_likelihood,
    })
}

/// Tests whether the immediate-treatment model is an adequate simplification
/// of the exposure-time-indicator model.
pub fn lrt_it_vs_eti(data: &TrialDataset) -> Result<LrtResult> {
    lrt(data, &ModelSpec::new(ModelKind::It), &ModelSpec::new(ModelKind::Eti))
}
