//! Monotone effect curve model.
//!
//! The effect at exposure time `s` is `delta * (alpha_1 + ... + alpha_s)` with
//! `alpha` on the simplex, so every curve is monotone and reaches `delta` at
//! the largest exposure time. The hierarchical model is
//!
//! ```text
//! y_ijk = Gamma_j + delta * A(s_ij) * x_ij + c_i + e_ijk
//! c_i ~ N(0, tau^2), e_ijk ~ N(0, sigma^2)
//! delta ~ N(0, 100^2), omega ~ U(0.01, 100)
//! alpha ~ Dirichlet(c_1 omega, ..., c_S omega)
//! sigma, tau ~ half-N(0, 10^2)
//! ```
//!
//! Period effects `Gamma_j` carry a flat prior and are integrated out
//! analytically together with the cluster intercepts, leaving a restricted
//! likelihood in `(delta, alpha, sigma, tau)`.
//!
//! Sampling is random-walk Metropolis within Gibbs over three blocks on an
//! unconstrained scale: `(delta, alr(alpha))`, `logit(omega)` and
//! `(log sigma, log tau)`. Each block's proposal covariance and scale adapt
//! during warmup and are frozen afterwards.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::datagen::{substream_seed, TrialDataset};
use crate::error::{domain, Error, Result};
use crate::estimands::{contrast_from_rows, z_and_p, EstimandEstimate, EstimandKind, RiemannMethod};
use crate::linalg::Mat;
use crate::models::{fit, ModelKind, ModelSpec};

const LOG_2PI: f64 = 1.837_877_066_409_345_5;
const RHAT_WARN: f64 = 1.1;
const ADAPT_WINDOW: usize = 25;

#[derive(Debug, Clone, PartialEq)]
pub struct MecPrior {
    /// Dirichlet concentration multipliers `c_1..c_S`.
    pub c: Vec<f64>,
    pub delta_prior_sd: f64,
    pub omega_bounds: (f64, f64),
    /// Scale of the half-normal priors on `sigma` and `tau`.
    pub scale_prior_sd: f64,
}

impl MecPrior {
    pub fn new(c: Vec<f64>) -> Result<Self> {
        if c.len() < 2 {
            return Err(domain("the Dirichlet prior needs at least 2 components"));
        }
        if c.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
            return Err(domain("Dirichlet multipliers must be positive"));
        }
        Ok(Self {
            c,
            delta_prior_sd: 100.0,
            omega_bounds: (0.01, 100.0),
            scale_prior_sd: 10.0,
        })
    }

    /// `c = (1, ..., 1)`.
    pub fn symmetric(len: usize) -> Result<Self> {
        Self::new(vec![1.0; len])
    }

    /// `c = (5, 5, 5, 1, ..., 1)`: most of the effect expected in the first
    /// three exposure periods.
    pub fn informative(len: usize) -> Result<Self> {
        Self::new((1..=len).map(|t| if t <= 3 { 5.0 } else { 1.0 }).collect())
    }

    /// Comma-separated multipliers, e.g. `5,5,5,1,1,1`.
    pub fn parse(s: &str) -> Result<Self> {
        let c = s
            .split(',')
            .map(|p| {
                p.trim()
                    .parse::<f64>()
                    .map_err(|_| domain(format!("prior '{s}': '{p}' is not a number")))
            })
            .collect::<Result<Vec<f64>>>()?;
        Self::new(c)
    }

    pub fn label(&self) -> String {
        if self.c.iter().all(|&v| v == self.c[0]) {
            "symmetric".to_string()
        } else {
            "informative".to_string()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MecParams {
    pub delta: f64,
    pub omega: f64,
    pub alpha: Vec<f64>,
    pub sigma: f64,
    pub tau: f64,
}

impl MecParams {
    /// Effect at exposure times `1..=S`.
    pub fn curve(&self) -> Vec<f64> {
        let mut acc = 0.0;
        self.alpha
            .iter()
            .map(|a| {
                acc += a;
                self.delta * acc
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MecConfig {
    pub n_chains: usize,
    pub n_warmup: usize,
    pub n_samples: usize,
    pub seed: u64,
}

impl Default for MecConfig {
    fn default() -> Self {
        Self {
            n_chains: 4,
            n_warmup: 2500,
            n_samples: 2500,
            seed: 0,
        }
    }
}

/// Acceptance rates of the three blocks after warmup.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BlockAcceptance {
    pub effect: f64,
    pub omega: f64,
    pub scales: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainOutput {
    pub chain: usize,
    pub draws: Vec<MecParams>,
    pub acceptance: BlockAcceptance,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rhat {
    pub delta: f64,
    pub omega: f64,
    pub sigma: f64,
    pub tau: f64,
    pub alpha: Vec<f64>,
}

/// Post-warmup draws from all chains, chain after chain.
#[derive(Debug, Clone, PartialEq)]
pub struct MecDraws {
    pub draws: Vec<MecParams>,
    pub n_chains: usize,
    pub n_warmup: usize,
    pub n_samples: usize,
    pub acceptance: Vec<BlockAcceptance>,
    pub rhat: Rhat,
    pub warnings: Vec<String>,
}

impl MecDraws {
    /// Wraps externally produced draws (one chain per slice).
    pub fn from_chains(chains: Vec<ChainOutput>, n_warmup: usize) -> Result<Self> {
        if chains.is_empty() || chains.iter().any(|c| c.draws.is_empty()) {
            return Err(domain("no posterior draws"));
        }
        let n_samples = chains[0].draws.len();
        if chains.iter().any(|c| c.draws.len() != n_samples) {
            return Err(domain("chains have different lengths"));
        }
        let t = chains[0].draws[0].alpha.len();
        let series = |f: &dyn Fn(&MecParams) -> f64| -> Vec<Vec<f64>> {
            chains
                .iter()
                .map(|c| c.draws.iter().map(f).collect())
                .collect()
        };
        let rhat = Rhat {
            delta: split_rhat(&series(&|p| p.delta)),
            omega: split_rhat(&series(&|p| p.omega)),
            sigma: split_rhat(&series(&|p| p.sigma)),
            tau: split_rhat(&series(&|p| p.tau)),
            alpha: (0..t).map(|i| split_rhat(&series(&|p| p.alpha[i]))).collect(),
        };
        let mut warnings = Vec::new();
        if rhat.delta > RHAT_WARN {
            warnings.push(format!(
                "split R-hat for delta is {:.3} (> {RHAT_WARN}); chains may not have converged",
                rhat.delta
            ));
        }
        let mut chains = chains;
        chains.sort_by_key(|c| c.chain);
        let acceptance = chains.iter().map(|c| c.acceptance).collect();
        let n_chains = chains.len();
        let draws = chains.into_iter().flat_map(|c| c.draws).collect();
        Ok(Self {
            draws,
            n_chains,
            n_warmup,
            n_samples,
            acceptance,
            rhat,
            warnings,
        })
    }

    pub fn mean_acceptance(&self) -> BlockAcceptance {
        let n = self.acceptance.len() as f64;
        let mut out = BlockAcceptance::default();
        for a in &self.acceptance {
            out.effect += a.effect / n;
            out.omega += a.omega / n;
            out.scales += a.scales / n;
        }
        out
    }

    pub fn max_exposure(&self) -> usize {
        self.draws[0].alpha.len()
    }

    /// `mean(delta) * cumsum(mean(alpha))`.
    pub fn posterior_mean_curve(&self) -> Vec<f64> {
        let n = self.draws.len() as f64;
        let t = self.max_exposure();
        let mut delta = 0.0;
        let mut alpha = vec![0.0; t];
        for d in &self.draws {
            delta += d.delta / n;
            for (a, x) in alpha.iter_mut().zip(&d.alpha) {
                *a += x / n;
            }
        }
        MecParams {
            delta,
            omega: 0.0,
            alpha,
            sigma: 0.0,
            tau: 0.0,
        }
        .curve()
    }
}

/// Split-chain potential scale reduction factor.
pub fn split_rhat(chains: &[Vec<f64>]) -> f64 {
    let n = chains.iter().map(|c| c.len()).min().unwrap_or(0) / 2;
    if n < 2 {
        return f64::NAN;
    }
    let halves: Vec<&[f64]> = chains
        .iter()
        .flat_map(|c| [&c[..n], &c[n..2 * n]])
        .collect();
    let m = halves.len() as f64;
    let nf = n as f64;
    let means: Vec<f64> = halves.iter().map(|h| h.iter().sum::<f64>() / nf).collect();
    let grand = means.iter().sum::<f64>() / m;
    let b = nf / (m - 1.0) * means.iter().map(|x| (x - grand) * (x - grand)).sum::<f64>();
    let w = halves
        .iter()
        .zip(&means)
        .map(|(h, mu)| h.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / (nf - 1.0))
        .sum::<f64>()
        / m;
    if w == 0.0 {
        return if b == 0.0 { 1.0 } else { f64::INFINITY };
    }
    let var_plus = (nf - 1.0) / nf * w + b / nf;
    libm::sqrt(var_plus / w)
}

/// Sufficient statistics for the restricted likelihood.
///
/// With cluster-period means `ybar_i`, the cluster-mean covariance is
/// `sigma^2 H` with `H = I/K + gamma 11'` and `gamma = tau^2 / sigma^2`, and
/// `H^-1 = K (I - c 11')` with `c = K gamma / (1 + J K gamma)`.
#[derive(Debug, Clone)]
struct Likelihood {
    j: usize,
    k: f64,
    n_obs: f64,
    n_clusters: f64,
    n_cells: f64,
    per_sequence: f64,
    ssw: f64,
    within_sq: f64,
    within_sum: f64,
    /// Sequence mean minus grand mean, per sequence.
    dev: Vec<Vec<f64>>,
    /// Exposure time at each period, per sequence.
    exposure: Vec<Vec<usize>>,
    max_exposure: usize,
}

impl Likelihood {
    fn new(data: &TrialDataset) -> Result<Self> {
        let design = data.design();
        let j = design.num_periods();
        let k = design.cluster_size() as f64;
        if !data.rows().iter().any(|r| r.treated == 1) {
            return Err(Error::Estimation("no treated observations".to_string()));
        }
        let mut cells: BTreeMap<usize, (usize, Vec<f64>)> = BTreeMap::new();
        for r in data.rows() {
            cells
                .entry(r.cluster)
                .or_insert_with(|| (r.sequence, vec![0.0; j]))
                .1[r.period - 1] += r.outcome / k;
        }
        let mut ssw = 0.0;
        for r in data.rows() {
            let d = r.outcome - cells[&r.cluster].1[r.period - 1];
            ssw += d * d;
        }
        let q_count = design.num_sequences();
        let mut seq_means = vec![vec![0.0; j]; q_count];
        let per_sequence = design.clusters_per_sequence() as f64;
        for (q, m) in cells.values() {
            for (a, b) in seq_means[q - 1].iter_mut().zip(m) {
                *a += b / per_sequence;
            }
        }
        let mut within_sq = 0.0;
        let mut within_sum = 0.0;
        for (q, m) in cells.values() {
            let mut s = 0.0;
            for (a, b) in m.iter().zip(&seq_means[q - 1]) {
                within_sq += (a - b) * (a - b);
                s += a - b;
            }
            within_sum += s * s;
        }
        let grand: Vec<f64> = (0..j)
            .map(|p| seq_means.iter().map(|m| m[p]).sum::<f64>() / q_count as f64)
            .collect();
        let dev = seq_means
            .iter()
            .map(|m| m.iter().zip(&grand).map(|(a, g)| a - g).collect())
            .collect();
        let exposure = (1..=q_count)
            .map(|q| (1..=j).map(|p| design.exposure_time(q, p)).collect::<Result<Vec<_>>>())
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            j,
            k,
            n_obs: data.rows().len() as f64,
            n_clusters: design.num_clusters() as f64,
            n_cells: (design.num_clusters() * j) as f64,
            per_sequence,
            ssw,
            within_sq,
            within_sum,
            dev,
            exposure,
            max_exposure: design.max_exposure(),
        })
    }

    fn log_lik(&self, delta: f64, alpha: &[f64], sigma: f64, tau: f64) -> f64 {
        let jf = self.j as f64;
        let sigma2 = sigma * sigma;
        let gamma = tau * tau / sigma2;
        let c = self.k * gamma / (1.0 + jf * self.k * gamma);
        let log_det_h = -jf * libm::log(self.k) + libm::log1p(jf * self.k * gamma);

        let mut cum = Vec::with_capacity(alpha.len() + 1);
        cum.push(0.0);
        let mut acc = 0.0;
        for a in alpha {
            acc += a;
            cum.push(delta * acc);
        }
        let q_count = self.dev.len() as f64;
        let mut offset_mean = vec![0.0; self.j];
        for exp in &self.exposure {
            for (m, &s) in offset_mean.iter_mut().zip(exp) {
                *m += cum[s] / q_count;
            }
        }
        let mut between = 0.0;
        for (dev, exp) in self.dev.iter().zip(&self.exposure) {
            let mut sq = 0.0;
            let mut sum = 0.0;
            for p in 0..self.j {
                let v = dev[p] - (cum[exp[p]] - offset_mean[p]);
                sq += v * v;
                sum += v;
            }
            between += sq - c * sum * sum;
        }
        let quad = self.k * (self.within_sq - c * self.within_sum)
            + self.k * self.per_sequence * between
            + self.ssw;
        let dof = self.n_obs - jf;
        -0.5 * (dof * LOG_2PI
            + self.n_cells * libm::log(self.k)
            + (self.n_clusters - 1.0) * log_det_h
            + jf * libm::log(self.n_clusters)
            + dof * libm::log(sigma2)
            + quad / sigma2)
    }
}

fn log_normal(x: f64, sd: f64) -> f64 {
    -0.5 * (x / sd) * (x / sd) - libm::log(sd) - 0.5 * LOG_2PI
}

fn log_prior(p: &MecParams, prior: &MecPrior) -> f64 {
    let (lo, hi) = prior.omega_bounds;
    if !(p.omega >= lo && p.omega <= hi) || !(p.sigma > 0.0) || !(p.tau >= 0.0) {
        return f64::NEG_INFINITY;
    }
    let sum: f64 = p.alpha.iter().sum();
    if p.alpha.iter().any(|&a| !(a > 0.0)) || (sum - 1.0).abs() > 1e-9 {
        return f64::NEG_INFINITY;
    }
    let mut lp = log_normal(p.delta, prior.delta_prior_sd) - libm::log(hi - lo);
    let total: f64 = prior.c.iter().sum::<f64>() * p.omega;
    lp += libm::lgamma(total);
    for (&a, &c) in p.alpha.iter().zip(&prior.c) {
        let conc = c * p.omega;
        lp += -libm::lgamma(conc) + (conc - 1.0) * libm::log(a);
    }
    let ln2 = core::f64::consts::LN_2;
    lp += ln2 + log_normal(p.sigma, prior.scale_prior_sd);
    lp += ln2 + log_normal(p.tau, prior.scale_prior_sd);
    lp
}

fn check_dims(p: &MecParams, prior: &MecPrior, max_exposure: usize) -> Result<()> {
    if prior.c.len() != max_exposure || p.alpha.len() != max_exposure {
        return Err(domain(format!(
            "the design has {max_exposure} exposure times but the prior has {} and alpha has {} components",
            prior.c.len(),
            p.alpha.len()
        )));
    }
    Ok(())
}

/// Restricted log-likelihood with period effects and cluster intercepts
/// integrated out. Returns negative infinity outside the support.
pub fn log_likelihood(p: &MecParams, data: &TrialDataset) -> Result<f64> {
    let lik = Likelihood::new(data)?;
    if p.alpha.len() != lik.max_exposure {
        return Err(domain("alpha length does not match the design"));
    }
    if !(p.sigma > 0.0) || !(p.tau >= 0.0) {
        return Ok(f64::NEG_INFINITY);
    }
    Ok(lik.log_lik(p.delta, &p.alpha, p.sigma, p.tau))
}

/// Unnormalized log posterior. Returns negative infinity outside the support.
pub fn log_posterior(p: &MecParams, data: &TrialDataset, prior: &MecPrior) -> Result<f64> {
    check_dims(p, prior, data.design().max_exposure())?;
    let lp = log_prior(p, prior);
    if lp == f64::NEG_INFINITY {
        return Ok(lp);
    }
    Ok(lp + log_likelihood(p, data)?)
}

/// Unconstrained coordinates:
/// `[delta, y_1..y_{S-1}, logit(omega), log sigma, log tau]`, where
/// `y_t = log(alpha_t / alpha_S)`.
fn to_params(theta: &[f64], prior: &MecPrior) -> (MecParams, f64) {
    let t = prior.c.len();
    let y = &theta[1..t];
    let m = y.iter().copied().fold(0.0_f64, f64::max);
    let mut alpha: Vec<f64> = y.iter().map(|v| libm::exp(v - m)).collect();
    alpha.push(libm::exp(-m));
    let sum: f64 = alpha.iter().sum();
    for a in alpha.iter_mut() {
        *a /= sum;
    }
    let u = theta[t];
    let s = 1.0 / (1.0 + libm::exp(-u));
    let (lo, hi) = prior.omega_bounds;
    let omega = (lo + (hi - lo) * s).clamp(lo, hi);
    let log_sigma = theta[t + 1];
    let log_tau = theta[t + 2];
    let log_jac = alpha.iter().map(|a| libm::log(*a)).sum::<f64>()
        + libm::log(hi - lo)
        + libm::log(s)
        + libm::log1p(-s)
        + log_sigma
        + log_tau;
    (
        MecParams {
            delta: theta[0],
            omega,
            alpha,
            sigma: libm::exp(log_sigma),
            tau: libm::exp(log_tau),
        },
        log_jac,
    )
}

fn from_params(p: &MecParams, prior: &MecPrior) -> Vec<f64> {
    let t = p.alpha.len();
    let mut theta = Vec::with_capacity(t + 3);
    theta.push(p.delta);
    let last = libm::log(p.alpha[t - 1]);
    for a in &p.alpha[..t - 1] {
        theta.push(libm::log(*a) - last);
    }
    let (lo, hi) = prior.omega_bounds;
    let s = ((p.omega - lo) / (hi - lo)).clamp(1e-9, 1.0 - 1e-9);
    theta.push(libm::log(s / (1.0 - s)));
    theta.push(libm::log(p.sigma));
    theta.push(libm::log(p.tau.max(1e-6)));
    theta
}

struct Block {
    start: usize,
    len: usize,
    chol: Mat,
    log_scale: f64,
}

impl Block {
    fn new(start: usize, sds: &[f64]) -> Self {
        let len = sds.len();
        let mut chol = Mat::zeros(len, len);
        for (i, s) in sds.iter().enumerate() {
            chol[(i, i)] = *s;
        }
        Self {
            start,
            len,
            chol,
            log_scale: libm::log(2.38 / libm::sqrt(len as f64)),
        }
    }

    fn set_covariance(&mut self, history: &[Vec<f64>]) {
        let n = history.len() as f64;
        let d = self.len;
        let mut mean = vec![0.0; d];
        for h in history {
            for i in 0..d {
                mean[i] += h[i] / n;
            }
        }
        let mut cov = Mat::zeros(d, d);
        for h in history {
            for a in 0..d {
                for b in 0..d {
                    cov[(a, b)] += (h[a] - mean[a]) * (h[b] - mean[b]) / (n - 1.0);
                }
            }
        }
        let ridge = 1e-10 + 1e-6 * (0..d).map(|i| cov[(i, i)]).sum::<f64>() / d as f64;
        for i in 0..d {
            cov[(i, i)] += ridge;
        }
        if let Some(c) = cov.cholesky() {
            self.chol = c.l();
            // The empirical covariance already matches the target spread;
            // restart the scale from the optimal-scaling default.
            self.log_scale = libm::log(2.38 / libm::sqrt(d as f64));
        }
    }
}

/// Posterior sampler for one dataset and prior; chains can be run
/// independently and combined with [`MecDraws::from_chains`].
pub struct MecSampler {
    lik: Likelihood,
    prior: MecPrior,
    config: MecConfig,
    init: MecParams,
    init_sds: Vec<f64>,
}

impl MecSampler {
    pub fn new(data: &TrialDataset, prior: &MecPrior, config: &MecConfig) -> Result<Self> {
        let lik = Likelihood::new(data)?;
        let t = lik.max_exposure;
        if prior.c.len() != t {
            return Err(domain(format!(
                "the design has {t} exposure times but the prior has {} components",
                prior.c.len()
            )));
        }
        if config.n_chains == 0 || config.n_samples < 4 {
            return Err(domain("MCMC needs at least one chain and four samples per chain"));
        }

        // Start from the exposure-time-indicator fit: delta at the largest
        // exposure, alpha from its increments clipped to be positive.
        let (init, delta_sd) = match fit(data, &ModelSpec::new(ModelKind::Eti)) {
            Ok(f) => {
                let mut delta = f.theta_hat[t - 1];
                if delta.abs() < 1e-8 {
                    delta = 1e-3;
                }
                let mut prev = 0.0;
                let mut alpha: Vec<f64> = f
                    .theta_hat
                    .iter()
                    .map(|&v| {
                        let inc = (v - prev) / delta;
                        prev = v;
                        inc.max(1e-3)
                    })
                    .collect();
                let sum: f64 = alpha.iter().sum();
                alpha.iter_mut().for_each(|a| *a /= sum);
                let sd = libm::sqrt(f.vcov_theta[(t - 1, t - 1)]).max(1e-12);
                (
                    MecParams {
                        delta,
                        omega: 1.0,
                        alpha,
                        sigma: libm::sqrt(f.varcomp.sigma2),
                        tau: libm::sqrt(f.varcomp.tau2).max(1e-3 * libm::sqrt(f.varcomp.sigma2)),
                    },
                    sd,
                )
            }
            Err(_) => (
                MecParams {
                    delta: 0.1,
                    omega: 1.0,
                    alpha: vec![1.0 / t as f64; t],
                    sigma: 1.0,
                    tau: 0.1,
                },
                0.1,
            ),
        };
        let mut init_sds = vec![delta_sd];
        init_sds.extend(core::iter::repeat_n(0.3, t - 1));
        init_sds.extend([1.0, 0.05, 0.3]);
        Ok(Self {
            lik,
            prior: prior.clone(),
            config: *config,
            init,
            init_sds,
        })
    }

    pub fn config(&self) -> &MecConfig {
        &self.config
    }

    fn log_target(&self, theta: &[f64]) -> f64 {
        let (p, log_jac) = to_params(theta, &self.prior);
        let lp = log_prior(&p, &self.prior);
        if !lp.is_finite() || !log_jac.is_finite() {
            return f64::NEG_INFINITY;
        }
        let v = lp + log_jac + self.lik.log_lik(p.delta, &p.alpha, p.sigma, p.tau);
        if v.is_nan() {
            f64::NEG_INFINITY
        } else {
            v
        }
    }

    /// Runs chain `chain` with its own substream of the configured seed.
    pub fn run_chain(&self, chain: usize) -> ChainOutput {
        let mut rng = ChaCha8Rng::seed_from_u64(substream_seed(self.config.seed, chain as u64));
        let t = self.prior.c.len();
        let base = from_params(&self.init, &self.prior);

        let mut theta = base.clone();
        let mut current = f64::NEG_INFINITY;
        for _ in 0..100 {
            theta = base
                .iter()
                .zip(&self.init_sds)
                .map(|(b, sd)| {
                    let z: f64 = rng.sample(StandardNormal);
                    b + 0.5 * sd * z
                })
                .collect();
            current = self.log_target(&theta);
            if current.is_finite() {
                break;
            }
        }
        if !current.is_finite() {
            theta = base;
            current = self.log_target(&theta);
        }

        let mut blocks = [
            Block::new(0, &self.init_sds[..t]),
            Block::new(t, &self.init_sds[t..t + 1]),
            Block::new(t + 1, &self.init_sds[t + 1..]),
        ];
        let mut history: [Vec<Vec<f64>>; 3] = Default::default();
        let mut window_accept = [0usize; 3];
        let mut kept_accept = [0usize; 3];
        let total = self.config.n_warmup + self.config.n_samples;
        let mut draws = Vec::with_capacity(self.config.n_samples);
        let mut proposal = theta.clone();

        for it in 0..total {
            let warmup = it < self.config.n_warmup;
            for (b, block) in blocks.iter().enumerate() {
                let z: Vec<f64> = (0..block.len).map(|_| rng.sample(StandardNormal)).collect();
                let scale = libm::exp(block.log_scale);
                proposal.copy_from_slice(&theta);
                for r in 0..block.len {
                    let mut step = 0.0;
                    for c in 0..=r {
                        step += block.chol[(r, c)] * z[c];
                    }
                    proposal[block.start + r] += scale * step;
                }
                let cand = self.log_target(&proposal);
                let u: f64 = rng.random();
                if cand.is_finite() && libm::log(u) < cand - current {
                    theta.copy_from_slice(&proposal);
                    current = cand;
                    if warmup {
                        window_accept[b] += 1;
                    } else {
                        kept_accept[b] += 1;
                    }
                }
                if warmup {
                    history[b].push(theta[block.start..block.start + block.len].to_vec());
                }
            }
            if warmup && (it + 1) % ADAPT_WINDOW == 0 {
                for b in 0..3 {
                    let rate = window_accept[b] as f64 / ADAPT_WINDOW as f64;
                    window_accept[b] = 0;
                    if !(0.2..=0.4).contains(&rate) {
                        blocks[b].log_scale += 2.0 * (rate - 0.3);
                    }
                }
                // Refresh proposal covariances from the second half of the
                // warmup history at a few checkpoints.
                let n_hist = it + 1;
                if n_hist % 200 == 0 && n_hist + 100 <= self.config.n_warmup {
                    for (b, block) in blocks.iter_mut().enumerate() {
                        let h = &history[b][n_hist / 2..];
                        if h.len() > 4 * block.len + 10 {
                            block.set_covariance(h);
                        }
                    }
                }
            }
            if !warmup {
                draws.push(to_params(&theta, &self.prior).0);
            }
        }
        let n = self.config.n_samples.max(1) as f64;
        ChainOutput {
            chain,
            draws,
            acceptance: BlockAcceptance {
                effect: kept_accept[0] as f64 / n,
                omega: kept_accept[1] as f64 / n,
                scales: kept_accept[2] as f64 / n,
            },
        }
    }

    /// Runs all chains sequentially.
    pub fn run(&self) -> Result<MecDraws> {
        let chains = (0..self.config.n_chains).map(|c| self.run_chain(c)).collect();
        MecDraws::from_chains(chains, self.config.n_warmup)
    }
}

/// Fits the monotone effect curve model; chains run one after another.
pub fn fit_mec(data: &TrialDataset, prior: &MecPrior, config: &MecConfig) -> Result<MecDraws> {
    MecSampler::new(data, prior, config)?.run()
}

/// Type-7 sample quantile of unsorted data.
fn quantile(values: &mut [f64], p: f64) -> f64 {
    values.sort_by(|a, b| a.total_cmp(b));
    let h = (values.len() - 1) as f64 * p;
    let lo = libm::floor(h) as usize;
    let hi = (lo + 1).min(values.len() - 1);
    values[lo] + (h - lo as f64) * (values[hi] - values[lo])
}

/// Posterior summary of an estimand. The point estimate applies the contrast
/// to the curve implied by the posterior means of `delta` and `alpha`; the
/// interval is the equal-tailed credible interval of the per-draw contrast,
/// `se` its posterior standard deviation, and `p` twice the smaller posterior
/// tail probability at zero.
pub fn mec_estimate(
    draws: &MecDraws,
    kind: EstimandKind,
    method: RiemannMethod,
    level: f64,
) -> Result<EstimandEstimate> {
    if draws.draws.is_empty() {
        return Err(domain("no posterior draws"));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(domain(format!("credible level must lie in (0, 1), got {level}")));
    }
    let t = draws.max_exposure();
    let rows = |s: usize| -> Result<Vec<f64>> {
        if s > t {
            return Err(domain(format!(
                "exposure time {s} is beyond the largest observed exposure {t}"
            )));
        }
        let mut r = vec![0.0; t];
        if s > 0 {
            r[s - 1] = 1.0;
        }
        Ok(r)
    };
    let m = contrast_from_rows(rows, t, t, kind, method)?;
    let dot = |curve: &[f64]| m.iter().zip(curve).map(|(a, b)| a * b).sum::<f64>();
    let mut per_draw: Vec<f64> = draws.draws.iter().map(|d| dot(&d.curve())).collect();
    let estimate = dot(&draws.posterior_mean_curve());
    let n = per_draw.len() as f64;
    // Shifted by the first draw so identical draws give exactly zero.
    let shift = per_draw[0];
    let (sum, sum_sq) = per_draw
        .iter()
        .fold((0.0, 0.0), |(a, b), x| (a + (x - shift), b + (x - shift) * (x - shift)));
    let var = if per_draw.len() > 1 {
        ((sum_sq - sum * sum / n) / (n - 1.0)).max(0.0)
    } else {
        0.0
    };
    let se = libm::sqrt(var);
    let below = per_draw.iter().filter(|&&x| x <= 0.0).count() as f64 / n;
    let above = per_draw.iter().filter(|&&x| x >= 0.0).count() as f64 / n;
    let tail = 0.5 * (1.0 - level);
    let ci_lo = quantile(&mut per_draw, tail);
    let ci_hi = quantile(&mut per_draw, 1.0 - tail);
    let (z, _) = z_and_p(estimate, se);
    Ok(EstimandEstimate {
        kind,
        method,
        estimate,
        se,
        ci_lo,
        ci_hi,
        z,
        p: (2.0 * below.min(above)).min(1.0),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{canonical_curve, generate, CurveKind, GenParams};
    use crate::design::StudyDesign;

    fn small_data(seed: u64) -> TrialDataset {
        let design = StudyDesign::standard(4, 2, 5).unwrap();
        let curve = canonical_curve(CurveKind::A, 4).unwrap();
        generate(&design, &curve, &GenParams::reference(5), seed).unwrap()
    }

    fn point(t: usize) -> MecParams {
        MecParams {
            delta: 0.4,
            omega: 2.0,
            alpha: vec![1.0 / t as f64; t],
            sigma: 1.5,
            tau: 0.3,
        }
    }

    #[test]
    fn transform_round_trip() {
        let prior = MecPrior::informative(4).unwrap();
        let mut p = point(4);
        p.alpha = vec![0.1, 0.2, 0.3, 0.4];
        let theta = from_params(&p, &prior);
        let (q, _) = to_params(&theta, &prior);
        assert!((q.delta - p.delta).abs() < 1e-12);
        assert!((q.omega - p.omega).abs() < 1e-9);
        assert!((q.sigma - p.sigma).abs() < 1e-12);
        for (a, b) in q.alpha.iter().zip(&p.alpha) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn support_violations_are_negative_infinity() {
        let data = small_data(1);
        let prior = MecPrior::symmetric(4).unwrap();
        let mut p = point(4);
        p.omega = 200.0;
        assert_eq!(log_posterior(&p, &data, &prior).unwrap(), f64::NEG_INFINITY);
        let mut p = point(4);
        p.alpha = vec![0.5, 0.6, -0.1, 0.0];
        assert_eq!(log_posterior(&p, &data, &prior).unwrap(), f64::NEG_INFINITY);
        let mut p = point(4);
        p.sigma = 0.0;
        assert_eq!(log_posterior(&p, &data, &prior).unwrap(), f64::NEG_INFINITY);
        assert!(log_posterior(&point(3), &data, &prior).is_err());
    }

    #[test]
    fn dirichlet_prior_is_symmetric() {
        let data = small_data(2);
        let prior = MecPrior::symmetric(4).unwrap();
        let mut a = point(4);
        a.alpha = vec![0.1, 0.2, 0.3, 0.4];
        let mut b = a.clone();
        b.alpha = vec![0.4, 0.3, 0.2, 0.1];
        let pa = log_posterior(&a, &data, &prior).unwrap() - log_likelihood(&a, &data).unwrap();
        let pb = log_posterior(&b, &data, &prior).unwrap() - log_likelihood(&b, &data).unwrap();
        assert!((pa - pb).abs() < 1e-12);
    }

    #[test]
    fn rhat_of_identical_chains_is_one() {
        let c = vec![vec![1.0, 2.0, 3.0, 4.0, 1.0, 2.0, 3.0, 4.0]; 4];
        assert!((split_rhat(&c) - 1.0).abs() < 0.2);
        let shifted = vec![vec![0.0; 8], vec![10.0; 8]];
        assert!(split_rhat(&shifted).is_infinite());
    }

    #[test]
    fn identical_draws_give_zero_width() {
        let p = MecParams {
            delta: 1.0,
            omega: 1.0,
            alpha: vec![1.0, 0.0, 0.0],
            sigma: 1.0,
            tau: 0.5,
        };
        let chain = ChainOutput {
            chain: 0,
            draws: vec![p; 8],
            acceptance: BlockAcceptance::default(),
        };
        let draws = MecDraws::from_chains(vec![chain], 0).unwrap();
        for kind in [EstimandKind::Lte, EstimandKind::Tate { s1: 0, s2: 3 }, EstimandKind::Pte(1)] {
            let e = mec_estimate(&draws, kind, RiemannMethod::Right, 0.95).unwrap();
            assert!((e.estimate - 1.0).abs() < 1e-15);
            assert_eq!(e.ci_lo, e.ci_hi);
            assert_eq!(e.se, 0.0);
        }
    }

    #[test]
    fn chains_are_reproducible_and_constrained() {
        let data = small_data(4);
        let prior = MecPrior::informative(4).unwrap();
        let config = MecConfig {
            n_chains: 2,
            n_warmup: 300,
            n_samples: 200,
            seed: 9,
        };
        let a = fit_mec(&data, &prior, &config).unwrap();
        let b = fit_mec(&data, &prior, &config).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.draws.len(), 400);
        for d in &a.draws {
            assert!(d.alpha.iter().all(|&x| x >= 0.0));
            assert!((d.alpha.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!((0.01..=100.0).contains(&d.omega));
            let c = d.curve();
            let increasing = c.windows(2).all(|w| w[1] >= w[0]);
            let decreasing = c.windows(2).all(|w| w[1] <= w[0]);
            assert!(increasing || decreasing);
        }
    }
}
