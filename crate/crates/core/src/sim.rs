//! Simulation scenarios, per-replicate evaluation and operating
//! characteristics.
//!
//! A replicate draws one dataset from a scenario, fits every model and
//! evaluates every estimand. Replicate `i` uses seed
//! `substream_seed(scenario.seed, i)`, so results do not depend on the order
//! or the thread on which replicates run. Failed fits are counted and excluded.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::datagen::{canonical_curve, generate, substream_seed, CurveKind, EffectCurve, GenParams};
use crate::design::StudyDesign;
use crate::error::{domain, Error, Result};
use crate::estimands::{estimate, EstimandEstimate, EstimandKind, RiemannMethod};
use crate::mec::{fit_mec, mec_estimate, MecConfig, MecPrior};
use crate::models::{fit, ModelKind, ModelSpec};

/// Number of sequences, clusters per sequence and individuals per
/// cluster-period in the reference study.
pub const REFERENCE_SEQUENCES: usize = 6;
pub const REFERENCE_CLUSTERS_PER_SEQUENCE: usize = 4;
pub const REFERENCE_CLUSTER_SIZE: usize = 20;

/// Names accepted by [`scenario_set`].
pub const SCENARIO_SETS: [&str; 6] = ["base", "reti", "extra", "rte", "dirichlet", "null"];

#[derive(Debug, Clone, PartialEq)]
pub enum SimModel {
    Lmm(ModelSpec),
    Mec(MecPrior),
}

impl SimModel {
    /// Parses a model label: `it`, `eti`, `reti:S`, `ncs:D`, any of those with
    /// an `-rte` suffix, `mec` (informative prior) or `mec-sym`.
    pub fn parse(s: &str, max_exposure: usize) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        match lower.as_str() {
            "mec" | "mec-informative" => Ok(Self::Mec(MecPrior::informative(max_exposure)?)),
            "mec-sym" | "mec-symmetric" => Ok(Self::Mec(MecPrior::symmetric(max_exposure)?)),
            _ => {
                let (base, rte) = match lower.strip_suffix("-rte") {
                    Some(b) => (b, true),
                    None => (lower.as_str(), false),
                };
                Ok(Self::Lmm(ModelSpec::new(ModelKind::parse(base)?).with_random_treatment(rte)))
            }
        }
    }

    pub fn label(&self) -> String {
        match self {
            Self::Lmm(spec) => spec.label(),
            Self::Mec(prior) if prior.label() == "symmetric" => "mec-sym".to_string(),
            Self::Mec(_) => "mec".to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimEstimand {
    pub label: String,
    pub kind: EstimandKind,
}

impl SimEstimand {
    pub fn new(label: impl Into<String>, kind: EstimandKind) -> Self {
        Self {
            label: label.into(),
            kind,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimScenario {
    pub name: String,
    pub curve: CurveKind,
    pub design: StudyDesign,
    /// Unscaled effect curve (maximum 1); the effect is `params.delta * h(s)`.
    pub truth_curve: EffectCurve,
    pub params: GenParams,
    pub models: Vec<SimModel>,
    pub estimands: Vec<SimEstimand>,
    pub replicates: usize,
    pub seed: u64,
    /// Sampler settings for MEC models; each replicate derives its own seed.
    pub mcmc: MecConfig,
    /// Average pointwise MSE is taken over exposure times `1..=pointwise_max`.
    pub pointwise_max: usize,
}

impl SimScenario {
    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(domain("a scenario needs at least one replicate"));
        }
        if self.models.is_empty() || self.estimands.is_empty() {
            return Err(domain("a scenario needs at least one model and one estimand"));
        }
        if self.truth_curve.len() < self.design.max_exposure() {
            return Err(domain("truth curve is shorter than the design's exposure range"));
        }
        if self.pointwise_max == 0 || self.pointwise_max > self.design.max_exposure() {
            return Err(domain("pointwise range must lie within the observed exposures"));
        }
        Ok(())
    }

    /// True point effect `delta * h(s)`.
    pub fn true_pte(&self, s: usize) -> Result<f64> {
        Ok(self.params.delta * self.truth_curve.value(s)?)
    }

    /// True value of an estimand; TATEs use the right-hand sum of the step curve.
    pub fn truth(&self, kind: EstimandKind) -> Result<f64> {
        match kind {
            EstimandKind::Pte(s) => self.true_pte(s),
            EstimandKind::Lte => self.true_pte(self.design.max_exposure()),
            EstimandKind::Tate { s1, s2 } => {
                if s1 >= s2 {
                    return Err(domain("TATE needs s1 < s2"));
                }
                let mut acc = 0.0;
                for s in s1 + 1..=s2 {
                    acc += self.true_pte(s)?;
                }
                Ok(acc / (s2 - s1) as f64)
            }
        }
    }
}

/// Estimates from one model on one replicate.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelOutcome {
    /// One per scenario estimand, in order.
    pub estimates: Vec<EstimandEstimate>,
    /// Point effect estimates at `1..=pointwise_max`.
    pub pte: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateRecord {
    pub index: usize,
    /// One per scenario model, in order.
    pub outcomes: Vec<core::result::Result<ModelOutcome, Error>>,
}

fn evaluate_model(
    scenario: &SimScenario,
    model: &SimModel,
    data: &crate::datagen::TrialDataset,
    mec_seed: u64,
) -> Result<ModelOutcome> {
    let method = RiemannMethod::Right;
    match model {
        SimModel::Lmm(spec) => {
            let f = fit(data, spec)?;
            let estimates = scenario
                .estimands
                .iter()
                .map(|e| estimate(&f, e.kind, method))
                .collect::<Result<Vec<_>>>()?;
            let pte = (1..=scenario.pointwise_max)
                .map(|s| estimate(&f, EstimandKind::Pte(s), method).map(|e| e.estimate))
                .collect::<Result<Vec<_>>>()?;
            Ok(ModelOutcome { estimates, pte })
        }
        SimModel::Mec(prior) => {
            let config = MecConfig {
                seed: mec_seed,
                ..scenario.mcmc
            };
            let draws = fit_mec(data, prior, &config)?;
            let estimates = scenario
                .estimands
                .iter()
                .map(|e| mec_estimate(&draws, e.kind, method, 0.95))
                .collect::<Result<Vec<_>>>()?;
            let curve = draws.posterior_mean_curve();
            Ok(ModelOutcome {
                estimates,
                pte: curve[..scenario.pointwise_max].to_vec(),
            })
        }
    }
}

/// Generates replicate `index` and evaluates every model on it.
pub fn run_replicate(scenario: &SimScenario, index: usize) -> Result<ReplicateRecord> {
    let seed = substream_seed(scenario.seed, index as u64);
    let data = generate(&scenario.design, &scenario.truth_curve, &scenario.params, seed)?;
    let mec_seed = substream_seed(seed, u64::MAX);
    let outcomes = scenario
        .models
        .iter()
        .map(|m| evaluate_model(scenario, m, &data, mec_seed))
        .collect();
    Ok(ReplicateRecord { index, outcomes })
}

/// Monte Carlo summaries of an estimator against a known truth.
///
/// `variance` uses the `1/n` convention so that `mse = variance + bias^2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub n: usize,
    pub bias: f64,
    pub bias_mcse: f64,
    pub coverage: f64,
    pub coverage_mcse: f64,
    pub mse: f64,
    pub mse_mcse: f64,
    pub power: f64,
    pub power_mcse: f64,
    pub variance: f64,
}

impl Metrics {
    pub fn mean_estimate(&self, truth: f64) -> f64 {
        truth + self.bias
    }
}

fn proportion_mcse(p: f64, n: f64) -> f64 {
    libm::sqrt(p * (1.0 - p) / n)
}

/// Bias, coverage, MSE and power (share of `p < 0.05`) with Monte Carlo SEs.
pub fn metrics(estimates: &[EstimandEstimate], truth: f64) -> Result<Metrics> {
    if estimates.is_empty() {
        return Err(domain("no estimates to summarize"));
    }
    let n = estimates.len() as f64;
    let mean = estimates.iter().map(|e| e.estimate).sum::<f64>() / n;
    let variance = estimates
        .iter()
        .map(|e| (e.estimate - mean) * (e.estimate - mean))
        .sum::<f64>()
        / n;
    let bias = mean - truth;
    let sq: Vec<f64> = estimates
        .iter()
        .map(|e| (e.estimate - truth) * (e.estimate - truth))
        .collect();
    let mse = sq.iter().sum::<f64>() / n;
    let (bias_mcse, mse_mcse) = if estimates.len() > 1 {
        let sd_sq = libm::sqrt(sq.iter().map(|v| (v - mse) * (v - mse)).sum::<f64>() / (n - 1.0));
        (libm::sqrt(variance * n / (n - 1.0) / n), sd_sq / libm::sqrt(n))
    } else {
        (0.0, 0.0)
    };
    let coverage = estimates.iter().filter(|e| e.covers(truth)).count() as f64 / n;
    let power = estimates.iter().filter(|e| e.p < 0.05).count() as f64 / n;
    Ok(Metrics {
        n: estimates.len(),
        bias,
        bias_mcse,
        coverage,
        coverage_mcse: proportion_mcse(coverage, n),
        mse,
        mse_mcse,
        power,
        power_mcse: proportion_mcse(power, n),
        variance,
    })
}

/// One output line: a model and estimand within a scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct SimRow {
    pub scenario: String,
    pub curve: CurveKind,
    pub model: String,
    pub estimand: String,
    pub truth: f64,
    pub metrics: Metrics,
    pub avg_pointwise_mse: f64,
    pub n_fail: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimResult {
    pub rows: Vec<SimRow>,
}

impl SimResult {
    pub fn row(&self, model: &str, estimand: &str) -> Option<&SimRow> {
        self.rows
            .iter()
            .find(|r| r.model == model && r.estimand == estimand)
    }
}

/// Summarizes replicate records, which may arrive in any order.
pub fn aggregate(scenario: &SimScenario, records: &[ReplicateRecord]) -> Result<SimResult> {
    let mut records: Vec<&ReplicateRecord> = records.iter().collect();
    records.sort_by_key(|r| r.index);
    let mut rows = Vec::new();
    for (m, model) in scenario.models.iter().enumerate() {
        let ok: Vec<&ModelOutcome> = records
            .iter()
            .filter_map(|r| r.outcomes[m].as_ref().ok())
            .collect();
        let n_fail = records.len() - ok.len();
        if ok.is_empty() {
            let first = records
                .iter()
                .find_map(|r| r.outcomes[m].as_ref().err())
                .map(|e| e.to_string())
                .unwrap_or_default();
            return Err(Error::Estimation(format!(
                "model '{}' failed on all {} replicates of scenario '{}': {first}",
                model.label(),
                records.len(),
                scenario.name
            )));
        }
        let mut pointwise = 0.0;
        for o in &ok {
            let mut acc = 0.0;
            for (i, est) in o.pte.iter().enumerate() {
                let d = est - scenario.true_pte(i + 1)?;
                acc += d * d;
            }
            pointwise += acc / o.pte.len() as f64;
        }
        pointwise /= ok.len() as f64;
        for (e, est) in scenario.estimands.iter().enumerate() {
            let truth = scenario.truth(est.kind)?;
            let values: Vec<EstimandEstimate> = ok.iter().map(|o| o.estimates[e]).collect();
            rows.push(SimRow {
                scenario: scenario.name.clone(),
                curve: scenario.curve,
                model: model.label(),
                estimand: est.label.clone(),
                truth,
                metrics: metrics(&values, truth)?,
                avg_pointwise_mse: pointwise,
                n_fail,
            });
        }
    }
    Ok(SimResult { rows })
}

/// Runs every replicate on the current thread.
pub fn run_scenario(scenario: &SimScenario) -> Result<SimResult> {
    scenario.validate()?;
    let records = (0..scenario.replicates)
        .map(|i| run_replicate(scenario, i))
        .collect::<Result<Vec<_>>>()?;
    aggregate(scenario, &records)
}

fn reference_design(extra_periods: usize) -> Result<StudyDesign> {
    StudyDesign::new(
        REFERENCE_SEQUENCES,
        REFERENCE_CLUSTERS_PER_SEQUENCE,
        REFERENCE_CLUSTER_SIZE,
        extra_periods,
    )
}

fn reference_estimands() -> Vec<SimEstimand> {
    vec![
        SimEstimand::new("tate", EstimandKind::Tate { s1: 0, s2: REFERENCE_SEQUENCES }),
        SimEstimand::new("lte", EstimandKind::Pte(REFERENCE_SEQUENCES)),
    ]
}

fn lmm(kind: ModelKind) -> SimModel {
    SimModel::Lmm(ModelSpec::new(kind))
}

#[allow(clippy::too_many_arguments)]
fn scenario(
    name: &str,
    curve: CurveKind,
    extra_periods: usize,
    configure: impl FnOnce(&mut GenParams),
    models: Vec<SimModel>,
    replicates: usize,
    seed: u64,
) -> Result<SimScenario> {
    let design = reference_design(extra_periods)?;
    let j = design.num_periods();
    let s = REFERENCE_SEQUENCES;
    let truth_curve = canonical_curve(curve, s)?.extend_flat(design.max_exposure());
    let mut params = GenParams::reference(j);
    // Keep the reference per-period slope when periods are appended.
    params.time_trend = GenParams::linear_trend(j, -0.5 * (j - 1) as f64 / s as f64);
    configure(&mut params);
    Ok(SimScenario {
        name: name.to_string(),
        curve,
        design,
        truth_curve,
        params,
        models,
        estimands: reference_estimands(),
        replicates,
        seed: substream_seed(seed, curve as u64),
        mcmc: MecConfig::default(),
        pointwise_max: s,
    })
}

/// The scenarios of one named study for one effect curve.
///
/// - `base`: IT, ETI, NCS(4) and MEC with the informative prior.
/// - `reti`: ETI against RETI(3) and RETI(4).
/// - `extra`: ETI with 0, 1 and 2 periods appended, curves held flat.
/// - `rte`: ETI with and without random treatment effects, data with
///   `nu = 1, rho = -0.2` and with `nu = 0`.
/// - `dirichlet`: ETI, NCS(4) and MEC with the symmetric prior.
/// - `null`: no treatment effect; IT, ETI and NCS(4) Wald tests.
pub fn scenario_set(name: &str, curve: CurveKind, replicates: usize, seed: u64) -> Result<Vec<SimScenario>> {
    let s = REFERENCE_SEQUENCES;
    let none = |_: &mut GenParams| {};
    match name {
        "base" => Ok(vec![scenario(
            "base",
            curve,
            0,
            none,
            vec![
                lmm(ModelKind::It),
                lmm(ModelKind::Eti),
                lmm(ModelKind::Ncs(4)),
                SimModel::Mec(MecPrior::informative(s)?),
            ],
            replicates,
            seed,
        )?]),
        "reti" => Ok(vec![scenario(
            "reti",
            curve,
            0,
            none,
            vec![lmm(ModelKind::Eti), lmm(ModelKind::Reti(3)), lmm(ModelKind::Reti(4))],
            replicates,
            seed,
        )?]),
        "extra" => (0..=2)
            .map(|e| {
                scenario(
                    &format!("extra-{e}"),
                    curve,
                    e,
                    none,
                    vec![lmm(ModelKind::Eti)],
                    replicates,
                    seed,
                )
            })
            .collect(),
        "rte" => {
            let models = || {
                vec![
                    lmm(ModelKind::Eti),
                    SimModel::Lmm(ModelSpec::new(ModelKind::Eti).with_random_treatment(true)),
                ]
            };
            Ok(vec![
                scenario(
                    "rte",
                    curve,
                    0,
                    |p| {
                        p.nu = 1.0;
                        p.rho_re = -0.2;
                    },
                    models(),
                    replicates,
                    seed,
                )?,
                scenario("rte-nu0", curve, 0, none, models(), replicates, seed)?,
            ])
        }
        "dirichlet" => Ok(vec![scenario(
            "dirichlet",
            curve,
            0,
            none,
            vec![
                lmm(ModelKind::Eti),
                lmm(ModelKind::Ncs(4)),
                SimModel::Mec(MecPrior::symmetric(s)?),
            ],
            replicates,
            seed,
        )?]),
        "null" => Ok(vec![scenario(
            "null",
            curve,
            0,
            |p| p.delta = 0.0,
            vec![lmm(ModelKind::It), lmm(ModelKind::Eti), lmm(ModelKind::Ncs(4))],
            replicates,
            seed,
        )?]),
        _ => Err(domain(format!(
            "unknown scenario '{name}' (expected one of {})",
            SCENARIO_SETS.join(", ")
        ))),
    }
}

/// Every study over curves a-d.
pub fn scenario_catalog(replicates: usize, seed: u64) -> Result<Vec<(&'static str, Vec<SimScenario>)>> {
    SCENARIO_SETS
        .iter()
        .map(|&name| {
            let mut all = Vec::new();
            for curve in CurveKind::ALL {
                all.extend(scenario_set(name, curve, replicates, seed)?);
            }
            Ok((name, all))
        })
        .collect()
}
