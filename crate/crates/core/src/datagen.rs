//! Effect curves and synthetic stepped-wedge datasets.
//!
//! Random number scheme: one root seed per dataset. Cluster `i` (1-based)
//! draws from `ChaCha8Rng::seed_from_u64(seed)` on stream `i`, first its
//! random intercept and treatment deviation, then the residuals in
//! (period, individual) order. Callers that need many datasets derive one
//! seed per replicate with [`substream_seed`].

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::design::StudyDesign;
use crate::error::{domain, Error, Result};

/// The four canonical effect-curve shapes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum CurveKind {
    /// Immediate, constant effect.
    A,
    /// Delayed, then flat from exposure 3.
    B,
    /// Concave, still rising at exposure 6.
    C,
    /// Convex start, flat from exposure 4.
    D,
}

impl CurveKind {
    pub const ALL: [CurveKind; 4] = [CurveKind::A, CurveKind::B, CurveKind::C, CurveKind::D];

    pub fn label(self) -> &'static str {
        match self {
            CurveKind::A => "a",
            CurveKind::B => "b",
            CurveKind::C => "c",
            CurveKind::D => "d",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim() {
            "a" | "A" => Ok(CurveKind::A),
            "b" | "B" => Ok(CurveKind::B),
            "c" | "C" => Ok(CurveKind::C),
            "d" | "D" => Ok(CurveKind::D),
            other => Err(domain(format!("unknown curve kind '{other}'"))),
        }
    }
}

/// A step-function effect curve `h(1..=S)`; `h(0) = 0` implicitly.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectCurve {
    pub values: Vec<f64>,
    pub label: String,
}

impl EffectCurve {
    pub fn new(values: Vec<f64>, label: impl Into<String>) -> Self {
        Self {
            values,
            label: label.into(),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `h(s)`, with `h(0) = 0`.
    pub fn value(&self, s: usize) -> Result<f64> {
        if s == 0 {
            return Ok(0.0);
        }
        self.values
            .get(s - 1)
            .copied()
            .ok_or_else(|| domain(format!("curve '{}' has no value at exposure {s}", self.label)))
    }

    /// Extends the curve to `len` points by repeating its last value.
    pub fn extend_flat(&self, len: usize) -> Self {
        let mut values = self.values.clone();
        let last = values.last().copied().unwrap_or(0.0);
        while values.len() < len {
            values.push(last);
        }
        Self::new(values, self.label.clone())
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self::new(
            self.values.iter().map(|v| v * factor).collect(),
            self.label.clone(),
        )
    }
}

/// Canonical step curve of the given shape on exposures `1..=len`.
///
/// Shapes b and d are padded with ones beyond exposure 6; shape c is
/// `(1 - 2^-s) / (1 - 2^-len)`, so it only reaches 1 at `len`.
pub fn canonical_curve(kind: CurveKind, len: usize) -> Result<EffectCurve> {
    if len == 0 {
        return Err(domain("curve length must be positive"));
    }
    if kind != CurveKind::A && len < 6 {
        return Err(domain(format!(
            "curve {} needs at least 6 exposure times, got {len}",
            kind.label()
        )));
    }
    let values: Vec<f64> = match kind {
        CurveKind::A => vec![1.0; len],
        CurveKind::B => [0.1, 0.6].into_iter().chain(core::iter::repeat(1.0)).take(len).collect(),
        CurveKind::C => {
            let denom = 1.0 - libm::pow(2.0, -(len as f64));
            (1..=len)
                .map(|s| (1.0 - libm::pow(2.0, -(s as f64))) / denom)
                .collect()
        }
        CurveKind::D => [0.05, 0.15, 0.45]
            .into_iter()
            .chain(core::iter::repeat(1.0))
            .take(len)
            .collect(),
    };
    Ok(EffectCurve::new(values, kind.label()))
}

/// Parameters of the generating model
/// `y = mu + beta_j + (delta h(s) + eta_i) x_ij + alpha_i + eps`.
#[derive(Debug, Clone, PartialEq)]
pub struct GenParams {
    pub mu: f64,
    pub delta: f64,
    pub sigma: f64,
    pub tau: f64,
    pub nu: f64,
    pub rho_re: f64,
    /// `beta_1..beta_J`; `beta_1` must be zero.
    pub time_trend: Vec<f64>,
}

impl GenParams {
    /// Linear trend `beta_j = drop * (j - 1) / (J - 1)`.
    pub fn linear_trend(num_periods: usize, drop: f64) -> Vec<f64> {
        let denom = (num_periods.max(2) - 1) as f64;
        (0..num_periods).map(|j| drop * j as f64 / denom).collect()
    }

    /// The reference simulation parameters: `mu = 1, delta = 0.5, sigma = 2,
    /// tau = 0.5` and a linear trend falling by 0.5 over the study.
    pub fn reference(num_periods: usize) -> Self {
        Self {
            mu: 1.0,
            delta: 0.5,
            sigma: 2.0,
            tau: 0.5,
            nu: 0.0,
            rho_re: 0.0,
            time_trend: Self::linear_trend(num_periods, -0.5),
        }
    }

    fn validate(&self, num_periods: usize) -> Result<()> {
        if !(self.sigma > 0.0) {
            return Err(domain(format!("sigma must be positive, got {}", self.sigma)));
        }
        if !(self.tau >= 0.0) || !(self.nu >= 0.0) {
            return Err(domain("tau and nu must be non-negative"));
        }
        if !(-1.0..=1.0).contains(&self.rho_re) {
            return Err(domain(format!("rho_re must lie in [-1, 1], got {}", self.rho_re)));
        }
        if self.time_trend.len() != num_periods {
            return Err(domain(format!(
                "time trend has {} entries, design has {num_periods} periods",
                self.time_trend.len()
            )));
        }
        if self.time_trend[0] != 0.0 {
            return Err(domain("time trend must start at beta_1 = 0"));
        }
        Ok(())
    }
}

/// One individual outcome.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub cluster: usize,
    pub sequence: usize,
    pub period: usize,
    pub treated: u8,
    pub exposure: usize,
    pub outcome: f64,
}

/// Long-format individual outcomes from a balanced, complete design.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialDataset {
    design: StudyDesign,
    rows: Vec<Observation>,
}

impl TrialDataset {
    pub fn design(&self) -> &StudyDesign {
        &self.design
    }

    pub fn rows(&self) -> &[Observation] {
        &self.rows
    }

    pub fn into_rows(self) -> Vec<Observation> {
        self.rows
    }

    /// Builds a dataset from rows, inferring the design and checking that
    /// every row follows the staircase pattern.
    ///
    /// Cluster ids may be arbitrary; sequences must be `1..=Q`, periods
    /// `1..=J` with `J >= Q + 1`, every cluster observed in every period with
    /// the same number of individuals, and the same number of clusters in
    /// every sequence.
    pub fn from_rows(rows: Vec<Observation>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Domain("dataset has no rows".into()));
        }
        let q_max = rows.iter().map(|r| r.sequence).max().unwrap_or(0);
        let j_max = rows.iter().map(|r| r.period).max().unwrap_or(0);
        if rows.iter().any(|r| r.sequence == 0 || r.period == 0) {
            return Err(domain("sequence and period labels are 1-based"));
        }
        if j_max < q_max + 1 {
            return Err(domain(format!(
                "{q_max} sequences need at least {} periods, found {j_max}",
                q_max + 1
            )));
        }
        let mut cluster_seq: BTreeMap<usize, usize> = BTreeMap::new();
        let mut cells: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        for (idx, r) in rows.iter().enumerate() {
            let line = idx + 1;
            if !r.outcome.is_finite() {
                return Err(domain(format!("row {line}: outcome is not finite")));
            }
            if let Some(&q) = cluster_seq.get(&r.cluster) {
                if q != r.sequence {
                    return Err(domain(format!(
                        "row {line}: cluster {} appears in sequences {q} and {}",
                        r.cluster, r.sequence
                    )));
                }
            } else {
                cluster_seq.insert(r.cluster, r.sequence);
            }
            let expected_x = u8::from(r.period > r.sequence);
            if r.treated != expected_x {
                return Err(domain(format!(
                    "row {line}: treated = {} but sequence {} at period {} implies {expected_x}",
                    r.treated, r.sequence, r.period
                )));
            }
            let expected_s = r.period.saturating_sub(r.sequence);
            if r.exposure != expected_s {
                return Err(domain(format!(
                    "row {line}: exposure = {} but sequence {} at period {} implies {expected_s}",
                    r.exposure, r.sequence, r.period
                )));
            }
            *cells.entry((r.cluster, r.period)).or_insert(0) += 1;
        }
        let mut per_seq = vec![0usize; q_max + 1];
        for &q in cluster_seq.values() {
            per_seq[q] += 1;
        }
        let cps = per_seq[1];
        if let Some(q) = (1..=q_max).find(|&q| per_seq[q] != cps) {
            return Err(domain(format!(
                "unbalanced design: sequence {q} has {} clusters, sequence 1 has {cps}",
                per_seq[q]
            )));
        }
        let k = cells.values().next().copied().unwrap_or(0);
        for &cluster in cluster_seq.keys() {
            for j in 1..=j_max {
                match cells.get(&(cluster, j)) {
                    None => {
                        return Err(domain(format!(
                            "incomplete design: cluster {cluster} has no observations in period {j}"
                        )))
                    }
                    Some(&n) if n != k => {
                        return Err(domain(format!(
                            "unbalanced design: cluster {cluster} period {j} has {n} individuals, expected {k}"
                        )))
                    }
                    _ => {}
                }
            }
        }
        let design = StudyDesign::new(q_max, cps, k, j_max - q_max - 1)?;
        Ok(Self { design, rows })
    }
}

/// SplitMix64 finalizer; used to derive independent seeds from a root seed.
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Seed of substream `index` under `root`.
pub fn substream_seed(root: u64, index: u64) -> u64 {
    splitmix64(root ^ splitmix64(index.wrapping_add(0x5EED)))
}

/// Draws one dataset from the generating model.
pub fn generate(
    design: &StudyDesign,
    curve: &EffectCurve,
    params: &GenParams,
    seed: u64,
) -> Result<TrialDataset> {
    let num_periods = design.num_periods();
    params.validate(num_periods)?;
    if curve.len() < design.max_exposure() {
        return Err(domain(format!(
            "curve '{}' covers exposures 1..={} but the design reaches {}",
            curve.label,
            curve.len(),
            design.max_exposure()
        )));
    }
    let k = design.cluster_size();
    let rho_c = libm::sqrt((1.0 - params.rho_re * params.rho_re).max(0.0));
    let mut rows = Vec::with_capacity(design.num_clusters() * num_periods * k);
    for cluster in 1..=design.num_clusters() {
        let q = design.sequence_of(cluster)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(cluster as u64);
        let z1: f64 = StandardNormal.sample(&mut rng);
        let z2: f64 = StandardNormal.sample(&mut rng);
        let alpha = params.tau * z1;
        let eta = params.nu * (params.rho_re * z1 + rho_c * z2);
        for j in 1..=num_periods {
            let s = design.exposure_time(q, j)?;
            let x = design.treatment_indicator(q, j)?;
            let effect = if x == 1 {
                params.delta * curve.value(s)? + eta
            } else {
                0.0
            };
            let mean = params.mu + params.time_trend[j - 1] + effect + alpha;
            for _ in 0..k {
                let e: f64 = StandardNormal.sample(&mut rng);
                rows.push(Observation {
                    cluster,
                    sequence: q,
                    period: j,
                    treated: x,
                    exposure: s,
                    outcome: mean + params.sigma * e,
                });
            }
        }
    }
    Ok(TrialDataset {
        design: *design,
        rows,
    })
}
