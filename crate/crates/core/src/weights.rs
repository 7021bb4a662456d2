//! Behaviour of the immediate-treatment (IT) estimator when the true effect
//! varies with exposure time.
//!
//! Under an exchangeable within-cluster correlation the IT estimator is a
//! fixed linear combination of sequence-by-period means, and its expectation
//! is a weighted sum `sum_s w(Q, phi, s) delta(s)` of point treatment effects.
//! The weights sum to one but the last one is negative whenever `phi > 0`.
//! [`numeric_weights`] recovers the same weights (and their analogues for
//! other correlation structures) directly from the GLS projection.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::design::StudyDesign;
use crate::error::{domain, Result};
use crate::linalg::{cholesky, Mat};

/// Weights `w(1..=S)` linking point effects to the expected IT estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightProfile {
    pub num_sequences: usize,
    /// Cluster-mean correlation, when the profile comes from an exchangeable structure.
    pub phi: Option<f64>,
    pub weights: Vec<f64>,
}

impl WeightProfile {
    pub fn sum(&self) -> f64 {
        self.weights.iter().sum()
    }
}

/// Within-cluster correlation structure for [`numeric_weights`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CorrelationSpec {
    /// Cluster means correlated with `phi`; the individual-level ICC is
    /// recovered from the design's cluster size.
    Exchangeable { phi: f64 },
    /// Random cluster-by-period effect: `within` for two individuals in the
    /// same period, `between` for different periods.
    NestedExchangeable { within: f64, between: f64 },
    /// Random treatment effect: correlation between two control
    /// observations, two treated observations, and one of each.
    RandomTreatment { control: f64, treated: f64, cross: f64 },
}

impl CorrelationSpec {
    fn validate(&self) -> Result<()> {
        let params: &[f64] = match self {
            CorrelationSpec::Exchangeable { phi } => &[*phi],
            CorrelationSpec::NestedExchangeable { within, between } => &[*within, *between],
            CorrelationSpec::RandomTreatment {
                control,
                treated,
                cross,
            } => &[*control, *treated, *cross],
        };
        for &p in params {
            if !(0.0..1.0).contains(&p) {
                return Err(domain(format!("correlation {p} outside [0, 1)")));
            }
        }
        Ok(())
    }
}

fn check_q_phi(q: usize, phi: f64) -> Result<()> {
    if q < 2 {
        return Err(domain(format!("need at least 2 sequences, got {q}")));
    }
    if !(0.0..1.0).contains(&phi) {
        return Err(domain(format!("phi must lie in [0, 1), got {phi}")));
    }
    Ok(())
}

/// The weight function
/// `6(s-Q-1)((1+2 phi Q)s - (1+phi+phi Q)Q) / (Q(Q+1)(phi Q^2 + 2Q - phi Q - 2))`.
pub fn weight(q: usize, phi: f64, s: usize) -> Result<f64> {
    check_q_phi(q, phi)?;
    if s == 0 || s > q {
        return Err(domain(format!("exposure time {s} outside 1..={q}")));
    }
    let qf = q as f64;
    let sf = s as f64;
    let num = 6.0 * (sf - qf - 1.0) * ((1.0 + 2.0 * phi * qf) * sf - (1.0 + phi + phi * qf) * qf);
    let den = qf * (qf + 1.0) * (phi * qf * qf + 2.0 * qf - phi * qf - 2.0);
    Ok(num / den)
}

pub fn weight_profile(q: usize, phi: f64) -> Result<WeightProfile> {
    let weights = (1..=q).map(|s| weight(q, phi, s)).collect::<Result<Vec<_>>>()?;
    Ok(WeightProfile {
        num_sequences: q,
        phi: Some(phi),
        weights,
    })
}

/// Closed-form IT estimate from a `Q x (Q+1)` table of sequence-by-period means.
pub fn it_closed_form<R: AsRef<[f64]>>(means: &[R], phi: f64) -> Result<f64> {
    let q = means.len();
    check_q_phi(q, phi)?;
    let j_count = q + 1;
    let qf = q as f64;
    let scale =
        12.0 * (1.0 + phi * qf) / (qf * (qf + 1.0) * (phi * qf * qf + 2.0 * qf - phi * qf - 2.0));
    let mut total = 0.0;
    for (qi, row) in means.iter().enumerate() {
        let row = row.as_ref();
        if row.len() != j_count {
            return Err(domain(format!(
                "sequence {} has {} period means, expected {j_count}",
                qi + 1,
                row.len()
            )));
        }
        let seq = (qi + 1) as f64;
        let adj = phi * qf * (2.0 * seq - qf - 1.0) / (2.0 * (1.0 + phi * qf));
        for (ji, y) in row.iter().enumerate() {
            let j = ji + 1;
            let treated = if j > qi + 1 { qf } else { 0.0 };
            total += (treated - j as f64 + 1.0 + adj) * y;
        }
    }
    Ok(scale * total)
}

/// Expected IT estimate `sum_s w(s) delta(s)`.
pub fn expected_it_estimate(profile: &WeightProfile, pte: &[f64]) -> Result<f64> {
    if pte.len() != profile.weights.len() {
        return Err(domain(format!(
            "profile has {} weights but {} point effects were given",
            profile.weights.len(),
            pte.len()
        )));
    }
    Ok(profile.weights.iter().zip(pte).map(|(w, d)| w * d).sum())
}

/// Weights of the GLS immediate-treatment estimator under an arbitrary
/// within-cluster correlation, computed exactly from the projection matrix.
///
/// For each exposure time `s` the true effect curve is set to the indicator
/// of `s`; the resulting expected estimate is `w(s)`. Works at the
/// individual level, so the design's cluster size matters for the nested
/// and random-treatment structures.
pub fn numeric_weights(design: &StudyDesign, corr: &CorrelationSpec) -> Result<WeightProfile> {
    corr.validate()?;
    let j_count = design.num_periods();
    let k = design.cluster_size();
    let n = j_count * k;
    let p = j_count + 1;
    let s_max = design.max_exposure();
    let mult = design.clusters_per_sequence() as f64;

    let mut info = Mat::zeros(p, p);
    let mut rhs = Mat::zeros(p, s_max);
    for q in 1..=design.num_sequences() {
        let mut x = Mat::zeros(n, p);
        let mut treated = vec![false; n];
        let mut e = Mat::zeros(n, s_max);
        for j in 1..=j_count {
            let xij = design.treatment_indicator(q, j)?;
            let s = design.exposure_time(q, j)?;
            for m in 0..k {
                let row = (j - 1) * k + m;
                x[(row, 0)] = 1.0;
                if j >= 2 {
                    x[(row, j - 1)] = 1.0;
                }
                x[(row, p - 1)] = f64::from(xij);
                treated[row] = xij == 1;
                if s > 0 {
                    e[(row, s - 1)] = 1.0;
                }
            }
        }
        let r = Mat::from_fn(n, n, |a, b| {
            if a == b {
                return 1.0;
            }
            match *corr {
                CorrelationSpec::Exchangeable { phi } => {
                    let kf = k as f64;
                    phi / (kf - kf * phi + phi)
                }
                CorrelationSpec::NestedExchangeable { within, between } => {
                    if a / k == b / k {
                        within
                    } else {
                        between
                    }
                }
                CorrelationSpec::RandomTreatment {
                    control,
                    treated: both,
                    cross,
                } => match (treated[a], treated[b]) {
                    (false, false) => control,
                    (true, true) => both,
                    _ => cross,
                },
            }
        });
        let chol = cholesky(r, "within-cluster correlation matrix")?;
        let rinv_x = chol.solve(&x);
        info += (x.transpose() * &rinv_x) * mult;
        rhs += (rinv_x.transpose() * &e) * mult;
    }
    let chol = cholesky(info, "IT information matrix")?;
    let sol = chol.solve(&rhs);
    let weights: Vec<f64> = (0..s_max).map(|s| sol[(p - 1, s)]).collect();
    Ok(WeightProfile {
        num_sequences: design.num_sequences(),
        phi: match *corr {
            CorrelationSpec::Exchangeable { phi } => Some(phi),
            _ => None,
        },
        weights,
    })
}

/// Three sequences, one cluster each, four periods and two individuals per
/// cluster-period: the small configuration used to tabulate weights for the
/// nested-exchangeable and random-treatment structures.
pub fn three_sequence_fixture() -> StudyDesign {
    StudyDesign::standard(3, 1, 2).expect("valid fixture")
}
