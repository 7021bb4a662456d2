//! Time-averaged, point and long-term treatment effects.
//!
//! Every estimand is a linear contrast `M theta` of a model's treatment
//! parameters. The TATE over `[s1, s2]` is approximated on the integer grid,
//! either by a right-hand Riemann sum
//!
//! ```text
//! (1 / (s2 - s1)) * sum_{r=1}^{s2-s1} PTE(s1 + r)
//! ```
//!
//! or by the trapezoid rule, which averages `PTE(s1 + r - 1)` and
//! `PTE(s1 + r)` with `PTE(0) = 0`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::dist::{normal_quantile, two_sided_p};
use crate::error::{domain, Result};
use crate::models::FittedModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimandKind {
    /// Time-averaged effect over exposure times `(s1, s2]`.
    Tate { s1: usize, s2: usize },
    /// Point effect at exposure time `s0`.
    Pte(usize),
    /// Point effect at the largest observed exposure time.
    Lte,
}

impl EstimandKind {
    /// Parses `tate:S1:S2`, `pte:S0` or `lte`.
    pub fn parse(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        let parts: Vec<&str> = lower.split(':').collect();
        let num = |p: &str| {
            p.parse::<usize>()
                .map_err(|_| domain(format!("estimand '{s}': '{p}' is not a non-negative integer")))
        };
        match parts.as_slice() {
            ["lte"] => Ok(Self::Lte),
            ["pte", s0] => Ok(Self::Pte(num(s0)?)),
            ["tate", a, b] => Ok(Self::Tate {
                s1: num(a)?,
                s2: num(b)?,
            }),
            _ => Err(domain(format!(
                "unknown estimand '{s}' (expected tate:S1:S2, pte:S0 or lte)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RiemannMethod {
    #[default]
    Right,
    Trapezoid,
}

impl RiemannMethod {
    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "right" => Ok(Self::Right),
            "trapezoid" => Ok(Self::Trapezoid),
            _ => Err(domain(format!("unknown method '{s}' (expected right or trapezoid)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimandEstimate {
    pub kind: EstimandKind,
    pub method: RiemannMethod,
    pub estimate: f64,
    pub se: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub z: f64,
    pub p: f64,
}

impl EstimandEstimate {
    pub fn covers(&self, truth: f64) -> bool {
        self.ci_lo <= truth && truth <= self.ci_hi
    }
}

/// Contrast vector for `kind`, given the PTE row at each exposure time, the
/// parameter dimension and the largest observed exposure.
pub fn contrast_from_rows<F>(
    pte_row: F,
    dim: usize,
    max_exposure: usize,
    kind: EstimandKind,
    method: RiemannMethod,
) -> Result<Vec<f64>>
where
    F: Fn(usize) -> Result<Vec<f64>>,
{
    match kind {
        EstimandKind::Lte => pte_row(max_exposure),
        EstimandKind::Pte(s0) => pte_row(s0),
        EstimandKind::Tate { s1, s2 } => {
            if s1 >= s2 {
                return Err(domain(format!("TATE needs s1 < s2, got [{s1}, {s2}]")));
            }
            let width = (s2 - s1) as f64;
            let mut m = vec![0.0; dim];
            let mut add = |s: usize, w: f64| -> Result<()> {
                for (mi, ri) in m.iter_mut().zip(pte_row(s)?) {
                    *mi += w * ri;
                }
                Ok(())
            };
            for r in 1..=(s2 - s1) {
                match method {
                    RiemannMethod::Right => add(s1 + r, 1.0 / width)?,
                    RiemannMethod::Trapezoid => {
                        add(s1 + r - 1, 0.5 / width)?;
                        add(s1 + r, 0.5 / width)?;
                    }
                }
            }
            Ok(m)
        }
    }
}

/// Contrast vector `M` with `estimate = M theta_hat`.
pub fn contrast(fit: &FittedModel, kind: EstimandKind, method: RiemannMethod) -> Result<Vec<f64>> {
    contrast_from_rows(
        |s| fit.pte_row(s),
        fit.num_theta(),
        fit.design.max_exposure(),
        kind,
        method,
    )
}

/// Wald summary of `M theta` with covariance `M V M'`.
pub fn wald(
    theta: &[f64],
    vcov: &DMatrix<f64>,
    m: &[f64],
    kind: EstimandKind,
    method: RiemannMethod,
    level: f64,
) -> Result<EstimandEstimate> {
    let n = theta.len();
    if m.len() != n || vcov.shape() != (n, n) {
        return Err(domain(format!(
            "contrast of length {} does not match {n} parameters",
            m.len()
        )));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(domain(format!("confidence level must lie in (0, 1), got {level}")));
    }
    let estimate: f64 = m.iter().zip(theta).map(|(a, b)| a * b).sum();
    let mut var = 0.0;
    for i in 0..n {
        for j in 0..n {
            var += m[i] * vcov[(i, j)] * m[j];
        }
    }
    let se = libm::sqrt(var.max(0.0));
    let crit = normal_quantile(0.5 + 0.5 * level);
    let (z, p) = z_and_p(estimate, se);
    Ok(EstimandEstimate {
        kind,
        method,
        estimate,
        se,
        ci_lo: estimate - crit * se,
        ci_hi: estimate + crit * se,
        z,
        p,
    })
}

/// Wald statistic and two-sided p-value. A zero standard error gives
/// `z = 0, p = 1` for a zero estimate and an infinite `z` with `p = 0` otherwise.
pub(crate) fn z_and_p(estimate: f64, se: f64) -> (f64, f64) {
    if se > 0.0 {
        let z = estimate / se;
        (z, two_sided_p(z))
    } else if estimate == 0.0 {
        (0.0, 1.0)
    } else {
        (estimate.signum() * f64::INFINITY, 0.0)
    }
}

/// Estimate, standard error, normal-theory interval and Wald test at the
/// fit's confidence level.
pub fn estimate(fit: &FittedModel, kind: EstimandKind, method: RiemannMethod) -> Result<EstimandEstimate> {
    let m = contrast(fit, kind, method)?;
    wald(&fit.theta_hat, &fit.vcov_theta, &m, kind, method, fit.spec.ci_level)
}

/// Pointwise PTE estimates with Wald intervals at exposure times `1..=S`.
pub fn effect_curve_estimate(fit: &FittedModel) -> Result<Vec<(usize, EstimandEstimate)>> {
    (1..=fit.design.max_exposure())
        .map(|s| Ok((s, estimate(fit, EstimandKind::Pte(s), RiemannMethod::Right)?)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eti_rows(s_max: usize) -> impl Fn(usize) -> Result<Vec<f64>> {
        move |s| {
            let mut r = vec![0.0; s_max];
            if s > s_max {
                return Err(domain("beyond"));
            }
            if s > 0 {
                r[s - 1] = 1.0;
            }
            Ok(r)
        }
    }

    #[test]
    fn eti_right_tate_weights() {
        let m = contrast_from_rows(eti_rows(6), 6, 6, EstimandKind::Tate { s1: 0, s2: 6 }, RiemannMethod::Right)
            .unwrap();
        assert!(m.iter().all(|&v| (v - 1.0 / 6.0).abs() < 1e-15));
    }

    #[test]
    fn eti_trapezoid_halves_last() {
        let m = contrast_from_rows(
            eti_rows(6),
            6,
            6,
            EstimandKind::Tate { s1: 0, s2: 4 },
            RiemannMethod::Trapezoid,
        )
        .unwrap();
        assert_eq!(m, vec![0.25, 0.25, 0.25, 0.125, 0.0, 0.0]);
    }

    #[test]
    fn bad_ranges() {
        let rows = eti_rows(6);
        assert!(contrast_from_rows(&rows, 6, 6, EstimandKind::Tate { s1: 3, s2: 3 }, RiemannMethod::Right).is_err());
        assert!(contrast_from_rows(&rows, 6, 6, EstimandKind::Tate { s1: 0, s2: 7 }, RiemannMethod::Right).is_err());
        assert!(contrast_from_rows(&rows, 6, 6, EstimandKind::Pte(7), RiemannMethod::Right).is_err());
    }

    #[test]
    fn parse_round_trip() {
        assert_eq!(EstimandKind::parse("lte").unwrap(), EstimandKind::Lte);
        assert_eq!(EstimandKind::parse("pte:3").unwrap(), EstimandKind::Pte(3));
        assert_eq!(
            EstimandKind::parse("tate:0:6").unwrap(),
            EstimandKind::Tate { s1: 0, s2: 6 }
        );
        assert!(EstimandKind::parse("tate:1").is_err());
        assert!(EstimandKind::parse("ate").is_err());
        assert_eq!(RiemannMethod::parse("trapezoid").unwrap(), RiemannMethod::Trapezoid);
        assert!(RiemannMethod::parse("left").is_err());
    }

    #[test]
    fn zero_se_handling() {
        let v = DMatrix::zeros(2, 2);
        let e = wald(&[1.0, 1.0], &v, &[0.5, 0.5], EstimandKind::Lte, RiemannMethod::Right, 0.95).unwrap();
        assert_eq!((e.ci_lo, e.ci_hi), (1.0, 1.0));
        assert_eq!(e.p, 0.0);
        let e = wald(&[0.0, 0.0], &v, &[0.5, 0.5], EstimandKind::Lte, RiemannMethod::Right, 0.95).unwrap();
        assert_eq!((e.z, e.p), (0.0, 1.0));
    }

    #[test]
    fn interval_width_matches_quantile() {
        let v = DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 2.0]);
        let e = wald(&[0.4, 0.9], &v, &[0.5, 0.5], EstimandKind::Lte, RiemannMethod::Right, 0.9).unwrap();
        let crit = normal_quantile(0.95);
        assert!(((e.ci_hi - e.ci_lo) - 2.0 * crit * e.se).abs() < 1e-12);
        assert!(e.ci_lo <= e.estimate && e.estimate <= e.ci_hi);
        assert!((e.se * e.se - 0.25 * (1.0 + 0.6 + 2.0)).abs() < 1e-12);
    }
}
