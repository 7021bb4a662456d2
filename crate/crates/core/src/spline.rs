//! Natural cubic spline basis on exposure time, constrained through the origin.
//!
//! With knots `k_1 < ... < k_m` the natural cubic splines form an
//! `m`-dimensional space containing the constants. Using the truncated power
//! representation
//!
//! ```text
//! N_1 = 1, N_2 = x, N_{r+2} = d_r(x) - d_{m-1}(x),
//! d_r(x) = ((x - k_r)^3_+ - (x - k_m)^3_+) / (k_m - k_r)
//! ```
//!
//! every `N_r` with `r >= 2` vanishes at `x = 0 < k_1`, so dropping the
//! constant leaves `m - 1` basis functions through the origin.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{domain, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SplineBasis {
    knots: Vec<f64>,
}

fn cube_plus(x: f64) -> f64 {
    if x > 0.0 {
        x * x * x
    } else {
        0.0
    }
}

fn plus(x: f64) -> f64 {
    x.max(0.0)
}

/// Type-7 (linear interpolation) sample quantile of sorted data.
fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = libm::floor(h) as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

impl SplineBasis {
    /// Basis with `df` functions on the exposure grid `1..=max_exposure`.
    pub fn build(df: usize, max_exposure: usize) -> Result<Self> {
        let grid: Vec<f64> = (1..=max_exposure).map(|s| s as f64).collect();
        Self::from_exposures(df, &grid)
    }

    /// Basis with `df` functions. Boundary knots sit at the smallest and
    /// largest positive exposure; `df - 1` interior knots sit at evenly spaced
    /// quantiles of the unique positive exposures.
    pub fn from_exposures(df: usize, exposures: &[f64]) -> Result<Self> {
        let mut unique: Vec<f64> = exposures.iter().copied().filter(|&s| s > 0.0).collect();
        unique.sort_by(|a, b| a.partial_cmp(b).expect("finite exposures"));
        unique.dedup();
        if df == 0 {
            return Err(domain("spline needs at least 1 degree of freedom"));
        }
        if df > unique.len() {
            return Err(domain(format!(
                "{df} degrees of freedom exceed the {} distinct exposure times",
                unique.len()
            )));
        }
        let mut knots = Vec::with_capacity(df + 1);
        knots.push(unique[0]);
        for i in 1..df {
            knots.push(quantile_sorted(&unique, i as f64 / df as f64));
        }
        knots.push(unique[unique.len() - 1]);
        if knots.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(domain("spline knots are not strictly increasing"));
        }
        Ok(Self { knots })
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    /// Number of basis functions.
    pub fn df(&self) -> usize {
        self.knots.len() - 1
    }

    fn d_r(&self, r: usize, x: f64) -> f64 {
        let last = self.knots[self.knots.len() - 1];
        (cube_plus(x - self.knots[r]) - cube_plus(x - last)) / (last - self.knots[r])
    }

    fn d_r_second(&self, r: usize, x: f64) -> f64 {
        let last = self.knots[self.knots.len() - 1];
        6.0 * (plus(x - self.knots[r]) - plus(x - last)) / (last - self.knots[r])
    }

    /// `(b_1(s), ..., b_d(s))`.
    pub fn evaluate(&self, s: f64) -> Vec<f64> {
        let m = self.knots.len();
        let tail = self.d_r(m - 2, s);
        let mut out = Vec::with_capacity(m - 1);
        out.push(s);
        for r in 0..m - 2 {
            out.push(self.d_r(r, s) - tail);
        }
        out
    }

    /// Second derivatives of the basis functions at `s`.
    pub fn second_derivative(&self, s: f64) -> Vec<f64> {
        let m = self.knots.len();
        let tail = self.d_r_second(m - 2, s);
        let mut out = Vec::with_capacity(m - 1);
        out.push(0.0);
        for r in 0..m - 2 {
            out.push(self.d_r_second(r, s) - tail);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Mat;

    #[test]
    fn knot_placement() {
        let b = SplineBasis::build(4, 6).unwrap();
        let expected = [1.0, 2.25, 3.5, 4.75, 6.0];
        assert_eq!(b.knots(), expected);
        assert_eq!(b.df(), 4);
    }

    #[test]
    fn domain_errors() {
        assert!(SplineBasis::build(7, 6).is_err());
        assert!(SplineBasis::build(0, 6).is_err());
        assert_eq!(SplineBasis::build(1, 6).unwrap().evaluate(2.5), alloc::vec![2.5]);
    }

    #[test]
    fn passes_through_origin() {
        for df in 2..=6 {
            let b = SplineBasis::build(df, 6).unwrap();
            assert!(b.evaluate(0.0).iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn saturated_basis_is_invertible() {
        for s_max in 2..=12 {
            let b = SplineBasis::build(s_max, s_max).unwrap();
            let m = Mat::from_fn(s_max, s_max, |i, k| b.evaluate((i + 1) as f64)[k]);
            let svd = m.svd(false, false);
            let smin = svd.singular_values.min();
            let smax = svd.singular_values.max();
            assert!(smin / smax > 1e-8, "S={s_max}: condition {}", smax / smin);
        }
    }

    #[test]
    fn linear_outside_boundary_knots() {
        let b = SplineBasis::build(4, 6).unwrap();
        for x in [6.0, 6.5, 9.0, 20.0] {
            assert!(b.second_derivative(x).iter().all(|v| v.abs() < 1e-12));
        }
        for x in [0.0, 0.3, 0.99] {
            assert!(b.second_derivative(x).iter().all(|v| v.abs() < 1e-12));
        }
        // Equal steps beyond the last knot give equal increments.
        let last = 6.0;
        for t in [0.5, 1.0, 3.0] {
            let f0 = b.evaluate(last);
            let f1 = b.evaluate(last + t);
            let f2 = b.evaluate(last + 2.0 * t);
            for k in 0..4 {
                assert!(((f2[k] - f1[k]) - (f1[k] - f0[k])).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn continuity_at_knots() {
        let b = SplineBasis::build(5, 8).unwrap();
        for &k in b.knots() {
            for eps in [1e-4, 1e-6, 1e-8] {
                let lo = b.evaluate(k - eps);
                let hi = b.evaluate(k + eps);
                let d2lo = b.second_derivative(k - eps);
                let d2hi = b.second_derivative(k + eps);
                for i in 0..b.df() {
                    assert!((lo[i] - hi[i]).abs() < 50.0 * eps);
                    assert!((d2lo[i] - d2hi[i]).abs() < 500.0 * eps);
                }
            }
        }
    }
}
