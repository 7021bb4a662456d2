//! Stepped-wedge design geometry.
//!
//! Sequences and periods are 1-indexed. Sequence `q` crosses over to treatment
//! at period `q + 1`; exposure time `0` means the cluster is still in control.

use alloc::format;

use crate::error::{domain, Result};

/// A balanced, complete stepped-wedge design, optionally extended with extra
/// periods after the last sequence has crossed over.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StudyDesign {
    num_sequences: usize,
    clusters_per_sequence: usize,
    cluster_size: usize,
    extra_periods: usize,
}

impl StudyDesign {
    pub fn new(
        num_sequences: usize,
        clusters_per_sequence: usize,
        cluster_size: usize,
        extra_periods: usize,
    ) -> Result<Self> {
        if num_sequences < 2 {
            return Err(domain(format!(
                "a stepped-wedge design needs at least 2 sequences, got {num_sequences}"
            )));
        }
        if clusters_per_sequence == 0 {
            return Err(domain("clusters_per_sequence must be at least 1"));
        }
        if cluster_size == 0 {
            return Err(domain("cluster_size must be at least 1"));
        }
        Ok(Self {
            num_sequences,
            clusters_per_sequence,
            cluster_size,
            extra_periods,
        })
    }

    /// A standard design: `J = Q + 1` periods.
    pub fn standard(num_sequences: usize, clusters_per_sequence: usize, cluster_size: usize) -> Result<Self> {
        Self::new(num_sequences, clusters_per_sequence, cluster_size, 0)
    }

    pub fn num_sequences(&self) -> usize {
        self.num_sequences
    }

    pub fn num_periods(&self) -> usize {
        self.num_sequences + 1 + self.extra_periods
    }

    pub fn clusters_per_sequence(&self) -> usize {
        self.clusters_per_sequence
    }

    pub fn cluster_size(&self) -> usize {
        self.cluster_size
    }

    pub fn extra_periods(&self) -> usize {
        self.extra_periods
    }

    pub fn num_clusters(&self) -> usize {
        self.num_sequences * self.clusters_per_sequence
    }

    pub fn is_standard(&self) -> bool {
        self.extra_periods == 0
    }

    /// Largest exposure time observed anywhere in the design (`J - 1`).
    pub fn max_exposure(&self) -> usize {
        self.num_periods() - 1
    }

    /// Sequence of a 1-based cluster id; clusters are numbered sequence by sequence.
    pub fn sequence_of(&self, cluster: usize) -> Result<usize> {
        if cluster == 0 || cluster > self.num_clusters() {
            return Err(domain(format!(
                "cluster {cluster} outside 1..={}",
                self.num_clusters()
            )));
        }
        Ok((cluster - 1) / self.clusters_per_sequence + 1)
    }

    fn check(&self, q: usize, j: usize) -> Result<()> {
        if q == 0 || q > self.num_sequences {
            return Err(domain(format!(
                "sequence {q} outside 1..={}",
                self.num_sequences
            )));
        }
        if j == 0 || j > self.num_periods() {
            return Err(domain(format!(
                "period {j} outside 1..={}",
                self.num_periods()
            )));
        }
        Ok(())
    }

    /// Periods elapsed since sequence `q` started treatment, `max(0, j - q)`.
    pub fn exposure_time(&self, q: usize, j: usize) -> Result<usize> {
        self.check(q, j)?;
        Ok(j.saturating_sub(q))
    }

    pub fn treatment_indicator(&self, q: usize, j: usize) -> Result<u8> {
        self.check(q, j)?;
        Ok(u8::from(j > q))
    }
}

/// Cluster-mean correlation `tau2 / (tau2 + sigma2 / n)`.
pub fn derive_phi(tau2: f64, sigma2: f64, n: usize) -> Result<f64> {
    if !(sigma2 > 0.0) || !sigma2.is_finite() {
        return Err(domain(format!("sigma2 must be positive, got {sigma2}")));
    }
    if n < 1 {
        return Err(domain("n must be at least 1"));
    }
    if !(tau2 >= 0.0) || !tau2.is_finite() {
        return Err(domain(format!("tau2 must be non-negative, got {tau2}")));
    }
    Ok(tau2 / (tau2 + sigma2 / n as f64))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d6() -> StudyDesign {
        StudyDesign::standard(6, 4, 20).unwrap()
    }

    #[test]
    fn exposure_examples() {
        let d = d6();
        assert_eq!(d.exposure_time(2, 2).unwrap(), 0);
        assert_eq!(d.exposure_time(2, 5).unwrap(), 3);
        assert_eq!(d.exposure_time(6, 7).unwrap(), 1);
        assert!(d.exposure_time(0, 1).is_err());
        assert!(d.exposure_time(7, 1).is_err());
        assert!(d.exposure_time(1, 8).is_err());
    }

    #[test]
    fn treatment_examples() {
        let d = d6();
        assert_eq!(d.treatment_indicator(3, 3).unwrap(), 0);
        assert_eq!(d.treatment_indicator(3, 4).unwrap(), 1);
        for q in 1..=6 {
            let treated: usize = (1..=7)
                .map(|j| d.treatment_indicator(q, j).unwrap() as usize)
                .sum();
            assert_eq!(treated, 7 - q);
        }
    }

    #[test]
    fn indicator_matches_exposure() {
        let d = StudyDesign::new(4, 2, 3, 2).unwrap();
        assert_eq!(d.num_periods(), 7);
        for q in 1..=4 {
            let mut last = 0;
            for j in 1..=d.num_periods() {
                let x = d.treatment_indicator(q, j).unwrap();
                assert_eq!(x == 1, d.exposure_time(q, j).unwrap() >= 1);
                assert!(x >= last);
                last = x;
            }
        }
    }

    #[test]
    fn exposure_multiset_standard() {
        let d = d6();
        let mut count = [0usize; 7];
        for q in 1..=6 {
            let seen: alloc::vec::Vec<usize> = (1..=7)
                .map(|j| d.exposure_time(q, j).unwrap())
                .filter(|&s| s > 0)
                .collect();
            assert_eq!(seen, (1..=7 - q).collect::<alloc::vec::Vec<_>>());
            for s in seen {
                count[s] += 1;
            }
        }
        assert_eq!(count[6], 1);
    }

    #[test]
    fn phi_examples() {
        // ICC 0.05 expressed as tau2 = 0.05, sigma2 = 0.95.
        assert!((derive_phi(0.05, 0.95, 10).unwrap() - 0.34).abs() < 0.005);
        assert!((derive_phi(0.05, 0.95, 50).unwrap() - 0.72).abs() < 0.005);
        assert!((derive_phi(0.25, 4.0, 20).unwrap() - 0.556).abs() < 0.005);
        assert!(derive_phi(0.1, 0.0, 10).is_err());
        assert!(derive_phi(0.1, 1.0, 0).is_err());
    }

    #[test]
    fn phi_monotone() {
        let mut prev = -1.0;
        for n in 1..40 {
            let p = derive_phi(0.1, 1.0, n).unwrap();
            assert!(p > prev);
            prev = p;
        }
        let mut prev = -1.0;
        for t in 0..20 {
            let p = derive_phi(t as f64 * 0.05, 1.0, 5).unwrap();
            assert!(p > prev);
            prev = p;
        }
    }

    #[test]
    fn rejects_degenerate_designs() {
        assert!(StudyDesign::standard(1, 1, 1).is_err());
        assert!(StudyDesign::standard(3, 0, 1).is_err());
        assert!(StudyDesign::standard(3, 1, 0).is_err());
    }
}
