//! Replicated-data checks of the generator, likelihood ratio test and MEC sampler.

use swedge_core::datagen::{canonical_curve, generate, substream_seed, CurveKind, GenParams};
use swedge_core::mec::{fit_mec, mec_estimate, MecConfig, MecPrior};
use swedge_core::models::lrt_it_vs_eti;
use swedge_core::{EstimandKind, RiemannMethod, StudyDesign};

fn reference_design() -> StudyDesign {
    StudyDesign::standard(6, 4, 20).unwrap()
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn sample_var(v: &[f64]) -> f64 {
    let m = mean(v);
    v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64
}

/// ANOVA estimate of the ICC. Clusters in the same sequence share every fixed
/// effect, so the spread of their cluster-period means estimates
/// `tau^2 + sigma^2 / K`.
#[test]
fn reference_icc() {
    let design = reference_design();
    let curve = canonical_curve(CurveKind::A, 6).unwrap();
    let params = GenParams::reference(7);
    let k = design.cluster_size();
    let (mut within, mut between) = (Vec::new(), Vec::new());
    for r in 0..200 {
        let data = generate(&design, &curve, &params, substream_seed(11, r)).unwrap();
        let rows = data.rows();
        let mut cell = vec![vec![0.0; 7]; design.num_clusters()];
        for c in 0..design.num_clusters() {
            for j in 0..7 {
                let base = (c * 7 + j) * k;
                let ys: Vec<f64> = rows[base..base + k].iter().map(|o| o.outcome).collect();
                assert!(rows[base..base + k].iter().all(|o| o.cluster == c + 1 && o.period == j + 1));
                within.push(sample_var(&ys));
                cell[c][j] = mean(&ys);
            }
        }
        for q in 0..6 {
            for j in 0..7 {
                let means: Vec<f64> = (0..4).map(|i| cell[q * 4 + i][j]).collect();
                between.push(sample_var(&means));
            }
        }
    }
    let sigma2 = mean(&within);
    let tau2 = mean(&between) - sigma2 / k as f64;
    let icc = tau2 / (tau2 + sigma2);
    assert!((sigma2 - 4.0).abs() < 0.05, "sigma2 = {sigma2}");
    assert!((icc - 0.059).abs() < 0.005, "icc = {icc}");
}

#[test]
fn control_means_follow_time_trend() {
    let design = reference_design();
    let curve = canonical_curve(CurveKind::B, 6).unwrap();
    let params = GenParams::reference(7);
    let mut sums = [0.0; 7];
    let mut counts = [0usize; 7];
    for r in 0..400 {
        let data = generate(&design, &curve, &params, substream_seed(12, r)).unwrap();
        for o in data.rows().iter().filter(|o| o.treated == 0) {
            sums[o.period - 1] += o.outcome;
            counts[o.period - 1] += 1;
        }
    }
    // Period 7 has no control clusters.
    for j in 0..6 {
        let m = sums[j] / counts[j] as f64;
        let expected = params.mu + params.time_trend[j];
        // Cluster intercepts dominate the noise: sd ~ tau / sqrt(400 * controls).
        let clusters = (counts[j] / 20 / 400) as f64;
        let se = (0.25 / (400.0 * clusters) + 4.0 / counts[j] as f64).sqrt();
        assert!((m - expected).abs() < 4.0 * se, "period {}: {m} vs {expected}", j + 1);
    }
}

#[test]
fn random_treatment_deviation_variance() {
    // K = 1 and tiny sigma: each cluster's treated-minus-control residual is its
    // treatment deviation.
    let design = StudyDesign::standard(6, 170, 1).unwrap();
    let curve = canonical_curve(CurveKind::C, 6).unwrap();
    let mut params = GenParams::reference(7);
    params.sigma = 1e-6;
    params.nu = 0.8;
    params.rho_re = -0.2;
    let data = generate(&design, &curve, &params, 99).unwrap();
    assert!(design.num_clusters() >= 1000);
    let mut dev = Vec::new();
    for c in 1..=design.num_clusters() {
        let (mut t, mut nt, mut u, mut nu) = (0.0, 0.0, 0.0, 0.0);
        for o in data.rows().iter().filter(|o| o.cluster == c) {
            let fixed = params.mu + params.time_trend[o.period - 1];
            if o.treated == 1 {
                t += o.outcome - fixed - params.delta * curve.value(o.exposure).unwrap();
                nt += 1.0;
            } else {
                u += o.outcome - fixed;
                nu += 1.0;
            }
        }
        dev.push(t / nt - u / nu);
    }
    let v = sample_var(&dev);
    assert!((v / 0.64 - 1.0).abs() < 0.1, "variance {v}");
}

#[test]
fn lrt_calibration_and_power() {
    let design = reference_design();
    let params = GenParams::reference(7);
    let n = 1000;
    let rate = |kind: CurveKind, salt: u64| -> f64 {
        let curve = canonical_curve(kind, 6).unwrap();
        let mut rejections = 0;
        for r in 0..n {
            let data = generate(&design, &curve, &params, substream_seed(salt, r)).unwrap();
            let t = lrt_it_vs_eti(&data).unwrap();
            assert!(t.statistic >= 0.0);
            assert_eq!(t.df, 5);
            if t.p < 0.05 {
                rejections += 1;
            }
        }
        rejections as f64 / n as f64
    };
    let null = rate(CurveKind::A, 13);
    assert!((null - 0.05).abs() <= 0.02, "null rejection rate {null}");
    let power = rate(CurveKind::B, 14);
    assert!(power > 0.5, "power {power}");
}

fn mec_config(seed: u64) -> MecConfig {
    MecConfig {
        seed,
        ..MecConfig::default()
    }
}

#[test]
fn mec_draws_respect_support_and_recover_truth() {
    let design = reference_design();
    let curve = canonical_curve(CurveKind::C, 6).unwrap();
    let mut params = GenParams::reference(7);
    params.sigma = 0.05;
    params.tau = 0.1;
    let data = generate(&design, &curve, &params, 21).unwrap();
    let draws = fit_mec(&data, &MecPrior::symmetric(6).unwrap(), &mec_config(5)).unwrap();
    assert_eq!(draws.draws.len(), 4 * 2500);
    for d in &draws.draws {
        assert!(d.alpha.iter().all(|&a| a >= 0.0));
        assert!((d.alpha.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        assert!((0.01..=100.0).contains(&d.omega));
        let c = d.curve();
        assert!(c.windows(2).all(|w| w[1] >= w[0]));
    }
    let post = draws.posterior_mean_curve();
    for (s, v) in post.iter().enumerate() {
        let truth = 0.5 * curve.value(s + 1).unwrap();
        assert!((v - truth).abs() < 0.05, "s = {}: {v} vs {truth}", s + 1);
    }
    let delta = mean(&draws.draws.iter().map(|d| d.delta).collect::<Vec<_>>());
    assert!((delta / 0.5 - 1.0).abs() < 0.05, "delta {delta}");
    assert!(draws.rhat.delta < 1.1);
}

#[test]
fn mec_is_reproducible_and_prior_sensitive() {
    let design = reference_design();
    let curve = canonical_curve(CurveKind::D, 6).unwrap();
    let data = generate(&design, &curve, &GenParams::reference(7), 31).unwrap();
    let informative = MecPrior::informative(6).unwrap();
    let a = fit_mec(&data, &informative, &mec_config(1)).unwrap();
    let b = fit_mec(&data, &informative, &mec_config(1)).unwrap();
    assert_eq!(a.draws, b.draws);

    // Zero noise in the estimand: a point-mass posterior gives a zero-width interval.
    let mut point = a.clone();
    let first = point.draws[0].clone();
    point.draws.iter_mut().for_each(|d| *d = first.clone());
    let e = mec_estimate(&point, EstimandKind::Lte, RiemannMethod::Right, 0.95).unwrap();
    assert_eq!(e.se, 0.0);
    assert_eq!(e.ci_lo, e.ci_hi);
    assert!((e.estimate - first.delta).abs() < 1e-12);

    // Weakly identified data (half the clusters, large sigma) keep the prior visible.
    let small = StudyDesign::standard(6, 2, 10).unwrap();
    let mut params = GenParams::reference(7);
    params.sigma = 4.0;
    let diffs: Vec<f64> = (0..20)
        .map(|r| {
            let data = generate(&small, &curve, &params, substream_seed(32, r)).unwrap();
            let lte = |prior: &MecPrior| {
                let d = fit_mec(&data, prior, &mec_config(r)).unwrap();
                mec_estimate(&d, EstimandKind::Lte, RiemannMethod::Right, 0.95).unwrap().estimate
            };
            lte(&MecPrior::symmetric(6).unwrap()) - lte(&informative)
        })
        .collect();
    let m = mean(&diffs);
    let se = (sample_var(&diffs) / diffs.len() as f64).sqrt();
    assert!(m.abs() > 2.0 * se, "mean difference {m} with se {se}");
}
