//! Parallel execution of simulation scenarios and MCMC chains.
//!
//! Work items carry their own seeds, so results are identical for any number
//! of worker threads.

use std::io::Write;

use rayon::prelude::*;
use swedge_core::mec::{MecConfig, MecDraws, MecPrior, MecSampler};
use swedge_core::sim::{self, ReplicateRecord, SimResult, SimRow, SimScenario};
use swedge_core::TrialDataset;

use crate::error::{Error, Result};
use crate::format::fmt_num;

/// Output columns of [`write_results`].
pub const RESULT_HEADER: [&str; 11] = [
    "scenario",
    "curve",
    "model",
    "estimand",
    "bias",
    "bias_mcse",
    "coverage",
    "mse",
    "power",
    "avg_pointwise_mse",
    "n_fail",
];

fn pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Io(format!("cannot start worker threads: {e}")))
}

/// Runs every replicate of `scenario` on `jobs` worker threads.
pub fn run_scenario(scenario: &SimScenario, jobs: usize) -> Result<SimResult> {
    scenario.validate()?;
    let records = pool(jobs)?.install(|| {
        (0..scenario.replicates)
            .into_par_iter()
            .map(|i| sim::run_replicate(scenario, i))
            .collect::<swedge_core::Result<Vec<ReplicateRecord>>>()
    })?;
    Ok(sim::aggregate(scenario, &records)?)
}

/// Runs scenarios one after another, each with `jobs` workers, and
/// concatenates their rows.
pub fn run_scenarios(scenarios: &[SimScenario], jobs: usize) -> Result<Vec<SimRow>> {
    let mut rows = Vec::new();
    for sc in scenarios {
        rows.extend(run_scenario(sc, jobs)?.rows);
    }
    Ok(rows)
}

/// Fits the MEC model with one chain per worker.
pub fn run_mec(data: &TrialDataset, prior: &MecPrior, config: &MecConfig, jobs: usize) -> Result<MecDraws> {
    let sampler = MecSampler::new(data, prior, config)?;
    let chains = pool(jobs)?.install(|| {
        (0..config.n_chains)
            .into_par_iter()
            .map(|c| sampler.run_chain(c))
            .collect::<Vec<_>>()
    });
    Ok(MecDraws::from_chains(chains, config.n_warmup)?)
}

pub fn write_results<W: Write>(writer: W, rows: &[SimRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(RESULT_HEADER)?;
    for r in rows {
        let m = &r.metrics;
        w.write_record([
            r.scenario.clone(),
            r.curve.label().to_string(),
            r.model.clone(),
            r.estimand.clone(),
            fmt_num(m.bias),
            fmt_num(m.bias_mcse),
            fmt_num(m.coverage),
            fmt_num(m.mse),
            fmt_num(m.power),
            fmt_num(r.avg_pointwise_mse),
            r.n_fail.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::Io(e.to_string()))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use swedge_core::datagen::CurveKind;
    use swedge_core::sim::scenario_set;

    #[test]
    fn thread_count_does_not_change_results() {
        let mut sc = scenario_set("reti", CurveKind::B, 12, 3).unwrap().remove(0);
        sc.replicates = 12;
        let one = run_scenario(&sc, 1).unwrap();
        let four = run_scenario(&sc, 4).unwrap();
        assert_eq!(one, four);
        assert_eq!(one, sim::run_scenario(&sc).unwrap());
    }

    #[test]
    fn parallel_chains_match_sequential() {
        let sc = scenario_set("base", CurveKind::C, 1, 9).unwrap().remove(0);
        let data = swedge_core::datagen::generate(&sc.design, &sc.truth_curve, &sc.params, 1).unwrap();
        let prior = MecPrior::informative(6).unwrap();
        let config = MecConfig {
            n_warmup: 200,
            n_samples: 100,
            ..MecConfig::default()
        };
        let par = run_mec(&data, &prior, &config, 3).unwrap();
        let seq = swedge_core::mec::fit_mec(&data, &prior, &config).unwrap();
        assert_eq!(par, seq);
    }

    #[test]
    fn result_csv_columns() {
        let sc = scenario_set("null", CurveKind::A, 3, 1).unwrap().remove(0);
        let rows = run_scenario(&sc, 2).unwrap().rows;
        let mut buf = Vec::new();
        write_results(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), RESULT_HEADER.join(","));
        assert_eq!(lines.count(), rows.len());
    }
}
