use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{ArgGroup, Args, CommandFactory, Parser, Subcommand};
use serde::Serialize;
use serde_json::Value;

use swedge::format::{fmt_num, json_num};
use swedge::{harness, io};
use swedge_core::datagen::{canonical_curve, generate, CurveKind, GenParams};
use swedge_core::estimands::{effect_curve_estimate, estimate};
use swedge_core::mec::{mec_estimate, MecConfig, MecDraws, MecPrior};
use swedge_core::models::{fit, lrt};
use swedge_core::sim::{scenario_set, SimModel, SCENARIO_SETS};
use swedge_core::weights::{numeric_weights, weight_profile, CorrelationSpec};
use swedge_core::{EstimandEstimate, EstimandKind, ModelKind, ModelSpec, RiemannMethod, StudyDesign, TrialDataset};

/// Stepped-wedge trial analysis with exposure-time-varying treatment effects.
#[derive(Parser)]
#[command(name = "swedge", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Weights linking point effects to the expected immediate-treatment estimate.
    Weights(WeightsArgs),
    /// Fit a model and report one estimand as JSON.
    Analyze(AnalyzeArgs),
    /// Fit a model and report the pointwise effect curve as CSV.
    Curve(CurveArgs),
    /// Likelihood ratio test between nested models.
    Lrt(LrtArgs),
    /// Draw a dataset from the generating model.
    Generate(GenerateArgs),
    /// Run simulation studies and write operating characteristics as CSV.
    Simulate(SimulateArgs),
}

#[derive(Args)]
#[command(group(ArgGroup::new("structure").required(true).args(["phi", "corr"])))]
struct WeightsArgs {
    #[arg(long)]
    sequences: usize,
    /// Cluster-mean correlation of the exchangeable model.
    #[arg(long)]
    phi: Option<f64>,
    /// `nested:WITHIN,BETWEEN` or `rte:CONTROL,TREATED,CROSS`, computed numerically.
    #[arg(long, value_parser = parse_corr)]
    corr: Option<CorrelationSpec>,
    /// Individuals per cluster-period for `--corr`.
    #[arg(long, default_value_t = 2)]
    cluster_size: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ModelArgs {
    #[arg(long)]
    data: PathBuf,
    /// `it`, `eti`, `reti:S`, `ncs:D` or `mec`.
    #[arg(long, value_parser = parse_model)]
    model: ModelChoice,
    /// Add a random treatment effect (linear mixed models only).
    #[arg(long)]
    rte: bool,
    #[arg(long, default_value_t = 0.95)]
    level: f64,
    /// Dirichlet concentration for `mec`, e.g. `5,5,5,1,1,1`.
    #[arg(long, value_parser = MecPrior::parse)]
    prior: Option<MecPrior>,
    #[arg(long, default_value_t = 4)]
    chains: usize,
    #[arg(long, default_value_t = 2500)]
    warmup: usize,
    #[arg(long, default_value_t = 2500)]
    samples: usize,
    #[arg(long, env = "SWEDGE_SEED")]
    seed: Option<u64>,
    #[arg(long, default_value_t = default_jobs())]
    jobs: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// `tate:S1:S2`, `pte:S0` or `lte`.
    #[arg(long, value_parser = EstimandKind::parse)]
    estimand: EstimandKind,
    #[arg(long, value_parser = RiemannMethod::parse, default_value = "right")]
    method: RiemannMethod,
}

#[derive(Args)]
struct CurveArgs {
    #[command(flatten)]
    model: ModelArgs,
}

#[derive(Args)]
struct LrtArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "it", value_parser = parse_lmm)]
    reduced: ModelSpec,
    #[arg(long, default_value = "eti", value_parser = parse_lmm)]
    full: ModelSpec,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, default_value_t = 6)]
    sequences: usize,
    #[arg(long, default_value_t = 4)]
    clusters_per_sequence: usize,
    #[arg(long, default_value_t = 20)]
    cluster_size: usize,
    #[arg(long, default_value_t = 0)]
    extra_periods: usize,
    #[arg(long, value_parser = CurveKind::parse, default_value = "a")]
    curve: CurveKind,
    #[arg(long, default_value_t = 1.0)]
    mu: f64,
    #[arg(long, default_value_t = 0.5)]
    delta: f64,
    #[arg(long, default_value_t = 2.0)]
    sigma: f64,
    #[arg(long, default_value_t = 0.5)]
    tau: f64,
    #[arg(long, default_value_t = 0.0)]
    nu: f64,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    rho: f64,
    /// Total change of the linear time trend from the first to the last period.
    #[arg(long, default_value_t = -0.5, allow_hyphen_values = true)]
    trend: f64,
    #[arg(long, env = "SWEDGE_SEED")]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    /// Comma-separated studies: base, reti, extra, rte, dirichlet, null.
    #[arg(long, value_delimiter = ',', required = true)]
    scenario: Vec<String>,
    #[arg(long, value_delimiter = ',', value_parser = CurveKind::parse, default_value = "a,b,c,d")]
    curves: Vec<CurveKind>,
    /// Replace each study's models, e.g. `it,eti,ncs:4,mec`.
    #[arg(long, value_delimiter = ',')]
    models: Option<Vec<String>>,
    #[arg(long)]
    replicates: Option<usize>,
    /// Use 1000 replicates instead of 500.
    #[arg(long, conflicts_with = "replicates")]
    full: bool,
    #[arg(long, env = "SWEDGE_SEED")]
    seed: u64,
    #[arg(long, default_value_t = default_jobs())]
    jobs: usize,
    #[arg(long)]
    chains: Option<usize>,
    #[arg(long)]
    warmup: Option<usize>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write the first replicate dataset of each scenario to this directory.
    #[arg(long)]
    emit_data: Option<PathBuf>,
}

#[derive(Clone, Copy)]
enum ModelChoice {
    Lmm(ModelKind),
    Mec,
}

fn default_jobs() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn parse_model(s: &str) -> Result<ModelChoice, String> {
    if s.trim().eq_ignore_ascii_case("mec") {
        return Ok(ModelChoice::Mec);
    }
    ModelKind::parse(s).map(ModelChoice::Lmm).map_err(|e| e.to_string())
}

fn parse_lmm(s: &str) -> Result<ModelSpec, String> {
    match SimModel::parse(s, 1).map_err(|e| e.to_string())? {
        SimModel::Lmm(spec) => Ok(spec),
        SimModel::Mec(_) => Err("the likelihood ratio test needs linear mixed models".into()),
    }
}

fn parse_corr(s: &str) -> Result<CorrelationSpec, String> {
    let (kind, values) = s.split_once(':').ok_or("expected nested:A,B or rte:A,B,C")?;
    let v: Vec<f64> = values
        .split(',')
        .map(|x| x.trim().parse::<f64>().map_err(|e| format!("'{x}': {e}")))
        .collect::<Result<_, _>>()?;
    match (kind, v.as_slice()) {
        ("nested", &[within, between]) => Ok(CorrelationSpec::NestedExchangeable { within, between }),
        ("rte", &[control, treated, cross]) => Ok(CorrelationSpec::RandomTreatment { control, treated, cross }),
        _ => Err(format!("cannot read correlation structure '{s}'")),
    }
}

enum Failure {
    /// Bad invocation; reported with usage text, exit code 1.
    Usage(clap::Error),
    /// Data or estimation problem, exit code 2.
    Data(String),
}

impl From<swedge::Error> for Failure {
    fn from(e: swedge::Error) -> Self {
        Failure::Data(e.to_string())
    }
}

impl From<swedge_core::Error> for Failure {
    fn from(e: swedge_core::Error) -> Self {
        Failure::Data(e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Data(e.to_string())
    }
}

fn usage(sub: &str, kind: ErrorKind, msg: impl std::fmt::Display) -> Failure {
    let mut cmd = Cli::command();
    let cmd = cmd.find_subcommand_mut(sub).expect("known subcommand");
    Failure::Usage(cmd.error(kind, msg))
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>, Failure> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).map_err(|e| Failure::Data(format!("{}: {e}", p.display())))?,
        )),
        None => Box::new(BufWriter::new(std::io::stdout().lock())),
    })
}

fn write_csv(path: Option<&Path>, header: &[&str], rows: Vec<Vec<String>>) -> Result<(), Failure> {
    let mut w = csv::Writer::from_writer(output(path)?);
    w.write_record(header).map_err(swedge::Error::from)?;
    for r in rows {
        w.write_record(r).map_err(swedge::Error::from)?;
    }
    w.flush()?;
    Ok(())
}

fn write_json(path: Option<&Path>, value: &impl Serialize) -> Result<(), Failure> {
    let mut w = output(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| Failure::Data(e.to_string()))?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn weights(a: WeightsArgs) -> Result<(), Failure> {
    let profile = match (a.phi, a.corr) {
        (Some(phi), _) => weight_profile(a.sequences, phi)?,
        (None, Some(corr)) => {
            let design = StudyDesign::standard(a.sequences, 1, a.cluster_size)?;
            numeric_weights(&design, &corr)?
        }
        (None, None) => unreachable!("clap requires one of --phi and --corr"),
    };
    let rows = profile
        .weights
        .iter()
        .enumerate()
        .map(|(i, w)| vec![(i + 1).to_string(), fmt_num(*w)])
        .collect();
    write_csv(a.out.as_deref(), &["s", "weight"], rows)
}

enum Fitted {
    Lmm(swedge_core::FittedModel),
    Mec(MecDraws),
}

fn fit_model(a: &ModelArgs, sub: &str) -> Result<(TrialDataset, Fitted), Failure> {
    if !(a.level > 0.0 && a.level < 1.0) {
        return Err(usage(sub, ErrorKind::ValueValidation, "--level must lie in (0, 1)"));
    }
    let data = io::read_dataset_file(&a.data)?;
    let fitted = match a.model {
        ModelChoice::Lmm(kind) => {
            if a.prior.is_some() {
                return Err(usage(sub, ErrorKind::ArgumentConflict, "--prior only applies to --model mec"));
            }
            let spec = ModelSpec::new(kind).with_random_treatment(a.rte).with_ci_level(a.level)?;
            Fitted::Lmm(fit(&data, &spec)?)
        }
        ModelChoice::Mec => {
            if a.rte {
                return Err(usage(sub, ErrorKind::ArgumentConflict, "--rte does not apply to --model mec"));
            }
            let Some(seed) = a.seed else {
                return Err(usage(
                    sub,
                    ErrorKind::MissingRequiredArgument,
                    "--model mec needs --seed or SWEDGE_SEED",
                ));
            };
            let t = data.design().max_exposure();
            let prior = match &a.prior {
                Some(p) => p.clone(),
                None => MecPrior::informative(t)?,
            };
            let config = MecConfig {
                n_chains: a.chains,
                n_warmup: a.warmup,
                n_samples: a.samples,
                seed,
            };
            Fitted::Mec(harness::run_mec(&data, &prior, &config, a.jobs)?)
        }
    };
    Ok((data, fitted))
}

#[derive(Serialize)]
struct EstimateJson {
    estimate: Value,
    se: Value,
    ci_lo: Value,
    ci_hi: Value,
    z: Value,
    p: Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    rhat: Option<Value>,
    #[serde(skip_serializing_if = "Option::is_none")]
    acceptance: Option<Value>,
    #[serde(skip_serializing_if = "Option::is_none")]
    warnings: Option<Vec<String>>,
}

impl From<&EstimandEstimate> for EstimateJson {
    fn from(e: &EstimandEstimate) -> Self {
        Self {
            estimate: json_num(e.estimate),
            se: json_num(e.se),
            ci_lo: json_num(e.ci_lo),
            ci_hi: json_num(e.ci_hi),
            z: json_num(e.z),
            p: json_num(e.p),
            rhat: None,
            acceptance: None,
            warnings: None,
        }
    }
}

fn analyze(a: AnalyzeArgs) -> Result<(), Failure> {
    let (_, fitted) = fit_model(&a.model, "analyze")?;
    let json = match fitted {
        Fitted::Lmm(f) => EstimateJson::from(&estimate(&f, a.estimand, a.method)?),
        Fitted::Mec(draws) => {
            let e = mec_estimate(&draws, a.estimand, a.method, a.model.level)?;
            let r = &draws.rhat;
            let acc = draws.mean_acceptance();
            let mut json = EstimateJson::from(&e);
            json.rhat = Some(serde_json::json!({
                "delta": json_num(r.delta),
                "omega": json_num(r.omega),
                "sigma": json_num(r.sigma),
                "tau": json_num(r.tau),
                "alpha": r.alpha.iter().map(|&x| json_num(x)).collect::<Vec<_>>(),
            }));
            json.acceptance = Some(serde_json::json!({
                "effect": json_num(acc.effect),
                "omega": json_num(acc.omega),
                "scales": json_num(acc.scales),
            }));
            json.warnings = Some(draws.warnings.clone());
            json
        }
    };
    for w in json.warnings.iter().flatten() {
        eprintln!("warning: {w}");
    }
    write_json(a.model.out.as_deref(), &json)
}

fn curve(a: CurveArgs) -> Result<(), Failure> {
    let (data, fitted) = fit_model(&a.model, "curve")?;
    let points: Vec<(usize, EstimandEstimate)> = match fitted {
        Fitted::Lmm(f) => effect_curve_estimate(&f)?,
        Fitted::Mec(draws) => (1..=data.design().max_exposure())
            .map(|s| {
                mec_estimate(&draws, EstimandKind::Pte(s), RiemannMethod::Right, a.model.level).map(|e| (s, e))
            })
            .collect::<swedge_core::Result<_>>()?,
    };
    let rows = points
        .iter()
        .map(|(s, e)| vec![s.to_string(), fmt_num(e.estimate), fmt_num(e.ci_lo), fmt_num(e.ci_hi)])
        .collect();
    write_csv(a.model.out.as_deref(), &["s", "estimate", "ci_lo", "ci_hi"], rows)
}

fn run_lrt(a: LrtArgs) -> Result<(), Failure> {
    let data = io::read_dataset_file(&a.data)?;
    let t = lrt(&data, &a.reduced, &a.full)?;
    write_json(
        a.out.as_deref(),
        &serde_json::json!({
            "statistic": json_num(t.statistic),
            "df": t.df,
            "p": json_num(t.p),
            "reduced_log_likelihood": json_num(t.reduced_log_likelihood),
            "full_log_likelihood": json_num(t.full_log_likelihood),
        }),
    )
}

fn run_generate(a: GenerateArgs) -> Result<(), Failure> {
    let design = StudyDesign::new(a.sequences, a.clusters_per_sequence, a.cluster_size, a.extra_periods)?;
    let j = design.num_periods();
    let base = a.sequences.max(6);
    let curve = canonical_curve(a.curve, base)?.extend_flat(design.max_exposure().max(base));
    let params = GenParams {
        mu: a.mu,
        delta: a.delta,
        sigma: a.sigma,
        tau: a.tau,
        nu: a.nu,
        rho_re: a.rho,
        time_trend: GenParams::linear_trend(j, a.trend),
    };
    let data = generate(&design, &curve, &params, a.seed)?;
    match &a.out {
        Some(p) => io::write_dataset_file(p, &data)?,
        None => io::write_dataset(std::io::stdout().lock(), &data)?,
    }
    Ok(())
}

fn simulate(a: SimulateArgs) -> Result<(), Failure> {
    let replicates = a.replicates.unwrap_or(if a.full { 1000 } else { 500 });
    if replicates == 0 {
        return Err(usage("simulate", ErrorKind::ValueValidation, "--replicates must be positive"));
    }
    for name in &a.scenario {
        if !SCENARIO_SETS.contains(&name.as_str()) {
            return Err(usage(
                "simulate",
                ErrorKind::InvalidValue,
                format!("unknown scenario '{name}' (expected one of {})", SCENARIO_SETS.join(", ")),
            ));
        }
    }
    let mut scenarios = Vec::new();
    for name in &a.scenario {
        for &c in &a.curves {
            scenarios.extend(scenario_set(name, c, replicates, a.seed)?);
        }
    }
    for sc in &mut scenarios {
        if let Some(models) = &a.models {
            sc.models = models
                .iter()
                .map(|m| SimModel::parse(m, sc.design.max_exposure()))
                .collect::<swedge_core::Result<_>>()
                .map_err(|e| usage("simulate", ErrorKind::InvalidValue, e))?;
        }
        sc.mcmc.n_chains = a.chains.unwrap_or(sc.mcmc.n_chains);
        sc.mcmc.n_warmup = a.warmup.unwrap_or(sc.mcmc.n_warmup);
        sc.mcmc.n_samples = a.samples.unwrap_or(sc.mcmc.n_samples);
    }
    if let Some(dir) = &a.emit_data {
        std::fs::create_dir_all(dir)?;
        for sc in &scenarios {
            let seed = swedge_core::datagen::substream_seed(sc.seed, 0);
            let data = generate(&sc.design, &sc.truth_curve, &sc.params, seed)?;
            let path = dir.join(format!("{}-{}-rep0.csv", sc.name, sc.curve.label()));
            io::write_dataset_file(&path, &data)?;
        }
    }
    let rows = harness::run_scenarios(&scenarios, a.jobs)?;
    harness::write_results(output(a.out.as_deref())?, &rows)?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    let result = match cli.command {
        Command::Weights(a) => weights(a),
        Command::Analyze(a) => analyze(a),
        Command::Curve(a) => curve(a),
        Command::Lrt(a) => run_lrt(a),
        Command::Generate(a) => run_generate(a),
        Command::Simulate(a) => simulate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            let _ = e.print();
            ExitCode::from(1)
        }
        Err(Failure::Data(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
