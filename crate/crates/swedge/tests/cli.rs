use std::path::Path;
use std::process::{Command, Output};

use swedge_core::datagen::{generate, substream_seed, CurveKind};
use swedge_core::sim::scenario_set;
use tempfile::TempDir;

fn swedge(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_swedge"))
        .args(args)
        .env_remove("SWEDGE_SEED")
        .output()
        .unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn json(out: &Output) -> serde_json::Value {
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_str(&stdout(out)).unwrap()
}

fn num(v: &serde_json::Value) -> f64 {
    v.to_string().parse().unwrap()
}

fn generate_file(dir: &Path, name: &str, extra: &[&str]) -> String {
    let path = dir.join(name);
    let path = path.to_str().unwrap().to_string();
    let mut args = vec!["generate", "--out", path.as_str()];
    args.extend_from_slice(extra);
    let out = swedge(&args);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    path
}

#[test]
fn independence_weights() {
    let out = swedge(&["weights", "--sequences", "4", "--phi", "0"]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("s,weight"));
    let w: Vec<f64> = lines.map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    for (got, want) in w.iter().zip([0.6, 0.3, 0.1, 0.0]) {
        assert!((got - want).abs() < 1e-12, "{w:?}");
    }
    // Every value carries at least ten significant digits.
    assert!(text.contains("0.6000000000"));
}

#[test]
fn numeric_weights_from_cli() {
    let out = swedge(&["weights", "--sequences", "3", "--corr", "rte:0.2,0.3,0.15"]);
    assert_eq!(out.status.code(), Some(0));
    let w: Vec<f64> = stdout(&out)
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert_eq!(w.len(), 3);
    assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-9);
}

#[test]
fn usage_errors_exit_one() {
    let out = swedge(&["analyze", "--model", "eti", "--estimand", "lte"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
    assert_eq!(swedge(&["weights", "--sequences", "4", "--phi", "0", "--bogus"]).status.code(), Some(1));
    assert_eq!(swedge(&["weights", "--sequences", "4"]).status.code(), Some(1));
    assert_eq!(swedge(&["generate"]).status.code(), Some(1), "seed is required");
    assert_eq!(swedge(&["simulate", "--scenario", "nope", "--seed", "1"]).status.code(), Some(1));
    let dir = TempDir::new().unwrap();
    let data = generate_file(dir.path(), "d.csv", &["--seed", "1"]);
    let out = swedge(&["analyze", "--data", &data, "--model", "mec", "--estimand", "lte"]);
    assert_eq!(out.status.code(), Some(1), "mec without a seed");
    let out = swedge(&["analyze", "--data", &data, "--model", "ncs:x", "--estimand", "lte"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(swedge(&["--help"]).status.code(), Some(0));
    assert_eq!(swedge(&["analyze", "--help"]).status.code(), Some(0));
}

#[test]
fn data_errors_exit_two() {
    let dir = TempDir::new().unwrap();
    let bad_header = dir.path().join("h.csv");
    std::fs::write(&bad_header, "cluster,seq,period,treated,exposure,outcome\n1,1,1,0,0,1\n").unwrap();
    let bad_value = dir.path().join("v.csv");
    std::fs::write(&bad_value, "cluster,sequence,period,treated,exposure,outcome\n1,1,1,0,0,x\n").unwrap();
    for f in [&bad_header, &bad_value, &dir.path().join("missing.csv")] {
        let out = swedge(&["analyze", "--data", f.to_str().unwrap(), "--model", "eti", "--estimand", "lte"]);
        assert_eq!(out.status.code(), Some(2), "{}", f.display());
    }
    let data = generate_file(dir.path(), "d.csv", &["--seed", "1"]);
    let out = swedge(&["analyze", "--data", &data, "--model", "reti:9", "--estimand", "lte"]);
    assert_eq!(out.status.code(), Some(2));
    let out = swedge(&["analyze", "--data", &data, "--model", "eti", "--estimand", "tate:0:8"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn noiseless_data_give_the_injected_effect() {
    let dir = TempDir::new().unwrap();
    let common = ["--sigma", "1e-9", "--tau", "0", "--seed", "4"];
    let flat = generate_file(dir.path(), "a.csv", &[&["--curve", "a"][..], &common].concat());
    let out = swedge(&["analyze", "--data", &flat, "--model", "eti", "--estimand", "tate:0:6"]);
    let v = json(&out);
    assert!((num(&v["estimate"]) - 0.5).abs() < 1e-6, "{v}");

    let c = generate_file(dir.path(), "c.csv", &[&["--curve", "c"][..], &common].concat());
    let truth: f64 = (1..=6).map(|s| 0.5 * (1.0 - 0.5f64.powi(s)) / (1.0 - 0.5f64.powi(6))).sum::<f64>() / 6.0;
    for model in ["eti", "ncs:6"] {
        let v = json(&swedge(&["analyze", "--data", &c, "--model", model, "--estimand", "tate:0:6"]));
        assert!((num(&v["estimate"]) - truth).abs() < 1e-6, "{model}: {v}");
        for key in ["se", "ci_lo", "ci_hi", "z", "p"] {
            assert!(v.get(key).is_some(), "{key}");
        }
    }
}

#[test]
fn seed_falls_back_to_environment() {
    let dir = TempDir::new().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    let out = Command::new(env!("CARGO_BIN_EXE_swedge"))
        .args(["generate", "--out", a.to_str().unwrap()])
        .env("SWEDGE_SEED", "17")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    generate_file(dir.path(), "b.csv", &["--seed", "17"]);
    assert_eq!(std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
}

#[test]
fn curve_and_lrt_outputs() {
    let dir = TempDir::new().unwrap();
    let data = generate_file(dir.path(), "d.csv", &["--curve", "b", "--seed", "2"]);
    let out = swedge(&["curve", "--data", &data, "--model", "eti"]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    assert_eq!(text.lines().next(), Some("s,estimate,ci_lo,ci_hi"));
    assert_eq!(text.lines().count(), 7);

    let v = json(&swedge(&["lrt", "--data", &data]));
    assert_eq!(v["df"], 5);
    assert!(num(&v["statistic"]) >= 0.0);
}

#[test]
fn mec_reports_diagnostics() {
    let dir = TempDir::new().unwrap();
    let data = generate_file(dir.path(), "d.csv", &["--curve", "d", "--seed", "3"]);
    let args = [
        "analyze", "--data", &data, "--model", "mec", "--prior", "5,5,5,1,1,1", "--estimand", "lte", "--chains", "2",
        "--warmup", "400", "--samples", "400", "--seed", "9", "--jobs", "2",
    ];
    let first = json(&swedge(&args));
    assert_eq!(first["rhat"]["alpha"].as_array().unwrap().len(), 6);
    for key in ["effect", "omega", "scales"] {
        let a = num(&first["acceptance"][key]);
        assert!((0.0..=1.0).contains(&a));
    }
    let mut single = args.to_vec();
    let last = single.len() - 1;
    single[last] = "1";
    assert_eq!(first, json(&swedge(&single)), "chain results depend only on the seed");
}

#[test]
fn simulate_writes_results_and_round_trips_data() {
    let dir = TempDir::new().unwrap();
    let out_csv = dir.path().join("r.csv");
    let emit = dir.path().join("data");
    let out = swedge(&[
        "simulate",
        "--scenario",
        "null,reti",
        "--curves",
        "b",
        "--models",
        "eti,reti:3",
        "--replicates",
        "3",
        "--seed",
        "5",
        "--jobs",
        "2",
        "--out",
        out_csv.to_str().unwrap(),
        "--emit-data",
        emit.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&out_csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next(),
        Some("scenario,curve,model,estimand,bias,bias_mcse,coverage,mse,power,avg_pointwise_mse,n_fail")
    );
    // 2 scenarios x 2 models x 2 estimands.
    assert_eq!(lines.count(), 8);

    for name in ["null", "reti"] {
        let sc = scenario_set(name, CurveKind::B, 3, 5).unwrap().remove(0);
        let expected = generate(&sc.design, &sc.truth_curve, &sc.params, substream_seed(sc.seed, 0)).unwrap();
        let path = emit.join(format!("{name}-b-rep0.csv"));
        assert_eq!(swedge::io::read_dataset_file(&path).unwrap(), expected);
    }
}
