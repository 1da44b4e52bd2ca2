use std::path::Path;

use assert_cmd::Command;
use serde_json::Value;
use sitnn::data::{write_idx, IdxData};
use sitnn::provenance::Provenance;
use sitnn::Tensor;

fn sitnn() -> Command {
    Command::cargo_bin("sitnn").unwrap()
}

fn run_ok(args: &[&str]) -> String {
    let out = sitnn().args(args).assert().success().get_output().stdout.clone();
    String::from_utf8(out).unwrap()
}

fn run_err(args: &[&str]) -> Value {
    let out = sitnn().args(args).assert().code(1).get_output().stderr.clone();
    let text = String::from_utf8(out).unwrap();
    serde_json::from_str(text.lines().last().unwrap()).unwrap()
}

fn schema() -> jsonschema::Validator {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/schema/analysis.schema.json");
    let schema: Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    jsonschema::validator_for(&schema).unwrap()
}

#[test]
fn no_arguments_prints_usage_and_fails() {
    let out = sitnn().assert().failure().get_output().clone();
    let text = String::from_utf8_lossy(&out.stdout) + String::from_utf8_lossy(&out.stderr);
    assert!(text.contains("Usage"));
}

#[test]
fn unknown_flags_are_rejected() {
    sitnn().args(["analyze", "--frobnicate"]).assert().failure();
    sitnn().args(["simulate", "--neuron", "sit", "--steps", "ten"]).assert().failure();
    sitnn().args(["frobnicate"]).assert().failure();
}

#[test]
fn analyze_finds_the_standardized_fixed_points() {
    let text = run_ok(&["analyze", "--neuron", "sit", "--input", "0"]);
    let report: Value = serde_json::from_str(&text).unwrap();
    assert!(schema().is_valid(&report));
    let fps = report["fixed_points"].as_array().unwrap();
    assert_eq!(fps.len(), 2);
    let at = |i: usize, k: &str| fps[i][k].as_f64().unwrap();
    assert!((at(0, "u") + 0.05).abs() < 1e-3 && at(0, "v").abs() < 1e-3);
    assert!((at(1, "u") - 1.02).abs() < 1e-3 && (at(1, "v") - 0.0214).abs() < 1e-3);
    assert!(fps[0]["class"].as_str().unwrap().starts_with("Stable"));
    assert!(!fps[1]["class"].as_str().unwrap().starts_with("Stable"));
    let keys: Vec<&String> = report.as_object().unwrap().keys().collect();
    assert_eq!(keys.len(), 7);
}

#[test]
fn every_model_and_input_validates_against_the_schema() {
    let validator = schema();
    for neuron in ["lif", "qif", "izhikevich", "sit", "sit-bursting"] {
        for input in ["-1", "0", "0.3", "5"] {
            let text = run_ok(&["analyze", "--neuron", neuron, "--input", input, "--grid", "res=4"]);
            let report: Value = serde_json::from_str(&text).unwrap();
            let errors: Vec<String> = validator.iter_errors(&report).map(|e| e.to_string()).collect();
            assert!(errors.is_empty(), "{neuron} {input}: {errors:?}");
        }
    }
}

fn header(path: &Path) -> Provenance {
    let text = std::fs::read_to_string(path).unwrap();
    Provenance::parse_header(text.lines().next().unwrap()).unwrap()
}

#[test]
fn analyze_writes_artifacts_with_provenance() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let args = ["analyze", "--neuron", "sit", "--input", "0", "--grid", "u=-0.5:1.5", "v=-0.1:0.1", "res=16", "--out", out];
    let stdout = run_ok(&args);
    let json: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("analysis.json")).unwrap()).unwrap();
    assert_eq!(json, serde_json::from_str::<Value>(&stdout).unwrap());
    let prov: Provenance = serde_json::from_value(json["provenance"].clone()).unwrap();
    for name in ["field.csv", "u_nullcline.csv", "v_nullcline.csv"] {
        assert_eq!(header(&dir.path().join(name)), prov, "{name}");
    }
    let field = std::fs::read_to_string(dir.path().join("field.csv")).unwrap();
    let rows: Vec<&str> = field.lines().skip(1).collect();
    assert_eq!(rows[0], "u,v,du,dv");
    assert_eq!(rows.len(), 1 + 16 * 16);
    // same invocation, same provenance
    assert_eq!(run_ok(&args), stdout);
}

fn simulate_rows(text: &str) -> (Provenance, Vec<Vec<f64>>) {
    let mut lines = text.lines();
    let prov = Provenance::parse_header(lines.next().unwrap()).unwrap();
    assert_eq!(lines.next().unwrap(), "step,y,u_post,v_post,s");
    let rows = lines
        .map(|l| l.split(',').map(|x| x.parse().unwrap()).collect())
        .collect();
    (prov, rows)
}

#[test]
fn saturated_lif_spikes_on_every_row() {
    let text = run_ok(&["simulate", "--neuron", "lif", "--input", "2", "--steps", "10", "--tau", "2"]);
    let (prov, rows) = simulate_rows(&text);
    assert_eq!(rows.len(), 10);
    assert!(rows.iter().all(|r| r[4] == 1.0));
    let (other, _) = simulate_rows(&run_ok(&["simulate", "--neuron", "lif", "--input", "3", "--steps", "10"]));
    assert_ne!(prov.config_hash, other.config_hash);
    let (again, _) = simulate_rows(&run_ok(&["simulate", "--neuron", "lif", "--input", "2", "--steps", "10", "--tau", "2"]));
    assert_eq!(prov, again);
}

#[test]
fn simulate_writes_trace_and_intervals() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("trace.csv");
    let isi = dir.path().join("isi.csv");
    run_ok(&[
        "simulate", "--neuron", "sit", "--input", "2", "--steps", "100",
        "--out", trace.to_str().unwrap(), "--isi", isi.to_str().unwrap(),
    ]);
    let (_, rows) = simulate_rows(&std::fs::read_to_string(&trace).unwrap());
    assert_eq!(rows.len(), 100);
    let spikes = rows.iter().filter(|r| r[4] == 1.0).count();
    let gaps = std::fs::read_to_string(&isi).unwrap().lines().count() - 2;
    assert_eq!(gaps, spikes - 1);
}

#[test]
fn runtime_errors_are_machine_readable() {
    let e = run_err(&["simulate", "--neuron", "hodgkin-huxley"]);
    assert_eq!(e["error"], "unknown_model");
    let e = run_err(&["analyze", "--param", "zeta=1"]);
    assert_eq!(e["error"], "invalid_parameter");
    let e = run_err(&["analyze", "--grid", "res=0"]);
    assert_eq!(e["error"], "invalid_parameter");
    let e = run_err(&["eval", "--checkpoint", "/nonexistent.ckpt", "--images", "x", "--labels", "y"]);
    assert_eq!(e["error"], "io");
    assert!(e["message"].as_str().unwrap().contains("nonexistent"));
}

#[test]
fn gradcheck_reports_agreement() {
    let text = run_ok(&["gradcheck", "--arch", "FC12-SIT-FC10-LIF", "--input-shape", "6", "--seed", "3"]);
    let report: Value = serde_json::from_str(&text).unwrap();
    assert_eq!(report["passed"], true);
    assert!(report["max_relative_error"].as_f64().unwrap() < 1e-4);
    assert_eq!(report["coordinates"], report["parameters"]);
}

/// Bright and dark 8x8 images labelled 1 and 0.
fn write_dataset(dir: &Path, name: &str, n: usize) -> (String, String) {
    let mut pixels = Vec::new();
    let mut labels = Vec::new();
    for i in 0..n {
        let bright = i % 2 == 1;
        pixels.extend((0..64).map(|p| if bright { 0.6 + 0.004 * p as f32 } else { 0.1 }));
        labels.push(u8::from(bright));
    }
    let images = Tensor::new(vec![n, 8, 8], pixels.iter().map(|v| (v * 255.0).round() / 255.0).collect()).unwrap();
    let ip = dir.join(format!("{name}-images"));
    let lp = dir.join(format!("{name}-labels"));
    write_idx(&ip, &IdxData::Images(images), true).unwrap();
    write_idx(&lp, &IdxData::Labels(labels), false).unwrap();
    (ip.to_str().unwrap().into(), lp.to_str().unwrap().into())
}

#[test]
fn train_eval_and_featuremap_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let (train_i, train_l) = write_dataset(dir.path(), "train", 32);
    let (test_i, test_l) = write_dataset(dir.path(), "test", 16);
    let config = dir.path().join("run.toml");
    std::fs::write(
        &config,
        format!(
            "architecture = \"c4k3s1-BN-SIT-MPk2s2-FC10-LIF\"\nepochs = 1\nseed = 5\n\n[dataset]\n\
             train_images = \"train-images\"\ntrain_labels = \"train-labels\"\n\
             test_images = \"test-images\"\ntest_labels = \"test-labels\"\n"
        ),
    )
    .unwrap();
    let out = dir.path().join("run");
    let cfg = config.to_str().unwrap();
    let stdout = run_ok(&["train", "--config", cfg, "--epochs", "3", "--out", out.to_str().unwrap()]);
    let report: Value = serde_json::from_str(&stdout).unwrap();
    assert_eq!(report["epochs"].as_array().unwrap().len(), 3);
    assert_eq!(report["checkpoint"], "model.ckpt");
    let prov: Provenance = serde_json::from_value(report["provenance"].clone()).unwrap();
    assert_eq!(prov.seed, 5);
    assert_eq!(header(&out.join("curves.csv")), prov);

    let ckpt = out.join("model.ckpt");
    let ckpt = ckpt.to_str().unwrap();
    let eval: Value = serde_json::from_str(&run_ok(&[
        "eval", "--checkpoint", ckpt, "--images", &test_i, "--labels", &test_l,
    ]))
    .unwrap();
    assert_eq!(eval["samples"], 16);
    assert_eq!(eval["accuracy"], report["final_accuracy"]);
    assert_eq!(eval["provenance"], report["provenance"]);

    let map = run_ok(&["featuremap", "--checkpoint", ckpt, "--images", &train_i, "--layer", "2", "--index", "1"]);
    let mut lines = map.lines();
    assert_eq!(Provenance::parse_header(lines.next().unwrap()).unwrap(), prov);
    assert_eq!(lines.next().unwrap(), "y,x,rate");
    let rates: Vec<f64> = lines.map(|l| l.rsplit(',').next().unwrap().parse().unwrap()).collect();
    assert_eq!(rates.len(), 64);
    assert!(rates.iter().all(|r| (0.0..=1.0).contains(r)));

    let hist = run_ok(&["featuremap", "--checkpoint", ckpt, "--images", &train_i, "--histogram", "--samples", "8"]);
    let counts: u64 = hist.lines().skip(2).map(|l| l.rsplit(',').next().unwrap().parse::<u64>().unwrap()).sum();
    assert_eq!(counts, 8 * 4 * 64);

    let e = run_err(&["featuremap", "--checkpoint", ckpt, "--images", &train_i, "--layer", "0"]);
    assert_eq!(e["error"], "invalid_parameter");
    let e = run_err(&["featuremap", "--checkpoint", ckpt, "--images", &train_l, "--layer", "2"]);
    assert_eq!(e["error"], "invalid_parameter");

    let sweep: Value = serde_json::from_str(&run_ok(&["sweep", "--config", cfg, "--positions", "1"])).unwrap();
    let rows = sweep["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0]["architecture"], "c4k3s1-BN-LIF-MPk2s2-FC10-LIF");
    assert_eq!(rows[1]["position"], 1);
}
