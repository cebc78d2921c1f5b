mod common;

use std::fs;
use std::path::Path;

use common::*;
use densekit::asa::{mean_asa, write_attention_file, AsaConfig};
use densekit::corpus::{read_conll_file, RepairPolicy};
use densekit::gsa::{write_records_csv, ExperimentRecord};
use densekit::metrics::{compute_features, entity_token_ratio, FeatureConfig, FeatureExtractor};
use densekit::resample::{build_stratified_subsets, SubsetSpec};
use densekit::Corpus;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::Value;
use tempfile::TempDir;

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn corpus_file(dir: &TempDir, seed: u64, n: usize) -> (Corpus, std::path::PathBuf) {
    let corpus = synthetic_corpus(seed, n);
    let path = dir.path().join(format!("corpus{seed}.conll"));
    write_corpus(&corpus, &path);
    (corpus, path)
}

fn records_file(dir: &TempDir, corpus: &Corpus) -> std::path::PathBuf {
    let extractor = FeatureExtractor::new(&FeatureConfig::default()).unwrap();
    let manifests = build_stratified_subsets(corpus, &SubsetSpec::stratified(12, 3), &extractor).unwrap();
    let records: Vec<ExperimentRecord> = manifests
        .into_iter()
        .map(|m| ExperimentRecord {
            subset_id: m.subset_id,
            f1: 0.4 + 0.8 * m.features.ned,
            features: m.features,
            precision: None,
            recall: None,
        })
        .collect();
    let path = dir.path().join("records.csv");
    write_records_csv(&records, fs::File::create(&path).unwrap()).unwrap();
    path
}

fn close(a: &Value, b: f64) -> bool {
    (a.as_f64().unwrap() - b).abs() <= 1e-12
}

#[test]
fn metrics_report_matches_library() {
    let dir = TempDir::new().unwrap();
    let (_, path) = corpus_file(&dir, 1, 120);
    let out = densekit(&["metrics", s(&path)]);
    assert_eq!(out.code, 0, "{}", out.stderr);
    let json = out.json();
    assert_schema("metrics", &json);
    let reread = read_conll_file(&path, RepairPolicy::Strict).unwrap().corpus;
    let expected = compute_features(&reread, &FeatureConfig::default()).unwrap();
    let f = &json["features"];
    for (name, v) in ["ned", "norm_std", "redundancy", "ele", "ssr", "vocab_entropy"].iter().zip(expected.to_array()) {
        assert!(close(&f[name], v), "{name}: {} vs {v}", f[name]);
    }
    assert_eq!(json["sentences"], 120);
}

#[test]
fn lambda_zero_gives_entity_ratio() {
    let dir = TempDir::new().unwrap();
    let (corpus, path) = corpus_file(&dir, 2, 60);
    let json = densekit(&["metrics", s(&path), "--lambda", "0"]).json();
    assert!(close(&json["features"]["ned"], entity_token_ratio(corpus.sentences())));
}

#[test]
fn metrics_csv_has_header_and_row() {
    let dir = TempDir::new().unwrap();
    let (_, path) = corpus_file(&dir, 3, 30);
    let out = densekit(&["--csv", "metrics", s(&path)]);
    let lines: Vec<&str> = out.stdout.lines().collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0], "corpus,sentences,tokens,ned,norm_std,redundancy,ele,ssr,vocab_entropy");
}

#[test]
fn score_fixture_gives_four_sevenths() {
    let dir = TempDir::new().unwrap();
    let words = ["Alice", "met", "Bob", "in", "Paris", "at", "Acme"];
    let gold = sentence(0, &words.iter().copied().zip(["B-per", "O", "B-per", "O", "B-loc", "O", "B-org"]).collect::<Vec<_>>());
    let pred = sentence(0, &words.iter().copied().zip(["B-per", "O", "B-per", "O", "B-org", "O", "O"]).collect::<Vec<_>>());
    let (g, p) = (dir.path().join("gold.conll"), dir.path().join("pred.conll"));
    write_corpus(&Corpus::from_sentences([gold], ""), &g);
    write_corpus(&Corpus::from_sentences([pred], ""), &p);
    let json = densekit(&["score", s(&g), s(&p)]).json();
    assert_schema("score", &json);
    let r = &json["report"];
    assert_eq!((r["tp"].as_u64(), r["fp"].as_u64(), r["fn"].as_u64()), (Some(2), Some(1), Some(2)));
    assert!(close(&r["f1"], 4.0 / 7.0));
    assert!(close(&r["missed_rate"], 0.5));
}

#[test]
fn missing_file_is_a_data_error() {
    let out = densekit(&["metrics", "/nonexistent/corpus.conll"]);
    assert_eq!(out.code, 2);
    assert!(out.stdout.is_empty());
    let err = out.error_json();
    assert_schema("error", &err);
    assert_eq!(err["error"]["kind"], "data");
    assert!(err["error"]["message"].as_str().unwrap().contains("/nonexistent/corpus.conll"));
}

#[test]
fn usage_errors_exit_one() {
    let dir = TempDir::new().unwrap();
    let (_, path) = corpus_file(&dir, 4, 20);
    let bad_grid = densekit(&["wom", s(&path), "--sweep-T", "0.08:0.03:0.01"]);
    assert_eq!(bad_grid.code, 1);
    assert_eq!(bad_grid.error_json()["error"]["kind"], "usage");
    let conflict = densekit(&["gsa", "r.csv", "--k", "3", "--external-command", "x"]);
    assert_eq!(conflict.code, 1);
    assert_eq!(densekit(&["--json", "--csv", "metrics", s(&path)]).code, 1);
    assert_eq!(densekit(&["--help"]).code, 0);
}

#[test]
fn asa_report_matches_library() {
    let dir = TempDir::new().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let tensors: Vec<_> = (0..4).map(|i| random_tensor(&mut rng, 2, 2, 6 + i, 1.0)).collect();
    let path = dir.path().join("attn.atn1");
    write_attention_file(&tensors, &path).unwrap();
    let reread = densekit::asa::read_attention_file(&path).unwrap();
    let json = densekit(&["asa", s(&path)]).json();
    assert_schema("asa", &json);
    assert_eq!(json["tensors"], 4);
    assert!(close(&json["mean_asa"], mean_asa(&reread, &AsaConfig::default()).unwrap()));

    let per_layer = densekit(&["asa", s(&path), "--aggregate", "per-layer"]).json();
    assert_schema("asa", &per_layer);
    assert_eq!(per_layer["per_tensor"][0]["per_layer"].as_array().unwrap().len(), 2);
}

#[test]
fn asa_density_table_is_sorted_by_density() {
    let dir = TempDir::new().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut entries = Vec::new();
    for i in 0..3 {
        let (_, corpus) = corpus_file(&dir, 10 + i, 20 + 10 * i as usize);
        let attn = dir.path().join(format!("a{i}.atn1"));
        write_attention_file(&[random_tensor(&mut rng, 1, 2, 8, 1.0)], &attn).unwrap();
        entries.push(serde_json::json!({
            "subset_id": format!("s{i}"),
            "attention": attn.file_name().unwrap().to_str().unwrap(),
            "corpus": corpus.file_name().unwrap().to_str().unwrap(),
        }));
    }
    let list = dir.path().join("subsets.json");
    fs::write(&list, serde_json::to_string(&entries).unwrap()).unwrap();
    let svg = dir.path().join("curve.svg");
    let json = densekit(&["asa-density", s(&list), "--svg", s(&svg)]).json();
    assert_schema("asa_density", &json);
    let rows = json["table"]["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 3);
    assert!(rows.windows(2).all(|w| w[0]["ned"].as_f64() <= w[1]["ned"].as_f64()));
    assert!(fs::read_to_string(svg).unwrap().contains("<polyline"));
}

#[test]
fn resample_reports_and_materializes() {
    let dir = TempDir::new().unwrap();
    let (_, path) = corpus_file(&dir, 7, 200);
    let out_dir = dir.path().join("subsets");
    let json = densekit(&["--seed", "4", "resample", s(&path), "--strategy", "stratified", "--materialize", s(&out_dir)]).json();
    assert_schema("resample", &json);
    let subsets = json["subsets"].as_array().unwrap();
    assert_eq!(subsets.len(), 23);
    let first = &subsets[0];
    let id = first["subset_id"].as_str().unwrap();
    let written = read_conll_file(out_dir.join(format!("{id}.conll")), RepairPolicy::Strict).unwrap().corpus;
    assert_eq!(written.len(), first["sentence_ids"].as_array().unwrap().len());

    let family = densekit(&["resample", s(&path)]).json();
    assert_schema("resample", &family);
    let neds: Vec<f64> = family["subsets"].as_array().unwrap().iter().map(|m| m["features"]["ned"].as_f64().unwrap()).collect();
    assert_eq!(neds.len(), 6);
    assert!(neds.windows(2).all(|w| w[1] <= w[0] + 1e-12), "{neds:?}");
}

#[test]
fn correlate_and_gsa_reports() {
    let dir = TempDir::new().unwrap();
    let (corpus, _) = corpus_file(&dir, 8, 300);
    let records = records_file(&dir, &corpus);
    let corr = densekit(&["correlate", s(&records)]).json();
    assert_schema("correlate", &corr);
    assert!(corr["correlations"][0]["pearson"].as_f64().unwrap() > 0.999);

    let base = ["gsa", s(&records), "--base-samples", "128", "--bootstrap", "50", "--trajectories", "10"];
    let one = densekit(&[&base[..], &["--workers", "1"]].concat());
    let four = densekit(&[&base[..], &["--workers", "4"]].concat());
    assert_eq!(one.code, 0, "{}", one.stderr);
    assert_eq!(one.stdout, four.stdout, "worker count changed the result");
    let json = one.json();
    assert_schema("gsa", &json);
    assert_eq!(json["ranking"]["morris"][0], "ned");
    assert_ne!(densekit(&[&base[..], &["--seed", "9"]].concat()).stdout, one.stdout);
}

#[test]
fn gsa_svg_conflicts_with_sobol_only() {
    let dir = TempDir::new().unwrap();
    let (corpus, _) = corpus_file(&dir, 9, 150);
    let records = records_file(&dir, &corpus);
    let out = densekit(&["gsa", s(&records), "--method", "sobol", "--svg", "x.svg"]);
    assert_eq!(out.code, 1);
}

#[test]
fn sweep_row_counts() {
    let dir = TempDir::new().unwrap();
    let (_, path) = corpus_file(&dir, 11, 240);
    let t = densekit(&["wom", s(&path), "--sweep-T", "0.03:0.08:0.01"]).json();
    assert_schema("wom_sweep", &t);
    let rows = t["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 6);
    let barren: Vec<u64> = rows.iter().map(|r| r["barren_windows"].as_u64().unwrap()).collect();
    assert!(barren.windows(2).all(|w| w[0] <= w[1]), "{barren:?}");

    let w = densekit(&["--csv", "wom", s(&path), "--sweep-W", "5:60:5"]);
    assert_eq!(w.code, 0, "{}", w.stderr);
    assert_eq!(w.stdout.lines().count(), 13);
}

#[test]
fn wom_output_is_reproducible_across_in_flight_limits() {
    let dir = TempDir::new().unwrap();
    let (_, path) = corpus_file(&dir, 12, 90);
    let run = |in_flight: &str| {
        let dest = dir.path().join(format!("out{in_flight}.conll"));
        let out = densekit(&["wom", s(&path), "-W", "10", "-T", "0.2", "--backoff-ms", "0", "--in-flight", in_flight, "--out-corpus", s(&dest)]);
        assert_eq!(out.code, 0, "{}", out.stderr);
        assert_schema("wom", &out.json());
        (fs::read(&dest).unwrap(), out.json())
    };
    let (a, report) = run("1");
    let (b, _) = run("4");
    assert_eq!(a, b);
    let augmented = read_conll_file(dir.path().join("out1.conll"), RepairPolicy::Strict).unwrap().corpus;
    assert_eq!(augmented.len() as u64, report["report"]["sentences_out"].as_u64().unwrap());
    assert!(report["report"]["sentences_out"].as_u64() > report["report"]["sentences_in"].as_u64());
}

#[test]
fn backend_failures_exit_three_with_partial_report() {
    let dir = TempDir::new().unwrap();
    let (_, path) = corpus_file(&dir, 13, 60);
    let cassette = dir.path().join("empty.json");
    fs::write(&cassette, r#"{"interactions": []}"#).unwrap();
    let out = densekit(&["wom", s(&path), "-W", "10", "-T", "0.5", "--backoff-ms", "0", "--backend", "replay", "--cassette", s(&cassette)]);
    assert_eq!(out.code, 3, "{}", out.stderr);
    let err = out.error_json();
    assert_schema("error", &err);
    assert_eq!(err["error"]["kind"], "backend");
    let partial = out.json();
    assert_schema("wom", &partial);
    assert!(partial["report"]["aborted"].is_string());
    assert!(partial["report"]["reject_tally"]["backend_error"].as_u64().unwrap() > 0);
}

#[test]
fn config_values_apply_and_flags_override_them() {
    let dir = TempDir::new().unwrap();
    corpus_file(&dir, 14, 80);
    let cfg = dir.path().join("densekit.toml");
    fs::write(
        &cfg,
        "seed = 5\n[wom]\nwindow_size = 7\n[wom.backend]\nkind = \"mock\"\nbehavior = \"identity\"\n[paths]\ncorpus = \"corpus14.conll\"\n",
    )
    .unwrap();
    let from_cfg = densekit(&["--config", s(&cfg), "wom", "--sweep-T", "0.05:0.05:0.01"]).json();
    assert_eq!(from_cfg["seed"], 5);
    assert_eq!(from_cfg["rows"][0]["window_size"], 7);
    let overridden = densekit(&["--config", s(&cfg), "--seed", "8", "wom", "-W", "9", "--sweep-T", "0.05:0.05:0.01"]).json();
    assert_eq!(overridden["seed"], 8);
    assert_eq!(overridden["rows"][0]["window_size"], 9);

    fs::write(&cfg, "[wom]\nwindwo_size = 7\n").unwrap();
    let typo = densekit(&["--config", s(&cfg), "metrics"]);
    assert_eq!(typo.code, 1);
}

#[test]
fn output_flag_writes_file() {
    let dir = TempDir::new().unwrap();
    let (_, path) = corpus_file(&dir, 15, 20);
    let dest = dir.path().join("report.json");
    let out = densekit(&["-o", s(&dest), "metrics", s(&path)]);
    assert!(out.stdout.is_empty());
    let json: Value = serde_json::from_str(&fs::read_to_string(dest).unwrap()).unwrap();
    assert_eq!(json["command"], "metrics");
}

#[test]
fn schemas_reject_malformed_reports() {
    let schema_dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("schemas");
    let load = |name: &str| -> Value {
        serde_json::from_str(&fs::read_to_string(schema_dir.join(format!("{name}.schema.json"))).unwrap()).unwrap()
    };
    let metrics = jsonschema::validator_for(&load("metrics")).unwrap();
    assert!(!metrics.is_valid(&serde_json::json!({ "command": "metrics" })));
    let error = jsonschema::validator_for(&load("error")).unwrap();
    assert!(!error.is_valid(&serde_json::json!({ "error": { "kind": "oops", "message": "", "exit_code": 9 } })));
    assert!(error.is_valid(&serde_json::json!({ "error": { "kind": "data", "message": "x", "exit_code": 2 } })));
}
