use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn campus() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/campus")
}

fn guides(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_guides")).args(args).output().expect("spawn guides")
}

fn ok_json(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn detect_and_repair_the_campus() {
    let dir = TempDir::new().unwrap();
    let config = campus().join("pipeline.json");
    let out = dir.path().join("det");
    let det = ok_json(&guides(&["detect", "-c", s(&config), "-o", s(&out)]));
    assert_eq!(det["stage"], "detect");
    assert_eq!(det["applied_suggestions"], 0);
    assert_eq!(det["flags"]["duplicate_nodes"], 1);
    assert_eq!(det["flags"]["symbol_circle"], 1);
    assert!(out.join("manifest.json").is_file());
    assert!(out.join("ledger.json").is_file());

    let rep_dir = dir.path().join("rep");
    let rep = ok_json(&guides(&["repair", "-c", s(&config), "-o", s(&rep_dir)]));
    assert_eq!(rep["stage"], "repair");
    assert_eq!(rep["applied_suggestions"], rep["suggestions"]);
    assert!(rep["suggestions"].as_u64().unwrap() > 0);
}

#[test]
fn usage_and_input_errors_exit_distinctly() {
    let dir = TempDir::new().unwrap();
    assert_eq!(guides(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(guides(&["--help"]).status.code(), Some(0));

    let empty = dir.path().join("empty.json");
    std::fs::write(&empty, "").unwrap();
    assert_eq!(guides(&["detect", "-c", s(&empty)]).status.code(), Some(1));

    let missing = dir.path().join("missing.json");
    std::fs::write(
        &missing,
        r#"{"layers": [{"id": "p", "kind": "pipes", "geojson": "nowhere.geojson"}], "output_dir": "out"}"#,
    )
    .unwrap();
    let out = guides(&["detect", "-c", s(&missing)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("nowhere.geojson"), "{}", stderr(&out));

    let bad = dir.path().join("bad.json");
    std::fs::write(dir.path().join("broken.geojson"), r#"{"type": "FeatureCollection", "features": 3}"#).unwrap();
    std::fs::write(
        &bad,
        r#"{"layers": [{"id": "p", "kind": "pipes", "geojson": "broken.geojson"}], "output_dir": "out"}"#,
    )
    .unwrap();
    assert_eq!(guides(&["detect", "-c", s(&bad)]).status.code(), Some(2));

    let nofile = dir.path().join("absent.json");
    assert_eq!(guides(&["detect", "-c", s(&nofile)]).status.code(), Some(2));
}

#[test]
fn flags_beat_the_config_and_toml_is_accepted() {
    let dir = TempDir::new().unwrap();
    let toml = format!(
        r#"epsilon = 0.001
seed = 7
output_dir = "{out}"

[[layers]]
id = "pipes"
kind = "pipes"
sensitivity = "sensitive"
geojson = "{pipes}"

[[layers]]
id = "streets"
kind = "streets"
geojson = "{streets}"
"#,
        out = s(&dir.path().join("from_file")),
        pipes = s(&campus().join("pipes.geojson")),
        streets = s(&campus().join("streets.geojson")),
    );
    let config = dir.path().join("pipeline.toml");
    std::fs::write(&config, toml).unwrap();

    let from_file = ok_json(&guides(&["detect", "-c", s(&config)]));
    assert_eq!(from_file["seed"], 7);
    // 0.005 m apart: not a duplicate at 1 mm
    assert_eq!(from_file["flags"]["duplicate_nodes"], 0);
    assert!(dir.path().join("from_file/summary.json").is_file());

    let out = dir.path().join("from_flags");
    let flagged = ok_json(&guides(&["detect", "-c", s(&config), "--epsilon", "0.01", "--seed", "9", "-o", s(&out)]));
    assert_eq!(flagged["seed"], 9);
    assert_eq!(flagged["flags"]["duplicate_nodes"], 1);
    assert!(out.join("summary.json").is_file());
}

#[test]
fn eval_reports_both_arms() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("eval");
    let r = ok_json(&guides(&["eval", "-o", s(&out), "--rows", "6", "--cols", "6", "--seed", "3"]));
    let arms = r["evaluation"].as_array().unwrap();
    assert_eq!(arms.len(), 2);
    let with = arms.iter().find(|a| a["constraint"] == true).unwrap();
    let without = arms.iter().find(|a| a["constraint"] == false).unwrap();
    assert_eq!(with["seed"], 3);
    assert_eq!(with["recall"], without["recall"]);
    assert!(with["precision"].as_f64().unwrap() >= without["precision"].as_f64().unwrap());
}

#[test]
fn query_respects_the_role() {
    let dataset = campus().join("dataset.json");
    let d = s(&dataset);
    let crew = ok_json(&guides(&["query", "-d", d, "--bbox", "-10,-10,100,100", "--role", "crew"]));
    assert!(crew["layers"]["pipes"]["features"].as_array().is_some_and(|f| !f.is_empty()));

    let public = ok_json(&guides(&["query", "-d", d, "--bbox", "-10,-10,100,100", "--role", "public"]));
    assert!(public["layers"].get("pipes").is_none());
    assert_eq!(public["denied_layers"][0]["layer"], "pipes");

    let named = ok_json(&guides(&["query", "-d", d, "--region", "south", "--kinds", "pipes"]));
    assert!(named["feature_count"].as_u64().unwrap() > 0);

    let impact = ok_json(&guides(&["query", "-d", d, "--impact", "m_cross"]));
    assert_eq!(impact["blocks"], serde_json::json!(["blk_e", "blk_n"]));
    assert_eq!(impact["sum"], 650.0);

    assert_eq!(guides(&["query", "-d", d, "--impact", "m_cross", "--role", "public"]).status.code(), Some(1));
    assert_eq!(guides(&["query", "-d", d, "--bbox", "1,2,3"]).status.code(), Some(1));
    assert_eq!(guides(&["query", "-d", d, "--region", "atlantis"]).status.code(), Some(2));
}

#[test]
fn resolve_writes_the_decision_back() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("det");
    ok_json(&guides(&["detect", "-c", s(&campus().join("pipeline.json")), "-o", s(&out)]));
    let manifest = out.join("manifest.json");
    let ledger: Value = serde_json::from_slice(&std::fs::read(out.join("ledger.json")).unwrap()).unwrap();
    let merge = ledger["flags"]
        .as_array()
        .unwrap()
        .iter()
        .find(|f| f["rule"] == "duplicate_nodes")
        .unwrap()["id"]
        .as_str()
        .unwrap()
        .to_string();

    let denied = guides(&["resolve", "-d", s(&manifest), "--flag", &merge, "--decision", "accepted", "--role", "planner"]);
    assert_eq!(denied.status.code(), Some(1));

    let r = ok_json(&guides(&["resolve", "-d", s(&manifest), "--flag", &merge, "--decision", "accepted"]));
    assert_eq!(r["revision"], 1);
    let pipes = std::fs::read_to_string(out.join("layers/pipes.geojson")).unwrap();
    // the merge keeps one of the pair
    assert!(pipes.contains("\"v_dup_a\"") ^ pipes.contains("\"v_dup_b\""));
    let ledger: Value = serde_json::from_slice(&std::fs::read(out.join("ledger.json")).unwrap()).unwrap();
    let flag = ledger["flags"].as_array().unwrap().iter().find(|f| f["id"] == merge.as_str()).unwrap();
    assert_eq!(flag["status"], "accepted");

    let again = guides(&["resolve", "-d", s(&manifest), "--flag", &merge, "--decision", "rejected"]);
    assert_eq!(again.status.code(), Some(2), "{}", stderr(&again));
    let unknown = guides(&["resolve", "-d", s(&manifest), "--flag", "nope", "--decision", "rejected"]);
    assert_eq!(unknown.status.code(), Some(2));
}
