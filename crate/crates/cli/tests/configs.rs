use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;

use ubot_cli::config::{ConcentrationParams, FlowParams, JumbotParams, OutlierParams, PlanVizParams, SolveParams};
use ubot_cli::{Experiment, ExperimentConfig};

fn crate_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

fn schema() -> Value {
    serde_json::from_str(&std::fs::read_to_string(crate_dir().join("config.schema.json")).unwrap()).unwrap()
}

fn keys_of(v: &Value) -> BTreeSet<String> {
    v.as_object().unwrap().keys().cloned().collect()
}

fn schema_keys(schema: &Value, name: &str) -> BTreeSet<String> {
    let mut keys = keys_of(&schema["$defs"][name]["properties"]);
    keys.remove("experiment");
    keys
}

fn default_keys<T: Serialize + Default>() -> BTreeSet<String> {
    keys_of(&serde_json::to_value(T::default()).unwrap())
}

#[test]
fn schema_lists_exactly_the_accepted_keys() {
    let s = schema();
    assert_eq!(schema_keys(&s, "outlier"), default_keys::<OutlierParams>());
    assert_eq!(schema_keys(&s, "plan-viz"), default_keys::<PlanVizParams>());
    assert_eq!(schema_keys(&s, "concentration"), default_keys::<ConcentrationParams>());
    assert_eq!(schema_keys(&s, "flow"), default_keys::<FlowParams>());
    assert_eq!(schema_keys(&s, "jumbot"), default_keys::<JumbotParams>());
    assert_eq!(schema_keys(&s, "solve"), default_keys::<SolveParams>());

    let flow = serde_json::to_value(FlowParams::default()).unwrap();
    assert_eq!(keys_of(&s["$defs"]["flow"]["properties"]["scenario"]["properties"]), keys_of(&flow["scenario"]));
    let jumbot = serde_json::to_value(JumbotParams::default()).unwrap();
    assert_eq!(keys_of(&s["$defs"]["jumbot"]["properties"]["blobs"]["properties"]), keys_of(&jumbot["blobs"]));
    let solver = keys_of(&serde_json::to_value(FlowParams::default().solver).unwrap());
    assert!(solver.is_subset(&keys_of(&s["$defs"]["solver"]["properties"])), "{solver:?}");
}

#[test]
fn every_example_config_validates() {
    let dir = crate_dir().join("configs");
    let mut seen = 0;
    for entry in std::fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().and_then(|e| e.to_str()) != Some("json") {
            continue;
        }
        let text = std::fs::read_to_string(&path).unwrap();
        let tag: Value = serde_json::from_str::<Value>(&text).unwrap()["experiment"].clone();
        let experiment: Experiment = serde_json::from_value(tag).unwrap();
        ExperimentConfig::load(experiment, &path, 0, PathBuf::from("unused"), false)
            .unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        seen += 1;
    }
    assert!(seen >= 6);
}

fn solve_example(name: &str) -> Value {
    let out = tempfile::TempDir::new().unwrap();
    let cfg = ExperimentConfig::load(Experiment::Solve, &crate_dir().join("configs").join(name), 0, out.path().to_path_buf(), false)
        .unwrap();
    ubot_cli::run(&cfg).unwrap();
    serde_json::from_str(&std::fs::read_to_string(Path::new(out.path()).join("solve.json")).unwrap()).unwrap()
}

#[test]
fn solve_examples_run() {
    let points = solve_example("solve-points.json");
    assert!(points["cost"].as_f64().unwrap() > 0.0);
    assert_eq!(points["rows"], 3);
    let oracle = solve_example("solve-oracle.json");
    assert_eq!(oracle["converged"], true);
}
