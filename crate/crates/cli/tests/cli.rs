use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_latenergy"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn schema(name: &str) -> Value {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("schemas").join(format!("{name}.json"));
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn assert_valid(name: &str, payload: &Value) {
    let validator = jsonschema::validator_for(&schema(name)).unwrap();
    let errors: Vec<String> = validator.iter_errors(payload).map(|e| format!("{} at {}", e, e.instance_path)).collect();
    assert!(errors.is_empty(), "{name}: {errors:?}");
}

/// Runs, expects exit 0, validates stdout against `schema` and returns it.
fn ok(schema_name: &str, args: &[&str]) -> Value {
    let out = run(args);
    assert_eq!(out.status.code(), Some(0), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_valid(schema_name, &v);
    v
}

fn write_form(name: &str, text: &str) -> String {
    let path = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join(name);
    std::fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn catalog_lists_the_builtin_sets() {
    let v = ok("catalog", &["catalog"]);
    let ids: Vec<&str> = v["entries"].as_array().unwrap().iter().map(|e| e["id"].as_str().unwrap()).collect();
    for id in ["a2", "d4", "e8", "leech", "d9plus"] {
        assert!(ids.contains(&id), "{ids:?}");
    }
}

#[test]
fn shells_as_json_and_csv() {
    let v = ok("shells", &["shells", "--lattice", "e8", "--max-norm-sq", "4", "--json"]);
    let counts: Vec<u64> = v["shells"].as_array().unwrap().iter().map(|s| s["count"].as_u64().unwrap()).collect();
    assert_eq!(counts, [240, 2160]);
    let out = run(&["shells", "--lattice", "a2", "--max-norm-sq", "7", "--csv"]);
    assert_eq!(String::from_utf8(out.stdout).unwrap(), "alpha,count\n2.0,6\n6.0,6\n");
    assert_eq!(run(&["shells", "--lattice", "a2", "--max-norm-sq", "7", "--csv", "--json"]).status.code(), Some(2));
}

#[test]
fn e8_shells_are_4_designs() {
    let v = ok("design", &["design", "--lattice", "e8", "--t", "4", "--max-norm-sq", "8"]);
    assert_eq!(v["report"]["all_designs"], true);
    assert_eq!(v["report"]["reports"].as_array().unwrap().len(), 4);
    let z = ok("design", &["design", "--lattice", "zd:2", "--t", "4", "--max-norm-sq", "2"]);
    assert_eq!(z["report"]["all_designs"], false);
}

#[test]
fn energy_payload_and_determinism() {
    let args = ["energy", "--lattice", "d4", "--potential", "exp:c=3.14159", "--target-tail", "1e-13", "--windowed", "3"];
    let v = ok("energy", &args);
    assert!(v["tail_bound"].as_f64().unwrap() <= 1e-13);
    assert!(v["value"].as_f64().unwrap() > 0.0);
    assert_eq!(run(&args).stdout, run(&args).stdout);
    ok("energy", &["energy", "--lattice", "d9plus", "--potential", "pow:s=6"]);
}

#[test]
fn derivatives_of_a_periodic_form() {
    let path = write_form("hex2.json", r#"{"dim": 2, "gram": [[4, 2], [2, 4]], "translations": [[0, 0], ["1/3", "1/3"]]}"#);
    let g = ok("derivatives", &["grad", "--form", &path, "--potential", "exp:c=1"]);
    assert_eq!(g["basis"].as_array().unwrap().len(), 2 + 2);
    assert!(g.get("hessian").is_none());
    let h = ok("derivatives", &["hess", "--form", &path, "--potential", "exp:c=1"]);
    let n = h["gradient"].as_array().unwrap().len();
    assert_eq!(h["hessian"].as_array().unwrap().len(), n);
    assert_eq!(h["eigenvalues"].as_array().unwrap().len(), n);
}

#[test]
fn split_for_e8() {
    let v = ok("split", &["split", "--lattice", "e8", "--y", "1", "--m", "2"]);
    assert!(v["split"]["F"].as_f64().unwrap() > 0.0);
    assert!(v["split"]["G"].as_f64().unwrap() > 0.0);
    assert_eq!(run(&["split", "--lattice", "zd:2", "--y", "1"]).status.code(), Some(1));
}

#[test]
fn certificates() {
    let v = ok("certificate", &["certify", "--lattice", "d4", "--mode", "universal", "--y-min", "0.1", "--y-max", "10", "--y-steps", "100"]);
    assert_eq!(v["verdict"], "Certified");
    let v = ok("certificate", &["certify", "--lattice", "e8", "--mode", "fc", "--c", "6.283", "--m", "2"]);
    assert_eq!(v["verdict"], "Certified");
    assert_eq!(v["claim"]["kind"], "local_min_fc");
    let v = ok("certificate", &["certify", "--lattice", "a2", "--mode", "critical", "--potential", "pow:s=3", "--m", "3"]);
    assert_eq!(v["verdict"], "Certified");

    // Refuted is a successful run.
    let rect = write_form("rect.json", r#"{"dim": 2, "gram": [[1, 0], [0, 4]]}"#);
    let v = ok("certificate", &["certify", "--form", &rect, "--mode", "fc", "--c", "1"]);
    assert_eq!(v["verdict"], "Refuted");
}

#[test]
fn optimize_trace_and_csv() {
    let start = write_form("skew.json", r#"{"dim": 2, "gram": [[1, 0.05], [0.05, 4]]}"#);
    let args = ["optimize", "--form", &start, "--potential", "exp:c=1", "--max-iters", "200"];
    let v = ok("optimize", &args);
    assert!(v["final_energy"].as_f64().unwrap() < v["start_energy"].as_f64().unwrap());
    assert_valid("form", &v["final_form"]);
    let csv = run(&[&args[..], &["--csv"]].concat());
    let text = String::from_utf8(csv.stdout).unwrap();
    assert!(text.starts_with("iteration,energy,gradient_norm,step_size\n"));
    assert_eq!(text.lines().count(), v["iterates"].as_array().unwrap().len() + 1);

    // The final form is a valid input again.
    let again = write_form("skew_final.json", &v["final_form"].to_string());
    ok("energy", &["energy", "--form", &again, "--potential", "exp:c=1"]);
}

#[test]
fn sweep_is_reproducible_across_thread_counts() {
    let args = ["sweep", "--lattice", "e8", "--m", "2", "--potential", "exp:c=6.283", "--magnitude", "1e-2", "--samples", "20", "--seed", "42"];
    let v = ok("sweep", &args);
    assert_eq!(v["summary"]["negative"], 0);
    let one = bin().args(args).env("LATENERGY_THREADS", "1").output().unwrap();
    let two = bin().args(args).env("LATENERGY_THREADS", "2").output().unwrap();
    assert_eq!(one.stdout, two.stdout);
    assert_eq!(serde_json::from_slice::<Value>(&one.stdout).unwrap(), v);
}

#[test]
fn exit_codes() {
    let code = |args: &[&str]| run(args).status.code();
    assert_eq!(code(&["energy", "--lattice", "nope", "--potential", "exp:c=1"]), Some(1));
    assert_eq!(code(&["energy", "--lattice", "a2", "--potential", "pow:s=0.5"]), Some(1));
    assert_eq!(code(&["certify", "--lattice", "e8", "--mode", "ps", "--s", "3"]), Some(1));
    assert_eq!(code(&["energy", "--form", "/nonexistent.json", "--potential", "exp:c=1"]), Some(1));
    assert_eq!(code(&["energy", "--lattice", "a2"]), Some(2));
    assert_eq!(code(&["energy", "--lattice", "a2", "--potential", "gauss:c=1"]), Some(2));
    assert_eq!(code(&["certify", "--lattice", "e8", "--mode", "ps"]), Some(2));
    assert_eq!(code(&["frobnicate"]), Some(2));
    assert_eq!(code(&["--help"]), Some(0));
    let bad = bin().args(["catalog"]).env("LATENERGY_THREADS", "zero").output().unwrap();
    assert_eq!(bad.status.code(), Some(2));
    assert!(bad.stdout.is_empty());
}
