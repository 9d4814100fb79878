//! Golden-file and behavior tests for the `nestlab` binary.
//! Set `UPDATE_GOLDEN=1` to regenerate `tests/golden`.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use nestlab::cli::{matrix_from_json, Task};
use serde_json::Value;

fn root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

fn nestlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nestlab"))
        .args(args)
        .env_remove("NESTLAB_SEED")
        .output()
        .expect("failed to launch nestlab")
}

fn fixtures() -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = std::fs::read_dir(root().join("tests/fixtures"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .collect();
    v.sort();
    v
}

fn task_of(path: &Path) -> String {
    let v: Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    v["task"].as_str().unwrap().to_string()
}

fn report(path: &Path) -> Output {
    nestlab(&[&task_of(path), "--input", path.to_str().unwrap(), "--seed", "7", "--json", "-", "--quiet"])
}

/// Every array of rows of `[re, im]` pairs inside a report.
fn collect_matrices<'a>(v: &'a Value, out: &mut Vec<&'a Value>) {
    match v {
        Value::Array(rows)
            if !rows.is_empty()
                && rows.iter().all(|r| {
                    r.as_array().is_some_and(|r| {
                        !r.is_empty() && r.iter().all(|e| e.as_array().is_some_and(|p| p.len() == 2 && p.iter().all(Value::is_number)))
                    })
                }) =>
        {
            out.push(v)
        }
        Value::Array(xs) => xs.iter().for_each(|x| collect_matrices(x, out)),
        Value::Object(m) => m.values().for_each(|x| collect_matrices(x, out)),
        _ => {}
    }
}

#[test]
fn golden_reports() {
    let update = std::env::var_os("UPDATE_GOLDEN").is_some();
    let mut tasks_seen = std::collections::BTreeSet::new();
    for f in fixtures() {
        let out = report(&f);
        assert_eq!(out.status.code(), Some(0), "{}: {}", f.display(), String::from_utf8_lossy(&out.stderr));
        tasks_seen.insert(task_of(&f));
        let golden = root().join("tests/golden").join(f.file_name().unwrap());
        let body = String::from_utf8(out.stdout).unwrap();
        if update {
            std::fs::write(&golden, &body).unwrap();
        } else {
            let expect = std::fs::read_to_string(&golden)
                .unwrap_or_else(|_| panic!("missing {}; run with UPDATE_GOLDEN=1", golden.display()));
            assert_eq!(body, expect, "report for {} differs from its golden file", f.display());
        }
    }
    for t in Task::ALL {
        assert!(tasks_seen.contains(t.name()), "no fixture for task {}", t.name());
    }
}

#[test]
fn reports_are_byte_identical_across_runs() {
    for f in fixtures() {
        assert_eq!(report(&f).stdout, report(&f).stdout, "{}", f.display());
    }
}

#[test]
fn emitted_matrices_reparse() {
    for f in fixtures() {
        let v: Value = serde_json::from_slice(&report(&f).stdout).unwrap();
        assert_eq!(v["tolerance"]["eq_tol"], 1e-9);
        assert_eq!(v["nestlab_version"], env!("CARGO_PKG_VERSION"));
        let mut ms = Vec::new();
        collect_matrices(&v, &mut ms);
        for m in ms {
            let rows = m.as_array().unwrap().len();
            let cols = m[0].as_array().unwrap().len();
            let parsed = matrix_from_json(m, "$", rows, cols).unwrap();
            let text = serde_json::to_string(&nestlab::cli::matrix_to_json(&parsed)).unwrap();
            let again = matrix_from_json(&serde_json::from_str(&text).unwrap(), "$", rows, cols).unwrap();
            assert_eq!(parsed.distance(&again), 0.0);
        }
    }
}

#[test]
fn text_report_headline() {
    let f = root().join("tests/fixtures/diagnose_upper_triangular.json");
    let out = nestlab(&["diagnose", "--input", f.to_str().unwrap()]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().next(), Some("NEST ALGEBRA (factorization: YES)"));
}

fn scratch(name: &str, body: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("nestlab-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p
}

#[test]
fn validation_errors_exit_2_with_a_json_path() {
    let p = scratch("bad.json", r#"{"version": "1", "ambient": {"dim": 2}, "task": "lat", "params": {"generators": ["A"]}}"#);
    let out = nestlab(&["lat", "--input", p.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("$.params.generators[0]"));

    let p = scratch("pd.json", r#"{"version": "1", "ambient": {"dim": 2},
        "matrices": {"X": [[[1,0],[2,0]],[[2,0],[1,0]]]}, "task": "factorize", "params": {"x": "X", "nest": [[0]]}}"#);
    assert_eq!(nestlab(&["factorize", "--input", p.to_str().unwrap()]).status.code(), Some(2));

    let missing = nestlab(&["lat", "--input", "/nonexistent/problem.json"]);
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn seed_from_environment() {
    let f = root().join("tests/fixtures/lat_t2.json");
    let out = Command::new(env!("CARGO_BIN_EXE_nestlab"))
        .args(["lat", "--input", f.to_str().unwrap(), "--json", "-", "--quiet"])
        .env("NESTLAB_SEED", "41")
        .output()
        .unwrap();
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["seed"], 41);
}

#[test]
fn published_schema_matches_the_loader() {
    let schema: Value = serde_json::from_str(&std::fs::read_to_string(root().join("../../docs/problem-schema.json")).unwrap()).unwrap();
    let tasks: Vec<&str> = schema["properties"]["task"]["enum"].as_array().unwrap().iter().map(|t| t.as_str().unwrap()).collect();
    assert_eq!(tasks, Task::ALL.map(Task::name));
    let params = schema["properties"]["params"]["properties"].as_object().unwrap();
    for key in ["generators", "projections", "nest", "x", "p", "q", "mode", "epsilon", "alpha", "seed", "budget", "max_iter", "samples"] {
        assert!(params.contains_key(key), "{key}");
    }
}
