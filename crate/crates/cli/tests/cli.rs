//! End-to-end tests of the binary: exit codes, output shapes, schema
//! conformance and byte-level determinism.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use serde_json::Value;

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_community-forge")
}

fn workspace() -> &'static Path {
    static DIR: OnceLock<tempfile::TempDir> = OnceLock::new();
    DIR.get_or_init(|| tempfile::tempdir().expect("tempdir"))
        .path()
}

const CANONICAL: &str = r#"{
  "params": {
    "l": 1.0, "c": 0.05, "e_p": 1.0, "e_q": 1.0,
    "f": {"family": "gaussian", "amplitude": 1.0, "width": 0.3},
    "g": {"family": "quadratic_bump", "amplitude": 0.9, "width": 0.25}
  },
  "seed": 42
}"#;

fn canonical_config() -> PathBuf {
    let path = workspace().join("config.json");
    if !path.exists() {
        std::fs::write(&path, CANONICAL).unwrap();
    }
    path
}

fn run(args: &[&str]) -> Output {
    Command::new(bin())
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(output: &Output) -> i32 {
    output.status.code().expect("no signal")
}

/// Construct once and share the output directory across tests.
fn constructed() -> &'static Path {
    static OUT: OnceLock<PathBuf> = OnceLock::new();
    OUT.get_or_init(|| {
        let out = workspace().join("constructed");
        let config = canonical_config();
        let output = run(&[
            "construct",
            "--config",
            config.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(
            code(&output),
            0,
            "{}",
            String::from_utf8_lossy(&output.stderr)
        );
        out
    })
}

// ---------------------------------------------------------------------------
// Minimal JSON-schema conformance: `type` and `required` (with `$ref` into
// `definitions`), which is what the shipped schemas use.
// ---------------------------------------------------------------------------

fn check_schema(schema: &Value, instance: &Value, root: &Value, at: &str) {
    let schema = if let Some(reference) = schema.get("$ref").and_then(Value::as_str) {
        let name = reference.rsplit('/').next().unwrap();
        &root["definitions"][name]
    } else {
        schema
    };
    if let Some(kinds) = schema.get("type") {
        let kinds: Vec<&str> = match kinds {
            Value::String(s) => vec![s.as_str()],
            Value::Array(a) => a.iter().filter_map(Value::as_str).collect(),
            _ => vec![],
        };
        let matches = kinds.iter().any(|kind| match *kind {
            "object" => instance.is_object(),
            "array" => instance.is_array(),
            "number" => instance.is_number(),
            "integer" => instance.is_i64() || instance.is_u64(),
            "boolean" => instance.is_boolean(),
            "string" => instance.is_string(),
            "null" => instance.is_null(),
            _ => false,
        });
        assert!(matches, "{at}: expected {kinds:?}, got {instance}");
    }
    if let Some(required) = schema.get("required").and_then(Value::as_array) {
        for key in required.iter().filter_map(Value::as_str) {
            assert!(
                instance.get(key).is_some(),
                "{at}: missing required key {key}"
            );
        }
    }
    if let Some(props) = schema.get("properties").and_then(Value::as_object) {
        for (key, sub) in props {
            if let Some(value) = instance.get(key) {
                check_schema(sub, value, root, &format!("{at}.{key}"));
            }
        }
    }
    if let Some(items) = schema.get("items") {
        if let Some(array) = instance.as_array() {
            for (i, value) in array.iter().enumerate() {
                check_schema(items, value, root, &format!("{at}[{i}]"));
            }
        }
    }
}

fn assert_matches_schema(instance_path: &Path, schema_name: &str) {
    let schema_path = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("schemas")
        .join(schema_name);
    let schema: Value =
        serde_json::from_str(&std::fs::read_to_string(schema_path).unwrap()).unwrap();
    let instance: Value =
        serde_json::from_str(&std::fs::read_to_string(instance_path).unwrap()).unwrap();
    check_schema(&schema, &instance, &schema, "$");
}

// ---------------------------------------------------------------------------

#[test]
fn construct_writes_structure_and_per_community_files() {
    let out = constructed();
    let structure: Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("structure.json")).unwrap())
            .unwrap();
    assert_eq!(structure["k"], 17);
    assert!((structure["delta_star"].as_f64().unwrap() - 2.0 / 17.0).abs() < 1e-12);
    assert_matches_schema(&out.join("structure.json"), "structure.schema.json");

    for i in 0..17 {
        let production = out.join(format!("community_{i:03}_production.csv"));
        let utility = out.join(format!("community_{i:03}_utility.csv"));
        assert!(production.exists() && utility.exists(), "community {i}");
    }
    let head = std::fs::read_to_string(out.join("community_000_production.csv")).unwrap();
    assert!(head.starts_with("y,x_star,objective,gate_rate\n"));
}

#[test]
fn construct_rejects_infeasible_cost_with_exit_2() {
    let config = workspace().join("infeasible.json");
    std::fs::write(&config, CANONICAL.replace("\"c\": 0.05", "\"c\": 1.5")).unwrap();
    let output = run(&[
        "construct",
        "--config",
        config.to_str().unwrap(),
        "--out",
        workspace().join("x1").to_str().unwrap(),
    ]);
    assert_eq!(code(&output), 2);
    let err = String::from_utf8_lossy(&output.stderr);
    assert!(err.contains("break-even"), "{err}");
}

#[test]
fn malformed_config_exits_64() {
    let config = workspace().join("broken.json");
    // Drop a required field.
    std::fs::write(&config, CANONICAL.replace("\"c\": 0.05,", "")).unwrap();
    let output = run(&[
        "construct",
        "--config",
        config.to_str().unwrap(),
        "--out",
        workspace().join("x2").to_str().unwrap(),
    ]);
    assert_eq!(code(&output), 64);
}

#[test]
fn missing_config_exits_66() {
    let output = run(&[
        "construct",
        "--config",
        workspace().join("nope.json").to_str().unwrap(),
    ]);
    assert_eq!(code(&output), 66);
}

#[test]
fn verify_passes_on_constructed_structure() {
    let out = constructed();
    let config = canonical_config();
    let report_dir = workspace().join("verify_ok");
    let output = run(&[
        "verify",
        "--config",
        config.to_str().unwrap(),
        "--structure",
        out.join("structure.json").to_str().unwrap(),
        "--out",
        report_dir.to_str().unwrap(),
        "--agents",
        "64",
    ]);
    assert_eq!(
        code(&output),
        0,
        "{}",
        String::from_utf8_lossy(&output.stderr)
    );
    let report_path = report_dir.join("nash_report.json");
    assert_matches_schema(&report_path, "nash_report.schema.json");
    let report: Value =
        serde_json::from_str(&std::fs::read_to_string(report_path).unwrap()).unwrap();
    assert_eq!(report["pass"], true);
}

#[test]
fn verify_fails_on_tampered_structure_with_exit_1() {
    let out = constructed();
    let config = canonical_config();
    let mut structure: Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("structure.json")).unwrap())
            .unwrap();
    // Split the first community into unequal halves.
    let communities = structure["communities"].as_array_mut().unwrap();
    let first = communities[0].clone();
    let start = first["start"].as_f64().unwrap();
    let length = first["length"].as_f64().unwrap();
    let mut a = first.clone();
    a["length"] = (0.3 * length).into();
    let mut b = first;
    b["start"] = (start + 0.3 * length).into();
    b["length"] = (0.7 * length).into();
    communities[0] = a;
    communities.insert(1, b);
    structure["k"] = (communities.len() as u64).into();

    let tampered = workspace().join("tampered.json");
    std::fs::write(&tampered, serde_json::to_string_pretty(&structure).unwrap()).unwrap();
    let output = run(&[
        "verify",
        "--config",
        config.to_str().unwrap(),
        "--structure",
        tampered.to_str().unwrap(),
        "--out",
        workspace().join("verify_bad").to_str().unwrap(),
        "--agents",
        "64",
    ]);
    assert_eq!(
        code(&output),
        1,
        "{}",
        String::from_utf8_lossy(&output.stderr)
    );
}

#[test]
fn verify_missing_structure_exits_66() {
    let config = canonical_config();
    let output = run(&[
        "verify",
        "--config",
        config.to_str().unwrap(),
        "--structure",
        workspace().join("absent.json").to_str().unwrap(),
    ]);
    assert_eq!(code(&output), 66);
}

#[test]
fn sweep_rejects_unknown_parameter() {
    let config = canonical_config();
    let output = run(&[
        "sweep",
        "--config",
        config.to_str().unwrap(),
        "--parameter",
        "gravity",
        "--start",
        "0",
        "--end",
        "1",
    ]);
    assert_eq!(code(&output), 64);
}

#[test]
fn sweep_bound_is_nonincreasing_in_cost() {
    let config = canonical_config();
    let out = workspace().join("sweep");
    let output = run(&[
        "sweep",
        "--config",
        config.to_str().unwrap(),
        "--parameter",
        "c",
        "--start",
        "0.3",
        "--end",
        "0.6",
        "--steps",
        "4",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(
        code(&output),
        0,
        "{}",
        String::from_utf8_lossy(&output.stderr)
    );
    let csv = std::fs::read_to_string(out.join("sweep.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "value,max_interval_length,K,total_utility,expert_delta_total,t_C"
    );
    let bounds: Vec<f64> = lines
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert_eq!(bounds.len(), 4);
    for pair in bounds.windows(2) {
        assert!(pair[1] <= pair[0] + 1e-12, "{bounds:?}");
    }
}

#[test]
fn sweep_bound_column_matches_scan_oracle() {
    // The break-even bound column, re-derived by a fine running-integral
    // scan at each swept cost level.
    let config = canonical_config();
    let out = workspace().join("sweep_golden");
    let output = run(&[
        "sweep",
        "--config",
        config.to_str().unwrap(),
        "--parameter",
        "c",
        "--start",
        "0.2",
        "--end",
        "0.6",
        "--steps",
        "5",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&output), 0);
    let csv = std::fs::read_to_string(out.join("sweep.csv")).unwrap();
    let scan_bound = |c: f64| {
        let n = 200_000usize;
        let h = 1.0 / n as f64;
        let mut acc = 0.0;
        let mut best = 0.0f64;
        for i in 0..n {
            let x = (i as f64 + 0.5) * h;
            acc += h * (0.9 * (-x * x / (2.0 * 0.3 * 0.3)).exp() - c);
            if acc >= 0.0 {
                best = (i + 1) as f64 * h;
            }
        }
        best
    };
    for (i, line) in csv.lines().skip(1).enumerate() {
        let mut cols = line.split(',');
        let c: f64 = cols.next().unwrap().parse().unwrap();
        let bound: f64 = cols.next().unwrap().parse().unwrap();
        let oracle = scan_bound(c);
        assert!(
            (bound - oracle).abs() < 2e-5,
            "row {i}: c={c} bound {bound} vs oracle {oracle}"
        );
    }
}

#[test]
fn zero_length_sweep_emits_single_row() {
    let config = canonical_config();
    let out = workspace().join("sweep1");
    let output = run(&[
        "sweep",
        "--config",
        config.to_str().unwrap(),
        "--parameter",
        "E_p",
        "--start",
        "1.0",
        "--end",
        "1.0",
        "--steps",
        "1",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&output), 0);
    let csv = std::fs::read_to_string(out.join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2); // header + one row
}

#[test]
fn filter_analysis_reports_midpoint_agent() {
    let out = constructed();
    let config = canonical_config();
    let dir = workspace().join("filter");
    let output = run(&[
        "filter-analysis",
        "--config",
        config.to_str().unwrap(),
        "--structure",
        out.join("structure.json").to_str().unwrap(),
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert_eq!(
        code(&output),
        0,
        "{}",
        String::from_utf8_lossy(&output.stderr)
    );
    let path = dir.join("filter_analysis.json");
    assert_matches_schema(&path, "filter_analysis.schema.json");
    let analysis: Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();

    // Community 0 spans [-1, -1 + 2/17); its midpoint is -1 + 1/17.
    let mid = -1.0 + 1.0 / 17.0;
    let agent = analysis["optimal_filter_agent"].as_f64().unwrap();
    let grid_step = (2.0 / 17.0) / 255.0;
    assert!(
        (agent - mid).abs() <= grid_step + 1e-12,
        "agent {agent} mid {mid}"
    );
    assert!(analysis["relative_gap"].as_f64().unwrap() < 1e-6);
    // The plan only ever collects strictly positive per-producer gains.
    assert!(analysis["expert"]["delta_total"].as_f64().unwrap() >= 0.0);

    let gains = std::fs::read_to_string(dir.join("expert_gains.csv")).unwrap();
    assert!(gains.starts_with("y,gain,P_at_xstar,q_at_xstar\n"));
}

#[test]
fn profile_dumps_all_grids() {
    let config = canonical_config();
    let dir = workspace().join("profile");
    let output = run(&[
        "profile",
        "--config",
        config.to_str().unwrap(),
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert_eq!(
        code(&output),
        0,
        "{}",
        String::from_utf8_lossy(&output.stderr)
    );
    for (file, header) in [
        ("demand.csv", "x,P(x)"),
        ("supply.csv", "x,Q_star,flagged"),
        ("production.csv", "y,x_star,objective,gate_rate"),
        ("utility.csv", "y,U_d,U_s"),
    ] {
        let text = std::fs::read_to_string(dir.join(file)).unwrap();
        assert!(text.starts_with(header), "{file}");
        assert!(text.lines().count() > 10, "{file}");
    }
}

#[test]
fn identical_config_and_seed_reproduce_byte_identical_outputs() {
    let config = canonical_config();
    let dirs = [workspace().join("det1"), workspace().join("det2")];
    for dir in &dirs {
        let output = run(&[
            "construct",
            "--config",
            config.to_str().unwrap(),
            "--out",
            dir.to_str().unwrap(),
            "--seed",
            "7",
        ]);
        assert_eq!(code(&output), 0);
        let output = run(&[
            "verify",
            "--config",
            config.to_str().unwrap(),
            "--structure",
            dir.join("structure.json").to_str().unwrap(),
            "--out",
            dir.to_str().unwrap(),
            "--seed",
            "7",
            "--agents",
            "32",
        ]);
        assert_eq!(code(&output), 0);
    }
    for name in [
        "structure.json",
        "nash_report.json",
        "community_000_production.csv",
        "community_016_utility.csv",
    ] {
        let a = std::fs::read(dirs[0].join(name)).unwrap();
        let b = std::fs::read(dirs[1].join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between identical runs");
    }
}

#[test]
fn thread_cap_env_var_is_honored_and_deterministic() {
    let config = canonical_config();
    let dir = workspace().join("threads1");
    let status = Command::new(bin())
        .args([
            "construct",
            "--config",
            config.to_str().unwrap(),
            "--out",
            dir.to_str().unwrap(),
        ])
        .env("COMMUNITY_FORGE_THREADS", "1")
        .status()
        .unwrap();
    assert!(status.success());
    let capped = std::fs::read(dir.join("structure.json")).unwrap();
    let free = std::fs::read(constructed().join("structure.json")).unwrap();
    assert_eq!(capped, free);
}
