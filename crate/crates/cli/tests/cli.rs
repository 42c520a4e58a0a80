use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const SINGLE: &str = r#"
scaling = 1
[[cluster]]
id = 1
capacity = 1
service_rates = [0.0, 1.0]
energy_rates = [0.0, 1.0]
component_count_base = 1
[[class]]
id = 1
arrival_rate = 2.0
eligible_clusters = [1]
"#;

const TWO_CLUSTERS: &str = r#"
scaling = 2
[[cluster]]
id = 1
capacity = 2
service_rates = [0.0, 1.0, 1.6]
energy_rates = [0.3, 1.0, 1.3]
component_count_base = 1
[[cluster]]
id = 2
capacity = 2
service_rates = [0.0, 1.2, 2.0]
energy_rates = [0.2, 1.1, 1.9]
component_count_base = 1
[[class]]
id = 1
arrival_rate = 1.5
eligible_clusters = [1, 2]
"#;

fn powerfarm(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_powerfarm"))
        .current_dir(dir)
        .env_remove("POWERFARM_SEED")
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "status {:?}\nstdout:\n{}\nstderr:\n{}",
        out.status,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn setup() -> TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("single.toml"), SINGLE).unwrap();
    std::fs::write(dir.path().join("two.toml"), TWO_CLUSTERS).unwrap();
    dir
}

/// Data lines of a CSV output, after the provenance comment.
fn csv_lines(path: PathBuf) -> Vec<String> {
    let text = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    let mut lines = text.lines();
    let first = lines.next().unwrap();
    assert!(first.starts_with("# schema_version=1 manifest_sha256="), "{first}");
    lines.map(str::to_string).collect()
}

fn manifest(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn indices_fixture_and_auto_estimate() {
    let dir = setup();
    ok(&powerfarm(dir.path(), &["indices", "--instance", "single.toml", "--e", "0.5", "--out-dir", "a"]));
    let table = std::fs::read_to_string(dir.path().join("a/indices.txt")).unwrap();
    let row = table.lines().last().unwrap();
    let cols: Vec<&str> = row.split('\t').collect();
    let eta: f64 = cols[2].parse().unwrap();
    assert!((eta - 1.0).abs() <= 1e-14, "{row}");

    let stdout = ok(&powerfarm(dir.path(), &["indices", "--instance", "single.toml", "--out-dir", "b"]));
    let line = stdout.lines().find(|l| l.starts_with("e0 = ")).unwrap();
    let e0: f64 = line.split_whitespace().nth(2).unwrap().parse().unwrap();
    assert!((e0 - 1.0).abs() <= 1e-12, "{line}");
}

#[test]
fn bad_instance_exits_with_code_2() {
    let dir = setup();
    let bad = SINGLE.replace("service_rates = [0.0, 1.0]", "service_rates = [0.5, 0.2]");
    std::fs::write(dir.path().join("bad.toml"), bad).unwrap();
    let out = powerfarm(dir.path(), &["indices", "--instance", "bad.toml"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("service_rates[0] must be 0"), "{err}");
    std::fs::write(dir.path().join("garbage.toml"), "scaling = \"x\"").unwrap();
    assert_eq!(powerfarm(dir.path(), &["estar", "--instance", "garbage.toml"]).status.code(), Some(2));
    assert_eq!(powerfarm(dir.path(), &["simulate", "--instance", "single.toml", "--h", "0"]).status.code(), Some(2));
}

#[test]
fn csv_headers_match_golden_file() {
    let dir = setup();
    let p = dir.path();
    ok(&powerfarm(
        p,
        &["simulate", "--instance", "two.toml", "--compare", "pas", "--horizon", "100", "--bin-width", "10", "--out-dir", "sim"],
    ));
    ok(&powerfarm(p, &["scenario1", "--count", "2", "--horizon", "20", "--out-dir", "s1"]));
    ok(&powerfarm(p, &["scenario2", "--h", "5", "--out-dir", "s2"]));
    ok(&powerfarm(p, &["efit", "--instance", "two.toml", "--points", "4", "--out-dir", "fit"]));
    ok(&powerfarm(p, &["estar", "--instance", "two.toml", "--out-dir", "star"]));
    let files = [
        ("metrics.csv", "sim"),
        ("bins.csv", "sim"),
        ("scenario1_runs.csv", "s1"),
        ("scenario1_cdf.csv", "s1"),
        ("scenario2_summary.csv", "s2"),
        ("scenario2_bins.csv", "s2"),
        ("gamma.csv", "fit"),
        ("estar.csv", "star"),
    ];
    let mut actual = String::new();
    for (name, sub) in files {
        let header = csv_lines(p.join(sub).join(name)).remove(0);
        actual.push_str(&format!("{name}: {header}\n"));
    }
    let golden = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/headers.txt")).unwrap();
    assert_eq!(actual, golden);
}

#[test]
fn simulate_compare_is_deterministic_and_replayable() {
    let dir = setup();
    let p = dir.path();
    let args = |out: &'static str| {
        vec!["simulate", "--instance", "two.toml", "--policy", "mpmp", "--compare", "jsq", "--horizon", "300", "--seed", "5", "--out-dir", out]
    };
    let stdout = ok(&powerfarm(p, &args("x")));
    assert!(stdout.contains("mpmp vs jsq: relative difference"));
    ok(&powerfarm(p, &args("y")));
    let x = std::fs::read(p.join("x/metrics.csv")).unwrap();
    assert_eq!(x, std::fs::read(p.join("y/metrics.csv")).unwrap());
    let rows = csv_lines(p.join("x/metrics.csv"));
    assert_eq!(rows.len(), 3);
    assert!(!rows[1].ends_with(','), "primary row carries the relative difference");
    assert!(rows[2].ends_with(','));

    ok(&powerfarm(p, &["replay", "x/manifest.json", "--out-dir", "z"]));
    assert_eq!(x, std::fs::read(p.join("z/metrics.csv")).unwrap());
    assert_eq!(manifest(&p.join("x")), manifest(&p.join("z")));
    let m = manifest(&p.join("x"));
    let paths: Vec<&str> = m["outputs"].as_array().unwrap().iter().map(|o| o["path"].as_str().unwrap()).collect();
    assert_eq!(paths, ["metrics.csv"]);
}

#[test]
fn seed_precedence_flag_env_file() {
    let dir = setup();
    let p = dir.path();
    std::fs::write(p.join("cfg.toml"), "[simulation]\nseed = 11\nhorizon = 50.0\n").unwrap();
    let seed_of = |out: &str| manifest(&p.join(out))["plan"]["sim"]["seed"].as_u64().unwrap();
    let base = ["simulate", "--instance", "single.toml", "--policy", "jsq", "--config", "cfg.toml", "--out-dir"];

    ok(&powerfarm(p, &[&base[..], &["a"]].concat()));
    assert_eq!(seed_of("a"), 11);
    assert_eq!(manifest(&p.join("a"))["plan"]["sim"]["horizon"].as_f64(), Some(50.0));

    let env = Command::new(env!("CARGO_BIN_EXE_powerfarm"))
        .current_dir(p)
        .env("POWERFARM_SEED", "22")
        .args([&base[..], &["b"]].concat())
        .output()
        .unwrap();
    ok(&env);
    assert_eq!(seed_of("b"), 22);

    ok(&powerfarm(p, &[&base[..], &["c", "--seed", "33"]].concat()));
    assert_eq!(seed_of("c"), 33);
}

#[test]
fn scenario1_smoke_run() {
    let dir = setup();
    let p = dir.path();
    ok(&powerfarm(p, &["scenario1", "--count", "3", "--rho", "0.3", "--horizon", "30", "--out-dir", "s"]));
    let m = manifest(&p.join("s"));
    assert_eq!(m["plan"]["rho"].as_f64(), Some(0.3));
    let cdf = csv_lines(p.join("s/scenario1_cdf.csv"));
    let mut per_pair: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for row in &cdf[1..] {
        let cols: Vec<&str> = row.split(',').collect();
        per_pair.entry(cols[0].to_string()).or_default().push(cols[2].parse().unwrap());
    }
    assert_eq!(per_pair.keys().collect::<Vec<_>>(), ["jsq-pas", "mpmp-pas"]);
    for values in per_pair.values() {
        assert_eq!(values.len(), 3);
        assert!(values.windows(2).all(|w| w[0] <= w[1]));
    }
    assert_eq!(csv_lines(p.join("s/scenario1_runs.csv")).len(), 1 + 3 * 3);
}

#[test]
fn scenario2_has_one_row_per_hour() {
    let dir = setup();
    let p = dir.path();
    let stdout = ok(&powerfarm(p, &["scenario2", "--h", "10", "--policies", "mpmp,pas", "--out-dir", "s"]));
    assert!(stdout.contains("relative difference to pas"));
    let bins = csv_lines(p.join("s/scenario2_bins.csv"));
    assert_eq!(bins.len(), 1 + 2 * 24);
    assert_eq!(csv_lines(p.join("s/scenario2_summary.csv")).len(), 3);
}

#[test]
fn trace_input_is_pinned_by_hash() {
    let dir = setup();
    let p = dir.path();
    std::fs::write(p.join("trace.csv"), "timestamp_seconds,class_id\n0.5,1\n1.0,1\n2.5,1\n").unwrap();
    ok(&powerfarm(
        p,
        &["simulate", "--instance", "single.toml", "--policy", "pas", "--trace", "trace.csv", "--horizon", "5", "--out-dir", "t"],
    ));
    let rows = csv_lines(p.join("t/metrics.csv"));
    let cols: Vec<&str> = rows[1].split(',').collect();
    let replications: u64 = cols[1].parse().unwrap();
    assert_eq!(cols[10].parse::<u64>().unwrap(), 3 * replications);
    std::fs::write(p.join("trace.csv"), "timestamp_seconds,class_id\n0.5,1\n").unwrap();
    let out = powerfarm(p, &["replay", "t/manifest.json", "--out-dir", "u"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("SHA-256"));
}

#[test]
fn unknown_policy_is_rejected() {
    let dir = setup();
    let out = powerfarm(dir.path(), &["simulate", "--instance", "single.toml", "--policy", "random"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown policy"));
}

#[test]
fn verify_quick_reports_every_criterion() {
    let dir = setup();
    let out = powerfarm(dir.path(), &["verify", "--level", "quick", "--out-dir", "v"]);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("v/report.json")).unwrap()).unwrap();
    let criteria = report["criteria"].as_array().unwrap();
    let ids: Vec<u64> = criteria.iter().map(|c| c["id"].as_u64().unwrap()).collect();
    assert_eq!(ids, (1..=11).collect::<Vec<_>>());
    let all_passed = report["all_passed"].as_bool().unwrap();
    assert_eq!(out.status.success(), all_passed);
    assert_eq!(criteria.iter().all(|c| c["passed"].as_bool().unwrap()), all_passed);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(stdout.lines().filter(|l| l.starts_with("[PASS]") || l.starts_with("[FAIL]")).count(), 11);
}

#[test]
fn shipped_preset_matches_builtin() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../presets/appendix_k.toml");
    let text = std::fs::read_to_string(path).unwrap();
    let shipped = powerfarm::model::FarmInstance::from_toml_str(&text).unwrap();
    assert_eq!(shipped, powerfarm::model::preset_appendix_k(10));
}
