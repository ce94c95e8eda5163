use std::process::Command;

use reso_cli::{run, Outcome, EXIT_NUMERICAL, EXIT_OK, EXIT_USAGE, EXIT_VERIFY_FAILED};
use serde_json::Value;

fn reso(args: &[&str]) -> Outcome {
    run(std::iter::once("reso").chain(args.iter().copied()))
}

fn json(out: &Outcome) -> Value {
    assert_eq!(out.code, EXIT_OK, "stderr: {}", out.stderr);
    serde_json::from_str(&out.stdout).expect("stdout is JSON")
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

#[test]
fn weights_report() {
    let v = json(&reso(&["weights", "--weights", "1,2,3"]));
    assert_eq!(v["orders"], serde_json::json!([1, 2, 3]));
    assert_eq!(v["global_order"], 3);
    assert_eq!(v["linear_flag"], false);
    assert_eq!(v["levels"]["2"], serde_json::json!([[0, 1, 0], [2, 0, 0]]));
}

#[test]
fn weights_with_common_factor_is_a_usage_error() {
    let out = reso(&["weights", "--weights", "2,4"]);
    assert_eq!(out.code, EXIT_USAGE);
    assert!(out.stderr.contains("gcd 2"), "{}", out.stderr);
}

#[test]
fn unsorted_weights_report_the_permutation() {
    let v = json(&reso(&["weights", "--weights", "3,1,2"]));
    assert_eq!(v["weights"], serde_json::json!([1, 2, 3]));
    assert_eq!(v["permutation"], serde_json::json!([1, 2, 0]));

    let out = reso(&["quasi", "--domain", "ball:n=3", "--weights", "3,1,2", "--samples", "1000"]);
    assert_eq!(out.code, EXIT_USAGE);
}

#[test]
fn negative_weight_is_rejected() {
    let out = reso(&["weights", "--weights", "1,-2"]);
    assert_eq!(out.code, EXIT_USAGE);
    assert!(out.stderr.contains("-2"), "{}", out.stderr);
}

#[test]
fn bad_domain_prints_the_grammar() {
    let out = reso(&["quasi", "--domain", "cube:n=2"]);
    assert_eq!(out.code, EXIT_USAGE);
    assert!(out.stderr.contains("symell:q=<q>"), "{}", out.stderr);
}

#[test]
fn bad_arguments_print_both_formats() {
    let out = reso(&["verify", "--domain", "ball:n=2"]);
    assert_eq!(out.code, EXIT_USAGE);
    assert!(out.stderr.contains("domain specs"));
    assert!(out.stderr.contains("map files are JSON"));
}

#[test]
fn help_exits_cleanly() {
    let out = reso(&["--help"]);
    assert_eq!(out.code, EXIT_OK);
    assert!(out.stdout.contains("quasi"));
}

#[test]
fn zapalowski_degree_suite_without_sampling() {
    let dir = tempfile::tempdir().unwrap();
    let map = dir.path().join("zap4.json");
    let out = reso(&["example", "zapalowski", "--n", "4", "--out", map.to_str().unwrap()]);
    assert_eq!(out.code, EXIT_OK);
    let v = json(&reso(&[
        "verify",
        "--map",
        map.to_str().unwrap(),
        "--domain",
        "symell:q=1,n=4",
        "--weights",
        "1,2,3,4",
        "--suite",
        "degree",
    ]));
    assert_eq!(v["resonance_orders"], serde_json::json!([1, 2, 3, 4]));
    let rows = v["reports"][0]["degree_table"].as_array().unwrap();
    for (i, row) in rows.iter().enumerate() {
        assert_eq!(row["degree"], i as i64 + 1);
        assert_eq!(row["resonance_order"], i as i64 + 1);
        assert_eq!(row["theorem"], "pass");
    }
    assert_eq!(v["status"], "pass");
}

#[test]
fn broken_map_fails_verification() {
    let dir = tempfile::tempdir().unwrap();
    let map = dir.path().join("double.json");
    std::fs::write(
        &map,
        r#"{"dim": 2, "components": [[{"alpha": [1, 0], "re": 2.0, "im": 0.0}], [{"alpha": [0, 1], "re": 1.0, "im": 0.0}]]}"#,
    )
    .unwrap();
    let out = reso(&[
        "verify",
        "--map",
        map.to_str().unwrap(),
        "--domain",
        "ball:n=2",
        "--suite",
        "membership",
        "--samples",
        "4096",
    ]);
    assert_eq!(out.code, EXIT_VERIFY_FAILED);
    let v: Value = serde_json::from_str(&out.stdout).unwrap();
    assert_eq!(v["reports"][0]["status"], "fail");
}

#[test]
fn malformed_map_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let map = dir.path().join("bad.json");
    std::fs::write(&map, r#"{"dim": 2, "components": []}"#).unwrap();
    let out = reso(&["verify", "--map", map.to_str().unwrap(), "--domain", "ball:n=2"]);
    assert_eq!(out.code, EXIT_USAGE);
    assert!(out.stderr.contains("map files are JSON"));
}

#[test]
fn numerical_failures_exit_with_three() {
    let out = reso(&["gram", "--domain", "ball:n=2", "--level", "2", "--samples", "4096", "--max-condition", "1"]);
    assert_eq!(out.code, EXIT_NUMERICAL, "{}", out.stderr);
    let out = reso(&["quasi", "--domain", "symell:q=1,n=4", "--samples", "4096"]);
    assert_eq!(out.code, EXIT_NUMERICAL, "{}", out.stderr);
}

#[test]
fn json_flag_writes_file_and_prints_table() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("q.json");
    let out = reso(&[
        "quasi",
        "--domain",
        "ellipsoid:p=1,2",
        "--weights",
        "1,2",
        "--samples",
        "65536",
        "--json",
        path.to_str().unwrap(),
    ]);
    assert_eq!(out.code, EXIT_OK, "{}", out.stderr);
    assert!(out.stdout.contains("nu = 2"), "{}", out.stdout);
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(v["quasi"]["orders"], serde_json::json!([1, 2]));
    assert_eq!(v["quasi"]["sampling"]["points"], 65536);
    assert_eq!(v["quasi"]["sampling"]["batches"], 64);
    assert!(v["quasi"]["policy"]["zero_sigma"].is_number());
}

#[test]
fn same_config_gives_identical_bytes_across_thread_counts() {
    let base = ["quasi", "--domain", "symell:q=1,n=2", "--samples", "32768", "--seed", "17"];
    let a = reso(&base);
    let b = reso(&base);
    let mut with_threads = vec!["--threads", "1"];
    with_threads.extend(base);
    let c = reso(&with_threads);
    with_threads[1] = "4";
    let d = reso(&with_threads);
    assert_eq!(a.code, EXIT_OK, "{}", a.stderr);
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(a.stdout, c.stdout);
    assert_eq!(a.stdout, d.stdout);

    let other = reso(&["quasi", "--domain", "symell:q=1,n=2", "--samples", "32768", "--seed", "18"]);
    assert_ne!(a.stdout, other.stdout);
}

#[test]
fn doubling_samples_shrinks_standard_errors() {
    let errors = |samples: &str| {
        let v = json(&reso(&["gram", "--domain", "symell:q=1,n=2", "--level", "4", "--samples", samples]));
        let se: Vec<f64> = v["std_errors"]
            .as_array()
            .unwrap()
            .iter()
            .flat_map(|row| row.as_array().unwrap().iter().map(|x| x.as_f64().unwrap()))
            .collect();
        median(se)
    };
    assert!(errors("65536") < errors("32768"));
}

#[test]
fn gram_reports_representers() {
    let v = json(&reso(&["gram", "--domain", "ball:n=2", "--weights", "1,2", "--level", "2", "--samples", "65536"]));
    assert_eq!(v["monomials"], serde_json::json!(["(0,1)", "(2,0)"]));
    let reps = v["representers"].as_array().unwrap();
    assert_eq!(reps.len(), 2);
    assert_eq!(reps[0]["degree"]["d_alpha"], 1);
    assert_eq!(reps[1]["degree"]["d_alpha"], 2);
}

#[test]
fn example_maps_round_trip() {
    let v = json(&reso(&["example", "rotation", "--weights", "1,2", "--theta", "0.7"]));
    assert_eq!(v["dim"], 2);
    let re = v["components"][1][0]["re"].as_f64().unwrap();
    assert!((re - 1.4f64.cos()).abs() < 1e-15);
    let v = json(&reso(&["example", "zapalowski", "--n", "2"]));
    assert_eq!(v["components"][1].as_array().unwrap().len(), 2);
    let out = reso(&["example", "zapalowski", "--n", "1"]);
    assert_eq!(out.code, EXIT_USAGE);
}

#[test]
fn rotation_passes_the_full_suite() {
    let dir = tempfile::tempdir().unwrap();
    let map = dir.path().join("rot.json");
    let out = reso(&["example", "rotation", "--weights", "1,2", "--theta", "0.7", "--out", map.to_str().unwrap()]);
    assert_eq!(out.code, EXIT_OK);
    let v = json(&reso(&[
        "verify",
        "--map",
        map.to_str().unwrap(),
        "--domain",
        "symell:q=1,n=2",
        "--samples",
        "65536",
        "--seed",
        "3",
    ]));
    let statuses: Vec<&str> = v["reports"].as_array().unwrap().iter().map(|r| r["status"].as_str().unwrap()).collect();
    assert_eq!(statuses.len(), 7);
    assert!(!statuses.contains(&"fail"), "{statuses:?}");
    assert_eq!(v["reports"][6]["status"], "not-applicable");
}

#[test]
fn seed_can_come_from_the_environment() {
    let bin = env!("CARGO_BIN_EXE_reso");
    let args = ["quasi", "--domain", "ball:n=2", "--samples", "8192"];
    let from_env = Command::new(bin).args(args).env("RESO_SEED", "99").output().unwrap();
    let from_flag = Command::new(bin).args(args).args(["--seed", "99"]).env_remove("RESO_SEED").output().unwrap();
    assert!(from_env.status.success());
    assert_eq!(from_env.stdout, from_flag.stdout);
}
