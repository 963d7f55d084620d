//! End-to-end runs of the `asymreg` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn asymreg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_asymreg"))
        .args(args)
        .env_remove("ASYMREG_POLICY_ENDPOINT")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = asymreg(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(args: &[&str]) -> i32 {
    asymreg(args).status.code().expect("exit code")
}

fn fixture() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/casestudy.jsonl")
}

fn jsonl(path: &Path) -> Vec<Value> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

const SMALL: &str = r#"{"corpus":{"max_rules":8,"rounds":2,"per_condition_cap":20,"seed":1}}"#;

/// Builds the small corpus into `dir/data`.
fn small_dataset(dir: &Path) -> PathBuf {
    let config = dir.join("small.json");
    fs::write(&config, SMALL).unwrap();
    let data = dir.join("data");
    ok(&["--config", p(&config), "--out", p(&data), "gen-dataset"]);
    data
}

#[test]
fn space_size_exact_and_rounded() {
    assert_eq!(ok(&["space-size", "9"]).trim(), "5885385");
    assert_eq!(ok(&["space-size", "31", "--sci"]).trim(), "2.2e27");
    assert_eq!(ok(&["space-size", "31"]).trim(), "2169955876996415096904924575");
}

#[test]
fn powers_and_keys() {
    assert_eq!(ok(&["leading-power", "1 / ( x + 1 )"]).trim(), "p0=0 pinf=-1");
    assert_eq!(ok(&["leading-power", "x - x"]).trim(), "zero-function");
    assert_eq!(ok(&["canonical", "1 - x"]).trim(), "1,-1|1");
    assert_eq!(ok(&["canonical", "x + 1"]), ok(&["canonical", "( 1 ) + x"]));
}

#[test]
fn exit_codes() {
    assert_eq!(code(&["bogus"]), 2);
    assert_eq!(code(&["search", "--method", "gvae", "--holdout", "x.jsonl"]), 2);
    assert_eq!(code(&["leading-power", "1 +"]), 4);
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.jsonl");
    assert_eq!(code(&["--out", p(dir.path()), "report", "--join", p(&missing)]), 3);
    let out = dir.path().join("out");
    let holdout = fixture();
    let args = [
        "--out",
        p(&out),
        "search",
        "--method",
        "ng-mcts",
        "--prior",
        "nn",
        "--holdout",
        p(&holdout),
        "--endpoint",
        "tcp://127.0.0.1:1",
    ];
    assert_eq!(code(&args), 5);
}

#[test]
fn case_study_fixture_scores() {
    let dir = tempfile::tempdir().unwrap();
    ok(&[
        "--out",
        p(dir.path()),
        "search",
        "--method",
        "ea-pw",
        "--fixtures",
        "--holdout",
        p(&fixture()),
    ]);
    let rows = jsonl(&dir.path().join("fixtures_ea_pw.jsonl"));
    assert_eq!(rows.len(), 1);
    let r = &rows[0];
    let near = |k: &str, v: f64| (r[k].as_f64().unwrap() - v).abs() < 1e-3;
    assert!(
        near("dg_train", 1.149) && near("dg_int", 1.095) && near("dg_ext", 6.164),
        "{r}"
    );
    assert_eq!(r["dp"], 0);
    assert_eq!(r["status"], "unsolved");
    assert!(dir.path().join("manifest_fixtures_ea_pw.json").exists());
}

#[test]
fn gen_dataset_is_byte_identical_across_runs() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let (da, db) = (small_dataset(a.path()), small_dataset(b.path()));
    let mut files: Vec<String> = fs::read_dir(&da)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| !n.starts_with("manifest"))
        .collect();
    files.sort();
    assert!(files.contains(&"train.jsonl".to_string()) && files.contains(&"stats.json".to_string()));
    for f in &files {
        assert_eq!(fs::read(da.join(f)).unwrap(), fs::read(db.join(f)).unwrap(), "{f}");
    }
    let manifest: Value =
        serde_json::from_str(&fs::read_to_string(da.join("manifest_gen_dataset.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 0);
    assert_eq!(manifest["config"]["corpus"]["max_rules"], 8);
}

#[test]
fn search_reruns_match_and_report_joins() {
    let dir = tempfile::tempdir().unwrap();
    let data = small_dataset(dir.path());
    let holdout = data.join("holdout_m4.jsonl");
    let run = |out: &Path, method: &str| {
        ok(&[
            "--out",
            p(out),
            "--seed",
            "3",
            "search",
            "--method",
            method,
            "--holdout",
            p(&holdout),
            "--limit",
            "6",
            "--simulations",
            "60",
        ]);
    };
    let (first, second) = (dir.path().join("one"), dir.path().join("two"));
    for method in ["mcts", "ea"] {
        run(&first, method);
    }
    run(&second, "mcts");
    let results = |d: &Path| fs::read(d.join("results_mcts.jsonl")).unwrap();
    assert_eq!(results(&first), results(&second));
    let rows = jsonl(&first.join("results_mcts.jsonl"));
    assert_eq!(rows.len(), 6);
    assert!(rows
        .iter()
        .all(|r| r["method"] == "mcts" && r["sims"].as_u64() <= Some(60)));

    let table = ok(&[
        "--out",
        p(&first),
        "report",
        "--join",
        p(&first.join("results_mcts.jsonl")),
        p(&first.join("results_ea.jsonl")),
    ]);
    assert!(table.starts_with("band\tmethod"));
    let summary: Value = serde_json::from_str(&fs::read_to_string(first.join("summary.json")).unwrap()).unwrap();
    let methods: Vec<&str> = summary
        .as_array()
        .unwrap()
        .iter()
        .map(|r| r["method"].as_str().unwrap())
        .collect();
    assert!(methods.contains(&"mcts") && methods.contains(&"ea"), "{methods:?}");
}

#[test]
fn eval_policy_and_complete() {
    let dir = tempfile::tempdir().unwrap();
    let data = small_dataset(dir.path());
    let train = data.join("train.jsonl");
    let out = dir.path().join("eval");
    let printed = ok(&[
        "--out",
        p(&out),
        "eval-policy",
        "--model",
        "fh",
        "--train",
        p(&train),
        "--grid",
        "--k",
        "4",
    ]);
    let report: Value = serde_json::from_str(&printed).unwrap();
    assert_eq!(report["model"], "fh");
    assert_eq!(report["in_sample"]["conditions"], 41);
    assert_eq!(report["out_of_sample"]["conditions"], 320);
    assert_eq!(report["mean_l1"]["5"], 18.0);
    let csv = fs::read_to_string(out.join("grid_fh.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("c0,cinf,metric,value"));
    assert_eq!(csv.lines().count(), 1 + 361 * 4);

    let text = ok(&[
        "complete",
        "--template",
        "1 / _ - _",
        "--condition=-1,1",
        "-n",
        "50",
        "--top",
        "3",
    ]);
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("n=50 "));
    for line in lines {
        assert!(line.split('\t').nth(2).unwrap().starts_with("1 / "), "{line}");
    }
}
