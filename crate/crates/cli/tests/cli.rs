use std::path::PathBuf;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_d2dcache"))
}

fn scenario(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).env_remove("D2DCACHE_SEED").output().unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

/// Data rows as field vectors (schema comment and header dropped).
fn rows(out: &Output) -> Vec<Vec<String>> {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(out);
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    reader
        .records()
        .map(|r| r.unwrap().iter().map(String::from).collect())
        .collect()
}

fn f(s: &str) -> f64 {
    s.parse().unwrap()
}

fn two_users() -> String {
    scenario("two_users.toml").display().to_string()
}

#[test]
fn validate_accepts_examples() {
    for name in ["two_users.toml", "commuters.toml"] {
        let out = run(&["validate", scenario(name).to_str().unwrap()]);
        assert!(out.status.success());
        assert!(stdout(&out).starts_with("valid:"));
    }
}

#[test]
fn validate_names_bad_row() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    let text = std::fs::read_to_string(scenario("two_users.toml"))
        .unwrap()
        .replacen("[[0.5, 0.5], [0.5, 0.5]]", "[[0.5, 0.5], [0.7, 0.5]]", 1);
    std::fs::write(&path, text).unwrap();
    let out = run(&["validate", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let report = stdout(&out);
    assert!(report.contains("user 1") && report.contains("slot 1") && report.contains("row 2"), "{report}");
}

#[test]
fn parse_errors_carry_position() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    let text = std::fs::read_to_string(scenario("two_users.toml")).unwrap().replace("T = 1\n", "");
    std::fs::write(&path, text).unwrap();
    let out = run(&["validate", path.to_str().unwrap()]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line") && err.contains("column") && err.contains("`T`"), "{err}");
}

#[test]
fn centralized_single_reward() {
    let r = rows(&run(&["centralized", &two_users(), "--r", "0.2"]));
    assert_eq!(r.len(), 1);
    assert_eq!(r[0][3], "1,2");
    assert_eq!(f(&r[0][7]), 1.0);
    assert_eq!(r[0][8], "0.3;1.1");
}

#[test]
fn centralized_sweep_caches_less_as_reward_rises() {
    let path = scenario("commuters.toml").display().to_string();
    for cmd in ["centralized", "greedy"] {
        let r = rows(&run(&[cmd, &path, "--sweep", "0.1:0.9:0.1"]));
        assert_eq!(r.len(), 18);
        for item in ["1", "2"] {
            let counts: Vec<u32> = r.iter().filter(|x| x[0] == item).map(|x| x[2].parse().unwrap()).collect();
            assert_eq!(counts.len(), 9);
            assert!(counts.windows(2).all(|w| w[1] <= w[0]), "{cmd}: {counts:?}");
        }
    }
}

#[test]
fn full_reward_caches_nothing_for_lone_user() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("one.toml");
    std::fs::write(
        &path,
        "[counts]\nN = 1\nM = 1\nL = 1\nT = 1\n[[items]]\nsize = 2.0\n[[users]]\ndemand = [[0.9]]\n\
         [users.mobility]\ninitial = [1.0]\ntransitions = [[[1.0]]]\n",
    )
    .unwrap();
    let r = rows(&run(&["centralized", path.to_str().unwrap(), "--r", "1"]));
    assert_eq!(r[0][2], "0");
}

#[test]
fn bounds_sandwich_and_single_cache_equality() {
    let r = rows(&run(&["bounds", &two_users(), "--sweep", "0.2,0.5"]));
    let (lo, ex, up) = (f(&r[0][1]), f(&r[0][2]), f(&r[0][3]));
    assert!(lo <= ex && ex <= up);
    assert_eq!((r[1][1].as_str(), r[1][2].as_str(), r[1][3].as_str()), ("0.6", "0.6", "0.6"));
}

fn price_span(r: &[Vec<String>], pick: impl Fn(&[Vec<String>]) -> bool) -> (f64, f64) {
    let mut hits = Vec::new();
    for chunk in r.chunks(2) {
        if pick(chunk) {
            hits.push(f(&chunk[0][0]));
        }
    }
    (hits[0], *hits.last().unwrap())
}

#[test]
fn decentralized_sweeps() {
    let fair = rows(&run(&["decentralized", &two_users(), "--sweep"]));
    assert_eq!(fair.len(), 202);
    let (lo, hi) = price_span(&fair, |c| c.iter().any(|row| row[5] == "partial"));
    assert!((lo - 0.41).abs() < 1e-12 && (hi - 0.6).abs() < 1e-12, "{lo} {hi}");

    let risk = rows(&run(&["decentralized", &two_users(), "--sweep", "--select", "risk"]));
    let (lo, hi) = price_span(&risk, |c| {
        c.iter().any(|row| row[5] == "partial") && f(&c[0][3]) + f(&c[1][3]) > 1.0
    });
    assert!((lo - 0.41).abs() < 1e-12 && (hi - 0.51).abs() < 1e-12, "{lo} {hi}");

    let top = rows(&run(&["decentralized", &two_users(), "--r-prime", "1"]));
    assert!(top.iter().all(|row| row[3] == "0"));
}

#[test]
fn tradeoffs() {
    let sp = rows(&run(&["tradeoff", &two_users(), "--side", "sp"]));
    let per_user = sp.iter().find(|r| r[0] == "optimum_per_user").unwrap();
    assert_eq!((per_user[2].as_str(), per_user[3].as_str()), ("1", "0.1"));

    let users = rows(&run(&["tradeoff", &two_users(), "--side", "users"]));
    let first = users.iter().find(|r| r[0] == "optimum" && r[1] == "1").unwrap();
    assert_eq!((first[2].as_str(), first[3].as_str()), ("0.571428571429", "0.4"));

    let steep = rows(&run(&["tradeoff", &two_users(), "--side", "users", "--gamma", "1e9"]));
    let all = steep.iter().find(|r| r[0] == "optimum" && r[1] == "all").unwrap();
    assert!(f(&all[2]) < 1e-8);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("no_econ.toml");
    let text = std::fs::read_to_string(scenario("two_users.toml")).unwrap();
    std::fs::write(&path, &text[..text.find("[economics]").unwrap()]).unwrap();
    let out = run(&["tradeoff", path.to_str().unwrap(), "--side", "sp"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("beta"));
}

#[test]
fn simulate_no_caching_recovers_reactive_load() {
    let r = rows(&run(&["simulate", &two_users(), "--alloc", "zero", "--reps", "20000", "--seed", "3"]));
    let total = &r[0];
    assert_eq!(total[3], "1.4");
    assert!(f(&total[4]).abs() <= 5.0);
}

#[test]
fn simulate_is_byte_stable_and_seed_env_is_overridden() {
    let path = scenario("commuters.toml").display().to_string();
    let args = ["simulate", path.as_str(), "--alloc", "greedy", "--reps", "5000"];
    let a = bin().args(args).args(["--seed", "9"]).output().unwrap();
    let b = bin().args(args).env("D2DCACHE_SEED", "9").output().unwrap();
    let c = bin().args(args).args(["--seed", "9"]).env("D2DCACHE_SEED", "1").output().unwrap();
    let d = bin().args(args).env("D2DCACHE_SEED", "1").output().unwrap();
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(a.stdout, c.stdout);
    assert_ne!(a.stdout, d.stdout);
}

#[test]
fn simulate_fails_above_threshold() {
    let path = scenario("commuters.toml").display().to_string();
    let out = run(&["simulate", &path, "--alloc", "fair", "--reps", "2000", "--threshold", "0"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn simulate_reads_allocation_file() {
    let dir = tempfile::tempdir().unwrap();
    let alloc = dir.path().join("x.csv");
    std::fs::write(&alloc, "# user rows\n1.0\n0.0\n").unwrap();
    let r = rows(&run(&[
        "simulate",
        &two_users(),
        "--alloc",
        "file",
        "--alloc-file",
        alloc.to_str().unwrap(),
        "--reps",
        "20000",
    ]));
    assert_eq!(r[0][3], "0.3");
}

#[test]
fn out_flag_writes_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bounds.csv");
    let out = run(&["bounds", &two_users(), "--out", path.to_str().unwrap()]);
    assert!(out.status.success() && out.stdout.is_empty());
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.starts_with("# schema: d2dcache-bounds/1\nr,lower,exact,upper\n"));
    assert!(!text.contains('\r'));
}

#[test]
fn help_documents_schema() {
    let out = run(&["simulate", "--help"]);
    let text = stdout(&out);
    assert!(text.contains("d2dcache-simulate/1") && text.contains("D2DCACHE_SEED"));
}
