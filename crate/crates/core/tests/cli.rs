use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn optcv(args: &[&str], env_seed: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_optcv"));
    cmd.args(args).env_remove("OPTCV_SEED");
    if let Some(seed) = env_seed {
        cmd.env("OPTCV_SEED", seed);
    }
    cmd.output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let o = path(&out);
    assert_eq!(code(&optcv(&["--help"], None)), 0);
    assert_eq!(code(&optcv(&["--version"], None)), 0);
    assert_eq!(code(&optcv(&["frobnicate"], None)), 2);
    assert_eq!(code(&optcv(&["simulate", "--preset", "paper-fig-mse", "--reps", "0", "--out", o], None)), 2);
    assert_eq!(code(&optcv(&["simulate", "--preset", "missing", "--out", o], None)), 2);
    assert_eq!(code(&optcv(&["simulate", "--rho", "abc", "--out", o], None)), 2);
    assert_eq!(code(&optcv(&["simulate", "--degree", "150", "--out", o], None)), 2);
    assert_eq!(code(&optcv(&["analytic", "--cov", "ar1(sigma2=1, phi=1.5)", "--out", o], None)), 2);
    assert_eq!(code(&optcv(&["compare", "--schemes", "bogus", "--out", o], None)), 2);
    assert_eq!(code(&optcv(&["split", "--scheme", "kfold", "--k", "1", "--out", o], None)), 2);
    assert_eq!(code(&optcv(&["split", "--fold", "9", "--out", o], None)), 2);
    assert_eq!(code(&optcv(&["stats", "mcnemar", "--b", "0", "--c", "0"], None)), 2);
    assert!(!out.exists(), "invalid configurations must not write output");

    let blocker = dir.path().join("file");
    fs::write(&blocker, "x").unwrap();
    let r = optcv(&["analytic", "--out", path(&blocker.join("sub"))], None);
    assert_eq!(code(&r), 1);
}

#[test]
fn analytic_rho_zero_has_no_test_optimism() {
    let dir = tempfile::tempdir().unwrap();
    let r = optcv(&["analytic", "--preset", "paper-fig-mse", "--rho", "0", "--out", path(dir.path())], None);
    assert_eq!(code(&r), 0);
    let text = fs::read_to_string(dir.path().join("decomposition.txt")).unwrap();
    let vals: Vec<f64> = text
        .lines()
        .filter(|l| l.starts_with("optimism_test"))
        .map(|l| l.split_whitespace().nth(1).unwrap().parse().unwrap())
        .collect();
    assert_eq!(vals.len(), 2);
    assert!(vals.iter().all(|v| v.abs() < 1e-12));
}

#[test]
fn simulate_writes_outputs_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let args = |o: &Path| {
        vec!["simulate", "--preset", "paper-fig-mse", "--reps", "50", "--seed", "1", "--svg", "--out"]
            .into_iter()
            .map(String::from)
            .chain([path(o).to_string()])
            .collect::<Vec<_>>()
    };
    for o in [&a, &b] {
        let argv = args(o);
        let r = optcv(&argv.iter().map(String::as_str).collect::<Vec<_>>(), None);
        assert_eq!(code(&r), 0, "{}", String::from_utf8_lossy(&r.stderr));
    }
    let csv = fs::read(a.join("errors.csv")).unwrap();
    assert_eq!(csv, fs::read(b.join("errors.csv")).unwrap());
    let text = String::from_utf8(csv).unwrap();
    assert!(text.starts_with("rep,train_mse,test_mse,oos_mse\n"));
    assert_eq!(text.lines().count(), 51);
    let summary = fs::read_to_string(a.join("summary.txt")).unwrap();
    assert!(summary.contains("mc_se") && summary.contains("analytic"));
    let svg = fs::read_to_string(a.join("histogram.svg")).unwrap();
    assert_eq!(svg.matches("<polyline").count(), 3);
}

#[test]
fn seed_precedence_env_below_flag() {
    let dir = tempfile::tempdir().unwrap();
    let run = |sub: &str, seed_flag: Option<&str>, env: Option<&str>| {
        let out = dir.path().join(sub);
        let mut argv = vec!["split", "--scheme", "kfold", "--n", "40", "--out", path(&out)];
        if let Some(s) = seed_flag {
            argv.extend(["--seed", s]);
        }
        assert_eq!(code(&optcv(&argv, env)), 0);
        fs::read(out.join("splits.csv")).unwrap()
    };
    let env_only = run("e", None, Some("5"));
    let flag5 = run("f5", Some("5"), None);
    let flag_wins = run("fw", Some("6"), Some("5"));
    let flag6 = run("f6", Some("6"), None);
    assert_eq!(env_only, flag5);
    assert_eq!(flag_wins, flag6);
    assert_ne!(flag5, flag6);
}

#[test]
fn config_file_layers() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "# split settings\nscheme = temporal\nn = 30\ntest_fraction = 0.3\ngap = 2\n").unwrap();
    let out = dir.path().join("o");
    let r = optcv(&["split", "--config", path(&cfg), "--gap", "1", "--out", path(&out)], None);
    assert_eq!(code(&r), 0);
    let text = fs::read_to_string(out.join("split.csv")).unwrap();
    let assign: Vec<&str> = text.lines().skip(1).map(|l| l.split(',').nth(1).unwrap()).collect();
    assert_eq!(assign.len(), 30);
    assert_eq!(assign.iter().filter(|a| **a == "test").count(), 9);
    assert_eq!(assign.iter().filter(|a| **a == "discarded").count(), 1);
    assert!(assign[21..].iter().all(|a| *a == "test"));

    fs::write(&cfg, "colour = red\n").unwrap();
    assert_eq!(code(&optcv(&["split", "--config", path(&cfg), "--out", path(&out)], None)), 2);
}

#[test]
fn split_data_file_time_and_group_columns() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.csv");
    let mut rows = String::from("y,time,group\n");
    let times = [5, 1, 9, 3, 7, 0, 8, 2, 6, 4];
    for (i, t) in times.iter().enumerate() {
        rows.push_str(&format!("{}.5,{t},g{}\n", i, i % 3));
    }
    fs::write(&data, rows).unwrap();

    let out = dir.path().join("t");
    let r = optcv(&["split", "--data", path(&data), "--scheme", "temporal", "--test-fraction", "0.2", "--out", path(&out)], None);
    assert_eq!(code(&r), 0);
    let text = fs::read_to_string(out.join("split.csv")).unwrap();
    let test: Vec<usize> = text
        .lines()
        .skip(1)
        .filter(|l| l.ends_with(",test"))
        .map(|l| l.split(',').next().unwrap().parse().unwrap())
        .collect();
    assert_eq!(test, vec![2, 6]);

    let out = dir.path().join("g");
    let r = optcv(&["split", "--data", path(&data), "--scheme", "logo", "--out", path(&out)], None);
    assert_eq!(code(&r), 0);
    let all = fs::read_to_string(out.join("splits.csv")).unwrap();
    let plans: std::collections::BTreeSet<&str> = all.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(plans.len(), 3);
}

#[test]
fn network_split_has_no_cross_edges() {
    let dir = tempfile::tempdir().unwrap();
    let r = optcv(&["split", "--preset", "network-group", "--scheme", "network", "--out", path(dir.path())], None);
    assert_eq!(code(&r), 0);
    let split = fs::read_to_string(dir.path().join("split.csv")).unwrap();
    let assign: Vec<String> = split.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().to_string()).collect();
    let edges = fs::read_to_string(dir.path().join("network.csv")).unwrap();
    for line in edges.lines().skip(1) {
        let (a, b) = line.split_once(',').unwrap();
        let (a, b): (usize, usize) = (a.parse().unwrap(), b.parse().unwrap());
        let pair = [assign[a].as_str(), assign[b].as_str()];
        assert!(pair != ["train", "test"] && pair != ["test", "train"], "edge {a}-{b}");
    }
}

#[test]
fn compare_and_stats_reports() {
    let dir = tempfile::tempdir().unwrap();
    let r = optcv(&["compare", "--preset", "equicorrelated-cv", "--reps", "40", "--out", path(dir.path())], None);
    assert_eq!(code(&r), 0);
    let csv = fs::read_to_string(dir.path().join("comparison.csv")).unwrap();
    assert!(csv.starts_with("scheme,mean_estimate,mc_se\n"));
    assert_eq!(csv.lines().count(), 6);
    assert!(csv.lines().last().unwrap().starts_with("true_oos,"));

    let r = optcv(&["stats", "mcnemar", "--b", "10", "--c", "2", "--mode", "exact"], None);
    assert_eq!(code(&r), 0);
    assert!(String::from_utf8_lossy(&r.stdout).contains("p_value = 0.038574218750"));
    let r = optcv(&["stats", "meng", "--population", "1,2,3,4", "--responded", "1,1,1,1"], None);
    assert_eq!(code(&r), 0);
    assert!(String::from_utf8_lossy(&r.stdout).contains("data_quality = undefined"));
}
