use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn vasq(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vasq")).current_dir(dir).args(args).output().expect("spawn vasq")
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = vasq(dir, args);
    assert!(
        out.status.success(),
        "vasq {args:?} exited {:?}\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn json(path: impl AsRef<Path>) -> Value {
    serde_json::from_slice(&fs::read(path).unwrap()).unwrap()
}

fn files(dir: &Path) -> BTreeSet<PathBuf> {
    let mut out = BTreeSet::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(dir).unwrap().to_path_buf());
            }
        }
    }
    out
}

/// Working directory holding a depth-2 phantom in `case/`.
fn workspace() -> TempDir {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["phantom", "--generations", "2", "--seed", "7", "--out", "case"]);
    dir
}

#[test]
fn help_and_version_exit_zero() {
    let dir = tempfile::tempdir().unwrap();
    for cmd in [
        &["--help"][..],
        &["--version"],
        &["phantom", "--help"],
        &["phantom", "cohort", "--help"],
        &["normalize", "--help"],
        &["enhance", "--help"],
        &["noise", "--help"],
        &["segment", "--help"],
        &["skeleton", "--help"],
        &["evaluate", "--help"],
        &["cohort-stats", "--help"],
    ] {
        let out = vasq(dir.path(), cmd);
        assert_eq!(out.status.code(), Some(0), "{cmd:?}");
        assert!(!out.stdout.is_empty());
    }
}

#[test]
fn usage_and_input_errors_exit_one() {
    let dir = workspace();
    let d = dir.path();
    assert_eq!(vasq(d, &["bogus"]).status.code(), Some(1));
    assert_eq!(vasq(d, &["noise", "--in", "case/image.mhd"]).status.code(), Some(1));
    assert_eq!(
        vasq(d, &["noise", "--in", "missing.mhd", "--n0", "1e4", "--seed", "1", "--out", "n.mhd"]).status.code(),
        Some(1)
    );
    assert_eq!(vasq(d, &["segment", "--in", "case/image.mhd", "--out", "a.mhd", "b.mhd"]).status.code(), Some(1));
    let bad_threads = Command::new(env!("CARGO_BIN_EXE_vasq"))
        .current_dir(d)
        .env("VASQ_THREADS", "abc")
        .args(["noise", "--in", "case/image.mhd", "--n0", "1e4", "--seed", "1", "--out", "n.mhd"])
        .output()
        .unwrap();
    assert_eq!(bad_threads.status.code(), Some(1));
    assert!(!d.join("n.mhd").exists());
}

#[test]
fn phantom_writes_the_documented_case_files() {
    let dir = workspace();
    let case = dir.path().join("case");
    for f in ["image", "truth", "levels", "levels_a", "levels_v", "lung", "heart", "clutter"] {
        assert!(case.join(format!("{f}.mhd")).is_file(), "{f}.mhd");
        assert!(case.join(format!("{f}.raw")).is_file(), "{f}.raw");
    }
    let seeds = json(case.join("seeds.json"));
    assert_eq!(seeds["artery"].as_array().unwrap().len(), 3);
    let analytic = json(case.join("analytic.json"));
    assert!(analytic.is_object());
    let manifest = json(case.join("manifest.json"));
    assert_eq!(manifest["command"], "phantom");
    assert_eq!(manifest["tool"], "vasq");
    assert!(manifest["outputs"].as_array().unwrap().len() >= 16);
}

#[test]
fn geometry_mismatch_names_both_geometries() {
    let dir = workspace();
    let d = dir.path();
    ok(d, &["phantom", "--generations", "1", "--spacing", "1.5,1.5,1.5", "--out", "coarse"]);
    let out = vasq(
        d,
        &[
            "evaluate",
            "--pred",
            "coarse/truth.mhd",
            "--truth",
            "case/truth.mhd",
            "--levels",
            "case/levels.mhd",
            "--report",
            "r.json",
        ],
    );
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("(1.5, 1.5, 1.5)") && err.contains("(1, 1, 1)"), "{err}");
    assert!(!d.join("r.json").exists());
}

#[test]
fn pipeline_from_phantom_to_report() {
    let dir = workspace();
    let d = dir.path();
    ok(d, &["noise", "--in", "case/image.mhd", "--n0", "100000", "--seed", "3", "--out", "noisy.mhd"]);
    ok(
        d,
        &[
            "segment",
            "--in",
            "noisy.mhd",
            "--seeds",
            "case/seeds.json",
            "--out",
            "prob_a.mhd",
            "prob_v.mhd",
            "--labels",
            "pred.mhd",
            "--audit",
            "stages",
        ],
    );
    let stages = json(d.join("stages/stages.json"));
    assert_eq!(stages.as_array().unwrap().len(), 4);
    ok(
        d,
        &[
            "evaluate",
            "--pred",
            "pred.mhd",
            "--truth",
            "case/truth.mhd",
            "--levels",
            "case/levels.mhd",
            "--prob",
            "prob_a.mhd",
            "prob_v.mhd",
            "--report",
            "report.json",
        ],
    );
    let r = json(d.join("report.json"));
    for key in [
        "dsc_whole_a",
        "dsc_whole_v",
        "dsc_intra_a",
        "dsc_intra_v",
        "sen",
        "mcs",
        "hd95_mm",
        "bc_ratio_a",
        "bc_ratio_v",
        "sl_ratio_a",
        "sl_ratio_v",
        "loss_dsc",
        "loss_overlap",
        "loss_total",
    ] {
        assert!(r[key].is_number(), "{key} missing in report");
    }
    assert!(r["dsc_whole_a"].as_f64().unwrap() > 0.8);
    assert!(r["mcs"].as_f64().unwrap() < 0.05);

    ok(d, &["skeleton", "--in", "case/truth.mhd", "--class", "artery", "--out", "skel.mhd", "--tree", "tree.json"]);
    let tree = json(d.join("tree.json"));
    assert_eq!(tree["bifurcations"], 3);
    assert!(d.join("skel.manifest.json").is_file());
}

#[test]
fn rerunning_a_manifest_reproduces_its_outputs() {
    let dir = workspace();
    let d = dir.path();
    ok(d, &["noise", "--in", "case/image.mhd", "--n0", "10000", "--seed", "5", "--out", "n.mhd"]);
    let manifest = json(d.join("n.manifest.json"));
    let argv: Vec<String> =
        manifest["argv"].as_array().unwrap()[1..].iter().map(|v| v.as_str().unwrap().to_owned()).collect();
    let first = fs::read(d.join("n.raw")).unwrap();
    fs::remove_file(d.join("n.raw")).unwrap();
    ok(d, &argv.iter().map(String::as_str).collect::<Vec<_>>());
    assert_eq!(fs::read(d.join("n.raw")).unwrap(), first);
    let again = json(d.join("n.manifest.json"));
    assert_eq!(again["outputs"], manifest["outputs"]);
    assert_eq!(again["config"], manifest["config"]);

    let threaded = Command::new(env!("CARGO_BIN_EXE_vasq"))
        .current_dir(d)
        .env("VASQ_THREADS", "2")
        .args(["noise", "--in", "case/image.mhd", "--n0", "10000", "--seed", "5", "--out", "n2.mhd"])
        .output()
        .unwrap();
    assert!(threaded.status.success());
    assert_eq!(fs::read(d.join("n2.raw")).unwrap(), first);
}

#[test]
fn commands_write_only_their_outputs() {
    let dir = workspace();
    let d = dir.path();
    let before = files(d);
    ok(d, &["enhance", "--in", "case/image.mhd", "--out", "out/v.mhd", "--scales", "1,2"]);
    let added: BTreeSet<_> = files(d).difference(&before).cloned().collect();
    let expected: BTreeSet<PathBuf> =
        ["out/v.mhd", "out/v.raw", "out/v.manifest.json"].into_iter().map(PathBuf::from).collect();
    assert_eq!(added, expected);
}

#[test]
fn batch_evaluation_reports_every_case() {
    let dir = workspace();
    let d = dir.path();
    for name in ["a", "b"] {
        let c = d.join("cases").join(name);
        fs::create_dir_all(&c).unwrap();
        for (src, dst) in [("truth", "pred"), ("truth", "truth"), ("levels", "levels")] {
            for ext in ["mhd", "raw"] {
                fs::copy(d.join(format!("case/{src}.{ext}")), c.join(format!("{dst}.{ext}"))).unwrap();
            }
            let header = fs::read_to_string(c.join(format!("{dst}.mhd"))).unwrap();
            fs::write(c.join(format!("{dst}.mhd")), header.replace(&format!("{src}.raw"), &format!("{dst}.raw")))
                .unwrap();
        }
    }
    ok(d, &["evaluate", "--cases", "cases", "--report", "batch.json"]);
    let r = json(d.join("batch.json"));
    assert_eq!(r["n_cases"], 2);
    assert_eq!(r["n_failed"], 0);
    let cases = r["cases"].as_array().unwrap();
    assert_eq!(cases.len(), 2);
    assert!(cases.iter().all(|c| c.to_string().contains("\"mcs\":0.0")));
}

#[test]
fn cohort_table_round_trips_through_cohort_stats() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["phantom", "cohort", "--n", "200", "--seed", "4", "--out", "cohort.csv"]);
    let header = fs::read_to_string(d.join("cohort.csv")).unwrap();
    assert!(header.starts_with("id,sex,age,lung_volume,slpa,slpv,bcpa,bcpv"));
    assert_eq!(header.lines().count(), 201);
    ok(d, &["cohort-stats", "--in", "cohort.csv", "--out", "stats.json", "--plots", "plots"]);
    assert!(json(d.join("stats.json")).is_object());
    for f in ["subjects", "by_sex", "by_age", "coefficients", "tests"] {
        assert!(d.join(format!("plots/{f}.csv")).is_file(), "{f}.csv");
    }
}
