use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn cutofflab(cache: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cutofflab"))
        .env("CUTOFFLAB_CACHE_DIR", cache)
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

#[test]
fn moments_sphere_n2_has_unit_mean() {
    let dir = tempfile::tempdir().unwrap();
    let o = cutofflab(dir.path(), &["moments", "--family", "sphere", "--n", "2"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!((v["mean"].as_f64().unwrap() - 1.0).abs() < 1e-8);
    for key in [
        "n",
        "family",
        "mean",
        "mean_identity_resid",
        "var",
        "var_resid",
        "moments",
        "grid_points",
    ] {
        assert!(v.get(key).is_some(), "missing {key}");
    }
}

#[test]
fn third_moment_respects_the_factorial_bound() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("m.json");
    let o = cutofflab(
        dir.path(),
        &[
            "moments",
            "--family",
            "power:a=0:m=1",
            "--n",
            "2",
            "--k",
            "3",
            "--out",
            out.to_str().unwrap(),
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    let m: Vec<f64> = v["moments"]
        .as_array()
        .unwrap()
        .iter()
        .map(|x| x.as_f64().unwrap())
        .collect();
    assert_eq!(m.len(), 3);
    assert!(m[2] <= 6.0 * m[0].powi(3));
    let manifest: Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("m.manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["command"], "moments");
    assert_eq!(manifest["params"]["k"], 3);
}

#[test]
fn usage_errors_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = cutofflab(
        dir.path(),
        &["moments", "--family", "power:a=-2:m=1", "--n", "2"],
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("outside domain"), "{}", stderr(&o));
    let o = cutofflab(dir.path(), &["moments", "--family", "torus", "--n", "2"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(
        stderr(&o).contains("power:a=<decimal>:m=<decimal>"),
        "{}",
        stderr(&o)
    );
    let o = cutofflab(dir.path(), &["sweep", "--family", "sphere"]);
    assert_eq!(o.status.code(), Some(2));
    let o = cutofflab(dir.path(), &["sweep", "--family", "sphere", "--n", ""]);
    assert_eq!(o.status.code(), Some(2));
    let o = cutofflab(
        dir.path(),
        &["sweep", "--family", "sphere", "--n", "256,1024"],
    );
    assert_eq!(o.status.code(), Some(2));
    let o = cutofflab(
        dir.path(),
        &["simulate", "--family", "sphere", "--n", "8", "--paths", "0"],
    );
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn step_budget_exits_with_4() {
    let dir = tempfile::tempdir().unwrap();
    let o = cutofflab(
        dir.path(),
        &[
            "simulate",
            "--family",
            "sphere",
            "--n",
            "8",
            "--paths",
            "10",
            "--max-steps",
            "5",
        ],
    );
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
}

fn sweep_verdict(dir: &Path, family: &str) -> (String, Value) {
    let out = dir.join(format!("{}.csv", family.replace([':', '='], "_")));
    let o = cutofflab(
        dir,
        &[
            "sweep",
            "--family",
            family,
            "--n-range",
            "8:20:2",
            "--out",
            out.to_str().unwrap(),
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let v: Value =
        serde_json::from_str(&std::fs::read_to_string(out.with_extension("verdict.json")).unwrap())
            .unwrap();
    (std::fs::read_to_string(&out).unwrap(), v)
}

#[test]
fn sweeps_reproduce_the_phase_transition() {
    let dir = tempfile::tempdir().unwrap();
    let (csv, v) = sweep_verdict(dir.path(), "sphere");
    assert_eq!(v["verdict"]["verdict"], "Cutoff");
    assert!(csv.starts_with("family,a,m,n,mean,var,ratio,predicted_an,window,verdict\n"));
    assert_eq!(csv.lines().count(), 8);
    assert!(csv.lines().skip(1).all(|l| l.ends_with(",Cutoff")));
    let (_, v) = sweep_verdict(dir.path(), "power:a=2:m=1");
    assert_eq!(v["verdict"]["verdict"], "NoCutoff");
    let plateau = v["verdict"]["plateau"].as_f64().unwrap();
    let lim = v["prediction"]["ratio_limit_candidates"]["dimensional"]
        .as_f64()
        .unwrap();
    assert!(
        (plateau / (lim - 1.0) - 1.0).abs() < 0.1,
        "{plateau} vs {lim}"
    );
}

#[test]
fn simulate_is_byte_identical_for_equal_seeds() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let out = dir.path().join(name);
        let o = cutofflab(
            dir.path(),
            &[
                "simulate",
                "--family",
                "sphere",
                "--n",
                "8",
                "--paths",
                "300",
                "--seed",
                "42",
                "--out",
                out.to_str().unwrap(),
            ],
        );
        assert!(o.status.success(), "{}", stderr(&o));
        out
    };
    let (a, b) = (run("a.csv"), run("b.csv"));
    let body = std::fs::read(&a).unwrap();
    assert_eq!(body, std::fs::read(&b).unwrap());
    assert!(body.starts_with(b"path_id,tau_raw\n0,"));
    let side: Value =
        serde_json::from_str(&std::fs::read_to_string(a.with_extension("json")).unwrap()).unwrap();
    for key in [
        "n",
        "family",
        "scheme",
        "paths",
        "seed",
        "eps_abs",
        "dt_base",
        "bias_correction",
        "mean",
        "se",
    ] {
        assert!(side.get(key).is_some(), "missing {key}");
    }
    assert_eq!(side["seed"], 42);
    assert!(a.with_extension("manifest.json").exists());
}

#[test]
fn coupled_simulation_reports_ks() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("c.csv");
    let o = cutofflab(
        dir.path(),
        &[
            "simulate",
            "--family",
            "sphere",
            "--n",
            "8",
            "--paths",
            "300",
            "--scheme",
            "coupled",
            "--out",
            out.to_str().unwrap(),
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stderr(&o).contains("KS vs autonomous"));
    let m: Value = serde_json::from_str(
        &std::fs::read_to_string(out.with_extension("manifest.json")).unwrap(),
    )
    .unwrap();
    assert!(
        m["summary"]["ks_vs_autonomous"].as_f64().unwrap()
            < m["summary"]["ks_critical_1pct"].as_f64().unwrap()
    );
}

#[test]
fn cache_bypass_equals_cache_hit() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "moments",
        "--family",
        "power:a=-0.5:m=1",
        "--n",
        "4096",
        "--k",
        "3",
    ];
    let bypass = cutofflab(dir.path(), &[&["--no-cache"], &args[..]].concat());
    let miss = cutofflab(dir.path(), &args);
    let hit = cutofflab(dir.path(), &args);
    assert!(bypass.status.success() && miss.status.success() && hit.status.success());
    assert_eq!(stdout(&bypass), stdout(&miss));
    assert_eq!(stdout(&miss), stdout(&hit));
    let list = stdout(&cutofflab(dir.path(), &["cache", "list"]));
    assert_eq!(list.lines().count(), 1);
    let clear = cutofflab(dir.path(), &["cache", "clear"]);
    assert!(stdout(&clear).starts_with("removed 1 "));
    assert!(stdout(&cutofflab(dir.path(), &["cache", "list"])).is_empty());
}

#[test]
fn profile_emits_a_survival_curve() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("p.csv");
    let o = cutofflab(
        dir.path(),
        &[
            "--threads",
            "1",
            "profile",
            "--family",
            "sphere",
            "--n",
            "16",
            "--paths",
            "200",
            "--points",
            "5",
            "--out",
            out.to_str().unwrap(),
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(&out).unwrap();
    assert!(csv.starts_with("t,sep_mc,ci_lo,ci_hi,cheb_bound\n0.0,1.0,"));
    assert_eq!(csv.lines().count(), 6);
}

#[test]
fn asymptotics_reports_constants() {
    let dir = tempfile::tempdir().unwrap();
    let o = cutofflab(
        dir.path(),
        &["asymptotics", "--family", "power:a=-0.5:m=1", "--n", "1000"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["regime"], "subcritical");
    assert!((v["C1"].as_f64().unwrap() - 2.0).abs() < 1e-8);
    assert!((v["an"][0]["an"].as_f64().unwrap() - 2e-3).abs() < 1e-11);
    let o = cutofflab(dir.path(), &["asymptotics", "--family", "sphere"]);
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["regime"], "critical");
    assert!((v["C2"].as_f64().unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn verify_fast_passes_and_catches_corruption() {
    let dir = tempfile::tempdir().unwrap();
    let o = cutofflab(dir.path(), &["verify", "--level", "fast"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o)
        .lines()
        .all(|l| l.starts_with("PASS") || l.starts_with("all ")));
    let o = cutofflab(
        dir.path(),
        &["verify", "--level", "fast", "--corrupt-table"],
    );
    assert_eq!(o.status.code(), Some(3));
    assert!(
        stderr(&o).contains("lnI strictly increasing"),
        "{}",
        stderr(&o)
    );
}
