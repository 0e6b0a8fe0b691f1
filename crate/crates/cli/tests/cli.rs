use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn kfplab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kfplab")).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn json_file(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

fn config(dir: &Path, text: &str) -> String {
    let p = dir.join("run.toml");
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_owned()
}

#[test]
fn psi_eval_prints_value_and_region() {
    let o = kfplab(&["psi", "eval", "--x", "-0.5", "--v", "0"]);
    assert_eq!(code(&o), 0);
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["region"]["tag"], "R0");
    let psi = v["psi"].as_f64().unwrap();
    assert!(psi > 0.0 && (v["ln_psi"].as_f64().unwrap() - psi.ln()).abs() < 1e-12);

    let o = kfplab(&["psi", "eval", "--x", "0", "--v", "-0.3"]);
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["psi"].as_f64(), Some(0.0));
}

#[test]
fn barrier_eval_reports_anchor_and_point() {
    let o = kfplab(&["barrier", "eval", "--mode", "exponential", "--rtilde", "1e-6", "--vd", "-0.6", "--point", "0", "-1e-6", "-0.6"]);
    assert_eq!(code(&o), 0);
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["constraints"]["passed"], true);
    let (p, an) = (&v["params"], &v["anchor"]);
    let lhs = p["b"].as_f64().unwrap() * an["xi_d"].as_f64().unwrap();
    let rhs = p["c"].as_f64().unwrap() * (an["eta_d"].as_f64().unwrap() - p["v_tilde_d"].as_f64().unwrap());
    assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs());
    assert!(v["point"]["rho"].as_f64().unwrap() > 0.0);
}

#[test]
fn certify_writes_schema_and_sets_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("report.json");
    let args = ["certify", "--lemma", "barrier-ss", "--rtilde", "1e-6", "--vd", "-0.6", "--samples", "3000", "--seed", "4"];
    let o = kfplab(&[&args[..], &["--out", out.to_str().unwrap()]].concat());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r = json_file(&out);
    for k in ["lemma", "params", "anchor", "samples", "violations", "min_margin", "theta0_used", "wall_ms"] {
        assert!(r.get(k).is_some(), "missing {k}");
    }
    assert_eq!(r["lemma"], "barrier-ss");
    assert_eq!(r["violations"], 0);

    // same seed, same report apart from the wall time
    let out2 = dir.path().join("again.json");
    kfplab(&[&args[..], &["--out", out2.to_str().unwrap()]].concat());
    let mut a = r.clone();
    let mut b = json_file(&out2);
    a["wall_ms"] = Value::Null;
    b["wall_ms"] = Value::Null;
    assert_eq!(a, b);

    let refused = dir.path().join("refused.json");
    let o = kfplab(&["certify", "--lemma", "phase-prop", "--rtilde", "1e-2", "--vd", "-0.3", "--samples", "100", "--out", refused.to_str().unwrap()]);
    assert_eq!(code(&o), 3);
    assert_eq!(json_file(&refused)["verdict"], "refused");
}

#[test]
fn solve_writes_dump_and_traces() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "n_x = 32\nn_v = 32\nx_max = 1.0\nv_max = 2.0\nt0 = -0.2\ntraces = [-0.5]\n");
    let out = dir.path().join("out");
    let o = kfplab(&["solve", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["field.bin", "traces.csv", "final.csv", "meta.json"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let traces = std::fs::read_to_string(out.join("traces.csv")).unwrap();
    assert_eq!(traces.lines().next(), Some("v_query,x,f"));
    assert_eq!(traces.lines().count(), 33);
}

#[test]
fn experiment_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str, kind: &str, text: &str| {
        let sub = dir.path().join(name);
        std::fs::create_dir_all(&sub).unwrap();
        let cfg = config(&sub, text);
        let out = sub.join("out");
        let o = kfplab(&["experiment", kind, "--config", &cfg, "--seed", "3", "--out", out.to_str().unwrap()]);
        (code(&o), out)
    };
    let light = "cert_samples = 2000\nosc_samples = 2000\n";

    let (c, out) = run("pass", "oscillation", &format!("{light}mode = \"exact\"\n"));
    assert_eq!(c, 0);
    let rep = json_file(&out.join("oscillation.json"));
    assert_eq!(rep["verdict"], "pass");
    assert!(rep["traceability"]["claim"].is_string());
    let csv = std::fs::read_to_string(out.join("oscillation.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("experiment,fit,x,y"));

    let (c, _) = run("band", "vanishing", &format!("{light}mode = \"exact\"\n"));
    assert_eq!(c, 2);
    let (c, _) = run("cert", "gradient", &format!("{light}cert_r_tilde = 1e-2\n"));
    assert_eq!(c, 3);
    let (c, _) = run("degenerate", "gradient", &format!("{light}boundary = \"zero\"\ns = 0.0\nn_x = 64\n"));
    assert_eq!(c, 4);
}

#[test]
fn usage_errors_do_not_collide_with_verdict_codes() {
    assert_eq!(code(&kfplab(&["experiment", "nonsense", "--out", "/tmp/x"])), 1);
    assert_eq!(code(&kfplab(&["--help"])), 0);
}
