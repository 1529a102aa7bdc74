use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn nhgeo(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nhgeo")).args(args).env_remove("NHGEO_LOG").output().unwrap()
}

fn write(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let p = dir.path().join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stdout_json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const HEIS: &str = r#"{
  "model": "heisenberg_a",
  "initial": {"x": [0, 0, 0], "alpha": [1, 0], "nu": [1]},
  "integrator": {"method": "rk4", "dt": 1e-3, "t_end": 1.0, "sample_count": 1001}
}"#;

#[test]
fn integrate_csv_shape() {
    let d = TempDir::new().unwrap();
    let cfg = write(&d, "h.json", HEIS);
    let out = d.path().join("h.csv");
    let o = nhgeo(&["integrate", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = std::fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "t,x1,x2,z,alpha1,alpha2,nu1");
    assert_eq!(lines.len(), 1002);
    assert_eq!(lines[1], "0.0,0.0,0.0,0.0,1.0,0.0,1.0");
    assert!(lines[1001].starts_with("1.0,"));
}

#[test]
fn two_samples_are_endpoints() {
    let d = TempDir::new().unwrap();
    let cfg = write(&d, "h.json", &HEIS.replace("1001", "2"));
    let o = nhgeo(&["integrate", "--config", s(&cfg)]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8(o.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 3);
    assert_eq!(lines[1], "0.0,0.0,0.0,0.0,1.0,0.0,1.0");
    // unit circle in (x1, x2) with ν = 1: x1(1) = sin 1
    let last: Vec<f64> = lines[2].split(',').map(|v| v.parse().unwrap()).collect();
    assert_eq!(last[0], 1.0);
    assert!((last[1] - 1f64.sin()).abs() < 1e-10);
    assert!((last[2] - (1.0 - 1f64.cos())).abs() < 1e-10);
}

#[test]
fn csv_round_trip_and_determinism() {
    let d = TempDir::new().unwrap();
    let cfg = write(&d, "c.json", r#"{"model": "contact5:exp_x1", "initial": {"alpha": [0.6, 0, 0.8, 0], "nu": [1.3]}}"#);
    let a = d.path().join("a.csv");
    let b = d.path().join("b.csv");
    let j = d.path().join("a.json");
    for p in [&a, &b, &j] {
        assert_eq!(code(&nhgeo(&["integrate", "--config", s(&cfg), "--out", s(p)])), 0);
    }
    let ta = std::fs::read(&a).unwrap();
    assert_eq!(ta, std::fs::read(&b).unwrap());
    let text = String::from_utf8(ta).unwrap();
    let json: Value = serde_json::from_slice(&std::fs::read(&j).unwrap()).unwrap();
    let states = json["states"].as_array().unwrap();
    for (row, st) in text.lines().skip(1).zip(states) {
        let vals: Vec<f64> = row.split(',').map(|v| v.parse().unwrap()).collect();
        for (field, v) in row.split(',').zip(&vals) {
            assert_eq!(format!("{v:?}"), field);
        }
        let want: Vec<f64> = ["x", "alpha", "nu"]
            .iter()
            .flat_map(|k| st[k].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()))
            .collect();
        for (u, w) in vals[1..].iter().zip(&want) {
            assert!((u - w).abs() <= 1e-15 * (1.0 + w.abs()));
        }
    }
    assert_eq!(json["metadata"]["config_hash"].as_str().unwrap().len(), 64);
    assert_eq!(json["coords"][4], "z");
}

#[test]
fn malformed_config_reports_offset() {
    let d = TempDir::new().unwrap();
    let text = "{\n  \"model\": \"free_2\",\n  \"integrator\": {\"dt\": }\n}";
    let cfg = write(&d, "bad.json", text);
    let o = nhgeo(&["integrate", "--config", s(&cfg)]);
    assert_eq!(code(&o), 2);
    let e = stderr(&o);
    // offset of the brace where a value was expected
    let at = text.find(" }").unwrap() + 1;
    assert!(e.contains(&format!("malformed JSON at byte offset {at} ")), "{e}");
}

#[test]
fn schema_errors_name_the_field() {
    let d = TempDir::new().unwrap();
    let cfg = write(&d, "u.json", r#"{"model": "free_2", "intergrator": {}}"#);
    let o = nhgeo(&["integrate", "--config", s(&cfg)]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("intergrator"));

    let cfg = write(&d, "len.json", r#"{"model": "heisenberg_a", "initial": {"alpha": [1, 0, 0]}}"#);
    let o = nhgeo(&["integrate", "--config", s(&cfg)]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("initial.alpha"));

    let o = nhgeo(&["torsion", "--model", "heisenberg_a", "--point", "1,2"]);
    assert_eq!(code(&o), 2);
    let o = nhgeo(&["integrate"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("model"));
}

#[test]
fn model_errors() {
    assert_eq!(code(&nhgeo(&["integrate", "--model", "heisenberg_c"])), 3);
    assert_eq!(code(&nhgeo(&["integrate", "--model", "contact5:1+"])), 3);
    let d = TempDir::new().unwrap();
    let cfg = write(&d, "flat.json", r#"{"model": {"id": "custom", "x": [["1","0","0"],["0","1","0"]], "z": [["0","0","1"]]}}"#);
    let o = nhgeo(&["split", "--config", s(&cfg)]);
    assert_eq!(code(&o), 3);
    assert!(stderr(&o).contains("two-step"));
}

#[test]
fn numerical_failure_reports_last_time() {
    let d = TempDir::new().unwrap();
    let cfg = write(
        &d,
        "deg.json",
        r#"{"model": {"id": "custom", "x": [["1","0","-x2"],["0","1","0"]], "z": [["0","0","1"]],
             "gram_d": [["1-x1","0"],["0","1"]]},
            "initial": {"alpha": [1, 0], "nu": [0]}, "integrator": {"t_end": 10}}"#,
    );
    let o = nhgeo(&["integrate", "--config", s(&cfg)]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("last good t"));
}

#[test]
fn compare_report() {
    let o = nhgeo(&["compare", "--model", "heisenberg_b"]);
    assert_eq!(code(&o), 0);
    let r = stdout_json(&o);
    assert!(r["max_deviation"].as_f64().unwrap() < 1e-6);
    assert!(r["speed_drift"].as_f64().unwrap() < 1e-8);
    assert!(r["energy_drift"].as_f64().unwrap() < 1e-8);
    assert_eq!(r["per_sample"].as_array().unwrap().len(), 101);
    assert_eq!(r["per_sample"][0]["deviation"], 0.0);

    let o = nhgeo(&["compare", "--model", "free_3", "--format", "csv"]);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8(o.stdout).unwrap().starts_with("t,deviation\n0.0,0.0\n"));
}

fn sweep(model: &str, deltas: &str) -> Value {
    let d = TempDir::new().unwrap();
    let cfg = write(&d, "s.json", &format!(r#"{{"model": "{model}", "deltas": {deltas}, "integrator": {{"rel_tol": 1e-12, "abs_tol": 1e-14}}}}"#));
    let o = nhgeo(&["sweep-delta", "--config", s(&cfg)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    stdout_json(&o)
}

#[test]
fn sweep_rates() {
    let r = sweep("heisenberg_a", "[0.1, 0.01, 0.001, 0.0]");
    let e: Vec<f64> = r["entries"].as_array().unwrap().iter().map(|x| x["error"].as_f64().unwrap()).collect();
    let ratio = e[1] / e[0];
    assert!((0.05..=0.3).contains(&ratio), "{ratio}");
    assert_eq!(e[3], 0.0);
    assert_eq!(r["monotone"], true);

    let r = sweep("free_2", "[0.1, 0.01, 0.001]");
    assert_eq!(r["monotone"], true);
    let e: Vec<f64> = r["entries"].as_array().unwrap().iter().map(|x| x["error"].as_f64().unwrap()).collect();
    assert!(e[0] > e[1] && e[1] > e[2] && e[2] > 0.0);
}

#[test]
fn split_reports() {
    let o = nhgeo(&["split", "--model", "heisenberg_a", "--point", "0.3,-0.7,1.1"]);
    assert_eq!(code(&o), 0);
    let r = stdout_json(&o);
    assert_eq!(r["status"], "ok");
    assert_eq!(r["report"]["kernel_dim"], 0);
    assert!(r["u_after"].as_f64().unwrap() < 1e-10);
    assert_eq!(r["f"].as_array().unwrap().len(), 1);

    let o = nhgeo(&["split", "--model", "free_4"]);
    assert_eq!(code(&o), 0);
    assert_eq!(stdout_json(&o)["report"]["rank"], 24);

    let d = TempDir::new().unwrap();
    let out = d.path().join("f3.json");
    let o = nhgeo(&["split", "--model", "free_3", "--out", s(&out)]);
    assert_eq!(code(&o), 1);
    let r: Value = serde_json::from_slice(&std::fs::read(&out).unwrap()).unwrap();
    assert_eq!(r["status"], "not_injective");
    assert_eq!(r["report"]["kernel_dim"], 1);

    assert_eq!(code(&nhgeo(&["split", "--model", "heisenberg_a", "--format", "csv"])), 2);
}

#[test]
fn torsion_dump() {
    let o = nhgeo(&["torsion", "--model", "contact5:exp_z", "--point", "0,0,0,0,-0.5"]);
    assert_eq!(code(&o), 0);
    let r = stdout_json(&o);
    for k in ["levi", "t_mix_d", "t_mix_q", "gamma_d", "gamma_q", "t_qq_d", "connection", "torsion", "structure"] {
        assert!(r[k].is_array(), "{k}");
    }
    assert_eq!(r["levi"][0][0][2], 1.0);
    // [X2, X4] = λ² Z on the axis
    assert!((r["levi"][0][1][3].as_f64().unwrap() - (-1f64).exp()).abs() < 1e-15);
    assert!(r["metric_defect"].as_f64().unwrap() < 1e-12);
    assert_eq!(code(&nhgeo(&["torsion", "--model", "free_2", "--format", "csv"])), 2);
}

#[test]
fn logging_goes_to_stderr() {
    let quiet = nhgeo(&["integrate", "--model", "free_2"]);
    let loud = Command::new(env!("CARGO_BIN_EXE_nhgeo"))
        .args(["integrate", "--model", "free_2"])
        .env("NHGEO_LOG", "debug")
        .output()
        .unwrap();
    assert_eq!(quiet.stdout, loud.stdout);
    assert!(stderr(&loud).contains("DEBUG"));
    assert!(stderr(&quiet).is_empty());
}

#[test]
fn penalized_integration() {
    let d = TempDir::new().unwrap();
    let cfg = write(&d, "p.json", r#"{"model": "heisenberg_a", "delta": 0.01, "output": {"format": "json"}}"#);
    let o = nhgeo(&["integrate", "--config", s(&cfg)]);
    assert_eq!(code(&o), 0);
    let r = stdout_json(&o);
    assert_eq!(r["delta"], 0.01);
    assert_eq!(r["times"].as_array().unwrap().len(), 101);
}
