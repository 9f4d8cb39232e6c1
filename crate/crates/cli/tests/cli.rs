use std::io::Write;
use std::process::Command;

const HELIX: &str = r#"{
  "dim": 3,
  "signature": [3, 0],
  "coords": ["x", "y", "z"],
  "metric": [[1, 0, 0], [0, 1, 0], [0, 0, 1]],
  "curve": ["0.6*cos(t)", "0.6*sin(t)", "0.8*t"],
  "t_samples": {"from": -0.5, "to": 0.5, "count": 5}
}"#;

fn scene(text: &str) -> tempfile::NamedTempFile {
    let mut f = tempfile::NamedTempFile::new().unwrap();
    f.write_all(text.as_bytes()).unwrap();
    f
}

fn run(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_tractoria")).args(args).output().unwrap();
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8(out.stdout).unwrap(),
        String::from_utf8(out.stderr).unwrap(),
    )
}

#[test]
fn helix_reports_k1() {
    let f = scene(HELIX);
    let (code, out, _) = run(&["invariants", f.path().to_str().unwrap()]);
    assert_eq!(code, 0);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    let samples = v["samples"].as_array().unwrap();
    assert_eq!(samples.len(), 5);
    for s in samples {
        let k1 = s["K"]["K1"].as_f64().unwrap();
        assert!((k1 + 0.6 / 1.6).abs() < 1e-8, "{}", k1);
        assert_eq!(s["classification"], "generic");
    }
}

#[test]
fn straight_line_is_a_circle_candidate() {
    let f = scene(&HELIX.replace(r#"["0.6*cos(t)", "0.6*sin(t)", "0.8*t"]"#, r#"["1 + t", "2*t", "-0.5*t"]"#));
    let (code, out, _) = run(&["classify", f.path().to_str().unwrap()]);
    assert_eq!(code, 0);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    for s in v["samples"].as_array().unwrap() {
        assert_eq!(s["classification"], "conformal-circle-candidate");
    }
}

#[test]
fn asymmetric_metric_is_an_input_error() {
    let f = scene(&HELIX.replace("[0, 1, 0]", r#"["x", 1, 0]"#));
    let (code, out, err) = run(&["invariants", f.path().to_str().unwrap()]);
    assert_eq!(code, 2);
    assert!(out.is_empty());
    assert!(err.contains("symmetric"), "{}", err);
}

#[test]
fn parse_errors_name_the_entry() {
    let f = scene(&HELIX.replace("0.8*t", "0.8*(t"));
    let (code, _, err) = run(&["frenet", f.path().to_str().unwrap()]);
    assert_eq!(code, 2);
    assert!(err.contains("curve[2]"), "{}", err);
    let (code, _, _) = run(&["frenet", "/nonexistent/scene.json"]);
    assert_eq!(code, 2);
}

#[test]
fn computation_errors_exit_with_one() {
    // a null geodesic has no tractor lift
    let f = scene(
        &HELIX
            .replace("[3, 0]", "[2, 1]")
            .replace("[[1, 0, 0]", "[[-1, 0, 0]")
            .replace(r#"["0.6*cos(t)", "0.6*sin(t)", "0.8*t"]"#, r#"["t", "t", "0"]"#),
    );
    let (code, _, err) = run(&["frenet", f.path().to_str().unwrap(), "--order", "9"]);
    assert_eq!(code, 1, "{}", err);
    // but invariants labels the points instead of failing
    let (code, out, _) = run(&["invariants", f.path().to_str().unwrap(), "--order", "9"]);
    assert_eq!(code, 0);
    assert!(out.contains("\"degenerate\""));
}

#[test]
fn parallel_output_matches_serial_byte_for_byte() {
    let f = scene(HELIX);
    let p = f.path().to_str().unwrap();
    let (_, serial, _) = run(&["frenet", p]);
    let (_, parallel, _) = run(&["frenet", p, "--parallel"]);
    let (_, again, _) = run(&["frenet", p]);
    assert_eq!(serial, parallel);
    assert_eq!(serial, again);
}

#[test]
fn csv_has_one_row_per_sample() {
    let f = scene(HELIX);
    let (code, out, _) = run(&["circle", f.path().to_str().unwrap(), "--format", "csv", "--samples=0.1,-0.2"]);
    assert_eq!(code, 0);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[0].starts_with("t,be5,be6,be7"));
    assert!(lines[2].starts_with("-2.0000000000000001e-1,"));
}

#[test]
fn conserved_needs_providers() {
    let f = scene(HELIX);
    let (code, _, err) = run(&["conserved", f.path().to_str().unwrap()]);
    assert_eq!(code, 2, "{}", err);
    let circle = HELIX
        .replace(r#"["0.6*cos(t)", "0.6*sin(t)", "0.8*t"]"#, r#"["cos(t)", "sin(t)", "0"]"#)
        .replace(r#""t_samples""#, r#""options": {"sigma": "1 + (x^2 + y^2 + z^2)/2"}, "t_samples""#);
    let f = scene(&circle);
    let (code, out, err) = run(&["conserved", f.path().to_str().unwrap()]);
    assert_eq!(code, 0, "{}", err);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["samples"]["conserved"], true);
}
