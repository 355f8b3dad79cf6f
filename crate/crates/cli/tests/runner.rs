//! End-to-end runner tests: demo specs execute, artifacts land with hashed
//! manifests, reruns are bit-identical, and schema violations carry field
//! names.

use nssteer_cli::{builtin_demo, run_spec, RunStatus};
use std::path::Path;

fn tmp_dir(name: &str) -> std::path::PathBuf {
    let dir = std::env::temp_dir().join(format!("nssteer-test-{name}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn run_toml(text: &str, out: &Path) -> anyhow::Result<RunStatus> {
    let spec = toml::from_str(text)?;
    run_spec(&spec, out, text, None, 1)
}

#[test]
fn steer_demo_writes_trace_and_manifest() {
    let dir = tmp_dir("steer");
    let status = run_toml(builtin_demo("steer-lsdfavt6").unwrap(), &dir).unwrap();
    assert_eq!(status, RunStatus::Ok);
    for f in ["trace.csv", "summary.json", "control.json", "manifest.json"] {
        assert!(dir.join(f).exists(), "missing {f}");
    }
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap();
    let files = manifest["files"].as_array().unwrap();
    // Every emitted file (except the manifest itself) is listed with a hash.
    assert_eq!(files.len(), 3);
    for f in files {
        assert_eq!(f["sha256"].as_str().unwrap().len(), 64);
    }
    let trace = std::fs::read_to_string(dir.join("trace.csv")).unwrap();
    assert!(trace.starts_with("level,n,endpoint_error,relaxation_error,flow_error,xk_norm"));
}

#[test]
fn identical_spec_and_seed_is_bit_identical() {
    let spec = r#"
kind = "simulate"
seed = 99
checkpoints = [1.0]
[config]
nu = 1.0
galerkin_radius = 2
dt = 0.002
horizon = 1.0
[initial]
type = "random"
radius = 2
amplitude = 0.3
"#;
    let d1 = tmp_dir("det1");
    let d2 = tmp_dir("det2");
    run_toml(spec, &d1).unwrap();
    run_toml(spec, &d2).unwrap();
    for f in ["trajectory.csv", "state-0.json", "summary.json"] {
        let a = std::fs::read(d1.join(f)).unwrap();
        let b = std::fs::read(d2.join(f)).unwrap();
        assert_eq!(a, b, "{f} differs between identical runs");
    }
}

#[test]
fn malformed_spec_reports_field() {
    let err = toml::from_str::<nssteer_cli::spec::ExperimentSpec>(
        r#"
kind = "saturate"
space = "e12"
depth = 3
radius = 2
surprise = 1
"#,
    )
    .unwrap_err();
    assert!(err.to_string().contains("surprise"), "{err}");
}

#[test]
fn builtin_certificates_verify_through_runner() {
    for name in ["e12", "lavt", "lsdfavt"] {
        let dir = tmp_dir(&format!("cert-{name}"));
        let spec = format!("kind = \"verify-certificate\"\nbuiltin = \"{name}\"\n");
        let status = run_toml(&spec, &dir).unwrap();
        assert_eq!(status, RunStatus::Ok);
        let report: serde_json::Value = serde_json::from_str(
            &std::fs::read_to_string(dir.join("certificate-report.json")).unwrap(),
        )
        .unwrap();
        assert_eq!(report["all_pass"], serde_json::Value::Bool(true));
    }
}

#[test]
fn saturate_csv_has_reached_planes() {
    let dir = tmp_dir("saturate");
    let spec = r#"
kind = "saturate"
space = "e12"
depth = 6
radius = 2
"#;
    run_toml(spec, &dir).unwrap();
    let csv = std::fs::read_to_string(dir.join("saturate.csv")).unwrap();
    assert!(csv.starts_with("depth,mx,my,mz,plane,reached_dim"));
    // Depth 0 has the coordinate planes at dimension 2 and nothing else.
    assert!(csv.contains("0,1,0,0,cos,2"));
    assert!(csv.contains("0,1,1,0,cos,0"));
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["covers_truncation"], serde_json::Value::Bool(true));
}

#[test]
fn flow_spec_runs_and_reports_volume() {
    let dir = tmp_dir("flow");
    let spec = r#"
kind = "flow"
grid_res = 4
horizon = 1.0
dt = 0.01
record_times = [0.5, 1.0]
[target]
Shears = [{ axis = 2, field = { modes = [{ ell = [1, 0, 0], cos = [0.0, 0.0, 0.0], sin = [0.0, 0.0, 1.0] }] } }]
"#;
    run_toml(spec, &dir).unwrap();
    assert!(dir.join("flow-t0.5.csv").exists());
    assert!(dir.join("flow-t1.csv").exists());
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap();
    assert!(summary["max_det_deviation"].as_f64().unwrap() < 1e-6);
}

#[test]
fn probe_specs_run() {
    let dir = tmp_dir("stability");
    let spec = r#"
kind = "stability-probe"
seed = 4
horizon = 1.0
oscillation_indices = [4, 8]
lambda = 0.5
grid_res = 2
dt = 0.01
sobolev_k = 3.0
[base]
type = "basis"
mode = [1, 0, 0]
kind = "sin"
[bump]
type = "random"
radius = 1
amplitude = 0.3
"#;
    run_toml(spec, &dir).unwrap();
    assert!(dir.join("stability.csv").exists());

    let dir = tmp_dir("lipschitz");
    let spec = r#"
kind = "lipschitz-probe"
seed = 5
slot = "initial-state"
sizes = [0.01, 0.001]
[config]
nu = 1.0
galerkin_radius = 1
dt = 0.004
horizon = 1.0
[initial]
type = "random"
radius = 1
amplitude = 0.2
[direction]
type = "basis"
mode = [1, 0, 0]
kind = "cos"
"#;
    run_toml(spec, &dir).unwrap();
    let csv = std::fs::read_to_string(dir.join("lipschitz.csv")).unwrap();
    assert!(csv.starts_with("size,input_dist,traj_dist,ratio"));
}
