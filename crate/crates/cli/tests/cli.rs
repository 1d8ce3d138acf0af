use std::fs;
use std::process::Command;

fn acnavier() -> Command {
    Command::new(env!("CARGO_BIN_EXE_acnavier"))
}

const SMALL: &str = "[solver]\nn_modes = 3\ndt = 0.01\nt_final = 0.05\n";

#[test]
fn run_writes_record_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("small.toml");
    fs::write(&cfg, SMALL).unwrap();
    let out = dir.path().join("out");
    let status = acnavier()
        .args(["run", "--quiet", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    let csv = fs::read_to_string(out.join("path.csv")).unwrap();
    let mut lines = csv.lines();
    assert!(lines.next().unwrap().starts_with("# manifest "));
    assert_eq!(lines.next().unwrap(), "t,l2_u,h1_u,l4_u,l2_p,l2_div_u,energy,residual");
    assert_eq!(lines.count(), 6);
    assert!(out.join("manifest.json").exists());
    assert!(out.join("final.snap").exists());
}

#[test]
fn override_is_echoed_with_source() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let status = acnavier()
        .args(["run", "--quiet", "--set", "n_modes=2", "--set", "t_final=0.01", "--set", "eps=1e-4"])
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    let manifest = fs::read_to_string(out.join("manifest.json")).unwrap();
    let v: serde_json::Value = serde_json::from_str(&manifest).unwrap();
    let config = &v["inputs"]["config"];
    assert_eq!(config["problem"]["solver"]["eps"], 1e-4);
    assert_eq!(config["provenance"]["solver.eps"], "override");
    assert_eq!(config["provenance"]["solver.nu"], "default");
}

#[test]
fn bad_config_exits_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let output = acnavier()
        .args(["run", "--set", "dt=0"])
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&output.stderr).contains("dt must be positive"));

    let output = acnavier().arg("frobnicate").output().unwrap();
    assert_eq!(output.status.code(), Some(2));

    let output = acnavier()
        .args(["run", "--config", "/nonexistent/file.toml"])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn verify_small_suite_passes() {
    let dir = tempfile::tempdir().unwrap();
    let output = acnavier()
        .args(["verify", "--seed", "42", "--samples", "5", "--set", "verify.n_modes=[2]"])
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(0), "{}", String::from_utf8_lossy(&output.stdout));
    let csv = fs::read_to_string(dir.path().join("inequalities.csv")).unwrap();
    assert_eq!(csv.lines().nth(1).unwrap(), "lemma,seed,lhs,rhs,margin,pass,n_modes,nu");
}

#[test]
fn failed_assertion_exits_with_1() {
    let dir = tempfile::tempdir().unwrap();
    // A negative tolerance constant cannot be met.
    let status = acnavier()
        .args([
            "uniqueness",
            "--quiet",
            "--set",
            "n_modes=2",
            "--set",
            "t_final=0.02",
            "--set",
            "dt=0.01",
            "--set",
            "mc.c_check=-1e6",
        ])
        .arg("--out")
        .arg(dir.path())
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(1));
    assert!(dir.path().join("uniqueness.csv").exists());
}
