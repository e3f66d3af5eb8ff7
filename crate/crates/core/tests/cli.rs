use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_primsplit"))
}

const SMALL: &str = r#"
grid.L = 6.0
grid.h = 6.0
grid.Nx = 8
grid.Nz = 6
noise.kind = "additive"
noise.m_W = 6
init.amplitude = 0.1
init.modes = [[1, 1], [2, 1]]
scheme.T = 0.5
scheme.eps = 0.0
scheme.n_list = [2, 4, 8]
scheme.micro_steps = 4
ref.n_ref_factor = 4
study.paths = 8
study.seed = 11
study.M = "auto"
study.N = "auto"
study.l_fn = "log"
"#;

#[test]
fn check_passes_on_default_grid() {
    let out = bin().arg("check").output().unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    assert!(!String::from_utf8_lossy(&out.stdout).contains("FAIL"));
}

#[test]
fn converge_writes_csv_and_json() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("small.toml");
    std::fs::write(&cfg, SMALL).unwrap();
    let out_dir = dir.path().join("out");
    let out = bin()
        .args(["converge", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(out_dir.join("study.csv")).unwrap();
    assert!(csv.starts_with("n,mean_e,std_e,mean_e_conditioned,omega_fraction\n"));
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("study.json")).unwrap()).unwrap();
    assert!(json["slope"].as_f64().is_some());
    assert_eq!(json["seed"].as_u64(), Some(11));
}

#[test]
fn simulate_writes_trajectory() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("small.toml");
    std::fs::write(&cfg, SMALL).unwrap();
    let traj = dir.path().join("t.csv");
    let out = bin()
        .args(["simulate", "--n", "4", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&traj)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let text = std::fs::read_to_string(traj).unwrap();
    assert!(text.starts_with("t,v_h,v_v,v_dz_h,eta_h,eta_v,eta_dz_h,ref_h,ref_v\n"));
    // 4 intervals x 4 micro steps
    assert_eq!(text.lines().count(), 17);
}

#[test]
fn hypotheses_for_additive_noise() {
    let out = bin()
        .args(["hypotheses", "--kind", "additive", "--samples", "50"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    let k1 = text
        .lines()
        .find(|l| l.trim_start().starts_with("K1"))
        .unwrap();
    assert!(k1.trim_end().ends_with("estimated 0.000000e0"), "{k1}");
}

#[test]
fn bad_input_exit_codes() {
    let out = bin().args(["converge", "--config", "/nonexistent.toml"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let out = bin().args(["frobnicate"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));

    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, SMALL.replace("[2, 4, 8]", "[8, 4]")).unwrap();
    let out = bin().args(["converge", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn numerical_abort_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("wild.toml");
    let text = SMALL
        .replace("grid.L = 6.0", "grid.L = 1.0")
        .replace("grid.h = 6.0", "grid.h = 1.0")
        .replace("init.amplitude = 0.1", "init.amplitude = 10000.0")
        .replace("scheme.micro_steps = 4", "scheme.micro_steps = 1\nref.micro_steps = 1");
    std::fs::write(&cfg, text).unwrap();
    let out = bin()
        .args(["converge", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path().join("o"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}
