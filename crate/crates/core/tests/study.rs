use primsplit::error::SolverError;
use primsplit::experiment::{
    convergence_study, moment_diagnostics, study_json, write_study_csv, Execution, StudyConfig,
    StudyStatus, Threshold,
};
use primsplit::noise::NoiseKind;

fn small() -> StudyConfig {
    let mut cfg = StudyConfig::default();
    cfg.grid.nx = 8;
    cfg.grid.nz = 6;
    cfg.noise.m_w = 6;
    cfg.scheme.n_list = vec![2, 4, 8, 16];
    cfg.reference.n_ref_factor = 8;
    cfg.study.paths = 8;
    cfg
}

#[test]
fn rerun_is_bitwise_identical() {
    let cfg = small();
    let a = convergence_study(&cfg, Execution::Parallel).unwrap();
    let b = convergence_study(&cfg, Execution::Parallel).unwrap();
    let ja = serde_json::to_string(&study_json(&a, &cfg, &cfg.to_toml())).unwrap();
    let jb = serde_json::to_string(&study_json(&b, &cfg, &cfg.to_toml())).unwrap();
    assert_eq!(ja, jb);
}

#[test]
fn zero_noise_and_zero_data_have_zero_moments() {
    let mut cfg = small();
    cfg.noise.amplitude = 0.0;
    cfg.init.amplitude = 0.0;
    let r = convergence_study(&cfg, Execution::Sequential).unwrap();
    assert_eq!(r.status, StudyStatus::NoiseFreeFloor);
    assert!(r.per_n.iter().all(|p| p.mean_e == 0.0));
    let m = moment_diagnostics(&r, &[4, 8, 16]).unwrap();
    assert!(m.rows.iter().all(|row| row.means.iter().all(|&x| x == 0.0)));
    assert!(m.pass);
    assert!(moment_diagnostics(&r, &[3]).is_err());
}

#[test]
fn multiplicative_study_diagnostics() {
    let mut cfg = small();
    cfg.noise.kind = NoiseKind::DiagonalMultiplicative;
    let r = convergence_study(&cfg, Execution::Parallel).unwrap();
    assert_eq!(r.status, StudyStatus::Rate);
    assert!(r.fit.unwrap().rate > 0.0);
    assert!(r.worst_energy.0 <= 1e-8 && r.worst_energy.1 <= 1e-8);
    assert!(r.moments.row("eta^n", "sup|dz .|^2").unwrap().means.iter().all(|x| x.is_finite()));
    // automatic thresholds leave most paths in Omega at the smallest n
    assert!(r.per_n[0].omega_fraction >= 0.8);
    assert_eq!(r.tails.rows.len(), 4);
}

#[test]
fn tight_thresholds_empty_omega() {
    let mut cfg = small();
    cfg.study.big_n = Threshold::Fixed(1e-300);
    let r = convergence_study(&cfg, Execution::Sequential).unwrap();
    assert!(r.per_n.iter().all(|p| p.omega_fraction == 0.0 && p.mean_e_conditioned.is_none()));
}

#[test]
fn blow_ups_abort_the_study() {
    let mut cfg = small();
    cfg.grid.length = 1.0;
    cfg.grid.depth = 1.0;
    cfg.init.amplitude = 1e4;
    cfg.scheme.micro_steps = 1;
    cfg.reference.micro_steps = 1;
    match convergence_study(&cfg, Execution::Sequential) {
        Err(SolverError::Stability { excluded, total }) => {
            assert_eq!(total, 8);
            assert!(excluded > 0);
        }
        other => panic!("expected a stability error, got {other:?}"),
    }
}

#[test]
fn csv_has_contract_columns() {
    let cfg = small();
    let r = convergence_study(&cfg, Execution::Parallel).unwrap();
    let mut buf = Vec::new();
    write_study_csv(&mut buf, &r).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "n,mean_e,std_e,mean_e_conditioned,omega_fraction");
    assert_eq!(lines.count(), 4);
    let json = study_json(&r, &cfg, &cfg.to_toml());
    for key in ["config_hash", "slope", "intercept", "per_n", "tails"] {
        assert!(json.get(key).is_some(), "missing {key}");
    }
    assert_eq!(json["config_hash"].as_str().unwrap().len(), 64);
}
