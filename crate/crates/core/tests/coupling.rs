//! Scheme, reference and error functional on shared Wiener paths.

use primsplit::error::SolverError;
use primsplit::experiment::{coupled_run, error_e_n, StudyConfig};
use primsplit::noise::{sample_path, NoiseKind};
use primsplit::reference::{run_reference, ReferenceTrajectory};
use primsplit::splitting::{IntervalRecord, SchemeHistory, StateNorms};
use primsplit::operators::EpsilonSplit;

fn small(kind: NoiseKind) -> StudyConfig {
    let mut cfg = StudyConfig::default();
    cfg.grid.nx = 12;
    cfg.grid.nz = 8;
    cfg.noise.kind = kind;
    cfg.noise.m_w = 8;
    cfg
}

/// A scheme history whose `v^n` and `eta^n` are both the reference itself.
fn history_from(reference: &ReferenceTrajectory, n: usize, m: usize) -> SchemeHistory {
    let stride = reference.fine_steps() / (n * m);
    let records = (0..n)
        .map(|i| {
            let fields: Vec<_> = (0..=m)
                .map(|j| reference.fields[(i * m + j) * stride].clone())
                .collect();
            let norms: Vec<StateNorms> = fields.iter().map(StateNorms::of).collect();
            IntervalRecord {
                v: fields.clone(),
                eta: fields,
                v_norms: norms.clone(),
                eta_norms: norms,
                v_dissipation: vec![0.0; m + 1],
                r_dissipation: vec![0.0; m + 1],
            }
        })
        .collect();
    SchemeHistory {
        horizon: reference.horizon,
        intervals: n,
        micro_steps: m,
        eps: EpsilonSplit::zero(),
        records,
        provenance: reference.provenance,
    }
}

#[test]
fn reference_against_itself_has_zero_error() {
    let cfg = small(NoiseKind::DiagonalMultiplicative);
    let setup = cfg.setup().unwrap();
    let path = sample_path(&setup.noise, 1, cfg.fine_steps(), cfg.scheme.horizon).unwrap();
    let reference = run_reference(&cfg.reference_config(&setup), &path).unwrap();
    let h = history_from(&reference, 8, 8);
    let r = error_e_n(&h, &reference, true).unwrap();
    assert_eq!(r.components(), [0.0; 4]);
    assert_eq!(r.e_n, 0.0);
}

#[test]
fn unpaired_paths_are_refused() {
    let cfg = small(NoiseKind::Additive);
    let setup = cfg.setup().unwrap();
    let p1 = sample_path(&setup.noise, 1, cfg.fine_steps(), cfg.scheme.horizon).unwrap();
    let p2 = sample_path(&setup.noise, 2, cfg.fine_steps(), cfg.scheme.horizon).unwrap();
    let reference = run_reference(&cfg.reference_config(&setup), &p1).unwrap();
    let err = coupled_run(&cfg, &setup, 8, &p2, &reference, (f64::INFINITY, f64::INFINITY)).unwrap_err();
    assert!(matches!(err, SolverError::Coupling(_)));
}

#[test]
fn error_decomposition_identity() {
    let cfg = small(NoiseKind::DiagonalMultiplicative);
    let setup = cfg.setup().unwrap();
    let path = sample_path(&setup.noise, 3, cfg.fine_steps(), cfg.scheme.horizon).unwrap();
    let reference = run_reference(&cfg.reference_config(&setup), &path).unwrap();
    for n in [4, 16, 64] {
        let (_, rec, _) = coupled_run(&cfg, &setup, n, &path, &reference, (f64::INFINITY, f64::INFINITY)).unwrap();
        let r = rec.report;
        assert!(r.components().iter().all(|&c| c >= 0.0));
        assert!(r.decomposition_residual() <= 1e-14);
        assert_eq!(r.n, n);
        assert_eq!(r.seed, 3);
    }
}

#[test]
fn finer_splitting_wins_on_most_paired_paths() {
    let cfg = small(NoiseKind::Additive);
    let setup = cfg.setup().unwrap();
    let mut wins = 0;
    for p in 0..32 {
        let path = sample_path(&setup.noise, cfg.path_seed(p), cfg.fine_steps(), cfg.scheme.horizon).unwrap();
        let reference = run_reference(&cfg.reference_config(&setup), &path).unwrap();
        let e = |n| {
            coupled_run(&cfg, &setup, n, &path, &reference, (f64::INFINITY, f64::INFINITY))
                .unwrap()
                .1
                .report
                .e_n
        };
        if e(16) < e(8) {
            wins += 1;
        }
    }
    assert!(wins >= 23, "e_16 < e_8 on {wins} of 32 paths");
}

/// Doubling the reference resolution moves it by far less than the smallest
/// splitting error being measured.
#[test]
fn reference_is_resolved() {
    for kind in [NoiseKind::Additive, NoiseKind::DiagonalMultiplicative] {
        let cfg = StudyConfig {
            noise: primsplit::experiment::NoiseSection {
                kind,
                ..StudyConfig::default().noise
            },
            ..StudyConfig::default()
        };
        let setup = cfg.setup().unwrap();
        let mut fine_cfg = cfg.reference_config(&setup);
        fine_cfg.n_ref *= 2;
        let mut worst_ratio: f64 = 0.0;
        for p in 0..4 {
            let path = sample_path(&setup.noise, cfg.path_seed(p), 2 * cfg.fine_steps(), cfg.scheme.horizon).unwrap();
            let coarse = run_reference(&cfg.reference_config(&setup), &path).unwrap();
            let fine = run_reference(&fine_cfg, &path).unwrap();
            let shift = coarse.terminal().sub(fine.terminal()).norm_h();
            let (_, rec, _) = coupled_run(&cfg, &setup, 64, &path, &coarse, (f64::INFINITY, f64::INFINITY)).unwrap();
            worst_ratio = worst_ratio.max(shift / rec.report.e_n);
        }
        assert!(worst_ratio < 0.1, "{}: ratio {worst_ratio}", kind.name());
    }
}

#[test]
fn reference_mean_square_is_bounded() {
    let cfg = small(NoiseKind::DiagonalMultiplicative);
    let setup = cfg.setup().unwrap();
    let v0 = setup.v0.norm_h().powi(2);
    let mut acc = 0.0;
    for p in 0..32 {
        let path = sample_path(&setup.noise, cfg.path_seed(p), cfg.fine_steps(), cfg.scheme.horizon).unwrap();
        let r = run_reference(&cfg.reference_config(&setup), &path).unwrap();
        assert!(r.fields.iter().all(|f| f.is_admissible()));
        acc += r.sup_h().powi(2) / 32.0;
    }
    assert!(acc.is_finite() && acc < 2.0 * v0, "{acc} vs {v0}");
}
