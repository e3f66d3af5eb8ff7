use serde::Serialize;

use super::config::{GrowthFn, StudyConfig, StudySetup, Threshold};
use super::error_fn::{coupled_monitors, error_e_n, ErrorReport};
use super::exec::{map_indexed, Execution};
use super::stats::{fit_loglog, mean, probability_tail, quantile, std_dev, LogLogFit, TailTable};
use crate::error::{Result, SolverError};
use crate::noise::sample_path;
use crate::reference::{run_reference, ReferenceTrajectory};
use crate::splitting::{run_splitting, MonitorSeries, SchemeHistory, StateNorms, StoppingReport};

/// Largest fraction of paths a study may lose to blow-ups.
pub const MAX_EXCLUDED_FRACTION: f64 = 0.1;

/// Drift threshold of the moment diagnostics.
pub const MOMENT_DRIFT_LIMIT: f64 = 2.0;

/// Pathwise moments of one process.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct Moments {
    pub sup_h2: f64,
    pub sup_h4: f64,
    pub int_v2: f64,
    pub int_h2v2: f64,
    pub sup_dz_h2: f64,
    pub sup_dz_h4: f64,
    pub int_dz_v2: f64,
    pub int_dz_h2v2: f64,
}

impl Moments {
    pub const NAMES: [&'static str; 8] = [
        "sup|.|^2",
        "sup|.|^4",
        "int||.||^2",
        "int|.|^2||.||^2",
        "sup|dz .|^2",
        "sup|dz .|^4",
        "int||dz .||^2",
        "int|dz .|^2||dz .||^2",
    ];

    pub fn values(&self) -> [f64; 8] {
        [
            self.sup_h2,
            self.sup_h4,
            self.int_v2,
            self.int_h2v2,
            self.sup_dz_h2,
            self.sup_dz_h4,
            self.int_dz_v2,
            self.int_dz_h2v2,
        ]
    }

    /// Sups over all `nodes`; integrals as left-endpoint sums over `left` with step `dt`.
    fn accumulate<'a>(
        nodes: impl Iterator<Item = &'a StateNorms>,
        left: impl Iterator<Item = &'a StateNorms>,
        dt: f64,
    ) -> Moments {
        let mut m = Moments::default();
        for s in nodes {
            m.sup_h2 = m.sup_h2.max(s.h * s.h);
            m.sup_dz_h2 = m.sup_dz_h2.max(s.dz_h * s.dz_h);
        }
        m.sup_h4 = m.sup_h2 * m.sup_h2;
        m.sup_dz_h4 = m.sup_dz_h2 * m.sup_dz_h2;
        for s in left {
            m.int_v2 += dt * s.v * s.v;
            m.int_h2v2 += dt * s.h * s.h * s.v * s.v;
            m.int_dz_v2 += dt * s.dz_v * s.dz_v;
            m.int_dz_h2v2 += dt * s.dz_h * s.dz_h * s.dz_v * s.dz_v;
        }
        m
    }

    pub fn of_reference(r: &ReferenceTrajectory) -> Moments {
        let last = r.norms.len() - 1;
        Moments::accumulate(r.norms.iter(), r.norms[..last].iter(), r.dt())
    }

    /// Moments of `v^n` and of `eta^n`.
    pub fn of_scheme(h: &SchemeHistory) -> (Moments, Moments) {
        let m = h.micro_steps;
        let dt = h.micro_dt();
        let v = Moments::accumulate(
            h.records.iter().flat_map(|r| r.v_norms.iter()),
            h.records.iter().flat_map(|r| r.v_norms[..m].iter()),
            dt,
        );
        let eta = Moments::accumulate(
            h.records.iter().flat_map(|r| r.eta_norms.iter()),
            h.records.iter().flat_map(|r| r.eta_norms[..m].iter()),
            dt,
        );
        (v, eta)
    }
}

/// Everything kept from one splitting run.
#[derive(Debug, Clone)]
pub struct RunRecord {
    pub report: ErrorReport,
    pub monitors: MonitorSeries,
    pub v_moments: Moments,
    pub eta_moments: Moments,
    /// Worst relative violation of the velocity and shear energy inequalities.
    pub energy: (f64, f64),
    pub handoffs_exact: bool,
    pub admissible: bool,
}

#[derive(Debug, Clone)]
pub enum PathOutcome {
    Completed {
        seed: u64,
        reference: Moments,
        runs: Vec<RunRecord>,
    },
    Excluded {
        seed: u64,
        reason: String,
    },
}

impl PathOutcome {
    pub fn runs(&self) -> Option<&[RunRecord]> {
        match self {
            PathOutcome::Completed { runs, .. } => Some(runs),
            PathOutcome::Excluded { .. } => None,
        }
    }
}

fn admissible_history(h: &SchemeHistory) -> bool {
    h.records
        .iter()
        .all(|r| r.v.iter().chain(&r.eta).all(|f| f.is_admissible()))
}

/// Splitting run at `n` coupled to `reference`, with its error report
/// (`omega` from the supplied thresholds).
pub fn coupled_run(
    cfg: &StudyConfig,
    setup: &StudySetup,
    n: usize,
    path: &crate::noise::BrownianPath,
    reference: &ReferenceTrajectory,
    thresholds: (f64, f64),
) -> Result<(SchemeHistory, RunRecord, StoppingReport)> {
    let history = run_splitting(&cfg.split_config(setup, n)?, path)?;
    let monitors = coupled_monitors(&history, reference)?;
    let stopping = monitors.stopping(thresholds.0, thresholds.1);
    let report = error_e_n(&history, reference, stopping.omega)?;
    let (v_moments, eta_moments) = Moments::of_scheme(&history);
    let record = RunRecord {
        report,
        monitors,
        v_moments,
        eta_moments,
        energy: history.energy_residuals(),
        handoffs_exact: history.handoffs_exact(),
        admissible: admissible_history(&history),
    };
    Ok((history, record, stopping))
}

fn run_path(cfg: &StudyConfig, setup: &StudySetup, p: usize) -> Result<PathOutcome> {
    let seed = cfg.path_seed(p);
    let attempt = || -> Result<PathOutcome> {
        let path = sample_path(&setup.noise, seed, cfg.fine_steps(), cfg.scheme.horizon)?;
        let reference = run_reference(&cfg.reference_config(setup), &path)?;
        let mut runs = Vec::with_capacity(cfg.scheme.n_list.len());
        for &n in &cfg.scheme.n_list {
            let (_, record, _) =
                coupled_run(cfg, setup, n, &path, &reference, (f64::INFINITY, f64::INFINITY))?;
            runs.push(record);
        }
        Ok(PathOutcome::Completed {
            seed,
            reference: Moments::of_reference(&reference),
            runs,
        })
    };
    match attempt() {
        Err(e) if e.is_numerical() => Ok(PathOutcome::Excluded {
            seed,
            reason: e.to_string(),
        }),
        other => other,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum StudyStatus {
    Rate,
    NoiseFreeFloor,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PerN {
    pub n: usize,
    pub mean_e: f64,
    pub std_e: f64,
    pub mean_e_conditioned: Option<f64>,
    pub omega_fraction: f64,
    /// Means of the four components of `e_n`.
    pub mean_components: [f64; 4],
    /// `N` and `M` used for the indicator.
    pub big_n: f64,
    pub big_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentRow {
    pub process: &'static str,
    pub quantity: &'static str,
    pub means: Vec<f64>,
    /// max / min of `means` (1 when all vanish).
    pub ratio: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentTable {
    pub n: Vec<usize>,
    pub rows: Vec<MomentRow>,
    /// Reference moments averaged over paths.
    pub reference: Moments,
    pub pass: bool,
}

impl MomentTable {
    pub fn row(&self, process: &str, quantity: &str) -> Option<&MomentRow> {
        self.rows
            .iter()
            .find(|r| r.process == process && r.quantity == quantity)
    }
}

fn drift_ratio(means: &[f64]) -> f64 {
    let hi = means.iter().copied().fold(0.0, f64::max);
    let lo = means.iter().copied().fold(f64::INFINITY, f64::min);
    if hi == 0.0 {
        1.0
    } else {
        hi / lo
    }
}

/// Sample-average moments of `v^n` and `eta^n` per `n` in `ns`, with a drift test.
pub fn moment_diagnostics(study: &StudyResult, ns: &[usize]) -> Result<MomentTable> {
    let cols: Vec<usize> = ns
        .iter()
        .map(|n| {
            study.n_list.iter().position(|m| m == n).ok_or_else(|| {
                SolverError::InvalidConfig(format!("n = {n} is not part of the study"))
            })
        })
        .collect::<Result<_>>()?;
    let completed: Vec<&PathOutcome> = study
        .outcomes
        .iter()
        .filter(|o| o.runs().is_some())
        .collect();
    if completed.is_empty() {
        return Err(SolverError::Statistics("no completed paths".into()));
    }
    let mut rows = Vec::new();
    for (process, pick) in [
        ("v^n", (|r: &RunRecord| r.v_moments) as fn(&RunRecord) -> Moments),
        ("eta^n", |r: &RunRecord| r.eta_moments),
    ] {
        for (q, quantity) in Moments::NAMES.iter().enumerate() {
            let means: Vec<f64> = cols
                .iter()
                .map(|&c| {
                    let xs: Vec<f64> = completed
                        .iter()
                        .map(|o| pick(&o.runs().unwrap()[c]).values()[q])
                        .collect();
                    mean(&xs)
                })
                .collect();
            let ratio = drift_ratio(&means);
            rows.push(MomentRow {
                process,
                quantity,
                means,
                ratio,
                pass: ratio < MOMENT_DRIFT_LIMIT,
            });
        }
    }
    let mut reference = [0.0; 8];
    for o in &completed {
        if let PathOutcome::Completed { reference: m, .. } = o {
            for (acc, v) in reference.iter_mut().zip(m.values()) {
                *acc += v / completed.len() as f64;
            }
        }
    }
    let [sup_h2, sup_h4, int_v2, int_h2v2, sup_dz_h2, sup_dz_h4, int_dz_v2, int_dz_h2v2] = reference;
    Ok(MomentTable {
        n: ns.to_vec(),
        pass: rows.iter().all(|r| r.pass),
        rows,
        reference: Moments {
            sup_h2,
            sup_h4,
            int_v2,
            int_h2v2,
            sup_dz_h2,
            sup_dz_h4,
            int_dz_v2,
            int_dz_h2v2,
        },
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct StudyResult {
    pub status: StudyStatus,
    pub n_list: Vec<usize>,
    pub per_n: Vec<PerN>,
    pub fit: Option<LogLogFit>,
    pub tails: TailTable,
    pub moments: MomentTable,
    pub paths: usize,
    pub excluded: usize,
    /// Worst relative violations of the per-interval energy inequalities.
    pub worst_energy: (f64, f64),
    pub handoffs_exact: bool,
    pub admissible: bool,
    pub max_decomposition_residual: f64,
    #[serde(skip)]
    pub outcomes: Vec<PathOutcome>,
}

impl StudyResult {
    /// `e_n` over completed paths, grouped by `n`.
    pub fn errors_by_n(&self) -> Vec<(usize, Vec<f64>)> {
        self.n_list
            .iter()
            .enumerate()
            .map(|(c, &n)| {
                let errs = self
                    .outcomes
                    .iter()
                    .filter_map(|o| o.runs().map(|r| r[c].report.e_n))
                    .collect();
                (n, errs)
            })
            .collect()
    }

    pub fn tails_for(&self, ns: &[usize], l_fn: GrowthFn) -> Result<TailTable> {
        let groups: Vec<(usize, Vec<f64>)> = self
            .errors_by_n()
            .into_iter()
            .filter(|(n, _)| ns.contains(n))
            .collect();
        probability_tail(&groups, l_fn)
    }
}

fn resolve(choice: Threshold, levels: &[f64], l: f64, iterations: usize) -> f64 {
    match choice {
        Threshold::Fixed(x) => x,
        Threshold::Auto => 4.0 * quantile(levels, 0.95),
        Threshold::IteratedLog => (0..iterations).fold(l, |x, _| x.ln()),
    }
}

pub fn convergence_study(cfg: &StudyConfig, exec: Execution) -> Result<StudyResult> {
    cfg.validate()?;
    if cfg.study.paths < 8 {
        return Err(SolverError::InvalidConfig(format!(
            "a convergence study needs at least 8 paths, got {}",
            cfg.study.paths
        )));
    }
    if cfg.scheme.n_list.len() < 2 {
        return Err(SolverError::InvalidConfig(
            "a convergence study needs at least two values of n".into(),
        ));
    }
    let setup = cfg.setup()?;
    let outcomes = map_indexed(cfg.study.paths, exec, |p| run_path(cfg, &setup, p))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;

    let total = outcomes.len();
    let excluded = outcomes.iter().filter(|o| o.runs().is_none()).count();
    if excluded as f64 > MAX_EXCLUDED_FRACTION * total as f64 {
        return Err(SolverError::Stability { excluded, total });
    }
    finish_study(cfg, outcomes, excluded, setup.noise.is_zero())
}

fn finish_study(
    cfg: &StudyConfig,
    mut outcomes: Vec<PathOutcome>,
    excluded: usize,
    noise_free: bool,
) -> Result<StudyResult> {
    let n_list = cfg.scheme.n_list.clone();
    let level = |c: usize, f: fn(&MonitorSeries) -> f64| -> Vec<f64> {
        outcomes
            .iter()
            .filter_map(|o| o.runs().map(|r| f(&r[c].monitors)))
            .collect()
    };
    let tau0 = level(0, MonitorSeries::tau_level);
    let sigma0 = level(0, MonitorSeries::sigma_level);
    let thresholds: Vec<(f64, f64)> = n_list
        .iter()
        .map(|&n| {
            let l = cfg.study.l_fn.eval(n);
            (
                resolve(cfg.study.big_n, &tau0, l, 2),
                resolve(cfg.study.big_m, &sigma0, l, 3),
            )
        })
        .collect();

    for o in &mut outcomes {
        if let PathOutcome::Completed { runs, .. } = o {
            for (r, &(big_n, big_m)) in runs.iter_mut().zip(&thresholds) {
                r.report.omega = r.monitors.stopping(big_n, big_m).omega;
            }
        }
    }

    let mut per_n = Vec::with_capacity(n_list.len());
    for (c, &n) in n_list.iter().enumerate() {
        let reports: Vec<ErrorReport> = outcomes
            .iter()
            .filter_map(|o| o.runs().map(|r| r[c].report))
            .collect();
        let errs: Vec<f64> = reports.iter().map(|r| r.e_n).collect();
        let cond: Vec<f64> = reports.iter().filter(|r| r.omega).map(|r| r.e_n).collect();
        let mut mean_components = [0.0; 4];
        for r in &reports {
            for (acc, v) in mean_components.iter_mut().zip(r.components()) {
                *acc += v / reports.len() as f64;
            }
        }
        per_n.push(PerN {
            n,
            mean_e: mean(&errs),
            std_e: std_dev(&errs),
            mean_e_conditioned: (!cond.is_empty()).then(|| mean(&cond)),
            omega_fraction: cond.len() as f64 / reports.len() as f64,
            mean_components,
            big_n: thresholds[c].0,
            big_m: thresholds[c].1,
        });
    }

    let (status, fit) = if noise_free {
        (StudyStatus::NoiseFreeFloor, None)
    } else {
        let xs: Vec<f64> = n_list.iter().map(|&n| n as f64).collect();
        let ys: Vec<f64> = per_n.iter().map(|p| p.mean_e).collect();
        match fit_loglog(&xs, &ys) {
            Ok(f) => (StudyStatus::Rate, Some(f)),
            Err(_) => (StudyStatus::NoiseFreeFloor, None),
        }
    };

    let runs = || outcomes.iter().filter_map(PathOutcome::runs).flatten();
    let worst_energy = runs().fold((f64::NEG_INFINITY, f64::NEG_INFINITY), |acc, r| {
        (acc.0.max(r.energy.0), acc.1.max(r.energy.1))
    });
    let handoffs_exact = runs().all(|r| r.handoffs_exact);
    let admissible = runs().all(|r| r.admissible);
    let max_decomposition_residual = runs()
        .map(|r| r.report.decomposition_residual())
        .fold(0.0, f64::max);

    let mut result = StudyResult {
        status,
        n_list: n_list.clone(),
        per_n,
        fit,
        tails: TailTable {
            l_fn: cfg.study.l_fn.to_string(),
            rows: Vec::new(),
            nonincreasing: true,
        },
        moments: MomentTable {
            n: Vec::new(),
            rows: Vec::new(),
            reference: Moments::default(),
            pass: true,
        },
        paths: outcomes.len(),
        excluded,
        worst_energy,
        handoffs_exact,
        admissible,
        max_decomposition_residual,
        outcomes,
    };
    result.tails = result.tails_for(&n_list, cfg.study.l_fn)?;
    result.moments = moment_diagnostics(&result, &n_list)?;
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> StudyConfig {
        let mut cfg = StudyConfig::default();
        cfg.grid.nx = 6;
        cfg.grid.nz = 4;
        cfg.noise.m_w = 4;
        cfg.scheme.n_list = vec![2, 4, 8];
        cfg.scheme.micro_steps = 4;
        cfg.reference.n_ref_factor = 4;
        cfg.study.paths = 8;
        cfg
    }

    #[test]
    fn noise_free_study_reports_floor() {
        let mut cfg = small();
        cfg.noise.amplitude = 0.0;
        let r = convergence_study(&cfg, Execution::Sequential).unwrap();
        assert_eq!(r.status, StudyStatus::NoiseFreeFloor);
        assert!(r.fit.is_none());
    }

    #[test]
    fn study_is_deterministic_across_schedules() {
        let cfg = small();
        let a = convergence_study(&cfg, Execution::Sequential).unwrap();
        let b = convergence_study(&cfg, Execution::Parallel).unwrap();
        assert_eq!(a.per_n, b.per_n);
        assert_eq!(a.fit, b.fit);
        assert_eq!(a.excluded, 0);
        assert!(a.max_decomposition_residual < 1e-14);
        assert!(a.handoffs_exact && a.admissible);
        for p in &a.per_n {
            // E[e 1_Omega] <= E[e] since e >= 0
            if let Some(c) = p.mean_e_conditioned {
                assert!(c * p.omega_fraction <= p.mean_e * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn thresholds_resolve() {
        assert_eq!(resolve(Threshold::Fixed(3.0), &[], 1.0, 2), 3.0);
        assert!((resolve(Threshold::Auto, &[1.0, 2.0, 3.0], 1.0, 2) - 4.0 * 2.9).abs() < 1e-12);
        let l = 100.0f64;
        assert!((resolve(Threshold::IteratedLog, &[], l, 2) - l.ln().ln()).abs() < 1e-15);
    }

    #[test]
    fn too_few_paths_rejected() {
        let mut cfg = small();
        cfg.study.paths = 4;
        assert!(matches!(
            convergence_study(&cfg, Execution::Sequential),
            Err(SolverError::InvalidConfig(_))
        ));
    }
}
