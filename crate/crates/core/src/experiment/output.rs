use std::io::Write;
use std::path::Path;

use serde::Serialize;

use super::config::{config_hash, StudyConfig};
use super::study::StudyResult;
use crate::error::{Result, SolverError};
use crate::reference::ReferenceTrajectory;
use crate::splitting::SchemeHistory;

fn io_err(path: &Path, e: impl std::fmt::Display) -> SolverError {
    SolverError::InvalidConfig(format!("cannot write {}: {e}", path.display()))
}

#[derive(Serialize)]
struct StudyRow {
    n: usize,
    mean_e: f64,
    std_e: f64,
    mean_e_conditioned: Option<f64>,
    omega_fraction: f64,
}

/// Study CSV: `n, mean_e, std_e, mean_e_conditioned, omega_fraction`.
pub fn write_study_csv<W: Write>(out: W, result: &StudyResult) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for p in &result.per_n {
        w.serialize(StudyRow {
            n: p.n,
            mean_e: p.mean_e,
            std_e: p.std_e,
            mean_e_conditioned: p.mean_e_conditioned,
            omega_fraction: p.omega_fraction,
        })?;
    }
    w.flush()?;
    Ok(())
}

/// JSON summary: config echo and hash, fit, per-`n` table, tails and diagnostics.
pub fn study_json(result: &StudyResult, cfg: &StudyConfig, config_text: &str) -> serde_json::Value {
    serde_json::json!({
        "config_hash": config_hash(config_text),
        "seed": cfg.study.seed,
        "config": cfg,
        "status": result.status,
        "slope": result.fit.map(|f| f.rate),
        "slope_stderr": result.fit.and_then(|f| f.rate_stderr),
        "intercept": result.fit.map(|f| f.intercept),
        "per_n": result.per_n,
        "tails": result.tails.rows,
        "tails_nonincreasing": result.tails.nonincreasing,
        "moments": result.moments,
        "paths": result.paths,
        "excluded": result.excluded,
        "worst_energy_residual": [result.worst_energy.0, result.worst_energy.1],
    })
}

pub fn write_study(dir: &Path, result: &StudyResult, cfg: &StudyConfig, config_text: &str) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let csv_path = dir.join("study.csv");
    let file = std::fs::File::create(&csv_path).map_err(|e| io_err(&csv_path, e))?;
    write_study_csv(file, result).map_err(|e| io_err(&csv_path, e))?;
    let json_path = dir.join("study.json");
    let text = serde_json::to_string_pretty(&study_json(result, cfg, config_text))
        .map_err(|e| io_err(&json_path, e))?;
    std::fs::write(&json_path, text).map_err(|e| io_err(&json_path, e))
}

#[derive(Serialize)]
struct TrajectoryRow {
    t: f64,
    v_h: f64,
    v_v: f64,
    v_dz_h: f64,
    eta_h: f64,
    eta_v: f64,
    eta_dz_h: f64,
    ref_h: f64,
    ref_v: f64,
}

/// Norms of `v^n`, `eta^n` and the reference at the scheme's micro nodes.
pub fn write_trajectory_csv<W: Write>(
    out: W,
    history: &SchemeHistory,
    reference: &ReferenceTrajectory,
) -> csv::Result<()> {
    let stride = reference.fine_steps() / (history.intervals * history.micro_steps);
    let mut w = csv::Writer::from_writer(out);
    for (idx, (t, rec, j)) in history.nodes().enumerate() {
        let r = &reference.norms[idx * stride];
        w.serialize(TrajectoryRow {
            t,
            v_h: rec.v_norms[j].h,
            v_v: rec.v_norms[j].v,
            v_dz_h: rec.v_norms[j].dz_h,
            eta_h: rec.eta_norms[j].h,
            eta_v: rec.eta_norms[j].v,
            eta_dz_h: rec.eta_norms[j].dz_h,
            ref_h: r.h,
            ref_v: r.v,
        })?;
    }
    w.flush()?;
    Ok(())
}
