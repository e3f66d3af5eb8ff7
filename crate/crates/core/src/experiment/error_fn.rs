use serde::Serialize;

use crate::error::{Result, SolverError};
use crate::reference::ReferenceTrajectory;
use crate::splitting::{MonitorSeries, SchemeHistory};

/// Components of `e_n(T)` for one trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ErrorReport {
    pub n: usize,
    pub seed: u64,
    /// `sup_k |v^n(t_k^+) - v(t_k)|`
    pub sup_v: f64,
    /// `sup_k |eta^n(t_k^-) - v(t_k)|`
    pub sup_eta: f64,
    /// `(int_0^T ||v^n - v||^2)^{1/2}`
    pub int_v: f64,
    /// `(int_0^T ||eta^n - v||^2)^{1/2}`
    pub int_eta: f64,
    pub e_n: f64,
    /// Membership in `Omega_n^{M,N}(T)`.
    pub omega: bool,
}

impl ErrorReport {
    pub fn components(&self) -> [f64; 4] {
        [self.sup_v, self.sup_eta, self.int_v, self.int_eta]
    }

    /// Relative gap between `e_n` and the sum of its components.
    pub fn decomposition_residual(&self) -> f64 {
        let sum: f64 = self.components().iter().sum();
        (self.e_n - sum).abs() / sum.max(f64::MIN_POSITIVE)
    }
}

fn check_pairing(history: &SchemeHistory, reference: &ReferenceTrajectory) -> Result<usize> {
    if history.provenance != reference.provenance {
        return Err(SolverError::Coupling(format!(
            "scheme path {:?} and reference path {:?} differ",
            history.provenance, reference.provenance
        )));
    }
    let micro = history.intervals * history.micro_steps;
    let fine = reference.fine_steps();
    if fine % micro != 0 {
        return Err(SolverError::Coupling(format!(
            "scheme micro grid ({micro} steps) is not nested in the reference grid ({fine} steps)"
        )));
    }
    Ok(fine / micro)
}

/// `e_n(T)` against the reference on the same Wiener path. Integral terms are
/// left-endpoint sums on the scheme's micro grid, where the reference is read
/// at the coinciding fine node.
pub fn error_e_n(
    history: &SchemeHistory,
    reference: &ReferenceTrajectory,
    omega: bool,
) -> Result<ErrorReport> {
    let stride = check_pairing(history, reference)?;
    let n = history.intervals;
    let mesh_stride = stride * history.micro_steps;
    let at_mesh = |k: usize| &reference.fields[k * mesh_stride];

    let mut sup_v: f64 = 0.0;
    let mut sup_eta: f64 = 0.0;
    for k in 0..=n {
        sup_v = sup_v.max(history.v_plus(k).sub(at_mesh(k)).norm_h());
        sup_eta = sup_eta.max(history.eta_minus(k).sub(at_mesh(k)).norm_h());
    }

    let dt = history.micro_dt();
    let mut int_v = 0.0;
    let mut int_eta = 0.0;
    for (idx, (_, rec, j)) in history.nodes().enumerate() {
        let r = &reference.fields[idx * stride];
        int_v += dt * rec.v[j].sub(r).norm_v().powi(2);
        int_eta += dt * rec.eta[j].sub(r).norm_v().powi(2);
    }
    let (int_v, int_eta) = (int_v.sqrt(), int_eta.sqrt());

    Ok(ErrorReport {
        n,
        seed: history.provenance.seed,
        sup_v,
        sup_eta,
        int_v,
        int_eta,
        e_n: sup_v + sup_eta + int_v + int_eta,
        omega,
    })
}

/// Stopping-time monitors with the reference `||v||` read at the scheme's micro nodes.
pub fn coupled_monitors(history: &SchemeHistory, reference: &ReferenceTrajectory) -> Result<MonitorSeries> {
    let stride = check_pairing(history, reference)?;
    let count = history.intervals * history.micro_steps;
    let norms: Vec<f64> = (0..count).map(|i| reference.norms[i * stride].v).collect();
    MonitorSeries::new(history, Some(&norms))
}
