//! The splitting-up scheme on the uniform mesh `t_i = i T / n`.
//!
//! On each `[t_i, t_{i+1})` the deterministic primitive equations with
//! viscosity `1 - eps` are solved from `eta(t_i^-)`, giving `v^n`. The
//! stochastic parabolic problem with viscosity `eps` is then solved over the
//! *same* interval starting from `v^n(t_{i+1}^-)`, giving `eta^n`. Finally
//! `v^n(T^+) = eta^n(T^-)`.

use std::sync::Arc;

use ndarray::{ArrayView1, ArrayView2};

use crate::error::{Result, SolverError};
use crate::flow::{check_guard, guard_norm, MicroStepper};
use crate::grid::{dz_field, Field};
use crate::noise::{BrownianPath, NoiseModel, PathProvenance};
use crate::operators::{apply_a, EpsilonSplit};

#[derive(Debug, Clone)]
pub struct SplitConfig {
    pub horizon: f64,
    /// Number of splitting intervals `n`.
    pub intervals: usize,
    pub eps: EpsilonSplit,
    /// Micro steps per splitting interval, shared by both substeps.
    pub micro_steps: usize,
    /// `false` drops the advection term (linear test mode).
    pub nonlinear: bool,
    pub v0: Field,
    pub noise: Arc<NoiseModel>,
}

impl SplitConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(SolverError::InvalidConfig(format!(
                "horizon must be positive, got {}",
                self.horizon
            )));
        }
        if self.intervals == 0 || self.micro_steps == 0 {
            return Err(SolverError::InvalidConfig(
                "interval and micro-step counts must be at least 1".into(),
            ));
        }
        self.v0.grid().check_same(self.noise.grid())?;
        self.v0.require_admissible("initial data")?;
        let n = crate::grid::norms(&self.v0);
        if !(n.h.is_finite() && n.v.is_finite() && dz_field(&self.v0).norm_h().is_finite()) {
            return Err(SolverError::InvalidConfig(
                "initial data must have finite H, V and dz norms".into(),
            ));
        }
        Ok(())
    }

    /// Mesh width `T / n`.
    pub fn mesh(&self) -> f64 {
        self.horizon / self.intervals as f64
    }

    pub fn micro_dt(&self) -> f64 {
        self.mesh() / self.micro_steps as f64
    }

    pub fn mesh_time(&self, i: usize) -> f64 {
        self.horizon * i as f64 / self.intervals as f64
    }

    fn stepper(&self) -> MicroStepper {
        MicroStepper::new(
            self.v0.grid(),
            self.eps.deterministic_viscosity(),
            self.micro_dt(),
            self.nonlinear,
        )
    }
}

/// `(d_n(t), d*_n(t))`: the mesh points bracketing `t`; the last interval is closed.
pub fn mesh_maps(t: f64, horizon: f64, intervals: usize) -> Result<(f64, f64)> {
    if !(0.0..=horizon).contains(&t) {
        return Err(SolverError::TimeDomain { t, horizon });
    }
    let i = ((t / horizon * intervals as f64).floor() as usize).min(intervals - 1);
    let at = |i: usize| horizon * i as f64 / intervals as f64;
    Ok((at(i), at(i + 1)))
}

/// `|v|`, `||v||`, `|dz v|`, `||dz v||` at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Default, serde::Serialize)]
pub struct StateNorms {
    pub h: f64,
    pub v: f64,
    pub dz_h: f64,
    pub dz_v: f64,
}

impl StateNorms {
    pub fn of(f: &Field) -> StateNorms {
        let r = dz_field(f);
        StateNorms {
            h: f.norm_h(),
            v: f.norm_v(),
            dz_h: r.norm_h(),
            dz_v: r.norm_v(),
        }
    }
}

/// Everything recorded on one splitting interval `[t_i, t_{i+1})`.
#[derive(Debug, Clone)]
pub struct IntervalRecord {
    /// `v^n` at `t_i + j dt`, j = 0..=m; entry m is `v^n(t_{i+1}^-)`.
    pub v: Vec<Field>,
    /// `eta^n` at `t_i + j dt`; entry 0 is `v^n(t_{i+1}^-)`, entry m is `eta^n(t_{i+1}^-)`.
    pub eta: Vec<Field>,
    pub v_norms: Vec<StateNorms>,
    pub eta_norms: Vec<StateNorms>,
    /// Cumulative `int_{t_i}^{t} ||v^n||^2` of the exact linear sub-flows, per node.
    pub v_dissipation: Vec<f64>,
    /// Cumulative `int_{t_i}^{t} ||dz v^n||^2`, per node.
    pub r_dissipation: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct SchemeHistory {
    pub horizon: f64,
    pub intervals: usize,
    pub micro_steps: usize,
    pub eps: EpsilonSplit,
    pub records: Vec<IntervalRecord>,
    pub provenance: PathProvenance,
}

impl SchemeHistory {
    pub fn micro_dt(&self) -> f64 {
        self.horizon / (self.intervals * self.micro_steps) as f64
    }

    pub fn mesh_time(&self, k: usize) -> f64 {
        self.horizon * k as f64 / self.intervals as f64
    }

    pub fn v0(&self) -> &Field {
        &self.records[0].v[0]
    }

    /// `v^n(t_k^+)`, k = 0..=n, with `v^n(T^+) = eta^n(T^-)`.
    pub fn v_plus(&self, k: usize) -> &Field {
        if k < self.intervals {
            &self.records[k].v[0]
        } else {
            self.records[self.intervals - 1].eta.last().unwrap()
        }
    }

    /// `eta^n(t_k^-)`, k = 0..=n, with `eta^n(0^-) = v_0`.
    pub fn eta_minus(&self, k: usize) -> &Field {
        if k == 0 {
            self.v0()
        } else {
            self.records[k - 1].eta.last().unwrap()
        }
    }

    /// `v^n(t_{k+1}^-)`, k = 0..n.
    pub fn v_minus_next(&self, k: usize) -> &Field {
        self.records[k].v.last().unwrap()
    }

    /// `eta^n(t_k^+)`, k = 0..n.
    pub fn eta_plus(&self, k: usize) -> &Field {
        &self.records[k].eta[0]
    }

    /// Left-endpoint node values `(time, v^n, eta^n)` on the micro grid.
    pub fn nodes(&self) -> impl Iterator<Item = (f64, &IntervalRecord, usize)> + '_ {
        let dt = self.micro_dt();
        let m = self.micro_steps;
        self.records.iter().enumerate().flat_map(move |(i, rec)| {
            (0..m).map(move |j| ((i * m + j) as f64 * dt, rec, j))
        })
    }

    /// Worst relative violation of the per-interval energy inequalities
    /// `|v(t)|^2 + 2(1-eps) int_{t_i}^t ||v||^2 <= |eta(t_i^-)|^2` and its
    /// `dz` analogue, over all micro nodes: `(velocity, shear)`.
    pub fn energy_residuals(&self) -> (f64, f64) {
        let nu = self.eps.deterministic_viscosity();
        let mut worst = (f64::NEG_INFINITY, f64::NEG_INFINITY);
        for rec in &self.records {
            let e0 = rec.v_norms[0].h.powi(2);
            let r0 = rec.v_norms[0].dz_h.powi(2);
            for j in 0..rec.v.len() {
                let ev = rec.v_norms[j].h.powi(2) + 2.0 * nu * rec.v_dissipation[j] - e0;
                let er = rec.v_norms[j].dz_h.powi(2) + 2.0 * nu * rec.r_dissipation[j] - r0;
                worst.0 = worst.0.max(ev / e0.max(1e-300));
                worst.1 = worst.1.max(er / r0.max(1e-300));
            }
        }
        worst
    }

    /// True if every recorded one-sided hand-off holds bitwise.
    pub fn handoffs_exact(&self) -> bool {
        (0..=self.intervals).all(|k| {
            let ok_v = self.v_plus(k) == self.eta_minus(k);
            let ok_eta = k == self.intervals || self.eta_plus(k) == self.v_minus_next(k);
            ok_v && ok_eta
        })
    }
}

fn run_deterministic(
    stepper: &MicroStepper,
    v_init: &Field,
    t_start: f64,
    steps: usize,
    dt: f64,
    guard: f64,
    interval: usize,
) -> Result<(Vec<Field>, Vec<f64>, Vec<f64>)> {
    let mut fields = Vec::with_capacity(steps + 1);
    let mut diss_v = Vec::with_capacity(steps + 1);
    let mut diss_r = Vec::with_capacity(steps + 1);
    fields.push(v_init.clone());
    diss_v.push(0.0);
    diss_r.push(0.0);
    for j in 0..steps {
        let t = t_start + j as f64 * dt;
        let out = stepper.step(&fields[j], None, t)?;
        check_guard(&out.field, guard, interval, t + dt)?;
        diss_v.push(diss_v[j] + out.dissipation_v);
        diss_r.push(diss_r[j] + out.dissipation_r);
        fields.push(out.field);
    }
    Ok((fields, diss_v, diss_r))
}

/// Flow of `dv/dt + F_eps(v) = 0` from `t_start` to `t_end` using
/// `cfg.micro_steps` micro steps; returns `v(t_end^-)`.
pub fn deterministic_step(v_init: &Field, t_start: f64, t_end: f64, cfg: &SplitConfig) -> Result<Field> {
    if !(t_end > t_start) {
        return Err(SolverError::InvalidConfig(format!(
            "empty interval [{t_start}, {t_end})"
        )));
    }
    v_init.require_admissible("deterministic substep")?;
    let dt = (t_end - t_start) / cfg.micro_steps as f64;
    let stepper = MicroStepper::new(
        v_init.grid(),
        cfg.eps.deterministic_viscosity(),
        dt,
        cfg.nonlinear,
    );
    let interval = (t_start / cfg.mesh()).floor() as usize;
    let (mut fields, _, _) = run_deterministic(
        &stepper,
        v_init,
        t_start,
        cfg.micro_steps,
        dt,
        guard_norm(v_init),
        interval,
    )?;
    Ok(fields.pop().unwrap())
}

/// One semi-implicit Euler-Maruyama micro step
/// `eta <- (I + eps dt A)^{-1} (eta + psi(t, eta) dW)`.
fn stochastic_micro(
    noise: &NoiseModel,
    eps: f64,
    dt: f64,
    t: f64,
    eta: &Field,
    dw: ArrayView1<'_, f64>,
) -> Result<Field> {
    let _ = t;
    let mut next = eta.clone();
    noise.add_increment(eta, dw, &mut next);
    if eps > 0.0 {
        next = crate::operators::solve_helmholtz(&next, eps * dt)?;
    }
    Ok(next)
}

fn run_stochastic(
    cfg: &SplitConfig,
    eta_init: &Field,
    t_start: f64,
    dt: f64,
    increments: ArrayView2<'_, f64>,
) -> Result<Vec<Field>> {
    let mut fields = Vec::with_capacity(increments.ncols() + 1);
    fields.push(eta_init.clone());
    for j in 0..increments.ncols() {
        let t = t_start + j as f64 * dt;
        let next = stochastic_micro(
            &cfg.noise,
            cfg.eps.value(),
            dt,
            t,
            &fields[j],
            increments.column(j),
        )?;
        fields.push(next);
    }
    Ok(fields)
}

/// `eta(t_end^-)` from `eta_init` at `t_start`, one micro step per column of
/// `increments` (shape `(m_W, steps)`).
pub fn stochastic_step(
    eta_init: &Field,
    t_start: f64,
    t_end: f64,
    cfg: &SplitConfig,
    increments: ArrayView2<'_, f64>,
) -> Result<Field> {
    if increments.nrows() != cfg.noise.m_w() || increments.ncols() == 0 {
        return Err(SolverError::Shape(format!(
            "increments must be {} x steps, got {:?}",
            cfg.noise.m_w(),
            increments.dim()
        )));
    }
    if !(t_end > t_start) {
        return Err(SolverError::InvalidConfig(format!(
            "empty interval [{t_start}, {t_end})"
        )));
    }
    eta_init.require_admissible("stochastic substep")?;
    let dt = (t_end - t_start) / increments.ncols() as f64;
    let mut fields = run_stochastic(cfg, eta_init, t_start, dt, increments)?;
    Ok(fields.pop().unwrap())
}

pub fn run_splitting(cfg: &SplitConfig, path: &BrownianPath) -> Result<SchemeHistory> {
    cfg.validate()?;
    if path.modes() != cfg.noise.m_w() {
        return Err(SolverError::Shape(format!(
            "path has {} modes, noise model {}",
            path.modes(),
            cfg.noise.m_w()
        )));
    }
    if (path.horizon() - cfg.horizon).abs() > 1e-12 * cfg.horizon {
        return Err(SolverError::Coupling(format!(
            "path horizon {} differs from scheme horizon {}",
            path.horizon(),
            cfg.horizon
        )));
    }
    let n = cfg.intervals;
    let m = cfg.micro_steps;
    let micro_path = path.to_steps(n * m)?;
    let dt = cfg.micro_dt();
    let stepper = cfg.stepper();
    let guard = guard_norm(&cfg.v0);

    let mut records = Vec::with_capacity(n);
    let mut eta_prev = cfg.v0.clone();
    for i in 0..n {
        let t_i = cfg.mesh_time(i);
        let (v, v_dissipation, r_dissipation) =
            run_deterministic(&stepper, &eta_prev, t_i, m, dt, guard, i)?;
        let incs = micro_path
            .increments()
            .slice(ndarray::s![.., i * m..(i + 1) * m]);
        let eta = run_stochastic(cfg, v.last().unwrap(), t_i, dt, incs)?;
        let eta_end = eta.last().unwrap();
        check_guard(eta_end, guard, i, cfg.mesh_time(i + 1))?;
        eta_prev = eta_end.clone();
        records.push(IntervalRecord {
            v_norms: v.iter().map(StateNorms::of).collect(),
            eta_norms: eta.iter().map(StateNorms::of).collect(),
            v,
            eta,
            v_dissipation,
            r_dissipation,
        });
    }

    Ok(SchemeHistory {
        horizon: cfg.horizon,
        intervals: n,
        micro_steps: m,
        eps: cfg.eps,
        records,
        provenance: path.provenance(),
    })
}

/// `Z^n` sampled on the micro grid (plus `T`).
#[derive(Debug, Clone)]
pub struct ZTrajectory {
    pub times: Vec<f64>,
    pub values: Vec<Field>,
}

impl ZTrajectory {
    /// `Z^n(t_k)` for k = 0..=n.
    pub fn at_mesh(&self, k: usize, micro_steps: usize) -> &Field {
        &self.values[k * micro_steps]
    }
}

/// `Z^n(t) = v_0 - int_0^t F_eps(v^n) - eps int_0^{d_n(t)} A eta^n + int_0^t psi(eta^n) dW`.
///
/// Each integral is discretized the way the scheme itself advanced the
/// corresponding term: the drift integral over a micro step is the increment
/// of the discrete deterministic flow, the `eps A` term is taken at the right
/// endpoint (implicit), and the stochastic integral at the left endpoint.
pub fn compute_z(history: &SchemeHistory, path: &BrownianPath, noise: &NoiseModel) -> Result<ZTrajectory> {
    if path.provenance() != history.provenance {
        return Err(SolverError::Coupling(
            "Z must be built from the path that drove the scheme".into(),
        ));
    }
    let n = history.intervals;
    let m = history.micro_steps;
    let dt = history.micro_dt();
    let eps = history.eps.value();
    let micro_path = path.to_steps(n * m)?;

    let mut times = Vec::with_capacity(n * m + 1);
    let mut values = Vec::with_capacity(n * m + 1);
    // Z(t_i) without the eps A contribution of interval i-1, plus that contribution separately.
    let mut base = history.v0().clone();
    let mut implicit_total = Field::zeros(history.v0().grid());
    for (i, rec) in history.records.iter().enumerate() {
        let mut ito = Field::zeros(history.v0().grid());
        let mut eps_a = Field::zeros(history.v0().grid());
        for j in 0..=m {
            if j < m || i == n - 1 {
                let mut z = base.clone();
                z.axpy(1.0, &rec.v[j]);
                z.axpy(-1.0, &rec.v[0]);
                z.axpy(1.0, &ito);
                // d_n(t) = t_i on [t_i, t_{i+1}); on the closed last interval also at T
                z.axpy(-1.0, &implicit_total);
                times.push(history.mesh_time(i) + j as f64 * dt);
                values.push(z);
            }
            if j < m {
                noise.add_increment(&rec.eta[j], micro_path.step(i * m + j), &mut ito);
                if eps > 0.0 {
                    eps_a.axpy(eps * dt, &apply_a(&rec.eta[j + 1])?);
                }
            }
        }
        base.axpy(1.0, &rec.v[m]);
        base.axpy(-1.0, &rec.v[0]);
        base.axpy(1.0, &ito);
        implicit_total.axpy(1.0, &eps_a);
    }
    Ok(ZTrajectory { times, values })
}

/// Cumulative monitor integrals for the stopping times.
#[derive(Debug, Clone, serde::Serialize)]
pub struct MonitorSeries {
    pub intervals: usize,
    pub micro_steps: usize,
    pub dt: f64,
    /// Per interval, cumulative `int (|v|^2 ||v||^2 + |r| ||r||)` at each node (m + 1 entries).
    pub tau_cumulative: Vec<Vec<f64>>,
    /// Cumulative `int_0^t (||v_ref|| + ||v^n||^2 + |r^n|^4)` at every node (n m + 1 entries).
    pub sigma_cumulative: Vec<f64>,
    /// The reference `||v||` term was unavailable and omitted.
    pub reference_missing: bool,
}

/// Outcome of the stopping-time monitors.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct StoppingReport {
    pub tau_hit: Option<f64>,
    pub sigma_hit: Option<f64>,
    pub omega: bool,
    pub reference_missing: bool,
}

impl MonitorSeries {
    /// `reference_v_norm` holds `||v(s)||` of the reference at the scheme's
    /// left-endpoint micro nodes (n m entries).
    pub fn new(history: &SchemeHistory, reference_v_norm: Option<&[f64]>) -> Result<MonitorSeries> {
        let n = history.intervals;
        let m = history.micro_steps;
        if let Some(r) = reference_v_norm {
            if r.len() != n * m {
                return Err(SolverError::Shape(format!(
                    "reference norms have {} entries, expected {}",
                    r.len(),
                    n * m
                )));
            }
        }
        let dt = history.micro_dt();
        let mut tau_cumulative = Vec::with_capacity(n);
        let mut sigma_cumulative = Vec::with_capacity(n * m + 1);
        sigma_cumulative.push(0.0);
        for (i, rec) in history.records.iter().enumerate() {
            let mut cum = Vec::with_capacity(m + 1);
            cum.push(0.0);
            for j in 0..m {
                let s = &rec.v_norms[j];
                let tau_rate = s.h * s.h * s.v * s.v + s.dz_h * s.dz_v;
                cum.push(cum[j] + dt * tau_rate);
                let reference = reference_v_norm.map_or(0.0, |r| r[i * m + j]);
                let sigma_rate = reference + s.v * s.v + s.dz_h.powi(4);
                let last = *sigma_cumulative.last().unwrap();
                sigma_cumulative.push(last + dt * sigma_rate);
            }
            tau_cumulative.push(cum);
        }
        Ok(MonitorSeries {
            intervals: n,
            micro_steps: m,
            dt,
            tau_cumulative,
            sigma_cumulative,
            reference_missing: reference_v_norm.is_none(),
        })
    }

    /// `n * max_i int_{t_i}^{t_{i+1}}`: the smallest `N` with no `tau` hit.
    pub fn tau_level(&self) -> f64 {
        let worst = self
            .tau_cumulative
            .iter()
            .map(|c| *c.last().unwrap())
            .fold(0.0, f64::max);
        worst * self.intervals as f64
    }

    /// Total `int_0^T` of the `sigma` integrand: the smallest `M` with no hit.
    pub fn sigma_level(&self) -> f64 {
        *self.sigma_cumulative.last().unwrap()
    }

    pub fn stopping(&self, big_n: f64, big_m: f64) -> StoppingReport {
        let m = self.micro_steps;
        let per_interval = big_n / self.intervals as f64;
        let tau_hit = self.tau_cumulative.iter().enumerate().find_map(|(i, cum)| {
            cum.iter()
                .position(|&c| c > per_interval)
                .map(|j| (i * m + j) as f64 * self.dt)
        });
        let sigma_hit = self
            .sigma_cumulative
            .iter()
            .position(|&c| c > big_m)
            .map(|j| j as f64 * self.dt);
        StoppingReport {
            tau_hit,
            sigma_hit,
            omega: tau_hit.is_none() && sigma_hit.is_none(),
            reference_missing: self.reference_missing,
        }
    }
}

pub fn monitor_stopping(
    history: &SchemeHistory,
    big_n: f64,
    big_m: f64,
    reference_v_norm: Option<&[f64]>,
) -> Result<StoppingReport> {
    Ok(MonitorSeries::new(history, reference_v_norm)?.stopping(big_n, big_m))
}
