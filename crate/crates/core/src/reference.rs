//! Fine-resolution solver for the unsplit equation `dv + (Av + B(v, v)) dt = psi(v) dW`.
//!
//! Each reference step `[t_j, t_{j+1}]` freezes the Ito forcing
//! `g = psi(v(t_j)) dW_j / dt_ref` and integrates `dv/dt + Av + B(v, v) = g`
//! with the micro-step integrator. Without advection this is an exact
//! exponential integrator per mode.

use std::sync::Arc;

use crate::error::{Result, SolverError};
use crate::flow::{check_guard, guard_norm, MicroStepper};
use crate::grid::Field;
use crate::noise::{BrownianPath, NoiseModel, PathProvenance};
use crate::splitting::StateNorms;

#[derive(Debug, Clone)]
pub struct ReferenceConfig {
    pub horizon: f64,
    /// Number of reference steps.
    pub n_ref: usize,
    /// Micro steps per reference step.
    pub micro_steps: usize,
    pub nonlinear: bool,
    pub v0: Field,
    pub noise: Arc<NoiseModel>,
}

impl ReferenceConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(SolverError::InvalidConfig(format!(
                "horizon must be positive, got {}",
                self.horizon
            )));
        }
        if self.n_ref == 0 || self.micro_steps == 0 {
            return Err(SolverError::InvalidConfig(
                "reference step counts must be at least 1".into(),
            ));
        }
        self.v0.grid().check_same(self.noise.grid())?;
        self.v0.require_admissible("reference initial data")
    }

    /// Number of recorded nodes minus one.
    pub fn fine_steps(&self) -> usize {
        self.n_ref * self.micro_steps
    }
}

/// The reference solution at every micro node `t = T j / (n_ref m)`.
#[derive(Debug, Clone)]
pub struct ReferenceTrajectory {
    pub horizon: f64,
    pub n_ref: usize,
    pub micro_steps: usize,
    pub fields: Vec<Field>,
    pub norms: Vec<StateNorms>,
    pub provenance: PathProvenance,
}

impl ReferenceTrajectory {
    pub fn fine_steps(&self) -> usize {
        self.fields.len() - 1
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.fine_steps() as f64
    }

    /// Value at node `j * fine_steps / steps` of a nested partition with `steps` steps.
    pub fn at(&self, j: usize, steps: usize) -> Result<&Field> {
        let fine = self.fine_steps();
        if steps == 0 || fine % steps != 0 {
            return Err(SolverError::Coupling(format!(
                "{steps} steps are not nested in the reference grid of {fine}"
            )));
        }
        self.fields
            .get(j * (fine / steps))
            .ok_or_else(|| SolverError::Shape(format!("node {j} beyond {steps} steps")))
    }

    /// `v(T)`.
    pub fn terminal(&self) -> &Field {
        self.fields.last().unwrap()
    }

    /// Largest `|v(t)|` over all nodes.
    pub fn sup_h(&self) -> f64 {
        self.norms.iter().map(|n| n.h).fold(0.0, f64::max)
    }
}

pub fn run_reference(cfg: &ReferenceConfig, path: &BrownianPath) -> Result<ReferenceTrajectory> {
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
            "path horizon {} differs from reference horizon {}",
            path.horizon(),
            cfg.horizon
        )));
    }
    let coarse = path.to_steps(cfg.n_ref)?;
    let dt_ref = cfg.horizon / cfg.n_ref as f64;
    let dt = dt_ref / cfg.micro_steps as f64;
    let stepper = MicroStepper::new(cfg.v0.grid(), 1.0, dt, cfg.nonlinear);
    let guard = guard_norm(&cfg.v0);
    let quiet = cfg.noise.is_zero();

    let mut fields = Vec::with_capacity(cfg.fine_steps() + 1);
    fields.push(cfg.v0.clone());
    for j in 0..cfg.n_ref {
        let start = fields.last().unwrap().clone();
        let forcing = if quiet {
            None
        } else {
            let mut g = Field::zeros(start.grid());
            cfg.noise.add_increment(&start, coarse.step(j), &mut g);
            Some(g.scaled(1.0 / dt_ref))
        };
        let mut v = start;
        for s in 0..cfg.micro_steps {
            let t = j as f64 * dt_ref + s as f64 * dt;
            v = stepper.step(&v, forcing.as_ref(), t)?.field;
            fields.push(v.clone());
        }
        check_guard(&v, guard, j, (j + 1) as f64 * dt_ref)?;
    }
    let norms = fields.iter().map(StateNorms::of).collect();
    Ok(ReferenceTrajectory {
        horizon: cfg.horizon,
        n_ref: cfg.n_ref,
        micro_steps: cfg.micro_steps,
        fields,
        norms,
        provenance: path.provenance(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_grid;
    use crate::noise::{make_noise, power_law_sigma, sample_path, NoiseKind};
    use std::f64::consts::PI;

    fn cfg(kind: NoiseKind, amp: f64, v0: Field, nonlinear: bool, n_ref: usize) -> ReferenceConfig {
        let g = v0.grid().clone();
        let noise = make_noise(kind, 4, &power_law_sigma(amp, 2.0, 4), &g).unwrap();
        ReferenceConfig {
            horizon: 0.5,
            n_ref,
            micro_steps: 2,
            nonlinear,
            v0,
            noise: Arc::new(noise),
        }
    }

    #[test]
    fn noise_free_linear_mode_decays_exactly() {
        let g = make_grid(PI, PI, 6, 4).unwrap();
        let c = cfg(NoiseKind::Additive, 0.0, Field::mode(&g, 1, 1, 1.0).unwrap(), false, 64);
        let path = sample_path(&c.noise, 1, 64, 0.5).unwrap();
        let r = run_reference(&c, &path).unwrap();
        let got = r.terminal().coeffs()[[0, 1]];
        assert!((got - (-2.0 * 0.5f64).exp()).abs() <= 1e-10);
    }

    #[test]
    fn additive_from_rest_is_ou_recursion() {
        let g = make_grid(PI, PI, 6, 4).unwrap();
        let c = cfg(NoiseKind::Additive, 0.3, Field::zeros(&g), false, 32);
        let path = sample_path(&c.noise, 2, 128, 0.5).unwrap();
        let r = run_reference(&c, &path).unwrap();
        let coarse = path.to_steps(32).unwrap();
        let d = 0.5 / 32.0;
        for (i, &(k, m)) in c.noise.modes().iter().enumerate() {
            let lam = g.eigenvalues()[[k - 1, m]];
            let unit = c.noise.shape(i).coeffs()[[k - 1, m]];
            // two micro steps of heat/2, kick dt/2 * g, heat/2
            let gain = 0.5 * ((-0.75 * lam * d).exp() + (-0.25 * lam * d).exp());
            let mut x = 0.0;
            for j in 0..32 {
                x = (-lam * d).exp() * x + gain * c.noise.sigma()[i] * coarse.increments()[[i, j]];
            }
            let got = r.terminal().coeffs()[[k - 1, m]] / unit;
            assert!((got - x).abs() <= 1e-14 * (1.0 + x.abs()), "mode {i}: {got} vs {x}");
        }
    }

    #[test]
    fn nested_access_and_coupling() {
        let g = make_grid(PI, PI, 6, 4).unwrap();
        let c = cfg(NoiseKind::DiagonalMultiplicative, 0.3, Field::mode(&g, 1, 1, 0.5).unwrap(), true, 16);
        let path = sample_path(&c.noise, 3, 64, 0.5).unwrap();
        let r = run_reference(&c, &path).unwrap();
        assert_eq!(r.fine_steps(), 32);
        assert_eq!(r.at(0, 4).unwrap(), &c.v0);
        assert_eq!(r.at(4, 4).unwrap(), r.terminal());
        assert!(matches!(r.at(1, 3), Err(SolverError::Coupling(_))));
        assert!(r.fields.iter().all(Field::is_admissible));
        assert_eq!(r.provenance, path.provenance());

        let short = sample_path(&c.noise, 3, 64, 0.25).unwrap();
        assert!(matches!(run_reference(&c, &short), Err(SolverError::Coupling(_))));
    }

    #[test]
    fn refinement_changes_little() {
        let g = make_grid(PI, PI, 8, 6).unwrap();
        let mut v0 = Field::mode(&g, 1, 1, 0.5).unwrap();
        v0.coeffs_mut()[[1, 2]] = 0.2;
        let c1 = cfg(NoiseKind::DiagonalMultiplicative, 0.3, v0.clone(), true, 64);
        let mut c2 = c1.clone();
        c2.n_ref = 128;
        let path = sample_path(&c1.noise, 4, 128, 0.5).unwrap();
        let a = run_reference(&c1, &path).unwrap();
        let b = run_reference(&c2, &path).unwrap();
        let diff = a.terminal().sub(b.terminal()).norm_h();
        assert!(diff < 1e-3 * v0.norm_h(), "{diff}");
    }
}
