//! Micro-step integrator for `dv/dt + nu A v + B(v, v) = g`.
//!
//! One step of size `dt` is a symmetric composition: exact heat propagation
//! over `dt/2`, an implicit-midpoint solve of `dw/dt = g - B(w, w)` over `dt`,
//! and another exact half step. The midpoint rule conserves every quadratic
//! invariant of the advection flow, in particular `|w|^2` and `|dz w|^2`, so
//! with `g = 0` all dissipation comes from the linear half steps, whose
//! `int ||v||^2` and `int ||dz v||^2` are known in closed form.

use std::sync::Arc;

use ndarray::{Array2, Zip};

use crate::error::{Result, SolverError};
use crate::grid::{Field, Grid};
use crate::operators::nonlinear_b;

const MAX_ITERATIONS: usize = 60;
const ITERATION_TOL: f64 = 1e-15;

#[derive(Debug, Clone)]
pub(crate) struct MicroStepper {
    dt: f64,
    nonlinear: bool,
    half_decay: Array2<f64>,
    /// `mass * (1 - exp(-nu lambda dt)) / (2 nu)` per mode: `int_0^{dt/2} ||e^{-s nu A} u||^2 ds`
    /// is `sum half_dissipation * c^2`.
    half_dissipation: Array2<f64>,
    /// `(m pi / h)^2` per mode.
    shear_weight: Array2<f64>,
}

/// Result of one micro step.
pub(crate) struct StepOutput {
    pub field: Field,
    /// `int ||v||^2 ds` over the step (linear sub-flows only)
    pub dissipation_v: f64,
    /// `int ||dz v||^2 ds` over the step
    pub dissipation_r: f64,
}

impl MicroStepper {
    pub fn new(grid: &Arc<Grid>, viscosity: f64, dt: f64, nonlinear: bool) -> MicroStepper {
        let lam = grid.eigenvalues();
        let half_decay = lam.mapv(|l| (-0.5 * viscosity * dt * l).exp());
        let mut half_dissipation = Array2::zeros(lam.dim());
        Zip::from(&mut half_dissipation)
            .and(lam)
            .and(grid.mass())
            .for_each(|d, &l, &w| {
                *d = if viscosity * l == 0.0 {
                    0.5 * dt * l * w
                } else {
                    w * (-(-viscosity * dt * l).exp_m1()) / (2.0 * viscosity)
                };
            });
        let shear_weight = Array2::from_shape_fn(lam.dim(), |(_, m)| grid.kz(m).powi(2));
        MicroStepper {
            dt,
            nonlinear,
            half_decay,
            half_dissipation,
            shear_weight,
        }
    }

    fn half_heat(&self, v: &mut Field) -> (f64, f64) {
        let mut dv = 0.0;
        let mut dr = 0.0;
        Zip::from(v.coeffs_mut())
            .and(&self.half_decay)
            .and(&self.half_dissipation)
            .and(&self.shear_weight)
            .for_each(|c, &e, &d, &b2| {
                let s = d * *c * *c;
                dv += s;
                dr += b2 * s;
                *c *= e;
            });
        (dv, dr)
    }

    /// Implicit midpoint for `dw/dt = g - B(w, w)` by fixed-point iteration.
    fn advect(&self, u: &Field, forcing: Option<&Field>, t: f64) -> Result<Field> {
        let mut base = u.clone();
        if let Some(g) = forcing {
            base.axpy(self.dt, g);
        }
        if !self.nonlinear {
            return Ok(base);
        }
        let mut w = base.clone();
        w.axpy(-self.dt, &nonlinear_b(u, u)?);
        let scale = u.max_abs().max(base.max_abs());
        let mut last_change = f64::INFINITY;
        for _ in 0..MAX_ITERATIONS {
            let mut mid = u.add(&w);
            mid.coeffs_mut().mapv_inplace(|c| 0.5 * c);
            let mut next = base.clone();
            next.axpy(-self.dt, &nonlinear_b(&mid, &mid)?);
            let change = next.sub(&w).max_abs();
            w = next;
            if change <= ITERATION_TOL * scale || change == 0.0 {
                return Ok(w);
            }
            // stagnation at rounding level
            if change >= last_change && change <= 1e-13 * scale {
                return Ok(w);
            }
            if !change.is_finite() {
                break;
            }
            last_change = change;
        }
        Err(SolverError::NoConvergence {
            time: t,
            iterations: MAX_ITERATIONS,
        })
    }

    pub fn step(&self, v: &Field, forcing: Option<&Field>, t: f64) -> Result<StepOutput> {
        let mut u = v.clone();
        let (dv1, dr1) = self.half_heat(&mut u);
        let mut w = self.advect(&u, forcing, t)?;
        let (dv2, dr2) = self.half_heat(&mut w);
        Ok(StepOutput {
            field: w,
            dissipation_v: dv1 + dv2,
            dissipation_r: dr1 + dr2,
        })
    }
}

/// Blow-up guard relative to a run's initial H norm (never below 1).
pub(crate) fn guard_norm(initial: &Field) -> f64 {
    1e6 * initial.norm_h().max(1.0)
}

pub(crate) fn check_guard(v: &Field, guard: f64, interval: usize, time: f64) -> Result<()> {
    let norm = v.norm_h();
    if !norm.is_finite() || norm > guard {
        return Err(SolverError::BlowUp {
            interval,
            time,
            norm,
            guard,
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{dz_field, make_grid};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn linear_step_is_exact_heat_decay() {
        let g = make_grid(std::f64::consts::PI, std::f64::consts::PI, 4, 4).unwrap();
        let stepper = MicroStepper::new(&g, 1.0, 0.01, false);
        let e = Field::mode(&g, 1, 1, 1.0).unwrap();
        let out = stepper.step(&e, None, 0.0).unwrap();
        let expect = (-2.0 * 0.01f64).exp();
        assert!((out.field.coeffs()[[0, 1]] - expect).abs() <= 1e-15);
        // |v|^2 + 2 int ||v||^2 = |v0|^2 exactly for the heat flow
        let lhs = out.field.norm_h().powi(2) + 2.0 * out.dissipation_v;
        assert!((lhs - e.norm_h().powi(2)).abs() <= 1e-14);
    }

    #[test]
    fn nonlinear_step_conserves_energy_and_shear_energy() {
        let g = make_grid(2.0, 1.0, 12, 8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let v = Field::random_admissible(&g, &mut rng, 0.5);
        let stepper = MicroStepper::new(&g, 0.8, 1e-3, true);
        let out = stepper.step(&v, None, 0.0).unwrap();
        let e0 = v.norm_h().powi(2);
        let e1 = out.field.norm_h().powi(2) + 2.0 * 0.8 * out.dissipation_v;
        assert!((e1 - e0).abs() <= 1e-13 * e0);
        let r0 = dz_field(&v).norm_h().powi(2);
        let r1 = dz_field(&out.field).norm_h().powi(2) + 2.0 * 0.8 * out.dissipation_r;
        assert!((r1 - r0).abs() <= 1e-13 * r0);
        assert!(out.field.is_admissible());
    }

    #[test]
    fn step_is_second_order() {
        let g = make_grid(std::f64::consts::PI, std::f64::consts::PI, 8, 8).unwrap();
        let mut v = Field::mode(&g, 1, 1, 0.8).unwrap();
        v.coeffs_mut()[[1, 2]] = 0.4;
        v.coeffs_mut()[[0, 2]] = -0.3;
        let integrate = |steps: usize| {
            let dt = 0.2 / steps as f64;
            let s = MicroStepper::new(&g, 1.0, dt, true);
            let mut u = v.clone();
            for j in 0..steps {
                u = s.step(&u, None, j as f64 * dt).unwrap().field;
            }
            u
        };
        let fine = integrate(512);
        let e1 = integrate(16).sub(&fine).norm_h();
        let e2 = integrate(32).sub(&fine).norm_h();
        let order = (e1 / e2).log2();
        assert!((1.8..2.3).contains(&order), "observed order {order}");
    }
}
