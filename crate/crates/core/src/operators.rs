//! Spatial operators of the projected primitive equations.
//!
//! All linear operators are diagonal in the spectral basis. The advection
//! term is evaluated pseudo-spectrally on the padded quadrature grid; since
//! the quadrature is exact for triple products the result equals the Galerkin
//! projection, and `b(u, v, v) = 0` holds to rounding.

use ndarray::{Array2, Zip};

use crate::error::{Result, SolverError};
use crate::grid::{theta_from_coeffs, Field, ThetaField};

/// Splitting parameter `eps` in `[0, 1)`: the deterministic substep carries
/// viscosity `1 - eps`, the stochastic substep `eps`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EpsilonSplit(f64);

impl EpsilonSplit {
    pub fn new(eps: f64) -> Result<EpsilonSplit> {
        if !(0.0..1.0).contains(&eps) {
            return Err(SolverError::InvalidConfig(format!(
                "splitting parameter must lie in [0, 1), got {eps}"
            )));
        }
        Ok(EpsilonSplit(eps))
    }

    pub fn zero() -> EpsilonSplit {
        EpsilonSplit(0.0)
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// Viscosity of the deterministic substep.
    pub fn deterministic_viscosity(self) -> f64 {
        1.0 - self.0
    }
}

/// Orthogonal projection onto H: drop the vertically averaged part. This also
/// removes any horizontal pressure gradient, which is z-independent.
pub fn project_h(f: &Field) -> Field {
    let mut out = f.clone();
    out.coeffs_mut().column_mut(0).fill(0.0);
    out
}

pub fn apply_a(v: &Field) -> Result<Field> {
    v.require_admissible("apply_A")?;
    let mut out = v.clone();
    Zip::from(out.coeffs_mut())
        .and(v.grid().eigenvalues())
        .for_each(|c, &l| *c *= l);
    Ok(out)
}

/// `(I + c A)^{-1} f`.
pub fn solve_helmholtz(f: &Field, c: f64) -> Result<Field> {
    f.require_admissible("solve_helmholtz")?;
    if !(c >= 0.0) {
        return Err(SolverError::InvalidConfig(format!(
            "Helmholtz coefficient must be nonnegative, got {c}"
        )));
    }
    let mut out = f.clone();
    Zip::from(out.coeffs_mut())
        .and(f.grid().eigenvalues())
        .for_each(|v, &l| *v /= 1.0 + c * l);
    Ok(out)
}

/// `exp(-nu * t * A) v`, exact on every mode.
pub fn heat_propagate(v: &Field, nu_t: f64) -> Field {
    let mut out = v.clone();
    Zip::from(out.coeffs_mut())
        .and(v.grid().eigenvalues())
        .for_each(|c, &l| *c *= (-nu_t * l).exp());
    out
}

fn phi_coeffs(v: &Field) -> Array2<f64> {
    let g = v.grid();
    let (nx, nz) = (g.nx(), g.nz());
    let c = v.coeffs();
    let mut d = Array2::zeros((nx + 1, nz));
    for k in 1..=nx {
        let a = g.kx(k);
        for m in 1..=nz {
            d[[k, m - 1]] = -a / g.kz(m) * c[[k - 1, m]];
        }
    }
    d
}

/// Diagnosed vertical velocity `theta = -int_{-h}^z dx v dz'`.
pub fn phi(v: &Field) -> Result<ThetaField> {
    v.require_admissible("Phi")?;
    Ok(theta_from_coeffs(v.grid(), phi_coeffs(v)))
}

/// Coefficients of `dx v + dz Phi(v)` in the `cos x cos z` basis. Zero by
/// construction; exposed for checking.
pub fn divergence_coeffs(v: &Field) -> Result<Array2<f64>> {
    let theta = phi(v)?;
    let g = v.grid();
    let (nx, nz) = (g.nx(), g.nz());
    // dx: sin(ax) cos(bz) -> a cos(ax) cos(bz); dz: cos(ax) sin(bz) -> b cos(ax) cos(bz)
    let mut div = Array2::zeros((nx + 1, nz + 1));
    for k in 1..=nx {
        for m in 0..=nz {
            div[[k, m]] += g.kx(k) * v.coeffs()[[k - 1, m]];
        }
    }
    for k in 0..=nx {
        for m in 1..=nz {
            div[[k, m]] += g.kz(m) * theta.coeffs()[[k, m - 1]];
        }
    }
    Ok(div)
}

/// `B(u, v) = P_H(u dx v + Phi(u) dz v)`.
pub fn nonlinear_b(u: &Field, v: &Field) -> Result<Field> {
    u.grid().check_same(v.grid())?;
    u.require_admissible("B (first argument)")?;
    let g = u.grid();
    let (nx, nz) = (g.nx(), g.nz());

    let vc = v.coeffs();
    let dx_v = Array2::from_shape_fn((nx, nz + 1), |(k, m)| g.kx(k + 1) * vc[[k, m]]);
    let dz_v = Array2::from_shape_fn((nx, nz), |(k, m)| -g.kz(m + 1) * vc[[k, m + 1]]);

    let mut prod = g.synth_sin_cos(u.coeffs().view());
    prod *= &g.synth_cos_cos(dx_v.view());
    let mut vert = g.synth_cos_sin(phi_coeffs(u).view());
    vert *= &g.synth_sin_sin(dz_v.view());
    prod += &vert;

    let mut coeffs = g.analyze_sin_cos(prod.view());
    coeffs.column_mut(0).fill(0.0);
    Field::from_coeffs(g, coeffs)
}

/// `b(u, v, w) = (B(u, v), w)`.
pub fn trilinear_b(u: &Field, v: &Field, w: &Field) -> Result<f64> {
    w.require_admissible("b (third argument)")?;
    crate::grid::l2_inner(&nonlinear_b(u, v)?, w)
}

/// `F_eps(v) = (1 - eps) A v + B(v, v)`.
pub fn drift_f(v: &Field, eps: EpsilonSplit) -> Result<Field> {
    let mut out = apply_a(v)?.scaled(eps.deterministic_viscosity());
    out.axpy(1.0, &nonlinear_b(v, v)?);
    Ok(out)
}
