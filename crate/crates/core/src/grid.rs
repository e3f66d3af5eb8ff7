//! Spectral discretization of the box `[0, L] x [-h, 0]`.
//!
//! Horizontal velocity lives in the `sin(k pi x / L) cos(m pi z / h)` basis,
//! which enforces `v = 0` on the lateral walls and `dz v = 0` on the top and
//! bottom. Vertical velocity uses `cos(k pi x / L) sin(m pi z / h)` so that
//! `theta = 0` at `z = 0` and `z = -h`. Vertical shear `dz v` lands in the
//! `sin x sin z` basis.
//!
//! Nonlinear products are evaluated on a midpoint quadrature grid with
//! `floor(3N/2) + 1` nodes per direction. Every integrand that appears in the
//! trilinear form is an even trigonometric polynomial of degree at most `3N`,
//! which that rule integrates exactly.

use std::f64::consts::PI;
use std::sync::Arc;

use ndarray::{Array2, ArrayView2, Zip};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Result, SolverError};

/// Quadrature node count that integrates degree-`3 n` cosine polynomials exactly.
pub fn padded_nodes(modes: usize) -> usize {
    3 * modes / 2 + 1
}

#[derive(Debug)]
pub struct Grid {
    length: f64,
    depth: f64,
    nx: usize,
    nz: usize,
    qx: usize,
    qz: usize,
    xs: Vec<f64>,
    zs: Vec<f64>,
    /// `sin(k pi x_q / L)`, shape `(qx, nx)`, k = 1..=nx.
    sin_x: Array2<f64>,
    /// `cos(k pi x_q / L)`, shape `(qx, nx + 1)`, k = 0..=nx.
    cos_x: Array2<f64>,
    /// `cos(m pi z_p / h)`, shape `(qz, nz + 1)`, m = 0..=nz.
    cos_z: Array2<f64>,
    /// `sin(m pi z_p / h)`, shape `(qz, nz)`, m = 1..=nz.
    sin_z: Array2<f64>,
    /// Eigenvalues of the Stokes-type operator on the velocity basis, `(nx, nz + 1)`.
    eigen: Array2<f64>,
    /// L2 mass of each velocity basis function, `(nx, nz + 1)`.
    mass: Array2<f64>,
}

impl Grid {
    pub fn new(length: f64, depth: f64, nx: usize, nz: usize) -> Result<Arc<Grid>> {
        if !(length.is_finite() && length > 0.0) || !(depth.is_finite() && depth > 0.0) {
            return Err(SolverError::InvalidConfig(format!(
                "domain dimensions must be positive, got L = {length}, h = {depth}"
            )));
        }
        if nx == 0 || nz == 0 {
            return Err(SolverError::InvalidConfig(format!(
                "mode counts must be at least 1, got Nx = {nx}, Nz = {nz}"
            )));
        }
        let qx = padded_nodes(nx);
        let qz = padded_nodes(nz);
        let xs: Vec<f64> = (0..qx)
            .map(|q| (q as f64 + 0.5) * length / qx as f64)
            .collect();
        let zs: Vec<f64> = (0..qz)
            .map(|p| -depth + (p as f64 + 0.5) * depth / qz as f64)
            .collect();

        let sin_x = Array2::from_shape_fn((qx, nx), |(q, k)| {
            ((k + 1) as f64 * PI * xs[q] / length).sin()
        });
        let cos_x =
            Array2::from_shape_fn((qx, nx + 1), |(q, k)| (k as f64 * PI * xs[q] / length).cos());
        let cos_z =
            Array2::from_shape_fn((qz, nz + 1), |(p, m)| (m as f64 * PI * zs[p] / depth).cos());
        let sin_z = Array2::from_shape_fn((qz, nz), |(p, m)| {
            ((m + 1) as f64 * PI * zs[p] / depth).sin()
        });

        let eigen = Array2::from_shape_fn((nx, nz + 1), |(k, m)| {
            let a = (k + 1) as f64 * PI / length;
            let b = m as f64 * PI / depth;
            a * a + b * b
        });
        let mass = Array2::from_shape_fn((nx, nz + 1), |(_, m)| {
            0.5 * length * if m == 0 { depth } else { 0.5 * depth }
        });

        Ok(Arc::new(Grid {
            length,
            depth,
            nx,
            nz,
            qx,
            qz,
            xs,
            zs,
            sin_x,
            cos_x,
            cos_z,
            sin_z,
            eigen,
            mass,
        }))
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn depth(&self) -> f64 {
        self.depth
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn nz(&self) -> usize {
        self.nz
    }

    /// Quadrature node counts `(qx, qz)`.
    pub fn nodes(&self) -> (usize, usize) {
        (self.qx, self.qz)
    }

    pub fn node_x(&self) -> &[f64] {
        &self.xs
    }

    pub fn node_z(&self) -> &[f64] {
        &self.zs
    }

    /// Area element of the quadrature rule.
    pub fn cell_area(&self) -> f64 {
        (self.length / self.qx as f64) * (self.depth / self.qz as f64)
    }

    /// Horizontal wavenumber `k pi / L`.
    pub fn kx(&self, k: usize) -> f64 {
        k as f64 * PI / self.length
    }

    /// Vertical wavenumber `m pi / h`.
    pub fn kz(&self, m: usize) -> f64 {
        m as f64 * PI / self.depth
    }

    /// `lambda_{k,m} = (k pi / L)^2 + (m pi / h)^2` indexed like velocity coefficients.
    pub fn eigenvalues(&self) -> ArrayView2<'_, f64> {
        self.eigen.view()
    }

    /// `int_M phi_{k,m}^2` for the velocity basis.
    pub fn mass(&self) -> ArrayView2<'_, f64> {
        self.mass.view()
    }

    /// Smallest eigenvalue on H-admissible fields (mode (1,1)).
    pub fn min_admissible_eigenvalue(&self) -> f64 {
        self.eigen[[0, 1]]
    }

    pub fn same_as(&self, other: &Grid) -> bool {
        std::ptr::eq(self, other)
            || (self.length == other.length
                && self.depth == other.depth
                && self.nx == other.nx
                && self.nz == other.nz)
    }

    pub(crate) fn check_same(&self, other: &Grid) -> Result<()> {
        if self.same_as(other) {
            Ok(())
        } else {
            Err(SolverError::Shape(format!(
                "grid mismatch: {}x{} on [{}, {}] vs {}x{} on [{}, {}]",
                self.nx, self.nz, self.length, self.depth, other.nx, other.nz, other.length,
                other.depth
            )))
        }
    }

    /// Nodal values of a `sin x cos z` expansion, shape `(qx, qz)`.
    pub(crate) fn synth_sin_cos(&self, c: ArrayView2<'_, f64>) -> Array2<f64> {
        self.sin_x.dot(&c).dot(&self.cos_z.t())
    }

    /// Nodal values of a `cos x cos z` expansion with k = 1..=nx, shape `(qx, qz)`.
    pub(crate) fn synth_cos_cos(&self, c: ArrayView2<'_, f64>) -> Array2<f64> {
        self.cos_x
            .slice(ndarray::s![.., 1..])
            .dot(&c)
            .dot(&self.cos_z.t())
    }

    /// Nodal values of a `cos x sin z` expansion with k = 0..=nx.
    pub(crate) fn synth_cos_sin(&self, c: ArrayView2<'_, f64>) -> Array2<f64> {
        self.cos_x.dot(&c).dot(&self.sin_z.t())
    }

    /// Nodal values of a `sin x sin z` expansion.
    pub(crate) fn synth_sin_sin(&self, c: ArrayView2<'_, f64>) -> Array2<f64> {
        self.sin_x.dot(&c).dot(&self.sin_z.t())
    }

    /// Galerkin coefficients of nodal data against the `sin x cos z` basis.
    /// Exact whenever `g * phi_{k,m}` is within the quadrature degree.
    pub(crate) fn analyze_sin_cos(&self, g: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut c = self.sin_x.t().dot(&g).dot(&self.cos_z);
        let area = self.cell_area();
        Zip::from(&mut c)
            .and(&self.mass)
            .for_each(|c, &w| *c *= area / w);
        c
    }
}

/// Horizontal velocity `v(x, z) = sum c[k][m] sin(k pi x / L) cos(m pi z / h)`,
/// k = 1..=Nx, m = 0..=Nz. Row `k - 1`, column `m`.
#[derive(Debug, Clone)]
pub struct Field {
    grid: Arc<Grid>,
    coeffs: Array2<f64>,
}

impl PartialEq for Field {
    fn eq(&self, other: &Self) -> bool {
        self.grid.same_as(&other.grid) && self.coeffs == other.coeffs
    }
}

impl Field {
    pub fn zeros(grid: &Arc<Grid>) -> Field {
        Field {
            grid: Arc::clone(grid),
            coeffs: Array2::zeros((grid.nx, grid.nz + 1)),
        }
    }

    pub fn from_coeffs(grid: &Arc<Grid>, coeffs: Array2<f64>) -> Result<Field> {
        if coeffs.dim() != (grid.nx, grid.nz + 1) {
            return Err(SolverError::Shape(format!(
                "velocity coefficients must be {}x{}, got {:?}",
                grid.nx,
                grid.nz + 1,
                coeffs.dim()
            )));
        }
        Ok(Field {
            grid: Arc::clone(grid),
            coeffs,
        })
    }

    /// Single basis function `amplitude * sin(k pi x / L) cos(m pi z / h)`.
    pub fn mode(grid: &Arc<Grid>, k: usize, m: usize, amplitude: f64) -> Result<Field> {
        if k == 0 || k > grid.nx || m > grid.nz {
            return Err(SolverError::Shape(format!(
                "mode ({k}, {m}) not representable on a {}x{} grid",
                grid.nx, grid.nz
            )));
        }
        let mut f = Field::zeros(grid);
        f.coeffs[[k - 1, m]] = amplitude;
        Ok(f)
    }

    /// Basis mode scaled to unit L2 norm.
    pub fn unit_mode(grid: &Arc<Grid>, k: usize, m: usize) -> Result<Field> {
        let mut f = Field::mode(grid, k, m, 1.0)?;
        let w = f.grid.mass[[k - 1, m]];
        f.coeffs[[k - 1, m]] = 1.0 / w.sqrt();
        Ok(f)
    }

    /// Random H-admissible field with coefficients `N(0,1) / (1 + lambda)^decay`.
    pub fn random_admissible<R: Rng + ?Sized>(grid: &Arc<Grid>, rng: &mut R, decay: f64) -> Field {
        let mut f = Field::zeros(grid);
        for ((k, m), c) in f.coeffs.indexed_iter_mut() {
            if m == 0 {
                continue;
            }
            let z: f64 = rng.sample(StandardNormal);
            *c = z / (1.0 + grid.eigen[[k, m]]).powf(decay);
        }
        f
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn coeffs(&self) -> &Array2<f64> {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut Array2<f64> {
        &mut self.coeffs
    }

    pub fn into_coeffs(self) -> Array2<f64> {
        self.coeffs
    }

    pub fn max_abs(&self) -> f64 {
        self.coeffs.iter().fold(0.0, |acc, c| acc.max(c.abs()))
    }

    /// Membership in H: no barotropic (`m = 0`) component.
    pub fn is_admissible(&self) -> bool {
        let scale = self.max_abs();
        self.coeffs
            .column(0)
            .iter()
            .all(|c| c.abs() <= 1e-14 * scale)
    }

    pub(crate) fn require_admissible(&self, what: &str) -> Result<()> {
        if self.is_admissible() {
            Ok(())
        } else {
            Err(SolverError::Constraint(format!(
                "{what} requires an H-admissible field (nonzero vertical mean present)"
            )))
        }
    }

    pub fn scaled(&self, a: f64) -> Field {
        Field {
            grid: Arc::clone(&self.grid),
            coeffs: &self.coeffs * a,
        }
    }

    /// `self += a * other`
    pub fn axpy(&mut self, a: f64, other: &Field) {
        self.coeffs.scaled_add(a, &other.coeffs);
    }

    pub fn sub(&self, other: &Field) -> Field {
        Field {
            grid: Arc::clone(&self.grid),
            coeffs: &self.coeffs - &other.coeffs,
        }
    }

    pub fn add(&self, other: &Field) -> Field {
        Field {
            grid: Arc::clone(&self.grid),
            coeffs: &self.coeffs + &other.coeffs,
        }
    }

    /// Pointwise value of the spectral sum.
    pub fn eval(&self, x: f64, z: f64) -> Result<f64> {
        let g = &self.grid;
        check_point(g, x, z)?;
        let mut acc = 0.0;
        for k in 1..=g.nx {
            let sx = (g.kx(k) * x).sin();
            for m in 0..=g.nz {
                acc += self.coeffs[[k - 1, m]] * sx * (g.kz(m) * z).cos();
            }
        }
        Ok(acc)
    }

    /// Values on the quadrature grid, shape `(qx, qz)`.
    pub fn nodal(&self) -> Array2<f64> {
        self.grid.synth_sin_cos(self.coeffs.view())
    }

    pub fn norm_h(&self) -> f64 {
        weighted_sum(&self.coeffs, &self.grid.mass, |_| 1.0).sqrt()
    }

    pub fn norm_v(&self) -> f64 {
        let g = &self.grid;
        Zip::from(&self.coeffs)
            .and(&g.mass)
            .and(&g.eigen)
            .fold(0.0, |acc, &c, &w, &l| acc + l * c * c * w)
            .sqrt()
    }
}

fn weighted_sum(c: &Array2<f64>, w: &Array2<f64>, f: impl Fn(f64) -> f64) -> f64 {
    Zip::from(c)
        .and(w)
        .fold(0.0, |acc, &c, &w| acc + f(c) * c * c * w)
}

fn check_point(g: &Grid, x: f64, z: f64) -> Result<()> {
    let tol = 1e-12 * g.length.max(g.depth);
    if !(x >= -tol && x <= g.length + tol && z >= -g.depth - tol && z <= tol) {
        return Err(SolverError::Domain {
            x,
            z,
            length: g.length,
            depth: g.depth,
        });
    }
    Ok(())
}

/// Vertical velocity `theta(x, z) = sum d[k][m] cos(k pi x / L) sin(m pi z / h)`,
/// k = 0..=Nx, m = 1..=Nz. Row `k`, column `m - 1`.
#[derive(Debug, Clone)]
pub struct ThetaField {
    grid: Arc<Grid>,
    coeffs: Array2<f64>,
}

impl ThetaField {
    pub fn zeros(grid: &Arc<Grid>) -> ThetaField {
        ThetaField {
            grid: Arc::clone(grid),
            coeffs: Array2::zeros((grid.nx + 1, grid.nz)),
        }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn coeffs(&self) -> &Array2<f64> {
        &self.coeffs
    }

    pub fn eval(&self, x: f64, z: f64) -> Result<f64> {
        let g = &self.grid;
        check_point(g, x, z)?;
        let mut acc = 0.0;
        for k in 0..=g.nx {
            let cx = (g.kx(k) * x).cos();
            for m in 1..=g.nz {
                acc += self.coeffs[[k, m - 1]] * cx * (g.kz(m) * z).sin();
            }
        }
        Ok(acc)
    }

    pub fn nodal(&self) -> Array2<f64> {
        self.grid.synth_cos_sin(self.coeffs.view())
    }
}

/// Vertical shear `r = dz v` in the `sin(k pi x / L) sin(m pi z / h)` basis,
/// k = 1..=Nx, m = 1..=Nz. Row `k - 1`, column `m - 1`.
#[derive(Debug, Clone)]
pub struct ShearField {
    grid: Arc<Grid>,
    coeffs: Array2<f64>,
}

impl ShearField {
    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn coeffs(&self) -> &Array2<f64> {
        &self.coeffs
    }

    pub fn eval(&self, x: f64, z: f64) -> Result<f64> {
        let g = &self.grid;
        check_point(g, x, z)?;
        let mut acc = 0.0;
        for k in 1..=g.nx {
            let sx = (g.kx(k) * x).sin();
            for m in 1..=g.nz {
                acc += self.coeffs[[k - 1, m - 1]] * sx * (g.kz(m) * z).sin();
            }
        }
        Ok(acc)
    }

    pub fn nodal(&self) -> Array2<f64> {
        self.grid.synth_sin_sin(self.coeffs.view())
    }

    fn mass(&self) -> f64 {
        0.25 * self.grid.length * self.grid.depth
    }

    pub fn norm_h(&self) -> f64 {
        (self.coeffs.iter().map(|c| c * c).sum::<f64>() * self.mass()).sqrt()
    }

    pub fn norm_v(&self) -> f64 {
        let g = &self.grid;
        let s: f64 = self
            .coeffs
            .indexed_iter()
            .map(|((k, m), c)| g.eigen[[k, m + 1]] * c * c)
            .sum();
        (s * self.mass()).sqrt()
    }
}

/// `|v|`, `||v||` and `|A v|`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Norms {
    pub h: f64,
    pub v: f64,
    pub h2: f64,
}

pub fn make_grid(length: f64, depth: f64, nx: usize, nz: usize) -> Result<Arc<Grid>> {
    Grid::new(length, depth, nx, nz)
}

/// `int_M u v dx dz` from coefficients.
pub fn l2_inner(u: &Field, v: &Field) -> Result<f64> {
    u.grid.check_same(&v.grid)?;
    Ok(Zip::from(&u.coeffs)
        .and(&v.coeffs)
        .and(&u.grid.mass)
        .fold(0.0, |acc, &a, &b, &w| acc + a * b * w))
}

pub fn norms(v: &Field) -> Norms {
    let g = &v.grid;
    let h2 = Zip::from(&v.coeffs)
        .and(&g.mass)
        .and(&g.eigen)
        .fold(0.0, |acc, &c, &w, &l| acc + l * l * c * c * w)
        .sqrt();
    Norms {
        h: v.norm_h(),
        v: v.norm_v(),
        h2,
    }
}

/// Exact vertical derivative: `sin(ax) cos(bz) -> -b sin(ax) sin(bz)`.
pub fn dz_field(v: &Field) -> ShearField {
    let g = &v.grid;
    let coeffs = Array2::from_shape_fn((g.nx, g.nz), |(k, m)| -g.kz(m + 1) * v.coeffs[[k, m + 1]]);
    ShearField {
        grid: Arc::clone(g),
        coeffs,
    }
}

pub(crate) fn theta_from_coeffs(grid: &Arc<Grid>, coeffs: Array2<f64>) -> ThetaField {
    debug_assert_eq!(coeffs.dim(), (grid.nx + 1, grid.nz));
    ThetaField {
        grid: Arc::clone(grid),
        coeffs,
    }
}
