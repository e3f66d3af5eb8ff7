//! Truncated cylindrical Wiener process and the built-in diffusion operators.
//!
//! `W = sum_i r_i w_i` is truncated to `m_W` modes. The diffusion operator is
//! described through its columns `psi(t, v) r_i`, each of which is a multiple of
//! a unit-normalized low-frequency basis mode `e_i`.

use std::sync::Arc;

use ndarray::{Array1, Array2, ArrayView1};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SolverError};
use crate::grid::{dz_field, Field, Grid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseKind {
    /// `psi(v) r_i = sigma_i e_i`
    Additive,
    /// `psi(v) r_i = sigma_i Pi_i v`, `Pi_i` the projection onto mode `e_i`
    DiagonalMultiplicative,
    /// `psi(v) r_i = sigma_i (v, e_1) e_i`
    LowModeMultiplicative,
}

impl NoiseKind {
    pub const ALL: [NoiseKind; 3] = [
        NoiseKind::Additive,
        NoiseKind::DiagonalMultiplicative,
        NoiseKind::LowModeMultiplicative,
    ];

    pub fn name(self) -> &'static str {
        match self {
            NoiseKind::Additive => "additive",
            NoiseKind::DiagonalMultiplicative => "diagonal-multiplicative",
            NoiseKind::LowModeMultiplicative => "low-mode-multiplicative",
        }
    }
}

impl std::str::FromStr for NoiseKind {
    type Err = SolverError;

    fn from_str(s: &str) -> Result<Self> {
        NoiseKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| SolverError::InvalidConfig(format!("unknown noise kind `{s}`")))
    }
}

/// Growth and Lipschitz constants.
///
/// * `k`: `||psi(phi)||^2_HS <= K0 + K1 |phi|^2 + eps K2 ||phi||^2` and
///   `||psi(phi1) - psi(phi2)||^2_HS <= K3 |phi1 - phi2|^2 + eps K4 ||phi1 - phi2||^2`
/// * `l`: the same growth bound for `dz psi`, in terms of `dz phi`
/// * `r`: growth of `psi` as a V-valued operator, in terms of `||phi||` and `|A phi|`
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct HypothesisConstants {
    pub k: [f64; 5],
    pub l: [f64; 3],
    pub r: [f64; 3],
}

impl HypothesisConstants {
    fn iter(&self) -> impl Iterator<Item = (String, f64)> + '_ {
        let k = self.k.iter().enumerate().map(|(i, &c)| (format!("K{i}"), c));
        let l = self.l.iter().enumerate().map(|(i, &c)| (format!("L{i}"), c));
        let r = self.r.iter().enumerate().map(|(i, &c)| (format!("R{i}"), c));
        k.chain(l).chain(r)
    }

    /// Named constants in the order K0..K4, L0..L2, R0..R2.
    pub fn named(&self) -> Vec<(String, f64)> {
        self.iter().collect()
    }

    /// Conditions required by the convergence-rate result.
    pub fn satisfies_rate_conditions(&self) -> bool {
        self.k[2] < 2.0 / 147.0 && self.k[4] < 2.0 && self.l[2] == 0.0 && self.r[2] == 0.0
    }
}

#[derive(Debug, Clone)]
pub struct NoiseModel {
    kind: NoiseKind,
    sigma: Vec<f64>,
    /// `(k, m)` of each `e_i`
    modes: Vec<(usize, usize)>,
    /// Coefficient of the unit-normalized `e_i`.
    unit_coeff: Vec<f64>,
    declared: HypothesisConstants,
    grid: Arc<Grid>,
}

/// The first `count` admissible modes ordered by eigenvalue, then `k`, then `m`.
pub fn low_modes(grid: &Grid, count: usize) -> Vec<(usize, usize)> {
    let lam = grid.eigenvalues();
    let mut modes: Vec<(usize, usize)> = (1..=grid.nx())
        .flat_map(|k| (1..=grid.nz()).map(move |m| (k, m)))
        .collect();
    modes.sort_by(|a, b| {
        lam[[a.0 - 1, a.1]]
            .total_cmp(&lam[[b.0 - 1, b.1]])
            .then(a.cmp(b))
    });
    modes.truncate(count);
    modes
}

/// `sigma_i = amplitude * i^{-decay}`, i = 1..=count.
pub fn power_law_sigma(amplitude: f64, decay: f64, count: usize) -> Vec<f64> {
    (1..=count)
        .map(|i| amplitude * (i as f64).powf(-decay))
        .collect()
}

pub fn make_noise(
    kind: NoiseKind,
    m_w: usize,
    sigma: &[f64],
    grid: &Arc<Grid>,
) -> Result<NoiseModel> {
    if m_w == 0 || sigma.is_empty() {
        return Err(SolverError::InvalidConfig(
            "noise needs at least one mode".into(),
        ));
    }
    if sigma.len() != m_w {
        return Err(SolverError::InvalidConfig(format!(
            "sigma has {} entries but m_W = {m_w}",
            sigma.len()
        )));
    }
    if let Some(s) = sigma.iter().find(|s| !(s.is_finite() && **s >= 0.0)) {
        return Err(SolverError::InvalidConfig(format!(
            "noise amplitudes must be finite and nonnegative, got {s}"
        )));
    }
    let available = grid.nx() * grid.nz();
    if m_w > available {
        return Err(SolverError::InvalidConfig(format!(
            "m_W = {m_w} exceeds the {available} admissible modes of the grid"
        )));
    }
    let modes = low_modes(grid, m_w);
    let mass = grid.mass();
    let unit_coeff = modes
        .iter()
        .map(|&(k, m)| 1.0 / mass[[k - 1, m]].sqrt())
        .collect();

    let lam = grid.eigenvalues();
    let b2: Vec<f64> = modes.iter().map(|&(_, m)| grid.kz(m).powi(2)).collect();
    let l2: Vec<f64> = modes.iter().map(|&(k, m)| lam[[k - 1, m]]).collect();
    let s2: Vec<f64> = sigma.iter().map(|s| s * s).collect();
    let sum = |w: &[f64]| s2.iter().zip(w).map(|(s, w)| s * w).sum::<f64>();
    let total: f64 = s2.iter().sum();
    let max = s2.iter().cloned().fold(0.0, f64::max);

    let declared = match kind {
        NoiseKind::Additive => HypothesisConstants {
            k: [total, 0.0, 0.0, 0.0, 0.0],
            l: [sum(&b2), 0.0, 0.0],
            r: [sum(&l2), 0.0, 0.0],
        },
        NoiseKind::DiagonalMultiplicative => HypothesisConstants {
            k: [0.0, max, 0.0, max, 0.0],
            l: [0.0, max, 0.0],
            r: [0.0, max, 0.0],
        },
        NoiseKind::LowModeMultiplicative => HypothesisConstants {
            k: [0.0, total, 0.0, total, 0.0],
            l: [0.0, sum(&b2) / b2[0], 0.0],
            r: [0.0, sum(&l2) / l2[0], 0.0],
        },
    };

    Ok(NoiseModel {
        kind,
        sigma: sigma.to_vec(),
        modes,
        unit_coeff,
        declared,
        grid: Arc::clone(grid),
    })
}

impl NoiseModel {
    pub fn kind(&self) -> NoiseKind {
        self.kind
    }

    pub fn m_w(&self) -> usize {
        self.sigma.len()
    }

    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    pub fn modes(&self) -> &[(usize, usize)] {
        &self.modes
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn declared(&self) -> &HypothesisConstants {
        &self.declared
    }

    /// None of the built-in families carries eps-weighted gradient terms.
    pub fn eps_coupled(&self) -> bool {
        self.declared.k[2] != 0.0
            || self.declared.k[4] != 0.0
            || self.declared.l[2] != 0.0
            || self.declared.r[2] != 0.0
    }

    pub fn is_zero(&self) -> bool {
        self.sigma.iter().all(|&s| s == 0.0)
    }

    /// `e_i` as a field.
    pub fn shape(&self, i: usize) -> Field {
        let (k, m) = self.modes[i];
        let mut f = Field::zeros(&self.grid);
        f.coeffs_mut()[[k - 1, m]] = self.unit_coeff[i];
        f
    }

    /// `(v, e_i)`
    fn project(&self, v: &Field, i: usize) -> f64 {
        let (k, m) = self.modes[i];
        v.coeffs()[[k - 1, m]] * self.grid.mass()[[k - 1, m]] * self.unit_coeff[i]
    }

    /// Coefficient multiplying `e_i` in `psi(v) r_i`.
    fn column_amplitude(&self, v: &Field, i: usize) -> f64 {
        match self.kind {
            NoiseKind::Additive => self.sigma[i],
            NoiseKind::DiagonalMultiplicative => self.sigma[i] * self.project(v, i),
            NoiseKind::LowModeMultiplicative => self.sigma[i] * self.project(v, 0),
        }
    }

    /// `psi(t, v) r_i`.
    pub fn column(&self, _t: f64, v: &Field, i: usize) -> Field {
        self.shape(i).scaled(self.column_amplitude(v, i))
    }

    /// Adds `sum_i psi(t, v) r_i dw_i` to `out`.
    pub(crate) fn add_increment(&self, v: &Field, dw: ArrayView1<'_, f64>, out: &mut Field) {
        for i in 0..self.m_w() {
            let (k, m) = self.modes[i];
            let a = self.column_amplitude(v, i) * dw[i];
            out.coeffs_mut()[[k - 1, m]] += a * self.unit_coeff[i];
        }
    }

    /// Squared Hilbert-Schmidt norms of `psi(phi)` into H, of `dz psi(phi)`
    /// into H, and of `psi(phi)` into V.
    pub fn hs_norms(&self, phi: &Field) -> (f64, f64, f64) {
        let mut acc = (0.0, 0.0, 0.0);
        for i in 0..self.m_w() {
            let a = self.column_amplitude(phi, i);
            let (k, m) = self.modes[i];
            // |e_i| = 1, |dz e_i| = b_i, ||e_i|| = sqrt(lambda_i)
            acc.0 += a * a;
            acc.1 += a * a * self.grid.kz(m).powi(2);
            acc.2 += a * a * self.grid.eigenvalues()[[k - 1, m]];
        }
        acc
    }

    /// `||psi(phi1) - psi(phi2)||^2_HS` into H.
    pub fn hs_lipschitz(&self, phi1: &Field, phi2: &Field) -> f64 {
        (0..self.m_w())
            .map(|i| (self.column_amplitude(phi1, i) - self.column_amplitude(phi2, i)).powi(2))
            .sum()
    }
}

/// `sum_i psi(t, v) r_i dW_i`.
pub fn apply_psi_increment(model: &NoiseModel, t: f64, v: &Field, dw: &[f64]) -> Result<Field> {
    if dw.len() != model.m_w() {
        return Err(SolverError::Shape(format!(
            "increment has {} entries, model has {} modes",
            dw.len(),
            model.m_w()
        )));
    }
    let _ = t;
    let mut out = Field::zeros(&model.grid);
    model.add_increment(v, ArrayView1::from(dw), &mut out);
    Ok(out)
}

/// Identifies the fine Wiener path a (possibly coarsened) path came from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathProvenance {
    pub seed: u64,
    pub fine_steps: usize,
    pub horizon: f64,
    pub modes: usize,
}

/// Wiener increments `dW[i][j]` for mode `i` over step `j` of a uniform partition.
#[derive(Debug, Clone, PartialEq)]
pub struct BrownianPath {
    increments: Array2<f64>,
    horizon: f64,
    provenance: PathProvenance,
}

fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller on exactly two words so every interval consumes a fixed slice
    // of the keystream.
    let u1 = ((rng.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64);
    let u2 = (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Increments for `m_W` modes on `n_fine` steps of `[0, T]`. Mode `i` reads
/// keystream `i` of a ChaCha8 generator keyed by `seed`; step `j` consumes
/// words `4j..4j+4` of that stream.
pub fn sample_path(model: &NoiseModel, seed: u64, n_fine: usize, horizon: f64) -> Result<BrownianPath> {
    sample_path_modes(model.m_w(), seed, n_fine, horizon)
}

pub fn sample_path_modes(m_w: usize, seed: u64, n_fine: usize, horizon: f64) -> Result<BrownianPath> {
    if n_fine == 0 || !(horizon.is_finite() && horizon > 0.0) {
        return Err(SolverError::InvalidConfig(format!(
            "path needs n_fine >= 1 and T > 0, got {n_fine} and {horizon}"
        )));
    }
    let scale = (horizon / n_fine as f64).sqrt();
    let mut increments = Array2::zeros((m_w, n_fine));
    for (i, mut row) in increments.rows_mut().into_iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        for dw in row.iter_mut() {
            *dw = scale * standard_normal(&mut rng);
        }
    }
    Ok(BrownianPath {
        increments,
        horizon,
        provenance: PathProvenance {
            seed,
            fine_steps: n_fine,
            horizon,
            modes: m_w,
        },
    })
}

/// Sums groups of `factor` consecutive increments.
pub fn coarsen(path: &BrownianPath, factor: usize) -> Result<BrownianPath> {
    let n = path.steps();
    if factor == 0 || n % factor != 0 {
        return Err(SolverError::InvalidConfig(format!(
            "coarsening factor {factor} does not divide {n} steps"
        )));
    }
    let coarse = Array2::from_shape_fn((path.modes(), n / factor), |(i, j)| {
        path.increments
            .row(i)
            .iter()
            .skip(j * factor)
            .take(factor)
            .sum()
    });
    Ok(BrownianPath {
        increments: coarse,
        horizon: path.horizon,
        provenance: path.provenance,
    })
}

impl BrownianPath {
    pub fn modes(&self) -> usize {
        self.increments.nrows()
    }

    pub fn steps(&self) -> usize {
        self.increments.ncols()
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps() as f64
    }

    pub fn increments(&self) -> &Array2<f64> {
        &self.increments
    }

    /// Increment vector over step `j`.
    pub fn step(&self, j: usize) -> ArrayView1<'_, f64> {
        self.increments.column(j)
    }

    pub fn provenance(&self) -> PathProvenance {
        self.provenance
    }

    /// Coarsen to exactly `steps` steps.
    pub fn to_steps(&self, steps: usize) -> Result<BrownianPath> {
        if steps == 0 || self.steps() % steps != 0 {
            return Err(SolverError::InvalidConfig(format!(
                "cannot coarsen {} steps to {steps}",
                self.steps()
            )));
        }
        coarsen(self, self.steps() / steps)
    }

    /// Per-mode `W(T)`.
    pub fn endpoint(&self) -> Array1<f64> {
        self.increments.sum_axis(ndarray::Axis(1))
    }
}

/// Randomized certification of the hypothesis constants.
#[derive(Debug, Clone, Serialize)]
pub struct ConstantsEstimate {
    pub kind: NoiseKind,
    pub declared: HypothesisConstants,
    pub estimated: HypothesisConstants,
    pub samples: usize,
}

impl ConstantsEstimate {
    /// Every estimate is below `declared * (1 + tol)` (with an absolute floor
    /// for constants declared zero).
    pub fn within(&self, tol: f64) -> bool {
        self.violations(tol).is_empty()
    }

    pub fn violations(&self, tol: f64) -> Vec<String> {
        let scale = self
            .declared
            .named()
            .iter()
            .map(|(_, c)| c.abs())
            .fold(0.0, f64::max)
            .max(1e-300);
        self.declared
            .named()
            .into_iter()
            .zip(self.estimated.named())
            .filter(|((_, d), (_, e))| *e > d * (1.0 + tol) + 1e-12 * scale)
            .map(|((name, d), (_, e))| format!("{name}: estimated {e:e} > declared {d:e}"))
            .collect()
    }
}

fn upper_envelope<I>(pairs: I) -> f64
where
    I: IntoIterator<Item = (f64, f64)>,
{
    pairs
        .into_iter()
        .filter(|(_, den)| *den > 0.0)
        .map(|(num, den)| num / den)
        .fold(0.0, f64::max)
}

pub fn estimate_constants(model: &NoiseModel, samples: usize, seed: u64) -> Result<ConstantsEstimate> {
    if samples < 10 {
        return Err(SolverError::InvalidConfig(format!(
            "need at least 10 samples, got {samples}"
        )));
    }
    let grid = &model.grid;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Mix of spectral decays so that both rough and smooth directions are probed.
    let decays = [0.0, 0.25, 0.5, 1.0];
    let probes: Vec<Field> = (0..samples)
        .map(|s| Field::random_admissible(grid, &mut rng, decays[s % decays.len()]))
        .collect();

    let zero = Field::zeros(grid);
    let (k0, l0, r0) = model.hs_norms(&zero);

    struct Probe {
        hs: (f64, f64, f64),
        h: f64,
        v: f64,
        dz_h: f64,
        dz_v: f64,
        a: f64,
    }
    let data: Vec<Probe> = probes
        .iter()
        .map(|p| {
            let r = dz_field(p);
            Probe {
                hs: model.hs_norms(p),
                h: p.norm_h().powi(2),
                v: p.norm_v().powi(2),
                dz_h: r.norm_h().powi(2),
                dz_v: r.norm_v().powi(2),
                a: crate::grid::norms(p).h2.powi(2),
            }
        })
        .collect();

    let k1 = upper_envelope(data.iter().map(|d| (d.hs.0 - k0, d.h)));
    let k2 = upper_envelope(data.iter().map(|d| (d.hs.0 - k0 - k1 * d.h, d.v)));
    let l1 = upper_envelope(data.iter().map(|d| (d.hs.1 - l0, d.dz_h)));
    let l2 = upper_envelope(data.iter().map(|d| (d.hs.1 - l0 - l1 * d.dz_h, d.dz_v)));
    let r1 = upper_envelope(data.iter().map(|d| (d.hs.2 - r0, d.v)));
    let r2 = upper_envelope(data.iter().map(|d| (d.hs.2 - r0 - r1 * d.v, d.a)));

    let diffs: Vec<(f64, f64, f64)> = probes
        .iter()
        .zip(probes.iter().skip(1))
        .map(|(a, b)| {
            let d = a.sub(b);
            (model.hs_lipschitz(a, b), d.norm_h().powi(2), d.norm_v().powi(2))
        })
        .collect();
    let k3 = upper_envelope(diffs.iter().map(|&(hs, h, _)| (hs, h)));
    let k4 = upper_envelope(diffs.iter().map(|&(hs, h, v)| (hs - k3 * h, v)));

    Ok(ConstantsEstimate {
        kind: model.kind,
        declared: model.declared,
        estimated: HypothesisConstants {
            k: [k0, k1, k2, k3, k4],
            l: [l0, l1, l2],
            r: [r0, r1, r2],
        },
        samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_grid;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn grid() -> Arc<Grid> {
        make_grid(PI, PI, 6, 6).unwrap()
    }

    #[test]
    fn additive_single_mode() {
        let g = grid();
        let m = make_noise(NoiseKind::Additive, 1, &[0.1], &g).unwrap();
        assert_eq!(m.modes(), &[(1, 1)]);
        let inc = apply_psi_increment(&m, 0.0, &Field::zeros(&g), &[1.0]).unwrap();
        let e1 = Field::unit_mode(&g, 1, 1).unwrap();
        assert!(inc.sub(&e1.scaled(0.1)).max_abs() < 1e-16);
        assert_relative_eq!(m.declared().k[0], 0.01, epsilon = 1e-16);
        assert_eq!(m.declared().k[1], 0.0);
        assert_eq!(m.declared().k[3], 0.0);
    }

    #[test]
    fn diagonal_single_mode_constants() {
        let g = grid();
        let m = make_noise(NoiseKind::DiagonalMultiplicative, 1, &[0.1], &g).unwrap();
        let d = m.declared();
        assert_eq!(d.k[0], 0.0);
        assert_relative_eq!(d.k[1], 0.01, epsilon = 1e-16);
        assert_relative_eq!(d.k[3], 0.01, epsilon = 1e-16);
        // HS norm equals sigma^2 |Pi_1 v|^2
        let v = Field::mode(&g, 1, 1, 2.0).unwrap();
        let (hs, _, _) = m.hs_norms(&v);
        assert_relative_eq!(hs, 0.01 * v.norm_h().powi(2), max_relative = 1e-14);
    }

    #[test]
    fn zero_model() {
        let g = grid();
        for kind in NoiseKind::ALL {
            let m = make_noise(kind, 3, &[0.0; 3], &g).unwrap();
            assert!(m.is_zero());
            let c = m.declared();
            assert!(c.named().iter().all(|(_, v)| *v == 0.0));
            let est = estimate_constants(&m, 20, 1).unwrap();
            assert!(est.estimated.named().iter().all(|(_, v)| *v == 0.0));
        }
    }

    #[test]
    fn make_noise_errors() {
        let g = grid();
        assert!(make_noise(NoiseKind::Additive, 0, &[], &g).is_err());
        assert!(make_noise(NoiseKind::Additive, 2, &[0.1], &g).is_err());
        assert!(make_noise(NoiseKind::Additive, 1, &[-0.1], &g).is_err());
        assert!(make_noise(NoiseKind::Additive, 37, &[0.1; 37], &g).is_err());
    }

    #[test]
    fn built_in_families_meet_rate_conditions() {
        let g = grid();
        let sigma = power_law_sigma(0.05, 2.0, 16);
        for kind in NoiseKind::ALL {
            let m = make_noise(kind, 16, &sigma, &g).unwrap();
            assert!(m.declared().satisfies_rate_conditions());
            assert!(!m.eps_coupled());
        }
    }

    #[test]
    fn psi_increment_cases() {
        let g = grid();
        let sigma = [0.3, 0.2, 0.1];
        let m = make_noise(NoiseKind::Additive, 3, &sigma, &g).unwrap();
        let v = Field::mode(&g, 2, 3, 1.0).unwrap();
        assert_eq!(apply_psi_increment(&m, 0.0, &v, &[0.0; 3]).unwrap().max_abs(), 0.0);
        let one = apply_psi_increment(&m, 0.0, &v, &[1.0, 0.0, 0.0]).unwrap();
        assert!(one.sub(&m.shape(0).scaled(0.3)).max_abs() == 0.0);
        assert!(matches!(
            apply_psi_increment(&m, 0.0, &v, &[1.0]),
            Err(SolverError::Shape(_))
        ));
    }

    #[test]
    fn lipschitz_bound_holds_for_each_family() {
        let g = grid();
        let sigma = power_law_sigma(0.2, 1.0, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for kind in NoiseKind::ALL {
            let m = make_noise(kind, 8, &sigma, &g).unwrap();
            for _ in 0..100 {
                let a = Field::random_admissible(&g, &mut rng, 0.2);
                let b = Field::random_admissible(&g, &mut rng, 0.2);
                // direct HS evaluation from the operator's columns
                let direct: f64 = (0..m.m_w())
                    .map(|i| m.column(0.0, &a, i).sub(&m.column(0.0, &b, i)).norm_h().powi(2))
                    .sum();
                assert_relative_eq!(direct, m.hs_lipschitz(&a, &b), max_relative = 1e-12);
                let bound = m.declared().k[3] * a.sub(&b).norm_h().powi(2);
                assert!(direct <= bound * (1.0 + 1e-12) + 1e-300);
            }
        }
    }

    #[test]
    fn growth_bounds_hold_for_each_family() {
        let g = grid();
        let sigma = power_law_sigma(0.2, 1.5, 10);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for kind in NoiseKind::ALL {
            let m = make_noise(kind, 10, &sigma, &g).unwrap();
            let c = m.declared();
            for _ in 0..100 {
                let p = Field::random_admissible(&g, &mut rng, 0.3);
                let (h, dz, v) = m.hs_norms(&p);
                let r = dz_field(&p);
                let tol = 1.0 + 1e-12;
                assert!(h <= (c.k[0] + c.k[1] * p.norm_h().powi(2)) * tol);
                assert!(dz <= (c.l[0] + c.l[1] * r.norm_h().powi(2)) * tol);
                assert!(v <= (c.r[0] + c.r[1] * p.norm_v().powi(2)) * tol);
            }
        }
    }

    #[test]
    fn path_is_deterministic_and_coarsens_exactly() {
        let g = grid();
        let m = make_noise(NoiseKind::Additive, 4, &[0.1; 4], &g).unwrap();
        let a = sample_path(&m, 42, 64, 0.5).unwrap();
        let b = sample_path(&m, 42, 64, 0.5).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, sample_path(&m, 43, 64, 0.5).unwrap());

        assert_eq!(coarsen(&a, 1).unwrap(), a);
        let c4 = coarsen(&a, 4).unwrap();
        let c22 = coarsen(&coarsen(&a, 2).unwrap(), 2).unwrap();
        assert_eq!(c4.steps(), 16);
        for (x, y) in c4.increments().iter().zip(c22.increments()) {
            assert!((x - y).abs() <= 1e-14 * x.abs().max(1.0));
        }
        let (fine, coarse) = (a.endpoint(), c4.endpoint());
        for i in 0..4 {
            assert!((fine[i] - coarse[i]).abs() <= 1e-14 * fine[i].abs().max(1.0));
        }
        assert!(matches!(coarsen(&a, 3), Err(SolverError::InvalidConfig(_))));
        assert_eq!(c4.provenance(), a.provenance());
    }

    #[test]
    fn single_step_path() {
        let p = sample_path_modes(3, 9, 1, 2.0).unwrap();
        assert_eq!(p.steps(), 1);
        // variance T: check over many seeds
        let n = 20_000;
        let var: f64 = (0..n)
            .map(|s| sample_path_modes(1, s, 1, 2.0).unwrap().increments()[[0, 0]].powi(2))
            .sum::<f64>()
            / n as f64;
        let se = 2.0 * (2.0 / (n as f64 - 1.0)).sqrt();
        assert!((var - 2.0).abs() < 3.0 * se);
    }

    #[test]
    fn increment_variance_matches_step() {
        let (t, n) = (0.5, 100_000);
        let p = sample_path_modes(1, 2024, n, t).unwrap();
        let x = p.increments().row(0);
        let mean = x.sum() / n as f64;
        let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
        let target = t / n as f64;
        let se = target * (2.0 / (n as f64 - 1.0)).sqrt();
        assert!((var - target).abs() < 3.0 * se, "var {var} target {target}");
    }

    #[test]
    fn estimates_for_additive_and_diagonal() {
        let g = grid();
        let add = make_noise(NoiseKind::Additive, 1, &[0.1], &g).unwrap();
        let est = estimate_constants(&add, 50, 3).unwrap();
        assert_relative_eq!(est.estimated.k[0], 0.01, max_relative = 0.1);
        assert!(est.estimated.k[1] < 1e-12);
        assert!(est.estimated.k[3] < 1e-12);

        let diag = make_noise(NoiseKind::DiagonalMultiplicative, 1, &[0.1], &g).unwrap();
        let est = estimate_constants(&diag, 50, 3).unwrap();
        assert!(est.estimated.k[1] <= 0.01 * 1.1);
        assert!(est.estimated.k[2] < 1e-12);
        assert!(est.within(0.1));
        assert!(estimate_constants(&diag, 5, 3).is_err());
    }
}
