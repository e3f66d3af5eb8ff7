use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::Result;
use crate::grid::{Field, Grid};
use crate::noise::{
    estimate_constants, make_noise, power_law_sigma, sample_path, ConstantsEstimate, NoiseKind,
};
use crate::operators::{apply_a, divergence_coeffs, project_h, trilinear_b, EpsilonSplit};
use crate::splitting::{run_splitting, SplitConfig};

/// Tolerances of the invariant suite.
pub const CANCELLATION_TOL: f64 = 1e-10;
pub const DIVERGENCE_TOL: f64 = 1e-13;
pub const ENERGY_TOL: f64 = 1e-8;
/// Allowed excess of an estimated hypothesis constant over its declared value.
pub const HYPOTHESIS_TOL: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckItem {
    pub name: &'static str,
    pub pass: bool,
    /// Worst observed value of the checked quantity.
    pub worst: f64,
    pub limit: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckSuite {
    pub items: Vec<CheckItem>,
}

impl CheckSuite {
    pub fn pass(&self) -> bool {
        self.items.iter().all(|i| i.pass)
    }

    pub fn item(&self, name: &str) -> Option<&CheckItem> {
        self.items.iter().find(|i| i.name == name)
    }
}

fn item(name: &'static str, worst: f64, limit: f64) -> CheckItem {
    CheckItem {
        name,
        pass: worst <= limit,
        worst,
        limit,
    }
}

/// Invariants of the discrete operators and of the scheme on `grid`, using
/// `trials` random admissible triples.
pub fn run_check_suite(grid: &Arc<Grid>, trials: usize, seed: u64) -> Result<CheckSuite> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let decays = [0.0, 0.5, 1.0];
    let mut cancellation: f64 = 0.0;
    let mut antisymmetry: f64 = 0.0;
    let mut divergence: f64 = 0.0;
    let mut idempotence: f64 = 0.0;
    for t in 0..trials {
        let d = decays[t % decays.len()];
        let u = Field::random_admissible(grid, &mut rng, d);
        let v = Field::random_admissible(grid, &mut rng, d);
        let w = Field::random_admissible(grid, &mut rng, d);

        let scale = u.norm_h() * v.norm_v().powi(2);
        cancellation = cancellation.max(trilinear_b(&u, &v, &v)?.abs() / scale);

        let scale = u.norm_h() * v.norm_v() * w.norm_v();
        let sum = trilinear_b(&u, &v, &w)? + trilinear_b(&u, &w, &v)?;
        antisymmetry = antisymmetry.max(sum.abs() / scale);

        let div = divergence_coeffs(&v)?.iter().fold(0.0, |m: f64, c| m.max(c.abs()));
        divergence = divergence.max(div / v.max_abs());

        // a general field with a nonzero vertical mean
        let mut f = u.clone();
        for k in 0..grid.nx() {
            f.coeffs_mut()[[k, 0]] = w.coeffs()[[k, 1]];
        }
        let once = project_h(&f);
        let twice = project_h(&once);
        idempotence = idempotence.max(once.sub(&twice).max_abs());
    }

    // A e_{k,m} = lambda e_{k,m}, against an independent evaluation of lambda
    let mut eigen: f64 = 0.0;
    for k in 1..=grid.nx() {
        for m in 1..=grid.nz() {
            let e = Field::mode(grid, k, m, 1.0)?;
            let ae = apply_a(&e)?;
            let kx = k as f64 * std::f64::consts::PI / grid.length();
            let kz = m as f64 * std::f64::consts::PI / grid.depth();
            let lambda = kx * kx + kz * kz;
            let diag = ae.coeffs()[[k - 1, m]];
            let off = ae.sub(&Field::mode(grid, k, m, diag)?).max_abs();
            eigen = eigen.max(off).max((diag - lambda).abs() / lambda);
        }
    }

    let (handoff, admissible, energy) = scheme_checks(grid, seed)?;

    Ok(CheckSuite {
        items: vec![
            item("cancellation", cancellation, CANCELLATION_TOL),
            item("antisymmetry", antisymmetry, CANCELLATION_TOL),
            item("projection-idempotence", idempotence, 0.0),
            item("divergence", divergence, DIVERGENCE_TOL),
            item("stokes-eigenvalues", eigen, 2.0 * f64::EPSILON),
            item("hand-offs", handoff, 0.0),
            item("admissibility", admissible, 1e-12),
            item("energy-inequality", energy, ENERGY_TOL),
        ],
    })
}

/// Short multiplicative-noise runs: hand-off mismatches (count), worst
/// vertical mean relative to the field and worst energy residual.
fn scheme_checks(grid: &Arc<Grid>, seed: u64) -> Result<(f64, f64, f64)> {
    let mut v0 = Field::zeros(grid);
    for (k, m, a) in [(1, 1, 0.5), (2, 1, 0.3), (1, 2, -0.2)] {
        if k <= grid.nx() && m <= grid.nz() {
            v0.axpy(1.0, &Field::mode(grid, k, m, a)?);
        }
    }
    let mut mismatches = 0usize;
    let mut admissible: f64 = 0.0;
    let mut energy: f64 = f64::NEG_INFINITY;
    for (kind, eps) in [
        (NoiseKind::DiagonalMultiplicative, 0.0),
        (NoiseKind::Additive, 0.3),
    ] {
        let m_w = 8.min(grid.nx() * grid.nz());
        let noise = make_noise(kind, m_w, &power_law_sigma(0.3, 2.0, m_w), grid)?;
        let cfg = SplitConfig {
            horizon: 0.25,
            intervals: 4,
            eps: EpsilonSplit::new(eps)?,
            micro_steps: 4,
            nonlinear: true,
            v0: v0.clone(),
            noise: Arc::new(noise),
        };
        let path = sample_path(&cfg.noise, seed, 16, cfg.horizon)?;
        let h = run_splitting(&cfg, &path)?;
        if !h.handoffs_exact() {
            mismatches += 1;
        }
        for r in &h.records {
            for f in r.v.iter().chain(&r.eta) {
                let mean = (0..grid.nx()).fold(0.0, |m: f64, k| m.max(f.coeffs()[[k, 0]].abs()));
                admissible = admissible.max(mean / f.max_abs().max(f64::MIN_POSITIVE));
            }
        }
        let (ev, er) = h.energy_residuals();
        energy = energy.max(ev).max(er);
    }
    Ok((mismatches as f64, admissible, energy.max(0.0)))
}

/// Hypothesis-constant certification for every built-in family.
#[derive(Debug, Clone, Serialize)]
pub struct HypothesisReport {
    pub estimate: ConstantsEstimate,
    pub within_tolerance: bool,
    pub violations: Vec<String>,
    pub rate_conditions: bool,
}

pub fn hypotheses_report(
    grid: &Arc<Grid>,
    kinds: &[NoiseKind],
    m_w: usize,
    sigma: &[f64],
    samples: usize,
    seed: u64,
) -> Result<Vec<HypothesisReport>> {
    kinds
        .iter()
        .map(|&kind| {
            let model = make_noise(kind, m_w, sigma, grid)?;
            let estimate = estimate_constants(&model, samples, seed)?;
            let violations = estimate.violations(HYPOTHESIS_TOL);
            Ok(HypothesisReport {
                within_tolerance: violations.is_empty(),
                violations,
                rate_conditions: model.declared().satisfies_rate_conditions(),
                estimate,
            })
        })
        .collect()
}
