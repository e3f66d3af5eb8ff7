use serde::Serialize;

use super::config::GrowthFn;
use crate::error::{Result, SolverError};

/// Two-sided 95% standard normal quantile.
const Z95: f64 = 1.959_963_984_540_054;

/// Minimum samples per `n` for a tail estimate.
pub const MIN_TAIL_SAMPLES: usize = 8;

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (zero for fewer than two samples).
pub fn std_dev(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

/// Linear-interpolation quantile of the sorted sample, `q` in `[0, 1]`.
pub fn quantile(xs: &[f64], q: f64) -> f64 {
    let mut s = xs.to_vec();
    s.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (s.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    s[lo] + (pos - lo as f64) * (s[hi] - s[lo])
}

/// Wilson score interval at 95% for `k` successes out of `n`.
pub fn wilson_interval(k: usize, n: usize) -> (f64, f64) {
    let nf = n as f64;
    let p = k as f64 / nf;
    let z2 = Z95 * Z95;
    let denom = 1.0 + z2 / nf;
    let centre = (p + z2 / (2.0 * nf)) / denom;
    let half = Z95 * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt() / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

/// Least-squares fit of `ln y = a + b ln x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LogLogFit {
    /// Decay rate `-b`.
    pub rate: f64,
    pub intercept: f64,
    /// Standard error of the rate; `None` with fewer than three points.
    pub rate_stderr: Option<f64>,
}

pub fn fit_loglog(xs: &[f64], ys: &[f64]) -> Result<LogLogFit> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(SolverError::Statistics(
            "log-log fit needs at least two paired points".into(),
        ));
    }
    if xs.iter().chain(ys).any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(SolverError::Statistics(
            "log-log fit needs positive finite data".into(),
        ));
    }
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let (mx, my) = (mean(&lx), mean(&ly));
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let b = sxy / sxx;
    let a = my - b * mx;
    let k = lx.len();
    let rate_stderr = (k > 2).then(|| {
        let ssr: f64 = lx.iter().zip(&ly).map(|(x, y)| (y - a - b * x).powi(2)).sum();
        (ssr / (k - 2) as f64 / sxx).sqrt()
    });
    Ok(LogLogFit {
        rate: -b,
        intercept: a,
        rate_stderr,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TailRow {
    pub n: usize,
    pub l: f64,
    /// `l(n) / sqrt(n)`
    pub threshold: f64,
    pub exceed: usize,
    pub samples: usize,
    pub p_hat: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TailTable {
    pub l_fn: String,
    pub rows: Vec<TailRow>,
    /// Each estimate is at most its predecessor, or their intervals overlap.
    pub nonincreasing: bool,
}

/// Empirical `P(e_n >= l(n) / sqrt(n))` per `n` with Wilson intervals.
pub fn probability_tail(groups: &[(usize, Vec<f64>)], l_fn: GrowthFn) -> Result<TailTable> {
    if groups.len() < 2 {
        return Err(SolverError::InvalidConfig(
            "tail estimation needs at least two values of n".into(),
        ));
    }
    let mut rows = Vec::with_capacity(groups.len());
    for (n, errors) in groups {
        if errors.len() < MIN_TAIL_SAMPLES {
            return Err(SolverError::Statistics(format!(
                "n = {n}: {} samples, need at least {MIN_TAIL_SAMPLES} for an interval",
                errors.len()
            )));
        }
        let l = l_fn.eval(*n);
        let threshold = l / (*n as f64).sqrt();
        let exceed = errors.iter().filter(|&&e| e >= threshold).count();
        let (ci_low, ci_high) = wilson_interval(exceed, errors.len());
        rows.push(TailRow {
            n: *n,
            l,
            threshold,
            exceed,
            samples: errors.len(),
            p_hat: exceed as f64 / errors.len() as f64,
            ci_low,
            ci_high,
        });
    }
    let nonincreasing = rows
        .windows(2)
        .all(|w| w[1].p_hat <= w[0].p_hat || w[1].ci_low <= w[0].ci_high);
    Ok(TailTable {
        l_fn: l_fn.to_string(),
        rows,
        nonincreasing,
    })
}
