use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Result, SolverError};
use crate::grid::{make_grid, Field, Grid};
use crate::noise::{make_noise, power_law_sigma, NoiseKind, NoiseModel};
use crate::operators::EpsilonSplit;
use crate::reference::ReferenceConfig;
use crate::splitting::SplitConfig;

/// Growth function `l(n)` of the tail threshold `l(n) / sqrt(n)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GrowthFn {
    /// `ln(1 + n)`
    Log,
    /// `sqrt(ln(1 + n))`
    SqrtLog,
    /// `n^alpha`, alpha > 0
    Power(f64),
}

impl GrowthFn {
    pub fn eval(self, n: usize) -> f64 {
        let n = n as f64;
        match self {
            GrowthFn::Log => n.ln_1p(),
            GrowthFn::SqrtLog => n.ln_1p().sqrt(),
            GrowthFn::Power(a) => n.powf(a),
        }
    }
}

impl FromStr for GrowthFn {
    type Err = SolverError;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s {
            "log" => return Ok(GrowthFn::Log),
            "sqrt-log" => return Ok(GrowthFn::SqrtLog),
            _ => {}
        }
        let alpha = s
            .strip_prefix("power:")
            .and_then(|a| a.trim().parse::<f64>().ok())
            .ok_or_else(|| {
                SolverError::InvalidConfig(format!(
                    "unknown growth function `{s}` (log, sqrt-log, power:<alpha>)"
                ))
            })?;
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(SolverError::InvalidConfig(format!(
                "l(n) = n^{alpha} does not tend to infinity"
            )));
        }
        Ok(GrowthFn::Power(alpha))
    }
}

impl fmt::Display for GrowthFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GrowthFn::Log => write!(f, "log"),
            GrowthFn::SqrtLog => write!(f, "sqrt-log"),
            GrowthFn::Power(a) => write!(f, "power:{a}"),
        }
    }
}

impl Serialize for GrowthFn {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for GrowthFn {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Threshold for one of the stopping-time monitors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Threshold {
    /// Four times the 95th percentile of the monitored integral at the smallest `n`.
    Auto,
    /// `N(n) = ln ln l(n)`, `M(n) = ln ln ln l(n)`.
    IteratedLog,
    Fixed(f64),
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ThresholdRepr {
    Number(f64),
    Name(String),
}

impl<'de> Deserialize<'de> for Threshold {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        match ThresholdRepr::deserialize(d)? {
            ThresholdRepr::Number(x) if x > 0.0 => Ok(Threshold::Fixed(x)),
            ThresholdRepr::Number(x) => Err(serde::de::Error::custom(format!(
                "threshold must be positive, got {x}"
            ))),
            ThresholdRepr::Name(s) => match s.as_str() {
                "auto" => Ok(Threshold::Auto),
                "iterated-log" => Ok(Threshold::IteratedLog),
                "inf" | "infinity" => Ok(Threshold::Fixed(f64::INFINITY)),
                _ => Err(serde::de::Error::custom(format!(
                    "threshold must be a number, `auto` or `iterated-log`, got `{s}`"
                ))),
            },
        }
    }
}

impl Serialize for Threshold {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Threshold::Auto => s.serialize_str("auto"),
            Threshold::IteratedLog => s.serialize_str("iterated-log"),
            Threshold::Fixed(x) if x.is_infinite() => s.serialize_str("inf"),
            Threshold::Fixed(x) => s.serialize_f64(*x),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    #[serde(rename = "L")]
    pub length: f64,
    #[serde(rename = "h")]
    pub depth: f64,
    #[serde(rename = "Nx")]
    pub nx: usize,
    #[serde(rename = "Nz")]
    pub nz: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    pub kind: NoiseKind,
    #[serde(rename = "m_W")]
    pub m_w: usize,
    /// Explicit amplitudes; when absent `sigma_i = amplitude * i^-decay`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<Vec<f64>>,
    #[serde(default = "default_amplitude")]
    pub amplitude: f64,
    #[serde(default = "default_decay")]
    pub decay: f64,
}

fn default_amplitude() -> f64 {
    0.05
}

fn default_decay() -> f64 {
    2.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitSection {
    /// `|v_0|`.
    pub amplitude: f64,
    /// Modes `(k, m)` sharing the amplitude equally.
    pub modes: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeSection {
    #[serde(rename = "T")]
    pub horizon: f64,
    pub eps: f64,
    pub n_list: Vec<usize>,
    pub micro_steps: usize,
    #[serde(default = "yes")]
    pub nonlinear: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RefSection {
    pub n_ref_factor: usize,
    #[serde(default = "two")]
    pub micro_steps: usize,
}

fn two() -> usize {
    2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudySection {
    pub paths: usize,
    pub seed: u64,
    #[serde(rename = "M")]
    pub big_m: Threshold,
    #[serde(rename = "N")]
    pub big_n: Threshold,
    pub l_fn: GrowthFn,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    pub grid: GridSection,
    pub noise: NoiseSection,
    pub init: InitSection,
    pub scheme: SchemeSection,
    #[serde(rename = "ref")]
    pub reference: RefSection,
    pub study: StudySection,
}

impl Default for StudyConfig {
    fn default() -> Self {
        use std::f64::consts::PI;
        StudyConfig {
            grid: GridSection {
                length: 8.0 * PI,
                depth: 8.0 * PI,
                nx: 32,
                nz: 16,
            },
            noise: NoiseSection {
                kind: NoiseKind::Additive,
                m_w: 16,
                sigma: None,
                amplitude: default_amplitude(),
                decay: default_decay(),
            },
            init: InitSection {
                amplitude: 0.1,
                modes: vec![(1, 1), (2, 1), (1, 2)],
            },
            scheme: SchemeSection {
                horizon: 0.5,
                eps: 0.0,
                n_list: vec![4, 8, 16, 32, 64],
                micro_steps: 8,
                nonlinear: true,
            },
            reference: RefSection {
                n_ref_factor: 16,
                micro_steps: 2,
            },
            study: StudySection {
                paths: 32,
                seed: 20_240_917,
                big_m: Threshold::Auto,
                big_n: Threshold::Auto,
                l_fn: GrowthFn::Log,
            },
        }
    }
}

/// The objects a study run is built from.
#[derive(Debug, Clone)]
pub struct StudySetup {
    pub grid: Arc<Grid>,
    pub noise: Arc<NoiseModel>,
    pub v0: Field,
}

impl StudyConfig {
    pub fn from_toml_str(text: &str) -> Result<StudyConfig> {
        let cfg: StudyConfig =
            toml::from_str(text).map_err(|e| SolverError::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Load a config file, or the built-in one for `default`. Returns the
    /// config and the exact text it was parsed from.
    pub fn load(source: &str) -> Result<(StudyConfig, String)> {
        if source == "default" {
            let cfg = StudyConfig::default();
            let text = cfg.to_toml();
            return Ok((cfg, text));
        }
        let text = std::fs::read_to_string(Path::new(source))
            .map_err(|e| SolverError::InvalidConfig(format!("cannot read {source}: {e}")))?;
        Ok((StudyConfig::from_toml_str(&text)?, text))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn n_ref(&self) -> usize {
        self.reference.n_ref_factor * self.scheme.n_list.iter().copied().max().unwrap_or(1)
    }

    /// Steps of the shared fine Wiener path: one per reference micro step.
    pub fn fine_steps(&self) -> usize {
        self.n_ref() * self.reference.micro_steps
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(SolverError::InvalidConfig(msg));
        let s = &self.scheme;
        if s.n_list.is_empty() {
            return bad("scheme.n_list is empty".into());
        }
        if s.n_list.windows(2).any(|w| w[0] >= w[1]) || s.n_list[0] == 0 {
            return bad(format!("scheme.n_list must be strictly increasing and positive, got {:?}", s.n_list));
        }
        if s.micro_steps == 0 || self.reference.micro_steps == 0 || self.reference.n_ref_factor == 0 {
            return bad("micro-step counts and ref.n_ref_factor must be at least 1".into());
        }
        if !(s.horizon.is_finite() && s.horizon > 0.0) {
            return bad(format!("scheme.T must be positive, got {}", s.horizon));
        }
        EpsilonSplit::new(s.eps)?;
        let n_ref = self.n_ref();
        let fine = self.fine_steps();
        for &n in &s.n_list {
            if n_ref % n != 0 {
                return bad(format!("n = {n} does not divide n_ref = {n_ref}"));
            }
            if fine % (n * s.micro_steps) != 0 {
                return bad(format!(
                    "scheme micro grid of n = {n} is not nested in the reference grid"
                ));
            }
        }
        if self.study.paths == 0 {
            return bad("study.paths must be at least 1".into());
        }
        if self.noise.m_w == 0 {
            return bad("noise.m_W must be at least 1".into());
        }
        if let Some(sigma) = &self.noise.sigma {
            if sigma.len() != self.noise.m_w {
                return bad(format!(
                    "noise.sigma has {} entries but m_W = {}",
                    sigma.len(),
                    self.noise.m_w
                ));
            }
        }
        if !(self.init.amplitude.is_finite() && self.init.amplitude >= 0.0) {
            return bad("init.amplitude must be finite and nonnegative".into());
        }
        if self.init.modes.iter().any(|&(k, m)| k == 0 || m == 0) {
            return bad("init.modes must be admissible: k >= 1 and m >= 1".into());
        }
        Ok(())
    }

    pub fn sigma(&self) -> Vec<f64> {
        self.noise
            .sigma
            .clone()
            .unwrap_or_else(|| power_law_sigma(self.noise.amplitude, self.noise.decay, self.noise.m_w))
    }

    pub fn setup(&self) -> Result<StudySetup> {
        self.validate()?;
        let g = &self.grid;
        let grid = make_grid(g.length, g.depth, g.nx, g.nz)?;
        let noise = Arc::new(make_noise(self.noise.kind, self.noise.m_w, &self.sigma(), &grid)?);
        let mut v0 = Field::zeros(&grid);
        let count = self.init.modes.len().max(1) as f64;
        for &(k, m) in &self.init.modes {
            let e = Field::unit_mode(&grid, k, m)?;
            v0.axpy(self.init.amplitude / count.sqrt(), &e);
        }
        Ok(StudySetup { grid, noise, v0 })
    }

    pub fn split_config(&self, setup: &StudySetup, n: usize) -> Result<SplitConfig> {
        Ok(SplitConfig {
            horizon: self.scheme.horizon,
            intervals: n,
            eps: EpsilonSplit::new(self.scheme.eps)?,
            micro_steps: self.scheme.micro_steps,
            nonlinear: self.scheme.nonlinear,
            v0: setup.v0.clone(),
            noise: setup.noise.clone(),
        })
    }

    pub fn reference_config(&self, setup: &StudySetup) -> ReferenceConfig {
        ReferenceConfig {
            horizon: self.scheme.horizon,
            n_ref: self.n_ref(),
            micro_steps: self.reference.micro_steps,
            nonlinear: self.scheme.nonlinear,
            v0: setup.v0.clone(),
            noise: setup.noise.clone(),
        }
    }

    /// Seed of path `p`.
    pub fn path_seed(&self, p: usize) -> u64 {
        self.study.seed.wrapping_add(p as u64)
    }
}

/// Git-style content hash: SHA-256 of `"blob <len>\0" + text`, hex encoded.
pub fn config_hash(text: &str) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", text.len()).as_bytes());
    h.update(text.as_bytes());
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}
