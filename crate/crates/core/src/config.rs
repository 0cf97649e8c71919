//! Study configuration: a TOML document of named sections.
//!
//! ```toml
//! [domain]
//! min = [0.0, 0.0, 0.0]
//! max = [1.0, 1.0, 1.0]
//! grid_n = 161
//!
//! [generator]
//! kind = "lattice"
//! spacing = 1.0
//! marks = { kind = "fixed", shape = { kind = "ball", params = { radius = 1.5 } } }
//!
//! [study]
//! epsilons = [0.5, 0.25]
//! ```
//!
//! Every other key is optional; see [`StudyConfig`] for defaults. Unknown
//! keys are rejected.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::homogenize::{Modulation, SolveOptions, Source};
use crate::mpp::GeneratorSpec;
use crate::numerics::Aabb;
use crate::DIM;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSection {
    pub min: [f64; 3],
    pub max: [f64; 3],
    /// Nodes per axis of the study grid.
    #[serde(default = "default_grid_n")]
    pub grid_n: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowSection {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudySection {
    #[serde(default = "default_epsilons")]
    pub epsilons: Vec<f64>,
    #[serde(default)]
    pub base_seed: u64,
    /// Number of realizations per ε.
    #[serde(default = "one")]
    pub seeds: usize,
    #[serde(default = "one_f")]
    pub alpha: f64,
    #[serde(default = "default_m")]
    pub m: f64,
    /// Cells per smallest placed hole radius.
    #[serde(default = "two_f")]
    pub resolve_factor: f64,
    #[serde(default)]
    pub source: Source,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub modulation: Option<Modulation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default)]
    pub jacobi: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeatSection {
    #[serde(default)]
    pub enabled: bool,
    #[serde(default = "default_heat_t")]
    pub t: f64,
    /// Defaults to `t / 64`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_dir")]
    pub dir: String,
    #[serde(default)]
    pub dump_fields: bool,
    /// Record wall-clock times in the CSV (otherwise `wall_ms` is 0 so
    /// that reruns are byte-identical).
    #[serde(default)]
    pub timing: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    /// Richardson extrapolation for grid capacities of non-ball marks.
    #[serde(default)]
    pub extrapolate: bool,
    #[serde(default)]
    pub allow_underresolved: bool,
    #[serde(default)]
    pub fail_fast: bool,
    #[serde(default = "one")]
    pub workers: usize,
    /// Grid nodes per axis for non-ball mark capacities.
    #[serde(default = "default_cap_resolution")]
    pub cap_resolution: usize,
}

/// Full experiment description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    pub domain: DomainSection,
    /// Physical window `W`; defaults to the domain expanded by 1.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<WindowSection>,
    pub generator: GeneratorSpec,
    #[serde(default)]
    pub study: StudySection,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub heat: HeatSection,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default)]
    pub run: RunSection,
}

fn default_grid_n() -> usize {
    65
}
fn default_epsilons() -> Vec<f64> {
    vec![0.5, 0.25]
}
fn one() -> usize {
    1
}
fn one_f() -> f64 {
    1.0
}
fn two_f() -> f64 {
    2.0
}
fn default_m() -> f64 {
    10.0
}
fn default_tol() -> f64 {
    1e-8
}
fn default_max_iter() -> usize {
    20_000
}
fn default_heat_t() -> f64 {
    0.05
}
fn default_dir() -> String {
    "out".into()
}
fn default_cap_resolution() -> usize {
    65
}

impl Default for StudySection {
    fn default() -> Self {
        StudySection {
            epsilons: default_epsilons(),
            base_seed: 0,
            seeds: 1,
            alpha: 1.0,
            m: default_m(),
            resolve_factor: 2.0,
            source: Source::default(),
            modulation: None,
        }
    }
}

impl Default for SolverSection {
    fn default() -> Self {
        SolverSection {
            tol: default_tol(),
            max_iter: default_max_iter(),
            jacobi: false,
        }
    }
}

impl Default for HeatSection {
    fn default() -> Self {
        HeatSection {
            enabled: false,
            t: default_heat_t(),
            dt: None,
        }
    }
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            dir: default_dir(),
            dump_fields: false,
            timing: false,
        }
    }
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            extrapolate: false,
            allow_underresolved: false,
            fail_fast: false,
            workers: 1,
            cap_resolution: default_cap_resolution(),
        }
    }
}

fn bad(key: &str, why: impl std::fmt::Display) -> Error {
    Error::config(format!("{key}: {why}"))
}

fn check_box(key: &str, min: [f64; 3], max: [f64; 3]) -> Result<Aabb<f64>> {
    Aabb::new(min, max).map_err(|_| bad(key, "min must be componentwise below max, all finite"))
}

impl StudyConfig {
    pub fn domain_box(&self) -> Aabb<f64> {
        Aabb {
            min: self.domain.min,
            max: self.domain.max,
        }
    }

    pub fn window_box(&self) -> Aabb<f64> {
        match &self.window {
            Some(w) => Aabb {
                min: w.min,
                max: w.max,
            },
            None => self.domain_box().expanded(1.0),
        }
    }

    pub fn solve_options(&self) -> SolveOptions {
        SolveOptions {
            tol: self.solver.tol,
            max_iter: self.solver.max_iter,
            jacobi: self.solver.jacobi,
        }
    }

    pub fn heat_dt(&self) -> f64 {
        self.heat.dt.unwrap_or(self.heat.t / 64.0)
    }

    /// Checks every invariant; errors name the offending key.
    pub fn validate(&self) -> Result<()> {
        let domain = check_box("domain", self.domain.min, self.domain.max)?;
        if self.domain.grid_n < 33 {
            return Err(bad(
                "domain.grid_n",
                format!("must be >= 33, got {}", self.domain.grid_n),
            ));
        }
        if let Some(w) = &self.window {
            let window = check_box("window", w.min, w.max)?;
            if !window.contains_box(&domain) {
                return Err(bad("window", "must contain the domain"));
            }
        }
        self.generator.validate().map_err(|e| match e {
            Error::Config(m) => Error::config(format!("generator.{m}")),
            other => other,
        })?;
        let s = &self.study;
        if s.epsilons.is_empty() {
            return Err(bad("study.epsilons", "at least one value is required"));
        }
        for &e in &s.epsilons {
            if !(e > 0.0 && e <= 1.0) {
                return Err(bad(
                    "study.epsilons",
                    format!("values must lie in ]0, 1], got {e}"),
                ));
            }
        }
        if s.seeds == 0 {
            return Err(bad("study.seeds", "must be >= 1"));
        }
        if s.base_seed > i64::MAX as u64 {
            return Err(bad(
                "study.base_seed",
                "must fit in a signed 64-bit integer",
            ));
        }
        let crit = DIM as f64 / (DIM as f64 - 2.0);
        if !(s.alpha > 0.0 && s.alpha < crit) {
            return Err(bad(
                "study.alpha",
                format!("must lie in ]0, {crit}[, got {}", s.alpha),
            ));
        }
        if !(s.m > 1.0 && s.m.is_finite()) {
            return Err(bad("study.m", format!("must exceed 1, got {}", s.m)));
        }
        if !(s.resolve_factor >= 2.0 && s.resolve_factor.is_finite()) {
            return Err(bad(
                "study.resolve_factor",
                format!("must be >= 2, got {}", s.resolve_factor),
            ));
        }
        if let Some(m) = &s.modulation {
            m.validate_on(&self.window_box().expanded(0.0))
                .map_err(|_| bad("study.modulation", "must be positive on the window"))?;
        }
        if !(self.solver.tol > 0.0 && self.solver.tol < 1.0) {
            return Err(bad(
                "solver.tol",
                format!("must lie in ]0, 1[, got {}", self.solver.tol),
            ));
        }
        if self.solver.max_iter == 0 {
            return Err(bad("solver.max_iter", "must be >= 1"));
        }
        if !(self.heat.t > 0.0 && self.heat.t.is_finite()) {
            return Err(bad(
                "heat.t",
                format!("must be positive, got {}", self.heat.t),
            ));
        }
        if let Some(dt) = self.heat.dt {
            if !(dt > 0.0 && dt <= self.heat.t) {
                return Err(bad("heat.dt", format!("must lie in ]0, t], got {dt}")));
            }
        }
        if self.output.dir.is_empty() {
            return Err(bad("output.dir", "must not be empty"));
        }
        if self.run.workers == 0 {
            return Err(bad("run.workers", "must be >= 1"));
        }
        if self.run.cap_resolution < 33 {
            return Err(bad(
                "run.cap_resolution",
                format!("must be >= 33, got {}", self.run.cap_resolution),
            ));
        }
        Ok(())
    }
}

/// Parses and validates a configuration document.
pub fn parse_config(text: &str) -> Result<StudyConfig> {
    let cfg: StudyConfig =
        toml::from_str(text).map_err(|e| Error::config(e.to_string().trim_end().to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

/// Canonical text of a configuration; `parse_config(render_config(c)) == c`.
pub fn render_config(cfg: &StudyConfig) -> Result<String> {
    toml::to_string(cfg).map_err(|e| Error::config(e.to_string()))
}
