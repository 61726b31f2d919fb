//! TOML experiment configuration.

use quench_core::dynamics::{Experiment, SeedBox};
use quench_core::seed::{build_initial_h, PhysicalGrid, SeedParams};
use quench_core::solver::{Boundary, Forcing, Problem, Scheme};
use quench_core::{derive_exponents, Parameters};
use serde::Deserialize;
use std::fmt;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    SpectralTest,
    ProfileCheck,
    Simulate,
    Modes,
    Shoot,
    FinalProfile,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::SpectralTest => "spectral-test",
            ExperimentKind::ProfileCheck => "profile-check",
            ExperimentKind::Simulate => "simulate",
            ExperimentKind::Modes => "modes",
            ExperimentKind::Shoot => "shoot",
            ExperimentKind::FinalProfile => "final-profile",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ForcingKind {
    PurePower,
    Vortex,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundaryKind {
    Dirichlet,
    Neumann,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitialData {
    /// The perturbed intermediate profile.
    Prepared,
    /// Constant data `flat_value`.
    Flat,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Model {
    pub beta: f64,
    pub alpha: f64,
    pub forcing: ForcingKind,
    pub vortex_h0: f64,
}

impl Default for Model {
    fn default() -> Self {
        Model { beta: 1.0, alpha: 1.0, forcing: ForcingKind::PurePower, vortex_h0: 0.0 }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Grid {
    pub x_min: f64,
    pub x_max: f64,
    pub n: usize,
    pub boundary: BoundaryKind,
}

impl Default for Grid {
    fn default() -> Self {
        let g = PhysicalGrid::default();
        Grid { x_min: g.x_min, x_max: g.x_max, n: g.n, boundary: BoundaryKind::Dirichlet }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SchemeConfig {
    pub c_cfl: f64,
    pub c_stiff: f64,
    pub dt_max: f64,
    pub quench_threshold: f64,
    pub max_halvings: u32,
    pub max_steps: usize,
}

impl Default for SchemeConfig {
    fn default() -> Self {
        let s = Scheme::default();
        SchemeConfig {
            c_cfl: s.c_cfl,
            c_stiff: s.c_stiff,
            dt_max: s.dt_max,
            quench_threshold: s.quench_threshold,
            max_halvings: s.max_halvings,
            max_steps: s.max_steps,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ShrinkingSet {
    pub k0: f64,
    pub a: f64,
    pub eps0: f64,
    pub alpha0: f64,
    pub delta0: f64,
    pub c0: f64,
    pub eta0: f64,
    pub alpha_under: f64,
    pub alpha_bar: f64,
    pub rho0: f64,
    pub profile_cap: f64,
    pub aggregate_c: f64,
}

impl Default for ShrinkingSet {
    fn default() -> Self {
        let p = Parameters::new(1.0, 1.0).expect("default exponents");
        ShrinkingSet {
            k0: p.k0,
            a: p.a_box,
            eps0: p.eps0,
            alpha0: p.alpha0,
            delta0: p.delta0,
            c0: p.c0,
            eta0: p.eta0,
            alpha_under: p.alpha_under,
            alpha_bar: p.alpha_bar,
            rho0: p.rho0,
            profile_cap: p.profile_cap,
            aggregate_c: 1.0,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Seed {
    pub data: InitialData,
    pub flat_value: f64,
    pub d0: f64,
    pub d1: f64,
    /// Defaults to `T - e^(-6)`.
    pub t0: Option<f64>,
    #[serde(rename = "T")]
    pub t_quench: f64,
}

impl Default for Seed {
    fn default() -> Self {
        Seed { data: InitialData::Prepared, flat_value: 1.0, d0: 0.0, d1: 0.0, t0: None, t_quench: 0.1 }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Window {
    /// Last similarity time; defaults to `s0 + 3`.
    pub s_end: Option<f64>,
    pub audit_ds: f64,
    pub snapshot_ds: f64,
    pub dy_max: f64,
    pub n_xi: usize,
    pub n_r2: usize,
    /// Stop time of `simulate`; unset runs to quenching.
    pub t_end: Option<f64>,
    pub ratio_points: usize,
    pub profile_k: f64,
}

impl Default for Window {
    fn default() -> Self {
        Window {
            s_end: None,
            audit_ds: 0.1,
            snapshot_ds: 0.05,
            dy_max: 0.08,
            n_xi: 11,
            n_r2: 8,
            t_end: None,
            ratio_points: 25,
            profile_k: 4.0,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Shoot {
    pub levels: usize,
    pub d0_min: f64,
    pub d0_max: f64,
    pub d1_min: f64,
    pub d1_max: f64,
    pub freeze_d1: bool,
}

impl Default for Shoot {
    fn default() -> Self {
        Shoot { levels: 8, d0_min: -0.3, d0_max: 0.5, d1_min: -1.0, d1_max: 1.0, freeze_d1: false }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub experiment: Option<ExperimentKind>,
    pub output: Option<PathBuf>,
    pub model: Model,
    pub grid: Grid,
    pub scheme: SchemeConfig,
    pub shrinking_set: ShrinkingSet,
    pub seed: Seed,
    pub window: Window,
    pub shoot: Shoot,
}

/// Invalid configuration, with the place it came from.
#[derive(Debug)]
pub struct ConfigError {
    pub origin: String,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.origin, self.message)
    }
}

impl std::error::Error for ConfigError {}

/// One `KEY=VALUE` assignment from the command line.
#[derive(Debug, Clone)]
pub struct Override {
    pub key: String,
    pub value: String,
    /// The flag it came from, for error messages.
    pub flag: String,
}

impl Override {
    pub fn parse(raw: &str) -> Result<Self, ConfigError> {
        match raw.split_once('=') {
            Some((k, v)) if !k.trim().is_empty() => {
                Ok(Override { key: k.trim().to_string(), value: v.trim().to_string(), flag: format!("--override {raw}") })
            }
            _ => Err(ConfigError { origin: format!("--override {raw}"), message: "expected KEY=VALUE".into() }),
        }
    }
}

/// Where each value came from, for error messages.
struct Source<'a> {
    path: Option<&'a Path>,
    text: &'a str,
    overrides: &'a [Override],
}

impl Source<'_> {
    fn name(&self) -> String {
        self.path.map(|p| p.display().to_string()).unwrap_or_else(|| "<defaults>".into())
    }

    fn line_of_offset(&self, offset: usize) -> usize {
        self.text[..offset.min(self.text.len())].matches('\n').count() + 1
    }

    /// Line of `key` inside `[section]` (top level when `section` is empty).
    fn line_of_key(&self, section: &str, key: &str) -> Option<usize> {
        let mut current = String::new();
        for (i, raw) in self.text.lines().enumerate() {
            let line = raw.trim();
            if let Some(rest) = line.strip_prefix('[') {
                current = rest.trim_end_matches(']').trim().to_string();
                continue;
            }
            let Some((k, _)) = line.split_once('=') else { continue };
            let k = k.trim().trim_matches('"');
            if current == section && k == key {
                return Some(i + 1);
            }
        }
        None
    }

    fn error(&self, section: &str, key: &str, message: impl Into<String>) -> ConfigError {
        let dotted = if section.is_empty() { key.to_string() } else { format!("{section}.{key}") };
        let origin = if let Some(o) = self.overrides.iter().rev().find(|o| o.key == dotted) {
            o.flag.clone()
        } else if let Some(line) = self.line_of_key(section, key) {
            format!("{}:{line}", self.name())
        } else {
            format!("{} (default {dotted})", self.name())
        };
        ConfigError { origin, message: format!("{dotted}: {}", message.into()) }
    }
}

fn override_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

fn apply_override(table: &mut toml::Table, key: &str, value: toml::Value, origin: &str) -> Result<(), ConfigError> {
    let parts: Vec<&str> = key.split('.').collect();
    let (last, path) = parts.split_last().expect("split yields one part");
    let mut node = table;
    for part in path {
        let entry = node.entry(part.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        node = entry.as_table_mut().ok_or_else(|| ConfigError {
            origin: origin.to_string(),
            message: format!("{part} is not a section"),
        })?;
    }
    node.insert(last.to_string(), value);
    Ok(())
}

/// Read `path` (or the defaults), apply overrides, and validate. When
/// `expected` is given, an `experiment` key must agree with it.
pub fn load(path: Option<&Path>, overrides: &[Override], expected: Option<ExperimentKind>) -> Result<Config, ConfigError> {
    let text = match path {
        Some(p) => std::fs::read_to_string(p).map_err(|e| ConfigError { origin: p.display().to_string(), message: e.to_string() })?,
        None => String::new(),
    };
    let src = Source { path, text: &text, overrides };

    let located = |e: toml::de::Error| {
        let origin = match e.span() {
            Some(span) => format!("{}:{}", src.name(), src.line_of_offset(span.start)),
            None => src.name(),
        };
        ConfigError { origin, message: e.message().to_string() }
    };
    toml::from_str::<Config>(&text).map_err(located)?;
    let mut table: toml::Table = toml::from_str(&text).map_err(located)?;
    for o in overrides {
        apply_override(&mut table, &o.key, override_value(&o.value), &o.flag)?;
    }
    let config = Config::deserialize(toml::Value::Table(table)).map_err(|e| {
        let origin = overrides.iter().map(|o| o.flag.as_str()).collect::<Vec<_>>().join(" ");
        ConfigError { origin, message: e.message().to_string() }
    })?;
    if let (Some(want), Some(got)) = (expected, config.experiment) {
        if want != got {
            return Err(src.error("", "experiment", format!("config is for {}, not {}", got.name(), want.name())));
        }
    }
    config.validate(&src)?;
    Ok(config)
}

impl Config {
    pub fn t0(&self) -> f64 {
        self.seed.t0.unwrap_or(self.seed.t_quench - (-6.0f64).exp())
    }

    pub fn s0(&self) -> f64 {
        -(self.seed.t_quench - self.t0()).ln()
    }

    pub fn s_end(&self) -> f64 {
        self.window.s_end.unwrap_or(self.s0() + 3.0)
    }

    pub fn seed_box(&self) -> SeedBox {
        SeedBox { d0: (self.shoot.d0_min, self.shoot.d0_max), d1: (self.shoot.d1_min, self.shoot.d1_max) }
    }

    pub fn physical_grid(&self) -> PhysicalGrid {
        PhysicalGrid { x_min: self.grid.x_min, x_max: self.grid.x_max, n: self.grid.n }
    }

    pub fn seed_params(&self) -> SeedParams {
        SeedParams { d0: self.seed.d0, d1: self.seed.d1, t0: self.t0() }
    }

    pub fn parameters(&self) -> quench_core::Result<Parameters> {
        let mut p = Parameters::new(self.model.beta, self.model.alpha)?;
        let s = &self.shrinking_set;
        p.t_quench = self.seed.t_quench;
        p.k0 = s.k0;
        p.a_box = s.a;
        p.eps0 = s.eps0;
        p.alpha0 = s.alpha0;
        p.delta0 = s.delta0;
        p.c0 = s.c0;
        p.eta0 = s.eta0;
        p.alpha_under = s.alpha_under;
        p.alpha_bar = s.alpha_bar;
        p.rho0 = s.rho0;
        p.profile_cap = s.profile_cap;
        p.validate()?;
        Ok(p)
    }

    pub fn problem(&self) -> quench_core::Result<Problem> {
        let mut problem = Problem::new(self.parameters()?);
        problem.forcing = match self.model.forcing {
            ForcingKind::PurePower => Forcing::PurePower,
            ForcingKind::Vortex => Forcing::Vortex { h0: self.model.vortex_h0 },
        };
        problem.boundary = match self.grid.boundary {
            BoundaryKind::Dirichlet => Boundary::Dirichlet,
            BoundaryKind::Neumann => Boundary::Neumann,
        };
        let s = &self.scheme;
        problem.scheme = Scheme {
            c_cfl: s.c_cfl,
            c_stiff: s.c_stiff,
            dt_max: s.dt_max,
            quench_threshold: s.quench_threshold,
            max_halvings: s.max_halvings,
            max_steps: s.max_steps,
        };
        Ok(problem)
    }

    pub fn experiment(&self) -> quench_core::Result<Experiment> {
        let problem = self.problem()?;
        let mut exp = Experiment::new(problem.params.clone(), self.t0(), self.s_end());
        exp.problem = problem;
        exp.grid = self.physical_grid();
        exp.audit_ds = self.window.audit_ds;
        exp.dy_max = self.window.dy_max;
        exp.n_xi = self.window.n_xi;
        exp.n_r2 = self.window.n_r2;
        exp.aggregate_c = self.shrinking_set.aggregate_c;
        Ok(exp)
    }

    fn validate(&self, src: &Source) -> Result<(), ConfigError> {
        let m = &self.model;
        for (key, v) in [("beta", m.beta), ("alpha", m.alpha)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(src.error("model", key, format!("must be positive, got {v}")));
            }
        }
        let ex = derive_exponents(m.beta, m.alpha).map_err(|e| src.error("model", "beta", e.to_string()))?;
        if !(1.0 < ex.a && ex.a < ex.p) {
            return Err(src.error("model", "alpha", format!("need 1 < a < p, got a={}, p={}", ex.a, ex.p)));
        }
        if !m.vortex_h0.is_finite() || m.vortex_h0 < 0.0 {
            return Err(src.error("model", "vortex_h0", "must be non-negative"));
        }

        let g = &self.grid;
        if g.n < 5 {
            return Err(src.error("grid", "n", format!("need at least 5 nodes, got {}", g.n)));
        }
        if !(g.x_min.is_finite() && g.x_max.is_finite() && g.x_min < g.x_max) {
            return Err(src.error("grid", "x_max", format!("need x_min < x_max, got [{}, {}]", g.x_min, g.x_max)));
        }

        let s = &self.scheme;
        for (key, v) in [("c_cfl", s.c_cfl), ("c_stiff", s.c_stiff), ("dt_max", s.dt_max), ("quench_threshold", s.quench_threshold)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(src.error("scheme", key, format!("must be positive, got {v}")));
            }
        }
        if s.c_cfl > 0.5 {
            return Err(src.error("scheme", "c_cfl", format!("explicit stepping needs c_cfl <= 0.5, got {}", s.c_cfl)));
        }
        if s.max_steps == 0 {
            return Err(src.error("scheme", "max_steps", "must be positive"));
        }

        let k = &self.shrinking_set;
        let positive = [
            ("k0", k.k0),
            ("a", k.a),
            ("eps0", k.eps0),
            ("alpha0", k.alpha0),
            ("delta0", k.delta0),
            ("c0", k.c0),
            ("eta0", k.eta0),
            ("rho0", k.rho0),
            ("profile_cap", k.profile_cap),
            ("aggregate_c", k.aggregate_c),
        ];
        for (key, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(src.error("shrinking_set", key, format!("must be positive, got {v}")));
            }
        }
        if k.alpha_under <= 3.0 {
            return Err(src.error("shrinking_set", "alpha_under", format!("must exceed 3, got {}", k.alpha_under)));
        }
        if k.alpha_bar < k.alpha_under + 1.0 {
            return Err(src.error("shrinking_set", "alpha_bar", format!("must be at least alpha_under + 1, got {}", k.alpha_bar)));
        }

        let sd = &self.seed;
        if !(sd.t_quench > 0.0 && sd.t_quench < (-1.0f64).exp()) {
            return Err(src.error("seed", "T", format!("must lie in (0, 1/e), got {}", sd.t_quench)));
        }
        let t0 = self.t0();
        if !(t0 > 0.0 && t0 < sd.t_quench) {
            return Err(src.error("seed", "t0", format!("must lie in (0, T), got {t0}")));
        }
        if !(sd.flat_value > 0.0 && sd.flat_value.is_finite()) {
            return Err(src.error("seed", "flat_value", format!("must be positive, got {}", sd.flat_value)));
        }
        for (key, v) in [("d0", sd.d0), ("d1", sd.d1)] {
            if v.is_nan() || v.abs() > 1.0 {
                return Err(src.error("seed", key, format!("must lie in [-1, 1], got {v}")));
            }
        }

        let w = &self.window;
        for (key, v) in [("audit_ds", w.audit_ds), ("snapshot_ds", w.snapshot_ds), ("dy_max", w.dy_max), ("profile_k", w.profile_k)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(src.error("window", key, format!("must be positive, got {v}")));
            }
        }
        if self.s_end() <= self.s0() {
            return Err(src.error("window", "s_end", format!("must exceed s0 = {}", self.s0())));
        }
        if let Some(t_end) = w.t_end {
            if !(t_end > 0.0 && t_end.is_finite()) {
                return Err(src.error("window", "t_end", format!("must be positive, got {t_end}")));
            }
        }
        if w.n_xi < 3 {
            return Err(src.error("window", "n_xi", "need at least 3 points"));
        }
        if w.n_r2 == 0 {
            return Err(src.error("window", "n_r2", "must be positive"));
        }
        if w.ratio_points < 2 {
            return Err(src.error("window", "ratio_points", "need at least 2 points"));
        }

        let sh = &self.shoot;
        if !(sh.d0_min < sh.d0_max && sh.d0_min >= -1.0 && sh.d0_max <= 1.0) {
            return Err(src.error("shoot", "d0_max", format!("need -1 <= d0_min < d0_max <= 1, got [{}, {}]", sh.d0_min, sh.d0_max)));
        }
        if !(sh.d1_min < sh.d1_max && sh.d1_min >= -1.0 && sh.d1_max <= 1.0) {
            return Err(src.error("shoot", "d1_max", format!("need -1 <= d1_min < d1_max <= 1, got [{}, {}]", sh.d1_min, sh.d1_max)));
        }

        let params = self.parameters().map_err(|e| src.error("shrinking_set", "k0", e.to_string()))?;
        if sd.data == InitialData::Prepared {
            build_initial_h(&self.seed_params(), &params, self.physical_grid()).map_err(|e| src.error("seed", "d0", e.to_string()))?;
        }
        Ok(())
    }
}
