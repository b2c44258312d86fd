//! Flat run configuration: one `section.key = value` assignment per line,
//! `#` starts a comment. Every error names the offending line.

use std::collections::HashMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use mqs_core::cspe::{AppendRule, StartStrategy};
use mqs_core::implicit::NewtonConfig;
use mqs_core::problem::{MassMode, MaterialModel, PlateGeometry, SourceWaveform};
use mqs_core::schur::StepperConfig;
use mqs_core::sparse::DEFAULT_SEED;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub struct ConfigError {
    pub path: PathBuf,
    pub line: Option<usize>,
    pub msg: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "{}:{l}: {}", self.path.display(), self.msg),
            None => write!(f, "{}: {}", self.path.display(), self.msg),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Entry {
    value: String,
    line: usize,
}

/// Parsed but untyped assignments.
#[derive(Debug, Clone)]
pub struct RawConfig {
    path: PathBuf,
    entries: HashMap<String, Entry>,
    order: Vec<String>,
}

/// Keys under this prefix are derived outputs (metadata files) and ignored.
const DERIVED_PREFIX: &str = "derived.";

impl RawConfig {
    pub fn parse(text: &str, path: impl Into<PathBuf>) -> Result<Self, ConfigError> {
        let path = path.into();
        let mut entries: HashMap<String, Entry> = HashMap::new();
        let mut order = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let err = |msg: String| ConfigError {
                path: path.clone(),
                line: Some(line),
                msg,
            };
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let Some((key, value)) = content.split_once('=') else {
                return Err(err(format!("expected 'key = value', got '{content}'")));
            };
            let (key, value) = (key.trim(), value.trim());
            let valid_key = !key.is_empty()
                && !key.starts_with('.')
                && !key.ends_with('.')
                && key
                    .chars()
                    .all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_' || c == '.');
            if !valid_key {
                return Err(err(format!("invalid key '{key}'")));
            }
            if value.is_empty() {
                return Err(err(format!("missing value for '{key}'")));
            }
            if key.starts_with(DERIVED_PREFIX) {
                continue;
            }
            if let Some(prev) = entries.get(key) {
                return Err(err(format!("duplicate key '{key}' (first set on line {})", prev.line)));
            }
            entries.insert(
                key.to_string(),
                Entry {
                    value: value.to_string(),
                    line,
                },
            );
            order.push(key.to_string());
        }
        Ok(Self { path, entries, order })
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
            path: path.to_path_buf(),
            line: None,
            msg: format!("cannot read config: {e}"),
        })?;
        Self::parse(&text, path)
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

/// Typed lookups that remember which keys were consumed.
struct Reader<'a> {
    raw: &'a RawConfig,
    used: Vec<&'a str>,
}

impl<'a> Reader<'a> {
    fn new(raw: &'a RawConfig) -> Self {
        Self { raw, used: Vec::new() }
    }

    fn error(&self, key: &str, msg: String) -> ConfigError {
        ConfigError {
            path: self.raw.path.clone(),
            line: self.raw.entries.get(key).map(|e| e.line),
            msg,
        }
    }

    fn raw(&mut self, key: &'a str) -> Option<&'a str> {
        let e = self.raw.entries.get(key)?;
        self.used.push(key);
        Some(e.value.as_str())
    }

    fn parsed<T: FromStr>(&mut self, key: &'a str, what: &str) -> Result<Option<T>, ConfigError> {
        match self.raw(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| self.error(key, format!("'{key}' expects {what}, got '{v}'"))),
        }
    }

    fn float(&mut self, key: &'a str, default: f64) -> Result<f64, ConfigError> {
        let v: f64 = self.parsed(key, "a number")?.unwrap_or(default);
        if !v.is_finite() {
            return Err(self.error(key, format!("'{key}' must be finite")));
        }
        Ok(v)
    }

    /// Number in the open interval `(lo, hi)`.
    fn float_in(&mut self, key: &'a str, default: f64, lo: f64, hi: f64) -> Result<f64, ConfigError> {
        let v = self.float(key, default)?;
        if !(v > lo && v < hi) {
            let range = match (lo, hi) {
                (lo, f64::INFINITY) => format!("> {lo}"),
                (lo, hi) => format!("in ({lo}, {hi})"),
            };
            return Err(self.error(key, format!("'{key}' must be {range}, got {v}")));
        }
        Ok(v)
    }

    fn count(&mut self, key: &'a str, default: usize, min: usize) -> Result<usize, ConfigError> {
        let v = self.parsed(key, "a non-negative integer")?.unwrap_or(default);
        if v < min {
            return Err(self.error(key, format!("'{key}' must be >= {min}, got {v}")));
        }
        Ok(v)
    }

    fn flag(&mut self, key: &'a str, default: bool) -> Result<bool, ConfigError> {
        Ok(self.parsed(key, "true or false")?.unwrap_or(default))
    }

    fn choice<T: Copy>(&mut self, key: &'a str, default: T, options: &[(&str, T)]) -> Result<T, ConfigError> {
        let Some(v) = self.raw(key) else {
            return Ok(default);
        };
        options
            .iter()
            .find(|(name, _)| *name == v)
            .map(|(_, t)| *t)
            .ok_or_else(|| {
                let names: Vec<&str> = options.iter().map(|(n, _)| *n).collect();
                self.error(key, format!("'{key}' must be one of {}, got '{v}'", names.join(", ")))
            })
    }

    fn list<T: FromStr>(&mut self, key: &'a str, default: Vec<T>, what: &str) -> Result<Vec<T>, ConfigError> {
        let Some(v) = self.raw(key) else {
            return Ok(default);
        };
        let items: Result<Vec<T>, _> = v.split(',').map(|s| s.trim().parse::<T>()).collect();
        let items = items.map_err(|_| {
            self.error(
                key,
                format!("'{key}' expects a comma-separated list of {what}, got '{v}'"),
            )
        })?;
        if items.is_empty() {
            return Err(self.error(key, format!("'{key}' must not be empty")));
        }
        Ok(items)
    }

    /// Rejects keys of a section that does not apply.
    fn forbid_prefix(&self, prefix: &str, why: &str) -> Result<(), ConfigError> {
        match self.raw.order.iter().find(|k| k.starts_with(prefix)) {
            Some(k) => Err(self.error(k, format!("'{k}' does not apply: {why}"))),
            None => Ok(()),
        }
    }

    fn forbid(&self, keys: &[&str], why: &str) -> Result<(), ConfigError> {
        match keys.iter().find(|k| self.raw.entries.contains_key(**k)) {
            Some(k) => Err(self.error(k, format!("'{k}' does not apply: {why}"))),
            None => Ok(()),
        }
    }

    fn finish(&self) -> Result<(), ConfigError> {
        match self.raw.order.iter().find(|k| !self.used.contains(&k.as_str())) {
            Some(k) => Err(self.error(k, format!("unknown key '{k}'"))),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MaterialSpec {
    Linear { mu_r: f64 },
    Brauer { k1: f64, k2: f64, k3: f64 },
}

impl MaterialSpec {
    pub fn model(&self) -> MaterialModel {
        match *self {
            MaterialSpec::Linear { mu_r } => MaterialModel::linear_relative(mu_r).expect("mu_r validated"),
            MaterialSpec::Brauer { k1, k2, k3 } => MaterialModel::brauer(k1, k2, k3).expect("coefficients validated"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ProblemSpec {
    Slab {
        n_cells: usize,
        length: f64,
        slab_fraction: f64,
        kappa: f64,
        material: MaterialSpec,
    },
    Plate {
        nx: usize,
        ny: usize,
        geometry: PlateGeometry,
        kappa: f64,
        material: MaterialSpec,
    },
    /// `M.mtx`, `K.mtx`, `source.txt`, `mask.txt` in `dir`.
    MatrixMarket { dir: PathBuf },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverKind {
    ExplicitSchur,
    ImplicitEuler,
}

impl SolverKind {
    pub fn name(&self) -> &'static str {
        match self {
            SolverKind::ExplicitSchur => "explicit_schur",
            SolverKind::ImplicitEuler => "implicit_euler",
        }
    }
}

/// Time step: an explicit value, or `factor * dt_max` from the CFL estimate
/// at the initial state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DtSpec {
    Fixed(f64),
    Auto { factor: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepGrid {
    pub tol_pcg: Vec<f64>,
    pub n_cg_acc: Vec<usize>,
}

impl Default for SweepGrid {
    fn default() -> Self {
        Self {
            tol_pcg: vec![1e-8, 1e-7, 1e-6],
            n_cg_acc: vec![1, 3, 5],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub source_path: PathBuf,
    pub problem: ProblemSpec,
    pub waveform: SourceWaveform,
    pub solver: SolverKind,
    pub t_end: f64,
    pub dt: DtSpec,
    /// `dt` is overwritten once the time step is resolved.
    pub stepper: StepperConfig,
    pub newton: NewtonConfig,
    pub output_stride: usize,
    pub sweep: SweepGrid,
    pub seed: u64,
}

const MASS_MODES: &[(&str, MassMode)] = &[("consistent", MassMode::Consistent), ("lumped", MassMode::Lumped)];
const STARTS: &[(&str, StartStrategy)] = &[("previous", StartStrategy::Previous), ("zero", StartStrategy::Zero)];
const RULES: &[(&str, AppendRule)] = &[
    ("conjunctive", AppendRule::Conjunctive),
    ("threshold_only", AppendRule::ThresholdOnly),
];

fn name_of<T: PartialEq>(options: &[(&'static str, T)], v: &T) -> &'static str {
    options
        .iter()
        .find(|(_, t)| t == v)
        .map(|(n, _)| *n)
        .expect("value comes from the table")
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        Self::from_raw(&RawConfig::from_file(path)?)
    }

    pub fn parse(text: &str, path: impl Into<PathBuf>) -> Result<Self, ConfigError> {
        Self::from_raw(&RawConfig::parse(text, path)?)
    }

    pub fn from_raw(raw: &RawConfig) -> Result<Self, ConfigError> {
        let mut r = Reader::new(raw);
        #[derive(Clone, Copy, PartialEq)]
        enum Kind {
            Slab,
            Plate,
            Mm,
        }
        let kind = r.choice(
            "problem.kind",
            Kind::Slab,
            &[
                ("slab", Kind::Slab),
                ("plate", Kind::Plate),
                ("matrix_market", Kind::Mm),
            ],
        )?;

        let material = |r: &mut Reader<'_>| -> Result<MaterialSpec, ConfigError> {
            let brauer = r.choice("problem.material", false, &[("linear", false), ("brauer", true)])?;
            if brauer {
                r.forbid(&["problem.mu_r"], "problem.material = brauer")?;
                let d = MaterialModel::brauer_default();
                let MaterialModel::Brauer { k1, k2, k3 } = d else {
                    unreachable!()
                };
                Ok(MaterialSpec::Brauer {
                    k1: r.float_in("problem.brauer.k1", k1, 0.0, f64::INFINITY)?,
                    k2: r.float_in("problem.brauer.k2", k2, 0.0, f64::INFINITY)?,
                    k3: r.float_in("problem.brauer.k3", k3, 0.0, f64::INFINITY)?,
                })
            } else {
                r.forbid_prefix("problem.brauer.", "problem.material = linear")?;
                Ok(MaterialSpec::Linear {
                    mu_r: r.float_in("problem.mu_r", 100.0, 0.0, f64::INFINITY)?,
                })
            }
        };

        let problem = match kind {
            Kind::Slab => {
                r.forbid_prefix("problem.plate.", "problem.kind = slab")?;
                r.forbid(&["problem.nx", "problem.ny", "problem.dir"], "problem.kind = slab")?;
                ProblemSpec::Slab {
                    n_cells: r.count("problem.n_cells", 128, 8)?,
                    length: r.float_in("problem.length", 0.1, 0.0, f64::INFINITY)?,
                    slab_fraction: r.float_in("problem.slab_fraction", 0.25, 0.0, 1.0)?,
                    kappa: r.float_in("problem.kappa", 5.96e7, 0.0, f64::INFINITY)?,
                    material: material(&mut r)?,
                }
            }
            Kind::Plate => {
                r.forbid(
                    &[
                        "problem.n_cells",
                        "problem.length",
                        "problem.slab_fraction",
                        "problem.dir",
                    ],
                    "problem.kind = plate",
                )?;
                let d = PlateGeometry::default();
                let pos = f64::INFINITY;
                ProblemSpec::Plate {
                    nx: r.count("problem.nx", 40, 4)?,
                    ny: r.count("problem.ny", 40, 4)?,
                    geometry: PlateGeometry {
                        lx: r.float_in("problem.plate.lx", d.lx, 0.0, pos)?,
                        ly: r.float_in("problem.plate.ly", d.ly, 0.0, pos)?,
                        plate_width: r.float_in("problem.plate.plate_width", d.plate_width, 0.0, pos)?,
                        plate_height: r.float_in("problem.plate.plate_height", d.plate_height, 0.0, pos)?,
                        gap: r.float_in("problem.plate.gap", d.gap, 0.0, pos)?,
                        coil_width: r.float_in("problem.plate.coil_width", d.coil_width, 0.0, pos)?,
                        coil_height: r.float_in("problem.plate.coil_height", d.coil_height, 0.0, pos)?,
                    },
                    kappa: r.float_in("problem.kappa", 7.5e6, 0.0, f64::INFINITY)?,
                    material: material(&mut r)?,
                }
            }
            Kind::Mm => {
                r.forbid_prefix("problem.plate.", "problem.kind = matrix_market")?;
                r.forbid_prefix("problem.brauer.", "imported systems are linear")?;
                r.forbid(
                    &[
                        "problem.n_cells",
                        "problem.length",
                        "problem.slab_fraction",
                        "problem.nx",
                        "problem.ny",
                        "problem.kappa",
                        "problem.material",
                        "problem.mu_r",
                    ],
                    "problem.kind = matrix_market",
                )?;
                let Some(dir) = r.raw("problem.dir") else {
                    return Err(r.error(
                        "problem.kind",
                        "problem.kind = matrix_market needs 'problem.dir'".into(),
                    ));
                };
                let base = raw.path.parent().unwrap_or(Path::new(""));
                ProblemSpec::MatrixMarket { dir: base.join(dir) }
            }
        };

        let amplitude = r.float("problem.source.amplitude", 1e6)?;
        if amplitude < 0.0 {
            return Err(r.error(
                "problem.source.amplitude",
                format!("'problem.source.amplitude' must be >= 0, got {amplitude}"),
            ));
        }
        let tau = r.float_in("problem.source.tau", 2e-3, 0.0, f64::INFINITY)?;
        let waveform = SourceWaveform::new(amplitude, tau).expect("validated above");

        let solver = r.choice(
            "solver.kind",
            SolverKind::ExplicitSchur,
            &[
                ("explicit_schur", SolverKind::ExplicitSchur),
                ("implicit_euler", SolverKind::ImplicitEuler),
            ],
        )?;
        let Some(t_end) = r.parsed::<f64>("solver.t_end", "a number")? else {
            return Err(ConfigError {
                path: raw.path.clone(),
                line: None,
                msg: "missing required key 'solver.t_end'".into(),
            });
        };
        if !(t_end > 0.0 && t_end.is_finite()) {
            return Err(r.error("solver.t_end", format!("'solver.t_end' must be > 0, got {t_end}")));
        }
        let default_factor = match solver {
            SolverKind::ExplicitSchur => 1.0,
            SolverKind::ImplicitEuler => 0.1,
        };
        let dt = match r.raw("solver.dt") {
            None | Some("auto") => DtSpec::Auto {
                factor: r.float_in("solver.dt_factor", default_factor, 0.0, f64::INFINITY)?,
            },
            Some(_) => {
                r.forbid(&["solver.dt_factor"], "solver.dt is fixed")?;
                DtSpec::Fixed(r.float_in("solver.dt", 0.0, 0.0, f64::INFINITY)?)
            }
        };

        let mut stepper = StepperConfig::new(1.0);
        stepper.tol_pcg = r.float_in("stepper.tol_pcg", stepper.tol_pcg, 0.0, 1.0)?;
        stepper.max_pcg_iter = r.count("stepper.max_pcg_iter", stepper.max_pcg_iter, 1)?;
        stepper.n_cg_acc = r.count("stepper.n_cg_acc", stepper.n_cg_acc, 1)?;
        stepper.cspe_enabled = r.flag("stepper.cspe", stepper.cspe_enabled)?;
        stepper.max_subspace = r.count("stepper.max_subspace", stepper.max_subspace, 1)?;
        stepper.mass_mode = r.choice("stepper.mass_mode", stepper.mass_mode, MASS_MODES)?;
        stepper.cfl_recheck_interval = r.count("stepper.cfl_recheck_interval", stepper.cfl_recheck_interval, 0)?;
        stepper.baseline_start = r.choice("stepper.baseline_start", stepper.baseline_start, STARTS)?;
        stepper.append_rule = r.choice("stepper.append_rule", stepper.append_rule, RULES)?;
        stepper.galerkin_audit = r.flag("stepper.galerkin_audit", stepper.galerkin_audit)?;
        stepper.cfl_safety = r.float_in("stepper.cfl_safety", stepper.cfl_safety, 0.0, 1.0 + 1e-12)?;
        stepper.cfl_tol = r.float_in("stepper.cfl_tol", stepper.cfl_tol, 0.0, 1.0)?;
        stepper.record_steps = r.flag("output.record_steps", stepper.record_steps)?;
        let output_stride = r.count("output.stride", 1, 1)?;
        stepper.output_stride = output_stride;

        let d = NewtonConfig::default();
        let newton = NewtonConfig {
            tol_newton: r.float_in("newton.tol_newton", d.tol_newton, 0.0, 1.0)?,
            max_newton_iter: r.count("newton.max_newton_iter", d.max_newton_iter, 1)?,
            tol_linear: r.float_in("newton.tol_linear", d.tol_linear, 0.0, 1.0)?,
            max_linear_iter: r.count("newton.max_linear_iter", d.max_linear_iter, 1)?,
            regularization_eps: {
                let v = r.float("newton.regularization_eps", d.regularization_eps)?;
                if v < 0.0 {
                    return Err(r.error(
                        "newton.regularization_eps",
                        format!("'newton.regularization_eps' must be >= 0, got {v}"),
                    ));
                }
                v
            },
        };

        let g = SweepGrid::default();
        let sweep = SweepGrid {
            tol_pcg: r.list("sweep.tol_pcg", g.tol_pcg, "numbers")?,
            n_cg_acc: r.list("sweep.n_cg_acc", g.n_cg_acc, "integers")?,
        };
        if let Some(t) = sweep.tol_pcg.iter().find(|&&t| !(t > 0.0 && t < 1.0)) {
            return Err(r.error(
                "sweep.tol_pcg",
                format!("'sweep.tol_pcg' entries must lie in (0, 1), got {t}"),
            ));
        }
        if sweep.n_cg_acc.contains(&0) {
            return Err(r.error("sweep.n_cg_acc", "'sweep.n_cg_acc' entries must be >= 1".into()));
        }
        let seed = r.parsed("seed", "a non-negative integer")?.unwrap_or(DEFAULT_SEED);
        stepper.seed = seed;
        r.finish()?;

        Ok(Self {
            source_path: raw.path.clone(),
            problem,
            waveform,
            solver,
            t_end,
            dt,
            stepper,
            newton,
            output_stride,
            sweep,
            seed,
        })
    }

    /// Every setting with its resolved value, in config syntax.
    pub fn canonical_entries(&self) -> Vec<(String, String)> {
        let mut out: Vec<(String, String)> = Vec::new();
        let mut put = |k: &str, v: String| out.push((k.to_string(), v));
        let material = |put: &mut dyn FnMut(&str, String), m: &MaterialSpec| match *m {
            MaterialSpec::Linear { mu_r } => {
                put("problem.material", "linear".into());
                put("problem.mu_r", fmt_f(mu_r));
            }
            MaterialSpec::Brauer { k1, k2, k3 } => {
                put("problem.material", "brauer".into());
                put("problem.brauer.k1", fmt_f(k1));
                put("problem.brauer.k2", fmt_f(k2));
                put("problem.brauer.k3", fmt_f(k3));
            }
        };
        match &self.problem {
            ProblemSpec::Slab {
                n_cells,
                length,
                slab_fraction,
                kappa,
                material: m,
            } => {
                put("problem.kind", "slab".into());
                put("problem.n_cells", n_cells.to_string());
                put("problem.length", fmt_f(*length));
                put("problem.slab_fraction", fmt_f(*slab_fraction));
                put("problem.kappa", fmt_f(*kappa));
                material(&mut put, m);
            }
            ProblemSpec::Plate {
                nx,
                ny,
                geometry: g,
                kappa,
                material: m,
            } => {
                put("problem.kind", "plate".into());
                put("problem.nx", nx.to_string());
                put("problem.ny", ny.to_string());
                put("problem.plate.lx", fmt_f(g.lx));
                put("problem.plate.ly", fmt_f(g.ly));
                put("problem.plate.plate_width", fmt_f(g.plate_width));
                put("problem.plate.plate_height", fmt_f(g.plate_height));
                put("problem.plate.gap", fmt_f(g.gap));
                put("problem.plate.coil_width", fmt_f(g.coil_width));
                put("problem.plate.coil_height", fmt_f(g.coil_height));
                put("problem.kappa", fmt_f(*kappa));
                material(&mut put, m);
            }
            ProblemSpec::MatrixMarket { dir } => {
                put("problem.kind", "matrix_market".into());
                put("problem.dir", dir.display().to_string());
            }
        }
        put("problem.source.amplitude", fmt_f(self.waveform.amplitude));
        put("problem.source.tau", fmt_f(self.waveform.tau));
        put("solver.kind", self.solver.name().into());
        put("solver.t_end", fmt_f(self.t_end));
        match self.dt {
            DtSpec::Fixed(dt) => put("solver.dt", fmt_f(dt)),
            DtSpec::Auto { factor } => {
                put("solver.dt", "auto".into());
                put("solver.dt_factor", fmt_f(factor));
            }
        }
        let s = &self.stepper;
        put("stepper.tol_pcg", fmt_f(s.tol_pcg));
        put("stepper.max_pcg_iter", s.max_pcg_iter.to_string());
        put("stepper.n_cg_acc", s.n_cg_acc.to_string());
        put("stepper.cspe", s.cspe_enabled.to_string());
        put("stepper.max_subspace", s.max_subspace.to_string());
        put("stepper.mass_mode", name_of(MASS_MODES, &s.mass_mode).into());
        put("stepper.cfl_recheck_interval", s.cfl_recheck_interval.to_string());
        put("stepper.baseline_start", name_of(STARTS, &s.baseline_start).into());
        put("stepper.append_rule", name_of(RULES, &s.append_rule).into());
        put("stepper.galerkin_audit", s.galerkin_audit.to_string());
        put("stepper.cfl_safety", fmt_f(s.cfl_safety));
        put("stepper.cfl_tol", fmt_f(s.cfl_tol));
        let n = &self.newton;
        put("newton.tol_newton", fmt_f(n.tol_newton));
        put("newton.max_newton_iter", n.max_newton_iter.to_string());
        put("newton.tol_linear", fmt_f(n.tol_linear));
        put("newton.max_linear_iter", n.max_linear_iter.to_string());
        put("newton.regularization_eps", fmt_f(n.regularization_eps));
        put("output.stride", self.output_stride.to_string());
        put("output.record_steps", s.record_steps.to_string());
        let tols: Vec<String> = self.sweep.tol_pcg.iter().map(|t| fmt_f(*t)).collect();
        put("sweep.tol_pcg", tols.join(", "));
        let accs: Vec<String> = self.sweep.n_cg_acc.iter().map(|a| a.to_string()).collect();
        put("sweep.n_cg_acc", accs.join(", "));
        put("seed", self.seed.to_string());
        out
    }
}

/// Shortest round-trip scientific notation.
pub fn fmt_f(v: f64) -> String {
    format!("{v:e}")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<RunConfig, ConfigError> {
        RunConfig::parse(text, "test.cfg")
    }

    #[test]
    fn minimal_config_uses_defaults() {
        let c = parse("solver.t_end = 1e-3\n").unwrap();
        assert_eq!(c.solver, SolverKind::ExplicitSchur);
        assert_eq!(c.dt, DtSpec::Auto { factor: 1.0 });
        assert!(matches!(c.problem, ProblemSpec::Slab { n_cells: 128, .. }));
        assert_eq!(c.stepper.tol_pcg, 1e-6);
        assert_eq!(c.sweep, SweepGrid::default());
        assert_eq!(c.seed, DEFAULT_SEED);
    }

    #[test]
    fn implicit_default_dt_is_a_tenth_of_the_bound() {
        let c = parse("solver.kind = implicit_euler\nsolver.t_end = 1\n").unwrap();
        assert_eq!(c.dt, DtSpec::Auto { factor: 0.1 });
    }

    #[test]
    fn errors_name_the_line() {
        let cases = [
            ("solver.t_end = 1\n\nstepper.tol_pcg = 2\n", 3, "stepper.tol_pcg"),
            ("solver.t_end = 1\nbogus.key = 1\n", 2, "unknown key"),
            ("solver.t_end = 1\nno equals sign\n", 2, "expected 'key = value'"),
            ("solver.t_end = 1\nsolver.t_end = 2\n", 2, "first set on line 1"),
            ("solver.t_end = 1\nproblem.nx = 10\n", 2, "does not apply"),
            (
                "solver.t_end = 1\nstepper.mass_mode = diagonal\n",
                2,
                "consistent, lumped",
            ),
            ("solver.t_end = 1\nsweep.n_cg_acc = 1, x\n", 2, "comma-separated"),
            ("# comment\nsolver.t_end = -1\n", 2, "must be > 0"),
            ("solver.t_end = 1\nProblem.Kind = slab\n", 2, "invalid key"),
        ];
        for (text, line, needle) in cases {
            let e = parse(text).unwrap_err();
            assert_eq!(e.line, Some(line), "{text:?}: {e}");
            let msg = e.to_string();
            assert!(msg.starts_with(&format!("test.cfg:{line}: ")), "{msg}");
            assert!(msg.contains(needle), "{msg}");
        }
    }

    #[test]
    fn missing_t_end() {
        let e = parse("problem.kind = slab\n").unwrap_err();
        assert_eq!(e.line, None);
        assert!(e.to_string().contains("solver.t_end"));
    }

    #[test]
    fn comments_and_derived_keys_are_ignored() {
        let c = parse("solver.t_end = 2e-3   # seconds\nderived.lambda_max = 5\n").unwrap();
        assert_eq!(c.t_end, 2e-3);
    }

    #[test]
    fn canonical_entries_round_trip() {
        let text = "problem.kind = plate\nproblem.material = brauer\nproblem.nx = 16\nsolver.t_end = 1e-3\n\
                    solver.dt = 1e-6\nstepper.mass_mode = lumped\nsweep.tol_pcg = 1e-7, 1e-6\nseed = 7\n";
        let c = parse(text).unwrap();
        let dumped: String = c
            .canonical_entries()
            .iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect();
        let again = parse(&dumped).unwrap();
        assert_eq!(again, c);
    }

    #[test]
    fn matrix_market_dir_is_relative_to_config() {
        let c = RunConfig::parse(
            "problem.kind = matrix_market\nproblem.dir = sys\nsolver.t_end = 1\n",
            "/a/b/run.cfg",
        )
        .unwrap();
        assert_eq!(
            c.problem,
            ProblemSpec::MatrixMarket {
                dir: PathBuf::from("/a/b/sys")
            }
        );
        let e = RunConfig::parse("problem.kind = matrix_market\nsolver.t_end = 1\n", "x.cfg").unwrap_err();
        assert!(e.to_string().contains("problem.dir"));
    }
}
