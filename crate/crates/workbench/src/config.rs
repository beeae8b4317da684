//! Sweep configuration: model family, parameter ranges, S-ladder, tasks and
//! output settings, read from TOML.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use spinlind::c64;
use spinlind::models::{ClassTriple, ModelFamily};
use spinlind::spin::SpinSpace;

use crate::error::WorkbenchError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    Spectrum,
    Steady,
    Dynamics,
    Trajectory,
    Perturb,
    CheckPt,
    BtcDetect,
}

impl Task {
    pub const ALL: [Task; 7] =
        [Task::Spectrum, Task::Steady, Task::Dynamics, Task::Trajectory, Task::Perturb, Task::CheckPt, Task::BtcDetect];

    pub fn id(self) -> &'static str {
        match self {
            Task::Spectrum => "spectrum",
            Task::Steady => "steady",
            Task::Dynamics => "dynamics",
            Task::Trajectory => "trajectory",
            Task::Perturb => "perturb",
            Task::CheckPt => "check-pt",
            Task::BtcDetect => "btc-detect",
        }
    }

    /// File stem of the task's CSV.
    pub fn file_stem(self) -> &'static str {
        match self {
            Task::CheckPt => "check_pt",
            Task::BtcDetect => "btc_detect",
            t => t.id(),
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

/// A parameter given as a single value, an explicit list, or `{ linspace = [start, stop, n] }`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamRange {
    Value(f64),
    List(Vec<f64>),
    Linspace { linspace: [f64; 3] },
}

impl ParamRange {
    pub fn values(&self) -> Result<Vec<f64>, String> {
        let out = match self {
            ParamRange::Value(v) => vec![*v],
            ParamRange::List(v) => v.clone(),
            ParamRange::Linspace { linspace: [a, b, n] } => {
                if !(n.fract() == 0.0 && *n >= 1.0 && *n <= 1e6) {
                    return Err(format!("linspace count must be a positive integer, got {n}"));
                }
                let n = *n as usize;
                if n == 1 {
                    vec![*a]
                } else {
                    (0..n).map(|k| a + (b - a) * k as f64 / (n - 1) as f64).collect()
                }
            }
        };
        if out.is_empty() {
            return Err("empty list".into());
        }
        if let Some(v) = out.iter().find(|v| !v.is_finite()) {
            return Err(format!("non-finite value {v}"));
        }
        Ok(out)
    }
}

/// Coefficients `[re, im]` of `L = alpha Sx^+ + beta Sx^- + gamma Sx` for the class model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TripleSpec {
    pub alpha: [f64; 2],
    pub beta: [f64; 2],
    pub gamma: [f64; 2],
}

impl TripleSpec {
    pub fn to_triple(self) -> ClassTriple {
        let c = |[re, im]: [f64; 2]| c64::new(re, im);
        ClassTriple::new(c(self.alpha), c(self.beta), c(self.gamma))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Largest PT residual reported as symmetric by `check-pt`.
    pub pt_residual: f64,
    /// Relative tolerance of the commensurability test in `btc-detect`.
    pub commensurability: f64,
    pub ode_rtol: f64,
    pub ode_atol: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { pt_residual: 1e-12, commensurability: 1e-2, ode_rtol: 1e-8, ode_atol: 1e-12 }
    }
}

/// Size caps. Spectra and stationary states factor the dense superoperator
/// ((2S+1)² squared entries); dynamics and trajectories only apply it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Limits {
    pub dense_max_s: f64,
    pub dynamics_max_s: f64,
    pub two_spin_max_s: f64,
}

impl Default for Limits {
    fn default() -> Self {
        Self { dense_max_s: 25.0, dynamics_max_s: 80.0, two_spin_max_s: 4.0 }
    }
}

/// Time grid, initial state and observables shared by `dynamics` and `trajectory`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DynamicsSettings {
    pub t_max: f64,
    pub n_times: usize,
    /// Initial z-basis state |m> with m = S - round((1 - fraction) S); both spins
    /// of the two-spin model start in the same state.
    pub initial_m_fraction: f64,
    /// `sx`, `sy`, `sz` (divided by S); two-spin models use `sz_a`, `sx_b`, ...
    /// Empty selects `sz` (one spin) or `sz_a, sz_b` (two spins).
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub observables: Vec<String>,
}

impl Default for DynamicsSettings {
    fn default() -> Self {
        Self { t_max: 20.0, n_times: 201, initial_m_fraction: 1.0, observables: Vec::new() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrajectorySettings {
    pub n_traj: usize,
}

impl Default for TrajectorySettings {
    fn default() -> Self {
        Self { n_traj: 200 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PerturbSettings {
    pub second_order: bool,
    /// If set, also compares predictions with the full spectrum at these
    /// dissipation strengths (written to `perturb_scaling.csv`).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub compare_kappas: Option<ParamRange>,
    /// Modes with l <= max_l are tracked in the comparison.
    pub max_l: usize,
}

impl Default for PerturbSettings {
    fn default() -> Self {
        Self { second_order: true, compare_kappas: None, max_l: 1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FigureKind {
    /// Curves of `y` against `x`, one per distinct value of `group`.
    Series,
    /// Markers only (e.g. eigenvalues in the complex plane).
    Scatter,
    /// Cells on the grid of distinct `x` and `y` values, colored by `value`.
    Heatmap,
    /// |rho_ss - PT rho_ss PT| at one grid point (task must be `steady`).
    ResidualMatrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Figure {
    pub name: String,
    pub kind: FigureKind,
    pub task: Task,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub title: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group: Option<String>,
    /// Grid point for `residual-matrix`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub point: Option<usize>,
    /// Spin for `residual-matrix`.
    #[serde(default, rename = "S", skip_serializing_if = "Option::is_none")]
    pub spin: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub model: ModelFamily,
    /// The S-ladder (integer or half-integer spins).
    pub spins: Vec<f64>,
    pub tasks: Vec<Task>,
    pub out: PathBuf,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub params: BTreeMap<String, ParamRange>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub dissipators: Vec<TripleSpec>,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub limits: Limits,
    #[serde(default)]
    pub dynamics: DynamicsSettings,
    #[serde(default)]
    pub trajectory: TrajectorySettings,
    #[serde(default)]
    pub perturb: PerturbSettings,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub figures: Vec<Figure>,
}

/// One point of the parameter grid, values in the family's canonical order.
#[derive(Debug, Clone, PartialEq)]
pub struct GridPoint {
    pub index: usize,
    pub values: Vec<f64>,
}

impl SweepConfig {
    /// Parses and validates a TOML document. Errors carry line numbers where possible.
    pub fn from_toml(text: &str) -> Result<Self, WorkbenchError> {
        let cfg: SweepConfig = toml::from_str(text).map_err(|e| WorkbenchError::Config(e.to_string().trim_end().into()))?;
        cfg.validate().map_err(|(key, msg)| match line_of(text, &key) {
            Some(line) => WorkbenchError::Config(format!("line {line}: {msg}")),
            None => WorkbenchError::Config(msg),
        })?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes to TOML")
    }

    /// Swept parameter names: the family's scalar parameters in canonical order.
    pub fn param_names(&self) -> Vec<&'static str> {
        self.model.parameter_names().iter().copied().filter(|n| *n != "dissipators").collect()
    }

    pub fn spin_spaces(&self) -> Vec<SpinSpace> {
        self.spins.iter().map(|&s| SpinSpace::from_spin(s).expect("validated spin")).collect()
    }

    /// Cartesian product of the parameter ranges; the last name varies fastest.
    pub fn grid(&self) -> Vec<GridPoint> {
        let axes: Vec<Vec<f64>> =
            self.param_names().iter().map(|n| self.params[*n].values().expect("validated range")).collect();
        let mut points = vec![Vec::new()];
        for axis in &axes {
            points = points
                .into_iter()
                .flat_map(|p| {
                    axis.iter().map(move |&v| {
                        let mut q = p.clone();
                        q.push(v);
                        q
                    })
                })
                .collect();
        }
        points.into_iter().enumerate().map(|(index, values)| GridPoint { index, values }).collect()
    }

    /// Observables of `dynamics`/`trajectory`, with the model's default if none are given.
    pub fn observables(&self) -> Vec<String> {
        match (self.dynamics.observables.is_empty(), self.model) {
            (false, _) => self.dynamics.observables.clone(),
            (true, ModelFamily::TwoSpin) => vec!["sz_a".into(), "sz_b".into()],
            (true, _) => vec!["sz".into()],
        }
    }

    /// Validates a configuration built in code (errors carry no line numbers).
    pub fn validated(self) -> Result<Self, WorkbenchError> {
        self.validate().map_err(|(_, msg)| WorkbenchError::Config(msg))?;
        Ok(self)
    }

    pub fn triples(&self) -> Vec<ClassTriple> {
        self.dissipators.iter().map(|t| t.to_triple()).collect()
    }

    /// Returns the offending key and a message.
    fn validate(&self) -> Result<(), (String, String)> {
        let err = |key: &str, msg: String| Err((key.to_string(), msg));
        if self.tasks.is_empty() {
            return err("tasks", "task list is empty; nothing to do".into());
        }
        if self.spins.is_empty() {
            return err("spins", "S-ladder is empty".into());
        }
        for &s in &self.spins {
            if SpinSpace::from_spin(s).is_err() {
                return err("spins", format!("S = {s} is not a positive integer or half-integer"));
            }
        }
        let names = self.param_names();
        for key in self.params.keys() {
            if !names.contains(&key.as_str()) {
                return err(
                    key,
                    format!("parameter `{key}` does not belong to model `{}` (expected: {})", self.model, names.join(", ")),
                );
            }
        }
        for n in &names {
            match self.params.get(*n) {
                None => return err("params", format!("missing parameter `{n}` for model `{}`", self.model)),
                Some(r) => {
                    let values = r.values().map_err(|m| (n.to_string(), format!("parameter `{n}`: {m}")))?;
                    if matches!(*n, "pz" | "px") && values.iter().any(|v| v.fract() != 0.0 || *v < 0.0 || *v > 64.0) {
                        return err(n, format!("parameter `{n}` must be a small non-negative integer"));
                    }
                }
            }
        }
        if self.model == spinlind::models::ModelFamily::Class {
            if self.dissipators.is_empty() {
                return err("dissipators", "the class model needs at least one [[dissipators]] entry".into());
            }
        } else if !self.dissipators.is_empty() {
            return err("dissipators", format!("model `{}` takes no [[dissipators]]", self.model));
        }
        if let Some(r) = &self.perturb.compare_kappas {
            r.values().map_err(|m| ("compare_kappas".to_string(), format!("compare_kappas: {m}")))?;
        }
        let d = &self.dynamics;
        if !(d.t_max > 0.0 && d.t_max.is_finite()) || d.n_times < 2 {
            return err("dynamics", "dynamics needs t_max > 0 and n_times >= 2".into());
        }
        if !(0.0..=1.0).contains(&d.initial_m_fraction) {
            return err("initial_m_fraction", "initial_m_fraction must lie in [0, 1]".into());
        }
        let two_spin = self.model == spinlind::models::ModelFamily::TwoSpin;
        for o in &self.observables() {
            if observable_axis(o, two_spin).is_none() {
                return err("observables", format!("unknown observable `{o}` for model `{}`", self.model));
            }
        }
        if self.trajectory.n_traj == 0 {
            return err("n_traj", "n_traj must be at least 1".into());
        }
        let smax = self.spins.iter().copied().fold(0.0, f64::max);
        let lim = &self.limits;
        if two_spin && smax > lim.two_spin_max_s {
            return err("spins", format!("two-spin models are limited to S <= {}", lim.two_spin_max_s));
        }
        for t in &self.tasks {
            match t {
                Task::Spectrum | Task::Steady | Task::BtcDetect if smax > lim.dense_max_s => {
                    return err("spins", format!("task `{t}` is limited to S <= {}", lim.dense_max_s))
                }
                Task::Dynamics | Task::Trajectory | Task::CheckPt if smax > lim.dynamics_max_s => {
                    return err("spins", format!("task `{t}` is limited to S <= {}", lim.dynamics_max_s))
                }
                Task::Perturb if !matches!(self.model, ModelFamily::OneSpinBtc | ModelFamily::OneSpinPt | ModelFamily::Class) => {
                    return err("tasks", format!("task `perturb` is not available for model `{}`", self.model))
                }
                Task::BtcDetect if self.spins.len() < 3 => {
                    return err("spins", "task `btc-detect` needs at least three spins".into())
                }
                _ => {}
            }
        }
        for f in &self.figures {
            if !self.tasks.contains(&f.task) {
                return err("figures", format!("figure `{}` uses task `{}` which is not run", f.name, f.task));
            }
            let need = |field: &Option<String>, what: &str| -> Result<(), (String, String)> {
                if field.is_none() {
                    return err("figures", format!("figure `{}` needs `{what}`", f.name));
                }
                Ok(())
            };
            match f.kind {
                FigureKind::Series | FigureKind::Scatter => {
                    need(&f.x, "x")?;
                    need(&f.y, "y")?;
                }
                FigureKind::Heatmap => {
                    need(&f.x, "x")?;
                    need(&f.y, "y")?;
                    need(&f.value, "value")?;
                }
                FigureKind::ResidualMatrix if f.task != Task::Steady => {
                    return err("figures", format!("figure `{}`: residual-matrix requires task `steady`", f.name));
                }
                FigureKind::ResidualMatrix => {}
            }
            if f.name.is_empty() || !f.name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
                return err("figures", format!("figure name `{}` must be alphanumeric (with - or _)", f.name));
            }
        }
        Ok(())
    }
}

/// Maps an observable name to (spin component, subsystem) with component in {x, y, z}
/// and subsystem `None` (one spin), `Some(0)` (A) or `Some(1)` (B).
pub fn observable_axis(name: &str, two_spin: bool) -> Option<(char, Option<usize>)> {
    let mut chars = name.chars();
    if chars.next() != Some('s') {
        return None;
    }
    let axis = chars.next().filter(|c| matches!(c, 'x' | 'y' | 'z'))?;
    let rest: String = chars.collect();
    match (two_spin, rest.as_str()) {
        (false, "") => Some((axis, None)),
        (true, "_a") => Some((axis, Some(0))),
        (true, "_b") => Some((axis, Some(1))),
        _ => None,
    }
}

/// 1-based line of the first `key =` assignment or `[key]` header in `text`.
fn line_of(text: &str, key: &str) -> Option<usize> {
    text.lines().position(|l| {
        let t = l.trim_start();
        let assigns = t.strip_prefix(key).is_some_and(|r| r.trim_start().starts_with('='));
        let header = t.starts_with('[') && t.trim_matches(|c| c == '[' || c == ']').trim() == key;
        assigns || header
    })
    .map(|i| i + 1)
}
