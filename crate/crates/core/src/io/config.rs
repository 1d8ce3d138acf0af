//! Configuration files: flat `key = value` sections in TOML syntax, command-line overrides,
//! and a per-field record of where each value came from.
//!
//! ```toml
//! [solver]
//! nu = 0.1
//! eps = 1e-2
//! n_modes = 8
//! dt = 1e-3
//! t_final = 0.5
//!
//! [noise]
//! preset = "low_modes"   # or "none"; or give `modes = [[j, k, d, amplitude], ...]`
//! trace = 0.01
//!
//! [initial]
//! velocity = "low"       # "zero", "low", "vortex"; or `velocity_modes = [[j, k, d, a], ...]`
//! ```

use serde::Serialize;
use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use toml::{Table, Value};

use crate::error::{Error, Result};
use crate::forcing::{ForceSpec, ModeAmplitude, NoiseSpec};
use crate::integrator::{FieldSpec, InitialSpec, Problem, SolverConfig};
use crate::spectral::default_quad_order;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Default,
    File,
    Override,
}

/// Settings of the Monte Carlo, uniqueness, sweep and inequality experiments.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub paths: usize,
    pub deltas: Vec<f64>,
    pub confidence_z: f64,
    pub c_check: f64,
    pub perturbation: f64,
    pub eps_values: Vec<f64>,
    pub sweep_paths: usize,
    pub sweep_velocity: FieldSpec,
    pub samples: usize,
    pub verify_n: Vec<usize>,
    pub verify_nu: Vec<f64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            paths: 200,
            deltas: vec![0.5, 1.0, 2.0],
            confidence_z: 3.0,
            c_check: 1.0,
            perturbation: 1e-3,
            eps_values: crate::eps_limit::EpsSweepPlan::default_values(),
            sweep_paths: 50,
            sweep_velocity: FieldSpec::Zero,
            samples: 1000,
            verify_n: vec![2, 4, 6],
            verify_nu: vec![0.05, 0.1, 1.0],
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct RunConfig {
    pub problem: Problem,
    pub experiment: ExperimentConfig,
    /// Source of every recognised key, as `section.key`.
    pub provenance: BTreeMap<String, Source>,
}

const KEYS: &[(&str, &[&str])] = &[
    (
        "solver",
        &[
            "nu", "eps", "delta", "n_modes", "dt", "t_final", "moment_p", "quad_order", "seed",
            "energy_cap", "nonlinear",
        ],
    ),
    ("noise", &["preset", "max_mode", "trace", "modes"]),
    ("force", &["modes"]),
    (
        "initial",
        &["velocity", "velocity_modes", "pressure", "pressure_modes"],
    ),
    (
        "mc",
        &["paths", "deltas", "confidence_z", "c_check", "perturbation"],
    ),
    ("sweep", &["eps_values", "paths", "velocity"]),
    ("verify", &["samples", "n_modes", "nu"]),
];

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, column)
}

pub fn parse_table(text: &str) -> Result<Table> {
    text.parse::<Table>().map_err(|e| {
        let (line, column) = e.span().map_or((0, 0), |s| line_col(text, s.start));
        Error::Parse {
            line,
            column,
            message: e.message().trim().to_string(),
        }
    })
}

/// Splits `section.key=value`; a bare key addresses the `solver` section.
fn parse_override(spec: &str) -> Result<(String, String, Value)> {
    let (path, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::config(format!("override {spec:?} is not of the form key=value")))?;
    let path = path.trim();
    let (section, key) = path.split_once('.').unwrap_or(("solver", path));
    let raw = raw.trim();
    let value = format!("v = {raw}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()));
    Ok((section.to_string(), key.to_string(), value))
}

struct Reader {
    table: Table,
    overridden: BTreeSet<String>,
    provenance: BTreeMap<String, Source>,
}

impl Reader {
    fn value(&mut self, section: &str, key: &str) -> Option<Value> {
        let path = format!("{section}.{key}");
        let v = self
            .table
            .get(section)
            .and_then(Value::as_table)
            .and_then(|t| t.get(key))
            .cloned();
        let source = match (&v, self.overridden.contains(&path)) {
            (None, _) => Source::Default,
            (Some(_), true) => Source::Override,
            (Some(_), false) => Source::File,
        };
        self.provenance.insert(path, source);
        v
    }

    fn f64(&mut self, section: &str, key: &str, default: f64) -> Result<f64> {
        match self.value(section, key) {
            None => Ok(default),
            Some(v) => as_f64(&v).ok_or_else(|| type_error(section, key, "a number")),
        }
    }

    fn u64(&mut self, section: &str, key: &str, default: u64) -> Result<u64> {
        match self.value(section, key) {
            None => Ok(default),
            Some(Value::Integer(i)) if i >= 0 => Ok(i as u64),
            Some(Value::String(s)) => s
                .parse()
                .map_err(|_| type_error(section, key, "a non-negative integer")),
            Some(_) => Err(type_error(section, key, "a non-negative integer")),
        }
    }

    fn usize(&mut self, section: &str, key: &str, default: usize) -> Result<usize> {
        self.u64(section, key, default as u64).map(|v| v as usize)
    }

    fn bool(&mut self, section: &str, key: &str, default: bool) -> Result<bool> {
        match self.value(section, key) {
            None => Ok(default),
            Some(Value::Boolean(b)) => Ok(b),
            Some(_) => Err(type_error(section, key, "true or false")),
        }
    }

    fn string(&mut self, section: &str, key: &str) -> Result<Option<String>> {
        match self.value(section, key) {
            None => Ok(None),
            Some(Value::String(s)) => Ok(Some(s)),
            Some(_) => Err(type_error(section, key, "a string")),
        }
    }

    fn f64_list(&mut self, section: &str, key: &str, default: &[f64]) -> Result<Vec<f64>> {
        match self.value(section, key) {
            None => Ok(default.to_vec()),
            Some(Value::Array(a)) => a
                .iter()
                .map(|v| as_f64(v).ok_or_else(|| type_error(section, key, "a list of numbers")))
                .collect(),
            Some(v) => as_f64(&v)
                .map(|x| vec![x])
                .ok_or_else(|| type_error(section, key, "a list of numbers")),
        }
    }

    fn usize_list(&mut self, section: &str, key: &str, default: &[usize]) -> Result<Vec<usize>> {
        let expected = || type_error(section, key, "a list of positive integers");
        match self.value(section, key) {
            None => Ok(default.to_vec()),
            Some(Value::Array(a)) => a
                .iter()
                .map(|v| match v {
                    Value::Integer(i) if *i > 0 => Ok(*i as usize),
                    _ => Err(expected()),
                })
                .collect(),
            Some(Value::Integer(i)) if i > 0 => Ok(vec![i as usize]),
            Some(_) => Err(expected()),
        }
    }

    fn modes(&mut self, section: &str, key: &str) -> Result<Option<Vec<ModeAmplitude>>> {
        let expected = || type_error(section, key, "a list of [j, k, d, amplitude] entries");
        let Some(v) = self.value(section, key) else {
            return Ok(None);
        };
        let Value::Array(entries) = v else {
            return Err(expected());
        };
        entries
            .iter()
            .map(|e| {
                let a = e.as_array().filter(|a| a.len() == 4).ok_or_else(expected)?;
                let idx = |v: &Value| match v {
                    Value::Integer(i) if *i >= 0 => Ok(*i as usize),
                    _ => Err(expected()),
                };
                let m = ModeAmplitude::new(
                    idx(&a[0])?,
                    idx(&a[1])?,
                    idx(&a[2])?,
                    as_f64(&a[3]).ok_or_else(expected)?,
                );
                m.validate()?;
                Ok(m)
            })
            .collect::<Result<Vec<_>>>()
            .map(Some)
    }

    fn field(&mut self, section: &str, preset_key: &str, modes_key: &str, default: FieldSpec) -> Result<FieldSpec> {
        let preset = self.string(section, preset_key)?;
        let modes = self.modes(section, modes_key)?;
        match (preset, modes) {
            (Some(_), Some(_)) => Err(Error::config(format!(
                "{section}: give either {preset_key} or {modes_key}, not both"
            ))),
            (None, Some(modes)) => Ok(FieldSpec::Modes { modes }),
            (Some(name), None) if name == "zero" => Ok(FieldSpec::Zero),
            (Some(name), None) => Ok(FieldSpec::Preset { name }),
            (None, None) => Ok(default),
        }
    }
}

fn as_f64(v: &Value) -> Option<f64> {
    match v {
        Value::Float(f) => Some(*f),
        Value::Integer(i) => Some(*i as f64),
        _ => None,
    }
}

fn type_error(section: &str, key: &str, expected: &str) -> Error {
    Error::config(format!("{section}.{key} must be {expected}"))
}

fn check_known_keys(table: &Table) -> Result<()> {
    for (section, value) in table {
        let Some((_, keys)) = KEYS.iter().find(|(s, _)| s == section) else {
            return Err(Error::config(format!("unknown section [{section}]")));
        };
        let Some(t) = value.as_table() else {
            return Err(Error::config(format!("{section} must be a section")));
        };
        for key in t.keys() {
            if !keys.contains(&key.as_str()) {
                return Err(Error::config(format!("unknown key {section}.{key}")));
            }
        }
    }
    Ok(())
}

/// Builds a configuration from file text (possibly empty) and `section.key=value` overrides,
/// later overrides winning.
pub fn config_from_str(text: &str, overrides: &[String]) -> Result<RunConfig> {
    let mut table = parse_table(text)?;
    let mut overridden = BTreeSet::new();
    for spec in overrides {
        let (section, key, value) = parse_override(spec)?;
        let entry = table
            .entry(section.clone())
            .or_insert_with(|| Value::Table(Table::new()));
        let Value::Table(t) = entry else {
            return Err(Error::config(format!("{section} must be a section")));
        };
        t.insert(key.clone(), value);
        overridden.insert(format!("{section}.{key}"));
    }
    check_known_keys(&table)?;
    let mut r = Reader {
        table,
        overridden,
        provenance: BTreeMap::new(),
    };

    let d = SolverConfig::default();
    let n_modes = r.usize("solver", "n_modes", d.n_modes)?;
    let solver = SolverConfig {
        nu: r.f64("solver", "nu", d.nu)?,
        eps: r.f64("solver", "eps", d.eps)?,
        delta: r.f64("solver", "delta", d.delta)?,
        n_modes,
        dt: r.f64("solver", "dt", d.dt)?,
        t_final: r.f64("solver", "t_final", d.t_final)?,
        moment_p: r.f64("solver", "moment_p", d.moment_p)?,
        quad_order: r.usize("solver", "quad_order", default_quad_order(n_modes))?,
        seed: r.u64("solver", "seed", d.seed)?,
        energy_cap: r.f64("solver", "energy_cap", d.energy_cap)?,
        nonlinear: r.bool("solver", "nonlinear", d.nonlinear)?,
    };
    solver.validate()?;

    let noise = {
        let preset = r.string("noise", "preset")?;
        let modes = r.modes("noise", "modes")?;
        let NoiseSpec::LowModes { max_mode, trace } = NoiseSpec::default() else {
            unreachable!()
        };
        let max_mode = r.usize("noise", "max_mode", max_mode)?;
        let trace = r.f64("noise", "trace", trace)?;
        match (preset.as_deref(), modes) {
            (Some(_), Some(_)) => {
                return Err(Error::config("noise: give either preset or modes, not both"))
            }
            (None, Some(modes)) => NoiseSpec::Modes { modes },
            (Some("none"), None) => NoiseSpec::None,
            (Some("low_modes") | None, None) => {
                if !(trace >= 0.0 && trace.is_finite()) {
                    return Err(Error::config("noise.trace must be non-negative"));
                }
                NoiseSpec::LowModes { max_mode, trace }
            }
            (Some(other), None) => {
                return Err(Error::config(format!(
                    "unknown noise preset {other:?}, expected \"low_modes\" or \"none\""
                )))
            }
        }
    };
    let force = match r.modes("force", "modes")? {
        Some(modes) => ForceSpec::Modes { modes },
        None => ForceSpec::None,
    };
    let di = InitialSpec::default();
    let initial = InitialSpec {
        velocity: r.field("initial", "velocity", "velocity_modes", di.velocity)?,
        pressure: r.field("initial", "pressure", "pressure_modes", di.pressure)?,
    };

    let de = ExperimentConfig::default();
    let experiment = ExperimentConfig {
        paths: r.usize("mc", "paths", de.paths)?,
        deltas: r.f64_list("mc", "deltas", &de.deltas)?,
        confidence_z: r.f64("mc", "confidence_z", de.confidence_z)?,
        c_check: r.f64("mc", "c_check", de.c_check)?,
        perturbation: r.f64("mc", "perturbation", de.perturbation)?,
        eps_values: r.f64_list("sweep", "eps_values", &de.eps_values)?,
        sweep_paths: r.usize("sweep", "paths", de.sweep_paths)?,
        sweep_velocity: match r.string("sweep", "velocity")? {
            None => de.sweep_velocity,
            Some(name) if name == "zero" => FieldSpec::Zero,
            Some(name) => FieldSpec::Preset { name },
        },
        samples: r.usize("verify", "samples", de.samples)?,
        verify_n: r.usize_list("verify", "n_modes", &de.verify_n)?,
        verify_nu: r.f64_list("verify", "nu", &de.verify_nu)?,
    };
    if experiment.paths < 2 || experiment.sweep_paths < 2 {
        return Err(Error::config("paths must be at least 2"));
    }
    if experiment.deltas.iter().any(|&d| !(d > 0.0 && d.is_finite())) {
        return Err(Error::config("mc.deltas must be positive"));
    }

    Ok(RunConfig {
        problem: Problem {
            solver,
            noise,
            force,
            initial,
        },
        experiment,
        provenance: r.provenance,
    })
}

pub fn load_config(path: Option<&Path>, overrides: &[String]) -> Result<RunConfig> {
    let text = match path {
        Some(p) => std::fs::read_to_string(p)?,
        None => String::new(),
    };
    config_from_str(&text, overrides)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "[solver]\nnu = 0.2\neps = 0.01\nn_modes = 4\ndt = 0.01\nt_final = 0.1\n";

    #[test]
    fn minimal_file_fills_defaults() {
        let c = config_from_str(MINIMAL, &[]).unwrap();
        assert_eq!(c.problem.solver.nu, 0.2);
        assert_eq!(c.problem.solver.n_modes, 4);
        assert_eq!(c.problem.solver.quad_order, default_quad_order(4));
        assert_eq!(c.problem.solver.seed, 42);
        assert_eq!(c.provenance["solver.nu"], Source::File);
        assert_eq!(c.provenance["solver.seed"], Source::Default);
        assert_eq!(c.problem.noise, NoiseSpec::default());
    }

    #[test]
    fn overrides_win_and_are_tagged() {
        let c = config_from_str(MINIMAL, &["eps=1e-4".into(), "noise.trace=0.5".into()]).unwrap();
        assert_eq!(c.problem.solver.eps, 1e-4);
        assert_eq!(c.provenance["solver.eps"], Source::Override);
        assert_eq!(
            c.problem.noise,
            NoiseSpec::LowModes {
                max_mode: 2,
                trace: 0.5
            }
        );
        let c = config_from_str(MINIMAL, &["eps=1e-3".into(), "solver.eps=2e-3".into()]).unwrap();
        assert_eq!(c.problem.solver.eps, 2e-3);
    }

    #[test]
    fn zero_dt_is_rejected_by_name() {
        let err = config_from_str("[solver]\ndt = 0\n", &[]).unwrap_err();
        assert!(err.to_string().contains("dt must be positive"), "{err}");
    }

    #[test]
    fn parse_errors_carry_position() {
        match config_from_str("[solver]\nnu = 0.1\neps = = 2\n", &[]) {
            Err(Error::Parse { line, column, .. }) => {
                assert_eq!(line, 3);
                assert!(column > 1);
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(config_from_str("[solver]\nviscosity = 1\n", &[]).is_err());
        assert!(config_from_str("[extra]\n", &[]).is_err());
        assert!(config_from_str("", &["nope=1".into()]).is_err());
    }

    #[test]
    fn mode_lists_and_presets() {
        let text = "[noise]\nmodes = [[1, 1, 1, 0.1], [2, 1, 2, 0.2]]\n\
                    [force]\nmodes = [[1, 2, 1, 1.0]]\n\
                    [initial]\nvelocity = \"vortex\"\npressure_modes = [[1, 1, 2, 0.5]]\n";
        let c = config_from_str(text, &[]).unwrap();
        assert!(matches!(c.problem.noise, NoiseSpec::Modes { ref modes } if modes.len() == 2));
        assert!(matches!(c.problem.force, ForceSpec::Modes { .. }));
        assert_eq!(
            c.problem.initial.velocity,
            FieldSpec::Preset {
                name: "vortex".into()
            }
        );
        assert!(config_from_str("[noise]\nmodes = [[1, 1, 3, 0.1]]\n", &[]).is_err());
        let c = config_from_str("[noise]\npreset = \"none\"\n", &[]).unwrap();
        assert_eq!(c.problem.noise, NoiseSpec::None);
    }
}
