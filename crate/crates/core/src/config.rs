//! Flat `key=value` experiment configuration.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::integrators::EnergyInit;
use crate::models::{LagrangianModel, ModelError};
use crate::scalar::PrecisionContext;
use crate::solvers::SolverConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config file {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("line {line}: expected key=value, got {text:?}")]
    Syntax { line: usize, text: String },
    #[error("unknown config key {0:?}")]
    UnknownKey(String),
    #[error("invalid value {value:?} for {key}: {reason}")]
    Value { key: String, value: String, reason: String },
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Problem {
    Kepler { e: f64 },
    Oscillator { k: f64, m: f64, q0: f64, p0: f64 },
    Pendulum { k: f64, m: f64, q0: f64, p0: f64 },
}

impl Problem {
    pub fn name(&self) -> &'static str {
        match self {
            Problem::Kepler { .. } => "kepler",
            Problem::Oscillator { .. } => "oscillator",
            Problem::Pendulum { .. } => "pendulum",
        }
    }

    pub fn model(&self) -> Result<LagrangianModel, ModelError> {
        match *self {
            Problem::Kepler { .. } => Ok(LagrangianModel::kepler()),
            Problem::Oscillator { k, m, .. } => LagrangianModel::oscillator(k, m),
            Problem::Pendulum { k, m, .. } => LagrangianModel::pendulum(k, m),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IntegratorKind {
    Epavi,
    Avi1,
    Avi2,
    MidpointFixed,
    Reference,
}

impl IntegratorKind {
    pub const ALL: [IntegratorKind; 5] = [
        IntegratorKind::Epavi,
        IntegratorKind::Avi1,
        IntegratorKind::Avi2,
        IntegratorKind::MidpointFixed,
        IntegratorKind::Reference,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            IntegratorKind::Epavi => "epavi",
            IntegratorKind::Avi1 => "avi1",
            IntegratorKind::Avi2 => "avi2",
            IntegratorKind::MidpointFixed => "midpoint_fixed",
            IntegratorKind::Reference => "reference",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s)
    }
}

pub const PROBLEMS: [&str; 3] = ["kepler", "oscillator", "pendulum"];

pub const KNOWN_KEYS: [&str; 26] = [
    "problem",
    "e",
    "k",
    "m",
    "q0",
    "p0",
    "integrator",
    "h0",
    "delta_a",
    "T_final",
    "periods",
    "tol",
    "max_iter",
    "fd_step",
    "condition_warn",
    "digits",
    "out",
    "seed",
    "polish",
    "energy_init",
    "workers",
    "reltol",
    "abstol",
    "ref_reltol",
    "ref_abstol",
    "max_steps",
];

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub problem: Problem,
    pub integrator: IntegratorKind,
    pub h0: f64,
    pub delta_a: Option<f64>,
    pub t_final: f64,
    pub solver: SolverConfig,
    pub precision: PrecisionContext,
    pub out: PathBuf,
    pub seed: u64,
    pub energy_init: EnergyInit,
    pub workers: usize,
    /// Tolerances of the integrator when it is the reference solver.
    pub reltol: f64,
    pub abstol: f64,
    /// Tolerances of the reference used for trajectory errors.
    pub ref_reltol: f64,
    pub ref_abstol: f64,
    pub max_steps: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            problem: Problem::Kepler { e: 0.7 },
            integrator: IntegratorKind::Epavi,
            h0: 0.001,
            delta_a: None,
            t_final: 2.0 * PI,
            solver: SolverConfig::default(),
            precision: PrecisionContext::double(),
            out: PathBuf::from("out"),
            seed: 0,
            energy_init: EnergyInit::FirstStep,
            workers: 0,
            reltol: 1e-12,
            abstol: 1e-14,
            ref_reltol: 1e-12,
            ref_abstol: 1e-14,
            max_steps: crate::integrators::DEFAULT_MAX_STEPS,
        }
    }
}

/// Parses `key=value` lines; `#` starts a comment.
pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>, ConfigError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
            line: i + 1,
            text: raw.to_string(),
        })?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

/// Parses command-line overrides of the form `key=value`.
pub fn parse_overrides<I, T>(args: I) -> Result<Vec<(String, String)>, ConfigError>
where
    I: IntoIterator<Item = T>,
    T: AsRef<str>,
{
    args.into_iter()
        .enumerate()
        .map(|(i, a)| {
            let a = a.as_ref();
            a.split_once('=')
                .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
                .ok_or_else(|| ConfigError::Syntax {
                    line: i + 1,
                    text: a.to_string(),
                })
        })
        .collect()
}

fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value.parse::<T>().map_err(|e| ConfigError::Value {
        key: key.to_string(),
        value: value.to_string(),
        reason: e.to_string(),
    })
}

impl ExperimentConfig {
    pub fn from_file(path: &Path, overrides: &[(String, String)]) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut pairs = parse_pairs(&text)?;
        pairs.extend_from_slice(overrides);
        Self::from_pairs(&pairs)
    }

    /// Builds a validated config; later pairs override earlier ones.
    pub fn from_pairs(pairs: &[(String, String)]) -> Result<Self, ConfigError> {
        let mut map: BTreeMap<String, String> = BTreeMap::new();
        for (k, v) in pairs {
            let key = if k == "t_final" {
                "T_final".to_string()
            } else {
                k.clone()
            };
            if !KNOWN_KEYS.contains(&key.as_str()) {
                return Err(ConfigError::UnknownKey(k.clone()));
            }
            map.insert(key, v.clone());
        }
        let get = |k: &str| map.get(k).map(String::as_str);
        let f = |k: &str, default: f64| get(k).map_or(Ok(default), |v| num::<f64>(k, v));

        let mut cfg = Self::default();
        let problem = get("problem").unwrap_or("kepler");
        cfg.problem = match problem {
            "kepler" => Problem::Kepler { e: f("e", 0.7)? },
            "oscillator" => Problem::Oscillator {
                k: f("k", 1.0)?,
                m: f("m", 1.0)?,
                q0: f("q0", 1.0)?,
                p0: f("p0", 0.0)?,
            },
            "pendulum" => Problem::Pendulum {
                k: f("k", 1.0)?,
                m: f("m", 1.0)?,
                q0: f("q0", 1.0)?,
                p0: f("p0", 0.0)?,
            },
            other => {
                return Err(ConfigError::Value {
                    key: "problem".into(),
                    value: other.into(),
                    reason: format!("expected one of {}", PROBLEMS.join(", ")),
                })
            }
        };
        if let Some(name) = get("integrator") {
            cfg.integrator = IntegratorKind::parse(name).ok_or_else(|| ConfigError::Value {
                key: "integrator".into(),
                value: name.into(),
                reason: "expected epavi, avi1, avi2, midpoint_fixed or reference".into(),
            })?;
        }
        cfg.h0 = f("h0", cfg.h0)?;
        cfg.delta_a = get("delta_a").map(|v| num::<f64>("delta_a", v)).transpose()?;
        cfg.t_final = match (get("T_final"), get("periods")) {
            (Some(_), Some(_)) => return Err(ConfigError::Invalid("give either T_final or periods, not both".into())),
            (Some(v), None) => num("T_final", v)?,
            (None, Some(v)) => {
                if !matches!(cfg.problem, Problem::Kepler { .. }) {
                    return Err(ConfigError::Invalid(
                        "periods is only defined for the kepler problem".into(),
                    ));
                }
                num::<f64>("periods", v)? * 2.0 * PI
            }
            (None, None) => 2.0 * PI,
        };
        let digits: u32 = get("digits").map_or(Ok(16), |v| num("digits", v))?;
        cfg.precision = PrecisionContext::new(digits).map_err(|e| ConfigError::Value {
            key: "digits".into(),
            value: digits.to_string(),
            reason: e.to_string(),
        })?;
        cfg.solver = SolverConfig {
            tol: f("tol", cfg.precision.default_tol())?,
            max_iter: get("max_iter").map_or(Ok(cfg.solver.max_iter), |v| num("max_iter", v))?,
            fd_step: get("fd_step").map(|v| num::<f64>("fd_step", v)).transpose()?,
            condition_warn: f("condition_warn", cfg.solver.condition_warn)?,
            polish: get("polish").map_or(Ok(cfg.solver.polish), |v| num("polish", v))?,
        };
        if let Some(v) = get("out") {
            cfg.out = PathBuf::from(v);
        }
        cfg.seed = get("seed").map_or(Ok(0), |v| num("seed", v))?;
        cfg.energy_init = match get("energy_init").unwrap_or("first_step") {
            "first_step" => EnergyInit::FirstStep,
            "hamiltonian" => EnergyInit::FromState,
            other => {
                return Err(ConfigError::Value {
                    key: "energy_init".into(),
                    value: other.into(),
                    reason: "expected first_step or hamiltonian".into(),
                })
            }
        };
        cfg.workers = get("workers").map_or(Ok(0), |v| num("workers", v))?;
        cfg.reltol = f("reltol", cfg.reltol)?;
        cfg.abstol = f("abstol", cfg.abstol)?;
        cfg.ref_reltol = f("ref_reltol", cfg.ref_reltol)?;
        cfg.ref_abstol = f("ref_abstol", cfg.ref_abstol)?;
        cfg.max_steps = get("max_steps").map_or(Ok(cfg.max_steps), |v| num("max_steps", v))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(ConfigError::Invalid(format!("{name} = {v} must be positive")))
            }
        };
        positive("h0", self.h0)?;
        positive("T_final", self.t_final)?;
        if let Some(d) = self.delta_a {
            positive("delta_a", d)?;
        }
        positive("reltol", self.reltol)?;
        positive("abstol", self.abstol)?;
        positive("ref_reltol", self.ref_reltol)?;
        positive("ref_abstol", self.ref_abstol)?;
        self.solver
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if let Problem::Kepler { e } = self.problem {
            if !(0.0..1.0).contains(&e) {
                return Err(ConfigError::Invalid(format!("eccentricity e = {e} must lie in [0, 1)")));
            }
        }
        if self.integrator == IntegratorKind::Avi2 && !matches!(self.problem, Problem::Kepler { .. }) {
            return Err(ConfigError::Invalid(
                "avi2 uses the q^T q monitor and needs the kepler problem".into(),
            ));
        }
        self.problem.model()?;
        Ok(())
    }

    /// Key=value lines that reproduce this config.
    pub fn to_pairs(&self) -> Vec<(String, String)> {
        let mut v: Vec<(String, String)> = vec![("problem".into(), self.problem.name().into())];
        match self.problem {
            Problem::Kepler { e } => v.push(("e".into(), e.to_string())),
            Problem::Oscillator { k, m, q0, p0 } | Problem::Pendulum { k, m, q0, p0 } => {
                for (key, val) in [("k", k), ("m", m), ("q0", q0), ("p0", p0)] {
                    v.push((key.into(), val.to_string()));
                }
            }
        }
        v.push(("integrator".into(), self.integrator.name().into()));
        v.push(("h0".into(), self.h0.to_string()));
        if let Some(d) = self.delta_a {
            v.push(("delta_a".into(), d.to_string()));
        }
        v.push(("T_final".into(), self.t_final.to_string()));
        v.push(("tol".into(), self.solver.tol.to_string()));
        v.push(("max_iter".into(), self.solver.max_iter.to_string()));
        v.push(("polish".into(), self.solver.polish.to_string()));
        v.push(("condition_warn".into(), self.solver.condition_warn.to_string()));
        if let Some(fd) = self.solver.fd_step {
            v.push(("fd_step".into(), fd.to_string()));
        }
        v.push(("digits".into(), self.precision.digits().to_string()));
        v.push(("seed".into(), self.seed.to_string()));
        v.push((
            "energy_init".into(),
            match self.energy_init {
                EnergyInit::FirstStep => "first_step",
                EnergyInit::FromState => "hamiltonian",
            }
            .into(),
        ));
        for (key, val) in [
            ("reltol", self.reltol),
            ("abstol", self.abstol),
            ("ref_reltol", self.ref_reltol),
            ("ref_abstol", self.ref_abstol),
        ] {
            v.push((key.into(), val.to_string()));
        }
        v.push(("max_steps".into(), self.max_steps.to_string()));
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pairs(s: &[&str]) -> Vec<(String, String)> {
        parse_overrides(s).unwrap()
    }

    #[test]
    fn parses_file_syntax() {
        let p = parse_pairs("# comment\nproblem = kepler\n\ne=0.1 # trailing\n").unwrap();
        assert_eq!(p, vec![("problem".into(), "kepler".into()), ("e".into(), "0.1".into())]);
        assert!(matches!(parse_pairs("oops"), Err(ConfigError::Syntax { line: 1, .. })));
    }

    #[test]
    fn defaults_follow_precision() {
        let c = ExperimentConfig::from_pairs(&pairs(&["digits=18"])).unwrap();
        assert_eq!(c.solver.tol, 1e-17);
        assert!(c.precision.is_extended());
        let c = ExperimentConfig::from_pairs(&[]).unwrap();
        assert_eq!(c.solver.tol, 1e-12);
    }

    #[test]
    fn overrides_win() {
        let c = ExperimentConfig::from_pairs(&pairs(&["e=0.1", "integrator=avi2", "e=0.7", "periods=2"])).unwrap();
        assert_eq!(c.problem, Problem::Kepler { e: 0.7 });
        assert_eq!(c.integrator, IntegratorKind::Avi2);
        assert!((c.t_final - 4.0 * PI).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_input() {
        for bad in [
            vec!["integrator=rk4"],
            vec!["frobnicate=1"],
            vec!["digits=9"],
            vec!["h0=0"],
            vec!["e=1.0"],
            vec!["problem=oscillator", "periods=1"],
            vec!["T_final=1", "periods=1"],
            vec!["h0=abc"],
            vec!["problem=pendulum", "integrator=avi2"],
        ] {
            assert!(ExperimentConfig::from_pairs(&pairs(&bad)).is_err(), "{bad:?}");
        }
    }

    #[test]
    fn round_trips_through_pairs() {
        let c = ExperimentConfig::from_pairs(&pairs(&[
            "problem=pendulum",
            "k=2",
            "integrator=midpoint_fixed",
            "T_final=3",
        ]))
        .unwrap();
        let again = ExperimentConfig::from_pairs(&c.to_pairs()).unwrap();
        assert_eq!(again.problem, c.problem);
        assert_eq!(again.t_final, c.t_final);
        assert_eq!(again.integrator, c.integrator);
    }
}
