//! Plain-text experiment configuration: `key = value` lines under
//! `[section]` headers. Sensor functionals are written inline, e.g.
//! `functional = floor chi=0.0 ceil psi=1.0`.

use std::collections::BTreeMap;
use std::path::PathBuf;

use ssp_core::{
    ConvexFunctional, JacobianMode, NewtonConfig, ProblemParams, SensorScope, SensorSpec,
};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("[{section}] {key}: {msg}")]
    Value {
        section: String,
        key: String,
        msg: String,
    },
    #[error("missing required key [{section}] {key}")]
    Missing { section: String, key: String },
    #[error("{0}")]
    Invalid(String),
    #[error("cannot read config: {0}")]
    Io(#[from] std::io::Error),
}

/// Raw section/key/value view of a config file.
#[derive(Debug, Clone, Default)]
pub struct RawConfig {
    pub sections: BTreeMap<String, BTreeMap<String, String>>,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut sections: BTreeMap<String, BTreeMap<String, String>> = BTreeMap::new();
        let mut current = String::from("");
        for (idx, raw_line) in text.lines().enumerate() {
            let line = raw_line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if line.starts_with('[') {
                if !line.ends_with(']') {
                    return Err(ConfigError::Syntax {
                        line: idx + 1,
                        msg: "unterminated section header".into(),
                    });
                }
                current = line[1..line.len() - 1].trim().to_string();
                sections.entry(current.clone()).or_default();
                continue;
            }
            let Some(eq) = line.find('=') else {
                return Err(ConfigError::Syntax {
                    line: idx + 1,
                    msg: format!("expected key = value, got {line:?}"),
                });
            };
            let key = line[..eq].trim().to_string();
            let value = line[eq + 1..].trim().to_string();
            if key.is_empty() {
                return Err(ConfigError::Syntax {
                    line: idx + 1,
                    msg: "empty key".into(),
                });
            }
            sections.entry(current.clone()).or_default().insert(key, value);
        }
        Ok(Self { sections })
    }

    fn get(&self, section: &str, key: &str) -> Option<&str> {
        self.sections.get(section).and_then(|s| s.get(key)).map(String::as_str)
    }

    fn require(&self, section: &str, key: &str) -> Result<&str, ConfigError> {
        self.get(section, key).ok_or_else(|| ConfigError::Missing {
            section: section.into(),
            key: key.into(),
        })
    }
}

fn parse_f64(section: &str, key: &str, v: &str) -> Result<f64, ConfigError> {
    v.parse().map_err(|e| ConfigError::Value {
        section: section.into(),
        key: key.into(),
        msg: format!("{e}"),
    })
}

fn parse_list(v: &str) -> Vec<String> {
    v.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect()
}

/// Bound of a sensor check: the functional's natural bound, an explicit
/// value, or the functional's value on the initial state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BoundSpec {
    Natural,
    Value(f64),
    InitialValue,
}

#[derive(Debug, Clone)]
pub struct SensorConfig {
    pub scope: SensorScope,
    pub functionals: Vec<ConvexFunctional>,
    pub bound: BoundSpec,
}

impl SensorConfig {
    /// Materialize the spec, resolving `init` bounds against u⁰.
    pub fn build(&self, initial: &nalgebra::DVector<f64>) -> SensorSpec {
        let checks = self
            .functionals
            .iter()
            .map(|f| {
                let bound = match self.bound {
                    BoundSpec::Natural => f.natural_bound().unwrap_or(0.0),
                    BoundSpec::Value(v) => v,
                    BoundSpec::InitialValue => ssp_core::eval_functional(f, initial),
                };
                ssp_core::functionals::SensorCheck {
                    functional: *f,
                    bound,
                }
            })
            .collect();
        SensorSpec {
            scope: self.scope,
            checks,
        }
    }
}

/// Parse an inline functional expression: `floor chi=0.0`, `ceil psi=1.0`,
/// `floor chi=0.0 ceil psi=1.0`, `tv`, `sup`, `max`, `min`.
pub fn parse_functionals(text: &str) -> Result<Vec<ConvexFunctional>, ConfigError> {
    let mut out = Vec::new();
    let mut tokens = text.split_whitespace().peekable();
    let bad = |msg: String| ConfigError::Invalid(format!("functional {text:?}: {msg}"));
    while let Some(tok) = tokens.next() {
        match tok {
            "sup" | "sup_norm" => out.push(ConvexFunctional::SupNorm),
            "tv" | "tv_seminorm" => out.push(ConvexFunctional::TvSeminorm),
            "max" | "max_fun" => out.push(ConvexFunctional::MaxFun),
            "min" | "min_fun" => out.push(ConvexFunctional::MinFun),
            "floor" => {
                let arg = tokens
                    .next()
                    .ok_or_else(|| bad("floor needs chi=<value>".into()))?;
                let chi = arg
                    .strip_prefix("chi=")
                    .ok_or_else(|| bad(format!("expected chi=<value>, got {arg:?}")))?
                    .parse()
                    .map_err(|e| bad(format!("chi: {e}")))?;
                out.push(ConvexFunctional::Floor { chi });
            }
            "ceil" => {
                let arg = tokens
                    .next()
                    .ok_or_else(|| bad("ceil needs psi=<value>".into()))?;
                let psi = arg
                    .strip_prefix("psi=")
                    .ok_or_else(|| bad(format!("expected psi=<value>, got {arg:?}")))?
                    .parse()
                    .map_err(|e| bad(format!("psi: {e}")))?;
                out.push(ConvexFunctional::Ceil { psi });
            }
            other => return Err(bad(format!("unknown functional {other:?}"))),
        }
    }
    if out.is_empty() {
        return Err(bad("empty".into()));
    }
    Ok(out)
}

/// Reference-solver tolerances and cache location.
#[derive(Debug, Clone)]
pub struct ReferenceConfig {
    pub abstol: f64,
    pub reltol: f64,
    pub cache_dir: PathBuf,
}

impl Default for ReferenceConfig {
    fn default() -> Self {
        Self {
            abstol: 1e-14,
            reltol: 1e-13,
            cache_dir: PathBuf::from(".ref_cache"),
        }
    }
}

/// Fully validated experiment description.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub name: String,
    pub problem: String,
    pub params: ProblemParams,
    pub methods: Vec<String>,
    pub step_sizes: Vec<f64>,
    pub horizon: f64,
    pub metrics: Vec<String>,
    /// Species block metrics apply to.
    pub species: usize,
    pub output: Option<PathBuf>,
    pub newton: NewtonConfig,
    pub sensors: BTreeMap<String, SensorConfig>,
    pub reference: ReferenceConfig,
}

pub const KNOWN_METRICS: [&str; 6] = [
    "tv_linf_time",
    "err_linf_time",
    "err_linf_space_T",
    "invariant_drift",
    "rhs_evals",
    "newton_iters",
];

impl ExperimentConfig {
    pub fn from_text(text: &str) -> Result<Self, ConfigError> {
        let raw = RawConfig::parse(text)?;
        Self::from_raw(&raw)
    }

    pub fn from_raw(raw: &RawConfig) -> Result<Self, ConfigError> {
        let sec = "experiment";
        let problem = raw.require(sec, "problem")?.to_string();
        let methods = parse_list(raw.require(sec, "methods")?);
        let step_sizes: Result<Vec<f64>, _> = parse_list(raw.require(sec, "step_sizes")?)
            .iter()
            .map(|s| parse_f64(sec, "step_sizes", s))
            .collect();
        let step_sizes = step_sizes?;
        let horizon = parse_f64(sec, "horizon", raw.require(sec, "horizon")?)?;
        let metrics = match raw.get(sec, "metrics") {
            Some(v) => parse_list(v),
            None => vec!["tv_linf_time".to_string()],
        };
        let species = match raw.get(sec, "species") {
            Some(v) => v.parse().map_err(|e| ConfigError::Value {
                section: sec.into(),
                key: "species".into(),
                msg: format!("{e}"),
            })?,
            None => 0,
        };
        let name = raw
            .get(sec, "name")
            .map(str::to_string)
            .unwrap_or_else(|| problem.clone());
        let output = raw.get(sec, "output").map(PathBuf::from);

        let mut params = ProblemParams::default();
        if let Some(v) = raw.get("problem", "nx") {
            params.nx = v.parse().map_err(|e| ConfigError::Value {
                section: "problem".into(),
                key: "nx".into(),
                msg: format!("{e}"),
            })?;
        }
        if let Some(v) = raw.get("problem", "v") {
            params.v = parse_f64("problem", "v", v)?;
        }
        if let Some(v) = raw.get("problem", "k") {
            params.k = parse_f64("problem", "k", v)?;
        }
        for (i, key) in ["d1", "d2", "d3"].iter().enumerate() {
            if let Some(v) = raw.get("problem", key) {
                params.d[i] = parse_f64("problem", key, v)?;
            }
        }

        let mut newton = NewtonConfig::default();
        if let Some(v) = raw.get("newton", "tol") {
            newton.tol = parse_f64("newton", "tol", v)?;
        }
        if let Some(v) = raw.get("newton", "max_iters") {
            newton.max_iters = v.parse().map_err(|e| ConfigError::Value {
                section: "newton".into(),
                key: "max_iters".into(),
                msg: format!("{e}"),
            })?;
        }
        if let Some(v) = raw.get("newton", "jacobian") {
            newton.jacobian_mode = match v {
                "analytic" => JacobianMode::Analytic,
                "fd" | "finite_difference" => JacobianMode::FiniteDifference,
                other => {
                    return Err(ConfigError::Value {
                        section: "newton".into(),
                        key: "jacobian".into(),
                        msg: format!("expected analytic|fd, got {other:?}"),
                    })
                }
            };
        }
        if let Some(v) = raw.get("newton", "fd_epsilon") {
            newton.fd_epsilon = parse_f64("newton", "fd_epsilon", v)?;
        }
        if let Some(v) = raw.get("newton", "jacobian_reuse") {
            newton.jacobian_reuse = v == "true";
        }

        let mut reference = ReferenceConfig::default();
        if let Some(v) = raw.get("reference", "abstol") {
            reference.abstol = parse_f64("reference", "abstol", v)?;
        }
        if let Some(v) = raw.get("reference", "reltol") {
            reference.reltol = parse_f64("reference", "reltol", v)?;
        }
        if let Some(v) = raw.get("reference", "cache_dir") {
            reference.cache_dir = PathBuf::from(v);
        }

        let mut sensors = BTreeMap::new();
        for (section, entries) in &raw.sections {
            let Some(method) = section.strip_prefix("sensor.") else {
                continue;
            };
            let scope = match entries.get("scope").map(String::as_str) {
                Some("global") => SensorScope::Global,
                Some("local") => SensorScope::Local,
                Some(other) => {
                    return Err(ConfigError::Value {
                        section: section.clone(),
                        key: "scope".into(),
                        msg: format!("expected global|local, got {other:?}"),
                    })
                }
                None => {
                    return Err(ConfigError::Missing {
                        section: section.clone(),
                        key: "scope".into(),
                    })
                }
            };
            let functionals = parse_functionals(entries.get("functional").ok_or_else(|| {
                ConfigError::Missing {
                    section: section.clone(),
                    key: "functional".into(),
                }
            })?)?;
            let bound = match entries.get("bound").map(String::as_str) {
                None | Some("natural") => BoundSpec::Natural,
                Some("init") => BoundSpec::InitialValue,
                Some(v) => BoundSpec::Value(parse_f64(section, "bound", v)?),
            };
            sensors.insert(method.to_string(), SensorConfig {
                scope,
                functionals,
                bound,
            });
        }

        let cfg = Self {
            name,
            problem,
            params,
            methods,
            step_sizes,
            horizon,
            metrics,
            species,
            output,
            newton,
            sensors,
            reference,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.methods.is_empty() {
            return Err(ConfigError::Invalid("method list is empty".into()));
        }
        for m in &self.methods {
            if ssp_core::Method::from_id(m).is_none() {
                return Err(ConfigError::Invalid(format!("unknown method {m:?}")));
            }
            if matches!(m.as_str(), "trbdf2_blend" | "trbdf2_part") && !self.sensors.contains_key(m)
            {
                return Err(ConfigError::Invalid(format!(
                    "method {m} requires a [sensor.{m}] section"
                )));
            }
        }
        if self.step_sizes.is_empty() {
            return Err(ConfigError::Invalid("step_sizes is empty".into()));
        }
        if self.step_sizes.iter().any(|&h| !(h > 0.0)) {
            return Err(ConfigError::Invalid("step sizes must be positive".into()));
        }
        if !(self.horizon > 0.0) {
            return Err(ConfigError::Invalid("horizon must be positive".into()));
        }
        for m in &self.metrics {
            if !KNOWN_METRICS.contains(&m.as_str()) {
                return Err(ConfigError::Invalid(format!("unknown metric {m:?}")));
            }
        }
        for (method, s) in &self.sensors {
            match s.scope {
                SensorScope::Global => {
                    if matches!(s.bound, BoundSpec::Natural)
                        && s.functionals.iter().any(|f| f.natural_bound().is_none())
                    {
                        return Err(ConfigError::Invalid(format!(
                            "[sensor.{method}] global sensor needs an explicit bound"
                        )));
                    }
                }
                SensorScope::Local => {
                    if s.functionals.iter().any(|f| f.natural_bound().is_none()) {
                        return Err(ConfigError::Invalid(format!(
                            "[sensor.{method}] local sensors support floor/ceil functionals"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Canonical text form used for hashing and provenance.
    pub fn canonical_text(&self) -> String {
        let mut s = String::new();
        use std::fmt::Write;
        let _ = writeln!(s, "name={}", self.name);
        let _ = writeln!(s, "problem={}", self.problem);
        let _ = writeln!(
            s,
            "params nx={} v={:.17e} k={:.17e} d={:.17e},{:.17e},{:.17e}",
            self.params.nx, self.params.v, self.params.k, self.params.d[0], self.params.d[1], self.params.d[2]
        );
        let _ = writeln!(s, "methods={}", self.methods.join(","));
        let hs: Vec<String> = self.step_sizes.iter().map(|h| format!("{h:.17e}")).collect();
        let _ = writeln!(s, "step_sizes={}", hs.join(","));
        let _ = writeln!(s, "horizon={:.17e}", self.horizon);
        let _ = writeln!(s, "metrics={}", self.metrics.join(","));
        let _ = writeln!(s, "species={}", self.species);
        let _ = writeln!(
            s,
            "newton tol={:.3e} max_iters={} mode={:?} fd_eps={:.3e} reuse={}",
            self.newton.tol,
            self.newton.max_iters,
            self.newton.jacobian_mode,
            self.newton.fd_epsilon,
            self.newton.jacobian_reuse
        );
        let _ = writeln!(
            s,
            "reference abstol={:.3e} reltol={:.3e}",
            self.reference.abstol, self.reference.reltol
        );
        for (m, sensor) in &self.sensors {
            let _ = writeln!(s, "sensor.{m} scope={:?} fns={:?} bound={:?}", sensor.scope, sensor.functionals, sensor.bound);
        }
        s
    }
}
