//! Experiment execution: one integration per (method, step-size) cell,
//! metric evaluation against a cached reference trajectory, deterministic
//! CSV emission.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::DVector;
use sha2::{Digest, Sha256};
use thiserror::Error;

use ssp_core::{
    integrate, linf_space_error_at_t, linf_time_error, make_problem, reference_solve,
    tv_linf_time, IvpProblem, Method, MethodSpec, RunRecord, Trajectory,
};

use crate::config::{ConfigError, ExperimentConfig};

#[derive(Debug, Error)]
pub enum RunnerError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("problem construction failed: {0}")]
    Problem(#[from] ssp_core::ProblemError),
    #[error("reference solve failed: {0}")]
    Reference(#[from] ssp_core::ReferenceError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// One table cell: a value, the blow-up sentinel, or a solver failure.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CellValue {
    Value(f64),
    Inf,
    Fail,
}

impl CellValue {
    pub fn format(&self) -> String {
        match self {
            CellValue::Value(v) if v.is_finite() => format!("{v:.8}"),
            CellValue::Value(_) | CellValue::Inf => "inf".to_string(),
            CellValue::Fail => "fail".to_string(),
        }
    }

    pub fn value(&self) -> Option<f64> {
        match self {
            CellValue::Value(v) => Some(*v),
            _ => None,
        }
    }

    pub fn is_inf(&self) -> bool {
        matches!(self, CellValue::Inf) || matches!(self, CellValue::Value(v) if v.is_infinite())
    }
}

/// Rows keyed by (h, method) with one column per metric, plus a provenance
/// header recording the config hash and tool version.
#[derive(Debug, Clone)]
pub struct TableArtifact {
    pub name: String,
    pub config_hash: String,
    pub tool_version: String,
    /// Ascending step sizes.
    pub step_sizes: Vec<f64>,
    /// Fixed method order from the config.
    pub methods: Vec<String>,
    pub metrics: Vec<String>,
    cells: BTreeMap<(String, usize, String), CellValue>,
    /// Workload rows keyed like cells: (h index, method).
    pub workload: BTreeMap<(usize, String), WorkloadRow>,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct WorkloadRow {
    pub rhs_evals: u64,
    pub jac_evals: u64,
    pub newton_iters: u64,
    pub linear_solves: u64,
    pub wall_ms: f64,
}

impl TableArtifact {
    pub fn cell(&self, metric: &str, h_idx: usize, method: &str) -> CellValue {
        self.cells
            .get(&(metric.to_string(), h_idx, method.to_string()))
            .copied()
            .unwrap_or(CellValue::Fail)
    }

    fn set(&mut self, metric: &str, h_idx: usize, method: &str, v: CellValue) {
        self.cells
            .insert((metric.to_string(), h_idx, method.to_string()), v);
    }

    /// One CSV per metric: `h` column then one column per method.
    pub fn metric_csv(&self, metric: &str) -> String {
        let mut out = String::new();
        use std::fmt::Write;
        let _ = writeln!(
            out,
            "# table={} metric={} config={} version={}",
            self.name, metric, self.config_hash, self.tool_version
        );
        let _ = writeln!(out, "h,{}", self.methods.join(","));
        for (i, h) in self.step_sizes.iter().enumerate() {
            let row: Vec<String> = self
                .methods
                .iter()
                .map(|m| self.cell(metric, i, m).format())
                .collect();
            let _ = writeln!(out, "{h:.8},{}", row.join(","));
        }
        out
    }

    /// Combined long-form CSV: one row per (h, method).
    pub fn combined_csv(&self) -> String {
        let mut out = String::new();
        use std::fmt::Write;
        let _ = writeln!(
            out,
            "# table={} config={} version={}",
            self.name, self.config_hash, self.tool_version
        );
        let _ = writeln!(out, "h,method,{}", self.metrics.join(","));
        for (i, h) in self.step_sizes.iter().enumerate() {
            for m in &self.methods {
                let row: Vec<String> = self
                    .metrics
                    .iter()
                    .map(|metric| self.cell(metric, i, m).format())
                    .collect();
                let _ = writeln!(out, "{h:.8},{m},{}", row.join(","));
            }
        }
        out
    }

    /// Workload CSV; the wall-time column is informational and excluded
    /// from determinism comparisons.
    pub fn workload_csv(&self) -> String {
        let mut out = String::new();
        use std::fmt::Write;
        let _ = writeln!(
            out,
            "# table={} config={} version={}",
            self.name, self.config_hash, self.tool_version
        );
        let _ = writeln!(out, "h,method,rhs_evals,jac_evals,newton_iters,linear_solves,wall_ms");
        for (i, h) in self.step_sizes.iter().enumerate() {
            for m in &self.methods {
                if let Some(w) = self.workload.get(&(i, m.clone())) {
                    let _ = writeln!(
                        out,
                        "{h:.8},{m},{},{},{},{},{:.3}",
                        w.rhs_evals, w.jac_evals, w.newton_iters, w.linear_solves, w.wall_ms
                    );
                }
            }
        }
        out
    }

    pub fn write_csvs(&self, stem: &Path) -> std::io::Result<Vec<PathBuf>> {
        if let Some(dir) = stem.parent() {
            if !dir.as_os_str().is_empty() {
                fs::create_dir_all(dir)?;
            }
        }
        let mut written = Vec::new();
        for metric in &self.metrics {
            let path = stem.with_file_name(format!(
                "{}_{}.csv",
                stem.file_name().unwrap().to_string_lossy(),
                metric
            ));
            fs::write(&path, self.metric_csv(metric))?;
            written.push(path);
        }
        let combined = stem.with_file_name(format!(
            "{}_combined.csv",
            stem.file_name().unwrap().to_string_lossy()
        ));
        fs::write(&combined, self.combined_csv())?;
        written.push(combined);
        let workload = stem.with_file_name(format!(
            "{}_workload.csv",
            stem.file_name().unwrap().to_string_lossy()
        ));
        fs::write(&workload, self.workload_csv())?;
        written.push(workload);
        Ok(written)
    }
}

/// Step count for a horizon that need not be an exact multiple of h:
/// round when within 1e-9 of an integer, otherwise truncate.
pub fn step_count(horizon: f64, h: f64) -> usize {
    let q = horizon / h;
    let r = q.round();
    if (q - r).abs() <= 1e-9 * q.abs().max(1.0) {
        r as usize
    } else {
        q.floor() as usize
    }
}

pub fn config_hash(cfg: &ExperimentConfig) -> String {
    let mut hasher = Sha256::new();
    hasher.update(cfg.canonical_text().as_bytes());
    let digest = hasher.finalize();
    digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

/// Reference trajectory with a content-addressed disk cache keyed by
/// problem, parameters, tolerances and horizon.
pub fn cached_reference(
    cfg: &ExperimentConfig,
    prob: &IvpProblem,
) -> Result<Trajectory, RunnerError> {
    let mut hasher = Sha256::new();
    hasher.update(format!(
        "{} nx={} v={:.17e} k={:.17e} d={:.17e},{:.17e},{:.17e} T={:.17e} atol={:.3e} rtol={:.3e} stiff={}",
        cfg.problem,
        cfg.params.nx,
        cfg.params.v,
        cfg.params.k,
        cfg.params.d[0],
        cfg.params.d[1],
        cfg.params.d[2],
        cfg.horizon,
        cfg.reference.abstol,
        cfg.reference.reltol,
        prob.stiff,
    ));
    let key: String = hasher
        .finalize()
        .iter()
        .take(8)
        .map(|b| format!("{b:02x}"))
        .collect();
    let path = cfg
        .reference
        .cache_dir
        .join(format!("{}_{key}.json", cfg.problem));
    if let Ok(bytes) = fs::read(&path) {
        if let Ok(traj) = serde_json::from_slice::<Trajectory>(&bytes) {
            return Ok(traj);
        }
    }
    let traj = reference_solve(
        prob,
        0.0,
        cfg.horizon,
        cfg.reference.abstol,
        cfg.reference.reltol,
    )?;
    fs::create_dir_all(&cfg.reference.cache_dir)?;
    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(&serde_json::to_vec(&traj).expect("trajectory serializes"))?;
    }
    let _ = fs::rename(&tmp, &path);
    Ok(traj)
}

fn build_method_spec(
    cfg: &ExperimentConfig,
    id: &str,
    initial: &DVector<f64>,
) -> MethodSpec {
    let method = Method::from_id(id).expect("validated");
    let mut spec = MethodSpec::new(method);
    if let Some(sensor_cfg) = cfg.sensors.get(id) {
        spec = spec.with_sensor(sensor_cfg.build(initial));
    }
    spec
}

/// The maximum periodic TV of one species block over the reference
/// trajectory's own nodes (no interpolation).
fn reference_tv(traj: &Trajectory, species: usize, species_count: usize) -> f64 {
    let mut worst = 0.0_f64;
    for state in &traj.states {
        let cells = state.len() / species_count;
        let block = &state[species * cells..(species + 1) * cells];
        worst = worst.max(ssp_core::functionals::tv_periodic(block));
    }
    worst
}

fn reference_run_at(
    traj: &Trajectory,
    times: &[f64],
    template: &RunRecord,
) -> RunRecord {
    RunRecord {
        method_id: "reference".into(),
        states: times.iter().map(|&t| traj.sample(t)).collect(),
        times: times.to_vec(),
        ..template.clone()
    }
}

/// Execute every (method, h) pair of the experiment and assemble the table.
/// Per-cell failures become sentinel cells rather than aborting the sweep.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<TableArtifact, RunnerError> {
    cfg.validate()?;
    let prob = make_problem(&cfg.problem, &cfg.params)?;
    let mut step_sizes = cfg.step_sizes.clone();
    step_sizes.sort_by(|a, b| a.partial_cmp(b).unwrap());

    let needs_reference = cfg.methods.iter().any(|m| m == "reference")
        || cfg
            .metrics
            .iter()
            .any(|m| m == "err_linf_time" || m == "err_linf_space_T");
    let reference = if needs_reference {
        Some(cached_reference(cfg, &prob)?)
    } else {
        None
    };

    let mut table = TableArtifact {
        name: cfg.name.clone(),
        config_hash: config_hash(cfg),
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        step_sizes: step_sizes.clone(),
        methods: cfg.methods.clone(),
        metrics: cfg.metrics.clone(),
        cells: BTreeMap::new(),
        workload: BTreeMap::new(),
    };

    for (h_idx, &h) in step_sizes.iter().enumerate() {
        let n = step_count(cfg.horizon, h);
        let t_eff = n as f64 * h;
        for method_id in &cfg.methods {
            if method_id == "reference" {
                if let Some(traj) = &reference {
                    let tv = reference_tv(traj, cfg.species, prob.species);
                    for metric in &cfg.metrics {
                        let cell = match metric.as_str() {
                            "tv_linf_time" => CellValue::Value(tv),
                            "err_linf_time" | "err_linf_space_T" => CellValue::Value(0.0),
                            _ => CellValue::Fail,
                        };
                        table.set(metric, h_idx, method_id, cell);
                    }
                }
                continue;
            }
            let spec = build_method_spec(cfg, method_id, &prob.initial);
            let run = integrate(&spec, &prob, &prob.initial, h, t_eff, &[], &cfg.newton);
            match run {
                Ok(run) => {
                    table.workload.insert(
                        (h_idx, method_id.clone()),
                        WorkloadRow {
                            rhs_evals: run.stats.rhs_evals,
                            jac_evals: run.stats.jac_evals,
                            newton_iters: run.stats.newton_iters,
                            linear_solves: run.stats.linear_solves,
                            wall_ms: run.wall_ms,
                        },
                    );
                    let ref_run = reference
                        .as_ref()
                        .map(|traj| reference_run_at(traj, &run.times, &run));
                    for metric in &cfg.metrics {
                        let cell = metric_cell(metric, &run, ref_run.as_ref(), &prob, cfg.species);
                        table.set(metric, h_idx, method_id, cell);
                    }
                }
                Err(err) => {
                    let cell = if err.is_blowup() {
                        CellValue::Inf
                    } else {
                        CellValue::Fail
                    };
                    for metric in &cfg.metrics {
                        table.set(metric, h_idx, method_id, cell);
                    }
                }
            }
        }
    }

    if let Some(out) = &cfg.output {
        table.write_csvs(out)?;
    }
    Ok(table)
}

fn metric_cell(
    metric: &str,
    run: &RunRecord,
    ref_run: Option<&RunRecord>,
    prob: &IvpProblem,
    species: usize,
) -> CellValue {
    match metric {
        "tv_linf_time" => {
            let tv = tv_linf_time(run, species);
            if tv.is_finite() {
                CellValue::Value(tv)
            } else {
                CellValue::Inf
            }
        }
        "err_linf_time" => match ref_run {
            Some(r) => match linf_time_error(run, r, species) {
                Ok(v) => CellValue::Value(v),
                Err(_) => CellValue::Fail,
            },
            None => CellValue::Fail,
        },
        "err_linf_space_T" => match ref_run {
            Some(r) => match linf_space_error_at_t(run, r, species) {
                Ok(v) => CellValue::Value(v),
                Err(_) => CellValue::Fail,
            },
            None => CellValue::Fail,
        },
        "invariant_drift" => match ssp_core::check_linear_invariants(run, prob) {
            Ok(v) => CellValue::Value(v),
            Err(_) => CellValue::Fail,
        },
        "rhs_evals" => CellValue::Value(run.stats.rhs_evals as f64),
        "newton_iters" => CellValue::Value(run.stats.newton_iters as f64),
        _ => CellValue::Fail,
    }
}
