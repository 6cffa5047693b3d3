//! Error norms, TV monitoring, invariant checks and workload accounting
//! over run records.

use std::collections::BTreeMap;

use nalgebra::DVector;
use thiserror::Error;

use crate::functionals::tv_periodic;
use crate::integrators::StepStats;
use crate::problems::IvpProblem;

/// TV values above this report as the infinite sentinel (blow-up).
pub const TV_BLOWUP: f64 = 1e6;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("sample times differ at index {index}: {a} vs {b}")]
    TimeGridMismatch { index: usize, a: f64, b: f64 },
    #[error("state dimensions differ: {a} vs {b}")]
    DimensionMismatch { a: usize, b: usize },
    #[error("problem {0} declares no linear invariants")]
    NoInvariants(String),
}

/// Trajectory of one fixed-step run plus its workload counters and
/// per-step monitor traces.
#[derive(Debug, Clone)]
pub struct RunRecord {
    pub method_id: String,
    pub problem_id: String,
    pub h: f64,
    pub times: Vec<f64>,
    pub states: Vec<DVector<f64>>,
    /// Species blocks in the state layout.
    pub species: usize,
    pub stats: StepStats,
    pub monitor_traces: BTreeMap<String, Vec<f64>>,
    pub wall_ms: f64,
}

impl RunRecord {
    pub fn cells(&self) -> usize {
        self.states.first().map_or(0, |s| s.len()) / self.species
    }

    fn species_block<'a>(&self, state: &'a DVector<f64>, species: usize) -> &'a [f64] {
        let cells = state.len() / self.species;
        &state.as_slice()[species * cells..(species + 1) * cells]
    }
}

fn check_alignment(run: &RunRecord, reference: &RunRecord) -> Result<(), MetricsError> {
    if run.times.len() != reference.times.len() {
        return Err(MetricsError::TimeGridMismatch {
            index: run.times.len().min(reference.times.len()),
            a: f64::NAN,
            b: f64::NAN,
        });
    }
    for (i, (&a, &b)) in run.times.iter().zip(&reference.times).enumerate() {
        if (a - b).abs() > 1e-12 * a.abs().max(1.0) {
            return Err(MetricsError::TimeGridMismatch { index: i, a, b });
        }
    }
    Ok(())
}

/// max over steps of |u_i^n − ũ_i^n| for one species component/block.
pub fn linf_time_error(
    run: &RunRecord,
    reference: &RunRecord,
    species: usize,
) -> Result<f64, MetricsError> {
    check_alignment(run, reference)?;
    let mut err: f64 = 0.0;
    for (u, r) in run.states.iter().zip(&reference.states) {
        if u.len() != r.len() {
            return Err(MetricsError::DimensionMismatch {
                a: u.len(),
                b: r.len(),
            });
        }
        let ub = run.species_block(u, species);
        let rb = reference.species_block(r, species);
        for (a, b) in ub.iter().zip(rb) {
            err = err.max((a - b).abs());
        }
    }
    Ok(err)
}

/// max over grid points of |u_{i,j}^T − ũ_{i,j}^T| at the shared final time.
pub fn linf_space_error_at_t(
    run: &RunRecord,
    reference: &RunRecord,
    species: usize,
) -> Result<f64, MetricsError> {
    let (tu, tr) = (
        *run.times.last().expect("nonempty run"),
        *reference.times.last().expect("nonempty reference"),
    );
    if (tu - tr).abs() > 1e-12 * tu.abs().max(1.0) {
        return Err(MetricsError::TimeGridMismatch {
            index: run.times.len() - 1,
            a: tu,
            b: tr,
        });
    }
    let u = run.states.last().unwrap();
    let r = reference.states.last().unwrap();
    if u.len() != r.len() {
        return Err(MetricsError::DimensionMismatch {
            a: u.len(),
            b: r.len(),
        });
    }
    let ub = run.species_block(u, species);
    let rb = reference.species_block(r, species);
    Ok(ub
        .iter()
        .zip(rb)
        .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs())))
}

/// max over steps of the periodic total variation of one species block;
/// the infinite sentinel on non-finite states or TV beyond `TV_BLOWUP`.
pub fn tv_linf_time(run: &RunRecord, species: usize) -> f64 {
    let mut worst: f64 = 0.0;
    for state in &run.states {
        if !state.iter().all(|v| v.is_finite()) {
            return f64::INFINITY;
        }
        let tv = tv_periodic(run.species_block(state, species));
        if tv > TV_BLOWUP {
            return f64::INFINITY;
        }
        worst = worst.max(tv);
    }
    worst
}

/// max over steps of ‖Aᵀu^n − Aᵀu⁰‖_∞.
pub fn check_linear_invariants(run: &RunRecord, prob: &IvpProblem) -> Result<f64, MetricsError> {
    let inv = prob
        .invariants
        .as_ref()
        .ok_or_else(|| MetricsError::NoInvariants(prob.name.clone()))?;
    let initial = inv * &run.states[0];
    let mut drift: f64 = 0.0;
    for state in &run.states[1..] {
        let v = inv * state - &initial;
        drift = drift.max(v.amax());
    }
    Ok(drift)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WorkloadSummary {
    pub rhs_evals: u64,
    pub jac_evals: u64,
    pub newton_iters: u64,
    pub linear_solves: u64,
    pub wall_ms: f64,
}

pub fn workload_summary(run: &RunRecord) -> WorkloadSummary {
    WorkloadSummary {
        rhs_evals: run.stats.rhs_evals,
        jac_evals: run.stats.jac_evals,
        newton_iters: run.stats.newton_iters,
        linear_solves: run.stats.linear_solves,
        wall_ms: run.wall_ms,
    }
}
