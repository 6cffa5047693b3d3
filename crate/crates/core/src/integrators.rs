//! Fixed-step one-step integrators: the DIRK engine, the three TR-BDF2
//! operating modes (plain/clipped, blended, partitioned), the linearly
//! implicit two-stage Rosenbrock method, the modified Patankar scheme,
//! explicit Euler, and the fixed-step driver.

use std::cell::Cell;
use std::collections::BTreeMap;
use std::ops::AddAssign;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::functionals::{eval_functional, global_sensor, local_sensor, ConvexFunctional, SensorScope, SensorSpec};
use crate::metrics::RunRecord;
use crate::newton::{fd_jacobian, newton_solve, JacobianMode, NewtonConfig, SolveError};
use crate::problems::{IvpProblem, ProblemError};
use crate::tableau::{gamma_lstable, hybrid_trbdf2_tableau, ButcherTableau, Radius};

/// Workload counters accumulated over a step or a run.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StepStats {
    pub rhs_evals: u64,
    pub jac_evals: u64,
    pub newton_iters: u64,
    pub linear_solves: u64,
    pub sensor_trips: u64,
    pub fallback_steps: u64,
    /// Positive mass injected by clipping.
    pub clipped_mass: f64,
}

impl AddAssign for StepStats {
    fn add_assign(&mut self, o: Self) {
        self.rhs_evals += o.rhs_evals;
        self.jac_evals += o.jac_evals;
        self.newton_iters += o.newton_iters;
        self.linear_solves += o.linear_solves;
        self.sensor_trips += o.sensor_trips;
        self.fallback_steps += o.fallback_steps;
        self.clipped_mass += o.clipped_mass;
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StepMode {
    Standard,
    FallbackIeIe,
    /// Partitioned step; carries the number of components the probe routed
    /// to the unconditionally monotone coefficients.
    Partitioned { fallback_components: usize },
}

#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub u_next: DVector<f64>,
    pub stats: StepStats,
    pub mode_used: StepMode,
}

#[derive(Debug, Error)]
pub enum StepError {
    #[error("stage {stage}: {source}")]
    Stage {
        stage: usize,
        #[source]
        source: SolveError,
    },
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error("partitioned step requires a finite monotonicity radius")]
    InfiniteRadius,
    #[error("non-finite state produced")]
    BlowUp,
    #[error("method {0} requires a sensor specification")]
    MissingSensor(&'static str),
    #[error("method {0} is not a fixed-step integrator")]
    NotSteppable(&'static str),
    #[error("problem {0} carries no production-destruction decomposition")]
    MissingPd(String),
    #[error("singular linear system in Patankar stage")]
    SingularSystem,
    #[error("singular Jacobian in Rosenbrock stage")]
    SingularJacobian,
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error("step {step} (t = {t:.6}): {source}")]
    Step {
        step: usize,
        t: f64,
        #[source]
        source: StepError,
    },
    #[error("t_end/h = {ratio} is not an integer step count")]
    NonIntegerSteps { ratio: f64 },
}

impl RunError {
    /// Blow-up class failures (including wave-speed violations) get the
    /// infinite sentinel in tables; solver failures are reported as `fail`.
    pub fn is_blowup(&self) -> bool {
        match self {
            RunError::Step { source, .. } => matches!(
                source,
                StepError::BlowUp | StepError::Problem(ProblemError::WaveSpeedSignChange { .. })
            ),
            _ => false,
        }
    }
}

struct EvalCounter<'p> {
    prob: &'p IvpProblem,
    rhs: Cell<u64>,
    jac: Cell<u64>,
}

impl<'p> EvalCounter<'p> {
    fn new(prob: &'p IvpProblem) -> Self {
        Self {
            prob,
            rhs: Cell::new(0),
            jac: Cell::new(0),
        }
    }

    fn rhs(&self, t: f64, u: &DVector<f64>) -> DVector<f64> {
        self.rhs.set(self.rhs.get() + 1);
        (self.prob.rhs)(t, u)
    }

    /// System Jacobian at (t, u) honouring the configured mode; analytic is
    /// used when present unless finite differences are forced.
    fn jacobian(&self, t: f64, u: &DVector<f64>, cfg: &NewtonConfig) -> DMatrix<f64> {
        self.jac.set(self.jac.get() + 1);
        match (&self.prob.jacobian, cfg.jacobian_mode) {
            (Some(j), JacobianMode::Analytic) => j(t, u),
            _ => {
                let f0 = self.rhs(t, u);
                self.rhs.set(self.rhs.get() + u.len() as u64);
                fd_jacobian(|x| (self.prob.rhs)(t, x), u, &f0, cfg.fd_epsilon)
            }
        }
    }

    fn drain_into(&self, stats: &mut StepStats) {
        stats.rhs_evals += self.rhs.replace(0);
        stats.jac_evals += self.jac.replace(0);
    }
}

enum StageCoeff<'a> {
    Scalar(f64),
    Diag(&'a DVector<f64>),
}

impl StageCoeff<'_> {
    fn mul(&self, v: &DVector<f64>) -> DVector<f64> {
        match self {
            StageCoeff::Scalar(c) => v * *c,
            StageCoeff::Diag(d) => v.component_mul(d),
        }
    }
}

/// Solve one implicit stage g = u + h·(acc + coeff ⊙ f(t_i, g)) by damped
/// Newton from the no-extrapolation guess g⁰ = u.
fn solve_stage(
    counter: &EvalCounter,
    t_stage: f64,
    u: &DVector<f64>,
    h: f64,
    coeff: &StageCoeff,
    acc: &DVector<f64>,
    cfg: &NewtonConfig,
    stage_idx: usize,
    stats: &mut StepStats,
) -> Result<DVector<f64>, StepError> {
    let base = u + acc * h;
    let residual = |g: &DVector<f64>| -> DVector<f64> {
        let fg = counter.rhs(t_stage, g);
        g - &base - coeff.mul(&fg) * h
    };
    let jacobian = |g: &DVector<f64>| -> DMatrix<f64> {
        let jac = counter.jacobian(t_stage, g, cfg);
        let m = g.len();
        let mut res_jac = match coeff {
            StageCoeff::Scalar(c) => jac * (-h * *c),
            StageCoeff::Diag(d) => {
                let mut scaled = jac;
                for i in 0..m {
                    let w = -h * d[i];
                    for j in 0..m {
                        scaled[(i, j)] *= w;
                    }
                }
                scaled
            }
        };
        for i in 0..m {
            res_jac[(i, i)] += 1.0;
        }
        res_jac
    };
    let out = newton_solve(residual, jacobian, u, cfg).map_err(|source| StepError::Stage {
        stage: stage_idx,
        source,
    })?;
    stats.newton_iters += out.iters as u64;
    stats.linear_solves += out.linear_solves as u64;
    Ok(out.x)
}

/// One step of a lower-triangular (explicit or DIRK) tableau. Stages are
/// solved sequentially; the update is always formed as u + h Σ bᵢ f(gᵢ),
/// which preserves linear invariants to roundoff regardless of stage
/// solver tolerance.
pub fn dirk_step(
    tab: &ButcherTableau,
    prob: &IvpProblem,
    t: f64,
    u: &DVector<f64>,
    h: f64,
    cfg: &NewtonConfig,
) -> Result<StepOutcome, StepError> {
    assert!(h > 0.0, "step size must be positive");
    let counter = EvalCounter::new(prob);
    let mut stats = StepStats::default();
    let s = tab.s;
    let mut ks: Vec<DVector<f64>> = Vec::with_capacity(s);
    for i in 0..s {
        let t_stage = t + tab.c[i] * h;
        let mut acc = DVector::zeros(u.len());
        for (j, k) in ks.iter().enumerate() {
            let a = tab.a[(i, j)];
            if a != 0.0 {
                acc += k * a;
            }
        }
        let aii = tab.a[(i, i)];
        let g = if aii == 0.0 {
            u + &acc * h
        } else {
            let coeff = StageCoeff::Scalar(aii);
            solve_stage(&counter, t_stage, u, h, &coeff, &acc, cfg, i, &mut stats)?
        };
        ks.push(counter.rhs(t_stage, &g));
    }
    let mut u_next = u.clone();
    for (i, k) in ks.iter().enumerate() {
        if tab.b[i] != 0.0 {
            u_next += k * (tab.b[i] * h);
        }
    }
    counter.drain_into(&mut stats);
    Ok(StepOutcome {
        u_next,
        stats,
        mode_used: StepMode::Standard,
    })
}

/// Direct two-stage form of the hybrid family: a weighted trapezoidal
/// relation over γh followed by a weighted BDF2-like relation.
pub fn trbdf2_two_stage_step(
    prob: &IvpProblem,
    t: f64,
    u: &DVector<f64>,
    h: f64,
    alpha: f64,
    gamma: f64,
    cfg: &NewtonConfig,
) -> Result<StepOutcome, StepError> {
    assert!((0.0..=1.0).contains(&alpha) && gamma > 0.0 && gamma < 1.0);
    let counter = EvalCounter::new(prob);
    let mut stats = StepStats::default();
    let fn0 = counter.rhs(t, u);

    // stage A: x - γh(1-α/2) f(t+γh, x) = u + γh(α/2) f(t, u)
    let acc_a = &fn0 * (gamma * alpha / 2.0);
    let coeff_a = StageCoeff::Scalar(gamma * (1.0 - alpha / 2.0));
    let u_gamma = solve_stage(&counter, t + gamma * h, u, h, &coeff_a, &acc_a, cfg, 0, &mut stats)?;

    // stage B: x - (1-γ)h/D f(t+h, x) = c1 u_γ - c2 u
    let den = alpha * (1.0 - gamma) + 1.0;
    let c1 = (alpha * (1.0 / gamma - 1.0) + 1.0) / den;
    let c2 = alpha * (1.0 - gamma) * (1.0 - gamma) / (gamma * den);
    let base = &u_gamma * c1 - u * c2;
    let coeff_b = StageCoeff::Scalar((1.0 - gamma) / den);
    let residual = |g: &DVector<f64>| -> DVector<f64> {
        let fg = counter.rhs(t + h, g);
        g - &base - coeff_b.mul(&fg) * h
    };
    let jacobian = |g: &DVector<f64>| -> DMatrix<f64> {
        let jac = counter.jacobian(t + h, g, cfg);
        let m = g.len();
        let mut rj = jac * (-h * (1.0 - gamma) / den);
        for i in 0..m {
            rj[(i, i)] += 1.0;
        }
        rj
    };
    let out = newton_solve(residual, jacobian, &u_gamma, cfg)
        .map_err(|source| StepError::Stage { stage: 1, source })?;
    stats.newton_iters += out.iters as u64;
    stats.linear_solves += out.linear_solves as u64;
    counter.drain_into(&mut stats);
    Ok(StepOutcome {
        u_next: out.x,
        stats,
        mode_used: StepMode::Standard,
    })
}

/// Tentative TR-BDF2 step; on a global sensor violation the whole step is
/// recomputed from uⁿ with the α = 0 coefficients.
pub fn trbdf2_blended_step(
    prob: &IvpProblem,
    t: f64,
    u: &DVector<f64>,
    h: f64,
    sensor: &SensorSpec,
    gamma: f64,
    cfg: &NewtonConfig,
) -> Result<StepOutcome, StepError> {
    assert_eq!(sensor.scope, SensorScope::Global, "blended mode needs a global sensor");
    let tab1 = hybrid_trbdf2_tableau(1.0, gamma).expect("valid gamma");
    let tentative = dirk_step(&tab1, prob, t, u, h, cfg)?;
    if global_sensor(sensor, &tentative.u_next) {
        return Ok(tentative);
    }
    let tab0 = hybrid_trbdf2_tableau(0.0, gamma).expect("valid gamma");
    let mut fallback = dirk_step(&tab0, prob, t, u, h, cfg)?;
    let mut stats = tentative.stats;
    stats += fallback.stats;
    stats.sensor_trips += 1;
    stats.fallback_steps += 1;
    fallback.stats = stats;
    fallback.mode_used = StepMode::FallbackIeIe;
    Ok(fallback)
}

/// Forward-Euler probe at the monotonicity-scaled step h/R, componentwise
/// local sensor, then one step of the automatically partitioned method
/// mixing the α = 1 and α = 0 coefficients through S = diag(σ).
pub fn trbdf2_partitioned_step(
    prob: &IvpProblem,
    t: f64,
    u: &DVector<f64>,
    h: f64,
    sensor: &SensorSpec,
    radius: Radius,
    gamma: f64,
    cfg: &NewtonConfig,
) -> Result<StepOutcome, StepError> {
    assert_eq!(sensor.scope, SensorScope::Local, "partitioned mode needs a local sensor");
    let r = match radius {
        Radius::Finite(r) if r > 0.0 => r,
        Radius::Finite(_) => return Err(StepError::InfiniteRadius),
        Radius::Unbounded => return Err(StepError::InfiniteRadius),
    };
    let counter = EvalCounter::new(prob);
    let mut stats = StepStats::default();

    let f0 = counter.rhs(t, u);
    let probe = u + &f0 * (h / r);
    let sigma_bits = local_sensor(sensor, &probe);
    let fallback_components = sigma_bits.iter().filter(|&&b| !b).count();
    stats.sensor_trips += fallback_components as u64;
    let sigma = DVector::from_iterator(
        u.len(),
        sigma_bits.iter().map(|&b| if b { 1.0 } else { 0.0 }),
    );

    let tab1 = hybrid_trbdf2_tableau(1.0, gamma).expect("valid gamma");
    let tab0 = hybrid_trbdf2_tableau(0.0, gamma).expect("valid gamma");
    let mix = |i: usize, j: usize| -> DVector<f64> {
        let a1 = tab1.a[(i, j)];
        let a0 = tab0.a[(i, j)];
        DVector::from_iterator(
            u.len(),
            sigma.iter().map(|&s| a1 * s + a0 * (1.0 - s)),
        )
    };

    let s = 3;
    let mut ks: Vec<DVector<f64>> = Vec::with_capacity(s);
    // stage 1 is explicit in both tableaux (g¹ = uⁿ)
    ks.push(counter.rhs(t, u));
    for i in 1..s {
        let t_stage = t + tab1.c[i] * h;
        let mut acc = DVector::zeros(u.len());
        for (j, k) in ks.iter().enumerate() {
            acc += mix(i, j).component_mul(k);
        }
        let diag = mix(i, i);
        counter.drain_into(&mut stats);
        let g = if diag.iter().all(|&v| v == 0.0) {
            u + &acc * h
        } else {
            let coeff = StageCoeff::Diag(&diag);
            solve_stage(&counter, t_stage, u, h, &coeff, &acc, cfg, i, &mut stats)?
        };
        ks.push(counter.rhs(t_stage, &g));
    }
    let mut u_next = u.clone();
    for (i, k) in ks.iter().enumerate() {
        let bw = DVector::from_iterator(
            u.len(),
            sigma.iter().map(|&s| tab1.b[i] * s + tab0.b[i] * (1.0 - s)),
        );
        u_next += bw.component_mul(k) * h;
    }
    counter.drain_into(&mut stats);
    Ok(StepOutcome {
        u_next,
        stats,
        mode_used: StepMode::Partitioned {
            fallback_components,
        },
    })
}

/// Two-stage linearly implicit Rosenbrock method with γ = 1 + 1/√2:
/// (I − γhJ)k₁ = f(u); (I − γhJ)k₂ = f(u + hk₁) − 2γhJk₁;
/// u⁺ = u + h(k₁ + k₂)/2.
pub fn ros2_step(
    prob: &IvpProblem,
    t: f64,
    u: &DVector<f64>,
    h: f64,
    cfg: &NewtonConfig,
) -> Result<StepOutcome, StepError> {
    let gamma = 1.0 + 1.0 / std::f64::consts::SQRT_2;
    let counter = EvalCounter::new(prob);
    let mut stats = StepStats::default();
    let jac = counter.jacobian(t, u, cfg);
    let m = u.len();
    let mut sys = &jac * (-gamma * h);
    for i in 0..m {
        sys[(i, i)] += 1.0;
    }
    let lu = sys.lu();
    let f0 = counter.rhs(t, u);
    let k1 = lu.solve(&f0).ok_or(StepError::SingularJacobian)?;
    let f1 = counter.rhs(t + h, &(u + &k1 * h));
    let rhs2 = f1 - (&jac * &k1) * (2.0 * gamma * h);
    let k2 = lu.solve(&rhs2).ok_or(StepError::SingularJacobian)?;
    stats.linear_solves += 2;
    counter.drain_into(&mut stats);
    Ok(StepOutcome {
        u_next: u + (k1 + k2) * (h / 2.0),
        stats,
        mode_used: StepMode::Standard,
    })
}

/// Second-order modified Patankar scheme over the production flow matrix
/// p_ij (with d_ij = p_ji). Stage-1 weights divide by uⁿ in cancelled
/// polynomial form, so states with exact zeros are admissible; stage-2
/// denominators are the stage-1 values, guarded by `FLOOR_EPS`.
pub fn mprk2_step(
    prob: &IvpProblem,
    u: &DVector<f64>,
    h: f64,
) -> Result<StepOutcome, StepError> {
    let pd = prob
        .pd
        .as_ref()
        .ok_or_else(|| StepError::MissingPd(prob.name.clone()))?;
    let ns = pd.n_species;
    for i in 0..ns {
        if u[i] < 0.0 {
            return Err(StepError::Problem(ProblemError::NonpositiveState {
                index: i,
                value: u[i],
            }));
        }
    }
    let mut stats = StepStats::default();
    // stage 1: (I + h·diag(colsum W) − h·W) a = u
    let w = pd.flow_quotients(u);
    stats.rhs_evals += 1;
    let mut m1 = DMatrix::identity(ns, ns);
    for j in 0..ns {
        let col: f64 = (0..ns).map(|i| w[(i, j)]).sum();
        m1[(j, j)] += h * col;
        for i in 0..ns {
            m1[(i, j)] -= h * w[(i, j)];
        }
    }
    let a = m1.lu().solve(u).ok_or(StepError::SingularSystem)?;
    stats.linear_solves += 1;

    // stage 2 with averaged production values weighted by stage-1 states
    let mut p_sum = pd.production_values(&a);
    stats.rhs_evals += 1;
    for j in 0..ns {
        for i in 0..ns {
            p_sum[(i, j)] += w[(i, j)] * u[j];
        }
    }
    let mut m2 = DMatrix::identity(ns, ns);
    for j in 0..ns {
        for i in 0..ns {
            let num = p_sum[(i, j)];
            if num == 0.0 {
                continue;
            }
            if a[j] <= crate::problems::FLOOR_EPS {
                return Err(StepError::Problem(ProblemError::NonpositiveState {
                    index: j,
                    value: a[j],
                }));
            }
            let wgt = 0.5 * h * num / a[j];
            m2[(i, j)] -= wgt;
            m2[(j, j)] += wgt;
        }
    }
    let u_next = m2.lu().solve(u).ok_or(StepError::SingularSystem)?;
    stats.linear_solves += 1;
    Ok(StepOutcome {
        u_next,
        stats,
        mode_used: StepMode::Standard,
    })
}

pub fn explicit_euler_step(prob: &IvpProblem, t: f64, u: &DVector<f64>, h: f64) -> StepOutcome {
    let f = (prob.rhs)(t, u);
    StepOutcome {
        u_next: u + f * h,
        stats: StepStats {
            rhs_evals: 1,
            ..Default::default()
        },
        mode_used: StepMode::Standard,
    }
}

/// Project negative components to zero; returns the clipped state and the
/// mass added by the projection.
pub fn clip_nonnegative(u: &DVector<f64>) -> (DVector<f64>, f64) {
    let mut added = 0.0;
    let clipped = u.map(|v| {
        if v < 0.0 {
            added += -v;
            0.0
        } else {
            v
        }
    });
    (clipped, added)
}

/// Method identifiers of the shipped integrators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Ie,
    Cn,
    Sdirk22,
    TrBdf2,
    TrBdf2Clip,
    TrBdf2Blend,
    TrBdf2Part,
    Ros2,
    Mprk2,
    Ee,
    IeIe,
    Reference,
}

pub const METHOD_IDS: [(&str, Method); 12] = [
    ("ie", Method::Ie),
    ("cn", Method::Cn),
    ("sdirk22", Method::Sdirk22),
    ("trbdf2", Method::TrBdf2),
    ("trbdf2_clip", Method::TrBdf2Clip),
    ("trbdf2_blend", Method::TrBdf2Blend),
    ("trbdf2_part", Method::TrBdf2Part),
    ("ros2", Method::Ros2),
    ("mprk2", Method::Mprk2),
    ("ee", Method::Ee),
    ("ieie", Method::IeIe),
    ("reference", Method::Reference),
];

impl Method {
    pub fn from_id(id: &str) -> Option<Method> {
        METHOD_IDS.iter().find(|(s, _)| *s == id).map(|(_, m)| *m)
    }

    pub fn id(&self) -> &'static str {
        METHOD_IDS
            .iter()
            .find(|(_, m)| m == self)
            .map(|(s, _)| *s)
            .expect("method in table")
    }

    /// Tableau used for stepping and analysis (None for tableau-free methods).
    pub fn analysis_tableau(&self, gamma: f64) -> Option<ButcherTableau> {
        match self {
            Method::Ie => Some(ButcherTableau::implicit_euler()),
            Method::Cn => Some(ButcherTableau::crank_nicolson()),
            Method::Sdirk22 => Some(ButcherTableau::sdirk22()),
            Method::TrBdf2 | Method::TrBdf2Clip | Method::TrBdf2Blend | Method::TrBdf2Part => {
                Some(ButcherTableau::trbdf2(gamma).expect("valid gamma"))
            }
            Method::Ros2 => Some(crate::tableau::RosenbrockTableau::ros2().underlying_pair()),
            Method::Ee => Some(ButcherTableau::explicit_euler()),
            Method::IeIe => Some(ButcherTableau::ieie_reduced(gamma).expect("valid gamma")),
            Method::Mprk2 | Method::Reference => None,
        }
    }
}

/// A method bound to the run-time choices it needs: sensors for the hybrid
/// variants, the family parameter γ and the probe radius.
#[derive(Debug, Clone)]
pub struct MethodSpec {
    pub method: Method,
    pub sensor: Option<SensorSpec>,
    pub gamma: f64,
    pub probe_radius: Radius,
}

impl MethodSpec {
    pub fn new(method: Method) -> Self {
        Self {
            method,
            sensor: None,
            gamma: gamma_lstable(),
            probe_radius: Radius::Finite(1.0 + std::f64::consts::SQRT_2),
        }
    }

    pub fn with_sensor(mut self, sensor: SensorSpec) -> Self {
        self.sensor = Some(sensor);
        self
    }

    pub fn step(
        &self,
        prob: &IvpProblem,
        t: f64,
        u: &DVector<f64>,
        h: f64,
        cfg: &NewtonConfig,
    ) -> Result<StepOutcome, StepError> {
        match self.method {
            Method::Ie => dirk_step(&ButcherTableau::implicit_euler(), prob, t, u, h, cfg),
            Method::Cn => dirk_step(&ButcherTableau::crank_nicolson(), prob, t, u, h, cfg),
            Method::Sdirk22 => dirk_step(&ButcherTableau::sdirk22(), prob, t, u, h, cfg),
            Method::TrBdf2 => dirk_step(
                &ButcherTableau::trbdf2(self.gamma).expect("valid gamma"),
                prob,
                t,
                u,
                h,
                cfg,
            ),
            Method::TrBdf2Clip => {
                let tab = ButcherTableau::trbdf2(self.gamma).expect("valid gamma");
                let mut out = dirk_step(&tab, prob, t, u, h, cfg)?;
                let (clipped, added) = clip_nonnegative(&out.u_next);
                out.u_next = clipped;
                out.stats.clipped_mass += added;
                Ok(out)
            }
            Method::TrBdf2Blend => {
                let sensor = self
                    .sensor
                    .as_ref()
                    .ok_or(StepError::MissingSensor("trbdf2_blend"))?;
                trbdf2_blended_step(prob, t, u, h, sensor, self.gamma, cfg)
            }
            Method::TrBdf2Part => {
                let sensor = self
                    .sensor
                    .as_ref()
                    .ok_or(StepError::MissingSensor("trbdf2_part"))?;
                trbdf2_partitioned_step(prob, t, u, h, sensor, self.probe_radius, self.gamma, cfg)
            }
            Method::Ros2 => ros2_step(prob, t, u, h, cfg),
            Method::Mprk2 => mprk2_step(prob, u, h),
            Method::Ee => Ok(explicit_euler_step(prob, t, u, h)),
            Method::IeIe => dirk_step(
                &ButcherTableau::ieie_reduced(self.gamma).expect("valid gamma"),
                prob,
                t,
                u,
                h,
                cfg,
            ),
            Method::Reference => Err(StepError::NotSteppable("reference")),
        }
    }
}

/// A per-step functional trace, optionally restricted to one species block.
#[derive(Debug, Clone)]
pub struct Monitor {
    pub name: String,
    pub functional: ConvexFunctional,
    pub species: Option<usize>,
}

impl Monitor {
    pub fn eval(&self, u: &DVector<f64>, cells: usize) -> f64 {
        match self.species {
            Some(s) => {
                let block = u.rows(s * cells, cells).into_owned();
                eval_functional(&self.functional, &block)
            }
            None => eval_functional(&self.functional, u),
        }
    }
}

/// Fixed-step driver: N_t = t_end/h applications of the method with per-step
/// monitor recording and workload accumulation. States are validated
/// (finiteness, problem guard) after every accepted step.
pub fn integrate(
    spec: &MethodSpec,
    prob: &IvpProblem,
    u0: &DVector<f64>,
    h: f64,
    t_end: f64,
    monitors: &[Monitor],
    cfg: &NewtonConfig,
) -> Result<RunRecord, RunError> {
    let ratio = t_end / h;
    let n = ratio.round();
    if (ratio - n).abs() > 1e-9 * ratio.abs().max(1.0) || n < 0.0 {
        return Err(RunError::NonIntegerSteps { ratio });
    }
    let n = n as usize;
    let cells = prob.cells_per_species();
    let wall_start = std::time::Instant::now();

    let mut times = Vec::with_capacity(n + 1);
    let mut states = Vec::with_capacity(n + 1);
    let mut traces: BTreeMap<String, Vec<f64>> = monitors
        .iter()
        .map(|m| (m.name.clone(), Vec::with_capacity(n + 1)))
        .collect();
    let mut stats = StepStats::default();

    let record = |t: f64, u: &DVector<f64>, times: &mut Vec<f64>, states: &mut Vec<DVector<f64>>, traces: &mut BTreeMap<String, Vec<f64>>| {
        times.push(t);
        states.push(u.clone());
        for m in monitors {
            traces.get_mut(&m.name).unwrap().push(m.eval(u, cells));
        }
    };

    let mut u = u0.clone();
    record(0.0, &u, &mut times, &mut states, &mut traces);
    for k in 0..n {
        let t = k as f64 * h;
        let out = spec
            .step(prob, t, &u, h, cfg)
            .map_err(|source| RunError::Step {
                step: k,
                t,
                source,
            })?;
        stats += out.stats;
        u = out.u_next;
        let t_next = (k + 1) as f64 * h;
        if !u.iter().all(|v| v.is_finite()) {
            return Err(RunError::Step {
                step: k,
                t,
                source: StepError::BlowUp,
            });
        }
        prob.check_state(&u).map_err(|e| RunError::Step {
            step: k,
            t,
            source: StepError::Problem(e),
        })?;
        record(t_next, &u, &mut times, &mut states, &mut traces);
    }

    Ok(RunRecord {
        method_id: spec.method.id().to_string(),
        problem_id: prob.name.clone(),
        h,
        times,
        states,
        species: prob.species,
        stats,
        monitor_traces: traces,
        wall_ms: wall_start.elapsed().as_secs_f64() * 1e3,
    })
}
