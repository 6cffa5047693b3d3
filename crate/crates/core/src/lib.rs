//! Monotone and strong-stability-preserving one-step integrators.
//!
//! The crate bundles four things: coefficient-level analysis of Runge-Kutta
//! methods (absolute monotonicity, stability functions), a family of
//! fixed-step integrators centred on TR-BDF2 and its sensor-driven hybrid
//! variants, a library of chemical-kinetics and method-of-lines benchmark
//! problems, and the norms and monitors used to measure runs against
//! high-accuracy reference trajectories.

pub mod functionals;
pub mod integrators;
pub mod metrics;
pub mod newton;
pub mod problems;
pub mod reference;
pub mod tableau;

pub use functionals::{
    eval_functional, global_sensor, local_sensor, ConvexFunctional, SensorScope, SensorSpec,
};
pub use integrators::{
    clip_nonnegative, dirk_step, explicit_euler_step, integrate, mprk2_step, ros2_step,
    trbdf2_blended_step, trbdf2_partitioned_step, trbdf2_two_stage_step, Method, MethodSpec,
    Monitor, RunError, StepError, StepMode, StepOutcome, StepStats, METHOD_IDS,
};
pub use metrics::{
    check_linear_invariants, linf_space_error_at_t, linf_time_error, tv_linf_time,
    workload_summary, MetricsError, RunRecord, WorkloadSummary,
};
pub use newton::{fd_jacobian, newton_solve, JacobianMode, NewtonConfig, NewtonOutcome, SolveError};
pub use problems::{
    limiter, make_advection, make_brusselator, make_buckley_leverett, make_burgers, make_adr,
    make_problem, pd_split, GridSpec, IvpProblem, LimiterKind, ProblemError, ProblemParams,
    ProductionDestructionSystem,
};
pub use reference::{reference_solve, ReferenceError, Trajectory};
pub use tableau::{
    abs_mono_quantities, ark_stability_function, gamma_lstable, hybrid_trbdf2_tableau,
    radius_abs_monotonicity, stability_function, stability_region_grid, structural_precheck,
    trbdf2_family_radius, AnalysisError, ButcherTableau, MonotonicityCertificate, Radius,
    RosenbrockTableau, StabilityGrid, TableauClass, DEFAULT_R_CAP,
};
