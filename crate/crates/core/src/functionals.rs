//! Convex functionals (sup norm, total variation, floor/ceil, max/min) and
//! the global/local sensor machinery built on them.
//!
//! Total variation uses the periodic closure: the wrap term |u₁ − u_m| is
//! included, matching the periodic boundaries of every PDE test.

use nalgebra::DVector;

/// Sensor slack; one order above the stage-solver tolerance so sensors do
/// not trip on Newton noise.
pub const TOL_SENSOR: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ConvexFunctional {
    SupNorm,
    TvSeminorm,
    Floor { chi: f64 },
    Ceil { psi: f64 },
    MaxFun,
    MinFun,
}

impl ConvexFunctional {
    /// The functional value at any state satisfying its bound with equality;
    /// the natural sensor bound for floor/ceil range detectors.
    pub fn natural_bound(&self) -> Option<f64> {
        match self {
            ConvexFunctional::Floor { chi } => Some(-chi),
            ConvexFunctional::Ceil { psi } => Some(*psi),
            _ => None,
        }
    }
}

pub fn eval_functional(f: &ConvexFunctional, u: &DVector<f64>) -> f64 {
    assert!(!u.is_empty(), "functional of an empty state");
    match f {
        ConvexFunctional::SupNorm => u.iter().fold(0.0_f64, |m, &v| m.max(v.abs())),
        ConvexFunctional::TvSeminorm => tv_periodic(u.as_slice()),
        ConvexFunctional::Floor { chi } => {
            let min = u.iter().fold(f64::INFINITY, |m, &v| m.min(v));
            -min.min(*chi)
        }
        ConvexFunctional::Ceil { psi } => {
            let max = u.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
            max.max(*psi)
        }
        ConvexFunctional::MaxFun => u.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v)),
        ConvexFunctional::MinFun => -u.iter().fold(f64::INFINITY, |m, &v| m.min(v)),
    }
}

/// Σ|u_{i+1} − u_i| with index m+1 ≡ 1.
pub fn tv_periodic(u: &[f64]) -> f64 {
    let m = u.len();
    if m < 2 {
        return 0.0;
    }
    let mut tv = 0.0;
    for i in 0..m - 1 {
        tv += (u[i + 1] - u[i]).abs();
    }
    tv + (u[0] - u[m - 1]).abs()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SensorScope {
    Global,
    Local,
}

/// A functional together with the bound it is tested against.
#[derive(Debug, Clone)]
pub struct SensorCheck {
    pub functional: ConvexFunctional,
    pub bound: f64,
}

/// Functional-bound detector. A spec may carry several checks (the mixed
/// floor-and-ceil range sensors); a state passes only if every check holds.
#[derive(Debug, Clone)]
pub struct SensorSpec {
    pub scope: SensorScope,
    pub checks: Vec<SensorCheck>,
}

impl SensorSpec {
    pub fn global(functional: ConvexFunctional, bound: f64) -> Self {
        Self {
            scope: SensorScope::Global,
            checks: vec![SensorCheck { functional, bound }],
        }
    }

    /// Global positivity-style sensor: floor functional at χ with its
    /// natural bound −χ.
    pub fn global_floor(chi: f64) -> Self {
        Self::global(ConvexFunctional::Floor { chi }, -chi)
    }

    pub fn local_floor(chi: f64) -> Self {
        Self {
            scope: SensorScope::Local,
            checks: vec![SensorCheck {
                functional: ConvexFunctional::Floor { chi },
                bound: -chi,
            }],
        }
    }

    /// Componentwise range detector χ ≤ u_i ≤ ψ via a floor and a ceil check.
    pub fn local_range(chi: f64, psi: f64) -> Self {
        Self {
            scope: SensorScope::Local,
            checks: vec![
                SensorCheck {
                    functional: ConvexFunctional::Floor { chi },
                    bound: -chi,
                },
                SensorCheck {
                    functional: ConvexFunctional::Ceil { psi },
                    bound: psi,
                },
            ],
        }
    }
}

/// σ = 1 when every functional bound holds up to `TOL_SENSOR`.
pub fn global_sensor(spec: &SensorSpec, u: &DVector<f64>) -> bool {
    assert_eq!(spec.scope, SensorScope::Global, "global_sensor needs a global spec");
    spec.checks
        .iter()
        .all(|c| eval_functional(&c.functional, u) <= c.bound + TOL_SENSOR)
}

/// Componentwise σ_i; a component passes only when all checks hold for it.
pub fn local_sensor(spec: &SensorSpec, u: &DVector<f64>) -> Vec<bool> {
    assert_eq!(spec.scope, SensorScope::Local, "local_sensor needs a local spec");
    let mut sigma = vec![true; u.len()];
    let mut scalar = DVector::from_element(1, 0.0);
    for (i, s) in sigma.iter_mut().enumerate() {
        scalar[0] = u[i];
        *s = spec
            .checks
            .iter()
            .all(|c| eval_functional(&c.functional, &scalar) <= c.bound + TOL_SENSOR);
    }
    sigma
}
