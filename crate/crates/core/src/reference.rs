//! Reference trajectories: an adaptive embedded 5(4) explicit pair for
//! nonstiff problems and a fixed-step TR-BDF2 fallback for stiff ones,
//! with cubic Hermite dense output at arbitrary sample instants.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::integrators::{dirk_step, StepError};
use crate::newton::NewtonConfig;
use crate::problems::IvpProblem;
use crate::tableau::{gamma_lstable, ButcherTableau};

/// Number of fixed steps of the stiff reference path (T/2²⁰).
pub const STIFF_STEPS: u32 = 1 << 20;
/// Nodes kept for dense output on the stiff path.
const STIFF_NODES: u32 = 1 << 12;
/// Floor of the Richardson verification gate; a defect beyond
/// max(10·abstol, this) marks the reference unverified.
pub const RICHARDSON_FLOOR: f64 = 1e-7;

#[derive(Debug, Error)]
pub enum ReferenceError {
    #[error("required step {h:.3e} underflows at t = {t:.6}")]
    StepUnderflow { t: f64, h: f64 },
    #[error("stiff reference unverified: Richardson defect {defect:.3e} exceeds {bound:.3e}")]
    Unverified { defect: f64, bound: f64 },
    #[error("stiff reference step failed: {0}")]
    Step(#[from] StepError),
}

/// Dense-output trajectory: states and derivatives at accepted nodes,
/// sampled in between by cubic Hermite interpolation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub derivs: Vec<Vec<f64>>,
    /// Sup-norm difference between the stiff run and its halved-step rerun.
    pub richardson_defect: Option<f64>,
}

impl Trajectory {
    pub fn dim(&self) -> usize {
        self.states.first().map_or(0, Vec::len)
    }

    /// Cubic Hermite interpolation; clamps outside the covered span.
    pub fn sample(&self, t: f64) -> DVector<f64> {
        let n = self.times.len();
        assert!(n >= 1, "empty trajectory");
        if t <= self.times[0] {
            return DVector::from_vec(self.states[0].clone());
        }
        if t >= self.times[n - 1] {
            return DVector::from_vec(self.states[n - 1].clone());
        }
        let k = match self
            .times
            .binary_search_by(|probe| probe.partial_cmp(&t).unwrap())
        {
            Ok(i) => return DVector::from_vec(self.states[i].clone()),
            Err(i) => i - 1,
        };
        let (t0, t1) = (self.times[k], self.times[k + 1]);
        let dt = t1 - t0;
        let tau = (t - t0) / dt;
        let (h00, h10, h01, h11) = (
            (1.0 + 2.0 * tau) * (1.0 - tau) * (1.0 - tau),
            tau * (1.0 - tau) * (1.0 - tau),
            tau * tau * (3.0 - 2.0 * tau),
            tau * tau * (tau - 1.0),
        );
        let m = self.dim();
        DVector::from_iterator(
            m,
            (0..m).map(|i| {
                h00 * self.states[k][i]
                    + h10 * dt * self.derivs[k][i]
                    + h01 * self.states[k + 1][i]
                    + h11 * dt * self.derivs[k + 1][i]
            }),
        )
    }
}

/// Adaptive reference solve at the given tolerances. Routing follows the
/// problem's stiff flag: explicit 5(4) when nonstiff, fixed-step TR-BDF2
/// with Richardson verification otherwise.
pub fn reference_solve(
    prob: &IvpProblem,
    t0: f64,
    t_end: f64,
    abstol: f64,
    reltol: f64,
) -> Result<Trajectory, ReferenceError> {
    assert!(abstol > 0.0 && reltol > 0.0);
    assert!(t_end > t0);
    if prob.stiff {
        stiff_reference(prob, t0, t_end, abstol)
    } else {
        dormand_prince(prob, t0, t_end, abstol, reltol)
    }
}

// Dormand-Prince 5(4) coefficients.
const DP_C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const DP_A: [[f64; 6]; 7] = [
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
// b(5th) − b(4th)
const DP_E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

fn dormand_prince(
    prob: &IvpProblem,
    t0: f64,
    t_end: f64,
    abstol: f64,
    reltol: f64,
) -> Result<Trajectory, ReferenceError> {
    let f = |t: f64, u: &DVector<f64>| (prob.rhs)(t, u);
    let m = prob.m;
    let span = t_end - t0;
    let mut t = t0;
    let mut u = prob.initial.clone();
    let mut k1 = f(t, &u);

    // initial step size from the scaled derivative magnitudes
    let sc = |u: &DVector<f64>, v: &DVector<f64>| -> f64 {
        let mut acc = 0.0;
        for i in 0..m {
            let s = abstol + reltol * u[i].abs();
            acc += (v[i] / s) * (v[i] / s);
        }
        (acc / m as f64).sqrt()
    };
    let d0 = sc(&u, &u);
    let d1 = sc(&u, &k1);
    let mut h = if d0 < 1e-5 || d1 < 1e-5 {
        1e-6 * span
    } else {
        0.01 * d0 / d1
    };
    h = h.min(span);

    let mut times = vec![t];
    let mut states = vec![u.as_slice().to_vec()];
    let mut derivs = vec![k1.as_slice().to_vec()];

    let mut ks: Vec<DVector<f64>> = vec![DVector::zeros(m); 7];
    while t < t_end {
        if h < 1e-14 * span {
            return Err(ReferenceError::StepUnderflow { t, h });
        }
        if t + h > t_end {
            h = t_end - t;
        }
        ks[0] = k1.clone();
        for i in 1..7 {
            let mut stage = u.clone();
            for (j, kj) in ks.iter().enumerate().take(i) {
                let a = DP_A[i][j];
                if a != 0.0 {
                    stage += kj * (a * h);
                }
            }
            ks[i] = f(t + DP_C[i] * h, &stage);
        }
        // 5th-order solution is the stage-7 argument (FSAL)
        let mut u5 = u.clone();
        for (j, kj) in ks.iter().enumerate().take(6) {
            let a = DP_A[6][j];
            if a != 0.0 {
                u5 += kj * (a * h);
            }
        }
        let mut err_acc = 0.0;
        for i in 0..m {
            let mut e = 0.0;
            for (j, kj) in ks.iter().enumerate() {
                e += DP_E[j] * kj[i];
            }
            e *= h;
            let s = abstol + reltol * u[i].abs().max(u5[i].abs());
            err_acc += (e / s) * (e / s);
        }
        let err = (err_acc / m as f64).sqrt();
        if err <= 1.0 {
            t += h;
            k1 = ks[6].clone(); // FSAL: f(t+h, u5)
            u = u5;
            times.push(t);
            states.push(u.as_slice().to_vec());
            derivs.push(k1.as_slice().to_vec());
        }
        let factor = if err == 0.0 {
            5.0
        } else {
            (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
        };
        h *= factor;
    }
    Ok(Trajectory {
        times,
        states,
        derivs,
        richardson_defect: None,
    })
}

fn stiff_fixed_run(
    prob: &IvpProblem,
    t0: f64,
    t_end: f64,
    n_steps: u32,
    store_every: u32,
) -> Result<(Vec<f64>, Vec<Vec<f64>>, Vec<Vec<f64>>), ReferenceError> {
    let tab = ButcherTableau::trbdf2(gamma_lstable()).expect("valid gamma");
    let cfg = NewtonConfig {
        tol: 1e-12,
        ..Default::default()
    };
    let span = t_end - t0;
    let h = span / n_steps as f64;
    let mut u = prob.initial.clone();
    let mut times = vec![t0];
    let mut states = vec![u.as_slice().to_vec()];
    let mut derivs = vec![(prob.rhs)(t0, &u).as_slice().to_vec()];
    for k in 0..n_steps {
        let t = t0 + k as f64 * h;
        let out = dirk_step(&tab, prob, t, &u, h, &cfg)?;
        u = out.u_next;
        if (k + 1) % store_every == 0 || k + 1 == n_steps {
            let t_next = t0 + (k + 1) as f64 * h;
            times.push(t_next);
            states.push(u.as_slice().to_vec());
            derivs.push((prob.rhs)(t_next, &u).as_slice().to_vec());
        }
    }
    Ok((times, states, derivs))
}

fn stiff_reference(
    prob: &IvpProblem,
    t0: f64,
    t_end: f64,
    abstol: f64,
) -> Result<Trajectory, ReferenceError> {
    let stride = STIFF_STEPS / STIFF_NODES;
    let (times_c, states_c, _) = stiff_fixed_run(prob, t0, t_end, STIFF_STEPS, stride)?;
    let (times_f, states_f, derivs_f) =
        stiff_fixed_run(prob, t0, t_end, STIFF_STEPS * 2, stride * 2)?;
    debug_assert_eq!(times_c.len(), times_f.len());
    let mut defect: f64 = 0.0;
    for (a, b) in states_c.iter().zip(&states_f) {
        for (x, y) in a.iter().zip(b) {
            defect = defect.max((x - y).abs());
        }
    }
    let bound = (10.0 * abstol).max(RICHARDSON_FLOOR);
    if defect > bound {
        return Err(ReferenceError::Unverified { defect, bound });
    }
    Ok(Trajectory {
        times: times_f,
        states: states_f,
        derivs: derivs_f,
        richardson_defect: Some(defect),
    })
}
