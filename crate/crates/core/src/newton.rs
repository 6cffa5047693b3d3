//! Damped Newton iteration for the implicit stage equations.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JacobianMode {
    Analytic,
    FiniteDifference,
}

#[derive(Debug, Clone, Copy)]
pub struct NewtonConfig {
    /// Residual sup-norm tolerance.
    pub tol: f64,
    pub max_iters: usize,
    pub jacobian_mode: JacobianMode,
    /// Relative perturbation for one-sided finite differences.
    pub fd_epsilon: f64,
    /// Freeze the Jacobian (and its factorization) across iterations.
    pub jacobian_reuse: bool,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iters: 50,
            jacobian_mode: JacobianMode::Analytic,
            fd_epsilon: 1e-7,
            jacobian_reuse: false,
        }
    }
}

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("Newton did not converge: residual {residual:.3e} after {iters} iterations")]
    NoConvergence { iters: usize, residual: f64 },
    #[error("singular Jacobian in Newton iteration")]
    SingularJacobian,
}

/// Converged iterate plus work counters for the caller's bookkeeping.
#[derive(Debug, Clone)]
pub struct NewtonOutcome {
    pub x: DVector<f64>,
    pub iters: usize,
    pub linear_solves: usize,
}

/// Solve residual(x) = 0 with damped Newton: full steps while the residual
/// norm decreases, otherwise up to 10 halvings (the shortest step is taken
/// even without decrease, which rides out limiter kinks).
///
/// Two safeguards keep the iteration clean near non-smooth right-hand
/// sides: step components are clamped to a multiple of the residual norm,
/// so ill-conditioned Jacobian columns cannot write large garbage into
/// otherwise-converged components, and the best iterate seen is the one
/// returned.
pub fn newton_solve<R, J>(
    residual: R,
    jacobian: J,
    guess: &DVector<f64>,
    cfg: &NewtonConfig,
) -> Result<NewtonOutcome, SolveError>
where
    R: Fn(&DVector<f64>) -> DVector<f64>,
    J: Fn(&DVector<f64>) -> DMatrix<f64>,
{
    let mut x = guess.clone();
    let mut r = residual(&x);
    let mut rn = r.amax();
    let mut best_x = x.clone();
    let mut best_rn = rn;
    let mut frozen_lu = None;
    let mut iters = 0;
    let mut linear_solves = 0;
    // damping memory: a step that needed halving starts the next iteration
    // from twice its accepted length, which stops full steps from cycling
    // across limiter kinks
    let mut lambda_start = 1.0_f64;
    while iters < cfg.max_iters {
        if best_rn <= cfg.tol {
            return Ok(NewtonOutcome {
                x: best_x,
                iters,
                linear_solves,
            });
        }
        if !rn.is_finite() {
            return Err(SolveError::NoConvergence {
                iters,
                residual: best_rn,
            });
        }
        let mut delta = if cfg.jacobian_reuse {
            if frozen_lu.is_none() {
                frozen_lu = Some(jacobian(&x).lu());
            }
            frozen_lu.as_ref().unwrap().solve(&(-&r))
        } else {
            jacobian(&x).lu().solve(&(-&r))
        }
        .ok_or(SolveError::SingularJacobian)?;
        linear_solves += 1;
        let cap = 100.0 * rn.max(cfg.tol);
        for v in delta.iter_mut() {
            *v = v.clamp(-cap, cap);
        }
        let mut lambda = lambda_start;
        let floor = lambda_start / 1024.0;
        let (mut xt, mut rt, mut rtn);
        loop {
            xt = &x + &delta * lambda;
            rt = residual(&xt);
            rtn = rt.amax();
            if rtn < rn || lambda <= floor {
                break;
            }
            lambda *= 0.5;
        }
        x = xt;
        r = rt;
        rn = rtn;
        if rn < best_rn {
            best_rn = rn;
            best_x.copy_from(&x);
        }
        lambda_start = (2.0 * lambda).min(1.0);
        iters += 1;
    }
    if best_rn <= cfg.tol {
        return Ok(NewtonOutcome {
            x: best_x,
            iters,
            linear_solves,
        });
    }
    Err(SolveError::NoConvergence {
        iters,
        residual: best_rn,
    })
}

/// One-sided finite-difference Jacobian of `f` at `x`, column j perturbed by
/// `eps * max(|x_j|, 1)`.
pub fn fd_jacobian<F>(f: F, x: &DVector<f64>, f0: &DVector<f64>, eps: f64) -> DMatrix<f64>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    let m = x.len();
    let mut jac = DMatrix::zeros(f0.len(), m);
    let mut xp = x.clone();
    for j in 0..m {
        let dx = eps * x[j].abs().max(1.0);
        xp[j] = x[j] + dx;
        let fp = f(&xp);
        for i in 0..f0.len() {
            jac[(i, j)] = (fp[i] - f0[i]) / dx;
        }
        xp[j] = x[j];
    }
    jac
}
