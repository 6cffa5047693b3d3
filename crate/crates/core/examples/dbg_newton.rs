use nalgebra::{DMatrix, DVector};
use ssp_core::*;

fn main() {
    let p = make_buckley_leverett(GridSpec::unit(100).unwrap());
    let cfg = NewtonConfig {
        tol: 1e-12,
        max_iters: 400,
        jacobian_mode: JacobianMode::FiniteDifference,
        ..Default::default()
    };
    let h = 0.01;
    let tab1 = hybrid_trbdf2_tableau(1.0, gamma_lstable()).unwrap();
    let tab0 = hybrid_trbdf2_tableau(0.0, gamma_lstable()).unwrap();
    let mut u = p.initial.clone();
    // replay up to the failing solve: step 10 fallback
    for k in 0..12 {
        let t = k as f64 * h;
        let tent = dirk_step(&tab1, &p, t, &u, h, &cfg).unwrap();
        let tv = functionals::tv_periodic(tent.u_next.as_slice());
        if tv <= 1.0 + 1e-9 {
            u = tent.u_next;
            continue;
        }
        if k < 10 {
            u = dirk_step(&tab0, &p, t, &u, h, &cfg).unwrap().u_next;
            continue;
        }
        // manual newton on stage 1 of the IE-IE tableau with diagnostics
        let gamma = gamma_lstable();
        let a22 = tab0.a[(1, 1)];
        assert!((a22 - gamma).abs() < 1e-15);
        let base = u.clone();
        let residual = |g: &DVector<f64>| -> DVector<f64> {
            g - &base - p.eval_rhs(t, g) * (h * a22)
        };
        let jac = |g: &DVector<f64>| -> DMatrix<f64> {
            let f0 = p.eval_rhs(t, g);
            let jf = fd_jacobian(|x| p.eval_rhs(t, x), g, &f0, 1e-7);
            let m = g.len();
            let mut rj = jf * (-h * a22);
            for i in 0..m { rj[(i,i)] += 1.0; }
            rj
        };
        let mut x = u.clone();
        let mut r = residual(&x);
        let mut rn = r.amax();
        let mut lambda_start = 1.0f64;
        for it in 0..200 {
            if rn <= 1e-12 { eprintln!("converged at iter {it}"); return; }
            let delta = jac(&x).lu().solve(&(-&r)).unwrap();
            let mut lambda = lambda_start;
            let floor = lambda_start / 1024.0;
            let (mut xt, mut rt, mut rtn);
            loop {
                xt = &x + &delta * lambda;
                rt = residual(&xt);
                rtn = rt.amax();
                if rtn < rn || lambda <= floor { break; }
                lambda *= 0.5;
            }
            let imax = (0..rt.len()).max_by(|&a,&b| rt[a].abs().partial_cmp(&rt[b].abs()).unwrap()).unwrap();
            if it > 20 && it % 10 != 0 { // print sparsely after warmup
            } else {
                eprintln!("it {it:3}: rn={rn:.3e} -> {rtn:.3e} lam={lambda:.2e} |d|={:.3e} argmax={imax} u[i]={:.6e}", delta.amax(), xt[imax]);
            }
            x = xt; r = rt; rn = rtn;
            lambda_start = (2.0*lambda).min(1.0);
        }
        eprintln!("stagnated rn={rn:.3e}");
        return;
    }
}
