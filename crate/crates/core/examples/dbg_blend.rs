use nalgebra::DVector;
use ssp_core::*;

fn main() {
    let p = make_buckley_leverett(GridSpec::unit(100).unwrap());
    let cfg = NewtonConfig {
        tol: 1e-10,
        max_iters: 400,
        jacobian_mode: JacobianMode::FiniteDifference,
        ..Default::default()
    };
    let h = 0.01;
    let sensor = SensorSpec::global(ConvexFunctional::TvSeminorm, 1.0);
    let mut u = p.initial.clone();
    let tab1 = hybrid_trbdf2_tableau(1.0, gamma_lstable()).unwrap();
    let tab0 = hybrid_trbdf2_tableau(0.0, gamma_lstable()).unwrap();
    for k in 0..12 {
        let t = k as f64 * h;
        let tent = dirk_step(&tab1, &p, t, &u, h, &cfg);
        match &tent {
            Ok(out) => {
                let tv = functionals::tv_periodic(out.u_next.as_slice());
                let trip = tv > 1.0 + 1e-9;
                eprintln!("step {k}: tentative ok tv={tv:.12} trip={trip}");
                if !trip {
                    u = out.u_next.clone();
                    continue;
                }
            }
            Err(e) => eprintln!("step {k}: tentative FAILED: {e}"),
        }
        match dirk_step(&tab0, &p, t, &u, h, &cfg) {
            Ok(out) => {
                eprintln!("step {k}: fallback ok tv={:.12}", functionals::tv_periodic(out.u_next.as_slice()));
                u = out.u_next;
            }
            Err(e) => {
                eprintln!("step {k}: fallback FAILED: {e}");
                std::process::exit(1);
            }
        }
    }
    let _ = sensor;
    eprintln!("done");
    let _ = DVector::<f64>::zeros(1);
}
