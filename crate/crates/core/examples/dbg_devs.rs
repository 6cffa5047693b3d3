use ssp_core::*;

fn main() {
    let p = make_buckley_leverett(GridSpec::unit(100).unwrap());
    for tol in [5e-10_f64, 3e-10] {
        let cfg = NewtonConfig {
            tol,
            max_iters: 400,
            jacobian_mode: JacobianMode::FiniteDifference,
            ..Default::default()
        };
        eprintln!("--- tol = {tol:.1e}");
        for (mid, spec) in [
            ("ie", MethodSpec::new(Method::Ie)),
            ("blend", MethodSpec::new(Method::TrBdf2Blend)
                .with_sensor(SensorSpec::global(ConvexFunctional::TvSeminorm, 1.0))),
        ] {
            let mut cells = Vec::new();
            for h in [0.001, 0.0025, 0.005, 0.0075, 0.01, 0.015, 0.025] {
                let n = (0.125_f64 / h).floor() as usize;
                let n = if (0.125 / h - (0.125 / h).round()).abs() < 1e-9 {
                    (0.125 / h).round() as usize
                } else {
                    n
                };
                let t_eff = n as f64 * h;
                match integrate(&spec, &p, &p.initial, h, t_eff, &[], &cfg) {
                    Ok(run) => cells.push(format!("{:+.2e}", tv_linf_time(&run, 0) - 1.0)),
                    Err(e) => cells.push(format!("ERR({e})")),
                }
            }
            eprintln!("{mid:<6} dev: {}", cells.join(" "));
        }
    }
}
