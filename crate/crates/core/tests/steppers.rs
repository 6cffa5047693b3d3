//! Stepper-level integration tests: independent stage-solve oracles,
//! invariant conservation, convergence behaviour and workload counters.

use nalgebra::DVector;
use proptest::prelude::*;
use ssp_core::*;

/// Independent root finder for a stage equation: cyclic componentwise
/// bisection sweeps on r_i as a function of x_i with the other components
/// frozen. Slow and simple on purpose.
fn bisection_root(
    residual: &dyn Fn(&DVector<f64>) -> DVector<f64>,
    guess: &DVector<f64>,
    span: f64,
) -> DVector<f64> {
    let m = guess.len();
    let mut x = guess.clone();
    for _sweep in 0..200 {
        let mut largest_move = 0.0_f64;
        for i in 0..m {
            let eval = |xi: f64, x: &mut DVector<f64>| -> f64 {
                let old = x[i];
                x[i] = xi;
                let r = residual(x)[i];
                x[i] = old;
                r
            };
            let (mut lo, mut hi) = (x[i] - span, x[i] + span);
            let (mut flo, mut fhi) = (eval(lo, &mut x), eval(hi, &mut x));
            // widen until the bracket straddles zero
            let mut widen = 0;
            while flo.signum() == fhi.signum() && widen < 60 {
                lo -= span;
                hi += span;
                flo = eval(lo, &mut x);
                fhi = eval(hi, &mut x);
                widen += 1;
            }
            assert!(flo.signum() != fhi.signum(), "no bracket for component {i}");
            for _ in 0..80 {
                let mid = 0.5 * (lo + hi);
                let fm = eval(mid, &mut x);
                if fm.signum() == flo.signum() {
                    lo = mid;
                    flo = fm;
                } else {
                    hi = mid;
                }
            }
            let new = 0.5 * (lo + hi);
            largest_move = largest_move.max((new - x[i]).abs());
            x[i] = new;
        }
        if largest_move < 1e-13 {
            break;
        }
    }
    x
}

#[test]
fn brusselator_stage_solve_matches_bisection_oracle() {
    let p = make_brusselator();
    let h = 0.1;
    let a_ii = gamma_lstable() * 0.5; // the trapezoidal stage weight of TR-BDF2
    let u = p.initial.clone();
    let guess = p.initial.clone();
    let f0 = p.eval_rhs(0.0, &u);
    let acc = &f0 * a_ii;
    let residual = move |g: &DVector<f64>| -> DVector<f64> {
        g - &u - (&acc + p.eval_rhs(0.0, g) * a_ii) * h
    };
    let cfg = NewtonConfig::default();
    let jac = make_brusselator();
    let jacobian = move |g: &DVector<f64>| {
        let jm = (jac.jacobian.as_ref().unwrap())(0.0, g);
        let m = g.len();
        let mut rj = jm * (-h * a_ii);
        for i in 0..m {
            rj[(i, i)] += 1.0;
        }
        rj
    };
    let newton = newton_solve(&residual, jacobian, &guess, &cfg).unwrap();
    let oracle = bisection_root(&residual, &guess, 0.5);
    assert!(
        (&newton.x - &oracle).amax() <= 1e-9,
        "newton vs bisection: {}",
        (&newton.x - &oracle).amax()
    );
}

#[test]
fn per_step_invariant_conservation_on_brusselator() {
    let p = make_brusselator();
    let inv = p.invariants.as_ref().unwrap();
    let cfg = NewtonConfig::default();
    let h = 0.25;
    for method in [
        Method::Ie,
        Method::Cn,
        Method::Sdirk22,
        Method::TrBdf2,
        Method::Ros2,
        Method::IeIe,
    ] {
        let spec = MethodSpec::new(method);
        let mut u = p.initial.clone();
        for k in 0..8 {
            let out = spec.step(&p, k as f64 * h, &u, h, &cfg).unwrap();
            let drift = (inv * (&out.u_next - &u)).amax();
            assert!(
                drift <= 1e-10,
                "{method:?} step {k}: invariant drift {drift}"
            );
            u = out.u_next;
        }
    }
}

#[test]
fn mprk_conserves_total_mass_per_step() {
    let p = make_brusselator();
    let mut u = p.initial.clone();
    for _ in 0..10 {
        let out = mprk2_step(&p, &u, 1.0).unwrap();
        assert!((out.u_next.sum() - u.sum()).abs() <= 1e-12);
        assert!(out.u_next.iter().all(|&v| v > 0.0));
        u = out.u_next;
    }
}

#[test]
fn ros2_second_order_on_brusselator() {
    let p = make_brusselator();
    let reference = reference_solve(&p, 0.0, 1.0, 1e-12, 1e-11).unwrap();
    let cfg = NewtonConfig::default();
    let mut errs = Vec::new();
    for h in [0.01_f64, 0.005] {
        let n = (1.0 / h).round() as usize;
        let mut u = p.initial.clone();
        let mut err = 0.0_f64;
        for k in 0..n {
            u = ros2_step(&p, k as f64 * h, &u, h, &cfg).unwrap().u_next;
            let r = reference.sample((k + 1) as f64 * h);
            err = err.max((&u - &r).amax());
        }
        errs.push(err);
    }
    let ratio = errs[0] / errs[1];
    assert!(
        (3.0..5.5).contains(&ratio),
        "halving should reduce the error ~4x, got {ratio}"
    );
}

#[test]
fn blended_guarantee_on_advection() {
    // at h = 0.04 TR-BDF2 violates positivity, the fallback must keep every
    // accepted state within the sensor bound
    let p = make_advection(GridSpec::unit(100).unwrap(), 1.0);
    let sensor = SensorSpec::global_floor(0.0);
    let spec = MethodSpec::new(Method::TrBdf2Blend).with_sensor(sensor.clone());
    let cfg = NewtonConfig::default();
    let run = integrate(&spec, &p, &p.initial, 0.04, 1.0, &[], &cfg).unwrap();
    assert!(run.stats.fallback_steps > 0, "sensor should trip at h = 0.04");
    for state in &run.states {
        let min = state.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(min >= -1e-9, "accepted state violates the floor: {min}");
    }
    // TV stays at the initial value for the whole run
    assert!((tv_linf_time(&run, 0) - 2.0).abs() <= 1e-9);
}

#[test]
fn partitioned_quiet_run_matches_plain_trbdf2() {
    let p = make_advection(GridSpec::unit(100).unwrap(), 1.0);
    let cfg = NewtonConfig::default();
    let h = 0.01; // below the monotone bound: probe never trips
    let sensor = SensorSpec::local_range(0.0, 1.0);
    let part = MethodSpec::new(Method::TrBdf2Part).with_sensor(sensor);
    let plain = MethodSpec::new(Method::TrBdf2);
    let run_part = integrate(&part, &p, &p.initial, h, 1.0, &[], &cfg).unwrap();
    let run_plain = integrate(&plain, &p, &p.initial, h, 1.0, &[], &cfg).unwrap();
    assert_eq!(run_part.stats.sensor_trips, 0);
    let mut worst = 0.0_f64;
    for (a, b) in run_part.states.iter().zip(&run_plain.states) {
        worst = worst.max((a - b).amax());
    }
    assert!(worst <= 1e-9, "trajectory deviation {worst}");
    // probe adds exactly one rhs evaluation per step
    assert_eq!(
        run_part.stats.rhs_evals,
        run_plain.stats.rhs_evals + 100,
        "probe overhead must be N_t evaluations"
    );
}

#[test]
fn workload_counters() {
    let p = make_brusselator();
    let cfg = NewtonConfig::default();
    let n = 20;
    let run = integrate(
        &MethodSpec::new(Method::Ee),
        &p,
        &p.initial,
        0.05,
        0.05 * n as f64,
        &[],
        &cfg,
    )
    .unwrap();
    assert_eq!(run.stats.rhs_evals, n as u64);
    let run = integrate(
        &MethodSpec::new(Method::Mprk2),
        &p,
        &p.initial,
        0.5,
        10.0,
        &[],
        &cfg,
    )
    .unwrap();
    assert_eq!(run.stats.rhs_evals, 2 * 20, "two rate evaluations per step");
    let w = workload_summary(&run);
    assert_eq!(w.linear_solves, 2 * 20);
}

#[test]
fn clipping_mass_monotone_and_breaks_conservation() {
    let p = make_brusselator();
    let cfg = NewtonConfig::default();
    // phi(-h) < 0 for h beyond the monotone radius: species 1 goes negative
    let spec = MethodSpec::new(Method::TrBdf2Clip);
    let run = integrate(&spec, &p, &p.initial, 1.0, 10.0, &[], &cfg).unwrap();
    assert!(run.stats.clipped_mass > 0.0, "clipping must activate at h = 1");
    let drift = check_linear_invariants(&run, &p).unwrap();
    assert!(drift > 0.0, "clipping must break the linear invariants");
    // and a quiet clip run adds nothing
    let quiet = integrate(&spec, &p, &p.initial, 0.01, 0.1, &[], &cfg).unwrap();
    assert_eq!(quiet.stats.clipped_mass, 0.0);
    let drift = check_linear_invariants(&quiet, &p).unwrap();
    assert!(drift <= 1e-10);
}

#[test]
fn ee_at_unit_courant_matches_shifted_reference() {
    let p = make_advection(GridSpec::unit(100).unwrap(), 1.0);
    let cfg = NewtonConfig::default();
    let h = 0.01;
    let run = integrate(&MethodSpec::new(Method::Ee), &p, &p.initial, h, 1.0, &[], &cfg).unwrap();
    // exact transport: state n is the initial condition shifted by n cells
    let mut ref_states = Vec::with_capacity(run.states.len());
    for n in 0..run.states.len() {
        let shifted = DVector::from_iterator(
            100,
            (0..100).map(|i| p.initial[(i + 100 - n % 100) % 100]),
        );
        ref_states.push(shifted);
    }
    let ref_run = RunRecord {
        states: ref_states,
        ..run.clone()
    };
    let err = linf_space_error_at_t(&run, &ref_run, 0).unwrap();
    assert!(err <= 1e-8, "upwind shift identity violated: {err}");
    assert_eq!(linf_time_error(&run, &ref_run, 0).unwrap(), 0.0);
}

#[test]
fn reference_self_convergence_on_brusselator() {
    let p = make_brusselator();
    let a = reference_solve(&p, 0.0, 10.0, 1e-13, 1e-12).unwrap();
    let b = reference_solve(&p, 0.0, 10.0, 1e-14, 1e-13).unwrap();
    let mut worst = 0.0_f64;
    for t in [1.0, 2.5, 5.0, 7.5, 10.0] {
        worst = worst.max((a.sample(t) - b.sample(t)).amax());
    }
    assert!(worst < 1e-9, "tolerance tightening changed the reference by {worst}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn clip_accounting(u in proptest::collection::vec(-5.0..5.0f64, 1..40)) {
        let v = DVector::from_vec(u);
        let (clipped, mass) = clip_nonnegative(&v);
        prop_assert!(clipped.iter().all(|&x| x >= 0.0));
        let expect: f64 = v.iter().map(|&x| (-x).max(0.0)).sum();
        prop_assert!((mass - expect).abs() <= 1e-12);
        // clipping is idempotent
        let (again, zero) = clip_nonnegative(&clipped);
        prop_assert_eq!(again, clipped);
        prop_assert_eq!(zero, 0.0);
    }
}
