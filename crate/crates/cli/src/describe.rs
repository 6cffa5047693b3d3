//! Method introspection: tableau dump, live monotonicity radius, stiff-limit
//! stability value.

use num_complex::Complex64;
use ssp_core::{
    gamma_lstable, radius_abs_monotonicity, stability_function, Method, Radius, DEFAULT_R_CAP,
    METHOD_IDS,
};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DescribeError {
    #[error("unknown method {0:?}; see `methods` for the list")]
    UnknownMethod(String),
}

pub fn list_methods() -> String {
    let mut out = String::new();
    for (id, method) in METHOD_IDS {
        let label = match method.analysis_tableau(gamma_lstable()) {
            Some(tab) => tab.label.clone(),
            None => match method {
                Method::Mprk2 => "modified Patankar RK2 (production-destruction)".into(),
                Method::Reference => "adaptive reference solver".into(),
                _ => String::new(),
            },
        };
        out.push_str(&format!("{id:<14} {label}\n"));
    }
    out
}

pub fn describe_method(id: &str) -> Result<String, DescribeError> {
    let method = Method::from_id(id).ok_or_else(|| DescribeError::UnknownMethod(id.into()))?;
    let mut out = String::new();
    match method {
        Method::Mprk2 => {
            out.push_str("mprk2: two-stage modified Patankar scheme, order 2\n");
            out.push_str("unconditionally positive; conserves the componentwise sum;\n");
            out.push_str("requires a production-destruction decomposition\n");
            return Ok(out);
        }
        Method::Reference => {
            out.push_str("reference: adaptive embedded 5(4) explicit pair (nonstiff)\n");
            out.push_str("or fixed-step second-order fallback with Richardson check (stiff)\n");
            return Ok(out);
        }
        _ => {}
    }
    let tab = method
        .analysis_tableau(gamma_lstable())
        .expect("tableau-backed method");
    out.push_str(&format!("{id}: {}\n", tab.label));
    out.push_str(&format!(
        "stages: {}   order: {}   stage order: {}\n",
        tab.s, tab.order, tab.stage_order
    ));
    out.push_str("tableau (A | b | c):\n");
    for i in 0..tab.s {
        let row: Vec<String> = (0..tab.s).map(|j| format!("{:>12.8}", tab.a[(i, j)])).collect();
        out.push_str(&format!("  {}\n", row.join(" ")));
    }
    let b: Vec<String> = tab.b.iter().map(|v| format!("{v:>12.8}")).collect();
    let c: Vec<String> = tab.c.iter().map(|v| format!("{v:>12.8}")).collect();
    out.push_str(&format!("  b: {}\n", b.join(" ")));
    out.push_str(&format!("  c: {}\n", c.join(" ")));
    let radius = radius_abs_monotonicity(&tab, DEFAULT_R_CAP);
    match radius {
        Radius::Finite(r) => out.push_str(&format!("radius of absolute monotonicity: {r:.9}\n")),
        Radius::Unbounded => out.push_str("radius of absolute monotonicity: inf (unconditional)\n"),
    }
    match stability_function(&tab, Complex64::new(-1e6, 0.0)) {
        Ok(phi) => {
            let n = phi.norm();
            let verdict = if n <= 1e-5 { "L-stable" } else { "not L-stable" };
            out.push_str(&format!("|phi(-1e6)| = {n:.3e} ({verdict})\n"));
        }
        Err(_) => out.push_str("|phi(-1e6)|: singular\n"),
    }
    Ok(out)
}
