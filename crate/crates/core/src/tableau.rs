//! Runge-Kutta coefficient tables and their monotonicity / stability analysis.
//!
//! A method is described by its Butcher tableau `(A, b, c)`. The analysis
//! side computes the resolvent quantities `A(ξ) = A(I − ξA)⁻¹`,
//! `bᵀ(ξ) = bᵀ(I − ξA)⁻¹`, `e(ξ) = (I − ξA)⁻¹e`, `φ(ξ) = 1 + ξ bᵀ(I − ξA)⁻¹e`,
//! decides absolute monotonicity at a point ξ ≤ 0, and locates the radius of
//! absolute monotonicity by bracketed bisection. Stability functions are
//! evaluated through the determinant identity
//! `φ(z) = det(I − zA + z e bᵀ) / det(I − zA)`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use thiserror::Error;

/// Elementwise nonnegativity slack absorbing resolvent roundoff.
pub const TOL_NONNEG: f64 = 1e-12;
/// Relative-determinant threshold below which a resolvent counts as singular.
pub const TOL_SINGULAR: f64 = 1e-6;
/// Default search ceiling for the monotonicity radius.
pub const DEFAULT_R_CAP: f64 = 1e6;
/// Bisection tolerance for the radius search.
pub const RADIUS_TOL: f64 = 1e-10;

/// γ = 2 − √2, the L-stable / radius-maximizing parameter.
pub fn gamma_lstable() -> f64 {
    2.0 - std::f64::consts::SQRT_2
}

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("resolvent is numerically singular at xi = {xi_re}{}{}i", if *xi_im >= 0.0 { "+" } else { "-" }, xi_im.abs())]
    SingularResolvent { xi_re: f64, xi_im: f64 },
    #[error("parameter {name} = {value} outside its admissible range {range}")]
    Domain {
        name: &'static str,
        value: f64,
        range: &'static str,
    },
    #[error("malformed tableau: {0}")]
    Parse(String),
    #[error("inconsistent tableau: {0}")]
    Invalid(String),
}

/// Structural class read off the coefficient matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableauClass {
    Explicit,
    Dirk,
    FullyImplicit,
}

/// Coefficients (A, b, c) plus order metadata.
#[derive(Debug, Clone)]
pub struct ButcherTableau {
    pub s: usize,
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub c: DVector<f64>,
    /// Claimed classical order; metadata only, not verified.
    pub order: u32,
    /// Claimed stage order; metadata only.
    pub stage_order: u32,
    pub label: String,
}

impl ButcherTableau {
    pub fn new(
        a: DMatrix<f64>,
        b: DVector<f64>,
        c: DVector<f64>,
        order: u32,
        stage_order: u32,
        label: impl Into<String>,
    ) -> Result<Self, AnalysisError> {
        let s = b.len();
        if a.nrows() != s || a.ncols() != s || c.len() != s {
            return Err(AnalysisError::Invalid(format!(
                "dimension mismatch: A is {}x{}, b has {}, c has {}",
                a.nrows(),
                a.ncols(),
                b.len(),
                c.len()
            )));
        }
        if a.iter().chain(b.iter()).chain(c.iter()).any(|v| !v.is_finite()) {
            return Err(AnalysisError::Invalid("non-finite coefficient".into()));
        }
        for i in 0..s {
            let row_sum: f64 = (0..s).map(|j| a[(i, j)]).sum();
            if (row_sum - c[i]).abs() > 1e-12 {
                return Err(AnalysisError::Invalid(format!(
                    "row {i} sums to {row_sum} but c[{i}] = {}",
                    c[i]
                )));
            }
        }
        Ok(Self {
            s,
            a,
            b,
            c,
            order,
            stage_order,
            label: label.into(),
        })
    }

    pub fn classify(&self) -> TableauClass {
        let s = self.s;
        for i in 0..s {
            for j in (i + 1)..s {
                if self.a[(i, j)] != 0.0 {
                    return TableauClass::FullyImplicit;
                }
            }
        }
        if (0..s).all(|i| self.a[(i, i)] == 0.0) {
            TableauClass::Explicit
        } else {
            TableauClass::Dirk
        }
    }

    /// Parse the plain-text format: first line s, then s rows of A,
    /// then the b line, then the c line, whitespace separated.
    pub fn parse(text: &str) -> Result<Self, AnalysisError> {
        let mut lines = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'));
        let s: usize = lines
            .next()
            .ok_or_else(|| AnalysisError::Parse("empty input".into()))?
            .parse()
            .map_err(|e| AnalysisError::Parse(format!("stage count: {e}")))?;
        if s == 0 {
            return Err(AnalysisError::Parse("stage count must be >= 1".into()));
        }
        let mut row = |what: &str| -> Result<Vec<f64>, AnalysisError> {
            let line = lines
                .next()
                .ok_or_else(|| AnalysisError::Parse(format!("missing {what} line")))?;
            let vals: Result<Vec<f64>, _> = line.split_whitespace().map(str::parse).collect();
            let vals = vals.map_err(|e| AnalysisError::Parse(format!("{what}: {e}")))?;
            if vals.len() != s {
                return Err(AnalysisError::Parse(format!(
                    "{what}: expected {s} entries, got {}",
                    vals.len()
                )));
            }
            Ok(vals)
        };
        let mut a = DMatrix::zeros(s, s);
        for i in 0..s {
            let vals = row(&format!("A row {i}"))?;
            for (j, v) in vals.into_iter().enumerate() {
                a[(i, j)] = v;
            }
        }
        let b = DVector::from_vec(row("b")?);
        let c = DVector::from_vec(row("c")?);
        Self::new(a, b, c, 0, 0, "loaded")
    }

    // --- shipped methods ---

    pub fn implicit_euler() -> Self {
        Self::new(
            DMatrix::from_row_slice(1, 1, &[1.0]),
            DVector::from_vec(vec![1.0]),
            DVector::from_vec(vec![1.0]),
            1,
            1,
            "implicit Euler",
        )
        .unwrap()
    }

    pub fn explicit_euler() -> Self {
        Self::new(
            DMatrix::from_row_slice(1, 1, &[0.0]),
            DVector::from_vec(vec![1.0]),
            DVector::from_vec(vec![0.0]),
            1,
            1,
            "explicit Euler",
        )
        .unwrap()
    }

    /// Trapezoidal rule in two-stage stiffly accurate form.
    pub fn crank_nicolson() -> Self {
        Self::new(
            DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.5, 0.5]),
            DVector::from_vec(vec![0.5, 0.5]),
            DVector::from_vec(vec![0.0, 1.0]),
            2,
            2,
            "Crank-Nicolson",
        )
        .unwrap()
    }

    /// SSP-optimal two-stage second order SDIRK: two implicit midpoint substeps.
    pub fn sdirk22() -> Self {
        Self::new(
            DMatrix::from_row_slice(2, 2, &[0.25, 0.0, 0.5, 0.25]),
            DVector::from_vec(vec![0.5, 0.5]),
            DVector::from_vec(vec![0.25, 0.75]),
            2,
            1,
            "SDIRK 2(2)",
        )
        .unwrap()
    }

    pub fn trbdf2(gamma: f64) -> Result<Self, AnalysisError> {
        hybrid_trbdf2_tableau(1.0, gamma)
    }

    /// The reduced two-stage form of the IE-IE composition: implicit Euler over
    /// γh then (1−γ)h. Used for analysis; the dead first stage of the α = 0
    /// hybrid tableau is dropped so the method is irreducible.
    pub fn ieie_reduced(gamma: f64) -> Result<Self, AnalysisError> {
        check_gamma(gamma)?;
        Self::new(
            DMatrix::from_row_slice(2, 2, &[gamma, 0.0, gamma, 1.0 - gamma]),
            DVector::from_vec(vec![gamma, 1.0 - gamma]),
            DVector::from_vec(vec![gamma, 1.0]),
            1,
            1,
            "IE-IE",
        )
    }
}

fn check_gamma(gamma: f64) -> Result<(), AnalysisError> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(AnalysisError::Domain {
            name: "gamma",
            value: gamma,
            range: "(0, 1)",
        });
    }
    Ok(())
}

/// Three-stage tableau of the hybrid family; α = 1 is TR-BDF2,
/// α = 0 is the IE-IE composition.
pub fn hybrid_trbdf2_tableau(alpha: f64, gamma: f64) -> Result<ButcherTableau, AnalysisError> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(AnalysisError::Domain {
            name: "alpha",
            value: alpha,
            range: "[0, 1]",
        });
    }
    check_gamma(gamma)?;
    let den = alpha * (1.0 - gamma) + 1.0;
    let w = (alpha * (1.0 - gamma) + gamma) / den;
    let a = DMatrix::from_row_slice(
        3,
        3,
        &[
            0.0,
            0.0,
            0.0,
            gamma * alpha / 2.0,
            gamma * (1.0 - alpha / 2.0),
            0.0,
            alpha / 2.0 * w,
            (1.0 - alpha / 2.0) * w,
            (1.0 - gamma) / den,
        ],
    );
    let b = DVector::from_vec(vec![
        alpha / 2.0 * w,
        (1.0 - alpha / 2.0) * w,
        (1.0 - gamma) / den,
    ]);
    let c = DVector::from_vec(vec![0.0, gamma, 1.0]);
    let (order, stage_order) = if alpha == 1.0 { (2, 2) } else { (1, 1) };
    let label = if alpha == 1.0 {
        "TR-BDF2".to_string()
    } else if alpha == 0.0 {
        "IE-IE (hybrid form)".to_string()
    } else {
        format!("hybrid TR-BDF2 (alpha={alpha})")
    };
    ButcherTableau::new(a, b, c, order, stage_order, label)
}

/// Rosenbrock coefficients: explicit stage weights plus the linearly
/// implicit lower-triangular part with constant diagonal γ.
#[derive(Debug, Clone)]
pub struct RosenbrockTableau {
    pub s: usize,
    pub alpha: DMatrix<f64>,
    pub gamma_mat: DMatrix<f64>,
    pub b: DVector<f64>,
    pub gamma_diag: f64,
}

impl RosenbrockTableau {
    pub fn ros2() -> Self {
        let g = 1.0 + 1.0 / std::f64::consts::SQRT_2;
        Self {
            s: 2,
            alpha: DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 1.0, 0.0]),
            gamma_mat: DMatrix::from_row_slice(2, 2, &[g, 0.0, -2.0 * g, g]),
            b: DVector::from_vec(vec![0.5, 0.5]),
            gamma_diag: g,
        }
    }

    /// The DIRK pair the method linearizes (A = α + Γ): the right object
    /// for stability and monotonicity analysis.
    pub fn underlying_pair(&self) -> ButcherTableau {
        let a = &self.alpha + &self.gamma_mat;
        let s = self.s;
        let c = DVector::from_iterator(s, (0..s).map(|i| (0..s).map(|j| a[(i, j)]).sum()));
        ButcherTableau::new(a, self.b.clone(), c, 2, 1, "ROS2 underlying pair").unwrap()
    }
}

/// Resolvent quantities at a real evaluation point ξ together with the
/// elementwise-nonnegativity verdict.
#[derive(Debug, Clone)]
pub struct MonotonicityCertificate {
    pub xi: f64,
    pub a_xi: DMatrix<f64>,
    pub b_xi: DVector<f64>,
    pub e_xi: DVector<f64>,
    pub phi_xi: f64,
    pub absolutely_monotone: bool,
}

/// |det M| scaled by the product of row norms; ~1 away from poles,
/// collapses linearly with the distance to a pole.
fn relative_det(m: &DMatrix<f64>) -> f64 {
    let det = m.clone().lu().determinant();
    let mut scale = 1.0;
    for i in 0..m.nrows() {
        let rn: f64 = (0..m.ncols()).map(|j| m[(i, j)].abs()).sum();
        scale *= rn.max(1.0);
    }
    det.abs() / scale
}

fn relative_det_c(m: &DMatrix<Complex64>) -> f64 {
    let det = m.clone().lu().determinant();
    let mut scale = 1.0;
    for i in 0..m.nrows() {
        let rn: f64 = (0..m.ncols()).map(|j| m[(i, j)].norm()).sum();
        scale *= rn.max(1.0);
    }
    det.norm() / scale
}

/// A(ξ), bᵀ(ξ), e(ξ) and φ(ξ) via one dense factorization of I − ξA.
pub fn abs_mono_quantities(
    tab: &ButcherTableau,
    xi: f64,
) -> Result<MonotonicityCertificate, AnalysisError> {
    let s = tab.s;
    let m = DMatrix::identity(s, s) - xi * &tab.a;
    if relative_det(&m) < TOL_SINGULAR {
        return Err(AnalysisError::SingularResolvent {
            xi_re: xi,
            xi_im: 0.0,
        });
    }
    let lu = m.clone().lu();
    let inv = lu
        .try_inverse()
        .ok_or(AnalysisError::SingularResolvent {
            xi_re: xi,
            xi_im: 0.0,
        })?;
    let a_xi = &tab.a * &inv;
    let b_xi = (tab.b.transpose() * &inv).transpose();
    let e_xi = &inv * DVector::from_element(s, 1.0);
    let phi_xi = 1.0 + xi * tab.b.dot(&e_xi);
    let absolutely_monotone = a_xi.iter().all(|&v| v >= -TOL_NONNEG)
        && b_xi.iter().all(|&v| v >= -TOL_NONNEG)
        && e_xi.iter().all(|&v| v >= -TOL_NONNEG)
        && phi_xi >= -TOL_NONNEG;
    Ok(MonotonicityCertificate {
        xi,
        a_xi,
        b_xi,
        e_xi,
        phi_xi,
        absolutely_monotone,
    })
}

/// Necessary structural conditions for a positive radius:
/// A ≥ 0, b > 0 and Inc(A²) ≤ Inc(A).
pub fn structural_precheck(tab: &ButcherTableau) -> bool {
    if tab.a.iter().any(|&v| v < -TOL_NONNEG) {
        return false;
    }
    if tab.b.iter().any(|&v| v <= TOL_NONNEG) {
        return false;
    }
    let a2 = &tab.a * &tab.a;
    for i in 0..tab.s {
        for j in 0..tab.s {
            if a2[(i, j)].abs() > TOL_NONNEG && tab.a[(i, j)].abs() <= TOL_NONNEG {
                return false;
            }
        }
    }
    true
}

/// Radius of absolute monotonicity; the unbounded case is a distinct
/// variant so step-size arithmetic cannot silently divide by it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Radius {
    Finite(f64),
    Unbounded,
}

impl Radius {
    pub fn finite(&self) -> Option<f64> {
        match self {
            Radius::Finite(r) => Some(*r),
            Radius::Unbounded => None,
        }
    }
}

impl std::fmt::Display for Radius {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Radius::Finite(r) => write!(f, "{r}"),
            Radius::Unbounded => write!(f, "inf"),
        }
    }
}

/// Bisection for R(A, b): expand the bracket [0, 1] by doubling, then
/// bisect to `RADIUS_TOL`. A singular resolvent counts as non-monotone.
pub fn radius_abs_monotonicity(tab: &ButcherTableau, r_cap: f64) -> Radius {
    assert!(r_cap > 0.0, "r_cap must be positive");
    if !structural_precheck(tab) {
        return Radius::Finite(0.0);
    }
    let monotone_at = |r: f64| -> bool {
        match abs_mono_quantities(tab, -r) {
            Ok(cert) => cert.absolutely_monotone,
            Err(_) => false,
        }
    };
    let mut lo = 0.0;
    let mut hi = 1.0;
    loop {
        if hi >= r_cap {
            if monotone_at(r_cap) {
                return Radius::Unbounded;
            }
            hi = r_cap;
            break;
        }
        if monotone_at(hi) {
            lo = hi;
            hi *= 2.0;
        } else {
            break;
        }
    }
    while hi - lo > RADIUS_TOL {
        let mid = 0.5 * (lo + hi);
        if monotone_at(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Radius::Finite(lo)
}

/// Closed form R = 2(2−γ) / (1 + (1−γ)²) for the TR-BDF2 family.
pub fn trbdf2_family_radius(gamma: f64) -> Result<f64, AnalysisError> {
    check_gamma(gamma)?;
    Ok(2.0 * (2.0 - gamma) / (1.0 + (1.0 - gamma) * (1.0 - gamma)))
}

/// φ(z) = det(I − zA + z e bᵀ) / det(I − zA).
pub fn stability_function(tab: &ButcherTableau, z: Complex64) -> Result<Complex64, AnalysisError> {
    let s = tab.s;
    let ac: DMatrix<Complex64> = tab.a.map(|v| Complex64::new(v, 0.0));
    let ident = DMatrix::<Complex64>::identity(s, s);
    let den_m = &ident - &ac * z;
    if relative_det_c(&den_m) < TOL_SINGULAR {
        return Err(AnalysisError::SingularResolvent {
            xi_re: z.re,
            xi_im: z.im,
        });
    }
    let mut num_m = den_m.clone();
    for i in 0..s {
        for j in 0..s {
            num_m[(i, j)] += z * tab.b[j];
        }
    }
    let num = num_m.lu().determinant();
    let den = den_m.lu().determinant();
    Ok(num / den)
}

/// Stability value of the additive pairing for u' = λu + iμu:
/// 1 + (i w b_wᵀ + z b_zᵀ)(I − i w A_w − z A_z)⁻¹ e.
pub fn ark_stability_function(
    a_w: &DMatrix<f64>,
    a_z: &DMatrix<f64>,
    b_w: &DVector<f64>,
    b_z: &DVector<f64>,
    z: Complex64,
    w: f64,
) -> Result<Complex64, AnalysisError> {
    let s = b_w.len();
    assert!(a_w.nrows() == s && a_z.nrows() == s && b_z.len() == s);
    let iw = Complex64::new(0.0, w);
    let mut m = DMatrix::<Complex64>::identity(s, s);
    for i in 0..s {
        for j in 0..s {
            m[(i, j)] -= iw * a_w[(i, j)] + z * a_z[(i, j)];
        }
    }
    if relative_det_c(&m) < TOL_SINGULAR {
        return Err(AnalysisError::SingularResolvent {
            xi_re: z.re,
            xi_im: z.im,
        });
    }
    let inv = m.lu().try_inverse().ok_or(AnalysisError::SingularResolvent {
        xi_re: z.re,
        xi_im: z.im,
    })?;
    let e = DVector::from_element(s, Complex64::new(1.0, 0.0));
    let resolved = &inv * e;
    let mut acc = Complex64::new(1.0, 0.0);
    for i in 0..s {
        acc += (iw * b_w[i] + z * b_z[i]) * resolved[i];
    }
    Ok(acc)
}

/// Rectangular sampling of |φ| over a complex window; poles are recorded
/// as infinity rather than errors so contour extraction can proceed.
#[derive(Debug, Clone)]
pub struct StabilityGrid {
    pub re: Vec<f64>,
    pub im: Vec<f64>,
    /// Row-major |φ| values, `im` fastest.
    pub abs_phi: Vec<f64>,
}

pub fn stability_region_grid<F>(
    evaluator: F,
    re_range: (f64, f64),
    im_range: (f64, f64),
    n_re: usize,
    n_im: usize,
) -> StabilityGrid
where
    F: Fn(Complex64) -> Result<Complex64, AnalysisError>,
{
    assert!(n_re >= 2 && n_im >= 2, "grid needs at least 2 points per axis");
    let re: Vec<f64> = (0..n_re)
        .map(|i| re_range.0 + (re_range.1 - re_range.0) * i as f64 / (n_re - 1) as f64)
        .collect();
    let im: Vec<f64> = (0..n_im)
        .map(|i| im_range.0 + (im_range.1 - im_range.0) * i as f64 / (n_im - 1) as f64)
        .collect();
    let mut abs_phi = Vec::with_capacity(n_re * n_im);
    for &x in &re {
        for &y in &im {
            let v = match evaluator(Complex64::new(x, y)) {
                Ok(phi) => phi.norm(),
                Err(_) => f64::INFINITY,
            };
            abs_phi.push(v);
        }
    }
    StabilityGrid { re, im, abs_phi }
}

impl StabilityGrid {
    pub fn value_at(&self, i_re: usize, i_im: usize) -> f64 {
        self.abs_phi[i_re * self.im.len() + i_im]
    }

    /// CSV with header `re,im,abs_phi`; infinities serialize as `inf`.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "re,im,abs_phi")?;
        for (i, &x) in self.re.iter().enumerate() {
            for (j, &y) in self.im.iter().enumerate() {
                let v = self.value_at(i, j);
                if v.is_finite() {
                    writeln!(w, "{x:.8},{y:.8},{v:.8}")?;
                } else {
                    writeln!(w, "{x:.8},{y:.8},inf")?;
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn sqrt2() -> f64 {
        std::f64::consts::SQRT_2
    }

    #[test]
    fn quantities_at_zero_are_the_tableau() {
        let tab = ButcherTableau::sdirk22();
        let cert = abs_mono_quantities(&tab, 0.0).unwrap();
        assert_eq!(cert.a_xi, tab.a);
        assert_eq!(cert.b_xi, tab.b);
        assert!(cert.e_xi.iter().all(|&v| v == 1.0));
        assert_eq!(cert.phi_xi, 1.0);
        assert!(cert.absolutely_monotone);
    }

    // closed forms of the TR-BDF2 resolvent quantities, written directly
    // from the published displays; independent of the linear-algebra path
    fn trbdf2_e2_closed(gamma: f64, xi: f64) -> f64 {
        (1.0 + gamma / 2.0 * xi) / (1.0 - gamma / 2.0 * xi)
    }
    fn trbdf2_phi_closed(gamma: f64, xi: f64) -> f64 {
        let beta = 1.0 - xi * (1.0 - gamma) / (2.0 - gamma);
        ((1.0 + (1.0 - gamma).powi(2)) * xi + 2.0 * (2.0 - gamma))
            / (2.0 * (2.0 - gamma) * (1.0 - xi * gamma / 2.0) * beta)
    }

    #[test]
    fn trbdf2_quantities_match_closed_forms_at_minus_one() {
        let g = gamma_lstable();
        let tab = ButcherTableau::trbdf2(g).unwrap();
        let cert = abs_mono_quantities(&tab, -1.0).unwrap();
        assert_relative_eq!(cert.e_xi[1], trbdf2_e2_closed(g, -1.0), epsilon = 1e-14);
        assert_relative_eq!(cert.phi_xi, trbdf2_phi_closed(g, -1.0), epsilon = 1e-14);
        // b = e3ᵀA for this stiffly accurate tableau, so bᵀ(ξ) is row 3 of
        // A(ξ); its closed form: twice 1/(2(2-γ)(1-γξ/2)β), then (1-γ)/((2-γ)β)
        let xi = -1.0_f64;
        let beta = 1.0 - xi * (1.0 - g) / (2.0 - g);
        let row3_first = 1.0 / (2.0 * (2.0 - g) * (1.0 - g * xi / 2.0) * beta);
        assert_relative_eq!(cert.b_xi[0], row3_first, epsilon = 1e-14);
        assert_relative_eq!(cert.b_xi[1], row3_first, epsilon = 1e-14);
        assert_relative_eq!(cert.b_xi[2], (1.0 - g) / ((2.0 - g) * beta), epsilon = 1e-14);
        assert_relative_eq!(cert.a_xi[(2, 0)], row3_first, epsilon = 1e-14);
        // consistency φ(ξ) = 1 + ξ·bᵀ(ξ)e ties the displays together
        assert_relative_eq!(cert.phi_xi, 1.0 + xi * cert.b_xi.sum(), epsilon = 1e-13);
    }

    #[test]
    fn trbdf2_boundary_point_grazes_zero() {
        let g = gamma_lstable();
        let tab = ButcherTableau::trbdf2(g).unwrap();
        let r = 1.0 + sqrt2();
        let cert = abs_mono_quantities(&tab, -r).unwrap();
        assert!(cert.absolutely_monotone, "boundary point must still pass");
        let mut min = cert.phi_xi;
        for &v in cert.a_xi.iter().chain(cert.b_xi.iter()).chain(cert.e_xi.iter()) {
            min = min.min(v);
        }
        assert!(min.abs() <= 1e-9, "min entry {min} should graze zero at xi = -R");
    }

    #[test]
    fn precheck_accepts_and_rejects() {
        assert!(structural_precheck(&ButcherTableau::trbdf2(gamma_lstable()).unwrap()));
        assert!(structural_precheck(&ButcherTableau::explicit_euler()));
        assert!(!structural_precheck(
            &RosenbrockTableau::ros2().underlying_pair()
        ));
        // b with a zero entry fails the strict positivity leg
        assert!(!structural_precheck(
            &hybrid_trbdf2_tableau(0.0, gamma_lstable()).unwrap()
        ));
    }

    #[test]
    fn radii_of_shipped_methods() {
        let cap = DEFAULT_R_CAP;
        match radius_abs_monotonicity(&ButcherTableau::implicit_euler(), cap) {
            Radius::Unbounded => {}
            r => panic!("implicit Euler should be unbounded, got {r}"),
        }
        let r = radius_abs_monotonicity(&ButcherTableau::crank_nicolson(), cap);
        assert_relative_eq!(r.finite().unwrap(), 2.0, epsilon = 1e-8);
        let r = radius_abs_monotonicity(&ButcherTableau::sdirk22(), cap);
        assert_relative_eq!(r.finite().unwrap(), 4.0, epsilon = 1e-8);
        let r = radius_abs_monotonicity(&ButcherTableau::trbdf2(gamma_lstable()).unwrap(), cap);
        assert_relative_eq!(r.finite().unwrap(), 1.0 + sqrt2(), epsilon = 1e-8);
        let r = radius_abs_monotonicity(&RosenbrockTableau::ros2().underlying_pair(), cap);
        assert_eq!(r.finite().unwrap(), 0.0);
        let r = radius_abs_monotonicity(&ButcherTableau::explicit_euler(), cap);
        assert_relative_eq!(r.finite().unwrap(), 1.0, epsilon = 1e-8);
        let r = radius_abs_monotonicity(&ButcherTableau::ieie_reduced(gamma_lstable()).unwrap(), cap);
        assert_eq!(r, Radius::Unbounded);
    }

    #[test]
    fn family_radius_formula() {
        assert_relative_eq!(
            trbdf2_family_radius(gamma_lstable()).unwrap(),
            1.0 + sqrt2(),
            epsilon = 1e-14
        );
        assert_relative_eq!(trbdf2_family_radius(0.5).unwrap(), 2.4, epsilon = 1e-14);
        assert!(trbdf2_family_radius(0.0).is_err());
        assert!(trbdf2_family_radius(1.0).is_err());
    }

    #[test]
    fn family_radius_maximized_at_lstable_gamma() {
        let mut best = (0.0, 0.0);
        let mut g = 1e-4;
        while g < 1.0 {
            let r = trbdf2_family_radius(g).unwrap();
            if r > best.1 {
                best = (g, r);
            }
            g += 1e-4;
        }
        assert!((best.0 - gamma_lstable()).abs() <= 1e-4);
    }

    #[test]
    fn stability_function_values() {
        let z0 = Complex64::new(0.0, 0.0);
        for tab in [
            ButcherTableau::implicit_euler(),
            ButcherTableau::crank_nicolson(),
            ButcherTableau::trbdf2(gamma_lstable()).unwrap(),
        ] {
            let phi = stability_function(&tab, z0).unwrap();
            assert_relative_eq!(phi.re, 1.0, epsilon = 1e-14);
            assert_relative_eq!(phi.im, 0.0, epsilon = 1e-14);
        }
        // rational form of the family stability function at z = -1
        let g = gamma_lstable();
        let tab = ButcherTableau::trbdf2(g).unwrap();
        let z = -1.0;
        let want = ((1.0 + (1.0 - g).powi(2)) * z + 2.0 * (2.0 - g))
            / (2.0 * (2.0 - g) * (1.0 - z * g / 2.0) * (1.0 - z * (1.0 - g) / (2.0 - g)));
        let got = stability_function(&tab, Complex64::new(z, 0.0)).unwrap();
        assert_relative_eq!(got.re, want, epsilon = 1e-12);
        // alpha = 0 closed form
        let tab0 = hybrid_trbdf2_tableau(0.0, g).unwrap();
        for z in [-0.5, -2.0, -17.0] {
            let want = 1.0 / (1.0 - z + g * (1.0 - g) * z * z);
            let got = stability_function(&tab0, Complex64::new(z, 0.0)).unwrap();
            assert_relative_eq!(got.re, want, epsilon = 1e-12);
        }
    }

    #[test]
    fn trbdf2_poles_raise_and_negative_axis_does_not() {
        let g = gamma_lstable();
        let tab = ButcherTableau::trbdf2(g).unwrap();
        for pole in [2.0 / g, (2.0 - g) / (1.0 - g)] {
            assert!(pole > 0.0);
            for dz in [-1e-6, 0.0, 1e-6] {
                let r = stability_function(&tab, Complex64::new(pole + dz, 0.0));
                assert!(r.is_err(), "expected singularity near pole {pole}");
            }
        }
        let mut z = -1e-3;
        while z > -1e7 {
            assert!(stability_function(&tab, Complex64::new(z, 0.0)).is_ok());
            z *= 10.0;
        }
    }

    #[test]
    fn ark_degenerates_to_single_tableaux() {
        let g = gamma_lstable();
        let t1 = ButcherTableau::trbdf2(g).unwrap();
        let t0 = hybrid_trbdf2_tableau(0.0, g).unwrap();
        let one = ark_stability_function(
            &t1.a,
            &t0.a,
            &t1.b,
            &t0.b,
            Complex64::new(0.0, 0.0),
            0.0,
        )
        .unwrap();
        assert_relative_eq!(one.re, 1.0, epsilon = 1e-14);
        assert_relative_eq!(one.im, 0.0, epsilon = 1e-14);
        for z in [-0.3, -2.5, -40.0] {
            let ark = ark_stability_function(&t1.a, &t0.a, &t1.b, &t0.b, Complex64::new(z, 0.0), 0.0)
                .unwrap();
            let phi = stability_function(&t0, Complex64::new(z, 0.0)).unwrap();
            assert_relative_eq!(ark.re, phi.re, epsilon = 1e-12);
            assert_relative_eq!(ark.im, phi.im, epsilon = 1e-12);
        }
        for w in [0.4, 3.0, 25.0] {
            let ark = ark_stability_function(
                &t1.a,
                &t0.a,
                &t1.b,
                &t0.b,
                Complex64::new(0.0, 0.0),
                w,
            )
            .unwrap();
            let phi = stability_function(&t1, Complex64::new(0.0, w)).unwrap();
            assert_relative_eq!(ark.re, phi.re, epsilon = 1e-12);
            assert_relative_eq!(ark.im, phi.im, epsilon = 1e-12);
        }
    }

    #[test]
    fn hybrid_tableau_special_cases() {
        let g = gamma_lstable();
        let t1 = hybrid_trbdf2_tableau(1.0, g).unwrap();
        assert_relative_eq!(t1.a[(1, 0)], g / 2.0, epsilon = 1e-15);
        assert_relative_eq!(t1.a[(1, 1)], g / 2.0, epsilon = 1e-15);
        assert_relative_eq!(t1.b[0], 1.0 / (2.0 * (2.0 - g)), epsilon = 1e-15);
        assert_relative_eq!(t1.b[2], (1.0 - g) / (2.0 - g), epsilon = 1e-15);
        let t0 = hybrid_trbdf2_tableau(0.0, g).unwrap();
        assert_eq!(t0.a[(1, 0)], 0.0);
        assert_relative_eq!(t0.a[(1, 1)], g, epsilon = 1e-15);
        assert_relative_eq!(t0.b[1], g, epsilon = 1e-15);
        assert_relative_eq!(t0.b[2], 1.0 - g, epsilon = 1e-15);
        let th = hybrid_trbdf2_tableau(0.5, 0.5).unwrap();
        let row_sum: f64 = (0..3).map(|j| th.a[(2, j)]).sum();
        assert_relative_eq!(row_sum, 1.0, epsilon = 1e-14);
    }

    #[test]
    fn hybrid_row_sums_match_c_on_grid() {
        for ia in 0..21 {
            let alpha = ia as f64 / 20.0;
            for ig in 1..20 {
                let gamma = ig as f64 / 20.0;
                let t = hybrid_trbdf2_tableau(alpha, gamma).unwrap();
                for i in 0..3 {
                    let rs: f64 = (0..3).map(|j| t.a[(i, j)]).sum();
                    assert!(
                        (rs - t.c[i]).abs() < 1e-13,
                        "row sum {rs} vs c {} at alpha={alpha} gamma={gamma}",
                        t.c[i]
                    );
                }
            }
        }
    }

    #[test]
    fn grid_samples_implicit_euler_and_lstability() {
        let ie = ButcherTableau::implicit_euler();
        let grid = stability_region_grid(
            |z| stability_function(&ie, z),
            (-3.0, 3.0),
            (-3.0, 3.0),
            13,
            13,
        );
        // z = 2 lands on the grid: |1/(1-2)| = 1
        let i_re = grid.re.iter().position(|&x| (x - 2.0).abs() < 1e-12).unwrap();
        let i_im = grid.im.iter().position(|&y| y.abs() < 1e-12).unwrap();
        assert_relative_eq!(grid.value_at(i_re, i_im), 1.0, epsilon = 1e-12);
        // pole at z = 1 recorded as infinity, not an error
        let p_re = grid.re.iter().position(|&x| (x - 1.0).abs() < 1e-12).unwrap();
        assert!(grid.value_at(p_re, i_im).is_infinite());

        let trb = ButcherTableau::trbdf2(gamma_lstable()).unwrap();
        let phi = stability_function(&trb, Complex64::new(-1e6, 0.0)).unwrap();
        assert!(phi.norm() <= 1e-5, "|phi(-1e6)| = {} too large", phi.norm());
        for alpha in [0.0, 0.5] {
            let tab = hybrid_trbdf2_tableau(alpha, gamma_lstable()).unwrap();
            for k in 0..=20 {
                let y = -100.0 + 10.0 * k as f64;
                let phi = stability_function(&tab, Complex64::new(0.0, y)).unwrap();
                assert!(phi.norm() <= 1.0 + 1e-12, "A-stability violated at iy={y}");
            }
        }
    }

    #[test]
    fn parse_round_trip() {
        let text = "2\n0 0\n0.5 0.5\n0.5 0.5\n0 1\n";
        let tab = ButcherTableau::parse(text).unwrap();
        assert_eq!(tab.s, 2);
        assert_eq!(tab.a[(1, 0)], 0.5);
        assert_eq!(tab.classify(), TableauClass::Dirk);
        assert!(ButcherTableau::parse("2\n0 0\n0.5 0.5\n0.5 0.5\n0 0.7\n").is_err());
        assert!(ButcherTableau::parse("").is_err());
    }

    #[test]
    fn classification() {
        assert_eq!(
            ButcherTableau::explicit_euler().classify(),
            TableauClass::Explicit
        );
        assert_eq!(
            ButcherTableau::implicit_euler().classify(),
            TableauClass::Dirk
        );
        let gauss = ButcherTableau::new(
            DMatrix::from_row_slice(1, 1, &[0.5]),
            DVector::from_vec(vec![1.0]),
            DVector::from_vec(vec![0.5]),
            2,
            1,
            "midpoint",
        )
        .unwrap();
        assert_eq!(gauss.classify(), TableauClass::Dirk);
    }
}
