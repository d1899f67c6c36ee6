//! Smooth spectral test functions and a resolvent-based functional calculus.
//!
//! Three layers live here. The bottom layer is a family of concrete test
//! functions: a Gaussian, the zero function, and compactly supported plateau
//! bumps built from the classical `exp(-1/t)` mollifier, each carrying exact
//! derivatives of every order through truncated Taylor (jet) arithmetic. The
//! middle layer extends a test function off the real axis to an almost
//! analytic function on the strip `|Im z| <= 1`, whose antiholomorphic
//! derivative vanishes to a prescribed order at the axis. The top layer turns
//! that extension into a matrix function: for a real symmetric matrix `A`,
//!
//! ```text
//! f(A) = -(1/pi) Re  integral over the upper half strip of
//!        dbar f_N(z) (z - A)^{-1}  dx dy,
//! ```
//!
//! evaluated by tensor quadrature that refines geometrically toward the real
//! axis, where the resolvent peaks and `dbar f_N` dies. The route never
//! diagonalizes `A`, so eigendecomposition stays available as an independent
//! cross-check.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use thiserror::Error;

use crate::correspondence::SpectralIsland;
use crate::quad::gauss_legendre;

/// Errors from test-function construction and the matrix functional calculus.
#[derive(Debug, Error)]
pub enum FuncalcError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("construction failed: {0}")]
    Construction(String),
    #[error("accuracy shortfall: achieved {achieved:.3e}, required {required:.3e}")]
    Accuracy { achieved: f64, required: f64 },
}

type Result<T> = std::result::Result<T, FuncalcError>;

/// Where a test function may be nonzero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Support {
    /// The whole real line.
    All,
    /// The open interval `(lo, hi)`; the function vanishes outside it.
    Interval(f64, f64),
}

impl Support {
    /// Whether `x` lies inside the support.
    pub fn contains(&self, x: f64) -> bool {
        match *self {
            Support::All => true,
            Support::Interval(lo, hi) => lo < x && x < hi,
        }
    }
}

/// Coarse smoothness classification of a test function.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SmoothnessClass {
    /// Entire on the real line with rapidly decaying derivatives.
    Analytic,
    /// Infinitely smooth with compact support.
    CompactBump,
}

#[derive(Debug, Clone)]
enum Kind {
    Zero,
    Gaussian,
    Bump { s_lo: f64, p_lo: f64, p_hi: f64, s_hi: f64 },
}

/// A smooth real function with exact derivatives of every order, suitable for
/// spectral averages: evaluation, differentiation, and support/plateau
/// geometry all come from one closed-form description.
#[derive(Debug, Clone)]
pub struct TestFunction {
    kind: Kind,
}

impl TestFunction {
    /// The function that is identically zero.
    pub fn zero() -> Self {
        TestFunction { kind: Kind::Zero }
    }

    /// The Gaussian `exp(-x^2)`.
    pub fn gaussian() -> Self {
        TestFunction { kind: Kind::Gaussian }
    }

    fn bump(s_lo: f64, p_lo: f64, p_hi: f64, s_hi: f64) -> Result<Self> {
        let ordered = s_lo < p_lo && p_lo <= p_hi && p_hi < s_hi;
        if !ordered || ![s_lo, p_lo, p_hi, s_hi].iter().all(|v| v.is_finite()) {
            return Err(FuncalcError::Construction(format!(
                "bump breakpoints must be finite and ordered, got \
                 {s_lo}, {p_lo}, {p_hi}, {s_hi}"
            )));
        }
        Ok(TestFunction { kind: Kind::Bump { s_lo, p_lo, p_hi, s_hi } })
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self.kind {
            Kind::Zero => 0.0,
            Kind::Gaussian => (-x * x).exp(),
            Kind::Bump { s_lo, p_lo, p_hi, s_hi } => {
                if x <= s_lo || x >= s_hi {
                    0.0
                } else if (p_lo..=p_hi).contains(&x) {
                    1.0
                } else if x < p_lo {
                    smoothstep((x - s_lo) / (p_lo - s_lo))
                } else {
                    smoothstep((s_hi - x) / (s_hi - p_hi))
                }
            }
        }
    }

    pub fn deriv(&self, x: f64) -> f64 {
        self.derivatives(x, 1)[1]
    }

    /// Derivatives `f, f', ..., f^(order)` at `x`, all exact up to rounding.
    pub fn derivatives(&self, x: f64, order: usize) -> Vec<f64> {
        let coeffs = self.taylor(x, order);
        let mut out = coeffs;
        let mut factorial = 1.0;
        for (j, c) in out.iter_mut().enumerate() {
            if j > 0 {
                factorial *= j as f64;
            }
            *c *= factorial;
        }
        out
    }

    /// Taylor coefficients `f^(j)(x)/j!` for `j = 0..=order`.
    fn taylor(&self, x: f64, order: usize) -> Vec<f64> {
        match self.kind {
            Kind::Zero => vec![0.0; order + 1],
            Kind::Gaussian => {
                let mut v = vec![0.0; order + 1];
                v[0] = -x * x;
                if order >= 1 {
                    v[1] = -2.0 * x;
                }
                if order >= 2 {
                    v[2] = -1.0;
                }
                jet_exp(&v)
            }
            Kind::Bump { s_lo, p_lo, p_hi, s_hi } => {
                if (p_lo..=p_hi).contains(&x) {
                    let mut c = vec![0.0; order + 1];
                    c[0] = 1.0;
                    c
                } else if x <= s_lo || x >= s_hi {
                    vec![0.0; order + 1]
                } else if x < p_lo {
                    let width = p_lo - s_lo;
                    let jet = smoothstep_jet((x - s_lo) / width, order);
                    scale_jet(jet, 1.0 / width)
                } else {
                    let width = s_hi - p_hi;
                    let jet = smoothstep_jet((s_hi - x) / width, order);
                    scale_jet(jet, -1.0 / width)
                }
            }
        }
    }

    pub fn support(&self) -> Support {
        match self.kind {
            Kind::Zero => Support::Interval(0.0, 0.0),
            Kind::Gaussian => Support::All,
            Kind::Bump { s_lo, s_hi, .. } => Support::Interval(s_lo, s_hi),
        }
    }

    /// Closed interval on which the function is identically one, if any.
    pub fn plateau(&self) -> Option<(f64, f64)> {
        match self.kind {
            Kind::Bump { p_lo, p_hi, .. } => Some((p_lo, p_hi)),
            _ => None,
        }
    }

    /// Whether `x` lies strictly inside the plateau.
    pub fn on_plateau(&self, x: f64) -> bool {
        match self.plateau() {
            Some((lo, hi)) => lo < x && x < hi,
            None => false,
        }
    }

    pub fn smoothness_class(&self) -> SmoothnessClass {
        match self.kind {
            Kind::Zero | Kind::Gaussian => SmoothnessClass::Analytic,
            Kind::Bump { .. } => SmoothnessClass::CompactBump,
        }
    }

    /// A bounded interval outside of which the function and all tabulated
    /// derivatives are negligible; the quadrature domain of the calculus.
    fn quadrature_domain(&self) -> (f64, f64) {
        match self.support() {
            Support::Interval(lo, hi) => (lo, hi),
            Support::All => (-8.0, 8.0),
        }
    }
}

/// Smooth plateau function adapted to a spectral island: identically one on
/// every island level, zero past the neighboring levels, with the transition
/// ramps keeping `margin` times the local gap clear on both sides.
pub fn make_gap_function(island: &SpectralIsland, b: f64, margin: f64) -> Result<TestFunction> {
    if !(b.is_finite() && b > 0.0) {
        return Err(FuncalcError::InvalidInput(format!(
            "field strength must be positive and finite, got {b}"
        )));
    }
    if !(margin > 0.0 && margin < 0.5) {
        return Err(FuncalcError::InvalidInput(format!(
            "margin must lie strictly between 0 and 1/2, got {margin}"
        )));
    }
    let level = |k: i32| (k.signum() as f64) * (2.0 * b * k.unsigned_abs() as f64).sqrt();
    let below = level(island.k_lo() - 1);
    let bottom = level(island.k_lo());
    let top = level(island.k_hi());
    let above = level(island.k_hi() + 1);
    let gap_lo = bottom - below;
    let gap_hi = above - top;
    if !(gap_lo.is_finite() && gap_hi.is_finite() && gap_lo > 0.0 && gap_hi > 0.0) {
        return Err(FuncalcError::Construction(format!(
            "bounding gaps degenerate: {gap_lo:.6e} below, {gap_hi:.6e} above"
        )));
    }
    TestFunction::bump(
        below + margin * gap_lo,
        bottom - margin * gap_lo,
        top + margin * gap_hi,
        above - margin * gap_hi,
    )
}

// ---------------------------------------------------------------------------
// Jet arithmetic on truncated Taylor series.
//
// A jet is the coefficient vector [c_0, ..., c_m] of f(x0 + s) = sum c_k s^k.
// Composition with exp and division follow the standard convolution
// recurrences; every derivative the module hands out comes from these, so the
// mollifier pieces stay exact to rounding at all orders.
// ---------------------------------------------------------------------------

fn jet_exp(v: &[f64]) -> Vec<f64> {
    let mut u = vec![0.0; v.len()];
    u[0] = v[0].exp();
    for k in 1..v.len() {
        let mut s = 0.0;
        for j in 1..=k {
            s += j as f64 * v[j] * u[k - j];
        }
        u[k] = s / k as f64;
    }
    u
}

fn jet_div(num: &[f64], den: &[f64]) -> Vec<f64> {
    let mut w = vec![0.0; num.len()];
    for k in 0..num.len() {
        let mut s = num[k];
        for j in 1..=k {
            s -= den[j] * w[k - j];
        }
        w[k] = s / den[0];
    }
    w
}

/// Jet of `-1/t` at `t0 > 0`.
fn jet_neg_recip(t0: f64, order: usize) -> Vec<f64> {
    let mut c = vec![0.0; order + 1];
    let mut power = 1.0 / t0;
    for (k, slot) in c.iter_mut().enumerate() {
        *slot = if k % 2 == 0 { -power } else { power };
        power /= t0;
    }
    c
}

/// Jet of `theta(t) = exp(-1/t)` (zero for `t <= 0`) at `t0`.
fn jet_theta(t0: f64, order: usize) -> Vec<f64> {
    // Below 1/700 the value underflows past 1e-304; the jet is zero to within
    // double precision and the reciprocal powers would grow without use.
    if t0 <= 1.0 / 700.0 {
        return vec![0.0; order + 1];
    }
    jet_exp(&jet_neg_recip(t0, order))
}

fn smoothstep(t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else if t >= 1.0 {
        1.0
    } else {
        let rise = (-1.0 / t).exp();
        let fall = (-1.0 / (1.0 - t)).exp();
        rise / (rise + fall)
    }
}

/// Jet of the mollifier step `theta(t) / (theta(t) + theta(1 - t))`.
fn smoothstep_jet(t0: f64, order: usize) -> Vec<f64> {
    if t0 <= 0.0 {
        return vec![0.0; order + 1];
    }
    if t0 >= 1.0 {
        let mut c = vec![0.0; order + 1];
        c[0] = 1.0;
        return c;
    }
    let rise = jet_theta(t0, order);
    let mut fall = jet_theta(1.0 - t0, order);
    for (k, c) in fall.iter_mut().enumerate() {
        if k % 2 == 1 {
            *c = -*c;
        }
    }
    let den: Vec<f64> = rise.iter().zip(&fall).map(|(a, b)| a + b).collect();
    jet_div(&rise, &den)
}

fn smoothstep_deriv(t: f64) -> f64 {
    smoothstep_jet(t, 1)[1]
}

/// Chain rule for an affine substitution: coefficients of `g(u) = f(a + c u)`
/// from those of `f`, i.e. `c_k -> c_k * scale^k`.
fn scale_jet(mut jet: Vec<f64>, scale: f64) -> Vec<f64> {
    let mut power = 1.0;
    for (k, c) in jet.iter_mut().enumerate() {
        if k > 0 {
            power *= scale;
        }
        *c *= power;
    }
    jet
}

// ---------------------------------------------------------------------------
// Almost analytic extension.
// ---------------------------------------------------------------------------

/// Extension of a test function to the strip `|Im z| <= 1` that is analytic to
/// order `n` at the real axis:
///
/// ```text
/// f_n(x + iy) = g(y) * sum_{j<=n} f^(j)(x) (iy)^j / j!,
/// ```
///
/// with `g` a fixed even cutoff, one on `|y| <= 1/2` and zero past `|y| = 1`.
/// Its antiholomorphic derivative collapses to two terms,
///
/// ```text
/// (d/dx + i d/dy) f_n = g(y) f^(n+1)(x) (iy)^n / n!  +  i g'(y) sum_{j<=n} ...,
/// ```
///
/// so `|dbar f_n|` vanishes like `|y|^n` at the axis and the decay constant
/// can be measured directly.
#[derive(Debug, Clone)]
pub struct AlmostAnalyticExtension {
    f: TestFunction,
    order: usize,
    decay_constant: f64,
}

/// Builds the order-`n` almost analytic extension of `f`, measuring the
/// constant in the axis-decay bound along the way.
pub fn almost_analytic_extension(f: &TestFunction, order: usize) -> Result<AlmostAnalyticExtension> {
    if order < 1 {
        return Err(FuncalcError::InvalidInput(format!(
            "extension order must be at least 1, got {order}"
        )));
    }
    if order > 12 {
        return Err(FuncalcError::InvalidInput(format!(
            "extension order {order} exceeds 12; factorial growth past that \
             buys no accuracy in double precision"
        )));
    }
    let (lo, hi) = f.quadrature_domain();
    if hi > lo {
        let h = 1e-5;
        let mut worst = 0.0f64;
        for i in 0..41 {
            let x = lo + (hi - lo) * (i as f64 + 0.5) / 41.0;
            let exact = f.derivatives(x, 1)[1];
            let stencil = (f.eval(x + h) - f.eval(x - h)) / (2.0 * h);
            let scale = exact.abs().max(1.0);
            worst = worst.max((exact - stencil).abs() / scale);
        }
        if worst > 1e-6 {
            return Err(FuncalcError::Accuracy { achieved: worst, required: 1e-6 });
        }
    }
    let mut ext = AlmostAnalyticExtension { f: f.clone(), order, decay_constant: 0.0 };
    ext.decay_constant = measure_decay_constant(&ext)?;
    Ok(ext)
}

/// Largest observed value of `|dbar f_n| <x>^n / |y|^n` over a sampling grid
/// of the strip, which is the constant in the stated decay bound.
fn measure_decay_constant(ext: &AlmostAnalyticExtension) -> Result<f64> {
    let (lo, hi) = ext.f.quadrature_domain();
    if hi <= lo {
        return Ok(0.0);
    }
    let n = ext.order as i32;
    let mut worst = 0.0f64;
    for i in 0..160 {
        let x = lo + (hi - lo) * (i as f64 + 0.5) / 160.0;
        let weight = (1.0 + x * x).sqrt().powi(n);
        for j in 0..40 {
            // Log-spaced heights cover both the axis limit and the cutoff ramp.
            let y = 10f64.powf(-3.0 + 3.0 * (j as f64 + 0.5) / 40.0);
            let ratio = ext.dbar(Complex64::new(x, y)).norm() * weight / y.powi(n);
            worst = worst.max(ratio);
        }
    }
    if !worst.is_finite() {
        return Err(FuncalcError::Construction(
            "axis decay constant diverged while sampling the strip".into(),
        ));
    }
    Ok(worst)
}

impl AlmostAnalyticExtension {
    /// Order of vanishing of `dbar f_n` at the real axis.
    pub fn order(&self) -> usize {
        self.order
    }

    /// The function being extended.
    pub fn function(&self) -> &TestFunction {
        &self.f
    }

    /// Measured constant `C` in `|dbar f_n(z)| <= C |Im z|^n / <Re z>^n`.
    pub fn decay_constant(&self) -> f64 {
        self.decay_constant
    }

    /// The vertical cutoff: one on `|y| <= 1/2`, zero for `|y| >= 1`.
    pub fn g_cutoff(&self, y: f64) -> f64 {
        smoothstep(2.0 * (1.0 - y.abs()))
    }

    fn g_cutoff_deriv(&self, y: f64) -> f64 {
        if y == 0.0 {
            return 0.0;
        }
        -2.0 * y.signum() * smoothstep_deriv(2.0 * (1.0 - y.abs()))
    }

    /// The extension at `z`; restricts to `f` on the real axis.
    pub fn eval(&self, z: Complex64) -> Complex64 {
        let g = self.g_cutoff(z.im);
        if g == 0.0 {
            return Complex64::ZERO;
        }
        let derivs = self.f.derivatives(z.re, self.order);
        g * taylor_polynomial(&derivs, self.order, z.im)
    }

    /// The antiholomorphic derivative `(d/dx + i d/dy) f_n` at `z`.
    pub fn dbar(&self, z: Complex64) -> Complex64 {
        let derivs = self.f.derivatives(z.re, self.order + 1);
        self.dbar_from_derivatives(&derivs, z.im)
    }

    /// Same as [`dbar`](Self::dbar) with the derivative table precomputed
    /// (it is reused across many heights at one abscissa).
    fn dbar_from_derivatives(&self, derivs: &[f64], y: f64) -> Complex64 {
        let g = self.g_cutoff(y);
        let gp = self.g_cutoff_deriv(y);
        if g == 0.0 && gp == 0.0 {
            return Complex64::ZERO;
        }
        let iy = Complex64::new(0.0, y);
        let mut leading = Complex64::new(derivs[self.order + 1], 0.0);
        let mut factorial = 1.0;
        for j in 1..=self.order {
            factorial *= j as f64;
        }
        leading = leading / factorial * iy.powu(self.order as u32);
        let tail = taylor_polynomial(derivs, self.order, y);
        g * leading + Complex64::I * gp * tail
    }
}

/// Horner evaluation of `sum_{j<=order} derivs[j] (iy)^j / j!`.
fn taylor_polynomial(derivs: &[f64], order: usize, y: f64) -> Complex64 {
    let iy = Complex64::new(0.0, y);
    let mut factorial = 1.0;
    for j in 1..=order {
        factorial *= j as f64;
    }
    let mut acc = Complex64::new(derivs[order] / factorial, 0.0);
    for j in (0..order).rev() {
        factorial /= (j + 1) as f64;
        acc = acc * iy + derivs[j] / factorial;
    }
    acc
}

// ---------------------------------------------------------------------------
// Matrix functional calculus.
// ---------------------------------------------------------------------------

const MAX_MATRIX_DIM: usize = 512;
/// High derivatives of the mollifier pile up in narrow features near the
/// support and plateau corners, so the panels must stay fine enough for the
/// Gauss rule to resolve them through extension order 5.
const X_PANEL_WIDTH: f64 = 0.1;
const X_RULE: usize = 24;
const Y_RULE: usize = 16;
const Y_DYADIC_DEPTH: u32 = 12;
const DEPTH_CONVERGENCE: f64 = 1e-8;

/// Evaluates `f(A)` for real symmetric `A` through the resolvent integral of
/// the almost analytic extension of `f`: the upper half of the strip is tiled
/// with tensor cells, dyadically refined toward the real axis, and each node
/// contributes `-(1/pi) Re [w dbar f_n(z) (z - A)^{-1}]`. The resolvents are
/// Thomas solves against the Householder tridiagonalization of `A`, so the
/// spectrum itself is never computed.
pub fn hs_matrix_function(a: &DMatrix<f64>, f: &TestFunction, order: usize) -> Result<DMatrix<f64>> {
    let dim = a.nrows();
    if dim == 0 || a.ncols() != dim {
        return Err(FuncalcError::InvalidInput(format!(
            "matrix must be square and nonempty, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    if dim > MAX_MATRIX_DIM {
        return Err(FuncalcError::InvalidInput(format!(
            "matrix dimension {dim} exceeds the supported {MAX_MATRIX_DIM}"
        )));
    }
    if order < 3 {
        return Err(FuncalcError::InvalidInput(format!(
            "extension order must be at least 3 for the axis quadrature, got {order}"
        )));
    }
    let scale = a.amax().max(1.0);
    for i in 0..dim {
        for j in (i + 1)..dim {
            if (a[(i, j)] - a[(j, i)]).abs() > 1e-12 * scale {
                return Err(FuncalcError::InvalidInput(format!(
                    "matrix is not symmetric at ({i}, {j})"
                )));
            }
        }
    }
    let ext = almost_analytic_extension(f, order)?;

    let (q, diag, off) = if dim == 1 {
        (DMatrix::identity(1, 1), vec![a[(0, 0)]], Vec::new())
    } else {
        let tri = nalgebra::linalg::SymmetricTridiagonal::new(a.clone());
        let (q, d, e) = tri.unpack();
        (q, d.as_slice().to_vec(), e.as_slice().to_vec())
    };

    // Horizontal panels cover the support of f, split at the plateau corners
    // where the derivative profile changes character.
    let (lo, hi) = f.quadrature_domain();
    let mut breakpoints = vec![lo];
    if let Some((p_lo, p_hi)) = f.plateau() {
        breakpoints.push(p_lo);
        breakpoints.push(p_hi);
    }
    breakpoints.push(hi);
    let mut x_panels: Vec<(f64, f64)> = Vec::new();
    for pair in breakpoints.windows(2) {
        let (a0, a1) = (pair[0], pair[1]);
        if a1 <= a0 {
            continue;
        }
        let pieces = ((a1 - a0) / X_PANEL_WIDTH).ceil() as usize;
        let width = (a1 - a0) / pieces as f64;
        for p in 0..pieces {
            x_panels.push((a0 + p as f64 * width, a0 + (p + 1) as f64 * width));
        }
    }
    let y_panels: Vec<(f64, f64)> =
        (0..Y_DYADIC_DEPTH).map(|k| (0.5f64.powi(k as i32 + 1), 0.5f64.powi(k as i32))).collect();

    let (xn, xw) = gauss_legendre(X_RULE);
    let (yn, yw) = gauss_legendre(Y_RULE);

    let cells: Vec<(usize, usize)> = (0..x_panels.len())
        .flat_map(|ix| (0..y_panels.len()).map(move |iy| (ix, iy)))
        .collect();

    let per_cell: Vec<DMatrix<f64>> = cells
        .par_iter()
        .map(|&(ix, iy)| {
            let (xa, xb) = x_panels[ix];
            let (ya, yb) = y_panels[iy];
            let xc = 0.5 * (xa + xb);
            let xh = 0.5 * (xb - xa);
            let yc = 0.5 * (ya + yb);
            let yh = 0.5 * (yb - ya);
            let mut acc = DMatrix::<f64>::zeros(dim, dim);
            let mut work = ResolventWorkspace::new(dim);
            for (xi, wx) in xn.iter().zip(&xw) {
                let x = xc + xh * xi;
                let derivs = ext.function().derivatives(x, order + 1);
                for (eta, wy) in yn.iter().zip(&yw) {
                    let y = yc + yh * eta;
                    let dbar = ext.dbar_from_derivatives(&derivs, y);
                    if dbar == Complex64::ZERO {
                        continue;
                    }
                    let coeff = dbar * (wx * xh * wy * yh);
                    work.accumulate(&mut acc, &diag, &off, Complex64::new(x, y), coeff);
                }
            }
            acc
        })
        .collect();

    let mut total = DMatrix::<f64>::zeros(dim, dim);
    let mut deepest = DMatrix::<f64>::zeros(dim, dim);
    for (&(_, iy), cell) in cells.iter().zip(&per_cell) {
        total += cell;
        if iy == y_panels.len() - 1 {
            deepest += cell;
        }
    }
    let total_norm = total.norm();
    let deepest_norm = deepest.norm();
    if deepest_norm > DEPTH_CONVERGENCE * total_norm && deepest_norm > 1e-300 {
        return Err(FuncalcError::Accuracy {
            achieved: deepest_norm / total_norm.max(1e-300),
            required: DEPTH_CONVERGENCE,
        });
    }
    let tri_result = total * (-1.0 / std::f64::consts::PI);
    Ok(&q * tri_result * q.transpose())
}

/// Reusable Thomas-solve buffers for columns of `(z - T)^{-1}` with `T`
/// symmetric tridiagonal.
struct ResolventWorkspace {
    pivots: Vec<Complex64>,
    multipliers: Vec<Complex64>,
    column: Vec<Complex64>,
}

impl ResolventWorkspace {
    fn new(dim: usize) -> Self {
        ResolventWorkspace {
            pivots: vec![Complex64::ZERO; dim],
            multipliers: vec![Complex64::ZERO; dim],
            column: vec![Complex64::ZERO; dim],
        }
    }

    /// Adds `Re(coeff * (z - T)^{-1})` to `acc`, column by column.
    fn accumulate(
        &mut self,
        acc: &mut DMatrix<f64>,
        diag: &[f64],
        off: &[f64],
        z: Complex64,
        coeff: Complex64,
    ) {
        let n = diag.len();
        self.pivots[0] = z - diag[0];
        for i in 1..n {
            let m = -off[i - 1] / self.pivots[i - 1];
            self.multipliers[i] = m;
            self.pivots[i] = (z - diag[i]) + m * off[i - 1];
        }
        for j in 0..n {
            self.column[j] = Complex64::ONE;
            for i in (j + 1)..n {
                self.column[i] = -self.multipliers[i] * self.column[i - 1];
            }
            self.column[n - 1] /= self.pivots[n - 1];
            for i in (0..n - 1).rev() {
                let rhs = if i >= j { self.column[i] } else { Complex64::ZERO };
                self.column[i] = (rhs + off[i] * self.column[i + 1]) / self.pivots[i];
            }
            for i in 0..n {
                let g = self.column[i];
                acc[(i, j)] += coeff.re * g.re - coeff.im * g.im;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::correspondence::SpectralIsland;
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn gap_island_zero() -> TestFunction {
        make_gap_function(&SpectralIsland::new(0, 0).unwrap(), 1.0, 0.3).unwrap()
    }

    #[test]
    fn smoothstep_is_monotone_and_clamps() {
        assert_eq!(smoothstep(-0.5), 0.0);
        assert_eq!(smoothstep(0.0), 0.0);
        assert_eq!(smoothstep(1.0), 1.0);
        assert_eq!(smoothstep(2.0), 1.0);
        assert!((smoothstep(0.5) - 0.5).abs() < 1e-15);
        let mut last = 0.0;
        for i in 1..200 {
            let v = smoothstep(i as f64 / 200.0);
            assert!(v >= last);
            last = v;
        }
    }

    #[test]
    fn gaussian_jets_match_hermite_recursion() {
        // f^(j)(x) = (-1)^j H_j(x) exp(-x^2) with the physicists' Hermite
        // polynomials, an independent route to the same derivatives.
        for &x in &[-2.3f64, -1.0, 0.0, 0.7, 1.9] {
            let derivs = TestFunction::gaussian().derivatives(x, 7);
            let weight = (-x * x).exp();
            assert!((derivs[0] - weight).abs() <= 1e-14 * weight.max(1e-300));
            let mut h_prev = 1.0;
            let mut h_cur = 2.0 * x;
            for j in 1..=7usize {
                let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
                let expected = sign * h_cur * weight;
                assert!(
                    (derivs[j] - expected).abs() <= 1e-11 * expected.abs().max(1.0),
                    "x={x} j={j}: {} vs {expected}",
                    derivs[j]
                );
                let next = 2.0 * x * h_cur - 2.0 * j as f64 * h_prev;
                h_prev = h_cur;
                h_cur = next;
            }
        }
    }

    #[test]
    fn test_function_derivatives_match_finite_differences() {
        let h = 2e-4;
        for f in [TestFunction::gaussian(), gap_island_zero()] {
            let (lo, hi) = match f.support() {
                Support::All => (-3.0, 3.0),
                Support::Interval(a, b) => (a - 0.2, b + 0.2),
            };
            for i in 0..1000 {
                let x = lo + (hi - lo) * (i as f64 + 0.5) / 1000.0;
                let exact = f.deriv(x);
                let stencil = (f.eval(x - 2.0 * h) - 8.0 * f.eval(x - h) + 8.0 * f.eval(x + h)
                    - f.eval(x + 2.0 * h))
                    / (12.0 * h);
                assert!(
                    (exact - stencil).abs() <= 1e-8 * exact.abs().max(1.0),
                    "x = {x}: {exact} vs {stencil}"
                );
            }
        }
    }

    #[test]
    fn gap_function_covers_exactly_the_island() {
        let sqrt2 = 2f64.sqrt();
        let f = gap_island_zero();
        let (p_lo, p_hi) = f.plateau().unwrap();
        let Support::Interval(s_lo, s_hi) = f.support() else {
            panic!("gap function must have compact support");
        };
        assert!((p_lo + 0.3 * sqrt2).abs() < 1e-14);
        assert!((p_hi - 0.3 * sqrt2).abs() < 1e-14);
        assert!((s_lo + 0.7 * sqrt2).abs() < 1e-14);
        assert!((s_hi - 0.7 * sqrt2).abs() < 1e-14);
        assert_eq!(f.eval(0.0), 1.0);
        assert_eq!(f.eval(0.4), 1.0);
        assert_eq!(f.eval(-sqrt2), 0.0);
        assert_eq!(f.eval(sqrt2), 0.0);
        assert_eq!(f.eval(5.0), 0.0);
        assert!(f.eval(0.7) > 0.0 && f.eval(0.7) < 1.0);
        assert_eq!(f.smoothness_class(), SmoothnessClass::CompactBump);

        // Two-level island: the plateau must reach both levels.
        let island = SpectralIsland::new(0, 1).unwrap();
        let f2 = make_gap_function(&island, 1.0, 0.3).unwrap();
        assert_eq!(f2.eval(0.0), 1.0);
        assert_eq!(f2.eval(sqrt2), 1.0);
        assert_eq!(f2.eval(2.0), 0.0);
        assert_eq!(f2.eval(-sqrt2), 0.0);
    }

    #[test]
    fn gap_function_derivative_vanishes_at_every_level() {
        let island = SpectralIsland::new(0, 1).unwrap();
        let f = make_gap_function(&island, 1.0, 0.3).unwrap();
        for k in -20i32..=20 {
            let level = (k.signum() as f64) * (2.0 * k.unsigned_abs() as f64).sqrt();
            assert_eq!(f.deriv(level), 0.0, "level {k}");
        }
    }

    #[test]
    fn gap_function_rejects_bad_inputs() {
        let island = SpectralIsland::new(0, 0).unwrap();
        assert!(matches!(
            make_gap_function(&island, 1.0, 0.0),
            Err(FuncalcError::InvalidInput(_))
        ));
        assert!(matches!(
            make_gap_function(&island, 1.0, 0.5),
            Err(FuncalcError::InvalidInput(_))
        ));
        assert!(matches!(
            make_gap_function(&island, 1.0, -0.2),
            Err(FuncalcError::InvalidInput(_))
        ));
        assert!(matches!(
            make_gap_function(&island, 0.0, 0.3),
            Err(FuncalcError::InvalidInput(_))
        ));
    }

    #[test]
    fn zero_and_gaussian_carry_their_tags() {
        let zero = TestFunction::zero();
        assert_eq!(zero.eval(0.3), 0.0);
        assert_eq!(zero.deriv(-1.0), 0.0);
        assert_eq!(zero.smoothness_class(), SmoothnessClass::Analytic);
        assert!(zero.plateau().is_none());
        assert!(!zero.support().contains(0.0));

        let gauss = TestFunction::gaussian();
        assert_eq!(gauss.support(), Support::All);
        assert!(gauss.support().contains(17.0));
        assert_eq!(gauss.smoothness_class(), SmoothnessClass::Analytic);
        assert!((gauss.eval(1.0) - (-1f64).exp()).abs() < 1e-16);
    }

    #[test]
    fn extension_matches_f_on_the_real_axis() {
        for f in [TestFunction::gaussian(), gap_island_zero()] {
            let ext = almost_analytic_extension(&f, 3).unwrap();
            let (lo, hi) = match f.support() {
                Support::All => (-4.0, 4.0),
                Support::Interval(a, b) => (a - 0.1, b + 0.1),
            };
            for i in 0..1000 {
                let x = lo + (hi - lo) * (i as f64 + 0.5) / 1000.0;
                let v = ext.eval(Complex64::new(x, 0.0));
                assert!((v.re - f.eval(x)).abs() <= 1e-12);
                assert_eq!(v.im, 0.0);
            }
        }
    }

    #[test]
    fn extension_vanishes_outside_the_unit_strip() {
        let ext = almost_analytic_extension(&gap_island_zero(), 4).unwrap();
        for &y in &[1.0, -1.0, 1.5, -2.0] {
            for &x in &[0.0, 0.5, -0.9] {
                assert_eq!(ext.eval(Complex64::new(x, y)), Complex64::ZERO);
                assert_eq!(ext.dbar(Complex64::new(x, y)), Complex64::ZERO);
            }
        }
        assert_eq!(ext.g_cutoff(0.3), 1.0);
        assert_eq!(ext.g_cutoff(-0.5), 1.0);
        assert_eq!(ext.g_cutoff(1.0), 0.0);
        let mid = ext.g_cutoff(0.75);
        assert!(mid > 0.0 && mid < 1.0);
    }

    #[test]
    fn extension_dbar_decays_to_the_stated_order() {
        for order in [1usize, 3, 5] {
            let ext = almost_analytic_extension(&gap_island_zero(), order).unwrap();
            let c = ext.decay_constant();
            assert!(c.is_finite() && c > 0.0);
            // Fresh sample set, denser than the calibration grid.
            let mut worst = 0.0f64;
            for i in 0..57 {
                let x = -1.1 + 2.2 * (i as f64 + 0.3) / 57.0;
                for j in 0..31 {
                    let y = 10f64.powf(-2.7 + 2.6 * (j as f64 + 0.7) / 31.0);
                    let bound = c * y.powi(order as i32) / (1.0 + x * x).sqrt().powi(order as i32);
                    let val = ext.dbar(Complex64::new(x, y)).norm();
                    worst = worst.max(val - bound * (1.0 + 1e-9));
                }
            }
            assert!(worst <= 1e-12, "decay bound violated by {worst}");
        }
    }

    #[test]
    fn extension_requires_a_positive_order() {
        let f = TestFunction::gaussian();
        assert!(matches!(
            almost_analytic_extension(&f, 0),
            Err(FuncalcError::InvalidInput(_))
        ));
        assert!(almost_analytic_extension(&f, 1).is_ok());
    }

    #[test]
    fn matrix_function_of_a_spin_projector() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        let f = TestFunction::gaussian();
        let got = hs_matrix_function(&a, &f, 3).unwrap();
        let expected = (-1f64).exp();
        assert!((got[(0, 0)] - expected).abs() < 1e-4, "{}", got[(0, 0)]);
        assert!((got[(1, 1)] - expected).abs() < 1e-4, "{}", got[(1, 1)]);
        assert!(got[(0, 1)].abs() < 1e-6);
        assert!(got[(1, 0)].abs() < 1e-6);
    }

    #[test]
    fn matrix_function_distinguishes_inside_from_outside() {
        // One eigenvalue on the plateau, one past the support: the result
        // must be the spectral projection, which pins the orientation of the
        // contour sum.
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 2.0]);
        let f = gap_island_zero();
        let got = hs_matrix_function(&a, &f, 3).unwrap();
        assert!((got[(0, 0)] - 1.0).abs() < 1e-4, "{}", got[(0, 0)]);
        assert!(got[(1, 1)].abs() < 1e-4, "{}", got[(1, 1)]);
    }

    #[test]
    fn matrix_function_of_a_scalar() {
        let a = DMatrix::from_row_slice(1, 1, &[0.0]);
        let got = hs_matrix_function(&a, &TestFunction::gaussian(), 3).unwrap();
        assert!((got[(0, 0)] - 1.0).abs() < 1e-4, "{}", got[(0, 0)]);
    }

    #[test]
    fn matrix_function_matches_eigendecomposition() {
        let problem = crate::edge_fiber::FiberProblem::new(1.0, 0.0).unwrap();
        let (diag, off) = crate::edge_fiber::double_wall_matrix(&problem, 64, 12.0).unwrap();
        let dim = diag.len();
        let mut a = DMatrix::<f64>::zeros(dim, dim);
        for i in 0..dim {
            a[(i, i)] = diag[i];
            if i + 1 < dim {
                a[(i, i + 1)] = off[i];
                a[(i + 1, i)] = off[i];
            }
        }
        let f = gap_island_zero();
        let via_quadrature = hs_matrix_function(&a, &f, 3).unwrap();

        let eig = nalgebra::linalg::SymmetricEigen::new(a.clone());
        let mut spectral = DMatrix::<f64>::zeros(dim, dim);
        for (idx, &lambda) in eig.eigenvalues.iter().enumerate() {
            let v = eig.eigenvectors.column(idx);
            spectral += f.eval(lambda) * &v * v.transpose();
        }
        let worst = (&via_quadrature - &spectral).amax();
        assert!(worst < 1e-4, "max deviation {worst}");
    }

    #[test]
    fn matrix_function_is_stable_in_the_extension_order() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        let f = TestFunction::gaussian();
        let low = hs_matrix_function(&a, &f, 3).unwrap();
        let high = hs_matrix_function(&a, &f, 5).unwrap();
        assert!((&low - &high).amax() < 1e-5);
    }

    #[test]
    fn matrix_function_commutes_with_its_argument() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let dim = 8;
        let mut a = DMatrix::<f64>::zeros(dim, dim);
        for i in 0..dim {
            for j in 0..=i {
                let v: f64 = rng.gen_range(-1.0..1.0);
                a[(i, j)] = v;
                a[(j, i)] = v;
            }
        }
        let fa = hs_matrix_function(&a, &TestFunction::gaussian(), 3).unwrap();
        let commutator = (&a * &fa - &fa * &a).norm();
        assert!(commutator <= 1e-4 * fa.norm(), "commutator {commutator}");
    }

    #[test]
    fn matrix_function_validates_inputs() {
        let f = TestFunction::gaussian();
        let big = DMatrix::<f64>::zeros(513, 513);
        assert!(matches!(
            hs_matrix_function(&big, &f, 3),
            Err(FuncalcError::InvalidInput(_))
        ));
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        assert!(matches!(
            hs_matrix_function(&a, &f, 3),
            Err(FuncalcError::InvalidInput(_))
        ));
        let sym = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        assert!(matches!(
            hs_matrix_function(&sym, &f, 2),
            Err(FuncalcError::InvalidInput(_))
        ));
    }

    #[test]
    fn matrix_function_of_the_zero_function_is_zero() {
        let a = DMatrix::from_row_slice(2, 2, &[0.3, 0.1, 0.1, -0.4]);
        let got = hs_matrix_function(&a, &TestFunction::zero(), 3).unwrap();
        assert_eq!(got.amax(), 0.0);
    }
}
