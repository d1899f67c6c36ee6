//! Bulk and edge spectral functionals and the equalities tying them together.
//!
//! The bulk side of the story lives on the relativistic Landau levels
//! `e_k = sgn(k) sqrt(2|k|b)`: traces per unit area reduce to sums over
//! levels, the integrated density of states of a spectral island is linear in
//! the field, and the slope of that line measures a Chern number. The edge
//! side lives on the dispersion branches of the half-plane fiber operator:
//! a current functional integrates the drift velocity against a spectral
//! weight, and the signed count of branch crossings through a gap gives the
//! spectral flow. This module computes both sides independently and packages
//! their comparison, together with a third, real-space route to the same
//! integer through the zero-mode projection kernel.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::ser::SerializeSeq;
use serde::{Serialize, Serializer};
use thiserror::Error;

use crate::edge_fiber::{trace_branches, DispersionBranch, FiberError, XiRange};
use crate::funcalc::{make_gap_function, FuncalcError, TestFunction};
use crate::kernels::{PlanePoint, SpinorMatrix};
use crate::quad::{gauss_legendre, simpson_uniform};

/// Errors from the correspondence functionals.
#[derive(Debug, Error)]
pub enum CorrespondenceError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("validity: {0}")]
    Validity(String),
    #[error("construction failed: {0}")]
    Construction(String),
    #[error("level sum truncated: tail {tail:.3e} exceeds {limit:.3e} of the accumulated sum")]
    Truncation { tail: f64, limit: f64 },
    #[error(
        "coverage: branch {k} reaches its sweep end at xi = {xi} with lambda = {lambda:.6} \
         still inside the spectral weight"
    )]
    Coverage { k: i32, xi: f64, lambda: f64 },
    #[error("ambiguous crossing: {0}")]
    Ambiguous(String),
    #[error("accuracy shortfall: achieved {achieved:.3e}, required {required:.3e}")]
    Accuracy { achieved: f64, required: f64 },
    #[error(transparent)]
    Fiber(#[from] FiberError),
    #[error(transparent)]
    Funcalc(#[from] FuncalcError),
}

type Result<T> = std::result::Result<T, CorrespondenceError>;

/// Fraction of the accumulated level sum that the outermost term may carry
/// before a trace is declared under-truncated.
const TAIL_LIMIT: f64 = 1e-14;

fn check_field(b: f64) -> Result<()> {
    if !(b.is_finite() && b > 0.0) {
        return Err(CorrespondenceError::InvalidInput(format!(
            "field strength must be positive and finite, got {b}"
        )));
    }
    Ok(())
}

/// The Landau level attached to the signed index `k` at field `b`.
fn level_energy(b: f64, k: i32) -> f64 {
    (k.signum() as f64) * (2.0 * b * k.unsigned_abs() as f64).sqrt()
}

/// A maximal run of consecutive Landau level indices treated as one spectral
/// unit: the levels it contains are separated from the rest of the spectrum
/// by open gaps on both sides.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SpectralIsland {
    k_lo: i32,
    k_hi: i32,
}

impl SpectralIsland {
    pub fn new(k_lo: i32, k_hi: i32) -> Result<Self> {
        if k_lo > k_hi {
            return Err(CorrespondenceError::InvalidInput(format!(
                "island bounds out of order: {k_lo} > {k_hi}"
            )));
        }
        if i64::from(k_hi) - i64::from(k_lo) >= 64 {
            return Err(CorrespondenceError::InvalidInput(format!(
                "island {k_lo}..={k_hi} spans more than 64 levels"
            )));
        }
        Ok(SpectralIsland { k_lo, k_hi })
    }

    pub fn k_lo(&self) -> i32 {
        self.k_lo
    }

    pub fn k_hi(&self) -> i32 {
        self.k_hi
    }

    /// Number of levels in the island.
    pub fn count(&self) -> usize {
        (i64::from(self.k_hi) - i64::from(self.k_lo) + 1) as usize
    }

    /// The level indices, ascending.
    pub fn levels(&self) -> Vec<i32> {
        (self.k_lo..=self.k_hi).collect()
    }

    /// The level energies at field `b`, ascending.
    pub fn energies(&self, b: f64) -> Result<Vec<f64>> {
        check_field(b)?;
        Ok(self.levels().iter().map(|&k| level_energy(b, k)).collect())
    }
}

impl Serialize for SpectralIsland {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut seq = serializer.serialize_seq(Some(self.count()))?;
        for k in self.levels() {
            seq.serialize_element(&k)?;
        }
        seq.end()
    }
}

/// Spatial region used to normalize a trace to unit area.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Region {
    /// One magnetic unit cell.
    UnitCell,
    /// A strip of `length` unit cells along the translation direction.
    Strip { length: u32 },
    /// The half plane; its traces only exist through the edge functionals.
    SemiInfinite,
}

/// The Landau levels with `|k| <= k_max`, sorted ascending; the zero mode
/// appears once.
pub fn landau_levels(b: f64, k_max: u32) -> Result<Vec<f64>> {
    check_field(b)?;
    let k_max = k_max as i32;
    Ok((-k_max..=k_max).map(|k| level_energy(b, k)).collect())
}

/// Per-unit-area trace of `f` over the bulk spectrum: `(b/2pi) sum_k f(e_k)`.
///
/// The level sum runs over `|k| <= k_max` and is rejected when the outermost
/// terms still carry more than a `1e-14` fraction of the accumulated total.
pub fn bulk_trace(f: &TestFunction, b: f64, k_max: u32) -> Result<f64> {
    check_field(b)?;
    let mut sum = 0.0;
    let mut sum_abs = 0.0;
    for k in -(k_max as i32)..=(k_max as i32) {
        let v = f.eval(level_energy(b, k));
        sum += v;
        sum_abs += v.abs();
    }
    let tail = f.eval(level_energy(b, k_max as i32)).abs()
        + f.eval(level_energy(b, -(k_max as i32))).abs();
    if tail > TAIL_LIMIT * sum_abs {
        return Err(CorrespondenceError::Truncation { tail, limit: TAIL_LIMIT * sum_abs });
    }
    Ok(sum * (b / (2.0 * PI)))
}

/// Derivative of [`bulk_trace`] in the field at fixed `f`:
/// `(1/2pi) sum_k [ f(e_k) + f'(e_k) e_k / 2 ]`, using that each level moves
/// like `sqrt(b)` while the degeneracy grows linearly.
pub fn bulk_trace_derivative(f: &TestFunction, b: f64, k_max: u32) -> Result<f64> {
    check_field(b)?;
    let term = |k: i32| {
        let e = level_energy(b, k);
        f.eval(e) + 0.5 * f.deriv(e) * e
    };
    let mut sum = 0.0;
    let mut sum_abs = 0.0;
    for k in -(k_max as i32)..=(k_max as i32) {
        let v = term(k);
        sum += v;
        sum_abs += v.abs();
    }
    let tail = term(k_max as i32).abs() + term(-(k_max as i32)).abs();
    if tail > TAIL_LIMIT * sum_abs {
        return Err(CorrespondenceError::Truncation { tail, limit: TAIL_LIMIT * sum_abs });
    }
    Ok(sum / (2.0 * PI))
}

/// Integrated density of states of an island: `N b / 2pi` for `N` levels,
/// each contributing one state per flux quantum per unit area.
pub fn ids(island: &SpectralIsland, b: f64) -> Result<f64> {
    check_field(b)?;
    Ok(island.count() as f64 * (b / (2.0 * PI)))
}

/// Trace of `f` per unit area over the stated region. A strip of any length
/// carries the same density as one unit cell by translation invariance; the
/// semi-infinite region has no per-area trace of its own.
pub fn trace_per_unit_area(f: &TestFunction, b: f64, k_max: u32, region: Region) -> Result<f64> {
    match region {
        Region::UnitCell => bulk_trace(f, b, k_max),
        Region::Strip { length } => {
            if length == 0 {
                return Err(CorrespondenceError::InvalidInput(
                    "strip length must be at least 1".into(),
                ));
            }
            bulk_trace(f, b, k_max)
        }
        Region::SemiInfinite => Err(CorrespondenceError::Validity(
            "the semi-infinite region has no bulk trace; use the edge functionals".into(),
        )),
    }
}

/// Least-squares line through the integrated density of states of an island
/// sampled over a grid of field strengths.
#[derive(Debug, Clone, Copy)]
pub struct StredaFit {
    /// Fitted slope of the density in the field.
    pub slope: f64,
    /// `2pi` times the slope: the transported charge per level crossing.
    pub chern_estimate: f64,
    /// Largest absolute residual of the fit.
    pub residual: f64,
}

/// Fits `ids(island, b)` linearly over `b_grid` and reads the Chern number
/// off the slope. The island's bounding gaps must stay open on the whole
/// grid, which for these levels means every field must be positive.
pub fn streda_slope(island: &SpectralIsland, b_grid: &[f64]) -> Result<StredaFit> {
    if b_grid.len() < 3 {
        return Err(CorrespondenceError::InvalidInput(format!(
            "field grid needs at least 3 points, got {}",
            b_grid.len()
        )));
    }
    for &b in b_grid {
        if !(b.is_finite() && b > 0.0) {
            return Err(CorrespondenceError::Validity(format!(
                "island gaps close at field {b}; the fit is only defined for positive fields"
            )));
        }
    }
    let spread = b_grid.iter().cloned().fold(f64::INFINITY, f64::min)
        < b_grid.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !spread {
        return Err(CorrespondenceError::InvalidInput(
            "field grid must contain distinct values".into(),
        ));
    }
    let densities: Vec<f64> =
        b_grid.iter().map(|&b| ids(island, b)).collect::<Result<_>>()?;
    let n = b_grid.len() as f64;
    let mean_b = b_grid.iter().sum::<f64>() / n;
    let mean_d = densities.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut var = 0.0;
    for (&b, &d) in b_grid.iter().zip(&densities) {
        cov += (b - mean_b) * (d - mean_d);
        var += (b - mean_b) * (b - mean_b);
    }
    let slope = cov / var;
    let intercept = mean_d - slope * mean_b;
    let residual = b_grid
        .iter()
        .zip(&densities)
        .map(|(&b, &d)| (d - slope * b - intercept).abs())
        .fold(0.0, f64::max);
    Ok(StredaFit { slope, chern_estimate: 2.0 * PI * slope, residual })
}

// ---------------------------------------------------------------------------
// Edge functionals.
// ---------------------------------------------------------------------------

/// Whether the spectral weight `f'` vanishes identically around `lambda`,
/// i.e. the point sits outside the support of `f` or strictly inside its
/// plateau.
fn weight_free(f: &TestFunction, lambda: f64) -> bool {
    !f.support().contains(lambda) || f.on_plateau(lambda)
}

fn uniform_step(branch: &DispersionBranch) -> Result<f64> {
    let s = branch.samples();
    if s.len() < 3 {
        return Err(CorrespondenceError::InvalidInput(format!(
            "branch {} has {} samples; the quadrature needs at least 3",
            branch.k(),
            s.len()
        )));
    }
    let h = s[1].xi - s[0].xi;
    if !(h > 0.0) {
        return Err(CorrespondenceError::InvalidInput(format!(
            "branch {} is not sampled on an increasing grid",
            branch.k()
        )));
    }
    for pair in s.windows(2) {
        if ((pair[1].xi - pair[0].xi) - h).abs() > 1e-6 * h {
            return Err(CorrespondenceError::InvalidInput(format!(
                "branch {} is not uniformly sampled",
                branch.k()
            )));
        }
    }
    Ok(h)
}

/// Edge current carried by the traced branches against the spectral weight
/// `f'`:
///
/// ```text
/// -(1/2pi) sum_k  integral  f'(lambda_k(xi)) v_k(xi)  dxi,
/// ```
///
/// evaluated by composite quadrature on the branch samples. Every branch must
/// enter and leave the sweep with its level outside the support of `f'`;
/// otherwise part of the current escapes the window and the result is
/// rejected as uncovered.
pub fn edge_current(f: &TestFunction, b: f64, branches: &[DispersionBranch]) -> Result<f64> {
    check_field(b)?;
    if branches.is_empty() {
        return Err(CorrespondenceError::InvalidInput("no branches supplied".into()));
    }
    let mut total = 0.0;
    for branch in branches {
        if (branch.b() - b).abs() > 1e-12 * b {
            return Err(CorrespondenceError::InvalidInput(format!(
                "branch {} was traced at field {} but the current is requested at {}",
                branch.k(),
                branch.b(),
                b
            )));
        }
        let h = uniform_step(branch)?;
        let s = branch.samples();
        for endpoint in [&s[0], &s[s.len() - 1]] {
            if !weight_free(f, endpoint.lambda) {
                return Err(CorrespondenceError::Coverage {
                    k: branch.k(),
                    xi: endpoint.xi,
                    lambda: endpoint.lambda,
                });
            }
        }
        let integrand: Vec<f64> =
            s.iter().map(|p| f.deriv(p.lambda) * p.velocity).collect();
        total += simpson_uniform(&integrand, h);
    }
    Ok(-total / (2.0 * PI))
}

/// Defect of the per-branch telescoping identity
/// `integral f'(lambda) lambda' dxi = f(lambda(end)) - f(lambda(start))`,
/// using the traced velocity for `lambda'`. Bounded by the quadrature error
/// whenever velocities and eigenvalues are mutually consistent.
pub fn branch_telescoping_defect(f: &TestFunction, branch: &DispersionBranch) -> Result<f64> {
    let h = uniform_step(branch)?;
    let s = branch.samples();
    let integrand: Vec<f64> = s.iter().map(|p| f.deriv(p.lambda) * p.velocity).collect();
    let integral = simpson_uniform(&integrand, h);
    let jump = f.eval(s[s.len() - 1].lambda) - f.eval(s[0].lambda);
    Ok((integral - jump).abs())
}

/// Signed number of branch crossings through the level `mu`: each crossing
/// counts with the sign of the drift velocity there. `mu` must sit strictly
/// inside a bulk gap, and a crossing with velocity below `1e-10` in magnitude
/// cannot be signed and is reported as ambiguous.
pub fn spectral_flow(mu: f64, branches: &[DispersionBranch]) -> Result<i64> {
    if !mu.is_finite() {
        return Err(CorrespondenceError::InvalidInput(format!(
            "chemical potential must be finite, got {mu}"
        )));
    }
    if branches.is_empty() {
        return Err(CorrespondenceError::InvalidInput("no branches supplied".into()));
    }
    let b = branches[0].b();
    for branch in branches {
        if (branch.b() - b).abs() > 1e-12 * b {
            return Err(CorrespondenceError::InvalidInput(
                "branches were traced at different fields".into(),
            ));
        }
    }
    let k_reach = branches.iter().map(|br| br.k().unsigned_abs()).max().unwrap() as i32 + 2;
    for k in -k_reach..=k_reach {
        if (mu - level_energy(b, k)).abs() < 1e-6 * b.sqrt() {
            return Err(CorrespondenceError::InvalidInput(format!(
                "chemical potential {mu} sits on the bulk level with index {k}"
            )));
        }
    }
    let mut flow = 0i64;
    for branch in branches {
        for pair in branch.samples().windows(2) {
            let d0 = pair[0].lambda - mu;
            let d1 = pair[1].lambda - mu;
            if d0 == 0.0 || d1 == 0.0 {
                return Err(CorrespondenceError::Ambiguous(format!(
                    "branch {} touches mu = {mu} exactly at a sample; refine the sweep",
                    branch.k()
                )));
            }
            if d0 * d1 < 0.0 {
                let t = d0 / (d0 - d1);
                let velocity = pair[0].velocity + t * (pair[1].velocity - pair[0].velocity);
                if velocity.abs() < 1e-10 {
                    return Err(CorrespondenceError::Ambiguous(format!(
                        "branch {} crosses mu = {mu} with velocity {velocity:.3e}",
                        branch.k()
                    )));
                }
                flow += if velocity > 0.0 { 1 } else { -1 };
            }
        }
    }
    Ok(flow)
}

// ---------------------------------------------------------------------------
// Zero-mode projection kernel and its Chern number.
// ---------------------------------------------------------------------------

/// Integral kernel of the spectral projection onto the zero Landau level:
/// a Gaussian of width `2/sqrt(b)` times the magnetic phase of the gauge,
/// fully polarized in the first spinor component.
#[derive(Debug, Clone, Copy)]
pub struct ProjectionKernel {
    b: f64,
}

fn zero_mode_value(b: f64, x: PlanePoint, y: PlanePoint) -> Complex64 {
    let d1 = x.x1 - y.x1;
    let d2 = x.x2 - y.x2;
    let gauss = (-0.25 * b * (d1 * d1 + d2 * d2)).exp();
    let phase = -0.5 * b * d1 * (x.x2 + y.x2);
    (b / (2.0 * PI)) * gauss * Complex64::new(phase.cos(), phase.sin())
}

impl ProjectionKernel {
    pub fn b(&self) -> f64 {
        self.b
    }

    /// The kernel value as a spinor matrix: only the upper-left entry is
    /// populated, reflecting the full polarization of the zero modes.
    pub fn eval(&self, x: PlanePoint, y: PlanePoint) -> SpinorMatrix {
        let mut m = SpinorMatrix::ZERO;
        m.entries[0][0] = zero_mode_value(self.b, x, y);
        m
    }
}

/// Builds the zero-mode projection kernel at field `b` and verifies its
/// defining properties before handing it out: reproducing under convolution,
/// the `b/2pi` diagonal density, and magnetic covariance under translations.
pub fn zero_mode_projection_kernel(b: f64) -> Result<ProjectionKernel> {
    check_field(b)?;
    let scale = 1.0 / b.sqrt();
    let density = b / (2.0 * PI);

    for &(x1, x2) in &[(0.0, 0.0), (0.7 * scale, -0.3 * scale), (1.4 * scale, 2.0 * scale)] {
        let p = zero_mode_value(b, PlanePoint::new(x1, x2), PlanePoint::new(x1, x2));
        if (p.re - density).abs() > 1e-8 * density || p.im.abs() > 1e-12 * density {
            return Err(CorrespondenceError::Construction(format!(
                "diagonal density off: got {p} instead of {density}"
            )));
        }
    }

    // Idempotency under convolution, checked on a quadrature box wide enough
    // that the Gaussian tails are negligible against the 1e-6 tolerance.
    let probes = [
        (PlanePoint::new(0.0, 0.0), PlanePoint::new(0.0, 0.0)),
        (PlanePoint::new(scale, 0.0), PlanePoint::new(0.0, scale)),
        (PlanePoint::new(0.6 * scale, -0.5 * scale), PlanePoint::new(-0.4 * scale, scale)),
    ];
    let (nodes, weights) = gauss_legendre(80);
    let half = 7.5 * scale;
    for &(x, y) in &probes {
        let center = PlanePoint::new(0.5 * (x.x1 + y.x1), 0.5 * (x.x2 + y.x2));
        let mut conv = Complex64::ZERO;
        for (t1, w1) in nodes.iter().zip(&weights) {
            let z1 = center.x1 + half * t1;
            for (t2, w2) in nodes.iter().zip(&weights) {
                let z = PlanePoint::new(z1, center.x2 + half * t2);
                conv += w1 * w2 * zero_mode_value(b, x, z) * zero_mode_value(b, z, y);
            }
        }
        conv *= half * half;
        let direct = zero_mode_value(b, x, y);
        if (conv - direct).norm() > 1e-6 * density {
            return Err(CorrespondenceError::Construction(format!(
                "kernel does not reproduce under convolution: {conv} vs {direct}"
            )));
        }
    }

    // Magnetic covariance: translating both arguments only multiplies the
    // kernel by the gauge phase of the translation.
    let pair = (PlanePoint::new(0.3 * scale, -0.2 * scale), PlanePoint::new(-scale, 0.4 * scale));
    for &(e1, e2) in &[(0.7, 0.0), (0.0, -0.4), (0.3, 0.5)] {
        let shift = (e1 * scale, e2 * scale);
        let moved = zero_mode_value(
            b,
            PlanePoint::new(pair.0.x1 + shift.0, pair.0.x2 + shift.1),
            PlanePoint::new(pair.1.x1 + shift.0, pair.1.x2 + shift.1),
        );
        let angle = -b * shift.1 * (pair.0.x1 - pair.1.x1);
        let expected = zero_mode_value(b, pair.0, pair.1) * Complex64::new(angle.cos(), angle.sin());
        if (moved - expected).norm() > 1e-12 * density {
            return Err(CorrespondenceError::Construction(
                "kernel is not magnetically covariant".into(),
            ));
        }
    }

    Ok(ProjectionKernel { b })
}

/// Quadrature radius at which the Gaussian tails of the Chern integrand drop
/// below `1e-10`, with a small safety factor.
pub fn chern_radius(b: f64) -> f64 {
    (23.0 / (0.375 * b)).sqrt() * 1.05
}

fn chern_integral(b: f64, radius: f64, nu: usize, nv: usize) -> f64 {
    let map = |n: usize| {
        let (t, w) = gauss_legendre(n);
        t.iter().zip(&w).map(|(&t, &w)| (radius * t, radius * w)).collect::<Vec<_>>()
    };
    let us = map(nu);
    let vs = map(nv);
    let quarter_b = 0.25 * b;
    let half_b = 0.5 * b;
    let partials: Vec<f64> = (0..us.len())
        .into_par_iter()
        .map(|i| {
            let (u1, wu1) = us[i];
            let mut acc = 0.0;
            for &(u2, wu2) in &us {
                let uu = u1 * u1 + u2 * u2;
                for &(v1, wv1) in &vs {
                    for &(v2, wv2) in &vs {
                        let cross = u1 * v2 - u2 * v1;
                        let duv = (u1 - v1) * (u1 - v1) + (u2 - v2) * (u2 - v2);
                        let vv = v1 * v1 + v2 * v2;
                        let gauss = (-quarter_b * (uu + vv + duv)).exp();
                        acc += wu1 * wu2 * wv1 * wv2 * cross * (half_b * cross).sin() * gauss;
                    }
                }
            }
            acc
        })
        .collect();
    partials.iter().sum::<f64>() * b.powi(3) / (4.0 * PI * PI)
}

/// Chern number of the zero-mode projection through the real-space
/// double-commutator formula
///
/// ```text
/// Ch = 2 pi i  integral over a unit cell of
///      tr( P [[X1, P], [X2, P]] )(x, x) dx,
/// ```
///
/// reduced to a four-dimensional Gaussian integral over the two relative
/// coordinates; the unit-cell average drops out because the diagonal is
/// translation invariant. Evaluated on nested tensor rules whose agreement
/// is checked before the value is returned.
pub fn chern_zero_mode(b: f64, quad_radius: f64) -> Result<f64> {
    check_field(b)?;
    if !(quad_radius.is_finite() && 0.375 * b * quad_radius * quad_radius >= 23.0) {
        return Err(CorrespondenceError::InvalidInput(format!(
            "quadrature radius {quad_radius} leaves Gaussian tails above 1e-10 at field {b}; \
             need (3/8) b R^2 >= 23"
        )));
    }
    let fine = chern_integral(b, quad_radius, 32, 28);
    let coarse = chern_integral(b, quad_radius, 24, 20);
    let drift = (fine - coarse).abs();
    if drift > 5e-4 {
        return Err(CorrespondenceError::Accuracy { achieved: drift, required: 5e-4 });
    }
    Ok(fine)
}

// ---------------------------------------------------------------------------
// The assembled correspondence report.
// ---------------------------------------------------------------------------

/// Tolerances a report was judged against.
#[derive(Debug, Clone, Copy)]
pub struct ReportTolerances {
    /// Allowed relative mismatch between bulk and edge values.
    pub bulk_edge_rel: f64,
    /// Allowed deviation of the Streda Chern estimate from an integer.
    pub chern_abs: f64,
}

/// Per-branch bookkeeping carried alongside a report.
#[derive(Debug, Clone, Copy)]
pub struct BranchDiagnostics {
    pub k: i32,
    pub samples: usize,
    pub xi_start: f64,
    pub xi_stop: f64,
    pub max_bc_residual: f64,
    pub max_ode_residual: f64,
    pub telescoping_defect: f64,
}

/// One bulk-edge comparison at a fixed island and field: the two sides of
/// the correspondence, the Streda slope, and the spectral flow, with their
/// mutual deviations.
#[derive(Debug, Clone, Serialize)]
pub struct CorrespondenceReport {
    pub b: f64,
    pub island: SpectralIsland,
    pub bulk_value: f64,
    pub edge_value: f64,
    pub streda_slope: f64,
    pub chern_estimate: f64,
    pub spectral_flow: i64,
    pub abs_err: f64,
    pub rel_err: f64,
    pub pass: bool,
    #[serde(skip)]
    pub tolerances: ReportTolerances,
    #[serde(skip)]
    pub branches: Vec<BranchDiagnostics>,
    #[serde(skip)]
    pub traced_branches: Vec<DispersionBranch>,
}

/// Margin (as a fraction of the local gap) the report's spectral weight keeps
/// clear of the neighboring levels.
const REPORT_MARGIN: f64 = 0.3;

/// Momentum step of the report's branch sweep, in units of `sqrt(b)`. The
/// composite quadrature error this induces in the edge current sits two
/// orders of magnitude below the report tolerance.
const REPORT_STEP: f64 = 0.016;

/// Runs the full correspondence at one island and field: traces the edge
/// branches across the spectral weight of the island, integrates the edge
/// current, and compares it with the bulk trace derivative, the Streda line,
/// and the spectral flow through the upper gap.
pub fn bulk_edge_report(island: &SpectralIsland, b: f64) -> Result<CorrespondenceReport> {
    check_field(b)?;
    let f = make_gap_function(island, b, REPORT_MARGIN)?;
    let tail_reach = island.k_hi().unsigned_abs().max(island.k_lo().unsigned_abs()) + 2;
    let bulk_value = bulk_trace_derivative(&f, b, tail_reach)?;

    let k_first = island.k_lo().min(0) - 1;
    let branch_set: Vec<i32> = (k_first..=island.k_hi()).collect();
    let sqrt_b = b.sqrt();
    let k_abs = branch_set.iter().map(|k| k.unsigned_abs()).max().unwrap().max(1);
    let start = -6.0 * sqrt_b * (k_abs as f64).sqrt() - 4.0 - 0.05;
    let top = level_energy(b, island.k_hi());
    let above = level_energy(b, island.k_hi() + 1);
    let gap_hi = above - top;
    let clear = (above - REPORT_MARGIN * gap_hi) + 3.0 * REPORT_MARGIN * gap_hi;
    let stop = (clear * clear + b).sqrt() + 0.25 * sqrt_b;
    let range = XiRange::new(start, stop, REPORT_STEP * sqrt_b)?;
    let traced = trace_branches(b, range, &branch_set)?;

    let edge_value = edge_current(&f, b, &traced)?;
    let fit = streda_slope(island, &[0.95 * b, b, 1.05 * b])?;
    let mu = 0.5 * (top + above);
    let flow = spectral_flow(mu, &traced)?;

    let mut branches = Vec::with_capacity(traced.len());
    for branch in &traced {
        let s = branch.samples();
        branches.push(BranchDiagnostics {
            k: branch.k(),
            samples: s.len(),
            xi_start: s[0].xi,
            xi_stop: s[s.len() - 1].xi,
            max_bc_residual: s.iter().map(|p| p.bc_residual.abs()).fold(0.0, f64::max),
            max_ode_residual: s.iter().map(|p| p.ode_residual.abs()).fold(0.0, f64::max),
            telescoping_defect: branch_telescoping_defect(&f, branch)?,
        });
    }

    let abs_err = (bulk_value - edge_value).abs();
    let rel_err = abs_err / bulk_value.abs().max(f64::MIN_POSITIVE);
    let tolerances = ReportTolerances { bulk_edge_rel: 1e-3, chern_abs: 1e-6 };
    let n = island.count() as f64;
    let pass = rel_err <= tolerances.bulk_edge_rel
        && flow == island.count() as i64
        && (fit.chern_estimate - n).abs() <= tolerances.chern_abs;

    Ok(CorrespondenceReport {
        b,
        island: *island,
        bulk_value,
        edge_value,
        streda_slope: fit.slope,
        chern_estimate: fit.chern_estimate,
        spectral_flow: flow,
        abs_err,
        rel_err,
        pass,
        tolerances,
        branches,
        traced_branches: traced,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::edge_fiber::BranchSample;

    fn synthetic_branch(
        k: i32,
        b: f64,
        start: f64,
        stop: f64,
        step: f64,
        lambda: impl Fn(f64) -> f64,
        velocity: impl Fn(f64) -> f64,
    ) -> DispersionBranch {
        let n = ((stop - start) / step).round() as usize;
        let samples = (0..=n)
            .map(|i| {
                let xi = start + i as f64 * step;
                BranchSample {
                    xi,
                    lambda: lambda(xi),
                    velocity: velocity(xi),
                    bc_residual: 0.0,
                    ode_residual: 0.0,
                }
            })
            .collect();
        DispersionBranch::from_parts(k, b, samples)
    }

    fn softplus(x: f64) -> f64 {
        if x > 30.0 {
            x
        } else {
            x.exp().ln_1p()
        }
    }

    fn sigmoid(x: f64) -> f64 {
        1.0 / (1.0 + (-x).exp())
    }

    fn island_zero() -> SpectralIsland {
        SpectralIsland::new(0, 0).unwrap()
    }

    fn gap_fn(island: &SpectralIsland) -> TestFunction {
        make_gap_function(island, 1.0, 0.3).unwrap()
    }

    #[test]
    fn landau_levels_match_the_closed_form() {
        let levels = landau_levels(2.0, 2).unwrap();
        let expected = [-2.828427, -2.0, 0.0, 2.0, 2.828427];
        assert_eq!(levels.len(), expected.len());
        for (got, want) in levels.iter().zip(&expected) {
            assert!((got - want).abs() < 1e-6, "{got} vs {want}");
        }
        for pair in levels.windows(2) {
            assert!(pair[0] < pair[1]);
        }
        // Gaps shrink moving away from zero.
        let upper: Vec<f64> = levels.iter().skip(2).cloned().collect();
        for triple in upper.windows(3) {
            assert!(triple[2] - triple[1] < triple[1] - triple[0]);
        }
        assert_eq!(landau_levels(2.0, 0).unwrap(), vec![0.0]);
    }

    #[test]
    fn bulk_trace_matches_the_geometric_series() {
        let series = 1.0 + 2.0 * (1..=30).map(|k| (-2.0 * k as f64).exp()).sum::<f64>();
        let oracle = series / (2.0 * PI);
        let got = bulk_trace(&TestFunction::gaussian(), 1.0, 30).unwrap();
        assert!((got - oracle).abs() <= 1e-13, "{got} vs {oracle}");
        assert!((got - 0.208975).abs() <= 2e-6);
    }

    #[test]
    fn bulk_trace_counts_island_levels() {
        let f = gap_fn(&island_zero());
        let got = bulk_trace(&f, 1.0, 5).unwrap();
        assert!((got - 1.0 / (2.0 * PI)).abs() <= 1e-15);
        assert_eq!(bulk_trace(&TestFunction::zero(), 1.0, 3).unwrap(), 0.0);
    }

    #[test]
    fn bulk_trace_rejects_slow_tails() {
        let result = bulk_trace(&TestFunction::gaussian(), 1.0, 2);
        assert!(matches!(result, Err(CorrespondenceError::Truncation { .. })));
    }

    #[test]
    fn bulk_trace_derivative_matches_the_series_and_finite_differences() {
        let series = 1.0
            + 2.0
                * (1..=30)
                    .map(|k| {
                        let e2 = 2.0 * k as f64;
                        (-e2).exp() * (1.0 - e2)
                    })
                    .sum::<f64>();
        let oracle = series / (2.0 * PI);
        let f = TestFunction::gaussian();
        let got = bulk_trace_derivative(&f, 1.0, 30).unwrap();
        assert!((got - oracle).abs() <= 1e-13, "{got} vs {oracle}");
        assert!((got - 0.093746).abs() <= 1e-5);

        let h = 1e-5;
        let stencil =
            (bulk_trace(&f, 1.0 + h, 30).unwrap() - bulk_trace(&f, 1.0 - h, 30).unwrap())
                / (2.0 * h);
        assert!((got - stencil).abs() <= 1e-8, "{got} vs {stencil}");
    }

    #[test]
    fn bulk_trace_derivative_counts_island_levels() {
        let f = gap_fn(&island_zero());
        let got = bulk_trace_derivative(&f, 1.0, 5).unwrap();
        assert!((got - 1.0 / (2.0 * PI)).abs() <= 1e-12);
    }

    #[test]
    fn ids_is_linear_in_field_and_count() {
        let three = SpectralIsland::new(-1, 1).unwrap();
        let got = ids(&three, 1.0).unwrap();
        assert!((got - 3.0 / (2.0 * PI)).abs() <= 1e-15);
        assert!((got - 0.477464).abs() <= 1e-6);
        let one = island_zero();
        assert_eq!(ids(&one, 2.0 * PI).unwrap(), 1.0);
        // Equality with the bulk trace of the island's own gap function.
        let f = gap_fn(&one);
        let trace = bulk_trace(&f, 1.0, 5).unwrap();
        assert!((ids(&one, 1.0).unwrap() - trace).abs() <= 1e-12);
    }

    #[test]
    fn streda_fits_the_density_line() {
        let grid = [0.8, 0.9, 1.0, 1.1, 1.2];
        let fit = streda_slope(&island_zero(), &grid).unwrap();
        assert!((fit.chern_estimate - 1.0).abs() <= 1e-9, "{}", fit.chern_estimate);
        assert!((fit.slope - 1.0 / (2.0 * PI)).abs() <= 1e-9);
        assert!(fit.residual <= 1e-12, "{}", fit.residual);

        let wide = SpectralIsland::new(0, 2).unwrap();
        let fit = streda_slope(&wide, &grid).unwrap();
        assert!((fit.chern_estimate - 3.0).abs() <= 1e-9);
        assert!(fit.residual <= 1e-12);
    }

    #[test]
    fn streda_validates_its_grid() {
        let island = island_zero();
        assert!(matches!(
            streda_slope(&island, &[1.0, 1.1]),
            Err(CorrespondenceError::InvalidInput(_))
        ));
        assert!(matches!(
            streda_slope(&island, &[0.5, -0.1, 1.0]),
            Err(CorrespondenceError::Validity(_))
        ));
        assert!(matches!(
            streda_slope(&island, &[1.0, 1.0, 1.0]),
            Err(CorrespondenceError::InvalidInput(_))
        ));
    }

    #[test]
    fn strip_traces_are_length_independent() {
        let f = TestFunction::gaussian();
        let cell = trace_per_unit_area(&f, 1.0, 30, Region::UnitCell).unwrap();
        for length in [1, 5, 17] {
            let strip = trace_per_unit_area(&f, 1.0, 30, Region::Strip { length }).unwrap();
            assert_eq!(cell, strip);
        }
        assert!(matches!(
            trace_per_unit_area(&f, 1.0, 30, Region::SemiInfinite),
            Err(CorrespondenceError::Validity(_))
        ));
        assert!(matches!(
            trace_per_unit_area(&f, 1.0, 30, Region::Strip { length: 0 }),
            Err(CorrespondenceError::InvalidInput(_))
        ));
    }

    #[test]
    fn edge_current_telescopes_on_synthetic_branches() {
        // One rising branch from the zero level: the current must equal the
        // full weight drop across the upper ramp, 1/(2 pi).
        let f = gap_fn(&island_zero());
        let rising = synthetic_branch(0, 1.0, -10.0, 3.0, 0.005, softplus, sigmoid);
        let flat = synthetic_branch(
            -1,
            1.0,
            -10.0,
            3.0,
            0.005,
            |xi| -2f64.sqrt() - softplus(xi),
            |xi| -sigmoid(xi),
        );
        let got = edge_current(&f, 1.0, &[rising.clone(), flat]).unwrap();
        assert!((got - 1.0 / (2.0 * PI)).abs() <= 1e-6, "{got}");

        let defect = branch_telescoping_defect(&f, &rising).unwrap();
        assert!(defect <= 1e-6, "telescoping defect {defect}");

        // Two rising branches across a two-level island.
        let island = SpectralIsland::new(0, 1).unwrap();
        let f2 = gap_fn(&island);
        let second =
            synthetic_branch(1, 1.0, -10.0, 3.0, 0.005, |xi| 2f64.sqrt() + softplus(xi), sigmoid);
        let lower = synthetic_branch(0, 1.0, -10.0, 3.0, 0.005, softplus, sigmoid);
        let neg = synthetic_branch(
            -1,
            1.0,
            -10.0,
            3.0,
            0.005,
            |xi| -2f64.sqrt() - softplus(xi),
            |xi| -sigmoid(xi),
        );
        let got = edge_current(&f2, 1.0, &[lower, second, neg]).unwrap();
        assert!((got - 2.0 / (2.0 * PI)).abs() <= 1e-6, "{got}");
    }

    #[test]
    fn edge_current_flags_uncovered_windows() {
        let f = gap_fn(&island_zero());
        // Stop the sweep while the level is still climbing the upper ramp.
        let truncated = synthetic_branch(0, 1.0, -10.0, 0.014, 0.005, softplus, sigmoid);
        assert!(matches!(
            edge_current(&f, 1.0, &[truncated]),
            Err(CorrespondenceError::Coverage { k: 0, .. })
        ));
    }

    #[test]
    fn edge_current_validates_branches() {
        let f = gap_fn(&island_zero());
        let ok = synthetic_branch(0, 1.0, -10.0, 3.0, 0.01, softplus, sigmoid);
        assert!(matches!(
            edge_current(&f, 2.0, &[ok.clone()]),
            Err(CorrespondenceError::InvalidInput(_))
        ));
        assert!(matches!(
            edge_current(&f, 1.0, &[]),
            Err(CorrespondenceError::InvalidInput(_))
        ));
        let stub = DispersionBranch::from_parts(
            0,
            1.0,
            vec![
                BranchSample {
                    xi: 0.0,
                    lambda: 0.0,
                    velocity: 0.0,
                    bc_residual: 0.0,
                    ode_residual: 0.0,
                },
                BranchSample {
                    xi: 1.0,
                    lambda: 0.0,
                    velocity: 0.0,
                    bc_residual: 0.0,
                    ode_residual: 0.0,
                },
            ],
        );
        assert!(matches!(
            edge_current(&f, 1.0, &[stub]),
            Err(CorrespondenceError::InvalidInput(_))
        ));
    }

    #[test]
    fn spectral_flow_counts_signed_crossings() {
        let rising = synthetic_branch(0, 1.0, -10.0, 3.0, 0.01, softplus, sigmoid);
        assert_eq!(spectral_flow(1.0, &[rising.clone()]).unwrap(), 1);
        assert_eq!(spectral_flow(-0.05, &[rising.clone()]).unwrap(), 0);

        let upper =
            synthetic_branch(1, 1.0, -10.0, 3.0, 0.01, |xi| 2f64.sqrt() + softplus(xi), sigmoid);
        assert_eq!(spectral_flow(1.7, &[rising.clone(), upper]).unwrap(), 2);

        let falling = synthetic_branch(0, 1.0, -10.0, 3.0, 0.01, |xi| 1.3 - softplus(xi), |xi| {
            -sigmoid(xi)
        });
        assert_eq!(spectral_flow(1.0, &[rising, falling]).unwrap(), 0);
    }

    #[test]
    fn spectral_flow_rejects_flat_crossings() {
        let flat = synthetic_branch(
            0,
            1.0,
            -1.0,
            1.0,
            0.1,
            |xi| 0.9 + 1e-13 * xi,
            |_| 1e-13,
        );
        assert!(matches!(
            spectral_flow(0.9 + 5e-15, &[flat]),
            Err(CorrespondenceError::Ambiguous(_))
        ));
    }

    #[test]
    fn spectral_flow_rejects_on_level_potentials() {
        let rising = synthetic_branch(0, 1.0, -10.0, 3.0, 0.01, softplus, sigmoid);
        assert!(matches!(
            spectral_flow(2f64.sqrt(), &[rising]),
            Err(CorrespondenceError::InvalidInput(_))
        ));
    }

    #[test]
    fn projection_kernel_validates_and_evaluates() {
        for &b in &[1.0, 0.5] {
            let p = zero_mode_projection_kernel(b).unwrap();
            let x = PlanePoint::new(0.3, -1.2);
            let diag = p.eval(x, x);
            assert!((diag.entries[0][0].re - b / (2.0 * PI)).abs() <= 1e-12);
            assert_eq!(diag.entries[0][1], Complex64::ZERO);
            assert_eq!(diag.entries[1][0], Complex64::ZERO);
            assert_eq!(diag.entries[1][1], Complex64::ZERO);
            // Hermitian as a kernel: swapping arguments conjugates.
            let y = PlanePoint::new(-0.4, 0.7);
            let forward = p.eval(x, y).entries[0][0];
            let backward = p.eval(y, x).entries[0][0];
            assert!((forward - backward.conj()).norm() <= 1e-15);
        }
    }

    #[test]
    fn chern_of_the_zero_mode_is_one() {
        let got = chern_zero_mode(1.0, 8.0).unwrap();
        assert!((got - 1.0).abs() <= 1e-3, "{got}");
    }

    #[test]
    fn chern_guards_its_radius() {
        assert!(matches!(
            chern_zero_mode(1.0, 3.0),
            Err(CorrespondenceError::InvalidInput(_))
        ));
    }

    #[test]
    fn islands_validate_and_enumerate() {
        assert!(SpectralIsland::new(2, 1).is_err());
        let island = SpectralIsland::new(-1, 1).unwrap();
        assert_eq!(island.count(), 3);
        assert_eq!(island.levels(), vec![-1, 0, 1]);
        let energies = island.energies(2.0).unwrap();
        assert!((energies[0] + 2.0).abs() < 1e-15);
        assert_eq!(energies[1], 0.0);
        assert!((energies[2] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn report_serializes_in_contract_order() {
        let report = CorrespondenceReport {
            b: 1.0,
            island: island_zero(),
            bulk_value: 0.159,
            edge_value: 0.159,
            streda_slope: 0.159,
            chern_estimate: 1.0,
            spectral_flow: 1,
            abs_err: 0.0,
            rel_err: 0.0,
            pass: true,
            tolerances: ReportTolerances { bulk_edge_rel: 1e-3, chern_abs: 1e-6 },
            branches: Vec::new(),
            traced_branches: Vec::new(),
        };
        let json = serde_json::to_string(&report).unwrap();
        let keys = [
            "\"b\"",
            "\"island\"",
            "\"bulk_value\"",
            "\"edge_value\"",
            "\"streda_slope\"",
            "\"chern_estimate\"",
            "\"spectral_flow\"",
            "\"abs_err\"",
            "\"rel_err\"",
            "\"pass\"",
        ];
        let mut last = 0;
        for key in keys {
            let pos = json.find(key).unwrap_or_else(|| panic!("missing {key} in {json}"));
            assert!(pos >= last, "{key} out of order in {json}");
            last = pos;
        }
        assert!(json.contains("\"island\":[0]"));
        assert!(!json.contains("tolerances"));
        assert!(!json.contains("branches"));
    }
}
