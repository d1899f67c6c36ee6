//! Shared quadrature machinery: Gauss-Legendre rules of arbitrary order and an
//! adaptive 15-point Gauss-Kronrod integrator.

/// Abscissae of the 15-point Kronrod rule (positive half, descending),
/// QUADPACK values.
const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144838258730,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];

/// Weights of the 15-point Kronrod rule, matching `XGK`.
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];

/// Weights of the embedded 7-point Gauss rule (positive half).
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

/// One 15-point Kronrod pass over [a, b]. Returns (kronrod, |kronrod - gauss|).
pub fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for j in 0..7 {
        let fv = f(c - h * XGK[j]) + f(c + h * XGK[j]);
        kronrod += WGK[j] * fv;
        if j % 2 == 1 {
            gauss += WG[j / 2] * fv;
        }
    }
    (kronrod * h, (kronrod - gauss).abs() * h.abs())
}

/// Result of an adaptive integration.
#[derive(Debug, Clone, Copy)]
pub struct QuadResult {
    pub value: f64,
    pub abs_error: f64,
    pub converged: bool,
}

/// Adaptive Gauss-Kronrod integration of `f` over [a, b] to relative tolerance
/// `rel_tol` (with absolute floor `abs_floor`). Intervals are split worst-first;
/// the split order is a deterministic function of the integrand alone.
pub fn adaptive_gk<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    rel_tol: f64,
    abs_floor: f64,
    max_intervals: usize,
) -> QuadResult {
    struct Cell {
        a: f64,
        b: f64,
        value: f64,
        err: f64,
    }
    let (v, e) = gk15(f, a, b);
    let mut cells = vec![Cell { a, b, value: v, err: e }];
    loop {
        let total: f64 = cells.iter().map(|c| c.value).sum();
        let err: f64 = cells.iter().map(|c| c.err).sum();
        let target = (rel_tol * total.abs()).max(abs_floor);
        if err <= target {
            return QuadResult { value: total, abs_error: err, converged: true };
        }
        if cells.len() >= max_intervals {
            return QuadResult { value: total, abs_error: err, converged: false };
        }
        let worst = cells
            .iter()
            .enumerate()
            .max_by(|(_, x), (_, y)| x.err.total_cmp(&y.err))
            .map(|(i, _)| i)
            .expect("at least one cell");
        let Cell { a: ca, b: cb, .. } = cells[worst];
        let m = 0.5 * (ca + cb);
        let (v1, e1) = gk15(f, ca, m);
        let (v2, e2) = gk15(f, m, cb);
        cells[worst] = Cell { a: ca, b: m, value: v1, err: e1 };
        cells.push(Cell { a: m, b: cb, value: v2, err: e2 });
    }
}

/// Nodes and weights of the n-point Gauss-Legendre rule on [-1, 1], nodes
/// ascending. Computed by Newton iteration on the Legendre recurrence; the
/// result is deterministic and accurate to a few ulp.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "rule order must be positive");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Tricomi initial guess for the i-th root (descending order).
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() <= 1e-15 * x.abs().max(1.0) {
                let (p2, d2) = legendre_with_derivative(n, x);
                dp = d2;
                x -= p2 / d2;
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[n - 1 - i] = x;
        weights[n - 1 - i] = w;
        nodes[i] = -x;
        weights[i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Composite Simpson rule on uniformly spaced samples with step `h`.
/// Handles an even interval count directly; an odd count is finished with the
/// Simpson 3/8 rule on the last three intervals.
pub fn simpson_uniform(values: &[f64], h: f64) -> f64 {
    let n = values.len();
    assert!(n >= 3, "need at least three samples");
    let intervals = n - 1;
    let (simpson_end, mut total) = if intervals % 2 == 0 {
        (n - 1, 0.0)
    } else {
        let v = &values[n - 4..];
        (n - 4, 3.0 * h / 8.0 * (v[0] + 3.0 * v[1] + 3.0 * v[2] + v[3]))
    };
    let mut i = 0;
    while i + 2 <= simpson_end {
        total += h / 3.0 * (values[i] + 4.0 * values[i + 1] + values[i + 2]);
        i += 2;
    }
    total
}
