//! Scalar special functions: the Macdonald functions K0 and K0' = -K1 that
//! build the free resolvent kernel, and the recessive Weber parabolic cylinder
//! function U(a,z) behind the secular eigenvalue backend.
//!
//! All functions are pure; identical inputs give bit-identical outputs.

use thiserror::Error;

/// Euler-Mascheroni constant.
const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// A function value together with an absolute error estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalResult {
    pub value: f64,
    /// Estimated absolute error, same units as `value`; always >= 0.
    pub abs_error_estimate: f64,
}

#[derive(Debug, Error)]
pub enum SpecFunError {
    #[error("{function}: argument {argument} outside the domain ({requirement})")]
    Domain {
        function: &'static str,
        argument: f64,
        requirement: &'static str,
    },
    #[error("{function}: ({a}, {z}) outside the supported range ({requirement})")]
    Range {
        function: &'static str,
        a: f64,
        z: f64,
        requirement: &'static str,
    },
    #[error("{function}: catastrophic cancellation, result unreliable beyond {estimate:e}")]
    Cancellation {
        function: &'static str,
        estimate: f64,
    },
}

/// Chebyshev coefficients for K0(t) e^t sqrt(t) on t >= 2, in the variable
/// v = 4/t - 1. Generated from a 40-digit fit; truncated below 1e-20.
const K0_CHEB: [f64; 30] = [
    2.44030308206595545468,
    -0.0314481013119645005427,
    0.00156988388573005337491,
    -0.000128495495816278026384,
    0.0000139498137188764993641,
    -0.00000183175552271911948478,
    2.76681363944501507614e-7,
    -4.66048989768794766556e-8,
    8.57403401741422608582e-9,
    -1.69753450938906151564e-9,
    3.57739728140032844716e-10,
    -7.95748924447739703773e-11,
    1.85594911495492655497e-11,
    -4.51459788337451917507e-12,
    1.14034058820734423473e-12,
    -2.98009692314817835483e-13,
    8.03289077506837436945e-14,
    -2.22751332674629636045e-14,
    6.34007647627664596613e-15,
    -1.84859337792090716941e-15,
    5.51205599940433336489e-16,
    -1.67823112575490063832e-16,
    5.21039177764355411254e-17,
    -1.64758059398426328153e-17,
    5.30043377117733577104e-18,
    -1.73317120058210002782e-18,
    5.75510920288272937937e-19,
    -1.93909560531835546605e-19,
    6.62461053453614703405e-20,
    -2.29321971705601177317e-20,
];

/// Same fit for K1(t) e^t sqrt(t).
const K1_CHEB: [f64; 30] = [
    2.72062619048444266945,
    0.103923736576817238437,
    -0.0028578168596227793868,
    0.000195215518471351631108,
    -0.0000193619797416608296002,
    0.00000240648494783721711706,
    -3.5019606030878125421e-7,
    5.74108412545004929231e-8,
    -1.03457624656780970267e-8,
    2.01504975519703461615e-9,
    -4.19035475934192558424e-10,
    9.21831518760531412583e-11,
    -2.12996783842779102155e-11,
    5.1396396734823435404e-12,
    -1.2891739609498229352e-12,
    3.3484196660522431201e-13,
    -8.97670518201014606915e-14,
    2.47715442421959868133e-14,
    -7.01983708921476885131e-15,
    2.03870316623986087993e-15,
    -6.05704727064301782278e-16,
    1.83809357524304542556e-16,
    -5.68946284919364837425e-17,
    1.79405104788635729143e-17,
    -5.75674448207330245029e-18,
    1.87786519016232674011e-18,
    -6.22164528735260918518e-19,
    2.09191252698311365524e-19,
    -7.13271290834110206708e-20,
    2.46457514173547294607e-20,
];

fn clenshaw(coeffs: &[f64], v: f64) -> f64 {
    let mut b1 = 0.0;
    let mut b2 = 0.0;
    for &c in coeffs[1..].iter().rev() {
        let t = 2.0 * v * b1 - b2 + c;
        b2 = b1;
        b1 = t;
    }
    v * b1 - b2 + 0.5 * coeffs[0]
}

/// K0(t) and K1(t) by the small-argument power series, valid for t < 2.
/// The series have strictly positive terms apart from the explicit logarithm,
/// so there is no cancellation.
fn k0_k1_series(t: f64) -> (f64, f64) {
    let x = 0.25 * t * t;
    let log_half_t = (0.5 * t).ln();

    // K0 = -(ln(t/2)+gamma) I0 + sum_{k>=1} H_k x^k/(k!)^2
    let mut i0 = 1.0;
    let mut term = 1.0;
    let mut hsum = 0.0;
    let mut hk = 0.0;
    for k in 1..64 {
        let kf = k as f64;
        term *= x / (kf * kf);
        hk += 1.0 / kf;
        i0 += term;
        hsum += term * hk;
        if term < 1e-19 * i0 {
            break;
        }
    }
    let k0 = -(log_half_t + EULER_GAMMA) * i0 + hsum;

    // K1 = 1/t + ln(t/2) I1 - (t/4) sum_{k>=0} (H_k + H_{k+1} - 2 gamma) x^k/(k!(k+1)!)
    let mut i1_sum = 1.0;
    let mut term = 1.0;
    let mut s = 1.0 - 2.0 * EULER_GAMMA;
    let mut hk = 0.0;
    let mut hk1 = 1.0;
    for k in 1..64 {
        let kf = k as f64;
        term *= x / (kf * (kf + 1.0));
        i1_sum += term;
        hk += 1.0 / kf;
        hk1 += 1.0 / (kf + 1.0);
        s += term * (hk + hk1 - 2.0 * EULER_GAMMA);
        if term < 1e-19 {
            break;
        }
    }
    let i1 = 0.5 * t * i1_sum;
    let k1 = 1.0 / t + log_half_t * i1 - 0.25 * t * s;
    (k0, k1)
}

fn macdonald(t: f64, function: &'static str) -> Result<(f64, f64), SpecFunError> {
    if !(t > 0.0) {
        return Err(SpecFunError::Domain {
            function,
            argument: t,
            requirement: "t > 0",
        });
    }
    if t < 2.0 {
        let (k0, k1) = k0_k1_series(t);
        Ok((k0, k1))
    } else {
        let damp = (-t).exp() / t.sqrt();
        if damp == 0.0 {
            // e^{-t} underflows: the true value is below the smallest positive
            // double, so 0 with the underflow threshold as the error bar.
            return Ok((0.0, 0.0));
        }
        let v = 4.0 / t - 1.0;
        Ok((clenshaw(&K0_CHEB, v) * damp, clenshaw(&K1_CHEB, v) * damp))
    }
}

/// The Macdonald function K0(t), t > 0.
pub fn macdonald_k0(t: f64) -> Result<EvalResult, SpecFunError> {
    let (k0, _) = macdonald(t, "macdonald_k0")?;
    let est = if k0 == 0.0 {
        f64::MIN_POSITIVE
    } else {
        8.0 * f64::EPSILON * k0.abs()
    };
    Ok(EvalResult { value: k0, abs_error_estimate: est })
}

/// The derivative K0'(t) = -K1(t), t > 0; negative for all t.
pub fn macdonald_k0_prime(t: f64) -> Result<EvalResult, SpecFunError> {
    let (_, k1) = macdonald(t, "macdonald_k0_prime")?;
    let est = if k1 == 0.0 {
        f64::MIN_POSITIVE
    } else {
        8.0 * f64::EPSILON * k1.abs()
    };
    Ok(EvalResult { value: -k1, abs_error_estimate: est })
}

/// Working range accepted by [`parabolic_cylinder_u`].
pub const WEBER_RANGE: f64 = 200.0;

/// The recessive Weber function U(a,z) solving y'' = (z^2/4 + a) y, normalized
/// by U(a,z) ~ e^{-z^2/4} z^{-a-1/2} as z -> +infinity.
pub fn parabolic_cylinder_u(a: f64, z: f64) -> Result<EvalResult, SpecFunError> {
    weber_u_pair(a, z).map(|(u, _)| u)
}

/// U(a,z) together with its z-derivative, sharing one inward integration.
pub fn weber_u_pair(a: f64, z: f64) -> Result<(EvalResult, EvalResult), SpecFunError> {
    if !(a.abs() <= WEBER_RANGE && z.abs() <= WEBER_RANGE) {
        return Err(SpecFunError::Range {
            function: "parabolic_cylinder_u",
            a,
            z,
            requirement: "|a| <= 200 and |z| <= 200",
        });
    }
    let integ = WeberIntegration::run(a, z)?;
    let rel = integ.rel_error_estimate;
    let u = EvalResult {
        value: integ.u,
        abs_error_estimate: rel * integ.u.abs() + f64::MIN_POSITIVE,
    };
    let du = EvalResult {
        value: integ.du,
        abs_error_estimate: rel * integ.du.abs() + f64::MIN_POSITIVE,
    };
    Ok((u, du))
}

struct WeberIntegration {
    u: f64,
    du: f64,
    rel_error_estimate: f64,
}

impl WeberIntegration {
    fn run(a: f64, z_target: f64) -> Result<Self, SpecFunError> {
        Self::run_chain(a, &[z_target]).map(|mut states| states.remove(0))
    }

    /// One inward integration read off at several targets, which must be
    /// sorted in decreasing order. Sharing the trajectory keeps values at
    /// nearby targets correlated to a few ulp, which finite-difference
    /// consumers of U rely on.
    fn run_chain(a: f64, targets: &[f64]) -> Result<Vec<Self>, SpecFunError> {
        debug_assert!(!targets.is_empty());
        debug_assert!(targets.windows(2).all(|w| w[0] >= w[1]));
        // The asymptotic series is the only admissible seed; push the seed
        // point outward until its smallest term is negligible. Large positive
        // a needs z_start ~ 2a before the series becomes usable.
        let mut z_start = 30f64.max(2.0 * a.abs().sqrt() + 10.0).max(targets[0]);
        let mut seed = seed_series(a, z_start);
        let mut guard = 0;
        while seed.min_term_rel > 1e-13 && guard < 12 {
            z_start *= 1.4;
            seed = seed_series(a, z_start);
            guard += 1;
        }
        if seed.min_term_rel > 1e-11 {
            return Err(SpecFunError::Cancellation {
                function: "parabolic_cylinder_u",
                estimate: seed.min_term_rel,
            });
        }

        // Log-scale representation: value = y * 2^exp2. The seed prefactor
        // e^{-z^2/4} z^{-a-1/2} is far outside f64 range for large z_start.
        let log2_pref = (-0.25 * z_start * z_start - (a + 0.5) * z_start.ln()) / std::f64::consts::LN_2;
        let mut exp2 = log2_pref.floor();
        let mantissa = (log2_pref - exp2).exp2();
        let mut y = mantissa * seed.u_series;
        let mut dy = mantissa * seed.du_series;

        // Taylor-series stepping of the linear ODE, integrating inward. The
        // inward direction follows the dominant solution branch, so the
        // integration is numerically stable.
        let mut z = z_start;
        let mut steps = 0usize;
        let mut out = Vec::with_capacity(targets.len());
        for &target in targets {
            while z - target > 1e-14 {
                let kappa = (0.25 * z * z + a).abs().sqrt() + 1.0;
                let h = (1.5 / kappa).min(z - target);
                let (y2, dy2) = taylor_step(a, z, y, dy, -h);
                z -= h;
                y = y2;
                dy = dy2;
                steps += 1;
                let m = y.abs().max(dy.abs());
                if m > 1e150 {
                    y = y * (-500f64).exp2();
                    dy = dy * (-500f64).exp2();
                    exp2 += 500.0;
                } else if m < 1e-150 && m > 0.0 {
                    y = y * 500f64.exp2();
                    dy = dy * 500f64.exp2();
                    exp2 -= 500.0;
                }
                if steps > 200_000 {
                    return Err(SpecFunError::Range {
                        function: "parabolic_cylinder_u",
                        a,
                        z: target,
                        requirement: "integration step budget",
                    });
                }
            }
            // Land on the target exactly; the loop exit leaves z within a few
            // ulp and the finite-difference consumers need the values pinned
            // to the requested abscissas.
            if z != target {
                let (y2, dy2) = taylor_step(a, z, y, dy, target - z);
                y = y2;
                dy = dy2;
                z = target;
            }
            let scale = |v: f64| -> Option<f64> {
                let r = scale_by_exp2(v, exp2 as i32);
                if r.is_finite() { Some(r) } else { None }
            };
            match (scale(y), scale(dy)) {
                (Some(u), Some(du)) if u.is_finite() && du.is_finite() => out.push(Self {
                    u,
                    du,
                    rel_error_estimate: seed.min_term_rel + 4.0 * f64::EPSILON * steps as f64 + 1e-14,
                }),
                _ => {
                    return Err(SpecFunError::Range {
                        function: "parabolic_cylinder_u",
                        a,
                        z: target,
                        requirement: "result representable in f64",
                    })
                }
            }
        }
        Ok(out)
    }
}

fn scale_by_exp2(x: f64, e: i32) -> f64 {
    // Two-stage scaling avoids intermediate overflow for |e| > 1023.
    if e > 1023 {
        let first = x * f64::powi(2.0, 1023);
        first * f64::powi(2.0, e - 1023)
    } else if e < -1074 {
        0.0
    } else if e < -511 {
        let first = x * f64::powi(2.0, -511);
        first * f64::powi(2.0, e + 511)
    } else {
        x * f64::powi(2.0, e)
    }
}

struct SeedSeries {
    /// Series part of U (prefactor removed).
    u_series: f64,
    /// Series value of U'(a, z) / prefactor, from the exact derivative
    /// relation U' = -(z/2) U - (a+1/2) U(a+1, z) and z^{-1}-shift of the
    /// second series' prefactor.
    du_series: f64,
    min_term_rel: f64,
}

/// Divergent asymptotic series sum_s (-1)^s (a+1/2)_{2s} / (s! (2z^2)^s),
/// truncated at its smallest term.
fn asymp_sum(a: f64, z: f64) -> (f64, f64) {
    let mut term = 1.0f64;
    let mut total = 1.0f64;
    let mut min_term = 1.0f64;
    for s in 1..60 {
        let sf = s as f64;
        let num = (a + 0.5 + 2.0 * sf - 2.0) * (a + 0.5 + 2.0 * sf - 1.0);
        term *= -num / (sf * 2.0 * z * z);
        if term.abs() >= min_term {
            break;
        }
        min_term = term.abs();
        total += term;
        if term.abs() < 1e-18 * total.abs() {
            break;
        }
    }
    (total, min_term / total.abs().max(f64::MIN_POSITIVE))
}

fn seed_series(a: f64, z: f64) -> SeedSeries {
    let (u_sum, rel_u) = asymp_sum(a, z);
    let (u1_sum, rel_u1) = asymp_sum(a + 1.0, z);
    // U(a+1, z) carries prefactor z^{-a-3/2} = z^{-a-1/2} / z, so relative to
    // U(a, z)'s prefactor the second series contributes u1_sum / z.
    let du = -0.5 * z * u_sum - (a + 0.5) * u1_sum / z;
    SeedSeries {
        u_series: u_sum,
        du_series: du,
        min_term_rel: rel_u.max(rel_u1),
    }
}

/// One Taylor step of y'' = (z^2/4 + a) y from z_c to z_c + h.
/// With q(z_c + d) = q0 + q1 d + q2 d^2 the Taylor coefficients obey
/// (n+1)(n+2) c_{n+2} = q0 c_n + q1 c_{n-1} + q2 c_{n-2}.
fn taylor_step(a: f64, zc: f64, y: f64, dy: f64, h: f64) -> (f64, f64) {
    const ORDER: usize = 30;
    let q0 = 0.25 * zc * zc + a;
    let q1 = 0.5 * zc;
    let q2 = 0.25;
    let mut c = [0.0f64; ORDER + 2];
    c[0] = y;
    c[1] = dy;
    for n in 0..ORDER {
        let mut rhs = q0 * c[n];
        if n >= 1 {
            rhs += q1 * c[n - 1];
        }
        if n >= 2 {
            rhs += q2 * c[n - 2];
        }
        c[n + 2] = rhs / ((n as f64 + 1.0) * (n as f64 + 2.0));
    }
    let mut yv = 0.0;
    let mut dv = 0.0;
    for n in (1..c.len()).rev() {
        yv = yv * h + c[n];
        dv = dv * h + n as f64 * c[n];
    }
    yv = yv * h + c[0];
    (yv, dv)
}
