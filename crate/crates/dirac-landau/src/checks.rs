//! Runnable verification suites: one per module, each a list of named
//! pass/fail checks over that module's invariants. The CLI `verify`
//! subcommand prints them and turns the aggregate into an exit code; the
//! suites stay at desk scale so a full `verify --suite all` finishes in
//! seconds, leaving the long branch sweeps to `edge-trace`.

use std::f64::consts::PI;

use crate::correspondence::{
    bulk_trace, bulk_trace_derivative, chern_zero_mode, edge_current, ids, spectral_flow,
    streda_slope, zero_mode_projection_kernel, SpectralIsland,
};
use crate::edge_fiber::{
    hf_velocity, solve_fiber_grid, solve_fiber_secular, trace_branches, BranchSample,
    DispersionBranch, FiberProblem, GridSpec, XiRange,
};
use crate::funcalc::{make_gap_function, TestFunction};
use crate::kernels::{
    dirac_residual, dressed_T_kernel, edge_kernel_b0, landau_phase_phi2, HalfPlanePoint,
    KernelId, PlanePoint, SpectralParameter,
};
use crate::specfun::{macdonald_k0, parabolic_cylinder_u, weber_u_pair};

/// One named verification with its outcome and a short diagnostic line.
#[derive(Debug, Clone)]
pub struct Check {
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
}

fn run<E: std::fmt::Display>(
    name: &'static str,
    body: impl FnOnce() -> Result<(bool, String), E>,
) -> Check {
    match body() {
        Ok((pass, detail)) => Check { name, pass, detail },
        Err(e) => Check { name, pass: false, detail: format!("error: {e}") },
    }
}

/// Deterministic sample stream for the randomized checks; fixed seeds keep
/// `verify` output byte-identical across runs.
struct SplitMix64(u64);

impl SplitMix64 {
    fn new(seed: u64) -> Self {
        SplitMix64(seed)
    }

    fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9e37_79b9_7f4a_7c15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }

    fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        let unit = (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
        lo + (hi - lo) * unit
    }
}

/// Special-function invariants: the Weber function against its own ODE and
/// recurrence, the Gaussian closed form, and Macdonald monotonicity.
pub fn specfun_suite() -> Vec<Check> {
    let mut checks = Vec::new();

    checks.push(run("weber satisfies its differential equation", || {
        let mut rng = SplitMix64::new(11);
        let h = 1e-3;
        let mut worst = 0.0f64;
        for _ in 0..1000 {
            let a = rng.uniform(-6.0, 2.0);
            let z = rng.uniform(0.3, 8.0);
            let u = |z: f64| parabolic_cylinder_u(a, z).map(|r| r.value);
            let second = (-u(z - 2.0 * h)? + 16.0 * u(z - h)? - 30.0 * u(z)?
                + 16.0 * u(z + h)?
                - u(z + 2.0 * h)?)
                / (12.0 * h * h);
            let value = u(z)?;
            let residual = (second - (0.25 * z * z + a) * value).abs() / (1.0 + value.abs());
            worst = worst.max(residual);
        }
        Ok::<_, crate::specfun::SpecFunError>((worst <= 1e-8, format!("worst residual {worst:.3e}")))
    }));

    checks.push(run("weber recurrence ties neighboring orders", || {
        let mut rng = SplitMix64::new(12);
        let mut worst = 0.0f64;
        for _ in 0..200 {
            let a = rng.uniform(-6.0, 2.0);
            let z = rng.uniform(0.3, 8.0);
            let (u, du) = weber_u_pair(a, z)?;
            let shifted = parabolic_cylinder_u(a + 1.0, z)?;
            let lhs = du.value + 0.5 * z * u.value + (a + 0.5) * shifted.value;
            let scale = du.value.abs().max((0.5 * z * u.value).abs()).max(
                ((a + 0.5) * shifted.value).abs(),
            );
            worst = worst.max(lhs.abs() / scale.max(f64::MIN_POSITIVE));
        }
        Ok::<_, crate::specfun::SpecFunError>((worst <= 1e-8, format!("worst defect {worst:.3e}")))
    }));

    checks.push(run("weber gaussian closed form", || {
        let mut worst = 0.0f64;
        for i in 0..100 {
            let z = 8.0 * (i as f64 + 0.5) / 100.0;
            let got = parabolic_cylinder_u(-0.5, z)?.value;
            worst = worst.max((got - (-0.25 * z * z).exp()).abs());
        }
        Ok::<_, crate::specfun::SpecFunError>((worst <= 1e-12, format!("worst deviation {worst:.3e}")))
    }));

    checks.push(run("macdonald k0 strictly decreasing", || {
        let mut previous = f64::INFINITY;
        let mut monotone = true;
        for i in 0..200 {
            let t = 0.05 * (20.0f64 / 0.05).powf(i as f64 / 199.0);
            let value = macdonald_k0(t)?.value;
            monotone &= value < previous;
            previous = value;
        }
        Ok::<_, crate::specfun::SpecFunError>((monotone, "200 log-spaced points".into()))
    }));

    checks
}

/// Kernel invariants: the boundary condition rows, the magnetic phase
/// composition law, the quadratic convergence of the Dirac residual, and the
/// field linearity of the dressed T kernel.
pub fn kernels_suite() -> Vec<Check> {
    let mut checks = Vec::new();

    checks.push(run("edge kernel rows agree on the boundary", || {
        let mut rng = SplitMix64::new(21);
        let mut worst = 0.0f64;
        for _ in 0..50 {
            let x = HalfPlanePoint::new(rng.uniform(-3.0, 3.0), 0.0)?;
            let xp = HalfPlanePoint::new(rng.uniform(-3.0, 3.0), rng.uniform(0.3, 3.0))?;
            let s = SpectralParameter::new(if rng.next_u64() % 2 == 0 { 1.0 } else { 2.0 })?;
            let k = edge_kernel_b0(x, xp, s)?;
            let scale = k.frobenius_norm().max(f64::MIN_POSITIVE);
            for j in 0..2 {
                worst = worst.max((k.entries[0][j] - k.entries[1][j]).norm() / scale);
            }
        }
        Ok::<_, crate::kernels::KernelError>((worst <= 1e-12, format!("worst row defect {worst:.3e}")))
    }));

    checks.push(run("magnetic phase composes with the flux term", || {
        let mut rng = SplitMix64::new(22);
        let mut worst = 0.0f64;
        for _ in 0..100 {
            let mut p = || PlanePoint::new(rng.uniform(-4.0, 4.0), rng.uniform(-4.0, 4.0));
            let (x, y, z) = (p(), p(), p());
            let lhs = landau_phase_phi2(x, y) + landau_phase_phi2(y, z) - landau_phase_phi2(x, z);
            let flux = (y.x1 - x.x1) * (y.x2 - z.x2);
            worst = worst.max((lhs - flux).abs());
        }
        Ok::<_, crate::kernels::KernelError>((worst <= 1e-12, format!("worst defect {worst:.3e}")))
    }));

    checks.push(run("dirac residual shrinks quadratically", || {
        let s = SpectralParameter::new(1.5)?;
        let mut all_good = true;
        let mut report = String::new();
        for (kernel_id, x, xp) in [
            (KernelId::Free, PlanePoint::new(0.4, 1.1), PlanePoint::new(-0.7, 0.3)),
            (KernelId::Edge, PlanePoint::new(0.2, 1.4), PlanePoint::new(-0.5, 0.8)),
        ] {
            let coarse = dirac_residual(kernel_id, x, xp, s, 1e-3)?;
            let fine = dirac_residual(kernel_id, x, xp, s, 5e-4)?;
            let ratio = coarse / fine;
            all_good &= (3.0..=5.0).contains(&ratio);
            report.push_str(&format!("{kernel_id:?} ratio {ratio:.2} "));
        }
        Ok::<_, crate::kernels::KernelError>((all_good, report.trim_end().into()))
    }));

    checks.push(run("dressed T kernel is linear in the field", || {
        let x = HalfPlanePoint::new(0.3, 0.9)?;
        let xp = HalfPlanePoint::new(-0.6, 1.7)?;
        let s = SpectralParameter::new(2.0)?;
        let full = dressed_T_kernel(1.0, x, xp, s)?.frobenius_norm();
        let half = dressed_T_kernel(0.5, x, xp, s)?.frobenius_norm();
        let defect = (full / half - 2.0).abs();
        Ok::<_, crate::kernels::KernelError>((defect <= 1e-6, format!("ratio defect {defect:.3e}")))
    }));

    checks
}

/// Fiber invariants: backend agreement, eigenpair residuals, branch
/// monotonicity and spacing, and the Hellmann-Feynman velocity against a
/// finite-difference slope.
pub fn fiber_suite() -> Vec<Check> {
    let mut checks = Vec::new();

    checks.push(run("grid and secular backends agree", || {
        let mut worst = 0.0f64;
        let mut matched = 0usize;
        for xi in [-2.0, 0.0, 2.0] {
            let problem = FiberProblem::new(1.0, xi)?;
            let grid = GridSpec::automatic(&problem, problem.level_cap(8));
            let pairs = solve_fiber_grid(&problem, &grid, 8)?;
            let mut grid_values: Vec<f64> =
                pairs.iter().map(|p| p.lambda()).filter(|l| l.abs() > 1e-3).collect();
            grid_values.sort_by(|a, b| a.abs().partial_cmp(&b.abs()).unwrap());
            grid_values.truncate(4);
            let reach = grid_values.iter().map(|l| l.abs()).fold(0.0, f64::max) + 0.2;
            let roots = solve_fiber_secular(&problem, (-reach, reach))?;
            for g in &grid_values {
                let nearest = roots
                    .iter()
                    .map(|r| (r - g).abs())
                    .fold(f64::INFINITY, f64::min);
                worst = worst.max(nearest);
                matched += 1;
            }
        }
        Ok::<_, crate::edge_fiber::FiberError>((
            worst <= 1e-6 && matched == 12,
            format!("worst gap {worst:.3e} over {matched} levels"),
        ))
    }));

    checks.push(run("eigenpairs carry small residuals", || {
        let problem = FiberProblem::new(1.0, 0.0)?;
        let grid = GridSpec::automatic(&problem, 4.0);
        let pairs = solve_fiber_grid(&problem, &grid, 6)?;
        let bc = pairs.iter().map(|p| p.bc_residual()).fold(0.0, f64::max);
        let ode = pairs.iter().map(|p| p.ode_residual()).fold(0.0, f64::max);
        Ok::<_, crate::edge_fiber::FiberError>((
            bc <= 1e-8 && ode <= 1e-6,
            format!("bc {bc:.3e}, ode {ode:.3e}"),
        ))
    }));

    checks.push(run("zero branch rises once it leaves the bulk", || {
        let range = XiRange::new(-4.2, -2.6, 0.1)?;
        let branches = trace_branches(1.0, range, &[0])?;
        let samples = branches[0].samples();
        let mut monotone = true;
        for pair in samples.windows(2) {
            if pair[0].lambda > 1e-7 {
                monotone &= pair[1].lambda > pair[0].lambda;
            }
        }
        let rise = samples[samples.len() - 1].lambda - samples[0].lambda;
        let inside = samples.iter().all(|s| s.lambda < std::f64::consts::SQRT_2);
        Ok::<_, crate::edge_fiber::FiberError>((
            monotone && inside && rise > 1e-4,
            format!("rise {rise:.3e} over the window"),
        ))
    }));

    checks.push(run("deep branches keep their bulk spacings", || {
        let range = XiRange::new(-10.05, -9.55, 0.05)?;
        let branches = trace_branches(1.0, range, &[-1, 0, 1])?;
        let mut spacing = f64::INFINITY;
        let count = branches[0].samples().len();
        for i in 0..count {
            let mut at_xi: Vec<f64> =
                branches.iter().map(|br| br.samples()[i].lambda).collect();
            at_xi.sort_by(|a, b| a.partial_cmp(b).unwrap());
            for pair in at_xi.windows(2) {
                spacing = spacing.min(pair[1] - pair[0]);
            }
        }
        Ok::<_, crate::edge_fiber::FiberError>((
            spacing > 1.0,
            format!("min spacing {spacing:.3e}"),
        ))
    }));

    checks.push(run("velocity matches the dispersion slope", || {
        let h = 1e-3;
        let xi = -1.0;
        let level = |xi: f64| -> Result<f64, crate::edge_fiber::FiberError> {
            let problem = FiberProblem::new(1.0, xi)?;
            let grid = GridSpec::automatic(&problem, 4.0);
            let pairs = solve_fiber_grid(&problem, &grid, 4)?;
            Ok(pairs
                .iter()
                .map(|p| p.lambda())
                .filter(|l| *l > 1e-3)
                .fold(f64::INFINITY, f64::min))
        };
        let problem = FiberProblem::new(1.0, xi)?;
        let grid = GridSpec::automatic(&problem, 4.0);
        let pairs = solve_fiber_grid(&problem, &grid, 4)?;
        let pair = pairs
            .iter()
            .filter(|p| p.lambda() > 1e-3)
            .min_by(|a, b| a.lambda().partial_cmp(&b.lambda()).unwrap())
            .unwrap();
        let slope = (level(xi + h)? - level(xi - h)?) / (2.0 * h);
        let defect = (hf_velocity(pair) - slope).abs();
        Ok::<_, crate::edge_fiber::FiberError>((defect <= 1e-5, format!("defect {defect:.3e}")))
    }));

    checks
}

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

/// Correspondence invariants: the density identities, the Streda line, the
/// telescoping edge current on analytically known branches, spectral flow
/// counting, and the two zero-mode Chern routes against each other.
pub fn correspondence_suite() -> Vec<Check> {
    let mut checks = Vec::new();
    let island = SpectralIsland::new(0, 0).expect("island {0}");

    checks.push(run("density of states equals the gap trace", || {
        let f = make_gap_function(&island, 1.0, 0.3)?;
        let trace = bulk_trace(&f, 1.0, 5)?;
        let density = ids(&island, 1.0)?;
        let defect = (trace - density).abs();
        Ok::<_, crate::correspondence::CorrespondenceError>((
            defect <= 1e-12,
            format!("defect {defect:.3e}"),
        ))
    }));

    checks.push(run("field derivative matches finite differences", || {
        let f = TestFunction::gaussian();
        let h = 1e-5;
        let derivative = bulk_trace_derivative(&f, 1.0, 30)?;
        let stencil = (bulk_trace(&f, 1.0 + h, 30)? - bulk_trace(&f, 1.0 - h, 30)?) / (2.0 * h);
        let defect = (derivative - stencil).abs();
        Ok::<_, crate::correspondence::CorrespondenceError>((
            defect <= 1e-8,
            format!("defect {defect:.3e}"),
        ))
    }));

    checks.push(run("gap functions obey the level sum rule", || {
        let f = make_gap_function(&island, 1.0, 0.3)?;
        let derivative = bulk_trace_derivative(&f, 1.0, 5)?;
        let defect = (derivative - 1.0 / (2.0 * PI)).abs();
        Ok::<_, crate::correspondence::CorrespondenceError>((
            defect <= 1e-12,
            format!("defect {defect:.3e}"),
        ))
    }));

    checks.push(run("streda slopes are integers over two pi", || {
        let grid = [0.8, 0.9, 1.0, 1.1, 1.2];
        let mut worst = 0.0f64;
        let mut residual = 0.0f64;
        for n in 1..=3 {
            let island = SpectralIsland::new(0, n - 1)?;
            let fit = streda_slope(&island, &grid)?;
            worst = worst.max((fit.chern_estimate - n as f64).abs());
            residual = residual.max(fit.residual);
        }
        Ok::<_, crate::correspondence::CorrespondenceError>((
            worst <= 1e-9 && residual <= 1e-12,
            format!("worst integer defect {worst:.3e}, fit residual {residual:.3e}"),
        ))
    }));

    checks.push(run("edge current telescopes branch by branch", || {
        let f = make_gap_function(&island, 1.0, 0.3)?;
        let softplus = |xi: f64| if xi > 30.0 { xi } else { xi.exp().ln_1p() };
        let sigmoid = |xi: f64| 1.0 / (1.0 + (-xi).exp());
        let rising = synthetic_branch(0, 1.0, -10.0, 3.0, 0.005, softplus, sigmoid);
        let falling = synthetic_branch(
            -1,
            1.0,
            -10.0,
            3.0,
            0.005,
            |xi| -2f64.sqrt() - softplus(xi),
            |xi| -sigmoid(xi),
        );
        let current = edge_current(&f, 1.0, &[rising, falling])?;
        let defect = (current - 1.0 / (2.0 * PI)).abs();
        Ok::<_, crate::correspondence::CorrespondenceError>((
            defect <= 1e-6,
            format!("defect {defect:.3e}"),
        ))
    }));

    checks.push(run("spectral flow counts signed crossings", || {
        let softplus = |xi: f64| if xi > 30.0 { xi } else { xi.exp().ln_1p() };
        let sigmoid = |xi: f64| 1.0 / (1.0 + (-xi).exp());
        let rising = synthetic_branch(0, 1.0, -10.0, 3.0, 0.01, softplus, sigmoid);
        let falling =
            synthetic_branch(1, 1.0, -10.0, 3.0, 0.01, |xi| 1.3 - softplus(xi), |xi| -sigmoid(xi));
        let up = spectral_flow(1.0, std::slice::from_ref(&rising))?;
        let below = spectral_flow(-0.05, std::slice::from_ref(&rising))?;
        let net = spectral_flow(1.0, &[rising, falling])?;
        Ok::<_, crate::correspondence::CorrespondenceError>((
            up == 1 && below == 0 && net == 0,
            format!("up {up}, below {below}, net {net}"),
        ))
    }));

    checks.push(run("projection kernel passes its construction gates", || {
        let kernel = zero_mode_projection_kernel(1.0)?;
        let x = PlanePoint::new(0.2, -0.7);
        let diagonal = kernel.eval(x, x).entries[0][0].re;
        let defect = (diagonal - 1.0 / (2.0 * PI)).abs();
        Ok::<_, crate::correspondence::CorrespondenceError>((
            defect <= 1e-10,
            format!("diagonal defect {defect:.3e}"),
        ))
    }));

    checks.push(run("chern routes agree on the zero mode", || {
        let commutator = chern_zero_mode(1.0, 8.0)?;
        let fit = streda_slope(&island, &[0.8, 0.9, 1.0, 1.1, 1.2])?;
        let gap = (commutator - fit.chern_estimate).abs();
        Ok::<_, crate::correspondence::CorrespondenceError>((
            (commutator - 1.0).abs() <= 1e-3 && gap <= 2e-3,
            format!("commutator {commutator:.6}, streda {:.6}", fit.chern_estimate),
        ))
    }));

    checks
}
