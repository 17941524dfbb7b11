//! Acceptance suite: twelve quantitative checks, one status line each.
//!
//! Runs as a plain binary (`harness = false`) so the report is always shown:
//!
//! ```text
//! cargo test --release -p lela-core --test acceptance            # all twelve
//! cargo test --release -p lela-core --test acceptance -- 6 11    # a subset
//! ```
//!
//! A criterion passes only if every sub-check meets its tolerance *and* the
//! criterion finishes within its wall-clock budget. The process exits with
//! status 1 if any selected criterion fails.

#![allow(clippy::needless_range_loop)]

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use lela_core::config::{Epsilon, GridConfig, InitialConfig, OutputConfig, SimulationConfig};
use lela_core::diagnostics::{
    constraint_residuals, correction_integrand, physical_energy, taylor_sign_min, CorrectionIntegral, TaylorMonitor,
};
use lela_core::driver::{epsilon_sweep, prepare_initial, run, CauchyRow};
use lela_core::elliptic::{laplacian, remove_mean, solve_dirichlet, solve_neumann, EllipticProblem};
use lela_core::evolve::{cfl_dt, evolve_to, picard_solve, rhs, step_rk4, Model, TimeStep};
use lela_core::geometry::{cofactor_from_gradient, cofactor_jacobian, flow_gradient, piola_residual, tangential_laplacian};
use lela_core::grid::{Grid, Mode};
use lela_core::hyperbolic::{linear_rk4_step, HyperbolicCoefficients, Mat13, StateVector13, NCOMP};
use lela_core::initdata::{construct_initial_data, IncompressibleData, IterationSettings};
use lela_core::seeds::Seed;
use lela_core::smoothing::{bump, psi_bracket, GeometryCache, MollifierKernel};
use lela_core::{EquationOfState, FlowMap, FlowState, ReferenceDeformation, ScalarField, Tensor2Field, VectorField};
use nalgebra::Matrix3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<(bool, String), Box<dyn std::error::Error>>;

struct Criterion {
    id: usize,
    title: &'static str,
    budget: Duration,
    run: fn() -> Outcome,
}

fn secs(s: u64) -> Duration {
    Duration::from_secs(s)
}

fn main() {
    let criteria = [
        Criterion { id: 1, title: "geometry exactness", budget: secs(5), run: geometry_exactness },
        Criterion { id: 2, title: "Piola identity", budget: secs(30), run: piola_identity },
        Criterion { id: 3, title: "mollifier", budget: secs(30), run: mollifier_suite },
        Criterion { id: 4, title: "psi correction", budget: secs(10), run: psi_correctness },
        Criterion { id: 5, title: "elliptic solvers", budget: secs(30), run: elliptic_solvers },
        Criterion { id: 6, title: "compatible initial data", budget: secs(120), run: initial_data },
        Criterion { id: 7, title: "hyperbolic core", budget: secs(60), run: hyperbolic_core },
        Criterion { id: 8, title: "energy conservation", budget: secs(120), run: conservation },
        Criterion { id: 9, title: "constraint propagation", budget: secs(120), run: constraint_propagation },
        Criterion { id: 10, title: "Picard mode", budget: secs(60), run: picard_mode },
        Criterion { id: 11, title: "incompressible limit", budget: secs(300), run: incompressible_limit },
        Criterion { id: 12, title: "Taylor-sign monitor", budget: secs(10), run: taylor_monitor },
    ];
    // `cargo test` forwards its own flags (e.g. `--nocapture`); keep only numbers.
    let selected: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failures = 0;
    let mut ran = 0;
    for c in criteria.iter().filter(|c| selected.is_empty() || selected.contains(&c.id)) {
        ran += 1;
        let start = Instant::now();
        let result = (c.run)();
        let elapsed = start.elapsed();
        let (ok, detail) = match result {
            Ok((ok, detail)) => (ok, detail),
            Err(e) => (false, format!("error: {e}")),
        };
        let in_time = elapsed <= c.budget;
        let pass = ok && in_time;
        if !pass {
            failures += 1;
        }
        println!(
            "[{}] {:>2} {:<24} {:.1}s/{}s{} | {}",
            if pass { "PASS" } else { "FAIL" },
            c.id,
            c.title,
            elapsed.as_secs_f64(),
            c.budget.as_secs(),
            if in_time { "" } else { " (over budget)" },
            detail
        );
    }
    println!("acceptance: {} of {ran} criteria passed", ran - failures);
    if failures > 0 {
        std::process::exit(1);
    }
}

// ---------------------------------------------------------------------------
// Helpers

/// Least-squares slope of `log y` against `log x`.
fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let num: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let den: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    num / den
}

/// Consecutive-pair slopes of `log y` against `log x`.
fn pair_slopes(x: &[f64], y: &[f64]) -> Vec<f64> {
    (1..x.len()).map(|k| (y[k] / y[k - 1]).ln() / (x[k] / x[k - 1]).ln()).collect()
}

fn within(x: f64, target: f64, band: f64) -> bool {
    (x - target).abs() <= band
}

fn fmt_list(xs: &[f64]) -> String {
    xs.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>().join(", ")
}

/// Random smooth near-identity map with low tangential and y3 content.
fn random_smooth_map(g: &Grid, rng: &mut ChaCha8Rng, amp: f64) -> FlowMap {
    let c: [[f64; 4]; 3] = std::array::from_fn(|_| std::array::from_fn(|_| rng.gen_range(-amp..amp)));
    let k: [f64; 3] = std::array::from_fn(|_| rng.gen_range(0.3..1.2));
    let slab = g.is_slab();
    FlowMap::from_displacement(VectorField::from_fn(g, move |a, b, y| {
        // y3 profiles: smooth but not polynomial between the plates, periodic on the torus.
        let p = |s: f64| if slab { (k[0] * y + s).sin() } else { (y + s).sin() };
        std::array::from_fn(|i| {
            c[i][0] * (a + b).sin() * p(0.3)
                + c[i][1] * (2.0 * a).cos() * p(1.1)
                + c[i][2] * b.sin() * if slab { (k[1] * y).cosh() } else { (2.0 * y).cos() }
                + c[i][3] * (a - 2.0 * b).cos() * if slab { (k[2] * y).exp() } else { y.sin() }
        })
    }))
}

fn random_velocity(g: &Grid, rng: &mut ChaCha8Rng) -> VectorField {
    let c: [[f64; 3]; 3] = std::array::from_fn(|_| std::array::from_fn(|_| rng.gen_range(-1.0..1.0)));
    VectorField::from_fn(g, move |a, b, y| {
        std::array::from_fn(|i| c[i][0] * (a + 2.0 * b).sin() + c[i][1] * a.cos() * (1.0 + y * y) + c[i][2] * (3.0 * b).cos() * y)
    })
}

// ---------------------------------------------------------------------------
// 1. Geometry exactness

fn geometry_exactness() -> Outcome {
    let g = Grid::new(32, 32, 17, Mode::Slab)?;
    let id = cofactor_jacobian(&FlowMap::identity(&g), 1e-6)?;
    let mut id_err = id.jac.map(|x| x - 1.0).max_abs();
    for l in 0..3 {
        for i in 0..3 {
            let d = if l == i { 1.0 } else { 0.0 };
            id_err = id_err.max(id.a.0[l][i].map(|x| x - d).max_abs());
        }
    }

    // Diagonal stretch diag(2, 1/2, 4): J = 4, a = diag(1/2, 2, 1/4), A = J a.
    let diag = [2.0, 0.5, 4.0];
    let mut grad = Tensor2Field::identity(&g);
    for (i, d) in diag.iter().enumerate() {
        grad.0[i][i] = ScalarField::constant(&g, *d);
    }
    let s = cofactor_from_gradient(&grad, 1e-6)?;
    let mut stretch_err = s.jac.map(|x| x - 4.0).max_abs();
    for i in 0..3 {
        stretch_err = stretch_err.max(s.a.0[i][i].map(|x| x - 1.0 / diag[i]).max_abs());
        stretch_err = stretch_err.max(s.big_a.0[i][i].map(|x| x - 4.0 / diag[i]).max_abs());
    }
    // The normal stretch is a genuine map: η = (y1, y2, 4 y3).
    let normal = cofactor_jacobian(&FlowMap::from_fn(&g, |a, b, y| [a, b, 4.0 * y]), 1e-6)?;
    stretch_err = stretch_err.max(normal.jac.map(|x| x - 4.0).max_abs()).max(normal.a.0[2][2].map(|x| x - 0.25).max_abs());

    // Per-node inverse against an LU inverse and determinant.
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut oracle: f64 = 0.0;
    for _ in 0..100 {
        let eta = random_smooth_map(&g, &mut rng, 0.08);
        let c = cofactor_jacobian(&eta, 1e-6)?;
        let grad = flow_gradient(&eta);
        for idx in 0..g.len() {
            let m = Matrix3::from_fn(|i, l| grad.0[i][l][idx]);
            let inv = m.try_inverse().ok_or("singular flow gradient")?;
            for l in 0..3 {
                for i in 0..3 {
                    oracle = oracle.max((c.a.0[l][i][idx] - inv[(l, i)]).abs());
                }
            }
            oracle = oracle.max((c.jac[idx] - m.determinant()).abs() / m.determinant().abs());
        }
    }
    let ok = id_err <= 1e-14 && stretch_err <= 1e-14 && oracle <= 1e-12;
    Ok((ok, format!("identity {id_err:.1e}, stretch {stretch_err:.1e}, inverse oracle over 100 maps {oracle:.1e}")))
}

// ---------------------------------------------------------------------------
// 2. Piola identity

fn piola_identity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let torus = Grid::new(32, 32, 32, Mode::Torus)?;
    let mut torus_res: f64 = 0.0;
    for _ in 0..5 {
        let eta = random_smooth_map(&torus, &mut rng, 0.05);
        torus_res = torus_res.max(piola_residual(&cofactor_jacobian(&eta, 1e-6)?.big_a));
    }

    // Fixed map, refined in y3 only (tangential derivatives are spectral).
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let probe = Grid::new(16, 16, 17, Mode::Slab)?;
    let _ = random_smooth_map(&probe, &mut rng, 0.1);
    let coeffs: [[f64; 3]; 3] = std::array::from_fn(|_| std::array::from_fn(|_| rng.gen_range(-0.1..0.1)));
    let mut res = Vec::new();
    let mut dy = Vec::new();
    for n3 in [17, 33, 65] {
        let g = Grid::new(16, 16, n3, Mode::Slab)?;
        let eta = FlowMap::from_displacement(VectorField::from_fn(&g, |a, b, y| {
            std::array::from_fn(|i| {
                coeffs[i][0] * (a + b).sin() * (1.3 * y).sin() + coeffs[i][1] * b.cos() * (0.9 * y).exp() + coeffs[i][2] * (2.0 * a).sin() * (2.0 * y).cos()
            })
        }));
        res.push(piola_residual(&cofactor_jacobian(&eta, 1e-6)?.big_a));
        dy.push(g.dy3());
    }
    let slopes = pair_slopes(&dy, &res);
    let ok = torus_res <= 1e-10 && slopes.iter().all(|&s| s >= 3.8);
    Ok((
        ok,
        format!("torus residual {torus_res:.1e}; slab residuals {} → slopes [{}]", res.iter().map(|r| format!("{r:.2e}")).collect::<Vec<_>>().join(", "), fmt_list(&slopes)),
    ))
}

// ---------------------------------------------------------------------------
// 3. Mollifier

/// Continuous normalised transform of the bump of radius `kappa` at wave
/// vector `(k1, k2)`, by composite Gauss–Legendre over the disc.
fn bump_transform(kappa: f64, k1: f64, k2: f64) -> f64 {
    use lela_core::eos::gauss_legendre;
    let inner = |x1: f64, f: &dyn Fn(f64, f64) -> f64| {
        let s = (kappa * kappa - x1 * x1).max(0.0).sqrt();
        gauss_legendre(|x2| f(x1, x2), -s, s, 24)
    };
    let w = |x1: f64, x2: f64| bump((x1 * x1 + x2 * x2) / (kappa * kappa));
    let num = gauss_legendre(|x1| inner(x1, &|a, b| w(a, b) * (k1 * a + k2 * b).cos()), -kappa, kappa, 24);
    let den = gauss_legendre(|x1| inner(x1, &w), -kappa, kappa, 24);
    num / den
}

fn mollifier_suite() -> Outcome {
    let g = Grid::new(64, 64, 9, Mode::Slab)?;
    let k = MollifierKernel::new(&g, 0.4)?;
    let c = ScalarField::constant(&g, 1.75);
    let constant = k.mollify(&c).sub(&c).max_abs();

    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst_ratio: f64 = 0.0;
    for _ in 0..50 {
        let f = ScalarField::from_vec(&g, (0..g.len()).map(|_| rng.gen_range(-1.0..1.0)).collect());
        worst_ratio = worst_ratio.max(k.mollify(&f).l2() / f.l2());
    }

    let fine = Grid::new(256, 256, 9, Mode::Slab)?;
    let f = ScalarField::from_fn(&fine, |a, b, y| (a + 2.0 * b).sin() + (3.0 * a).cos() * (1.0 + y) + (5.0 * b).sin());
    let mut sup = Vec::new();
    for kappa in [0.5, 0.25, 0.125, 0.0625] {
        sup.push(MollifierKernel::new(&fine, kappa)?.mollify(&f).sub(&f).max_abs());
    }
    let monotone = sup.windows(2).all(|w| w[1] < w[0]);

    // Multiplier of the sampled kernel against the continuous transform.
    let big = Grid::new(512, 512, 9, Mode::Slab)?;
    let kappa = 0.5;
    let kb = MollifierKernel::new(&big, kappa)?;
    let mut mult_err: f64 = 0.0;
    for (m1, m2) in [(1usize, 0usize), (0, 3), (2, 5), (7, 7), (12, 3), (20, 0)] {
        mult_err = mult_err.max((kb.symbol(&big, m1, m2) - bump_transform(kappa, m1 as f64, m2 as f64)).abs());
    }
    let ok = constant <= 1e-15 * 1.75 * 4.0 && worst_ratio <= 1.0 + 1e-14 && monotone && mult_err <= 1e-8;
    Ok((
        ok,
        format!(
            "constant {constant:.1e}, max ‖Λf‖/‖f‖ {worst_ratio:.6}, sup errors [{}], multiplier vs quadrature {mult_err:.1e}",
            sup.iter().map(|x| format!("{x:.2e}")).collect::<Vec<_>>().join(", ")
        ),
    ))
}

// ---------------------------------------------------------------------------
// 4. ψ correction

fn psi_correctness() -> Outcome {
    let g = Grid::new(16, 16, 17, Mode::Slab)?;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let v = random_velocity(&g, &mut rng);
    // κ must span a few cells (Δy = 2π/16) or the sampled kernel is the identity.
    let kernel = MollifierKernel::new(&g, 1.0)?;
    let at_identity = GeometryCache::new(&FlowMap::identity(&g), &v, &kernel, 1e-6)?.psi.max_abs();
    let eta = random_smooth_map(&g, &mut rng, 0.05);
    let unsmoothed = GeometryCache::new(&eta, &v, &MollifierKernel::new(&g, 0.0)?, 1e-6)?.psi.max_abs();

    let geo = GeometryCache::new(&eta, &v, &kernel, 1e-6)?;
    let scale = geo.psi.max_abs();
    let mut harmonic: f64 = 0.0;
    let mut roundtrip: f64 = 0.0;
    let bracket = psi_bracket(&eta, geo.a_tilde(), &v, &kernel);
    for i in 0..3 {
        harmonic = harmonic.max(laplacian(&geo.psi[i]).max_abs_interior());
        let lap = tangential_laplacian(&geo.psi[i]).boundary();
        for (got, want) in [(&lap.bottom, &bracket[i].bottom), (&lap.top, &bracket[i].top)] {
            roundtrip = roundtrip.max(got.sub(&remove_mean(want)).max_abs());
        }
    }
    let ok = at_identity == 0.0 && unsmoothed == 0.0 && scale > 1e-6 && harmonic <= 1e-10 && roundtrip <= 1e-8;
    Ok((
        ok,
        format!("η = Id {at_identity:.0e}, κ = 0 {unsmoothed:.0e}; generic ‖ψ‖ {scale:.2e}: harmonic residual {harmonic:.1e}, plate round trip {roundtrip:.1e}"),
    ))
}

// ---------------------------------------------------------------------------
// 5. Elliptic solvers

fn elliptic_solvers() -> Outcome {
    let mut d_err = Vec::new();
    let mut n_err = Vec::new();
    let mut dy = Vec::new();
    // The one-sided Neumann closure is pre-asymptotic below n3 ≈ 65.
    for n3 in [65, 129, 257] {
        let g = Grid::new(8, 8, n3, Mode::Slab)?;
        dy.push(g.dy3());
        // Dirichlet: u = cos y1 sin 2y2 cosh y3 + e^{y3}, nonzero plate data.
        let u = ScalarField::from_fn(&g, |a, b, y| a.cos() * (2.0 * b).sin() * y.cosh() + y.exp());
        let rhs = ScalarField::from_fn(&g, |a, b, y| 4.0 * a.cos() * (2.0 * b).sin() * y.cosh() - y.exp());
        let sol = solve_dirichlet(&EllipticProblem::dirichlet(rhs, u.boundary()))?;
        d_err.push(sol.sub(&u).max_abs());
        // Neumann: u = cos y1 sin(π y3 / 2), ∂u/∂N = 0 on both plates.
        let k = PI / 2.0;
        let u = ScalarField::from_fn(&g, |a, _, y| a.cos() * (k * y).sin());
        let rhs = u.scale(1.0 + k * k);
        let sol = solve_neumann(&EllipticProblem::neumann(rhs))?;
        n_err.push(sol.u.sub(&u).max_abs());
    }
    let ds = pair_slopes(&dy, &d_err);
    let ns = pair_slopes(&dy, &n_err);
    let g = Grid::new(16, 16, 33, Mode::Slab)?;
    let para = solve_dirichlet(&EllipticProblem::dirichlet_homogeneous(ScalarField::constant(&g, 2.0)))?;
    let para_err = para.sub(&ScalarField::from_fn(&g, |_, _, y| 1.0 - y * y)).max_abs();
    let ok = ds.iter().chain(&ns).all(|&s| within(s, 4.0, 0.3)) && para_err <= 1e-12;
    Ok((ok, format!("Dirichlet slopes [{}], Neumann slopes [{}], 1 − y3² error {para_err:.1e}", fmt_list(&ds), fmt_list(&ns))))
}

// ---------------------------------------------------------------------------
// 6. Compatible initial data

fn initial_data() -> Outcome {
    // A priori contraction constant: ratio ≤ min(1/2, C/ε) with C = 1.
    const C: f64 = 1.0;
    let g = Grid::new(16, 16, 33, Mode::Slab)?;
    let inc = Seed::Shear.data(&g)?;
    let settings = IterationSettings::default();
    let epsilons = [1e2, 1e3, 1e4];
    let mut worst_bc: f64 = 0.0;
    let mut worst_ratio_scaled: f64 = 0.0;
    let mut ratio_ok = true;
    let mut dv = Vec::new();
    for &eps in &epsilons {
        let d = construct_initial_data(&inc, eps, 1, settings)?;
        if !d.converged {
            return Ok((false, format!("ε = {eps:e} did not converge")));
        }
        worst_bc = worst_bc.max(d.h.iter().map(|h| h.max_abs_boundary()).fold(0.0, f64::max));
        for r in d.ratios() {
            ratio_ok &= r <= (C / eps).min(0.5);
            worst_ratio_scaled = worst_ratio_scaled.max(r * eps);
        }
        dv.push(d.v0.sub(&inc.v0).max_abs());
    }
    let slope = loglog_slope(&epsilons, &dv);
    let exact = construct_initial_data(&inc, f64::INFINITY, 1, settings)?;
    let seed_err = exact.v0.sub(&inc.v0).max_abs().max(exact.f0.sub(&inc.g0).max_abs()).max(exact.h[0].sub(&inc.q0).max_abs());
    let ok = worst_bc <= 1e-8 && ratio_ok && within(slope, -1.0, 0.2) && seed_err <= 1e-13;
    Ok((
        ok,
        format!("plate residual {worst_bc:.1e}, max ratio·ε {worst_ratio_scaled:.3} (C = {C}), ‖v0ε − v0‖ slope {slope:.3}, ε = ∞ deviation {seed_err:.0e}"),
    ))
}

// ---------------------------------------------------------------------------
// 7. Hyperbolic core

fn random_coefficients(g: &Grid, rng: &mut ChaCha8Rng, eps: f64) -> HyperbolicCoefficients {
    // Constant-in-space, near-identity ã and F⁰ with F⁰_{3j} = 0.
    let a: [[f64; 3]; 3] = std::array::from_fn(|l| std::array::from_fn(|i| if l == i { 1.0 } else { 0.0 } + rng.gen_range(-0.2..0.2)));
    let f: [[f64; 3]; 3] = std::array::from_fn(|k| std::array::from_fn(|_| if k == 2 { 0.0 } else { rng.gen_range(-0.5..0.5) }));
    HyperbolicCoefficients {
        a0_h: ScalarField::constant(g, 1.0 / eps),
        a_tilde: Tensor2Field::from_fn(g, move |_, _, _| a),
        f0: Tensor2Field::from_fn(g, move |_, _, _| f),
        source: Tensor2Field::zeros(g),
    }
}

fn hyperbolic_core() -> Outcome {
    let g = Grid::new(16, 16, 16, Mode::Torus)?;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let eps = 100.0;

    let mut asym: f64 = 0.0;
    let mut max_rank = 0;
    for _ in 0..20 {
        let c = random_coefficients(&g, &mut rng, eps);
        for l in 0..3 {
            let m = c.al_at(l, 0);
            asym = asym.max((m - m.transpose()).amax());
        }
        let an: Mat13 = c.normal_matrix_at([0.0, 0.0, 1.0], 0);
        let sv = an.singular_values();
        let tol = 1e-10 * sv.max();
        max_rank = max_rank.max(sv.iter().filter(|&&s| s > tol).count());
    }

    let flat = HyperbolicCoefficients {
        a0_h: ScalarField::constant(&g, 1.0 / eps),
        a_tilde: Tensor2Field::identity(&g),
        f0: Tensor2Field::zeros(&g),
        source: Tensor2Field::zeros(&g),
    };
    let mut eig_err: f64 = 0.0;
    for l in 0..3 {
        // A0^{-1/2} A_l A0^{-1/2}: generalized eigenvalues of the pencil.
        let mut s = Mat13::identity();
        s[(0, 0)] = eps.sqrt();
        let m = s * flat.al_at(l, 0) * s;
        let ev = m.symmetric_eigenvalues();
        let top = ev.max();
        let bottom = ev.min();
        eig_err = eig_err.max((top - eps.sqrt()).abs()).max((bottom + eps.sqrt()).abs());
    }

    // Frozen-coefficient run: ∫XᵀA0X is conserved by the skew spectral operator.
    let c = random_coefficients(&g, &mut rng, eps);
    let amp: Vec<f64> = (0..NCOMP).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let x0 = StateVector13 {
        comps: (0..NCOMP)
            .map(|k| {
                let a = amp[k];
                ScalarField::from_fn(&g, move |y1, y2, y3| a * (y1 + k as f64).sin() + 0.5 * a * (y2 - y3).cos())
            })
            .collect(),
    };
    let q0 = c.quadratic_form(&x0);
    let mut x = x0;
    let dt = 1e-3;
    for _ in 0..100 {
        x = linear_rk4_step(&c, &x, dt);
    }
    let drift = (c.quadratic_form(&x) - q0).abs() / q0;
    let ok = asym == 0.0 && max_rank <= 2 && eig_err <= 1e-12 && drift <= 1e-8;
    Ok((ok, format!("asymmetry {asym:.0e}, max rank A_N {max_rank}, ±√ε error {eig_err:.1e}, quadratic-form drift {drift:.1e}")))
}

// ---------------------------------------------------------------------------
// 8. Energy conservation

fn conservation() -> Outcome {
    let g = Grid::new(32, 32, 32, Mode::Torus)?;
    let d = Seed::Shear.data(&g)?;
    let f0 = ReferenceDeformation::new(d.g0.clone());
    let eta = FlowMap::identity(&g);
    let f = f0.transport(&eta);
    let state = FlowState { t: 0.0, eta, v: d.v0, h: d.q0, f };
    let model = Model::new(f0, EquationOfState::linear(100.0), MollifierKernel::new(&g, 0.0)?);
    let geo = model.geometry(&state)?;
    let e0 = physical_energy(&state, &geo, &model.eos).total;
    let t_end = 0.5;
    let dt0 = cfl_dt(&state, &geo, &model.f0, &model.eos, 0.4)?;
    let mut drifts = Vec::new();
    for fac in [1.0, 0.5] {
        let dt = t_end / (t_end / (dt0 * fac)).ceil();
        let fin = evolve_to(state.clone(), &model, t_end, TimeStep::Fixed(dt), |_, _, _| Ok(()))?;
        let e = physical_energy(&fin, &model.geometry(&fin)?, &model.eos).total;
        drifts.push((e - e0).abs() / e0);
    }
    let gain = drifts[0] / drifts[1];
    let ok = drifts[0] <= 1e-6 && gain >= 8.0;
    Ok((ok, format!("relative drift {:.2e} (dt), {:.2e} (dt/2), reduction ×{gain:.1}", drifts[0], drifts[1])))
}

// ---------------------------------------------------------------------------
// 9. Constraint propagation

fn constraint_propagation() -> Outcome {
    // Seed with both motion and elastic stress: shear velocity plus the
    // elastic-shear deformation.
    //
    // (a) The deformation identity 𝔉_j = (F⁰_j·∂)η is linear in the unknowns
    // and preserved by every RK stage, so its residual sits at roundoff for
    // every step size. The dt-refinement order is measured on 𝔉 itself
    // against a fine-step reference.
    let g = Grid::new(16, 16, 17, Mode::Slab)?;
    let inc = IncompressibleData::new(Seed::Shear.velocity(&g), Seed::ElasticShear.deformation(&g))?;
    let data = construct_initial_data(&inc, 100.0, 1, IterationSettings::default())?;
    let (state, f0) = data.initial_state();
    let model = Model::new(f0, EquationOfState::linear(100.0), MollifierKernel::new(&g, 0.0)?);
    let t_end = 0.05;
    let run_n = |n: usize| evolve_to(state.clone(), &model, t_end, TimeStep::Fixed(t_end / n as f64), |_, _, _| Ok(()));
    let reference = run_n(640)?;
    let mut errs = Vec::new();
    let mut dts = Vec::new();
    let mut identity: f64 = 0.0;
    for n in [20, 40, 80] {
        let s = run_n(n)?;
        identity = identity.max(s.f.sub(&model.f0.transport(&s.eta)).max_abs());
        errs.push(s.f.sub(&reference.f).max_abs());
        dts.push(t_end / n as f64);
    }
    let slopes = pair_slopes(&dts, &errs);

    // (b) Paired run with κ > 0: corrected residual stays flat while the
    // uncorrected one grows linearly. The correction integrand needs both
    // motion and elastic stress at t = 0, hence the combined seed.
    let (state, f0) = data.initial_state();
    let model = Model::new(f0, EquationOfState::linear(100.0), MollifierKernel::new(&g, 1.0)?);
    let mut correction = CorrectionIntegral::new(&g);
    let mut series: Vec<(f64, f64, f64)> = Vec::new();
    let mut record = |s: &FlowState, geo: &GeometryCache| -> lela_core::Result<()> {
        let rates = rhs(s, geo, &model.f0, &model.eos)?;
        correction.push(s.t, correction_integrand(s, geo, &model.f0, &model.kernel)?);
        let r = constraint_residuals(s, geo, &model.f0, &model.eos, &rates, Some(&correction));
        series.push((s.t, r.div_f, r.div_f_uncorrected));
        Ok(())
    };
    record(&state, &model.geometry(&state)?)?;
    let dt = cfl_dt(&state, &model.geometry(&state)?, &model.f0, &model.eos, 0.2)?;
    evolve_to(state, &model, 0.2, TimeStep::Fixed(dt), |s, geo, _| record(s, geo))?;
    let (t_end, _, unc_end) = *series.last().expect("samples");
    let corrected_max = series.iter().map(|r| r.1).fold(0.0, f64::max);
    let mid = series.iter().min_by(|a, b| (a.0 - 0.5 * t_end).abs().total_cmp(&(b.0 - 0.5 * t_end).abs())).expect("samples");
    let growth = unc_end / mid.2;
    let flat = corrected_max <= 0.05 * unc_end;
    let linear = within(growth, 2.0, 0.3);

    let ok = identity <= 1e-12 && slopes.iter().all(|&s| within(s, 4.0, 0.3)) && flat && linear;
    Ok((
        ok,
        format!(
            "identity residual {identity:.1e} at every dt, 𝔉 errors [{}] → dt-slopes [{}]; κ = 1: corrected max {corrected_max:.2e} vs uncorrected {unc_end:.2e} at T (T/half-T ×{growth:.2})",
            errs.iter().map(|e| format!("{e:.2e}")).collect::<Vec<_>>().join(", "),
            fmt_list(&slopes)
        ),
    ))
}

// ---------------------------------------------------------------------------
// 10. Picard mode

fn picard_mode() -> Outcome {
    let g = Grid::new(16, 16, 17, Mode::Slab)?;
    let cfg = SimulationConfig {
        grid: GridConfig { n1: 16, n2: 16, n3: 17, mode: Mode::Slab },
        initial: InitialConfig::Construct { seed: Seed::Shear, order: 1, max_iter: 50 },
        ..SimulationConfig::default()
    };
    let (state, f0, _) = prepare_initial(&cfg)?;
    let model = Model::new(f0, EquationOfState::linear(cfg.epsilon.0), MollifierKernel::new(&g, 0.0)?);
    let t_final = 0.02;
    let steps = 8;
    let tol = cfg.tolerances.tol_picard;
    let out = picard_solve(&state, &model, t_final, steps, cfg.picard_max_iter, tol)?;
    // Ratios while the differences are above the roundoff floor.
    let diffs: Vec<f64> = out.differences.iter().copied().filter(|&d| d > 1e-13).collect();
    let ratios: Vec<f64> = diffs.windows(2).map(|w| w[1] / w[0]).collect();
    let mut rk = state.clone();
    for _ in 0..steps {
        rk = step_rk4(&rk, t_final / steps as f64, &model)?;
    }
    let final_diff = out.trajectory.last().expect("trajectory").max_diff(&rk);
    let worst = ratios.iter().copied().fold(0.0, f64::max);
    let ok = !ratios.is_empty() && worst < 0.7 && final_diff <= 10.0 * tol;
    Ok((ok, format!("{} iterates, worst difference ratio {worst:.3}, |Picard − RK4| {final_diff:.1e} (10·tol = {:.0e})", out.iterations, 10.0 * tol)))
}

// ---------------------------------------------------------------------------
// 11. Incompressible limit

fn incompressible_limit() -> Outcome {
    let dir = tempfile::tempdir()?;
    let base = SimulationConfig {
        grid: GridConfig { n1: 16, n2: 16, n3: 17, mode: Mode::Slab },
        initial: InitialConfig::Construct { seed: Seed::Shear, order: 1, max_iter: 50 },
        t_final: 0.05,
        output: OutputConfig { directory: dir.path().to_path_buf(), snapshot_stride: 0 },
        ..SimulationConfig::default()
    };
    let epsilons = [1e2, 1e3, 1e4];
    let sweep = epsilon_sweep(&base, &epsilons, 5)?;
    let mids: Vec<f64> = sweep.cauchy.iter().map(|r| (r.epsilon_a * r.epsilon_b).sqrt()).collect();
    let mut cauchy_slopes = Vec::new();
    for pick in [|r: &CauchyRow| r.v, |r: &CauchyRow| r.f, |r: &CauchyRow| r.h] {
        let d: Vec<f64> = sweep.cauchy.iter().map(pick).collect();
        if d.iter().all(|&x| x > 0.0) {
            cauchy_slopes.push(loglog_slope(&mids, &d));
        }
    }
    let eprime: Vec<f64> = sweep.members.iter().map(|m| m.max_eprime_dth).collect();
    let div: Vec<f64> = sweep.members.iter().map(|m| m.div_v_final).collect();
    let eprime_slope = loglog_slope(&epsilons, &eprime);
    let div_slope = loglog_slope(&epsilons, &div);
    let ok = sweep.complete
        && !cauchy_slopes.is_empty()
        && cauchy_slopes.iter().chain([&eprime_slope, &div_slope]).all(|&s| within(s, -1.0, 0.3));
    Ok((
        ok,
        format!("Cauchy slopes (v, F, h) [{}], max‖e′∂ₜh‖ slope {eprime_slope:.3}, ‖div_ã v‖(T) slope {div_slope:.3}", fmt_list(&cauchy_slopes)),
    ))
}

// ---------------------------------------------------------------------------
// 12. Taylor-sign monitor

fn taylor_monitor() -> Outcome {
    let g = Grid::new(16, 16, 17, Mode::Slab)?;
    // h = (1 − y3²)(1 + 0.3 y3)(2 + cos y1): −∂h/∂N is 1.4(2 + cos y1) at
    // the bottom and 2.6(2 + cos y1) at the top, so the minimum is 1.4.
    let h = ScalarField::from_fn(&g, |a, _, y| (1.0 - y * y) * (1.0 + 0.3 * y) * (2.0 + a.cos()));
    let mut analytic = (taylor_sign_min(&h).ok_or("slab has plates")? - 1.4).abs();
    // h = c(1 − y3²): −∂h/∂N = 2c everywhere.
    let h = ScalarField::from_fn(&g, |_, _, y| 0.7 * (1.0 - y * y));
    analytic = analytic.max((taylor_sign_min(&h).ok_or("slab has plates")? - 1.4).abs());
    let torus_none = taylor_sign_min(&ScalarField::zeros(&Grid::new(8, 8, 8, Mode::Torus)?)).is_none();

    // Synthetic sequence with three downward crossings of c0/2 = 0.5.
    let mut m = TaylorMonitor::new(1.0);
    let fired: Vec<bool> = [0.9, 0.4, 0.3, 0.6, 0.45, 0.8, 0.2, 0.1].iter().enumerate().map(|(k, &x)| m.observe(k as f64, x)).collect();
    let synthetic_ok = m.warnings == 3 && fired == [false, true, false, false, true, false, true, false];

    // Driver run from the shear seed, whose pressure violates the sign
    // condition: count crossings in the recorded series independently.
    let dir = tempfile::tempdir()?;
    let cfg = SimulationConfig {
        grid: GridConfig { n1: 16, n2: 16, n3: 17, mode: Mode::Slab },
        initial: InitialConfig::Builtin { name: Seed::Shear },
        epsilon: Epsilon(100.0),
        t_final: 0.02,
        output: OutputConfig { directory: dir.path().to_path_buf(), snapshot_stride: 0 },
        ..SimulationConfig::default()
    };
    let out = run(&cfg)?;
    let mut reader = csv::Reader::from_path(dir.path().join("series.csv"))?;
    let col = reader.headers()?.iter().position(|h| h == "taylor_min").ok_or("taylor_min column")?;
    let mut crossings = 0;
    let mut below = false;
    for row in reader.records() {
        let x: f64 = row?[col].parse()?;
        let now = x < 0.5 * cfg.c0;
        crossings += usize::from(now && !below);
        below = now;
    }
    let seeded_below = out.initial.taylor_min.is_some_and(|x| x < 0.5 * cfg.c0);
    let ok = analytic <= 1e-10 && torus_none && synthetic_ok && seeded_below && crossings >= 1 && out.taylor_warnings == crossings;
    Ok((
        ok,
        format!(
            "closed-form error {analytic:.1e}; synthetic warnings {} of 3; seeded run taylor_min(0) = {:.3}: {} warning(s) for {crossings} crossing(s)",
            m.warnings,
            out.initial.taylor_min.unwrap_or(f64::NAN),
            out.taylor_warnings
        ),
    ))
}
