//! Quick self-check suites behind `lela check --suite <name>`.
//!
//! Each suite runs a handful of cheap properties on small grids with a fixed
//! random seed, so results are reproducible. The full quantitative study
//! lives in the acceptance tests; these are smoke checks for an installed
//! binary.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::elliptic::{solve_dirichlet, EllipticProblem};
use crate::eos::EquationOfState;
use crate::error::{Error, Result};
use crate::evolve::{step_rk4, Model};
use crate::field::{ScalarField, Tensor2Field};
use crate::geometry::{cofactor_from_gradient, cofactor_jacobian, piola_residual, FlowMap, FlowState, ReferenceDeformation, DEFAULT_JAC_FLOOR};
use crate::grid::{Grid, Mode};
use crate::hyperbolic::HyperbolicCoefficients;
use crate::smoothing::MollifierKernel;

pub const SUITES: [&str; 5] = ["geometry", "mollifier", "elliptic", "hyperbolic", "evolve"];

#[derive(Clone, Debug, Serialize)]
pub struct CheckResult {
    pub suite: &'static str,
    pub name: &'static str,
    pub value: f64,
    pub threshold: f64,
    pub passed: bool,
}

fn result(suite: &'static str, name: &'static str, value: f64, threshold: f64) -> CheckResult {
    CheckResult { suite, name, value, threshold, passed: value <= threshold }
}

/// Runs one suite, or every suite for `"all"`.
pub fn run_suite(name: &str) -> Result<Vec<CheckResult>> {
    match name {
        "all" => {
            let mut out = Vec::new();
            for s in SUITES {
                out.extend(run_suite(s)?);
            }
            Ok(out)
        }
        "geometry" => geometry(),
        "mollifier" => mollifier(),
        "elliptic" => elliptic(),
        "hyperbolic" => hyperbolic(),
        "evolve" => evolve(),
        other => Err(Error::Config(format!("unknown suite '{other}' (expected one of {SUITES:?} or all)"))),
    }
}

fn random_band_limited(g: &Grid, rng: &mut ChaCha8Rng, amp: f64) -> ScalarField {
    let c: Vec<f64> = (0..6).map(|_| rng.gen_range(-amp..amp)).collect();
    ScalarField::from_fn(g, move |a, b, y| {
        c[0] * a.sin() + c[1] * (a + b).cos() + c[2] * (2.0 * b).sin() * y + c[3] * a.cos() * b.sin() + c[4] * y * y + c[5]
    })
}

fn geometry() -> Result<Vec<CheckResult>> {
    let g = Grid::new(16, 16, 9, Mode::Torus)?;
    let id = cofactor_jacobian(&FlowMap::identity(&g), DEFAULT_JAC_FLOOR)?;
    let id_err = id.jac.map(|x| x - 1.0).max_abs().max(id.a.sub(&Tensor2Field::identity(&g)).max_abs());
    // Tangential stretches are not periodic displacements, so go through the gradient.
    let mut grad = Tensor2Field::identity(&g);
    for (i, d) in [2.0, 0.5, 4.0].into_iter().enumerate() {
        grad.0[i][i] = ScalarField::constant(&g, d);
    }
    let s = cofactor_from_gradient(&grad, DEFAULT_JAC_FLOOR)?;
    let s_err = s.jac.map(|x| x - 4.0).max_abs().max(s.a.0[0][0].map(|x| x - 0.5).max_abs()).max(s.a.0[2][2].map(|x| x - 0.25).max_abs());
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut piola: f64 = 0.0;
    for _ in 0..3 {
        let c: [f64; 3] = std::array::from_fn(|_| rng.gen_range(-0.05..0.05));
        let eta = FlowMap::from_fn(&g, move |a, b, y| {
            [a + c[0] * (b + y).sin(), b + c[1] * a.cos(), y + c[2] * (a + b).sin()]
        });
        piola = piola.max(piola_residual(&cofactor_jacobian(&eta, DEFAULT_JAC_FLOOR)?.big_a));
    }
    Ok(vec![
        result("geometry", "identity cofactor", id_err, 1e-14),
        result("geometry", "diagonal stretch", s_err, 1e-14),
        result("geometry", "torus Piola identity", piola, 1e-10),
    ])
}

fn mollifier() -> Result<Vec<CheckResult>> {
    let g = Grid::new(32, 32, 9, Mode::Slab)?;
    let k = MollifierKernel::new(&g, 0.3)?;
    let c = ScalarField::constant(&g, 2.5);
    let constant = k.mollify(&c).sub(&c).max_abs();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut growth: f64 = 0.0;
    for _ in 0..10 {
        let f = ScalarField::from_vec(&g, (0..g.len()).map(|_| rng.gen_range(-1.0..1.0)).collect());
        growth = growth.max(k.mollify(&f).l2() - f.l2());
    }
    let id = MollifierKernel::new(&g, 0.0)?;
    let f = random_band_limited(&g, &mut rng, 1.0);
    Ok(vec![
        result("mollifier", "constant preservation", constant, 1e-14),
        result("mollifier", "l2 contraction (growth)", growth.max(0.0), 1e-13),
        result("mollifier", "kappa = 0 identity", id.mollify(&f).sub(&f).max_abs(), 0.0),
    ])
}

fn elliptic() -> Result<Vec<CheckResult>> {
    let g = Grid::new(8, 8, 17, Mode::Slab)?;
    let u = solve_dirichlet(&EllipticProblem::dirichlet_homogeneous(ScalarField::constant(&g, 2.0)))?;
    let exact = ScalarField::from_fn(&g, |_, _, y| 1.0 - y * y);
    let zero = solve_dirichlet(&EllipticProblem::dirichlet_homogeneous(ScalarField::zeros(&g)))?;
    Ok(vec![
        result("elliptic", "constant-rhs Dirichlet", u.sub(&exact).max_abs(), 1e-12),
        result("elliptic", "zero data", zero.max_abs(), 0.0),
    ])
}

fn hyperbolic() -> Result<Vec<CheckResult>> {
    let g = Grid::new(8, 8, 9, Mode::Torus)?;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let rand_tensor = |rng: &mut ChaCha8Rng| {
        let v: Vec<f64> = (0..9).map(|_| rng.gen_range(-1.0..1.0)).collect();
        Tensor2Field::from_fn(&g, move |_, _, _| std::array::from_fn(|i| std::array::from_fn(|j| v[3 * i + j])))
    };
    let c = HyperbolicCoefficients {
        a0_h: ScalarField::constant(&g, 0.01),
        a_tilde: rand_tensor(&mut rng),
        f0: rand_tensor(&mut rng),
        source: Tensor2Field::zeros(&g),
    };
    let asym = (0..3).map(|l| (c.al_at(l, 0) - c.al_at(l, 0).transpose()).amax()).fold(0.0, f64::max);
    let flat = HyperbolicCoefficients {
        a0_h: ScalarField::constant(&g, 0.01),
        a_tilde: Tensor2Field::identity(&g),
        f0: Tensor2Field::zeros(&g),
        source: Tensor2Field::zeros(&g),
    };
    // Generalized eigenvalues of (A0, A3) at flat geometry: ±√ε with ε = 100.
    let a0 = flat.a0_at(0);
    let s = a0.map(|x| if x > 0.0 { 1.0 / x.sqrt() } else { 0.0 });
    let m = s * flat.al_at(2, 0) * s;
    let eig = m.symmetric_eigenvalues();
    let top = eig.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(vec![
        result("hyperbolic", "coefficient symmetry", asym, 0.0),
        result("hyperbolic", "acoustic eigenvalue", (top - 10.0).abs(), 1e-12),
    ])
}

fn evolve() -> Result<Vec<CheckResult>> {
    let g = Grid::new(8, 8, 9, Mode::Slab)?;
    let f0 = ReferenceDeformation::new(Tensor2Field::identity(&g));
    let m = Model::new(f0.clone(), EquationOfState::linear(100.0), MollifierKernel::new(&g, 0.0)?);
    let s = FlowState::rest(&f0);
    let next = step_rk4(&s, 1e-3, &m)?;
    Ok(vec![result("evolve", "rest state steady", next.max_diff(&s), 1e-14)])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_suite_passes() {
        for r in run_suite("all").unwrap() {
            assert!(r.passed, "{r:?}");
        }
    }

    #[test]
    fn unknown_suite_is_a_config_error() {
        assert!(matches!(run_suite("nope"), Err(Error::Config(_))));
    }
}
