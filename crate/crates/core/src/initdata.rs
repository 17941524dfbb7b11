//! Compatible compressible initial data from incompressible data.
//!
//! Given divergence-free `(v₀, G⁰)` the construction looks for
//! `v₀ε = v₀ + ∇φ`, `F⁰ε_j = G⁰_j + ∇φ_j` and enthalpy time-derivatives
//! `h_(k) = ∂_t^k h|_{t=0}` such that `h_(k)` vanish on the plates and the
//! continuity and deformation-divergence constraints hold at `t = 0`:
//!
//! ```text
//! −Δφ   = ε⁻¹ h_(1),              ∂φ/∂N = 0
//! −Δφ_j = ε⁻¹ (F_j·∂) h_(0),      ∂φ_j/∂N = 0
//! −Δh_(0) = ε⁻¹ Σ_j (F_j·∂)² h_(0) + N₀(v, F),   h_(0)|Γ = 0
//! −Δh_(1) = ε⁻¹ Σ_j (F_j·∂)² h_(1) + N₁(v, F, h_(0)),   h_(1)|Γ = 0
//! ```
//!
//! solved by fixed-point iteration; every `ε⁻¹` coupling uses the previous
//! iterate, so the map contracts once `ε` is large enough.

use crate::elliptic::{solve_dirichlet, solve_neumann, EllipticProblem};
use crate::error::{Error, Result};
use crate::field::{ScalarField, Tensor2Field, VectorField};
use crate::geometry::{
    directional_derivative, gradient, partial, vector_gradient, FlowMap, FlowState, ReferenceDeformation,
};

/// Incompressible seed `(v₀, G⁰)` and its pressure `Q₀`.
#[derive(Clone, Debug)]
pub struct IncompressibleData {
    pub v0: VectorField,
    /// Columns `G⁰_j`, stored `g0.0[k][j]`.
    pub g0: Tensor2Field,
    pub q0: ScalarField,
}

/// Constraint and sign report for an incompressible seed.
#[derive(Clone, Debug, PartialEq)]
pub struct SeedReport {
    pub div_v: f64,
    pub div_g: f64,
    /// `max |G⁰_{3j}|` on the plates.
    pub normal_trace: f64,
    /// `max |Q₀|` on the plates.
    pub q_boundary: f64,
    /// `min_Γ (−∂Q₀/∂N)` (slab mode only).
    pub taylor_min: Option<f64>,
}

impl SeedReport {
    pub fn constraints_hold(&self, tol: f64) -> bool {
        self.div_v <= tol && self.div_g <= tol && self.normal_trace <= tol && self.q_boundary <= tol
    }
    pub fn taylor_holds(&self, c0: f64) -> bool {
        self.taylor_min.is_some_and(|m| m >= c0)
    }
}

impl IncompressibleData {
    /// Builds the seed, solving for `Q₀`.
    pub fn new(v0: VectorField, g0: Tensor2Field) -> Result<Self> {
        let q0 = incompressible_pressure(&v0, &g0)?;
        Ok(Self { v0, g0, q0 })
    }

    pub fn report(&self) -> SeedReport {
        let gv = vector_gradient(&self.v0);
        let div_v = (0..3).fold(ScalarField::zeros(self.v0.grid()), |acc, i| acc.add(&gv.0[i][i])).max_abs();
        let div_g = (0..3)
            .map(|j| (0..3).fold(ScalarField::zeros(self.v0.grid()), |acc, k| acc.add(&partial(&self.g0.0[k][j], k))).max_abs())
            .fold(0.0, f64::max);
        let normal_trace = (0..3).map(|j| self.g0.0[2][j].max_abs_boundary()).fold(0.0, f64::max);
        SeedReport {
            div_v,
            div_g,
            normal_trace,
            q_boundary: self.q0.max_abs_boundary(),
            taylor_min: crate::diagnostics::taylor_sign_min(&self.q0),
        }
    }
}

/// `−ΔQ₀ = N₀(v₀, G⁰)`, `Q₀|Γ = 0`.
pub fn incompressible_pressure(v0: &VectorField, g0: &Tensor2Field) -> Result<ScalarField> {
    solve_dirichlet(&EllipticProblem::dirichlet_homogeneous(nonlinearity_n0(v0, g0)))
}

/// `N₀ = ∂_i v^k ∂_k v^i − Σ_j ∂_i F_{kj} ∂_k F_{ij}`.
pub fn nonlinearity_n0(v: &VectorField, f: &Tensor2Field) -> ScalarField {
    let gv = vector_gradient(v);
    let mut out = ScalarField::zeros(v.grid());
    for i in 0..3 {
        for k in 0..3 {
            out.add_product(&gv.0[k][i], &gv.0[i][k]);
        }
    }
    if f.max_abs() > 0.0 {
        for j in 0..3 {
            let gf = column_gradient(f, j);
            for i in 0..3 {
                for k in 0..3 {
                    // ∂_i F_{kj} ∂_k F_{ij}
                    out.axpy(-1.0, &gf[k][i].mul(&gf[i][k]));
                }
            }
        }
    }
    out
}

/// `N₁`: the time derivative at `t = 0` of the Lagrangian pressure equation,
/// less the `ε⁻¹` directional term the iteration adds separately.
///
/// With `a = I` and `∂_t a^{li} = −∂_i v^l` at `t = 0`, differentiating
/// `ε⁻¹∂_t h = −a^{li}∂_l v_i` three times gives `ε⁻¹∂_t³h = Δ∂_t h + X` with
///
/// ```text
/// X = −2 tr((∂v)³) + 3 ∂_i v̇_l ∂_l v_i − ∂_i(∂_i v_m ∂_m h₀) − ∂_i Ė_i,
/// v̇_i = −∂_i h₀ + E_i,   E_i = F_{nj} ∂_n F_{ij},   Ė_i = F_{nj} ∂_n(F_{mj} ∂_m v_i),
/// ```
///
/// and `N₁ = X + Σ_j (F_j·∂)²(div v)`; for consistent data
/// (`div v = −ε⁻¹h_(1)`) `N₁ + ε⁻¹Σ_j(F_j·∂)²h_(1) = X`. Every derivative is
/// composed exactly as in the evolution's right-hand side, so the discrete
/// third time derivative of `h` stays bounded as `ε` grows.
pub fn nonlinearity_n1(v: &VectorField, f: &Tensor2Field, h0: &ScalarField) -> ScalarField {
    let g = v.grid();
    let gv = vector_gradient(v); // gv[i][l] = ∂_l v_i
    let gh = gradient(h0);
    let elastic = f.max_abs() > 0.0;
    let columns: Vec<VectorField> = (0..3).map(|j| f.column(j)).collect();

    // v̇ = −∇h₀ + E.
    let mut vdot = VectorField(std::array::from_fn(|i| gh[i].scale(-1.0)));
    if elastic {
        for (j, col) in columns.iter().enumerate() {
            for i in 0..3 {
                vdot[i].axpy(1.0, &directional_derivative(col, &f.0[i][j]));
            }
        }
    }
    let gvd = vector_gradient(&vdot);

    let mut out = ScalarField::zeros(g);
    for i in 0..3 {
        for l in 0..3 {
            // 3 ∂_i v̇_l ∂_l v_i
            out.axpy(3.0, &gvd.0[l][i].mul(&gv.0[i][l]));
            for k in 0..3 {
                // −2 ∂_k v_l ∂_i v_k ∂_l v_i
                out.axpy(-2.0, &gv.0[l][k].mul(&gv.0[k][i]).mul(&gv.0[i][l]));
            }
        }
        // −∂_i(∂_i v_m ∂_m h₀)
        let mut flux = ScalarField::zeros(g);
        for m in 0..3 {
            flux.add_product(&gv.0[m][i], &gh[m]);
        }
        out.axpy(-1.0, &partial(&flux, i));
    }
    if elastic {
        let mut div_v = ScalarField::zeros(g);
        for i in 0..3 {
            div_v.axpy(1.0, &gv.0[i][i]);
        }
        for col in &columns {
            for i in 0..3 {
                // −∂_i Ė_i with Ė_i = (F_j·∂)((F_j·∂)v_i).
                let e_dot = directional_derivative(col, &directional_derivative(col, &v[i]));
                out.axpy(-1.0, &partial(&e_dot, i));
            }
            out.axpy(1.0, &directional_derivative(col, &directional_derivative(col, &div_v)));
        }
    }
    out
}

/// `gf[k][l] = ∂_l F_{kj}` for column `j`.
fn column_gradient(f: &Tensor2Field, j: usize) -> [[ScalarField; 3]; 3] {
    std::array::from_fn(|k| gradient(&f.0[k][j]))
}

/// Constructed data and the iteration record.
#[derive(Clone, Debug)]
pub struct CompatibleData {
    pub v0: VectorField,
    /// Columns `F⁰ε_j`, stored `f0.0[k][j]`.
    pub f0: Tensor2Field,
    /// `h_(0), …, h_(m)`.
    pub h: Vec<ScalarField>,
    pub epsilon: f64,
    pub order: usize,
    pub iterations: usize,
    pub converged: bool,
    /// Max-norm difference between consecutive iterates.
    pub trace: Vec<f64>,
    /// Largest Neumann solvability projection encountered.
    pub neumann_projection: f64,
}

/// Residuals of the properties the construction is meant to deliver.
#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct CompatibilityResiduals {
    /// `max_k max_Γ |h_(k)|`.
    pub boundary: f64,
    /// Interior `max |div v₀ε + ε⁻¹ h_(1)|`.
    pub continuity: f64,
    /// Interior `max_j |div F⁰ε_j + ε⁻¹ (F⁰ε_j·∂) h_(0)|`.
    pub deformation: f64,
    /// `max_j |F⁰ε_{3j}|` on the plates.
    pub normal_trace: f64,
}

impl CompatibleData {
    /// Ratios of consecutive iterate differences, skipping differences at
    /// the roundoff floor.
    pub fn ratios(&self) -> Vec<f64> {
        contraction_ratios(&self.trace)
    }

    /// Initial state (identity map) and its reference deformation.
    pub fn initial_state(&self) -> (FlowState, ReferenceDeformation) {
        let f0 = ReferenceDeformation::new(self.f0.clone());
        let g = self.v0.grid();
        let eta = FlowMap::identity(g);
        let f = f0.transport(&eta);
        let state = FlowState { t: 0.0, eta, v: self.v0.clone(), h: self.h[0].clone(), f };
        (state, f0)
    }

    pub fn residuals(&self) -> CompatibilityResiduals {
        let inv_eps = if self.epsilon.is_infinite() { 0.0 } else { 1.0 / self.epsilon };
        let boundary = self.h.iter().map(ScalarField::max_abs_boundary).fold(0.0, f64::max);
        let gv = vector_gradient(&self.v0);
        let mut cont = (0..3).fold(ScalarField::zeros(self.v0.grid()), |acc, i| acc.add(&gv.0[i][i]));
        if let Some(h1) = self.h.get(1) {
            cont.axpy(inv_eps, h1);
        }
        let deformation = (0..3)
            .map(|j| {
                let col = self.f0.column(j);
                let mut r = (0..3).fold(ScalarField::zeros(self.v0.grid()), |acc, k| acc.add(&partial(&col[k], k)));
                r.axpy(inv_eps, &directional_derivative(&col, &self.h[0]));
                r.max_abs_interior()
            })
            .fold(0.0, f64::max);
        let normal_trace = (0..3).map(|j| self.f0.0[2][j].max_abs_boundary()).fold(0.0, f64::max);
        CompatibilityResiduals { boundary, continuity: cont.max_abs_interior(), deformation, normal_trace }
    }
}

/// Consecutive difference ratios, ignoring entries at the roundoff floor.
pub fn contraction_ratios(trace: &[f64]) -> Vec<f64> {
    let scale = trace.first().copied().unwrap_or(0.0).abs().max(1.0);
    let floor = 1e-13 * scale;
    trace.windows(2).filter(|w| w[0] > floor && w[1] > floor).map(|w| w[1] / w[0]).collect()
}

/// Settings of the fixed-point iteration.
#[derive(Clone, Copy, Debug)]
pub struct IterationSettings {
    pub max_iter: usize,
    pub tol: f64,
    /// Smallest `ε` accepted.
    pub epsilon_min: f64,
}

impl Default for IterationSettings {
    fn default() -> Self {
        Self { max_iter: 50, tol: 1e-11, epsilon_min: 10.0 }
    }
}

/// Runs the fixed-point construction for order `m ∈ {0, 1}`.
pub fn construct_initial_data(inc: &IncompressibleData, epsilon: f64, order: usize, settings: IterationSettings) -> Result<CompatibleData> {
    if order > 1 {
        return Err(Error::Unsupported(format!("compatibility order {order} (only 0 and 1 are available)")));
    }
    if !(epsilon > 0.0) {
        return Err(Error::Config(format!("epsilon = {epsilon} must be positive")));
    }
    if epsilon < settings.epsilon_min {
        return Err(Error::EpsilonTooSmall { epsilon, ratios: Vec::new() });
    }
    let g = inc.v0.grid().clone();

    if epsilon.is_infinite() {
        let mut h = vec![inc.q0.clone()];
        if order == 1 {
            h.push(solve_dirichlet(&EllipticProblem::dirichlet_homogeneous(nonlinearity_n1(&inc.v0, &inc.g0, &inc.q0)))?);
        }
        return Ok(CompatibleData {
            v0: inc.v0.clone(),
            f0: inc.g0.clone(),
            h,
            epsilon,
            order,
            iterations: 1,
            converged: true,
            trace: vec![0.0],
            neumann_projection: 0.0,
        });
    }

    let inv_eps = 1.0 / epsilon;
    let mut v = inc.v0.clone();
    let mut f = inc.g0.clone();
    let mut h0 = solve_dirichlet(&EllipticProblem::dirichlet_homogeneous(nonlinearity_n0(&v, &f)))?;
    let mut h1 = if order == 1 {
        solve_dirichlet(&EllipticProblem::dirichlet_homogeneous(nonlinearity_n1(&v, &f, &h0)))?
    } else {
        ScalarField::zeros(&g)
    };
    let mut trace = Vec::new();
    let mut projection: f64 = 0.0;
    let mut converged = false;
    let mut iterations = 0;

    for n in 1..=settings.max_iter {
        iterations = n;
        // Velocity correction from the continuity constraint.
        let mut v_new = inc.v0.clone();
        if order == 1 {
            let s = solve_neumann(&EllipticProblem::neumann(h1.scale(inv_eps)))?;
            projection = projection.max(s.projection);
            let gp = gradient(&s.u);
            for i in 0..3 {
                v_new[i].axpy(1.0, &gp[i]);
            }
        }
        // Deformation corrections from the divergence constraint.
        let mut f_new = inc.g0.clone();
        let columns: Vec<VectorField> = (0..3).map(|j| f.column(j)).collect();
        for (j, col) in columns.iter().enumerate() {
            if col.max_abs() == 0.0 {
                continue;
            }
            let s = solve_neumann(&EllipticProblem::neumann(directional_derivative(col, &h0).scale(inv_eps)))?;
            projection = projection.max(s.projection);
            let gp = gradient(&s.u);
            for k in 0..3 {
                f_new.0[k][j].axpy(1.0, &gp[k]);
            }
        }
        // Enthalpy rows: the ε⁻¹ second-directional terms are lagged, the
        // nonlinearities use the freshest fields (N₁ sees the new h_(0), so
        // every O(1) coupling is resolved within the iterate).
        let mut rhs0 = nonlinearity_n0(&v_new, &f_new);
        for col in columns.iter().filter(|c| c.max_abs() > 0.0) {
            rhs0.axpy(inv_eps, &directional_derivative(col, &directional_derivative(col, &h0)));
        }
        let h0_new = solve_dirichlet(&EllipticProblem::dirichlet_homogeneous(rhs0))?;
        let h1_new = if order == 1 {
            let mut rhs1 = nonlinearity_n1(&v_new, &f_new, &h0_new);
            for col in columns.iter().filter(|c| c.max_abs() > 0.0) {
                rhs1.axpy(inv_eps, &directional_derivative(col, &directional_derivative(col, &h1)));
            }
            solve_dirichlet(&EllipticProblem::dirichlet_homogeneous(rhs1))?
        } else {
            h1.clone()
        };

        let diff = v_new
            .sub(&v)
            .max_abs()
            .max(f_new.sub(&f).max_abs())
            .max(h0_new.sub(&h0).max_abs())
            .max(h1_new.sub(&h1).max_abs());
        trace.push(diff);
        v = v_new;
        f = f_new;
        h0 = h0_new;
        h1 = h1_new;

        if diff < settings.tol {
            converged = true;
            break;
        }
        let ratios = contraction_ratios(&trace);
        if ratios.len() >= 3 && ratios[ratios.len() - 3..].iter().all(|&r| r >= 1.0) {
            return Err(Error::EpsilonTooSmall { epsilon, ratios });
        }
    }
    if !converged {
        log::warn!("initial-data iteration stopped after {iterations} iterates without reaching tol {:.1e}", settings.tol);
    }
    let mut h = vec![h0];
    if order == 1 {
        h.push(h1);
    }
    Ok(CompatibleData { v0: v, f0: f, h, epsilon, order, iterations, converged, trace, neumann_projection: projection })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Grid, Mode};

    fn shear(g: &Grid) -> VectorField {
        VectorField::from_fn(g, |a, b, _| [b.sin(), a.sin(), 0.0])
    }

    #[test]
    fn n0_of_shear() {
        let g = Grid::new(16, 16, 9, Mode::Slab).unwrap();
        let n0 = nonlinearity_n0(&shear(&g), &Tensor2Field::zeros(&g));
        let exact = ScalarField::from_fn(&g, |a, b, _| 2.0 * a.cos() * b.cos());
        assert!(n0.sub(&exact).max_abs() < 1e-13);
    }

    #[test]
    fn n0_of_elastic_shear_flips_sign() {
        let g = Grid::new(16, 16, 9, Mode::Slab).unwrap();
        let mut f = Tensor2Field::zeros(&g);
        f.set_column(0, &shear(&g));
        let n0 = nonlinearity_n0(&VectorField::zeros(&g), &f);
        let exact = ScalarField::from_fn(&g, |a, b, _| -2.0 * a.cos() * b.cos());
        assert!(n0.sub(&exact).max_abs() < 1e-13);
    }

    #[test]
    fn n1_vanishes_without_velocity() {
        let g = Grid::new(16, 16, 9, Mode::Slab).unwrap();
        let mut f = Tensor2Field::zeros(&g);
        f.set_column(0, &shear(&g));
        let h0 = ScalarField::from_fn(&g, |a, b, y| a.cos() * b.cos() * (1.0 - y * y));
        assert_eq!(nonlinearity_n1(&VectorField::zeros(&g), &f, &h0).max_abs(), 0.0);
    }

    #[test]
    fn infinite_epsilon_returns_seed() {
        let g = Grid::new(16, 16, 17, Mode::Slab).unwrap();
        let inc = IncompressibleData::new(shear(&g), Tensor2Field::zeros(&g)).unwrap();
        let d = construct_initial_data(&inc, f64::INFINITY, 1, IterationSettings::default()).unwrap();
        assert_eq!(d.v0, inc.v0);
        assert_eq!(d.h[0], inc.q0);
        assert_eq!(d.iterations, 1);
    }

    #[test]
    fn small_epsilon_is_rejected() {
        let g = Grid::new(8, 8, 9, Mode::Slab).unwrap();
        let inc = IncompressibleData::new(shear(&g), Tensor2Field::zeros(&g)).unwrap();
        assert!(matches!(construct_initial_data(&inc, 5.0, 1, IterationSettings::default()), Err(Error::EpsilonTooSmall { .. })));
    }
}
