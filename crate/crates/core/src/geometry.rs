//! Derivative operators and flow-map geometry.
//!
//! Tangential derivatives are spectral. The normal derivative is a
//! fourth-order finite difference with one-sided closures at the plates in
//! slab mode, and spectral in torus mode. Lagrangian indices follow the
//! usual convention: `a^{li} = ∂y^l/∂x^i` is stored as `a.0[l][i]`, and the
//! flow-map gradient `∂_l η^i` as `grad.0[i][l]`.

use nalgebra::Matrix3;

use crate::error::{Error, Result};
use crate::field::{apply_multiplier_many, apply_normal_rows, tangential_multipliers, ScalarField, Tensor2Field, VectorField};
use crate::grid::Grid;

/// Default lower bound on the Jacobian before a map is declared tangled.
pub const DEFAULT_JAC_FLOOR: f64 = 1e-6;

/// `∂_1 f` (`axis = 1`) or `∂_2 f` (`axis = 2`), spectrally.
pub fn tangential_derivative(f: &ScalarField, axis: usize) -> ScalarField {
    let m = f.grid().multipliers();
    let mult = match axis {
        1 => &m.d1,
        2 => &m.d2,
        _ => panic!("tangential axis must be 1 or 2, got {axis}"),
    };
    tangential_multipliers(f, &[mult]).pop().expect("one output")
}

/// `(∂_1 f, ∂_2 f)` sharing one forward transform.
pub fn tangential_gradient(f: &ScalarField) -> [ScalarField; 2] {
    let m = f.grid().multipliers();
    let mut out = tangential_multipliers(f, &[&m.d1, &m.d2]);
    let d2 = out.pop().expect("two outputs");
    let d1 = out.pop().expect("two outputs");
    [d1, d2]
}

/// `Δ̄ f = (∂_1² + ∂_2²) f`.
pub fn tangential_laplacian(f: &ScalarField) -> ScalarField {
    tangential_multipliers(f, &[&f.grid().multipliers().lap]).pop().expect("one output")
}

/// `∂_3 f`: fourth-order differences in slab mode, spectral in torus mode.
pub fn normal_derivative(f: &ScalarField) -> ScalarField {
    apply_normal_rows(f)
}

/// `[∂_1 f, ∂_2 f, ∂_3 f]`.
pub fn gradient(f: &ScalarField) -> [ScalarField; 3] {
    let [d1, d2] = tangential_gradient(f);
    [d1, d2, normal_derivative(f)]
}

/// `∂_l f` with zero-based `l`.
pub fn partial(f: &ScalarField, l: usize) -> ScalarField {
    match l {
        0 => tangential_derivative(f, 1),
        1 => tangential_derivative(f, 2),
        2 => normal_derivative(f),
        _ => panic!("axis index {l} out of range"),
    }
}

/// `G[i][l] = ∂_l v_i`.
pub fn vector_gradient(v: &VectorField) -> Tensor2Field {
    Tensor2Field(std::array::from_fn(|i| gradient(&v[i])))
}

/// Removes tangential modes outside the 2/3 band.
pub fn dealias(f: &ScalarField) -> ScalarField {
    dealias_many(&[f]).pop().expect("one output")
}

pub fn dealias_many(fields: &[&ScalarField]) -> Vec<ScalarField> {
    match fields.first() {
        Some(f) => apply_multiplier_many(fields, &f.grid().multipliers().dealias),
        None => Vec::new(),
    }
}

/// `(F⁰_j · ∂) f = Σ_k F⁰_{kj} ∂_k f` for one column `F⁰_j`.
pub fn directional_derivative(f0_j: &VectorField, f: &ScalarField) -> ScalarField {
    let g = gradient(f);
    directional_from_gradient(f0_j, &g)
}

/// Componentwise directional derivative of a vector field.
pub fn directional_derivative_vec(f0_j: &VectorField, v: &VectorField) -> VectorField {
    VectorField(std::array::from_fn(|i| directional_derivative(f0_j, &v[i])))
}

fn directional_from_gradient(f0_j: &VectorField, grad: &[ScalarField; 3]) -> ScalarField {
    let mut out = ScalarField::zeros(grad[0].grid());
    for k in 0..3 {
        out.add_product(&f0_j[k], &grad[k]);
    }
    out
}

/// Flow-map gradient `[∂η]` from the stored displacement.
pub fn flow_gradient(eta: &FlowMap) -> Tensor2Field {
    let mut g = vector_gradient(&eta.displacement);
    for i in 0..3 {
        g.0[i][i] = g.0[i][i].map(|x| x + 1.0);
    }
    g
}

/// Cofactor matrix, Jacobian and Jacobian-scaled cofactor of a flow map.
#[derive(Clone, Debug)]
pub struct Cofactor {
    /// `a = [∂η]⁻¹`, stored `a.0[l][i] = a^{li}`.
    pub a: Tensor2Field,
    pub jac: ScalarField,
    /// `A = J a`.
    pub big_a: Tensor2Field,
}

/// Computes `a = [∂η]⁻¹`, `J = det[∂η]` and `A = J a` at every node.
///
/// Fails with [`Error::DegenerateMap`] if `J` drops below `jac_floor`.
pub fn cofactor_jacobian(eta: &FlowMap, jac_floor: f64) -> Result<Cofactor> {
    cofactor_from_gradient(&flow_gradient(eta), jac_floor)
}

/// Cofactor data of a supplied gradient field `[∂η]` (`grad.0[i][l] = ∂_l η_i`).
pub fn cofactor_from_gradient(grad: &Tensor2Field, jac_floor: f64) -> Result<Cofactor> {
    let g = grad.grid().clone();
    let mut a = Tensor2Field::zeros(&g);
    let mut big_a = Tensor2Field::zeros(&g);
    let mut jac = ScalarField::zeros(&g);
    let mut min_j = f64::INFINITY;
    for idx in 0..g.len() {
        let m = grad.at(idx);
        let det = det3(&m);
        min_j = min_j.min(det);
        // Adjugate: cof[l][i] = (adj M)[l][i], so M⁻¹ = adj / det.
        let adj = adjugate3(&m);
        jac[idx] = det;
        for l in 0..3 {
            for i in 0..3 {
                big_a.0[l][i][idx] = adj[l][i];
                a.0[l][i][idx] = adj[l][i] / det;
            }
        }
    }
    if !(min_j > jac_floor) {
        return Err(Error::DegenerateMap { t: f64::NAN, min_jacobian: min_j, floor: jac_floor });
    }
    Ok(Cofactor { a, jac, big_a })
}

pub(crate) fn det3(m: &[[f64; 3]; 3]) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

pub(crate) fn adjugate3(m: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    [
        [
            m[1][1] * m[2][2] - m[1][2] * m[2][1],
            m[0][2] * m[2][1] - m[0][1] * m[2][2],
            m[0][1] * m[1][2] - m[0][2] * m[1][1],
        ],
        [
            m[1][2] * m[2][0] - m[1][0] * m[2][2],
            m[0][0] * m[2][2] - m[0][2] * m[2][0],
            m[0][2] * m[1][0] - m[0][0] * m[1][2],
        ],
        [
            m[1][0] * m[2][1] - m[1][1] * m[2][0],
            m[0][1] * m[2][0] - m[0][0] * m[2][1],
            m[0][0] * m[1][1] - m[0][1] * m[1][0],
        ],
    ]
}

/// `max_i ‖∂_l A^{li}‖_∞`.
pub fn piola_residual(big_a: &Tensor2Field) -> f64 {
    (0..3)
        .map(|i| {
            let mut div = ScalarField::zeros(big_a.grid());
            for l in 0..3 {
                div.axpy(1.0, &partial(&big_a.0[l][i], l));
            }
            div.max_abs()
        })
        .fold(0.0, f64::max)
}

/// `(∇_a f)_i = a^{li} ∂_l f` given the gradient of `f`.
pub fn eulerian_gradient(a: &Tensor2Field, grad: &[ScalarField; 3]) -> [ScalarField; 3] {
    std::array::from_fn(|i| {
        let mut out = ScalarField::zeros(a.grid());
        for l in 0..3 {
            out.add_product(&a.0[l][i], &grad[l]);
        }
        out
    })
}

/// `div_a v = a^{li} ∂_l v_i` given `G[i][l] = ∂_l v_i`.
pub fn eulerian_divergence(a: &Tensor2Field, grad_v: &Tensor2Field) -> ScalarField {
    let mut out = ScalarField::zeros(a.grid());
    for i in 0..3 {
        for l in 0..3 {
            out.add_product(&a.0[l][i], &grad_v.0[i][l]);
        }
    }
    out
}

/// Flow map stored as identity plus a tangentially periodic displacement.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowMap {
    pub displacement: VectorField,
}

impl FlowMap {
    pub fn identity(grid: &Grid) -> Self {
        Self { displacement: VectorField::zeros(grid) }
    }

    pub fn from_displacement(displacement: VectorField) -> Self {
        Self { displacement }
    }

    /// Builds a map from the full coordinates `η(y)` by subtracting `y`.
    pub fn from_fn(grid: &Grid, f: impl Fn(f64, f64, f64) -> [f64; 3] + Sync + Send) -> Self {
        let displacement = VectorField::from_fn(grid, |a, b, c| {
            let e = f(a, b, c);
            [e[0] - a, e[1] - b, e[2] - c]
        });
        Self { displacement }
    }

    pub fn grid(&self) -> &Grid {
        self.displacement.grid()
    }

    /// Full coordinate field `η = y + displacement`.
    pub fn coordinates(&self) -> VectorField {
        let g = self.grid();
        let mut out = self.displacement.clone();
        for idx in 0..g.len() {
            let y = g.coords(idx);
            for i in 0..3 {
                out[i][idx] += y[i];
            }
        }
        out
    }
}

/// One instant of the Lagrangian unknowns.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowState {
    pub t: f64,
    pub eta: FlowMap,
    pub v: VectorField,
    pub h: ScalarField,
    /// `F.0[i][j] = 𝔉^i_j = (F⁰_j·∂)η^i`; column `j` is `𝔉_j`.
    pub f: Tensor2Field,
}

impl FlowState {
    /// Rest state: identity map, no velocity, no enthalpy, `𝔉 = F⁰`.
    pub fn rest(f0: &ReferenceDeformation) -> Self {
        let g = f0.grid();
        Self {
            t: 0.0,
            eta: FlowMap::identity(g),
            v: VectorField::zeros(g),
            h: ScalarField::zeros(g),
            f: f0.f0.clone(),
        }
    }

    pub fn grid(&self) -> &Grid {
        self.h.grid()
    }

    pub fn is_finite(&self) -> bool {
        self.eta.displacement.is_finite() && self.v.is_finite() && self.h.is_finite() && self.f.is_finite()
    }

    /// `self += s * rate` (time is advanced by `s`).
    pub fn axpy(&mut self, s: f64, rate: &crate::evolve::Rates) {
        self.t += s;
        self.eta.displacement.axpy(s, &rate.eta);
        self.v.axpy(s, &rate.v);
        self.h.axpy(s, &rate.h);
        self.f.axpy(s, &rate.f);
    }

    /// Largest componentwise difference between two states.
    pub fn max_diff(&self, other: &Self) -> f64 {
        self.eta
            .displacement
            .sub(&other.eta.displacement)
            .max_abs()
            .max(self.v.sub(&other.v).max_abs())
            .max(self.h.sub(&other.h).max_abs())
            .max(self.f.sub(&other.f).max_abs())
    }
}

/// Reference deformation `F⁰` whose columns transport the deformation tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct ReferenceDeformation {
    /// `f0.0[k][j] = F⁰_{kj}`; column `j` is `F⁰_j`.
    pub f0: Tensor2Field,
}

impl ReferenceDeformation {
    pub fn zero(grid: &Grid) -> Self {
        Self { f0: Tensor2Field::zeros(grid) }
    }

    pub fn new(f0: Tensor2Field) -> Self {
        Self { f0 }
    }

    pub fn grid(&self) -> &Grid {
        self.f0.grid()
    }

    pub fn column(&self, j: usize) -> VectorField {
        self.f0.column(j)
    }

    /// True if every entry vanishes identically (skips elastic work).
    pub fn is_zero(&self) -> bool {
        self.f0.max_abs() == 0.0
    }

    /// Dealiased directional derivative `P[(F⁰_j·∂) f]` used by the evolution.
    pub fn apply(&self, j: usize, f: &ScalarField) -> ScalarField {
        self.apply_from_gradient(j, &gradient(f))
    }

    pub(crate) fn apply_from_gradient(&self, j: usize, grad: &[ScalarField; 3]) -> ScalarField {
        let mut out = ScalarField::zeros(grad[0].grid());
        for k in 0..3 {
            out.add_product(&self.f0.0[k][j], &grad[k]);
        }
        dealias(&out)
    }

    /// `𝔉^i_j = P[(F⁰_j·∂) η^i]` for the flow map (identity included).
    pub fn transport(&self, eta: &FlowMap) -> Tensor2Field {
        let grad = flow_gradient(eta);
        let mut out = Tensor2Field::zeros(self.grid());
        for i in 0..3 {
            let gi: [ScalarField; 3] = grad.0[i].clone();
            for j in 0..3 {
                out.0[i][j] = self.apply_from_gradient(j, &gi);
            }
        }
        out
    }

    /// `max_{k,j} |F⁰_{3j}|` on the plates (0 in torus mode).
    pub fn normal_trace(&self) -> f64 {
        (0..3).map(|j| self.f0.0[2][j].max_abs_boundary()).fold(0.0, f64::max)
    }

    /// `max_j ‖div F⁰_j + e′(h)(F⁰_j·∂)h‖_∞` for a given enthalpy.
    pub fn divergence_defect(&self, h: &ScalarField, eprime: &ScalarField) -> f64 {
        let gh = gradient(h);
        (0..3)
            .map(|j| {
                let mut div = ScalarField::zeros(self.grid());
                for k in 0..3 {
                    div.axpy(1.0, &partial(&self.f0.0[k][j], k));
                }
                let dh = directional_from_gradient(&self.column(j), &gh);
                div.add_product(eprime, &dh);
                div.max_abs()
            })
            .fold(0.0, f64::max)
    }
}

/// Per-node 3×3 matrix view for dense linear algebra.
pub fn matrix_at(t: &Tensor2Field, idx: usize) -> Matrix3<f64> {
    let m = t.at(idx);
    Matrix3::from_fn(|r, c| m[r][c])
}
