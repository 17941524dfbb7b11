//! The 13-component symmetric hyperbolic form of the smoothed system,
//!
//! ```text
//! A0 ∂_t X + A_l ∂_l X = f,   X = [h, v, 𝔉¹, 𝔉², 𝔉³],
//! ```
//!
//! where block `𝔉^i` holds `(𝔉^i_1, 𝔉^i_2, 𝔉^i_3)`, i.e. `𝔉^i_j` sits at
//! index `4 + 3i + j` (zero-based `i`, `j`). `A0 = diag(e′(h̊), 1, …, 1)`; `A_l`
//! couples `h` with `v_i` through `ã^{li}` and `v_i` with `𝔉^i_j` through
//! `−F⁰_{lj}`. Coefficients are stored as fields and expanded to dense
//! matrices only on request.

use nalgebra::{SMatrix, SVector};

use crate::eos::EquationOfState;
use crate::field::{ScalarField, Tensor2Field};
use crate::geometry::{gradient, FlowState, ReferenceDeformation};
use crate::par;
use crate::smoothing::GeometryCache;

pub const NCOMP: usize = 13;

pub type Mat13 = SMatrix<f64, NCOMP, NCOMP>;
pub type Vec13 = SVector<f64, NCOMP>;

/// Position of `𝔉^i_j` in the state vector (zero-based `i`, `j`).
pub const fn f_index(i: usize, j: usize) -> usize {
    4 + 3 * i + j
}

/// Concatenated unknowns, one field per component.
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector13 {
    pub comps: Vec<ScalarField>,
}

impl StateVector13 {
    pub fn pack(state: &FlowState) -> Self {
        let mut comps = Vec::with_capacity(NCOMP);
        comps.push(state.h.clone());
        comps.extend(state.v.0.iter().cloned());
        for i in 0..3 {
            for j in 0..3 {
                comps.push(state.f.0[i][j].clone());
            }
        }
        Self { comps }
    }

    /// Writes `h`, `v`, `𝔉` back into a state (the flow map is untouched).
    pub fn unpack_into(&self, state: &mut FlowState) {
        state.h = self.comps[0].clone();
        for i in 0..3 {
            state.v[i] = self.comps[1 + i].clone();
            for j in 0..3 {
                state.f.0[i][j] = self.comps[f_index(i, j)].clone();
            }
        }
    }

    pub fn at(&self, idx: usize) -> Vec13 {
        Vec13::from_fn(|c, _| self.comps[c][idx])
    }

    pub fn axpy(&mut self, s: f64, x: &Self) {
        for (a, b) in self.comps.iter_mut().zip(&x.comps) {
            a.axpy(s, b);
        }
    }
}

/// `A0`, `A_l`, `f` of the system, kept in factored field form.
#[derive(Clone, Debug)]
pub struct HyperbolicCoefficients {
    /// `e′(h̊)` per node (the only non-unit entry of `A0`).
    pub a0_h: ScalarField,
    /// `ã^{li}` from the smoothed geometry.
    pub a_tilde: Tensor2Field,
    /// `F⁰_{lj}`.
    pub f0: Tensor2Field,
    /// Source entries `f[𝔉^i_j] = (F⁰_j·∂)ψ_i`, indexed `[i][j]`.
    pub source: Tensor2Field,
}

/// Builds the coefficients at a state. `A0` uses `e′` of the state's enthalpy.
pub fn assemble_coefficients(
    state: &FlowState,
    geo: &GeometryCache,
    f0: &ReferenceDeformation,
    eos: &EquationOfState,
) -> HyperbolicCoefficients {
    let g = state.grid();
    let mut source = Tensor2Field::zeros(g);
    if !f0.is_zero() && geo.psi.max_abs() > 0.0 {
        for i in 0..3 {
            let gp = gradient(&geo.psi[i]);
            for j in 0..3 {
                source.0[i][j] = f0.apply_from_gradient(j, &gp);
            }
        }
    }
    HyperbolicCoefficients {
        a0_h: eos.de_field(&state.h),
        a_tilde: geo.a_tilde().clone(),
        f0: f0.f0.clone(),
        source,
    }
}

impl HyperbolicCoefficients {
    pub fn a0_at(&self, idx: usize) -> Mat13 {
        let mut m = Mat13::identity();
        m[(0, 0)] = self.a0_h[idx];
        m
    }

    /// Dense `A_l` (`l` zero-based) at one node.
    pub fn al_at(&self, l: usize, idx: usize) -> Mat13 {
        let mut m = Mat13::zeros();
        for i in 0..3 {
            let a = self.a_tilde.0[l][i][idx];
            m[(0, 1 + i)] = a;
            m[(1 + i, 0)] = a;
            for j in 0..3 {
                let c = -self.f0.0[l][j][idx];
                m[(1 + i, f_index(i, j))] = c;
                m[(f_index(i, j), 1 + i)] = c;
            }
        }
        m
    }

    /// Normal matrix `A_N = Σ_l A_l N_l` at one node.
    pub fn normal_matrix_at(&self, n: [f64; 3], idx: usize) -> Mat13 {
        (0..3).fold(Mat13::zeros(), |acc, l| acc + self.al_at(l, idx) * n[l])
    }

    pub fn source_at(&self, idx: usize) -> Vec13 {
        let mut f = Vec13::zeros();
        for i in 0..3 {
            for j in 0..3 {
                f[f_index(i, j)] = self.source.0[i][j][idx];
            }
        }
        f
    }

    /// `∂_t X = A0⁻¹ (f − Σ_l A_l ∂_l X)` with the coefficients frozen.
    pub fn time_derivative(&self, x: &StateVector13) -> StateVector13 {
        let grads: Vec<[ScalarField; 3]> = par::map_range(NCOMP, |c| gradient(&x.comps[c]));
        let g = x.comps[0].grid().clone();
        let n = g.len();
        let mut out = StateVector13 { comps: (0..NCOMP).map(|_| ScalarField::zeros(&g)).collect() };
        for idx in 0..n {
            let mut r = self.source_at(idx);
            for l in 0..3 {
                // Sparse A_l ∂_l X.
                let dx = |c: usize| grads[c][l][idx];
                for i in 0..3 {
                    let a = self.a_tilde.0[l][i][idx];
                    r[0] -= a * dx(1 + i);
                    r[1 + i] -= a * dx(0);
                    for j in 0..3 {
                        let c = -self.f0.0[l][j][idx];
                        r[1 + i] -= c * dx(f_index(i, j));
                        r[f_index(i, j)] -= c * dx(1 + i);
                    }
                }
            }
            r[0] /= self.a0_h[idx];
            for c in 0..NCOMP {
                out.comps[c][idx] = r[c];
            }
        }
        out
    }

    /// `∫ Xᵀ A0 X`.
    pub fn quadratic_form(&self, x: &StateVector13) -> f64 {
        let mut total = x.comps[0].mul(&x.comps[0]).mul(&self.a0_h).integrate();
        for c in &x.comps[1..] {
            total += c.mul(c).integrate();
        }
        total
    }
}

/// Classical RK4 step of the frozen-coefficient linear system.
pub fn linear_rk4_step(coeffs: &HyperbolicCoefficients, x: &StateVector13, dt: f64) -> StateVector13 {
    let k1 = coeffs.time_derivative(x);
    let mut y = x.clone();
    y.axpy(0.5 * dt, &k1);
    let k2 = coeffs.time_derivative(&y);
    let mut y = x.clone();
    y.axpy(0.5 * dt, &k2);
    let k3 = coeffs.time_derivative(&y);
    let mut y = x.clone();
    y.axpy(dt, &k3);
    let k4 = coeffs.time_derivative(&y);
    let mut out = x.clone();
    out.axpy(dt / 6.0, &k1);
    out.axpy(dt / 3.0, &k2);
    out.axpy(dt / 3.0, &k3);
    out.axpy(dt / 6.0, &k4);
    out
}
