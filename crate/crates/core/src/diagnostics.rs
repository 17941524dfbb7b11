//! Energies, constraint residuals, monitors and derived fields.
//!
//! All volume norms use trapezoid weights in `y3` (uniform weights in torus
//! mode) and plain sums in `y1`, `y2`. The discrete Sobolev norm of order `s`
//! is
//!
//! ```text
//! ‖f‖_s² = Σ_{|α| ≤ s} ‖∂^α f‖²_{ℓ²}
//! ```
//!
//! over *unordered* multi-indices (so `∂_1∂_2 f` is counted once), with
//! spectral tangential and finite-difference normal derivatives.

use rustfft::num_complex::Complex64;
use serde::Serialize;

use crate::eos::EquationOfState;
use crate::error::{Error, Result};
use crate::evolve::{rhs, Model, Rates};
use crate::field::{tangential_multipliers, ScalarField, VectorField};
use crate::geometry::{
    dealias, eulerian_divergence, gradient, normal_derivative, partial, piola_residual, vector_gradient, FlowMap, FlowState,
    ReferenceDeformation,
};
use crate::grid::Grid;
use crate::smoothing::{smooth_flowmap, GeometryCache, MollifierKernel};

/// Highest derivative order accepted by [`energy_functional`].
pub const MAX_FUNCTIONAL_ORDER: usize = 2;

// ---------------------------------------------------------------------------
// Physical energy

/// Kinetic, elastic and internal energy of the pulled-back fields.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PhysicalEnergy {
    pub kinetic: f64,
    pub elastic: f64,
    pub internal: f64,
    pub total: f64,
}

/// `½∫ρ|v|²J`, `½∫ρ|𝔉|²J`, `∫ρQ(ρ)J` with `ρ = exp(e(h))`.
pub fn physical_energy(state: &FlowState, geo: &GeometryCache, eos: &EquationOfState) -> PhysicalEnergy {
    let jac = geo.jac();
    let rho_j = state.h.map(|h| eos.rho(h)).mul(jac);
    let mut v2 = ScalarField::zeros(state.grid());
    for i in 0..3 {
        v2.add_product(&state.v[i], &state.v[i]);
    }
    let mut f2 = ScalarField::zeros(state.grid());
    for row in &state.f.0 {
        for c in row {
            f2.add_product(c, c);
        }
    }
    let kinetic = 0.5 * v2.mul(&rho_j).integrate();
    let elastic = 0.5 * f2.mul(&rho_j).integrate();
    let internal = state.h.map(|h| eos.internal(h)).mul(&rho_j).integrate();
    PhysicalEnergy { kinetic, elastic, internal, total: kinetic + elastic + internal }
}

// ---------------------------------------------------------------------------
// Discrete Sobolev norms

/// Unordered multi-indices of order exactly `s` over three axes.
fn multi_indices(s: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, left: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if left == 0 {
            out.push(cur.clone());
            return;
        }
        for l in start..3 {
            cur.push(l);
            rec(l, left - 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, s, &mut Vec::new(), &mut out);
    out
}

fn l2_sq(f: &ScalarField) -> f64 {
    f.mul(f).integrate()
}

/// `‖f‖_s²` as defined in the module documentation.
pub fn sobolev_sq(f: &ScalarField, s: usize) -> f64 {
    shifted_sobolev_sq(f, s, None)
}

/// `‖f‖_s` for a vector field (components summed in squares).
pub fn sobolev_vec(v: &VectorField, s: usize) -> f64 {
    v.0.iter().map(|c| sobolev_sq(c, s)).sum::<f64>().sqrt()
}

/// Sobolev norm of `base + u` where `base` is the coordinate `y_axis`: the
/// zeroth-order term uses the full coordinate, first derivatives add
/// `δ_{l,axis}`, higher ones see only `u`.
fn shifted_sobolev_sq(u: &ScalarField, s: usize, axis: Option<usize>) -> f64 {
    let g = u.grid();
    let mut total = 0.0;
    let mut level: Vec<(Vec<usize>, ScalarField)> = vec![(Vec::new(), u.clone())];
    for order in 0..=s {
        if order > 0 {
            let mut next = Vec::new();
            for (idx, f) in &level {
                let start = idx.last().copied().unwrap_or(0);
                for l in start..3 {
                    let mut ni = idx.clone();
                    ni.push(l);
                    next.push((ni, partial(f, l)));
                }
            }
            level = next;
        }
        for (idx, f) in &level {
            let term = match (axis, idx.len()) {
                (Some(a), 0) => {
                    let coord = ScalarField::from_fn(g, move |y1, y2, y3| [y1, y2, y3][a]);
                    l2_sq(&f.add(&coord))
                }
                (Some(a), 1) if idx[0] == a => l2_sq(&f.map(|x| x + 1.0)),
                _ => l2_sq(f),
            };
            total += term;
        }
    }
    debug_assert_eq!(level.len(), multi_indices(s).len());
    total
}

/// `‖η‖_s` of a flow map, identity included.
pub fn flowmap_sobolev(eta: &FlowMap, s: usize) -> f64 {
    (0..3).map(|i| shifted_sobolev_sq(&eta.displacement[i], s, Some(i))).sum::<f64>().sqrt()
}

// ---------------------------------------------------------------------------
// Energy functional

/// Time derivatives `∂_t^k` of `(η, v, h)` for `k = 0..=order`.
#[derive(Clone, Debug)]
pub struct TimeDerivatives {
    pub eta: Vec<VectorField>,
    pub v: Vec<VectorField>,
    pub h: Vec<ScalarField>,
}

impl TimeDerivatives {
    /// Derivatives from the equations: first from the right-hand side, the
    /// second as a centred difference of the right-hand side along the first.
    pub fn compute(state: &FlowState, model: &Model, order: usize) -> Result<Self> {
        if order > MAX_FUNCTIONAL_ORDER {
            return Err(Error::Unsupported(format!("{order} time derivatives")));
        }
        let mut out = Self { eta: vec![state.eta.displacement.clone()], v: vec![state.v.clone()], h: vec![state.h.clone()] };
        if order == 0 {
            return Ok(out);
        }
        let geo = model.geometry(state)?;
        let r1 = rhs(state, &geo, &model.f0, &model.eos)?;
        if order >= 2 {
            let scale = r1.v.max_abs().max(r1.h.max_abs()).max(r1.eta.max_abs()).max(1.0);
            let delta = 1e-4 / scale;
            let shifted = |s: f64| -> Result<Rates> {
                let mut y = state.clone();
                y.axpy(s, &r1);
                rhs(&y, &model.geometry(&y)?, &model.f0, &model.eos)
            };
            let (rp, rm) = (shifted(delta)?, shifted(-delta)?);
            let c = 0.5 / delta;
            out.eta.push(r1.eta.clone());
            out.v.push(r1.v.clone());
            out.h.push(r1.h.clone());
            out.eta.push(rp.eta.sub(&rm.eta).scale(c));
            out.v.push(rp.v.sub(&rm.v).scale(c));
            out.h.push(rp.h.sub(&rm.h).scale(c));
        } else {
            out.eta.push(r1.eta);
            out.v.push(r1.v);
            out.h.push(r1.h);
        }
        Ok(out)
    }

    pub fn order(&self) -> usize {
        self.v.len() - 1
    }
}

/// One labelled term of the energy functional.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FunctionalEntry {
    pub label: String,
    /// Row of the full functional this term truncates.
    pub row: usize,
    pub time_order: usize,
    pub space_order: usize,
    /// Power of `e′(h)` multiplying the field.
    pub weight_power: f64,
    /// The (unsquared) norm.
    pub value: f64,
}

/// `(v-weight, F-weight, h-weight)` powers of `e′` for rows 0‥4.
const ROW_WEIGHTS: [(f64, f64, f64); 5] = [(0.0, 0.0, 0.0), (0.0, 0.0, 0.0), (0.0, 0.0, 0.5), (0.5, 0.5, 1.0), (1.0, 1.0, 1.5)];

/// Energy functional truncated to `max_order` derivatives.
///
/// Row `k` of the full functional carries `k` time derivatives and `4 − k`
/// spatial ones; here it carries `t_k = ⌊k·max_order/4⌋` time derivatives and
/// `max_order − t_k` spatial ones, with the row's `e′` weights unchanged.
/// Row 0 also has the boundary term `|ã^{3i} ∂̄^{max_order} Λ_κ η_i|₀` (slab
/// mode only). Entries are norms, not squares.
pub fn energy_functional(
    state: &FlowState,
    geo: &GeometryCache,
    eos: &EquationOfState,
    f0: &ReferenceDeformation,
    kernel: &MollifierKernel,
    derivs: &TimeDerivatives,
    max_order: usize,
) -> Result<Vec<FunctionalEntry>> {
    if max_order > MAX_FUNCTIONAL_ORDER {
        return Err(Error::Unsupported(format!("energy functional of order {max_order} (at most {MAX_FUNCTIONAL_ORDER})")));
    }
    let need = max_order;
    if derivs.order() < need {
        return Err(Error::Config(format!("energy functional of order {max_order} needs {need} time derivatives, got {}", derivs.order())));
    }
    let de = eos.de_field(&state.h);
    let weighted = |f: &ScalarField, p: f64| -> ScalarField {
        if p == 0.0 {
            f.clone()
        } else {
            f.zip_map(&de, |x, d| x * d.powf(p))
        }
    };
    let mut out = Vec::new();
    let mut push = |label: &str, row: usize, t: usize, s: usize, p: f64, value: f64| {
        out.push(FunctionalEntry { label: format!("r{row}.{label}"), row, time_order: t, space_order: s, weight_power: p, value });
    };
    for (row, &(wv, wf, wh)) in ROW_WEIGHTS.iter().enumerate() {
        let t = row * max_order / 4;
        let s = max_order - t;
        let vk = &derivs.v[t];
        let hk = &derivs.h[t];
        let nv = vk.0.iter().map(|c| sobolev_sq(&weighted(c, wv), s)).sum::<f64>().sqrt();
        // Σ_j ‖(F⁰_j·∂) ∂_t^t η‖_s²; for t = 0 this is the transported 𝔉 with identity.
        let mut nf2 = 0.0;
        if !f0.is_zero() {
            for j in 0..3 {
                for i in 0..3 {
                    let d = if t == 0 {
                        // (F⁰_j·∂)η^i = F⁰_{ij} + (F⁰_j·∂)u^i.
                        f0.apply(j, &derivs.eta[0][i]).add(&f0.f0.0[i][j])
                    } else {
                        f0.apply(j, &derivs.eta[t][i])
                    };
                    nf2 += sobolev_sq(&weighted(&d, wf), s);
                }
            }
        }
        let nh = sobolev_sq(&weighted(hk, wh), s).sqrt();
        if row == 0 {
            push("eta", row, 0, s, 0.0, flowmap_sobolev(&state.eta, s));
        }
        push("v", row, t, s, wv, nv);
        push("Feta", row, t, s, wf, nf2.sqrt());
        push("h", row, t, s, wh, nh);
        if row == 0 && state.grid().is_slab() {
            push("boundary", row, 0, max_order, 0.0, boundary_term(state, geo, kernel, max_order));
        }
    }
    Ok(out)
}

/// `|ã^{3i} ∂̄^s Λ_κ η_i|₀` over both plates (all tangential derivatives of
/// order exactly `s`, identity included at `s ≤ 1`).
fn boundary_term(state: &FlowState, geo: &GeometryCache, kernel: &MollifierKernel, s: usize) -> f64 {
    let g = state.grid();
    let a = geo.a_tilde();
    let smoothed: [ScalarField; 3] = std::array::from_fn(|i| kernel.mollify(&state.eta.displacement[i]));
    // Tangential multi-indices of order s: (a1, a2) with a1 + a2 = s.
    let mut total = 0.0;
    for a1 in 0..=s {
        let a2 = s - a1;
        let mut contraction = ScalarField::zeros(g);
        for i in 0..3 {
            let mut d = smoothed[i].clone();
            for _ in 0..a1 {
                d = partial(&d, 0);
            }
            for _ in 0..a2 {
                d = partial(&d, 1);
            }
            // Identity part: y_i itself (s = 0) or δ-derivatives (s = 1).
            let id = ScalarField::from_fn(g, move |y1, y2, y3| match (s, a1, i) {
                (0, _, _) => [y1, y2, y3][i],
                (1, 1, 0) | (1, 0, 1) => 1.0,
                _ => 0.0,
            });
            contraction.add_product(&a.0[2][i], &d.add(&id));
        }
        total += plate_l2_sq(&contraction);
    }
    total.sqrt()
}

/// `Σ_plates Σ_{y1,y2} |f|² ΔA`.
fn plate_l2_sq(f: &ScalarField) -> f64 {
    let g = f.grid();
    let top = g.n3() - 1;
    let sq = |p: &[f64]| p.iter().map(|x| x * x).sum::<f64>();
    (sq(f.plane(0)) + sq(f.plane(top))) * g.cell_area()
}

// ---------------------------------------------------------------------------
// Rayleigh–Taylor sign

/// `min_Γ (−∂h/∂N)` over both plates, with `N = ±e₃` and one-sided
/// fourth-order normal derivatives.
pub fn taylor_sign_min(h: &ScalarField) -> Option<f64> {
    let g = h.grid();
    if !g.is_slab() {
        return None;
    }
    let d3 = normal_derivative(h);
    let top = g.n3() - 1;
    let bottom = d3.plane(0).iter().copied().fold(f64::INFINITY, f64::min);
    let upper = d3.plane(top).iter().map(|x| -x).fold(f64::INFINITY, f64::min);
    Some(bottom.min(upper))
}

/// Emits one warning each time the Taylor-sign minimum drops below `c0/2`.
#[derive(Clone, Debug)]
pub struct TaylorMonitor {
    pub c0: f64,
    below: bool,
    pub warnings: usize,
}

impl TaylorMonitor {
    pub fn new(c0: f64) -> Self {
        Self { c0, below: false, warnings: 0 }
    }

    /// Feeds one sample; returns `true` if this sample triggered a warning.
    pub fn observe(&mut self, t: f64, taylor_min: f64) -> bool {
        let below = taylor_min < 0.5 * self.c0;
        let fire = below && !self.below;
        if fire {
            self.warnings += 1;
            log::warn!("Rayleigh–Taylor sign weakened at t = {t:.6}: min(−∂h/∂N) = {taylor_min:.4e} < c0/2 = {:.4e}", 0.5 * self.c0);
        }
        self.below = below;
        fire
    }
}

// ---------------------------------------------------------------------------
// Constraint residuals

/// Max-norms of the propagated constraints.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct ConstraintResiduals {
    /// `‖𝔉 − (F⁰·∂)η‖`.
    pub f_identity: f64,
    /// Interior `‖div_ã 𝔉_j + e′(h)(F⁰_j·∂)h − ∫₀ᵗ(correction)‖`.
    pub div_f: f64,
    /// Same without the correction integral.
    pub div_f_uncorrected: f64,
    /// Interior `‖div_ã v + e′(h)∂_t h‖`.
    pub div_v: f64,
    /// `‖∂_l A^{li}‖`.
    pub piola: f64,
}

/// Time integral of the smoothing correction in the deformation-divergence
/// identity, accumulated with the trapezoid rule over accepted steps.
#[derive(Clone, Debug)]
pub struct CorrectionIntegral {
    last: Option<(f64, [ScalarField; 3])>,
    acc: [ScalarField; 3],
}

impl CorrectionIntegral {
    pub fn new(grid: &Grid) -> Self {
        Self { last: None, acc: std::array::from_fn(|_| ScalarField::zeros(grid)) }
    }

    /// Adds the integrand at time `t` (must be called in increasing time).
    pub fn push(&mut self, t: f64, integrand: [ScalarField; 3]) {
        if let Some((t0, prev)) = &self.last {
            let w = 0.5 * (t - t0);
            for j in 0..3 {
                self.acc[j].axpy(w, &prev[j]);
                self.acc[j].axpy(w, &integrand[j]);
            }
        }
        self.last = Some((t, integrand));
    }

    pub fn value(&self) -> &[ScalarField; 3] {
        &self.acc
    }
}

/// Integrand of the correction for each column `j`:
///
/// ```text
/// div_ã (F⁰_j·∂)ψ − ∇_ã^r 𝔉^i_j ∇_ã^i ∂_tη̃_r + ∇_ã^i (F⁰_j·∂)η̃_r ∇_ã^r v_i
/// ```
///
/// Identically zero (and skipped) when the kernel is the identity.
pub fn correction_integrand(
    state: &FlowState,
    geo: &GeometryCache,
    f0: &ReferenceDeformation,
    kernel: &MollifierKernel,
) -> Result<[ScalarField; 3]> {
    let g = state.grid();
    let zero = || std::array::from_fn(|_| ScalarField::zeros(g));
    if kernel.is_identity() || f0.is_zero() {
        return Ok(zero());
    }
    let a = geo.a_tilde();
    let nabla = |f: &ScalarField| -> [ScalarField; 3] { crate::geometry::eulerian_gradient(a, &gradient(f)) };
    // ∂_t η̃ is the smoothing operator applied to ∂_t η = v + ψ.
    let deta = state.v.add(&geo.psi);
    let deta_tilde = smooth_flowmap(&FlowMap::from_displacement(deta), kernel)?.displacement;
    let grad_dt: Vec<[ScalarField; 3]> = (0..3).map(|r| nabla(&deta_tilde[r])).collect();
    let grad_v: Vec<[ScalarField; 3]> = (0..3).map(|i| nabla(&state.v[i])).collect();
    let diff = geo.eta_tilde.displacement.sub(&state.eta.displacement);
    Ok(std::array::from_fn(|j| {
        let mut out = ScalarField::zeros(g);
        // div_ã (F⁰_j·∂)ψ.
        for i in 0..3 {
            let fp = f0.apply(j, &geo.psi[i]);
            out.axpy(1.0, &nabla(&fp)[i]);
        }
        for r in 0..3 {
            // (F⁰_j·∂)η̃_r = 𝔉^r_j + (F⁰_j·∂)(η̃ − η)_r.
            let ft = state.f.0[r][j].add(&f0.apply(j, &diff[r]));
            let gft = nabla(&ft);
            for i in 0..3 {
                let gfr = nabla(&state.f.0[i][j]);
                out.add_product(&gfr[r], &grad_dt[r][i].scale(-1.0));
                out.add_product(&gft[i], &grad_v[i][r]);
            }
        }
        out
    }))
}

/// Evaluates the propagated constraints at a state.
///
/// `rates` supplies `∂_t h`; `correction` the accumulated integral (ignored if
/// `None`). The divergence residuals are taken over interior nodes only: on
/// the plates the enthalpy equation is replaced by `h = 0`.
pub fn constraint_residuals(
    state: &FlowState,
    geo: &GeometryCache,
    f0: &ReferenceDeformation,
    eos: &EquationOfState,
    rates: &Rates,
    correction: Option<&CorrectionIntegral>,
) -> ConstraintResiduals {
    let de = eos.de_field(&state.h);
    let a = geo.a_tilde();
    let f_identity = state.f.sub(&f0.transport(&state.eta)).max_abs();

    let (mut div_f, mut div_f_uncorrected) = (0.0_f64, 0.0_f64);
    if !f0.is_zero() {
        for j in 0..3 {
            let col = state.f.column(j);
            let mut r = eulerian_divergence(a, &vector_gradient(&col));
            let dh = f0.apply(j, &state.h);
            r.add_product(&de, &dh);
            div_f_uncorrected = div_f_uncorrected.max(r.max_abs_interior());
            if let Some(c) = correction {
                r.axpy(-1.0, &c.value()[j]);
            }
            div_f = div_f.max(r.max_abs_interior());
        }
    }
    let mut dv = dealias(&eulerian_divergence(a, &vector_gradient(&state.v)));
    dv.add_product(&de, &rates.h);
    ConstraintResiduals {
        f_identity,
        div_f,
        div_f_uncorrected,
        div_v: dv.max_abs_interior(),
        piola: piola_residual(&geo.flow.big_a),
    }
}

// ---------------------------------------------------------------------------
// Smallness

/// `‖J̃ − 1‖₁` and `‖Id − ã‖₁`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Smallness {
    pub jac_tilde: f64,
    pub a_tilde: f64,
}

pub fn smallness(geo: &GeometryCache) -> Smallness {
    let jac_tilde = sobolev_sq(&geo.jac_tilde().map(|x| x - 1.0), 1).sqrt();
    let a = geo.a_tilde();
    let mut s = 0.0;
    for l in 0..3 {
        for i in 0..3 {
            let d = if l == i { a.0[l][i].map(|x| x - 1.0) } else { a.0[l][i].clone() };
            s += sobolev_sq(&d, 1);
        }
    }
    Smallness { jac_tilde, a_tilde: s.sqrt() }
}

// ---------------------------------------------------------------------------
// Good unknowns

/// Tangential operator `∂_1^{a1} ∂_2^{a2} Δ̄` used to build good unknowns.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TangentialOperator {
    pub a1: usize,
    pub a2: usize,
}

impl Default for TangentialOperator {
    /// `∂̄²Δ̄` with `∂̄² = ∂_1²`.
    fn default() -> Self {
        Self { a1: 2, a2: 0 }
    }
}

impl TangentialOperator {
    fn multiplier(&self, g: &Grid) -> Vec<Complex64> {
        let m = g.multipliers();
        (0..g.plane_len()).map(|k| m.d1[k].powu(self.a1 as u32) * m.d2[k].powu(self.a2 as u32) * m.lap[k]).collect()
    }

    pub fn apply(&self, f: &ScalarField) -> ScalarField {
        let m = self.multiplier(f.grid());
        tangential_multipliers(f, &[&m]).pop().expect("one output")
    }
}

/// Alinhac good unknowns and the boundary identity residual.
#[derive(Clone, Debug)]
pub struct GoodUnknowns {
    /// `𝐕 = Dv − Dη̃·∇_ã v`.
    pub v: VectorField,
    /// `𝐇 = Dh − Dη̃·∇_ã h`.
    pub h: ScalarField,
    /// `max_Γ |𝐇 − (−∂₃h) ã^{3k} Dη̃_k|`, slab mode only (0 otherwise).
    pub boundary_residual: f64,
}

pub fn good_unknowns(state: &FlowState, geo: &GeometryCache, op: TangentialOperator) -> GoodUnknowns {
    let g = state.grid();
    let a = geo.a_tilde();
    // The identity part of η̃ is annihilated by any operator containing Δ̄.
    let d_eta: [ScalarField; 3] = std::array::from_fn(|r| op.apply(&geo.eta_tilde.displacement[r]));
    let contract = |f: &ScalarField| -> ScalarField {
        let nab = crate::geometry::eulerian_gradient(a, &gradient(f));
        let mut out = ScalarField::zeros(g);
        for r in 0..3 {
            out.add_product(&d_eta[r], &nab[r]);
        }
        out
    };
    let v = VectorField(std::array::from_fn(|i| op.apply(&state.v[i]).sub(&contract(&state.v[i]))));
    let h = op.apply(&state.h).sub(&contract(&state.h));
    let boundary_residual = if g.is_slab() {
        let d3h = normal_derivative(&state.h);
        let mut rhs = ScalarField::zeros(g);
        for k in 0..3 {
            rhs.add_product(&a.0[2][k], &d_eta[k]);
        }
        let rhs = rhs.mul(&d3h).scale(-1.0);
        h.sub(&rhs).max_abs_boundary()
    } else {
        0.0
    };
    GoodUnknowns { v, h, boundary_residual }
}

// ---------------------------------------------------------------------------
// Div–curl report

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DivCurlReport {
    pub norm: f64,
    pub div: f64,
    pub curl: f64,
    /// `|X·n|` on the plates (`n` the Eulerian unit normal), 0 in torus mode.
    pub normal_trace: f64,
}

/// `ℓ²` norms of `X`, `div_ã X`, `curl_ã X` and the boundary normal trace.
pub fn divcurl_report(x: &VectorField, geo: &GeometryCache) -> DivCurlReport {
    let g = x.grid();
    let a = geo.a_tilde();
    let grads: Vec<[ScalarField; 3]> = (0..3).map(|i| crate::geometry::eulerian_gradient(a, &gradient(&x[i]))).collect();
    // grads[i][m] = ∇_ã^m X_i.
    let div = grads[0][0].add(&grads[1][1]).add(&grads[2][2]);
    let curl = [
        grads[2][1].sub(&grads[1][2]),
        grads[0][2].sub(&grads[2][0]),
        grads[1][0].sub(&grads[0][1]),
    ];
    let curl_sq: f64 = curl.iter().map(l2_sq).sum();
    let normal_trace = if g.is_slab() {
        let mut xn = ScalarField::zeros(g);
        let mut norm2 = ScalarField::zeros(g);
        for i in 0..3 {
            xn.add_product(&a.0[2][i], &x[i]);
            norm2.add_product(&a.0[2][i], &a.0[2][i]);
        }
        let xn = xn.zip_map(&norm2, |p, q| p / q.sqrt());
        plate_l2_sq(&xn).sqrt()
    } else {
        0.0
    };
    DivCurlReport { norm: x.0.iter().map(l2_sq).sum::<f64>().sqrt(), div: l2_sq(&div).sqrt(), curl: curl_sq.sqrt(), normal_trace }
}

// ---------------------------------------------------------------------------
// Per-step report

/// One row of the time series.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EnergyReport {
    pub t: f64,
    pub dt: f64,
    pub energy: PhysicalEnergy,
    pub functional: Vec<FunctionalEntry>,
    pub taylor_min: Option<f64>,
    pub smallness: Smallness,
    pub residuals: ConstraintResiduals,
}

impl EnergyReport {
    /// Column names (functional labels are taken from this report).
    pub fn header(&self) -> Vec<String> {
        let mut h: Vec<String> = [
            "t", "dt", "kinetic", "elastic", "internal", "total", "taylor_min", "jac_tilde_dev", "a_tilde_dev", "f_identity",
            "div_f", "div_f_uncorrected", "div_v", "piola",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        h.extend(self.functional.iter().map(|e| format!("E.{}", e.label)));
        h
    }

    pub fn record(&self) -> Vec<String> {
        let e = &self.energy;
        let r = &self.residuals;
        let mut out: Vec<f64> = vec![
            self.t,
            self.dt,
            e.kinetic,
            e.elastic,
            e.internal,
            e.total,
            self.taylor_min.unwrap_or(f64::NAN),
            self.smallness.jac_tilde,
            self.smallness.a_tilde,
            r.f_identity,
            r.div_f,
            r.div_f_uncorrected,
            r.div_v,
            r.piola,
        ];
        out.extend(self.functional.iter().map(|e| e.value));
        out.iter().map(|x| format!("{x:e}")).collect()
    }
}
