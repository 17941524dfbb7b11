//! Method-of-lines evolution of the smoothed system
//!
//! ```text
//! ∂_t η = v + ψ
//! ∂_t v = −∇_ã h + Σ_j (F⁰_j·∂) 𝔉_j
//! e′(h) ∂_t h = −div_ã v
//! ∂_t 𝔉_j = (F⁰_j·∂)(v + ψ)
//! ```
//!
//! with `h = 0` on the plates in slab mode. Every nonlinear product is
//! dealiased with the 2/3 rule. The production integrator is classical RK4
//! with geometry refreshed at every stage; [`picard_solve`] integrates the
//! same system as a sequence of linear problems with frozen coefficients.

use nalgebra::Matrix3;
use rustfft::num_complex::Complex64;

use crate::eos::EquationOfState;
use crate::error::{Error, Result};
use crate::field::{apply_multiplier_many, ScalarField, Tensor2Field, VectorField};
use crate::geometry::{dealias_many, gradient, FlowMap, FlowState, ReferenceDeformation};
use crate::grid::{signed_wavenumber, Grid};
use crate::smoothing::{GeometryCache, MollifierKernel};

/// Time derivatives of every unknown.
#[derive(Clone, Debug)]
pub struct Rates {
    pub eta: VectorField,
    pub v: VectorField,
    pub h: ScalarField,
    pub f: Tensor2Field,
}

/// Everything besides the state that the right-hand side depends on.
#[derive(Clone, Debug)]
pub struct Model {
    pub f0: ReferenceDeformation,
    pub eos: EquationOfState,
    pub kernel: MollifierKernel,
    pub jac_floor: f64,
    /// Apply the mild high-mode filter after every step.
    pub filter: bool,
}

impl Model {
    pub fn new(f0: ReferenceDeformation, eos: EquationOfState, kernel: MollifierKernel) -> Self {
        Self { f0, eos, kernel, jac_floor: crate::geometry::DEFAULT_JAC_FLOOR, filter: false }
    }

    /// Geometry of a state; degenerate maps report the state's time.
    pub fn geometry(&self, state: &FlowState) -> Result<GeometryCache> {
        GeometryCache::new(&state.eta, &state.v, &self.kernel, self.jac_floor).map_err(|e| match e {
            Error::DegenerateMap { min_jacobian, floor, .. } => Error::DegenerateMap { t: state.t, min_jacobian, floor },
            other => other,
        })
    }
}

/// Right-hand side of the nonlinear smoothed system at `state`.
pub fn rhs(state: &FlowState, geo: &GeometryCache, f0: &ReferenceDeformation, eos: &EquationOfState) -> Result<Rates> {
    linearized_rhs(state, &state.h, geo, f0, eos)
}

/// Right-hand side with the coefficients `(ã, e′(h̊), ψ)` taken from `geo`
/// and `h_coef`; the unknowns enter linearly.
pub fn linearized_rhs(
    state: &FlowState,
    h_coef: &ScalarField,
    geo: &GeometryCache,
    f0: &ReferenceDeformation,
    eos: &EquationOfState,
) -> Result<Rates> {
    let g = state.grid().clone();
    let de = eos.de_field(h_coef);
    if let Some(bad) = de.as_slice().iter().find(|&&d| !(d > 0.0) || !d.is_finite()) {
        return Err(Error::EosRange(format!("e′ = {bad:.4e} is not a positive finite number")));
    }
    let a = geo.a_tilde();
    let psi = &geo.psi;
    let has_psi = psi.max_abs() > 0.0;
    let elastic = !f0.is_zero();

    let gh = gradient(&state.h);
    let gv: [[ScalarField; 3]; 3] = std::array::from_fn(|i| gradient(&state.v[i]));

    // Momentum and continuity products, dealiased together.
    let mut mom: [ScalarField; 3] = std::array::from_fn(|_| ScalarField::zeros(&g));
    let mut div = ScalarField::zeros(&g);
    for i in 0..3 {
        for l in 0..3 {
            mom[i].add_product(&a.0[l][i], &gh[l]);
            div.add_product(&a.0[l][i], &gv[i][l]);
        }
        mom[i] = mom[i].scale(-1.0);
    }
    if elastic {
        for i in 0..3 {
            for j in 0..3 {
                let gf = gradient(&state.f.0[i][j]);
                for k in 0..3 {
                    mom[i].add_product(&f0.f0.0[k][j], &gf[k]);
                }
            }
        }
    }

    // Deformation rates: (F⁰_j·∂)(v + ψ).
    let mut frate: Vec<ScalarField> = Vec::new();
    if elastic {
        for i in 0..3 {
            let gw: [ScalarField; 3] = if has_psi {
                let gp = gradient(&psi[i]);
                std::array::from_fn(|l| gv[i][l].add(&gp[l]))
            } else {
                gv[i].clone()
            };
            for j in 0..3 {
                let mut p = ScalarField::zeros(&g);
                for k in 0..3 {
                    p.add_product(&f0.f0.0[k][j], &gw[k]);
                }
                frate.push(p);
            }
        }
    }

    let mut inputs: Vec<&ScalarField> = vec![&mom[0], &mom[1], &mom[2], &div];
    inputs.extend(frate.iter());
    let mut out = dealias_many(&inputs).into_iter();
    let v_rate = VectorField(std::array::from_fn(|_| out.next().expect("momentum")));
    let div = out.next().expect("divergence");
    let mut f_rate = Tensor2Field::zeros(&g);
    if elastic {
        for i in 0..3 {
            for j in 0..3 {
                f_rate.0[i][j] = out.next().expect("deformation");
            }
        }
    }

    let mut h_rate = match eos {
        EquationOfState::Linear { epsilon } => div.scale(-epsilon),
        _ => {
            let q = div.zip_map(&de, |d, e| -d / e);
            dealias_many(&[&q]).pop().expect("one output")
        }
    };
    h_rate.zero_boundary();

    let eta_rate = if has_psi { state.v.add(psi) } else { state.v.clone() };
    Ok(Rates { eta: eta_rate, v: v_rate, h: h_rate, f: f_rate })
}

/// Largest admissible step: `cfl · min Δy / λ_max` with the node-wise wave
/// speed bound `λ = ‖ã‖₂ / √e′(h) + (Σ_j |F⁰_j|²)^{1/2}`.
pub fn cfl_dt(state: &FlowState, geo: &GeometryCache, f0: &ReferenceDeformation, eos: &EquationOfState, cfl: f64) -> Result<f64> {
    let lam = max_wave_speed(state, geo, f0, eos)?;
    Ok(cfl * state.grid().min_spacing() / lam)
}

/// Node-wise maximum of the wave-speed bound used by [`cfl_dt`].
pub fn max_wave_speed(state: &FlowState, geo: &GeometryCache, f0: &ReferenceDeformation, eos: &EquationOfState) -> Result<f64> {
    let a = geo.a_tilde();
    let de = eos.de_field(&state.h);
    let mut lam: f64 = 0.0;
    for idx in 0..state.grid().len() {
        let d = de[idx];
        if !(d > 0.0) {
            return Err(Error::EosRange(format!("e′ = {d:.4e} admits no finite sound speed")));
        }
        let m = Matrix3::from_fn(|r, c| a.0[r][c][idx]);
        let norm2 = (m.transpose() * m).symmetric_eigenvalues().max().max(0.0).sqrt();
        let elastic: f64 = (0..3).map(|k| (0..3).map(|j| f0.f0.0[k][j][idx].powi(2)).sum::<f64>()).sum::<f64>().sqrt();
        lam = lam.max(norm2 / d.sqrt() + elastic);
    }
    Ok(lam)
}

/// One classical RK4 step of the nonlinear system.
pub fn step_rk4(state: &FlowState, dt: f64, model: &Model) -> Result<FlowState> {
    let geo = model.geometry(state)?;
    step_rk4_from(state, &geo, dt, model)
}

/// RK4 step reusing an already computed geometry of `state`.
pub fn step_rk4_from(state: &FlowState, geo: &GeometryCache, dt: f64, model: &Model) -> Result<FlowState> {
    let eval = |s: &FlowState, g: Option<&GeometryCache>| -> Result<Rates> {
        match g {
            Some(g) => rhs(s, g, &model.f0, &model.eos),
            None => rhs(s, &model.geometry(s)?, &model.f0, &model.eos),
        }
    };
    let k1 = eval(state, Some(geo))?;
    let y1 = stage(state, 0.5 * dt, &k1);
    let k2 = eval(&y1, None)?;
    let y2 = stage(state, 0.5 * dt, &k2);
    let k3 = eval(&y2, None)?;
    let y3 = stage(state, dt, &k3);
    let k4 = eval(&y3, None)?;
    let mut out = state.clone();
    combine(&mut out, dt, [&k1, &k2, &k3, &k4]);
    if model.filter {
        apply_filter(&mut out);
    }
    if !out.is_finite() {
        return Err(Error::NonFinite(format!("state after step to t = {:.6}", out.t)));
    }
    Ok(out)
}

fn stage(base: &FlowState, s: f64, k: &Rates) -> FlowState {
    let mut y = base.clone();
    y.axpy(s, k);
    y.h.zero_boundary();
    y
}

fn combine(out: &mut FlowState, dt: f64, k: [&Rates; 4]) {
    let t0 = out.t;
    for (w, r) in [1.0, 2.0, 2.0, 1.0].iter().zip(k) {
        out.axpy(dt * w / 6.0, r);
    }
    out.t = t0 + dt;
    out.h.zero_boundary();
}

/// Exponential damping of the top third of tangential modes (strength 1e−2).
pub fn apply_filter(state: &mut FlowState) {
    let g = state.grid().clone();
    let m = filter_multiplier(&g, 1e-2);
    let mut fields: Vec<&mut ScalarField> = Vec::new();
    fields.extend(state.eta.displacement.0.iter_mut());
    fields.extend(state.v.0.iter_mut());
    fields.push(&mut state.h);
    fields.extend(state.f.0.iter_mut().flatten());
    let filtered = apply_multiplier_many(&fields.iter().map(|f| &**f).collect::<Vec<_>>(), &m);
    for (f, new) in fields.into_iter().zip(filtered) {
        *f = new;
    }
}

fn filter_multiplier(g: &Grid, strength: f64) -> Vec<Complex64> {
    let (n1, n2) = (g.n1(), g.n2());
    let mut m = vec![Complex64::new(1.0, 0.0); g.plane_len()];
    for m2 in 0..n2 {
        for m1 in 0..n1 {
            let s1 = signed_wavenumber(m1, n1).abs() / (n1 as f64 / 2.0);
            let s2 = signed_wavenumber(m2, n2).abs() / (n2 as f64 / 2.0);
            let s = s1.max(s2);
            if s > 2.0 / 3.0 {
                let x = (s - 2.0 / 3.0) * 3.0;
                m[m2 * n1 + m1] = Complex64::new((-strength * x * x).exp(), 0.0);
            }
        }
    }
    m
}

/// How the step size is chosen.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TimeStep {
    /// Recompute `dt` from the CFL bound every step.
    Cfl(f64),
    /// Fixed step (the last one is shortened to land on the end time).
    Fixed(f64),
}

/// Advances `state` to `t_end`, calling `observe` after every accepted step
/// with the new state, its geometry and the step size.
pub fn evolve_to(
    mut state: FlowState,
    model: &Model,
    t_end: f64,
    step: TimeStep,
    mut observe: impl FnMut(&FlowState, &GeometryCache, f64) -> Result<()>,
) -> Result<FlowState> {
    let mut geo = model.geometry(&state)?;
    let tiny = 1e-12 * t_end.abs().max(1.0);
    while state.t < t_end - tiny {
        let mut dt = match step {
            TimeStep::Cfl(c) => cfl_dt(&state, &geo, &model.f0, &model.eos, c)?,
            TimeStep::Fixed(dt) => dt,
        };
        if state.t + dt > t_end - tiny {
            dt = t_end - state.t;
        }
        let next = step_rk4_from(&state, &geo, dt, model)?;
        state = next;
        geo = model.geometry(&state)?;
        observe(&state, &geo, dt)?;
    }
    Ok(state)
}

/// Outcome of [`picard_solve`].
#[derive(Clone, Debug)]
pub struct PicardOutcome {
    /// Final iterate at every step time, starting with the initial state.
    pub trajectory: Vec<FlowState>,
    /// `sup_t` max-norm difference between consecutive iterates.
    pub differences: Vec<f64>,
    pub iterations: usize,
}

/// Picard iteration: iterate `n+1` integrates the linear system whose
/// coefficients `(ã, e′(h̊), ψ̊)` come from iterate `n`, starting from the
/// trivial trajectory (identity map, no motion, no enthalpy).
///
/// Each linear solve uses RK4 on `steps` equal steps, with the coefficients
/// of each stage taken from the matching stage of the previous iterate; the
/// fixed point is therefore exactly the nonlinear RK4 trajectory.
pub fn picard_solve(initial: &FlowState, model: &Model, t_final: f64, steps: usize, n_max: usize, tol: f64) -> Result<PicardOutcome> {
    let dt = t_final / steps as f64;
    let g = initial.grid().clone();
    let trivial = FlowState {
        t: 0.0,
        eta: FlowMap::identity(&g),
        v: VectorField::zeros(&g),
        h: ScalarField::zeros(&g),
        f: initial.f.clone(),
    };
    // stages[s][k]: coefficient state for stage k of step s.
    let mut stages: Vec<[FlowState; 4]> = (0..steps)
        .map(|s| {
            let t = s as f64 * dt;
            let at = |tt: f64| FlowState { t: tt, ..trivial.clone() };
            [at(t), at(t + 0.5 * dt), at(t + 0.5 * dt), at(t + dt)]
        })
        .collect();
    let mut trajectory: Vec<FlowState> = (0..=steps).map(|s| FlowState { t: s as f64 * dt, ..trivial.clone() }).collect();
    let mut differences = Vec::new();

    for n in 1..=n_max {
        let mut new_traj = Vec::with_capacity(steps + 1);
        let mut new_stages = Vec::with_capacity(steps);
        let mut y = initial.clone();
        y.t = 0.0;
        new_traj.push(y.clone());
        for coef in stages.iter() {
            let lin = |s: &FlowState, c: &FlowState| -> Result<Rates> {
                let geo = model.geometry(c)?;
                linearized_rhs(s, &c.h, &geo, &model.f0, &model.eos)
            };
            let k1 = lin(&y, &coef[0])?;
            let y1 = stage(&y, 0.5 * dt, &k1);
            let k2 = lin(&y1, &coef[1])?;
            let y2 = stage(&y, 0.5 * dt, &k2);
            let k3 = lin(&y2, &coef[2])?;
            let y3 = stage(&y, dt, &k3);
            let k4 = lin(&y3, &coef[3])?;
            let y0 = y.clone();
            combine(&mut y, dt, [&k1, &k2, &k3, &k4]);
            if !y.is_finite() {
                return Err(Error::NonFinite(format!("Picard iterate {n}")));
            }
            new_stages.push([y0, y1, y2, y3]);
            new_traj.push(y.clone());
        }
        let diff = new_traj.iter().zip(&trajectory).map(|(a, b)| a.max_diff(b)).fold(0.0, f64::max);
        differences.push(diff);
        trajectory = new_traj;
        stages = new_stages;
        if diff < tol {
            return Ok(PicardOutcome { trajectory, differences, iterations: n });
        }
    }
    Err(Error::HorizonTooLong { iterations: n_max, last: *differences.last().unwrap_or(&f64::NAN) })
}

/// `max_i ‖ψ‖`-free sanity check used by callers: `∂_tη − v − ψ`.
pub fn flow_map_defect(state: &FlowState, geo: &GeometryCache, rates: &Rates) -> f64 {
    rates.eta.sub(&state.v).sub(&geo.psi).max_abs()
}
