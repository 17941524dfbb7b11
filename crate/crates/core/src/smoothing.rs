//! Tangential mollification and the geometry derived from the smoothed map.
//!
//! `Λ_κ` convolves each y3-plane with a compactly supported bump of radius
//! `κ`. The bump is sampled on the grid and normalised so its samples sum to
//! one, which makes constants exact fixed points. In slab mode the smoothed
//! flow map `η̃` agrees with `Λ_κ²η` on the plates and differs from `η` by a
//! discrete harmonic function inside; `ψ` is the harmonic correction that
//! cancels the boundary terms the smoothing introduces.

use std::f64::consts::PI;

use rustfft::num_complex::Complex64;

use crate::elliptic::{harmonic_extension, inv_tangential_laplacian};
use crate::error::{Error, Result};
use crate::field::{apply_multiplier_many, PlaneField, PlatePair, ScalarField, Tensor2Field, VectorField};
use crate::geometry::{cofactor_from_gradient, flow_gradient, Cofactor, FlowMap};
use crate::grid::Grid;

/// Unnormalised bump `exp(−1/(1 − r²))` on `r < 1`.
pub fn bump(r2: f64) -> f64 {
    if r2 < 1.0 {
        (-1.0 / (1.0 - r2)).exp()
    } else {
        0.0
    }
}

/// Sampled, normalised mollifier and its Fourier multiplier.
#[derive(Clone, Debug)]
pub struct MollifierKernel {
    kappa: f64,
    /// Sum of the raw samples before normalisation.
    normalization: f64,
    /// `ζ̂_κ(k)` per tangential mode (`None` for the identity).
    multiplier: Option<Vec<Complex64>>,
    /// Multiplier of `Λ_κ²`.
    multiplier_sq: Option<Vec<Complex64>>,
}

impl MollifierKernel {
    /// Builds the kernel; `κ = 0` is the identity.
    pub fn new(grid: &Grid, kappa: f64) -> Result<Self> {
        if !(kappa >= 0.0) || !kappa.is_finite() {
            return Err(Error::Config(format!("smoothing length κ = {kappa} must be finite and ≥ 0")));
        }
        if kappa > PI {
            return Err(Error::Config(format!("κ = {kappa} exceeds half the tangential period π")));
        }
        if kappa == 0.0 {
            return Ok(Self { kappa, normalization: 1.0, multiplier: None, multiplier_sq: None });
        }
        let (n1, n2) = (grid.n1(), grid.n2());
        let mut samples = vec![0.0; grid.plane_len()];
        for i2 in 0..n2 {
            let x2 = min_image(grid.y2(i2));
            for i1 in 0..n1 {
                let x1 = min_image(grid.y1(i1));
                samples[i2 * n1 + i1] = bump((x1 * x1 + x2 * x2) / (kappa * kappa));
            }
        }
        let normalization: f64 = samples.iter().sum();
        for s in &mut samples {
            *s /= normalization;
        }
        let mut spec = vec![Complex64::new(0.0, 0.0); grid.plane_len()];
        grid.fft().forward(&samples, &mut spec);
        // The kernel is even, so its transform is real; pin the mean exactly.
        let mut m: Vec<Complex64> = spec.iter().map(|c| Complex64::new(c.re, 0.0)).collect();
        m[0] = Complex64::new(1.0, 0.0);
        let sq = m.iter().map(|c| c * c).collect();
        Ok(Self { kappa, normalization, multiplier: Some(m), multiplier_sq: Some(sq) })
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn is_identity(&self) -> bool {
        self.multiplier.is_none()
    }

    /// Sum of the raw bump samples (the discrete normalisation constant).
    pub fn normalization(&self) -> f64 {
        self.normalization
    }

    /// Real multiplier `ζ̂_κ(k)` of tangential mode `(m1, m2)`.
    pub fn symbol(&self, grid: &Grid, m1: usize, m2: usize) -> f64 {
        match &self.multiplier {
            Some(m) => m[m2 * grid.n1() + m1].re,
            None => 1.0,
        }
    }

    /// `Λ_κ f`, plane by plane.
    pub fn mollify(&self, f: &ScalarField) -> ScalarField {
        match &self.multiplier {
            Some(m) => apply_multiplier_many(&[f], m).pop().expect("one output"),
            None => f.clone(),
        }
    }

    /// `Λ_κ² f`.
    pub fn mollify_twice(&self, f: &ScalarField) -> ScalarField {
        match &self.multiplier_sq {
            Some(m) => apply_multiplier_many(&[f], m).pop().expect("one output"),
            None => f.clone(),
        }
    }

    pub fn mollify_vec_twice(&self, v: &VectorField) -> VectorField {
        match &self.multiplier_sq {
            Some(m) => {
                let mut out = apply_multiplier_many(&[&v[0], &v[1], &v[2]], m).into_iter();
                VectorField(std::array::from_fn(|_| out.next().expect("three outputs")))
            }
            None => v.clone(),
        }
    }

    pub fn mollify_plane(&self, g: &PlaneField) -> PlaneField {
        match &self.multiplier {
            Some(m) => g.apply_multiplier(m),
            None => g.clone(),
        }
    }

    pub fn mollify_plane_twice(&self, g: &PlaneField) -> PlaneField {
        match &self.multiplier_sq {
            Some(m) => g.apply_multiplier(m),
            None => g.clone(),
        }
    }
}

/// Maps a periodic coordinate in `[0, 2π)` to its representative in `[−π, π)`.
fn min_image(y: f64) -> f64 {
    if y >= PI {
        y - 2.0 * PI
    } else {
        y
    }
}

/// `Λ_κ f` for a one-off kernel.
pub fn mollify(f: &ScalarField, kappa: f64) -> Result<ScalarField> {
    Ok(MollifierKernel::new(f.grid(), kappa)?.mollify(f))
}

/// Smoothed flow map `η̃`.
///
/// Slab mode: `η̃ = η + w` with `w` discrete-harmonic and `w = (Λ_κ² − I)η` on
/// the plates. Torus mode (no boundary): `η̃ = Λ_κ²η`.
pub fn smooth_flowmap(eta: &FlowMap, kernel: &MollifierKernel) -> Result<FlowMap> {
    if kernel.is_identity() {
        return Ok(eta.clone());
    }
    let d = &eta.displacement;
    let smoothed = kernel.mollify_vec_twice(d);
    if !eta.grid().is_slab() {
        return Ok(FlowMap::from_displacement(smoothed));
    }
    let mut out = d.clone();
    for i in 0..3 {
        let bc = smoothed[i].sub(&d[i]).boundary();
        let w = harmonic_extension(&bc)?;
        out[i].axpy(1.0, &w);
    }
    Ok(FlowMap::from_displacement(out))
}

/// Plate values of the bracket whose inverse tangential Laplacian gives `ψ`:
/// `Σ_L (Δ̄η_r ã^{Lr} ∂̄_L Λ_κ²v_i − Δ̄Λ_κ²η_r ã^{Lr} ∂̄_L v_i)` for each `i`.
pub fn psi_bracket(eta: &FlowMap, a_tilde: &Tensor2Field, v: &VectorField, kernel: &MollifierKernel) -> [PlatePair; 3] {
    let g = eta.grid();
    let top = g.n3() - 1;
    let plate = |f: &ScalarField, i3: usize| PlaneField::from_vec(g, f.plane(i3).to_vec());
    let m = g.multipliers();
    let per_plate = |i3: usize| -> [PlaneField; 3] {
        let lap_eta: [PlaneField; 3] = std::array::from_fn(|r| plate(&eta.displacement[r], i3).apply_multiplier(&m.lap));
        let lap_eta_s: [PlaneField; 3] = std::array::from_fn(|r| kernel.mollify_plane_twice(&lap_eta[r]));
        std::array::from_fn(|i| {
            let vi = plate(&v[i], i3);
            let vs = kernel.mollify_plane_twice(&vi);
            let dv = [vi.apply_multiplier(&m.d1), vi.apply_multiplier(&m.d2)];
            let dvs = [vs.apply_multiplier(&m.d1), vs.apply_multiplier(&m.d2)];
            let mut out = vec![0.0; g.plane_len()];
            for (l, (dvl, dvsl)) in dv.iter().zip(&dvs).enumerate() {
                for r in 0..3 {
                    let a = &a_tilde.0[l][r].plane(i3);
                    let (le, les) = (lap_eta[r].as_slice(), lap_eta_s[r].as_slice());
                    for (k, o) in out.iter_mut().enumerate() {
                        *o += a[k] * (le[k] * dvsl.as_slice()[k] - les[k] * dvl.as_slice()[k]);
                    }
                }
            }
            PlaneField::from_vec(g, out)
        })
    };
    let [b0, b1, b2] = per_plate(0);
    let [t0, t1, t2] = per_plate(top);
    [
        PlatePair { bottom: b0, top: t0 },
        PlatePair { bottom: b1, top: t1 },
        PlatePair { bottom: b2, top: t2 },
    ]
}

/// Correction `ψ`: harmonic in Ω with plate values `Δ̄⁻¹P_{≠0}` of the bracket.
/// Identically zero in torus mode and for `κ = 0`.
pub fn correction_psi(
    eta: &FlowMap,
    _eta_tilde: &FlowMap,
    a_tilde: &Tensor2Field,
    v: &VectorField,
    kernel: &MollifierKernel,
) -> Result<VectorField> {
    let g = eta.grid();
    if kernel.is_identity() || !g.is_slab() {
        return Ok(VectorField::zeros(g));
    }
    let bracket = psi_bracket(eta, a_tilde, v, kernel);
    let mut psi = VectorField::zeros(g);
    for (i, b) in bracket.iter().enumerate() {
        let bc = PlatePair { bottom: inv_tangential_laplacian(&b.bottom), top: inv_tangential_laplacian(&b.top) };
        psi[i] = harmonic_extension(&bc)?;
    }
    Ok(psi)
}

/// Geometry of one state at one smoothing length.
#[derive(Clone, Debug)]
pub struct GeometryCache {
    pub kappa: f64,
    /// Cofactor data of `η`.
    pub flow: Cofactor,
    pub eta_tilde: FlowMap,
    /// Cofactor data of `η̃` (`a_tilde`, `J_tilde`, `A_tilde`).
    pub smoothed: Cofactor,
    pub psi: VectorField,
}

impl GeometryCache {
    pub fn new(eta: &FlowMap, v: &VectorField, kernel: &MollifierKernel, jac_floor: f64) -> Result<Self> {
        let flow = cofactor_from_gradient(&flow_gradient(eta), jac_floor)?;
        let (eta_tilde, smoothed) = if kernel.is_identity() {
            (eta.clone(), flow.clone())
        } else {
            let et = smooth_flowmap(eta, kernel)?;
            let c = cofactor_from_gradient(&flow_gradient(&et), jac_floor)?;
            (et, c)
        };
        let psi = correction_psi(eta, &eta_tilde, &smoothed.a, v, kernel)?;
        Ok(Self { kappa: kernel.kappa(), flow, eta_tilde, smoothed, psi })
    }

    pub fn a(&self) -> &Tensor2Field {
        &self.flow.a
    }
    pub fn jac(&self) -> &ScalarField {
        &self.flow.jac
    }
    pub fn a_tilde(&self) -> &Tensor2Field {
        &self.smoothed.a
    }
    pub fn jac_tilde(&self) -> &ScalarField {
        &self.smoothed.jac
    }
}
