//! Direct Poisson solvers on the slab.
//!
//! After a tangential FFT each Fourier mode `k` decouples into a two-point
//! boundary-value problem `(|k|² − D₃D₃) û = r̂` in y3, where `D₃` is the same
//! fourth-order first-derivative matrix the evolution uses. Composing the
//! first-derivative operator (rather than using a separate second-derivative
//! stencil) keeps the discrete Laplacian consistent with the discrete
//! acoustic operator. Inverses are cached per distinct `|k|²`, so each solve is
//! a batch of small dense mat-vecs.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::field::{PlaneField, PlatePair, ScalarField};
use crate::geometry::{normal_derivative, tangential_laplacian};
use crate::grid::Grid;
use crate::par;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BcKind {
    Dirichlet,
    Neumann,
}

/// `−Δu = rhs` with data on the plates.
///
/// For Dirichlet problems `bc_data` holds the plate values of `u`; for Neumann
/// problems it holds the outward normal derivative `∂u/∂N`.
#[derive(Clone, Debug)]
pub struct EllipticProblem {
    pub rhs: ScalarField,
    pub bc_kind: BcKind,
    pub bc_data: PlatePair,
}

impl EllipticProblem {
    pub fn dirichlet(rhs: ScalarField, bc_data: PlatePair) -> Self {
        Self { rhs, bc_kind: BcKind::Dirichlet, bc_data }
    }

    pub fn dirichlet_homogeneous(rhs: ScalarField) -> Self {
        let bc = PlatePair::zeros(rhs.grid());
        Self::dirichlet(rhs, bc)
    }

    pub fn neumann(rhs: ScalarField) -> Self {
        let bc = PlatePair::zeros(rhs.grid());
        Self { rhs, bc_kind: BcKind::Neumann, bc_data: bc }
    }
}

/// Neumann solve result with the solvability bookkeeping.
#[derive(Clone, Debug)]
pub struct NeumannSolution {
    /// Mean-zero solution.
    pub u: ScalarField,
    /// `|∫ rhs + ∮ ∂u/∂N|` before projection (the incompatibility removed).
    pub projection: f64,
    /// Residual solvability defect after projection (roundoff level).
    pub defect: f64,
}

/// Discrete Laplacian `Δ̄ + D₃D₃`, the operator all solves invert.
pub fn laplacian(f: &ScalarField) -> ScalarField {
    tangential_laplacian(f).add(&normal_derivative(&normal_derivative(f)))
}

/// Solves `−Δu = rhs`, `u|_Γ = bc_data`.
pub fn solve_dirichlet(p: &EllipticProblem) -> Result<ScalarField> {
    let grid = p.rhs.grid();
    require_slab(grid, "Dirichlet solve")?;
    if p.bc_kind != BcKind::Dirichlet {
        return Err(Error::Config("solve_dirichlet called with a Neumann problem".into()));
    }
    let mut r = p.rhs.clone();
    r.set_boundary(&p.bc_data);
    let tables = grid.elliptic_tables();
    let u = solve_modes(&r, |class, _| Some(&tables.classes[class].dirichlet));
    check_finite(&u, "Dirichlet solve")?;
    Ok(u)
}

/// Solves `−Δu = rhs`, `∂u/∂N|_Γ = bc_data`, projecting the tangential zero
/// mode onto the solvable subspace and returning the mean-zero solution.
pub fn solve_neumann(p: &EllipticProblem) -> Result<NeumannSolution> {
    let grid = p.rhs.grid().clone();
    require_slab(&grid, "Neumann solve")?;
    if p.bc_kind != BcKind::Neumann {
        return Err(Error::Config("solve_neumann called with a Dirichlet problem".into()));
    }
    let flux: f64 = [&p.bc_data.bottom, &p.bc_data.top]
        .iter()
        .map(|pl| pl.as_slice().iter().sum::<f64>() * grid.cell_area())
        .sum();
    let projection = (p.rhs.integrate() + flux).abs();

    // Boundary rows of the Neumann operator are the one-sided D₃ rows, so the
    // bottom target is ∂₃u = −∂u/∂N and the top target is ∂₃u = ∂u/∂N.
    let mut r = p.rhs.clone();
    let n3 = grid.n3();
    let neg_bottom: Vec<f64> = p.bc_data.bottom.as_slice().iter().map(|x| -x).collect();
    r.plane_mut(0).copy_from_slice(&neg_bottom);
    r.plane_mut(n3 - 1).copy_from_slice(p.bc_data.top.as_slice());

    let tables = grid.elliptic_tables();
    let mut spec = forward_planes(&r);
    let zero = &tables.neumann_zero;
    let mut col: Vec<Complex64> = (0..n3).map(|i3| spec[i3][0]).collect();
    let defect = zero.solve(&mut col, grid.plane_len() as f64);
    for (i3, c) in col.into_iter().enumerate() {
        spec[i3][0] = c;
    }
    let u = solve_spectra(&grid, spec, |class, m| {
        if m == 0 {
            None
        } else {
            tables.classes[class].neumann.as_ref()
        }
    });
    check_finite(&u, "Neumann solve")?;
    Ok(NeumannSolution { u, projection, defect })
}

/// Harmonic function with prescribed plate values (`−Δu = 0`).
///
/// Only two plates carry data, so each mode needs just the first and last
/// columns of its cached Dirichlet inverse.
pub fn harmonic_extension(bc: &PlatePair) -> Result<ScalarField> {
    let grid = bc.bottom.grid().clone();
    require_slab(&grid, "harmonic extension")?;
    let n3 = grid.n3();
    let np = grid.plane_len();
    let zero = Complex64::new(0.0, 0.0);
    let (mut sb, mut st) = (vec![zero; np], vec![zero; np]);
    grid.fft().forward_pair(bc.bottom.as_slice(), bc.top.as_slice(), &mut sb, &mut st);
    let tables = grid.elliptic_tables();
    let mut u = ScalarField::zeros(&grid);
    par::for_each_chunk_mut(u.as_mut_slice(), np, |i3, dst| {
        let mut s: Vec<Complex64> = (0..np)
            .map(|m| {
                let inv = &tables.classes[tables.class_of[m]].dirichlet;
                sb[m] * inv[(i3, 0)] + st[m] * inv[(i3, n3 - 1)]
            })
            .collect();
        grid.fft().inverse(&mut s, dst);
    });
    check_finite(&u, "harmonic extension")?;
    Ok(u)
}

/// Fourier multiplier `−1/|k|²` on nonzero tangential modes; zero mode removed.
pub fn inv_tangential_laplacian(g: &PlaneField) -> PlaneField {
    let grid = g.grid();
    let m: Vec<Complex64> = grid
        .multipliers()
        .lap
        .iter()
        .map(|&l| if l.re == 0.0 { Complex64::new(0.0, 0.0) } else { Complex64::new(1.0 / l.re, 0.0) })
        .collect();
    g.apply_multiplier(&m)
}

/// Removes the tangential zero mode (plate mean) of a plate field.
pub fn remove_mean(g: &PlaneField) -> PlaneField {
    let mean = g.as_slice().iter().sum::<f64>() / g.as_slice().len() as f64;
    PlaneField::from_vec(g.grid(), g.as_slice().iter().map(|x| x - mean).collect())
}

fn require_slab(grid: &Grid, what: &'static str) -> Result<()> {
    if grid.is_slab() {
        Ok(())
    } else {
        Err(Error::RequiresSlab(what))
    }
}

fn check_finite(u: &ScalarField, what: &str) -> Result<()> {
    if u.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite(what.into()))
    }
}

fn forward_planes(f: &ScalarField) -> Vec<Vec<Complex64>> {
    let g = f.grid();
    par::map_range(g.n3(), |i3| {
        let mut s = vec![Complex64::new(0.0, 0.0); g.plane_len()];
        g.fft().forward(f.plane(i3), &mut s);
        s
    })
}

fn solve_modes<'a>(r: &ScalarField, op: impl Fn(usize, usize) -> Option<&'a DMatrix<f64>> + Sync) -> ScalarField {
    solve_spectra(r.grid(), forward_planes(r), op)
}

/// Applies the per-mode inverse (if any) along y3 and transforms back.
fn solve_spectra<'a>(
    grid: &Grid,
    spec: Vec<Vec<Complex64>>,
    op: impl Fn(usize, usize) -> Option<&'a DMatrix<f64>> + Sync,
) -> ScalarField {
    let n3 = grid.n3();
    let np = grid.plane_len();
    let tables = grid.elliptic_tables();
    let cols: Vec<Vec<Complex64>> = par::map_range(np, |m| {
        let col: Vec<Complex64> = (0..n3).map(|i3| spec[i3][m]).collect();
        match op(tables.class_of[m], m) {
            Some(inv) => (0..n3)
                .map(|i| {
                    let mut acc = Complex64::new(0.0, 0.0);
                    for (j, c) in col.iter().enumerate() {
                        acc += c * inv[(i, j)];
                    }
                    acc
                })
                .collect(),
            None => col,
        }
    });
    let mut out = ScalarField::zeros(grid);
    par::for_each_chunk_mut(out.as_mut_slice(), np, |i3, dst| {
        let mut s: Vec<Complex64> = cols.iter().map(|c| c[i3]).collect();
        grid.fft().inverse(&mut s, dst);
    });
    out
}

/// Cached per-mode operators for one grid.
pub(crate) struct ModeTables {
    pub(crate) class_of: Vec<usize>,
    pub(crate) classes: Vec<ModeClass>,
    pub(crate) neumann_zero: ZeroModeNeumann,
}

pub(crate) struct ModeClass {
    pub(crate) dirichlet: DMatrix<f64>,
    /// Absent for the singular zero mode.
    pub(crate) neumann: Option<DMatrix<f64>>,
}

impl ModeTables {
    pub(crate) fn build(grid: &Grid) -> Self {
        let n3 = grid.n3();
        let mut d3 = DMatrix::zeros(n3, n3);
        for (i, row) in grid.d3_rows().iter().enumerate() {
            for (m, c) in row.weights() {
                d3[(i, m)] = c;
            }
        }
        let d33 = &d3 * &d3;

        let mut index: HashMap<u64, usize> = HashMap::new();
        let mut lambdas = Vec::new();
        let mut class_of = Vec::with_capacity(grid.plane_len());
        for m2 in 0..grid.n2() {
            for m1 in 0..grid.n1() {
                let (k1, k2) = grid.wavenumbers(m1, m2);
                let lam = k1 * k1 + k2 * k2;
                let next = lambdas.len();
                let c = *index.entry(lam.to_bits()).or_insert_with(|| {
                    lambdas.push(lam);
                    next
                });
                class_of.push(c);
            }
        }

        let classes = par::map_range(lambdas.len(), |c| {
            let lam = lambdas[c];
            let mut interior = -d33.clone();
            for i in 0..n3 {
                interior[(i, i)] += lam;
            }
            let mut dir = interior.clone();
            for &b in &[0, n3 - 1] {
                dir.row_mut(b).fill(0.0);
                dir[(b, b)] = 1.0;
            }
            let dirichlet = dir.try_inverse().expect("Dirichlet mode operator is nonsingular");
            let neumann = (lam > 0.0).then(|| {
                let mut neu = interior;
                for &b in &[0, n3 - 1] {
                    let row = d3.row(b).clone_owned();
                    neu.row_mut(b).copy_from(&row);
                }
                neu.try_inverse().expect("Neumann mode operator is nonsingular for k ≠ 0")
            });
            ModeClass { dirichlet, neumann }
        });

        let neumann_zero = ZeroModeNeumann::build(grid, &d3, &d33);
        Self { class_of, classes, neumann_zero }
    }
}

/// Singular zero-mode Neumann problem, regularised by bordering with the
/// mean-zero constraint after projecting onto the discrete range.
pub(crate) struct ZeroModeNeumann {
    /// Left null vector of the operator.
    w: DVector<f64>,
    /// Interior-row indicator (the direction the projection removes).
    e: DVector<f64>,
    bordered_inv: DMatrix<f64>,
}

impl ZeroModeNeumann {
    fn build(grid: &Grid, d3: &DMatrix<f64>, d33: &DMatrix<f64>) -> Self {
        let n3 = grid.n3();
        let mut m = -d33.clone();
        for &b in &[0, n3 - 1] {
            let row = d3.row(b).clone_owned();
            m.row_mut(b).copy_from(&row);
        }
        let svd = m.clone().svd(true, false);
        let (imin, _) = svd
            .singular_values
            .iter()
            .enumerate()
            .fold((0, f64::INFINITY), |acc, (i, &s)| if s < acc.1 { (i, s) } else { acc });
        let u = svd.u.expect("requested U");
        let w: DVector<f64> = u.column(imin).clone_owned();
        let e = DVector::from_fn(n3, |i, _| if i == 0 || i == n3 - 1 { 0.0 } else { 1.0 });
        let q = DVector::from_fn(n3, |i, _| grid.w3(i));

        let mut b = DMatrix::zeros(n3 + 1, n3 + 1);
        b.view_mut((0, 0), (n3, n3)).copy_from(&m);
        for i in 0..n3 {
            b[(i, n3)] = e[i];
            b[(n3, i)] = q[i];
        }
        let bordered_inv = b.try_inverse().expect("bordered Neumann operator is nonsingular");
        Self { w, e, bordered_inv }
    }

    /// Projects and solves in place; returns the post-projection defect in
    /// plane-mean units (`scale` is the unnormalised FFT factor).
    fn solve(&self, col: &mut [Complex64], scale: f64) -> f64 {
        let n3 = col.len();
        let we = self.w.dot(&self.e);
        let mut defect = 0.0;
        let parts: [fn(&Complex64) -> f64; 2] = [|c| c.re, |c| c.im];
        let mut solved = [vec![0.0; n3], vec![0.0; n3]];
        for (part, out) in parts.iter().zip(solved.iter_mut()) {
            let mut r = DVector::from_fn(n3 + 1, |i, _| if i < n3 { part(&col[i]) } else { 0.0 });
            let c = (0..n3).map(|i| self.w[i] * r[i]).sum::<f64>() / we;
            for i in 0..n3 {
                r[i] -= c * self.e[i];
            }
            let x = &self.bordered_inv * r;
            defect = f64::max(defect, x[n3].abs() / scale);
            out.copy_from_slice(&x.as_slice()[..n3]);
        }
        for (i, c) in col.iter_mut().enumerate() {
            *c = Complex64::new(solved[0][i], solved[1][i]);
        }
        defect
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Mode;

    #[test]
    fn zero_data_gives_zero() {
        let g = Grid::new(8, 8, 17, Mode::Slab).unwrap();
        let u = solve_dirichlet(&EllipticProblem::dirichlet_homogeneous(ScalarField::zeros(&g))).unwrap();
        assert_eq!(u.max_abs(), 0.0);
        let n = solve_neumann(&EllipticProblem::neumann(ScalarField::zeros(&g))).unwrap();
        assert_eq!(n.u.max_abs(), 0.0);
    }

    #[test]
    fn constant_rhs_gives_parabola() {
        let g = Grid::new(8, 8, 17, Mode::Slab).unwrap();
        let u = solve_dirichlet(&EllipticProblem::dirichlet_homogeneous(ScalarField::constant(&g, 2.0))).unwrap();
        let exact = ScalarField::from_fn(&g, |_, _, y| 1.0 - y * y);
        assert!(u.sub(&exact).max_abs() < 1e-12);
    }

    #[test]
    fn unit_neumann_rhs_is_projected_away() {
        let g = Grid::new(8, 8, 17, Mode::Slab).unwrap();
        let s = solve_neumann(&EllipticProblem::neumann(ScalarField::constant(&g, 1.0))).unwrap();
        assert!(s.u.max_abs() < 1e-12);
        assert!((s.projection - g.volume()).abs() < 1e-10);
        assert!(s.defect < 1e-12);
    }

    #[test]
    fn inverse_tangential_laplacian_of_mode() {
        let g = Grid::new(8, 8, 9, Mode::Slab).unwrap();
        let f = PlaneField::from_fn(&g, |a, b| (2.0 * a + b).cos());
        let r = inv_tangential_laplacian(&f);
        let exact = PlaneField::from_fn(&g, |a, b| -(2.0 * a + b).cos() / 5.0);
        assert!(r.sub(&exact).max_abs() < 1e-14);
    }

    #[test]
    fn harmonic_extension_matches_general_solve() {
        let g = Grid::new(8, 16, 17, Mode::Slab).unwrap();
        let bc = PlatePair {
            bottom: PlaneField::from_fn(&g, |a, b| (a + 2.0 * b).sin() + 0.3),
            top: PlaneField::from_fn(&g, |a, _| (3.0 * a).cos()),
        };
        let fast = harmonic_extension(&bc).unwrap();
        let full = solve_dirichlet(&EllipticProblem::dirichlet(ScalarField::zeros(&g), bc)).unwrap();
        assert!(fast.sub(&full).max_abs() < 1e-13);
    }

    #[test]
    fn torus_is_rejected() {
        let g = Grid::new(8, 8, 9, Mode::Torus).unwrap();
        let r = solve_dirichlet(&EllipticProblem::dirichlet(ScalarField::zeros(&g), PlatePair::zeros(&g)));
        assert!(matches!(r, Err(Error::RequiresSlab(_))));
    }
}
