//! Sampled fields on a [`Grid`] and the spectral plumbing they share.

use std::ops::{Index, IndexMut};

use rustfft::num_complex::Complex64;

use crate::grid::Grid;
use crate::par;

/// Real samples of one scalar quantity at every node.
#[derive(Clone, Debug)]
pub struct ScalarField {
    grid: Grid,
    data: Vec<f64>,
}

impl PartialEq for ScalarField {
    fn eq(&self, other: &Self) -> bool {
        self.grid == other.grid && self.data == other.data
    }
}

impl ScalarField {
    pub fn zeros(grid: &Grid) -> Self {
        Self { grid: grid.clone(), data: vec![0.0; grid.len()] }
    }

    pub fn constant(grid: &Grid, c: f64) -> Self {
        Self { grid: grid.clone(), data: vec![c; grid.len()] }
    }

    /// Wraps existing samples; panics if the length does not match the grid.
    pub fn from_vec(grid: &Grid, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), grid.len(), "sample count does not match grid");
        Self { grid: grid.clone(), data }
    }

    /// Samples `f(y1, y2, y3)` at every node.
    pub fn from_fn(grid: &Grid, f: impl Fn(f64, f64, f64) -> f64 + Sync + Send) -> Self {
        let data = (0..grid.len())
            .map(|i| {
                let [a, b, c] = grid.coords(i);
                f(a, b, c)
            })
            .collect();
        Self { grid: grid.clone(), data }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }
    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }
    pub fn len(&self) -> usize {
        self.data.len()
    }
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn plane(&self, i3: usize) -> &[f64] {
        let n = self.grid.plane_len();
        &self.data[i3 * n..(i3 + 1) * n]
    }
    pub fn plane_mut(&mut self, i3: usize) -> &mut [f64] {
        let n = self.grid.plane_len();
        &mut self.data[i3 * n..(i3 + 1) * n]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { grid: self.grid.clone(), data: self.data.iter().map(|&x| f(x)).collect() }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Self {
        debug_assert!(self.grid == other.grid);
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect();
        Self { grid: self.grid.clone(), data }
    }

    pub fn add(&self, other: &Self) -> Self {
        self.zip_map(other, |a, b| a + b)
    }
    pub fn sub(&self, other: &Self) -> Self {
        self.zip_map(other, |a, b| a - b)
    }
    pub fn mul(&self, other: &Self) -> Self {
        self.zip_map(other, |a, b| a * b)
    }
    pub fn scale(&self, s: f64) -> Self {
        self.map(|a| a * s)
    }

    /// `self += s * x`.
    pub fn axpy(&mut self, s: f64, x: &Self) {
        for (a, &b) in self.data.iter_mut().zip(&x.data) {
            *a += s * b;
        }
    }

    /// `self += x * y` pointwise.
    pub fn add_product(&mut self, x: &Self, y: &Self) {
        for ((a, &b), &c) in self.data.iter_mut().zip(&x.data).zip(&y.data) {
            *a += b * c;
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, &x| m.max(x.abs()))
    }

    /// Max-norm over interior planes only (all planes in torus mode).
    pub fn max_abs_interior(&self) -> f64 {
        let n3 = self.grid.n3();
        (0..n3)
            .filter(|&i3| !self.grid.on_boundary_plane(i3))
            .map(|i3| self.plane(i3).iter().fold(0.0f64, |m, &x| m.max(x.abs())))
            .fold(0.0, f64::max)
    }

    /// Max-norm over the two plates (0 in torus mode).
    pub fn max_abs_boundary(&self) -> f64 {
        if !self.grid.is_slab() {
            return 0.0;
        }
        let top = self.grid.n3() - 1;
        [0, top]
            .iter()
            .map(|&i3| self.plane(i3).iter().fold(0.0f64, |m, &x| m.max(x.abs())))
            .fold(0.0, f64::max)
    }

    /// Quadrature `∫ f dy` (uniform in y1, y2; trapezoid or uniform in y3).
    pub fn integrate(&self) -> f64 {
        let g = &self.grid;
        let mut total = 0.0;
        for i3 in 0..g.n3() {
            let s: f64 = self.plane(i3).iter().sum();
            total += s * g.w3(i3);
        }
        total * g.cell_area()
    }

    /// Discrete `L²` norm with the same quadrature as [`ScalarField::integrate`].
    pub fn l2(&self) -> f64 {
        let g = &self.grid;
        let mut total = 0.0;
        for i3 in 0..g.n3() {
            let s: f64 = self.plane(i3).iter().map(|x| x * x).sum();
            total += s * g.w3(i3);
        }
        (total * g.cell_area()).sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn boundary(&self) -> PlatePair {
        assert!(self.grid.is_slab(), "plates exist only in slab mode");
        PlatePair {
            bottom: PlaneField::from_vec(&self.grid, self.plane(0).to_vec()),
            top: PlaneField::from_vec(&self.grid, self.plane(self.grid.n3() - 1).to_vec()),
        }
    }

    pub fn set_boundary(&mut self, plates: &PlatePair) {
        let top = self.grid.n3() - 1;
        self.plane_mut(0).copy_from_slice(plates.bottom.as_slice());
        self.plane_mut(top).copy_from_slice(plates.top.as_slice());
    }

    /// Zeroes both plates (no-op in torus mode).
    pub fn zero_boundary(&mut self) {
        if self.grid.is_slab() {
            let top = self.grid.n3() - 1;
            self.plane_mut(0).fill(0.0);
            self.plane_mut(top).fill(0.0);
        }
    }
}

impl Index<usize> for ScalarField {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.data[i]
    }
}

impl IndexMut<usize> for ScalarField {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.data[i]
    }
}

/// Samples on one tangential plane (boundary data, plate traces).
#[derive(Clone, Debug)]
pub struct PlaneField {
    grid: Grid,
    data: Vec<f64>,
}

impl PlaneField {
    pub fn zeros(grid: &Grid) -> Self {
        Self { grid: grid.clone(), data: vec![0.0; grid.plane_len()] }
    }
    pub fn from_vec(grid: &Grid, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), grid.plane_len());
        Self { grid: grid.clone(), data }
    }
    pub fn from_fn(grid: &Grid, f: impl Fn(f64, f64) -> f64) -> Self {
        let data = (0..grid.plane_len())
            .map(|i| f(grid.y1(i % grid.n1()), grid.y2(i / grid.n1())))
            .collect();
        Self { grid: grid.clone(), data }
    }
    pub fn grid(&self) -> &Grid {
        &self.grid
    }
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, &x| m.max(x.abs()))
    }
    pub fn sub(&self, other: &Self) -> Self {
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        Self { grid: self.grid.clone(), data }
    }
    /// `L²(T²)` norm.
    pub fn l2(&self) -> f64 {
        (self.data.iter().map(|x| x * x).sum::<f64>() * self.grid.cell_area()).sqrt()
    }
    /// Applies a tangential Fourier multiplier.
    pub(crate) fn apply_multiplier(&self, m: &[Complex64]) -> Self {
        let n = self.grid.plane_len();
        let mut spec = vec![Complex64::new(0.0, 0.0); n];
        self.grid.fft().forward(&self.data, &mut spec);
        for (s, &k) in spec.iter_mut().zip(m) {
            *s *= k;
        }
        let mut data = vec![0.0; n];
        self.grid.fft().inverse(&mut spec, &mut data);
        Self { grid: self.grid.clone(), data }
    }
}

/// Boundary data on the bottom (y3 = −1) and top (y3 = +1) plates.
#[derive(Clone, Debug)]
pub struct PlatePair {
    pub bottom: PlaneField,
    pub top: PlaneField,
}

impl PlatePair {
    pub fn zeros(grid: &Grid) -> Self {
        Self { bottom: PlaneField::zeros(grid), top: PlaneField::zeros(grid) }
    }
    pub fn max_abs(&self) -> f64 {
        self.bottom.max_abs().max(self.top.max_abs())
    }
}

/// Three scalar components `X_1, X_2, X_3`.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorField(pub [ScalarField; 3]);

impl VectorField {
    pub fn zeros(grid: &Grid) -> Self {
        Self(std::array::from_fn(|_| ScalarField::zeros(grid)))
    }
    pub fn from_fn(grid: &Grid, f: impl Fn(f64, f64, f64) -> [f64; 3] + Sync + Send) -> Self {
        Self(std::array::from_fn(|i| ScalarField::from_fn(grid, |a, b, c| f(a, b, c)[i])))
    }
    pub fn grid(&self) -> &Grid {
        self.0[0].grid()
    }
    pub fn add(&self, o: &Self) -> Self {
        Self(std::array::from_fn(|i| self.0[i].add(&o.0[i])))
    }
    pub fn sub(&self, o: &Self) -> Self {
        Self(std::array::from_fn(|i| self.0[i].sub(&o.0[i])))
    }
    pub fn scale(&self, s: f64) -> Self {
        Self(std::array::from_fn(|i| self.0[i].scale(s)))
    }
    pub fn axpy(&mut self, s: f64, x: &Self) {
        for i in 0..3 {
            self.0[i].axpy(s, &x.0[i]);
        }
    }
    pub fn max_abs(&self) -> f64 {
        self.0.iter().map(ScalarField::max_abs).fold(0.0, f64::max)
    }
    /// `L²` norm of the Euclidean magnitude.
    pub fn l2(&self) -> f64 {
        self.0.iter().map(|c| c.l2().powi(2)).sum::<f64>().sqrt()
    }
    pub fn is_finite(&self) -> bool {
        self.0.iter().all(ScalarField::is_finite)
    }
}

impl Index<usize> for VectorField {
    type Output = ScalarField;
    fn index(&self, i: usize) -> &ScalarField {
        &self.0[i]
    }
}

impl IndexMut<usize> for VectorField {
    fn index_mut(&mut self, i: usize) -> &mut ScalarField {
        &mut self.0[i]
    }
}

/// Nine scalar components `T[i][j]` (row `i`, column `j`).
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor2Field(pub [[ScalarField; 3]; 3]);

impl Tensor2Field {
    pub fn zeros(grid: &Grid) -> Self {
        Self(std::array::from_fn(|_| std::array::from_fn(|_| ScalarField::zeros(grid))))
    }
    pub fn identity(grid: &Grid) -> Self {
        let mut t = Self::zeros(grid);
        for i in 0..3 {
            t.0[i][i] = ScalarField::constant(grid, 1.0);
        }
        t
    }
    pub fn from_fn(grid: &Grid, f: impl Fn(f64, f64, f64) -> [[f64; 3]; 3] + Sync + Send) -> Self {
        Self(std::array::from_fn(|i| {
            std::array::from_fn(|j| ScalarField::from_fn(grid, |a, b, c| f(a, b, c)[i][j]))
        }))
    }
    pub fn grid(&self) -> &Grid {
        self.0[0][0].grid()
    }
    /// Column `j` as a vector field.
    pub fn column(&self, j: usize) -> VectorField {
        VectorField(std::array::from_fn(|i| self.0[i][j].clone()))
    }
    pub fn set_column(&mut self, j: usize, v: &VectorField) {
        for i in 0..3 {
            self.0[i][j] = v.0[i].clone();
        }
    }
    pub fn add(&self, o: &Self) -> Self {
        Self(std::array::from_fn(|i| std::array::from_fn(|j| self.0[i][j].add(&o.0[i][j]))))
    }
    pub fn sub(&self, o: &Self) -> Self {
        Self(std::array::from_fn(|i| std::array::from_fn(|j| self.0[i][j].sub(&o.0[i][j]))))
    }
    pub fn scale(&self, s: f64) -> Self {
        Self(std::array::from_fn(|i| std::array::from_fn(|j| self.0[i][j].scale(s))))
    }
    pub fn axpy(&mut self, s: f64, x: &Self) {
        for i in 0..3 {
            for j in 0..3 {
                self.0[i][j].axpy(s, &x.0[i][j]);
            }
        }
    }
    pub fn max_abs(&self) -> f64 {
        self.0.iter().flatten().map(ScalarField::max_abs).fold(0.0, f64::max)
    }
    pub fn l2(&self) -> f64 {
        self.0.iter().flatten().map(|c| c.l2().powi(2)).sum::<f64>().sqrt()
    }
    pub fn is_finite(&self) -> bool {
        self.0.iter().flatten().all(ScalarField::is_finite)
    }
    /// The 3×3 matrix at node `idx`.
    pub fn at(&self, idx: usize) -> [[f64; 3]; 3] {
        std::array::from_fn(|i| std::array::from_fn(|j| self.0[i][j][idx]))
    }
}

/// Applies several tangential Fourier multipliers to one field, sharing the
/// forward transform. Returns one field per multiplier.
pub(crate) fn tangential_multipliers(f: &ScalarField, ms: &[&[Complex64]]) -> Vec<ScalarField> {
    let g = f.grid();
    let n = g.plane_len();
    let zero = Complex64::new(0.0, 0.0);
    let planes: Vec<Vec<Vec<f64>>> = par::map_range(g.n3(), |i3| {
        let fft = g.fft();
        let mut spec = vec![zero; n];
        fft.forward(f.plane(i3), &mut spec);
        let mut out: Vec<Vec<f64>> = Vec::with_capacity(ms.len());
        let (mut sa, mut sb, mut work) = (vec![zero; n], vec![zero; n], vec![zero; n]);
        for pair in ms.chunks(2) {
            for ((a, &s), &k) in sa.iter_mut().zip(&spec).zip(pair[0]) {
                *a = s * k;
            }
            let mut pa = vec![0.0; n];
            if let Some(m2) = pair.get(1) {
                for ((b, &s), &k) in sb.iter_mut().zip(&spec).zip(*m2) {
                    *b = s * k;
                }
                let mut pb = vec![0.0; n];
                fft.inverse_pair(&sa, &sb, &mut work, &mut pa, &mut pb);
                out.push(pa);
                out.push(pb);
            } else {
                fft.inverse(&mut sa, &mut pa);
                out.push(pa);
            }
        }
        out
    });
    gather_planes(g, planes, ms.len())
}

/// Applies one tangential multiplier to many fields, transforming them in pairs.
pub(crate) fn apply_multiplier_many(fields: &[&ScalarField], m: &[Complex64]) -> Vec<ScalarField> {
    if fields.is_empty() {
        return Vec::new();
    }
    let g = fields[0].grid();
    let n = g.plane_len();
    let zero = Complex64::new(0.0, 0.0);
    let planes: Vec<Vec<Vec<f64>>> = par::map_range(g.n3(), |i3| {
        let fft = g.fft();
        let (mut sa, mut sb, mut work) = (vec![zero; n], vec![zero; n], vec![zero; n]);
        let mut out = Vec::with_capacity(fields.len());
        for pair in fields.chunks(2) {
            let mut pa = vec![0.0; n];
            if let Some(second) = pair.get(1) {
                fft.forward_pair(pair[0].plane(i3), second.plane(i3), &mut sa, &mut sb);
                for ((a, b), &k) in sa.iter_mut().zip(sb.iter_mut()).zip(m) {
                    *a *= k;
                    *b *= k;
                }
                let mut pb = vec![0.0; n];
                fft.inverse_pair(&sa, &sb, &mut work, &mut pa, &mut pb);
                out.push(pa);
                out.push(pb);
            } else {
                fft.forward(pair[0].plane(i3), &mut sa);
                for (a, &k) in sa.iter_mut().zip(m) {
                    *a *= k;
                }
                fft.inverse(&mut sa, &mut pa);
                out.push(pa);
            }
        }
        out
    });
    gather_planes(g, planes, fields.len())
}

fn gather_planes(g: &Grid, planes: Vec<Vec<Vec<f64>>>, count: usize) -> Vec<ScalarField> {
    let n = g.plane_len();
    let mut out: Vec<ScalarField> = (0..count).map(|_| ScalarField::zeros(g)).collect();
    for (i3, per_plane) in planes.into_iter().enumerate() {
        for (k, p) in per_plane.into_iter().enumerate() {
            out[k].as_mut_slice()[i3 * n..(i3 + 1) * n].copy_from_slice(&p);
        }
    }
    out
}

/// Applies the sparse normal-derivative rows as plane combinations.
pub(crate) fn apply_normal_rows(f: &ScalarField) -> ScalarField {
    let g = f.grid();
    let rows = g.d3_rows();
    let mut out = ScalarField::zeros(g);
    par::for_each_chunk_mut(out.as_mut_slice(), g.plane_len(), |i3, dst| {
        let row = &rows[i3];
        for &(m, c) in &row.taps {
            for (d, &s) in dst.iter_mut().zip(f.plane(m)) {
                *d += c * s;
            }
        }
        for d in dst.iter_mut() {
            *d *= row.scale;
        }
    });
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Mode;

    #[test]
    fn trapezoid_integrates_linear_profiles_exactly() {
        let g = Grid::new(8, 8, 9, Mode::Slab).unwrap();
        let f = ScalarField::from_fn(&g, |_, _, y3| 1.0 + y3);
        let vol = g.volume();
        assert!((f.integrate() - vol).abs() < 1e-12);
    }

    #[test]
    fn plate_roundtrip() {
        let g = Grid::new(8, 8, 9, Mode::Slab).unwrap();
        let mut f = ScalarField::from_fn(&g, |a, b, c| a + b * c);
        let p = f.boundary();
        f.zero_boundary();
        assert_eq!(f.max_abs_boundary(), 0.0);
        f.set_boundary(&p);
        assert_eq!(f.boundary().top.as_slice(), p.top.as_slice());
    }
}
