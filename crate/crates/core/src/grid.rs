//! Discrete reference domain `T² × (−1, 1)` (slab) or `T³` (torus).
//!
//! Storage order is `index = (i3 * n2 + i2) * n1 + i1`: y3 is the slowest
//! axis, so every y3-plane is one contiguous block of `n1 * n2` samples. All
//! tangential work is done plane by plane.

use std::f64::consts::PI;
use std::fmt;
use std::sync::{Arc, OnceLock};

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Periodic in y1, y2; bounded by the plates y3 = ±1.
    Slab,
    /// Periodic in all three directions; used for boundary-free tests.
    Torus,
}

/// Sparse row of a normal-derivative operator: `scale · Σ taps (plane, weight)`.
///
/// Finite-difference rows keep integer weights and apply `1/(c·Δy₃)` once
/// after summing, so polynomial data on dyadic nodes differentiates exactly.
pub(crate) struct StencilRow {
    pub scale: f64,
    pub taps: Vec<(usize, f64)>,
}

impl StencilRow {
    /// Scaled `(plane, weight)` pairs.
    pub fn weights(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.taps.iter().map(|&(m, c)| (m, c * self.scale))
    }
}

struct Inner {
    n1: usize,
    n2: usize,
    n3: usize,
    mode: Mode,
    y3: Vec<f64>,
    dy3: f64,
    d3: Vec<StencilRow>,
    plan: PlaneFft,
    /// Trapezoid (slab) or uniform (torus) weights in y3.
    w3: Vec<f64>,
    mult: Multipliers,
    elliptic: OnceLock<crate::elliptic::ModeTables>,
}

/// Precomputed tangential Fourier multipliers, indexed `m2 * n1 + m1`.
pub(crate) struct Multipliers {
    /// `i k1`, Nyquist zeroed.
    pub d1: Vec<Complex64>,
    /// `i k2`, Nyquist zeroed.
    pub d2: Vec<Complex64>,
    /// `−(k1² + k2²)`.
    pub lap: Vec<Complex64>,
    /// 2/3-rule mask.
    pub dealias: Vec<Complex64>,
}

impl Multipliers {
    fn new(n1: usize, n2: usize) -> Self {
        let n = n1 * n2;
        let zero = Complex64::new(0.0, 0.0);
        let mut m = Self { d1: vec![zero; n], d2: vec![zero; n], lap: vec![zero; n], dealias: vec![zero; n] };
        for m2 in 0..n2 {
            for m1 in 0..n1 {
                let idx = m2 * n1 + m1;
                let k1 = signed_wavenumber(m1, n1);
                let k2 = signed_wavenumber(m2, n2);
                let o1 = if is_nyquist(m1, n1) { 0.0 } else { k1 };
                let o2 = if is_nyquist(m2, n2) { 0.0 } else { k2 };
                m.d1[idx] = Complex64::new(0.0, o1);
                m.d2[idx] = Complex64::new(0.0, o2);
                m.lap[idx] = Complex64::new(-(k1 * k1 + k2 * k2), 0.0);
                let keep = 3.0 * k1.abs() < n1 as f64 && 3.0 * k2.abs() < n2 as f64;
                m.dealias[idx] = Complex64::new(if keep { 1.0 } else { 0.0 }, 0.0);
            }
        }
        m
    }
}

/// Shared, immutable grid handle. Cloning is cheap.
#[derive(Clone)]
pub struct Grid {
    inner: Arc<Inner>,
}

impl fmt::Debug for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid")
            .field("n1", &self.n1())
            .field("n2", &self.n2())
            .field("n3", &self.n3())
            .field("mode", &self.mode())
            .finish()
    }
}

impl PartialEq for Grid {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.inner, &other.inner)
            || (self.n1() == other.n1()
                && self.n2() == other.n2()
                && self.n3() == other.n3()
                && self.mode() == other.mode())
    }
}

impl Grid {
    /// Builds a grid, validating the dimensions.
    ///
    /// Tangential counts must be powers of two, at least 8. In slab mode `n3`
    /// must be odd and at least 9; in torus mode any `n3 ≥ 8` is accepted.
    pub fn new(n1: usize, n2: usize, n3: usize, mode: Mode) -> Result<Self> {
        for (name, n) in [("n1", n1), ("n2", n2)] {
            if n < 8 || !n.is_power_of_two() {
                return Err(Error::Config(format!("{name} = {n} must be a power of two ≥ 8")));
            }
        }
        match mode {
            Mode::Slab if n3 < 9 || n3 % 2 == 0 => {
                return Err(Error::Config(format!("slab n3 = {n3} must be odd and ≥ 9")));
            }
            Mode::Torus if n3 < 8 => {
                return Err(Error::Config(format!("torus n3 = {n3} must be ≥ 8")));
            }
            _ => {}
        }

        let (y3, dy3, d3, w3) = match mode {
            Mode::Slab => {
                let dy = 2.0 / (n3 - 1) as f64;
                let y3: Vec<f64> = (0..n3).map(|i| -1.0 + i as f64 * dy).collect();
                let mut w3 = vec![dy; n3];
                w3[0] *= 0.5;
                w3[n3 - 1] *= 0.5;
                (y3, dy, fd4_rows(n3, dy), w3)
            }
            Mode::Torus => {
                let dy = 2.0 * PI / n3 as f64;
                let y3 = (0..n3).map(|i| i as f64 * dy).collect();
                (y3, dy, spectral_rows(n3), vec![dy; n3])
            }
        };

        Ok(Self {
            inner: Arc::new(Inner {
                n1,
                n2,
                n3,
                mode,
                y3,
                dy3,
                d3,
                plan: PlaneFft::new(n1, n2),
                w3,
                mult: Multipliers::new(n1, n2),
                elliptic: OnceLock::new(),
            }),
        })
    }

    pub fn n1(&self) -> usize {
        self.inner.n1
    }
    pub fn n2(&self) -> usize {
        self.inner.n2
    }
    pub fn n3(&self) -> usize {
        self.inner.n3
    }
    pub fn mode(&self) -> Mode {
        self.inner.mode
    }
    pub fn is_slab(&self) -> bool {
        self.inner.mode == Mode::Slab
    }
    /// Samples per y3-plane.
    pub fn plane_len(&self) -> usize {
        self.inner.n1 * self.inner.n2
    }
    pub fn len(&self) -> usize {
        self.plane_len() * self.inner.n3
    }
    pub fn is_empty(&self) -> bool {
        false
    }
    pub fn y3_nodes(&self) -> &[f64] {
        &self.inner.y3
    }
    pub fn dy1(&self) -> f64 {
        2.0 * PI / self.inner.n1 as f64
    }
    pub fn dy2(&self) -> f64 {
        2.0 * PI / self.inner.n2 as f64
    }
    pub fn dy3(&self) -> f64 {
        self.inner.dy3
    }
    pub fn min_spacing(&self) -> f64 {
        self.dy1().min(self.dy2()).min(self.dy3())
    }
    pub fn y1(&self, i1: usize) -> f64 {
        i1 as f64 * self.dy1()
    }
    pub fn y2(&self, i2: usize) -> f64 {
        i2 as f64 * self.dy2()
    }
    pub fn y3(&self, i3: usize) -> f64 {
        self.inner.y3[i3]
    }
    /// Quadrature weight of y3-plane `i3` (trapezoid in slab mode).
    pub fn w3(&self, i3: usize) -> f64 {
        self.inner.w3[i3]
    }
    /// Area element of one tangential cell.
    pub fn cell_area(&self) -> f64 {
        self.dy1() * self.dy2()
    }
    /// Total measure of the domain.
    pub fn volume(&self) -> f64 {
        let height = match self.mode() {
            Mode::Slab => 2.0,
            Mode::Torus => 2.0 * PI,
        };
        4.0 * PI * PI * height
    }
    pub fn index(&self, i1: usize, i2: usize, i3: usize) -> usize {
        (i3 * self.inner.n2 + i2) * self.inner.n1 + i1
    }
    /// Node coordinates `(y1, y2, y3)` of a flat index.
    pub fn coords(&self, idx: usize) -> [f64; 3] {
        let n1 = self.inner.n1;
        let n2 = self.inner.n2;
        let i1 = idx % n1;
        let i2 = (idx / n1) % n2;
        let i3 = idx / (n1 * n2);
        [self.y1(i1), self.y2(i2), self.y3(i3)]
    }
    /// True on the plates y3 = ±1 (never in torus mode).
    pub fn on_boundary_plane(&self, i3: usize) -> bool {
        self.is_slab() && (i3 == 0 || i3 + 1 == self.inner.n3)
    }
    /// Signed integer wavenumbers of tangential mode `(m1, m2)`, Nyquist as `+n/2`.
    pub fn wavenumbers(&self, m1: usize, m2: usize) -> (f64, f64) {
        (signed_wavenumber(m1, self.inner.n1), signed_wavenumber(m2, self.inner.n2))
    }
    pub(crate) fn d3_rows(&self) -> &[StencilRow] {
        &self.inner.d3
    }
    pub(crate) fn fft(&self) -> &PlaneFft {
        &self.inner.plan
    }
    pub(crate) fn multipliers(&self) -> &Multipliers {
        &self.inner.mult
    }
    /// Per-mode elliptic operators, built on first use.
    pub(crate) fn elliptic_tables(&self) -> &crate::elliptic::ModeTables {
        self.inner.elliptic.get_or_init(|| crate::elliptic::ModeTables::build(self))
    }
}

pub(crate) fn signed_wavenumber(m: usize, n: usize) -> f64 {
    if m <= n / 2 {
        m as f64
    } else {
        m as f64 - n as f64
    }
}

/// True for the Nyquist index of an even-length axis.
pub(crate) fn is_nyquist(m: usize, n: usize) -> bool {
    m == n / 2
}

/// First-derivative rows: fourth-order centred interior, with one-sided
/// closures of order six (plate row) and five (next row).
///
/// The closure widths are chosen for stability, not accuracy: with the
/// classical five-point fourth-order closures, the acoustic pair
/// `∂_t h = −D₃v₃`, `∂_t v₃ = −D₃h` with `h = 0` on the plates has eigenvalues
/// with real part `≈ 0.45/Δy₃` — a boundary mode that grows like `e^{c√ε t/Δy₃}`
/// once the sound speed is large. The 7/6-point pair below keeps that
/// spectrum on the imaginary axis for every `n3` we checked (9–257).
fn fd4_rows(n: usize, h: f64) -> Vec<StencilRow> {
    const EDGE0: [f64; 7] = [-147.0, 360.0, -450.0, 400.0, -225.0, 72.0, -10.0];
    const EDGE1: [f64; 6] = [-12.0, -65.0, 120.0, -60.0, 20.0, -3.0];
    const CENTRE: [f64; 5] = [1.0, -8.0, 0.0, 8.0, -1.0];
    let edge = 1.0 / (60.0 * h);
    let centre = 1.0 / (12.0 * h);
    (0..n)
        .map(|i| match i {
            0 => StencilRow { scale: edge, taps: EDGE0.iter().enumerate().map(|(m, &c)| (m, c)).collect() },
            1 => StencilRow { scale: edge, taps: EDGE1.iter().enumerate().map(|(m, &c)| (m, c)).collect() },
            _ if i == n - 1 => StencilRow { scale: -edge, taps: EDGE0.iter().enumerate().map(|(m, &c)| (n - 1 - m, c)).collect() },
            _ if i == n - 2 => StencilRow { scale: -edge, taps: EDGE1.iter().enumerate().map(|(m, &c)| (n - 1 - m, c)).collect() },
            _ => StencilRow {
                scale: centre,
                taps: (0..5).filter(|&m| CENTRE[m] != 0.0).map(|m| (i + m - 2, CENTRE[m])).collect(),
            },
        })
        .collect()
}

/// Dense Fourier differentiation matrix on `n` equispaced periodic nodes,
/// assembled by differentiating unit vectors spectrally.
fn spectral_rows(n: usize) -> Vec<StencilRow> {
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let mut cols = vec![vec![0.0; n]; n];
    for (m, col) in cols.iter_mut().enumerate() {
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        buf[m] = Complex64::new(1.0, 0.0);
        fwd.process(&mut buf);
        for (q, c) in buf.iter_mut().enumerate() {
            let k = if n % 2 == 0 && is_nyquist(q, n) { 0.0 } else { signed_wavenumber(q, n) };
            *c *= Complex64::new(0.0, k);
        }
        inv.process(&mut buf);
        for (i, c) in buf.iter().enumerate() {
            col[i] = c.re / n as f64;
        }
    }
    (0..n).map(|i| StencilRow { scale: 1.0, taps: (0..n).map(|m| (m, cols[m][i])).collect() }).collect()
}

/// Two-dimensional FFT on one tangential plane, built from 1-D rustfft plans.
pub(crate) struct PlaneFft {
    n1: usize,
    n2: usize,
    f1: Arc<dyn Fft<f64>>,
    i1: Arc<dyn Fft<f64>>,
    f2: Arc<dyn Fft<f64>>,
    i2: Arc<dyn Fft<f64>>,
}

impl PlaneFft {
    fn new(n1: usize, n2: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            n1,
            n2,
            f1: planner.plan_fft_forward(n1),
            i1: planner.plan_fft_inverse(n1),
            f2: planner.plan_fft_forward(n2),
            i2: planner.plan_fft_inverse(n2),
        }
    }

    /// Forward transform of a real plane into `out` (unnormalised).
    pub(crate) fn forward(&self, plane: &[f64], out: &mut [Complex64]) {
        for (o, &x) in out.iter_mut().zip(plane) {
            *o = Complex64::new(x, 0.0);
        }
        self.transform(out, &self.f1, &self.f2);
    }

    /// Forward transform of two real planes at once: `a + i b` is transformed
    /// and split using conjugate symmetry.
    pub(crate) fn forward_pair(&self, a: &[f64], b: &[f64], sa: &mut [Complex64], sb: &mut [Complex64]) {
        for ((o, &x), &y) in sa.iter_mut().zip(a).zip(b) {
            *o = Complex64::new(x, y);
        }
        self.transform(sa, &self.f1, &self.f2);
        let (n1, n2) = (self.n1, self.n2);
        for m2 in 0..n2 {
            let c2 = (n2 - m2) % n2;
            for m1 in 0..n1 {
                let c1 = (n1 - m1) % n1;
                let z = sa[m2 * n1 + m1];
                let zc = sa[c2 * n1 + c1].conj();
                sb[m2 * n1 + m1] = (z - zc) * Complex64::new(0.0, -0.5);
            }
        }
        for m2 in 0..n2 {
            for m1 in 0..n1 {
                let idx = m2 * n1 + m1;
                // a-hat = z - i b-hat
                sa[idx] -= Complex64::new(0.0, 1.0) * sb[idx];
            }
        }
    }

    /// Inverse transform; writes the normalised real part into `plane`.
    pub(crate) fn inverse(&self, spec: &mut [Complex64], plane: &mut [f64]) {
        self.transform(spec, &self.i1, &self.i2);
        let s = 1.0 / (self.n1 * self.n2) as f64;
        for (p, c) in plane.iter_mut().zip(spec.iter()) {
            *p = c.re * s;
        }
    }

    /// Inverse of two spectra of real planes combined as `a + i b`.
    pub(crate) fn inverse_pair(&self, sa: &[Complex64], sb: &[Complex64], work: &mut [Complex64], a: &mut [f64], b: &mut [f64]) {
        for ((w, &x), &y) in work.iter_mut().zip(sa).zip(sb) {
            *w = x + Complex64::new(0.0, 1.0) * y;
        }
        self.transform(work, &self.i1, &self.i2);
        let s = 1.0 / (self.n1 * self.n2) as f64;
        for ((pa, pb), c) in a.iter_mut().zip(b.iter_mut()).zip(work.iter()) {
            *pa = c.re * s;
            *pb = c.im * s;
        }
    }

    fn transform(&self, buf: &mut [Complex64], p1: &Arc<dyn Fft<f64>>, p2: &Arc<dyn Fft<f64>>) {
        let (n1, n2) = (self.n1, self.n2);
        p1.process(buf);
        let mut col = vec![Complex64::new(0.0, 0.0); n2];
        for m1 in 0..n1 {
            for m2 in 0..n2 {
                col[m2] = buf[m2 * n1 + m1];
            }
            p2.process(&mut col);
            for m2 in 0..n2 {
                buf[m2 * n1 + m1] = col[m2];
            }
        }
    }
}
