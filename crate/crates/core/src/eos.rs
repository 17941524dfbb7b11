//! Equation of state in enthalpy form: `ρ = exp(e(h))`.
//!
//! The default is linear, `e(h) = h/ε`, for which pressure and the internal
//! energy density have closed forms. A tabulated `e` with cubic Hermite
//! interpolation is also supported; its `p` and `Q` are obtained by quadrature.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::ScalarField;

/// Gauss–Legendre nodes and weights on `[−1, 1]` (8 points).
const GL8: [(f64, f64); 8] = [
    (-0.960_289_856_497_536_3, 0.101_228_536_290_376_26),
    (-0.796_666_477_413_626_7, 0.222_381_034_453_374_47),
    (-0.525_532_409_916_329, 0.313_706_645_877_887_3),
    (-0.183_434_642_495_649_8, 0.362_683_783_378_362),
    (0.183_434_642_495_649_8, 0.362_683_783_378_362),
    (0.525_532_409_916_329, 0.313_706_645_877_887_3),
    (0.796_666_477_413_626_7, 0.222_381_034_453_374_47),
    (0.960_289_856_497_536_3, 0.101_228_536_290_376_26),
];

/// Composite Gauss–Legendre quadrature of `f` over `[a, b]`.
pub fn gauss_legendre(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    let h = (b - a) / panels as f64;
    (0..panels)
        .map(|p| {
            let mid = a + (p as f64 + 0.5) * h;
            GL8.iter().map(|&(x, w)| w * f(mid + 0.5 * h * x)).sum::<f64>() * 0.5 * h
        })
        .sum()
}

/// Tabulated `e(h)` with its derivative at increasing nodes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EosTable {
    pub h: Vec<f64>,
    pub e: Vec<f64>,
    pub de: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum EquationOfState {
    /// `e(h) = h/ε`; `ε = ∞` is the incompressible limit `e ≡ 0`.
    Linear { epsilon: f64 },
    /// `e` interpolated from a table; `epsilon` is `1/e′(0)`.
    Table { table: EosTable },
}

impl EquationOfState {
    pub fn linear(epsilon: f64) -> Self {
        EquationOfState::Linear { epsilon }
    }

    pub fn table(table: EosTable) -> Result<Self> {
        let n = table.h.len();
        if n < 2 || table.e.len() != n || table.de.len() != n {
            return Err(Error::Config("EOS table needs ≥ 2 nodes with matching e, e′ columns".into()));
        }
        if table.h.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config("EOS table nodes must be strictly increasing".into()));
        }
        if table.de.iter().any(|&d| d <= 0.0) {
            return Err(Error::Config("EOS table must have e′ > 0".into()));
        }
        let eos = EquationOfState::Table { table };
        if !(eos.table_range().0 <= 0.0 && 0.0 <= eos.table_range().1) || eos.e(0.0).abs() > 1e-12 {
            return Err(Error::Config("EOS table must contain h = 0 with e(0) = 0".into()));
        }
        Ok(eos)
    }

    /// Squared sound speed at `ρ = 1`.
    pub fn epsilon(&self) -> f64 {
        match self {
            EquationOfState::Linear { epsilon } => *epsilon,
            EquationOfState::Table { .. } => 1.0 / self.de(0.0),
        }
    }

    pub fn is_incompressible(&self) -> bool {
        matches!(self, EquationOfState::Linear { epsilon } if epsilon.is_infinite())
    }

    fn table_range(&self) -> (f64, f64) {
        match self {
            EquationOfState::Table { table } => (table.h[0], *table.h.last().unwrap_or(&0.0)),
            _ => (f64::NEG_INFINITY, f64::INFINITY),
        }
    }

    /// Returns `(e, e′, e″)` at `h`.
    pub fn eval(&self, h: f64) -> (f64, f64, f64) {
        match self {
            EquationOfState::Linear { epsilon } => (h / epsilon, 1.0 / epsilon, 0.0),
            EquationOfState::Table { table } => hermite(table, h),
        }
    }

    pub fn e(&self, h: f64) -> f64 {
        self.eval(h).0
    }
    pub fn de(&self, h: f64) -> f64 {
        self.eval(h).1
    }
    pub fn d2e(&self, h: f64) -> f64 {
        self.eval(h).2
    }

    pub fn rho(&self, h: f64) -> f64 {
        self.e(h).exp()
    }

    /// Pressure `p` with `p(ρ = 1) = 0` and `dp = ρ dh`.
    pub fn pressure(&self, h: f64) -> f64 {
        match self {
            EquationOfState::Linear { epsilon } if epsilon.is_infinite() => h,
            EquationOfState::Linear { epsilon } => epsilon * (h / epsilon).exp_m1(),
            EquationOfState::Table { .. } => gauss_legendre(|s| self.rho(s), 0.0, h, 8),
        }
    }

    /// Internal energy density `Q(ρ(h)) = ∫₁^ρ p(R)/R² dR`.
    pub fn internal(&self, h: f64) -> f64 {
        match self {
            EquationOfState::Linear { epsilon } if epsilon.is_infinite() => 0.0,
            EquationOfState::Linear { epsilon } => {
                // ε (x + e^{−x} − 1), x = h/ε, with a series near 0 to avoid cancellation.
                let x = h / epsilon;
                let g = if x.abs() < 1e-3 {
                    x * x * (0.5 - x * (1.0 / 6.0 - x * (1.0 / 24.0 - x / 120.0)))
                } else {
                    x + (-x).exp_m1()
                };
                epsilon * g
            }
            // dQ/dh = p e′ / ρ along the enthalpy path.
            EquationOfState::Table { .. } => {
                gauss_legendre(|s| self.pressure(s) * self.de(s) / self.rho(s), 0.0, h, 8)
            }
        }
    }

    /// `e′(h)` sampled on a field.
    pub fn de_field(&self, h: &ScalarField) -> ScalarField {
        match self {
            EquationOfState::Linear { epsilon } => ScalarField::constant(h.grid(), 1.0 / epsilon),
            _ => h.map(|x| self.de(x)),
        }
    }

    /// Checks `e′ > 0` and `|e″| ≤ A e′²` on the attained enthalpy range.
    pub fn check_range(&self, h: &ScalarField, a_const: f64) -> Result<()> {
        let (lo, hi) = self.table_range();
        for &x in h.as_slice() {
            if !x.is_finite() {
                return Err(Error::NonFinite("enthalpy".into()));
            }
            if x < lo || x > hi {
                return Err(Error::EosRange(format!("h = {x:.4e} outside table range [{lo}, {hi}]")));
            }
            let (_, d, dd) = self.eval(x);
            if !(d > 0.0) {
                return Err(Error::EosRange(format!("e′({x:.4e}) = {d:.4e} is not positive")));
            }
            if dd.abs() > a_const * d * d {
                return Err(Error::EosRange(format!("|e″({x:.4e})| = {:.4e} exceeds A·e′² = {:.4e}", dd.abs(), a_const * d * d)));
            }
        }
        Ok(())
    }
}

fn hermite(t: &EosTable, h: f64) -> (f64, f64, f64) {
    let n = t.h.len();
    let k = match t.h.iter().position(|&x| x > h) {
        Some(0) => 0,
        Some(p) => p - 1,
        None => n - 2,
    };
    let (x0, x1) = (t.h[k], t.h[k + 1]);
    let dx = x1 - x0;
    let s = (h - x0) / dx;
    let (y0, y1, m0, m1) = (t.e[k], t.e[k + 1], t.de[k] * dx, t.de[k + 1] * dx);
    let h00 = 2.0 * s.powi(3) - 3.0 * s * s + 1.0;
    let h10 = s.powi(3) - 2.0 * s * s + s;
    let h01 = -2.0 * s.powi(3) + 3.0 * s * s;
    let h11 = s.powi(3) - s * s;
    let d00 = 6.0 * s * s - 6.0 * s;
    let d10 = 3.0 * s * s - 4.0 * s + 1.0;
    let d01 = -6.0 * s * s + 6.0 * s;
    let d11 = 3.0 * s * s - 2.0 * s;
    let e = h00 * y0 + h10 * m0 + h01 * y1 + h11 * m1;
    let de = (d00 * y0 + d10 * m0 + d01 * y1 + d11 * m1) / dx;
    let dde = ((12.0 * s - 6.0) * y0 + (6.0 * s - 4.0) * m0 + (-12.0 * s + 6.0) * y1 + (6.0 * s - 2.0) * m1) / (dx * dx);
    (e, de, dde)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_defaults() {
        let eos = EquationOfState::linear(100.0);
        assert_eq!(eos.eval(2.0), (0.02, 0.01, 0.0));
        assert_eq!(eos.internal(0.0), 0.0);
        assert_eq!(eos.pressure(0.0), 0.0);
    }

    #[test]
    fn internal_energy_matches_quadrature() {
        for &eps in &[1.0, 10.0, 1e4] {
            let eos = EquationOfState::linear(eps);
            for &h in &[-0.7, -1e-3, 2e-4, 0.4, 1.3] {
                let rho = eos.rho(h);
                let q = gauss_legendre(|r| eps * (r - 1.0) / (r * r), 1.0, rho, 16);
                assert!((eos.internal(h) - q).abs() <= 1e-12 * (1.0 + q.abs()), "eps={eps} h={h}");
            }
        }
    }

    #[test]
    fn incompressible_limit_is_finite() {
        let eos = EquationOfState::linear(f64::INFINITY);
        assert_eq!(eos.de(1.0), 0.0);
        assert_eq!(eos.pressure(0.5), 0.5);
        assert_eq!(eos.internal(0.5), 0.0);
        assert!(eos.is_incompressible());
    }

    #[test]
    fn table_reproduces_linear_law() {
        let eps = 4.0;
        let h: Vec<f64> = (-4..=4).map(|i| i as f64 * 0.25).collect();
        let table = EosTable { e: h.iter().map(|x| x / eps).collect(), de: vec![1.0 / eps; h.len()], h };
        let tab = EquationOfState::table(table).unwrap();
        let lin = EquationOfState::linear(eps);
        for &x in &[-0.9, -0.1, 0.0, 0.33, 0.8] {
            assert!((tab.e(x) - lin.e(x)).abs() < 1e-14);
            assert!((tab.internal(x) - lin.internal(x)).abs() < 1e-12);
        }
        assert!((tab.epsilon() - eps).abs() < 1e-12);
    }

    #[test]
    fn nonpositive_derivative_is_a_range_error() {
        let g = crate::grid::Grid::new(8, 8, 9, crate::grid::Mode::Torus).unwrap();
        let eos = EquationOfState::linear(f64::INFINITY);
        let h = ScalarField::zeros(&g);
        assert!(matches!(eos.check_range(&h, 2.0), Err(Error::EosRange(_))));
    }
}
