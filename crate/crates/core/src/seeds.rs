//! Built-in incompressible seeds.
//!
//! | name            | `v₀`                  | `G⁰`                             |
//! |-----------------|-----------------------|----------------------------------|
//! | `rest`          | 0                     | 0                                |
//! | `shear`         | `(sin y2, sin y1, 0)` | 0                                |
//! | `elastic-shear` | 0                     | column 1 = `(sin y2, sin y1, 0)` |
//!
//! All three are divergence-free with `G⁰_{3j} = 0`. The pressure is
//! `Q₀ = ±cos y1 cos y2 · q(y3)`, with `q = 1 − cosh(√2 y3)/cosh √2` between
//! the plates and `q = 1` on the torus.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{ScalarField, Tensor2Field, VectorField};
use crate::grid::Grid;
use crate::initdata::{incompressible_pressure, IncompressibleData};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Seed {
    Rest,
    Shear,
    ElasticShear,
}

impl Seed {
    pub const ALL: [Seed; 3] = [Seed::Rest, Seed::Shear, Seed::ElasticShear];

    pub fn name(self) -> &'static str {
        match self {
            Seed::Rest => "rest",
            Seed::Shear => "shear",
            Seed::ElasticShear => "elastic-shear",
        }
    }

    fn profile(g: &Grid) -> VectorField {
        VectorField::from_fn(g, |y1, y2, _| [y2.sin(), y1.sin(), 0.0])
    }

    pub fn velocity(self, g: &Grid) -> VectorField {
        match self {
            Seed::Shear => Self::profile(g),
            _ => VectorField::zeros(g),
        }
    }

    pub fn deformation(self, g: &Grid) -> Tensor2Field {
        let mut f = Tensor2Field::zeros(g);
        if self == Seed::ElasticShear {
            f.set_column(0, &Self::profile(g));
        }
        f
    }

    /// Closed-form pressure of the seed.
    pub fn analytic_pressure(self, g: &Grid) -> ScalarField {
        let sign = match self {
            Seed::Rest => return ScalarField::zeros(g),
            Seed::Shear => 1.0,
            Seed::ElasticShear => -1.0,
        };
        let slab = g.is_slab();
        let c = 2f64.sqrt();
        ScalarField::from_fn(g, move |y1, y2, y3| {
            let q = if slab { 1.0 - (c * y3).cosh() / c.cosh() } else { 1.0 };
            sign * y1.cos() * y2.cos() * q
        })
    }

    /// Seed data; between plates `Q₀` comes from the discrete Dirichlet solve,
    /// on the torus from the closed form.
    pub fn data(self, g: &Grid) -> Result<IncompressibleData> {
        let v0 = self.velocity(g);
        let g0 = self.deformation(g);
        let q0 = if g.is_slab() { incompressible_pressure(&v0, &g0)? } else { self.analytic_pressure(g) };
        Ok(IncompressibleData { v0, g0, q0 })
    }
}

impl fmt::Display for Seed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Seed {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Seed::ALL
            .into_iter()
            .find(|seed| seed.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown seed '{s}' (expected rest, shear or elastic-shear)")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Mode;

    #[test]
    fn names_round_trip() {
        for s in Seed::ALL {
            assert_eq!(s.name().parse::<Seed>().unwrap(), s);
        }
        assert!("vortex".parse::<Seed>().is_err());
    }

    #[test]
    fn discrete_pressure_tracks_closed_form() {
        let g = Grid::new(16, 16, 33, Mode::Slab).unwrap();
        for s in [Seed::Shear, Seed::ElasticShear] {
            let d = s.data(&g).unwrap();
            assert!(d.q0.sub(&s.analytic_pressure(&g)).max_abs() < 1e-5, "{s}");
        }
    }
}
