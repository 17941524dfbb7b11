//! JSON run configuration.
//!
//! Every field has a documented default, and the manifest written by a run
//! contains the fully resolved configuration, so a manifest alone reproduces
//! a run. `epsilon` accepts a number or the string `"inf"`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::eos::{EosTable, EquationOfState};
use crate::error::{Error, Result};
use crate::grid::{Grid, Mode};
use crate::seeds::Seed;

/// `f64` that (de)serializes `∞` as `"inf"`.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
pub struct Epsilon(pub f64);

impl Serialize for Epsilon {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if self.0.is_infinite() && self.0 > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(self.0)
        }
    }
}

impl<'de> Deserialize<'de> for Epsilon {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(x) => Ok(Epsilon(x)),
            Raw::Text(s) if matches!(s.to_ascii_lowercase().as_str(), "inf" | "infinity") => Ok(Epsilon(f64::INFINITY)),
            Raw::Text(s) => Err(serde::de::Error::custom(format!("epsilon must be a number or \"inf\", got \"{s}\""))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub n1: usize,
    pub n2: usize,
    pub n3: usize,
    pub mode: Mode,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { n1: 16, n2: 16, n3: 17, mode: Mode::Slab }
    }
}

/// Equation-of-state choice; the linear law takes `epsilon` from the top level.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum EosConfig {
    #[default]
    Linear,
    Table {
        table: EosTable,
    },
}

/// Where the initial state comes from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "lowercase", deny_unknown_fields)]
pub enum InitialConfig {
    /// Seed used as-is: `(v₀, G⁰)` with enthalpy `Q₀`.
    Builtin { name: Seed },
    /// State snapshot written by a previous run.
    Snapshot { path: PathBuf },
    /// Compatible data constructed from a seed.
    Construct {
        seed: Seed,
        #[serde(default = "default_order")]
        order: usize,
        #[serde(default = "default_max_iter")]
        max_iter: usize,
    },
}

fn default_order() -> usize {
    1
}
fn default_max_iter() -> usize {
    50
}

impl Default for InitialConfig {
    fn default() -> Self {
        InitialConfig::Builtin { name: Seed::Rest }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Target for elliptic residuals and the initial-data iteration.
    pub elliptic_tol: f64,
    pub constraint_tol: f64,
    pub boundary_tol: f64,
    pub tol_picard: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { elliptic_tol: 1e-11, constraint_tol: 1e-6, boundary_tol: 1e-8, tol_picard: 1e-10 }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Flags {
    pub picard_mode: bool,
    pub filter_on: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub directory: PathBuf,
    /// Write a snapshot every this many steps (0: only the final state).
    pub snapshot_stride: usize,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { directory: PathBuf::from("lela-out"), snapshot_stride: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationConfig {
    pub grid: GridConfig,
    pub kappa: f64,
    pub epsilon: Epsilon,
    pub eos: EosConfig,
    /// `A` in `|e″| ≤ A e′²`.
    pub eos_a: f64,
    pub initial: InitialConfig,
    pub t_final: f64,
    pub cfl: f64,
    /// Fixed step; overrides the CFL rule when set.
    pub dt: Option<f64>,
    pub tolerances: Tolerances,
    pub flags: Flags,
    pub output: OutputConfig,
    /// Rayleigh–Taylor constant; the monitor warns below `c0/2`.
    pub c0: f64,
    /// Smallest `ε` accepted by the initial-data construction.
    pub epsilon_min: f64,
    /// Derivative order of the energy-functional monitor (0–2).
    pub functional_order: usize,
    pub picard_max_iter: usize,
    pub jac_floor: f64,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            grid: GridConfig::default(),
            kappa: 0.0,
            epsilon: Epsilon(100.0),
            eos: EosConfig::Linear,
            eos_a: 2.0,
            initial: InitialConfig::default(),
            t_final: 0.1,
            cfl: 0.4,
            dt: None,
            tolerances: Tolerances::default(),
            flags: Flags::default(),
            output: OutputConfig::default(),
            c0: 0.1,
            epsilon_min: 10.0,
            functional_order: 1,
            picard_max_iter: 30,
            jac_floor: crate::geometry::DEFAULT_JAC_FLOOR,
        }
    }
}

impl SimulationConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(format!("invalid configuration: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg = Self::from_json(&text)?;
        // Relative snapshot paths are taken relative to the config file.
        if let InitialConfig::Snapshot { path: p } = &mut cfg.initial {
            if p.is_relative() {
                if let Some(dir) = path.parent() {
                    *p = dir.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let t = &self.tolerances;
        for (name, v) in [
            ("elliptic_tol", t.elliptic_tol),
            ("constraint_tol", t.constraint_tol),
            ("boundary_tol", t.boundary_tol),
            ("tol_picard", t.tol_picard),
            ("cfl", self.cfl),
            ("eos_a", self.eos_a),
            ("epsilon_min", self.epsilon_min),
        ] {
            if !(v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.kappa >= 0.0) {
            return Err(Error::Config(format!("kappa must be non-negative, got {}", self.kappa)));
        }
        if !(self.epsilon.0 > 0.0) {
            return Err(Error::Config(format!("epsilon must be positive or \"inf\", got {}", self.epsilon.0)));
        }
        if !(self.t_final >= 0.0 && self.t_final.is_finite()) {
            return Err(Error::Config(format!("t_final must be finite and non-negative, got {}", self.t_final)));
        }
        if let Some(dt) = self.dt {
            if !(dt > 0.0) {
                return Err(Error::Config(format!("dt must be positive, got {dt}")));
            }
        }
        if self.functional_order > crate::diagnostics::MAX_FUNCTIONAL_ORDER {
            return Err(Error::Unsupported(format!("functional_order {} (at most 2)", self.functional_order)));
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<Grid> {
        Grid::new(self.grid.n1, self.grid.n2, self.grid.n3, self.grid.mode)
    }

    pub fn equation_of_state(&self) -> Result<EquationOfState> {
        match &self.eos {
            EosConfig::Linear => Ok(EquationOfState::linear(self.epsilon.0)),
            EosConfig::Table { table } => EquationOfState::table(table.clone()),
        }
    }

    /// Same configuration at a different `ε`.
    pub fn with_epsilon(&self, epsilon: f64) -> Self {
        Self { epsilon: Epsilon(epsilon), ..self.clone() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn infinity_sentinel_round_trips() {
        let cfg = SimulationConfig::from_json(r#"{"epsilon": "inf"}"#).unwrap();
        assert!(cfg.epsilon.0.is_infinite());
        let text = serde_json::to_string(&cfg).unwrap();
        assert!(text.contains(r#""epsilon":"inf""#));
        assert_eq!(SimulationConfig::from_json(&text).unwrap(), cfg);
    }

    #[test]
    fn negative_tolerance_is_rejected() {
        let err = SimulationConfig::from_json(r#"{"tolerances": {"boundary_tol": -1.0}}"#).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(SimulationConfig::from_json(r#"{"kapa": 0.1}"#).is_err());
    }

    #[test]
    fn initial_sources_parse() {
        let c = SimulationConfig::from_json(r#"{"initial": {"source": "construct", "seed": "shear"}}"#).unwrap();
        assert_eq!(c.initial, InitialConfig::Construct { seed: Seed::Shear, order: 1, max_iter: 50 });
        let c = SimulationConfig::from_json(r#"{"initial": {"source": "builtin", "name": "elastic-shear"}}"#).unwrap();
        assert_eq!(c.initial, InitialConfig::Builtin { name: Seed::ElasticShear });
    }
}
