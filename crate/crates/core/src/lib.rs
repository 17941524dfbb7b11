//! Numerical core of a desk-scale simulator for free-boundary compressible
//! neo-Hookean elastodynamics in Lagrangian coordinates.
//!
//! The reference domain is `T² × (−1, 1)` with the moving boundary pulled back
//! to the plates `y3 = ±1`. The crate provides the discrete geometry, the
//! tangential smoothing used to regularise coefficients, direct elliptic
//! solvers, compatible initial data, a method-of-lines evolver for the
//! 13-component symmetric hyperbolic system, and diagnostics.

// Tensor code reads best with explicit indices; negated comparisons are
// deliberate so that NaN fails validation.
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod check;
pub mod config;
pub mod diagnostics;
pub mod driver;
pub mod elliptic;
pub mod eos;
pub mod error;
pub mod evolve;
pub mod field;
pub mod geometry;
pub mod grid;
pub mod hyperbolic;
pub mod initdata;
pub mod io;
pub mod par;
pub mod seeds;
pub mod smoothing;

pub use eos::EquationOfState;
pub use error::{Error, Result};
pub use field::{PlaneField, PlatePair, ScalarField, Tensor2Field, VectorField};
pub use geometry::{FlowMap, FlowState, ReferenceDeformation};
pub use grid::{Grid, Mode};
