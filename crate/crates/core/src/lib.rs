//! Heteroclinic renormalization-group trajectories.
//!
//! The crate realizes a truncated three-coupling RG map `(g, μ, R)` with a
//! Gaussian ultraviolet fixed point and a nontrivial infrared fixed point at
//! coupling `O(ε)`, and constructs the complete trajectory joining them by a
//! contraction-mapping solve on two-sided sequences. A hierarchical φ⁴
//! effective-potential recursion provides an independent nonlinear map for
//! cross-checks.

pub mod error;
pub mod hierarchical;
pub mod model;
pub mod orbit;
pub mod remainder;
pub mod spectral;

pub use error::{Result, RgError};
pub use model::{derive_constants, DerivedConstants, Model, ModelParams, RGState};
pub use remainder::{default_remainder_model, CubicCoefficients, CubicRemainder, Remainder, Xi};
