//! Hierarchical φ⁴ backend: a single-site effective-potential recursion
//! whose linearization at the Gaussian point reproduces the scaling
//! eigenvalues of the truncated map.

pub mod quadrature;

pub use quadrature::{gauss_hermite_rule, hermite, GaussHermiteRule};
pub mod potential;

pub use potential::{extract_couplings, rg_step_potential, HierParams, HierStepper, PotentialCoeffs, StepDiagnostics};
pub mod flow;

pub use flow::{
    coefficient_jacobian, critical_mu_search, effective_a, flow, hier_fixed_point, CriticalSearch, EffectiveA, Escape,
    EscapeReason, Flow, HierFixedPoint, Regime,
};
pub mod remainder;

pub use remainder::HierarchicalRemainder;
