//! The hierarchical recursion recast in `(g, μ, R)` coordinates, usable as
//! a non-polynomial [`Remainder`] for the orbit solver.

use nalgebra::{DMatrix, DVector};

use super::flow::{coefficient_jacobian_with, effective_a};
use super::potential::{HierParams, HierStepper, PotentialCoeffs};
use crate::error::{Result, RgError};
use crate::model::{ModelParams, RGState};
use crate::remainder::{Remainder, Xi};

/// Coordinates `g = v_4`, `μ = v_2`, `R = (v_6, …, v_{2m})`. The linear part
/// `𝓛` is the diagonal map `v_k ↦ L^{d−k[φ]} v_k`; the ξ's collect
/// everything else the recursion produces beyond `L^ε g − L^{2ε} a g²`
/// and `L^{(3+ε)/2} μ`, with `a` fitted so that ξ_g starts at third order.
#[derive(Debug, Clone)]
pub struct HierarchicalRemainder {
    stepper: HierStepper,
    a: f64,
    lipschitz_budget: f64,
}

impl HierarchicalRemainder {
    pub fn new(params: &HierParams, lipschitz_budget: f64) -> Result<Self> {
        if params.d != 3 {
            return Err(RgError::InvalidParams(
                "the hierarchical remainder needs d = 3 to match the truncated map".into(),
            ));
        }
        let stepper = HierStepper::new(params)?;
        let a = effective_a(params)?.a_eff / (params.l as f64).powf(2.0 * params.epsilon);
        Ok(Self {
            stepper,
            a,
            lipschitz_budget,
        })
    }

    /// The `a(L, ε)` matching this backend at second order.
    pub fn a(&self) -> f64 {
        self.a
    }

    /// Model parameters consistent with this remainder.
    pub fn model_params(&self) -> Result<ModelParams> {
        let p = self.stepper.params();
        let gamma = p.linear_eigenvalue(6);
        ModelParams::new(p.l as f64, p.epsilon, gamma, p.m - 2)?.with_a(self.a)
    }

    fn coeffs(&self, g: f64, mu: f64, r: &DVector<f64>) -> PotentialCoeffs {
        let mut v = Vec::with_capacity(self.dim() + 2);
        v.push(mu);
        v.push(g);
        v.extend(r.iter().copied());
        PotentialCoeffs { v }
    }
}

impl Remainder for HierarchicalRemainder {
    fn dim(&self) -> usize {
        self.stepper.params().m - 2
    }

    fn xi(&self, g: f64, mu: f64, r: &DVector<f64>) -> Xi {
        let p = self.stepper.params();
        let next = match self.stepper.step_unchecked(&self.coeffs(g, mu, r)) {
            Ok((v, _)) => v,
            Err(_) => {
                return Xi {
                    g: f64::NAN,
                    mu: f64::NAN,
                    r: DVector::from_element(self.dim(), f64::NAN),
                }
            }
        };
        let lam_g = p.linear_eigenvalue(4);
        let q = (p.l as f64).powf(2.0 * p.epsilon) * self.a;
        let lin = self.apply_linear(g, mu, r);
        Xi {
            g: next.v[1] - (lam_g * g - q * g * g),
            mu: next.v[0] - p.linear_eigenvalue(2) * mu,
            r: DVector::from_iterator(self.dim(), next.v[2..].iter().zip(lin.iter()).map(|(a, b)| a - b)),
        }
    }

    fn apply_linear(&self, _g: f64, _mu: f64, r: &DVector<f64>) -> DVector<f64> {
        let p = self.stepper.params();
        DVector::from_iterator(r.len(), r.iter().enumerate().map(|(j, x)| p.linear_eigenvalue(2 * j + 6) * x))
    }

    fn lipschitz_budget(&self) -> f64 {
        self.lipschitz_budget
    }

    fn step_jacobian(&self, x: &RGState) -> Option<Result<DMatrix<f64>>> {
        // coefficient order is (μ, g, R); swap the first two rows and columns
        let jac = coefficient_jacobian_with(&self.stepper, &self.coeffs(x.g, x.mu, &x.r)).map(|mut j| {
            j.swap_rows(0, 1);
            j.swap_columns(0, 1);
            j
        });
        Some(jac)
    }
}
