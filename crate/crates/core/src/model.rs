//! Model constants, the one-dimensional backbone map and the truncated
//! three-component RG step `(g, μ, R) -> (g', μ', R')`.
//!
//! ```text
//! g' = L^ε g − L^{2ε} a g² + ξ_g(g, μ, R)
//! μ' = L^{(3+ε)/2} μ + ξ_μ(g, μ, R)
//! R' = 𝓛^{(g,μ)} R + ξ_R(g, μ, R)
//! ```
//!
//! The remainder `R` is a finite vector of dimension `d_r`; the ξ's and the
//! contraction `𝓛` are supplied by a [`Remainder`] implementation.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Result, RgError};
use crate::remainder::Remainder;

/// Above this ε a warning is logged; the construction is perturbative in ε.
pub const EPSILON_WARN: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelParams {
    /// Scale ratio of one RG step, `L > 1`.
    pub l: f64,
    pub epsilon: f64,
    /// Second-order coefficient `a(L, ε)`; `ln L` unless set explicitly.
    pub a: f64,
    /// Contraction factor of the linear operator acting on `R`.
    pub gamma: f64,
    /// Truncation dimension of the remainder vector.
    pub d_r: usize,
    #[serde(default = "default_epsilon_max")]
    pub epsilon_max: f64,
}

fn default_epsilon_max() -> f64 {
    0.5
}

impl Default for ModelParams {
    fn default() -> Self {
        Self {
            l: 2.0,
            epsilon: 0.1,
            a: 2f64.ln(),
            gamma: 0.5,
            d_r: 3,
            epsilon_max: default_epsilon_max(),
        }
    }
}

impl ModelParams {
    /// Parameters with `a = ln L`.
    pub fn new(l: f64, epsilon: f64, gamma: f64, d_r: usize) -> Result<Self> {
        let p = Self {
            l,
            epsilon,
            a: l.ln(),
            gamma,
            d_r,
            epsilon_max: default_epsilon_max(),
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_a(mut self, a: f64) -> Result<Self> {
        self.a = a;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(RgError::InvalidParams(msg));
        if !(self.l.is_finite() && self.l > 1.0) {
            return bad(format!("L must be > 1, got {}", self.l));
        }
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return bad(format!("epsilon must be > 0, got {}", self.epsilon));
        }
        if !(self.epsilon_max.is_finite() && self.epsilon_max > 0.0) {
            return bad(format!("epsilon_max must be > 0, got {}", self.epsilon_max));
        }
        if self.epsilon > self.epsilon_max {
            return bad(format!(
                "epsilon {} exceeds epsilon_max {}",
                self.epsilon, self.epsilon_max
            ));
        }
        if !(self.a.is_finite() && self.a > 0.0) {
            return bad(format!("a must be > 0, got {}", self.a));
        }
        if !(self.gamma.is_finite() && self.gamma > 0.0 && self.gamma < 1.0) {
            return bad(format!("gamma must lie in (0, 1), got {}", self.gamma));
        }
        Ok(())
    }
}

/// Closed-form constants of the model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivedConstants {
    /// Canonical scaling dimension of the field, `(3 − ε)/4`.
    pub phi_dim: f64,
    pub lambda_g: f64,
    pub lambda_mu: f64,
    pub g_star_bar: f64,
    /// Coincident-point variance of the fluctuation covariance with `u(0) = 1`.
    pub sigma_gamma_sq: f64,
    /// `L^{2ε} a`, the coefficient of `g²` in the backbone map.
    pub quad_coeff: f64,
}

pub fn derive_constants(params: &ModelParams) -> Result<DerivedConstants> {
    params.validate()?;
    if params.epsilon > EPSILON_WARN {
        log::warn!(
            "epsilon = {} is above {}; the perturbative construction may not apply",
            params.epsilon,
            EPSILON_WARN
        );
    }
    let ModelParams { l, epsilon, a, .. } = *params;
    let phi_dim = (3.0 - epsilon) / 4.0;
    let lambda_g = l.powf(epsilon);
    let quad_coeff = l.powf(2.0 * epsilon) * a;
    Ok(DerivedConstants {
        phi_dim,
        lambda_g,
        lambda_mu: l.powf((3.0 + epsilon) / 2.0),
        g_star_bar: (lambda_g - 1.0) / quad_coeff,
        sigma_gamma_sq: (1.0 - l.powf(-2.0 * phi_dim)) / (2.0 * phi_dim),
        quad_coeff,
    })
}

/// One point `(g, μ, R)` of the truncated coordinate system.
#[derive(Debug, Clone, PartialEq)]
pub struct RGState {
    pub g: f64,
    pub mu: f64,
    pub r: DVector<f64>,
}

impl RGState {
    pub fn new(g: f64, mu: f64, r: DVector<f64>) -> Self {
        Self { g, mu, r }
    }

    pub fn origin(d_r: usize) -> Self {
        Self::new(0.0, 0.0, DVector::zeros(d_r))
    }

    pub fn dim(&self) -> usize {
        2 + self.r.len()
    }

    pub fn is_finite(&self) -> bool {
        self.g.is_finite() && self.mu.is_finite() && self.r.iter().all(|x| x.is_finite())
    }

    /// Flattened coordinates `(g, μ, R_1, …, R_d)`.
    pub fn to_vector(&self) -> DVector<f64> {
        let mut v = DVector::zeros(self.dim());
        v[0] = self.g;
        v[1] = self.mu;
        v.rows_mut(2, self.r.len()).copy_from(&self.r);
        v
    }

    pub fn from_vector(v: &DVector<f64>) -> Self {
        assert!(v.len() >= 2, "state vector needs at least g and mu");
        Self::new(v[0], v[1], v.rows(2, v.len() - 2).into_owned())
    }

    pub fn distance(&self, other: &RGState) -> f64 {
        (self.to_vector() - other.to_vector()).norm()
    }
}

/// Model parameters bundled with their derived constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Model {
    pub params: ModelParams,
    pub consts: DerivedConstants,
}

impl Model {
    pub fn new(params: ModelParams) -> Result<Self> {
        Ok(Self {
            consts: derive_constants(&params)?,
            params,
        })
    }

    pub fn d_r(&self) -> usize {
        self.params.d_r
    }

    pub fn g_star_bar(&self) -> f64 {
        self.consts.g_star_bar
    }

    /// Backbone map `f(x) = L^ε x − L^{2ε} a x²`.
    pub fn f(&self, x: f64) -> f64 {
        self.consts.lambda_g * x - self.consts.quad_coeff * x * x
    }

    /// Smaller root of `f(x) = y`, continuing the backbone towards the
    /// Gaussian fixed point.
    pub fn f_inverse_lower(&self, y: f64) -> Result<f64> {
        let a = self.params.a;
        if y > 1.0 / (4.0 * a) {
            return Err(RgError::DiscriminantNegative { y });
        }
        if y >= self.consts.g_star_bar {
            return Err(RgError::OutOfBasin {
                y,
                g_star: self.consts.g_star_bar,
            });
        }
        if y < 0.0 {
            return Err(RgError::InvalidParams(format!(
                "backbone inverse needs y >= 0, got {y}"
            )));
        }
        let lg = self.consts.lambda_g;
        let q = self.consts.quad_coeff;
        // Rationalized form of (lg − sqrt(lg² − 4qy)) / 2q, free of cancellation.
        let disc = (lg * lg - 4.0 * q * y).max(0.0);
        Ok(2.0 * y / (lg + disc.sqrt()))
    }

    /// Derivative of the backbone map, `A(ḡ) = L^ε − 2 L^{2ε} a ḡ`.
    pub fn linear_coefficient(&self, g_bar: f64) -> f64 {
        self.consts.lambda_g - 2.0 * self.consts.quad_coeff * g_bar
    }

    /// The approximate infrared fixed point `(ḡ_*, 0, 0)`.
    pub fn approx_ir_point(&self) -> RGState {
        RGState::new(self.consts.g_star_bar, 0.0, DVector::zeros(self.d_r()))
    }

    /// One application of the truncated RG map.
    pub fn step(&self, state: &RGState, rem: &dyn Remainder) -> Result<RGState> {
        let xi = rem.xi(state.g, state.mu, &state.r);
        let mut r = rem.apply_linear(state.g, state.mu, &state.r);
        r += &xi.r;
        let next = RGState::new(
            self.f(state.g) + xi.g,
            self.consts.lambda_mu * state.mu + xi.mu,
            r,
        );
        if next.is_finite() {
            Ok(next)
        } else {
            Err(RgError::NonFinite("bms_step"))
        }
    }
}
