//! Pluggable remainder terms `ξ_g, ξ_μ, ξ_R` and the contraction `𝓛^{(g,μ)}`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Result, RgError};
use crate::model::{derive_constants, ModelParams, RGState};

/// Values of the three remainder maps at one state.
#[derive(Debug, Clone, PartialEq)]
pub struct Xi {
    pub g: f64,
    pub mu: f64,
    pub r: DVector<f64>,
}

/// Smooth remainder maps plus the `(g, μ)`-dependent contraction on `R`.
///
/// Implementations must keep `‖𝓛^{(g,μ)}‖ ≤ γ < 1` on the working domain.
pub trait Remainder: Send + Sync {
    /// Dimension `d_R` of the remainder vector.
    fn dim(&self) -> usize;

    fn xi(&self, g: f64, mu: f64, r: &DVector<f64>) -> Xi;

    /// `𝓛^{(g,μ)} r`.
    fn apply_linear(&self, g: f64, mu: f64, r: &DVector<f64>) -> DVector<f64>;

    /// Declared bound on the Lipschitz constants of the ξ's.
    fn lipschitz_budget(&self) -> f64;

    /// Jacobian of the full step at `x`, for remainders that know a better
    /// difference scheme than the generic one.
    fn step_jacobian(&self, _x: &RGState) -> Option<Result<DMatrix<f64>>> {
        None
    }
}

/// `𝓛^{(g,μ)} = γ · s(g,μ) · Q` with `Q` orthogonal and
/// `s(g,μ) = 1 / (1 + κ (g² + μ²)) ∈ (0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ContractionOperator {
    gamma: f64,
    modulation: f64,
    q: DMatrix<f64>,
}

impl ContractionOperator {
    pub fn new(gamma: f64, d: usize, modulation: f64) -> Self {
        Self {
            gamma,
            modulation,
            q: fixed_orthogonal(d),
        }
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// The orthogonal factor `Q`.
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn scale(&self, g: f64, mu: f64) -> f64 {
        self.gamma / (1.0 + self.modulation * (g * g + mu * mu))
    }

    pub fn apply(&self, g: f64, mu: f64, r: &DVector<f64>) -> DVector<f64> {
        &self.q * r * self.scale(g, mu)
    }
}

/// Deterministic orthogonal matrix with distinct rotation angles,
/// conjugated by a Householder reflection so it is not block diagonal.
pub fn fixed_orthogonal(d: usize) -> DMatrix<f64> {
    let mut rot = DMatrix::<f64>::identity(d, d);
    for j in 0..d / 2 {
        let theta = 0.9 + 0.6 * j as f64;
        let (s, c) = theta.sin_cos();
        let (i0, i1) = (2 * j, 2 * j + 1);
        rot[(i0, i0)] = c;
        rot[(i0, i1)] = -s;
        rot[(i1, i0)] = s;
        rot[(i1, i1)] = c;
    }
    if d == 0 {
        return rot;
    }
    let u = DVector::from_fn(d, |i, _| (i + 1) as f64).normalize();
    let h = DMatrix::<f64>::identity(d, d) - &u * u.transpose() * 2.0;
    &h * rot * &h
}

fn unit_direction(d: usize, f: impl Fn(usize) -> f64) -> DVector<f64> {
    if d == 0 {
        return DVector::zeros(0);
    }
    DVector::from_fn(d, |i, _| f(i)).normalize()
}

/// Coefficients of the default cubic remainder family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CubicCoefficients {
    /// `ξ_g ⊃ c_g g³`
    pub c_g: f64,
    /// `ξ_g ⊃ c_gr g ⟨w, R⟩`
    pub c_gr: f64,
    /// `ξ_μ ⊃ c_mu g²`
    pub c_mu: f64,
    /// `ξ_μ ⊃ c_mur g ⟨w', R⟩`
    pub c_mur: f64,
    /// `ξ_R = c_r g³ v`
    pub c_r: f64,
    /// Modulation strength κ of the contraction.
    pub modulation: f64,
    pub lipschitz_budget: f64,
}

impl Default for CubicCoefficients {
    fn default() -> Self {
        Self {
            c_g: 1.0,
            c_gr: 0.5,
            c_mu: 1.0,
            c_mur: 0.5,
            c_r: 1.0,
            modulation: 0.0,
            lipschitz_budget: 0.5,
        }
    }
}

impl CubicCoefficients {
    pub fn zero() -> Self {
        Self {
            c_g: 0.0,
            c_gr: 0.0,
            c_mu: 0.0,
            c_mur: 0.0,
            c_r: 0.0,
            ..Self::default()
        }
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            c_g: self.c_g * s,
            c_gr: self.c_gr * s,
            c_mu: self.c_mu * s,
            c_mur: self.c_mur * s,
            c_r: self.c_r * s,
            ..*self
        }
    }
}

/// Box on which Lipschitz constants are sampled:
/// `g ∈ [0, g_max]`, `|μ| ≤ mu_max`, `‖R‖ ≤ r_max`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WorkingBox {
    pub g_max: f64,
    pub mu_max: f64,
    pub r_max: f64,
}

impl WorkingBox {
    pub fn for_params(params: &ModelParams) -> Result<Self> {
        let gs = derive_constants(params)?.g_star_bar;
        Ok(Self {
            g_max: 2.0 * gs,
            mu_max: gs,
            r_max: gs,
        })
    }
}

/// Default remainder model:
///
/// ```text
/// ξ_g = c_g g³ + c_gr g ⟨w, R⟩
/// ξ_μ = c_mu g² + c_mur g ⟨w', R⟩
/// ξ_R = c_r g³ v
/// 𝓛   = γ s(g,μ) Q
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct CubicRemainder {
    coeffs: CubicCoefficients,
    w: DVector<f64>,
    w_prime: DVector<f64>,
    v: DVector<f64>,
    op: ContractionOperator,
}

impl CubicRemainder {
    /// Builds the model without checking the Lipschitz budget.
    pub fn unchecked(params: &ModelParams, coeffs: CubicCoefficients) -> Self {
        let d = params.d_r;
        Self {
            coeffs,
            w: unit_direction(d, |_| 1.0),
            w_prime: unit_direction(d, |i| if i % 2 == 0 { 1.0 } else { -1.0 }),
            v: unit_direction(d, |i| 1.0 / (i + 1) as f64),
            op: ContractionOperator::new(params.gamma, d, coeffs.modulation),
        }
    }

    /// ξ ≡ 0 with `𝓛 = γ Q`: the simplified dynamics.
    pub fn zero(params: &ModelParams) -> Self {
        Self::unchecked(params, CubicCoefficients::zero())
    }

    pub fn coefficients(&self) -> &CubicCoefficients {
        &self.coeffs
    }

    pub fn operator(&self) -> &ContractionOperator {
        &self.op
    }

    /// Largest gradient norm over the three ξ's, sampled on a grid of the box.
    pub fn sampled_lipschitz(&self, working: &WorkingBox) -> f64 {
        let d = self.w.len();
        let mut directions: Vec<DVector<f64>> = vec![DVector::zeros(d)];
        for dir in [&self.w, &self.w_prime, &self.v] {
            if d > 0 {
                directions.push(dir * working.r_max);
                directions.push(dir * -working.r_max);
            }
        }
        let ng = 65;
        let mut worst = 0.0f64;
        for i in 0..ng {
            let g = working.g_max * i as f64 / (ng - 1) as f64;
            for j in 0..5 {
                let mu = working.mu_max * (j as f64 / 2.0 - 1.0);
                for r in &directions {
                    worst = worst.max(self.gradient_norm(g, mu, r));
                }
            }
        }
        worst
    }

    fn gradient_norm(&self, g: f64, _mu: f64, r: &DVector<f64>) -> f64 {
        let c = &self.coeffs;
        let wr = if r.is_empty() { 0.0 } else { self.w.dot(r) };
        let wpr = if r.is_empty() { 0.0 } else { self.w_prime.dot(r) };
        // ∇ξ_g = (3 c_g g² + c_gr ⟨w,R⟩, 0, c_gr g w)
        let dg = (3.0 * c.c_g * g * g + c.c_gr * wr).hypot(c.c_gr * g);
        // ∇ξ_μ = (2 c_mu g + c_mur ⟨w',R⟩, 0, c_mur g w')
        let dmu = (2.0 * c.c_mu * g + c.c_mur * wpr).hypot(c.c_mur * g);
        // ∇ξ_R = 3 c_r g² v ⊗ e_g
        let dr = (3.0 * c.c_r * g * g).abs();
        dg.max(dmu).max(dr)
    }
}

/// Builds the default cubic model and checks its sampled Lipschitz constant
/// on the standard working box against the declared budget.
pub fn default_remainder_model(
    params: &ModelParams,
    coeffs: CubicCoefficients,
) -> Result<CubicRemainder> {
    params.validate()?;
    let rem = CubicRemainder::unchecked(params, coeffs);
    let observed = rem.sampled_lipschitz(&WorkingBox::for_params(params)?);
    if observed > coeffs.lipschitz_budget {
        return Err(RgError::BudgetExceeded {
            observed,
            budget: coeffs.lipschitz_budget,
        });
    }
    Ok(rem)
}

impl Remainder for CubicRemainder {
    fn dim(&self) -> usize {
        self.w.len()
    }

    fn xi(&self, g: f64, _mu: f64, r: &DVector<f64>) -> Xi {
        let c = &self.coeffs;
        let (wr, wpr) = if r.is_empty() {
            (0.0, 0.0)
        } else {
            (self.w.dot(r), self.w_prime.dot(r))
        };
        let g3 = g * g * g;
        Xi {
            g: c.c_g * g3 + c.c_gr * g * wr,
            mu: c.c_mu * g * g + c.c_mur * g * wpr,
            r: &self.v * (c.c_r * g3),
        }
    }

    fn apply_linear(&self, g: f64, mu: f64, r: &DVector<f64>) -> DVector<f64> {
        self.op.apply(g, mu, r)
    }

    fn lipschitz_budget(&self) -> f64 {
        self.coeffs.lipschitz_budget
    }
}
