//! Effective potentials in the Wick basis and one step of the recursion
//! `V′(ψ) = −L^d log ∫ dγ_{σΓ²}(ζ) exp[−V(L^{−[φ]}ψ + ζ)]`.

use serde::{Deserialize, Serialize};

use super::quadrature::{gauss_hermite_rule, hermite_all, hermite_norm_sq, hermite_monomials, GaussHermiteRule};
use crate::error::{Result, RgError};

/// Share of the quadrature sum carried by the outermost node pair above
/// which the integrand is considered unresolved.
const TAIL_SHARE_MAX: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HierParams {
    /// Integer block ratio.
    pub l: u32,
    pub d: u32,
    pub epsilon: f64,
    /// Potentials keep monomials up to `φ^{2m}`.
    pub m: usize,
    /// Order of the fluctuation quadrature.
    pub q: usize,
    /// Fluctuation variance; `None` means `(1 − L^{−2[φ]})/(2[φ])`.
    pub sigma_gamma_sq: Option<f64>,
    /// `|μ|` beyond which a flow counts as having left the critical region.
    pub mu_escape: f64,
}

impl Default for HierParams {
    fn default() -> Self {
        Self {
            l: 2,
            d: 3,
            epsilon: 0.1,
            m: 4,
            q: 64,
            sigma_gamma_sq: None,
            mu_escape: 0.5,
        }
    }
}

impl HierParams {
    pub fn new(l: u32, epsilon: f64) -> Result<Self> {
        let p = Self {
            l,
            epsilon,
            ..Self::default()
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(RgError::InvalidParams(m.to_string()));
        if self.l < 2 {
            return bad("hierarchical block ratio L must be an integer >= 2");
        }
        if self.d == 0 {
            return bad("dimension d must be positive");
        }
        if !(self.epsilon.is_finite() && self.epsilon > 0.0 && self.epsilon < self.d as f64) {
            return bad("epsilon must lie in (0, d)");
        }
        if self.m < 2 {
            return bad("potential half-degree m must be >= 2");
        }
        if self.q < 2 * self.m + 1 {
            return bad("quadrature order q must be >= 2m+1");
        }
        if let Some(s) = self.sigma_gamma_sq {
            if !(s.is_finite() && s > 0.0) {
                return bad("sigma_gamma_sq must be positive");
            }
        }
        if !(self.mu_escape.is_finite() && self.mu_escape > 0.0) {
            return bad("mu_escape must be positive");
        }
        Ok(())
    }

    /// `[φ] = (d − ε)/4`.
    pub fn phi_dim(&self) -> f64 {
        (self.d as f64 - self.epsilon) / 4.0
    }

    /// Field rescaling factor `L^{−[φ]}`.
    pub fn field_scale(&self) -> f64 {
        (self.l as f64).powf(-self.phi_dim())
    }

    pub fn sigma_gamma_sq(&self) -> f64 {
        self.sigma_gamma_sq.unwrap_or_else(|| {
            let p = self.phi_dim();
            (1.0 - (self.l as f64).powf(-2.0 * p)) / (2.0 * p)
        })
    }

    /// Variance of the Wick basis, `σΓ²/(1 − L^{−2[φ]})`. With this choice
    /// the recursion linearized at `V ≡ 0` is diagonal in the basis.
    pub fn reference_variance(&self) -> f64 {
        let s = self.field_scale();
        self.sigma_gamma_sq() / (1.0 - s * s)
    }

    /// `L^{d − k[φ]}`, the linear eigenvalue of `He_k`.
    pub fn linear_eigenvalue(&self, k: usize) -> f64 {
        (self.l as f64).powf(self.d as f64 - k as f64 * self.phi_dim())
    }
}

/// Even Wick coefficients `(v_2, v_4, …, v_{2m})` of
/// `V(φ) = Σ v_k [He_k(φ) − He_k(0)]`, so that `V(0) = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PotentialCoeffs {
    pub v: Vec<f64>,
}

impl PotentialCoeffs {
    pub fn zero(m: usize) -> Self {
        Self { v: vec![0.0; m] }
    }

    /// `μ He_2 + g He_4`.
    pub fn from_couplings(g: f64, mu: f64, m: usize) -> Self {
        let mut v = vec![0.0; m.max(2)];
        v[0] = mu;
        v[1] = g;
        Self { v }
    }

    pub fn m(&self) -> usize {
        self.v.len()
    }

    /// Coefficient of `He_k` for even `k ≥ 2`.
    pub fn coeff(&self, k: usize) -> f64 {
        debug_assert!(k >= 2 && k.is_multiple_of(2));
        self.v.get(k / 2 - 1).copied().unwrap_or(0.0)
    }

    pub fn is_finite(&self) -> bool {
        self.v.iter().all(|x| x.is_finite())
    }

    /// Evaluates `V(x)` for the basis variance `var`.
    pub fn value(&self, x: f64, var: f64) -> f64 {
        let he = hermite_all(2 * self.v.len(), x, var);
        let he0 = hermite_all(2 * self.v.len(), 0.0, var);
        self.v
            .iter()
            .enumerate()
            .map(|(j, c)| c * (he[2 * j + 2] - he0[2 * j + 2]))
            .sum()
    }

    /// Ordinary-polynomial coefficients, lowest degree first.
    pub fn monomials(&self, var: f64) -> Vec<f64> {
        let deg = 2 * self.v.len();
        let mut out = vec![0.0; deg + 1];
        for (j, c) in self.v.iter().enumerate() {
            for (i, h) in hermite_monomials(2 * j + 2, var).iter().enumerate() {
                out[i] += c * h;
            }
        }
        out[0] = 0.0;
        out
    }

    /// Leading monomial coefficient, i.e. the highest nonzero Wick
    /// coefficient (`He_k` has leading term `x^k`). `None` for `V ≡ 0`.
    ///
    /// No tolerance is applied: near the Gaussian point the coefficients
    /// are naturally graded, `v_{2k} ∼ g^{k−1}`, so any relative cutoff
    /// would misjudge weakly coupled potentials.
    pub fn leading_coefficient(&self) -> Option<f64> {
        self.v.iter().rev().find(|c| **c != 0.0).copied()
    }

    pub fn check_stable(&self) -> Result<()> {
        if !self.is_finite() {
            return Err(RgError::NonFinite("potential"));
        }
        match self.leading_coefficient() {
            Some(c) if c <= 0.0 => Err(RgError::UnstablePotential(c)),
            _ => Ok(()),
        }
    }
}

/// `e^{−u} − 1 + u`, accurate for small `u`.
fn exp_m1_plus(u: f64) -> f64 {
    if u.abs() < 1e-3 {
        u * u * (0.5 - u * (1.0 / 6.0 - u * (1.0 / 24.0 - u / 120.0)))
    } else {
        (-u).exp_m1() + u
    }
}

fn hermite_at_zero(k: usize, var: f64) -> f64 {
    hermite_all(k, 0.0, var)[k]
}

fn horner(c: &[f64], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, a| acc * x + a)
}

/// `(g, μ) = (v_4, v_2)`.
pub fn extract_couplings(v: &PotentialCoeffs) -> (f64, f64) {
    (v.coeff(4), v.coeff(2))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepDiagnostics {
    /// Weighted RMS misfit of the projection at the collocation nodes (the
    /// linear part is represented exactly and does not contribute).
    pub projection_residual: f64,
    /// Largest odd part `|V′(ψ) − V′(−ψ)|/2` over the collocation nodes.
    pub odd_misfit: f64,
}

/// Precomputed quadrature and projection data for repeated steps.
#[derive(Debug, Clone)]
pub struct HierStepper {
    params: HierParams,
    inner: GaussHermiteRule,
    colloc: GaussHermiteRule,
    /// `He_{2j}(ψ_i)` for `j = 0..=m` at each collocation node.
    basis: Vec<Vec<f64>>,
    norms: Vec<f64>,
}

impl HierStepper {
    pub fn new(params: &HierParams) -> Result<Self> {
        params.validate()?;
        let var = params.reference_variance();
        let inner = gauss_hermite_rule(params.q, params.sigma_gamma_sq());
        // 4m nodes make the discrete inner product exact on the basis
        let colloc = gauss_hermite_rule(4 * params.m, var);
        let basis = colloc
            .nodes()
            .iter()
            .map(|&x| {
                let he = hermite_all(2 * params.m, x, var);
                (0..=params.m).map(|j| he[2 * j]).collect()
            })
            .collect();
        let norms = (0..=params.m).map(|j| hermite_norm_sq(2 * j, var)).collect();
        Ok(Self {
            params: params.clone(),
            inner,
            colloc,
            basis,
            norms,
        })
    }

    pub fn params(&self) -> &HierParams {
        &self.params
    }

    /// Nonlinear part `−L^d log ∫ dγ exp(−U)` of the blocked potential at
    /// `ψ`, where `U = V(sψ + ζ) − 𝔼V(sψ + ζ)` is the centered fluctuation.
    /// The integral is accumulated as `1 + 𝔼[e^{−U} − 1 + U]`, which is free
    /// of cancellation because `𝔼U = 0` holds exactly for the rule; a
    /// log-sum-exp takes over only if that sum overflows.
    fn blocked_nonlinear(&self, poly: &[f64], mean: f64, psi: f64) -> Result<f64> {
        let s = self.params.field_scale();
        let l_d = (self.params.l as f64).powi(self.params.d as i32);
        let u: Vec<f64> = self.inner.nodes().iter().map(|&z| horner(poly, s * psi + z) - mean).collect();
        if u.iter().any(|x| !x.is_finite()) {
            return Err(RgError::QuadratureOverflow);
        }
        let w = self.inner.weights();
        let lw = self.inner.ln_weights();
        let e: f64 = u
            .iter()
            .zip(w.iter().zip(lw))
            .map(|(&x, (&wk, &lwk))| {
                if x.abs() <= 1.0 {
                    wk * exp_m1_plus(x)
                } else {
                    (lwk - x).exp() - wk + wk * x
                }
            })
            .sum();
        let last = u.len() - 1;
        let tail = (lw[0] - u[0]).exp() + (lw[last] - u[last]).exp();
        if e.is_finite() {
            if tail > TAIL_SHARE_MAX * (1.0 + e) {
                return Err(RgError::QuadratureOverflow);
            }
            return Ok(-l_d * e.ln_1p());
        }
        let terms: Vec<f64> = u.iter().zip(lw).map(|(x, l)| l - x).collect();
        let top = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let shares: Vec<f64> = terms.iter().map(|t| (t - top).exp()).collect();
        let total: f64 = shares.iter().sum();
        if shares[0] + shares[last] > TAIL_SHARE_MAX * total {
            return Err(RgError::QuadratureOverflow);
        }
        Ok(-l_d * (top + total.ln()))
    }

    /// One recursion step, projected back onto the Wick basis.
    pub fn step(&self, v: &PotentialCoeffs) -> Result<(PotentialCoeffs, StepDiagnostics)> {
        if v.m() != self.params.m {
            return Err(RgError::InvalidParams(format!(
                "potential has {} coefficients, expected m = {}",
                v.m(),
                self.params.m
            )));
        }
        v.check_stable()?;
        self.step_unchecked(v)
    }

    /// [`HierStepper::step`] without the leading-coefficient test; the
    /// quadrature tail test still rejects potentials that are unbounded
    /// below at the scale of the nodes.
    pub fn step_unchecked(&self, v: &PotentialCoeffs) -> Result<(PotentialCoeffs, StepDiagnostics)> {
        let var = self.params.reference_variance();
        let poly = v.monomials(var);
        let s = self.params.field_scale();
        let l_d = (self.params.l as f64).powi(self.params.d as i32);
        let he0: Vec<f64> = (1..=self.params.m).map(|j| hermite_at_zero(2 * j, var)).collect();
        // Gaussian smoothing maps He_k(sψ + ·; σ_ref²) to s^k He_k(ψ; σ_ref²),
        // so the mean of the blocked potential is known in closed form.
        let linear: Vec<f64> = v.v.iter().enumerate().map(|(j, c)| c * s.powi(2 * j as i32 + 2)).collect();
        let values = self
            .colloc
            .nodes()
            .iter()
            .zip(&self.basis)
            .map(|(&psi, b)| {
                let mean: f64 = v
                    .v
                    .iter()
                    .enumerate()
                    .map(|(j, c)| c * (s.powi(2 * j as i32 + 2) * b[j + 1] - he0[j]))
                    .sum();
                self.blocked_nonlinear(&poly, mean, psi)
            })
            .collect::<Result<Vec<f64>>>()?;
        // The basis is orthogonal for the discrete collocation inner product,
        // so the weighted least-squares fit reduces to projections.
        let w = self.colloc.weights();
        let coeffs: Vec<f64> = (0..=self.params.m)
            .map(|j| {
                values
                    .iter()
                    .zip(w)
                    .zip(&self.basis)
                    .map(|((f, wi), b)| wi * f * b[j])
                    .sum::<f64>()
                    / self.norms[j]
            })
            .collect();
        let mut sq = 0.0;
        for ((f, wi), b) in values.iter().zip(w).zip(&self.basis) {
            let fit: f64 = coeffs.iter().zip(b).map(|(c, h)| c * h).sum();
            sq += wi * (f - fit).powi(2);
        }
        let n = values.len();
        let odd_misfit = (0..n / 2)
            .map(|i| 0.5 * (values[i] - values[n - 1 - i]).abs())
            .fold(0.0, f64::max);
        let out = PotentialCoeffs {
            v: linear.iter().zip(&coeffs[1..]).map(|(lin, nl)| l_d * lin + nl).collect(),
        };
        if !out.is_finite() {
            return Err(RgError::QuadratureOverflow);
        }
        Ok((
            out,
            StepDiagnostics {
                projection_residual: sq.sqrt(),
                odd_misfit,
            },
        ))
    }
}

/// One step of the hierarchical recursion with a fresh [`HierStepper`].
pub fn rg_step_potential(v: &PotentialCoeffs, p: &HierParams) -> Result<PotentialCoeffs> {
    Ok(HierStepper::new(p)?.step(v)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{derive_constants, ModelParams};

    #[test]
    fn validation() {
        assert!(HierParams::default().validate().is_ok());
        for p in [
            HierParams { l: 1, ..HierParams::default() },
            HierParams { m: 1, ..HierParams::default() },
            HierParams { m: 4, q: 8, ..HierParams::default() },
            HierParams { epsilon: 0.0, ..HierParams::default() },
            HierParams { sigma_gamma_sq: Some(-1.0), ..HierParams::default() },
            HierParams { mu_escape: 0.0, ..HierParams::default() },
        ] {
            assert!(matches!(p.validate(), Err(RgError::InvalidParams(_))), "{p:?}");
        }
        assert!(HierParams { m: 4, q: 9, ..HierParams::default() }.validate().is_ok());
    }

    #[test]
    fn variances_match_the_truncated_model() {
        let p = HierParams::default();
        let c = derive_constants(&ModelParams::default()).unwrap();
        assert!((p.sigma_gamma_sq() - c.sigma_gamma_sq).abs() < 1e-15);
        assert!((p.phi_dim() - c.phi_dim).abs() < 1e-15);
        assert!((p.reference_variance() - 1.0 / (2.0 * p.phi_dim())).abs() < 1e-14);
        assert!((p.linear_eigenvalue(4) - c.lambda_g).abs() < 1e-14);
        assert!((p.linear_eigenvalue(2) - c.lambda_mu).abs() < 1e-14);
        let custom = HierParams { sigma_gamma_sq: Some(0.3), ..p };
        assert_eq!(custom.sigma_gamma_sq(), 0.3);
    }

    #[test]
    fn potential_forms_agree() {
        let var = 0.7;
        let v = PotentialCoeffs { v: vec![0.3, -0.2, 0.05, 0.01] };
        let mono = v.monomials(var);
        assert_eq!(mono[0], 0.0);
        assert_eq!(mono[8], 0.01);
        for &x in &[-2.0, -0.3, 0.0, 1.1, 3.0] {
            let poly: f64 = mono.iter().enumerate().map(|(i, a)| a * f64::powi(x, i as i32)).sum();
            assert!((poly - v.value(x, var)).abs() < 1e-12);
        }
        assert_eq!(v.value(0.0, var), 0.0);
    }

    #[test]
    fn couplings_and_stability() {
        let v = PotentialCoeffs::from_couplings(0.02, -0.1, 4);
        assert_eq!(extract_couplings(&v), (0.02, -0.1));
        assert_eq!(extract_couplings(&PotentialCoeffs::zero(4)), (0.0, 0.0));
        assert!(v.check_stable().is_ok());
        assert!(PotentialCoeffs::zero(4).check_stable().is_ok());
        assert!(matches!(
            PotentialCoeffs::from_couplings(-0.02, 0.0, 4).check_stable(),
            Err(RgError::UnstablePotential(_))
        ));
        let graded = PotentialCoeffs { v: vec![1e-5, 1e-6, -1e-12, 1e-18] };
        assert!(graded.check_stable().is_ok());
        let bad = PotentialCoeffs { v: vec![0.0, 0.02, 0.0, -1e-9] };
        assert!(matches!(bad.check_stable(), Err(RgError::UnstablePotential(_))));
    }

    #[test]
    fn gaussian_point_is_fixed() {
        let p = HierParams::default();
        let (out, diag) = HierStepper::new(&p).unwrap().step(&PotentialCoeffs::zero(p.m)).unwrap();
        assert_eq!(out, PotentialCoeffs::zero(p.m));
        assert_eq!(diag.projection_residual, 0.0);
    }

    #[test]
    fn unstable_input_rejected() {
        let p = HierParams::default();
        let v = PotentialCoeffs::from_couplings(-0.01, 0.0, p.m);
        assert!(matches!(rg_step_potential(&v, &p), Err(RgError::UnstablePotential(_))));
        let wrong_len = PotentialCoeffs::zero(3);
        assert!(matches!(rg_step_potential(&wrong_len, &p), Err(RgError::InvalidParams(_))));
    }

    #[test]
    fn deep_wells_overflow_the_quadrature() {
        let p = HierParams::default();
        let v = PotentialCoeffs { v: vec![-40.0, 0.01, 0.0, 0.0] };
        assert_eq!(rg_step_potential(&v, &p), Err(RgError::QuadratureOverflow));
    }

    #[test]
    fn odd_sector_stays_at_roundoff() {
        let p = HierParams::default();
        let st = HierStepper::new(&p).unwrap();
        let mut v = PotentialCoeffs::from_couplings(0.004, 2e-4, p.m);
        for _ in 0..10 {
            let (next, diag) = st.step(&v).unwrap();
            assert!(diag.odd_misfit < 1e-14, "{}", diag.odd_misfit);
            v = next;
        }
    }

    #[test]
    fn small_quartic_grows_like_the_linear_eigenvalue() {
        let p = HierParams::default();
        let g = 1e-7;
        let out = rg_step_potential(&PotentialCoeffs::from_couplings(g, 0.0, p.m), &p).unwrap();
        assert!((out.coeff(4) / g - p.linear_eigenvalue(4)).abs() < 1e-5);
        assert!(out.coeff(2).abs() < 1e-4 * g);
    }
}
