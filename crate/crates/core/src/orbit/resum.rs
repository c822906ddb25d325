//! The resummed boundary-value equations for the deviations.
//!
//! Each variable is iterated towards the end where its boundary condition
//! lives: `μ` is summed forward from the infrared end, `R` backward from the
//! ultraviolet end, and `δg` outward from the anchor `δg_0 = 0`.

use nalgebra::DVector;

use super::backbone::BackboneOrbit;
use super::sequence::DeviationSequence;
use crate::error::{Result, RgError};
use crate::model::Model;
use crate::remainder::{Remainder, Xi};

/// ξ values along the full trajectory `(ḡ_n + δg_n, μ_n, R_n)`.
pub fn eval_xi(seq: &DeviationSequence, backbone: &BackboneOrbit, rem: &dyn Remainder) -> Vec<Xi> {
    (0..seq.window.len())
        .map(|i| rem.xi(backbone.g_bar[i] + seq.dg[i], seq.mu[i], &seq.r[i]))
        .collect()
}

fn finite_or(v: &[f64], what: &'static str) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(RgError::NonFinite(what))
    }
}

/// `μ_n = −Σ_{p≥n} λ_μ^{−(p−n+1)} ξ_μ(p)`. Beyond the window ξ_μ is frozen
/// at its value on the last site, which sums to `−ξ_μ(N)/(λ_μ − 1)` there.
pub fn resum_mu_from(xi_mu: &[f64], lambda_mu: f64) -> Result<Vec<f64>> {
    let n = xi_mu.len();
    let mut mu = vec![0.0; n];
    if n == 0 {
        return Ok(mu);
    }
    mu[n - 1] = -xi_mu[n - 1] / (lambda_mu - 1.0);
    for i in (0..n - 1).rev() {
        mu[i] = (mu[i + 1] - xi_mu[i]) / lambda_mu;
    }
    finite_or(&mu, "resum_mu")?;
    Ok(mu)
}

pub fn resum_mu(
    seq: &DeviationSequence,
    backbone: &BackboneOrbit,
    model: &Model,
    rem: &dyn Remainder,
) -> Result<Vec<f64>> {
    let xi: Vec<f64> = eval_xi(seq, backbone, rem).into_iter().map(|x| x.mu).collect();
    resum_mu_from(&xi, model.consts.lambda_mu)
}

/// Bounded solution of `S = 𝓛^{(0,0)} S + ξ_R(0,0,0)`: the ultraviolet tail
/// with ξ_R frozen at the Gaussian fixed point.
pub fn gaussian_r_tail(rem: &dyn Remainder) -> DVector<f64> {
    let d = rem.dim();
    let zero = DVector::zeros(d);
    let source = rem.xi(0.0, 0.0, &zero).r;
    let mut s = source.clone();
    if source.iter().all(|&x| x == 0.0) {
        return s;
    }
    for _ in 0..10_000 {
        let next = rem.apply_linear(0.0, 0.0, &s) + &source;
        let change = (&next - &s).norm();
        s = next;
        if change <= 1e-17 * s.norm() {
            break;
        }
    }
    s
}

pub(crate) fn resum_r_from(
    seq: &DeviationSequence,
    backbone: &BackboneOrbit,
    xi: &[Xi],
    rem: &dyn Remainder,
) -> Result<Vec<DVector<f64>>> {
    let n = seq.window.len();
    let mut r = Vec::with_capacity(n);
    r.push(gaussian_r_tail(rem));
    for i in 0..n - 1 {
        let g = backbone.g_bar[i] + seq.dg[i];
        let next = rem.apply_linear(g, seq.mu[i], &r[i]) + &xi[i].r;
        r.push(next);
    }
    if r.iter().all(|v| v.iter().all(|x| x.is_finite())) {
        Ok(r)
    } else {
        Err(RgError::NonFinite("resum_R"))
    }
}

/// `R_n = Σ_{m≤n−1} 𝓛^{(n−1)}∘…∘𝓛^{(m+1)} ξ_R(m)`, the solution of
/// `R' = 𝓛R + ξ_R` that stays bounded at the ultraviolet end.
pub fn resum_r(
    seq: &DeviationSequence,
    backbone: &BackboneOrbit,
    _model: &Model,
    rem: &dyn Remainder,
) -> Result<Vec<DVector<f64>>> {
    let xi = eval_xi(seq, backbone, rem);
    resum_r_from(seq, backbone, &xi, rem)
}

/// Linear coefficients `A_n` along the backbone, rejecting near-zero values.
pub fn linear_coefficients(backbone: &BackboneOrbit, model: &Model) -> Result<Vec<f64>> {
    backbone
        .window
        .indices()
        .zip(&backbone.g_bar)
        .map(|(n, &gb)| {
            let a = model.linear_coefficient(gb);
            if a.abs() < 1e-12 {
                Err(RgError::SingularLinearization { n, value: a })
            } else {
                Ok(a)
            }
        })
        .collect()
}

/// Solves `δg_{n+1} = A_n δg_n + B_n` with `δg_0 = 0`, where
/// `B_n = −L^{2ε} a δg_n² + ξ_g(n)` uses the input deviations. Forward from
/// the anchor for `n > 0`, backward through `A_n^{-1}` for `n < 0`.
pub fn resum_dg_from(
    dg: &[f64],
    backbone: &BackboneOrbit,
    model: &Model,
    xi_g: &[f64],
) -> Result<Vec<f64>> {
    let a = linear_coefficients(backbone, model)?;
    let q = model.consts.quad_coeff;
    let b: Vec<f64> = dg.iter().zip(xi_g).map(|(&d, &x)| -q * d * d + x).collect();
    let n = dg.len();
    let i0 = backbone.window.index(0);
    let mut out = vec![0.0; n];
    for i in i0..n - 1 {
        out[i + 1] = a[i] * out[i] + b[i];
    }
    for i in (0..i0).rev() {
        out[i] = (out[i + 1] - b[i]) / a[i];
    }
    finite_or(&out, "resum_dg")?;
    Ok(out)
}

pub fn resum_dg(
    seq: &DeviationSequence,
    backbone: &BackboneOrbit,
    model: &Model,
    rem: &dyn Remainder,
) -> Result<Vec<f64>> {
    let xi: Vec<f64> = eval_xi(seq, backbone, rem).into_iter().map(|x| x.g).collect();
    resum_dg_from(&seq.dg, backbone, model, &xi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelParams;
    use crate::orbit::backbone::{build_backbone, Window};
    use crate::remainder::{CubicCoefficients, CubicRemainder};
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};

    /// Constant ξ's with `𝓛 = γ I`, for geometric-series oracles.
    struct ConstantXi {
        g: f64,
        mu: f64,
        r: DVector<f64>,
        gamma: f64,
    }

    impl Remainder for ConstantXi {
        fn dim(&self) -> usize {
            self.r.len()
        }
        fn xi(&self, _: f64, _: f64, _: &DVector<f64>) -> Xi {
            Xi {
                g: self.g,
                mu: self.mu,
                r: self.r.clone(),
            }
        }
        fn apply_linear(&self, _: f64, _: f64, r: &DVector<f64>) -> DVector<f64> {
            r * self.gamma
        }
        fn lipschitz_budget(&self) -> f64 {
            0.0
        }
    }

    fn setup(n: i64) -> (Model, BackboneOrbit) {
        let m = Model::new(ModelParams::default()).unwrap();
        let b = build_backbone(&m, 0.25, Window::symmetric(n).unwrap(), true).unwrap();
        (m, b)
    }

    #[test]
    fn zero_xi_gives_zero_mu_and_r() {
        let (m, b) = setup(20);
        let rem = CubicRemainder::zero(&m.params);
        let seq = DeviationSequence::zeros(b.window, 3);
        assert!(resum_mu(&seq, &b, &m, &rem).unwrap().iter().all(|&x| x == 0.0));
        assert!(resum_r(&seq, &b, &m, &rem).unwrap().iter().all(|v| v.norm() == 0.0));
        assert!(resum_dg(&seq, &b, &m, &rem).unwrap().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn constant_xi_mu_geometric_series() {
        let (m, b) = setup(20);
        let c = 0.37;
        let rem = ConstantXi {
            g: 0.0,
            mu: c,
            r: DVector::zeros(2),
            gamma: 0.5,
        };
        let seq = DeviationSequence::zeros(b.window, 2);
        let mu = resum_mu(&seq, &b, &m, &rem).unwrap();
        let inv = 1.0 / m.consts.lambda_mu;
        let expect = -c * inv / (1.0 - inv);
        for x in mu {
            assert_relative_eq!(x, expect, max_relative = 1e-14);
        }
    }

    #[test]
    fn constant_xi_r_geometric_series() {
        let (m, b) = setup(15);
        let v = DVector::from_vec(vec![0.3, -1.2]);
        let rem = ConstantXi {
            g: 0.0,
            mu: 0.0,
            r: v.clone(),
            gamma: 0.6,
        };
        let seq = DeviationSequence::zeros(b.window, 2);
        let r = resum_r(&seq, &b, &m, &rem).unwrap();
        let expect = &v / (1.0 - 0.6);
        for x in r {
            assert!((x - &expect).norm() < 1e-14);
        }
    }

    #[test]
    fn impulse_in_b_matches_unrolled_product() {
        let (m, b) = setup(12);
        // B_m = δ_{m,0} b through an xi_g that is nonzero only at index of n = 0.
        let i0 = b.window.index(0);
        let amp = 1e-3;
        let mut xi_g = vec![0.0; b.window.len()];
        xi_g[i0] = amp;
        let dg = resum_dg_from(&vec![0.0; b.window.len()], &b, &m, &xi_g).unwrap();
        for n in b.window.indices() {
            let got = dg[b.window.index(n)];
            if n <= 0 {
                assert_eq!(got, 0.0);
            } else {
                let prod: f64 = (1..n).map(|k| m.linear_coefficient(b.at(k))).product();
                assert_relative_eq!(got, amp * prod, max_relative = 1e-13);
            }
        }
    }

    #[test]
    fn dg_unrolled_sums_for_generic_b() {
        let (m, b) = setup(10);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let n = b.window.len();
        let xi_g: Vec<f64> = (0..n).map(|_| rng.gen_range(-1e-4..1e-4)).collect();
        let dg_in: Vec<f64> = (0..n).map(|_| rng.gen_range(-1e-3..1e-3)).collect();
        let out = resum_dg_from(&dg_in, &b, &m, &xi_g).unwrap();
        let q = m.consts.quad_coeff;
        let bb = |mm: i64| {
            let i = b.window.index(mm);
            -q * dg_in[i] * dg_in[i] + xi_g[i]
        };
        let a = |k: i64| m.linear_coefficient(b.at(k));
        for nn in b.window.indices() {
            let expect = if nn >= 1 {
                (0..nn)
                    .map(|mm| (mm + 1..nn).map(a).product::<f64>() * bb(mm))
                    .sum::<f64>()
            } else if nn <= -1 {
                -(nn..=-1)
                    .map(|mm| (nn..=mm).map(|k| 1.0 / a(k)).product::<f64>() * bb(mm))
                    .sum::<f64>()
            } else {
                0.0
            };
            assert!((out[b.window.index(nn)] - expect).abs() < 1e-16, "n = {nn}");
        }
    }

    #[test]
    fn recursion_identities_for_cubic_model() {
        let (m, b) = setup(60);
        let rem = CubicRemainder::unchecked(&m.params, CubicCoefficients::default());
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        let mut seq = DeviationSequence::zeros(b.window, 3);
        for i in 0..b.window.len() {
            let s = b.g_bar[i];
            seq.dg[i] = rng.gen_range(-1.0..1.0) * s * s;
            seq.mu[i] = rng.gen_range(-1.0..1.0) * s * s;
            seq.r[i] = DVector::from_fn(3, |_, _| rng.gen_range(-1.0..1.0) * s * s * s);
        }
        let xi = eval_xi(&seq, &b, &rem);
        let mu = resum_mu(&seq, &b, &m, &rem).unwrap();
        let r = resum_r(&seq, &b, &m, &rem).unwrap();
        let dg = resum_dg(&seq, &b, &m, &rem).unwrap();
        let lm = m.consts.lambda_mu;
        let q = m.consts.quad_coeff;
        let i0 = b.window.index(0);
        assert_eq!(dg[i0], 0.0);
        for i in 0..b.window.len() - 1 {
            assert!((mu[i + 1] - lm * mu[i] - xi[i].mu).abs() < 1e-12);
            let g = b.g_bar[i] + seq.dg[i];
            let pred = rem.apply_linear(g, seq.mu[i], &r[i]) + &xi[i].r;
            assert!((&r[i + 1] - pred).norm() < 1e-12);
            let a = m.linear_coefficient(b.g_bar[i]);
            let bn = -q * seq.dg[i] * seq.dg[i] + xi[i].g;
            assert!((dg[i + 1] - a * dg[i] - bn).abs() < 1e-12);
        }
        // decay towards the ultraviolet end at a rate bounded by max A_k^{-1}
        let amax_inv = (0..i0)
            .map(|i| 1.0 / m.linear_coefficient(b.g_bar[i]))
            .fold(0.0, f64::max);
        assert!(amax_inv < 1.0);
        assert!(dg[0].abs() < dg[i0 - 1].abs());
    }

    #[test]
    fn gaussian_tail_solves_neumann_series() {
        let rem = ConstantXi {
            g: 0.0,
            mu: 0.0,
            r: DVector::from_vec(vec![1.0, 2.0, 3.0]),
            gamma: 0.25,
        };
        let s = gaussian_r_tail(&rem);
        assert!((s - DVector::from_vec(vec![1.0, 2.0, 3.0]) / 0.75).norm() < 1e-14);
    }
}
