//! Fixed points, finite-difference linearization, spectra, critical
//! exponents and tangent directions of the invariant manifolds.

use nalgebra::{DMatrix, DVector, Schur};
pub use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Result, RgError};
use crate::model::{Model, RGState};
use crate::remainder::Remainder;

const NEWTON_TOL: f64 = 1e-12;
const NEWTON_MAX_ITERS: usize = 100;
const MAX_HALVINGS: usize = 30;
const MARGINAL_BAND: f64 = 1e-8;

/// Damped Newton solve of `bms_step(x) = x`.
pub fn newton_fixed_point(start: &RGState, model: &Model, rem: &dyn Remainder) -> Result<RGState> {
    let residual = |x: &DVector<f64>| -> Result<DVector<f64>> {
        let s = RGState::from_vector(x);
        Ok(model.step(&s, rem)?.to_vector() - x)
    };
    let mut x = start.to_vector();
    let mut fx = residual(&x)?;
    let n = x.len();
    for _ in 0..NEWTON_MAX_ITERS {
        let norm = fx.norm();
        if norm < NEWTON_TOL {
            return Ok(RGState::from_vector(&x));
        }
        let jac = jacobian_fd(&RGState::from_vector(&x), model, rem)? - DMatrix::identity(n, n);
        let delta = jac.lu().solve(&(-&fx)).ok_or(RgError::SingularJacobian)?;
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..=MAX_HALVINGS {
            let trial = &x + &delta * t;
            if let Ok(ft) = residual(&trial) {
                if ft.norm() < norm {
                    x = trial;
                    fx = ft;
                    accepted = true;
                    break;
                }
            }
            t *= 0.5;
        }
        if !accepted {
            return Err(RgError::NewtonDiverged(norm));
        }
    }
    Err(RgError::NewtonDiverged(fx.norm()))
}

/// Central-difference Jacobian of the RG step with `h_i = 1e-6 max(1, |x_i|)`,
/// unless the remainder supplies its own.
pub fn jacobian_fd(x: &RGState, model: &Model, rem: &dyn Remainder) -> Result<DMatrix<f64>> {
    if let Some(jac) = rem.step_jacobian(x) {
        return jac;
    }
    jacobian_fd_with_step(x, model, rem, 1e-6)
}

/// Central-difference Jacobian with relative step `rel_step`.
pub fn jacobian_fd_with_step(
    x: &RGState,
    model: &Model,
    rem: &dyn Remainder,
    rel_step: f64,
) -> Result<DMatrix<f64>> {
    let base = x.to_vector();
    let n = base.len();
    let mut jac = DMatrix::zeros(n, n);
    for j in 0..n {
        let h = rel_step * base[j].abs().max(1.0);
        let mut xp = base.clone();
        let mut xm = base.clone();
        xp[j] += h;
        xm[j] -= h;
        let fp = model.step(&RGState::from_vector(&xp), rem)?.to_vector();
        let fm = model.step(&RGState::from_vector(&xm), rem)?.to_vector();
        jac.set_column(j, &((fp - fm) / (2.0 * h)));
    }
    if jac.iter().all(|v| v.is_finite()) {
        Ok(jac)
    } else {
        Err(RgError::NonFinite("jacobian_fd"))
    }
}

/// Eigenpairs sorted by modulus, largest first.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenDecomposition {
    pub values: Vec<Complex64>,
    /// Unit eigenvectors, `vectors[k]` belonging to `values[k]`.
    pub vectors: Vec<DVector<Complex64>>,
}

fn to_complex(m: &DMatrix<f64>) -> DMatrix<Complex64> {
    m.map(|v| Complex64::new(v, 0.0))
}

fn residual_norm(a: &DMatrix<Complex64>, lambda: Complex64, v: &DVector<Complex64>) -> f64 {
    (a * v - v * lambda).norm()
}

/// Full spectrum of a dense real matrix. Eigenvalues come from a real Schur
/// form; each eigenvector is obtained by shifted inverse iteration, with the
/// eigenvalue refined by its Rayleigh quotient until `‖Av − λv‖ < 1e-10`.
pub fn eigen(matrix: &DMatrix<f64>) -> Result<EigenDecomposition> {
    if !matrix.is_square() {
        return Err(RgError::InvalidParams("eigen needs a square matrix".into()));
    }
    if matrix.iter().any(|v| !v.is_finite()) {
        return Err(RgError::NonFinite("eigen"));
    }
    let n = matrix.nrows();
    if n == 0 {
        return Ok(EigenDecomposition {
            values: vec![],
            vectors: vec![],
        });
    }
    let schur = Schur::try_new(matrix.clone(), f64::EPSILON, 10_000)
        .ok_or_else(|| RgError::NoConvergence("Schur iteration".into()))?;
    let mut raw: Vec<Complex64> = schur.complex_eigenvalues().iter().cloned().collect();
    raw.sort_by(|a, b| {
        b.norm()
            .total_cmp(&a.norm())
            .then(b.re.total_cmp(&a.re))
            .then(b.im.total_cmp(&a.im))
    });

    let a = to_complex(matrix);
    let scale = matrix.norm().max(1.0);
    let tol = 1e-10 * scale;
    let mut values = Vec::with_capacity(n);
    let mut vectors: Vec<DVector<Complex64>> = Vec::with_capacity(n);
    for (k, &lambda0) in raw.iter().enumerate() {
        // earlier eigenvectors of the same cluster, to keep copies independent
        let cluster: Vec<usize> = (0..k)
            .filter(|&j| (raw[j] - lambda0).norm() <= 1e-8 * scale)
            .collect();
        let shift = lambda0 + Complex64::new(1e-10, 1e-10) * scale;
        let shifted = &a - DMatrix::<Complex64>::identity(n, n) * shift;
        let lu = shifted.lu();
        let mut v = DVector::from_fn(n, |i, _| {
            Complex64::new(1.0 + 0.1 * i as f64 + cluster.len() as f64 * (i % 3) as f64, 0.05 * (i as f64))
        });
        let mut lambda = lambda0;
        let mut ok = false;
        for _ in 0..100 {
            for &j in &cluster {
                let u = &vectors[j];
                let proj = u.dotc(&v);
                v -= u * proj;
            }
            let mut next = match lu.solve(&v) {
                Some(s) => s,
                None => {
                    // exact shift hit: v already spans the null space direction
                    v.clone()
                }
            };
            let nrm = next.norm();
            if !(nrm.is_finite() && nrm > 0.0) {
                return Err(RgError::NoConvergence(format!("inverse iteration for {lambda0}")));
            }
            next /= Complex64::new(nrm, 0.0);
            v = next;
            let rq = v.dotc(&(&a * &v));
            if residual_norm(&a, rq, &v) < tol {
                lambda = rq;
                ok = true;
                break;
            }
            if residual_norm(&a, lambda0, &v) < tol {
                ok = true;
                break;
            }
        }
        if !ok {
            return Err(RgError::NoConvergence(format!(
                "eigenvector residual for {lambda0} above {tol:e}"
            )));
        }
        // fix the phase: largest component real and positive
        let (imax, _) = v
            .iter()
            .enumerate()
            .fold((0, -1.0), |acc, (i, c)| if c.norm() > acc.1 { (i, c.norm()) } else { acc });
        let phase = v[imax] / Complex64::new(v[imax].norm(), 0.0);
        v /= phase;
        // snap real eigenvalues of real matrices to the real axis
        if lambda0.im == 0.0 {
            lambda = Complex64::new(lambda.re, 0.0);
            v = v.map(|c| Complex64::new(c.re, 0.0));
            let nrm = v.norm();
            v /= Complex64::new(nrm, 0.0);
        }
        values.push(lambda);
        vectors.push(v);
    }
    Ok(EigenDecomposition { values, vectors })
}

/// Index of the eigenvector with the largest component along `axis`,
/// skipping `exclude`.
fn dominant_index(eig: &EigenDecomposition, axis: usize, exclude: Option<usize>) -> Option<usize> {
    (0..eig.values.len())
        .filter(|&k| Some(k) != exclude)
        .max_by(|&i, &j| eig.vectors[i][axis].norm().total_cmp(&eig.vectors[j][axis].norm()))
}

/// Critical exponents `(ν, ω_corr)` from a spectrum in `(g, μ, R)`
/// coordinates.
///
/// `ν = ln L / ln λ_μ` with `λ_μ` the eigenvalue whose eigenvector has the
/// largest μ-component. `ω_corr = −ln|λ_g| / ln L` with `λ_g` the remaining
/// eigenvalue with the largest g-component; at an infrared fixed point this
/// is the leading contracting g-direction, at the Gaussian point it is
/// expanding and `ω_corr` comes out negative.
pub fn exponents(eig: &EigenDecomposition, l: f64) -> Result<(f64, f64)> {
    if eig.values.len() < 2 {
        return Err(RgError::DegenerateSpectrum("need at least g and mu directions".into()));
    }
    let imu = dominant_index(eig, 1, None).expect("nonempty spectrum");
    let lmu = eig.values[imu];
    if lmu.im.abs() > 1e-12 * lmu.norm() || lmu.re <= 1.0 {
        return Err(RgError::DegenerateSpectrum(format!(
            "mu-dominant eigenvalue {lmu} is not real and expanding"
        )));
    }
    for (k, v) in eig.values.iter().enumerate() {
        if k != imu && (v - lmu).norm() <= 1e-8 * lmu.norm() {
            return Err(RgError::DegenerateSpectrum(format!(
                "mu-dominant eigenvalue {lmu} is not isolated"
            )));
        }
    }
    let ig = dominant_index(eig, 0, Some(imu)).expect("at least two eigenvalues");
    let nu = l.ln() / lmu.re.ln();
    let omega = -eig.values[ig].norm().ln() / l.ln();
    Ok((nu, omega))
}

/// Real bases of the expanding and contracting eigenspaces.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifoldTangents {
    pub expanding_values: Vec<Complex64>,
    pub expanding: Vec<DVector<f64>>,
    pub contracting_values: Vec<Complex64>,
    pub contracting: Vec<DVector<f64>>,
}

fn real_basis(eig: &EigenDecomposition, pick: impl Fn(f64) -> bool) -> (Vec<Complex64>, Vec<DVector<f64>>) {
    let mut values = Vec::new();
    let mut basis: Vec<DVector<f64>> = Vec::new();
    let push = |v: DVector<f64>, basis: &mut Vec<DVector<f64>>| {
        let mut v = v;
        for b in basis.iter() {
            let p = b.dot(&v);
            v -= b * p;
        }
        let nrm = v.norm();
        if nrm > 1e-12 {
            basis.push(v / nrm);
        }
    };
    for (lambda, vec) in eig.values.iter().zip(&eig.vectors) {
        if !pick(lambda.norm()) {
            continue;
        }
        values.push(*lambda);
        if lambda.im.abs() <= 1e-14 * lambda.norm().max(1.0) {
            push(vec.map(|c| c.re), &mut basis);
        } else if lambda.im > 0.0 {
            // one member of each conjugate pair contributes Re and Im parts
            push(vec.map(|c| c.re), &mut basis);
            push(vec.map(|c| c.im), &mut basis);
        }
    }
    (values, basis)
}

/// Tangent spaces of the unstable (|λ| > 1) and stable (|λ| < 1) manifolds
/// of a fixed point.
pub fn manifold_tangents(
    fixed_point: &RGState,
    model: &Model,
    rem: &dyn Remainder,
) -> Result<ManifoldTangents> {
    let eig = eigen(&jacobian_fd(fixed_point, model, rem)?)?;
    tangents_from_spectrum(&eig)
}

pub fn tangents_from_spectrum(eig: &EigenDecomposition) -> Result<ManifoldTangents> {
    if let Some(v) = eig
        .values
        .iter()
        .find(|v| (v.norm() - 1.0).abs() <= MARGINAL_BAND)
    {
        return Err(RgError::MarginalEigenvalue(v.norm()));
    }
    let (expanding_values, expanding) = real_basis(eig, |m| m > 1.0);
    let (contracting_values, contracting) = real_basis(eig, |m| m < 1.0);
    Ok(ManifoldTangents {
        expanding_values,
        expanding,
        contracting_values,
        contracting,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Classification {
    pub expanding: usize,
    pub contracting: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralReport {
    pub fixed_point: RGState,
    pub eigenvalues: Vec<Complex64>,
    pub nu: f64,
    pub omega_corr: f64,
    pub classification: Classification,
}

/// Linearizes at `fixed_point` and summarizes spectrum and exponents.
pub fn spectral_report(fixed_point: &RGState, model: &Model, rem: &dyn Remainder) -> Result<SpectralReport> {
    let eig = eigen(&jacobian_fd(fixed_point, model, rem)?)?;
    let (nu, omega_corr) = exponents(&eig, model.params.l)?;
    let classification = Classification {
        expanding: eig.values.iter().filter(|v| v.norm() > 1.0).count(),
        contracting: eig.values.iter().filter(|v| v.norm() < 1.0).count(),
    };
    Ok(SpectralReport {
        fixed_point: fixed_point.clone(),
        eigenvalues: eig.values,
        nu,
        omega_corr,
        classification,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelParams;
    use crate::remainder::{CubicCoefficients, CubicRemainder};
    use rand::{Rng, SeedableRng};

    fn simplified() -> (Model, CubicRemainder) {
        let m = Model::new(ModelParams::default()).unwrap();
        let rem = CubicRemainder::zero(&m.params);
        (m, rem)
    }

    #[test]
    fn eigen_identity_and_diagonal() {
        let e = eigen(&DMatrix::identity(4, 4)).unwrap();
        assert!(e.values.iter().all(|v| (v - Complex64::new(1.0, 0.0)).norm() < 1e-14));
        let diag = [2.9, 1.07, 0.5, 0.5, 0.5];
        let e = eigen(&DMatrix::from_diagonal(&DVector::from_row_slice(&diag))).unwrap();
        for (v, d) in e.values.iter().zip(diag) {
            assert!((v.re - d).abs() < 1e-14 && v.im == 0.0);
        }
        // repeated eigenvalue keeps independent eigenvectors
        let span = DMatrix::from_columns(&e.vectors[2..].iter().map(|v| v.map(|c| c.re)).collect::<Vec<_>>());
        assert_eq!(span.rank(1e-8), 3);
    }

    #[test]
    fn eigen_recovers_constructed_spectrum() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        let d = [3.0, -1.7, 1.2, 0.6, 0.25];
        let p = DMatrix::from_fn(5, 5, |_, _| rng.gen_range(-1.0..1.0));
        let pinv = p.clone().try_inverse().unwrap();
        let a = &p * DMatrix::from_diagonal(&DVector::from_row_slice(&d)) * pinv;
        let e = eigen(&a).unwrap();
        let mut want = d.to_vec();
        want.sort_by(|x, y| y.abs().total_cmp(&x.abs()));
        for (v, w) in e.values.iter().zip(want) {
            assert!((v - Complex64::new(w, 0.0)).norm() < 1e-8, "{v} vs {w}");
        }
        let ac = a.map(|v| Complex64::new(v, 0.0));
        for (v, x) in e.values.iter().zip(&e.vectors) {
            assert!((&ac * x - x * *v).norm() < 1e-10 * a.norm().max(1.0));
        }
    }

    #[test]
    fn eigen_complex_pairs() {
        let (s, c) = 0.7f64.sin_cos();
        let a = DMatrix::from_row_slice(3, 3, &[c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 2.0]);
        let e = eigen(&a).unwrap();
        assert!((e.values[0].re - 2.0).abs() < 1e-14);
        assert!((e.values[1].norm() - 1.0).abs() < 1e-13);
        assert!((e.values[1].im.abs() - s).abs() < 1e-13);
    }

    #[test]
    fn jacobian_at_gaussian_point() {
        let (m, rem) = simplified();
        let j = jacobian_fd(&RGState::origin(3), &m, &rem).unwrap();
        let mut analytic = DMatrix::zeros(5, 5);
        analytic[(0, 0)] = m.consts.lambda_g;
        analytic[(1, 1)] = m.consts.lambda_mu;
        analytic
            .view_mut((2, 2), (3, 3))
            .copy_from(&(rem.operator().matrix() * m.params.gamma));
        assert!((j - analytic).amax() < 1e-6);
    }

    #[test]
    fn jacobian_at_approximate_ir_point() {
        let (m, rem) = simplified();
        let j = jacobian_fd(&m.approx_ir_point(), &m, &rem).unwrap();
        assert!((j[(0, 0)] - (2.0 - m.consts.lambda_g)).abs() < 1e-6);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        for _ in 0..10 {
            let x = RGState::new(rng.gen_range(0.0..0.2), rng.gen_range(-0.5..0.5), DVector::from_fn(3, |_, _| rng.gen_range(-0.5..0.5)));
            let j = jacobian_fd(&x, &m, &rem).unwrap();
            assert!((j[(1, 1)] - m.consts.lambda_mu).abs() < 1e-8);
            for c in [0, 2, 3, 4] {
                assert!(j[(1, c)].abs() < 1e-8);
            }
        }
    }

    #[test]
    fn richardson_ratio_of_fd_jacobian() {
        let m = Model::new(ModelParams::default()).unwrap();
        let coeffs = CubicCoefficients {
            c_g: 5.0,
            c_gr: 3.0,
            c_mu: 2.0,
            c_mur: 1.0,
            c_r: 4.0,
            modulation: 2.0,
            lipschitz_budget: 100.0,
        };
        let rem = CubicRemainder::unchecked(&m.params, coeffs);
        let x = RGState::new(0.3, 0.2, DVector::from_vec(vec![0.1, -0.2, 0.3]));
        let exact = jacobian_fd_with_step(&x, &m, &rem, 1e-4).unwrap();
        let coarse = jacobian_fd_with_step(&x, &m, &rem, 2e-2).unwrap();
        let fine = jacobian_fd_with_step(&x, &m, &rem, 1e-2).unwrap();
        let ratio = (&coarse - &exact).amax() / (&fine - &exact).amax();
        assert!((ratio - 4.0).abs() < 0.2, "ratio {ratio}");
    }

    #[test]
    fn newton_on_simplified_map() {
        let (m, rem) = simplified();
        let ir = m.approx_ir_point();
        assert_eq!(newton_fixed_point(&ir, &m, &rem).unwrap(), ir);
        let start = RGState::new(m.g_star_bar() / 10.0, 0.0, DVector::zeros(3));
        let root = newton_fixed_point(&start, &m, &rem).unwrap();
        assert!(root.distance(&ir) < 1e-10 || root.distance(&RGState::origin(3)) < 1e-10);
        let res = (m.step(&root, &rem).unwrap().to_vector() - root.to_vector()).norm();
        assert!(res < 1e-12);
    }

    #[test]
    fn exponents_of_simplified_map() {
        for &(l, eps) in &[(2.0, 0.1), (4.0, 0.1), (2.0, 0.05), (3.0, 0.01)] {
            let m = Model::new(ModelParams::new(l, eps, 0.5, 3).unwrap()).unwrap();
            let rem = CubicRemainder::zero(&m.params);
            let rep = spectral_report(&m.approx_ir_point(), &m, &rem).unwrap();
            assert!((rep.nu - 2.0 / (3.0 + eps)).abs() < 1e-9, "nu {}", rep.nu);
            let omega = -(2.0 - l.powf(eps)).ln() / l.ln();
            assert!((rep.omega_corr - omega).abs() < 1e-7);
            assert_eq!(rep.classification, Classification { expanding: 1, contracting: 4 });
        }
    }

    #[test]
    fn tangents_at_both_points() {
        let (m, rem) = simplified();
        let t = manifold_tangents(&RGState::origin(3), &m, &rem).unwrap();
        assert_eq!(t.expanding.len(), 2);
        assert_eq!(t.contracting.len(), 3);
        for v in &t.expanding {
            assert!(v.rows(2, 3).norm() < 1e-8);
        }
        for v in &t.contracting {
            assert!(v[0].abs() < 1e-8 && v[1].abs() < 1e-8);
        }
        let t = manifold_tangents(&m.approx_ir_point(), &m, &rem).unwrap();
        assert_eq!(t.expanding.len(), 1);
        assert!((t.expanding[0][1].abs() - 1.0).abs() < 1e-8);
    }

    #[test]
    fn marginal_eigenvalue_rejected() {
        let eig = eigen(&DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 1.0, 0.5]))).unwrap();
        assert!(matches!(tangents_from_spectrum(&eig), Err(RgError::MarginalEigenvalue(_))));
    }

    #[test]
    fn degenerate_mu_direction_rejected() {
        // μ-dominant eigenvalue repeated
        let a = DMatrix::from_row_slice(3, 3, &[3.0, 0.0, 0.0, 0.0, 3.0, 0.0, 0.0, 0.0, 0.5]);
        let eig = eigen(&a).unwrap();
        assert!(matches!(exponents(&eig, 2.0), Err(RgError::DegenerateSpectrum(_))));
    }
}
