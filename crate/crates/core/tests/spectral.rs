use nalgebra::DVector;
use rgorbit::remainder::{CubicCoefficients, CubicRemainder};
use rgorbit::spectral::*;
use rgorbit::{default_remainder_model, Model, ModelParams, RGState};

fn model() -> Model {
    Model::new(ModelParams::default()).unwrap()
}

fn ir_start(m: &Model) -> RGState {
    RGState::new(m.g_star_bar(), 0.0, DVector::zeros(m.d_r()))
}

#[test]
fn default_fixed_point_is_a_second_order_shift() {
    let m = model();
    let gs = m.g_star_bar();
    let mut shifts = Vec::new();
    for s in [0.125, 0.25, 0.5, 1.0] {
        let rem = CubicRemainder::unchecked(&m.params, CubicCoefficients::default().scaled(s));
        let fp = newton_fixed_point(&ir_start(&m), &m, &rem).unwrap();
        let res = (m.step(&fp, &rem).unwrap().to_vector() - fp.to_vector()).norm();
        assert!(res < 1e-12);
        shifts.push((fp.g - gs) / s);
        assert!((fp.g - gs).abs() < 2.0 * s * gs * gs, "s={s}: {}", (fp.g - gs) / (gs * gs));
    }
    // first order in the remainder magnitude: shift/s settles as s → 0
    let d: Vec<f64> = shifts.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
    assert!(d[0] < d[1] && d[1] < d[2], "{shifts:?}");
    assert!(d[0] < 0.05 * shifts[0].abs(), "{shifts:?}");
}

#[test]
fn one_expanding_direction_at_the_ir_point_for_small_budgets() {
    let m = model();
    for s in [1.0, 0.5, 0.1, 0.01] {
        let rem = CubicRemainder::unchecked(&m.params, CubicCoefficients::default().scaled(s));
        let fp = newton_fixed_point(&ir_start(&m), &m, &rem).unwrap();
        let t = manifold_tangents(&fp, &m, &rem).unwrap();
        assert_eq!(t.expanding.len(), 1, "s={s}");
        assert_eq!(t.contracting.len(), 4);
        let rep = spectral_report(&fp, &m, &rem).unwrap();
        assert_eq!(rep.eigenvalues.len(), 5);
        assert_eq!(rep.classification.expanding, 1);
    }
}

#[test]
fn newton_finds_only_the_two_fixed_points() {
    let params = ModelParams::default();
    let m = Model::new(params).unwrap();
    let rem = default_remainder_model(&params, CubicCoefficients::default()).unwrap();
    let ir = newton_fixed_point(&ir_start(&m), &m, &rem).unwrap();
    let gauss = newton_fixed_point(&RGState::origin(3), &m, &rem).unwrap();
    assert!(gauss.to_vector().norm() < 1e-14);
    let gs = m.g_star_bar();
    for k in 1..=7 {
        let start = RGState::new(gs * k as f64 / 4.0, 0.0, DVector::zeros(3));
        let root = newton_fixed_point(&start, &m, &rem).unwrap();
        assert!(root.distance(&ir) < 1e-10 || root.distance(&gauss) < 1e-10, "start {k}");
    }
}

#[test]
fn gaussian_spectrum_contains_the_closed_forms() {
    let m = model();
    let rem = CubicRemainder::zero(&m.params);
    let rep = spectral_report(&RGState::origin(3), &m, &rem).unwrap();
    for want in [m.consts.lambda_g, m.consts.lambda_mu] {
        assert!(rep.eigenvalues.iter().any(|v| (v.re - want).abs() < 1e-6 && v.im.abs() < 1e-6));
    }
    let q = rem.operator().matrix() * m.params.gamma;
    let rq = eigen(&q).unwrap();
    for v in rq.values {
        assert!(rep.eigenvalues.iter().any(|w| (w - v).norm() < 1e-6));
    }
    // at the Gaussian point the g-direction is expanding: ω_corr = −ε
    assert!((rep.omega_corr + m.params.epsilon).abs() < 1e-6);
}

#[test]
fn exponents_are_independent_of_block_ratio() {
    let nus: Vec<f64> = [2.0, 4.0]
        .iter()
        .map(|&l| {
            let m = Model::new(ModelParams::new(l, 0.1, 0.5, 3).unwrap()).unwrap();
            let rem = CubicRemainder::zero(&m.params);
            spectral_report(&m.approx_ir_point(), &m, &rem).unwrap().nu
        })
        .collect();
    assert!((nus[0] - nus[1]).abs() < 1e-9);
    assert!((nus[0] - 0.6451612903225806).abs() < 1e-9);
}

#[test]
fn correction_exponent_tends_to_epsilon() {
    let mut last = f64::INFINITY;
    for eps in [0.1, 0.05, 0.01] {
        let m = Model::new(ModelParams::new(2.0, eps, 0.5, 3).unwrap()).unwrap();
        let rem = CubicRemainder::zero(&m.params);
        let rep = spectral_report(&m.approx_ir_point(), &m, &rem).unwrap();
        let dev = (rep.omega_corr / eps - 1.0).abs();
        assert!(dev < last);
        last = dev;
    }
    assert!(last < 0.01);
}

#[test]
fn no_remainder_dimension() {
    let m = Model::new(ModelParams::new(2.0, 0.1, 0.5, 0).unwrap()).unwrap();
    let rem = CubicRemainder::zero(&m.params);
    let rep = spectral_report(&m.approx_ir_point(), &m, &rem).unwrap();
    assert_eq!(rep.eigenvalues.len(), 2);
}
