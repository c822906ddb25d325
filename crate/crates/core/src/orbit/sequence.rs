use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::backbone::{BackboneOrbit, Window};
use crate::model::RGState;

/// Deviations `(δg_n, μ_n, R_n)` from the backbone over a window.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviationSequence {
    pub window: Window,
    pub dg: Vec<f64>,
    pub mu: Vec<f64>,
    pub r: Vec<DVector<f64>>,
}

impl DeviationSequence {
    pub fn zeros(window: Window, d_r: usize) -> Self {
        let n = window.len();
        Self {
            window,
            dg: vec![0.0; n],
            mu: vec![0.0; n],
            r: vec![DVector::zeros(d_r); n],
        }
    }

    pub fn d_r(&self) -> usize {
        self.r.first().map_or(0, |v| v.len())
    }

    pub fn is_finite(&self) -> bool {
        self.dg.iter().chain(&self.mu).all(|x| x.is_finite())
            && self.r.iter().all(|v| v.iter().all(|x| x.is_finite()))
    }

    /// Full state `(ḡ_n + δg_n, μ_n, R_n)` at array index `i`.
    pub fn state(&self, backbone: &BackboneOrbit, i: usize) -> RGState {
        RGState::new(backbone.g_bar[i] + self.dg[i], self.mu[i], self.r[i].clone())
    }

    pub fn restrict(&self, w: Window) -> DeviationSequence {
        assert!(self.window.contains_window(&w));
        let i0 = self.window.index(w.n_min);
        let range = i0..i0 + w.len();
        DeviationSequence {
            window: w,
            dg: self.dg[range.clone()].to_vec(),
            mu: self.mu[range.clone()].to_vec(),
            r: self.r[range].to_vec(),
        }
    }
}

/// Exponents `(α_g, α_μ, α_R)` of the backbone-calibrated sup norm
/// `max_n max(|δg_n|/ḡ_n^α_g, |μ_n|/ḡ_n^α_μ, ‖R_n‖/ḡ_n^α_R)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightExponents {
    pub g: f64,
    pub mu: f64,
    pub r: f64,
}

impl Default for WeightExponents {
    fn default() -> Self {
        // δg_n is proportional to ḡ_n towards the Gaussian end, so α_g = 1.
        Self {
            g: 1.0,
            mu: 2.0,
            r: 3.0,
        }
    }
}

/// Per-site weighted magnitudes of `a − b` (or of `a` when `b` is `None`).
fn weighted_site(
    a: &DeviationSequence,
    b: Option<&DeviationSequence>,
    backbone: &BackboneOrbit,
    exps: &WeightExponents,
    n: i64,
) -> f64 {
    let ia = a.window.index(n);
    let gb = backbone.at(n);
    let (dg, mu, r) = match b {
        Some(b) => {
            let ib = b.window.index(n);
            (
                a.dg[ia] - b.dg[ib],
                a.mu[ia] - b.mu[ib],
                (&a.r[ia] - &b.r[ib]).norm(),
            )
        }
        None => (a.dg[ia], a.mu[ia], a.r[ia].norm()),
    };
    (dg.abs() / gb.powf(exps.g))
        .max(mu.abs() / gb.powf(exps.mu))
        .max(r / gb.powf(exps.r))
}

pub fn weighted_norm(
    seq: &DeviationSequence,
    backbone: &BackboneOrbit,
    exps: &WeightExponents,
) -> f64 {
    seq.window
        .indices()
        .map(|n| weighted_site(seq, None, backbone, exps, n))
        .fold(0.0, f64::max)
}

/// Weighted sup-norm distance of two sequences over `over`, which must lie
/// inside both windows and the backbone's.
pub fn weighted_distance(
    a: &DeviationSequence,
    b: &DeviationSequence,
    backbone: &BackboneOrbit,
    exps: &WeightExponents,
    over: Window,
) -> f64 {
    over.indices()
        .map(|n| weighted_site(a, Some(b), backbone, exps, n))
        .fold(0.0, f64::max)
}

/// Per-site weighted profile `(|δg|/ḡ^α_g, |μ|/ḡ^α_μ, ‖R‖/ḡ^α_R)`.
pub fn weighted_profile(
    seq: &DeviationSequence,
    backbone: &BackboneOrbit,
    exps: &WeightExponents,
) -> Vec<(f64, f64, f64)> {
    seq.window
        .indices()
        .map(|n| {
            let i = seq.window.index(n);
            let gb = backbone.at(n);
            (
                seq.dg[i].abs() / gb.powf(exps.g),
                seq.mu[i].abs() / gb.powf(exps.mu),
                seq.r[i].norm() / gb.powf(exps.r),
            )
        })
        .collect()
}
