//! Gauss–Hermite rules for centered Gaussian measures and Hermite
//! polynomials with arbitrary variance.

use nalgebra::{DMatrix, SymmetricEigen};

/// Nodes and weights integrating against `dγ_{σ²}`, the centered Gaussian
/// probability measure of variance `σ²`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussHermiteRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
    ln_weights: Vec<f64>,
    variance: f64,
}

impl GaussHermiteRule {
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Natural logarithms of the weights, accurate even where the weights
    /// themselves underflow.
    pub fn ln_weights(&self) -> &[f64] {
        &self.ln_weights
    }

    pub fn variance(&self) -> f64 {
        self.variance
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * f(x)).sum()
    }
}

const RESCALE: f64 = 1e100;

/// Evaluates the orthonormal (probabilists') Hermite recurrence at `x`.
/// Returns `(p_q(x) / p_{q−1}(x), ln Σ_{k<q} p_k(x)²)`; the ratio is what
/// Newton needs, the log-sum gives the Christoffel weight.
fn orthonormal_sums(q: usize, x: f64) -> (f64, f64) {
    let mut prev = 0.0;
    let mut cur = 1.0;
    let mut sum = 0.0;
    let mut ln_scale = 0.0;
    for k in 0..q {
        sum += cur * cur;
        let next = (x * cur - (k as f64).sqrt() * prev) / ((k + 1) as f64).sqrt();
        prev = cur;
        cur = next;
        if cur.abs() > RESCALE {
            prev /= RESCALE;
            cur /= RESCALE;
            sum /= RESCALE * RESCALE;
            ln_scale += 2.0 * RESCALE.ln();
        }
    }
    (cur / prev, sum.ln() + ln_scale)
}

/// `q`-point Gauss–Hermite rule for `dγ_{σ²}`; exact for polynomials of
/// degree ≤ `2q − 1`, weights summing to 1.
///
/// Nodes start from the eigenvalues of the Jacobi matrix and are polished
/// by Newton steps on `p_q`; weights use the Christoffel formula
/// `w = 1/Σ p_k(x)²`, which keeps full relative accuracy in the tails.
pub fn gauss_hermite_rule(q: usize, variance: f64) -> GaussHermiteRule {
    assert!(q >= 1, "quadrature order must be positive");
    assert!(variance > 0.0 && variance.is_finite(), "variance must be positive");
    let jacobi = DMatrix::from_fn(q, q, |i, j| {
        if i + 1 == j || j + 1 == i {
            (i.max(j) as f64).sqrt()
        } else {
            0.0
        }
    });
    let mut x: Vec<f64> = SymmetricEigen::new(jacobi).eigenvalues.iter().cloned().collect();
    x.sort_by(f64::total_cmp);
    let half = q / 2;
    // enforce exact symmetry: polish the nonnegative half and mirror it
    let mut upper: Vec<f64> = x[half..].to_vec();
    if q % 2 == 1 {
        upper[0] = 0.0;
    }
    for xi in upper.iter_mut().filter(|v| **v != 0.0) {
        for _ in 0..3 {
            let (ratio, _) = orthonormal_sums(q, *xi);
            // p_q' = sqrt(q) p_{q−1}
            *xi -= ratio / (q as f64).sqrt();
        }
    }
    let std_nodes: Vec<f64> = upper[q % 2..]
        .iter()
        .rev()
        .map(|v| -v)
        .chain(upper.iter().cloned())
        .collect();
    let ln_w: Vec<f64> = std_nodes.iter().map(|&v| -orthonormal_sums(q, v).1).collect();
    let sigma = variance.sqrt();
    GaussHermiteRule {
        nodes: std_nodes.iter().map(|v| v * sigma).collect(),
        weights: ln_w.iter().map(|v| v.exp()).collect(),
        ln_weights: ln_w,
        variance,
    }
}

/// Hermite polynomial `He_k(x; σ²)`, orthogonal under `dγ_{σ²}`:
/// `He_{k+1} = x He_k − k σ² He_{k−1}`.
pub fn hermite(k: usize, x: f64, variance: f64) -> f64 {
    let mut prev = 0.0;
    let mut cur = 1.0;
    for j in 0..k {
        let next = x * cur - j as f64 * variance * prev;
        prev = cur;
        cur = next;
    }
    cur
}

/// `He_0 … He_k` at `x` in one pass.
pub fn hermite_all(k: usize, x: f64, variance: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(k + 1);
    let mut prev = 0.0;
    let mut cur = 1.0;
    for j in 0..=k {
        out.push(cur);
        let next = x * cur - j as f64 * variance * prev;
        prev = cur;
        cur = next;
    }
    out
}

/// `∫ He_k² dγ_{σ²} = k! σ^{2k}`.
pub fn hermite_norm_sq(k: usize, variance: f64) -> f64 {
    (1..=k).map(|j| j as f64 * variance).product()
}

/// Ordinary-polynomial coefficients of `He_k(x; σ²)`, lowest degree first.
pub fn hermite_monomials(k: usize, variance: f64) -> Vec<f64> {
    let mut prev = vec![0.0; k + 1];
    let mut cur = vec![0.0; k + 1];
    cur[0] = 1.0;
    for j in 0..k {
        let mut next = vec![0.0; k + 1];
        for i in 0..k {
            next[i + 1] += cur[i];
        }
        for i in 0..=k {
            next[i] -= j as f64 * variance * prev[i];
        }
        prev = cur;
        cur = next;
    }
    cur
}
