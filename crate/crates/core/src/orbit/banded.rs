//! Banded Gaussian elimination with partial pivoting, for the block
//! bidiagonal Newton systems of the finite-window trajectory equations.

use crate::error::{Result, RgError};

pub(crate) struct BandedSystem {
    n: usize,
    kl: usize,
    width: usize,
    data: Vec<f64>,
    rhs: Vec<f64>,
}

impl BandedSystem {
    /// `kl` sub-diagonals and `ku` super-diagonals before pivoting.
    pub fn new(n: usize, kl: usize, ku: usize) -> Self {
        let width = 2 * kl + ku + 1;
        Self {
            n,
            kl,
            width,
            data: vec![0.0; n * width],
            rhs: vec![0.0; n],
        }
    }

    // Row i stores columns [i - kl, i - kl + width).
    fn slot(&self, i: usize, j: usize) -> usize {
        let off = j + self.kl - i;
        debug_assert!(j + self.kl >= i && off < self.width, "({i}, {j}) outside band");
        i * self.width + off
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if j + self.kl < i || j + self.kl - i >= self.width {
            0.0
        } else {
            self.data[self.slot(i, j)]
        }
    }

    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let s = self.slot(i, j);
        self.data[s] += v;
    }

    fn set(&mut self, i: usize, j: usize, v: f64) {
        let s = self.slot(i, j);
        self.data[s] = v;
    }

    pub fn set_rhs(&mut self, i: usize, v: f64) {
        self.rhs[i] = v;
    }

    pub fn solve(mut self) -> Result<Vec<f64>> {
        let n = self.n;
        let reach = self.width - self.kl; // columns k..k+reach may be nonzero in row k
        for k in 0..n {
            let last_row = (k + self.kl).min(n - 1);
            let col_end = (k + reach).min(n);
            let (mut piv, mut best) = (k, self.get(k, k).abs());
            for r in k + 1..=last_row {
                let v = self.get(r, k).abs();
                if v > best {
                    piv = r;
                    best = v;
                }
            }
            if best == 0.0 || !best.is_finite() {
                return Err(RgError::SingularJacobian);
            }
            if piv != k {
                for j in k..col_end {
                    let a = self.get(k, j);
                    let b = self.get(piv, j);
                    self.set(k, j, b);
                    self.set(piv, j, a);
                }
                self.rhs.swap(k, piv);
            }
            let pivot = self.get(k, k);
            for r in k + 1..=last_row {
                let factor = self.get(r, k) / pivot;
                if factor == 0.0 {
                    continue;
                }
                for j in k..col_end {
                    let v = self.get(r, j) - factor * self.get(k, j);
                    self.set(r, j, v);
                }
                self.rhs[r] -= factor * self.rhs[k];
            }
        }
        let mut x = vec![0.0; n];
        for k in (0..n).rev() {
            let col_end = (k + reach).min(n);
            let mut s = self.rhs[k];
            for j in k + 1..col_end {
                s -= self.get(k, j) * x[j];
            }
            x[k] = s / self.get(k, k);
        }
        Ok(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};
    use rand::{Rng, SeedableRng};

    #[test]
    fn matches_dense_solve() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let (n, kl, ku) = (40, 4, 3);
        let mut dense = DMatrix::<f64>::zeros(n, n);
        let mut sys = BandedSystem::new(n, kl, ku);
        for i in 0..n {
            for j in i.saturating_sub(kl)..(i + ku + 1).min(n) {
                // weak diagonal forces pivoting
                let v = if i == j { 0.01 } else { rng.gen_range(-1.0..1.0) };
                dense[(i, j)] = v;
                sys.add(i, j, v);
            }
        }
        let b = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
        for i in 0..n {
            sys.set_rhs(i, b[i]);
        }
        let x = sys.solve().unwrap();
        let expect = dense.lu().solve(&b).unwrap();
        for i in 0..n {
            assert!((x[i] - expect[i]).abs() < 1e-9, "{i}");
        }
    }

    #[test]
    fn singular_detected() {
        let sys = BandedSystem::new(3, 1, 1);
        assert!(matches!(sys.solve(), Err(RgError::SingularJacobian)));
    }
}
