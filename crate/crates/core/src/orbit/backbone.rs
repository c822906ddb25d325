use serde::{Deserialize, Serialize};

use crate::error::{Result, RgError};
use crate::model::Model;

/// Finite index window `n_min..=n_max` containing 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    pub n_min: i64,
    pub n_max: i64,
}

impl Window {
    pub fn new(n_min: i64, n_max: i64) -> Result<Self> {
        if n_min > 0 || n_max < 0 {
            return Err(RgError::InvalidParams(format!(
                "window [{n_min}, {n_max}] must contain 0"
            )));
        }
        Ok(Self { n_min, n_max })
    }

    pub fn symmetric(n: i64) -> Result<Self> {
        Self::new(-n, n)
    }

    pub fn len(&self) -> usize {
        (self.n_max - self.n_min + 1) as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn index(&self, n: i64) -> usize {
        debug_assert!(self.contains(n), "{n} outside {self:?}");
        (n - self.n_min) as usize
    }

    pub fn contains(&self, n: i64) -> bool {
        n >= self.n_min && n <= self.n_max
    }

    pub fn contains_window(&self, other: &Window) -> bool {
        self.n_min <= other.n_min && self.n_max >= other.n_max
    }

    pub fn indices(&self) -> impl Iterator<Item = i64> {
        self.n_min..=self.n_max
    }
}

/// The explicit heteroclinic orbit `ḡ_n` of the backbone map, anchored at
/// `ḡ_0 = ω_0 ḡ_*`.
#[derive(Debug, Clone, PartialEq)]
pub struct BackboneOrbit {
    pub window: Window,
    pub g_bar: Vec<f64>,
    pub omega0: f64,
}

impl BackboneOrbit {
    pub fn at(&self, n: i64) -> f64 {
        self.g_bar[self.window.index(n)]
    }

    /// Restriction to a sub-window.
    pub fn restrict(&self, w: Window) -> BackboneOrbit {
        assert!(self.window.contains_window(&w));
        let i0 = self.window.index(w.n_min);
        BackboneOrbit {
            window: w,
            g_bar: self.g_bar[i0..i0 + w.len()].to_vec(),
            omega0: self.omega0,
        }
    }
}

/// Checks `ω_0` against the admissible interval: `(0, 1/2)` when strict,
/// `(0, 1)` otherwise.
pub fn check_omega(omega0: f64, strict: bool) -> Result<()> {
    let upper = if strict { 0.5 } else { 1.0 };
    if omega0.is_finite() && omega0 > 0.0 && omega0 < upper {
        Ok(())
    } else {
        Err(RgError::OmegaOutOfDomain(omega0))
    }
}

/// Builds `ḡ_n` on the window: forward entries by `f`, backward entries by
/// the lower inverse branch.
pub fn build_backbone(
    model: &Model,
    omega0: f64,
    window: Window,
    strict: bool,
) -> Result<BackboneOrbit> {
    check_omega(omega0, strict)?;
    let gs = model.g_star_bar();
    let mut g_bar = vec![0.0; window.len()];
    let i0 = window.index(0);
    g_bar[i0] = omega0 * gs;
    for i in i0 + 1..g_bar.len() {
        g_bar[i] = model.f(g_bar[i - 1]);
    }
    for i in (0..i0).rev() {
        g_bar[i] = model.f_inverse_lower(g_bar[i + 1])?;
    }
    if g_bar[0] <= 0.0 {
        return Err(RgError::InvalidParams(format!(
            "window start {} underflows the backbone",
            window.n_min
        )));
    }
    Ok(BackboneOrbit {
        window,
        g_bar,
        omega0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelParams;
    use approx::assert_relative_eq;

    fn model() -> Model {
        Model::new(ModelParams::default()).unwrap()
    }

    #[test]
    fn anchor_and_neighbours() {
        let m = model();
        let b = build_backbone(&m, 0.25, Window::symmetric(5).unwrap(), true).unwrap();
        assert_eq!(b.at(0), 0.25 * m.g_star_bar());
        // 40-digit reference values of f(ḡ_0) and the lower inverse of ḡ_0
        assert_relative_eq!(b.at(0), 0.022535772341383571, max_relative = 1e-14);
        assert_relative_eq!(b.at(1), 0.023748875150286615, max_relative = 1e-13);
        assert_relative_eq!(b.at(-1), 0.021365747873221881, max_relative = 1e-13);
        for n in -5..5 {
            assert!(b.at(n) < b.at(n + 1));
            assert!((m.f(b.at(n)) - b.at(n + 1)).abs() < 1e-12);
        }
    }

    #[test]
    fn omega_domain() {
        let m = model();
        let w = Window::symmetric(3).unwrap();
        assert_eq!(
            build_backbone(&m, 0.6, w, true),
            Err(RgError::OmegaOutOfDomain(0.6))
        );
        assert!(build_backbone(&m, 0.6, w, false).is_ok());
        assert!(build_backbone(&m, 1.0, w, false).is_err());
        assert!(build_backbone(&m, 0.0, w, true).is_err());
    }

    #[test]
    fn small_omega_gives_small_orbit() {
        let m = model();
        let w = Window::symmetric(10).unwrap();
        let mut prev = f64::INFINITY;
        for &om in &[1e-2, 1e-4, 1e-6] {
            let b = build_backbone(&m, om, w, true).unwrap();
            let sup = b.g_bar.iter().cloned().fold(0.0, f64::max);
            assert!(sup < prev);
            prev = sup;
        }
        assert!(prev < 1e-6);
    }

    #[test]
    fn forward_rate_matches_linearization() {
        let m = model();
        let b = build_backbone(&m, 0.25, Window::new(0, 400).unwrap(), true).unwrap();
        let gs = m.g_star_bar();
        let rho = m.linear_coefficient(gs);
        let d = |n: i64| gs - b.at(n);
        let ratio = d(300) / d(299);
        assert!((ratio - rho).abs() < 1e-6);
        // deviation bounded by C ρ^n with C fitted at n = 200
        let c = d(200) / rho.powi(200);
        assert!(d(400) <= 1.01 * c * rho.powi(400));
    }

    #[test]
    fn window_must_contain_zero() {
        assert!(Window::new(1, 4).is_err());
        assert!(Window::new(-4, -1).is_err());
        assert_eq!(Window::new(-2, 3).unwrap().len(), 6);
    }
}
