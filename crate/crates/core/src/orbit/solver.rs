//! Contraction-mapping solve of the resummed trajectory equations on a
//! finite window, with optional Newton acceleration, residual checks and
//! window extension.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use super::backbone::{build_backbone, BackboneOrbit, Window};
use super::banded::BandedSystem;
use super::resum::{eval_xi, gaussian_r_tail, linear_coefficients, resum_dg_from, resum_mu_from, resum_r_from};
use super::sequence::{weighted_distance, DeviationSequence, WeightExponents};
use crate::error::{Result, RgError};
use crate::model::{Model, RGState};
use crate::remainder::Remainder;

/// Closure attenuation target for automatic tail padding.
const TAIL_ATTENUATION: f64 = 1e-17;
const MAX_TAIL_SITES: usize = 4000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub tol_residual: f64,
    pub max_picard_iters: usize,
    pub weight_exponents: WeightExponents,
    pub strict_omega_domain: bool,
    /// Buffer sites `[below, above]` carried past the reported window to
    /// close the resummation tails; `None` picks them from the decay rates.
    pub tail_padding: Option<[usize; 2]>,
    pub newton_acceleration: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol_residual: 1e-10,
            max_picard_iters: 200,
            weight_exponents: WeightExponents::default(),
            strict_omega_domain: true,
            tail_padding: None,
            newton_acceleration: false,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol_residual > 0.0) {
            return Err(RgError::InvalidParams("tol_residual must be > 0".into()));
        }
        if self.max_picard_iters < 1 {
            return Err(RgError::InvalidParams("max_picard_iters must be >= 1".into()));
        }
        Ok(())
    }

    /// Buffer sites below and above the reported window.
    pub fn padding(&self, model: &Model) -> (usize, usize) {
        if let Some([lo, hi]) = self.tail_padding {
            return (lo, hi);
        }
        let sites = |rate: f64| {
            ((TAIL_ATTENUATION.ln() / rate.ln()).ceil() as usize).min(MAX_TAIL_SITES)
        };
        (sites(model.params.gamma), sites(1.0 / model.consts.lambda_mu))
    }
}

/// Sup over the window of the one-step mismatch of each equation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Residuals {
    pub g: f64,
    pub mu: f64,
    pub r: f64,
    pub dg0: f64,
}

impl Residuals {
    pub fn max(&self) -> f64 {
        self.g.max(self.mu).max(self.r).max(self.dg0)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub contraction_ratio_estimates: Vec<f64>,
    pub final_residuals: Residuals,
    pub iterations_used: usize,
    pub newton_steps: usize,
    pub window_truncation_estimate: f64,
}

/// One-step residuals of the trajectory `(ḡ_n + δg_n, μ_n, R_n)` against
/// the RG map, plus the anchor mismatch `|δg_0|`.
pub fn residuals(
    backbone: &BackboneOrbit,
    seq: &DeviationSequence,
    model: &Model,
    rem: &dyn Remainder,
) -> Residuals {
    let mut res = Residuals {
        dg0: if seq.window.contains(0) {
            seq.dg[seq.window.index(0)].abs()
        } else {
            0.0
        },
        ..Residuals::default()
    };
    let n = seq.window.len();
    for i in 0..n.saturating_sub(1) {
        let s = seq.state(backbone, i);
        let next = seq.state(backbone, i + 1);
        let xi = rem.xi(s.g, s.mu, &s.r);
        let g_map = model.f(s.g) + xi.g;
        let mu_map = model.consts.lambda_mu * s.mu + xi.mu;
        let r_map = rem.apply_linear(s.g, s.mu, &s.r) + &xi.r;
        res.g = res.g.max((next.g - g_map).abs());
        res.mu = res.mu.max((next.mu - mu_map).abs());
        res.r = res.r.max((&next.r - r_map).norm());
    }
    res
}

/// One application of the Picard map: all three resummations evaluated on
/// the same input sequence.
pub fn picard_sweep(
    seq: &DeviationSequence,
    backbone: &BackboneOrbit,
    model: &Model,
    rem: &dyn Remainder,
) -> Result<DeviationSequence> {
    let xi = eval_xi(seq, backbone, rem);
    let xi_mu: Vec<f64> = xi.iter().map(|x| x.mu).collect();
    let xi_g: Vec<f64> = xi.iter().map(|x| x.g).collect();
    Ok(DeviationSequence {
        window: seq.window,
        mu: resum_mu_from(&xi_mu, model.consts.lambda_mu)?,
        r: resum_r_from(seq, backbone, &xi, rem)?,
        dg: resum_dg_from(&seq.dg, backbone, model, &xi_g)?,
    })
}

/// Picard iteration from the zero sequence.
pub fn picard_solve(
    backbone: &BackboneOrbit,
    model: &Model,
    rem: &dyn Remainder,
    cfg: &SolverConfig,
) -> Result<(DeviationSequence, Diagnostics)> {
    let zero = DeviationSequence::zeros(backbone.window, rem.dim());
    picard_solve_from(backbone, model, rem, cfg, zero)
}

/// Picard iteration from a given initial guess. Stops once the weighted
/// change of one sweep drops below `tol_residual`.
pub fn picard_solve_from(
    backbone: &BackboneOrbit,
    model: &Model,
    rem: &dyn Remainder,
    cfg: &SolverConfig,
    initial: DeviationSequence,
) -> Result<(DeviationSequence, Diagnostics)> {
    cfg.validate()?;
    if initial.window != backbone.window || initial.d_r() != rem.dim() {
        return Err(RgError::InvalidParams(
            "initial guess does not match the backbone window or remainder dimension".into(),
        ));
    }
    let w = backbone.window;
    let exps = &cfg.weight_exponents;
    let mut diag = Diagnostics::default();
    let mut x = initial;
    let mut prev_change: Option<f64> = None;
    let mut bad_streak = 0;
    let mut converged = false;
    let mut newton_done = false;

    while diag.iterations_used < cfg.max_picard_iters {
        let next = picard_sweep(&x, backbone, model, rem)?;
        diag.iterations_used += 1;
        let change = weighted_distance(&next, &x, backbone, exps, w);
        if !change.is_finite() {
            return Err(RgError::NonFinite("picard_solve"));
        }
        if let Some(pc) = prev_change {
            let ratio = if pc > 0.0 { change / pc } else { 0.0 };
            diag.contraction_ratio_estimates.push(ratio);
            if ratio >= 1.0 && change >= cfg.tol_residual {
                bad_streak += 1;
                if bad_streak >= 3 && !cfg.newton_acceleration {
                    return Err(RgError::NoContraction(ratio));
                }
            } else {
                bad_streak = 0;
            }
        }
        x = next;
        prev_change = Some(change);
        if change < cfg.tol_residual {
            converged = true;
            break;
        }
        if cfg.newton_acceleration && !newton_done && diag.iterations_used >= 3 {
            let (polished, steps) = newton_refine(&x, backbone, model, rem, cfg)?;
            x = polished;
            diag.newton_steps = steps;
            newton_done = true;
            prev_change = None;
            bad_streak = 0;
        }
    }
    if !converged {
        return Err(RgError::MaxItersExceeded {
            iters: diag.iterations_used,
            last_change: prev_change.unwrap_or(f64::NAN),
        });
    }
    diag.final_residuals = residuals(backbone, &x, model, rem);
    diag.window_truncation_estimate = truncation_estimate(&x, backbone, model, exps, 0, 0);
    Ok((x, diag))
}

/// Flattened per-site state `(δg, μ, R)`.
fn site_vec(seq: &DeviationSequence, i: usize) -> DVector<f64> {
    let d = seq.d_r();
    let mut v = DVector::zeros(2 + d);
    v[0] = seq.dg[i];
    v[1] = seq.mu[i];
    v.rows_mut(2, d).copy_from(&seq.r[i]);
    v
}

/// Predicted deviations at `i + 1` from the deviations `x` at site `i`.
fn site_map(
    x: &DVector<f64>,
    g_bar: f64,
    a: f64,
    model: &Model,
    rem: &dyn Remainder,
) -> DVector<f64> {
    let d = x.len() - 2;
    let (dg, mu) = (x[0], x[1]);
    let r = x.rows(2, d).into_owned();
    let g = g_bar + dg;
    let xi = rem.xi(g, mu, &r);
    let mut out = DVector::zeros(2 + d);
    out[0] = a * dg - model.consts.quad_coeff * dg * dg + xi.g;
    out[1] = model.consts.lambda_mu * mu + xi.mu;
    let rn = rem.apply_linear(g, mu, &r) + xi.r;
    out.rows_mut(2, d).copy_from(&rn);
    out
}

fn site_jacobian(
    x: &DVector<f64>,
    g_bar: f64,
    a: f64,
    model: &Model,
    rem: &dyn Remainder,
) -> nalgebra::DMatrix<f64> {
    let dim = x.len();
    let mut jac = nalgebra::DMatrix::zeros(dim, dim);
    for j in 0..dim {
        let h = 1e-7 * x[j].abs().max(1e-3 * g_bar.max(1e-300));
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[j] += h;
        xm[j] -= h;
        let col = (site_map(&xp, g_bar, a, model, rem) - site_map(&xm, g_bar, a, model, rem)) / (2.0 * h);
        jac.set_column(j, &col);
    }
    jac
}

/// Newton iteration on the finite-window equations whose fixed point the
/// Picard map shares: recursions on the interior, `δg_0 = 0`, the frozen
/// infrared tail for `μ` and the Gaussian tail for `R`.
fn newton_refine(
    start: &DeviationSequence,
    backbone: &BackboneOrbit,
    model: &Model,
    rem: &dyn Remainder,
    cfg: &SolverConfig,
) -> Result<(DeviationSequence, usize)> {
    let w = backbone.window;
    let m = w.len();
    let d = rem.dim();
    let dim = 2 + d;
    let n = dim * m;
    let i0 = w.index(0);
    let a = linear_coefficients(backbone, model)?;
    let lm = model.consts.lambda_mu;
    let tail = gaussian_r_tail(rem);
    let recursion_row = |i: usize| d + dim * i + usize::from(i >= i0);

    let mut x = start.clone();
    for step in 1..=30 {
        let mut sys = BandedSystem::new(n, 2 * dim - 2, dim + 1);
        for k in 0..d {
            sys.add(k, 2 + k, 1.0);
            sys.set_rhs(k, -(x.r[0][k] - tail[k]));
        }
        for i in 0..m - 1 {
            let xi = site_vec(&x, i);
            let xn = site_vec(&x, i + 1);
            let pred = site_map(&xi, backbone.g_bar[i], a[i], model, rem);
            let jac = site_jacobian(&xi, backbone.g_bar[i], a[i], model, rem);
            let row = recursion_row(i);
            for r in 0..dim {
                sys.add(row + r, dim * (i + 1) + r, 1.0);
                for c in 0..dim {
                    sys.add(row + r, dim * i + c, -jac[(r, c)]);
                }
                sys.set_rhs(row + r, -(xn[r] - pred[r]));
            }
        }
        let anchor_row = d + dim * i0;
        sys.add(anchor_row, dim * i0, 1.0);
        sys.set_rhs(anchor_row, -x.dg[i0]);

        let last = m - 1;
        let xl = site_vec(&x, last);
        let xi_mu = |v: &DVector<f64>| {
            rem.xi(backbone.g_bar[last] + v[0], v[1], &v.rows(2, d).into_owned()).mu
        };
        for c in 0..dim {
            let h = 1e-7 * xl[c].abs().max(1e-3 * backbone.g_bar[last]);
            let mut xp = xl.clone();
            let mut xm = xl.clone();
            xp[c] += h;
            xm[c] -= h;
            let mut dv = (xi_mu(&xp) - xi_mu(&xm)) / (2.0 * h);
            if c == 1 {
                dv += lm - 1.0;
            }
            sys.add(n - 1, dim * last + c, dv);
        }
        sys.set_rhs(n - 1, -((lm - 1.0) * x.mu[last] + xi_mu(&xl)));

        let delta = sys.solve()?;
        let mut next = x.clone();
        for i in 0..m {
            next.dg[i] += delta[dim * i];
            next.mu[i] += delta[dim * i + 1];
            for k in 0..d {
                next.r[i][k] += delta[dim * i + 2 + k];
            }
        }
        if !next.is_finite() {
            return Err(RgError::NewtonDiverged(f64::NAN));
        }
        let size = weighted_distance(&next, &x, backbone, &cfg.weight_exponents, w);
        x = next;
        if size < 0.1 * cfg.tol_residual {
            return Ok((x, step));
        }
    }
    Ok((x, 30))
}

/// Perturbation of the zero sequence with entries uniform in
/// `[-amplitude, amplitude]`, from a fixed seed.
pub fn random_initial_guess(window: Window, d_r: usize, amplitude: f64, seed: u64) -> DeviationSequence {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut seq = DeviationSequence::zeros(window, d_r);
    for i in 0..window.len() {
        seq.dg[i] = rng.gen_range(-amplitude..=amplitude);
        seq.mu[i] = rng.gen_range(-amplitude..=amplitude);
        for k in 0..d_r {
            seq.r[i][k] = rng.gen_range(-amplitude..=amplitude);
        }
    }
    seq
}

/// Rough weighted size of what the tail closures leave out, attenuated
/// through `below`/`above` buffer sites.
fn truncation_estimate(
    seq: &DeviationSequence,
    backbone: &BackboneOrbit,
    model: &Model,
    exps: &WeightExponents,
    below: usize,
    above: usize,
) -> f64 {
    let m = seq.window.len();
    let top = seq.mu[m - 1].abs() * model.consts.lambda_mu.powi(-(above as i32))
        / backbone.g_bar[m - 1].powf(exps.mu);
    let bottom = seq.r[0].norm() * model.params.gamma.powi(below as i32)
        / backbone.g_bar[0].powf(exps.r);
    let gap = (model.g_star_bar() - backbone.g_bar[m - 1]) / model.g_star_bar();
    top.max(bottom).max(gap * model.consts.lambda_mu.powi(-(above as i32)))
}

/// A complete trajectory on a reported window. The backbone and deviations
/// extend past the window by the tail buffer sites.
#[derive(Debug, Clone, PartialEq)]
pub struct HeteroclinicSolution {
    pub window: Window,
    pub backbone: BackboneOrbit,
    pub deviations: DeviationSequence,
    pub diagnostics: Diagnostics,
}

/// One row of the reported trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub n: i64,
    pub g_bar: f64,
    pub dg: f64,
    pub g: f64,
    pub mu: f64,
    pub r_norm: f64,
}

impl HeteroclinicSolution {
    pub fn visible_backbone(&self) -> BackboneOrbit {
        self.backbone.restrict(self.window)
    }

    pub fn visible_deviations(&self) -> DeviationSequence {
        self.deviations.restrict(self.window)
    }

    pub fn state(&self, n: i64) -> RGState {
        self.deviations
            .state(&self.backbone, self.deviations.window.index(n))
    }

    pub fn points(&self) -> Vec<TrajectoryPoint> {
        self.window
            .indices()
            .map(|n| {
                let i = self.deviations.window.index(n);
                let g_bar = self.backbone.g_bar[i];
                let dg = self.deviations.dg[i];
                TrajectoryPoint {
                    n,
                    g_bar,
                    dg,
                    g: g_bar + dg,
                    mu: self.deviations.mu[i],
                    r_norm: self.deviations.r[i].norm(),
                }
            })
            .collect()
    }
}

fn padded(window: Window, below: usize, above: usize) -> Window {
    Window {
        n_min: window.n_min - below as i64,
        n_max: window.n_max + above as i64,
    }
}

/// Solves for the complete trajectory anchored at `g_0 = ω_0 ḡ_*`, reported
/// on `window`.
pub fn solve_orbit(
    model: &Model,
    rem: &dyn Remainder,
    omega0: f64,
    window: Window,
    cfg: &SolverConfig,
) -> Result<HeteroclinicSolution> {
    let (below, above) = cfg.padding(model);
    let work = padded(window, below, above);
    let backbone = build_backbone(model, omega0, work, cfg.strict_omega_domain)?;
    let (deviations, mut diagnostics) = picard_solve(&backbone, model, rem, cfg)?;
    diagnostics.window_truncation_estimate = truncation_estimate(
        &deviations,
        &backbone,
        model,
        &cfg.weight_exponents,
        below,
        above,
    );
    Ok(HeteroclinicSolution {
        window,
        backbone,
        deviations,
        diagnostics,
    })
}

/// Re-solves on a larger window, seeded by the old solution padded with
/// fixed-point tails. The weighted change on the old window is reported as
/// `window_truncation_estimate`.
pub fn extend_window(
    solution: &HeteroclinicSolution,
    new_window: Window,
    model: &Model,
    rem: &dyn Remainder,
    cfg: &SolverConfig,
) -> Result<HeteroclinicSolution> {
    if !new_window.contains_window(&solution.window) {
        return Err(RgError::InvalidParams(format!(
            "new window {new_window:?} does not contain {:?}",
            solution.window
        )));
    }
    let (below, above) = cfg.padding(model);
    let work = padded(new_window, below, above);
    let backbone = build_backbone(model, solution.backbone.omega0, work, cfg.strict_omega_domain)?;
    let old = &solution.deviations;
    let old_w = old.window;
    let mut seed = DeviationSequence::zeros(work, rem.dim());
    let last = old_w.len() - 1;
    for n in work.indices() {
        let i = work.index(n);
        if old_w.contains(n) {
            let j = old_w.index(n);
            seed.dg[i] = old.dg[j];
            seed.mu[i] = old.mu[j];
            seed.r[i] = old.r[j].clone();
        } else if n > old_w.n_max {
            seed.dg[i] = old.dg[last];
            seed.mu[i] = old.mu[last];
            seed.r[i] = old.r[last].clone();
        }
    }
    let (deviations, mut diagnostics) = picard_solve_from(&backbone, model, rem, cfg, seed)?;
    diagnostics.window_truncation_estimate = weighted_distance(
        &deviations,
        &solution.deviations,
        &backbone,
        &cfg.weight_exponents,
        solution.window,
    );
    Ok(HeteroclinicSolution {
        window: new_window,
        backbone,
        deviations,
        diagnostics,
    })
}
