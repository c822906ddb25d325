//! Flows of the hierarchical recursion: escape detection, tuning of the
//! initial mass onto the critical surface, and the nontrivial fixed point.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::potential::{extract_couplings, HierParams, HierStepper, PotentialCoeffs, StepDiagnostics};
use crate::error::{Result, RgError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// `μ` runs to large positive values (massive, disordered side).
    HighTemperature,
    /// `μ` runs negative and the potential develops wells.
    LowTemperature,
}

impl Regime {
    fn of(mu: f64) -> Self {
        if mu > 0.0 {
            Regime::HighTemperature
        } else {
            Regime::LowTemperature
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EscapeReason {
    MassThreshold,
    UnstablePotential,
    QuadratureOverflow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Escape {
    /// Index of the first potential that left the critical region, or of
    /// the step that could not be carried out.
    pub step: usize,
    pub regime: Regime,
    pub reason: EscapeReason,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Flow {
    /// `(g_n, μ_n)` for every recorded potential, starting with `V_0`.
    pub couplings: Vec<(f64, f64)>,
    pub history: Vec<PotentialCoeffs>,
    pub diagnostics: Vec<StepDiagnostics>,
    pub escape: Option<Escape>,
}

impl Flow {
    /// Regime the flow is heading to; `None` if it neither escaped nor moved.
    pub fn regime(&self) -> Option<Regime> {
        if let Some(e) = self.escape {
            return Some(e.regime);
        }
        let n = self.couplings.len();
        if n < 2 {
            return None;
        }
        let drift = self.couplings[n - 1].1 - self.couplings[n - 2].1;
        (drift != 0.0).then(|| Regime::of(drift))
    }
}

/// Iterates the recursion `steps` times from `v0`, stopping at the first
/// escape. An unusable `v0` is an error; failures later on are escapes.
pub fn flow(v0: &PotentialCoeffs, steps: usize, p: &HierParams) -> Result<Flow> {
    flow_with(&HierStepper::new(p)?, v0, steps)
}

pub fn flow_with(stepper: &HierStepper, v0: &PotentialCoeffs, steps: usize) -> Result<Flow> {
    if steps == 0 {
        return Err(RgError::InvalidParams("flow needs at least one step".into()));
    }
    v0.check_stable()?;
    let mu_escape = stepper.params().mu_escape;
    let mut out = Flow {
        couplings: vec![extract_couplings(v0)],
        history: vec![v0.clone()],
        diagnostics: Vec::new(),
        escape: None,
    };
    if v0.coeff(2).abs() > mu_escape {
        out.escape = Some(Escape {
            step: 0,
            regime: Regime::of(v0.coeff(2)),
            reason: EscapeReason::MassThreshold,
        });
        return Ok(out);
    }
    let mut v = v0.clone();
    for n in 1..=steps {
        match stepper.step(&v) {
            Ok((next, diag)) => {
                let (g, mu) = extract_couplings(&next);
                out.couplings.push((g, mu));
                out.history.push(next.clone());
                out.diagnostics.push(diag);
                if mu.abs() > mu_escape {
                    out.escape = Some(Escape {
                        step: n,
                        regime: Regime::of(mu),
                        reason: EscapeReason::MassThreshold,
                    });
                    break;
                }
                v = next;
            }
            Err(err @ (RgError::UnstablePotential(_) | RgError::QuadratureOverflow)) => {
                out.escape = Some(Escape {
                    step: n,
                    regime: Regime::of(v.coeff(2)),
                    reason: match err {
                        RgError::QuadratureOverflow => EscapeReason::QuadratureOverflow,
                        _ => EscapeReason::UnstablePotential,
                    },
                });
                break;
            }
            Err(other) => return Err(other),
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalSearch {
    pub mu0_critical: f64,
    /// Bracket `(lo, hi)` before each bisection step, then the final one.
    pub history: Vec<(f64, f64)>,
}

const BISECTION_REL_WIDTH: f64 = 1e-12;
const BISECTION_MAX_ITERS: usize = 200;

/// Bisects the initial mass `μ_0` for the initial potential `μ_0 He_2 +
/// g_0 He_4` between flows that escape to opposite regimes.
pub fn critical_mu_search(g0: f64, p: &HierParams, max_steps: usize, bracket: (f64, f64)) -> Result<CriticalSearch> {
    let stepper = HierStepper::new(p)?;
    let (mut lo, mut hi) = if bracket.0 <= bracket.1 { bracket } else { (bracket.1, bracket.0) };
    if !(lo.is_finite() && hi.is_finite()) || lo == hi {
        return Err(RgError::BracketInvalid(format!("degenerate bracket [{lo}, {hi}]")));
    }
    let classify = |mu0: f64| -> Result<Option<Regime>> {
        match flow_with(&stepper, &PotentialCoeffs::from_couplings(g0, mu0, p.m), max_steps) {
            Ok(f) => Ok(f.regime()),
            // a negative mass with no quartic term is already past the wall
            Err(RgError::UnstablePotential(_)) => Ok(Some(Regime::of(mu0))),
            Err(e) => Err(e),
        }
    };
    let r_lo = classify(lo)?;
    let r_hi = classify(hi)?;
    let mut history = vec![(lo, hi)];
    match (r_lo, r_hi) {
        (None, _) => return Ok(CriticalSearch { mu0_critical: lo, history }),
        (_, None) => return Ok(CriticalSearch { mu0_critical: hi, history }),
        (Some(a), Some(b)) if a == b => {
            return Err(RgError::BracketInvalid(format!(
                "both ends of [{lo}, {hi}] flow to {a:?}"
            )))
        }
        _ => {}
    }
    let r_lo = r_lo.unwrap();
    for _ in 0..BISECTION_MAX_ITERS {
        if hi - lo <= BISECTION_REL_WIDTH * lo.abs().max(hi.abs()) {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        match classify(mid)? {
            None => {
                history.push((mid, mid));
                return Ok(CriticalSearch { mu0_critical: mid, history });
            }
            Some(r) if r == r_lo => lo = mid,
            Some(_) => hi = mid,
        }
        history.push((lo, hi));
    }
    Ok(CriticalSearch {
        mu0_critical: 0.5 * (lo + hi),
        history,
    })
}

/// Second-order fit `g′ = L^ε g − a_eff g²` of the quartic coupling after one
/// step from `g He_4`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectiveA {
    pub a_eff: f64,
    /// Next-order coefficient `b` in `(L^ε g − g′)/g² ≈ a_eff + b g`.
    pub cubic: f64,
    /// `μ′ ≈ shift · g²`, the mass generated by one step from `μ = 0`.
    pub mu_shift: f64,
}

const FIT_COUPLINGS: [f64; 4] = [1e-4, 2e-4, 3e-4, 4e-4];

pub fn effective_a(p: &HierParams) -> Result<EffectiveA> {
    effective_a_with(&HierStepper::new(p)?)
}

fn effective_a_with(stepper: &HierStepper) -> Result<EffectiveA> {
    let p = stepper.params();
    let lg = p.linear_eigenvalue(4);
    let mut rows = Vec::new();
    for &g in &FIT_COUPLINGS {
        let (next, _) = stepper.step(&PotentialCoeffs::from_couplings(g, 0.0, p.m))?;
        let (g1, mu1) = extract_couplings(&next);
        rows.push((g, (lg * g - g1) / (g * g), mu1 / (g * g)));
    }
    let x = DMatrix::from_fn(rows.len(), 2, |i, j| if j == 0 { 1.0 } else { rows[i].0 });
    let fit = |y: DVector<f64>| -> Result<DVector<f64>> {
        x.clone().svd(true, true).solve(&y, 1e-14).map_err(|_| RgError::SingularJacobian)
    };
    let a = fit(DVector::from_iterator(rows.len(), rows.iter().map(|r| r.1)))?;
    let s = fit(DVector::from_iterator(rows.len(), rows.iter().map(|r| r.2)))?;
    Ok(EffectiveA {
        a_eff: a[0],
        cubic: a[1],
        mu_shift: s[0],
    })
}

/// Central-difference Jacobian of one step in coefficient space.
pub fn coefficient_jacobian(v: &PotentialCoeffs, p: &HierParams) -> Result<DMatrix<f64>> {
    coefficient_jacobian_with(&HierStepper::new(p)?, v)
}

pub(crate) fn coefficient_jacobian_with(stepper: &HierStepper, v: &PotentialCoeffs) -> Result<DMatrix<f64>> {
    let m = v.m();
    let mut jac = DMatrix::zeros(m, m);
    let scale = v.v.iter().fold(0.0f64, |a, c| a.max(c.abs())).max(1e-12);
    let base = stepper.step(v)?.0;
    for j in 0..m {
        // relative steps keep a small top coefficient from changing sign
        let h = if v.v[j] != 0.0 { 1e-4 * v.v[j].abs() } else { 1e-8 * scale };
        let mut vp = v.clone();
        let mut vm = v.clone();
        vp.v[j] += h;
        vm.v[j] -= h;
        let fp = stepper.step(&vp)?.0;
        match stepper.step(&vm) {
            Ok((fm, _)) => {
                for i in 0..m {
                    jac[(i, j)] = (fp.v[i] - fm.v[i]) / (2.0 * h);
                }
            }
            Err(RgError::UnstablePotential(_)) => {
                for i in 0..m {
                    jac[(i, j)] = (fp.v[i] - base.v[i]) / h;
                }
            }
            Err(e) => return Err(e),
        }
    }
    Ok(jac)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HierFixedPoint {
    pub coeffs: PotentialCoeffs,
    /// Sup-norm of `step(V) − V`.
    pub residual: f64,
    pub newton_steps: usize,
    /// The seed's quadratic coefficient.
    pub a_eff: f64,
}

const FIXED_POINT_TOL: f64 = 1e-10;
const FIXED_POINT_MAX_ITERS: usize = 50;

/// Newton solve of `step(V) = V`, seeded by the simplified-map fixed
/// point `g = (L^ε − 1)/a_eff` with the mass balancing its one-step shift.
pub fn hier_fixed_point(p: &HierParams) -> Result<HierFixedPoint> {
    let stepper = HierStepper::new(p)?;
    let fit = effective_a_with(&stepper)?;
    if !(fit.a_eff > 0.0) {
        return Err(RgError::NewtonDiverged(f64::NAN));
    }
    let g = (p.linear_eigenvalue(4) - 1.0) / fit.a_eff;
    let mu = -fit.mu_shift * g * g / (p.linear_eigenvalue(2) - 1.0);
    let mut v = PotentialCoeffs::from_couplings(g, mu, p.m);
    let residual = |v: &PotentialCoeffs| -> Result<DVector<f64>> {
        let next = stepper.step(v)?.0;
        Ok(DVector::from_iterator(p.m, next.v.iter().zip(&v.v).map(|(a, b)| a - b)))
    };
    let mut r = residual(&v)?;
    for it in 0..FIXED_POINT_MAX_ITERS {
        let norm = r.amax();
        if norm < FIXED_POINT_TOL {
            return Ok(HierFixedPoint {
                coeffs: v,
                residual: norm,
                newton_steps: it,
                a_eff: fit.a_eff,
            });
        }
        let jac = coefficient_jacobian_with(&stepper, &v)? - DMatrix::identity(p.m, p.m);
        let delta = jac.lu().solve(&(-&r)).ok_or(RgError::SingularJacobian)?;
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..=30 {
            let trial = PotentialCoeffs {
                v: v.v.iter().zip(delta.iter()).map(|(a, d)| a + t * d).collect(),
            };
            if let Ok(rt) = residual(&trial) {
                if rt.amax() < norm {
                    v = trial;
                    r = rt;
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
    Err(RgError::NewtonDiverged(r.amax()))
}
