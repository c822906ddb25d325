use std::path::PathBuf;

use log::{info, warn};
use rayon::prelude::*;
use rgorbit::hierarchical::{
    coefficient_jacobian, critical_mu_search, flow, hier_fixed_point, PotentialCoeffs,
};
use rgorbit::orbit::{solve_orbit, HeteroclinicSolution, TrajectoryPoint, Window};
use rgorbit::spectral::{eigen, newton_fixed_point, spectral_report, Classification};
use rgorbit::{Model, RGState, Remainder};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{Format, RemainderKind, RunConfig};
use crate::error::CliError;
use crate::output::{csv_document, csv_dynamic, json_document, provenance, write_atomic};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Point {
    Gaussian,
    Ir,
}

/// The model section as actually used, when the remainder replaces it.
fn resolved_model(cfg: &RunConfig, model: &Model) -> Option<Value> {
    (cfg.remainder.model == RemainderKind::Hierarchical).then(|| json!(model.params))
}

fn state_json(s: &RGState) -> Value {
    json!({ "g": s.g, "mu": s.mu, "r": s.r.iter().collect::<Vec<_>>() })
}

fn format_float(x: f64) -> String {
    if x.is_finite() {
        serde_json::Number::from_f64(x).map_or_else(|| x.to_string(), |n| n.to_string())
    } else {
        x.to_string()
    }
}

/// One trajectory row in the fixed column order `n,g_bar,dg,g,mu,R_norm`.
#[derive(Serialize)]
struct TrajectoryRecord {
    n: i64,
    g_bar: f64,
    dg: f64,
    g: f64,
    mu: f64,
    #[serde(rename = "R_norm")]
    r_norm: f64,
}

impl From<TrajectoryPoint> for TrajectoryRecord {
    fn from(p: TrajectoryPoint) -> Self {
        Self {
            n: p.n,
            g_bar: p.g_bar,
            dg: p.dg,
            g: p.g,
            mu: p.mu,
            r_norm: p.r_norm,
        }
    }
}

/// Distances of the trajectory ends to the Gaussian point and to the
/// Newton-solved IR fixed point (`None` if Newton fails).
fn endpoint_distances(
    sol: &HeteroclinicSolution,
    model: &Model,
    rem: &dyn Remainder,
) -> (f64, Option<f64>, Option<RGState>) {
    let uv = sol.state(sol.window.n_min);
    let gaussian = uv.distance(&RGState::origin(model.d_r()));
    match newton_fixed_point(&model.approx_ir_point(), model, rem) {
        Ok(fp) => (gaussian, Some(sol.state(sol.window.n_max).distance(&fp)), Some(fp)),
        Err(e) => {
            warn!("IR fixed point not found: {e}");
            (gaussian, None, None)
        }
    }
}

pub fn orbit(cfg: &RunConfig, omega0: f64, window: i64) -> Result<Vec<PathBuf>, CliError> {
    let (model, rem) = cfg.build()?;
    let w = Window::symmetric(window)?;
    let sol = solve_orbit(&model, rem.as_ref(), omega0, w, &cfg.solver)?;
    info!(
        "converged in {} sweeps, residual {:e}",
        sol.diagnostics.iterations_used,
        sol.diagnostics.final_residuals.max()
    );
    let (gaussian, ir, fp) = endpoint_distances(&sol, &model, rem.as_ref());
    let prov = provenance(
        "orbit",
        json!({ "omega0": omega0, "window": window }),
        cfg,
        resolved_model(cfg, &model),
    );
    let rows: Vec<TrajectoryRecord> = sol.points().into_iter().map(Into::into).collect();
    let dir = &cfg.output.dir;
    let traj = match cfg.output.format {
        Format::Csv => write_atomic(dir, "orbit.csv", &csv_document(&prov, &[], &rows)?)?,
        Format::Json => write_atomic(dir, "orbit.json", &json_document(&prov, json!({ "rows": rows }))?)?,
    };
    let diag = json!({
        "converged": true,
        "omega0": omega0,
        "window": [w.n_min, w.n_max],
        "g_star_bar": model.g_star_bar(),
        "dg_at_anchor": sol.deviations.dg[sol.deviations.window.index(0)],
        "diagnostics": sol.diagnostics,
        "gaussian_endpoint_distance": gaussian,
        "ir_endpoint_distance": ir,
        "ir_fixed_point": fp.as_ref().map(state_json),
    });
    let diag_path = write_atomic(dir, "orbit_diagnostics.json", &json_document(&prov, diag)?)?;
    Ok(vec![traj, diag_path])
}

pub fn spectrum(cfg: &RunConfig, point: Point) -> Result<Vec<PathBuf>, CliError> {
    let (model, rem) = cfg.build()?;
    let fp = match point {
        Point::Gaussian => RGState::origin(model.d_r()),
        Point::Ir => newton_fixed_point(&model.approx_ir_point(), &model, rem.as_ref())?,
    };
    let rep = spectral_report(&fp, &model, rem.as_ref())?;
    let name = match point {
        Point::Gaussian => "gaussian",
        Point::Ir => "ir",
    };
    let prov = provenance("spectrum", json!({ "point": name }), cfg, resolved_model(cfg, &model));
    let body = json!({
        "point": name,
        "fixed_point": state_json(&rep.fixed_point),
        "eigenvalues": eigenvalues_json(&rep.eigenvalues),
        "nu": rep.nu,
        "omega_corr": rep.omega_corr,
        "classification": rep.classification,
    });
    let path = write_atomic(&cfg.output.dir, &format!("spectrum_{name}.json"), &json_document(&prov, body)?)?;
    Ok(vec![path])
}

fn eigenvalues_json(values: &[rgorbit::spectral::Complex64]) -> Vec<Value> {
    values
        .iter()
        .map(|z| json!({ "re": z.re, "im": z.im, "modulus": z.norm() }))
        .collect()
}

pub fn hier_flow(cfg: &RunConfig, g0: f64, mu0: f64, steps: usize) -> Result<Vec<PathBuf>, CliError> {
    let p = &cfg.hier;
    let f = flow(&PotentialCoeffs::from_couplings(g0, mu0, p.m), steps, p)?;
    let prov = provenance("hier flow", json!({ "g0": g0, "mu0": mu0, "steps": steps }), cfg, None);
    let escape = json!(f.escape);
    let regime = json!(f.regime());
    let dir = &cfg.output.dir;
    let path = match cfg.output.format {
        Format::Csv => {
            let mut header: Vec<String> = ["n", "g", "mu"].map(String::from).to_vec();
            header.extend((1..=p.m).map(|k| format!("v{}", 2 * k)));
            header.push("projection_residual".into());
            let rows: Vec<Vec<String>> = f
                .history
                .iter()
                .enumerate()
                .map(|(n, v)| {
                    let (g, mu) = f.couplings[n];
                    let mut row = vec![n.to_string(), format_float(g), format_float(mu)];
                    row.extend(v.v.iter().map(|&x| format_float(x)));
                    row.push(
                        n.checked_sub(1)
                            .map_or(String::new(), |i| format_float(f.diagnostics[i].projection_residual)),
                    );
                    row
                })
                .collect();
            let extra = [("escape", escape), ("regime", regime)];
            write_atomic(dir, "hier_flow.csv", &csv_dynamic(&prov, &extra, &header, &rows)?)?
        }
        Format::Json => {
            let rows: Vec<Value> = f
                .history
                .iter()
                .enumerate()
                .map(|(n, v)| {
                    json!({
                        "n": n,
                        "g": f.couplings[n].0,
                        "mu": f.couplings[n].1,
                        "coefficients": v.v,
                        "projection_residual": n.checked_sub(1).map(|i| f.diagnostics[i].projection_residual),
                    })
                })
                .collect();
            let body = json!({ "rows": rows, "escape": escape, "regime": regime });
            write_atomic(dir, "hier_flow.json", &json_document(&prov, body)?)?
        }
    };
    Ok(vec![path])
}

pub fn hier_critical(cfg: &RunConfig, g0: f64, max_steps: usize, bracket: (f64, f64)) -> Result<Vec<PathBuf>, CliError> {
    let res = critical_mu_search(g0, &cfg.hier, max_steps, bracket)?;
    let prov = provenance(
        "hier critical",
        json!({ "g0": g0, "max_steps": max_steps, "bracket": [bracket.0, bracket.1] }),
        cfg,
        None,
    );
    let (lo, hi) = *res.history.last().expect("history holds the initial bracket");
    let body = json!({
        "g0": g0,
        "mu0_critical": res.mu0_critical,
        "final_width": hi - lo,
        "bisections": res.history.len() - 1,
        "history": res.history.iter().map(|&(a, b)| json!({ "lo": a, "hi": b })).collect::<Vec<_>>(),
    });
    let path = write_atomic(&cfg.output.dir, "hier_critical.json", &json_document(&prov, body)?)?;
    Ok(vec![path])
}

pub fn hier_fixed(cfg: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    let p = &cfg.hier;
    let fp = hier_fixed_point(p)?;
    let eig = eigen(&coefficient_jacobian(&fp.coeffs, p)?)?;
    let classification = Classification {
        expanding: eig.values.iter().filter(|z| z.norm() > 1.0).count(),
        contracting: eig.values.iter().filter(|z| z.norm() < 1.0).count(),
    };
    let prov = provenance("hier fixed-point", json!({}), cfg, None);
    let body = json!({
        "coefficients": fp.coeffs.v.iter().enumerate()
            .map(|(i, &v)| json!({ "k": 2 * (i + 1), "v": v }))
            .collect::<Vec<_>>(),
        "g": fp.coeffs.coeff(4),
        "mu": fp.coeffs.coeff(2),
        "residual": fp.residual,
        "newton_steps": fp.newton_steps,
        "a_eff": fp.a_eff,
        "eigenvalues": eigenvalues_json(&eig.values),
        "classification": classification,
    });
    let path = write_atomic(&cfg.output.dir, "hier_fixed_point.json", &json_document(&prov, body)?)?;
    Ok(vec![path])
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub epsilon: f64,
    pub omega0: f64,
    pub converged: bool,
    pub error: Option<&'static str>,
    pub iterations: Option<usize>,
    pub residual_g: Option<f64>,
    pub residual_mu: Option<f64>,
    pub residual_r: Option<f64>,
    pub contraction_ratio: Option<f64>,
    pub gaussian_distance: Option<f64>,
    pub ir_distance: Option<f64>,
}

fn sweep_point(base: &RunConfig, epsilon: f64, omega0: f64, window: i64) -> SweepRow {
    let mut row = SweepRow {
        epsilon,
        omega0,
        converged: false,
        error: None,
        iterations: None,
        residual_g: None,
        residual_mu: None,
        residual_r: None,
        contraction_ratio: None,
        gaussian_distance: None,
        ir_distance: None,
    };
    let mut cfg = base.clone();
    cfg.set_epsilon(epsilon);
    let solved = cfg.validate().and_then(|_| {
        let (model, rem) = cfg.build()?;
        let sol = solve_orbit(&model, rem.as_ref(), omega0, Window::symmetric(window)?, &cfg.solver)?;
        let ends = endpoint_distances(&sol, &model, rem.as_ref());
        Ok((sol, ends))
    });
    match solved {
        Ok((sol, (gaussian, ir, _))) => {
            let d = &sol.diagnostics;
            row.converged = true;
            row.iterations = Some(d.iterations_used);
            row.residual_g = Some(d.final_residuals.g);
            row.residual_mu = Some(d.final_residuals.mu);
            row.residual_r = Some(d.final_residuals.r);
            row.contraction_ratio = d.contraction_ratio_estimates.last().copied();
            row.gaussian_distance = Some(gaussian);
            row.ir_distance = ir;
        }
        Err(e) => {
            info!("sweep point eps={epsilon} omega0={omega0}: {e}");
            row.error = Some(e.name());
        }
    }
    row
}

fn sorted_grid(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

pub fn sweep(cfg: &RunConfig, omega0s: Vec<f64>, epsilons: Vec<f64>, window: i64) -> Result<Vec<PathBuf>, CliError> {
    let omega0s = sorted_grid(omega0s);
    let epsilons = sorted_grid(epsilons);
    if omega0s.is_empty() || epsilons.is_empty() {
        return Err(CliError::Usage("sweep grid is empty".into()));
    }
    let grid: Vec<(f64, f64)> = epsilons
        .iter()
        .flat_map(|&e| omega0s.iter().map(move |&w| (e, w)))
        .collect();
    // collect() on an indexed parallel iterator keeps grid order
    let rows: Vec<SweepRow> = grid
        .par_iter()
        .map(|&(e, w)| sweep_point(cfg, e, w, window))
        .collect();
    let prov = provenance(
        "sweep",
        json!({ "omega0": omega0s, "epsilon": epsilons, "window": window }),
        cfg,
        None,
    );
    let dir = &cfg.output.dir;
    let path = match cfg.output.format {
        Format::Csv => write_atomic(dir, "sweep.csv", &csv_document(&prov, &[], &rows)?)?,
        Format::Json => write_atomic(dir, "sweep.json", &json_document(&prov, json!({ "rows": rows }))?)?,
    };
    if rows.iter().all(|r| !r.converged) {
        return Err(CliError::AllPointsFailed(rows.len()));
    }
    Ok(vec![path])
}
