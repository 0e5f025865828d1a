//! Error functionals between the direct solution and the approximations,
//! ε-sweeps and log–log slope fits.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assemble::{assemble, ApproximationField, Order, Parts};
use crate::error::{Error, Result};
use crate::interp::fit_line;
use crate::model::{config_to_json, validate_assumptions, ModelConfig};
use crate::refsolve::{
    reference_gradient, section_mean, solve_reference, ReferenceGrid, ReferenceSolution,
};

/// Fits with a larger max residual (log₁₀ units) are flagged.
pub const FIT_RESIDUAL_LIMIT: f64 = 0.2;

/// Number of finest ε values entering a slope fit.
pub const FIT_POINTS: usize = 3;

/// Snapshots of `sol` at or before `horizon`.
fn usable_snapshots(sol: &ReferenceSolution, horizon: f64) -> Result<usize> {
    let n = sol.times.iter().take_while(|&&t| t <= horizon * (1.0 + 1e-12)).count();
    if n == 0 {
        return Err(Error::Config("reference and approximation horizons do not overlap".into()));
    }
    Ok(n)
}

/// Per-snapshot field values and gradients of an approximation on the reference grid.
struct Sampled {
    values: Vec<Vec<f64>>,
    grads: Option<Vec<Vec<[f64; 3]>>>,
}

fn sample_on_grid(sol: &ReferenceSolution, field: &ApproximationField, snaps: usize, grads: bool) -> Sampled {
    let (nx, nr) = (sol.nx(), sol.nr());
    let samplers: Vec<_> = (0..=nr).map(|j| field.sampler([sol.rho(j), 0.0])).collect();
    let rows: Vec<(Vec<f64>, Vec<[f64; 3]>)> = (0..snaps)
        .into_par_iter()
        .map(|k| {
            let t = sol.times[k];
            let mut v = Vec::with_capacity((nx + 1) * (nr + 1));
            let mut g = Vec::new();
            for i in 0..=nx {
                let x = sol.x(i);
                for s in &samplers {
                    let smp = field.sample(x, s, t, grads);
                    v.push(smp.value);
                    if grads {
                        g.push(smp.grad);
                    }
                }
            }
            (v, g)
        })
        .collect();
    let (values, g): (Vec<_>, Vec<_>) = rows.into_iter().unzip();
    Sampled {
        values,
        grads: grads.then_some(g),
    }
}

fn sup_of(sol: &ReferenceSolution, s: &Sampled) -> f64 {
    let mut e = 0.0f64;
    for (k, row) in s.values.iter().enumerate() {
        for (a, b) in row.iter().zip(&sol.snapshots[k]) {
            e = e.max((a - b).abs());
        }
    }
    e
}

fn energy_of(sol: &ReferenceSolution, s: &Sampled, length: f64) -> f64 {
    let grads = s.grads.as_ref().expect("gradients sampled");
    let (nx, nr) = (sol.nx(), sol.nr());
    let vol = sol.radial_weights();
    let n = grads.len();
    let mut total = 0.0;
    for (k, g) in grads.iter().enumerate() {
        let mut level = 0.0;
        for i in 0..=nx {
            let wx = if i == 0 || i == nx { 0.5 * sol.hx } else { sol.hx };
            for j in 0..=nr {
                let r = reference_gradient(sol, k, i, j);
                let a = g[i * (nr + 1) + j];
                let d = (a[0] - r[0]).powi(2) + (a[1] - r[1]).powi(2) + a[2] * a[2];
                level += wx * vol[j] * d;
            }
        }
        // |Ω_ε| = π ε² r0² ℓ against the measure 2π ε² ρ dρ dx1.
        level *= 2.0 / (sol.r0 * sol.r0 * length);
        let wt = if n == 1 {
            1.0
        } else if k == 0 || k == n - 1 {
            0.5 * (sol.times[1] - sol.times[0])
        } else {
            sol.times[1] - sol.times[0]
        };
        total += wt * level;
    }
    total.sqrt()
}

/// max over the reference grid (times ≤ horizon) of |𝔄 − u_ε|.
pub fn sup_error(sol: &ReferenceSolution, field: &ApproximationField) -> Result<f64> {
    let n = usable_snapshots(sol, field.parts.horizon())?;
    Ok(sup_of(sol, &sample_on_grid(sol, field, n, false)))
}

/// |Ω_ε|^{-1/2} ‖∇𝔄 − ∇u_ε‖ over Ω_ε × (0, T1).
pub fn energy_error(sol: &ReferenceSolution, field: &ApproximationField) -> Result<f64> {
    let n = usable_snapshots(sol, field.parts.horizon())?;
    Ok(energy_of(sol, &sample_on_grid(sol, field, n, true), field.parts.cfg.length))
}

/// max over (x1, t) of |cross-section mean of u_ε − 𝔄₀|.
pub fn avg_error(sol: &ReferenceSolution, leading: &ApproximationField) -> Result<f64> {
    let n = usable_snapshots(sol, leading.parts.horizon())?;
    let vol = sol.radial_weights();
    let s = leading.sampler([0.0, 0.0]);
    let mut e = 0.0f64;
    for k in 0..n {
        let t = sol.times[k];
        for i in 0..=sol.nx() {
            let m = section_mean(sol, &vol, k, i);
            e = e.max((m - leading.eval(sol.x(i), &s, t)).abs());
        }
    }
    Ok(e)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub epsilon: f64,
    pub sup_first: f64,
    pub sup_leading: f64,
    pub energy_first: f64,
    pub energy_leading: f64,
    pub avg_leading: f64,
    pub horizon: f64,
    pub reference_steps: usize,
    pub max_balance: f64,
}

/// Least-squares slope of log₁₀ error against log₁₀ ε.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub residual: f64,
    pub points: usize,
    pub reliable: bool,
}

pub fn fit_slope(eps: &[f64], err: &[f64]) -> Option<SlopeFit> {
    if eps.len() < 3 {
        return None;
    }
    let x: Vec<f64> = eps.iter().map(|e| e.log10()).collect();
    let y: Vec<f64> = err.iter().map(|e| e.max(1e-300).log10()).collect();
    let (slope, _, residual) = fit_line(&x, &y);
    Some(SlopeFit {
        slope,
        residual,
        points: eps.len(),
        reliable: residual <= FIT_RESIDUAL_LIMIT,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Slopes {
    pub sup_first: Option<SlopeFit>,
    pub sup_leading: Option<SlopeFit>,
    pub energy_first: Option<SlopeFit>,
    pub energy_leading: Option<SlopeFit>,
    pub avg_leading: Option<SlopeFit>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTable {
    pub scenario: String,
    pub beta: f64,
    pub horizon: f64,
    /// Rows in the order of the configured ε list.
    pub rows: Vec<ErrorReport>,
    pub slopes: Slopes,
}

impl ConvergenceTable {
    pub fn from_rows(cfg: &ModelConfig, horizon: f64, rows: Vec<ErrorReport>) -> Self {
        let mut idx: Vec<usize> = (0..rows.len()).collect();
        idx.sort_by(|&a, &b| rows[a].epsilon.total_cmp(&rows[b].epsilon));
        idx.truncate(FIT_POINTS);
        let pick = |f: fn(&ErrorReport) -> f64| -> Option<SlopeFit> {
            let e: Vec<f64> = idx.iter().map(|&i| rows[i].epsilon).collect();
            let v: Vec<f64> = idx.iter().map(|&i| f(&rows[i])).collect();
            fit_slope(&e, &v)
        };
        let slopes = Slopes {
            sup_first: pick(|r| r.sup_first),
            sup_leading: pick(|r| r.sup_leading),
            energy_first: pick(|r| r.energy_first),
            energy_leading: pick(|r| r.energy_leading),
            avg_leading: pick(|r| r.avg_leading),
        };
        ConvergenceTable {
            scenario: cfg.name.clone(),
            beta: cfg.beta,
            horizon,
            rows,
            slopes,
        }
    }
}

/// Errors of the leading and first-order approximations for one ε.
pub fn study_row(parts: &Parts, eps: f64) -> Result<ErrorReport> {
    let cfg = &parts.cfg;
    let horizon = parts.horizon().min(cfg.horizon);
    let grid = ReferenceGrid::from_config(cfg, eps, horizon)?;
    let sol = solve_reference(cfg, &grid)?;
    let first = assemble(parts, eps, Order::First)?;
    let leading = assemble(parts, eps, Order::Leading)?;
    let n = usable_snapshots(&sol, horizon)?;
    let sf = sample_on_grid(&sol, &first, n, true);
    let sl = sample_on_grid(&sol, &leading, n, true);
    Ok(ErrorReport {
        epsilon: eps,
        sup_first: sup_of(&sol, &sf),
        sup_leading: sup_of(&sol, &sl),
        energy_first: energy_of(&sol, &sf, cfg.length),
        energy_leading: energy_of(&sol, &sl, cfg.length),
        avg_leading: avg_error(&sol, &leading)?,
        horizon,
        reference_steps: grid.nt,
        max_balance: sol.balance.iter().copied().fold(0.0, f64::max),
    })
}

/// Full sweep over `cfg.epsilons`, with up to `jobs` rows in flight.
///
/// Every row is computed by the same serial code path and collected in
/// list order, so the table does not depend on `jobs`.
pub fn convergence_study(cfg: &ModelConfig, jobs: usize) -> Result<ConvergenceTable> {
    if cfg.epsilons.len() < 3 {
        return Err(Error::Config("a convergence study needs at least 3 epsilon values".into()));
    }
    validate_assumptions(cfg).require()?;
    let parts = Parts::build(cfg, Order::First)?;
    convergence_study_with(&parts, jobs)
}

pub fn convergence_study_with(parts: &Parts, jobs: usize) -> Result<ConvergenceTable> {
    let cfg = &parts.cfg;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Numeric(format!("thread pool: {e}")))?;
    let rows: Vec<Result<ErrorReport>> =
        pool.install(|| cfg.epsilons.par_iter().map(|&eps| study_row(parts, eps)).collect());
    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
    let horizon = parts.horizon().min(cfg.horizon);
    Ok(ConvergenceTable::from_rows(cfg, horizon, rows))
}

pub const CSV_HEADER: &str = "epsilon,sup_first,sup_leading,energy_first,avg_leading";

pub fn table_csv(table: &ConvergenceTable) -> String {
    let mut s = String::from(CSV_HEADER);
    s.push('\n');
    for r in &table.rows {
        s.push_str(&format!(
            "{:e},{:e},{:e},{:e},{:e}\n",
            r.epsilon, r.sup_first, r.sup_leading, r.energy_first, r.avg_leading
        ));
    }
    s
}

/// Write `<stem>.csv` and `<stem>.json`; `metadata` is merged into the JSON.
pub fn write_report(
    table: &ConvergenceTable,
    cfg: &ModelConfig,
    stem: &Path,
    metadata: Option<serde_json::Value>,
) -> Result<(PathBuf, PathBuf)> {
    if table.rows.is_empty() {
        return Err(Error::Config("empty convergence table".into()));
    }
    let csv = stem.with_extension("csv");
    let json = stem.with_extension("json");
    if let Some(dir) = stem.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    std::fs::write(&csv, table_csv(table))?;
    let mut doc = serde_json::json!({
        "scenario": table.scenario,
        "beta": table.beta,
        "horizon": table.horizon,
        "fit_points": FIT_POINTS,
        "fit_residual_limit": FIT_RESIDUAL_LIMIT,
        "slopes": table.slopes,
        "rows": table.rows,
        "config": config_to_json(cfg),
    });
    if let (Some(serde_json::Value::Object(extra)), serde_json::Value::Object(map)) = (metadata, &mut doc) {
        for (k, v) in extra {
            map.insert(k, v);
        }
    }
    let text = serde_json::to_string_pretty(&doc).map_err(|e| Error::Numeric(e.to_string()))?;
    std::fs::write(&json, text + "\n")?;
    Ok((csv, json))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_of_power_law() {
        let e = [0.1, 0.05, 0.025];
        let v: Vec<f64> = e.iter().map(|x: &f64| 3.0 * x * x).collect();
        let f = fit_slope(&e, &v).unwrap();
        assert!((f.slope - 2.0).abs() < 1e-12 && f.reliable);
        assert!(fit_slope(&e[..2], &v[..2]).is_none());
    }

    #[test]
    fn noisy_fit_flagged() {
        let e = [0.1, 0.05, 0.025];
        let v = [1e-2, 1e-5, 1e-3];
        assert!(!fit_slope(&e, &v).unwrap().reliable);
    }

    #[test]
    fn csv_layout() {
        let cfg = crate::model::builtin_scenario("linear-advection").unwrap();
        let row = |e: f64| ErrorReport {
            epsilon: e,
            sup_first: e * e,
            sup_leading: e,
            energy_first: e,
            energy_leading: 1.0,
            avg_leading: e,
            horizon: 1.0,
            reference_steps: 1,
            max_balance: 0.0,
        };
        let t = ConvergenceTable::from_rows(&cfg, 1.0, [0.2, 0.1, 0.05, 0.025].map(row).to_vec());
        let csv = table_csv(&t);
        assert_eq!(csv.lines().count(), 5);
        assert_eq!(csv.lines().next().unwrap(), CSV_HEADER);
        assert!((t.slopes.sup_first.as_ref().unwrap().slope - 2.0).abs() < 1e-12);
    }
}
