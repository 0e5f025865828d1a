//! One function per subcommand. Each stage loads its inputs from the cache
//! (or, with `--pipeline`, runs the upstream stage first), does its work
//! through the library and writes its report under the output directory.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde_json::{json, Value};
use thincyl::assemble::{assemble, check_boundary_fit, Order, Parts};
use thincyl::blayer::{decay_rate, initial_values, pi0_eval, DecayFit};
use thincyl::cell::{build_mesh, build_u1, build_u2};
use thincyl::limit::{solve_limit, solve_w1, LimitSolution, CROSSING_TOL};
use thincyl::model::{validate_assumptions, ModelConfig};
use thincyl::refsolve::{
    flux_balance, mms_self_test, section_mean, solve_reference, ReferenceGrid,
};
use thincyl::study::{convergence_study_with, write_report};
use thincyl::{Error, Result};

use crate::artifacts::{cache_path, cell_key, limit_key, load, store, write_json, write_text, CellArtifact};

pub struct Ctx {
    pub cfg: ModelConfig,
    pub out: PathBuf,
    pub order: Order,
    pub jobs: usize,
    pub timestamp: bool,
    pub pipeline: bool,
}

impl Ctx {
    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn pool(&self) -> Result<rayon::ThreadPool> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.jobs.max(1))
            .build()
            .map_err(|e| Error::Numeric(format!("thread pool: {e}")))
    }
}

fn missing(what: &str, path: &Path, stage: &str) -> Error {
    Error::Dependency(format!(
        "{what} artifact `{}` not found; run `thincyl {stage}` first or pass --pipeline",
        path.display()
    ))
}

fn decay_json(fit: DecayFit) -> Value {
    match fit {
        DecayFit::Rate(r) => json!({ "rate": r }),
        DecayFit::NumericallyZero => json!("numerically-zero"),
    }
}

// ---------------------------------------------------------------------------
// validate

pub fn validate(ctx: &Ctx) -> Result<Vec<PathBuf>> {
    let report = validate_assumptions(&ctx.cfg);
    let path = ctx.path("validate.json");
    write_json(
        &path,
        &json!({
            "scenario": ctx.cfg.name,
            "passed": report.passed(),
            "checks": report.checks,
            "constants": report.constants,
        }),
    )?;
    report.require()?;
    Ok(vec![path])
}

// ---------------------------------------------------------------------------
// limit

fn limit_compute(ctx: &Ctx) -> Result<LimitSolution> {
    let path = cache_path(&ctx.out, "limit", &limit_key(&ctx.cfg));
    if let Some(lim) = load(&path)? {
        return Ok(lim);
    }
    let lim = solve_limit(&ctx.cfg, &ctx.cfg.grid)?;
    store(&path, &lim)?;
    Ok(lim)
}

pub fn limit(ctx: &Ctx) -> Result<(LimitSolution, Vec<PathBuf>)> {
    let lim = limit_compute(ctx)?;
    let w0 = &lim.w0;
    let fan_crossing = lim.fan.as_ref().and_then(|f| f.first_crossing(w0.nt, CROSSING_TOL));
    let report = ctx.path("limit.json");
    write_json(
        &report,
        &json!({
            "scenario": ctx.cfg.name,
            "key": limit_key(&ctx.cfg),
            "cauchy": lim.cauchy,
            "nx": w0.nx,
            "nt": w0.nt,
            "horizon": ctx.cfg.horizon,
            "t1_observed": lim.t1_observed,
            "crossing_detected": lim.crossing_detected,
            "fan_monotone": fan_crossing.is_none(),
            "max_abs_w0": w0.max_abs(),
        }),
    )?;
    let mut csv = String::from("x,t,w0\n");
    for k in 0..=w0.nt {
        for i in 0..=w0.nx {
            csv.push_str(&format!("{:e},{:e},{:e}\n", w0.x(i), w0.t(k), w0.at(i, k)));
        }
    }
    let table = ctx.path("limit.csv");
    write_text(&table, &csv)?;
    Ok((lim, vec![report, table]))
}

fn need_limit(ctx: &Ctx) -> Result<(LimitSolution, Vec<PathBuf>)> {
    if ctx.pipeline {
        return limit(ctx);
    }
    let path = cache_path(&ctx.out, "limit", &limit_key(&ctx.cfg));
    load(&path)?
        .map(|l| (l, vec![]))
        .ok_or_else(|| missing("limit", &path, "limit"))
}

// ---------------------------------------------------------------------------
// cell

fn cell_compute(ctx: &Ctx, lim: &LimitSolution, full: bool) -> Result<CellArtifact> {
    let path = cache_path(&ctx.out, "cell", &cell_key(&ctx.cfg, full));
    if let Some(a) = load(&path)? {
        return Ok(a);
    }
    let cfg = &ctx.cfg;
    let mesh = build_mesh(&cfg.cross_section, cfg.grid.nxi)?;
    let u1 = build_u1(cfg, &lim.w0, &mesh)?;
    let w1 = solve_w1(cfg, lim, &u1, &mesh)?;
    let u2 = if full {
        Some(build_u2(cfg, &lim.w0, &lim.w0x, &w1, &u1, &mesh)?)
    } else {
        None
    };
    let a = CellArtifact { u1, w1, u2 };
    store(&path, &a)?;
    Ok(a)
}

pub fn cell(ctx: &Ctx) -> Result<(LimitSolution, CellArtifact, Vec<PathBuf>)> {
    let (lim, mut files) = need_limit(ctx)?;
    let full = ctx.order == Order::Full;
    let a = cell_compute(ctx, &lim, full)?;
    let mesh = build_mesh(&ctx.cfg.cross_section, ctx.cfg.grid.nxi)?;
    let field = |f: &thincyl::cell::CellField| {
        json!({
            "max_defect": f.max_defect,
            "worst_param": [f.worst_param.0, f.worst_param.1],
            "worst_mean": f.worst_mean(&mesh),
            "max_abs": f.max_abs(),
        })
    };
    let report = ctx.path("cell.json");
    write_json(
        &report,
        &json!({
            "scenario": ctx.cfg.name,
            "key": cell_key(&ctx.cfg, full),
            "nodes": mesh.n_nodes(),
            "u1": field(&a.u1),
            "u2": a.u2.as_ref().map(field),
            "max_abs_w1": a.w1.max_abs(),
        }),
    )?;
    files.push(report);
    Ok((lim, a, files))
}

fn need_cell(ctx: &Ctx) -> Result<(LimitSolution, Option<CellArtifact>, Vec<PathBuf>)> {
    if ctx.order == Order::Leading {
        let (lim, files) = need_limit(ctx)?;
        return Ok((lim, None, files));
    }
    if ctx.pipeline {
        let (lim, a, files) = cell(ctx)?;
        return Ok((lim, Some(a), files));
    }
    let (lim, files) = need_limit(ctx)?;
    let path = cache_path(&ctx.out, "cell", &cell_key(&ctx.cfg, ctx.order == Order::Full));
    let a = load(&path)?.ok_or_else(|| missing("cell", &path, "cell"))?;
    Ok((lim, Some(a), files))
}

fn build_parts(ctx: &Ctx, lim: LimitSolution, a: Option<CellArtifact>) -> Result<Parts> {
    let cfg = &ctx.cfg;
    match a {
        None => Parts::from_limit(cfg, Order::Leading, lim),
        Some(a) => {
            let mesh = build_mesh(&cfg.cross_section, cfg.grid.nxi)?;
            Parts::from_correctors(cfg, ctx.order, lim, mesh, a.u1, a.w1, a.u2)
        }
    }
}

// ---------------------------------------------------------------------------
// layers

pub fn layers(ctx: &Ctx) -> Result<(Parts, Vec<PathBuf>)> {
    let (lim, a, mut files) = need_cell(ctx)?;
    let parts = build_parts(ctx, lim, a)?;
    let data = &parts.layer;
    let lz = data.lzeta;
    let times = data.times();
    let pi0_sup = |z: f64| times.iter().map(|&t| pi0_eval(z, t, data).abs()).fold(0.0, f64::max);
    let window = (1.0, 0.5 * lz);
    let s0 = data.varsigma0;
    let mut doc = json!({
        "scenario": ctx.cfg.name,
        "order": ctx.order.to_string(),
        "lzeta": lz,
        "varsigma0": s0,
        "pi0_decay": decay_json(decay_rate(&pi0_sup, window, 24)),
        "initial_values": initial_values(data, parts.pi1_tilde.as_ref(), parts.pi2.as_ref()),
    });
    if let Some(p1) = &parts.pi1_tilde {
        let lambda1 = p1.lambdas.first().copied().unwrap_or(f64::NAN);
        doc["lambda1"] = json!(lambda1);
        doc["kappa0"] = json!(0.5 * s0 + (0.25 * s0 * s0 + lambda1).sqrt());
        doc["pi1_tilde_decay"] = decay_json(decay_rate(&|z| p1.sup_at(z), window, 24));
        doc["pi1_tilde_tail_bound"] = json!(p1.tail_bound);
    }
    if let Some(p2) = &parts.pi2 {
        doc["pi2_decay"] = decay_json(decay_rate(&|z| p2.sup_at(z), window, 24));
    }
    let report = ctx.path("layers.json");
    write_json(&report, &doc)?;
    files.push(report);
    Ok((parts, files))
}

// ---------------------------------------------------------------------------
// assemble

pub fn assemble_stage(ctx: &Ctx) -> Result<Vec<PathBuf>> {
    let (parts, mut files) = if ctx.pipeline {
        layers(ctx)?
    } else {
        let (lim, a, files) = need_cell(ctx)?;
        (build_parts(ctx, lim, a)?, files)
    };
    let cfg = &ctx.cfg;
    let t1 = parts.horizon();
    let mut fits = vec![];
    let mut csv = String::from("epsilon,x,t,value\n");
    for &eps in &cfg.epsilons {
        let field = assemble(&parts, eps, ctx.order)?;
        let fit = check_boundary_fit(&field, 24);
        fits.push(json!({
            "epsilon": eps,
            "initial": fit.initial,
            "left": fit.left,
            "right": fit.right,
        }));
        let axis = field.sampler([0.0, 0.0]);
        let nx = cfg.grid.nx;
        for i in 0..=nx {
            let x = cfg.length * i as f64 / nx as f64;
            csv.push_str(&format!("{:e},{:e},{:e},{:e}\n", eps, x, t1, field.eval(x, &axis, t1)));
        }
    }
    let stem = format!("assemble-{}", ctx.order);
    let report = ctx.path(&format!("{stem}.json"));
    write_json(
        &report,
        &json!({
            "scenario": cfg.name,
            "order": ctx.order.to_string(),
            "horizon": t1,
            "boundary_fit": fits,
        }),
    )?;
    let table = ctx.path(&format!("{stem}.csv"));
    write_text(&table, &csv)?;
    files.extend([report, table]);
    Ok(files)
}

// ---------------------------------------------------------------------------
// reference

pub fn reference(ctx: &Ctx) -> Result<Vec<PathBuf>> {
    let cfg = &ctx.cfg;
    let run = |eps: f64| -> Result<(Value, String)> {
        let grid = ReferenceGrid::from_config(cfg, eps, cfg.horizon)?;
        let sol = solve_reference(cfg, &grid)?;
        let (balance, _) = flux_balance(&sol);
        let vol = sol.radial_weights();
        let k = sol.snapshots.len() - 1;
        let mut csv = String::new();
        for i in 0..=sol.nx() {
            csv.push_str(&format!(
                "{:e},{:e},{:e},{:e}\n",
                eps,
                sol.x(i),
                sol.times[k],
                section_mean(&sol, &vol, k, i)
            ));
        }
        let row = json!({
            "epsilon": eps,
            "grid": grid,
            "dt": sol.dt,
            "max_balance": balance,
            "max_abs": sol.max_abs,
        });
        Ok((row, csv))
    };
    let rows: Vec<Result<(Value, String)>> =
        ctx.pool()?.install(|| cfg.epsilons.par_iter().map(|&e| run(e)).collect());
    let mut docs = vec![];
    let mut csv = String::from("epsilon,x,t,section_mean\n");
    for r in rows {
        let (row, part) = r?;
        docs.push(row);
        csv.push_str(&part);
    }
    let report = ctx.path("reference.json");
    write_json(&report, &json!({ "scenario": cfg.name, "runs": docs }))?;
    let table = ctx.path("reference.csv");
    write_text(&table, &csv)?;
    Ok(vec![report, table])
}

// ---------------------------------------------------------------------------
// mms

pub fn mms(ctx: &Ctx) -> Result<Vec<PathBuf>> {
    let report = mms_self_test(&ctx.cfg)?;
    let path = ctx.path("mms.json");
    write_json(&path, &json!({ "scenario": ctx.cfg.name, "report": report }))?;
    Ok(vec![path])
}

// ---------------------------------------------------------------------------
// study

/// Report stem: scenario name, plus a UTC timestamp unless suppressed.
pub fn study_stem(ctx: &Ctx) -> PathBuf {
    let name = if ctx.timestamp {
        format!("{}-{}", ctx.cfg.name, chrono::Utc::now().format("%Y%m%dT%H%M%SZ"))
    } else {
        ctx.cfg.name.clone()
    };
    ctx.path(&name)
}

/// The study needs the first-order parts; cached ones are reused and
/// missing ones are computed and cached.
pub fn study(ctx: &Ctx) -> Result<Vec<PathBuf>> {
    let cfg = &ctx.cfg;
    if cfg.epsilons.len() < 3 {
        return Err(Error::Config("a convergence study needs at least 3 epsilon values".into()));
    }
    validate_assumptions(cfg).require()?;
    let lim = limit_compute(ctx)?;
    let a = cell_compute(ctx, &lim, false)?;
    let mesh = build_mesh(&cfg.cross_section, cfg.grid.nxi)?;
    let parts = Parts::from_correctors(cfg, Order::First, lim, mesh, a.u1, a.w1, None)?;
    let table = convergence_study_with(&parts, ctx.jobs)?;
    let meta = json!({
        "limit_key": limit_key(cfg),
        "cell_key": cell_key(cfg, false),
    });
    let (csv, json) = write_report(&table, cfg, &study_stem(ctx), Some(meta))?;
    Ok(vec![csv, json])
}
