//! Limit problem for w₀ by characteristics, the first corrector w₁, and the
//! Cauchy variant used in the high-Péclet mode.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cell::{build_mesh, CellField, CrossSectionMesh};
use crate::error::{Error, Result};
use crate::interp::{Grid2, MonotoneCubic};
use crate::model::{BoundaryQuadrature, GridSpec, ModelConfig, VelocityField};

/// Relative neighbor spacing below which characteristics count as crossing.
pub const CROSSING_TOL: f64 = 1e-3;

/// Λ = v₁ + s ∂_s v₁.
pub fn lambda_speed(s: f64, x: f64, t: f64, vel: &VelocityField) -> f64 {
    vel.lambda(s, x, t)
}

/// F = −φ̂ − s ∂_{x₁} v₁.
pub fn forcing(s: f64, x: f64, t: f64, cfg: &ModelConfig, quad: &BoundaryQuadrature) -> f64 {
    let (ph, _) = cfg.interaction.boundary_mean(s, x, t, quad);
    -ph - s * cfg.velocity.partials(s, x, t).x
}

/// One characteristic, sampled at the grid time levels from its launch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Curve {
    pub y0: f64,
    /// Launch time level.
    pub k0: usize,
    pub ys: Vec<f64>,
    pub ws: Vec<f64>,
}

impl Curve {
    pub fn t0(&self, dt: f64) -> f64 {
        self.k0 as f64 * dt
    }

    fn at(&self, k: usize) -> Option<(f64, f64)> {
        if k < self.k0 {
            return None;
        }
        let j = k - self.k0;
        (j < self.ys.len()).then(|| (self.ys[j], self.ws[j]))
    }
}

/// Launches ordered by position: inflow curves newest first, then the
/// initial-line curves left to right.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CharacteristicFan {
    pub inflow: Vec<Curve>,
    pub initial: Vec<Curve>,
    pub dt: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LimitSolution {
    pub w0: Grid2,
    pub w0x: Grid2,
    pub w0t: Grid2,
    pub w0xx: Grid2,
    /// Horizon actually covered by the grid.
    pub t1_observed: f64,
    /// True when fan crossing cut the horizon short of T.
    pub crossing_detected: bool,
    pub fan: Option<CharacteristicFan>,
    /// Built by the per-x₁ Cauchy problem (high-Péclet mode).
    pub cauchy: bool,
}

struct Rhs<'a> {
    cfg: &'a ModelConfig,
    quad: &'a BoundaryQuadrature,
}

impl Rhs<'_> {
    fn eval(&self, t: f64, y: f64, w: f64) -> (f64, f64) {
        (
            self.cfg.velocity.lambda(w, y, t),
            forcing(w, y, t, self.cfg, self.quad),
        )
    }
}

/// RK4 along dy/dt = Λ, dw/dt = F from (y₀, t₀) with w(t₀) = 0.
/// Returns samples at t₀ + j·dt until y passes `x_stop` or t reaches `t_end`.
pub fn trace_characteristic(
    y0: f64,
    t0: f64,
    cfg: &ModelConfig,
    quad: &BoundaryQuadrature,
    dt: f64,
    t_end: f64,
    x_stop: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let rhs = Rhs { cfg, quad };
    let mut ys = vec![y0];
    let mut ws = vec![0.0];
    let (mut y, mut w, mut t) = (y0, 0.0, t0);
    let steps = ((t_end - t0) / dt + 1e-9).floor() as usize;
    for _ in 0..steps {
        if y >= x_stop {
            break;
        }
        let (a1, b1) = rhs.eval(t, y, w);
        let (a2, b2) = rhs.eval(t + 0.5 * dt, y + 0.5 * dt * a1, w + 0.5 * dt * b1);
        let (a3, b3) = rhs.eval(t + 0.5 * dt, y + 0.5 * dt * a2, w + 0.5 * dt * b2);
        let (a4, b4) = rhs.eval(t + dt, y + dt * a3, w + dt * b3);
        y += dt / 6.0 * (a1 + 2.0 * a2 + 2.0 * a3 + a4);
        w += dt / 6.0 * (b1 + 2.0 * b2 + 2.0 * b3 + b4);
        t += dt;
        if !(w.abs() <= cfg.s_max) {
            return Err(Error::Numeric(format!(
                "characteristic from ({y0:.4}, {t0:.4}) left |w| <= {} at t = {t:.4}",
                cfg.s_max
            )));
        }
        ys.push(y);
        ws.push(w);
    }
    Ok((ys, ws))
}

fn fan(cfg: &ModelConfig, quad: &BoundaryQuadrature, nx: usize, nt: usize, horizon: f64) -> Result<CharacteristicFan> {
    let hx = cfg.length / nx as f64;
    let dt = horizon / nt as f64;
    let stop = cfg.length + 4.0 * hx;
    let initial: Vec<Curve> = (0..=nx)
        .into_par_iter()
        .map(|i| {
            let y0 = i as f64 * hx;
            trace_characteristic(y0, 0.0, cfg, quad, dt, horizon, stop)
                .map(|(ys, ws)| Curve { y0, k0: 0, ys, ws })
        })
        .collect::<Result<_>>()?;
    let inflow: Vec<Curve> = (1..=nt)
        .rev()
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|k| {
            trace_characteristic(0.0, k as f64 * dt, cfg, quad, dt, horizon, stop)
                .map(|(ys, ws)| Curve { y0: 0.0, k0: k, ys, ws })
        })
        .collect::<Result<_>>()?;
    Ok(CharacteristicFan { inflow, initial, dt })
}

impl CharacteristicFan {
    /// Alive curves at level k in position order, as (launch id, y, w).
    fn slice(&self, k: usize) -> Vec<(usize, f64, f64)> {
        let mut out = vec![];
        for (id, c) in self.inflow.iter().enumerate() {
            if let Some((y, w)) = c.at(k) {
                out.push((id, y, w));
            }
        }
        let off = self.inflow.len();
        for (id, c) in self.initial.iter().enumerate() {
            if let Some((y, w)) = c.at(k) {
                out.push((off + id, y, w));
            }
        }
        out
    }

    /// First level at which neighbours come closer than `tol` times their
    /// spacing when first both alive.
    pub fn first_crossing(&self, nt: usize, tol: f64) -> Option<usize> {
        let mut birth: std::collections::HashMap<(usize, usize), f64> = Default::default();
        for k in 0..=nt {
            let s = self.slice(k);
            for pair in s.windows(2) {
                let key = (pair[0].0, pair[1].0);
                let d = pair[1].1 - pair[0].1;
                let b = *birth.entry(key).or_insert(d);
                if !(d > tol * b) || b <= 0.0 {
                    return Some(k);
                }
            }
        }
        None
    }
}

/// Resample fan data on the grid levels by monotone cubic interpolation.
fn resample(
    fan: &CharacteristicFan,
    nx: usize,
    nt: usize,
    hx: f64,
    dt: f64,
    length: f64,
    select: impl Fn(usize, usize) -> f64 + Sync,
) -> Result<Grid2> {
    let rows: Vec<Result<Vec<f64>>> = (0..=nt)
        .into_par_iter()
        .map(|k| {
            let s = fan.slice(k);
            let xs: Vec<f64> = s.iter().map(|p| p.1).collect();
            let ys: Vec<f64> = s.iter().map(|p| select(p.0, k)).collect();
            let last = *xs.last().unwrap_or(&0.0);
            let max_gap = xs
                .windows(2)
                .map(|w| w[1] - w[0])
                .fold(0.0f64, f64::max);
            let launch_gap = fan.dt * 2.0 * (max_gap / fan.dt).min(f64::MAX);
            let allowed = (2.0 * length / nx as f64).max(if k > 0 { launch_gap.min(max_gap) } else { 0.0 });
            if last < length - 1e-9 * length || max_gap > allowed * (1.0 + 1e-9) + 1e-14 {
                return Err(Error::Numeric(format!(
                    "fan does not cover [0, l] at t = {:.6}",
                    k as f64 * dt
                )));
            }
            let interp = MonotoneCubic::new(xs, ys);
            Ok((0..=nx).map(|i| interp.eval(i as f64 * hx)).collect())
        })
        .collect();
    let mut g = Grid2::zeros(nx, nt, hx, dt);
    for (k, row) in rows.into_iter().enumerate() {
        let row = row?;
        g.data[k * (nx + 1)..(k + 1) * (nx + 1)].copy_from_slice(&row);
    }
    Ok(g)
}

fn fan_value(fan: &CharacteristicFan, id: usize, k: usize, field: &[Vec<f64>]) -> f64 {
    let (c, f) = if id < fan.inflow.len() {
        (&fan.inflow[id], &field[id])
    } else {
        (&fan.initial[id - fan.inflow.len()], &field[id])
    };
    f[k - c.k0]
}

fn finish(w0: Grid2, t1: f64, crossing: bool, fan: Option<CharacteristicFan>, cauchy: bool) -> LimitSolution {
    let mut w0 = w0;
    for k in 0..=w0.nt {
        w0.set(0, k, 0.0);
    }
    for i in 0..=w0.nx {
        w0.set(i, 0, 0.0);
    }
    LimitSolution {
        w0x: w0.dx(),
        w0t: w0.dt(),
        w0xx: w0.dxx(),
        w0,
        t1_observed: t1,
        crossing_detected: crossing,
        fan,
        cauchy,
    }
}

pub fn mesh_quadrature(cfg: &ModelConfig, grid: &GridSpec) -> Result<(CrossSectionMesh, BoundaryQuadrature)> {
    let mesh = build_mesh(&cfg.cross_section, grid.nxi)?;
    let quad = mesh.boundary_quadrature();
    Ok((mesh, quad))
}

/// w₀ on [0,ℓ]×[0,T₁] where T₁ ≤ T is the observed fan monotonicity horizon.
pub fn solve_limit(cfg: &ModelConfig, grid: &GridSpec) -> Result<LimitSolution> {
    if cfg.high_peclet() {
        return solve_cauchy_limit(cfg, grid);
    }
    let (nx, nt) = (grid.nx, grid.nt);
    if nx < 4 || nt < 4 {
        return Err(Error::Config("grid.nx and grid.nt must be >= 4".into()));
    }
    let (_, quad) = mesh_quadrature(cfg, grid)?;
    let hx = cfg.length / nx as f64;
    let mut horizon = cfg.horizon;
    let mut crossing = false;
    let mut f = fan(cfg, &quad, nx, nt, horizon)?;
    if let Some(k) = f.first_crossing(nt, CROSSING_TOL) {
        if k <= 1 {
            return Err(Error::Numeric("characteristics cross immediately".into()));
        }
        crossing = true;
        horizon *= (k - 1) as f64 / nt as f64;
        f = fan(cfg, &quad, nx, nt, horizon)?;
        if let Some(k2) = f.first_crossing(nt, CROSSING_TOL) {
            // the rescaled run must stay monotone; shrink once more
            horizon *= (k2.max(2) - 1) as f64 / nt as f64;
            f = fan(cfg, &quad, nx, nt, horizon)?;
        }
    }
    let dt = horizon / nt as f64;
    let ws: Vec<Vec<f64>> = f.inflow.iter().chain(&f.initial).map(|c| c.ws.clone()).collect();
    let w0 = resample(&f, nx, nt, hx, dt, cfg.length, |id, k| fan_value(&f, id, k, &ws))?;
    Ok(finish(w0, horizon, crossing, Some(f), false))
}

/// High-Péclet leading term: ∂_t w₀ = −φ̂(w₀, x₁, t) independently per x₁.
pub fn solve_cauchy_limit(cfg: &ModelConfig, grid: &GridSpec) -> Result<LimitSolution> {
    let (nx, nt) = (grid.nx, grid.nt);
    if nx < 4 || nt < 4 {
        return Err(Error::Config("grid.nx and grid.nt must be >= 4".into()));
    }
    let (_, quad) = mesh_quadrature(cfg, grid)?;
    let hx = cfg.length / nx as f64;
    let dt = cfg.horizon / nt as f64;
    let cols: Vec<Result<Vec<f64>>> = (0..=nx)
        .into_par_iter()
        .map(|i| {
            let x = i as f64 * hx;
            let rhs = |t: f64, w: f64| -cfg.interaction.boundary_mean(w, x, t, &quad).0;
            let mut w = 0.0;
            let mut out = vec![0.0; nt + 1];
            for k in 0..nt {
                let t = k as f64 * dt;
                let b1 = rhs(t, w);
                let b2 = rhs(t + 0.5 * dt, w + 0.5 * dt * b1);
                let b3 = rhs(t + 0.5 * dt, w + 0.5 * dt * b2);
                let b4 = rhs(t + dt, w + dt * b3);
                w += dt / 6.0 * (b1 + 2.0 * b2 + 2.0 * b3 + b4);
                if !(w.abs() <= cfg.s_max) {
                    return Err(Error::Numeric(format!("w0 blew up at x1 = {x:.4}")));
                }
                out[k + 1] = w;
            }
            Ok(out)
        })
        .collect();
    let mut w0 = Grid2::zeros(nx, nt, hx, dt);
    for (i, col) in cols.into_iter().enumerate() {
        for (k, v) in col?.into_iter().enumerate() {
            w0.set(i, k, v);
        }
    }
    Ok(finish(w0, cfg.horizon, false, None, true))
}

/// (1/|ϖ|)∮ ∂_sφ(w₀) u₁ dσ on the parameter grid.
pub fn nonlocal_term(cfg: &ModelConfig, lim: &LimitSolution, u1: &CellField, mesh: &CrossSectionMesh) -> Grid2 {
    let w0 = &lim.w0;
    let mut g = Grid2::zeros(w0.nx, w0.nt, w0.hx, w0.ht);
    if u1.max_abs() == 0.0 {
        return g;
    }
    for k in 0..=w0.nt {
        for i in 0..=w0.nx {
            let (x, t, s) = (w0.x(i), w0.t(k), w0.at(i, k));
            let u = u1.node(i, k);
            let v = mesh
                .edges
                .iter()
                .enumerate()
                .map(|(e, ed)| cfg.interaction.eval(s, x, ed.midpoint, t).s * mesh.edge_value(u, e) * ed.length)
                .sum::<f64>()
                / mesh.area;
            g.set(i, k, v);
        }
    }
    g
}

/// First corrector w₁ with zero initial and inflow data.
pub fn solve_w1(
    cfg: &ModelConfig,
    lim: &LimitSolution,
    u1: &CellField,
    mesh: &CrossSectionMesh,
) -> Result<Grid2> {
    let w0 = &lim.w0;
    let (nx, nt, hx, dt) = (w0.nx, w0.nt, w0.hx, w0.ht);
    if lim.w0xx.nx != nx || lim.w0xx.data.len() != w0.data.len() {
        return Err(Error::Dependency("second derivative of w0".into()));
    }
    let quad = mesh.boundary_quadrature();
    let nl = nonlocal_term(cfg, lim, u1, mesh);
    // coefficient c and source f₁ on the grid
    let mut coef = Grid2::zeros(nx, nt, hx, dt);
    let mut src = Grid2::zeros(nx, nt, hx, dt);
    for k in 0..=nt {
        for i in 0..=nx {
            let (x, t, s) = (w0.x(i), w0.t(k), w0.at(i, k));
            let (_, dph) = cfg.interaction.boundary_mean(s, x, t, &quad);
            if lim.cauchy {
                coef.set(i, k, dph);
                let (lam, _, _) = cfg.velocity.lambda_partials(s, x, t);
                let vx = cfg.velocity.partials(s, x, t).x;
                // ∂_x(v₁(w₀)w₀) = Λ ∂_x w₀ + w₀ ∂_x v₁
                let transport = lam * lim.w0x.at(i, k) + s * vx;
                src.set(i, k, -transport - nl.at(i, k));
            } else {
                let (_, lam_s, lam_x) = cfg.velocity.lambda_partials(s, x, t);
                coef.set(i, k, lam_s * lim.w0x.at(i, k) + lam_x + dph);
                src.set(i, k, lim.w0xx.at(i, k) - nl.at(i, k));
            }
        }
    }
    let mut w1 = if lim.cauchy {
        let cols: Vec<Vec<f64>> = (0..=nx)
            .into_par_iter()
            .map(|i| {
                let rhs = |t: f64, a: f64| src.eval_node(i, t) - coef.eval_node(i, t) * a;
                let mut a = 0.0;
                let mut out = vec![0.0; nt + 1];
                for k in 0..nt {
                    let t = k as f64 * dt;
                    let b1 = rhs(t, a);
                    let b2 = rhs(t + 0.5 * dt, a + 0.5 * dt * b1);
                    let b3 = rhs(t + 0.5 * dt, a + 0.5 * dt * b2);
                    let b4 = rhs(t + dt, a + dt * b3);
                    a += dt / 6.0 * (b1 + 2.0 * b2 + 2.0 * b3 + b4);
                    out[k + 1] = a;
                }
                out
            })
            .collect();
        let mut g = Grid2::zeros(nx, nt, hx, dt);
        for (i, col) in cols.into_iter().enumerate() {
            for (k, v) in col.into_iter().enumerate() {
                g.set(i, k, v);
            }
        }
        g
    } else {
        let fan = lim
            .fan
            .as_ref()
            .ok_or_else(|| Error::Dependency("characteristic fan".into()))?;
        let (_, quad) = (0, &quad);
        let trace = |c: &Curve| -> Vec<f64> {
            let rhs = Rhs { cfg, quad };
            let mut out = vec![0.0];
            let (mut y, mut w, mut a) = (c.ys[0], 0.0, 0.0);
            let mut t = c.k0 as f64 * dt;
            let g = |t: f64, y: f64, w: f64, a: f64| {
                let (l, f) = rhs.eval(t, y, w);
                let yc = y.min(cfg.length);
                (l, f, src.eval(yc, t) - coef.eval(yc, t) * a)
            };
            for _ in 1..c.ys.len() {
                let (l1, f1, g1) = g(t, y, w, a);
                let h = 0.5 * dt;
                let (l2, f2, g2) = g(t + h, y + h * l1, w + h * f1, a + h * g1);
                let (l3, f3, g3) = g(t + h, y + h * l2, w + h * f2, a + h * g2);
                let (l4, f4, g4) = g(t + dt, y + dt * l3, w + dt * f3, a + dt * g3);
                y += dt / 6.0 * (l1 + 2.0 * l2 + 2.0 * l3 + l4);
                w += dt / 6.0 * (f1 + 2.0 * f2 + 2.0 * f3 + f4);
                a += dt / 6.0 * (g1 + 2.0 * g2 + 2.0 * g3 + g4);
                t += dt;
                out.push(a);
            }
            out
        };
        let vals: Vec<Vec<f64>> = fan
            .inflow
            .par_iter()
            .chain(fan.initial.par_iter())
            .map(trace)
            .collect();
        resample(fan, nx, nt, hx, dt, cfg.length, |id, k| fan_value(fan, id, k, &vals))?
    };
    for k in 0..=nt {
        w1.set(0, k, 0.0);
    }
    for i in 0..=nx {
        w1.set(i, 0, 0.0);
    }
    Ok(w1)
}
