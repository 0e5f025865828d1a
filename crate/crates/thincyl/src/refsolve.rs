//! Direct solver for the ε-dependent problem on axisymmetric data.
//!
//! The cross-section is scaled out: ρ = r/ε ∈ [0, r0]. In (x1, ρ) the
//! equation reads
//!   ∂t u − ε^β ∂²x u − ε⁻¹ ρ⁻¹∂ρ(ρ ∂ρ u) + ∂x(a u v1(u)) + ρ⁻¹∂ρ(ρ u v_r) = 0,
//! a = ε^{(β−1)/2}, with the lateral flux −ε⁻¹∂ρu + u v_r = φ at ρ = r0.
//!
//! Space: uniform nodes, half cells at ρ = 0 and ρ = r0 (finite volumes in ρ),
//! second-order upwind flux differences in x1. Time: an IMEX predictor–
//! corrector. Diffusion carries weight θ (1 for backward Euler, ½ for
//! Crank–Nicolson) and is solved by diagonalising the radial operator and
//! running one tridiagonal sweep per radial mode. Transport and the lateral
//! source are explicit, with Heun averaging; extra corrector sweeps act as
//! Picard iterations on φ(u).

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{CrossSectionSpec, ModelConfig, TimeScheme};

/// Tolerance of the axisymmetry check.
pub const AXISYM_TOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AxisymReport {
    pub passed: bool,
    pub worst: f64,
    pub detail: String,
}

/// Check that φ and v̄ are invariant under rotation of the cross-section on samples.
pub fn require_axisymmetric(cfg: &ModelConfig) -> AxisymReport {
    let fail = |detail: String| AxisymReport {
        passed: false,
        worst: f64::INFINITY,
        detail,
    };
    let r0 = match cfg.cross_section {
        CrossSectionSpec::Disk { radius } => radius,
        _ => return fail("cross-section is not a disk".into()),
    };
    let mut worst = 0.0f64;
    let mut detail = String::new();
    let angles: Vec<f64> = (0..12).map(|k| k as f64 * std::f64::consts::PI / 6.0 + 0.1).collect();
    for ix in 0..=8 {
        let x = cfg.length * ix as f64 / 8.0;
        for it in 0..=4 {
            let t = cfg.horizon * it as f64 / 4.0;
            for ir in 1..=4 {
                let rho = r0 * ir as f64 / 4.0;
                let vr = cfg.velocity.radial(x, rho, t);
                for s in [-1.0, 0.0, 0.5, 2.0] {
                    let p0 = cfg.interaction.phi(s, x, [rho, 0.0], t);
                    for &a in &angles {
                        let xi = [rho * a.cos(), rho * a.sin()];
                        let d = (cfg.interaction.phi(s, x, xi, t) - p0).abs();
                        if d > worst {
                            worst = d;
                            detail = format!("phi varies by {d:.3e} at x1={x}, rho={rho}, t={t}");
                        }
                    }
                }
                for &a in &angles {
                    let (c, sn) = (a.cos(), a.sin());
                    let v = cfg.velocity.vbar(x, [rho * c, rho * sn], t);
                    let radial = v[0] * c + v[1] * sn;
                    let tangential = -v[0] * sn + v[1] * c;
                    let d = tangential.abs().max((radial - vr).abs());
                    if d > worst {
                        worst = d;
                        detail = format!("transversal velocity not radial ({d:.3e}) at x1={x}, rho={rho}, t={t}");
                    }
                }
            }
        }
    }
    AxisymReport {
        passed: worst <= AXISYM_TOL,
        worst,
        detail,
    }
}

/// Floor on the automatic step count; keeps the time error small when the
/// transport CFL bound is loose (scaled axial speed for β > 1).
pub const MIN_AUTO_STEPS: usize = 1000;

/// Resolution of one reference run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferenceGrid {
    pub eps: f64,
    pub nx: usize,
    pub nr: usize,
    pub nt: usize,
    pub t_end: f64,
    pub scheme: TimeScheme,
    pub picard: usize,
    pub snapshots: usize,
}

impl ReferenceGrid {
    /// Grid from the config; the step count defaults to the CFL-limited one
    /// (at least `MIN_AUTO_STEPS`), rounded up to a multiple of the snapshot count.
    pub fn from_config(cfg: &ModelConfig, eps: f64, t_end: f64) -> Result<Self> {
        let r = &cfg.reference;
        let snapshots = r.snapshots.max(1);
        let nt = match r.nt {
            Some(n) => n,
            None => {
                let dt = max_stable_dt(cfg, eps, r.nx, r.nr, r.cfl);
                ((t_end / dt).ceil() as usize).max(MIN_AUTO_STEPS)
            }
        };
        let nt = nt.div_ceil(snapshots) * snapshots;
        Ok(ReferenceGrid {
            eps,
            nx: r.nx,
            nr: r.nr,
            nt,
            t_end,
            scheme: r.scheme,
            picard: r.picard.max(1),
            snapshots,
        })
    }
}

fn axial_scale(cfg: &ModelConfig, eps: f64) -> f64 {
    eps.powf(0.5 * (cfg.beta - 1.0))
}

/// Largest step allowed by the transport CFL bound at Courant number `cfl`.
pub fn max_stable_dt(cfg: &ModelConfig, eps: f64, nx: usize, nr: usize, cfl: f64) -> f64 {
    let a = axial_scale(cfg, eps);
    let hx = cfg.length / nx as f64;
    let r0 = cfg.cross_section.outer_radius();
    let hr = r0 / nr as f64;
    let mut speed = 1e-12f64;
    let mut lateral = 0.0f64;
    let mut radial = 0.0f64;
    for ix in 0..=64 {
        let x = cfg.length * ix as f64 / 64.0;
        for it in 0..=16 {
            let t = cfg.horizon * it as f64 / 16.0;
            for is in 0..=40 {
                let s = cfg.s_max * (is as f64 / 20.0 - 1.0);
                let p = cfg.velocity.partials(s, x, t);
                speed = speed.max(a * p.v.abs()).max(a * (p.v + s * p.s).abs());
                lateral = lateral.max(cfg.interaction.eval(s, x, [r0, 0.0], t).s.abs());
            }
            for j in 0..=nr {
                radial = radial.max(cfg.velocity.radial(x, j as f64 * hr, t).abs());
            }
        }
    }
    // Boundary half cell volume times the lateral sensitivity r0·|∂sφ|.
    let v_edge = 0.5 * r0 * hr - hr * hr / 8.0;
    let mut dt = cfl * hx / speed;
    if radial > 0.0 {
        dt = dt.min(cfl * hr / radial);
    }
    if lateral > 0.0 {
        dt = dt.min(cfl * v_edge / (r0 * lateral));
    }
    dt
}

/// Extra terms used by manufactured-solution runs.
#[derive(Clone, Copy, Default)]
pub struct Hooks<'a> {
    /// Volume source S(x1, ρ, t) added to the right-hand side.
    pub source: Option<&'a (dyn Fn(f64, f64, f64) -> f64 + Sync)>,
    /// Added to φ on the lateral boundary: g(x1, t).
    pub lateral: Option<&'a (dyn Fn(f64, f64) -> f64 + Sync)>,
}

/// Snapshots of u at equally spaced times plus scheme metadata.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ReferenceSolution {
    pub grid: ReferenceGrid,
    pub hx: f64,
    /// Step in ρ = r/ε.
    pub hr: f64,
    pub r0: f64,
    pub dt: f64,
    pub beta: f64,
    pub times: Vec<f64>,
    /// Per snapshot, row-major (x1 index major, ρ index minor).
    pub snapshots: Vec<Vec<f64>>,
    /// Per step, |d/dt mass − (end fluxes + lateral + source)|.
    pub balance: Vec<f64>,
    pub max_abs: f64,
    pub elapsed_steps: usize,
}

impl ReferenceSolution {
    pub fn nx(&self) -> usize {
        self.grid.nx
    }
    pub fn nr(&self) -> usize {
        self.grid.nr
    }
    pub fn x(&self, i: usize) -> f64 {
        i as f64 * self.hx
    }
    pub fn rho(&self, j: usize) -> f64 {
        j as f64 * self.hr
    }
    pub fn at(&self, k: usize, i: usize, j: usize) -> f64 {
        self.snapshots[k][i * (self.grid.nr + 1) + j]
    }
    /// Radial finite-volume weights ∫ρ dρ per node (sum r0²/2).
    pub fn radial_weights(&self) -> Vec<f64> {
        radial_weights(self.grid.nr, self.hr, self.r0)
    }
}

fn radial_weights(nr: usize, hr: f64, r0: f64) -> Vec<f64> {
    (0..=nr)
        .map(|j| {
            if j == 0 {
                hr * hr / 8.0
            } else if j == nr {
                0.5 * r0 * hr - hr * hr / 8.0
            } else {
                j as f64 * hr * hr
            }
        })
        .collect()
}

/// Radial operator diagonalised: −R = M^{-1/2} Q diag(μ) Qᵀ M^{1/2}.
struct RadialModes {
    mu: Vec<f64>,
    /// Forward transform û = Qᵀ M^{1/2} u, row-major (mode, node).
    fwd: Vec<f64>,
    /// Inverse u = M^{-1/2} Q û, row-major (node, mode).
    inv: Vec<f64>,
}

impl RadialModes {
    fn new(nr: usize, hr: f64, vol: &[f64]) -> Self {
        let n = nr + 1;
        let mut k = DMatrix::<f64>::zeros(n, n);
        for j in 0..nr {
            let c = (j as f64 + 0.5) * hr / hr;
            k[(j, j)] += c;
            k[(j + 1, j + 1)] += c;
            k[(j, j + 1)] -= c;
            k[(j + 1, j)] -= c;
        }
        let sq: Vec<f64> = vol.iter().map(|v| v.sqrt()).collect();
        let s = DMatrix::from_fn(n, n, |a, b| k[(a, b)] / (sq[a] * sq[b]));
        let eig = SymmetricEigen::new(s);
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let mut mu = Vec::with_capacity(n);
        let mut fwd = vec![0.0; n * n];
        let mut inv = vec![0.0; n * n];
        for (m, &c) in order.iter().enumerate() {
            mu.push(eig.eigenvalues[c].max(0.0));
            // Fix the sign so the transform is reproducible.
            let col = eig.eigenvectors.column(c);
            let pivot = col.iter().copied().fold(0.0f64, |a, v| if v.abs() > a.abs() { v } else { a });
            let sg = if pivot < 0.0 { -1.0 } else { 1.0 };
            for j in 0..n {
                let q = sg * col[j];
                fwd[m * n + j] = q * sq[j];
                inv[j * n + m] = q / sq[j];
            }
        }
        RadialModes { mu, fwd, inv }
    }
}

/// Constant-coefficient tridiagonal systems, one per radial mode, factored once.
struct ModeSolver {
    n: usize,
    off: f64,
    /// Per mode, modified super-diagonal and reciprocal pivots.
    cp: Vec<Vec<f64>>,
    inv_piv: Vec<Vec<f64>>,
}

impl ModeSolver {
    fn new(mu: &[f64], interior: usize, off: f64, diag_base: f64, mu_scale: f64) -> Self {
        let mut cp = Vec::with_capacity(mu.len());
        let mut inv_piv = Vec::with_capacity(mu.len());
        for &m in mu {
            let b = diag_base + mu_scale * m;
            let mut c = vec![0.0; interior];
            let mut p = vec![0.0; interior];
            let mut prev = 0.0;
            for i in 0..interior {
                let piv = b - off * prev;
                p[i] = 1.0 / piv;
                c[i] = off * p[i];
                prev = c[i];
            }
            cp.push(c);
            inv_piv.push(p);
        }
        ModeSolver {
            n: interior,
            off,
            cp,
            inv_piv,
        }
    }

    /// Solve in place: b_i ← (off·x_{i−1} + diag·x_i + off·x_{i+1} = b_i).
    fn solve(&self, mode: usize, rhs: &mut [f64]) {
        let (c, p) = (&self.cp[mode], &self.inv_piv[mode]);
        let mut prev = 0.0;
        for i in 0..self.n {
            rhs[i] = (rhs[i] - self.off * prev) * p[i];
            prev = rhs[i];
        }
        for i in (0..self.n.saturating_sub(1)).rev() {
            rhs[i] -= c[i] * rhs[i + 1];
        }
    }
}

struct Stepper<'a> {
    cfg: &'a ModelConfig,
    hooks: Hooks<'a>,
    nx: usize,
    nr: usize,
    hx: f64,
    hr: f64,
    r0: f64,
    a: f64,
    dax: f64,
    dr: f64,
    vol: Vec<f64>,
    wx: Vec<f64>,
    modes: RadialModes,
    solver: ModeSolver,
    theta: f64,
    dt: f64,
}

impl Stepper<'_> {
    fn idx(&self, i: usize, j: usize) -> usize {
        i * (self.nr + 1) + j
    }

    fn lateral_phi(&self, s: f64, x: f64, t: f64) -> f64 {
        let mut p = self.cfg.interaction.phi(s, x, [self.r0, 0.0], t);
        if let Some(g) = self.hooks.lateral {
            p += g(x, t);
        }
        p
    }

    /// Explicit part: transport, radial convection, lateral flux, source.
    fn explicit(&self, u: &[f64], t: f64, out: &mut [f64]) {
        let (nx, nr) = (self.nx, self.nr);
        let n = nr + 1;
        let vel = &self.cfg.velocity;
        out.iter_mut().for_each(|v| *v = 0.0);
        let mut f = vec![0.0; nx + 1];
        let mut face = vec![0.0; nx];
        for j in 0..n {
            for i in 0..=nx {
                let s = u[i * n + j];
                f[i] = self.a * vel.v1(s, i as f64 * self.hx, t) * s;
            }
            for i in 0..nx {
                let xm = (i as f64 + 0.5) * self.hx;
                let sm = 0.5 * (u[i * n + j] + u[(i + 1) * n + j]);
                let p = vel.partials(sm, xm, t);
                let speed = p.v + sm * p.s;
                face[i] = if speed >= 0.0 {
                    if i >= 1 {
                        1.5 * f[i] - 0.5 * f[i - 1]
                    } else {
                        0.5 * (f[0] + f[1])
                    }
                } else if i + 2 <= nx {
                    1.5 * f[i + 1] - 0.5 * f[i + 2]
                } else {
                    0.5 * (f[i] + f[i + 1])
                };
            }
            for i in 1..nx {
                out[i * n + j] -= (face[i] - face[i - 1]) / self.hx;
            }
        }
        let radial = vel.has_transversal();
        for i in 1..nx {
            let x = i as f64 * self.hx;
            let row = &u[i * n..(i + 1) * n];
            let o = &mut out[i * n..(i + 1) * n];
            if radial {
                for j in 0..nr {
                    let rm = (j as f64 + 0.5) * self.hr;
                    let g = rm * vel.radial(x, rm, t) * 0.5 * (row[j] + row[j + 1]);
                    o[j] -= g / self.vol[j];
                    o[j + 1] += g / self.vol[j + 1];
                }
            }
            o[nr] -= self.r0 * self.lateral_phi(row[nr], x, t) / self.vol[nr];
            if let Some(src) = self.hooks.source {
                for (j, v) in o.iter_mut().enumerate() {
                    *v += src(x, j as f64 * self.hr, t);
                }
            }
        }
    }

    /// Diffusion operator on interior rows (Dirichlet rows read from `u`).
    fn diffusion(&self, u: &[f64], out: &mut [f64]) {
        let (nx, nr) = (self.nx, self.nr);
        let n = nr + 1;
        out.iter_mut().for_each(|v| *v = 0.0);
        for i in 1..nx {
            for j in 0..n {
                let c = u[i * n + j];
                let mut d = self.dax * (u[(i + 1) * n + j] - 2.0 * c + u[(i - 1) * n + j]);
                let mut r = 0.0;
                if j > 0 {
                    r += (j as f64 - 0.5) * (u[i * n + j - 1] - c);
                }
                if j < nr {
                    r += (j as f64 + 0.5) * (u[i * n + j + 1] - c);
                }
                d += self.dr * r / self.vol[j];
                out[i * n + j] = d;
            }
        }
    }

    /// Solve (I − θ dt D) u_new = rhs on interior rows; Dirichlet rows of
    /// `u_new` must already hold the new boundary values.
    fn implicit(&self, rhs: &[f64], u_new: &mut [f64]) {
        let (nx, nr) = (self.nx, self.nr);
        let n = nr + 1;
        let m = nx - 1;
        let td = self.theta * self.dt * self.dax;
        let mut hat = vec![0.0; n * m];
        let mut bl = vec![0.0; n];
        let mut br = vec![0.0; n];
        for k in 0..n {
            let w = &self.modes.fwd[k * n..(k + 1) * n];
            bl[k] = w.iter().zip(&u_new[0..n]).map(|(a, b)| a * b).sum();
            br[k] = w.iter().zip(&u_new[nx * n..(nx + 1) * n]).map(|(a, b)| a * b).sum();
            for i in 1..nx {
                let r = &rhs[i * n..(i + 1) * n];
                hat[k * m + i - 1] = w.iter().zip(r).map(|(a, b)| a * b).sum();
            }
            hat[k * m] += td * bl[k];
            hat[k * m + m - 1] += td * br[k];
            self.solver.solve(k, &mut hat[k * m..(k + 1) * m]);
        }
        for i in 1..nx {
            for j in 0..n {
                let w = &self.modes.inv[j * n..(j + 1) * n];
                let mut v = 0.0;
                for k in 0..n {
                    v += w[k] * hat[k * m + i - 1];
                }
                u_new[i * n + j] = v;
            }
        }
    }

    fn set_dirichlet(&self, u: &mut [f64], t: f64) {
        let n = self.nr + 1;
        let q = self.cfg.boundary.q(t);
        for j in 0..n {
            u[j] = 0.0;
            u[self.nx * n + j] = q;
        }
    }

    fn mass(&self, u: &[f64]) -> f64 {
        let n = self.nr + 1;
        (0..=self.nx)
            .map(|i| self.wx[i] * (0..n).map(|j| self.vol[j] * u[i * n + j]).sum::<f64>())
            .sum()
    }

    /// End fluxes + lateral + source, per unit angle.
    fn supply(&self, u: &[f64], t: f64) -> f64 {
        let (nx, nr) = (self.nx, self.nr);
        let n = nr + 1;
        let vel = &self.cfg.velocity;
        let eb = self.dax * self.hx * self.hx;
        let end_flux = |i0: usize, i1: usize, i2: usize, sign: f64| -> f64 {
            (0..n)
                .map(|j| {
                    let s = u[self.idx(i0, j)];
                    let gx = sign * (-3.0 * s + 4.0 * u[self.idx(i1, j)] - u[self.idx(i2, j)])
                        / (2.0 * self.hx);
                    self.vol[j] * (self.a * vel.v1(s, i0 as f64 * self.hx, t) * s - eb * gx)
                })
                .sum()
        };
        let left = end_flux(0, 1, 2, 1.0);
        let right = end_flux(nx, nx - 1, nx - 2, -1.0);
        let mut lateral = 0.0;
        let mut source = 0.0;
        for i in 0..=nx {
            let x = i as f64 * self.hx;
            lateral -= self.wx[i] * self.r0 * self.lateral_phi(u[self.idx(i, nr)], x, t);
            if let Some(src) = self.hooks.source {
                source += self.wx[i]
                    * (0..n).map(|j| self.vol[j] * src(x, j as f64 * self.hr, t)).sum::<f64>();
            }
        }
        left - right + lateral + source
    }
}

/// Run the direct solver.
pub fn solve_reference(cfg: &ModelConfig, grid: &ReferenceGrid) -> Result<ReferenceSolution> {
    if grid.nr < 8 {
        return Err(Error::Config("reference grid needs nr >= 8".into()));
    }
    solve_reference_with(cfg, grid, Hooks::default())
}

pub fn solve_reference_with(
    cfg: &ModelConfig,
    grid: &ReferenceGrid,
    hooks: Hooks<'_>,
) -> Result<ReferenceSolution> {
    let axi = require_axisymmetric(cfg);
    if !axi.passed {
        return Err(Error::Config(format!("reference solver needs axisymmetric data: {}", axi.detail)));
    }
    if grid.nx < 4 || grid.nr < 2 || grid.nt == 0 || grid.snapshots == 0 {
        return Err(Error::Config("reference grid too coarse".into()));
    }
    if grid.nt % grid.snapshots != 0 {
        return Err(Error::Config("nt must be a multiple of the snapshot count".into()));
    }
    let eps = grid.eps;
    let (nx, nr) = (grid.nx, grid.nr);
    let n = nr + 1;
    let r0 = cfg.cross_section.outer_radius();
    let hx = cfg.length / nx as f64;
    let hr = r0 / nr as f64;
    let dt = grid.t_end / grid.nt as f64;
    let dt_max = max_stable_dt(cfg, eps, nx, nr, 0.5);
    if dt > dt_max * (1.0 + 1e-12) {
        return Err(Error::Numeric(format!(
            "CFL violation: dt = {dt:.3e} exceeds max admissible dt = {dt_max:.3e}"
        )));
    }
    let theta = match grid.scheme {
        TimeScheme::Be => 1.0,
        TimeScheme::Cn => 0.5,
    };
    let vol = radial_weights(nr, hr, r0);
    let mut wx = vec![hx; nx + 1];
    wx[0] *= 0.5;
    wx[nx] *= 0.5;
    let dax = eps.powf(cfg.beta) / (hx * hx);
    let dr = 1.0 / eps;
    let modes = RadialModes::new(nr, hr, &vol);
    let td = theta * dt;
    let solver = ModeSolver::new(&modes.mu, nx - 1, -td * dax, 1.0 + 2.0 * td * dax, td * dr);
    let st = Stepper {
        cfg,
        hooks,
        nx,
        nr,
        hx,
        hr,
        r0,
        a: axial_scale(cfg, eps),
        dax,
        dr,
        vol,
        wx,
        modes,
        solver,
        theta,
        dt,
    };

    let size = (nx + 1) * n;
    let mut u = vec![0.0; size];
    st.set_dirichlet(&mut u, 0.0);
    let mut times = vec![0.0];
    let mut snapshots = vec![u.clone()];
    let every = grid.nt / grid.snapshots;
    let mut balance = Vec::with_capacity(grid.nt);
    let mut e0 = vec![0.0; size];
    let mut e1 = vec![0.0; size];
    let mut d0 = vec![0.0; size];
    let mut rhs = vec![0.0; size];
    let mut star = vec![0.0; size];
    let mut next = vec![0.0; size];
    let mut mass0 = st.mass(&u);
    let mut supply0 = st.supply(&u, 0.0);
    let mut max_abs = 0.0f64;
    for step in 0..grid.nt {
        let t0 = step as f64 * dt;
        let t1 = (step + 1) as f64 * dt;
        st.explicit(&u, t0, &mut e0);
        if theta < 1.0 {
            st.diffusion(&u, &mut d0);
        }
        for p in 0..size {
            rhs[p] = u[p] + dt * e0[p] + (1.0 - theta) * dt * d0[p];
        }
        st.set_dirichlet(&mut star, t1);
        st.implicit(&rhs, &mut star);
        let mut last_change = f64::INFINITY;
        for sweep in 0..grid.picard {
            st.explicit(&star, t1, &mut e1);
            for p in 0..size {
                rhs[p] = u[p] + 0.5 * dt * (e0[p] + e1[p]) + (1.0 - theta) * dt * d0[p];
            }
            st.set_dirichlet(&mut next, t1);
            st.implicit(&rhs, &mut next);
            if sweep + 1 < grid.picard {
                let change = next.iter().zip(&star).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                let scale = 1e-13 * (1.0 + next.iter().fold(0.0f64, |m, v| m.max(v.abs())));
                if sweep > 0 && change > last_change && change > scale {
                    return Err(Error::Numeric(format!(
                        "Picard divergence at t = {t1:.4}: change {change:.3e} after {last_change:.3e}"
                    )));
                }
                last_change = change;
                star.copy_from_slice(&next);
            }
        }
        std::mem::swap(&mut u, &mut next);
        let mut m = 0.0f64;
        for &v in &u {
            if !v.is_finite() {
                return Err(Error::Numeric(format!("nonfinite value at t = {t1:.4}")));
            }
            m = m.max(v.abs());
        }
        if m > cfg.s_max {
            return Err(Error::Numeric(format!(
                "solution leaves the validated range |u| <= {} at t = {t1:.4}",
                cfg.s_max
            )));
        }
        max_abs = max_abs.max(m);
        let mass1 = st.mass(&u);
        let supply1 = st.supply(&u, t1);
        balance.push(((mass1 - mass0) / dt - 0.5 * (supply0 + supply1)).abs());
        mass0 = mass1;
        supply0 = supply1;
        if (step + 1) % every == 0 {
            times.push(t1);
            snapshots.push(u.clone());
        }
    }
    Ok(ReferenceSolution {
        grid: grid.clone(),
        hx,
        hr,
        r0,
        dt,
        beta: cfg.beta,
        times,
        snapshots,
        balance,
        max_abs,
        elapsed_steps: grid.nt,
    })
}

/// Discrete conservation audit: per-step residual series and its maximum.
pub fn flux_balance(sol: &ReferenceSolution) -> (f64, &[f64]) {
    let m = sol.balance.iter().copied().fold(0.0, f64::max);
    (m, &sol.balance)
}

/// Cross-section mean (2/r0²)∫u ρ dρ at snapshot k, node i.
pub fn section_mean(sol: &ReferenceSolution, vol: &[f64], k: usize, i: usize) -> f64 {
    let s: f64 = (0..=sol.nr()).map(|j| vol[j] * sol.at(k, i, j)).sum();
    2.0 * s / (sol.r0 * sol.r0)
}

/// Physical gradient (∂x1 u, ∂r u) at a node, second-order (one-sided at edges).
pub fn reference_gradient(sol: &ReferenceSolution, k: usize, i: usize, j: usize) -> [f64; 2] {
    let (nx, nr) = (sol.nx(), sol.nr());
    let d = |a: f64, b: f64, c: f64, h: f64, pos: usize, last: usize| -> f64 {
        // a, b, c are values at pos−1, pos, pos+1 (or the one-sided triple).
        if pos == 0 {
            (-3.0 * a + 4.0 * b - c) / (2.0 * h)
        } else if pos == last {
            (3.0 * c - 4.0 * b + a) / (2.0 * h)
        } else {
            (c - a) / (2.0 * h)
        }
    };
    let gx = if i == 0 {
        d(sol.at(k, 0, j), sol.at(k, 1, j), sol.at(k, 2, j), sol.hx, 0, nx)
    } else if i == nx {
        d(sol.at(k, nx - 2, j), sol.at(k, nx - 1, j), sol.at(k, nx, j), sol.hx, nx, nx)
    } else {
        d(sol.at(k, i - 1, j), 0.0, sol.at(k, i + 1, j), sol.hx, i, nx)
    };
    let gr = if j == 0 {
        0.0
    } else if j == nr {
        d(sol.at(k, i, nr - 2), sol.at(k, i, nr - 1), sol.at(k, i, nr), sol.hr, nr, nr)
    } else {
        d(sol.at(k, i, j - 1), 0.0, sol.at(k, i, j + 1), sol.hr, j, nr)
    };
    [gx, gr / sol.grid.eps]
}

// ---------------------------------------------------------------------------
// Manufactured solutions

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MmsReport {
    pub spatial: Vec<(usize, f64)>,
    pub spatial_slope: f64,
    pub be_time: Vec<(usize, f64)>,
    pub be_slope: f64,
    pub cn_time: Vec<(usize, f64)>,
    pub cn_slope: f64,
    pub balance: Vec<(usize, f64)>,
    pub balance_ratio: f64,
}

/// The manufactured solution u* = X(x1,t)(1 + κρ²/r0²), X = sin(πx1/ℓ)·sin³(πt/2T).
struct Manufactured {
    length: f64,
    horizon: f64,
    r0: f64,
    kappa: f64,
}

impl Manufactured {
    fn parts(&self, x: f64, t: f64) -> (f64, f64, f64, f64) {
        use std::f64::consts::PI;
        let k = PI / self.length;
        let w = 0.5 * PI / self.horizon;
        let (sx, cx) = (k * x).sin_cos();
        let (st, ct) = (w * t).sin_cos();
        let g = st * st * st;
        let gt = 3.0 * st * st * ct * w;
        // X, X_t, X_x, X_xx
        (sx * g, sx * gt, k * cx * g, -k * k * sx * g)
    }

    fn value(&self, x: f64, rho: f64, t: f64) -> f64 {
        self.parts(x, t).0 * (1.0 + self.kappa * rho * rho / (self.r0 * self.r0))
    }
}

fn mms_config(cfg: &ModelConfig) -> ModelConfig {
    let mut c = cfg.clone();
    c.interaction.catalog = crate::model::InteractionCatalog::Zero {};
    c.boundary.catalog = crate::model::BoundaryCatalog::Zero {};
    if let crate::model::VelocityCatalog::RadialInflow { c: speed, .. } = c.velocity.catalog {
        c.velocity.catalog = crate::model::VelocityCatalog::Uniform { c: speed };
    }
    c
}

/// Max nodal error against the manufactured solution at the final time.
fn mms_run(cfg: &ModelConfig, eps: f64, nx: usize, nr: usize, nt: usize, scheme: TimeScheme) -> Result<(ReferenceSolution, f64)> {
    let mc = mms_config(cfg);
    let r0 = mc.cross_section.outer_radius();
    let ms = Manufactured {
        length: mc.length,
        horizon: mc.horizon,
        r0,
        kappa: 0.5,
    };
    let a = axial_scale(&mc, eps);
    let eb = eps.powf(mc.beta);
    let vel = mc.velocity.clone();
    let source = |x: f64, rho: f64, t: f64| -> f64 {
        let (xv, xt, xx, xxx) = ms.parts(x, t);
        let prof = 1.0 + ms.kappa * rho * rho / (r0 * r0);
        let u = xv * prof;
        let ux = xx * prof;
        let p = vel.partials(u, x, t);
        let transport = a * (ux * (p.v + u * p.s) + u * p.x);
        let radial_diff = xv * 4.0 * ms.kappa / (r0 * r0) / eps;
        xt * prof - eb * xxx * prof - radial_diff + transport
    };
    // Lateral flux −ε⁻¹∂ρu* at ρ = r0.
    let lateral = |x: f64, t: f64| -> f64 { -ms.parts(x, t).0 * 2.0 * ms.kappa / r0 / eps };
    let grid = ReferenceGrid {
        eps,
        nx,
        nr,
        nt,
        t_end: mc.horizon,
        scheme,
        picard: 1,
        snapshots: 1,
    };
    let sol = solve_reference_with(
        &mc,
        &grid,
        Hooks {
            source: Some(&source),
            lateral: Some(&lateral),
        },
    )?;
    let k = sol.snapshots.len() - 1;
    let t = sol.times[k];
    let mut err = 0.0f64;
    for i in 0..=nx {
        for j in 0..=nr {
            err = err.max((sol.at(k, i, j) - ms.value(sol.x(i), sol.rho(j), t)).abs());
        }
    }
    Ok((sol, err))
}

fn final_diff(a: &ReferenceSolution, b: &ReferenceSolution) -> f64 {
    let ka = a.snapshots.len() - 1;
    let kb = b.snapshots.len() - 1;
    a.snapshots[ka]
        .iter()
        .zip(&b.snapshots[kb])
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

fn slope(h: &[f64], e: &[f64]) -> f64 {
    let lx: Vec<f64> = h.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = e.iter().map(|v| v.max(1e-300).ln()).collect();
    crate::interp::fit_line(&lx, &ly).0
}

/// Refinement studies on the manufactured solution, with ε = 0.1.
///
/// Spatial: nx doubles with nr and dt tied to the CFL bound (Crank–Nicolson).
/// Temporal: fixed mesh, error against a run with 8× more steps.
pub fn mms_self_test(cfg: &ModelConfig) -> Result<MmsReport> {
    let eps = 0.1;
    let mc = mms_config(cfg);
    let cfl_steps = |nx: usize, nr: usize| -> usize {
        let dt = max_stable_dt(&mc, eps, nx, nr, 0.4);
        (mc.horizon / dt).ceil() as usize
    };
    let mut spatial = Vec::new();
    for (nx, nr) in [(40, 4), (80, 8), (160, 16)] {
        let nt = cfl_steps(nx, nr);
        let (_, e) = mms_run(cfg, eps, nx, nr, nt, TimeScheme::Cn)?;
        spatial.push((nx, e));
    }
    let temporal = |scheme: TimeScheme| -> Result<Vec<(usize, f64)>> {
        let (nx, nr) = (40, 4);
        let base = cfl_steps(nx, nr);
        let (fine, _) = mms_run(cfg, eps, nx, nr, 16 * base, scheme)?;
        let mut out = Vec::new();
        for m in [1, 2, 4] {
            let (s, _) = mms_run(cfg, eps, nx, nr, m * base, scheme)?;
            out.push((m * base, final_diff(&s, &fine)));
        }
        Ok(out)
    };
    let be_time = temporal(TimeScheme::Be)?;
    let cn_time = temporal(TimeScheme::Cn)?;
    let mut balance = Vec::new();
    for (nx, nr) in [(80, 8), (160, 16)] {
        let nt = cfl_steps(nx, nr);
        let (s, _) = mms_run(cfg, eps, nx, nr, nt, TimeScheme::Cn)?;
        balance.push((nx, flux_balance(&s).0));
    }
    let hs = |v: &[(usize, f64)]| -> (Vec<f64>, Vec<f64>) {
        (v.iter().map(|p| 1.0 / p.0 as f64).collect(), v.iter().map(|p| p.1).collect())
    };
    let (h, e) = hs(&spatial);
    let spatial_slope = slope(&h, &e);
    let (h, e) = hs(&be_time);
    let be_slope = slope(&h, &e);
    let (h, e) = hs(&cn_time);
    let cn_slope = slope(&h, &e);
    let balance_ratio = balance[0].1 / balance[1].1.max(1e-300);
    let report = MmsReport {
        spatial,
        spatial_slope,
        be_time,
        be_slope,
        cn_time,
        cn_slope,
        balance,
        balance_ratio,
    };
    if report.spatial_slope < 1.5 || report.cn_slope < 1.5 || report.be_slope < 0.75 {
        return Err(Error::Numeric(format!(
            "manufactured-solution slopes too low: spatial {:.2}, BE {:.2}, CN {:.2}",
            report.spatial_slope, report.be_slope, report.cn_slope
        )));
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::builtin_scenario;

    #[test]
    fn radial_weights_sum() {
        let w = radial_weights(16, 1.0 / 16.0, 1.0);
        assert!((w.iter().sum::<f64>() - 0.5).abs() < 1e-14);
    }

    #[test]
    fn radial_operator_exact_on_quadratics() {
        let (nr, r0) = (8, 1.0);
        let hr = r0 / nr as f64;
        let vol = radial_weights(nr, hr, r0);
        let modes = RadialModes::new(nr, hr, &vol);
        assert!(modes.mu[0].abs() < 1e-12);
        // Interior and axis cells reproduce Δρ(ρ²) = 4 exactly.
        let u: Vec<f64> = (0..=nr).map(|j| (j as f64 * hr).powi(2)).collect();
        for j in 0..nr {
            let mut r = 0.0;
            if j > 0 {
                r += (j as f64 - 0.5) * (u[j - 1] - u[j]);
            }
            r += (j as f64 + 0.5) * (u[j + 1] - u[j]);
            assert!((r / vol[j] - 4.0).abs() < 1e-12, "{j}");
        }
    }

    #[test]
    fn zero_data_gives_zero() {
        let mut cfg = builtin_scenario("linear-advection").unwrap();
        cfg.interaction.catalog = crate::model::InteractionCatalog::Zero {};
        let grid = ReferenceGrid {
            eps: 0.1,
            nx: 40,
            nr: 8,
            nt: 200,
            t_end: 1.0,
            scheme: TimeScheme::Cn,
            picard: 1,
            snapshots: 4,
        };
        let sol = solve_reference(&cfg, &grid).unwrap();
        assert_eq!(sol.max_abs, 0.0);
        assert_eq!(flux_balance(&sol).0, 0.0);
    }

    #[test]
    fn angular_interaction_refused() {
        let mut cfg = builtin_scenario("linear-advection").unwrap();
        cfg.interaction.catalog = crate::model::InteractionCatalog::Angular { k: 1.0, a: 0.5 };
        assert!(!require_axisymmetric(&cfg).passed);
        let cfg = builtin_scenario("axisym-robin").unwrap();
        assert!(require_axisymmetric(&cfg).passed);
    }

    #[test]
    fn cfl_violation_reported() {
        let cfg = builtin_scenario("linear-advection").unwrap();
        let grid = ReferenceGrid {
            eps: 0.1,
            nx: 100,
            nr: 8,
            nt: 10,
            t_end: 1.0,
            scheme: TimeScheme::Be,
            picard: 1,
            snapshots: 1,
        };
        let err = solve_reference(&cfg, &grid).unwrap_err().to_string();
        assert!(err.contains("max admissible dt"), "{err}");
    }
}
