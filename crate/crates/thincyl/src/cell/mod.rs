//! Cross-section cell problems: mesh, Neumann solver, eigenbasis and the
//! parametrized correctors u₁, u₂.

mod mesh;
mod solve;

pub use mesh::{BoundaryEdge, CrossSectionMesh, Csr, Sampler};
pub use solve::{
    cg_singular, load_vector, neumann_eigenbasis, solve_neumann, Eigenbasis, NeumannData,
    NeumannSolution, ProfileCholesky,
};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interp::{lagrange4, lagrange4_d, Grid2};
use crate::model::{CrossSectionSpec, ModelConfig};

/// Compatibility tolerance for the parametrized Neumann problems.
pub const COMPAT_TOL: f64 = 1e-8;

pub fn build_mesh(spec: &CrossSectionSpec, resolution: usize) -> Result<CrossSectionMesh> {
    CrossSectionMesh::build(spec, resolution)
}

/// φ̂(s, x₁, t) and ∂_s φ̂ by the mesh boundary quadrature.
pub fn reduce_interaction(
    s: f64,
    x: f64,
    t: f64,
    cfg: &ModelConfig,
    mesh: &CrossSectionMesh,
) -> (f64, f64) {
    cfg.interaction
        .boundary_mean(s, x, t, &mesh.boundary_quadrature())
}

/// Nodal fields on the (x₁, t) parameter grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellField {
    pub nx: usize,
    pub nt: usize,
    pub hx: f64,
    pub ht: f64,
    pub nodes: usize,
    /// `data[(k*(nx+1) + i)*nodes + j]`.
    pub data: Vec<f64>,
    /// Largest relative compatibility defect met while building.
    pub max_defect: f64,
    /// Parameter (x₁, t) where the largest defect occurred.
    pub worst_param: (f64, f64),
}

impl CellField {
    pub fn zeros(nx: usize, nt: usize, hx: f64, ht: f64, nodes: usize) -> Self {
        CellField {
            nx,
            nt,
            hx,
            ht,
            nodes,
            data: vec![0.0; (nx + 1) * (nt + 1) * nodes],
            max_defect: 0.0,
            worst_param: (0.0, 0.0),
        }
    }

    #[inline]
    pub fn node(&self, i: usize, k: usize) -> &[f64] {
        let o = (k * (self.nx + 1) + i) * self.nodes;
        &self.data[o..o + self.nodes]
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Nodal vector at arbitrary (x₁, t) by tensor Lagrange interpolation.
    pub fn eval_field(&self, x: f64, t: f64) -> Vec<f64> {
        let (i0, wx) = lagrange4(self.nx, self.hx, x);
        let (k0, wt) = lagrange4(self.nt, self.ht, t);
        let mut out = vec![0.0; self.nodes];
        for (b, wb) in wt.iter().enumerate() {
            for (a, wa) in wx.iter().enumerate() {
                let w = wa * wb;
                if w == 0.0 {
                    continue;
                }
                for (o, v) in out.iter_mut().zip(self.node(i0 + a, k0 + b)) {
                    *o += w * v;
                }
            }
        }
        out
    }

    /// Nodal vector at axial node `i`, interpolated in time.
    pub fn eval_node_field(&self, i: usize, t: f64) -> Vec<f64> {
        let (k0, wt) = lagrange4(self.nt, self.ht, t);
        let mut out = vec![0.0; self.nodes];
        for (b, wb) in wt.iter().enumerate() {
            for (o, v) in out.iter_mut().zip(self.node(i, k0 + b)) {
                *o += wb * v;
            }
        }
        out
    }

    pub fn eval(&self, mesh: &CrossSectionMesh, x: f64, t: f64, s: &Sampler) -> f64 {
        let tri = mesh.tris[s.tri];
        let (i0, wx) = lagrange4(self.nx, self.hx, x);
        let (k0, wt) = lagrange4(self.nt, self.ht, t);
        let mut acc = 0.0;
        for (b, wb) in wt.iter().enumerate() {
            for (a, wa) in wx.iter().enumerate() {
                let v = self.node(i0 + a, k0 + b);
                acc += wa * wb * (s.bary[0] * v[tri[0]] + s.bary[1] * v[tri[1]] + s.bary[2] * v[tri[2]]);
            }
        }
        acc
    }

    /// Value, ∂_{x₁} and ∇_ξ at (x₁, ξ, t).
    pub fn eval_full(&self, mesh: &CrossSectionMesh, x: f64, t: f64, s: &Sampler) -> (f64, f64, [f64; 2]) {
        let tri = mesh.tris[s.tri];
        let (i0, wx) = lagrange4(self.nx, self.hx, x);
        let (_, dx) = lagrange4_d(self.nx, self.hx, x);
        let (k0, wt) = lagrange4(self.nt, self.ht, t);
        let (mut v, mut vx, mut gr) = (0.0, 0.0, [0.0; 2]);
        for (b, wb) in wt.iter().enumerate() {
            if *wb == 0.0 {
                continue;
            }
            for a in 0..4 {
                let f = self.node(i0 + a, k0 + b);
                let p = s.bary[0] * f[tri[0]] + s.bary[1] * f[tri[1]] + s.bary[2] * f[tri[2]];
                v += wb * wx[a] * p;
                vx += wb * dx[a] * p;
                let w = wb * wx[a];
                let d = mesh.grad_recovered(f, s);
                gr[0] += w * d[0];
                gr[1] += w * d[1];
            }
        }
        (v, vx, gr)
    }

    fn param_diff(&self, i: usize, k: usize, along_x: bool) -> Vec<f64> {
        let (n, h, idx) = if along_x {
            (self.nx, self.hx, i)
        } else {
            (self.nt, self.ht, k)
        };
        let at = |m: usize| {
            if along_x {
                self.node(m, k)
            } else {
                self.node(i, m)
            }
        };
        // fourth-order stencils, one-sided five-point at the ends
        let c = 1.0 / (12.0 * h);
        let stencil: Vec<(usize, f64)> = if n < 4 {
            if idx == 0 {
                vec![(0, -12.0), (1, 12.0)]
            } else if idx == n {
                vec![(n, 12.0), (n - 1, -12.0)]
            } else {
                vec![(idx + 1, 6.0), (idx - 1, -6.0)]
            }
        } else if idx == 0 {
            vec![(0, -25.0), (1, 48.0), (2, -36.0), (3, 16.0), (4, -3.0)]
        } else if idx == 1 {
            vec![(0, -3.0), (1, -10.0), (2, 18.0), (3, -6.0), (4, 1.0)]
        } else if idx == n {
            vec![(n, 25.0), (n - 1, -48.0), (n - 2, 36.0), (n - 3, -16.0), (n - 4, 3.0)]
        } else if idx == n - 1 {
            vec![(n, 3.0), (n - 1, 10.0), (n - 2, -18.0), (n - 3, 6.0), (n - 4, -1.0)]
        } else {
            vec![(idx - 2, 1.0), (idx - 1, -8.0), (idx + 1, 8.0), (idx + 2, -1.0)]
        };
        let mut out = vec![0.0; self.nodes];
        for (m, w) in stencil {
            for (o, v) in out.iter_mut().zip(at(m)) {
                *o += c * w * v;
            }
        }
        out
    }

    /// ∂_{x₁} of the nodal field at a grid parameter (fourth-order differences).
    pub fn dx_node(&self, i: usize, k: usize) -> Vec<f64> {
        self.param_diff(i, k, true)
    }

    /// ∂_t of the nodal field at a grid parameter (fourth-order differences).
    pub fn dt_node(&self, i: usize, k: usize) -> Vec<f64> {
        self.param_diff(i, k, false)
    }

    /// Largest nodal |u| over the difference stencil around (i, k).
    pub fn stencil_max(&self, i: usize, k: usize) -> f64 {
        let mut m = 0.0f64;
        for kk in k.saturating_sub(4)..=(k + 4).min(self.nt) {
            for ii in i.saturating_sub(4)..=(i + 4).min(self.nx) {
                m = self.node(ii, kk).iter().fold(m, |a, v| a.max(v.abs()));
            }
        }
        m
    }

    /// Largest |⟨u⟩| / (1 + ‖u‖) over all parameters.
    pub fn worst_mean(&self, mesh: &CrossSectionMesh) -> f64 {
        let mut worst: f64 = 0.0;
        for k in 0..=self.nt {
            for i in 0..=self.nx {
                let u = self.node(i, k);
                worst = worst.max(mesh.mean(u).abs() / (1.0 + mesh.l2(u)));
            }
        }
        worst
    }
}

type ParamSolve<'a> = dyn Fn(usize, usize) -> Result<Option<NeumannSolution>> + Sync + 'a;

fn build_field(
    nx: usize,
    nt: usize,
    hx: f64,
    ht: f64,
    mesh: &CrossSectionMesh,
    solve: &ParamSolve,
    what: &str,
) -> Result<CellField> {
    let params: Vec<(usize, usize)> = (0..=nt)
        .flat_map(|k| (0..=nx).map(move |i| (i, k)))
        .collect();
    let sols: Vec<Result<Option<NeumannSolution>>> =
        params.par_iter().map(|&(i, k)| solve(i, k)).collect();
    let mut field = CellField::zeros(nx, nt, hx, ht, mesh.n_nodes());
    let n = mesh.n_nodes();
    for (p, sol) in params.iter().zip(sols) {
        if let Some(sol) = sol? {
            let (i, k) = *p;
            let xp = i as f64 * hx;
            let tp = k as f64 * ht;
            if sol.relative > field.max_defect {
                field.max_defect = sol.relative;
                field.worst_param = (xp, tp);
            }
            if sol.relative > COMPAT_TOL {
                return Err(Error::Compatibility {
                    defect: sol.defect,
                    relative: sol.relative,
                    context: format!("in {what} at x1 = {xp:.6}, t = {tp:.6}"),
                });
            }
            let o = (k * (nx + 1) + i) * n;
            field.data[o..o + n].copy_from_slice(&sol.u);
        }
    }
    Ok(field)
}

/// Data of the u₁ problem at one parameter: source, W, W·ν, flux.
fn u1_data(
    cfg: &ModelConfig,
    mesh: &CrossSectionMesh,
    w0: f64,
    x: f64,
    t: f64,
) -> Option<(Vec<f64>, Vec<[f64; 2]>, Vec<f64>, Vec<f64>)> {
    let quad = mesh.boundary_quadrature();
    let (ph, _) = cfg.interaction.boundary_mean(w0, x, t, &quad);
    let transversal = cfg.velocity.has_transversal();
    let g: Vec<f64> = mesh
        .edges
        .iter()
        .map(|e| {
            let vn = if transversal {
                let v = cfg.velocity.vbar(x, e.midpoint, t);
                w0 * (v[0] * e.normal[0] + v[1] * e.normal[1])
            } else {
                0.0
            };
            vn - cfg.interaction.phi(w0, x, e.midpoint, t)
        })
        .collect();
    let (w, wn) = if transversal {
        let w = (0..mesh.tris.len())
            .map(|tr| {
                let v = cfg.velocity.vbar(x, mesh.centroid(tr), t);
                [w0 * v[0], w0 * v[1]]
            })
            .collect();
        let wn = mesh
            .edges
            .iter()
            .map(|e| {
                let v = cfg.velocity.vbar(x, e.midpoint, t);
                w0 * (v[0] * e.normal[0] + v[1] * e.normal[1])
            })
            .collect();
        (w, wn)
    } else {
        (vec![], vec![])
    };
    let zero = ph == 0.0 && g.iter().all(|v| *v == 0.0) && wn.iter().all(|v: &f64| *v == 0.0);
    if zero {
        return None;
    }
    Some((vec![-ph; mesh.n_nodes()], w, wn, g))
}

/// u₁ on the grid of `w0`: Δu₁ = −φ̂ + ∇·(w₀v̄), ∂_ν u₁ = w₀ v̄·ν − φ.
pub fn build_u1(cfg: &ModelConfig, w0: &Grid2, mesh: &CrossSectionMesh) -> Result<CellField> {
    let solve = |i: usize, k: usize| -> Result<Option<NeumannSolution>> {
        let (x, t) = (w0.x(i), w0.t(k));
        let Some((f, w, wn, g)) = u1_data(cfg, mesh, w0.at(i, k), x, t) else {
            return Ok(None);
        };
        let data = NeumannData {
            f: &f,
            w: (!w.is_empty()).then_some(&w[..]),
            wn: (!wn.is_empty()).then_some(&wn[..]),
            g: &g,
            magnitude: 0.0,
        };
        solve_neumann(mesh, &data).map(Some)
    };
    build_field(w0.nx, w0.nt, w0.hx, w0.ht, mesh, &solve, "u1")
}

/// u₂ on the grid of `w0`. The axial transport term is dropped in the
/// high-Péclet mode.
pub fn build_u2(
    cfg: &ModelConfig,
    w0: &Grid2,
    w0x: &Grid2,
    w1: &Grid2,
    u1: &CellField,
    mesh: &CrossSectionMesh,
) -> Result<CellField> {
    let quad = mesh.boundary_quadrature();
    let transversal = cfg.velocity.has_transversal();
    let transport = !cfg.high_peclet();
    let n = mesh.n_nodes();
    let solve = |i: usize, k: usize| -> Result<Option<NeumannSolution>> {
        let (x, t) = (w0.x(i), w0.t(k));
        let s = w0.at(i, k);
        let a = w1.at(i, k);
        let u = u1.node(i, k);
        let (_, dph) = cfg.interaction.boundary_mean(s, x, t, &quad);
        // (1/|ϖ|)∮ ∂_sφ u₁
        let nonlocal = mesh
            .edges
            .iter()
            .enumerate()
            .map(|(e, ed)| cfg.interaction.eval(s, x, ed.midpoint, t).s * mesh.edge_value(u, e) * ed.length)
            .sum::<f64>()
            / mesh.area;
        let u1t = u1.dt_node(i, k);
        let mut f: Vec<f64> = u1t.iter().map(|v| v - dph * a - nonlocal).collect();
        if transport {
            let (lam, lam_s, lam_x) = cfg.velocity.lambda_partials(s, x, t);
            let dlam = lam_s * w0x.at(i, k) + lam_x;
            let u1x = u1.dx_node(i, k);
            for j in 0..n {
                f[j] += dlam * u[j] + lam * u1x[j];
            }
        }
        let mut g = Vec::with_capacity(mesh.edges.len());
        let mut wn = Vec::with_capacity(mesh.edges.len());
        for (e, ed) in mesh.edges.iter().enumerate() {
            let c = a + mesh.edge_value(u, e);
            let vn = if transversal {
                let v = cfg.velocity.vbar(x, ed.midpoint, t);
                v[0] * ed.normal[0] + v[1] * ed.normal[1]
            } else {
                0.0
            };
            let phs = cfg.interaction.eval(s, x, ed.midpoint, t).s;
            g.push(c * (vn - phs));
            wn.push(c * vn);
        }
        let w: Vec<[f64; 2]> = if transversal {
            (0..mesh.tris.len())
                .map(|tr| {
                    let [p, q, r] = mesh.tris[tr];
                    let c = a + (u[p] + u[q] + u[r]) / 3.0;
                    let v = cfg.velocity.vbar(x, mesh.centroid(tr), t);
                    [c * v[0], c * v[1]]
                })
                .collect()
        } else {
            vec![]
        };
        let zero = f.iter().all(|v| *v == 0.0) && g.iter().all(|v| *v == 0.0) && w.is_empty();
        if zero {
            return Ok(None);
        }
        let data = NeumannData {
            f: &f,
            w: (!w.is_empty()).then_some(&w[..]),
            wn: transversal.then_some(&wn[..]),
            g: &g,
            magnitude: u1.stencil_max(i, k) * (1.0 / w0.ht + cfg.velocity.lambda(s, x, t).abs() / w0.hx),
        };
        solve_neumann(mesh, &data).map(Some)
    };
    build_field(w0.nx, w0.nt, w0.hx, w0.ht, mesh, &solve, "u2")
}
