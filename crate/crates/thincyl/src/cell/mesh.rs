//! Ring-structured triangulation of the cross-section and P1 element data.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::model::{BoundaryQuadrature, CrossSectionSpec};

#[derive(Clone, Debug)]
pub struct BoundaryEdge {
    pub nodes: [usize; 2],
    /// Quadrature point (on the true boundary for the disk).
    pub midpoint: [f64; 2],
    pub normal: [f64; 2],
    /// Arc length for the disk, segment length for polygons.
    pub length: f64,
}

/// Compressed sparse row matrix.
#[derive(Clone, Debug)]
pub struct Csr {
    pub n: usize,
    pub ptr: Vec<usize>,
    pub col: Vec<usize>,
    pub val: Vec<f64>,
}

impl Csr {
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for i in 0..self.n {
            let mut s = 0.0;
            for p in self.ptr[i]..self.ptr[i + 1] {
                s += self.val[p] * x[self.col[p]];
            }
            y[i] = s;
        }
    }

    pub fn diag(&self) -> Vec<f64> {
        (0..self.n)
            .map(|i| {
                (self.ptr[i]..self.ptr[i + 1])
                    .find(|&p| self.col[p] == i)
                    .map(|p| self.val[p])
                    .unwrap_or(0.0)
            })
            .collect()
    }
}

#[derive(Clone, Debug)]
pub struct CrossSectionMesh {
    pub nodes: Vec<[f64; 2]>,
    pub tris: Vec<[usize; 3]>,
    pub tri_area: Vec<f64>,
    /// Gradients of the three hat functions on each triangle.
    pub tri_grad: Vec<[[f64; 2]; 3]>,
    pub edges: Vec<BoundaryEdge>,
    /// Lumped mass (area weight) per node; sums to |ϖ|.
    pub mass: Vec<f64>,
    pub area: f64,
    pub perimeter: f64,
    pub stiffness: Csr,
    /// Largest edge length.
    pub h: f64,
    /// Per node, weights of the recovered nodal gradient.
    pub recovery: Vec<Vec<(usize, [f64; 2])>>,
}

/// Location of a point inside the mesh.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sampler {
    pub tri: usize,
    pub bary: [f64; 3],
}

/// Polynomial-preserving recovery: per node, the gradient at the node of the
/// least-squares quadratic through the nodal values of its two-ring patch.
/// Exact for quadratics, so second order at interior and boundary nodes.
fn patch_recovery(nodes: &[[f64; 2]], tris: &[[usize; 3]]) -> Vec<Vec<(usize, [f64; 2])>> {
    use nalgebra::DMatrix;
    let n = nodes.len();
    let mut nbr: Vec<std::collections::BTreeSet<usize>> = vec![Default::default(); n];
    for tri in tris {
        for &a in tri {
            for &b in tri {
                nbr[a].insert(b);
            }
        }
    }
    (0..n)
        .map(|c| {
            let mut patch = nbr[c].clone();
            for &m in &nbr[c] {
                patch.extend(nbr[m].iter().copied());
            }
            let patch: Vec<usize> = patch.into_iter().collect();
            let o = nodes[c];
            let scale = patch
                .iter()
                .map(|&m| (nodes[m][0] - o[0]).hypot(nodes[m][1] - o[1]))
                .fold(0.0f64, f64::max)
                .max(f64::MIN_POSITIVE);
            let a = DMatrix::from_fn(patch.len(), 6, |r, k| {
                let dx = (nodes[patch[r]][0] - o[0]) / scale;
                let dy = (nodes[patch[r]][1] - o[1]) / scale;
                [1.0, dx, dy, dx * dx, dx * dy, dy * dy][k]
            });
            let pinv = a
                .svd(true, true)
                .pseudo_inverse(1e-12)
                .expect("pseudo-inverse of a patch matrix");
            patch
                .iter()
                .enumerate()
                .map(|(r, &m)| (m, [pinv[(1, r)] / scale, pinv[(2, r)] / scale]))
                .collect()
        })
        .collect()
}

fn orient(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

/// Triangulate the band between two closed rings with parameters in [0,1).
fn zipper(inner: &[(usize, f64)], outer: &[(usize, f64)], tris: &mut Vec<[usize; 3]>) {
    let m = inner.len();
    let n = outer.len();
    if m == 1 {
        for j in 0..n {
            tris.push([inner[0].0, outer[j].0, outer[(j + 1) % n].0]);
        }
        return;
    }
    let (mut i, mut j) = (0usize, 0usize);
    let next = |r: &[(usize, f64)], k: usize| if k + 1 < r.len() { r[k + 1].1 } else { 1.0 };
    while i < m || j < n {
        let advance_inner = i < m && (j == n || next(inner, i) <= next(outer, j));
        if advance_inner {
            tris.push([inner[i].0, inner[(i + 1) % m].0, outer[j % n].0]);
            i += 1;
        } else {
            tris.push([inner[i % m].0, outer[(j + 1) % n].0, outer[j].0]);
            j += 1;
        }
    }
}

impl CrossSectionMesh {
    /// Quasi-uniform mesh with about `resolution` edges across the diameter.
    pub fn build(spec: &CrossSectionSpec, resolution: usize) -> Result<Self> {
        spec.check()?;
        if resolution < 2 {
            return Err(Error::Config("cross-section resolution must be >= 2".into()));
        }
        let rings = resolution.div_ceil(2).max(1);
        let mut nodes = vec![[0.0, 0.0]];
        let mut tris = vec![];
        let mut prev: Vec<(usize, f64)> = vec![(0, 0.0)];
        // boundary parametrization per spec
        let (corner_params, base): (Vec<[f64; 2]>, Vec<usize>) = match spec {
            CrossSectionSpec::Disk { .. } => (vec![], vec![6]),
            CrossSectionSpec::Polygon { vertices } => {
                let per = spec.perimeter();
                let counts = (0..vertices.len())
                    .map(|e| {
                        let a = vertices[e];
                        let b = vertices[(e + 1) % vertices.len()];
                        let len = ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
                        ((6.0 * len / per).round() as usize).max(1)
                    })
                    .collect();
                (vertices.clone(), counts)
            }
        };
        for k in 1..=rings {
            let scale = k as f64 / rings as f64;
            let mut ring = vec![];
            match spec {
                CrossSectionSpec::Disk { radius } => {
                    let nk = 6 * k;
                    for j in 0..nk {
                        let th = 2.0 * std::f64::consts::PI * j as f64 / nk as f64;
                        ring.push((nodes.len(), j as f64 / nk as f64));
                        nodes.push([scale * radius * th.cos(), scale * radius * th.sin()]);
                    }
                }
                CrossSectionSpec::Polygon { .. } => {
                    let v = &corner_params;
                    let ne = v.len();
                    let total: usize = base.iter().sum::<usize>() * k;
                    let mut idx = 0usize;
                    for e in 0..ne {
                        let a = v[e];
                        let b = v[(e + 1) % ne];
                        let ce = base[e] * k;
                        for j in 0..ce {
                            let u = j as f64 / ce as f64;
                            ring.push((nodes.len(), idx as f64 / total as f64));
                            nodes.push([
                                scale * (a[0] + u * (b[0] - a[0])),
                                scale * (a[1] + u * (b[1] - a[1])),
                            ]);
                            idx += 1;
                        }
                    }
                }
            }
            zipper(&prev, &ring, &mut tris);
            prev = ring;
        }
        for t in tris.iter_mut() {
            if orient(nodes[t[0]], nodes[t[1]], nodes[t[2]]) < 0.0 {
                t.swap(1, 2);
            }
        }
        let nn = nodes.len();
        let mut tri_area = Vec::with_capacity(tris.len());
        let mut tri_grad = Vec::with_capacity(tris.len());
        let mut mass = vec![0.0; nn];
        let mut h: f64 = 0.0;
        for t in &tris {
            let [p0, p1, p2] = [nodes[t[0]], nodes[t[1]], nodes[t[2]]];
            let a2 = orient(p0, p1, p2);
            if a2 <= 1e-14 {
                return Err(Error::Numeric("degenerate triangle in mesh".into()));
            }
            let a = 0.5 * a2;
            tri_area.push(a);
            tri_grad.push([
                [(p1[1] - p2[1]) / a2, (p2[0] - p1[0]) / a2],
                [(p2[1] - p0[1]) / a2, (p0[0] - p2[0]) / a2],
                [(p0[1] - p1[1]) / a2, (p1[0] - p0[0]) / a2],
            ]);
            for &v in t {
                mass[v] += a / 3.0;
            }
            for (u, w) in [(p0, p1), (p1, p2), (p2, p0)] {
                h = h.max(((u[0] - w[0]).powi(2) + (u[1] - w[1]).powi(2)).sqrt());
            }
        }
        // boundary edges from the outer ring
        let nb = prev.len();
        let mut edges = Vec::with_capacity(nb);
        for j in 0..nb {
            let a = prev[j].0;
            let b = prev[(j + 1) % nb].0;
            let (pa, pb) = (nodes[a], nodes[b]);
            match spec {
                CrossSectionSpec::Disk { radius } => {
                    let th = 2.0 * std::f64::consts::PI / nb as f64;
                    let mid = (j as f64 + 0.5) * th;
                    let (s, c) = mid.sin_cos();
                    edges.push(BoundaryEdge {
                        nodes: [a, b],
                        midpoint: [radius * c, radius * s],
                        normal: [c, s],
                        length: radius * th,
                    });
                    // circular segment between chord and arc
                    let seg = 0.5 * radius * radius * (th - th.sin());
                    mass[a] += 0.5 * seg;
                    mass[b] += 0.5 * seg;
                }
                CrossSectionSpec::Polygon { .. } => {
                    let len = ((pb[0] - pa[0]).powi(2) + (pb[1] - pa[1]).powi(2)).sqrt();
                    edges.push(BoundaryEdge {
                        nodes: [a, b],
                        midpoint: [0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])],
                        normal: [(pb[1] - pa[1]) / len, -(pb[0] - pa[0]) / len],
                        length: len,
                    });
                }
            }
        }
        let area = mass.iter().sum();
        let perimeter = edges.iter().map(|e| e.length).sum();
        let stiffness = assemble_stiffness(nn, &tris, &tri_area, &tri_grad);
        let recovery = patch_recovery(&nodes, &tris);
        Ok(CrossSectionMesh {
            nodes,
            tris,
            tri_area,
            tri_grad,
            edges,
            mass,
            area,
            perimeter,
            stiffness,
            h,
            recovery,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn boundary_quadrature(&self) -> BoundaryQuadrature {
        BoundaryQuadrature {
            points: self.edges.iter().map(|e| e.midpoint).collect(),
            normals: self.edges.iter().map(|e| e.normal).collect(),
            weights: self.edges.iter().map(|e| e.length).collect(),
            area: self.area,
        }
    }

    pub fn centroid(&self, t: usize) -> [f64; 2] {
        let [a, b, c] = self.tris[t];
        [
            (self.nodes[a][0] + self.nodes[b][0] + self.nodes[c][0]) / 3.0,
            (self.nodes[a][1] + self.nodes[b][1] + self.nodes[c][1]) / 3.0,
        ]
    }

    /// Area-weighted mean of a nodal field.
    pub fn mean(&self, u: &[f64]) -> f64 {
        u.iter().zip(&self.mass).map(|(a, m)| a * m).sum::<f64>() / self.area
    }

    /// L² norm with lumped weights.
    pub fn l2(&self, u: &[f64]) -> f64 {
        u.iter()
            .zip(&self.mass)
            .map(|(a, m)| a * a * m)
            .sum::<f64>()
            .sqrt()
    }

    pub fn inner(&self, u: &[f64], v: &[f64]) -> f64 {
        u.iter()
            .zip(v)
            .zip(&self.mass)
            .map(|((a, b), m)| a * b * m)
            .sum()
    }

    /// Locate a point; points slightly outside use the nearest triangle.
    pub fn locate(&self, p: [f64; 2]) -> Sampler {
        let mut best = Sampler {
            tri: 0,
            bary: [0.0; 3],
        };
        let mut best_min = f64::NEG_INFINITY;
        for (t, tri) in self.tris.iter().enumerate() {
            let [a, b, c] = [self.nodes[tri[0]], self.nodes[tri[1]], self.nodes[tri[2]]];
            let d = orient(a, b, c);
            let l0 = orient(p, b, c) / d;
            let l1 = orient(a, p, c) / d;
            let l2 = 1.0 - l0 - l1;
            let m = l0.min(l1).min(l2);
            if m > best_min {
                best_min = m;
                best = Sampler {
                    tri: t,
                    bary: [l0, l1, l2],
                };
                if m >= 0.0 {
                    break;
                }
            }
        }
        best
    }

    #[inline]
    pub fn eval(&self, u: &[f64], s: &Sampler) -> f64 {
        let t = self.tris[s.tri];
        s.bary[0] * u[t[0]] + s.bary[1] * u[t[1]] + s.bary[2] * u[t[2]]
    }

    /// Gradient of a nodal field on the sampler's triangle.
    pub fn grad(&self, u: &[f64], s: &Sampler) -> [f64; 2] {
        let t = self.tris[s.tri];
        let g = &self.tri_grad[s.tri];
        let mut out = [0.0; 2];
        for k in 0..3 {
            out[0] += u[t[k]] * g[k][0];
            out[1] += u[t[k]] * g[k][1];
        }
        out
    }

    /// Gradient of the P1 interpolant of the recovered nodal gradients.
    pub fn grad_recovered(&self, u: &[f64], s: &Sampler) -> [f64; 2] {
        let t = self.tris[s.tri];
        let mut out = [0.0; 2];
        for k in 0..3 {
            for &(m, w) in &self.recovery[t[k]] {
                out[0] += s.bary[k] * w[0] * u[m];
                out[1] += s.bary[k] * w[1] * u[m];
            }
        }
        out
    }

    /// Edge-midpoint value of a nodal field.
    pub fn edge_value(&self, u: &[f64], e: usize) -> f64 {
        let [a, b] = self.edges[e].nodes;
        0.5 * (u[a] + u[b])
    }

    /// Boundary integral ∮ u dσ of a nodal field by edge midpoints.
    pub fn boundary_integral(&self, u: &[f64]) -> f64 {
        (0..self.edges.len())
            .map(|e| self.edge_value(u, e) * self.edges[e].length)
            .sum()
    }
}

fn assemble_stiffness(
    n: usize,
    tris: &[[usize; 3]],
    area: &[f64],
    grad: &[[[f64; 2]; 3]],
) -> Csr {
    let mut rows: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); n];
    for (t, tri) in tris.iter().enumerate() {
        for a in 0..3 {
            for b in 0..3 {
                let v = area[t] * (grad[t][a][0] * grad[t][b][0] + grad[t][a][1] * grad[t][b][1]);
                *rows[tri[a]].entry(tri[b]).or_insert(0.0) += v;
            }
        }
    }
    let mut ptr = vec![0];
    let mut col = vec![];
    let mut val = vec![];
    for r in rows {
        for (c, v) in r {
            col.push(c);
            val.push(v);
        }
        ptr.push(col.len());
    }
    Csr { n, ptr, col, val }
}
