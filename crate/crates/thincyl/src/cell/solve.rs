//! Neumann problems on the cross-section and the Neumann eigenbasis.

use nalgebra::{DMatrix, SymmetricEigen};

use super::mesh::{CrossSectionMesh, Csr};
use crate::error::{Error, Result};

/// Data for −Δu = ... written as Δu = f + ∇·W, ∂_ν u = g on the boundary.
pub struct NeumannData<'a> {
    /// Nodal source f.
    pub f: &'a [f64],
    /// Per-triangle vector field W (divergence part of the source).
    pub w: Option<&'a [[f64; 2]]>,
    /// W·ν at the boundary edge quadrature points.
    pub wn: Option<&'a [f64]>,
    /// Flux ∂_ν u at the boundary edge quadrature points.
    pub g: &'a [f64],
    /// Size of the terms the source was differenced from; loads that
    /// cancel below it are judged against it instead of against themselves.
    pub magnitude: f64,
}

#[derive(Clone, Debug)]
pub struct NeumannSolution {
    pub u: Vec<f64>,
    /// Σ b_i of the discrete load before projection.
    pub defect: f64,
    /// Defect relative to Σ |b_i|.
    pub relative: f64,
    pub iterations: usize,
}

/// Weak load b_i = ∮ g N_i − ∫ f N_i + ... so that K u = b.
pub fn load_vector(mesh: &CrossSectionMesh, data: &NeumannData) -> (Vec<f64>, f64) {
    let n = mesh.n_nodes();
    let mut b: Vec<f64> = (0..n).map(|i| -mesh.mass[i] * data.f[i]).collect();
    if let Some(w) = data.w {
        // ∫ (∇·W) N_i = ∮ (W·ν) N_i − ∫ W·∇N_i, sign flipped for the stiffness side
        for (t, tri) in mesh.tris.iter().enumerate() {
            let a = mesh.tri_area[t];
            for k in 0..3 {
                let gk = mesh.tri_grad[t][k];
                b[tri[k]] += a * (w[t][0] * gk[0] + w[t][1] * gk[1]);
            }
        }
    }
    for (e, edge) in mesh.edges.iter().enumerate() {
        let mut flux = data.g[e];
        if let Some(wn) = data.wn {
            flux -= wn[e];
        }
        let half = 0.5 * edge.length * flux;
        b[edge.nodes[0]] += half;
        b[edge.nodes[1]] += half;
    }
    let scale = b.iter().map(|v| v.abs()).sum::<f64>();
    (b, scale)
}

fn project_out_constants(v: &mut [f64]) {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    v.iter_mut().for_each(|x| *x -= m);
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Conjugate gradients on the complement of constants.
pub fn cg_singular(k: &Csr, b: &[f64], tol: f64, max_iter: usize) -> Result<(Vec<f64>, usize)> {
    let n = k.n;
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    project_out_constants(&mut r);
    let bnorm = dot(&r, &r).sqrt();
    if bnorm == 0.0 {
        return Ok((x, 0));
    }
    let diag = k.diag();
    let precond = |r: &[f64], z: &mut [f64]| {
        for i in 0..n {
            z[i] = r[i] / diag[i];
        }
        project_out_constants(z);
    };
    let mut z = vec![0.0; n];
    precond(&r, &mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    for it in 1..=max_iter {
        k.matvec(&p, &mut ap);
        let alpha = rz / dot(&p, &ap);
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        project_out_constants(&mut r);
        if dot(&r, &r).sqrt() <= tol * bnorm {
            return Ok((x, it));
        }
        precond(&r, &mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::Numeric(format!(
        "conjugate gradients did not converge in {max_iter} iterations"
    )))
}

/// Solve the Neumann problem, shifted to zero mean.
pub fn solve_neumann(mesh: &CrossSectionMesh, data: &NeumannData) -> Result<NeumannSolution> {
    let (b, scale) = load_vector(mesh, data);
    let defect = b.iter().sum::<f64>();
    let floor = (data.magnitude * mesh.area).max(1e-300);
    let relative = defect.abs() / scale.max(floor);
    let (mut u, iterations) = cg_singular(&mesh.stiffness, &b, 1e-10, 20 * mesh.n_nodes() + 100)?;
    let m = mesh.mean(&u);
    u.iter_mut().for_each(|v| *v -= m);
    Ok(NeumannSolution {
        u,
        defect,
        relative,
        iterations,
    })
}

/// Envelope Cholesky factor of a symmetric positive definite sparse matrix.
pub struct ProfileCholesky {
    first: Vec<usize>,
    /// Row i stores columns first[i]..=i.
    rows: Vec<Vec<f64>>,
}

impl ProfileCholesky {
    /// Factor K + σ diag(m).
    pub fn new(k: &Csr, sigma: f64, m: &[f64]) -> Result<Self> {
        let n = k.n;
        let first: Vec<usize> = (0..n)
            .map(|i| (k.ptr[i]..k.ptr[i + 1]).map(|p| k.col[p]).min().unwrap_or(i).min(i))
            .collect();
        let mut rows: Vec<Vec<f64>> = (0..n).map(|i| vec![0.0; i - first[i] + 1]).collect();
        for i in 0..n {
            for p in k.ptr[i]..k.ptr[i + 1] {
                let j = k.col[p];
                if j <= i {
                    rows[i][j - first[i]] += k.val[p];
                }
            }
            rows[i][i - first[i]] += sigma * m[i];
        }
        for i in 0..n {
            let fi = first[i];
            for j in fi..=i {
                let fj = first[j];
                let lo = fi.max(fj);
                let mut s = rows[i][j - fi];
                for q in lo..j {
                    s -= rows[i][q - fi] * rows[j][q - fj];
                }
                if j == i {
                    if s <= 0.0 {
                        return Err(Error::Numeric("shifted matrix not positive definite".into()));
                    }
                    rows[i][i - fi] = s.sqrt();
                } else {
                    rows[i][j - fi] = s / rows[j][j - fj];
                }
            }
        }
        Ok(ProfileCholesky { first, rows })
    }

    pub fn solve(&self, b: &mut [f64]) {
        let n = b.len();
        for i in 0..n {
            let fi = self.first[i];
            let mut s = b[i];
            for q in fi..i {
                s -= self.rows[i][q - fi] * b[q];
            }
            b[i] = s / self.rows[i][i - fi];
        }
        for i in (0..n).rev() {
            let fi = self.first[i];
            b[i] /= self.rows[i][i - fi];
            let bi = b[i];
            for q in fi..i {
                b[q] -= self.rows[i][q - fi] * bi;
            }
        }
    }
}

/// Neumann eigenpairs −ΔΘ = λΘ, M-orthonormal, ascending.
#[derive(Clone, Debug)]
pub struct Eigenbasis {
    pub values: Vec<f64>,
    pub vectors: Vec<Vec<f64>>,
    /// Relative residuals ‖KΘ − λMΘ‖ / ((λ+σ)‖MΘ‖).
    pub residuals: Vec<f64>,
}

impl Eigenbasis {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Modal coefficients a_p = Σ m_i f_i Θ_p,i.
    pub fn project(&self, mesh: &CrossSectionMesh, f: &[f64]) -> Vec<f64> {
        self.vectors.iter().map(|th| mesh.inner(f, th)).collect()
    }
}

/// First `count` Neumann eigenpairs by block shifted inverse iteration
/// with Rayleigh–Ritz extraction.
/// Two passes of modified Gram–Schmidt in the mass inner product; a column
/// that collapses is replaced by a fresh deterministic vector.
fn m_orthonormalize(mesh: &CrossSectionMesh, cols: &mut [Vec<f64>], n: usize) {
    for p in 0..cols.len() {
        let mut refill = 0usize;
        loop {
            let before = mesh.l2(&cols[p]);
            for _ in 0..2 {
                for q in 0..p {
                    let a = mesh.inner(&cols[p], &cols[q]);
                    let (lo, hi) = cols.split_at_mut(p);
                    for i in 0..n {
                        hi[0][i] -= a * lo[q][i];
                    }
                }
            }
            let after = mesh.l2(&cols[p]);
            if after > 1e-8 * before && after > 0.0 {
                cols[p].iter_mut().for_each(|v| *v /= after);
                break;
            }
            refill += 1;
            let seed = (p * 7919 + refill * 104729) as f64;
            cols[p] = mesh
                .nodes
                .iter()
                .enumerate()
                .map(|(i, x)| ((i as f64 + 1.0) * 0.618034 * seed.sqrt() + 3.1 * x[0] - 1.7 * x[1]).sin())
                .collect();
        }
    }
}

pub fn neumann_eigenbasis(mesh: &CrossSectionMesh, count: usize) -> Result<Eigenbasis> {
    let n = mesh.n_nodes();
    if count == 0 {
        return Ok(Eigenbasis {
            values: vec![],
            vectors: vec![],
            residuals: vec![],
        });
    }
    if count > n {
        return Err(Error::Config(format!(
            "{count} modes requested but the mesh has {n} nodes"
        )));
    }
    let block = (count + 8.max(count / 2)).min(n);
    let sigma = 1.0 / mesh.area;
    let chol = ProfileCholesky::new(&mesh.stiffness, sigma, &mesh.mass)?;
    let mass = &mesh.mass;

    let mut x: Vec<Vec<f64>> = (0..block)
        .map(|c| {
            let cf = c as f64 + 1.0;
            mesh.nodes
                .iter()
                .enumerate()
                .map(|(i, p)| {
                    (1.3 * cf * p[0] + 0.7 * (cf * cf + 1.0).sqrt() * p[1] + 0.37 * cf).sin()
                        + 0.01 * ((i * (c + 3)) % 17) as f64
                })
                .collect()
        })
        .collect();

    let tol = 1e-10;
    let mut values = vec![0.0; block];
    let mut residuals = vec![f64::INFINITY; block];
    let mut kx = vec![0.0; n];
    for _ in 0..2000 {
        // Y = (K + σM)^{-1} M X
        let y: Vec<Vec<f64>> = x
            .iter()
            .map(|col| {
                let mut v: Vec<f64> = col.iter().zip(mass).map(|(a, m)| a * m).collect();
                chol.solve(&mut v);
                v
            })
            .collect();
        let mut y = y;
        m_orthonormalize(mesh, &mut y, n);
        let ky: Vec<Vec<f64>> = y
            .iter()
            .map(|col| {
                let mut out = vec![0.0; n];
                mesh.stiffness.matvec(col, &mut out);
                out
            })
            .collect();
        let mut kr = DMatrix::zeros(block, block);
        for a in 0..block {
            for b in a..block {
                let kv = 0.5 * (dot(&y[a], &ky[b]) + dot(&y[b], &ky[a]));
                kr[(a, b)] = kv;
                kr[(b, a)] = kv;
            }
        }
        let eig = SymmetricEigen::new(kr);
        let mut order: Vec<usize> = (0..block).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let v = eig.eigenvectors;
        let mut newx = vec![vec![0.0; n]; block];
        for (dst, &src) in order.iter().enumerate() {
            values[dst] = eig.eigenvalues[src];
            for a in 0..block {
                let coef = v[(a, src)];
                if coef != 0.0 {
                    for i in 0..n {
                        newx[dst][i] += coef * y[a][i];
                    }
                }
            }
        }
        x = newx;
        for p in 0..block {
            mesh.stiffness.matvec(&x[p], &mut kx);
            let mut r2 = 0.0;
            let mut m2 = 0.0;
            for i in 0..n {
                let mx = mass[i] * x[p][i];
                r2 += (kx[i] - values[p] * mx).powi(2);
                m2 += mx * mx;
            }
            residuals[p] = r2.sqrt() / ((values[p].abs() + sigma) * m2.sqrt());
        }
        if residuals[..count].iter().all(|r| *r < tol) {
            break;
        }
    }
    if residuals[..count].iter().any(|r| !(*r < 1e-8)) {
        return Err(Error::Numeric("eigen iteration did not converge".into()));
    }
    x.truncate(count);
    values.truncate(count);
    residuals.truncate(count);
    // the constant mode is known exactly
    let c0 = 1.0 / mesh.area.sqrt();
    x[0] = vec![c0; n];
    values[0] = 0.0;
    residuals[0] = 0.0;
    for p in 1..count {
        let a = mesh.inner(&x[p], &x[0]);
        for i in 0..n {
            x[p][i] -= a * x[0][i];
        }
        let nrm = mesh.l2(&x[p]);
        x[p].iter_mut().for_each(|v| *v /= nrm);
    }
    for col in x.iter_mut() {
        let big = col.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if let Some(first) = col.iter().find(|v| v.abs() > 1e-8 * big) {
            if *first < 0.0 {
                col.iter_mut().for_each(|v| *v = -*v);
            }
        }
    }
    Ok(Eigenbasis {
        values,
        vectors: x,
        residuals,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::CrossSectionSpec;

    fn mesh(res: usize) -> CrossSectionMesh {
        CrossSectionMesh::build(&CrossSectionSpec::Disk { radius: 1.0 }, res).unwrap()
    }

    #[test]
    fn cholesky_solves() {
        let m = mesh(6);
        let n = m.n_nodes();
        let chol = ProfileCholesky::new(&m.stiffness, 2.0, &m.mass).unwrap();
        let x: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin()).collect();
        let mut b = vec![0.0; n];
        m.stiffness.matvec(&x, &mut b);
        for i in 0..n {
            b[i] += 2.0 * m.mass[i] * x[i];
        }
        chol.solve(&mut b);
        for i in 0..n {
            assert!((b[i] - x[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn neumann_zero_mean_and_compatible() {
        let m = mesh(12);
        let n = m.n_nodes();
        // Δu = -2, ∂νu = r0 = 1 on the unit circle: u = -ρ²/2... sign: Δ(-ρ²/2) = -2
        let f = vec![-2.0; n];
        let g = vec![-1.0; m.edges.len()];
        let sol = solve_neumann(
            &m,
            &NeumannData {
                f: &f,
                w: None,
                wn: None,
                g: &g,
                magnitude: 0.0,
            },
        )
        .unwrap();
        assert!(sol.relative < 1e-12, "defect {}", sol.relative);
        assert!(m.mean(&sol.u).abs() < 1e-14);
        // exact: -ρ²/2 + 1/4
        let err = m
            .nodes
            .iter()
            .zip(&sol.u)
            .map(|(p, u)| (u - (0.25 - 0.5 * (p[0] * p[0] + p[1] * p[1]))).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-2, "err {err}");
    }

    #[test]
    fn first_disk_eigenvalue() {
        let m = mesh(16);
        let e = neumann_eigenbasis(&m, 4).unwrap();
        assert_eq!(e.values[0], 0.0);
        // j'_{1,1}^2 = 3.3899
        assert!((e.values[1] - 3.38996).abs() < 0.05, "{}", e.values[1]);
        assert!((e.values[2] - e.values[1]).abs() < 0.01);
        for p in 0..4 {
            for q in 0..4 {
                let d = m.inner(&e.vectors[p], &e.vectors[q]);
                let want = if p == q { 1.0 } else { 0.0 };
                assert!((d - want).abs() < 1e-8);
            }
        }
    }
}
