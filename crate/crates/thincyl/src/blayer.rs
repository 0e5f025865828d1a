//! Boundary-layer correctors near the right end x₁ = ℓ.
//!
//! All terms live on the half-cylinder ζ₁ ∈ [0, L_ζ] × ϖ and are sampled at
//! the time levels of the limit grid; values between levels use the same
//! 4-point Lagrange weights as the regular part, so the Dirichlet repair at
//! ζ₁ = 0 is exact up to rounding.

use crate::cell::{CellField, CrossSectionMesh, Eigenbasis, Sampler};
use crate::error::{Error, Result};
use crate::interp::{diff1, fit_line, interp1, interp1_d, lagrange4, Grid2};
use crate::model::ModelConfig;

/// Boundary data of the layer problems at the limit-grid time levels.
#[derive(Clone, Debug)]
pub struct LayerData {
    pub cfg: ModelConfig,
    pub nt: usize,
    pub ht: f64,
    /// w₀(ℓ, t_k).
    pub w0_end: Vec<f64>,
    /// w₁(ℓ, t_k).
    pub w1_end: Vec<f64>,
    /// Φ̃₁(t_k, ·) = −u₁(ℓ, ·, t_k), nodal.
    pub phi1_tilde: Vec<Vec<f64>>,
    /// Φ₂(t_k, ·) = −u₂(ℓ, ·, t_k), nodal.
    pub phi2: Vec<Vec<f64>>,
    pub varsigma0: f64,
    pub lzeta: f64,
}

impl LayerData {
    pub fn new(
        cfg: &ModelConfig,
        w0: &Grid2,
        w1: Option<&Grid2>,
        u1: Option<&CellField>,
        u2: Option<&CellField>,
    ) -> Self {
        let nx = w0.nx;
        let nt = w0.nt;
        let nodes = |f: Option<&CellField>, sign: f64| -> Vec<Vec<f64>> {
            match f {
                Some(f) => (0..=nt)
                    .map(|k| f.node(nx, k).iter().map(|v| sign * v).collect())
                    .collect(),
                None => vec![],
            }
        };
        LayerData {
            cfg: cfg.clone(),
            nt,
            ht: w0.ht,
            w0_end: (0..=nt).map(|k| w0.at(nx, k)).collect(),
            w1_end: match w1 {
                Some(g) => (0..=nt).map(|k| g.at(nx, k)).collect(),
                None => vec![0.0; nt + 1],
            },
            phi1_tilde: nodes(u1, -1.0),
            phi2: nodes(u2, -1.0),
            varsigma0: cfg.varsigma0(),
            lzeta: cfg.lzeta(),
        }
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.nt).map(|k| k as f64 * self.ht).collect()
    }

    /// Right-end speed 𝚟₁(t).
    pub fn speed(&self, t: f64) -> f64 {
        self.cfg.right_speed(t)
    }

    pub fn speed_dot(&self, t: f64) -> f64 {
        let h = 1e-5 * self.cfg.horizon;
        (self.speed(t + h) - self.speed(t - h)) / (2.0 * h)
    }

    /// Φ₀(t) = q_ℓ(t) − w₀(ℓ, t).
    pub fn phi0(&self, t: f64) -> f64 {
        self.cfg.boundary.q(t) - interp1(&self.w0_end, self.ht, t)
    }

    pub fn phi0_dot(&self, t: f64) -> f64 {
        self.cfg.boundary.eval(t).1 - interp1_d(&self.w0_end, self.ht, t)
    }

    /// Φ̂₁(t) = −w₁(ℓ, t).
    pub fn phi1_hat(&self, t: f64) -> f64 {
        -interp1(&self.w1_end, self.ht, t)
    }
}

/// Π₀ = Φ₀(t) e^{−𝚟₁ζ₁}.
pub fn pi0_eval(zeta: f64, t: f64, data: &LayerData) -> f64 {
    data.phi0(t) * (-data.speed(t) * zeta).exp()
}

/// ∂_{ζ₁}Π₀.
pub fn pi0_dzeta(zeta: f64, t: f64, data: &LayerData) -> f64 {
    -data.speed(t) * pi0_eval(zeta, t, data)
}

fn pi1_hat_poly(t: f64, data: &LayerData) -> (f64, f64, f64, f64) {
    let v = data.speed(t);
    let vd = data.speed_dot(t);
    let p0 = data.phi0(t);
    let p0d = data.phi0_dot(t);
    let a = data.phi1_hat(t);
    let b = p0 * vd / (v * v) - p0d / v;
    let c = p0 * vd / (2.0 * v);
    (a, b, c, v)
}

/// Π̂₁ by the closed-form solution of the mean-mode ODE.
pub fn pi1_hat_eval(zeta: f64, t: f64, data: &LayerData) -> f64 {
    let (a, b, c, v) = pi1_hat_poly(t, data);
    (a + b * zeta + c * zeta * zeta) * (-v * zeta).exp()
}

/// ∂_{ζ₁}Π̂₁.
pub fn pi1_hat_dzeta(zeta: f64, t: f64, data: &LayerData) -> f64 {
    let (a, b, c, v) = pi1_hat_poly(t, data);
    let p = a + b * zeta + c * zeta * zeta;
    (b + 2.0 * c * zeta - v * p) * (-v * zeta).exp()
}

/// Modal layer term Σ_p a_p(t) Θ_p e^{−κ_p(t)ζ₁} plus a residual mode that
/// carries the part of the datum outside the truncated basis.
#[derive(Clone, Debug)]
pub struct ModalLayer {
    pub nt: usize,
    pub ht: f64,
    /// Eigenvalues λ₁..λ_P.
    pub lambdas: Vec<f64>,
    /// Eigenvectors Θ₁..Θ_P (nodal).
    pub modes: Vec<Vec<f64>>,
    /// a_p(t_k), indexed [p][k].
    pub coeffs: Vec<Vec<f64>>,
    /// Residual datum per time level, nodal.
    pub tail: Vec<Vec<f64>>,
    /// Eigenvalue used for the residual decay.
    pub tail_lambda: f64,
    /// max_t |a_P(t)|.
    pub tail_bound: f64,
    speeds: Vec<f64>,
}

fn kappa(v: f64, lambda: f64) -> f64 {
    0.5 * v + (0.25 * v * v + lambda).sqrt()
}

impl ModalLayer {
    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().flatten().all(|v| *v == 0.0) && self.tail.iter().flatten().all(|v| *v == 0.0)
    }

    fn weights(&self, t: f64) -> (usize, [f64; 4]) {
        lagrange4(self.nt, self.ht, t)
    }

    fn speed(&self, t: f64) -> f64 {
        interp1(&self.speeds, self.ht, t)
    }

    /// Value and ∂_{ζ₁} at (ζ₁, ξ, t) given nodal evaluation weights.
    pub fn eval_both(&self, mesh: &CrossSectionMesh, zeta: f64, s: &Sampler, t: f64) -> (f64, f64) {
        let (k0, wt) = self.weights(t);
        let v = self.speed(t);
        let mut val = 0.0;
        let mut dz = 0.0;
        for (p, th) in self.modes.iter().enumerate() {
            let a: f64 = (0..4).map(|b| wt[b] * self.coeffs[p][k0 + b]).sum();
            if a == 0.0 {
                continue;
            }
            let kp = kappa(v, self.lambdas[p]);
            let e = a * mesh.eval(th, s) * (-kp * zeta).exp();
            val += e;
            dz -= kp * e;
        }
        let tail: f64 = (0..4).map(|b| wt[b] * mesh.eval(&self.tail[k0 + b], s)).sum();
        if tail != 0.0 {
            let kp = kappa(v, self.tail_lambda);
            let e = tail * (-kp * zeta).exp();
            val += e;
            dz -= kp * e;
        }
        (val, dz)
    }

    /// ∇_ξ of the term at (ζ₁, ξ, t).
    pub fn grad_xi(&self, mesh: &CrossSectionMesh, zeta: f64, s: &Sampler, t: f64) -> [f64; 2] {
        let (k0, wt) = self.weights(t);
        let v = self.speed(t);
        let mut g = [0.0; 2];
        let mut add = |f: f64, field: &[f64]| {
            let d = mesh.grad_recovered(field, s);
            g[0] += f * d[0];
            g[1] += f * d[1];
        };
        for (p, th) in self.modes.iter().enumerate() {
            let a: f64 = (0..4).map(|b| wt[b] * self.coeffs[p][k0 + b]).sum();
            if a != 0.0 {
                add(a * (-kappa(v, self.lambdas[p]) * zeta).exp(), th);
            }
        }
        let e = (-kappa(v, self.tail_lambda) * zeta).exp();
        for b in 0..4 {
            if wt[b] != 0.0 {
                add(wt[b] * e, &self.tail[k0 + b]);
            }
        }
        g
    }

    /// max over nodes of |term(ζ₁, ·, t_k)|.
    pub fn sup_level(&self, zeta: f64, k: usize) -> f64 {
        let n = self.tail.first().map_or(0, |v| v.len());
        let v = self.speeds[k];
        let mut buf = vec![0.0; n];
        for (p, th) in self.modes.iter().enumerate() {
            let c = self.coeffs[p][k] * (-kappa(v, self.lambdas[p]) * zeta).exp();
            if c != 0.0 {
                buf.iter_mut().zip(th).for_each(|(b, x)| *b += c * x);
            }
        }
        let e = (-kappa(v, self.tail_lambda) * zeta).exp();
        buf.iter_mut().zip(&self.tail[k]).for_each(|(b, x)| *b += e * x);
        buf.iter().fold(0.0, |m, b| m.max(b.abs()))
    }

    /// max over nodes and time levels of |term(ζ₁)|.
    pub fn sup_at(&self, zeta: f64) -> f64 {
        (0..=self.nt).fold(0.0, |m, k| m.max(self.sup_level(zeta, k)))
    }
}

fn modal_datum(
    datum: &[Vec<f64>],
    nt: usize,
    basis: &Eigenbasis,
    mesh: &CrossSectionMesh,
) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let n = mesh.n_nodes();
    let p_max = basis.len();
    let mut coeffs = vec![vec![0.0; nt + 1]; p_max.saturating_sub(1)];
    let mut tail = vec![vec![0.0; n]; nt + 1];
    for k in 0..=nt {
        let Some(f) = datum.get(k) else { continue };
        if f.iter().all(|v| *v == 0.0) {
            continue;
        }
        let mut r = f.clone();
        for p in 1..p_max {
            let a = mesh.inner(f, &basis.vectors[p]);
            coeffs[p - 1][k] = a;
            r.iter_mut().zip(&basis.vectors[p]).for_each(|(x, th)| *x -= a * th);
        }
        tail[k] = r;
    }
    (coeffs, tail)
}

/// Π̃₁ from the nodal datum Φ̃₁ = −u₁(ℓ, ·, t).
pub fn pi1_tilde_build(data: &LayerData, basis: &Eigenbasis, mesh: &CrossSectionMesh) -> Result<ModalLayer> {
    if basis.len() < 2 {
        return Err(Error::Config("layer modes need P >= 1".into()));
    }
    let (coeffs, tail) = modal_datum(&data.phi1_tilde, data.nt, basis, mesh);
    let tail_bound = coeffs
        .last()
        .map_or(0.0, |c| c.iter().fold(0.0f64, |m, v| m.max(v.abs())));
    Ok(ModalLayer {
        nt: data.nt,
        ht: data.ht,
        lambdas: basis.values[1..].to_vec(),
        modes: basis.vectors[1..].to_vec(),
        coeffs,
        tail,
        tail_lambda: *basis.values.last().unwrap(),
        tail_bound,
        speeds: data.times().iter().map(|&t| data.speed(t)).collect(),
    })
}

/// Weights of ∫₀¹ e^{−α v} v dv and ∫₀¹ e^{−α v}(1−v) dv.
fn expo_weights(alpha: f64) -> (f64, f64) {
    if alpha < 1e-2 {
        let a2 = alpha * alpha;
        let a = 0.5 - alpha / 3.0 + a2 / 8.0 - a2 * alpha / 30.0;
        let b = 0.5 - alpha / 6.0 + a2 / 24.0 - a2 * alpha / 120.0;
        (a, b)
    } else {
        let e = (-alpha).exp();
        let a = (1.0 - e * (1.0 + alpha)) / (alpha * alpha);
        let b = (1.0 - e) / alpha - a;
        (a, b)
    }
}

/// Solution of X″ − k²X = R on [0, L] with X(0) = x0 and X → 0, by the
/// half-line Green's function; R piecewise linear on a grid of spacing h
/// and treated as zero beyond the last sample.
pub fn solve_half_line(k: f64, r: &[f64], h: f64, x0: f64) -> Vec<f64> {
    let n = r.len();
    let e = (-k * h).exp();
    let (a, b) = expo_weights(k * h);
    let mut i = vec![0.0; n];
    for j in 1..n {
        i[j] = e * i[j - 1] + h * (a * r[j - 1] + b * r[j]);
    }
    let mut jj = vec![0.0; n];
    for j in (0..n - 1).rev() {
        jj[j] = e * jj[j + 1] + h * (b * r[j] + a * r[j + 1]);
    }
    let j0 = jj[0];
    let mut decay = 1.0;
    let mut out = Vec::with_capacity(n);
    for j in 0..n {
        out.push(x0 * decay - (i[j] + jj[j] - decay * j0) / (2.0 * k));
        decay *= e;
    }
    out
}

/// Π₂ sampled on a ζ₁ grid: mean mode, P fluctuating modes, residual mode.
#[derive(Clone, Debug)]
pub struct Pi2Layer {
    pub nt: usize,
    pub ht: f64,
    pub hz: f64,
    pub nz: usize,
    /// Mean-mode profile c₀(ζ_j, t_k), [k][j]; multiplies the constant 1.
    pub mean: Vec<Vec<f64>>,
    /// Mode profiles c_p(ζ_j, t_k), [p][k][j]; empty when identically zero.
    pub profiles: Vec<Vec<Vec<f64>>>,
    pub modes: Vec<Vec<f64>>,
    /// Residual datum of Φ₂ outside the basis, decaying like mode P.
    pub tail: ModalLayer,
}

impl Pi2Layer {
    pub fn is_zero(&self) -> bool {
        self.mean.iter().flatten().all(|v| *v == 0.0)
            && self.profiles.iter().all(|p| p.is_empty())
            && self.tail.is_zero()
    }

    fn sample(&self, f: &[Vec<f64>], zeta: f64, t: f64) -> (f64, f64) {
        if zeta >= self.hz * self.nz as f64 {
            return (0.0, 0.0);
        }
        let (k0, wt) = lagrange4(self.nt, self.ht, t);
        let mut v = 0.0;
        let mut d = 0.0;
        for b in 0..4 {
            if wt[b] != 0.0 {
                v += wt[b] * interp1(&f[k0 + b], self.hz, zeta);
                d += wt[b] * interp1_d(&f[k0 + b], self.hz, zeta);
            }
        }
        (v, d)
    }

    /// Value and ∂_{ζ₁}.
    pub fn eval_both(&self, mesh: &CrossSectionMesh, zeta: f64, s: &Sampler, t: f64) -> (f64, f64) {
        let (mut v, mut d) = self.sample(&self.mean, zeta, t);
        for (p, prof) in self.profiles.iter().enumerate() {
            if prof.is_empty() {
                continue;
            }
            let th = mesh.eval(&self.modes[p], s);
            let (a, b) = self.sample(prof, zeta, t);
            v += th * a;
            d += th * b;
        }
        let (tv, td) = self.tail.eval_both(mesh, zeta, s, t);
        (v + tv, d + td)
    }

    pub fn grad_xi(&self, mesh: &CrossSectionMesh, zeta: f64, s: &Sampler, t: f64) -> [f64; 2] {
        let mut g = self.tail.grad_xi(mesh, zeta, s, t);
        for (p, prof) in self.profiles.iter().enumerate() {
            if prof.is_empty() {
                continue;
            }
            let (a, _) = self.sample(prof, zeta, t);
            let d = mesh.grad_recovered(&self.modes[p], s);
            g[0] += a * d[0];
            g[1] += a * d[1];
        }
        g
    }

    /// max over nodes of |Π₂(ζ₁, ·, t_k)|.
    pub fn sup_level(&self, zeta: f64, k: usize) -> f64 {
        let n = self.modes.first().map_or(0, |m| m.len());
        let t = k as f64 * self.ht;
        let (c0, _) = self.sample(&self.mean, zeta, t);
        let mut buf = vec![c0; n.max(1)];
        for (p, prof) in self.profiles.iter().enumerate() {
            if prof.is_empty() {
                continue;
            }
            let (a, _) = self.sample(prof, zeta, t);
            buf.iter_mut().zip(&self.modes[p]).for_each(|(b, x)| *b += a * x);
        }
        let e = (-kappa(self.tail.speeds[k], self.tail.tail_lambda) * zeta).exp();
        buf.iter_mut().zip(&self.tail.tail[k]).for_each(|(b, x)| *b += e * x);
        buf.iter().fold(0.0, |m, b| m.max(b.abs()))
    }

    pub fn sup_at(&self, zeta: f64) -> f64 {
        (0..=self.nt).fold(0.0, |m, k| m.max(self.sup_level(zeta, k)))
    }
}

/// Fine ζ₁ steps per stored sample in [`pi2_build`].
const PI2_REFINE: usize = 8;

/// Π₂ with right-hand side ∂_tΠ₁ and datum Φ₂ = −u₂(ℓ, ·, t).
pub fn pi2_build(
    data: &LayerData,
    basis: &Eigenbasis,
    mesh: &CrossSectionMesh,
    pi1: &ModalLayer,
    hz: f64,
) -> Result<Pi2Layer> {
    let nt = data.nt;
    let lz = data.lzeta;
    let nz = (lz / hz).ceil() as usize;
    let hz = lz / nz as f64;
    let nf = nz * PI2_REFINE;
    let hf = lz / nf as f64;
    let times = data.times();
    let zf: Vec<f64> = (0..=nf).map(|j| j as f64 * hf).collect();
    let speeds: Vec<f64> = times.iter().map(|&t| data.speed(t)).collect();
    let store = |x: &[f64]| -> Vec<f64> { x.iter().step_by(PI2_REFINE).copied().collect() };

    // time derivative of a family f(ζ_j, t_k) along k, fourth order
    let dt_family = |f: &dyn Fn(usize, f64) -> f64| -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; nf + 1]; nt + 1];
        let mut col = vec![0.0; nt + 1];
        for (j, &z) in zf.iter().enumerate() {
            for k in 0..=nt {
                col[k] = f(k, z);
            }
            let d = diff1(&col, data.ht);
            for k in 0..=nt {
                out[k][j] = d[k];
            }
        }
        out
    };

    // mean mode: c'' + v c' = ∂_tΠ̂₁, c(0) = ⟨Φ₂⟩
    let r0 = dt_family(&|k, z| pi1_hat_eval(z, times[k], data));
    let mut mean = Vec::with_capacity(nt + 1);
    for k in 0..=nt {
        let v = speeds[k];
        let c0 = data.phi2.get(k).map_or(0.0, |f| mesh.mean(f));
        if c0 == 0.0 && r0[k].iter().all(|x| *x == 0.0) {
            mean.push(vec![0.0; nz + 1]);
            continue;
        }
        let rx: Vec<f64> = zf.iter().zip(&r0[k]).map(|(z, r)| (0.5 * v * z).exp() * r).collect();
        let x = solve_half_line(0.5 * v, &rx, hf, c0);
        let c: Vec<f64> = zf.iter().zip(&x).map(|(z, x)| (-0.5 * v * z).exp() * x).collect();
        mean.push(store(&c));
    }

    // fluctuating modes
    let (c_phi2, tail2) = modal_datum(&data.phi2, nt, basis, mesh);
    let mut profiles = vec![];
    for p in 0..pi1.modes.len() {
        let lam = pi1.lambdas[p];
        let a1 = &pi1.coeffs[p];
        let a2 = &c_phi2[p];
        if a1.iter().all(|v| *v == 0.0) && a2.iter().all(|v| *v == 0.0) {
            profiles.push(vec![]);
            continue;
        }
        let rp = dt_family(&|k, z| a1[k] * (-kappa(speeds[k], lam) * z).exp());
        let mut prof = Vec::with_capacity(nt + 1);
        for k in 0..=nt {
            let v = speeds[k];
            let mu = 0.25 * v * v + lam;
            let rx: Vec<f64> = zf.iter().zip(&rp[k]).map(|(z, r)| (0.5 * v * z).exp() * r).collect();
            let x = solve_half_line(mu.sqrt(), &rx, hf, a2[k]);
            let c: Vec<f64> = zf.iter().zip(&x).map(|(z, x)| (-0.5 * v * z).exp() * x).collect();
            prof.push(store(&c));
        }
        profiles.push(prof);
    }
    let tail = ModalLayer {
        nt,
        ht: data.ht,
        lambdas: vec![],
        modes: vec![],
        coeffs: vec![],
        tail: tail2,
        tail_lambda: *basis.values.last().unwrap(),
        tail_bound: 0.0,
        speeds: speeds.clone(),
    };
    let out = Pi2Layer {
        nt,
        ht: data.ht,
        hz,
        nz,
        mean,
        profiles,
        modes: basis.vectors[1..].to_vec(),
        tail,
    };
    if !out.is_zero() {
        let rate = decay_rate(&|z| out.sup_at(z), (1.0, 0.5 * lz), 24);
        if let DecayFit::Rate(k) = rate {
            if !(k > 0.0) {
                return Err(Error::Numeric(format!("second layer term does not decay (rate {k:.3e})")));
            }
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DecayFit {
    Rate(f64),
    NumericallyZero,
}

/// Least-squares decay rate of log sup|term| over ζ₁ in `window`.
pub fn decay_rate(sup: &dyn Fn(f64) -> f64, window: (f64, f64), samples: usize) -> DecayFit {
    let n = samples.max(10);
    let mut xs = vec![];
    let mut ys = vec![];
    for j in 0..n {
        let z = window.0 + (window.1 - window.0) * j as f64 / (n - 1) as f64;
        let v = sup(z);
        if v > 1e-14 {
            xs.push(z);
            ys.push(v.ln());
        }
    }
    if xs.len() < 2 {
        return DecayFit::NumericallyZero;
    }
    let (slope, _, _) = fit_line(&xs, &ys);
    DecayFit::Rate(-slope)
}

/// max |Π_k| at t = 0 over a ζ₁ sample grid, for (Π₀, Π₁, Π₂).
pub fn initial_values(data: &LayerData, pi1: Option<&ModalLayer>, pi2: Option<&Pi2Layer>) -> [f64; 3] {
    let mut out = [0.0f64; 3];
    let zs: Vec<f64> = (0..=100).map(|j| j as f64 * data.lzeta / 100.0).collect();
    for &z in &zs {
        out[0] = out[0].max(pi0_eval(z, 0.0, data).abs());
        out[1] = out[1].max(pi1_hat_eval(z, 0.0, data).abs());
        if let Some(p1) = pi1 {
            out[1] = out[1].max(p1.sup_level(z, 0));
        }
        if let Some(p2) = pi2 {
            out[2] = out[2].max(p2.sup_level(z, 0));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn half_line_synthetic() {
        // X'' − X = e^{−2ζ}, X(0) = 0: X = (e^{−2ζ} − e^{−ζ})/3
        let h = 0.0025;
        let n = (40.0 / h) as usize;
        let r: Vec<f64> = (0..=n).map(|j| (-2.0 * j as f64 * h).exp()).collect();
        let x = solve_half_line(1.0, &r, h, 0.0);
        let err = (0..=n)
            .map(|j| {
                let z = j as f64 * h;
                (x[j] - ((-2.0 * z).exp() - (-z).exp()) / 3.0).abs()
            })
            .fold(0.0, f64::max);
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn half_line_boundary_value() {
        let r = vec![0.0; 101];
        let x = solve_half_line(2.0, &r, 0.1, 1.5);
        for (j, v) in x.iter().enumerate() {
            assert!((v - 1.5 * (-0.2 * j as f64).exp()).abs() < 1e-12);
        }
    }

    #[test]
    fn expo_weights_series_matches_closed_form() {
        let alpha: f64 = 0.0099;
        let e = (-alpha).exp();
        let a = (1.0 - e * (1.0 + alpha)) / (alpha * alpha);
        let b = (1.0 - e) / alpha - a;
        let (sa, sb) = expo_weights(alpha);
        assert!((a - sa).abs() < 1e-10 && (b - sb).abs() < 1e-10);
    }

    #[test]
    fn pure_exponential_rate() {
        let f = |z: f64| 3.0 * (-1.0 * z).exp();
        match decay_rate(&f, (0.0, 10.0), 20) {
            DecayFit::Rate(k) => assert!((k - 1.0).abs() < 1e-6),
            DecayFit::NumericallyZero => panic!(),
        }
        assert_eq!(decay_rate(&|_| 0.0, (0.0, 1.0), 10), DecayFit::NumericallyZero);
    }
}
