//! Regular part plus boundary layers: the leading, first-order and full
//! approximations.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::blayer::{
    pi0_dzeta, pi0_eval, pi1_hat_dzeta, pi1_hat_eval, pi1_tilde_build, pi2_build, LayerData,
    ModalLayer, Pi2Layer,
};
use crate::cell::{build_mesh, build_u1, build_u2, neumann_eigenbasis, CellField, CrossSectionMesh, Eigenbasis, Sampler};
use crate::error::{Error, Result};
use crate::interp::Grid2;
use crate::limit::{solve_limit, solve_w1, LimitSolution};
use crate::model::{smoothstep5, ModelConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Order {
    Leading,
    First,
    Full,
}

impl FromStr for Order {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "leading" => Ok(Order::Leading),
            "first" => Ok(Order::First),
            "full" => Ok(Order::Full),
            _ => Err(Error::parse("order", format!("unknown order `{s}`"))),
        }
    }
}

impl fmt::Display for Order {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Order::Leading => "leading",
            Order::First => "first",
            Order::Full => "full",
        })
    }
}

/// Quintic cut-off: 0 for x₁ ≤ ℓ−δ₁, 1 for x₁ ≥ ℓ−δ₁/2. Returns (χ, χ′).
pub fn cutoff_chi(x: f64, length: f64, delta1: f64) -> (f64, f64) {
    let h = 0.5 * delta1;
    let (v, d, _) = smoothstep5((x - (length - delta1)) / h);
    (v, d / h)
}

/// Only β = 1 and β ≥ 3 have a complete set of correctors.
fn check_beta(cfg: &ModelConfig) -> Result<()> {
    if cfg.beta > 1.0 && cfg.beta < 3.0 {
        return Err(Error::Config(format!(
            "beta = {} lies in (1,3), where the intermediate correctors are not available",
            cfg.beta
        )));
    }
    Ok(())
}

/// ε-independent ingredients of the approximations.
#[derive(Clone, Debug)]
pub struct Parts {
    pub cfg: ModelConfig,
    pub order: Order,
    pub lim: LimitSolution,
    pub mesh: CrossSectionMesh,
    pub w1: Option<Grid2>,
    pub w1x: Option<Grid2>,
    pub u1: Option<CellField>,
    pub u2: Option<CellField>,
    pub basis: Option<Eigenbasis>,
    pub layer: LayerData,
    pub pi1_tilde: Option<ModalLayer>,
    pub pi2: Option<Pi2Layer>,
}

impl Parts {
    /// Run limit, cell and layer stages up to what `order` requires.
    pub fn build(cfg: &ModelConfig, order: Order) -> Result<Self> {
        let lim = solve_limit(cfg, &cfg.grid)?;
        Self::from_limit(cfg, order, lim)
    }

    pub fn from_limit(cfg: &ModelConfig, order: Order, lim: LimitSolution) -> Result<Self> {
        check_beta(cfg)?;
        let mesh = build_mesh(&cfg.cross_section, cfg.grid.nxi)?;
        if order == Order::Leading {
            let layer = LayerData::new(cfg, &lim.w0, None, None, None);
            return Ok(Parts {
                cfg: cfg.clone(),
                order,
                lim,
                mesh,
                w1: None,
                w1x: None,
                u1: None,
                u2: None,
                basis: None,
                layer,
                pi1_tilde: None,
                pi2: None,
            });
        }
        let u1 = build_u1(cfg, &lim.w0, &mesh)?;
        let w1 = solve_w1(cfg, &lim, &u1, &mesh)?;
        Self::from_correctors(cfg, order, lim, mesh, u1, w1, None)
    }

    /// Finish from precomputed correctors; `u2` is built if needed and absent.
    pub fn from_correctors(
        cfg: &ModelConfig,
        order: Order,
        lim: LimitSolution,
        mesh: CrossSectionMesh,
        u1: CellField,
        w1: Grid2,
        u2: Option<CellField>,
    ) -> Result<Self> {
        check_beta(cfg)?;
        let u2 = if order == Order::Full {
            match u2 {
                Some(u) => Some(u),
                None => Some(build_u2(cfg, &lim.w0, &lim.w0x, &w1, &u1, &mesh)?),
            }
        } else {
            None
        };
        let basis = neumann_eigenbasis(&mesh, cfg.grid.modes + 1)?;
        let layer = LayerData::new(cfg, &lim.w0, Some(&w1), Some(&u1), u2.as_ref());
        let pi1 = pi1_tilde_build(&layer, &basis, &mesh)?;
        let pi2 = if order == Order::Full {
            Some(pi2_build(&layer, &basis, &mesh, &pi1, 0.02)?)
        } else {
            None
        };
        Ok(Parts {
            cfg: cfg.clone(),
            order,
            w1x: Some(w1.dx()),
            w1: Some(w1),
            lim,
            mesh,
            u1: Some(u1),
            u2,
            basis: Some(basis),
            layer,
            pi1_tilde: Some(pi1),
            pi2,
        })
    }

    pub fn horizon(&self) -> f64 {
        self.lim.t1_observed
    }
}

/// Approximation of a given order for one ε.
#[derive(Clone, Copy)]
pub struct ApproximationField<'a> {
    pub parts: &'a Parts,
    pub eps: f64,
    pub order: Order,
    /// ε^{(1+β)/2}.
    pub layer_scale: f64,
}

/// Value and physical gradient (∂_{x₁}, ∂_{x₂}, ∂_{x₃}).
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Sample {
    pub value: f64,
    pub grad: [f64; 3],
}

pub fn assemble(parts: &Parts, eps: f64, order: Order) -> Result<ApproximationField<'_>> {
    if order > parts.order {
        return Err(Error::Dependency(format!(
            "parts built for order {} cannot assemble order {order}",
            parts.order
        )));
    }
    if !(eps > 0.0) {
        return Err(Error::Config("epsilon must be positive".into()));
    }
    Ok(ApproximationField {
        parts,
        eps,
        order,
        layer_scale: parts.cfg.layer_scale(eps),
    })
}

impl ApproximationField<'_> {
    pub fn sampler(&self, xi: [f64; 2]) -> Sampler {
        self.parts.mesh.locate(xi)
    }

    /// Evaluate at (x₁, ξ = x̄₁/ε, t).
    pub fn eval(&self, x: f64, s: &Sampler, t: f64) -> f64 {
        self.sample(x, s, t, false).value
    }

    /// Value and gradient at (x₁, ξ, t). The transversal components carry
    /// the 1/ε factor of the internal variable.
    pub fn sample(&self, x: f64, s: &Sampler, t: f64, with_grad: bool) -> Sample {
        let p = self.parts;
        let cfg = &p.cfg;
        let eps = self.eps;
        let mut v = p.lim.w0.eval(x, t);
        let mut gx = if with_grad { p.lim.w0x.eval(x, t) } else { 0.0 };
        let mut gxi = [0.0; 2];
        let (chi, chi_d) = cutoff_chi(x, cfg.length, cfg.delta1);
        let zeta = (cfg.length - x).max(0.0) / self.layer_scale;
        let dzeta_dx = -1.0 / self.layer_scale;
        let mut layer = 0.0;
        let mut layer_z = 0.0;
        let mut layer_xi = [0.0; 2];
        if chi > 0.0 || chi_d != 0.0 {
            layer += pi0_eval(zeta, t, &p.layer);
            layer_z += pi0_dzeta(zeta, t, &p.layer);
        }
        if self.order >= Order::First {
            let w1 = p.w1.as_ref().expect("first-order parts");
            let u1 = p.u1.as_ref().expect("first-order parts");
            v += eps * w1.eval(x, t);
            let (uv, ux, ug) = u1.eval_full(&p.mesh, x, t, s);
            v += eps * uv;
            if with_grad {
                gx += eps * (p.w1x.as_ref().unwrap().eval(x, t) + ux);
                gxi[0] += eps * ug[0];
                gxi[1] += eps * ug[1];
            }
            if chi > 0.0 || chi_d != 0.0 {
                let pt = p.pi1_tilde.as_ref().unwrap();
                let (tv, tz) = pt.eval_both(&p.mesh, zeta, s, t);
                layer += eps * (pi1_hat_eval(zeta, t, &p.layer) + tv);
                layer_z += eps * (pi1_hat_dzeta(zeta, t, &p.layer) + tz);
                if with_grad {
                    let g = pt.grad_xi(&p.mesh, zeta, s, t);
                    layer_xi[0] += eps * g[0];
                    layer_xi[1] += eps * g[1];
                }
            }
        }
        if self.order == Order::Full {
            let u2 = p.u2.as_ref().expect("full parts");
            let (uv, ux, ug) = u2.eval_full(&p.mesh, x, t, s);
            let e2 = eps * eps;
            v += e2 * uv;
            if with_grad {
                gx += e2 * ux;
                gxi[0] += e2 * ug[0];
                gxi[1] += e2 * ug[1];
            }
            if chi > 0.0 || chi_d != 0.0 {
                let p2 = p.pi2.as_ref().unwrap();
                let (pv, pz) = p2.eval_both(&p.mesh, zeta, s, t);
                layer += e2 * pv;
                layer_z += e2 * pz;
                if with_grad {
                    let g = p2.grad_xi(&p.mesh, zeta, s, t);
                    layer_xi[0] += e2 * g[0];
                    layer_xi[1] += e2 * g[1];
                }
            }
        }
        v += chi * layer;
        if with_grad {
            gx += chi_d * layer + chi * layer_z * dzeta_dx;
            gxi[0] += chi * layer_xi[0];
            gxi[1] += chi * layer_xi[1];
        }
        Sample {
            value: v,
            grad: [gx, gxi[0] / eps, gxi[1] / eps],
        }
    }
}

/// Gradient at (x, ξ, t).
pub fn gradient(field: &ApproximationField, x: f64, xi: [f64; 2], t: f64) -> Result<[f64; 3]> {
    let cfg = &field.parts.cfg;
    if !(0.0..=cfg.length).contains(&x) || !(0.0..=field.parts.horizon()).contains(&t) {
        return Err(Error::Config(format!("point ({x}, {t}) outside the cylinder")));
    }
    let s = field.sampler(xi);
    Ok(field.sample(x, &s, t, true).grad)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BoundaryFit {
    /// max |𝔄| at t = 0.
    pub initial: f64,
    /// max |𝔄| at x₁ = 0.
    pub left: f64,
    /// max |𝔄 − q_ℓ| at x₁ = ℓ.
    pub right: f64,
}

/// Residuals of the initial and end conditions over sample grids.
pub fn check_boundary_fit(field: &ApproximationField, samples: usize) -> BoundaryFit {
    let p = field.parts;
    let cfg = &p.cfg;
    let n = samples.max(4);
    let t1 = p.horizon();
    let samplers: Vec<Sampler> = p
        .mesh
        .nodes
        .iter()
        .step_by((p.mesh.n_nodes() / 24).max(1))
        .map(|&xi| field.sampler(xi))
        .collect();
    let mut fit = BoundaryFit::default();
    for j in 0..=n {
        let x = cfg.length * j as f64 / n as f64;
        let t = t1 * j as f64 / n as f64;
        for s in &samplers {
            fit.initial = fit.initial.max(field.eval(x, s, 0.0).abs());
            fit.left = fit.left.max(field.eval(0.0, s, t).abs());
            fit.right = fit.right.max((field.eval(cfg.length, s, t) - cfg.boundary.q(t)).abs());
        }
    }
    fit
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cutoff_values() {
        let (l, d) = (1.0, 0.1);
        assert_eq!(cutoff_chi(l, l, d).0, 1.0);
        assert_eq!(cutoff_chi(l - d, l, d).0, 0.0);
        assert!((cutoff_chi(l - 0.75 * d, l, d).0 - 0.5).abs() < 1e-15);
        assert_eq!(cutoff_chi(0.3, l, d), (0.0, 0.0));
    }

    #[test]
    fn cutoff_monotone() {
        let mut prev = 0.0;
        for j in 0..=200 {
            let x = 0.85 + 0.15 * j as f64 / 200.0;
            let (v, d) = cutoff_chi(x, 1.0, 0.1);
            assert!(v >= prev && d >= 0.0);
            prev = v;
        }
    }

    #[test]
    fn order_parse_roundtrip() {
        for o in [Order::Leading, Order::First, Order::Full] {
            assert_eq!(o.to_string().parse::<Order>().unwrap(), o);
        }
        assert!("second".parse::<Order>().is_err());
    }
}
