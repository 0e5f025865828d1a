//! Problem data: geometry, velocity field, interaction function, boundary
//! datum, plus configuration loading and the sampled assumption checks.
//!
//! All data functions come from a fixed catalog with analytic partials.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

/// Quintic smoothstep on [0,1] with its first two derivatives.
pub fn smoothstep5(u: f64) -> (f64, f64, f64) {
    if u <= 0.0 {
        (0.0, 0.0, 0.0)
    } else if u >= 1.0 {
        (1.0, 0.0, 0.0)
    } else {
        let u2 = u * u;
        let u3 = u2 * u;
        (
            u3 * (10.0 - 15.0 * u + 6.0 * u2),
            30.0 * u2 * (1.0 - u) * (1.0 - u),
            60.0 * u * (1.0 - u) * (1.0 - 2.0 * u),
        )
    }
}

/// Polynomial bump `((4(x-a)(b-x))/(b-a)^2)^4` on (a,b), zero outside.
/// Returns value and first two derivatives.
pub fn bump(x: f64, a: f64, b: f64) -> (f64, f64, f64) {
    if x <= a || x >= b {
        return (0.0, 0.0, 0.0);
    }
    let w2 = (b - a) * (b - a);
    let m = 4.0 * (x - a) * (b - x) / w2;
    let m1 = 4.0 * (a + b - 2.0 * x) / w2;
    let m2 = -8.0 / w2;
    let m_2 = m * m;
    (
        m_2 * m_2,
        4.0 * m_2 * m * m1,
        12.0 * m_2 * m1 * m1 + 4.0 * m_2 * m * m2,
    )
}

/// Cubic onset `(t/T)^p` with derivatives up to second order.
fn power_onset(t: f64, horizon: f64, p: f64) -> (f64, f64, f64) {
    let u = (t / horizon).max(0.0);
    let h = horizon;
    let v = u.powf(p);
    let d1 = if p >= 1.0 && u > 0.0 {
        p * u.powf(p - 1.0) / h
    } else if p == 1.0 {
        1.0 / h
    } else {
        0.0
    };
    let d2 = if p > 2.0 && u > 0.0 {
        p * (p - 1.0) * u.powf(p - 2.0) / (h * h)
    } else if p == 2.0 {
        2.0 / (h * h)
    } else {
        0.0
    };
    (v, d1, d2)
}

/// Geometry shared by catalog functions.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Geom {
    pub length: f64,
    pub horizon: f64,
    pub delta1: f64,
    /// Radial scale of the cross-section (disk radius).
    pub radius: f64,
    /// |ϖ| / |∂ϖ| of the exact cross-section.
    pub area_per_perimeter: f64,
}

impl Geom {
    /// Interior support (a,b) of the axial bump shared by the catalog.
    pub fn bump_support(&self) -> (f64, f64) {
        (self.delta1, self.length - self.delta1)
    }

    pub fn eta(&self, x: f64) -> (f64, f64, f64) {
        let (a, b) = self.bump_support();
        bump(x, a, b)
    }

    pub fn tau(&self, t: f64) -> (f64, f64, f64) {
        power_onset(t, self.horizon, 3.0)
    }
}

// ---------------------------------------------------------------------------
// Cross-section

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum CrossSectionSpec {
    Disk { radius: f64 },
    Polygon { vertices: Vec<[f64; 2]> },
}

/// Quadrature on the cross-section boundary.
#[derive(Clone, Debug)]
pub struct BoundaryQuadrature {
    pub points: Vec<[f64; 2]>,
    pub normals: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
    /// |ϖ| used for normalizing boundary averages.
    pub area: f64,
}

impl CrossSectionSpec {
    pub fn area(&self) -> f64 {
        match self {
            CrossSectionSpec::Disk { radius } => std::f64::consts::PI * radius * radius,
            CrossSectionSpec::Polygon { vertices } => polygon_area(vertices).abs(),
        }
    }

    pub fn perimeter(&self) -> f64 {
        match self {
            CrossSectionSpec::Disk { radius } => 2.0 * std::f64::consts::PI * radius,
            CrossSectionSpec::Polygon { vertices } => {
                let n = vertices.len();
                (0..n)
                    .map(|i| dist(vertices[i], vertices[(i + 1) % n]))
                    .sum()
            }
        }
    }

    /// Largest distance from the origin to the boundary.
    pub fn outer_radius(&self) -> f64 {
        match self {
            CrossSectionSpec::Disk { radius } => *radius,
            CrossSectionSpec::Polygon { vertices } => vertices
                .iter()
                .map(|v| (v[0] * v[0] + v[1] * v[1]).sqrt())
                .fold(0.0, f64::max),
        }
    }

    pub fn check(&self) -> Result<()> {
        match self {
            CrossSectionSpec::Disk { radius } => {
                if !(*radius > 0.0) || !radius.is_finite() {
                    return Err(Error::Config("disk radius must be positive".into()));
                }
            }
            CrossSectionSpec::Polygon { vertices } => {
                let n = vertices.len();
                if n < 3 {
                    return Err(Error::Config("polygon needs at least 3 vertices".into()));
                }
                if polygon_area(vertices) <= 0.0 {
                    return Err(Error::Config(
                        "polygon must be counter-clockwise with positive area".into(),
                    ));
                }
                for i in 0..n {
                    let a = vertices[i];
                    let b = vertices[(i + 1) % n];
                    // star-shaped about the origin with increasing angle
                    if a[0] * b[1] - a[1] * b[0] <= 0.0 {
                        return Err(Error::Config(format!(
                            "degenerate polygon: edge {i} is not visible from the origin"
                        )));
                    }
                }
                for i in 0..n {
                    for j in i + 1..n {
                        if j == i + 1 || (i == 0 && j == n - 1) {
                            continue;
                        }
                        if segments_cross(
                            vertices[i],
                            vertices[(i + 1) % n],
                            vertices[j],
                            vertices[(j + 1) % n],
                        ) {
                            return Err(Error::Config(format!(
                                "degenerate polygon: edges {i} and {j} intersect"
                            )));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Midpoint quadrature with `n` panels (per edge for polygons).
    pub fn fine_quadrature(&self, n: usize) -> BoundaryQuadrature {
        let mut q = BoundaryQuadrature {
            points: vec![],
            normals: vec![],
            weights: vec![],
            area: self.area(),
        };
        match self {
            CrossSectionSpec::Disk { radius } => {
                let dth = 2.0 * std::f64::consts::PI / n as f64;
                for k in 0..n {
                    let th = (k as f64 + 0.5) * dth;
                    let (s, c) = th.sin_cos();
                    q.points.push([radius * c, radius * s]);
                    q.normals.push([c, s]);
                    q.weights.push(radius * dth);
                }
            }
            CrossSectionSpec::Polygon { vertices } => {
                let m = vertices.len();
                for i in 0..m {
                    let a = vertices[i];
                    let b = vertices[(i + 1) % m];
                    let len = dist(a, b);
                    let nrm = [(b[1] - a[1]) / len, -(b[0] - a[0]) / len];
                    for k in 0..n {
                        let u = (k as f64 + 0.5) / n as f64;
                        q.points
                            .push([a[0] + u * (b[0] - a[0]), a[1] + u * (b[1] - a[1])]);
                        q.normals.push(nrm);
                        q.weights.push(len / n as f64);
                    }
                }
            }
        }
        q
    }
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

fn polygon_area(v: &[[f64; 2]]) -> f64 {
    let n = v.len();
    0.5 * (0..n)
        .map(|i| {
            let a = v[i];
            let b = v[(i + 1) % n];
            a[0] * b[1] - a[1] * b[0]
        })
        .sum::<f64>()
}

fn segments_cross(a: [f64; 2], b: [f64; 2], c: [f64; 2], d: [f64; 2]) -> bool {
    let o = |p: [f64; 2], q: [f64; 2], r: [f64; 2]| {
        (q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0])
    };
    let d1 = o(c, d, a);
    let d2 = o(c, d, b);
    let d3 = o(a, b, c);
    let d4 = o(a, b, d);
    d1 * d2 < 0.0 && d3 * d4 < 0.0
}

// ---------------------------------------------------------------------------
// Velocity

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "catalog", content = "params", rename_all = "kebab-case")]
pub enum VelocityCatalog {
    /// v1 ≡ c, no transversal component.
    Uniform { c: f64 },
    /// v1 = c0 + c·m(x1)·s/(1+|s|), with m tapering to 0 before ℓ−δ1.
    Saturating { c: f64, c0: f64 },
    /// v1 = s; violates the inflow condition at s = 0.
    Identity {},
    /// v1 ≡ c plus radial field amp·ρ(1−ρ/r0)·ψ(x1)·τ(t) ê_r.
    RadialInflow { c: f64, amp: f64 },
}

/// v1 and its partials at one point.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct V1 {
    pub v: f64,
    pub s: f64,
    pub x: f64,
    pub t: f64,
    pub ss: f64,
    pub sx: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct VelocityField {
    pub catalog: VelocityCatalog,
    pub geom: Geom,
}

impl VelocityField {
    pub fn v1(&self, s: f64, x: f64, t: f64) -> f64 {
        self.partials(s, x, t).v
    }

    pub fn partials(&self, s: f64, x: f64, _t: f64) -> V1 {
        match self.catalog {
            VelocityCatalog::Uniform { c } | VelocityCatalog::RadialInflow { c, .. } => V1 {
                v: c,
                ..V1::default()
            },
            VelocityCatalog::Identity {} => V1 {
                v: s,
                s: 1.0,
                ..V1::default()
            },
            VelocityCatalog::Saturating { c, c0 } => {
                let g = &self.geom;
                let x0 = g.length - 2.0 * g.delta1;
                let (h, h1, _) = smoothstep5((x - x0) / g.delta1);
                let m = 1.0 - h;
                let m1 = -h1 / g.delta1;
                let a = 1.0 + s.abs();
                let sat = s / a;
                let sat_s = 1.0 / (a * a);
                let sat_ss = -2.0 * s.signum() / (a * a * a);
                V1 {
                    v: c0 + c * m * sat,
                    s: c * m * sat_s,
                    x: c * m1 * sat,
                    t: 0.0,
                    ss: c * m * sat_ss,
                    sx: c * m1 * sat_s,
                }
            }
        }
    }

    /// Λ = v1 + s ∂_s v1.
    pub fn lambda(&self, s: f64, x: f64, t: f64) -> f64 {
        let p = self.partials(s, x, t);
        p.v + s * p.s
    }

    /// Returns (Λ, ∂_s Λ, ∂_{x1} Λ).
    pub fn lambda_partials(&self, s: f64, x: f64, t: f64) -> (f64, f64, f64) {
        let p = self.partials(s, x, t);
        (p.v + s * p.s, 2.0 * p.s + s * p.ss, p.x + s * p.sx)
    }

    pub fn has_transversal(&self) -> bool {
        matches!(self.catalog, VelocityCatalog::RadialInflow { amp, .. } if amp != 0.0)
    }

    /// Transversal velocity v̄(x1, ξ, t).
    pub fn vbar(&self, x: f64, xi: [f64; 2], t: f64) -> [f64; 2] {
        match self.catalog {
            VelocityCatalog::RadialInflow { amp, .. } => {
                let g = &self.geom;
                let (psi, _, _) = g.eta(x);
                let (tau, _, _) = g.tau(t);
                // amp ρ(1-ρ/r0) ê_r = amp (1-ρ/r0) ξ
                let rho = (xi[0] * xi[0] + xi[1] * xi[1]).sqrt();
                let f = amp * psi * tau * (1.0 - rho / g.radius);
                [f * xi[0], f * xi[1]]
            }
            _ => [0.0, 0.0],
        }
    }

    /// ∇_ξ · v̄.
    pub fn div_vbar(&self, x: f64, xi: [f64; 2], t: f64) -> f64 {
        match self.catalog {
            VelocityCatalog::RadialInflow { amp, .. } => {
                let g = &self.geom;
                let (psi, _, _) = g.eta(x);
                let (tau, _, _) = g.tau(t);
                let rho = (xi[0] * xi[0] + xi[1] * xi[1]).sqrt();
                amp * psi * tau * (2.0 - 3.0 * rho / g.radius)
            }
            _ => 0.0,
        }
    }

    /// Radial component v_r when the field is radial.
    pub fn radial(&self, x: f64, rho: f64, t: f64) -> f64 {
        let v = self.vbar(x, [rho, 0.0], t);
        v[0]
    }
}

// ---------------------------------------------------------------------------
// Interaction

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "catalog", content = "params", rename_all = "kebab-case")]
pub enum InteractionCatalog {
    Zero {},
    /// φ = −k·c·η(x1)τ(t), so that φ̂ = −k η τ.
    BumpSource { k: f64 },
    /// φ = −c·η(x1)τ(t)(k + b s).
    LinearUptake { k: f64, b: f64 },
    /// φ = −c·η(x1)τ(t)(k + a ξ2); not axisymmetric.
    Angular { k: f64, a: f64 },
    /// φ = −k·c·η(x1); does not vanish at t = 0.
    Stationary { k: f64 },
}

/// φ and its partials at one point.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Phi {
    pub phi: f64,
    pub s: f64,
    pub x: f64,
    pub t: f64,
    pub tt: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct InteractionFunction {
    pub catalog: InteractionCatalog,
    pub geom: Geom,
}

impl InteractionFunction {
    pub fn eval(&self, s: f64, x: f64, xi: [f64; 2], t: f64) -> Phi {
        let g = &self.geom;
        let c = g.area_per_perimeter;
        let (e, e1, _) = g.eta(x);
        let (tau, tau1, tau2) = g.tau(t);
        match self.catalog {
            InteractionCatalog::Zero {} => Phi::default(),
            InteractionCatalog::BumpSource { k } => Phi {
                phi: -k * c * e * tau,
                s: 0.0,
                x: -k * c * e1 * tau,
                t: -k * c * e * tau1,
                tt: -k * c * e * tau2,
            },
            InteractionCatalog::LinearUptake { k, b } => {
                let m = k + b * s;
                Phi {
                    phi: -c * e * tau * m,
                    s: -c * e * tau * b,
                    x: -c * e1 * tau * m,
                    t: -c * e * tau1 * m,
                    tt: -c * e * tau2 * m,
                }
            }
            InteractionCatalog::Angular { k, a } => {
                let m = k + a * xi[1];
                Phi {
                    phi: -c * e * tau * m,
                    s: 0.0,
                    x: -c * e1 * tau * m,
                    t: -c * e * tau1 * m,
                    tt: -c * e * tau2 * m,
                }
            }
            InteractionCatalog::Stationary { k } => Phi {
                phi: -k * c * e,
                s: 0.0,
                x: -k * c * e1,
                t: 0.0,
                tt: 0.0,
            },
        }
    }

    pub fn phi(&self, s: f64, x: f64, xi: [f64; 2], t: f64) -> f64 {
        self.eval(s, x, xi, t).phi
    }

    /// ∇_ξ φ.
    pub fn grad_xi(&self, _s: f64, x: f64, _xi: [f64; 2], t: f64) -> [f64; 2] {
        match self.catalog {
            InteractionCatalog::Angular { a, .. } => {
                let g = &self.geom;
                let (e, _, _) = g.eta(x);
                let (tau, _, _) = g.tau(t);
                [0.0, -g.area_per_perimeter * e * tau * a]
            }
            _ => [0.0, 0.0],
        }
    }

    /// Boundary average (1/|ϖ|)∮φ dσ and its s-derivative.
    pub fn boundary_mean(&self, s: f64, x: f64, t: f64, q: &BoundaryQuadrature) -> (f64, f64) {
        let mut a = 0.0;
        let mut b = 0.0;
        for (p, w) in q.points.iter().zip(&q.weights) {
            let f = self.eval(s, x, *p, t);
            a += w * f.phi;
            b += w * f.s;
        }
        (a / q.area, b / q.area)
    }
}

// ---------------------------------------------------------------------------
// Boundary datum

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "catalog", content = "params", rename_all = "kebab-case")]
pub enum BoundaryCatalog {
    Zero {},
    /// q = a (t/T)^3.
    Ramp { a: f64 },
    /// q = a (t/T)^p.
    Power { a: f64, p: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryData {
    pub catalog: BoundaryCatalog,
    pub geom: Geom,
}

impl BoundaryData {
    /// (q, q′, q″) at t.
    pub fn eval(&self, t: f64) -> (f64, f64, f64) {
        match self.catalog {
            BoundaryCatalog::Zero {} => (0.0, 0.0, 0.0),
            BoundaryCatalog::Ramp { a } => {
                let (v, d1, d2) = power_onset(t, self.geom.horizon, 3.0);
                (a * v, a * d1, a * d2)
            }
            BoundaryCatalog::Power { a, p } => {
                let (v, d1, d2) = power_onset(t, self.geom.horizon, p);
                (a * v, a * d1, a * d2)
            }
        }
    }

    pub fn q(&self, t: f64) -> f64 {
        self.eval(t).0
    }
}

// ---------------------------------------------------------------------------
// Grids and configuration

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub nx: usize,
    pub nt: usize,
    pub nxi: usize,
    pub modes: usize,
    /// Layer-variable domain length; `None` means 40/ς0.
    pub lzeta: Option<f64>,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            nx: 100,
            nt: 100,
            nxi: 32,
            modes: 24,
            lzeta: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TimeScheme {
    /// Backward Euler diffusion, Heun transport.
    Be,
    /// Crank–Nicolson diffusion, Heun transport.
    Cn,
}

/// Resolution of the direct solver.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferenceSpec {
    pub nx: usize,
    pub nr: usize,
    /// Step count; `None` picks the CFL-limited count.
    pub nt: Option<usize>,
    pub scheme: TimeScheme,
    pub picard: usize,
    pub snapshots: usize,
    pub cfl: f64,
}

impl Default for ReferenceSpec {
    fn default() -> Self {
        ReferenceSpec {
            nx: 2000,
            nr: 16,
            nt: None,
            scheme: TimeScheme::Be,
            picard: 1,
            snapshots: 100,
            cfl: 0.4,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub name: String,
    pub length: f64,
    pub horizon: f64,
    pub delta1: f64,
    pub cross_section: CrossSectionSpec,
    pub velocity: VelocityField,
    pub interaction: InteractionFunction,
    pub boundary: BoundaryData,
    pub epsilons: Vec<f64>,
    pub beta: f64,
    pub grid: GridSpec,
    pub reference: ReferenceSpec,
    pub s_max: f64,
}

impl ModelConfig {
    pub fn geom(&self) -> Geom {
        self.velocity.geom
    }

    /// Right-end speed 𝚟₁(t).
    pub fn right_speed(&self, t: f64) -> f64 {
        self.velocity.v1(0.0, self.length, t)
    }

    /// Lower bound ς0 of the right-end speed on [0,T].
    pub fn varsigma0(&self) -> f64 {
        (0..=256)
            .map(|k| self.right_speed(self.horizon * k as f64 / 256.0))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn lzeta(&self) -> f64 {
        self.grid.lzeta.unwrap_or_else(|| 40.0 / self.varsigma0())
    }

    /// High-Péclet mode (β > 1).
    pub fn high_peclet(&self) -> bool {
        self.beta > 1.0
    }

    /// Scale of the layer variable: ζ1 = (ℓ − x1)/ε^{(1+β)/2}.
    pub fn layer_scale(&self, eps: f64) -> f64 {
        eps.powf(0.5 * (1.0 + self.beta))
    }

    /// Rebuild the catalog functions after geometry edits.
    pub fn rebind(&mut self) -> Result<()> {
        let geom = make_geom(self.length, self.horizon, self.delta1, &self.cross_section);
        self.velocity.geom = geom;
        self.interaction.geom = geom;
        self.boundary.geom = geom;
        self.check_invariants()
    }

    fn check_invariants(&self) -> Result<()> {
        for (k, v) in [
            ("length", self.length),
            ("horizon", self.horizon),
            ("delta1", self.delta1),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("`{k}` must be positive")));
            }
        }
        if self.delta1 >= (0.5 * self.length).min(self.horizon) {
            return Err(Error::Config("`delta1` must be < min(length/2, horizon)".into()));
        }
        self.cross_section.check()?;
        if self.epsilons.iter().any(|&e| !(e > 0.0 && e < 1.0)) {
            return Err(Error::Config("`epsilons` must lie in (0,1)".into()));
        }
        if self.epsilons.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::Config("`epsilons` must be strictly decreasing".into()));
        }
        if !(self.beta >= 1.0) {
            return Err(Error::Config("`beta` must be >= 1".into()));
        }
        let g = &self.grid;
        if g.nx < 8 || g.nt < 8 || g.nxi < 4 || g.modes < 1 {
            return Err(Error::Config("grid counts too small".into()));
        }
        if let Some(l) = g.lzeta {
            if !(l > 0.0) {
                return Err(Error::Config("`grid.lzeta` must be positive".into()));
            }
        }
        if self.reference.nr < 8 {
            return Err(Error::Config("`reference.nr` must be >= 8".into()));
        }
        if self.reference.nx < 8 || self.reference.snapshots < 1 {
            return Err(Error::Config("reference grid too small".into()));
        }
        if matches!(self.velocity.catalog, VelocityCatalog::RadialInflow { .. })
            && !matches!(self.cross_section, CrossSectionSpec::Disk { .. })
        {
            return Err(Error::Config("radial-inflow requires a disk cross-section".into()));
        }
        if !(self.s_max > 0.0) {
            return Err(Error::Config("`s_max` must be positive".into()));
        }
        Ok(())
    }
}

fn make_geom(length: f64, horizon: f64, delta1: f64, cs: &CrossSectionSpec) -> Geom {
    let perim = cs.perimeter();
    Geom {
        length,
        horizon,
        delta1,
        radius: cs.outer_radius(),
        area_per_perimeter: if perim > 0.0 { cs.area() / perim } else { 0.0 },
    }
}

// ---------------------------------------------------------------------------
// Loading

const VELOCITY_NAMES: &[&str] = &["uniform", "saturating", "identity", "radial-inflow"];
const INTERACTION_NAMES: &[&str] = &[
    "zero",
    "bump-source",
    "linear-uptake",
    "angular",
    "stationary",
];
const BOUNDARY_NAMES: &[&str] = &["zero", "ramp", "power"];

pub const SCENARIOS: &[&str] = &[
    "linear-advection",
    "saturating-flux",
    "high-peclet-beta3",
    "axisym-robin",
];

fn num(v: &Value, key: &str) -> Result<f64> {
    v.get(key)
        .ok_or_else(|| Error::parse(key, "missing"))?
        .as_f64()
        .ok_or_else(|| Error::parse(key, "expected a number"))
}

fn catalog<T: serde::de::DeserializeOwned>(v: &Value, key: &str, names: &[&str]) -> Result<T> {
    let obj = v.get(key).ok_or_else(|| Error::parse(key, "missing"))?;
    let name = obj
        .get("catalog")
        .and_then(Value::as_str)
        .ok_or_else(|| Error::parse(format!("{key}.catalog"), "expected a string"))?;
    if !names.contains(&name) {
        return Err(Error::Config(format!("unknown {key} catalog `{name}`")));
    }
    let mut obj = obj.clone();
    if obj.get("params").is_none() {
        obj["params"] = Value::Object(Default::default());
    }
    serde_json::from_value(obj).map_err(|e| Error::parse(format!("{key}.params"), e.to_string()))
}

fn parse_grid(v: &Value, base: GridSpec) -> Result<GridSpec> {
    let mut g = base;
    let Some(obj) = v.as_object() else {
        return Err(Error::parse("grid", "expected an object"));
    };
    for (k, val) in obj {
        let key = format!("grid.{k}");
        match k.as_str() {
            "nx" | "nt" | "nxi" | "modes" => {
                let n = val
                    .as_u64()
                    .ok_or_else(|| Error::parse(&key, "expected a positive integer"))?
                    as usize;
                match k.as_str() {
                    "nx" => g.nx = n,
                    "nt" => g.nt = n,
                    "nxi" => g.nxi = n,
                    _ => g.modes = n,
                }
            }
            "lzeta" => {
                g.lzeta = if val.is_null() {
                    None
                } else {
                    Some(val.as_f64().ok_or_else(|| Error::parse(&key, "expected a number"))?)
                }
            }
            _ => return Err(Error::parse(&key, "unknown key")),
        }
    }
    Ok(g)
}

fn parse_reference(v: &Value, base: ReferenceSpec) -> Result<ReferenceSpec> {
    let mut r = base;
    let Some(obj) = v.as_object() else {
        return Err(Error::parse("reference", "expected an object"));
    };
    for (k, val) in obj {
        let key = format!("reference.{k}");
        let int = || {
            val.as_u64()
                .map(|n| n as usize)
                .ok_or_else(|| Error::parse(&key, "expected a positive integer"))
        };
        match k.as_str() {
            "nx" => r.nx = int()?,
            "nr" => r.nr = int()?,
            "nt" => r.nt = if val.is_null() { None } else { Some(int()?) },
            "picard" => r.picard = int()?,
            "snapshots" => r.snapshots = int()?,
            "cfl" => r.cfl = val.as_f64().ok_or_else(|| Error::parse(&key, "expected a number"))?,
            "scheme" => {
                r.scheme = serde_json::from_value(val.clone())
                    .map_err(|_| Error::parse(&key, "expected \"be\" or \"cn\""))?
            }
            _ => return Err(Error::parse(&key, "unknown key")),
        }
    }
    Ok(r)
}

/// Parse a JSON configuration document.
///
/// A document may name a builtin `scenario` and override any key; otherwise
/// every problem key is required.
pub fn load_config(document: &str) -> Result<ModelConfig> {
    let v: Value =
        serde_json::from_str(document).map_err(|e| Error::parse("<document>", e.to_string()))?;
    if !v.is_object() {
        return Err(Error::parse("<document>", "expected a JSON object"));
    }
    const KEYS: &[&str] = &[
        "scenario",
        "name",
        "length",
        "horizon",
        "delta1",
        "cross_section",
        "velocity",
        "interaction",
        "boundary",
        "epsilons",
        "beta",
        "grid",
        "reference",
        "s_max",
    ];
    for k in v.as_object().unwrap().keys() {
        if !KEYS.contains(&k.as_str()) {
            return Err(Error::parse(k, "unknown key"));
        }
    }
    let base = match v.get("scenario") {
        Some(s) => {
            let name = s
                .as_str()
                .ok_or_else(|| Error::parse("scenario", "expected a string"))?;
            Some(builtin_scenario(name)?)
        }
        None => None,
    };
    let has = |k: &str| v.get(k).is_some();
    let need = |k: &str| -> Result<()> {
        if base.is_none() && !has(k) {
            Err(Error::parse(k, "missing"))
        } else {
            Ok(())
        }
    };
    for k in [
        "length",
        "horizon",
        "delta1",
        "cross_section",
        "velocity",
        "interaction",
        "boundary",
        "epsilons",
    ] {
        need(k)?;
    }
    let b = base.as_ref();
    let length = if has("length") { num(&v, "length")? } else { b.unwrap().length };
    let horizon = if has("horizon") { num(&v, "horizon")? } else { b.unwrap().horizon };
    let delta1 = if has("delta1") { num(&v, "delta1")? } else { b.unwrap().delta1 };
    let cross_section = if has("cross_section") {
        serde_json::from_value(v["cross_section"].clone())
            .map_err(|e| Error::parse("cross_section", e.to_string()))?
    } else {
        b.unwrap().cross_section.clone()
    };
    let geom = make_geom(length, horizon, delta1, &cross_section);
    let velocity = VelocityField {
        catalog: if has("velocity") {
            catalog(&v, "velocity", VELOCITY_NAMES)?
        } else {
            b.unwrap().velocity.catalog.clone()
        },
        geom,
    };
    let interaction = InteractionFunction {
        catalog: if has("interaction") {
            catalog(&v, "interaction", INTERACTION_NAMES)?
        } else {
            b.unwrap().interaction.catalog.clone()
        },
        geom,
    };
    let boundary = BoundaryData {
        catalog: if has("boundary") {
            catalog(&v, "boundary", BOUNDARY_NAMES)?
        } else {
            b.unwrap().boundary.catalog.clone()
        },
        geom,
    };
    let epsilons = if has("epsilons") {
        v["epsilons"]
            .as_array()
            .ok_or_else(|| Error::parse("epsilons", "expected an array"))?
            .iter()
            .map(|e| e.as_f64().ok_or_else(|| Error::parse("epsilons", "expected numbers")))
            .collect::<Result<Vec<_>>>()?
    } else {
        b.unwrap().epsilons.clone()
    };
    let beta = if has("beta") {
        num(&v, "beta")?
    } else {
        b.map(|c| c.beta).unwrap_or(1.0)
    };
    let grid_base = b.map(|c| c.grid.clone()).unwrap_or_default();
    let grid = match v.get("grid") {
        Some(g) => parse_grid(g, grid_base)?,
        None => grid_base,
    };
    let ref_base = b.map(|c| c.reference.clone()).unwrap_or_default();
    let reference = match v.get("reference") {
        Some(r) => parse_reference(r, ref_base)?,
        None => ref_base,
    };
    let s_max = if has("s_max") {
        num(&v, "s_max")?
    } else {
        b.map(|c| c.s_max).unwrap_or(10.0)
    };
    let name = match v.get("name") {
        Some(n) => n
            .as_str()
            .ok_or_else(|| Error::parse("name", "expected a string"))?
            .to_string(),
        None => b.map(|c| c.name.clone()).unwrap_or_else(|| "custom".into()),
    };
    let cfg = ModelConfig {
        name,
        length,
        horizon,
        delta1,
        cross_section,
        velocity,
        interaction,
        boundary,
        epsilons,
        beta,
        grid,
        reference,
        s_max,
    };
    cfg.check_invariants()?;
    Ok(cfg)
}

/// Serialize a configuration back to the JSON schema.
pub fn config_to_json(cfg: &ModelConfig) -> Value {
    let cat = |x: Value| x;
    serde_json::json!({
        "name": cfg.name,
        "length": cfg.length,
        "horizon": cfg.horizon,
        "delta1": cfg.delta1,
        "cross_section": serde_json::to_value(&cfg.cross_section).unwrap(),
        "velocity": cat(serde_json::to_value(&cfg.velocity.catalog).unwrap()),
        "interaction": cat(serde_json::to_value(&cfg.interaction.catalog).unwrap()),
        "boundary": cat(serde_json::to_value(&cfg.boundary.catalog).unwrap()),
        "epsilons": cfg.epsilons,
        "beta": cfg.beta,
        "grid": serde_json::to_value(&cfg.grid).unwrap(),
        "reference": serde_json::to_value(&cfg.reference).unwrap(),
        "s_max": cfg.s_max,
    })
}

/// Builtin benchmark catalog.
///
/// * `linear-advection`: v1 ≡ 1, φ̂ = −η(x1)τ(t), q ≡ 0. The limit solution
///   is the characteristic integral w0(x,t) = ∫ η(x−t+σ)τ(σ) dσ over
///   σ ∈ (max(0,t−x), t).
/// * `high-peclet-beta3`: same data with β = 3; w0 = η(x) t⁴/(4T³).
/// * `saturating-flux`: v1 = 0.5 + s/(1+s) tapered off near ℓ, s-dependent
///   uptake, no closed form.
/// * `axisym-robin`: radial transversal field and s-dependent uptake on a disk.
pub fn builtin_scenario(name: &str) -> Result<ModelConfig> {
    let disk = CrossSectionSpec::Disk { radius: 1.0 };
    let (velocity, interaction, boundary, beta) = match name {
        "linear-advection" => (
            VelocityCatalog::Uniform { c: 1.0 },
            InteractionCatalog::BumpSource { k: 1.0 },
            BoundaryCatalog::Zero {},
            1.0,
        ),
        "high-peclet-beta3" => (
            VelocityCatalog::Uniform { c: 1.0 },
            InteractionCatalog::BumpSource { k: 1.0 },
            BoundaryCatalog::Zero {},
            3.0,
        ),
        "saturating-flux" => (
            VelocityCatalog::Saturating { c: 1.0, c0: 0.5 },
            InteractionCatalog::LinearUptake { k: 1.0, b: 0.5 },
            BoundaryCatalog::Ramp { a: 0.1 },
            1.0,
        ),
        "axisym-robin" => (
            VelocityCatalog::RadialInflow { c: 1.0, amp: 0.5 },
            InteractionCatalog::LinearUptake { k: 1.0, b: 0.2 },
            BoundaryCatalog::Ramp { a: 0.05 },
            1.0,
        ),
        other => return Err(Error::Config(format!("unknown scenario `{other}`"))),
    };
    // The two benchmark scenarios use a longer cylinder: with ℓ = T = 2 the
    // sweep ε ∈ [0.025, 0.2] sits in the asymptotic regime of the source bump.
    let (length, horizon, delta1) = match name {
        "linear-advection" | "high-peclet-beta3" => (2.0, 2.0, 0.2),
        _ => (1.0, 1.0, 0.1),
    };
    let geom = make_geom(length, horizon, delta1, &disk);
    let cfg = ModelConfig {
        name: name.to_string(),
        length,
        horizon,
        delta1,
        cross_section: disk,
        velocity: VelocityField {
            catalog: velocity,
            geom,
        },
        interaction: InteractionFunction {
            catalog: interaction,
            geom,
        },
        boundary: BoundaryData {
            catalog: boundary,
            geom,
        },
        epsilons: vec![0.2, 0.1, 0.05, 0.025],
        beta,
        grid: GridSpec::default(),
        reference: ReferenceSpec::default(),
        s_max: 10.0,
    };
    cfg.check_invariants()?;
    Ok(cfg)
}

// ---------------------------------------------------------------------------
// Assumption checks

/// Worst violating sample of a check.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Sample {
    pub s: f64,
    pub x1: f64,
    pub t: f64,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub worst: Option<Sample>,
    pub detail: String,
}

/// Constants inferred from samples.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Constants {
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
    pub varsigma0: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
    pub constants: Constants,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> Vec<&Check> {
        self.checks.iter().filter(|c| !c.passed).collect()
    }

    pub fn get(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    /// Error naming the failed checks, if any.
    pub fn require(&self) -> Result<()> {
        let f: Vec<_> = self.failures().iter().map(|c| c.name.clone()).collect();
        if f.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(format!("assumption checks failed: {}", f.join(", "))))
        }
    }
}

/// Tracks the largest violation seen.
struct Worst {
    tol: f64,
    worst: Option<Sample>,
    excess: f64,
}

impl Worst {
    fn new(tol: f64) -> Self {
        Worst {
            tol,
            worst: None,
            excess: 0.0,
        }
    }

    /// Record a sample whose violation magnitude is `excess` (≤ 0 is fine).
    fn see(&mut self, excess: f64, s: f64, x1: f64, t: f64, value: f64) {
        if excess > self.tol && (self.worst.is_none() || excess > self.excess) {
            self.excess = excess;
            self.worst = Some(Sample { s, x1, t, value });
        }
    }

    fn into_check(self, name: &str, detail: String) -> Check {
        Check {
            name: name.into(),
            passed: self.worst.is_none(),
            worst: self.worst,
            detail,
        }
    }
}

fn lin(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| a + (b - a) * i as f64 / (n - 1) as f64)
        .collect()
}

/// Sampled check of every assumption (n³ tensor grid in (s,x1,t), default 64).
pub fn validate_assumptions(cfg: &ModelConfig) -> ValidationReport {
    validate_with(cfg, 64)
}

pub fn validate_with(cfg: &ModelConfig, n: usize) -> ValidationReport {
    const TOL: f64 = 1e-12;
    let ell = cfg.length;
    let d1 = cfg.delta1;
    let tt = cfg.horizon;
    let ss = lin(0.0, cfg.s_max, n);
    let xs = lin(0.0, ell, n);
    let ts = lin(0.0, tt, n);
    let left = lin(0.0, d1, n);
    let right = lin(ell - d1, ell, n);
    let quad = cfg.cross_section.fine_quadrature(64);
    let bpts: Vec<[f64; 2]> = quad.points.iter().step_by(4).copied().collect();
    let vel = &cfg.velocity;
    let phi = &cfg.interaction;
    let mut checks = vec![];

    // (v_1) bounds
    let mut w = Worst::new(TOL);
    let mut c0 = 0.0f64;
    let mut c1 = 0.0f64;
    for &s in &ss {
        for &x in &xs {
            for &t in &ts {
                let p = vel.partials(s, x, t);
                c0 = c0.max(p.v);
                c1 = c1.max((s * p.s).abs() + (s * p.ss).abs());
                w.see(-p.v, s, x, t, p.v);
            }
        }
    }
    checks.push(w.into_check(
        "v1-bounds",
        format!("0 <= v1 <= C0 = {c0:.6}, |s v1_s| + |s v1_ss| <= C1 = {c1:.6}"),
    ));

    // A1
    let interior: Vec<[f64; 2]> = {
        let r = cfg.cross_section.outer_radius();
        let mut p = vec![[0.0, 0.0]];
        for k in 1..=4 {
            for j in 0..8 {
                let th = j as f64 * std::f64::consts::PI / 4.0;
                p.push([0.24 * k as f64 * r * th.cos(), 0.24 * k as f64 * r * th.sin()]);
            }
        }
        p
    };
    let mut w = Worst::new(TOL);
    for &x in left.iter().chain(&right) {
        for &t in &ts {
            for xi in &interior {
                let v = vel.vbar(x, *xi, t);
                let m = v[0].abs().max(v[1].abs());
                w.see(m, 0.0, x, t, m);
            }
        }
    }
    checks.push(w.into_check("A1-transversal-support", "v2 = v3 = 0 near both ends".into()));

    // A2 left
    let left_t = lin(0.0, d1.min(tt), n);
    let mut w = Worst::new(TOL);
    for &s in &ss {
        for &x in &left {
            for &t in &left_t {
                let p = vel.partials(s, x, t);
                w.see(p.x.abs(), s, x, t, p.x);
            }
        }
    }
    checks.push(w.into_check("A2-left", "v1 independent of x1 on [0,δ1]×[0,δ1]".into()));

    // A2 right
    let mut w = Worst::new(TOL);
    let mut sigma = f64::INFINITY;
    for &s in &ss {
        for &x in &right {
            for &t in &ts {
                let p = vel.partials(s, x, t);
                sigma = sigma.min(p.v);
                w.see(p.s.abs().max(p.x.abs()), s, x, t, p.v);
                w.see(-p.v, s, x, t, p.v);
            }
        }
    }
    checks.push(w.into_check(
        "A2-right",
        format!("v1 = v1(t) >= ς0 = {sigma:.6} on [ℓ−δ1, ℓ]"),
    ));

    // A3
    let mut wl = Worst::new(TOL);
    let mut wr = Worst::new(TOL);
    for &s in &ss {
        for &t in &ts {
            for xi in &bpts {
                for &x in &left {
                    let f = phi.eval(s, x, *xi, t);
                    wl.see(f.phi.abs(), s, x, t, f.phi);
                }
                for &x in &right {
                    let f = phi.eval(s, x, *xi, t);
                    wr.see(f.s.abs(), s, x, t, f.s);
                }
            }
        }
    }
    checks.push(wl.into_check("A3-left", "φ = 0 for x1 in [0, δ1]".into()));
    checks.push(wr.into_check("A3-right", "φ independent of s for x1 in [ℓ−δ1, ℓ]".into()));

    // growth constants
    let mut c3 = 0.0f64;
    let mut c4 = 0.0f64;
    let mut grow = vec![];
    for &s in &ss {
        for &x in &xs {
            for &t in &ts {
                for xi in bpts.iter().step_by(2) {
                    let f = phi.eval(s, x, *xi, t);
                    let g = f.phi.abs() + f.x.abs() + f.t.abs();
                    c4 = c4.max(f.s.abs());
                    if s == 0.0 {
                        c3 = c3.max(g);
                    } else {
                        grow.push((s, g));
                    }
                }
            }
        }
    }
    let c2 = grow
        .iter()
        .map(|&(s, g)| ((g - c3) / s).max(0.0))
        .fold(0.0, f64::max);
    checks.push(Check {
        name: "phi-growth".into(),
        passed: c2.is_finite() && c3.is_finite() && c4.is_finite(),
        worst: None,
        detail: format!("C2 = {c2:.6}, C3 = {c3:.6}, C4 = {c4:.6}"),
    });

    // A4
    let tfine = lin(0.0, tt, 1024);
    let mut w = Worst::new(TOL);
    for &t in &tfine {
        let q = cfg.boundary.q(t);
        w.see(-q, 0.0, ell, t, q);
    }
    checks.push(w.into_check("A4-q-nonneg", "q_ℓ >= 0 on [0,T]".into()));

    // A5
    let (q0, q1, q2) = cfg.boundary.eval(0.0);
    let mut w = Worst::new(TOL);
    w.see(q0.abs(), 0.0, ell, 0.0, q0);
    w.see(q1.abs(), 0.0, ell, 0.0, q1);
    let mut wn = Worst::new(TOL);
    for &s in &ss {
        for &x in &xs {
            for xi in &bpts {
                let f = phi.eval(s, x, *xi, 0.0);
                w.see(f.phi.abs(), s, x, 0.0, f.phi);
                wn.see(f.t.abs().max(f.tt.abs()), s, x, 0.0, f.t);
            }
        }
    }
    checks.push(w.into_check("A5-matching", "q(0) = q'(0) = 0 and φ|t=0 = 0".into()));
    checks.push(wn.into_check("new-cond", "∂tφ|t=0 = ∂ttφ|t=0 = 0".into()));
    let mut w = Worst::new(TOL);
    w.see(q2.abs(), 0.0, ell, 0.0, q2);
    checks.push(w.into_check("therd-cond", "q''(0) = 0".into()));

    // (add-cond-1)
    let mut w = Worst::new(0.0);
    for &s in &ss {
        for &t in &ts {
            let l = vel.lambda(s, 0.0, t);
            // strict positivity: a zero speed counts as a violation
            w.see(if l > 0.0 { 0.0 } else { 1.0 - l }, s, 0.0, t, l);
        }
    }
    checks.push(w.into_check("add-cond-1", "Λ(s,0,t) > 0".into()));

    // (add-cond-2)
    let mut w = Worst::new(TOL);
    for &s in &ss {
        for &x in &xs {
            for &t in &ts {
                let (ph, _) = phi.boundary_mean(s, x, t, &quad);
                w.see(ph, s, x, t, ph);
                let vx = vel.partials(s, x, t).x;
                w.see(vx, s, x, t, vx);
            }
        }
    }
    checks.push(w.into_check("add-cond-2", "φ̂ <= 0 and ∂x1 v1 <= 0 for s >= 0".into()));

    // β mode
    let beta_ok = cfg.beta == 1.0 || cfg.beta >= 3.0;
    checks.push(Check {
        name: "beta-mode".into(),
        passed: beta_ok,
        worst: None,
        detail: if beta_ok {
            format!("beta = {}", cfg.beta)
        } else {
            format!(
                "beta = {} in (1,3): the intermediate coefficients are not implemented",
                cfg.beta
            )
        },
    });

    // layer domain
    let lz = cfg.lzeta();
    let tail = (-sigma * lz).exp();
    checks.push(Check {
        name: "lzeta".into(),
        passed: sigma > 0.0 && tail < 1e-10,
        worst: None,
        detail: format!("exp(-ς0 Lζ) = {tail:.3e} with Lζ = {lz:.3}"),
    });

    ValidationReport {
        checks,
        constants: Constants {
            c0,
            c1,
            c2,
            c3,
            c4,
            varsigma0: sigma,
        },
    }
}
