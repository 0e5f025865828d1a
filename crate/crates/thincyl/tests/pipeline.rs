//! Refinement and structural checks across limit, cell, layers and assembly.

use thincyl::assemble::{assemble, cutoff_chi, Order, Parts};
use thincyl::blayer::{pi0_dzeta, pi0_eval};
use thincyl::cell::{build_mesh, neumann_eigenbasis};
use thincyl::limit::{forcing, lambda_speed, mesh_quadrature, solve_limit};
use thincyl::model::{builtin_scenario, validate_assumptions, GridSpec, ModelConfig};

fn grid(cfg: &ModelConfig, n: usize) -> GridSpec {
    GridSpec { nx: n, nt: n, ..cfg.grid.clone() }
}

/// Largest |a − b| over the nodes of the coarse grid.
fn matched_diff(cfg: &ModelConfig, coarse: usize) -> f64 {
    let a = solve_limit(cfg, &grid(cfg, coarse)).unwrap();
    let b = solve_limit(cfg, &grid(cfg, 2 * coarse)).unwrap();
    let mut d: f64 = 0.0;
    for k in 0..=coarse {
        for i in 0..=coarse {
            d = d.max((a.w0.at(i, k) - b.w0.at(2 * i, 2 * k)).abs());
        }
    }
    d
}

fn refinement_rate(name: &str, coarse: usize) -> f64 {
    let cfg = builtin_scenario(name).unwrap();
    let d1 = matched_diff(&cfg, coarse);
    let d2 = matched_diff(&cfg, 2 * coarse);
    (d1 / d2).log2()
}

#[test]
fn limit_refinement_rate() {
    for name in ["linear-advection", "axisym-robin"] {
        let rate = refinement_rate(name, 50);
        assert!(rate >= 2.5, "{name}: rate {rate}");
    }
    // the nonlinear fan only settles into its asymptotic rate past nx = 100
    let rate = refinement_rate("saturating-flux", 100);
    assert!(rate >= 2.5, "saturating-flux: rate {rate}");
}

#[test]
fn limit_is_nonnegative_under_nonnegative_forcing() {
    let cfg = builtin_scenario("linear-advection").unwrap();
    let g = grid(&cfg, 80);
    let (_, quad) = mesh_quadrature(&cfg, &g).unwrap();
    let lim = solve_limit(&cfg, &g).unwrap();
    for k in 0..=g.nt {
        for i in 0..=g.nx {
            let (x, t) = (lim.w0.x(i), lim.w0.t(k));
            assert!(forcing(lim.w0.at(i, k), x, t, &cfg, &quad) >= 0.0);
            assert!(lim.w0.at(i, k) >= 0.0, "w0({x}, {t}) = {}", lim.w0.at(i, k));
        }
    }
}

fn max_residual(cfg: &ModelConfig, n: usize) -> f64 {
    let g = grid(cfg, n);
    let (_, quad) = mesh_quadrature(cfg, &g).unwrap();
    let lim = solve_limit(cfg, &g).unwrap();
    let mut r: f64 = 0.0;
    for k in 0..=g.nt {
        for i in 0..=g.nx {
            let (x, t) = (lim.w0.x(i), lim.w0.t(k));
            let w = lim.w0.at(i, k);
            let res = lim.w0t.at(i, k) + lambda_speed(w, x, t, &cfg.velocity) * lim.w0x.at(i, k)
                - forcing(w, x, t, cfg, &quad);
            r = r.max(res.abs());
        }
    }
    r
}

#[test]
fn limit_residual_shrinks() {
    let cfg = builtin_scenario("saturating-flux").unwrap();
    let r: Vec<f64> = [40, 80, 160].iter().map(|&n| max_residual(&cfg, n)).collect();
    let rate = (r[1] / r[2]).log2();
    assert!(r[2] < r[1] && r[1] < r[0], "{r:?}");
    assert!(rate >= 1.5, "rate {rate} {r:?}");
}

fn coarse_full() -> Parts {
    let mut cfg = builtin_scenario("saturating-flux").unwrap();
    cfg.grid = GridSpec { nx: 40, nt: 40, nxi: 12, modes: 8, ..cfg.grid.clone() };
    Parts::build(&cfg, Order::Full).unwrap()
}

#[test]
fn assembly_structure() {
    let parts = coarse_full();
    let cfg = &parts.cfg;
    let u2max = parts.u2.as_ref().unwrap().max_abs();
    let pi2 = parts.pi2.as_ref().unwrap();
    let lz = parts.layer.lzeta;
    let pi2max = (0..=400).map(|j| pi2.sup_at(lz * j as f64 / 400.0)).fold(0.0, f64::max);
    let points = [[0.0, 0.0], [0.5, 0.0], [0.0, -0.8], [0.6, 0.6]];
    for eps in [0.2, 0.1, 0.05] {
        assert_eq!(cfg.layer_scale(eps), eps);
        let full = assemble(&parts, eps, Order::Full).unwrap();
        let first = assemble(&parts, eps, Order::First).unwrap();
        let leading = assemble(&parts, eps, Order::Leading).unwrap();
        let bound = eps * eps * (u2max + pi2max);
        for p in points {
            let s = full.sampler(p);
            for ix in 0..=40 {
                let x = cfg.length * ix as f64 / 40.0;
                for it in 0..=20 {
                    let t = parts.horizon() * it as f64 / 20.0;
                    let (f, g) = (full.eval(x, &s, t), first.eval(x, &s, t));
                    assert!((f - g).abs() <= bound * (1.0 + 1e-12), "x {x} t {t}");
                    if x <= cfg.length - cfg.delta1 {
                        assert_eq!(cutoff_chi(x, cfg.length, cfg.delta1).0, 0.0);
                        // the regular part alone
                        let u1 = parts.u1.as_ref().unwrap().eval(&parts.mesh, x, t, &s);
                        let reg = parts.lim.w0.eval(x, t)
                            + eps * parts.w1.as_ref().unwrap().eval(x, t)
                            + eps * u1;
                        assert_eq!(g, reg);
                        assert_eq!(leading.eval(x, &s, t), parts.lim.w0.eval(x, t));
                    }
                }
            }
        }
    }
}

#[test]
fn pi0_solves_its_layer_equation() {
    let parts = coarse_full();
    let data = &parts.layer;
    let h = 1e-3;
    for it in 1..=10 {
        let t = parts.horizon() * it as f64 / 10.0;
        let v = data.speed(t);
        let scale = data.phi0(t).abs().max(1e-300);
        for j in 1..=20 {
            let z = 0.05 * j as f64;
            let dzz = (pi0_eval(z + h, t, data) - 2.0 * pi0_eval(z, t, data) + pi0_eval(z - h, t, data)) / (h * h);
            let res = dzz + v * pi0_dzeta(z, t, data);
            assert!(res.abs() / (scale * v * v) < 1e-6, "t {t} z {z}: {res:e}");
        }
    }
}

#[test]
fn eigenbasis_is_ordered_and_orthonormal() {
    let cfg = builtin_scenario("saturating-flux").unwrap();
    let mesh = build_mesh(&cfg.cross_section, 16).unwrap();
    let basis = neumann_eigenbasis(&mesh, 10).unwrap();
    assert!(basis.values.windows(2).all(|w| w[0] <= w[1]), "{:?}", basis.values);
    for p in 0..basis.len() {
        for q in 0..basis.len() {
            let ip = mesh.inner(&basis.vectors[p], &basis.vectors[q]);
            let want = if p == q { 1.0 } else { 0.0 };
            assert!((ip - want).abs() < 1e-10, "({p}, {q}): {ip}");
        }
    }
}

#[test]
fn validation_is_deterministic() {
    for name in ["linear-advection", "saturating-flux", "high-peclet-beta3", "axisym-robin"] {
        let cfg = builtin_scenario(name).unwrap();
        let a = validate_assumptions(&cfg);
        assert_eq!(a, validate_assumptions(&cfg.clone()));
        assert!(a.passed(), "{name}: {:?}", a.failures());
    }
}
