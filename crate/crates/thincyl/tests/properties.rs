//! Property tests over randomly drawn parameters and sample points.

use proptest::prelude::*;
use thincyl::assemble::cutoff_chi;
use thincyl::cell::{build_mesh, solve_neumann, NeumannData};
use thincyl::interp::{interp1, MonotoneCubic};
use thincyl::limit::solve_cauchy_limit;
use thincyl::model::{
    builtin_scenario, BoundaryCatalog, CrossSectionSpec, InteractionCatalog, ModelConfig, VelocityCatalog,
};
use thincyl::study::fit_slope;

const H: f64 = 1e-5;

fn central(f: impl Fn(f64) -> f64, x: f64) -> f64 {
    (f(x + H) - f(x - H)) / (2.0 * H)
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-6 * a.abs().max(b.abs()).max(1.0)
}

fn scenario(name: &str) -> ModelConfig {
    builtin_scenario(name).unwrap()
}

fn with_velocity(mut cfg: ModelConfig, v: VelocityCatalog) -> ModelConfig {
    cfg.velocity.catalog = v;
    cfg
}

fn velocities() -> impl Strategy<Value = VelocityCatalog> {
    prop_oneof![
        (0.2f64..2.0).prop_map(|c| VelocityCatalog::Uniform { c }),
        (0.1f64..2.0, 0.2f64..1.0).prop_map(|(c, c0)| VelocityCatalog::Saturating { c, c0 }),
        Just(VelocityCatalog::Identity {}),
        (0.2f64..2.0, 0.0f64..1.0).prop_map(|(c, amp)| VelocityCatalog::RadialInflow { c, amp }),
    ]
}

fn interactions() -> impl Strategy<Value = InteractionCatalog> {
    prop_oneof![
        (0.1f64..2.0).prop_map(|k| InteractionCatalog::BumpSource { k }),
        (0.1f64..2.0, -1.0f64..1.0).prop_map(|(k, b)| InteractionCatalog::LinearUptake { k, b }),
        (0.1f64..2.0, -1.0f64..1.0).prop_map(|(k, a)| InteractionCatalog::Angular { k, a }),
        (0.1f64..2.0).prop_map(|k| InteractionCatalog::Stationary { k }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn velocity_partials_match_differences(
        v in velocities(),
        s in 0.05f64..3.0,
        xu in 0.01f64..0.99,
        t in 0.01f64..0.99,
    ) {
        let cfg = with_velocity(scenario("saturating-flux"), v);
        let x = xu * cfg.length;
        let vel = &cfg.velocity;
        let p = vel.partials(s, x, t);
        prop_assert!(close(p.s, central(|y| vel.v1(y, x, t), s)));
        prop_assert!(close(p.x, central(|y| vel.v1(s, y, t), x)));
        prop_assert!(close(p.t, central(|y| vel.v1(s, x, y), t)));
        prop_assert!(close(p.ss, central(|y| vel.partials(y, x, t).s, s)));
        prop_assert!(close(p.sx, central(|y| vel.partials(s, y, t).s, x)));
        let (_, ls, lx) = vel.lambda_partials(s, x, t);
        prop_assert!(close(ls, central(|y| vel.lambda(y, x, t), s)));
        prop_assert!(close(lx, central(|y| vel.lambda(s, y, t), x)));
    }

    #[test]
    fn interaction_partials_match_differences(
        cat in interactions(),
        s in -2.0f64..2.0,
        xu in 0.01f64..0.99,
        t in 0.01f64..0.99,
        angle in 0.0f64..std::f64::consts::TAU,
    ) {
        let mut cfg = scenario("linear-advection");
        cfg.interaction.catalog = cat;
        let x = xu * cfg.length;
        let t = t * cfg.horizon;
        let xi = [angle.cos(), angle.sin()];
        let f = &cfg.interaction;
        let p = f.eval(s, x, xi, t);
        prop_assert!(close(p.s, central(|y| f.phi(y, x, xi, t), s)));
        prop_assert!(close(p.x, central(|y| f.phi(s, y, xi, t), x)));
        prop_assert!(close(p.t, central(|y| f.phi(s, x, xi, y), t)));
        prop_assert!(close(p.tt, central(|y| f.eval(s, x, xi, y).t, t)));
        let g = f.grad_xi(s, x, xi, t);
        prop_assert!(close(g[0], central(|y| f.phi(s, x, [y, xi[1]], t), xi[0])));
        prop_assert!(close(g[1], central(|y| f.phi(s, x, [xi[0], y], t), xi[1])));
    }

    #[test]
    fn boundary_derivatives_match_differences(
        a in -1.0f64..1.0,
        p in 3.0f64..6.0,
        tu in 0.01f64..0.99,
        ramp in any::<bool>(),
    ) {
        let mut cfg = scenario("saturating-flux");
        cfg.boundary.catalog = if ramp {
            BoundaryCatalog::Ramp { a }
        } else {
            BoundaryCatalog::Power { a, p }
        };
        let t = tu * cfg.horizon;
        let b = &cfg.boundary;
        let (_, d1, d2) = b.eval(t);
        prop_assert!(close(d1, central(|y| b.q(y), t)));
        prop_assert!(close(d2, central(|y| b.eval(y).1, t)));
        prop_assert_eq!(b.eval(0.0), (0.0, 0.0, 0.0));
    }

    #[test]
    fn cutoff_is_a_monotone_step(
        length in 0.5f64..4.0,
        frac in 0.05f64..0.45,
        xu in 0.0f64..1.0,
    ) {
        let delta1 = frac * length;
        let x = xu * length;
        let (c, d) = cutoff_chi(x, length, delta1);
        prop_assert!((0.0..=1.0).contains(&c));
        prop_assert!(d >= 0.0);
        if x <= length - delta1 {
            prop_assert_eq!((c, d), (0.0, 0.0));
        }
        if x >= length - 0.5 * delta1 {
            prop_assert_eq!(c, 1.0);
        }
        if x > H && x < length - H {
            prop_assert!(close(d, central(|y| cutoff_chi(y, length, delta1).0, x)));
        }
    }

    #[test]
    fn slope_fit_recovers_power_laws(
        p in 0.3f64..3.0,
        c in 1e-3f64..1e3,
        e0 in 0.1f64..0.5,
        ratios in prop::collection::vec(1.3f64..3.0, 2..5),
    ) {
        let mut eps = vec![e0];
        for r in &ratios {
            let last = *eps.last().unwrap();
            eps.push(last / r);
        }
        let err: Vec<f64> = eps.iter().map(|e| c * e.powf(p)).collect();
        let fit = fit_slope(&eps, &err).unwrap();
        prop_assert!((fit.slope - p).abs() < 1e-9);
        prop_assert!(fit.residual < 1e-9 && fit.reliable);
        prop_assert_eq!(fit.points, eps.len());
    }

    #[test]
    fn uniform_interpolation_reproduces_cubics(
        c in prop::array::uniform4(-2.0f64..2.0),
        n in 4usize..40,
        xu in 0.0f64..1.0,
    ) {
        let h = 1.0 / n as f64;
        let cubic = |x: f64| c[0] + x * (c[1] + x * (c[2] + x * c[3]));
        let f: Vec<f64> = (0..=n).map(|i| cubic(i as f64 * h)).collect();
        prop_assert!((interp1(&f, h, xu) - cubic(xu)).abs() < 1e-10);
    }

    #[test]
    fn monotone_cubic_preserves_order(steps in prop::collection::vec(0.0f64..1.0, 2..12)) {
        let xs: Vec<f64> = (0..=steps.len()).map(|i| i as f64).collect();
        let mut ys = vec![0.0];
        for s in &steps {
            ys.push(ys.last().unwrap() + s);
        }
        let top = *ys.last().unwrap();
        let m = MonotoneCubic::new(xs, ys);
        let mut prev = m.eval(0.0);
        for j in 1..=200 {
            let v = m.eval(steps.len() as f64 * j as f64 / 200.0);
            prop_assert!(v >= prev - 1e-12 && v <= top + 1e-12);
            prev = v;
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn neumann_solutions_have_zero_mean(
        coef in prop::array::uniform4(-3.0f64..3.0),
        square in any::<bool>(),
    ) {
        let spec = if square {
            CrossSectionSpec::Polygon {
                vertices: vec![[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]],
            }
        } else {
            CrossSectionSpec::Disk { radius: 1.0 }
        };
        let mesh = build_mesh(&spec, 10).unwrap();
        let f: Vec<f64> = mesh
            .nodes
            .iter()
            .map(|p| coef[0] + coef[1] * p[0] + coef[2] * p[1] * p[1] + coef[3] * (p[0] * p[1]).sin())
            .collect();
        // constant flux that makes the load compatible
        let total: f64 = f.iter().zip(&mesh.mass).map(|(a, m)| a * m).sum();
        let perimeter: f64 = mesh.edges.iter().map(|e| e.length).sum();
        let g = vec![total / perimeter; mesh.edges.len()];
        let sol = solve_neumann(&mesh, &NeumannData { f: &f, w: None, wn: None, g: &g, magnitude: 0.0 }).unwrap();
        prop_assert!(sol.relative < 1e-10);
        prop_assert!(mesh.mean(&sol.u).abs() < 1e-8 * (1.0 + mesh.l2(&sol.u)));
    }

    #[test]
    fn cauchy_limit_is_pointwise_in_x(k in 0.2f64..2.0, b in -0.5f64..0.5, n in 8usize..24) {
        let mut cfg = scenario("high-peclet-beta3");
        cfg.interaction.catalog = InteractionCatalog::LinearUptake { k, b };
        let coarse = thincyl::model::GridSpec { nx: n, nt: 20, ..cfg.grid.clone() };
        let fine = thincyl::model::GridSpec { nx: 2 * n, ..coarse.clone() };
        let a = solve_cauchy_limit(&cfg, &coarse).unwrap();
        let f = solve_cauchy_limit(&cfg, &fine).unwrap();
        for kk in 0..=20 {
            for i in 0..=n {
                prop_assert_eq!(a.w0.at(i, kk).to_bits(), f.w0.at(2 * i, kk).to_bits());
            }
        }
    }
}
