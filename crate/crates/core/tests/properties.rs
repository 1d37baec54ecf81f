//! Randomized invariants of the pointwise algebra, the flow map, the norms
//! and the linear solver.

use std::f64::consts::PI;

use hvp::analysis::norms::NormSuite;
use hvp::fields::{enforce_dirichlet, validate_state, Grid, RheologyParams, StateField};
use hvp::lagrangian::{invertibility_check, FlowMap, DET_FLOOR};
use hvp::linear_solver::{solve_linear_ivp, Scheme};
use hvp::nonlinear::{picard_solve, PicardConfig};
use hvp::operators::assemble_operator_matrix;
use hvp::rheology::{
    coeff_tensor, delta_reg, delta_sq, ice_strength, parabolicity_margin, quadratic_form, stress_sigma_s_form,
    stress_sigma_with_strength, sym_eigenvalues, symbol_matrix, Strain,
};
use hvp::scenario;
use hvp::thermo::{source_a, source_h, GrowthRate};
use proptest::prelude::*;

fn strain() -> impl Strategy<Value = Strain> {
    (-4.0f64..2.0, -1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0)
        .prop_map(|(m, a, b, c)| {
            let s = 10f64.powf(m);
            Strain::new(s * a, s * b, s * c)
        })
}

fn rel(a: f64, b: f64) -> f64 {
    let s = a.abs().max(b.abs());
    if s == 0.0 {
        0.0
    } else {
        (a - b).abs() / s
    }
}

/// A smooth velocity with random mode amplitudes, zero on the boundary.
fn smooth_velocity(grid: &Grid, c: [f64; 4]) -> Vec<[f64; 2]> {
    grid.sample_vec(|x| {
        let b = (PI * x[0]).sin() * (PI * x[1]).sin();
        let b2 = (2.0 * PI * x[0]).sin() * (PI * x[1]).sin();
        [c[0] * b + c[1] * b2, c[2] * b + c[3] * b2]
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn quadratic_form_matches_deformation(eps in strain(), e in 1.2f64..3.0) {
        prop_assert!(rel(delta_sq(&eps, e), quadratic_form(&eps, e)) <= 1e-12);
    }

    #[test]
    fn regularized_deformation_is_floored(eps in strain(), dexp in -12.0f64..0.0) {
        let delta = 10f64.powf(dexp);
        prop_assert!(delta_reg(&eps, delta, 2.0) >= delta.sqrt());
    }

    #[test]
    fn stress_formulas_agree(eps in strain(), h in 1e-3f64..5.0, a in 0.01f64..0.99) {
        let p = RheologyParams::default();
        let s = ice_strength(h, a, &p);
        let s1 = stress_sigma_with_strength(&eps, s, &p);
        let s2 = stress_sigma_s_form(&eps, s, &p);
        let scale = s1.iter().flatten().fold(0.0f64, |m, x| m.max(x.abs()));
        for i in 0..2 {
            for j in 0..2 {
                prop_assert!((s1[i][j] - s2[i][j]).abs() <= 1e-12 * scale);
            }
        }
    }

    #[test]
    fn coefficients_have_index_symmetry(eps in strain(), h in 1e-3f64..5.0, a in 0.01f64..0.99) {
        let c = coeff_tensor(&eps, h, a, &RheologyParams::default()).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                for k in 0..2 {
                    for l in 0..2 {
                        prop_assert_eq!(c.a[i][j][k][l], c.a[j][i][l][k]);
                    }
                }
            }
        }
    }

    #[test]
    fn symbol_is_negative_definite(eps in strain(), h in 1e-3f64..5.0, a in 0.3f64..0.99, th in 0.0f64..(2.0 * PI)) {
        let p = RheologyParams::default();
        prop_assume!(ice_strength(h, a, &p) >= 1e-6);
        let c = coeff_tensor(&eps, h, a, &p).unwrap();
        let (_, hi) = sym_eigenvalues(&symbol_matrix(&c, [th.cos(), th.sin()]).unwrap());
        let bound = parabolicity_margin(&c, h, &p);
        prop_assert!(bound < 0.0);
        prop_assert!(hi <= bound * (1.0 - 1e-9), "max eig {hi} above {bound}");
    }

    #[test]
    fn nonnegative_growth_gives_nonnegative_sources(g in 0.0f64..2.0, h in 1e-3f64..5.0, a in 0.01f64..0.99) {
        let kappa = 1e-3;
        let f = GrowthRate::Tanh { g0: g };
        prop_assert!(source_h(h, a, &f).unwrap() >= 0.0);
        // only the opening term survives
        let expect = if g > 0.0 { g / kappa * (1.0 - a) } else { 0.0 };
        prop_assert!(rel(source_a(h, a, &f, kappa).unwrap(), expect) <= 1e-14);
    }

    #[test]
    fn raising_thickness_keeps_state_admissible(bump in 0.0f64..3.0, n in 4usize..10) {
        let g = Grid::unit(n).unwrap();
        let p = RheologyParams::default();
        let u = scenario::smooth_state(&g);
        prop_assert!(validate_state(&u, &p).unwrap().in_v);
        let mut w = u.clone();
        for (k, h) in w.h.iter_mut().enumerate() {
            *h += bump * (k % 3) as f64;
        }
        prop_assert!(validate_state(&w, &p).unwrap().in_v);
    }

    #[test]
    fn dirichlet_enforcement_is_idempotent(c in prop::array::uniform4(-3.0f64..3.0), n in 4usize..10) {
        let g = Grid::unit(n).unwrap();
        let v: Vec<[f64; 2]> = g.sample_vec(|x| [c[0] + c[1] * x[0], c[2] * x[1] + c[3]]);
        let once = enforce_dirichlet(&g, &v);
        prop_assert_eq!(enforce_dirichlet(&g, &once), once);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn flow_map_steps_split_exactly_for_steady_velocity(c in prop::array::uniform4(-1.0f64..1.0), dt in 1e-4f64..1e-2) {
        let g = Grid::unit(9).unwrap();
        let v = smooth_velocity(&g, c);
        let id = FlowMap::identity(&g);
        let one = id.advance(&g, &v, &v, 2.0 * dt);
        let two = id.advance(&g, &v, &v, dt).advance(&g, &v, &v, dt);
        for p in 0..g.len() {
            for k in 0..2 {
                prop_assert!((one.disp[p][k] - two.disp[p][k]).abs() <= 1e-14);
                for l in 0..2 {
                    prop_assert!((one.grad_x[p][k][l] - two.grad_x[p][k][l]).abs() <= 1e-14);
                }
            }
        }
    }

    #[test]
    fn health_flag_survives_shrinking_the_displacement(c in prop::array::uniform4(-3.0f64..3.0), dt in 0.01f64..0.2, s in 0.0f64..1.0) {
        let g = Grid::unit(9).unwrap();
        let v = smooth_velocity(&g, c);
        let map = FlowMap::identity(&g).advance(&g, &v, &v, dt);
        if invertibility_check(&map).flag {
            prop_assert!(invertibility_check(&map.scaled(s)).flag);
        }
    }

    #[test]
    fn inverse_gradient_inverts(c in prop::array::uniform4(-2.0f64..2.0), dt in 0.0f64..0.1) {
        let g = Grid::unit(9).unwrap();
        let v = smooth_velocity(&g, c);
        let map = FlowMap::identity(&g).advance(&g, &v, &v, dt);
        prop_assume!(invertibility_check(&map).flag);
        let gy = map.checked_inverse(DET_FLOOR).unwrap();
        for (m, y) in map.grad_x.iter().zip(&gy) {
            for i in 0..2 {
                for j in 0..2 {
                    let e = y[i][0] * m[0][j] + y[i][1] * m[1][j];
                    let id = if i == j { 1.0 } else { 0.0 };
                    prop_assert!((e - id).abs() <= 1e-10);
                }
            }
        }
    }

    #[test]
    fn norms_are_homogeneous_and_subadditive(c in prop::array::uniform4(-2.0f64..2.0), d in prop::array::uniform4(-2.0f64..2.0), lam in -5.0f64..5.0) {
        let g = Grid::unit(8).unwrap();
        let mk = |c: [f64; 4]| {
            StateField::from_fn(&g, |x| {
                let b = (PI * x[0]).sin() * (PI * x[1]).sin();
                ([c[0] * b, c[1] * b], c[2] * x[0] * x[1], c[3] * (PI * x[1]).cos())
            })
        };
        let (u, w) = (mk(c), mk(d));
        let n = NormSuite::default();
        for f in [NormSuite::x0, NormSuite::x1, NormSuite::gamma] {
            let nu = f(&n, &g, &u);
            prop_assert!((f(&n, &g, &u.scale(lam)) - lam.abs() * nu).abs() <= 1e-12 * nu.max(1.0) * lam.abs().max(1.0));
            let sum = f(&n, &g, &u.add_scaled(1.0, &w));
            prop_assert!(sum <= nu + f(&n, &g, &w) + 1e-12 * sum.max(1.0));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn linear_solve_is_linear(al in -2.0f64..2.0, be in -2.0f64..2.0) {
        let g = Grid::unit(7).unwrap();
        let p = RheologyParams { delta: 0.25, c_bullet: 2.0, ..RheologyParams::default() };
        let op = assemble_operator_matrix(&g, &scenario::smooth_state(&g), &p, 2.0).unwrap();
        let data = |s: f64| StateField::from_fn(&g, |x| {
            let b = (PI * x[0]).sin() * (PI * x[1]).sin();
            ([s * b, b], s + x[0], x[1] - s)
        });
        let rhs = |s: f64| vec![data(s).scale(0.3); 6];
        let norms = NormSuite::default();
        let solve = |u0: &StateField, f: &[StateField]| solve_linear_ivp(&g, &op, u0, f, 0.05, 0.01, Scheme::Trapezoidal, &norms).unwrap();
        let (a, b) = (data(1.0), data(-0.5));
        let (fa, fb) = (rhs(1.0), rhs(-0.5));
        let combo_f: Vec<StateField> = fa.iter().zip(&fb).map(|(x, y)| x.scale(al).add_scaled(be, y)).collect();
        let ua = solve(&a, &fa);
        let ub = solve(&b, &fb);
        let uc = solve(&a.scale(al).add_scaled(be, &b), &combo_f);
        for k in 0..uc.states.len() {
            let expect = ua.states[k].scale(al).add_scaled(be, &ub.states[k]);
            let err = uc.states[k].sub(&expect).max_abs();
            prop_assert!(err <= 1e-10 * expect.max_abs().max(1.0), "node {k}: {err}");
        }
    }
}

#[test]
fn picard_is_deterministic() {
    let g = Grid::unit(10).unwrap();
    let u0 = scenario::smooth_state(&g);
    let p = scenario::default_params();
    let f = scenario::smooth_forcing();
    let cfg = PicardConfig { t_end: 0.02, dt: 5e-3, ..PicardConfig::default() };
    let a = picard_solve(&g, &u0, &p, &f, &cfg).unwrap();
    let b = picard_solve(&g, &u0, &p, &f, &cfg).unwrap();
    assert_eq!(a.solution.states, b.solution.states);
    assert_eq!(a.state.deltas, b.state.deltas);
}

#[test]
fn opening_term_vanishes_as_concentration_saturates() {
    let f = GrowthRate::constant(0.5);
    let kappa = 1e-3;
    let mut last = f64::INFINITY;
    for k in 1..8 {
        let a = 1.0 - 10f64.powi(-k);
        let s = source_a(1.0, a, &f, kappa).unwrap();
        assert!(s < last);
        last = s;
    }
    assert!(last < 1e-3);
}
