//! Manufactured-solution studies for the frozen-coefficient linear solver.
//!
//! A smooth `u_ex(t, x)` is pushed through the operator to obtain the
//! forcing `f = du_ex/dt + Op u_ex`, the linear problem is solved with that
//! forcing and the error at `t = T` is measured. Two forcings are used:
//!
//! - the continuous operator, evaluated pointwise with derivatives of the
//!   analytic fields, for the spatial study;
//! - the assembled matrix applied to nodal samples, which removes the
//!   spatial error and isolates the time discretization.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::Serialize;

use crate::analysis::norms::NormSuite;
use crate::error::Result;
use crate::fields::{Grid, RheologyParams, StateField, Vec2};
use crate::linear_solver::{solve_linear_ivp, time_grid, Scheme};
use crate::operators::{assemble_operator_matrix, OperatorMatrix};
use crate::rheology::{coeff_tensor, s_apply, strength_derivatives, Strain};

/// `(v1, v2, h, a)` as a function of `(t, x)`.
pub type Field = Arc<dyn Fn(f64, Vec2) -> [f64; 4] + Send + Sync>;

const STEP: f64 = 1e-3;

/// Fourth-order central first derivative of a scalar function.
fn d1(f: impl Fn(f64) -> [f64; 4], s: f64) -> [f64; 4] {
    let (a, b, c, d) = (f(s + 2.0 * STEP), f(s + STEP), f(s - STEP), f(s - 2.0 * STEP));
    std::array::from_fn(|i| (-a[i] + 8.0 * b[i] - 8.0 * c[i] + d[i]) / (12.0 * STEP))
}

fn d2(f: impl Fn(f64) -> [f64; 4], s: f64) -> [f64; 4] {
    let (a, b, m, c, d) = (f(s + 2.0 * STEP), f(s + STEP), f(s), f(s - STEP), f(s - 2.0 * STEP));
    std::array::from_fn(|i| (-a[i] + 16.0 * b[i] - 30.0 * m[i] + 16.0 * c[i] - d[i]) / (12.0 * STEP * STEP))
}

fn shift(x: Vec2, k: usize, s: f64) -> Vec2 {
    let mut y = x;
    y[k] = s;
    y
}

/// `grad[c][k] = d_k u_c` at `(t, x)`.
fn gradient(u: &Field, t: f64, x: Vec2) -> [[f64; 2]; 4] {
    let gx = d1(|s| u(t, shift(x, 0, s)), x[0]);
    let gy = d1(|s| u(t, shift(x, 1, s)), x[1]);
    std::array::from_fn(|c| [gx[c], gy[c]])
}

/// `hess[c][k][l] = d_k d_l u_c` at `(t, x)`.
fn hessian(u: &Field, t: f64, x: Vec2) -> [[[f64; 2]; 2]; 4] {
    let hxx = d2(|s| u(t, shift(x, 0, s)), x[0]);
    let hyy = d2(|s| u(t, shift(x, 1, s)), x[1]);
    let hxy = d1(|s| d1(|r| u(t, [r, s]), x[0]), x[1]);
    std::array::from_fn(|c| [[hxx[c], hxy[c]], [hxy[c], hyy[c]]])
}

/// `Op u` of the continuous operator frozen at `u1`, evaluated at one
/// point. The velocity entry is meaningful in the interior only.
pub fn continuous_operator(u1: &Field, u: &Field, t: f64, x: Vec2, params: &RheologyParams, omega: f64) -> [f64; 4] {
    let w1 = u1(0.0, x);
    let g1 = gradient(u1, 0.0, x);
    let (h1, a1) = (w1[2], w1[3]);
    let eps1 = Strain::from_gradient(&[g1[0], g1[1]]);
    let c = coeff_tensor(&eps1, h1, a1, params).expect("manufactured frozen state is admissible");
    let (dph, dpa) = strength_derivatives(h1, a1, params);
    let m = 2.0 * params.rho_ice * h1;
    let lower = 1.0 / (m * c.delta_reg);
    let gp = [dph * g1[2][0] + dpa * g1[3][0], dph * g1[2][1] + dpa * g1[3][1]];

    let w = u(t, x);
    let g = gradient(u, t, x);
    let hs = hessian(u, t, x);
    let se = s_apply(&Strain::from_gradient(&[g[0], g[1]]), params.e);
    let mut out = [0.0; 4];
    for i in 0..2 {
        // A v = -sum a_ijkl d_k d_l v_j + lower sum_j d_j P1 (S eps(v))_ij
        let mut av = 0.0;
        for j in 0..2 {
            for k in 0..2 {
                for l in 0..2 {
                    av -= c.a[i][j][k][l] * hs[j][k][l];
                }
            }
            av += lower * gp[j] * se[i][j];
        }
        out[i] = -av + (dph * g[2][i] + dpa * g[3][i]) / m + omega * w[i];
    }
    let div = g[0][0] + g[1][1];
    out[2] = h1 * div + omega * w[2];
    out[3] = a1 * div + omega * w[3];
    out
}

fn sample(grid: &Grid, u: &Field, t: f64) -> StateField {
    StateField::from_fn(grid, |x| {
        let w = u(t, x);
        ([w[0], w[1]], w[2], w[3])
    })
}

fn time_derivative(u: &Field, t: f64, x: Vec2) -> [f64; 4] {
    d1(|s| u(s, x), t)
}

/// Forcing from the continuous operator.
pub fn continuous_forcing(grid: &Grid, u1: &Field, u: &Field, t: f64, params: &RheologyParams, omega: f64) -> StateField {
    StateField::from_fn(grid, |x| {
        let dt = time_derivative(u, t, x);
        let op = continuous_operator(u1, u, t, x, params, omega);
        ([dt[0] + op[0], dt[1] + op[1]], dt[2] + op[2], dt[3] + op[3])
    })
}

/// Forcing from the assembled matrix, so nodal samples of `u` solve the
/// semi-discrete problem exactly.
pub fn discrete_forcing(grid: &Grid, op: &OperatorMatrix, u: &Field, t: f64) -> StateField {
    let lay = op.layout;
    let ax = lay.unpack(grid, &op.apply(&lay.pack(grid, &sample(grid, u, t))));
    let mut f = StateField::from_fn(grid, |x| {
        let dt = time_derivative(u, t, x);
        ([dt[0], dt[1]], dt[2], dt[3])
    });
    for p in 0..grid.len() {
        f.v[p][0] += ax.v[p][0];
        f.v[p][1] += ax.v[p][1];
        f.h[p] += ax.h[p];
        f.a[p] += ax.a[p];
    }
    f
}

/// Largest nodal error over all components (velocity on interior nodes).
pub fn max_error(grid: &Grid, u: &StateField, exact: &StateField) -> f64 {
    let mut e = 0.0f64;
    for p in 0..grid.len() {
        if !grid.is_boundary(p) {
            e = e.max((u.v[p][0] - exact.v[p][0]).abs()).max((u.v[p][1] - exact.v[p][1]).abs());
        }
        e = e.max((u.h[p] - exact.h[p]).abs()).max((u.a[p] - exact.a[p]).abs());
    }
    e
}

/// Parameters used by the studies: a mildly regularized, weakly
/// concentration-sensitive rheology keeps the coefficients moderate.
pub fn mms_params() -> RheologyParams {
    RheologyParams { delta: 0.25, c_bullet: 2.0, ..RheologyParams::default() }
}

/// The frozen state of the studies.
pub fn frozen_state() -> Field {
    Arc::new(|_t, x| {
        let b = (PI * x[0]).sin() * (PI * x[1]).sin();
        [0.4 * b, -0.2 * b * (1.0 + x[0]), 1.0 + 0.2 * x[0] * x[1], 0.5 + 0.1 * (PI * x[1]).cos()]
    })
}

/// The manufactured solution of the studies.
pub fn manufactured() -> Field {
    Arc::new(|t, x| {
        let s = (3.0 * t).cos();
        let c = 1.0 + 0.5 * (2.0 * t).sin();
        let b = (PI * x[0]).sin() * (PI * x[1]).sin();
        [
            s * b * (1.0 + 0.5 * x[1]),
            c * 0.5 * (PI * x[0]).sin() * (2.0 * PI * x[1]).sin(),
            1.0 + 0.2 * c * (PI * x[0]).cos() * (PI * x[1]).cos(),
            0.5 + 0.1 * s * (PI * x[0]).sin() * (PI * x[1]).cos(),
        ]
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MmsRow {
    pub n: usize,
    pub dt: f64,
    pub error: f64,
    /// Observed order against the previous row.
    pub order: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MmsReport {
    pub spatial: Vec<MmsRow>,
    pub temporal_be: Vec<MmsRow>,
    pub temporal_trap: Vec<MmsRow>,
}

/// What to run.
#[derive(Debug, Clone, PartialEq)]
pub struct MmsConfig {
    pub t_end: f64,
    pub omega: f64,
    /// Nodes per side of the spatial ladder; `dt = cfl * dx`.
    pub grids: Vec<usize>,
    pub cfl: f64,
    /// Grid and step ladder of the temporal study.
    pub temporal_grid: usize,
    pub steps: Vec<f64>,
}

impl Default for MmsConfig {
    fn default() -> Self {
        Self {
            t_end: 0.4,
            omega: 1.0,
            grids: vec![16, 32, 64],
            cfl: 0.5,
            temporal_grid: 32,
            steps: vec![0.04, 0.02, 0.01],
        }
    }
}

fn with_orders(mut rows: Vec<MmsRow>, scale: impl Fn(&MmsRow) -> f64) -> Vec<MmsRow> {
    for k in 1..rows.len() {
        let (a, b) = (&rows[k - 1], &rows[k]);
        rows[k].order = Some((a.error / b.error).ln() / (scale(a) / scale(b)).ln());
    }
    rows
}

/// Error at `T` of the linear solve on one grid with one step.
pub fn mms_error(
    n: usize,
    dt: f64,
    scheme: Scheme,
    continuous: bool,
    u1: &Field,
    u: &Field,
    params: &RheologyParams,
    t_end: f64,
    omega: f64,
) -> Result<f64> {
    let grid = Grid::unit(n)?;
    let s1 = sample(&grid, u1, 0.0);
    let op = assemble_operator_matrix(&grid, &s1, params, omega)?;
    let (steps, dt) = time_grid(t_end, dt)?;
    let rhs: Vec<StateField> = (0..=steps)
        .map(|k| {
            let t = k as f64 * dt;
            if continuous {
                continuous_forcing(&grid, u1, u, t, params, omega)
            } else {
                discrete_forcing(&grid, &op, u, t)
            }
        })
        .collect();
    let u0 = sample(&grid, u, 0.0);
    let traj = solve_linear_ivp(&grid, &op, &u0, &rhs, t_end, dt, scheme, &NormSuite::default())?;
    Ok(max_error(&grid, traj.last(), &sample(&grid, u, t_end)))
}

pub fn mms_study(cfg: &MmsConfig) -> Result<MmsReport> {
    let params = mms_params();
    let (u1, u) = (frozen_state(), manufactured());
    let spatial = cfg
        .grids
        .iter()
        .map(|&n| {
            let dt = cfg.cfl / (n - 1) as f64;
            let error = mms_error(n, dt, Scheme::Trapezoidal, true, &u1, &u, &params, cfg.t_end, cfg.omega)?;
            Ok(MmsRow { n, dt, error, order: None })
        })
        .collect::<Result<Vec<_>>>()?;
    let temporal = |scheme: Scheme| -> Result<Vec<MmsRow>> {
        let rows = cfg
            .steps
            .iter()
            .map(|&dt| {
                let error =
                    mms_error(cfg.temporal_grid, dt, scheme, false, &u1, &u, &params, cfg.t_end, cfg.omega)?;
                Ok(MmsRow { n: cfg.temporal_grid, dt, error, order: None })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(with_orders(rows, |r| r.dt))
    };
    Ok(MmsReport {
        spatial: with_orders(spatial, |r| 1.0 / (r.n - 1) as f64),
        temporal_be: temporal(Scheme::BackwardEuler)?,
        temporal_trap: temporal(Scheme::Trapezoidal)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bilinear_thickness_is_reproduced_to_rounding() {
        // v = 0, h and a bilinear in space and linear in time: every stencil
        // is exact and the trapezoidal rule integrates the forcing exactly
        let u: Field = Arc::new(|t, x| [0.0, 0.0, (1.0 + t) * (1.0 + 0.1 * x[0] * x[1]), 0.5 + 0.1 * t * x[0]]);
        let e = mms_error(12, 0.05, Scheme::Trapezoidal, true, &frozen_state(), &u, &mms_params(), 0.2, 1.0).unwrap();
        assert!(e < 1e-9, "{e}");
    }

    #[test]
    fn discrete_forcing_leaves_only_time_error() {
        // time-independent u: any step reproduces it
        let u: Field = Arc::new(|_t, x| {
            let b = (PI * x[0]).sin() * (PI * x[1]).sin();
            [b, 0.5 * b, 1.0 + 0.1 * x[0], 0.5]
        });
        let e = mms_error(10, 0.1, Scheme::BackwardEuler, false, &frozen_state(), &u, &mms_params(), 0.3, 1.0).unwrap();
        assert!(e < 1e-9, "{e}");
    }

    #[test]
    fn continuous_operator_matches_assembly_at_the_centre() {
        let (u1, u) = (frozen_state(), manufactured());
        let p = mms_params();
        let mut errs = Vec::new();
        for n in [17, 33] {
            let g = Grid::unit(n).unwrap();
            let op = assemble_operator_matrix(&g, &sample(&g, &u1, 0.0), &p, 1.0).unwrap();
            let lay = op.layout;
            let ax = lay.unpack(&g, &op.apply(&lay.pack(&g, &sample(&g, &u, 0.1))));
            let c = g.idx(n / 2, n / 2);
            let ex = continuous_operator(&u1, &u, 0.1, g.point(c), &p, 1.0);
            errs.push((ax.v[c][0] - ex[0]).abs() + (ax.v[c][1] - ex[1]).abs() + (ax.h[c] - ex[2]).abs());
        }
        // second order: the error drops by about four
        assert!(errs[0] / errs[1] > 3.0, "{errs:?}");
    }
}
