//! Split semi-implicit solver of the untransformed system on the fixed grid.
//!
//! One step runs, in order:
//!
//! 1. first-order upwind advection of `v`, `h` and `a` (explicit, closed
//!    boundary, conservative for `h` and `a`);
//! 2. the stress divergence `(1/m) div sigma_delta`, implicit in `v` with
//!    viscosities and strength lagged at the start of the step;
//! 3. Coriolis, tilt, wind and water drag, and the thermodynamic sources
//!    (explicit).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{apply_dirichlet, validate_state, ForcingFields, Grid, RheologyParams, StateField, Vec2};
use crate::linear_solver::time_grid;
use crate::nonlinear::drag;
use crate::operators::{diff, Layout};
use crate::rheology::{self, s_apply, Strain};
use crate::sparse::{CsrMatrix, SparseLu};
use crate::thermo;

/// Largest admissible advective Courant number.
pub const CFL_MAX: f64 = 0.5;

/// Terms of the split step that are switched on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Switches {
    pub advection: bool,
    pub stress: bool,
    pub forcing: bool,
    pub sources: bool,
}

impl Default for Switches {
    fn default() -> Self {
        Self { advection: true, stress: true, forcing: true, sources: true }
    }
}

/// Impulses `sum_p dt * (force per area)` delivered by one step, summed
/// over the interior nodes.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepBudget {
    pub stress: Vec2,
    pub coriolis: Vec2,
    pub tilt: Vec2,
    pub drag: Vec2,
}

#[derive(Debug, Clone)]
pub struct EulerianTrajectory {
    pub times: Vec<f64>,
    pub states: Vec<StateField>,
    pub cfl: Vec<f64>,
    /// `(min h - kappa, a-margin)` at every stored node.
    pub margins: Vec<(f64, f64)>,
}

impl EulerianTrajectory {
    pub fn last(&self) -> &StateField {
        self.states.last().expect("trajectory holds at least the initial state")
    }
}

/// `(|v1| + |v2|) dt / dx` maximized over nodes.
pub fn cfl_number(grid: &Grid, v: &[Vec2], dt: f64) -> f64 {
    let h = grid.dx.min(grid.dy);
    v.iter().map(|w| (w[0].abs() + w[1].abs()) * dt / h).fold(0.0, f64::max)
}

fn check_cfl(grid: &Grid, v: &[Vec2], dt: f64) -> Result<f64> {
    let c = cfl_number(grid, v, dt);
    if !(c <= CFL_MAX) {
        let speed = c / dt * grid.dx.min(grid.dy);
        let suggested_dt = 0.9 * CFL_MAX * grid.dx.min(grid.dy) / speed;
        return Err(Error::Cfl { cfl: c, suggested_dt });
    }
    Ok(c)
}

/// Upwind face flux `u_f * f_upwind` with `u_f` the average of the two
/// node velocities.
#[inline]
fn face_flux(u_l: f64, u_r: f64, f_l: f64, f_r: f64) -> f64 {
    let uf = 0.5 * (u_l + u_r);
    if uf >= 0.0 {
        uf * f_l
    } else {
        uf * f_r
    }
}

/// Conservative upwind `div(v f)` at every node; no flux crosses the
/// domain boundary.
pub fn upwind_div_flux(grid: &Grid, v: &[Vec2], f: &[f64]) -> Vec<f64> {
    let (nx, ny) = (grid.nx, grid.ny);
    let mut out = vec![0.0; grid.len()];
    for j in 0..ny {
        for i in 0..nx - 1 {
            let (l, r) = (grid.idx(i, j), grid.idx(i + 1, j));
            let fl = face_flux(v[l][0], v[r][0], f[l], f[r]) / grid.dx;
            out[l] += fl;
            out[r] -= fl;
        }
    }
    for j in 0..ny - 1 {
        for i in 0..nx {
            let (b, t) = (grid.idx(i, j), grid.idx(i, j + 1));
            let fl = face_flux(v[b][1], v[t][1], f[b], f[t]) / grid.dy;
            out[b] += fl;
            out[t] -= fl;
        }
    }
    out
}

/// Upwind `(v . grad) w` at interior nodes (zero on the boundary ring).
pub fn upwind_transport(grid: &Grid, v: &[Vec2], w: &[Vec2]) -> Vec<Vec2> {
    let mut out = vec![[0.0; 2]; grid.len()];
    let steps = [(1usize, grid.dx), (grid.nx, grid.dy)];
    for &p in grid.interior() {
        for (axis, &(s, h)) in steps.iter().enumerate() {
            let c = v[p][axis];
            for k in 0..2 {
                let d = if c >= 0.0 { (w[p][k] - w[p - s][k]) / h } else { (w[p + s][k] - w[p][k]) / h };
                out[p][k] += c * d;
            }
        }
    }
    out
}

/// `K[p][i][j][k][l]` with `sigma_ij = sum_kl K_ijkl d_l v_k`, frozen at
/// the strain of `u`.
fn lagged_viscosity(grid: &Grid, u: &StateField, params: &RheologyParams) -> Vec<[[[[f64; 2]; 2]; 2]; 2]> {
    let g = diff::grad_vec(grid, &u.v);
    let mut unit = [[[[0.0; 2]; 2]; 2]; 2];
    for k in 0..2 {
        for l in 0..2 {
            let mut e = [[0.0; 2]; 2];
            e[k][l] = 1.0;
            let s = s_apply(&Strain::from_gradient(&e), params.e);
            for i in 0..2 {
                for j in 0..2 {
                    unit[i][j][k][l] = s[i][j];
                }
            }
        }
    }
    (0..grid.len())
        .map(|p| {
            let eps = Strain::from_gradient(&g[p]);
            let p_str = rheology::ice_strength(u.h[p], u.a[p], params);
            let c = 0.5 * p_str / rheology::delta_reg(&eps, params.delta, params.e);
            let mut k = unit;
            for x in k.iter_mut().flatten().flatten().flatten() {
                *x *= c;
            }
            k
        })
        .collect()
}

/// Triplets of `v -> div(K grad v)` over interior unknowns, compact for
/// the aligned second differences and central for the mixed ones.
fn stress_triplets(grid: &Grid, lay: &Layout, kv: &[[[[[f64; 2]; 2]; 2]; 2]]) -> Vec<(usize, usize, f64)> {
    let steps = [(1isize, grid.dx), (grid.nx as isize, grid.dy)];
    let mut t = Vec::new();
    let mut push = |row: usize, q: usize, comp: usize, w: f64| {
        if let Some(s) = grid.interior_slot(q) {
            t.push((row, lay.v_index(s, comp), w));
        }
    };
    let off = |p: usize, d: isize| (p as isize + d) as usize;
    for (slot, &p) in grid.interior().iter().enumerate() {
        for i in 0..2 {
            let row = lay.v_index(slot, i);
            for j in 0..2 {
                let (sj, hj) = steps[j];
                for k in 0..2 {
                    for l in 0..2 {
                        if j == l {
                            let kp = 0.5 * (kv[p][i][j][k][l] + kv[off(p, sj)][i][j][k][l]) / (hj * hj);
                            let km = 0.5 * (kv[p][i][j][k][l] + kv[off(p, -sj)][i][j][k][l]) / (hj * hj);
                            push(row, off(p, sj), k, kp);
                            push(row, off(p, -sj), k, km);
                            push(row, p, k, -(kp + km));
                        } else {
                            let (sl, hl) = steps[l];
                            for (dir, sign) in [(sj, 1.0), (-sj, -1.0)] {
                                let q = off(p, dir);
                                let c = sign * kv[q][i][j][k][l] / (2.0 * hj * 2.0 * hl);
                                push(row, off(q, sl), k, c);
                                push(row, off(q, -sl), k, -c);
                            }
                        }
                    }
                }
            }
        }
    }
    t
}

/// Advances `u_n` by one split step. Returns the new state, the Courant
/// number and the impulse budget.
pub fn step_eulerian(
    grid: &Grid,
    u_n: &StateField,
    params: &RheologyParams,
    forcing: &ForcingFields,
    t: f64,
    dt: f64,
    sw: Switches,
) -> Result<(StateField, f64, StepBudget)> {
    if let Some((field, node)) = u_n.first_non_finite() {
        return Err(Error::CorruptState { field, node });
    }
    let cfl = if sw.advection { check_cfl(grid, &u_n.v, dt)? } else { cfl_number(grid, &u_n.v, dt) };
    let n = grid.len();
    let mut budget = StepBudget::default();

    // advection
    let mut u = u_n.clone();
    if sw.advection {
        let dh = upwind_div_flux(grid, &u_n.v, &u_n.h);
        let da = upwind_div_flux(grid, &u_n.v, &u_n.a);
        let dv = upwind_transport(grid, &u_n.v, &u_n.v);
        for p in 0..n {
            u.h[p] -= dt * dh[p];
            u.a[p] -= dt * da[p];
            u.v[p][0] -= dt * dv[p][0];
            u.v[p][1] -= dt * dv[p][1];
        }
        apply_dirichlet(grid, &mut u.v);
    }
    let mass: Vec<f64> = u.h.iter().map(|h| params.rho_ice * h).collect();
    if let Some(p) = u.h.iter().position(|&h| !(h > 0.0)) {
        return Err(Error::Domain(format!("non-positive thickness {} after advection at node {p}", u.h[p])));
    }

    // stress, implicit with lagged viscosity
    if sw.stress {
        let lay = Layout::new(grid);
        let kv = lagged_viscosity(grid, u_n, params);
        let mut trip: Vec<(usize, usize, f64)> =
            stress_triplets(grid, &lay, &kv).into_iter().map(|(r, c, w)| (r, c, -w)).collect();
        let p_str: Vec<f64> = (0..n).map(|p| rheology::ice_strength(u_n.h[p], u_n.a[p], params)).collect();
        let gp = diff::grad(grid, &p_str);
        let mut rhs = vec![0.0; lay.nv()];
        for (slot, &p) in grid.interior().iter().enumerate() {
            for i in 0..2 {
                let r = lay.v_index(slot, i);
                trip.push((r, r, mass[p] / dt));
                rhs[r] = mass[p] / dt * u.v[p][i] - 0.5 * gp[p][i];
            }
        }
        let m = CsrMatrix::from_triplets(lay.nv(), lay.nv(), trip);
        let x = SparseLu::new(m)?.solve(&rhs)?;
        let v_new = lay.unpack_v(grid, &x);
        for &p in grid.interior() {
            for i in 0..2 {
                budget.stress[i] += mass[p] * (v_new[p][i] - u.v[p][i]);
            }
        }
        u.v = v_new;
    }

    // explicit forcing
    if sw.forcing {
        let va = forcing.v_atm.sample(grid, t);
        let vo = forcing.v_ocn.sample(grid, t);
        let gh = forcing.grad_h.sample(grid, t);
        let v_old = u.v.clone();
        for &p in grid.interior() {
            let v = v_old[p];
            let (ta, to) = drag(params, va[p], vo[p], v);
            let cor = [params.c_cor * v[1], -params.c_cor * v[0]];
            for i in 0..2 {
                let c = dt * mass[p] * cor[i];
                let tl = -dt * mass[p] * params.g * gh[p][i];
                let dr = dt * (ta[i] + to[i]);
                u.v[p][i] += (c + tl + dr) / mass[p];
                budget.coriolis[i] += c;
                budget.tilt[i] += tl;
                budget.drag[i] += dr;
            }
        }
    }

    if sw.sources {
        for p in 0..n {
            let (h, a) = (u.h[p], u.a[p]);
            let sh = thermo::source_h(h, a, &forcing.growth)?;
            let sa = thermo::source_a(h, a, &forcing.growth, params.kappa)?;
            u.h[p] += dt * sh;
            u.a[p] += dt * sa;
        }
    }
    if let Some((field, node)) = u.first_non_finite() {
        return Err(Error::CorruptState { field, node });
    }
    Ok((u, cfl, budget))
}

/// Time loop over [`step_eulerian`] on `[0, T]`.
pub fn run_eulerian(
    grid: &Grid,
    u0: &StateField,
    params: &RheologyParams,
    forcing: &ForcingFields,
    t_end: f64,
    dt: f64,
    sw: Switches,
) -> Result<EulerianTrajectory> {
    u0.check_shape(grid)?;
    params.validate()?;
    let (n, dt) = time_grid(t_end, dt)?;
    let margin = |u: &StateField| -> Result<(f64, f64)> {
        let r = validate_state(u, params)?;
        Ok((r.margin_h, r.margin_a))
    };
    let mut traj = EulerianTrajectory {
        times: vec![0.0],
        states: vec![u0.clone()],
        cfl: Vec::with_capacity(n),
        margins: vec![margin(u0)?],
    };
    for k in 0..n {
        let (u, c, _) = step_eulerian(grid, traj.last(), params, forcing, k as f64 * dt, dt, sw)?;
        traj.margins.push(margin(&u)?);
        traj.cfl.push(c);
        traj.states.push(u);
        traj.times.push((k + 1) as f64 * dt);
    }
    Ok(traj)
}
