//! Time integration of the frozen-coefficient linear problem
//! `du/dt + Op u = f` and the reference solution that carries the initial
//! data.

use serde::{Deserialize, Serialize};

use crate::analysis::norms::NormSuite;
use crate::error::{Error, Result};
use crate::fields::{validate_state, Grid, RheologyParams, StateField};
use crate::operators::{assemble_operator_matrix, Layout, OperatorMatrix};
use crate::sparse::{inf_norm, SparseLu};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    #[default]
    BackwardEuler,
    Trapezoidal,
}

impl Scheme {
    pub fn name(&self) -> &'static str {
        match self {
            Scheme::BackwardEuler => "backward-euler",
            Scheme::Trapezoidal => "trapezoidal",
        }
    }
}

/// States on a uniform time grid.
#[derive(Debug, Clone)]
pub struct LinearTrajectory {
    pub times: Vec<f64>,
    pub states: Vec<StateField>,
    /// Relative residual of each implicit solve.
    pub residuals: Vec<f64>,
    pub omega: f64,
    /// Discrete maximal-regularity quotient, when computed.
    pub mr_quotient: Option<f64>,
}

impl LinearTrajectory {
    pub fn dt(&self) -> f64 {
        if self.times.len() < 2 {
            0.0
        } else {
            self.times[1] - self.times[0]
        }
    }

    pub fn last(&self) -> &StateField {
        self.states.last().expect("trajectory holds at least the initial state")
    }
}

/// Number of steps and the step that divides `t_end` exactly.
pub fn time_grid(t_end: f64, dt: f64) -> Result<(usize, f64)> {
    if !(t_end >= 0.0 && dt > 0.0 && t_end.is_finite() && dt.is_finite()) {
        return Err(Error::Param(format!("need T >= 0 and dt > 0, got T = {t_end}, dt = {dt}")));
    }
    if t_end == 0.0 {
        return Ok((0, dt));
    }
    let n = ((t_end / dt).round() as usize).max(1);
    Ok((n, t_end / n as f64))
}

/// Factored implicit step for one operator, step size and scheme.
pub struct LinearStepper {
    op: OperatorMatrix,
    lu: SparseLu,
    pub scheme: Scheme,
    pub dt: f64,
}

impl LinearStepper {
    pub fn new(op: &OperatorMatrix, dt: f64, scheme: Scheme) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::Param(format!("dt must be positive, got {dt}")));
        }
        let beta = match scheme {
            Scheme::BackwardEuler => dt,
            Scheme::Trapezoidal => 0.5 * dt,
        };
        let lu = SparseLu::new(op.shifted_system(beta, 1.0))?;
        Ok(Self { op: op.clone(), lu, scheme, dt })
    }

    pub fn layout(&self) -> Layout {
        self.op.layout
    }

    pub fn operator(&self) -> &OperatorMatrix {
        &self.op
    }

    /// Advances packed vectors; returns the new state and the relative
    /// residual of the solve.
    pub fn step(&self, x_n: &[f64], f_n: &[f64], f_np1: &[f64]) -> Result<(Vec<f64>, f64)> {
        let dt = self.dt;
        let b: Vec<f64> = match self.scheme {
            Scheme::BackwardEuler => x_n.iter().zip(f_np1).map(|(x, f)| x + dt * f).collect(),
            Scheme::Trapezoidal => {
                let ax = self.op.apply(x_n);
                x_n.iter()
                    .zip(&ax)
                    .zip(f_n.iter().zip(f_np1))
                    .map(|((x, a), (f0, f1))| x - 0.5 * dt * a + 0.5 * dt * (f0 + f1))
                    .collect()
            }
        };
        let x = self.lu.solve(&b)?;
        let mut r = b.clone();
        self.lu.matrix().mul_vec_add(&x, -1.0, &mut r);
        let bn = inf_norm(&b);
        let res = if bn == 0.0 { 0.0 } else { inf_norm(&r) / bn };
        Ok((x, res))
    }
}

/// One step of `du/dt + Op u = f`.
pub fn step_linear(
    grid: &Grid,
    op: &OperatorMatrix,
    u_n: &StateField,
    f_n: &StateField,
    f_np1: &StateField,
    dt: f64,
    scheme: Scheme,
) -> Result<StateField> {
    let st = LinearStepper::new(op, dt, scheme)?;
    let lay = op.layout;
    let (x, _) = st.step(&lay.pack(grid, u_n), &lay.pack(grid, f_n), &lay.pack(grid, f_np1))?;
    Ok(lay.unpack(grid, &x))
}

/// Solves the linear problem with forcing sampled at `t_0, ..., t_N` and
/// reports the discrete maximal-regularity quotient
/// `|u|_E1 / (|f|_E0 + |u0|_gamma)` (zero when numerator and denominator
/// both vanish).
pub fn solve_linear_ivp(
    grid: &Grid,
    op: &OperatorMatrix,
    u0: &StateField,
    rhs: &[StateField],
    t_end: f64,
    dt: f64,
    scheme: Scheme,
    norms: &NormSuite,
) -> Result<LinearTrajectory> {
    let (n, dt) = time_grid(t_end, dt)?;
    if rhs.len() != n + 1 {
        return Err(Error::Param(format!(
            "forcing has {} samples, the time grid needs {}",
            rhs.len(),
            n + 1
        )));
    }
    let mut traj = integrate(grid, op, u0, n, dt, scheme, |k| rhs[k].clone())?;
    let num = norms.e1(grid, &traj.states, dt);
    let den = norms.e0(grid, rhs, dt) + norms.gamma(grid, u0);
    traj.mr_quotient = Some(if num == 0.0 && den == 0.0 { 0.0 } else { num / den });
    Ok(traj)
}

/// Shared time loop; `forcing(k)` returns the forcing at `t_k`.
pub fn integrate<F>(
    grid: &Grid,
    op: &OperatorMatrix,
    u0: &StateField,
    n: usize,
    dt: f64,
    scheme: Scheme,
    mut forcing: F,
) -> Result<LinearTrajectory>
where
    F: FnMut(usize) -> StateField,
{
    u0.check_shape(grid)?;
    let lay = op.layout;
    let mut times = vec![0.0];
    let mut states = vec![u0.clone()];
    let mut residuals = Vec::with_capacity(n);
    if n > 0 {
        let st = LinearStepper::new(op, dt, scheme)?;
        let mut x = lay.pack(grid, u0);
        let mut f_prev = lay.pack(grid, &forcing(0));
        for k in 1..=n {
            let f_next = lay.pack(grid, &forcing(k));
            let (xn, res) = st.step(&x, &f_prev, &f_next)?;
            x = xn;
            f_prev = f_next;
            times.push(k as f64 * dt);
            states.push(lay.unpack(grid, &x));
            residuals.push(res);
        }
    }
    Ok(LinearTrajectory { times, states, residuals, omega: op.omega, mr_quotient: None })
}

/// Summary numbers of a reference solution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceReport {
    /// Discrete `E1` norm of the trajectory.
    pub c_t_star: f64,
    /// `sup_t |u*(t) - u0|_gamma`.
    pub trace_dev: f64,
}

/// Homogeneous problem `du/dt + Op(u0) u = 0`, `u(0) = u0`.
pub fn solve_reference(
    grid: &Grid,
    u0: &StateField,
    params: &RheologyParams,
    t_end: f64,
    dt: f64,
    omega: f64,
    scheme: Scheme,
    norms: &NormSuite,
) -> Result<(LinearTrajectory, ReferenceReport)> {
    let rep = validate_state(u0, params)?;
    if !rep.in_v {
        return Err(Error::Inadmissible(format!(
            "reference solution needs initial data in V (min h - kappa = {:.3e}, a-margin = {:.3e})",
            rep.margin_h, rep.margin_a
        )));
    }
    let op = assemble_operator_matrix(grid, u0, params, omega)?;
    reference_with_operator(grid, &op, u0, t_end, dt, scheme, norms)
}

pub fn reference_with_operator(
    grid: &Grid,
    op: &OperatorMatrix,
    u0: &StateField,
    t_end: f64,
    dt: f64,
    scheme: Scheme,
    norms: &NormSuite,
) -> Result<(LinearTrajectory, ReferenceReport)> {
    let (n, dt) = time_grid(t_end, dt)?;
    let zero = StateField::zeros(grid.len());
    let traj = integrate(grid, op, u0, n, dt, scheme, |_| zero.clone())?;
    let c_t_star = norms.e1(grid, &traj.states, dt);
    let trace_dev = traj
        .states
        .iter()
        .map(|u| norms.gamma(grid, &u.sub(u0)))
        .fold(0.0, f64::max);
    Ok((traj, ReferenceReport { c_t_star, trace_dev }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{apply_dirichlet, RheologyParams};
    use approx::assert_relative_eq;

    fn params() -> RheologyParams {
        RheologyParams { delta: 0.25, c_bullet: 2.0, ..RheologyParams::default() }
    }

    fn state(g: &Grid) -> StateField {
        StateField::from_fn(g, |x| {
            let s = (std::f64::consts::PI * x[0]).sin() * (std::f64::consts::PI * x[1]).sin();
            ([0.2 * s, 0.1 * s], 1.0 + 0.1 * x[0], 0.6 - 0.1 * x[1])
        })
    }

    #[test]
    fn zero_in_zero_out() {
        let g = Grid::unit(8).unwrap();
        let op = assemble_operator_matrix(&g, &state(&g), &params(), 1.0).unwrap();
        let z = StateField::zeros(g.len());
        for s in [Scheme::BackwardEuler, Scheme::Trapezoidal] {
            assert_eq!(step_linear(&g, &op, &z, &z, &z, 0.01, s).unwrap(), z);
        }
    }

    #[test]
    fn pure_shift_is_scalar_recurrence() {
        let g = Grid::unit(6).unwrap();
        let op = assemble_operator_matrix(&g, &state(&g), &params(), 2.0).unwrap();
        let lay = op.layout;
        let zero_blocks = OperatorMatrix {
            hibler: crate::sparse::CsrMatrix::zeros(lay.nv(), lay.nv()),
            b1: crate::sparse::CsrMatrix::zeros(lay.nv(), 2 * lay.n),
            h_div: crate::sparse::CsrMatrix::zeros(lay.n, lay.nv()),
            a_div: crate::sparse::CsrMatrix::zeros(lay.n, lay.nv()),
            ..op
        };
        let u = state(&g);
        let z = StateField::zeros(g.len());
        let out = step_linear(&g, &zero_blocks, &u, &z, &z, 0.1, Scheme::BackwardEuler).unwrap();
        for p in 0..g.len() {
            assert_relative_eq!(out.h[p], u.h[p] / 1.2, max_relative = 1e-14);
            assert_relative_eq!(out.v[p][0], u.v[p][0] / 1.2, max_relative = 1e-14);
        }
    }

    #[test]
    fn superposition() {
        let g = Grid::unit(8).unwrap();
        let op = assemble_operator_matrix(&g, &state(&g), &params(), 1.0).unwrap();
        let z = StateField::zeros(g.len());
        let n = 4;
        let f1: Vec<StateField> = (0..=n).map(|k| state(&g).scale(k as f64)).collect();
        let f2: Vec<StateField> = (0..=n)
            .map(|k| {
                let mut u = StateField::from_fn(&g, |x| ([x[1], -x[0]], x[0] * x[1], 1.0));
                apply_dirichlet(&g, &mut u.v);
                u.scale(1.0 - 0.1 * k as f64)
            })
            .collect();
        let fs: Vec<StateField> = f1.iter().zip(&f2).map(|(a, b)| a.add_scaled(1.0, b)).collect();
        let norms = NormSuite::default();
        for s in [Scheme::BackwardEuler, Scheme::Trapezoidal] {
            let a = solve_linear_ivp(&g, &op, &z, &f1, 0.04, 0.01, s, &norms).unwrap();
            let b = solve_linear_ivp(&g, &op, &z, &f2, 0.04, 0.01, s, &norms).unwrap();
            let c = solve_linear_ivp(&g, &op, &z, &fs, 0.04, 0.01, s, &norms).unwrap();
            for k in 0..=n {
                let d = c.states[k].sub(&a.states[k].add_scaled(1.0, &b.states[k]));
                assert!(d.max_abs() <= 1e-10 * c.states[k].max_abs().max(1.0));
            }
        }
        let zs = vec![z.clone(); n + 1];
        let t = solve_linear_ivp(&g, &op, &z, &zs, 0.04, 0.01, Scheme::Trapezoidal, &norms).unwrap();
        assert!(t.states.iter().all(|u| *u == z));
        assert_eq!(t.mr_quotient, Some(0.0));
    }

    #[test]
    fn constant_state_reference_decays_geometrically() {
        let g = Grid::unit(8).unwrap();
        let p = RheologyParams::default();
        let u0 = StateField::constant(&g, [0.0, 0.0], 1.5, 0.4);
        let (traj, rep) = solve_reference(&g, &u0, &p, 0.5, 0.1, 2.0, Scheme::BackwardEuler, &NormSuite::default()).unwrap();
        for (k, u) in traj.states.iter().enumerate() {
            let f = (1.0f64 + 0.2).powi(-(k as i32));
            for q in 0..g.len() {
                assert_relative_eq!(u.h[q], 1.5 * f, max_relative = 1e-12);
                assert_relative_eq!(u.a[q], 0.4 * f, max_relative = 1e-12);
                assert!(u.v[q][0].abs() < 1e-18 && u.v[q][1].abs() < 1e-18);
            }
        }
        assert!(rep.c_t_star > 0.0);
    }

    #[test]
    fn reference_rejects_inadmissible_data() {
        let g = Grid::unit(6).unwrap();
        let p = RheologyParams::default();
        let u0 = StateField::constant(&g, [0.0, 0.0], 1.0, 1.0);
        assert!(matches!(
            solve_reference(&g, &u0, &p, 0.1, 0.05, 1.0, Scheme::BackwardEuler, &NormSuite::default()),
            Err(Error::Inadmissible(_))
        ));
    }

    #[test]
    fn single_step_is_continuous_at_zero() {
        let g = Grid::unit(8).unwrap();
        let p = params();
        let u0 = state(&g);
        let norms = NormSuite::default();
        let mut last = f64::INFINITY;
        for dt in [1e-2, 1e-3, 1e-4] {
            let (traj, _) = solve_reference(&g, &u0, &p, dt, dt, 1.0, Scheme::BackwardEuler, &norms).unwrap();
            let d = traj.last().sub(&u0).max_abs();
            assert!(d < last);
            last = d;
        }
        assert!(last < 1e-3);
    }
}
