//! The fixed-point iteration in Lagrangian coordinates.
//!
//! The linear operator is frozen at the initial data `u0` once per horizon.
//! Each iterate `u_hat` is a deviation from the reference solution `u*` of
//! the homogeneous problem, so `u~ = u_hat + u*` carries the initial data.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::norms::NormSuite;
use crate::error::{Error, Result};
use crate::fields::{validate_state, ForcingFields, Grid, RheologyParams, StateField};
use crate::lagrangian::{invertibility_check, FlowMap, HealthReport, DET_FLOOR};
use crate::linear_solver::{time_grid, LinearStepper, LinearTrajectory, Scheme};
use crate::operators::diff::Stencils;
use crate::operators::{assemble_operator_matrix, select_omega, OperatorMatrix, SectorReport};

use super::rhs::{assemble_rhs, RhsContext};
use super::transformed::Geometry;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PicardConfig {
    #[serde(rename = "T")]
    pub t_end: f64,
    pub dt: f64,
    pub tol: f64,
    pub kmax: usize,
    pub max_halvings: usize,
    /// Consecutive non-contracting steps that trigger a halving.
    pub stall_limit: usize,
    pub scheme: Scheme,
    /// Fixed shift; selected by the sector probe when absent.
    pub omega: Option<f64>,
    pub proxy_n: usize,
    pub sector_margin: f64,
    pub det_floor: f64,
}

impl Default for PicardConfig {
    fn default() -> Self {
        Self {
            t_end: 0.05,
            dt: 2.5e-3,
            tol: 1e-8,
            kmax: 40,
            max_halvings: 6,
            stall_limit: 3,
            scheme: Scheme::BackwardEuler,
            omega: None,
            proxy_n: 8,
            sector_margin: 0.05,
            det_floor: DET_FLOOR,
        }
    }
}

impl PicardConfig {
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.t_end > 0.0) {
            out.push(format!("solver.T = {} violates \"T > 0\"", self.t_end));
        }
        if !(self.dt > 0.0) {
            out.push(format!("solver.dt = {} violates \"dt > 0\"", self.dt));
        }
        if !(self.tol > 0.0) {
            out.push(format!("solver.tol = {} violates \"tol > 0\"", self.tol));
        }
        if self.kmax == 0 {
            out.push("solver.kmax must be at least 1".into());
        }
        if self.stall_limit == 0 {
            out.push("solver.stall_limit must be at least 1".into());
        }
        if let Some(w) = self.omega {
            if !(w >= 0.0 && w.is_finite()) {
                out.push(format!("solver.omega = {w} violates \"omega >= 0\""));
            }
        }
        if self.proxy_n < 4 {
            out.push(format!("solver.proxy_n = {} violates \"proxy_n >= 4\"", self.proxy_n));
        }
        if !(self.det_floor > 0.0 && self.det_floor < 1.0) {
            out.push(format!("solver.det_floor = {} violates \"0 < det_floor < 1\"", self.det_floor));
        }
        out
    }
}

/// One row of the iteration log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IterRecord {
    pub attempt: usize,
    pub t_end: f64,
    pub k: usize,
    pub delta: f64,
    pub ratio: Option<f64>,
    /// Worst flow-map deviation over the time nodes of the input iterate.
    pub sup_dev: f64,
    pub min_det: f64,
    pub margin_h: f64,
    pub margin_a: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    Converged,
}

/// Final state of an accepted iteration.
#[derive(Debug, Clone)]
pub struct PicardState {
    pub k: usize,
    pub u_hat: Vec<StateField>,
    pub u_tilde: Vec<StateField>,
    pub maps: Vec<FlowMap>,
    pub deltas: Vec<f64>,
    pub ratios: Vec<f64>,
    pub health: Vec<HealthReport>,
}

impl PicardState {
    pub fn max_ratio(&self) -> f64 {
        self.ratios.iter().copied().fold(0.0, f64::max)
    }

    pub fn strictly_decreasing(&self) -> bool {
        self.deltas.windows(2).all(|w| w[1] < w[0])
    }
}

#[derive(Debug, Clone)]
pub struct PicardOutcome {
    pub state: PicardState,
    pub solution: LinearTrajectory,
    pub reference: Vec<StateField>,
    pub omega: f64,
    pub sector: Option<SectorReport>,
    pub t_final: f64,
    pub halvings: usize,
    pub termination: Termination,
    pub log: Vec<IterRecord>,
}

/// Flow maps of `v` along the trajectory by trapezoidal quadrature.
pub fn flow_maps(grid: &Grid, traj: &[StateField], dt: f64) -> Vec<FlowMap> {
    let mut maps = Vec::with_capacity(traj.len());
    maps.push(FlowMap::identity(grid));
    for w in traj.windows(2) {
        let next = maps.last().expect("non-empty").advance(grid, &w[0].v, &w[1].v, dt);
        maps.push(next);
    }
    maps
}

/// Health check first, inverse gradient only for healthy maps.
pub fn geometries(
    grid: &Grid,
    st: &Stencils,
    maps: &[FlowMap],
    det_floor: f64,
) -> Result<(Vec<Geometry>, Vec<HealthReport>)> {
    let health: Vec<HealthReport> = maps.iter().map(invertibility_check).collect();
    if let Some((map, h)) = maps.iter().zip(&health).find(|(_, h)| !h.flag) {
        return Err(Error::InvertibilityLost {
            node: h.worst_node,
            t: map.t,
            reason: format!("sup |grad X - Id| = {:.4} exceeds 1/2", h.sup_dev),
        });
    }
    let geos = maps
        .par_iter()
        .map(|m| Ok(Geometry::new(grid, st, m.checked_inverse(det_floor)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok((geos, health))
}

/// Frozen data of one horizon.
struct Horizon {
    n: usize,
    dt: f64,
    stepper: LinearStepper,
    reference: Vec<StateField>,
}

impl Horizon {
    fn new(grid: &Grid, op: &OperatorMatrix, u0: &StateField, t_end: f64, dt: f64, scheme: Scheme) -> Result<Self> {
        let (n, dt) = time_grid(t_end, dt)?;
        let stepper = LinearStepper::new(op, dt, scheme)?;
        let lay = op.layout;
        let zero = vec![0.0; lay.dim()];
        let mut x = lay.pack(grid, u0);
        let mut reference = Vec::with_capacity(n + 1);
        reference.push(u0.clone());
        for _ in 0..n {
            x = stepper.step(&x, &zero, &zero)?.0;
            reference.push(lay.unpack(grid, &x));
        }
        Ok(Self { n, dt, stepper, reference })
    }

    fn tilde(&self, u0: &StateField, u_hat: &[StateField]) -> Vec<StateField> {
        u_hat
            .iter()
            .zip(&self.reference)
            .enumerate()
            .map(|(k, (h, r))| if k == 0 { u0.clone() } else { h.add_scaled(1.0, r) })
            .collect()
    }
}

/// `F(u~)` at every time node.
pub fn rhs_trajectory(
    ctx: &RhsContext<'_>,
    traj: &[StateField],
    maps: &[FlowMap],
    geos: &[Geometry],
    dt: f64,
) -> Result<Vec<StateField>> {
    (0..traj.len())
        .into_par_iter()
        .map(|k| assemble_rhs(ctx, &traj[k], &maps[k], &geos[k], k as f64 * dt))
        .collect()
}

fn min_margins(traj: &[StateField], params: &RheologyParams) -> Result<(f64, f64)> {
    let mut mh = f64::INFINITY;
    let mut ma = f64::INFINITY;
    for u in traj {
        let r = validate_state(u, params)?;
        mh = mh.min(r.margin_h);
        ma = ma.min(r.margin_a);
    }
    Ok((mh, ma))
}

enum Attempt {
    Done(PicardState),
    Halve(Error),
}

#[allow(clippy::too_many_arguments)]
fn iterate(
    grid: &Grid,
    st: &Stencils,
    ctx: &RhsContext<'_>,
    hz: &Horizon,
    cfg: &PicardConfig,
    attempt: usize,
    t_end: f64,
    log: &mut Vec<IterRecord>,
) -> Result<Attempt> {
    let u0 = ctx.u0;
    let params = ctx.params;
    let norms = NormSuite::default();
    let lay = hz.stepper.layout();
    let zero = StateField::zeros(grid.len());
    let mut u_hat = vec![zero.clone(); hz.n + 1];
    let mut deltas: Vec<f64> = Vec::new();
    let mut ratios: Vec<f64> = Vec::new();
    let mut scale = 1.0;
    let mut stalls = 0usize;

    for k in 0..cfg.kmax {
        let tilde = hz.tilde(u0, &u_hat);
        let maps = flow_maps(grid, &tilde, hz.dt);
        let (geos, health) = match geometries(grid, st, &maps, cfg.det_floor) {
            Ok(g) => g,
            Err(e @ Error::InvertibilityLost { .. }) => return Ok(Attempt::Halve(e)),
            Err(e) => return Err(e),
        };
        let f = rhs_trajectory(ctx, &tilde, &maps, &geos, hz.dt)?;

        let mut next = Vec::with_capacity(hz.n + 1);
        next.push(zero.clone());
        let mut x = vec![0.0; lay.dim()];
        let mut f_prev = lay.pack(grid, &f[0]);
        for fk in &f[1..] {
            let f_next = lay.pack(grid, fk);
            x = hz.stepper.step(&x, &f_prev, &f_next)?.0;
            f_prev = f_next;
            next.push(lay.unpack(grid, &x));
        }

        let diff: Vec<StateField> = next.iter().zip(&u_hat).map(|(a, b)| a.sub(b)).collect();
        let delta = norms.e1(grid, &diff, hz.dt);
        if !delta.is_finite() {
            return Err(Error::CorruptState { field: "picard iterate", node: 0 });
        }
        let ratio = deltas.last().map(|&d| if d > 0.0 { delta / d } else { 0.0 });
        if k == 0 {
            scale = delta.max(1.0);
        }
        let (margin_h, margin_a) = min_margins(&tilde, params)?;
        let sup_dev = health.iter().map(|h| h.sup_dev).fold(0.0, f64::max);
        let min_det = health.iter().map(|h| h.min_det).fold(f64::INFINITY, f64::min);
        log.push(IterRecord { attempt, t_end, k: k + 1, delta, ratio, sup_dev, min_det, margin_h, margin_a });
        log::debug!("T = {t_end:.4e}, k = {}: delta = {delta:.3e}, ratio = {ratio:?}", k + 1);

        deltas.push(delta);
        if let Some(r) = ratio {
            ratios.push(r);
            stalls = if r >= 1.0 { stalls + 1 } else { 0 };
        }
        u_hat = next;

        if k >= 1 && delta <= cfg.tol * scale || delta == 0.0 {
            let u_tilde = hz.tilde(u0, &u_hat);
            for (i, u) in u_tilde.iter().enumerate() {
                let r = validate_state(u, params)?;
                if !r.in_v {
                    return Err(Error::Blowup { t: i as f64 * hz.dt, margin_h: r.margin_h, margin_a: r.margin_a });
                }
            }
            let maps = flow_maps(grid, &u_tilde, hz.dt);
            let health: Vec<HealthReport> = maps.iter().map(invertibility_check).collect();
            if let Some(h) = health.iter().find(|h| !h.flag) {
                return Ok(Attempt::Halve(Error::InvertibilityLost {
                    node: h.worst_node,
                    t: h.t,
                    reason: format!("final flow: sup |grad X - Id| = {:.4} exceeds 1/2", h.sup_dev),
                }));
            }
            return Ok(Attempt::Done(PicardState { k: k + 1, u_hat, u_tilde, maps, deltas, ratios, health }));
        }
        if stalls >= cfg.stall_limit {
            return Ok(Attempt::Halve(Error::NoConvergence {
                iterations: k + 1,
                last_delta: delta,
                target: cfg.tol * scale,
            }));
        }
    }
    Ok(Attempt::Halve(Error::NoConvergence {
        iterations: cfg.kmax,
        last_delta: deltas.last().copied().unwrap_or(f64::NAN),
        target: cfg.tol * scale,
    }))
}

/// Solves the transformed system on `[0, T]` by Picard iteration.
///
/// The horizon is halved after a flow-map health failure or after
/// `stall_limit` consecutive ratios `r_k >= 1`; once `max_halvings` is
/// exhausted the last failure is returned. Leaving the admissible set is
/// never retried.
pub fn picard_solve(
    grid: &Grid,
    u0: &StateField,
    params: &RheologyParams,
    forcing: &ForcingFields,
    cfg: &PicardConfig,
) -> Result<PicardOutcome> {
    let v = cfg.violations();
    if !v.is_empty() {
        return Err(Error::Config(v));
    }
    params.validate()?;
    u0.check_shape(grid)?;
    let rep = validate_state(u0, params)?;
    if !rep.in_v {
        return Err(Error::Inadmissible(format!(
            "initial data outside V (min h - kappa = {:.3e}, a-margin = {:.3e})",
            rep.margin_h, rep.margin_a
        )));
    }
    let (omega, sector) = match cfg.omega {
        Some(w) => (w, None),
        None => {
            let (w, r) = select_omega(grid, u0, params, cfg.proxy_n, cfg.sector_margin)?;
            (w, Some(r))
        }
    };
    let op = assemble_operator_matrix(grid, u0, params, omega)?;
    picard_with_operator(grid, u0, params, forcing, cfg, &op, sector)
}

/// As [`picard_solve`] with the frozen operator (and its shift) given.
pub fn picard_with_operator(
    grid: &Grid,
    u0: &StateField,
    params: &RheologyParams,
    forcing: &ForcingFields,
    cfg: &PicardConfig,
    op: &OperatorMatrix,
    sector: Option<SectorReport>,
) -> Result<PicardOutcome> {
    let st = Stencils::new(grid);
    let ctx = RhsContext { grid, stencils: &st, params, forcing, u0, op };
    let mut log = Vec::new();
    let mut t_end = cfg.t_end;
    let mut halvings = 0;
    loop {
        // the step never exceeds the horizon
        let hz = Horizon::new(grid, op, u0, t_end, cfg.dt.min(t_end), cfg.scheme)?;
        match iterate(grid, &st, &ctx, &hz, cfg, halvings, t_end, &mut log)? {
            Attempt::Done(state) => {
                let times: Vec<f64> = (0..=hz.n).map(|k| k as f64 * hz.dt).collect();
                let solution = LinearTrajectory {
                    times,
                    states: state.u_tilde.clone(),
                    residuals: Vec::new(),
                    omega: op.omega,
                    mr_quotient: None,
                };
                return Ok(PicardOutcome {
                    state,
                    solution,
                    reference: hz.reference,
                    omega: op.omega,
                    sector,
                    t_final: t_end,
                    halvings,
                    termination: Termination::Converged,
                    log,
                });
            }
            Attempt::Halve(e) => {
                if halvings >= cfg.max_halvings {
                    return Err(e);
                }
                log::info!("halving horizon T = {t_end:.4e} after: {e}");
                halvings += 1;
                t_end *= 0.5;
            }
        }
    }
}

/// Backward-Euler residual of the transformed system along a trajectory,
/// `(u_{n+1} - u_n)/dt + Op u_{n+1} - F(u_{n+1})`, and its `E0` norm.
pub fn transformed_residual(
    grid: &Grid,
    u0: &StateField,
    params: &RheologyParams,
    forcing: &ForcingFields,
    op: &OperatorMatrix,
    traj: &[StateField],
    dt: f64,
    det_floor: f64,
) -> Result<(Vec<StateField>, f64)> {
    let st = Stencils::new(grid);
    let ctx = RhsContext { grid, stencils: &st, params, forcing, u0, op };
    let maps = flow_maps(grid, traj, dt);
    let (geos, _) = geometries(grid, &st, &maps, det_floor)?;
    let f = rhs_trajectory(&ctx, traj, &maps, &geos, dt)?;
    let lay = op.layout;
    let mut res = vec![StateField::zeros(grid.len())];
    for k in 1..traj.len() {
        let x = lay.pack(grid, &traj[k]);
        let xp = lay.pack(grid, &traj[k - 1]);
        let ax = op.apply(&x);
        let fk = lay.pack(grid, &f[k]);
        let r: Vec<f64> = (0..x.len()).map(|i| (x[i] - xp[i]) / dt + ax[i] - fk[i]).collect();
        res.push(lay.unpack(grid, &r));
    }
    let norm = NormSuite::default().e0(grid, &res, dt);
    Ok((res, norm))
}

/// One row of the dependence table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DependenceRow {
    pub s: f64,
    pub diff_e1: f64,
    pub data_gamma: f64,
    pub ratio: f64,
}

/// Runs the solver from `u0` and from `u0 + s phi` for every size `s` and
/// reports `|u~(u0 + s phi) - u~(u0)|_E1 / |s phi|_gamma`.
///
/// The shift and the frozen operator come from the unperturbed data and
/// are reused for the perturbed runs, so both solves share one horizon.
pub fn dependence_experiment(
    grid: &Grid,
    u0: &StateField,
    phi: &StateField,
    sizes: &[f64],
    params: &RheologyParams,
    forcing: &ForcingFields,
    cfg: &PicardConfig,
) -> Result<Vec<DependenceRow>> {
    let norms = NormSuite::default();
    let base = picard_solve(grid, u0, params, forcing, cfg)?;
    let fixed = PicardConfig { omega: Some(base.omega), t_end: base.t_final, max_halvings: 0, ..*cfg };
    let dt = base.solution.dt();
    sizes
        .par_iter()
        .map(|&s| {
            let d = phi.scale(s);
            let u1 = u0.add_scaled(1.0, &d);
            let data_gamma = norms.gamma(grid, &d);
            if s == 0.0 {
                return Ok(DependenceRow { s, diff_e1: 0.0, data_gamma, ratio: 0.0 });
            }
            let out = picard_solve(grid, &u1, params, forcing, &fixed)?;
            let diff: Vec<StateField> =
                out.solution.states.iter().zip(&base.solution.states).map(|(a, b)| a.sub(b)).collect();
            let diff_e1 = norms.e1(grid, &diff, dt);
            Ok(DependenceRow { s, diff_e1, data_gamma, ratio: diff_e1 / data_gamma })
        })
        .collect()
}
