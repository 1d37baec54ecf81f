//! Agreement between the Lagrangian pipeline and the Eulerian reference.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::Result;
use crate::eulerian::{run_eulerian, Switches};
use crate::fields::{ForcingFields, Grid, RheologyParams, StateField, Vec2};
use crate::lagrangian::{compose_scalar, compose_vec, Direction};
use crate::nonlinear::{picard_solve, PicardConfig};

/// One refinement level: nodes per side and time step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Level {
    pub n: usize,
    pub dt: f64,
}

/// The default ladder 16, 32, 64 with `dt` proportional to `dx`.
pub fn default_levels() -> Vec<Level> {
    vec![Level { n: 16, dt: 4e-3 }, Level { n: 32, dt: 2e-3 }, Level { n: 64, dt: 1e-3 }]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CrossRow {
    pub n: usize,
    pub dt: f64,
    pub rel_v: f64,
    pub rel_h: f64,
    pub rel_a: f64,
    pub picard_iterations: usize,
    /// Inverse sample points that fell outside the domain.
    pub clamped: usize,
}

fn weighted_sq(grid: &Grid, f: impl Fn(usize) -> f64) -> f64 {
    (0..grid.len()).map(|p| grid.quadrature_weight(p) * f(p).powi(2)).sum()
}

/// `|a - b|_{L2} / |b|_{L2}` (absolute when `b` vanishes).
pub fn rel_l2(grid: &Grid, a: &[f64], b: &[f64]) -> f64 {
    let num = weighted_sq(grid, |p| a[p] - b[p]).sqrt();
    let den = weighted_sq(grid, |p| b[p]).sqrt();
    if den == 0.0 {
        num
    } else {
        num / den
    }
}

pub fn rel_l2_vec(grid: &Grid, a: &[Vec2], b: &[Vec2]) -> f64 {
    let num = weighted_sq(grid, |p| (a[p][0] - b[p][0]).hypot(a[p][1] - b[p][1])).sqrt();
    let den = weighted_sq(grid, |p| b[p][0].hypot(b[p][1])).sqrt();
    if den == 0.0 {
        num
    } else {
        num / den
    }
}

/// Solves on every level with both pipelines from the same data and
/// compares the Eulerian fields at `t = T`.
pub fn cross_check<F>(
    init: F,
    params: &RheologyParams,
    forcing: &ForcingFields,
    t_end: f64,
    levels: &[Level],
    cfg: &PicardConfig,
) -> Result<Vec<CrossRow>>
where
    F: Fn(&Grid) -> StateField + Sync,
{
    levels
        .par_iter()
        .map(|lv| {
            let grid = Grid::unit(lv.n)?;
            let u0 = init(&grid);
            let c = PicardConfig { t_end, dt: lv.dt, max_halvings: 0, ..*cfg };
            let lag = picard_solve(&grid, &u0, params, forcing, &c)?;
            let map = lag.state.maps.last().expect("flow map at every node");
            let last = lag.solution.last();
            let (v, clamped) = compose_vec(&grid, &last.v, map, Direction::Inverse)?;
            let (h, _) = compose_scalar(&grid, &last.h, map, Direction::Inverse)?;
            let (a, _) = compose_scalar(&grid, &last.a, map, Direction::Inverse)?;
            let eul = run_eulerian(&grid, &u0, params, forcing, t_end, lv.dt, Switches::default())?;
            let e = eul.last();
            Ok(CrossRow {
                n: lv.n,
                dt: lv.dt,
                rel_v: rel_l2_vec(&grid, &v, &e.v),
                rel_h: rel_l2(&grid, &h, &e.h),
                rel_a: rel_l2(&grid, &a, &e.a),
                picard_iterations: lag.state.k,
                clamped,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn resting_ice_agrees_exactly() {
        let p = RheologyParams { delta: 0.25, c_bullet: 2.0, ..RheologyParams::default() };
        let cfg = PicardConfig { omega: Some(0.0), ..PicardConfig::default() };
        let rows = cross_check(
            |g| StateField::constant(g, [0.0, 0.0], 1.0, 0.5),
            &p,
            &ForcingFields::none(),
            0.02,
            &[Level { n: 8, dt: 0.01 }, Level { n: 12, dt: 0.005 }],
            &cfg,
        )
        .unwrap();
        for r in rows {
            assert!(r.rel_v < 1e-12 && r.rel_h < 1e-12 && r.rel_a < 1e-12, "{r:?}");
        }
    }
}
