//! The flow map of the ice velocity and its inverse gradient.
//!
//! `X(t, y) = y + int_0^t v(s, y) ds` follows the material point that sat
//! at `y` at time zero. Gradients are stored as Jacobians: `grad_x[p][a][b]`
//! is `d X_a / d y_b`, and the inverse gradient `grad_y[p][m][k]` is
//! `d Y_m / d x_k` evaluated at `X(t, y_p)`.

use crate::error::{Error, Result};
use crate::fields::{det2, Grid, Mat2, Vec2, IDENTITY};
use crate::operators::diff;

/// Default lower bound on `det grad X` before inversion is refused.
pub const DET_FLOOR: f64 = 0.25;

#[derive(Debug, Clone, PartialEq)]
pub struct FlowMap {
    pub t: f64,
    /// `X(t, y) - y` per node.
    pub disp: Vec<Vec2>,
    pub grad_x: Vec<Mat2>,
}

/// Pointwise health of a flow map.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HealthReport {
    pub t: f64,
    /// `sup_p |grad X - Id|` in the max-row-sum norm.
    pub sup_dev: f64,
    pub min_det: f64,
    /// `sup_p |Id - grad Y|` in the max-row-sum norm (infinite if singular).
    pub sup_dev_y: f64,
    /// Node attaining `sup_dev`.
    pub worst_node: usize,
    /// `sup_dev <= 1/2`.
    pub flag: bool,
}

/// Max-row-sum norm of a 2x2 matrix.
pub fn row_sum_norm(m: &Mat2) -> f64 {
    (m[0][0].abs() + m[0][1].abs()).max(m[1][0].abs() + m[1][1].abs())
}

fn dev_from_identity(m: &Mat2) -> f64 {
    row_sum_norm(&[[m[0][0] - 1.0, m[0][1]], [m[1][0], m[1][1] - 1.0]])
}

/// Cofactor inverse of a 2x2 matrix.
#[inline]
pub fn cofactor_inverse(m: &Mat2) -> Mat2 {
    let d = det2(m);
    [[m[1][1] / d, -m[0][1] / d], [-m[1][0] / d, m[0][0] / d]]
}

impl FlowMap {
    pub fn identity(grid: &Grid) -> Self {
        Self { t: 0.0, disp: vec![[0.0; 2]; grid.len()], grad_x: vec![IDENTITY; grid.len()] }
    }

    /// One trapezoidal step of `dX/dt = v`, applied to positions and to
    /// their discrete gradients.
    pub fn advance(&self, grid: &Grid, v_t: &[Vec2], v_tp: &[Vec2], dt: f64) -> FlowMap {
        let g0 = diff::grad_vec(grid, v_t);
        let g1 = diff::grad_vec(grid, v_tp);
        let half = 0.5 * dt;
        let disp = self
            .disp
            .iter()
            .zip(v_t.iter().zip(v_tp))
            .map(|(d, (a, b))| [d[0] + half * (a[0] + b[0]), d[1] + half * (a[1] + b[1])])
            .collect();
        let grad_x = self
            .grad_x
            .iter()
            .zip(g0.iter().zip(&g1))
            .map(|(m, (a, b))| {
                let mut out = *m;
                for r in 0..2 {
                    for c in 0..2 {
                        out[r][c] += half * (a[r][c] + b[r][c]);
                    }
                }
                out
            })
            .collect();
        FlowMap { t: self.t + dt, disp, grad_x }
    }

    /// Position `X(t, y_p)`.
    pub fn position(&self, grid: &Grid, p: usize) -> Vec2 {
        let y = grid.point(p);
        [y[0] + self.disp[p][0], y[1] + self.disp[p][1]]
    }

    /// The same map with displacement scaled by `s` (gradients follow).
    pub fn scaled(&self, s: f64) -> FlowMap {
        FlowMap {
            t: self.t,
            disp: self.disp.iter().map(|d| [s * d[0], s * d[1]]).collect(),
            grad_x: self
                .grad_x
                .iter()
                .map(|m| {
                    [
                        [1.0 + s * (m[0][0] - 1.0), s * m[0][1]],
                        [s * m[1][0], 1.0 + s * (m[1][1] - 1.0)],
                    ]
                })
                .collect(),
        }
    }

    /// Inverse gradient, refused unless the health flag holds; the
    /// determinant floor is checked node by node on top of it.
    pub fn checked_inverse(&self, det_floor: f64) -> Result<Vec<Mat2>> {
        let h = invertibility_check(self);
        if !h.flag {
            return Err(Error::InvertibilityLost {
                node: h.worst_node,
                t: self.t,
                reason: format!("sup |grad X - Id| = {:.4} exceeds 1/2", h.sup_dev),
            });
        }
        inverse_gradient(&self.grad_x, det_floor, self.t)
    }
}

/// Cofactor inverse at every node.
pub fn inverse_gradient(grad_x: &[Mat2], det_floor: f64, t: f64) -> Result<Vec<Mat2>> {
    grad_x
        .iter()
        .enumerate()
        .map(|(p, m)| {
            let d = det2(m);
            if !(d >= det_floor) {
                Err(Error::InvertibilityLost {
                    node: p,
                    t,
                    reason: format!("det grad X = {d:.4} below floor {det_floor}"),
                })
            } else {
                Ok(cofactor_inverse(m))
            }
        })
        .collect()
}

pub fn invertibility_check(map: &FlowMap) -> HealthReport {
    let mut sup_dev = 0.0f64;
    let mut worst_node = 0;
    let mut min_det = f64::INFINITY;
    let mut sup_dev_y = 0.0f64;
    for (p, m) in map.grad_x.iter().enumerate() {
        let dev = dev_from_identity(m);
        if dev > sup_dev || !dev.is_finite() {
            sup_dev = if dev.is_finite() { dev } else { f64::INFINITY };
            worst_node = p;
        }
        let d = det2(m);
        min_det = min_det.min(d);
        let dy = if d > 0.0 { dev_from_identity(&cofactor_inverse(m)) } else { f64::INFINITY };
        sup_dev_y = sup_dev_y.max(dy);
    }
    HealthReport { t: map.t, sup_dev, min_det, sup_dev_y, worst_node, flag: sup_dev <= 0.5 }
}

/// Bilinear interpolation of a nodal field at `x`, clamped into the domain.
/// Returns the value and whether clamping occurred.
pub fn bilinear(grid: &Grid, f: &[f64], x: Vec2) -> (f64, bool) {
    let (c, clamped) = grid.clamp(x);
    let (i, j, sx, sy) = cell_of(grid, c);
    let p00 = grid.idx(i, j);
    let p10 = grid.idx(i + 1, j);
    let p01 = grid.idx(i, j + 1);
    let p11 = grid.idx(i + 1, j + 1);
    let v = (1.0 - sx) * (1.0 - sy) * f[p00]
        + sx * (1.0 - sy) * f[p10]
        + (1.0 - sx) * sy * f[p01]
        + sx * sy * f[p11];
    (v, clamped)
}

fn cell_of(grid: &Grid, c: Vec2) -> (usize, usize, f64, f64) {
    let fx = c[0] / grid.dx;
    let fy = c[1] / grid.dy;
    let i = (fx.floor() as usize).min(grid.nx - 2);
    let j = (fy.floor() as usize).min(grid.ny - 2);
    (i, j, fx - i as f64, fy - j as f64)
}

fn bilinear_vec(grid: &Grid, v: &[Vec2], x: Vec2) -> (Vec2, bool) {
    let (c, clamped) = grid.clamp(x);
    let (i, j, sx, sy) = cell_of(grid, c);
    let w = [
        (grid.idx(i, j), (1.0 - sx) * (1.0 - sy)),
        (grid.idx(i + 1, j), sx * (1.0 - sy)),
        (grid.idx(i, j + 1), (1.0 - sx) * sy),
        (grid.idx(i + 1, j + 1), sx * sy),
    ];
    let mut out = [0.0; 2];
    for (p, wp) in w {
        out[0] += wp * v[p][0];
        out[1] += wp * v[p][1];
    }
    (out, clamped)
}

fn bilinear_mat(grid: &Grid, m: &[Mat2], x: Vec2) -> Mat2 {
    let (c, _) = grid.clamp(x);
    let (i, j, sx, sy) = cell_of(grid, c);
    let w = [
        (grid.idx(i, j), (1.0 - sx) * (1.0 - sy)),
        (grid.idx(i + 1, j), sx * (1.0 - sy)),
        (grid.idx(i, j + 1), (1.0 - sx) * sy),
        (grid.idx(i + 1, j + 1), sx * sy),
    ];
    let mut out = [[0.0; 2]; 2];
    for (p, wp) in w {
        for r in 0..2 {
            for s in 0..2 {
                out[r][s] += wp * m[p][r][s];
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// Lagrangian samples of an Eulerian field: `f(X(t, y))`.
    Forward,
    /// Eulerian samples of a Lagrangian field: `f(Y(t, x))`.
    Inverse,
}

/// Sample points for a composition, plus the number of clamped points.
pub fn sample_points(grid: &Grid, map: &FlowMap, direction: Direction) -> Result<(Vec<Vec2>, usize)> {
    match direction {
        Direction::Forward => {
            let mut clamped = 0;
            let pts = (0..grid.len())
                .map(|p| {
                    let (c, was) = grid.clamp(map.position(grid, p));
                    clamped += was as usize;
                    c
                })
                .collect();
            Ok((pts, clamped))
        }
        Direction::Inverse => inverse_positions(grid, map),
    }
}

/// `Y(t, x_p)` for every node by Newton iteration on `X(y) = x`, starting
/// from `x - disp(x)` and using the interpolated `grad X` as Jacobian.
pub fn inverse_positions(grid: &Grid, map: &FlowMap) -> Result<(Vec<Vec2>, usize)> {
    let h = invertibility_check(map);
    if !h.flag {
        return Err(Error::InvertibilityLost {
            node: h.worst_node,
            t: map.t,
            reason: format!("inverse composition on a map with sup |grad X - Id| = {:.4}", h.sup_dev),
        });
    }
    let tol = 1e-10 * grid.dx.min(grid.dy);
    let mut clamped = 0;
    let mut out = Vec::with_capacity(grid.len());
    for p in 0..grid.len() {
        let x = grid.point(p);
        let mut y = [x[0] - map.disp[p][0], x[1] - map.disp[p][1]];
        for _ in 0..12 {
            let (yc, _) = grid.clamp(y);
            let (d, _) = bilinear_vec(grid, &map.disp, yc);
            let r = [yc[0] + d[0] - x[0], yc[1] + d[1] - x[1]];
            let j = bilinear_mat(grid, &map.grad_x, yc);
            let det = det2(&j);
            if !(det > 0.0) {
                break;
            }
            let inv = cofactor_inverse(&j);
            let step = [inv[0][0] * r[0] + inv[0][1] * r[1], inv[1][0] * r[0] + inv[1][1] * r[1]];
            y = [y[0] - step[0], y[1] - step[1]];
            if step[0].abs().max(step[1].abs()) <= tol {
                break;
            }
        }
        let (yc, was) = grid.clamp(y);
        clamped += was as usize;
        out.push(yc);
    }
    Ok((out, clamped))
}

/// Composition of a scalar field with the map or its inverse.
pub fn compose_scalar(grid: &Grid, f: &[f64], map: &FlowMap, direction: Direction) -> Result<(Vec<f64>, usize)> {
    let (pts, clamped) = sample_points(grid, map, direction)?;
    Ok((pts.iter().map(|&x| bilinear(grid, f, x).0).collect(), clamped))
}

pub fn compose_vec(grid: &Grid, v: &[Vec2], map: &FlowMap, direction: Direction) -> Result<(Vec<Vec2>, usize)> {
    let (pts, clamped) = sample_points(grid, map, direction)?;
    Ok((pts.iter().map(|&x| bilinear_vec(grid, v, x).0).collect(), clamped))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn grid() -> Grid {
        Grid::unit(9).unwrap()
    }

    #[test]
    fn zero_velocity_keeps_identity() {
        let g = grid();
        let z = vec![[0.0; 2]; g.len()];
        let mut m = FlowMap::identity(&g);
        for _ in 0..5 {
            m = m.advance(&g, &z, &z, 0.1);
        }
        assert!(m.disp.iter().all(|d| *d == [0.0, 0.0]));
        assert!(m.grad_x.iter().all(|x| *x == IDENTITY));
    }

    #[test]
    fn shear_flow_gradient() {
        let g = grid();
        let v = g.sample_vec(|y| [y[1], 0.0]);
        let mut m = FlowMap::identity(&g);
        for _ in 0..4 {
            m = m.advance(&g, &v, &v, 0.05);
        }
        for p in 0..g.len() {
            let gx = m.grad_x[p];
            assert_relative_eq!(gx[0][1], 0.2, epsilon = 1e-13);
            assert_relative_eq!(gx[0][0], 1.0, epsilon = 1e-13);
            assert_relative_eq!(m.disp[p][0], 0.2 * g.point(p)[1], epsilon = 1e-14);
        }
    }

    #[test]
    fn inverse_gradient_examples() {
        let t = 0.3;
        let gy = inverse_gradient(&[IDENTITY, [[1.0, t], [0.0, 1.0]], [[2.0, 0.0], [0.0, 0.5]]], DET_FLOOR, 0.0).unwrap();
        assert_eq!(gy[0], IDENTITY);
        assert_eq!(gy[1], [[1.0, -t], [0.0, 1.0]]);
        assert_eq!(gy[2], [[0.5, 0.0], [0.0, 2.0]]);
        match inverse_gradient(&[IDENTITY, [[0.4, 0.0], [0.0, 0.5]]], DET_FLOOR, 1.5) {
            Err(Error::InvertibilityLost { node: 1, t, .. }) => assert_eq!(t, 1.5),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn health_examples() {
        let mk = |m: Mat2| FlowMap { t: 0.0, disp: vec![[0.0; 2]], grad_x: vec![m] };
        let h = invertibility_check(&mk(IDENTITY));
        assert_eq!(h.sup_dev, 0.0);
        assert!(h.flag);
        let h = invertibility_check(&mk([[1.0, 0.6], [0.0, 1.0]]));
        assert_relative_eq!(h.sup_dev, 0.6);
        assert!(!h.flag);
        let h = invertibility_check(&mk([[1.4, 0.0], [0.0, 1.0]]));
        assert_relative_eq!(h.sup_dev, 0.4, epsilon = 1e-15);
        assert!(h.flag);
        assert!(mk([[1.0, 0.6], [0.0, 1.0]]).checked_inverse(DET_FLOOR).is_err());
    }

    #[test]
    fn compose_identity_and_constants() {
        let g = grid();
        let f = g.sample(|x| (3.0 * x[0]).sin() + x[1] * x[1]);
        let id = FlowMap::identity(&g);
        assert_eq!(compose_scalar(&g, &f, &id, Direction::Forward).unwrap().0, f);
        let (back, _) = compose_scalar(&g, &f, &id, Direction::Inverse).unwrap();
        for (a, b) in back.iter().zip(&f) {
            assert!((a - b).abs() < 1e-14);
        }
        let v = g.sample_vec(|y| [0.3 * y[1] * (1.0 - y[1]), 0.0]);
        let m = id.advance(&g, &v, &v, 0.5);
        let c = vec![2.5; g.len()];
        for x in compose_scalar(&g, &c, &m, Direction::Inverse).unwrap().0 {
            assert_relative_eq!(x, 2.5, epsilon = 1e-14);
        }
    }

    #[test]
    fn forward_shift_on_linear_field() {
        let g = grid();
        let f = g.sample(|x| x[0]);
        let s = 0.05;
        let m = FlowMap { t: 1.0, disp: vec![[s, 0.0]; g.len()], grad_x: vec![IDENTITY; g.len()] };
        let (out, clamped) = compose_scalar(&g, &f, &m, Direction::Forward).unwrap();
        for p in 0..g.len() {
            let (i, _) = g.ij(p);
            if i < g.nx - 1 {
                assert_relative_eq!(out[p], g.point(p)[0] + s, epsilon = 1e-14);
            }
        }
        assert_eq!(clamped, g.ny);
    }

    #[test]
    fn inverse_undoes_forward() {
        let g = Grid::unit(17).unwrap();
        let w = |y: Vec2| {
            let s = (std::f64::consts::PI * y[0]).sin() * (std::f64::consts::PI * y[1]).sin();
            [0.2 * s, -0.1 * s]
        };
        let v = g.sample_vec(w);
        let m = FlowMap::identity(&g).advance(&g, &v, &v, 0.5);
        let (pts, _) = inverse_positions(&g, &m).unwrap();
        for p in 0..g.len() {
            let y = pts[p];
            let x = g.point(p);
            let wy = w(y);
            assert!((y[0] + 0.5 * wy[0] - x[0]).abs() < 2e-3);
            assert!((y[1] + 0.5 * wy[1] - x[1]).abs() < 2e-3);
        }
    }
}
