//! Finite-difference stencils on the node grid.
//!
//! Interior nodes use second-order central differences. Nodes on the edge
//! of the rectangle use second-order one-sided formulas along the normal
//! direction: `(-3 f0 + 4 f1 - f2) / (2 dx)` for first derivatives and
//! `(2 f0 - 5 f1 + 4 f2 - f3) / dx^2` for second derivatives. The mixed
//! derivative is the composition `d1(d2 f)`.

use crate::fields::{Grid, Mat2, Vec2};

/// At most nine weighted node references.
#[derive(Debug, Clone, Copy)]
pub struct Stencil {
    pub len: usize,
    pub idx: [usize; 9],
    pub w: [f64; 9],
}

impl Stencil {
    fn new() -> Self {
        Self { len: 0, idx: [0; 9], w: [0.0; 9] }
    }

    fn push(&mut self, p: usize, w: f64) {
        for k in 0..self.len {
            if self.idx[k] == p {
                self.w[k] += w;
                return;
            }
        }
        self.idx[self.len] = p;
        self.w[self.len] = w;
        self.len += 1;
    }

    pub fn entries(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        (0..self.len).map(move |k| (self.idx[k], self.w[k]))
    }

    #[inline]
    pub fn apply(&self, f: &[f64]) -> f64 {
        let mut acc = 0.0;
        for k in 0..self.len {
            acc += self.w[k] * f[self.idx[k]];
        }
        acc
    }

    #[inline]
    pub fn apply_component(&self, v: &[Vec2], c: usize) -> f64 {
        let mut acc = 0.0;
        for k in 0..self.len {
            acc += self.w[k] * v[self.idx[k]][c];
        }
        acc
    }
}

/// Offsets and weights along one axis for position `i` out of `n` nodes.
fn first_1d(i: usize, n: usize, h: f64) -> [(isize, f64); 3] {
    if i == 0 {
        [(0, -1.5 / h), (1, 2.0 / h), (2, -0.5 / h)]
    } else if i == n - 1 {
        [(0, 1.5 / h), (-1, -2.0 / h), (-2, 0.5 / h)]
    } else {
        [(-1, -0.5 / h), (1, 0.5 / h), (0, 0.0)]
    }
}

fn second_1d(i: usize, n: usize, h: f64) -> [(isize, f64); 4] {
    let h2 = h * h;
    if i == 0 {
        [(0, 2.0 / h2), (1, -5.0 / h2), (2, 4.0 / h2), (3, -1.0 / h2)]
    } else if i == n - 1 {
        [(0, 2.0 / h2), (-1, -5.0 / h2), (-2, 4.0 / h2), (-3, -1.0 / h2)]
    } else {
        [(-1, 1.0 / h2), (0, -2.0 / h2), (1, 1.0 / h2), (0, 0.0)]
    }
}

/// Stencil of `d/dx_axis` (axis 0 is x, 1 is y) at node `p`.
pub fn first(grid: &Grid, p: usize, axis: usize) -> Stencil {
    let (i, j) = grid.ij(p);
    let mut s = Stencil::new();
    if axis == 0 {
        for (o, w) in first_1d(i, grid.nx, grid.dx) {
            if w != 0.0 {
                s.push(grid.idx((i as isize + o) as usize, j), w);
            }
        }
    } else {
        for (o, w) in first_1d(j, grid.ny, grid.dy) {
            if w != 0.0 {
                s.push(grid.idx(i, (j as isize + o) as usize), w);
            }
        }
    }
    s
}

/// Stencil of `d^2/dx_axis^2` at node `p`.
pub fn second(grid: &Grid, p: usize, axis: usize) -> Stencil {
    let (i, j) = grid.ij(p);
    let mut s = Stencil::new();
    if axis == 0 {
        for (o, w) in second_1d(i, grid.nx, grid.dx) {
            if w != 0.0 {
                s.push(grid.idx((i as isize + o) as usize, j), w);
            }
        }
    } else {
        for (o, w) in second_1d(j, grid.ny, grid.dy) {
            if w != 0.0 {
                s.push(grid.idx(i, (j as isize + o) as usize), w);
            }
        }
    }
    s
}

/// Stencil of `d_k d_l` at node `p`; the mixed derivative is `d1(d2 .)`.
pub fn second_kl(grid: &Grid, p: usize, k: usize, l: usize) -> Stencil {
    if k == l {
        return second(grid, p, k);
    }
    let outer = first(grid, p, 0);
    let mut s = Stencil::new();
    for (q, wq) in outer.entries() {
        for (r, wr) in first(grid, q, 1).entries() {
            s.push(r, wq * wr);
        }
    }
    s
}

/// Precomputed stencils for every node.
#[derive(Debug, Clone)]
pub struct Stencils {
    pub d: [Vec<Stencil>; 2],
    /// `dd[0]` = d11, `dd[1]` = d12, `dd[2]` = d22.
    pub dd: [Vec<Stencil>; 3],
}

impl Stencils {
    pub fn new(grid: &Grid) -> Self {
        let n = grid.len();
        let d = [
            (0..n).map(|p| first(grid, p, 0)).collect(),
            (0..n).map(|p| first(grid, p, 1)).collect(),
        ];
        let dd = [
            (0..n).map(|p| second_kl(grid, p, 0, 0)).collect(),
            (0..n).map(|p| second_kl(grid, p, 0, 1)).collect(),
            (0..n).map(|p| second_kl(grid, p, 1, 1)).collect(),
        ];
        Self { d, dd }
    }

    #[inline]
    pub fn dd_kl(&self, p: usize, k: usize, l: usize) -> &Stencil {
        &self.dd[k + l][p]
    }
}

pub fn d_axis(grid: &Grid, f: &[f64], axis: usize) -> Vec<f64> {
    (0..grid.len()).map(|p| first(grid, p, axis).apply(f)).collect()
}

/// Discrete gradient of a scalar field.
pub fn grad(grid: &Grid, f: &[f64]) -> Vec<Vec2> {
    (0..grid.len())
        .map(|p| [first(grid, p, 0).apply(f), first(grid, p, 1).apply(f)])
        .collect()
}

/// Discrete gradient of a vector field, `g[j][k] = d v_j / d x_k`.
pub fn grad_vec(grid: &Grid, v: &[Vec2]) -> Vec<Mat2> {
    (0..grid.len())
        .map(|p| {
            let s0 = first(grid, p, 0);
            let s1 = first(grid, p, 1);
            [
                [s0.apply_component(v, 0), s1.apply_component(v, 0)],
                [s0.apply_component(v, 1), s1.apply_component(v, 1)],
            ]
        })
        .collect()
}

pub fn div(grid: &Grid, v: &[Vec2]) -> Vec<f64> {
    (0..grid.len())
        .map(|p| first(grid, p, 0).apply_component(v, 0) + first(grid, p, 1).apply_component(v, 1))
        .collect()
}

/// Second derivatives `(d11, d12, d22)` of a scalar field.
pub fn hess(grid: &Grid, f: &[f64]) -> Vec<[f64; 3]> {
    (0..grid.len())
        .map(|p| {
            [
                second_kl(grid, p, 0, 0).apply(f),
                second_kl(grid, p, 0, 1).apply(f),
                second_kl(grid, p, 1, 1).apply(f),
            ]
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn grid() -> Grid {
        Grid::new(7, 6, 1.2, 0.9).unwrap()
    }

    #[test]
    fn constant_has_zero_derivatives() {
        let g = grid();
        let f = vec![3.7; g.len()];
        for x in grad(&g, &f) {
            assert!(x[0].abs() < 1e-13 && x[1].abs() < 1e-13);
        }
        for x in hess(&g, &f) {
            for c in x {
                assert!(c.abs() < 1e-11);
            }
        }
    }

    #[test]
    fn linear_field_gradient_exact() {
        let g = grid();
        let f = g.sample(|x| x[0]);
        for x in grad(&g, &f) {
            assert_relative_eq!(x[0], 1.0, epsilon = 1e-13);
            assert!(x[1].abs() < 1e-13);
        }
    }

    #[test]
    fn quadratics_exact_everywhere() {
        let g = grid();
        let f = g.sample(|x| x[0] * x[0] + 3.0 * x[0] * x[1] - 0.5 * x[1] * x[1]);
        let gr = grad(&g, &f);
        let hs = hess(&g, &f);
        for p in 0..g.len() {
            let x = g.point(p);
            assert_relative_eq!(gr[p][0], 2.0 * x[0] + 3.0 * x[1], epsilon = 1e-11);
            assert_relative_eq!(gr[p][1], 3.0 * x[0] - x[1], epsilon = 1e-11);
            assert_relative_eq!(hs[p][0], 2.0, epsilon = 1e-9);
            assert_relative_eq!(hs[p][1], 3.0, epsilon = 1e-9);
            assert_relative_eq!(hs[p][2], -1.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn cubic_second_derivative_exact_at_boundary() {
        // the four-point one-sided formula is exact on cubics
        let g = grid();
        let f = g.sample(|x| x[0].powi(3));
        let hs = hess(&g, &f);
        for p in 0..g.len() {
            assert_relative_eq!(hs[p][0], 6.0 * g.point(p)[0], epsilon = 1e-9);
        }
    }

    #[test]
    fn divergence_of_rotation_vanishes() {
        let g = grid();
        let v = g.sample_vec(|x| [-x[1], x[0]]);
        for d in div(&g, &v) {
            assert!(d.abs() < 1e-12);
        }
    }

    #[test]
    fn mixed_stencil_has_nine_points_at_corner() {
        let g = grid();
        assert_eq!(second_kl(&g, 0, 0, 1).len, 9);
        assert_eq!(second_kl(&g, g.idx(3, 3), 0, 1).len, 4);
    }
}
