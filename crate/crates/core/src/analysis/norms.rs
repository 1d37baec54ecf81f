//! Discrete Lebesgue, Sobolev and Bochner norms.
//!
//! Spatial integrals use trapezoidal node weights and derivatives use the
//! stencils of [`crate::operators::diff`]. The spaces are
//!
//! - `X0 = L^q(v) x W^{1,q}(h) x W^{1,q}(a)`,
//! - `X1 = W^{2,q}(v) x W^{1,q}(h) x W^{1,q}(a)`,
//!
//! combined in the l^q sense. The trace space is replaced by the proxy
//! `|v|_{W^{1,q}} + |h|_{W^{1,q}} + |a|_{W^{1,q}}`.

use serde::{Deserialize, Serialize};

use crate::fields::{Grid, StateField, Vec2};
use crate::operators::diff;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NormSuite {
    pub p: f64,
    pub q: f64,
}

impl Default for NormSuite {
    fn default() -> Self {
        Self { p: 8.0, q: 8.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Space {
    X0,
    X1,
}

/// `(sum_k w_k |x_k|^q)^(1/q)` with the largest entry factored out to avoid
/// overflow.
fn weighted_lq<'a, I>(items: I, q: f64) -> f64
where
    I: Iterator<Item = (f64, f64)> + Clone,
{
    let m = items.clone().fold(0.0f64, |m, (_, x)| m.max(x.abs()));
    if m == 0.0 || !m.is_finite() {
        return m;
    }
    let s: f64 = items.map(|(w, x)| w * (x.abs() / m).powf(q)).sum();
    m * s.powf(1.0 / q)
}

/// l^q combination of already computed norms.
fn combine(parts: &[f64], q: f64) -> f64 {
    weighted_lq(parts.iter().map(|&x| (1.0, x)), q)
}

impl NormSuite {
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.q > 2.0) || !self.q.is_finite() {
            out.push(format!("norms.q = {} violates \"q in (2, inf)\"", self.q));
        }
        if !(self.p > 1.0) || !self.p.is_finite() {
            out.push(format!("norms.p = {} violates \"p in (1, inf)\"", self.p));
        }
        if !(1.0 / self.p + 1.0 / self.q < 0.5) {
            out.push(format!(
                "norms.p = {}, norms.q = {} violate \"1/p + 1/q < 1/2\"",
                self.p, self.q
            ));
        }
        out
    }

    pub fn lq(&self, grid: &Grid, f: &[f64]) -> f64 {
        weighted_lq((0..grid.len()).map(|p| (grid.quadrature_weight(p), f[p])), self.q)
    }

    pub fn lq_vec(&self, grid: &Grid, v: &[Vec2]) -> f64 {
        let a: Vec<f64> = v.iter().map(|x| x[0]).collect();
        let b: Vec<f64> = v.iter().map(|x| x[1]).collect();
        combine(&[self.lq(grid, &a), self.lq(grid, &b)], self.q)
    }

    pub fn w1q(&self, grid: &Grid, f: &[f64]) -> f64 {
        let d1 = diff::d_axis(grid, f, 0);
        let d2 = diff::d_axis(grid, f, 1);
        combine(&[self.lq(grid, f), self.lq(grid, &d1), self.lq(grid, &d2)], self.q)
    }

    fn w2q(&self, grid: &Grid, f: &[f64]) -> f64 {
        let hs = diff::hess(grid, f);
        let h11: Vec<f64> = hs.iter().map(|x| x[0]).collect();
        let h12: Vec<f64> = hs.iter().map(|x| x[1]).collect();
        let h22: Vec<f64> = hs.iter().map(|x| x[2]).collect();
        combine(
            &[self.w1q(grid, f), self.lq(grid, &h11), self.lq(grid, &h12), self.lq(grid, &h22)],
            self.q,
        )
    }

    fn components(v: &[Vec2]) -> [Vec<f64>; 2] {
        [v.iter().map(|x| x[0]).collect(), v.iter().map(|x| x[1]).collect()]
    }

    pub fn w1q_vec(&self, grid: &Grid, v: &[Vec2]) -> f64 {
        let [a, b] = Self::components(v);
        combine(&[self.w1q(grid, &a), self.w1q(grid, &b)], self.q)
    }

    pub fn w2q_vec(&self, grid: &Grid, v: &[Vec2]) -> f64 {
        let [a, b] = Self::components(v);
        combine(&[self.w2q(grid, &a), self.w2q(grid, &b)], self.q)
    }

    pub fn x0(&self, grid: &Grid, u: &StateField) -> f64 {
        combine(&[self.lq_vec(grid, &u.v), self.w1q(grid, &u.h), self.w1q(grid, &u.a)], self.q)
    }

    pub fn x1(&self, grid: &Grid, u: &StateField) -> f64 {
        combine(&[self.w2q_vec(grid, &u.v), self.w1q(grid, &u.h), self.w1q(grid, &u.a)], self.q)
    }

    pub fn space(&self, grid: &Grid, u: &StateField, s: Space) -> f64 {
        match s {
            Space::X0 => self.x0(grid, u),
            Space::X1 => self.x1(grid, u),
        }
    }

    /// Proxy for the trace-space norm.
    pub fn gamma(&self, grid: &Grid, u: &StateField) -> f64 {
        self.w1q_vec(grid, &u.v) + self.w1q(grid, &u.h) + self.w1q(grid, &u.a)
    }

    /// `(sum_n w_n dt |u_n|^p)^(1/p)` with trapezoidal time weights on a
    /// uniform grid `t_0, ..., t_N`.
    pub fn bochner(&self, grid: &Grid, states: &[StateField], dt: f64, s: Space) -> f64 {
        let n = states.len();
        if n < 2 {
            return 0.0;
        }
        let vals: Vec<f64> = states.iter().map(|u| self.space(grid, u, s)).collect();
        weighted_lq(
            vals.iter().enumerate().map(|(k, &x)| {
                let w = if k == 0 || k == n - 1 { 0.5 } else { 1.0 };
                (w * dt, x)
            }),
            self.p,
        )
    }

    /// `(sum_{n<N} dt (|(u_{n+1} - u_n)/dt|_X0^p + |u_n|_X1^p))^(1/p)`.
    pub fn e1(&self, grid: &Grid, states: &[StateField], dt: f64) -> f64 {
        if states.len() < 2 {
            return 0.0;
        }
        let mut parts = Vec::with_capacity(2 * states.len());
        for w in states.windows(2) {
            let rate = w[1].sub(&w[0]).scale(1.0 / dt);
            parts.push((dt, self.x0(grid, &rate)));
            parts.push((dt, self.x1(grid, &w[0])));
        }
        weighted_lq(parts.into_iter(), self.p)
    }

    /// Data norm of a forcing trajectory: Bochner `L^p(X0)`.
    pub fn e0(&self, grid: &Grid, f: &[StateField], dt: f64) -> f64 {
        self.bochner(grid, f, dt, Space::X0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn constant_function_lq() {
        let g = Grid::unit(9).unwrap();
        let n = NormSuite::default();
        assert_relative_eq!(n.lq(&g, &vec![2.0; g.len()]), 2.0, max_relative = 1e-14);
        assert_relative_eq!(n.w1q(&g, &vec![2.0; g.len()]), 2.0, max_relative = 1e-12);
        assert_eq!(n.lq(&g, &vec![0.0; g.len()]), 0.0);
    }

    #[test]
    fn bochner_of_constant_trajectory() {
        let g = Grid::unit(6).unwrap();
        let n = NormSuite { p: 2.0, q: 8.0 };
        let mut u = StateField::zeros(g.len());
        u.v = vec![[1.0, 0.0]; g.len()];
        let lq = n.x0(&g, &u);
        let u = u.scale(1.0 / lq);
        let states = vec![u; 11];
        assert_relative_eq!(n.bochner(&g, &states, 0.1, Space::X0), 1.0, max_relative = 1e-14);
        let z = vec![StateField::zeros(g.len()); 4];
        assert_eq!(n.bochner(&g, &z, 0.1, Space::X1), 0.0);
        assert_eq!(n.e1(&g, &z, 0.1), 0.0);
    }

    #[test]
    fn validation_messages() {
        assert!(NormSuite::default().violations().is_empty());
        let v = NormSuite { p: 3.0, q: 3.0 }.violations();
        assert!(v.iter().any(|s| s.contains("1/p + 1/q < 1/2")));
        let v = NormSuite { p: 8.0, q: 2.0 }.violations();
        assert!(v.iter().any(|s| s.contains("q in (2, inf)")));
    }
}
