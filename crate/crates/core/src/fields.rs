//! Grids, state fields, physical parameters and forcing.
//!
//! The domain is an axis-aligned rectangle `[0, lx] x [0, ly]` sampled on a
//! uniform collocated node grid. Node `(i, j)` sits at `(i * dx, j * dy)` and
//! is stored at flat index `j * nx + i` (row-major, rows along y).

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::thermo::GrowthRate;

pub type Vec2 = [f64; 2];
pub type Mat2 = [[f64; 2]; 2];

pub const IDENTITY: Mat2 = [[1.0, 0.0], [0.0, 1.0]];

/// Uniform node grid on a rectangle.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub nx: usize,
    pub ny: usize,
    pub lx: f64,
    pub ly: f64,
    pub dx: f64,
    pub dy: f64,
    boundary: Vec<bool>,
    interior: Vec<usize>,
    interior_slot: Vec<Option<usize>>,
}

impl Grid {
    pub fn new(nx: usize, ny: usize, lx: f64, ly: f64) -> Result<Self> {
        if nx < 4 || ny < 4 {
            return Err(Error::Param(format!(
                "grid needs at least 4 nodes per axis, got {nx}x{ny}"
            )));
        }
        if !(lx > 0.0 && ly > 0.0 && lx.is_finite() && ly.is_finite()) {
            return Err(Error::Param(format!("domain extents must be positive, got {lx}x{ly}")));
        }
        let dx = lx / (nx - 1) as f64;
        let dy = ly / (ny - 1) as f64;
        let mut boundary = vec![false; nx * ny];
        let mut interior = Vec::with_capacity((nx - 2) * (ny - 2));
        let mut interior_slot = vec![None; nx * ny];
        for j in 0..ny {
            for i in 0..nx {
                let p = j * nx + i;
                if i == 0 || j == 0 || i == nx - 1 || j == ny - 1 {
                    boundary[p] = true;
                } else {
                    interior_slot[p] = Some(interior.len());
                    interior.push(p);
                }
            }
        }
        Ok(Self { nx, ny, lx, ly, dx, dy, boundary, interior, interior_slot })
    }

    /// Unit square with `n x n` nodes.
    pub fn unit(n: usize) -> Result<Self> {
        Self::new(n, n, 1.0, 1.0)
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    #[inline]
    pub fn ij(&self, p: usize) -> (usize, usize) {
        (p % self.nx, p / self.nx)
    }

    #[inline]
    pub fn point(&self, p: usize) -> Vec2 {
        let (i, j) = self.ij(p);
        [i as f64 * self.dx, j as f64 * self.dy]
    }

    #[inline]
    pub fn is_boundary(&self, p: usize) -> bool {
        self.boundary[p]
    }

    pub fn boundary_mask(&self) -> &[bool] {
        &self.boundary
    }

    /// Flat indices of the interior nodes, in storage order.
    pub fn interior(&self) -> &[usize] {
        &self.interior
    }

    /// Position of node `p` in [`Grid::interior`], if interior.
    #[inline]
    pub fn interior_slot(&self, p: usize) -> Option<usize> {
        self.interior_slot[p]
    }

    pub fn n_interior(&self) -> usize {
        self.interior.len()
    }

    /// Clamp a point into the closed domain; returns whether clamping happened.
    pub fn clamp(&self, x: Vec2) -> (Vec2, bool) {
        let cx = x[0].clamp(0.0, self.lx);
        let cy = x[1].clamp(0.0, self.ly);
        (([cx, cy]), cx != x[0] || cy != x[1])
    }

    /// Samples a scalar function at every node.
    pub fn sample<F: Fn(Vec2) -> f64>(&self, f: F) -> Vec<f64> {
        (0..self.len()).map(|p| f(self.point(p))).collect()
    }

    pub fn sample_vec<F: Fn(Vec2) -> Vec2>(&self, f: F) -> Vec<Vec2> {
        (0..self.len()).map(|p| f(self.point(p))).collect()
    }

    /// Trapezoidal quadrature weight of node `p` (cell area scaled by 1/2 on
    /// edges, 1/4 at corners).
    pub fn quadrature_weight(&self, p: usize) -> f64 {
        let (i, j) = self.ij(p);
        let wx = if i == 0 || i == self.nx - 1 { 0.5 } else { 1.0 };
        let wy = if j == 0 || j == self.ny - 1 { 0.5 } else { 1.0 };
        wx * wy * self.dx * self.dy
    }
}

/// Grid-sampled principal variable `u = (v, h, a)`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateField {
    pub v: Vec<Vec2>,
    pub h: Vec<f64>,
    pub a: Vec<f64>,
}

impl StateField {
    pub fn zeros(n: usize) -> Self {
        Self { v: vec![[0.0; 2]; n], h: vec![0.0; n], a: vec![0.0; n] }
    }

    pub fn constant(grid: &Grid, v: Vec2, h: f64, a: f64) -> Self {
        let n = grid.len();
        let mut s = Self { v: vec![v; n], h: vec![h; n], a: vec![a; n] };
        apply_dirichlet(grid, &mut s.v);
        s
    }

    /// Samples `(v, h, a)` at every node; the velocity is then forced to zero
    /// on the boundary ring.
    pub fn from_fn<F: Fn(Vec2) -> (Vec2, f64, f64)>(grid: &Grid, f: F) -> Self {
        let n = grid.len();
        let mut s = Self::zeros(n);
        for p in 0..n {
            let (v, h, a) = f(grid.point(p));
            s.v[p] = v;
            s.h[p] = h;
            s.a[p] = a;
        }
        apply_dirichlet(grid, &mut s.v);
        s
    }

    pub fn len(&self) -> usize {
        self.h.len()
    }

    pub fn is_empty(&self) -> bool {
        self.h.is_empty()
    }

    pub fn check_shape(&self, grid: &Grid) -> Result<()> {
        let n = grid.len();
        if self.v.len() != n || self.h.len() != n || self.a.len() != n {
            return Err(Error::Param(format!(
                "state arrays ({}, {}, {}) do not match grid with {n} nodes",
                self.v.len(),
                self.h.len(),
                self.a.len()
            )));
        }
        Ok(())
    }

    /// First non-finite entry, as (component name, node).
    pub fn first_non_finite(&self) -> Option<(&'static str, usize)> {
        for (p, v) in self.v.iter().enumerate() {
            if !v[0].is_finite() || !v[1].is_finite() {
                return Some(("v", p));
            }
        }
        if let Some(p) = self.h.iter().position(|x| !x.is_finite()) {
            return Some(("h", p));
        }
        self.a.iter().position(|x| !x.is_finite()).map(|p| ("a", p))
    }

    /// `self + s * other`.
    pub fn add_scaled(&self, s: f64, other: &StateField) -> StateField {
        StateField {
            v: self
                .v
                .iter()
                .zip(&other.v)
                .map(|(x, y)| [x[0] + s * y[0], x[1] + s * y[1]])
                .collect(),
            h: self.h.iter().zip(&other.h).map(|(x, y)| x + s * y).collect(),
            a: self.a.iter().zip(&other.a).map(|(x, y)| x + s * y).collect(),
        }
    }

    pub fn sub(&self, other: &StateField) -> StateField {
        self.add_scaled(-1.0, other)
    }

    pub fn scale(&self, s: f64) -> StateField {
        StateField {
            v: self.v.iter().map(|x| [s * x[0], s * x[1]]).collect(),
            h: self.h.iter().map(|x| s * x).collect(),
            a: self.a.iter().map(|x| s * x).collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        let mv = self.v.iter().fold(0.0f64, |m, x| m.max(x[0].abs()).max(x[1].abs()));
        let mh = self.h.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let ma = self.a.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        mv.max(mh).max(ma)
    }
}

/// Physical and regularization constants, nondimensional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RheologyParams {
    pub rho_ice: f64,
    /// Aspect ratio of the elliptic yield curve.
    pub e: f64,
    /// Regularization under the square root of the deformation measure.
    pub delta: f64,
    pub p_star: f64,
    pub c_bullet: f64,
    /// Thickness floor of the admissible set.
    pub kappa: f64,
    pub c_cor: f64,
    pub g: f64,
    pub rho_atm: f64,
    pub c_atm: f64,
    pub rho_ocn: f64,
    pub c_ocn: f64,
    /// Turning angle of the wind stress, radians.
    pub theta_atm: f64,
    /// Turning angle of the water stress, radians.
    pub theta_ocn: f64,
}

impl Default for RheologyParams {
    fn default() -> Self {
        Self {
            rho_ice: 1.0,
            e: 2.0,
            delta: 2e-9,
            p_star: 1.0,
            c_bullet: 20.0,
            kappa: 1e-3,
            c_cor: 0.0,
            g: 0.0,
            rho_atm: 0.0,
            c_atm: 0.0,
            rho_ocn: 0.0,
            c_ocn: 0.0,
            theta_atm: 0.0,
            theta_ocn: 0.0,
        }
    }
}

pub fn rotation(theta: f64) -> Mat2 {
    let (s, c) = theta.sin_cos();
    [[c, -s], [s, c]]
}

impl RheologyParams {
    pub fn r_atm(&self) -> Mat2 {
        rotation(self.theta_atm)
    }

    pub fn r_ocn(&self) -> Mat2 {
        rotation(self.theta_ocn)
    }

    /// All violated constraints, empty when valid.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let named = [
            ("rho_ice", self.rho_ice),
            ("e", self.e),
            ("delta", self.delta),
            ("p_star", self.p_star),
            ("c_bullet", self.c_bullet),
            ("kappa", self.kappa),
            ("c_cor", self.c_cor),
            ("g", self.g),
            ("rho_atm", self.rho_atm),
            ("c_atm", self.c_atm),
            ("rho_ocn", self.rho_ocn),
            ("c_ocn", self.c_ocn),
            ("theta_atm", self.theta_atm),
            ("theta_ocn", self.theta_ocn),
        ];
        for (name, x) in named {
            if !x.is_finite() {
                out.push(format!("params.{name} must be finite"));
            }
        }
        if !(self.rho_ice > 0.0) {
            out.push("params.rho_ice violates \"rho_ice > 0\"".into());
        }
        if !(self.e > 1.0) {
            out.push("params.e violates \"e > 1\"".into());
        }
        if !(self.delta > 0.0) {
            out.push("params.delta violates \"delta > 0\"".into());
        }
        if !(self.p_star > 0.0) {
            out.push("params.p_star violates \"p_star > 0\"".into());
        }
        if !(self.c_bullet > 0.0) {
            out.push("params.c_bullet violates \"c_bullet > 0\"".into());
        }
        if !(self.kappa > 0.0) {
            out.push("params.kappa violates \"kappa > 0\"".into());
        }
        for (name, x) in [
            ("c_cor", self.c_cor),
            ("g", self.g),
            ("rho_atm", self.rho_atm),
            ("c_atm", self.c_atm),
            ("rho_ocn", self.rho_ocn),
            ("c_ocn", self.c_ocn),
        ] {
            if x < 0.0 {
                out.push(format!("params.{name} violates \"{name} >= 0\""));
            }
        }
        for (name, r) in [("R_atm", self.r_atm()), ("R_ocn", self.r_ocn())] {
            if !is_rotation(&r) {
                out.push(format!("{name} is not a rotation (orthogonal, det 1) to 1e-12"));
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(v))
        }
    }
}

pub fn is_rotation(r: &Mat2) -> bool {
    let rtr = mat_mul(&transpose(r), r);
    let det = det2(r);
    let mut ok = (det - 1.0).abs() <= 1e-12;
    for i in 0..2 {
        for j in 0..2 {
            ok &= (rtr[i][j] - IDENTITY[i][j]).abs() <= 1e-12;
        }
    }
    ok
}

#[inline]
pub fn det2(m: &Mat2) -> f64 {
    m[0][0] * m[1][1] - m[0][1] * m[1][0]
}

#[inline]
pub fn transpose(m: &Mat2) -> Mat2 {
    [[m[0][0], m[1][0]], [m[0][1], m[1][1]]]
}

#[inline]
pub fn mat_mul(a: &Mat2, b: &Mat2) -> Mat2 {
    let mut c = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            c[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    c
}

#[inline]
pub fn mat_vec(a: &Mat2, x: &Vec2) -> Vec2 {
    [a[0][0] * x[0] + a[0][1] * x[1], a[1][0] * x[0] + a[1][1] * x[1]]
}

#[inline]
pub fn norm2(x: &Vec2) -> f64 {
    x[0].hypot(x[1])
}

/// A time- and space-dependent 2-vector forcing field.
#[derive(Clone)]
pub enum VectorSource {
    Constant(Vec2),
    /// `f(t, x)` evaluated pointwise.
    Analytic(Arc<dyn Fn(f64, Vec2) -> Vec2 + Send + Sync>),
    /// Nodal frames at increasing times; linear in time, clamped outside.
    Table { times: Vec<f64>, frames: Vec<Vec<Vec2>> },
}

impl fmt::Debug for VectorSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VectorSource::Constant(c) => f.debug_tuple("Constant").field(c).finish(),
            VectorSource::Analytic(_) => f.write_str("Analytic(..)"),
            VectorSource::Table { times, .. } => {
                f.debug_struct("Table").field("frames", &times.len()).finish()
            }
        }
    }
}

impl VectorSource {
    pub fn zero() -> Self {
        VectorSource::Constant([0.0, 0.0])
    }

    /// Spatially uniform sources need no composition with the flow map.
    pub fn is_uniform(&self) -> bool {
        matches!(self, VectorSource::Constant(_))
    }

    pub fn sample(&self, grid: &Grid, t: f64) -> Vec<Vec2> {
        match self {
            VectorSource::Constant(c) => vec![*c; grid.len()],
            VectorSource::Analytic(f) => grid.sample_vec(|x| f(t, x)),
            VectorSource::Table { times, frames } => {
                if times.len() == 1 || t <= times[0] {
                    return frames[0].clone();
                }
                let last = times.len() - 1;
                if t >= times[last] {
                    return frames[last].clone();
                }
                let k = times.partition_point(|&s| s <= t) - 1;
                let w = (t - times[k]) / (times[k + 1] - times[k]);
                frames[k]
                    .iter()
                    .zip(&frames[k + 1])
                    .map(|(a, b)| [a[0] + w * (b[0] - a[0]), a[1] + w * (b[1] - a[1])])
                    .collect()
            }
        }
    }
}

/// External forcing: wind, ocean current, sea-surface tilt, growth rate.
#[derive(Debug, Clone)]
pub struct ForcingFields {
    pub v_atm: VectorSource,
    pub v_ocn: VectorSource,
    pub grad_h: VectorSource,
    pub growth: GrowthRate,
}

impl ForcingFields {
    /// No wind, no current, flat sea surface, no growth.
    pub fn none() -> Self {
        Self {
            v_atm: VectorSource::zero(),
            v_ocn: VectorSource::zero(),
            grad_h: VectorSource::zero(),
            growth: GrowthRate::constant(0.0),
        }
    }
}

/// Pointwise distance of a state to the boundary of the admissible set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdmissibilityReport {
    pub min_h: f64,
    pub min_a: f64,
    pub max_a: f64,
    /// `min h - kappa`.
    pub margin_h: f64,
    /// `min(min a, 1 - max a)`.
    pub margin_a: f64,
    pub in_v: bool,
}

/// Checks `h > kappa` and `0 < a < 1` at every node.
pub fn validate_state(u: &StateField, params: &RheologyParams) -> Result<AdmissibilityReport> {
    if let Some((field, node)) = u.first_non_finite() {
        return Err(Error::CorruptState { field, node });
    }
    let min_h = u.h.iter().copied().fold(f64::INFINITY, f64::min);
    let min_a = u.a.iter().copied().fold(f64::INFINITY, f64::min);
    let max_a = u.a.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let margin_h = min_h - params.kappa;
    let margin_a = min_a.min(1.0 - max_a);
    let in_v = min_h > params.kappa && min_a > 0.0 && max_a < 1.0;
    Ok(AdmissibilityReport { min_h, min_a, max_a, margin_h, margin_a, in_v })
}

/// Zeroes the velocity on the boundary ring.
pub fn apply_dirichlet(grid: &Grid, v: &mut [Vec2]) {
    for (p, x) in v.iter_mut().enumerate() {
        if grid.is_boundary(p) {
            *x = [0.0, 0.0];
        }
    }
}

pub fn enforce_dirichlet(grid: &Grid, v: &[Vec2]) -> Vec<Vec2> {
    let mut out = v.to_vec();
    apply_dirichlet(grid, &mut out);
    out
}
