//! Frozen-coefficient linear operators over the stacked unknown vector.
//!
//! Unknowns are stacked as `[v1 at interior nodes | v2 at interior nodes |
//! h at all nodes | a at all nodes]`; velocity values on the boundary ring
//! are zero and never appear as unknowns.
//!
//! With coefficients frozen at a state `u1`, the linearized Hibler operator
//! is
//!
//! ```text
//! (A v)_i = -sum_jkl a_ij^kl d_k d_l v_j + c(u1) sum_j (d_j P1) (S eps(v))_ij
//! ```
//!
//! where `c(u1) = 1 / (2 rho h1 Delta_delta(eps(v1)))`, and the operator
//! matrix is
//!
//! ```text
//!       [ -A + w    B1         ]
//! Op =  [ h1 div    w     0    ]
//!       [ a1 div    0     w    ]
//! ```
//!
//! so that the linear problem reads `du/dt + Op u = f`.

pub mod diff;
mod sector;

pub use sector::{
    dense_spectrum, proxy_state, sector_probe, sector_probe_matrix, select_omega, SectorEntry, SectorReport, MAX_DENSE_DIM,
};

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::fields::{Grid, RheologyParams, StateField, Vec2};
use crate::rheology::{self, flat_index, s_matrix, Coeffs, Strain};
use crate::sparse::CsrMatrix;
use diff::Stencils;

/// Index bookkeeping for the stacked unknown vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    /// Interior node count.
    pub ni: usize,
    /// Total node count.
    pub n: usize,
}

impl Layout {
    pub fn new(grid: &Grid) -> Self {
        Self { ni: grid.n_interior(), n: grid.len() }
    }

    pub fn dim(&self) -> usize {
        2 * self.ni + 2 * self.n
    }

    pub fn nv(&self) -> usize {
        2 * self.ni
    }

    #[inline]
    pub fn v_index(&self, slot: usize, comp: usize) -> usize {
        comp * self.ni + slot
    }

    #[inline]
    pub fn h_index(&self, p: usize) -> usize {
        2 * self.ni + p
    }

    #[inline]
    pub fn a_index(&self, p: usize) -> usize {
        2 * self.ni + self.n + p
    }

    pub fn pack(&self, grid: &Grid, u: &StateField) -> Vec<f64> {
        let mut x = vec![0.0; self.dim()];
        for (slot, &p) in grid.interior().iter().enumerate() {
            x[self.v_index(slot, 0)] = u.v[p][0];
            x[self.v_index(slot, 1)] = u.v[p][1];
        }
        x[2 * self.ni..2 * self.ni + self.n].copy_from_slice(&u.h);
        x[2 * self.ni + self.n..].copy_from_slice(&u.a);
        x
    }

    pub fn unpack(&self, grid: &Grid, x: &[f64]) -> StateField {
        let mut u = StateField::zeros(self.n);
        for (slot, &p) in grid.interior().iter().enumerate() {
            u.v[p] = [x[self.v_index(slot, 0)], x[self.v_index(slot, 1)]];
        }
        u.h.copy_from_slice(&x[2 * self.ni..2 * self.ni + self.n]);
        u.a.copy_from_slice(&x[2 * self.ni + self.n..]);
        u
    }

    /// Packs only the velocity part.
    pub fn pack_v(&self, grid: &Grid, v: &[Vec2]) -> Vec<f64> {
        let mut x = vec![0.0; self.nv()];
        for (slot, &p) in grid.interior().iter().enumerate() {
            x[self.v_index(slot, 0)] = v[p][0];
            x[self.v_index(slot, 1)] = v[p][1];
        }
        x
    }

    pub fn unpack_v(&self, grid: &Grid, x: &[f64]) -> Vec<Vec2> {
        let mut v = vec![[0.0; 2]; self.n];
        for (slot, &p) in grid.interior().iter().enumerate() {
            v[p] = [x[self.v_index(slot, 0)], x[self.v_index(slot, 1)]];
        }
        v
    }
}

/// Pointwise data of the frozen state used by every block.
#[derive(Debug, Clone)]
pub struct FrozenCoeffs {
    pub coeffs: Vec<Coeffs>,
    /// `1 / (2 rho h1 Delta_delta(eps(v1)))`.
    pub lower: Vec<f64>,
    /// `d_j P1` from the closed form of `P`.
    pub grad_p: Vec<Vec2>,
    /// `dP/dh / (2 rho h1)` and `dP/da / (2 rho h1)`.
    pub b_h: Vec<f64>,
    pub b_a: Vec<f64>,
    pub h1: Vec<f64>,
    pub a1: Vec<f64>,
}

impl FrozenCoeffs {
    pub fn new(grid: &Grid, u1: &StateField, params: &RheologyParams) -> Result<Self> {
        u1.check_shape(grid)?;
        if let Some((field, node)) = u1.first_non_finite() {
            return Err(Error::CorruptState { field, node });
        }
        let gv = diff::grad_vec(grid, &u1.v);
        let gh = diff::grad(grid, &u1.h);
        let ga = diff::grad(grid, &u1.a);
        let n = grid.len();
        let mut out = FrozenCoeffs {
            coeffs: Vec::with_capacity(n),
            lower: Vec::with_capacity(n),
            grad_p: Vec::with_capacity(n),
            b_h: Vec::with_capacity(n),
            b_a: Vec::with_capacity(n),
            h1: u1.h.clone(),
            a1: u1.a.clone(),
        };
        for p in 0..n {
            let (h, a) = (u1.h[p], u1.a[p]);
            let eps = Strain::from_gradient(&gv[p]);
            let c = rheology::coeff_tensor(&eps, h, a, params)
                .map_err(|e| Error::Inadmissible(format!("assembly at node {p}: {e}")))?;
            let (dph, dpa) = rheology::strength_derivatives(h, a, params);
            let m = 2.0 * params.rho_ice * h;
            out.lower.push(1.0 / (m * c.delta_reg));
            out.grad_p.push([dph * gh[p][0] + dpa * ga[p][0], dph * gh[p][1] + dpa * ga[p][1]]);
            out.b_h.push(dph / m);
            out.b_a.push(dpa / m);
            out.coeffs.push(c);
        }
        Ok(out)
    }
}

/// `(S eps(v))_ij` as a linear combination of first derivatives:
/// weight of `d_n v_m` is `S_(ij),(mn)`.
fn s_eps_weight(s: &[[f64; 4]; 4], i: usize, j: usize, m: usize, n: usize) -> f64 {
    s[flat_index(i, j)][flat_index(m, n)]
}

/// Linearized Hibler operator on interior velocities, `2 ni x 2 ni`.
pub fn assemble_linearized_hibler(grid: &Grid, fc: &FrozenCoeffs, params: &RheologyParams) -> CsrMatrix {
    let lay = Layout::new(grid);
    let st = Stencils::new(grid);
    let s = s_matrix(params.e);
    let mut t = Vec::new();
    for (slot, &p) in grid.interior().iter().enumerate() {
        let c = &fc.coeffs[p];
        for i in 0..2 {
            let row = lay.v_index(slot, i);
            for j in 0..2 {
                for k in 0..2 {
                    for l in 0..2 {
                        let w = -c.a[i][j][k][l];
                        if w == 0.0 {
                            continue;
                        }
                        for (q, sw) in st.dd_kl(p, k, l).entries() {
                            if let Some(qs) = grid.interior_slot(q) {
                                t.push((row, lay.v_index(qs, j), w * sw));
                            }
                        }
                    }
                }
            }
            // lower-order term
            let gp = fc.grad_p[p];
            for j in 0..2 {
                let f = fc.lower[p] * gp[j];
                if f == 0.0 {
                    continue;
                }
                for m in 0..2 {
                    for n in 0..2 {
                        let w = f * s_eps_weight(&s, i, j, m, n);
                        if w == 0.0 {
                            continue;
                        }
                        for (q, sw) in st.d[n][p].entries() {
                            if let Some(qs) = grid.interior_slot(q) {
                                t.push((row, lay.v_index(qs, m), w * sw));
                            }
                        }
                    }
                }
            }
        }
    }
    CsrMatrix::from_triplets(lay.nv(), lay.nv(), t)
}

/// Coupling of `(h, a)` into the momentum rows, `2 ni x 2 n`; columns are
/// `[h | a]`.
pub fn assemble_b1(grid: &Grid, fc: &FrozenCoeffs) -> CsrMatrix {
    let lay = Layout::new(grid);
    let n = grid.len();
    let mut t = Vec::new();
    for (slot, &p) in grid.interior().iter().enumerate() {
        for i in 0..2 {
            let row = lay.v_index(slot, i);
            for (q, w) in diff::first(grid, p, i).entries() {
                t.push((row, q, fc.b_h[p] * w));
                t.push((row, n + q, fc.b_a[p] * w));
            }
        }
    }
    CsrMatrix::from_triplets(lay.nv(), 2 * n, t)
}

/// `weight(p) * div v` at every node, `n x 2 ni`.
pub fn assemble_weighted_div(grid: &Grid, weight: &[f64]) -> CsrMatrix {
    let lay = Layout::new(grid);
    let mut t = Vec::new();
    for p in 0..grid.len() {
        for comp in 0..2 {
            for (q, w) in diff::first(grid, p, comp).entries() {
                if let Some(qs) = grid.interior_slot(q) {
                    t.push((p, lay.v_index(qs, comp), weight[p] * w));
                }
            }
        }
    }
    CsrMatrix::from_triplets(grid.len(), lay.nv(), t)
}

/// The operator matrix kept block by block.
#[derive(Debug, Clone)]
pub struct OperatorMatrix {
    pub layout: Layout,
    /// Linearized Hibler operator `A` (enters with a minus sign).
    pub hibler: CsrMatrix,
    pub b1: CsrMatrix,
    pub h_div: CsrMatrix,
    pub a_div: CsrMatrix,
    pub omega: f64,
}

impl OperatorMatrix {
    /// Applies `Op` to a stacked vector.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let lay = self.layout;
        let nv = lay.nv();
        let n = lay.n;
        let (xv, xha) = x.split_at(nv);
        let mut y: Vec<f64> = x.iter().map(|v| self.omega * v).collect();
        {
            let (yv, yrest) = y.split_at_mut(nv);
            self.hibler.mul_vec_add(xv, -1.0, yv);
            self.b1.mul_vec_add(xha, 1.0, yv);
            let (yh, ya) = yrest.split_at_mut(n);
            self.h_div.mul_vec_add(xv, 1.0, yh);
            self.a_div.mul_vec_add(xv, 1.0, ya);
        }
        y
    }

    /// Triplets of `Op - omega I`.
    fn spatial_triplets(&self) -> Vec<(usize, usize, f64)> {
        let lay = self.layout;
        let nv = lay.nv();
        let n = lay.n;
        let mut t: Vec<(usize, usize, f64)> = Vec::with_capacity(
            self.hibler.nnz() + self.b1.nnz() + self.h_div.nnz() + self.a_div.nnz(),
        );
        t.extend(self.hibler.triplets().map(|(r, c, v)| (r, c, -v)));
        t.extend(self.b1.triplets().map(|(r, c, v)| (r, nv + c, v)));
        t.extend(self.h_div.triplets().map(|(r, c, v)| (nv + r, c, v)));
        t.extend(self.a_div.triplets().map(|(r, c, v)| (nv + n + r, c, v)));
        t
    }

    /// `Op` without the shift.
    pub fn unshifted(&self) -> CsrMatrix {
        let d = self.layout.dim();
        CsrMatrix::from_triplets(d, d, self.spatial_triplets())
    }

    /// The assembled `Op`.
    pub fn to_csr(&self) -> CsrMatrix {
        self.shifted_system(1.0, 0.0)
    }

    /// `alpha I + beta Op`, the matrix of an implicit step.
    pub fn shifted_system(&self, beta: f64, alpha: f64) -> CsrMatrix {
        let d = self.layout.dim();
        let mut t: Vec<(usize, usize, f64)> =
            self.spatial_triplets().into_iter().map(|(r, c, v)| (r, c, beta * v)).collect();
        let diag = alpha + beta * self.omega;
        t.extend((0..d).map(|i| (i, i, diag)));
        CsrMatrix::from_triplets(d, d, t)
    }

    pub fn with_omega(&self, omega: f64) -> OperatorMatrix {
        OperatorMatrix { omega, ..self.clone() }
    }
}

/// Assembles every block of the operator matrix frozen at `u1`.
pub fn assemble_operator_matrix(
    grid: &Grid,
    u1: &StateField,
    params: &RheologyParams,
    omega: f64,
) -> Result<OperatorMatrix> {
    let fc = FrozenCoeffs::new(grid, u1, params)?;
    Ok(assemble_from_coeffs(grid, &fc, params, omega))
}

pub fn assemble_from_coeffs(grid: &Grid, fc: &FrozenCoeffs, params: &RheologyParams, omega: f64) -> OperatorMatrix {
    OperatorMatrix {
        layout: Layout::new(grid),
        hibler: assemble_linearized_hibler(grid, fc, params),
        b1: assemble_b1(grid, fc),
        h_div: assemble_weighted_div(grid, &fc.h1),
        a_div: assemble_weighted_div(grid, &fc.a1),
        omega,
    }
}

/// Matrix-free application of the linearized Hibler operator to a nodal
/// velocity field (boundary rows are zero).
pub fn apply_linearized_hibler(grid: &Grid, fc: &FrozenCoeffs, params: &RheologyParams, v: &[Vec2]) -> Vec<Vec2> {
    let st = Stencils::new(grid);
    let s = s_matrix(params.e);
    let mut out = vec![[0.0; 2]; grid.len()];
    for &p in grid.interior() {
        let c = &fc.coeffs[p];
        let mut dd = [[[0.0; 2]; 2]; 2];
        for j in 0..2 {
            for k in 0..2 {
                for l in 0..2 {
                    dd[j][k][l] = st.dd_kl(p, k, l).apply_component(v, j);
                }
            }
        }
        let mut g = [[0.0; 2]; 2];
        for m in 0..2 {
            for n in 0..2 {
                g[m][n] = st.d[n][p].apply_component(v, m);
            }
        }
        for i in 0..2 {
            let mut acc = 0.0;
            for j in 0..2 {
                for k in 0..2 {
                    for l in 0..2 {
                        acc -= c.a[i][j][k][l] * dd[j][k][l];
                    }
                }
            }
            for j in 0..2 {
                let mut se = 0.0;
                for m in 0..2 {
                    for n in 0..2 {
                        se += s_eps_weight(&s, i, j, m, n) * g[m][n];
                    }
                }
                acc += fc.lower[p] * fc.grad_p[p][j] * se;
            }
            out[p][i] = acc;
        }
    }
    out
}

/// Writes a matrix as one `row col value` line per stored entry.
pub fn dump_coo(path: &Path, m: &CsrMatrix) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    for (r, c, v) in m.triplets() {
        writeln!(w, "{r} {c} {v:e}")?;
    }
    w.flush()?;
    Ok(())
}
