//! Operators of the system written in the coordinates that follow the ice.
//!
//! All derivatives `d_k` here are taken in the Lagrangian variable `y`; the
//! inverse gradient `gy[m][k] = d Y_m / d x_k` converts them into Eulerian
//! derivatives by the chain rule `d/dx_k = sum_m gy[m][k] d/dy_m`.

use crate::fields::{Grid, Mat2, RheologyParams, StateField, Vec2};
use crate::operators::diff::Stencils;
use crate::rheology::{self, s_apply, Coeffs, Strain};
use crate::error::{Error, Result};

/// Per-node geometric data of one flow-map snapshot.
#[derive(Debug, Clone)]
pub struct Geometry {
    pub gy: Vec<Mat2>,
    /// `dgy[p][m]` is `d gy / d y_m` at node `p`.
    pub dgy: Vec<[Mat2; 2]>,
}

impl Geometry {
    pub fn identity(grid: &Grid) -> Self {
        Self { gy: vec![crate::fields::IDENTITY; grid.len()], dgy: vec![[[[0.0; 2]; 2]; 2]; grid.len()] }
    }

    pub fn new(grid: &Grid, st: &Stencils, gy: Vec<Mat2>) -> Self {
        let dgy = (0..grid.len())
            .map(|p| {
                let mut d = [[[0.0; 2]; 2]; 2];
                for (m, dm) in d.iter_mut().enumerate() {
                    for (q, w) in st.d[m][p].entries() {
                        for r in 0..2 {
                            for c in 0..2 {
                                dm[r][c] += w * gy[q][r][c];
                            }
                        }
                    }
                }
                d
            })
            .collect();
        Self { gy, dgy }
    }
}

/// How `d_m eps~_jl` is formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StrainDerivative {
    /// Product-rule expansion in derivatives of `gy` and second derivatives
    /// of the velocity.
    ProductRule,
    /// Finite differences of the nodal transformed strain.
    Direct,
}

/// Lagrangian velocity gradient `g[j][k] = d v_j / d y_k` at node `p`.
#[inline]
fn lag_grad(st: &Stencils, v: &[Vec2], p: usize) -> Mat2 {
    [
        [st.d[0][p].apply_component(v, 0), st.d[1][p].apply_component(v, 0)],
        [st.d[0][p].apply_component(v, 1), st.d[1][p].apply_component(v, 1)],
    ]
}

/// Eulerian velocity gradient `G[j][i] = sum_k g[j][k] gy[k][i]`.
#[inline]
fn eulerian_grad(g: &Mat2, gy: &Mat2) -> Mat2 {
    let mut out = [[0.0; 2]; 2];
    for j in 0..2 {
        for i in 0..2 {
            out[j][i] = g[j][0] * gy[0][i] + g[j][1] * gy[1][i];
        }
    }
    out
}

/// `2 eps~_ij = sum_k (d_i Y_k) d_k v_j + (d_j Y_k) d_k v_i`.
pub fn transformed_strain_at(g: &Mat2, gy: &Mat2) -> Strain {
    Strain::from_gradient(&eulerian_grad(g, gy))
}

pub fn transformed_strain(grid: &Grid, v: &[Vec2], gy: &[Mat2]) -> Vec<Strain> {
    let st = Stencils::new(grid);
    (0..grid.len()).map(|p| transformed_strain_at(&lag_grad(&st, v, p), &gy[p])).collect()
}

/// Divergence with the chain rule, `sum_jk (d_j Y_k) d_k v_j`.
#[inline]
pub fn transformed_div_at(g: &Mat2, gy: &Mat2) -> f64 {
    let e = eulerian_grad(g, gy);
    e[0][0] + e[1][1]
}

/// `(d_j P)~ = sum_k (d_j Y_k)(dP/dh d_k h + dP/da d_k a)`.
fn transformed_grad_p(gy: &Mat2, dph: f64, dpa: f64, gh: Vec2, ga: Vec2) -> Vec2 {
    let lag = [dph * gh[0] + dpa * ga[0], dph * gh[1] + dpa * ga[1]];
    [gy[0][0] * lag[0] + gy[1][0] * lag[1], gy[0][1] * lag[0] + gy[1][1] * lag[1]]
}

/// Shared ingredients at one node.
struct NodeData {
    coeffs: Coeffs,
    eps: Strain,
    h: f64,
    grad_h: Vec2,
    grad_a: Vec2,
    dph: f64,
    dpa: f64,
}

fn node_data(
    st: &Stencils,
    u: &StateField,
    geo: &Geometry,
    params: &RheologyParams,
    p: usize,
) -> Result<NodeData> {
    let g = lag_grad(st, &u.v, p);
    let eps = transformed_strain_at(&g, &geo.gy[p]);
    let (h, a) = (u.h[p], u.a[p]);
    let coeffs = rheology::coeff_tensor(&eps, h, a, params)
        .map_err(|e| Error::Inadmissible(format!("transformed coefficients at node {p}: {e}")))?;
    let (dph, dpa) = rheology::strength_derivatives(h, a, params);
    Ok(NodeData {
        coeffs,
        eps,
        h,
        grad_h: [st.d[0][p].apply(&u.h), st.d[1][p].apply(&u.h)],
        grad_a: [st.d[0][p].apply(&u.a), st.d[1][p].apply(&u.a)],
        dph,
        dpa,
    })
}

/// `de[m][j][l] = d_m eps~_jl` by the product rule.
fn strain_derivative_product(st: &Stencils, v: &[Vec2], geo: &Geometry, p: usize) -> [[[f64; 2]; 2]; 2] {
    let g = lag_grad(st, v, p);
    // hv[j][k][m] = d_k d_m v_j
    let mut hv = [[[0.0; 2]; 2]; 2];
    for (j, hj) in hv.iter_mut().enumerate() {
        for k in 0..2 {
            for m in 0..2 {
                hj[k][m] = st.dd_kl(p, k, m).apply_component(v, j);
            }
        }
    }
    let gy = &geo.gy[p];
    let mut de = [[[0.0; 2]; 2]; 2];
    for m in 0..2 {
        let dgy = &geo.dgy[p][m];
        for j in 0..2 {
            for l in 0..2 {
                let mut acc = 0.0;
                for k in 0..2 {
                    acc += dgy[k][j] * g[l][k]
                        + gy[k][j] * hv[l][k][m]
                        + dgy[k][l] * g[j][k]
                        + gy[k][l] * hv[j][k][m];
                }
                de[m][j][l] = 0.5 * acc;
            }
        }
    }
    de
}

/// `de[m][j][l] = d_m eps~_jl` by differencing the nodal strain field.
fn strain_derivative_direct(st: &Stencils, eps: &[Strain], p: usize) -> [[[f64; 2]; 2]; 2] {
    let mut de = [[[0.0; 2]; 2]; 2];
    for (m, dm) in de.iter_mut().enumerate() {
        let mut e11 = 0.0;
        let mut e12 = 0.0;
        let mut e22 = 0.0;
        for (q, w) in st.d[m][p].entries() {
            e11 += w * eps[q].e11;
            e12 += w * eps[q].e12;
            e22 += w * eps[q].e22;
        }
        *dm = [[e11, e12], [e12, e22]];
    }
    de
}

/// Nodal values of the transformed Hibler operator applied to the velocity
/// of `u`, i.e. `(1/(rho h)) div S_delta` pulled back along the flow. The
/// boundary ring is left at zero.
pub fn apply_transformed_hibler(
    grid: &Grid,
    st: &Stencils,
    u: &StateField,
    geo: &Geometry,
    params: &RheologyParams,
    how: StrainDerivative,
) -> Result<Vec<Vec2>> {
    let eps_field: Vec<Strain> = match how {
        StrainDerivative::Direct => (0..grid.len())
            .map(|p| transformed_strain_at(&lag_grad(st, &u.v, p), &geo.gy[p]))
            .collect(),
        StrainDerivative::ProductRule => Vec::new(),
    };
    let mut out = vec![[0.0; 2]; grid.len()];
    for &p in grid.interior() {
        let nd = node_data(st, u, geo, params, p)?;
        let de = match how {
            StrainDerivative::ProductRule => strain_derivative_product(st, &u.v, geo, p),
            StrainDerivative::Direct => strain_derivative_direct(st, &eps_field, p),
        };
        out[p] = hibler_at(&nd, &de, &geo.gy[p], params);
    }
    Ok(out)
}

fn hibler_at(nd: &NodeData, de: &[[[f64; 2]; 2]; 2], gy: &Mat2, params: &RheologyParams) -> Vec2 {
    let a = &nd.coeffs.a;
    let se = s_apply(&nd.eps, params.e);
    let gp = transformed_grad_p(gy, nd.dph, nd.dpa, nd.grad_h, nd.grad_a);
    let low = 1.0 / (2.0 * params.rho_ice * nd.h * nd.coeffs.delta_reg);
    let mut out = [0.0; 2];
    for (i, oi) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for j in 0..2 {
            for k in 0..2 {
                for l in 0..2 {
                    // d eps_jl / d x_k = sum_m gy[m][k] d_m eps_jl
                    let dk = gy[0][k] * de[0][j][l] + gy[1][k] * de[1][j][l];
                    acc -= a[i][j][k][l] * dk;
                }
            }
        }
        for j in 0..2 {
            acc += low * gp[j] * se[i][j];
        }
        *oi = acc;
    }
    out
}

/// `B~(u)(h, a)` at every interior node:
/// `(dP/dh d_i h + dP/da d_i a) / (2 rho h)` with chain-rule derivatives.
pub fn apply_transformed_b(
    grid: &Grid,
    st: &Stencils,
    u: &StateField,
    geo: &Geometry,
    params: &RheologyParams,
) -> Vec<Vec2> {
    let mut out = vec![[0.0; 2]; grid.len()];
    for &p in grid.interior() {
        let (dph, dpa) = rheology::strength_derivatives(u.h[p], u.a[p], params);
        let gh = [st.d[0][p].apply(&u.h), st.d[1][p].apply(&u.h)];
        let ga = [st.d[0][p].apply(&u.a), st.d[1][p].apply(&u.a)];
        let gp = transformed_grad_p(&geo.gy[p], dph, dpa, gh, ga);
        let m = 2.0 * params.rho_ice * u.h[p];
        out[p] = [gp[0] / m, gp[1] / m];
    }
    out
}

/// Chain-rule divergence of the velocity at every node.
pub fn transformed_div(grid: &Grid, st: &Stencils, v: &[Vec2], geo: &Geometry) -> Vec<f64> {
    (0..grid.len()).map(|p| transformed_div_at(&lag_grad(st, v, p), &geo.gy[p])).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::IDENTITY;
    use crate::operators::{apply_linearized_hibler, FrozenCoeffs};
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn params() -> RheologyParams {
        RheologyParams { delta: 0.25, c_bullet: 2.0, ..RheologyParams::default() }
    }

    fn smooth(grid: &Grid) -> StateField {
        StateField::from_fn(grid, |x| {
            let s = (PI * x[0]).sin() * (PI * x[1]).sin();
            ([0.4 * s, -0.3 * s * (1.0 + x[0])], 1.0 + 0.2 * (PI * x[0]).cos() * x[1], 0.6 + 0.1 * x[0] * x[1])
        })
    }

    #[test]
    fn strain_examples() {
        assert_eq!(transformed_strain_at(&[[0.0; 2]; 2], &[[1.0, -0.4], [0.0, 1.0]]), Strain::ZERO);
        let g = [[0.3, -0.2], [0.7, 0.1]];
        assert_eq!(transformed_strain_at(&g, &IDENTITY), Strain::from_gradient(&g));
        // shear v~ = (y2, 0) pulled back by grad Y = [[1, -t], [0, 1]]
        let t = 0.3;
        let e = transformed_strain_at(&[[0.0, 1.0], [0.0, 0.0]], &[[1.0, -t], [0.0, 1.0]]);
        assert_relative_eq!(e.e11, 0.0);
        assert_relative_eq!(e.e12, 0.5);
        assert_relative_eq!(e.e22, 0.0);
    }

    #[test]
    fn strain_matches_eulerian_strain_under_affine_flow() {
        // X(y) = y + t (y2, 0); the Eulerian field v(x) = (x2 + 2 x1, -x1)
        // has Lagrangian samples v~(y) = v(X(y)).
        let g = Grid::unit(9).unwrap();
        let t = 0.2;
        let v = |x: Vec2| [x[1] + 2.0 * x[0], -x[0]];
        let vt = g.sample_vec(|y| v([y[0] + t * y[1], y[1]]));
        let gy = vec![[[1.0, -t], [0.0, 1.0]]; g.len()];
        let e = transformed_strain(&g, &vt, &gy);
        for s in e {
            assert_relative_eq!(s.e11, 2.0, epsilon = 1e-12);
            assert_relative_eq!(s.e12, 0.0, epsilon = 1e-12);
            assert_relative_eq!(s.e22, 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn identity_flow_matches_linearization_at_same_state() {
        let g = Grid::unit(13).unwrap();
        let p = params();
        let u = smooth(&g);
        let st = Stencils::new(&g);
        let geo = Geometry::identity(&g);
        let nl = apply_transformed_hibler(&g, &st, &u, &geo, &p, StrainDerivative::ProductRule).unwrap();
        let fc = FrozenCoeffs::new(&g, &u, &p).unwrap();
        let lin = apply_linearized_hibler(&g, &fc, &p, &u.v);
        for q in 0..g.len() {
            assert_relative_eq!(nl[q][0], lin[q][0], epsilon = 1e-12, max_relative = 1e-12);
            assert_relative_eq!(nl[q][1], lin[q][1], epsilon = 1e-12, max_relative = 1e-12);
        }
    }

    #[test]
    fn zero_velocity_constant_state_gives_zero() {
        let g = Grid::unit(8).unwrap();
        let u = StateField::constant(&g, [0.0, 0.0], 1.2, 0.5);
        let st = Stencils::new(&g);
        let out = apply_transformed_hibler(&g, &st, &u, &Geometry::identity(&g), &params(), StrainDerivative::ProductRule).unwrap();
        assert!(out.iter().all(|x| x[0].abs() < 1e-14 && x[1].abs() < 1e-14));
        let b = apply_transformed_b(&g, &st, &u, &Geometry::identity(&g), &params());
        assert!(b.iter().all(|x| x[0].abs() < 1e-14 && x[1].abs() < 1e-14));
    }
}
