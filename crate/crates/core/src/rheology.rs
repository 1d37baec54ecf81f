//! Pointwise viscous-plastic constitutive algebra.
//!
//! Flattened 2x2 tensors use the index order (11, 12, 21, 22) everywhere,
//! i.e. entry `(i, j)` lives at `2 * i + j` with zero-based `i, j`.

use crate::error::{Error, Result};
use crate::fields::{Mat2, RheologyParams, Vec2};

/// Symmetric strain-rate tensor.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Strain {
    pub e11: f64,
    pub e12: f64,
    pub e22: f64,
}

impl Strain {
    pub const ZERO: Strain = Strain { e11: 0.0, e12: 0.0, e22: 0.0 };

    pub fn new(e11: f64, e12: f64, e22: f64) -> Self {
        Self { e11, e12, e22 }
    }

    pub fn identity() -> Self {
        Self::new(1.0, 0.0, 1.0)
    }

    /// Symmetric part of a velocity gradient `g[j][k] = d v_j / d x_k`.
    pub fn from_gradient(g: &Mat2) -> Self {
        Self::new(g[0][0], 0.5 * (g[0][1] + g[1][0]), g[1][1])
    }

    pub fn as_matrix(&self) -> Mat2 {
        [[self.e11, self.e12], [self.e12, self.e22]]
    }

    pub fn flat(&self) -> [f64; 4] {
        [self.e11, self.e12, self.e12, self.e22]
    }

    pub fn trace(&self) -> f64 {
        self.e11 + self.e22
    }
}

#[inline]
pub fn flat_index(i: usize, j: usize) -> usize {
    2 * i + j
}

pub fn unflatten(x: &[f64; 4]) -> Mat2 {
    [[x[0], x[1]], [x[2], x[3]]]
}

pub fn flatten(m: &Mat2) -> [f64; 4] {
    [m[0][0], m[0][1], m[1][0], m[1][1]]
}

/// The 4x4 matrix realizing the action of the yield-curve tensor on
/// flattened 2x2 tensors.
pub fn s_matrix(e: f64) -> [[f64; 4]; 4] {
    let ie2 = 1.0 / (e * e);
    [
        [1.0 + ie2, 0.0, 0.0, 1.0 - ie2],
        [0.0, ie2, ie2, 0.0],
        [0.0, ie2, ie2, 0.0],
        [1.0 - ie2, 0.0, 0.0, 1.0 + ie2],
    ]
}

/// `S eps` as a (symmetric) 2x2 matrix.
pub fn s_apply(eps: &Strain, e: f64) -> Mat2 {
    let ie2 = 1.0 / (e * e);
    let d = (1.0 + ie2) * eps.e11 + (1.0 - ie2) * eps.e22;
    let o = 2.0 * ie2 * eps.e12;
    let f = (1.0 - ie2) * eps.e11 + (1.0 + ie2) * eps.e22;
    [[d, o], [o, f]]
}

/// Squared deformation measure of the elliptic yield curve.
pub fn delta_sq(eps: &Strain, e: f64) -> f64 {
    let ie2 = 1.0 / (e * e);
    (eps.e11 * eps.e11 + eps.e22 * eps.e22) * (1.0 + ie2)
        + 4.0 * ie2 * eps.e12 * eps.e12
        + 2.0 * eps.e11 * eps.e22 * (1.0 - ie2)
}

/// `eps^T S eps` by brute force over the flattened representation.
pub fn quadratic_form(eps: &Strain, e: f64) -> f64 {
    let s = s_matrix(e);
    let f = eps.flat();
    let mut acc = 0.0;
    for r in 0..4 {
        for c in 0..4 {
            acc += f[r] * s[r][c] * f[c];
        }
    }
    acc
}

/// Regularized deformation `sqrt(delta + Delta^2)`.
pub fn delta_reg(eps: &Strain, delta: f64, e: f64) -> f64 {
    (delta + delta_sq(eps, e)).sqrt()
}

/// Ice strength `P = p* h exp(-c (1 - a))`.
pub fn ice_strength(h: f64, a: f64, params: &RheologyParams) -> f64 {
    params.p_star * h * (-params.c_bullet * (1.0 - a)).exp()
}

/// Partial derivatives `(dP/dh, dP/da)`.
pub fn strength_derivatives(h: f64, a: f64, params: &RheologyParams) -> (f64, f64) {
    let dh = params.p_star * (-params.c_bullet * (1.0 - a)).exp();
    (dh, params.c_bullet * dh * h)
}

/// Bulk and shear viscosities `(zeta, eta)`.
pub fn viscosities(eps: &Strain, p: f64, params: &RheologyParams) -> (f64, f64) {
    let zeta = p / (2.0 * delta_reg(eps, params.delta, params.e));
    (zeta, zeta / (params.e * params.e))
}

/// Regularized stress from the viscosity form
/// `2 eta eps + (zeta - eta) tr(eps) Id - P/2 Id`.
pub fn stress_sigma(eps: &Strain, h: f64, a: f64, params: &RheologyParams) -> Mat2 {
    let p = ice_strength(h, a, params);
    stress_sigma_with_strength(eps, p, params)
}

pub fn stress_sigma_with_strength(eps: &Strain, p: f64, params: &RheologyParams) -> Mat2 {
    let (zeta, eta) = viscosities(eps, p, params);
    let diag = (zeta - eta) * eps.trace() - 0.5 * p;
    [
        [2.0 * eta * eps.e11 + diag, 2.0 * eta * eps.e12],
        [2.0 * eta * eps.e12, 2.0 * eta * eps.e22 + diag],
    ]
}

/// The same stress from `(P/2) S eps / Delta_delta - (P/2) Id`.
pub fn stress_sigma_s_form(eps: &Strain, p: f64, params: &RheologyParams) -> Mat2 {
    let se = s_apply(eps, params.e);
    let d = delta_reg(eps, params.delta, params.e);
    let c = 0.5 * p / d;
    [
        [c * se[0][0] - 0.5 * p, c * se[0][1]],
        [c * se[1][0], c * se[1][1] - 0.5 * p],
    ]
}

/// Coefficients of the linearized principal part at one node, stored as
/// `a[i][j][k][l]`, together with the scalars used to build them.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coeffs {
    pub a: [[[[f64; 2]; 2]; 2]; 2],
    pub p: f64,
    pub delta_reg: f64,
}

impl Coeffs {
    pub fn zero() -> Self {
        Self { a: [[[[0.0; 2]; 2]; 2]; 2], p: 0.0, delta_reg: 1.0 }
    }

    pub fn max_abs(&self) -> f64 {
        let mut m = 0.0f64;
        for i in 0..2 {
            for j in 0..2 {
                for k in 0..2 {
                    for l in 0..2 {
                        m = m.max(self.a[i][j][k][l].abs());
                    }
                }
            }
        }
        m
    }
}

/// Coefficient tensor with the ice strength computed from `(h, a)`.
pub fn coeff_tensor(eps: &Strain, h: f64, a: f64, params: &RheologyParams) -> Result<Coeffs> {
    coeff_tensor_with_strength(eps, ice_strength(h, a, params), h, params)
}

/// `a_ij^kl = -(P / (2 rho h Delta_delta)) (S_(ik),(jl) - (S eps)_ik (S eps)_jl / Delta_delta^2)`.
///
/// This is the coefficient of `d_k d_l v_j` in component `i` of
/// `(1/(rho h)) div S_delta`, with the sign flipped so that the principal
/// part reads `-sum a_ij^kl d_k d_l v_j`.
pub fn coeff_tensor_with_strength(
    eps: &Strain,
    p: f64,
    h: f64,
    params: &RheologyParams,
) -> Result<Coeffs> {
    if !(h >= params.kappa) {
        return Err(Error::Inadmissible(format!(
            "coefficient assembly needs h >= kappa = {}, got h = {h}",
            params.kappa
        )));
    }
    let s = s_matrix(params.e);
    let se = s_apply(eps, params.e);
    debug_assert!(se[0][1] == se[1][0]);
    let d = delta_reg(eps, params.delta, params.e);
    let scale = -p / (2.0 * params.rho_ice * h * d);
    let inv_d2 = 1.0 / (d * d);
    let mut a = [[[[0.0; 2]; 2]; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            for k in 0..2 {
                for l in 0..2 {
                    let sv = s[flat_index(i, k)][flat_index(j, l)];
                    a[i][j][k][l] = scale * (sv - se[i][k] * se[j][l] * inv_d2);
                }
            }
        }
    }
    Ok(Coeffs { a, p, delta_reg: d })
}

/// Symbol `M_ij = sum_kl a_ij^kl xi_k xi_l` for a unit direction `xi`.
pub fn symbol_matrix(c: &Coeffs, xi: Vec2) -> Result<Mat2> {
    let n = xi[0].hypot(xi[1]);
    if (n - 1.0).abs() > 1e-12 {
        return Err(Error::Param(format!("symbol direction must be a unit vector, |xi| = {n}")));
    }
    let mut m = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            let mut acc = 0.0;
            for k in 0..2 {
                for l in 0..2 {
                    acc += c.a[i][j][k][l] * xi[k] * xi[l];
                }
            }
            m[i][j] = acc;
        }
    }
    Ok(m)
}

/// Eigenvalues `(min, max)` of the symmetric part of a 2x2 matrix.
pub fn sym_eigenvalues(m: &Mat2) -> (f64, f64) {
    let p = m[0][0];
    let r = m[1][1];
    let q = 0.5 * (m[0][1] + m[1][0]);
    let mean = 0.5 * (p + r);
    let rad = (0.5 * (p - r)).hypot(q);
    (mean - rad, mean + rad)
}

/// Upper bound on the largest eigenvalue of `sym(M)` implied by the
/// Cauchy-Schwarz inequality in the `S` inner product.
pub fn parabolicity_margin(c: &Coeffs, h: f64, params: &RheologyParams) -> f64 {
    let d = c.delta_reg;
    -c.p * params.delta / (2.0 * params.rho_ice * h * params.e * params.e * d * d * d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn params_with(delta: f64) -> RheologyParams {
        RheologyParams { delta, ..RheologyParams::default() }
    }

    #[test]
    fn flat_order_round_trip() {
        let m = [[1.0, 2.0], [3.0, 4.0]];
        assert_eq!(flatten(&m), [1.0, 2.0, 3.0, 4.0]);
        assert_eq!(unflatten(&flatten(&m)), m);
        assert_eq!(flat_index(0, 1), 1);
        assert_eq!(flat_index(1, 0), 2);
    }

    #[test]
    fn s_matrix_structure() {
        let s = s_matrix(2.0);
        for r in 0..4 {
            for c in 0..4 {
                assert_eq!(s[r][c], s[c][r]);
            }
        }
        let id = Strain::identity();
        let sid = s_apply(&id, 2.0);
        assert_eq!(sid, [[2.0, 0.0], [0.0, 2.0]]);
        // matrix-vector product agrees with the closed form
        let eps = Strain::new(0.3, -0.7, 1.1);
        let f = eps.flat();
        let se = s_apply(&eps, 2.0);
        for r in 0..4 {
            let v: f64 = (0..4).map(|c| s[r][c] * f[c]).sum();
            assert_relative_eq!(v, flatten(&se)[r], epsilon = 1e-15);
        }
    }

    #[test]
    fn delta_sq_examples() {
        assert_eq!(delta_sq(&Strain::ZERO, 2.0), 0.0);
        assert_relative_eq!(delta_sq(&Strain::new(1.0, 0.0, 0.0), 2.0), 1.25, epsilon = 1e-15);
        assert_relative_eq!(quadratic_form(&Strain::new(1.0, 0.0, 0.0), 2.0), 1.25, epsilon = 1e-15);
        assert_relative_eq!(delta_sq(&Strain::identity(), 2.0), 4.0, epsilon = 1e-15);
        assert_relative_eq!(quadratic_form(&Strain::identity(), 2.0), 4.0, epsilon = 1e-15);
    }

    #[test]
    fn delta_reg_examples() {
        assert_eq!(delta_reg(&Strain::ZERO, 1.0, 2.0), 1.0);
        assert_relative_eq!(delta_reg(&Strain::ZERO, 4e-18, 2.0), 2e-9, max_relative = 1e-15);
        assert_relative_eq!(
            delta_reg(&Strain::new(1.0, 0.0, 0.0), 0.75, 2.0),
            std::f64::consts::SQRT_2,
            max_relative = 1e-15
        );
    }

    #[test]
    fn ice_strength_examples() {
        let p = RheologyParams::default();
        assert_eq!(ice_strength(1.0, 1.0, &p), p.p_star);
        assert_eq!(ice_strength(0.0, 0.3, &p), 0.0);
        assert_relative_eq!(ice_strength(1.0, 0.95, &p), (-1.0f64).exp(), max_relative = 1e-13);
        let (dh, da) = strength_derivatives(2.0, 0.9, &p);
        let pp = ice_strength(2.0, 0.9, &p);
        assert_relative_eq!(dh, pp / 2.0, max_relative = 1e-15);
        assert_relative_eq!(da, p.c_bullet * pp, max_relative = 1e-15);
    }

    #[test]
    fn viscosity_examples() {
        let p = params_with(1.0);
        let (z, n) = viscosities(&Strain::ZERO, 2.0, &p);
        assert_eq!(z, 1.0);
        assert_eq!(n, 0.25);
        assert_eq!(viscosities(&Strain::new(0.4, 0.1, -0.2), 0.0, &p), (0.0, 0.0));
        let p = params_with(0.75);
        let (z, n) = viscosities(&Strain::new(1.0, 0.0, 0.0), 1.0, &p);
        assert_relative_eq!(z, 1.0 / (2.0 * 2f64.sqrt()), max_relative = 1e-15);
        assert_relative_eq!(n, z / 4.0, max_relative = 1e-15);
    }

    #[test]
    fn stress_examples() {
        let p = RheologyParams::default();
        let pp = ice_strength(1.3, 0.8, &p);
        let s = stress_sigma(&Strain::ZERO, 1.3, 0.8, &p);
        assert_eq!(s, [[-0.5 * pp, 0.0], [0.0, -0.5 * pp]]);
        let s = stress_sigma_with_strength(&Strain::new(0.2, 0.3, -0.1), 0.0, &p);
        assert_eq!(s, [[0.0; 2]; 2]);
        // offline oracle with delta = 0: S Id = 2 Id and Delta = 2
        let p0 = params_with(0.0);
        for s in [
            stress_sigma_with_strength(&Strain::identity(), 2.0, &p0),
            stress_sigma_s_form(&Strain::identity(), 2.0, &p0),
        ] {
            for row in s {
                for x in row {
                    assert!(x.abs() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn coeff_tensor_zero_strain() {
        let p = RheologyParams { delta: 1.0, rho_ice: 1.0, e: 2.0, ..RheologyParams::default() };
        let c = coeff_tensor_with_strength(&Strain::ZERO, 1.0, 1.0, &p).unwrap();
        assert_relative_eq!(c.a[0][0][0][0], -0.625, epsilon = 1e-15);
        assert_relative_eq!(c.a[1][1][0][0], -0.125, epsilon = 1e-15);
        assert_relative_eq!(c.a[0][1][0][0], 0.0, epsilon = 1e-15);
        assert_relative_eq!(c.a[1][0][0][0], 0.0, epsilon = 1e-15);
        // mixed entries carry the cross-coupling of the two components
        assert_relative_eq!(c.a[0][1][0][1], -0.375, epsilon = 1e-15);
        let m = symbol_matrix(&c, [1.0, 0.0]).unwrap();
        assert_relative_eq!(m[0][0], -0.625, epsilon = 1e-15);
        assert_relative_eq!(m[1][1], -0.125, epsilon = 1e-15);
        assert_eq!(m[0][1], 0.0);
        assert_eq!(m[1][0], 0.0);
    }

    #[test]
    fn coeff_tensor_zero_strength_and_floor() {
        let p = RheologyParams::default();
        let c = coeff_tensor_with_strength(&Strain::new(0.1, 0.2, 0.3), 0.0, 1.0, &p).unwrap();
        assert_eq!(c.max_abs(), 0.0);
        assert_eq!(symbol_matrix(&c, [0.6, 0.8]).unwrap(), [[0.0; 2]; 2]);
        assert!(coeff_tensor(&Strain::ZERO, 0.5 * p.kappa, 0.5, &p).is_err());
        assert!(coeff_tensor(&Strain::ZERO, p.kappa, 0.5, &p).is_ok());
    }

    #[test]
    fn coeff_tensor_index_symmetry() {
        let p = RheologyParams::default();
        let c = coeff_tensor(&Strain::new(0.31, -0.17, 0.05), 1.4, 0.7, &p).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                for k in 0..2 {
                    for l in 0..2 {
                        assert_eq!(c.a[i][j][k][l], c.a[j][i][l][k]);
                    }
                }
            }
        }
    }

    /// Central finite difference of the exact stress divergence with respect
    /// to the velocity Hessian reproduces the coefficients.
    #[test]
    fn coeff_tensor_is_principal_coefficient() {
        let p = RheologyParams { delta: 0.3, ..RheologyParams::default() };
        let (h, a) = (1.2, 0.9);
        let grad = [[0.4, -0.3], [0.25, 0.1]];
        let eps = Strain::from_gradient(&grad);
        let c = coeff_tensor(&eps, h, a, &p).unwrap();
        let pp = ice_strength(h, a, &p);
        // d/dx_k of S_delta(eps(x)) with d eps / d x_k set by a unit second
        // derivative d_k d_l v_j; compare with -a_ij^kl (rho h).
        let s_of = |g: &Mat2| {
            let e = Strain::from_gradient(g);
            let s = stress_sigma_s_form(&e, pp, &p);
            [[s[0][0] + 0.5 * pp, s[0][1]], [s[1][0], s[1][1] + 0.5 * pp]]
        };
        let hstep = 1e-6;
        for j in 0..2 {
            for l in 0..2 {
                for k in 0..2 {
                    // perturbing d_l v_j along x_k; div picks component i of d_k S_ik
                    let mut gp = grad;
                    let mut gm = grad;
                    gp[j][l] += hstep;
                    gm[j][l] -= hstep;
                    let sp = s_of(&gp);
                    let sm = s_of(&gm);
                    for i in 0..2 {
                        let d = (sp[i][k] - sm[i][k]) / (2.0 * hstep) / (p.rho_ice * h);
                        // symmetrize over (k, l) because d_k d_l commute
                        let mut gp2 = grad;
                        let mut gm2 = grad;
                        gp2[j][k] += hstep;
                        gm2[j][k] -= hstep;
                        let d2 = (s_of(&gp2)[i][l] - s_of(&gm2)[i][l]) / (2.0 * hstep) / (p.rho_ice * h);
                        let want = -0.5 * (c.a[i][j][k][l] + c.a[i][j][l][k]);
                        assert_relative_eq!(0.5 * (d + d2), want, epsilon = 1e-7);
                    }
                }
            }
        }
    }

    #[test]
    fn symbol_rejects_non_unit_direction() {
        let c = Coeffs::zero();
        assert!(symbol_matrix(&c, [1.0, 1.0]).is_err());
    }

    #[test]
    fn sym_eigenvalues_diag_and_rotated() {
        assert_eq!(sym_eigenvalues(&[[-2.0, 0.0], [0.0, -1.0]]), (-2.0, -1.0));
        let (lo, hi) = sym_eigenvalues(&[[0.0, 1.0], [1.0, 0.0]]);
        assert_relative_eq!(lo, -1.0);
        assert_relative_eq!(hi, 1.0);
    }
}
