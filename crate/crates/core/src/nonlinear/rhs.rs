//! Right-hand sides of the fixed-point map.

use crate::error::{Error, Result};
use crate::fields::{mat_vec, norm2, validate_state, ForcingFields, Grid, RheologyParams, StateField, Vec2, VectorSource};
use crate::lagrangian::{compose_vec, Direction, FlowMap};
use crate::operators::diff::Stencils;
use crate::operators::OperatorMatrix;
use crate::thermo;

use super::transformed::{apply_transformed_b, apply_transformed_hibler, transformed_div, Geometry, StrainDerivative};

/// Samples of a forcing field along the flow, `f(t, X(t, y))`. Spatially
/// uniform sources skip the composition.
pub fn lagrangian_forcing(grid: &Grid, src: &VectorSource, map: &FlowMap, t: f64) -> Result<Vec<Vec2>> {
    match src {
        VectorSource::Constant(c) => Ok(vec![*c; grid.len()]),
        VectorSource::Analytic(f) => Ok((0..grid.len())
            .map(|p| f(t, grid.clamp(map.position(grid, p)).0))
            .collect()),
        VectorSource::Table { .. } => {
            let eul = src.sample(grid, t);
            Ok(compose_vec(grid, &eul, map, Direction::Forward)?.0)
        }
    }
}

/// Wind stress `rho_a C_a |V_a| R_a V_a` and water stress
/// `rho_o C_o |V_o - v| R_o (V_o - v)` at one node.
pub fn drag(params: &RheologyParams, va: Vec2, vo: Vec2, v: Vec2) -> (Vec2, Vec2) {
    let ra = params.r_atm();
    let ro = params.r_ocn();
    let ta = mat_vec(&ra, &va);
    let sa = params.rho_atm * params.c_atm * norm2(&va);
    let rel = [vo[0] - v[0], vo[1] - v[1]];
    let to = mat_vec(&ro, &rel);
    let so = params.rho_ocn * params.c_ocn * norm2(&rel);
    ([sa * ta[0], sa * ta[1]], [so * to[0], so * to[1]])
}

/// Everything the right-hand side needs besides the iterate itself.
pub struct RhsContext<'a> {
    pub grid: &'a Grid,
    pub stencils: &'a Stencils,
    pub params: &'a RheologyParams,
    pub forcing: &'a ForcingFields,
    /// Initial data; the frozen operator was assembled there.
    pub u0: &'a StateField,
    pub op: &'a OperatorMatrix,
}

/// `(F1, F2, F3)` at one time node, stored as a state (velocity slot holds
/// `F1`, zero on the boundary ring).
pub fn assemble_rhs(
    ctx: &RhsContext<'_>,
    u: &StateField,
    map: &FlowMap,
    geo: &Geometry,
    t: f64,
) -> Result<StateField> {
    let grid = ctx.grid;
    let params = ctx.params;
    let rep = validate_state(u, params)?;
    if !rep.in_v {
        return Err(Error::Blowup { t, margin_h: rep.margin_h, margin_a: rep.margin_a });
    }
    let st = ctx.stencils;
    let lay = ctx.op.layout;
    let omega = ctx.op.omega;
    let n = grid.len();

    let ahv = apply_transformed_hibler(grid, st, u, geo, params, StrainDerivative::ProductRule)?;
    let vx = lay.pack_v(grid, &u.v);
    let a0v = lay.unpack_v(grid, &ctx.op.hibler.mul_vec(&vx));
    let bt = apply_transformed_b(grid, st, u, geo, params);
    let mut ha = Vec::with_capacity(2 * n);
    ha.extend_from_slice(&u.h);
    ha.extend_from_slice(&u.a);
    let b0 = lay.unpack_v(grid, &ctx.op.b1.mul_vec(&ha));

    let va = lagrangian_forcing(grid, &ctx.forcing.v_atm, map, t)?;
    let vo = lagrangian_forcing(grid, &ctx.forcing.v_ocn, map, t)?;
    let gh = lagrangian_forcing(grid, &ctx.forcing.grad_h, map, t)?;

    let mut f = StateField::zeros(n);
    for &p in grid.interior() {
        let v = u.v[p];
        let (ta, to) = drag(params, va[p], vo[p], v);
        let m = params.rho_ice * u.h[p];
        for i in 0..2 {
            let perp = if i == 0 { -v[1] } else { v[0] };
            f.v[p][i] = (ahv[p][i] - a0v[p][i]) - (bt[p][i] - b0[p][i]) + omega * v[i]
                - params.c_cor * perp
                - params.g * gh[p][i]
                + (ta[i] + to[i]) / m;
        }
    }

    let div_t = transformed_div(grid, st, &u.v, geo);
    let h0div = ctx.op.h_div.mul_vec(&vx);
    let a0div = ctx.op.a_div.mul_vec(&vx);
    for p in 0..n {
        let (h, a) = (u.h[p], u.a[p]);
        let sh = thermo::source_h(h, a, &ctx.forcing.growth)?;
        let sa = thermo::source_a(h, a, &ctx.forcing.growth, params.kappa)?;
        f.h[p] = h0div[p] - h * div_t[p] + omega * h + sh;
        f.a[p] = a0div[p] - a * div_t[p] + omega * a + sa;
    }
    Ok(f)
}
