//! Dense spectral probe of the operator matrix and the shift selection.

use std::f64::consts::FRAC_PI_2;

use faer::Mat;

use super::{assemble_operator_matrix, OperatorMatrix};
use crate::error::{Error, Result};
use crate::fields::{Grid, RheologyParams, StateField};
use crate::lagrangian::bilinear;
use crate::sparse::CsrMatrix;

/// Largest dimension accepted by the dense eigensolver.
pub const MAX_DENSE_DIM: usize = 4 * 24 * 24;

#[derive(Debug, Clone, PartialEq)]
pub struct SectorEntry {
    pub omega: f64,
    pub min_re: f64,
    /// Largest `|arg lambda|` over the spectrum, radians.
    pub max_arg: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SectorReport {
    pub entries: Vec<SectorEntry>,
    /// Eigenvalues of the unshifted operator as `(re, im)`.
    pub spectrum: Vec<(f64, f64)>,
    /// Smallest tested shift that passes, if any.
    pub omega_min: Option<f64>,
    pub angle_max: f64,
}

/// Spectrum of a square sparse matrix via a dense eigensolve.
pub fn dense_spectrum(m: &CsrMatrix) -> Result<Vec<(f64, f64)>> {
    if m.nrows != m.ncols {
        return Err(Error::Eigen("matrix must be square".into()));
    }
    if m.nrows > MAX_DENSE_DIM {
        return Err(Error::Eigen(format!(
            "dimension {} above the dense limit {MAX_DENSE_DIM}",
            m.nrows
        )));
    }
    let mut d = Mat::<f64>::zeros(m.nrows, m.ncols);
    for (r, c, v) in m.triplets() {
        d[(r, c)] = v;
    }
    let ev = d.eigenvalues().map_err(|e| Error::Eigen(format!("{e:?}")))?;
    let out: Vec<(f64, f64)> = ev.iter().map(|z| (z.re, z.im)).collect();
    if out.iter().any(|z| !z.0.is_finite() || !z.1.is_finite()) {
        return Err(Error::Eigen("non-finite eigenvalue".into()));
    }
    Ok(out)
}

/// Checks `Re lambda > 0` and `|arg lambda| <= pi/2 - margin` for the
/// spectrum of `a0 + omega I` at each shift.
pub fn sector_probe_matrix(a0: &CsrMatrix, omegas: &[f64], margin: f64) -> Result<SectorReport> {
    let spectrum = dense_spectrum(a0)?;
    let angle_max = FRAC_PI_2 - margin;
    let entries: Vec<SectorEntry> = omegas
        .iter()
        .map(|&omega| {
            let mut min_re = f64::INFINITY;
            let mut max_arg = 0.0f64;
            for &(re, im) in &spectrum {
                let r = re + omega;
                min_re = min_re.min(r);
                max_arg = max_arg.max(im.atan2(r).abs());
            }
            SectorEntry { omega, min_re, max_arg, pass: min_re > 0.0 && max_arg <= angle_max }
        })
        .collect();
    let omega_min = entries
        .iter()
        .filter(|e| e.pass)
        .map(|e| e.omega)
        .fold(None, |m: Option<f64>, w| Some(m.map_or(w, |m| m.min(w))));
    Ok(SectorReport { entries, spectrum, omega_min, angle_max })
}

pub fn sector_probe(op: &OperatorMatrix, omegas: &[f64], margin: f64) -> Result<SectorReport> {
    sector_probe_matrix(&op.unshifted(), omegas, margin)
}

/// Resamples a state onto an `n x n` grid of the same domain.
pub fn proxy_state(grid: &Grid, u: &StateField, n: usize) -> Result<(Grid, StateField)> {
    let g = Grid::new(n, n, grid.lx, grid.ly)?;
    let v1: Vec<f64> = u.v.iter().map(|v| v[0]).collect();
    let v2: Vec<f64> = u.v.iter().map(|v| v[1]).collect();
    let s = StateField::from_fn(&g, |x| {
        (
            [bilinear(grid, &v1, x).0, bilinear(grid, &v2, x).0],
            bilinear(grid, &u.h, x).0,
            bilinear(grid, &u.a, x).0,
        )
    });
    Ok((g, s))
}

/// Starting from `omega = 1`, doubles the shift until the operator frozen
/// at a coarse `proxy_n x proxy_n` copy of `u1` passes the sector test.
pub fn select_omega(
    grid: &Grid,
    u1: &StateField,
    params: &RheologyParams,
    proxy_n: usize,
    margin: f64,
) -> Result<(f64, SectorReport)> {
    let (g, s) = proxy_state(grid, u1, proxy_n)?;
    let op = assemble_operator_matrix(&g, &s, params, 0.0)?;
    let omegas: Vec<f64> = (0..60).map(|k| 2f64.powi(k)).collect();
    let rep = sector_probe(&op, &omegas, margin)?;
    match rep.entries.iter().find(|e| e.pass) {
        Some(e) => Ok((e.omega, rep.clone())),
        None => Err(Error::Eigen("no shift up to 2^59 brings the spectrum into the sector".into())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::Layout;
    use std::f64::consts::PI;

    #[test]
    fn dirichlet_laplacian_is_real_positive() {
        let g = Grid::unit(8).unwrap();
        let lay = Layout::new(&g);
        let mut t = Vec::new();
        for (slot, &p) in g.interior().iter().enumerate() {
            for axis in 0..2 {
                for (q, w) in crate::operators::diff::second(&g, p, axis).entries() {
                    if let Some(qs) = g.interior_slot(q) {
                        t.push((slot, qs, -w));
                    }
                }
            }
        }
        let m = CsrMatrix::from_triplets(lay.ni, lay.ni, t);
        let rep = sector_probe_matrix(&m, &[0.0], 0.05).unwrap();
        assert!(rep.entries[0].pass);
        assert!(rep.entries[0].max_arg < 1e-10);
        // compare against 4/dx^2 (sin^2(k pi dx/2) + sin^2(l pi dx/2))
        let dx = g.dx;
        let mut exact: Vec<f64> = Vec::new();
        for k in 1..7 {
            for l in 1..7 {
                let s1 = (k as f64 * PI * dx / 2.0).sin();
                let s2 = (l as f64 * PI * dx / 2.0).sin();
                exact.push(4.0 / (dx * dx) * (s1 * s1 + s2 * s2));
            }
        }
        exact.sort_by(f64::total_cmp);
        let mut got: Vec<f64> = rep.spectrum.iter().map(|z| z.0).collect();
        got.sort_by(f64::total_cmp);
        for (a, b) in got.iter().zip(&exact) {
            assert!((a - b).abs() < 1e-9 * b);
        }
    }

    #[test]
    fn large_shift_dominates() {
        let g = Grid::unit(6).unwrap();
        let p = RheologyParams { delta: 0.25, ..RheologyParams::default() };
        let u1 = StateField::from_fn(&g, |x| ([0.2 * x[1], -0.1 * x[0]], 1.0 + x[0], 0.5 + 0.2 * x[1]));
        let op = assemble_operator_matrix(&g, &u1, &p, 0.0).unwrap();
        let a0 = op.unshifted();
        let gersh = a0.norm_inf();
        let rep = sector_probe_matrix(&a0, &[10.0 * gersh.max(a0.max_abs())], 0.05).unwrap();
        assert!(rep.entries[0].min_re > 0.0);
    }
}
