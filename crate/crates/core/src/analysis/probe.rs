//! Seeded random sweeps over strains and admissible states.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::fields::RheologyParams;
use crate::rheology::{
    coeff_tensor, delta_reg, delta_sq, ice_strength, quadratic_form, stress_sigma_s_form, stress_sigma_with_strength,
    sym_eigenvalues, symbol_matrix, Strain,
};

/// Smallest strength accepted by the symbol sweep.
pub const MIN_STRENGTH: f64 = 1e-6;

/// A strain with log-uniform magnitude in `[1e-4, 1e2]`.
pub fn random_strain<R: Rng>(rng: &mut R) -> Strain {
    let mag = 10f64.powf(rng.random_range(-4.0..2.0));
    let mut c = || mag * rng.random_range(-1.0..1.0);
    Strain::new(c(), c(), c())
}

/// `(h, a)` with `h in [kappa, 5]`, `a in (0, 1)` and `P >= MIN_STRENGTH`.
pub fn random_admissible<R: Rng>(rng: &mut R, params: &RheologyParams) -> (f64, f64) {
    loop {
        let h = rng.random_range(params.kappa..5.0);
        let a = rng.random_range(1e-3..1.0 - 1e-3);
        if ice_strength(h, a, params) >= MIN_STRENGTH {
            return (h, a);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IdentityReport {
    pub samples: usize,
    /// Largest relative gap between the two forms of `Delta^2`.
    pub max_rel_quadratic: f64,
    /// Largest relative gap between the two stress formulas.
    pub max_rel_sigma: f64,
    /// `min (Delta_delta - sqrt(delta))`; never negative.
    pub min_floor_margin: f64,
}

fn rel(a: f64, b: f64) -> f64 {
    let s = a.abs().max(b.abs());
    if s == 0.0 {
        0.0
    } else {
        (a - b).abs() / s
    }
}

pub fn identity_sweep(params: &RheologyParams, samples: usize, seed: u64) -> IdentityReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out =
        IdentityReport { samples, max_rel_quadratic: 0.0, max_rel_sigma: 0.0, min_floor_margin: f64::INFINITY };
    for _ in 0..samples {
        let eps = random_strain(&mut rng);
        let (h, a) = random_admissible(&mut rng, params);
        out.max_rel_quadratic = out.max_rel_quadratic.max(rel(delta_sq(&eps, params.e), quadratic_form(&eps, params.e)));
        let p = ice_strength(h, a, params);
        let s1 = stress_sigma_with_strength(&eps, p, params);
        let s2 = stress_sigma_s_form(&eps, p, params);
        let scale = s1.iter().flatten().fold(0.0f64, |m, x| m.max(x.abs()));
        for i in 0..2 {
            for j in 0..2 {
                let d = (s1[i][j] - s2[i][j]).abs() / scale.max(f64::MIN_POSITIVE);
                out.max_rel_sigma = out.max_rel_sigma.max(d);
            }
        }
        out.min_floor_margin = out.min_floor_margin.min(delta_reg(&eps, params.delta, params.e) - params.delta.sqrt());
    }
    out
}

/// One sample of the symbol sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SymbolSample {
    pub h: f64,
    pub a: f64,
    pub e11: f64,
    pub e12: f64,
    pub e22: f64,
    /// Largest eigenvalue of the symmetric part over all directions.
    pub max_eig: f64,
    pub min_eig: f64,
}

/// Eigenvalues of `sym M(xi)` on `directions` equispaced unit vectors.
pub fn symbol_sweep(
    params: &RheologyParams,
    samples: usize,
    directions: usize,
    seed: u64,
) -> crate::Result<Vec<SymbolSample>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dirs: Vec<[f64; 2]> = (0..directions)
        .map(|k| {
            let th = 2.0 * std::f64::consts::PI * k as f64 / directions as f64;
            [th.cos(), th.sin()]
        })
        .collect();
    (0..samples)
        .map(|_| {
            let eps = random_strain(&mut rng);
            let (h, a) = random_admissible(&mut rng, params);
            let c = coeff_tensor(&eps, h, a, params)?;
            let mut max_eig = f64::NEG_INFINITY;
            let mut min_eig = f64::INFINITY;
            for xi in &dirs {
                let (lo, hi) = sym_eigenvalues(&symbol_matrix(&c, *xi)?);
                max_eig = max_eig.max(hi);
                min_eig = min_eig.min(lo);
            }
            Ok(SymbolSample { h, a, e11: eps.e11, e12: eps.e12, e22: eps.e22, max_eig, min_eig })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sweeps_are_seeded() {
        let p = RheologyParams::default();
        assert_eq!(symbol_sweep(&p, 20, 8, 7).unwrap(), symbol_sweep(&p, 20, 8, 7).unwrap());
        assert_ne!(symbol_sweep(&p, 5, 8, 7).unwrap(), symbol_sweep(&p, 5, 8, 8).unwrap());
        let r = identity_sweep(&p, 200, 1);
        assert!(r.min_floor_margin >= 0.0);
    }
}
