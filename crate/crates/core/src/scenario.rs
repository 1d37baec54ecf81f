//! Built-in initial data and forcing.

use std::f64::consts::PI;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{ForcingFields, Grid, RheologyParams, StateField, VectorSource};
use crate::thermo::GrowthRate;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioKind {
    /// Smooth drift, ridge in thickness, wind, current, tilt and melt.
    Smooth,
    /// The smooth fields with a velocity large enough to fold the flow map.
    Adversarial,
    /// Resting ice of uniform thickness and concentration.
    Constant,
}

impl ScenarioKind {
    pub fn name(&self) -> &'static str {
        match self {
            ScenarioKind::Smooth => "smooth",
            ScenarioKind::Adversarial => "adversarial",
            ScenarioKind::Constant => "constant",
        }
    }
}

impl FromStr for ScenarioKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "smooth" => Ok(ScenarioKind::Smooth),
            "adversarial" => Ok(ScenarioKind::Adversarial),
            "constant" => Ok(ScenarioKind::Constant),
            _ => Err(Error::Param(format!("unknown scenario `{s}` (smooth, adversarial, constant)"))),
        }
    }
}

/// Velocity amplitude of the adversarial scenario.
pub const ADVERSARIAL_SPEED: f64 = 2000.0;

/// Parameters of the built-in scenarios.
pub fn default_params() -> RheologyParams {
    RheologyParams {
        c_cor: 1.0,
        g: 1.0,
        rho_atm: 1.0,
        c_atm: 0.05,
        rho_ocn: 1.0,
        c_ocn: 1.0,
        theta_ocn: 25f64.to_radians(),
        ..RheologyParams::default()
    }
}

fn smooth_velocity(x: [f64; 2]) -> [f64; 2] {
    let b = (PI * x[0]).sin() * (PI * x[1]).sin();
    [0.5 * b, -0.25 * b]
}

/// Smooth initial data on the unit square; `h >= 0.75` and
/// `a in [0.35, 0.65]`.
pub fn smooth_state(grid: &Grid) -> StateField {
    StateField::from_fn(grid, |x| {
        let h = 1.0 + 0.25 * (PI * x[0]).cos() * (PI * x[1]).cos();
        let a = 0.5 + 0.15 * (PI * x[0]).sin() * (PI * x[1]).cos();
        (smooth_velocity(x), h, a)
    })
}

pub fn adversarial_state(grid: &Grid) -> StateField {
    let mut u = smooth_state(grid);
    for v in u.v.iter_mut() {
        v[0] *= ADVERSARIAL_SPEED;
        v[1] *= ADVERSARIAL_SPEED;
    }
    u
}

pub fn constant_state(grid: &Grid) -> StateField {
    StateField::constant(grid, [0.0, 0.0], 1.0, 0.5)
}

/// Smooth perturbation profile used by the dependence experiment.
pub fn perturbation_profile(grid: &Grid) -> StateField {
    StateField::from_fn(grid, |x| {
        let b = (PI * x[0]).sin() * (PI * x[1]).sin();
        ([b, -0.5 * b], 0.5 * (PI * x[0]).cos() * (PI * x[1]).cos(), 0.25 * b)
    })
}

pub fn smooth_forcing() -> ForcingFields {
    ForcingFields {
        v_atm: VectorSource::Constant([1.0, 0.5]),
        v_ocn: VectorSource::Constant([0.1, -0.05]),
        grad_h: VectorSource::Constant([0.01, 0.0]),
        growth: GrowthRate::Tanh { g0: -0.05 },
    }
}

/// A spatially varying wind, composed with the flow map by the solver.
pub fn swirling_wind(amplitude: f64) -> VectorSource {
    VectorSource::Analytic(Arc::new(move |_t, x| {
        [amplitude * (PI * x[1]).sin(), -amplitude * (PI * x[0]).sin()]
    }))
}

pub fn initial_state(kind: ScenarioKind, grid: &Grid) -> StateField {
    match kind {
        ScenarioKind::Smooth => smooth_state(grid),
        ScenarioKind::Adversarial => adversarial_state(grid),
        ScenarioKind::Constant => constant_state(grid),
    }
}

pub fn forcing(kind: ScenarioKind) -> ForcingFields {
    match kind {
        ScenarioKind::Smooth | ScenarioKind::Adversarial => smooth_forcing(),
        ScenarioKind::Constant => ForcingFields::none(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::validate_state;

    #[test]
    fn built_in_data_is_admissible() {
        let g = Grid::unit(17).unwrap();
        let p = default_params();
        for kind in [ScenarioKind::Smooth, ScenarioKind::Adversarial, ScenarioKind::Constant] {
            let u = initial_state(kind, &g);
            let r = validate_state(&u, &p).unwrap();
            assert!(r.in_v, "{}", kind.name());
            assert!(r.min_h >= 2.0 * p.kappa);
            assert!(r.min_a >= 0.3 && r.max_a <= 0.7);
        }
    }

    #[test]
    fn names_round_trip() {
        for kind in [ScenarioKind::Smooth, ScenarioKind::Adversarial, ScenarioKind::Constant] {
            assert_eq!(kind.name().parse::<ScenarioKind>().unwrap(), kind);
        }
        assert!("storm".parse::<ScenarioKind>().is_err());
    }
}
