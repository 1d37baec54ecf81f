//! Thermodynamic source terms for thickness and concentration.

use std::fmt;
use std::sync::Arc;

use serde::Deserialize;

use crate::error::{Error, Result};

/// Ice growth rate `f_gr` as a function of thickness, bounded with a bounded
/// derivative on `[0, inf)`.
#[derive(Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum GrowthRate {
    Constant { value: f64 },
    /// `g0 (1 - tanh x)`.
    Tanh { g0: f64 },
    /// Piecewise linear through `(x, y)` knots, clamped outside.
    Table { x: Vec<f64>, y: Vec<f64> },
    /// User callback with declared bounds on `|f|` and `|f'|`.
    #[serde(skip)]
    Custom { f: Arc<dyn Fn(f64) -> f64 + Send + Sync>, sup: f64, sup_deriv: f64 },
}

impl GrowthRate {
    pub fn constant(value: f64) -> Self {
        GrowthRate::Constant { value }
    }
}

impl fmt::Debug for GrowthRate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GrowthRate::Constant { value } => write!(f, "Constant({value})"),
            GrowthRate::Tanh { g0 } => write!(f, "Tanh(g0 = {g0})"),
            GrowthRate::Table { x, .. } => write!(f, "Table({} knots)", x.len()),
            GrowthRate::Custom { sup, sup_deriv, .. } => {
                write!(f, "Custom(|f| <= {sup}, |f'| <= {sup_deriv})")
            }
        }
    }
}

impl GrowthRate {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            GrowthRate::Constant { value } => *value,
            GrowthRate::Tanh { g0 } => g0 * (1.0 - x.tanh()),
            GrowthRate::Table { x: xs, y: ys } => {
                if x <= xs[0] {
                    return ys[0];
                }
                let last = xs.len() - 1;
                if x >= xs[last] {
                    return ys[last];
                }
                let k = xs.partition_point(|&s| s <= x) - 1;
                let w = (x - xs[k]) / (xs[k + 1] - xs[k]);
                ys[k] + w * (ys[k + 1] - ys[k])
            }
            GrowthRate::Custom { f, .. } => f(x),
        }
    }

    /// Bounds `(sup |f|, sup |f'|)` over `[0, inf)`.
    pub fn bounds(&self) -> (f64, f64) {
        match self {
            GrowthRate::Constant { value } => (value.abs(), 0.0),
            // 1 - tanh decreases from 1 to 0; its derivative -sech^2 peaks at 0
            GrowthRate::Tanh { g0 } => (g0.abs(), g0.abs()),
            GrowthRate::Table { x, y } => {
                let sup = y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                let slope = x
                    .windows(2)
                    .zip(y.windows(2))
                    .fold(0.0f64, |m, (xw, yw)| m.max(((yw[1] - yw[0]) / (xw[1] - xw[0])).abs()));
                (sup, slope)
            }
            GrowthRate::Custom { sup, sup_deriv, .. } => (*sup, *sup_deriv),
        }
    }

    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        match self {
            GrowthRate::Table { x, y } => {
                if x.is_empty() || x.len() != y.len() {
                    out.push("growth.table needs equally many x and y knots, at least one".into());
                } else if x.windows(2).any(|w| !(w[1] > w[0])) {
                    out.push("growth.table x knots must be strictly increasing".into());
                }
            }
            _ => {}
        }
        if out.is_empty() {
            let (s, d) = self.bounds();
            if !s.is_finite() || !d.is_finite() {
                out.push("growth rate must be bounded with a bounded derivative".into());
            }
        }
        out
    }
}

/// Thickness source `S_h = f(h/a) a + (1 - a) f(0)`.
pub fn source_h(h: f64, a: f64, f: &GrowthRate) -> Result<f64> {
    if !(a > 0.0) {
        return Err(Error::Domain(format!("thickness source needs a > 0, got a = {a}")));
    }
    Ok(f.eval(h / a) * a + (1.0 - a) * f.eval(0.0))
}

/// Concentration source. Open water freezing over contributes
/// `(f(0)/kappa)(1 - a)` when `f(0) > 0`; melting contributes `(a/(2h)) S_h`
/// when `S_h < 0`. The two borderline cases contribute nothing.
pub fn source_a(h: f64, a: f64, f: &GrowthRate, kappa: f64) -> Result<f64> {
    let sh = source_h(h, a, f)?;
    let f0 = f.eval(0.0);
    let mut s = 0.0;
    if f0 > 0.0 {
        s += f0 / kappa * (1.0 - a);
    }
    if sh < 0.0 {
        s += a / (2.0 * h) * sh;
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    const KAPPA: f64 = 1e-3;

    #[test]
    fn constant_growth_collapses() {
        let f = GrowthRate::constant(0.7);
        assert_relative_eq!(source_h(2.0, 0.3, &f).unwrap(), 0.7, epsilon = 1e-15);
        let z = GrowthRate::constant(0.0);
        assert_eq!(source_h(2.0, 0.3, &z).unwrap(), 0.0);
        assert_eq!(source_a(2.0, 0.3, &z, KAPPA).unwrap(), 0.0);
    }

    #[test]
    fn rational_growth() {
        let f = GrowthRate::Custom { f: Arc::new(|x| 1.0 / (1.0 + x)), sup: 1.0, sup_deriv: 1.0 };
        assert_relative_eq!(source_h(1.0, 0.5, &f).unwrap(), 2.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn source_a_branches() {
        let c = 0.2;
        let f = GrowthRate::constant(c);
        assert_relative_eq!(source_a(1.5, 0.4, &f, KAPPA).unwrap(), c / KAPPA * 0.6, max_relative = 1e-14);
        let f = GrowthRate::constant(-c);
        assert_relative_eq!(source_a(1.5, 0.4, &f, KAPPA).unwrap(), 0.4 / 3.0 * -c, max_relative = 1e-14);
    }

    #[test]
    fn source_h_rejects_empty_cell() {
        let f = GrowthRate::constant(1.0);
        assert!(matches!(source_h(1.0, 0.0, &f), Err(Error::Domain(_))));
        assert!(source_a(1.0, -0.1, &f, KAPPA).is_err());
    }

    #[test]
    fn tanh_and_table_eval() {
        let f = GrowthRate::Tanh { g0: -0.05 };
        assert_relative_eq!(f.eval(0.0), -0.05);
        assert_eq!(f.bounds(), (0.05, 0.05));
        let t = GrowthRate::Table { x: vec![0.0, 1.0, 3.0], y: vec![1.0, 0.0, -1.0] };
        assert_relative_eq!(t.eval(0.5), 0.5);
        assert_relative_eq!(t.eval(2.0), -0.5);
        assert_eq!(t.eval(10.0), -1.0);
        assert_eq!(t.bounds(), (1.0, 1.0));
        let bad = GrowthRate::Table { x: vec![0.0, 0.0], y: vec![1.0, 2.0] };
        assert!(!bad.violations().is_empty());
    }
}
