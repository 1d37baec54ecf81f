//! Run configuration read from TOML.
//!
//! Only `scenario` is required. Unknown keys are rejected, and every
//! constraint violation is collected before reporting so one pass over the
//! file shows all problems.
//!
//! ```toml
//! scenario = "smooth"
//! seed = 42
//!
//! [grid]
//! nx = 32
//! ny = 32
//!
//! [params]        # overlays the scenario defaults
//! c_bullet = 20.0
//!
//! [solver]
//! T = 0.05
//! dt = 2.5e-3
//!
//! [norms]
//! p = 8.0
//! q = 8.0
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::analysis::norms::NormSuite;
use crate::error::{Error, Result};
use crate::eulerian::Switches;
use crate::fields::{ForcingFields, Grid, RheologyParams, VectorSource};
use crate::nonlinear::PicardConfig;
use crate::scenario::{self, ScenarioKind};
use crate::thermo::GrowthRate;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    pub nx: usize,
    pub ny: usize,
    pub lx: f64,
    pub ly: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { nx: 32, ny: 32, lx: 1.0, ly: 1.0 }
    }
}

/// Overrides of the scenario forcing; absent entries keep the scenario's.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForcingSpec {
    pub v_atm: Option<[f64; 2]>,
    /// Amplitude of a rotating wind that replaces `v_atm`.
    pub wind_swirl: Option<f64>,
    pub v_ocn: Option<[f64; 2]>,
    pub grad_h: Option<[f64; 2]>,
    pub growth: Option<GrowthRate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSpec {
    pub dir: Option<PathBuf>,
    /// Write a snapshot every this many stored time nodes.
    pub snapshot_stride: usize,
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self { dir: None, snapshot_stride: 10 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeSpec {
    /// Random strains for the identity sweep.
    pub identity_samples: usize,
    /// Admissible states for the symbol sweep.
    pub samples: usize,
    pub directions: usize,
}

impl Default for ProbeSpec {
    fn default() -> Self {
        Self { identity_samples: 100_000, samples: 10_000, directions: 64 }
    }
}

/// Parameter ladders of the study subcommands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudySpec {
    pub contraction_horizons: Vec<f64>,
    pub reference_horizons: Vec<f64>,
    pub depend_sizes: Vec<f64>,
    #[serde(rename = "cross_T")]
    pub cross_t: f64,
    pub cross_grids: Vec<usize>,
    pub cross_dts: Vec<f64>,
}

impl Default for StudySpec {
    fn default() -> Self {
        Self {
            contraction_horizons: vec![0.2, 0.1, 0.05],
            reference_horizons: vec![0.4, 0.2, 0.1],
            depend_sizes: vec![1e-2, 5e-3, 2.5e-3],
            cross_t: 0.1,
            cross_grids: vec![16, 32, 64],
            cross_dts: vec![4e-3, 2e-3, 1e-3],
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    scenario: ScenarioKind,
    #[serde(default = "default_seed")]
    seed: u64,
    #[serde(default)]
    grid: GridSpec,
    #[serde(default)]
    params: toml::Table,
    #[serde(default)]
    forcing: ForcingSpec,
    #[serde(default)]
    solver: PicardConfig,
    #[serde(default)]
    norms: NormSuite,
    #[serde(default)]
    output: OutputSpec,
    #[serde(default)]
    eulerian: Switches,
    #[serde(default)]
    probe: ProbeSpec,
    #[serde(default)]
    study: StudySpec,
}

fn default_seed() -> u64 {
    42
}

/// A validated run configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub scenario: ScenarioKind,
    pub seed: u64,
    pub grid: GridSpec,
    pub params: RheologyParams,
    pub forcing: ForcingSpec,
    pub solver: PicardConfig,
    pub norms: NormSuite,
    pub output: OutputSpec,
    pub eulerian: Switches,
    pub probe: ProbeSpec,
    pub study: StudySpec,
    /// Source text, kept for hashing.
    pub source: String,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| Error::Config(vec![e.to_string()]))?;
        let mut merged = toml::Table::try_from(scenario::default_params())
            .map_err(|e| Error::Config(vec![e.to_string()]))?;
        for (k, v) in raw.params {
            merged.insert(k, v);
        }
        let params: RheologyParams = toml::Value::Table(merged)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(vec![format!("[params] {e}")]))?;
        let cfg = RunConfig {
            scenario: raw.scenario,
            seed: raw.seed,
            grid: raw.grid,
            params,
            forcing: raw.forcing,
            solver: raw.solver,
            norms: raw.norms,
            output: raw.output,
            eulerian: raw.eulerian,
            probe: raw.probe,
            study: raw.study,
            source: text.to_string(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let g = &self.grid;
        if g.nx < 4 || g.ny < 4 {
            out.push(format!("grid.nx = {}, grid.ny = {} violates \"at least 4 nodes per side\"", g.nx, g.ny));
        }
        if !(g.lx > 0.0 && g.ly > 0.0) {
            out.push(format!("grid.lx = {}, grid.ly = {} violates \"lengths > 0\"", g.lx, g.ly));
        }
        out.extend(self.params.violations().into_iter().map(|m| format!("params: {m}")));
        out.extend(self.norms.violations());
        out.extend(self.solver.violations());
        if let Some(gr) = &self.forcing.growth {
            out.extend(gr.violations());
        }
        if self.output.snapshot_stride == 0 {
            out.push("output.snapshot_stride violates \"stride >= 1\"".into());
        }
        if self.probe.samples == 0 || self.probe.directions == 0 || self.probe.identity_samples == 0 {
            out.push("probe sample and direction counts must be positive".into());
        }
        let s = &self.study;
        for (name, ladder) in [
            ("study.contraction_horizons", &s.contraction_horizons),
            ("study.reference_horizons", &s.reference_horizons),
            ("study.depend_sizes", &s.depend_sizes),
            ("study.cross_dts", &s.cross_dts),
        ] {
            if ladder.is_empty() || ladder.iter().any(|x| !(*x > 0.0)) {
                out.push(format!("{name} must be a non-empty list of positive numbers"));
            }
        }
        if !(s.cross_t > 0.0) {
            out.push(format!("study.cross_T = {} violates \"T > 0\"", s.cross_t));
        }
        if s.cross_grids.len() != s.cross_dts.len() || s.cross_grids.iter().any(|&n| n < 4) {
            out.push("study.cross_grids and study.cross_dts must pair up, with at least 4 nodes".into());
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

    /// Applies command-line overrides and validates again.
    pub fn with_overrides(mut self, t_end: Option<f64>, dt: Option<f64>, n: Option<usize>) -> Result<Self> {
        if let Some(t) = t_end {
            self.solver.t_end = t;
        }
        if let Some(dt) = dt {
            self.solver.dt = dt;
        }
        if let Some(n) = n {
            self.grid.nx = n;
            self.grid.ny = n;
        }
        self.validate()?;
        Ok(self)
    }

    pub fn build_grid(&self) -> Result<Grid> {
        Grid::new(self.grid.nx, self.grid.ny, self.grid.lx, self.grid.ly)
    }

    pub fn build_forcing(&self) -> ForcingFields {
        let mut f = scenario::forcing(self.scenario);
        let spec = &self.forcing;
        if let Some(v) = spec.v_atm {
            f.v_atm = VectorSource::Constant(v);
        }
        if let Some(amp) = spec.wind_swirl {
            f.v_atm = scenario::swirling_wind(amp);
        }
        if let Some(v) = spec.v_ocn {
            f.v_ocn = VectorSource::Constant(v);
        }
        if let Some(v) = spec.grad_h {
            f.grad_h = VectorSource::Constant(v);
        }
        if let Some(g) = &spec.growth {
            f.growth = g.clone();
        }
        f
    }

    /// Hash of the source text together with the effective overrides.
    pub fn hash(&self) -> String {
        let eff = format!(
            "T={} dt={} nx={} ny={} seed={}",
            self.solver.t_end, self.solver.dt, self.grid.nx, self.grid.ny, self.seed
        );
        crate::io::config_hash(&[self.source.as_bytes(), eff.as_bytes()])
    }
}

pub fn parse_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)?;
    RunConfig::from_toml_str(&text)
}
