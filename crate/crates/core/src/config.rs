//! TOML scenario files.
//!
//! ```toml
//! threshold = 0.05
//! seed = 7                      # optional, drives randomized checks
//!
//! [mesh]
//! dimension = 1
//! cells = [64]
//! lengths = [1.0]
//!
//! [time]
//! horizon = 1.0
//! steps = 1000
//!
//! [rates]
//! sigma = 0.2
//! phi_e = 0.1
//! phi_r = 0.4
//! gamma = 0.1                   # or one value per step
//!
//! [kappa]                       # lo/hi default to the extreme values given
//! s = 0.01
//! e = { file = "kappa_e.csv" }  # single-column snapshot file, relative to this file
//! i = 0.01
//! r = 0.01
//!
//! [initial]
//! s = 0.9
//! e = { base = 0.0, amplitude = 0.1, center = [0.5], width = 0.1 }
//! i = 0.0
//! r = 0.0
//!
//! [control]
//! u_i_max = 1.0
//! u_e_max = 0.5
//! initial_guess = "half"        # "half" | "zero" | "max"
//! ```
//!
//! Optional tables: `[solver]` (`kind = "direct"` or `"conjugate_gradient"`),
//! `[optimizer]`, `[gradcheck]`, `[convergence]`, `[output]`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, ValidationError};
use crate::io::read_field;
use crate::mesh::{Field, LinearSolver, Mesh, TimeGrid};
use crate::model::{
    validate_scenario, ControlBounds, ControlPair, DiffusionSpec, InitialData, KappaSpec, RateConstants, Scenario,
    ScenarioInput, SpaceTimeField, WaningRate,
};
use crate::optimizer::OptimizerOptions;

/// A cell field given as a constant, a snapshot file, or a Gaussian bump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FieldSource {
    Scalar(f64),
    File {
        file: PathBuf,
    },
    /// `base + amplitude * exp(-|x - center|^2 / (2 width^2))`
    Bump {
        #[serde(default)]
        base: f64,
        amplitude: f64,
        center: Vec<f64>,
        width: f64,
    },
}

impl FieldSource {
    fn scalar(&self) -> Option<f64> {
        match self {
            FieldSource::Scalar(v) => Some(*v),
            _ => None,
        }
    }

    fn resolve(&self, key: &str, mesh: &Mesh, base_dir: &Path) -> Result<Field> {
        match self {
            FieldSource::Scalar(v) => Ok(Field::constant(mesh, *v)),
            FieldSource::File { file } => read_field(&base_dir.join(file), mesh)
                .map_err(|e| Error::Config(format!("{key}: {e}"))),
            FieldSource::Bump {
                base,
                amplitude,
                center,
                width,
            } => {
                if center.len() != mesh.dimension() {
                    return Err(Error::Config(format!(
                        "{key}.center has {} coordinates for a {}D mesh",
                        center.len(),
                        mesh.dimension()
                    )));
                }
                if !(*width > 0.0) {
                    return Err(Error::Config(format!("{key}.width must be positive")));
                }
                Ok(Field::from_fn(mesh, |x| {
                    let d2: f64 = center.iter().enumerate().map(|(k, c)| (x[k] - c).powi(2)).sum();
                    base + amplitude * (-d2 / (2.0 * width * width)).exp()
                }))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GammaSource {
    Constant(f64),
    PerStep(Vec<f64>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialGuess {
    #[default]
    Half,
    Zero,
    Max,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshBlock {
    pub dimension: usize,
    pub cells: Vec<usize>,
    pub lengths: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeBlock {
    pub horizon: f64,
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RatesBlock {
    pub sigma: f64,
    pub phi_e: f64,
    pub phi_r: f64,
    #[serde(default = "zero_gamma")]
    pub gamma: GammaSource,
}

fn zero_gamma() -> GammaSource {
    GammaSource::Constant(0.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KappaBlock {
    pub lo: Option<f64>,
    pub hi: Option<f64>,
    pub s: FieldSource,
    pub e: FieldSource,
    pub i: FieldSource,
    pub r: FieldSource,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialBlock {
    pub s: FieldSource,
    pub e: FieldSource,
    pub i: FieldSource,
    pub r: FieldSource,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlBlock {
    pub u_i_max: FieldSource,
    pub u_e_max: FieldSource,
    #[serde(default)]
    pub initial_guess: InitialGuess,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GradcheckBlock {
    /// Step sizes for the linearisation remainder table.
    pub epsilons: Vec<f64>,
    /// Central-difference step for the gradient check.
    pub fd_epsilon: f64,
    /// Number of random directions.
    pub directions: usize,
}

impl Default for GradcheckBlock {
    fn default() -> Self {
        Self {
            epsilons: vec![1e-1, 1e-2, 1e-3, 1e-4],
            fd_epsilon: 1e-5,
            directions: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConvergenceBlock {
    /// Delay values; `T/4, T/8, T/16, T/32` when empty.
    pub tau: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputBlock {
    pub dir: PathBuf,
    /// Write full state snapshots at the initial and final level.
    pub snapshots: bool,
}

impl Default for OutputBlock {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            snapshots: false,
        }
    }
}

/// The file as written, after defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub threshold: f64,
    #[serde(default)]
    pub seed: u64,
    pub mesh: MeshBlock,
    pub time: TimeBlock,
    pub rates: RatesBlock,
    pub kappa: KappaBlock,
    pub initial: InitialBlock,
    pub control: ControlBlock,
    #[serde(default)]
    pub solver: LinearSolver,
    #[serde(default)]
    pub optimizer: OptimizerOptions,
    #[serde(default)]
    pub gradcheck: GradcheckBlock,
    #[serde(default)]
    pub convergence: ConvergenceBlock,
    #[serde(default)]
    pub output: OutputBlock,
}

/// A parsed and validated scenario file.
#[derive(Debug, Clone)]
pub struct ScenarioConfig {
    pub raw: RawConfig,
    pub scenario: Scenario,
    /// Directory that relative file paths resolve against.
    pub base_dir: PathBuf,
}

pub fn parse_config(path: &Path) -> Result<ScenarioConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    parse_config_str(&text, &base)
}

pub fn parse_config_str(text: &str, base_dir: &Path) -> Result<ScenarioConfig> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    let scenario = build_scenario(&raw, base_dir, None)?;
    Ok(ScenarioConfig {
        raw,
        scenario,
        base_dir: base_dir.to_path_buf(),
    })
}

impl ScenarioConfig {
    /// Rebuild with `steps = T / dt`; `dt` must divide `T`.
    pub fn with_dt(&self, dt: f64) -> Result<ScenarioConfig> {
        let horizon = self.raw.time.horizon;
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::Config(format!("--dt must be positive (got {dt})")));
        }
        let ratio = horizon / dt;
        let steps = ratio.round();
        if steps < 1.0 || (ratio - steps).abs() > 1e-9 * ratio {
            return Err(Error::Config(format!("--dt = {dt} does not divide time.horizon = {horizon}")));
        }
        let mut raw = self.raw.clone();
        raw.time.steps = steps as usize;
        let scenario = build_scenario(&raw, &self.base_dir, Some(&self.raw))?;
        Ok(ScenarioConfig {
            raw,
            scenario,
            base_dir: self.base_dir.clone(),
        })
    }

    pub fn initial_controls(&self) -> ControlPair {
        let bounds = self.scenario.bounds();
        match self.raw.control.initial_guess {
            InitialGuess::Half => bounds.midpoint(),
            InitialGuess::Zero => self.scenario.zero_controls(),
            InitialGuess::Max => bounds.upper(),
        }
    }

    /// `T/4, T/8, T/16, T/32` unless the file lists its own.
    pub fn tau_list(&self) -> Vec<f64> {
        if self.raw.convergence.tau.is_empty() {
            let t = self.raw.time.horizon;
            vec![t / 4.0, t / 8.0, t / 16.0, t / 32.0]
        } else {
            self.raw.convergence.tau.clone()
        }
    }
}

fn validation_key(err: &ValidationError) -> String {
    use ValidationError::*;
    match err {
        SigmaNotPositive(_) => "rates.sigma".into(),
        PhiENotPositive(_) => "rates.phi_e".into(),
        PhiRNotPositive(_) => "rates.phi_r".into(),
        WaningNegative { .. } | WaningLength { .. } => "rates.gamma".into(),
        WaningStepRestriction { .. } => "time.steps".into(),
        KappaBounds { .. } => "kappa.lo".into(),
        KappaOutOfBounds { name, .. } => format!("kappa.{}", name.trim_start_matches("kappa_")),
        InitialNegative { compartment, .. } => format!("initial.{compartment}"),
        ControlBoundNegative { name, .. } | ControlOutOfBounds { name, .. } => format!("control.{name}"),
        ThresholdNotPositive(_) => "threshold".into(),
        Shape { what, .. } => what.clone(),
    }
}

fn build_scenario(raw: &RawConfig, base_dir: &Path, original: Option<&RawConfig>) -> Result<Scenario> {
    let m = &raw.mesh;
    let mesh = Mesh::new(m.dimension, &m.cells, &m.lengths).map_err(|e| Error::Config(format!("mesh: {e}")))?;
    let time = TimeGrid::new(raw.time.horizon, raw.time.steps).map_err(|e| Error::Config(format!("time: {e}")))?;
    let steps = raw.time.steps;

    let waning = match &raw.rates.gamma {
        GammaSource::Constant(g) => WaningRate::constant(*g, steps),
        GammaSource::PerStep(v) => {
            if original.is_some() {
                return Err(Error::Config(
                    "rates.gamma: a per-step list cannot be combined with a dt override".into(),
                ));
            }
            WaningRate::per_step(v.clone())
        }
    };

    let kb = &raw.kappa;
    let mut kappa = Vec::with_capacity(4);
    for (name, src) in [("s", &kb.s), ("e", &kb.e), ("i", &kb.i), ("r", &kb.r)] {
        kappa.push(match src.scalar() {
            Some(k) => KappaSpec::Constant(k),
            None => KappaSpec::Cellwise(src.resolve(&format!("kappa.{name}"), &mesh, base_dir)?),
        });
    }
    let extremes = kappa.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), k| match k {
        KappaSpec::Constant(v) => (lo.min(*v), hi.max(*v)),
        KappaSpec::Cellwise(f) => (lo.min(f.min()), hi.max(f.max())),
        KappaSpec::SpaceTime(_) => (lo, hi),
    });
    let kappa: [KappaSpec; 4] = kappa.try_into().expect("four compartments");
    let diffusion = DiffusionSpec {
        kappa,
        kappa_lo: kb.lo.unwrap_or(extremes.0),
        kappa_hi: kb.hi.unwrap_or(extremes.1),
    };

    let ib = &raw.initial;
    let initial = InitialData {
        s: ib.s.resolve("initial.s", &mesh, base_dir)?,
        e: ib.e.resolve("initial.e", &mesh, base_dir)?,
        i: ib.i.resolve("initial.i", &mesh, base_dir)?,
        r: ib.r.resolve("initial.r", &mesh, base_dir)?,
    };

    let u_i_max = raw.control.u_i_max.resolve("control.u_i_max", &mesh, base_dir)?;
    let u_e_max = raw.control.u_e_max.resolve("control.u_e_max", &mesh, base_dir)?;
    let bounds = ControlBounds {
        u_i_max: SpaceTimeField::from_field(&u_i_max, steps),
        u_e_max: SpaceTimeField::from_field(&u_e_max, steps),
    };

    validate_scenario(ScenarioInput {
        mesh,
        time,
        rates: RateConstants {
            sigma: raw.rates.sigma,
            phi_e: raw.rates.phi_e,
            phi_r: raw.rates.phi_r,
        },
        waning,
        diffusion,
        initial,
        bounds,
        threshold: raw.threshold,
        solver: raw.solver,
    })
    .map_err(|e| match e {
        Error::Validation(source) => Error::InvalidKey {
            key: validation_key(&source),
            source,
        },
        other => other,
    })
}
