//! Model parameters, the validated scenario, and the compartment transfer terms.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Result, ValidationError};
use crate::mesh::{DiffusionOperator, Field, LinearSolver, Mesh, TimeGrid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Compartment {
    S,
    E,
    I,
    R,
}

impl Compartment {
    pub const ALL: [Compartment; 4] = [Compartment::S, Compartment::E, Compartment::I, Compartment::R];

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Compartment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Compartment::S => "s",
            Compartment::E => "e",
            Compartment::I => "i",
            Compartment::R => "r",
        })
    }
}

/// Incubation and recovery rates (1/time).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateConstants {
    pub sigma: f64,
    pub phi_e: f64,
    pub phi_r: f64,
}

impl RateConstants {
    pub fn validate(&self) -> Result<(), ValidationError> {
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(ValidationError::SigmaNotPositive(self.sigma));
        }
        if !(self.phi_e > 0.0 && self.phi_e.is_finite()) {
            return Err(ValidationError::PhiENotPositive(self.phi_e));
        }
        if !(self.phi_r > 0.0 && self.phi_r.is_finite()) {
            return Err(ValidationError::PhiRNotPositive(self.phi_r));
        }
        Ok(())
    }
}

/// Loss-of-immunity rate, piecewise constant in time (one value per step).
#[derive(Debug, Clone, PartialEq)]
pub struct WaningRate(Vec<f64>);

impl WaningRate {
    pub fn constant(value: f64, steps: usize) -> Self {
        Self(vec![value; steps])
    }

    pub fn per_step(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn at(&self, step: usize) -> f64 {
        self.0[step]
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn max(&self) -> f64 {
        self.0.iter().copied().fold(0.0, f64::max)
    }
}

/// Diffusion coefficient of one compartment.
#[derive(Debug, Clone, PartialEq)]
pub enum KappaSpec {
    Constant(f64),
    Cellwise(Field),
    /// One field per time step.
    SpaceTime(Vec<Field>),
}

impl KappaSpec {
    fn is_time_dependent(&self) -> bool {
        matches!(self, KappaSpec::SpaceTime(_))
    }

    fn values_at(&self, mesh: &Mesh, step: usize) -> Vec<f64> {
        match self {
            KappaSpec::Constant(k) => vec![*k; mesh.num_cells()],
            KappaSpec::Cellwise(f) => f.to_vec(),
            KappaSpec::SpaceTime(fs) => fs[step].to_vec(),
        }
    }

    fn check(&self, name: &str, mesh: &Mesh, steps: usize, lo: f64, hi: f64) -> Result<(), ValidationError> {
        let fields: Vec<&[f64]> = match self {
            KappaSpec::Constant(k) => {
                return if *k >= lo && *k <= hi {
                    Ok(())
                } else {
                    Err(ValidationError::KappaOutOfBounds {
                        name: name.into(),
                        value: *k,
                        lo,
                        hi,
                    })
                };
            }
            KappaSpec::Cellwise(f) => vec![f],
            KappaSpec::SpaceTime(fs) => {
                if fs.len() != steps {
                    return Err(ValidationError::Shape {
                        what: format!("{name} time levels"),
                        expected: steps,
                        got: fs.len(),
                    });
                }
                fs.iter().map(|f| &f[..]).collect()
            }
        };
        for f in fields {
            if f.len() != mesh.num_cells() {
                return Err(ValidationError::Shape {
                    what: name.into(),
                    expected: mesh.num_cells(),
                    got: f.len(),
                });
            }
            if let Some(&k) = f.iter().find(|&&k| !(k >= lo && k <= hi)) {
                return Err(ValidationError::KappaOutOfBounds {
                    name: name.into(),
                    value: k,
                    lo,
                    hi,
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionSpec {
    /// Coefficients in the order s, e, i, r.
    pub kappa: [KappaSpec; 4],
    pub kappa_lo: f64,
    pub kappa_hi: f64,
}

impl DiffusionSpec {
    pub fn uniform(kappa: f64) -> Self {
        Self {
            kappa: std::array::from_fn(|_| KappaSpec::Constant(kappa)),
            kappa_lo: kappa,
            kappa_hi: kappa,
        }
    }
}

/// The four diffusion operators, either shared by every step or one set per step.
#[derive(Debug, Clone)]
pub enum OperatorSet {
    Constant(Box<[DiffusionOperator; 4]>),
    PerStep(Vec<[DiffusionOperator; 4]>),
}

impl OperatorSet {
    pub fn at(&self, step: usize) -> &[DiffusionOperator; 4] {
        match self {
            OperatorSet::Constant(ops) => ops,
            OperatorSet::PerStep(ops) => &ops[step],
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, OperatorSet::Constant(_))
    }
}

/// Initial densities of the four compartments.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialData {
    pub s: Field,
    pub e: Field,
    pub i: Field,
    pub r: Field,
}

impl InitialData {
    pub fn uniform(mesh: &Mesh, s: f64, e: f64, i: f64, r: f64) -> Self {
        Self {
            s: Field::constant(mesh, s),
            e: Field::constant(mesh, e),
            i: Field::constant(mesh, i),
            r: Field::constant(mesh, r),
        }
    }

    pub fn fields(&self) -> [&Field; 4] {
        [&self.s, &self.e, &self.i, &self.r]
    }
}

/// Cells x steps array; step-major storage.
#[derive(Debug, Clone, PartialEq)]
pub struct SpaceTimeField {
    cells: usize,
    steps: usize,
    data: Vec<f64>,
}

impl SpaceTimeField {
    pub fn constant(cells: usize, steps: usize, value: f64) -> Self {
        Self {
            cells,
            steps,
            data: vec![value; cells * steps],
        }
    }

    pub fn zeros(cells: usize, steps: usize) -> Self {
        Self::constant(cells, steps, 0.0)
    }

    pub fn from_vec(cells: usize, steps: usize, data: Vec<f64>) -> Result<Self, ValidationError> {
        if data.len() != cells * steps {
            return Err(ValidationError::Shape {
                what: "space-time field".into(),
                expected: cells * steps,
                got: data.len(),
            });
        }
        Ok(Self { cells, steps, data })
    }

    /// Repeat one spatial field at every step.
    pub fn from_field(field: &[f64], steps: usize) -> Self {
        let mut data = Vec::with_capacity(field.len() * steps);
        for _ in 0..steps {
            data.extend_from_slice(field);
        }
        Self {
            cells: field.len(),
            steps,
            data,
        }
    }

    pub fn cells(&self) -> usize {
        self.cells
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn at(&self, step: usize) -> &[f64] {
        &self.data[step * self.cells..(step + 1) * self.cells]
    }

    pub fn at_mut(&mut self, step: usize) -> &mut [f64] {
        &mut self.data[step * self.cells..(step + 1) * self.cells]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.cells == other.cells && self.steps == other.steps
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            cells: self.cells,
            steps: self.steps,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Self {
        debug_assert!(self.same_shape(other));
        Self {
            cells: self.cells,
            steps: self.steps,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Transmission-rate controls `(u_i, u_e)` on the cells x steps grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlPair {
    pub u_i: SpaceTimeField,
    pub u_e: SpaceTimeField,
}

impl ControlPair {
    pub fn zeros(cells: usize, steps: usize) -> Self {
        Self {
            u_i: SpaceTimeField::zeros(cells, steps),
            u_e: SpaceTimeField::zeros(cells, steps),
        }
    }

    pub fn constant(cells: usize, steps: usize, u_i: f64, u_e: f64) -> Self {
        Self {
            u_i: SpaceTimeField::constant(cells, steps, u_i),
            u_e: SpaceTimeField::constant(cells, steps, u_e),
        }
    }

    pub fn components(&self) -> [&SpaceTimeField; 2] {
        [&self.u_i, &self.u_e]
    }

    /// `self + eps * direction`, componentwise.
    pub fn offset(&self, direction: &ControlPair, eps: f64) -> Self {
        Self {
            u_i: self.u_i.zip_map(&direction.u_i, |a, b| a + eps * b),
            u_e: self.u_e.zip_map(&direction.u_e, |a, b| a + eps * b),
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            u_i: self.u_i.map(|v| v * factor),
            u_e: self.u_e.map(|v| v * factor),
        }
    }
}

/// Box bounds `0 <= u <= u_max` of the admissible set.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlBounds {
    pub u_i_max: SpaceTimeField,
    pub u_e_max: SpaceTimeField,
}

impl ControlBounds {
    pub fn constant(cells: usize, steps: usize, u_i_max: f64, u_e_max: f64) -> Self {
        Self {
            u_i_max: SpaceTimeField::constant(cells, steps, u_i_max),
            u_e_max: SpaceTimeField::constant(cells, steps, u_e_max),
        }
    }

    /// Global bound `M` on both controls.
    pub fn global_max(&self) -> f64 {
        self.u_i_max.max().max(self.u_e_max.max())
    }

    pub fn upper(&self) -> ControlPair {
        ControlPair {
            u_i: self.u_i_max.clone(),
            u_e: self.u_e_max.clone(),
        }
    }

    pub fn midpoint(&self) -> ControlPair {
        self.upper().scaled(0.5)
    }

    pub fn contains(&self, controls: &ControlPair) -> bool {
        self.check(controls).is_ok()
    }

    pub fn check(&self, controls: &ControlPair) -> Result<(), ValidationError> {
        for (name, u, bound) in [
            ("u_i", &controls.u_i, &self.u_i_max),
            ("u_e", &controls.u_e, &self.u_e_max),
        ] {
            if !u.same_shape(bound) {
                return Err(ValidationError::Shape {
                    what: name.to_string(),
                    expected: bound.as_slice().len(),
                    got: u.as_slice().len(),
                });
            }
            for (&v, &b) in u.as_slice().iter().zip(bound.as_slice()) {
                if !(v >= 0.0 && v <= b) {
                    return Err(ValidationError::ControlOutOfBounds {
                        name,
                        value: v,
                        bound: b,
                    });
                }
            }
        }
        Ok(())
    }
}

/// Unvalidated scenario ingredients.
#[derive(Debug, Clone)]
pub struct ScenarioInput {
    pub mesh: Mesh,
    pub time: TimeGrid,
    pub rates: RateConstants,
    pub waning: WaningRate,
    pub diffusion: DiffusionSpec,
    pub initial: InitialData,
    pub bounds: ControlBounds,
    pub threshold: f64,
    pub solver: LinearSolver,
}

/// A scenario whose every modelling assumption has been checked.
#[derive(Debug, Clone)]
pub struct Scenario {
    mesh: Mesh,
    time: TimeGrid,
    rates: RateConstants,
    waning: WaningRate,
    diffusion: DiffusionSpec,
    operators: OperatorSet,
    initial: InitialData,
    bounds: ControlBounds,
    threshold: f64,
    solver: LinearSolver,
}

/// Check every structural and data assumption and assemble the diffusion operators.
pub fn validate_scenario(input: ScenarioInput) -> Result<Scenario> {
    let ScenarioInput {
        mesh,
        time,
        rates,
        waning,
        diffusion,
        initial,
        bounds,
        threshold,
        solver,
    } = input;
    let n = mesh.num_cells();
    let steps = time.steps();

    rates.validate()?;

    if waning.values().len() != steps {
        return Err(ValidationError::WaningLength {
            expected: steps,
            got: waning.values().len(),
        }
        .into());
    }
    if let Some((step, &value)) = waning
        .values()
        .iter()
        .enumerate()
        .find(|(_, &g)| !(g >= 0.0 && g.is_finite()))
    {
        return Err(ValidationError::WaningNegative { step, value }.into());
    }

    let (lo, hi) = (diffusion.kappa_lo, diffusion.kappa_hi);
    if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
        return Err(ValidationError::KappaBounds { lo, hi }.into());
    }
    for (c, spec) in Compartment::ALL.iter().zip(&diffusion.kappa) {
        spec.check(&format!("kappa_{c}"), &mesh, steps, lo, hi)?;
    }

    for (c, f) in Compartment::ALL.iter().zip(initial.fields()) {
        if f.len() != n {
            return Err(ValidationError::Shape {
                what: format!("initial {c}"),
                expected: n,
                got: f.len(),
            }
            .into());
        }
        if let Some(&value) = f.iter().find(|&&v| !(v >= 0.0 && v.is_finite())) {
            return Err(ValidationError::InitialNegative {
                compartment: *c,
                value,
            }
            .into());
        }
    }

    for (name, b) in [("u_i_max", &bounds.u_i_max), ("u_e_max", &bounds.u_e_max)] {
        if b.cells() != n || b.steps() != steps {
            return Err(ValidationError::Shape {
                what: name.into(),
                expected: n * steps,
                got: b.as_slice().len(),
            }
            .into());
        }
        if let Some(&value) = b.as_slice().iter().find(|&&v| !(v >= 0.0 && v.is_finite())) {
            return Err(ValidationError::ControlBoundNegative { name, value }.into());
        }
    }

    if !(threshold > 0.0 && threshold.is_finite()) {
        return Err(ValidationError::ThresholdNotPositive(threshold).into());
    }

    let product = time.dt() * waning.max();
    if steps > 0 && product > 1.0 {
        return Err(ValidationError::WaningStepRestriction { product }.into());
    }

    let build = |step: usize| -> [DiffusionOperator; 4] {
        std::array::from_fn(|c| {
            DiffusionOperator::from_coefficients(&mesh, &diffusion.kappa[c].values_at(&mesh, step))
        })
    };
    let operators = if diffusion.kappa.iter().any(KappaSpec::is_time_dependent) {
        OperatorSet::PerStep((0..steps).map(build).collect())
    } else {
        OperatorSet::Constant(Box::new(build(0)))
    };

    Ok(Scenario {
        mesh,
        time,
        rates,
        waning,
        diffusion,
        operators,
        initial,
        bounds,
        threshold,
        solver,
    })
}

impl Scenario {
    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn time(&self) -> &TimeGrid {
        &self.time
    }

    pub fn dt(&self) -> f64 {
        self.time.dt()
    }

    pub fn steps(&self) -> usize {
        self.time.steps()
    }

    pub fn rates(&self) -> &RateConstants {
        &self.rates
    }

    pub fn waning(&self) -> &WaningRate {
        &self.waning
    }

    pub fn diffusion(&self) -> &DiffusionSpec {
        &self.diffusion
    }

    pub fn operators(&self) -> &OperatorSet {
        &self.operators
    }

    pub fn initial(&self) -> &InitialData {
        &self.initial
    }

    pub fn bounds(&self) -> &ControlBounds {
        &self.bounds
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn solver(&self) -> LinearSolver {
        self.solver
    }

    /// Check that controls have the right shape and lie in the admissible box.
    pub fn validate_controls(&self, controls: &ControlPair) -> Result<()> {
        self.bounds.check(controls)?;
        Ok(())
    }

    pub fn zero_controls(&self) -> ControlPair {
        ControlPair::zeros(self.mesh.num_cells(), self.steps())
    }

    /// Copy with a different number of time steps; per-step data must be constant in time.
    pub fn with_steps(&self, steps: usize) -> Result<Scenario> {
        let time = TimeGrid::new(self.time.horizon(), steps)?;
        let constant = |v: &[f64]| v.windows(2).all(|w| w[0] == w[1]);
        let n = self.mesh.num_cells();
        let first_cells = |f: &SpaceTimeField| -> Result<Vec<f64>> {
            let ok = (1..f.steps()).all(|s| f.at(s) == f.at(0));
            if !ok {
                return Err(crate::Error::Precondition(
                    "cannot regrid time-dependent control bounds".into(),
                ));
            }
            Ok(if f.steps() == 0 { vec![0.0; n] } else { f.at(0).to_vec() })
        };
        if !constant(self.waning.values()) || self.diffusion.kappa.iter().any(KappaSpec::is_time_dependent) {
            return Err(crate::Error::Precondition(
                "cannot regrid time-dependent gamma or kappa".into(),
            ));
        }
        let gamma = self.waning.values().first().copied().unwrap_or(0.0);
        validate_scenario(ScenarioInput {
            mesh: self.mesh.clone(),
            time,
            rates: self.rates,
            waning: WaningRate::constant(gamma, steps),
            diffusion: self.diffusion.clone(),
            initial: self.initial.clone(),
            bounds: ControlBounds {
                u_i_max: SpaceTimeField::from_field(&first_cells(&self.bounds.u_i_max)?, steps),
                u_e_max: SpaceTimeField::from_field(&first_cells(&self.bounds.u_e_max)?, steps),
            },
            threshold: self.threshold,
            solver: self.solver,
        })
    }

    /// Copy with different initial data (validated again).
    pub fn with_initial(&self, initial: InitialData) -> Result<Scenario> {
        let mut s = self.clone();
        for (c, f) in Compartment::ALL.iter().zip(initial.fields()) {
            if let Some(&value) = f.iter().find(|&&v| !(v >= 0.0 && v.is_finite())) {
                return Err(ValidationError::InitialNegative {
                    compartment: *c,
                    value,
                }
                .into());
            }
        }
        s.initial = initial;
        Ok(s)
    }
}

/// The five reaction transfers between compartments at one step, cellwise.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferFluxes {
    /// `u_i s i`
    pub infection_by_infected: Vec<f64>,
    /// `u_e s e`
    pub infection_by_exposed: Vec<f64>,
    /// `sigma e`
    pub incubation: Vec<f64>,
    /// `phi_e e`
    pub recovery_exposed: Vec<f64>,
    /// `phi_r i`
    pub recovery_infected: Vec<f64>,
    /// `gamma r`
    pub waning: Vec<f64>,
}

impl TransferFluxes {
    /// Net reaction rate of each compartment in one cell, order s, e, i, r.
    pub fn net_change(&self, cell: usize) -> [f64; 4] {
        let inf = self.infection_by_infected[cell] + self.infection_by_exposed[cell];
        let inc = self.incubation[cell];
        let re = self.recovery_exposed[cell];
        let ri = self.recovery_infected[cell];
        let w = self.waning[cell];
        [-inf + w, inf - inc - re, inc - ri, re + ri - w]
    }
}

/// Evaluate the transfer terms pointwise at one state.
#[allow(clippy::too_many_arguments)]
pub fn transfer_fluxes(
    s: &[f64],
    e: &[f64],
    i: &[f64],
    r: &[f64],
    u_i: &[f64],
    u_e: &[f64],
    gamma: f64,
    rates: &RateConstants,
) -> TransferFluxes {
    TransferFluxes {
        infection_by_infected: (0..s.len()).map(|c| u_i[c] * s[c] * i[c]).collect(),
        infection_by_exposed: (0..s.len()).map(|c| u_e[c] * s[c] * e[c]).collect(),
        incubation: e.iter().map(|v| rates.sigma * v).collect(),
        recovery_exposed: e.iter().map(|v| rates.phi_e * v).collect(),
        recovery_infected: i.iter().map(|v| rates.phi_r * v).collect(),
        waning: r.iter().map(|v| gamma * v).collect(),
    }
}
