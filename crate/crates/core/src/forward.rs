//! Semi-implicit time stepping of the state system.
//!
//! Each step is a Gauss-Seidel sweep in the order s, e, i, r. Sinks are implicit
//! (nonnegative diagonals), cross-compartment sources use the latest available
//! iterate, and every transfer is evaluated once and applied with opposite
//! signs to its two compartments. Together with the zero row sums of the
//! diffusion operators this makes the total population constant up to
//! roundoff.

use crate::error::{Error, NumericalError, Result};
use crate::mesh::{Field, ImplicitSystem, LinearSolver};
use crate::model::{Compartment, ControlPair, RateConstants, Scenario, TransferFluxes};
use crate::norms::{control_norm, Quadruplet, SpaceTimeNorms};

/// Values in `[-NEGATIVE_FLOOR, 0)` are treated as roundoff and clamped to zero.
pub const NEGATIVE_FLOOR: f64 = 1e-12;

/// The four compartments at one time level.
#[derive(Debug, Clone, PartialEq)]
pub struct EpidemicState {
    pub s: Field,
    pub e: Field,
    pub i: Field,
    pub r: Field,
}

impl EpidemicState {
    pub fn from_initial(scenario: &Scenario) -> Self {
        let init = scenario.initial();
        Self {
            s: init.s.clone(),
            e: init.e.clone(),
            i: init.i.clone(),
            r: init.r.clone(),
        }
    }

    pub fn field(&self, c: Compartment) -> &Field {
        match c {
            Compartment::S => &self.s,
            Compartment::E => &self.e,
            Compartment::I => &self.i,
            Compartment::R => &self.r,
        }
    }

    /// Cellwise total population `s + e + i + r`.
    pub fn total_density(&self) -> Vec<f64> {
        (0..self.s.len())
            .map(|c| self.s[c] + self.e[c] + self.i[c] + self.r[c])
            .collect()
    }
}

impl Quadruplet for EpidemicState {
    fn components(&self) -> [&[f64]; 4] {
        [&self.s, &self.e, &self.i, &self.r]
    }
}

/// Every time level of a forward solve, `0..=N`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: Vec<EpidemicState>,
}

impl Trajectory {
    pub fn levels(&self) -> usize {
        self.states.len()
    }

    pub fn initial(&self) -> &EpidemicState {
        &self.states[0]
    }

    pub fn terminal(&self) -> &EpidemicState {
        self.states.last().expect("trajectory has at least one level")
    }

    /// Largest value of a compartment over all cells and levels.
    pub fn sup(&self, c: Compartment) -> f64 {
        self.states.iter().map(|s| s.field(c).max()).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn inf(&self, c: Compartment) -> f64 {
        self.states.iter().map(|s| s.field(c).min()).fold(f64::INFINITY, f64::min)
    }
}

/// Reject values below the roundoff floor and clamp the rest to zero.
pub(crate) fn settle(mut f: Field, compartment: Compartment, level: usize) -> Result<Field> {
    for v in f.iter_mut() {
        if !v.is_finite() {
            return Err(NumericalError::NonFinite {
                what: compartment.to_string(),
                level,
            }
            .into());
        }
        if *v < 0.0 {
            if *v < -NEGATIVE_FLOOR {
                return Err(NumericalError::PositivityViolation {
                    compartment,
                    level,
                    value: *v,
                }
                .into());
            }
            *v = 0.0;
        }
    }
    Ok(f)
}

/// Caches a factorised system across steps when its matrix does not change.
pub(crate) struct SystemCache<'a> {
    system: Option<ImplicitSystem<'a>>,
    reusable: bool,
}

impl<'a> SystemCache<'a> {
    pub(crate) fn new(reusable: bool) -> Self {
        Self {
            system: None,
            reusable,
        }
    }

    pub(crate) fn get(
        &mut self,
        build: impl FnOnce() -> Result<ImplicitSystem<'a>>,
    ) -> Result<&ImplicitSystem<'a>> {
        if self.system.is_none() || !self.reusable {
            self.system = Some(build()?);
        }
        Ok(self.system.as_ref().expect("just built"))
    }
}

/// Reusable per-run state for stepping one scenario.
pub struct Stepper<'a> {
    scenario: &'a Scenario,
    solver: LinearSolver,
    exposed: SystemCache<'a>,
    infected: SystemCache<'a>,
    recovered: SystemCache<'a>,
}

impl<'a> Stepper<'a> {
    pub fn new(scenario: &'a Scenario) -> Self {
        let constant = scenario.operators().is_constant();
        Self {
            scenario,
            solver: scenario.solver(),
            exposed: SystemCache::new(constant),
            infected: SystemCache::new(constant),
            recovered: SystemCache::new(constant),
        }
    }

    /// Advance level `n` to level `n + 1` under the controls of step `n`.
    pub fn step(
        &mut self,
        n: usize,
        state: &EpidemicState,
        u_i: &[f64],
        u_e: &[f64],
    ) -> Result<(EpidemicState, TransferFluxes)> {
        let sc = self.scenario;
        let RateConstants { sigma, phi_e, phi_r } = *sc.rates();
        let dt = sc.dt();
        let inv_dt = 1.0 / dt;
        let gamma = sc.waning().at(n);
        let ops = sc.operators().at(n);
        let cells = state.s.len();
        let solver = self.solver;

        // s: infection absorbs, waning feeds.
        let absorb: Vec<f64> = (0..cells)
            .map(|c| u_i[c] * state.i[c] + u_e[c] * state.e[c])
            .collect();
        let waning: Vec<f64> = state.r.iter().map(|r| gamma * r).collect();
        let rhs: Vec<f64> = (0..cells).map(|c| state.s[c] * inv_dt + waning[c]).collect();
        let s_next = ImplicitSystem::new(&ops[0], inv_dt, &absorb, solver)?.solve(&rhs)?;
        let s_next = settle(s_next, Compartment::S, n + 1)?;
        let by_i: Vec<f64> = (0..cells).map(|c| u_i[c] * state.i[c] * s_next[c]).collect();
        let by_e: Vec<f64> = (0..cells).map(|c| u_e[c] * state.e[c] * s_next[c]).collect();

        // e: receives both infections, loses incubation and recovery.
        let rhs: Vec<f64> = (0..cells)
            .map(|c| state.e[c] * inv_dt + by_i[c] + by_e[c])
            .collect();
        let e_next = self
            .exposed
            .get(|| ImplicitSystem::new(&ops[1], inv_dt, &vec![sigma + phi_e; cells], solver))?
            .solve(&rhs)?;
        let e_next = settle(e_next, Compartment::E, n + 1)?;
        let incubation: Vec<f64> = e_next.iter().map(|e| sigma * e).collect();
        let rec_e: Vec<f64> = e_next.iter().map(|e| phi_e * e).collect();

        // i
        let rhs: Vec<f64> = (0..cells).map(|c| state.i[c] * inv_dt + incubation[c]).collect();
        let i_next = self
            .infected
            .get(|| ImplicitSystem::new(&ops[2], inv_dt, &vec![phi_r; cells], solver))?
            .solve(&rhs)?;
        let i_next = settle(i_next, Compartment::I, n + 1)?;
        let rec_i: Vec<f64> = i_next.iter().map(|i| phi_r * i).collect();

        // r: waning stays explicit so it cancels the s source exactly.
        let rhs: Vec<f64> = (0..cells)
            .map(|c| state.r[c] * inv_dt + rec_i[c] + rec_e[c] - waning[c])
            .collect();
        let r_next = self
            .recovered
            .get(|| ImplicitSystem::new(&ops[3], inv_dt, &vec![0.0; cells], solver))?
            .solve(&rhs)?;
        let r_next = settle(r_next, Compartment::R, n + 1)?;

        Ok((
            EpidemicState {
                s: s_next,
                e: e_next,
                i: i_next,
                r: r_next,
            },
            TransferFluxes {
                infection_by_infected: by_i,
                infection_by_exposed: by_e,
                incubation,
                recovery_exposed: rec_e,
                recovery_infected: rec_i,
                waning,
            },
        ))
    }
}

/// One step of the forward scheme without cross-step caching.
pub fn step(
    scenario: &Scenario,
    n: usize,
    state: &EpidemicState,
    controls: &ControlPair,
) -> Result<(EpidemicState, TransferFluxes)> {
    Stepper::new(scenario).step(n, state, controls.u_i.at(n), controls.u_e.at(n))
}

/// Integrate the state system over the whole horizon.
pub fn solve_forward(scenario: &Scenario, controls: &ControlPair) -> Result<Trajectory> {
    scenario.validate_controls(controls)?;
    solve_forward_unchecked(scenario, controls)
}

/// Forward solve for any nonnegative controls, without the upper-bound check.
pub(crate) fn solve_forward_unchecked(scenario: &Scenario, controls: &ControlPair) -> Result<Trajectory> {
    let n_steps = scenario.steps();
    if controls.u_i.steps() != n_steps || controls.u_i.cells() != scenario.mesh().num_cells() {
        return Err(Error::Precondition("control shape does not match the scenario".into()));
    }
    let mut stepper = Stepper::new(scenario);
    let mut states = Vec::with_capacity(n_steps + 1);
    states.push(EpidemicState::from_initial(scenario));
    for n in 0..n_steps {
        let (next, _) = stepper.step(n, &states[n], controls.u_i.at(n), controls.u_e.at(n))?;
        states.push(next);
    }
    Ok(Trajectory { states })
}

/// `∫_Ω (s + e + i + r)` at every level.
pub fn total_population(scenario: &Scenario, trajectory: &Trajectory) -> Vec<f64> {
    let mesh = scenario.mesh();
    trajectory
        .states
        .iter()
        .map(|st| {
            Compartment::ALL
                .iter()
                .map(|&c| mesh.integrate(st.field(c)))
                .sum()
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct DependenceReport {
    pub state_distance: f64,
    pub control_distance: f64,
    /// `state_distance / control_distance`, or 0 when the controls coincide.
    pub ratio: f64,
    pub identical_controls: bool,
}

/// Ratio of state distance to control distance for two admissible control pairs.
pub fn continuous_dependence_probe(
    scenario: &Scenario,
    u1: &ControlPair,
    u2: &ControlPair,
) -> Result<DependenceReport> {
    let norms = SpaceTimeNorms::new(scenario.mesh(), scenario.dt());
    let diff = u1.offset(u2, -1.0);
    let control_distance = control_norm(scenario.mesh(), scenario.dt(), &diff);
    let t1 = solve_forward(scenario, u1)?;
    if control_distance == 0.0 {
        return Ok(DependenceReport {
            state_distance: 0.0,
            control_distance,
            ratio: 0.0,
            identical_controls: true,
        });
    }
    let t2 = solve_forward(scenario, u2)?;
    let state_distance = norms.combined_distance(&t1.states, &t2.states, 1.0);
    Ok(DependenceReport {
        state_distance,
        control_distance,
        ratio: state_distance / control_distance,
        identical_controls: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{Mesh, TimeGrid};
    use crate::model::*;

    fn scenario(cells: usize, steps: usize, gamma: f64, init: [f64; 4]) -> Scenario {
        let mesh = Mesh::uniform_1d(cells, 1.0).unwrap();
        validate_scenario(ScenarioInput {
            time: TimeGrid::new(1.0, steps).unwrap(),
            rates: RateConstants {
                sigma: 0.2,
                phi_e: 0.1,
                phi_r: 0.4,
            },
            waning: WaningRate::constant(gamma, steps),
            diffusion: DiffusionSpec::uniform(0.01),
            initial: InitialData::uniform(&mesh, init[0], init[1], init[2], init[3]),
            bounds: ControlBounds::constant(cells, steps, 1.0, 1.0),
            threshold: 0.05,
            solver: LinearSolver::Direct,
            mesh,
        })
        .unwrap()
    }

    #[test]
    fn stationary_susceptibles() {
        let sc = scenario(1, 10, 0.0, [1.0, 0.0, 0.0, 0.0]);
        let (next, _) = step(&sc, 0, &EpidemicState::from_initial(&sc), &sc.zero_controls()).unwrap();
        assert_eq!(next.s[0], 1.0);
    }

    #[test]
    fn scalar_implicit_euler_for_exposed() {
        let sc = scenario(1, 10, 0.0, [0.0, 1.0, 0.0, 0.0]);
        let (next, _) = step(&sc, 0, &EpidemicState::from_initial(&sc), &sc.zero_controls()).unwrap();
        assert!((next.e[0] - 1.0 / 1.03).abs() < 1e-15);
    }

    #[test]
    fn zero_data_gives_zero_trajectory() {
        let sc = scenario(8, 20, 0.1, [0.0; 4]);
        let u = sc.bounds().midpoint();
        let t = solve_forward(&sc, &u).unwrap();
        assert!(t.states.iter().all(|st| st.total_density().iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn zero_step_grid_has_one_level() {
        let sc = scenario(4, 0, 0.0, [0.5, 0.1, 0.1, 0.0]);
        let t = solve_forward(&sc, &sc.zero_controls()).unwrap();
        assert_eq!(t.levels(), 1);
        let totals = total_population(&sc, &t);
        assert_eq!(totals.len(), 1);
        assert!((totals[0] - 0.7).abs() < 1e-15);
    }

    #[test]
    fn one_step_conserves_population() {
        let mesh = Mesh::uniform_1d(16, 1.0).unwrap();
        let sc = scenario(16, 10, 0.3, [0.0; 4])
            .with_initial(InitialData {
                s: Field::from_fn(&mesh, |x| 0.8 + 0.1 * (6.0 * x[0]).sin()),
                e: Field::from_fn(&mesh, |x| 0.05 * (1.0 + x[0])),
                i: Field::from_fn(&mesh, |x| 0.1 * x[0] * x[0]),
                r: Field::constant(&mesh, 0.02),
            })
            .unwrap();
        let t = solve_forward(&sc, &sc.bounds().midpoint()).unwrap();
        let totals = total_population(&sc, &t);
        for w in totals.windows(2) {
            assert!((w[1] - w[0]).abs() <= 1e-13 * w[0]);
        }
    }

    #[test]
    fn scaling_initial_data_without_control_scales_totals() {
        let base = scenario(6, 20, 0.05, [0.9, 0.05, 0.05, 0.0]);
        let scaled = scenario(6, 20, 0.05, [2.7, 0.15, 0.15, 0.0]);
        let a = total_population(&base, &solve_forward(&base, &base.zero_controls()).unwrap());
        let b = total_population(&scaled, &solve_forward(&scaled, &scaled.zero_controls()).unwrap());
        for (x, y) in a.iter().zip(&b) {
            assert!((3.0 * x - y).abs() < 1e-13);
        }
    }

    #[test]
    fn rejects_out_of_box_controls() {
        let sc = scenario(4, 5, 0.0, [0.5, 0.1, 0.1, 0.0]);
        let u = ControlPair::constant(4, 5, 2.0, 0.0);
        assert!(solve_forward(&sc, &u).is_err());
    }

    #[test]
    fn identical_controls_flagged() {
        let sc = scenario(4, 5, 0.0, [0.5, 0.1, 0.1, 0.0]);
        let u = sc.bounds().midpoint();
        let rep = continuous_dependence_probe(&sc, &u, &u).unwrap();
        assert!(rep.identical_controls);
        assert_eq!(rep.ratio, 0.0);
    }
}
