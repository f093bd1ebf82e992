//! Tangent (linearised) state system and the Fréchet remainder test.
//!
//! The tangent scheme differentiates the forward step term by term: same sweep
//! order, same implicit/explicit split, same time levels for every frozen
//! coefficient. It is therefore the exact derivative of the discrete
//! control-to-state map, up to linear-solver roundoff.

use crate::error::{Error, Result};
use crate::forward::{solve_forward, Trajectory};
use crate::mesh::{Field, ImplicitSystem};
use crate::model::{ControlPair, RateConstants, Scenario};
use crate::norms::{control_norm, Quadruplet, SpaceTimeNorms};
use crate::forward::SystemCache;

/// A control direction `(h_i, h_e)`; sign unconstrained.
pub type ControlVariation = ControlPair;

/// `(xi, eta, iota, rho)` at one level: the directional derivatives of `(s, e, i, r)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentState {
    pub xi: Field,
    pub eta: Field,
    pub iota: Field,
    pub rho: Field,
}

impl TangentState {
    pub fn zeros(cells: usize) -> Self {
        Self {
            xi: Field::zeros(cells),
            eta: Field::zeros(cells),
            iota: Field::zeros(cells),
            rho: Field::zeros(cells),
        }
    }
}

impl Quadruplet for TangentState {
    fn components(&self) -> [&[f64]; 4] {
        [&self.xi, &self.eta, &self.iota, &self.rho]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TangentTrajectory {
    pub states: Vec<TangentState>,
}

/// Integrate the linearised system around `base` in the direction `variation`.
pub fn solve_tangent(
    scenario: &Scenario,
    base: &Trajectory,
    base_controls: &ControlPair,
    variation: &ControlVariation,
) -> Result<TangentTrajectory> {
    let steps = scenario.steps();
    let cells = scenario.mesh().num_cells();
    if base.levels() != steps + 1 {
        return Err(Error::Precondition(format!(
            "base trajectory has {} levels, expected {}",
            base.levels(),
            steps + 1
        )));
    }
    for (name, f) in [
        ("u_i", &base_controls.u_i),
        ("u_e", &base_controls.u_e),
        ("h_i", &variation.u_i),
        ("h_e", &variation.u_e),
    ] {
        if f.cells() != cells || f.steps() != steps {
            return Err(Error::Config(format!("{name} shape does not match the scenario grid")));
        }
    }
    let RateConstants { sigma, phi_e, phi_r } = *scenario.rates();
    let dt = scenario.dt();
    let inv_dt = 1.0 / dt;
    let solver = scenario.solver();
    let constant = scenario.operators().is_constant();
    let mut exposed = SystemCache::new(constant);
    let mut infected = SystemCache::new(constant);
    let mut recovered = SystemCache::new(constant);

    let mut states = Vec::with_capacity(steps + 1);
    states.push(TangentState::zeros(cells));
    for n in 0..steps {
        let ops = scenario.operators().at(n);
        let gamma = scenario.waning().at(n);
        let (cur, next) = (&base.states[n], &base.states[n + 1]);
        let (u_i, u_e) = (base_controls.u_i.at(n), base_controls.u_e.at(n));
        let (h_i, h_e) = (variation.u_i.at(n), variation.u_e.at(n));
        let tan = &states[n];

        let absorb: Vec<f64> = (0..cells).map(|c| u_i[c] * cur.i[c] + u_e[c] * cur.e[c]).collect();
        let d_absorb: Vec<f64> = (0..cells)
            .map(|c| h_i[c] * cur.i[c] + u_i[c] * tan.iota[c] + h_e[c] * cur.e[c] + u_e[c] * tan.eta[c])
            .collect();
        let rhs: Vec<f64> = (0..cells)
            .map(|c| tan.xi[c] * inv_dt + gamma * tan.rho[c] - d_absorb[c] * next.s[c])
            .collect();
        let xi = ImplicitSystem::new(&ops[0], inv_dt, &absorb, solver)?.solve(&rhs)?;
        let d_infection: Vec<f64> = (0..cells)
            .map(|c| d_absorb[c] * next.s[c] + absorb[c] * xi[c])
            .collect();

        let rhs: Vec<f64> = (0..cells).map(|c| tan.eta[c] * inv_dt + d_infection[c]).collect();
        let eta = exposed
            .get(|| ImplicitSystem::new(&ops[1], inv_dt, &vec![sigma + phi_e; cells], solver))?
            .solve(&rhs)?;

        let rhs: Vec<f64> = (0..cells).map(|c| tan.iota[c] * inv_dt + sigma * eta[c]).collect();
        let iota = infected
            .get(|| ImplicitSystem::new(&ops[2], inv_dt, &vec![phi_r; cells], solver))?
            .solve(&rhs)?;

        let rhs: Vec<f64> = (0..cells)
            .map(|c| tan.rho[c] * inv_dt + phi_r * iota[c] + phi_e * eta[c] - gamma * tan.rho[c])
            .collect();
        let rho = recovered
            .get(|| ImplicitSystem::new(&ops[3], inv_dt, &vec![0.0; cells], solver))?
            .solve(&rhs)?;

        states.push(TangentState { xi, eta, iota, rho });
    }
    Ok(TangentTrajectory { states })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RemainderRow {
    pub epsilon: f64,
    /// `||S(u + eps h) - S(u) - eps T h||`
    pub remainder: f64,
    /// Same at `eps / 2`.
    pub remainder_half: f64,
    /// `remainder / remainder_half`; close to 4 for a quadratic remainder.
    pub ratio: f64,
}

/// Second-order remainder of the linearisation for each admissible `eps`.
///
/// Values of `eps` for which `u + eps h` leaves the admissible box are skipped.
pub fn frechet_remainder_check(
    scenario: &Scenario,
    base_controls: &ControlPair,
    variation: &ControlVariation,
    epsilons: &[f64],
) -> Result<Vec<RemainderRow>> {
    let base = solve_forward(scenario, base_controls)?;
    let tangent = solve_tangent(scenario, &base, base_controls, variation)?;
    let norms = SpaceTimeNorms::new(scenario.mesh(), scenario.dt());
    let remainder = |eps: f64| -> Result<f64> {
        let perturbed = solve_forward(scenario, &base_controls.offset(variation, eps))?;
        Ok(norms.combined_remainder(&perturbed.states, &base.states, &tangent.states, eps))
    };
    let admissible: Vec<f64> = epsilons
        .iter()
        .copied()
        .filter(|&eps| scenario.bounds().contains(&base_controls.offset(variation, eps)))
        .collect();
    if admissible.is_empty() {
        return Err(Error::Precondition(
            "u + eps h is inadmissible for every requested eps".into(),
        ));
    }
    admissible
        .into_iter()
        .map(|eps| {
            let r = remainder(eps)?;
            let r_half = remainder(0.5 * eps)?;
            Ok(RemainderRow {
                epsilon: eps,
                remainder: r,
                remainder_half: r_half,
                ratio: if r_half > 0.0 { r / r_half } else { 0.0 },
            })
        })
        .collect()
}

/// `||T h|| / ||h||` for one direction, the empirical counterpart of the tangent estimate.
pub fn tangent_gain(
    scenario: &Scenario,
    base: &Trajectory,
    base_controls: &ControlPair,
    variation: &ControlVariation,
) -> Result<f64> {
    let tangent = solve_tangent(scenario, base, base_controls, variation)?;
    let norms = SpaceTimeNorms::new(scenario.mesh(), scenario.dt());
    let h = control_norm(scenario.mesh(), scenario.dt(), variation);
    if h == 0.0 {
        return Ok(0.0);
    }
    Ok(norms.combined(&tangent.states) / h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{LinearSolver, Mesh, TimeGrid};
    use crate::model::*;

    fn scenario(init: [f64; 4], gamma: f64) -> Scenario {
        let mesh = Mesh::uniform_1d(1, 1.0).unwrap();
        validate_scenario(ScenarioInput {
            time: TimeGrid::new(1.0, 50).unwrap(),
            rates: RateConstants {
                sigma: 0.2,
                phi_e: 0.1,
                phi_r: 0.4,
            },
            waning: WaningRate::constant(gamma, 50),
            diffusion: DiffusionSpec::uniform(0.01),
            initial: InitialData::uniform(&mesh, init[0], init[1], init[2], init[3]),
            bounds: ControlBounds::constant(1, 50, 1.0, 1.0),
            threshold: 0.05,
            solver: LinearSolver::Direct,
            mesh,
        })
        .unwrap()
    }

    #[test]
    fn zero_variation_gives_zero_tangent() {
        let sc = scenario([0.8, 0.1, 0.1, 0.0], 0.1);
        let u = sc.bounds().midpoint();
        let base = solve_forward(&sc, &u).unwrap();
        let t = solve_tangent(&sc, &base, &u, &sc.zero_controls()).unwrap();
        assert!(t.states.iter().all(|s| s.components().iter().all(|c| c.iter().all(|&v| v == 0.0))));
    }

    #[test]
    fn tangent_is_linear_in_variation() {
        let sc = scenario([0.8, 0.1, 0.1, 0.05], 0.1);
        let u = sc.bounds().midpoint();
        let base = solve_forward(&sc, &u).unwrap();
        let h = ControlPair::constant(1, 50, 0.3, -0.2);
        let t1 = solve_tangent(&sc, &base, &u, &h).unwrap();
        let t2 = solve_tangent(&sc, &base, &u, &h.scaled(2.0)).unwrap();
        for (a, b) in t1.states.iter().zip(&t2.states) {
            for (x, y) in a.components().iter().zip(b.components()) {
                for (p, q) in x.iter().zip(y) {
                    assert!((2.0 * p - q).abs() <= 1e-14 * q.abs().max(1e-300) + 1e-300);
                }
            }
        }
    }

    #[test]
    fn single_cell_tangent_matches_scalar_recursion() {
        // s starts at zero and is refilled by waning only.
        let sc = scenario([0.0, 0.1, 0.1, 0.2], 0.3);
        let u = sc.bounds().midpoint();
        let base = solve_forward(&sc, &u).unwrap();
        let h = ControlPair::constant(1, 50, 1.0, 1.0);
        let t = solve_tangent(&sc, &base, &u, &h).unwrap();
        let dt = sc.dt();
        let (sigma, phi_e, phi_r, gamma) = (0.2, 0.1, 0.4, 0.3);
        let mut x = [0.0f64; 4];
        for n in 0..50 {
            let (cur, next) = (&base.states[n], &base.states[n + 1]);
            let a = 0.5 * cur.i[0] + 0.5 * cur.e[0];
            let da = cur.i[0] + 0.5 * x[2] + cur.e[0] + 0.5 * x[1];
            let xi = (x[0] / dt + gamma * x[3] - da * next.s[0]) / (1.0 / dt + a);
            let eta = (x[1] / dt + da * next.s[0] + a * xi) / (1.0 / dt + sigma + phi_e);
            let iota = (x[2] / dt + sigma * eta) / (1.0 / dt + phi_r);
            let rho = (x[3] / dt + phi_r * iota + phi_e * eta - gamma * x[3]) * dt;
            x = [xi, eta, iota, rho];
            let got = &t.states[n + 1];
            for (k, c) in got.components().iter().enumerate() {
                assert!((c[0] - x[k]).abs() <= 1e-14 * x[k].abs().max(1e-12));
            }
        }
    }
}
