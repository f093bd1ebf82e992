//! Backward adjoint system.
//!
//! The continuous costate equations
//!
//! ```text
//! -p' + A_s p + (u_i i + u_e e)(p - q)                     = 0
//! -q' + A_e q + (sigma + phi_e) q + u_e s (p - q) - sigma w - phi_e z = 0
//! -w' + A_i w + phi_r (w - z) + u_i s (p - q)               = 0
//! -z' + A_r z + gamma (z - p)                               = 0
//! p(T) = z(T) = 0,   q(T) = w(T) = ((e + i)(T) - lambda)⁺
//! ```
//!
//! are discretised directly by backward Euler (optimise-then-discretise). The
//! step from level `n + 1` to level `n` reads its forward coefficients from
//! forward step `n`: `s` at level `n + 1`, `e` and `i` at level `n`, the
//! controls and `gamma` of step `n`. Nonnegative diagonal terms are implicit,
//! sign-indefinite couplings use the newest costate available, and the sweep
//! runs z, w, q, p.

use crate::error::{Error, Result};
use crate::forward::{SystemCache, Trajectory};
use crate::mesh::{Field, ImplicitSystem};
use crate::model::{ControlPair, RateConstants, Scenario};
use crate::norms::Quadruplet;

/// Cells within this distance of the threshold are reported as kinks of the positive part.
pub const KINK_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct AdjointState {
    pub p: Field,
    pub q: Field,
    pub w: Field,
    pub z: Field,
}

impl AdjointState {
    pub fn zeros(cells: usize) -> Self {
        Self {
            p: Field::zeros(cells),
            q: Field::zeros(cells),
            w: Field::zeros(cells),
            z: Field::zeros(cells),
        }
    }
}

impl Quadruplet for AdjointState {
    fn components(&self) -> [&[f64]; 4] {
        [&self.p, &self.q, &self.w, &self.z]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdjointTrajectory {
    /// Levels `0..=N`; level `N` holds the terminal data.
    pub states: Vec<AdjointState>,
    /// Cells where `(e + i)(T)` sits on the threshold within [`KINK_TOLERANCE`].
    pub kink_cells: Vec<usize>,
}

impl AdjointTrajectory {
    pub fn is_identically_zero(&self) -> bool {
        self.states
            .iter()
            .all(|s| s.components().iter().all(|c| c.iter().all(|&v| v == 0.0)))
    }
}

/// `p = z = 0`, `q = w = ((e + i) - lambda)⁺`, plus the cells at the kink.
pub fn terminal_conditions(e_t: &[f64], i_t: &[f64], lambda: f64) -> (AdjointState, Vec<usize>) {
    let cells = e_t.len();
    let mut kinks = Vec::new();
    let excess: Vec<f64> = (0..cells)
        .map(|c| {
            let d = e_t[c] + i_t[c] - lambda;
            if d.abs() <= KINK_TOLERANCE {
                kinks.push(c);
            }
            d.max(0.0)
        })
        .collect();
    (
        AdjointState {
            p: Field::zeros(cells),
            q: Field::from(excess.clone()),
            w: Field::from(excess),
            z: Field::zeros(cells),
        },
        kinks,
    )
}

/// Solve the adjoint system backward from the terminal data of `forward`.
pub fn solve_adjoint(scenario: &Scenario, forward: &Trajectory, controls: &ControlPair) -> Result<AdjointTrajectory> {
    let steps = scenario.steps();
    let cells = scenario.mesh().num_cells();
    if forward.levels() != steps + 1 {
        return Err(Error::Precondition(format!(
            "forward trajectory has {} levels, expected {}",
            forward.levels(),
            steps + 1
        )));
    }
    if controls.u_i.steps() != steps || controls.u_i.cells() != cells {
        return Err(Error::Precondition("control shape does not match the scenario".into()));
    }
    let terminal = forward.terminal();
    let (end, kink_cells) = terminal_conditions(&terminal.e, &terminal.i, scenario.threshold());

    let RateConstants { sigma, phi_e, phi_r } = *scenario.rates();
    let inv_dt = 1.0 / scenario.dt();
    let solver = scenario.solver();
    let constant_ops = scenario.operators().is_constant();
    let constant_gamma = scenario.waning().values().windows(2).all(|w| w[0] == w[1]);
    let mut z_sys = SystemCache::new(constant_ops && constant_gamma);
    let mut w_sys = SystemCache::new(constant_ops);
    let mut q_sys = SystemCache::new(constant_ops);

    let mut states = vec![AdjointState::zeros(cells); steps + 1];
    states[steps] = end;
    for n in (0..steps).rev() {
        let ops = scenario.operators().at(n);
        let gamma = scenario.waning().at(n);
        let (cur, next) = (&forward.states[n], &forward.states[n + 1]);
        let (u_i, u_e) = (controls.u_i.at(n), controls.u_e.at(n));
        let later = &states[n + 1];
        let gap: Vec<f64> = (0..cells).map(|c| later.p[c] - later.q[c]).collect();

        let rhs: Vec<f64> = (0..cells).map(|c| later.z[c] * inv_dt + gamma * later.p[c]).collect();
        let z = z_sys
            .get(|| ImplicitSystem::new(&ops[3], inv_dt, &vec![gamma; cells], solver))?
            .solve(&rhs)?;

        let rhs: Vec<f64> = (0..cells)
            .map(|c| later.w[c] * inv_dt + phi_r * z[c] - u_i[c] * next.s[c] * gap[c])
            .collect();
        let w = w_sys
            .get(|| ImplicitSystem::new(&ops[2], inv_dt, &vec![phi_r; cells], solver))?
            .solve(&rhs)?;

        let rhs: Vec<f64> = (0..cells)
            .map(|c| later.q[c] * inv_dt + sigma * w[c] + phi_e * z[c] - u_e[c] * next.s[c] * gap[c])
            .collect();
        let q = q_sys
            .get(|| ImplicitSystem::new(&ops[1], inv_dt, &vec![sigma + phi_e; cells], solver))?
            .solve(&rhs)?;

        let absorb: Vec<f64> = (0..cells).map(|c| u_i[c] * cur.i[c] + u_e[c] * cur.e[c]).collect();
        let rhs: Vec<f64> = (0..cells).map(|c| later.p[c] * inv_dt + absorb[c] * q[c]).collect();
        let p = ImplicitSystem::new(&ops[0], inv_dt, &absorb, solver)?.solve(&rhs)?;

        for (name, f) in [("p", &p), ("q", &q), ("w", &w), ("z", &z)] {
            if !f.is_finite() {
                return Err(crate::NumericalError::NonFinite {
                    what: format!("adjoint {name}"),
                    level: n,
                }
                .into());
            }
        }
        states[n] = AdjointState { p, q, w, z };
    }
    Ok(AdjointTrajectory { states, kink_cells })
}
