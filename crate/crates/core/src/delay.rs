//! Interval-wise delayed integrator.
//!
//! On each interval `[kτ, (k+1)τ]` the exposed compartment is replaced by its
//! value one lag earlier wherever it drives another compartment, which turns
//! the system into four linear parabolic problems solved one after the other
//! in the order i, r, s, e. The lag makes the incubation and recovery sources
//! of `i` and `r` differ from the sink of `e`, so total population drifts by
//! `O(τ)`; the study reports that drift next to the trajectory error.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::forward::{settle, solve_forward, total_population, EpidemicState, SystemCache, Trajectory};
use crate::mesh::{Field, ImplicitSystem};
use crate::model::{Compartment, ControlPair, RateConstants, Scenario};
use crate::norms::SpaceTimeNorms;

const ALIGN_TOL: f64 = 1e-9;

/// Exposed-compartment history on `[-τ, T]`: the constant prehistory `e0` plus computed levels.
#[derive(Debug, Clone)]
pub struct DelayedHistory {
    prehistory: Field,
    levels: Vec<Field>,
    dt: f64,
    lag_levels: usize,
}

impl DelayedHistory {
    pub fn new(e0: Field, dt: f64, tau: f64) -> Result<Self> {
        let lag_levels = aligned_ratio(tau, dt, "tau is not an integer multiple of dt")?;
        if lag_levels == 0 {
            return Err(Error::Config("tau must be positive".into()));
        }
        Ok(Self {
            levels: vec![e0.clone()],
            prehistory: e0,
            dt,
            lag_levels,
        })
    }

    pub fn lag_levels(&self) -> usize {
        self.lag_levels
    }

    pub fn push(&mut self, level: Field) {
        self.levels.push(level);
    }

    /// Value at the delayed level `level - lag`; the prehistory for nonpositive indices.
    pub fn at_level(&self, level: usize) -> &Field {
        if level <= self.lag_levels {
            &self.prehistory
        } else {
            &self.levels[level - self.lag_levels]
        }
    }
}

fn aligned_ratio(a: f64, b: f64, msg: &str) -> Result<usize> {
    let ratio = a / b;
    let k = ratio.round();
    if !(k >= 0.0) || (ratio - k).abs() > ALIGN_TOL * ratio.max(1.0) {
        return Err(Error::Config(format!("{msg} ({a} / {b} = {ratio})")));
    }
    Ok(k as usize)
}

/// `(δ^τ e)(t) = e(t - τ)`, read from the stored levels.
pub fn delay_lookup(history: &DelayedHistory, t: f64, tau: f64) -> Result<&Field> {
    let expected = history.lag_levels as f64 * history.dt;
    if (tau - expected).abs() > ALIGN_TOL * expected {
        return Err(Error::Config(format!(
            "tau = {tau} does not match the history lag {expected}"
        )));
    }
    if t < -ALIGN_TOL * history.dt {
        return Err(Error::Precondition(format!("lookup time {t} is negative")));
    }
    let shifted = t - tau;
    if shifted <= ALIGN_TOL * history.dt {
        return Ok(&history.prehistory);
    }
    let level = aligned_ratio(shifted, history.dt, "t - tau is not on the time grid")?;
    history
        .levels
        .get(level)
        .ok_or_else(|| Error::Precondition(format!("level {level} has not been computed yet")))
}

/// Solve the delayed system with lag `tau = T / n`; `tau` must be a multiple of `dt`.
pub fn solve_delay(scenario: &Scenario, controls: &ControlPair, tau: f64) -> Result<Trajectory> {
    scenario.validate_controls(controls)?;
    let horizon = scenario.time().horizon();
    let steps = scenario.steps();
    let dt = scenario.dt();
    let intervals = aligned_ratio(horizon, tau, "tau does not divide T")?;
    if intervals == 0 {
        return Err(Error::Config("tau must not exceed T".into()));
    }
    let init = EpidemicState::from_initial(scenario);
    let mut history = DelayedHistory::new(init.e.clone(), dt, tau)?;
    let lag = history.lag_levels();
    if lag * intervals != steps {
        return Err(Error::Config(format!(
            "tau = {tau} is not an integer multiple of dt = {dt}"
        )));
    }

    let RateConstants { sigma, phi_e, phi_r } = *scenario.rates();
    let cells = scenario.mesh().num_cells();
    let inv_dt = 1.0 / dt;
    let solver = scenario.solver();
    let constant = scenario.operators().is_constant();
    let mut infected = SystemCache::new(constant);
    let mut exposed = SystemCache::new(constant);

    let mut s_levels = vec![init.s.clone()];
    let mut e_levels = vec![init.e.clone()];
    let mut i_levels = vec![init.i.clone()];
    let mut r_levels = vec![init.r.clone()];

    for k in 0..intervals {
        let range = k * lag..(k + 1) * lag;
        // Lagged e for every substep of this interval comes from earlier intervals.
        let lagged: Vec<Field> = range.clone().map(|m| history.at_level(m + 1).clone()).collect();

        for (j, m) in range.clone().enumerate() {
            let ops = scenario.operators().at(m);
            let rhs: Vec<f64> = (0..cells)
                .map(|c| i_levels[m][c] * inv_dt + sigma * lagged[j][c])
                .collect();
            let next = infected
                .get(|| ImplicitSystem::new(&ops[2], inv_dt, &vec![phi_r; cells], solver))?
                .solve(&rhs)?;
            i_levels.push(settle(next, Compartment::I, m + 1)?);
        }
        for (j, m) in range.clone().enumerate() {
            let ops = scenario.operators().at(m);
            let gamma = scenario.waning().at(m);
            let rhs: Vec<f64> = (0..cells)
                .map(|c| r_levels[m][c] * inv_dt + phi_r * i_levels[m + 1][c] + phi_e * lagged[j][c])
                .collect();
            let next = ImplicitSystem::new(&ops[3], inv_dt, &vec![gamma; cells], solver)?.solve(&rhs)?;
            r_levels.push(settle(next, Compartment::R, m + 1)?);
        }
        let mut absorb_levels = Vec::with_capacity(lag);
        for (j, m) in range.clone().enumerate() {
            let ops = scenario.operators().at(m);
            let gamma = scenario.waning().at(m);
            let (u_i, u_e) = (controls.u_i.at(m), controls.u_e.at(m));
            let absorb: Vec<f64> = (0..cells)
                .map(|c| u_i[c] * i_levels[m + 1][c] + u_e[c] * lagged[j][c])
                .collect();
            let rhs: Vec<f64> = (0..cells)
                .map(|c| s_levels[m][c] * inv_dt + gamma * r_levels[m + 1][c])
                .collect();
            let next = ImplicitSystem::new(&ops[0], inv_dt, &absorb, solver)?.solve(&rhs)?;
            s_levels.push(settle(next, Compartment::S, m + 1)?);
            absorb_levels.push(absorb);
        }
        for (j, m) in range.enumerate() {
            let ops = scenario.operators().at(m);
            let rhs: Vec<f64> = (0..cells)
                .map(|c| e_levels[m][c] * inv_dt + absorb_levels[j][c] * s_levels[m + 1][c])
                .collect();
            let next = exposed
                .get(|| ImplicitSystem::new(&ops[1], inv_dt, &vec![sigma + phi_e; cells], solver))?
                .solve(&rhs)?;
            let next = settle(next, Compartment::E, m + 1)?;
            history.push(next.clone());
            e_levels.push(next);
        }
    }

    let states = s_levels
        .into_iter()
        .zip(e_levels)
        .zip(i_levels)
        .zip(r_levels)
        .map(|(((s, e), i), r)| EpidemicState { s, e, i, r })
        .collect();
    Ok(Trajectory { states })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub tau: f64,
    /// `max_k ||delay_k - reference_k||_H` over the four compartments.
    pub error: f64,
    /// `log(error ratio) / log(tau ratio)` against the previous row.
    pub order: Option<f64>,
    /// `max_k |∫n(t_k) - ∫n(0)|` of the delayed solution.
    pub conservation_defect: f64,
    pub defect_order: Option<f64>,
}

/// Distance of the delayed solution to the forward reference for each lag.
pub fn convergence_study(scenario: &Scenario, controls: &ControlPair, tau_list: &[f64]) -> Result<Vec<ConvergenceRow>> {
    let reference = solve_forward(scenario, controls)?;
    let norms = SpaceTimeNorms::new(scenario.mesh(), scenario.dt());
    let mut rows: Vec<ConvergenceRow> = Vec::with_capacity(tau_list.len());
    for &tau in tau_list {
        let delayed = solve_delay(scenario, controls, tau)?;
        let error = norms.sup_h_distance(&delayed.states, &reference.states);
        let totals = total_population(scenario, &delayed);
        let defect = totals.iter().map(|t| (t - totals[0]).abs()).fold(0.0, f64::max);
        let order_vs = |prev: f64, cur: f64, prev_tau: f64| (prev / cur).ln() / (prev_tau / tau).ln();
        let (order, defect_order) = match rows.last() {
            Some(prev) => (
                Some(order_vs(prev.error, error, prev.tau)),
                Some(order_vs(prev.conservation_defect, defect, prev.tau)),
            ),
            None => (None, None),
        };
        rows.push(ConvergenceRow {
            tau,
            error,
            order,
            conservation_defect: defect,
            defect_order,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prehistory_lookups() {
        let e0 = Field::from(vec![0.3, 0.4]);
        let tau = 0.25;
        let mut h = DelayedHistory::new(e0.clone(), 0.05, tau).unwrap();
        assert_eq!(delay_lookup(&h, tau / 2.0, tau).unwrap(), &e0);
        assert_eq!(delay_lookup(&h, 0.0, tau).unwrap(), &e0);
        for k in 1..=5 {
            h.push(Field::from(vec![k as f64, 0.0]));
        }
        // t = 2 tau reads the level computed at time tau
        assert_eq!(delay_lookup(&h, 2.0 * tau, tau).unwrap()[0], 5.0);
        assert!(delay_lookup(&h, 3.0 * tau, tau).is_err());
    }

    #[test]
    fn misaligned_tau_rejected() {
        assert!(matches!(
            DelayedHistory::new(Field::zeros(1), 0.1, 0.25),
            Err(Error::Config(_))
        ));
    }
}
