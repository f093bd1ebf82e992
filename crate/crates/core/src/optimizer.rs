//! Cost functional, reduced gradient, and projected gradient descent over the control box.

use serde::{Deserialize, Serialize};

use crate::adjoint::{solve_adjoint, AdjointTrajectory};
use crate::error::{Error, Result};
use crate::forward::{solve_forward, Trajectory};
use crate::model::{ControlBounds, ControlPair, Scenario, SpaceTimeField};
use crate::norms::{control_inner, control_norm};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CostBreakdown {
    /// `1/2 ∫_Ω ((e + i)(T) - λ)⁺²`
    pub terminal: f64,
    /// `1/2 ∫_Q (u_i² + u_e²)`
    pub control: f64,
    pub total: f64,
}

pub fn evaluate_cost(scenario: &Scenario, trajectory: &Trajectory, controls: &ControlPair) -> CostBreakdown {
    let mesh = scenario.mesh();
    let lambda = scenario.threshold();
    let end = trajectory.terminal();
    let excess: f64 = end
        .e
        .iter()
        .zip(end.i.iter())
        .map(|(e, i)| (e + i - lambda).max(0.0).powi(2))
        .sum();
    let terminal = 0.5 * mesh.cell_volume() * excess;
    let control = 0.5 * control_inner(mesh, scenario.dt(), controls, controls);
    CostBreakdown {
        terminal,
        control,
        total: terminal + control,
    }
}

/// `(g_i, g_e) = (s i (q - p) + u_i, s e (q - p) + u_e)` on the control grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientPair {
    pub g_i: SpaceTimeField,
    pub g_e: SpaceTimeField,
}

impl GradientPair {
    pub fn as_controls(&self) -> ControlPair {
        ControlPair {
            u_i: self.g_i.clone(),
            u_e: self.g_e.clone(),
        }
    }
}

/// The unregularised part `(s i (p - q), s e (p - q))`, whose box projection
/// is the optimal control at a stationary point.
pub fn adjoint_feedback(forward: &Trajectory, adjoint: &AdjointTrajectory, steps: usize) -> ControlPair {
    let cells = forward.states[0].s.len();
    let mut f_i = SpaceTimeField::zeros(cells, steps);
    let mut f_e = SpaceTimeField::zeros(cells, steps);
    for n in 0..steps {
        let (cur, next, co) = (&forward.states[n], &forward.states[n + 1], &adjoint.states[n]);
        let (fi, fe) = (f_i.at_mut(n), f_e.at_mut(n));
        for c in 0..cells {
            let gap = co.p[c] - co.q[c];
            fi[c] = next.s[c] * cur.i[c] * gap;
            fe[c] = next.s[c] * cur.e[c] * gap;
        }
    }
    ControlPair { u_i: f_i, u_e: f_e }
}

/// Reduced gradient, pairing each control step with the forward flux levels of that step
/// and the adjoint level produced by the matching backward step.
pub fn reduced_gradient(
    scenario: &Scenario,
    forward: &Trajectory,
    adjoint: &AdjointTrajectory,
    controls: &ControlPair,
) -> Result<GradientPair> {
    let steps = scenario.steps();
    if forward.levels() != steps + 1 || adjoint.states.len() != steps + 1 {
        return Err(Error::Precondition(format!(
            "forward/adjoint levels ({}, {}) do not match {} steps",
            forward.levels(),
            adjoint.states.len(),
            steps
        )));
    }
    let feedback = adjoint_feedback(forward, adjoint, steps);
    Ok(GradientPair {
        g_i: controls.u_i.zip_map(&feedback.u_i, |u, f| u - f),
        g_e: controls.u_e.zip_map(&feedback.u_e, |u, f| u - f),
    })
}

/// Pointwise clamp to `[0, u_max]`, the `L^2` projection onto the box.
pub fn project_controls(candidate: &ControlPair, bounds: &ControlBounds) -> ControlPair {
    ControlPair {
        u_i: candidate.u_i.zip_map(&bounds.u_i_max, |u, b| u.clamp(0.0, b)),
        u_e: candidate.u_e.zip_map(&bounds.u_e_max, |u, b| u.clamp(0.0, b)),
    }
}

/// `||u - P(u - g)||` in the discrete `L^2(Q)` norm.
pub fn vi_residual(scenario: &Scenario, controls: &ControlPair, gradient: &GradientPair) -> f64 {
    let stepped = controls.offset(&gradient.as_controls(), -1.0);
    let projected = project_controls(&stepped, scenario.bounds());
    control_norm(scenario.mesh(), scenario.dt(), &controls.offset(&projected, -1.0))
}

/// Scale used to make residuals comparable across scenarios: `||u_max|| + 1`.
pub fn residual_scale(scenario: &Scenario) -> f64 {
    control_norm(scenario.mesh(), scenario.dt(), &scenario.bounds().upper()) + 1.0
}

/// `||u - P(s i (p - q), s e (p - q))|| / (||u_max|| + 1)`.
pub fn projection_fixed_point_gap(
    scenario: &Scenario,
    controls: &ControlPair,
    forward: &Trajectory,
    adjoint: &AdjointTrajectory,
) -> f64 {
    let target = project_controls(&adjoint_feedback(forward, adjoint, scenario.steps()), scenario.bounds());
    control_norm(scenario.mesh(), scenario.dt(), &controls.offset(&target, -1.0)) / residual_scale(scenario)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerOptions {
    pub max_iters: usize,
    /// Tolerance on the normalised VI residual.
    pub vi_tolerance: f64,
    pub armijo_c: f64,
    pub backtrack_factor: f64,
    pub initial_step: f64,
    pub min_step: f64,
}

impl Default for OptimizerOptions {
    fn default() -> Self {
        Self {
            max_iters: 200,
            vi_tolerance: 1e-6,
            armijo_c: 1e-4,
            backtrack_factor: 0.5,
            initial_step: 1.0,
            min_step: 1e-12,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Converged,
    MaxIterations,
    StepCollapse,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub cost: CostBreakdown,
    /// Normalised VI residual at this iterate.
    pub vi_residual: f64,
    /// Step length accepted to reach this iterate (0 for the start).
    pub step_length: f64,
    pub backtracks: usize,
}

#[derive(Debug, Clone)]
pub struct OptimizationReport {
    pub iterations: Vec<IterationRecord>,
    pub controls: ControlPair,
    pub trajectory: Trajectory,
    pub adjoint: AdjointTrajectory,
    pub termination: Termination,
}

impl OptimizationReport {
    pub fn final_record(&self) -> &IterationRecord {
        self.iterations.last().expect("report has the initial iterate")
    }
}

struct Iterate {
    controls: ControlPair,
    trajectory: Trajectory,
    cost: CostBreakdown,
    adjoint: AdjointTrajectory,
    gradient: GradientPair,
    residual: f64,
}

impl Iterate {
    fn new(scenario: &Scenario, controls: ControlPair, trajectory: Trajectory, cost: CostBreakdown) -> Result<Self> {
        let adjoint = solve_adjoint(scenario, &trajectory, &controls)?;
        let gradient = reduced_gradient(scenario, &trajectory, &adjoint, &controls)?;
        let residual = vi_residual(scenario, &controls, &gradient) / residual_scale(scenario);
        Ok(Self {
            controls,
            trajectory,
            cost,
            adjoint,
            gradient,
            residual,
        })
    }
}

/// Projected gradient descent with Armijo backtracking on the cost.
pub fn projected_gradient_descent(
    scenario: &Scenario,
    initial_controls: &ControlPair,
    options: &OptimizerOptions,
) -> Result<OptimizationReport> {
    scenario.validate_controls(initial_controls)?;
    let trajectory = solve_forward(scenario, initial_controls)?;
    let cost = evaluate_cost(scenario, &trajectory, initial_controls);
    let mut current = Iterate::new(scenario, initial_controls.clone(), trajectory, cost)?;
    let mut records = vec![IterationRecord {
        iteration: 0,
        cost: current.cost,
        vi_residual: current.residual,
        step_length: 0.0,
        backtracks: 0,
    }];

    let termination = loop {
        if current.residual <= options.vi_tolerance {
            break Termination::Converged;
        }
        if records.len() > options.max_iters {
            break Termination::MaxIterations;
        }
        let mut alpha = options.initial_step;
        let mut backtracks = 0;
        let accepted = loop {
            let trial = project_controls(
                &current.controls.offset(&current.gradient.as_controls(), -alpha),
                scenario.bounds(),
            );
            let displacement = trial.offset(&current.controls, -1.0);
            let slope = control_inner(scenario.mesh(), scenario.dt(), &current.gradient.as_controls(), &displacement);
            let trajectory = solve_forward(scenario, &trial)?;
            let cost = evaluate_cost(scenario, &trajectory, &trial);
            if cost.total <= current.cost.total + options.armijo_c * slope {
                break Some((trial, trajectory, cost));
            }
            alpha *= options.backtrack_factor;
            backtracks += 1;
            if alpha < options.min_step {
                break None;
            }
        };
        let Some((controls, trajectory, cost)) = accepted else {
            break Termination::StepCollapse;
        };
        current = Iterate::new(scenario, controls, trajectory, cost)?;
        records.push(IterationRecord {
            iteration: records.len(),
            cost: current.cost,
            vi_residual: current.residual,
            step_length: alpha,
            backtracks,
        });
    };

    Ok(OptimizationReport {
        iterations: records,
        controls: current.controls,
        trajectory: current.trajectory,
        adjoint: current.adjoint,
        termination,
    })
}

/// Central difference `(J(u + eps h) - J(u - eps h)) / (2 eps)`.
///
/// `eps` is halved (up to 30 times) until both probes are admissible.
pub fn fd_directional_derivative(
    scenario: &Scenario,
    controls: &ControlPair,
    direction: &ControlPair,
    epsilon: f64,
) -> Result<f64> {
    let mut eps = epsilon;
    for _ in 0..=30 {
        let plus = controls.offset(direction, eps);
        let minus = controls.offset(direction, -eps);
        if scenario.bounds().contains(&plus) && scenario.bounds().contains(&minus) {
            let jp = evaluate_cost(scenario, &solve_forward(scenario, &plus)?, &plus).total;
            let jm = evaluate_cost(scenario, &solve_forward(scenario, &minus)?, &minus).total;
            return Ok((jp - jm) / (2.0 * eps));
        }
        eps *= 0.5;
    }
    Err(Error::Precondition(
        "u ± eps h leaves the admissible set for every tried eps".into(),
    ))
}

/// `<g, h>` with the quadrature weights of the cost functional.
pub fn gradient_directional_derivative(scenario: &Scenario, gradient: &GradientPair, direction: &ControlPair) -> f64 {
    control_inner(scenario.mesh(), scenario.dt(), &gradient.as_controls(), direction)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{LinearSolver, Mesh, TimeGrid};
    use crate::model::*;

    fn uniform(ei: f64, lambda: f64, steps: usize) -> Scenario {
        let mesh = Mesh::uniform_1d(4, 1.0).unwrap();
        validate_scenario(ScenarioInput {
            time: TimeGrid::new(1.0, steps).unwrap(),
            rates: RateConstants {
                sigma: 0.2,
                phi_e: 0.1,
                phi_r: 0.4,
            },
            waning: WaningRate::constant(0.0, steps),
            diffusion: DiffusionSpec::uniform(0.01),
            initial: InitialData::uniform(&mesh, 0.0, ei / 2.0, ei / 2.0, 0.0),
            bounds: ControlBounds::constant(4, steps, 1.0, 0.6),
            threshold: lambda,
            solver: LinearSolver::Direct,
            mesh,
        })
        .unwrap()
    }

    #[test]
    fn cost_examples() {
        // A single-level trajectory pins (e + i)(T) to the initial data.
        let sc = uniform(4.0, 5.0, 0);
        let u = sc.zero_controls();
        let t = solve_forward(&sc, &u).unwrap();
        assert_eq!(evaluate_cost(&sc, &t, &u).total, 0.0);

        let sc = uniform(6.0, 5.0, 0);
        let t = solve_forward(&sc, &u).unwrap();
        let c = evaluate_cost(&sc, &t, &u);
        assert!((c.total - 0.5).abs() < 1e-15);
        assert_eq!(c.total, c.terminal + c.control);

        let sc = uniform(0.01, 5.0, 10);
        let u = ControlPair {
            u_i: SpaceTimeField::constant(4, 10, 1.0),
            u_e: SpaceTimeField::zeros(4, 10),
        };
        let t = solve_forward(&sc, &u).unwrap();
        let c = evaluate_cost(&sc, &t, &u);
        assert_eq!(c.terminal, 0.0);
        assert!((c.total - 0.5).abs() < 1e-14);
    }

    #[test]
    fn projection_examples() {
        let bounds = ControlBounds::constant(1, 1, 0.6, 0.6);
        let cand = ControlPair::constant(1, 1, 0.9, -0.2);
        let p = project_controls(&cand, &bounds);
        assert_eq!(p.u_i.as_slice(), &[0.6]);
        assert_eq!(p.u_e.as_slice(), &[0.0]);
        let feasible = ControlPair::constant(1, 1, 0.3, 0.1);
        assert_eq!(project_controls(&feasible, &bounds), feasible);
    }

    #[test]
    fn zero_adjoint_gives_regularisation_gradient() {
        let sc = uniform(0.01, 5.0, 10);
        let u = ControlPair::constant(4, 10, 0.3, 0.2);
        let t = solve_forward(&sc, &u).unwrap();
        let adj = solve_adjoint(&sc, &t, &u).unwrap();
        assert!(adj.is_identically_zero());
        let g = reduced_gradient(&sc, &t, &adj, &u).unwrap();
        assert_eq!(g.as_controls(), u);
        // interior point, inactive projection: residual equals ||g||
        let r = vi_residual(&sc, &u, &g);
        assert!((r - control_norm(sc.mesh(), sc.dt(), &u)).abs() < 1e-15);

        let zero = sc.zero_controls();
        let t = solve_forward(&sc, &zero).unwrap();
        let adj = solve_adjoint(&sc, &t, &zero).unwrap();
        let g = reduced_gradient(&sc, &t, &adj, &zero).unwrap();
        assert_eq!(vi_residual(&sc, &zero, &g), 0.0);
    }

    #[test]
    fn fd_of_zero_direction_is_zero() {
        let sc = uniform(0.3, 0.1, 10);
        let u = sc.bounds().midpoint();
        assert_eq!(fd_directional_derivative(&sc, &u, &sc.zero_controls(), 1e-5).unwrap(), 0.0);
    }

    #[test]
    fn fd_rejects_boundary_probe() {
        let sc = uniform(0.3, 0.1, 10);
        let u = sc.zero_controls();
        let h = ControlPair::constant(4, 10, 1.0, 0.0);
        assert!(matches!(
            fd_directional_derivative(&sc, &u, &h, 1e-5),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn stationary_start_terminates_immediately() {
        let sc = uniform(0.01, 5.0, 10);
        let rep = projected_gradient_descent(&sc, &sc.zero_controls(), &OptimizerOptions::default()).unwrap();
        assert_eq!(rep.iterations.len(), 1);
        assert_eq!(rep.termination, Termination::Converged);
        assert_eq!(rep.final_record().cost.total, 0.0);
    }
}
