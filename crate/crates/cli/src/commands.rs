use std::path::PathBuf;

use epictrl_core::adjoint::AdjointTrajectory;
use epictrl_core::delay::convergence_study;
use epictrl_core::io::{csv_line, fmt_f64, Snapshot};
use epictrl_core::optimizer::{
    fd_directional_derivative, gradient_directional_derivative, projected_gradient_descent,
    projection_fixed_point_gap, reduced_gradient,
};
use epictrl_core::sensitivity::frechet_remainder_check;
use epictrl_core::{
    evaluate_cost, solve_adjoint, solve_forward, Compartment, ControlPair, Error, Mesh, Scenario, Trajectory,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::{write_file, Command, RunContext};

/// Files written by one command, in creation order.
#[derive(Debug, Clone, Default)]
pub struct Artifacts {
    pub files: Vec<PathBuf>,
}

pub(crate) fn dispatch(command: Command, ctx: &RunContext) -> Result<Artifacts, Error> {
    let mut out = Artifacts::default();
    let results = match command {
        Command::Simulate => simulate(ctx, &mut out)?,
        Command::Optimize => optimize(ctx, &mut out)?,
        Command::Gradcheck { tangent } => gradcheck(ctx, tangent, &mut out)?,
        Command::Convergence => convergence(ctx, &mut out)?,
    };
    let meta = metadata(command, ctx, results);
    let text = serde_json::to_string_pretty(&meta).map_err(|e| Error::Format(e.to_string()))? + "\n";
    write_file(&ctx.out_dir, "metadata.json", &text, &mut out)?;
    Ok(out)
}

/// One row per time level: integrals, total population, minima and maxima.
pub fn timeseries_csv(scenario: &Scenario, trajectory: &Trajectory) -> String {
    let mesh = scenario.mesh();
    let mut text = csv_line([
        "t", "int_s", "int_e", "int_i", "int_r", "total", "min_s", "min_e", "min_i", "min_r", "max_s", "max_e",
        "max_i", "max_r",
    ]);
    for (k, state) in trajectory.states.iter().enumerate() {
        let mut row = vec![fmt_f64(scenario.time().time(k))];
        let ints: Vec<f64> = Compartment::ALL.iter().map(|&c| mesh.integrate(state.field(c))).collect();
        row.extend(ints.iter().map(|&v| fmt_f64(v)));
        row.push(fmt_f64(mesh.integrate(&state.total_density())));
        row.extend(Compartment::ALL.iter().map(|&c| fmt_f64(state.field(c).min())));
        row.extend(Compartment::ALL.iter().map(|&c| fmt_f64(state.field(c).max())));
        text.push_str(&csv_line(row));
    }
    text
}

fn state_snapshots(ctx: &RunContext, trajectory: &Trajectory, out: &mut Artifacts) -> Result<(), Error> {
    if !ctx.config.raw.output.snapshots {
        return Ok(());
    }
    let mesh = ctx.config.scenario.mesh();
    let last = trajectory.levels() - 1;
    for (name, level) in [("state_initial.csv", 0), ("state_final.csv", last)] {
        let snap = Snapshot::of_state(mesh, level, &trajectory.states[level])?;
        write_file(&ctx.out_dir, name, &snap.to_csv(), out)?;
    }
    Ok(())
}

fn adjoint_snapshots(ctx: &RunContext, adjoint: &AdjointTrajectory, out: &mut Artifacts) -> Result<(), Error> {
    let mesh = ctx.config.scenario.mesh();
    let last = adjoint.states.len() - 1;
    let mut levels = vec![0, last / 2, last];
    levels.dedup();
    for level in levels {
        let st = &adjoint.states[level];
        let snap = Snapshot::new(mesh, level, &[("p", &st.p), ("q", &st.q), ("w", &st.w), ("z", &st.z)])?;
        write_file(&ctx.out_dir, &format!("adjoint/level_{level:06}.csv"), &snap.to_csv(), out)?;
    }
    Ok(())
}

fn simulate(ctx: &RunContext, out: &mut Artifacts) -> Result<Value, Error> {
    let scenario = &ctx.config.scenario;
    let controls = ctx.config.initial_controls();
    let trajectory = solve_forward(scenario, &controls)?;
    write_file(&ctx.out_dir, "timeseries.csv", &timeseries_csv(scenario, &trajectory), out)?;
    state_snapshots(ctx, &trajectory, out)?;
    let cost = evaluate_cost(scenario, &trajectory, &controls);
    if ctx.dump_adjoint {
        let adjoint = solve_adjoint(scenario, &trajectory, &controls)?;
        adjoint_snapshots(ctx, &adjoint, out)?;
    }
    let totals = epictrl_core::total_population(scenario, &trajectory);
    let drift = totals.iter().map(|t| (t - totals[0]).abs()).fold(0.0, f64::max);
    Ok(json!({
        "controls": format!("{:?}", ctx.config.raw.control.initial_guess).to_lowercase(),
        "cost": cost,
        "max_population_drift": drift,
    }))
}

fn controls_csv(scenario: &Scenario, controls: &ControlPair) -> String {
    let mut text = csv_line(["step", "t", "cell", "u_i", "u_e"]);
    for n in 0..scenario.steps() {
        let t = fmt_f64(scenario.time().time(n));
        for (c, (ui, ue)) in controls.u_i.at(n).iter().zip(controls.u_e.at(n)).enumerate() {
            text.push_str(&csv_line([n.to_string(), t.clone(), c.to_string(), fmt_f64(*ui), fmt_f64(*ue)]));
        }
    }
    text
}

fn optimize(ctx: &RunContext, out: &mut Artifacts) -> Result<Value, Error> {
    let scenario = &ctx.config.scenario;
    let options = ctx.config.raw.optimizer;
    let report = projected_gradient_descent(scenario, &ctx.config.initial_controls(), &options)?;

    let mut text = csv_line([
        "iteration", "cost", "cost_terminal", "cost_control", "vi_residual", "step_length", "backtracks",
    ]);
    for r in &report.iterations {
        text.push_str(&csv_line([
            r.iteration.to_string(),
            fmt_f64(r.cost.total),
            fmt_f64(r.cost.terminal),
            fmt_f64(r.cost.control),
            fmt_f64(r.vi_residual),
            fmt_f64(r.step_length),
            r.backtracks.to_string(),
        ]));
    }
    write_file(&ctx.out_dir, "iterations.csv", &text, out)?;
    write_file(&ctx.out_dir, "controls.csv", &controls_csv(scenario, &report.controls), out)?;
    let mesh = scenario.mesh();
    if scenario.steps() > 0 {
        for (name, step) in [("control_first.csv", 0), ("control_last.csv", scenario.steps() - 1)] {
            let snap = Snapshot::new(
                mesh,
                step,
                &[("u_i", report.controls.u_i.at(step)), ("u_e", report.controls.u_e.at(step))],
            )?;
            write_file(&ctx.out_dir, name, &snap.to_csv(), out)?;
        }
    }
    write_file(&ctx.out_dir, "timeseries.csv", &timeseries_csv(scenario, &report.trajectory), out)?;
    state_snapshots(ctx, &report.trajectory, out)?;
    if ctx.dump_adjoint {
        adjoint_snapshots(ctx, &report.adjoint, out)?;
    }
    let last = report.final_record();
    Ok(json!({
        "termination": report.termination,
        "iterations": report.iterations.len() - 1,
        "final_cost": last.cost,
        "final_vi_residual": last.vi_residual,
        "projection_fixed_point_gap":
            projection_fixed_point_gap(scenario, &report.controls, &report.trajectory, &report.adjoint),
    }))
}

/// Uniform `[-1, 1]` entries, reproducible from `seed` and the direction index.
fn random_direction(scenario: &Scenario, seed: u64, index: usize) -> ControlPair {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    let mut h = scenario.zero_controls();
    for v in h.u_i.as_mut_slice().iter_mut().chain(h.u_e.as_mut_slice()) {
        *v = rng.gen_range(-1.0..=1.0);
    }
    h
}

fn gradcheck(ctx: &RunContext, tangent: bool, out: &mut Artifacts) -> Result<Value, Error> {
    let scenario = &ctx.config.scenario;
    let opts = &ctx.config.raw.gradcheck;
    let controls = ctx.config.initial_controls();
    let trajectory = solve_forward(scenario, &controls)?;
    let adjoint = solve_adjoint(scenario, &trajectory, &controls)?;
    let gradient = reduced_gradient(scenario, &trajectory, &adjoint, &controls)?;

    let rows = (0..opts.directions)
        .into_par_iter()
        .map(|k| {
            let h = random_direction(scenario, ctx.config.raw.seed, k);
            let adj = gradient_directional_derivative(scenario, &gradient, &h);
            let fd = fd_directional_derivative(scenario, &controls, &h, opts.fd_epsilon)?;
            Ok((k, adj, fd))
        })
        .collect::<Result<Vec<_>, Error>>()?;
    let mut text = csv_line(["direction", "adjoint", "finite_difference", "relative_error"]);
    let mut worst: f64 = 0.0;
    for (k, adj, fd) in &rows {
        let rel = if *fd != 0.0 { ((adj - fd) / fd).abs() } else { (adj - fd).abs() };
        worst = worst.max(rel);
        text.push_str(&csv_line([k.to_string(), fmt_f64(*adj), fmt_f64(*fd), fmt_f64(rel)]));
    }
    write_file(&ctx.out_dir, "gradient.csv", &text, out)?;
    if ctx.dump_adjoint {
        adjoint_snapshots(ctx, &adjoint, out)?;
    }

    let mut results = json!({ "directions": opts.directions, "max_relative_error": worst });
    if tangent {
        let h = random_direction(scenario, ctx.config.raw.seed, 0);
        let table = frechet_remainder_check(scenario, &controls, &h, &opts.epsilons)?;
        let mut text = csv_line(["epsilon", "remainder", "remainder_half", "ratio"]);
        for r in &table {
            text.push_str(&csv_line([
                fmt_f64(r.epsilon),
                fmt_f64(r.remainder),
                fmt_f64(r.remainder_half),
                fmt_f64(r.ratio),
            ]));
        }
        write_file(&ctx.out_dir, "remainder.csv", &text, out)?;
        results["remainder_rows"] = json!(table.len());
    }
    Ok(results)
}

fn convergence(ctx: &RunContext, out: &mut Artifacts) -> Result<Value, Error> {
    let scenario = &ctx.config.scenario;
    let controls = ctx.config.initial_controls();
    let rows = convergence_study(scenario, &controls, &ctx.tau_list)?;
    let opt = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
    let mut text = csv_line(["tau", "error", "order", "conservation_defect", "defect_order"]);
    for r in &rows {
        text.push_str(&csv_line([
            fmt_f64(r.tau),
            fmt_f64(r.error),
            opt(r.order),
            fmt_f64(r.conservation_defect),
            opt(r.defect_order),
        ]));
    }
    write_file(&ctx.out_dir, "convergence.csv", &text, out)?;
    Ok(json!({ "tau": ctx.tau_list }))
}

fn mesh_block(mesh: &Mesh) -> Value {
    json!({
        "dimension": mesh.dimension(),
        "cells": mesh.cells_per_axis(),
        "lengths": mesh.domain_lengths(),
    })
}

fn metadata(command: Command, ctx: &RunContext, results: Value) -> Value {
    let sc = &ctx.config.scenario;
    let raw = &ctx.config.raw;
    json!({
        "tool": "epictrl",
        "version": env!("CARGO_PKG_VERSION"),
        "command": command.name(),
        "config": { "file": ctx.config_name, "sha256": ctx.config_hash },
        "overrides": { "dt": ctx.dt_override, "dump_adjoint": ctx.dump_adjoint },
        "mesh": mesh_block(sc.mesh()),
        "time": { "horizon": sc.time().horizon(), "steps": sc.steps(), "dt": sc.dt() },
        "scheme": {
            "space": "cell-centred finite volumes, zero-flux boundary, arithmetic-mean face conductance",
            "forward": "backward Euler sweep s, e, i, r with implicit sinks and lagged waning",
            "adjoint": "backward Euler sweep z, w, q, p on the continuous costate system",
            "delay": "interval-wise sweep i, r, s, e with lagged exposed compartment",
        },
        "solver": { "description": sc.solver().describe(), "settings": sc.solver() },
        "optimizer": raw.optimizer,
        "gradcheck": raw.gradcheck,
        "seed": raw.seed,
        "threads": crate::thread_cap(),
        "results": results,
    })
}
