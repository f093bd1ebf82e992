//! Scenario builders shared by the benchmarks.

use epictrl_core::*;

/// Localised outbreak on the unit interval, above the default threshold.
pub fn reference_scenario(cells: usize, steps: usize) -> Scenario {
    let mesh = Mesh::uniform_1d(cells, 1.0).unwrap();
    let bump = |c: f64, a: f64, base: f64| Field::from_fn(&mesh, |x| base + a * (-(x[0] - c).powi(2) / 0.02).exp());
    let initial = InitialData {
        s: bump(0.5, -0.3, 0.9),
        e: bump(0.3, 0.1, 0.02),
        i: bump(0.7, 0.15, 0.02),
        r: Field::constant(&mesh, 0.0),
    };
    build(mesh, initial, steps, LinearSolver::Direct)
}

/// Square outbreak on a `cells x cells` grid.
pub fn planar_scenario(cells: usize, steps: usize) -> Scenario {
    let mesh = Mesh::new(2, &[cells, cells], &[1.0, 1.0]).unwrap();
    let bump = |cx: f64, cy: f64, a: f64, base: f64| {
        Field::from_fn(&mesh, |x| base + a * (-((x[0] - cx).powi(2) + (x[1] - cy).powi(2)) / 0.02).exp())
    };
    let initial = InitialData {
        s: Field::constant(&mesh, 0.85),
        e: bump(0.3, 0.3, 0.1, 0.0),
        i: bump(0.7, 0.6, 0.08, 0.0),
        r: Field::constant(&mesh, 0.0),
    };
    build(mesh, initial, steps, LinearSolver::Direct)
}

fn build(mesh: Mesh, initial: InitialData, steps: usize, solver: LinearSolver) -> Scenario {
    let cells = mesh.num_cells();
    validate_scenario(ScenarioInput {
        mesh,
        time: TimeGrid::new(1.0, steps).unwrap(),
        rates: RateConstants {
            sigma: 0.2,
            phi_e: 0.1,
            phi_r: 0.4,
        },
        waning: WaningRate::constant(0.1, steps),
        diffusion: DiffusionSpec::uniform(0.01),
        initial,
        bounds: ControlBounds::constant(cells, steps, 1.0, 0.5),
        threshold: 0.05,
        solver,
    })
    .expect("benchmark scenario is valid")
}
