#![allow(dead_code)]

use epictrl_core::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct Setup {
    pub cells: usize,
    pub steps: usize,
    pub horizon: f64,
    pub gamma: f64,
    pub kappa: f64,
    pub threshold: f64,
    pub rates: RateConstants,
    pub bounds: (f64, f64),
}

impl Default for Setup {
    fn default() -> Self {
        Self {
            cells: 32,
            steps: 1000,
            horizon: 1.0,
            gamma: 0.1,
            kappa: 0.01,
            threshold: 0.05,
            rates: RateConstants {
                sigma: 0.2,
                phi_e: 0.1,
                phi_r: 0.4,
            },
            bounds: (1.0, 0.5),
        }
    }
}

/// Gaussian bump `base + amp * exp(-(x - c)^2 / 0.02)` on the unit interval.
pub fn bump(mesh: &Mesh, center: f64, amp: f64, base: f64) -> Field {
    Field::from_fn(mesh, |x| base + amp * (-(x[0] - center).powi(2) / 0.02).exp())
}

impl Setup {
    pub fn mesh(&self) -> Mesh {
        Mesh::uniform_1d(self.cells, 1.0).unwrap()
    }

    /// Localised outbreak whose terminal load exceeds the default threshold.
    pub fn outbreak(&self) -> Scenario {
        let mesh = self.mesh();
        let initial = InitialData {
            s: bump(&mesh, 0.5, -0.3, 0.9),
            e: bump(&mesh, 0.3, 0.1, 0.02),
            i: bump(&mesh, 0.7, 0.15, 0.02),
            r: Field::constant(&mesh, 0.0),
        };
        self.build(initial)
    }

    pub fn build(&self, initial: InitialData) -> Scenario {
        validate_scenario(ScenarioInput {
            mesh: self.mesh(),
            time: TimeGrid::new(self.horizon, self.steps).unwrap(),
            rates: self.rates,
            waning: WaningRate::constant(self.gamma, self.steps),
            diffusion: DiffusionSpec::uniform(self.kappa),
            initial,
            bounds: ControlBounds::constant(self.cells, self.steps, self.bounds.0, self.bounds.1),
            threshold: self.threshold,
            solver: LinearSolver::Direct,
        })
        .unwrap()
    }
}

/// Smooth space-time direction, the same function of `(t, x)` on every grid.
pub fn smooth_direction(scenario: &Scenario) -> ControlPair {
    let mut h = scenario.zero_controls();
    let mesh = scenario.mesh();
    for n in 0..scenario.steps() {
        let t = scenario.time().time(n);
        for c in 0..mesh.num_cells() {
            let x = mesh.cell_center(c)[0];
            h.u_i.at_mut(n)[c] = (3.0 * x + t).sin();
            h.u_e.at_mut(n)[c] = 0.5 * (2.0 * t - x).cos();
        }
    }
    h
}

/// Uniform random entries in `[-1, 1]`.
pub fn random_direction(scenario: &Scenario, rng: &mut ChaCha8Rng) -> ControlPair {
    let mut h = scenario.zero_controls();
    for v in h.u_i.as_mut_slice().iter_mut().chain(h.u_e.as_mut_slice()) {
        *v = rng.gen_range(-1.0..=1.0);
    }
    h
}

/// Uniform random admissible controls.
pub fn random_controls(scenario: &Scenario, rng: &mut ChaCha8Rng) -> ControlPair {
    let b = scenario.bounds();
    let mut u = scenario.zero_controls();
    for (v, m) in u.u_i.as_mut_slice().iter_mut().zip(b.u_i_max.as_slice()) {
        *v = rng.gen_range(0.0..=*m);
    }
    for (v, m) in u.u_e.as_mut_slice().iter_mut().zip(b.u_e_max.as_slice()) {
        *v = rng.gen_range(0.0..=*m);
    }
    u
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Closed-form `(e(t), i(t))` of the uncontrolled uniform system with no waning.
pub fn linear_ode(rates: &RateConstants, e0: f64, i0: f64, t: f64) -> (f64, f64) {
    let a = rates.sigma + rates.phi_e;
    let b = rates.phi_r;
    let e = e0 * (-a * t).exp();
    let i = i0 * (-b * t).exp() + rates.sigma * e0 * ((-a * t).exp() - (-b * t).exp()) / (b - a);
    (e, i)
}
