//! Uniform cell-centred grids, cell fields, and the zero-flux diffusion operator.
//!
//! The diffusion operator is the two-point flux finite-volume discretisation of
//! `v -> -div(kappa grad v)` with homogeneous Neumann boundaries. Its matrix is
//! symmetric, has zero row sums and nonpositive off-diagonals, so every shifted
//! system `(m I + D + A)` with `m > 0`, `D >= 0` is a nonsingular M-matrix.

use std::ops::{Deref, DerefMut};

use serde::{Deserialize, Serialize};

use crate::error::{Error, NumericalError, Result, ValidationError};

/// Uniform rectangular grid in one or two dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    cells: Vec<usize>,
    lengths: Vec<f64>,
    spacing: Vec<f64>,
    cell_volume: f64,
}

impl Mesh {
    pub fn new(dimension: usize, cells_per_axis: &[usize], domain_lengths: &[f64]) -> Result<Self> {
        if !(1..=2).contains(&dimension) {
            return Err(Error::Config(format!(
                "mesh dimension must be 1 or 2 (got {dimension})"
            )));
        }
        if cells_per_axis.len() != dimension || domain_lengths.len() != dimension {
            return Err(Error::Config(format!(
                "mesh needs {dimension} cell counts and lengths (got {} and {})",
                cells_per_axis.len(),
                domain_lengths.len()
            )));
        }
        if let Some(&n) = cells_per_axis.iter().find(|&&n| n == 0) {
            return Err(Error::Config(format!("cell counts must be >= 1 (got {n})")));
        }
        if let Some(&l) = domain_lengths.iter().find(|&&l| !(l > 0.0 && l.is_finite())) {
            return Err(Error::Config(format!("domain lengths must be positive (got {l})")));
        }
        let spacing: Vec<f64> = cells_per_axis
            .iter()
            .zip(domain_lengths)
            .map(|(&n, &l)| l / n as f64)
            .collect();
        let cell_volume = domain_lengths.iter().product::<f64>()
            / cells_per_axis.iter().map(|&n| n as f64).product::<f64>();
        Ok(Self {
            cells: cells_per_axis.to_vec(),
            lengths: domain_lengths.to_vec(),
            spacing,
            cell_volume,
        })
    }

    pub fn uniform_1d(cells: usize, length: f64) -> Result<Self> {
        Self::new(1, &[cells], &[length])
    }

    pub fn dimension(&self) -> usize {
        self.cells.len()
    }

    pub fn cells_per_axis(&self) -> &[usize] {
        &self.cells
    }

    pub fn domain_lengths(&self) -> &[f64] {
        &self.lengths
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }

    pub fn num_cells(&self) -> usize {
        self.cells.iter().product()
    }

    pub fn cell_volume(&self) -> f64 {
        self.cell_volume
    }

    /// Measure of the whole domain.
    pub fn measure(&self) -> f64 {
        self.lengths.iter().product()
    }

    /// Cell centre coordinates; the second entry is zero in 1D.
    pub fn cell_center(&self, index: usize) -> [f64; 2] {
        let nx = self.cells[0];
        let (ix, iy) = (index % nx, index / nx);
        let x = (ix as f64 + 0.5) * self.spacing[0];
        let y = if self.dimension() == 2 {
            (iy as f64 + 0.5) * self.spacing[1]
        } else {
            0.0
        };
        [x, y]
    }

    /// Midpoint quadrature of a cell field over the domain.
    pub fn integrate(&self, field: &[f64]) -> f64 {
        self.cell_volume * field.iter().sum::<f64>()
    }

    /// Discrete `L^2(Omega)` inner product.
    pub fn inner(&self, a: &[f64], b: &[f64]) -> f64 {
        self.cell_volume * a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>()
    }

    pub fn l2_norm(&self, a: &[f64]) -> f64 {
        self.inner(a, a).sqrt()
    }

    fn bandwidth(&self) -> usize {
        if self.dimension() == 1 {
            1
        } else {
            self.cells[0]
        }
    }
}

/// Uniform partition of `[0, T]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    horizon: f64,
    steps: usize,
}

impl TimeGrid {
    /// A zero-step grid is accepted and yields single-level trajectories.
    pub fn new(horizon: f64, steps: usize) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::Config(format!("horizon T must be positive (got {horizon})")));
        }
        Ok(Self { horizon, steps })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps.max(1) as f64
    }

    pub fn time(&self, level: usize) -> f64 {
        if level == self.steps {
            self.horizon
        } else {
            level as f64 * self.dt()
        }
    }
}

/// One real value per mesh cell.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Field(Vec<f64>);

impl Field {
    pub fn zeros(len: usize) -> Self {
        Self(vec![0.0; len])
    }

    pub fn constant(mesh: &Mesh, value: f64) -> Self {
        Self(vec![value; mesh.num_cells()])
    }

    pub fn from_fn(mesh: &Mesh, f: impl Fn([f64; 2]) -> f64) -> Self {
        Self((0..mesh.num_cells()).map(|c| f(mesh.cell_center(c))).collect())
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn min(&self) -> f64 {
        self.0.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.0.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self(self.0.iter().map(|v| v * factor).collect())
    }
}

impl From<Vec<f64>> for Field {
    fn from(values: Vec<f64>) -> Self {
        Self(values)
    }
}

impl Deref for Field {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for Field {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

/// `v -> -div(kappa grad v)` with zero-flux boundaries, stored as face conductances.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionOperator {
    nx: usize,
    ny: usize,
    bandwidth: usize,
    /// Conductance of the face between cell `c` and `c + 1` (x direction).
    east: Vec<f64>,
    /// Conductance of the face between cell `c` and `c + nx` (y direction).
    north: Vec<f64>,
    diag: Vec<f64>,
}

/// Assemble the diffusion operator, checking `kappa_lo <= kappa <= kappa_hi` cellwise.
pub fn assemble_diffusion(
    mesh: &Mesh,
    kappa: &[f64],
    kappa_lo: f64,
    kappa_hi: f64,
) -> Result<DiffusionOperator> {
    if !(kappa_lo > 0.0 && kappa_lo <= kappa_hi && kappa_hi.is_finite()) {
        return Err(ValidationError::KappaBounds {
            lo: kappa_lo,
            hi: kappa_hi,
        }
        .into());
    }
    if kappa.len() != mesh.num_cells() {
        return Err(ValidationError::Shape {
            what: "kappa".into(),
            expected: mesh.num_cells(),
            got: kappa.len(),
        }
        .into());
    }
    if let Some(&k) = kappa.iter().find(|&&k| !(k >= kappa_lo && k <= kappa_hi)) {
        return Err(ValidationError::KappaOutOfBounds {
            name: "kappa".into(),
            value: k,
            lo: kappa_lo,
            hi: kappa_hi,
        }
        .into());
    }
    Ok(DiffusionOperator::from_coefficients(mesh, kappa))
}

impl DiffusionOperator {
    /// Assemble without bound checks; `kappa` must be positive.
    pub fn from_coefficients(mesh: &Mesh, kappa: &[f64]) -> Self {
        let nx = mesh.cells_per_axis()[0];
        let ny = if mesh.dimension() == 2 {
            mesh.cells_per_axis()[1]
        } else {
            1
        };
        let n = nx * ny;
        let hx2 = mesh.spacing()[0].powi(2);
        let mut east = vec![0.0; n];
        let mut north = vec![0.0; n];
        let mut diag = vec![0.0; n];
        for iy in 0..ny {
            for ix in 0..nx {
                let c = iy * nx + ix;
                if ix + 1 < nx {
                    let g = 0.5 * (kappa[c] + kappa[c + 1]) / hx2;
                    east[c] = g;
                    diag[c] += g;
                    diag[c + 1] += g;
                }
                if mesh.dimension() == 2 && iy + 1 < ny {
                    let hy2 = mesh.spacing()[1].powi(2);
                    let g = 0.5 * (kappa[c] + kappa[c + nx]) / hy2;
                    north[c] = g;
                    diag[c] += g;
                    diag[c + nx] += g;
                }
            }
        }
        Self {
            nx,
            ny,
            bandwidth: mesh.bandwidth(),
            east,
            north,
            diag,
        }
    }

    /// Operator with unit coefficient; `<A v, v>` is the discrete `H^1` seminorm squared.
    pub fn unit(mesh: &Mesh) -> Self {
        Self::from_coefficients(mesh, &vec![1.0; mesh.num_cells()])
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    /// Infinity norm of the matrix (twice the largest diagonal).
    pub fn norm_inf(&self) -> f64 {
        2.0 * self.diag.iter().copied().fold(0.0, f64::max)
    }

    pub fn diagonal(&self) -> &[f64] {
        &self.diag
    }

    pub fn apply(&self, v: &[f64]) -> Field {
        let mut out = Field::zeros(self.len());
        self.apply_into(v, &mut out);
        out
    }

    fn apply_into(&self, v: &[f64], out: &mut [f64]) {
        for (c, o) in out.iter_mut().enumerate() {
            *o = self.diag[c] * v[c];
        }
        for c in 0..self.len() {
            let g = self.east[c];
            if g != 0.0 {
                out[c] -= g * v[c + 1];
                out[c + 1] -= g * v[c];
            }
            let g = self.north[c];
            if g != 0.0 {
                out[c] -= g * v[c + self.nx];
                out[c + self.nx] -= g * v[c];
            }
        }
    }

    /// Dense copy of the matrix, row-major. Intended for small test problems.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let n = self.len();
        let mut m = vec![vec![0.0; n]; n];
        for c in 0..n {
            m[c][c] = self.diag[c];
            if self.east[c] != 0.0 {
                m[c][c + 1] = -self.east[c];
                m[c + 1][c] = -self.east[c];
            }
            if self.north[c] != 0.0 {
                m[c][c + self.nx] = -self.north[c];
                m[c + self.nx][c] = -self.north[c];
            }
        }
        m
    }

    fn off_diagonal(&self, row: usize, col: usize) -> f64 {
        debug_assert!(col < row);
        if col + 1 == row && !row.is_multiple_of(self.nx) {
            -self.east[col]
        } else if col + self.nx == row && self.ny > 1 {
            -self.north[col]
        } else {
            0.0
        }
    }
}

/// How shifted diffusion systems are solved.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum LinearSolver {
    /// Banded LDL^T factorisation (tridiagonal in 1D).
    #[default]
    Direct,
    /// Jacobi-preconditioned conjugate gradients.
    ConjugateGradient { rel_tol: f64, max_iter: usize },
}

impl LinearSolver {
    pub fn cg() -> Self {
        LinearSolver::ConjugateGradient {
            rel_tol: 1e-12,
            max_iter: 10_000,
        }
    }

    pub fn describe(&self) -> String {
        match self {
            LinearSolver::Direct => "direct banded LDL^T".into(),
            LinearSolver::ConjugateGradient { rel_tol, max_iter } => {
                format!("jacobi-pcg rel_tol={rel_tol:e} max_iter={max_iter}")
            }
        }
    }
}

/// A prepared system `(mass_scale I + diag(reaction) + A)`, reusable for many right-hand sides.
#[derive(Debug, Clone)]
pub struct ImplicitSystem<'a> {
    op: &'a DiffusionOperator,
    shift: Vec<f64>,
    method: Method,
}

#[derive(Debug, Clone)]
enum Method {
    Direct(BandLdl),
    Cg { rel_tol: f64, max_iter: usize },
}

impl<'a> ImplicitSystem<'a> {
    pub fn new(
        op: &'a DiffusionOperator,
        mass_scale: f64,
        reaction_diag: &[f64],
        solver: LinearSolver,
    ) -> Result<Self> {
        if !(mass_scale > 0.0) {
            return Err(Error::Precondition(format!(
                "mass_scale must be positive (got {mass_scale})"
            )));
        }
        if reaction_diag.len() != op.len() {
            return Err(ValidationError::Shape {
                what: "reaction diagonal".into(),
                expected: op.len(),
                got: reaction_diag.len(),
            }
            .into());
        }
        let shift: Vec<f64> = reaction_diag.iter().map(|d| mass_scale + d).collect();
        let method = match solver {
            LinearSolver::Direct => Method::Direct(BandLdl::factor(op, &shift)?),
            LinearSolver::ConjugateGradient { rel_tol, max_iter } => Method::Cg { rel_tol, max_iter },
        };
        Ok(Self { op, shift, method })
    }

    pub fn apply(&self, v: &[f64]) -> Field {
        let mut out = self.op.apply(v);
        for (o, (s, x)) in out.iter_mut().zip(self.shift.iter().zip(v)) {
            *o += s * x;
        }
        out
    }

    pub fn solve(&self, rhs: &[f64]) -> Result<Field> {
        match &self.method {
            Method::Direct(f) => Ok(f.solve(rhs)),
            Method::Cg { rel_tol, max_iter } => self.solve_cg(rhs, *rel_tol, *max_iter),
        }
    }

    fn solve_cg(&self, rhs: &[f64], rel_tol: f64, max_iter: usize) -> Result<Field> {
        let n = rhs.len();
        let precond: Vec<f64> = (0..n).map(|c| 1.0 / (self.shift[c] + self.op.diag[c])).collect();
        let b_norm = rhs.iter().map(|v| v * v).sum::<f64>().sqrt();
        let mut x: Vec<f64> = rhs.iter().zip(&precond).map(|(b, m)| b * m).collect();
        if b_norm == 0.0 {
            return Ok(Field::zeros(n));
        }
        let ax = self.apply(&x);
        let mut r: Vec<f64> = rhs.iter().zip(ax.iter()).map(|(b, a)| b - a).collect();
        let mut z: Vec<f64> = r.iter().zip(&precond).map(|(r, m)| r * m).collect();
        let mut p = z.clone();
        let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let mut ap = Field::zeros(n);
        for it in 0..=max_iter {
            let res = r.iter().map(|v| v * v).sum::<f64>().sqrt() / b_norm;
            if res <= rel_tol {
                return Ok(Field::from(x));
            }
            if it == max_iter {
                return Err(NumericalError::SolverDidNotConverge {
                    iterations: it,
                    residual: res,
                }
                .into());
            }
            self.op.apply_into(&p, &mut ap);
            for c in 0..n {
                ap[c] += self.shift[c] * p[c];
            }
            let alpha = rz / p.iter().zip(ap.iter()).map(|(a, b)| a * b).sum::<f64>();
            for c in 0..n {
                x[c] += alpha * p[c];
                r[c] -= alpha * ap[c];
                z[c] = r[c] * precond[c];
            }
            let rz_new: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
            let beta = rz_new / rz;
            rz = rz_new;
            for c in 0..n {
                p[c] = z[c] + beta * p[c];
            }
        }
        unreachable!()
    }
}

/// Solve `(mass_scale I + diag(reaction_diag) + A) v = rhs` with the direct solver.
pub fn solve_implicit(
    op: &DiffusionOperator,
    mass_scale: f64,
    reaction_diag: &[f64],
    rhs: &[f64],
) -> Result<Field> {
    solve_implicit_with(op, mass_scale, reaction_diag, rhs, LinearSolver::Direct)
}

pub fn solve_implicit_with(
    op: &DiffusionOperator,
    mass_scale: f64,
    reaction_diag: &[f64],
    rhs: &[f64],
    solver: LinearSolver,
) -> Result<Field> {
    if let Some(&d) = reaction_diag.iter().find(|&&d| !(d >= 0.0)) {
        return Err(Error::Precondition(format!(
            "reaction diagonal must be nonnegative (got {d})"
        )));
    }
    ImplicitSystem::new(op, mass_scale, reaction_diag, solver)?.solve(rhs)
}

/// Banded `L D L^T` factorisation of `diag(shift) + A`.
///
/// For an M-matrix every `L` entry is nonpositive and every pivot positive, so
/// both triangular sweeps map nonnegative vectors to nonnegative vectors
/// without cancellation.
#[derive(Debug, Clone)]
struct BandLdl {
    n: usize,
    bw: usize,
    /// Row `i` holds `L[i][i-bw..i]` at offsets `0..bw`.
    lower: Vec<f64>,
    pivots: Vec<f64>,
}

impl BandLdl {
    fn factor(op: &DiffusionOperator, shift: &[f64]) -> Result<Self> {
        let n = op.len();
        let bw = op.bandwidth.min(n.saturating_sub(1)).max(1);
        let mut lower = vec![0.0; n * bw];
        let mut pivots = vec![0.0; n];
        for i in 0..n {
            let first = i.saturating_sub(bw);
            for j in first..i {
                let mut s = op.off_diagonal(i, j);
                let kfirst = first.max(j.saturating_sub(bw));
                for k in kfirst..j {
                    s -= lower[i * bw + k + bw - i] * pivots[k] * lower[j * bw + k + bw - j];
                }
                lower[i * bw + j + bw - i] = s / pivots[j];
            }
            let mut d = shift[i] + op.diag[i];
            for k in first..i {
                let l = lower[i * bw + k + bw - i];
                d -= l * l * pivots[k];
            }
            if !(d > 0.0) {
                return Err(NumericalError::NotPositiveDefinite { row: i, pivot: d }.into());
            }
            pivots[i] = d;
        }
        Ok(Self {
            n,
            bw,
            lower,
            pivots,
        })
    }

    fn solve(&self, rhs: &[f64]) -> Field {
        let (n, bw) = (self.n, self.bw);
        let mut y = rhs.to_vec();
        for i in 0..n {
            let first = i.saturating_sub(bw);
            let mut s = y[i];
            for k in first..i {
                s -= self.lower[i * bw + k + bw - i] * y[k];
            }
            y[i] = s;
        }
        for (v, d) in y.iter_mut().zip(&self.pivots) {
            *v /= d;
        }
        for i in (0..n).rev() {
            let last = (i + bw).min(n - 1);
            let mut s = y[i];
            for k in i + 1..=last {
                s -= self.lower[k * bw + i + bw - k] * y[k];
            }
            y[i] = s;
        }
        Field::from(y)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
        let n = b.len();
        for col in 0..n {
            let piv = (col..n)
                .max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs()))
                .unwrap();
            a.swap(col, piv);
            b.swap(col, piv);
            for row in col + 1..n {
                let f = a[row][col] / a[col][col];
                for k in col..n {
                    a[row][k] -= f * a[col][k];
                }
                b[row] -= f * b[col];
            }
        }
        let mut x = vec![0.0; n];
        for row in (0..n).rev() {
            let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
            x[row] = (b[row] - s) / a[row][row];
        }
        x
    }

    #[test]
    fn build_mesh_examples() {
        let m = Mesh::new(1, &[4], &[1.0]).unwrap();
        assert_eq!(m.num_cells(), 4);
        assert_eq!(m.cell_volume(), 0.25);
        let m = Mesh::new(2, &[8, 8], &[1.0, 1.0]).unwrap();
        assert_eq!(m.num_cells(), 64);
        assert_eq!(m.cell_volume(), 1.0 / 64.0);
        assert!(matches!(
            Mesh::new(3, &[2, 2, 2], &[1.0, 1.0, 1.0]),
            Err(Error::Config(_))
        ));
        assert!(Mesh::new(1, &[0], &[1.0]).is_err());
        assert!(Mesh::new(1, &[3], &[-1.0]).is_err());
    }

    #[test]
    fn integrate_examples() {
        let m = Mesh::uniform_1d(4, 1.0).unwrap();
        assert_eq!(m.integrate(&Field::constant(&m, 1.0)), 1.0);
        assert_eq!(m.integrate(&[1.0, 2.0, 3.0, 4.0]), 2.5);
        let m = Mesh::new(2, &[3, 5], &[2.0, 1.5]).unwrap();
        assert!((m.integrate(&Field::constant(&m, 0.7)) - 0.7 * 3.0).abs() < 1e-14);
    }

    #[test]
    fn uniform_stencil_1d() {
        let m = Mesh::uniform_1d(3, 3.0).unwrap();
        let kappa = 0.5;
        let op = assemble_diffusion(&m, &[kappa; 3], 0.1, 1.0).unwrap();
        let h2 = 1.0;
        let dense = op.to_dense();
        assert_eq!(dense[1], vec![-kappa / h2, 2.0 * kappa / h2, -kappa / h2]);
        assert_eq!(dense[0], vec![kappa / h2, -kappa / h2, 0.0]);
        for row in &dense {
            assert_eq!(row.iter().sum::<f64>(), 0.0);
        }
        assert!(op.apply(&[2.5; 3]).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn kappa_bound_guard() {
        let m = Mesh::uniform_1d(3, 1.0).unwrap();
        let err = assemble_diffusion(&m, &[0.5, 0.05, 0.5], 0.1, 1.0).unwrap_err();
        assert!(matches!(
            err,
            Error::Validation(ValidationError::KappaOutOfBounds { .. })
        ));
    }

    #[test]
    fn scalar_solve() {
        let m = Mesh::uniform_1d(1, 1.0).unwrap();
        let op = DiffusionOperator::from_coefficients(&m, &[1.0]);
        let v = solve_implicit(&op, 1.0, &[0.5], &[3.0]).unwrap();
        assert_eq!(v[0], 2.0);
    }

    #[test]
    fn direct_and_cg_match_dense_in_2d() {
        let m = Mesh::new(2, &[5, 4], &[1.0, 0.8]).unwrap();
        let kappa: Vec<f64> = (0..20).map(|c| 0.1 + 0.03 * (c % 7) as f64).collect();
        let op = DiffusionOperator::from_coefficients(&m, &kappa);
        let react: Vec<f64> = (0..20).map(|c| 0.2 * (c % 3) as f64).collect();
        let rhs: Vec<f64> = (0..20).map(|c| (c as f64 * 0.37).sin()).collect();
        let mut dense = op.to_dense();
        for c in 0..20 {
            dense[c][c] += 10.0 + react[c];
        }
        let expected = dense_solve(dense, rhs.clone());
        let direct = solve_implicit(&op, 10.0, &react, &rhs).unwrap();
        let cg = solve_implicit_with(&op, 10.0, &react, &rhs, LinearSolver::cg()).unwrap();
        for c in 0..20 {
            assert!((direct[c] - expected[c]).abs() < 1e-13);
            assert!((cg[c] - expected[c]).abs() < 1e-11);
        }
    }

    #[test]
    fn round_trip_recovers_known_solution() {
        let m = Mesh::uniform_1d(12, 1.0).unwrap();
        let kappa: Vec<f64> = (0..12).map(|c| 0.01 + 0.002 * c as f64).collect();
        let op = DiffusionOperator::from_coefficients(&m, &kappa);
        let react = vec![0.3; 12];
        let w: Vec<f64> = (0..12).map(|c| 1.0 + (c as f64).cos()).collect();
        let sys = ImplicitSystem::new(&op, 100.0, &react, LinearSolver::Direct).unwrap();
        let rhs = sys.apply(&w);
        let v = sys.solve(&rhs).unwrap();
        for c in 0..12 {
            assert!((v[c] - w[c]).abs() < 1e-13 * w[c].abs().max(1.0));
        }
    }

    #[test]
    fn negative_reaction_rejected() {
        let m = Mesh::uniform_1d(2, 1.0).unwrap();
        let op = DiffusionOperator::unit(&m);
        assert!(matches!(
            solve_implicit(&op, 1.0, &[0.0, -0.1], &[1.0, 1.0]),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn cg_reports_non_convergence() {
        let m = Mesh::uniform_1d(50, 1.0).unwrap();
        let op = DiffusionOperator::unit(&m);
        let rhs: Vec<f64> = (0..50).map(|c| (c as f64).sin()).collect();
        let solver = LinearSolver::ConjugateGradient {
            rel_tol: 1e-14,
            max_iter: 2,
        };
        let err = solve_implicit_with(&op, 1e-3, &[0.0; 50], &rhs, solver).unwrap_err();
        assert!(matches!(
            err,
            Error::Numerical(NumericalError::SolverDidNotConverge { iterations: 2, .. })
        ));
    }
}
