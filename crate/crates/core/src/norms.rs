//! Discrete space-time norms shared by the stability, sensitivity and delay studies.

use crate::mesh::{DiffusionOperator, Mesh};
use crate::model::ControlPair;

/// Anything made of four cell fields (state, tangent, costate).
pub trait Quadruplet {
    fn components(&self) -> [&[f64]; 4];
}

/// Evaluates `C([0,T];H)` and `L^2(0,T;V)` norms on level sequences.
#[derive(Debug, Clone)]
pub struct SpaceTimeNorms {
    mesh: Mesh,
    dt: f64,
    /// Unit-coefficient stencil; `<A v, v>` is the squared `V` seminorm.
    unit: DiffusionOperator,
}

impl SpaceTimeNorms {
    pub fn new(mesh: &Mesh, dt: f64) -> Self {
        Self {
            mesh: mesh.clone(),
            dt,
            unit: DiffusionOperator::unit(mesh),
        }
    }

    pub fn h_norm_sq(&self, v: &[f64]) -> f64 {
        self.mesh.inner(v, v)
    }

    pub fn v_seminorm_sq(&self, v: &[f64]) -> f64 {
        self.mesh.inner(&self.unit.apply(v), v).max(0.0)
    }

    fn level_diff<Q: Quadruplet>(a: &Q, b: Option<&Q>, scale_b: f64) -> [Vec<f64>; 4] {
        let ca = a.components();
        std::array::from_fn(|k| match b {
            Some(b) => {
                let cb = b.components();
                ca[k].iter().zip(cb[k]).map(|(x, y)| x - scale_b * y).collect()
            }
            None => ca[k].to_vec(),
        })
    }

    /// `max_k ||x_k||_H` over the four components.
    pub fn sup_h<Q: Quadruplet>(&self, levels: &[Q]) -> f64 {
        self.sup_h_of(levels.iter().map(|l| Self::level_diff(l, None, 0.0)))
    }

    fn sup_h_of(&self, levels: impl Iterator<Item = [Vec<f64>; 4]>) -> f64 {
        levels
            .map(|q| q.iter().map(|c| self.h_norm_sq(c)).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    }

    fn l2v_of(&self, levels: impl Iterator<Item = [Vec<f64>; 4]>) -> f64 {
        levels
            .skip(1)
            .map(|q| {
                q.iter()
                    .map(|c| self.h_norm_sq(c) + self.v_seminorm_sq(c))
                    .sum::<f64>()
                    * self.dt
            })
            .sum::<f64>()
            .sqrt()
    }

    /// `||x||_{C(H)} + ||x||_{L^2(V)}` of one level sequence.
    pub fn combined<Q: Quadruplet>(&self, levels: &[Q]) -> f64 {
        let it = || levels.iter().map(|l| Self::level_diff(l, None, 0.0));
        self.sup_h_of(it()) + self.l2v_of(it())
    }

    /// `||a - scale * b||` in the combined `C(H) ∩ L^2(V)` norm.
    pub fn combined_distance<Q: Quadruplet>(&self, a: &[Q], b: &[Q], scale: f64) -> f64 {
        let it = || a.iter().zip(b).map(|(x, y)| Self::level_diff(x, Some(y), scale));
        self.sup_h_of(it()) + self.l2v_of(it())
    }

    /// `max_k ||a_k - b_k||_H`.
    pub fn sup_h_distance<Q: Quadruplet>(&self, a: &[Q], b: &[Q]) -> f64 {
        self.sup_h_of(a.iter().zip(b).map(|(x, y)| Self::level_diff(x, Some(y), 1.0)))
    }

    /// `||R||` where `R = a - b - eps * t`, with `t` a sequence of another quadruplet type.
    pub fn combined_remainder<A: Quadruplet, B: Quadruplet, T: Quadruplet>(
        &self,
        a: &[A],
        b: &[B],
        t: &[T],
        eps: f64,
    ) -> f64 {
        let it = || {
            a.iter().zip(b).zip(t).map(|((x, y), z)| {
                let (cx, cy, cz) = (x.components(), y.components(), z.components());
                std::array::from_fn::<Vec<f64>, 4, _>(|k| {
                    (0..cx[k].len())
                        .map(|c| cx[k][c] - cy[k][c] - eps * cz[k][c])
                        .collect()
                })
            })
        };
        self.sup_h_of(it()) + self.l2v_of(it())
    }
}

/// Weighted inner product `sum dt * vol * (a_i b_i + a_e b_e)` on the control grid.
pub fn control_inner(mesh: &Mesh, dt: f64, a: &ControlPair, b: &ControlPair) -> f64 {
    let w = dt * mesh.cell_volume();
    let dot = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(p, q)| p * q).sum::<f64>();
    w * (dot(a.u_i.as_slice(), b.u_i.as_slice()) + dot(a.u_e.as_slice(), b.u_e.as_slice()))
}

/// Discrete `L^2(Q)` norm of a control pair.
pub fn control_norm(mesh: &Mesh, dt: f64, a: &ControlPair) -> f64 {
    control_inner(mesh, dt, a, a).sqrt()
}
