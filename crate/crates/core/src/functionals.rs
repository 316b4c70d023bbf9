//! Phase-field functionals: double well, characteristic approximation,
//! Modica–Mortola perimeter and smoothed volume, each with its exact discrete
//! gradient with respect to the conforming nodal values.

use crate::element::CellQuadrature;
use crate::field::NodalField;
use crate::mesh::{NodeKind, QuadMesh};
use crate::scalar::Real;

/// `Ψ(v) = 9/16 (v² − 1)²` and its derivative.
#[inline]
pub fn double_well<T: Real>(v: T) -> (T, T) {
    let w = v * v - T::one();
    (T::lit(9.0 / 16.0) * w * w, T::lit(9.0 / 4.0) * v * w)
}

/// `χ(v) = ¼ (v + 1)²` and its derivative.
#[inline]
pub fn char_approx<T: Real>(v: T) -> (T, T) {
    let s = v + T::one();
    (T::lit(0.25) * s * s, T::lit(0.5) * s)
}

/// Interface width parameters and their refinement schedule.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhaseFieldParams {
    pub epsilon: f64,
    pub epsilon_factor: f64,
    pub epsilon_min: f64,
}

impl PhaseFieldParams {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.epsilon_min > 0.0 && self.epsilon_min <= self.epsilon) {
            return Err(format!("need 0 < epsilon_min <= epsilon, got {} and {}", self.epsilon_min, self.epsilon));
        }
        if !(self.epsilon_factor > 0.0 && self.epsilon_factor < 1.0) {
            return Err(format!("epsilon_factor must lie in (0, 1), got {}", self.epsilon_factor));
        }
        Ok(())
    }

    /// Next value of the schedule, floored at `epsilon_min`.
    pub fn shrink(&self, eps: f64) -> f64 {
        (eps * self.epsilon_factor).max(self.epsilon_min)
    }
}

impl Default for PhaseFieldParams {
    fn default() -> Self {
        Self { epsilon: 0.025, epsilon_factor: 0.75, epsilon_min: 7.91e-3 }
    }
}

/// Weights of the volume and perimeter terms in the per-scenario cost.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CostWeights {
    pub nu: f64,
    pub eta_weight: f64,
}

impl Default for CostWeights {
    fn default() -> Self {
        Self { nu: 0.04096, eta_weight: 0.00064 }
    }
}

/// Adds a local vertex contribution to the conforming gradient.
#[inline]
pub(crate) fn scatter<T: Real>(kind: NodeKind, g: T, comps: usize, comp: usize, out: &mut [T]) {
    match kind {
        NodeKind::Conforming { dof } => out[dof * comps + comp] += g,
        NodeKind::Hanging { parents: [p, q] } => {
            let h = T::lit(0.5) * g;
            out[p * comps + comp] += h;
            out[q * comps + comp] += h;
        }
    }
}

/// `∫ φ_p dx` for every conforming basis function.
pub fn lumped_mass<T: Real>(mesh: &QuadMesh) -> Vec<T> {
    let mut m = vec![T::zero(); mesh.num_dofs()];
    for c in 0..mesh.num_cells() {
        let (hx, hy) = mesh.cell_size(c);
        let quarter = T::lit(0.25 * hx * hy);
        for k in mesh.cell_constraints(c) {
            scatter(k, quarter, 1, 0, &mut m);
        }
    }
    m
}

/// Discrete perimeter energy `½ ∫ ε|∇V|² + ε⁻¹ I_h(Ψ(V))` and its gradient.
pub fn perimeter_energy<T: Real>(mesh: &QuadMesh, v: &NodalField<T>, epsilon: T) -> (T, NodalField<T>) {
    debug_assert_eq!(v.mesh_id(), mesh.id());
    let psi = v.map(|x| double_well(x).0);
    let mut grad = vec![T::zero(); mesh.num_dofs()];
    let mut dpsi_weight = vec![T::zero(); mesh.num_dofs()];
    let half = T::lit(0.5);
    let mut total = T::zero();
    for c in 0..mesh.num_cells() {
        let (hx, hy) = mesh.cell_size(c);
        let quad = CellQuadrature::<T>::new(hx, hy);
        let kinds = mesh.cell_constraints(c);
        let vl = v.cell_values(mesh, c, 0);
        let pl = psi.cell_values(mesh, c, 0);
        let mut local = [T::zero(); 4];
        let mut mass = [T::zero(); 4];
        for q in 0..4 {
            let (gx, gy) = quad.gradient(q, &vl);
            let ip = quad.value(q, &pl);
            total += quad.w[q] * half * (epsilon * (gx * gx + gy * gy) + ip / epsilon);
            for a in 0..4 {
                let (dx, dy) = quad.dn[q][a];
                local[a] += quad.w[q] * epsilon * (gx * dx + gy * dy);
                mass[a] += quad.w[q] * quad.n[q][a];
            }
        }
        for a in 0..4 {
            scatter(kinds[a], local[a], 1, 0, &mut grad);
            scatter(kinds[a], mass[a], 1, 0, &mut dpsi_weight);
        }
    }
    let scale = half / epsilon;
    for (d, g) in grad.iter_mut().enumerate() {
        *g += scale * dpsi_weight[d] * double_well(v.get(d, 0)).1;
    }
    let gf = NodalField::from_values(mesh, 1, grad).expect("gradient sized to mesh");
    (total, gf)
}

/// Smoothed volume `∫ χ(V)` with `χ` composed at the quadrature points.
pub fn volume<T: Real>(mesh: &QuadMesh, v: &NodalField<T>) -> (T, NodalField<T>) {
    debug_assert_eq!(v.mesh_id(), mesh.id());
    let mut grad = vec![T::zero(); mesh.num_dofs()];
    let mut total = T::zero();
    for c in 0..mesh.num_cells() {
        let (hx, hy) = mesh.cell_size(c);
        let quad = CellQuadrature::<T>::new(hx, hy);
        let kinds = mesh.cell_constraints(c);
        let vl = v.cell_values(mesh, c, 0);
        let mut local = [T::zero(); 4];
        for q in 0..4 {
            let (chi, dchi) = char_approx(quad.value(q, &vl));
            total += quad.w[q] * chi;
            for a in 0..4 {
                local[a] += quad.w[q] * dchi * quad.n[q][a];
            }
        }
        for a in 0..4 {
            scatter(kinds[a], local[a], 1, 0, &mut grad);
        }
    }
    (total, NodalField::from_values(mesh, 1, grad).expect("gradient sized to mesh"))
}
