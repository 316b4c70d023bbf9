//! Phase-field weighted linearized elasticity: assembly, equilibrium solves,
//! energies, the reduced cost with its adjoint-based shape gradient, and
//! von Mises stresses.
//!
//! Displacement unknowns are numbered `2 * dof + component` over the conforming
//! nodes; hanging nodes are eliminated through their ½/½ edge constraint and
//! Dirichlet unknowns are removed symmetrically.


use rayon::prelude::*;

use crate::element::{gauss_points_1d, CellQuadrature};
use crate::error::{ElasticityError, LinalgError};
use crate::field::NodalField;
use crate::functionals::{char_approx, perimeter_energy, scatter, volume, CostWeights};
use crate::linalg::{conjugate_gradient, nested_dissection, CsrMatrix, SparseCholesky};
use crate::mesh::{BoundaryKind, NodeKind, QuadMesh};
use crate::scalar::{norm2, Real};

/// Lamé parameters and the ersatz-material factor.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MaterialParams {
    pub lambda: f64,
    pub mu: f64,
    pub delta: f64,
}

impl MaterialParams {
    pub fn validate(&self) -> Result<(), ElasticityError> {
        if !(self.mu > 0.0) || !(self.lambda >= 0.0) {
            return Err(ElasticityError::InvalidMaterial(format!(
                "need mu > 0 and lambda >= 0, got lambda={} mu={}",
                self.lambda, self.mu
            )));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(ElasticityError::InvalidMaterial(format!("delta must lie in (0, 1), got {}", self.delta)));
        }
        Ok(())
    }
}

impl Default for MaterialParams {
    fn default() -> Self {
        Self { lambda: 80.0, mu: 80.0, delta: 1e-4 }
    }
}

/// Piecewise constant traction per Neumann segment.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct SurfaceLoad {
    pub tractions: Vec<(usize, [f64; 2])>,
}

impl SurfaceLoad {
    pub fn single(segment: usize, force: [f64; 2]) -> Self {
        Self { tractions: vec![(segment, force)] }
    }

    pub fn is_zero(&self) -> bool {
        self.tractions.iter().all(|(_, g)| g[0] == 0.0 && g[1] == 0.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LinearSolver {
    /// Sparse Cholesky under a geometric nested-dissection ordering.
    Direct,
    /// Jacobi-preconditioned CG with relative tolerance and an iteration cap of
    /// `cap_factor * sqrt(n)`.
    ConjugateGradient { tol: f64, cap_factor: f64 },
}

impl Default for LinearSolver {
    fn default() -> Self {
        LinearSolver::Direct
    }
}

/// Relative residual above which a displacement is not accepted as an equilibrium.
pub const EQUILIBRIUM_RESIDUAL_TOL: f64 = 1e-8;

#[derive(Clone, Debug)]
enum Factor<T> {
    Direct(SparseCholesky<T>),
    Iterative { tol: f64, cap: usize },
}

/// Assembled stiffness of `U ↦ W^δ[V, U]` on all conforming displacement unknowns,
/// together with the reduced (free-free) system and its factorisation.
#[derive(Clone, Debug)]
pub struct ElasticOperator<T> {
    mesh_id: u64,
    full: CsrMatrix<T>,
    reduced: CsrMatrix<T>,
    free: Vec<Option<usize>>,
    nfree: usize,
    material: MaterialParams,
    factor: Factor<T>,
}

/// Operator plus the load functional of one scenario.
#[derive(Clone, Debug)]
pub struct ElasticSystem<T> {
    pub operator: ElasticOperator<T>,
    pub load: Vec<T>,
}

/// Solution of one scenario.
#[derive(Clone, Debug)]
pub struct EquilibriumState<T> {
    pub scenario: usize,
    pub displacement: NodalField<T>,
    pub energy: T,
    pub compliance: T,
    pub cost: T,
}

/// Per-cell material coefficient `(1 − δ) I_h(χ(V)) + δ` at the four Gauss points.
fn coefficients<T: Real>(quad: &CellQuadrature<T>, chi: &[T; 4], delta: T) -> [T; 4] {
    let mut c = [T::zero(); 4];
    for (q, cq) in c.iter_mut().enumerate() {
        *cq = (T::one() - delta) * quad.value(q, chi) + delta;
    }
    c
}

/// Element stiffness for unit coefficient at each Gauss point, local index `2a + i`.
fn gauss_point_stiffness<T: Real>(quad: &CellQuadrature<T>, q: usize, lambda: T, mu: T) -> [[T; 8]; 8] {
    let mut k = [[T::zero(); 8]; 8];
    let dn = &quad.dn[q];
    for a in 0..4 {
        let ga = [dn[a].0, dn[a].1];
        for b in 0..4 {
            let gb = [dn[b].0, dn[b].1];
            let dot = ga[0] * gb[0] + ga[1] * gb[1];
            for i in 0..2 {
                for j in 0..2 {
                    let mut v = lambda * (ga[i] * gb[j]) + mu * (ga[j] * gb[i]);
                    if i == j {
                        v += mu * dot;
                    }
                    k[2 * a + i][2 * b + j] = quad.w[q] * v;
                }
            }
        }
    }
    k
}

/// Constrained expansion of a local vertex into `(dof, weight)` pairs.
fn expand<T: Real>(kind: NodeKind) -> ([(usize, T); 2], usize) {
    match kind {
        NodeKind::Conforming { dof } => ([(dof, T::one()), (0, T::zero())], 1),
        NodeKind::Hanging { parents: [p, q] } => ([(p, T::lit(0.5)), (q, T::lit(0.5))], 2),
    }
}

/// Strain `(e11, e22, e12)` at Gauss point `q`.
fn strain<T: Real>(quad: &CellQuadrature<T>, q: usize, ux: &[T; 4], uy: &[T; 4]) -> (T, T, T) {
    let (dux, duy) = quad.gradient(q, ux);
    let (dvx, dvy) = quad.gradient(q, uy);
    (dux, dvy, T::lit(0.5) * (duy + dvx))
}

/// Strain energy density `Cε:ε`.
#[inline]
fn energy_density<T: Real>(e: (T, T, T), lambda: T, mu: T) -> T {
    let tr = e.0 + e.1;
    lambda * tr * tr + T::lit(2.0) * mu * (e.0 * e.0 + e.1 * e.1 + T::lit(2.0) * e.2 * e.2)
}

impl<T: Real> ElasticOperator<T> {
    /// Assembles the Hessian of `U ↦ W^δ[V, U]` and factorises the reduced system.
    pub fn new(
        mesh: &QuadMesh,
        v: &NodalField<T>,
        material: MaterialParams,
        solver: LinearSolver,
    ) -> Result<Self, ElasticityError> {
        material.validate()?;
        v.check_mesh(mesh)?;
        let dirichlet = mesh.dirichlet_dofs();
        if dirichlet.is_empty() {
            return Err(ElasticityError::EmptyDirichlet);
        }
        let n = 2 * mesh.num_dofs();
        let mut free = vec![Some(0); n];
        for d in &dirichlet {
            free[2 * d] = None;
            free[2 * d + 1] = None;
        }
        let mut nfree = 0;
        for f in free.iter_mut().flatten() {
            *f = nfree;
            nfree += 1;
        }

        let mut rows: Vec<Vec<usize>> = vec![Vec::new(); n];
        for c in 0..mesh.num_cells() {
            let mut dofs: Vec<usize> = Vec::with_capacity(8);
            for k in mesh.cell_constraints(c) {
                let (e, m) = expand::<T>(k);
                dofs.extend(e[..m].iter().map(|x| x.0));
            }
            for &p in &dofs {
                for i in 0..2 {
                    rows[2 * p + i].extend(dofs.iter().flat_map(|&q| [2 * q, 2 * q + 1]));
                }
            }
        }
        let mut full = CsrMatrix::from_pattern(rows);

        let chi = v.map(|x| char_approx(x).0);
        let (lambda, mu, delta) = (T::lit(material.lambda), T::lit(material.mu), T::lit(material.delta));
        for c in 0..mesh.num_cells() {
            let (hx, hy) = mesh.cell_size(c);
            let quad = CellQuadrature::<T>::new(hx, hy);
            let coef = coefficients(&quad, &chi.cell_values(mesh, c, 0), delta);
            let mut ke = [[T::zero(); 8]; 8];
            for q in 0..4 {
                let kq = gauss_point_stiffness(&quad, q, lambda, mu);
                for r in 0..8 {
                    for s in 0..8 {
                        ke[r][s] += coef[q] * kq[r][s];
                    }
                }
            }
            let kinds = mesh.cell_constraints(c);
            for a in 0..4 {
                let (ea, ma) = expand::<T>(kinds[a]);
                for b in 0..4 {
                    let (eb, mb) = expand::<T>(kinds[b]);
                    for &(p, wp) in &ea[..ma] {
                        for &(q, wq) in &eb[..mb] {
                            for i in 0..2 {
                                for j in 0..2 {
                                    full.add(2 * p + i, 2 * q + j, wp * wq * ke[2 * a + i][2 * b + j]);
                                }
                            }
                        }
                    }
                }
            }
        }

        full.symmetrize();
        let reduced = full.principal_submatrix(&free, nfree);
        let factor = match solver {
            LinearSolver::Direct => {
                let mut coords = vec![(0.0, 0.0); nfree];
                for (k, f) in free.iter().enumerate() {
                    if let Some(i) = f {
                        coords[*i] = mesh.dof_position(k / 2);
                    }
                }
                let perm = nested_dissection(&reduced, &coords);
                Factor::Direct(SparseCholesky::factor_with_ordering(&reduced, perm)?)
            }
            LinearSolver::ConjugateGradient { tol, cap_factor } => Factor::Iterative {
                tol,
                cap: ((cap_factor * (nfree as f64).sqrt()).ceil() as usize).max(1),
            },
        };
        Ok(Self { mesh_id: mesh.id(), full, reduced, free, nfree, material, factor })
    }

    pub fn mesh_id(&self) -> u64 {
        self.mesh_id
    }

    pub fn material(&self) -> MaterialParams {
        self.material
    }

    /// Stiffness over all conforming unknowns (Dirichlet rows included).
    pub fn full_matrix(&self) -> &CsrMatrix<T> {
        &self.full
    }

    /// Stiffness over the free unknowns.
    pub fn reduced_matrix(&self) -> &CsrMatrix<T> {
        &self.reduced
    }

    pub fn num_free(&self) -> usize {
        self.nfree
    }

    pub fn free_index(&self, unknown: usize) -> Option<usize> {
        self.free[unknown]
    }

    /// Effective right-hand side on the free unknowns for Dirichlet lifting `ud`.
    fn reduced_rhs(&self, load: &[T], ud: &[T]) -> Vec<T> {
        let mut kud = vec![T::zero(); ud.len()];
        self.full.matvec(ud, &mut kud);
        let mut b = vec![T::zero(); self.nfree];
        for (k, f) in self.free.iter().enumerate() {
            if let Some(i) = f {
                b[*i] = load[k] - kud[k];
            }
        }
        b
    }

    /// Solves `K U = f` with `U = ud` on the Dirichlet unknowns (zero when `ud` is `None`).
    pub fn solve_with_lifting(
        &self,
        mesh: &QuadMesh,
        load: &[T],
        ud: Option<&[T]>,
    ) -> Result<NodalField<T>, ElasticityError> {
        if mesh.id() != self.mesh_id {
            return Err(crate::error::MeshError::FieldMismatch { field: self.mesh_id, mesh: mesh.id() }.into());
        }
        let n = self.free.len();
        if load.len() != n {
            return Err(LinalgError::Dimension { expected: n, got: load.len() }.into());
        }
        // only the Dirichlet entries of the lifting are used
        let mut lift = vec![T::zero(); n];
        if let Some(ud) = ud {
            for k in 0..n {
                if self.free[k].is_none() {
                    lift[k] = ud[k];
                }
            }
        }
        let ud = &lift;
        let b = self.reduced_rhs(load, ud);
        let x = match &self.factor {
            Factor::Direct(ch) => ch.solve(&b)?,
            Factor::Iterative { tol, cap } => conjugate_gradient(&self.reduced, &b, T::lit(*tol), *cap)?.x,
        };
        let mut u = vec![T::zero(); n];
        for k in 0..n {
            u[k] = match self.free[k] {
                Some(i) => x[i],
                None => ud[k],
            };
        }
        Ok(NodalField::from_values(mesh, 2, u)?)
    }

    pub fn solve(&self, mesh: &QuadMesh, load: &[T]) -> Result<NodalField<T>, ElasticityError> {
        self.solve_with_lifting(mesh, load, None)
    }

    /// `W = ½ Uᵀ K U`.
    pub fn energy(&self, u: &NodalField<T>) -> T {
        let mut ku = vec![T::zero(); u.values().len()];
        self.full.matvec(u.values(), &mut ku);
        T::lit(0.5) * u.values().iter().zip(&ku).fold(T::zero(), |acc, (a, b)| acc + *a * *b)
    }

    /// Relative residual of the free equations.
    pub fn residual(&self, u: &NodalField<T>, load: &[T]) -> T {
        let mut ku = vec![T::zero(); u.values().len()];
        self.full.matvec(u.values(), &mut ku);
        let (mut r, mut f, mut k) = (Vec::new(), Vec::new(), Vec::new());
        for (idx, fr) in self.free.iter().enumerate() {
            if fr.is_some() {
                r.push(ku[idx] - load[idx]);
                f.push(load[idx]);
                k.push(ku[idx]);
            }
        }
        let scale = norm2(&f).max(norm2(&k));
        if scale == T::zero() {
            T::zero()
        } else {
            norm2(&r) / scale
        }
    }
}

/// Load functional `U ↦ ∫_{Γ_N} I_h(g·U)` as a vector over all conforming unknowns.
pub fn neumann_load<T: Real>(mesh: &QuadMesh, load: &SurfaceLoad) -> Result<Vec<T>, ElasticityError> {
    let mut f = vec![T::zero(); 2 * mesh.num_dofs()];
    let segments = mesh.neumann_segments();
    for &(seg, g) in &load.tractions {
        if !segments.contains(&seg) {
            return Err(ElasticityError::UnknownSegment(seg));
        }
        for (a, b, len) in mesh.boundary_edges(BoundaryKind::Neumann(seg)) {
            let (ka, kb) = (mesh.nodes()[a].kind, mesh.nodes()[b].kind);
            for (t, w) in gauss_points_1d() {
                for i in 0..2 {
                    let gi = T::lit(g[i] * w * len);
                    scatter(ka, gi * T::lit(1.0 - t), 2, i, &mut f);
                    scatter(kb, gi * T::lit(t), 2, i, &mut f);
                }
            }
        }
    }
    Ok(f)
}

/// Assembles the operator and the load functional of one scenario.
pub fn assemble_system<T: Real>(
    mesh: &QuadMesh,
    v: &NodalField<T>,
    material: MaterialParams,
    load: &SurfaceLoad,
    solver: LinearSolver,
) -> Result<ElasticSystem<T>, ElasticityError> {
    let operator = ElasticOperator::new(mesh, v, material, solver)?;
    let load = neumann_load(mesh, load)?;
    Ok(ElasticSystem { operator, load })
}

/// Equilibrium displacement with homogeneous Dirichlet data.
pub fn solve_equilibrium<T: Real>(mesh: &QuadMesh, system: &ElasticSystem<T>) -> Result<NodalField<T>, ElasticityError> {
    system.operator.solve(mesh, &system.load)
}

/// Compliance `C[U] = f · U`.
pub fn compliance<T: Real>(load: &[T], u: &NodalField<T>) -> T {
    load.iter().zip(u.values()).fold(T::zero(), |acc, (f, x)| acc + *f * *x)
}

/// `J = 2W + ν V + η L^ε`.
pub fn cost_j<T: Real>(
    mesh: &QuadMesh,
    v: &NodalField<T>,
    u: &NodalField<T>,
    operator: &ElasticOperator<T>,
    weights: CostWeights,
    epsilon: T,
) -> T {
    let w = operator.energy(u);
    let (vol, _) = volume(mesh, v);
    let (per, _) = perimeter_energy(mesh, v, epsilon);
    T::lit(2.0) * w + T::lit(weights.nu) * vol + T::lit(weights.eta_weight) * per
}

/// `∂W/∂V` at fixed displacement.
pub fn energy_phase_derivative<T: Real>(
    mesh: &QuadMesh,
    v: &NodalField<T>,
    u: &NodalField<T>,
    material: MaterialParams,
) -> Vec<T> {
    let (lambda, mu) = (T::lit(material.lambda), T::lit(material.mu));
    let scale = T::lit(0.5 * (1.0 - material.delta));
    let mut dchi = vec![T::zero(); mesh.num_dofs()];
    for c in 0..mesh.num_cells() {
        let (hx, hy) = mesh.cell_size(c);
        let quad = CellQuadrature::<T>::new(hx, hy);
        let ux = u.cell_values(mesh, c, 0);
        let uy = u.cell_values(mesh, c, 1);
        let kinds = mesh.cell_constraints(c);
        let mut local = [T::zero(); 4];
        for q in 0..4 {
            let e = energy_density(strain(&quad, q, &ux, &uy), lambda, mu);
            for a in 0..4 {
                local[a] += quad.w[q] * quad.n[q][a] * e;
            }
        }
        for a in 0..4 {
            scatter(kinds[a], scale * local[a], 1, 0, &mut dchi);
        }
    }
    for (d, g) in dchi.iter_mut().enumerate() {
        *g *= char_approx(v.get(d, 0)).1;
    }
    dchi
}

/// Total derivative of `V ↦ J[V, U[V]]` for an equilibrium `U`.
///
/// With the adjoint `P = 2U` the elastic part reduces to `−2 ∂_V W`.
pub fn cost_gradient<T: Real>(
    mesh: &QuadMesh,
    v: &NodalField<T>,
    u: &NodalField<T>,
    system: &ElasticSystem<T>,
    weights: CostWeights,
    epsilon: T,
) -> Result<NodalField<T>, ElasticityError> {
    let res = system.operator.residual(u, &system.load);
    if !(res.as_f64() <= EQUILIBRIUM_RESIDUAL_TOL) {
        return Err(ElasticityError::NotEquilibrium { residual: res.as_f64() });
    }
    let (_, dv) = volume(mesh, v);
    let (_, dl) = perimeter_energy(mesh, v, epsilon);
    let mut g = phase_gradient(&dv, &dl, weights);
    let dw = energy_phase_derivative(mesh, v, u, system.operator.material());
    for (gi, w) in g.iter_mut().zip(dw) {
        *gi -= T::lit(2.0) * w;
    }
    Ok(NodalField::from_values(mesh, 1, g)?)
}

fn phase_gradient<T: Real>(dv: &NodalField<T>, dl: &NodalField<T>, weights: CostWeights) -> Vec<T> {
    let (nu, eta) = (T::lit(weights.nu), T::lit(weights.eta_weight));
    dv.values().iter().zip(dl.values()).map(|(a, b)| nu * *a + eta * *b).collect()
}

/// Costs (and optionally gradients) of every scenario for a fixed phase field.
#[derive(Clone, Debug)]
pub struct ScenarioEvaluation<T> {
    pub states: Vec<EquilibriumState<T>>,
    pub gradients: Option<Vec<NodalField<T>>>,
}

impl<T: Real> ScenarioEvaluation<T> {
    pub fn costs(&self) -> Vec<T> {
        self.states.iter().map(|s| s.cost).collect()
    }
}

/// Solves every scenario against one factorisation of the operator. Scenario solves
/// run in parallel; results are returned in scenario order.
pub fn evaluate_scenarios<T: Real>(
    mesh: &QuadMesh,
    v: &NodalField<T>,
    material: MaterialParams,
    solver: LinearSolver,
    weights: CostWeights,
    epsilon: T,
    loads: &[SurfaceLoad],
    with_gradients: bool,
) -> Result<ScenarioEvaluation<T>, ElasticityError> {
    let operator = ElasticOperator::new(mesh, v, material, solver)?;
    let (vol, dv) = volume(mesh, v);
    let (per, dl) = perimeter_energy(mesh, v, epsilon);
    let phase_cost = T::lit(weights.nu) * vol + T::lit(weights.eta_weight) * per;
    let common = with_gradients.then(|| phase_gradient(&dv, &dl, weights));

    let results: Vec<Result<(EquilibriumState<T>, Option<NodalField<T>>), ElasticityError>> = loads
        .par_iter()
        .enumerate()
        .map(|(k, load)| {
            let wrap = |e: ElasticityError| ElasticityError::Scenario { scenario: k, source: Box::new(e) };
            let f = neumann_load(mesh, load).map_err(wrap)?;
            let u = operator.solve(mesh, &f).map_err(wrap)?;
            let energy = operator.energy(&u);
            let c = compliance(&f, &u);
            let state = EquilibriumState {
                scenario: k,
                energy,
                compliance: c,
                cost: T::lit(2.0) * energy + phase_cost,
                displacement: u,
            };
            let grad = match &common {
                None => None,
                Some(base) => {
                    let res = operator.residual(&state.displacement, &f);
                    if !(res.as_f64() <= EQUILIBRIUM_RESIDUAL_TOL) {
                        return Err(wrap(ElasticityError::NotEquilibrium { residual: res.as_f64() }));
                    }
                    let dw = energy_phase_derivative(mesh, v, &state.displacement, material);
                    let g: Vec<T> = base.iter().zip(dw).map(|(b, w)| *b - T::lit(2.0) * w).collect();
                    Some(NodalField::from_values(mesh, 1, g).map_err(|e| wrap(e.into()))?)
                }
            };
            Ok((state, grad))
        })
        .collect();

    let mut states = Vec::with_capacity(loads.len());
    let mut grads = with_gradients.then(|| Vec::with_capacity(loads.len()));
    for r in results {
        let (s, g) = r?;
        states.push(s);
        if let (Some(gs), Some(g)) = (grads.as_mut(), g) {
            gs.push(g);
        }
    }
    Ok(ScenarioEvaluation { states, gradients: grads })
}

/// Nodal von Mises stress and the same field restricted to the hard phase
/// (`χ(V) > ½`, NaN elsewhere).
pub fn von_mises_field<T: Real>(
    mesh: &QuadMesh,
    v: &NodalField<T>,
    u: &NodalField<T>,
    material: MaterialParams,
) -> (NodalField<T>, NodalField<T>) {
    let (lambda, mu) = (T::lit(material.lambda), T::lit(material.mu));
    let mut acc = vec![[T::zero(); 3]; mesh.num_dofs()];
    let mut count = vec![0usize; mesh.num_dofs()];
    for c in 0..mesh.num_cells() {
        let (hx, hy) = mesh.cell_size(c);
        let quad = CellQuadrature::<T>::new(hx, hy);
        let ux = u.cell_values(mesh, c, 0);
        let uy = u.cell_values(mesh, c, 1);
        let mut s = [T::zero(); 3];
        for q in 0..4 {
            let e = strain(&quad, q, &ux, &uy);
            let tr = e.0 + e.1;
            s[0] += T::lit(0.25) * (lambda * tr + T::lit(2.0) * mu * e.0);
            s[1] += T::lit(0.25) * (lambda * tr + T::lit(2.0) * mu * e.1);
            s[2] += T::lit(0.25) * (T::lit(2.0) * mu * e.2);
        }
        for k in mesh.cell_constraints(c) {
            if let NodeKind::Conforming { dof } = k {
                for i in 0..3 {
                    acc[dof][i] += s[i];
                }
                count[dof] += 1;
            }
        }
    }
    let vm: Vec<T> = acc
        .iter()
        .zip(&count)
        .map(|(s, &n)| {
            let n = T::from_count(n.max(1));
            let (a, b, c) = (s[0] / n, s[1] / n, s[2] / n);
            (a * a - a * b + b * b + T::lit(3.0) * c * c).sqrt()
        })
        .collect();
    let masked: Vec<T> = vm
        .iter()
        .enumerate()
        .map(|(d, &s)| if char_approx(v.get(d, 0)).0 > T::lit(0.5) { s } else { T::nan() })
        .collect();
    (
        NodalField::from_values(mesh, 1, vm).expect("sized to mesh"),
        NodalField::from_values(mesh, 1, masked).expect("sized to mesh"),
    )
}
