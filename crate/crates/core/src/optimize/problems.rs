use crate::elasticity::evaluate_scenarios;
use crate::error::NlpError;
use crate::field::NodalField;
use crate::functionals::{lumped_mass, perimeter_energy, volume};
use crate::mesh::{BoundaryKind, QuadMesh};
use crate::scalar::axpy;
use crate::stochastic::{
    dominance_constraints, smoothed_constraint_values, Benchmark, CostModel, DominanceConstraints, DominanceOrder, Scenario,
    SmoothingParams,
};

use super::nlp::NlpProblem;

/// Axis-aligned rectangle where the phase field is held at 1.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Strip {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl Strip {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        const TOL: f64 = 1e-12;
        x >= self.x0 - TOL && x <= self.x1 + TOL && y >= self.y0 - TOL && y <= self.y1 + TOL
    }
}

/// Conforming phase nodes held at 1: every Neumann node and every node in a strip.
pub fn pinned_dofs(mesh: &QuadMesh, strips: &[Strip]) -> Vec<bool> {
    let mut pinned = vec![false; mesh.num_dofs()];
    for d in mesh.neumann_dofs() {
        pinned[d] = true;
    }
    for (d, p) in pinned.iter_mut().enumerate() {
        let (x, y) = mesh.dof_position(d);
        if strips.iter().any(|s| s.contains(x, y)) {
            *p = true;
        }
    }
    pinned
}

/// Sets pinned values to 1.
pub fn apply_pins(v: &mut NodalField<f64>, pinned: &[bool]) {
    for (d, &p) in pinned.iter().enumerate() {
        if p {
            v.set(d, 0, 1.0);
        }
    }
}

/// Nodes with no pin, used to check the Neumann invariant in tests.
pub fn neumann_nodes_pinned(mesh: &QuadMesh, pinned: &[bool]) -> bool {
    mesh.neumann_segments().iter().all(|&s| {
        mesh.boundary_edges(BoundaryKind::Neumann(s)).iter().all(|&(a, b, _)| {
            [a, b].iter().all(|&n| match mesh.nodes()[n].kind {
                crate::mesh::NodeKind::Conforming { dof } => pinned[dof],
                crate::mesh::NodeKind::Hanging { parents } => parents.iter().all(|&p| pinned[p]),
            })
        })
    })
}

fn box_bounds(n: usize, enabled: bool) -> Option<(Vec<f64>, Vec<f64>)> {
    enabled.then(|| (vec![-1.2; n], vec![1.2; n]))
}

/// `min Σ_k π_k J_k(V)` without constraints; used to generate benchmarks.
pub struct ExpectedCostProblem<'a> {
    mesh: &'a QuadMesh,
    scenarios: &'a [Scenario],
    model: CostModel,
    mass: Vec<f64>,
    bounded: bool,
}

impl<'a> ExpectedCostProblem<'a> {
    pub fn new(mesh: &'a QuadMesh, scenarios: &'a [Scenario], model: CostModel, bounded: bool) -> Self {
        Self { mesh, scenarios, model, mass: lumped_mass(mesh), bounded }
    }
}

impl NlpProblem for ExpectedCostProblem<'_> {
    fn num_variables(&self) -> usize {
        self.mesh.num_dofs()
    }
    fn num_constraints(&self) -> usize {
        0
    }
    fn objective(&mut self, x: &[f64]) -> Result<(f64, Vec<f64>), NlpError> {
        let v = field(self.mesh, x)?;
        let loads: Vec<_> = self.scenarios.iter().map(|s| s.load.clone()).collect();
        let m = &self.model;
        let ev = evaluate_scenarios(self.mesh, &v, m.material, m.solver, m.weights, m.epsilon, &loads, true)
            .map_err(|e| NlpError::Callback(e.to_string()))?;
        let mut f = 0.0;
        let mut g = vec![0.0; x.len()];
        for ((s, st), gk) in self.scenarios.iter().zip(&ev.states).zip(ev.gradients.as_ref().expect("gradients")) {
            f += s.probability * st.cost;
            crate::scalar::axpy(s.probability, gk.values(), &mut g);
        }
        Ok((f, g))
    }
    fn constraints(&mut self, _: &[f64]) -> Result<(Vec<f64>, Vec<Vec<f64>>), NlpError> {
        Ok((vec![], vec![]))
    }
    fn metric(&self) -> Option<Vec<f64>> {
        Some(self.mass.clone())
    }
    fn bounds(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        box_bounds(self.mesh.num_dofs(), self.bounded)
    }
}

fn field(mesh: &QuadMesh, x: &[f64]) -> Result<NodalField<f64>, NlpError> {
    NodalField::from_values(mesh, 1, x.to_vec()).map_err(|_| NlpError::Dimension { expected: mesh.num_dofs(), got: x.len() })
}

/// `G(V) = 𝐕(V) + ε_G 𝐋^ε(V)`.
pub fn objective_g(mesh: &QuadMesh, v: &NodalField<f64>, epsilon: f64, objective_epsilon: f64) -> (f64, NodalField<f64>) {
    let (vol, dv) = volume(mesh, v);
    let (per, dl) = perimeter_energy(mesh, v, epsilon);
    let g: Vec<f64> = dv.values().iter().zip(dl.values()).map(|(a, b)| a + objective_epsilon * b).collect();
    (vol + objective_epsilon * per, NodalField::from_values(mesh, 1, g).expect("sized to mesh"))
}

/// `min G(V)` subject to the smoothed dominance constraints against a benchmark.
///
/// Constraint rows are returned as `c_j / scale`, where the scale is 1 for first
/// order and the benchmark cost scale for second order, so that all rows are
/// dimensionless. A positive `shift` evaluates the candidate's side of every row
/// with all costs raised by `shift` (equivalently at `η_j − shift`), a strictly
/// tighter system used to buy slack in the exact predicates.
pub struct DominanceProblem<'a> {
    pub mesh: &'a QuadMesh,
    pub scenarios: &'a [Scenario],
    pub benchmark: &'a Benchmark<f64>,
    pub order: DominanceOrder,
    pub smoothing: SmoothingParams,
    pub model: CostModel,
    pub objective_epsilon: f64,
    pub shift: f64,
    pub bounded: bool,
    mass: Vec<f64>,
    cache: Option<(Vec<f64>, DominanceConstraints<f64>)>,
}

impl<'a> DominanceProblem<'a> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        mesh: &'a QuadMesh,
        scenarios: &'a [Scenario],
        benchmark: &'a Benchmark<f64>,
        order: DominanceOrder,
        smoothing: SmoothingParams,
        model: CostModel,
        objective_epsilon: f64,
    ) -> Self {
        Self {
            mesh,
            scenarios,
            benchmark,
            order,
            smoothing,
            model,
            objective_epsilon,
            shift: 0.0,
            bounded: false,
            mass: lumped_mass(mesh),
            cache: None,
        }
    }

    pub fn row_scale(&self) -> f64 {
        match self.order {
            DominanceOrder::First => 1.0,
            DominanceOrder::Second => self.benchmark.cost_scale(&self.smoothing),
        }
    }

    /// Unscaled smoothed constraints, costs and gradients at `x` (cached).
    pub fn evaluate(&mut self, x: &[f64]) -> Result<&DominanceConstraints<f64>, NlpError> {
        let hit = matches!(&self.cache, Some((cx, _)) if cx.as_slice() == x);
        if !hit {
            let v = field(self.mesh, x)?;
            let dc = dominance_constraints(
                self.mesh,
                &v,
                self.scenarios,
                self.benchmark,
                self.order,
                &self.smoothing,
                &self.model,
            )
            .map_err(|e| NlpError::Callback(e.to_string()))?;
            self.cache = Some((x.to_vec(), dc));
        }
        Ok(&self.cache.as_ref().expect("filled").1)
    }
}

impl NlpProblem for DominanceProblem<'_> {
    fn num_variables(&self) -> usize {
        self.mesh.num_dofs()
    }
    fn num_constraints(&self) -> usize {
        self.benchmark.thresholds().len()
    }
    fn objective(&mut self, x: &[f64]) -> Result<(f64, Vec<f64>), NlpError> {
        let v = field(self.mesh, x)?;
        let (f, g) = objective_g(self.mesh, &v, self.model.epsilon, self.objective_epsilon);
        Ok((f, g.into_values()))
    }
    fn constraints(&mut self, x: &[f64]) -> Result<(Vec<f64>, Vec<Vec<f64>>), NlpError> {
        let scale = self.row_scale();
        let shift = self.shift;
        let (benchmark, order, smoothing) = (self.benchmark, self.order, self.smoothing);
        let probs: Vec<f64> = self.scenarios.iter().map(|s| s.probability).collect();
        let dc = self.evaluate(x)?;
        if shift == 0.0 {
            let c = dc.values.iter().map(|c| c / scale).collect();
            let jac = dc.gradients.iter().map(|g| g.values().iter().map(|v| v / scale).collect()).collect();
            return Ok((c, jac));
        }
        let raised: Vec<f64> = dc.costs.iter().map(|c| c + shift).collect();
        let sv = smoothed_constraint_values(&raised, &probs, benchmark, order, &smoothing);
        let c = sv.values.iter().map(|c| c / scale).collect();
        let jac = sv
            .d_costs
            .iter()
            .map(|row| {
                let mut g = vec![0.0; x.len()];
                for (w, gk) in row.iter().zip(&dc.cost_gradients) {
                    axpy(w / scale, gk.values(), &mut g);
                }
                g
            })
            .collect();
        Ok((c, jac))
    }
    fn metric(&self) -> Option<Vec<f64>> {
        Some(self.mass.clone())
    }
    fn bounds(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        box_bounds(self.mesh.num_dofs(), self.bounded)
    }
}
