use std::fmt;
use std::str::FromStr;

use crate::elasticity::{evaluate_scenarios, LinearSolver, MaterialParams, SurfaceLoad};
use crate::error::StochasticError;
use crate::field::NodalField;
use crate::functionals::CostWeights;
use crate::mesh::QuadMesh;
use crate::scalar::Real;

use super::distribution::{CostDistribution, DistScalar};
use super::smoothing::{smoothed_heaviside, smoothed_max, SmoothingParams};

/// One load realisation with its probability.
#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub id: usize,
    pub load: SurfaceLoad,
    pub probability: f64,
}

/// Everything needed to turn a phase field into per-scenario costs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CostModel {
    pub material: MaterialParams,
    pub weights: CostWeights,
    pub solver: LinearSolver,
    pub epsilon: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DominanceOrder {
    First,
    Second,
}

impl fmt::Display for DominanceOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DominanceOrder::First => "first",
            DominanceOrder::Second => "second",
        })
    }
}

impl FromStr for DominanceOrder {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "first" | "1" => Ok(DominanceOrder::First),
            "second" | "2" => Ok(DominanceOrder::Second),
            _ => Err(format!("unknown dominance order `{s}` (expected first or second)")),
        }
    }
}

fn probabilities<T: Real + DistScalar>(scenarios: &[Scenario]) -> Vec<T> {
    scenarios.iter().map(|s| T::lit(s.probability)).collect()
}

fn loads(scenarios: &[Scenario]) -> Vec<SurfaceLoad> {
    scenarios.iter().map(|s| s.load.clone()).collect()
}

/// Solves one equilibrium per scenario and returns `{(J_k, π_k)}`.
pub fn evaluate_cost_distribution<T: Real + DistScalar>(
    mesh: &QuadMesh,
    v: &NodalField<T>,
    scenarios: &[Scenario],
    model: &CostModel,
) -> Result<CostDistribution<T>, StochasticError> {
    let probs = probabilities::<T>(scenarios);
    // validate before paying for the solves
    CostDistribution::new(vec![T::zero(); probs.len()], probs.clone())?;
    let ev = evaluate_scenarios(
        mesh,
        v,
        model.material,
        model.solver,
        model.weights,
        T::lit(model.epsilon),
        &loads(scenarios),
        false,
    )?;
    CostDistribution::new(ev.costs(), probs)
}

/// Benchmark phase field with its cost distribution on one mesh and ε.
#[derive(Clone, Debug)]
pub struct Benchmark<T> {
    mesh_id: u64,
    epsilon: f64,
    field: NodalField<T>,
    distribution: CostDistribution<T>,
    thresholds: Vec<T>,
}

impl<T: Real + DistScalar> Benchmark<T> {
    /// Evaluates `v_b` on `mesh` under every scenario.
    pub fn compute(
        mesh: &QuadMesh,
        v_b: NodalField<T>,
        scenarios: &[Scenario],
        model: &CostModel,
    ) -> Result<Self, StochasticError> {
        let distribution = evaluate_cost_distribution(mesh, &v_b, scenarios, model)?;
        Ok(Self::from_distribution(mesh, v_b, model.epsilon, distribution))
    }

    pub fn from_distribution(mesh: &QuadMesh, field: NodalField<T>, epsilon: f64, distribution: CostDistribution<T>) -> Self {
        let thresholds = distribution.atoms();
        Self { mesh_id: mesh.id(), epsilon, field, distribution, thresholds }
    }

    pub fn mesh_id(&self) -> u64 {
        self.mesh_id
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn field(&self) -> &NodalField<T> {
        &self.field
    }

    pub fn distribution(&self) -> &CostDistribution<T> {
        &self.distribution
    }

    /// Distinct benchmark costs `η_j`, increasing; one constraint row each.
    pub fn thresholds(&self) -> &[T] {
        &self.thresholds
    }

    pub fn cost_scale(&self, smoothing: &SmoothingParams) -> f64 {
        let atoms: Vec<f64> = self.thresholds.iter().map(|t| t.as_f64()).collect();
        smoothing.scale_for(&atoms)
    }

    /// Rejects a benchmark computed on another mesh or with another ε.
    pub fn check_fresh(&self, mesh: &QuadMesh, epsilon: f64) -> Result<(), StochasticError> {
        if self.mesh_id != mesh.id() {
            return Err(StochasticError::StaleBenchmark { benchmark: self.mesh_id, field: mesh.id() });
        }
        if self.epsilon != epsilon {
            return Err(StochasticError::BenchmarkEpsilon { benchmark: self.epsilon, current: epsilon });
        }
        Ok(())
    }

    /// Smoothed benchmark side of every constraint row.
    pub fn rhs(&self, order: DominanceOrder, smoothing: &SmoothingParams) -> Vec<T> {
        let s = T::lit(self.cost_scale(smoothing));
        let (gh, gm) = (T::lit(smoothing.gamma_h), T::lit(smoothing.gamma_m) * s * s);
        let (eta, pi) = (self.distribution.values(), self.distribution.probabilities());
        self.thresholds
            .iter()
            .map(|&t| {
                eta.iter().zip(pi).fold(T::zero(), |acc, (&e, &p)| {
                    acc + p * match order {
                        DominanceOrder::First => smoothed_heaviside((t - e) / s, gh).0,
                        DominanceOrder::Second => smoothed_max(e - t, gm).0,
                    }
                })
            })
            .collect()
    }
}

/// Smoothed constraint values `c_j ≥ 0` and their derivatives `∂c_j/∂J_k`.
#[derive(Clone, Debug, PartialEq)]
pub struct SmoothedValues<T> {
    pub values: Vec<T>,
    pub d_costs: Vec<Vec<T>>,
}

/// Evaluates the smoothed system for given scenario costs.
pub fn smoothed_constraint_values<T: Real + DistScalar>(
    costs: &[T],
    probs: &[T],
    benchmark: &Benchmark<T>,
    order: DominanceOrder,
    smoothing: &SmoothingParams,
) -> SmoothedValues<T> {
    let s = T::lit(benchmark.cost_scale(smoothing));
    let (gh, gm) = (T::lit(smoothing.gamma_h), T::lit(smoothing.gamma_m) * s * s);
    let rhs = benchmark.rhs(order, smoothing);
    let mut values = Vec::with_capacity(rhs.len());
    let mut d_costs = Vec::with_capacity(rhs.len());
    for (&t, &r) in benchmark.thresholds().iter().zip(&rhs) {
        let mut lhs = T::zero();
        let mut row = Vec::with_capacity(costs.len());
        for (&j, &p) in costs.iter().zip(probs) {
            match order {
                DominanceOrder::First => {
                    let (h, dh) = smoothed_heaviside((t - j) / s, gh);
                    lhs += p * h;
                    row.push(-p * dh / s);
                }
                DominanceOrder::Second => {
                    let (m, dm) = smoothed_max(j - t, gm);
                    lhs += p * m;
                    row.push(-p * dm);
                }
            }
        }
        values.push(match order {
            DominanceOrder::First => lhs - r,
            DominanceOrder::Second => r - lhs,
        });
        d_costs.push(row);
    }
    SmoothedValues { values, d_costs }
}

/// Constraint values with gradients with respect to the conforming phase values.
#[derive(Clone, Debug)]
pub struct DominanceConstraints<T> {
    pub values: Vec<T>,
    pub gradients: Vec<NodalField<T>>,
    pub costs: Vec<T>,
    pub cost_gradients: Vec<NodalField<T>>,
}

pub fn dominance_constraints<T: Real + DistScalar>(
    mesh: &QuadMesh,
    v: &NodalField<T>,
    scenarios: &[Scenario],
    benchmark: &Benchmark<T>,
    order: DominanceOrder,
    smoothing: &SmoothingParams,
    model: &CostModel,
) -> Result<DominanceConstraints<T>, StochasticError> {
    benchmark.check_fresh(mesh, model.epsilon)?;
    if v.mesh_id() != mesh.id() {
        return Err(StochasticError::StaleBenchmark { benchmark: mesh.id(), field: v.mesh_id() });
    }
    if scenarios.len() != benchmark.distribution().len() {
        return Err(StochasticError::ScenarioMismatch { benchmark: benchmark.distribution().len(), got: scenarios.len() });
    }
    let probs = probabilities::<T>(scenarios);
    let ev = evaluate_scenarios(
        mesh,
        v,
        model.material,
        model.solver,
        model.weights,
        T::lit(model.epsilon),
        &loads(scenarios),
        true,
    )?;
    let costs = ev.costs();
    let cost_gradients = ev.gradients.expect("requested gradients");
    let sv = smoothed_constraint_values(&costs, &probs, benchmark, order, smoothing);
    let gradients = sv
        .d_costs
        .iter()
        .map(|row| {
            let mut g = NodalField::zeros(mesh, 1);
            for (w, gk) in row.iter().zip(&cost_gradients) {
                crate::scalar::axpy(*w, gk.values(), g.values_mut());
            }
            g
        })
        .collect();
    Ok(DominanceConstraints { values: sv.values, gradients, costs, cost_gradients })
}
