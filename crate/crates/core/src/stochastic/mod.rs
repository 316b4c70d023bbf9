//! Scenario model, discrete cost distributions, risk measures and the exact and
//! smoothed stochastic dominance systems.

mod constraints;
mod distribution;
mod smoothing;

pub use constraints::{
    dominance_constraints, evaluate_cost_distribution, smoothed_constraint_values, Benchmark, CostModel,
    DominanceConstraints, DominanceOrder, Scenario, SmoothedValues,
};
pub use distribution::{
    cdf, dominates_first_order, dominates_second_order, integrated_survival, merged_grid, risk_measures,
    CostDistribution, DistScalar, DominanceReport, RiskMeasures,
};
pub use smoothing::{smoothed_heaviside, smoothed_max, SmoothingParams};
