//! Constrained NLP solver and the continuation driver for the phase-field problem.

mod continuation;
mod nlp;
mod problems;

pub use continuation::{
    continuation, exact_report, generate_benchmark, objective_value, success_slack, ContinuationConfig, ContinuationResult,
    ContinuationState, PhaseFieldModel, StageRecord, Termination,
};
pub use nlp::{kkt_error, kkt_residual, solve_constrained, FnProblem, KktResidual, NlpProblem, NlpResult, Pinned, SolverOptions};
pub use problems::{
    apply_pins, neumann_nodes_pinned, objective_g, pinned_dofs, DominanceProblem, ExpectedCostProblem, Strip,
};
