use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeshError {
    #[error("max depth exceeded: cell at level {level} cannot be refined (max level {max_level})")]
    MaxDepthExceeded { level: u8, max_level: u8 },
    #[error("cell index {0} is not a leaf of the mesh")]
    UnknownCell(usize),
    #[error("invalid level configuration: {0}")]
    InvalidLevel(String),
    #[error("meshes are not nested: {0}")]
    NotNested(String),
    #[error("field does not belong to this mesh (field mesh {field}, mesh {mesh})")]
    FieldMismatch { field: u64, mesh: u64 },
    #[error("dirichlet and neumann boundaries overlap on the {side} side")]
    BoundaryOverlap { side: &'static str },
    #[error("boundary segment [{from}, {to}] is empty or outside the domain")]
    InvalidSegment { from: f64, to: f64 },
    #[error("mesh violates the 2:1 balance condition: {0}")]
    Unbalanced(String),
    #[error("malformed mesh dump at line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("matrix is not positive definite (pivot {pivot} at row {row})")]
    NotPositiveDefinite { row: usize, pivot: f64 },
    #[error("conjugate gradients did not converge: relative residual {residual:e} after {iterations} iterations")]
    NotConverged { iterations: usize, residual: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ElasticityError {
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("no dirichlet boundary: the elasticity operator is singular")]
    EmptyDirichlet,
    #[error("invalid material parameters: {0}")]
    InvalidMaterial(String),
    #[error("load references unknown neumann segment {0}")]
    UnknownSegment(usize),
    #[error("displacement is not an equilibrium: relative residual {residual:e}")]
    NotEquilibrium { residual: f64 },
    #[error("equilibrium solve failed for scenario {scenario}: {source}")]
    Scenario {
        scenario: usize,
        #[source]
        source: Box<ElasticityError>,
    },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StochasticError {
    #[error("probabilities sum to {0}")]
    ProbabilitySum(f64),
    #[error("probability {0} outside [0, 1]")]
    InvalidProbability(f64),
    #[error("non-finite cost value")]
    NonFinite,
    #[error("at least one scenario required")]
    Empty,
    #[error("benchmark is stale: computed on mesh {benchmark}, field lives on mesh {field}")]
    StaleBenchmark { benchmark: u64, field: u64 },
    #[error("benchmark was computed with epsilon {benchmark}, current epsilon is {current}")]
    BenchmarkEpsilon { benchmark: f64, current: f64 },
    #[error("scenario count mismatch: benchmark has {benchmark}, got {got}")]
    ScenarioMismatch { benchmark: usize, got: usize },
    #[error(transparent)]
    Elasticity(#[from] ElasticityError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NlpError {
    #[error("dimension mismatch: problem has {expected} variables, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("callback failed: {0}")]
    Callback(String),
    #[error("non-finite value returned by the problem callbacks")]
    NonFinite,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("probabilities sum to {0}")]
    ProbabilitySum(f64),
    #[error("at least one scenario required")]
    NoScenarios,
    #[error("unknown preset `{0}`")]
    UnknownPreset(String),
    #[error("negative or zero weight `{name}` = {value}")]
    NegativeWeight { name: &'static str, value: f64 },
    #[error("dirichlet and neumann boundaries overlap on the {0} side")]
    BoundaryOverlap(&'static str),
    #[error("invalid value for `{key}`: {msg}")]
    Invalid { key: String, msg: String },
    #[error("cannot read {path}: {msg}")]
    Io { path: PathBuf, msg: String },
    #[error("malformed configuration: {0}")]
    Syntax(String),
}

/// Top-level error for the experiment driver.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Elasticity(#[from] ElasticityError),
    #[error(transparent)]
    Stochastic(#[from] StochasticError),
    #[error(transparent)]
    Nlp(#[from] NlpError),
    #[error("stage {stage} failed ({source}); partial state written to {}", .artifacts.display())]
    Stage {
        stage: usize,
        artifacts: PathBuf,
        #[source]
        source: Box<Error>,
    },
    #[error("benchmark: {0}")]
    Benchmark(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}
