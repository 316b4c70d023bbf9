//! Phase-field shape optimisation of 2D elastic bodies under random surface
//! loads, with the compliance distribution of the design constrained to
//! stochastically dominate that of a benchmark shape.
//!
//! The numerical core (mesh, fields, functionals, elasticity, dominance
//! constraints) is generic over the scalar type through [`scalar::Real`];
//! the aliases below fix it to `f64` or `f32`. Exact dominance checks also
//! work on rationals through [`stochastic::DistScalar`].
//!
//! ```
//! use phasedom::{Distribution, dominates_second_order};
//!
//! let bench = Distribution::from_pairs(&[(1.0, 0.5), (2.0, 0.5)]).unwrap();
//! let design = Distribution::from_pairs(&[(1.5, 1.0)]).unwrap();
//! assert!(dominates_second_order(&design, &bench).holds());
//! ```

pub mod elasticity;
pub mod element;
pub mod error;
pub mod field;
pub mod functionals;
pub mod linalg;
pub mod mesh;
pub mod scalar;
pub mod stochastic;
pub mod optimize;
pub mod experiment;

pub use error::{ConfigError, ElasticityError, Error, LinalgError, MeshError, NlpError, StochasticError};
pub use field::NodalField;
pub use mesh::{CellKey, Domain, QuadMesh};
pub use stochastic::{dominates_first_order, dominates_second_order, CostDistribution, DominanceOrder, DominanceReport};

pub type Field = NodalField<f64>;
pub type Field32 = NodalField<f32>;
pub type Distribution = CostDistribution<f64>;
pub type ExactDistribution = CostDistribution<num_rational::Ratio<i64>>;
