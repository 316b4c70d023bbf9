use std::fmt::Debug;

use num_rational::Ratio;
use num_traits::{Num, Signed, ToPrimitive};

use crate::error::StochasticError;

/// Scalar usable for exact distribution arithmetic: floating point or rational.
pub trait DistScalar: Copy + PartialOrd + Num + Signed + ToPrimitive + Debug {
    /// Admissible deviation of the probability sum from one.
    fn sum_tolerance() -> Self;

    fn is_finite_value(&self) -> bool {
        true
    }
}

impl DistScalar for f64 {
    fn sum_tolerance() -> Self {
        1e-12
    }
    fn is_finite_value(&self) -> bool {
        self.is_finite()
    }
}

impl DistScalar for f32 {
    fn sum_tolerance() -> Self {
        1e-5
    }
    fn is_finite_value(&self) -> bool {
        self.is_finite()
    }
}

macro_rules! exact_ratio {
    ($($t:ty),*) => {$(
        impl DistScalar for Ratio<$t> {
            fn sum_tolerance() -> Self {
                Ratio::from_integer(0)
            }
        }
    )*};
}
exact_ratio!(i32, i64, i128);

/// A discrete random variable `{(J_k, π_k)}`.
#[derive(Clone, Debug, PartialEq)]
pub struct CostDistribution<S> {
    values: Vec<S>,
    probs: Vec<S>,
}

impl<S: DistScalar> CostDistribution<S> {
    pub fn new(values: Vec<S>, probs: Vec<S>) -> Result<Self, StochasticError> {
        if values.is_empty() {
            return Err(StochasticError::Empty);
        }
        if values.len() != probs.len() {
            return Err(StochasticError::ScenarioMismatch { benchmark: probs.len(), got: values.len() });
        }
        if values.iter().chain(&probs).any(|v| !v.is_finite_value()) {
            return Err(StochasticError::NonFinite);
        }
        let mut sum = S::zero();
        for &p in &probs {
            if p < S::zero() || p > S::one() {
                return Err(StochasticError::InvalidProbability(p.to_f64().unwrap_or(f64::NAN)));
            }
            sum = sum + p;
        }
        if (sum - S::one()).abs() > S::sum_tolerance() {
            return Err(StochasticError::ProbabilitySum(sum.to_f64().unwrap_or(f64::NAN)));
        }
        Ok(Self { values, probs })
    }

    pub fn from_pairs(pairs: &[(S, S)]) -> Result<Self, StochasticError> {
        Self::new(pairs.iter().map(|p| p.0).collect(), pairs.iter().map(|p| p.1).collect())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[S] {
        &self.values
    }

    pub fn probabilities(&self) -> &[S] {
        &self.probs
    }

    /// Distinct atom values in increasing order.
    pub fn atoms(&self) -> Vec<S> {
        let mut a = self.values.clone();
        a.sort_by(|x, y| x.partial_cmp(y).expect("finite values"));
        a.dedup();
        a
    }

    /// `P[X ≤ t]`.
    pub fn cdf(&self, t: S) -> S {
        self.fold(|v, p| if v <= t { p } else { S::zero() })
    }

    /// `P[X > t]`.
    pub fn exceedance(&self, t: S) -> S {
        self.fold(|v, p| if v > t { p } else { S::zero() })
    }

    /// `E max(X − t, 0)`.
    pub fn integrated_survival(&self, t: S) -> S {
        self.fold(|v, p| if v > t { p * (v - t) } else { S::zero() })
    }

    pub fn mean(&self) -> S {
        self.fold(|v, p| p * v)
    }

    pub fn min(&self) -> S {
        self.atoms()[0]
    }

    pub fn max(&self) -> S {
        *self.atoms().last().expect("non-empty")
    }

    /// Max minus min atom.
    pub fn spread(&self) -> S {
        self.max() - self.min()
    }

    fn fold(&self, f: impl Fn(S, S) -> S) -> S {
        self.values.iter().zip(&self.probs).fold(S::zero(), |acc, (&v, &p)| acc + f(v, p))
    }
}

pub fn cdf<S: DistScalar>(dist: &CostDistribution<S>, t: S) -> S {
    dist.cdf(t)
}

pub fn integrated_survival<S: DistScalar>(dist: &CostDistribution<S>, t: S) -> S {
    dist.integrated_survival(t)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RiskMeasures<S> {
    pub mean: S,
    /// `P[J > η]` (strict).
    pub excess_probability: S,
    /// `E max(J − η, 0)`.
    pub expected_excess: S,
}

pub fn risk_measures<S: DistScalar>(dist: &CostDistribution<S>, eta: S) -> RiskMeasures<S> {
    RiskMeasures {
        mean: dist.mean(),
        excess_probability: dist.exceedance(eta),
        expected_excess: dist.integrated_survival(eta),
    }
}

/// Per-threshold margins of a dominance check; nonnegative means satisfied.
#[derive(Clone, Debug, PartialEq)]
pub struct DominanceReport<S> {
    pub thresholds: Vec<S>,
    pub slacks: Vec<S>,
}

impl<S: DistScalar> DominanceReport<S> {
    pub fn holds(&self) -> bool {
        self.slacks.iter().all(|s| *s >= S::zero())
    }

    /// True if every slack is at least `-tol`.
    pub fn holds_within(&self, tol: S) -> bool {
        self.slacks.iter().all(|s| *s >= -tol)
    }

    pub fn min_slack(&self) -> S {
        self.slacks.iter().copied().fold(self.slacks[0], |m, s| if s < m { s } else { m })
    }
}

/// `X ⪯_st Y`: `F_X(η) ≥ F_Y(η)` at every atom `η` of `Y`.
pub fn dominates_first_order<S: DistScalar>(x: &CostDistribution<S>, y: &CostDistribution<S>) -> DominanceReport<S> {
    let thresholds = y.atoms();
    let slacks = thresholds.iter().map(|&t| x.cdf(t) - y.cdf(t)).collect();
    DominanceReport { thresholds, slacks }
}

/// `X ⪯_icx Y`: `π_X(η) ≤ π_Y(η)` at every atom `η` of `Y`.
pub fn dominates_second_order<S: DistScalar>(x: &CostDistribution<S>, y: &CostDistribution<S>) -> DominanceReport<S> {
    let thresholds = y.atoms();
    let slacks = thresholds.iter().map(|&t| y.integrated_survival(t) - x.integrated_survival(t)).collect();
    DominanceReport { thresholds, slacks }
}

/// Union of the atoms of both distributions plus all midpoints, sorted.
pub fn merged_grid(a: &CostDistribution<f64>, b: &CostDistribution<f64>) -> Vec<f64> {
    let mut atoms: Vec<f64> = a.values().iter().chain(b.values()).copied().collect();
    atoms.sort_by(|x, y| x.total_cmp(y));
    atoms.dedup();
    let mut grid = Vec::with_capacity(2 * atoms.len());
    for (i, &t) in atoms.iter().enumerate() {
        if i > 0 {
            grid.push(0.5 * (atoms[i - 1] + t));
        }
        grid.push(t);
    }
    grid
}
