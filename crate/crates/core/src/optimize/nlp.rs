//! Inequality-constrained NLP `min f(x) s.t. c(x) ≥ 0` solved by a PHR augmented
//! Lagrangian with limited-memory BFGS inner iterations.

use crate::error::NlpError;

/// Objective, constraints and Jacobian of a smooth NLP with `c(x) ≥ 0`.
pub trait NlpProblem {
    fn num_variables(&self) -> usize;

    fn num_constraints(&self) -> usize;

    /// Objective value and gradient.
    fn objective(&mut self, x: &[f64]) -> Result<(f64, Vec<f64>), NlpError>;

    /// Constraint values and Jacobian rows.
    fn constraints(&mut self, x: &[f64]) -> Result<(Vec<f64>, Vec<Vec<f64>>), NlpError>;

    /// Positive weights of the variable metric (e.g. lumped mass). Gradients are
    /// measured as `g_i / m_i`. Unit weights by default.
    fn metric(&self) -> Option<Vec<f64>> {
        None
    }

    /// Optional box bounds `(lower, upper)`.
    fn bounds(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        None
    }
}

/// Closure-backed problem, mostly for tests and small models.
pub struct FnProblem<F, C> {
    pub n: usize,
    pub m: usize,
    pub f: F,
    pub c: C,
}

impl<F, C> NlpProblem for FnProblem<F, C>
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
    C: FnMut(&[f64]) -> (Vec<f64>, Vec<Vec<f64>>),
{
    fn num_variables(&self) -> usize {
        self.n
    }
    fn num_constraints(&self) -> usize {
        self.m
    }
    fn objective(&mut self, x: &[f64]) -> Result<(f64, Vec<f64>), NlpError> {
        Ok((self.f)(x))
    }
    fn constraints(&mut self, x: &[f64]) -> Result<(Vec<f64>, Vec<Vec<f64>>), NlpError> {
        Ok((self.c)(x))
    }
}

/// Fixes some variables of an inner problem and exposes the rest.
pub struct Pinned<'a, P> {
    inner: &'a mut P,
    full: Vec<f64>,
    free: Vec<usize>,
}

impl<'a, P: NlpProblem> Pinned<'a, P> {
    /// `pinned[i] = true` freezes variable `i` at `x_full[i]`.
    pub fn new(inner: &'a mut P, x_full: Vec<f64>, pinned: &[bool]) -> Self {
        let free = (0..x_full.len()).filter(|&i| !pinned[i]).collect();
        Self { inner, full: x_full, free }
    }

    pub fn restrict(&self, x_full: &[f64]) -> Vec<f64> {
        self.free.iter().map(|&i| x_full[i]).collect()
    }

    pub fn expand(&self, x: &[f64]) -> Vec<f64> {
        let mut full = self.full.clone();
        for (k, &i) in self.free.iter().enumerate() {
            full[i] = x[k];
        }
        full
    }

    pub fn free_indices(&self) -> &[usize] {
        &self.free
    }

    fn restrict_vec(&self, g: &[f64]) -> Vec<f64> {
        self.free.iter().map(|&i| g[i]).collect()
    }
}

impl<P: NlpProblem> NlpProblem for Pinned<'_, P> {
    fn num_variables(&self) -> usize {
        self.free.len()
    }
    fn num_constraints(&self) -> usize {
        self.inner.num_constraints()
    }
    fn objective(&mut self, x: &[f64]) -> Result<(f64, Vec<f64>), NlpError> {
        let full = self.expand(x);
        let (f, g) = self.inner.objective(&full)?;
        Ok((f, self.restrict_vec(&g)))
    }
    fn constraints(&mut self, x: &[f64]) -> Result<(Vec<f64>, Vec<Vec<f64>>), NlpError> {
        let full = self.expand(x);
        let (c, jac) = self.inner.constraints(&full)?;
        Ok((c, jac.iter().map(|r| self.restrict_vec(r)).collect()))
    }
    fn metric(&self) -> Option<Vec<f64>> {
        self.inner.metric().map(|m| self.restrict_vec(&m))
    }
    fn bounds(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        self.inner.bounds().map(|(l, u)| (self.restrict_vec(&l), self.restrict_vec(&u)))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverOptions {
    /// Target KKT error.
    pub tol: f64,
    /// Budget of inner (quasi-Newton) iterations over all outer iterations.
    pub max_iter: usize,
    pub max_outer: usize,
    pub memory: usize,
    /// Largest allowed change of any variable in one step.
    pub max_step: f64,
    pub penalty: f64,
    pub penalty_max: f64,
    /// Line-search trials whose largest violation `max_j (−c_j)` exceeds
    /// `max(2 θ₀, violation_floor)` are rejected, `θ₀` being the violation at `x0`.
    pub violation_floor: f64,
    /// Warm-start multipliers (length must match the constraint count).
    pub multipliers: Option<Vec<f64>>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-5,
            max_iter: 2000,
            max_outer: 50,
            memory: 8,
            max_step: 0.5,
            penalty: 10.0,
            penalty_max: 1e10,
            violation_floor: 0.05,
            multipliers: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NlpResult {
    pub x: Vec<f64>,
    pub multipliers: Vec<f64>,
    pub objective: f64,
    pub constraints: Vec<f64>,
    pub kkt_error: f64,
    pub converged: bool,
    pub iterations: usize,
    pub evaluations: usize,
}

/// Components of the KKT error.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KktResidual {
    pub dual: f64,
    pub primal: f64,
    pub complementarity: f64,
}

impl KktResidual {
    pub fn error(&self) -> f64 {
        self.dual.max(self.primal).max(self.complementarity)
    }
}

/// Multiplier scaling `s_d = max(1, ‖λ‖₁ / (100 m))`, applied to the dual and
/// complementarity residuals.
fn dual_scaling(lambda: &[f64]) -> f64 {
    if lambda.is_empty() {
        return 1.0;
    }
    let l1: f64 = lambda.iter().map(|l| l.abs()).sum();
    (l1 / (100.0 * lambda.len() as f64)).max(1.0)
}

/// KKT residuals from precomputed derivatives.
///
/// Dual infeasibility is `max_i |∇f − Jᵀλ|_i / m_i` with metric weights `m`
/// (ones when `None`), divided by the multiplier scaling; primal infeasibility
/// is `‖min(c, 0)‖_∞`; complementarity is `‖λ ∘ c‖_∞` divided by the same scaling.
pub fn kkt_residual(grad: &[f64], jac: &[Vec<f64>], c: &[f64], lambda: &[f64], metric: Option<&[f64]>) -> KktResidual {
    let sd = dual_scaling(lambda);
    let mut dual = 0.0f64;
    for i in 0..grad.len() {
        let mut r = grad[i];
        for (row, l) in jac.iter().zip(lambda) {
            r -= l * row[i];
        }
        let m = metric.map_or(1.0, |m| m[i]);
        dual = dual.max((r / m).abs());
    }
    let primal = c.iter().fold(0.0f64, |a, &v| a.max((-v).max(0.0)));
    let comp = c.iter().zip(lambda).fold(0.0f64, |a, (v, l)| a.max((v * l).abs()));
    KktResidual { dual: dual / sd, primal, complementarity: comp / sd }
}

/// KKT error of `(x, λ)` for `problem`.
pub fn kkt_error<P: NlpProblem>(problem: &mut P, x: &[f64], lambda: &[f64]) -> Result<f64, NlpError> {
    check_dims(problem, x, lambda)?;
    let (_, g) = problem.objective(x)?;
    let (c, jac) = problem.constraints(x)?;
    let metric = problem.metric();
    Ok(kkt_residual(&g, &jac, &c, lambda, metric.as_deref()).error())
}

fn check_dims<P: NlpProblem>(p: &P, x: &[f64], lambda: &[f64]) -> Result<(), NlpError> {
    if x.len() != p.num_variables() {
        return Err(NlpError::Dimension { expected: p.num_variables(), got: x.len() });
    }
    if lambda.len() != p.num_constraints() {
        return Err(NlpError::Dimension { expected: p.num_constraints(), got: lambda.len() });
    }
    Ok(())
}

struct Point {
    x: Vec<f64>,
    f: f64,
    g: Vec<f64>,
    c: Vec<f64>,
    jac: Vec<Vec<f64>>,
}

struct Evaluator<'p, P> {
    problem: &'p mut P,
    count: usize,
}

impl<P: NlpProblem> Evaluator<'_, P> {
    fn eval(&mut self, x: Vec<f64>) -> Result<Point, NlpError> {
        self.count += 1;
        let (f, g) = self.problem.objective(&x)?;
        let (c, jac) = self.problem.constraints(&x)?;
        let finite = f.is_finite() && g.iter().chain(&c).all(|v| v.is_finite()) && jac.iter().flatten().all(|v| v.is_finite());
        if !finite {
            return Err(NlpError::NonFinite);
        }
        Ok(Point { x, f, g, c, jac })
    }
}

/// Augmented Lagrangian value and gradient for multipliers `lambda` and penalty `rho`.
fn augmented(p: &Point, lambda: &[f64], rho: f64) -> (f64, Vec<f64>) {
    let mut val = p.f;
    let mut g = p.g.clone();
    for j in 0..p.c.len() {
        let shifted = (lambda[j] - rho * p.c[j]).max(0.0);
        val += (shifted * shifted - lambda[j] * lambda[j]) / (2.0 * rho);
        if shifted > 0.0 {
            for (gi, ji) in g.iter_mut().zip(&p.jac[j]) {
                *gi -= shifted * ji;
            }
        }
    }
    (val, g)
}

fn updated_multipliers(p: &Point, lambda: &[f64], rho: f64) -> Vec<f64> {
    lambda.iter().zip(&p.c).map(|(l, c)| (l - rho * c).max(0.0)).collect()
}

/// Constraint violation measure used for the penalty update.
fn feasibility(p: &Point, lambda: &[f64], rho: f64) -> f64 {
    p.c.iter().zip(lambda).fold(0.0f64, |a, (c, l)| a.max(c.min(l / rho).abs()))
}

fn violation(p: &Point) -> f64 {
    p.c.iter().fold(0.0f64, |a, c| a.max(-c))
}

fn project(x: &mut [f64], bounds: &Option<(Vec<f64>, Vec<f64>)>) {
    if let Some((lo, hi)) = bounds {
        for i in 0..x.len() {
            x[i] = x[i].clamp(lo[i], hi[i]);
        }
    }
}

/// Two-loop recursion with initial inverse Hessian `gamma · diag(1/m)`.
fn lbfgs_direction(g: &[f64], pairs: &[(Vec<f64>, Vec<f64>, f64)], inv_metric: &[f64]) -> Vec<f64> {
    let mut q = g.to_vec();
    let mut alpha = vec![0.0; pairs.len()];
    for (k, (s, y, rho)) in pairs.iter().enumerate().rev() {
        alpha[k] = rho * dot(s, &q);
        for (qi, yi) in q.iter_mut().zip(y) {
            *qi -= alpha[k] * yi;
        }
    }
    let gamma = match pairs.last() {
        Some((s, y, _)) => {
            let yhy: f64 = y.iter().zip(inv_metric).map(|(a, m)| a * a * m).sum();
            dot(s, y) / yhy
        }
        None => 1.0,
    };
    for (qi, m) in q.iter_mut().zip(inv_metric) {
        *qi *= gamma * m;
    }
    for (k, (s, y, rho)) in pairs.iter().enumerate() {
        let beta = rho * dot(y, &q);
        for (qi, si) in q.iter_mut().zip(s) {
            *qi += (alpha[k] - beta) * si;
        }
    }
    q.iter_mut().for_each(|v| *v = -*v);
    q
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn metric_norm(g: &[f64], inv_metric: &[f64]) -> f64 {
    g.iter().zip(inv_metric).fold(0.0f64, |a, (v, m)| a.max((v * m).abs()))
}

/// Minimises `f` subject to `c(x) ≥ 0` starting from `x0`.
///
/// Returns the last accepted iterate; `converged` is false when the iteration
/// budget ran out before the KKT error reached `opts.tol`.
pub fn solve_constrained<P: NlpProblem>(problem: &mut P, x0: &[f64], opts: &SolverOptions) -> Result<NlpResult, NlpError> {
    let n = problem.num_variables();
    let m = problem.num_constraints();
    let mut lambda = opts.multipliers.clone().unwrap_or_else(|| vec![0.0; m]);
    check_dims(problem, x0, &lambda)?;
    lambda.iter_mut().for_each(|l| *l = l.max(0.0));
    let metric = problem.metric().unwrap_or_else(|| vec![1.0; n]);
    let inv_metric: Vec<f64> = metric.iter().map(|m| 1.0 / m).collect();
    let bounds = problem.bounds();
    let mut ev = Evaluator { problem, count: 0 };

    let mut x = x0.to_vec();
    project(&mut x, &bounds);
    let mut point = ev.eval(x)?;
    let mut rho = opts.penalty;
    let mut iterations = 0usize;
    let kkt = |p: &Point, l: &[f64]| kkt_residual(&p.g, &p.jac, &p.c, l, Some(&metric)).error();
    let mut err = kkt(&point, &lambda);
    let mut last_feas = feasibility(&point, &lambda, rho);
    let theta_max = (2.0 * violation(&point)).max(opts.violation_floor);
    let mut pairs: Vec<(Vec<f64>, Vec<f64>, f64)> = Vec::new();

    let mut outer = 0;
    while err > opts.tol && outer < opts.max_outer && iterations < opts.max_iter {
        outer += 1;
        let omega = (0.1 * err).min(1e-1).max(0.5 * opts.tol);
        // inner minimisation of the augmented Lagrangian
        let (mut val, mut grad) = augmented(&point, &lambda, rho);
        while iterations < opts.max_iter {
            if metric_norm(&grad, &inv_metric) <= omega {
                break;
            }
            let mut d = lbfgs_direction(&grad, &pairs, &inv_metric);
            let mut slope = dot(&grad, &d);
            if !(slope < 0.0) {
                pairs.clear();
                d = grad.iter().zip(&inv_metric).map(|(g, im)| -g * im).collect();
                slope = dot(&grad, &d);
            }
            let dmax = d.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            let mut t = if dmax > opts.max_step { opts.max_step / dmax } else { 1.0 };
            let mut accepted = None;
            for _ in 0..30 {
                let mut xt: Vec<f64> = point.x.iter().zip(&d).map(|(a, b)| a + t * b).collect();
                project(&mut xt, &bounds);
                let trial = ev.eval(xt)?;
                let (tv, tg) = augmented(&trial, &lambda, rho);
                let actual_slope = if bounds.is_some() {
                    dot(&grad, &trial.x.iter().zip(&point.x).map(|(a, b)| a - b).collect::<Vec<_>>())
                } else {
                    t * slope
                };
                if tv <= val + 1e-4 * actual_slope.min(0.0) && violation(&trial) <= theta_max {
                    accepted = Some((trial, tv, tg));
                    break;
                }
                t *= 0.5;
            }
            iterations += 1;
            let Some((trial, tv, tg)) = accepted else {
                // no decrease along the direction: restart the memory once, else stop
                if pairs.is_empty() {
                    break;
                }
                pairs.clear();
                continue;
            };
            let s: Vec<f64> = trial.x.iter().zip(&point.x).map(|(a, b)| a - b).collect();
            let y: Vec<f64> = tg.iter().zip(&grad).map(|(a, b)| a - b).collect();
            let sy = dot(&s, &y);
            if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() && sy > 0.0 {
                if pairs.len() == opts.memory {
                    pairs.remove(0);
                }
                pairs.push((s, y, 1.0 / sy));
            }
            point = trial;
            val = tv;
            grad = tg;
        }

        let new_lambda = updated_multipliers(&point, &lambda, rho);
        let feas = feasibility(&point, &lambda, rho);
        lambda = new_lambda;
        if feas > 0.25 * last_feas && rho < opts.penalty_max {
            rho = (rho * 10.0).min(opts.penalty_max);
            pairs.clear();
        }
        last_feas = feas;
        err = kkt(&point, &lambda);
    }

    Ok(NlpResult {
        objective: point.f,
        constraints: point.c.clone(),
        converged: err <= opts.tol,
        kkt_error: err,
        iterations,
        evaluations: ev.count,
        multipliers: lambda,
        x: point.x,
    })
}
