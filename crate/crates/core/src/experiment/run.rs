//! Benchmark acquisition and the experiment driver with its output files.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use super::config::{BenchmarkSource, ExperimentConfig};
use crate::elasticity::{evaluate_scenarios, von_mises_field};
use crate::error::Error;
use crate::field::{project, NodalField};
use crate::functionals::volume;
use crate::mesh::QuadMesh;
use crate::optimize::{
    apply_pins, continuation, generate_benchmark, objective_value, pinned_dofs, ContinuationState, Termination,
};
use crate::stochastic::{merged_grid, Benchmark, CostDistribution, DominanceOrder};

/// Outcome of [`run_experiment`].
#[derive(Clone, Debug)]
pub struct RunSummary {
    pub order: DominanceOrder,
    /// Exact dominance within the success tolerance.
    pub success: bool,
    pub termination: Termination,
    pub volume: f64,
    pub benchmark_volume: f64,
    pub objective: f64,
    pub benchmark_objective: f64,
    /// Benchmark atoms and the exact slack at each.
    pub thresholds: Vec<f64>,
    pub slacks: Vec<f64>,
    pub allowed_slack: f64,
    pub kkt: f64,
    pub stages: usize,
    pub epsilons: Vec<f64>,
    pub wall_time: Duration,
    pub benchmark_costs: Vec<f64>,
    pub costs: Vec<f64>,
}

impl RunSummary {
    pub fn converged(&self) -> bool {
        self.termination == Termination::Converged
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let termination = match self.termination {
            Termination::Converged => "converged",
            Termination::StageLimit => "stage-limit",
            Termination::RefinementCap => "refinement-cap",
        };
        writeln!(s, "order = {}", self.order).unwrap();
        writeln!(s, "success = {}", self.success).unwrap();
        writeln!(s, "termination = {termination}").unwrap();
        writeln!(s, "partial = {}", !self.converged()).unwrap();
        writeln!(s, "volume = {:.6}", self.volume).unwrap();
        writeln!(s, "benchmark_volume = {:.6}", self.benchmark_volume).unwrap();
        writeln!(s, "objective = {:.8}", self.objective).unwrap();
        writeln!(s, "benchmark_objective = {:.8}", self.benchmark_objective).unwrap();
        writeln!(s, "kkt = {:.4e}", self.kkt).unwrap();
        writeln!(s, "stages = {}", self.stages).unwrap();
        writeln!(s, "wall_time_s = {:.1}", self.wall_time.as_secs_f64()).unwrap();
        writeln!(s, "allowed_slack = {:.4e}", self.allowed_slack).unwrap();
        writeln!(s, "# threshold exact_slack").unwrap();
        for (t, v) in self.thresholds.iter().zip(&self.slacks) {
            writeln!(s, "slack {t:.10e} {v:.6e}").unwrap();
        }
        s
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io { path: path.to_path_buf(), source }
}

fn write(path: &Path, text: &str) -> Result<(), Error> {
    fs::write(path, text).map_err(io_err(path))
}

/// Initial mesh of an experiment.
pub fn initial_mesh(cfg: &ExperimentConfig) -> Result<QuadMesh, Error> {
    Ok(QuadMesh::uniform(cfg.geometry.domain, cfg.mesh.level, cfg.mesh.max_level, &cfg.geometry.segments)?)
}

/// Loads or generates the benchmark phase field on `mesh` and evaluates its
/// cost distribution at the initial ε.
pub fn acquire_benchmark(cfg: &ExperimentConfig, mesh: &QuadMesh) -> Result<Benchmark<f64>, Error> {
    let model = cfg.model();
    let eps = cfg.continuation.phase.epsilon;
    let field = match &cfg.benchmark {
        BenchmarkSource::File(path) => {
            let text = fs::read_to_string(path).map_err(io_err(path))?;
            let (src, f) = NodalField::<f64>::parse_dump(&text)?;
            let (a, b) = (src.domain(), mesh.domain());
            let tol = 1e-12 * a.width().max(a.height());
            let same = [(a.x0, b.x0), (a.y0, b.y0), (a.x1, b.x1), (a.y1, b.y1)].iter().all(|(p, q)| (p - q).abs() <= tol);
            if !same {
                return Err(Error::Benchmark(format!("{} covers a different domain than the experiment", path.display())));
            }
            project(&f, &src, mesh)?
        }
        BenchmarkSource::Generate { volume_weight, .. } => {
            let mut bench_model = model.clone();
            if let Some(w) = volume_weight {
                bench_model.weights.nu = *w;
            }
            let opts = cfg.benchmark_options().expect("generated source");
            let start = NodalField::constant(mesh, 1, 1.0);
            let (v, converged) = generate_benchmark(&bench_model, mesh, &start, eps, &opts, cfg.continuation.bounds)?;
            if !converged {
                return Err(Error::Benchmark(format!(
                    "expected-cost minimisation did not reach tolerance {:e} in {} iterations",
                    opts.tol, opts.max_iter
                )));
            }
            v
        }
    };
    let mut field = field;
    apply_pins(&mut field, &pinned_dofs(mesh, &cfg.geometry.strips));
    Ok(Benchmark::compute(mesh, field, &model.scenarios, &model.cost_model(eps))?)
}

/// Sampling grid for distribution tables: merged atoms and midpoints, padded
/// by 5 % of the range on both sides.
pub fn table_grid(a: &CostDistribution<f64>, b: &CostDistribution<f64>) -> Vec<f64> {
    let mut grid = merged_grid(a, b);
    let (lo, hi) = (grid[0], grid[grid.len() - 1]);
    let pad = 0.05 * (hi - lo).max(hi.abs().max(1e-12));
    grid.insert(0, lo - pad);
    grid.push(hi + pad);
    grid
}

fn table(grid: &[f64], f: impl Fn(f64) -> f64) -> String {
    grid.iter().map(|&t| format!("{t:.10e} {:.10e}\n", f(t))).collect()
}

/// Colour clamp for stress plots; echoed in the stress file headers.
pub const STRESS_CLAMP: f64 = 4.99;

/// Writes `x y sigma_vm masked` per conforming node for every scenario.
fn write_stress(cfg: &ExperimentConfig, state: &ContinuationState, dir: &Path) -> Result<(), Error> {
    let loads: Vec<_> = cfg.scenarios.iter().map(|s| s.load.clone()).collect();
    let eval = evaluate_scenarios(
        &state.mesh,
        &state.v,
        cfg.material,
        cfg.solver,
        cfg.weights,
        state.epsilon,
        &loads,
        false,
    )?;
    for (k, st) in eval.states.iter().enumerate() {
        let (vm, hard) = von_mises_field(&state.mesh, &state.v, &st.displacement, cfg.material);
        let mut s = format!("# scenario {k}\n# clamp {STRESS_CLAMP} (larger stresses share the top colour)\n");
        s.push_str("# masked: von Mises where chi(V) > 0.5, NaN elsewhere\n# x y sigma_vm masked\n");
        for d in 0..state.mesh.num_dofs() {
            let (x, y) = state.mesh.dof_position(d);
            writeln!(s, "{x:.8} {y:.8} {:.8e} {:.8e}", vm.get(d, 0), hard.get(d, 0)).unwrap();
        }
        write(&dir.join(format!("stress_s{k}.dat")), &s)?;
    }
    Ok(())
}

/// Runs the continuation for `cfg` and writes all artifacts to `cfg.output`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunSummary, Error> {
    let started = Instant::now();
    let dir = cfg.output.clone();
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    let mesh = initial_mesh(cfg)?;
    let bench = acquire_benchmark(cfg, &mesh)?;
    write(&dir.join("phasefield_initial.dat"), &bench.field().dump(&mesh))?;
    write(&dir.join("benchmark.dat"), &bench.field().dump(&mesh))?;

    let log_path = dir.join("stages.log");
    let mut log = String::from("# stage epsilon gamma_h gamma_m ncells objective kkt min_slack\n");
    write(&log_path, &log)?;
    let mut observer = |s: &ContinuationState| -> Result<(), Error> {
        write(&dir.join(format!("phasefield_stage{}.dat", s.stage)), &s.v.dump(&s.mesh))?;
        let record = s.history.last().expect("observer runs after a stage");
        log.push_str(&record.log_line());
        log.push('\n');
        write(&log_path, &log)
    };
    let model = cfg.model();
    let result = continuation(&model, mesh, bench.field().clone(), &cfg.continuation, &mut observer).map_err(|e| match e {
        Error::Stage { stage, source, .. } => Error::Stage { stage, artifacts: dir.clone(), source },
        other => other,
    })?;

    let st = &result.state;
    write(&dir.join("phasefield_final.dat"), &st.v.dump(&st.mesh))?;
    let bd = st.benchmark.distribution();
    let od = &st.distribution;
    let grid = table_grid(od, bd);
    write(&dir.join("bench_cdf.dat"), &table(&grid, |t| bd.cdf(t)))?;
    write(&dir.join("opt_cdf.dat"), &table(&grid, |t| od.cdf(t)))?;
    write(&dir.join("bench_isf.dat"), &table(&grid, |t| bd.integrated_survival(t)))?;
    write(&dir.join("opt_isf.dat"), &table(&grid, |t| od.integrated_survival(t)))?;
    write_stress(cfg, st, &dir)?;

    let obj_eps = cfg.continuation.objective_epsilon;
    let summary = RunSummary {
        order: cfg.continuation.order,
        success: result.dominance_ok,
        termination: result.termination,
        volume: volume(&st.mesh, &st.v).0,
        benchmark_volume: volume(&st.mesh, st.benchmark.field()).0,
        objective: objective_value(&st.mesh, &st.v, st.epsilon, obj_eps),
        benchmark_objective: objective_value(&st.mesh, st.benchmark.field(), st.epsilon, obj_eps),
        thresholds: result.exact.thresholds.clone(),
        slacks: result.exact.slacks.clone(),
        allowed_slack: crate::optimize::success_slack(bd, cfg.continuation.success_tolerance),
        kkt: st.history.last().map_or(f64::NAN, |r| r.kkt),
        stages: st.history.len(),
        epsilons: st.history.iter().map(|r| r.epsilon).collect(),
        wall_time: started.elapsed(),
        benchmark_costs: bd.values().to_vec(),
        costs: od.values().to_vec(),
    };
    write(&dir.join("summary.txt"), &summary.to_text())?;
    Ok(summary)
}
