//! TOML experiment configuration.
//!
//! ```toml
//! preset = "cantilever-equal"
//! order = "second"
//!
//! [weights]
//! nu = 0.04096
//!
//! [[scenario]]
//! segment = 0
//! angle = 30.0
//! magnitude = 1.5
//! probability = 1.0
//! ```
//!
//! Every key is optional except that a preset or a `[geometry]` table must be
//! given. Explicit `[[scenario]]` blocks replace the preset's scenarios.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use super::presets::{build_preset, fan_traction, Geometry};
use crate::elasticity::{LinearSolver, MaterialParams, SurfaceLoad};
use crate::error::ConfigError;
use crate::functionals::{CostWeights, PhaseFieldParams};
use crate::mesh::{snap_segment, BoundaryKind, Domain, SegmentSpec, Side, MAX_SUPPORTED_LEVEL};
use crate::optimize::{ContinuationConfig, PhaseFieldModel, SolverOptions, Strip};
use crate::stochastic::{DominanceOrder, Scenario, SmoothingParams};

/// Where the benchmark phase field comes from.
#[derive(Clone, Debug, PartialEq)]
pub enum BenchmarkSource {
    /// Phase-field dump, projected onto the initial mesh.
    File(PathBuf),
    /// Unconstrained expected-cost minimisation from `V ≡ 1`.
    Generate {
        tol: f64,
        max_iter: usize,
        /// Volume weight used for the benchmark only; `None` keeps `nu`.
        volume_weight: Option<f64>,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct MeshConfig {
    pub level: u8,
    pub max_level: u8,
    pub marking_threshold: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub preset: Option<String>,
    pub geometry: Geometry,
    pub material: MaterialParams,
    pub weights: CostWeights,
    pub solver: LinearSolver,
    pub scenarios: Vec<Scenario>,
    pub benchmark: BenchmarkSource,
    pub mesh: MeshConfig,
    pub continuation: ContinuationConfig,
    pub output: PathBuf,
}

impl ExperimentConfig {
    pub fn model(&self) -> PhaseFieldModel {
        PhaseFieldModel {
            material: self.material,
            weights: self.weights,
            solver: self.solver,
            scenarios: self.scenarios.clone(),
            strips: self.geometry.strips.clone(),
        }
    }

    /// Options of the benchmark generation solve.
    pub fn benchmark_options(&self) -> Option<SolverOptions> {
        match self.benchmark {
            BenchmarkSource::Generate { tol, max_iter, .. } => Some(SolverOptions { tol, max_iter, ..Default::default() }),
            BenchmarkSource::File(_) => None,
        }
    }
}

/// Benchmark volume weight of the built-in presets, relative to `nu`.
pub const PRESET_BENCHMARK_VOLUME_FACTOR: f64 = 0.5;

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    preset: Option<String>,
    order: Option<String>,
    #[serde(default)]
    normalize: bool,
    output: Option<PathBuf>,
    #[serde(default)]
    material: RawMaterial,
    #[serde(default)]
    weights: RawWeights,
    #[serde(default)]
    phase: RawPhase,
    #[serde(default)]
    smoothing: RawSmoothing,
    #[serde(default)]
    mesh: RawMesh,
    #[serde(default)]
    solver: RawSolver,
    #[serde(default)]
    benchmark: RawBenchmark,
    geometry: Option<RawGeometry>,
    #[serde(default)]
    scenario: Vec<RawScenario>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawMaterial {
    lambda: Option<f64>,
    mu: Option<f64>,
    delta: Option<f64>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawWeights {
    nu: Option<f64>,
    eta_weight: Option<f64>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawPhase {
    epsilon: Option<f64>,
    epsilon_factor: Option<f64>,
    epsilon_min: Option<f64>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawSmoothing {
    gamma_h: Option<f64>,
    gamma_m: Option<f64>,
    gamma_h_factor: Option<f64>,
    gamma_h_max: Option<f64>,
    gamma_m_factor: Option<f64>,
    gamma_m_min: Option<f64>,
    cost_scale: Option<f64>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawMesh {
    level: Option<u8>,
    max_level: Option<u8>,
    marking_threshold: Option<f64>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawSolver {
    stage_tol: Option<f64>,
    final_tol: Option<f64>,
    max_iter: Option<usize>,
    max_stages: Option<usize>,
    linear: Option<String>,
    cg_tol: Option<f64>,
    cg_cap_factor: Option<f64>,
    bounds: Option<bool>,
    repair_attempts: Option<usize>,
    repair_shift: Option<f64>,
    success_tolerance: Option<f64>,
    objective_epsilon: Option<f64>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawBenchmark {
    file: Option<PathBuf>,
    tol: Option<f64>,
    max_iter: Option<usize>,
    volume_weight: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSegment {
    side: String,
    from: f64,
    to: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGeometry {
    #[serde(default = "unit_domain")]
    domain: [f64; 4],
    dirichlet: Vec<RawSegment>,
    neumann: Vec<RawSegment>,
    #[serde(default)]
    strips: Vec<[f64; 4]>,
}

fn unit_domain() -> [f64; 4] {
    [0.0, 0.0, 1.0, 1.0]
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    segment: usize,
    traction: Option<[f64; 2]>,
    angle: Option<f64>,
    magnitude: Option<f64>,
    probability: f64,
}

fn invalid(key: &str, msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { key: key.into(), msg: msg.into() }
}

fn positive(name: &'static str, value: f64) -> Result<f64, ConfigError> {
    if value > 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(ConfigError::NegativeWeight { name, value })
    }
}

fn parse_side(s: &str) -> Result<Side, ConfigError> {
    Side::parse(s).ok_or_else(|| invalid("side", format!("`{s}` is not one of bottom, right, top, left")))
}

fn geometry_from_raw(g: &RawGeometry) -> Result<Geometry, ConfigError> {
    let [x0, y0, x1, y1] = g.domain;
    if !(x1 > x0 && y1 > y0) {
        return Err(invalid("geometry.domain", "expected [x0, y0, x1, y1] with x1 > x0 and y1 > y0"));
    }
    let mut segments = Vec::new();
    for s in &g.dirichlet {
        segments.push(SegmentSpec { side: parse_side(&s.side)?, from: s.from, to: s.to, kind: BoundaryKind::Dirichlet });
    }
    for (i, s) in g.neumann.iter().enumerate() {
        segments.push(SegmentSpec { side: parse_side(&s.side)?, from: s.from, to: s.to, kind: BoundaryKind::Neumann(i) });
    }
    let strips = g.strips.iter().map(|&[x0, y0, x1, y1]| Strip { x0, y0, x1, y1 }).collect();
    Ok(Geometry { domain: Domain { x0, y0, x1, y1 }, segments, strips })
}

/// Rejects Dirichlet and Neumann segments that share boundary at `level`.
fn check_overlap(geometry: &Geometry, level: u8) -> Result<(), ConfigError> {
    let snapped = geometry
        .segments
        .iter()
        .map(|s| snap_segment(s, &geometry.domain, level).map_err(|e| invalid("geometry", e.to_string())))
        .collect::<Result<Vec<_>, _>>()?;
    for a in &snapped {
        for b in &snapped {
            let mixed = matches!(a.kind, BoundaryKind::Dirichlet) && matches!(b.kind, BoundaryKind::Neumann(_));
            if mixed && a.side == b.side && a.start < b.end && b.start < a.end {
                return Err(ConfigError::BoundaryOverlap(a.side.name()));
            }
        }
    }
    Ok(())
}

fn scenario_from_raw(id: usize, s: &RawScenario, segments: usize) -> Result<Scenario, ConfigError> {
    if s.segment >= segments {
        return Err(invalid("scenario.segment", format!("segment {} does not exist ({segments} neumann segments)", s.segment)));
    }
    let traction = match (s.traction, s.angle, s.magnitude) {
        (Some(t), None, None) => t,
        (None, Some(a), Some(m)) => fan_traction(m, a),
        (None, None, Some(m)) => fan_traction(m, 0.0),
        _ => return Err(invalid("scenario", "give either `traction` or `magnitude` (with optional `angle`)")),
    };
    if !traction.iter().all(|t| t.is_finite()) {
        return Err(invalid("scenario.traction", "non-finite traction"));
    }
    Ok(Scenario { id, load: SurfaceLoad::single(s.segment, traction), probability: s.probability })
}

/// Checks the probabilities, normalising them first when asked to.
fn check_probabilities(scenarios: &mut [Scenario], normalize: bool) -> Result<(), ConfigError> {
    if scenarios.is_empty() {
        return Err(ConfigError::NoScenarios);
    }
    if let Some(p) = scenarios.iter().map(|s| s.probability).find(|p| !(p.is_finite() && *p >= 0.0)) {
        return Err(invalid("scenario.probability", format!("probability {p} is negative or not finite")));
    }
    let total: f64 = scenarios.iter().map(|s| s.probability).sum();
    if normalize {
        if !(total > 0.0) {
            return Err(ConfigError::ProbabilitySum(total));
        }
        scenarios.iter_mut().for_each(|s| s.probability /= total);
    } else if (total - 1.0).abs() > 1e-9 {
        // round away binary noise so 0.5 + 0.6 reports as 1.1
        let shown = (total * 1e12).round() / 1e12;
        return Err(ConfigError::ProbabilitySum(shown));
    }
    Ok(())
}

/// Command-line overrides applied on top of a configuration file.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Overrides {
    /// Replaces the preset (and any explicit geometry).
    pub preset: Option<String>,
    pub order: Option<DominanceOrder>,
    pub output: Option<PathBuf>,
    /// KKT tolerance of the final stage.
    pub tol: Option<f64>,
    pub max_level: Option<u8>,
}

/// Parses a configuration from TOML text.
pub fn parse_config_str(text: &str) -> Result<ExperimentConfig, ConfigError> {
    parse_config_str_with(text, &Overrides::default())
}

pub fn parse_config_str_with(text: &str, overrides: &Overrides) -> Result<ExperimentConfig, ConfigError> {
    let mut raw: RawConfig = toml::from_str(text).map_err(|e| ConfigError::Syntax(e.message().to_string()))?;
    if let Some(p) = &overrides.preset {
        raw.preset = Some(p.clone());
        raw.geometry = None;
    }
    if let Some(o) = overrides.order {
        raw.order = Some(o.to_string());
    }
    if let Some(dir) = &overrides.output {
        raw.output = Some(dir.clone());
    }
    if let Some(t) = overrides.tol {
        raw.solver.final_tol = Some(t);
    }
    if let Some(l) = overrides.max_level {
        raw.mesh.max_level = Some(l);
    }

    let mesh = MeshConfig {
        level: raw.mesh.level.unwrap_or(5),
        max_level: raw.mesh.max_level.unwrap_or(raw.mesh.level.unwrap_or(5).saturating_add(4).min(MAX_SUPPORTED_LEVEL)),
        marking_threshold: raw.mesh.marking_threshold.unwrap_or(1.0),
    };
    if mesh.level > mesh.max_level || mesh.max_level > MAX_SUPPORTED_LEVEL || mesh.level == 0 {
        return Err(invalid("mesh", format!("need 1 <= level <= max_level <= {MAX_SUPPORTED_LEVEL}")));
    }
    if !(mesh.marking_threshold > 0.0) {
        return Err(invalid("mesh.marking_threshold", "must be positive"));
    }

    let (geometry, preset_scenarios) = match (&raw.preset, &raw.geometry) {
        (Some(_), Some(_)) => return Err(invalid("geometry", "give either `preset` or `[geometry]`, not both")),
        (Some(name), None) => {
            let p = build_preset(name, mesh.level)?;
            (p.geometry, p.scenarios)
        }
        (None, Some(g)) => (geometry_from_raw(g)?, Vec::new()),
        (None, None) => return Err(invalid("preset", "a preset or a [geometry] table is required")),
    };
    check_overlap(&geometry, mesh.level)?;
    let neumann = geometry.segments.iter().filter(|s| matches!(s.kind, BoundaryKind::Neumann(_))).count();

    let mut scenarios = if raw.scenario.is_empty() {
        preset_scenarios
    } else {
        raw.scenario.iter().enumerate().map(|(i, s)| scenario_from_raw(i, s, neumann)).collect::<Result<Vec<_>, _>>()?
    };
    check_probabilities(&mut scenarios, raw.normalize)?;

    let dm = MaterialParams::default();
    let material = MaterialParams {
        lambda: raw.material.lambda.unwrap_or(dm.lambda),
        mu: raw.material.mu.unwrap_or(dm.mu),
        delta: raw.material.delta.unwrap_or(dm.delta),
    };
    material.validate().map_err(|e| invalid("material", e.to_string()))?;

    let dw = CostWeights::default();
    let weights = CostWeights {
        nu: positive("nu", raw.weights.nu.unwrap_or(dw.nu))?,
        eta_weight: positive("eta_weight", raw.weights.eta_weight.unwrap_or(dw.eta_weight))?,
    };

    let dp = PhaseFieldParams::default();
    let phase = PhaseFieldParams {
        epsilon: raw.phase.epsilon.unwrap_or(dp.epsilon),
        epsilon_factor: raw.phase.epsilon_factor.unwrap_or(dp.epsilon_factor),
        epsilon_min: raw.phase.epsilon_min.unwrap_or(dp.epsilon_min),
    };
    phase.validate().map_err(|m| invalid("phase", m))?;

    let ds = SmoothingParams::default();
    let rs = &raw.smoothing;
    let smoothing = SmoothingParams {
        gamma_h: rs.gamma_h.unwrap_or(ds.gamma_h),
        gamma_m: rs.gamma_m.unwrap_or(ds.gamma_m),
        gamma_h_factor: rs.gamma_h_factor.unwrap_or(ds.gamma_h_factor),
        gamma_h_max: rs.gamma_h_max.unwrap_or(ds.gamma_h_max),
        gamma_m_factor: rs.gamma_m_factor.unwrap_or(ds.gamma_m_factor),
        gamma_m_min: rs.gamma_m_min.unwrap_or(ds.gamma_m_min),
        cost_scale: rs.cost_scale.or(ds.cost_scale),
    };
    smoothing.validate().map_err(|m| invalid("smoothing", m))?;

    let order = match &raw.order {
        Some(s) => s.parse::<DominanceOrder>().map_err(|e| invalid("order", e))?,
        None => DominanceOrder::First,
    };

    let dc = ContinuationConfig::default();
    let rv = &raw.solver;
    let continuation = ContinuationConfig {
        phase,
        smoothing,
        order,
        stage_tol: rv.stage_tol.unwrap_or(dc.stage_tol),
        final_tol: rv.final_tol.unwrap_or(dc.final_tol),
        max_iter: rv.max_iter.unwrap_or(dc.max_iter),
        max_stages: rv.max_stages.unwrap_or(dc.max_stages),
        marking_threshold: mesh.marking_threshold,
        objective_epsilon: rv.objective_epsilon.or(dc.objective_epsilon),
        bounds: rv.bounds.unwrap_or(dc.bounds),
        repair_attempts: rv.repair_attempts.unwrap_or(dc.repair_attempts),
        repair_shift: rv.repair_shift.unwrap_or(dc.repair_shift),
        success_tolerance: rv.success_tolerance.unwrap_or(dc.success_tolerance),
    };
    for (key, v) in [("solver.stage_tol", continuation.stage_tol), ("solver.final_tol", continuation.final_tol)] {
        if !(v > 0.0) {
            return Err(invalid(key, "must be positive"));
        }
    }
    if continuation.max_stages == 0 || continuation.max_iter == 0 {
        return Err(invalid("solver", "max_stages and max_iter must be at least 1"));
    }

    let solver = match rv.linear.as_deref().unwrap_or("direct") {
        "direct" => LinearSolver::Direct,
        "cg" => LinearSolver::ConjugateGradient { tol: rv.cg_tol.unwrap_or(1e-12), cap_factor: rv.cg_cap_factor.unwrap_or(200.0) },
        other => return Err(invalid("solver.linear", format!("`{other}` is not `direct` or `cg`"))),
    };

    let benchmark = match &raw.benchmark.file {
        Some(path) => BenchmarkSource::File(path.clone()),
        None => {
            let default_weight = raw.preset.as_ref().map(|_| weights.nu * PRESET_BENCHMARK_VOLUME_FACTOR);
            let volume_weight = match raw.benchmark.volume_weight.or(default_weight) {
                Some(w) => Some(positive("benchmark.volume_weight", w)?),
                None => None,
            };
            BenchmarkSource::Generate {
                tol: raw.benchmark.tol.unwrap_or(1e-3),
                max_iter: raw.benchmark.max_iter.unwrap_or(300),
                volume_weight,
            }
        }
    };

    Ok(ExperimentConfig {
        preset: raw.preset,
        geometry,
        material,
        weights,
        solver,
        scenarios,
        benchmark,
        mesh,
        continuation,
        output: raw.output.unwrap_or_else(|| PathBuf::from("out")),
    })
}

/// Reads and parses a configuration file. A relative benchmark file path is
/// resolved against the configuration's directory.
pub fn parse_config(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    parse_config_with(path, &Overrides::default())
}

pub fn parse_config_with(path: &Path, overrides: &Overrides) -> Result<ExperimentConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io { path: path.to_path_buf(), msg: e.to_string() })?;
    let mut cfg = parse_config_str_with(&text, overrides)?;
    if let BenchmarkSource::File(p) = &cfg.benchmark {
        if p.is_relative() {
            if let Some(dir) = path.parent() {
                cfg.benchmark = BenchmarkSource::File(dir.join(p));
            }
        }
    }
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preset_only_gives_defaults() {
        let c = parse_config_str("preset = \"cantilever-equal\"").unwrap();
        assert_eq!(c.material, MaterialParams { lambda: 80.0, mu: 80.0, delta: 1e-4 });
        assert_eq!(c.weights, CostWeights { nu: 0.04096, eta_weight: 0.00064 });
        assert_eq!(c.continuation.phase.epsilon, 0.025);
        assert_eq!(c.continuation.phase.epsilon_min, 7.91e-3);
        assert_eq!(c.scenarios.len(), 15);
        assert_eq!(c.continuation.order, DominanceOrder::First);
        assert_eq!((c.mesh.level, c.mesh.max_level), (5, 9));
    }

    #[test]
    fn probability_sum_error() {
        let text = r#"
            [geometry]
            dirichlet = [{ side = "left", from = 0.0, to = 1.0 }]
            neumann = [{ side = "right", from = 0.4, to = 0.6 }]
            [[scenario]]
            segment = 0
            traction = [0.0, -1.0]
            probability = 0.5
            [[scenario]]
            segment = 0
            traction = [0.0, 1.0]
            probability = 0.6
        "#;
        let e = parse_config_str(text).unwrap_err();
        assert_eq!(e.to_string(), "probabilities sum to 1.1");
        let c = parse_config_str(&format!("normalize = true\n{text}")).unwrap();
        assert!((c.scenarios[0].probability - 0.5 / 1.1).abs() < 1e-15);
    }

    #[test]
    fn named_errors() {
        let geom = r#"
            [geometry]
            dirichlet = [{ side = "left", from = 0.0, to = 1.0 }]
            neumann = [{ side = "left", from = 0.4, to = 0.6 }]
        "#;
        let clean = "[geometry]\ndirichlet = [{ side = \"left\", from = 0.0, to = 1.0 }]\nneumann = [{ side = \"right\", from = 0.4, to = 0.6 }]";
        assert_eq!(parse_config_str(clean).unwrap_err(), ConfigError::NoScenarios);
        assert_eq!(ConfigError::NoScenarios.to_string(), "at least one scenario required");
        let with = format!("{geom}\n[[scenario]]\nsegment = 0\nmagnitude = 1.0\nprobability = 1.0\n");
        assert_eq!(parse_config_str(&with).unwrap_err(), ConfigError::BoundaryOverlap("left"));
        assert_eq!(parse_config_str("preset = \"bridge\"").unwrap_err(), ConfigError::UnknownPreset("bridge".into()));
        assert!(matches!(
            parse_config_str("preset = \"cantilever-equal\"\n[weights]\nnu = -1.0").unwrap_err(),
            ConfigError::NegativeWeight { name: "nu", .. }
        ));
        assert!(matches!(parse_config_str("preset = 3").unwrap_err(), ConfigError::Syntax(_)));
        assert!(matches!(parse_config_str("preset = \"cantilever-equal\"\nfoo = 1").unwrap_err(), ConfigError::Syntax(_)));
    }

    #[test]
    fn explicit_geometry_and_overrides() {
        let text = r#"
            order = "second"
            output = "results"
            [mesh]
            level = 3
            max_level = 4
            [solver]
            linear = "cg"
            [benchmark]
            file = "vb.dat"
            [geometry]
            domain = [0.0, 0.0, 2.0, 1.0]
            dirichlet = [{ side = "left", from = 0.0, to = 1.0 }]
            neumann = [{ side = "right", from = 0.25, to = 0.75 }]
            strips = [[1.9, 0.25, 2.0, 0.75]]
            [[scenario]]
            segment = 0
            angle = 90.0
            magnitude = 2.0
            probability = 1.0
        "#;
        let c = parse_config_str(text).unwrap();
        assert_eq!(c.continuation.order, DominanceOrder::Second);
        assert_eq!(c.geometry.domain.x1, 2.0);
        assert_eq!(c.benchmark, BenchmarkSource::File("vb.dat".into()));
        assert!(matches!(c.solver, LinearSolver::ConjugateGradient { .. }));
        let g = c.scenarios[0].load.tractions[0].1;
        assert!((g[0] - 2.0).abs() < 1e-15 && g[1].abs() < 1e-15);
        assert_eq!(c.output, PathBuf::from("results"));
    }

    #[test]
    fn overrides_win() {
        let o = Overrides {
            preset: Some("carrier-equalish".into()),
            order: Some(DominanceOrder::Second),
            output: Some("elsewhere".into()),
            tol: Some(1e-4),
            max_level: Some(6),
        };
        let c = parse_config_str_with("preset = \"cantilever-equal\"\noutput = \"x\"", &o).unwrap();
        assert_eq!(c.preset.as_deref(), Some("carrier-equalish"));
        assert_eq!(c.scenarios.len(), 10);
        assert_eq!(c.continuation.order, DominanceOrder::Second);
        assert_eq!(c.output, PathBuf::from("elsewhere"));
        assert_eq!(c.continuation.final_tol, 1e-4);
        assert_eq!(c.mesh.max_level, 6);
    }

    #[test]
    fn generated_benchmark_weight() {
        let c = parse_config_str("preset = \"carrier-varying\"").unwrap();
        match c.benchmark {
            BenchmarkSource::Generate { volume_weight, .. } => assert_eq!(volume_weight, Some(0.04096 * 0.5)),
            other => panic!("{other:?}"),
        }
        let c = parse_config_str("preset = \"carrier-varying\"\n[benchmark]\nvolume_weight = 0.01").unwrap();
        assert!(matches!(c.benchmark, BenchmarkSource::Generate { volume_weight: Some(w), .. } if w == 0.01));
    }
}
