//! Built-in geometries and scenario sets.
//!
//! Segment positions, load directions and the carrier strip are reconstructions:
//! cantilever segments of width 0.1 centred at x = 0.25, 0.5, 0.75 on the bottom
//! edge with five directions each, carrier segments along the top edge.

use crate::elasticity::SurfaceLoad;
use crate::error::ConfigError;
use crate::mesh::{snap_segment, BoundaryKind, Domain, SegmentSpec, Side};
use crate::optimize::Strip;
use crate::stochastic::Scenario;

pub const PRESET_NAMES: [&str; 4] = ["cantilever-equal", "cantilever-varying", "carrier-equalish", "carrier-varying"];

/// Traction magnitude of the unit load tier in the cantilever presets.
pub const CANTILEVER_LOAD: f64 = 1.77;
/// Traction magnitude of the large loads in the carrier presets.
pub const CARRIER_LOAD: f64 = 0.5;

/// Load directions in degrees, measured from the downward normal.
pub const CANTILEVER_ANGLES: [f64; 5] = [-60.0, -30.0, 0.0, 30.0, 60.0];

#[derive(Clone, Debug, PartialEq)]
pub struct Geometry {
    pub domain: Domain,
    pub segments: Vec<SegmentSpec>,
    pub strips: Vec<Strip>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Preset {
    pub name: String,
    pub geometry: Geometry,
    pub scenarios: Vec<Scenario>,
}

/// Traction of magnitude `m` at `deg` degrees from the downward direction.
pub fn fan_traction(m: f64, deg: f64) -> [f64; 2] {
    let t = deg.to_radians();
    [m * t.sin(), -m * t.cos()]
}

/// Snapped extent of a bottom/top segment along x.
fn snapped_x(spec: &SegmentSpec, domain: &Domain, level: u8) -> Result<(f64, f64), ConfigError> {
    let s = snap_segment(spec, domain, level).map_err(|e| ConfigError::Invalid { key: "segment".into(), msg: e.to_string() })?;
    let f = (1u64 << crate::mesh::COORD_BITS) as f64;
    Ok((domain.x0 + domain.width() * s.start as f64 / f, domain.x0 + domain.width() * s.end as f64 / f))
}

fn cantilever(name: &str, level: u8, varying: bool) -> Result<Preset, ConfigError> {
    let domain = Domain::unit();
    let h = 1.0 / (1u64 << level) as f64;
    let mut segments = vec![SegmentSpec { side: Side::Left, from: 0.0, to: 1.0, kind: BoundaryKind::Dirichlet }];
    let mut strips = Vec::new();
    for (i, c) in [0.25, 0.5, 0.75].into_iter().enumerate() {
        let spec = SegmentSpec { side: Side::Bottom, from: c - 0.05, to: c + 0.05, kind: BoundaryKind::Neumann(i) };
        let (x0, x1) = snapped_x(&spec, &domain, level)?;
        strips.push(Strip { x0, y0: 0.0, x1, y1: h.max(1.0 / 32.0) });
        segments.push(spec);
    }
    let tiers = [1.0, 2.0 / 3.0, 1.0 / 3.0];
    let weights = [1.0, 2.0, 3.0];
    let total: f64 = weights.iter().map(|w| w * CANTILEVER_ANGLES.len() as f64).sum();
    let mut scenarios = Vec::new();
    for seg in 0..3 {
        for &deg in &CANTILEVER_ANGLES {
            let (m, p) = if varying { (tiers[seg], weights[seg] / total) } else { (1.0, 1.0 / 15.0) };
            scenarios.push(Scenario {
                id: scenarios.len(),
                load: SurfaceLoad::single(seg, fan_traction(m * CANTILEVER_LOAD, deg)),
                probability: p,
            });
        }
    }
    Ok(Preset { name: name.into(), geometry: Geometry { domain, segments, strips }, scenarios })
}

fn carrier(name: &str, level: u8, varying: bool) -> Result<Preset, ConfigError> {
    let domain = Domain::unit();
    let mut segments = vec![SegmentSpec { side: Side::Bottom, from: 0.0, to: 1.0, kind: BoundaryKind::Dirichlet }];
    for i in 0..10 {
        let c = (i as f64 + 0.5) / 10.0;
        segments.push(SegmentSpec { side: Side::Top, from: c - 1.0 / 32.0, to: c + 1.0 / 32.0, kind: BoundaryKind::Neumann(i) });
    }
    // plate of height 0.05 under the top edge, snapped to whole cells
    let n = (1u64 << level) as f64;
    let depth = ((0.05 * n).round().max(1.0)) / n;
    let strips = vec![Strip { x0: 0.0, y0: 1.0 - depth, x1: 1.0, y1: 1.0 }];
    let mut scenarios = Vec::new();
    for i in 0..10 {
        let (m, p) = if varying {
            if i % 2 == 0 {
                (1.0, 0.05)
            } else {
                (0.25, 0.15)
            }
        } else {
            (1.0, if i % 2 == 0 { 0.09 } else { 0.11 })
        };
        scenarios.push(Scenario { id: i, load: SurfaceLoad::single(i, [0.0, -m * CARRIER_LOAD]), probability: p });
    }
    Ok(Preset { name: name.into(), geometry: Geometry { domain, segments, strips }, scenarios })
}

/// Builds a preset for a mesh with initial level `level`.
pub fn build_preset(name: &str, level: u8) -> Result<Preset, ConfigError> {
    match name {
        "cantilever-equal" => cantilever(name, level, false),
        "cantilever-varying" => cantilever(name, level, true),
        "carrier-equalish" => carrier(name, level, false),
        "carrier-varying" => carrier(name, level, true),
        _ => Err(ConfigError::UnknownPreset(name.into())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sum(p: &Preset) -> f64 {
        p.scenarios.iter().map(|s| s.probability).sum()
    }

    #[test]
    fn cantilever_equal() {
        let p = build_preset("cantilever-equal", 5).unwrap();
        assert_eq!(p.scenarios.len(), 15);
        assert!(p.scenarios.iter().all(|s| s.probability == 1.0 / 15.0));
    }

    #[test]
    fn cantilever_varying_tiers() {
        let p = build_preset("cantilever-varying", 5).unwrap();
        assert!((sum(&p) - 1.0).abs() < 1e-15);
        let tier: Vec<f64> = (0..3).map(|t| p.scenarios[5 * t..5 * t + 5].iter().map(|s| s.probability).sum()).collect();
        for (t, expect) in tier.iter().zip([1.0 / 6.0, 2.0 / 6.0, 3.0 / 6.0]) {
            assert!((t - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn carrier_varying_ratio() {
        let p = build_preset("carrier-varying", 5).unwrap();
        assert_eq!(p.scenarios.len(), 10);
        assert!((sum(&p) - 1.0).abs() < 1e-15);
        let mags: Vec<f64> = p.scenarios.iter().map(|s| -s.load.tractions[0].1[1]).collect();
        assert_eq!(mags[1] / mags[0], 0.25);
        assert!((sum(&build_preset("carrier-equalish", 5).unwrap()) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn unknown_name() {
        assert_eq!(build_preset("bridge", 5).unwrap_err(), ConfigError::UnknownPreset("bridge".into()));
    }

    #[test]
    fn fan_is_symmetric_about_downward() {
        let a = fan_traction(1.0, 30.0);
        let b = fan_traction(1.0, -30.0);
        assert!((a[0] + b[0]).abs() < 1e-15 && a[1] == b[1] && a[1] < 0.0);
    }
}
