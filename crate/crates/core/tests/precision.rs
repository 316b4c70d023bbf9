use phasedom::elasticity::{assemble_system, compliance, solve_equilibrium, LinearSolver, MaterialParams, SurfaceLoad};
use phasedom::functionals::{perimeter_energy, volume};
use phasedom::mesh::{BoundaryKind, SegmentSpec, Side};
use phasedom::{Domain, Field, Field32, QuadMesh};

#[test]
fn single_precision_tracks_double() {
    let segs = [
        SegmentSpec { side: Side::Left, from: 0.0, to: 1.0, kind: BoundaryKind::Dirichlet },
        SegmentSpec { side: Side::Right, from: 0.25, to: 0.75, kind: BoundaryKind::Neumann(0) },
    ];
    let mesh = QuadMesh::uniform(Domain::unit(), 3, 5, &segs).unwrap().refine_cells(&[20]).unwrap();
    let f = |x: f64, y: f64| (4.0 * x).cos() * (2.0 * y).sin();
    let v64 = Field::from_fn(&mesh, f);
    let v32 = Field32::from_fn(&mesh, |x, y| f(x as f64, y as f64) as f32);
    let (l64, _) = perimeter_energy(&mesh, &v64, 0.05);
    let (l32, _) = perimeter_energy(&mesh, &v32, 0.05f32);
    assert!(((l32 as f64) - l64).abs() <= 1e-5 * l64);
    assert!(((volume(&mesh, &v32).0 as f64) - volume(&mesh, &v64).0).abs() <= 1e-5);

    let load = SurfaceLoad::single(0, [0.0, -1.0]);
    let c64 = {
        let sys = assemble_system(&mesh, &v64, MaterialParams::default(), &load, LinearSolver::Direct).unwrap();
        compliance(&sys.load, &solve_equilibrium(&mesh, &sys).unwrap())
    };
    let c32 = {
        let sys = assemble_system(&mesh, &v32, MaterialParams::default(), &load, LinearSolver::Direct).unwrap();
        compliance(&sys.load, &solve_equilibrium(&mesh, &sys).unwrap())
    };
    assert!(((c32 as f64) - c64).abs() <= 1e-3 * c64, "{c32} vs {c64}");
}
