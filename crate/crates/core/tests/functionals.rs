use phasedom::field::{prolongate, NodalField};
use phasedom::functionals::{char_approx, double_well, lumped_mass, perimeter_energy, volume};
use phasedom::mesh::{Domain, QuadMesh};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn fd_check(mesh: &QuadMesh, v: &NodalField<f64>, f: impl Fn(&NodalField<f64>) -> (f64, NodalField<f64>)) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (_, g) = f(v);
    let scale = g.values().iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let h = 1e-6;
    for _ in 0..20 {
        let d = rng.gen_range(0..mesh.num_dofs());
        let mut vp = v.clone();
        vp.set(d, 0, v.get(d, 0) + h);
        let mut vm = v.clone();
        vm.set(d, 0, v.get(d, 0) - h);
        let fd = (f(&vp).0 - f(&vm).0) / (2.0 * h);
        let a = g.get(d, 0);
        let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(1e-6 * scale);
        assert!(rel <= 1e-6, "dof {d}: analytic {a}, fd {fd}");
    }
}

fn random_field(mesh: &QuadMesh, seed: u64) -> NodalField<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    NodalField::from_values(mesh, 1, (0..mesh.num_dofs()).map(|_| rng.gen_range(-1.2..1.2)).collect()).unwrap()
}

#[test]
fn gradients_match_finite_differences() {
    let uniform = QuadMesh::uniform(Domain::unit(), 2, 5, &[]).unwrap();
    let adaptive = uniform.refine_cells(&[0, 5]).unwrap();
    assert!(adaptive.num_hanging() > 0);
    for mesh in [&uniform, &adaptive] {
        let v = random_field(mesh, 9);
        fd_check(mesh, &v, |v| perimeter_energy(mesh, v, 0.07));
        fd_check(mesh, &v, |v| volume(mesh, v));
    }
}

#[test]
fn linear_profile_converges_to_continuum_value() {
    let eps = 0.1;
    let exact = 2.0 * eps + 3.0 / (20.0 * eps);
    let mut mesh = QuadMesh::uniform(Domain::unit(), 1, 9, &[]).unwrap();
    let mut v = NodalField::from_fn(&mesh, |x, _| 2.0 * x - 1.0);
    let mut last_err = f64::INFINITY;
    for _ in 0..6 {
        let (l, _) = perimeter_energy(&mesh, &v, eps);
        let err = (l - exact).abs();
        assert!(err < last_err, "error {err} did not decrease from {last_err}");
        last_err = err;
        let all: Vec<usize> = (0..mesh.num_cells()).collect();
        let fine = mesh.refine_cells(&all).unwrap();
        v = prolongate(&v, &mesh, &fine).unwrap();
        mesh = fine;
    }
    assert!(last_err < 1e-3 * exact, "final error {last_err}");
}

#[test]
fn gradient_term_is_refinement_invariant() {
    // with Ψ ≡ 0 in the limit ε → ∞ only ε/2 ∫|∇V|² = 2ε remains; checked via scaling
    let mesh = QuadMesh::uniform(Domain::unit(), 2, 4, &[]).unwrap();
    let v = NodalField::from_fn(&mesh, |x, _| 2.0 * x - 1.0);
    let fine = mesh.refine_cells(&(0..mesh.num_cells()).collect::<Vec<_>>()).unwrap();
    let vf = prolongate(&v, &mesh, &fine).unwrap();
    let big = 1e8;
    let a = perimeter_energy(&mesh, &v, big).0 / big;
    let b = perimeter_energy(&fine, &vf, big).0 / big;
    assert!((a - 2.0).abs() < 1e-12 && (b - 2.0).abs() < 1e-12, "{a} {b}");
}

#[test]
fn constant_field_values() {
    let mesh = QuadMesh::uniform(Domain::unit(), 3, 4, &[]).unwrap();
    let zero = NodalField::constant(&mesh, 1, 0.0f64);
    let (l, _) = perimeter_energy(&mesh, &zero, 0.2);
    assert!((l - 0.5625 / (2.0 * 0.2)).abs() < 1e-12);
    assert!((volume(&mesh, &zero).0 - 0.25).abs() < 1e-14);
    let one = NodalField::constant(&mesh, 1, 1.0f64);
    let (l1, g1) = perimeter_energy(&mesh, &one, 0.2);
    assert_eq!(l1, 0.0);
    assert!(g1.values().iter().all(|&g| g == 0.0));
    assert!((volume(&mesh, &one).0 - 1.0).abs() < 1e-14);
    assert!(volume(&mesh, &NodalField::constant(&mesh, 1, -1.0f64)).0.abs() < 1e-15);
}

#[test]
fn lumped_mass_on_adaptive_mesh_sums_to_area() {
    let mesh = QuadMesh::uniform(Domain { x0: 0.0, y0: 0.0, x1: 2.0, y1: 1.0 }, 2, 5, &[]).unwrap().refine_cells(&[3, 7]).unwrap();
    let m: Vec<f64> = lumped_mass(&mesh);
    assert!((m.iter().sum::<f64>() - 2.0).abs() < 1e-12);
    assert!(m.iter().all(|&x| x > 0.0));
}

proptest! {
    #[test]
    fn pointwise_functions_are_consistent(v in -3.0f64..3.0) {
        let (psi, dpsi) = double_well(v);
        prop_assert!(psi >= 0.0);
        prop_assert!((dpsi - 2.25 * v * (v * v - 1.0)).abs() <= 1e-12 * (1.0 + dpsi.abs()));
        let (chi, dchi) = char_approx(v);
        prop_assert!((chi - 0.25 * (v + 1.0).powi(2)).abs() <= 1e-15 * (1.0 + chi));
        prop_assert!((dchi - 0.5 * (v + 1.0)).abs() <= 1e-15 * (1.0 + dchi.abs()));
    }

    #[test]
    fn volume_stays_in_domain_range(seed in 0u64..500) {
        let mesh = QuadMesh::uniform(Domain::unit(), 3, 5, &[]).unwrap().refine_cells(&[(seed % 64) as usize]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v = NodalField::from_values(&mesh, 1, (0..mesh.num_dofs()).map(|_| rng.gen_range(-1.0..=1.0)).collect()).unwrap();
        let (vol, _) = volume(&mesh, &v);
        prop_assert!((0.0..=1.0).contains(&vol));
        let (l, _) = perimeter_energy(&mesh, &v, 0.05);
        prop_assert!(l >= 0.0);
    }
}
