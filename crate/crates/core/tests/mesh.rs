use std::collections::BTreeSet;

use phasedom::field::{prolongate, NodalField};
use phasedom::mesh::{mark_interface_cells, CellKey, Domain, NodeKind, QuadMesh};
use proptest::prelude::*;

/// Half-open lattice extent of a cell at a common depth.
fn extent(k: &CellKey, depth: u8) -> (u64, u64, u64, u64) {
    let s = 1u64 << (depth - k.level);
    let (x, y) = (k.i as u64 * s, k.j as u64 * s);
    (x, y, x + s, y + s)
}

fn edge_adjacent(a: &CellKey, b: &CellKey, depth: u8) -> bool {
    let (ax0, ay0, ax1, ay1) = extent(a, depth);
    let (bx0, by0, bx1, by1) = extent(b, depth);
    let overlap = |p0: u64, p1: u64, q0: u64, q1: u64| p0.max(q0) < p1.min(q1);
    ((ax1 == bx0 || bx1 == ax0) && overlap(ay0, ay1, by0, by1))
        || ((ay1 == by0 || by1 == ay0) && overlap(ax0, ax1, bx0, bx1))
}

/// Brute-force 2:1 closure: split the coarser cell of any unbalanced pair until none remain.
fn balance_oracle(mut leaves: BTreeSet<CellKey>, depth: u8) -> BTreeSet<CellKey> {
    loop {
        let list: Vec<CellKey> = leaves.iter().copied().collect();
        let mut split = None;
        'scan: for a in &list {
            for b in &list {
                if a.level + 1 < b.level && edge_adjacent(a, b, depth) {
                    split = Some(*a);
                    break 'scan;
                }
            }
        }
        match split {
            Some(k) => {
                leaves.remove(&k);
                leaves.extend(k.children());
            }
            None => return leaves,
        }
    }
}

fn leaves(mesh: &QuadMesh) -> BTreeSet<CellKey> {
    mesh.cells().iter().copied().collect()
}

#[test]
fn balance_matches_brute_force_oracle() {
    // three levels: refine one corner twice, then the grandchild next to a coarse cell
    let m0 = QuadMesh::uniform(Domain::unit(), 1, 4, &[]).unwrap();
    let m1 = m0.refine_cells(&[m0.cell_index(&CellKey::new(1, 0, 0)).unwrap()]).unwrap();
    let target = CellKey::new(2, 1, 1);
    let m2 = m1.refine_cells(&[m1.cell_index(&target).unwrap()]).unwrap();
    let deep = CellKey::new(3, 3, 3);
    let m3 = m2.refine_cells(&[m2.cell_index(&deep).unwrap()]).unwrap();

    let mut naive = leaves(&m2);
    naive.remove(&deep);
    naive.extend(deep.children());
    let expect = balance_oracle(naive, 6);
    assert_eq!(leaves(&m3), expect);
    // the coarse neighbours of the split cell were refined
    for k in [CellKey::new(1, 1, 0), CellKey::new(1, 0, 1), CellKey::new(1, 1, 1)] {
        assert!(!leaves(&m3).contains(&k), "{k:?} should have been split");
    }
    m3.check_consistency().unwrap();
}

#[test]
fn steep_column_marks_column_and_neighbours() {
    let mesh = QuadMesh::uniform(Domain::unit(), 2, 4, &[]).unwrap();
    // jump across the third column of cells, background slope 0.1
    let v = NodalField::from_fn(&mesh, |x, _| 0.1 * x + if x > 0.6 { 2.0 } else { 0.0 });
    let marks = mark_interface_cells(&mesh, &v, 1.0);
    let mut expect = BTreeSet::new();
    for c in 0..mesh.num_cells() {
        let (x0, _, x1, _) = mesh.cell_bounds(c);
        if x0 >= 0.25 && x1 <= 1.0 {
            expect.insert(c);
        }
    }
    assert_eq!(marks.into_iter().collect::<BTreeSet<_>>(), expect);
    assert!(mark_interface_cells(&mesh, &NodalField::constant(&mesh, 1, 0.3), 1.0).is_empty());
}

#[test]
fn linear_field_marks_everything() {
    let mesh = QuadMesh::uniform(Domain::unit(), 3, 4, &[]).unwrap();
    let v = NodalField::from_fn(&mesh, |x, _| 2.0 * x - 1.0);
    assert_eq!(mark_interface_cells(&mesh, &v, 1.0).len(), mesh.num_cells());
}

#[test]
fn max_depth_error_is_named() {
    let mesh = QuadMesh::uniform(Domain::unit(), 2, 2, &[]).unwrap();
    let e = mesh.refine_cells(&[0]).unwrap_err();
    assert!(e.to_string().contains("max depth exceeded"), "{e}");
}

fn refined(seq: &[Vec<usize>]) -> QuadMesh {
    let mut mesh = QuadMesh::uniform(Domain::unit(), 2, 6, &[]).unwrap();
    for marks in seq {
        let ok: Vec<usize> = marks
            .iter()
            .map(|m| m % mesh.num_cells())
            .filter(|&c| mesh.cell(c).level < mesh.max_level())
            .collect();
        mesh = mesh.refine_cells(&ok).unwrap();
    }
    mesh
}

fn marks_strategy() -> impl Strategy<Value = Vec<Vec<usize>>> {
    prop::collection::vec(prop::collection::vec(0usize..10_000, 0..6), 1..5)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn refinement_keeps_mesh_consistent(seq in marks_strategy()) {
        let mesh = refined(&seq);
        prop_assert!(mesh.check_consistency().is_ok());
        let all = leaves(&mesh);
        prop_assert_eq!(balance_oracle(all.clone(), 6), all);
        let area: f64 = (0..mesh.num_cells()).map(|c| { let (hx, hy) = mesh.cell_size(c); hx * hy }).sum();
        prop_assert!((area - 1.0).abs() < 1e-12);
    }

    #[test]
    fn hanging_nodes_average_their_parents(seq in marks_strategy(), a in -2.0f64..2.0, b in -2.0f64..2.0) {
        let mesh = refined(&seq);
        let f = NodalField::from_fn(&mesh, |x, y| a * x + b * y * y);
        for n in 0..mesh.num_nodes() {
            if let NodeKind::Hanging { parents } = mesh.nodes()[n].kind {
                let avg = 0.5 * (f.get(parents[0], 0) + f.get(parents[1], 0));
                prop_assert_eq!(f.node_value(&mesh, n, 0), avg);
            }
        }
    }

    #[test]
    fn prolongation_preserves_range_and_function(seq in marks_strategy(), more in prop::collection::vec(0usize..10_000, 1..8), seed in 0u64..1000) {
        let old = refined(&seq);
        let new = refined(&[seq.clone(), vec![more]].concat());
        prop_assert!(old.is_refined_by(&new));
        let vals: Vec<f64> = (0..old.num_dofs()).map(|d| ((d as u64 * 7919 + seed) % 1000) as f64 / 500.0 - 1.0).collect();
        let f = NodalField::from_values(&old, 1, vals).unwrap();
        let g = prolongate(&f, &old, &new).unwrap();
        let (lo, hi) = f.min_max();
        let (glo, ghi) = g.min_max();
        prop_assert!(glo >= lo - 1e-15 && ghi <= hi + 1e-15);
        for d in 0..new.num_dofs() {
            let (x, y) = new.dof_position(d);
            let direct = f.evaluate(&old, x, y, 0).unwrap();
            prop_assert!((g.get(d, 0) - direct).abs() <= 1e-14);
        }
    }

    #[test]
    fn empty_marks_and_dump_roundtrip(seq in marks_strategy()) {
        let mesh = refined(&seq);
        let same = mesh.refine_cells(&[]).unwrap();
        prop_assert_eq!(leaves(&same), leaves(&mesh));
        let (back, used) = QuadMesh::parse_dump(&mesh.dump()).unwrap();
        prop_assert_eq!(used, 1 + mesh.num_cells() + mesh.num_nodes());
        prop_assert_eq!(leaves(&back), leaves(&mesh));
        prop_assert_eq!(back.num_hanging(), mesh.num_hanging());
    }
}
