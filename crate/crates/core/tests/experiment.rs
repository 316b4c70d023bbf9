use std::fs;
use std::path::Path;

use phasedom::experiment::{parse_config_str, run_experiment, STRESS_CLAMP};
use phasedom::field::{project, NodalField};
use phasedom::mesh::{Domain, QuadMesh};
use proptest::prelude::*;

fn read_table(path: &Path) -> Vec<(f64, f64)> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| {
            let mut it = l.split_whitespace().map(|t| t.parse::<f64>().unwrap());
            (it.next().unwrap(), it.next().unwrap())
        })
        .collect()
}

fn small_run(dir: &Path, order: &str, extra: &str) -> phasedom::experiment::RunSummary {
    let text = format!(
        "preset = \"cantilever-varying\"\norder = \"{order}\"\noutput = \"{}\"\n{extra}\n[mesh]\nlevel = 3\nmax_level = 5\n[solver]\nmax_stages = 2\nmax_iter = 20\n",
        dir.display()
    );
    run_experiment(&parse_config_str(&text).unwrap()).unwrap()
}

#[test]
fn small_run_writes_consistent_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("run");
    let s = small_run(&dir, "second", "");
    for f in [
        "phasefield_initial.dat",
        "benchmark.dat",
        "phasefield_stage0.dat",
        "phasefield_stage1.dat",
        "phasefield_final.dat",
        "stages.log",
        "bench_cdf.dat",
        "opt_cdf.dat",
        "bench_isf.dat",
        "opt_isf.dat",
        "summary.txt",
    ] {
        assert!(dir.join(f).is_file(), "missing {f}");
    }
    for k in 0..15 {
        let text = fs::read_to_string(dir.join(format!("stress_s{k}.dat"))).unwrap();
        assert!(text.contains(&format!("clamp {STRESS_CLAMP}")));
        assert!(text.contains("chi(V) > 0.5"));
    }
    for name in ["bench", "opt"] {
        let cdf = read_table(&dir.join(format!("{name}_cdf.dat")));
        let isf = read_table(&dir.join(format!("{name}_isf.dat")));
        assert_eq!(cdf.len(), isf.len());
        assert_eq!(cdf.last().unwrap().1, 1.0);
        assert_eq!(cdf[0].1, 0.0);
        for w in cdf.windows(2) {
            assert!(w[0].0 < w[1].0 && w[0].1 <= w[1].1);
        }
        for w in isf.windows(3) {
            assert!(w[1].1 <= w[0].1);
            // ISF is convex in t; grid points are unevenly spaced
            let (t0, t1, t2) = (w[0].0, w[1].0, w[2].0);
            let chord = w[0].1 + (w[2].1 - w[0].1) * (t1 - t0) / (t2 - t0);
            assert!(w[1].1 <= chord + 1e-12);
        }
    }
    let log = fs::read_to_string(dir.join("stages.log")).unwrap();
    let rows: Vec<&str> = log.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows.len(), s.stages);
    assert!(rows.iter().all(|r| r.split_whitespace().count() == 8));
    assert_eq!(s.costs.len(), 15);
    assert_eq!(s.slacks.len(), s.thresholds.len());

    // the final field can seed another run as a benchmark file
    let again = tmp.path().join("again");
    let extra = format!("[benchmark]\nfile = \"{}\"", dir.join("phasefield_final.dat").display());
    let s2 = small_run(&again, "first", &extra);
    assert_eq!(s2.stages, 2);
}

#[test]
fn projection_of_dump_matches_direct_evaluation() {
    let coarse = QuadMesh::uniform(Domain::unit(), 2, 6, &[]).unwrap().refine_cells(&[5, 6]).unwrap();
    let f = NodalField::from_fn(&coarse, |x, y| (3.0 * x).sin() - y * y);
    let (src, g) = NodalField::<f64>::parse_dump(&f.dump(&coarse)).unwrap();
    let fine = QuadMesh::uniform(Domain::unit(), 4, 6, &[]).unwrap();
    let p = project(&g, &src, &fine).unwrap();
    for d in 0..fine.num_dofs() {
        let (x, y) = fine.dof_position(d);
        assert!((p.get(d, 0) - f.evaluate(&coarse, x, y, 0).unwrap()).abs() < 1e-14);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn phase_field_dump_roundtrips_bit_exactly(vals in prop::collection::vec(-1.5f64..1.5, 1..400), marks in prop::collection::vec(0usize..64, 0..5)) {
        let mesh = QuadMesh::uniform(Domain { x0: -1.0, y0: 0.0, x1: 2.0, y1: 1.5 }, 3, 5, &[]).unwrap().refine_cells(&marks).unwrap();
        let values: Vec<f64> = (0..mesh.num_dofs()).map(|d| vals[d % vals.len()] * (1.0 + d as f64 * 1e-7)).collect();
        let f = NodalField::from_values(&mesh, 1, values).unwrap();
        let (back_mesh, back) = NodalField::<f64>::parse_dump(&f.dump(&mesh)).unwrap();
        prop_assert_eq!(back_mesh.cells(), mesh.cells());
        prop_assert_eq!(back.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>(), f.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    }
}
