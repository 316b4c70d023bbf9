use num_rational::Ratio;
use phasedom::field::NodalField;
use phasedom::mesh::{Domain, QuadMesh};
use phasedom::stochastic::*;
use proptest::prelude::*;

type Atoms = Vec<(u32, u32)>;

fn atoms_strategy() -> impl Strategy<Value = Atoms> {
    prop::collection::vec((0u32..16, 1u32..9), 1..7)
}

// dyadic values keep float arithmetic exact enough to compare with rationals
fn float(atoms: &Atoms) -> CostDistribution<f64> {
    let total: u32 = atoms.iter().map(|a| a.1).sum();
    let values = atoms.iter().map(|a| a.0 as f64 * 0.125).collect();
    let probs = atoms.iter().map(|a| a.1 as f64 / total as f64).collect();
    CostDistribution::new(values, probs).unwrap()
}

fn exact(atoms: &Atoms) -> CostDistribution<Ratio<i64>> {
    let total: u32 = atoms.iter().map(|a| a.1).sum();
    let values = atoms.iter().map(|a| Ratio::new(a.0 as i64, 8)).collect();
    let probs = atoms.iter().map(|a| Ratio::new(a.1 as i64, total as i64)).collect();
    CostDistribution::new(values, probs).unwrap()
}

fn dist_strategy() -> impl Strategy<Value = CostDistribution<f64>> {
    atoms_strategy().prop_map(|a| float(&a))
}

proptest! {
    #[test]
    fn isf_is_expected_excess(d in dist_strategy(), t in -1.0f64..3.0) {
        let brute: f64 = d.values().iter().zip(d.probabilities()).map(|(&v, &p)| p * (v - t).max(0.0)).sum();
        prop_assert!((integrated_survival(&d, t) - brute).abs() <= 1e-14);
        prop_assert_eq!(risk_measures(&d, t).expected_excess, integrated_survival(&d, t));
        prop_assert!((risk_measures(&d, t).excess_probability + cdf(&d, t) - 1.0).abs() <= 1e-14);
    }

    #[test]
    fn cdf_monotone_and_isf_convex(d in dist_strategy()) {
        let grid: Vec<f64> = (-8..=24).map(|k| k as f64 * 0.0625).collect();
        for w in grid.windows(3) {
            prop_assert!(cdf(&d, w[0]) <= cdf(&d, w[1]));
            let (a, b, c) = (integrated_survival(&d, w[0]), integrated_survival(&d, w[1]), integrated_survival(&d, w[2]));
            prop_assert!(b <= a + 1e-15);
            prop_assert!(b <= 0.5 * (a + c) + 1e-14);
        }
        prop_assert!((cdf(&d, d.max()) - 1.0).abs() <= 1e-14);
    }

    #[test]
    fn float_and_rational_predicates_agree(ax in atoms_strategy(), ay in atoms_strategy()) {
        let (x, y) = (float(&ax), float(&ay));
        let (ex, ey) = (exact(&ax), exact(&ay));
        prop_assert_eq!(dominates_first_order(&x, &y).holds_within(1e-12), dominates_first_order(&ex, &ey).holds());
        prop_assert_eq!(dominates_second_order(&x, &y).holds_within(1e-12), dominates_second_order(&ex, &ey).holds());
        if dominates_first_order(&ex, &ey).holds() {
            prop_assert!(dominates_second_order(&ex, &ey).holds());
        }
    }

    #[test]
    fn smoothed_max_converges_monotonically(x in -2.0f64..2.0) {
        let errs: Vec<f64> = [1e-2, 1e-4, 1e-6].iter().map(|&g| {
            let (m, _) = smoothed_max(x, g);
            prop_assert!(m >= x.max(0.0));
            Ok(m - x.max(0.0))
        }).collect::<Result<_, TestCaseError>>()?;
        prop_assert!(errs[0] >= errs[1] && errs[1] >= errs[2]);
        prop_assert!(errs[2] <= 0.5e-3 + 1e-15);
    }

    #[test]
    fn smoothed_heaviside_approaches_step(x in prop_oneof![-2.0f64..-0.01, 0.01f64..2.0]) {
        let step = if x > 0.0 { 1.0 } else { 0.0 };
        let mut last = f64::INFINITY;
        for g in [1.0, 10.0, 100.0, 1000.0] {
            let (h, dh) = smoothed_heaviside(x, g);
            prop_assert!((0.0..=1.0).contains(&h) && dh >= 0.0);
            let e = (h - step).abs();
            prop_assert!(e <= last);
            last = e;
        }
        prop_assert!(last < 1e-8);
    }

    #[test]
    fn smoothing_derivatives_match_differences(x in -3.0f64..3.0, g in 0.1f64..5.0) {
        let h = 1e-6;
        let fd = (smoothed_heaviside(x + h, g).0 - smoothed_heaviside(x - h, g).0) / (2.0 * h);
        prop_assert!((smoothed_heaviside(x, g).1 - fd).abs() <= 1e-7 * (1.0 + fd.abs()));
        let fd = (smoothed_max(x + h, g).0 - smoothed_max(x - h, g).0) / (2.0 * h);
        prop_assert!((smoothed_max(x, g).1 - fd).abs() <= 1e-7);
    }
}

#[test]
fn smoothing_at_zero() {
    assert_eq!(smoothed_heaviside(0.0, 7.0).0, 0.5);
    assert!((smoothed_max(0.0f64, 0.04).0 - 0.1).abs() < 1e-15);
}

fn benchmark(values: Vec<f64>, probs: Vec<f64>) -> Benchmark<f64> {
    let mesh = QuadMesh::uniform(Domain::unit(), 1, 2, &[]).unwrap();
    let field = NodalField::constant(&mesh, 1, 0.0);
    Benchmark::from_distribution(&mesh, field, 0.1, CostDistribution::new(values, probs).unwrap())
}

#[test]
fn constraint_cost_derivatives_match_differences() {
    let b = benchmark(vec![1.0, 1.4, 1.1, 2.0], vec![0.1, 0.2, 0.3, 0.4]);
    let probs = [0.1, 0.2, 0.3, 0.4];
    let costs = [1.2, 1.3, 0.9, 1.9];
    for order in [DominanceOrder::First, DominanceOrder::Second] {
        for smoothing in [SmoothingParams::default(), SmoothingParams { gamma_h: 16.0, gamma_m: 1.0 / 64.0, ..Default::default() }] {
            let sv = smoothed_constraint_values(&costs, &probs, &b, order, &smoothing);
            assert_eq!(sv.values.len(), 4);
            for k in 0..4 {
                let h = 1e-6;
                let mut cp = costs;
                cp[k] += h;
                let mut cm = costs;
                cm[k] -= h;
                let vp = smoothed_constraint_values(&cp, &probs, &b, order, &smoothing).values;
                let vm = smoothed_constraint_values(&cm, &probs, &b, order, &smoothing).values;
                for j in 0..4 {
                    let fd = (vp[j] - vm[j]) / (2.0 * h);
                    assert!((sv.d_costs[j][k] - fd).abs() <= 1e-6 * (1.0 + fd.abs()), "{order:?} row {j} cost {k}");
                }
            }
        }
    }
}

#[test]
fn benchmark_costs_give_zero_constraints() {
    let values = vec![0.3, 0.7, 0.7, 0.2];
    let probs = vec![0.25; 4];
    let b = benchmark(values.clone(), probs.clone());
    assert_eq!(b.thresholds(), &[0.2, 0.3, 0.7]);
    for order in [DominanceOrder::First, DominanceOrder::Second] {
        let sv = smoothed_constraint_values(&values, &probs, &b, order, &SmoothingParams::default());
        assert!(sv.values.iter().all(|c| c.abs() < 1e-15), "{order:?} {:?}", sv.values);
        // lowering every cost makes all rows strictly feasible
        let lower: Vec<f64> = values.iter().map(|v| v - 0.05).collect();
        let sv = smoothed_constraint_values(&lower, &probs, &b, order, &SmoothingParams::default());
        assert!(sv.values.iter().all(|&c| c > 0.0), "{order:?} {:?}", sv.values);
    }
}

#[test]
fn sharp_second_order_rows_approach_exact_slacks() {
    let bv = vec![1.0, 1.5, 2.5];
    let p = vec![0.5, 0.3, 0.2];
    let b = benchmark(bv.clone(), p.clone());
    let costs = [0.8, 1.7, 2.2];
    let x = CostDistribution::new(costs.to_vec(), p.clone()).unwrap();
    let y = CostDistribution::new(bv, p.clone()).unwrap();
    let exact = dominates_second_order(&x, &y).slacks;
    let mut last = f64::INFINITY;
    for gm in [1e-2, 1e-4, 1e-6, 1e-8] {
        let s = SmoothingParams { gamma_m: gm, ..Default::default() };
        let sv = smoothed_constraint_values(&costs, &p, &b, DominanceOrder::Second, &s);
        let err = sv.values.iter().zip(&exact).map(|(a, e)| (a - e).abs()).fold(0.0, f64::max);
        assert!(err <= last);
        last = err;
    }
    assert!(last < 1e-4, "{last}");
}

#[test]
fn worked_dominance_examples() {
    let d = |pairs: &[(f64, f64)]| CostDistribution::from_pairs(pairs).unwrap();
    // shifting every atom down gives both orders
    let y = d(&[(1.0, 0.5), (3.0, 0.5)]);
    let x = d(&[(0.5, 0.5), (2.5, 0.5)]);
    assert!(dominates_first_order(&x, &y).holds());
    assert!(dominates_second_order(&x, &y).holds());
    // contracting toward the mean gives only the second order
    let z = d(&[(2.0, 1.0)]);
    assert!(!dominates_first_order(&z, &y).holds());
    assert!(dominates_second_order(&z, &y).holds());
    // spreading out breaks both
    let w = d(&[(0.0, 0.5), (4.0, 0.5)]);
    assert!(!dominates_second_order(&w, &y).holds());
    assert_eq!(dominates_second_order(&w, &y).slacks, vec![-0.5, -0.5]);
}
