use proptest::prelude::*;
use threshold_scope::birman::BirmanSchwingerFamily;
use threshold_scope::grid::build_grid;
use threshold_scope::linalg::{identity, op_norm};
use threshold_scope::potential::{split_potential, Potential};
use threshold_scope::threshold::{compute_threshold_data, laurent_of_a_inverse, tune_grid_critical, Classification, ThresholdData, ThresholdOptions};

fn threshold_for(pot: &Potential, n: usize) -> ThresholdData {
    let grid = build_grid(n, 3.0).unwrap();
    let fam = BirmanSchwingerFamily::new(&split_potential(pot, &grid).unwrap()).unwrap();
    compute_threshold_data(fam, &ThresholdOptions::default()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn shallow_wells_are_regular_and_invert(depth in 0.1f64..1.5, frac in 0.2f64..1.0) {
        let td = threshold_for(&Potential::square_well(depth, 1.0), 8);
        prop_assert_eq!(td.classification(), Classification::Regular);
        let lambda = frac * td.lambda0;
        let a = td.family.a(lambda);
        let err = op_norm(&(&td.a_inverse(lambda).unwrap() * &a - identity(a.nrows())));
        prop_assert!(err < 1e-9, "identity error {err}");
    }
}

#[test]
fn critical_well_runs_through_the_laurent_stage() {
    let grid = build_grid(8, 3.0).unwrap();
    let shape = Potential::square_well(1.0, 1.0);
    let crit = tune_grid_critical(&shape, &grid, (1.0, 4.0), 11).unwrap();
    let td = threshold_for(&shape.with_coupling(crit.coupling), 8);
    assert_eq!(td.classification(), Classification::ResonanceOnly);
    assert!(td.b0_min_eigenvalue().is_none());

    let lau = laurent_of_a_inverse(&td).unwrap();
    assert_eq!(op_norm(&lau.c_minus2), 0.0);
    assert!(op_norm(&lau.c_minus1) > 0.0);
    let rem: Vec<f64> = (2..8).map(|k| op_norm(&lau.regular_at(&td, td.lambda0 / 2f64.powi(k)).unwrap())).collect();
    let (lo, hi) = rem.iter().fold((f64::INFINITY, 0.0f64), |(a, b), r| (a.min(*r), b.max(*r)));
    assert!(hi / lo < 2.0, "remainder not bounded: {rem:?}");
}

#[test]
fn threshold_reports_are_reproducible() {
    let pot = Potential::smooth_well(1.5, 2.0);
    let a = serde_json::to_string(&threshold_for(&pot, 8).report()).unwrap();
    let b = serde_json::to_string(&threshold_for(&pot, 8).report()).unwrap();
    assert_eq!(a, b);
}
