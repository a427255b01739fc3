use ergolab::alpern::Wiring;
use ergolab::check::first_failure;
use ergolab::krengel::{build_witness, select_heights, verify_krengel, DEFAULT_HEIGHT_CAP};
use ergolab::rates::RateFunction;
use ergolab::rational::{q_frac, q_u64};

fn tol() -> ergolab::rational::Q {
    q_frac(1, 10_000)
}

#[test]
fn power_one_four_families_passes_under_both_wirings() {
    let rate = RateFunction::power(q_frac(1, 1)).unwrap();
    let plan = select_heights(&rate, 4, None, DEFAULT_HEIGHT_CAP).unwrap();
    assert_eq!(plan.heights, vec![5, 17, 157, 9871]);
    let mut ratios = Vec::new();
    for wiring in [Wiring::RoundRobin, Wiring::FamilyBlocks] {
        let w = build_witness(&plan, &tol(), wiring, 1_000_000_000).unwrap();
        assert_eq!(w.system.len(), 148_255);
        let (rows, checks) = verify_krengel(&w).unwrap();
        assert_eq!(rows.len(), 3);
        assert_eq!(checks.len(), 15);
        assert!(first_failure(&checks).is_none(), "{wiring:?}: {}", first_failure(&checks).unwrap());
        for r in &rows {
            assert!(r.ratio >= q_u64(r.j as u64));
        }
        ratios.push(rows.iter().map(|r| r.ratio.clone()).collect::<Vec<_>>());
    }
    // Ratios grow with j for the default wiring.
    assert!(ratios[0].windows(2).all(|w| w[0] <= w[1]));
}

#[test]
fn logpower_two_families_passes() {
    let rate = RateFunction::logpower(q_frac(1, 1)).unwrap();
    let plan = select_heights(&rate, 2, None, DEFAULT_HEIGHT_CAP).unwrap();
    let w = build_witness(&plan, &tol(), Wiring::RoundRobin, 1_000_000_000).unwrap();
    let (_, checks) = verify_krengel(&w).unwrap();
    assert!(first_failure(&checks).is_none());
}

/// The truncated chain inequality has little slack at the last row; for
/// power(1/2) with three families it fails there.
#[test]
fn power_half_three_families_violates_tail_bound_at_last_row() {
    let rate = RateFunction::power(q_frac(1, 2)).unwrap();
    let plan = select_heights(&rate, 3, None, DEFAULT_HEIGHT_CAP).unwrap();
    let w = build_witness(&plan, &tol(), Wiring::RoundRobin, 1_000_000_000).unwrap();
    let (_, checks) = verify_krengel(&w).unwrap();
    let fail = first_failure(&checks).unwrap();
    assert_eq!(fail.row, 2);
    assert_eq!(fail.name, "a mu(C) - eps_j h(j) > tail_bound");
    assert_eq!(fail.rhs, q_frac(1, 14));
}
