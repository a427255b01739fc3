mod common;

use common::{random_system, rng};
use ergolab::rational::q_frac;
use ergolab::windows::{brute_force_oracle, exceedance_mass, window_stats, LabelSet};
use rand::Rng;

#[test]
fn engine_matches_oracle_on_random_systems() {
    let mut r = rng(21);
    for case in 0..120 {
        let ir = random_system(&mut r, 4000, 4, 4);
        let l = ir.len();
        let f = LabelSet::of((0..4).filter(|_| r.gen_bool(0.5)));
        let u = LabelSet::of((0..4).filter(|_| r.gen_bool(0.6)));
        let c = q_frac(r.gen_range(0..=10), 10);
        let eps = q_frac(r.gen_range(0..=3), 16);
        for n in [1, 2, l.saturating_sub(1).max(1), l, 2 * l + 3, r.gen_range(1..=3 * l)] {
            let fast = window_stats(&ir, &f, &u, n, &c, &eps);
            let slow = brute_force_oracle(&ir, &f, &u, n, &c, &eps).unwrap();
            assert_eq!(fast, slow, "case {case}, n = {n}, len = {l}");
        }
    }
}

#[test]
fn exceedance_is_complement_of_open_band() {
    let mut r = rng(22);
    let f = LabelSet::of([0]);
    let all = LabelSet::all(3);
    for _ in 0..40 {
        let ir = random_system(&mut r, 2000, 3, 3);
        let n = r.gen_range(1..=ir.len() + 5);
        let c = q_frac(r.gen_range(0..=6), 6);
        let theta = q_frac(r.gen_range(1..=4), 8);
        // |f_N − c| >= θ counted directly from the label stream.
        let ls = common::labels(&ir);
        let l = ls.len();
        let mut count = 0u64;
        for x in 0..l {
            let s = (1..=n as usize).filter(|i| ls[(x + i) % l] == 0).count();
            let v = q_frac(s as i64, n as i64) - &c;
            if num_traits::Signed::abs(&v) >= theta {
                count += 1;
            }
        }
        assert_eq!(exceedance_mass(&ir, &f, &all, n, &c, &theta), q_frac(count as i64, l as i64));
    }
}

#[test]
fn oracle_refuses_large_systems() {
    let ir = ergolab::cycle_ir::SystemIR::tower(200_000, 0).unwrap();
    let f = LabelSet::of([0]);
    assert!(brute_force_oracle(&ir, &f, &f, 3, &q_frac(1, 1), &q_frac(0, 1)).is_err());
}
