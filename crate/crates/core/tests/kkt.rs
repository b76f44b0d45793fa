mod common;

use common::*;
use mec_offload::kkt::DeviceProblem;
use proptest::prelude::*;
use rand::Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn feasible_candidates_satisfy_kkt(seed in any::<u64>()) {
        let mut r = rng(seed);
        let base = random_scenario(&mut r, 2, 2, false);
        let p = random_profile(&base, &mut r, false, 0.8).unwrap();
        let i = r.gen_range(0..2);
        let t = base.md(i).task_rate * r.gen_range(0.02..1.0);
        let sc = if r.gen_bool(0.5) { calibrated_budget(&base, i, t, r.gen_range(0.05..0.95)) } else { base };
        let problem = DeviceProblem::new(&sc, &p, i);
        let rows = p.rows();
        for c in problem.enumerate_candidates(t, 0.0).iter().filter(|c| c.feasible) {
            if let Err(e) = check_candidate(&sc, &rows, i, t, c) {
                prop_assert!(false, "free candidate {:?}: {e}", c.allocation);
            }
        }
        if let Ok(c) = problem.solve_p3(t) {
            prop_assert!(c.feasible, "t={t} {c:?}");
            if c.kkt_valid {
                if let Err(e) = check_candidate(&sc, &rows, i, t, &c) {
                    prop_assert!(false, "solution {:?} rho {}: {e}", c.allocation, c.multipliers.rho);
                }
            } else {
                // Only the least-power fallback is returned without KKT
                // certificates.
                prop_assert_eq!(&c.allocation, &problem.fallback(t).unwrap());
            }
        }
    }
}

#[test]
fn binding_budget_is_exercised() {
    let mut r = rng(99);
    let mut binding = 0;
    let mut fallback = 0;
    for _ in 0..200 {
        let base = random_scenario(&mut r, 2, 2, false);
        let p = random_profile(&base, &mut r, false, 0.8).unwrap();
        let t = base.md(0).task_rate * r.gen_range(0.02..1.0);
        let sc = calibrated_budget(&base, 0, t, r.gen_range(0.05..0.95));
        // The cap may undercut what the servers' guards allow at this t.
        let Ok(c) = DeviceProblem::new(&sc, &p, 0).solve_p3(t) else { continue };
        if !c.kkt_valid {
            fallback += 1;
        } else if c.multipliers.rho > 0.0 {
            binding += 1;
            check_candidate(&sc, &p.rows(), 0, t, &c).unwrap();
        }
    }
    assert!(binding >= 20, "only {binding} binding-budget solutions");
    assert!(fallback <= 20, "{fallback} fallbacks");
}
