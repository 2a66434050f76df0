mod common;

use flexsim::lp::{Status, TOL_FEAS};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn four_by_four_matches_vertex_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(44);
    let mut checked = 0;
    while checked < 40 {
        let lp = common::random_small_lp(&mut rng, 4, 4);
        if lp.variables.len() != 4 || lp.constraints.len() != 4 {
            continue;
        }
        checked += 1;
        let sol = lp.solve().unwrap();
        match common::vertex_enumeration(&lp) {
            Some(best) => {
                assert_eq!(sol.status, Status::Optimal, "{lp:?}");
                assert!((sol.objective - best).abs() <= 1e-6 * best.abs().max(1.0));
            }
            None => assert_eq!(sol.status, Status::Infeasible),
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn small_lps_agree_with_oracle(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let lp = common::random_small_lp(&mut rng, 6, 6);
        let sol = lp.solve().unwrap();
        match common::vertex_enumeration(&lp) {
            Some(best) => {
                prop_assert_eq!(sol.status, Status::Optimal);
                prop_assert!((sol.objective - best).abs() <= 1e-6 * best.abs().max(1.0));
                prop_assert!(lp.max_violation(&sol.values) <= TOL_FEAS);
            }
            None => prop_assert_eq!(sol.status, Status::Infeasible),
        }
        prop_assert_eq!(lp.solve().unwrap(), sol);
    }
}
