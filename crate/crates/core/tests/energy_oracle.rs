mod common;

use flexsim::energy::{clear, EnergyOffer};
use flexsim::{ActorId, Side};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::CAP;

#[test]
fn hundred_random_instances_match_breakpoint_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut checked = 0;
    while checked < 100 {
        let offers = common::random_energy_instance(&mut rng);
        if offers.is_empty() {
            continue;
        }
        let r = clear(&offers, 1, CAP).unwrap();
        let (price, volume) = common::clearing_brute_force(&offers);
        assert_eq!(r.periods[0].price, price, "offers: {offers:?}");
        assert_eq!(r.periods[0].volume, volume, "offers: {offers:?}");
        checked += 1;
    }
}

#[test]
fn shortage_clears_at_cap_in_the_oracle_too() {
    let offers = vec![
        EnergyOffer { actor: ActorId(0), period: 0, side: Side::Supply, volume: 100.0, price: 50.0 },
        EnergyOffer { actor: ActorId(1), period: 0, side: Side::Demand, volume: 120.0, price: CAP },
    ];
    assert_eq!(common::clearing_brute_force(&offers), (CAP, 100.0));
    assert_eq!(clear(&offers, 1, CAP).unwrap().periods[0].price, CAP);
}

fn offer_strategy() -> impl Strategy<Value = EnergyOffer> {
    (0..3usize, prop::bool::ANY, 0.5f64..200.0, prop_oneof![0.0f64..CAP, Just(CAP), Just(50.0)]).prop_map(
        |(period, supply, volume, price)| EnergyOffer {
            actor: ActorId(0),
            period,
            side: if supply { Side::Supply } else { Side::Demand },
            volume,
            price,
        },
    )
}

proptest! {
    #[test]
    fn market_balances_and_acceptance_is_monotone(offers in prop::collection::vec(offer_strategy(), 1..16)) {
        let r = clear(&offers, 3, CAP).unwrap();
        let supply = r.accepted_volume(&offers, Side::Supply);
        let demand = r.accepted_volume(&offers, Side::Demand);
        for t in 0..3 {
            prop_assert!((supply[t] - demand[t]).abs() <= 1e-9, "period {t}: {} vs {}", supply[t], demand[t]);
            prop_assert!((supply[t] - r.periods[t].volume).abs() <= 1e-9);
            prop_assert!(r.periods[t].price <= CAP);
        }
        for (a, fa) in offers.iter().zip(&r.fractions) {
            prop_assert!((0.0..=1.0).contains(fa));
            let mcp = r.periods[a.period].price;
            match a.side {
                Side::Supply if a.price < mcp => prop_assert_eq!(*fa, 1.0),
                Side::Supply if a.price > mcp => prop_assert_eq!(*fa, 0.0),
                Side::Demand if a.price > mcp => prop_assert_eq!(*fa, 1.0),
                Side::Demand if a.price < mcp => prop_assert_eq!(*fa, 0.0),
                _ => {}
            }
            for (b, fb) in offers.iter().zip(&r.fractions) {
                if a.period != b.period || a.side != b.side || *fb == 0.0 {
                    continue;
                }
                let cheaper = match a.side {
                    Side::Supply => a.price < b.price,
                    Side::Demand => a.price > b.price,
                };
                if cheaper {
                    prop_assert_eq!(*fa, 1.0);
                }
            }
        }
    }
}
