use poa_core::mechanisms::{basis_power, basis_set_covering, marginal_contribution, Mechanism};
use poa_core::network::{partition_into_classes, validate_network, ClassPartition};
use poa_core::oracle::{build_tight_instance, random_game, GameInstance, Profile, RandomGameParams, DEFAULT_RESOURCE_CAP};
use poa_core::poa::{poa_primal, PoaOptions};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn partitions() -> Vec<ClassPartition> {
    vec![
        ClassPartition::single_class(3).unwrap(),
        ClassPartition::blind_two_class(3, 1).unwrap(),
        ClassPartition::isolated_two_class(4, 2).unwrap(),
        partition_into_classes(&validate_network(vec![vec![0, 1], vec![1, 2], vec![2], vec![0, 3]]).unwrap()),
    ]
}

fn mechanism(part: &ClassPartition, raw: &[f64]) -> Mechanism {
    let mut k = 0;
    let per_class = (0..part.k())
        .map(|j| {
            let interior: Vec<f64> = (0..part.observed_count(j))
                .map(|_| {
                    k += 1;
                    raw[(k - 1) % raw.len()]
                })
                .collect();
            Mechanism::from_interior(&interior)
        })
        .collect();
    Mechanism::new(per_class)
}

fn game(seed: u64, which: usize, raw: &[f64]) -> GameInstance {
    let part = partitions()[which].clone();
    let w = basis_power(part.n(), 0.7).unwrap();
    let f = mechanism(&part, raw);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    random_game(&mut rng, &RandomGameParams::default(), &part, &w, &f).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn potential_tracks_unilateral_utility_change(
        seed in any::<u64>(),
        which in 0usize..4,
        raw in prop::collection::vec(0.05f64..2.0, 1..6),
    ) {
        let g = game(seed, which, &raw);
        for idx in 0..g.profile_count() {
            let p = g.profile_at(idx);
            for i in 0..g.n() {
                let j = g.partition().class_of(i);
                for a in 0..g.actions(i).len() {
                    let mut q = p.clone();
                    q.0[i] = a;
                    let dg = g.potential_g(j, &q) - g.potential_g(j, &p);
                    let du = g.utility(i, &q) - g.utility(i, &p);
                    prop_assert!((dg - du).abs() <= 1e-12 * du.abs().max(1.0));
                    prop_assert!((g.potential_delta(i, a, &p) - du).abs() <= 1e-12 * du.abs().max(1.0));
                }
            }
        }
    }

    #[test]
    fn nash_checks_agree(
        seed in any::<u64>(),
        which in 0usize..4,
        raw in prop::collection::vec(0.05f64..2.0, 1..6),
    ) {
        let g = game(seed, which, &raw);
        for idx in 0..g.profile_count() {
            let p = g.profile_at(idx);
            prop_assert_eq!(g.is_nash(&p), g.is_nash_direct(&p));
        }
    }

    #[test]
    fn equilibria_never_beat_optimum(seed in any::<u64>(), which in 0usize..4) {
        let g = game(seed, which, &[1.0, 0.5, 0.25]);
        let opt = g.optimal_welfare(1_000_000).unwrap();
        for p in g.enumerate_pure_ne(1_000_000).unwrap() {
            prop_assert!(g.welfare(&p) <= opt + 1e-12);
        }
    }
}

#[test]
fn tight_instance_reproduces_primal_value() {
    let opts = PoaOptions::default();
    for (n, k) in [(4, 1), (6, 2)] {
        let part = ClassPartition::blind_two_class(n, k).unwrap();
        let w = basis_set_covering(n).unwrap();
        let f = marginal_contribution(&w, &part).unwrap();
        let r = poa_primal(&part, &w, &f, &opts).unwrap();
        let t = build_tight_instance(&part, &w, &f, r.theta.as_ref().unwrap(), DEFAULT_RESOURCE_CAP).unwrap();
        assert!(t.checks.structural_ok());
        assert!(t.game.is_nash(&t.a_ne));
        assert!((t.game.welfare(&t.a_ne) - 1.0).abs() < 1e-9);
        assert!((t.game.welfare(&t.a_opt) - r.lp_value.unwrap()).abs() < 1e-6);
        let e = t.game.empirical_poa(1_000_000).unwrap().unwrap();
        assert!((e.ratio - r.poa).abs() < 1e-6);
    }
}

#[test]
fn profile_indexing_round_trips() {
    let g = game(9, 3, &[1.0]);
    let mut seen = std::collections::HashSet::new();
    for idx in 0..g.profile_count() {
        let p: Profile = g.profile_at(idx);
        g.check_profile(&p).unwrap();
        assert!(seen.insert(p.0));
    }
}
