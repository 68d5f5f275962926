use std::sync::Arc;

use armub_core::algebra::gf::is_odd_prime_power;
use armub_core::algebra::quad::QuadNum;
use armub_core::algebra::rational::frac;
use armub_core::armub::assemble;
use armub_core::epsh::{best_reduction, classify_u, closed_form, schur_reduce, BlockSplit, Variant};
use armub_core::hadamard::find_hadamard;
use armub_core::rbd::{build_affine_rbd, verify_rbd};
use armub_core::verify::{cross_stats, StatsMode};
use armub_core::Execution;
use proptest::prelude::*;
use proptest::sample::subsequence;

fn design_params() -> impl Strategy<Value = (usize, usize)> {
    prop::sample::select((3..=23).filter(|&s| is_odd_prime_power(s as u64)).collect::<Vec<_>>())
        .prop_flat_map(|s| (1..=s, Just(s)))
}

fn split_params() -> impl Strategy<Value = (usize, Vec<usize>, Vec<usize>)> {
    (prop::sample::select(vec![8usize, 12, 16]), 1usize..=3).prop_filter("t² < 4n", |(n, t)| t * t < *n).prop_flat_map(|(n, t)| {
        let idx: Vec<usize> = (0..n).collect();
        (Just(n), subsequence(idx.clone(), t), subsequence(idx, t))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn affine_designs_meet_at_most_once((k, s) in design_params()) {
        let r = build_affine_rbd(k, s).unwrap();
        let cert = verify_rbd(&r, true);
        prop_assert!(cert.ok());
        prop_assert_eq!(cert.mu, 1);
        prop_assert_eq!(r.classes.len(), s);
    }

    #[test]
    fn sampled_values_are_exhaustive_values(
        (four_n, s) in prop::sample::select(vec![(4usize, 3usize), (4, 5), (8, 7), (8, 9), (12, 11)]),
        seed in any::<u64>(),
        pairs in 1u64..400,
    ) {
        let y = best_reduction(&find_hadamard(four_n).unwrap(), 1, Default::default()).unwrap();
        let bs = assemble(&build_affine_rbd(y.k, s).unwrap(), &y).unwrap();
        let full = cross_stats(&bs, StatsMode::Exhaustive).unwrap();
        let part = cross_stats(&bs, StatsMode::Sampled { pairs, seed }).unwrap();
        prop_assert_eq!(part.pairs_checked, pairs);
        for v in &part.delta_values {
            prop_assert!(full.delta_values.iter().any(|w| w.value == v.value));
        }
        prop_assert!(part.beta.x.cmp_value(&full.beta.x).is_le());
    }

    #[test]
    fn closed_form_matches_elimination(
        (n, rows, cols) in split_params(),
        variant in prop::sample::select(Variant::both().to_vec()),
    ) {
        let split = BlockSplit::new(Arc::new(find_hadamard(n).unwrap()), rows, cols).unwrap();
        if let Some(class) = classify_u(&split.u()).unwrap() {
            let a = closed_form(&split, &class, variant).unwrap();
            let b = schur_reduce(&split, variant).unwrap();
            prop_assert_eq!(a.y, b.y);
        }
    }

    #[test]
    fn integer_orthogonality_agrees_with_gram(i in 0usize..3, j in 0usize..3, num in -3i64..=3) {
        let h = find_hadamard(4).unwrap();
        let y = best_reduction(&h, 1, Default::default()).unwrap();
        let mut m = (*y.y).clone();
        let shifted = m.get(i, j) + &QuadNum::rational(frac(num, 7), m.radicand());
        m.set(i, j, shifted);
        let gram_ok = m.gram_rows(Execution::Sequential).is_identity();
        prop_assert_eq!(m.orthogonality_violation(Execution::Sequential).is_none(), gram_ok);
        prop_assert_eq!(gram_ok, num == 0);
    }
}
