use dars_core::allocator::{
    prop2diff_targets, solve_k_for_size, uniform_targets, Strategy as Plan, StrategyConfig,
};
use dars_core::profiler::DifficultyRecord;
use proptest::prelude::*;

fn records() -> impl Strategy<Value = Vec<DifficultyRecord>> {
    prop::collection::vec((1u64..300, 0u64..300), 1..40).prop_map(|v| {
        v.into_iter()
            .enumerate()
            .map(|(i, (n, c))| DifficultyRecord::new(format!("q{i}"), n, c % (n + 1)).unwrap())
            .collect()
    })
}

proptest! {
    #[test]
    fn prop2diff_is_monotone_and_pinned(recs in records(), k_p in 1u64..400) {
        let t = prop2diff_targets(&recs, k_p, true).unwrap();
        let f_max = recs.iter().map(|r| r.fail_rate_exact()).max().unwrap();
        for (a, ta) in recs.iter().zip(&t) {
            prop_assert!(ta.count >= 1);
            prop_assert!(ta.count <= k_p.max(1));
            if f_max > num_rational::Ratio::from_integer(0) && a.fail_rate_exact() == f_max {
                prop_assert_eq!(ta.count, k_p);
            }
            for (b, tb) in recs.iter().zip(&t) {
                if a.fail_rate_exact() <= b.fail_rate_exact() {
                    prop_assert!(ta.count <= tb.count);
                }
            }
        }
    }

    #[test]
    fn cover_only_raises_targets(recs in records(), k_p in 1u64..400) {
        let with = prop2diff_targets(&recs, k_p, true).unwrap();
        let without = prop2diff_targets(&recs, k_p, false).unwrap();
        for (w, o) in with.iter().zip(&without) {
            prop_assert_eq!(w.count, o.count.max(1));
        }
    }

    #[test]
    fn uniform_is_level_invariant(n in 0usize..50, k in 1u64..100) {
        let ids: Vec<String> = (0..n).map(|i| format!("q{i}")).collect();
        let t = uniform_targets(&ids, k).unwrap();
        prop_assert!(t.iter().all(|t| t.count == k));
    }

    #[test]
    fn solve_k_is_monotone(recs in records(), a in 0u64..2000, b in 0u64..2000) {
        let n = recs.len() as u64;
        let (lo, hi) = (n + a.min(b), n + a.max(b));
        for strategy in [Plan::Uniform, Plan::Prop2Diff, Plan::Vrt] {
            let cfg = StrategyConfig { strategy, ..Default::default() };
            if let (Ok(k_lo), Ok(k_hi)) = (solve_k_for_size(&recs, &cfg, lo), solve_k_for_size(&recs, &cfg, hi)) {
                prop_assert!(k_hi >= k_lo);
            }
        }
    }

    #[test]
    fn solved_k_is_minimal(recs in records(), extra in 0u64..500) {
        let desired = recs.len() as u64 + extra;
        let cfg = StrategyConfig::default();
        if let Ok(k) = solve_k_for_size(&recs, &cfg, desired) {
            let total = |k: u64| prop2diff_targets(&recs, k, true).unwrap().iter().map(|t| t.count).sum::<u64>();
            prop_assert!(total(k) >= desired);
            if k > 1 {
                prop_assert!(total(k - 1) < desired);
            }
        }
    }
}
