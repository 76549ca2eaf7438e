use proptest::prelude::*;

use thrifty_core::gate::{
    advance_mode, cede_scores, intervene_scores, nearest_rank_quantile, tune_thresholds,
    GateClauses, GateThresholds, Mode, SwitchCause,
};
use thrifty_core::metrics::{aggregate, burden, episode_stats, EpisodeStats};

fn scores() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0..1.0f64, 1..400)
}

fn modes() -> impl Strategy<Value = Vec<Mode>> {
    prop::collection::vec(
        prop_oneof![Just(Mode::Autonomous), Just(Mode::Supervisor)],
        1..200,
    )
}

fn thresholds() -> impl Strategy<Value = GateThresholds> {
    (0.0..1.0f64, 0.0..1.0f64, 0.0..0.1f64, 0.0..0.01f64).prop_map(|(ri, rc, ni, dc)| {
        GateThresholds {
            risk_intervene: ri,
            risk_cede: rc,
            novelty_intervene: ni,
            discrepancy_cede: dc,
            budget: 0.01,
        }
    })
}

proptest! {
    #[test]
    fn quantile_is_a_member_with_nearest_rank_counts(v in scores(), q in 0.0..=1.0f64) {
        let t = nearest_rank_quantile(&v, q).unwrap();
        prop_assert!(v.contains(&t));
        let n = v.len() as f64;
        let at_or_below = v.iter().filter(|x| **x <= t).count() as f64;
        let below = v.iter().filter(|x| **x < t).count() as f64;
        prop_assert!(at_or_below >= (q * n - 1e-9).ceil().max(1.0));
        prop_assert!(below < (q * n - 1e-9).ceil().max(1.0));
    }

    #[test]
    fn quantile_ignores_input_order(mut v in scores(), q in 0.0..=1.0f64) {
        let a = nearest_rank_quantile(&v, q).unwrap();
        v.reverse();
        prop_assert_eq!(a, nearest_rank_quantile(&v, q).unwrap());
    }

    #[test]
    fn tuned_cede_threshold_never_exceeds_entry(
        risk in scores(),
        novelty in scores(),
        disc in prop::collection::vec(0.0..0.01f64, 1..50),
        budget in 0.0..=0.5f64,
    ) {
        let t = tune_thresholds(&risk, &novelty, &disc, budget).unwrap();
        prop_assert!(t.risk_cede <= t.risk_intervene);
        prop_assert_eq!(t.budget, budget);
    }

    #[test]
    fn burden_is_exact_and_monotone(c in 0.0..50.0f64, i in 0.0..50.0f64, l in 0.0..50.0f64, d in 0.0..5.0f64) {
        let b = burden(c, i, l).unwrap();
        prop_assert_eq!(b, c * (l + i));
        prop_assert!(burden(c + d, i, l).unwrap() >= b);
        prop_assert!(burden(c, i + d, l).unwrap() >= b);
        prop_assert!(burden(c, i, l + d).unwrap() >= b);
    }

    #[test]
    fn mode_routing_follows_predicates(intervene in any::<bool>(), cede in any::<bool>()) {
        let from_auto = advance_mode(Mode::Autonomous, intervene, cede);
        prop_assert_eq!(from_auto, if intervene { Mode::Supervisor } else { Mode::Autonomous });
        let from_sup = advance_mode(Mode::Supervisor, intervene, cede);
        prop_assert_eq!(from_sup, if cede { Mode::Autonomous } else { Mode::Supervisor });
    }

    #[test]
    fn ablated_clause_never_fires(t in thresholds(), novelty in 0.0..0.2f64, risk in 0.0..1.0f64) {
        let no_risk = GateClauses { novelty: true, risk: false };
        let no_novelty = GateClauses { novelty: false, risk: true };
        prop_assert_ne!(intervene_scores(novelty, risk, &t, no_risk), Some(SwitchCause::Risk));
        prop_assert_ne!(intervene_scores(novelty, risk, &t, no_novelty), Some(SwitchCause::Novelty));
    }

    #[test]
    fn intervene_cause_partitions_triggers(t in thresholds(), novelty in 0.0..0.2f64, risk in 0.0..1.0f64) {
        let cause = intervene_scores(novelty, risk, &t, GateClauses::default());
        let expected = if novelty > t.novelty_intervene {
            Some(SwitchCause::Novelty)
        } else if risk > t.risk_intervene {
            Some(SwitchCause::Risk)
        } else {
            None
        };
        prop_assert_eq!(cause, expected);
    }

    #[test]
    fn cede_requires_both_clauses(t in thresholds(), d in 0.0..0.02f64, risk in 0.0..1.0f64) {
        let both = cede_scores(d, risk, &t, GateClauses::default());
        prop_assert_eq!(both, d < t.discrepancy_cede && risk < t.risk_cede);
    }

    #[test]
    fn episode_counts_cover_every_step(trace in modes(), success in any::<bool>()) {
        let s = episode_stats(&trace, success).unwrap();
        prop_assert_eq!(s.acts_h + s.acts_r, trace.len());
        prop_assert!(s.ints <= s.acts_h);
        let entries = trace
            .iter()
            .enumerate()
            .filter(|(i, m)| **m == Mode::Supervisor && (*i == 0 || trace[i - 1] == Mode::Autonomous))
            .count();
        prop_assert_eq!(s.ints, entries);
    }

    #[test]
    fn cause_totals_sum_to_switches(
        eps in prop::collection::vec(
            (prop::collection::vec(0usize..3, 0..6), 0usize..20, 0usize..50, any::<bool>()),
            1..30,
        ),
    ) {
        let stats: Vec<EpisodeStats> = eps
            .into_iter()
            .map(|(causes, h, r, success)| EpisodeStats {
                ints: causes.len(),
                acts_h: h.max(causes.len()),
                acts_r: r,
                success,
                switch_causes: causes
                    .into_iter()
                    .map(|c| [SwitchCause::Novelty, SwitchCause::Risk, SwitchCause::External][c])
                    .collect(),
            })
            .collect();
        let m = aggregate(&stats, 0.0).unwrap();
        prop_assert_eq!(m.novelty_switches + m.risk_switches + m.external_switches, m.total_ints);
        prop_assert_eq!(m.successes, stats.iter().filter(|s| s.success).count());
    }
}
