//! Property tests across module boundaries.

mod common;

use crowd_core::analysis::{self, PanelSet, QuestionSelection};
use crowd_core::dataset::{complete_groups, read_dataset, write_dataset, ColumnMap, Dataset, Stage};
use crowd_core::resample::{ResampleConfig, SamplingMode};
use crowd_core::rng;
use crowd_core::rules::{apply_rule, weights, AggregationRule, GroupInputs};
use crowd_core::stats::{wilcoxon_signed_rank, PairedSamples, WilcoxonMode};
use crowd_core::synth::{simulate, CrowdModel, DeliberationModel};
use proptest::prelude::*;

fn estimate() -> impl Strategy<Value = f64> {
    (0.0..4.0_f64).prop_map(|e| 10f64.powf(e))
}

fn group() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, Vec<u8>)> {
    (
        prop::collection::vec(estimate(), 5),
        prop::collection::vec(0.2..3.0_f64, 5),
        prop::collection::vec(0u8..=10, 5),
    )
        .prop_map(|(x, f, c)| {
            let r = x.iter().zip(&f).map(|(a, b)| a * b).collect();
            (x, r, c)
        })
}

fn small_model() -> impl Strategy<Value = DeliberationModel> {
    (0.0..=1.0_f64, 0.0..=1.0_f64, 0.0..1.0_f64, 0.0..0.5_f64, 0.0..0.5_f64).prop_map(
        |(beta, gamma, delta, noise_c, noise_r)| DeliberationModel { beta, gamma, delta, noise_c, noise_r },
    )
}

proptest! {
    #[test]
    fn rules_match_reference((x, r, c) in group(), eps in 0.01..100.0_f64, k in 1.0..10.0_f64) {
        let inputs = GroupInputs::new(&x).with_revised(&r).with_confidence(&c);
        let rules = [
            AggregationRule::ResistanceWeighted { epsilon: eps },
            AggregationRule::ConfidenceWeighted,
            AggregationRule::Median,
            AggregationRule::SoftMedian,
            AggregationRule::Mean,
            AggregationRule::RobustAverage { k },
        ];
        for rule in rules {
            let got = apply_rule(&rule, &inputs).unwrap();
            let want = common::oracle_rule(rule.name(), &x, &r, &c, eps, k);
            prop_assert!((got - want).abs() <= 1e-9 * want.abs().max(1.0), "{}: {got} vs {want}", rule.name());
            let w = weights(&rule, &inputs).unwrap();
            prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(w.iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn collective_estimate_stays_within_member_span((x, r, c) in group()) {
        let inputs = GroupInputs::new(&x).with_revised(&r).with_confidence(&c);
        let lo = x.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        for rule in AggregationRule::<f64>::standard() {
            let v = apply_rule(&rule, &inputs).unwrap();
            prop_assert!(v >= lo * (1.0 - 1e-12) && v <= hi * (1.0 + 1e-12), "{}", rule.name());
        }
    }

    #[test]
    fn exact_wilcoxon_matches_enumeration(d in prop::collection::vec(-6i32..=6, 1..=11)) {
        let pairs: Vec<(f64, f64)> = d.iter().map(|&v| (v as f64, 0.0)).collect();
        prop_assume!(pairs.iter().any(|p| p.0 != 0.0));
        let res = wilcoxon_signed_rank(&PairedSamples::new(pairs.clone()), WilcoxonMode::Exact).unwrap();
        let diffs: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let (le, ge) = common::enumerate_signed_rank(&diffs);
        prop_assert!((res.p_less - le).abs() < 1e-12);
        prop_assert!((res.p_greater - ge).abs() < 1e-12);
        prop_assert!((res.p_two_sided - (2.0 * le.min(ge)).min(1.0)).abs() < 1e-12);
    }

    #[test]
    fn swapping_samples_swaps_tails(a in prop::collection::vec(-50.0..50.0_f64, 3..30), shift in -5.0..5.0_f64) {
        let b: Vec<f64> = a.iter().enumerate().map(|(i, v)| v * 0.5 + shift + i as f64 * 0.1).collect();
        for mode in [WilcoxonMode::Exact, WilcoxonMode::NormalApprox] {
            let fwd = wilcoxon_signed_rank(&PairedSamples::from_columns(&a, &b), mode);
            let rev = wilcoxon_signed_rank(&PairedSamples::from_columns(&b, &a), mode);
            if let (Ok(f), Ok(r)) = (fwd, rev) {
                prop_assert!((f.p_less - r.p_greater).abs() < 1e-12);
                prop_assert!((f.p_two_sided - r.p_two_sided).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn index_draws_are_distinct_and_prefix_stable(seed in any::<u64>(), n in 1usize..60, k in 0usize..60) {
        let k = k.min(n);
        let (mut scratch, mut full, mut part) = (Vec::new(), Vec::new(), Vec::new());
        rng::sample_indices(&mut rng::stream(seed, 0), n, n, &mut scratch, &mut full);
        rng::sample_indices(&mut rng::stream(seed, 0), n, k, &mut scratch, &mut part);
        prop_assert_eq!(&full[..k], &part[..]);
        let mut sorted = full.clone();
        sorted.sort_unstable();
        prop_assert_eq!(sorted, (0..n).collect::<Vec<_>>());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn simulated_crowds_round_trip_and_stay_positive(
        seed in any::<u64>(), groups in 1usize..12, rho in 0.0..0.9_f64, model in small_model()
    ) {
        let ds = simulate(&CrowdModel::bundled(rho).unwrap(), &model, groups, seed).unwrap();
        for q in &ds.questions {
            for stage in [Stage::I1, Stage::I2] {
                prop_assert!(ds.all_estimates(&q.code, stage).iter().all(|&v| v > 0.0 && v.is_finite()));
            }
        }
        let mut bytes = Vec::new();
        write_dataset(&ds, &mut bytes).unwrap();
        let back = read_dataset(bytes.as_slice(), &ColumnMap::default(), &ds.questions).unwrap();
        prop_assert_eq!(&back, &ds);
        prop_assert_eq!(complete_groups(&ds).len(), groups);
    }

    #[test]
    fn complete_groups_is_an_idempotent_subset(seed in any::<u64>(), drop in prop::collection::vec(any::<bool>(), 8)) {
        let mut ds = simulate(&CrowdModel::bundled(0.2).unwrap(), &DeliberationModel::default(), 8, seed).unwrap();
        // knock out one revised answer in some groups
        for (g, &d) in ds.groups.iter_mut().zip(&drop) {
            if d {
                let member = g.members.first_mut().unwrap();
                member.i2.remove("GOALS");
            }
        }
        let first: Vec<String> = complete_groups(&ds).iter().map(|g| g.group_id.clone()).collect();
        prop_assert_eq!(first.len(), drop.iter().filter(|d| !**d).count());
        prop_assert!(first.iter().all(|id| ds.groups.iter().any(|g| &g.group_id == id)));
        let kept = Dataset {
            groups: ds.groups.iter().filter(|g| first.contains(&g.group_id)).cloned().collect(),
            ..ds.clone()
        };
        let second: Vec<String> = complete_groups(&kept).iter().map(|g| g.group_id.clone()).collect();
        prop_assert_eq!(first, second);
    }

    #[test]
    fn without_deliberation_revised_error_equals_initial(seed in 0u64..1000) {
        let ds = simulate(&CrowdModel::bundled(0.2).unwrap(), &DeliberationModel::control(0.0), 30, seed).unwrap();
        let set = PanelSet::build(&ds, QuestionSelection::Discussed).unwrap();
        let table = analysis::reduction_table(&set, SamplingMode::WithinGroups, &[5, 10], &ResampleConfig::new(20, seed)).unwrap();
        for p in table {
            prop_assert!(p.reduction.abs() < 1e-9, "n = {}: {}", p.n, p.reduction);
        }
    }

    #[test]
    fn curves_are_reproducible_and_nonnegative(seed in 0u64..1000, between in any::<bool>()) {
        let ds = simulate(&CrowdModel::bundled(0.2).unwrap(), &DeliberationModel::default(), 20, 3).unwrap();
        let set = PanelSet::build(&ds, QuestionSelection::Discussed).unwrap();
        let mode = if between { SamplingMode::BetweenGroups } else { SamplingMode::WithinGroups };
        let cfg = ResampleConfig::new(10, seed).with_cap(20);
        let a = analysis::curves(&set, Stage::I2, mode, &[5, 10], &cfg).unwrap();
        let b = analysis::curves(&set, Stage::I2, mode, &[5, 10], &cfg).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert!(a.iter().flat_map(|c| &c.points).all(|p| p.mean_error >= 0.0 && p.sem >= 0.0));
    }
}
