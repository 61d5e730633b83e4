mod common;

use std::collections::HashSet;
use std::sync::Arc;

use proptest::prelude::*;
use wikistance::datasets::{build_split, LabelArity, Protocol, Split, StanceLabel};
use wikistance::encoding::{fit_single_budget, ByteTokenizer, InputEncoder, SpecialStyle};
use wikistance::evaluation::macro_f1;
use wikistance::experiments::{emit_table, round1, AvgPlacement, TableCell, AVG_LABEL};
use wikistance::knowledge::{KnowledgeCache, KnowledgeRecord, KnowledgeStatus};
use wikistance::training::{simulate_early_stopping, StopReason};

fn labels(arity: LabelArity) -> impl Strategy<Value = StanceLabel> {
    prop::sample::select(arity.labels().to_vec())
}

fn pairs(arity: LabelArity) -> impl Strategy<Value = Vec<(StanceLabel, StanceLabel)>> {
    prop::collection::vec((labels(arity), labels(arity)), 1..80)
}

fn any_arity() -> impl Strategy<Value = LabelArity> {
    prop_oneof![Just(LabelArity::Two), Just(LabelArity::Three)]
}

fn text() -> impl Strategy<Value = String> {
    "[a-zA-Z0-9 #@.,!?'éü漢]{0,40}[a-z]".prop_map(|s| s)
}

proptest! {
    #[test]
    fn metric_is_permutation_invariant((arity, data, seed) in any_arity().prop_flat_map(|a| (Just(a), pairs(a), any::<u64>()))) {
        let (p, g): (Vec<_>, Vec<_>) = data.iter().copied().unzip();
        let a = macro_f1(&p, &g, arity).unwrap();
        let mut shuffled = data.clone();
        let n = shuffled.len();
        let mut s = seed;
        for i in (1..n).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            shuffled.swap(i, (s >> 33) as usize % (i + 1));
        }
        let (p2, g2): (Vec<_>, Vec<_>) = shuffled.into_iter().unzip();
        prop_assert_eq!(a, macro_f1(&p2, &g2, arity).unwrap());
    }

    #[test]
    fn swapping_favor_and_against_swaps_their_scores((arity, data) in any_arity().prop_flat_map(|a| (Just(a), pairs(a)))) {
        let swap = |l: StanceLabel| match l {
            StanceLabel::Favor => StanceLabel::Against,
            StanceLabel::Against => StanceLabel::Favor,
            n => n,
        };
        let (p, g): (Vec<_>, Vec<_>) = data.iter().copied().unzip();
        let a = macro_f1(&p, &g, arity).unwrap();
        let b = macro_f1(&p.iter().map(|l| swap(*l)).collect::<Vec<_>>(), &g.iter().map(|l| swap(*l)).collect::<Vec<_>>(), arity).unwrap();
        prop_assert_eq!(a.f1(StanceLabel::Favor), b.f1(StanceLabel::Against));
        prop_assert_eq!(a.f1(StanceLabel::Against), b.f1(StanceLabel::Favor));
        prop_assert!((a.f_avg - b.f_avg).abs() <= 1e-12);
    }

    #[test]
    fn report_fields_are_consistent((arity, data) in any_arity().prop_flat_map(|a| (Just(a), pairs(a)))) {
        let (p, g): (Vec<_>, Vec<_>) = data.iter().copied().unzip();
        let r = macro_f1(&p, &g, arity).unwrap();
        prop_assert!((0.0..=1.0).contains(&r.f_avg));
        let mean = r.per_class_f1.values().sum::<f64>() / arity.count() as f64;
        prop_assert!((r.f_avg - mean).abs() <= 1e-12);
        prop_assert_eq!(r.per_class_f1.len(), arity.count());
        prop_assert_eq!(r.confusion.iter().flatten().sum::<u64>() as usize, data.len());
    }

    #[test]
    fn first_segment_reads_back_exactly(d in text(), t in text(), w in text()) {
        let enc = InputEncoder::single(Arc::new(ByteTokenizer::new(SpecialStyle::Bert)), 512);
        let x = enc.encode(&d, &t, &w).unwrap();
        prop_assert_eq!(enc.first_segment_text(&x).unwrap(), format!("Text: {d} Target: {t}"));
        prop_assert!(x.pair_stream().len() <= 512);
    }

    #[test]
    fn single_budget_is_respected(a in 1usize..600, b in 1usize..600, max in 8usize..520, roberta in any::<bool>()) {
        let specials = if roberta { 4 } else { 3 };
        let first: Vec<u32> = (0..a as u32).collect();
        let second: Vec<u32> = (0..b as u32).collect();
        let (f, s) = fit_single_budget(&first, &second, max, specials).unwrap();
        prop_assert!(f.len() + s.len() + specials <= max);
        prop_assert!(!f.is_empty() && !s.is_empty());
        prop_assert_eq!(&first[..f.len()], &f[..]);
        // knowledge is cut before the document-target segment
        if f.len() < a {
            prop_assert_eq!(s.len(), 1);
        }
    }

    #[test]
    fn early_stopping_respects_patience(curve in prop::collection::vec(0u8..20, 1..60), patience in 1usize..12) {
        let curve: Vec<f64> = curve.into_iter().map(|v| v as f64 / 20.0).collect();
        let max_epochs = curve.len();
        let patience = patience.min(max_epochs);
        let o = simulate_early_stopping(&curve, patience, max_epochs).unwrap();
        prop_assert!(o.best_epoch <= o.stopped_epoch);
        prop_assert!(o.stopped_epoch - o.best_epoch <= patience);
        if o.reason == StopReason::Patience {
            prop_assert_eq!(o.stopped_epoch - o.best_epoch, patience);
        }
        let seen = &curve[..o.stopped_epoch];
        prop_assert!(seen.iter().all(|v| *v <= curve[o.best_epoch - 1]));
    }

    #[test]
    fn avg_column_matches_row_mean(values in prop::collection::vec(0u32..1000, 1..8)) {
        let vals: Vec<f64> = values.iter().map(|v| *v as f64 / 10.0).collect();
        let cells: Vec<TableCell> = vals.iter().enumerate().map(|(i, v)| TableCell::new("m", format!("c{i}"), *v, LabelArity::Two)).collect();
        let t = emit_table(&cells, "Method", AvgPlacement::Column).unwrap();
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        prop_assert!((t.displayed("m", AVG_LABEL).unwrap() - mean).abs() <= 0.05 + 1e-9);
        prop_assert!((round1(mean) - mean).abs() <= 0.05 + 1e-9);
    }

    #[test]
    fn cross_target_test_is_destination_data(counts in prop::collection::vec(1usize..5, 9)) {
        let targets = ["A", "B", "C"];
        let mut ex = Vec::new();
        for (ti, t) in targets.iter().enumerate() {
            for (si, split) in Split::ALL.iter().enumerate() {
                for i in 0..counts[ti * 3 + si] {
                    ex.push(common::example(&format!("{t}{si}{i}"), t, *split, StanceLabel::Favor));
                }
            }
        }
        for (src, dst) in [("A", "B"), ("B", "C"), ("C", "A")] {
            let plan = build_split(&ex, Protocol::CrossTarget, Some(src), Some(dst)).unwrap();
            let test: HashSet<&String> = plan.test.iter().collect();
            let want: HashSet<&String> = ex.iter().filter(|e| e.target == dst).map(|e| &e.example_id).collect();
            prop_assert_eq!(test, want);
            let train_ok = plan.train.iter().chain(&plan.validation).all(|id| id.starts_with(src));
            prop_assert!(train_ok);
        }
    }

    #[test]
    fn cache_survives_reopen_last_write_wins(summaries in prop::collection::vec("[a-z]{1,12}", 1..6)) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("k.jsonl");
        {
            let cache = KnowledgeCache::open(&path).unwrap();
            for s in &summaries {
                cache.put(&KnowledgeRecord::from_page("t", "T", s, KnowledgeStatus::Resolved)).unwrap();
            }
        }
        let cache = KnowledgeCache::open(&path).unwrap();
        prop_assert_eq!(cache.len(), 1);
        prop_assert_eq!(&cache.get("t").unwrap().summary, summaries.last().unwrap());
    }
}
