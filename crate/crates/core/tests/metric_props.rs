use chrono::{Duration, NaiveDate};
use proptest::prelude::*;

use muqar_core::eval::{auc, chronological_split, mae, pcc, topsis_rank, wape, CriteriaMatrix, Direction};
use muqar_core::hls::{recall_at_k, topk_accuracy};

fn pairs() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (2usize..100).prop_flat_map(|n| {
        (
            prop::collection::vec(0.0f64..1.0, n),
            prop::collection::vec(0.01f64..1.0, n),
        )
    })
}

/// Brute-force share of correctly ordered (positive, negative) pairs.
fn pairwise_auc(s: &[f64], l: &[bool]) -> f64 {
    let (mut wins, mut pairs) = (0.0, 0.0);
    for i in 0..s.len() {
        for j in 0..s.len() {
            if l[i] && !l[j] {
                pairs += 1.0;
                wins += if s[i] > s[j] { 1.0 } else if s[i] == s[j] { 0.5 } else { 0.0 };
            }
        }
    }
    wins / pairs
}

fn distinct(v: &[f64]) -> bool {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    s.windows(2).all(|w| w[0] != w[1])
}

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1e-300)
}

proptest! {
    #[test]
    fn wape_is_scale_invariant_and_mae_scales((p, t) in pairs(), c in 0.01f64..100.0) {
        let ps: Vec<f64> = p.iter().map(|v| v * c).collect();
        let ts: Vec<f64> = t.iter().map(|v| v * c).collect();
        prop_assert!(rel_close(wape(&ps, &ts).unwrap(), wape(&p, &t).unwrap(), 1e-12));
        prop_assert!(rel_close(mae(&ps, &ts).unwrap(), c * mae(&p, &t).unwrap(), 1e-12));
    }

    #[test]
    fn pcc_ignores_positive_affine_maps((p, t) in pairs(), a in 0.01f64..100.0, b in -10.0f64..10.0) {
        prop_assume!(distinct(&p) && distinct(&t));
        let q: Vec<f64> = p.iter().map(|v| a * v + b).collect();
        prop_assert!((pcc(&q, &t).unwrap() - pcc(&p, &t).unwrap()).abs() <= 1e-9);
    }

    #[test]
    fn auc_matches_pair_enumeration(
        (s, l) in (2usize..200).prop_flat_map(|n| (
            prop::collection::vec((0u8..20).prop_map(|v| v as f64 / 20.0), n),
            prop::collection::vec(any::<bool>(), n),
        ))
    ) {
        let mut l = l;
        l[0] = true;
        l[1] = false;
        prop_assert_eq!(auc(&s, &l).unwrap(), pairwise_auc(&s, &l));
    }

    #[test]
    fn topk_and_recall_are_monotone_in_k(
        (preds, truths, sets) in (1usize..30, 2usize..12).prop_flat_map(|(n, c)| (
            prop::collection::vec(prop::collection::vec(0.0f64..1.0, c), n),
            prop::collection::vec(0..c, n),
            prop::collection::vec(prop::collection::btree_set(0..c, 1..c), n),
        ))
    ) {
        let c = preds[0].len();
        let sets: Vec<Vec<usize>> = sets.into_iter().map(|s| s.into_iter().collect()).collect();
        let mut last = (0.0, 0.0);
        for k in 1..=c {
            let now = (topk_accuracy(&preds, &truths, k).unwrap(), recall_at_k(&preds, &sets, k).unwrap());
            prop_assert!(now.0 >= last.0 && now.1 >= last.1);
            last = now;
        }
        prop_assert_eq!(last, (1.0, 1.0));
    }

    #[test]
    fn class_permutation_leaves_metrics_unchanged(
        (preds, truths, sets, perm) in (1usize..30, 2usize..12).prop_flat_map(|(n, c)| (
            prop::collection::vec(prop::collection::vec(0.0f64..1.0, c), n),
            prop::collection::vec(0..c, n),
            prop::collection::vec(prop::collection::btree_set(0..c, 1..c), n),
            Just((0..c).collect::<Vec<usize>>()).prop_shuffle(),
        )),
        k in 1usize..4,
    ) {
        prop_assume!(preds.iter().all(|p| distinct(p)));
        // class i moves to column perm[i]
        let permute = |p: &Vec<f64>| {
            let mut q = vec![0.0; p.len()];
            for (i, &v) in p.iter().enumerate() {
                q[perm[i]] = v;
            }
            q
        };
        let pp: Vec<Vec<f64>> = preds.iter().map(permute).collect();
        let tp: Vec<usize> = truths.iter().map(|&t| perm[t]).collect();
        let sets: Vec<Vec<usize>> = sets.into_iter().map(|s| s.into_iter().collect()).collect();
        let sp: Vec<Vec<usize>> = sets.iter().map(|s| s.iter().map(|&a| perm[a]).collect()).collect();
        prop_assert_eq!(topk_accuracy(&preds, &truths, k).unwrap(), topk_accuracy(&pp, &tp, k).unwrap());
        prop_assert_eq!(recall_at_k(&preds, &sets, k).unwrap(), recall_at_k(&pp, &sp, k).unwrap());
    }

    #[test]
    fn topsis_top_choice_survives_column_scaling(
        (values, dirs) in (2usize..8, 1usize..5).prop_flat_map(|(r, c)| (
            prop::collection::vec(prop::collection::vec(0.1f64..10.0, c), r),
            prop::collection::vec(any::<bool>(), c),
        )),
        col in any::<prop::sample::Index>(),
        scale in 0.001f64..1000.0,
    ) {
        let rows: Vec<String> = (0..values.len()).map(|i| format!("r{i}")).collect();
        let cols: Vec<(String, Direction)> = dirs
            .iter()
            .enumerate()
            .map(|(j, &b)| (format!("c{j}"), if b { Direction::Benefit } else { Direction::Cost }))
            .collect();
        let m = CriteriaMatrix::equal_weights(rows.clone(), cols.clone(), values.clone());
        let base = topsis_rank(&m).unwrap();
        let mut sorted = base.closeness.clone();
        sorted.sort_by(|a, b| b.total_cmp(a));
        prop_assume!(sorted[0] - sorted[1] > 1e-9);
        let j = col.index(cols.len());
        let mut scaled = values;
        for row in &mut scaled {
            row[j] *= scale;
        }
        let other = topsis_rank(&CriteriaMatrix::equal_weights(rows, cols, scaled)).unwrap();
        prop_assert_eq!(&base.ranking[0].name, &other.ranking[0].name);
    }

    #[test]
    fn split_partitions_are_disjoint_and_cover(
        items in prop::collection::vec(prop::collection::btree_set(0i64..60, 1..4), 2..60)
    ) {
        let start = NaiveDate::from_ymd_opt(2021, 1, 4).unwrap();
        let ids: Vec<String> = (0..items.len()).map(|i| format!("item{i}")).collect();
        let records: Vec<(&str, NaiveDate)> = items
            .iter()
            .enumerate()
            .flat_map(|(i, days)| days.iter().map(move |&d| (i, d)))
            .map(|(i, d)| (ids[i].as_str(), start + Duration::days(d)))
            .collect();
        let Ok(split) = chronological_split(records) else {
            // only when every item falls on one side of the single/multi divide
            let singles = items.iter().filter(|d| d.len() == 1).count();
            prop_assert!(singles == 0 || singles == items.len());
            return Ok(());
        };
        let mut all: Vec<&String> = split.train.iter().chain(&split.validation).chain(&split.test).collect();
        let total = all.len();
        all.sort();
        all.dedup();
        prop_assert_eq!(all.len(), total, "an item appears twice");
        prop_assert_eq!(total, ids.len());
        for id in &ids {
            prop_assert!(split.partition_of(id).is_some());
        }
    }
}
