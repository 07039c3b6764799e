//! Peak matching against a straightforward restatement of the rule and
//! against the maximum one-to-one matching.

use proptest::prelude::*;
use sonn_core::pipeline::match_peaks;

/// Each truth peak, in order, claims the closest unclaimed prediction within
/// `tol` (the earlier one on ties).
fn greedy_oracle(pred: &[usize], truth: &[usize], tol: usize) -> u64 {
    let mut free: Vec<usize> = pred.to_vec();
    let mut tp = 0;
    for &t in truth {
        let pick = free
            .iter()
            .enumerate()
            .filter(|(_, &p)| p.abs_diff(t) <= tol)
            .min_by_key(|(_, &p)| (p.abs_diff(t), p))
            .map(|(j, _)| j);
        if let Some(j) = pick {
            free.remove(j);
            tp += 1;
        }
    }
    tp
}

/// Size of the largest one-to-one matching, by exhaustive search.
fn maximum_matching(pred: &[usize], truth: &[usize], tol: usize) -> u64 {
    fn go(t: usize, used: u32, pred: &[usize], truth: &[usize], tol: usize) -> u64 {
        if t == truth.len() {
            return 0;
        }
        let mut best = go(t + 1, used, pred, truth, tol);
        for (j, &p) in pred.iter().enumerate() {
            if used & (1 << j) == 0 && p.abs_diff(truth[t]) <= tol {
                best = best.max(1 + go(t + 1, used | (1 << j), pred, truth, tol));
            }
        }
        best
    }
    go(0, 0, pred, truth, tol)
}

fn sorted_set(max_len: usize) -> impl Strategy<Value = Vec<usize>> {
    prop::collection::btree_set(0usize..300, 0..max_len).prop_map(|s| s.into_iter().collect())
}

proptest! {
    #[test]
    fn agrees_with_greedy_oracle(pred in sorted_set(40), truth in sorted_set(40), tol in 0usize..40) {
        let c = match_peaks(&pred, &truth, tol).unwrap();
        prop_assert_eq!(c.true_positives, greedy_oracle(&pred, &truth, tol));
        prop_assert_eq!(c.true_positives + c.false_negatives, truth.len() as u64);
        prop_assert_eq!(c.true_positives + c.false_positives, pred.len() as u64);
    }

    #[test]
    fn never_beats_maximum_matching(pred in sorted_set(10), truth in sorted_set(8), tol in 0usize..60) {
        let c = match_peaks(&pred, &truth, tol).unwrap();
        prop_assert!(c.true_positives <= maximum_matching(&pred, &truth, tol));
    }

    #[test]
    fn optimal_when_truth_is_spaced(offsets in prop::collection::vec(0usize..61, 1..8), extra in sorted_set(8)) {
        // truth peaks 100 apart, predictions within ±30 of each plus strays
        let tol = 30;
        let truth: Vec<usize> = (0..offsets.len()).map(|i| 100 + 100 * i).collect();
        let mut pred: Vec<usize> = truth.iter().zip(&offsets).map(|(t, o)| t + o - 30).collect();
        pred.extend(extra.iter().map(|e| e * 3 + 1000));
        pred.sort_unstable();
        pred.dedup();
        let c = match_peaks(&pred, &truth, tol).unwrap();
        prop_assert_eq!(c.false_negatives, 0);
        prop_assert_eq!(c.true_positives, maximum_matching(&pred, &truth, tol));
    }
}

#[test]
fn examples() {
    assert_eq!(match_peaks(&[], &[10, 20], 5).unwrap().false_negatives, 2);
    let c = match_peaks(&[9, 11], &[10], 5).unwrap();
    assert_eq!((c.true_positives, c.false_positives), (1, 1));
}
