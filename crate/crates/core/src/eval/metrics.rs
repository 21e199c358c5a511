use crate::corpus::MetricKind;
use crate::error::{Error, Result};

/// Levenshtein distance with unit insertion, deletion and substitution costs.
pub fn edit_distance<T: PartialEq>(reference: &[T], hypothesis: &[T]) -> usize {
    let mut prev: Vec<usize> = (0..=hypothesis.len()).collect();
    let mut cur = vec![0; hypothesis.len() + 1];
    for (i, r) in reference.iter().enumerate() {
        cur[0] = i + 1;
        for (j, h) in hypothesis.iter().enumerate() {
            let sub = prev[j] + usize::from(r != h);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[hypothesis.len()]
}

fn units(s: &str, kind: MetricKind) -> Vec<&str> {
    match kind {
        MetricKind::Wer => s.split_whitespace().collect(),
        MetricKind::Cer => s
            .char_indices()
            .filter(|(_, c)| !c.is_whitespace())
            .map(|(i, c)| &s[i..i + c.len_utf8()])
            .collect(),
    }
}

/// Total edits over total reference units: words for WER, non-space
/// characters for CER.
pub fn error_rate<S: AsRef<str>, H: AsRef<str>>(refs: &[S], hyps: &[H], kind: MetricKind) -> Result<f64> {
    if refs.is_empty() || refs.len() != hyps.len() {
        return Err(Error::Eval(format!(
            "{} references vs {} hypotheses",
            refs.len(),
            hyps.len()
        )));
    }
    let (mut edits, mut total) = (0usize, 0usize);
    for (r, h) in refs.iter().zip(hyps) {
        let (r, h) = (units(r.as_ref(), kind), units(h.as_ref(), kind));
        edits += edit_distance(&r, &h);
        total += r.len();
    }
    if total == 0 {
        return Err(Error::Eval("references are empty".into()));
    }
    Ok(edits as f64 / total as f64)
}

/// `100 (candidate - baseline) / baseline`; negative is an improvement.
pub fn relative_change(baseline: f64, candidate: f64) -> Result<f64> {
    if !(baseline > 0.0) || !baseline.is_finite() {
        return Err(Error::Eval(format!("baseline rate must be positive, got {baseline}")));
    }
    Ok(100.0 * (candidate - baseline) / baseline)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::HashMap;

    fn oracle(a: &[u8], b: &[u8], memo: &mut HashMap<(usize, usize), usize>) -> usize {
        if a.is_empty() || b.is_empty() {
            return a.len() + b.len();
        }
        if let Some(&d) = memo.get(&(a.len(), b.len())) {
            return d;
        }
        let (ra, rb) = (&a[1..], &b[1..]);
        let d = (oracle(ra, rb, memo) + usize::from(a[0] != b[0]))
            .min(oracle(ra, b, memo) + 1)
            .min(oracle(a, rb, memo) + 1);
        memo.insert((a.len(), b.len()), d);
        d
    }

    #[test]
    fn examples() {
        assert_eq!(edit_distance(&[1, 2, 3], &[1, 2, 3]), 0);
        assert_eq!(edit_distance::<u8>(&[], &[4, 5]), 2);
        let r: Vec<&str> = "a b c".split(' ').collect();
        let h: Vec<&str> = "a x c".split(' ').collect();
        assert_eq!(edit_distance(&r, &h), 1);
        assert!((error_rate(&["the cat sat"], &["the cat"], MetricKind::Wer).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(error_rate(&["a b c d"], &[""], MetricKind::Wer).unwrap(), 1.0);
        assert_eq!(error_rate(&["x y"], &["x y"], MetricKind::Wer).unwrap(), 0.0);
        // CER ignores spaces
        assert_eq!(error_rate(&["ab cd"], &["abcd"], MetricKind::Cer).unwrap(), 0.0);
        assert_eq!(error_rate(&["ab cd"], &["abed"], MetricKind::Cer).unwrap(), 0.25);
        assert!(error_rate::<&str, &str>(&[], &[], MetricKind::Wer).is_err());
        assert!(error_rate(&[" "], &["a"], MetricKind::Cer).is_err());
        assert!(error_rate(&["a"], &["a", "b"], MetricKind::Cer).is_err());
    }

    #[test]
    fn relative_change_examples() {
        assert!((relative_change(50.82, 39.29).unwrap() + 22.69).abs() < 0.005);
        assert!((relative_change(33.59, 31.29).unwrap() + 6.85).abs() < 0.005);
        assert_eq!(relative_change(7.0, 7.0).unwrap(), 0.0);
        assert!(relative_change(0.0, 1.0).is_err());
    }

    proptest! {
        #[test]
        fn matches_memoized_recursion(a in prop::collection::vec(0u8..4, 0..=12), b in prop::collection::vec(0u8..4, 0..=12)) {
            prop_assert_eq!(edit_distance(&a, &b), oracle(&a, &b, &mut HashMap::new()));
        }

        #[test]
        fn triangle_inequality(a in prop::collection::vec(0u8..3, 0..10), b in prop::collection::vec(0u8..3, 0..10), c in prop::collection::vec(0u8..3, 0..10)) {
            prop_assert!(edit_distance(&a, &c) <= edit_distance(&a, &b) + edit_distance(&b, &c));
            prop_assert_eq!(edit_distance(&a, &b), edit_distance(&b, &a));
        }

        #[test]
        fn duplication_is_scale_free(pairs in prop::collection::vec(("[ab ]{1,8}", "[ab ]{0,8}"), 1..6)) {
            let refs: Vec<&str> = pairs.iter().map(|p| p.0.as_str()).collect();
            let hyps: Vec<&str> = pairs.iter().map(|p| p.1.as_str()).collect();
            for kind in [MetricKind::Wer, MetricKind::Cer] {
                if let Ok(r) = error_rate(&refs, &hyps, kind) {
                    let r2 = error_rate(&[refs.clone(), refs.clone()].concat(), &[hyps.clone(), hyps.clone()].concat(), kind).unwrap();
                    prop_assert!((r - r2).abs() < 1e-15);
                }
            }
        }

        #[test]
        fn relative_change_identity(x in 1e-6f64..1e3, r in -0.99f64..5.0) {
            prop_assert!((relative_change(x, x * (1.0 + r)).unwrap() - 100.0 * r).abs() < 1e-12);
        }
    }
}
