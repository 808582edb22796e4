use crate::error::{DataError, Result};

/// Lowercased whitespace tokens with surrounding punctuation stripped.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|w| {
            w.trim_matches(|c: char| !c.is_alphanumeric() && c != '\'')
                .to_lowercase()
        })
        .filter(|w| !w.is_empty())
        .collect()
}

/// Levenshtein distance over tokens with unit costs.
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

/// Edit distance divided by the reference length.
pub fn wer<T: PartialEq>(reference: &[T], hypothesis: &[T]) -> Result<f64> {
    if reference.is_empty() {
        return Err(DataError::EmptyReference);
    }
    Ok(edit_distance(reference, hypothesis) as f64 / reference.len() as f64)
}

pub fn wer_text(reference: &str, hypothesis: &str) -> Result<f64> {
    wer(&tokenize(reference), &tokenize(hypothesis))
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn words(s: &str) -> Vec<&str> {
        s.split_whitespace().collect()
    }

    #[test]
    fn examples() {
        let r = words("one two three four five six seven eight");
        assert_eq!(wer(&r, &r).unwrap(), 0.0);
        let h = words("one two three four five SIX seven eight");
        assert_eq!(wer(&r, &h).unwrap(), 0.125);
        assert_eq!(wer(&words("a b"), &words("a b c d")).unwrap(), 1.0);
        assert!(matches!(wer::<&str>(&[], &words("a")), Err(DataError::EmptyReference)));
        assert_eq!(wer_text("Hello, world!", "hello world").unwrap(), 0.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(128))]
        #[test]
        fn dp_properties(a in proptest::collection::vec(0u8..4, 1..12), b in proptest::collection::vec(0u8..4, 1..12)) {
            prop_assert_eq!(edit_distance(&a, &a), 0);
            let d = edit_distance(&a, &b);
            prop_assert!(d <= a.len().max(b.len()));
            prop_assert!(d >= a.len().abs_diff(b.len()));
            if a.len() == b.len() {
                prop_assert_eq!(d, edit_distance(&b, &a));
            }
        }
    }
}
