//! Emotion accuracy of generated head and tail segments.

use emogest_model::classifier::EmotionClassifier;
use emogest_model::nn::to_tensor;

use crate::error::{invalid, Result};

/// Percentage of predictions equal to their label.
pub fn emo_acc(predictions: &[usize], labels: &[usize]) -> Result<f64> {
    if predictions.is_empty() {
        return invalid("EmoACC of an empty set is undefined");
    }
    if predictions.len() != labels.len() {
        return invalid(format!("{} predictions for {} labels", predictions.len(), labels.len()));
    }
    let hits = predictions.iter().zip(labels).filter(|(p, l)| p == l).count();
    Ok(100.0 * hits as f64 / predictions.len() as f64)
}

/// Index of the largest entry of each row.
pub fn argmax_rows(logits: &[f64], classes: usize) -> Vec<usize> {
    logits
        .chunks(classes)
        .map(|row| {
            row.iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
                .0
        })
        .collect()
}

/// Classifies each flattened segment (`classifier.window()` frames) and
/// scores the predictions against the labels.
pub fn classifier_emo_acc(
    classifier: &EmotionClassifier,
    segments: &[&[f64]],
    labels: &[usize],
    batch_size: usize,
) -> Result<f64> {
    if segments.is_empty() {
        return invalid("EmoACC of an empty set is undefined");
    }
    let t = classifier.window();
    let width = segments[0].len();
    if width == 0 || width % t != 0 || segments.iter().any(|s| s.len() != width) {
        return invalid(format!("segments must all hold {t} frames"));
    }
    let mut predictions = Vec::with_capacity(segments.len());
    for chunk in segments.chunks(batch_size.max(1)) {
        let x = to_tensor(chunk.concat(), &[chunk.len(), t, width / t])?;
        predictions.extend(classifier.predict(&x)?);
    }
    emo_acc(&predictions, labels)
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;

    #[test]
    fn always_right_and_empty() {
        assert_eq!(emo_acc(&[0, 3, 2], &[0, 3, 2]).unwrap(), 100.0);
        assert_eq!(emo_acc(&[0, 1], &[0, 2]).unwrap(), 50.0);
        assert!(emo_acc(&[], &[]).is_err());
        assert!(emo_acc(&[1], &[1, 2]).is_err());
    }

    #[test]
    fn random_logits_score_near_chance() {
        let e = 5;
        let n = 20_000;
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let logits: Vec<f64> = (0..n * e).map(|_| rng.gen::<f64>()).collect();
        let labels: Vec<usize> = (0..n).map(|_| rng.gen_range(0..e)).collect();
        let acc = emo_acc(&argmax_rows(&logits, e), &labels).unwrap();
        let p = 1.0 / e as f64;
        let three_sigma = 3.0 * 100.0 * (p * (1.0 - p) / n as f64).sqrt();
        assert!((acc - 100.0 * p).abs() < three_sigma, "{acc}");
    }
}
