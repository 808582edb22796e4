//! Diversity: mean L1 distance between random pairs of feature vectors.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diversity {
    pub mean: f64,
    /// 95% bootstrap interval of the mean.
    pub ci_low: f64,
    pub ci_high: f64,
    pub pairs: usize,
    pub resamples: usize,
    pub seed: u64,
    /// Every sampled pair had distance zero, so the interval is a point.
    pub degenerate: bool,
}

fn l1(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Mean L1 distance over `pairs` seeded pairs of distinct indices with a
/// percentile bootstrap interval.
///
/// Features are sorted lexicographically before sampling, so the result does
/// not depend on input order.
pub fn diversity(features: &[Vec<f64>], pairs: usize, resamples: usize, seed: u64) -> Result<Diversity> {
    if features.len() < 2 {
        return invalid(format!("diversity needs at least 2 feature vectors, got {}", features.len()));
    }
    if pairs == 0 {
        return invalid("pair count must be positive");
    }
    let width = features[0].len();
    if features.iter().any(|f| f.len() != width || f.iter().any(|v| !v.is_finite())) {
        return invalid("features must be finite and share one width");
    }
    let mut canon: Vec<&Vec<f64>> = features.iter().collect();
    canon.sort_by(|a, b| {
        a.iter()
            .zip(b.iter())
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let n = canon.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dists: Vec<f64> = (0..pairs)
        .map(|_| {
            let i = rng.gen_range(0..n);
            let j = (i + rng.gen_range(1..n)) % n;
            l1(canon[i], canon[j])
        })
        .collect();
    let mean = dists.iter().sum::<f64>() / pairs as f64;
    let degenerate = dists.iter().all(|&d| d == 0.0);
    let (ci_low, ci_high) = if degenerate || resamples == 0 {
        (mean, mean)
    } else {
        let mut means: Vec<f64> = (0..resamples)
            .map(|_| (0..pairs).map(|_| dists[rng.gen_range(0..pairs)]).sum::<f64>() / pairs as f64)
            .collect();
        means.sort_by(f64::total_cmp);
        (percentile(&means, 0.025), percentile(&means, 0.975))
    };
    Ok(Diversity {
        mean,
        ci_low,
        ci_high,
        pairs,
        resamples,
        seed,
        degenerate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_features_are_degenerate() {
        let d = diversity(&vec![vec![1.0, 2.0]; 5], 500, 100, 1).unwrap();
        assert_eq!(d.mean, 0.0);
        assert!(d.degenerate);
        assert_eq!((d.ci_low, d.ci_high), (0.0, 0.0));
    }

    #[test]
    fn two_point_population() {
        let d = diversity(&[vec![0.0, 1.0], vec![2.0, -0.5]], 500, 200, 3).unwrap();
        assert_eq!(d.mean, 3.5);
        assert!(!d.degenerate);
        assert_eq!((d.ci_low, d.ci_high), (3.5, 3.5));
    }

    #[test]
    fn seeded_and_bracketed() {
        let feats: Vec<Vec<f64>> = (0..30).map(|i| vec![(i as f64).sin(), (i as f64 * 0.3).cos()]).collect();
        let a = diversity(&feats, 500, 300, 11).unwrap();
        let b = diversity(&feats, 500, 300, 11).unwrap();
        assert_eq!(a.mean.to_bits(), b.mean.to_bits());
        assert_eq!(a, b);
        assert!(a.ci_low <= a.mean && a.mean <= a.ci_high && a.ci_low < a.ci_high);
    }

    #[test]
    fn rejects_too_few() {
        assert!(diversity(&[vec![1.0]], 10, 10, 0).is_err());
        assert!(diversity(&[vec![1.0], vec![1.0, 2.0]], 10, 10, 0).is_err());
    }
}
