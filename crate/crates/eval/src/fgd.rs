//! FGD over randomly drawn chunks.
//!
//! Both scores average several draws. Each draw has its own seed, derived
//! from the call seed and stored in [`FgdScore`] so any draw can be replayed.

use emogest_core::SegmentLayout;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::extractor::FeatureExtractor;
use crate::gaussian::{frechet_distance, GaussianStats, COVARIANCE_EPS};

/// Flattened head, transition and tail poses of one sequence. Ground truth
/// has an empty transition.
#[derive(Debug, Clone, Copy)]
pub struct HeadTail<'a> {
    pub head: &'a [f64],
    pub transition: &'a [f64],
    pub tail: &'a [f64],
}

impl<'a> HeadTail<'a> {
    /// Splits a full `layout.total()`-frame sequence.
    pub fn split(seq: &'a [f64], layout: &SegmentLayout, frame_len: usize) -> Result<Self> {
        if seq.len() != layout.total() * frame_len {
            return invalid(format!("sequence of {} values, expected {}", seq.len(), layout.total() * frame_len));
        }
        let a = layout.head_frames * frame_len;
        let b = a + layout.transition_frames * frame_len;
        Ok(Self {
            head: &seq[..a],
            transition: &seq[a..b],
            tail: &seq[b..],
        })
    }

    pub fn ground_truth(head: &'a [f64], tail: &'a [f64]) -> Self {
        Self {
            head,
            transition: &[],
            tail,
        }
    }

    fn side(&self, tail: bool) -> &'a [f64] {
        if tail {
            self.tail
        } else {
            self.head
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FgdScore {
    pub value: f64,
    pub per_draw: Vec<f64>,
    pub draw_seeds: Vec<u64>,
}

impl FgdScore {
    fn from_draws(per_draw: Vec<f64>, draw_seeds: Vec<u64>) -> Self {
        let value = per_draw.iter().sum::<f64>() / per_draw.len() as f64;
        Self {
            value,
            per_draw,
            draw_seeds,
        }
    }
}

pub fn draw_seeds(seed: u64, draws: usize) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..draws).map(|_| rng.gen()).collect()
}

fn stats(ext: &dyn FeatureExtractor, chunks: &[&[f64]]) -> Result<GaussianStats> {
    GaussianStats::fit(&ext.features(chunks)?, COVARIANCE_EPS)
}

/// Checks that every side holds at least `draws` distinct chunk positions
/// and returns the number of start positions.
fn positions(side: &[f64], ext: &dyn FeatureExtractor, draws: usize, what: &str) -> Result<usize> {
    let f = ext.frame_len();
    if side.len() % f != 0 {
        return invalid(format!("{what} is not a whole number of {f}-value frames"));
    }
    let frames = side.len() / f;
    let l = ext.chunk_len();
    if frames < l || frames - l + 1 < draws {
        return invalid(format!(
            "{what} has {frames} frames, too few for {draws} chunks of {l} frames"
        ));
    }
    Ok(frames - l + 1)
}

fn chunk<'a>(side: &'a [f64], start: usize, ext: &dyn FeatureExtractor) -> &'a [f64] {
    let f = ext.frame_len();
    &side[start * f..(start + ext.chunk_len()) * f]
}

/// Head/tail FGD against ground truth. Each draw picks one random chunk
/// position per sequence side and cuts generated and ground-truth chunks at
/// the same position.
pub fn fgd_ht(
    generated: &[HeadTail],
    ground_truth: &[HeadTail],
    extractor: &dyn FeatureExtractor,
    seed: u64,
    draws: usize,
) -> Result<FgdScore> {
    if generated.is_empty() || generated.len() != ground_truth.len() {
        return invalid(format!(
            "{} generated vs {} ground-truth sequences",
            generated.len(),
            ground_truth.len()
        ));
    }
    if draws == 0 {
        return invalid("at least one chunk draw is required");
    }
    let mut counts = Vec::with_capacity(generated.len());
    for (g, t) in generated.iter().zip(ground_truth) {
        for tail in [false, true] {
            let n = positions(g.side(tail), extractor, draws, "generated side")?;
            if positions(t.side(tail), extractor, draws, "ground-truth side")? != n {
                return invalid("generated and ground-truth sides differ in length");
            }
            counts.push(n);
        }
    }
    let seeds = draw_seeds(seed, draws);
    let mut per_draw = Vec::with_capacity(draws);
    for &s in &seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(s);
        let mut gen_chunks = Vec::with_capacity(counts.len());
        let mut gt_chunks = Vec::with_capacity(counts.len());
        for (i, (g, t)) in generated.iter().zip(ground_truth).enumerate() {
            for (k, tail) in [false, true].into_iter().enumerate() {
                let start = rng.gen_range(0..counts[2 * i + k]);
                gen_chunks.push(chunk(g.side(tail), start, extractor));
                gt_chunks.push(chunk(t.side(tail), start, extractor));
            }
        }
        per_draw.push(frechet_distance(&stats(extractor, &gen_chunks)?, &stats(extractor, &gt_chunks)?)?);
    }
    Ok(FgdScore::from_draws(per_draw, seeds))
}

/// Transition FGD: the transitions of the generated sequences against random
/// head or tail chunks of the same sequences.
pub fn fgd_trans(
    generated: &[HeadTail],
    extractor: &dyn FeatureExtractor,
    seed: u64,
    draws: usize,
) -> Result<FgdScore> {
    if generated.is_empty() || draws == 0 {
        return invalid("need at least one sequence and one draw");
    }
    let width = extractor.chunk_len() * extractor.frame_len();
    let mut counts = Vec::with_capacity(generated.len() * 2);
    for g in generated {
        if g.transition.len() != width {
            return invalid(format!(
                "transition of {} values, extractor chunks are {width}",
                g.transition.len()
            ));
        }
        for tail in [false, true] {
            counts.push(positions(g.side(tail), extractor, draws, "generated side")?);
        }
    }
    let transitions: Vec<&[f64]> = generated.iter().map(|g| g.transition).collect();
    let trans_stats = stats(extractor, &transitions)?;
    let seeds = draw_seeds(seed, draws);
    let mut per_draw = Vec::with_capacity(draws);
    for &s in &seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(s);
        let chunks: Vec<&[f64]> = generated
            .iter()
            .enumerate()
            .map(|(i, g)| {
                let tail = rng.gen_bool(0.5);
                let start = rng.gen_range(0..counts[2 * i + usize::from(tail)]);
                chunk(g.side(tail), start, extractor)
            })
            .collect();
        per_draw.push(frechet_distance(&trans_stats, &stats(extractor, &chunks)?)?);
    }
    Ok(FgdScore::from_draws(per_draw, seeds))
}
