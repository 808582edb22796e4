//! Head/tail pairing of single-emotion clips.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::clip::SourceClip;
use crate::error::{DataError, Result};

/// Emotion shifts that must never be paired, as `(head, tail)` names.
pub fn default_exclusions() -> Vec<(String, String)> {
    vec![
        ("happiness".into(), "anger".into()),
        ("happiness".into(), "sadness".into()),
    ]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClipPair {
    pub head: usize,
    pub tail: usize,
}

/// Pairs each neutral clip with 2 or 3 tails of distinct non-neutral
/// emotions from the same speaker.
///
/// `pairs_per_head = None` draws 2 or 3 per head. Returns pairs as indices
/// into `clips` plus notes for speakers that produced nothing.
pub fn pair_clips(
    clips: &[SourceClip],
    pairs_per_head: Option<usize>,
    exclusions: &[(String, String)],
    seed: u64,
) -> Result<(Vec<ClipPair>, Vec<String>)> {
    if let Some(k) = pairs_per_head {
        if !(2..=3).contains(&k) {
            return Err(DataError::Invalid(format!("pairs per head must be 2 or 3, got {k}")));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut by_speaker: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, c) in clips.iter().enumerate() {
        by_speaker.entry(c.speaker_id.as_str()).or_default().push(i);
    }
    let mut pairs = Vec::new();
    let mut notes = Vec::new();
    for (speaker, idx) in by_speaker {
        let heads: Vec<usize> = idx.iter().copied().filter(|&i| clips[i].emotion.is_neutral()).collect();
        if heads.is_empty() {
            notes.push(format!("speaker {speaker}: no neutral clips, no pairs"));
            continue;
        }
        let mut tails_by_emotion: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for &i in &idx {
            if !clips[i].emotion.is_neutral() {
                tails_by_emotion.entry(clips[i].emotion.id).or_default().push(i);
            }
        }
        if tails_by_emotion.is_empty() {
            notes.push(format!("speaker {speaker}: no emotional clips, no pairs"));
            continue;
        }
        for h in heads {
            let head = &clips[h];
            let mut emotions: Vec<usize> = tails_by_emotion
                .keys()
                .copied()
                .filter(|&e| {
                    let tail_name = &clips[tails_by_emotion[&e][0]].emotion.name;
                    !exclusions.iter().any(|(a, b)| a == &head.emotion.name && b == tail_name)
                })
                .collect();
            emotions.shuffle(&mut rng);
            let want = pairs_per_head.unwrap_or_else(|| rng.gen_range(2..=3));
            for e in emotions.into_iter().take(want) {
                let pool = &tails_by_emotion[&e];
                let t = pool[rng.gen_range(0..pool.len())];
                pairs.push(ClipPair { head: h, tail: t });
            }
        }
    }
    Ok((pairs, notes))
}
