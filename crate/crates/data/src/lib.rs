//! Building emotion-transition samples.
//!
//! Long single-emotion recordings are cut into 60-frame clips, neutral heads
//! are paired with emotional tails of the same speaker, and each pair is
//! spliced with a generated two-second transition whose transcript, audio,
//! voice match and intelligibility come from pluggable [`adapters`]. A
//! procedural corpus in [`synth`] stands in for real recordings.

pub mod adapters;
pub mod clip;
pub mod corpus;
pub mod error;
pub mod http;
pub mod pairing;
pub mod pipeline;
pub mod synth;
pub mod wer;

pub use adapters::{Adapters, MockAdapters, TransitionCandidate};
pub use clip::{segment_corpus, LabeledTrack, SourceClip};
pub use corpus::{build_corpus, write_corpus, Corpus, CorpusInfo, CorpusOptions};
pub use error::{DataError, Result};
pub use pairing::{pair_clips, ClipPair};
pub use pipeline::{build_transition, BuildContext, ManifestRecord, ManifestSummary, PipelineConfig};
pub use synth::{synthesize_toy_corpus, SynthConfig};
pub use wer::{wer, wer_text};
