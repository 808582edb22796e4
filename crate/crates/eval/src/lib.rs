//! Evaluation metrics for generated gesture sequences.
//!
//! * [`frechet_distance`] over [`GaussianStats`] fitted to extractor features,
//!   used by [`fgd_ht`] (head/tail chunks against ground truth) and
//!   [`fgd_trans`] (transition against the sequence's own head/tail chunks);
//! * [`beat_consistency`] between motion and audio beats;
//! * [`diversity`] as the mean L1 distance between random feature pairs;
//! * [`emo_acc`] from a frozen pose emotion classifier.
//!
//! Every function is a pure function of its inputs and seed.

pub mod beat;
pub mod diversity;
pub mod emoacc;
pub mod error;
pub mod extractor;
pub mod fgd;
pub mod gaussian;
pub mod report;

pub use beat::{beat_consistency, BeatConsistency};
pub use diversity::{diversity, Diversity};
pub use emoacc::emo_acc;
pub use error::{EvalError, Result};
pub use extractor::{pretrain_fgd_extractor, ExtractorReport, FeatureExtractor, FgdExtractor};
pub use fgd::{fgd_ht, fgd_trans, FgdScore, HeadTail};
pub use gaussian::{frechet_distance, GaussianStats};
pub use report::{evaluate, EvalInputs, MetricsReport};
