//! Gender-bias probing and few-shot data interventions for masked language models.
//!
//! The pipeline: load a [`lexicon::GenderLexicon`], find gender words in a
//! corpus ([`textproc`]), score every gender position with a
//! [`scorer::Scorer`] to measure bias and mine the most biased samples
//! ([`probe`]), rewrite those samples with masking interventions
//! ([`intervene`]), and emit a fine-tuning set whose targets are only the
//! rewritten words ([`finetune`]). [`bench`] computes StereoSet and
//! CrowS-Pairs scores for any scorer.

pub mod bench;
pub mod corpus;
pub mod error;
pub mod finetune;
pub mod intervene;
pub mod lexicon;
pub mod probe;
pub mod scorer;
pub mod textproc;

pub use error::{Error, Result};
pub use lexicon::{GenderLexicon, GenderPair, Side};
pub use scorer::{CandidateScores, Scorer, ScorerQuery};
pub use textproc::{GenderHit, Sample, Token};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
