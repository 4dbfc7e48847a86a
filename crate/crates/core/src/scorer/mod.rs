//! The masked-LM scoring boundary.
//!
//! A [`Scorer`] answers "how confident are you in each candidate word at this
//! masked position". Confidences are raw per-candidate probabilities; they are
//! never renormalized over the candidate set.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub mod protocol;
pub mod toy;

pub use protocol::ProtocolScorer;
pub use toy::{fit_toy_scorer, ToyScorerModel};

pub const MASK_TOKEN: &str = "[MASK]";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScorerQuery {
    pub tokens: Vec<String>,
    pub mask_index: usize,
    pub candidates: Vec<String>,
}

impl ScorerQuery {
    /// Builds a query with the token at `mask_index` replaced by [`MASK_TOKEN`].
    pub fn masked(
        tokens: impl IntoIterator<Item = impl Into<String>>,
        mask_index: usize,
        candidates: impl IntoIterator<Item = impl Into<String>>,
    ) -> ScorerQuery {
        let mut tokens: Vec<String> = tokens.into_iter().map(Into::into).collect();
        if let Some(t) = tokens.get_mut(mask_index) {
            *t = MASK_TOKEN.to_string();
        }
        ScorerQuery {
            tokens,
            mask_index,
            candidates: candidates.into_iter().map(Into::into).collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.mask_index >= self.tokens.len() {
            return Err(Error::InvalidQuery(format!(
                "mask index {} outside {} tokens",
                self.mask_index,
                self.tokens.len()
            )));
        }
        if self.candidates.is_empty() {
            return Err(Error::InvalidQuery("no candidates".into()));
        }
        let mut seen = HashSet::new();
        for c in &self.candidates {
            if !seen.insert(c) {
                return Err(Error::InvalidQuery(format!("duplicate candidate `{c}`")));
            }
        }
        Ok(())
    }
}

/// Confidence per candidate word.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CandidateScores(pub BTreeMap<String, f64>);

impl CandidateScores {
    pub fn get(&self, word: &str) -> Option<f64> {
        self.0.get(word).copied()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Checks that every candidate of `query` is present with a value in [0, 1],
    /// and drops anything the query did not ask for.
    pub fn checked_for(mut self, query: &ScorerQuery) -> Result<CandidateScores> {
        let mut kept = BTreeMap::new();
        for c in &query.candidates {
            let value = self
                .0
                .remove(c)
                .ok_or_else(|| Error::CandidateMissing(c.clone()))?;
            if !value.is_finite() || !(0.0..=1.0).contains(&value) {
                return Err(Error::Protocol(format!(
                    "confidence {value} for `{c}` is outside [0, 1]"
                )));
            }
            kept.insert(c.clone(), value);
        }
        Ok(CandidateScores(kept))
    }
}

pub trait Scorer: Send + Sync {
    /// Stable description written into reports.
    fn identity(&self) -> String;

    /// Guarantees each word is scored as a single unit.
    fn extend_vocabulary(&self, words: &[String]) -> Result<()>;

    fn score(&self, query: &ScorerQuery) -> Result<CandidateScores>;

    /// Scores several queries; responses are in query order.
    fn score_batch(&self, queries: &[ScorerQuery]) -> Result<Vec<CandidateScores>> {
        queries.iter().map(|q| self.score(q)).collect()
    }
}

impl<S: Scorer + ?Sized> Scorer for &S {
    fn identity(&self) -> String {
        (**self).identity()
    }

    fn extend_vocabulary(&self, words: &[String]) -> Result<()> {
        (**self).extend_vocabulary(words)
    }

    fn score(&self, query: &ScorerQuery) -> Result<CandidateScores> {
        (**self).score(query)
    }

    fn score_batch(&self, queries: &[ScorerQuery]) -> Result<Vec<CandidateScores>> {
        (**self).score_batch(queries)
    }
}

impl<S: Scorer + ?Sized> Scorer for Box<S> {
    fn identity(&self) -> String {
        (**self).identity()
    }

    fn extend_vocabulary(&self, words: &[String]) -> Result<()> {
        (**self).extend_vocabulary(words)
    }

    fn score(&self, query: &ScorerQuery) -> Result<CandidateScores> {
        (**self).score(query)
    }

    fn score_batch(&self, queries: &[ScorerQuery]) -> Result<Vec<CandidateScores>> {
        (**self).score_batch(queries)
    }
}

/// A scorer backed by a closure; handy for degenerate scorers in tests and
/// for adapting other models.
pub struct FnScorer<F> {
    name: String,
    f: F,
}

impl<F> FnScorer<F>
where
    F: Fn(&ScorerQuery, &str) -> f64 + Send + Sync,
{
    /// `f(query, candidate)` gives the confidence of one candidate.
    pub fn new(name: impl Into<String>, f: F) -> Self {
        FnScorer {
            name: name.into(),
            f,
        }
    }
}

impl<F> Scorer for FnScorer<F>
where
    F: Fn(&ScorerQuery, &str) -> f64 + Send + Sync,
{
    fn identity(&self) -> String {
        self.name.clone()
    }

    fn extend_vocabulary(&self, _words: &[String]) -> Result<()> {
        Ok(())
    }

    fn score(&self, query: &ScorerQuery) -> Result<CandidateScores> {
        query.validate()?;
        let scores = query
            .candidates
            .iter()
            .map(|c| (c.clone(), (self.f)(query, c)))
            .collect();
        CandidateScores(scores).checked_for(query)
    }
}
