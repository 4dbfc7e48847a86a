//! Neighbor-conditioned count model used as the built-in scorer.
//!
//! For a masked position with left neighbor `l` and right neighbor `r`, the
//! confidence of candidate `c` is the mean of two add-alpha estimates:
//!
//! ```text
//! P_left(c | l)  = (n(l, c) + a) / (n(l, *) + a * |V_left  ∪ C|)
//! P_right(c | r) = (n(c, r) + a) / (n(*, r) + a * |V_right ∪ C|)
//! ```
//!
//! where `V_left` is every word ever seen with a left neighbor, `V_right` every
//! word ever seen with a right neighbor and `C` the query's candidates. With
//! only one neighbor the matching estimate is used alone; with none, the
//! unigram estimate `(n(c) + a) / (N + a * |V ∪ C|)` is used. Each estimate is a
//! proper distribution over its vocabulary, so confidences lie in [0, 1] and,
//! whenever that vocabulary holds two or more words, strictly inside (0, 1).
//!
//! Multiplying every count and `a` by the same factor leaves all confidences
//! unchanged.

use std::collections::{BTreeSet, HashMap};

use crate::error::Result;
use crate::scorer::{CandidateScores, Scorer, ScorerQuery};
use crate::textproc::{Analyzed, Sample};
use crate::lexicon::GenderLexicon;

#[derive(Debug, Clone, Default, PartialEq)]
struct ContextCounts {
    by_context: HashMap<String, HashMap<String, f64>>,
    totals: HashMap<String, f64>,
    vocab: BTreeSet<String>,
}

impl ContextCounts {
    fn add(&mut self, context: &str, target: &str, weight: f64) {
        *self
            .by_context
            .entry(context.to_string())
            .or_default()
            .entry(target.to_string())
            .or_insert(0.0) += weight;
        *self.totals.entry(context.to_string()).or_insert(0.0) += weight;
        self.vocab.insert(target.to_string());
    }

    fn count(&self, context: &str, target: &str) -> f64 {
        self.by_context
            .get(context)
            .and_then(|m| m.get(target))
            .copied()
            .unwrap_or(0.0)
    }

    fn total(&self, context: &str) -> f64 {
        self.totals.get(context).copied().unwrap_or(0.0)
    }

    fn scale(&mut self, factor: f64) {
        for m in self.by_context.values_mut() {
            for v in m.values_mut() {
                *v *= factor;
            }
        }
        for v in self.totals.values_mut() {
            *v *= factor;
        }
    }
}

fn vocab_size_with(vocab: &BTreeSet<String>, candidates: &[String]) -> f64 {
    let extra = candidates.iter().filter(|c| !vocab.contains(*c)).count();
    (vocab.len() + extra) as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyScorerModel {
    alpha: f64,
    unigram: HashMap<String, f64>,
    total: f64,
    vocab: BTreeSet<String>,
    /// context = left neighbor
    left: ContextCounts,
    /// context = right neighbor
    right: ContextCounts,
}

impl ToyScorerModel {
    pub fn new(alpha: f64) -> ToyScorerModel {
        assert!(alpha > 0.0 && alpha.is_finite(), "alpha must be positive");
        ToyScorerModel {
            alpha,
            unigram: HashMap::new(),
            total: 0.0,
            vocab: BTreeSet::new(),
            left: ContextCounts::default(),
            right: ContextCounts::default(),
        }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Total weight of unigram events seen so far.
    pub fn total_weight(&self) -> f64 {
        self.total
    }

    pub fn vocabulary(&self) -> &BTreeSet<String> {
        &self.vocab
    }

    pub fn unigram_count(&self, word: &str) -> f64 {
        self.unigram.get(word).copied().unwrap_or(0.0)
    }

    /// Count of `target` immediately after `left`.
    pub fn left_count(&self, left: &str, target: &str) -> f64 {
        self.left.count(left, target)
    }

    /// Count of `target` immediately before `right`.
    pub fn right_count(&self, target: &str, right: &str) -> f64 {
        self.right.count(right, target)
    }

    /// Adds the events of `tokens` with `weight`. Only positions listed in
    /// `targets` contribute (all positions when `None`); their neighbors are
    /// read from the full sequence. A zero weight changes nothing.
    pub fn absorb(&mut self, tokens: &[String], targets: Option<&[usize]>, weight: f64) {
        if weight == 0.0 {
            return;
        }
        let all: Vec<usize>;
        let positions = match targets {
            Some(t) => t,
            None => {
                all = (0..tokens.len()).collect();
                &all
            }
        };
        for &i in positions {
            let target = &tokens[i];
            *self.unigram.entry(target.clone()).or_insert(0.0) += weight;
            self.total += weight;
            self.vocab.insert(target.clone());
            if i > 0 {
                self.left.add(&tokens[i - 1], target, weight);
            }
            if i + 1 < tokens.len() {
                self.right.add(&tokens[i + 1], target, weight);
            }
        }
    }

    /// Multiplies all counts and alpha by `factor` (> 0).
    pub fn scaled(&self, factor: f64) -> ToyScorerModel {
        assert!(factor > 0.0);
        let mut m = self.clone();
        m.alpha *= factor;
        m.total *= factor;
        for v in m.unigram.values_mut() {
            *v *= factor;
        }
        m.left.scale(factor);
        m.right.scale(factor);
        m
    }

    /// Confidence of `candidate` at the query's mask.
    pub fn confidence(&self, query: &ScorerQuery, candidate: &str) -> f64 {
        let a = self.alpha;
        let i = query.mask_index;
        let cands = &query.candidates;
        let mut estimates = Vec::with_capacity(2);
        if i > 0 {
            let ctx = &query.tokens[i - 1];
            let v = vocab_size_with(&self.left.vocab, cands);
            estimates.push((self.left.count(ctx, candidate) + a) / (self.left.total(ctx) + a * v));
        }
        if i + 1 < query.tokens.len() {
            let ctx = &query.tokens[i + 1];
            let v = vocab_size_with(&self.right.vocab, cands);
            estimates
                .push((self.right.count(ctx, candidate) + a) / (self.right.total(ctx) + a * v));
        }
        if estimates.is_empty() {
            let v = vocab_size_with(&self.vocab, cands);
            return (self.unigram_count(candidate) + a) / (self.total + a * v);
        }
        estimates.iter().sum::<f64>() / estimates.len() as f64
    }
}

/// Fits the count model on the lowercase tokens of every sample.
pub fn fit_toy_scorer(corpus: &[Sample], alpha: f64) -> ToyScorerModel {
    let mut model = ToyScorerModel::new(alpha);
    let lexicon = GenderLexicon::empty();
    for sample in corpus {
        let norms = Analyzed::new(sample, &lexicon).norms();
        model.absorb(&norms, None, 1.0);
    }
    model
}

impl Scorer for ToyScorerModel {
    fn identity(&self) -> String {
        format!(
            "builtin-toy(alpha={},events={},vocab={})",
            self.alpha,
            self.total,
            self.vocab.len()
        )
    }

    /// Words are atomic in this model, so there is nothing to do.
    fn extend_vocabulary(&self, _words: &[String]) -> Result<()> {
        Ok(())
    }

    fn score(&self, query: &ScorerQuery) -> Result<CandidateScores> {
        query.validate()?;
        Ok(CandidateScores(
            query
                .candidates
                .iter()
                .map(|c| (c.clone(), self.confidence(query, c)))
                .collect(),
        ))
    }
}
