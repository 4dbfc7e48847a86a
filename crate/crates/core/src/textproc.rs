//! Tokenization and gender-word detection.
//!
//! Segmentation rule:
//!
//! | input run                              | output                        |
//! |----------------------------------------|-------------------------------|
//! | maximal run of alphanumeric characters | one word token                |
//! | any other non-whitespace character     | a token of its own            |
//! | whitespace                             | never part of a token         |
//!
//! Hyphens and apostrophes are therefore separate tokens: `mother-in-law`
//! yields `mother`, `-`, `in`, `-`, `law`, and `her's` yields `her`, `'`, `s`.
//! Offsets are byte offsets into the sample text.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::lexicon::{GenderLexicon, PairId, Side};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Casing {
    Lower,
    Capitalized,
    Upper,
    Mixed,
}

impl Casing {
    pub fn of(word: &str) -> Casing {
        let mut chars = word.chars();
        let Some(first) = chars.next() else {
            return Casing::Lower;
        };
        let rest: Vec<char> = chars.collect();
        let any_upper = first.is_uppercase() || rest.iter().any(|c| c.is_uppercase());
        if !any_upper {
            return Casing::Lower;
        }
        let letters = word.chars().filter(|c| c.is_alphabetic()).count();
        if first.is_uppercase() && !rest.iter().any(|c| c.is_uppercase()) {
            Casing::Capitalized
        } else if letters > 1 && !word.chars().any(|c| c.is_lowercase()) {
            Casing::Upper
        } else {
            Casing::Mixed
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub surface: String,
    pub start: usize,
    pub end: usize,
    pub norm: String,
    pub casing: Casing,
}

impl Token {
    fn new(text: &str, start: usize, end: usize) -> Token {
        let surface = &text[start..end];
        Token {
            surface: surface.to_string(),
            start,
            end,
            norm: surface.to_lowercase(),
            casing: Casing::of(surface),
        }
    }

    pub fn is_word(&self) -> bool {
        self.surface.chars().all(char::is_alphanumeric)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Label {
    #[serde(rename = "stereotype")]
    Stereotype,
    #[serde(rename = "anti-stereotype")]
    AntiStereotype,
    #[serde(rename = "unrelated")]
    Unrelated,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sample {
    pub id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<Label>,
}

impl Sample {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Sample {
        Sample {
            id: id.into(),
            text: text.into(),
            source: None,
            label: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenderHit {
    pub token_index: usize,
    pub pair_id: PairId,
    pub side: Side,
    pub is_name: bool,
}

pub fn segment(text: &str) -> Vec<Token> {
    let mut tokens = Vec::new();
    let mut word_start: Option<usize> = None;
    for (i, c) in text.char_indices() {
        if c.is_alphanumeric() {
            word_start.get_or_insert(i);
            continue;
        }
        if let Some(start) = word_start.take() {
            tokens.push(Token::new(text, start, i));
        }
        if !c.is_whitespace() {
            tokens.push(Token::new(text, i, i + c.len_utf8()));
        }
    }
    if let Some(start) = word_start {
        tokens.push(Token::new(text, start, text.len()));
    }
    tokens
}

/// Hits among already segmented tokens, in token order.
pub fn find_hits(tokens: &[Token], lexicon: &GenderLexicon) -> Vec<GenderHit> {
    tokens
        .iter()
        .enumerate()
        .filter_map(|(token_index, tok)| {
            let hit = lexicon.lookup(&tok.norm)?;
            Some(GenderHit {
                token_index,
                pair_id: hit.pair_id,
                side: hit.side,
                is_name: hit.pair.is_name,
            })
        })
        .collect()
}

pub fn find_gender_words(sample: &Sample, lexicon: &GenderLexicon) -> Vec<GenderHit> {
    find_hits(&segment(&sample.text), lexicon)
}

/// Tokens and hits of one sample, computed together.
#[derive(Debug, Clone)]
pub struct Analyzed<'a> {
    pub sample: &'a Sample,
    pub tokens: Vec<Token>,
    pub hits: Vec<GenderHit>,
}

impl<'a> Analyzed<'a> {
    pub fn new(sample: &'a Sample, lexicon: &GenderLexicon) -> Analyzed<'a> {
        let tokens = segment(&sample.text);
        let hits = find_hits(&tokens, lexicon);
        Analyzed {
            sample,
            tokens,
            hits,
        }
    }

    pub fn norms(&self) -> Vec<String> {
        self.tokens.iter().map(|t| t.norm.clone()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffectedWordStats {
    pub total_hits: usize,
    pub mean_hits_per_sample: f64,
    /// Hit count per pair id; pairs without hits are absent.
    pub per_pair_counts: BTreeMap<PairId, usize>,
    /// Hit count per lowercase surface form.
    pub per_form_counts: BTreeMap<String, usize>,
}

/// Counts token occurrences (not distinct types) of lexicon words.
pub fn affected_word_stats(corpus: &[Sample], lexicon: &GenderLexicon) -> AffectedWordStats {
    let mut total_hits = 0;
    let mut per_pair_counts = BTreeMap::new();
    let mut per_form_counts = BTreeMap::new();
    for sample in corpus {
        let analyzed = Analyzed::new(sample, lexicon);
        total_hits += analyzed.hits.len();
        for hit in &analyzed.hits {
            *per_pair_counts.entry(hit.pair_id).or_insert(0) += 1;
            *per_form_counts
                .entry(analyzed.tokens[hit.token_index].norm.clone())
                .or_insert(0) += 1;
        }
    }
    let mean_hits_per_sample = if corpus.is_empty() {
        0.0
    } else {
        total_hits as f64 / corpus.len() as f64
    };
    AffectedWordStats {
        total_hits,
        mean_hits_per_sample,
        per_pair_counts,
        per_form_counts,
    }
}
