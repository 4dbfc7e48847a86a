//! Gender word list: loading, validation and lookup.
//!
//! A lexicon is an ordered list of [`GenderPair`]s. Pair ids are positions in
//! that list. Every male and female form must be a single lowercase word and
//! may appear in exactly one pair; neutral forms may span several words.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// The word list shipped with the crate.
pub const DEFAULT_LEXICON_TSV: &str = include_str!("../data/default_lexicon.tsv");

pub type PairId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Male,
    Female,
}

impl Side {
    pub fn flip(self) -> Side {
        match self {
            Side::Male => Side::Female,
            Side::Female => Side::Male,
        }
    }
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Side::Male => "male",
            Side::Female => "female",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    Pronoun,
    Kinship,
    Title,
    Name,
    #[default]
    Other,
}

impl Category {
    fn as_str(self) -> &'static str {
        match self {
            Category::Pronoun => "pronoun",
            Category::Kinship => "kinship",
            Category::Title => "title",
            Category::Name => "name",
            Category::Other => "other",
        }
    }
}

impl FromStr for Category {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "pronoun" => Ok(Category::Pronoun),
            "kinship" => Ok(Category::Kinship),
            "title" => Ok(Category::Title),
            "name" => Ok(Category::Name),
            "other" => Ok(Category::Other),
            other => Err(format!("unknown category `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenderPair {
    pub male_form: String,
    pub female_form: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub neutral_form: Option<String>,
    #[serde(default)]
    pub category: Category,
    #[serde(default)]
    pub is_name: bool,
}

impl GenderPair {
    pub fn form(&self, side: Side) -> &str {
        match side {
            Side::Male => &self.male_form,
            Side::Female => &self.female_form,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LexiconFormat {
    Tsv,
    Json,
}

impl LexiconFormat {
    /// Guesses the format from a file extension; anything but `.json` is TSV.
    pub fn from_path(path: &Path) -> LexiconFormat {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("json") => LexiconFormat::Json,
            _ => LexiconFormat::Tsv,
        }
    }
}

/// A resolved lexicon hit.
#[derive(Debug, Clone, Copy)]
pub struct FormRef<'a> {
    pub pair_id: PairId,
    pub pair: &'a GenderPair,
    pub side: Side,
}

#[derive(Debug, Clone)]
pub struct GenderLexicon {
    pairs: Vec<GenderPair>,
    form_index: HashMap<String, (PairId, Side)>,
}

impl GenderLexicon {
    /// Validates `pairs` and builds the form index. Record numbers in errors
    /// are 1-based positions in `pairs`.
    pub fn from_pairs(pairs: Vec<GenderPair>) -> Result<Self> {
        Self::build(pairs.into_iter().enumerate().map(|(i, p)| (i + 1, p)))
    }

    fn build(records: impl IntoIterator<Item = (usize, GenderPair)>) -> Result<Self> {
        let mut pairs = Vec::new();
        let mut form_index = HashMap::new();
        for (line, mut pair) in records {
            normalize_pair(&mut pair, line)?;
            let id = pairs.len();
            for side in [Side::Male, Side::Female] {
                let form = pair.form(side).to_string();
                if form_index.insert(form.clone(), (id, side)).is_some() {
                    return Err(Error::DuplicateForm(form));
                }
            }
            pairs.push(pair);
        }
        Ok(GenderLexicon { pairs, form_index })
    }

    pub fn empty() -> Self {
        GenderLexicon {
            pairs: Vec::new(),
            form_index: HashMap::new(),
        }
    }

    /// The word list bundled with the crate.
    pub fn default_list() -> Self {
        Self::parse_tsv(DEFAULT_LEXICON_TSV).expect("bundled lexicon is valid")
    }

    pub fn load(path: &Path, format: LexiconFormat) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        match format {
            LexiconFormat::Tsv => Self::parse_tsv(&text),
            LexiconFormat::Json => Self::parse_json(&text),
        }
    }

    /// Parses the tab-separated form:
    /// `male<TAB>female<TAB>neutral<TAB>category<TAB>is_name`.
    /// Only the first two columns are required; `-` marks an absent neutral form.
    pub fn parse_tsv(text: &str) -> Result<Self> {
        let mut records = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            if raw.trim().is_empty() || raw.trim_start().starts_with('#') {
                continue;
            }
            records.push((line, parse_tsv_record(raw, line)?));
        }
        Self::build(records)
    }

    /// Parses a JSON array of objects carrying the TSV column names as keys.
    pub fn parse_json(text: &str) -> Result<Self> {
        let values: Vec<serde_json::Value> =
            serde_json::from_str(text).map_err(|e| Error::MalformedRecord {
                line: e.line(),
                reason: e.to_string(),
            })?;
        let mut records = Vec::with_capacity(values.len());
        for (i, value) in values.into_iter().enumerate() {
            let mut pair: GenderPair =
                serde_json::from_value(value.clone()).map_err(|e| Error::MalformedRecord {
                    line: i + 1,
                    reason: e.to_string(),
                })?;
            if value.get("is_name").is_none() && pair.category == Category::Name {
                pair.is_name = true;
            }
            records.push((i + 1, pair));
        }
        Self::build(records)
    }

    pub fn pairs(&self) -> &[GenderPair] {
        &self.pairs
    }

    pub fn pair(&self, id: PairId) -> Option<&GenderPair> {
        self.pairs.get(id)
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Case-insensitive lookup of a single word.
    pub fn lookup(&self, word: &str) -> Option<FormRef<'_>> {
        let key = word.to_lowercase();
        let &(pair_id, side) = self.form_index.get(&key)?;
        Some(FormRef {
            pair_id,
            pair: &self.pairs[pair_id],
            side,
        })
    }

    /// The other side's form of `word`'s pair.
    pub fn opposite(&self, word: &str) -> Option<&str> {
        let hit = self.lookup(word)?;
        Some(hit.pair.form(hit.side.flip()))
    }

    /// Every male and female form, in pair order (male first).
    pub fn forms(&self) -> impl Iterator<Item = &str> {
        self.pairs
            .iter()
            .flat_map(|p| [p.male_form.as_str(), p.female_form.as_str()])
    }

    /// Canonical TSV rendering; the basis of [`GenderLexicon::hash`].
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for p in &self.pairs {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\n",
                p.male_form,
                p.female_form,
                p.neutral_form.as_deref().unwrap_or("-"),
                p.category.as_str(),
                p.is_name
            ));
        }
        out
    }

    /// Hex SHA-256 of the canonical rendering. Identifies the word list in reports.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_tsv().as_bytes()))
    }
}

fn parse_tsv_record(raw: &str, line: usize) -> Result<GenderPair> {
    let cols: Vec<&str> = raw.split('\t').collect();
    let malformed = |reason: String| Error::MalformedRecord { line, reason };
    if cols.len() < 2 || cols.len() > 5 {
        return Err(malformed(format!("expected 2 to 5 columns, found {}", cols.len())));
    }
    let neutral_form = match cols.get(2) {
        None | Some(&"-") | Some(&"") => None,
        Some(s) => Some(s.to_string()),
    };
    let category = match cols.get(3) {
        None | Some(&"") => Category::Other,
        Some(s) => s.parse().map_err(malformed)?,
    };
    let is_name = match cols.get(4) {
        None | Some(&"") => category == Category::Name,
        Some(s) => match s.to_ascii_lowercase().as_str() {
            "true" | "1" | "yes" => true,
            "false" | "0" | "no" => false,
            other => return Err(malformed(format!("bad is_name flag `{other}`"))),
        },
    };
    Ok(GenderPair {
        male_form: cols[0].to_string(),
        female_form: cols[1].to_string(),
        neutral_form,
        category,
        is_name,
    })
}

fn normalize_pair(pair: &mut GenderPair, line: usize) -> Result<()> {
    let malformed = |reason: String| Error::MalformedRecord { line, reason };
    for form in [&mut pair.male_form, &mut pair.female_form] {
        check_form(form).map_err(malformed)?;
        if form.split_whitespace().count() > 1 {
            return Err(malformed(format!("`{form}` is not a single word")));
        }
        *form = form.to_lowercase();
    }
    if let Some(neutral) = pair.neutral_form.as_mut() {
        check_form(neutral).map_err(malformed)?;
        *neutral = neutral.to_lowercase();
    }
    if pair.male_form == pair.female_form {
        return Err(malformed(format!(
            "male and female forms are both `{}`",
            pair.male_form
        )));
    }
    if pair.is_name && pair.category != Category::Name {
        return Err(malformed("name pairs must use category `name`".into()));
    }
    Ok(())
}

fn check_form(form: &str) -> std::result::Result<(), String> {
    if form.is_empty() {
        return Err("empty form".into());
    }
    if form.trim() != form {
        return Err(format!("`{form}` has surrounding whitespace"));
    }
    Ok(())
}
