//! Masking interventions: replace gender words with a fixed word, a neutral
//! counterpart, or an equality phrase naming both genders.
//!
//! Randomness comes from ChaCha8, one stream per sample seeded with
//! `seed ^ fnv1a64(sample.id)` via `SeedableRng::seed_from_u64`. Draws happen
//! per hit in token order; for each hit the template is drawn first, then the
//! slot order, and only the draws the method needs are taken. A template draw
//! is `next_u32() % 4`, an order draw `next_u32() % 2` (0 = male first).

use std::fmt;
use std::str::FromStr;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lexicon::{GenderLexicon, GenderPair, Side};
use crate::textproc::{segment, Casing, GenderHit, Sample};

pub const DEFAULT_NAIVE_WORD: &str = "person";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MaskMethod {
    Naive,
    Neutral,
    RandomPhrase,
    FemaleFirstRandomPhrase,
    #[serde(rename = "fixed-phrase-1")]
    FixedPhrase1,
    #[serde(rename = "fixed-phrase-2")]
    FixedPhrase2,
    #[serde(rename = "fixed-phrase-3")]
    FixedPhrase3,
    #[serde(rename = "fixed-phrase-4")]
    FixedPhrase4,
}

impl MaskMethod {
    pub const ALL: [MaskMethod; 8] = [
        MaskMethod::Naive,
        MaskMethod::Neutral,
        MaskMethod::RandomPhrase,
        MaskMethod::FemaleFirstRandomPhrase,
        MaskMethod::FixedPhrase1,
        MaskMethod::FixedPhrase2,
        MaskMethod::FixedPhrase3,
        MaskMethod::FixedPhrase4,
    ];

    pub fn is_phrase(self) -> bool {
        !matches!(self, MaskMethod::Naive | MaskMethod::Neutral)
    }

    pub fn fixed_template(self) -> Option<PhraseTemplate> {
        match self {
            MaskMethod::FixedPhrase1 => Some(PhraseTemplate::BothAnd),
            MaskMethod::FixedPhrase2 => Some(PhraseTemplate::And),
            MaskMethod::FixedPhrase3 => Some(PhraseTemplate::Or),
            MaskMethod::FixedPhrase4 => Some(PhraseTemplate::EitherOr),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            MaskMethod::Naive => "naive",
            MaskMethod::Neutral => "neutral",
            MaskMethod::RandomPhrase => "random-phrase",
            MaskMethod::FemaleFirstRandomPhrase => "female-first-random-phrase",
            MaskMethod::FixedPhrase1 => "fixed-phrase-1",
            MaskMethod::FixedPhrase2 => "fixed-phrase-2",
            MaskMethod::FixedPhrase3 => "fixed-phrase-3",
            MaskMethod::FixedPhrase4 => "fixed-phrase-4",
        }
    }
}

impl fmt::Display for MaskMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MaskMethod {
    type Err = String;

    /// Accepts the short names and the `-masking` suffixed long names,
    /// with `_` or `-` separators.
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let key = s.trim().to_ascii_lowercase().replace('_', "-");
        let key = key.strip_suffix("-masking").unwrap_or(&key);
        let key = key.replace("-masking-", "-");
        MaskMethod::ALL
            .into_iter()
            .find(|m| m.as_str() == key)
            .ok_or_else(|| format!("unknown mask method `{s}`"))
    }
}

/// The four equality phrases; `[1]` and `[2]` are filled with opposite-gender forms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PhraseTemplate {
    /// `both [1] and [2]`
    BothAnd,
    /// `[1] and [2]`
    And,
    /// `[1] or [2]`
    Or,
    /// `either [1] or [2]`
    EitherOr,
}

impl PhraseTemplate {
    pub const ALL: [PhraseTemplate; 4] = [
        PhraseTemplate::BothAnd,
        PhraseTemplate::And,
        PhraseTemplate::Or,
        PhraseTemplate::EitherOr,
    ];

    pub fn render(self, first: &str, second: &str) -> String {
        match self {
            PhraseTemplate::BothAnd => format!("both {first} and {second}"),
            PhraseTemplate::And => format!("{first} and {second}"),
            PhraseTemplate::Or => format!("{first} or {second}"),
            PhraseTemplate::EitherOr => format!("either {first} or {second}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SlotOrder {
    MaleFirst,
    FemaleFirst,
}

impl SlotOrder {
    pub fn first(self) -> Side {
        match self {
            SlotOrder::MaleFirst => Side::Male,
            SlotOrder::FemaleFirst => Side::Female,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InterventionSpec {
    pub name_method: MaskMethod,
    pub non_name_method: MaskMethod,
    pub seed: u64,
    #[serde(default = "default_naive_word")]
    pub naive_word: String,
}

fn default_naive_word() -> String {
    DEFAULT_NAIVE_WORD.to_string()
}

impl InterventionSpec {
    /// Same method for name and non-name words.
    pub fn uniform(method: MaskMethod, seed: u64) -> InterventionSpec {
        InterventionSpec {
            name_method: method,
            non_name_method: method,
            seed,
            naive_word: default_naive_word(),
        }
    }

    pub fn method_for(&self, hit: &GenderHit) -> MaskMethod {
        if hit.is_name {
            self.name_method
        } else {
            self.non_name_method
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edit {
    pub sample_id: String,
    /// Index of the replaced token in the original sample.
    pub token_index: usize,
    pub original: String,
    pub replacement: String,
    pub method: MaskMethod,
    /// Byte span of `replacement` in the intervened text.
    pub start: usize,
    pub end: usize,
}

/// Per-sample random stream.
pub struct PhraseRng(ChaCha8Rng);

impl PhraseRng {
    pub fn from_seed(seed: u64) -> PhraseRng {
        PhraseRng(ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn for_sample(seed: u64, sample_id: &str) -> PhraseRng {
        Self::from_seed(seed ^ fnv1a64(sample_id.as_bytes()))
    }

    fn draw_template(&mut self) -> PhraseTemplate {
        PhraseTemplate::ALL[(self.0.next_u32() % 4) as usize]
    }

    fn draw_order(&mut self) -> SlotOrder {
        if self.0.next_u32().is_multiple_of(2) {
            SlotOrder::MaleFirst
        } else {
            SlotOrder::FemaleFirst
        }
    }

    /// Template and slot order for one hit; `None` for non-phrase methods.
    pub fn draw(&mut self, method: MaskMethod) -> Option<(PhraseTemplate, SlotOrder)> {
        match method {
            MaskMethod::Naive | MaskMethod::Neutral => None,
            MaskMethod::RandomPhrase => {
                let template = self.draw_template();
                Some((template, self.draw_order()))
            }
            MaskMethod::FemaleFirstRandomPhrase => {
                Some((self.draw_template(), SlotOrder::FemaleFirst))
            }
            fixed => {
                let template = fixed.fixed_template().expect("fixed phrase method");
                Some((template, self.draw_order()))
            }
        }
    }
}

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0100_0000_01b3);
    }
    hash
}

pub fn render_phrase(pair: &GenderPair, template: PhraseTemplate, order: SlotOrder) -> String {
    let first = order.first();
    template.render(pair.form(first), pair.form(first.flip()))
}

/// Draws a template and order for `method` and renders it with `pair`'s forms.
/// Returns `None` for the two non-phrase methods. `word` must be a form of `pair`.
pub fn instantiate_phrase(
    word: &str,
    pair: &GenderPair,
    method: MaskMethod,
    rng: &mut PhraseRng,
) -> Option<String> {
    debug_assert!(
        word.eq_ignore_ascii_case(&pair.male_form) || word.eq_ignore_ascii_case(&pair.female_form)
    );
    let (template, order) = rng.draw(method)?;
    Some(render_phrase(pair, template, order))
}

fn capitalize(word: &str) -> String {
    let mut chars = word.chars();
    match chars.next() {
        Some(c) => c.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

/// Uppercases the first character iff the original token was capitalized.
pub fn match_casing(replacement: &str, casing: Casing) -> String {
    if casing == Casing::Capitalized {
        capitalize(replacement)
    } else {
        replacement.to_string()
    }
}

fn replacement_for(
    surface: &str,
    casing: Casing,
    pair: &GenderPair,
    method: MaskMethod,
    spec: &InterventionSpec,
    rng: &mut PhraseRng,
) -> Result<String> {
    let raw = match method {
        MaskMethod::Naive => spec.naive_word.clone(),
        MaskMethod::Neutral => pair
            .neutral_form
            .clone()
            .ok_or_else(|| Error::MissingNeutralForm(surface.to_lowercase()))?,
        phrase => {
            let (template, order) = rng.draw(phrase).expect("phrase method");
            if pair.is_name && casing == Casing::Capitalized {
                let first = order.first();
                template.render(
                    &capitalize(pair.form(first)),
                    &capitalize(pair.form(first.flip())),
                )
            } else {
                render_phrase(pair, template, order)
            }
        }
    };
    Ok(match_casing(&raw, casing))
}

/// Replaces every hit per `spec`. Text outside hits is copied unchanged.
/// `hits` must come from segmenting `sample.text` against `lexicon`.
pub fn apply_intervention(
    sample: &Sample,
    hits: &[GenderHit],
    lexicon: &GenderLexicon,
    spec: &InterventionSpec,
) -> Result<(Sample, Vec<Edit>)> {
    let tokens = segment(&sample.text);
    let mut rng = PhraseRng::for_sample(spec.seed, &sample.id);
    let mut text = String::with_capacity(sample.text.len() + 16 * hits.len());
    let mut edits = Vec::with_capacity(hits.len());
    let mut cursor = 0;
    for hit in hits {
        let tok = &tokens[hit.token_index];
        let pair = lexicon
            .pair(hit.pair_id)
            .expect("hit refers to a pair of this lexicon");
        let method = spec.method_for(hit);
        let replacement = replacement_for(&tok.surface, tok.casing, pair, method, spec, &mut rng)?;
        text.push_str(&sample.text[cursor..tok.start]);
        let start = text.len();
        text.push_str(&replacement);
        edits.push(Edit {
            sample_id: sample.id.clone(),
            token_index: hit.token_index,
            original: tok.surface.clone(),
            replacement,
            method,
            start,
            end: text.len(),
        });
        cursor = tok.end;
    }
    text.push_str(&sample.text[cursor..]);
    let out = Sample {
        text,
        ..sample.clone()
    };
    Ok((out, edits))
}

/// Segments, detects and intervenes in one step.
pub fn intervene_sample(
    sample: &Sample,
    lexicon: &GenderLexicon,
    spec: &InterventionSpec,
) -> Result<(Sample, Vec<Edit>)> {
    let hits = crate::textproc::find_gender_words(sample, lexicon);
    apply_intervention(sample, &hits, lexicon, spec)
}

/// One line of an intervened corpus file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervenedRecord {
    #[serde(flatten)]
    pub sample: Sample,
    pub intervened_text: String,
    pub edits: Vec<Edit>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::textproc::find_gender_words;

    fn lex() -> GenderLexicon {
        GenderLexicon::default_list()
    }

    fn one(text: &str, method: MaskMethod, seed: u64) -> String {
        let lex = lex();
        let sample = Sample::new("t", text);
        intervene_sample(&sample, &lex, &InterventionSpec::uniform(method, seed))
            .unwrap()
            .0
            .text
    }

    #[test]
    fn naive_and_neutral_rows() {
        for w in ["he", "she", "boy"] {
            assert_eq!(one(w, MaskMethod::Naive, 0), "person");
        }
        assert_eq!(one("he", MaskMethod::Neutral, 0), "they");
        assert_eq!(one("her", MaskMethod::Neutral, 0), "their");
        assert_eq!(one("schoolgirl", MaskMethod::Neutral, 0), "schoolkid");
    }

    #[test]
    fn templates_render_exactly() {
        let lex = lex();
        let he = lex.lookup("he").unwrap().pair;
        let boy = lex.lookup("boy").unwrap().pair;
        assert_eq!(
            render_phrase(he, PhraseTemplate::Or, SlotOrder::MaleFirst),
            "he or she"
        );
        assert_eq!(
            render_phrase(he, PhraseTemplate::And, SlotOrder::FemaleFirst),
            "she and he"
        );
        assert_eq!(
            render_phrase(boy, PhraseTemplate::EitherOr, SlotOrder::FemaleFirst),
            "either girl or boy"
        );
        assert_eq!(
            render_phrase(boy, PhraseTemplate::BothAnd, SlotOrder::MaleFirst),
            "both boy and girl"
        );
    }

    #[test]
    fn female_first_always_leads_with_female_form() {
        let lex = lex();
        let he = lex.lookup("he").unwrap().pair;
        let mut rng = PhraseRng::from_seed(5);
        for _ in 0..200 {
            let phrase =
                instantiate_phrase("he", he, MaskMethod::FemaleFirstRandomPhrase, &mut rng)
                    .unwrap();
            let s = phrase.find("she").unwrap();
            let h = phrase.rfind(" he").unwrap();
            assert!(s < h, "{phrase}");
        }
    }

    #[test]
    fn fixed_phrase_one_orders_are_balanced() {
        let lex = lex();
        let girl = lex.lookup("girl").unwrap().pair;
        let mut rng = PhraseRng::from_seed(42);
        let mut girl_first = 0;
        let draws = 10_000;
        for _ in 0..draws {
            let p = instantiate_phrase("girl", girl, MaskMethod::FixedPhrase1, &mut rng).unwrap();
            match p.as_str() {
                "both girl and boy" => girl_first += 1,
                "both boy and girl" => {}
                other => panic!("unexpected phrase {other}"),
            }
        }
        let freq = girl_first as f64 / draws as f64;
        assert!((freq - 0.5).abs() <= 0.02, "{freq}");
    }

    #[test]
    fn non_phrase_methods_draw_nothing() {
        let lex = lex();
        let he = lex.lookup("he").unwrap().pair;
        let mut rng = PhraseRng::from_seed(1);
        assert!(instantiate_phrase("he", he, MaskMethod::Naive, &mut rng).is_none());
        assert!(instantiate_phrase("he", he, MaskMethod::Neutral, &mut rng).is_none());
    }

    #[test]
    fn method_names_parse() {
        assert_eq!("naive-masking".parse(), Ok(MaskMethod::Naive));
        assert_eq!("random_phrase".parse(), Ok(MaskMethod::RandomPhrase));
        assert_eq!(
            "fixed-phrase-masking-3".parse(),
            Ok(MaskMethod::FixedPhrase3)
        );
        assert_eq!(
            "female-first-random-phrase-masking".parse(),
            Ok(MaskMethod::FemaleFirstRandomPhrase)
        );
        assert!("fixed-phrase-5".parse::<MaskMethod>().is_err());
        for m in MaskMethod::ALL {
            let json = serde_json::to_string(&m).unwrap();
            assert_eq!(json, format!("\"{m}\""));
        }
    }

    #[test]
    fn casing_is_restored() {
        assert_eq!(one("He runs.", MaskMethod::Naive, 0), "Person runs.");
        assert_eq!(one("HE runs.", MaskMethod::Naive, 0), "person runs.");
        assert_eq!(one("She said", MaskMethod::Neutral, 0), "They said");
        let out = one("Jessica waved", MaskMethod::FixedPhrase3, 3);
        assert!(
            out == "Jessica or James waved" || out == "James or Jessica waved",
            "{out}"
        );
        assert_eq!(one("Jessica waved", MaskMethod::Neutral, 0), "Jordan waved");
    }

    #[test]
    fn missing_neutral_form_is_an_error() {
        let lex = GenderLexicon::parse_tsv("lad\tlass\n").unwrap();
        let sample = Sample::new("x", "the lad");
        let err = intervene_sample(&sample, &lex, &InterventionSpec::uniform(MaskMethod::Neutral, 0))
            .unwrap_err();
        assert!(matches!(err, Error::MissingNeutralForm(w) if w == "lad"));
        // phrase methods need no neutral form
        assert!(intervene_sample(
            &sample,
            &lex,
            &InterventionSpec::uniform(MaskMethod::RandomPhrase, 0)
        )
        .is_ok());
    }

    #[test]
    fn names_and_non_names_use_their_own_methods() {
        let lex = lex();
        let spec = InterventionSpec {
            name_method: MaskMethod::Neutral,
            non_name_method: MaskMethod::FemaleFirstRandomPhrase,
            seed: 9,
            naive_word: "person".into(),
        };
        let sample = Sample::new("j", "Jessica is a new mommy.");
        let (out, edits) = intervene_sample(&sample, &lex, &spec).unwrap();
        assert_eq!(edits.len(), 2);
        assert_eq!(edits[0].method, MaskMethod::Neutral);
        assert_eq!(edits[0].replacement, "Jordan");
        assert_eq!(edits[1].method, MaskMethod::FemaleFirstRandomPhrase);
        assert!(edits[1].replacement.contains("mommy") && edits[1].replacement.contains("daddy"));
        assert!(out.text.starts_with("Jordan is a new "));
        assert!(out.text.ends_with('.'));
        for e in &edits {
            assert_eq!(&out.text[e.start..e.end], e.replacement);
        }
    }

    #[test]
    fn configurable_naive_word() {
        let lex = lex();
        let mut spec = InterventionSpec::uniform(MaskMethod::Naive, 0);
        spec.naive_word = "individual".into();
        let (out, _) = intervene_sample(&Sample::new("a", "the boy ran"), &lex, &spec).unwrap();
        assert_eq!(out.text, "the individual ran");
    }

    #[test]
    fn naive_is_idempotent_and_neutral_complete() {
        let lex = lex();
        let text = "He told his Mother that the King and Mary's brother-in-law left.";
        for method in [MaskMethod::Naive, MaskMethod::Neutral] {
            let spec = InterventionSpec::uniform(method, 0);
            let (once, _) = intervene_sample(&Sample::new("a", text), &lex, &spec).unwrap();
            assert!(find_gender_words(&once, &lex).is_empty(), "{}", once.text);
            let (twice, edits) = intervene_sample(&once, &lex, &spec).unwrap();
            assert!(edits.is_empty());
            assert_eq!(once.text, twice.text);
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        const WORDS: &[&str] = &[
            "he", "She", "the", "boy", "Girl", "runs", "mother", "HIS", "her", "Jessica",
            "james", "cat", ",", ".", "schoolgirl", "Uncle", "sat",
        ];

        fn text_strategy() -> impl Strategy<Value = String> {
            proptest::collection::vec(proptest::sample::select(WORDS), 0..16)
                .prop_map(|w| w.join(" "))
        }

        fn method_strategy() -> impl Strategy<Value = MaskMethod> {
            proptest::sample::select(MaskMethod::ALL.to_vec())
        }

        proptest! {
            #[test]
            fn deterministic_and_faithful(
                text in text_strategy(),
                name_method in method_strategy(),
                non_name_method in method_strategy(),
                seed in any::<u64>(),
            ) {
                let lex = lex();
                let spec = InterventionSpec { name_method, non_name_method, seed, naive_word: "person".into() };
                let sample = Sample::new("p", text.clone());
                let hits = find_gender_words(&sample, &lex);
                let (a, ea) = apply_intervention(&sample, &hits, &lex, &spec).unwrap();
                let (b, eb) = apply_intervention(&sample, &hits, &lex, &spec).unwrap();
                prop_assert_eq!(&a, &b);
                prop_assert_eq!(&ea, &eb);
                prop_assert_eq!(ea.len(), hits.len());

                let tokens = segment(&text);
                for (edit, hit) in ea.iter().zip(&hits) {
                    prop_assert_eq!(edit.token_index, hit.token_index);
                    prop_assert!(!edit.replacement.is_empty());
                    prop_assert!(lex.lookup(&edit.original).is_some());
                    prop_assert_eq!(&a.text[edit.start..edit.end], edit.replacement.as_str());
                    let first = edit.replacement.chars().next().unwrap();
                    let capitalized = tokens[hit.token_index].casing == Casing::Capitalized;
                    prop_assert_eq!(first.is_uppercase(), capitalized);
                }

                // text outside edits is untouched
                let mut rest = String::new();
                let mut cursor = 0;
                for e in &ea {
                    rest.push_str(&a.text[cursor..e.start]);
                    cursor = e.end;
                }
                rest.push_str(&a.text[cursor..]);
                let mut orig_rest = String::new();
                let mut cursor = 0;
                for h in &hits {
                    let t = &tokens[h.token_index];
                    orig_rest.push_str(&text[cursor..t.start]);
                    cursor = t.end;
                }
                orig_rest.push_str(&text[cursor..]);
                prop_assert_eq!(rest, orig_rest);

                // every remaining hit sits inside an edit
                let out_tokens = segment(&a.text);
                for h in find_gender_words(&a, &lex) {
                    let t = &out_tokens[h.token_index];
                    prop_assert!(ea.iter().any(|e| e.start <= t.start && t.end <= e.end));
                }
                if !name_method.is_phrase() && !non_name_method.is_phrase() {
                    prop_assert!(find_gender_words(&a, &lex).is_empty());
                }
            }
        }
    }
}
