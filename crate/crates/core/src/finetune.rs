//! Few-shot fine-tuning data: intervened samples whose training targets are
//! exactly the tokens of the inserted replacements, and the desk-scale debias
//! loop that "fine-tunes" the count scorer on them.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::intervene::{intervene_sample, Edit, InterventionSpec};
use crate::lexicon::GenderLexicon;
use crate::probe::{probe, BiasReport};
use crate::scorer::{fit_toy_scorer, ToyScorerModel};
use crate::textproc::{segment, Sample};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FinetuneExample {
    #[serde(rename = "id")]
    pub sample_id: String,
    pub tokens: Vec<String>,
    /// Token indices to mask during training.
    #[serde(rename = "targets")]
    pub target_positions: Vec<usize>,
    /// Gold tokens at `target_positions`.
    #[serde(rename = "gold")]
    pub target_tokens: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MaskPolicy {
    /// All targets of a sequence masked in the same forward pass.
    Simultaneous,
    /// One target masked per forward pass.
    Individual,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: u32,
    pub learning_rate: f64,
    pub optimizer: String,
    pub batch_size: u32,
    pub seed: u64,
    pub mask_policy: MaskPolicy,
}

impl TrainConfig {
    pub fn with_seed(seed: u64) -> TrainConfig {
        TrainConfig {
            seed,
            ..TrainConfig::default()
        }
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            learning_rate: 0.001,
            optimizer: "adamw".into(),
            batch_size: 8,
            seed: 0,
            mask_policy: MaskPolicy::Simultaneous,
        }
    }
}

/// A mined sample that produced no edits and was left out of the dataset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmitWarning {
    pub sample_id: String,
    pub reason: String,
}

/// Builds the training example for an intervened text and its edits.
pub fn example_from_edits(sample_id: &str, intervened_text: &str, edits: &[Edit]) -> FinetuneExample {
    let tokens = segment(intervened_text);
    let target_positions: Vec<usize> = tokens
        .iter()
        .enumerate()
        .filter(|(_, t)| edits.iter().any(|e| e.start <= t.start && t.end <= e.end))
        .map(|(i, _)| i)
        .collect();
    let target_tokens = target_positions.iter().map(|&i| tokens[i].surface.clone()).collect();
    FinetuneExample {
        sample_id: sample_id.to_string(),
        tokens: tokens.into_iter().map(|t| t.surface).collect(),
        target_positions,
        target_tokens,
    }
}

/// Intervenes in every mined sample and marks the replaced tokens as targets.
/// Samples without edits are skipped and reported as warnings.
pub fn emit_finetune_dataset(
    mined: &[Sample],
    lexicon: &GenderLexicon,
    spec: &InterventionSpec,
) -> Result<(Vec<FinetuneExample>, Vec<EmitWarning>)> {
    let mut examples = Vec::with_capacity(mined.len());
    let mut warnings = Vec::new();
    for sample in mined {
        let (out, edits) = intervene_sample(sample, lexicon, spec)?;
        if edits.is_empty() {
            warnings.push(EmitWarning {
                sample_id: sample.id.clone(),
                reason: "EmptyTargets: no gender words to intervene on".into(),
            });
            continue;
        }
        examples.push(example_from_edits(&sample.id, &out.text, &edits));
    }
    Ok((examples, warnings))
}

#[derive(Debug, Clone)]
pub struct DebiasOutcome {
    pub model: ToyScorerModel,
    pub before: BiasReport,
    pub after: BiasReport,
    pub examples: Vec<FinetuneExample>,
}

/// Refits the count scorer with the intervened mined samples.
///
/// The base model is fit on `base` with `alpha`. Each emitted example then
/// adds its target-position events (neighbors read from the intervened text)
/// with `weight`; the default weight is one per training epoch. Both reports
/// probe `base`.
pub fn debias_toy_scorer(
    base: &[Sample],
    mined: &[Sample],
    lexicon: &GenderLexicon,
    spec: &InterventionSpec,
    weight: f64,
    alpha: f64,
) -> Result<DebiasOutcome> {
    let mut model = fit_toy_scorer(base, alpha);
    let before = probe(base, lexicon, &model)?;
    let (examples, _) = emit_finetune_dataset(mined, lexicon, spec)?;
    for ex in &examples {
        let norms: Vec<String> = ex.tokens.iter().map(|t| t.to_lowercase()).collect();
        model.absorb(&norms, Some(&ex.target_positions), weight);
    }
    let after = probe(base, lexicon, &model)?;
    Ok(DebiasOutcome {
        model,
        before,
        after,
        examples,
    })
}
