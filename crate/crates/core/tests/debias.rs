mod common;

use common::load;
use debias_forge::finetune::{debias_toy_scorer, emit_finetune_dataset};
use debias_forge::intervene::{InterventionSpec, MaskMethod};
use debias_forge::probe::{mine_samples, probe, MiningStrategy};
use debias_forge::scorer::fit_toy_scorer;
use debias_forge::{GenderLexicon, Sample};

const WEIGHT: f64 = 30.0;

fn mined(corpus: &[Sample], k: usize) -> Vec<Sample> {
    let lex = GenderLexicon::default_list();
    mine_samples(corpus, &lex, &fit_toy_scorer(corpus, 1.0), k, MiningStrategy::MostBiased, 0)
        .unwrap()
        .into_iter()
        .map(|m| m.sample)
        .collect()
}

#[test]
fn skewed_corpus_loses_half_its_bias() {
    let lex = GenderLexicon::default_list();
    let corpus = load("skewed_100.jsonl");
    let top = mined(&corpus, 10);
    let spec = InterventionSpec::uniform(MaskMethod::RandomPhrase, 0);
    let out = debias_toy_scorer(&corpus, &top, &lex, &spec, WEIGHT, 1.0).unwrap();
    let (before, after) = (out.before.total_confidence_difference, out.after.total_confidence_difference);
    assert!(before > 10.0);
    assert!(after <= 0.5 * before, "before {before} after {after}");
    assert_eq!(out.examples.len(), 10);
}

#[test]
fn balanced_control_stays_at_zero() {
    let lex = GenderLexicon::default_list();
    let corpus = load("balanced_100.jsonl");
    let before = probe(&corpus, &lex, &fit_toy_scorer(&corpus, 1.0)).unwrap();
    assert!(before.total_confidence_difference < 1e-9);
    for method in [MaskMethod::Neutral, MaskMethod::Naive] {
        let spec = InterventionSpec::uniform(method, 0);
        let out = debias_toy_scorer(&corpus, &mined(&corpus, 10), &lex, &spec, WEIGHT, 1.0).unwrap();
        assert!(out.after.total_confidence_difference < 1e-9);
    }
}

#[test]
fn debiasing_never_increases_bias_on_one_sided_skew() {
    let lex = GenderLexicon::default_list();
    let corpus = load("skewed_100.jsonl");
    let top = mined(&corpus, 10);
    let methods = [
        MaskMethod::RandomPhrase,
        MaskMethod::FemaleFirstRandomPhrase,
        MaskMethod::FixedPhrase1,
        MaskMethod::FixedPhrase2,
        MaskMethod::FixedPhrase3,
        MaskMethod::FixedPhrase4,
        MaskMethod::Neutral,
    ];
    for method in methods {
        for seed in 0..100 {
            let spec = InterventionSpec::uniform(method, seed);
            let out = debias_toy_scorer(&corpus, &top, &lex, &spec, WEIGHT, 1.0).unwrap();
            assert!(
                out.after.total_confidence_difference <= out.before.total_confidence_difference,
                "{method} seed {seed}"
            );
        }
    }
}

#[test]
fn finetune_targets_are_only_replacements() {
    let lex = GenderLexicon::default_list();
    let corpus = load("skewed_100.jsonl");
    let top = mined(&corpus, 10);
    let spec = InterventionSpec::uniform(MaskMethod::RandomPhrase, 0);
    let (examples, warnings) = emit_finetune_dataset(&top, &lex, &spec).unwrap();
    assert!(warnings.is_empty());
    for ex in &examples {
        // "<subject> said <phrase> is <adj>": the phrase sits between "said" and "is"
        let said = ex.tokens.iter().position(|t| t == "said").unwrap();
        let is = ex.tokens.iter().rposition(|t| t == "is").unwrap();
        assert_eq!(ex.target_positions, (said + 1..is).collect::<Vec<_>>());
        assert!(ex.target_tokens.contains(&"he".to_string()));
        assert!(ex.target_tokens.contains(&"she".to_string()));
    }
}
