mod common;

use std::collections::BTreeMap;
use std::time::Instant;

use common::{load, tokenize, CountOracle, OracleLexicon};
use debias_forge::probe::{mine_samples, probe, BiasReport, MiningStrategy};
use debias_forge::scorer::{fit_toy_scorer, FnScorer};
use debias_forge::{Error, GenderLexicon, Sample, Scorer, ScorerQuery};

const TOL: f64 = 1e-9;
const CORPORA: [&str; 3] = ["probe_pronouns.jsonl", "probe_names.jsonl", "probe_mixed.jsonl"];

struct Expected {
    tcd: f64,
    n_hits: usize,
    /// id -> (score, hits)
    samples: BTreeMap<String, (f64, usize)>,
    /// (male, female) -> |diff| per position
    pairs: BTreeMap<(String, String), Vec<f64>>,
}

fn oracle(corpus: &[Sample], conf: impl Fn(&[String], usize, &str, &[String]) -> f64) -> Expected {
    let lex = OracleLexicon::bundled();
    let mut signed = 0.0;
    let mut n_hits = 0;
    let mut samples = BTreeMap::new();
    let mut pairs: BTreeMap<(String, String), Vec<f64>> = BTreeMap::new();
    for s in corpus {
        let tokens = tokenize(&s.text);
        let (mut score, mut hits) = (0.0, 0);
        for i in 0..tokens.len() {
            let Some(&(p, _)) = lex.forms.get(&tokens[i]) else { continue };
            let pair = &lex.pairs[p];
            let mut masked = tokens.clone();
            masked[i] = "[MASK]".into();
            let cands = vec![pair.female.clone(), pair.male.clone()];
            let d = conf(&masked, i, &pair.female, &cands) - conf(&masked, i, &pair.male, &cands);
            signed += d;
            score += d.abs();
            hits += 1;
            pairs.entry((pair.male.clone(), pair.female.clone())).or_default().push(d.abs());
        }
        n_hits += hits;
        samples.insert(s.id.clone(), (score, hits));
    }
    Expected {
        tcd: signed.abs(),
        n_hits,
        samples,
        pairs,
    }
}

fn check(report: &BiasReport, exp: &Expected) {
    assert!((report.total_confidence_difference - exp.tcd).abs() < TOL);
    assert_eq!(report.n_hits, exp.n_hits);
    assert_eq!(report.sample_scores.len(), exp.samples.len());
    for s in &report.sample_scores {
        let (score, hits) = exp.samples[&s.sample_id];
        assert!((s.score - score).abs() < TOL, "{}", s.sample_id);
        assert_eq!(s.n_hits, hits);
    }
    assert_eq!(report.pair_stats.len(), exp.pairs.len());
    for st in &report.pair_stats {
        let v = &exp.pairs[&(st.male_form.clone(), st.female_form.clone())];
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / v.len() as f64;
        assert_eq!(st.n_positions, v.len());
        assert!((st.mean_abs_diff - mean).abs() < TOL);
        assert!((st.std_abs_diff - var.sqrt()).abs() < TOL);
    }
    for w in report.pair_stats.windows(2) {
        assert!(w[0].mean_abs_diff >= w[1].mean_abs_diff);
    }
}

fn hashed(tokens: &[String], mask: usize, cand: &str) -> f64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in tokens.join(" ").bytes().chain(mask.to_le_bytes()).chain(cand.bytes()) {
        h = (h ^ b as u64).wrapping_mul(0x0100_0000_01b3);
    }
    ((h >> 11) as f64 + 0.5) / (1u64 << 53) as f64
}

#[test]
fn hit_counts_of_fixtures() {
    let lex = GenderLexicon::default_list();
    for name in CORPORA {
        let corpus = load(name);
        let report = probe(&corpus, &lex, &fit_toy_scorer(&corpus, 1.0)).unwrap();
        assert!(report.n_hits > 0 && report.n_hits <= 50, "{name}: {}", report.n_hits);
    }
}

#[test]
fn toy_scorer_matches_brute_force() {
    let lex = GenderLexicon::default_list();
    let start = Instant::now();
    for name in CORPORA {
        let corpus = load(name);
        for alpha in [1.0, 0.1] {
            let model = fit_toy_scorer(&corpus, alpha);
            let oracle_model = CountOracle::fit(corpus.iter().map(|s| &s.text), alpha);
            let exp = oracle(&corpus, |t, i, c, cs| oracle_model.conf(t, i, c, cs));
            check(&probe(&corpus, &lex, &model).unwrap(), &exp);
        }
    }
    assert!(start.elapsed().as_secs_f64() < 5.0);
}

#[test]
fn arbitrary_scorer_matches_brute_force() {
    let lex = GenderLexicon::default_list();
    let scorer = FnScorer::new("hashed", |q: &ScorerQuery, c: &str| hashed(&q.tokens, q.mask_index, c));
    for name in CORPORA {
        let corpus = load(name);
        let exp = oracle(&corpus, |t, i, c, _| hashed(t, i, c));
        let report = probe(&corpus, &lex, &scorer).unwrap();
        check(&report, &exp);
        assert_eq!(report.scorer, scorer.identity());
        assert_eq!(report.lexicon_hash, lex.hash());
    }
}

fn exhaustive_top(corpus: &[Sample], exp: &Expected, k: usize) -> Vec<String> {
    let mut all: Vec<(&String, f64)> = corpus
        .iter()
        .filter(|s| exp.samples[&s.id].1 > 0)
        .map(|s| (&s.id, exp.samples[&s.id].0))
        .collect();
    all.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(b.0)));
    all.into_iter().take(k).map(|(id, _)| id.clone()).collect()
}

#[test]
fn most_biased_matches_exhaustive_sort() {
    let lex = GenderLexicon::default_list();
    let corpus: Vec<Sample> = CORPORA.iter().flat_map(|n| load(n)).collect();
    let model = fit_toy_scorer(&corpus, 1.0);
    let oracle_model = CountOracle::fit(corpus.iter().map(|s| &s.text), 1.0);
    let exp = oracle(&corpus, |t, i, c, cs| oracle_model.conf(t, i, c, cs));
    let mut previous: Vec<String> = Vec::new();
    for k in [1, 3, 10] {
        let mined = mine_samples(&corpus, &lex, &model, k, MiningStrategy::MostBiased, 0).unwrap();
        let ids: Vec<String> = mined.iter().map(|m| m.sample.id.clone()).collect();
        assert_eq!(ids, exhaustive_top(&corpus, &exp, k), "k={k}");
        assert_eq!(ids[..previous.len()], previous[..]);
        for (rank, m) in mined.iter().enumerate() {
            assert_eq!(m.rank, rank);
            assert!((m.score - exp.samples[&m.sample.id].0).abs() < TOL);
        }
        previous = ids;
    }
}

#[test]
fn ties_break_by_ascending_id() {
    let lex = GenderLexicon::default_list();
    let corpus: Vec<Sample> = ["d", "b", "c", "a"]
        .iter()
        .map(|id| Sample::new(*id, "he smiled"))
        .collect();
    let flat = FnScorer::new("flat", |_: &ScorerQuery, c: &str| if c == "he" { 0.7 } else { 0.2 });
    let mined = mine_samples(&corpus, &lex, &flat, 3, MiningStrategy::MostBiased, 0).unwrap();
    let ids: Vec<&str> = mined.iter().map(|m| m.sample.id.as_str()).collect();
    assert_eq!(ids, ["a", "b", "c"]);
}

#[test]
fn random_mining_is_seeded_and_prefix_stable() {
    let lex = GenderLexicon::default_list();
    let corpus = load("skewed_100.jsonl");
    let model = fit_toy_scorer(&corpus, 1.0);
    let draw = |k, seed| -> Vec<String> {
        mine_samples(&corpus, &lex, &model, k, MiningStrategy::Random, seed)
            .unwrap()
            .into_iter()
            .map(|m| m.sample.id)
            .collect()
    };
    let ten = draw(10, 42);
    assert_eq!(ten, draw(10, 42));
    assert_ne!(ten, draw(10, 43));
    assert_eq!(draw(3, 42), ten[..3]);
    let mut unique = ten.clone();
    unique.sort();
    unique.dedup();
    assert_eq!(unique.len(), 10);
}

#[test]
fn too_few_samples_with_hits() {
    let lex = GenderLexicon::default_list();
    let corpus = load("probe_mixed.jsonl");
    let model = fit_toy_scorer(&corpus, 1.0);
    let with_hits = probe(&corpus, &lex, &model)
        .unwrap()
        .sample_scores
        .iter()
        .filter(|s| s.n_hits > 0)
        .count();
    for strategy in [MiningStrategy::MostBiased, MiningStrategy::Random] {
        let err = mine_samples(&corpus, &lex, &model, with_hits + 1, strategy, 0).unwrap_err();
        assert!(matches!(err, Error::InsufficientSamples { k, available } if k == with_hits + 1 && available == with_hits));
        assert_eq!(mine_samples(&corpus, &lex, &model, with_hits, strategy, 0).unwrap().len(), with_hits);
    }
}
