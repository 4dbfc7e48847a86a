//! Confidence-difference bias metrics and biased-sample mining.
//!
//! At every gender hit the scorer is asked for the confidence of the pair's
//! female form and male form at that (masked) position; `f_female - f_male`
//! is the hit's signed difference. The corpus metric is the absolute value of
//! the signed sum over all hits; per-sample scores and per-pair statistics use
//! absolute per-hit differences. Accumulation runs in sample-then-token order.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lexicon::{GenderLexicon, PairId};
use crate::scorer::{Scorer, ScorerQuery};
use crate::textproc::{Analyzed, Sample};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HitDiff {
    pub token_index: usize,
    pub pair_id: PairId,
    pub f_female: f64,
    pub f_male: f64,
}

impl HitDiff {
    pub fn signed(&self) -> f64 {
        self.f_female - self.f_male
    }

    pub fn abs(&self) -> f64 {
        self.signed().abs()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairStat {
    pub pair_id: PairId,
    pub male_form: String,
    pub female_form: String,
    pub mean_abs_diff: f64,
    pub std_abs_diff: f64,
    pub n_positions: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleBiasScore {
    pub sample_id: String,
    pub score: f64,
    pub n_hits: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasReport {
    pub total_confidence_difference: f64,
    /// The signed sum before taking the absolute value (positive = female-leaning).
    pub signed_total: f64,
    pub n_hits: usize,
    pub pair_stats: Vec<PairStat>,
    /// All samples, highest score first, ties by ascending id.
    pub sample_scores: Vec<SampleBiasScore>,
    pub corpus_fingerprint: String,
    pub scorer: String,
    pub lexicon_hash: String,
}

/// Registers every lexicon form with the scorer.
pub fn prepare_scorer(scorer: &dyn Scorer, lexicon: &GenderLexicon) -> Result<()> {
    let words: Vec<String> = lexicon.forms().map(str::to_string).collect();
    scorer.extend_vocabulary(&words)
}

/// Signed differences for every hit of one analyzed sample; one batch call.
pub fn analyzed_hit_diffs(
    analyzed: &Analyzed<'_>,
    lexicon: &GenderLexicon,
    scorer: &dyn Scorer,
) -> Result<Vec<HitDiff>> {
    if analyzed.hits.is_empty() {
        return Ok(Vec::new());
    }
    let norms = analyzed.norms();
    let queries: Vec<ScorerQuery> = analyzed
        .hits
        .iter()
        .map(|hit| {
            let pair = &lexicon.pairs()[hit.pair_id];
            ScorerQuery::masked(
                norms.iter().cloned(),
                hit.token_index,
                [pair.female_form.clone(), pair.male_form.clone()],
            )
        })
        .collect();
    let scores = scorer.score_batch(&queries)?;
    Ok(analyzed
        .hits
        .iter()
        .zip(scores)
        .map(|(hit, s)| {
            let pair = &lexicon.pairs()[hit.pair_id];
            HitDiff {
                token_index: hit.token_index,
                pair_id: hit.pair_id,
                f_female: s.get(&pair.female_form).expect("checked candidate"),
                f_male: s.get(&pair.male_form).expect("checked candidate"),
            }
        })
        .collect())
}

pub fn sample_hit_diffs(
    sample: &Sample,
    lexicon: &GenderLexicon,
    scorer: &dyn Scorer,
) -> Result<Vec<HitDiff>> {
    analyzed_hit_diffs(&Analyzed::new(sample, lexicon), lexicon, scorer)
}

/// Per-sample hit differences, in corpus order.
pub fn corpus_hit_diffs(
    corpus: &[Sample],
    lexicon: &GenderLexicon,
    scorer: &dyn Scorer,
) -> Result<Vec<Vec<HitDiff>>> {
    corpus
        .iter()
        .map(|s| sample_hit_diffs(s, lexicon, scorer))
        .collect()
}

fn signed_sum(diffs: &[Vec<HitDiff>]) -> f64 {
    diffs.iter().flatten().fold(0.0, |acc, d| acc + d.signed())
}

fn score_of(sample: &Sample, diffs: &[HitDiff]) -> SampleBiasScore {
    SampleBiasScore {
        sample_id: sample.id.clone(),
        score: diffs.iter().fold(0.0, |acc, d| acc + d.abs()),
        n_hits: diffs.len(),
    }
}

fn stats_from(diffs: &[Vec<HitDiff>], lexicon: &GenderLexicon) -> Vec<PairStat> {
    let mut by_pair: BTreeMap<PairId, Vec<f64>> = BTreeMap::new();
    for d in diffs.iter().flatten() {
        by_pair.entry(d.pair_id).or_default().push(d.abs());
    }
    let mut stats: Vec<PairStat> = by_pair
        .into_iter()
        .map(|(pair_id, values)| {
            let n = values.len() as f64;
            let mean = values.iter().sum::<f64>() / n;
            let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            let pair = &lexicon.pairs()[pair_id];
            PairStat {
                pair_id,
                male_form: pair.male_form.clone(),
                female_form: pair.female_form.clone(),
                mean_abs_diff: mean,
                std_abs_diff: var.sqrt(),
                n_positions: values.len(),
            }
        })
        .collect();
    stats.sort_by(|a, b| {
        b.mean_abs_diff
            .total_cmp(&a.mean_abs_diff)
            .then(a.pair_id.cmp(&b.pair_id))
    });
    stats
}

/// Highest score first; equal scores by ascending sample id.
pub fn rank_order(a: &SampleBiasScore, b: &SampleBiasScore) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then_with(|| a.sample_id.cmp(&b.sample_id))
}

/// `|Σ (f_female - f_male)|` over every gender hit in the corpus.
pub fn total_confidence_difference(
    corpus: &[Sample],
    lexicon: &GenderLexicon,
    scorer: &dyn Scorer,
) -> Result<f64> {
    Ok(signed_sum(&corpus_hit_diffs(corpus, lexicon, scorer)?).abs())
}

/// Mean and population standard deviation of `|f_female - f_male|` per pair,
/// largest mean first. Pairs without hits are omitted.
pub fn pair_stats(
    corpus: &[Sample],
    lexicon: &GenderLexicon,
    scorer: &dyn Scorer,
) -> Result<Vec<PairStat>> {
    Ok(stats_from(&corpus_hit_diffs(corpus, lexicon, scorer)?, lexicon))
}

/// Sum of absolute per-hit differences within one sample.
pub fn sample_bias_score(
    sample: &Sample,
    lexicon: &GenderLexicon,
    scorer: &dyn Scorer,
) -> Result<SampleBiasScore> {
    Ok(score_of(sample, &sample_hit_diffs(sample, lexicon, scorer)?))
}

/// Every metric in one pass over the corpus.
pub fn probe(corpus: &[Sample], lexicon: &GenderLexicon, scorer: &dyn Scorer) -> Result<BiasReport> {
    let diffs = corpus_hit_diffs(corpus, lexicon, scorer)?;
    let signed_total = signed_sum(&diffs);
    let mut sample_scores: Vec<SampleBiasScore> = corpus
        .iter()
        .zip(&diffs)
        .map(|(s, d)| score_of(s, d))
        .collect();
    sample_scores.sort_by(rank_order);
    Ok(BiasReport {
        total_confidence_difference: signed_total.abs(),
        signed_total,
        n_hits: diffs.iter().map(Vec::len).sum(),
        pair_stats: stats_from(&diffs, lexicon),
        sample_scores,
        corpus_fingerprint: crate::corpus::fingerprint(corpus),
        scorer: scorer.identity(),
        lexicon_hash: lexicon.hash(),
    })
}

/// Pair statistics as CSV (`pair_id,male_form,female_form,mean_abs_diff,std_abs_diff,n_positions`).
pub fn pair_stats_csv(stats: &[PairStat]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for s in stats {
        w.serialize(s).map_err(|e| Error::Io(e.into()))?;
    }
    if stats.is_empty() {
        w.write_record([
            "pair_id",
            "male_form",
            "female_form",
            "mean_abs_diff",
            "std_abs_diff",
            "n_positions",
        ])
        .map_err(|e| Error::Io(e.into()))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MiningStrategy {
    MostBiased,
    Random,
}

impl fmt::Display for MiningStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MiningStrategy::MostBiased => "most-biased",
            MiningStrategy::Random => "random",
        })
    }
}

impl FromStr for MiningStrategy {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "most-biased" | "most-biased-first" | "biased" => Ok(MiningStrategy::MostBiased),
            "random" => Ok(MiningStrategy::Random),
            other => Err(format!("unknown mining strategy `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinedSample {
    #[serde(flatten)]
    pub sample: Sample,
    pub rank: usize,
    pub score: f64,
    pub n_hits: usize,
}

/// Selection from precomputed scores (`scores[i]` belongs to `corpus[i]`).
/// Samples without hits are never selected.
pub fn select_samples(
    corpus: &[Sample],
    scores: &[SampleBiasScore],
    k: usize,
    strategy: MiningStrategy,
    seed: u64,
) -> Result<Vec<MinedSample>> {
    assert_eq!(corpus.len(), scores.len());
    let mut eligible: Vec<usize> = (0..corpus.len()).filter(|&i| scores[i].n_hits > 0).collect();
    if k > eligible.len() || corpus.is_empty() {
        return Err(Error::InsufficientSamples {
            k,
            available: eligible.len(),
        });
    }
    match strategy {
        MiningStrategy::MostBiased => {
            eligible.sort_by(|&a, &b| rank_order(&scores[a], &scores[b]));
        }
        MiningStrategy::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for i in 0..k {
                let j = rng.random_range(i..eligible.len());
                eligible.swap(i, j);
            }
        }
    }
    Ok(eligible
        .into_iter()
        .take(k)
        .enumerate()
        .map(|(rank, i)| MinedSample {
            sample: corpus[i].clone(),
            rank,
            score: scores[i].score,
            n_hits: scores[i].n_hits,
        })
        .collect())
}

/// Picks `k` samples for debiasing: the `k` highest-scoring ones, or a
/// seeded uniform draw without replacement among samples with hits.
pub fn mine_samples(
    corpus: &[Sample],
    lexicon: &GenderLexicon,
    scorer: &dyn Scorer,
    k: usize,
    strategy: MiningStrategy,
    seed: u64,
) -> Result<Vec<MinedSample>> {
    let scores: Vec<SampleBiasScore> = corpus
        .iter()
        .map(|s| sample_bias_score(s, lexicon, scorer))
        .collect::<Result<_>>()?;
    select_samples(corpus, &scores, k, strategy, seed)
}
