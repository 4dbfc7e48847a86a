use std::io::{BufReader, Write};
use std::net::TcpListener;
use std::path::PathBuf;

use anyhow::Result;
use clap::Args;
use debias_forge::bench::{
    benchmark_vocabulary, eval_crows, eval_stereoset, load_crows, load_stereoset, BenchResult, CrowsScores,
    StereoSetInstance, StereoSetScores,
};
use debias_forge::corpus::fingerprint;
use debias_forge::finetune::{debias_toy_scorer, emit_finetune_dataset, TrainConfig};
use debias_forge::intervene::{intervene_sample, IntervenedRecord, InterventionSpec};
use debias_forge::probe::{mine_samples, pair_stats_csv, prepare_scorer, probe, BiasReport, MinedSample};
use debias_forge::scorer::fit_toy_scorer;
use debias_forge::scorer::protocol::serve;
use debias_forge::textproc::{affected_word_stats, AffectedWordStats};
use debias_forge::{GenderLexicon, Sample, Scorer};
use serde::Serialize;

use crate::config::{config_error, read_samples, require_file, ScorerSpec, Settings};
use crate::output::{sidecar_name, Meta, OutDir, WithMeta};

const HIST_BIN: f64 = 0.1;

fn meta(command: &'static str, s: &Settings, lex: &GenderLexicon, scorer: &str, corpus: Option<&[Sample]>) -> Meta {
    Meta {
        tool: "debias-forge",
        version: debias_forge::VERSION,
        command,
        seed: s.seed,
        lexicon_hash: lex.hash(),
        scorer: scorer.to_string(),
        scorer_spec: s.scorer_spec.clone(),
        corpus_fingerprint: corpus.map(fingerprint),
    }
}

fn scorer_for(s: &Settings, lex: &GenderLexicon, fallback: Option<&[Sample]>) -> Result<Box<dyn Scorer>> {
    let scorer = s.scorer_spec()?.build(fallback)?;
    prepare_scorer(scorer.as_ref(), lex)?;
    Ok(scorer)
}

#[derive(Serialize)]
struct ProbeBody<'a> {
    report: &'a BiasReport,
    affected_words: &'a AffectedWordStats,
}

#[derive(Serialize)]
struct SampleRow<'a> {
    rank: usize,
    sample_id: &'a str,
    score: f64,
    n_hits: usize,
}

#[derive(Serialize)]
struct WordRow<'a> {
    form: &'a str,
    pair_id: Option<usize>,
    count: usize,
}

#[derive(Serialize)]
struct BinRow {
    bin_start: f64,
    bin_end: f64,
    count: usize,
}

fn histogram(scores: &[f64]) -> Vec<BinRow> {
    let index = |x: f64| (x / HIST_BIN).floor() as usize;
    let n_bins = scores.iter().map(|&x| index(x) + 1).max().unwrap_or(0);
    let mut counts = vec![0; n_bins];
    for &x in scores {
        counts[index(x)] += 1;
    }
    counts
        .into_iter()
        .enumerate()
        .map(|(i, count)| BinRow {
            bin_start: i as f64 / 10.0,
            bin_end: (i + 1) as f64 / 10.0,
            count,
        })
        .collect()
}

pub fn cmd_probe(s: &Settings) -> Result<()> {
    let lex = s.lexicon()?;
    let corpus = s.corpus()?;
    let scorer = scorer_for(s, &lex, Some(&corpus))?;
    let report = probe(&corpus, &lex, scorer.as_ref())?;
    let words = affected_word_stats(&corpus, &lex);
    let meta = meta("probe", s, &lex, &report.scorer, Some(&corpus));
    let out = OutDir::create(&s.out_dir)?;
    out.json(
        "bias_report.json",
        &WithMeta {
            meta: &meta,
            body: ProbeBody {
                report: &report,
                affected_words: &words,
            },
        },
    )?;
    out.text("pair_stats.csv", &pair_stats_csv(&report.pair_stats)?)?;
    let rows: Vec<SampleRow> = report
        .sample_scores
        .iter()
        .enumerate()
        .map(|(rank, r)| SampleRow {
            rank,
            sample_id: &r.sample_id,
            score: r.score,
            n_hits: r.n_hits,
        })
        .collect();
    out.csv("sample_scores.csv", &["rank", "sample_id", "score", "n_hits"], &rows)?;
    let mut freq: Vec<WordRow> = words
        .per_form_counts
        .iter()
        .map(|(form, &count)| WordRow {
            form,
            pair_id: lex.lookup(form).map(|f| f.pair_id),
            count,
        })
        .collect();
    freq.sort_by(|a, b| b.count.cmp(&a.count).then(a.form.cmp(b.form)));
    out.csv("word_freq.csv", &["form", "pair_id", "count"], &freq)?;
    let scores: Vec<f64> = report.sample_scores.iter().map(|r| r.score).collect();
    out.csv("score_histogram.csv", &["bin_start", "bin_end", "count"], &histogram(&scores))?;
    println!(
        "total_confidence_difference {} over {} hits in {} samples",
        report.total_confidence_difference,
        report.n_hits,
        corpus.len()
    );
    Ok(())
}

#[derive(Serialize)]
struct MineBody {
    k: usize,
    strategy: String,
    n_corpus: usize,
}

fn mine(s: &Settings, lex: &GenderLexicon, corpus: &[Sample]) -> Result<(Vec<MinedSample>, String)> {
    let scorer = scorer_for(s, lex, Some(corpus))?;
    let mined = mine_samples(corpus, lex, scorer.as_ref(), s.k, s.strategy, s.seed)?;
    Ok((mined, scorer.identity()))
}

fn write_mined(out: &OutDir, meta: &Meta, s: &Settings, mined: &[MinedSample], n_corpus: usize) -> Result<()> {
    out.jsonl("mined.jsonl", mined)?;
    out.json(
        &sidecar_name("mined.jsonl"),
        &WithMeta {
            meta,
            body: MineBody {
                k: s.k,
                strategy: s.strategy.to_string(),
                n_corpus,
            },
        },
    )?;
    Ok(())
}

pub fn cmd_mine(s: &Settings) -> Result<()> {
    let lex = s.lexicon()?;
    let corpus = s.corpus()?;
    let (mined, identity) = mine(s, &lex, &corpus)?;
    let meta = meta("mine", s, &lex, &identity, Some(&corpus));
    let out = OutDir::create(&s.out_dir)?;
    write_mined(&out, &meta, s, &mined, corpus.len())?;
    println!("mined {} of {} samples ({})", mined.len(), corpus.len(), s.strategy);
    Ok(())
}

#[derive(Debug, Clone, Default, Args)]
pub struct InputArgs {
    /// Samples to transform (a corpus or a mined.jsonl); the corpus when absent
    #[arg(long)]
    pub input: Option<PathBuf>,
}

fn input_samples(s: &Settings, input: &InputArgs) -> Result<Vec<Sample>> {
    match &input.input {
        Some(p) => read_samples(p, "input"),
        None => s.corpus(),
    }
}

#[derive(Serialize)]
struct InterveneBody<'a> {
    spec: &'a InterventionSpec,
    n_samples: usize,
    n_edits: usize,
}

pub fn cmd_intervene(s: &Settings, input: &InputArgs) -> Result<()> {
    let lex = s.lexicon()?;
    let samples = input_samples(s, input)?;
    let records = samples
        .iter()
        .map(|sample| {
            let (out, edits) = intervene_sample(sample, &lex, &s.intervention)?;
            Ok(IntervenedRecord {
                sample: sample.clone(),
                intervened_text: out.text,
                edits,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let n_edits = records.iter().map(|r| r.edits.len()).sum();
    let meta = meta("intervene", s, &lex, "none", Some(&samples));
    let out = OutDir::create(&s.out_dir)?;
    out.jsonl("intervened.jsonl", &records)?;
    out.json(
        &sidecar_name("intervened.jsonl"),
        &WithMeta {
            meta: &meta,
            body: InterveneBody {
                spec: &s.intervention,
                n_samples: records.len(),
                n_edits,
            },
        },
    )?;
    println!("intervened {} samples, {n_edits} edits", records.len());
    Ok(())
}

#[derive(Debug, Clone, Default, Args)]
pub struct EmitArgs {
    /// Use this mined.jsonl instead of mining the corpus
    #[arg(long)]
    pub mined: Option<PathBuf>,
}

#[derive(Serialize)]
struct EmitBody<'a> {
    spec: &'a InterventionSpec,
    n_examples: usize,
    warnings: &'a [debias_forge::finetune::EmitWarning],
}

pub fn cmd_emit_finetune(s: &Settings, args: &EmitArgs) -> Result<()> {
    let lex = s.lexicon()?;
    let out = OutDir::create(&s.out_dir)?;
    let (samples, meta) = match &args.mined {
        Some(p) => {
            let samples = read_samples(p, "mined")?;
            let meta = meta("emit-finetune", s, &lex, "none", Some(&samples));
            (samples, meta)
        }
        None => {
            let corpus = s.corpus()?;
            let (mined, identity) = mine(s, &lex, &corpus)?;
            let meta = meta("emit-finetune", s, &lex, &identity, Some(&corpus));
            write_mined(&out, &meta, s, &mined, corpus.len())?;
            (mined.into_iter().map(|m| m.sample).collect(), meta)
        }
    };
    let (examples, warnings) = emit_finetune_dataset(&samples, &lex, &s.intervention)?;
    out.jsonl("finetune.jsonl", &examples)?;
    out.json(
        &sidecar_name("finetune.jsonl"),
        &WithMeta {
            meta: &meta,
            body: EmitBody {
                spec: &s.intervention,
                n_examples: examples.len(),
                warnings: &warnings,
            },
        },
    )?;
    out.json(
        "train_config.json",
        &WithMeta {
            meta: &meta,
            body: TrainConfig::with_seed(s.seed),
        },
    )?;
    for w in &warnings {
        eprintln!("warning: sample {}: {}", w.sample_id, w.reason);
    }
    println!("emitted {} examples", examples.len());
    Ok(())
}

#[derive(Debug, Clone, Default, Args)]
pub struct EvalArgs {
    /// StereoSet JSON (upstream layout)
    #[arg(long)]
    pub stereoset: Option<PathBuf>,
    /// CrowS-Pairs CSV (upstream layout)
    #[arg(long)]
    pub crows: Option<PathBuf>,
    /// Bias type to keep; `all` keeps everything [default: gender]
    #[arg(long)]
    pub domain: Option<String>,
}

fn domain(s: &Settings, args: &EvalArgs) -> Option<String> {
    let d = args.domain.clone().or(s.file.domain.clone()).unwrap_or_else(|| "gender".into());
    (!d.eq_ignore_ascii_case("all")).then_some(d)
}

fn open(p: &PathBuf, what: &str) -> Result<BufReader<std::fs::File>> {
    require_file(p, what)?;
    Ok(BufReader::new(std::fs::File::open(p)?))
}

fn stereoset_instances(s: &Settings, args: &EvalArgs) -> Result<Option<Vec<StereoSetInstance>>> {
    args.stereoset
        .clone()
        .or(s.file.stereoset.clone())
        .map(|p| Ok(load_stereoset(open(&p, "stereoset")?, domain(s, args).as_deref())?))
        .transpose()
}

#[derive(Serialize)]
struct EvalBody {
    result: BenchResult,
    icat_consistent: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    stereoset: Option<StereoSetScores>,
    #[serde(skip_serializing_if = "Option::is_none")]
    crows: Option<CrowsScores>,
}

pub fn cmd_eval(s: &Settings, args: &EvalArgs) -> Result<()> {
    let lex = s.lexicon()?;
    let stereoset = stereoset_instances(s, args)?;
    let crows = args
        .crows
        .clone()
        .or(s.file.crows.clone())
        .map(|p| Ok::<_, anyhow::Error>(load_crows(open(&p, "crows")?, domain(s, args).as_deref())?))
        .transpose()?;
    if stereoset.is_none() && crows.is_none() {
        return Err(config_error("eval needs --stereoset and/or --crows"));
    }
    let corpus = s.corpus_path.as_ref().map(|_| s.corpus()).transpose()?;
    let scorer = s.scorer_spec()?.build(corpus.as_deref())?;
    scorer.extend_vocabulary(&benchmark_vocabulary(
        stereoset.as_deref().unwrap_or_default(),
        crows.as_deref().unwrap_or_default(),
    ))?;
    let ss = stereoset.map(|i| eval_stereoset(&i, scorer.as_ref())).transpose()?;
    let cp = crows.map(|p| eval_crows(&p, scorer.as_ref())).transpose()?;
    let mut result = BenchResult::default();
    if let Some(r) = &ss {
        result = result.with_stereoset(r);
    }
    if let Some(r) = &cp {
        result = result.with_crows(r);
    }
    let meta = meta("eval", s, &lex, &scorer.identity(), corpus.as_deref());
    let out = OutDir::create(&s.out_dir)?;
    let table = result.to_table();
    out.text("bench_result.txt", &table)?;
    out.json(
        "bench_result.json",
        &WithMeta {
            meta: &meta,
            body: EvalBody {
                icat_consistent: result.icat_consistent(),
                result,
                stereoset: ss,
                crows: cp,
            },
        },
    )?;
    print!("{table}");
    Ok(())
}

#[derive(Debug, Clone, Default, Args)]
pub struct DebiasArgs {
    /// Event weight of each intervened example in the refit [default: 30]
    #[arg(long)]
    pub weight: Option<f64>,
    /// Runs per sample count; run r uses seed + r
    #[arg(long)]
    pub repeat: Option<u32>,
    /// Comma-separated sample counts to sweep instead of --k
    #[arg(long, value_delimiter = ',')]
    pub sizes: Vec<usize>,
    /// Also report StereoSet scores before and after each refit
    #[arg(long)]
    pub stereoset: Option<PathBuf>,
    /// Bias type kept from --stereoset; `all` keeps everything [default: gender]
    #[arg(long)]
    pub domain: Option<String>,
}

#[derive(Serialize)]
struct RunRow {
    k: usize,
    run: u32,
    seed: u64,
    tcd_before: f64,
    tcd_after: f64,
    relative_change: f64,
    ss_before: Option<f64>,
    ss_after: Option<f64>,
    icat_after: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
struct Aggregate {
    k: usize,
    runs: usize,
    tcd_before: f64,
    tcd_after_mean: f64,
    tcd_after_std: f64,
    relative_change_mean: f64,
    relative_change_std: f64,
    ss_after_mean: Option<f64>,
    ss_after_std: Option<f64>,
}

/// Mean and population standard deviation.
fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[derive(Serialize)]
struct DebiasBody<'a> {
    weight: f64,
    strategy: String,
    spec: &'a InterventionSpec,
    aggregates: Vec<Aggregate>,
}

pub fn cmd_debias(s: &Settings, args: &DebiasArgs) -> Result<()> {
    let lex = s.lexicon()?;
    let corpus = s.corpus()?;
    let alpha = match s.scorer_spec()? {
        ScorerSpec::Builtin { alpha, fit: None } => alpha,
        _ => {
            return Err(config_error(
                "debias refits the builtin scorer on the corpus; use --scorer builtin[:alpha=A] without fit=",
            ))
        }
    };
    let weight = args.weight.or(s.file.weight).unwrap_or(30.0);
    if !(weight >= 0.0 && weight.is_finite()) {
        return Err(config_error(format!("weight must be a non-negative number, got {weight}")));
    }
    let repeat = args.repeat.or(s.file.repeat).unwrap_or(1).max(1);
    let sizes = if args.sizes.is_empty() { vec![s.k] } else { args.sizes.clone() };
    let eval_args = EvalArgs {
        stereoset: args.stereoset.clone(),
        crows: None,
        domain: args.domain.clone(),
    };
    let stereoset = stereoset_instances(s, &eval_args)?;
    let base = fit_toy_scorer(&corpus, alpha);
    let ss_before = stereoset.as_ref().map(|i| eval_stereoset(i, &base)).transpose()?;

    let mut rows = Vec::new();
    let mut aggregates = Vec::new();
    for &k in &sizes {
        let mut after = Vec::new();
        let mut change = Vec::new();
        let mut ss_after = Vec::new();
        let mut tcd_before = 0.0;
        for run in 0..repeat {
            let seed = s.seed.wrapping_add(u64::from(run));
            let mined: Vec<Sample> = mine_samples(&corpus, &lex, &base, k, s.strategy, seed)?
                .into_iter()
                .map(|m| m.sample)
                .collect();
            let spec = InterventionSpec {
                seed,
                ..s.intervention.clone()
            };
            let outcome = debias_toy_scorer(&corpus, &mined, &lex, &spec, weight, alpha)?;
            let ss = stereoset.as_ref().map(|i| eval_stereoset(i, &outcome.model)).transpose()?;
            tcd_before = outcome.before.total_confidence_difference;
            let tcd_after = outcome.after.total_confidence_difference;
            let rel = if tcd_before > 0.0 { (tcd_after - tcd_before) / tcd_before } else { 0.0 };
            after.push(tcd_after);
            change.push(rel);
            if let Some(r) = &ss {
                ss_after.push(r.ss);
            }
            rows.push(RunRow {
                k,
                run,
                seed,
                tcd_before,
                tcd_after,
                relative_change: rel,
                ss_before: ss_before.map(|r| r.ss),
                ss_after: ss.map(|r| r.ss),
                icat_after: ss.map(|r| r.icat),
            });
        }
        let (am, asd) = mean_std(&after);
        let (cm, csd) = mean_std(&change);
        let ss_stats = (!ss_after.is_empty()).then(|| mean_std(&ss_after));
        aggregates.push(Aggregate {
            k,
            runs: repeat as usize,
            tcd_before,
            tcd_after_mean: am,
            tcd_after_std: asd,
            relative_change_mean: cm,
            relative_change_std: csd,
            ss_after_mean: ss_stats.map(|p| p.0),
            ss_after_std: ss_stats.map(|p| p.1),
        });
    }

    let meta = meta("debias", s, &lex, &base.identity(), Some(&corpus));
    let out = OutDir::create(&s.out_dir)?;
    out.csv(
        "debias_runs.csv",
        &[
            "k",
            "run",
            "seed",
            "tcd_before",
            "tcd_after",
            "relative_change",
            "ss_before",
            "ss_after",
            "icat_after",
        ],
        &rows,
    )?;
    out.json(
        "debias_summary.json",
        &WithMeta {
            meta: &meta,
            body: DebiasBody {
                weight,
                strategy: s.strategy.to_string(),
                spec: &s.intervention,
                aggregates: aggregates.clone(),
            },
        },
    )?;
    for a in &aggregates {
        println!(
            "k={} runs={} tcd {:.6} -> {:.6} ± {:.6} ({:+.1}%)",
            a.k,
            a.runs,
            a.tcd_before,
            a.tcd_after_mean,
            a.tcd_after_std,
            100.0 * a.relative_change_mean
        );
    }
    Ok(())
}

#[derive(Debug, Clone, Args)]
pub struct ServeArgs {
    /// Corpus the count model is fit on
    #[arg(long)]
    pub fit: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,
    /// Serve one TCP connection on this port instead of stdin/stdout
    #[arg(long)]
    pub port: Option<u16>,
}

pub fn cmd_serve_builtin(args: &ServeArgs) -> Result<()> {
    if !(args.alpha > 0.0 && args.alpha.is_finite()) {
        return Err(config_error("alpha must be positive"));
    }
    let model = fit_toy_scorer(&read_samples(&args.fit, "fit corpus")?, args.alpha);
    match args.port {
        None => {
            let stdin = std::io::stdin();
            let stdout = std::io::stdout();
            serve(&model, stdin.lock(), stdout.lock())?;
        }
        Some(port) => {
            let listener = TcpListener::bind(("127.0.0.1", port))?;
            eprintln!("listening on {}", listener.local_addr()?);
            std::io::stderr().flush()?;
            let (stream, _) = listener.accept()?;
            serve(&model, BufReader::new(stream.try_clone()?), stream)?;
        }
    }
    Ok(())
}
