#![allow(dead_code)]

use std::collections::{BTreeSet, HashMap};
use std::path::PathBuf;

use debias_forge::corpus::read_corpus;
use debias_forge::Sample;

/// The core crate's directory, also when this module is included from the CLI tests.
pub fn core_dir() -> PathBuf {
    let here = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    if here.join("data/default_lexicon.tsv").is_file() {
        here
    } else {
        here.join("../core")
    }
}

pub fn fixture(name: &str) -> PathBuf {
    core_dir().join("tests/fixtures").join(name)
}

pub fn load(name: &str) -> Vec<Sample> {
    read_corpus(&fixture(name)).unwrap()
}

/// Lowercased tokens: alphanumeric runs, every other visible char alone.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut run = String::new();
    for c in text.chars() {
        if c.is_alphanumeric() {
            run.push(c);
            continue;
        }
        if !run.is_empty() {
            out.push(std::mem::take(&mut run).to_lowercase());
        }
        if !c.is_whitespace() {
            out.push(c.to_lowercase().collect());
        }
    }
    if !run.is_empty() {
        out.push(run.to_lowercase());
    }
    out
}

#[derive(Debug, Clone)]
pub struct OraclePair {
    pub male: String,
    pub female: String,
}

/// Form -> (pair index, is_female), read straight from the bundled TSV.
pub struct OracleLexicon {
    pub pairs: Vec<OraclePair>,
    pub forms: HashMap<String, (usize, bool)>,
}

impl OracleLexicon {
    pub fn bundled() -> OracleLexicon {
        let path = core_dir().join("data/default_lexicon.tsv");
        let text = std::fs::read_to_string(path).unwrap();
        let mut pairs = Vec::new();
        let mut forms = HashMap::new();
        for line in text.lines() {
            if line.starts_with('#') || line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            forms.insert(cols[0].to_string(), (pairs.len(), false));
            forms.insert(cols[1].to_string(), (pairs.len(), true));
            pairs.push(OraclePair {
                male: cols[0].into(),
                female: cols[1].into(),
            });
        }
        OracleLexicon { pairs, forms }
    }
}

/// Brute-force add-alpha neighbor estimator: every count is a scan over the
/// raw sentences.
pub struct CountOracle {
    pub sentences: Vec<Vec<String>>,
    pub alpha: f64,
}

impl CountOracle {
    pub fn fit(texts: impl IntoIterator<Item = impl AsRef<str>>, alpha: f64) -> CountOracle {
        CountOracle {
            sentences: texts.into_iter().map(|t| tokenize(t.as_ref())).collect(),
            alpha,
        }
    }

    fn side(&self, ctx: &str, cand: &str, cands: &[String], left: bool) -> f64 {
        let (mut hit, mut total) = (0.0, 0.0);
        let mut vocab = BTreeSet::new();
        for s in &self.sentences {
            for i in 0..s.len() {
                let neighbor = if left {
                    i.checked_sub(1).map(|j| &s[j])
                } else {
                    s.get(i + 1)
                };
                let Some(n) = neighbor else { continue };
                vocab.insert(s[i].clone());
                if n == ctx {
                    total += 1.0;
                    if s[i] == cand {
                        hit += 1.0;
                    }
                }
            }
        }
        vocab.extend(cands.iter().cloned());
        (hit + self.alpha) / (total + self.alpha * vocab.len() as f64)
    }

    pub fn conf(&self, tokens: &[String], mask: usize, cand: &str, cands: &[String]) -> f64 {
        let mut est = Vec::new();
        if mask > 0 {
            est.push(self.side(&tokens[mask - 1], cand, cands, true));
        }
        if mask + 1 < tokens.len() {
            est.push(self.side(&tokens[mask + 1], cand, cands, false));
        }
        if est.is_empty() {
            let all: Vec<&String> = self.sentences.iter().flatten().collect();
            let mut vocab: BTreeSet<&String> = all.iter().copied().collect();
            vocab.extend(cands.iter());
            let n = all.iter().filter(|w| w.as_str() == cand).count() as f64;
            return (n + self.alpha) / (all.len() as f64 + self.alpha * vocab.len() as f64);
        }
        est.iter().sum::<f64>() / est.len() as f64
    }
}

pub fn words(ws: &[&str]) -> Vec<String> {
    ws.iter().map(|s| s.to_string()).collect()
}
