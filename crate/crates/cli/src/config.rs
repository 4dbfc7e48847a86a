use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::Result;
use clap::Args;
use debias_forge::intervene::{InterventionSpec, MaskMethod, DEFAULT_NAIVE_WORD};
use debias_forge::lexicon::{GenderLexicon, LexiconFormat};
use debias_forge::probe::MiningStrategy;
use debias_forge::scorer::protocol::ProtocolScorer;
use debias_forge::scorer::{fit_toy_scorer, ToyScorerModel};
use debias_forge::{Sample, Scorer};
use serde::Deserialize;

pub const SCORER_ENV: &str = "DEBIAS_FORGE_SCORER";

/// Bad flags, unreadable inputs and other problems the operator must fix.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

pub fn config_error(msg: impl Into<String>) -> anyhow::Error {
    ConfigError(msg.into()).into()
}

/// Contents of a `--config` JSON file. Every key is optional; flags win over
/// the file. Relative paths are resolved against the working directory.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub lexicon: Option<PathBuf>,
    pub corpus: Option<PathBuf>,
    pub scorer: Option<String>,
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub k: Option<usize>,
    pub strategy: Option<String>,
    pub method_name: Option<String>,
    pub method_nonname: Option<String>,
    pub naive_word: Option<String>,
    pub weight: Option<f64>,
    pub repeat: Option<u32>,
    pub stereoset: Option<PathBuf>,
    pub crows: Option<PathBuf>,
    pub domain: Option<String>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_error(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| config_error(format!("invalid config {}: {e}", path.display())))
    }
}

/// Flags shared by every pipeline command.
#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// JSON run configuration
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// builtin[:alpha=A,fit=PATH] | external:tcp:HOST:PORT | external:stdio:COMMAND
    #[arg(long)]
    pub scorer: Option<String>,
    /// Lexicon file (.tsv or .json); the bundled list when absent
    #[arg(long)]
    pub lexicon: Option<PathBuf>,
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Output directory
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Flags that shape mining and intervention.
#[derive(Debug, Clone, Default, Args)]
pub struct PipelineArgs {
    #[arg(long)]
    pub k: Option<usize>,
    /// most-biased | random
    #[arg(long)]
    pub strategy: Option<String>,
    /// Method for given names
    #[arg(long)]
    pub method_name: Option<String>,
    /// Method for all other gender words
    #[arg(long)]
    pub method_nonname: Option<String>,
    #[arg(long)]
    pub naive_word: Option<String>,
}

/// Flags and config merged.
#[derive(Debug, Clone)]
pub struct Settings {
    pub file: RunConfig,
    pub seed: u64,
    pub scorer_spec: String,
    pub lexicon_path: Option<PathBuf>,
    pub corpus_path: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub k: usize,
    pub strategy: MiningStrategy,
    pub intervention: InterventionSpec,
}

impl Settings {
    pub fn resolve(common: &CommonArgs, pipeline: &PipelineArgs) -> Result<Settings> {
        let file = match &common.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        let seed = common.seed.or(file.seed).unwrap_or(0);
        let env_scorer = std::env::var(SCORER_ENV).ok().filter(|s| !s.trim().is_empty());
        let scorer_spec = common
            .scorer
            .clone()
            .or(env_scorer)
            .or(file.scorer.clone())
            .unwrap_or_else(|| "builtin".into());
        let strategy = pick(&pipeline.strategy, &file.strategy)
            .map(|s| s.parse::<MiningStrategy>().map_err(config_error))
            .transpose()?
            .unwrap_or(MiningStrategy::MostBiased);
        let method = |flag: &Option<String>, key: &Option<String>| -> Result<MaskMethod> {
            pick(flag, key)
                .map(|s| s.parse::<MaskMethod>().map_err(config_error))
                .transpose()
                .map(|m| m.unwrap_or(MaskMethod::RandomPhrase))
        };
        let intervention = InterventionSpec {
            name_method: method(&pipeline.method_name, &file.method_name)?,
            non_name_method: method(&pipeline.method_nonname, &file.method_nonname)?,
            seed,
            naive_word: pick(&pipeline.naive_word, &file.naive_word).unwrap_or_else(|| DEFAULT_NAIVE_WORD.into()),
        };
        Ok(Settings {
            seed,
            scorer_spec,
            lexicon_path: common.lexicon.clone().or(file.lexicon.clone()),
            corpus_path: common.corpus.clone().or(file.corpus.clone()),
            out_dir: common.out.clone().or(file.out_dir.clone()).unwrap_or_else(|| "out".into()),
            k: pipeline.k.or(file.k).unwrap_or(10),
            strategy,
            intervention,
            file,
        })
    }

    pub fn lexicon(&self) -> Result<GenderLexicon> {
        match &self.lexicon_path {
            None => Ok(GenderLexicon::default_list()),
            Some(p) => {
                require_file(p, "lexicon")?;
                GenderLexicon::load(p, LexiconFormat::from_path(p))
                    .map_err(|e| config_error(format!("lexicon {}: {e}", p.display())))
            }
        }
    }

    pub fn corpus(&self) -> Result<Vec<Sample>> {
        let path = self
            .corpus_path
            .as_ref()
            .ok_or_else(|| config_error("no corpus given (use --corpus or the `corpus` config key)"))?;
        read_samples(path, "corpus")
    }

    pub fn scorer_spec(&self) -> Result<ScorerSpec> {
        self.scorer_spec.parse()
    }
}

fn pick(flag: &Option<String>, key: &Option<String>) -> Option<String> {
    flag.clone().or(key.clone())
}

pub fn require_file(path: &Path, what: &str) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(config_error(format!("{what} file not found: {}", path.display())))
    }
}

pub fn read_samples(path: &Path, what: &str) -> Result<Vec<Sample>> {
    require_file(path, what)?;
    debias_forge::corpus::read_corpus(path).map_err(|e| config_error(format!("{what} {}: {e}", path.display())))
}

#[derive(Debug, Clone, PartialEq)]
pub enum ScorerSpec {
    Builtin { alpha: f64, fit: Option<PathBuf> },
    Tcp(String),
    Stdio(String),
}

impl std::str::FromStr for ScorerSpec {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Some(rest) = s.strip_prefix("external:") {
            if let Some(addr) = rest.strip_prefix("tcp:") {
                return Ok(ScorerSpec::Tcp(addr.to_string()));
            }
            if let Some(cmd) = rest.strip_prefix("stdio:") {
                if cmd.trim().is_empty() {
                    return Err(config_error("external:stdio needs a command"));
                }
                return Ok(ScorerSpec::Stdio(cmd.to_string()));
            }
            return Err(config_error(format!("unknown external transport in `{s}`")));
        }
        let opts = match s.strip_prefix("builtin") {
            Some("") => "",
            Some(rest) => rest
                .strip_prefix(':')
                .ok_or_else(|| config_error(format!("bad scorer spec `{s}`")))?,
            None => return Err(config_error(format!("unknown scorer spec `{s}`"))),
        };
        let (mut alpha, mut fit) = (1.0, None);
        for kv in opts.split(',').filter(|kv| !kv.is_empty()) {
            match kv.split_once('=') {
                Some(("alpha", v)) => {
                    alpha = v
                        .parse()
                        .ok()
                        .filter(|a: &f64| *a > 0.0 && a.is_finite())
                        .ok_or_else(|| config_error(format!("alpha must be a positive number, got `{v}`")))?;
                }
                Some(("fit", v)) => fit = Some(PathBuf::from(v)),
                _ => return Err(config_error(format!("unknown builtin scorer option `{kv}`"))),
            }
        }
        Ok(ScorerSpec::Builtin { alpha, fit })
    }
}

impl ScorerSpec {
    /// Fits the builtin model on `fit`, or on `fallback` when no fit corpus was named.
    pub fn fit_builtin(alpha: f64, fit: &Option<PathBuf>, fallback: Option<&[Sample]>) -> Result<ToyScorerModel> {
        match (fit, fallback) {
            (Some(path), _) => Ok(fit_toy_scorer(&read_samples(path, "scorer fit corpus")?, alpha)),
            (None, Some(corpus)) => Ok(fit_toy_scorer(corpus, alpha)),
            (None, None) => Err(config_error("the builtin scorer needs a fit corpus (builtin:fit=PATH)")),
        }
    }

    pub fn build(&self, fallback: Option<&[Sample]>) -> Result<Box<dyn Scorer>> {
        Ok(match self {
            ScorerSpec::Builtin { alpha, fit } => Box::new(Self::fit_builtin(*alpha, fit, fallback)?),
            ScorerSpec::Tcp(addr) => Box::new(
                ProtocolScorer::connect_tcp(addr.as_str())
                    .map_err(|e| debias_forge::Error::Protocol(format!("connecting to {addr}: {e}")))?,
            ),
            ScorerSpec::Stdio(cmd) => Box::new(
                ProtocolScorer::spawn(cmd)
                    .map_err(|e| debias_forge::Error::Protocol(format!("starting `{cmd}`: {e}")))?,
            ),
        })
    }
}
