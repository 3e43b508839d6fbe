//! Run configuration: defaults, then a `key = value` file, then
//! `TREECRF_*` environment variables, then command-line flags.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use treecrf::parser::{Decode, ParseOptions, Stage};
use treecrf::scorer::{ModelConfig, SpanScorer};
use treecrf::training::{LossMode, TrainConfig};
use treecrf::treebank::{Direction, EvalParams};

pub const ENV_PREFIX: &str = "TREECRF_";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum LossKind {
    #[default]
    Crf,
    MaxMargin,
}

impl std::str::FromStr for LossKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "crf" => Ok(LossKind::Crf),
            "maxmargin" | "max_margin" => Ok(LossKind::MaxMargin),
            _ => Err(format!("unknown loss `{s}` (crf or maxmargin)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub train: Option<PathBuf>,
    pub dev: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub input: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub gold: Option<PathBuf>,
    /// Training log; defaults to the model path plus `.log.jsonl`.
    pub log: Option<PathBuf>,
    /// A parameter file, or one of `none`, `english`, `unlabeled`.
    pub eval_params: String,
    pub decode: Decode,
    pub stage: Stage,
    pub loss: LossKind,
    pub binarize: Direction,
    pub seed: u64,
    /// 0 uses every core.
    pub threads: usize,
    pub model_config: ModelConfig,
    pub train_config: TrainConfig,
    pub bench_repeats: usize,
    pub selfcheck_cases: usize,
    /// Keys set by anything other than the defaults.
    explicit: BTreeSet<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            train: None,
            dev: None,
            test: None,
            model: None,
            input: None,
            output: None,
            gold: None,
            log: None,
            eval_params: "none".into(),
            decode: Decode::Viterbi,
            stage: Stage::Two,
            loss: LossKind::Crf,
            binarize: Direction::Left,
            seed: 1,
            threads: 0,
            model_config: ModelConfig::default(),
            train_config: TrainConfig::default(),
            bench_repeats: 5,
            selfcheck_cases: 100,
            explicit: BTreeSet::new(),
        }
    }
}

/// Every key, in echo order.
pub const KEYS: &[&str] = &[
    "train",
    "dev",
    "test",
    "model",
    "input",
    "output",
    "gold",
    "log",
    "eval_params",
    "decode",
    "stage",
    "loss",
    "binarize",
    "seed",
    "threads",
    "word_dim",
    "char_dim",
    "char_out",
    "lstm_hidden",
    "lstm_layers",
    "bracket_dim",
    "label_dim",
    "span_scorer",
    "batch_words",
    "max_epochs",
    "patience",
    "dropout",
    "lr",
    "margin",
    "label_weight",
    "unk_replace",
    "bench_repeats",
    "selfcheck_cases",
];

/// Keys that fix the shape of a model.
pub const ARCHITECTURE_KEYS: &[&str] = &[
    "word_dim",
    "char_dim",
    "char_out",
    "lstm_hidden",
    "lstm_layers",
    "bracket_dim",
    "label_dim",
    "span_scorer",
];

fn path(v: &str) -> Option<PathBuf> {
    (!v.is_empty()).then(|| PathBuf::from(v))
}

fn show(p: &Option<PathBuf>) -> String {
    p.as_ref().map(|p| p.display().to_string()).unwrap_or_default()
}

fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    v.parse().map_err(|e| anyhow!("{key}: cannot parse `{v}`: {e}"))
}

impl RunConfig {
    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        let v = v.trim();
        match key {
            "train" => self.train = path(v),
            "dev" => self.dev = path(v),
            "test" => self.test = path(v),
            "model" => self.model = path(v),
            "input" => self.input = path(v),
            "output" => self.output = path(v),
            "gold" => self.gold = path(v),
            "log" => self.log = path(v),
            "eval_params" => self.eval_params = if v.is_empty() { "none".into() } else { v.into() },
            "decode" => self.decode = num(key, v)?,
            "stage" => self.stage = num(key, v)?,
            "loss" => self.loss = num(key, v)?,
            "binarize" => self.binarize = num(key, v)?,
            "seed" => self.seed = num(key, v)?,
            "threads" => self.threads = num(key, v)?,
            "word_dim" => self.model_config.word_dim = num(key, v)?,
            "char_dim" => self.model_config.char_dim = num(key, v)?,
            "char_out" => self.model_config.char_out = num(key, v)?,
            "lstm_hidden" => self.model_config.lstm_hidden = num(key, v)?,
            "lstm_layers" => self.model_config.lstm_layers = num(key, v)?,
            "bracket_dim" => self.model_config.bracket_dim = num(key, v)?,
            "label_dim" => self.model_config.label_dim = num(key, v)?,
            "span_scorer" => self.model_config.span_scorer = num::<SpanScorer>(key, v)?,
            "batch_words" => self.train_config.batch_words = num(key, v)?,
            "max_epochs" => self.train_config.max_epochs = num(key, v)?,
            "patience" => self.train_config.patience = num(key, v)?,
            "dropout" => self.train_config.dropout = num(key, v)?,
            "lr" => self.train_config.optimizer.lr = num(key, v)?,
            "margin" => self.train_config.margin = num(key, v)?,
            "label_weight" => self.train_config.label_weight = num(key, v)?,
            "unk_replace" => self.train_config.unk_replace = num(key, v)?,
            "bench_repeats" => self.bench_repeats = num(key, v)?,
            "selfcheck_cases" => self.selfcheck_cases = num(key, v)?,
            _ => bail!("unknown config key `{key}`"),
        }
        self.explicit.insert(key.to_string());
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        let m = &self.model_config;
        let t = &self.train_config;
        Some(match key {
            "train" => show(&self.train),
            "dev" => show(&self.dev),
            "test" => show(&self.test),
            "model" => show(&self.model),
            "input" => show(&self.input),
            "output" => show(&self.output),
            "gold" => show(&self.gold),
            "log" => show(&self.log),
            "eval_params" => self.eval_params.clone(),
            "decode" => self.decode.to_string(),
            "stage" => self.stage.to_string(),
            "loss" => match self.loss {
                LossKind::Crf => "crf".into(),
                LossKind::MaxMargin => "maxmargin".into(),
            },
            "binarize" => match self.binarize {
                Direction::Left => "left".into(),
                Direction::Right => "right".into(),
            },
            "seed" => self.seed.to_string(),
            "threads" => self.threads.to_string(),
            "word_dim" => m.word_dim.to_string(),
            "char_dim" => m.char_dim.to_string(),
            "char_out" => m.char_out.to_string(),
            "lstm_hidden" => m.lstm_hidden.to_string(),
            "lstm_layers" => m.lstm_layers.to_string(),
            "bracket_dim" => m.bracket_dim.to_string(),
            "label_dim" => m.label_dim.to_string(),
            "span_scorer" => match m.span_scorer {
                SpanScorer::Biaffine => "biaffine".into(),
                SpanScorer::Minus => "minus".into(),
            },
            "batch_words" => t.batch_words.to_string(),
            "max_epochs" => t.max_epochs.to_string(),
            "patience" => t.patience.to_string(),
            "dropout" => t.dropout.to_string(),
            "lr" => t.optimizer.lr.to_string(),
            "margin" => t.margin.to_string(),
            "label_weight" => t.label_weight.to_string(),
            "unk_replace" => t.unk_replace.to_string(),
            "bench_repeats" => self.bench_repeats.to_string(),
            "selfcheck_cases" => self.selfcheck_cases.to_string(),
            _ => return None,
        })
    }

    pub fn is_explicit(&self, key: &str) -> bool {
        self.explicit.contains(key)
    }

    /// Applies `key = value` lines. `#` starts a comment; keys may use `-`
    /// or `_`.
    pub fn apply_file_text(&mut self, text: &str, name: &str) -> Result<()> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("{name}:{}: expected `key = value`", lineno + 1))?;
            self.set(&k.trim().replace('-', "_"), v)
                .with_context(|| format!("{name}:{}", lineno + 1))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
        self.apply_file_text(&text, &path.display().to_string())
    }

    /// Applies `TREECRF_<KEY>` variables from `vars`. Variables with the
    /// prefix that name no key are returned so the caller can warn.
    pub fn apply_env(&mut self, vars: impl IntoIterator<Item = (String, String)>) -> Result<Vec<String>> {
        let mut unknown = Vec::new();
        let mut found: Vec<(String, String)> = vars
            .into_iter()
            .filter_map(|(k, v)| k.strip_prefix(ENV_PREFIX).map(|rest| (rest.to_ascii_lowercase(), v)))
            .collect();
        found.sort();
        for (key, v) in found {
            if KEYS.contains(&key.as_str()) {
                self.set(&key, &v)
                    .with_context(|| format!("{ENV_PREFIX}{}", key.to_ascii_uppercase()))?;
            } else {
                unknown.push(format!("{ENV_PREFIX}{}", key.to_ascii_uppercase()));
            }
        }
        Ok(unknown)
    }

    /// Resolves the layers in precedence order.
    pub fn resolve(
        file: Option<&Path>,
        env: impl IntoIterator<Item = (String, String)>,
        flags: &[(&str, &str)],
    ) -> Result<(RunConfig, Vec<String>)> {
        let mut cfg = RunConfig::default();
        if let Some(p) = file {
            cfg.apply_file(p)?;
        }
        let unknown = cfg.apply_env(env)?;
        for (k, v) in flags {
            cfg.set(k, v).with_context(|| format!("--{}", k.replace('_', "-")))?;
        }
        cfg.validate()?;
        Ok((cfg, unknown))
    }

    pub fn validate(&self) -> Result<()> {
        self.model_config.validate()?;
        self.training().validate()?;
        if self.bench_repeats == 0 {
            bail!("bench_repeats must be positive");
        }
        Ok(())
    }

    /// Re-readable `key = value` listing of every key.
    pub fn echo(&self) -> String {
        let mut out = String::new();
        for k in KEYS {
            let _ = writeln!(out, "{k} = {}", self.get(k).unwrap_or_default());
        }
        out
    }

    pub fn training(&self) -> TrainConfig {
        let mut t = self.train_config.clone();
        t.seed = self.seed;
        t.decode = self.decode;
        t.loss_mode = match (self.loss, self.stage) {
            (LossKind::Crf, Stage::Two) => LossMode::TwoStageCrf,
            (LossKind::Crf, Stage::One) => LossMode::OneStageCrf,
            (LossKind::MaxMargin, Stage::Two) => LossMode::MaxMargin,
            (LossKind::MaxMargin, Stage::One) => LossMode::OneStageMaxMargin,
        };
        t
    }

    pub fn parse_options(&self) -> ParseOptions {
        ParseOptions {
            decode: self.decode,
            stage: self.stage,
        }
    }

    pub fn eval_params(&self) -> Result<EvalParams> {
        Ok(match self.eval_params.as_str() {
            "none" => EvalParams::default(),
            "english" => EvalParams::english(),
            "unlabeled" => EvalParams::unlabeled(),
            p => {
                let text = std::fs::read_to_string(p).with_context(|| format!("cannot read eval params {p}"))?;
                EvalParams::parse(&text)?
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn env(pairs: &[(&str, &str)]) -> Vec<(String, String)> {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn precedence() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("run.conf");
        std::fs::write(
            &file,
            "# comment\nseed = 5\nmax-epochs = 7  # trailing\ndecode = mbr\nlr = 0.01\n",
        )
        .unwrap();
        let (cfg, unknown) = RunConfig::resolve(
            Some(&file),
            env(&[
                ("TREECRF_SEED", "6"),
                ("TREECRF_MAX_EPOCHS", "8"),
                ("TREECRF_BOGUS", "1"),
                ("HOME", "/"),
            ]),
            &[("seed", "9")],
        )
        .unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.train_config.max_epochs, 8);
        assert_eq!(cfg.decode, Decode::Mbr);
        assert_eq!(cfg.train_config.optimizer.lr, 0.01);
        assert_eq!(cfg.train_config.patience, 100);
        assert_eq!(unknown, vec!["TREECRF_BOGUS"]);
        assert!(cfg.is_explicit("lr") && !cfg.is_explicit("patience"));
    }

    #[test]
    fn echo_round_trips() {
        let mut a = RunConfig::default();
        a.set("model", "m.bin").unwrap();
        a.set("stage", "one").unwrap();
        a.set("loss", "maxmargin").unwrap();
        a.set("dropout", "0.25").unwrap();
        let mut b = RunConfig::default();
        b.apply_file_text(&a.echo(), "echo").unwrap();
        for k in KEYS {
            assert_eq!(a.get(k), b.get(k), "{k}");
        }
        assert_eq!(b.training().loss_mode, LossMode::OneStageMaxMargin);
    }

    #[test]
    fn rejections() {
        let mut c = RunConfig::default();
        assert!(c.set("nope", "1").is_err());
        assert!(c.set("seed", "x").is_err());
        assert!(c.set("decode", "beam").is_err());
        assert!(c.apply_file_text("seed 3", "f").is_err());
        c.set("dropout", "1.5").unwrap();
        assert!(c.validate().is_err());
        assert!(RunConfig::resolve(None, env(&[("TREECRF_SEED", "x")]), &[]).is_err());
    }
}
