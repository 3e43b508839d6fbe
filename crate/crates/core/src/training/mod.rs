//! Losses, batching, the optimizer and the epoch loop.

mod batch;
mod checkpoint;
mod loss;
mod optim;

pub use batch::make_batches;
pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint};
pub use loss::{
    crf_bracket_loss, gold_spans, label_loss, max_margin_loss, one_stage_crf_loss, one_stage_max_margin_loss,
    total_loss, LabelLoss, LabeledSpan, SpanLoss,
};
pub use optim::{global_norm, optimizer_step, AdamConfig, AdamState};

use std::collections::{HashMap, HashSet};
use std::path::Path;
use std::time::Instant;

use ndarray::{Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chart::{LabelChart, SpanChart, UnlabeledTree};
use crate::error::{Error, Result};
use crate::parser::{self, Decode, ParseOptions, Stage};
use crate::scorer::{Encoded, Mode, Model, ModelParams, Scored, UNK};
use crate::treebank::{evalb_score, BinaryTree, ConstTree, EvalParams, Sentence, Tree};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossMode {
    /// Tree CRF over bracketings plus label cross-entropy.
    #[default]
    TwoStageCrf,
    /// CRF over labeled bracketings.
    OneStageCrf,
    /// Structured hinge over bracketings plus label cross-entropy.
    MaxMargin,
    /// Structured hinge over labeled bracketings.
    OneStageMaxMargin,
}

impl LossMode {
    pub fn stage(self) -> Stage {
        match self {
            LossMode::TwoStageCrf | LossMode::MaxMargin => Stage::Two,
            LossMode::OneStageCrf | LossMode::OneStageMaxMargin => Stage::One,
        }
    }
}

impl std::str::FromStr for LossMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "two_stage_crf" => Ok(LossMode::TwoStageCrf),
            "one_stage_crf" => Ok(LossMode::OneStageCrf),
            "max_margin" => Ok(LossMode::MaxMargin),
            "one_stage_max_margin" => Ok(LossMode::OneStageMaxMargin),
            _ => Err(Error::Config(format!("unknown loss mode `{s}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Token budget of one mini-batch.
    pub batch_words: usize,
    pub max_epochs: usize,
    /// Epochs without a new best dev score before stopping.
    pub patience: usize,
    pub dropout: f64,
    pub loss_mode: LossMode,
    pub margin: f64,
    /// Weight of the label loss against the bracketing loss.
    pub label_weight: f64,
    /// Probability of replacing a training singleton by the unknown word;
    /// 0 turns replacement off.
    pub unk_replace: f64,
    pub decode: Decode,
    pub optimizer: AdamConfig,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_words: 5000,
            max_epochs: 1000,
            patience: 100,
            dropout: 0.33,
            loss_mode: LossMode::TwoStageCrf,
            margin: 1.0,
            label_weight: 1.0,
            unk_replace: 0.0,
            decode: Decode::Viterbi,
            optimizer: AdamConfig::default(),
            seed: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("dropout", self.dropout), ("unk_replace", self.unk_replace)] {
            if !(0.0..1.0).contains(&v) {
                return Err(Error::Config(format!("{name} must be in [0, 1), got {v}")));
            }
        }
        if self.batch_words == 0 || self.max_epochs == 0 {
            return Err(Error::Config("batch_words and max_epochs must be positive".into()));
        }
        if !(self.margin >= 0.0 && self.label_weight >= 0.0) {
            return Err(Error::Config("margin and label_weight must be non-negative".into()));
        }
        let o = &self.optimizer;
        if !(o.lr > 0.0
            && o.lr.is_finite()
            && (0.0..1.0).contains(&o.beta1)
            && (0.0..1.0).contains(&o.beta2)
            && o.eps >= 0.0
            && o.clip >= 0.0)
        {
            return Err(Error::Config(format!("invalid optimizer settings {o:?}")));
        }
        Ok(())
    }
}

/// One line of the training log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean per-sentence training loss.
    pub loss: f64,
    pub dev_p: f64,
    pub dev_r: f64,
    pub dev_f: f64,
    /// Unlabeled F on the dev set.
    pub dev_uf: f64,
    pub seconds: f64,
}

pub struct TrainOutcome {
    /// Parameters of the epoch with the best dev F.
    pub best: Model,
    pub best_epoch: usize,
    pub best_f: f64,
    pub records: Vec<EpochRecord>,
}

/// Independent, reproducible stream per `(seed, epoch, sentence)`.
fn sentence_rng(seed: u64, epoch: usize, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((epoch as u64) << 32) | index as u64);
    rng
}

/// Sentences whose gradients are summed serially before joining the batch
/// total; fixing it keeps results independent of the thread count.
const CHUNK: usize = 8;

struct Example {
    enc: Encoded,
    bracket: UnlabeledTree,
    spans: Vec<LabeledSpan>,
}

fn prepare(model: &Model, trees: &[BinaryTree]) -> Result<Vec<Example>> {
    trees
        .iter()
        .map(|t| {
            let spans = gold_spans(t, &model.labels)?;
            Ok(Example {
                enc: model.encode(t.sentence()),
                bracket: UnlabeledTree::new(t.len(), t.spans())?,
                spans,
            })
        })
        .collect()
}

/// Loss, span-score adjoints and label-score adjoints of one sentence.
type Adjoint = (f64, Array2<f64>, Array3<f64>);

/// Per-sentence loss and score adjoints for one batch, in batch order.
fn batch_adjoints(scored: &[Scored], ex: &[&Example], cfg: &TrainConfig) -> Result<Vec<Adjoint>> {
    let lengths: Vec<usize> = ex.iter().map(|e| e.enc.len()).collect();
    let mats: Vec<Array2<f64>> = scored.iter().map(|s| s.scores.spans.clone()).collect();
    let mut out = Vec::with_capacity(ex.len());
    match cfg.loss_mode {
        LossMode::TwoStageCrf | LossMode::MaxMargin => {
            let chart = SpanChart::from_matrices(&mats)?;
            let gold: Vec<UnlabeledTree> = ex.iter().map(|e| e.bracket.clone()).collect();
            let r = match cfg.loss_mode {
                LossMode::TwoStageCrf => crf_bracket_loss(&chart, &gold)?,
                _ => max_margin_loss(&chart, &gold, cfg.margin)?,
            };
            for (b, (s, e)) in scored.iter().zip(ex).enumerate() {
                let (ll, mut dl) = label_loss(s.scores.labels.view(), &e.spans)?;
                dl *= cfg.label_weight;
                out.push((
                    total_loss(r.losses[b], cfg.label_weight * ll),
                    r.adjoints.instance(b),
                    dl,
                ));
            }
        }
        LossMode::OneStageCrf | LossMode::OneStageMaxMargin => {
            let grids: Vec<Array3<f64>> = scored.iter().map(|s| s.scores.labels.clone()).collect();
            let lc = LabelChart::from_grids(&grids)?;
            let gold: Vec<Vec<LabeledSpan>> = ex.iter().map(|e| e.spans.clone()).collect();
            let r = match cfg.loss_mode {
                LossMode::OneStageCrf => one_stage_crf_loss(&lc, &gold)?,
                _ => one_stage_max_margin_loss(&lc, &gold, cfg.margin)?,
            };
            for (b, (s, e)) in scored.iter().zip(ex).enumerate() {
                // width-1 labels are outside the structured loss; they get
                // their own cross-entropy
                let words: Vec<LabeledSpan> = e.spans.iter().copied().filter(|(i, j, _)| i == j).collect();
                let (ll, dl) = label_loss(s.scores.labels.view(), &words)?;
                let d = r.adjoints.instance(b) + dl * cfg.label_weight;
                out.push((
                    r.losses[b] + cfg.label_weight * ll,
                    Array2::zeros((lengths[b], lengths[b])),
                    d,
                ));
            }
        }
    }
    Ok(out)
}

/// Mean loss over the batch and the gradient of that mean.
fn batch_gradient(
    model: &Model,
    ex: &[&Example],
    singletons: &HashSet<usize>,
    cfg: &TrainConfig,
    epoch: usize,
    ids: &[usize],
) -> Result<(f64, ModelParams)> {
    let scored: Vec<Scored> = ex
        .par_iter()
        .zip(ids)
        .map(|(e, &id)| {
            let mut rng = sentence_rng(cfg.seed, epoch, id);
            let mut enc = e.enc.clone();
            if cfg.unk_replace > 0.0 {
                for w in enc.words.iter_mut() {
                    if singletons.contains(w) && rng.gen::<f64>() < cfg.unk_replace {
                        *w = UNK;
                    }
                }
            }
            model.forward(&enc, &mut Mode::Train(&mut rng), true)
        })
        .collect::<Result<_>>()?;
    let finite = |s: &Scored| {
        s.scores
            .spans
            .iter()
            .chain(s.scores.labels.iter())
            .all(|v| v.is_finite())
    };
    if !scored.iter().all(finite) {
        return Err(Error::Diverged { epoch, loss: f64::NAN });
    }
    let adj = batch_adjoints(&scored, ex, cfg)?;
    let loss: f64 = adj.iter().map(|a| a.0).sum();

    let chunks: Vec<(Vec<&Scored>, Vec<&Adjoint>)> = scored
        .chunks(CHUNK)
        .zip(adj.chunks(CHUNK))
        .map(|(s, a)| (s.iter().collect(), a.iter().collect()))
        .collect();
    let mut total = model.params.zeros_like();
    for wave in chunks.chunks(rayon::current_num_threads().max(1)) {
        let grads: Vec<ModelParams> = wave
            .par_iter()
            .map(|(s, a)| {
                let mut g = model.params.zeros_like();
                for (sc, (_, ds, dl)) in s.iter().zip(a) {
                    model.backward(sc, ds.view(), dl.view(), &mut g)?;
                }
                Ok(g)
            })
            .collect::<Result<_>>()?;
        for g in &grads {
            total.add_scaled(g, 1.0);
        }
    }
    let scale = 1.0 / ex.len() as f64;
    let mut mean = total.zeros_like();
    mean.add_scaled(&total, scale);
    Ok((loss * scale, mean))
}

/// Dev precision/recall/F (labeled) and unlabeled F.
pub fn evaluate(
    model: &Model,
    dev: &[ConstTree],
    opts: ParseOptions,
    params: &EvalParams,
) -> Result<(f64, f64, f64, f64)> {
    if dev.is_empty() {
        return Ok((0.0, 0.0, 0.0, 0.0));
    }
    let sents: Vec<Sentence> = dev.iter().map(|t| t.sentence().clone()).collect();
    let pred = parser::parse(model, &sents, opts)?;
    let l = evalb_score(dev, &pred, params)?;
    let u = evalb_score(dev, &pred, &EvalParams::unlabeled())?;
    Ok((
        100.0 * l.precision,
        100.0 * l.recall,
        100.0 * l.fscore,
        100.0 * u.fscore,
    ))
}

/// Trains `model` on normal-form `train` trees, selecting on labeled F over
/// the n-ary `dev` trees. Each epoch record goes to `on_epoch` as soon as it
/// is complete; with `checkpoint` the best model and its optimizer state are
/// written there whenever the dev score improves. A non-finite loss aborts
/// with [`Error::Diverged`], leaving the last good checkpoint in place.
pub fn train(
    mut model: Model,
    train: &[BinaryTree],
    dev: &[ConstTree],
    cfg: &TrainConfig,
    eval: &EvalParams,
    checkpoint: Option<&Path>,
    mut on_epoch: impl FnMut(&EpochRecord) -> Result<()>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    model.config.dropout = cfg.dropout;
    let examples = prepare(&model, train)?;
    let mut counts: HashMap<usize, usize> = HashMap::new();
    for e in &examples {
        for &w in &e.enc.words {
            *counts.entry(w).or_default() += 1;
        }
    }
    let singletons: HashSet<usize> = counts.into_iter().filter(|&(_, c)| c == 1).map(|(w, _)| w).collect();
    let lengths: Vec<usize> = examples.iter().map(|e| e.enc.len()).collect();
    let opts = ParseOptions {
        decode: cfg.decode,
        stage: cfg.loss_mode.stage(),
    };

    let mut shuffle = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut state = AdamState::new(&model.params);
    let mut records = Vec::new();
    let mut best: Option<(Model, usize, f64)> = None;
    let mut since_best = 0;
    for epoch in 1..=cfg.max_epochs {
        let start = Instant::now();
        let mut loss_sum = 0.0;
        for ids in make_batches(&lengths, cfg.batch_words, &mut shuffle) {
            let ex: Vec<&Example> = ids.iter().map(|&k| &examples[k]).collect();
            let (loss, grad) = batch_gradient(&model, &ex, &singletons, cfg, epoch, &ids)?;
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch, loss });
            }
            optimizer_step(&mut model.params, &grad, &mut state, &cfg.optimizer)?;
            loss_sum += loss * ids.len() as f64;
        }
        let loss = loss_sum / examples.len() as f64;
        let (dev_p, dev_r, dev_f, dev_uf) = evaluate(&model, dev, opts, eval).map_err(|e| match e {
            Error::InvalidScore { .. } => Error::Diverged { epoch, loss },
            e => e,
        })?;
        let rec = EpochRecord {
            epoch,
            loss,
            dev_p,
            dev_r,
            dev_f,
            dev_uf,
            seconds: start.elapsed().as_secs_f64(),
        };
        on_epoch(&rec)?;
        records.push(rec);
        if best.as_ref().is_none_or(|b| dev_f > b.2) {
            if let Some(path) = checkpoint {
                save_checkpoint(path, &model, &state)?;
            }
            best = Some((model.clone(), epoch, dev_f));
            since_best = 0;
        } else {
            since_best += 1;
        }
        if since_best >= cfg.patience {
            break;
        }
    }
    let (best, best_epoch, best_f) = best.expect("at least one epoch ran");
    Ok(TrainOutcome {
        best,
        best_epoch,
        best_f,
        records,
    })
}

#[cfg(test)]
mod tests;
