//! From a trained model to predicted trees: score every sentence, pick a
//! bracketing, label each of its spans, undo the normal form.

use ndarray::{s, Array2, Array3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chart::{cky, label_aggregate, mbr_decode, AggregateMode, CkyResult, LabelChart, SpanChart};
use crate::error::{Error, Result};
use crate::scorer::{Model, Scores};
use crate::treebank::{debinarize, BinaryTree, ConstTree, Constituent, LabelVocab, Sentence};

/// How the bracketing is chosen.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decode {
    /// Highest-scoring tree.
    #[default]
    Viterbi,
    /// Tree with the largest expected number of correct spans.
    Mbr,
}

impl std::str::FromStr for Decode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "viterbi" => Ok(Decode::Viterbi),
            "mbr" => Ok(Decode::Mbr),
            _ => Err(Error::Config(format!("unknown decode mode `{s}`"))),
        }
    }
}

impl std::fmt::Display for Decode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Decode::Viterbi => "viterbi",
            Decode::Mbr => "mbr",
        })
    }
}

/// Two-stage: bracket with span scores, then label. One-stage: bracket with
/// per-span aggregates of the label scores.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    #[default]
    Two,
    One,
}

impl std::str::FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "two" | "two_stage" => Ok(Stage::Two),
            "one" | "one_stage" => Ok(Stage::One),
            _ => Err(Error::Config(format!("unknown stage mode `{s}`"))),
        }
    }
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Stage::Two => "two",
            Stage::One => "one",
        })
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ParseOptions {
    pub decode: Decode,
    pub stage: Stage,
}

/// Eval-mode scores of every sentence, in input order.
pub fn score_all(model: &Model, sentences: &[Sentence]) -> Result<Vec<Scores>> {
    sentences.par_iter().map(|s| model.score(s)).collect()
}

/// The bracketing chart the decoder runs on.
pub fn bracket_chart(scores: &[Scores], stage: Stage) -> Result<SpanChart> {
    match stage {
        Stage::Two => {
            let mats: Vec<Array2<f64>> = scores.iter().map(|s| s.spans.clone()).collect();
            SpanChart::from_matrices(&mats)
        }
        Stage::One => {
            let grids: Vec<Array3<f64>> = scores.iter().map(|s| s.labels.clone()).collect();
            let lc = LabelChart::from_grids(&grids)?;
            Ok(label_aggregate(&lc, AggregateMode::LogSumExp)?.chart)
        }
    }
}

/// Runs the chosen decoder over a packed chart.
pub fn decode_chart(chart: &SpanChart, decode: Decode) -> Result<CkyResult> {
    match decode {
        Decode::Viterbi => cky(chart),
        Decode::Mbr => mbr_decode(chart),
    }
}

fn argmax(xs: ndarray::ArrayView1<f64>) -> usize {
    let mut best = 0;
    for (k, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = k;
        }
    }
    best
}

/// Labels every span of each bracketing with its best label.
pub fn label_trees(
    result: &CkyResult,
    scores: &[Scores],
    sentences: &[Sentence],
    labels: &LabelVocab,
) -> Result<Vec<BinaryTree>> {
    result
        .trees
        .iter()
        .zip(scores)
        .zip(sentences)
        .map(|((t, sc), sent)| {
            let spans: Vec<Constituent> = t
                .spans()
                .iter()
                .map(|&(i, j)| Constituent {
                    start: i,
                    end: j,
                    label: labels.label(argmax(sc.labels.slice(s![i, j, ..]))).to_string(),
                })
                .collect();
            BinaryTree::from_spans(sent.clone(), &spans)
        })
        .collect()
}

/// Predicted normal-form trees from precomputed scores.
pub fn decode_scores(
    scores: &[Scores],
    sentences: &[Sentence],
    labels: &LabelVocab,
    opts: ParseOptions,
) -> Result<Vec<BinaryTree>> {
    if scores.len() != sentences.len() {
        return Err(Error::Shape(format!(
            "{} score sets for {} sentences",
            scores.len(),
            sentences.len()
        )));
    }
    if opts.stage == Stage::One && opts.decode == Decode::Viterbi {
        // max over labels keeps the decoded tree consistent with its labels
        let grids: Vec<Array3<f64>> = scores.iter().map(|s| s.labels.clone()).collect();
        let agg = label_aggregate(&LabelChart::from_grids(&grids)?, AggregateMode::Max)?;
        let r = cky(&agg.chart)?;
        return label_trees(&r, scores, sentences, labels);
    }
    let chart = bracket_chart(scores, opts.stage)?;
    let r = decode_chart(&chart, opts.decode)?;
    label_trees(&r, scores, sentences, labels)
}

/// Parses `sentences` into n-ary trees, in input order.
pub fn parse(model: &Model, sentences: &[Sentence], opts: ParseOptions) -> Result<Vec<ConstTree>> {
    let scores = score_all(model, sentences)?;
    let trees = decode_scores(&scores, sentences, &model.labels, opts)?;
    Ok(trees.iter().map(debinarize).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scorer::ModelConfig;
    use crate::treebank::{render_bracketed, Tree};

    fn model() -> Model {
        let s = Sentence::from_whitespace("a b c d e").unwrap();
        let labels = LabelVocab::from(vec!["S".to_string(), "NP".to_string(), "S*".to_string()]);
        Model::for_corpus(ModelConfig::tiny(), [&s], labels, 3).unwrap()
    }

    #[test]
    fn one_word_sentence() {
        let m = model();
        let s = Sentence::from_whitespace("zzz").unwrap();
        for stage in [Stage::Two, Stage::One] {
            for decode in [Decode::Viterbi, Decode::Mbr] {
                let t = parse(&m, std::slice::from_ref(&s), ParseOptions { decode, stage }).unwrap();
                let r = render_bracketed(&t[0]);
                assert!(r.starts_with('(') && r.ends_with(" zzz)"), "{r}");
            }
        }
    }

    #[test]
    fn every_mode_gives_trees_in_order() {
        let m = model();
        let sents: Vec<Sentence> = ["a b", "c d e a", "e", "b c d e a b c"]
            .iter()
            .map(|l| Sentence::from_whitespace(l).unwrap())
            .collect();
        for stage in [Stage::Two, Stage::One] {
            for decode in [Decode::Viterbi, Decode::Mbr] {
                let out = parse(&m, &sents, ParseOptions { decode, stage }).unwrap();
                assert_eq!(out.len(), sents.len());
                for (t, s) in out.iter().zip(&sents) {
                    assert_eq!(t.sentence(), s);
                }
            }
        }
    }
}
