//! Labeled bracketing precision/recall/F in the style of EVALB.
//!
//! Four rules are applied: empty constituents are expected to be removed
//! beforehand (see [`super::strip_empties`]), root constituents with an
//! ignored label are skipped, width-1 constituents over a punctuation token
//! are skipped, and labels in one equivalence class compare equal.

use std::collections::{HashMap, HashSet};
use std::fmt;

use crate::error::{Error, Result};

use super::tree::{Constituent, Tree};

/// Counts and ratios of matched constituents.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Prf {
    pub matched: usize,
    pub predicted: usize,
    pub gold: usize,
    pub precision: f64,
    pub recall: f64,
    pub fscore: f64,
}

impl Prf {
    pub fn from_counts(matched: usize, predicted: usize, gold: usize) -> Self {
        let precision = if predicted == 0 {
            1.0
        } else {
            matched as f64 / predicted as f64
        };
        let recall = if gold == 0 { 1.0 } else { matched as f64 / gold as f64 };
        let fscore = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Prf {
            matched,
            predicted,
            gold,
            precision,
            recall,
            fscore,
        }
    }
}

impl fmt::Display for Prf {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "P {:.2} R {:.2} F {:.2}",
            100.0 * self.precision,
            100.0 * self.recall,
            100.0 * self.fscore
        )
    }
}

/// Evaluation rules. The default applies none of them.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EvalParams {
    /// Labels whose root constituent is skipped.
    pub ignore_root_labels: HashSet<String>,
    /// Tokens treated as punctuation.
    pub punct_tokens: HashSet<String>,
    /// Label classes compared as equal.
    pub equivalences: Vec<HashSet<String>>,
    /// Compare spans only.
    pub unlabeled: bool,
    /// Canonical EVALB behavior: delete punctuation tokens before computing
    /// spans, instead of only skipping width-1 punctuation constituents.
    pub delete_punct: bool,
}

impl EvalParams {
    /// English treebank conventions.
    pub fn english() -> Self {
        EvalParams {
            ignore_root_labels: ["TOP", "S1", ""].map(String::from).into(),
            punct_tokens: [":", "``", "''", ".", "?", "!"].map(String::from).into(),
            equivalences: vec![["ADVP", "PRT"].map(String::from).into()],
            unlabeled: false,
            delete_punct: false,
        }
    }

    pub fn unlabeled() -> Self {
        EvalParams {
            unlabeled: true,
            ..Default::default()
        }
    }

    /// Reads the `key = value` parameter format:
    ///
    /// ```text
    /// # comment
    /// ignore_root = TOP S1 ""
    /// punct = : `` '' . ? !
    /// equiv = ADVP PRT
    /// unlabeled = false
    /// delete_punct = false
    /// ```
    ///
    /// `""` stands for the empty label. `equiv` may repeat.
    pub fn parse(text: &str) -> Result<Self> {
        let mut p = EvalParams::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", lineno + 1)))?;
            let items = value
                .split_whitespace()
                .map(|s| if s == "\"\"" { String::new() } else { s.to_string() });
            match key.trim() {
                "ignore_root" => p.ignore_root_labels.extend(items),
                "punct" => p.punct_tokens.extend(items),
                "equiv" => p.equivalences.push(items.collect()),
                "unlabeled" => p.unlabeled = parse_bool(value, lineno)?,
                "delete_punct" => p.delete_punct = parse_bool(value, lineno)?,
                other => return Err(Error::Config(format!("line {}: unknown key `{other}`", lineno + 1))),
            }
        }
        Ok(p)
    }

    fn canonical_labels(&self) -> HashMap<&str, &str> {
        let mut map = HashMap::new();
        for class in &self.equivalences {
            if let Some(rep) = class.iter().min() {
                for l in class {
                    map.insert(l.as_str(), rep.as_str());
                }
            }
        }
        map
    }
}

fn parse_bool(value: &str, lineno: usize) -> Result<bool> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("line {}: expected true or false", lineno + 1)))
}

type Key = (usize, usize, String);

fn counted<T: Tree>(tree: &T, params: &EvalParams, canon: &HashMap<&str, &str>) -> HashMap<Key, usize> {
    let tokens = tree.sentence().tokens();
    let is_punct = |i: usize| params.punct_tokens.contains(&tokens[i]);
    // new index of every kept token, for the token-deletion reading
    let mut remap = Vec::with_capacity(tokens.len());
    let mut next = 0usize;
    for i in 0..tokens.len() {
        remap.push(next);
        if !(params.delete_punct && is_punct(i)) {
            next += 1;
        }
    }
    let mut out = HashMap::new();
    for (k, Constituent { start, end, label }) in tree.constituents().into_iter().enumerate() {
        if k == 0 && params.ignore_root_labels.contains(&label) {
            continue;
        }
        let (start, end) = if params.delete_punct {
            let kept: Vec<usize> = (start..=end).filter(|&i| !is_punct(i)).collect();
            match (kept.first(), kept.last()) {
                (Some(&a), Some(&b)) => (remap[a], remap[b]),
                _ => continue,
            }
        } else {
            if start == end && is_punct(start) {
                continue;
            }
            (start, end)
        };
        let label = if params.unlabeled {
            String::new()
        } else {
            canon.get(label.as_str()).map_or(label.clone(), |s| s.to_string())
        };
        *out.entry((start, end, label)).or_insert(0) += 1;
    }
    out
}

/// Scores predicted trees against gold trees over the same token sequences.
pub fn evalb_score<G: Tree, P: Tree>(gold: &[G], pred: &[P], params: &EvalParams) -> Result<Prf> {
    if gold.len() != pred.len() {
        return Err(Error::Alignment {
            index: gold.len().min(pred.len()),
        });
    }
    let canon = params.canonical_labels();
    let (mut matched, mut n_pred, mut n_gold) = (0, 0, 0);
    for (index, (g, p)) in gold.iter().zip(pred).enumerate() {
        if g.sentence() != p.sentence() {
            return Err(Error::Alignment { index });
        }
        let gc = counted(g, params, &canon);
        let pc = counted(p, params, &canon);
        n_gold += gc.values().sum::<usize>();
        n_pred += pc.values().sum::<usize>();
        matched += pc
            .iter()
            .map(|(k, &c)| c.min(gc.get(k).copied().unwrap_or(0)))
            .sum::<usize>();
    }
    Ok(Prf::from_counts(matched, n_pred, n_gold))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::treebank::parse_bracketed;

    #[test]
    fn two_thirds() {
        let g = parse_bracketed("(S (NP a b) (VP c d e))").unwrap();
        let p = parse_bracketed("(S (NP a b) (NP c d e))").unwrap();
        let prf = evalb_score(&[g], &[p], &EvalParams::default()).unwrap();
        assert_eq!((prf.matched, prf.predicted, prf.gold), (2, 3, 3));
        assert!((prf.fscore - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(prf.to_string(), "P 66.67 R 66.67 F 66.67");
    }

    #[test]
    fn equivalent_labels_match() {
        let g = parse_bracketed("(S (NP a) (VP b c (ADVP d e)))").unwrap();
        let p = parse_bracketed("(S (NP a) (VP b c (PRT d e)))").unwrap();
        let none = evalb_score(
            std::slice::from_ref(&g),
            std::slice::from_ref(&p),
            &EvalParams::default(),
        )
        .unwrap();
        assert_eq!(none.matched, 3);
        let eq = evalb_score(&[g], &[p], &EvalParams::english()).unwrap();
        assert_eq!(eq.matched, 4);
        assert_eq!(eq.fscore, 1.0);
    }

    #[test]
    fn root_and_punct_ignored() {
        let g = parse_bracketed("(TOP (S (NP a) (VP b) (P .)))").unwrap();
        let p = parse_bracketed("(TOP (X (NP a) (VP b) (Q .)))").unwrap();
        let prf = evalb_score(&[g], &[p], &EvalParams::english()).unwrap();
        // S vs X counted, TOP and the punctuation leaf skipped
        assert_eq!((prf.matched, prf.predicted, prf.gold), (2, 3, 3));
    }

    #[test]
    fn duplicates_matched_with_multiplicity() {
        let g = parse_bracketed("(S (S (NP a) (VP b)))").unwrap();
        let p = parse_bracketed("(S (NP a) (VP b))").unwrap();
        let prf = evalb_score(
            std::slice::from_ref(&g),
            std::slice::from_ref(&p),
            &EvalParams::default(),
        )
        .unwrap();
        assert_eq!((prf.matched, prf.predicted, prf.gold), (3, 3, 4));
        let rev = evalb_score(&[p], &[g], &EvalParams::default()).unwrap();
        assert_eq!(rev.matched, prf.matched);
    }

    #[test]
    fn misaligned_sentences() {
        let g = parse_bracketed("(S a b)").unwrap();
        let p = parse_bracketed("(S a c)").unwrap();
        match evalb_score(&[g.clone(), g], &[p.clone(), p], &EvalParams::default()) {
            Err(Error::Alignment { index }) => assert_eq!(index, 0),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn delete_punct_reading() {
        let g = parse_bracketed("(S (NP a) (VP b (P .)))").unwrap();
        let p = parse_bracketed("(S (NP a) (VP b) (P .))").unwrap();
        let mut params = EvalParams::english();
        params.delete_punct = true;
        let prf = evalb_score(&[g], &[p], &params).unwrap();
        assert_eq!(prf.fscore, 1.0);
    }

    #[test]
    fn params_file() {
        let p = EvalParams::parse(
            "# english\nignore_root = TOP S1 \"\"\npunct = . ?\nequiv = ADVP PRT\nequiv = A B\nunlabeled = true\n",
        )
        .unwrap();
        assert!(p.ignore_root_labels.contains(""));
        assert_eq!(p.equivalences.len(), 2);
        assert!(p.unlabeled);
        assert!(EvalParams::parse("bogus = 1").is_err());
        assert!(EvalParams::parse("no equals sign").is_err());
    }

    #[test]
    fn empty_counts() {
        let prf = Prf::from_counts(0, 0, 0);
        assert_eq!((prf.precision, prf.recall, prf.fscore), (1.0, 1.0, 1.0));
        let zero = Prf::from_counts(0, 3, 2);
        assert_eq!(zero.fscore, 0.0);
    }
}
