use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::tree::Tree;

/// Bidirectional map between label strings and dense indices.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct LabelVocab {
    labels: Vec<String>,
    index: HashMap<String, usize>,
}

impl From<Vec<String>> for LabelVocab {
    fn from(labels: Vec<String>) -> Self {
        let mut v = LabelVocab::default();
        for l in labels {
            v.insert(&l);
        }
        v
    }
}

impl From<LabelVocab> for Vec<String> {
    fn from(v: LabelVocab) -> Self {
        v.labels
    }
}

impl LabelVocab {
    /// Adds `label` if absent and returns its index.
    pub fn insert(&mut self, label: &str) -> usize {
        if let Some(&i) = self.index.get(label) {
            return i;
        }
        let i = self.labels.len();
        self.labels.push(label.to_string());
        self.index.insert(label.to_string(), i);
        i
    }

    pub fn get(&self, label: &str) -> Option<usize> {
        self.index.get(label).copied()
    }

    pub fn index_of(&self, label: &str) -> Result<usize> {
        self.get(label).ok_or_else(|| Error::UnknownLabel(label.to_string()))
    }

    pub fn label(&self, index: usize) -> &str {
        &self.labels[index]
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Collects every distinct label in order of first appearance, walking the
/// trees in order and each tree in preorder.
pub fn build_label_vocab<'a, T, I>(trees: I) -> Result<LabelVocab>
where
    T: Tree + 'a,
    I: IntoIterator<Item = &'a T>,
{
    let mut vocab = LabelVocab::default();
    let mut seen_tree = false;
    for t in trees {
        seen_tree = true;
        t.root().walk(&mut |n| {
            vocab.insert(&n.label);
        });
    }
    if !seen_tree {
        return Err(Error::EmptyCorpus);
    }
    Ok(vocab)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::treebank::{binarize_cnf, parse_bracketed, ConstTree, Direction};

    #[test]
    fn figure_cnf_labels() {
        let t = parse_bracketed("(S (NP I) (ADVP really) (VP love (NP this game)))").unwrap();
        let b = binarize_cnf(&t, Direction::Left);
        let v = build_label_vocab([&b]).unwrap();
        assert_eq!(
            v.labels(),
            &["S", "S*", "NP", "ADVP", "VP", "VP*", "NP*"].map(String::from)
        );
        let orig = build_label_vocab([&t]).unwrap();
        assert_eq!(orig.len(), 4);
    }

    #[test]
    fn single_label() {
        let t = parse_bracketed("(X w)").unwrap();
        let v = build_label_vocab([&t]).unwrap();
        assert_eq!(v.labels(), &["X".to_string()]);
        assert_eq!(v.index_of("X").unwrap(), 0);
        assert!(matches!(v.index_of("Y"), Err(Error::UnknownLabel(_))));
    }

    #[test]
    fn empty_corpus_is_error() {
        let none: Vec<ConstTree> = vec![];
        assert!(matches!(build_label_vocab(&none), Err(Error::EmptyCorpus)));
    }

    #[test]
    fn serde_roundtrip() {
        let v = LabelVocab::from(vec!["A".to_string(), "B*".to_string()]);
        let s = serde_json::to_string(&v).unwrap();
        assert_eq!(s, r#"["A","B*"]"#);
        let back: LabelVocab = serde_json::from_str(&s).unwrap();
        assert_eq!(back, v);
        assert_eq!(back.get("B*"), Some(1));
    }
}
