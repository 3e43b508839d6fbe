//! Treebank files and the preprocessing applied on read.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::bracket::{parse_bracketed, render_bracketed};
use super::tree::{Child, ConstTree, Node, Sentence, Tree};

/// Removes subtrees whose label is in `empty_labels`, together with their
/// words, and drops any node left without children.
pub fn strip_empties(tree: &ConstTree, empty_labels: &HashSet<String>) -> Result<ConstTree> {
    fn prune(node: &Node, empty: &HashSet<String>, words: &[String], kept: &mut Vec<String>) -> Option<Node> {
        if empty.contains(&node.label) {
            return None;
        }
        let mut children = Vec::new();
        for c in &node.children {
            match c {
                Child::Word(i) => {
                    children.push(Child::Word(kept.len()));
                    kept.push(words[*i].clone());
                }
                Child::Node(n) => {
                    if let Some(n) = prune(n, empty, words, kept) {
                        children.push(Child::Node(n));
                    }
                }
            }
        }
        Node::new(node.label.clone(), children).ok()
    }
    let mut kept = Vec::new();
    let root = prune(tree.root(), empty_labels, tree.sentence().tokens(), &mut kept)
        .ok_or_else(|| Error::InvalidTree("tree is empty after removing empty constituents".into()))?;
    ConstTree::new(Sentence::new(kept)?, root)
}

/// `NP-SBJ-1` becomes `NP`, `PP=2` becomes `PP`. Labels starting with `-`
/// (`-NONE-`, `-LRB-`) are left alone.
pub fn strip_function_tag(label: &str) -> &str {
    if label.starts_with('-') {
        return label;
    }
    match label.find(['-', '=']) {
        Some(i) if i > 0 => &label[..i],
        _ => label,
    }
}

pub fn strip_function_tags(tree: &ConstTree) -> ConstTree {
    fn go(node: &Node) -> Node {
        Node {
            label: strip_function_tag(&node.label).to_string(),
            start: node.start,
            end: node.end,
            children: node
                .children
                .iter()
                .map(|c| match c {
                    Child::Word(i) => Child::Word(*i),
                    Child::Node(n) => Child::Node(go(n)),
                })
                .collect(),
        }
    }
    ConstTree::new(tree.sentence().clone(), go(tree.root())).expect("labels only changed")
}

/// True when every word sits alone under a non-root node, i.e. the tree
/// carries a part-of-speech layer.
pub fn has_preterminal_layer(tree: &ConstTree) -> bool {
    fn go(node: &Node, is_root: bool) -> bool {
        node.children.iter().all(|c| match c {
            Child::Word(_) => !is_root && node.children.len() == 1,
            Child::Node(n) => go(n, false),
        })
    }
    go(tree.root(), true)
}

/// Replaces every preterminal node by its word. The root is never removed.
pub fn strip_preterminals(tree: &ConstTree) -> ConstTree {
    fn go(node: &Node) -> Node {
        let children = node
            .children
            .iter()
            .map(|c| match c {
                Child::Node(n) if n.is_leaf() => n.children[0].clone(),
                Child::Node(n) => Child::Node(go(n)),
                Child::Word(i) => Child::Word(*i),
            })
            .collect();
        Node {
            label: node.label.clone(),
            start: node.start,
            end: node.end,
            children,
        }
    }
    ConstTree::new(tree.sentence().clone(), go(tree.root())).expect("coverage unchanged")
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preterminals {
    /// Strip when every tree in the file has a full preterminal layer.
    #[default]
    Auto,
    Strip,
    Keep,
}

impl std::str::FromStr for Preterminals {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "auto" => Ok(Preterminals::Auto),
            "strip" => Ok(Preterminals::Strip),
            "keep" => Ok(Preterminals::Keep),
            _ => Err(format!("unknown preterminal mode `{s}`")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReadOptions {
    pub empty_labels: HashSet<String>,
    pub strip_function_tags: bool,
    pub preterminals: Preterminals,
}

impl Default for ReadOptions {
    fn default() -> Self {
        ReadOptions {
            empty_labels: ["-NONE-".to_string()].into(),
            strip_function_tags: true,
            preterminals: Preterminals::Auto,
        }
    }
}

impl ReadOptions {
    /// Parse lines verbatim.
    pub fn raw() -> Self {
        ReadOptions {
            empty_labels: HashSet::new(),
            strip_function_tags: false,
            preterminals: Preterminals::Keep,
        }
    }
}

fn line_error(path: &str, lineno: usize, e: Error) -> Error {
    match e {
        Error::Parse { offset, message } => Error::Parse {
            offset,
            message: format!("{path}:{}: {message}", lineno + 1),
        },
        other => Error::InvalidTree(format!("{path}:{}: {other}", lineno + 1)),
    }
}

/// Reads one tree per line from `reader`, skipping blank lines.
pub fn read_trees<R: BufRead>(reader: R, name: &str, opts: &ReadOptions) -> Result<Vec<ConstTree>> {
    let mut trees = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut t = parse_bracketed(&line).map_err(|e| line_error(name, lineno, e))?;
        if !opts.empty_labels.is_empty() {
            t = strip_empties(&t, &opts.empty_labels).map_err(|e| line_error(name, lineno, e))?;
        }
        if opts.strip_function_tags {
            t = strip_function_tags(&t);
        }
        trees.push(t);
    }
    let strip = match opts.preterminals {
        Preterminals::Strip => true,
        Preterminals::Keep => false,
        Preterminals::Auto => !trees.is_empty() && trees.iter().all(has_preterminal_layer),
    };
    if strip {
        trees = trees.iter().map(strip_preterminals).collect();
    }
    Ok(trees)
}

pub fn read_tree_file(path: impl AsRef<Path>, opts: &ReadOptions) -> Result<Vec<ConstTree>> {
    let path = path.as_ref();
    let file = File::open(path)?;
    read_trees(BufReader::new(file), &path.display().to_string(), opts)
}

pub fn write_trees<W: Write, T: Tree>(mut writer: W, trees: &[T]) -> Result<()> {
    for t in trees {
        writeln!(writer, "{}", render_bracketed(t))?;
    }
    Ok(())
}

/// Reads parser input: either raw whitespace-tokenized sentences or trees,
/// whose words are taken in order. Blank lines are skipped.
pub fn read_sentences<R: BufRead>(reader: R) -> Result<Vec<Sentence>> {
    let mut out = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let sentence = if trimmed.starts_with('(') {
            parse_bracketed(trimmed)
                .map_err(|e| line_error("input", lineno, e))?
                .sentence()
                .clone()
        } else {
            Sentence::from_whitespace(trimmed)?
        };
        out.push(sentence);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn empties() -> HashSet<String> {
        ["-NONE-".to_string()].into()
    }

    #[test]
    fn strip_none_leaf() {
        let t = parse_bracketed("(S (NP a b) (VP c (-NONE- *T*) d e))").unwrap();
        let s = strip_empties(&t, &empties()).unwrap();
        assert_eq!(render_bracketed(&s), "(S (NP a b) (VP c d e))");
        assert_eq!(s.len(), 5);
        assert_eq!((s.root().end, s.constituents()[2].start), (4, 2));
    }

    #[test]
    fn strip_without_empties_is_identity() {
        let t = parse_bracketed("(S (NP a b) (VP c))").unwrap();
        assert_eq!(strip_empties(&t, &empties()).unwrap(), t);
    }

    #[test]
    fn nested_empty_subtree_removed() {
        // S(0,3) -> NP(0,0) a, SBAR(1,2) -> S(1,2) -> (-NONE- *) (-NONE- *T*), VP(3,3) b
        let t = parse_bracketed("(S (NP a) (SBAR (S (-NONE- *) (-NONE- *T*))) (VP b))").unwrap();
        assert_eq!(t.len(), 4);
        let s = strip_empties(&t, &empties()).unwrap();
        assert_eq!(render_bracketed(&s), "(S (NP a) (VP b))");
        let spans: Vec<_> = s.constituents().iter().map(|c| (c.start, c.end)).collect();
        assert_eq!(spans, vec![(0, 1), (0, 0), (1, 1)]);
    }

    #[test]
    fn empty_root_is_error() {
        let t = parse_bracketed("(S (-NONE- *))").unwrap();
        assert!(strip_empties(&t, &empties()).is_err());
    }

    #[test]
    fn function_tags() {
        assert_eq!(strip_function_tag("NP-SBJ-1"), "NP");
        assert_eq!(strip_function_tag("PP=2"), "PP");
        assert_eq!(strip_function_tag("-NONE-"), "-NONE-");
        assert_eq!(strip_function_tag("ADVP"), "ADVP");
    }

    #[test]
    fn preterminal_detection() {
        let pos = parse_bracketed("(TOP (S (NP (PRP I)) (VP (VBP love) (NP (DT this) (NN game)))))").unwrap();
        assert!(has_preterminal_layer(&pos));
        assert_eq!(
            render_bracketed(&strip_preterminals(&pos)),
            "(TOP (S (NP I) (VP love (NP this game))))"
        );
        let fig = parse_bracketed("(S (NP I) (ADVP really) (VP love (NP this game)))").unwrap();
        assert!(!has_preterminal_layer(&fig));
        assert!(!has_preterminal_layer(&parse_bracketed("(X w)").unwrap()));
    }

    #[test]
    fn read_file_auto_strips_pos() {
        let text = "( (S (NP-SBJ (PRP I)) (VP (VBP see) (NP (-NONE- *)) (NP (NN it)))))\n\n(TOP (NN x))\n";
        let trees = read_trees(text.as_bytes(), "mem", &ReadOptions::default()).unwrap();
        assert_eq!(trees.len(), 2);
        assert_eq!(render_bracketed(&trees[0]), "( (S (NP I) (VP see (NP it))))");
        assert_eq!(render_bracketed(&trees[1]), "(TOP x)");
    }

    #[test]
    fn read_reports_line() {
        let err = read_trees("(S a)\n(S (b\n".as_bytes(), "f.txt", &ReadOptions::raw()).unwrap_err();
        assert!(err.to_string().contains("f.txt:2"), "{err}");
    }

    #[test]
    fn read_sentences_from_mixed_input() {
        let s = read_sentences("a b c\n\n(S (X d) e)\n".as_bytes()).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s[1].tokens(), &["d".to_string(), "e".to_string()]);
    }
}
