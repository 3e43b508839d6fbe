//! Generated data: random n-ary trees, a small probabilistic grammar, and
//! flat sentences for throughput runs.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::treebank::{Child, ConstTree, Node, Sentence};

const TREE_LABELS: &[&str] = &["S", "NP", "VP", "PP", "ADJP", "ADVP", "SBAR", "QP"];

/// Shape limits of [`random_tree`].
#[derive(Clone, Copy, Debug)]
pub struct TreeShape {
    pub max_len: usize,
    pub max_arity: usize,
    /// Longest chain of nodes over one span.
    pub max_chain: usize,
}

impl Default for TreeShape {
    fn default() -> Self {
        TreeShape {
            max_len: 15,
            max_arity: 5,
            max_chain: 3,
        }
    }
}

fn chain(rng: &mut ChaCha8Rng, shape: TreeShape, inner: Node) -> Node {
    let mut node = inner;
    for _ in 1..rng.gen_range(1..=shape.max_chain) {
        let label = *TREE_LABELS.choose(rng).expect("non-empty");
        node = Node::new(label, vec![Child::Node(node)]).expect("unary wrap");
    }
    node
}

fn grow(rng: &mut ChaCha8Rng, shape: TreeShape, start: usize, end: usize) -> Node {
    let label = *TREE_LABELS.choose(rng).expect("non-empty");
    let width = end - start + 1;
    if width == 1 {
        return chain(rng, shape, Node::new(label, vec![Child::Word(start)]).expect("leaf"));
    }
    let arity = rng.gen_range(2..=shape.max_arity.min(width));
    // arity - 1 distinct cut points inside the span
    let mut cuts: Vec<usize> = (start + 1..=end).collect();
    cuts.shuffle(rng);
    cuts.truncate(arity - 1);
    cuts.sort();
    let mut children = Vec::with_capacity(arity);
    let mut lo = start;
    for hi in cuts.into_iter().chain(std::iter::once(end + 1)) {
        if hi - lo == 1 && rng.gen_bool(0.5) {
            children.push(Child::Word(lo));
        } else {
            children.push(Child::Node(grow(rng, shape, lo, hi - 1)));
        }
        lo = hi;
    }
    chain(rng, shape, Node::new(label, children).expect("contiguous children"))
}

/// A random n-ary tree over `w0 w1 ...` with random labels, arities and
/// unary chains within `shape`.
pub fn random_tree(rng: &mut ChaCha8Rng, shape: TreeShape) -> ConstTree {
    let n = rng.gen_range(1..=shape.max_len);
    let sentence = Sentence::new((0..n).map(|i| format!("w{i}"))).expect("positive length");
    ConstTree::new(sentence, grow(rng, shape, 0, n - 1)).expect("valid tree")
}

enum Sym {
    Word(&'static [&'static str]),
    Phrase(&'static str),
}

use Sym::{Phrase as P, Word as W};

const DET: &[&str] = &["the", "a", "every", "some"];
const NOUN: &[&str] = &[
    "dog", "cat", "bird", "child", "farmer", "house", "garden", "river", "book", "idea",
];
const VERB: &[&str] = &["saw", "chased", "liked", "found", "heard", "knew", "slept", "ran"];
const PREP: &[&str] = &["in", "on", "with", "near"];
const ADJ: &[&str] = &["big", "small", "red", "old", "happy"];
const ADV: &[&str] = &["very", "quite"];
const COMP: &[&str] = &["that", "because"];

/// `(lhs, probability, rhs)`; probabilities per left-hand side sum to 1.
const RULES: &[(&str, f64, &[Sym])] = &[
    ("S", 1.0, &[P("NP"), P("VP")]),
    ("NP", 0.45, &[W(DET), W(NOUN)]),
    ("NP", 0.2, &[W(DET), P("ADJP"), W(NOUN)]),
    ("NP", 0.15, &[W(NOUN)]),
    ("NP", 0.2, &[W(DET), W(NOUN), P("PP")]),
    ("VP", 0.4, &[W(VERB), P("NP")]),
    ("VP", 0.2, &[W(VERB)]),
    ("VP", 0.15, &[W(VERB), P("SBAR")]),
    ("VP", 0.15, &[W(VERB), P("NP"), P("PP")]),
    ("VP", 0.1, &[W(VERB), P("ADJP")]),
    ("PP", 1.0, &[W(PREP), P("NP")]),
    ("ADJP", 0.6, &[W(ADJ)]),
    ("ADJP", 0.4, &[W(ADV), W(ADJ)]),
    ("SBAR", 1.0, &[W(COMP), P("S")]),
];

/// The six phrase labels of [`pcfg_corpus`].
pub const PCFG_LABELS: [&str; 6] = ["S", "NP", "VP", "PP", "ADJP", "SBAR"];

fn expand(rng: &mut ChaCha8Rng, lhs: &str, words: &mut Vec<String>, depth: usize) -> Option<Node> {
    if depth > 6 || words.len() > 16 {
        return None;
    }
    let mut x: f64 = rng.gen();
    let rules: Vec<_> = RULES.iter().filter(|r| r.0 == lhs).collect();
    let rule = rules
        .iter()
        .find(|r| {
            x -= r.1;
            x < 0.0
        })
        .unwrap_or(rules.last().expect("every phrase has a rule"));
    let mut children = Vec::new();
    for sym in rule.2 {
        match sym {
            W(list) => {
                children.push(Child::Word(words.len()));
                words.push(list.choose(rng).expect("non-empty").to_string());
            }
            P(l) => children.push(Child::Node(expand(rng, l, words, depth + 1)?)),
        }
    }
    Some(Node::new(lhs, children).expect("contiguous by construction"))
}

/// `count` sentences sampled from a fixed grammar over six phrase labels,
/// keeping those with `min_len..=max_len` words.
pub fn pcfg_corpus(rng: &mut ChaCha8Rng, count: usize, min_len: usize, max_len: usize) -> Vec<ConstTree> {
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let mut words = Vec::new();
        let Some(root) = expand(rng, "S", &mut words, 0) else {
            continue;
        };
        if (min_len..=max_len).contains(&words.len()) {
            let s = Sentence::new(words).expect("non-empty words");
            out.push(ConstTree::new(s, root).expect("valid tree"));
        }
    }
    out
}

/// `count` sentences of `len` words drawn uniformly from the grammar's
/// vocabulary.
pub fn flat_sentences(rng: &mut ChaCha8Rng, count: usize, len: usize) -> Vec<Sentence> {
    let vocab: Vec<&str> = [DET, NOUN, VERB, PREP, ADJ, ADV, COMP].concat();
    (0..count)
        .map(|_| Sentence::new((0..len).map(|_| *vocab.choose(rng).expect("non-empty"))).expect("positive length"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::treebank::{build_label_vocab, Tree};
    use rand::SeedableRng;

    #[test]
    fn random_trees_respect_shape() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let t = random_tree(&mut rng, TreeShape::default());
            assert!(t.len() <= 15);
            t.root().walk(&mut |n| assert!(n.children.len() <= 5));
        }
    }

    #[test]
    fn grammar_corpus() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let c = pcfg_corpus(&mut rng, 200, 4, 10);
        assert_eq!(c.len(), 200);
        assert!(c.iter().all(|t| (4..=10).contains(&t.len())));
        let v = build_label_vocab(&c).unwrap();
        let mut labels = v.labels().to_vec();
        labels.sort();
        let mut want = PCFG_LABELS.map(String::from).to_vec();
        want.sort();
        assert_eq!(labels, want);
        let mut again = ChaCha8Rng::seed_from_u64(2);
        assert_eq!(pcfg_corpus(&mut again, 200, 4, 10), c);
    }
}
