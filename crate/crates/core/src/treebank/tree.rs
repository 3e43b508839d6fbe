use std::fmt;

use crate::error::{Error, Result};

/// Marker appended to labels of nodes introduced by binarization.
pub const STAR: char = '*';
/// Separator joining the labels of a collapsed unary chain.
pub const JOIN: char = '+';

/// A tokenized sentence. Tokens never contain whitespace.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Sentence {
    tokens: Vec<String>,
}

impl Sentence {
    pub fn new<I, S>(tokens: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let tokens: Vec<String> = tokens.into_iter().map(Into::into).collect();
        if tokens.is_empty() {
            return Err(Error::EmptySentence);
        }
        for t in &tokens {
            if t.is_empty() || t.chars().any(char::is_whitespace) {
                return Err(Error::InvalidTree(format!("invalid token {t:?}")));
            }
        }
        Ok(Sentence { tokens })
    }

    /// Splits a line on whitespace.
    pub fn from_whitespace(line: &str) -> Result<Self> {
        Self::new(line.split_whitespace())
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

impl fmt::Display for Sentence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.tokens.join(" "))
    }
}

/// A labeled span `(start, end, label)` with inclusive word indices.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Constituent {
    pub start: usize,
    pub end: usize,
    pub label: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Child {
    Word(usize),
    Node(Node),
}

impl Child {
    pub fn start(&self) -> usize {
        match self {
            Child::Word(i) => *i,
            Child::Node(n) => n.start,
        }
    }

    pub fn end(&self) -> usize {
        match self {
            Child::Word(i) => *i,
            Child::Node(n) => n.end,
        }
    }
}

/// An internal tree node. The span is derived from the children and kept
/// consistent by [`Node::new`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Node {
    pub label: String,
    pub start: usize,
    pub end: usize,
    pub children: Vec<Child>,
}

pub(crate) fn check_label(label: &str) -> Result<()> {
    if label.chars().any(|c| c.is_whitespace() || c == '(' || c == ')') {
        return Err(Error::InvalidTree(format!("invalid label {label:?}")));
    }
    Ok(())
}

impl Node {
    /// Builds a node, checking that the children cover a contiguous span in
    /// order.
    pub fn new(label: impl Into<String>, children: Vec<Child>) -> Result<Self> {
        let label = label.into();
        check_label(&label)?;
        let (first, last) = match (children.first(), children.last()) {
            (Some(f), Some(l)) => (f, l),
            _ => return Err(Error::InvalidTree(format!("constituent {label:?} has no children"))),
        };
        let (start, end) = (first.start(), last.end());
        for pair in children.windows(2) {
            if pair[0].end() + 1 != pair[1].start() {
                return Err(Error::InvalidTree(format!("children of {label:?} are not contiguous")));
            }
        }
        Ok(Node {
            label,
            start,
            end,
            children,
        })
    }

    pub fn width(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn is_leaf(&self) -> bool {
        matches!(self.children.as_slice(), [Child::Word(_)])
    }

    /// Preorder traversal over nodes.
    pub fn walk<'a>(&'a self, f: &mut impl FnMut(&'a Node)) {
        f(self);
        for c in &self.children {
            if let Child::Node(n) = c {
                n.walk(f);
            }
        }
    }
}

/// Common view over n-ary and binary trees.
pub trait Tree {
    fn sentence(&self) -> &Sentence;
    fn root(&self) -> &Node;

    /// All constituents in preorder.
    fn constituents(&self) -> Vec<Constituent> {
        let mut out = Vec::new();
        self.root().walk(&mut |n| {
            out.push(Constituent {
                start: n.start,
                end: n.end,
                label: n.label.clone(),
            })
        });
        out
    }

    fn len(&self) -> usize {
        self.sentence().len()
    }

    fn is_empty(&self) -> bool {
        self.sentence().is_empty()
    }
}

fn validate_words(node: &Node, next: &mut usize) -> Result<()> {
    for c in &node.children {
        match c {
            Child::Word(i) => {
                if *i != *next {
                    return Err(Error::InvalidTree(format!("word {i} out of order (expected {next})")));
                }
                *next += 1;
            }
            Child::Node(n) => validate_words(n, next)?,
        }
    }
    Ok(())
}

fn validate_root(sentence: &Sentence, root: &Node) -> Result<()> {
    let mut next = 0;
    validate_words(root, &mut next)?;
    if next != sentence.len() || root.start != 0 || root.end + 1 != sentence.len() {
        return Err(Error::InvalidTree(format!(
            "root covers ({}, {}) but the sentence has {} words",
            root.start,
            root.end,
            sentence.len()
        )));
    }
    Ok(())
}

/// An n-ary constituency tree. Unary chains and arbitrary arity are allowed.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConstTree {
    sentence: Sentence,
    root: Node,
}

impl ConstTree {
    pub fn new(sentence: Sentence, root: Node) -> Result<Self> {
        validate_root(&sentence, &root)?;
        Ok(ConstTree { sentence, root })
    }

    pub fn into_parts(self) -> (Sentence, Node) {
        (self.sentence, self.root)
    }
}

impl Tree for ConstTree {
    fn sentence(&self) -> &Sentence {
        &self.sentence
    }

    fn root(&self) -> &Node {
        &self.root
    }
}

/// A tree in Chomsky normal form: every node is either a width-1 leaf over a
/// single word or has exactly two node children. Such a tree over `n` words
/// has exactly `2n - 1` constituents.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BinaryTree {
    sentence: Sentence,
    root: Node,
}

fn validate_binary(node: &Node) -> Result<()> {
    match node.children.as_slice() {
        [Child::Word(_)] => Ok(()),
        [Child::Node(l), Child::Node(r)] => {
            validate_binary(l)?;
            validate_binary(r)
        }
        _ => Err(Error::InvalidTree(format!(
            "node {:?} over ({}, {}) is not in normal form",
            node.label, node.start, node.end
        ))),
    }
}

impl BinaryTree {
    pub fn new(sentence: Sentence, root: Node) -> Result<Self> {
        validate_root(&sentence, &root)?;
        validate_binary(&root)?;
        Ok(BinaryTree { sentence, root })
    }

    /// Assembles a tree from its `2n - 1` labeled spans, in any order.
    pub fn from_spans(sentence: Sentence, spans: &[Constituent]) -> Result<Self> {
        let n = sentence.len();
        if spans.len() != 2 * n - 1 {
            return Err(Error::InvalidTree(format!(
                "expected {} spans, got {}",
                2 * n - 1,
                spans.len()
            )));
        }
        let mut sorted: Vec<&Constituent> = spans.iter().collect();
        sorted.sort_by(|a, b| a.start.cmp(&b.start).then(b.end.cmp(&a.end)));
        let mut iter = sorted.into_iter().peekable();
        let root = build_preorder(&mut iter)?;
        if iter.next().is_some() {
            return Err(Error::InvalidTree("spans do not form one tree".into()));
        }
        BinaryTree::new(sentence, root)
    }

    pub fn into_parts(self) -> (Sentence, Node) {
        (self.sentence, self.root)
    }

    /// The bracketing, i.e. all spans with labels dropped.
    pub fn spans(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(2 * self.len() - 1);
        self.root.walk(&mut |n| out.push((n.start, n.end)));
        out
    }
}

fn build_preorder<'a, I>(iter: &mut std::iter::Peekable<I>) -> Result<Node>
where
    I: Iterator<Item = &'a Constituent>,
{
    let c = iter.next().ok_or_else(|| Error::InvalidTree("missing span".into()))?;
    if c.start == c.end {
        return Node::new(c.label.clone(), vec![Child::Word(c.start)]);
    }
    let left = build_preorder(iter)?;
    if left.start != c.start || left.end >= c.end {
        return Err(Error::InvalidTree(format!(
            "span ({}, {}) has no valid left child",
            c.start, c.end
        )));
    }
    let right = build_preorder(iter)?;
    if right.start != left.end + 1 || right.end != c.end {
        return Err(Error::InvalidTree(format!(
            "span ({}, {}) has no valid right child",
            c.start, c.end
        )));
    }
    Node::new(c.label.clone(), vec![Child::Node(left), Child::Node(right)])
}

impl Tree for BinaryTree {
    fn sentence(&self) -> &Sentence {
        &self.sentence
    }

    fn root(&self) -> &Node {
        &self.root
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn leaf(label: &str, i: usize) -> Node {
        Node::new(label, vec![Child::Word(i)]).unwrap()
    }

    #[test]
    fn node_requires_contiguous_children() {
        let err = Node::new("X", vec![Child::Node(leaf("A", 0)), Child::Node(leaf("B", 2))]);
        assert!(err.is_err());
        assert!(Node::new("X", vec![]).is_err());
    }

    #[test]
    fn label_with_paren_rejected() {
        assert!(Node::new("N(P", vec![Child::Word(0)]).is_err());
    }

    #[test]
    fn from_spans_roundtrip() {
        let s = Sentence::new(["a", "b", "c"]).unwrap();
        let spans = vec![
            Constituent {
                start: 0,
                end: 2,
                label: "S".into(),
            },
            Constituent {
                start: 2,
                end: 2,
                label: "C".into(),
            },
            Constituent {
                start: 0,
                end: 1,
                label: "X".into(),
            },
            Constituent {
                start: 0,
                end: 0,
                label: "A".into(),
            },
            Constituent {
                start: 1,
                end: 1,
                label: "B".into(),
            },
        ];
        let t = BinaryTree::from_spans(s, &spans).unwrap();
        assert_eq!(t.spans(), vec![(0, 2), (0, 1), (0, 0), (1, 1), (2, 2)]);
        assert_eq!(t.constituents().len(), 5);
    }

    #[test]
    fn from_spans_rejects_crossing() {
        let s = Sentence::new(["a", "b", "c"]).unwrap();
        let spans = vec![
            Constituent {
                start: 0,
                end: 2,
                label: "S".into(),
            },
            Constituent {
                start: 0,
                end: 1,
                label: "X".into(),
            },
            Constituent {
                start: 1,
                end: 2,
                label: "Y".into(),
            },
            Constituent {
                start: 0,
                end: 0,
                label: "A".into(),
            },
            Constituent {
                start: 2,
                end: 2,
                label: "C".into(),
            },
        ];
        assert!(BinaryTree::from_spans(s, &spans).is_err());
    }

    #[test]
    fn sentence_rejects_whitespace_tokens() {
        assert!(Sentence::new(["a b"]).is_err());
        assert!(matches!(Sentence::new(Vec::<String>::new()), Err(Error::EmptySentence)));
    }
}
