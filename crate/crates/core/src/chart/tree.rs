use crate::error::{Error, Result};
use crate::treebank::{BinaryTree, Tree};

/// A binary bracketing: all `n` width-1 spans plus `n - 1` wider spans,
/// nested or disjoint, kept in preorder (start ascending, end descending).
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct UnlabeledTree {
    n: usize,
    spans: Vec<(usize, usize)>,
}

fn check_preorder(spans: &[(usize, usize)], pos: &mut usize) -> bool {
    let Some(&(i, j)) = spans.get(*pos) else {
        return false;
    };
    *pos += 1;
    if i == j {
        return true;
    }
    let Some(&(li, lj)) = spans.get(*pos) else {
        return false;
    };
    if li != i || lj >= j || !check_preorder(spans, pos) {
        return false;
    }
    match spans.get(*pos) {
        Some(&(ri, rj)) if ri == lj + 1 && rj == j => check_preorder(spans, pos),
        _ => false,
    }
}

impl UnlabeledTree {
    pub fn new(n: usize, mut spans: Vec<(usize, usize)>) -> Result<Self> {
        if n == 0 {
            return Err(Error::EmptySentence);
        }
        spans.sort_by(|a, b| a.0.cmp(&b.0).then(b.1.cmp(&a.1)));
        let mut pos = 0;
        let ok = spans.len() == 2 * n - 1
            && spans.first() == Some(&(0, n - 1))
            && check_preorder(&spans, &mut pos)
            && pos == spans.len();
        if !ok {
            return Err(Error::InvalidTree(format!(
                "spans {spans:?} are not a binary bracketing of {n} words"
            )));
        }
        Ok(UnlabeledTree { n, spans })
    }

    /// Builds the tree from split points: `split(i, j)` is the last word of
    /// the left child of `(i, j)`.
    pub(crate) fn from_splits(n: usize, mut split: impl FnMut(usize, usize) -> usize) -> Self {
        let mut spans = Vec::with_capacity(2 * n - 1);
        let mut stack = Vec::with_capacity(n);
        stack.push((0, n - 1));
        while let Some((i, j)) = stack.pop() {
            spans.push((i, j));
            if j > i {
                let r = split(i, j);
                debug_assert!(i <= r && r < j);
                stack.push((r + 1, j));
                stack.push((i, r));
            }
        }
        UnlabeledTree { n, spans }
    }

    pub fn spans(&self) -> &[(usize, usize)] {
        &self.spans
    }

    /// Spans of width >= 2.
    pub fn internal(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.spans.iter().copied().filter(|(i, j)| j > i)
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.spans.binary_search_by(|&(a, b)| a.cmp(&i).then(j.cmp(&b))).is_ok()
    }

    /// Number of words.
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }
}

impl From<&BinaryTree> for UnlabeledTree {
    fn from(t: &BinaryTree) -> Self {
        UnlabeledTree::new(t.len(), t.spans()).expect("CNF trees are binary bracketings")
    }
}
