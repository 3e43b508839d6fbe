//! Conversion between n-ary trees and Chomsky normal form.
//!
//! Forward direction: every maximal unary chain `X -> Y -> ... -> Z` over one
//! span is collapsed into a single node `X+Y+...+Z`; then every node with more
//! than two children is binarized, the new intermediate nodes taking the
//! parent label with a trailing `*`. Words that share a parent with other
//! children are wrapped in a `*` leaf of that parent so that every word owns a
//! width-1 constituent.
//!
//! The reverse direction dissolves every `*` node whatever its base label,
//! which tolerates inconsistent predictions such as `VP -> PP* NP`.

use serde::{Deserialize, Serialize};

use super::tree::{BinaryTree, Child, ConstTree, Node, Tree, JOIN, STAR};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    #[default]
    Left,
    Right,
}

impl std::str::FromStr for Direction {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "left" => Ok(Direction::Left),
            "right" => Ok(Direction::Right),
            _ => Err(format!("unknown binarization direction `{s}`")),
        }
    }
}

fn starred(label: &str) -> String {
    let mut s = String::with_capacity(label.len() + 1);
    s.push_str(label);
    s.push(STAR);
    s
}

fn collapse(mut node: Node) -> Node {
    while let [Child::Node(_)] = node.children.as_slice() {
        let Some(Child::Node(child)) = node.children.pop() else {
            unreachable!()
        };
        node.label.push(JOIN);
        node.label.push_str(&child.label);
        node.children = child.children;
    }
    node
}

fn pair(label: &str, left: Node, right: Node) -> Node {
    Node {
        label: label.to_string(),
        start: left.start,
        end: right.end,
        children: vec![Child::Node(left), Child::Node(right)],
    }
}

fn binarize_node(node: Node, direction: Direction) -> Node {
    let node = collapse(node);
    if node.is_leaf() {
        return node;
    }
    let star = starred(&node.label);
    let mut kids: Vec<Node> = node
        .children
        .into_iter()
        .map(|c| match c {
            Child::Word(i) => Node {
                label: star.clone(),
                start: i,
                end: i,
                children: vec![Child::Word(i)],
            },
            Child::Node(n) => binarize_node(n, direction),
        })
        .collect();
    debug_assert!(kids.len() >= 2);
    let (a, b) = match direction {
        Direction::Left => {
            let last = kids.pop().expect("two children");
            let mut acc = kids.remove(0);
            for k in kids {
                acc = pair(&star, acc, k);
            }
            (acc, last)
        }
        Direction::Right => {
            let first = kids.remove(0);
            let mut acc = kids.pop().expect("two children");
            while let Some(k) = kids.pop() {
                acc = pair(&star, k, acc);
            }
            (first, acc)
        }
    };
    pair(&node.label, a, b)
}

pub fn binarize_cnf(tree: &ConstTree, direction: Direction) -> BinaryTree {
    let root = binarize_node(tree.root().clone(), direction);
    BinaryTree::new(tree.sentence().clone(), root).expect("binarization yields a CNF tree")
}

fn is_starred(label: &str) -> bool {
    label.ends_with(STAR)
}

fn expand(node: &Node, out: &mut Vec<Child>) {
    let mut children = Vec::with_capacity(node.children.len());
    for c in &node.children {
        match c {
            Child::Word(i) => children.push(Child::Word(*i)),
            Child::Node(n) => expand(n, &mut children),
        }
    }
    if is_starred(&node.label) {
        out.extend(children);
        return;
    }
    out.push(Child::Node(unchain(&node.label, children)));
}

fn unchain(label: &str, children: Vec<Child>) -> Node {
    let mut parts: Vec<&str> = label.split(JOIN).collect();
    let innermost = parts.pop().unwrap_or_default();
    let mut node = Node::new(innermost, children).expect("valid subtree");
    while let Some(p) = parts.pop() {
        node = Node::new(p, vec![Child::Node(node)]).expect("valid chain");
    }
    node
}

/// Recovers the n-ary tree. A starred root keeps its base label.
pub fn debinarize<T: Tree + ?Sized>(tree: &T) -> ConstTree {
    let root = tree.root();
    let mut children = Vec::new();
    for c in &root.children {
        match c {
            Child::Word(i) => children.push(Child::Word(*i)),
            Child::Node(n) => expand(n, &mut children),
        }
    }
    let label = root.label.trim_end_matches(STAR);
    let node = unchain(label, children);
    ConstTree::new(tree.sentence().clone(), node).expect("debinarization preserves coverage")
}
