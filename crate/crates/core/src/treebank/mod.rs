//! Constituency trees: bracketed I/O, CNF conversion, label vocabularies and
//! evaluation.

mod bracket;
mod cnf;
mod evalb;
pub mod io;
mod tree;
mod vocab;

pub use bracket::{escape_token, parse_bracketed, render_bracketed, unescape_token};
pub use cnf::{binarize_cnf, debinarize, Direction};
pub use evalb::{evalb_score, EvalParams, Prf};
pub use io::{strip_empties, Preterminals, ReadOptions};
pub use tree::{BinaryTree, Child, ConstTree, Constituent, Node, Sentence, Tree, JOIN, STAR};
pub use vocab::{build_label_vocab, LabelVocab};
