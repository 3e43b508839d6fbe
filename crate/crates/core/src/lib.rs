//! A two-stage tree CRF constituency parser.
//!
//! Parsing is split into bracketing and labeling. Bracketing is a tree CRF
//! over binary span structures: the partition function is computed with a
//! width-synchronous inside pass over a batch of span charts, span
//! marginals come from reverse accumulation through that pass, and decoding
//! runs the max-product (CKY) variant of the same recursion. Each span of the
//! chosen bracketing is then labeled independently.
//!
//! Module map:
//!
//! * [`treebank`]: bracketed tree I/O, CNF conversion, label vocabularies and
//!   EVALB-style scoring.
//! * [`chart`]: batched inside, marginals, CKY and MBR decoding.
//! * [`scorer`]: the neural span/label scorer with hand-written gradients.
//! * [`training`]: losses, batching, the optimizer and the epoch loop.
//! * [`oracle`]: brute-force references used by tests and `selfcheck`.
//! * [`parser`]: glue turning a trained model into predicted trees.

pub mod chart;
pub mod error;
pub mod oracle;
pub mod parser;
pub mod scorer;
pub mod synthetic;
pub mod training;
pub mod treebank;

pub use chart::{LabelChart, SpanChart, UnlabeledTree};
pub use error::{Error, Result};

pub use treebank::{BinaryTree, ConstTree, LabelVocab, Prf, Sentence};
