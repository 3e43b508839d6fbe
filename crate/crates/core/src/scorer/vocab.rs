use std::collections::HashMap;

use serde::{Deserialize, Serialize};

pub const PAD: usize = 0;
pub const UNK: usize = 1;

const PAD_TOKEN: &str = "<pad>";
const UNK_TOKEN: &str = "<unk>";

/// Word or character vocabulary. Index 0 is padding and index 1 stands for
/// anything unseen.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct TokenVocab {
    items: Vec<String>,
    index: HashMap<String, usize>,
}

impl Default for TokenVocab {
    fn default() -> Self {
        TokenVocab::from(Vec::new())
    }
}

impl From<Vec<String>> for TokenVocab {
    /// Rebuilds a saved vocabulary. The reserved entries are added in front
    /// when missing.
    fn from(items: Vec<String>) -> Self {
        let mut v = TokenVocab {
            items: vec![PAD_TOKEN.to_string(), UNK_TOKEN.to_string()],
            index: HashMap::new(),
        };
        v.index.insert(PAD_TOKEN.to_string(), PAD);
        v.index.insert(UNK_TOKEN.to_string(), UNK);
        for s in items {
            v.insert(&s);
        }
        v
    }
}

impl From<TokenVocab> for Vec<String> {
    fn from(v: TokenVocab) -> Self {
        v.items
    }
}

impl TokenVocab {
    pub fn insert(&mut self, item: &str) -> usize {
        if let Some(&i) = self.index.get(item) {
            return i;
        }
        let i = self.items.len();
        self.items.push(item.to_string());
        self.index.insert(item.to_string(), i);
        i
    }

    /// Index of `item`, or [`UNK`].
    pub fn lookup(&self, item: &str) -> usize {
        self.index.get(item).copied().unwrap_or(UNK)
    }

    pub fn item(&self, i: usize) -> &str {
        &self.items[i]
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Word vocabulary over the tokens of `sentences`, in first-appearance
    /// order.
    pub fn words<'a>(sentences: impl IntoIterator<Item = &'a [String]>) -> Self {
        let mut v = TokenVocab::default();
        for s in sentences {
            for w in s {
                v.insert(w);
            }
        }
        v
    }

    /// Character vocabulary over the same tokens.
    pub fn chars<'a>(sentences: impl IntoIterator<Item = &'a [String]>) -> Self {
        let mut v = TokenVocab::default();
        let mut buf = [0u8; 4];
        for s in sentences {
            for w in s {
                for c in w.chars() {
                    v.insert(c.encode_utf8(&mut buf));
                }
            }
        }
        v
    }

    /// Character indices of `word`.
    pub fn encode_chars(&self, word: &str) -> Vec<usize> {
        let mut buf = [0u8; 4];
        word.chars().map(|c| self.lookup(c.encode_utf8(&mut buf))).collect()
    }
}
