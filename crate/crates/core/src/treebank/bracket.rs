//! Single-line bracketed (S-expression) tree format.

use crate::error::{Error, Result};

use super::tree::{Child, ConstTree, Node, Sentence, Tree};

#[derive(Debug, Clone, PartialEq)]
enum Tok<'a> {
    Open,
    Close,
    Atom(&'a str),
}

fn tokenize(text: &str) -> Vec<(usize, Tok<'_>)> {
    let mut out = Vec::new();
    let mut chars = text.char_indices().enumerate().peekable();
    while let Some((pos, (byte, c))) = chars.next() {
        match c {
            '(' => out.push((pos, Tok::Open)),
            ')' => out.push((pos, Tok::Close)),
            c if c.is_whitespace() => {}
            _ => {
                let mut end = byte + c.len_utf8();
                while let Some(&(_, (b, c2))) = chars.peek() {
                    if c2 == '(' || c2 == ')' || c2.is_whitespace() {
                        break;
                    }
                    end = b + c2.len_utf8();
                    chars.next();
                }
                out.push((pos, Tok::Atom(&text[byte..end])));
            }
        }
    }
    out
}

pub fn unescape_token(tok: &str) -> &str {
    match tok {
        "-LRB-" => "(",
        "-RRB-" => ")",
        t => t,
    }
}

pub fn escape_token(tok: &str) -> &str {
    match tok {
        "(" => "-LRB-",
        ")" => "-RRB-",
        t => t,
    }
}

struct Parser<'a> {
    toks: Vec<(usize, Tok<'a>)>,
    pos: usize,
    end_offset: usize,
    words: Vec<String>,
}

impl<'a> Parser<'a> {
    fn offset(&self) -> usize {
        self.toks.get(self.pos).map(|(o, _)| *o).unwrap_or(self.end_offset)
    }

    fn err<T>(&self, message: impl Into<String>) -> Result<T> {
        Err(Error::Parse {
            offset: self.offset(),
            message: message.into(),
        })
    }

    fn node(&mut self) -> Result<Node> {
        match self.toks.get(self.pos) {
            Some((_, Tok::Open)) => self.pos += 1,
            _ => return self.err("expected `(`"),
        }
        let label = match self.toks.get(self.pos) {
            Some((_, Tok::Atom(a))) => {
                self.pos += 1;
                a.to_string()
            }
            _ => String::new(),
        };
        let open_offset = self.offset();
        let mut children = Vec::new();
        loop {
            match self.toks.get(self.pos).cloned() {
                Some((_, Tok::Close)) => {
                    self.pos += 1;
                    break;
                }
                Some((_, Tok::Open)) => children.push(Child::Node(self.node()?)),
                Some((_, Tok::Atom(w))) => {
                    self.pos += 1;
                    children.push(Child::Word(self.words.len()));
                    self.words.push(unescape_token(w).to_string());
                }
                None => return self.err("unexpected end of input"),
            }
        }
        if children.is_empty() {
            return Err(Error::Parse {
                offset: open_offset,
                message: format!("empty constituent {label:?}"),
            });
        }
        Node::new(label, children).map_err(|e| Error::Parse {
            offset: open_offset,
            message: e.to_string(),
        })
    }
}

/// Parses one bracketed tree such as `(S (NP I) (VP love (NP this game)))`.
///
/// Every node, including a layer of preterminals if present, is kept; see
/// [`super::io`] for treebank-level preprocessing. `-LRB-`/`-RRB-` tokens are
/// read as `(`/`)`.
pub fn parse_bracketed(text: &str) -> Result<ConstTree> {
    let mut p = Parser {
        toks: tokenize(text),
        pos: 0,
        end_offset: text.chars().count(),
        words: Vec::new(),
    };
    let root = p.node()?;
    if p.pos != p.toks.len() {
        return p.err("trailing input after tree");
    }
    let sentence = Sentence::new(std::mem::take(&mut p.words)).map_err(|_| Error::Parse {
        offset: 0,
        message: "tree has no words".into(),
    })?;
    ConstTree::new(sentence, root)
}

fn render_node(node: &Node, words: &[String], out: &mut String) {
    out.push('(');
    out.push_str(&node.label);
    for c in &node.children {
        out.push(' ');
        match c {
            Child::Word(i) => out.push_str(escape_token(&words[*i])),
            Child::Node(n) => render_node(n, words, out),
        }
    }
    out.push(')');
}

/// Renders any tree on a single line.
pub fn render_bracketed<T: Tree + ?Sized>(tree: &T) -> String {
    let mut out = String::new();
    render_node(tree.root(), tree.sentence().tokens(), &mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const FIG1A: &str = "(S (NP I) (ADVP really) (VP love (NP this game)))";

    #[test]
    fn figure_tree() {
        let t = parse_bracketed(FIG1A).unwrap();
        assert_eq!(t.len(), 5);
        let spans: Vec<_> = t
            .constituents()
            .into_iter()
            .map(|c| (c.start, c.end, c.label))
            .collect();
        assert_eq!(
            spans,
            vec![
                (0, 4, "S".to_string()),
                (0, 0, "NP".to_string()),
                (1, 1, "ADVP".to_string()),
                (2, 4, "VP".to_string()),
                (3, 4, "NP".to_string()),
            ]
        );
        assert_eq!(render_bracketed(&t), FIG1A);
    }

    #[test]
    fn single_word() {
        let t = parse_bracketed("(X w)").unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t.root().label, "X");
        assert_eq!((t.root().start, t.root().end), (0, 0));
        assert_eq!(render_bracketed(&t), "(X w)");
    }

    #[test]
    fn truncated_input_reports_offset() {
        match parse_bracketed("(S (NP I") {
            Err(Error::Parse { offset, .. }) => assert_eq!(offset, 8),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_inputs() {
        assert!(parse_bracketed("(S (NP I)))").is_err());
        assert!(parse_bracketed("(S (NP) x)").is_err());
        assert!(parse_bracketed("(S)").is_err());
        assert!(parse_bracketed("").is_err());
        assert!(parse_bracketed("w").is_err());
    }

    #[test]
    fn empty_root_label_and_whitespace() {
        let t = parse_bracketed("( (S (NP a)\n  (VP b)) )").unwrap();
        assert_eq!(t.root().label, "");
        assert_eq!(render_bracketed(&t), "( (S (NP a) (VP b)))");
    }

    #[test]
    fn parens_escaped() {
        let t = parse_bracketed("(S (P -LRB-) (X a) (P -RRB-))").unwrap();
        assert_eq!(t.sentence().tokens()[0], "(");
        assert_eq!(render_bracketed(&t), "(S (P -LRB-) (X a) (P -RRB-))");
    }
}
