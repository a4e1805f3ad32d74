//! Bracketed constituency trees and grammar production rules.
//!
//! Trees arrive as Penn-Treebank-style bracketed strings, e.g.
//! `(S (NP (PRP He)) (VP (VBD ran)))`. A node either has children
//! (an internal constituent) or a terminal word (a preterminal such
//! as `PRP` over `He`), never both.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A constituency tree node.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum ParseTree {
    /// Internal constituent: label over one or more child nodes.
    Node { label: String, children: Vec<ParseTree> },
    /// Preterminal: POS label over a single terminal word.
    Leaf { label: String, terminal: String },
}

/// One grammar production, `lhs -> rhs...`.
///
/// `lexical` marks bottom-level productions of the form POS -> word;
/// those are derived from preterminals and are excluded from rule
/// extraction and feature counting.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ProductionRule {
    pub lhs: String,
    pub rhs: Vec<String>,
    pub lexical: bool,
}

impl ProductionRule {
    pub fn new(lhs: impl Into<String>, rhs: &[&str]) -> Self {
        ProductionRule {
            lhs: lhs.into(),
            rhs: rhs.iter().map(|s| s.to_string()).collect(),
            lexical: false,
        }
    }
}

impl fmt::Display for ProductionRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ->", self.lhs)?;
        for sym in &self.rhs {
            write!(f, " {sym}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TreeError {
    #[error("unbalanced parentheses at byte {0}")]
    Unbalanced(usize),
    #[error("empty constituent at byte {0}")]
    EmptyConstituent(usize),
    #[error("missing node label at byte {0}")]
    MissingLabel(usize),
    #[error("trailing garbage at byte {0}")]
    TrailingGarbage(usize),
    #[error("unexpected end of input at byte {0}")]
    UnexpectedEnd(usize),
}

impl ParseTree {
    pub fn label(&self) -> &str {
        match self {
            ParseTree::Node { label, .. } | ParseTree::Leaf { label, .. } => label,
        }
    }

    pub fn children(&self) -> &[ParseTree] {
        match self {
            ParseTree::Node { children, .. } => children,
            ParseTree::Leaf { .. } => &[],
        }
    }

    pub fn is_leaf(&self) -> bool {
        matches!(self, ParseTree::Leaf { .. })
    }

    /// Terminal words in left-to-right order.
    pub fn leaves(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.collect_leaves(&mut out);
        out
    }

    fn collect_leaves<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            ParseTree::Leaf { terminal, .. } => out.push(terminal),
            ParseTree::Node { children, .. } => {
                for c in children {
                    c.collect_leaves(out);
                }
            }
        }
    }

    pub fn leaf_count(&self) -> usize {
        match self {
            ParseTree::Leaf { .. } => 1,
            ParseTree::Node { children, .. } => children.iter().map(ParseTree::leaf_count).sum(),
        }
    }

    /// Canonical bracketed form: single spaces, labels verbatim, no newlines.
    pub fn to_bracketed(&self) -> String {
        let mut s = String::new();
        self.write_bracketed(&mut s);
        s
    }

    fn write_bracketed(&self, s: &mut String) {
        match self {
            ParseTree::Leaf { label, terminal } => {
                s.push('(');
                s.push_str(label);
                s.push(' ');
                s.push_str(terminal);
                s.push(')');
            }
            ParseTree::Node { label, children } => {
                s.push('(');
                s.push_str(label);
                for c in children {
                    s.push(' ');
                    c.write_bracketed(s);
                }
                s.push(')');
            }
        }
    }
}

impl fmt::Display for ParseTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_bracketed())
    }
}

/// Parse a bracketed tree string. Whitespace between tokens is free-form;
/// the canonical serialization of the result uses single spaces.
pub fn parse_ptb(input: &str) -> Result<ParseTree, TreeError> {
    let bytes = input.as_bytes();
    let mut pos = 0;
    skip_ws(bytes, &mut pos);
    if pos >= bytes.len() || bytes[pos] != b'(' {
        return Err(TreeError::Unbalanced(pos));
    }
    let tree = parse_node(bytes, &mut pos)?;
    skip_ws(bytes, &mut pos);
    if pos != bytes.len() {
        return Err(TreeError::TrailingGarbage(pos));
    }
    Ok(tree)
}

fn skip_ws(bytes: &[u8], pos: &mut usize) {
    while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
}

/// A bare token: any run of non-whitespace, non-parenthesis bytes.
fn parse_token<'a>(bytes: &'a [u8], pos: &mut usize) -> &'a [u8] {
    let start = *pos;
    while *pos < bytes.len()
        && !bytes[*pos].is_ascii_whitespace()
        && bytes[*pos] != b'('
        && bytes[*pos] != b')'
    {
        *pos += 1;
    }
    &bytes[start..*pos]
}

fn parse_node(bytes: &[u8], pos: &mut usize) -> Result<ParseTree, TreeError> {
    debug_assert_eq!(bytes[*pos], b'(');
    let open_at = *pos;
    *pos += 1;
    skip_ws(bytes, pos);

    let label = parse_token(bytes, pos);
    if label.is_empty() {
        if *pos >= bytes.len() {
            return Err(TreeError::UnexpectedEnd(*pos));
        }
        return Err(TreeError::MissingLabel(*pos));
    }
    let label = String::from_utf8_lossy(label).into_owned();

    let mut children = Vec::new();
    let mut terminal: Option<String> = None;
    loop {
        skip_ws(bytes, pos);
        if *pos >= bytes.len() {
            return Err(TreeError::UnexpectedEnd(*pos));
        }
        match bytes[*pos] {
            b')' => {
                *pos += 1;
                break;
            }
            b'(' => {
                if terminal.is_some() {
                    // mixed terminal + child under one node
                    return Err(TreeError::EmptyConstituent(*pos));
                }
                children.push(parse_node(bytes, pos)?);
            }
            _ => {
                let word = parse_token(bytes, pos);
                if !children.is_empty() || terminal.is_some() {
                    return Err(TreeError::EmptyConstituent(*pos));
                }
                terminal = Some(String::from_utf8_lossy(word).into_owned());
            }
        }
    }

    match (children.is_empty(), terminal) {
        (true, Some(word)) => Ok(ParseTree::Leaf { label, terminal: word }),
        (false, None) => Ok(ParseTree::Node { label, children }),
        (true, None) => Err(TreeError::EmptyConstituent(open_at)),
        (false, Some(_)) => unreachable!("guarded above"),
    }
}

/// Extract the non-lexical production rules of a tree, one per internal
/// node in pre-order. Preterminal productions (POS -> word) are lexical
/// and excluded.
pub fn extract_production_rules(tree: &ParseTree) -> Vec<ProductionRule> {
    let mut out = Vec::new();
    collect_rules(tree, &mut out);
    out
}

fn collect_rules(tree: &ParseTree, out: &mut Vec<ProductionRule>) {
    if let ParseTree::Node { label, children } = tree {
        out.push(ProductionRule {
            lhs: label.clone(),
            rhs: children.iter().map(|c| c.label().to_string()).collect(),
            lexical: false,
        });
        for c in children {
            collect_rules(c, out);
        }
    }
}

impl Serialize for ParseTree {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_bracketed())
    }
}

impl<'de> Deserialize<'de> for ParseTree {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        parse_ptb(&s).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_minimal_two_constituent_tree() {
        let t = parse_ptb("(S (NP (PRP He)) (VP (VBD ran)))").unwrap();
        assert_eq!(t.label(), "S");
        assert_eq!(t.children().len(), 2);
        assert_eq!(t.children()[0].label(), "NP");
        assert_eq!(t.children()[1].label(), "VP");
        assert_eq!(t.leaves(), vec!["He", "ran"]);
    }

    #[test]
    fn parses_single_leaf_tree() {
        let t = parse_ptb("(NP (NNP Beth))").unwrap();
        assert_eq!(t.label(), "NP");
        assert_eq!(t.children().len(), 1);
        assert_eq!(t.children()[0], ParseTree::Leaf {
            label: "NNP".into(),
            terminal: "Beth".into(),
        });
    }

    #[test]
    fn truncated_input_is_an_error() {
        let err = parse_ptb("(S (NP").unwrap_err();
        assert_eq!(err, TreeError::UnexpectedEnd(6));
    }

    #[test]
    fn trailing_garbage_is_an_error_with_offset() {
        let err = parse_ptb("(NP (NNP Beth)) extra").unwrap_err();
        assert_eq!(err, TreeError::TrailingGarbage(16));
    }

    #[test]
    fn empty_constituent_is_an_error() {
        assert!(matches!(parse_ptb("(NP ())"), Err(TreeError::MissingLabel(_))));
        assert!(matches!(parse_ptb("(NP)"), Err(TreeError::EmptyConstituent(0))));
    }

    #[test]
    fn canonicalizes_whitespace() {
        let t = parse_ptb("( S\n  (NP   (PRP He))\t(VP (VBD ran)) )").unwrap();
        assert_eq!(t.to_bracketed(), "(S (NP (PRP He)) (VP (VBD ran)))");
    }

    #[test]
    fn rule_extraction_skips_lexical_rules() {
        // hand enumeration of internal nodes
        let t = parse_ptb("(S (NP (PRP He)) (VP (VBD ran)))").unwrap();
        let rules = extract_production_rules(&t);
        assert_eq!(rules, vec![
            ProductionRule::new("S", &["NP", "VP"]),
            ProductionRule::new("NP", &["PRP"]),
            ProductionRule::new("VP", &["VBD"]),
        ]);
        assert!(rules.iter().all(|r| !r.lexical));
    }

    #[test]
    fn rule_extraction_single_internal_node() {
        let t = parse_ptb("(NP (NNP Beth))").unwrap();
        let rules = extract_production_rules(&t);
        assert_eq!(rules, vec![ProductionRule::new("NP", &["NNP"])]);
    }

    #[test]
    fn kennedy_sentence_contains_basic_structure() {
        let t = parse_ptb(
            "(S (NP (NNP Michael) (NNP Kennedy)) (VP (VBD earned) (NP (NP (DT a) (NN bachelor) \
             (POS 's)) (NN degree)) (PP (IN from) (NP (NNP Harvard) (NNP University))) (PP (IN in) \
             (NP (CD 1980)))))",
        )
        .unwrap();
        let rules = extract_production_rules(&t);
        assert!(rules.contains(&ProductionRule::new("S", &["NP", "VP"])));
    }

    #[test]
    fn rule_count_equals_internal_node_count() {
        let t = parse_ptb("(A (B (C x) (D y)) (E (F (G z))))").unwrap();
        // internal nodes: A, B, E, F
        assert_eq!(extract_production_rules(&t).len(), 4);
    }
}
