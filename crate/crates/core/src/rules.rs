//! Seed-stage narratology rules: actantial sentence detection against the
//! grammar rule inventory, sentence-type classification, the character
//! rule, and the seed / candidate / negative paragraph predicates.

use std::collections::HashSet;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{EntityChain, NerLabel, ParagraphRecord, SentenceAnnotation, Token};
use crate::tree::{ParseTree, ProductionRule};

/// Labels treated as punctuation constituents. Rule matching skips them:
/// annotated trees attach commas and final periods as clause children,
/// while the inventory productions carry none.
const PUNCT_LABELS: [&str; 9] = [",", ".", ":", ";", "``", "''", "-LRB-", "-RRB-", "HYPH"];

pub fn is_punct_label(label: &str) -> bool {
    PUNCT_LABELS.contains(&label)
}

/// POS tags counted as verbs when finding the head of a VP.
const VERB_TAGS: [&str; 7] = ["VB", "VBD", "VBG", "VBN", "VBP", "VBZ", "MD"];

/// The grammar rule inventory: top-level sentence productions plus
/// subject noun-phrase productions. The builtin inventory carries the
/// 14 sentence rules and 12 NP rules shipped in `resources/`.
#[derive(Debug, Clone)]
pub struct RuleInventory {
    sentence_rules: HashSet<Vec<String>>,
    np_rules: HashSet<Vec<String>>,
}

#[derive(Debug, Error)]
pub enum InventoryError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: expected \"LHS -> RHS...\", got {text:?}")]
    Malformed { line: usize, text: String },
    #[error("line {line}: unsupported LHS {lhs:?} (expected S or NP)")]
    UnsupportedLhs { line: usize, lhs: String },
    #[error("inventory has no sentence rules")]
    Empty,
}

const BUILTIN_RULES: &str = include_str!("../resources/grammar_rules.txt");

impl RuleInventory {
    /// The bundled inventory: exactly 14 sentence rules and 12 NP rules.
    pub fn builtin() -> Self {
        let inv = Self::parse(BUILTIN_RULES).expect("bundled inventory parses");
        debug_assert_eq!(inv.sentence_rules.len(), 14);
        debug_assert_eq!(inv.np_rules.len(), 12);
        inv
    }

    /// Parse an inventory listing, one `LHS -> RHS...` per line.
    /// `#` comments and blank lines are ignored.
    pub fn parse(text: &str) -> Result<Self, InventoryError> {
        let mut sentence_rules = HashSet::new();
        let mut np_rules = HashSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (lhs, rhs) = line.split_once("->").ok_or_else(|| InventoryError::Malformed {
                line: i + 1,
                text: line.to_string(),
            })?;
            let lhs = lhs.trim();
            let rhs: Vec<String> = rhs.split_whitespace().map(str::to_string).collect();
            if rhs.is_empty() {
                return Err(InventoryError::Malformed { line: i + 1, text: line.to_string() });
            }
            match lhs {
                "S" => sentence_rules.insert(rhs),
                "NP" => np_rules.insert(rhs),
                other => {
                    return Err(InventoryError::UnsupportedLhs {
                        line: i + 1,
                        lhs: other.to_string(),
                    })
                }
            };
        }
        if sentence_rules.is_empty() {
            return Err(InventoryError::Empty);
        }
        Ok(RuleInventory { sentence_rules, np_rules })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, InventoryError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn sentence_rule_count(&self) -> usize {
        self.sentence_rules.len()
    }

    pub fn np_rule_count(&self) -> usize {
        self.np_rules.len()
    }

    pub fn matches_sentence_rule(&self, rhs: &[String]) -> bool {
        self.sentence_rules.contains(rhs)
    }

    pub fn matches_np_rule(&self, rhs: &[String]) -> bool {
        self.np_rules.contains(rhs)
    }

    pub fn sentence_rules(&self) -> impl Iterator<Item = ProductionRule> + '_ {
        let mut rules: Vec<_> = self.sentence_rules.iter().cloned().collect();
        rules.sort();
        rules.into_iter().map(|rhs| ProductionRule {
            lhs: "S".into(),
            rhs,
            lexical: false,
        })
    }

    pub fn np_rules(&self) -> impl Iterator<Item = ProductionRule> + '_ {
        let mut rules: Vec<_> = self.np_rules.iter().cloned().collect();
        rules.sort();
        rules.into_iter().map(|rhs| ProductionRule {
            lhs: "NP".into(),
            rhs,
            lexical: false,
        })
    }
}

/// Sentence type. Exactly one class per sentence, with precedence
/// DIALOGUE > INTERROGATIVE > EXCLAMATORY > DECLARATIVE.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SentenceClass {
    Declarative,
    Interrogative,
    Exclamatory,
    Dialogue,
}

impl SentenceClass {
    pub fn is_declarative(self) -> bool {
        self == SentenceClass::Declarative
    }
}

fn is_quote_token(text: &str) -> bool {
    matches!(text, "\"" | "``" | "''" | "\u{201C}" | "\u{201D}")
}

/// Classify a sentence from its token sequence.
///
/// DIALOGUE when at least half of the tokens lie inside paired quotation
/// marks (counting the marks) or the sentence both starts and ends with a
/// quote token; otherwise INTERROGATIVE / EXCLAMATORY by the final
/// non-quote token; otherwise DECLARATIVE.
pub fn classify_sentence(sentence: &SentenceAnnotation) -> SentenceClass {
    let tokens = &sentence.tokens;
    if tokens.is_empty() {
        return SentenceClass::Declarative;
    }

    let quoted = quoted_token_count(tokens);
    let starts_and_ends_quoted = tokens.len() >= 2
        && is_quote_token(&tokens[0].text)
        && is_quote_token(&tokens[tokens.len() - 1].text);
    if starts_and_ends_quoted || 2 * quoted >= tokens.len() {
        return SentenceClass::Dialogue;
    }

    match tokens.iter().rev().find(|t| !is_quote_token(&t.text)).map(|t| t.text.as_str()) {
        Some("?") => SentenceClass::Interrogative,
        Some("!") => SentenceClass::Exclamatory,
        _ => SentenceClass::Declarative,
    }
}

/// Number of tokens covered by balanced quote pairs, marks inclusive.
/// An unclosed trailing quote contributes nothing.
fn quoted_token_count(tokens: &[Token]) -> usize {
    let mut covered = 0;
    let mut open: Option<usize> = None;
    for (i, tok) in tokens.iter().enumerate() {
        if is_quote_token(&tok.text) {
            match open {
                None => open = Some(i),
                Some(start) => {
                    covered += i - start + 1;
                    open = None;
                }
            }
        }
    }
    covered
}

/// Child labels of a node with punctuation constituents removed.
fn expansion(node: &ParseTree) -> Vec<String> {
    node.children()
        .iter()
        .map(|c| c.label().to_string())
        .filter(|l| !is_punct_label(l))
        .collect()
}

/// Strip a ROOT/TOP wrapper with a single child.
pub fn unwrap_root(tree: &ParseTree) -> &ParseTree {
    match tree {
        ParseTree::Node { label, children }
            if children.len() == 1 && (label == "ROOT" || label == "TOP") =>
        {
            &children[0]
        }
        _ => tree,
    }
}

/// The head verb of a VP: the first verb-tagged preterminal among the
/// VP's direct children, with its leaf offset inside the VP. None when
/// no direct child is a verb preterminal.
pub fn head_verb(vp: &ParseTree) -> Option<(&str, &str, usize)> {
    let mut leaf_offset = 0;
    for child in vp.children() {
        if let ParseTree::Leaf { label, terminal } = child {
            if VERB_TAGS.contains(&label.as_str()) {
                return Some((label, terminal, leaf_offset));
            }
        }
        leaf_offset += child.leaf_count();
    }
    None
}

/// Resolve the head verb of a VP to the sentence token it covers.
/// `vp_leaf_start` is the index of the VP's first leaf in the sentence.
pub fn head_verb_token<'a>(
    vp: &ParseTree,
    vp_leaf_start: usize,
    tokens: &'a [Token],
) -> Option<&'a Token> {
    head_verb(vp).and_then(|(_, _, offset)| tokens.get(vp_leaf_start + offset))
}

/// Whether a sentence has the actantial structure: its top-level clause
/// expansion matches a sentence rule, the subject NP expansion matches an
/// NP rule, and the head verb of the main VP is past tense (VBD).
/// Conjunction rules (no VP on the right-hand side) check each S conjunct
/// independently and accept if any conjunct is actantial.
pub fn is_actantial(sentence: &SentenceAnnotation, inventory: &RuleInventory) -> bool {
    clause_is_actantial(unwrap_root(&sentence.tree), inventory)
}

fn clause_is_actantial(clause: &ParseTree, inventory: &RuleInventory) -> bool {
    if clause.label() != "S" {
        return false;
    }
    let exp = expansion(clause);
    if !inventory.matches_sentence_rule(&exp) {
        return false;
    }
    if !exp.iter().any(|l| l == "VP") {
        // conjunction rule: check each S conjunct on its own
        return clause
            .children()
            .iter()
            .filter(|c| c.label() == "S")
            .any(|c| clause_is_actantial(c, inventory));
    }

    let subject = match clause.children().iter().find(|c| c.label() == "NP") {
        Some(np) => np,
        None => return false,
    };
    if !inventory.matches_np_rule(&expansion(subject)) {
        return false;
    }

    let vp = match clause.children().iter().find(|c| c.label() == "VP") {
        Some(vp) => vp,
        None => return false,
    };
    matches!(head_verb(vp), Some(("VBD", _, _)))
}

/// Chains qualifying for the character rule: at least one mention that is
/// a Person, an Organization, or a gendered pronoun. Sorted longest
/// first, ties by ascending chain id.
pub fn qualifying_chains(paragraph: &ParagraphRecord) -> Vec<&EntityChain> {
    let mut chains: Vec<&EntityChain> = paragraph
        .chains
        .iter()
        .filter(|c| chain_qualifies(c))
        .collect();
    chains.sort_by(|a, b| {
        b.mentions
            .len()
            .cmp(&a.mentions.len())
            .then(a.chain_id.cmp(&b.chain_id))
    });
    chains
}

pub fn chain_qualifies(chain: &EntityChain) -> bool {
    chain.mentions.iter().any(|m| {
        m.gendered_pronoun || matches!(m.ner_label, NerLabel::Person | NerLabel::Organization)
    })
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("cannot normalize a chain length over zero sentences")]
pub struct ZeroSentences;

/// Normalized chain length: mention count divided by sentence count.
/// May exceed 1 when a chain is mentioned more than once per sentence.
pub fn chain_norm_length(chain: &EntityChain, n_sentences: usize) -> Result<f64, ZeroSentences> {
    if n_sentences == 0 {
        return Err(ZeroSentences);
    }
    Ok(chain.mentions.len() as f64 / n_sentences as f64)
}

/// Per-paragraph measurements feeding the seed/candidate/negative rules.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParagraphProfile {
    pub n_sentences: usize,
    pub actantial_fraction: f64,
    pub non_declarative_fraction: f64,
    /// Normalized length of the longest qualifying chain; 0 when none.
    pub longest_chain_norm: f64,
}

impl fmt::Display for ParagraphProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "n={} actantial={:.3} non_decl={:.3} chain={:.3}",
            self.n_sentences,
            self.actantial_fraction,
            self.non_declarative_fraction,
            self.longest_chain_norm
        )
    }
}

pub fn profile_paragraph(paragraph: &ParagraphRecord, inventory: &RuleInventory) -> ParagraphProfile {
    let n = paragraph.sentences.len();
    let actantial = paragraph
        .sentences
        .iter()
        .filter(|s| is_actantial(s, inventory))
        .count();
    let non_declarative = paragraph
        .sentences
        .iter()
        .filter(|s| !classify_sentence(s).is_declarative())
        .count();
    let longest_chain_norm = qualifying_chains(paragraph)
        .first()
        .map(|c| c.mentions.len() as f64 / n as f64)
        .unwrap_or(0.0);
    ParagraphProfile {
        n_sentences: n,
        actantial_fraction: if n == 0 { 0.0 } else { actantial as f64 / n as f64 },
        non_declarative_fraction: if n == 0 { 0.0 } else { non_declarative as f64 / n as f64 },
        longest_chain_norm,
    }
}

/// Seed narrative: at least four sentences, 60%+ actantial, at most 20%
/// non-declarative, longest qualifying chain spanning 40%+ of sentences.
/// All bounds inclusive.
pub fn is_seed_narrative(p: &ParagraphProfile) -> bool {
    p.n_sentences >= 4
        && p.actantial_fraction >= 0.6
        && p.non_declarative_fraction <= 0.2
        && p.longest_chain_norm >= 0.4
}

/// Classifier candidate: the seed constraints with the actantial and
/// chain thresholds halved.
pub fn is_candidate(p: &ParagraphProfile) -> bool {
    p.n_sentences >= 4
        && p.non_declarative_fraction <= 0.2
        && p.actantial_fraction >= 0.3
        && p.longest_chain_norm >= 0.2
}

/// Seed-stage negative: same shape constraints but with 30% or fewer
/// actantial sentences and the longest chain spanning at most 20%.
pub fn is_seed_negative(p: &ParagraphProfile) -> bool {
    p.n_sentences >= 4
        && p.non_declarative_fraction <= 0.2
        && p.actantial_fraction <= 0.3
        && p.longest_chain_norm <= 0.2
}
