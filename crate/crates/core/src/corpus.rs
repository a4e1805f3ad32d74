//! Annotated-corpus data model and JSON Lines reader/writer.
//!
//! A corpus file holds one document per line. Each document carries
//! paragraphs of sentence annotations (tokens with POS and lemma, plus a
//! bracketed constituency tree) and entity coreference chains whose
//! mentions are indexed within the paragraph. All types are immutable
//! after loading and safe to share across threads.

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tree::ParseTree;

/// One token of a sentence: surface form, Penn Treebank POS tag, lemma.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub text: String,
    pub pos: String,
    /// Lowercased base form; falls back to the lowercased surface form
    /// when the input omits it.
    pub lemma: String,
    /// 0-based position in the sentence.
    pub index: usize,
}

/// Named-entity label carried on a chain mention.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum NerLabel {
    Person,
    Organization,
    Other,
    None,
}

/// One mention of an entity chain, spanning tokens of one sentence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EntityMention {
    pub sentence_index: usize,
    /// Inclusive token span (start, end) within the sentence.
    pub token_span: (usize, usize),
    pub ner_label: NerLabel,
    pub gendered_pronoun: bool,
}

/// A coreference chain: all mentions of one entity within a paragraph,
/// sorted by (sentence index, span start).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EntityChain {
    pub chain_id: u64,
    pub mentions: Vec<EntityMention>,
}

/// Gendered pronouns recognized by the character rule (case-insensitive).
pub const GENDERED_PRONOUNS: [&str; 6] = ["he", "him", "his", "she", "her", "hers"];

pub fn is_gendered_pronoun(word: &str) -> bool {
    GENDERED_PRONOUNS.iter().any(|p| word.eq_ignore_ascii_case(p))
}

/// One sentence with its token list and constituency tree.
#[derive(Debug, Clone, PartialEq)]
pub struct SentenceAnnotation {
    pub tokens: Vec<Token>,
    pub tree: ParseTree,
    pub raw_text: String,
}

/// A paragraph: the unit of narrative classification.
#[derive(Debug, Clone, PartialEq)]
pub struct ParagraphRecord {
    pub doc_id: String,
    pub paragraph_index: usize,
    pub sentences: Vec<SentenceAnnotation>,
    pub chains: Vec<EntityChain>,
}

impl ParagraphRecord {
    pub fn id(&self) -> ParaId {
        ParaId::new(&self.doc_id, self.paragraph_index)
    }
}

/// A document: ordered paragraphs sharing one `doc_id`.
#[derive(Debug, Clone, PartialEq)]
pub struct DocumentRecord {
    pub doc_id: String,
    pub paragraphs: Vec<ParagraphRecord>,
}

/// Stable paragraph identifier, rendered `doc_id#index`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParaId(pub String);

impl ParaId {
    pub fn new(doc_id: &str, paragraph_index: usize) -> Self {
        ParaId(format!("{doc_id}#{paragraph_index}"))
    }
}

impl fmt::Display for ParaId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: malformed JSON: {source}")]
    Json { line: usize, source: serde_json::Error },
    #[error("line {line}, doc {doc_id}: {detail}")]
    Validation { line: usize, doc_id: String, detail: String },
}

impl CorpusError {
    /// Validation and JSON errors are record-level and may be skipped;
    /// IO errors always abort the stream.
    pub fn is_record_level(&self) -> bool {
        !matches!(self, CorpusError::Io(_))
    }
}

// Wire format, field names normative. Unknown fields are ignored.

#[derive(Serialize, Deserialize)]
struct DocumentWire {
    doc_id: String,
    paragraphs: Vec<ParagraphWire>,
}

#[derive(Serialize, Deserialize)]
struct ParagraphWire {
    sentences: Vec<SentenceWire>,
    #[serde(default)]
    chains: Vec<ChainWire>,
}

#[derive(Serialize, Deserialize)]
struct SentenceWire {
    #[serde(default)]
    text: String,
    tokens: Vec<TokenWire>,
    tree: String,
}

#[derive(Serialize, Deserialize)]
struct TokenWire {
    t: String,
    pos: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    lemma: Option<String>,
}

#[derive(Serialize, Deserialize)]
struct ChainWire {
    id: u64,
    mentions: Vec<MentionWire>,
}

#[derive(Serialize, Deserialize)]
struct MentionWire {
    sent: usize,
    start: usize,
    end: usize,
    ner: NerLabel,
    #[serde(default)]
    gendered_pronoun: bool,
}

fn pos_tag_is_valid(pos: &str) -> bool {
    !pos.is_empty()
        && pos.chars().all(|c| {
            c.is_ascii_uppercase() || matches!(c, '$' | '.' | ',' | ':' | ';' | '`' | '\'' | '#' | '-')
        })
}

fn build_document(wire: DocumentWire, line: usize) -> Result<DocumentRecord, CorpusError> {
    let doc_id = wire.doc_id.clone();
    let err_doc_id = if doc_id.is_empty() { "<unknown>".to_string() } else { doc_id.clone() };
    let fail = move |detail: String| CorpusError::Validation {
        line,
        doc_id: err_doc_id.clone(),
        detail,
    };
    let mut paragraphs = Vec::with_capacity(wire.paragraphs.len());
    for (p_idx, pw) in wire.paragraphs.into_iter().enumerate() {
        if pw.sentences.is_empty() {
            return Err(fail(format!("paragraph {p_idx} has no sentences")));
        }
        let mut sentences = Vec::with_capacity(pw.sentences.len());
        for (s_idx, sw) in pw.sentences.into_iter().enumerate() {
            let tree = crate::tree::parse_ptb(&sw.tree).map_err(|e| {
                fail(format!("paragraph {p_idx} sentence {s_idx}: bad tree: {e}"))
            })?;
            let tokens: Vec<Token> = sw
                .tokens
                .into_iter()
                .enumerate()
                .map(|(i, tw)| Token {
                    lemma: tw.lemma.unwrap_or_else(|| tw.t.to_lowercase()),
                    text: tw.t,
                    pos: tw.pos,
                    index: i,
                })
                .collect();
            for tok in &tokens {
                if !pos_tag_is_valid(&tok.pos) {
                    return Err(fail(format!(
                        "paragraph {p_idx} sentence {s_idx}: invalid POS tag {:?}",
                        tok.pos
                    )));
                }
            }
            let leaves = tree.leaves();
            if leaves.len() != tokens.len()
                || leaves.iter().zip(&tokens).any(|(l, t)| *l != t.text)
            {
                return Err(fail(format!(
                    "paragraph {p_idx} sentence {s_idx}: tree leaves do not match tokens"
                )));
            }
            sentences.push(SentenceAnnotation { tokens, tree, raw_text: sw.text });
        }

        let mut chains = Vec::with_capacity(pw.chains.len());
        for cw in pw.chains {
            if cw.mentions.is_empty() {
                return Err(fail(format!(
                    "paragraph {p_idx} chain {}: no mentions",
                    cw.id
                )));
            }
            let mut mentions = Vec::with_capacity(cw.mentions.len());
            for mw in cw.mentions {
                let sent = sentences.get(mw.sent).ok_or_else(|| {
                    fail(format!(
                        "paragraph {p_idx} chain {}: mention sentence {} out of range",
                        cw.id, mw.sent
                    ))
                })?;
                if mw.start > mw.end || mw.end >= sent.tokens.len() {
                    return Err(fail(format!(
                        "paragraph {p_idx} chain {}: mention span {}..{} outside sentence {}",
                        cw.id, mw.start, mw.end, mw.sent
                    )));
                }
                mentions.push(EntityMention {
                    sentence_index: mw.sent,
                    token_span: (mw.start, mw.end),
                    ner_label: mw.ner,
                    gendered_pronoun: mw.gendered_pronoun,
                });
            }
            let sorted = mentions
                .windows(2)
                .all(|w| (w[0].sentence_index, w[0].token_span.0) <= (w[1].sentence_index, w[1].token_span.0));
            if !sorted {
                return Err(fail(format!(
                    "paragraph {p_idx} chain {}: mentions not sorted by (sentence, start)",
                    cw.id
                )));
            }
            chains.push(EntityChain { chain_id: cw.id, mentions });
        }

        paragraphs.push(ParagraphRecord {
            doc_id: doc_id.clone(),
            paragraph_index: p_idx,
            sentences,
            chains,
        });
    }
    Ok(DocumentRecord { doc_id, paragraphs })
}

fn to_wire(doc: &DocumentRecord) -> DocumentWire {
    DocumentWire {
        doc_id: doc.doc_id.clone(),
        paragraphs: doc
            .paragraphs
            .iter()
            .map(|p| ParagraphWire {
                sentences: p
                    .sentences
                    .iter()
                    .map(|s| SentenceWire {
                        text: s.raw_text.clone(),
                        tokens: s
                            .tokens
                            .iter()
                            .map(|t| TokenWire {
                                t: t.text.clone(),
                                pos: t.pos.clone(),
                                lemma: Some(t.lemma.clone()),
                            })
                            .collect(),
                        tree: s.tree.to_bracketed(),
                    })
                    .collect(),
                chains: p
                    .chains
                    .iter()
                    .map(|c| ChainWire {
                        id: c.chain_id,
                        mentions: c
                            .mentions
                            .iter()
                            .map(|m| MentionWire {
                                sent: m.sentence_index,
                                start: m.token_span.0,
                                end: m.token_span.1,
                                ner: m.ner_label,
                                gendered_pronoun: m.gendered_pronoun,
                            })
                            .collect(),
                    })
                    .collect(),
            })
            .collect(),
    }
}

/// Streaming corpus reader over JSON Lines input.
pub struct CorpusReader<R: BufRead> {
    reader: R,
    line_no: usize,
    buf: String,
}

impl CorpusReader<BufReader<File>> {
    pub fn open(path: impl AsRef<Path>) -> Result<Self, CorpusError> {
        Ok(CorpusReader::new(BufReader::new(File::open(path)?)))
    }
}

impl<R: BufRead> CorpusReader<R> {
    pub fn new(reader: R) -> Self {
        CorpusReader { reader, line_no: 0, buf: String::new() }
    }

    /// Current 1-based line number (of the record last returned).
    pub fn line(&self) -> usize {
        self.line_no
    }
}

impl<R: BufRead> Iterator for CorpusReader<R> {
    type Item = Result<DocumentRecord, CorpusError>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            self.buf.clear();
            match self.reader.read_line(&mut self.buf) {
                Ok(0) => return None,
                Ok(_) => {}
                Err(e) => return Some(Err(e.into())),
            }
            self.line_no += 1;
            let line = self.buf.trim();
            if line.is_empty() {
                continue;
            }
            let wire: DocumentWire = match serde_json::from_str(line) {
                Ok(w) => w,
                Err(e) => return Some(Err(CorpusError::Json { line: self.line_no, source: e })),
            };
            return Some(build_document(wire, self.line_no));
        }
    }
}

/// Load a whole corpus into memory, failing on the first error.
pub fn load_corpus(path: impl AsRef<Path>) -> Result<Vec<DocumentRecord>, CorpusError> {
    CorpusReader::open(path)?.collect()
}

pub fn read_corpus(reader: impl Read) -> Result<Vec<DocumentRecord>, CorpusError> {
    CorpusReader::new(BufReader::new(reader)).collect()
}

/// Write documents in the JSON Lines corpus format, one per line.
pub fn write_corpus<'a>(
    mut w: impl Write,
    docs: impl IntoIterator<Item = &'a DocumentRecord>,
) -> std::io::Result<()> {
    for doc in docs {
        serde_json::to_writer(&mut w, &to_wire(doc))?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// The classification window around paragraph `i`: neighbors are absent
/// at document boundaries.
pub fn paragraph_window(
    doc: &DocumentRecord,
    i: usize,
) -> Result<(Option<&ParagraphRecord>, &ParagraphRecord, Option<&ParagraphRecord>), CorpusError> {
    let target = doc.paragraphs.get(i).ok_or_else(|| CorpusError::Validation {
        line: 0,
        doc_id: doc.doc_id.clone(),
        detail: format!("paragraph index {i} out of range ({} paragraphs)", doc.paragraphs.len()),
    })?;
    let prev = i.checked_sub(1).and_then(|j| doc.paragraphs.get(j));
    let next = doc.paragraphs.get(i + 1);
    Ok((prev, target, next))
}
