//! Feature families for the narrative classifier: production-rule
//! frequencies, verb-bigram perplexity, protagonist chain lengths,
//! category-lexicon counts, and POS tag frequencies.
//!
//! Features are first computed by name into a sorted map, then mapped to
//! dense ids through a frozen [`FeatureSpace`]. Names unknown to a frozen
//! space are dropped, so models never see ids outside their training
//! vocabulary.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{ParagraphRecord, Token};
use crate::events::extract_event_sequence;
use crate::rules::qualifying_chains;
use crate::tree::extract_production_rules;

/// Feature values keyed by namespaced name ("rule:...", "pos:...",
/// "liwc:...", "chain:1".."chain:6", "pp").
pub type NamedFeatures = BTreeMap<String, f64>;

/// Frozen mapping from feature name to dense id 0..n-1.
///
/// Ids are assigned in sorted-name order, so a space built from the same
/// names is always identical.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeatureSpace {
    ids: BTreeMap<String, u32>,
}

impl FeatureSpace {
    /// Build a space over the union of names seen in the given maps.
    pub fn from_named<'a>(maps: impl IntoIterator<Item = &'a NamedFeatures>) -> Self {
        let mut names: Vec<&str> = maps
            .into_iter()
            .flat_map(|m| m.keys().map(String::as_str))
            .collect();
        names.sort_unstable();
        names.dedup();
        FeatureSpace {
            ids: names
                .into_iter()
                .enumerate()
                .map(|(i, n)| (n.to_string(), i as u32))
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn id(&self, name: &str) -> Option<u32> {
        self.ids.get(name).copied()
    }

    /// Map named features to a sparse vector; names outside the space are
    /// dropped (frozen-space convention).
    pub fn vectorize(&self, named: &NamedFeatures) -> FeatureVector {
        let mut entries: Vec<(u32, f64)> = named
            .iter()
            .filter_map(|(name, &v)| self.ids.get(name).map(|&id| (id, v)))
            .collect();
        entries.sort_by_key(|&(id, _)| id);
        FeatureVector { entries }
    }
}

/// Sparse feature vector with strictly increasing ids and finite values.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeatureVector {
    entries: Vec<(u32, f64)>,
}

impl FeatureVector {
    pub fn from_entries(mut entries: Vec<(u32, f64)>) -> Self {
        entries.sort_by_key(|&(id, _)| id);
        FeatureVector { entries }
    }

    pub fn entries(&self) -> &[(u32, f64)] {
        &self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn max_id(&self) -> Option<u32> {
        self.entries.last().map(|&(id, _)| id)
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, f64)> + '_ {
        self.entries.iter().copied()
    }

    pub fn ids_strictly_increasing(&self) -> bool {
        self.entries.windows(2).all(|w| w[0].0 < w[1].0)
    }

    pub fn all_finite(&self) -> bool {
        self.entries.iter().all(|&(_, v)| v.is_finite())
    }
}

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("perplexity needs at least 2 events, got {0}")]
    SequenceTooShort(usize),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("lexicon line {line}: expected \"category<TAB>patterns\", got {text:?}")]
    MalformedLexicon { line: usize, text: String },
    #[error("lexicon has no categories")]
    EmptyLexicon,
}

/// Verb bigram counts over event chains from learned narratives.
///
/// The per-event successor counts never exceed the unigram count: the
/// last event of a chain has no successor.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BigramLanguageModel {
    unigrams: BTreeMap<String, u64>,
    bigrams: BTreeMap<(String, String), u64>,
}

/// Add-one smoothing toggle for bigram probabilities.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Smoothing {
    AddOne,
    None,
}

impl BigramLanguageModel {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_sequence(&mut self, events: &[String]) {
        for e in events {
            *self.unigrams.entry(e.clone()).or_insert(0) += 1;
        }
        for w in events.windows(2) {
            *self.bigrams.entry((w[0].clone(), w[1].clone())).or_insert(0) += 1;
        }
    }

    pub fn from_sequences<'a>(seqs: impl IntoIterator<Item = &'a Vec<String>>) -> Self {
        let mut lm = Self::new();
        for s in seqs {
            lm.add_sequence(s);
        }
        lm
    }

    pub fn unigram(&self, e: &str) -> u64 {
        self.unigrams.get(e).copied().unwrap_or(0)
    }

    pub fn bigram(&self, prev: &str, next: &str) -> u64 {
        self.bigrams.get(&(prev.to_string(), next.to_string())).copied().unwrap_or(0)
    }

    pub fn vocabulary_size(&self) -> usize {
        self.unigrams.len()
    }

    pub fn is_empty(&self) -> bool {
        self.unigrams.is_empty()
    }

    /// P(next | prev). Add-one smoothing divides by C(prev) + V; an empty
    /// model degenerates to probability 1. Unsmoothed unseen events give 0.
    pub fn prob(&self, prev: &str, next: &str, smoothing: Smoothing) -> f64 {
        let c_prev = self.unigram(prev) as f64;
        let c_pair = self.bigram(prev, next) as f64;
        match smoothing {
            Smoothing::AddOne => {
                let v = self.vocabulary_size().max(1) as f64;
                (c_pair + 1.0) / (c_prev + v)
            }
            Smoothing::None => {
                if c_prev == 0.0 {
                    0.0
                } else {
                    c_pair / c_prev
                }
            }
        }
    }
}

/// Perplexity of an event sequence, normalized by its length N:
/// the product of inverse bigram probabilities over the N-1 transitions,
/// taken to the 1/N power. An unsmoothed zero probability yields infinity.
pub fn perplexity(
    events: &[String],
    lm: &BigramLanguageModel,
    smoothing: Smoothing,
) -> Result<f64, FeatureError> {
    let n = events.len();
    if n < 2 {
        return Err(FeatureError::SequenceTooShort(n));
    }
    let mut neg_log_sum = 0.0;
    for w in events.windows(2) {
        let p = lm.prob(&w[0], &w[1], smoothing);
        if p <= 0.0 {
            return Ok(f64::INFINITY);
        }
        neg_log_sum -= p.ln();
    }
    Ok((neg_log_sum / n as f64).exp())
}

/// A word pattern: a literal token or a `prefix*` wildcard.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LexiconPattern {
    Literal(String),
    Prefix(String),
}

impl LexiconPattern {
    pub fn parse(raw: &str) -> Self {
        let p = raw.trim().to_lowercase();
        match p.strip_suffix('*') {
            Some(prefix) => LexiconPattern::Prefix(prefix.to_string()),
            None => LexiconPattern::Literal(p),
        }
    }

    pub fn matches(&self, word_lower: &str) -> bool {
        match self {
            LexiconPattern::Literal(w) => word_lower == w,
            LexiconPattern::Prefix(p) => word_lower.starts_with(p.as_str()),
        }
    }
}

/// Category lexicon: each category counts tokens matching any of its
/// patterns.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LexiconDictionary {
    categories: BTreeMap<String, Vec<LexiconPattern>>,
}

const DEMO_LEXICON: &str = include_str!("../resources/demo_lexicon.txt");

impl LexiconDictionary {
    /// The bundled demonstration lexicon.
    pub fn demo() -> Self {
        Self::parse(DEMO_LEXICON).expect("bundled lexicon parses")
    }

    /// Parse `category<TAB>pattern,pattern,...` lines. `#` comments and
    /// blank lines are ignored.
    pub fn parse(text: &str) -> Result<Self, FeatureError> {
        let mut categories = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (cat, patterns) = line.split_once('\t').ok_or_else(|| {
                FeatureError::MalformedLexicon { line: i + 1, text: line.to_string() }
            })?;
            let parsed: Vec<LexiconPattern> = patterns
                .split(',')
                .map(str::trim)
                .filter(|p| !p.is_empty())
                .map(LexiconPattern::parse)
                .collect();
            if parsed.is_empty() {
                return Err(FeatureError::MalformedLexicon { line: i + 1, text: line.to_string() });
            }
            categories
                .entry(cat.trim().to_string())
                .or_insert_with(Vec::new)
                .extend(parsed);
        }
        if categories.is_empty() {
            return Err(FeatureError::EmptyLexicon);
        }
        Ok(LexiconDictionary { categories })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, FeatureError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn category_count(&self) -> usize {
        self.categories.len()
    }

    pub fn categories(&self) -> impl Iterator<Item = &str> {
        self.categories.keys().map(String::as_str)
    }

    fn category_matches(&self, category: &str, word_lower: &str) -> bool {
        self.categories[category].iter().any(|p| p.matches(word_lower))
    }
}

/// Frequency of every non-lexical production rule across the paragraph.
pub fn rule_features(paragraph: &ParagraphRecord) -> NamedFeatures {
    let mut out = NamedFeatures::new();
    for sentence in &paragraph.sentences {
        for rule in extract_production_rules(&sentence.tree) {
            *out.entry(format!("rule:{rule}")).or_insert(0.0) += 1.0;
        }
    }
    out
}

/// POS tag frequencies across the paragraph.
pub fn pos_features(paragraph: &ParagraphRecord) -> NamedFeatures {
    let mut out = NamedFeatures::new();
    for sentence in &paragraph.sentences {
        for token in &sentence.tokens {
            *out.entry(format!("pos:{}", token.pos)).or_insert(0.0) += 1.0;
        }
    }
    out
}

/// Per-category counts of tokens matching any category pattern. A token
/// counts once per category however many patterns it matches; categories
/// with no hits are omitted (count 0).
pub fn lexicon_features(paragraph: &ParagraphRecord, dict: &LexiconDictionary) -> NamedFeatures {
    let mut out = NamedFeatures::new();
    for sentence in &paragraph.sentences {
        for token in &sentence.tokens {
            let lower = token.text.to_lowercase();
            for category in dict.categories() {
                if dict.category_matches(category, &lower) {
                    *out.entry(format!("liwc:{category}")).or_insert(0.0) += 1.0;
                }
            }
        }
    }
    out
}

/// How chains are matched across the paragraphs of a window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WindowChainMatch {
    /// Chains with equal ids are the same entity (document-scoped ids).
    #[default]
    ChainId,
    /// Chains whose head mention strings match exactly are merged.
    HeadString,
}

/// A classification window: the target paragraph with its optional
/// neighbors.
pub type Window<'a> = (Option<&'a ParagraphRecord>, &'a ParagraphRecord, Option<&'a ParagraphRecord>);

/// The six protagonist features: normalized lengths of the three longest
/// qualifying chains in the target paragraph, then the three longest
/// computed over the whole window. Missing chains contribute 0.
pub fn protagonist_features(window: Window<'_>, matching: WindowChainMatch) -> [f64; 6] {
    let (prev, target, next) = window;
    let mut out = [0.0; 6];

    let n_target = target.sentences.len().max(1) as f64;
    for (i, chain) in qualifying_chains(target).iter().take(3).enumerate() {
        out[i] = chain.mentions.len() as f64 / n_target;
    }

    let paragraphs: Vec<&ParagraphRecord> =
        [prev, Some(target), next].into_iter().flatten().collect();
    let window_sentences: usize = paragraphs.iter().map(|p| p.sentences.len()).sum();
    let n_window = window_sentences.max(1) as f64;

    let mut merged: BTreeMap<String, usize> = BTreeMap::new();
    for p in &paragraphs {
        for chain in qualifying_chains(p) {
            let key = match matching {
                WindowChainMatch::ChainId => format!("id:{}", chain.chain_id),
                WindowChainMatch::HeadString => format!("head:{}", chain_head_string(p, chain)),
            };
            *merged.entry(key).or_insert(0) += chain.mentions.len();
        }
    }
    let mut lengths: Vec<usize> = merged.into_values().collect();
    lengths.sort_unstable_by(|a, b| b.cmp(a));
    for (i, len) in lengths.into_iter().take(3).enumerate() {
        out[3 + i] = len as f64 / n_window;
    }
    out
}

/// Representative string of a chain: the lowercased text of the last
/// token of its first mention (the rightmost word heads English NPs).
fn chain_head_string(paragraph: &ParagraphRecord, chain: &crate::corpus::EntityChain) -> String {
    let mention = &chain.mentions[0];
    paragraph
        .sentences
        .get(mention.sentence_index)
        .and_then(|s| s.tokens.get(mention.token_span.1))
        .map(|t: &Token| t.text.to_lowercase())
        .unwrap_or_default()
}

/// All feature families of a paragraph by name. The perplexity of the
/// paragraph's own event sequence enters as feature "pp" and is omitted
/// when fewer than two events are present.
pub fn named_features(
    window: Window<'_>,
    lm: &BigramLanguageModel,
    dict: &LexiconDictionary,
) -> NamedFeatures {
    let target = window.1;
    let mut out = rule_features(target);
    out.extend(pos_features(target));
    out.extend(lexicon_features(target, dict));
    for (i, v) in protagonist_features(window, WindowChainMatch::default()).into_iter().enumerate() {
        out.insert(format!("chain:{}", i + 1), v);
    }
    let events = extract_event_sequence(target).canonical_events();
    if events.len() >= 2 {
        let pp = perplexity(&events, lm, Smoothing::AddOne).expect("length checked");
        out.insert("pp".to_string(), pp);
    }
    out
}

/// Named features mapped through a frozen space.
pub fn assemble(
    window: Window<'_>,
    lm: &BigramLanguageModel,
    dict: &LexiconDictionary,
    space: &FeatureSpace,
) -> FeatureVector {
    space.vectorize(&named_features(window, lm, dict))
}

/// Persist a feature space as a JSON name-to-id map.
pub fn write_feature_space(space: &FeatureSpace, mut w: impl Write) -> serde_json::Result<()> {
    serde_json::to_writer_pretty(&mut w, space)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{EntityChain, EntityMention, NerLabel, SentenceAnnotation};
    use crate::tree::parse_ptb;

    fn toks(words: &[(&str, &str)]) -> Vec<Token> {
        words
            .iter()
            .enumerate()
            .map(|(i, (t, pos))| Token {
                text: t.to_string(),
                pos: pos.to_string(),
                lemma: t.to_lowercase(),
                index: i,
            })
            .collect()
    }

    fn he_ran_paragraph() -> ParagraphRecord {
        ParagraphRecord {
            doc_id: "d".into(),
            paragraph_index: 0,
            sentences: vec![SentenceAnnotation {
                tokens: toks(&[("He", "PRP"), ("ran", "VBD"), (".", ".")]),
                tree: parse_ptb("(S (NP (PRP He)) (VP (VBD ran)) (. .))").unwrap(),
                raw_text: "He ran.".into(),
            }],
            chains: vec![],
        }
    }

    #[test]
    fn rule_features_count_across_sentences() {
        let mut p = he_ran_paragraph();
        p.sentences.push(p.sentences[0].clone());
        let f = rule_features(&p);
        assert_eq!(f["rule:S -> NP VP ."], 2.0);
        assert_eq!(f["rule:NP -> PRP"], 2.0);
        assert!(!f.keys().any(|k| k.contains("ran")), "lexical rules excluded");
        // sum of counts = internal node count (3 per sentence)
        assert_eq!(f.values().sum::<f64>(), 6.0);
    }

    #[test]
    fn pos_features_count_tags() {
        let f = pos_features(&he_ran_paragraph());
        assert_eq!(f["pos:PRP"], 1.0);
        assert_eq!(f["pos:VBD"], 1.0);
        assert_eq!(f["pos:."], 1.0);
    }

    #[test]
    fn perplexity_deterministic_corpus_is_one() {
        let seqs = vec![vec!["a".to_string(), "b".to_string()]; 3];
        let lm = BigramLanguageModel::from_sequences(&seqs);
        let pp = perplexity(&["a".into(), "b".into()], &lm, Smoothing::None).unwrap();
        assert_eq!(pp, 1.0);
    }

    #[test]
    fn perplexity_hand_case_sqrt_two() {
        let seqs = vec![
            vec!["a".to_string(), "b".to_string()],
            vec!["a".to_string(), "c".to_string()],
        ];
        let lm = BigramLanguageModel::from_sequences(&seqs);
        // P(b|a) = 1/2 over N = 2 events: PP = 2^(1/2)
        let pp = perplexity(&["a".into(), "b".into()], &lm, Smoothing::None).unwrap();
        assert!((pp - 2.0f64.sqrt()).abs() < 1e-12, "pp = {pp}");
    }

    #[test]
    fn perplexity_smoothed_matches_direct_formula() {
        let seqs = vec![
            vec!["a".to_string(), "b".to_string(), "c".to_string()],
            vec!["a".to_string(), "c".to_string()],
        ];
        let lm = BigramLanguageModel::from_sequences(&seqs);
        let query = vec!["c".to_string(), "a".to_string(), "b".to_string()];
        let pp = perplexity(&query, &lm, Smoothing::AddOne).unwrap();
        // direct evaluation: V = 3, P(a|c) = (0+1)/(2+3), P(b|a) = (1+1)/(2+3)
        let expected = ((1.0f64 / (0.2f64)).ln() + (1.0 / 0.4f64).ln()) / 3.0;
        assert!((pp - expected.exp()).abs() < 1e-12);
        assert!(pp >= 1.0);
    }

    #[test]
    fn perplexity_rejects_short_sequences_and_handles_empty_model() {
        let lm = BigramLanguageModel::new();
        assert!(matches!(
            perplexity(&["a".into()], &lm, Smoothing::AddOne),
            Err(FeatureError::SequenceTooShort(1))
        ));
        // empty model: pure smoothing, P = 1 everywhere
        let pp = perplexity(&["a".into(), "b".into()], &lm, Smoothing::AddOne).unwrap();
        assert_eq!(pp, 1.0);
        // unsmoothed unseen transition is infinite
        let pp = perplexity(&["a".into(), "b".into()], &lm, Smoothing::None).unwrap();
        assert!(pp.is_infinite());
    }

    #[test]
    fn lexicon_prefix_matching() {
        let dict = LexiconDictionary::parse("posemo\thapp*\nmulti\thapp*, sad\n").unwrap();
        let mut p = he_ran_paragraph();
        p.sentences[0].tokens = toks(&[("happy", "JJ"), ("happily", "RB"), ("sad", "JJ")]);
        p.sentences[0].tree = parse_ptb("(ADJP (JJ happy) (RB happily) (JJ sad))").unwrap();
        let f = lexicon_features(&p, &dict);
        assert_eq!(f["liwc:posemo"], 2.0);
        // a token matching patterns in two categories increments both
        assert_eq!(f["liwc:multi"], 3.0);
    }

    #[test]
    fn lexicon_requires_categories() {
        assert!(matches!(LexiconDictionary::parse("# nothing\n"), Err(FeatureError::EmptyLexicon)));
        assert!(LexiconDictionary::demo().category_count() >= 1);
    }

    fn chain_with(id: u64, sents: &[usize]) -> EntityChain {
        EntityChain {
            chain_id: id,
            mentions: sents
                .iter()
                .map(|&s| EntityMention {
                    sentence_index: s,
                    token_span: (0, 0),
                    ner_label: NerLabel::Person,
                    gendered_pronoun: false,
                })
                .collect(),
        }
    }

    fn para_with_chains(n_sentences: usize, chains: Vec<EntityChain>) -> ParagraphRecord {
        let s = SentenceAnnotation {
            tokens: toks(&[("He", "PRP"), ("ran", "VBD"), (".", ".")]),
            tree: parse_ptb("(S (NP (PRP He)) (VP (VBD ran)) (. .))").unwrap(),
            raw_text: "He ran.".into(),
        };
        ParagraphRecord {
            doc_id: "d".into(),
            paragraph_index: 0,
            sentences: vec![s; n_sentences],
            chains,
        }
    }

    #[test]
    fn protagonist_features_target_and_padding() {
        let target = para_with_chains(
            5,
            vec![
                chain_with(0, &[0, 1, 2, 3]),
                chain_with(1, &[0, 1]),
                chain_with(2, &[4]),
            ],
        );
        let f = protagonist_features((None, &target, None), WindowChainMatch::ChainId);
        assert_eq!(&f[..3], &[0.8, 0.4, 0.2]);

        let single = para_with_chains(5, vec![chain_with(0, &[0, 1])]);
        let f = protagonist_features((None, &single, None), WindowChainMatch::ChainId);
        assert_eq!(&f[..3], &[0.4, 0.0, 0.0]);
        // windows: only the target, same chain set
        assert_eq!(&f[3..], &[0.4, 0.0, 0.0]);
    }

    #[test]
    fn protagonist_window_merges_by_chain_id() {
        let prev = para_with_chains(5, vec![chain_with(7, &[0, 1])]);
        let target = para_with_chains(5, vec![chain_with(7, &[0, 1, 2])]);
        let next = para_with_chains(5, vec![chain_with(7, &[4])]);
        let f = protagonist_features((Some(&prev), &target, Some(&next)), WindowChainMatch::ChainId);
        // 6 mentions over 15 window sentences
        assert!((f[3] - 0.4).abs() < 1e-12);
        assert_eq!(f[0], 3.0 / 5.0);
    }

    #[test]
    fn assemble_omits_pp_without_events_and_is_deterministic() {
        let dict = LexiconDictionary::demo();
        let lm = BigramLanguageModel::new();
        // single sentence -> single event -> no pp
        let p = he_ran_paragraph();
        let named = named_features((None, &p, None), &lm, &dict);
        assert!(!named.contains_key("pp"));

        let mut two = p.clone();
        two.sentences.push(two.sentences[0].clone());
        let named2 = named_features((None, &two, None), &lm, &dict);
        assert!(named2.contains_key("pp"));

        let space = FeatureSpace::from_named([&named2]);
        let v1 = assemble((None, &two, None), &lm, &dict, &space);
        let v2 = assemble((None, &two, None), &lm, &dict, &space);
        assert_eq!(v1, v2);
        assert!(v1.ids_strictly_increasing());
        assert!(v1.all_finite());
    }

    #[test]
    fn frozen_space_drops_unknown_names() {
        let mut named = NamedFeatures::new();
        named.insert("pos:VBD".into(), 2.0);
        let space = FeatureSpace::from_named([&named]);

        let mut wider = named.clone();
        wider.insert("pos:ZZZ".into(), 5.0);
        let v = space.vectorize(&wider);
        assert_eq!(v.entries().len(), 1);
        assert_eq!(v.entries()[0], (0, 2.0));
    }
}
