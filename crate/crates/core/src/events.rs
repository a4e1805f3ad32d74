//! Temporal event knowledge from narrative paragraphs.
//!
//! A paragraph's plot is the chain of main verbs, one per clause, in
//! textual order. Because narrative text presents events in the order
//! they happened, co-occurrence statistics over these chains carry
//! "before/after" knowledge. Event pairs are scored by Causal Potential:
//! pointwise mutual information plus the log-ratio of ordered occurrence
//! counts, computed per gap distance d in {1,2,3} (d-1 intervening
//! events) and combined as sum over d of cp_d / d. Longer chains are
//! scored by averaging the pair scores of all their in-window pairs.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{ParaId, ParagraphRecord, SentenceAnnotation, Token};
use crate::rules::{head_verb, unwrap_root};
use crate::tree::ParseTree;

/// POS tags a main event may carry: base verb forms and the past tense.
const EVENT_POS: [&str; 4] = ["VB", "VBP", "VBZ", "VBD"];

/// One event: lemmatized verb, optionally fused with its particle.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EventToken {
    pub lemma: String,
    pub particle: Option<String>,
}

impl EventToken {
    pub fn new(lemma: impl Into<String>) -> Self {
        EventToken { lemma: lemma.into(), particle: None }
    }

    pub fn with_particle(lemma: impl Into<String>, particle: impl Into<String>) -> Self {
        EventToken { lemma: lemma.into(), particle: Some(particle.into()) }
    }

    /// Canonical rendering: `lemma` or `lemma_particle`.
    pub fn canonical(&self) -> String {
        match &self.particle {
            Some(p) => format!("{}_{}", self.lemma, p),
            None => self.lemma.clone(),
        }
    }
}

impl fmt::Display for EventToken {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.canonical())
    }
}

/// The main-event chain of one paragraph, in textual order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventSequence {
    pub paragraph_id: ParaId,
    pub events: Vec<EventToken>,
}

impl EventSequence {
    pub fn canonical_events(&self) -> Vec<String> {
        self.events.iter().map(EventToken::canonical).collect()
    }
}

/// Extract the main-event sequence of a paragraph.
///
/// Per sentence the clause under a possible ROOT wrapper is inspected:
/// the head verb of its first direct VP is the main event. A clause with
/// no direct VP but with S conjuncts (coordinated clauses) contributes
/// the main event of each conjunct in order. Heads are kept only when
/// tagged VB, VBP, VBZ or VBD; a PRT particle under the same VP is fused
/// into the event.
pub fn extract_event_sequence(paragraph: &ParagraphRecord) -> EventSequence {
    let mut events = Vec::new();
    for sentence in &paragraph.sentences {
        sentence_events(sentence, &mut events);
    }
    EventSequence { paragraph_id: paragraph.id(), events }
}

fn sentence_events(sentence: &SentenceAnnotation, out: &mut Vec<EventToken>) {
    let clause = unwrap_root(&sentence.tree);
    clause_events(clause, 0, &sentence.tokens, out);
}

fn clause_events(clause: &ParseTree, leaf_start: usize, tokens: &[Token], out: &mut Vec<EventToken>) {
    if clause.label() == "VP" {
        vp_event(clause, leaf_start, tokens, out);
        return;
    }

    let mut offset = leaf_start;
    for child in clause.children() {
        if child.label() == "VP" {
            vp_event(child, offset, tokens, out);
            return;
        }
        offset += child.leaf_count();
    }

    // no direct VP: a coordinated clause contributes per conjunct
    let mut offset = leaf_start;
    for child in clause.children() {
        if child.label() == "S" {
            clause_events(child, offset, tokens, out);
        }
        offset += child.leaf_count();
    }
}

fn vp_event(vp: &ParseTree, vp_leaf_start: usize, tokens: &[Token], out: &mut Vec<EventToken>) {
    let (pos, _, head_offset) = match head_verb(vp) {
        Some(h) => h,
        None => return,
    };
    if !EVENT_POS.contains(&pos) {
        return;
    }
    let head_token = match tokens.get(vp_leaf_start + head_offset) {
        Some(t) => t,
        None => return,
    };
    let particle = particle_token(vp, vp_leaf_start, tokens).map(|t| t.lemma.to_lowercase());
    out.push(EventToken {
        lemma: head_token.lemma.to_lowercase(),
        particle,
    });
}

fn particle_token<'a>(vp: &ParseTree, vp_leaf_start: usize, tokens: &'a [Token]) -> Option<&'a Token> {
    let mut offset = vp_leaf_start;
    for child in vp.children() {
        if child.label() == "PRT" && child.leaf_count() > 0 {
            return tokens.get(offset);
        }
        offset += child.leaf_count();
    }
    None
}

/// Unigram and order-sensitive co-occurrence counts over event chains,
/// bucketed by gap distance d in {1,2,3}.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EventCountTable {
    unigrams: BTreeMap<String, u64>,
    unigram_total: u64,
    pair_counts: [BTreeMap<(String, String), u64>; 3],
    pair_totals: [u64; 3],
}

impl EventCountTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_sequences<'a>(seqs: impl IntoIterator<Item = &'a EventSequence>) -> Self {
        let mut table = Self::new();
        for seq in seqs {
            table.add_events(&seq.canonical_events());
        }
        table
    }

    /// Count one event chain: every position feeds the unigrams, every
    /// position pair (i, i+d) with d in {1,2,3} feeds bucket d.
    pub fn add_events(&mut self, events: &[String]) {
        for e in events {
            *self.unigrams.entry(e.clone()).or_insert(0) += 1;
            self.unigram_total += 1;
        }
        for d in 1..=3usize {
            for i in 0..events.len().saturating_sub(d) {
                let key = (events[i].clone(), events[i + d].clone());
                *self.pair_counts[d - 1].entry(key).or_insert(0) += 1;
                self.pair_totals[d - 1] += 1;
            }
        }
    }

    /// Componentwise addition, so that counting a corpus in parts equals
    /// counting it whole.
    pub fn merge(&mut self, other: &EventCountTable) {
        for (e, n) in &other.unigrams {
            *self.unigrams.entry(e.clone()).or_insert(0) += n;
        }
        self.unigram_total += other.unigram_total;
        for d in 0..3 {
            for (pair, n) in &other.pair_counts[d] {
                *self.pair_counts[d].entry(pair.clone()).or_insert(0) += n;
            }
            self.pair_totals[d] += other.pair_totals[d];
        }
    }

    pub fn unigram(&self, event: &str) -> u64 {
        self.unigrams.get(event).copied().unwrap_or(0)
    }

    pub fn unigram_total(&self) -> u64 {
        self.unigram_total
    }

    /// Events in the vocabulary, sorted.
    pub fn vocabulary(&self) -> impl Iterator<Item = &str> {
        self.unigrams.keys().map(String::as_str)
    }

    pub fn vocabulary_size(&self) -> usize {
        self.unigrams.len()
    }

    /// Ordered count of `first` occurring d positions before `second`.
    pub fn ordered_count(&self, first: &str, second: &str, d: usize) -> u64 {
        assert!((1..=3).contains(&d), "distance bucket must be 1..=3");
        self.pair_counts[d - 1]
            .get(&(first.to_string(), second.to_string()))
            .copied()
            .unwrap_or(0)
    }

    /// Order-insensitive co-occurrence at distance d.
    pub fn co_count(&self, a: &str, b: &str, d: usize) -> u64 {
        self.ordered_count(a, b, d) + self.ordered_count(b, a, d)
    }

    pub fn bucket_total(&self, d: usize) -> u64 {
        assert!((1..=3).contains(&d), "distance bucket must be 1..=3");
        self.pair_totals[d - 1]
    }

    /// Ordered pairs with consecutive (d = 1) support: the candidate
    /// event pairs.
    pub fn consecutive_pairs(&self) -> impl Iterator<Item = (&str, &str, u64)> {
        self.pair_counts[0]
            .iter()
            .map(|((a, b), n)| (a.as_str(), b.as_str(), *n))
    }

    pub fn is_empty(&self) -> bool {
        self.unigram_total == 0
    }

    pub fn to_json(&self, mut w: impl Write) -> serde_json::Result<()> {
        let pairs = (0..3usize)
            .flat_map(|d| {
                self.pair_counts[d]
                    .iter()
                    .map(move |((a, b), n)| PairWire { d: d + 1, a: a.clone(), b: b.clone(), n: *n })
            })
            .collect();
        serde_json::to_writer(&mut w, &TableWire { unigrams: self.unigrams.clone(), pairs })
    }

    pub fn from_json(r: impl Read) -> serde_json::Result<Self> {
        let wire: TableWire = serde_json::from_reader(r)?;
        let mut table = EventCountTable {
            unigram_total: wire.unigrams.values().sum(),
            unigrams: wire.unigrams,
            ..Default::default()
        };
        for p in wire.pairs {
            let d = p.d.clamp(1, 3);
            *table.pair_counts[d - 1].entry((p.a, p.b)).or_insert(0) += p.n;
            table.pair_totals[d - 1] += p.n;
        }
        Ok(table)
    }
}

#[derive(Serialize, Deserialize)]
struct TableWire {
    unigrams: BTreeMap<String, u64>,
    pairs: Vec<PairWire>,
}

#[derive(Serialize, Deserialize)]
struct PairWire {
    d: usize,
    a: String,
    b: String,
    n: u64,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ScoreError {
    #[error("pmi undefined for ({a}, {b}) at d={d}: zero co-occurrence or unigram count")]
    UndefinedPmi { a: String, b: String, d: usize },
    #[error("cp undefined for ({a}, {b}) at d={d}: no forward-order occurrences")]
    NoForwardSupport { a: String, b: String, d: usize },
    #[error("pair ({a}, {b}) never occurs consecutively; not a candidate")]
    NotAPairCandidate { a: String, b: String },
    #[error("chain of length {0} is not scorable (expected 2..=5)")]
    BadChainLength(usize),
    #[error("chain pair ({a}, {b}) lacks consecutive support")]
    ChainGap { a: String, b: String },
}

/// Pointwise mutual information of two events at distance d, natural log.
///
/// The joint probability is order-insensitive: both ordered counts are
/// summed and normalized by all ordered bucket-d co-occurrences. The
/// marginals are bucket-independent unigram probabilities.
pub fn pmi(table: &EventCountTable, a: &str, b: &str, d: usize) -> Result<f64, ScoreError> {
    let co = table.co_count(a, b, d);
    let ca = table.unigram(a);
    let cb = table.unigram(b);
    if co == 0 || ca == 0 || cb == 0 || table.bucket_total(d) == 0 {
        return Err(ScoreError::UndefinedPmi { a: a.into(), b: b.into(), d });
    }
    let p_joint = co as f64 / table.bucket_total(d) as f64;
    let p_a = ca as f64 / table.unigram_total() as f64;
    let p_b = cb as f64 / table.unigram_total() as f64;
    Ok((p_joint / (p_a * p_b)).ln())
}

/// One distance-bucket CP component.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CpComponent {
    pub value: f64,
    /// True when the reverse order was unseen and both ordered counts in
    /// the ratio were add-one smoothed.
    pub smoothed: bool,
}

/// Causal potential of an ordered pair at distance d: pmi plus the log
/// ratio of forward to reverse ordered counts. A zero reverse count is
/// add-one smoothed on both sides of the ratio; a zero forward count is
/// undefined.
pub fn cp_d(table: &EventCountTable, a: &str, b: &str, d: usize) -> Result<CpComponent, ScoreError> {
    let fwd = table.ordered_count(a, b, d);
    if fwd == 0 {
        return Err(ScoreError::NoForwardSupport { a: a.into(), b: b.into(), d });
    }
    let rev = table.ordered_count(b, a, d);
    let base = pmi(table, a, b, d)?;
    let (ratio, smoothed) = if rev == 0 {
        (((fwd + 1) as f64) / ((rev + 1) as f64), true)
    } else {
        (fwd as f64 / rev as f64, false)
    };
    Ok(CpComponent { value: base + ratio.ln(), smoothed })
}

/// An event pair scored by distance-weighted causal potential.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredPair {
    pub first: String,
    pub second: String,
    /// Sum over d of cp_d / d; undefined components contribute 0.
    pub cp: f64,
    /// Per-distance components, index d-1; None when undefined.
    pub components: [Option<CpComponent>; 3],
    /// Forward-order counts per distance, index d-1.
    pub support: [u64; 3],
}

impl ScoredPair {
    /// Consecutive-order support, the candidacy requirement.
    pub fn consecutive_support(&self) -> u64 {
        self.support[0]
    }
}

/// Score a candidate pair: the pair must have occurred consecutively in
/// forward order at least once.
pub fn weighted_cp(table: &EventCountTable, a: &str, b: &str) -> Result<ScoredPair, ScoreError> {
    if table.ordered_count(a, b, 1) == 0 {
        return Err(ScoreError::NotAPairCandidate { a: a.into(), b: b.into() });
    }
    let mut components = [None; 3];
    let mut support = [0u64; 3];
    let mut cp = 0.0;
    for d in 1..=3usize {
        support[d - 1] = table.ordered_count(a, b, d);
        if let Ok(component) = cp_d(table, a, b, d) {
            cp += component.value / d as f64;
            components[d - 1] = Some(component);
        }
    }
    Ok(ScoredPair { first: a.into(), second: b.into(), cp, components, support })
}

/// Score an event chain of length n: all pairs within distance 3 are
/// scored by weighted CP, discounted by their gap, summed, and divided
/// by n - 1. Every adjacent pair must have consecutive support; pairs at
/// larger gaps without support contribute 0.
pub fn chain_score(table: &EventCountTable, events: &[String]) -> Result<f64, ScoreError> {
    let n = events.len();
    if !(2..=5).contains(&n) {
        return Err(ScoreError::BadChainLength(n));
    }
    for w in events.windows(2) {
        if table.ordered_count(&w[0], &w[1], 1) == 0 {
            return Err(ScoreError::ChainGap { a: w[0].clone(), b: w[1].clone() });
        }
    }
    let mut sum = 0.0;
    for d in 1..=3usize {
        for j in 0..n.saturating_sub(d) {
            if let Ok(pair) = weighted_cp(table, &events[j], &events[j + d]) {
                sum += pair.cp / d as f64;
            }
        }
    }
    Ok(sum / (n - 1) as f64)
}

/// All candidate pairs with CP at or above the cutoff, ordered by CP
/// descending, then consecutive support descending, then lexicographic.
pub fn rank_pairs(table: &EventCountTable, min_cp: f64) -> Vec<ScoredPair> {
    let mut pairs: Vec<ScoredPair> = table
        .consecutive_pairs()
        .map(|(a, b, _)| weighted_cp(table, a, b).expect("consecutive pairs are candidates"))
        .filter(|p| p.cp >= min_cp)
        .collect();
    pairs.sort_by(|x, y| {
        y.cp
            .total_cmp(&x.cp)
            .then(y.support[0].cmp(&x.support[0]))
            .then_with(|| (&x.first, &x.second).cmp(&(&y.first, &y.second)))
    });
    pairs
}

/// An event chain of 3-5 events scored as a whole.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredChain {
    pub events: Vec<String>,
    pub score: f64,
    /// Number of times the chain occurred as a contiguous segment.
    pub support: u64,
}

impl ScoredChain {
    pub fn rendered(&self) -> String {
        self.events.join(">")
    }
}

/// Enumerate every contiguous 3-5 event segment of the sequences, dedupe,
/// score, and return the top `max_out` chains ordered by score descending
/// with the pair tie-break rule.
pub fn rank_chains(
    table: &EventCountTable,
    seqs: &[EventSequence],
    max_out: usize,
) -> Vec<ScoredChain> {
    let mut occurrences: BTreeMap<Vec<String>, u64> = BTreeMap::new();
    for seq in seqs {
        let events = seq.canonical_events();
        for len in 3..=5usize {
            for window in events.windows(len) {
                *occurrences.entry(window.to_vec()).or_insert(0) += 1;
            }
        }
    }
    let mut chains: Vec<ScoredChain> = occurrences
        .into_iter()
        .filter_map(|(events, support)| {
            chain_score(table, &events)
                .ok()
                .map(|score| ScoredChain { events, score, support })
        })
        .collect();
    chains.sort_by(|x, y| {
        y.score
            .total_cmp(&x.score)
            .then(y.support.cmp(&x.support))
            .then_with(|| x.events.cmp(&y.events))
    });
    chains.truncate(max_out);
    chains
}

/// PMI with co-occurrence aggregated over all distance buckets, as used
/// for cloze candidate scoring. None when the pair or either unigram is
/// unseen.
pub fn pmi_aggregated(table: &EventCountTable, a: &str, b: &str) -> Option<f64> {
    let co: u64 = (1..=3).map(|d| table.co_count(a, b, d)).sum();
    let total: u64 = (1..=3).map(|d| table.bucket_total(d)).sum();
    let ca = table.unigram(a);
    let cb = table.unigram(b);
    if co == 0 || ca == 0 || cb == 0 || total == 0 {
        return None;
    }
    let p_joint = co as f64 / total as f64;
    let p_a = ca as f64 / table.unigram_total() as f64;
    let p_b = cb as f64 / table.unigram_total() as f64;
    Some((p_joint / (p_a * p_b)).ln())
}

/// Distance-weighted PMI: sum over defined buckets of pmi_d / d. The
/// alternative cloze scoring mode.
pub fn pmi_distance_weighted(table: &EventCountTable, a: &str, b: &str) -> Option<f64> {
    let mut sum = 0.0;
    let mut any = false;
    for d in 1..=3usize {
        if let Ok(v) = pmi(table, a, b, d) {
            sum += v / d as f64;
            any = true;
        }
    }
    any.then_some(sum)
}
