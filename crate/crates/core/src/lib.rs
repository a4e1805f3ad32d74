//! Narrative paragraph identification and temporal event knowledge.
//!
//! The pipeline has two phases. Phase one finds narrative paragraphs in a
//! pre-annotated corpus: hard narratology rules select seed narratives,
//! a maximum-entropy classifier over grammar, protagonist, lexicon and
//! perplexity features is bootstrapped from the seeds, and the learned
//! set grows over iterations with a rising confidence threshold. Phase
//! two distills "before/after" event knowledge from the learned
//! narratives: main-event chains are extracted per paragraph, counted by
//! gap distance, and ranked by causal potential into event pairs and
//! 3-5 event chains, which also drive a multiple-choice narrative cloze
//! evaluation.

pub mod bootstrap;
pub mod cloze;
pub mod corpus;
pub mod events;
pub mod features;
pub mod maxent;
pub mod rules;
pub mod synth;
pub mod tree;

pub use corpus::{DocumentRecord, ParaId, ParagraphRecord};
pub use events::{EventCountTable, EventSequence, EventToken};
pub use features::{BigramLanguageModel, FeatureSpace, FeatureVector, LexiconDictionary};
pub use maxent::MaxEntModel;
pub use rules::{ParagraphProfile, RuleInventory};
pub use tree::{parse_ptb, ParseTree, ProductionRule};
