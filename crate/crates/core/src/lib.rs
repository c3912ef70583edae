//! Topic-hierarchy and ontology learning from relation triplets.
//!
//! Tokens are noun-phrase occurrences carrying `(subject, verb, object)`
//! triplets. A tree is grown top-down: at each node an adaptive Chinese
//! restaurant process picks the number of topics, relation-based LDA
//! refines the split, and each topic's label phrase becomes a child.

pub mod acrp;
pub mod config;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod extract;
pub mod hierarchy;
pub mod ontology;
pub mod rlda;
pub mod rng;

pub use config::CorpusConfig;
pub use corpus::{load_corpus, Corpus, Document, NounPhraseToken, RelationTriplet, TripletKey};
pub use error::{Error, Result};
pub use hierarchy::{build_tree, topic_paths, TopicNode, TopicTree};
pub use ontology::{link_relations, Ontology};
