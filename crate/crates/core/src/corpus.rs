//! Corpus data model and the JSONL ingestion format.
//!
//! One document per line:
//!
//! ```text
//! {"doc_id": "d1", "chunks": [[[{"raw": "Berlin", "triplets": [{"subject": "Berlin", "verb": "is capital of", "object": "Germany"}]}]]]}
//! ```
//!
//! `chunks` nests chunk → sentence → token. Locations are derived from that
//! nesting: `chunk_index` is the chunk ordinal and `sentence_index` the running
//! sentence ordinal within the document, so the first phrase sits at (0, 0).

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Sentence = Vec<NounPhraseToken>;
pub type Chunk = Vec<Sentence>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TripletSource {
    #[default]
    Ingested,
    Structural,
    Pattern,
    PassiveInverse,
}

impl TripletSource {
    fn is_ingested(&self) -> bool {
        *self == TripletSource::Ingested
    }
}

/// Normalized (subject, verb, object) tuple; the identity of a triplet.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TripletKey {
    pub subject: String,
    pub verb: String,
    pub object: String,
}

impl TripletKey {
    pub fn new(subject: impl Into<String>, verb: impl Into<String>, object: impl Into<String>) -> Self {
        TripletKey {
            subject: subject.into(),
            verb: verb.into(),
            object: object.into(),
        }
    }
}

impl fmt::Display for TripletKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.subject, self.verb, self.object)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RelationTriplet {
    pub subject: String,
    pub verb: String,
    pub object: String,
    pub source: TripletSource,
    pub doc_id: String,
}

impl RelationTriplet {
    /// Normalizes all three slots. Fails if subject or verb normalizes to
    /// nothing.
    pub fn new(
        subject: &str,
        verb: &str,
        object: &str,
        source: TripletSource,
        doc_id: impl Into<String>,
    ) -> Result<Self> {
        let t = RelationTriplet {
            subject: normalize_phrase(subject),
            verb: normalize_phrase(verb),
            object: normalize_phrase(object),
            source,
            doc_id: doc_id.into(),
        };
        if t.subject.is_empty() {
            return Err(Error::InvalidArgument("triplet subject is empty".into()));
        }
        if t.verb.is_empty() {
            return Err(Error::InvalidArgument("triplet verb is empty".into()));
        }
        Ok(t)
    }

    pub fn key(&self) -> TripletKey {
        TripletKey::new(&self.subject, &self.verb, &self.object)
    }
}

/// One noun-phrase occurrence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NounPhraseToken {
    pub content: String,
    pub raw: String,
    pub doc_id: String,
    pub chunk_index: u32,
    pub sentence_index: u32,
    pub triplets: Vec<RelationTriplet>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    pub doc_id: String,
    pub chunks: Vec<Chunk>,
}

impl Document {
    /// Builds a document from raw tokens, normalizing content and assigning
    /// locations from the nesting.
    pub fn new(doc_id: impl Into<String>, chunks: Vec<Vec<Vec<RawToken>>>) -> Result<Self> {
        let doc_id = doc_id.into();
        let mut out = Vec::with_capacity(chunks.len());
        let mut sentence_index = 0u32;
        for (ci, chunk) in chunks.into_iter().enumerate() {
            let mut sentences = Vec::with_capacity(chunk.len());
            for sentence in chunk {
                let mut tokens = Vec::with_capacity(sentence.len());
                for tok in sentence {
                    tokens.push(tok.into_token(&doc_id, ci as u32, sentence_index)?);
                }
                sentences.push(tokens);
                sentence_index += 1;
            }
            out.push(sentences);
        }
        Ok(Document { doc_id, chunks: out })
    }

    /// N_d: token occurrences in the document.
    pub fn token_count(&self) -> usize {
        self.tokens().count()
    }

    /// Tokens in reading order.
    pub fn tokens(&self) -> impl Iterator<Item = &NounPhraseToken> {
        self.chunks.iter().flatten().flatten()
    }

    fn to_record(&self) -> DocumentRecord {
        DocumentRecord {
            doc_id: self.doc_id.clone(),
            chunks: self
                .chunks
                .iter()
                .map(|c| c.iter().map(|s| s.iter().map(RawToken::from_token).collect()).collect())
                .collect(),
        }
    }
}

/// Token as it appears in the ingestion format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawToken {
    pub raw: String,
    pub triplets: Vec<RawTriplet>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawTriplet {
    pub subject: String,
    pub verb: String,
    pub object: String,
    #[serde(default, skip_serializing_if = "TripletSource::is_ingested")]
    pub source: TripletSource,
}

impl RawToken {
    fn into_token(self, doc_id: &str, chunk_index: u32, sentence_index: u32) -> Result<NounPhraseToken> {
        let content = normalize_phrase(&self.raw);
        if content.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "token {:?} normalizes to an empty phrase",
                self.raw
            )));
        }
        if self.triplets.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "token {:?} has an empty triplet list",
                self.raw
            )));
        }
        let triplets = self
            .triplets
            .iter()
            .map(|t| RelationTriplet::new(&t.subject, &t.verb, &t.object, t.source, doc_id))
            .collect::<Result<Vec<_>>>()?;
        Ok(NounPhraseToken {
            content,
            raw: self.raw,
            doc_id: doc_id.to_string(),
            chunk_index,
            sentence_index,
            triplets,
        })
    }

    fn from_token(t: &NounPhraseToken) -> Self {
        RawToken {
            raw: t.raw.clone(),
            triplets: t
                .triplets
                .iter()
                .map(|r| RawTriplet {
                    subject: r.subject.clone(),
                    verb: r.verb.clone(),
                    object: r.object.clone(),
                    source: r.source,
                })
                .collect(),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DocumentRecord {
    doc_id: String,
    chunks: Vec<Vec<Vec<RawToken>>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TripletId(pub u32);

impl TripletId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// Dense bijection between distinct triplet tuples and ids `0..W`, assigned in
/// first-seen reading order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Vocabulary {
    keys: Vec<TripletKey>,
    ids: HashMap<TripletKey, TripletId>,
}

impl Vocabulary {
    pub fn insert(&mut self, key: TripletKey) -> TripletId {
        if let Some(&id) = self.ids.get(&key) {
            return id;
        }
        let id = TripletId(self.keys.len() as u32);
        self.ids.insert(key.clone(), id);
        self.keys.push(key);
        id
    }

    pub fn id(&self, key: &TripletKey) -> Option<TripletId> {
        self.ids.get(key).copied()
    }

    pub fn key(&self, id: TripletId) -> &TripletKey {
        &self.keys[id.index()]
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (TripletId, &TripletKey)> {
        self.keys.iter().enumerate().map(|(i, k)| (TripletId(i as u32), k))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct FlatToken {
    doc: usize,
    chunk: usize,
    sentence: usize,
    position: usize,
    triplet_ids: Vec<TripletId>,
}

/// Validated, immutable corpus. Tokens are addressable by a global index in
/// reading order (document order, then nesting order).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    documents: Vec<Document>,
    vocabulary: Vocabulary,
    flat: Vec<FlatToken>,
}

impl Corpus {
    pub fn new(documents: Vec<Document>) -> Result<Self> {
        if documents.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let mut seen = HashSet::new();
        for d in &documents {
            if !seen.insert(d.doc_id.as_str()) {
                return Err(Error::InvalidArgument(format!("duplicate doc_id {:?}", d.doc_id)));
            }
        }
        let mut vocabulary = Vocabulary::default();
        let mut flat = Vec::new();
        for (di, doc) in documents.iter().enumerate() {
            for (ci, chunk) in doc.chunks.iter().enumerate() {
                for (si, sentence) in chunk.iter().enumerate() {
                    for (pi, tok) in sentence.iter().enumerate() {
                        let triplet_ids = tok.triplets.iter().map(|t| vocabulary.insert(t.key())).collect();
                        flat.push(FlatToken {
                            doc: di,
                            chunk: ci,
                            sentence: si,
                            position: pi,
                            triplet_ids,
                        });
                    }
                }
            }
        }
        Ok(Corpus {
            documents,
            vocabulary,
            flat,
        })
    }

    pub fn from_jsonl_str(text: &str) -> Result<Self> {
        let mut documents = Vec::new();
        let mut seen: HashMap<String, usize> = HashMap::new();
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            let schema = |message: String| Error::Schema { line: line_no, message };
            let record: DocumentRecord = serde_json::from_str(line).map_err(|e| schema(e.to_string()))?;
            if record.doc_id.is_empty() {
                return Err(schema("doc_id is empty".into()));
            }
            if let Some(prev) = seen.insert(record.doc_id.clone(), line_no) {
                return Err(schema(format!(
                    "duplicate doc_id {:?} (first seen on line {prev})",
                    record.doc_id
                )));
            }
            let doc = Document::new(record.doc_id, record.chunks).map_err(|e| schema(e.to_string()))?;
            if doc.token_count() == 0 {
                return Err(schema("document has no tokens".into()));
            }
            documents.push(doc);
        }
        Corpus::new(documents)
    }

    /// Canonical JSONL: one document per line, fixed field order.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for d in &self.documents {
            out.push_str(&serde_json::to_string(&d.to_record()).expect("records serialize"));
            out.push('\n');
        }
        out
    }

    pub fn documents(&self) -> &[Document] {
        &self.documents
    }

    pub fn vocabulary(&self) -> &Vocabulary {
        &self.vocabulary
    }

    /// Total token count, Σ N_d.
    pub fn token_count(&self) -> usize {
        self.flat.len()
    }

    pub fn token(&self, index: usize) -> &NounPhraseToken {
        let f = &self.flat[index];
        &self.documents[f.doc].chunks[f.chunk][f.sentence][f.position]
    }

    pub fn token_triplet_ids(&self, index: usize) -> &[TripletId] {
        &self.flat[index].triplet_ids
    }

    /// Index of the document owning token `index`.
    pub fn token_document(&self, index: usize) -> usize {
        self.flat[index].doc
    }

    pub fn document_index(&self, doc_id: &str) -> Option<usize> {
        self.documents.iter().position(|d| d.doc_id == doc_id)
    }

    /// All distinct triplet tuples, in vocabulary order.
    pub fn triplet_keys(&self) -> impl Iterator<Item = &TripletKey> {
        self.vocabulary.iter().map(|(_, k)| k)
    }

    /// Restricts every token to the triplets accepted by `keep`. Tokens left
    /// without triplets are dropped, as are documents left without tokens.
    /// Locations are preserved.
    pub fn retain_triplets(&self, keep: impl Fn(&TripletKey) -> bool) -> Result<Corpus> {
        let mut documents = Vec::new();
        for doc in &self.documents {
            let chunks: Vec<Chunk> = doc
                .chunks
                .iter()
                .map(|c| {
                    c.iter()
                        .map(|s| {
                            s.iter()
                                .filter_map(|t| {
                                    let triplets: Vec<_> =
                                        t.triplets.iter().filter(|r| keep(&r.key())).cloned().collect();
                                    (!triplets.is_empty()).then(|| NounPhraseToken { triplets, ..t.clone() })
                                })
                                .collect()
                        })
                        .collect()
                })
                .collect();
            let d = Document {
                doc_id: doc.doc_id.clone(),
                chunks,
            };
            if d.token_count() > 0 {
                documents.push(d);
            }
        }
        Corpus::new(documents)
    }
}

pub fn load_corpus(path: impl AsRef<Path>) -> Result<Corpus> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Corpus::from_jsonl_str(&text)
}

fn is_edge_punctuation(c: char) -> bool {
    c.is_whitespace()
        || c.is_ascii_punctuation()
        || matches!(
            c,
            '•' | '◦'
                | '▪'
                | '▫'
                | '‣'
                | '·'
                | '–'
                | '\u{2014}'
                | '‘'
                | '’'
                | '“'
                | '”'
                | '…'
                | '«'
                | '»'
                | '¿'
                | '¡'
        )
}

/// Lowercases, collapses whitespace runs to one space and strips leading and
/// trailing punctuation. Idempotent.
pub fn normalize_phrase(raw: &str) -> String {
    let lowered = raw.to_lowercase();
    let collapsed = lowered.split_whitespace().collect::<Vec<_>>().join(" ");
    collapsed.trim_matches(is_edge_punctuation).to_string()
}

/// Symmetric synonym table.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SynonymLexicon {
    pairs: HashMap<String, BTreeSet<String>>,
}

impl SynonymLexicon {
    pub fn from_pairs<I, A, B>(pairs: I) -> Self
    where
        I: IntoIterator<Item = (A, B)>,
        A: AsRef<str>,
        B: AsRef<str>,
    {
        let mut lex = SynonymLexicon::default();
        for (a, b) in pairs {
            lex.insert(a.as_ref(), b.as_ref());
        }
        lex
    }

    pub fn insert(&mut self, a: &str, b: &str) {
        let (a, b) = (normalize_phrase(a), normalize_phrase(b));
        if a.is_empty() || b.is_empty() || a == b {
            return;
        }
        self.pairs.entry(a.clone()).or_default().insert(b.clone());
        self.pairs.entry(b).or_default().insert(a);
    }

    pub fn contains(&self, a: &str, b: &str) -> bool {
        self.pairs.get(a).is_some_and(|s| s.contains(b))
    }

    pub fn synonyms(&self, phrase: &str) -> impl Iterator<Item = &str> {
        self.pairs.get(phrase).into_iter().flatten().map(String::as_str)
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Parses a JSON array of string pairs.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let pairs: Vec<(String, String)> = serde_json::from_str(text)?;
        Ok(SynonymLexicon::from_pairs(pairs))
    }
}

pub fn load_lexicon(path: impl AsRef<Path>) -> Result<SynonymLexicon> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    SynonymLexicon::from_json_str(&text)
}

/// Concatenated initials of a phrase with at least two words.
pub fn acronym_of(phrase: &str) -> Option<String> {
    let mut words = phrase.split_whitespace().peekable();
    words.peek()?;
    let initials: Vec<char> = words.filter_map(|w| w.chars().next()).collect();
    (initials.len() >= 2).then(|| initials.into_iter().collect())
}

/// Identity, lexicon membership (either direction) or the initial-letter
/// acronym rule. Inputs are expected to be normalized.
pub fn is_synonym_or_acronym(a: &str, b: &str, lexicon: Option<&SynonymLexicon>) -> bool {
    if a == b {
        return true;
    }
    if lexicon.is_some_and(|l| l.contains(a, b)) {
        return true;
    }
    acronym_of(b).is_some_and(|ac| ac == a) || acronym_of(a).is_some_and(|ac| ac == b)
}
